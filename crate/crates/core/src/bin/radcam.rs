fn main() {
    std::process::exit(radcam::cli::run(std::env::args_os()));
}

//! Reference implementations written as plainly as possible, used to check
//! the optimized library code.
#![allow(dead_code)]

use radcam::depth::{Aggregation, DepthBinSpec, DepthTarget, LossConfig, Strategy};
use radcam::geometry::{CameraIntrinsics, RigidTransform};
use radcam::tensor::{Conv2dParams, Linear, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-scale..scale))
}

pub fn random_conv(
    rng: &mut ChaCha8Rng,
    out: usize,
    inp: usize,
    k: usize,
    scale: f64,
) -> Conv2dParams {
    Conv2dParams::new(
        random_tensor(rng, &[out, inp, k, k], scale),
        random_tensor(rng, &[out], scale),
    )
    .unwrap()
}

pub fn random_linear(rng: &mut ChaCha8Rng, out: usize, inp: usize, scale: f64) -> Linear {
    Linear::new(
        random_tensor(rng, &[out, inp], scale),
        random_tensor(rng, &[out], scale),
    )
    .unwrap()
}

/// `max |a − b| / max(|a|, |b|, floor)` over all elements.
pub fn max_rel_dev(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Same-padded, stride-1 convolution by explicit zero-padded copy and six
/// nested loops.
pub fn naive_conv2d(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Tensor {
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (c_out, kh, kw) = (weights.shape()[0], weights.shape()[2], weights.shape()[3]);
    let (ph, pw) = (kh / 2, kw / 2);
    let mut padded = vec![vec![vec![0.0; w + 2 * pw]; h + 2 * ph]; c_in];
    for c in 0..c_in {
        for y in 0..h {
            for x in 0..w {
                padded[c][y + ph][x + pw] = input.get(&[c, y, x]);
            }
        }
    }
    let mut out = Tensor::zeros(vec![c_out, h, w]);
    for o in 0..c_out {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for c in 0..c_in {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            acc += weights.get(&[o, c, ky, kx]) * padded[c][y + ky][x + kx];
                        }
                    }
                }
                out.set(&[o, y, x], acc + bias.get(&[o]));
            }
        }
    }
    out
}

pub fn naive_conv(input: &Tensor, p: &Conv2dParams) -> Tensor {
    naive_conv2d(input, p.weights(), p.bias())
}

fn value_or_zero(t: &Tensor, idx: [isize; 3]) -> f64 {
    let s = t.shape();
    if idx.iter().zip(s).all(|(&i, &n)| i >= 0 && (i as usize) < n) {
        t.get(&[idx[0] as usize, idx[1] as usize, idx[2] as usize])
    } else {
        0.0
    }
}

/// Bilinear interpolation from the four surrounding lattice values, zero
/// outside the map.
pub fn naive_bilinear(map: &Tensor, u: f64, v: f64) -> Vec<f64> {
    let (x0, y0) = (u.floor(), v.floor());
    let (a, b) = (u - x0, v - y0);
    let (x0, y0) = (x0 as isize, y0 as isize);
    (0..map.shape()[0] as isize)
        .map(|c| {
            value_or_zero(map, [c, y0, x0]) * (1.0 - a) * (1.0 - b)
                + value_or_zero(map, [c, y0, x0 + 1]) * a * (1.0 - b)
                + value_or_zero(map, [c, y0 + 1, x0]) * (1.0 - a) * b
                + value_or_zero(map, [c, y0 + 1, x0 + 1]) * a * b
        })
        .collect()
}

pub fn naive_trilinear(vol: &Tensor, u: f64, v: f64, d: f64) -> f64 {
    let (x0, y0, z0) = (u.floor(), v.floor(), d.floor());
    let (a, b, g) = (u - x0, v - y0, d - z0);
    let (x0, y0, z0) = (x0 as isize, y0 as isize, z0 as isize);
    let mut acc = 0.0;
    for (dz, wz) in [(0, 1.0 - g), (1, g)] {
        for (dy, wy) in [(0, 1.0 - b), (1, b)] {
            for (dx, wx) in [(0, 1.0 - a), (1, a)] {
                acc += wz * wy * wx * value_or_zero(vol, [z0 + dz, y0 + dy, x0 + dx]);
            }
        }
    }
    acc
}

/// Voxel-by-voxel reference of the gated lift volume, `(2C·Z) x Y x X`.
#[allow(clippy::too_many_arguments)]
pub fn naive_lift(
    image: &Tensor,
    depth_probs: &Tensor,
    bins: &DepthBinSpec,
    occupancy: &Tensor,
    (x_axis, y_axis, z_axis): ((f64, f64, usize), (f64, f64, usize), (f64, f64, usize)),
    k: &CameraIntrinsics,
    ego_to_cam: &RigidTransform,
) -> Tensor {
    let c = image.shape()[0];
    let (nx, ny, nz) = (x_axis.2, y_axis.2, z_axis.2);
    let mid = |(lo, hi, n): (f64, f64, usize), i: usize| {
        lo + (hi - lo) * (2 * i + 1) as f64 / (2 * n) as f64
    };
    let r = ego_to_cam.rotation();
    let t = ego_to_cam.translation();
    let width = (bins.d_max - bins.d_min) / bins.num_bins as f64;
    let mut out = Tensor::zeros(vec![2 * c * nz, ny, nx]);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let p = [mid(x_axis, x), mid(y_axis, y), mid(z_axis, z)];
                let cam: Vec<f64> = (0..3)
                    .map(|row| r[row][0] * p[0] + r[row][1] * p[1] + r[row][2] * p[2] + t[row])
                    .collect();
                if cam[2] <= 0.0 {
                    continue;
                }
                let u = k.fx * cam[0] / cam[2] + k.cx;
                let v = k.fy * cam[1] / cam[2] + k.cy;
                let b = (cam[2] - bins.d_min) / width - 0.5;
                let feat = naive_bilinear(image, u, v);
                let prob = naive_trilinear(depth_probs, u, v, b);
                let occ = occupancy.get(&[z, y, x]);
                for ch in 0..c {
                    out.set(&[ch * nz + z, y, x], feat[ch] * prob);
                    out.set(&[(c + ch) * nz + z, y, x], feat[ch] * occ);
                }
            }
        }
    }
    out
}

/// Midpoint of the bin whose midpoint is closest to `d` (upper bin on ties).
pub fn brute_nearest_bin(spec: &DepthBinSpec, d: f64) -> usize {
    let w = (spec.d_max - spec.d_min) / spec.num_bins as f64;
    let mut best = 0;
    for l in 0..spec.num_bins {
        let m = spec.d_min + (l as f64 + 0.5) * w;
        let mb = spec.d_min + (best as f64 + 0.5) * w;
        if (d - m).abs() <= (d - mb).abs() {
            best = l;
        }
    }
    best
}

/// Per-pixel loss from first principles.
pub fn brute_pixel_loss(p: &[f64], d: f64, spec: &DepthBinSpec, l1: f64, l2: f64) -> f64 {
    let w = (spec.d_max - spec.d_min) / spec.num_bins as f64;
    let e: f64 = p
        .iter()
        .enumerate()
        .map(|(l, pl)| pl * (spec.d_min + (l as f64 + 0.5) * w))
        .sum();
    let k = brute_nearest_bin(spec, d);
    l1 * -(p[k].max(1e-12)).ln() + l2 * (e - d).abs()
}

/// Mean over targets of the min/max per-pixel loss over every map pixel
/// within the closed disk.
pub fn brute_loss(
    probs: &Tensor,
    targets: &[DepthTarget],
    spec: &DepthBinSpec,
    cfg: &LossConfig,
) -> f64 {
    let (d, h, w) = (probs.shape()[0], probs.shape()[1], probs.shape()[2]);
    if targets.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for t in targets {
        let r = if cfg.strategy == Strategy::OneToOne {
            0.0
        } else {
            t.radius
        };
        let mut losses = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let (du, dv) = (x as f64 - t.u as f64, y as f64 - t.v as f64);
                if du * du + dv * dv <= r * r {
                    let col: Vec<f64> = (0..d).map(|l| probs.get(&[l, y, x])).collect();
                    losses.push(brute_pixel_loss(
                        &col,
                        t.d_gt,
                        spec,
                        cfg.lambda1,
                        cfg.lambda2,
                    ));
                }
            }
        }
        total += match cfg.aggregation {
            Aggregation::Min => losses.iter().copied().fold(f64::INFINITY, f64::min),
            Aggregation::Max => losses.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
    }
    total / targets.len() as f64
}

/// Column-wise softmax written out directly.
pub fn naive_softmax(logits: &Tensor) -> Tensor {
    let (d, h, w) = (logits.shape()[0], logits.shape()[1], logits.shape()[2]);
    let mut out = Tensor::zeros(vec![d, h, w]);
    for y in 0..h {
        for x in 0..w {
            let m = (0..d)
                .map(|l| logits.get(&[l, y, x]))
                .fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..d).map(|l| (logits.get(&[l, y, x]) - m).exp()).sum();
            for l in 0..d {
                out.set(&[l, y, x], (logits.get(&[l, y, x]) - m).exp() / z);
            }
        }
    }
    out
}

pub mod vt {
    use super::*;
    use radcam::view_transform::{
        ego_to_radar_axes, AxisSpec, DepthDistributionMap, OccupancyGrid, VoxelGridSpec, VtCamera,
        VtParams,
    };

    pub struct VtInstance {
        pub image: Tensor,
        pub depth: DepthDistributionMap,
        pub occupancy: OccupancyGrid,
        pub grid: VoxelGridSpec,
        pub camera: VtCamera,
        pub params: VtParams,
    }

    pub fn axes(g: &VoxelGridSpec) -> ((f64, f64, usize), (f64, f64, usize), (f64, f64, usize)) {
        let a = |s: AxisSpec| (s.min, s.max, s.count);
        (a(g.x), a(g.y), a(g.z))
    }

    /// Camera 1.6 m above the ego origin, yawed slightly, looking along +y.
    pub fn camera(fx: f64, fy: f64, cx: f64, cy: f64, yaw: f64) -> VtCamera {
        let axes = ego_to_radar_axes();
        let yawed = RigidTransform::rotation_z(yaw);
        let r: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                (0..3)
                    .map(|j| {
                        (0..3)
                            .map(|k| axes.rotation()[i][k] * yawed.rotation()[k][j])
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let rot = [
            [r[0][0], r[0][1], r[0][2]],
            [r[1][0], r[1][1], r[1][2]],
            [r[2][0], r[2][1], r[2][2]],
        ];
        // camera center at ego (0.2, -0.5, 1.6): t = −R·c
        let c = [0.2, -0.5, 1.6];
        let t = [0, 1, 2].map(|i| -(rot[i][0] * c[0] + rot[i][1] * c[1] + rot[i][2] * c[2]));
        VtCamera {
            intrinsics: CameraIntrinsics::new(fx, fy, cx, cy).unwrap(),
            ego_to_camera: RigidTransform::new(rot, t).unwrap(),
        }
    }

    /// Random instance with `c` channels, a `nz x ny x nx` grid, an `h x w`
    /// image and `d` depth bins. Part of the grid lies behind the camera and
    /// part projects outside the image.
    pub fn random_instance(
        seed: u64,
        c: usize,
        (nz, ny, nx): (usize, usize, usize),
        (h, w): (usize, usize),
        d: usize,
    ) -> VtInstance {
        let mut r = rng(seed);
        let image = random_tensor(&mut r, &[c, h, w], 1.0);
        let bins = DepthBinSpec::new(0.5, 40.5, d).unwrap();
        let probs = naive_softmax(&random_tensor(&mut r, &[d, h, w], 2.0));
        let depth = DepthDistributionMap::new(probs, bins, 8).unwrap();
        let occupancy = OccupancyGrid::new(Tensor::from_fn(vec![nz, ny, nx], |_| {
            r.random_range(0.0..=1.0)
        }))
        .unwrap();
        let grid = VoxelGridSpec {
            x: AxisSpec::new(-12.0, 12.0, nx).unwrap(),
            y: AxisSpec::new(-2.0, 38.0, ny).unwrap(),
            z: AxisSpec::new(-1.0, 3.0, nz).unwrap(),
        };
        let fx = r.random_range(6.0..14.0);
        let camera = camera(
            fx,
            fx * r.random_range(0.9..1.1),
            (w as f64 - 1.0) / 2.0,
            (h as f64 - 1.0) / 2.0,
            r.random_range(-0.2..0.2),
        );
        let params = VtParams {
            occupancy_conv: random_conv(&mut r, nz, c, 1, 0.5),
            depth_conv: random_conv(&mut r, d, c, 1, 0.5),
            intrinsics_embedding: random_linear(&mut r, c, 9, 0.5),
            post_convs: [
                random_conv(&mut r, c, 2 * c * nz, 3, 0.2),
                random_conv(&mut r, c, c, 3, 0.2),
                random_conv(&mut r, c, c, 3, 0.2),
            ],
            use_extrinsics_embedding: false,
        };
        VtInstance {
            image,
            depth,
            occupancy,
            grid,
            camera,
            params,
        }
    }

    /// Reference BEV output: naive lift followed by the naive conv stack.
    pub fn naive_sample_vt(inst: &VtInstance) -> Tensor {
        let mut x = naive_lift(
            &inst.image,
            &inst.depth.probs,
            &inst.depth.bins,
            inst.occupancy.tensor(),
            axes(&inst.grid),
            &inst.camera.intrinsics,
            &inst.camera.ego_to_camera,
        );
        for conv in &inst.params.post_convs {
            x = naive_conv(&x, conv);
        }
        x
    }
}

pub mod fusion {
    use super::*;
    use radcam::fusion::{bottleneck_width, CsaFusionParams};
    use radcam::tensor::Mlp;

    pub fn random_mlp(rng: &mut ChaCha8Rng, c: usize, scale: f64) -> Mlp {
        let h = bottleneck_width(c);
        Mlp::new(vec![
            random_linear(rng, h, c, scale),
            random_linear(rng, c, h, scale),
        ])
        .unwrap()
    }

    pub fn random_csa(rng: &mut ChaCha8Rng, c: usize, scale: f64) -> CsaFusionParams {
        CsaFusionParams {
            input_conv: random_conv(rng, c, 2 * c, 3, scale),
            radar_mlp: random_mlp(rng, c, scale),
            image_mlp: random_mlp(rng, c, scale),
            mid_conv: random_conv(rng, c, 2 * c, 3, scale),
            radar_spatial: random_conv(rng, 1, 2, 7, scale),
            image_spatial: random_conv(rng, 1, 2, 7, scale),
            output_conv: random_conv(rng, c, 2 * c, 3, scale),
        }
    }

    /// Exchanges the first and second halves of a conv's input channels.
    pub fn swap_input_halves(p: &Conv2dParams) -> Conv2dParams {
        let w = p.weights();
        let (o, i, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
        let half = i / 2;
        let swapped = Tensor::from_fn(vec![o, i, kh, kw], |idx| {
            w.get(&[idx[0], (idx[1] + half) % i, idx[2], idx[3]])
        });
        Conv2dParams::new(swapped, p.bias().clone()).unwrap()
    }

    /// Parameters for running with radar and image inputs exchanged.
    pub fn mirrored(p: &CsaFusionParams) -> CsaFusionParams {
        let s = p.swapped();
        CsaFusionParams {
            input_conv: swap_input_halves(&s.input_conv),
            mid_conv: swap_input_halves(&s.mid_conv),
            output_conv: swap_input_halves(&s.output_conv),
            ..s
        }
    }
}

pub mod fixtures {
    use super::*;
    use radcam::tensor::write_lxlt;
    use sha2::{Digest, Sha256};
    use std::path::{Path, PathBuf};
    use std::process::{Command, Output};

    pub const CALIB: &str = r#"{
  "fx": 500.0, "fy": 500.0, "cx": 320.0, "cy": 240.0,
  "image_width": 640, "image_height": 480,
  "radar_to_camera": [1,0,0,0, 0,1,0,0.5, 0,0,1,0.2, 0,0,0,1],
  "delta_theta_deg": 1.0, "delta_phi_deg": 1.0
}"#;

    pub const STRIDE: usize = 8;
    pub const DEPTH_BINS: usize = 16;
    pub const D_MIN: f64 = 1.0;
    pub const D_MAX: f64 = 49.0;

    pub fn run_cli(args: &[&str], envs: &[(&str, &str)]) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_radcam"));
        cmd.args(args);
        for (k, v) in envs {
            cmd.env(k, v);
        }
        cmd.output().expect("spawn radcam")
    }

    pub fn sha256_file(p: &Path) -> String {
        let bytes = std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn tensor(dir: &Path, name: &str, t: &Tensor) -> String {
        write_lxlt(dir.join(name), t).unwrap();
        name.to_string()
    }

    fn conv_json(dir: &Path, name: &str, p: &Conv2dParams) -> String {
        format!(
            r#"{{"weights": "{}", "bias": "{}"}}"#,
            tensor(dir, &format!("{name}_w.lxlt"), p.weights()),
            tensor(dir, &format!("{name}_b.lxlt"), p.bias())
        )
    }

    fn linear_json(dir: &Path, name: &str, l: &Linear) -> String {
        format!(
            r#"{{"weight": "{}", "bias": "{}"}}"#,
            tensor(dir, &format!("{name}_w.lxlt"), l.weight()),
            tensor(dir, &format!("{name}_b.lxlt"), l.bias())
        )
    }

    /// Writes every input the CLI subcommands need into `dir`.
    pub fn write_inputs(dir: &Path) {
        let mut r = rng(31);
        write(dir, "calib.json", CALIB);
        write(dir, "empty.csv", "x,y,z,rcs_dbsm\n");
        let mut csv = String::from("x,y,z,rcs_dbsm\n");
        for i in 0..40 {
            let z = r.random_range(3.0..45.0);
            let x = r.random_range(-0.6..0.6) * z;
            let y = r.random_range(-0.3..0.5) * z;
            if i % 5 == 0 {
                csv.push_str(&format!("{x},{y},{z},\n"));
            } else {
                csv.push_str(&format!("{x},{y},{z},{}\n", r.random_range(-5.0..25.0)));
            }
        }
        write(dir, "points.csv", &csv);
        write(
            dir,
            "settings.json",
            &format!(r#"{{"stride": {STRIDE}, "d_min": {D_MIN}, "d_max": {D_MAX}}}"#),
        );
        let (h, w) = (480 / STRIDE, 640 / STRIDE);
        let logits = random_tensor(&mut r, &[DEPTH_BINS, h, w], 3.0);
        tensor(dir, "logits.lxlt", &logits);
        tensor(
            dir,
            "depth.lxlt",
            &naive_softmax(&logits).map(|v| v as f32 as f64),
        );

        // view transform
        let (c, nz, ny, nx) = (4, 4, 16, 16);
        tensor(
            dir,
            "image_features.lxlt",
            &random_tensor(&mut r, &[c, h, w], 1.0),
        );
        tensor(
            dir,
            "radar_bev.lxlt",
            &random_tensor(&mut r, &[c, ny, nx], 1.0),
        );
        let post = [
            conv_json(dir, "post0", &random_conv(&mut r, c, 2 * c * nz, 3, 0.2)),
            conv_json(dir, "post1", &random_conv(&mut r, c, c, 3, 0.2)),
            conv_json(dir, "post2", &random_conv(&mut r, c, c, 3, 0.2)),
        ];
        let manifest = format!(
            r#"{{
  "image_features": "image_features.lxlt",
  "radar_bev": "radar_bev.lxlt",
  "calibration": "calib.json",
  "grid": {{"x": [-16, 16, {nx}], "y": [1, 49, {ny}], "z": [-2, 2, {nz}]}},
  "bins": {{"d_min": {D_MIN}, "d_max": {D_MAX}, "num_bins": {DEPTH_BINS}}},
  "stride": {STRIDE},
  "params": {{
    "occupancy_conv": {},
    "depth_conv": {},
    "intrinsics_embedding": {},
    "post_convs": [{}, {}, {}]
  }}
}}"#,
            conv_json(dir, "occ", &random_conv(&mut r, nz, c, 1, 0.5)),
            conv_json(
                dir,
                "depthconv",
                &random_conv(&mut r, DEPTH_BINS, c, 1, 0.5)
            ),
            linear_json(dir, "emb", &random_linear(&mut r, c, 9, 0.5)),
            post[0],
            post[1],
            post[2]
        );
        write(dir, "vt.json", &manifest);

        // fusion
        tensor(
            dir,
            "bev_radar.lxlt",
            &random_tensor(&mut r, &[c, ny, nx], 1.0),
        );
        tensor(
            dir,
            "bev_image.lxlt",
            &random_tensor(&mut r, &[c, ny, nx], 1.0),
        );
        let concat = format!(
            r#"{{"conv1": {}, "conv2": {}}}"#,
            conv_json(dir, "cat1", &random_conv(&mut r, c, 2 * c, 3, 0.3)),
            conv_json(dir, "cat2", &random_conv(&mut r, c, c, 3, 0.3))
        );
        write(dir, "concat.json", &concat);
        let p = super::fusion::random_csa(&mut r, c, 0.3);
        let mlp = |name: &str, m: &radcam::tensor::Mlp| {
            format!(
                "[{}, {}]",
                linear_json(dir, &format!("{name}0"), &m.layers()[0]),
                linear_json(dir, &format!("{name}1"), &m.layers()[1])
            )
        };
        let csa = format!(
            r#"{{"input_conv": {}, "radar_mlp": {}, "image_mlp": {}, "mid_conv": {},
"radar_spatial": {}, "image_spatial": {}, "output_conv": {}}}"#,
            conv_json(dir, "in", &p.input_conv),
            mlp("rmlp", &p.radar_mlp),
            mlp("imlp", &p.image_mlp),
            conv_json(dir, "mid", &p.mid_conv),
            conv_json(dir, "rsp", &p.radar_spatial),
            conv_json(dir, "isp", &p.image_spatial),
            conv_json(dir, "out", &p.output_conv)
        );
        write(dir, "csa.json", &csa);
        write(
            dir,
            "simulate.json",
            include_str!("../../configs/simulate_default.json"),
        );
    }

    /// Arguments for every subcommand; `{in}` and `{out}` are replaced by
    /// the input and output directories. The last element lists the output
    /// files to hash.
    pub fn subcommands() -> Vec<(&'static str, Vec<&'static str>, Vec<&'static str>)> {
        vec![
            (
                "depth-targets",
                vec![
                    "depth-targets",
                    "--points",
                    "{in}/points.csv",
                    "--calib",
                    "{in}/calib.json",
                    "--config",
                    "{in}/settings.json",
                    "--out",
                    "{out}/targets.lxlt",
                ],
                vec!["targets.lxlt", "targets.lxlt.json"],
            ),
            (
                "loss",
                vec![
                    "loss",
                    "--depth",
                    "{in}/depth.lxlt",
                    "--targets",
                    "{in}/targets.lxlt",
                    "--config",
                    "{in}/settings.json",
                    "--per-target",
                    "{out}/per_target.csv",
                ],
                vec!["per_target.csv"],
            ),
            (
                "grad-check",
                vec![
                    "grad-check",
                    "--instances",
                    "5",
                    "--seed",
                    "3",
                    "--out",
                    "{out}/grad.json",
                ],
                vec!["grad.json"],
            ),
            (
                "vt",
                vec![
                    "vt",
                    "--manifest",
                    "{in}/vt.json",
                    "--out",
                    "{out}/bev.lxlt",
                    "--depth-out",
                    "{out}/depth_dist.lxlt",
                    "--occupancy-out",
                    "{out}/occ.lxlt",
                ],
                vec!["bev.lxlt", "depth_dist.lxlt", "occ.lxlt"],
            ),
            (
                "fuse-concat",
                vec![
                    "fuse",
                    "--mode",
                    "concat",
                    "--radar",
                    "{in}/bev_radar.lxlt",
                    "--image",
                    "{in}/bev_image.lxlt",
                    "--params",
                    "{in}/concat.json",
                    "--out",
                    "{out}/fused_concat.lxlt",
                ],
                vec!["fused_concat.lxlt"],
            ),
            (
                "fuse-csa",
                vec![
                    "fuse",
                    "--mode",
                    "csa",
                    "--radar",
                    "{in}/bev_radar.lxlt",
                    "--image",
                    "{in}/bev_image.lxlt",
                    "--params",
                    "{in}/csa.json",
                    "--out",
                    "{out}/fused_csa.lxlt",
                ],
                vec!["fused_csa.lxlt"],
            ),
            (
                "simulate",
                vec![
                    "simulate",
                    "--config",
                    "{in}/simulate.json",
                    "--seeds",
                    "40",
                    "--out",
                    "{out}/sim.csv",
                    "--summary",
                    "{out}/summary.json",
                    "--emit-plot-data",
                    "{out}/sim_plot.csv",
                ],
                vec!["sim.csv", "summary.json", "sim_plot.csv"],
            ),
            (
                "error-model",
                vec![
                    "error-model",
                    "--calib",
                    "{in}/calib.json",
                    "--out",
                    "{out}/error.csv",
                    "--emit-plot-data",
                    "{out}/error_plot.csv",
                ],
                vec!["error.csv", "error_plot.csv"],
            ),
        ]
    }

    pub fn expand(args: &[&str], input: &Path, output: &Path) -> Vec<String> {
        args.iter()
            .map(|a| {
                a.replace("{in}", input.to_str().unwrap())
                    .replace("{out}", output.to_str().unwrap())
            })
            .collect()
    }

    /// Runs every subcommand into `out` (targets are produced into `input`
    /// first so `loss` has something to read). Returns `(name, stdout,
    /// [(file, sha256)])` per subcommand, panicking on a nonzero exit.
    pub fn run_all(
        input: &Path,
        out: &Path,
        envs: &[(&str, &str)],
    ) -> Vec<(String, Vec<u8>, Vec<(String, String)>)> {
        let prep = expand(&subcommands()[0].1, input, input);
        let refs: Vec<&str> = prep.iter().map(String::as_str).collect();
        let o = run_cli(&refs, envs);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        subcommands()
            .into_iter()
            .map(|(name, args, files)| {
                let args = expand(&args, input, out);
                let refs: Vec<&str> = args.iter().map(String::as_str).collect();
                let o = run_cli(&refs, envs);
                assert!(
                    o.status.success(),
                    "{name}: {}",
                    String::from_utf8_lossy(&o.stderr)
                );
                let hashes = files
                    .iter()
                    .map(|f| (f.to_string(), sha256_file(&out.join(f))))
                    .collect();
                (name.to_string(), o.stdout, hashes)
            })
            .collect()
    }
}

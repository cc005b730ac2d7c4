//! Bilinear and trilinear sampling with zero padding.
//!
//! Pixel `(row i, col j)` sits at continuous coordinate `(u = j, v = i)`.
//! Each of the surrounding lattice points contributes its interpolation
//! weight times its value, and lattice points outside the tensor contribute
//! zero, so coordinates more than one pixel outside the map return zero.

use super::Tensor;

/// Lower lattice index and the fractional offset toward the next one.
#[inline]
fn split(coord: f64) -> (isize, f64) {
    let base = coord.floor();
    (base as isize, coord - base)
}

#[inline]
fn in_range(i: isize, n: usize) -> bool {
    i >= 0 && (i as usize) < n
}

/// Samples every channel of a `C x H x W` map at `(u, v)`.
pub fn bilinear_sample(map: &Tensor, u: f64, v: f64) -> Vec<f64> {
    let (c, _, _) = map.dims3().expect("bilinear_sample expects C x H x W");
    let mut out = vec![0.0; c];
    bilinear_sample_into(map, u, v, &mut out);
    out
}

/// Like [`bilinear_sample`], writing into `out` (length `C`).
pub fn bilinear_sample_into(map: &Tensor, u: f64, v: f64, out: &mut [f64]) {
    let (c, h, w) = map.dims3().expect("bilinear_sample expects C x H x W");
    assert_eq!(out.len(), c);
    out.iter_mut().for_each(|o| *o = 0.0);
    if !u.is_finite() || !v.is_finite() || u <= -1.0 || v <= -1.0 || u >= w as f64 || v >= h as f64
    {
        return;
    }
    let (x0, fx) = split(u);
    let (y0, fy) = split(v);
    let taps = [
        (y0, x0, (1.0 - fy) * (1.0 - fx)),
        (y0, x0 + 1, (1.0 - fy) * fx),
        (y0 + 1, x0, fy * (1.0 - fx)),
        (y0 + 1, x0 + 1, fy * fx),
    ];
    let data = map.data();
    let plane = h * w;
    for (y, x, weight) in taps {
        if weight == 0.0 || !in_range(y, h) || !in_range(x, w) {
            continue;
        }
        let offset = y as usize * w + x as usize;
        for (ch, o) in out.iter_mut().enumerate() {
            *o += weight * data[ch * plane + offset];
        }
    }
}

/// Samples a `D x H x W` volume at `(u, v, b)` where `b` is a continuous
/// index along the first axis.
pub fn trilinear_sample(volume: &Tensor, u: f64, v: f64, b: f64) -> f64 {
    let (d, h, w) = volume.dims3().expect("trilinear_sample expects D x H x W");
    if !u.is_finite() || !v.is_finite() || !b.is_finite() {
        return 0.0;
    }
    if u <= -1.0 || v <= -1.0 || b <= -1.0 || u >= w as f64 || v >= h as f64 || b >= d as f64 {
        return 0.0;
    }
    let (x0, fx) = split(u);
    let (y0, fy) = split(v);
    let (z0, fz) = split(b);
    let data = volume.data();
    let mut acc = 0.0;
    for (z, wz) in [(z0, 1.0 - fz), (z0 + 1, fz)] {
        if wz == 0.0 || !in_range(z, d) {
            continue;
        }
        for (y, wy) in [(y0, 1.0 - fy), (y0 + 1, fy)] {
            if wy == 0.0 || !in_range(y, h) {
                continue;
            }
            for (x, wx) in [(x0, 1.0 - fx), (x0 + 1, fx)] {
                if wx == 0.0 || !in_range(x, w) {
                    continue;
                }
                acc += wz * wy * wx * data[(z as usize * h + y as usize) * w + x as usize];
            }
        }
    }
    acc
}

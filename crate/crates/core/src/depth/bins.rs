use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform depth bins over `[d_min, d_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthBinSpec {
    pub d_min: f64,
    pub d_max: f64,
    pub num_bins: usize,
}

impl DepthBinSpec {
    pub fn new(d_min: f64, d_max: f64, num_bins: usize) -> Result<Self> {
        let spec = Self {
            d_min,
            d_max,
            num_bins,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_min < self.d_max) || !self.d_min.is_finite() || !self.d_max.is_finite() {
            return Err(Error::invalid(format!(
                "depth range must satisfy d_min < d_max (got {} .. {})",
                self.d_min, self.d_max
            )));
        }
        if self.num_bins == 0 {
            return Err(Error::invalid("number of depth bins must be positive"));
        }
        Ok(())
    }

    pub fn bin_width(&self) -> f64 {
        (self.d_max - self.d_min) / self.num_bins as f64
    }

    /// Midpoint depth of bin `l`.
    pub fn midpoint(&self, l: usize) -> f64 {
        self.d_min + (l as f64 + 0.5) * self.bin_width()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.num_bins).map(|l| self.midpoint(l)).collect()
    }

    /// Index of the bin whose midpoint is nearest to `d`; depths outside the
    /// range clamp to the first or last bin. A depth on a bin boundary is
    /// equidistant from two midpoints and goes to the upper bin.
    pub fn nearest_bin(&self, d: f64) -> usize {
        let t = ((d - self.d_min) / self.bin_width()).floor();
        if t.is_nan() || t < 0.0 {
            0
        } else {
            (t as usize).min(self.num_bins - 1)
        }
    }

    /// Continuous bin coordinate with midpoints on integers:
    /// `(d − d_min) / width − 0.5`.
    pub fn continuous_bin(&self, d: f64) -> f64 {
        (d - self.d_min) / self.bin_width() - 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_bin_examples() {
        let spec = DepthBinSpec::new(0.0, 50.0, 50).unwrap();
        assert_eq!(spec.nearest_bin(10.4), 10);
        assert_eq!(spec.midpoint(10), 10.5);
        assert_eq!(spec.nearest_bin(0.0), 0);
        assert_eq!(spec.nearest_bin(10_000.0), 49);
        assert_eq!(spec.nearest_bin(-3.0), 0);
        assert_eq!(spec.nearest_bin(49.999), 49);
    }

    #[test]
    fn nearest_bin_matches_midpoint_search() {
        let spec = DepthBinSpec::new(1.5, 61.5, 37).unwrap();
        let mids = spec.midpoints();
        for i in 0..2000 {
            let d = -5.0 + i as f64 * 0.0371;
            let brute = mids
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - d).abs().total_cmp(&(b.1 - d).abs()))
                .unwrap()
                .0;
            let got = spec.nearest_bin(d);
            // equal distance only on exact boundaries
            let gap = (mids[got] - d).abs() - (mids[brute] - d).abs();
            assert!(gap.abs() < 1e-12, "d = {d}: {got} vs {brute}");
        }
    }

    #[test]
    fn continuous_bin_lands_midpoints_on_integers() {
        let spec = DepthBinSpec::new(2.0, 10.0, 4).unwrap();
        for l in 0..4 {
            assert!((spec.continuous_bin(spec.midpoint(l)) - l as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(DepthBinSpec::new(5.0, 5.0, 4).is_err());
        assert!(DepthBinSpec::new(0.0, 5.0, 0).is_err());
    }
}

//! Dense row-major tensors and the forward primitives built on them.
//!
//! Values are held in `f64`; the on-disk `LXLT` format stores `f32`.
//! Reductions accumulate in a fixed order so results do not depend on the
//! number of worker threads.

mod lxlt;
mod nn;
mod sample;

pub use lxlt::{read_lxlt, read_lxlt_from, write_lxlt, write_lxlt_to, LXLT_MAGIC, LXLT_VERSION};
pub use nn::{
    channel_reduce, conv2d, global_pool, linear, relu, sigmoid, sigmoid_scalar, softmax,
    ChannelReduce, Conv2dParams, Linear, Mlp, Padding, Pool,
};
pub use sample::{bilinear_sample, bilinear_sample_into, trilinear_sample};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that `data` fills `shape` exactly and that
    /// every value is finite.
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} holds {} values but {} were given",
                shape,
                numel,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value {} at flat index {}",
                data[pos], pos
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.iter_mut().for_each(|v| *v = value);
        t
    }

    /// Fills the tensor by calling `f` with each multi-index in row-major order.
    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..numel {
            data.push(f(&idx));
            for axis in (0..shape.len()).rev() {
                idx[axis] += 1;
                if idx[axis] < shape[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        Self { shape, data }
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut flat = 0;
        for (i, (&ix, &dim)) in idx.iter().zip(&self.shape).enumerate() {
            assert!(
                ix < dim,
                "index {ix} out of bounds for axis {i} of size {dim}"
            );
            flat = flat * dim + ix;
        }
        flat
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let i = self.flat_index(idx);
        self.data[i] = value;
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        Ok(Self {
            shape,
            data: self.data,
        })
    }

    /// Interprets the tensor as `C x H x W` and returns the three sizes.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[c, h, w] => Ok((c, h, w)),
            other => Err(Error::shape(format!(
                "expected a rank-3 tensor, got {other:?}"
            ))),
        }
    }

    /// Contiguous slice for channel `c` of a `C x H x W` tensor.
    pub fn channel(&self, c: usize) -> &[f64] {
        let (_, h, w) = self.dims3().expect("channel() needs a rank-3 tensor");
        &self.data[c * h * w..(c + 1) * h * w]
    }

    /// Concatenates rank-3 tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        let (_, h, w) = first.dims3()?;
        let mut channels = 0;
        let mut data = Vec::new();
        for p in parts {
            let (c, ph, pw) = p.dims3()?;
            if (ph, pw) != (h, w) {
                return Err(Error::shape(format!(
                    "spatial size {ph}x{pw} does not match {h}x{w}"
                )));
            }
            channels += c;
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor {
            shape: vec![channels, h, w],
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise product of two tensors with identical shapes.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }

    /// Multiplies channel `c` of a `C x H x W` tensor by `weights[c]`.
    pub fn scale_channels(&self, weights: &[f64]) -> Result<Tensor> {
        let (c, h, w) = self.dims3()?;
        if weights.len() != c {
            return Err(Error::shape(format!(
                "{} channel weights for a {c}-channel tensor",
                weights.len()
            )));
        }
        let plane = h * w;
        let mut out = self.clone();
        for (ch, chunk) in out.data.chunks_mut(plane.max(1)).enumerate().take(c) {
            chunk.iter_mut().for_each(|v| *v *= weights[ch]);
        }
        Ok(out)
    }

    /// Multiplies every channel of a `C x H x W` tensor by a `1 x H x W` map.
    pub fn scale_spatial(&self, map: &Tensor) -> Result<Tensor> {
        let (_, h, w) = self.dims3()?;
        if map.shape() != [1, h, w] {
            return Err(Error::shape(format!(
                "spatial map {:?} does not broadcast over {:?}",
                map.shape(),
                self.shape
            )));
        }
        let plane = h * w;
        let mut out = self.clone();
        for chunk in out.data.chunks_mut(plane.max(1)) {
            chunk.iter_mut().zip(&map.data).for_each(|(v, m)| *v *= m);
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    fn same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_length_and_non_finite() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![2], vec![0.0, f64::NAN]).is_err());
        assert!(Tensor::new(vec![0, 4], vec![]).is_ok());
    }

    #[test]
    fn from_fn_is_row_major() {
        let t = Tensor::from_fn(vec![2, 3], |i| (i[0] * 10 + i[1]) as f64);
        assert_eq!(t.data(), &[0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        assert_eq!(t.get(&[1, 2]), 12.0);
    }

    #[test]
    fn concat_and_scale() {
        let a = Tensor::full(vec![1, 2, 2], 1.0);
        let b = Tensor::full(vec![2, 2, 2], 2.0);
        let c = Tensor::concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[3, 2, 2]);
        let s = c.scale_channels(&[1.0, 0.5, 0.0]).unwrap();
        assert_eq!(s.channel(1), &[1.0; 4]);
        assert_eq!(s.channel(2), &[0.0; 4]);
        let m = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let t = b.scale_spatial(&m).unwrap();
        assert_eq!(t.channel(1), &[2.0, 4.0, 6.0, 8.0]);
    }
}

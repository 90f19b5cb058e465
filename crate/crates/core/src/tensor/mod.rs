//! Dense row-major `f64` tensors and the reverse-mode gradient tape that
//! drives every trainable network in the crate.

pub mod gradcheck;
mod kernels;
mod tape;

pub use kernels::{conv_output_len, ConvSpec, PadMode};
pub use tape::{Activation, Gradients, Tape, Var};
pub(crate) use tape::binary_ce_value;

use crate::error::{shape_err, GaitError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return shape_err(format!("shape {shape:?} must have at least one dim, all >= 1"));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return shape_err(format!(
                "shape {shape:?} holds {n} values but {} were given",
                data.len()
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len().max(1)],
            data: if data.is_empty() { vec![0.0] } else { data },
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.contains(&0) {
            return shape_err(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(GaitError::Numeric(format!(
                "{what} produced a non-finite value at flat index {i}"
            ))),
            None => Ok(()),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Sub-tensor along `axis` covering `start..start + len`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.ndim() || start + len > self.shape[axis] || len == 0 {
            return shape_err(format!(
                "narrow(axis {axis}, {start}..{}) out of range for {:?}",
                start + len,
                self.shape
            ));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let dim = self.shape[axis];
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            data.extend_from_slice(&self.data[base..base + len * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Ok(Tensor { shape, data })
    }

    /// Concatenates along `axis`; all other dims must agree.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = match parts.first() {
            Some(t) => *t,
            None => return shape_err("concat of zero tensors"),
        };
        if axis >= first.ndim() {
            return shape_err(format!("concat axis {axis} out of range for {:?}", first.shape));
        }
        for p in parts {
            let ok = p.ndim() == first.ndim()
                && p.shape
                    .iter()
                    .zip(&first.shape)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !ok {
                return shape_err(format!(
                    "concat on axis {axis}: {:?} incompatible with {:?}",
                    p.shape, first.shape
                ));
            }
        }
        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let total: usize = parts.iter().map(|p| p.shape[axis]).sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape[axis] * inner;
                data.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first.shape.clone();
        shape[axis] = total;
        Ok(Tensor { shape, data })
    }
}

/// Stateless forms of the tape ops; 3-D `[C, H, W]` inputs are treated as a batch of one.
pub mod ops {
    use super::{Activation, ConvSpec, Tape, Tensor};
    use crate::error::Result;

    fn batched(t: &Tensor) -> Result<(Tensor, bool)> {
        if t.ndim() == 3 {
            let mut s = vec![1];
            s.extend_from_slice(t.shape());
            Ok((t.clone().reshape(&s)?, true))
        } else {
            Ok((t.clone(), false))
        }
    }

    fn unbatched(t: Tensor, squeeze: bool) -> Result<Tensor> {
        if squeeze {
            let s = t.shape()[1..].to_vec();
            t.reshape(&s)
        } else {
            Ok(t)
        }
    }

    pub fn conv2d(input: &Tensor, spec: ConvSpec, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let (x, squeeze) = batched(input)?;
        let mut tape = Tape::new();
        let (x, w, b) = (
            tape.constant(x),
            tape.constant(weights.clone()),
            tape.constant(bias.clone()),
        );
        let y = tape.conv2d(x, w, b, spec)?;
        unbatched(tape.value(y).clone(), squeeze)
    }

    pub fn maxpool2d(input: &Tensor, pool_h: usize, pool_w: usize, stride: usize) -> Result<Tensor> {
        let (x, squeeze) = batched(input)?;
        let mut tape = Tape::new();
        let x = tape.constant(x);
        let y = tape.maxpool2d(x, pool_h, pool_w, stride)?;
        unbatched(tape.value(y).clone(), squeeze)
    }

    pub fn transposed_conv_time(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let (x, squeeze) = batched(input)?;
        let mut tape = Tape::new();
        let (x, w, b) = (
            tape.constant(x),
            tape.constant(weights.clone()),
            tape.constant(bias.clone()),
        );
        let y = tape.upconv_time(x, w, b)?;
        unbatched(tape.value(y).clone(), squeeze)
    }

    /// `input [N] · w [N, M] + b [M]`; a 2-D input is a batch of rows.
    pub fn affine(input: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
        let squeeze = input.ndim() == 1;
        let x = if squeeze {
            input.clone().reshape(&[1, input.len()])?
        } else {
            input.clone()
        };
        let mut tape = Tape::new();
        let (x, w, b) = (tape.constant(x), tape.constant(w.clone()), tape.constant(b.clone()));
        let y = tape.affine(x, w, b)?;
        let out = tape.value(y).clone();
        if squeeze {
            let m = out.len();
            out.reshape(&[m])
        } else {
            Ok(out)
        }
    }

    pub fn activation(kind: Activation, x: &Tensor) -> Tensor {
        x.map(|v| kind.apply(v))
    }

    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        Tensor::concat(parts, axis)
    }

    pub fn softmax(logits: &Tensor) -> Tensor {
        let k = *logits.shape().last().unwrap_or(&1);
        let mut out = logits.clone();
        for row in out.data_mut().chunks_mut(k) {
            super::tape::softmax_in_place(row);
        }
        out
    }
}

#[cfg(test)]
mod tests;

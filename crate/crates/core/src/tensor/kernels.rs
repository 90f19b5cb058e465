//! Forward and adjoint kernels over batched `[B, C, H, W]` buffers.
//!
//! Convolutions go through im2col + GEMM; everything here is sequential per
//! call and parallelism lives one level up, across batch chunks.

use crate::error::{shape_err, Result};

/// Padding rule for the time (width) axis. The sensor (height) axis is never padded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadMode {
    /// `pad_left = floor((k-1)/2)`, `pad_right = ceil((k-1)/2)` on the time axis.
    SameTime,
    Valid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub out_channels: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub pad_mode: PadMode,
}

impl ConvSpec {
    /// A `1×k` (or `h×k`) kernel with unit strides and same-time padding.
    pub fn time(kernel_h: usize, kernel_w: usize, out_channels: usize) -> Self {
        ConvSpec {
            kernel_h,
            kernel_w,
            out_channels,
            stride_h: 1,
            stride_w: 1,
            pad_mode: PadMode::SameTime,
        }
    }

    pub fn with_stride_w(mut self, stride_w: usize) -> Self {
        self.stride_w = stride_w;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_h == 0 || self.kernel_w == 0 || self.out_channels == 0 {
            return shape_err(format!("conv spec {self:?} has a zero-sized dimension"));
        }
        if self.stride_h == 0 || self.stride_w == 0 {
            return shape_err(format!("conv spec {self:?} has a zero stride"));
        }
        Ok(())
    }

    pub(crate) fn time_pads(&self) -> (usize, usize) {
        match self.pad_mode {
            PadMode::SameTime => {
                let total = self.kernel_w - 1;
                (total / 2, total - total / 2)
            }
            PadMode::Valid => (0, 0),
        }
    }

    /// Output `(H', W')` for an `H × W` input, or a dimension error.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.validate()?;
        let (pl, pr) = self.time_pads();
        match (
            conv_output_len(h, self.kernel_h, self.stride_h, 0),
            conv_output_len(w, self.kernel_w, self.stride_w, pl + pr),
        ) {
            (Some(ho), Some(wo)) => Ok((ho, wo)),
            _ => shape_err(format!(
                "kernel {}x{} does not fit input {h}x{w} under {:?}",
                self.kernel_h, self.kernel_w, self.pad_mode
            )),
        }
    }
}

pub fn conv_output_len(len: usize, kernel: usize, stride: usize, pad_total: usize) -> Option<usize> {
    let padded = len + pad_total;
    if padded < kernel || stride == 0 {
        None
    } else {
        Some((padded - kernel) / stride + 1)
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` with `op(a)` of size `m×k`, `op(b)` `k×n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the strides above address exactly the m×k, k×n and m×n
    // row-major blocks whose lengths are checked by the debug assertion and
    // by every caller constructing these buffers from shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub b: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub ho: usize,
    pub wo: usize,
    pub pad_l: usize,
    pub spec: ConvSpec,
}

impl ConvGeom {
    pub fn new(input: &[usize], weight: &[usize], bias: &[usize], spec: ConvSpec) -> Result<Self> {
        if input.len() != 4 {
            return shape_err(format!("conv2d expects [B, C, H, W] input, got {input:?}"));
        }
        let (b, c, h, w) = (input[0], input[1], input[2], input[3]);
        let want = [spec.out_channels, c, spec.kernel_h, spec.kernel_w];
        if weight != want {
            return shape_err(format!("conv2d weight must be {want:?}, got {weight:?}"));
        }
        if bias != [spec.out_channels] {
            return shape_err(format!(
                "conv2d bias must be [{}], got {bias:?}",
                spec.out_channels
            ));
        }
        let (ho, wo) = spec.output_hw(h, w)?;
        Ok(ConvGeom {
            b,
            c,
            h,
            w,
            ho,
            wo,
            pad_l: spec.time_pads().0,
            spec,
        })
    }

    fn k(&self) -> usize {
        self.c * self.spec.kernel_h * self.spec.kernel_w
    }

    fn p(&self) -> usize {
        self.ho * self.wo
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.b, self.spec.out_channels, self.ho, self.wo]
    }

    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let s = &self.spec;
        let p = self.p();
        for c in 0..self.c {
            for i in 0..s.kernel_h {
                for j in 0..s.kernel_w {
                    let row = (c * s.kernel_h + i) * s.kernel_w + j;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oh in 0..self.ho {
                        let ih = oh * s.stride_h + i;
                        let src = &x[(c * self.h + ih) * self.w..(c * self.h + ih + 1) * self.w];
                        let out = &mut dst[oh * self.wo..(oh + 1) * self.wo];
                        if s.stride_w == 1 {
                            // iw = ow + j - pad_l; copy the in-range run, zero the rest
                            let lo = self.pad_l.saturating_sub(j).min(self.wo);
                            let hi = (self.w + self.pad_l).saturating_sub(j).clamp(lo, self.wo);
                            out[..lo].fill(0.0);
                            if hi > lo {
                                out[lo..hi].copy_from_slice(&src[lo + j - self.pad_l..hi + j - self.pad_l]);
                            }
                            out[hi..].fill(0.0);
                            continue;
                        }
                        for (ow, o) in out.iter_mut().enumerate() {
                            let iw = (ow * s.stride_w + j) as isize - self.pad_l as isize;
                            *o = if iw >= 0 && (iw as usize) < self.w {
                                src[iw as usize]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let s = &self.spec;
        let p = self.p();
        for c in 0..self.c {
            for i in 0..s.kernel_h {
                for j in 0..s.kernel_w {
                    let row = (c * s.kernel_h + i) * s.kernel_w + j;
                    let src = &cols[row * p..(row + 1) * p];
                    for oh in 0..self.ho {
                        let ih = oh * s.stride_h + i;
                        let base = (c * self.h + ih) * self.w;
                        if s.stride_w == 1 {
                            let lo = self.pad_l.saturating_sub(j).min(self.wo);
                            let hi = (self.w + self.pad_l).saturating_sub(j).clamp(lo, self.wo);
                            if hi > lo {
                                let d = &mut dx[base + lo + j - self.pad_l..base + hi + j - self.pad_l];
                                for (a, b) in d.iter_mut().zip(&src[oh * self.wo + lo..oh * self.wo + hi]) {
                                    *a += b;
                                }
                            }
                            continue;
                        }
                        for ow in 0..self.wo {
                            let iw = (ow * s.stride_w + j) as isize - self.pad_l as isize;
                            if iw >= 0 && (iw as usize) < self.w {
                                dx[base + iw as usize] += src[oh * self.wo + ow];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward(g: &ConvGeom, x: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let (k, p, co) = (g.k(), g.p(), g.spec.out_channels);
    let in_len = g.c * g.h * g.w;
    let mut out = vec![0.0; g.b * co * p];
    let mut cols = vec![0.0; k * p];
    for b in 0..g.b {
        g.im2col(&x[b * in_len..(b + 1) * in_len], &mut cols);
        let ob = &mut out[b * co * p..(b + 1) * co * p];
        for (o, row) in ob.chunks_mut(p).enumerate() {
            row.fill(bias[o]);
        }
        gemm(co, k, p, weight, false, &cols, false, 1.0, ob);
    }
    out
}

/// Returns `(dx, dweight, dbias)`; `dx` is only computed when `need_dx`.
pub(crate) fn conv2d_backward(
    g: &ConvGeom,
    x: &[f64],
    weight: &[f64],
    dout: &[f64],
    need_dx: bool,
    need_dw: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>, Option<Vec<f64>>) {
    let (k, p, co) = (g.k(), g.p(), g.spec.out_channels);
    let in_len = g.c * g.h * g.w;
    let mut dx = need_dx.then(|| vec![0.0; x.len()]);
    let mut dw = need_dw.then(|| vec![0.0; weight.len()]);
    let mut db = need_dw.then(|| vec![0.0; co]);
    let mut cols = vec![0.0; k * p];
    let mut dcols = vec![0.0; k * p];
    for b in 0..g.b {
        let dob = &dout[b * co * p..(b + 1) * co * p];
        if let (Some(dw), Some(db)) = (dw.as_mut(), db.as_mut()) {
            g.im2col(&x[b * in_len..(b + 1) * in_len], &mut cols);
            gemm(co, p, k, dob, false, &cols, true, 1.0, dw);
            for (o, row) in dob.chunks(p).enumerate() {
                db[o] += row.iter().sum::<f64>();
            }
        }
        if let Some(dx) = dx.as_mut() {
            gemm(k, co, p, weight, true, dob, false, 0.0, &mut dcols);
            g.col2im(&dcols, &mut dx[b * in_len..(b + 1) * in_len]);
        }
    }
    (dx, dw, db)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct PoolGeom {
    pub b: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub ph: usize,
    pub pw: usize,
    pub stride: usize,
    pub ho: usize,
    pub wo: usize,
}

impl PoolGeom {
    pub fn new(input: &[usize], ph: usize, pw: usize, stride: usize) -> Result<Self> {
        if input.len() != 4 {
            return shape_err(format!("maxpool2d expects [B, C, H, W] input, got {input:?}"));
        }
        if ph == 0 || pw == 0 || stride == 0 {
            return shape_err("maxpool2d window and stride must be >= 1");
        }
        let (b, c, h, w) = (input[0], input[1], input[2], input[3]);
        if ph > h || pw > w {
            return shape_err(format!(
                "pool window {ph}x{pw} larger than input {h}x{w}"
            ));
        }
        Ok(PoolGeom {
            b,
            c,
            h,
            w,
            ph,
            pw,
            stride,
            ho: (h - ph) / ph + 1,
            wo: (w - pw) / stride + 1,
        })
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.b, self.c, self.ho, self.wo]
    }
}

/// Window maxima and the flat input index that won each window (first in scan order on ties).
pub(crate) fn maxpool_forward(g: &PoolGeom, x: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = g.b * g.c * g.ho * g.wo;
    let mut out = Vec::with_capacity(n);
    let mut arg = Vec::with_capacity(n);
    for bc in 0..g.b * g.c {
        let plane = bc * g.h * g.w;
        for oh in 0..g.ho {
            for ow in 0..g.wo {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = plane + oh * g.ph * g.w + ow * g.stride;
                for i in 0..g.ph {
                    for j in 0..g.pw {
                        let idx = plane + (oh * g.ph + i) * g.w + ow * g.stride + j;
                        if x[idx] > best {
                            best = x[idx];
                            best_i = idx;
                        }
                    }
                }
                out.push(best);
                arg.push(best_i);
            }
        }
    }
    (out, arg)
}

/// Transposed `1×2` convolution with time stride 2; weight `[C_in, C_out, 1, 2]`.
pub(crate) fn upconv_forward(
    shape: &[usize],
    x: &[f64],
    weight: &[f64],
    bias: &[f64],
    co: usize,
) -> Vec<f64> {
    let (b, ci, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (p, wo) = (h * w, 2 * w);
    let mut out = vec![0.0; b * co * h * wo];
    // y[(o, k), p] = sum_i weight[i, o, k] x[i, p], then interleave k into time
    let mut y = vec![0.0; 2 * co * p];
    for bi in 0..b {
        gemm(2 * co, ci, p, weight, true, &x[bi * ci * p..(bi + 1) * ci * p], false, 0.0, &mut y);
        let ob = &mut out[bi * co * h * wo..(bi + 1) * co * h * wo];
        for o in 0..co {
            let (y0, y1) = (&y[2 * o * p..(2 * o + 1) * p], &y[(2 * o + 1) * p..(2 * o + 2) * p]);
            for (q, pair) in ob[o * h * wo..(o + 1) * h * wo].chunks_exact_mut(2).enumerate() {
                pair[0] = y0[q] + bias[o];
                pair[1] = y1[q] + bias[o];
            }
        }
    }
    out
}

pub(crate) fn upconv_backward(
    shape: &[usize],
    x: &[f64],
    weight: &[f64],
    dout: &[f64],
    co: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (b, ci, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (p, wo) = (h * w, 2 * w);
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; weight.len()];
    let mut db = vec![0.0; co];
    let mut dy = vec![0.0; 2 * co * p];
    for bi in 0..b {
        let g = &dout[bi * co * h * wo..(bi + 1) * co * h * wo];
        for o in 0..co {
            let go = &g[o * h * wo..(o + 1) * h * wo];
            db[o] += go.iter().sum::<f64>();
            for (q, pair) in go.chunks_exact(2).enumerate() {
                dy[2 * o * p + q] = pair[0];
                dy[(2 * o + 1) * p + q] = pair[1];
            }
        }
        let xb = &x[bi * ci * p..(bi + 1) * ci * p];
        gemm(ci, 2 * co, p, weight, false, &dy, false, 0.0, &mut dx[bi * ci * p..(bi + 1) * ci * p]);
        gemm(ci, p, 2 * co, xb, false, &dy, true, 1.0, &mut dw);
    }
    (dx, dw, db)
}

//! Identification network (parallel CNN and LSTM branches feeding one
//! softmax layer) and the pairwise authentication network built on a frozen
//! CNN feature extractor.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, GaitError, Result};
use crate::nn::{self, Bound, LstmLayerWeights, LstmVars, ParamSet, TrainConfig, TrainLog};
use crate::par;
use crate::signal::{Alignment, CHANNELS, SAMPLE_LEN};
use crate::tensor::{ConvSpec, PadMode, Tape, Tensor, Var};

pub const CNN_CHANNELS: usize = 128;
pub const STANDALONE_HIDDEN: usize = 64;
pub const HYBRID_HIDDEN: usize = 1024;
pub const AUTH_HIDDEN: usize = 64;
pub const AUTH_STEPS: usize = 16;

// ---------------------------------------------------------------------------
// CNN branch

/// `(name, kernel_h, kernel_w, out_channels, stride_w, relu)`.
const CNN_CONVS: [(&str, usize, usize, usize, usize, bool); 4] = [
    ("conv1_1", 1, 9, 32, 2, true),
    ("conv2_1", 1, 3, 64, 1, true),
    ("conv2_2", 1, 3, 128, 1, true),
    ("conv3_1", 6, 1, 128, 1, false),
];

fn cnn_spec(kh: usize, kw: usize, co: usize, stride: usize) -> ConvSpec {
    ConvSpec {
        kernel_h: kh,
        kernel_w: kw,
        out_channels: co,
        stride_h: 1,
        stride_w: stride,
        pad_mode: PadMode::SameTime,
    }
}

pub fn init_cnn(params: &mut ParamSet, rng: &mut ChaCha8Rng) {
    let mut cin = 1;
    for (name, kh, kw, co, _, _) in CNN_CONVS {
        let rf = kh * kw;
        params.insert(
            format!("cnn.{name}.w"),
            nn::glorot(rng, &[co, cin, kh, kw], cin * rf, co * rf),
        );
        params.insert(format!("cnn.{name}.b"), Tensor::zeros(&[co]));
        cin = co;
    }
}

/// `x [B, 1, 6, W]` to the `[B, 128, 1, W / 8]` feature map, recording each
/// layer's `(name, [C, H, W])` in `trace` when given.
pub fn cnn_feature_map(
    tape: &mut Tape,
    bound: &Bound,
    x: Var,
    mut trace: Option<&mut Vec<(String, Vec<usize>)>>,
) -> Result<Var> {
    let s = tape.value(x).shape();
    if s.len() != 4 || s[1] != 1 || s[2] != CHANNELS {
        return shape_err(format!("CNN input must be [B, 1, {CHANNELS}, W], got {s:?}"));
    }
    let mut cur = x;
    let mut record = |tape: &Tape, name: &str, v: Var| {
        if let Some(t) = trace.as_deref_mut() {
            t.push((name.to_string(), tape.value(v).shape()[1..].to_vec()));
        }
    };
    for (i, (name, kh, kw, co, stride, relu)) in CNN_CONVS.into_iter().enumerate() {
        let w = bound.var(&format!("cnn.{name}.w"))?;
        let b = bound.var(&format!("cnn.{name}.b"))?;
        cur = tape.conv2d(cur, w, b, cnn_spec(kh, kw, co, stride))?;
        if relu {
            cur = tape.relu(cur)?;
        }
        record(tape, name, cur);
        if i == 0 || i == 2 {
            cur = tape.maxpool2d(cur, 1, 2, 2)?;
            record(tape, if i == 0 { "pool1" } else { "pool2" }, cur);
        }
    }
    Ok(cur)
}

/// Flattened CNN feature `[B, 128 * W / 8]`, channel-major.
pub fn cnn_forward(tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
    let f = cnn_feature_map(tape, bound, x, None)?;
    let s = tape.value(f).shape().to_vec();
    tape.reshape(f, &[s[0], s[1] * s[2] * s[3]])
}

/// Layer shapes of one `6 x width` sample through the CNN.
pub fn cnn_shape_trace(params: &ParamSet, width: usize) -> Result<Vec<(String, Vec<usize>)>> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, |_| false);
    let x = tape.constant(Tensor::zeros(&[1, 1, CHANNELS, width]));
    let mut trace = Vec::new();
    cnn_feature_map(&mut tape, &bound, x, Some(&mut trace))?;
    Ok(trace)
}

// ---------------------------------------------------------------------------
// Identification

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IdentKind {
    CnnOnly,
    LstmSl,
    LstmBi,
    LstmDl,
    HybridScratch,
    CnnFixLstm,
    CnnLstmFix,
}

impl IdentKind {
    pub const ALL: [IdentKind; 7] = [
        IdentKind::CnnOnly,
        IdentKind::LstmSl,
        IdentKind::LstmBi,
        IdentKind::LstmDl,
        IdentKind::HybridScratch,
        IdentKind::CnnFixLstm,
        IdentKind::CnnLstmFix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IdentKind::CnnOnly => "cnn",
            IdentKind::LstmSl => "lstm-sl",
            IdentKind::LstmBi => "lstm-bi",
            IdentKind::LstmDl => "lstm-dl",
            IdentKind::HybridScratch => "hybrid",
            IdentKind::CnnFixLstm => "cnn-fix-lstm",
            IdentKind::CnnLstmFix => "cnn-lstm-fix",
        }
    }

    pub fn has_cnn(self) -> bool {
        !matches!(self, IdentKind::LstmSl | IdentKind::LstmBi | IdentKind::LstmDl)
    }

    pub fn has_lstm(self) -> bool {
        self != IdentKind::CnnOnly
    }

    /// Parameter prefix whose weights come pretrained and stay fixed.
    pub fn frozen_prefix(self) -> Option<&'static str> {
        match self {
            IdentKind::CnnFixLstm => Some("cnn."),
            IdentKind::CnnLstmFix => Some("lstm."),
            _ => None,
        }
    }

    fn lstm_layers(self) -> usize {
        match self {
            IdentKind::LstmSl | IdentKind::LstmBi => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for IdentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IdentKind {
    type Err = GaitError;

    fn from_str(s: &str) -> Result<Self> {
        IdentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| GaitError::Usage(format!("unknown identification model `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IdentVariant {
    pub kind: IdentKind,
    pub lstm_hidden: usize,
}

impl IdentVariant {
    /// Standalone LSTMs use 64 hidden units, branches of the hybrid 1024.
    pub fn new(kind: IdentKind) -> Self {
        let lstm_hidden = if kind.has_cnn() && kind.has_lstm() {
            HYBRID_HIDDEN
        } else {
            STANDALONE_HIDDEN
        };
        IdentVariant { kind, lstm_hidden }
    }

    pub fn with_hidden(kind: IdentKind, lstm_hidden: usize) -> Self {
        IdentVariant { kind, lstm_hidden }
    }

    /// Width of the concatenated feature fed to the output layer.
    pub fn feature_width(&self) -> usize {
        let mut w = 0;
        if self.kind.has_lstm() {
            w += self.lstm_hidden * if self.kind == IdentKind::LstmBi { 2 } else { 1 };
        }
        if self.kind.has_cnn() {
            w += CNN_CHANNELS * SAMPLE_LEN / 8;
        }
        w
    }
}

/// Per-channel standardization computed on the training set.
#[derive(Clone, Debug, PartialEq)]
pub struct InputScale {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

impl InputScale {
    pub fn identity() -> Self {
        InputScale {
            mean: [0.0; CHANNELS],
            std: [1.0; CHANNELS],
        }
    }

    pub fn fit(samples: &[&Tensor]) -> Self {
        let mut sum = [0.0; CHANNELS];
        let mut sq = [0.0; CHANNELS];
        let mut n = 0usize;
        for s in samples {
            let w = s.shape()[1];
            for (c, row) in s.data().chunks(w).enumerate().take(CHANNELS) {
                sum[c] += row.iter().sum::<f64>();
                sq[c] += row.iter().map(|v| v * v).sum::<f64>();
            }
            n += w;
        }
        let n = n.max(1) as f64;
        let mean = sum.map(|s| s / n);
        let std = std::array::from_fn(|c| {
            let var = (sq[c] / n - mean[c] * mean[c]).max(0.0);
            if var.sqrt() > 1e-8 {
                var.sqrt()
            } else {
                1.0
            }
        });
        InputScale { mean, std }
    }

    /// Applies the scaling to a `[6k, W]` matrix (channels repeat every 6 rows).
    pub fn apply(&self, x: &Tensor) -> Tensor {
        let w = x.shape()[1];
        let mut out = x.clone();
        for (r, row) in out.data_mut().chunks_mut(w).enumerate() {
            let c = r % CHANNELS;
            for v in row {
                *v = (*v - self.mean[c]) / self.std[c];
            }
        }
        out
    }

    fn store(&self, prefix: &str, params: &mut ParamSet) {
        params.insert(format!("{prefix}.mean"), Tensor::from_vec(self.mean.to_vec()));
        params.insert(format!("{prefix}.std"), Tensor::from_vec(self.std.to_vec()));
    }

    fn load(prefix: &str, params: &ParamSet) -> Result<Self> {
        let m = params.get(&format!("{prefix}.mean"))?;
        let s = params.get(&format!("{prefix}.std"))?;
        if m.len() != CHANNELS || s.len() != CHANNELS {
            return shape_err("input scale must have 6 entries");
        }
        Ok(InputScale {
            mean: std::array::from_fn(|i| m.data()[i]),
            std: std::array::from_fn(|i| s.data()[i]),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentNet {
    pub params: ParamSet,
    pub variant: IdentVariant,
    pub classes: usize,
}

impl IdentNet {
    pub fn new(variant: IdentVariant, classes: usize, seed: u64) -> Result<Self> {
        if classes == 0 {
            return Err(GaitError::Usage("identification needs at least one class".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        if variant.kind.has_cnn() {
            init_cnn(&mut params, &mut rng);
        }
        if variant.kind.has_lstm() {
            let n = variant.lstm_hidden;
            let mut input = CHANNELS;
            for l in 0..variant.kind.lstm_layers() {
                LstmLayerWeights::random(&mut rng, input, n).store(&format!("lstm.l{l}"), &mut params);
                input = n;
            }
            if variant.kind == IdentKind::LstmBi {
                LstmLayerWeights::random(&mut rng, CHANNELS, n).store("lstm.bw", &mut params);
            }
        }
        let f = variant.feature_width();
        params.insert("out.w", nn::glorot(&mut rng, &[f, classes], f, classes));
        params.insert("out.b", Tensor::zeros(&[classes]));
        InputScale::identity().store("input", &mut params);
        Ok(IdentNet {
            params,
            variant,
            classes,
        })
    }

    pub fn input_scale(&self) -> Result<InputScale> {
        InputScale::load("input", &self.params)
    }

    pub fn set_input_scale(&mut self, scale: &InputScale) {
        scale.store("input", &mut self.params);
    }

    /// Names updated by training: everything except the input scale and the
    /// frozen branch.
    pub fn trainable(&self) -> Vec<String> {
        let frozen = self.variant.kind.frozen_prefix();
        self.params
            .names()
            .into_iter()
            .filter(|n| !n.starts_with("input."))
            .filter(|n| frozen.is_none_or(|p| !n.starts_with(p)))
            .collect()
    }

    /// Copies the branch that this variant keeps fixed from a pretrained model.
    pub fn load_frozen_branch(&mut self, pretrained: &IdentNet) -> Result<()> {
        let prefix = self.variant.kind.frozen_prefix().ok_or_else(|| {
            GaitError::Usage(format!("{} has no frozen branch", self.variant.kind))
        })?;
        self.params.copy_prefix_from(&pretrained.params, prefix)?;
        self.set_input_scale(&pretrained.input_scale()?);
        Ok(())
    }

    /// Class probabilities `[B, n]` for already-scaled samples `[B, 6, 128]`.
    pub fn probs(&self, tape: &mut Tape, bound: &Bound, batch: &[&Tensor]) -> Result<Var> {
        let kind = self.variant.kind;
        let mut feats = Vec::with_capacity(2);
        if kind.has_lstm() {
            feats.push(self.lstm_feature(tape, bound, batch)?);
        }
        if kind.has_cnn() {
            feats.push(self.cnn_feature(tape, bound, batch)?);
        }
        self.head(tape, bound, &feats)
    }

    fn lstm_feature(&self, tape: &mut Tape, bound: &Bound, batch: &[&Tensor]) -> Result<Var> {
        let kind = self.variant.kind;
        let seq: Vec<Var> = time_major(batch)?
            .into_iter()
            .map(|t| tape.constant(t))
            .collect();
        let layers = (0..kind.lstm_layers())
            .map(|l| LstmVars::bind(tape, bound, &format!("lstm.l{l}")))
            .collect::<Result<Vec<_>>>()?;
        let bw = if kind == IdentKind::LstmBi {
            Some(LstmVars::bind(tape, bound, "lstm.bw")?)
        } else {
            None
        };
        nn::lstm_forward(tape, &seq, &layers, bw.as_ref())
    }

    fn cnn_feature(&self, tape: &mut Tape, bound: &Bound, batch: &[&Tensor]) -> Result<Var> {
        let x = tape.constant(stack_images(batch)?);
        cnn_forward(tape, bound, x)
    }

    /// Output affine and softmax over the LSTM-then-CNN feature concatenation.
    fn head(&self, tape: &mut Tape, bound: &Bound, feats: &[Var]) -> Result<Var> {
        let feat = if feats.len() == 1 {
            feats[0]
        } else {
            tape.concat(feats, 1)?
        };
        let z = tape.affine(feat, bound.var("out.w")?, bound.var("out.b")?)?;
        tape.softmax(z)
    }

    /// Per-sample feature rows of the frozen branch for already-scaled samples.
    /// They never change during training, so they are computed once.
    fn frozen_features(&self, scaled: &[&Tensor]) -> Result<Vec<Vec<f64>>> {
        let prefix = self.variant.kind.frozen_prefix();
        let chunks: Vec<&[&Tensor]> = scaled.chunks(32).collect();
        let parts = par::map_slice(&chunks, |chunk| -> Result<Vec<Vec<f64>>> {
            let mut tape = Tape::new();
            let bound = self.params.bind(&mut tape, |_| false);
            let f = match prefix {
                Some("lstm.") => self.lstm_feature(&mut tape, &bound, chunk)?,
                _ => self.cnn_feature(&mut tape, &bound, chunk)?,
            };
            let v = tape.value(f);
            let w = v.shape()[1];
            Ok(v.data().chunks(w).map(<[f64]>::to_vec).collect())
        });
        let mut out = Vec::with_capacity(scaled.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    /// Probability rows for raw (unscaled) `6 x 128` samples.
    pub fn predict(&self, samples: &[&Tensor]) -> Result<Vec<Vec<f64>>> {
        let scale = self.input_scale()?;
        let scaled: Vec<Tensor> = samples.iter().map(|s| scale.apply(s)).collect();
        let refs: Vec<&Tensor> = scaled.iter().collect();
        let chunks: Vec<&[&Tensor]> = refs.chunks(32).collect();
        let parts = par::map_slice(&chunks, |chunk| -> Result<Vec<Vec<f64>>> {
            let mut tape = Tape::new();
            let bound = self.params.bind(&mut tape, |_| false);
            let p = self.probs(&mut tape, &bound, chunk)?;
            Ok(tape
                .value(p)
                .data()
                .chunks(self.classes)
                .map(<[f64]>::to_vec)
                .collect())
        });
        let mut out = Vec::with_capacity(samples.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    pub fn accuracy(&self, samples: &[&Tensor], labels: &[usize]) -> Result<f64> {
        let probs = self.predict(samples)?;
        let hits = probs
            .iter()
            .zip(labels)
            .filter(|(p, &l)| predict_identity(p) == l)
            .count();
        Ok(hits as f64 / labels.len().max(1) as f64)
    }
}

/// `[B, 6, W]` samples as the CNN image batch `[B, 1, 6, W]`.
fn stack_images(batch: &[&Tensor]) -> Result<Tensor> {
    let first = batch
        .first()
        .ok_or_else(|| GaitError::Usage("empty batch".into()))?
        .shape()
        .to_vec();
    if first.len() != 2 || first[0] != CHANNELS {
        return shape_err(format!("samples must be {CHANNELS}xW, got {first:?}"));
    }
    let mut data = Vec::with_capacity(batch.len() * first[0] * first[1]);
    for s in batch {
        if s.shape() != first.as_slice() {
            return shape_err(format!("mixed sample shapes {:?} and {first:?}", s.shape()));
        }
        data.extend_from_slice(s.data());
    }
    Tensor::new(vec![batch.len(), 1, first[0], first[1]], data)
}

/// `[B, 6, T]` samples as `T` tensors of shape `[B, 6]`.
fn time_major(batch: &[&Tensor]) -> Result<Vec<Tensor>> {
    let img = stack_images(batch)?;
    let (b, t) = (batch.len(), img.shape()[3]);
    let d = img.data();
    (0..t)
        .map(|step| {
            let mut v = Vec::with_capacity(b * CHANNELS);
            for i in 0..b {
                for c in 0..CHANNELS {
                    v.push(d[(i * CHANNELS + c) * t + step]);
                }
            }
            Tensor::new(vec![b, CHANNELS], v)
        })
        .collect()
}

/// Index of the largest probability; the lowest index wins ties.
pub fn predict_identity(o: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in o.iter().enumerate() {
        if v > o[best] {
            best = i;
        }
    }
    best
}

/// Trains `net` on raw samples with integer labels. The input scale is fitted
/// here unless the variant's frozen branch already fixed it.
pub fn train_ident(
    net: &mut IdentNet,
    samples: &[&Tensor],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    if samples.len() != labels.len() || samples.is_empty() {
        return Err(GaitError::Usage(format!(
            "{} samples vs {} labels",
            samples.len(),
            labels.len()
        )));
    }
    let mut seen = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() < 2 {
        return Err(GaitError::Data("identification training needs at least two classes".into()));
    }
    if let Some(&l) = seen.iter().find(|&&l| l >= net.classes) {
        return Err(GaitError::Data(format!("label {l} outside {} classes", net.classes)));
    }
    if net.variant.kind.frozen_prefix().is_none() {
        net.set_input_scale(&InputScale::fit(samples));
    }
    let scale = net.input_scale()?;
    let scaled: Vec<Tensor> = samples.iter().map(|s| scale.apply(s)).collect();
    let trainable = net.trainable();
    let n = net.classes;
    let refs: Vec<&Tensor> = scaled.iter().collect();
    let frozen = match net.variant.kind.frozen_prefix() {
        Some(p) => Some((p, net.frozen_features(&refs)?)),
        None => None,
    };
    let shadow = IdentNet {
        params: ParamSet::new(),
        variant: net.variant,
        classes: n,
    };
    nn::train(&mut net.params, &trainable, samples.len(), cfg, |tape, bound, idx, norm| {
        let batch: Vec<&Tensor> = idx.iter().map(|&i| &scaled[i]).collect();
        let p = match &frozen {
            None => shadow.probs(tape, bound, &batch)?,
            Some((prefix, cache)) => {
                let w = cache[0].len();
                let rows: Vec<f64> = idx.iter().flat_map(|&i| cache[i].iter().copied()).collect();
                let fixed = tape.constant(Tensor::new(vec![idx.len(), w], rows)?);
                let feats = if *prefix == "lstm." {
                    [fixed, shadow.cnn_feature(tape, bound, &batch)?]
                } else {
                    [shadow.lstm_feature(tape, bound, &batch)?, fixed]
                };
                shadow.head(tape, bound, &feats)?
            }
        };
        let mut target = vec![0.0; idx.len() * n];
        for (r, &i) in idx.iter().enumerate() {
            target[r * n + labels[i]] = 1.0;
        }
        tape.binary_ce(p, Tensor::new(vec![idx.len(), n], target)?, norm)
    })
}

// ---------------------------------------------------------------------------
// Authentication

/// 16-step sequence of 256-wide blocks fed to the authentication LSTM.
///
/// Vertical pairs: each sample goes through the CNN on its own and block `t`
/// is `[f_a[:, t]; f_b[:, t]]`. Horizontal pairs: the `6 x 256` matrix goes
/// through the CNN as one input, giving 32 time steps of 128 channels, and
/// block `t` is `[f[:, 2t]; f[:, 2t + 1]]`.
pub fn auth_blocks(
    cnn: &ParamSet,
    scale: &InputScale,
    pairs: &[&Tensor],
    alignment: Alignment,
) -> Result<Vec<Tensor>> {
    let chunks: Vec<&[&Tensor]> = pairs.chunks(32).collect();
    let parts = par::map_slice(&chunks, |chunk| -> Result<Vec<Tensor>> {
        let mut tape = Tape::new();
        let bound = cnn.bind(&mut tape, |_| false);
        match alignment {
            Alignment::Vertical => {
                let mut a = Vec::with_capacity(chunk.len());
                let mut b = Vec::with_capacity(chunk.len());
                for p in chunk.iter() {
                    if p.shape() != [2 * CHANNELS, SAMPLE_LEN] {
                        return shape_err(format!("vertical pair must be 12x128, got {:?}", p.shape()));
                    }
                    let s = scale.apply(p);
                    a.push(s.narrow(0, 0, CHANNELS)?);
                    b.push(s.narrow(0, CHANNELS, CHANNELS)?);
                }
                let fa = feature_rows(&mut tape, &bound, &a)?;
                let fb = feature_rows(&mut tape, &bound, &b)?;
                fa.iter()
                    .zip(&fb)
                    .map(|(x, y)| Tensor::concat(&[x, y], 1))
                    .collect()
            }
            Alignment::Horizontal => {
                let mut whole = Vec::with_capacity(chunk.len());
                for p in chunk.iter() {
                    if p.shape() != [CHANNELS, 2 * SAMPLE_LEN] {
                        return shape_err(format!("horizontal pair must be 6x256, got {:?}", p.shape()));
                    }
                    whole.push(scale.apply(p));
                }
                let f = feature_rows(&mut tape, &bound, &whole)?;
                f.into_iter()
                    .map(|m| m.reshape(&[AUTH_STEPS, 2 * CNN_CHANNELS]))
                    .collect()
            }
        }
    });
    let mut out = Vec::with_capacity(pairs.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// CNN feature maps as time-major `[T, 128]` matrices, one per sample.
fn feature_rows(tape: &mut Tape, bound: &Bound, samples: &[Tensor]) -> Result<Vec<Tensor>> {
    let refs: Vec<&Tensor> = samples.iter().collect();
    let x = tape.constant(stack_images(&refs)?);
    let f = cnn_feature_map(tape, bound, x, None)?;
    let v = tape.value(f);
    let (c, t) = (v.shape()[1], v.shape()[3]);
    v.data()
        .chunks(c * t)
        .map(|m| {
            let mut rows = vec![0.0; t * c];
            for ch in 0..c {
                for step in 0..t {
                    rows[step * c + ch] = m[ch * t + step];
                }
            }
            Tensor::new(vec![t, c], rows)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuthNet {
    /// Frozen CNN (`cnn.*`, `input.*`) plus the trainable `lstm.*` and `out.*`.
    pub params: ParamSet,
    pub alignment: Alignment,
}

impl AuthNet {
    /// Takes the CNN branch and input scale of a pretrained identification model.
    pub fn new(pretrained: &IdentNet, alignment: Alignment, seed: u64) -> Result<Self> {
        if !pretrained.variant.kind.has_cnn() {
            return Err(GaitError::Usage(format!(
                "authentication needs a pretrained CNN, got {}",
                pretrained.variant.kind
            )));
        }
        let mut params = ParamSet::new();
        for name in pretrained.params.names() {
            if name.starts_with("cnn.") || name.starts_with("input.") {
                params.insert(name.clone(), pretrained.params.get(&name)?.clone());
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 2 * CNN_CHANNELS;
        LstmLayerWeights::random(&mut rng, d, AUTH_HIDDEN).store("lstm.l0", &mut params);
        LstmLayerWeights::random(&mut rng, AUTH_HIDDEN, AUTH_HIDDEN).store("lstm.l1", &mut params);
        params.insert("out.w", nn::glorot(&mut rng, &[AUTH_HIDDEN, 2], AUTH_HIDDEN, 2));
        params.insert("out.b", Tensor::zeros(&[2]));
        Ok(AuthNet { params, alignment })
    }

    pub fn cnn_params(&self) -> ParamSet {
        let mut p = ParamSet::new();
        for (name, t) in self.params.iter() {
            if name.starts_with("cnn.") {
                p.insert(name.clone(), t.clone());
            }
        }
        p
    }

    pub fn trainable(&self) -> Vec<String> {
        self.params
            .names()
            .into_iter()
            .filter(|n| n.starts_with("lstm.") || n.starts_with("out."))
            .collect()
    }

    pub fn blocks(&self, pairs: &[&Tensor]) -> Result<Vec<Tensor>> {
        let scale = InputScale::load("input", &self.params)?;
        auth_blocks(&self.cnn_params(), &scale, pairs, self.alignment)
    }

    /// `[B, 2]` probabilities (index 1 = same subject) from block sequences.
    pub fn probs_from_blocks(tape: &mut Tape, bound: &Bound, blocks: &[&Tensor]) -> Result<Var> {
        let b = blocks.len();
        let d = 2 * CNN_CHANNELS;
        let seq = (0..AUTH_STEPS)
            .map(|t| {
                let mut v = Vec::with_capacity(b * d);
                for blk in blocks {
                    v.extend_from_slice(&blk.data()[t * d..(t + 1) * d]);
                }
                Ok(tape.constant(Tensor::new(vec![b, d], v)?))
            })
            .collect::<Result<Vec<Var>>>()?;
        let layers = [
            LstmVars::bind(tape, bound, "lstm.l0")?,
            LstmVars::bind(tape, bound, "lstm.l1")?,
        ];
        let h = nn::lstm_forward(tape, &seq, &layers, None)?;
        let z = tape.affine(h, bound.var("out.w")?, bound.var("out.b")?)?;
        tape.softmax(z)
    }

    /// Same-subject probability for each block sequence.
    pub fn scores_from_blocks(&self, blocks: &[Tensor]) -> Result<Vec<f64>> {
        let refs: Vec<&Tensor> = blocks.iter().collect();
        let chunks: Vec<&[&Tensor]> = refs.chunks(64).collect();
        let parts = par::map_slice(&chunks, |chunk| -> Result<Vec<f64>> {
            let mut tape = Tape::new();
            let bound = self.params.bind(&mut tape, |_| false);
            let p = Self::probs_from_blocks(&mut tape, &bound, chunk)?;
            Ok(tape.value(p).data().chunks(2).map(|r| r[1]).collect())
        });
        let mut out = Vec::with_capacity(blocks.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    /// `[p(different), p(same)]` for one aligned pair.
    pub fn forward(&self, pair: &Tensor) -> Result<[f64; 2]> {
        let blocks = self.blocks(&[pair])?;
        let s = self.scores_from_blocks(&blocks)?[0];
        Ok([1.0 - s, s])
    }
}

/// Trains the LSTM and output layer on cached block sequences; the CNN is
/// never touched.
pub fn train_auth(
    net: &mut AuthNet,
    blocks: &[Tensor],
    same: &[bool],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    if blocks.len() != same.len() || blocks.is_empty() {
        return Err(GaitError::Usage(format!(
            "{} pairs vs {} labels",
            blocks.len(),
            same.len()
        )));
    }
    let trainable = net.trainable();
    nn::train(&mut net.params, &trainable, blocks.len(), cfg, |tape, bound, idx, norm| {
        let batch: Vec<&Tensor> = idx.iter().map(|&i| &blocks[i]).collect();
        let p = AuthNet::probs_from_blocks(tape, bound, &batch)?;
        let target: Vec<f64> = idx
            .iter()
            .flat_map(|&i| if same[i] { [0.0, 1.0] } else { [1.0, 0.0] })
            .collect();
        tape.binary_ce(p, Tensor::new(vec![idx.len(), 2], target)?, norm)
    })
}

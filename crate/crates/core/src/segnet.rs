//! Encoder-decoder that labels every timestep of a `6 x 1024` window as
//! walking (1) or not (0), and the tiling pass that cuts walking sessions
//! out of a long recording.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, GaitError, Result};
use crate::nn::{self, Bound, ParamSet, TrainConfig, TrainLog};
use crate::par;
use crate::signal::{InertialSeries, CHANNELS};
use crate::tensor::{ConvSpec, PadMode, Tape, Tensor, Var};

pub const WINDOW: usize = 1024;
pub const MIN_RUN_S: f64 = 2.0;

/// An annotated (or unannotated) `6 x 1024` window.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtractionWindow {
    pub values: Tensor,
    pub mask: Option<Vec<f64>>,
}

impl ExtractionWindow {
    pub fn new(values: Tensor, mask: Option<Vec<f64>>) -> Result<Self> {
        if values.shape() != [CHANNELS, WINDOW] {
            return shape_err(format!(
                "extraction window must be {CHANNELS}x{WINDOW}, got {:?}",
                values.shape()
            ));
        }
        if let Some(m) = &mask {
            if m.len() != WINDOW {
                return shape_err(format!("mask has {} labels, expected {WINDOW}", m.len()));
            }
        }
        values.ensure_finite("extraction window")?;
        Ok(ExtractionWindow { values, mask })
    }
}

#[derive(Clone, Copy, Debug)]
enum Kind {
    Conv { kh: usize, kw: usize, relu: bool },
    Pool,
    Up,
    Concat { skip: &'static str },
}

/// `(name, kind, output channels at full width)`.
const LAYERS: [(&str, Kind, usize); 18] = [
    ("conv1_1", Kind::Conv { kh: 1, kw: 16, relu: true }, 64),
    ("conv1_2", Kind::Conv { kh: 1, kw: 16, relu: true }, 64),
    ("pool1", Kind::Pool, 64),
    ("conv2_1", Kind::Conv { kh: 1, kw: 16, relu: true }, 128),
    ("conv2_2", Kind::Conv { kh: 1, kw: 16, relu: true }, 128),
    ("pool2", Kind::Pool, 128),
    ("conv3_1", Kind::Conv { kh: 1, kw: 16, relu: true }, 256),
    ("conv3_2", Kind::Conv { kh: 1, kw: 16, relu: true }, 256),
    ("conv3_3", Kind::Conv { kh: 1, kw: 16, relu: true }, 256),
    ("upconv1", Kind::Up, 128),
    ("concat1", Kind::Concat { skip: "conv2_2" }, 256),
    ("conv4_1", Kind::Conv { kh: 1, kw: 16, relu: true }, 128),
    ("conv4_2", Kind::Conv { kh: 1, kw: 16, relu: true }, 128),
    ("upconv2", Kind::Up, 64),
    ("concat2", Kind::Concat { skip: "conv1_2" }, 128),
    ("conv5_1", Kind::Conv { kh: 1, kw: 16, relu: true }, 64),
    ("conv5_2", Kind::Conv { kh: 6, kw: 16, relu: true }, 64),
    ("conv5_3", Kind::Conv { kh: 1, kw: 1, relu: false }, 1),
];

fn conv_spec(kh: usize, kw: usize, co: usize) -> ConvSpec {
    ConvSpec {
        kernel_h: kh,
        kernel_w: kw,
        out_channels: co,
        stride_h: 1,
        stride_w: 1,
        pad_mode: PadMode::SameTime,
    }
}

/// Layer-by-layer `[C, H, W]` shapes for one window at the given width
/// divisor, computed from the layer table alone.
pub fn planned_shapes(width_divisor: usize) -> Result<Vec<(&'static str, [usize; 3])>> {
    if width_divisor == 0 {
        return Err(GaitError::Usage("width divisor must be >= 1".into()));
    }
    let mut out: Vec<(&'static str, [usize; 3])> = Vec::with_capacity(LAYERS.len());
    let mut cur = [1usize, CHANNELS, WINDOW];
    for (name, kind, full) in LAYERS {
        let width = scaled(full, width_divisor, name);
        cur = match kind {
            Kind::Conv { kh, kw, .. } => {
                let (h, w) = conv_spec(kh, kw, width).output_hw(cur[1], cur[2])?;
                [width, h, w]
            }
            Kind::Pool => [cur[0], cur[1], cur[2] / 2],
            Kind::Up => [width, cur[1], cur[2] * 2],
            Kind::Concat { skip } => {
                let s = out.iter().find(|(n, _)| *n == skip).expect("skip precedes concat").1;
                [cur[0] + s[0], cur[1], cur[2]]
            }
        };
        out.push((name, cur));
    }
    Ok(out)
}

fn scaled(full: usize, div: usize, name: &str) -> usize {
    if name == "conv5_3" {
        1
    } else {
        (full / div).max(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegNet {
    pub params: ParamSet,
    pub width_divisor: usize,
}

impl SegNet {
    /// Glorot-initialized network; `width_divisor = 1` gives the full channel counts.
    pub fn new(width_divisor: usize, seed: u64) -> Result<Self> {
        let shapes = planned_shapes(width_divisor)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut cin = 1;
        for (i, (name, kind, _)) in LAYERS.iter().enumerate() {
            let co = shapes[i].1[0];
            match *kind {
                Kind::Conv { kh, kw, .. } => {
                    let rf = kh * kw;
                    params.insert(
                        format!("seg.{name}.w"),
                        nn::glorot(&mut rng, &[co, cin, kh, kw], cin * rf, co * rf),
                    );
                    params.insert(format!("seg.{name}.b"), Tensor::zeros(&[co]));
                }
                Kind::Up => {
                    params.insert(
                        format!("seg.{name}.w"),
                        nn::glorot(&mut rng, &[cin, co, 1, 2], cin * 2, co * 2),
                    );
                    params.insert(format!("seg.{name}.b"), Tensor::zeros(&[co]));
                }
                Kind::Pool | Kind::Concat { .. } => {}
            }
            cin = co;
        }
        Ok(SegNet {
            params,
            width_divisor,
        })
    }

    /// Every weight set to zero.
    pub fn zeroed(width_divisor: usize) -> Result<Self> {
        let mut net = Self::new(width_divisor, 0)?;
        for name in net.params.names() {
            let t = net.params.get_mut(&name).expect("listed");
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(net)
    }

    /// `x` is `[B, 1, 6, 1024]`; returns per-timestep logits `[B, 1024]`.
    /// Each layer's output is checked against [`planned_shapes`].
    pub fn logits(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        forward_logits(self.width_divisor, tape, bound, x, None)
    }

    /// Observed `(layer, [C, H, W])` for one zero window run through the network.
    pub fn shape_trace(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, |_| false);
        let x = tape.constant(Tensor::zeros(&[1, 1, CHANNELS, WINDOW]));
        let mut trace = Vec::with_capacity(LAYERS.len());
        forward_logits(self.width_divisor, &mut tape, &bound, x, Some(&mut trace))?;
        Ok(trace)
    }

    /// Per-timestep walking probabilities for a batch of `[6, 1024]` windows.
    pub fn predict(&self, windows: &[&Tensor]) -> Result<Vec<Vec<f64>>> {
        let chunks: Vec<&[&Tensor]> = windows.chunks(4).collect();
        let parts = par::map_slice(&chunks, |chunk| -> Result<Vec<Vec<f64>>> {
            let mut tape = Tape::new();
            let bound = self.params.bind(&mut tape, |_| false);
            let x = tape.constant(stack_windows(chunk)?);
            let z = self.logits(&mut tape, &bound, x)?;
            let p = tape.sigmoid(z)?;
            Ok(tape.value(p).data().chunks(WINDOW).map(<[f64]>::to_vec).collect())
        });
        let mut out = Vec::with_capacity(windows.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }
}

fn forward_logits(
    width_divisor: usize,
    tape: &mut Tape,
    bound: &Bound,
    x: Var,
    mut trace: Option<&mut Vec<(String, Vec<usize>)>>,
) -> Result<Var> {
    let plan = planned_shapes(width_divisor)?;
    let batch = tape.value(x).shape()[0];
    if tape.value(x).shape() != [batch, 1, CHANNELS, WINDOW] {
        return shape_err(format!(
            "segmentation input must be [B, 1, {CHANNELS}, {WINDOW}], got {:?}",
            tape.value(x).shape()
        ));
    }
    let mut outputs: Vec<(&str, Var)> = Vec::with_capacity(LAYERS.len());
    let mut cur = x;
    for (i, (name, kind, _)) in LAYERS.iter().enumerate() {
        let co = plan[i].1[0];
        cur = match *kind {
            Kind::Conv { kh, kw, relu } => {
                let w = bound.var(&format!("seg.{name}.w"))?;
                let b = bound.var(&format!("seg.{name}.b"))?;
                let y = tape.conv2d(cur, w, b, conv_spec(kh, kw, co))?;
                if relu {
                    tape.relu(y)?
                } else {
                    y
                }
            }
            Kind::Pool => tape.maxpool2d(cur, 1, 2, 2)?,
            Kind::Up => {
                let w = bound.var(&format!("seg.{name}.w"))?;
                let b = bound.var(&format!("seg.{name}.b"))?;
                tape.upconv_time(cur, w, b)?
            }
            Kind::Concat { skip } => {
                let s = outputs
                    .iter()
                    .find(|(n, _)| *n == skip)
                    .expect("skip precedes concat")
                    .1;
                tape.concat(&[cur, s], 1)?
            }
        };
        let got = tape.value(cur).shape();
        if got[1..] != plan[i].1 {
            return shape_err(format!(
                "{name}: produced {:?}, expected {:?}",
                &got[1..],
                plan[i].1
            ));
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push((name.to_string(), got[1..].to_vec()));
        }
        outputs.push((name, cur));
    }
    tape.reshape(cur, &[batch, WINDOW])
}

fn stack_windows(ws: &[&Tensor]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(ws.len() * CHANNELS * WINDOW);
    for w in ws {
        if w.shape() != [CHANNELS, WINDOW] {
            return shape_err(format!(
                "segmentation input must be {CHANNELS}x{WINDOW}, got {:?}",
                w.shape()
            ));
        }
        data.extend_from_slice(w.data());
    }
    Tensor::new(vec![ws.len(), 1, CHANNELS, WINDOW], data)
}

/// Minimizes the time-averaged binary cross-entropy over annotated windows.
pub fn train_segnet(
    net: &mut SegNet,
    train: &[ExtractionWindow],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    if train.is_empty() {
        return Err(GaitError::Usage("empty segmentation training set".into()));
    }
    let masks: Vec<&Vec<f64>> = train
        .iter()
        .enumerate()
        .map(|(i, w)| {
            w.mask
                .as_ref()
                .ok_or_else(|| GaitError::Data(format!("training window {i} has no mask")))
        })
        .collect::<Result<_>>()?;
    let trainable = net.params.names();
    let div = net.width_divisor;
    nn::train(&mut net.params, &trainable, train.len(), cfg, |tape, bound, idx, norm| {
        let ws: Vec<&Tensor> = idx.iter().map(|&i| &train[i].values).collect();
        let x = tape.constant(stack_windows(&ws)?);
        let z = forward_logits(div, tape, bound, x, None)?;
        let p = tape.sigmoid(z)?;
        let target: Vec<f64> = idx.iter().flat_map(|&i| masks[i].iter().copied()).collect();
        tape.binary_ce(p, Tensor::new(vec![idx.len(), WINDOW], target)?, norm * WINDOW as f64)
    })
}

/// Fraction of timesteps whose thresholded prediction matches the mask.
pub fn timestep_accuracy(net: &SegNet, windows: &[ExtractionWindow], threshold: f64) -> Result<f64> {
    let vals: Vec<&Tensor> = windows.iter().map(|w| &w.values).collect();
    let probs = net.predict(&vals)?;
    let (mut hit, mut total) = (0usize, 0usize);
    for (p, w) in probs.iter().zip(windows) {
        let m = w
            .mask
            .as_ref()
            .ok_or_else(|| GaitError::Data("accuracy needs annotated windows".into()))?;
        for (pi, mi) in p.iter().zip(m) {
            hit += usize::from((*pi > threshold) == (*mi > 0.5));
            total += 1;
        }
    }
    Ok(hit as f64 / total.max(1) as f64)
}

/// Per-sample walking flags for a whole recording: non-overlapping 1024-sample
/// tiles, the tail zero-padded and its padded predictions discarded.
pub fn label_series(series: &InertialSeries, net: &SegNet, threshold: f64) -> Result<Vec<bool>> {
    let n = series.len();
    let tiles = n.div_ceil(WINDOW);
    let mut windows = Vec::with_capacity(tiles);
    for t in 0..tiles {
        let start = t * WINDOW;
        let end = (start + WINDOW).min(n);
        let mut data = vec![0.0; CHANNELS * WINDOW];
        for c in 0..CHANNELS {
            let src = &series.channel(c)[start..end];
            data[c * WINDOW..c * WINDOW + src.len()].copy_from_slice(src);
        }
        windows.push(Tensor::new(vec![CHANNELS, WINDOW], data)?);
    }
    let refs: Vec<&Tensor> = windows.iter().collect();
    let probs = net.predict(&refs)?;
    Ok(probs
        .into_iter()
        .flatten()
        .take(n)
        .map(|p| p > threshold)
        .collect())
}

/// Maximal runs of `true` lasting at least `min_len` samples, as `start..end`.
pub fn walking_runs(flags: &[bool], min_len: usize) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &f) in flags.iter().chain(std::iter::once(&false)).enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s >= min_len {
                    runs.push((s, i));
                }
                start = None;
            }
            _ => {}
        }
    }
    runs
}

/// Walking sessions of at least 2 s as sub-series.
pub fn extract_walking(
    series: &InertialSeries,
    net: &SegNet,
    threshold: f64,
) -> Result<Vec<InertialSeries>> {
    let flags = label_series(series, net, threshold)?;
    let min_len = (MIN_RUN_S * series.rate()).round() as usize;
    walking_runs(&flags, min_len)
        .into_iter()
        .map(|(s, e)| series.slice(s, e))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_width_plan_matches_layer_table() {
        let plan = planned_shapes(1).unwrap();
        let get = |n: &str| plan.iter().find(|(k, _)| *k == n).unwrap().1;
        assert_eq!(get("conv1_1"), [64, 6, 1024]);
        assert_eq!(get("pool1"), [64, 6, 512]);
        assert_eq!(get("pool2"), [128, 6, 256]);
        assert_eq!(get("conv3_3"), [256, 6, 256]);
        assert_eq!(get("upconv1"), [128, 6, 512]);
        assert_eq!(get("concat1"), [256, 6, 512]);
        assert_eq!(get("upconv2"), [64, 6, 1024]);
        assert_eq!(get("concat2"), [128, 6, 1024]);
        assert_eq!(get("conv5_2"), [64, 1, 1024]);
        assert_eq!(get("conv5_3"), [1, 1, 1024]);
        assert!(planned_shapes(0).is_err());
    }

    #[test]
    fn zero_weights_give_half_everywhere() {
        let net = SegNet::zeroed(16).unwrap();
        let w = Tensor::full(&[6, 1024], 3.0);
        let p = net.predict(&[&w]).unwrap();
        assert_eq!(p[0].len(), 1024);
        assert!(p[0].iter().all(|&v| v == 0.5));
    }

    #[test]
    fn random_weights_stay_in_unit_interval_and_trace_holds() {
        let net = SegNet::new(16, 3).unwrap();
        let data = (0..6 * 1024).map(|i| (i as f64 * 0.01).sin() * 5.0 + 9.8).collect();
        let w = Tensor::new(vec![6, 1024], data).unwrap();
        let p = net.predict(&[&w, &w]).unwrap();
        assert_eq!(p[0], p[1]);
        assert!(p[0].iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(net.predict(&[&Tensor::zeros(&[6, 512])]).is_err());
    }

    #[test]
    fn zero_lr_leaves_weights_and_same_seed_repeats() {
        let mk = |k: usize| {
            let data = (0..6 * 1024).map(|i| ((i * (k + 1)) as f64 * 0.003).cos()).collect();
            let mask = (0..1024).map(|t| if (t / 200 + k) % 2 == 0 { 1.0 } else { 0.0 }).collect();
            ExtractionWindow::new(Tensor::new(vec![6, 1024], data).unwrap(), Some(mask)).unwrap()
        };
        let train: Vec<_> = (0..3).map(mk).collect();
        let mut net = SegNet::new(32, 1).unwrap();
        let before = net.clone();
        let mut cfg = TrainConfig::new(0.0, 1, 2, 9);
        train_segnet(&mut net, &train, &cfg).unwrap();
        assert_eq!(net, before);

        cfg.lr = 1e-3;
        let mut a = before.clone();
        let mut b = before.clone();
        train_segnet(&mut a, &train, &cfg).unwrap();
        train_segnet(&mut b, &train, &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, before);
        assert!(train_segnet(&mut a, &[], &cfg).is_err());
    }

    #[test]
    fn run_filter() {
        let f = |s: &str| s.chars().map(|c| c == '1').collect::<Vec<_>>();
        assert_eq!(walking_runs(&f("0111001111"), 3), vec![(1, 4), (6, 10)]);
        assert_eq!(walking_runs(&f("0110001111"), 3), vec![(6, 10)]);
        assert!(walking_runs(&f("0000"), 1).is_empty());
    }
}

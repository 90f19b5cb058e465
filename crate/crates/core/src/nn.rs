//! Parameter storage, LSTM recurrences, losses, Adam and the chunked
//! data-parallel training loop shared by every network.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, GaitError, Result};
use crate::par;
use crate::tensor::{Tape, Tensor, Var};

/// Named, shaped parameter collection. Iteration order is the sorted name
/// order, which keeps initialization and serialization deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| GaitError::Usage(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> Vec<String> {
        self.tensors.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Names starting with `prefix`.
    pub fn names_with_prefix(&self, prefix: &str) -> Vec<String> {
        self.tensors
            .keys()
            .filter(|k| k.starts_with(prefix))
            .cloned()
            .collect()
    }

    /// Copies every tensor under `prefix` from `other`, checking shapes.
    pub fn copy_prefix_from(&mut self, other: &ParamSet, prefix: &str) -> Result<()> {
        let names = self.names_with_prefix(prefix);
        if names.is_empty() {
            return Err(GaitError::Usage(format!("no parameters under `{prefix}`")));
        }
        for name in names {
            let src = other.get(&name)?;
            let dst = self.tensors.get_mut(&name).expect("name listed above");
            if src.shape() != dst.shape() {
                return shape_err(format!(
                    "pretrained `{name}` has shape {:?}, model expects {:?}",
                    src.shape(),
                    dst.shape()
                ));
            }
            *dst = src.clone();
        }
        Ok(())
    }

    /// Puts every parameter on `tape`; names for which `trainable` is false
    /// become constants and never receive gradients.
    pub fn bind(&self, tape: &mut Tape, trainable: impl Fn(&str) -> bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let v = if trainable(name) {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (name.clone(), v)
            })
            .collect();
        Bound { vars }
    }
}

/// Parameter name → tape handle for one forward pass.
pub struct Bound {
    vars: HashMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| GaitError::Usage(format!("parameter `{name}` is not bound")))
    }
}

/// Glorot-uniform tensor in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..=limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data length agree")
}

pub const GATES: [&str; 4] = ["i", "f", "c", "o"];
pub const PEEPHOLE_GATES: [&str; 3] = ["i", "f", "o"];

/// One LSTM layer with full peephole matrices on the input, forget and output gates.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayerWeights {
    /// `[D, N]` per gate, order i, f, c, o.
    pub w_x: [Tensor; 4],
    /// `[N, N]` per gate, order i, f, c, o.
    pub w_h: [Tensor; 4],
    /// `[N, N]` peephole matrices, order i, f, o.
    pub w_c: [Tensor; 3],
    /// `[N]` per gate, order i, f, c, o.
    pub b: [Tensor; 4],
}

impl LstmLayerWeights {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmLayerWeights {
            w_x: std::array::from_fn(|_| Tensor::zeros(&[input, hidden])),
            w_h: std::array::from_fn(|_| Tensor::zeros(&[hidden, hidden])),
            w_c: std::array::from_fn(|_| Tensor::zeros(&[hidden, hidden])),
            b: std::array::from_fn(|_| Tensor::zeros(&[hidden])),
        }
    }

    pub fn filled(input: usize, hidden: usize, value: f64) -> Self {
        LstmLayerWeights {
            w_x: std::array::from_fn(|_| Tensor::full(&[input, hidden], value)),
            w_h: std::array::from_fn(|_| Tensor::full(&[hidden, hidden], value)),
            w_c: std::array::from_fn(|_| Tensor::full(&[hidden, hidden], value)),
            b: std::array::from_fn(|_| Tensor::full(&[hidden], value)),
        }
    }

    pub fn random(rng: &mut ChaCha8Rng, input: usize, hidden: usize) -> Self {
        LstmLayerWeights {
            w_x: std::array::from_fn(|_| glorot(rng, &[input, hidden], input, hidden)),
            w_h: std::array::from_fn(|_| glorot(rng, &[hidden, hidden], hidden, hidden)),
            w_c: std::array::from_fn(|_| glorot(rng, &[hidden, hidden], hidden, hidden)),
            b: std::array::from_fn(|_| Tensor::zeros(&[hidden])),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_x[0].shape()[0]
    }

    pub fn hidden_size(&self) -> usize {
        self.w_x[0].shape()[1]
    }

    fn names(prefix: &str) -> Vec<String> {
        let mut out = Vec::with_capacity(15);
        for g in GATES {
            out.push(format!("{prefix}.w_x{g}"));
        }
        for g in GATES {
            out.push(format!("{prefix}.w_h{g}"));
        }
        for g in PEEPHOLE_GATES {
            out.push(format!("{prefix}.w_c{g}"));
        }
        for g in GATES {
            out.push(format!("{prefix}.b_{g}"));
        }
        out
    }

    fn tensors(&self) -> Vec<&Tensor> {
        self.w_x
            .iter()
            .chain(&self.w_h)
            .chain(&self.w_c)
            .chain(&self.b)
            .collect()
    }

    pub fn store(&self, prefix: &str, params: &mut ParamSet) {
        for (name, t) in Self::names(prefix).into_iter().zip(self.tensors()) {
            params.insert(name, t.clone());
        }
    }

    pub fn load(prefix: &str, params: &ParamSet) -> Result<Self> {
        let names = Self::names(prefix);
        let get = |i: usize| params.get(&names[i]).cloned();
        let w = LstmLayerWeights {
            w_x: [get(0)?, get(1)?, get(2)?, get(3)?],
            w_h: [get(4)?, get(5)?, get(6)?, get(7)?],
            w_c: [get(8)?, get(9)?, get(10)?],
            b: [get(11)?, get(12)?, get(13)?, get(14)?],
        };
        w.validate()?;
        Ok(w)
    }

    fn validate(&self) -> Result<()> {
        let (d, n) = (self.input_size(), self.hidden_size());
        let ok = self.w_x.iter().all(|t| t.shape() == [d, n])
            && self.w_h.iter().chain(&self.w_c).all(|t| t.shape() == [n, n])
            && self.b.iter().all(|t| t.shape() == [n]);
        if ok {
            Ok(())
        } else {
            shape_err(format!("inconsistent LSTM layer shapes for D={d}, N={n}"))
        }
    }

    /// One recurrence step on plain tensors (`x_t` is `[D]` or `[B, D]`).
    pub fn step(&self, x_t: &Tensor, state: &LstmState) -> Result<LstmState> {
        let batch = if x_t.ndim() == 1 { 1 } else { x_t.shape()[0] };
        let x = x_t.clone().reshape(&[batch, x_t.len() / batch])?;
        let n = self.hidden_size();
        let h = state.h.clone().reshape(&[batch, n])?;
        let c = state.c.clone().reshape(&[batch, n])?;
        let mut tape = Tape::new();
        let mut params = ParamSet::new();
        self.store("l", &mut params);
        let bound = params.bind(&mut tape, |_| false);
        let vars = LstmVars::bind(&mut tape, &bound, "l")?;
        let xv = tape.constant(x);
        let hv = tape.constant(h);
        let cv = tape.constant(c);
        let (h2, c2) = vars.step(&mut tape, xv, hv, cv)?;
        Ok(LstmState {
            h: tape.value(h2).clone().reshape(state.h.shape())?,
            c: tape.value(c2).clone().reshape(state.c.shape())?,
        })
    }
}

/// Hidden and cell state of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Tensor,
    pub c: Tensor,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: Tensor::zeros(&[hidden]),
            c: Tensor::zeros(&[hidden]),
        }
    }
}

/// An LSTM layer bound to a tape, with the per-gate matrices fused column-wise.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    wx: Var,
    wh: Var,
    wc: Var,
    b: Var,
    hidden: usize,
}

impl LstmVars {
    pub fn bind(tape: &mut Tape, bound: &Bound, prefix: &str) -> Result<Self> {
        let names = LstmLayerWeights::names(prefix);
        let v: Vec<Var> = names
            .iter()
            .map(|n| bound.var(n))
            .collect::<Result<_>>()?;
        let hidden = tape.value(v[0]).shape()[1];
        let wx = tape.concat(&v[0..4], 1)?;
        let wh = tape.concat(&v[4..8], 1)?;
        let wc = tape.concat(&v[8..11], 1)?;
        let b = tape.concat(&v[11..15], 0)?;
        Ok(LstmVars {
            wx,
            wh,
            wc,
            b,
            hidden,
        })
    }

    /// Wraps already fused `wx [D,4N]`, `wh [N,4N]`, `wc [N,3N]` and `b [4N]`.
    pub fn from_fused(tape: &Tape, wx: Var, wh: Var, wc: Var, b: Var) -> Result<Self> {
        let n = tape.value(wh).shape()[0];
        let ok = tape.value(wx).shape().len() == 2
            && tape.value(wx).shape()[1] == 4 * n
            && tape.value(wh).shape() == [n, 4 * n]
            && tape.value(wc).shape() == [n, 3 * n]
            && tape.value(b).shape() == [4 * n];
        if !ok {
            return Err(GaitError::Shape("fused LSTM weights do not agree on the hidden size".into()));
        }
        Ok(LstmVars {
            wx,
            wh,
            wc,
            b,
            hidden: n,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// `i, f, o = σ(W_x x + W_h h + W_c c + b)`, `g = tanh(W_xc x + W_hc h + b_c)`,
    /// `c' = f ⊙ c + i ⊙ g`, `h' = o ⊙ tanh(c')`.
    pub fn step(&self, tape: &mut Tape, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let n = self.hidden;
        let zx = tape.matmul(x, self.wx)?;
        let zh = tape.matmul(h, self.wh)?;
        let zc = tape.matmul(c, self.wc)?;
        let z = tape.add(zx, zh)?;
        let z = tape.add_bias(z, self.b)?;
        let zi = tape.narrow(z, 1, 0, n)?;
        let zf = tape.narrow(z, 1, n, n)?;
        let zg = tape.narrow(z, 1, 2 * n, n)?;
        let zo = tape.narrow(z, 1, 3 * n, n)?;
        let pi = tape.narrow(zc, 1, 0, n)?;
        let pf = tape.narrow(zc, 1, n, n)?;
        let po = tape.narrow(zc, 1, 2 * n, n)?;
        let zi = tape.add(zi, pi)?;
        let zf = tape.add(zf, pf)?;
        let zo = tape.add(zo, po)?;
        let i = tape.sigmoid(zi)?;
        let f = tape.sigmoid(zf)?;
        let g = tape.tanh(zg)?;
        let o = tape.sigmoid(zo)?;
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c2 = tape.add(fc, ig)?;
        let tc = tape.tanh(c2)?;
        let h2 = tape.mul(o, tc)?;
        Ok((h2, c2))
    }

    /// Runs the layer over `seq` (each `[B, D]`) from zero state and returns every `h_t`.
    pub fn run(&self, tape: &mut Tape, seq: &[Var]) -> Result<Vec<Var>> {
        let batch = match seq.first() {
            Some(x) => tape.value(*x).shape()[0],
            None => return Err(GaitError::Usage("LSTM over an empty sequence".into())),
        };
        let mut h = tape.constant(Tensor::zeros(&[batch, self.hidden]));
        let mut c = tape.constant(Tensor::zeros(&[batch, self.hidden]));
        let mut out = Vec::with_capacity(seq.len());
        for &x in seq {
            let (h2, c2) = self.step(tape, x, h, c)?;
            h = h2;
            c = c2;
            out.push(h);
        }
        Ok(out)
    }
}

/// Stacked LSTM feature: the top layer's final hidden state. With
/// `backward_layer`, a single reverse-direction layer also runs over the
/// input and its final state (aligned with `t = 1`) is appended.
pub fn lstm_forward(
    tape: &mut Tape,
    seq: &[Var],
    layers: &[LstmVars],
    backward_layer: Option<&LstmVars>,
) -> Result<Var> {
    if seq.is_empty() {
        return Err(GaitError::Usage("LSTM over an empty sequence".into()));
    }
    if layers.is_empty() {
        return Err(GaitError::Usage("LSTM with no layers".into()));
    }
    let mut hs = seq.to_vec();
    for layer in layers {
        hs = layer.run(tape, &hs)?;
    }
    let fwd = *hs.last().expect("non-empty sequence");
    match backward_layer {
        None => Ok(fwd),
        Some(bl) => {
            let rev: Vec<Var> = seq.iter().rev().copied().collect();
            let bh = bl.run(tape, &rev)?;
            let last = *bh.last().expect("non-empty sequence");
            tape.concat(&[fwd, last], 1)
        }
    }
}

/// One-hot label over `n` classes.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVector {
    values: Vec<f64>,
}

impl LabelVector {
    pub fn one_hot(class: usize, n: usize) -> Result<Self> {
        if class >= n {
            return Err(GaitError::Usage(format!("class {class} out of range for {n} classes")));
        }
        let mut values = vec![0.0; n];
        values[class] = 1.0;
        Ok(LabelVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn class(&self) -> usize {
        self.values.iter().position(|&v| v == 1.0).unwrap_or(0)
    }
}

/// `−Σ_i [o'_i ln o_i + (1−o'_i) ln(1−o_i)]` with `o` clamped away from 0 and 1.
pub fn cross_entropy(o: &Tensor, truth: &LabelVector) -> Result<f64> {
    if o.len() != truth.values.len() {
        return shape_err(format!(
            "prediction width {} vs label width {}",
            o.len(),
            truth.values.len()
        ));
    }
    Ok(crate::tensor::binary_ce_value(o.data(), &truth.values))
}

/// Mean over time of the per-step binary cross-entropy.
pub fn binary_ce_per_step(probs: &Tensor, mask: &Tensor) -> Result<f64> {
    if probs.len() != mask.len() {
        return shape_err(format!("{} probabilities vs {} mask entries", probs.len(), mask.len()));
    }
    Ok(crate::tensor::binary_ce_value(probs.data(), mask.data()) / probs.len() as f64)
}

/// Adam with bias correction (β1 = 0.9, β2 = 0.999, ε = 1e-8).
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn update(&mut self, params: &mut ParamSet, grads: &[(String, Tensor)]) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, g) in grads {
            let p = params
                .get_mut(name)
                .ok_or_else(|| GaitError::Usage(format!("no parameter `{name}` to update")))?;
            if p.shape() != g.shape() {
                return shape_err(format!(
                    "gradient for `{name}` is {:?}, parameter is {:?}",
                    g.shape(),
                    p.shape()
                ));
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let (b1, b2) = (self.beta1, self.beta2);
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *pi -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`; returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [(String, Tensor)], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|(_, g)| g.norm_sq()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for (_, g) in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Global-norm gradient clip; `None` disables clipping.
    pub clip: Option<f64>,
    /// Samples per tape. Fixed so results do not depend on the thread count.
    pub chunk: usize,
}

impl TrainConfig {
    pub fn new(lr: f64, epochs: usize, batch: usize, seed: u64) -> Self {
        TrainConfig {
            lr,
            epochs,
            batch,
            seed,
            clip: Some(5.0),
            chunk: 16,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
}

/// Minibatch Adam over `n` samples.
///
/// `loss(tape, bound, indices, batch_len)` must return the summed loss of
/// `indices` divided by `batch_len`, so chunk losses add up to the batch
/// mean. Chunks run through [`par::map_slice`] and their gradients are summed
/// in chunk order.
pub fn train<F>(
    params: &mut ParamSet,
    trainable: &[String],
    n: usize,
    cfg: &TrainConfig,
    loss: F,
) -> Result<TrainLog>
where
    F: Fn(&mut Tape, &Bound, &[usize], f64) -> Result<Var> + Sync,
{
    if n == 0 {
        return Err(GaitError::Usage("empty training set".into()));
    }
    if cfg.batch == 0 || cfg.chunk == 0 {
        return Err(GaitError::Usage("batch and chunk sizes must be >= 1".into()));
    }
    let trainable_set: std::collections::HashSet<&str> =
        trainable.iter().map(String::as_str).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.lr);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch) {
            let norm = batch.len() as f64;
            let chunks: Vec<&[usize]> = batch.chunks(cfg.chunk).collect();
            let shared: &ParamSet = params;
            let results = par::map_slice(&chunks, |idx| -> Result<(f64, Vec<Tensor>)> {
                let mut tape = Tape::new();
                let bound = shared.bind(&mut tape, |name| trainable_set.contains(name));
                let l = loss(&mut tape, &bound, idx, norm)?;
                let lv = tape.value(l).data()[0];
                let mut g = tape.backward(l)?;
                let grads = trainable
                    .iter()
                    .map(|name| Ok(g.take(bound.var(name)?)))
                    .collect::<Result<Vec<_>>>()?;
                Ok((lv, grads))
            });
            let mut total: Option<Vec<Tensor>> = None;
            let mut batch_loss = 0.0;
            for r in results {
                let (lv, grads) = r?;
                batch_loss += lv;
                match &mut total {
                    None => total = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            a.add_assign(g);
                        }
                    }
                }
            }
            let mut named: Vec<(String, Tensor)> = trainable
                .iter()
                .cloned()
                .zip(total.expect("at least one chunk per batch"))
                .collect();
            if let Some(max) = cfg.clip {
                clip_global_norm(&mut named, max);
            }
            adam.update(params, &named)?;
            epoch_loss += batch_loss * norm;
        }
        log.epoch_loss.push(epoch_loss / n as f64);
    }
    Ok(log)
}

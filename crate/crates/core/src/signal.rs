//! Acceleration magnitude, step segmentation, windowing, interpolation and
//! pair alignment for six-channel inertial recordings.

use crate::error::{shape_err, GaitError, Result};
use crate::tensor::Tensor;

/// Row order used everywhere: acc x, y, z, gyr x, y, z.
pub const CHANNELS: usize = 6;
pub const SAMPLE_LEN: usize = 128;

pub const STEP_WINDOW_S: f64 = 0.8;
pub const STEP_MIN_ACC: f64 = 10.0;
pub const STEP_MIN_GAP_S: f64 = 0.8;
pub const STEP_MAX_GAP_S: f64 = 1.6;

#[derive(Clone, Debug, PartialEq)]
pub struct InertialSeries {
    timestamps_ms: Vec<f64>,
    channels: [Vec<f64>; CHANNELS],
    rate: f64,
}

impl InertialSeries {
    pub fn new(timestamps_ms: Vec<f64>, channels: [Vec<f64>; CHANNELS], rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(GaitError::Data(format!("sampling rate must be positive, got {rate}")));
        }
        let n = timestamps_ms.len();
        if let Some(c) = channels.iter().position(|c| c.len() != n) {
            return Err(GaitError::Data(format!(
                "channel {c} has {} values but there are {n} timestamps",
                channels[c].len()
            )));
        }
        if let Some(i) = timestamps_ms.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(GaitError::Data(format!(
                "timestamps not strictly increasing at index {}",
                i + 1
            )));
        }
        if channels.iter().flatten().chain(&timestamps_ms).any(|v| !v.is_finite()) {
            return Err(GaitError::Data("non-finite value in recording".into()));
        }
        Ok(InertialSeries {
            timestamps_ms,
            channels,
            rate,
        })
    }

    /// Evenly spaced timestamps starting at 0.
    pub fn uniform(channels: [Vec<f64>; CHANNELS], rate: f64) -> Result<Self> {
        let n = channels[0].len();
        let ts = (0..n).map(|i| i as f64 * 1000.0 / rate).collect();
        Self::new(ts, channels, rate)
    }

    pub fn len(&self) -> usize {
        self.timestamps_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps_ms.is_empty()
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn timestamps_ms(&self) -> &[f64] {
        &self.timestamps_ms
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>; CHANNELS] {
        &self.channels
    }

    /// Samples `start..end` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> Result<InertialSeries> {
        if start >= end || end > self.len() {
            return Err(GaitError::Usage(format!(
                "slice {start}..{end} out of range for {} samples",
                self.len()
            )));
        }
        Ok(InertialSeries {
            timestamps_ms: self.timestamps_ms[start..end].to_vec(),
            channels: std::array::from_fn(|c| self.channels[c][start..end].to_vec()),
            rate: self.rate,
        })
    }

    /// Columns `start..end` as a `[6, end - start]` tensor.
    pub fn matrix(&self, start: usize, end: usize) -> Result<Tensor> {
        if start >= end || end > self.len() {
            return Err(GaitError::Usage(format!(
                "columns {start}..{end} out of range for {} samples",
                self.len()
            )));
        }
        let mut data = Vec::with_capacity(CHANNELS * (end - start));
        for c in &self.channels {
            data.extend_from_slice(&c[start..end]);
        }
        Tensor::new(vec![CHANNELS, end - start], data)
    }
}

/// `sqrt(ax² + ay² + az²)` per sample.
pub fn magnitude(series: &InertialSeries) -> Vec<f64> {
    let [ax, ay, az, ..] = &series.channels;
    ax.iter()
        .zip(ay)
        .zip(az)
        .map(|((x, y), z)| (x * x + y * y + z * z).sqrt())
        .collect()
}

/// Step separation points, grouped into runs whose consecutive gaps all lie
/// in the allowed range. A gap longer than the maximum starts a new run;
/// runs with fewer than two points are dropped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepBoundaries {
    chains: Vec<Vec<usize>>,
}

impl StepBoundaries {
    pub fn from_chains(chains: Vec<Vec<usize>>) -> Self {
        StepBoundaries { chains }
    }

    pub fn chains(&self) -> &[Vec<usize>] {
        &self.chains
    }

    /// Every boundary in ascending order.
    pub fn indices(&self) -> Vec<usize> {
        self.chains.iter().flatten().copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }
}

/// True when `i` is the maximum of its centered window: no later value in the
/// window is larger and every earlier value is strictly smaller, so a flat top
/// yields only its first sample. Points whose window would run past either
/// end of the series are never candidates.
fn is_window_max(acc_o: &[f64], i: usize, half: usize) -> bool {
    if i < half || i + half >= acc_o.len() {
        return false;
    }
    let (lo, hi) = (i - half, i + half);
    let v = acc_o[i];
    acc_o[lo..i].iter().all(|&u| u < v) && acc_o[i + 1..=hi].iter().all(|&u| u <= v)
}

/// Step detection with sample-index time (`t = i / rate`).
pub fn detect_steps(acc_o: &[f64], rate: f64) -> StepBoundaries {
    let ts: Vec<f64> = (0..acc_o.len()).map(|i| i as f64 * 1000.0 / rate).collect();
    detect_steps_timed(acc_o, &ts, rate)
}

/// Candidates are centered ±0.4 s maxima above 10 m/s². They are accepted
/// greedily left to right: one closer than 0.8 s to the last accepted point
/// is dropped; one further than 1.6 s starts a new run.
pub fn detect_steps_timed(acc_o: &[f64], timestamps_ms: &[f64], rate: f64) -> StepBoundaries {
    let n = acc_o.len().min(timestamps_ms.len());
    if n == 0 || !(rate > 0.0) {
        return StepBoundaries::default();
    }
    let acc_o = &acc_o[..n];
    let half = ((STEP_WINDOW_S / 2.0) * rate).round() as usize;
    let min_gap = STEP_MIN_GAP_S * 1000.0;
    let max_gap = STEP_MAX_GAP_S * 1000.0;
    let mut chains: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for i in 0..n {
        if acc_o[i] <= STEP_MIN_ACC || !is_window_max(acc_o, i, half) {
            continue;
        }
        if let Some(&last) = current.last() {
            let gap = timestamps_ms[i] - timestamps_ms[last];
            if gap < min_gap {
                continue;
            }
            if gap > max_gap {
                chains.push(std::mem::take(&mut current));
            }
        }
        current.push(i);
    }
    chains.push(current);
    chains.retain(|c| c.len() >= 2);
    StepBoundaries { chains }
}

/// Two-step segments `[b_i, b_{i+2}]` (inclusive) within each run. With
/// `overlap_steps = 1` neighbours share a step; with 0 they only share the
/// boundary sample.
pub fn extract_two_step_samples(
    series: &InertialSeries,
    boundaries: &StepBoundaries,
    overlap_steps: usize,
) -> Result<Vec<Tensor>> {
    let stride = match overlap_steps {
        0 => 2,
        1 => 1,
        other => {
            return Err(GaitError::Usage(format!(
                "step overlap must be 0 or 1, got {other}"
            )))
        }
    };
    let mut out = Vec::new();
    for chain in boundaries.chains() {
        let mut i = 0;
        while i + 2 < chain.len() {
            let (a, b) = (chain[i], chain[i + 2]);
            if b >= series.len() {
                return Err(GaitError::Usage(format!(
                    "boundary {b} outside series of {} samples",
                    series.len()
                )));
            }
            out.push(series.matrix(a, b + 1)?);
            i += stride;
        }
    }
    Ok(out)
}

/// Per-row linear interpolation of `[C, L]` onto `target` evenly spaced
/// points; the first and last columns are reproduced exactly.
pub fn interpolate_to_length(segment: &Tensor, target: usize) -> Result<Tensor> {
    if segment.ndim() != 2 {
        return shape_err(format!("expected a [C, L] segment, got {:?}", segment.shape()));
    }
    let (c, l) = (segment.shape()[0], segment.shape()[1]);
    if l < 2 || target < 2 {
        return shape_err(format!("interpolation needs L >= 2 and target >= 2, got {l} -> {target}"));
    }
    let mut out = Vec::with_capacity(c * target);
    for row in segment.data().chunks(l) {
        for j in 0..target {
            let x = (j * (l - 1)) as f64 / (target - 1) as f64;
            let i0 = x.floor() as usize;
            if i0 >= l - 1 {
                out.push(row[l - 1]);
            } else {
                let f = x - i0 as f64;
                out.push(if f == 0.0 {
                    row[i0]
                } else {
                    row[i0] + f * (row[i0 + 1] - row[i0])
                });
            }
        }
    }
    Tensor::new(vec![c, target], out)
}

/// Fixed-length windows (`window_s`, shifted by `window_s - overlap_s`); the
/// trailing partial window is discarded.
pub fn window_fixed(series: &InertialSeries, window_s: f64, overlap_s: f64) -> Result<Vec<Tensor>> {
    let window = (window_s * series.rate()).round() as usize;
    let overlap = (overlap_s * series.rate()).round() as usize;
    if window == 0 || overlap >= window {
        return Err(GaitError::Usage(format!(
            "window of {window} samples with overlap {overlap} is invalid"
        )));
    }
    let stride = window - overlap;
    let mut out = Vec::new();
    let mut start = 0;
    while start + window <= series.len() {
        out.push(series.matrix(start, start + window)?);
        start += stride;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SampleOrigin {
    TwoStepInterp,
    TimeFixed,
}

/// One `6 x 128` gait sample with its subject label.
#[derive(Clone, Debug, PartialEq)]
pub struct GaitSample {
    values: Tensor,
    pub subject: usize,
    pub origin: SampleOrigin,
}

impl GaitSample {
    pub fn new(values: Tensor, subject: usize, origin: SampleOrigin) -> Result<Self> {
        if values.shape() != [CHANNELS, SAMPLE_LEN] {
            return shape_err(format!(
                "gait sample must be {CHANNELS}x{SAMPLE_LEN}, got {:?}",
                values.shape()
            ));
        }
        values.ensure_finite("gait sample")?;
        Ok(GaitSample {
            values,
            subject,
            origin,
        })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Alignment {
    /// `6 x 256`: the second sample's columns follow the first's.
    Horizontal,
    /// `12 x 128`: the second sample's rows sit below the first's.
    Vertical,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    pub values: Tensor,
    pub same_subject: bool,
    pub alignment: Alignment,
}

impl SamplePair {
    /// Recovers the two constituent samples.
    pub fn split(&self) -> Result<(Tensor, Tensor)> {
        match self.alignment {
            Alignment::Horizontal => Ok((
                self.values.narrow(1, 0, SAMPLE_LEN)?,
                self.values.narrow(1, SAMPLE_LEN, SAMPLE_LEN)?,
            )),
            Alignment::Vertical => Ok((
                self.values.narrow(0, 0, CHANNELS)?,
                self.values.narrow(0, CHANNELS, CHANNELS)?,
            )),
        }
    }
}

pub fn align_pair(a: &GaitSample, b: &GaitSample, mode: Alignment) -> Result<SamplePair> {
    let values = match mode {
        Alignment::Horizontal => Tensor::concat(&[a.values(), b.values()], 1)?,
        Alignment::Vertical => Tensor::concat(&[a.values(), b.values()], 0)?,
    };
    Ok(SamplePair {
        values,
        same_subject: a.subject == b.subject,
        alignment: mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn series_from_acc(acc: &[[f64; 3]]) -> InertialSeries {
        let n = acc.len();
        let ch = std::array::from_fn(|c| {
            if c < 3 {
                acc.iter().map(|a| a[c]).collect()
            } else {
                vec![0.0; n]
            }
        });
        InertialSeries::uniform(ch, 50.0).unwrap()
    }

    /// Independent check of the three step rules on an index list.
    /// The maximality window is `half` samples either side (0.4 s at 50 Hz).
    fn violates_rules(acc_o: &[f64], ts: &[f64], half: usize, idx: &[usize]) -> Option<String> {
        for &i in idx {
            if acc_o[i] <= STEP_MIN_ACC {
                return Some(format!("{i}: below threshold"));
            }
            for j in 0..acc_o.len() {
                if j.abs_diff(i) <= half && acc_o[j] > acc_o[i] {
                    return Some(format!("{i}: {j} is larger within the window"));
                }
            }
        }
        for w in idx.windows(2) {
            let gap = ts[w[1]] - ts[w[0]];
            if !(800.0 - 1e-9..=1600.0 + 1e-9).contains(&gap) {
                return Some(format!("gap {gap} ms between {} and {}", w[0], w[1]));
            }
        }
        None
    }

    #[test]
    fn magnitude_examples() {
        let s = series_from_acc(&[[3.0, 4.0, 0.0], [0.0, 0.0, 9.81]]);
        assert_eq!(magnitude(&s), vec![5.0, 9.81]);
        let r = series_from_acc(&[[-4.0, 3.0, 0.0], [0.0, 0.0, 9.81]]);
        assert_eq!(magnitude(&r), vec![5.0, 9.81]);
    }

    proptest! {
        #[test]
        fn magnitude_is_rotation_invariant(
            v in prop::array::uniform3(-20.0f64..20.0),
            q in prop::array::uniform4(-1.0f64..1.0),
        ) {
            let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assume!(n > 1e-3);
            let [w, x, y, z] = q.map(|c| c / n);
            let r = [
                [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
                [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
                [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
            ];
            let rv: [f64; 3] = std::array::from_fn(|i| (0..3).map(|j| r[i][j] * v[j]).sum());
            let a = magnitude(&series_from_acc(&[v]))[0];
            let b = magnitude(&series_from_acc(&[rv]))[0];
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn detected_steps_satisfy_rules(
            vals in prop::collection::vec(8.0f64..14.0, 60..400),
            jitter in prop::collection::vec(0.0f64..6.0, 400),
        ) {
            let mut t = 0.0;
            let ts: Vec<f64> = jitter.iter().take(vals.len()).map(|j| { t += 17.0 + j; t }).collect();
            let b = detect_steps_timed(&vals, &ts, 50.0);
            for chain in b.chains() {
                prop_assert!(chain.len() >= 2);
                let v = violates_rules(&vals, &ts, 20, chain);
                prop_assert!(v.is_none(), "{:?}", v);
            }
            let all = b.indices();
            prop_assert!(all.windows(2).all(|w| w[0] < w[1]));
        }
    }

    fn raised_cosine(n: usize, period_s: f64, amp: f64) -> (Vec<f64>, Vec<usize>) {
        let rate = 50.0;
        let acc: Vec<f64> = (0..n)
            .map(|i| {
                let ph = i as f64 / rate / period_s;
                9.81 + (amp - 9.81) * (0.5 + 0.5 * (2.0 * std::f64::consts::PI * ph).cos()).powi(4)
            })
            .collect();
        let truth = (0..)
            .map(|k| (k as f64 * period_s * rate).round() as usize)
            .take_while(|&i| i < n)
            .filter(|&i| i >= 20 && i + 20 < n)
            .collect();
        (acc, truth)
    }

    #[test]
    fn one_boundary_per_second_on_periodic_gait() {
        let (acc, truth) = raised_cosine(500, 1.0, 12.0);
        let b = detect_steps(&acc, 50.0);
        assert_eq!(b.chains().len(), 1);
        let got = b.indices();
        assert_eq!(got.len(), truth.len());
        for (g, t) in got.iter().zip(&truth) {
            assert!(g.abs_diff(*t) <= 2);
        }
        let ts: Vec<f64> = (0..acc.len()).map(|i| i as f64 * 20.0).collect();
        assert_eq!(violates_rules(&acc, &ts, 20, &got), None);
    }

    #[test]
    fn flat_signal_has_no_steps() {
        assert!(detect_steps(&vec![9.81; 300], 50.0).is_empty());
        assert!(detect_steps(&[], 50.0).is_empty());
    }

    #[test]
    fn peaks_closer_than_minimum_gap_are_thinned() {
        // peaks every 0.5 s: each kept peak must be followed by a dropped one
        let (acc, truth) = raised_cosine(500, 0.5, 12.0);
        let got = detect_steps(&acc, 50.0).indices();
        let expected: Vec<usize> = truth.iter().step_by(2).copied().collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn long_pause_splits_runs() {
        let (mut acc, _) = raised_cosine(600, 1.0, 12.0);
        for v in &mut acc[220..380] {
            *v = 9.81;
        }
        let b = detect_steps(&acc, 50.0);
        assert_eq!(b.chains().len(), 2);
        let ts: Vec<f64> = (0..acc.len()).map(|i| i as f64 * 20.0).collect();
        for c in b.chains() {
            assert_eq!(violates_rules(&acc, &ts, 20, c), None);
        }
    }

    fn indexed_series(n: usize) -> InertialSeries {
        let ch = std::array::from_fn(|c| (0..n).map(|i| (c * 1000 + i) as f64).collect());
        InertialSeries::uniform(ch, 50.0).unwrap()
    }

    #[test]
    fn two_step_extraction_counts() {
        let s = indexed_series(300);
        let b = StepBoundaries::from_chains(vec![vec![0, 50, 100, 150, 200]]);
        let with = extract_two_step_samples(&s, &b, 1).unwrap();
        let spans: Vec<(f64, f64)> = with
            .iter()
            .map(|t| (t.data()[0], t.data()[t.shape()[1] - 1]))
            .collect();
        assert_eq!(spans, vec![(0.0, 100.0), (50.0, 150.0), (100.0, 200.0)]);
        let without = extract_two_step_samples(&s, &b, 0).unwrap();
        assert_eq!(without.len(), 2);
        assert_eq!(without[1].data()[0], 100.0);
        let two = StepBoundaries::from_chains(vec![vec![0, 50]]);
        assert!(extract_two_step_samples(&s, &two, 1).unwrap().is_empty());
        assert!(extract_two_step_samples(&s, &b, 2).is_err());
    }

    #[test]
    fn interpolation_examples() {
        let x = Tensor::new(vec![1, 128], (0..128).map(|i| (i as f64).sin()).collect()).unwrap();
        assert_eq!(interpolate_to_length(&x, 128).unwrap(), x);

        let ramp = Tensor::new(vec![1, 64], (0..64).map(|i| i as f64 / 63.0).collect()).unwrap();
        let y = interpolate_to_length(&ramp, 128).unwrap();
        assert_eq!(y.data()[0], 0.0);
        assert_eq!(y.data()[127], 1.0);
        for (j, v) in y.data().iter().enumerate() {
            assert_abs_diff_eq!(*v, j as f64 / 127.0, epsilon = 1e-12);
        }

        let c = Tensor::full(&[6, 77], 3.25);
        assert!(interpolate_to_length(&c, 128).unwrap().data().iter().all(|&v| v == 3.25));
        assert!(interpolate_to_length(&Tensor::full(&[6, 1], 1.0), 128).is_err());
    }

    proptest! {
        #[test]
        fn interpolation_is_exact_on_affine_rows(l in 2usize..300, a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let seg = Tensor::new(vec![1, l], (0..l).map(|i| a + b * i as f64 / (l - 1) as f64).collect()).unwrap();
            let y = interpolate_to_length(&seg, 128).unwrap();
            prop_assert_eq!(y.data()[0], seg.data()[0]);
            prop_assert_eq!(y.data()[127], seg.data()[l - 1]);
            for (j, v) in y.data().iter().enumerate() {
                prop_assert!((v - (a + b * j as f64 / 127.0)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn window_counts() {
        let s = indexed_series(512);
        assert_eq!(window_fixed(&s, 2.56, 1.28).unwrap().len(), 7);
        assert_eq!(window_fixed(&s, 2.56, 0.0).unwrap().len(), 4);
        assert!(window_fixed(&indexed_series(100), 2.56, 1.28).unwrap().is_empty());
        let w = window_fixed(&s, 2.56, 1.28).unwrap();
        assert_eq!(w[1].shape(), &[6, 128]);
        assert_eq!(w[1].data()[0], 64.0);
        for n in [128usize, 129, 200, 1000] {
            let k = window_fixed(&indexed_series(n), 2.56, 1.28).unwrap().len();
            assert_eq!(k, (n - 128) / 64 + 1);
        }
    }

    #[test]
    fn align_and_split_round_trip() {
        let mk = |seed: f64, subject| {
            let d = (0..768).map(|i| (i as f64 * seed).sin()).collect();
            GaitSample::new(Tensor::new(vec![6, 128], d).unwrap(), subject, SampleOrigin::TimeFixed)
                .unwrap()
        };
        let (a, b) = (mk(0.1, 3), mk(0.37, 3));
        let h = align_pair(&a, &b, Alignment::Horizontal).unwrap();
        assert_eq!(h.values.shape(), &[6, 256]);
        assert!(h.same_subject);
        let v = align_pair(&a, &b, Alignment::Vertical).unwrap();
        assert_eq!(v.values.shape(), &[12, 128]);
        for p in [&h, &v] {
            let (x, y) = p.split().unwrap();
            assert_eq!(&x, a.values());
            assert_eq!(&y, b.values());
        }
        assert!(!align_pair(&a, &mk(0.2, 4), Alignment::Vertical).unwrap().same_subject);
        assert!(GaitSample::new(Tensor::zeros(&[6, 64]), 0, SampleOrigin::TimeFixed).is_err());
    }

    #[test]
    fn series_validation() {
        let ch: [Vec<f64>; 6] = std::array::from_fn(|_| vec![0.0; 3]);
        assert!(InertialSeries::new(vec![0.0, 20.0, 20.0], ch.clone(), 50.0).is_err());
        assert!(InertialSeries::new(vec![0.0, 20.0], ch.clone(), 50.0).is_err());
        assert!(InertialSeries::new(vec![0.0, 20.0, 40.0], ch, 0.0).is_err());
    }
}

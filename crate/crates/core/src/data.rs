//! Recording ingestion, the synthetic gait generator, dataset recipes,
//! key=value manifests and the binary sample container.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{GaitError, Result};
use crate::segnet::{ExtractionWindow, WINDOW};
use crate::signal::{
    self, align_pair, Alignment, GaitSample, InertialSeries, SampleOrigin, CHANNELS, SAMPLE_LEN,
};
use crate::tensor::Tensor;

pub const GRAVITY: f64 = 9.81;
pub const NOMINAL_RATE: f64 = 50.0;

// ---------------------------------------------------------------------------
// Ingestion

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delimiter {
    Comma,
    Whitespace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeUnit {
    Seconds,
    Milliseconds,
    Nanoseconds,
}

impl TimeUnit {
    fn to_ms(self, v: f64) -> f64 {
        match self {
            TimeUnit::Seconds => v * 1000.0,
            TimeUnit::Milliseconds => v,
            TimeUnit::Nanoseconds => v / 1e6,
        }
    }
}

/// Drops 3 s stretches in which the phone is judged static.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StaticFilter {
    pub window_s: f64,
    /// Standard deviation of `ACC_o` (m/s²) below which a window is static.
    pub max_std: f64,
}

impl Default for StaticFilter {
    fn default() -> Self {
        StaticFilter {
            window_s: 3.0,
            max_std: 0.05,
        }
    }
}

/// How to read a delimited 7-column recording.
#[derive(Clone, Debug, PartialEq)]
pub struct FormatConfig {
    pub delimiter: Delimiter,
    /// Source column of timestamp, acc x/y/z and gyr x/y/z, in that order.
    pub columns: [usize; 7],
    pub time_unit: TimeUnit,
    /// Sampling rate of the file before decimation.
    pub rate: f64,
    /// Keep every second row (100 Hz input to 50 Hz).
    pub decimate: bool,
    pub static_filter: Option<StaticFilter>,
    /// Lines starting with this are skipped.
    pub comment: char,
    /// File extension of recordings when scanning a directory.
    pub extension: String,
}

impl Default for FormatConfig {
    fn default() -> Self {
        FormatConfig {
            delimiter: Delimiter::Comma,
            columns: [0, 1, 2, 3, 4, 5, 6],
            time_unit: TimeUnit::Milliseconds,
            rate: NOMINAL_RATE,
            decimate: false,
            static_filter: None,
            comment: '#',
            extension: "csv".into(),
        }
    }
}

impl FormatConfig {
    /// Applies `key=value` overrides (`delimiter`, `columns`, `time_unit`,
    /// `rate`, `decimate`, `extension`, `static_filter`, `static_max_std`).
    pub fn apply(&mut self, settings: &BTreeMap<String, String>) -> Result<()> {
        for (k, v) in settings {
            let bad = |what: &str| GaitError::Usage(format!("bad {what} `{v}`"));
            match k.as_str() {
                "delimiter" => {
                    self.delimiter = match v.as_str() {
                        "comma" | "," => Delimiter::Comma,
                        "whitespace" | "space" | "tab" => Delimiter::Whitespace,
                        _ => return Err(bad("delimiter")),
                    }
                }
                "columns" => {
                    let cols: Vec<usize> = v
                        .split(',')
                        .map(|c| c.trim().parse().map_err(|_| bad("column list")))
                        .collect::<Result<_>>()?;
                    self.columns = cols.try_into().map_err(|_| bad("column list (need 7)"))?;
                }
                "time_unit" => {
                    self.time_unit = match v.as_str() {
                        "s" => TimeUnit::Seconds,
                        "ms" => TimeUnit::Milliseconds,
                        "ns" => TimeUnit::Nanoseconds,
                        _ => return Err(bad("time unit")),
                    }
                }
                "extension" => self.extension = v.trim_start_matches('.').to_string(),
                "rate" => self.rate = v.parse().map_err(|_| bad("rate"))?,
                "decimate" => self.decimate = v.parse().map_err(|_| bad("decimate flag"))?,
                "static_filter" => {
                    let on: bool = v.parse().map_err(|_| bad("static_filter flag"))?;
                    self.static_filter = on.then(StaticFilter::default);
                }
                "static_max_std" => {
                    let s: f64 = v.parse().map_err(|_| bad("static_max_std"))?;
                    self.static_filter.get_or_insert_with(StaticFilter::default).max_std = s;
                }
                _ => {}
            }
        }
        Ok(())
    }
}

pub fn parse_recording(path: &Path, cfg: &FormatConfig) -> Result<InertialSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| GaitError::io(path, e))?;
    parse_recording_str(&text, path, cfg)
}

/// Strict parse; every malformed row is reported with its 1-based line number.
pub fn parse_recording_str(text: &str, path: &Path, cfg: &FormatConfig) -> Result<InertialSeries> {
    let perr = |line: usize, msg: String| GaitError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let width = cfg.columns.iter().max().map_or(7, |m| m + 1).max(7);
    let mut ts = Vec::new();
    let mut ch: [Vec<f64>; CHANNELS] = Default::default();
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with(cfg.comment) {
            continue;
        }
        let fields: Vec<&str> = match cfg.delimiter {
            Delimiter::Comma => trimmed.split(',').map(str::trim).collect(),
            Delimiter::Whitespace => trimmed.split_whitespace().collect(),
        };
        if fields.len() != width {
            return Err(perr(
                line_no,
                format!("expected {width} columns, found {}", fields.len()),
            ));
        }
        let mut vals = [0.0; 7];
        for (slot, &col) in vals.iter_mut().zip(&cfg.columns) {
            let f = fields[col];
            let v: f64 = f
                .parse()
                .map_err(|_| perr(line_no, format!("column {} is not a number: `{f}`", col + 1)))?;
            if !v.is_finite() {
                return Err(perr(line_no, format!("column {} is not finite", col + 1)));
            }
            *slot = v;
        }
        let t = cfg.time_unit.to_ms(vals[0]);
        if let Some(&prev) = ts.last() {
            if t <= prev {
                return Err(GaitError::Data(format!(
                    "{}:{line_no}: timestamp {t} ms does not increase (previous {prev} ms)",
                    path.display()
                )));
            }
        }
        ts.push(t);
        for c in 0..CHANNELS {
            ch[c].push(vals[c + 1]);
        }
    }
    if ts.is_empty() {
        return Err(GaitError::Data(format!("{}: no samples", path.display())));
    }
    let mut rate = cfg.rate;
    if cfg.decimate {
        ts = ts.into_iter().step_by(2).collect();
        for c in &mut ch {
            *c = c.iter().copied().step_by(2).collect();
        }
        rate /= 2.0;
    }
    let series = InertialSeries::new(ts, ch, rate)?;
    match cfg.static_filter {
        Some(f) => drop_static(&series, f),
        None => Ok(series),
    }
}

/// Removes non-overlapping windows whose `ACC_o` barely varies.
pub fn drop_static(series: &InertialSeries, filter: StaticFilter) -> Result<InertialSeries> {
    let w = ((filter.window_s * series.rate()).round() as usize).max(1);
    let acc = signal::magnitude(series);
    let mut keep = vec![true; series.len()];
    let mut start = 0;
    while start + w <= series.len() {
        let seg = &acc[start..start + w];
        let mean = seg.iter().sum::<f64>() / w as f64;
        let var = seg.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w as f64;
        if var.sqrt() < filter.max_std {
            keep[start..start + w].iter_mut().for_each(|k| *k = false);
        }
        start += w;
    }
    let idx: Vec<usize> = (0..series.len()).filter(|&i| keep[i]).collect();
    if idx.is_empty() {
        return Err(GaitError::Data("recording is entirely static".into()));
    }
    let ts = idx.iter().map(|&i| series.timestamps_ms()[i]).collect();
    let ch = std::array::from_fn(|c| idx.iter().map(|&i| series.channel(c)[i]).collect());
    InertialSeries::new(ts, ch, series.rate())
}

/// Canonical comma-separated 7-column text.
pub fn format_recording(series: &InertialSeries) -> String {
    let mut out = String::from("# timestamp_ms,acc_x,acc_y,acc_z,gyr_x,gyr_y,gyr_z\n");
    for i in 0..series.len() {
        let _ = write!(out, "{}", series.timestamps_ms()[i]);
        for c in 0..CHANNELS {
            let _ = write!(out, ",{}", series.channel(c)[i]);
        }
        out.push('\n');
    }
    out
}

pub fn write_recording(series: &InertialSeries, path: &Path) -> Result<()> {
    std::fs::write(path, format_recording(series)).map_err(|e| GaitError::io(path, e))
}

/// How a recording's subject ID is found.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubjectFrom {
    /// File stem up to the first `_` in a flat directory.
    Stem,
    /// Name of the subdirectory holding the file.
    Dir,
}

impl std::str::FromStr for SubjectFrom {
    type Err = GaitError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stem" => Ok(SubjectFrom::Stem),
            "dir" => Ok(SubjectFrom::Dir),
            _ => Err(GaitError::Usage(format!("subject_from must be stem or dir, got `{s}`"))),
        }
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut v = std::fs::read_dir(dir)
        .map_err(|e| GaitError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| GaitError::io(dir, e)))
        .collect::<Result<Vec<_>>>()?;
    v.sort();
    Ok(v)
}

fn is_recording(p: &Path, ext: &str) -> bool {
    p.is_file() && p.extension().and_then(|e| e.to_str()) == Some(ext)
}

/// `(subject, path)` of every recording with extension `ext`, sorted by path.
pub fn discover_recordings(dir: &Path, from: SubjectFrom, ext: &str) -> Result<Vec<(String, std::path::PathBuf)>> {
    let mut out = Vec::new();
    match from {
        SubjectFrom::Stem => {
            for p in sorted_entries(dir)?.into_iter().filter(|p| is_recording(p, ext)) {
                let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                let id = stem.split('_').next().unwrap_or(stem).to_string();
                out.push((id, p));
            }
        }
        SubjectFrom::Dir => {
            for d in sorted_entries(dir)?.into_iter().filter(|p| p.is_dir()) {
                let id = d.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                for p in sorted_entries(&d)?.into_iter().filter(|p| is_recording(p, ext)) {
                    out.push((id.clone(), p));
                }
            }
        }
    }
    if out.is_empty() {
        return Err(GaitError::Data(format!("no recordings under {}", dir.display())));
    }
    Ok(out)
}

/// Parses every discovered recording, in parallel.
pub fn load_recordings(dir: &Path, from: SubjectFrom, cfg: &FormatConfig) -> Result<Vec<(String, InertialSeries)>> {
    let found = discover_recordings(dir, from, &cfg.extension)?;
    crate::par::map_slice(&found, |(id, p)| Ok((id.clone(), parse_recording(p, cfg)?)))
        .into_iter()
        .collect()
}

// ---------------------------------------------------------------------------
// Synthetic gait

/// Parameters of one synthetic walker. Channel harmonics are in the body
/// frame; `orientation` rotates them into the phone frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectProfile {
    /// Gait-cycle duration in seconds.
    pub step_period: f64,
    /// Height and sharpness of the heel-strike peak on the vertical axis.
    pub peak_amp: f64,
    pub peak_kappa: f64,
    /// `[channel][harmonic]` amplitudes and phases, harmonics 1..=3.
    pub amps: [[f64; 3]; CHANNELS],
    pub phases: [[f64; 3]; CHANNELS],
    /// Delay of the gyroscope block relative to the accelerometer, in cycles.
    pub gyro_lag: f64,
    /// Body-to-phone rotation, row-major.
    pub orientation: [[f64; 3]; 3],
    pub noise: f64,
    /// Peak tilt (radians) of the slow orientation wobble.
    pub drift: f64,
    /// Relative per-cycle period jitter.
    pub jitter: f64,
}

impl SubjectProfile {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let amp_ranges: [(f64, f64); CHANNELS] = [
            (0.2, 0.8),
            (0.3, 1.0),
            (0.1, 0.5),
            (0.2, 1.0),
            (0.2, 1.0),
            (0.2, 1.0),
        ];
        let amps = amp_ranges.map(|(lo, hi)| std::array::from_fn(|_| rng.gen_range(lo..hi)));
        let phases = std::array::from_fn(|_| {
            std::array::from_fn(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        });
        SubjectProfile {
            step_period: rng.gen_range(0.95..1.3),
            peak_amp: rng.gen_range(4.5..7.0),
            peak_kappa: rng.gen_range(8.0..14.0),
            amps,
            phases,
            gyro_lag: 0.0,
            orientation: random_rotation(rng),
            noise: rng.gen_range(0.05..0.12),
            drift: rng.gen_range(0.02..0.08),
            jitter: 0.015,
        }
    }

    /// A walker with identical per-channel spectra whose gyroscope block is
    /// shifted by `lag` cycles.
    pub fn twin(&self, lag: f64) -> Self {
        SubjectProfile {
            gyro_lag: self.gyro_lag + lag,
            ..self.clone()
        }
    }

    /// Body-frame channels at gait phase `phi` (cycles).
    fn body(&self, phi: f64) -> [f64; CHANNELS] {
        let tau = std::f64::consts::TAU;
        let harm = |c: usize, p: f64| -> f64 {
            (0..3)
                .map(|h| self.amps[c][h] * ((h + 1) as f64 * tau * p + self.phases[c][h]).cos())
                .sum()
        };
        let spike = self.peak_amp * (self.peak_kappa * ((tau * phi).cos() - 1.0)).exp();
        let g = phi - self.gyro_lag;
        [
            harm(0, phi),
            harm(1, phi),
            GRAVITY + spike + harm(2, phi),
            harm(3, g),
            harm(4, g),
            harm(5, g),
        ]
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn rotate(r: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| r[i][0] * v[0] + r[i][1] * v[1] + r[i][2] * v[2])
}

fn matmul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

/// Small rotation about the x axis then the y axis.
fn tilt(ax: f64, ay: f64) -> [[f64; 3]; 3] {
    let (sx, cx) = ax.sin_cos();
    let (sy, cy) = ay.sin_cos();
    let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    matmul3(&ry, &rx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activity {
    Walk,
    Idle,
}

/// Ground truth emitted with every synthetic recording.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthTruth {
    /// 1 while walking, 0 otherwise.
    pub mask: Vec<f64>,
    /// Sample index of every heel-strike peak of the noise-free `ACC_o`.
    pub step_indices: Vec<usize>,
}

/// Renders a schedule of walking and idle stretches at 50 Hz. Each walking
/// stretch starts half a cycle before its first peak.
pub fn synth_recording(
    profile: &SubjectProfile,
    schedule: &[(Activity, f64)],
    seed: u64,
) -> Result<(InertialSeries, SynthTruth)> {
    if schedule.is_empty() || schedule.iter().any(|(_, d)| !(*d > 0.0)) {
        return Err(GaitError::Usage("schedule durations must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 1.0 / NOMINAL_RATE;
    let rho: f64 = 0.7;
    let innov = (1.0 - rho * rho).sqrt();
    let wobble_period = rng.gen_range(20.0..40.0);
    let wobble_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut noise = [0.0; CHANNELS];
    let mut ch: [Vec<f64>; CHANNELS] = Default::default();
    let mut mask = Vec::new();
    let mut steps = Vec::new();
    let mut t_global = 0usize;
    for &(act, dur) in schedule {
        let n = (dur * NOMINAL_RATE).round() as usize;
        // per-cycle periods for this stretch
        let mut phi = 0.5;
        let mut clean_acc = Vec::with_capacity(n);
        let mut phis = Vec::with_capacity(n);
        let mut period = profile.step_period;
        for i in 0..n {
            let t = (t_global + i) as f64 * dt;
            let wob = profile.drift * (std::f64::consts::TAU * t / wobble_period + wobble_phase).sin();
            let rot = matmul3(&tilt(wob, 0.6 * wob), &profile.orientation);
            let body = match act {
                Activity::Walk => profile.body(phi),
                Activity::Idle => {
                    let sway = 0.05 * (std::f64::consts::TAU * t / 7.0).sin();
                    [sway, 0.0, GRAVITY, 0.0, 0.0, 0.02 * sway]
                }
            };
            let acc = rotate(&rot, [body[0], body[1], body[2]]);
            let gyr = rotate(&rot, [body[3], body[4], body[5]]);
            let level = match act {
                Activity::Walk => profile.noise,
                Activity::Idle => 0.3 * profile.noise,
            };
            for (c, v) in acc.iter().chain(&gyr).enumerate() {
                let e: f64 = StandardNormal.sample(&mut rng);
                noise[c] = rho * noise[c] + innov * level * e;
                ch[c].push(v + noise[c]);
            }
            clean_acc.push((acc[0] * acc[0] + acc[1] * acc[1] + acc[2] * acc[2]).sqrt());
            phis.push(phi);
            mask.push(if act == Activity::Walk { 1.0 } else { 0.0 });
            let before = phi.floor();
            phi += dt / period;
            if phi.floor() > before {
                let z: f64 = StandardNormal.sample(&mut rng);
                period = profile.step_period * (1.0 + profile.jitter * z);
            }
        }
        if act == Activity::Walk {
            let cycles = phis.last().map_or(0.0, |p| p.floor()) as i64;
            for k in 1..=cycles {
                let lo = k as f64 - 0.25;
                let hi = k as f64 + 0.25;
                let cand = (0..n).filter(|&i| phis[i] >= lo && phis[i] < hi);
                let best = cand.fold(None, |b: Option<usize>, i| match b {
                    Some(j) if clean_acc[j] >= clean_acc[i] => Some(j),
                    _ => Some(i),
                });
                if let Some(i) = best {
                    if phis[i] < hi && i + 1 < n && i > 0 {
                        steps.push(t_global + i);
                    }
                }
            }
        }
        t_global += n;
    }
    let series = InertialSeries::uniform(ch, NOMINAL_RATE)?;
    Ok((
        series,
        SynthTruth {
            mask,
            step_indices: steps,
        },
    ))
}

/// One synthetic subject with its recordings.
#[derive(Clone, Debug)]
pub struct SynthSubject {
    pub id: String,
    pub profile: SubjectProfile,
    pub recordings: Vec<(InertialSeries, SynthTruth)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub subjects: usize,
    /// Subjects `0..twin_pairs` each get a twin appended at the end of the
    /// list that differs only in gyroscope lag.
    pub twin_pairs: usize,
    pub walk_s: f64,
    pub recordings: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            subjects: 10,
            twin_pairs: 2,
            walk_s: 220.0,
            recordings: 1,
            seed: 0,
        }
    }
}

/// Profiles for a corpus: `subjects - twin_pairs` independent walkers then
/// one twin per leading walker.
pub fn synth_profiles(cfg: &SynthConfig) -> Result<Vec<SubjectProfile>> {
    if cfg.subjects == 0 || 2 * cfg.twin_pairs > cfg.subjects {
        return Err(GaitError::Usage(format!(
            "{} twin pairs do not fit in {} subjects",
            cfg.twin_pairs, cfg.subjects
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = cfg.subjects - cfg.twin_pairs;
    let mut out: Vec<SubjectProfile> = (0..base).map(|_| SubjectProfile::random(&mut rng)).collect();
    for i in 0..cfg.twin_pairs {
        out.push(out[i].twin(0.25));
    }
    Ok(out)
}

/// Each subject walks continuously, padded by one idle second at both ends.
pub fn synth_walking_corpus(cfg: &SynthConfig) -> Result<Vec<SynthSubject>> {
    let profiles = synth_profiles(cfg)?;
    let per = cfg.walk_s / cfg.recordings.max(1) as f64;
    let jobs: Vec<(usize, SubjectProfile)> = profiles.into_iter().enumerate().collect();
    crate::par::map_slice(&jobs, |(i, p)| {
        let recordings = (0..cfg.recordings.max(1))
            .map(|r| {
                let schedule = [(Activity::Idle, 1.0), (Activity::Walk, per), (Activity::Idle, 1.0)];
                synth_recording(p, &schedule, mix_seed(cfg.seed, (*i * 1000 + r) as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SynthSubject {
            id: format!("S{i:03}"),
            profile: p.clone(),
            recordings,
        })
    })
    .into_iter()
    .collect()
}

/// Alternating walk and idle stretches of random length, for the extraction network.
pub fn synth_activity_recording(
    profile: &SubjectProfile,
    total_s: f64,
    seed: u64,
) -> Result<(InertialSeries, SynthTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut schedule = Vec::new();
    let mut t = 0.0;
    let mut walking = rng.gen_bool(0.5);
    while t < total_s {
        let d: f64 = if walking {
            rng.gen_range(8.0..40.0)
        } else {
            rng.gen_range(5.0..30.0)
        };
        let d = d.min(total_s - t).max(1.0);
        schedule.push((if walking { Activity::Walk } else { Activity::Idle }, d));
        t += d;
        walking = !walking;
    }
    synth_recording(profile, &schedule, mix_seed(seed, 1))
}

/// SplitMix-style seed derivation so related streams do not collide.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// Manifests

/// Sorted `key=value` document; rendering is byte-stable.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        Ok(Manifest {
            entries: parse_key_values(text, path)?,
        })
    }

    /// Hex SHA-256 of the rendered text.
    pub fn hash(&self) -> String {
        sha256_hex(self.render().as_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| GaitError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GaitError::io(path, e))?;
        Self::parse(&text, path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `key=value` lines; blank lines and `#` comments are ignored.
pub fn parse_key_values(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let (k, v) = l.split_once('=').ok_or_else(|| GaitError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: "expected key=value".into(),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Identification datasets

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IdentRecipe {
    /// Two-step segments resampled to 128 points; 1 or 0 shared steps.
    TwoStepInterp { overlap_steps: usize },
    /// 2.56 s windows with the given overlap in seconds.
    TimeFixed { overlap_s: f64 },
}

impl IdentRecipe {
    pub fn name(&self) -> &'static str {
        match self {
            IdentRecipe::TwoStepInterp { .. } => "interp",
            IdentRecipe::TimeFixed { .. } => "fixed",
        }
    }

    pub fn overlap_name(&self) -> String {
        match self {
            IdentRecipe::TwoStepInterp { overlap_steps: 1 } => "1step".into(),
            IdentRecipe::TwoStepInterp { .. } => "0".into(),
            IdentRecipe::TimeFixed { overlap_s } if *overlap_s > 0.0 => format!("{overlap_s}s"),
            IdentRecipe::TimeFixed { .. } => "0".into(),
        }
    }
}

/// Samples of one recording under `recipe`, in time order.
pub fn samples_from_series(series: &InertialSeries, recipe: IdentRecipe) -> Result<Vec<(Tensor, SampleOrigin)>> {
    match recipe {
        IdentRecipe::TwoStepInterp { overlap_steps } => {
            let acc = signal::magnitude(series);
            let b = signal::detect_steps_timed(&acc, series.timestamps_ms(), series.rate());
            signal::extract_two_step_samples(series, &b, overlap_steps)?
                .iter()
                .map(|seg| Ok((signal::interpolate_to_length(seg, SAMPLE_LEN)?, SampleOrigin::TwoStepInterp)))
                .collect()
        }
        IdentRecipe::TimeFixed { overlap_s } => Ok(signal::window_fixed(series, 2.56, overlap_s)?
            .into_iter()
            .map(|w| (w, SampleOrigin::TimeFixed))
            .collect()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentDataset {
    pub manifest: Manifest,
    /// Class names indexed by label.
    pub classes: Vec<String>,
    pub train: Vec<GaitSample>,
    pub test: Vec<GaitSample>,
}

/// Per subject: samples in time order, the first `floor(split * n)` for
/// training. Subjects with fewer than two samples are left out and listed
/// in the manifest.
pub fn build_ident_dataset(
    recordings: &[(String, InertialSeries)],
    recipe: IdentRecipe,
    split: f64,
    seed: u64,
) -> Result<IdentDataset> {
    if !(split > 0.0 && split < 1.0) {
        return Err(GaitError::Usage(format!("split must be in (0, 1), got {split}")));
    }
    let per_rec = crate::par::map_slice(recordings, |(_, s)| samples_from_series(s, recipe));
    let mut by_subject: BTreeMap<&str, Vec<(Tensor, SampleOrigin)>> = BTreeMap::new();
    for ((id, _), samples) in recordings.iter().zip(per_rec) {
        by_subject.entry(id.as_str()).or_default().extend(samples?);
    }
    let mut manifest = Manifest::default();
    let mut excluded = Vec::new();
    let mut classes = Vec::new();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (id, samples) in by_subject {
        if samples.len() < 2 {
            excluded.push(id.to_string());
            continue;
        }
        let label = classes.len();
        classes.push(id.to_string());
        let n_train = ((samples.len() as f64 * split).floor() as usize).clamp(1, samples.len() - 1);
        manifest.set(format!("subject.{id}.class"), label);
        manifest.set(format!("subject.{id}.train"), n_train);
        manifest.set(format!("subject.{id}.test"), samples.len() - n_train);
        for (i, (t, origin)) in samples.into_iter().enumerate() {
            let s = GaitSample::new(t, label, origin)?;
            if i < n_train {
                train.push(s);
            } else {
                test.push(s);
            }
        }
    }
    if classes.is_empty() {
        return Err(GaitError::Data("no subject produced at least two samples".into()));
    }
    manifest.set("kind", "identification");
    manifest.set("recipe", recipe.name());
    manifest.set("overlap", recipe.overlap_name());
    manifest.set("split", split);
    manifest.set("seed", seed);
    manifest.set("classes", classes.len());
    manifest.set("train_count", train.len());
    manifest.set("test_count", test.len());
    manifest.set("excluded", excluded.join(","));
    Ok(IdentDataset {
        manifest,
        classes,
        train,
        test,
    })
}

// ---------------------------------------------------------------------------
// Authentication datasets

#[derive(Clone, Debug, PartialEq)]
pub struct PairSet {
    pub pairs: Vec<signal::SamplePair>,
    /// `(subject_a, subject_b)` class labels of each pair.
    pub subjects: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuthDataset {
    pub manifest: Manifest,
    pub alignment: Alignment,
    pub train_subjects: Vec<usize>,
    pub test_subjects: Vec<usize>,
    pub train: PairSet,
    pub test: PairSet,
}

/// `n / 2` same-subject pairs (rounded up) and the rest different-subject,
/// drawn without repeating an ordered index pair while possible.
pub fn sample_pairs(
    samples: &[&GaitSample],
    n: usize,
    alignment: Alignment,
    rng: &mut ChaCha8Rng,
) -> Result<PairSet> {
    let mut by_subject: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_subject.entry(s.subject).or_default().push(i);
    }
    let subjects: Vec<usize> = by_subject.keys().copied().collect();
    if subjects.len() < 2 {
        return Err(GaitError::Data("pairs need at least two subjects".into()));
    }
    let with_two: Vec<usize> = subjects
        .iter()
        .copied()
        .filter(|s| by_subject[s].len() >= 2)
        .collect();
    if with_two.is_empty() && n > 1 {
        return Err(GaitError::Data("no subject has two samples for a positive pair".into()));
    }
    let n_pos = n.div_ceil(2);
    let mut used: HashSet<(usize, usize)> = HashSet::new();
    let mut out = PairSet {
        pairs: Vec::with_capacity(n),
        subjects: Vec::with_capacity(n),
    };
    for k in 0..n {
        let positive = k < n_pos;
        let mut pick = None;
        for attempt in 0..64 {
            let (i, j) = if positive {
                let s = *with_two.choose(rng).expect("checked above");
                let ids = &by_subject[&s];
                let a = rng.gen_range(0..ids.len());
                let mut b = rng.gen_range(0..ids.len() - 1);
                if b >= a {
                    b += 1;
                }
                (ids[a], ids[b])
            } else {
                let a = rng.gen_range(0..subjects.len());
                let mut b = rng.gen_range(0..subjects.len() - 1);
                if b >= a {
                    b += 1;
                }
                let ia = by_subject[&subjects[a]].choose(rng).copied().expect("non-empty");
                let ib = by_subject[&subjects[b]].choose(rng).copied().expect("non-empty");
                (ia, ib)
            };
            if used.insert((i, j)) || attempt == 63 {
                pick = Some((i, j));
                break;
            }
        }
        let (i, j) = pick.expect("loop always picks");
        out.pairs.push(align_pair(samples[i], samples[j], alignment)?);
        out.subjects.push((samples[i].subject, samples[j].subject));
    }
    // interleave so minibatches see both classes
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(PairSet {
        pairs: order.iter().map(|&i| out.pairs[i].clone()).collect(),
        subjects: order.iter().map(|&i| out.subjects[i]).collect(),
    })
}

/// Subject-disjoint pairs: `test_subjects` of the labels present are chosen by
/// seed for the test side.
pub fn build_auth_dataset(
    samples: &[GaitSample],
    alignment: Alignment,
    test_subjects: usize,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<AuthDataset> {
    let all: BTreeSet<usize> = samples.iter().map(|s| s.subject).collect();
    if test_subjects < 2 || all.len() < test_subjects + 2 {
        return Err(GaitError::Data(format!(
            "{} subjects cannot give 2+ training and {test_subjects} test subjects",
            all.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<usize> = all.into_iter().collect();
    ids.shuffle(&mut rng);
    let mut test_ids: Vec<usize> = ids[..test_subjects].to_vec();
    let mut train_ids: Vec<usize> = ids[test_subjects..].to_vec();
    test_ids.sort_unstable();
    train_ids.sort_unstable();
    let tr: Vec<&GaitSample> = samples.iter().filter(|s| train_ids.contains(&s.subject)).collect();
    let te: Vec<&GaitSample> = samples.iter().filter(|s| test_ids.contains(&s.subject)).collect();
    let train = sample_pairs(&tr, n_train, alignment, &mut rng)?;
    let test = sample_pairs(&te, n_test, alignment, &mut rng)?;
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    let mut manifest = Manifest::default();
    manifest.set("kind", "authentication");
    manifest.set("recipe", match alignment {
        Alignment::Horizontal => "auth-h",
        Alignment::Vertical => "auth-v",
    });
    manifest.set("seed", seed);
    manifest.set("train_subjects", join(&train_ids));
    manifest.set("test_subjects", join(&test_ids));
    manifest.set("train_count", train.pairs.len());
    manifest.set("test_count", test.pairs.len());
    let pos = |p: &PairSet| p.pairs.iter().filter(|x| x.same_subject).count();
    manifest.set("train_positive", pos(&train));
    manifest.set("test_positive", pos(&test));
    Ok(AuthDataset {
        manifest,
        alignment,
        train_subjects: train_ids,
        test_subjects: test_ids,
        train,
        test,
    })
}

// ---------------------------------------------------------------------------
// Extraction datasets

/// Non-overlapping `6 x 1024` windows with their per-timestep masks; the tail is dropped.
pub fn build_extraction_dataset(series: &InertialSeries, mask: &[f64]) -> Result<Vec<ExtractionWindow>> {
    if mask.len() != series.len() {
        return Err(GaitError::Data(format!(
            "mask has {} labels for {} samples",
            mask.len(),
            series.len()
        )));
    }
    (0..series.len() / WINDOW)
        .map(|k| {
            let (a, b) = (k * WINDOW, (k + 1) * WINDOW);
            ExtractionWindow::new(series.matrix(a, b)?, Some(mask[a..b].to_vec()))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Sample container

const SAMPLE_MAGIC: &[u8; 4] = b"GSMP";
const SAMPLE_VERSION: u32 = 1;

/// Equal-shape matrices with one integer label each, stored as
/// `magic, version, rows, cols, count, labels[count] (u32), values (f32)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<u32>,
    /// `count * rows * cols` values, sample-major.
    pub values: Vec<f32>,
}

impl SampleSet {
    pub fn from_tensors(items: &[(&Tensor, u32)]) -> Result<Self> {
        let (rows, cols) = match items.first() {
            Some((t, _)) if t.ndim() == 2 => (t.shape()[0], t.shape()[1]),
            Some((t, _)) => {
                return Err(GaitError::Shape(format!("samples must be matrices, got {:?}", t.shape())))
            }
            None => (CHANNELS, SAMPLE_LEN),
        };
        let mut values = Vec::with_capacity(items.len() * rows * cols);
        let mut labels = Vec::with_capacity(items.len());
        for (t, l) in items {
            if t.shape() != [rows, cols] {
                return Err(GaitError::Shape(format!(
                    "mixed sample shapes {:?} and [{rows}, {cols}]",
                    t.shape()
                )));
            }
            values.extend(t.data().iter().map(|&v| v as f32));
            labels.push(*l);
        }
        Ok(SampleSet {
            rows,
            cols,
            labels,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn tensor(&self, i: usize) -> Tensor {
        let n = self.rows * self.cols;
        let data = self.values[i * n..(i + 1) * n].iter().map(|&v| f64::from(v)).collect();
        Tensor::new(vec![self.rows, self.cols], data).expect("container dims are consistent")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 4 * (self.labels.len() + self.values.len()));
        out.extend_from_slice(SAMPLE_MAGIC);
        out.extend_from_slice(&SAMPLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        out.extend_from_slice(&(self.labels.len() as u64).to_le_bytes());
        for l in &self.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: &str| GaitError::Format(format!("sample container: {m}"));
        if bytes.len() < 24 || &bytes[..4] != SAMPLE_MAGIC {
            return Err(fmt("bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        if u32_at(4) != SAMPLE_VERSION {
            return Err(fmt(&format!("unsupported version {}", u32_at(4))));
        }
        let rows = u32_at(8) as usize;
        let cols = u32_at(12) as usize;
        let count = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
        let need = 24 + 4 * count + 4 * count * rows * cols;
        if bytes.len() != need {
            return Err(fmt(&format!("expected {need} bytes, found {}", bytes.len())));
        }
        let labels = (0..count).map(|i| u32_at(24 + 4 * i)).collect();
        let base = 24 + 4 * count;
        let values = bytes[base..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(SampleSet {
            rows,
            cols,
            labels,
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| GaitError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| GaitError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(rows: usize, cols: usize) -> String {
        (0..rows)
            .map(|i| {
                let mut f = vec![format!("{}", i * 20)];
                f.extend((1..cols).map(|c| format!("{}", c as f64 * 0.5 + i as f64)));
                f.join(",") + "\n"
            })
            .collect()
    }

    #[test]
    fn parse_examples() {
        let p = Path::new("rec.csv");
        let s = parse_recording_str(&csv(512, 7), p, &FormatConfig::default()).unwrap();
        assert_eq!(s.len(), 512);
        assert_eq!(s.channel(0)[3], 3.5);

        let mut text = csv(10, 7);
        text.push_str("200,1,2,3,4,5\n");
        match parse_recording_str(&text, p, &FormatConfig::default()) {
            Err(GaitError::Parse { line, .. }) => assert_eq!(line, 11),
            other => panic!("{other:?}"),
        }
        let bad = "0,1,2,3,4,5,6\n20,1,2,NaN,4,5,6\n";
        assert!(matches!(
            parse_recording_str(bad, p, &FormatConfig::default()),
            Err(GaitError::Parse { line: 2, .. })
        ));
        let back = "0,1,2,3,4,5,6\n0,1,2,3,4,5,6\n";
        assert!(matches!(
            parse_recording_str(back, p, &FormatConfig::default()),
            Err(GaitError::Data(_))
        ));

        let cfg = FormatConfig {
            rate: 100.0,
            decimate: true,
            ..FormatConfig::default()
        };
        let d = parse_recording_str(&csv(512, 7), p, &cfg).unwrap();
        assert_eq!(d.len(), 256);
        assert_eq!(d.rate(), 50.0);

        let ws = csv(5, 7).replace(',', "  ");
        let cfg = FormatConfig {
            delimiter: Delimiter::Whitespace,
            ..FormatConfig::default()
        };
        assert_eq!(parse_recording_str(&ws, p, &cfg).unwrap().len(), 5);
    }

    #[test]
    fn recording_round_trips_through_text() {
        let p = synth_profiles(&SynthConfig::default()).unwrap().remove(0);
        let (s, _) = synth_recording(&p, &[(Activity::Walk, 5.0)], 1).unwrap();
        let back = parse_recording_str(&format_recording(&s), Path::new("x"), &FormatConfig::default()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn static_stretches_are_dropped() {
        let p = synth_profiles(&SynthConfig::default()).unwrap().remove(0);
        let (s, _) = synth_recording(&p, &[(Activity::Walk, 9.0), (Activity::Idle, 9.0)], 2).unwrap();
        let f = drop_static(&s, StaticFilter { window_s: 3.0, max_std: 0.1 }).unwrap();
        assert_eq!(f.len(), 450);
    }

    /// Independent check of the step rules on the truth indices.
    fn rules_hold(acc: &[f64], idx: &[usize]) -> bool {
        idx.iter().all(|&i| {
            acc[i] > 10.0 && (i.saturating_sub(20)..(i + 21).min(acc.len())).all(|j| acc[j] <= acc[i])
        }) && idx.windows(2).all(|w| (40..=80).contains(&(w[1] - w[0])))
    }

    #[test]
    fn synthetic_steps_follow_schedule_and_rules() {
        let mut p = synth_profiles(&SynthConfig::default()).unwrap().remove(0);
        p.step_period = 1.0;
        let (s, truth) = synth_recording(&p, &[(Activity::Idle, 1.0), (Activity::Walk, 60.0), (Activity::Idle, 1.0)], 5)
            .unwrap();
        assert!((59..=61).contains(&truth.step_indices.len()), "{}", truth.step_indices.len());
        assert_eq!(truth.mask.iter().filter(|&&m| m == 1.0).count(), 3000);
        assert_eq!(truth.mask[49], 0.0);
        assert_eq!(truth.mask[50], 1.0);
        // noise may move a peak by a sample; the detector must land within 2
        let acc = signal::magnitude(&s);
        let det = signal::detect_steps(&acc, 50.0).indices();
        assert!(rules_hold(&acc, &det));
        assert_eq!(det.len(), truth.step_indices.len());
        for (d, t) in det.iter().zip(&truth.step_indices) {
            assert!(d.abs_diff(*t) <= 2, "{d} vs {t}");
        }

        let (idle, t) = synth_recording(&p, &[(Activity::Idle, 30.0)], 5).unwrap();
        assert!(t.step_indices.is_empty());
        assert!(signal::detect_steps(&signal::magnitude(&idle), 50.0).is_empty());
    }

    #[test]
    fn twins_share_spectra_but_not_phase() {
        let ps = synth_profiles(&SynthConfig::default()).unwrap();
        assert_eq!(ps.len(), 10);
        assert_eq!(ps[8].gyro_lag, 0.25);
        assert_eq!(ps[8].amps, ps[0].amps);
        assert!(synth_profiles(&SynthConfig { twin_pairs: 6, ..SynthConfig::default() }).is_err());
    }

    #[test]
    fn ident_dataset_counts_and_determinism() {
        let cfg = SynthConfig {
            subjects: 3,
            twin_pairs: 0,
            walk_s: 40.0,
            ..SynthConfig::default()
        };
        let corpus = synth_walking_corpus(&cfg).unwrap();
        let recs: Vec<(String, InertialSeries)> = corpus
            .iter()
            .map(|s| (s.id.clone(), s.recordings[0].0.clone()))
            .collect();
        let recipe = IdentRecipe::TwoStepInterp { overlap_steps: 1 };
        let a = build_ident_dataset(&recs, recipe, 0.9, 3).unwrap();
        let b = build_ident_dataset(&recs, recipe, 0.9, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.manifest.render(), b.manifest.render());
        for (k, subj) in corpus.iter().enumerate() {
            let acc = signal::magnitude(&subj.recordings[0].0);
            let steps = signal::detect_steps(&acc, 50.0).indices().len();
            let n = a.train.iter().chain(&a.test).filter(|s| s.subject == k).count();
            assert_eq!(n, steps - 2);
        }
        let fixed = build_ident_dataset(&recs, IdentRecipe::TimeFixed { overlap_s: 0.0 }, 0.9, 3).unwrap();
        let per = recs[0].1.len() / 128;
        assert_eq!(fixed.train.len() + fixed.test.len(), 3 * per);
        assert_eq!(fixed.manifest.get("overlap"), Some("0"));
    }

    #[test]
    fn auth_pairs_are_balanced_and_disjoint() {
        let mk = |subject: usize, k: usize| {
            let d = (0..768).map(|i| (i * (k + 1)) as f64 * 0.001 + subject as f64).collect();
            GaitSample::new(Tensor::new(vec![6, 128], d).unwrap(), subject, SampleOrigin::TwoStepInterp).unwrap()
        };
        let samples: Vec<GaitSample> = (0..8).flat_map(|s| (0..10).map(move |k| mk(s, k))).collect();
        let ds = build_auth_dataset(&samples, Alignment::Vertical, 3, 101, 40, 4).unwrap();
        let pos = ds.train.pairs.iter().filter(|p| p.same_subject).count();
        assert_eq!(pos, 51);
        assert_eq!(ds.test.pairs.iter().filter(|p| p.same_subject).count(), 20);
        for (a, b) in &ds.test.subjects {
            assert!(ds.test_subjects.contains(a) && ds.test_subjects.contains(b));
        }
        for (a, b) in &ds.train.subjects {
            assert!(!ds.test_subjects.contains(a) && !ds.test_subjects.contains(b));
        }
        for (p, (a, b)) in ds.train.pairs.iter().zip(&ds.train.subjects) {
            assert_eq!(p.same_subject, a == b);
            assert_eq!(p.values.shape(), &[12, 128]);
        }
        assert!(build_auth_dataset(&samples, Alignment::Vertical, 7, 10, 10, 4).is_err());
        let again = build_auth_dataset(&samples, Alignment::Vertical, 3, 101, 40, 4).unwrap();
        assert_eq!(again, ds);
    }

    #[test]
    fn extraction_windows() {
        let p = synth_profiles(&SynthConfig::default()).unwrap().remove(0);
        let (s, t) = synth_recording(&p, &[(Activity::Walk, 4096.0 / 50.0)], 1).unwrap();
        let w = build_extraction_dataset(&s, &t.mask).unwrap();
        assert_eq!(w.len(), 4);
        assert!(w.iter().all(|x| x.mask.as_ref().unwrap().iter().all(|&m| m == 1.0)));
        assert!(build_extraction_dataset(&s, &t.mask[1..]).is_err());
    }

    #[test]
    fn sample_container_round_trip() {
        let a = Tensor::new(vec![6, 128], (0..768).map(|i| i as f64 * 0.25).collect()).unwrap();
        let set = SampleSet::from_tensors(&[(&a, 3), (&a, 7)]).unwrap();
        let bytes = set.to_bytes();
        let back = SampleSet::from_bytes(&bytes).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.tensor(1), a);
        assert!(SampleSet::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(SampleSet::from_bytes(&bad).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let mut m = Manifest::default();
        m.set("seed", 7);
        m.set("recipe", "interp");
        let text = m.render();
        assert_eq!(text, "recipe=interp\nseed=7\n");
        assert_eq!(Manifest::parse(&text, Path::new("m")).unwrap(), m);
        assert_eq!(m.hash().len(), 64);
        assert!(Manifest::parse("oops\n", Path::new("m")).is_err());
    }
}

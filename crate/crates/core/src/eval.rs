//! Metrics and the model weight container.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{GaitError, Result};
use crate::gaitnets::{AuthNet, IdentKind, IdentNet, IdentVariant};
use crate::nn::ParamSet;
use crate::segnet::SegNet;
use crate::signal::Alignment;
use crate::tensor::Tensor;

/// Fraction of positions where `predictions` and `labels` agree.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(GaitError::Usage(format!(
            "accuracy needs equal non-empty inputs, got {} and {}",
            predictions.len(),
            labels.len()
        )));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// `m[truth][predicted]` counts.
pub fn confusion_matrix(predictions: &[usize], labels: &[usize], classes: usize) -> Result<Vec<Vec<usize>>> {
    accuracy(predictions, labels)?;
    let mut m = vec![vec![0; classes]; classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p >= classes || l >= classes {
            return Err(GaitError::Usage(format!("label {} out of {classes} classes", p.max(l))));
        }
        m[l][p] += 1;
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Roc {
    /// Ordered by decreasing threshold, from `(0, 0)` at `+inf` to `(1, 1)` at `-inf`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub eer: f64,
}

/// Scores at or above a threshold are called positive.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Roc> {
    if scores.len() != labels.len() {
        return Err(GaitError::Usage("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(GaitError::Numeric("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(GaitError::Data("ROC needs both positive and negative labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        tpr: 0.0,
        fpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let thr = scores[order[i]];
        while i < order.len() && scores[order[i]] == thr {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: thr,
            tpr: tp as f64 / pos as f64,
            fpr: fp as f64 / neg as f64,
        });
    }
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        tpr: 1.0,
        fpr: 1.0,
    });
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok(Roc {
        eer: equal_error_rate(&points),
        points,
        auc,
    })
}

/// Crossing of FPR and FNR = 1 - TPR along the piecewise-linear curve.
fn equal_error_rate(points: &[RocPoint]) -> f64 {
    let gap = |p: &RocPoint| p.fpr - (1.0 - p.tpr);
    for w in points.windows(2) {
        let (g0, g1) = (gap(&w[0]), gap(&w[1]));
        if g0 <= 0.0 && g1 >= 0.0 {
            let t = if g1 == g0 { 0.0 } else { -g0 / (g1 - g0) };
            return w[0].fpr + t * (w[1].fpr - w[0].fpr);
        }
    }
    // gap runs from -1 to +1 so a crossing always exists
    unreachable!("ROC endpoints bracket the equal error point")
}

pub fn roc_csv(roc: &Roc) -> String {
    let mut out = String::from("threshold,tpr,fpr\n");
    for p in &roc.points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.tpr, p.fpr));
    }
    out
}

/// Reads the `threshold,tpr,fpr` CSV back and integrates it.
pub fn auc_from_csv(text: &str) -> Result<f64> {
    let pts: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| GaitError::Format(format!("bad ROC row `{l}`")));
            if f.len() != 3 {
                return Err(GaitError::Format(format!("bad ROC row `{l}`")));
            }
            Ok((num(f[2])?, num(f[1])?))
        })
        .collect::<Result<_>>()?;
    Ok(pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<f64>,
    pub roc: Option<Roc>,
}

impl MetricsReport {
    pub fn classification(predictions: &[usize], labels: &[usize], classes: usize) -> Result<Self> {
        let confusion = confusion_matrix(predictions, labels, classes)?;
        let per_class = confusion
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: usize = row.iter().sum();
                if n == 0 {
                    f64::NAN
                } else {
                    row[i] as f64 / n as f64
                }
            })
            .collect();
        Ok(MetricsReport {
            accuracy: accuracy(predictions, labels)?,
            confusion,
            per_class,
            roc: None,
        })
    }

    /// Binary report; the decision threshold for accuracy is 0.5.
    pub fn binary(scores: &[f64], labels: &[bool]) -> Result<Self> {
        let pred: Vec<usize> = scores.iter().map(|&s| usize::from(s >= 0.5)).collect();
        let truth: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
        let mut r = Self::classification(&pred, &truth, 2)?;
        r.roc = Some(roc_curve(scores, labels)?);
        Ok(r)
    }

    /// `key=value` summary lines.
    pub fn summary(&self) -> String {
        let mut s = format!("accuracy={}\nclasses={}\n", self.accuracy, self.per_class.len());
        for (i, a) in self.per_class.iter().enumerate() {
            s.push_str(&format!("class.{i}.accuracy={a}\n"));
        }
        if let Some(r) = &self.roc {
            s.push_str(&format!("auc={}\neer={}\n", r.auc, r.eer));
        }
        s
    }

    pub fn confusion_csv(&self) -> String {
        self.confusion
            .iter()
            .map(|row| row.iter().map(usize::to_string).collect::<Vec<_>>().join(",") + "\n")
            .collect()
    }
}

// ---------------------------------------------------------------------------

const MODEL_MAGIC: &[u8; 4] = b"GMDL";
const MODEL_VERSION: u32 = 1;

/// Named f64 tensors plus a kind tag, string metadata and the hash of the
/// training manifest. All integers and floats are little-endian.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelContainer {
    pub kind: String,
    pub meta: BTreeMap<String, String>,
    pub params: ParamSet,
    pub manifest_hash: String,
}

impl ModelContainer {
    pub fn new(kind: impl Into<String>, params: ParamSet) -> Self {
        ModelContainer {
            kind: kind.into(),
            meta: BTreeMap::new(),
            params,
            manifest_hash: String::new(),
        }
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| GaitError::Format(format!("model has no `{key}` entry")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.meta(key)?;
        v.parse()
            .map_err(|_| GaitError::Format(format!("model entry `{key}` has bad value `{v}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        put_str(&mut out, &self.kind);
        put_str(&mut out, &self.manifest_hash);
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MODEL_MAGIC {
            return Err(GaitError::Format("model container: bad magic".into()));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(GaitError::Format(format!("model container: unsupported version {version}")));
        }
        let kind = r.string()?;
        let manifest_hash = r.string()?;
        let mut meta = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            meta.insert(k, r.string()?);
        }
        let mut params = ParamSet::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let nd = r.u32()? as usize;
            let shape = (0..nd).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = r
                .take(n.checked_mul(8).ok_or_else(|| GaitError::Format("tensor too large".into()))?)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            params.insert(name, Tensor::new(shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(GaitError::Format("model container: trailing bytes".into()));
        }
        Ok(ModelContainer {
            kind,
            meta,
            params,
            manifest_hash,
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

/// A trained network of any supported kind.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Segment(SegNet),
    Ident(IdentNet),
    Auth(AuthNet),
}

impl Model {
    pub fn kind_tag(&self) -> String {
        match self {
            Model::Segment(_) => "segnet".into(),
            Model::Ident(n) => n.variant.kind.to_string(),
            Model::Auth(_) => "auth".into(),
        }
    }

    pub fn to_container(&self, manifest_hash: &str) -> ModelContainer {
        let mut c = match self {
            Model::Segment(n) => {
                let mut c = ModelContainer::new("segnet", n.params.clone());
                c.meta.insert("width_divisor".into(), n.width_divisor.to_string());
                c
            }
            Model::Ident(n) => {
                let mut c = ModelContainer::new(n.variant.kind.to_string(), n.params.clone());
                c.meta.insert("classes".into(), n.classes.to_string());
                c.meta.insert("lstm_hidden".into(), n.variant.lstm_hidden.to_string());
                c
            }
            Model::Auth(n) => {
                let mut c = ModelContainer::new("auth", n.params.clone());
                c.meta.insert("alignment".into(), alignment_name(n.alignment).into());
                c
            }
        };
        c.manifest_hash = manifest_hash.to_string();
        c
    }

    pub fn from_container(c: &ModelContainer) -> Result<Self> {
        Ok(match c.kind.as_str() {
            "segnet" => Model::Segment(SegNet {
                params: c.params.clone(),
                width_divisor: c.meta_parse("width_divisor")?,
            }),
            "auth" => Model::Auth(AuthNet {
                params: c.params.clone(),
                alignment: parse_alignment(c.meta("alignment")?)?,
            }),
            other => {
                let kind: IdentKind = other.parse()?;
                Model::Ident(IdentNet {
                    params: c.params.clone(),
                    variant: IdentVariant::with_hidden(kind, c.meta_parse("lstm_hidden")?),
                    classes: c.meta_parse("classes")?,
                })
            }
        })
    }
}

pub fn alignment_name(a: Alignment) -> &'static str {
    match a {
        Alignment::Horizontal => "horizontal",
        Alignment::Vertical => "vertical",
    }
}

pub fn parse_alignment(s: &str) -> Result<Alignment> {
    match s {
        "horizontal" | "h" => Ok(Alignment::Horizontal),
        "vertical" | "v" => Ok(Alignment::Vertical),
        _ => Err(GaitError::Usage(format!("unknown alignment `{s}`"))),
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| GaitError::Format("model container: truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| GaitError::Format("model container: bad utf-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 0, 1], &[1, 1, 1]).unwrap(), 2.0 / 3.0);
        assert_eq!(accuracy(&[2, 2], &[2, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 1, 0], &[1, 1, 1]).unwrap(), 2.0 / 3.0);
        assert!(accuracy(&[], &[]).is_err());
        let r = MetricsReport::classification(&[0, 1, 1, 2], &[0, 1, 2, 2], 3).unwrap();
        assert_eq!(r.confusion, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 1, 1]]);
        assert_eq!(r.per_class, vec![1.0, 1.0, 0.5]);
    }

    /// Pairwise probability that a positive outscores a negative, ties half.
    fn auc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn roc_examples() {
        let r = roc_curve(&[0.9, 0.8, 0.3, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.eer, 0.0);
        assert_eq!(r.points.len(), 6);
        let r = roc_curve(&[0.1, 0.9], &[true, false]).unwrap();
        assert_eq!(r.auc, 0.0);
        assert_eq!(r.eer, 1.0);
        assert!(roc_curve(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn roc_matches_pairwise_oracle_and_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let n = rng.gen_range(4..60);
            let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0 || rng.gen_bool(0.3)).collect();
            if labels.iter().all(|&l| l) {
                continue;
            }
            // coarse scores so ties occur
            let scores: Vec<f64> = labels
                .iter()
                .map(|&l| (rng.gen_range(0..8) as f64 + if l { 2.0 } else { 0.0 }) / 10.0)
                .collect();
            let r = roc_curve(&scores, &labels).unwrap();
            assert!((r.auc - auc_oracle(&scores, &labels)).abs() < 1e-12);
            for w in r.points.windows(2) {
                assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
                assert!(w[1].threshold < w[0].threshold);
            }
            let inv: Vec<f64> = scores.iter().map(|s| -s).collect();
            assert!((roc_curve(&inv, &labels).unwrap().auc - (1.0 - r.auc)).abs() < 1e-12);
            assert!((auc_from_csv(&roc_csv(&r)).unwrap() - r.auc).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&r.eer));
        }
    }

    #[test]
    fn random_scores_give_half_auc() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scores: Vec<f64> = (0..4000).map(|_| rng.gen()).collect();
        let labels: Vec<bool> = (0..4000).map(|_| rng.gen_bool(0.5)).collect();
        let r = roc_curve(&scores, &labels).unwrap();
        assert!((r.auc - 0.5).abs() < 0.05, "{}", r.auc);
        assert!((r.eer - 0.5).abs() < 0.05, "{}", r.eer);
    }

    #[test]
    fn eer_by_interpolation() {
        // one positive below one negative: staircase crosses at fpr = 0.5
        let r = roc_curve(&[0.9, 0.4, 0.6, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(r.auc, 0.75);
        assert!((r.eer - 0.5).abs() < 1e-12);
    }

    #[test]
    fn container_round_trip_is_bitwise() {
        let mut p = ParamSet::new();
        p.insert("a.w", Tensor::new(vec![2, 3], vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300, -2.5, 0.1]).unwrap());
        p.insert("b", Tensor::new(vec![1], vec![std::f64::consts::PI]).unwrap());
        let mut m = ModelContainer::new("cnn", p);
        m.meta.insert("classes".into(), "10".into());
        m.manifest_hash = "abc".into();
        let bytes = m.to_bytes();
        let back = ModelContainer::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        for (name, t) in m.params.iter() {
            let u = back.params.get(name).unwrap();
            assert!(t.data().iter().zip(u.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back.meta_parse::<usize>("classes").unwrap(), 10);
        assert!(ModelContainer::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(ModelContainer::from_bytes(b"XXXX\x01\0\0\0").is_err());
    }

    #[test]
    fn models_survive_the_container() {
        let ident = IdentNet::new(IdentVariant::with_hidden(IdentKind::CnnLstmFix, 8), 3, 1).unwrap();
        let auth = AuthNet::new(&IdentNet::new(IdentVariant::new(IdentKind::CnnOnly), 3, 2).unwrap(), Alignment::Horizontal, 3)
            .unwrap();
        let seg = SegNet::new(32, 4).unwrap();
        for m in [Model::Ident(ident), Model::Auth(auth), Model::Segment(seg)] {
            let bytes = m.to_container("h").to_bytes();
            let back = Model::from_container(&ModelContainer::from_bytes(&bytes).unwrap()).unwrap();
            assert_eq!(back, m);
        }
    }
}

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use gaitrec::baselines::{self, EigenBasis, MarginConfig, MarginModel};
use gaitrec::data::{self, IdentRecipe, Manifest, SampleSet, SubjectFrom, SynthConfig};
use gaitrec::eval::{self, MetricsReport, Model, ModelContainer};
use gaitrec::gaitnets::{self, AuthNet, IdentKind, IdentNet, IdentVariant};
use gaitrec::nn::TrainConfig;
use gaitrec::segnet::{self, ExtractionWindow, SegNet, WINDOW};
use gaitrec::signal::{self, Alignment, GaitSample, InertialSeries, CHANNELS};
use gaitrec::Tensor;

use crate::settings::Settings;
use crate::{BaselineArgs, BuildArgs, EvalArgs, ExtractArgs, Method, ModelArg, Recipe, RocArgs, Split, StepArgs};
use crate::{SynthArgs, SynthKind, TrainArgs};

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

// ---------------------------------------------------------------------------

pub fn synth(s: &Settings, a: &SynthArgs) -> Result<()> {
    let out = s.out_dir()?;
    let cfg = SynthConfig {
        subjects: s.pick(a.subjects, "subjects", 10)?,
        twin_pairs: s.pick(a.twins, "twins", 2)?,
        walk_s: s.pick(a.seconds, "seconds", 220.0)?,
        recordings: s.pick(a.recordings, "recordings", 1)?,
        seed: s.seed,
    };
    let mut manifest = Manifest::default();
    manifest.set("kind", "synthetic");
    manifest.set("seed", cfg.seed);
    manifest.set("subjects", cfg.subjects);
    manifest.set("twin_pairs", cfg.twin_pairs);
    manifest.set("seconds", cfg.walk_s);
    let subjects: Vec<(String, Vec<(InertialSeries, data::SynthTruth)>)> = match a.kind {
        SynthKind::Walking => {
            manifest.set("schedule", "walking");
            data::synth_walking_corpus(&cfg)?
                .into_iter()
                .map(|x| (x.id, x.recordings))
                .collect()
        }
        SynthKind::Activity => {
            manifest.set("schedule", "activity");
            let profiles = data::synth_profiles(&cfg)?;
            let mut v = Vec::new();
            for (i, p) in profiles.iter().enumerate() {
                let recs = (0..cfg.recordings.max(1))
                    .map(|r| data::synth_activity_recording(p, cfg.walk_s, data::mix_seed(cfg.seed, (i * 1000 + r) as u64)))
                    .collect::<gaitrec::Result<Vec<_>>>()?;
                v.push((format!("S{i:03}"), recs));
            }
            v
        }
    };
    let mut files = 0;
    for (id, recs) in &subjects {
        for (r, (series, truth)) in recs.iter().enumerate() {
            let stem = out.join(format!("{id}_{r}"));
            data::write_recording(series, &stem.with_extension("csv"))?;
            let mask: String = truth.mask.iter().map(|&m| if m > 0.5 { "1\n" } else { "0\n" }).collect();
            write(&stem.with_extension("mask"), mask)?;
            let steps: String = truth.step_indices.iter().map(|i| format!("{i}\n")).collect();
            write(&stem.with_extension("steps"), steps)?;
            files += 1;
        }
    }
    manifest.set("recordings", files);
    manifest.save(&out.join("synth.txt"))?;
    println!("wrote {files} recordings to {}", out.display());
    Ok(())
}

pub fn segment_steps(s: &Settings, a: &StepArgs) -> Result<()> {
    let series = data::parse_recording(&a.input, &s.format()?)?;
    let acc = signal::magnitude(&series);
    let b = signal::detect_steps_timed(&acc, series.timestamps_ms(), series.rate());
    let mut text = String::from("index,timestamp_ms,run\n");
    for (run, chain) in b.chains().iter().enumerate() {
        for &i in chain {
            let _ = writeln!(text, "{i},{},{run}", series.timestamps_ms()[i]);
        }
    }
    let out = s.out_dir()?.join(format!("{}.steps.csv", stem(&a.input)));
    write(&out, text)?;
    println!("steps={} runs={}", b.indices().len(), b.chains().len());
    Ok(())
}

fn stem(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or("recording").to_string()
}

pub fn extract_walk(s: &Settings, a: &ExtractArgs) -> Result<()> {
    let net = match load_model(&a.model)?.1 {
        Model::Segment(n) => n,
        other => bail!("{} holds a {} model, not segnet", a.model.display(), other.kind_tag()),
    };
    let series = data::parse_recording(&a.input, &s.format()?)?;
    let threshold = s.pick(a.threshold, "threshold", 0.5)?;
    let sessions = segnet::extract_walking(&series, &net, threshold)?;
    let out = s.out_dir()?;
    let name = stem(&a.input);
    for (k, w) in sessions.iter().enumerate() {
        data::write_recording(w, &out.join(format!("{name}_walk{k}.csv")))?;
    }
    println!("sessions={}", sessions.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// Datasets

fn parse_overlap(recipe: Recipe, text: Option<&str>) -> Result<IdentRecipe> {
    let interp = |t: &str| -> Result<IdentRecipe> {
        match t {
            "0" => Ok(IdentRecipe::TwoStepInterp { overlap_steps: 0 }),
            "1step" => Ok(IdentRecipe::TwoStepInterp { overlap_steps: 1 }),
            _ => bail!("interpolated samples take --overlap 0 or 1step, got `{t}`"),
        }
    };
    match recipe {
        Recipe::Fixed => {
            let t = text.unwrap_or("0");
            let secs = t.strip_suffix('s').unwrap_or(t);
            let overlap_s: f64 = secs.parse().map_err(|_| anyhow!("bad overlap `{t}`"))?;
            Ok(IdentRecipe::TimeFixed { overlap_s })
        }
        _ => interp(text.unwrap_or("1step")),
    }
}

fn sample_set(samples: &[GaitSample]) -> Result<SampleSet> {
    let items: Vec<(&Tensor, u32)> = samples.iter().map(|x| (x.values(), x.subject as u32)).collect();
    Ok(SampleSet::from_tensors(&items)?)
}

fn write_ident(dir: &Path, ds: &data::IdentDataset) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    ds.manifest.save(&dir.join("manifest.txt"))?;
    sample_set(&ds.train)?.save(&dir.join("train.bin"))?;
    sample_set(&ds.test)?.save(&dir.join("test.bin"))?;
    Ok(())
}

pub fn build_dataset(s: &Settings, a: &BuildArgs) -> Result<()> {
    let out = s.out_dir()?.to_path_buf();
    let from: SubjectFrom = s.pick(None, "subject_from", SubjectFrom::Stem)?;
    let fmt = s.format()?;
    let split = s.pick(None, "split", 0.9)?;
    match a.recipe {
        Recipe::Interp | Recipe::Fixed => {
            let recipe = parse_overlap(a.recipe, a.overlap.as_deref())?;
            let recs = data::load_recordings(&a.input, from, &fmt)?;
            let ds = data::build_ident_dataset(&recs, recipe, split, s.seed)?;
            write_ident(&out, &ds)?;
            println!(
                "classes={} train={} test={}",
                ds.classes.len(),
                ds.train.len(),
                ds.test.len()
            );
        }
        Recipe::AuthH | Recipe::AuthV => {
            let alignment = if a.recipe == Recipe::AuthH {
                Alignment::Horizontal
            } else {
                Alignment::Vertical
            };
            let recipe = parse_overlap(a.recipe, a.overlap.as_deref())?;
            let recs = data::load_recordings(&a.input, from, &fmt)?;
            let all = data::build_ident_dataset(&recs, recipe, split, s.seed)?;
            let samples: Vec<GaitSample> = all.train.iter().chain(&all.test).cloned().collect();
            let ds = data::build_auth_dataset(
                &samples,
                alignment,
                s.pick(None, "test_subjects", 4)?,
                s.pick(None, "train_pairs", 3000)?,
                s.pick(None, "test_pairs", 1000)?,
                s.seed,
            )?;
            let mut manifest = ds.manifest.clone();
            manifest.set("overlap", recipe.overlap_name());
            manifest.save(&out.join("manifest.txt"))?;
            for (name, set) in [("train.bin", &ds.train), ("test.bin", &ds.test)] {
                let items: Vec<(&Tensor, u32)> = set
                    .pairs
                    .iter()
                    .map(|p| (&p.values, u32::from(p.same_subject)))
                    .collect();
                SampleSet::from_tensors(&items)?.save(&out.join(name))?;
            }
            // identification data on the training subjects only, for the CNN
            let train_ids: Vec<&str> = ds.train_subjects.iter().map(|&i| all.classes[i].as_str()).collect();
            let pre_recs: Vec<(String, InertialSeries)> = recs
                .into_iter()
                .filter(|(id, _)| train_ids.contains(&id.as_str()))
                .collect();
            let pre = data::build_ident_dataset(&pre_recs, recipe, split, s.seed)?;
            write_ident(&out.join("pretrain"), &pre)?;
            println!(
                "train_pairs={} test_pairs={} pretrain_classes={}",
                ds.train.pairs.len(),
                ds.test.pairs.len(),
                pre.classes.len()
            );
        }
        Recipe::Extract => build_extraction(s, a, &out, from, &fmt)?,
    }
    Ok(())
}

/// Windows are stored as `7 x 1024`: six channels then the walking mask.
fn build_extraction(s: &Settings, a: &BuildArgs, out: &Path, from: SubjectFrom, fmt: &data::FormatConfig) -> Result<()> {
    let found = data::discover_recordings(&a.input, from, &fmt.extension)?;
    let held: Vec<String> = s
        .raw("test_subjects")
        .map(|v| v.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect())
        .unwrap_or_default();
    let split = s.pick(None, "split", 0.9)?;
    let mut ids: Vec<&str> = found.iter().map(|(id, _)| id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (id, path) in &found {
        let series = data::parse_recording(path, fmt)?;
        let mask_path = path.with_extension("mask");
        let mask: Vec<f64> = read(&mask_path)?
            .lines()
            .enumerate()
            .map(|(i, l)| {
                l.trim().parse::<f64>().map_err(|_| gaitrec::GaitError::Parse {
                    path: mask_path.clone(),
                    line: i + 1,
                    msg: format!("bad mask value `{l}`"),
                })
            })
            .collect::<gaitrec::Result<_>>()?;
        let windows = data::build_extraction_dataset(&series, &mask)?;
        let label = ids.iter().position(|x| x == id).expect("listed") as u32;
        let packed: Vec<Tensor> = windows.iter().map(pack_window).collect::<Result<_>>()?;
        if !held.is_empty() {
            let dst = if held.contains(id) { &mut test } else { &mut train };
            dst.extend(packed.into_iter().map(|t| (t, label)));
        } else {
            let k = ((packed.len() as f64 * split).floor() as usize).min(packed.len());
            for (i, t) in packed.into_iter().enumerate() {
                if i < k { &mut train } else { &mut test }.push((t, label));
            }
        }
    }
    SampleSet::from_tensors(&pair_refs(&train))?.save(&out.join("train.bin"))?;
    SampleSet::from_tensors(&pair_refs(&test))?.save(&out.join("test.bin"))?;
    let mut m = Manifest::default();
    m.set("kind", "extraction");
    m.set("recipe", "extract");
    m.set("window", WINDOW);
    m.set("seed", s.seed);
    m.set("split", if held.is_empty() { format!("{split}") } else { format!("subjects:{}", held.join(",")) });
    m.set("train_count", train.len());
    m.set("test_count", test.len());
    for (i, id) in ids.iter().enumerate() {
        m.set(format!("subject.{id}.index"), i);
    }
    m.save(&out.join("manifest.txt"))?;
    println!("train_windows={} test_windows={}", train.len(), test.len());
    Ok(())
}

fn pair_refs(v: &[(Tensor, u32)]) -> Vec<(&Tensor, u32)> {
    v.iter().map(|(t, l)| (t, *l)).collect()
}

fn pack_window(w: &ExtractionWindow) -> Result<Tensor> {
    let mask = w.mask.as_ref().ok_or_else(|| anyhow!("window without mask"))?;
    let mut d = w.values.data().to_vec();
    d.extend_from_slice(mask);
    Ok(Tensor::new(vec![CHANNELS + 1, WINDOW], d)?)
}

fn unpack_window(t: &Tensor) -> Result<ExtractionWindow> {
    let values = t.narrow(0, 0, CHANNELS)?;
    let mask = t.data()[CHANNELS * WINDOW..].to_vec();
    Ok(ExtractionWindow::new(values, Some(mask))?)
}

struct Loaded {
    manifest: Manifest,
    set: SampleSet,
}

fn load_split(dir: &Path, split: Split) -> Result<Loaded> {
    let manifest = Manifest::load(&dir.join("manifest.txt"))?;
    let name = match split {
        Split::Train => "train.bin",
        Split::Test => "test.bin",
    };
    let set = SampleSet::load(&dir.join(name))?;
    Ok(Loaded { manifest, set })
}

fn tensors(set: &SampleSet) -> Vec<Tensor> {
    (0..set.len()).map(|i| set.tensor(i)).collect()
}

fn alignment_of(m: &Manifest) -> Result<Alignment> {
    match m.get("recipe") {
        Some("auth-h") => Ok(Alignment::Horizontal),
        Some("auth-v") => Ok(Alignment::Vertical),
        other => bail!("not an authentication dataset (recipe {other:?})"),
    }
}

// ---------------------------------------------------------------------------
// Training and evaluation

fn load_model(path: &Path) -> Result<(ModelContainer, Model)> {
    let c = ModelContainer::load(path)?;
    let m = Model::from_container(&c)?;
    Ok((c, m))
}

fn ident_kind(m: ModelArg) -> Option<IdentKind> {
    Some(match m {
        ModelArg::Cnn => IdentKind::CnnOnly,
        ModelArg::LstmSl => IdentKind::LstmSl,
        ModelArg::LstmBi => IdentKind::LstmBi,
        ModelArg::LstmDl => IdentKind::LstmDl,
        ModelArg::Hybrid => IdentKind::HybridScratch,
        ModelArg::CnnFixLstm => IdentKind::CnnFixLstm,
        ModelArg::CnnLstmFix => IdentKind::CnnLstmFix,
        ModelArg::Segnet | ModelArg::Auth => return None,
    })
}

pub fn train(s: &Settings, a: &TrainArgs) -> Result<()> {
    let data = load_split(&a.data, Split::Train)?;
    let (lr0, ep0, b0) = match a.model {
        ModelArg::Segnet => (1e-4, 150, 16),
        ModelArg::Auth => (0.0025, 300, 1500),
        _ => (0.0025, 200, 128),
    };
    let cfg = TrainConfig::new(
        s.pick(a.lr, "lr", lr0)?,
        s.pick(a.epochs, "epochs", ep0)?,
        s.pick(a.batch, "batch", b0)?,
        s.seed,
    );
    let (model, log) = match a.model {
        ModelArg::Segnet => {
            let windows: Vec<ExtractionWindow> = tensors(&data.set).iter().map(unpack_window).collect::<Result<_>>()?;
            let mut net = SegNet::new(s.pick(a.width_divisor, "width_divisor", 1)?, s.seed)?;
            let log = segnet::train_segnet(&mut net, &windows, &cfg)?;
            (Model::Segment(net), log)
        }
        ModelArg::Auth => {
            let alignment = alignment_of(&data.manifest)?;
            let path = a.pretrained.as_ref().ok_or_else(|| anyhow!("auth needs --pretrained <cnn model>"))?;
            let cnn = match load_model(path)?.1 {
                Model::Ident(n) if n.variant.kind.has_cnn() => n,
                other => bail!("{} holds a {} model without a CNN branch", path.display(), other.kind_tag()),
            };
            let mut net = AuthNet::new(&cnn, alignment, s.seed)?;
            let pairs = tensors(&data.set);
            let refs: Vec<&Tensor> = pairs.iter().collect();
            let blocks = net.blocks(&refs)?;
            let same: Vec<bool> = data.set.labels.iter().map(|&l| l == 1).collect();
            let log = gaitnets::train_auth(&mut net, &blocks, &same, &cfg)?;
            (Model::Auth(net), log)
        }
        m => {
            let kind = ident_kind(m).expect("identification model");
            let classes: usize = data
                .manifest
                .get("classes")
                .ok_or_else(|| anyhow!("{} is not an identification dataset", a.data.display()))?
                .parse()?;
            let pre = match kind.frozen_prefix() {
                Some(_) => {
                    let path = a
                        .pretrained
                        .as_ref()
                        .ok_or_else(|| anyhow!("{kind} needs --pretrained <model>"))?;
                    match load_model(path)?.1 {
                        Model::Ident(n) => Some(n),
                        other => bail!("{} holds a {} model", path.display(), other.kind_tag()),
                    }
                }
                None => None,
            };
            let default_hidden = match (&pre, kind) {
                (Some(p), IdentKind::CnnLstmFix) => p.variant.lstm_hidden,
                _ => IdentVariant::new(kind).lstm_hidden,
            };
            let variant = IdentVariant::with_hidden(kind, s.pick(a.hidden, "hidden", default_hidden)?);
            let mut net = IdentNet::new(variant, classes, s.seed)?;
            if let Some(p) = &pre {
                net.load_frozen_branch(p)?;
            }
            let xs = tensors(&data.set);
            let refs: Vec<&Tensor> = xs.iter().collect();
            let labels: Vec<usize> = data.set.labels.iter().map(|&l| l as usize).collect();
            let log = gaitnets::train_ident(&mut net, &refs, &labels, &cfg)?;
            (Model::Ident(net), log)
        }
    };
    let out = s.out_dir()?;
    model.to_container(&data.manifest.hash()).save(&out.join("model.bin"))?;
    let mut text = format!(
        "model={}\nlr={}\nepochs={}\nbatch={}\nseed={}\n",
        model.kind_tag(),
        cfg.lr,
        cfg.epochs,
        cfg.batch,
        cfg.seed
    );
    for (i, l) in log.epoch_loss.iter().enumerate() {
        let _ = writeln!(text, "epoch.{i}.loss={l}");
    }
    write(&out.join("train_log.txt"), &text)?;
    println!(
        "trained {} final_loss={}",
        model.kind_tag(),
        log.epoch_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn eval(s: &Settings, a: &EvalArgs) -> Result<()> {
    let data = load_split(&a.data, a.split)?;
    let (container, model) = load_model(&a.model)?;
    let out = s.out_dir()?;
    let mut summary = format!("model={}\n", model.kind_tag());
    if container.manifest_hash != data.manifest.hash() {
        summary.push_str("note=model was trained on a different dataset manifest\n");
    }
    match model {
        Model::Segment(net) => {
            let windows: Vec<ExtractionWindow> = tensors(&data.set).iter().map(unpack_window).collect::<Result<_>>()?;
            let acc = segnet::timestep_accuracy(&net, &windows, s.pick(None, "threshold", 0.5)?)?;
            let _ = writeln!(summary, "accuracy={acc}\nwindows={}", windows.len());
        }
        Model::Ident(net) => {
            let xs = tensors(&data.set);
            let refs: Vec<&Tensor> = xs.iter().collect();
            let labels: Vec<usize> = data.set.labels.iter().map(|&l| l as usize).collect();
            let pred: Vec<usize> = net.predict(&refs)?.iter().map(|p| gaitnets::predict_identity(p)).collect();
            let r = MetricsReport::classification(&pred, &labels, net.classes)?;
            write(&out.join("confusion.csv"), r.confusion_csv())?;
            summary.push_str(&r.summary());
        }
        Model::Auth(net) => {
            if alignment_of(&data.manifest)? != net.alignment {
                bail!("model and dataset use different pair alignments");
            }
            let xs = tensors(&data.set);
            let refs: Vec<&Tensor> = xs.iter().collect();
            let scores = net.scores_from_blocks(&net.blocks(&refs)?)?;
            let labels: Vec<bool> = data.set.labels.iter().map(|&l| l == 1).collect();
            let r = MetricsReport::binary(&scores, &labels)?;
            let csv: String = scores.iter().zip(&labels).map(|(s, &l)| format!("{s},{}\n", u8::from(l))).collect();
            write(&out.join("scores.csv"), format!("score,label\n{csv}"))?;
            write(&out.join("roc.csv"), eval::roc_csv(r.roc.as_ref().expect("binary report")))?;
            summary.push_str(&r.summary());
        }
    }
    write(&out.join("report.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn read_numbers(path: &Path) -> Result<Vec<f64>> {
    read(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("{}:{}: not a number: `{l}`", path.display(), i + 1))
        })
        .collect()
}

pub fn roc(s: &Settings, a: &RocArgs) -> Result<()> {
    let scores = read_numbers(&a.scores)?;
    let labels = read_numbers(&a.labels)?
        .into_iter()
        .map(|v| match v {
            v if v == 1.0 => Ok(true),
            v if v == 0.0 => Ok(false),
            v => Err(anyhow!("labels must be 0 or 1, got {v}")),
        })
        .collect::<Result<Vec<bool>>>()?;
    let r = eval::roc_curve(&scores, &labels)?;
    write(&s.out_dir()?.join("roc.csv"), eval::roc_csv(&r))?;
    println!("auc={}\neer={}", r.auc, r.eer);
    Ok(())
}

// ---------------------------------------------------------------------------
// Baselines

pub fn baseline(s: &Settings, a: &BaselineArgs) -> Result<()> {
    let train = load_split(&a.data, Split::Train)?;
    let test = load_split(&a.data, Split::Test)?;
    let auth = train.manifest.get("kind") == Some("authentication");
    let horizontal = auth && alignment_of(&train.manifest)? == Alignment::Horizontal;
    let xtr = tensors(&train.set);
    let xte = tensors(&test.set);
    let (ftr, fte) = match a.method {
        Method::Fourier => {
            let default_k = if horizontal { baselines::FOURIER_K_HORIZONTAL } else { baselines::FOURIER_K };
            let k = s.pick(a.k, "k", default_k)?;
            (features(&xtr, |x| baselines::fourier_features(x, k))?, features(&xte, |x| baselines::fourier_features(x, k))?)
        }
        Method::Wavelet if auth => (
            features(&xtr, baselines::wavelet_energy_features)?,
            features(&xte, baselines::wavelet_energy_features)?,
        ),
        Method::Wavelet => (
            features(&xtr, baselines::wavelet_lowfreq_features)?,
            features(&xte, baselines::wavelet_lowfreq_features)?,
        ),
        Method::Eigengait => {
            let flat = |xs: &[Tensor]| xs.iter().map(|x| x.data().to_vec()).collect::<Vec<_>>();
            let basis = EigenBasis::fit(&flat(&xtr), s.pick(a.k, "k", baselines::EIGEN_K)?)?;
            let proj = |xs: &[Tensor]| -> Result<Vec<Vec<f64>>> {
                flat(xs).iter().map(|x| Ok(basis.project(x)?)).collect()
            };
            (proj(&xtr)?, proj(&xte)?)
        }
    };
    let cfg = MarginConfig {
        lambda: s.pick(a.lambda, "lambda", 1e-4)?,
        epochs: s.pick(a.epochs, "epochs", 100)?,
        seed: s.seed,
    };
    let ytr: Vec<usize> = train.set.labels.iter().map(|&l| l as usize).collect();
    let yte: Vec<usize> = test.set.labels.iter().map(|&l| l as usize).collect();
    let model = MarginModel::train(&ftr, &ytr, &cfg)?;
    let pred = fte.iter().map(|f| model.predict(f)).collect::<gaitrec::Result<Vec<_>>>()?;
    let classes = if auth { 2 } else { model.classes };
    let mut r = MetricsReport::classification(&pred, &yte, classes)?;
    if auth {
        let scores = fte.iter().map(|f| model.decision(f)).collect::<gaitrec::Result<Vec<_>>>()?;
        let labels: Vec<bool> = yte.iter().map(|&l| l == 1).collect();
        r.roc = Some(eval::roc_curve(&scores, &labels)?);
    }
    let method = format!("{:?}", a.method).to_lowercase();
    let summary = format!("method={method}\n{}", r.summary());
    let out = s.out_dir()?;
    write(&out.join("baseline_report.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn features(xs: &[Tensor], f: impl Fn(&Tensor) -> gaitrec::Result<Vec<f64>> + Sync) -> Result<Vec<Vec<f64>>> {
    gaitrec::par::map_slice(xs, |x| f(x))
        .into_iter()
        .collect::<gaitrec::Result<Vec<_>>>()
        .map_err(Into::into)
}

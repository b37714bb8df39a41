use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use polymix::audio::{load_wav, segment_clip, standardize, write_wav, AudioClip, TARGET_RATE, TARGET_RMS};
use polymix::dataset::{
    ingest_irmas, load_manifest, load_tracks, read_store, resolve, synth_corpus, synth_test_tracks, verify_manifest,
    write_jsonl, write_manifest, write_store, Instrument, LabelVector, NUM_CLASSES,
};
use polymix::features::extract_store;
use polymix::mixing::{build_mixed_dataset, pitch_shift_augment, Corpus, MixConfig};
use polymix::traineval::{
    ensemble_average, evaluate, f1_delta_table, format_report, make_folds, predict_track, read_predictions,
    summary_row, train_fold, train_model, write_predictions, MetricsReport, PredictionMatrix, Schedule,
};
use polymix::Error;
use polymix_nn::{load_checkpoint, save_checkpoint, Model, ModelConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::*;

/// Where a run's config snapshot goes: inside an output directory, or
/// beside an output file as `<stem>.run.json`.
pub fn snapshot_path(out: &Path, out_is_dir: bool) -> PathBuf {
    if out_is_dir {
        out.join("run.json")
    } else {
        let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.with_file_name(format!("{stem}.run.json"))
    }
}

fn write_snapshot(cmd: &Command, out: &Path, out_is_dir: bool) -> Result<()> {
    let path = snapshot_path(out, out_is_dir);
    let text = serde_json::to_string_pretty(cmd)?;
    std::fs::write(&path, text + "\n").with_context(|| format!("writing snapshot {}", path.display()))?;
    log::info!("config snapshot: {}", path.display());
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<Command> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a config snapshot", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// A manifest path, or `manifest.jsonl` inside a directory.
fn manifest_in(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("manifest.jsonl")
    } else {
        path.to_path_buf()
    }
}

pub fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Ingest(a) => ingest(a)?,
        Command::Synth(a) => synth(a)?,
        Command::Mix(a) => mix(a)?,
        Command::Cqt(a) => cqt(a)?,
        Command::Train(a) => train(a)?,
        Command::Predict(a) => predict(a)?,
        Command::Evaluate(a) => evaluate_cmd(a)?,
        Command::Ensemble(a) => ensemble(a)?,
    }
    match cmd {
        Command::Ingest(IngestArgs { out, .. })
        | Command::Cqt(CqtArgs { out, .. })
        | Command::Predict(PredictArgs { out, .. })
        | Command::Ensemble(EnsembleArgs { out, .. }) => write_snapshot(cmd, out, false),
        Command::Synth(SynthArgs { out, .. })
        | Command::Mix(MixArgs { out, .. })
        | Command::Train(TrainArgs { out, .. }) => write_snapshot(cmd, out, true),
        Command::Evaluate(EvaluateArgs { out: Some(out), .. }) => write_snapshot(cmd, out, false),
        Command::Evaluate(_) => Ok(()),
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    p.canonicalize().with_context(|| format!("resolving {}", p.display()))
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let mut records = match (&a.irmas, &a.manifest) {
        (Some(root), _) => {
            let root = absolute(root)?;
            let ing = ingest_irmas(&root)?;
            for s in &ing.skipped {
                log::warn!("skipped (genre outside vocabulary): {}", s.display());
            }
            log::info!("{} files kept, {} skipped", ing.records.len(), ing.skipped.len());
            ing.records
                .into_iter()
                .map(|mut r| {
                    r.path = root.join(&r.path);
                    r
                })
                .collect::<Vec<_>>()
        }
        (None, Some(m)) => {
            let m = absolute(m)?;
            load_manifest(&m)?
                .into_iter()
                .map(|mut r| {
                    r.path = resolve(&m, &r.path);
                    r
                })
                .collect()
        }
        (None, None) => bail!("either --irmas or --manifest is required"),
    };
    let report = verify_manifest(&a.out, &mut records);
    let bad: HashSet<PathBuf> = report
        .missing
        .iter()
        .cloned()
        .chain(report.unreadable.iter().map(|(p, _)| p.clone()))
        .collect();
    for p in &report.missing {
        log::warn!("missing file dropped: {}", p.display());
    }
    for (p, e) in &report.unreadable {
        log::warn!("unreadable file dropped: {} ({e})", p.display());
    }
    records.retain(|r| !bad.contains(&r.path));
    ensure!(!records.is_empty(), "no usable records");
    for inst in Instrument::ALL {
        let n = records.iter().filter(|r| r.instrument == inst).count();
        if n > 0 {
            log::info!("{}: {n} clips", inst.code());
        }
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_manifest(&a.out, &records)?;
    println!("{} records -> {}", records.len(), a.out.display());
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    create_dir(&a.out)?;
    let manifest = a.out.join("manifest.jsonl");
    if let Some(n) = a.test_tracks {
        let lines = synth_test_tracks(n, a.seed, &a.out)?;
        write_jsonl(&manifest, &lines)?;
        println!("{n} test tracks -> {}", a.out.display());
        return Ok(());
    }
    ensure!(!a.classes.is_empty(), "no classes selected");
    let counts: Vec<(Instrument, usize)> = a.classes.iter().map(|&c| (c, a.per_class)).collect();
    let (records, truth) = synth_corpus(&counts, a.seed, &a.out)?;
    write_manifest(&manifest, &records)?;
    write_jsonl(&a.out.join("truth.jsonl"), &truth)?;
    println!("{} clips -> {}", records.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct AugmentLine {
    path: PathBuf,
    labels: Vec<Instrument>,
    source: String,
    shift: i32,
}

fn write_clips(dir: &Path, names: &[PathBuf], clips: &[&AudioClip]) -> Result<()> {
    names
        .par_iter()
        .zip(clips.par_iter())
        .try_for_each(|(n, c)| write_wav(&dir.join(n), c))?;
    Ok(())
}

fn mix(a: &MixArgs) -> Result<()> {
    let manifest = manifest_in(&a.input);
    let (corpus, silent) = Corpus::load(&manifest)?;
    if !silent.is_empty() {
        log::warn!("{} silent clips left out of the corpus", silent.len());
    }
    create_dir(&a.out)?;
    if let Some(shifts) = &a.augment_shifts {
        let sources = corpus.segments();
        let count = a.augment_count.unwrap_or(sources.len());
        let recs = pitch_shift_augment(&sources, shifts, count, a.seed)?;
        let names: Vec<PathBuf> = (0..recs.len()).map(|i| PathBuf::from(format!("shift_{i:06}.wav"))).collect();
        let clips: Vec<&AudioClip> = recs.iter().map(|r| &r.clip).collect();
        write_clips(&a.out, &names, &clips)?;
        let lines: Vec<AugmentLine> = recs
            .iter()
            .zip(&names)
            .map(|(r, n)| AugmentLine {
                path: n.clone(),
                labels: r.labels.instruments(),
                source: r.source.clone(),
                shift: r.shift,
            })
            .collect();
        write_jsonl(&a.out.join("manifest.jsonl"), &lines)?;
        println!("{} pitch-shifted clips -> {}", lines.len(), a.out.display());
        return Ok(());
    }
    let Some(strategy) = a.strategy else {
        bail!("either --strategy or --augment-shifts is required");
    };
    let out = build_mixed_dataset(
        &corpus,
        &MixConfig {
            strategy,
            seed: a.seed,
            max_per_pair: a.max_per_pair,
        },
    )?;
    for s in &out.skipped {
        log::info!("skipped pair {} + {}: {}", s.sources[0], s.sources[1], s.reason);
    }
    if !out.skipped.is_empty() {
        log::warn!("{} pairs skipped, see skipped.jsonl", out.skipped.len());
    }
    let names: Vec<PathBuf> = (0..out.records.len())
        .map(|i| PathBuf::from(format!("{strategy}_{i:06}.wav")))
        .collect();
    let clips: Vec<&AudioClip> = out.records.iter().map(|r| &r.clip).collect();
    write_clips(&a.out, &names, &clips)?;
    let lines: Vec<_> = out.records.iter().zip(&names).map(|(r, n)| r.provenance(n.clone())).collect();
    write_jsonl(&a.out.join("manifest.jsonl"), &lines)?;
    write_jsonl(&a.out.join("skipped.jsonl"), &out.skipped)?;
    println!(
        "{} mixed clips ({} pairs skipped) -> {}",
        lines.len(),
        out.skipped.len(),
        a.out.display()
    );
    Ok(())
}

/// Standardized tracks of a manifest with their labels, in manifest order.
/// Silent files are dropped with a warning.
fn load_labelled(manifest: &Path) -> Result<Vec<(String, AudioClip, LabelVector)>> {
    let tracks = load_tracks(manifest)?;
    let loaded: Vec<Result<Option<(String, AudioClip, LabelVector)>>> = tracks
        .par_iter()
        .map(|t| {
            let path = resolve(manifest, &t.path);
            let raw = load_wav(&path)?;
            match standardize(&raw, TARGET_RATE, TARGET_RMS) {
                Ok(clip) => Ok(Some((t.path.to_string_lossy().into_owned(), clip, t.labels))),
                Err(Error::SilentClip) => {
                    log::warn!("silent track dropped: {}", path.display());
                    Ok(None)
                }
                Err(e) => Err(e.into()),
            }
        })
        .collect();
    loaded.into_iter().filter_map(Result::transpose).collect()
}

fn cqt(a: &CqtArgs) -> Result<()> {
    let mut segments: Vec<(AudioClip, LabelVector)> = Vec::new();
    for input in &a.input {
        let manifest = manifest_in(input);
        let tracks = load_labelled(&manifest)?;
        let before = segments.len();
        for (id, clip, labels) in tracks {
            let segs = segment_clip(&clip, 1.0)?;
            if segs.is_empty() {
                log::warn!("track shorter than 1 s dropped: {id}");
            }
            segments.extend(segs.into_iter().map(|s| (s, labels)));
        }
        log::info!("{}: {} segments", manifest.display(), segments.len() - before);
    }
    ensure!(!segments.is_empty(), "no 1-second segments to extract");
    let items: Vec<(&AudioClip, LabelVector)> = segments.iter().map(|(c, l)| (c, *l)).collect();
    let store = extract_store(&items)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_store(&store, &a.out)?;
    println!("{} samples -> {}", store.len(), a.out.display());
    Ok(())
}

fn model_config(a: &TrainArgs) -> Result<ModelConfig> {
    let mut cfg = ModelConfig::new(a.arch);
    if let Some(d) = &a.depths {
        ensure!(d.len() == 4, "--depths takes four values");
        cfg = cfg.with_depths([d[0], d[1], d[2], d[3]]);
    }
    if let Some(h) = a.head_units {
        cfg = cfg.with_head_units(h);
    }
    let conv = a.conv_dropout.unwrap_or(cfg.conv_dropout);
    let head = a.head_dropout.unwrap_or(cfg.head_dropout);
    ensure!((0.0..1.0).contains(&conv) && (0.0..1.0).contains(&head), "dropout rates must be in [0, 1)");
    Ok(cfg.with_dropout(conv, head))
}

fn schedule(a: &TrainArgs) -> Schedule {
    let d = Schedule::default();
    Schedule {
        base_lr: a.lr.unwrap_or(d.base_lr),
        epoch_decay: a.epoch_decay.unwrap_or(d.epoch_decay),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        max_epochs: a.max_epochs.unwrap_or(d.max_epochs),
        plateau_patience: a.plateau_patience.unwrap_or(d.plateau_patience),
        stop_patience: a.stop_patience.unwrap_or(d.stop_patience),
        min_delta: a.min_delta.unwrap_or(d.min_delta),
        target_train_lrap: a.target_train_lrap,
        ..d
    }
}

/// Per-fold seed for initialization, shuffling and dropout.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(1000).wrapping_add(fold as u64)
}

fn train(a: &TrainArgs) -> Result<()> {
    ensure!(a.folds >= 1, "--folds must be at least 1");
    let mut store = read_store(&a.store[0])?;
    for p in &a.store[1..] {
        store.extend(&read_store(p)?)?;
    }
    log::info!("{} training samples from {} store(s)", store.len(), a.store.len());
    let cfg = model_config(a)?;
    let base = schedule(a);
    let assignment = if a.folds > 1 {
        Some(make_folds(store.labels(), a.folds, a.seed)?)
    } else {
        None
    };
    let folds: Vec<usize> = match a.fold {
        Some(f) => {
            ensure!(f < a.folds, "--fold {f} outside 0..{}", a.folds);
            vec![f]
        }
        None => (0..a.folds).collect(),
    };
    create_dir(&a.out)?;
    if let Some(asg) = &assignment {
        write_json(&a.out.join("folds.json"), asg)?;
    }
    for k in folds {
        let seed = fold_seed(a.seed, k);
        let sched = Schedule { seed, ..base.clone() };
        let mut model = Model::<f32>::build(&cfg, seed)?;
        log::info!("fold {k}: {} parameters, seed {seed}", model.param_count());
        let history = match &assignment {
            Some(asg) => train_fold(&mut model, &store, asg, k as u8, &sched)?,
            None => train_model(&mut model, &store, None, &sched)?,
        };
        log::info!(
            "fold {k}: {} epochs, best epoch {:?}{}",
            history.epochs.len(),
            history.best_epoch,
            if history.stopped_early { ", stopped early" } else { "" }
        );
        save_checkpoint(&a.out.join(format!("fold{k}.pmxm")), &model, None)?;
        write_json(&a.out.join(format!("fold{k}.history.json")), &history)?;
        println!("fold {k} -> {}", a.out.join(format!("fold{k}.pmxm")).display());
    }
    Ok(())
}

fn predict_tracks(model_path: &Path, tracks: &Path) -> Result<PredictionMatrix> {
    let (model, _) = load_checkpoint::<f32>(model_path).with_context(|| format!("loading {}", model_path.display()))?;
    ensure!(model.config().classes == NUM_CLASSES, "checkpoint has {} outputs", model.config().classes);
    let tracks = load_labelled(&manifest_in(tracks))?;
    ensure!(!tracks.is_empty(), "no tracks to score");
    let scores = tracks
        .par_iter()
        .map(|(id, clip, _)| predict_track(&model, clip).with_context(|| format!("scoring {id}")))
        .collect::<Result<Vec<_>>>()?;
    let ids = tracks.iter().map(|t| t.0.clone()).collect();
    let labels: Vec<LabelVector> = tracks.iter().map(|t| t.2).collect();
    Ok(PredictionMatrix::from_rows(ids, &scores, &labels)?)
}

fn predict(a: &PredictArgs) -> Result<()> {
    let pm = predict_tracks(&a.model, &a.tracks)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_predictions(&a.out, &pm)?;
    println!("{} tracks -> {}", pm.rows(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct EvaluationRecord {
    inputs: Vec<PathBuf>,
    ensemble: EnsembleMode,
    reports: Vec<MetricsReport>,
    baseline: Option<MetricsReport>,
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    let (inputs, preds): (Vec<PathBuf>, Vec<PredictionMatrix>) = if !a.preds.is_empty() {
        let preds = a.preds.iter().map(|p| read_predictions(p)).collect::<polymix::Result<Vec<_>>>()?;
        (a.preds.clone(), preds)
    } else {
        let tracks = a.tracks.as_ref().context("--model needs --tracks")?;
        let preds = a.model.iter().map(|m| predict_tracks(m, tracks)).collect::<Result<Vec<_>>>()?;
        (a.model.clone(), preds)
    };
    let baseline = a.baseline.as_ref().map(|p| evaluate(&read_predictions(p)?)).transpose()?;
    let mut reports = Vec::new();
    match a.ensemble {
        EnsembleMode::Mean => {
            let r = evaluate(&ensemble_average(&preds)?)?;
            println!("ensemble (mean of {} inputs)\n{}", preds.len(), format_report(&r));
            reports.push(r);
        }
        EnsembleMode::None => {
            for (name, pm) in inputs.iter().zip(&preds) {
                let r = evaluate(pm)?;
                println!("{}\n{}", name.display(), format_report(&r));
                reports.push(r);
            }
            if reports.len() > 1 {
                println!("{}", summary_row("mean ± std", &reports));
            }
        }
    }
    if let Some(base) = &baseline {
        for r in &reports {
            println!("{}", f1_delta_table(r, base, &a.baseline_name));
        }
    }
    if let Some(out) = &a.out {
        write_json(
            out,
            &EvaluationRecord {
                inputs,
                ensemble: a.ensemble,
                reports,
                baseline,
            },
        )?;
    }
    Ok(())
}

fn ensemble(a: &EnsembleArgs) -> Result<()> {
    let preds = a.preds.iter().map(|p| read_predictions(p)).collect::<polymix::Result<Vec<_>>>()?;
    let pm = ensemble_average(&preds)?;
    write_predictions(&a.out, &pm)?;
    println!("mean of {} prediction sets -> {}", preds.len(), a.out.display());
    Ok(())
}

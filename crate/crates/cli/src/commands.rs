//! One function per subcommand.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use emg_voicing::alignment::{aligned_loss_grad, direct_loss_grad, LossTerms, PhonemePosterior};
use emg_voicing::analysis::{
    align_predictions, context_baseline, forced_choice_accuracy, majority_class_accuracy,
    pair_report, wer, write_feature_report, write_pair_report, AlignedPredictions, BaselineConfig,
    ConfusionCounts, ConfusionSetTable, FeatureScores,
};
use emg_voicing::data::{
    load_dataset, save_dataset, synth_dataset, Dataset, EmgRecording, Mode, Split,
};
use emg_voicing::dsp::format::{save_features, save_signal};
use emg_voicing::model::checkpoint::load_checkpoint;
use emg_voicing::model::{ModelConfig, ModelOutput, ModelParams};
use emg_voicing::training::{predict_all, prepare_signal, train_loop_with, TrainOutputs};

use crate::config::RunConfig;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load(cfg: &RunConfig) -> Result<Dataset> {
    let dir = cfg.dataset_dir();
    load_dataset(&dir).with_context(|| format!("loading dataset from {}", dir.display()))
}

fn checkpoint(cfg: &RunConfig) -> Result<(ModelConfig, ModelParams)> {
    let path = cfg.checkpoint_path();
    load_checkpoint(&path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Validation => "validation",
        Split::Test => "test",
    }
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    cfg.echo("synth")?;
    let ds = synth_dataset(&cfg.synth)?;
    let dir = cfg.dataset_dir();
    save_dataset(&ds, &dir)?;
    println!("wrote {} recordings to {}", ds.len(), dir.display());
    Ok(())
}

pub fn preprocess(cfg: &RunConfig) -> Result<()> {
    cfg.echo("preprocess")?;
    let ds = load(cfg)?;
    let dir = cfg.paths.out.join("processed");
    create_dir(&dir)?;
    for r in ds.recordings() {
        let p = prepare_signal(r)?;
        save_signal(&dir.join(format!("{}.emgr", r.utterance_id)), &p.signal)?;
    }
    println!("wrote {} processed signals to {}", ds.len(), dir.display());
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    cfg.echo("train")?;
    let ds = load(cfg)?;
    let (_, log) = train_loop_with(
        &ds,
        &cfg.model,
        &cfg.train,
        TrainOutputs {
            dir: Some(&cfg.paths.out),
        },
    )?;
    if let (Some(init), Some(last)) = (log.initial_val, log.epochs.last()) {
        let best = log
            .epochs
            .iter()
            .map(|e| e.val.total)
            .fold(f64::INFINITY, f64::min);
        println!(
            "{} epochs: validation loss {:.4} -> {:.4} (best {:.4})",
            log.epochs.len(),
            init.total,
            last.val.total,
            best
        );
    }
    println!(
        "checkpoints and train_log.csv in {}",
        cfg.paths.out.display()
    );
    Ok(())
}

fn utterance_terms(
    ds: &Dataset,
    r: &EmgRecording,
    out: &ModelOutput,
    lambda: f64,
) -> Result<LossTerms> {
    let (feat, labels) = ds.targets_for(r)?;
    let terms = match r.mode {
        Mode::Silent => aligned_loss_grad(
            feat.frames().view(),
            out.mfcc.view(),
            labels.labels(),
            out.phoneme_logits.view(),
            lambda,
        ),
        Mode::Vocalized => direct_loss_grad(
            feat.frames().view(),
            out.mfcc.view(),
            labels.labels(),
            out.phoneme_logits.view(),
            lambda,
        ),
    }?;
    Ok(terms)
}

/// `utterance<TAB>words` per line; blank lines are skipped.
fn read_hypotheses(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading hypotheses {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, words) = line.split_once('\t').unwrap_or((line, ""));
        if out
            .insert(
                id.to_string(),
                words.split_whitespace().map(String::from).collect(),
            )
            .is_some()
        {
            bail!("{}:{}: duplicate utterance {id}", path.display(), n + 1);
        }
    }
    Ok(out)
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    cfg.echo("eval")?;
    let ds = load(cfg)?;
    let (mcfg, params) = checkpoint(cfg)?;
    let recs: Vec<&EmgRecording> = ds.in_split(cfg.eval.split).collect();
    if recs.is_empty() {
        bail!("{} split is empty", split_name(cfg.eval.split));
    }
    let outs = predict_all(&params, &mcfg, &recs)?;

    let dir = cfg.paths.out.join("eval");
    let pred_dir = dir.join("predicted");
    create_dir(&pred_dir)?;
    let mut csv = String::from("utterance,mode,total,feature,phoneme\n");
    let mut silent_totals = Vec::new();
    for (r, o) in recs.iter().zip(&outs) {
        let t = utterance_terms(&ds, r, o, cfg.train.phoneme_weight)?;
        if !t.total.is_finite() {
            bail!("{}: loss is {}", r.utterance_id, t.total);
        }
        let mode = if r.is_silent() { "silent" } else { "vocalized" };
        writeln!(
            csv,
            "{},{mode},{:.6},{:.6},{:.6}",
            r.utterance_id, t.total, t.feature, t.phoneme
        )?;
        if r.is_silent() {
            silent_totals.push(t.total);
        }
        save_features(&pred_dir.join(format!("{}.feat", r.utterance_id)), &o.mfcc)?;
    }
    write_file(&dir.join("losses.csv"), &csv)?;
    if !silent_totals.is_empty() {
        let mean = silent_totals.iter().sum::<f64>() / silent_totals.len() as f64;
        println!(
            "mean silent loss on {} split: {mean:.4}",
            split_name(cfg.eval.split)
        );
    }

    if let Some(path) = &cfg.paths.hypotheses {
        let hyps = read_hypotheses(path)?;
        let mut csv = String::from("utterance,errors,reference_words,wer\n");
        let (mut errors, mut words) = (0.0, 0usize);
        for (id, hyp) in &hyps {
            let r = ds
                .get(id)
                .with_context(|| format!("{}: unknown utterance {id}", path.display()))?;
            let w = wer(hyp, &r.transcript).with_context(|| format!("scoring {id}"))?;
            let n = r.transcript.len();
            errors += w * n as f64;
            words += n;
            writeln!(csv, "{id},{},{n},{w:.6}", (w * n as f64).round())?;
        }
        write_file(&dir.join("wer.csv"), &csv)?;
        if words > 0 {
            println!(
                "WER over {} utterances: {:.4}",
                hyps.len(),
                errors / words as f64
            );
        }
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn aligned_silent(
    ds: &Dataset,
    mcfg: &ModelConfig,
    params: &ModelParams,
    split: Split,
    lambda: f64,
) -> Result<Vec<AlignedPredictions>> {
    let recs: Vec<&EmgRecording> = ds.in_split(split).filter(|r| r.is_silent()).collect();
    let outs = predict_all(params, mcfg, &recs)?;
    recs.iter()
        .zip(&outs)
        .map(|(r, o)| {
            let (feat, labels) = ds.targets_for(r)?;
            let post = PhonemePosterior::from_logits(o.phoneme_logits.view());
            Ok(align_predictions(
                &post,
                &o.features()?,
                feat,
                labels,
                lambda,
            )?)
        })
        .collect()
}

pub fn analyze(cfg: &RunConfig) -> Result<()> {
    cfg.echo("analyze")?;
    let ds = load(cfg)?;
    let (mcfg, params) = checkpoint(cfg)?;
    let inv = ds.inventory();
    let lambda = cfg.train.phoneme_weight;
    let eval = aligned_silent(&ds, &mcfg, &params, cfg.eval.split, lambda)?;
    if eval.is_empty() {
        bail!(
            "{} split has no silent utterances",
            split_name(cfg.eval.split)
        );
    }
    let dir = cfg.paths.out.join("analysis");
    create_dir(&dir)?;

    let pairs: Vec<(usize, usize)> = eval.iter().flat_map(AlignedPredictions::pairs).collect();
    let counts = ConfusionCounts::from_pairs(&pairs, inv.len(), inv.silence())?;
    let mut buf = Vec::new();
    write_pair_report(&mut buf, &pair_report(&counts, inv), inv)?;
    write_file(&dir.join("confusion.csv"), &String::from_utf8(buf)?)?;

    let train = if cfg.eval.context_baseline {
        aligned_silent(&ds, &mcfg, &params, Split::Train, lambda)?
    } else {
        Vec::new()
    };
    let train_labels: Vec<usize> = ds
        .in_split(Split::Train)
        .filter_map(|r| r.phoneme_labels.as_ref())
        .flat_map(|l| l.labels().to_vec())
        .collect();
    let eval_labels: Vec<usize> = eval.iter().flat_map(|a| a.labels.clone()).collect();
    let table = ConfusionSetTable::articulatory();
    let mut rows = Vec::new();
    for feature in table.feature_names() {
        let sets = table.resolve(feature, inv)?;
        let baseline = if cfg.eval.context_baseline && !sets.is_empty() {
            let bcfg = BaselineConfig {
                epochs: cfg.eval.baseline_epochs,
                ..BaselineConfig::from_model(&mcfg, cfg.seed)
            };
            context_baseline(&train, &eval, &sets, inv.len(), &bcfg)?.1
        } else {
            None
        };
        rows.push(FeatureScores {
            feature: feature.to_string(),
            majority: majority_class_accuracy(&train_labels, &eval_labels, &sets),
            context_baseline: baseline,
            full_model: forced_choice_accuracy(&eval, &sets),
        });
    }
    let mut buf = Vec::new();
    write_feature_report(&mut buf, &rows)?;
    write_file(&dir.join("feature_report.csv"), &String::from_utf8(buf)?)?;
    for r in &rows {
        let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
        println!(
            "{:<12} majority {}  context {}  model {}",
            r.feature,
            show(r.majority),
            show(r.context_baseline),
            show(r.full_model)
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

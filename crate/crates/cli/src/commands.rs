use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

use sfdialog::checkpoint::Checkpoint;
use sfdialog::eval::evaluate_model;
use sfdialog::example::{visdial_examples, Example};
use sfdialog::nn::{grad_check, GradCheckConfig};
use sfdialog::synthetic::{generate, random_examples, toy_glove, Family, SyntheticSpec};
use sfdialog::text::{build_vocab as make_vocab, encode_dataset, GloveTable, ImageFeatureStore, RawDataset, Vocabulary};
use sfdialog::train::TrainConfig;
use sfdialog::unroll::{audit, save_transcripts, unroll_many, DialogState, Players, PoolSpec};
use sfdialog::visdialq::{build_qdataset as build_q, visdialq_examples, QDataset};
use sfdialog::{model::BatchObjective, ModelConfig, ModelDims, SfModel, Task};

use crate::config::RunConfig;

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn out_path(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.required_path("out")
}

/// Writes the resolved configuration next to an output file.
fn write_resolved(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut name = out.as_os_str().to_owned();
    name.push(".config");
    std::fs::write(&name, cfg.render()).with_context(|| format!("writing {}", Path::new(&name).display()))
}

fn corpus_of(task: Task, path: &Path) -> Result<Vec<String>> {
    Ok(match task {
        Task::VisDial => RawDataset::load(path)?.corpus().map(str::to_owned).collect(),
        Task::VisDialQ => QDataset::load(path)?.corpus().map(str::to_owned).collect(),
    })
}

fn load_examples(task: Task, path: &Path, vocab: &Vocabulary, dims: &ModelDims) -> Result<Vec<Example>> {
    Ok(match task {
        Task::VisDial => visdial_examples(&encode_dataset(&RawDataset::load(path)?, vocab, dims)?),
        Task::VisDialQ => visdialq_examples(&QDataset::load(path)?, vocab, dims)?,
    })
}

fn load_features(cfg: &RunConfig) -> Result<Option<ImageFeatureStore>> {
    cfg.path("features").map(ImageFeatureStore::load).transpose().map_err(Into::into)
}

pub fn build_vocab(cfg: &RunConfig) -> Result<()> {
    let out = out_path(cfg)?;
    let corpus = corpus_of(cfg.task()?, &cfg.required_path("dataset")?)?;
    let vocab = make_vocab(corpus.iter(), cfg.get("min_count")?)?;
    vocab.save(&out)?;
    write_resolved(cfg, &out)?;
    println!("words={} out={}", vocab.len(), out.display());
    Ok(())
}

pub fn build_qdataset(cfg: &RunConfig) -> Result<()> {
    let out = out_path(cfg)?;
    let dataset = RawDataset::load(cfg.required_path("dataset")?)?;
    let glove = GloveTable::load(cfg.required_path("glove")?)?;
    let q = build_q(&dataset, &glove, cfg.get("seed")?)?;
    let json = q.to_json()?;
    std::fs::write(&out, &json)?;
    write_resolved(cfg, &out)?;
    let counts = q.provenance_counts();
    let counts: Vec<String> = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("rows={} {} sha256={} out={}", q.rows(), counts.join(" "), digest(json.as_bytes()), out.display());
    Ok(())
}

pub fn train_config(cfg: &RunConfig) -> Result<TrainConfig> {
    let task = cfg.task()?;
    let mut t = TrainConfig::new(task, cfg.get("variant")?);
    t.mlp_depth = cfg.get("mlp_depth")?;
    t.shared_embeddings = cfg.flag("shared_embeddings")?;
    t.learning_rate = cfg.get("learning_rate")?;
    t.batch_size = cfg.get("batch_size")?;
    t.max_epochs = cfg.get("max_epochs")?;
    t.patience = cfg.get("patience")?;
    t.clip_norm = cfg.optional("clip_norm")?;
    t.max_steps = cfg.optional("max_steps")?;
    t.seed = cfg.get("seed")?;
    t.dims = cfg.dims()?;
    Ok(t)
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let out = out_path(cfg)?;
    let tc = train_config(cfg)?;
    let train_path = cfg.required_path("dataset")?;
    let vocab = match cfg.path("vocab") {
        Some(p) => Vocabulary::load(p)?,
        None => make_vocab(corpus_of(tc.task, &train_path)?.iter(), cfg.get("min_count")?)?,
    };
    let train_set = load_examples(tc.task, &train_path, &vocab, &tc.dims)?;
    let val_set = match cfg.path("val_dataset") {
        Some(p) => load_examples(tc.task, &p, &vocab, &tc.dims)?,
        None => Vec::new(),
    };
    let features = load_features(cfg)?;
    let mut log = String::new();
    let outcome = sfdialog::train::train(&train_set, &val_set, features.as_ref(), vocab.len(), &tc, |e| {
        println!("{e}");
        log.push_str(&format!("{e}\n"));
    })?;
    let mut ckpt = Checkpoint::new(outcome.model, vocab, tc.seed)?;
    ckpt.train_config = Some(serde_json::to_value(tc)?);
    ckpt.save(&out)?;
    let mut log_path = out.as_os_str().to_owned();
    log_path.push(".log");
    std::fs::write(&log_path, log)?;
    write_resolved(cfg, &out)?;
    println!("best_epoch={} sha256={} out={}", outcome.best_epoch, digest(&std::fs::read(&out)?), out.display());
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let task = cfg.task()?;
    let ckpt = Checkpoint::load(cfg.required_path("checkpoint")?)?;
    let dims = ckpt.model.config().dims;
    let examples = load_examples(task, &cfg.required_path("dataset")?, &ckpt.vocab, &dims)?;
    if examples.is_empty() {
        bail!("dataset has no rounds to evaluate");
    }
    let features = load_features(cfg)?;
    let ev = evaluate_model(&ckpt.model, task, &examples, features.as_ref())?;
    let out = cfg.path("out");
    let rank_log = cfg.path("rank_log").or_else(|| {
        out.as_ref().map(|o| {
            let mut p = o.as_os_str().to_owned();
            p.push(".ranks");
            PathBuf::from(p)
        })
    });
    if let Some(p) = &rank_log {
        ev.write_rank_log(p)?;
    }
    if let Some(o) = &out {
        std::fs::write(o, serde_json::to_string_pretty(&ev.report)? + "\n")?;
        write_resolved(cfg, o)?;
    }
    println!("{}", ev.report);
    Ok(())
}

pub fn unroll(cfg: &RunConfig) -> Result<()> {
    let out = out_path(cfg)?;
    let questioner = Checkpoint::load(cfg.required_path("q_checkpoint")?)?;
    let answerer = Checkpoint::load(cfg.required_path("a_checkpoint")?)?;
    let dataset = RawDataset::load(cfg.required_path("dataset")?)?;
    let features = ImageFeatureStore::load(cfg.required_path("features")?)?;
    let spec = PoolSpec {
        n_neighbor_images: cfg.get("n_neighbor_images")?,
        pool_size: cfg.get("pool_size")?,
        top_m: cfg.get("top_m")?,
        seed: cfg.get("seed")?,
    };
    let history_rounds: usize = cfg.get("history_rounds")?;
    let n: usize = cfg.get("transcripts")?;
    let states = dataset
        .data
        .dialogs
        .iter()
        .take(n)
        .map(|d| DialogState::from_dataset(&dataset, d.image_id, history_rounds))
        .collect::<sfdialog::Result<Vec<_>>>()?;
    let players = Players { questioner: &questioner, answerer: &answerer };
    let transcripts = unroll_many(&states, cfg.get("rounds")?, &players, &dataset, &features, &spec)?;
    for t in &transcripts {
        audit(t).map_err(|e| anyhow::anyhow!("audit failed: {e}"))?;
    }
    save_transcripts(&transcripts, &out)?;
    write_resolved(cfg, &out)?;
    println!(
        "transcripts={} rounds={} audit=ok sha256={} out={}",
        transcripts.len(),
        transcripts.iter().map(|t| t.rounds.len()).sum::<usize>(),
        digest(&std::fs::read(&out)?),
        out.display()
    );
    Ok(())
}

pub fn gradcheck(cfg: &RunConfig) -> Result<()> {
    let task = cfg.task()?;
    let dims = cfg.dims_from(ModelDims::compact(4, 8, 16, 8, 12))?;
    let model_cfg = ModelConfig {
        task,
        variant: cfg.get("variant")?,
        mlp_depth: cfg.get("mlp_depth")?,
        shared_embeddings: cfg.flag("shared_embeddings")?,
        vocab_size: cfg.get("vocab_size")?,
        dims,
    };
    let seed = cfg.get("seed")?;
    let (batch, features) = random_examples(&model_cfg, cfg.get("batch")?, cfg.get("options")?, seed)?;
    let mut model = SfModel::new(model_cfg, seed)?;
    let mut objective = BatchObjective { model: &mut model, batch: &batch, features: Some(&features) };
    let report = grad_check(&mut objective, GradCheckConfig::default())?;
    println!(
        "max_rel_error={:.3e} worst={}[{}] checked={} tolerance={:.0e} pass={}",
        report.max_rel_error,
        report.worst_param,
        report.worst_index,
        report.checked,
        report.tolerance,
        report.passed()
    );
    if !report.passed() {
        bail!("gradient check failed: max relative error {:.3e}", report.max_rel_error);
    }
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let out = out_path(cfg)?;
    let family = match cfg.raw("family") {
        "memorize" => Family::Memorize,
        "history" => Family::HistoryCue,
        "image" => Family::ImageCue,
        other => bail!("unknown family {other:?}: expected memorize, history or image"),
    };
    let seed: u64 = cfg.get("seed")?;
    let split = generate(&SyntheticSpec {
        family,
        n_dialogs: cfg.get("dialogs")?,
        n_options: cfg.get("options")?,
        feature_dim: cfg.get("feature_dim")?,
        first_image_id: cfg.get("first_image_id")?,
        seed,
        family_seed: 0,
    })?;
    std::fs::create_dir_all(&out)?;
    split.dataset.save(out.join("dataset.json"))?;
    split.features.save(out.join("features.bin"))?;
    toy_glove(split.dataset.corpus(), cfg.get("glove_dim")?, seed)?.save(out.join("glove.txt"))?;
    std::fs::write(out.join("run.config"), cfg.render())?;
    println!("dialogs={} out={}", split.dataset.data.dialogs.len(), out.display());
    Ok(())
}

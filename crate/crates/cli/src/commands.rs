//! The five pipeline stages. Each reads the previous stages' outputs from the
//! run's output directory and writes its own outputs plus a copy of the
//! resolved configuration.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use binllm::codec::CodeBook;
use binllm::collab::{
    encode_all, init_model, load_checkpoint, save_checkpoint, train, Checkpoint, FinalMetrics, ModelKind,
    TrainConfig,
};
use binllm::dataset::{
    binarize_labels, chronological_split, file_sha256, ingest_interactions, load_item_catalog, partition_warm_cold,
    Partition, SplitManifest, SplitSet,
};
use binllm::eval::{evaluate, read_score_dump, write_score_dump, MetricsReport, Scorer};
use binllm::promptgen::{build_corpus, write_corpus, CorpusOptions, PromptTemplate};

use crate::config::{RunConfig, ScorerName};
use crate::error::{io_failure, CliResult, Failure};

pub const CONFIG_COPY: &str = "run_config.toml";

/// JSON sidecar written next to `checkpoint.bin`.
#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: ModelKind,
    pub dim: usize,
    pub n_users: usize,
    pub n_items: usize,
    pub train_config: TrainConfig,
    pub final_metrics: FinalMetrics,
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

/// Creates `dir` and drops the resolved configuration into it.
fn prepare_output(cfg: &RunConfig, dir: &Path) -> CliResult<()> {
    create_dir(dir)?;
    write_file(&dir.join(CONFIG_COPY), cfg.to_toml())
}

fn require_input(path: &Path, produced_by: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::user(anyhow!(
            "{} not found; run `binllm {produced_by}` first",
            path.display()
        )))
    }
}

fn load_split(cfg: &RunConfig) -> CliResult<SplitSet> {
    let dir = cfg.split_dir();
    require_input(&dir.join("train.tsv"), "ingest")?;
    Ok(SplitSet::load(&dir)?)
}

fn load_model(cfg: &RunConfig, split: &SplitSet) -> CliResult<(Checkpoint, CheckpointMeta)> {
    let dir = cfg.model_dir();
    let bin = dir.join("checkpoint.bin");
    require_input(&bin, "train")?;
    let ckpt = load_checkpoint(&bin).map_err(|e| io_failure(&bin, e))?;
    let meta_path = dir.join("checkpoint.json");
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| io_failure(&meta_path, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&meta_text)
        .map_err(|e| Failure::data(anyhow!("{}: {e}", meta_path.display())))?;
    if ckpt.model.n_users() != split.n_users() || ckpt.model.n_items() != split.n_items() {
        return Err(Failure::data(anyhow!(
            "checkpoint covers {} users / {} items but the split has {} / {}; retrain after re-ingesting",
            ckpt.model.n_users(),
            ckpt.model.n_items(),
            split.n_users(),
            split.n_items()
        )));
    }
    Ok((ckpt, meta))
}

fn load_codes(cfg: &RunConfig) -> CliResult<CodeBook> {
    let path = cfg.codes_path();
    require_input(&path, "encode")?;
    Ok(CodeBook::read_dump(&path)?.0)
}

fn required_path<'a>(value: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Failure::user(anyhow!("configuration key `{key}` is required for this command")))
}

pub fn ingest(cfg: &RunConfig) -> CliResult<()> {
    let source = required_path(&cfg.interactions, "interactions")?;
    let ratios = cfg.ratios().map_err(Failure::user)?;
    let rows = ingest_interactions(source, &cfg.interaction_schema())?;
    let labeled = binarize_labels(&rows, cfg.label_threshold);
    let split = chronological_split(&labeled, ratios)?;

    let dir = cfg.split_dir();
    prepare_output(cfg, &dir)?;
    split.save(&dir)?;
    let manifest = SplitManifest::describe(&split, source, file_sha256(source)?, ratios, cfg.label_threshold);
    write_file(&dir.join("manifest.json"), manifest.to_json())?;
    info!(
        "split {} interactions into {}/{}/{} ({} users, {} items) under {}",
        rows.len(),
        split.train.len(),
        split.valid.len(),
        split.test.len(),
        split.n_users(),
        split.n_items(),
        dir.display()
    );
    Ok(())
}

pub fn train_model(cfg: &RunConfig) -> CliResult<()> {
    let split = load_split(cfg)?;
    let train_cfg = cfg.train_config();
    let (model, head) = init_model(split.n_users(), split.n_items(), cfg.dim, cfg.seed)?;
    let outcome = train(
        cfg.model,
        model,
        head,
        &split.indexed(Partition::Train),
        &split.indexed(Partition::Valid),
        &train_cfg,
    )?;

    let dir = cfg.model_dir();
    prepare_output(cfg, &dir)?;
    let ckpt = Checkpoint {
        model: outcome.model,
        head: outcome.head,
        temperature: train_cfg.temperature,
    };
    let bin = dir.join("checkpoint.bin");
    save_checkpoint(&bin, &ckpt).map_err(|e| io_failure(&bin, e))?;
    let meta = CheckpointMeta {
        kind: cfg.model,
        dim: cfg.dim,
        n_users: split.n_users(),
        n_items: split.n_items(),
        train_config: train_cfg,
        final_metrics: FinalMetrics {
            best_epoch: outcome.best_epoch,
            best_valid_auc: outcome.best_valid_auc,
            epochs_run: outcome.log.len(),
        },
    };
    write_file(
        &dir.join("checkpoint.json"),
        serde_json::to_string_pretty(&meta).map_err(Failure::internal)? + "\n",
    )?;
    let mut log = String::new();
    for row in &outcome.log {
        log.push_str(&serde_json::to_string(row).map_err(Failure::internal)?);
        log.push('\n');
    }
    write_file(&dir.join("train_log.jsonl"), log)?;
    info!(
        "trained {:?} for {} epochs (best valid AUC {:?} at epoch {:?}); wrote {}",
        cfg.model,
        meta.final_metrics.epochs_run,
        meta.final_metrics.best_valid_auc,
        meta.final_metrics.best_epoch,
        bin.display()
    );
    Ok(())
}

pub fn encode(cfg: &RunConfig) -> CliResult<()> {
    let split = load_split(cfg)?;
    let (ckpt, meta) = load_model(cfg, &split)?;
    if meta.kind != ModelKind::Binmf {
        return Err(Failure::user(anyhow!(
            "encode needs a binmf checkpoint; this one was trained as {:?}",
            meta.kind
        )));
    }
    let d = ckpt.model.dim();
    if cfg.code_format == binllm::CodeFormat::DotDecimal && !d.is_multiple_of(8) {
        return Err(Failure::user(anyhow!(
            "code_format dot_decimal needs a code width divisible by 8; the checkpoint has d = {d}"
        )));
    }
    let codes = encode_all(&ckpt.model, &ckpt.head)?;
    let book = codes.to_codebook(&split.user_index, &split.item_index)?;
    let path = cfg.codes_path();
    prepare_output(cfg, path.parent().expect("codes path has a parent"))?;
    book.write_dump(&path, cfg.code_format)?;
    info!("wrote {} codes of width {d} to {}", book.len(), path.display());
    Ok(())
}

pub fn corpus(cfg: &RunConfig) -> CliResult<()> {
    let split = load_split(cfg)?;
    let catalog_path = required_path(&cfg.catalog, "catalog")?;
    let catalog = load_item_catalog(catalog_path, &cfg.catalog_schema())?;
    let template = match &cfg.template {
        Some(path) => PromptTemplate::new(&fs::read_to_string(path).map_err(|e| io_failure(path, e))?)?,
        None => PromptTemplate::default(),
    };
    let modes = cfg.corpus_mode.modes();
    let codes = if modes.contains(&binllm::CorpusMode::Full) {
        Some(load_codes(cfg)?)
    } else {
        None
    };
    let tags = partition_warm_cold(&split, cfg.min_user, cfg.min_item);

    let dir = cfg.corpus_dir();
    prepare_output(cfg, &dir)?;
    for &mode in modes {
        let opts = CorpusOptions {
            template: &template,
            mode,
            format: cfg.code_format,
            history_len: cfg.history_len,
        };
        for partition in Partition::ALL {
            let test_tags = (partition == Partition::Test).then_some(tags.as_slice());
            let records = build_corpus(&split, partition, test_tags, &catalog, codes.as_ref(), &opts)?;
            let path = dir.join(format!("{partition}.{mode}.jsonl"));
            write_corpus(&path, &records).map_err(|e| io_failure(&path, e))?;
            info!("wrote {} records to {}", records.len(), path.display());
        }
    }
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> CliResult<()> {
    let scorer = cfg.scorer;
    let (report, examples) = if scorer == ScorerName::Dump {
        let path = required_path(&cfg.score_dump, "score_dump")?;
        let examples = read_score_dump(path)?;
        (MetricsReport::from_examples(scorer.name(), &examples), examples)
    } else {
        let split = load_split(cfg)?;
        let tags = partition_warm_cold(&split, cfg.min_user, cfg.min_item);
        match scorer {
            ScorerName::BitAnd => {
                let book = load_codes(cfg)?;
                evaluate(&Scorer::BitAnd(&book), &split, &tags)?
            }
            ScorerName::Mf | ScorerName::Binmf => {
                let (ckpt, meta) = load_model(cfg, &split)?;
                if scorer == ScorerName::Binmf && meta.kind != ModelKind::Binmf {
                    warn!("scoring a {:?} checkpoint with binmf codes", meta.kind);
                }
                let s = if scorer == ScorerName::Mf {
                    Scorer::Mf(&ckpt.model)
                } else {
                    Scorer::Binmf {
                        model: &ckpt.model,
                        head: &ckpt.head,
                        temperature: ckpt.temperature,
                    }
                };
                evaluate(&s, &split, &tags)?
            }
            ScorerName::Dump => unreachable!(),
        }
    };

    let dir = cfg.eval_dir();
    prepare_output(cfg, &dir)?;
    let stem = dir.join(scorer.name());
    let with_ext = |ext: &str| PathBuf::from(format!("{}.{ext}", stem.display()));
    write_file(&with_ext("report.json"), report.to_json())?;
    write_file(&with_ext("report.txt"), report.to_table())?;
    if scorer != ScorerName::Dump {
        write_score_dump(&with_ext("scores.jsonl"), &examples)?;
    }
    print!("{}", report.to_table());

    for seg in &report.segments {
        for err in &seg.errors {
            warn!("segment {}: {err}", seg.segment);
        }
    }
    match report.segment("all") {
        Some(all) if all.auc.is_some() => Ok(()),
        _ => Err(Failure::data(anyhow!(
            "no metric is defined on the full test set; partial report written to {}",
            dir.display()
        ))),
    }
}

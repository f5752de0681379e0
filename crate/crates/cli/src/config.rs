//! Flat run configuration: defaults, then the `--config` file, then
//! command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

use binllm::codec::CodeFormat;
use binllm::collab::{ModelKind, Optimizer, TrainConfig};
use binllm::dataset::{CatalogSchema, InteractionSchema, SplitRatios};
use binllm::promptgen::CorpusMode;

/// Which corpus variants `corpus` writes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSelection {
    #[value(name = "text_only")]
    TextOnly,
    Full,
    Both,
}

impl CorpusSelection {
    pub fn modes(self) -> &'static [CorpusMode] {
        match self {
            CorpusSelection::TextOnly => &[CorpusMode::TextOnly],
            CorpusSelection::Full => &[CorpusMode::Full],
            CorpusSelection::Both => &[CorpusMode::TextOnly, CorpusMode::Full],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScorerName {
    Mf,
    Binmf,
    #[value(name = "bit_and")]
    BitAnd,
    /// Scores read from an external score dump.
    Dump,
}

impl ScorerName {
    pub fn name(self) -> &'static str {
        match self {
            ScorerName::Mf => "mf",
            ScorerName::Binmf => "binmf",
            ScorerName::BitAnd => "bit_and",
            ScorerName::Dump => "dump",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaPreset {
    /// `::`-separated, no header.
    Movielens,
    /// `,`-separated, no header.
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub interactions: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub schema: SchemaPreset,
    /// Overrides the preset's separator.
    pub separator: Option<String>,
    pub has_header: bool,
    pub user_col: usize,
    pub item_col: usize,
    pub rating_col: usize,
    pub timestamp_col: usize,
    pub catalog_item_col: usize,
    pub catalog_title_col: usize,

    pub label_threshold: f64,
    pub train_ratio: f64,
    pub valid_ratio: f64,
    pub test_ratio: f64,
    pub min_user: usize,
    pub min_item: usize,

    pub dim: usize,
    pub model: ModelKind,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// τ; `√dim` when unset.
    pub temperature: Option<f64>,
    pub weight_decay: f64,

    pub code_format: CodeFormat,
    pub corpus_mode: CorpusSelection,
    pub history_len: usize,
    /// Prompt template file; the built-in template when unset.
    pub template: Option<PathBuf>,

    pub scorer: ScorerName,
    /// Input for `scorer = "dump"`.
    pub score_dump: Option<PathBuf>,

    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let ratios = SplitRatios::default();
        let schema = InteractionSchema::movielens();
        let catalog = CatalogSchema::movielens();
        Self {
            interactions: None,
            catalog: None,
            schema: SchemaPreset::Movielens,
            separator: None,
            has_header: false,
            user_col: schema.user_col,
            item_col: schema.item_col,
            rating_col: schema.rating_col,
            timestamp_col: schema.timestamp_col,
            catalog_item_col: catalog.item_col,
            catalog_title_col: catalog.title_col,
            label_threshold: 3.0,
            train_ratio: ratios.train,
            valid_ratio: ratios.valid,
            test_ratio: ratios.test,
            min_user: 3,
            min_item: 3,
            dim: 32,
            model: ModelKind::Binmf,
            optimizer: train.optimizer,
            learning_rate: train.learning_rate,
            momentum: train.momentum,
            batch_size: train.batch_size,
            max_epochs: train.max_epochs,
            early_stop_patience: train.early_stop_patience,
            temperature: None,
            weight_decay: train.weight_decay,
            code_format: CodeFormat::Binary,
            corpus_mode: CorpusSelection::Both,
            history_len: binllm::promptgen::DEFAULT_HISTORY_LEN,
            template: None,
            scorer: ScorerName::Binmf,
            score_dump: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

/// Parses a `--set` value as a TOML scalar, falling back to a bare string.
fn override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

impl RunConfig {
    /// Resolves the configuration: defaults < file < `overrides` (in order).
    pub fn resolve(file: Option<&Path>, overrides: &[(String, toml::Value)]) -> anyhow::Result<Self> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config file {}", path.display()))?;
                toml::from_str::<toml::Table>(&text)
                    .with_context(|| format!("config file {} is not a flat key-value document", path.display()))?
            }
            None => toml::Table::new(),
        };
        if let Some((key, _)) = table.iter().find(|(_, v)| v.is_table()) {
            bail!("config key {key:?} is a section; the config file must be flat");
        }
        for (key, value) in overrides {
            table.insert(key.clone(), value.clone());
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse_override(raw: &str) -> Result<(String, toml::Value), String> {
        let (key, value) = raw
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got {raw:?}"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(format!("empty key in {raw:?}"));
        }
        Ok((key.to_owned(), override_value(value.trim())))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.ratios()?;
        if self.dim == 0 {
            bail!("dim must be positive");
        }
        if !self.label_threshold.is_finite() {
            bail!("label_threshold must be finite");
        }
        self.train_config().validate()?;
        if self.code_format == CodeFormat::DotDecimal && !self.dim.is_multiple_of(8) {
            bail!("code_format dot_decimal needs dim divisible by 8 (dim = {})", self.dim);
        }
        if self.history_len == 0 {
            bail!("history_len must be positive");
        }
        if self.separator.as_deref() == Some("") {
            bail!("separator must not be empty");
        }
        Ok(())
    }

    pub fn ratios(&self) -> anyhow::Result<SplitRatios> {
        SplitRatios::new(self.train_ratio, self.valid_ratio, self.test_ratio).map_err(|e| anyhow!(e))
    }

    pub fn interaction_schema(&self) -> InteractionSchema {
        let preset = match self.schema {
            SchemaPreset::Movielens => InteractionSchema::movielens(),
            SchemaPreset::Csv => InteractionSchema::csv(),
        };
        InteractionSchema {
            separator: self.separator.clone().unwrap_or(preset.separator),
            user_col: self.user_col,
            item_col: self.item_col,
            rating_col: self.rating_col,
            timestamp_col: self.timestamp_col,
            has_header: self.has_header,
        }
    }

    pub fn catalog_schema(&self) -> CatalogSchema {
        let preset = match self.schema {
            SchemaPreset::Movielens => CatalogSchema::movielens(),
            SchemaPreset::Csv => CatalogSchema::csv(),
        };
        CatalogSchema {
            separator: self.separator.clone().unwrap_or(preset.separator),
            item_col: self.catalog_item_col,
            title_col: self.catalog_title_col,
            has_header: self.has_header,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            optimizer: self.optimizer,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            early_stop_patience: self.early_stop_patience,
            temperature: self.temperature.unwrap_or((self.dim as f64).sqrt()),
            weight_decay: self.weight_decay,
            seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn split_dir(&self) -> PathBuf {
        self.out_dir.join("split")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.out_dir.join("model")
    }

    pub fn codes_path(&self) -> PathBuf {
        self.out_dir.join("codes").join("codes.tsv")
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.out_dir.join("corpus")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.out_dir.join("eval")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_is_cli_over_file_over_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "dim = 16\nseed = 4\nmax_epochs = 3\n").unwrap();
        let cfg = RunConfig::resolve(Some(&path), &[RunConfig::parse_override("seed=9").unwrap()]).unwrap();
        assert_eq!(cfg.dim, 16);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.max_epochs, 3);
        assert_eq!(cfg.batch_size, 1024);
        assert_eq!(cfg.train_config().temperature, 4.0);
    }

    #[test]
    fn overrides_parse_as_toml_scalars_or_strings() {
        let (k, v) = RunConfig::parse_override("code_format=dot_decimal").unwrap();
        assert_eq!((k.as_str(), v), ("code_format", toml::Value::String("dot_decimal".into())));
        let (_, v) = RunConfig::parse_override("learning_rate=0.01").unwrap();
        assert_eq!(v, toml::Value::Float(0.01));
        assert!(RunConfig::parse_override("no_equals").is_err());
    }

    #[test]
    fn rejects_unknown_keys_sections_and_bad_values() {
        let set = |s: &str| vec![RunConfig::parse_override(s).unwrap()];
        assert!(RunConfig::resolve(None, &set("dimm=3")).is_err());
        assert!(RunConfig::resolve(None, &set("scorer=cosine")).is_err());
        assert!(RunConfig::resolve(None, &set("train_ratio=0.9")).is_err());
        assert!(RunConfig::resolve(None, &[
            RunConfig::parse_override("dim=12").unwrap(),
            RunConfig::parse_override("code_format=dot_decimal").unwrap(),
        ])
        .is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[train]\ndim = 3\n").unwrap();
        assert!(RunConfig::resolve(Some(&path), &[]).is_err());
    }

    #[test]
    fn resolved_config_roundtrips_through_toml() {
        let cfg = RunConfig {
            temperature: Some(2.5),
            interactions: Some("ratings.dat".into()),
            ..RunConfig::default()
        };
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }
}

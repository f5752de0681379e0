//! Python bindings: codec, metrics, prompt rendering and the BinMF/MF model.
//!
//! Codes cross the boundary as strings, either `"0110…"` or dot-decimal
//! `"172.16.254.1"`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use binllm::codec::{self, code_to_binary_string, BinaryCode, CodeFormat, CodeText};
use binllm::collab::{
    self, encode_all, init_model, load_checkpoint, save_checkpoint, BinarizationHead, Checkpoint, CollabModel,
    ModelKind, Optimizer, TrainConfig,
};
use binllm::dataset::SegmentTag;
use binllm::eval::{self, ScoredExample};
use binllm::promptgen::{self, CorpusMode, PromptTemplate};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Accepts either rendering of a code.
fn code_text(s: &str) -> PyResult<CodeText> {
    let format = if s.contains('.') { CodeFormat::DotDecimal } else { CodeFormat::Binary };
    CodeText::parse(s, format).map_err(value_err)
}

fn code(s: &str) -> PyResult<BinaryCode> {
    Ok(code_text(s)?.to_code())
}

/// Binary string → dot-decimal string.
#[pyfunction]
fn compress_dot_decimal(bits: &str) -> PyResult<String> {
    let text = CodeText::binary(bits).map_err(value_err)?;
    Ok(codec::compress_dot_decimal(&text).map_err(value_err)?.as_str().to_owned())
}

/// Dot-decimal string → binary string.
#[pyfunction]
fn decompress_dot_decimal(dotted: &str) -> PyResult<String> {
    let text = CodeText::dot_decimal(dotted).map_err(value_err)?;
    Ok(codec::decompress_dot_decimal(&text).map_err(value_err)?.as_str().to_owned())
}

/// Rank-based AUC with tied scores sharing their average rank.
#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    eval::auc_of(&scores, &labels).map_err(value_err)
}

/// Unweighted mean of per-user AUC; returns `(value, users_counted, users_excluded)`.
#[pyfunction]
fn uauc(user_ids: Vec<String>, scores: Vec<f64>, labels: Vec<u8>) -> PyResult<(f64, usize, usize)> {
    if user_ids.len() != scores.len() || scores.len() != labels.len() {
        return Err(value_err("user_ids, scores and labels must have equal length"));
    }
    let examples: Vec<ScoredExample> = user_ids
        .into_iter()
        .zip(scores)
        .zip(labels)
        .map(|((user_id, score), label)| ScoredExample {
            user_id,
            item_id: String::new(),
            score,
            label,
            segment: SegmentTag::Warm,
        })
        .collect();
    let r = eval::uauc(&examples).map_err(value_err)?;
    Ok((r.value, r.n_users_counted, r.n_users_excluded))
}

/// popcount of the AND of two codes.
#[pyfunction]
fn bitwise_and_score(code_u: &str, code_i: &str) -> PyResult<u32> {
    eval::bitwise_and_score(&code(code_u)?, &code(code_i)?).map_err(value_err)
}

/// `logistic(±1 inner product / τ)`.
#[pyfunction]
#[pyo3(signature = (code_u, code_i, temperature=None))]
fn score_binmf(code_u: &str, code_i: &str, temperature: Option<f64>) -> PyResult<f64> {
    let (u, i) = (code(code_u)?, code(code_i)?);
    let tau = temperature.unwrap_or((u.len() as f64).sqrt());
    collab::score_binmf(&u, &i, tau).map_err(value_err)
}

/// Renders one prompt. `mode="full"` needs both codes; `template=None` uses
/// the built-in template.
#[pyfunction]
#[pyo3(signature = (history_titles, target_title, user_code=None, item_code=None, mode="full", template=None, history_len=promptgen::DEFAULT_HISTORY_LEN))]
fn render_prompt(
    history_titles: Vec<String>,
    target_title: &str,
    user_code: Option<&str>,
    item_code: Option<&str>,
    mode: &str,
    template: Option<&str>,
    history_len: usize,
) -> PyResult<String> {
    let mode: CorpusMode = mode.parse().map_err(value_err)?;
    let template = match template {
        Some(t) => PromptTemplate::new(t).map_err(value_err)?,
        None => PromptTemplate::default(),
    };
    let codes = match (user_code, item_code) {
        (Some(u), Some(i)) => Some((code_text(u)?, code_text(i)?)),
        (None, None) => None,
        _ => return Err(value_err("give both user_code and item_code, or neither")),
    };
    promptgen::render_prompt(
        &template,
        &history_titles,
        codes.as_ref().map(|(u, i)| (u, i)),
        target_title,
        mode,
        history_len,
    )
    .map_err(value_err)
}

/// Embedding tables plus binarization head, indexed by dense user/item ids.
#[pyclass(name = "Model", module = "binllm")]
struct PyModel {
    model: CollabModel,
    head: BinarizationHead,
    temperature: f64,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (n_users, n_items, dim=32, seed=0))]
    fn new(n_users: usize, n_items: usize, dim: usize, seed: u64) -> PyResult<Self> {
        let (model, head) = init_model(n_users, n_items, dim, seed).map_err(value_err)?;
        Ok(Self {
            model,
            head,
            temperature: (dim as f64).sqrt(),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ckpt = load_checkpoint(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        Ok(Self {
            model: ckpt.model,
            head: ckpt.head,
            temperature: ckpt.temperature,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let ckpt = Checkpoint {
            model: self.model.clone(),
            head: self.head.clone(),
            temperature: self.temperature,
        };
        save_checkpoint(&path, &ckpt).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.model.dim()
    }

    #[getter]
    fn n_users(&self) -> usize {
        self.model.n_users()
    }

    #[getter]
    fn n_items(&self) -> usize {
        self.model.n_items()
    }

    #[getter]
    fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Trains in place on `(user, item, label)` rows and returns the epoch
    /// log as a list of dicts. Keyword arguments override `TrainConfig`
    /// fields (`learning_rate`, `batch_size`, `max_epochs`, ...).
    #[pyo3(signature = (train, valid, kind="binmf", **options))]
    fn train<'py>(
        &mut self,
        py: Python<'py>,
        train: Vec<(usize, usize, u8)>,
        valid: Vec<(usize, usize, u8)>,
        kind: &str,
        options: Option<&Bound<'py, PyDict>>,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let kind: ModelKind = kind.parse().map_err(value_err)?;
        let mut cfg = TrainConfig::with_dim(self.model.dim());
        if let Some(opts) = options {
            for (key, value) in opts.iter() {
                let key: String = key.extract()?;
                match key.as_str() {
                    "learning_rate" => cfg.learning_rate = value.extract()?,
                    "momentum" => cfg.momentum = value.extract()?,
                    "batch_size" => cfg.batch_size = value.extract()?,
                    "max_epochs" => cfg.max_epochs = value.extract()?,
                    "early_stop_patience" => cfg.early_stop_patience = value.extract()?,
                    "temperature" => cfg.temperature = value.extract()?,
                    "weight_decay" => cfg.weight_decay = value.extract()?,
                    "seed" => cfg.seed = value.extract()?,
                    "optimizer" => {
                        cfg.optimizer = match value.extract::<String>()?.as_str() {
                            "adam" => Optimizer::Adam,
                            "momentum" => Optimizer::Momentum,
                            other => return Err(value_err(format!("unknown optimizer {other:?}"))),
                        }
                    }
                    other => return Err(value_err(format!("unknown training option {other:?}"))),
                }
            }
        }
        let (model, head) = (self.model.clone(), self.head.clone());
        let outcome = py
            .detach(|| collab::train(kind, model, head, &train, &valid, &cfg))
            .map_err(value_err)?;
        self.model = outcome.model;
        self.head = outcome.head;
        self.temperature = cfg.temperature;
        outcome
            .log
            .iter()
            .map(|row| {
                let d = PyDict::new(py);
                d.set_item("epoch", row.epoch)?;
                d.set_item("train_loss", row.train_loss)?;
                d.set_item("valid_auc", row.valid_auc)?;
                Ok(d)
            })
            .collect()
    }

    /// Binary-string codes for every user and every item.
    fn encode(&self) -> PyResult<(Vec<String>, Vec<String>)> {
        let codes = encode_all(&self.model, &self.head).map_err(value_err)?;
        let render = |cs: &[BinaryCode]| cs.iter().map(|c| code_to_binary_string(c).as_str().to_owned()).collect();
        Ok((render(&codes.users), render(&codes.items)))
    }

    /// BinMF probability for each `(user, item)` pair.
    fn score(&self, pairs: Vec<(usize, usize)>) -> PyResult<Vec<f64>> {
        let codes = encode_all(&self.model, &self.head).map_err(value_err)?;
        pairs
            .into_iter()
            .map(|(u, i)| {
                let cu = codes.users.get(u).ok_or_else(|| value_err(format!("user index {u} out of range")))?;
                let ci = codes.items.get(i).ok_or_else(|| value_err(format!("item index {i} out of range")))?;
                collab::score_binmf(cu, ci, self.temperature).map_err(value_err)
            })
            .collect()
    }
}

#[pymodule]
#[pyo3(name = "binllm")]
fn binllm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(compress_dot_decimal, m)?)?;
    m.add_function(wrap_pyfunction!(decompress_dot_decimal, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(uauc, m)?)?;
    m.add_function(wrap_pyfunction!(bitwise_and_score, m)?)?;
    m.add_function(wrap_pyfunction!(score_binmf, m)?)?;
    m.add_function(wrap_pyfunction!(render_prompt, m)?)?;
    m.add_class::<PyModel>()?;
    m.add("DEFAULT_TEMPLATE", promptgen::DEFAULT_TEMPLATE)?;
    Ok(())
}

//! AUC / UAUC over all, warm and cold test rows for pluggable scorers.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{check_len, BinaryCode, CodeBook, CodecError, EntityKind};
use crate::collab::{encode_all, score_binmf, score_mf, BinarizationHead, CollabError, CollabModel};
use crate::dataset::{SegmentTag, SplitSet};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("AUC undefined: {positives} positive and {negatives} negative examples")]
    SingleClass { positives: usize, negatives: usize },
    #[error("UAUC undefined: no user has both positive and negative examples")]
    NoEligibleUser,
    #[error("score {0} is not finite")]
    NonFinite(f64),
    #[error("{0} scores but {1} labels")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test row {row}: no {kind} code for {id:?}")]
    MissingCode { row: usize, kind: EntityKind, id: String },
    #[error("test row {row}: {kind} {id:?} is not in the model's index")]
    UnknownEntity { row: usize, kind: EntityKind, id: String },
    #[error("expected one segment tag per test row ({rows} rows, {tags} tags)")]
    TagCount { rows: usize, tags: usize },
    #[error(transparent)]
    Collab(#[from] CollabError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("score dump line {line}: {message}")]
    Dump { line: usize, message: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub user_id: String,
    pub item_id: String,
    pub score: f64,
    pub label: u8,
    pub segment: SegmentTag,
}

/// Rank-based AUC: `(Σ ranks of positives − P(P+1)/2) / (P·N)`, ties sharing
/// their average rank.
pub fn auc_of(scores: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    if let Some(&bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite(bad));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::SingleClass {
            positives,
            negatives,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start..end (0-based) → average 1-based rank
        let avg_rank = (start + end + 1) as f64 / 2.0;
        let tied_pos = order[start..end].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += avg_rank * tied_pos as f64;
        start = end;
    }
    let (p, n) = (positives as f64, negatives as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn auc(examples: &[ScoredExample]) -> Result<f64, MetricError> {
    let scores: Vec<f64> = examples.iter().map(|e| e.score).collect();
    let labels: Vec<u8> = examples.iter().map(|e| e.label).collect();
    auc_of(&scores, &labels)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserAuc {
    pub value: f64,
    pub n_users_counted: usize,
    pub n_users_excluded: usize,
}

/// Unweighted mean of per-user AUC over users with both label classes.
pub fn uauc(examples: &[ScoredExample]) -> Result<UserAuc, MetricError> {
    let mut by_user: BTreeMap<&str, (Vec<f64>, Vec<u8>)> = BTreeMap::new();
    for e in examples {
        let entry = by_user.entry(e.user_id.as_str()).or_default();
        entry.0.push(e.score);
        entry.1.push(e.label);
    }
    let mut total = 0.0;
    let mut counted = 0;
    for (scores, labels) in by_user.values() {
        match auc_of(scores, labels) {
            Ok(v) => {
                total += v;
                counted += 1;
            }
            Err(MetricError::SingleClass { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if counted == 0 {
        return Err(MetricError::NoEligibleUser);
    }
    Ok(UserAuc {
        value: total / counted as f64,
        n_users_counted: counted,
        n_users_excluded: by_user.len() - counted,
    })
}

/// popcount(x AND y)
pub fn bitwise_and_score(code_u: &BinaryCode, code_i: &BinaryCode) -> Result<u32, CodecError> {
    check_len(code_u, code_i)?;
    Ok(code_u
        .packed()
        .iter()
        .zip(code_i.packed())
        .map(|(a, b)| (a & b).count_ones())
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub segment: String,
    pub n_examples: usize,
    pub auc: Option<f64>,
    pub uauc: Option<f64>,
    pub n_users_counted: usize,
    pub n_users_excluded: usize,
    pub errors: Vec<String>,
}

impl SegmentReport {
    fn compute(segment: &str, examples: &[ScoredExample]) -> Self {
        let mut errors = Vec::new();
        let auc = auc(examples).map_err(|e| errors.push(format!("auc: {e}"))).ok();
        let user = uauc(examples).map_err(|e| errors.push(format!("uauc: {e}"))).ok();
        let n_users = examples
            .iter()
            .map(|e| e.user_id.as_str())
            .collect::<HashSet<_>>()
            .len();
        Self {
            segment: segment.to_owned(),
            n_examples: examples.len(),
            auc,
            uauc: user.map(|u| u.value),
            n_users_counted: user.map_or(0, |u| u.n_users_counted),
            n_users_excluded: user.map_or(n_users, |u| u.n_users_excluded),
            errors,
        }
    }
}

/// Metrics for the segments `all`, `warm` and `cold`, in that order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scorer: String,
    pub segments: Vec<SegmentReport>,
}

impl MetricsReport {
    pub fn from_examples(scorer: &str, examples: &[ScoredExample]) -> Self {
        let pick = |tag: SegmentTag| -> Vec<ScoredExample> {
            examples.iter().filter(|e| e.segment == tag).cloned().collect()
        };
        Self {
            scorer: scorer.to_owned(),
            segments: vec![
                SegmentReport::compute("all", examples),
                SegmentReport::compute("warm", &pick(SegmentTag::Warm)),
                SegmentReport::compute("cold", &pick(SegmentTag::Cold)),
            ],
        }
    }

    pub fn segment(&self, name: &str) -> Option<&SegmentReport> {
        self.segments.iter().find(|s| s.segment == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let fmt_metric = |m: Option<f64>| m.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.4}"));
        let mut out = String::new();
        writeln!(out, "scorer: {}", self.scorer).unwrap();
        writeln!(
            out,
            "{:<8} {:>10} {:>8} {:>8} {:>14} {:>15}",
            "segment", "examples", "AUC", "UAUC", "users_counted", "users_excluded"
        )
        .unwrap();
        for s in &self.segments {
            writeln!(
                out,
                "{:<8} {:>10} {:>8} {:>8} {:>14} {:>15}",
                s.segment,
                s.n_examples,
                fmt_metric(s.auc),
                fmt_metric(s.uauc),
                s.n_users_counted,
                s.n_users_excluded
            )
            .unwrap();
        }
        for s in &self.segments {
            for e in &s.errors {
                writeln!(out, "{}: {e}", s.segment).unwrap();
            }
        }
        out
    }
}

/// The scoring rule applied to each test pair.
pub enum Scorer<'a> {
    /// `logistic(e_u · e_i)` on the real embeddings.
    Mf(&'a CollabModel),
    /// ±1 code inner product through `logistic(· / τ)`.
    Binmf {
        model: &'a CollabModel,
        head: &'a BinarizationHead,
        temperature: f64,
    },
    /// popcount of the AND of the two codes.
    BitAnd(&'a CodeBook),
}

impl Scorer<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Scorer::Mf(_) => "mf",
            Scorer::Binmf { .. } => "binmf",
            Scorer::BitAnd(_) => "bit_and",
        }
    }
}

/// Scores every test row of `split`. `tags` must be aligned with `split.test`.
pub fn score_test(scorer: &Scorer<'_>, split: &SplitSet, tags: &[SegmentTag]) -> Result<Vec<ScoredExample>, EvalError> {
    if tags.len() != split.test.len() {
        return Err(EvalError::TagCount {
            rows: split.test.len(),
            tags: tags.len(),
        });
    }
    let index_of = |row: usize, kind: EntityKind, id: &str| {
        let idx = match kind {
            EntityKind::User => split.user_index.get(id),
            EntityKind::Item => split.item_index.get(id),
        };
        idx.ok_or_else(|| EvalError::UnknownEntity {
            row,
            kind,
            id: id.to_owned(),
        })
    };
    let codes = match scorer {
        Scorer::Binmf { model, head, .. } => Some(encode_all(model, head)?),
        _ => None,
    };
    let mut out = Vec::with_capacity(split.test.len());
    for (row, (r, &segment)) in split.test.iter().zip(tags).enumerate() {
        let score = match scorer {
            Scorer::Mf(model) => {
                let u = index_of(row, EntityKind::User, r.user_id())?;
                let i = index_of(row, EntityKind::Item, r.item_id())?;
                score_mf(model.embed(u, EntityKind::User)?, model.embed(i, EntityKind::Item)?)?
            }
            Scorer::Binmf { temperature, .. } => {
                let codes = codes.as_ref().expect("encoded above");
                let u = index_of(row, EntityKind::User, r.user_id())?;
                let i = index_of(row, EntityKind::Item, r.item_id())?;
                let missing = |kind, id: &str| EvalError::MissingCode {
                    row,
                    kind,
                    id: id.to_owned(),
                };
                let cu = codes.get(EntityKind::User, u).ok_or_else(|| missing(EntityKind::User, r.user_id()))?;
                let ci = codes.get(EntityKind::Item, i).ok_or_else(|| missing(EntityKind::Item, r.item_id()))?;
                score_binmf(cu, ci, *temperature)?
            }
            Scorer::BitAnd(book) => {
                let lookup = |kind, id: &str| {
                    book.get(kind, id).ok_or_else(|| EvalError::MissingCode {
                        row,
                        kind,
                        id: id.to_owned(),
                    })
                };
                let cu = lookup(EntityKind::User, r.user_id())?;
                let ci = lookup(EntityKind::Item, r.item_id())?;
                f64::from(bitwise_and_score(cu, ci)?)
            }
        };
        out.push(ScoredExample {
            user_id: r.user_id().to_owned(),
            item_id: r.item_id().to_owned(),
            score,
            label: r.label,
            segment,
        });
    }
    Ok(out)
}

/// Scores the test rows and computes per-segment metrics. Undefined metrics in
/// one segment are recorded in that segment's `errors` and do not abort the
/// others.
pub fn evaluate(
    scorer: &Scorer<'_>,
    split: &SplitSet,
    tags: &[SegmentTag],
) -> Result<(MetricsReport, Vec<ScoredExample>), EvalError> {
    let examples = score_test(scorer, split, tags)?;
    Ok((MetricsReport::from_examples(scorer.name(), &examples), examples))
}

/// JSON Lines, one `ScoredExample` per line.
pub fn write_score_dump(path: &Path, examples: &[ScoredExample]) -> Result<(), EvalError> {
    let mut out = String::new();
    for e in examples {
        out.push_str(&serde_json::to_string(e).expect("example serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_score_dump(path: &Path) -> Result<Vec<ScoredExample>, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, line)| {
            let e: ScoredExample = serde_json::from_str(line).map_err(|err| EvalError::Dump {
                line: idx + 1,
                message: err.to_string(),
            })?;
            if !e.score.is_finite() || e.label > 1 {
                return Err(EvalError::Dump {
                    line: idx + 1,
                    message: "score must be finite and label 0 or 1".into(),
                });
            }
            Ok(e)
        })
        .collect()
}

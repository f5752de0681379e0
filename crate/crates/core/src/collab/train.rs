use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dot, logistic, ste_backward, BinarizationHead, CollabError, CollabModel, Matrix};
use crate::codec::EntityKind;
use crate::eval::auc_of;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Binary codes scored by their ±1 inner product.
    #[default]
    Binmf,
    /// Real embeddings scored by their inner product.
    Mf,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binmf" => Ok(ModelKind::Binmf),
            "mf" => Ok(ModelKind::Mf),
            other => Err(format!("unknown model kind {other:?} (expected binmf or mf)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Heavy-ball SGD.
    Momentum,
    /// Adam; `momentum` is its first-moment decay.
    #[default]
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// Score scale τ: the logit is `h_u · h_i / τ`.
    pub temperature: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            optimizer: Optimizer::Adam,
            batch_size: 1024,
            max_epochs: 100,
            early_stop_patience: 5,
            temperature: 32f64.sqrt(),
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// τ = √d.
    pub fn with_dim(dim: usize) -> Self {
        Self {
            temperature: (dim as f64).sqrt(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CollabError> {
        let bad = |what: &str| Err(CollabError::Config(what.to_owned()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be positive");
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        Ok(())
    }
}

/// What the forward pass feeds into the score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodeActivation {
    /// ±1 codes; gradients pass the sign straight through.
    Sign,
    /// The tanh activations themselves. This is the differentiable surrogate
    /// whose exact gradient equals the straight-through gradient.
    Identity,
}

/// Gradients with the same shapes as the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub user: Matrix,
    pub item: Matrix,
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Gradients {
    fn zeros(model: &CollabModel) -> Self {
        let d = model.dim();
        Self {
            user: Matrix::zeros(model.n_users(), d),
            item: Matrix::zeros(model.n_items(), d),
            weight: Matrix::zeros(d, d),
            bias: vec![0.0; d],
        }
    }
}

struct Encoded {
    activations: Vec<f64>,
    code: Vec<f64>,
}

fn encode_row(head: &BinarizationHead, e: &[f64], activation: CodeActivation) -> Encoded {
    let activations = head.activations(e);
    let code = match activation {
        CodeActivation::Sign => activations
            .iter()
            .map(|&a| if a > 0.0 { 1.0 } else { -1.0 })
            .collect(),
        CodeActivation::Identity => activations.clone(),
    };
    Encoded { activations, code }
}

/// BCE-with-logits of `x` against label `t`.
fn bce_with_logit(x: f64, t: f64) -> f64 {
    x.max(0.0) - x * t + (-x.abs()).exp().ln_1p()
}

/// Mean BCE over `batch` and its gradient for the binary-code model.
pub fn batch_loss_and_grads(
    model: &CollabModel,
    head: &BinarizationHead,
    batch: &[(usize, usize, u8)],
    tau: f64,
    activation: CodeActivation,
) -> (f64, Gradients) {
    let mut grads = Gradients::zeros(model);
    if batch.is_empty() {
        return (0.0, grads);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for &(u, i, label) in batch {
        let e_u = model.user_table.row(u);
        let e_i = model.item_table.row(i);
        let hu = encode_row(head, e_u, activation);
        let hi = encode_row(head, e_i, activation);
        let x = dot(&hu.code, &hi.code) / tau;
        let t = f64::from(label);
        loss += bce_with_logit(x, t);
        let g_score = (logistic(x) - t) / tau * scale;

        for (side, enc, other, e) in [
            (EntityKind::User, &hu, &hi, e_u),
            (EntityKind::Item, &hi, &hu, e_i),
        ] {
            let upstream: Vec<f64> = other.code.iter().map(|c| g_score * c).collect();
            let through_sign = match activation {
                CodeActivation::Sign => ste_backward(&upstream),
                CodeActivation::Identity => upstream,
            };
            let dz: Vec<f64> = through_sign
                .iter()
                .zip(&enc.activations)
                .map(|(g, a)| g * (1.0 - a * a))
                .collect();
            for (r, &dzr) in dz.iter().enumerate() {
                grads.bias[r] += dzr;
                for (w, &ek) in grads.weight.row_mut(r).iter_mut().zip(e) {
                    *w += dzr * ek;
                }
            }
            let de = head.weight.matvec_t(&dz);
            let (table, idx) = match side {
                EntityKind::User => (&mut grads.user, u),
                EntityKind::Item => (&mut grads.item, i),
            };
            table.row_mut(idx).iter_mut().zip(&de).for_each(|(g, d)| *g += d);
        }
    }
    (loss * scale, grads)
}

fn mf_loss_and_grads(model: &CollabModel, batch: &[(usize, usize, u8)]) -> (f64, Gradients) {
    let mut grads = Gradients::zeros(model);
    if batch.is_empty() {
        return (0.0, grads);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for &(u, i, label) in batch {
        let e_u = model.user_table.row(u);
        let e_i = model.item_table.row(i);
        let x = dot(e_u, e_i);
        let t = f64::from(label);
        loss += bce_with_logit(x, t);
        let g = (logistic(x) - t) * scale;
        grads.user.row_mut(u).iter_mut().zip(e_i).for_each(|(d, v)| *d += g * v);
        grads.item.row_mut(i).iter_mut().zip(e_u).for_each(|(d, v)| *d += g * v);
    }
    (loss * scale, grads)
}

/// Per-parameter-block optimizer state, indexed by `[user, item, weight, bias]`.
struct OptimizerState {
    kind: Optimizer,
    first: [Vec<f64>; 4],
    second: [Vec<f64>; 4],
    step: i32,
}

impl OptimizerState {
    fn new(kind: Optimizer, sizes: [usize; 4]) -> Self {
        Self {
            kind,
            first: sizes.map(|n| vec![0.0; n]),
            second: sizes.map(|n| if kind == Optimizer::Adam { vec![0.0; n] } else { Vec::new() }),
            step: 0,
        }
    }

    fn apply(&mut self, cfg: &TrainConfig, params: [&mut [f64]; 4], grads: [&[f64]; 4]) {
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.step += 1;
        let lr = cfg.learning_rate;
        let mu = cfg.momentum;
        for (block, (param, grad)) in params.into_iter().zip(grads).enumerate() {
            let decay = if block < 2 { cfg.weight_decay } else { 0.0 };
            match self.kind {
                Optimizer::Momentum => {
                    for ((p, &g), v) in param.iter_mut().zip(grad).zip(&mut self.first[block]) {
                        *v = mu * *v + g + decay * *p;
                        *p -= lr * *v;
                    }
                }
                Optimizer::Adam => {
                    let bc1 = 1.0 - mu.powi(self.step);
                    let bc2 = 1.0 - BETA2.powi(self.step);
                    let m = &mut self.first[block];
                    let s = &mut self.second[block];
                    for (k, (p, &g)) in param.iter_mut().zip(grad).enumerate() {
                        let g = g + decay * *p;
                        m[k] = mu * m[k] + (1.0 - mu) * g;
                        s[k] = BETA2 * s[k] + (1.0 - BETA2) * g * g;
                        *p -= lr * (m[k] / bc1) / ((s[k] / bc2).sqrt() + EPS);
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_auc: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: CollabModel,
    pub head: BinarizationHead,
    pub log: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub best_valid_auc: Option<f64>,
}

fn check_rows(model: &CollabModel, rows: &[(usize, usize, u8)]) -> Result<(), CollabError> {
    for &(u, i, _) in rows {
        model.embed(u, EntityKind::User)?;
        model.embed(i, EntityKind::Item)?;
    }
    Ok(())
}

fn check_two_classes(rows: &[(usize, usize, u8)], what: &str) -> Result<(), CollabError> {
    if rows.is_empty() {
        return Err(CollabError::DegenerateLabels(format!("{what} set is empty")));
    }
    let positives = rows.iter().filter(|r| r.2 == 1).count();
    if positives == 0 || positives == rows.len() {
        return Err(CollabError::DegenerateLabels(format!(
            "all {} {what} labels are {}; binary cross-entropy needs both classes",
            rows.len(),
            u8::from(positives > 0)
        )));
    }
    Ok(())
}

/// Ranking scores of `rows` under the scorer of `kind` (pre-logistic).
pub(crate) fn score_rows(
    kind: ModelKind,
    model: &CollabModel,
    head: &BinarizationHead,
    rows: &[(usize, usize, u8)],
) -> Vec<f64> {
    match kind {
        ModelKind::Mf => rows
            .iter()
            .map(|&(u, i, _)| dot(model.user_table.row(u), model.item_table.row(i)))
            .collect(),
        ModelKind::Binmf => {
            let sign = |e: &[f64]| encode_row(head, e, CodeActivation::Sign).code;
            let users: Vec<Vec<f64>> = (0..model.n_users()).map(|u| sign(model.user_table.row(u))).collect();
            let items: Vec<Vec<f64>> = (0..model.n_items()).map(|i| sign(model.item_table.row(i))).collect();
            rows.iter().map(|&(u, i, _)| dot(&users[u], &items[i])).collect()
        }
    }
}

/// Minibatch training with early stopping on validation AUC. Returns the
/// parameters of the best validation epoch.
pub fn train(
    kind: ModelKind,
    model: CollabModel,
    head: BinarizationHead,
    train: &[(usize, usize, u8)],
    valid: &[(usize, usize, u8)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, CollabError> {
    cfg.validate()?;
    check_rows(&model, train)?;
    check_rows(&model, valid)?;
    check_two_classes(train, "training")?;
    check_two_classes(valid, "validation")?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let d = model.dim();
    let mut state = OptimizerState::new(
        cfg.optimizer,
        [model.n_users() * d, model.n_items() * d, d * d, d],
    );
    let mut current = (model.clone(), head.clone());
    let mut best = (model, head);
    let mut best_auc: Option<f64> = None;
    let mut best_epoch = None;
    let mut since_best = 0;
    let mut log = Vec::new();

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&k| train[k]).collect();
            let (model, head) = &mut current;
            let (loss, grads) = match kind {
                ModelKind::Binmf => {
                    batch_loss_and_grads(model, head, &batch, cfg.temperature, CodeActivation::Sign)
                }
                ModelKind::Mf => mf_loss_and_grads(model, &batch),
            };
            loss_sum += loss * batch.len() as f64;
            let params = [
                model.user_table.as_mut_slice(),
                model.item_table.as_mut_slice(),
                head.weight.as_mut_slice(),
                head.bias.as_mut_slice(),
            ];
            let g = [
                grads.user.as_slice(),
                grads.item.as_slice(),
                grads.weight.as_slice(),
                grads.bias.as_slice(),
            ];
            match kind {
                ModelKind::Binmf => state.apply(cfg, params, g),
                ModelKind::Mf => {
                    let [pu, pi, _, _] = params;
                    let [gu, gi, _, _] = g;
                    state.apply(cfg, [pu, pi, &mut [], &mut []], [gu, gi, &[], &[]]);
                }
            }
        }
        let train_loss = loss_sum / train.len() as f64;
        let scores = score_rows(kind, &current.0, &current.1, valid);
        let labels: Vec<u8> = valid.iter().map(|r| r.2).collect();
        let valid_auc = auc_of(&scores, &labels).expect("validation has both classes");
        info!("epoch {epoch}: train loss {train_loss:.5}, valid AUC {valid_auc:.4}");
        log.push(EpochLog {
            epoch,
            train_loss,
            valid_auc,
        });
        if !current.0.is_finite() {
            return Err(CollabError::Config(format!(
                "parameters diverged at epoch {epoch}; lower the learning rate"
            )));
        }
        if best_auc.is_none_or(|b| valid_auc > b) {
            best_auc = Some(valid_auc);
            best_epoch = Some(epoch);
            best = current.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best.0,
        head: best.1,
        log,
        best_epoch,
        best_valid_auc: best_auc,
    })
}

pub fn train_binmf(
    model: CollabModel,
    head: BinarizationHead,
    train_rows: &[(usize, usize, u8)],
    valid_rows: &[(usize, usize, u8)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, CollabError> {
    train(ModelKind::Binmf, model, head, train_rows, valid_rows, cfg)
}

pub fn train_mf(
    model: CollabModel,
    train_rows: &[(usize, usize, u8)],
    valid_rows: &[(usize, usize, u8)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, CollabError> {
    let head = BinarizationHead::identity(model.dim());
    train(ModelKind::Mf, model, head, train_rows, valid_rows, cfg)
}

//! Matrix-factorization model with a tanh/sign binarization head.
//!
//! An entity embedding `e` becomes a code through `sign(tanh(W e + b))`,
//! where `sign(x) = 1` if `x > 0` and `0` otherwise. Training maps codes to
//! ±1 and scores a pair by `logistic(h_u · h_i / τ)`; the sign is bypassed in
//! the backward pass (straight-through estimator).

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use train::{
    batch_loss_and_grads, train, train_binmf, train_mf, CodeActivation, EpochLog, Gradients,
    ModelKind, Optimizer, TrainConfig, TrainOutcome,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{BinaryCode, CodeBook, CodecError, EntityKind};
use crate::dataset::EntityIndex;

#[derive(Debug, Error)]
pub enum CollabError {
    #[error("dimensions must be positive (n_users={n_users}, n_items={n_items}, d={dim})")]
    ZeroDimension {
        n_users: usize,
        n_items: usize,
        dim: usize,
    },
    #[error("{kind} index {index} out of range (table has {len} rows)")]
    IndexOutOfRange {
        kind: EntityKind,
        index: usize,
        len: usize,
    },
    #[error("non-finite value in input vector")]
    NonFinite,
    #[error("width mismatch: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("{0}")]
    DegenerateLabels(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// `self · x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `selfᵀ · y`
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// User and item embedding tables.
#[derive(Clone, Debug, PartialEq)]
pub struct CollabModel {
    pub user_table: Matrix,
    pub item_table: Matrix,
}

impl CollabModel {
    pub fn dim(&self) -> usize {
        self.user_table.cols()
    }

    pub fn n_users(&self) -> usize {
        self.user_table.rows()
    }

    pub fn n_items(&self) -> usize {
        self.item_table.rows()
    }

    pub fn table(&self, kind: EntityKind) -> &Matrix {
        match kind {
            EntityKind::User => &self.user_table,
            EntityKind::Item => &self.item_table,
        }
    }

    pub fn table_mut(&mut self, kind: EntityKind) -> &mut Matrix {
        match kind {
            EntityKind::User => &mut self.user_table,
            EntityKind::Item => &mut self.item_table,
        }
    }

    pub fn embed(&self, index: usize, kind: EntityKind) -> Result<&[f64], CollabError> {
        let table = self.table(kind);
        if index >= table.rows() {
            return Err(CollabError::IndexOutOfRange {
                kind,
                index,
                len: table.rows(),
            });
        }
        Ok(table.row(index))
    }

    pub fn is_finite(&self) -> bool {
        self.user_table
            .as_slice()
            .iter()
            .chain(self.item_table.as_slice())
            .all(|v| v.is_finite())
    }
}

/// Fully connected layer `W e + b` followed by tanh and sign.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarizationHead {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl BinarizationHead {
    pub fn identity(dim: usize) -> Self {
        Self {
            weight: Matrix::identity(dim),
            bias: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    /// `tanh(W e + b)`
    pub fn activations(&self, e: &[f64]) -> Vec<f64> {
        self.weight
            .matvec(e)
            .into_iter()
            .zip(&self.bias)
            .map(|(z, b)| (z + b).tanh())
            .collect()
    }

    pub fn binarize(&self, e: &[f64]) -> Result<BinaryCode, CollabError> {
        if e.len() != self.weight.cols() {
            return Err(CollabError::WidthMismatch(self.weight.cols(), e.len()));
        }
        if e.iter().any(|v| !v.is_finite()) {
            return Err(CollabError::NonFinite);
        }
        Ok(code_from_activations(&self.activations(e)))
    }
}

/// Bit j is 1 iff activation j is strictly positive.
pub fn code_from_activations(activations: &[f64]) -> BinaryCode {
    BinaryCode::new(activations.iter().map(|&a| a > 0.0).collect())
}

const EMBEDDING_INIT_STD: f64 = 0.01;

/// Random embeddings (N(0, 0.01²)) and an orthogonal head with zero bias,
/// deterministic in `seed`.
pub fn init_model(
    n_users: usize,
    n_items: usize,
    dim: usize,
    seed: u64,
) -> Result<(CollabModel, BinarizationHead), CollabError> {
    if n_users == 0 || n_items == 0 || dim == 0 {
        return Err(CollabError::ZeroDimension {
            n_users,
            n_items,
            dim,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, EMBEDDING_INIT_STD).expect("valid std");
    let mut table = |rows: usize| {
        Matrix::from_vec(
            rows,
            dim,
            (0..rows * dim).map(|_| normal.sample(&mut rng)).collect(),
        )
    };
    let user_table = table(n_users);
    let item_table = table(n_items);
    let weight = random_orthogonal(dim, &mut rng);
    Ok((
        CollabModel {
            user_table,
            item_table,
        },
        BinarizationHead {
            weight,
            bias: vec![0.0; dim],
        },
    ))
}

/// Gram-Schmidt on a Gaussian matrix.
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let std_normal = Normal::new(0.0, 1.0).expect("valid std");
    let mut m = Matrix::zeros(n, n);
    for r in 0..n {
        loop {
            let mut v: Vec<f64> = (0..n).map(|_| std_normal.sample(rng)).collect();
            for prev in 0..r {
                let p = m.row(prev).to_vec();
                let proj = dot(&v, &p);
                v.iter_mut().zip(&p).for_each(|(x, q)| *x -= proj * q);
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-8 {
                m.row_mut(r)
                    .iter_mut()
                    .zip(&v)
                    .for_each(|(dst, x)| *dst = x / norm);
                break;
            }
        }
    }
    m
}

/// `logistic(Σ u_j i_j / τ)` over the ±1 images of the codes.
pub fn score_binmf(code_u: &BinaryCode, code_i: &BinaryCode, tau: f64) -> Result<f64, CollabError> {
    let s = code_u.signed_dot(code_i)?;
    Ok(logistic(f64::from(s) / tau))
}

/// `logistic(e_u · e_i)`
pub fn score_mf(e_u: &[f64], e_i: &[f64]) -> Result<f64, CollabError> {
    if e_u.len() != e_i.len() {
        return Err(CollabError::WidthMismatch(e_u.len(), e_i.len()));
    }
    Ok(logistic(dot(e_u, e_i)))
}

/// Backward pass of the sign function: the upstream gradient passes through
/// unchanged.
pub fn ste_backward(upstream: &[f64]) -> Vec<f64> {
    upstream.to_vec()
}

/// Codes for every user and item, by dense index.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedCodes {
    pub users: Vec<BinaryCode>,
    pub items: Vec<BinaryCode>,
}

impl EncodedCodes {
    pub fn get(&self, kind: EntityKind, index: usize) -> Option<&BinaryCode> {
        match kind {
            EntityKind::User => self.users.get(index),
            EntityKind::Item => self.items.get(index),
        }
    }

    pub fn len(&self) -> usize {
        self.users.len() + self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Re-keys the codes by raw identifier.
    pub fn to_codebook(&self, users: &EntityIndex, items: &EntityIndex) -> Result<CodeBook, CollabError> {
        let dim = self.users.first().or(self.items.first()).map_or(0, BinaryCode::len);
        let mut book = CodeBook::new(dim);
        for (kind, index, codes) in [
            (EntityKind::User, users, &self.users),
            (EntityKind::Item, items, &self.items),
        ] {
            for (i, id) in index.ids().iter().enumerate() {
                let code = codes.get(i).ok_or(CollabError::IndexOutOfRange {
                    kind,
                    index: i,
                    len: codes.len(),
                })?;
                book.insert(kind, id, code.clone())?;
            }
        }
        Ok(book)
    }
}

pub fn encode_all(model: &CollabModel, head: &BinarizationHead) -> Result<EncodedCodes, CollabError> {
    let sweep = |table: &Matrix| {
        (0..table.rows())
            .map(|r| head.binarize(table.row(r)))
            .collect::<Result<Vec<_>, _>>()
    };
    Ok(EncodedCodes {
        users: sweep(&model.user_table)?,
        items: sweep(&model.item_table)?,
    })
}

/// Summary metrics stored next to a checkpoint.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub best_epoch: Option<usize>,
    pub best_valid_auc: Option<f64>,
    pub epochs_run: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::parse_binary_string;
    use proptest::prelude::*;

    #[test]
    fn init_is_deterministic() {
        let a = init_model(10, 20, 32, 7).unwrap();
        let b = init_model(10, 20, 32, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.1.bias.iter().all(|v| *v == 0.0));
        assert_ne!(a.0, init_model(10, 20, 32, 8).unwrap().0);
    }

    #[test]
    fn init_rejects_zero_dims() {
        assert!(matches!(init_model(10, 20, 0, 1), Err(CollabError::ZeroDimension { .. })));
        assert!(init_model(0, 20, 8, 1).is_err());
    }

    #[test]
    fn head_weight_is_orthogonal() {
        let (_, head) = init_model(1, 1, 16, 3).unwrap();
        for r in 0..16 {
            for c in 0..16 {
                let g = dot(head.weight.row(r), head.weight.row(c));
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!((g - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn embed_reads_the_right_table() {
        let (mut model, _) = init_model(3, 4, 2, 1).unwrap();
        model.user_table.row_mut(1).copy_from_slice(&[1.5, -2.0]);
        model.item_table.row_mut(1).copy_from_slice(&[9.0, 9.0]);
        assert_eq!(model.embed(1, EntityKind::User).unwrap(), &[1.5, -2.0]);
        assert_eq!(model.embed(1, EntityKind::Item).unwrap(), &[9.0, 9.0]);
        assert!(matches!(
            model.embed(3, EntityKind::User),
            Err(CollabError::IndexOutOfRange { index: 3, len: 3, .. })
        ));
        assert!(model.embed(3, EntityKind::Item).is_ok());
    }

    #[test]
    fn sign_rule_zero_maps_to_zero() {
        let code = code_from_activations(&[0.3, -0.2, 0.0, 0.9]);
        assert_eq!(code, BinaryCode::from_bits(&[1, 0, 0, 1]));
    }

    #[test]
    fn binarize_edges() {
        let head = BinarizationHead::identity(4);
        assert_eq!(
            head.binarize(&[0.1, 2.0, 0.5, 3.0]).unwrap(),
            BinaryCode::from_bits(&[1, 1, 1, 1])
        );
        assert_eq!(head.binarize(&[0.0; 4]).unwrap(), BinaryCode::from_bits(&[0, 0, 0, 0]));
        assert!(matches!(head.binarize(&[f64::NAN, 0.0, 0.0, 0.0]), Err(CollabError::NonFinite)));
        assert!(head.binarize(&[1.0]).is_err());
    }

    #[test]
    fn binmf_scores() {
        let a = BinaryCode::new((0..32).map(|k| k % 2 == 0).collect());
        let comp = BinaryCode::new(a.bits().iter().map(|b| !b).collect());
        assert!((score_binmf(&a, &a, 1.0).unwrap() - 1.0).abs() < 1e-9);
        assert!(score_binmf(&a, &comp, 1.0).unwrap() < 1e-9);
        let half = BinaryCode::new((0..32).map(|k| k < 16).collect());
        let other = BinaryCode::new((0..32).map(|k| !(8..24).contains(&k)).collect());
        assert_eq!(half.hamming(&other).unwrap(), 16);
        assert_eq!(score_binmf(&half, &other, 1.0).unwrap(), 0.5);
        assert!(score_binmf(&a, &parse_binary_string("1").unwrap(), 1.0).is_err());
    }

    #[test]
    fn mf_scores() {
        assert_eq!(score_mf(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.5);
        assert_eq!(score_mf(&[0.0; 4], &[0.0; 4]).unwrap(), 0.5);
        let e = [1.0, 3.0];
        assert!((score_mf(&e, &e).unwrap() - logistic(10.0)).abs() < 1e-15);
        assert!(matches!(score_mf(&[1.0], &[1.0, 2.0]), Err(CollabError::WidthMismatch(1, 2))));
    }

    #[test]
    fn ste_is_identity() {
        assert_eq!(ste_backward(&[0.1, -0.2]), vec![0.1, -0.2]);
        assert_eq!(ste_backward(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn encode_all_matches_binarize() {
        let (model, head) = init_model(5, 7, 16, 11).unwrap();
        let codes = encode_all(&model, &head).unwrap();
        assert_eq!(codes.len(), 12);
        for u in 0..5 {
            let direct = head.binarize(model.embed(u, EntityKind::User).unwrap()).unwrap();
            assert_eq!(codes.get(EntityKind::User, u), Some(&direct));
        }
        assert_eq!(codes, encode_all(&model, &head).unwrap());
    }

    proptest! {
        #[test]
        fn binarize_is_total(e in proptest::collection::vec(-1e6f64..1e6, 8)) {
            let (_, head) = init_model(1, 1, 8, 5).unwrap();
            let code = head.binarize(&e).unwrap();
            prop_assert_eq!(code.len(), 8);
        }

        #[test]
        fn binmf_symmetry(a in proptest::collection::vec(any::<bool>(), 32),
                          b in proptest::collection::vec(any::<bool>(), 32),
                          tau in 0.1f64..10.0) {
            let (x, y) = (BinaryCode::new(a), BinaryCode::new(b));
            prop_assert_eq!(score_binmf(&x, &y, tau).unwrap(), score_binmf(&y, &x, tau).unwrap());
            prop_assert_eq!(score_binmf(&x, &x, tau).unwrap(), logistic(32.0 / tau));
        }
    }
}

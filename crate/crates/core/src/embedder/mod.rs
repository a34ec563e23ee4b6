//! Attention-pooled trigram embeddings.
//!
//! A query `t_1 … t_n` is embedded as `z = Σ_i w_i v_{t_i}` with
//! `w = softmax(s)` and `s_i = ⟨a_i, v_{t_i}⟩`, where `v_t` is row `t` of the
//! embedding table and `a_i` row `i` of the per-position attention table.

mod loss;
mod sampling;
mod train;

pub use loss::{loss, loss_gradient, neg_log_sigmoid, Gradient, TrainingBatch, LOGIT_CLAMP};
pub use sampling::{sample_negatives, sample_positives, PositiveMode};
pub use train::{
    epoch_means, smoothed, train, Optimizer, TraceRow, TrainConfig, TrainOutcome, Trainer,
};

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot_unchecked, softmax, Matrix};
use crate::rng::standard_normal;
use crate::types::Query;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionModel {
    /// `m × d` trigram embeddings.
    pub emb: Matrix,
    /// `N × d` per-position score vectors.
    pub attn: Matrix,
}

/// Intermediate values of one query's forward pass.
#[derive(Debug, Clone)]
pub(crate) struct Forward {
    pub ids: Vec<usize>,
    pub weights: Vec<f64>,
    pub z: Vec<f64>,
}

impl AttentionModel {
    /// Embedding entries i.i.d. `N(0, 1/d)`, attention rows zero (uniform
    /// attention at start).
    pub fn new<R: Rng + ?Sized>(
        vocab_size: usize,
        dim: usize,
        max_len: usize,
        rng: &mut R,
    ) -> Self {
        let std = 1.0 / (dim as f64).sqrt();
        let data = (0..vocab_size * dim)
            .map(|_| std * standard_normal(rng))
            .collect();
        AttentionModel {
            emb: Matrix::from_vec(vocab_size, dim, data).expect("consistent shape"),
            attn: Matrix::zeros(max_len, dim),
        }
    }

    pub fn from_parts(emb: Matrix, attn: Matrix) -> Result<Self> {
        if emb.cols() != attn.cols() {
            return Err(Error::DimensionMismatch {
                left: emb.cols(),
                right: attn.cols(),
            });
        }
        if !emb.is_finite() || !attn.is_finite() {
            return Err(Error::ModelRejected("non-finite parameters".into()));
        }
        Ok(AttentionModel { emb, attn })
    }

    pub fn vocab_size(&self) -> usize {
        self.emb.rows()
    }

    pub fn dim(&self) -> usize {
        self.emb.cols()
    }

    pub fn max_len(&self) -> usize {
        self.attn.rows()
    }

    /// True while every attention row is still at its zero initialisation.
    pub fn has_untrained_attention(&self) -> bool {
        self.attn.as_slice().iter().all(|&x| x == 0.0)
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::EmptyQuery);
        }
        if ids.len() > self.max_len() {
            return Err(Error::QueryTooLong {
                len: ids.len(),
                max_len: self.max_len(),
            });
        }
        if let Some(&id) = ids.iter().find(|&&id| id >= self.vocab_size()) {
            return Err(Error::TrigramOutOfRange {
                id,
                vocab_size: self.vocab_size(),
            });
        }
        Ok(())
    }

    /// Raw attention scores `s_i = ⟨a_i, v_{t_i}⟩`.
    pub fn scores(&self, ids: &[usize]) -> Result<Vec<f64>> {
        self.check_ids(ids)?;
        Ok(ids
            .iter()
            .enumerate()
            .map(|(i, &t)| dot_unchecked(self.attn.row(i), self.emb.row(t)))
            .collect())
    }

    pub fn attention_weights(&self, q: &Query) -> Result<Vec<f64>> {
        Ok(softmax(&self.scores(&q.trigram_ids)?))
    }

    pub fn embed_query(&self, q: &Query) -> Result<Vec<f64>> {
        self.embed_ids(&q.trigram_ids)
    }

    pub fn embed_ids(&self, ids: &[usize]) -> Result<Vec<f64>> {
        Ok(self.forward(ids)?.z)
    }

    pub(crate) fn forward(&self, ids: &[usize]) -> Result<Forward> {
        let weights = softmax(&self.scores(ids)?);
        let mut z = vec![0.0; self.dim()];
        for (&t, &w) in ids.iter().zip(&weights) {
            axpy(w, self.emb.row(t), &mut z);
        }
        Ok(Forward {
            ids: ids.to_vec(),
            weights,
            z,
        })
    }

    /// Embeds every query into the rows of a matrix.
    pub fn embed_all(&self, queries: &[Query]) -> Result<Matrix> {
        let mut out = Matrix::zeros(queries.len(), self.dim());
        for (i, q) in queries.iter().enumerate() {
            out.row_mut(i).copy_from_slice(&self.embed_query(q)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn hand_model() -> AttentionModel {
        let emb = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, -1.0]]).unwrap();
        let attn = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        AttentionModel::from_parts(emb, attn).unwrap()
    }

    #[test]
    fn singleton_query_returns_its_trigram() {
        let model = AttentionModel::new(10, 4, 5, &mut stream(1, 0));
        let q = Query::new(vec![7], 0);
        assert_eq!(model.embed_query(&q).unwrap(), model.emb.row(7));
    }

    #[test]
    fn zero_attention_gives_plain_mean() {
        let model = AttentionModel::new(10, 4, 5, &mut stream(1, 0));
        let q = Query::new(vec![1, 2, 3], 0);
        let z = model.embed_query(&q).unwrap();
        for k in 0..4 {
            let mean = (model.emb.row(1)[k] + model.emb.row(2)[k] + model.emb.row(3)[k]) / 3.0;
            assert!((z[k] - mean).abs() < 1e-15);
        }
        let w = model.attention_weights(&q).unwrap();
        assert!(w.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn order_matters_when_attention_rows_differ() {
        // [0, 1]: scores (1, 0) → weights (e/(1+e), 1/(1+e)).
        // [1, 0]: scores (0, 0) → weights (1/2, 1/2).
        let model = hand_model();
        let a = model.embed_ids(&[0, 1]).unwrap();
        let b = model.embed_ids(&[1, 0]).unwrap();
        let e = std::f64::consts::E;
        assert!((a[0] - e / (1.0 + e)).abs() < 1e-15);
        assert!((a[1] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((b[0] - 0.5).abs() < 1e-15 && (b[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_weight_examples() {
        // scores [ln 2, 0] → [2/3, 1/3]
        let emb = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let attn = Matrix::from_rows(&[vec![2f64.ln(), 0.0], vec![0.0, 0.0]]).unwrap();
        let model = AttentionModel::from_parts(emb, attn).unwrap();
        let w = model.attention_weights(&Query::new(vec![0, 1], 0)).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_queries() {
        let model = hand_model();
        assert!(matches!(
            model.embed_ids(&[3]),
            Err(Error::TrigramOutOfRange { id: 3, .. })
        ));
        assert!(matches!(model.embed_ids(&[0, 0, 0, 0]), Err(Error::QueryTooLong { .. })));
        assert!(matches!(model.embed_ids(&[]), Err(Error::EmptyQuery)));
    }
}

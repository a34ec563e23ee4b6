use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{stream, streams};
use crate::types::{Query, QueryGraph};

use super::loss::{accumulate, Gradient, TrainingBatch};
use super::sampling::{sample_negatives, sample_positives, PositiveMode};
use super::AttentionModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    /// Adam applied lazily: only rows touched by a batch are updated.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    pub positive_mode: PositiveMode,
    /// Anchors per parameter update.
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Keep every attention row at zero, i.e. plain-mean embeddings.
    pub freeze_attention: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 10,
            negatives_per_positive: 5,
            positive_mode: PositiveMode::default(),
            batch_size: 32,
            seed: 0,
            optimizer: Optimizer::Sgd,
            freeze_attention: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives_per_positive must be positive");
        }
        match self.positive_mode {
            PositiveMode::Uniform { count: 0 } => return bad("positive count must be positive"),
            PositiveMode::Walks {
                walk_length,
                walks_per_node,
            } if walk_length == 0 || walks_per_node == 0 => {
                return bad("walk_length and walks_per_node must be positive")
            }
            _ => {}
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return bad("adam parameters out of range");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AttentionModel,
    pub trace: Vec<TraceRow>,
}

struct AdamState {
    m_emb: Matrix,
    v_emb: Matrix,
    m_attn: Matrix,
    v_attn: Matrix,
}

/// Owns the model and applies one optimizer update per call to `step`.
pub struct Trainer {
    model: AttentionModel,
    config: TrainConfig,
    grad: Gradient,
    adam: Option<AdamState>,
    steps: u64,
}

impl Trainer {
    pub fn new(model: AttentionModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = matches!(config.optimizer, Optimizer::Adam { .. }).then(|| AdamState {
            m_emb: Matrix::zeros(model.vocab_size(), model.dim()),
            v_emb: Matrix::zeros(model.vocab_size(), model.dim()),
            m_attn: Matrix::zeros(model.max_len(), model.dim()),
            v_attn: Matrix::zeros(model.max_len(), model.dim()),
        });
        Ok(Trainer {
            grad: Gradient::zeros_like(&model),
            model,
            config,
            adam,
            steps: 0,
        })
    }

    pub fn model(&self) -> &AttentionModel {
        &self.model
    }

    pub fn into_model(self) -> AttentionModel {
        self.model
    }

    /// Gradient of the mean loss over `batches`, as used by the last step.
    pub fn last_gradient(&self) -> &Gradient {
        &self.grad
    }

    /// One update on the mean loss over `batches`; returns that mean loss.
    pub fn step(&mut self, batches: &[TrainingBatch], store: &[Query]) -> Result<f64> {
        if batches.is_empty() {
            return Err(Error::EmptySamples("batches"));
        }
        self.grad.clear();
        let scale = 1.0 / batches.len() as f64;
        let mut total = 0.0;
        for b in batches {
            total += accumulate(&self.model, b, store, scale, &mut self.grad)?;
        }
        let mean = total * scale;
        if !mean.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: 0,
                batch: self.steps as usize,
            });
        }
        self.steps += 1;
        self.apply();
        Ok(mean)
    }

    fn apply(&mut self) {
        let lr = self.config.learning_rate;
        let g = &self.grad;
        let freeze = self.config.freeze_attention;
        match (&mut self.adam, self.config.optimizer) {
            (None, _) => {
                for &t in g.touched_emb_rows() {
                    sgd_row(self.model.emb.row_mut(t), g.emb.row(t), lr);
                }
                if !freeze {
                    for &i in g.touched_attn_rows() {
                        sgd_row(self.model.attn.row_mut(i), g.attn.row(i), lr);
                    }
                }
            }
            (Some(st), Optimizer::Adam { beta1, beta2, eps }) => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let h = AdamHyper { lr, beta1, beta2, eps, c1, c2 };
                for &r in g.touched_emb_rows() {
                    h.update(
                        self.model.emb.row_mut(r),
                        g.emb.row(r),
                        st.m_emb.row_mut(r),
                        st.v_emb.row_mut(r),
                    );
                }
                if !freeze {
                    for &r in g.touched_attn_rows() {
                        h.update(
                            self.model.attn.row_mut(r),
                            g.attn.row(r),
                            st.m_attn.row_mut(r),
                            st.v_attn.row_mut(r),
                        );
                    }
                }
            }
            (Some(_), Optimizer::Sgd) => unreachable!("adam state only exists for adam"),
        }
    }
}

fn sgd_row(param: &mut [f64], grad: &[f64], lr: f64) {
    for (p, g) in param.iter_mut().zip(grad) {
        *p -= lr * g;
    }
}

struct AdamHyper {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    c1: f64,
    c2: f64,
}

impl AdamHyper {
    fn update(&self, param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64]) {
        for k in 0..param.len() {
            m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * grad[k];
            v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            let mhat = m[k] / self.c1;
            let vhat = v[k] / self.c2;
            param[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Trains on the queries covered by `graph` (node ids index `store`).
///
/// Each epoch shuffles the non-isolated anchors with its own RNG stream,
/// so the run is a pure function of the seed.
pub fn train(
    model: AttentionModel,
    store: &[Query],
    graph: &QueryGraph,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if graph.n_nodes() > store.len() {
        return Err(Error::InvalidConfig(format!(
            "graph has {} nodes but only {} queries",
            graph.n_nodes(),
            store.len()
        )));
    }
    let mut trainer = Trainer::new(model, config.clone())?;
    let mut anchors: Vec<usize> = (0..graph.n_nodes()).filter(|&q| graph.degree(q) > 0).collect();
    let mut trace = Vec::new();
    for epoch in 0..config.epochs {
        let mut rng = stream(config.seed, streams::EPOCH_BASE + epoch as u64);
        anchors.shuffle(&mut rng);
        for (batch_idx, chunk) in anchors.chunks(config.batch_size).enumerate() {
            let mut batches = Vec::with_capacity(chunk.len());
            for &q in chunk {
                let positives = sample_positives(graph, q, config.positive_mode, &mut rng);
                if positives.is_empty() {
                    continue;
                }
                let k = positives.len() * config.negatives_per_positive;
                let negatives = sample_negatives(graph, q, k, &mut rng)?;
                batches.push(TrainingBatch {
                    anchor: q,
                    positives,
                    negatives,
                });
            }
            if batches.is_empty() {
                continue;
            }
            let loss = trainer.step(&batches, store).map_err(|e| match e {
                Error::NonFiniteLoss { .. } => Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                },
                other => other,
            })?;
            trace.push(TraceRow {
                epoch,
                batch: batch_idx,
                loss,
            });
        }
    }
    Ok(TrainOutcome {
        model: trainer.into_model(),
        trace,
    })
}

/// Means of consecutive non-overlapping blocks of `window` losses; a
/// trailing partial block is dropped.
pub fn smoothed(trace: &[TraceRow], window: usize) -> Vec<f64> {
    assert!(window > 0, "window must be positive");
    trace
        .chunks_exact(window)
        .map(|c| c.iter().map(|r| r.loss).sum::<f64>() / window as f64)
        .collect()
}

/// Mean batch loss per epoch, in epoch order.
pub fn epoch_means(trace: &[TraceRow]) -> Vec<f64> {
    let mut out: Vec<(usize, f64, usize)> = Vec::new();
    for r in trace {
        match out.last_mut() {
            Some((e, sum, n)) if *e == r.epoch => {
                *sum += r.loss;
                *n += 1;
            }
            _ => out.push((r.epoch, r.loss, 1)),
        }
    }
    out.into_iter().map(|(_, s, n)| s / n as f64).collect()
}

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot_unchecked, Matrix};
use crate::types::Query;

use super::{AttentionModel, Forward};

/// Logits are clamped to `[-LOGIT_CLAMP, LOGIT_CLAMP]` before the sigmoid.
pub const LOGIT_CLAMP: f64 = 30.0;

/// One anchor query with its positive and negative sample sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingBatch {
    pub anchor: usize,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// `-ln σ(x)` on the clamped logit.
pub fn neg_log_sigmoid(x: f64) -> f64 {
    let x = x.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// `d/dx -ln σ(x) = -σ(-x)`; zero outside the clamp.
fn neg_log_sigmoid_grad(x: f64) -> f64 {
    if x.abs() > LOGIT_CLAMP {
        0.0
    } else {
        -1.0 / (1.0 + x.exp())
    }
}

/// Dense gradient with the same shapes as the model, tracking which rows
/// were written so updates and resets can stay sparse.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub emb: Matrix,
    pub attn: Matrix,
    emb_touched: Vec<bool>,
    attn_touched: Vec<bool>,
    emb_rows: Vec<usize>,
    attn_rows: Vec<usize>,
}

impl Gradient {
    pub fn zeros_like(model: &AttentionModel) -> Self {
        Gradient {
            emb: Matrix::zeros(model.vocab_size(), model.dim()),
            attn: Matrix::zeros(model.max_len(), model.dim()),
            emb_touched: vec![false; model.vocab_size()],
            attn_touched: vec![false; model.max_len()],
            emb_rows: Vec::new(),
            attn_rows: Vec::new(),
        }
    }

    fn emb_row(&mut self, t: usize) -> &mut [f64] {
        if !self.emb_touched[t] {
            self.emb_touched[t] = true;
            self.emb_rows.push(t);
        }
        self.emb.row_mut(t)
    }

    fn attn_row(&mut self, i: usize) -> &mut [f64] {
        if !self.attn_touched[i] {
            self.attn_touched[i] = true;
            self.attn_rows.push(i);
        }
        self.attn.row_mut(i)
    }

    /// Embedding rows with (possibly) non-zero gradient.
    pub fn touched_emb_rows(&self) -> &[usize] {
        &self.emb_rows
    }

    /// Attention rows with (possibly) non-zero gradient.
    pub fn touched_attn_rows(&self) -> &[usize] {
        &self.attn_rows
    }

    pub fn clear(&mut self) {
        for &t in &self.emb_rows {
            self.emb.row_mut(t).fill(0.0);
            self.emb_touched[t] = false;
        }
        for &i in &self.attn_rows {
            self.attn.row_mut(i).fill(0.0);
            self.attn_touched[i] = false;
        }
        self.emb_rows.clear();
        self.attn_rows.clear();
    }

    /// Backpropagates `∂L/∂z = scale · g` through one query's forward pass.
    fn backprop(&mut self, model: &AttentionModel, fwd: &Forward, g: &[f64], scale: f64) {
        // c_i = ⟨g, v_{t_i}⟩, ∂L/∂s_i = w_i (c_i − Σ_j w_j c_j)
        let c: Vec<f64> = fwd.ids.iter().map(|&t| dot_unchecked(g, model.emb.row(t))).collect();
        let mean_c: f64 = c.iter().zip(&fwd.weights).map(|(ci, wi)| ci * wi).sum();
        for (pos, (&t, &w)) in fwd.ids.iter().zip(&fwd.weights).enumerate() {
            let ds = scale * w * (c[pos] - mean_c);
            // ∂L/∂v_t += w_i g + ds_i a_i ; ∂L/∂a_i += ds_i v_t
            let a_row = model.attn.row(pos).to_vec();
            let e_row = model.emb.row(t).to_vec();
            let ge = self.emb_row(t);
            axpy(scale * w, g, ge);
            axpy(ds, &a_row, ge);
            axpy(ds, &e_row, self.attn_row(pos));
        }
    }
}

fn validate(batch: &TrainingBatch, store: &[Query]) -> Result<()> {
    if batch.positives.is_empty() {
        return Err(Error::EmptySamples("positives"));
    }
    if batch.negatives.is_empty() {
        return Err(Error::EmptySamples("negatives"));
    }
    for &id in std::iter::once(&batch.anchor)
        .chain(&batch.positives)
        .chain(&batch.negatives)
    {
        if id >= store.len() {
            return Err(Error::UnknownQuery(id));
        }
    }
    if batch.positives.contains(&batch.anchor) || batch.negatives.contains(&batch.anchor) {
        return Err(Error::format("batch", "anchor appears among its samples"));
    }
    Ok(())
}

struct Pass {
    forwards: HashMap<usize, Forward>,
    anchor_z: Vec<f64>,
}

fn run_forward(model: &AttentionModel, batch: &TrainingBatch, store: &[Query]) -> Result<Pass> {
    validate(batch, store)?;
    let mut forwards = HashMap::new();
    for &id in std::iter::once(&batch.anchor)
        .chain(&batch.positives)
        .chain(&batch.negatives)
    {
        if let std::collections::hash_map::Entry::Vacant(slot) = forwards.entry(id) {
            slot.insert(model.forward(&store[id].trigram_ids)?);
        }
    }
    let anchor_z = forwards[&batch.anchor].z.clone();
    Ok(Pass { forwards, anchor_z })
}

/// `mean_P −ln σ(⟨z_q, z_p⟩) + mean_N −ln σ(−⟨z_q, z_n⟩)`.
pub fn loss(model: &AttentionModel, batch: &TrainingBatch, store: &[Query]) -> Result<f64> {
    let pass = run_forward(model, batch, store)?;
    Ok(loss_from_pass(&pass, batch))
}

fn loss_from_pass(pass: &Pass, batch: &TrainingBatch) -> f64 {
    let zq = &pass.anchor_z;
    let pos: f64 = batch
        .positives
        .iter()
        .map(|id| neg_log_sigmoid(dot_unchecked(zq, &pass.forwards[id].z)))
        .sum::<f64>()
        / batch.positives.len() as f64;
    let neg: f64 = batch
        .negatives
        .iter()
        .map(|id| neg_log_sigmoid(-dot_unchecked(zq, &pass.forwards[id].z)))
        .sum::<f64>()
        / batch.negatives.len() as f64;
    pos + neg
}

/// Loss and its exact gradient with respect to every model parameter.
pub fn loss_gradient(
    model: &AttentionModel,
    batch: &TrainingBatch,
    store: &[Query],
) -> Result<(f64, Gradient)> {
    let mut grad = Gradient::zeros_like(model);
    let loss = accumulate(model, batch, store, 1.0, &mut grad)?;
    Ok((loss, grad))
}

/// Adds `scale · ∇loss` into `grad` and returns the (unscaled) loss.
pub(crate) fn accumulate(
    model: &AttentionModel,
    batch: &TrainingBatch,
    store: &[Query],
    scale: f64,
    grad: &mut Gradient,
) -> Result<f64> {
    let pass = run_forward(model, batch, store)?;
    let loss = loss_from_pass(&pass, batch);
    let d = model.dim();
    let zq = &pass.anchor_z;

    // ∂L/∂z per distinct query
    let mut dz: HashMap<usize, Vec<f64>> = HashMap::new();
    let inv_p = 1.0 / batch.positives.len() as f64;
    let inv_n = 1.0 / batch.negatives.len() as f64;
    let mut d_anchor = vec![0.0; d];
    for &id in &batch.positives {
        let zp = &pass.forwards[&id].z;
        let coef = inv_p * neg_log_sigmoid_grad(dot_unchecked(zq, zp));
        axpy(coef, zp, &mut d_anchor);
        axpy(coef, zq, dz.entry(id).or_insert_with(|| vec![0.0; d]));
    }
    for &id in &batch.negatives {
        let zn = &pass.forwards[&id].z;
        let coef = -inv_n * neg_log_sigmoid_grad(-dot_unchecked(zq, zn));
        axpy(coef, zn, &mut d_anchor);
        axpy(coef, zq, dz.entry(id).or_insert_with(|| vec![0.0; d]));
    }
    grad.backprop(model, &pass.forwards[&batch.anchor], &d_anchor, scale);
    let mut ids: Vec<usize> = dz.keys().copied().collect();
    ids.sort_unstable();
    for id in ids {
        grad.backprop(model, &pass.forwards[&id], &dz[&id], scale);
    }
    Ok(loss)
}

//! Objective terms: the hop-orthogonality penalty and the class-weighted
//! cross-entropy.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::autodiff::{AutodiffError, Tape, Var};
use crate::graph::Label;
use crate::tensor::Tensor;

/// Guard added under the square root when normalizing hop embeddings, so
/// an all-zero row has cosine 0 instead of NaN.
pub const COSINE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrthMode {
    /// Sum of squared pairwise cosines; zero exactly when hops are orthogonal.
    Squared,
    /// Sum of raw pairwise cosines.
    Raw,
}

/// Pairwise cosine penalty between hop embeddings, averaged over rows.
///
/// Each entry of `hops` is a `(n, w)` matrix; row `i` of every entry
/// belongs to the same node. With fewer than two hops the penalty is the
/// constant 0.
pub fn orth_loss<'t>(tape: &'t Tape, hops: &[Var<'t>], mode: OrthMode) -> Result<Var<'t>, AutodiffError> {
    if hops.len() < 2 {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let units: Vec<Var<'t>> = hops.iter().map(|h| h.row_l2_normalize(COSINE_EPS)).collect();
    let mut total: Option<Var<'t>> = None;
    for a in 0..units.len() {
        for b in a + 1..units.len() {
            let cos = units[a].mul(units[b])?.row_sum();
            let term = match mode {
                OrthMode::Squared => cos.mul(cos)?,
                OrthMode::Raw => cos,
            };
            total = Some(match total {
                None => term,
                Some(t) => t.add(term)?,
            });
        }
    }
    total.expect("at least one pair").mean()
}

/// Inverse-frequency weights `N / (2 N_c)` over the labeled nodes given.
pub fn class_weights(labels: &[Label], nodes: &[usize]) -> Result<[f64; 2], ModelError> {
    let mut counts = [0usize; 2];
    for &i in nodes {
        if let Some(c) = labels.get(i).and_then(|l| l.class()) {
            counts[c] += 1;
        }
    }
    if counts[0] == 0 || counts[1] == 0 {
        return Err(ModelError::SingleClass { benign: counts[0], fraud: counts[1] });
    }
    let n = (counts[0] + counts[1]) as f64;
    Ok([n / (2.0 * counts[0] as f64), n / (2.0 * counts[1] as f64)])
}

/// `-Σ w_{y_i} log p(y_i | i) / Σ w_{y_i}` over rows with a target.
///
/// `targets[i]` is the class of row `i` of `log_probs`, or `None` for rows
/// that take part in the forward pass but not the loss.
pub fn weighted_cross_entropy<'t>(
    log_probs: Var<'t>,
    targets: &[Option<usize>],
    weights: [f64; 2],
) -> Result<Var<'t>, ModelError> {
    let shape = log_probs.shape();
    if shape.len() != 2 || shape[1] != 2 || shape[0] != targets.len() {
        return Err(ModelError::Misaligned(format!(
            "log-probabilities of shape {shape:?} for {} targets",
            targets.len()
        )));
    }
    let total: f64 = targets.iter().flatten().map(|&c| weights[c]).sum();
    if total <= 0.0 {
        return Err(ModelError::NoLabeledNodes);
    }
    let mut mask = vec![0.0; targets.len() * 2];
    for (i, t) in targets.iter().enumerate() {
        if let Some(c) = *t {
            mask[i * 2 + c] = -weights[c] / total;
        }
    }
    let mask = log_probs.tape().constant(Tensor::matrix(targets.len(), 2, mask)?);
    Ok(log_probs.mul(mask)?.sum())
}

//! Relation fusion and assembly of the per-node embedding.

use crate::autodiff::{AutodiffError, Var};
use crate::tensor::ShapeError;

/// Softmax-weighted sum of per-relation feature embeddings.
///
/// `logits` is a `(1, R)` row; with one relation the single embedding is
/// returned untouched.
pub fn fuse_relations<'t>(features: &[Var<'t>], logits: Option<Var<'t>>) -> Result<Var<'t>, AutodiffError> {
    match (features, logits) {
        ([], _) => Err(shape_err("fuse_relations", "no relations")),
        ([only], _) => Ok(*only),
        (_, None) => Err(shape_err("fuse_relations", "fusion logits required for R > 1")),
        (many, Some(logits)) => {
            if logits.shape() != vec![1, many.len()] {
                return Err(shape_err(
                    "fuse_relations",
                    format!("logits of shape {:?} for {} relations", logits.shape(), many.len()),
                ));
            }
            let weights = logits.softmax();
            let mut acc = many[0].mul_scalar(weights.slice_cols(0, 1)?)?;
            for (r, f) in many.iter().enumerate().skip(1) {
                acc = acc.add(f.mul_scalar(weights.slice_cols(r, r + 1)?)?)?;
            }
            Ok(acc)
        }
    }
}

fn shape_err(op: &'static str, detail: impl Into<String>) -> AutodiffError {
    ShapeError::new(op, detail).into()
}

/// `[X ‖ P¹]` for a single relation, `[F′ ‖ P¹ ‖ … ‖ P^R]` otherwise.
pub fn assemble_embedding<'t>(
    base: Var<'t>,
    positional: &[Var<'t>],
) -> Result<Var<'t>, AutodiffError> {
    let mut parts = Vec::with_capacity(positional.len() + 1);
    parts.push(base);
    parts.extend_from_slice(positional);
    Var::concat(&parts)
}

/// Width of the assembled embedding.
pub fn embedding_dim(feature_dim: usize, feat_hidden: usize, pos_hidden: usize, relations: usize) -> usize {
    if relations == 1 {
        feature_dim + pos_hidden
    } else {
        feat_hidden + relations * pos_hidden
    }
}

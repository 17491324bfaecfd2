//! Per-hop positional branches.
//!
//! The homophilic branch averages neighbor features with walk
//! probabilities and has no parameters. The heterophilic branch feeds the
//! raw encoding row together with the node's own features through a small
//! network, leaving the model to learn how position relates to class.

use super::ModelError;
use crate::autodiff::{AutodiffError, BoundParams, Var};
use crate::tensor::Tensor;
use crate::walk::{PeTable, WalkOperator};

/// `Σ_j W^k(i, j) · X(j, :)` over the table's anchors, for every source.
///
/// `anchor_features` holds one row per anchor, in anchor order.
pub fn homo_embed(pe: &PeTable, hop: usize, anchor_features: &Tensor) -> Result<Tensor, ModelError> {
    let m = pe.anchors().len();
    if anchor_features.rows() != m || anchor_features.shape().len() != 2 {
        return Err(ModelError::Misaligned(format!(
            "{} anchors but feature block of shape {:?}",
            m,
            anchor_features.shape()
        )));
    }
    Ok(pe.hop_tensor(hop).matmul(anchor_features)?)
}

/// `W^k X` for `k = 1..=hops` over the full node set, by repeated sparse
/// products. Equal to [`homo_embed`] with every node as an anchor.
pub fn propagate_features(walk: &WalkOperator, features: &Tensor, hops: usize) -> Result<Vec<Tensor>, ModelError> {
    let (n, d) = features.dims2("propagate_features")?;
    if n != walk.num_nodes() {
        return Err(ModelError::Misaligned(format!("{} walk nodes vs {n} feature rows", walk.num_nodes())));
    }
    let w = walk.matrix();
    let mut out = Vec::with_capacity(hops);
    let mut current = features.clone();
    for _ in 0..hops {
        let mut next = vec![0.0; n * d];
        for i in 0..n {
            let (cols, vals) = w.row(i);
            let dst = &mut next[i * d..(i + 1) * d];
            for (&j, &p) in cols.iter().zip(vals) {
                dst.iter_mut().zip(current.row(j)).for_each(|(o, x)| *o += p * x);
            }
        }
        current = Tensor::matrix(n, d, next)?;
        out.push(current.clone());
    }
    Ok(out)
}

/// Two-layer perceptron `relu(x·W1 + b1)·W2 + b2` with parameters under `prefix`.
pub fn mlp<'t>(x: Var<'t>, params: &BoundParams<'t>, prefix: &str) -> Result<Var<'t>, AutodiffError> {
    let hidden = x
        .matmul(params.get(&format!("{prefix}.w1"))?)?
        .add_row(params.get(&format!("{prefix}.b1"))?)?
        .relu();
    hidden.matmul(params.get(&format!("{prefix}.w2"))?)?.add_row(params.get(&format!("{prefix}.b2"))?)
}

/// Heterophilic hop embedding: MLP over `[p_k(u) ‖ X(u, :)]`.
pub fn hete_embed<'t>(
    pe_rows: Var<'t>,
    features: Var<'t>,
    params: &BoundParams<'t>,
    prefix: &str,
) -> Result<Var<'t>, AutodiffError> {
    mlp(Var::concat(&[pe_rows, features])?, params, prefix)
}

/// Final positional embedding: MLP over `[p′_1 ‖ … ‖ p′_K ‖ p′]`.
pub fn positional_embed<'t>(
    hop_embeddings: &[Var<'t>],
    combined: Var<'t>,
    params: &BoundParams<'t>,
    prefix: &str,
) -> Result<Var<'t>, AutodiffError> {
    let mut parts = hop_embeddings.to_vec();
    parts.push(combined);
    mlp(Var::concat(&parts)?, params, prefix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, ParamStore, Tape};
    use crate::graph::CsrMatrix;
    use crate::rng::{stream_rng, Stream};
    use crate::walk::pe_rows;

    fn path3_pe(hops: usize) -> (WalkOperator, PeTable) {
        let adj = CsrMatrix::undirected_adjacency(3, &[(0, 1), (1, 2)]).unwrap();
        let w = WalkOperator::new(&adj).unwrap();
        let pe = pe_rows(&w, &[0, 1, 2], hops, &[0, 1, 2]).unwrap();
        (w, pe)
    }

    #[test]
    fn identity_features_expose_the_walk_row() {
        let (w, pe) = path3_pe(1);
        let out = homo_embed(&pe, 1, &Tensor::identity(3)).unwrap();
        // Dense oracle: W · I = W.
        assert_eq!(out.row(1), &[0.5, 0.0, 0.5]);
        assert_eq!(out.data(), &w.matrix().to_dense()[..]);
    }

    #[test]
    fn constant_features_stay_constant() {
        let (w, pe) = path3_pe(3);
        let ones = Tensor::full(&[3, 1], 1.0);
        for k in 1..=3 {
            let h = homo_embed(&pe, k, &ones).unwrap();
            assert!(h.data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        }
        for h in propagate_features(&w, &ones, 3).unwrap() {
            assert!(h.data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        }
    }

    #[test]
    fn sparse_propagation_matches_table_product() {
        let adj = CsrMatrix::undirected_adjacency(6, &[(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (1, 4)]).unwrap();
        let w = WalkOperator::new(&adj).unwrap();
        let all: Vec<usize> = (0..6).collect();
        let pe = pe_rows(&w, &all, 3, &all).unwrap();
        let x = Tensor::matrix(6, 2, (0..12).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        let props = propagate_features(&w, &x, 3).unwrap();
        for k in 1..=3 {
            assert!(homo_embed(&pe, k, &x).unwrap().max_abs_diff(&props[k - 1]) < 1e-14);
        }
    }

    #[test]
    fn misaligned_anchor_features() {
        let (_, pe) = path3_pe(1);
        assert!(matches!(homo_embed(&pe, 1, &Tensor::zeros(&[2, 1])), Err(ModelError::Misaligned(_))));
    }

    fn hete_params(m: usize, d: usize, h: usize, seed: u64) -> ParamStore {
        let mut rng = stream_rng(seed, Stream::Init);
        let mut p = ParamStore::new();
        p.insert_glorot("hete.w1", m + d, h, &mut rng).unwrap();
        p.insert("hete.b1", Tensor::matrix(1, h, (0..h).map(|i| 0.1 * i as f64).collect()).unwrap()).unwrap();
        p.insert_glorot("hete.w2", h, h, &mut rng).unwrap();
        p.insert("hete.b2", Tensor::matrix(1, h, (0..h).map(|i| 0.05 - 0.02 * i as f64).collect()).unwrap())
            .unwrap();
        p
    }

    #[test]
    fn hete_output_shape() {
        let (_, pe) = path3_pe(2);
        let params = hete_params(3, 2, 5, 1);
        let tape = Tape::new();
        let bound = params.bind(&tape, false);
        let out = hete_embed(
            tape.constant(pe.hop_tensor(2)),
            tape.constant(Tensor::zeros(&[3, 2])),
            &bound,
            "hete",
        )
        .unwrap();
        assert_eq!(out.shape(), vec![3, 5]);
    }

    #[test]
    fn zero_weights_map_every_node_to_the_bias() {
        let (_, pe) = path3_pe(1);
        let mut params = hete_params(3, 2, 4, 2);
        for name in ["hete.w1", "hete.w2"] {
            params.get_mut(name).unwrap().data_mut().fill(0.0);
        }
        let tape = Tape::new();
        let bound = params.bind(&tape, false);
        let x = Tensor::matrix(3, 2, vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap();
        let out = hete_embed(tape.constant(pe.hop_tensor(1)), tape.constant(x), &bound, "hete").unwrap();
        let b2 = params.get("hete.b2").unwrap().data().to_vec();
        for i in 0..3 {
            assert_eq!(out.value().row(i), &b2[..]);
        }
    }

    #[test]
    fn hete_gradients_match_differences() {
        let (_, pe) = path3_pe(2);
        let mut params = hete_params(3, 2, 4, 3);
        params.insert("x", Tensor::matrix(3, 2, vec![0.3, -1.2, 0.8, 0.1, -0.4, 0.9]).unwrap()).unwrap();
        let rows = pe.hop_tensor(2);
        let report = grad_check(
            &params,
            |tape, p| {
                let out = hete_embed(tape.constant(rows.clone()), p.get("x")?, p, "hete")?;
                out.mul(out)?.mean()
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
    }
}

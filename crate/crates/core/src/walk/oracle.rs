//! Dense reference computations for checking the sparse engine.

use std::collections::VecDeque;

use super::{WalkError, WalkOperator};
use crate::graph::MultiRelGraph;
use crate::tensor::Tensor;

const SPD_MAX_NODES: usize = 1000;
const PPR_MAX_NODES: usize = 500;

/// All-pairs hop distances; `None` marks an unreachable pair.
#[derive(Debug, Clone, PartialEq)]
pub struct HopDistances {
    n: usize,
    dist: Vec<Option<u32>>,
}

impl HopDistances {
    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Option<u32> {
        self.dist[i * self.n + j]
    }
}

/// Breadth-first all-pairs shortest hop distances of one relation.
pub fn spd_reference(graph: &MultiRelGraph, relation: usize) -> Result<HopDistances, WalkError> {
    let n = graph.num_nodes();
    if n > SPD_MAX_NODES {
        return Err(WalkError::TooLarge { what: "spd_reference", n, max: SPD_MAX_NODES });
    }
    let adj = graph.adjacency(relation)?;
    let mut dist = vec![None; n * n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        let row = &mut dist[s * n..(s + 1) * n];
        row[s] = Some(0);
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let du = row[u].expect("queued nodes have a distance");
            for &v in adj.row(u).0 {
                if row[v].is_none() {
                    row[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
    }
    Ok(HopDistances { n, dist })
}

/// `Σ_{k=1..K} α(1−α)^k W^k` by dense matrix powers.
pub fn ppr_reference(walk: &WalkOperator, alpha: f64, hops: usize) -> Result<Tensor, WalkError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(WalkError::InvalidAlpha(alpha));
    }
    let n = walk.num_nodes();
    if n > PPR_MAX_NODES {
        return Err(WalkError::TooLarge { what: "ppr_reference", n, max: PPR_MAX_NODES });
    }
    let w = Tensor::matrix(n, n, walk.matrix().to_dense()).expect("square walk matrix");
    let mut power = Tensor::identity(n);
    let mut total = Tensor::zeros(&[n, n]);
    for k in 1..=hops {
        power = power.matmul(&w).expect("square walk matrix");
        let coeff = alpha * (1.0 - alpha).powi(k as i32);
        for (t, &p) in total.data_mut().iter_mut().zip(power.data()) {
            *t += coeff * p;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_graphs::labeled;
    use crate::walk::{combine_scales, pe_rows, ScaleWeights};

    #[test]
    fn path_distances() {
        let g = labeled(3, &[0, 0, 0], &[&[(0, 1), (1, 2)]]);
        let d = spd_reference(&g, 0).unwrap();
        assert_eq!(d.get(0, 2), Some(2));
        assert!((0..3).all(|i| d.get(i, i) == Some(0)));
    }

    #[test]
    fn components_are_unreachable() {
        let g = labeled(4, &[0, 0, 0, 0], &[&[(0, 1), (2, 3)]]);
        let d = spd_reference(&g, 0).unwrap();
        assert_eq!(d.get(0, 3), None);
        assert_eq!(d.get(1, 0), Some(1));
    }

    #[test]
    fn single_term_is_scaled_walk() {
        let g = labeled(3, &[0, 0, 0], &[&[(0, 1), (1, 2)]]);
        let w = WalkOperator::new(g.adjacency(0).unwrap()).unwrap();
        let p = ppr_reference(&w, 0.3, 1).unwrap();
        let expected: Vec<f64> = w.matrix().to_dense().iter().map(|x| 0.3 * 0.7 * x).collect();
        assert_eq!(p.data(), &expected[..]);
    }

    #[test]
    fn agrees_with_sparse_combination_on_single_edge() {
        let g = labeled(2, &[0, 0], &[&[(0, 1)]]);
        let w = WalkOperator::new(g.adjacency(0).unwrap()).unwrap();
        let dense = ppr_reference(&w, 0.5, 2).unwrap();
        let pe = pe_rows(&w, &[0, 1], 2, &[0, 1]).unwrap();
        let sparse = combine_scales(&pe, &ScaleWeights::ppr(0.5, 2).unwrap()).unwrap();
        assert_eq!(dense.row(0), &[0.125, 0.25]);
        assert!(dense.max_abs_diff(&sparse) < 1e-15);
    }

    #[test]
    fn alpha_outside_unit_interval() {
        let g = labeled(2, &[0, 0], &[&[(0, 1)]]);
        let w = WalkOperator::new(g.adjacency(0).unwrap()).unwrap();
        for alpha in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(matches!(ppr_reference(&w, alpha, 2), Err(WalkError::InvalidAlpha(_))));
        }
    }
}

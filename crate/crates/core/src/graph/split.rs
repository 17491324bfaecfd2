use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{GraphError, MultiRelGraph};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.4, val: 0.2, test: 0.4 }
    }
}

/// Disjoint train/validation/test node sets covering every labeled node.
/// Each set is sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitAssignment {
    pub fn by_name(&self, name: &str) -> Option<&[usize]> {
        match name {
            "train" => Some(&self.train),
            "val" | "validation" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

/// Stratified split of the labeled nodes. Unlabeled nodes are left out.
pub fn split_nodes(
    graph: &MultiRelGraph,
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitAssignment, GraphError> {
    let parts = [ratios.train, ratios.val, ratios.test];
    if parts.iter().any(|r| !(0.0..=1.0).contains(r)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(GraphError::Split(format!(
            "ratios {:?} must be nonnegative and sum to 1",
            parts
        )));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, l) in graph.labels().iter().enumerate() {
        if let Some(c) = l.class() {
            by_class[c].push(i);
        }
    }
    for (c, nodes) in by_class.iter().enumerate() {
        if nodes.len() < parts.len() {
            return Err(GraphError::Split(format!(
                "class {c} has {} labeled nodes, need at least {}",
                nodes.len(),
                parts.len()
            )));
        }
    }

    let mut rng = stream_rng(seed, Stream::Split);
    let mut out = SplitAssignment { train: Vec::new(), val: Vec::new(), test: Vec::new() };
    for mut nodes in by_class {
        nodes.shuffle(&mut rng);
        let n = nodes.len() as f64;
        let n_train = (ratios.train * n).round() as usize;
        let n_val = ((ratios.val * n).round() as usize).min(nodes.len() - n_train);
        out.train.extend_from_slice(&nodes[..n_train]);
        out.val.extend_from_slice(&nodes[n_train..n_train + n_val]);
        out.test.extend_from_slice(&nodes[n_train + n_val..]);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

//! Multi-relation attributed graphs.
//!
//! A [`MultiRelGraph`] holds one dense feature matrix, one label per node and
//! one symmetric adjacency per relation. Graphs are immutable once built and
//! can be shared freely across threads.

mod csr;
mod io;
mod split;
mod synth;

use std::path::PathBuf;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use csr::CsrMatrix;
pub use io::{load_dataset, save_dataset, DatasetMeta};
pub use split::{split_nodes, SplitAssignment, SplitRatios};
pub use synth::{synth_generate, SynthConfig};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),
    #[error("invalid meta descriptor: {0}")]
    Meta(String),
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("node index {index} out of range for a graph with {num_nodes} nodes")]
    NodeOutOfRange { index: usize, num_nodes: usize },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("non-finite feature value at node {node}, column {column}")]
    NonFiniteFeature { node: usize, column: usize },
    #[error("invalid label {0}; expected -1, 0 or 1")]
    InvalidLabel(i64),
    #[error("relation {relation} out of range ({num_relations} relations)")]
    RelationOutOfRange {
        relation: usize,
        num_relations: usize,
    },
    #[error("adjacency for relation {0} is not symmetric")]
    NotSymmetric(usize),
    #[error("malformed sparse matrix: {0}")]
    MalformedMatrix(String),
    #[error("homophily is undefined: relation {0} has no edge with both endpoints labeled")]
    UndefinedHomophily(usize),
    #[error("invalid synthetic config: {0}")]
    InvalidSynthConfig(String),
    #[error("cannot split: {0}")]
    Split(String),
}

/// Node class mark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Unlabeled,
    Benign,
    Fraud,
}

impl Label {
    pub fn from_i64(v: i64) -> Result<Self, GraphError> {
        match v {
            -1 => Ok(Label::Unlabeled),
            0 => Ok(Label::Benign),
            1 => Ok(Label::Fraud),
            other => Err(GraphError::InvalidLabel(other)),
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Unlabeled => -1,
            Label::Benign => 0,
            Label::Fraud => 1,
        }
    }

    /// Class index (0 benign, 1 fraud) for labeled nodes.
    pub fn class(self) -> Option<usize> {
        match self {
            Label::Unlabeled => None,
            Label::Benign => Some(0),
            Label::Fraud => Some(1),
        }
    }
}

/// Attributed graph with `R` undirected relations over one node set.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiRelGraph {
    num_nodes: usize,
    feature_dim: usize,
    relation_names: Vec<String>,
    features: Vec<f32>,
    labels: Vec<Label>,
    adjacencies: Vec<CsrMatrix>,
}

impl MultiRelGraph {
    /// Assembles a graph, checking every structural invariant.
    pub fn new(
        num_nodes: usize,
        feature_dim: usize,
        relation_names: Vec<String>,
        features: Vec<f32>,
        labels: Vec<Label>,
        adjacencies: Vec<CsrMatrix>,
    ) -> Result<Self, GraphError> {
        if features.len() != num_nodes * feature_dim {
            return Err(GraphError::DimensionMismatch {
                what: "feature rows".into(),
                expected: num_nodes,
                found: features.len() / feature_dim.max(1),
            });
        }
        if labels.len() != num_nodes {
            return Err(GraphError::DimensionMismatch {
                what: "labels".into(),
                expected: num_nodes,
                found: labels.len(),
            });
        }
        if relation_names.len() != adjacencies.len() {
            return Err(GraphError::DimensionMismatch {
                what: "relation names".into(),
                expected: adjacencies.len(),
                found: relation_names.len(),
            });
        }
        if let Some(pos) = features.iter().position(|x| !x.is_finite()) {
            return Err(GraphError::NonFiniteFeature {
                node: pos / feature_dim,
                column: pos % feature_dim,
            });
        }
        for (r, adj) in adjacencies.iter().enumerate() {
            if adj.n_rows() != num_nodes || adj.n_cols() != num_nodes {
                return Err(GraphError::DimensionMismatch {
                    what: format!("adjacency of relation {r}"),
                    expected: num_nodes,
                    found: adj.n_rows(),
                });
            }
            if !adj.is_symmetric() {
                return Err(GraphError::NotSymmetric(r));
            }
            if (0..num_nodes).any(|i| adj.get(i, i) != 0.0) {
                return Err(GraphError::MalformedMatrix(format!("relation {r} stores a self-loop")));
            }
        }
        Ok(Self { num_nodes, feature_dim, relation_names, features, labels, adjacencies })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_relations(&self) -> usize {
        self.adjacencies.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    /// Row-major `n × d` feature matrix.
    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn feature_row(&self, i: usize) -> &[f32] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    /// Features widened to `f64`, row-major.
    pub fn features_f64(&self) -> Vec<f64> {
        self.features.iter().map(|&x| f64::from(x)).collect()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn adjacency(&self, relation: usize) -> Result<&CsrMatrix, GraphError> {
        self.adjacencies.get(relation).ok_or(GraphError::RelationOutOfRange {
            relation,
            num_relations: self.adjacencies.len(),
        })
    }

    pub fn adjacencies(&self) -> &[CsrMatrix] {
        &self.adjacencies
    }

    /// Graph restricted to a subset of relations, in the given order.
    pub fn select_relations(&self, relations: &[usize]) -> Result<Self, GraphError> {
        let mut adjacencies = Vec::with_capacity(relations.len());
        let mut names = Vec::with_capacity(relations.len());
        for &r in relations {
            adjacencies.push(self.adjacency(r)?.clone());
            names.push(self.relation_names[r].clone());
        }
        Ok(Self { adjacencies, relation_names: names, ..self.clone() })
    }

    /// SHA-256 over the node count and the structure of one relation.
    ///
    /// Positional encodings depend on nothing else, so this is the key used
    /// to validate cached encodings.
    pub fn relation_hash(&self, relation: usize) -> Result<[u8; 32], GraphError> {
        let adj = self.adjacency(relation)?;
        let mut h = Sha256::new();
        h.update(b"mandate-relation-v1");
        h.update((self.num_nodes as u64).to_le_bytes());
        for &p in adj.indptr() {
            h.update((p as u64).to_le_bytes());
        }
        for &c in adj.indices() {
            h.update((c as u64).to_le_bytes());
        }
        Ok(h.finalize().into())
    }
}

/// Fraction of edges in `relation` whose endpoints share a label, among edges
/// with both endpoints labeled. Each undirected edge counts once.
pub fn homophily_ratio(graph: &MultiRelGraph, relation: usize) -> Result<f64, GraphError> {
    let adj = graph.adjacency(relation)?;
    let labels = graph.labels();
    let (mut same, mut total) = (0usize, 0usize);
    for (u, v) in adj.upper_edges() {
        if let (Some(a), Some(b)) = (labels[u].class(), labels[v].class()) {
            total += 1;
            if a == b {
                same += 1;
            }
        }
    }
    if total == 0 {
        return Err(GraphError::UndefinedHomophily(relation));
    }
    Ok(same as f64 / total as f64)
}

#[cfg(test)]
pub(crate) mod test_graphs {
    use super::*;

    /// Graph with zero features of width 1 and the given labels and relations.
    pub fn labeled(n: usize, labels: &[i64], relations: &[&[(usize, usize)]]) -> MultiRelGraph {
        let adjacencies = relations
            .iter()
            .map(|e| CsrMatrix::undirected_adjacency(n, e).unwrap())
            .collect::<Vec<_>>();
        let names = (0..adjacencies.len()).map(|r| format!("rel{r}")).collect();
        let labels = labels.iter().map(|&l| Label::from_i64(l).unwrap()).collect();
        MultiRelGraph::new(n, 1, names, vec![0.0; n], labels, adjacencies).unwrap()
    }
}

//! Random-walk positional encodings.
//!
//! The walk operator is `W = D⁻¹A`. The hop-`k` encoding of node `i` is row
//! `i` of `W^k`, optionally restricted to a set of anchor columns. Encodings
//! are built by propagating a one-hot row vector through `W` once per hop;
//! dense powers of `W` are never formed outside the reference oracles.

mod cache;
mod oracle;

use rand::seq::index;
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{CsrMatrix, GraphError};
use crate::rng::{stream_rng, Stream};
use crate::tensor::Tensor;

pub use cache::{read_pe_cache, read_pe_cache_header, write_pe_cache, PeCacheHeader};
pub use oracle::{ppr_reference, spd_reference, HopDistances};

/// Default cap on the number of anchor columns.
pub const DEFAULT_MAX_ANCHORS: usize = 512;

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("adjacency must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("adjacency has a negative entry at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize },
    #[error("hop count must be at least 1")]
    ZeroHops,
    #[error("anchor set is empty")]
    EmptyAnchors,
    #[error("node index {index} out of range for {num_nodes} nodes")]
    NodeOutOfRange { index: usize, num_nodes: usize },
    #[error("expected {expected} scale weights, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("alpha {0} must lie strictly between 0 and 1")]
    InvalidAlpha(f64),
    #[error("{what} supports at most {max} nodes, got {n}")]
    TooLarge { what: &'static str, n: usize, max: usize },
    #[error("scale weights must be finite")]
    NonFiniteWeights,
    #[error("PE cache {path}: {message}")]
    Cache { path: String, message: String },
    #[error("stale PE cache {path}: graph hash {found} does not match {expected}")]
    StaleCache {
        path: String,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Row-stochastic transition matrix `D⁻¹A`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkOperator {
    matrix: CsrMatrix,
    transpose: CsrMatrix,
    self_loop_repaired: Vec<usize>,
}

impl WalkOperator {
    /// Builds `D⁻¹A`. Zero-degree rows receive a self-loop first.
    pub fn new(adjacency: &CsrMatrix) -> Result<Self, WalkError> {
        let n = adjacency.n_rows();
        if adjacency.n_cols() != n {
            return Err(WalkError::NonSquare { rows: n, cols: adjacency.n_cols() });
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(adjacency.nnz());
        let mut values = Vec::with_capacity(adjacency.nnz());
        let mut repaired = Vec::new();
        indptr.push(0);
        for i in 0..n {
            let (cols, vals) = adjacency.row(i);
            if let Some(pos) = vals.iter().position(|&v| v < 0.0) {
                return Err(WalkError::NegativeEntry { row: i, col: cols[pos] });
            }
            let degree: f64 = vals.iter().sum();
            if degree > 0.0 {
                for (&j, &v) in cols.iter().zip(vals) {
                    if v > 0.0 {
                        indices.push(j);
                        values.push(v / degree);
                    }
                }
            } else {
                repaired.push(i);
                indices.push(i);
                values.push(1.0);
            }
            indptr.push(indices.len());
        }
        let matrix = CsrMatrix::from_parts(n, n, indptr, indices, values)?;
        let transpose = transpose(&matrix)?;
        Ok(Self { matrix, transpose, self_loop_repaired: repaired })
    }

    pub fn num_nodes(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Nodes that had no neighbors and received a self-loop.
    pub fn self_loop_repaired(&self) -> &[usize] {
        &self.self_loop_repaired
    }

    /// One step of `x ← x·W`, restricted to the columns reachable from the
    /// support of `x`.
    ///
    /// Every output entry sums its incoming terms in ascending value order,
    /// so the result does not depend on how nodes are numbered.
    fn step(&self, x: &[f64], support: &[usize], next: &mut [f64], next_support: &mut Vec<usize>, terms: &mut Vec<f64>) {
        next_support.clear();
        for &i in support {
            for &j in self.matrix.row(i).0 {
                if next[j] == 0.0 {
                    // Placeholder so `j` is pushed once; overwritten below.
                    next[j] = f64::MIN_POSITIVE;
                    next_support.push(j);
                }
            }
        }
        for &j in next_support.iter() {
            let (sources, weights) = self.transpose.row(j);
            terms.clear();
            terms.extend(
                sources.iter().zip(weights).map(|(&i, &w)| x[i] * w).filter(|&t| t != 0.0),
            );
            terms.sort_unstable_by(f64::total_cmp);
            next[j] = terms.iter().sum();
        }
    }

    /// Rows `W^1(s,:) … W^K(s,:)` for one source, each restricted to `anchors`.
    fn source_rows(&self, source: usize, hops: usize, anchors: &[usize]) -> Vec<f64> {
        let n = self.num_nodes();
        let m = anchors.len();
        let mut out = vec![0.0; hops * m];
        let mut x = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut support = vec![source];
        let mut next_support = Vec::new();
        let mut terms = Vec::new();
        x[source] = 1.0;
        for k in 0..hops {
            self.step(&x, &support, &mut next, &mut next_support, &mut terms);
            for &i in &support {
                x[i] = 0.0;
            }
            std::mem::swap(&mut x, &mut next);
            std::mem::swap(&mut support, &mut next_support);
            for (slot, &a) in out[k * m..(k + 1) * m].iter_mut().zip(anchors) {
                *slot = x[a];
            }
        }
        out
    }
}

fn transpose(m: &CsrMatrix) -> Result<CsrMatrix, GraphError> {
    let (rows, cols) = (m.n_rows(), m.n_cols());
    let mut counts = vec![0usize; cols + 1];
    for &c in m.indices() {
        counts[c + 1] += 1;
    }
    for c in 0..cols {
        counts[c + 1] += counts[c];
    }
    let indptr = counts.clone();
    let mut fill = counts;
    let mut indices = vec![0; m.nnz()];
    let mut values = vec![0.0; m.nnz()];
    for r in 0..rows {
        let (cs, vs) = m.row(r);
        for (&c, &v) in cs.iter().zip(vs) {
            indices[fill[c]] = r;
            values[fill[c]] = v;
            fill[c] += 1;
        }
    }
    CsrMatrix::from_parts(cols, rows, indptr, indices, values)
}

/// Multi-scale positional encodings for a set of source nodes.
///
/// `rows` is laid out hop-major: entry `(k, s, a)` holds `W^{k+1}(sources[s], anchors[a])`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeTable {
    hops: usize,
    sources: Vec<usize>,
    anchors: Vec<usize>,
    rows: Vec<f64>,
}

impl PeTable {
    pub(crate) fn from_parts(
        hops: usize,
        sources: Vec<usize>,
        anchors: Vec<usize>,
        rows: Vec<f64>,
    ) -> Result<Self, WalkError> {
        if rows.len() != hops * sources.len() * anchors.len() {
            return Err(WalkError::LengthMismatch {
                expected: hops * sources.len() * anchors.len(),
                found: rows.len(),
            });
        }
        Ok(Self { hops, sources, anchors, rows })
    }

    /// Number of hops `K`.
    pub fn hops(&self) -> usize {
        self.hops
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn raw(&self) -> &[f64] {
        &self.rows
    }

    /// `|sources| × m` block for hop `k` (1-based).
    pub fn hop_rows(&self, k: usize) -> &[f64] {
        assert!(k >= 1 && k <= self.hops, "hop {k} outside 1..={}", self.hops);
        let block = self.sources.len() * self.anchors.len();
        &self.rows[(k - 1) * block..k * block]
    }

    /// Hop-`k` encoding of `sources[s]`.
    pub fn row(&self, k: usize, s: usize) -> &[f64] {
        let m = self.anchors.len();
        &self.hop_rows(k)[s * m..(s + 1) * m]
    }

    pub fn hop_tensor(&self, k: usize) -> Tensor {
        Tensor::matrix(self.sources.len(), self.anchors.len(), self.hop_rows(k).to_vec())
            .expect("hop block has table dimensions")
    }
}

/// Computes `W^k(source, anchor)` for `k = 1..=hops` by repeated sparse
/// products from a one-hot seed per source. Sources run in parallel; the
/// result does not depend on scheduling.
pub fn pe_rows(
    walk: &WalkOperator,
    sources: &[usize],
    hops: usize,
    anchors: &[usize],
) -> Result<PeTable, WalkError> {
    if hops == 0 {
        return Err(WalkError::ZeroHops);
    }
    if anchors.is_empty() {
        return Err(WalkError::EmptyAnchors);
    }
    let n = walk.num_nodes();
    if let Some(&index) = sources.iter().chain(anchors).find(|&&i| i >= n) {
        return Err(WalkError::NodeOutOfRange { index, num_nodes: n });
    }
    let per_source: Vec<Vec<f64>> = sources
        .par_iter()
        .map(|&s| walk.source_rows(s, hops, anchors))
        .collect();
    let m = anchors.len();
    let s_count = sources.len();
    let mut rows = vec![0.0; hops * s_count * m];
    for (s, block) in per_source.iter().enumerate() {
        for k in 0..hops {
            let dst = (k * s_count + s) * m;
            rows[dst..dst + m].copy_from_slice(&block[k * m..(k + 1) * m]);
        }
    }
    PeTable::from_parts(hops, sources.to_vec(), anchors.to_vec(), rows)
}

/// Anchor columns for `n` nodes: every node when `n ≤ max_anchors`,
/// otherwise a seeded uniform sample, sorted.
pub fn default_anchors(n: usize, max_anchors: usize, seed: u64) -> Vec<usize> {
    if n <= max_anchors {
        return (0..n).collect();
    }
    let mut rng = stream_rng(seed, Stream::Anchor);
    let mut picked = index::sample(&mut rng, n, max_anchors).into_vec();
    picked.sort_unstable();
    picked
}

/// Per-hop mixing weights `θ_1 … θ_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleWeights {
    theta: Vec<f64>,
    frozen: bool,
}

impl ScaleWeights {
    pub fn new(theta: Vec<f64>) -> Result<Self, WalkError> {
        if theta.is_empty() {
            return Err(WalkError::ZeroHops);
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(WalkError::NonFiniteWeights);
        }
        Ok(Self { theta, frozen: false })
    }

    /// Equal weights `1/K`, the learnable starting point.
    pub fn uniform(hops: usize) -> Result<Self, WalkError> {
        Self::new(vec![1.0 / hops.max(1) as f64; hops])
    }

    /// Frozen personalized-PageRank weights `θ_k = α(1−α)^k`.
    pub fn ppr(alpha: f64, hops: usize) -> Result<Self, WalkError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(WalkError::InvalidAlpha(alpha));
        }
        let theta = (1..=hops).map(|k| alpha * (1.0 - alpha).powi(k as i32)).collect();
        Ok(Self { frozen: true, ..Self::new(theta)? })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }
}

/// `Σ_k θ_k · W^k(source, anchors)` for every source.
pub fn combine_scales(pe: &PeTable, weights: &ScaleWeights) -> Result<Tensor, WalkError> {
    if weights.theta().len() != pe.hops() {
        return Err(WalkError::LengthMismatch { expected: pe.hops(), found: weights.theta().len() });
    }
    let (s, m) = (pe.sources().len(), pe.anchors().len());
    let mut out = vec![0.0; s * m];
    for (k, &theta) in weights.theta().iter().enumerate() {
        for (o, &x) in out.iter_mut().zip(pe.hop_rows(k + 1)) {
            *o += theta * x;
        }
    }
    Ok(Tensor::matrix(s, m, out).expect("combined block has table dimensions"))
}

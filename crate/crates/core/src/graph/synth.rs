//! Homophily-controlled synthetic fraud graphs.
//!
//! Labels are planted first. Fraud nodes are then dealt round-robin into `R`
//! groups; group `r` is the only one whose fraud shows structurally in
//! relation `r`. Every other fraud node is wired in relation `r` as if it
//! were benign. A single relation therefore reveals only part of the fraud
//! population and the relations complement each other.
//!
//! Each edge first draws its true type (intra-class with probability
//! `homophily[r]`), then endpoints are drawn from the relation's apparent
//! block model and rejected until the true type matches. The measured edge
//! homophily thus concentrates at the requested value and is exact at 0
//! and 1.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CsrMatrix, GraphError, Label, MultiRelGraph};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_nodes: usize,
    pub num_relations: usize,
    pub fraud_rate: f64,
    /// Per-relation intra-class edge probability.
    pub homophily: Vec<f64>,
    /// Per-relation expected node degree.
    pub mean_degree: Vec<f64>,
    pub feature_dim: usize,
    /// Distance between the benign and fraud feature means.
    pub feature_signal: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// The two-relation benchmark used throughout the test suite: one
    /// homophilic and one heterophilic relation, weak feature signal.
    pub fn complementary(num_nodes: usize, seed: u64) -> Self {
        Self {
            num_nodes,
            num_relations: 2,
            fraud_rate: 0.1,
            homophily: vec![0.9, 0.3],
            mean_degree: vec![10.0, 10.0],
            feature_dim: 16,
            feature_signal: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |m: String| Err(GraphError::InvalidSynthConfig(m));
        if self.num_nodes < 2 {
            return bad("need at least 2 nodes".into());
        }
        if self.num_relations == 0 {
            return bad("need at least one relation".into());
        }
        if !(self.fraud_rate > 0.0 && self.fraud_rate < 1.0) {
            return bad(format!("fraud_rate {} must lie in (0, 1)", self.fraud_rate));
        }
        if self.homophily.len() != self.num_relations {
            return bad(format!(
                "{} homophily values for {} relations",
                self.homophily.len(),
                self.num_relations
            ));
        }
        if self.mean_degree.len() != self.num_relations {
            return bad(format!(
                "{} mean_degree values for {} relations",
                self.mean_degree.len(),
                self.num_relations
            ));
        }
        if let Some(h) = self.homophily.iter().find(|h| !(0.0..=1.0).contains(*h)) {
            return bad(format!("homophily {h} outside [0, 1]"));
        }
        for &md in &self.mean_degree {
            if !(md > 0.0 && md.is_finite()) {
                return bad(format!("mean_degree {md} must be positive"));
            }
            if md >= self.num_nodes as f64 {
                return bad(format!("mean_degree {md} must be below num_nodes {}", self.num_nodes));
            }
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        if !(self.feature_signal >= 0.0 && self.feature_signal.is_finite()) {
            return bad(format!("feature_signal {} must be nonnegative", self.feature_signal));
        }
        Ok(())
    }
}

/// Endpoint sampler for one relation's apparent two-block model.
struct ApparentBlocks<'a> {
    visible: &'a [usize],
    hidden: &'a [usize],
    homophily: f64,
    num_nodes: usize,
}

impl ApparentBlocks<'_> {
    fn sample(&self, rng: &mut ChaCha8Rng) -> (usize, usize) {
        let pick = |set: &[usize], rng: &mut ChaCha8Rng| set[rng.gen_range(0..set.len())];
        let can_cross = !self.visible.is_empty() && !self.hidden.is_empty();
        if rng.gen_bool(self.homophily) || !can_cross {
            let p_visible = self.visible.len() as f64 / self.num_nodes as f64;
            let block = if self.visible.len() >= 2 && rng.gen_bool(p_visible) {
                self.visible
            } else {
                self.hidden
            };
            (pick(block, rng), pick(block, rng))
        } else {
            (pick(self.visible, rng), pick(self.hidden, rng))
        }
    }
}

/// Generates a multi-relation fraud graph. Deterministic in `cfg.seed`.
pub fn synth_generate(cfg: &SynthConfig) -> Result<MultiRelGraph, GraphError> {
    cfg.validate()?;
    let n = cfg.num_nodes;
    let mut rng = stream_rng(cfg.seed, Stream::Data);

    let num_fraud = ((cfg.fraud_rate * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut labels = vec![Label::Benign; n];
    for &i in &order[..num_fraud] {
        labels[i] = Label::Fraud;
    }
    let fraud_nodes = &order[..num_fraud];

    let mut adjacencies = Vec::with_capacity(cfg.num_relations);
    for r in 0..cfg.num_relations {
        let visible: Vec<usize> = fraud_nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| i % cfg.num_relations == r)
            .map(|(_, &v)| v)
            .collect();
        let visible_set: HashSet<usize> = visible.iter().copied().collect();
        let hidden: Vec<usize> = (0..n).filter(|i| !visible_set.contains(i)).collect();
        let blocks = ApparentBlocks { visible: &visible, hidden: &hidden, homophily: cfg.homophily[r], num_nodes: n };

        let target = (n as f64 * cfg.mean_degree[r] / 2.0).round() as usize;
        let max_attempts = 200 * target + 10_000;
        let mut attempts = 0usize;
        let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(target);
        let mut edges = Vec::with_capacity(target);
        while edges.len() < target {
            let want_intra = rng.gen_bool(cfg.homophily[r]);
            loop {
                attempts += 1;
                if attempts > max_attempts {
                    return Err(GraphError::InvalidSynthConfig(format!(
                        "relation {r}: placed only {} of {target} edges; degree or homophily infeasible",
                        edges.len()
                    )));
                }
                let (u, v) = blocks.sample(&mut rng);
                if u == v || (labels[u] == labels[v]) != want_intra {
                    continue;
                }
                let key = (u.min(v), u.max(v));
                if seen.insert(key) {
                    edges.push(key);
                    break;
                }
            }
        }
        adjacencies.push(CsrMatrix::undirected_adjacency(n, &edges)?);
    }

    let d = cfg.feature_dim;
    let mut direction: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    direction.iter_mut().for_each(|x| *x /= norm);
    let mut features = Vec::with_capacity(n * d);
    for label in &labels {
        let shift = if *label == Label::Fraud { cfg.feature_signal } else { 0.0 };
        for dir in &direction {
            let z: f64 = StandardNormal.sample(&mut rng);
            features.push((z + shift * dir) as f32);
        }
    }

    let names = (0..cfg.num_relations).map(|r| format!("rel{r}")).collect();
    MultiRelGraph::new(n, d, names, features, labels, adjacencies)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::homophily_ratio;

    fn cfg(homophily: Vec<f64>, seed: u64) -> SynthConfig {
        let r = homophily.len();
        SynthConfig {
            num_nodes: 400,
            num_relations: r,
            fraud_rate: 0.1,
            homophily,
            mean_degree: vec![4.0; r],
            feature_dim: 4,
            feature_signal: 1.0,
            seed,
        }
    }

    #[test]
    fn pure_homophily_is_exact() {
        let g = synth_generate(&cfg(vec![1.0], 1)).unwrap();
        assert_eq!(homophily_ratio(&g, 0).unwrap(), 1.0);
    }

    #[test]
    fn pure_heterophily_is_exact() {
        let g = synth_generate(&cfg(vec![0.0], 1)).unwrap();
        assert_eq!(homophily_ratio(&g, 0).unwrap(), 0.0);
    }

    #[test]
    fn exact_extremes_with_hidden_fraud() {
        let g = synth_generate(&cfg(vec![1.0, 0.0], 5)).unwrap();
        assert_eq!(homophily_ratio(&g, 0).unwrap(), 1.0);
        assert_eq!(homophily_ratio(&g, 1).unwrap(), 0.0);
    }

    #[test]
    fn same_seed_same_graph() {
        let a = synth_generate(&cfg(vec![0.9, 0.3], 7)).unwrap();
        let b = synth_generate(&cfg(vec![0.9, 0.3], 7)).unwrap();
        assert_eq!(a, b);
        let c = synth_generate(&cfg(vec![0.9, 0.3], 8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fraud_rate_and_edge_count() {
        let g = synth_generate(&cfg(vec![0.5], 2)).unwrap();
        let fraud = g.labels().iter().filter(|&&l| l == Label::Fraud).count();
        assert_eq!(fraud, 40);
        assert_eq!(g.adjacency(0).unwrap().upper_edges().len(), 800);
    }

    #[test]
    fn rejects_degree_at_node_count() {
        let mut c = cfg(vec![0.5], 0);
        c.mean_degree = vec![400.0];
        assert!(matches!(synth_generate(&c), Err(GraphError::InvalidSynthConfig(_))));
    }

    #[test]
    fn rejects_bad_homophily_and_rate() {
        let mut c = cfg(vec![1.5], 0);
        assert!(synth_generate(&c).is_err());
        c.homophily = vec![0.5];
        c.fraud_rate = 1.0;
        assert!(synth_generate(&c).is_err());
        c.fraud_rate = 0.1;
        c.homophily = vec![0.5, 0.5];
        assert!(synth_generate(&c).is_err());
    }

    #[test]
    fn fraud_features_shift_along_one_direction() {
        let mut c = cfg(vec![0.5], 3);
        c.num_nodes = 4000;
        c.feature_signal = 3.0;
        c.mean_degree = vec![1.0];
        let g = synth_generate(&c).unwrap();
        let d = g.feature_dim();
        let mut means = [vec![0.0; d], vec![0.0; d]];
        let mut counts = [0.0; 2];
        for i in 0..g.num_nodes() {
            let k = g.labels()[i].class().unwrap();
            counts[k] += 1.0;
            for (m, &x) in means[k].iter_mut().zip(g.feature_row(i)) {
                *m += f64::from(x);
            }
        }
        let gap: f64 = (0..d)
            .map(|j| (means[1][j] / counts[1] - means[0][j] / counts[0]).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((gap - 3.0).abs() < 0.35, "class-mean gap {gap}");
    }
}

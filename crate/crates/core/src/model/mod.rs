//! The fraud detector: positional branches per relation, relation fusion,
//! an attention encoder and a two-class head.

mod branches;
mod checkpoint;
mod encoder;
mod fusion;
mod loss;
#[cfg(test)]
mod tests;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, BoundParams, ParamStore, Tape, Var};
use crate::graph::{GraphError, Label, MultiRelGraph};
use crate::rng::{stream_rng, Stream};
use crate::tensor::{ShapeError, Tensor};
use crate::walk::{PeTable, ScaleWeights, WalkError, WalkOperator};

pub use branches::{hete_embed, homo_embed, mlp, positional_embed, propagate_features};
pub use checkpoint::{load_model, save_model, MODEL_MANIFEST};
pub use encoder::{attention_encode, LAYER_NORM_EPS};
pub use fusion::{assemble_embedding, embedding_dim, fuse_relations};
pub use loss::{class_weights, orth_loss, weighted_cross_entropy, OrthMode, COSINE_EPS};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{what}: model expects {expected}, data has {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    #[error("inputs misaligned: {0}")]
    Misaligned(String),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("batch holds no labeled training node")]
    NoLabeledNodes,
    #[error("class weights need both classes ({benign} benign, {fraud} fraud)")]
    SingleClass { benign: usize, fraud: usize },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

impl From<ShapeError> for ModelError {
    fn from(e: ShapeError) -> Self {
        ModelError::Autodiff(e.into())
    }
}

/// How the scale weights θ that mix hop encodings are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaMode {
    /// Trained with the rest of the model, initialized uniform.
    Learnable,
    /// Fixed personalized-PageRank weights `α(1−α)^k`.
    Ppr { alpha: f64 },
}

/// Hyperparameters that do not depend on the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hops: usize,
    /// Heterophilic branch width.
    pub hidden: usize,
    /// Positional embedding width per relation.
    pub pos_hidden: usize,
    /// Width of the per-relation feature encoders.
    pub feat_hidden: usize,
    pub model_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub lambda_orth: f64,
    pub orth_mode: OrthMode,
    pub theta: ThetaMode,
    /// Largest node count attended in one batch.
    pub attention_cap: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hops: 2,
            hidden: 64,
            pos_hidden: 64,
            feat_hidden: 64,
            model_dim: 64,
            layers: 2,
            heads: 4,
            lambda_orth: 0.1,
            orth_mode: OrthMode::Squared,
            theta: ThetaMode::Learnable,
            attention_cap: 2048,
            dropout: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        for (name, v) in [
            ("hops", self.hops),
            ("hidden", self.hidden),
            ("pos_hidden", self.pos_hidden),
            ("feat_hidden", self.feat_hidden),
            ("model_dim", self.model_dim),
            ("heads", self.heads),
            ("attention_cap", self.attention_cap),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.model_dim % self.heads != 0 {
            return bad(format!("model_dim {} not divisible by {} heads", self.model_dim, self.heads));
        }
        if !(self.lambda_orth >= 0.0 && self.lambda_orth.is_finite()) {
            return bad(format!("lambda_orth {} must be a finite non-negative number", self.lambda_orth));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        if let ThetaMode::Ppr { alpha } = self.theta {
            if !(alpha > 0.0 && alpha < 1.0) {
                return bad(format!("ppr alpha {alpha} must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

/// Everything needed to rebuild the parameter layout: hyperparameters,
/// data dimensions, the anchor set and the initialization seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub feature_dim: usize,
    pub num_relations: usize,
    pub config: ModelConfig,
    pub anchors: Vec<usize>,
    pub seed: u64,
}

/// Per-relation precomputed inputs over all nodes.
#[derive(Debug, Clone)]
pub struct RelationInputs {
    /// Encoding rows; source `i` is node `i`.
    pub pe: PeTable,
    /// `W^k X` for `k = 1..=K`.
    pub homo: Vec<Tensor>,
}

/// Graph-side inputs shared by every forward pass.
#[derive(Debug, Clone)]
pub struct ModelInputs {
    pub features: Tensor,
    pub labels: Vec<Label>,
    pub relations: Vec<RelationInputs>,
}

impl ModelInputs {
    /// Pair the graph with one encoding table per relation. Every table
    /// must cover all nodes in order and share the same anchors and depth.
    pub fn new(graph: &MultiRelGraph, tables: Vec<PeTable>) -> Result<Self, ModelError> {
        let n = graph.num_nodes();
        if tables.len() != graph.num_relations() {
            return Err(ModelError::DimensionMismatch {
                what: "relation count",
                expected: tables.len(),
                found: graph.num_relations(),
            });
        }
        let features = Tensor::matrix(n, graph.feature_dim(), graph.features_f64())?;
        let mut relations = Vec::with_capacity(tables.len());
        for (r, pe) in tables.into_iter().enumerate() {
            if pe.sources().len() != n || pe.sources().iter().enumerate().any(|(i, &s)| i != s) {
                return Err(ModelError::Misaligned(format!("relation {r}: encoding rows must cover nodes 0..{n} in order")));
            }
            if let Some(first) = relations.first() {
                let first: &RelationInputs = first;
                if pe.anchors() != first.pe.anchors() || pe.hops() != first.pe.hops() {
                    return Err(ModelError::Misaligned(format!("relation {r}: anchors or depth differ from relation 0")));
                }
            }
            let walk = WalkOperator::new(graph.adjacency(r)?)?;
            let homo = propagate_features(&walk, &features, pe.hops())?;
            relations.push(RelationInputs { pe, homo });
        }
        Ok(Self { features, labels: graph.labels().to_vec(), relations })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn hops(&self) -> usize {
        self.relations.first().map_or(0, |r| r.pe.hops())
    }

    pub fn anchors(&self) -> &[usize] {
        self.relations.first().map_or(&[], |r| r.pe.anchors())
    }
}

/// Variables produced by one forward pass over a batch.
pub struct ForwardPass<'t> {
    /// `(b, 2)` class log-probabilities.
    pub log_probs: Var<'t>,
    /// `(b, dim E)` assembled embedding fed to the encoder.
    pub embedding: Var<'t>,
    /// Per relation, the `K` hop embeddings `[homo ‖ hete]`.
    pub hop_embeddings: Vec<Vec<Var<'t>>>,
    /// Orthogonality penalty averaged over relations.
    pub orth: Var<'t>,
}

impl<'t> ForwardPass<'t> {
    /// Fraud probability of every batch row.
    pub fn fraud_probs(&self) -> Vec<f64> {
        let lp = self.log_probs.value();
        (0..lp.rows()).map(|i| lp.get(i, 1).exp()).collect()
    }

    /// Class-weighted cross-entropy plus `lambda` times the penalty.
    pub fn loss(&self, targets: &[Option<usize>], weights: [f64; 2], lambda: f64) -> Result<Var<'t>, ModelError> {
        let ce = weighted_cross_entropy(self.log_probs, targets, weights)?;
        if lambda == 0.0 {
            return Ok(ce);
        }
        Ok(ce.add(self.orth.scale(lambda))?)
    }
}

impl Architecture {
    pub fn new(
        config: ModelConfig,
        feature_dim: usize,
        num_relations: usize,
        anchors: Vec<usize>,
        seed: u64,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        if feature_dim == 0 || num_relations == 0 || anchors.is_empty() {
            return Err(ModelError::InvalidConfig(
                "feature dimension, relation count and anchor count must be positive".into(),
            ));
        }
        Ok(Self { feature_dim, num_relations, config, anchors, seed })
    }

    pub fn num_anchors(&self) -> usize {
        self.anchors.len()
    }

    pub fn embedding_dim(&self) -> usize {
        let c = &self.config;
        embedding_dim(self.feature_dim, c.feat_hidden, c.pos_hidden, self.num_relations)
    }

    /// Fresh parameters drawn from the initialization stream.
    pub fn init_params(&self) -> Result<ParamStore, ModelError> {
        let c = &self.config;
        let (d, m, k) = (self.feature_dim, self.num_anchors(), c.hops);
        let mut rng = stream_rng(self.seed, Stream::Init);
        let mut p = ParamStore::new();
        let mut mlp = |p: &mut ParamStore, prefix: &str, i: usize, h: usize, o: usize| -> Result<(), ModelError> {
            p.insert_glorot(format!("{prefix}.w1"), i, h, &mut rng)?;
            p.insert_zeros(format!("{prefix}.b1"), &[1, h])?;
            p.insert_glorot(format!("{prefix}.w2"), h, o, &mut rng)?;
            p.insert_zeros(format!("{prefix}.b2"), &[1, o])?;
            Ok(())
        };
        for r in 0..self.num_relations {
            if c.theta == ThetaMode::Learnable {
                p.insert(format!("rel{r}.theta"), Tensor::full(&[1, k], 1.0 / k as f64))?;
            }
            for hop in 1..=k {
                mlp(&mut p, &format!("rel{r}.hete{hop}"), m + d, c.hidden, c.hidden)?;
            }
            mlp(&mut p, &format!("rel{r}.pos"), k * (d + c.hidden) + m, c.pos_hidden, c.pos_hidden)?;
            if self.num_relations > 1 {
                mlp(&mut p, &format!("rel{r}.feat"), d, c.feat_hidden, c.feat_hidden)?;
            }
        }
        if self.num_relations > 1 {
            p.insert_zeros("fusion.logits", &[1, self.num_relations])?;
        }
        let dm = c.model_dim;
        p.insert_glorot("enc.in.w", self.embedding_dim(), dm, &mut rng)?;
        p.insert_zeros("enc.in.b", &[1, dm])?;
        for l in 0..c.layers {
            let pre = format!("enc.layer{l}");
            for w in ["wq", "wk", "wv", "wo"] {
                p.insert_glorot(format!("{pre}.{w}"), dm, dm, &mut rng)?;
            }
            p.insert_zeros(format!("{pre}.bo"), &[1, dm])?;
            p.insert(format!("{pre}.ln1.g"), Tensor::full(&[1, dm], 1.0))?;
            p.insert_zeros(format!("{pre}.ln1.b"), &[1, dm])?;
            p.insert_glorot(format!("{pre}.ff.w1"), dm, 2 * dm, &mut rng)?;
            p.insert_zeros(format!("{pre}.ff.b1"), &[1, 2 * dm])?;
            p.insert_glorot(format!("{pre}.ff.w2"), 2 * dm, dm, &mut rng)?;
            p.insert_zeros(format!("{pre}.ff.b2"), &[1, dm])?;
            p.insert(format!("{pre}.ln2.g"), Tensor::full(&[1, dm], 1.0))?;
            p.insert_zeros(format!("{pre}.ln2.b"), &[1, dm])?;
        }
        p.insert_glorot("head.w", dm, 2, &mut rng)?;
        p.insert_zeros("head.b", &[1, 2])?;
        Ok(p)
    }

    /// Refuse inputs whose dimensions differ from the ones the model was
    /// built for.
    pub fn check_inputs(&self, inputs: &ModelInputs) -> Result<(), ModelError> {
        let mismatch = |what, expected, found| Err(ModelError::DimensionMismatch { what, expected, found });
        if inputs.feature_dim() != self.feature_dim {
            return mismatch("feature dimension", self.feature_dim, inputs.feature_dim());
        }
        if inputs.relations.len() != self.num_relations {
            return mismatch("relation count", self.num_relations, inputs.relations.len());
        }
        if inputs.hops() != self.config.hops {
            return mismatch("hop count", self.config.hops, inputs.hops());
        }
        if inputs.anchors().len() != self.num_anchors() {
            return mismatch("anchor count", self.num_anchors(), inputs.anchors().len());
        }
        if inputs.anchors() != self.anchors.as_slice() {
            return Err(ModelError::Misaligned("encoding anchors differ from the model's anchors".into()));
        }
        Ok(())
    }

    fn scale_weights<'t>(&self, tape: &'t Tape, params: &BoundParams<'t>, r: usize) -> Result<Var<'t>, ModelError> {
        match self.config.theta {
            ThetaMode::Learnable => Ok(params.get(&format!("rel{r}.theta"))?),
            ThetaMode::Ppr { alpha } => {
                let w = ScaleWeights::ppr(alpha, self.config.hops)?;
                Ok(tape.constant(Tensor::matrix(1, self.config.hops, w.theta().to_vec())?))
            }
        }
    }

    /// Run the model on `batch` (node ids). The batch is also the
    /// attention context. `rng` enables dropout.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        params: &BoundParams<'t>,
        inputs: &ModelInputs,
        batch: &[usize],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardPass<'t>, ModelError> {
        self.check_inputs(inputs)?;
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        if let Some(&bad) = batch.iter().find(|&&i| i >= inputs.num_nodes()) {
            return Err(GraphError::NodeOutOfRange { index: bad, num_nodes: inputs.num_nodes() }.into());
        }
        let c = &self.config;
        let x = tape.constant(inputs.features.gather_rows(batch));
        let mut hop_embeddings = Vec::with_capacity(self.num_relations);
        let mut positional = Vec::with_capacity(self.num_relations);
        let mut feats = Vec::with_capacity(self.num_relations);
        let mut orth: Option<Var<'t>> = None;
        for (r, rel) in inputs.relations.iter().enumerate() {
            let theta = self.scale_weights(tape, params, r)?;
            let mut hops = Vec::with_capacity(c.hops);
            let mut combined: Option<Var<'t>> = None;
            for k in 1..=c.hops {
                let pe_k = tape.constant(gather_table_rows(&rel.pe, k, batch));
                let homo = tape.constant(rel.homo[k - 1].gather_rows(batch));
                let hete = hete_embed(pe_k, x, params, &format!("rel{r}.hete{k}"))?;
                hops.push(Var::concat(&[homo, hete])?);
                let term = pe_k.mul_scalar(theta.slice_cols(k - 1, k)?)?;
                combined = Some(match combined {
                    None => term,
                    Some(acc) => acc.add(term)?,
                });
            }
            let combined = combined.expect("hops validated positive");
            positional.push(positional_embed(&hops, combined, params, &format!("rel{r}.pos"))?);
            let o = orth_loss(tape, &hops, c.orth_mode)?;
            orth = Some(match orth {
                None => o,
                Some(acc) => acc.add(o)?,
            });
            if self.num_relations > 1 {
                feats.push(mlp(x, params, &format!("rel{r}.feat"))?);
            }
            hop_embeddings.push(hops);
        }
        let orth = orth.expect("relations validated positive").scale(1.0 / self.num_relations as f64);
        let embedding = if self.num_relations == 1 {
            assemble_embedding(x, &positional)?
        } else {
            let fused = fuse_relations(&feats, Some(params.get("fusion.logits")?))?;
            assemble_embedding(fused, &positional)?
        };
        let z = attention_encode(embedding, params, c.layers, c.heads, c.dropout, rng)?;
        let logits = z.matmul(params.get("head.w")?)?.add_row(params.get("head.b")?)?;
        Ok(ForwardPass { log_probs: logits.log_softmax(), embedding, hop_embeddings, orth })
    }

    /// Attention contexts used at inference: all nodes at once when they
    /// fit under the cap, consecutive blocks otherwise.
    pub fn inference_batches(&self, num_nodes: usize) -> Vec<Vec<usize>> {
        let all: Vec<usize> = (0..num_nodes).collect();
        all.chunks(self.config.attention_cap.max(1)).map(|c| c.to_vec()).collect()
    }
}

fn gather_table_rows(pe: &PeTable, hop: usize, batch: &[usize]) -> Tensor {
    let m = pe.anchors().len();
    let mut data = Vec::with_capacity(batch.len() * m);
    for &i in batch {
        data.extend_from_slice(pe.row(hop, i));
    }
    Tensor::matrix(batch.len(), m, data).expect("row length equals anchor count")
}

/// A trained model: its architecture plus parameter values.
#[derive(Debug, Clone)]
pub struct MandateModel {
    pub arch: Architecture,
    pub params: ParamStore,
}

impl MandateModel {
    pub fn new(arch: Architecture) -> Result<Self, ModelError> {
        let params = arch.init_params()?;
        Ok(Self { arch, params })
    }

    /// Fraud probability for every node.
    pub fn predict_all(&self, inputs: &ModelInputs) -> Result<Vec<f64>, ModelError> {
        self.arch.check_inputs(inputs)?;
        let mut probs = vec![0.0; inputs.num_nodes()];
        for batch in self.arch.inference_batches(inputs.num_nodes()) {
            let tape = Tape::new();
            let bound = self.params.bind(&tape, false);
            let fp = self.arch.forward(&tape, &bound, inputs, &batch, None)?;
            for (&i, p) in batch.iter().zip(fp.fraud_probs()) {
                probs[i] = p;
            }
        }
        Ok(probs)
    }

    /// Fraud probability for the given nodes, in order.
    pub fn predict(&self, inputs: &ModelInputs, nodes: &[usize]) -> Result<Vec<f64>, ModelError> {
        let all = self.predict_all(inputs)?;
        nodes
            .iter()
            .map(|&i| {
                all.get(i)
                    .copied()
                    .ok_or(GraphError::NodeOutOfRange { index: i, num_nodes: all.len() }.into())
            })
            .collect()
    }
}

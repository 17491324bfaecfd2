use proptest::prelude::*;

use super::*;
use crate::autodiff::grad_check;
use crate::autodiff::attention_probs;
use crate::graph::{synth_generate, SynthConfig};
use crate::walk::pe_rows;

fn small_config(hops: usize) -> ModelConfig {
    ModelConfig {
        hops,
        hidden: 3,
        pos_hidden: 3,
        feat_hidden: 3,
        model_dim: 4,
        layers: 2,
        heads: 2,
        ..ModelConfig::default()
    }
}

fn inputs_for(graph: &MultiRelGraph, hops: usize, anchors: &[usize]) -> ModelInputs {
    let all: Vec<usize> = (0..graph.num_nodes()).collect();
    let tables = (0..graph.num_relations())
        .map(|r| {
            let w = WalkOperator::new(graph.adjacency(r).unwrap()).unwrap();
            pe_rows(&w, &all, hops, anchors).unwrap()
        })
        .collect();
    ModelInputs::new(graph, tables).unwrap()
}

fn synth(n: usize, relations: usize, seed: u64) -> MultiRelGraph {
    let mut cfg = SynthConfig::complementary(n, seed);
    cfg.num_relations = relations;
    cfg.homophily = vec![0.8; relations];
    cfg.mean_degree = vec![3.0; relations];
    cfg.feature_dim = 4;
    cfg.fraud_rate = 0.3;
    synth_generate(&cfg).unwrap()
}

fn setup(n: usize, relations: usize, config: ModelConfig) -> (MandateModel, ModelInputs) {
    let g = synth(n, relations, 7);
    let anchors: Vec<usize> = (0..n.min(6)).collect();
    let inputs = inputs_for(&g, config.hops, &anchors);
    let arch = Architecture::new(config, g.feature_dim(), relations, anchors, 11).unwrap();
    let mut model = MandateModel::new(arch).unwrap();
    // Nonzero biases and logits so every code path carries signal.
    for (i, (_, t)) in model.params.iter_mut().enumerate() {
        if t.data().iter().all(|&v| v == 0.0) {
            for (j, v) in t.data_mut().iter_mut().enumerate() {
                *v = 0.1 * (((i * 7 + j * 3) as f64) * 0.37).sin();
            }
        }
    }
    (model, inputs)
}

fn targets(inputs: &ModelInputs, batch: &[usize]) -> Vec<Option<usize>> {
    batch.iter().map(|&i| inputs.labels[i].class()).collect()
}

#[test]
fn full_model_gradients_match_differences() {
    let (model, inputs) = setup(10, 2, small_config(2));
    let batch: Vec<usize> = (0..10).collect();
    let tg = targets(&inputs, &batch);
    let all: Vec<usize> = (0..10).collect();
    let w = class_weights(&inputs.labels, &all).unwrap();
    let arch = &model.arch;
    let report = grad_check(
        &model.params,
        |tape, p| {
            let fp = arch.forward(tape, p, &inputs, &batch, None).map_err(into_autodiff)?;
            fp.loss(&tg, w, 0.1).map_err(into_autodiff)
        },
        1e-6,
    )
    .unwrap();
    assert!(report.checked > 100, "{report:?}");
    assert!(report.max_rel_error <= 1e-4, "max relative error {} at {:?}", report.max_rel_error, report.worst);
}

fn into_autodiff(e: ModelError) -> AutodiffError {
    match e {
        ModelError::Autodiff(a) => a,
        other => panic!("{other}"),
    }
}

#[test]
fn frozen_theta_has_no_parameter() {
    let mut cfg = small_config(3);
    cfg.theta = ThetaMode::Ppr { alpha: 0.15 };
    let arch = Architecture::new(cfg, 4, 2, vec![0, 1], 0).unwrap();
    let p = arch.init_params().unwrap();
    assert!(p.names().all(|n| !n.ends_with("theta")));
    let arch = Architecture::new(small_config(3), 4, 2, vec![0, 1], 0).unwrap();
    assert_eq!(arch.init_params().unwrap().get("rel1.theta").unwrap().data(), &[1.0 / 3.0; 3]);
}

#[test]
fn hop_embedding_starts_with_homophilic_average() {
    let (model, inputs) = setup(12, 1, small_config(2));
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let batch = [3, 0, 7];
    let fp = model.arch.forward(&tape, &bound, &inputs, &batch, None).unwrap();
    let d = inputs.feature_dim();
    for k in 0..2 {
        let h = fp.hop_embeddings[0][k].value().clone();
        assert_eq!(h.cols(), d + 3);
        for (row, &node) in batch.iter().enumerate() {
            assert_eq!(&h.row(row)[..d], inputs.relations[0].homo[k].row(node));
        }
    }
}

#[test]
fn homophilic_slice_ignores_scale_weights() {
    let (mut model, inputs) = setup(12, 2, small_config(2));
    let run = |m: &MandateModel| {
        let tape = Tape::new();
        let bound = m.params.bind(&tape, false);
        let fp = m.arch.forward(&tape, &bound, &inputs, &[0, 4, 9], None).unwrap();
        let h = fp.hop_embeddings[1][1].value().clone();
        (0..3).map(|i| h.row(i)[..4].to_vec()).collect::<Vec<_>>()
    };
    let before = run(&model);
    model.params.get_mut("rel1.theta").unwrap().data_mut().copy_from_slice(&[5.0, -2.0]);
    assert_eq!(run(&model), before);
    model.arch.config.theta = ThetaMode::Ppr { alpha: 0.3 };
    assert_eq!(run(&model), before);
}

#[test]
fn embedding_widths_follow_relation_count() {
    let (m1, i1) = setup(8, 1, small_config(2));
    let (m3, i3) = setup(8, 3, small_config(2));
    for (m, i, want) in [(&m1, &i1, 4 + 3), (&m3, &i3, 3 + 3 * 3)] {
        let tape = Tape::new();
        let b = m.params.bind(&tape, false);
        let fp = m.arch.forward(&tape, &b, i, &[0, 1, 2], None).unwrap();
        assert_eq!(fp.embedding.shape(), vec![3, want]);
        assert_eq!(m.arch.embedding_dim(), want);
    }
}

#[test]
fn attention_rows_are_distributions() {
    let (model, inputs) = setup(9, 2, small_config(2));
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let batch: Vec<usize> = (0..9).collect();
    let fp = model.arch.forward(&tape, &bound, &inputs, &batch, None).unwrap();
    let e = fp.embedding.value().matmul(model.params.get("enc.in.w").unwrap()).unwrap();
    let q = e.matmul(model.params.get("enc.layer0.wq").unwrap()).unwrap();
    let k = e.matmul(model.params.get("enc.layer0.wk").unwrap()).unwrap();
    let probs = attention_probs(&q, &k, 2);
    for row in probs.chunks(9) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|&p| p >= 0.0));
    }
}

#[test]
fn single_node_batch() {
    let (model, inputs) = setup(8, 2, small_config(2));
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let fp = model.arch.forward(&tape, &bound, &inputs, &[5], None).unwrap();
    let p = fp.fraud_probs();
    assert_eq!(p.len(), 1);
    assert!(p[0] > 0.0 && p[0] < 1.0);
}

#[test]
fn batch_order_permutes_outputs() {
    let (model, inputs) = setup(10, 2, small_config(2));
    let run = |batch: &[usize]| {
        let tape = Tape::new();
        let bound = model.params.bind(&tape, false);
        model.arch.forward(&tape, &bound, &inputs, batch, None).unwrap().fraud_probs()
    };
    let a = run(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
    let order = [7, 2, 9, 0, 4, 1, 8, 3, 6, 5];
    let b = run(&order);
    for (pos, &node) in order.iter().enumerate() {
        assert!((a[node] - b[pos]).abs() < 1e-12);
    }
}

#[test]
fn relation_order_does_not_change_the_embedding() {
    let (model, inputs) = setup(10, 2, small_config(2));
    let mut swapped_inputs = inputs.clone();
    swapped_inputs.relations.swap(0, 1);
    let mut swapped = ParamStore::new();
    for (name, t) in model.params.iter() {
        let renamed = if let Some(rest) = name.strip_prefix("rel0.") {
            format!("rel1.{rest}")
        } else if let Some(rest) = name.strip_prefix("rel1.") {
            format!("rel0.{rest}")
        } else {
            name.to_string()
        };
        let mut t = t.clone();
        if name == "fusion.logits" {
            t.data_mut().swap(0, 1);
        }
        swapped.insert(renamed, t).unwrap();
    }
    let batch: Vec<usize> = (0..10).collect();
    let tape = Tape::new();
    let a = model.params.bind(&tape, false);
    let b = swapped.bind(&tape, false);
    let fa = model.arch.forward(&tape, &a, &inputs, &batch, None).unwrap();
    let fb = model.arch.forward(&tape, &b, &swapped_inputs, &batch, None).unwrap();
    let (ea, eb) = (fa.embedding.value().clone(), fb.embedding.value().clone());
    let (hp, fd) = (3, 3);
    // Fused block identical; positional blocks trade places.
    for i in 0..10 {
        let (ra, rb) = (ea.row(i), eb.row(i));
        for j in 0..fd {
            assert!((ra[j] - rb[j]).abs() < 1e-12);
        }
        assert_eq!(&ra[fd..fd + hp], &rb[fd + hp..]);
        assert_eq!(&ra[fd + hp..], &rb[fd..fd + hp]);
    }
}

#[test]
fn lambda_zero_is_plain_cross_entropy() {
    let (model, inputs) = setup(10, 2, small_config(3));
    let batch: Vec<usize> = (0..10).collect();
    let tg = targets(&inputs, &batch);
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let fp = model.arch.forward(&tape, &bound, &inputs, &batch, None).unwrap();
    let ce = weighted_cross_entropy(fp.log_probs, &tg, [1.0, 2.0]).unwrap();
    let total = fp.loss(&tg, [1.0, 2.0], 0.0).unwrap();
    assert_eq!(ce.value().item(), total.value().item());
    assert!(fp.orth.value().item().unwrap() > 0.0);
}

#[test]
fn dimension_mismatch_names_both_sizes() {
    let (model, _) = setup(10, 2, small_config(2));
    let mut cfg = SynthConfig::complementary(10, 3);
    cfg.feature_dim = 5;
    cfg.fraud_rate = 0.3;
    cfg.mean_degree = vec![3.0, 3.0];
    let g = synth_generate(&cfg).unwrap();
    let inputs = inputs_for(&g, 2, &model.arch.anchors.clone());
    let err = model.predict_all(&inputs).unwrap_err();
    assert!(matches!(err, ModelError::DimensionMismatch { expected: 4, found: 5, .. }));
    let msg = err.to_string();
    assert!(msg.contains('4') && msg.contains('5'), "{msg}");
}

#[test]
fn empty_and_out_of_range_batches() {
    let (model, inputs) = setup(6, 1, small_config(2));
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    assert!(matches!(model.arch.forward(&tape, &bound, &inputs, &[], None), Err(ModelError::EmptyBatch)));
    assert!(matches!(model.arch.forward(&tape, &bound, &inputs, &[6], None), Err(ModelError::Graph(_))));
}

#[test]
fn capped_inference_uses_blocks() {
    let mut cfg = small_config(2);
    cfg.attention_cap = 4;
    let (model, inputs) = setup(10, 2, cfg);
    assert_eq!(model.arch.inference_batches(10).len(), 3);
    let p = model.predict_all(&inputs).unwrap();
    assert_eq!(p.len(), 10);
    assert!(p.iter().all(|v| v.is_finite() && *v > 0.0 && *v < 1.0));
}

#[test]
fn checkpoint_round_trip() {
    let (model, inputs) = setup(10, 2, small_config(2));
    let dir = tempfile::tempdir().unwrap();
    save_model(&model, dir.path()).unwrap();
    let loaded = load_model(dir.path()).unwrap();
    assert_eq!(loaded.arch, model.arch);
    assert_eq!(loaded.predict_all(&inputs).unwrap(), model.predict_all(&inputs).unwrap());
}

#[test]
fn checkpoint_with_wrong_layout_is_refused() {
    let (model, _) = setup(10, 2, small_config(2));
    let dir = tempfile::tempdir().unwrap();
    save_model(&model, dir.path()).unwrap();
    let mut arch = model.arch.clone();
    arch.config.hidden = 5;
    std::fs::write(dir.path().join(MODEL_MANIFEST), serde_json::to_string(&arch).unwrap()).unwrap();
    assert!(matches!(load_model(dir.path()), Err(ModelError::Checkpoint { .. })));
}

#[test]
fn dropout_only_when_training() {
    let mut cfg = small_config(2);
    cfg.dropout = 0.5;
    let (model, inputs) = setup(8, 2, cfg);
    let batch: Vec<usize> = (0..8).collect();
    let run = |seed: Option<u64>| {
        let tape = Tape::new();
        let bound = model.params.bind(&tape, false);
        let mut rng = seed.map(|s| stream_rng(s, Stream::Batch));
        model.arch.forward(&tape, &bound, &inputs, &batch, rng.as_mut()).unwrap().fraud_probs()
    };
    assert_eq!(run(None), run(None));
    assert_ne!(run(None), run(Some(1)));
    assert_eq!(run(Some(1)), run(Some(1)));
}

#[test]
fn invalid_configs() {
    let mut c = small_config(2);
    c.heads = 3;
    assert!(c.validate().is_err());
    let mut c = small_config(2);
    c.theta = ThetaMode::Ppr { alpha: 1.0 };
    assert!(c.validate().is_err());
    assert!(Architecture::new(small_config(2), 4, 1, vec![], 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn embedding_dimension_formula(relations in 1usize..4, hops in 1usize..4, pos in 1usize..5, feat in 1usize..5) {
        let cfg = ModelConfig { pos_hidden: pos, feat_hidden: feat, ..small_config(hops) };
        let (model, inputs) = setup(7, relations, cfg);
        let tape = Tape::new();
        let bound = model.params.bind(&tape, false);
        let fp = model.arch.forward(&tape, &bound, &inputs, &[0, 3, 5], None).unwrap();
        let want = if relations == 1 { 4 + pos } else { feat + relations * pos };
        prop_assert_eq!(fp.embedding.shape(), vec![3, want]);
        prop_assert_eq!(fp.hop_embeddings.len(), relations);
        prop_assert!(fp.hop_embeddings.iter().all(|h| h.len() == hops));
        let p = fp.fraud_probs();
        prop_assert!(p.iter().all(|v| *v > 0.0 && *v < 1.0));
    }
}

use std::ffi::{c_char, CStr, CString};
use std::ptr;

use mandate_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        mandate_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn synthetic(nodes: usize, seed: u64) -> *mut MandateGraph {
    let h = [0.9, 0.3];
    let mut g = ptr::null_mut();
    let status = unsafe { mandate_graph_synthetic(nodes, 2, h.as_ptr(), 0.2, seed, &mut g) };
    assert_eq!(status, MandateStatus::Ok, "{}", last_error());
    g
}

#[test]
fn graph_accessors() {
    let g = synthetic(120, 3);
    let (mut n, mut r, mut d, mut h) = (0usize, 0usize, 0usize, 0.0f64);
    unsafe {
        assert_eq!(mandate_graph_num_nodes(g, &mut n), MandateStatus::Ok);
        assert_eq!(mandate_graph_num_relations(g, &mut r), MandateStatus::Ok);
        assert_eq!(mandate_graph_feature_dim(g, &mut d), MandateStatus::Ok);
        assert_eq!(mandate_graph_homophily(g, 0, &mut h), MandateStatus::Ok);
        mandate_graph_free(g);
    }
    assert_eq!((n, r, d), (120, 2, 16));
    assert!(h > 0.6 && h <= 1.0, "{h}");
}

#[test]
fn null_arguments_are_reported() {
    let mut n = 0usize;
    let status = unsafe { mandate_graph_num_nodes(ptr::null(), &mut n) };
    assert_eq!(status, MandateStatus::NullArgument);
    assert!(last_error().contains("graph"));
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { mandate_graph_load(ptr::null(), &mut g) }, MandateStatus::NullArgument);
    unsafe {
        mandate_graph_free(ptr::null_mut());
        mandate_model_free(ptr::null_mut());
    }
}

#[test]
fn bad_relation_and_missing_dataset() {
    let g = synthetic(60, 1);
    let mut h = 0.0;
    assert_eq!(unsafe { mandate_graph_homophily(g, 5, &mut h) }, MandateStatus::DataError);
    assert!(last_error().contains("relation 5"));
    unsafe { mandate_graph_free(g) };
    let dir = tempfile::tempdir().unwrap();
    let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
    let mut out = ptr::null_mut();
    let status = unsafe { mandate_graph_load(missing.as_ptr(), &mut out) };
    assert_ne!(status, MandateStatus::Ok);
    assert!(out.is_null());
}

#[test]
fn invalid_synthetic_config() {
    let h = [0.5];
    let mut g = ptr::null_mut();
    let status = unsafe { mandate_graph_synthetic(100, 1, h.as_ptr(), 1.5, 0, &mut g) };
    assert_eq!(status, MandateStatus::InvalidArgument);
    assert!(last_error().contains("fraud_rate"));
}

#[test]
fn error_buffer_truncates() {
    let mut n = 0usize;
    unsafe { mandate_graph_num_nodes(ptr::null(), &mut n) };
    let mut small = [0 as c_char; 4];
    let full = unsafe { mandate_last_error(small.as_mut_ptr(), small.len()) };
    assert!(full > 3);
    assert_eq!(unsafe { CStr::from_ptr(small.as_ptr()) }.to_bytes().len(), 3);
}

#[test]
fn train_save_load_predict() {
    let g = synthetic(150, 9);
    let dir = tempfile::tempdir().unwrap();
    let run_dir = CString::new(dir.path().join("run").to_str().unwrap()).unwrap();
    let cfg = CString::new("epochs = 3\nhidden = 8\npos_hidden = 8\nfeat_hidden = 8\nmodel_dim = 8\nheads = 2\nanchors = 32\n").unwrap();
    let mut model = ptr::null_mut();
    let status = unsafe { mandate_train(g, cfg.as_ptr(), run_dir.as_ptr(), &mut model) };
    assert_eq!(status, MandateStatus::Ok, "{}", last_error());

    let mut probs = vec![0.0; 150];
    assert_eq!(unsafe { mandate_model_predict(model, g, probs.as_mut_ptr(), probs.len()) }, MandateStatus::Ok);
    assert!(probs.iter().all(|p| *p > 0.0 && *p < 1.0));

    let mut short = vec![0.0; 10];
    let status = unsafe { mandate_model_predict(model, g, short.as_mut_ptr(), short.len()) };
    assert_eq!(status, MandateStatus::BufferTooSmall);

    let ckpt = CString::new(dir.path().join("run/checkpoint").to_str().unwrap()).unwrap();
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { mandate_model_load(ckpt.as_ptr(), &mut loaded) }, MandateStatus::Ok, "{}", last_error());
    let mut again = vec![0.0; 150];
    assert_eq!(unsafe { mandate_model_predict(loaded, g, again.as_mut_ptr(), again.len()) }, MandateStatus::Ok);
    assert_eq!(probs, again);

    // A graph with another feature width is refused with both sizes named.
    let data = CString::new(dir.path().join("other").to_str().unwrap()).unwrap();
    let other = synthetic(150, 2);
    assert_eq!(unsafe { mandate_graph_save(other, data.as_ptr()) }, MandateStatus::Ok);
    let meta = dir.path().join("other/meta.json");
    let text = std::fs::read_to_string(&meta).unwrap().replace("\"feature_dim\": 16", "\"feature_dim\": 8");
    std::fs::write(&meta, text).unwrap();
    let feats = dir.path().join("other/features.bin");
    let bytes = std::fs::read(&feats).unwrap();
    std::fs::write(&feats, &bytes[..bytes.len() / 2]).unwrap();
    let mut narrow = ptr::null_mut();
    assert_eq!(unsafe { mandate_graph_load(data.as_ptr(), &mut narrow) }, MandateStatus::Ok, "{}", last_error());
    let status = unsafe { mandate_model_predict(loaded, narrow, again.as_mut_ptr(), again.len()) };
    assert_eq!(status, MandateStatus::DataError);
    let msg = last_error();
    assert!(msg.contains("16") && msg.contains('8'), "{msg}");

    unsafe {
        mandate_model_free(model);
        mandate_model_free(loaded);
        mandate_graph_free(g);
        mandate_graph_free(other);
        mandate_graph_free(narrow);
    }
}

#[test]
fn auc_through_the_boundary() {
    let scores = [0.9, 0.8, 0.3, 0.1];
    let labels = [1u8, 0, 1, 0];
    let mut out = 0.0;
    assert_eq!(unsafe { mandate_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut out) }, MandateStatus::Ok);
    assert_eq!(out, 0.75);
    let one_class = [1u8; 4];
    assert_eq!(unsafe { mandate_auc(scores.as_ptr(), one_class.as_ptr(), 4, &mut out) }, MandateStatus::InvalidArgument);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(mandate_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/mandate.h")).unwrap();
    for name in [
        "typedef struct MandateGraph MandateGraph",
        "typedef struct MandateModel MandateModel",
        "MANDATE_STATUS_OK",
        "mandate_graph_load",
        "mandate_model_predict",
        "mandate_last_error",
        "mandate_auc",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

//! On-disk dataset directory.
//!
//! ```text
//! meta.json      {"num_nodes", "num_relations", "feature_dim", "relations"}
//! rel_<i>.edges  one "u v" pair per line, 0-based
//! features.bin   n × d little-endian f32, row-major
//! labels.txt     one of -1, 0, 1 per line
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CsrMatrix, GraphError, Label, MultiRelGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub num_nodes: usize,
    pub num_relations: usize,
    pub feature_dim: usize,
    pub relations: Vec<String>,
}

fn read(path: &Path) -> Result<Vec<u8>, GraphError> {
    if !path.exists() {
        return Err(GraphError::MissingFile(path.to_path_buf()));
    }
    fs::read(path).map_err(|source| GraphError::Io { path: path.to_path_buf(), source })
}

fn read_text(path: &Path) -> Result<String, GraphError> {
    let bytes = read(path)?;
    String::from_utf8(bytes).map_err(|e| GraphError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<(), GraphError> {
    fs::write(&path, bytes).map_err(|source| GraphError::Io { path, source })
}

fn parse_edges(path: &Path, num_nodes: usize) -> Result<Vec<(usize, usize)>, GraphError> {
    let text = read_text(path)?;
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| GraphError::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(format!("expected \"u v\", got {line:?}")));
        };
        let u: usize = a.parse().map_err(|_| parse_err(format!("bad node index {a:?}")))?;
        let v: usize = b.parse().map_err(|_| parse_err(format!("bad node index {b:?}")))?;
        for index in [u, v] {
            if index >= num_nodes {
                return Err(GraphError::NodeOutOfRange { index, num_nodes });
            }
        }
        edges.push((u, v));
    }
    Ok(edges)
}

/// Loads a dataset directory, symmetrizing and deduplicating every relation.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<MultiRelGraph, GraphError> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta: DatasetMeta = serde_json::from_slice(&read(&meta_path)?)
        .map_err(|e| GraphError::Meta(format!("{}: {e}", meta_path.display())))?;
    if meta.relations.len() != meta.num_relations {
        return Err(GraphError::DimensionMismatch {
            what: "meta relation names".into(),
            expected: meta.num_relations,
            found: meta.relations.len(),
        });
    }
    let (n, d) = (meta.num_nodes, meta.feature_dim);

    let blob = read(&dir.join("features.bin"))?;
    let row_bytes = 4 * d;
    if row_bytes == 0 || blob.len() % row_bytes != 0 || blob.len() / row_bytes != n {
        return Err(GraphError::DimensionMismatch {
            what: "features.bin rows".into(),
            expected: n,
            found: if row_bytes == 0 { 0 } else { blob.len() / row_bytes },
        });
    }
    let features: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let labels_path = dir.join("labels.txt");
    let text = read_text(&labels_path)?;
    let mut labels = Vec::with_capacity(n);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: i64 = line.parse().map_err(|_| GraphError::Parse {
            path: labels_path.clone(),
            line: lineno + 1,
            message: format!("bad label {line:?}"),
        })?;
        labels.push(Label::from_i64(v)?);
    }
    if labels.len() != n {
        return Err(GraphError::DimensionMismatch {
            what: "labels.txt lines".into(),
            expected: n,
            found: labels.len(),
        });
    }

    let mut adjacencies = Vec::with_capacity(meta.num_relations);
    for r in 0..meta.num_relations {
        let edges = parse_edges(&dir.join(format!("rel_{r}.edges")), n)?;
        adjacencies.push(CsrMatrix::undirected_adjacency(n, &edges)?);
    }
    MultiRelGraph::new(n, d, meta.relations, features, labels, adjacencies)
}

/// Writes `graph` in the dataset directory format, creating `dir` if needed.
///
/// Output is a pure function of the graph: edges are written once each as
/// `u v` with `u < v` in ascending order.
pub fn save_dataset(graph: &MultiRelGraph, dir: impl AsRef<Path>) -> Result<(), GraphError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| GraphError::Io { path: dir.to_path_buf(), source })?;
    let meta = DatasetMeta {
        num_nodes: graph.num_nodes(),
        num_relations: graph.num_relations(),
        feature_dim: graph.feature_dim(),
        relations: graph.relation_names().to_vec(),
    };
    let mut meta_json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    meta_json.push('\n');
    write(dir.join("meta.json"), meta_json.as_bytes())?;

    for (r, adj) in graph.adjacencies().iter().enumerate() {
        let mut text = String::new();
        for (u, v) in adj.upper_edges() {
            text.push_str(&format!("{u} {v}\n"));
        }
        write(dir.join(format!("rel_{r}.edges")), text.as_bytes())?;
    }

    let blob: Vec<u8> = graph.features().iter().flat_map(|x| x.to_le_bytes()).collect();
    write(dir.join("features.bin"), &blob)?;

    let mut labels = String::with_capacity(3 * graph.num_nodes());
    for l in graph.labels() {
        labels.push_str(&format!("{}\n", l.as_i8()));
    }
    write(dir.join("labels.txt"), labels.as_bytes())
}

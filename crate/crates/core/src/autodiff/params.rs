use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AutodiffError, Gradients, Tape, Var};
use crate::tensor::Tensor;

pub const PARAMS_FILE: &str = "params.bin";
pub const PARAMS_MANIFEST: &str = "params.json";
const MAGIC: &[u8; 8] = b"MANDCK01";

/// Named trainable tensors in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: IndexMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<(), AutodiffError> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(AutodiffError::DuplicateParam(name));
        }
        self.params.insert(name, value);
        Ok(())
    }

    /// Glorot-uniform `(fan_in, fan_out)` weight matrix.
    pub fn insert_glorot(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> Result<(), AutodiffError> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect();
        self.insert(name, Tensor::matrix(fan_in, fan_out, data)?)
    }

    /// Zero `(1, width)` bias row.
    pub fn insert_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<(), AutodiffError> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(Tensor::all_finite)
    }

    /// Records every parameter on `tape`, as gradient-carrying leaves when
    /// `trainable`, otherwise as constants.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> BoundParams<'t> {
        let vars = self
            .params
            .iter()
            .map(|(k, v)| {
                let var = if trainable { tape.param(v.clone()) } else { tape.constant(v.clone()) };
                (k.clone(), var)
            })
            .collect();
        BoundParams { vars }
    }
}

/// Parameters recorded on one tape.
pub struct BoundParams<'t> {
    vars: IndexMap<String, Var<'t>>,
}

impl<'t> BoundParams<'t> {
    pub fn get(&self, name: &str) -> Result<Var<'t>, AutodiffError> {
        self.vars.get(name).copied().ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))
    }

    /// Gradient per parameter, in store order. Parameters the loss does not
    /// depend on get zeros.
    pub fn collect_grads(&self, grads: &mut Gradients) -> IndexMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(name, var)| {
                let g = grads.take(*var).unwrap_or_else(|| Tensor::zeros(&var.shape()));
                (name.clone(), g)
            })
            .collect()
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct Manifest {
    format: String,
    params: Vec<ManifestEntry>,
}

fn ck_err(path: &Path, message: impl Into<String>) -> AutodiffError {
    AutodiffError::Checkpoint { path: path.display().to_string(), message: message.into() }
}

/// Writes `params.bin` (records of name, shape and little-endian `f64`
/// payload) and the `params.json` manifest into `dir`.
pub fn save_checkpoint(store: &ParamStore, dir: impl AsRef<Path>) -> Result<(), AutodiffError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| ck_err(dir, e.to_string()))?;
    let bin = dir.join(PARAMS_FILE);
    let io = |e: std::io::Error| ck_err(&bin, e.to_string());
    let mut w = BufWriter::new(fs::File::create(&bin).map_err(io)?);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(store.len() as u32).to_le_bytes()).map_err(io)?;
    for (name, t) in store.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(name.as_bytes()).map_err(io)?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes()).map_err(io)?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
        }
        for &x in t.data() {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)?;

    let manifest = Manifest {
        format: "mandate-params-v1".into(),
        params: store.iter().map(|(n, t)| ManifestEntry { name: n.into(), shape: t.shape().to_vec() }).collect(),
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    let path = dir.join(PARAMS_MANIFEST);
    fs::write(&path, json).map_err(|e| ck_err(&path, e.to_string()))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<ParamStore, AutodiffError> {
    let dir = dir.as_ref();
    let bin = dir.join(PARAMS_FILE);
    let bytes = fs::read(&bin).map_err(|e| ck_err(&bin, e.to_string()))?;
    let mut r = &bytes[..];
    let truncated = || ck_err(&bin, "truncated");
    let take = |n: usize, r: &mut &[u8]| -> Result<Vec<u8>, AutodiffError> {
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf).map_err(|_| truncated())?;
        Ok(buf)
    };
    if take(8, &mut r)? != MAGIC {
        return Err(ck_err(&bin, "not a parameter checkpoint"));
    }
    let u32_at = |b: Vec<u8>| u32::from_le_bytes(b.try_into().unwrap()) as usize;
    let count = u32_at(take(4, &mut r)?);
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = u32_at(take(4, &mut r)?);
        let name = String::from_utf8(take(len, &mut r)?).map_err(|_| ck_err(&bin, "bad name"))?;
        let rank = u32_at(take(4, &mut r)?);
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(take(8, &mut r)?.try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        let payload = take(numel * 8, &mut r)?;
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        store.insert(name, Tensor::new(shape, data)?)?;
    }
    if !r.is_empty() {
        return Err(ck_err(&bin, "trailing bytes"));
    }

    let path = dir.join(PARAMS_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| ck_err(&path, e.to_string()))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| ck_err(&path, e.to_string()))?;
    let records: Vec<ManifestEntry> =
        store.iter().map(|(n, t)| ManifestEntry { name: n.into(), shape: t.shape().to_vec() }).collect();
    if manifest.params != records {
        return Err(ck_err(&path, "manifest does not match parameter records"));
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut rng = stream_rng(1, Stream::Init);
        let mut store = ParamStore::new();
        store.insert_glorot("w", 3, 4, &mut rng).unwrap();
        store.insert_zeros("b", &[1, 4]).unwrap();
        store.insert("s", Tensor::scalar(-0.0)).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        save_checkpoint(&store, tmp.path()).unwrap();
        let back = load_checkpoint(tmp.path()).unwrap();
        assert_eq!(back.names().collect::<Vec<_>>(), vec!["w", "b", "s"]);
        for ((_, a), (_, b)) in store.iter().zip(back.iter()) {
            let bits = |t: &Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = stream_rng(2, Stream::Init);
        let mut store = ParamStore::new();
        store.insert_glorot("w", 10, 20, &mut rng).unwrap();
        let limit = (6.0f64 / 30.0).sqrt();
        assert!(store.get("w").unwrap().data().iter().all(|x| x.abs() <= limit));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::new();
        store.insert_zeros("b", &[1, 2]).unwrap();
        assert!(matches!(store.insert_zeros("b", &[1, 2]), Err(AutodiffError::DuplicateParam(_))));
    }

    #[test]
    fn manifest_mismatch_detected() {
        let mut store = ParamStore::new();
        store.insert_zeros("b", &[1, 2]).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        save_checkpoint(&store, tmp.path()).unwrap();
        fs::write(tmp.path().join(PARAMS_MANIFEST), r#"{"format":"mandate-params-v1","params":[]}"#).unwrap();
        assert!(load_checkpoint(tmp.path()).is_err());
    }
}

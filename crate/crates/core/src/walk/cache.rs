//! Binary cache of a [`PeTable`].
//!
//! ```text
//! magic      8 bytes  "MANDPE01"
//! hops       u32
//! sources    u64      count S
//! anchors    u64      count m
//! graph hash 32 bytes SHA-256 of the relation (see MultiRelGraph::relation_hash)
//! source ids S × u64
//! anchor ids m × u64
//! payload    K × S × m f64, row-major
//! ```
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{PeTable, WalkError};

const MAGIC: &[u8; 8] = b"MANDPE01";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeCacheHeader {
    pub hops: usize,
    pub num_sources: usize,
    pub num_anchors: usize,
    pub graph_hash: [u8; 32],
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn cache_err(path: &Path, message: impl Into<String>) -> WalkError {
    WalkError::Cache { path: path.display().to_string(), message: message.into() }
}

pub fn write_pe_cache(path: impl AsRef<Path>, table: &PeTable, graph_hash: &[u8; 32]) -> Result<(), WalkError> {
    let path = path.as_ref();
    let io = |e: std::io::Error| cache_err(path, e.to_string());
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(table.hops() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(table.sources().len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(table.anchors().len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(graph_hash).map_err(io)?;
    for &i in table.sources().iter().chain(table.anchors()) {
        w.write_all(&(i as u64).to_le_bytes()).map_err(io)?;
    }
    for &x in table.raw() {
        w.write_all(&x.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn read_u64(r: &mut impl Read, path: &Path) -> Result<u64, WalkError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| cache_err(path, "truncated"))?;
    Ok(u64::from_le_bytes(b))
}

/// Reads only the header of a cache file.
pub fn read_pe_cache_header(path: impl AsRef<Path>) -> Result<PeCacheHeader, WalkError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| cache_err(path, e.to_string()))?;
    read_header(&mut BufReader::new(file), path)
}

fn read_header(r: &mut impl Read, path: &Path) -> Result<PeCacheHeader, WalkError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| cache_err(path, "truncated header"))?;
    if &magic != MAGIC {
        return Err(cache_err(path, "not a PE cache file"));
    }
    let mut hops = [0u8; 4];
    r.read_exact(&mut hops).map_err(|_| cache_err(path, "truncated header"))?;
    let hops = u32::from_le_bytes(hops) as usize;
    let num_sources = read_u64(r, path)? as usize;
    let num_anchors = read_u64(r, path)? as usize;
    let mut graph_hash = [0u8; 32];
    r.read_exact(&mut graph_hash).map_err(|_| cache_err(path, "truncated header"))?;
    Ok(PeCacheHeader { hops, num_sources, num_anchors, graph_hash })
}

/// Reads a cache file. When `expected_hash` is given, a file built from a
/// different graph is refused with [`WalkError::StaleCache`].
pub fn read_pe_cache(
    path: impl AsRef<Path>,
    expected_hash: Option<&[u8; 32]>,
) -> Result<(PeCacheHeader, PeTable), WalkError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| cache_err(path, e.to_string()))?;
    let mut r = BufReader::new(file);
    let header = read_header(&mut r, path)?;
    if let Some(expected) = expected_hash {
        if expected != &header.graph_hash {
            return Err(WalkError::StaleCache {
                path: path.display().to_string(),
                expected: hex(expected),
                found: hex(&header.graph_hash),
            });
        }
    }
    let mut ids = |count: usize| -> Result<Vec<usize>, WalkError> {
        (0..count).map(|_| read_u64(&mut r, path).map(|v| v as usize)).collect()
    };
    let sources = ids(header.num_sources)?;
    let anchors = ids(header.num_anchors)?;
    let len = header.hops * header.num_sources * header.num_anchors;
    let mut payload = vec![0u8; len * 8];
    r.read_exact(&mut payload).map_err(|_| cache_err(path, "truncated payload"))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| cache_err(path, e.to_string()))? != 0 {
        return Err(cache_err(path, "trailing bytes after payload"));
    }
    let rows = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let table = PeTable::from_parts(header.hops, sources, anchors, rows)?;
    Ok((header, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::CsrMatrix;
    use crate::walk::{pe_rows, WalkOperator};

    fn table() -> PeTable {
        let adj = CsrMatrix::undirected_adjacency(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let w = WalkOperator::new(&adj).unwrap();
        pe_rows(&w, &[0, 1, 2, 3], 3, &[1, 3]).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("pe.bin");
        let t = table();
        write_pe_cache(&path, &t, &[7; 32]).unwrap();
        let (header, back) = read_pe_cache(&path, Some(&[7; 32])).unwrap();
        assert_eq!(header.hops, 3);
        assert_eq!(header.num_anchors, 2);
        assert_eq!(back, t);
        assert_eq!(read_pe_cache_header(&path).unwrap(), header);
    }

    #[test]
    fn stale_hash_is_refused() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("pe.bin");
        write_pe_cache(&path, &table(), &[7; 32]).unwrap();
        assert!(matches!(read_pe_cache(&path, Some(&[8; 32])), Err(WalkError::StaleCache { .. })));
    }

    #[test]
    fn truncated_file() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("pe.bin");
        write_pe_cache(&path, &table(), &[7; 32]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_pe_cache(&path, None), Err(WalkError::Cache { .. })));
    }
}

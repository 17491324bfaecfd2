use super::GraphError;

/// Compressed sparse row matrix with `f64` values.
///
/// Column indices within a row are sorted ascending and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix from raw parts, validating the structure.
    pub fn from_parts(
        n_rows: usize,
        n_cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, GraphError> {
        let malformed = |msg: &str| GraphError::MalformedMatrix(msg.to_string());
        if indptr.len() != n_rows + 1 || indptr[0] != 0 {
            return Err(malformed("row pointer length"));
        }
        if *indptr.last().unwrap() != indices.len() || indices.len() != values.len() {
            return Err(malformed("nonzero count"));
        }
        for r in 0..n_rows {
            if indptr[r] > indptr[r + 1] {
                return Err(malformed("row pointers not monotone"));
            }
            let row = &indices[indptr[r]..indptr[r + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(malformed("column indices not strictly increasing"));
            }
            if row.iter().any(|&c| c >= n_cols) {
                return Err(malformed("column index out of range"));
            }
        }
        Ok(Self { n_rows, n_cols, indptr, indices, values })
    }

    /// Symmetric 0/1 adjacency of an undirected simple graph.
    ///
    /// Both orientations of every pair are stored, duplicates collapse and
    /// self-loops are dropped.
    pub fn undirected_adjacency(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            let bad = if u >= n { Some(u) } else if v >= n { Some(v) } else { None };
            if let Some(index) = bad {
                return Err(GraphError::NodeOutOfRange { index, num_nodes: n });
            }
            if u != v {
                rows[u].push(v);
                rows[v].push(u);
            }
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            indices.extend(row);
            indptr.push(indices.len());
        }
        let values = vec![1.0; indices.len()];
        Ok(Self { n_rows: n, n_cols: n, indptr, indices, values })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    /// Number of stored entries in row `i`.
    pub fn degree(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in row-major order.
    pub fn upper_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.nnz() / 2);
        for u in 0..self.n_rows {
            for &v in self.row(u).0 {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols
            && (0..self.n_rows).all(|u| {
                let (cols, vals) = self.row(u);
                cols.iter().zip(vals).all(|(&v, &w)| self.get(v, u) == w)
            })
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows * self.n_cols];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out[i * self.n_cols + j] = v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_graph_degrees() {
        let a = CsrMatrix::undirected_adjacency(3, &[(0, 1), (1, 2)]).unwrap();
        let degrees: Vec<usize> = (0..3).map(|i| a.degree(i)).collect();
        assert_eq!(degrees, vec![1, 2, 1]);
        assert!(a.is_symmetric());
    }

    #[test]
    fn duplicates_and_self_loops_collapse() {
        let a = CsrMatrix::undirected_adjacency(3, &[(0, 1), (1, 0), (2, 2), (0, 1)]).unwrap();
        assert_eq!(a.degree(0), 1);
        assert_eq!(a.degree(2), 0);
        assert_eq!(a.upper_edges(), vec![(0, 1)]);
    }

    #[test]
    fn out_of_range_node() {
        let err = CsrMatrix::undirected_adjacency(2, &[(0, 2)]).unwrap_err();
        assert!(matches!(err, GraphError::NodeOutOfRange { index: 2, .. }));
    }

    #[test]
    fn from_parts_rejects_unsorted_rows() {
        assert!(CsrMatrix::from_parts(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::from_parts(1, 3, vec![0, 2], vec![1, 2], vec![1.0, 1.0]).is_ok());
    }
}

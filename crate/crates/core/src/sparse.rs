//! Compressed sparse row storage for binary interaction matrices.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Binary matrix in CSR layout. Column indices within each row are sorted
/// and unique; every stored entry has value 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseBinary {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
}

impl SparseBinary {
    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        SparseBinary {
            n_rows,
            n_cols,
            indptr: vec![0; n_rows + 1],
            indices: Vec::new(),
        }
    }

    /// Builds a matrix from (row, col) pairs; duplicates collapse to one entry.
    pub fn from_pairs(n_rows: usize, n_cols: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n_rows];
        for &(r, c) in pairs {
            if r >= n_rows {
                return Err(Error::OutOfRange { index: r, len: n_rows });
            }
            if c >= n_cols {
                return Err(Error::OutOfRange { index: c, len: n_cols });
            }
            rows[r].push(c as u32);
        }
        Ok(Self::from_rows(n_cols, rows))
    }

    pub(crate) fn from_rows(n_cols: usize, mut rows: Vec<Vec<u32>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            indices.extend_from_slice(row);
            indptr.push(indices.len());
        }
        SparseBinary {
            n_rows: rows.len(),
            n_cols,
            indptr,
            indices,
        }
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

    pub fn row(&self, r: usize) -> &[u32] {
        &self.indices[self.indptr[r]..self.indptr[r + 1]]
    }

    pub fn row_len(&self, r: usize) -> usize {
        self.indptr[r + 1] - self.indptr[r]
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.row(r).binary_search(&(c as u32)).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).iter().map(move |&c| (r, c as usize)))
    }

    /// Per-column nonzero counts.
    pub fn col_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_cols];
        for &c in &self.indices {
            counts[c as usize] += 1;
        }
        counts
    }

    pub fn transpose(&self) -> SparseBinary {
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); self.n_cols];
        for (r, c) in self.iter() {
            rows[c].push(r as u32);
        }
        SparseBinary::from_rows(self.n_rows, rows)
    }

    /// Elementwise union of two same-shape matrices.
    pub fn union(&self, other: &SparseBinary) -> Result<SparseBinary> {
        self.check_same_shape(other)?;
        let rows = (0..self.n_rows)
            .map(|r| {
                let mut v = self.row(r).to_vec();
                v.extend_from_slice(other.row(r));
                v
            })
            .collect();
        Ok(SparseBinary::from_rows(self.n_cols, rows))
    }

    pub(crate) fn check_same_shape(&self, other: &SparseBinary) -> Result<()> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        Ok(())
    }

    /// Dense 0/1 copy of one row.
    pub fn dense_row(&self, r: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        for &c in self.row(r) {
            out[c as usize] = 1.0;
        }
        out
    }

    /// Writes the coordinate-list text format: a `# rows cols nnz` header
    /// followed by one `row col` pair per line in row-major order.
    pub fn write_coo<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# {} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for (r, c) in self.iter() {
            writeln!(w, "{r} {c}")?;
        }
        Ok(())
    }

    pub fn read_coo<R: BufRead>(r: R) -> Result<SparseBinary> {
        let mut lines = r.lines().enumerate();
        let (n_rows, n_cols, nnz) = match lines.next() {
            Some((_, line)) => {
                let line = line.map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
                let parts: Vec<&str> = line.trim_start_matches('#').split_whitespace().collect();
                let parse = |s: Option<&&str>| -> Result<usize> {
                    s.and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
                        line: 1,
                        message: format!("bad header `{line}`"),
                    })
                };
                if !line.starts_with('#') {
                    return Err(Error::Parse { line: 1, message: "missing `#` header".into() });
                }
                (parse(parts.first())?, parse(parts.get(1))?, parse(parts.get(2))?)
            }
            None => return Err(Error::EmptyDataset),
        };
        let mut pairs = Vec::with_capacity(nnz);
        for (i, line) in lines {
            let line = line.map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(r)), Some(Ok(c)), None) => pairs.push((r, c)),
                _ => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("expected `row col`, got `{line}`"),
                    })
                }
            }
        }
        if pairs.len() != nnz {
            return Err(Error::Parse {
                line: 1,
                message: format!("header declares {nnz} entries, found {}", pairs.len()),
            });
        }
        SparseBinary::from_pairs(n_rows, n_cols, &pairs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coo_round_trip() {
        let m = SparseBinary::from_pairs(3, 4, &[(0, 1), (2, 3), (0, 1), (1, 0)]).unwrap();
        assert_eq!(m.nnz(), 3);
        let mut buf = Vec::new();
        m.write_coo(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "# 3 4 3\n0 1\n1 0\n2 3\n");
        assert_eq!(SparseBinary::read_coo(&buf[..]).unwrap(), m);
    }

    #[test]
    fn transpose_twice_is_identity() {
        let m = SparseBinary::from_pairs(3, 5, &[(0, 4), (1, 1), (2, 1), (2, 0)]).unwrap();
        assert_eq!(m.transpose().transpose(), m);
        assert_eq!(m.col_counts(), vec![1, 2, 0, 0, 1]);
    }

    #[test]
    fn out_of_range_pair_rejected() {
        assert!(SparseBinary::from_pairs(2, 2, &[(2, 0)]).is_err());
    }
}

//! Triplet assembly and compressed-row matrices.
//!
//! Duplicate triplets are summed in (row, col, insertion) order, so a given
//! sequence of pushes always produces bit-identical values.

use faer::sparse::{SparseColMat, Triplet};

#[derive(Debug, Clone)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, val));
    }

    /// Adds every stored entry of `m`, shifted by the given offsets.
    pub fn push_block(&mut self, m: &CsrMatrix, row_off: usize, col_off: usize, scale: f64) {
        for (i, j, v) in m.iter() {
            self.push(i + row_off, j + col_off, scale * v);
        }
    }

    pub fn build(mut self) -> CsrMatrix {
        // stable sort keeps insertion order within equal (row, col)
        self.entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &self.entries {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.nrows {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        TripletBuilder::new(nrows, ncols).build()
    }

    pub fn identity(n: usize) -> Self {
        let mut t = TripletBuilder::with_capacity(n, n, n);
        for i in 0..n {
            t.push(i, i, 1.0);
        }
        t.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    /// All stored entries as (row, col, value) in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(pos) => self.values[r.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.indptr == other.indptr
            && self.indices == other.indices
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `self^T x`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "matvec dimension mismatch");
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
        y
    }

    /// `y^T A x`.
    pub fn bilinear(&self, y: &[f64], x: &[f64]) -> f64 {
        dot(y, &self.mul_vec(x))
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = TripletBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        for (i, j, v) in self.iter() {
            t.push(j, i, v);
        }
        t.build()
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &CsrMatrix, s: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + other.nnz());
        t.push_block(self, 0, 0, 1.0);
        t.push_block(other, 0, 0, s);
        t.build()
    }

    /// Submatrix on the given row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (new, &old) in cols.iter().enumerate() {
            col_map[old] = new;
        }
        let mut t = TripletBuilder::new(rows.len(), cols.len());
        for (new_i, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                if col_map[j] != usize::MAX {
                    t.push(new_i, col_map[j], v);
                }
            }
        }
        t.build()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest |a_ij - a_ji|.
    pub fn asymmetry(&self) -> f64 {
        self.iter()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.iter() {
            d[i][j] += v;
        }
        d
    }

    pub fn to_faer(&self) -> SparseColMat<usize, f64> {
        let trip: Vec<_> = self.iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trip)
            .expect("valid triplets by construction")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_in_insertion_order() {
        let mut t = TripletBuilder::new(2, 3);
        t.push(1, 2, 1.0);
        t.push(0, 0, 2.0);
        t.push(1, 2, 1e-17);
        t.push(1, 0, -1.0);
        let m = t.build();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(1, 2), 1.0 + 1e-17);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), vec![2.0, 0.0]);
        assert_eq!(m.tr_mul_vec(&[1.0, 2.0]), vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn transpose_and_select() {
        let mut t = TripletBuilder::new(3, 3);
        for (i, j, v) in [
            (0, 0, 4.0),
            (0, 2, 1.0),
            (1, 1, 3.0),
            (2, 0, 5.0),
            (2, 2, 6.0),
        ] {
            t.push(i, j, v);
        }
        let m = t.build();
        let mt = m.transpose();
        assert_eq!(mt.get(2, 0), 1.0);
        assert_eq!(mt.get(0, 2), 5.0);
        let s = m.select(&[0, 2], &[0, 2]);
        assert_eq!(s.to_dense(), vec![vec![4.0, 1.0], vec![5.0, 6.0]]);
        assert_eq!(m.asymmetry(), 4.0);
    }
}

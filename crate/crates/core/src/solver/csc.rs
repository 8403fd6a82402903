/// Compressed sparse column matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowind: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, colptr: vec![0; ncols + 1], rowind: Vec::new(), values: Vec::new() }
    }

    pub fn nnz(&self) -> usize {
        self.rowind.len()
    }

    /// `y += alpha * A x`
    pub fn gemv(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for j in 0..self.ncols {
            let xj = alpha * x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.colptr[j]..self.colptr[j + 1] {
                y[self.rowind[p]] += self.values[p] * xj;
            }
        }
    }

    /// `y += alpha * A' x`
    pub fn gemv_t(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for j in 0..self.ncols {
            let mut acc = 0.0;
            for p in self.colptr[j]..self.colptr[j + 1] {
                acc += self.values[p] * x[self.rowind[p]];
            }
            y[j] += alpha * acc;
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                d[self.rowind[p]][j] += self.values[p];
            }
        }
        d
    }
}

/// Coordinate-format accumulator; duplicates are summed on conversion.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Appends a row at the bottom and returns its index.
    pub fn add_row(&mut self) -> usize {
        self.nrows += 1;
        self.nrows - 1
    }

    /// Appends a column at the right and returns its index.
    pub fn add_col(&mut self) -> usize {
        self.ncols += 1;
        self.ncols - 1
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        assert!(row < self.nrows && col < self.ncols, "triplet ({row}, {col}) out of bounds");
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    pub fn to_csc(&self) -> CscMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &(_, c, _) in &self.entries {
            counts[c + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut rows = vec![0usize; self.entries.len()];
        let mut vals = vec![0.0; self.entries.len()];
        for &(r, c, v) in &self.entries {
            rows[next[c]] = r;
            vals[next[c]] = v;
            next[c] += 1;
        }
        // Sort each column by row and merge duplicates.
        let mut colptr = vec![0usize; self.ncols + 1];
        let mut rowind = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len());
        let mut buf: Vec<(usize, f64)> = Vec::new();
        for j in 0..self.ncols {
            buf.clear();
            buf.extend((counts[j]..counts[j + 1]).map(|p| (rows[p], vals[p])));
            buf.sort_by_key(|e| e.0);
            for &(r, v) in &buf {
                if rowind.len() > colptr[j] && *rowind.last().unwrap() == r {
                    *values.last_mut().unwrap() += v;
                } else {
                    rowind.push(r);
                    values.push(v);
                }
            }
            colptr[j + 1] = rowind.len();
        }
        CscMatrix { nrows: self.nrows, ncols: self.ncols, colptr, rowind, values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_merge_and_products_match_dense() {
        let mut t = Triplets::new(3, 2);
        t.push(2, 0, 1.0);
        t.push(0, 0, 2.0);
        t.push(2, 0, 0.5);
        t.push(1, 1, -3.0);
        let a = t.to_csc();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.to_dense(), vec![vec![2.0, 0.0], vec![0.0, -3.0], vec![1.5, 0.0]]);
        let mut y = vec![0.0; 3];
        a.gemv(1.0, &[1.0, 2.0], &mut y);
        assert_eq!(y, vec![2.0, -6.0, 1.5]);
        let mut z = vec![0.0; 2];
        a.gemv_t(1.0, &[1.0, 1.0, 1.0], &mut z);
        assert_eq!(z, vec![3.5, -3.0]);
    }
}

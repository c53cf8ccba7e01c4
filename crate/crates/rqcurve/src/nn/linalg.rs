//! Row-major f64 matrices and the three multiply kernels training needs.
//!
//! Batches are laid out `[rows = samples, cols = features]`. The kernels are
//! plain loops arranged so the inner loop walks contiguous memory; that is
//! fast enough for the network sizes this crate trains.

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// `self [m,k] x b [k,n] -> [m,n]`
    pub fn matmul(&self, b: &Mat) -> Mat {
        assert_eq!(self.cols, b.rows, "matmul shape mismatch");
        let (m, k, n) = (self.rows, self.cols, b.cols);
        let mut out = Mat::zeros(m, n);
        for i in 0..m {
            let arow = self.row(i);
            let orow = out.row_mut(i);
            for (l, &av) in arow.iter().enumerate().take(k) {
                if av == 0.0 {
                    continue;
                }
                let brow = &b.data[l * n..(l + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                    *o += av * bv;
                }
            }
        }
        out
    }

    /// `self^T [k,m] x b [m,n] -> [k,n]`; accumulates into `out`.
    pub fn matmul_at_b_into(&self, b: &Mat, out: &mut Mat) {
        assert_eq!(self.rows, b.rows, "matmul_at_b shape mismatch");
        assert_eq!(out.rows, self.cols);
        assert_eq!(out.cols, b.cols);
        let (m, k, n) = (self.rows, self.cols, b.cols);
        for i in 0..m {
            let arow = self.row(i);
            let brow = b.row(i);
            for l in 0..k {
                let av = arow[l];
                if av == 0.0 {
                    continue;
                }
                let orow = &mut out.data[l * n..(l + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                    *o += av * bv;
                }
            }
        }
    }

    /// `self [m,n] x b^T [n,k] -> [m,k]`
    pub fn matmul_a_bt(&self, b: &Mat) -> Mat {
        assert_eq!(self.cols, b.cols, "matmul_a_bt shape mismatch");
        let (m, n, k) = (self.rows, self.cols, b.rows);
        let mut out = Mat::zeros(m, k);
        for i in 0..m {
            let arow = self.row(i);
            let orow = out.row_mut(i);
            for l in 0..k {
                let brow = &b.data[l * n..(l + 1) * n];
                let mut acc = 0.0;
                for (&a, &bv) in arow.iter().zip(brow.iter()) {
                    acc += a * bv;
                }
                orow[l] = acc;
            }
        }
        out
    }

    /// Column sums, e.g. bias gradients; accumulates into `out`.
    pub fn col_sum_into(&self, out: &mut [f64]) {
        assert_eq!(out.len(), self.cols);
        for i in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(i).iter()) {
                *o += v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        assert_eq!(c.data, vec![58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn matmul_at_b_matches_transpose() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(2, 2, vec![1.0, -1.0, 0.5, 2.0]);
        let mut out = Mat::zeros(3, 2);
        a.matmul_at_b_into(&b, &mut out);
        // a^T = [[1,4],[2,5],[3,6]]
        assert_eq!(out.data, vec![3.0, 7.0, 4.5, 8.0, 6.0, 9.0]);
    }

    #[test]
    fn matmul_a_bt_matches_transpose() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(2, 3, vec![1.0, 0.0, -1.0, 2.0, 1.0, 0.0]);
        let c = a.matmul_a_bt(&b);
        assert_eq!(c.data, vec![-2.0, 4.0, -2.0, 13.0]);
    }

    #[test]
    fn col_sum() {
        let a = Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let mut s = vec![0.0; 2];
        a.col_sum_into(&mut s);
        assert_eq!(s, vec![4.0, 6.0]);
    }
}

//! Symmetric positive definite band matrices with a Cholesky factorization.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetric band matrix stored by its lower band: row `i` keeps columns
/// `i - bandwidth ..= i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self { n, bandwidth, data: vec![0.0; n * (bandwidth + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo > self.bandwidth {
            None
        } else {
            Some(hi * (self.bandwidth + 1) + (hi - lo))
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Sets entries `(i, j)` and `(j, i)`. Panics outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] += v;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bandwidth);
            let hi = (i + self.bandwidth).min(self.n - 1);
            y[i] = (lo..=hi).map(|j| self.get(i, j) * x[j]).sum();
        }
        y
    }

    /// Smallest and largest eigenvalue.
    pub fn extreme_eigenvalues(&self) -> (f64, f64) {
        let eig = SymmetricEigen::new(self.to_dense());
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    pub fn cholesky(&self) -> Result<BandCholesky> {
        let b = self.bandwidth;
        let mut l = self.clone();
        for i in 0..self.n {
            let lo = i.saturating_sub(b);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(b));
                let mut s = l.get(i, j);
                for k in klo..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                    }
                    l.set(i, i, s.sqrt());
                } else {
                    let v = s / l.get(j, j);
                    l.set(i, j, v);
                }
            }
        }
        Ok(BandCholesky { l })
    }
}

/// Lower band factor `L` with `A = L L^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandCholesky {
    l: BandMatrix,
}

impl BandCholesky {
    pub fn dim(&self) -> usize {
        self.l.n
    }

    /// Solves `A x = rhs` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.l.n;
        let b = self.l.bandwidth;
        assert_eq!(x.len(), n);
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(b)..i {
                s -= self.l.get(i, k) * x[k];
            }
            x[i] = s / self.l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..(i + b + 1).min(n) {
                s -= self.l.get(k, i) * x[k];
            }
            x[i] = s / self.l.get(i, i);
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Column `k` of `A^{-1}`.
    pub fn inverse_column(&self, k: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.dim()];
        e[k] = 1.0;
        self.solve_in_place(&mut e);
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tridiagonal(n: usize) -> BandMatrix {
        let mut a = BandMatrix::zeros(n, 1);
        for i in 0..n {
            a.set(i, i, 4.0);
            if i > 0 {
                a.set(i, i - 1, 1.0);
            }
        }
        a
    }

    #[test]
    fn solve_matches_dense() {
        let a = tridiagonal(7);
        let rhs: Vec<f64> = (0..7).map(|i| (i as f64).sin()).collect();
        let x = a.cholesky().unwrap().solve(&rhs);
        let back = a.mul_vec(&x);
        for (u, v) in back.iter().zip(&rhs) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-13);
        }
        let dense = a.to_dense().lu().solve(&nalgebra::DVector::from_vec(rhs)).unwrap();
        for i in 0..7 {
            assert_abs_diff_eq!(x[i], dense[i], epsilon = 1e-13);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = BandMatrix::zeros(2, 1);
        a.set(0, 0, 1.0);
        a.set(1, 1, 1.0);
        a.set(1, 0, 2.0);
        assert!(matches!(a.cholesky(), Err(Error::NotPositiveDefinite { row: 1, .. })));
    }

    #[test]
    fn identity_eigenvalues() {
        let mut a = BandMatrix::zeros(5, 2);
        for i in 0..5 {
            a.set(i, i, 1.0);
        }
        let (lo, hi) = a.extreme_eigenvalues();
        assert_abs_diff_eq!(lo, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-14);
    }
}

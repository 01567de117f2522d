//! Dense ridge regression through the normal equations.
//!
//! Gram matrices are accumulated in `f64` in a fixed row order so repeated
//! fits over the same data produce bit-identical coefficients.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;

/// Running `X^T X` and `X^T Y` sums for a least-squares problem with
/// `n_in` features and `n_out` targets.
#[derive(Clone, Debug)]
pub struct NormalEquations {
    n_in: usize,
    n_out: usize,
    xtx: Vec<f64>,
    xty: Vec<f64>,
    yty: Vec<f64>,
    rows: usize,
}

impl NormalEquations {
    pub fn new(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            xtx: vec![0.0; n_in * n_in],
            xty: vec![0.0; n_in * n_out],
            yty: vec![0.0; n_out],
            rows: 0,
        }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Adds one observation. Only the upper triangle of `X^T X` is updated.
    pub fn add_row(&mut self, x: &[f64], y: &[f64]) {
        debug_assert_eq!(x.len(), self.n_in);
        debug_assert_eq!(y.len(), self.n_out);
        let n = self.n_in;
        for i in 0..n {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            let row = &mut self.xtx[i * n..(i + 1) * n];
            for j in i..n {
                row[j] += xi * x[j];
            }
            let out = &mut self.xty[i * self.n_out..(i + 1) * self.n_out];
            for (o, yk) in out.iter_mut().zip(y) {
                *o += xi * yk;
            }
        }
        for (a, b) in self.yty.iter_mut().zip(y) {
            *a += b * b;
        }
        self.rows += 1;
    }

    /// Merges the sums of another accumulator (same shape) into this one.
    pub fn merge(&mut self, other: &NormalEquations) {
        assert_eq!((self.n_in, self.n_out), (other.n_in, other.n_out));
        for (a, b) in self.xtx.iter_mut().zip(&other.xtx) {
            *a += b;
        }
        for (a, b) in self.xty.iter_mut().zip(&other.xty) {
            *a += b;
        }
        for (a, b) in self.yty.iter_mut().zip(&other.yty) {
            *a += b;
        }
        self.rows += other.rows;
    }

    /// Solves `(X^T X + lambda I) W = X^T Y`. The result is `n_in x n_out`,
    /// row-major.
    pub fn solve(&self, lambda: f64) -> Result<Vec<f64>, Error> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Config("ridge lambda must be finite and non-negative"));
        }
        let n = self.n_in;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = self.xtx[i * n + j];
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
            a[i * n + i] += lambda;
        }
        cholesky(&mut a, n)?;
        let mut w = self.xty.clone();
        cholesky_solve_in_place(&a, n, &mut w, self.n_out);
        Ok(w)
    }

    /// Sum of squared residuals `||Y - X W||^2` evaluated from the stored sums.
    pub fn sse(&self, w: &[f64]) -> f64 {
        let (n, m) = (self.n_in, self.n_out);
        let mut total = 0.0;
        for k in 0..m {
            // y'y - 2 w'X'y + w'X'Xw
            let mut wxy = 0.0;
            let mut wxxw = 0.0;
            for i in 0..n {
                let wi = w[i * m + k];
                wxy += wi * self.xty[i * m + k];
                let mut s = 0.0;
                for j in 0..n {
                    let g = if i <= j { self.xtx[i * n + j] } else { self.xtx[j * n + i] };
                    s += g * w[j * m + k];
                }
                wxxw += wi * s;
            }
            total += self.yty[k] - 2.0 * wxy + wxxw;
        }
        total.max(0.0)
    }
}

/// In-place lower Cholesky factorisation of a symmetric positive definite
/// `n x n` matrix. The upper triangle is left untouched.
pub fn cholesky(a: &mut [f64], n: usize) -> Result<(), Error> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0f64, f64::max).max(1.0);
    let tol = scale * 1e-13;
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > tol) {
            return Err(Error::Singular { pivot: j });
        }
        let d = libm::sqrt(d);
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(())
}

/// Solves `L L^T X = B` for `m` right-hand sides stored row-major in `b`.
pub fn cholesky_solve_in_place(l: &[f64], n: usize, b: &mut [f64], m: usize) {
    for i in 0..n {
        for k in 0..i {
            let lik = l[i * n + k];
            if lik != 0.0 {
                for c in 0..m {
                    b[i * m + c] -= lik * b[k * m + c];
                }
            }
        }
        let d = l[i * n + i];
        for c in 0..m {
            b[i * m + c] /= d;
        }
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let lki = l[k * n + i];
            if lki != 0.0 {
                for c in 0..m {
                    b[i * m + c] -= lki * b[k * m + c];
                }
            }
        }
        let d = l[i * n + i];
        for c in 0..m {
            b[i * m + c] /= d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    #[test]
    fn recovers_exact_linear_map() {
        let (n, m) = (6, 2);
        let mut s = 42u64;
        let w_true: Vec<f64> = (0..n * m).map(|_| lcg(&mut s)).collect();
        let mut ne = NormalEquations::new(n, m);
        for _ in 0..50 {
            let x: Vec<f64> = (0..n).map(|_| lcg(&mut s)).collect();
            let y: Vec<f64> = (0..m)
                .map(|k| (0..n).map(|i| x[i] * w_true[i * m + k]).sum())
                .collect();
            ne.add_row(&x, &y);
        }
        let w = ne.solve(0.0).unwrap();
        for (a, b) in w.iter().zip(&w_true) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(ne.sse(&w) < 1e-12);
    }

    #[test]
    fn singular_without_ridge_is_an_error() {
        let mut ne = NormalEquations::new(3, 1);
        for i in 0..10 {
            let t = i as f64;
            ne.add_row(&[t, 2.0 * t, 1.0], &[t]);
        }
        assert!(matches!(ne.solve(0.0), Err(Error::Singular { .. })));
        assert!(ne.solve(1e-3).is_ok());
    }

    #[test]
    fn larger_ridge_never_fits_better() {
        let mut s = 7u64;
        let mut ne = NormalEquations::new(5, 3);
        for _ in 0..40 {
            let x: Vec<f64> = (0..5).map(|_| lcg(&mut s)).collect();
            let y: Vec<f64> = (0..3).map(|_| lcg(&mut s)).collect();
            ne.add_row(&x, &y);
        }
        let mut prev = 0.0;
        let mut lambda = 1e-4;
        for _ in 0..16 {
            let sse = ne.sse(&ne.solve(lambda).unwrap());
            assert!(sse >= prev - 1e-9, "lambda {lambda}: {sse} < {prev}");
            prev = sse;
            lambda *= 2.0;
        }
    }
}

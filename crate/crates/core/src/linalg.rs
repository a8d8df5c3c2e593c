//! Dense spectral helpers and a seeded power iteration.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default size cap for dense eigen-solves.
pub const DENSE_CAP: usize = 2000;

/// Largest relative asymmetry accepted before symmetrizing.
pub const SYMMETRY_TOL: f64 = 1e-10;

pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    (a - a.transpose()).amax() / scale
}

/// Symmetrizes `(A+Aᵀ)/2`, refusing matrices that are not symmetric to begin with.
pub fn symmetrized(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let asym = asymmetry(a);
    if asym > SYMMETRY_TOL {
        return Err(Error::Numerical(format!("matrix asymmetry {asym:e} exceeds {SYMMETRY_TOL:e}")));
    }
    Ok((a + a.transpose()) * 0.5)
}

pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let s = symmetrized(a)?;
    let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    Ok(ev)
}

/// Largest eigenvalue of a symmetric matrix (0 for an empty one).
pub fn sym_top_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    Ok(sym_eigenvalues(a)?.last().copied().unwrap_or(0.0))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let scale = a.iter().map(|z| z.norm()).fold(f64::MIN_POSITIVE, f64::max);
    let adj = a.adjoint();
    let asym = (a - &adj).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale;
    if asym > SYMMETRY_TOL {
        return Err(Error::Numerical(format!("matrix is not Hermitian ({asym:e})")));
    }
    let h = (a + adj).map(|z| z * 0.5);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    Ok(ev)
}

pub fn top_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions {
            tol: 1e-8,
            max_iter: 10_000,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub value: f64,
    /// `‖Ax − λx‖` at the final iterate.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration for a symmetric positive semidefinite operator given by `apply`.
///
/// The start vector has strictly positive seeded entries, which suits the
/// nonnegative kernels used throughout.
pub fn power_iteration<F>(n: usize, apply: F, opts: PowerOptions) -> PowerEstimate
where
    F: Fn(&[f64], &mut [f64]),
{
    if n == 0 {
        return PowerEstimate {
            value: 0.0,
            residual: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
    normalize(&mut x);
    let mut y = vec![0.0; n];
    let mut lambda = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=opts.max_iter {
        iterations = it;
        apply(&x, &mut y);
        let next = dot(&x, &y);
        let ny = norm(&y);
        if ny == 0.0 {
            lambda = 0.0;
            converged = true;
            break;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
        let done = (next - lambda).abs() <= opts.tol * next.abs().max(f64::MIN_POSITIVE);
        lambda = next;
        if done {
            converged = true;
            break;
        }
    }
    apply(&x, &mut y);
    let value = dot(&x, &y).max(lambda);
    let residual = y
        .iter()
        .zip(&x)
        .map(|(yi, xi)| (yi - value * xi).powi(2))
        .sum::<f64>()
        .sqrt();
    PowerEstimate {
        value,
        residual,
        iterations,
        converged,
    }
}

/// Power iteration on a dense symmetric matrix.
pub fn power_iteration_dense(a: &DMatrix<f64>, opts: PowerOptions) -> PowerEstimate {
    let n = a.nrows();
    power_iteration(
        n,
        |x, y| {
            let v = a * DVector::from_column_slice(x);
            y.copy_from_slice(v.as_slice());
        },
        opts,
    )
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: &mut [f64]) {
    let n = norm(a);
    if n > 0.0 {
        a.iter_mut().for_each(|x| *x /= n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_eigen() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let top = sym_top_eigenvalue(&a).unwrap();
        assert!((top - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-14);
        let p = power_iteration_dense(&a, PowerOptions { tol: 1e-14, ..Default::default() });
        assert!((p.value - top).abs() < 1e-12);
        assert!(p.converged);
    }

    #[test]
    fn asymmetric_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        assert!(sym_top_eigenvalue(&a).is_err());
    }

    #[test]
    fn hermitian_spectrum() {
        let i = Complex64::i();
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(1.0, 0.0), i, -i, Complex64::new(1.0, 0.0)],
        );
        let ev = hermitian_eigenvalues(&a).unwrap();
        assert!((ev[0]).abs() < 1e-14 && (ev[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn singular_value_lower_triangle() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let s = top_singular_value(&m);
        assert!((s * s - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-13);
    }
}

//! Points of the unit ball `𝔹ₙ`, the Bergman metric, slices, tents and Haar unitaries.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// `⟨a, b⟩ = Σ aᵢ b̄ᵢ`. In this notation `z̄·w = ⟨w, z⟩`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm(a: &[Complex64]) -> f64 {
    norm_sqr(a).sqrt()
}

pub fn scale(a: &[Complex64], c: Complex64) -> Vec<Complex64> {
    a.iter().map(|z| z * c).collect()
}

/// A point with `|z| < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallPoint(Vec<Complex64>);

impl BallPoint {
    pub fn new(z: Vec<Complex64>) -> Result<BallPoint> {
        if z.is_empty() {
            return domain("a point needs at least one coordinate");
        }
        if norm_sqr(&z) >= 1.0 || z.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return domain(format!("point of norm {} is not in the ball", norm(&z)));
        }
        Ok(BallPoint(z))
    }

    pub fn origin(n: usize) -> BallPoint {
        BallPoint(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn from_reals(coords: &[f64]) -> Result<BallPoint> {
        if coords.len() % 2 != 0 {
            return domain("coordinates come in (re, im) pairs");
        }
        BallPoint::new(coords.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect())
    }

    pub fn to_reals(&self) -> Vec<f64> {
        self.0.iter().flat_map(|z| [z.re, z.im]).collect()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

fn check_ball(z: &[Complex64]) -> Result<()> {
    if norm_sqr(z) >= 1.0 {
        return domain(format!("|z| = {} is not below 1", norm(z)));
    }
    Ok(())
}

/// `|φ_z(w)|²` for the involutive automorphism exchanging `0` and `z`.
///
/// Uses `φ_z(w) = (z − P_z w − s_z Q_z w)/(1 − ⟨w,z⟩)` with `s_z = √(1−|z|²)`,
/// which stays accurate when `w` is close to `z`.
pub fn mobius_sqr(z: &[Complex64], w: &[Complex64]) -> f64 {
    let zz = norm_sqr(z);
    if zz == 0.0 {
        return norm_sqr(w);
    }
    let wz = inner(w, z);
    let coef = wz / zz;
    let mut num = 0.0;
    let mut q2 = 0.0;
    for (zi, wi) in z.iter().zip(w) {
        let p = zi * coef;
        num += (zi - p).norm_sqr();
        q2 += (wi - p).norm_sqr();
    }
    (num + (1.0 - zz) * q2) / (Complex64::new(1.0, 0.0) - wz).norm_sqr()
}

/// Bergman distance `β(z, w) = tanh⁻¹|φ_z(w)|`.
pub fn bergman_metric(z: &[Complex64], w: &[Complex64]) -> Result<f64> {
    check_ball(z)?;
    check_ball(w)?;
    let m = mobius_sqr(z, w).clamp(0.0, 1.0);
    Ok(m.sqrt().min(1.0 - f64::EPSILON).atanh())
}

/// `(P_z w, Q_z w)` with `P_z w = (z̄·w/|z|²) z`.
pub fn slice_projection(
    z: &[Complex64],
    w: &[Complex64],
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let zz = norm_sqr(z);
    if zz == 0.0 {
        return domain("projection onto the slice of 0 is undefined");
    }
    let coef = inner(w, z) / zz;
    let p: Vec<Complex64> = z.iter().map(|zi| zi * coef).collect();
    let q: Vec<Complex64> = w.iter().zip(&p).map(|(wi, pi)| wi - pi).collect();
    Ok((p, q))
}

/// `z ∈ T(w) = {z : |1 − z̄·Pw| ≤ 1 − |w|}` with `Pw = w/|w|`; `T(0)` is the whole ball.
pub fn tent_membership(z: &[Complex64], w: &[Complex64]) -> bool {
    let nw = norm(w);
    if nw == 0.0 {
        return true;
    }
    let pw: Vec<Complex64> = w.iter().map(|x| x / nw).collect();
    let lhs = (Complex64::new(1.0, 0.0) - inner(&pw, z)).norm();
    lhs <= (1.0 - nw) * (1.0 + 1e-12) + 1e-15
}

/// Seeded stream of Haar-distributed unitary matrices.
#[derive(Debug, Clone)]
pub struct UnitarySampler {
    seed: u64,
    n: usize,
    rng: ChaCha8Rng,
}

impl UnitarySampler {
    pub fn new(n: usize, seed: u64) -> UnitarySampler {
        UnitarySampler {
            seed,
            n,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// QR of a complex Ginibre matrix, with the phases of `R`'s diagonal moved into `Q`.
    pub fn sample(&mut self) -> DMatrix<Complex64> {
        let n = self.n;
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        let g = DMatrix::from_fn(n, n, |_, _| {
            let re: f64 = StandardNormal.sample(&mut self.rng);
            let im: f64 = StandardNormal.sample(&mut self.rng);
            Complex64::new(re * scale, im * scale)
        });
        let qr = g.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..n {
            let d = r[(j, j)];
            let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
            for i in 0..n {
                q[(i, j)] *= phase;
            }
        }
        q
    }
}

pub fn apply_unitary(u: &DMatrix<Complex64>, z: &[Complex64]) -> Vec<Complex64> {
    (0..u.nrows())
        .map(|i| (0..u.ncols()).map(|j| u[(i, j)] * z[j]).sum())
        .collect()
}

/// `‖U*U − I‖_max`.
pub fn unitarity_defect(u: &DMatrix<Complex64>) -> f64 {
    let p = u.adjoint() * u;
    let mut worst = 0.0f64;
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((p[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        let v: Vec<Complex64> = (0..n)
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let r = rng.random::<f64>().powf(0.3) * 0.999;
        scale(&v, c(r / norm(&v), 0.0))
    }

    #[test]
    fn metric_from_origin() {
        let z = [c(0.3, 0.4), c(0.1, -0.2)];
        let b = bergman_metric(&[c(0.0, 0.0); 2], &z).unwrap();
        assert!((b - norm(&z).atanh()).abs() < 1e-14);
        assert_eq!(bergman_metric(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn metric_disk_symmetric_pair() {
        // φ_a(w) = (a − w)/(1 − ā w) at a = 0.5, w = −0.5: |φ| = 1/1.25
        let b = bergman_metric(&[c(0.5, 0.0)], &[c(-0.5, 0.0)]).unwrap();
        assert!((b - 0.8f64.atanh()).abs() < 1e-14);
    }

    #[test]
    fn metric_matches_polar_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let z = random_point(&mut rng, 3);
            let w = random_point(&mut rng, 3);
            let polar = 1.0
                - (1.0 - norm_sqr(&z)) * (1.0 - norm_sqr(&w))
                    / (c(1.0, 0.0) - inner(&w, &z)).norm_sqr();
            assert!((mobius_sqr(&z, &w) - polar).abs() < 1e-10);
        }
    }

    #[test]
    fn metric_symmetric_and_triangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let x = random_point(&mut rng, 2);
            let y = random_point(&mut rng, 2);
            let z = random_point(&mut rng, 2);
            let xy = bergman_metric(&x, &y).unwrap();
            assert!((xy - bergman_metric(&y, &x).unwrap()).abs() < 1e-9);
            let xz = bergman_metric(&x, &z).unwrap();
            let zy = bergman_metric(&z, &y).unwrap();
            assert!(xy <= xz + zy + 1e-9);
        }
    }

    #[test]
    fn metric_rejects_outside() {
        assert!(bergman_metric(&[c(1.0, 0.0)], &[c(0.0, 0.0)]).is_err());
    }

    #[test]
    fn projections() {
        let z = [c(0.3, 0.1), c(-0.2, 0.4)];
        let w = scale(&z, c(0.5, -1.0));
        let (_, q) = slice_projection(&z, &w).unwrap();
        assert!(norm(&q) < 1e-15);
        let perp = [c(0.4, 0.2), c(0.1, -0.3)];
        let perp = {
            let (_, q) = slice_projection(&z, &perp).unwrap();
            q
        };
        let (p, _) = slice_projection(&z, &perp).unwrap();
        assert!(norm(&p) < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let z = random_point(&mut rng, 3);
            let w = random_point(&mut rng, 3);
            let (p, q) = slice_projection(&z, &w).unwrap();
            assert!((norm_sqr(&w) - norm_sqr(&p) - norm_sqr(&q)).abs() < 1e-12);
            assert!(inner(&p, &q).norm() < 1e-12);
        }
        assert!(slice_projection(&[c(0.0, 0.0)], &[c(0.1, 0.0)]).is_err());
    }

    #[test]
    fn tents() {
        let w = [c(0.7, 0.0), c(0.0, 0.0)];
        assert!(tent_membership(&w, &w));
        assert!(tent_membership(&[c(-0.9, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0); 2]));
        assert!(!tent_membership(&[c(0.0, 0.5), c(0.0, 0.0)], &w));
    }

    #[test]
    fn haar_unitaries() {
        let mut s = UnitarySampler::new(1, 3);
        let u = s.sample();
        assert!((u[(0, 0)].norm() - 1.0).abs() < 1e-12);
        let mut s = UnitarySampler::new(3, 7);
        let mut t = UnitarySampler::new(3, 7);
        let samples = 10_000;
        let mut mean = 0.0;
        let mut mean_sq = 0.0;
        for _ in 0..samples {
            let u = s.sample();
            assert_eq!(u, t.sample());
            assert!(unitarity_defect(&u) < 1e-12);
            for j in 0..3 {
                let col: f64 = (0..3).map(|i| u[(i, j)].norm_sqr()).sum();
                assert!((col - 1.0).abs() < 1e-12);
            }
            let x = u[(0, 0)].norm_sqr();
            mean += x;
            mean_sq += x * x;
        }
        mean /= samples as f64;
        let var = mean_sq / samples as f64 - mean * mean;
        let se = (var / samples as f64).sqrt();
        assert!((mean - 1.0 / 3.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }
}

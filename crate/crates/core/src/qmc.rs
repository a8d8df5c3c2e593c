//! Seeded low-discrepancy points: Halton sequences with a random shift.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Radical inverse of `index` in base `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut x = 0.0;
    while index > 0 {
        x += (index % base) as f64 * f;
        index /= base;
        f *= inv;
    }
    x
}

/// Halton points in `[0,1)^dim` with a seeded Cranley–Patterson rotation.
#[derive(Debug, Clone)]
pub struct Halton {
    dim: usize,
    shift: Vec<f64>,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Halton {
        assert!(dim <= PRIMES.len(), "Halton dimension {dim} unsupported");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Halton {
            dim,
            shift: (0..dim).map(|_| rng.random::<f64>()).collect(),
            index: 1,
        }
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let i = self.index;
        self.index += 1;
        (0..self.dim)
            .map(|k| {
                let x = radical_inverse(i, PRIMES[k]) + self.shift[k];
                x - x.floor()
            })
            .collect()
    }
}

fn gaussian(u: f64) -> f64 {
    let normal = Normal::standard();
    normal.inverse_cdf(u.clamp(1e-15, 1.0 - 1e-15))
}

/// Points on the unit sphere of `ℂⁿ`.
#[derive(Debug, Clone)]
pub struct SpherePoints {
    n: usize,
    halton: Halton,
}

impl SpherePoints {
    pub fn new(n: usize, seed: u64) -> SpherePoints {
        SpherePoints {
            n,
            halton: Halton::new(2 * n, seed),
        }
    }

    pub fn next_point(&mut self) -> Vec<Complex64> {
        loop {
            let u = self.halton.next_point();
            let v: Vec<Complex64> = (0..self.n)
                .map(|k| Complex64::new(gaussian(u[2 * k]), gaussian(u[2 * k + 1])))
                .collect();
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 1e-12 {
                return v.into_iter().map(|z| z / norm).collect();
            }
        }
    }
}

/// Points uniform in the unit ball of `ℂⁿ` (radius `u^{1/2n}`).
#[derive(Debug, Clone)]
pub struct BallPoints {
    n: usize,
    halton: Halton,
}

impl BallPoints {
    pub fn new(n: usize, seed: u64) -> BallPoints {
        BallPoints {
            n,
            halton: Halton::new(2 * n + 1, seed),
        }
    }

    pub fn next_point(&mut self) -> Vec<Complex64> {
        loop {
            let u = self.halton.next_point();
            let v: Vec<Complex64> = (0..self.n)
                .map(|k| Complex64::new(gaussian(u[2 * k]), gaussian(u[2 * k + 1])))
                .collect();
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let r = u[2 * self.n].powf(1.0 / (2 * self.n) as f64);
            if norm > 1e-12 && r < 1.0 {
                return v.into_iter().map(|z| z * (r / norm)).collect();
            }
        }
    }
}

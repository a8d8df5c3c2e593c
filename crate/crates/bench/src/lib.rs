//! Fixed inputs shared by the benchmarks.

use std::sync::Arc;

use carleson_core::bergman::{BergmanGeometry, BergmanTree, NetOptions};
use carleson_core::measures::{discretize, random_atomic_measure, AtomicMeasure};
use carleson_core::TreeMeasure;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn atoms(n: usize, count: usize, max_level: u32, seed: u64) -> AtomicMeasure {
    random_atomic_measure(n, count, max_level, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// A random measure in the ball of dimension `n` with its closure tree.
pub fn ball_instance(n: usize, depth: u32, count: usize, seed: u64) -> (AtomicMeasure, BergmanTree, TreeMeasure) {
    let mu = atoms(n, count, depth, seed);
    let geom = Arc::new(BergmanGeometry::build(n, depth, NetOptions::default()).expect("geometry"));
    let bt = BergmanTree::closure_of_points(geom, mu.points()).expect("closure");
    let tm = discretize(&mu, &bt).expect("discretize");
    (mu, bt, tm)
}

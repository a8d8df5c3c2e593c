//! Positive kernel operators on trees and their norms on `ℓ²(μ)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bergman::{BergmanTree, DStarMode, RingTree};
use crate::error::{Error, Result};
use crate::linalg::{self, PowerOptions, DENSE_CAP};
use crate::tree::{NodeId, Tree, TreeMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OperatorKind {
    /// `2^{2d(α∧β) − d*([α]∧[β])}`; needs rings.
    TFull(DStarMode),
    /// `2^{d(α∧β)}`.
    TBig,
    /// `2^{(1+r)d(α∧β) − r min(d(α), d(β))}`.
    TSmall(f64),
    /// `2^{−d(α,β)}`, the fractional integral of order one.
    Frac,
}

/// A kernel operator bound to a tree: `Tg(α) = Σ_β K(α,β) g(β) μ(β)`.
#[derive(Debug, Clone, Copy)]
pub struct TreeOperator<'a> {
    kind: OperatorKind,
    tree: &'a Tree,
    bergman: Option<&'a BergmanTree>,
}

impl<'a> TreeOperator<'a> {
    pub fn new(kind: OperatorKind, tree: &'a Tree) -> Result<TreeOperator<'a>> {
        if let OperatorKind::TFull(_) = kind {
            return Err(Error::Structure("the full kernel needs a Bergman tree with rings".into()));
        }
        if let OperatorKind::TSmall(r) = kind {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Domain(format!("r = {r} must be positive")));
            }
        }
        Ok(TreeOperator {
            kind,
            tree,
            bergman: None,
        })
    }

    pub fn on_bergman(kind: OperatorKind, bt: &'a BergmanTree) -> Result<TreeOperator<'a>> {
        let mut op = TreeOperator::new(OperatorKind::TBig, bt.tree())?;
        if let OperatorKind::TSmall(_) = kind {
            TreeOperator::new(kind, bt.tree())?;
        }
        op.kind = kind;
        op.bergman = Some(bt);
        Ok(op)
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn tree(&self) -> &Tree {
        self.tree
    }

    pub fn kernel(&self, a: NodeId, b: NodeId) -> f64 {
        let t = self.tree;
        let w = t.depth(t.wedge_unchecked(a, b)) as f64;
        let (da, db) = (t.depth(a) as f64, t.depth(b) as f64);
        match self.kind {
            OperatorKind::TFull(mode) => {
                let bt = self.bergman.expect("full kernel is built on a Bergman tree");
                (2.0 * w - bt.dstar_wedge(a, b, mode)).exp2()
            }
            OperatorKind::TBig => w.exp2(),
            OperatorKind::TSmall(r) => ((1.0 + r) * w - r * da.min(db)).exp2(),
            OperatorKind::Frac => (2.0 * w - da - db).exp2(),
        }
    }

    pub fn kernel_matrix(&self, nodes: &[NodeId]) -> DMatrix<f64> {
        let s = nodes.len();
        let mut k = DMatrix::zeros(s, s);
        for i in 0..s {
            for j in i..s {
                let v = self.kernel(nodes[i], nodes[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// `Tg` at every node, summing over the support of `μ`.
    pub fn apply(&self, g: &[f64], mu: &TreeMeasure) -> Vec<f64> {
        let support = mu.support();
        (0..self.tree.len())
            .map(|a| support.iter().map(|&b| self.kernel(a, b) * g[b] * mu.weight(b)).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormMethod {
    Dense,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub method: NormMethod,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

/// Norm on `ℓ²(μ)`: the top eigenvalue of `D^{1/2} K D^{1/2}` over the support of `μ`.
pub fn operator_norm(op: &TreeOperator, mu: &TreeMeasure, method: NormMethod, opts: PowerOptions) -> Result<NormEstimate> {
    let support = mu.support();
    let exact = |value| NormEstimate {
        value,
        method,
        residual: 0.0,
        iterations: 0,
        converged: true,
        seed: opts.seed,
    };
    if support.is_empty() {
        return Ok(exact(0.0));
    }
    let sq: Vec<f64> = support.iter().map(|&a| mu.weight(a).sqrt()).collect();
    match method {
        NormMethod::Dense => {
            if support.len() > DENSE_CAP {
                return Err(Error::Resource {
                    what: "dense operator norm".into(),
                    estimate: support.len() as u64,
                    cap: DENSE_CAP as u64,
                });
            }
            let mut m = op.kernel_matrix(&support);
            for i in 0..support.len() {
                for j in 0..support.len() {
                    m[(i, j)] *= sq[i] * sq[j];
                }
            }
            Ok(exact(linalg::sym_top_eigenvalue(&m)?))
        }
        NormMethod::Power => {
            let est = linalg::power_iteration(
                support.len(),
                |x, y| {
                    for (i, yi) in y.iter_mut().enumerate() {
                        let mut s = 0.0;
                        for (j, xj) in x.iter().enumerate() {
                            s += op.kernel(support[i], support[j]) * sq[j] * xj;
                        }
                        *yi = sq[i] * s;
                    }
                },
                opts,
            );
            Ok(NormEstimate {
                value: est.value,
                method,
                residual: est.residual,
                iterations: est.iterations,
                converged: est.converged,
                seed: opts.seed,
            })
        }
    }
}

/// Norm of `Tg(s) = Σ_t k(s,t) g(t) μ(t)` on `ℓ²(μ)` for a general kernel matrix.
pub fn weighted_kernel_norm(k: &DMatrix<f64>, mu: &[f64]) -> f64 {
    let sq: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
    let m = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| sq[i] * k[(i, j)] * sq[j]);
    linalg::top_singular_value(&m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VinoReport {
    /// `max_{t,x} Σ_s k(s,t) k(s,x) μ(s) / ((k(t,x) + k(x,t))/2)`.
    pub m: f64,
    pub witness: Option<(usize, usize)>,
}

/// Smallest `M` in the Vinogradov–Seničkin test, over pairs with `μ(t), μ(x) > 0`.
pub fn schur_vino_check(k: &DMatrix<f64>, mu: &[f64]) -> VinoReport {
    let n = k.nrows();
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(mu));
    let num = k.transpose() * d * k;
    let mut best = VinoReport { m: 0.0, witness: None };
    for t in (0..n).filter(|&t| mu[t] > 0.0) {
        for x in (0..n).filter(|&x| mu[x] > 0.0) {
            let den = 0.5 * (k[(t, x)] + k[(x, t)]);
            let r = if den > 0.0 {
                num[(t, x)] / den
            } else if num[(t, x)] > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            if best.witness.is_none() || r > best.m {
                best = VinoReport { m: r, witness: Some((t, x)) };
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleSufficesRow {
    pub r: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleSufficesTable {
    pub rows: Vec<SimpleSufficesRow>,
    /// `max_r r · ‖T_small(r)‖`.
    pub k: f64,
    /// Least-squares slope of `log ‖T_small(r)‖` against `log r`.
    pub slope: f64,
}

/// `‖T_small(r)‖` over a grid of `r`.
pub fn simple_suffices_suite(tree: &Tree, mu: &TreeMeasure, rs: &[f64], method: NormMethod) -> Result<SimpleSufficesTable> {
    let mut rows = Vec::with_capacity(rs.len());
    for &r in rs {
        let op = TreeOperator::new(OperatorKind::TSmall(r), tree)?;
        let norm = operator_norm(&op, mu, method, PowerOptions::default())?.value;
        rows.push(SimpleSufficesRow { r, norm });
    }
    let k = rows.iter().map(|row| row.r * row.norm).fold(0.0, f64::max);
    let xs: Vec<f64> = rows.iter().map(|row| row.r.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|row| row.norm.max(f64::MIN_POSITIVE).ln()).collect();
    let slope = if rows.len() > 1 {
        crate::measures::fitted_slope(&xs, &ys)
    } else {
        0.0
    };
    Ok(SimpleSufficesTable { rows, k, slope })
}

/// Ring tree in which each depth of `tree` is a single ring.
pub fn level_rings(tree: &Tree) -> RingTree {
    let depth = tree.max_depth();
    let parents: Vec<Option<NodeId>> = (0..=depth as usize).map(|d| d.checked_sub(1)).collect();
    RingTree {
        tree: Tree::from_parents(&parents).expect("a path is a tree"),
        keys: (0..=depth).map(|d| (d, 0)).collect(),
        ring_of: (0..tree.len()).map(|a| tree.depth(a) as NodeId).collect(),
    }
}

fn ring_members(rings: &RingTree, c: NodeId) -> Vec<NodeId> {
    (0..rings.ring_of.len()).filter(|&a| rings.ring_of[a] == c).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonCheck {
    /// `max |ℙ_C − Σ_k 2^{−k} 𝔸_C^k|` over the ring's kernel matrix.
    pub residual: f64,
    /// `ℙ_C` applied to the test vectors, against the sum of averages applied to them.
    pub vector_residual: f64,
    pub size: usize,
}

/// `ℙ_C(γ,γ′) = 2^{2d(γ∧γ′) − d(C)}` against `Σ_{k ≤ d(C)} 2^{−k} 𝔸_C^k`, `𝔸_C^k = 2^{d(C)−k} χ{d(γ∧γ′) = d(C) − k}`.
pub fn poisson_decomposition_check(tree: &Tree, rings: &RingTree, c: NodeId, tests: &[Vec<f64>]) -> PoissonCheck {
    let members = ring_members(rings, c);
    let s = members.len();
    let dc = rings.tree.depth(c) as i64;
    let wedge = |i: usize, j: usize| tree.depth(tree.wedge_unchecked(members[i], members[j])) as i64;
    let p = DMatrix::from_fn(s, s, |i, j| ((2 * wedge(i, j) - dc) as f64).exp2());
    let mut sum = DMatrix::zeros(s, s);
    for k in 0..=dc {
        let a = DMatrix::from_fn(s, s, |i, j| {
            if wedge(i, j) == dc - k {
                ((dc - k) as f64).exp2()
            } else {
                0.0
            }
        });
        sum += a * (-k as f64).exp2();
    }
    let residual = (&p - &sum).abs().max();
    let vector_residual = tests
        .iter()
        .filter(|v| v.len() == s)
        .map(|v| {
            let x = DVector::from_column_slice(v);
            (&p * &x - &sum * &x).abs().max()
        })
        .fold(0.0, f64::max);
    PoissonCheck {
        residual,
        vector_residual,
        size: s,
    }
}

/// `Σ_{β∈B} 2^{2d(α∧β)} / 2^{d(B) + d([α]∧B)}`.
pub fn pke_ratio(tree: &Tree, rings: &RingTree, a: NodeId, b_ring: NodeId) -> f64 {
    let ra = rings.ring_of[a];
    let db = rings.tree.depth(b_ring) as f64;
    let dab = rings.tree.depth(rings.tree.wedge_unchecked(ra, b_ring)) as f64;
    let sum: f64 = ring_members(rings, b_ring)
        .into_iter()
        .map(|b| (2.0 * tree.depth(tree.wedge_unchecked(a, b)) as f64).exp2())
        .sum();
    sum / (db + dab).exp2()
}

/// The ratio on a binary tree with one ring per level: `3/2 − 2^{−m−1}`, `m = min(d(α), d(B))`.
pub fn pke_ratio_binary(da: u32, db: u32) -> f64 {
    1.5 - (-(da.min(db) as f64) - 1.0).exp2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bergman::{BergmanGeometry, NetOptions};
    use std::sync::Arc;

    fn root_measure(t: &Tree, m: f64) -> TreeMeasure {
        TreeMeasure::from_atoms(t, &[(t.root(), m)]).unwrap()
    }

    #[test]
    fn root_mass_examples() {
        let t = Tree::binary(3);
        let mu = root_measure(&t, 1.5);
        let op = TreeOperator::new(OperatorKind::TBig, &t).unwrap();
        let g = vec![2.0; t.len()];
        assert!(op.apply(&g, &mu).iter().all(|&v| v == 3.0));
        let n = operator_norm(&op, &mu, NormMethod::Dense, PowerOptions::default()).unwrap();
        assert!((n.value - 1.5).abs() < 1e-14);
        let frac = TreeOperator::new(OperatorKind::Frac, &t).unwrap();
        let one = vec![1.0; t.len()];
        let nu = frac.apply(&one, &root_measure(&t, 1.0));
        for a in 0..t.len() {
            assert_eq!(nu[a], 2f64.powi(-(t.depth(a) as i32)));
        }
        let zero = TreeMeasure::zero(&t);
        assert_eq!(operator_norm(&op, &zero, NormMethod::Power, PowerOptions::default()).unwrap().value, 0.0);
    }

    #[test]
    fn tsmall_three_nodes_by_hand() {
        // Root 0 with children 1, 2; r = 1: K = 2^{2 d∧ − min d}.
        let t = Tree::from_parents(&[None, Some(0), Some(0)]).unwrap();
        let op = TreeOperator::new(OperatorKind::TSmall(1.0), &t).unwrap();
        let k = op.kernel_matrix(&[0, 1, 2]);
        let hand = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 1.0, 2.0, 0.5, 1.0, 0.5, 2.0]);
        assert_eq!(k, hand);
    }

    #[test]
    fn tfull_needs_rings() {
        let t = Tree::binary(2);
        assert!(TreeOperator::new(OperatorKind::TFull(DStarMode::Analytic), &t).is_err());
        assert!(TreeOperator::new(OperatorKind::TSmall(0.0), &t).is_err());
    }

    #[test]
    fn dense_and_power_agree() {
        let t = Tree::binary(6);
        let w: Vec<f64> = (0..t.len()).map(|a| ((a * 7919) % 13) as f64 / 13.0 * 4f64.powi(-(t.depth(a) as i32))).collect();
        let mu = TreeMeasure::new(&t, w).unwrap();
        for kind in [OperatorKind::TBig, OperatorKind::TSmall(0.5), OperatorKind::Frac] {
            let op = TreeOperator::new(kind, &t).unwrap();
            let a = operator_norm(&op, &mu, NormMethod::Dense, PowerOptions::default()).unwrap().value;
            let opts = PowerOptions { tol: 1e-12, ..PowerOptions::default() };
            let b = operator_norm(&op, &mu, NormMethod::Power, opts).unwrap();
            assert!((a - b.value).abs() <= 1e-6 * a, "{kind:?}: {a} vs {}", b.value);
        }
    }

    #[test]
    fn vino_rank_one_and_diagonal() {
        let k = DMatrix::from_element(4, 4, 1.0);
        let mu = [0.5, 0.25, 1.0, 0.25];
        let v = schur_vino_check(&k, &mu);
        assert!((v.m - 2.0).abs() < 1e-15);
        assert!((weighted_kernel_norm(&k, &mu) - 2.0).abs() < 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 2.0, 3.0]));
        let v = schur_vino_check(&d, &[1.0, 1.0, 2.0]);
        assert_eq!(v.m, 6.0);
        assert_eq!(v.witness, Some((2, 2)));
        let gap = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(schur_vino_check(&gap, &[1.0, 1.0, 1.0]).m, f64::INFINITY);
    }

    #[test]
    fn poisson_geometric_sum() {
        let t = Tree::binary(5);
        let rings = level_rings(&t);
        for c in 0..=5 {
            let s = 1usize << c;
            let v: Vec<f64> = (0..s).map(|i| (i as f64).sin()).collect();
            let chk = poisson_decomposition_check(&t, &rings, c, &[v]);
            assert!(chk.residual <= 1e-12 && chk.vector_residual <= 1e-12 * s as f64);
            assert_eq!(chk.size, s);
        }
        for da in 0..=5 {
            for db in 0..=5 {
                let a = t.nodes_at_depth(da)[0];
                let r = pke_ratio(&t, &rings, a, db as NodeId);
                assert!((r - pke_ratio_binary(da, db)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn kernel_domination_on_bergman_tree() {
        let geom = Arc::new(BergmanGeometry::build(2, 5, NetOptions::default()).unwrap());
        let bt = BergmanTree::full(geom, 1 << 20).unwrap();
        let big = TreeOperator::on_bergman(OperatorKind::TBig, &bt).unwrap();
        let full = TreeOperator::on_bergman(OperatorKind::TFull(DStarMode::Analytic), &bt).unwrap();
        let small = TreeOperator::on_bergman(OperatorKind::TSmall(1.0), &bt).unwrap();
        for a in (0..bt.len()).step_by(7) {
            for b in (0..bt.len()).step_by(11) {
                let (x, y, z) = (big.kernel(a, b), full.kernel(a, b), small.kernel(a, b));
                assert!(x >= y && y >= z);
            }
        }
    }
}

//! Two-weight Hardy inequality on trees and the boundary maximal operator.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, PowerEstimate, PowerOptions};
use crate::tree::{BoundaryMeasure, ConditionReport, NodeId, Tree, TreeMeasure};

/// Rows `α` with `w(α) > 0` and the columns `β ≤ α` they reach.
fn embedding_support(tree: &Tree, w: &TreeMeasure) -> (Vec<NodeId>, Vec<NodeId>) {
    let rows = w.support();
    let cols: Vec<NodeId> = (0..tree.len()).filter(|&b| w.istar(b) > 0.0).collect();
    (rows, cols)
}

fn unreachable_mass(w: &TreeMeasure, v: &TreeMeasure, cols: &[NodeId]) -> bool {
    cols.iter().any(|&b| v.weight(b) == 0.0 && w.istar(b) > 0.0)
}

/// The matrix `M[α,β] = 1{β≤α}·√(w(α)/v(β))` restricted to its nonzero block.
pub fn embedding_matrix(tree: &Tree, w: &TreeMeasure, v: &TreeMeasure) -> Result<DMatrix<f64>> {
    let (rows, cols) = embedding_support(tree, w);
    if unreachable_mass(w, v, &cols) {
        return Err(Error::Domain("v vanishes where I*w is positive".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        let (a, b) = (rows[i], cols[j]);
        if tree.is_ancestor(b, a) {
            (w.weight(a) / v.weight(b)).sqrt()
        } else {
            0.0
        }
    }))
}

/// Best constant `C` in `‖If‖_{ℓ²(w)} ≤ C‖f‖_{ℓ²(v)}`; `+∞` when `v` vanishes where needed.
pub fn embedding_norm(tree: &Tree, w: &TreeMeasure, v: &TreeMeasure, cap: usize) -> Result<f64> {
    if tree.len() > cap {
        return Err(Error::Resource {
            what: "dense two-weight oracle".into(),
            estimate: tree.len() as u64,
            cap: cap as u64,
        });
    }
    let (_, cols) = embedding_support(tree, w);
    if cols.is_empty() {
        return Ok(0.0);
    }
    if unreachable_mass(w, v, &cols) {
        return Ok(f64::INFINITY);
    }
    Ok(linalg::top_singular_value(&embedding_matrix(tree, w, v)?))
}

/// Same constant via power iteration on `MᵀM`, applied with tree sweeps only.
pub fn embedding_norm_power(
    tree: &Tree,
    w: &TreeMeasure,
    v: &TreeMeasure,
    opts: PowerOptions,
) -> Result<PowerEstimate> {
    let (_, cols) = embedding_support(tree, w);
    if unreachable_mass(w, v, &cols) {
        return Err(Error::Domain("v vanishes where I*w is positive".into()));
    }
    let n = tree.len();
    let sw: Vec<f64> = w.weights().iter().map(|x| x.sqrt()).collect();
    let inv_sv: Vec<f64> = (0..n)
        .map(|b| if w.istar(b) > 0.0 { 1.0 / v.weight(b).sqrt() } else { 0.0 })
        .collect();
    let mut est = linalg::power_iteration(
        n,
        |x, y| {
            let f: Vec<f64> = x.iter().zip(&inv_sv).map(|(a, b)| a * b).collect();
            let mf: Vec<f64> = tree.sum_i(&f).iter().zip(&sw).map(|(a, b)| a * b).collect();
            let g: Vec<f64> = mf.iter().zip(&sw).map(|(a, b)| a * b).collect();
            let back = tree.sum_istar(&g);
            for i in 0..n {
                y[i] = back[i] * inv_sv[i];
            }
        },
        opts,
    );
    est.value = est.value.sqrt();
    Ok(est)
}

/// `sup_α Σ_{β≥α} I*w(β)² v(β)⁻¹ / I*w(α)`, with `0/0 := 0`.
pub fn tree_condition(tree: &Tree, w: &TreeMeasure, v: &TreeMeasure) -> ConditionReport {
    let h: Vec<f64> = (0..tree.len())
        .map(|b| {
            let iw = w.istar(b);
            if iw == 0.0 {
                0.0
            } else if v.weight(b) == 0.0 {
                f64::INFINITY
            } else {
                iw * iw / v.weight(b)
            }
        })
        .collect();
    let sums = tree.sum_istar(&h);
    ConditionReport::from_ratios(
        "two-weight-tree",
        (0..tree.len())
            .filter(|&a| w.istar(a) > 0.0)
            .map(|a| (a, sums[a] / w.istar(a))),
        false,
    )
}

/// `ℳf(ζ) = max_{α≤ζ}` of the `ν`-average of `|f|` over the leaves below `α`.
///
/// Averages over subtrees carrying no `ν`-mass count as 0.
pub fn maximal_operator(tree: &Tree, f: &[f64], nu: &BoundaryMeasure) -> Vec<f64> {
    let nu = nu.measure();
    let fnu: Vec<f64> = f.iter().zip(nu.weights()).map(|(x, m)| x.abs() * m).collect();
    let num = tree.sum_istar(&fnu);
    let mut out = vec![0.0; tree.len()];
    for &a in tree.bfs() {
        let den = nu.istar(a);
        let avg = if den > 0.0 { num[a] / den } else { 0.0 };
        out[a] = if a == tree.root() { avg } else { out[tree.parent(a)].max(avg) };
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximalCheck {
    /// `sup_α |𝒮*(α)|_σ / |𝒮*(α)|_ν`.
    pub testing: ConditionReport,
    /// Largest observed `∫(ℳf)² dσ / ∫ f² dν` over the test family.
    pub empirical: f64,
    pub trials: usize,
    /// `empirical ≤ 4·testing` (with relative slack 1e-9).
    pub within_four: bool,
    /// `empirical ≤ 8·testing`, the weak-type interpolation bound.
    pub within_eight: bool,
}

fn maximal_ratio(tree: &Tree, f: &[f64], sigma: &TreeMeasure, nu: &BoundaryMeasure) -> f64 {
    let den: f64 = f
        .iter()
        .zip(nu.measure().weights())
        .map(|(x, m)| x * x * m)
        .sum();
    if den == 0.0 {
        return 0.0;
    }
    let mf = maximal_operator(tree, f, nu);
    let num: f64 = mf.iter().zip(sigma.weights()).map(|(x, m)| x * x * m).sum();
    num / den
}

/// Testing constant and a randomized lower estimate of the maximal inequality constant.
pub fn maximal_inequality_check(
    tree: &Tree,
    sigma: &TreeMeasure,
    nu: &BoundaryMeasure,
    trials: usize,
    seed: u64,
) -> MaximalCheck {
    let nm = nu.measure();
    let testing = ConditionReport::from_ratios(
        "maximal-testing",
        (0..tree.len()).filter(|&a| sigma.istar(a) > 0.0).map(|a| {
            let den = nm.istar(a);
            (a, if den > 0.0 { sigma.istar(a) / den } else { f64::INFINITY })
        }),
        false,
    );
    let leaves: Vec<NodeId> = tree.leaves().into_iter().filter(|&l| nm.weight(l) > 0.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    let mut best_f = vec![0.0; tree.len()];
    let mut count = 0;
    let consider = |f: Vec<f64>, best: &mut f64, best_f: &mut Vec<f64>| {
        let r = maximal_ratio(tree, &f, sigma, nu);
        if r > *best {
            *best = r;
            *best_f = f;
        }
    };
    for a in 0..tree.len() {
        if nm.istar(a) == 0.0 {
            continue;
        }
        let mut f = vec![0.0; tree.len()];
        for &l in &leaves {
            if tree.is_ancestor(a, l) {
                f[l] = 1.0;
            }
        }
        consider(f, &mut best, &mut best_f);
        count += 1;
    }
    let random_trials = trials / 2;
    for t in 0..random_trials {
        let mut f = vec![0.0; tree.len()];
        for &l in &leaves {
            f[l] = match t % 3 {
                0 => rng.random::<f64>(),
                1 => {
                    if rng.random::<f64>() < 0.2 {
                        rng.random::<f64>()
                    } else {
                        0.0
                    }
                }
                _ => {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    (2.0 * g).exp()
                }
            };
        }
        consider(f, &mut best, &mut best_f);
        count += 1;
    }
    if !leaves.is_empty() {
        for _ in 0..trials.saturating_sub(random_trials) {
            let mut f = best_f.clone();
            let l = leaves[rng.random_range(0..leaves.len())];
            let g: f64 = StandardNormal.sample(&mut rng);
            f[l] = if f[l] == 0.0 { rng.random::<f64>() } else { f[l] * g.exp() };
            consider(f, &mut best, &mut best_f);
            count += 1;
        }
    }
    let slack = 1.0 + 1e-9;
    MaximalCheck {
        within_four: best <= 4.0 * testing.constant * slack,
        within_eight: best <= 8.0 * testing.constant * slack,
        testing,
        empirical: best,
        trials: count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(t: &Tree) -> TreeMeasure {
        TreeMeasure::new(t, vec![1.0; t.len()]).unwrap()
    }

    #[test]
    fn linear_two_node_oracle() {
        let t = Tree::linear(2);
        let c = embedding_norm(&t, &ones(&t), &ones(&t), 2000).unwrap();
        assert!((c * c - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-13);
        let r = tree_condition(&t, &ones(&t), &ones(&t));
        assert_eq!(r.constant, 2.5);
        assert_eq!(r.witness, Some(0));
    }

    #[test]
    fn zero_weight() {
        let t = Tree::binary(3);
        let z = TreeMeasure::zero(&t);
        assert_eq!(embedding_norm(&t, &z, &ones(&t), 2000).unwrap(), 0.0);
        assert_eq!(tree_condition(&t, &z, &ones(&t)).constant, 0.0);
    }

    #[test]
    fn vanishing_v_is_infinite() {
        let t = Tree::linear(3);
        let w = ones(&t);
        let v = TreeMeasure::new(&t, vec![1.0, 0.0, 1.0]).unwrap();
        assert!(embedding_norm(&t, &w, &v, 2000).unwrap().is_infinite());
        assert!(tree_condition(&t, &w, &v).is_infinite());
    }

    #[test]
    fn cap_refuses() {
        let t = Tree::binary(4);
        assert!(matches!(
            embedding_norm(&t, &ones(&t), &ones(&t), 10),
            Err(Error::Resource { .. })
        ));
    }

    #[test]
    fn maximal_of_constant_is_constant() {
        let t = Tree::binary(4);
        let nu = BoundaryMeasure::uniform(&t);
        let m = maximal_operator(&t, &vec![1.0; t.len()], &nu);
        for l in t.leaves() {
            assert!((m[l] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn maximal_spike_at_leaf() {
        let t = Tree::binary(3);
        let nu = BoundaryMeasure::uniform(&t);
        let leaf = t.leaves()[2];
        let mut f = vec![0.0; t.len()];
        f[leaf] = 1.0;
        assert_eq!(maximal_operator(&t, &f, &nu)[leaf], 1.0);
    }

    #[test]
    fn maximal_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = Tree::binary(4);
        let leaves = t.leaves();
        let mut w = vec![0.0; t.len()];
        let mut f = vec![0.0; t.len()];
        for &l in &leaves {
            w[l] = rng.random::<f64>();
            f[l] = rng.random::<f64>() - 0.3;
        }
        let nu = BoundaryMeasure::new(&t, w.clone()).unwrap();
        let m = maximal_operator(&t, &f, &nu);
        for z in 0..t.len() {
            let mut best = 0.0f64;
            for a in t.ancestors(z) {
                let under: Vec<_> = leaves.iter().filter(|&&l| t.is_ancestor(a, l)).collect();
                let mass: f64 = under.iter().map(|&&l| w[l]).sum();
                let int: f64 = under.iter().map(|&&l| f[l].abs() * w[l]).sum();
                best = best.max(int / mass);
            }
            assert!((m[z] - best).abs() < 1e-14);
        }
    }

    #[test]
    fn maximal_check_equal_measures() {
        let t = Tree::binary(5);
        let nu = BoundaryMeasure::uniform(&t);
        let chk = maximal_inequality_check(&t, nu.measure(), &nu, 200, 1);
        assert!((chk.testing.constant - 1.0).abs() < 1e-12);
        assert!(chk.empirical >= 1.0 - 1e-12);
        assert!(chk.within_four);
    }

    #[test]
    fn maximal_check_single_geodesic() {
        // σ on the root-to-leaf geodesic, ν all on that leaf.
        let t = Tree::binary(3);
        let leaf = t.leaves()[0];
        let mut nw = vec![0.0; t.len()];
        nw[leaf] = 2.0;
        let nu = BoundaryMeasure::new(&t, nw).unwrap();
        let mut sw = vec![0.0; t.len()];
        for a in t.ancestors(leaf) {
            sw[a] = 1.0;
        }
        let sigma = TreeMeasure::new(&t, sw).unwrap();
        let chk = maximal_inequality_check(&t, &sigma, &nu, 50, 2);
        // ratio at root: 4 / 2
        assert!((chk.testing.constant - 2.0).abs() < 1e-15);
        assert_eq!(chk.testing.witness, Some(0));
    }
}

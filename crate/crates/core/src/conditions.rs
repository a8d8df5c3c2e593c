//! Testing conditions on tree measures.
//!
//! Every constant is a supremum of ratios over the support closure of the
//! measure (nodes with `I*μ > 0`); nodes outside it give `0/0` and are skipped.

use serde::{Deserialize, Serialize};

use crate::bergman::{BergmanTree, DStarMode, PairOptions};
use crate::disk::DiskTree;
use crate::error::{domain, Result};
use crate::tree::{ConditionReport, Tree, TreeMeasure};

fn pow2(x: f64) -> f64 {
    x.exp2()
}

/// `sup 2^{2σ d(α)} I*μ(α)`.
pub fn simple_condition(tree: &Tree, mu: &TreeMeasure, sigma: f64) -> ConditionReport {
    let ratios = mu
        .support_closure()
        .into_iter()
        .map(|a| (a, pow2(2.0 * sigma * tree.depth(a) as f64) * mu.istar(a)));
    ConditionReport::from_ratios("simple", ratios, false).with_param("sigma", sigma)
}

/// `sup_α Σ_{β≥α} 2^{2σ d(β)} I*μ(β)² / I*μ(α)`.
///
/// The ratio is computed as `2^{2σd(α)} I*μ(α) + (children's sums)/I*μ(α)`,
/// so it dominates the simple ratio without rounding slack.
pub fn tree_condition(tree: &Tree, mu: &TreeMeasure, sigma: f64) -> ConditionReport {
    let istar = mu.istar_all();
    let f: Vec<f64> = (0..tree.len())
        .map(|b| pow2(2.0 * sigma * tree.depth(b) as f64) * istar[b] * istar[b])
        .collect();
    let s = tree.sum_istar(&f);
    let ratios = mu.support_closure().into_iter().map(|a| {
        let rest: f64 = tree.children(a).iter().map(|&c| s[c]).sum();
        let head = pow2(2.0 * sigma * tree.depth(a) as f64) * istar[a];
        (a, head + rest / istar[a])
    });
    ConditionReport::from_ratios("tree", ratios, false).with_param("sigma", sigma)
}

/// `h(n) = 1/(n ln²n)` for `n ≥ 2`, and `h(2)` below; summable.
pub fn log_summable(n: u32) -> f64 {
    let x = n.max(2) as f64;
    1.0 / (x * x.ln().powi(2))
}

/// `sup 2^{2σ d(α)} I*μ(α) / h(d(α))`.
pub fn strengthened_simple<H: Fn(u32) -> f64>(tree: &Tree, mu: &TreeMeasure, sigma: f64, h: H) -> ConditionReport {
    let ratios = mu.support_closure().into_iter().map(|a| {
        let d = tree.depth(a);
        (a, pow2(2.0 * sigma * d as f64) * mu.istar(a) / h(d))
    });
    ConditionReport::from_ratios("ssimp", ratios, false).with_param("sigma", sigma)
}

/// `sup 2^{2σ d(α)} (Σ_{β≥α} μ(β)^p)^{1/p}`.
pub fn lp_simple(tree: &Tree, mu: &TreeMeasure, sigma: f64, p: f64) -> Result<ConditionReport> {
    if !(p > 0.0 && p <= 1.0) {
        return domain(format!("p = {p} is outside (0, 1]"));
    }
    let powered: Vec<f64> = mu.weights().iter().map(|w| if *w > 0.0 { w.powf(p) } else { 0.0 }).collect();
    let sums = tree.sum_istar(&powered);
    let ratios = mu
        .support_closure()
        .into_iter()
        .map(|a| (a, pow2(2.0 * sigma * tree.depth(a) as f64) * sums[a].powf(1.0 / p)));
    Ok(ConditionReport::from_ratios("lp", ratios, false)
        .with_param("sigma", sigma)
        .with_param("p", p))
}

/// Strengthened simple conditions that imply the tree condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SimpleRoute {
    /// `ssimp` with `h = log_summable`.
    Strengthened,
    /// `ℓ^p`-simple with the given `p`.
    Lp(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicationCheck {
    pub route: SimpleRoute,
    pub route_constant: f64,
    pub tree_constant: f64,
    /// Factor `K` with `tree ≤ K · route` from the summation argument.
    pub factor: f64,
    pub holds: bool,
}

/// Compares the `σ`-tree constant with a strengthened simple constant.
///
/// With `G = 1/(1 − 2^{−2σ})` the factor is `G·Σ_{d ≤ D} h(d)` for `ssimp` and
/// `2G/(1 − 2^{−2σ(1−p)})` for the `ℓ^p` route.
pub fn simple_implies_tree_check(
    tree: &Tree,
    mu: &TreeMeasure,
    sigma: f64,
    route: SimpleRoute,
) -> Result<ImplicationCheck> {
    if sigma <= 0.0 {
        return domain(format!("sigma = {sigma} must be positive"));
    }
    let g = 1.0 / (1.0 - pow2(-2.0 * sigma));
    let (route_constant, factor) = match route {
        SimpleRoute::Strengthened => {
            let hsum: f64 = (0..=tree.max_depth()).map(log_summable).sum();
            (strengthened_simple(tree, mu, sigma, log_summable).constant, g * hsum)
        }
        SimpleRoute::Lp(p) => {
            if !(p > 0.0 && p < 1.0) {
                return domain(format!("p = {p} is outside (0, 1)"));
            }
            let cp = 1.0 / (1.0 - pow2(-2.0 * sigma * (1.0 - p)));
            (lp_simple(tree, mu, sigma, p)?.constant, 2.0 * g * cp)
        }
    };
    let tree_constant = tree_condition(tree, mu, sigma).constant;
    Ok(ImplicationCheck {
        route,
        route_constant,
        tree_constant,
        factor,
        holds: tree_constant <= factor * route_constant * (1.0 + 1e-12),
    })
}

/// Parameters of the split sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    /// Largest `k`; `None` runs to the geometry depth.
    pub kmax: Option<u32>,
    pub pairs: PairOptions,
    pub mode: DStarMode,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            kmax: None,
            pairs: PairOptions::default(),
            mode: DStarMode::Analytic,
        }
    }
}

/// `L(γ) = Σ_k 2^{d(γ)−k} Σ_{(δ,δ′) ∈ 𝒢^{(k)}(γ)} I*μ(δ) I*μ(δ′)` over the `(d(γ), k)` kept by `keep`.
pub fn split_terms<K: Fn(u32, u32) -> bool>(
    bt: &BergmanTree,
    mu: &TreeMeasure,
    opts: SplitOptions,
    keep: K,
) -> Vec<f64> {
    let tree = bt.tree();
    let depth = bt.geometry().depth().min(tree.max_depth());
    let kmax = opts.kmax.unwrap_or(depth);
    let istar = mu.istar_all();
    let mut out = vec![0.0; tree.len()];
    for g in mu.support_closure() {
        let dg = tree.depth(g);
        let mut total = 0.0;
        for k in 0..=kmax {
            let target = dg + k + 2;
            if target > depth {
                break;
            }
            if !keep(dg, k) {
                continue;
            }
            let mut s = 0.0;
            for members in bt.grand_groups(g, target, Some(mu)).values() {
                for &(ca, a) in members {
                    for &(cb, b) in members {
                        if ca != cb && opts.pairs.accepts(bt.dstar_distance(a, b, opts.mode)) {
                            s += istar[a] * istar[b];
                        }
                    }
                }
            }
            total += pow2(dg as f64 - k as f64) * s;
        }
        out[g] = total;
    }
    out
}

fn split_report(name: &str, bt: &BergmanTree, mu: &TreeMeasure, terms: &[f64]) -> ConditionReport {
    let left = bt.tree().sum_istar(terms);
    let ratios = mu.support_closure().into_iter().map(|a| (a, left[a] / mu.istar(a)));
    ConditionReport::from_ratios(name, ratios, false)
}

fn with_split_params(r: ConditionReport, opts: &SplitOptions) -> ConditionReport {
    let mut r = r.with_param("tau", opts.pairs.tau);
    if let Some(k) = opts.kmax {
        r = r.with_param("kmax", k as f64);
    }
    if let DStarMode::Sampled { rotations, .. } = opts.mode {
        r = r.with_param("rotations", rotations as f64);
    }
    r
}

/// Split tree condition: `sup_α Σ_{γ≥α} L(γ) / I*μ(α)`.
pub fn split_tree_condition(bt: &BergmanTree, mu: &TreeMeasure, opts: SplitOptions) -> ConditionReport {
    let terms = split_terms(bt, mu, opts, |_, _| true);
    with_split_params(split_report("split", bt, mu, &terms), &opts)
}

/// The split sum restricted to `k ≤ ε d(γ)`.
pub fn epsilon_split_condition(bt: &BergmanTree, mu: &TreeMeasure, eps: f64, opts: SplitOptions) -> ConditionReport {
    let terms = split_terms(bt, mu, opts, |dg, k| k as f64 <= eps * dg as f64);
    with_split_params(split_report("eps-split", bt, mu, &terms), &opts).with_param("eps", eps)
}

/// The complementary tail `k > ε d(γ)`.
pub fn split_tail_condition(bt: &BergmanTree, mu: &TreeMeasure, eps: f64, opts: SplitOptions) -> ConditionReport {
    let terms = split_terms(bt, mu, opts, |dg, k| k as f64 > eps * dg as f64);
    with_split_params(split_report("split-tail", bt, mu, &terms), &opts).with_param("eps", eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DruryArvesonEstimate {
    /// `√(sup 2^{d(α)} I*μ(α))`.
    pub simple: f64,
    /// `√(split constant)`.
    pub split: f64,
    pub combined: f64,
}

pub fn drury_arveson_estimate(bt: &BergmanTree, mu: &TreeMeasure, opts: SplitOptions) -> DruryArvesonEstimate {
    let simple = simple_condition(bt.tree(), mu, 0.5).constant.sqrt();
    let split = split_tree_condition(bt, mu, opts).constant.sqrt();
    DruryArvesonEstimate {
        simple,
        split,
        combined: simple + split,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FattenedReport {
    /// `(T_𝒯)`.
    pub tree_standard: ConditionReport,
    /// `(T_𝔉)`.
    pub tree_fattened: ConditionReport,
    /// `(S_𝔉)`.
    pub simple_fattened: ConditionReport,
}

impl FattenedReport {
    /// `C_{T_𝒯} / C_{T_𝔉}`, with `0/0 = 0`.
    pub fn implication_ratio(&self) -> f64 {
        let (a, b) = (self.tree_standard.constant, self.tree_fattened.constant);
        if a == 0.0 {
            0.0
        } else {
            a / b
        }
    }
}

/// Disk conditions at `σ = ½` for one measure discretized on `𝒯` and on `𝔉`.
pub fn fattened_conditions(
    standard: &DiskTree,
    mu_standard: &TreeMeasure,
    fattened: &DiskTree,
    mu_fattened: &TreeMeasure,
) -> FattenedReport {
    FattenedReport {
        tree_standard: tree_condition(standard.tree(), mu_standard, 0.5),
        tree_fattened: tree_condition(fattened.tree(), mu_fattened, 0.5),
        simple_fattened: simple_condition(fattened.tree(), mu_fattened, 0.5),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn root_atom(tree: &Tree, m: f64) -> TreeMeasure {
        TreeMeasure::from_atoms(tree, &[(tree.root(), m)]).unwrap()
    }

    #[test]
    fn root_atom_constants() {
        let t = Tree::binary(3);
        let mu = root_atom(&t, 2.5);
        assert_eq!(simple_condition(&t, &mu, 0.5).constant, 2.5);
        assert_eq!(tree_condition(&t, &mu, 0.0).constant, 2.5);
        assert!((lp_simple(&t, &mu, 0.5, 0.5).unwrap().constant - 2.5).abs() < 1e-12);
        let ss = strengthened_simple(&t, &mu, 0.5, |_| 1.0);
        assert_eq!(ss.constant, 2.5);
        assert_eq!(ss.witness, Some(0));
    }

    #[test]
    fn zero_measure_is_zero() {
        let t = Tree::binary(3);
        let mu = TreeMeasure::zero(&t);
        assert_eq!(simple_condition(&t, &mu, 0.5).constant, 0.0);
        assert_eq!(tree_condition(&t, &mu, 0.5).constant, 0.0);
        assert_eq!(strengthened_simple(&t, &mu, 0.5, log_summable).constant, 0.0);
        assert!(simple_condition(&t, &mu, 0.5).witness.is_none());
    }

    #[test]
    fn ssimp_with_unit_h_is_simple() {
        let t = Tree::complete(3, 4);
        let w: Vec<f64> = (0..t.len()).map(|i| ((i * 37) % 11) as f64 / 7.0).collect();
        let mu = TreeMeasure::new(&t, w).unwrap();
        let a = simple_condition(&t, &mu, 0.3);
        let b = strengthened_simple(&t, &mu, 0.3, |_| 1.0);
        assert_eq!(a.constant, b.constant);
        assert_eq!(a.witness, b.witness);
    }

    #[test]
    fn uniform_leaf_measure_constants() {
        // Leaf masses 2^{-D}: simple constant 1, tree ratio D − d + 1.
        let depth = 7;
        let t = Tree::binary(depth);
        let mut w = vec![0.0; t.len()];
        for a in t.leaves() {
            w[a] = 2f64.powi(-(depth as i32));
        }
        let mu = TreeMeasure::new(&t, w).unwrap();
        assert!((simple_condition(&t, &mu, 0.5).constant - 1.0).abs() < 1e-12);
        let tc = tree_condition(&t, &mu, 0.5);
        assert!((tc.constant - (depth + 1) as f64).abs() < 1e-12);
        assert_eq!(tc.witness, Some(0));
    }

    #[test]
    fn linear_tree_counterexample() {
        // μ(α) = 2^{-d(α)}: the ℓ^p condition is bounded while ssimp grows with depth.
        let mut lp = Vec::new();
        let mut ss = Vec::new();
        for len in [20, 40, 80] {
            let t = Tree::linear(len);
            let w = (0..len).map(|a| 2f64.powi(-(t.depth(a) as i32))).collect();
            let mu = TreeMeasure::new(&t, w).unwrap();
            lp.push(lp_simple(&t, &mu, 0.5, 0.5).unwrap().constant);
            ss.push(strengthened_simple(&t, &mu, 0.5, log_summable).constant);
        }
        // Bounded by (1 − 2^{−1/2})^{−2}.
        let cap = (1.0 - 0.5f64.sqrt()).powi(-2);
        assert!(lp.iter().all(|&c| c <= cap * (1.0 + 1e-12)));
        assert!(ss[2] > 1.5 * ss[1] && ss[1] > 1.5 * ss[0]);
    }

    #[test]
    fn implication_factor_holds_on_examples() {
        let t = Tree::binary(8);
        let w: Vec<f64> = (0..t.len())
            .map(|a| 4f64.powi(-(t.depth(a) as i32)) * (1.0 + (a % 5) as f64))
            .collect();
        let mu = TreeMeasure::new(&t, w).unwrap();
        for route in [SimpleRoute::Strengthened, SimpleRoute::Lp(0.5)] {
            let c = simple_implies_tree_check(&t, &mu, 0.4, route).unwrap();
            assert!(c.holds, "{c:?}");
        }
    }
}

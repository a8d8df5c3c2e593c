//! Measure families on the ball and the disk, and their discretization onto trees.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ball;
use crate::bergman::{inner_radius, BergmanTree};
use crate::disk::{kubes_per_level, level_radius, DiskKind, DiskTree};
use crate::error::{domain, Error, Result};
use crate::qmc::BallPoints;
use crate::tree::{ConditionReport, NodeId, Tree, TreeMeasure};

/// A finite sum of point masses in the ball of `ℂⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    n: usize,
    points: Vec<Vec<Complex64>>,
    masses: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AtomFile {
    z: Vec<f64>,
    m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MeasureFile {
    atoms: Vec<AtomFile>,
}

impl AtomicMeasure {
    pub fn new(n: usize, atoms: Vec<(Vec<Complex64>, f64)>) -> Result<AtomicMeasure> {
        if n == 0 {
            return domain("dimension must be positive");
        }
        let mut points = Vec::with_capacity(atoms.len());
        let mut masses = Vec::with_capacity(atoms.len());
        for (i, (z, m)) in atoms.into_iter().enumerate() {
            if z.len() != n {
                return domain(format!("atom {i} has dimension {}, expected {n}", z.len()));
            }
            let r = ball::norm(&z);
            if !(r < 1.0) {
                return domain(format!("atom {i} has |z| = {r}"));
            }
            if !(m >= 0.0 && m.is_finite()) {
                return domain(format!("atom {i} has mass {m}"));
            }
            points.push(z);
            masses.push(m);
        }
        Ok(AtomicMeasure { n, points, masses })
    }

    pub fn empty(n: usize) -> AtomicMeasure {
        AtomicMeasure {
            n,
            points: Vec::new(),
            masses: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn points(&self) -> &[Vec<Complex64>] {
        &self.points
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[Complex64], f64)> {
        self.points.iter().map(|p| p.as_slice()).zip(self.masses.iter().copied())
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn scaled(&self, c: f64) -> AtomicMeasure {
        AtomicMeasure {
            n: self.n,
            points: self.points.clone(),
            masses: self.masses.iter().map(|m| m * c).collect(),
        }
    }

    /// Drops atoms with `|z| ≥ radius`; returns the kept measure and the dropped mass.
    pub fn truncated(&self, radius: f64) -> (AtomicMeasure, f64) {
        let mut kept = AtomicMeasure::empty(self.n);
        let mut dropped = 0.0;
        for (z, m) in self.atoms() {
            if ball::norm(z) < radius {
                kept.points.push(z.to_vec());
                kept.masses.push(m);
            } else {
                dropped += m;
            }
        }
        (kept, dropped)
    }

    /// Atoms with mass zero removed.
    pub fn without_null_atoms(&self) -> AtomicMeasure {
        let mut out = AtomicMeasure::empty(self.n);
        for (z, m) in self.atoms() {
            if m > 0.0 {
                out.points.push(z.to_vec());
                out.masses.push(m);
            }
        }
        out
    }

    pub fn map_points<F: Fn(&[Complex64]) -> Vec<Complex64>>(&self, f: F) -> Result<AtomicMeasure> {
        let atoms = self.atoms().map(|(z, m)| (f(z), m)).collect::<Vec<_>>();
        let n = atoms.first().map_or(self.n, |a| a.0.len());
        AtomicMeasure::new(n, atoms)
    }

    pub fn to_json(&self) -> String {
        let file = MeasureFile {
            atoms: self
                .atoms()
                .map(|(z, m)| AtomFile {
                    z: z.iter().flat_map(|c| [c.re, c.im]).collect(),
                    m,
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("measure serializes")
    }

    pub fn from_json(text: &str) -> Result<AtomicMeasure> {
        let file: MeasureFile =
            serde_json::from_str(text).map_err(|e| Error::Invalid(format!("measure file: {e}")))?;
        let Some(first) = file.atoms.first() else {
            return domain("measure file has no atoms; its dimension is unknown");
        };
        if first.z.is_empty() || first.z.len() % 2 != 0 {
            return domain("atom coordinates must be (re, im) pairs");
        }
        let n = first.z.len() / 2;
        let atoms = file
            .atoms
            .into_iter()
            .map(|a| {
                let z = a.z.chunks(2).map(|c| Complex64::new(c[0], c.get(1).copied().unwrap_or(f64::NAN))).collect();
                (z, a.m)
            })
            .collect();
        AtomicMeasure::new(n, atoms)
    }
}

/// Random atoms with shell index uniform in `1..=max_level`, Haar directions and masses in `(0, 1]`.
pub fn random_atomic_measure<R: Rng + ?Sized>(n: usize, count: usize, max_level: u32, rng: &mut R) -> AtomicMeasure {
    let atoms = (0..count)
        .map(|_| {
            let level = rng.random_range(1..=max_level.max(1));
            let (lo, hi) = (inner_radius(level), inner_radius(level + 1));
            let r = lo + (hi - lo) * rng.random::<f64>();
            let u = random_direction(n, rng);
            let m = 1.0 - rng.random::<f64>();
            (ball::scale(&u, Complex64::new(r, 0.0)), m)
        })
        .collect();
    AtomicMeasure::new(n, atoms).expect("random atoms lie in the ball")
}

pub fn random_direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Complex64> {
    loop {
        let v: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
            .collect();
        let r = ball::norm(&v);
        if r > 1e-12 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

/// `μ̂(α) = Σ` of the masses of atoms located in `K_α`.
pub fn discretize(mu: &AtomicMeasure, bt: &BergmanTree) -> Result<TreeMeasure> {
    if mu.dim() != bt.dim() && !mu.is_empty() {
        return domain(format!("measure in dimension {} on a tree of dimension {}", mu.dim(), bt.dim()));
    }
    let mut w = vec![0.0; bt.len()];
    let mut bad = Vec::new();
    for (i, (z, m)) in mu.atoms().enumerate() {
        match bt.locate(z) {
            Ok(a) => w[a] += m,
            Err(_) => bad.push(i),
        }
    }
    if !bad.is_empty() {
        return Err(Error::OutOfRange(format!("atoms outside the tree: {bad:?}")));
    }
    TreeMeasure::new(bt.tree(), w)
}

/// Discretization of a disk measure on a standard or fattened disk tree.
pub fn discretize_disk(mu: &AtomicMeasure, dt: &DiskTree) -> Result<TreeMeasure> {
    if mu.dim() != 1 && !mu.is_empty() {
        return domain("disk trees take measures in dimension 1");
    }
    let mut w = vec![0.0; dt.len()];
    for (z, m) in mu.atoms() {
        w[dt.locate(z[0])?] += m;
    }
    TreeMeasure::new(dt.tree(), w)
}

/// `∫ r (1 − r)^ρ dr` in the variable `s = 1 − r`, as an antiderivative in `s`.
fn power_antiderivative(rho: f64, s: f64) -> f64 {
    s.powf(rho + 1.0) / (rho + 1.0) - s.powf(rho + 2.0) / (rho + 2.0)
}

/// `∫_{a ≤ |z| < b} (1 − |z|)^ρ dA(z)`.
pub fn power_annulus_mass(rho: f64, a: f64, b: f64) -> Result<f64> {
    if !(rho > -1.0) {
        return domain(format!("(1 − |z|)^{rho} is not integrable"));
    }
    Ok(2.0 * PI * (power_antiderivative(rho, 1.0 - a) - power_antiderivative(rho, 1.0 - b)))
}

/// Mass of level `level` of a depth-`depth` disk tree; the last level carries the tail up to `|z| = 1`.
pub fn power_level_mass(rho: f64, level: u32, depth: u32) -> Result<f64> {
    let outer = if level >= depth { 1.0 } else { level_radius(level + 1) };
    power_annulus_mass(rho, level_radius(level), outer)
}

/// `(1 − |z|)^ρ dA` on a disk tree, each level's mass split equally among its kubes.
pub fn power_measure_disk(rho: f64, dt: &DiskTree) -> Result<TreeMeasure> {
    let mut w = vec![0.0; dt.len()];
    for level in 0..=dt.depth() {
        let nodes = dt.level_nodes(level);
        let each = power_level_mass(rho, level, dt.depth())? / nodes.len() as f64;
        for a in nodes {
            w[a] = each;
        }
    }
    TreeMeasure::new(dt.tree(), w)
}

/// A measure constant on the levels of a tree in which every level-`d` node has
/// `counts[j]/counts[d]` descendants at level `j`, stored per level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelMeasure {
    counts: Vec<f64>,
    mass: Vec<f64>,
    istar: Vec<f64>,
}

impl LevelMeasure {
    /// `mass[j]` is the mass of each level-`j` node.
    pub fn new(counts: Vec<f64>, mass: Vec<f64>) -> Result<LevelMeasure> {
        if counts.len() != mass.len() || counts.is_empty() {
            return Err(Error::Invalid("level counts and masses differ in length".into()));
        }
        let mut istar = vec![0.0; mass.len()];
        let mut acc = 0.0;
        for j in (0..mass.len()).rev() {
            acc += counts[j] * mass[j];
            istar[j] = acc / counts[j];
        }
        Ok(LevelMeasure { counts, mass, istar })
    }

    pub fn depth(&self) -> u32 {
        self.mass.len() as u32 - 1
    }

    pub fn istar(&self, level: u32) -> f64 {
        self.istar[level as usize]
    }

    pub fn mass(&self, level: u32) -> f64 {
        self.mass[level as usize]
    }

    /// First node id of a level in breadth-first numbering.
    fn first_node(&self, level: u32) -> NodeId {
        self.counts[..level as usize].iter().sum::<f64>() as NodeId
    }

    pub fn simple_condition(&self, sigma: f64) -> ConditionReport {
        let ratios = (0..=self.depth())
            .filter(|&d| self.istar(d) > 0.0)
            .map(|d| (self.first_node(d), (2.0 * sigma * d as f64).exp2() * self.istar(d)));
        ConditionReport::from_ratios("simple", ratios, false).with_param("sigma", sigma)
    }

    pub fn tree_condition(&self, sigma: f64) -> ConditionReport {
        let depth = self.depth() as usize;
        let mut tail = vec![0.0; depth + 2];
        for j in (0..=depth).rev() {
            tail[j] = tail[j + 1] + self.counts[j] * (2.0 * sigma * j as f64).exp2() * self.istar[j].powi(2);
        }
        let ratios = (0..=depth).filter(|&d| self.istar[d] > 0.0).map(|d| {
            let head = (2.0 * sigma * d as f64).exp2() * self.istar[d];
            let rest = tail[d + 1] / self.counts[d];
            (self.first_node(d as u32), head + rest / self.istar[d])
        });
        ConditionReport::from_ratios("tree", ratios, false).with_param("sigma", sigma)
    }
}

/// The power measure on the standard disk tree `𝒯`, kept per level so large depths stay cheap.
pub fn power_measure_levels(rho: f64, depth: u32) -> Result<LevelMeasure> {
    let counts: Vec<f64> = (0..=depth).map(|l| kubes_per_level(DiskKind::Standard, l) as f64).collect();
    let mass = (0..=depth)
        .map(|l| Ok(power_level_mass(rho, l, depth)? / counts[l as usize]))
        .collect::<Result<Vec<f64>>>()?;
    LevelMeasure::new(counts, mass)
}

/// Least-squares slope of `ys` against `xs`.
pub fn fitted_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Fitted exponent of `log₂ I*μ` on a disk tree over `levels`, averaging `log₂ I*` within each level.
pub fn disk_istar_exponent(dt: &DiskTree, mu: &TreeMeasure, levels: std::ops::RangeInclusive<u32>) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for l in levels {
        let nodes = dt.level_nodes(l);
        let k = nodes.len() as f64;
        let mean = nodes.map(|a| mu.istar(a).log2()).sum::<f64>() / k;
        xs.push(l as f64);
        ys.push(mean);
    }
    fitted_slope(&xs, &ys)
}

/// Self-similar measure on the complete `k`-ary tree: a child `i` receives the
/// fraction `weights[i]` of its parent's mass, and the leaves carry all of it.
pub fn cantor_measure(depth: u32, weights: &[f64]) -> Result<(Tree, TreeMeasure)> {
    if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return domain("branch weights must be finite and nonnegative");
    }
    let tree = Tree::complete(weights.len(), depth);
    let mut mass = vec![0.0; tree.len()];
    mass[tree.root()] = 1.0;
    for &a in tree.bfs() {
        for (i, &c) in tree.children(a).iter().enumerate() {
            mass[c] = mass[a] * weights[i];
        }
    }
    let w = (0..tree.len()).map(|a| if tree.is_leaf(a) { mass[a] } else { 0.0 }).collect();
    let mu = TreeMeasure::new(&tree, w)?;
    Ok((tree, mu))
}

/// The map `z ↦ (√c_m z^m)_{m ≤ N}` with `Σ c_m z^m = 1 − (1 − z)^{2σ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LipSigma {
    sigma: f64,
    coeffs: Vec<f64>,
}

impl LipSigma {
    pub fn new(sigma: f64, truncation: usize) -> Result<LipSigma> {
        if !(sigma > 0.0 && sigma < 0.5) {
            return domain(format!("sigma = {sigma} is outside (0, 1/2)"));
        }
        if truncation == 0 {
            return domain("truncation must be at least 1");
        }
        let mut coeffs = Vec::with_capacity(truncation);
        let mut c = 2.0 * sigma;
        coeffs.push(c);
        for m in 2..=truncation {
            let k = (m - 1) as f64;
            c *= (1.0 - 2.0 * sigma / k) * k / m as f64;
            coeffs.push(c);
        }
        Ok(LipSigma { sigma, coeffs })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `c_m` for `m = 1..=N`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn truncation(&self) -> usize {
        self.coeffs.len()
    }

    /// `Σ_{m>N} c_m = 1 − Σ_{m≤N} c_m`.
    pub fn tail(&self) -> f64 {
        (1.0 - self.coeffs.iter().rev().sum::<f64>()).max(0.0)
    }

    /// `Σ_{m>N} c_m r^{2m}` bounded by `r^{2(N+1)} · tail`.
    pub fn tail_at(&self, r: f64) -> f64 {
        r.powi(2 * (self.truncation() as i32 + 1)) * self.tail()
    }

    pub fn apply(&self, z: Complex64) -> Vec<Complex64> {
        let mut zm = Complex64::new(1.0, 0.0);
        self.coeffs
            .iter()
            .map(|c| {
                zm *= z;
                zm * c.sqrt()
            })
            .collect()
    }

    /// `|1 − (1 − z)^{2σ} − Σ_{m≤N} c_m z^m|`.
    pub fn identity_residual(&self, z: Complex64) -> f64 {
        let exact = 1.0 - (1.0 - z).powf(2.0 * self.sigma);
        let mut zm = Complex64::new(1.0, 0.0);
        let mut s = Complex64::new(0.0, 0.0);
        for c in &self.coeffs {
            zm *= z;
            s += zm * *c;
        }
        (exact - s).norm()
    }

    /// `⟨f(y), f(x)⟩ = 1 − (1 − y x̄)^{2σ}` for the untruncated map.
    pub fn inner_exact(&self, y: Complex64, x: Complex64) -> Complex64 {
        1.0 - (1.0 - y * x.conj()).powf(2.0 * self.sigma)
    }

    /// `|f(1) − f(r)| / (1 − r)^σ = √(2 − (1 + r)^{2σ})` for the untruncated map.
    pub fn boundary_ratio(&self, r: f64) -> f64 {
        (2.0 - (1.0 + r).powf(2.0 * self.sigma)).sqrt()
    }

    /// The same ratio from the truncated series.
    pub fn boundary_ratio_truncated(&self, r: f64) -> f64 {
        let mut rm = 1.0;
        let d2: f64 = self
            .coeffs
            .iter()
            .map(|c| {
                rm *= r;
                c * (1.0 - rm).powi(2)
            })
            .sum();
        (d2 + self.tail()).sqrt() / (1.0 - r).powf(self.sigma)
    }
}

/// One sample of the parameter domain's interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteriorSample {
    pub f: Vec<Complex64>,
    /// Area (or arc-length) element of the sample.
    pub weight: f64,
}

/// One boundary sample with the derivative applied to the unit normal and tangent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySample {
    pub f: Vec<Complex64>,
    pub df_normal: Vec<Complex64>,
    pub df_tangent: Vec<Complex64>,
}

/// Sampled embedding `f: Ω → 𝔹ₙ` of a curve or surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub n: usize,
    pub interior: Vec<InteriorSample>,
    pub boundary: Vec<BoundarySample>,
}

/// Tolerance for `|f| = 1` on boundary samples.
pub const BOUNDARY_TOL: f64 = 1e-6;

impl CurveSpec {
    pub fn new(n: usize, interior: Vec<InteriorSample>, boundary: Vec<BoundarySample>) -> Result<CurveSpec> {
        for (i, s) in interior.iter().enumerate() {
            if s.f.len() != n || !(ball::norm(&s.f) < 1.0) || !(s.weight >= 0.0) {
                return domain(format!("interior sample {i} is invalid"));
            }
        }
        for (i, s) in boundary.iter().enumerate() {
            if s.f.len() != n || s.df_normal.len() != n || s.df_tangent.len() != n {
                return domain(format!("boundary sample {i} has the wrong dimension"));
            }
            if (ball::norm(&s.f) - 1.0).abs() > BOUNDARY_TOL {
                return domain(format!("boundary sample {i} is off the sphere"));
            }
        }
        Ok(CurveSpec { n, interior, boundary })
    }

    /// Samples a map of the unit disk given with its partial derivatives `∂_x f`, `∂_y f`.
    ///
    /// Interior radii are equally spaced in `t = −log₂(1 − r)` up to `t_max`, so
    /// every Whitney level gets `radial / t_max` rings of samples.
    pub fn from_disk_map<F, D>(n: usize, f: F, df: D, radial: usize, angular: usize, t_max: f64) -> Result<CurveSpec>
    where
        F: Fn(Complex64) -> Vec<Complex64>,
        D: Fn(Complex64) -> (Vec<Complex64>, Vec<Complex64>),
    {
        let dt = t_max / radial as f64;
        let dtheta = 2.0 * PI / angular as f64;
        let mut interior = Vec::with_capacity(radial * angular);
        for i in 0..radial {
            let t = (i as f64 + 0.5) * dt;
            let s = (-t).exp2();
            let r = 1.0 - s;
            let dr = std::f64::consts::LN_2 * s * dt;
            // Offset alternate rings by half a step so rays do not line up.
            let shift = if i % 2 == 0 { 0.0 } else { 0.5 };
            for j in 0..angular {
                let x = Complex64::from_polar(r, (j as f64 + shift) * dtheta);
                interior.push(InteriorSample {
                    f: f(x),
                    weight: r * dr * dtheta,
                });
            }
        }
        let boundary = (0..angular)
            .map(|j| {
                let th = j as f64 * dtheta;
                let x = Complex64::from_polar(1.0, th);
                let (dx, dy) = df(x);
                let (c, s) = (th.cos(), th.sin());
                BoundarySample {
                    f: f(x),
                    df_normal: dx.iter().zip(&dy).map(|(a, b)| a * c + b * s).collect(),
                    df_tangent: dx.iter().zip(&dy).map(|(a, b)| -a * s + b * c).collect(),
                }
            })
            .collect();
        CurveSpec::new(n, interior, boundary)
    }
}

/// Atoms `(f(x), w(x)·(1 − |f(x)|)^s)`; boundary samples with vanishing derivatives are listed as warnings.
pub fn curve_measure(spec: &CurveSpec, s: f64) -> Result<(AtomicMeasure, Vec<String>)> {
    let atoms = spec
        .interior
        .iter()
        .map(|p| (p.f.clone(), p.weight * (1.0 - ball::norm(&p.f)).powf(s)))
        .collect();
    let warnings = spec
        .boundary
        .iter()
        .enumerate()
        .filter(|(_, b)| ball::norm(&b.df_normal) < BOUNDARY_TOL || ball::norm(&b.df_tangent) < BOUNDARY_TOL)
        .map(|(i, _)| format!("degenerate derivative at boundary sample {i}"))
        .collect();
    Ok((AtomicMeasure::new(spec.n, atoms)?, warnings))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transversality {
    ComplexTangential,
    TransverseToComplexTangential,
    Mixed,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransversalityReport {
    pub class: Transversality,
    /// `min |Re⟨f′𝐧, f⟩|`.
    pub min_normal: f64,
    /// `min |Im⟨f′𝐓, f⟩|`.
    pub min_tangent: f64,
    /// `max |Im⟨f′𝐓, f⟩|`.
    pub max_tangent: f64,
}

pub const TRANSVERSALITY_TOL: f64 = 1e-6;

/// Classifies how the surface meets the sphere from `Re⟨f′𝐧, f⟩` and `Im⟨f′𝐓, f⟩`.
pub fn transversality_classify(spec: &CurveSpec) -> Result<TransversalityReport> {
    if spec.boundary.is_empty() {
        return Err(Error::Invalid("no boundary samples".into()));
    }
    let normal: Vec<f64> = spec.boundary.iter().map(|b| ball::inner(&b.df_normal, &b.f).re).collect();
    let tangent: Vec<f64> = spec.boundary.iter().map(|b| ball::inner(&b.df_tangent, &b.f).im).collect();
    let tol = TRANSVERSALITY_TOL;
    let min_abs = |v: &[f64]| v.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let definite = |v: &[f64]| v.iter().all(|&x| x > tol) || v.iter().all(|&x| x < -tol);
    let class = if !definite(&normal) {
        Transversality::Degenerate
    } else if tangent.iter().all(|x| x.abs() <= tol) {
        Transversality::ComplexTangential
    } else if definite(&tangent) {
        Transversality::TransverseToComplexTangential
    } else {
        Transversality::Mixed
    };
    Ok(TransversalityReport {
        class,
        min_normal: min_abs(&normal),
        min_tangent: min_abs(&tangent),
        max_tangent: max_abs(&tangent),
    })
}

/// A measure on a Bergman tree giving all kubes of a ring the same mass; `ring_mass(level, ring)` is the ring's total.
pub fn invariant_measure<F: Fn(u32, u32) -> f64>(bt: &BergmanTree, ring_mass: F) -> Result<TreeMeasure> {
    let rings = bt.rings();
    let mut size = vec![0usize; rings.tree.len()];
    for a in 0..bt.len() {
        size[bt.ring_of(a)] += 1;
    }
    let w = (0..bt.len())
        .map(|a| {
            let r = bt.ring_of(a);
            let (level, ring) = rings.keys[r];
            ring_mass(level, ring) / size[r] as f64
        })
        .collect();
    TreeMeasure::new(bt.tree(), w)
}

/// Every ring of level `N` gets mass `profile[N]`.
pub fn invariant_measure_radial(bt: &BergmanTree, profile: &[f64]) -> Result<TreeMeasure> {
    invariant_measure(bt, |level, _| profile.get(level as usize).copied().unwrap_or(0.0))
}

/// A polynomial on `ℂⁿ` as a list of monomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub n: usize,
    pub terms: Vec<(Vec<u32>, Complex64)>,
}

/// Largest total degree accepted by [`multiplier_measure`].
pub const POLY_DEGREE_CAP: u32 = 32;

impl Polynomial {
    pub fn new(n: usize, terms: Vec<(Vec<u32>, Complex64)>) -> Result<Polynomial> {
        if terms.iter().any(|(e, _)| e.len() != n) {
            return domain("monomial exponent of the wrong length");
        }
        Ok(Polynomial { n, terms })
    }

    /// The coordinate function `z_i`.
    pub fn coordinate(n: usize, i: usize) -> Polynomial {
        let mut e = vec![0; n];
        e[i] = 1;
        Polynomial {
            n,
            terms: vec![(e, Complex64::new(1.0, 0.0))],
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(e, _)| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        self.terms
            .iter()
            .map(|(e, c)| e.iter().zip(z).fold(*c, |acc, (&k, x)| acc * x.powu(k)))
            .sum()
    }

    /// `∂^β f`.
    pub fn derivative(&self, beta: &[u32]) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .filter(|(e, _)| e.iter().zip(beta).all(|(a, b)| a >= b))
            .map(|(e, c)| {
                let mut coeff = *c;
                let mut out = e.clone();
                for (k, (&a, &b)) in e.iter().zip(beta).enumerate() {
                    for j in 0..b {
                        coeff *= (a - j) as f64;
                    }
                    out[k] = a - b;
                }
                (out, coeff)
            })
            .collect();
        Polynomial { n: self.n, terms }
    }

    /// `|f^{(m)}(z)|²`: squared Frobenius norm of the `m`-th derivative tensor,
    /// `Σ_{|β|=m} (m!/β!) |∂^β f(z)|²`.
    pub fn derivative_norm_sqr(&self, m: u32, z: &[Complex64]) -> f64 {
        multi_indices(self.n, m)
            .iter()
            .map(|beta| multinomial(m, beta) * self.derivative(beta).eval(z).norm_sqr())
            .sum()
    }
}

fn multi_indices(n: usize, m: u32) -> Vec<Vec<u32>> {
    if n == 1 {
        return vec![vec![m]];
    }
    let mut out = Vec::new();
    for k in 0..=m {
        for mut rest in multi_indices(n - 1, m - k) {
            rest.insert(0, k);
            out.push(rest);
        }
    }
    out
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(|j| j as f64).product()
}

fn multinomial(m: u32, beta: &[u32]) -> f64 {
    factorial(m) / beta.iter().map(|&b| factorial(b)).product::<f64>()
}

/// Lebesgue volume of the unit ball of `ℂⁿ`, `πⁿ/n!`.
pub fn ball_volume(n: usize) -> f64 {
    PI.powi(n as i32) / factorial(n as u32)
}

/// Quasi-Monte-Carlo atoms for `|f^{(m)}|² (1 − |z|²)^{2m−n} dV`.
pub fn multiplier_measure(f: &Polynomial, m: u32, samples: usize, seed: u64) -> Result<AtomicMeasure> {
    let n = f.n;
    if 2 * m as usize <= n.saturating_sub(1) {
        return domain(format!("m = {m} must exceed (n − 1)/2"));
    }
    if f.degree() > POLY_DEGREE_CAP {
        return domain(format!("degree {} is above the cap {POLY_DEGREE_CAP}", f.degree()));
    }
    let mut pts = BallPoints::new(n, seed);
    let cell = ball_volume(n) / samples as f64;
    let exponent = 2.0 * m as f64 - n as f64;
    let atoms = (0..samples)
        .map(|_| {
            let z = pts.next_point();
            let density = f.derivative_norm_sqr(m, &z) * (1.0 - ball::norm_sqr(&z)).powf(exponent);
            (z, cell * density)
        })
        .collect();
    Ok(AtomicMeasure::new(n, atoms)?.without_null_atoms())
}

/// `f_*(|δ|² μ)`: atom `(x, m)` goes to `(f(x), |δ(x)|² m)`.
pub fn pushforward<F, D>(mu: &AtomicMeasure, f: F, delta: D) -> Result<AtomicMeasure>
where
    F: Fn(&[Complex64]) -> Vec<Complex64>,
    D: Fn(&[Complex64]) -> Complex64,
{
    let atoms: Vec<_> = mu.atoms().map(|(x, m)| (f(x), delta(x).norm_sqr() * m)).collect();
    let n = atoms.first().map_or(mu.dim(), |a| a.0.len());
    AtomicMeasure::new(n, atoms)
}

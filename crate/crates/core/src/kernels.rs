//! Reproducing kernels and exact oracles for atomic measures.
//!
//! For an atomic measure `Σ m_i δ_{z_i}` the best constant in the bilinear
//! Carleson inequality is the top eigenvalue of `[k(z_i, z_j) √(m_i m_j)]`.

use std::f64::consts::PI;
use std::sync::Arc;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::ball;
use crate::bergman::{shell_index, BergmanGeometry, BergmanTree, NetOptions};
use crate::conditions::tree_condition;
use crate::error::{domain, Error, Result};
use crate::linalg::{self, DENSE_CAP};
use crate::measures::{discretize, AtomicMeasure, LipSigma};
use crate::qmc::SpherePoints;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelFamily {
    /// `(1 − ⟨z, w⟩)^{−2σ}`.
    BesovSobolev { sigma: f64 },
    /// `σ = ½`.
    DruryArveson,
    /// `1/(1 − c z̄w − c/(z̄w))`, `c = L²/(1 + L⁴)`, on `1/L < |z| < L`.
    RingDomain { l: f64 },
    /// `1/(1 − ⟨f(z), f(w)⟩)` for the truncated Lip-σ map `f`.
    NpPullback { sigma: f64, truncation: usize },
    /// Gram kernel of the weighted potential operator, see [`potential_gram`].
    Potential { sigma: f64, alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelVariant {
    Re,
    Modulus,
    FullComplex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub variant: KernelVariant,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, variant: KernelVariant) -> KernelSpec {
        KernelSpec { family, variant }
    }

    pub fn besov_sobolev(sigma: f64) -> KernelSpec {
        KernelSpec::new(KernelFamily::BesovSobolev { sigma }, KernelVariant::Re)
    }
}

/// `(1 − ⟨z, w⟩)^{−2σ}`, principal branch; Hermitian in `(z, w)`.
pub fn bs_kernel(z: &[Complex64], w: &[Complex64], sigma: f64) -> Complex64 {
    (Complex64::new(1.0, 0.0) - ball::inner(z, w)).powf(-2.0 * sigma)
}

pub fn ring_kernel(l: f64, z: Complex64, w: Complex64) -> Complex64 {
    let c = l * l / (1.0 + l.powi(4));
    let x = z.conj() * w;
    1.0 / (1.0 - c * x - c / x)
}

fn complex_matrix(mu: &AtomicMeasure, family: KernelFamily) -> Result<DMatrix<Complex64>> {
    let pts = mu.points();
    let s = pts.len();
    let entry: Box<dyn Fn(usize, usize) -> Complex64> = match family {
        KernelFamily::BesovSobolev { sigma } => {
            if !(sigma > 0.0 && sigma <= mu.dim() as f64 / 2.0) {
                return domain(format!("sigma = {sigma} is outside (0, n/2]"));
            }
            Box::new(move |i, j| bs_kernel(&pts[i], &pts[j], sigma))
        }
        KernelFamily::DruryArveson => Box::new(move |i, j| bs_kernel(&pts[i], &pts[j], 0.5)),
        KernelFamily::RingDomain { l } => {
            if !(l > 1.0) {
                return domain(format!("L = {l} must exceed 1"));
            }
            if mu.dim() != 1 || pts.iter().any(|z| z[0].norm() <= 1.0 / l) {
                return domain("ring-domain atoms must be points of 1/L < |z| < 1");
            }
            Box::new(move |i, j| ring_kernel(l, pts[i][0], pts[j][0]))
        }
        KernelFamily::NpPullback { sigma, truncation } => {
            if mu.dim() != 1 {
                return domain("the Lip-σ map is defined on the disk");
            }
            let f = LipSigma::new(sigma, truncation)?;
            let images: Vec<Vec<Complex64>> = pts.iter().map(|z| f.apply(z[0])).collect();
            Box::new(move |i, j| 1.0 / (1.0 - ball::inner(&images[i], &images[j])))
        }
        KernelFamily::Potential { sigma, alpha } => {
            let g = potential_gram(mu.points(), mu.dim(), sigma, alpha, PotentialQuadrature::default())?;
            Box::new(move |i, j| Complex64::new(g[(i, j)], 0.0))
        }
    };
    Ok(DMatrix::from_fn(s, s, |i, j| entry(i, j)))
}

/// `[v(k(z_i, z_j))]` with `v` the variant (real part or modulus).
pub fn kernel_matrix(mu: &AtomicMeasure, spec: KernelSpec) -> Result<DMatrix<f64>> {
    let k = complex_matrix(mu, spec.family)?;
    Ok(match spec.variant {
        KernelVariant::Re | KernelVariant::FullComplex => k.map(|z| z.re),
        KernelVariant::Modulus => k.map(|z| z.norm()),
    })
}

/// Best constant in the bilinear inequality for an atomic measure.
pub fn kernel_carleson_oracle(mu: &AtomicMeasure, spec: KernelSpec) -> Result<f64> {
    if mu.is_empty() {
        return Ok(0.0);
    }
    if mu.len() > DENSE_CAP {
        return Err(Error::Resource {
            what: "kernel oracle".into(),
            estimate: mu.len() as u64,
            cap: DENSE_CAP as u64,
        });
    }
    let sq: Vec<f64> = mu.masses().iter().map(|m| m.sqrt()).collect();
    match spec.variant {
        KernelVariant::FullComplex => {
            let k = complex_matrix(mu, spec.family)?;
            let a = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| k[(i, j)] * (sq[i] * sq[j]));
            Ok(linalg::hermitian_eigenvalues(&a)?.last().copied().unwrap_or(0.0))
        }
        _ => {
            let k = kernel_matrix(mu, spec)?;
            let a = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| k[(i, j)] * sq[i] * sq[j]);
            linalg::sym_top_eigenvalue(&linalg::symmetrized(&a)?)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub value: f64,
    pub method: String,
    /// `‖Av − λv‖` for the returned top eigenpair of the weighted kernel matrix.
    pub residual: f64,
    pub seed: u64,
}

/// [`kernel_carleson_oracle`] with an a-posteriori eigenpair residual.
pub fn kernel_oracle_report(mu: &AtomicMeasure, spec: KernelSpec, seed: u64) -> Result<OracleReport> {
    let value = kernel_carleson_oracle(mu, spec)?;
    if mu.is_empty() {
        return Ok(OracleReport { value, method: "empty".into(), residual: 0.0, seed });
    }
    let sq: Vec<f64> = mu.masses().iter().map(|m| m.sqrt()).collect();
    let a: DMatrix<Complex64> = match spec.variant {
        KernelVariant::FullComplex => {
            let k = complex_matrix(mu, spec.family)?;
            let h = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| k[(i, j)] * (sq[i] * sq[j]));
            (&h + h.adjoint()).map(|z| z * 0.5)
        }
        _ => {
            let k = kernel_matrix(mu, spec)?;
            let w = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| k[(i, j)] * sq[i] * sq[j]);
            linalg::symmetrized(&w)?.map(|x| Complex64::new(x, 0.0))
        }
    };
    let eig = a.clone().symmetric_eigen();
    let top = (0..eig.eigenvalues.len())
        .max_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]))
        .expect("nonempty spectrum");
    let v = eig.eigenvectors.column(top);
    let residual = (&a * v - v * Complex64::new(eig.eigenvalues[top], 0.0)).norm();
    let method = match spec.variant {
        KernelVariant::FullComplex => "dense-hermitian",
        _ => "dense-symmetric",
    };
    Ok(OracleReport { value, method: method.into(), residual, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    /// `max Re k / Re k′` over the atom grid.
    pub c: f64,
    pub oracle: f64,
    pub oracle_other: f64,
    /// `oracle ≤ c · oracle_other`.
    pub holds: bool,
}

/// If `k ≤ c k′` entrywise on the atoms then the oracles obey the same bound.
pub fn kernel_comparison_transfer(mu: &AtomicMeasure, spec: KernelSpec, other: KernelSpec) -> Result<TransferReport> {
    let a = kernel_matrix(mu, spec)?;
    let b = kernel_matrix(mu, other)?;
    let mut c = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        if *y <= 0.0 {
            return Err(Error::Numerical("comparison kernel is not positive on the atoms".into()));
        }
        c = c.max(x / y);
    }
    let oracle = kernel_carleson_oracle(mu, spec)?;
    let oracle_other = kernel_carleson_oracle(mu, other)?;
    Ok(TransferReport {
        c,
        oracle,
        oracle_other,
        holds: oracle <= c * oracle_other * (1.0 + 1e-10),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramReport {
    /// `min_{i≠j} β(z_i, z_j)`; `+∞` for a single point.
    pub separation: f64,
    /// Norm of the normalized-kernel Gram matrix.
    pub gram_norm: f64,
    /// Norm of its entrywise modulus.
    pub abs_gram_norm: f64,
    pub max_offdiagonal: f64,
    /// Tree-condition constant of `μ_Z = Σ (1 − |z_j|²)^{2σ} δ_{z_j}`.
    pub tree_constant: f64,
    /// Oracle constant of `μ_Z`.
    pub oracle: f64,
}

pub fn gram_interpolation_test(points: &[Vec<Complex64>], sigma: f64) -> Result<GramReport> {
    let Some(first) = points.first() else {
        return domain("no points");
    };
    let n = first.len();
    let s = points.len();
    let mut separation = f64::INFINITY;
    for i in 0..s {
        for j in i + 1..s {
            let d = ball::bergman_metric(&points[i], &points[j])?;
            if d == 0.0 {
                return domain(format!("points {i} and {j} coincide"));
            }
            separation = separation.min(d);
        }
    }
    let diag: Vec<f64> = points.iter().map(|z| bs_kernel(z, z, sigma).re).collect();
    let g = DMatrix::from_fn(s, s, |i, j| bs_kernel(&points[i], &points[j], sigma) / (diag[i] * diag[j]).sqrt());
    let gram_norm = linalg::hermitian_eigenvalues(&g)?.last().copied().unwrap_or(0.0);
    let abs = g.map(|z| z.norm());
    let abs_gram_norm = linalg::sym_top_eigenvalue(&linalg::symmetrized(&abs)?)?;
    let mut max_offdiagonal = 0.0f64;
    for i in 0..s {
        for j in 0..s {
            if i != j {
                max_offdiagonal = max_offdiagonal.max(abs[(i, j)]);
            }
        }
    }
    let atoms: Vec<_> = points
        .iter()
        .map(|z| (z.clone(), (1.0 - ball::norm_sqr(z)).powf(2.0 * sigma)))
        .collect();
    let mu = AtomicMeasure::new(n, atoms)?;
    let depth = points.iter().map(|z| shell_index(ball::norm(z))).max().unwrap_or(0).max(1);
    let geom = Arc::new(BergmanGeometry::build(n, depth, NetOptions::default())?);
    let bt = BergmanTree::closure_of_points(geom, points)?;
    let tree_constant = tree_condition(bt.tree(), &discretize(&mu, &bt)?, sigma).constant;
    let oracle = kernel_carleson_oracle(&mu, KernelSpec::besov_sobolev(sigma))?;
    Ok(GramReport {
        separation,
        gram_norm,
        abs_gram_norm,
        max_offdiagonal,
        tree_constant,
        oracle,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpReport {
    pub positive: usize,
    pub spectrum: Vec<f64>,
    pub one_positive: bool,
}

/// Eigenvalues above this count as positive.
pub const NP_EIGEN_TOL: f64 = 1e-8;

/// Spectrum of `H[i,j] = (1 − ⟨z_i, z_j⟩)^{2σ}`.
pub fn np_one_positive_eigenvalue(points: &[Vec<Complex64>], sigma: f64) -> Result<NpReport> {
    let s = points.len();
    let h = DMatrix::from_fn(s, s, |i, j| bs_kernel(&points[i], &points[j], -sigma));
    let spectrum = linalg::hermitian_eigenvalues(&h)?;
    let positive = spectrum.iter().filter(|&&x| x > NP_EIGEN_TOL).count();
    Ok(NpReport {
        positive,
        spectrum,
        one_positive: positive == 1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingDomainRow {
    pub n: i32,
    pub h2_formula: f64,
    pub h2_quadrature: f64,
    pub hk_formula: f64,
    /// `1/a_n` with `a_n` the FFT coefficient of `k` on `|z̄w| = 1`.
    pub hk_fft: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingDomainTable {
    pub l: f64,
    pub rows: Vec<RingDomainRow>,
    pub max_h2_error: f64,
    pub max_hk_error: f64,
    /// `max_n ‖zⁿ‖²_{H²} / ‖zⁿ‖²_{𝓗k}`.
    pub max_norm_ratio: f64,
}

/// Prefactor in `k = P · Σ (z̄w)ⁿ / L^{2|n|}`, `P = (L⁴ + 1)/(L⁴ − 1)`.
pub fn ring_prefactor(l: f64) -> f64 {
    (l.powi(4) + 1.0) / (l.powi(4) - 1.0)
}

/// Monomial norms in `H²(R_L)` and in the kernel space `𝓗k`.
pub fn ring_domain_norms(l: f64, nmax: i32) -> Result<RingDomainTable> {
    if !(l > 1.0) {
        return domain(format!("L = {l} must exceed 1"));
    }
    let m = 1024usize;
    let theta = |j: usize| 2.0 * PI * j as f64 / m as f64;
    // Laurent coefficients of x ↦ k by FFT on |x| = L (n ≥ 0) and |x| = 1/L (n < 0),
    // inside the annulus of analyticity L^{−2} < |x| < L².
    let c = l * l / (1.0 + l.powi(4));
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    let sampled = |r: f64| {
        let mut buf: Vec<Complex64> = (0..m)
            .map(|j| {
                let x = Complex64::from_polar(r, theta(j));
                1.0 / (1.0 - c * x - c / x)
            })
            .collect();
        fft.process(&mut buf);
        buf
    };
    let (outer, inner) = (sampled(l), sampled(1.0 / l));
    let coeff = |n: i32| {
        let (buf, r) = if n >= 0 { (&outer, l) } else { (&inner, 1.0 / l) };
        buf[n.rem_euclid(m as i32) as usize].re / m as f64 / r.powi(n)
    };
    let mut rows = Vec::new();
    let (mut e2, mut ek, mut ratio) = (0.0f64, 0.0f64, 0.0f64);
    for n in -nmax..=nmax {
        let a = n.unsigned_abs() as i32;
        let h2_formula = l.powi(2 * a) + l.powi(-2 * a);
        // Trapezoid rule for ∫|zⁿ|² dθ/2π on |z| = L and |z| = 1/L.
        let circle = |r: f64| (0..m).map(|j| Complex64::from_polar(r, theta(j)).powi(n).norm_sqr()).sum::<f64>() / m as f64;
        let h2_quadrature = circle(l) + circle(1.0 / l);
        let hk_formula = l.powi(2 * a) / ring_prefactor(l);
        let hk_fft = 1.0 / coeff(n);
        e2 = e2.max((h2_quadrature - h2_formula).abs() / h2_formula);
        ek = ek.max((hk_fft - hk_formula).abs() / hk_formula);
        ratio = ratio.max(h2_formula / hk_formula);
        rows.push(RingDomainRow {
            n,
            h2_formula,
            h2_quadrature,
            hk_formula,
            hk_fft,
        });
    }
    Ok(RingDomainTable {
        l,
        rows,
        max_h2_error: e2,
        max_hk_error: ek,
        max_norm_ratio: ratio,
    })
}

/// Largest `|k − P Σ_{|n| ≤ N} (z̄w)ⁿ/L^{2|n|}|` over random pairs with `|z|, |w| ∈ [L^{−1/2}, L^{1/2}]`.
pub fn ring_identity_residual(l: f64, pairs: usize, seed: u64) -> Result<f64> {
    if !(l > 1.0) {
        return domain(format!("L = {l} must exceed 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms = (40.0 / l.ln()).ceil() as i32;
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let mut point = || {
            let r = l.powf(rng.random_range(-0.5..=0.5));
            Complex64::from_polar(r, rng.random_range(0.0..2.0 * PI))
        };
        let (z, w) = (point(), point());
        let x = z.conj() * w;
        let mut series = Complex64::new(1.0, 0.0);
        for n in 1..=terms {
            let q = l.powi(-2 * n);
            series += (x.powi(n) + x.powi(-n)) * q;
        }
        worst = worst.max((ring_kernel(l, z, w) - series * ring_prefactor(l)).norm());
    }
    Ok(worst)
}

/// `δ_σ(x, y) = √(1 − |k(x,y)|²/(k(x,x) k(y,y)))` for the kernel `(1 − ⟨x,y⟩)^{−2σ}`.
pub fn delta_sigma_metric(x: &[Complex64], y: &[Complex64], sigma: f64) -> f64 {
    let rho2 = ball::mobius_sqr(x, y).clamp(0.0, 1.0);
    (-(2.0 * sigma * (-rho2).ln_1p()).exp_m1()).max(0.0).sqrt()
}

/// Largest `|δ_σ(x, y) − δ_{1/2}(f(x), f(y))|` over the pairs.
pub fn lip_isometry_check(f: &LipSigma, pairs: &[(Complex64, Complex64)]) -> f64 {
    pairs
        .iter()
        .map(|&(x, y)| {
            let a = delta_sigma_metric(&[x], &[y], f.sigma());
            let b = delta_sigma_metric(&f.apply(x), &f.apply(y), 0.5);
            (a - b).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushforwardCheck {
    /// Largest relative gap between the kernel-tested simple conditions of `μ` and `f_*μ`.
    pub kernel_defect: f64,
    /// `max_x μ(T(x)) / (1 − |x|²)^{2σ}`.
    pub disk_simple: f64,
    /// `max_x f_*μ(T(f(x))) / (1 − ‖f(x)‖²)`.
    pub pushed_simple: f64,
    pub ratio: f64,
}

/// Compares SC(σ) for a disk measure with SC(½) for its image under the Lip-σ map, at the test points.
pub fn lip_pushforward_check(f: &LipSigma, mu: &AtomicMeasure, tests: &[Complex64]) -> Result<PushforwardCheck> {
    if mu.dim() != 1 {
        return domain("the Lip-σ map is defined on the disk");
    }
    let sigma = f.sigma();
    let images: Vec<Vec<Complex64>> = mu.points().iter().map(|y| f.apply(y[0])).collect();
    let mut kernel_defect = 0.0f64;
    let (mut disk, mut pushed) = (0.0f64, 0.0f64);
    for &x in tests {
        let fx = f.apply(x);
        let kxx = (1.0 - x.norm_sqr()).powf(-2.0 * sigma);
        let fnorm2 = 1.0 - (1.0 - x.norm_sqr()).powf(2.0 * sigma);
        let (mut s_disk, mut s_pushed) = (0.0, 0.0);
        let (mut t_disk, mut t_pushed) = (0.0, 0.0);
        let px = x / x.norm();
        let h_disk = 1.0 - x.norm();
        let h_pushed = 1.0 - fnorm2.sqrt();
        for (i, (y, m)) in mu.atoms().enumerate() {
            let y = y[0];
            s_disk += m * bs_kernel(&[y], &[x], sigma).norm_sqr() / kxx;
            s_pushed += m * (1.0 / (1.0 - ball::inner(&images[i], &fx))).norm_sqr() * (1.0 - ball::norm_sqr(&fx));
            if (1.0 - y * px.conj()).norm() <= h_disk {
                t_disk += m;
            }
            if (1.0 - f.inner_exact(y, x) / fnorm2.sqrt()).norm() <= h_pushed {
                t_pushed += m;
            }
        }
        if s_disk > 0.0 {
            kernel_defect = kernel_defect.max((s_disk - s_pushed).abs() / s_disk);
        }
        disk = disk.max(t_disk / (1.0 - x.norm_sqr()).powf(2.0 * sigma));
        pushed = pushed.max(t_pushed / (1.0 - fnorm2));
    }
    Ok(PushforwardCheck {
        kernel_defect,
        disk_simple: disk,
        pushed_simple: pushed,
        ratio: if disk > 0.0 { pushed / disk } else { 0.0 },
    })
}

/// Quadrature for `∫ (1+α)(1 − |w|²)^α F(w) dV(w)` over the ball, `dV` normalized.
///
/// With `t = |w|²` and `v = (1 − t)^{1+α}` the weight becomes `n t^{n−1} dv`;
/// `v` is integrated by Gauss–Legendre on dyadic panels, the sphere by an
/// equispaced circle (`n = 1`) or quasi-random points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialQuadrature {
    pub panels: u32,
    pub order: usize,
    pub sphere: usize,
    pub seed: u64,
}

impl Default for PotentialQuadrature {
    fn default() -> Self {
        PotentialQuadrature {
            panels: 40,
            order: 12,
            sphere: 1024,
            seed: 7,
        }
    }
}

impl PotentialQuadrature {
    /// Nodes `w` and weights of the rule.
    pub fn nodes(&self, n: usize, alpha: f64) -> Result<Vec<(Vec<Complex64>, f64)>> {
        if !(alpha > -1.0) {
            return domain(format!("alpha = {alpha} must exceed −1"));
        }
        let gl = GaussLegendre::new(self.order.max(2)).map_err(|e| Error::Numerical(e.to_string()))?;
        let mut radial = Vec::new();
        for p in 0..self.panels {
            let (a, b) = ((-(p as f64) - 1.0).exp2(), (-(p as f64)).exp2());
            for (x, w) in gl.nodes().zip(gl.weights()) {
                let v = a + (b - a) * (x + 1.0) / 2.0;
                let t = 1.0 - v.powf(1.0 / (1.0 + alpha));
                radial.push((t.sqrt(), n as f64 * t.powi(n as i32 - 1) * w * (b - a) / 2.0));
            }
        }
        let dirs: Vec<Vec<Complex64>> = if n == 1 {
            (0..self.sphere)
                .map(|j| vec![Complex64::from_polar(1.0, 2.0 * PI * j as f64 / self.sphere as f64)])
                .collect()
        } else {
            let mut sp = SpherePoints::new(n, self.seed);
            (0..self.sphere).map(|_| sp.next_point()).collect()
        };
        let ws = 1.0 / dirs.len() as f64;
        let mut out = Vec::with_capacity(radial.len() * dirs.len());
        for &(r, wr) in &radial {
            for u in &dirs {
                out.push((ball::scale(u, Complex64::new(r, 0.0)), wr * ws));
            }
        }
        Ok(out)
    }
}

/// `G_ij = (1+α) ∫ (1 − |w|²)^α |1 − ⟨w, z_i⟩|^{−p} |1 − ⟨w, z_j⟩|^{−p} dV(w)`, `p = (n+1+α)/2 + σ`.
pub fn potential_gram(
    points: &[Vec<Complex64>],
    n: usize,
    sigma: f64,
    alpha: f64,
    quad: PotentialQuadrature,
) -> Result<DMatrix<f64>> {
    let p = (n as f64 + 1.0 + alpha) / 2.0 + sigma;
    let nodes = quad.nodes(n, alpha)?;
    let s = points.len();
    let b = DMatrix::from_fn(nodes.len(), s, |q, i| {
        let (w, wt) = &nodes[q];
        wt.sqrt() * (Complex64::new(1.0, 0.0) - ball::inner(w, &points[i])).norm().powf(-p)
    });
    Ok(b.transpose() * b)
}

/// `Σ_k ((p)_k/k!)² |z|^{2k} Γ(k+1)Γ(α+2)/Γ(k+α+2)` for one point of the disk.
pub fn potential_single_atom_disk(z: f64, sigma: f64, alpha: f64) -> f64 {
    let p = (2.0 + alpha) / 2.0 + sigma;
    let x = z * z;
    let mut coef = 1.0;
    let mut moment = 1.0;
    let mut xk = 1.0;
    let mut sum = 0.0;
    for k in 0..100_000 {
        let term = coef * coef * xk * moment;
        sum += term;
        if term < 1e-17 * sum && k > 10 {
            break;
        }
        let kf = k as f64;
        coef *= (p + kf) / (kf + 1.0);
        moment *= (kf + 1.0) / (kf + alpha + 2.0);
        xk *= x;
    }
    sum
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialRow {
    pub alpha: f64,
    /// Best constant `C` of the rewritten inequality, `(1+α) C_α²`.
    pub constant: f64,
    pub c_alpha_sqr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialReport {
    pub rows: Vec<PotentialRow>,
    /// `max/min` of `(1+α) C_α²` over the grid.
    pub spread: f64,
}

pub fn potential_operator_check(
    mu: &AtomicMeasure,
    sigma: f64,
    alphas: &[f64],
    quad: PotentialQuadrature,
) -> Result<PotentialReport> {
    let sq: Vec<f64> = mu.masses().iter().map(|m| m.sqrt()).collect();
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let constant = if mu.is_empty() {
            0.0
        } else {
            let g = potential_gram(mu.points(), mu.dim(), sigma, alpha, quad)?;
            let a = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] * sq[i] * sq[j]);
            linalg::sym_top_eigenvalue(&linalg::symmetrized(&a)?)?
        };
        rows.push(PotentialRow {
            alpha,
            constant,
            c_alpha_sqr: constant / (1.0 + alpha),
        });
    }
    let hi = rows.iter().map(|r| r.constant).fold(0.0, f64::max);
    let lo = rows.iter().map(|r| r.constant).fold(f64::INFINITY, f64::min);
    Ok(PotentialReport {
        rows,
        spread: if hi > 0.0 { hi / lo } else { 1.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_atom_oracle() {
        let z = vec![c(0.3, 0.4), c(0.1, 0.0)];
        let m = 0.7;
        let mu = AtomicMeasure::new(2, vec![(z.clone(), m)]).unwrap();
        for sigma in [0.25, 0.5, 1.0] {
            let v = kernel_carleson_oracle(&mu, KernelSpec::besov_sobolev(sigma)).unwrap();
            let exact = m * (1.0 - ball::norm_sqr(&z)).powf(-2.0 * sigma);
            assert!((v - exact).abs() < 1e-12 * exact);
        }
        assert_eq!(kernel_carleson_oracle(&AtomicMeasure::empty(2), KernelSpec::besov_sobolev(0.5)).unwrap(), 0.0);
    }

    #[test]
    fn transfer_scaling() {
        let mu = AtomicMeasure::new(1, vec![(vec![c(0.5, 0.0)], 1.0), (vec![c(0.0, 0.6)], 2.0)]).unwrap();
        let a = KernelSpec::besov_sobolev(0.25);
        let r = kernel_comparison_transfer(&mu, a, a).unwrap();
        assert!((r.c - 1.0).abs() < 1e-15 && r.holds && r.oracle == r.oracle_other);
    }

    #[test]
    fn np_small_cases() {
        let r = np_one_positive_eigenvalue(&[vec![c(0.4, 0.1)]], 0.25).unwrap();
        assert_eq!(r.positive, 1);
        assert!((r.spectrum[0] - (1.0 - 0.17f64).powf(0.5)).abs() < 1e-12);
        let pts: Vec<Vec<Complex64>> = [0.1, 0.5, -0.3, 0.7].iter().map(|&x| vec![c(x, x / 2.0)]).collect();
        assert!(np_one_positive_eigenvalue(&pts, 0.5).unwrap().one_positive);
    }

    #[test]
    fn ring_domain_tables() {
        let t = ring_domain_norms(2.0, 20).unwrap();
        let row = |n: i32| t.rows.iter().find(|r| r.n == n).unwrap().clone();
        assert!((row(0).h2_formula - 2.0).abs() < 1e-15);
        assert!((row(1).h2_formula - 4.25).abs() < 1e-15);
        assert!((row(1).hk_formula - 15.0 / 17.0 * 4.0).abs() < 1e-14);
        assert!(t.max_h2_error < 1e-10 && t.max_hk_error < 1e-10, "{} {}", t.max_h2_error, t.max_hk_error);
        assert!(ring_identity_residual(2.0, 200, 1).unwrap() < 1e-10);
        assert!(ring_domain_norms(1.0, 3).is_err());
    }

    #[test]
    fn delta_metric_basics() {
        let x = [c(0.3, -0.2)];
        assert_eq!(delta_sigma_metric(&x, &x, 0.25), 0.0);
        let d = delta_sigma_metric(&[c(0.9, 0.0)], &[c(-0.9, 0.0)], 0.25);
        assert!(d > 0.0 && d <= 1.0);
    }

    #[test]
    fn potential_single_atom_matches_series() {
        let z = 0.5;
        let quad = PotentialQuadrature { sphere: 256, ..Default::default() };
        for alpha in [-0.5, 0.0, 1.0] {
            let g = potential_gram(&[vec![c(z, 0.0)]], 1, 0.25, alpha, quad).unwrap();
            let exact = potential_single_atom_disk(z, 0.25, alpha);
            assert!((g[(0, 0)] - exact).abs() < 1e-8 * exact, "{alpha}: {} vs {exact}", g[(0, 0)]);
        }
    }

    #[test]
    fn lip_map_is_an_isometry() {
        let f = LipSigma::new(0.25, 4096).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut point = || Complex64::from_polar(rng.random_range(0.0..0.99), rng.random_range(0.0..2.0 * PI));
        let pairs: Vec<_> = (0..100).map(|_| (point(), point())).collect();
        assert!(lip_isometry_check(&f, &pairs) < 1e-6);
    }

    #[test]
    fn gram_single_point_and_cauchy_schwarz() {
        let r = gram_interpolation_test(&[vec![c(0.5, 0.0)]], 0.25).unwrap();
        assert!(r.separation.is_infinite() && (r.gram_norm - 1.0).abs() < 1e-12);
        let pts: Vec<Vec<Complex64>> = (1..8).map(|j| vec![c(1.0 - (-(j as f64)).exp2(), 0.0)]).collect();
        let r = gram_interpolation_test(&pts, 0.25).unwrap();
        assert!(r.separation > 0.0 && r.max_offdiagonal < 1.0 && r.tree_constant > 0.0);
        assert!(gram_interpolation_test(&[pts[0].clone(), pts[0].clone()], 0.25).is_err());
    }

    #[test]
    fn potential_zero_measure() {
        let r = potential_operator_check(&AtomicMeasure::empty(1), 0.25, &[0.0, 1.0], PotentialQuadrature::default()).unwrap();
        assert!(r.rows.iter().all(|row| row.constant == 0.0));
    }
}

//! One-command reproduction scenarios with auditable verdicts.
//!
//! A scenario takes a seed, a depth and a string-valued parameter map that is
//! validated against the scenario's schema. It returns a [`RunReport`]: named
//! steps holding numbers, a per-depth table, and verdicts that each compare one
//! of those numbers with a declared threshold.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ball;
use crate::bergman::{inner_radius, BergmanGeometry, BergmanTree, DStarMode, NetOptions, DEFAULT_MAX_NODES};
use crate::conditions::{
    epsilon_split_condition, fattened_conditions, simple_condition, split_terms, split_tree_condition,
    tree_condition, SplitOptions,
};
use crate::disk::{fattened_disk_tree, kubes_per_level, DiskKind, DiskTree};
use crate::error::{Error, Result};
use crate::kernels::{
    gram_interpolation_test, lip_isometry_check, lip_pushforward_check, np_one_positive_eigenvalue,
    potential_gram, potential_operator_check, potential_single_atom_disk, ring_domain_norms,
    ring_identity_residual, PotentialQuadrature,
};
use crate::linalg::PowerOptions;
use crate::measures::{
    cantor_measure, curve_measure, discretize, discretize_disk, disk_istar_exponent, fitted_slope,
    invariant_measure, multiplier_measure, power_measure_disk, power_measure_levels, random_atomic_measure,
    random_direction, transversality_classify, AtomicMeasure, CurveSpec, LipSigma, Polynomial, Transversality,
};
use crate::operators::{operator_norm, simple_suffices_suite, NormMethod, OperatorKind, TreeOperator};
use crate::qmc::SpherePoints;
use crate::tree::{Tree, TreeMeasure};
use crate::two_weight;

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// A report number: 12 significant digits, with `±inf` and `nan` as strings in JSON.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Num(f64);

impl Num {
    pub fn new(x: f64) -> Num {
        Num(round12(x))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<f64> for Num {
    fn from(x: f64) -> Num {
        Num::new(x)
    }
}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            x if x.is_nan() => f.write_str("nan"),
            x if x == f64::INFINITY => f.write_str("inf"),
            x if x == f64::NEG_INFINITY => f.write_str("-inf"),
            x if x == 0.0 || (1e-4..1e12).contains(&x.abs()) => write!(f, "{x}"),
            x => write!(f, "{x:e}"),
        }
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Num, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(Num(x)),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(Num(f64::INFINITY)),
                "-inf" => Ok(Num(f64::NEG_INFINITY)),
                "nan" => Ok(Num(f64::NAN)),
                _ => Err(serde::de::Error::custom(format!("bad number {s}"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    PowerMeasure,
    FattenedVsStandard,
    RingDomain,
    LipSigma,
    NpKernel,
    SliceVacuous,
    TransverseCurve,
    TangentialCurve,
    InvariantMeasure,
    Cantor,
    VonNeumann,
    Interpolation,
    TwoWeightSuite,
    PotentialAppendix,
}

impl Scenario {
    pub const ALL: [Scenario; 14] = [
        Scenario::PowerMeasure,
        Scenario::FattenedVsStandard,
        Scenario::RingDomain,
        Scenario::LipSigma,
        Scenario::NpKernel,
        Scenario::SliceVacuous,
        Scenario::TransverseCurve,
        Scenario::TangentialCurve,
        Scenario::InvariantMeasure,
        Scenario::Cantor,
        Scenario::VonNeumann,
        Scenario::Interpolation,
        Scenario::TwoWeightSuite,
        Scenario::PotentialAppendix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::PowerMeasure => "power-measure",
            Scenario::FattenedVsStandard => "fattened-vs-standard",
            Scenario::RingDomain => "ring-domain",
            Scenario::LipSigma => "lip-sigma",
            Scenario::NpKernel => "np-kernel",
            Scenario::SliceVacuous => "slice-vacuous",
            Scenario::TransverseCurve => "transverse-curve",
            Scenario::TangentialCurve => "tangential-curve",
            Scenario::InvariantMeasure => "invariant-measure",
            Scenario::Cantor => "cantor",
            Scenario::VonNeumann => "von-neumann",
            Scenario::Interpolation => "interpolation",
            Scenario::TwoWeightSuite => "two-weight-suite",
            Scenario::PotentialAppendix => "potential-appendix",
        }
    }

    /// Default, minimum and maximum depth.
    pub fn depth_range(self) -> (u32, u32, u32) {
        match self {
            Scenario::PowerMeasure => (24, 2, 30),
            Scenario::FattenedVsStandard => (12, 2, 14),
            Scenario::RingDomain | Scenario::LipSigma | Scenario::NpKernel => (0, 0, 0),
            Scenario::SliceVacuous => (8, 2, 10),
            Scenario::TransverseCurve | Scenario::TangentialCurve => (8, 4, 10),
            Scenario::InvariantMeasure => (8, 2, 10),
            Scenario::Cantor => (10, 2, 12),
            Scenario::VonNeumann => (8, 2, 10),
            Scenario::Interpolation => (10, 2, 16),
            Scenario::TwoWeightSuite => (0, 0, 0),
            Scenario::PotentialAppendix => (4, 2, 6),
        }
    }

    pub fn schema(self) -> Vec<ParamSpec> {
        use ParamKind::*;
        let p = |name, kind, default, help| ParamSpec { name, kind, default, help };
        match self {
            Scenario::PowerMeasure => vec![
                p("rho", Float { min: -0.99, max: 4.0 }, "-0.75", "exponent of (1 − |z|)^ρ dA"),
                p("depths", IntRange { min: 2, max: 30 }, "8..24", "depths of the fit; the last must not exceed the depth"),
                p("scale", Float { min: 0.0, max: 1e6 }, "1", "multiplies the measure; 0 gives the empty smoke case"),
                p("slope-tol", Float { min: 0.0, max: 1.0 }, "0.05", "tolerance on fitted exponents"),
                p("stable-tol", Float { min: 0.0, max: 1.0 }, "0.1", "relative change allowed in the standard tree constant over the last four depths"),
            ],
            Scenario::FattenedVsStandard => vec![
                p("measures", Int { min: 0, max: 10_000 }, "100", "random disk measures in the suite"),
                p("atoms", Int { min: 1, max: 2000 }, "200", "largest atom count"),
                p("k-bound", Float { min: 0.0, max: 1e6 }, "4", "declared suite constant K in C_T𝒯 ≤ K·C_T𝔉"),
                p("rho", Float { min: -0.99, max: 4.0 }, "-0.75", "exponent of the counterexample"),
                p("depths", FloatList { min: 2.0, max: 30.0 }, "3,6,12,24", "counterexample depths"),
                p("stable-tol", Float { min: 0.0, max: 1.0 }, "0.1", "relative change allowed in C_T𝒯 over the last doubling"),
                p("growth", Float { min: 1.0, max: 1e6 }, "1.2", "least growth factor of C_S𝔉 per doubling"),
            ],
            Scenario::RingDomain => vec![
                p("L", Float { min: 1.000001, max: 100.0 }, "2", "ring parameter, the domain is 1/L < |z| < L"),
                p("nmax", Int { min: 0, max: 40 }, "20", "largest |n|"),
                p("pairs", Int { min: 1, max: 1_000_000 }, "1000", "sample pairs for the identity residual"),
                p("tol", Float { min: 0.0, max: 1.0 }, "1e-10", "tolerance on both tables and the residual"),
            ],
            Scenario::LipSigma => vec![
                p("sigma", Float { min: 0.01, max: 0.49 }, "0.25", "order σ of the map"),
                p("truncation", Int { min: 1, max: 1 << 16 }, "4096", "number of coordinates kept"),
                p("pairs", Int { min: 1, max: 100_000 }, "100", "random pairs with |x|, |y| ≤ 0.99"),
                p("atoms", Int { min: 1, max: 2000 }, "200", "atoms of the pushforward test measure"),
                p("max-level", Int { min: 1, max: 12 }, "8", "deepest atom level"),
                p("tol", Float { min: 0.0, max: 1.0 }, "1e-6", "isometry tolerance"),
                p("push-factor", Float { min: 1.0, max: 1e6 }, "16", "allowed factor between the two simple conditions"),
            ],
            Scenario::NpKernel => vec![
                p("instances", Int { min: 1, max: 1_000_000 }, "500", "random point sets"),
                p("max-points", Int { min: 1, max: 64 }, "8", "largest m"),
                p("max-dim", Int { min: 1, max: 8 }, "3", "largest n"),
                p("sigmas", FloatList { min: 0.0001, max: 0.4999 }, "0.1,0.25,0.4", "values of σ"),
            ],
            Scenario::SliceVacuous => vec![
                p("n", Int { min: 1, max: 3 }, "2", "dimension"),
                p("atoms", Int { min: 1, max: 2000 }, "200", "atoms on the slice"),
                p("measures", Int { min: 1, max: 1000 }, "5", "slices tried, plus as many measures in the disk"),
            ],
            Scenario::TransverseCurve | Scenario::TangentialCurve => vec![
                p("eps", Float { min: 0.0, max: 1.0 }, "0.2", "ε of the ε-split sum"),
                p("radial", Int { min: 1, max: 64 }, "8", "sample rings per level"),
                p("angular", Int { min: 0, max: 1 << 16 }, "0", "samples per ring; 0 means 2^(depth+1)"),
                p("c-bound", Float { min: 0.0, max: 100.0 }, "2", "bound on C in k ≥ d(γ)/4 − C"),
            ],
            Scenario::InvariantMeasure => vec![
                p("profiles", Int { min: 1, max: 1000 }, "50", "random invariant measures"),
                p("max-support", Int { min: 1, max: 2000 }, "1000", "kubes carrying mass"),
                p("bound", Float { min: 0.0, max: 1e6 }, "8", "declared factor in ‖T‖ ≤ bound·‖μ‖"),
            ],
            Scenario::Cantor => vec![
                p("depths", FloatList { min: 1.0, max: 12.0 }, "2,4,6,8,10", "depths of the Cantor family"),
                p("weights", FloatList { min: 0.0, max: 1.0 }, "0.5,0,0.5", "branch weights"),
                p("rs", FloatList { min: 1e-6, max: 1e6 }, "1,0.5,0.25,0.125", "grid of r"),
                p("measures", Int { min: 0, max: 1000 }, "20", "random binary-tree measures normalized to simple constant 1"),
                p("k-bound", Float { min: 0.0, max: 1e6 }, "4", "declared K in ‖T_small(r)‖ ≤ K/r"),
                p("blowup", Float { min: 1.0, max: 1e6 }, "2", "least ratio of ‖T_big‖ between the last and first depth"),
                p("bounded", Float { min: 1.0, max: 1e6 }, "1.5", "largest ratio of ‖T_small(1)‖ between the last and first depth"),
            ],
            Scenario::VonNeumann => vec![
                p("n", Int { min: 1, max: 3 }, "2", "dimension"),
                p("m", Int { min: 0, max: 8 }, "1", "derivative order, 2m > n − 1"),
                p("samples", Int { min: 1, max: 1_000_000 }, "4000", "quasi-random samples of each multiplier measure"),
                p("sphere", Int { min: 1, max: 1_000_000 }, "4096", "sphere samples for the sup norm"),
            ],
            Scenario::Interpolation => vec![
                p("sigma", Float { min: 0.01, max: 0.5 }, "0.25", "order σ"),
                p("n", Int { min: 1, max: 3 }, "1", "dimension of the random sequence"),
                p("points", Int { min: 2, max: 500 }, "40", "random points"),
            ],
            Scenario::TwoWeightSuite => vec![
                p("trees", Int { min: 1, max: 10_000 }, "200", "random trees"),
                p("max-nodes", Int { min: 2, max: 2000 }, "300", "largest tree"),
                p("k-bound", Float { min: 1.0, max: 1e6 }, "16", "declared K in norm² ≤ K·testing"),
                p("tol", Float { min: 0.0, max: 1.0 }, "1e-9", "relative tolerance of testing ≤ norm²"),
            ],
            Scenario::PotentialAppendix => vec![
                p("sigma", Float { min: 0.01, max: 0.49 }, "0.25", "order σ"),
                p("alphas", FloatList { min: -0.99, max: 20.0 }, "-0.5,0,1,3", "grid of α"),
                p("sphere", Int { min: 8, max: 1 << 16 }, "1024", "circle nodes"),
                p("panels", Int { min: 1, max: 200 }, "40", "dyadic panels in v"),
                p("order", Int { min: 2, max: 64 }, "12", "Gauss–Legendre nodes per panel"),
                p("spread", Float { min: 1.0, max: 1e6 }, "2", "allowed max/min of (1+α)C_α² for the tree-condition measure"),
                p("growth", Float { min: 1.0, max: 1e6 }, "1.5", "least growth of C for the failing measure"),
            ],
        }
    }

    pub fn param_names(self) -> Vec<&'static str> {
        self.schema().iter().map(|p| p.name).collect()
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Scenario> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Invalid(format!("scenario: unknown name {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamKind {
    Float { min: f64, max: f64 },
    Int { min: i64, max: i64 },
    /// `a..b`, inclusive.
    IntRange { min: u32, max: u32 },
    /// Comma-separated floats.
    FloatList { min: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    pub default: &'static str,
    pub help: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Float(f64),
    Int(i64),
    Range(u32, u32),
    List(Vec<f64>),
}

fn parse_value(spec: &ParamSpec, raw: &str) -> Result<Value> {
    let err = |msg: String| Error::Invalid(format!("params.{}: {msg}", spec.name));
    let float = |s: &str| s.trim().parse::<f64>().map_err(|_| err(format!("{s:?} is not a number")));
    match spec.kind {
        ParamKind::Float { min, max } => {
            let x = float(raw)?;
            if !(x >= min && x <= max) {
                return Err(err(format!("{x} is outside [{min}, {max}]")));
            }
            Ok(Value::Float(x))
        }
        ParamKind::Int { min, max } => {
            let x: i64 = raw.trim().parse().map_err(|_| err(format!("{raw:?} is not an integer")))?;
            if !(min..=max).contains(&x) {
                return Err(err(format!("{x} is outside [{min}, {max}]")));
            }
            Ok(Value::Int(x))
        }
        ParamKind::IntRange { min, max } => {
            let (a, b) = raw.split_once("..").ok_or_else(|| err(format!("{raw:?} is not of the form a..b")))?;
            let a: u32 = a.trim().parse().map_err(|_| err(format!("{a:?} is not an integer")))?;
            let b: u32 = b.trim().parse().map_err(|_| err(format!("{b:?} is not an integer")))?;
            if a > b || a < min || b > max {
                return Err(err(format!("{a}..{b} is not inside {min}..{max}")));
            }
            Ok(Value::Range(a, b))
        }
        ParamKind::FloatList { min, max } => {
            let xs = raw.split(',').map(float).collect::<Result<Vec<f64>>>()?;
            if let Some(x) = xs.iter().find(|x| !(**x >= min && **x <= max)) {
                return Err(err(format!("{x} is outside [{min}, {max}]")));
            }
            Ok(Value::List(xs))
        }
    }
}

/// A scenario request. Parameters are strings checked against [`Scenario::schema`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub depth: Option<u32>,
    /// Refusal threshold of the node-count estimate.
    #[serde(default)]
    pub max_nodes: Option<u64>,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario) -> ScenarioSpec {
        ScenarioSpec {
            scenario,
            params: BTreeMap::new(),
            seed: 0,
            depth: None,
            max_nodes: None,
        }
    }

    pub fn seed(mut self, seed: u64) -> ScenarioSpec {
        self.seed = seed;
        self
    }

    pub fn depth(mut self, depth: u32) -> ScenarioSpec {
        self.depth = Some(depth);
        self
    }

    pub fn param(mut self, name: &str, value: impl ToString) -> ScenarioSpec {
        self.params.insert(name.to_string(), value.to_string());
        self
    }

    /// Checks names, types and ranges; returns the parameters with defaults filled in.
    pub fn validate(&self) -> Result<Resolved> {
        let schema = self.scenario.schema();
        for key in self.params.keys() {
            if !schema.iter().any(|p| p.name == key) {
                return Err(Error::Invalid(format!(
                    "params.{key}: unknown parameter of {}; expected one of {:?}",
                    self.scenario,
                    self.scenario.param_names()
                )));
            }
        }
        let mut raw = BTreeMap::new();
        let mut values = HashMap::new();
        for spec in &schema {
            let text = self.params.get(spec.name).map(String::as_str).unwrap_or(spec.default);
            values.insert(spec.name, parse_value(spec, text)?);
            raw.insert(spec.name.to_string(), text.trim().to_string());
        }
        let (default, lo, hi) = self.scenario.depth_range();
        let depth = self.depth.unwrap_or(default);
        if !(lo..=hi).contains(&depth) {
            return Err(Error::Invalid(format!("depth: {depth} is outside [{lo}, {hi}]")));
        }
        Ok(Resolved { raw, values, depth })
    }
}

/// Validated parameters.
#[derive(Debug, Clone)]
pub struct Resolved {
    raw: BTreeMap<String, String>,
    values: HashMap<&'static str, Value>,
    depth: u32,
}

impl Resolved {
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn raw(&self) -> &BTreeMap<String, String> {
        &self.raw
    }

    pub fn float(&self, name: &str) -> f64 {
        match self.values.get(name) {
            Some(Value::Float(x)) => *x,
            Some(Value::Int(x)) => *x as f64,
            v => panic!("parameter {name} is not a float: {v:?}"),
        }
    }

    pub fn int(&self, name: &str) -> usize {
        match self.values.get(name) {
            Some(Value::Int(x)) => *x as usize,
            v => panic!("parameter {name} is not an integer: {v:?}"),
        }
    }

    pub fn range(&self, name: &str) -> (u32, u32) {
        match self.values.get(name) {
            Some(Value::Range(a, b)) => (*a, *b),
            v => panic!("parameter {name} is not a range: {v:?}"),
        }
    }

    pub fn list(&self, name: &str) -> Vec<f64> {
        match self.values.get(name) {
            Some(Value::List(x)) => x.clone(),
            v => panic!("parameter {name} is not a list: {v:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub name: String,
    pub values: BTreeMap<String, Num>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `value ≤ threshold + tolerance`.
    Le,
    /// `value ≥ threshold − tolerance`.
    Ge,
    /// `|value − threshold| ≤ tolerance`.
    Eq,
}

impl Relation {
    pub fn holds(self, value: f64, threshold: f64, tolerance: f64) -> bool {
        match self {
            Relation::Le => value <= threshold + tolerance,
            Relation::Ge => value >= threshold - tolerance,
            Relation::Eq => (value - threshold).abs() <= tolerance,
        }
    }
}

/// A check of one report number, named `step/key`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub quantity: String,
    pub value: Num,
    pub relation: Relation,
    pub threshold: Num,
    pub tolerance: Num,
    pub pass: bool,
}

/// Per-depth (or per-index) table, written as CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Num>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Table {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row.iter().map(|&x| Num::new(x)).collect());
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Num::to_string).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub seed: u64,
    pub depth: u32,
    pub params: BTreeMap<String, String>,
    pub steps: Vec<Step>,
    pub table: Table,
    pub verdicts: Vec<Verdict>,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub pass: bool,
    /// Seconds; the only field allowed to differ between identical runs.
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn value(&self, quantity: &str) -> Option<f64> {
        let (step, key) = quantity.split_once('/')?;
        self.steps.iter().find(|s| s.name == step)?.values.get(key).map(|n| n.get())
    }

    /// Re-evaluates every verdict from the numbers in the report.
    pub fn audit(&self) -> bool {
        self.verdicts.iter().all(|v| {
            self.value(&v.quantity).is_some_and(|x| x.to_bits() == v.value.get().to_bits() || (x.is_nan() && v.value.get().is_nan()))
                && v.relation.holds(v.value.get(), v.threshold.get(), v.tolerance.get()) == v.pass
        }) && self.pass == self.verdicts.iter().all(|v| v.pass)
    }

    /// The report with the wall-clock time zeroed.
    pub fn without_timing(&self) -> RunReport {
        RunReport {
            wall_clock_s: 0.0,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<RunReport> {
        let r: RunReport = serde_json::from_str(text).map_err(|e| Error::Invalid(format!("report: {e}")))?;
        if !r.audit() {
            return Err(Error::Invalid("report: verdicts do not match the reported numbers".into()));
        }
        Ok(r)
    }
}

struct Builder {
    steps: Vec<Step>,
    table: Table,
    verdicts: Vec<Verdict>,
    warnings: Vec<String>,
}

impl Builder {
    fn new() -> Builder {
        Builder {
            steps: Vec::new(),
            table: Table::default(),
            verdicts: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn step(&mut self, name: &str, values: &[(&str, f64)]) {
        let values = values.iter().map(|(k, v)| (k.to_string(), Num::new(*v))).collect();
        self.steps.push(Step {
            name: name.to_string(),
            values,
        });
    }

    fn check(&mut self, name: &str, quantity: &str, relation: Relation, threshold: f64, tolerance: f64) {
        let (step, key) = quantity.split_once('/').expect("quantity is step/key");
        let value = self
            .steps
            .iter()
            .find(|s| s.name == step)
            .and_then(|s| s.values.get(key))
            .copied()
            .unwrap_or_else(|| panic!("verdict {name} refers to missing {quantity}"));
        let (threshold, tolerance) = (Num::new(threshold), Num::new(tolerance));
        self.verdicts.push(Verdict {
            name: name.to_string(),
            quantity: quantity.to_string(),
            value,
            relation,
            threshold,
            tolerance,
            pass: relation.holds(value.get(), threshold.get(), tolerance.get()),
        });
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Upper estimate of the tree nodes a scenario materializes.
pub fn estimate_nodes(spec: &ScenarioSpec) -> Result<u64> {
    let p = spec.validate()?;
    let d = p.depth();
    let disk = |kind, depth: u32| (0..=depth).map(|l| kubes_per_level(kind, l) as u64).sum::<u64>();
    Ok(match spec.scenario {
        Scenario::PowerMeasure => disk(DiskKind::Fattened, d),
        Scenario::FattenedVsStandard => {
            let deepest = p.list("depths").iter().fold(0.0f64, |a, &b| a.max(b)) as u32;
            disk(DiskKind::Standard, d) + disk(DiskKind::Fattened, d.max(deepest))
        }
        Scenario::RingDomain | Scenario::LipSigma | Scenario::NpKernel => 0,
        Scenario::SliceVacuous => (p.int("atoms") as u64 + 1) * (d as u64 + 1),
        Scenario::TransverseCurve | Scenario::TangentialCurve => {
            let angular = match p.int("angular") {
                0 => 1u64 << (d + 1),
                a => a as u64,
            };
            (p.int("radial") as u64 * d as u64 * angular).saturating_mul(d as u64 + 1)
        }
        Scenario::InvariantMeasure => BergmanGeometry::build(2, d, NetOptions::default())?.node_count(),
        Scenario::Cantor => {
            let k = p.list("weights").len() as u64;
            let deepest = p.list("depths").iter().fold(0.0f64, |a, &b| a.max(b)) as u32;
            (0..=deepest).map(|l| k.saturating_pow(l)).sum::<u64>().max(1 << (d + 1))
        }
        Scenario::VonNeumann => 4 * p.int("samples") as u64 * (d as u64 + 1),
        Scenario::Interpolation => (p.int("points") as u64 + d as u64) * (d as u64 + 1),
        Scenario::TwoWeightSuite => p.int("max-nodes") as u64,
        Scenario::PotentialAppendix => 0,
    })
}

/// Runs a scenario after validation and the resource check.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<RunReport> {
    let p = spec.validate()?;
    let cap = spec.max_nodes.unwrap_or(DEFAULT_MAX_NODES);
    let estimate = estimate_nodes(spec)?;
    if estimate > cap {
        return Err(Error::Resource {
            what: format!("scenario {}", spec.scenario),
            estimate,
            cap,
        });
    }
    let start = Instant::now();
    let mut b = Builder::new();
    let seed = spec.seed;
    match spec.scenario {
        Scenario::PowerMeasure => power_measure(&p, &mut b)?,
        Scenario::FattenedVsStandard => fattened_vs_standard(&p, seed, &mut b)?,
        Scenario::RingDomain => ring_domain(&p, seed, &mut b)?,
        Scenario::LipSigma => lip_sigma(&p, seed, &mut b)?,
        Scenario::NpKernel => np_kernel(&p, seed, &mut b)?,
        Scenario::SliceVacuous => slice_vacuous(&p, seed, &mut b)?,
        Scenario::TransverseCurve => curve_scenario(&p, true, &mut b)?,
        Scenario::TangentialCurve => curve_scenario(&p, false, &mut b)?,
        Scenario::InvariantMeasure => invariant(&p, seed, &mut b)?,
        Scenario::Cantor => cantor(&p, seed, &mut b)?,
        Scenario::VonNeumann => von_neumann(&p, seed, &mut b)?,
        Scenario::Interpolation => interpolation(&p, seed, &mut b)?,
        Scenario::TwoWeightSuite => two_weight_suite(&p, seed, &mut b)?,
        Scenario::PotentialAppendix => potential(&p, &mut b)?,
    }
    let pass = b.verdicts.iter().all(|v| v.pass);
    Ok(RunReport {
        scenario: spec.scenario,
        seed,
        depth: p.depth(),
        params: p.raw().clone(),
        steps: b.steps,
        table: b.table,
        verdicts: b.verdicts,
        warnings: b.warnings,
        pass,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

fn power_measure(p: &Resolved, b: &mut Builder) -> Result<()> {
    let rho = p.float("rho");
    let scale = p.float("scale");
    let (lo, hi) = p.range("depths");
    if hi > p.depth() {
        return Err(Error::Invalid(format!("params.depths: {hi} exceeds the depth {}", p.depth())));
    }
    let levels = power_measure_levels(rho, hi)?;
    let fat = DiskTree::new(DiskKind::Fattened, hi)?;
    let mf = power_measure_disk(rho, &fat)?.scaled(scale);
    b.table = Table::new(&["depth", "istar_standard", "istar_fattened", "tree_standard", "simple_fattened", "tree_fattened"]);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for d in lo..=hi {
        let lv = power_measure_levels(rho, d)?;
        let f = DiskTree::new(DiskKind::Fattened, d)?;
        let m = power_measure_disk(rho, &f)?.scaled(scale);
        let tt = scale * lv.tree_condition(0.5).constant;
        let sf = simple_condition(f.tree(), &m, 0.5).constant;
        let tf = tree_condition(f.tree(), &m, 0.5).constant;
        b.table.push(&[d as f64, scale * levels.istar(d), mf.istar(fat.node(d, 0)), tt, sf, tf]);
        xs.push(d as f64);
        ys.push(sf);
    }
    let col = |name: &str| {
        let j = b.table.columns.iter().position(|c| c == name).expect("column");
        b.table.rows.iter().map(|r| r[j].get()).collect::<Vec<f64>>()
    };
    let tt = col("tree_standard");
    let last = *tt.last().expect("nonempty depth range");
    let back = tt[tt.len().saturating_sub(5)];
    if scale == 0.0 {
        let total: f64 = b.table.rows.iter().flat_map(|r| r[1..].iter().map(|x| x.get().abs())).sum();
        b.step("smoke", &[("sum_of_constants", total)]);
        b.check("empty measure gives zeros", "smoke/sum_of_constants", Relation::Eq, 0.0, 0.0);
        return Ok(());
    }
    let ds: Vec<f64> = (lo..=hi).map(|d| d as f64).collect();
    let slope_t = fitted_slope(&ds, &(lo..=hi).map(|d| levels.istar(d).log2()).collect::<Vec<_>>());
    let slope_f = disk_istar_exponent(&fat, &mf, lo..=hi);
    let slope_s = fitted_slope(&xs, &ys.iter().map(|y| y.log2()).collect::<Vec<_>>());
    let tol = p.float("slope-tol");
    b.step(
        "slopes",
        &[
            ("istar_standard", slope_t),
            ("istar_standard_expected", -(rho + 2.0)),
            ("istar_fattened", slope_f),
            ("istar_fattened_expected", -(rho + 1.5)),
            ("simple_fattened", slope_s),
            ("simple_fattened_expected", (-(rho + 0.5)).max(0.0)),
        ],
    );
    b.step("stability", &[("tree_standard_last", last), ("relative_change_last4", (last - back).abs() / last)]);
    b.check("standard exponent", "slopes/istar_standard", Relation::Eq, -(rho + 2.0), tol);
    b.check("fattened exponent", "slopes/istar_fattened", Relation::Eq, -(rho + 1.5), tol);
    b.check("fattened simple-constant exponent", "slopes/simple_fattened", Relation::Eq, (-(rho + 0.5)).max(0.0), tol);
    b.check("standard tree constant stabilizes", "stability/relative_change_last4", Relation::Le, p.float("stable-tol"), 0.0);
    Ok(())
}

/// `max C_T𝒯 / C_T𝔉` over random disk measures.
pub fn fattened_suite(measures: usize, atoms: usize, depth: u32, seed: u64) -> Result<f64> {
    let (st, fa) = fattened_disk_tree(depth)?;
    let mut r = rng(seed);
    let mut k = 0.0f64;
    for _ in 0..measures {
        let count = r.random_range(1..=atoms);
        let max_level = r.random_range(1..=depth);
        let mu = random_atomic_measure(1, count, max_level, &mut r);
        let report = fattened_conditions(&st, &discretize_disk(&mu, &st)?, &fa, &discretize_disk(&mu, &fa)?);
        k = k.max(report.implication_ratio());
    }
    Ok(k)
}

fn fattened_vs_standard(p: &Resolved, seed: u64, b: &mut Builder) -> Result<()> {
    let k = fattened_suite(p.int("measures"), p.int("atoms"), p.depth(), seed)?;
    b.step("suite", &[("measures", p.int("measures") as f64), ("k", k)]);
    b.check("C_T𝒯 ≤ K·C_T𝔉", "suite/k", Relation::Le, p.float("k-bound"), 0.0);
    let rho = p.float("rho");
    let depths: Vec<u32> = p.list("depths").iter().map(|&d| d as u32).collect();
    b.table = Table::new(&["depth", "tree_standard", "tree_fattened", "simple_fattened"]);
    let mut rows = Vec::new();
    for &d in &depths {
        let tt = power_measure_levels(rho, d)?.tree_condition(0.5).constant;
        let f = DiskTree::new(DiskKind::Fattened, d)?;
        let m = power_measure_disk(rho, &f)?;
        let row = [d as f64, tt, tree_condition(f.tree(), &m, 0.5).constant, simple_condition(f.tree(), &m, 0.5).constant];
        b.table.push(&row);
        rows.push(row);
    }
    if rows.len() >= 2 {
        let n = rows.len();
        let stable = (rows[n - 1][1] - rows[n - 2][1]).abs() / rows[n - 1][1];
        let growth = rows.windows(2).map(|w| w[1][3] / w[0][3]).fold(f64::INFINITY, f64::min);
        b.step(
            "counterexample",
            &[("tree_standard_change", stable), ("min_simple_fattened_growth", growth), ("doublings", (n - 1) as f64)],
        );
        b.check("C_T𝒯 stays bounded", "counterexample/tree_standard_change", Relation::Le, p.float("stable-tol"), 0.0);
        b.check("C_S𝔉 grows at every step", "counterexample/min_simple_fattened_growth", Relation::Ge, p.float("growth"), 0.0);
        b.check("at least three doublings", "counterexample/doublings", Relation::Ge, 3.0, 0.0);
    }
    Ok(())
}

fn ring_domain(p: &Resolved, seed: u64, b: &mut Builder) -> Result<()> {
    let l = p.float("L");
    let table = ring_domain_norms(l, p.int("nmax") as i32)?;
    let residual = ring_identity_residual(l, p.int("pairs"), seed)?;
    b.table = Table::new(&["n", "h2_formula", "h2_quadrature", "hk_formula", "hk_fft"]);
    for row in &table.rows {
        b.table.push(&[row.n as f64, row.h2_formula, row.h2_quadrature, row.hk_formula, row.hk_fft]);
    }
    b.step(
        "ring",
        &[
            ("max_h2_error", table.max_h2_error),
            ("max_hk_error", table.max_hk_error),
            ("identity_residual", residual),
            ("max_norm_ratio", table.max_norm_ratio),
        ],
    );
    let tol = p.float("tol");
    b.check("H² norms", "ring/max_h2_error", Relation::Le, tol, 0.0);
    b.check("kernel-space norms", "ring/max_hk_error", Relation::Le, tol, 0.0);
    b.check("partial-fraction identity", "ring/identity_residual", Relation::Le, tol, 0.0);
    Ok(())
}

fn random_disk_point(r: &mut ChaCha8Rng, max_radius: f64) -> Complex64 {
    Complex64::from_polar(max_radius * r.random::<f64>().sqrt(), r.random_range(0.0..2.0 * PI))
}

fn lip_sigma(p: &Resolved, seed: u64, b: &mut Builder) -> Result<()> {
    let f = LipSigma::new(p.float("sigma"), p.int("truncation"))?;
    let mut r = rng(seed);
    let pairs: Vec<_> = (0..p.int("pairs")).map(|_| (random_disk_point(&mut r, 0.99), random_disk_point(&mut r, 0.99))).collect();
    let defect = lip_isometry_check(&f, &pairs);
    let mu = random_atomic_measure(1, p.int("atoms"), p.int("max-level") as u32, &mut r);
    let mut tests: Vec<Complex64> = mu.points().iter().map(|z| z[0]).filter(|z| z.norm() > 0.0).collect();
    for j in 1..=p.int("max-level") as i32 {
        for i in 0..8 {
            tests.push(Complex64::from_polar(1.0 - 2f64.powi(-j), PI * i as f64 / 4.0));
        }
    }
    let push = lip_pushforward_check(&f, &mu, &tests)?;
    b.step("map", &[("tail", f.tail()), ("tail_at_099", f.tail_at(0.99)), ("isometry_defect", defect)]);
    b.table = Table::new(&["r", "boundary_ratio", "boundary_ratio_truncated"]);
    for j in 1..=10 {
        let x = 1.0 - 2f64.powi(-j);
        b.table.push(&[x, f.boundary_ratio(x), f.boundary_ratio_truncated(x)]);
    }
    b.step(
        "pushforward",
        &[
            ("kernel_defect", push.kernel_defect),
            ("disk_simple", push.disk_simple),
            ("pushed_simple", push.pushed_simple),
            ("ratio", push.ratio),
            ("inverse_ratio", if push.ratio > 0.0 { 1.0 / push.ratio } else { f64::INFINITY }),
        ],
    );
    let factor = p.float("push-factor");
    b.check("isometry", "map/isometry_defect", Relation::Le, p.float("tol"), 0.0);
    b.check("pushed simple condition ≤ factor·disk", "pushforward/ratio", Relation::Le, factor, 0.0);
    b.check("disk simple condition ≤ factor·pushed", "pushforward/inverse_ratio", Relation::Le, factor, 0.0);
    Ok(())
}

fn np_kernel(p: &Resolved, seed: u64, b: &mut Builder) -> Result<()> {
    let mut r = rng(seed);
    let sigmas = p.list("sigmas");
    let mut ok = 0usize;
    let mut worst_second = f64::NEG_INFINITY;
    let instances = p.int("instances");
    for _ in 0..instances {
        let n = r.random_range(1..=p.int("max-dim"));
        let m = r.random_range(1..=p.int("max-points"));
        let sigma = sigmas[r.random_range(0..sigmas.len())];
        let pts: Vec<Vec<Complex64>> = (0..m)
            .map(|_| {
                let u = random_direction(n, &mut r);
                ball::scale(&u, Complex64::new(r.random::<f64>().powf(0.5 / n as f64) * 0.99, 0.0))
            })
            .collect();
        let rep = np_one_positive_eigenvalue(&pts, sigma)?;
        if rep.one_positive {
            ok += 1;
        }
        if rep.spectrum.len() > 1 {
            worst_second = worst_second.max(rep.spectrum[rep.spectrum.len() - 2]);
        }
    }
    // σ = ½ in the disk: H = [1 − z̄_j z_i] has rank at most 2 with one positive eigenvalue.
    let pts: Vec<Vec<Complex64>> = (0..6).map(|_| vec![random_disk_point(&mut r, 0.95)]).collect();
    let half = np_one_positive_eigenvalue(&pts, 0.5)?;
    b.step(
        "np",
        &[
            ("instances", instances as f64),
            ("one_positive", ok as f64),
            ("largest_second_eigenvalue", worst_second),
            ("half_positive", half.positive as f64),
        ],
    );
    b.check("exactly one positive eigenvalue", "np/one_positive", Relation::Eq, instances as f64, 0.0);
    b.check("σ = ½ disk case", "np/half_positive", Relation::Eq, 1.0, 0.0);
    Ok(())
}

fn geometry(n: usize, depth: u32) -> Result<Arc<BergmanGeometry>> {
    Ok(Arc::new(BergmanGeometry::build(n, depth, NetOptions::default())?))
}

/// Atoms restricted to shells `≤ depth`; returns the dropped mass too.
fn within_depth(mu: &AtomicMeasure, depth: u32) -> (AtomicMeasure, f64) {
    mu.truncated(inner_radius(depth + 1))
}

fn slice_vacuous(p: &Resolved, seed: u64, b: &mut Builder) -> Result<()> {
    let n = p.int("n");
    let depth = p.depth();
    let geom = geometry(n, depth)?;
    let disk_geom = geometry(1, depth)?;
    let mut r = rng(seed);
    let (mut split_max, mut simple_max, mut disk_split_max) = (0.0f64, 0.0f64, 0.0f64);
    b.table = Table::new(&["measure", "simple", "split", "disk_split"]);
    for i in 0..p.int("measures") {
        let u = random_direction(n, &mut r);
        let base = random_atomic_measure(1, p.int("atoms"), depth, &mut r);
        let (slice, _) = within_depth(&base.map_points(|z| ball::scale(&u, z[0]))?, depth);
        let bt = BergmanTree::closure_of_points(geom.clone(), slice.points())?;
        let mu = discretize(&slice, &bt)?;
        let split = split_tree_condition(&bt, &mu, SplitOptions::default()).constant;
        let simple = simple_condition(bt.tree(), &mu, 0.5).constant;
        let (disk, _) = within_depth(&base, depth);
        let dbt = BergmanTree::closure_of_points(disk_geom.clone(), disk.points())?;
        let dmu = discretize(&disk, &dbt)?;
        let dsplit = split_tree_condition(&dbt, &dmu, SplitOptions::default()).constant;
        b.table.push(&[i as f64, simple, split, dsplit]);
        split_max = split_max.max(split);
        simple_max = simple_max.max(simple);
        disk_split_max = disk_split_max.max(dsplit);
    }
    b.step(
        "vacuity",
        &[("max_split", split_max), ("max_disk_split", disk_split_max), ("max_simple", simple_max)],
    );
    b.check("slice split constant is 0", "vacuity/max_split", Relation::Eq, 0.0, 0.0);
    b.check("disk split constant is 0", "vacuity/max_disk_split", Relation::Eq, 0.0, 0.0);
    b.check("simple constant is finite", "vacuity/max_simple", Relation::Le, f64::MAX, 0.0);
    Ok(())
}

/// `(z, z²)/√2` (transverse) or `(Re z, Im z)` (complex-tangential), with `∂_x f`, `∂_y f`.
pub fn model_curve(transverse: bool, radial: usize, angular: usize, t_max: f64) -> Result<CurveSpec> {
    type C = Complex64;
    let s = FRAC_1_SQRT_2;
    if transverse {
        CurveSpec::from_disk_map(
            2,
            |z: C| vec![z * s, z * z * s],
            |z: C| (vec![C::new(s, 0.0), z * 2.0 * s], vec![C::new(0.0, s), z * C::new(0.0, 2.0 * s)]),
            radial,
            angular,
            t_max,
        )
    } else {
        CurveSpec::from_disk_map(
            2,
            |z: C| vec![C::new(z.re, 0.0), C::new(z.im, 0.0)],
            |_z: C| (vec![C::new(1.0, 0.0), C::new(0.0, 0.0)], vec![C::new(0.0, 0.0), C::new(1.0, 0.0)]),
            radial,
            angular,
            t_max,
        )
    }
}

fn curve_scenario(p: &Resolved, transverse: bool, b: &mut Builder) -> Result<()> {
    let depth = p.depth();
    let eps = p.float("eps");
    let angular = match p.int("angular") {
        0 => 1usize << (depth + 1),
        a => a,
    };
    let spec = model_curve(transverse, p.int("radial") * depth as usize, angular, depth as f64)?;
    let class = transversality_classify(&spec)?;
    let (mu, warnings) = curve_measure(&spec, 0.0)?;
    b.warnings.extend(warnings);
    let (mu, dropped) = within_depth(&mu, depth);
    let bt = BergmanTree::closure_of_points(geometry(2, depth)?, mu.points())?;
    let tm = discretize(&mu, &bt)?;
    let opts = SplitOptions::default();
    let tree = bt.tree();
    // Per (d(γ), k) activity of the split sum, one k at a time.
    let mut active: Vec<(u32, u32)> = Vec::new();
    for k in 0..=depth {
        let terms = split_terms(&bt, &tm, opts, |_, kk| kk == k);
        let mut ds: Vec<u32> = (0..bt.len()).filter(|&g| terms[g] > 0.0).map(|g| tree.depth(g)).collect();
        ds.sort_unstable();
        ds.dedup();
        active.extend(ds.into_iter().map(|d| (d, k)));
    }
    let eps_active: Vec<(u32, u32)> = active.iter().copied().filter(|&(d, k)| k as f64 <= eps * d as f64).collect();
    let threshold = eps_active.iter().map(|&(d, _)| d + 1).max().unwrap_or(0);
    let c = active.iter().map(|&(d, k)| d as f64 / 4.0 - k as f64).fold(f64::NEG_INFINITY, f64::max);
    let eps_terms = split_terms(&bt, &tm, opts, |d, k| k as f64 <= eps * d as f64);
    let left = tree.sum_istar(&eps_terms);
    let above = (0..bt.len())
        .filter(|&a| tree.depth(a) >= threshold && tm.istar(a) > 0.0)
        .map(|a| left[a])
        .fold(0.0f64, f64::max);
    b.table = Table::new(&["depth", "split_terms", "eps_split_terms"]);
    let all = split_terms(&bt, &tm, opts, |_, _| true);
    for d in 0..=depth {
        let nodes = tree.nodes_at_depth(d);
        b.table.push(&[d as f64, nodes.iter().map(|&a| all[a]).sum(), nodes.iter().map(|&a| eps_terms[a]).sum()]);
    }
    let class_code = match class.class {
        Transversality::ComplexTangential => 0.0,
        Transversality::TransverseToComplexTangential => 1.0,
        Transversality::Mixed => 2.0,
        Transversality::Degenerate => 3.0,
    };
    b.step(
        "curve",
        &[
            ("class", class_code),
            ("min_normal", class.min_normal),
            ("min_tangent", class.min_tangent),
            ("max_tangent", class.max_tangent),
            ("atoms", mu.len() as f64),
            ("dropped_mass", dropped),
            ("nodes", bt.len() as f64),
        ],
    );
    b.step(
        "split",
        &[
            ("split", split_tree_condition(&bt, &tm, opts).constant),
            ("eps_split", epsilon_split_condition(&bt, &tm, eps, opts).constant),
            ("threshold", threshold as f64),
            ("eps_left_above_threshold", above),
            ("c", if c.is_finite() { c } else { 0.0 }),
            ("vanishing_depths", (depth + 1).saturating_sub(threshold) as f64),
        ],
    );
    if transverse {
        b.check("transverse to the complex-tangential directions", "curve/class", Relation::Eq, 1.0, 0.0);
        b.check("ε-split vanishes above the threshold", "split/eps_left_above_threshold", Relation::Eq, 0.0, 0.0);
        b.check("vanishing covers at least half the depths", "split/vanishing_depths", Relation::Ge, (depth as f64 / 2.0).ceil(), 0.0);
        b.check("k ≥ d(γ)/4 − C", "split/c", Relation::Le, p.float("c-bound"), 0.0);
    } else {
        b.check("complex-tangential", "curve/class", Relation::Eq, 0.0, 0.0);
        b.check("ε-split does not vanish", "split/eps_split", Relation::Ge, f64::MIN_POSITIVE, 0.0);
    }
    Ok(())
}

/// `max ‖T_full‖ / ‖μ‖` over random invariant measures on the full tree of `𝔹₂`.
pub fn invariant_suite(profiles: usize, max_support: usize, depth: u32, seed: u64) -> Result<(f64, Vec<f64>)> {
    let geom = geometry(2, depth)?;
    let bt = BergmanTree::full(geom.clone(), DEFAULT_MAX_NODES)?;
    let mut r = rng(seed);
    let mut ratios = Vec::with_capacity(profiles);
    let op = TreeOperator::on_bergman(OperatorKind::TFull(DStarMode::Analytic), &bt)?;
    for _ in 0..profiles {
        let mut chosen: Vec<(u32, u32)> = Vec::new();
        let mut seen = HashSet::new();
        let mut size = 0;
        let mut misses = 0;
        while misses < 16 {
            let l = r.random_range(0..=depth);
            let ring = r.random_range(0..geom.ring_count(l) as u32);
            if size + geom.phases(l) > max_support || seen.contains(&(l, ring)) {
                misses += 1;
                continue;
            }
            seen.insert((l, ring));
            chosen.push((l, ring));
            size += geom.phases(l);
        }
        let masses: HashMap<(u32, u32), f64> = chosen.iter().map(|&k| (k, 1.0 - r.random::<f64>())).collect();
        let mu = invariant_measure(&bt, |l, ring| masses.get(&(l, ring)).copied().unwrap_or(0.0))?;
        let total = mu.total(bt.tree());
        let norm = operator_norm(&op, &mu, NormMethod::Dense, PowerOptions::default())?.value;
        ratios.push(norm / total);
    }
    Ok((ratios.iter().copied().fold(0.0, f64::max), ratios))
}

fn invariant(p: &Resolved, seed: u64, b: &mut Builder) -> Result<()> {
    let (worst, ratios) = invariant_suite(p.int("profiles"), p.int("max-support"), p.depth(), seed)?;
    b.table = Table::new(&["profile", "norm_over_mass"]);
    for (i, x) in ratios.iter().enumerate() {
        b.table.push(&[i as f64, *x]);
    }
    b.step("invariant", &[("profiles", ratios.len() as f64), ("max_norm_over_mass", worst)]);
    b.check("‖T_full‖ ≤ bound·‖μ‖", "invariant/max_norm_over_mass", Relation::Le, p.float("bound"), 0.0);
    Ok(())
}

/// Random leaf-and-node measures on binary trees of depth ≤ `max_depth`, scaled to simple constant 1.
pub fn normalized_binary_measures(count: usize, max_depth: u32, seed: u64) -> Vec<(Tree, TreeMeasure)> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let tree = Tree::binary(r.random_range(2..=max_depth));
        let mut w = vec![0.0; tree.len()];
        for l in tree.leaves() {
            if r.random::<f64>() < 0.5 {
                w[l] = r.random::<f64>();
            }
        }
        if out.len() % 3 == 0 {
            for x in w.iter_mut() {
                if r.random::<f64>() < 0.05 {
                    *x += r.random::<f64>();
                }
            }
        }
        let mu = TreeMeasure::new(&tree, w).expect("nonnegative weights");
        let s = simple_condition(&tree, &mu, 0.5).constant;
        if s > 0.0 {
            out.push((tree, mu.scaled(1.0 / s)));
        }
    }
    out
}

fn cantor(p: &Resolved, seed: u64, b: &mut Builder) -> Result<()> {
    let rs = p.list("rs");
    let weights = p.list("weights");
    let (mut k, mut smin, mut smax) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for (tree, mu) in normalized_binary_measures(p.int("measures"), p.depth(), seed) {
        let t = simple_suffices_suite(&tree, &mu, &rs, NormMethod::Dense)?;
        k = k.max(t.k);
        smin = smin.min(t.slope);
        smax = smax.max(t.slope);
    }
    if p.int("measures") == 0 {
        smax = 0.0;
    }
    b.table = Table::new(&["depth", "simple", "norm_big", "norm_small_1"]);
    let mut rows = Vec::new();
    for d in p.list("depths") {
        let (tree, mu) = cantor_measure(d as u32, &weights)?;
        let s = simple_condition(&tree, &mu, 0.5).constant;
        let norm = |kind| -> Result<f64> {
            Ok(operator_norm(&TreeOperator::new(kind, &tree)?, &mu, NormMethod::Dense, PowerOptions::default())?.value)
        };
        let row = [d, s, norm(OperatorKind::TBig)?, norm(OperatorKind::TSmall(1.0))?];
        b.table.push(&row);
        rows.push(row);
    }
    let first = rows.first().copied().unwrap_or([0.0; 4]);
    let last = rows.last().copied().unwrap_or([0.0; 4]);
    let monotone = rows.windows(2).all(|w| w[1][2] > w[0][2]);
    b.step("suite", &[("k", k), ("min_slope", smin), ("max_slope", smax)]);
    b.step(
        "cantor",
        &[
            ("max_simple", rows.iter().map(|r| r[1]).fold(0.0, f64::max)),
            ("big_growth", last[2] / first[2]),
            ("big_monotone", if monotone { 1.0 } else { 0.0 }),
            ("small_growth", last[3] / first[3]),
        ],
    );
    b.check("r‖T_small(r)‖ ≤ K", "suite/k", Relation::Le, p.float("k-bound"), 0.0);
    b.check("slope ≥ −1.2", "suite/min_slope", Relation::Ge, -1.2, 0.0);
    b.check("slope ≤ 0", "suite/max_slope", Relation::Le, 0.0, 1e-9);
    b.check("Cantor simple constant is 1", "cantor/max_simple", Relation::Le, 1.0, 1e-12);
    b.check("T_big diverges with depth", "cantor/big_growth", Relation::Ge, p.float("blowup"), 0.0);
    b.check("T_big increases at every depth", "cantor/big_monotone", Relation::Eq, 1.0, 0.0);
    b.check("T_small(1) stays bounded", "cantor/small_growth", Relation::Le, p.float("bounded"), 0.0);
    Ok(())
}

/// `‖f‖_∞ + √(simple constant) + √(split constant)` of the multiplier measure of `f`.
pub fn von_neumann_estimate(
    f: &Polynomial,
    m: u32,
    depth: u32,
    samples: usize,
    sphere: usize,
    seed: u64,
) -> Result<[f64; 4]> {
    let mu = multiplier_measure(f, m, samples, seed)?;
    let (mu, _) = within_depth(&mu, depth);
    let bt = BergmanTree::closure_of_points(geometry(f.n, depth)?, mu.points())?;
    let tm = discretize(&mu, &bt)?;
    let simple = simple_condition(bt.tree(), &tm, 0.5).constant.sqrt();
    let split = split_tree_condition(&bt, &tm, SplitOptions::default()).constant.sqrt();
    let mut sp = SpherePoints::new(f.n, seed);
    let sup = (0..sphere).map(|_| f.eval(&sp.next_point()).norm()).fold(0.0, f64::max);
    Ok([sup, simple, split, sup + simple + split])
}

fn von_neumann(p: &Resolved, seed: u64, b: &mut Builder) -> Result<()> {
    let n = p.int("n");
    let m = p.int("m") as u32;
    let one = Complex64::new(1.0, 0.0);
    let mut polys = vec![("z1", Polynomial::coordinate(n, 0))];
    let mut sq = vec![0u32; n];
    sq[0] = 2;
    polys.push(("z1^2", Polynomial::new(n, vec![(sq, one)])?));
    if n > 1 {
        let mut e = vec![0u32; n];
        e[0] = 1;
        e[1] = 1;
        polys.push(("z1*z2", Polynomial::new(n, vec![(e, one)])?));
    }
    let doubled = Polynomial::new(n, polys[0].1.terms.iter().map(|(e, c)| (e.clone(), c * 2.0)).collect())?;
    b.table = Table::new(&["polynomial", "sup", "simple", "split", "estimate"]);
    let mut worst_ratio = f64::INFINITY;
    let mut base = 0.0;
    for (i, (_, f)) in polys.iter().enumerate() {
        let e = von_neumann_estimate(f, m, p.depth(), p.int("samples"), p.int("sphere"), seed)?;
        b.table.push(&[i as f64, e[0], e[1], e[2], e[3]]);
        worst_ratio = worst_ratio.min(e[3] / e[0]);
        if i == 0 {
            base = e[3];
        }
    }
    let twice = von_neumann_estimate(&doubled, m, p.depth(), p.int("samples"), p.int("sphere"), seed)?[3];
    b.step("estimate", &[("min_estimate_over_sup", worst_ratio), ("homogeneity_defect", (twice - 2.0 * base).abs() / base)]);
    b.check("estimate dominates the sup norm", "estimate/min_estimate_over_sup", Relation::Ge, 1.0, 0.0);
    b.check("estimate is homogeneous", "estimate/homogeneity_defect", Relation::Le, 0.0, 1e-9);
    Ok(())
}

fn interpolation(p: &Resolved, seed: u64, b: &mut Builder) -> Result<()> {
    let sigma = p.float("sigma");
    b.table = Table::new(&["points", "separation", "gram_norm", "abs_gram_norm", "tree_constant", "oracle"]);
    let mut max_off = 0.0f64;
    let mut min_gram = f64::INFINITY;
    for count in 1..=p.depth() as i32 {
        let pts: Vec<Vec<Complex64>> = (1..=count).map(|j| vec![Complex64::new(1.0 - 2f64.powi(-j), 0.0)]).collect();
        let g = gram_interpolation_test(&pts, sigma)?;
        b.table.push(&[count as f64, g.separation, g.gram_norm, g.abs_gram_norm, g.tree_constant, g.oracle]);
        max_off = max_off.max(g.max_offdiagonal);
        min_gram = min_gram.min(g.gram_norm);
    }
    let geometric = gram_interpolation_test(
        &(1..=p.depth() as i32).map(|j| vec![Complex64::new(1.0 - 2f64.powi(-j), 0.0)]).collect::<Vec<_>>(),
        sigma,
    )?;
    let n = p.int("n");
    let mut r = rng(seed);
    let mut pts: Vec<Vec<Complex64>> = Vec::new();
    while pts.len() < p.int("points") {
        let level = r.random_range(1..=p.depth().min(8));
        let z = ball::scale(&random_direction(n, &mut r), Complex64::new(inner_radius(level) + 1e-3, 0.0));
        if pts.iter().all(|w| ball::bergman_metric(w, &z).map(|d| d > 0.5).unwrap_or(false)) {
            pts.push(z);
        }
    }
    let random = gram_interpolation_test(&pts, sigma)?;
    b.step(
        "geometric",
        &[
            ("separation", geometric.separation),
            ("gram_norm", geometric.gram_norm),
            ("tree_constant", geometric.tree_constant),
            ("max_offdiagonal", max_off),
            ("min_gram_norm", min_gram),
        ],
    );
    b.step(
        "random",
        &[
            ("separation", random.separation),
            ("gram_norm", random.gram_norm),
            ("abs_gram_norm", random.abs_gram_norm),
            ("tree_constant", random.tree_constant),
            ("oracle", random.oracle),
        ],
    );
    b.check("geometric sequence is separated", "geometric/separation", Relation::Ge, f64::MIN_POSITIVE, 0.0);
    b.check("off-diagonal Gram entries below 1", "geometric/max_offdiagonal", Relation::Le, 1.0, -f64::EPSILON);
    b.check("Gram norm at least 1", "geometric/min_gram_norm", Relation::Ge, 1.0, 1e-12);
    b.check("random sequence is separated", "random/separation", Relation::Ge, 0.5, 0.0);
    Ok(())
}

/// `(max testing/norm², max norm²/testing)` over random two-weight instances.
pub fn two_weight_instances(trees: usize, max_nodes: usize, seed: u64) -> Result<(f64, f64)> {
    let mut r = rng(seed);
    let (mut lower, mut upper) = (0.0f64, 0.0f64);
    for _ in 0..trees {
        let len = r.random_range(2..=max_nodes);
        let tree = Tree::random(len, &mut r);
        let mut weight = |p_zero: f64| -> Vec<f64> {
            (0..len)
                .map(|_| if r.random::<f64>() < p_zero { 0.0 } else { (r.random_range(-6.0..6.0f64)).exp2() })
                .collect()
        };
        let w = TreeMeasure::new(&tree, weight(0.3))?;
        let v = TreeMeasure::new(&tree, weight(0.0))?;
        let norm = two_weight::embedding_norm(&tree, &w, &v, 2000)?;
        let testing = two_weight::tree_condition(&tree, &w, &v).constant;
        let n2 = norm * norm;
        if testing > 0.0 {
            lower = lower.max(testing / n2);
            upper = upper.max(n2 / testing);
        }
    }
    Ok((lower, upper))
}

fn two_weight_suite(p: &Resolved, seed: u64, b: &mut Builder) -> Result<()> {
    let (lower, upper) = two_weight_instances(p.int("trees"), p.int("max-nodes"), seed)?;
    b.step("suite", &[("max_testing_over_norm2", lower), ("max_norm2_over_testing", upper)]);
    b.check("testing ≤ norm²", "suite/max_testing_over_norm2", Relation::Le, 1.0, p.float("tol"));
    b.check("norm² ≤ K·testing", "suite/max_norm2_over_testing", Relation::Le, p.float("k-bound"), 0.0);
    Ok(())
}

/// Atoms spread evenly on the circles `|z| = 1 − 2^{−j}`, `j ≤ depth`, with level mass `decay^j`.
pub fn level_measure_disk(depth: u32, decay: f64) -> Result<AtomicMeasure> {
    let mut atoms = Vec::new();
    for j in 1..=depth {
        let count = 1usize << j;
        let r = 1.0 - 2f64.powi(-(j as i32));
        let shift = if j % 2 == 1 { 0.5 } else { 0.0 };
        for i in 0..count {
            let z = Complex64::from_polar(r, 2.0 * PI * (i as f64 + shift) / count as f64);
            atoms.push((vec![z], decay.powi(j as i32) / count as f64));
        }
    }
    AtomicMeasure::new(1, atoms)
}

fn potential(p: &Resolved, b: &mut Builder) -> Result<()> {
    let sigma = p.float("sigma");
    let alphas = p.list("alphas");
    let quad = PotentialQuadrature {
        panels: p.int("panels") as u32,
        order: p.int("order"),
        sphere: p.int("sphere"),
        seed: 7,
    };
    let z = 0.75;
    let mut closed = 0.0f64;
    for &alpha in alphas.iter().take(3) {
        let g = potential_gram(&[vec![Complex64::new(z, 0.0)]], 1, sigma, alpha, quad)?;
        let exact = potential_single_atom_disk(z, sigma, alpha);
        closed = closed.max((g[(0, 0)] - exact).abs() / exact);
    }
    let mut cols = vec!["depth".to_string()];
    for a in &alphas {
        cols.push(format!("good_{a}"));
        cols.push(format!("bad_{a}"));
    }
    b.table = Table {
        columns: cols,
        rows: Vec::new(),
    };
    let (mut spread, mut good_first, mut good_last, mut bad_first, mut bad_last) = (1.0f64, vec![], vec![], vec![], vec![]);
    for d in 2..=p.depth() {
        let good = potential_operator_check(&level_measure_disk(d, 0.5)?, sigma, &alphas, quad)?;
        let bad = potential_operator_check(&level_measure_disk(d, 1.0)?, sigma, &alphas, quad)?;
        spread = spread.max(good.spread);
        let mut row = vec![d as f64];
        for (g, x) in good.rows.iter().zip(&bad.rows) {
            row.push(g.constant);
            row.push(x.constant);
        }
        b.table.push(&row);
        if d == 2 {
            good_first = good.rows.iter().map(|r| r.constant).collect();
            bad_first = bad.rows.iter().map(|r| r.constant).collect();
        }
        good_last = good.rows.iter().map(|r| r.constant).collect();
        bad_last = bad.rows.iter().map(|r| r.constant).collect();
    }
    let bad_growth = bad_last.iter().zip(&bad_first).map(|(a, b)| a / b).fold(f64::INFINITY, f64::min);
    let good_growth = good_last.iter().zip(&good_first).map(|(a, b)| a / b).fold(0.0, f64::max);
    let zero = potential_operator_check(&AtomicMeasure::empty(1), sigma, &alphas, quad)?;
    b.step(
        "potential",
        &[
            ("single_atom_error", closed),
            ("good_spread", spread),
            ("good_growth", good_growth),
            ("bad_growth", bad_growth),
            ("zero_measure", zero.rows.iter().map(|r| r.constant).sum()),
        ],
    );
    b.check("single-atom closed form", "potential/single_atom_error", Relation::Le, 1e-6, 0.0);
    b.check("(1+α)C_α² stable across α", "potential/good_spread", Relation::Le, p.float("spread"), 0.0);
    b.check("failing measure grows for every α", "potential/bad_growth", Relation::Ge, p.float("growth"), 0.0);
    b.check("zero measure gives 0", "potential/zero_measure", Relation::Eq, 0.0, 0.0);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Writes `<scenario>.json` and/or `<scenario>.csv` into `dir`.
pub fn emit_report(report: &RunReport, dir: &Path, formats: &[Format]) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for f in formats {
        let (ext, text) = match f {
            Format::Json => ("json", report.to_json()),
            Format::Csv => ("csv", report.table.to_csv()),
        };
        let path = dir.join(format!("{}.{ext}", report.scenario));
        std::fs::write(&path, text)?;
        out.push(path);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub path: String,
    pub a: String,
    pub b: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDiff {
    pub entries: Vec<DiffEntry>,
    pub pass: bool,
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    if a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()) {
        return true;
    }
    let scale = a.abs().max(b.abs());
    scale.is_finite() && (a - b).abs() <= tol * scale
}

/// Field-wise relative comparison; wall-clock time is ignored.
pub fn compare_runs(a: &RunReport, b: &RunReport, tol: f64) -> RunDiff {
    let mut entries = Vec::new();
    let mut diff = |path: String, x: String, y: String| entries.push(DiffEntry { path, a: x, b: y });
    if a.scenario != b.scenario {
        diff("scenario".into(), a.scenario.to_string(), b.scenario.to_string());
    }
    if a.depth != b.depth {
        diff("depth".into(), a.depth.to_string(), b.depth.to_string());
    }
    if a.params != b.params {
        diff("params".into(), format!("{:?}", a.params), format!("{:?}", b.params));
    }
    let mut nums = |path: String, x: Option<Num>, y: Option<Num>| match (x, y) {
        (Some(x), Some(y)) if close(x.get(), y.get(), tol) => {}
        (x, y) => diff(
            path,
            x.map_or("missing".into(), |v| v.to_string()),
            y.map_or("missing".into(), |v| v.to_string()),
        ),
    };
    let step_names: std::collections::BTreeSet<&str> = a.steps.iter().chain(&b.steps).map(|s| s.name.as_str()).collect();
    for name in step_names {
        let sa = a.steps.iter().find(|s| s.name == name);
        let sb = b.steps.iter().find(|s| s.name == name);
        let keys: std::collections::BTreeSet<&String> =
            sa.iter().chain(sb.iter()).flat_map(|s| s.values.keys()).collect();
        for key in keys {
            nums(
                format!("steps.{name}.{key}"),
                sa.and_then(|s| s.values.get(key)).copied(),
                sb.and_then(|s| s.values.get(key)).copied(),
            );
        }
    }
    let rows = a.table.rows.len().max(b.table.rows.len());
    for i in 0..rows {
        for (j, col) in a.table.columns.iter().enumerate() {
            nums(
                format!("table[{i}].{col}"),
                a.table.rows.get(i).and_then(|r| r.get(j)).copied(),
                b.table.rows.get(i).and_then(|r| r.get(j)).copied(),
            );
        }
    }
    for (va, vb) in a.verdicts.iter().zip(&b.verdicts) {
        if va.pass != vb.pass {
            diff(format!("verdicts.{}", va.name), va.pass.to_string(), vb.pass.to_string());
        }
    }
    if a.verdicts.len() != b.verdicts.len() {
        diff("verdicts".into(), a.verdicts.len().to_string(), b.verdicts.len().to_string());
    }
    let pass = entries.is_empty();
    RunDiff { entries, pass }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round12_keeps_twelve_digits() {
        assert_eq!(round12(1.0 / 3.0), 0.333333333333);
        assert_eq!(round12(f64::INFINITY), f64::INFINITY);
        assert_eq!(round12(0.0), 0.0);
        assert_eq!(round12(-123456.7890123456), -123456.789012);
    }

    #[test]
    fn num_json_round_trip() {
        for x in [1.5, f64::INFINITY, f64::NEG_INFINITY] {
            let s = serde_json::to_string(&Num::new(x)).unwrap();
            let back: Num = serde_json::from_str(&s).unwrap();
            assert_eq!(back, Num::new(x));
        }
    }

    #[test]
    fn schema_errors_name_the_field() {
        let e = ScenarioSpec::new(Scenario::RingDomain).param("L", "0.5").validate().unwrap_err();
        assert!(e.to_string().contains("params.L"), "{e}");
        let e = ScenarioSpec::new(Scenario::RingDomain).param("bogus", "1").validate().unwrap_err();
        assert!(e.to_string().contains("params.bogus"), "{e}");
        let e = ScenarioSpec::new(Scenario::PowerMeasure).param("depths", "9..3").validate().unwrap_err();
        assert!(e.to_string().contains("params.depths"), "{e}");
        let e = ScenarioSpec::new(Scenario::SliceVacuous).depth(40).validate().unwrap_err();
        assert!(e.to_string().contains("depth"), "{e}");
        assert!("no-such".parse::<Scenario>().is_err());
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
            ScenarioSpec::new(s).validate().unwrap();
        }
    }

    #[test]
    fn ring_domain_scenario_passes() {
        let spec = ScenarioSpec::new(Scenario::RingDomain).param("pairs", 200);
        let r = run_scenario(&spec).unwrap();
        assert!(r.pass, "{:#?}", r.verdicts);
        assert!(r.audit());
        assert_eq!(r.table.rows.len(), 41);
    }

    #[test]
    fn power_measure_smoke_case_is_zero() {
        let spec = ScenarioSpec::new(Scenario::PowerMeasure).param("depths", "2..6").param("scale", 0).depth(6);
        let r = run_scenario(&spec).unwrap();
        assert!(r.pass);
        assert_eq!(r.table.rows.len(), 5);
        assert_eq!(r.value("smoke/sum_of_constants"), Some(0.0));
    }

    #[test]
    fn resource_refusal() {
        let spec = ScenarioSpec {
            max_nodes: Some(10),
            ..ScenarioSpec::new(Scenario::PowerMeasure)
        };
        assert!(matches!(run_scenario(&spec), Err(Error::Resource { .. })));
    }

    #[test]
    fn compare_self_and_tampered() {
        let r = run_scenario(&ScenarioSpec::new(Scenario::RingDomain).param("pairs", 50)).unwrap();
        assert!(compare_runs(&r, &r, 0.0).pass);
        let mut t = r.clone();
        t.steps[0].values.insert("max_h2_error".into(), Num::new(1.0));
        let d = compare_runs(&r, &t, 1e-3);
        assert!(!d.pass && d.entries[0].path == "steps.ring.max_h2_error");
        assert!(!t.audit());
        assert!(RunReport::from_json(&t.to_json()).is_err());
        assert_eq!(RunReport::from_json(&r.to_json()).unwrap(), r);
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use carleson_core::bergman::{estimate_full_nodes, BergmanGeometry, BergmanTree, BergmanTreeFile, DStarMode, NetOptions};
use carleson_core::conditions::{
    epsilon_split_condition, simple_condition, split_tail_condition, split_tree_condition, tree_condition, SplitOptions,
};
use carleson_core::kernels::{kernel_oracle_report, KernelFamily, KernelSpec, KernelVariant};
use carleson_core::linalg::PowerOptions;
use carleson_core::measures::{discretize, AtomicMeasure};
use carleson_core::operators::{operator_norm, NormMethod, OperatorKind, TreeOperator};
use carleson_core::repro::{compare_runs, emit_report, run_scenario, Format, RunReport, Scenario, ScenarioSpec};
use carleson_core::{Error, TreeMeasure};
use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

const CACHE_ENV: &str = "CARLESON_LAB_CACHE";

#[derive(Parser, Debug)]
#[command(name = "carleson-lab", version, about = "Discrete Carleson-measure experiments")]
struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for output files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Refuse any construction whose node estimate exceeds this.
    #[arg(long, global = true)]
    max_nodes: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Json)]
    format: OutFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum OperatorArg {
    Tfull,
    Tbig,
    Tsmall,
    Frac,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Dense,
    Power,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ConditionArg {
    Simple,
    Tree,
    Split,
    EpsSplit,
    SplitTail,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Re,
    Modulus,
    Full,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a Bergman tree: the full tree, or the closure of a measure's atoms.
    BuildTree {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long)]
        depth: u32,
        #[arg(long)]
        measure: Option<PathBuf>,
    },
    /// Push an atomic measure onto a tree.
    Discretize {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long)]
        tree: PathBuf,
    },
    /// Evaluate a testing condition.
    Check {
        #[arg(long, value_enum, default_value_t = ConditionArg::Tree)]
        condition: ConditionArg,
        #[arg(long)]
        measure: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, default_value_t = 0.2)]
        eps: f64,
        /// Exit with status 1 when the constant exceeds this.
        #[arg(long)]
        bound: Option<f64>,
    },
    /// Operator norm of a tree operator on L²(μ).
    Norm {
        #[arg(long, value_enum)]
        operator: OperatorArg,
        #[arg(long)]
        measure: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        /// Parameter r of the small operator.
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Dense)]
        method: MethodArg,
    },
    /// Exact Carleson constant of an atomic measure for a kernel.
    Oracle {
        /// bs:σ, da, ring:L, np:FILE or pot:σ,α.
        #[arg(long)]
        kernel: String,
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, value_enum, default_value_t = VariantArg::Full)]
        variant: VariantArg,
    },
    /// Run a scenario (or `all`, or a comma-separated list) and check its verdicts.
    ///
    /// Scenario parameters follow as `--name value`, for example `--L 2 --nmax 20`.
    Repro {
        scenario: String,
        #[arg(long)]
        depth: Option<u32>,
        /// Worker threads for a list of scenarios.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Ignore cached reports.
        #[arg(long)]
        no_cache: bool,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "PARAMS")]
        params: Vec<String>,
    },
    /// Field-wise relative comparison of two run reports.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
    },
    /// List scenarios and their parameters.
    Scenarios,
}

/// Failure kinds mapped to exit statuses.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Resource(anyhow::Error),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Failure {
        match e.downcast_ref::<Error>() {
            Some(Error::Resource { .. }) => Failure::Resource(e),
            Some(Error::Invalid(_) | Error::Domain(_) | Error::OutOfRange(_) | Error::Structure(_)) => Failure::Usage(e),
            _ => Failure::Other(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure::from(anyhow::Error::new(e))
    }
}

fn usage(msg: String) -> Failure {
    Failure::Usage(anyhow!(msg))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_measure(path: &Path) -> Result<AtomicMeasure, Failure> {
    AtomicMeasure::from_json(&read_text(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_tree(path: &Path) -> Result<BergmanTree, Failure> {
    let file: BergmanTreeFile =
        serde_json::from_str(&read_text(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    BergmanTree::from_file(&file).map_err(|e| usage(format!("{}: {e}", path.display())))
}

struct Ctx {
    seed: u64,
    out: Option<PathBuf>,
    max_nodes: u64,
    format: OutFormat,
}

impl Ctx {
    /// Prints `text` and, with `--out`, also writes it to `name`.
    fn emit(&self, name: &str, text: &str) -> Result<(), Failure> {
        if let Some(dir) = &self.out {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(name);
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        say(text.trim_end());
        Ok(())
    }

    fn ext(&self) -> &'static str {
        match self.format {
            OutFormat::Json => "json",
            OutFormat::Csv => "csv",
        }
    }
}

/// Writes a line to stdout; a closed pipe is not an error.
fn say(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn json<T: serde::Serialize>(x: &T) -> String {
    serde_json::to_string_pretty(x).expect("output serializes")
}

fn parse_kernel(text: &str, variant: VariantArg) -> Result<KernelSpec, Failure> {
    let bad = |msg: &str| usage(format!("kernel: {msg} in {text:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("expected a number"));
    let (name, arg) = text.split_once(':').unwrap_or((text, ""));
    let family = match name {
        "da" => KernelFamily::DruryArveson,
        "bs" => KernelFamily::BesovSobolev { sigma: num(arg)? },
        "ring" => KernelFamily::RingDomain { l: num(arg)? },
        "pot" => {
            let (s, a) = arg.split_once(',').ok_or_else(|| bad("expected pot:σ,α"))?;
            KernelFamily::Potential { sigma: num(s)?, alpha: num(a)? }
        }
        "np" => {
            #[derive(serde::Deserialize)]
            struct NpFile {
                sigma: f64,
                truncation: usize,
            }
            let f: NpFile = serde_json::from_str(&read_text(Path::new(arg))?)
                .map_err(|e| usage(format!("kernel: {arg}: {e}")))?;
            KernelFamily::NpPullback {
                sigma: f.sigma,
                truncation: f.truncation,
            }
        }
        _ => return Err(bad("unknown kernel family")),
    };
    let variant = match variant {
        VariantArg::Re => KernelVariant::Re,
        VariantArg::Modulus => KernelVariant::Modulus,
        VariantArg::Full => KernelVariant::FullComplex,
    };
    Ok(KernelSpec::new(family, variant))
}

/// Splits `--name value` pairs; `--name=value` is accepted too.
fn parse_params(raw: &[String]) -> Result<Vec<(String, String)>, Failure> {
    let mut out = Vec::new();
    let mut it = raw.iter();
    while let Some(flag) = it.next() {
        let Some(name) = flag.strip_prefix("--") else {
            return Err(usage(format!("params: expected --name value, found {flag:?}")));
        };
        let (name, value) = match name.split_once('=') {
            Some((n, v)) => (n.to_string(), v.to_string()),
            None if name == "no-cache" => (name.to_string(), "true".to_string()),
            None => {
                let v = it.next().ok_or_else(|| usage(format!("params.{name}: missing value")))?;
                (name.to_string(), v.clone())
            }
        };
        out.push((name, value));
    }
    Ok(out)
}

fn cache_path(spec: &ScenarioSpec) -> Option<PathBuf> {
    let dir = std::env::var_os(CACHE_ENV)?;
    let key = Sha256::digest(serde_json::to_vec(spec).expect("spec serializes"));
    let hex: String = key.iter().take(12).map(|b| format!("{b:02x}")).collect();
    Some(PathBuf::from(dir).join(format!("{}-{hex}.json", spec.scenario)))
}

fn run_cached(spec: &ScenarioSpec, use_cache: bool) -> Result<(RunReport, bool), Error> {
    let path = if use_cache { cache_path(spec) } else { None };
    if let Some(p) = &path {
        if let Ok(text) = std::fs::read_to_string(p) {
            if let Ok(r) = RunReport::from_json(&text) {
                return Ok((r, true));
            }
        }
    }
    let report = run_scenario(spec)?;
    if let Some(p) = &path {
        if let Some(dir) = p.parent() {
            let _ = std::fs::create_dir_all(dir);
        }
        let _ = std::fs::write(p, report.to_json());
    }
    Ok((report, false))
}

fn print_verdicts(r: &RunReport, cached: bool) {
    for v in &r.verdicts {
        eprintln!(
            "{} {}: {} = {} ({:?} {} ± {})",
            if v.pass { "PASS" } else { "FAIL" },
            r.scenario,
            v.name,
            v.value,
            v.relation,
            v.threshold,
            v.tolerance
        );
    }
    for w in &r.warnings {
        eprintln!("warning {}: {w}", r.scenario);
    }
    eprintln!(
        "{} {} in {:.3}s{}",
        if r.pass { "PASS" } else { "FAIL" },
        r.scenario,
        r.wall_clock_s,
        if cached { " (cached)" } else { "" }
    );
}

fn parse_flag<T: std::str::FromStr>(name: &str, v: &str) -> Result<T, Failure> {
    v.parse().map_err(|_| usage(format!("{name}: cannot parse {v:?}")))
}

fn repro(
    ctx: &Ctx,
    scenario: &str,
    depth: Option<u32>,
    jobs: usize,
    no_cache: bool,
    params: &[String],
) -> Result<bool, Failure> {
    let scenarios: Vec<Scenario> = if scenario == "all" {
        Scenario::ALL.to_vec()
    } else {
        scenario.split(',').map(|s| s.parse::<Scenario>()).collect::<Result<_, _>>()?
    };
    // Flags that follow the scenario parameters land in `params`.
    let mut ctx = Ctx { out: ctx.out.clone(), ..*ctx };
    let (mut depth, mut jobs, mut no_cache) = (depth, jobs, no_cache);
    let mut scenario_params = Vec::new();
    for (k, v) in parse_params(params)? {
        match k.as_str() {
            "depth" => depth = Some(parse_flag(&k, &v)?),
            "jobs" => jobs = parse_flag(&k, &v)?,
            "no-cache" => no_cache = parse_flag(&k, &v)?,
            "seed" => ctx.seed = parse_flag(&k, &v)?,
            "max-nodes" => ctx.max_nodes = parse_flag(&k, &v)?,
            "out" => ctx.out = Some(PathBuf::from(v)),
            "format" => {
                ctx.format = OutFormat::from_str(&v, true).map_err(|_| usage(format!("format: unknown value {v:?}")))?
            }
            _ => scenario_params.push((k, v)),
        }
    }
    let ctx = &ctx;
    let mut specs = Vec::new();
    for &s in &scenarios {
        let mut spec = ScenarioSpec::new(s).seed(ctx.seed);
        spec.max_nodes = Some(ctx.max_nodes);
        for (k, v) in &scenario_params {
            if scenarios.len() > 1 {
                return Err(usage(format!("params.{k}: parameters need a single scenario")));
            } else {
                spec = spec.param(k, v);
            }
        }
        spec.depth = depth;
        // Validation and the resource check happen before anything runs.
        carleson_core::repro::estimate_nodes(&spec).and_then(|est| {
            if est > ctx.max_nodes {
                Err(Error::Resource {
                    what: format!("scenario {s}"),
                    estimate: est,
                    cap: ctx.max_nodes,
                })
            } else {
                Ok(())
            }
        })?;
        specs.push(spec);
    }
    let jobs = jobs.clamp(1, specs.len().max(1));
    let mut results: Vec<Option<Result<(RunReport, bool), Error>>> = (0..specs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<Vec<usize>> = (0..jobs).map(|j| (j..specs.len()).step_by(jobs).collect()).collect();
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|idx| {
                let specs = &specs;
                scope.spawn(move || idx.into_iter().map(|i| (i, run_cached(&specs[i], !no_cache))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    let mut all_pass = true;
    for r in results {
        let (report, cached) = r.expect("every scenario ran")?;
        print_verdicts(&report, cached);
        all_pass &= report.pass;
        if let Some(dir) = &ctx.out {
            emit_report(&report, dir, &[Format::Json, Format::Csv]).with_context(|| format!("writing to {}", dir.display()))?;
        }
        if specs.len() == 1 {
            match ctx.format {
                OutFormat::Json => say(&report.to_json()),
                OutFormat::Csv => say(report.table.to_csv().trim_end()),
            }
        } else {
            say(&format!("{} {}", if report.pass { "PASS" } else { "FAIL" }, report.scenario));
        }
    }
    Ok(all_pass)
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let ctx = Ctx {
        seed: cli.seed,
        out: cli.out,
        max_nodes: cli.max_nodes.unwrap_or(carleson_core::bergman::DEFAULT_MAX_NODES),
        format: cli.format,
    };
    match cli.command {
        Command::BuildTree { n, depth, measure } => {
            let opts = NetOptions::default();
            let bt = match measure {
                None => {
                    let est = estimate_full_nodes(n, depth, opts)?;
                    if est > ctx.max_nodes {
                        return Err(Error::Resource {
                            what: format!("full tree n = {n}, depth = {depth}"),
                            estimate: est,
                            cap: ctx.max_nodes,
                        }
                        .into());
                    }
                    BergmanTree::full(Arc::new(BergmanGeometry::build(n, depth, opts)?), ctx.max_nodes)?
                }
                Some(path) => {
                    let mu = load_measure(&path)?;
                    if mu.dim() != n {
                        return Err(usage(format!("measure: dimension {} but --n {n}", mu.dim())));
                    }
                    let est = (mu.len() as u64 + 1) * (depth as u64 + 1);
                    if est > ctx.max_nodes {
                        return Err(Error::Resource {
                            what: "closure tree".into(),
                            estimate: est,
                            cap: ctx.max_nodes,
                        }
                        .into());
                    }
                    BergmanTree::closure_of_points(Arc::new(BergmanGeometry::build(n, depth, opts)?), mu.points())?
                }
            };
            let text = match ctx.format {
                OutFormat::Json => json(&bt.to_file()),
                OutFormat::Csv => {
                    let t = bt.tree();
                    let mut s = String::from("node,parent,depth,ring\n");
                    for a in 0..bt.len() {
                        let p = if a == t.root() { String::new() } else { t.parent(a).to_string() };
                        s.push_str(&format!("{a},{p},{},{}\n", t.depth(a), bt.ring_of(a)));
                    }
                    s
                }
            };
            ctx.emit(&format!("tree.{}", ctx.ext()), &text)?;
            Ok(true)
        }
        Command::Discretize { measure, tree } => {
            let bt = load_tree(&tree)?;
            let tm = discretize(&load_measure(&measure)?, &bt)?;
            ctx.emit(&format!("tree-measure.{}", ctx.ext()), &measure_text(&ctx, &bt, &tm))?;
            Ok(true)
        }
        Command::Check {
            condition,
            measure,
            tree,
            sigma,
            eps,
            bound,
        } => {
            let bt = load_tree(&tree)?;
            let tm = discretize(&load_measure(&measure)?, &bt)?;
            let opts = SplitOptions::default();
            let report = match condition {
                ConditionArg::Simple => simple_condition(bt.tree(), &tm, sigma),
                ConditionArg::Tree => tree_condition(bt.tree(), &tm, sigma),
                ConditionArg::Split => split_tree_condition(&bt, &tm, opts),
                ConditionArg::EpsSplit => epsilon_split_condition(&bt, &tm, eps, opts),
                ConditionArg::SplitTail => split_tail_condition(&bt, &tm, eps, opts),
            };
            let text = match ctx.format {
                OutFormat::Json => report.to_json(),
                OutFormat::Csv => format!(
                    "condition,constant,witness\n{},{},{}\n",
                    report.condition,
                    report.constant,
                    report.witness.map(|w| w.to_string()).unwrap_or_default()
                ),
            };
            ctx.emit(&format!("check.{}", ctx.ext()), &text)?;
            Ok(bound.is_none_or(|b| report.constant <= b))
        }
        Command::Norm {
            operator,
            measure,
            tree,
            r,
            method,
        } => {
            let bt = load_tree(&tree)?;
            let tm = discretize(&load_measure(&measure)?, &bt)?;
            let kind = match operator {
                OperatorArg::Tfull => OperatorKind::TFull(DStarMode::Analytic),
                OperatorArg::Tbig => OperatorKind::TBig,
                OperatorArg::Tsmall => OperatorKind::TSmall(r),
                OperatorArg::Frac => OperatorKind::Frac,
            };
            let method = match method {
                MethodArg::Dense => NormMethod::Dense,
                MethodArg::Power => NormMethod::Power,
            };
            let op = TreeOperator::on_bergman(kind, &bt)?;
            let est = operator_norm(&op, &tm, method, PowerOptions { seed: ctx.seed, ..PowerOptions::default() })?;
            let text = match ctx.format {
                OutFormat::Json => json(&est),
                OutFormat::Csv => format!(
                    "value,residual,iterations,converged\n{},{},{},{}\n",
                    est.value, est.residual, est.iterations, est.converged
                ),
            };
            ctx.emit(&format!("norm.{}", ctx.ext()), &text)?;
            Ok(true)
        }
        Command::Oracle { kernel, measure, variant } => {
            let spec = parse_kernel(&kernel, variant)?;
            let report = kernel_oracle_report(&load_measure(&measure)?, spec, ctx.seed)?;
            let text = match ctx.format {
                OutFormat::Json => json(&report),
                OutFormat::Csv => format!(
                    "value,method,residual,seed\n{},{},{},{}\n",
                    report.value, report.method, report.residual, report.seed
                ),
            };
            ctx.emit(&format!("oracle.{}", ctx.ext()), &text)?;
            Ok(true)
        }
        Command::Repro {
            scenario,
            depth,
            jobs,
            no_cache,
            params,
        } => repro(&ctx, &scenario, depth, jobs, no_cache, &params),
        Command::Compare { a, b, tol } => {
            let load = |p: &Path| -> Result<RunReport, Failure> {
                RunReport::from_json(&read_text(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))
            };
            let diff = compare_runs(&load(&a)?, &load(&b)?, tol);
            let text = match ctx.format {
                OutFormat::Json => json(&diff),
                OutFormat::Csv => {
                    let mut s = String::from("path,a,b\n");
                    for e in &diff.entries {
                        s.push_str(&format!("{},{},{}\n", e.path, e.a, e.b));
                    }
                    s
                }
            };
            ctx.emit(&format!("compare.{}", ctx.ext()), &text)?;
            eprintln!("{}", if diff.pass { "PASS" } else { "FAIL" });
            Ok(diff.pass)
        }
        Command::Scenarios => {
            for s in Scenario::ALL {
                let (d, lo, hi) = s.depth_range();
                say(&format!("{s} (depth {d}, {lo}..={hi})"));
                for p in s.schema() {
                    say(&format!("  --{} {}  {}", p.name, p.default, p.help));
                }
            }
            Ok(true)
        }
    }
}

fn measure_text(ctx: &Ctx, bt: &BergmanTree, tm: &TreeMeasure) -> String {
    let t = bt.tree();
    match ctx.format {
        OutFormat::Json => json(&serde_json::json!({
            "weights": tm.weights(),
            "total": tm.total(t),
        })),
        OutFormat::Csv => {
            let mut s = String::from("node,depth,weight,istar\n");
            for a in 0..bt.len() {
                s.push_str(&format!("{a},{},{},{}\n", t.depth(a), tm.weights()[a], tm.istar(a)));
            }
            s
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("usage error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Resource(e)) => {
            eprintln!("refused: {e:#}");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_split() {
        let raw: Vec<String> = ["--L", "2", "--nmax=20"].iter().map(|s| s.to_string()).collect();
        assert_eq!(parse_params(&raw).unwrap(), vec![("L".into(), "2".into()), ("nmax".into(), "20".into())]);
        assert!(parse_params(&["--L".to_string()]).is_err());
        assert!(parse_params(&["L".to_string()]).is_err());
    }

    #[test]
    fn kernel_specs() {
        assert!(matches!(parse_kernel("bs:0.25", VariantArg::Re).unwrap().family, KernelFamily::BesovSobolev { sigma } if sigma == 0.25));
        assert!(matches!(parse_kernel("pot:0.25,1", VariantArg::Re).unwrap().family, KernelFamily::Potential { alpha, .. } if alpha == 1.0));
        assert!(parse_kernel("zz", VariantArg::Re).is_err());
        assert!(parse_kernel("ring:x", VariantArg::Re).is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}

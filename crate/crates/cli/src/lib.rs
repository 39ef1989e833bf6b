//! Command-line front end: reads a JSON config, runs one analysis and writes
//! JSON reports and CSV tables into the output directory.
//!
//! Exit codes: 0 success, 1 configuration error, 2 inconclusive numerics,
//! 3 failed precondition of the underlying result.

pub mod output;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use dwpap_core::convolution::{self, ConvolutionConfig, Convolved, Kernel};
use dwpap_core::error::{ConvolutionError, EvolutionError, SignalError, SpectralError, WeightError};
use dwpap_core::estimate::{MeanEstimate, Schedule};
use dwpap_core::evolution::{self, EvolutionProblem, SolveConfig};
use dwpap_core::signals::PAPFunction;
use dwpap_core::spectral::{self, MeanConfig, ScanConfig};
use dwpap_core::weights::{self, LimitConfig, Weight};

use output::{write_json, write_table};

#[derive(Debug, Parser)]
#[command(name = "dwpap", version, about = "Doubly-weighted means, spectra, convolutions and mild solutions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Truncation schedule as `T0,doublings`.
    #[arg(long, global = true)]
    pub schedule: Option<String>,
    /// Convergence tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Classify a weight.
    Classify,
    /// Doubly-weighted Bohr spectrum of a signal.
    Spectrum,
    /// Doubly-weighted mean or Bohr coefficient.
    Mean,
    /// Convolve a signal with a kernel, optionally checking stability.
    Convolve,
    /// Bounded mild solution of a semilinear system.
    Solve,
    /// Run a batch of the other commands.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Spectrum => "spectrum",
            Command::Mean => "mean",
            Command::Convolve => "convolve",
            Command::Solve => "solve",
            Command::Report => "report",
        }
    }
}

/// Failure carrying its exit code and a machine-readable report.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: String,
    pub message: String,
    pub details: serde_json::Value,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: 1, kind: "config".into(), message: message.into(), details: serde_json::Value::Null }
    }

    fn new(code: i32, kind: &str, message: impl ToString) -> Self {
        Self { code, kind: kind.into(), message: message.to_string(), details: serde_json::Value::Null }
    }
}

impl From<WeightError> for Failure {
    fn from(e: WeightError) -> Self {
        let code = match e {
            WeightError::InconclusiveLimit { .. } | WeightError::DivergentRatio { .. } | WeightError::QuadratureFailure(_) => 2,
            _ => 1,
        };
        Failure::new(code, "weight", e)
    }
}

impl From<SignalError> for Failure {
    fn from(e: SignalError) -> Self {
        match e {
            SignalError::Weight(w) => w.into(),
            SignalError::ConditionViolated { .. } => Failure::new(3, "signal", e),
            SignalError::NoTranslationNumberFound { .. } | SignalError::MissingFrequencies { .. } => Failure::new(2, "signal", e),
            _ => Failure::new(1, "signal", e),
        }
    }
}

impl From<SpectralError> for Failure {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Weight(w) => w.into(),
            SpectralError::Signal(s) => s.into(),
            SpectralError::PreconditionEq31Failed { .. } | SpectralError::NotInU0 { .. } => Failure::new(3, "spectral", e),
            SpectralError::ZeroLambda => Failure::new(1, "spectral", e),
            _ => Failure::new(2, "spectral", e),
        }
    }
}

impl From<ConvolutionError> for Failure {
    fn from(e: ConvolutionError) -> Self {
        match e {
            ConvolutionError::Weight(w) => w.into(),
            ConvolutionError::Signal(s) => s.into(),
            ConvolutionError::Spectral(s) => s.into(),
            ConvolutionError::PreconditionFailed { condition } => {
                let mut f = Failure::new(3, "convolution", &e);
                f.details = serde_json::json!({ "condition": condition });
                f
            }
            _ => Failure::new(1, "convolution", e),
        }
    }
}

impl From<EvolutionError> for Failure {
    fn from(e: EvolutionError) -> Self {
        let mut f = match e {
            EvolutionError::InvalidProblem(_) => Failure::new(1, "evolution", &e),
            EvolutionError::DichotomyViolated { .. } | EvolutionError::NotAContraction { .. } | EvolutionError::PreconditionFailed(_) => {
                Failure::new(3, "evolution", &e)
            }
            _ => Failure::new(2, "evolution", &e),
        };
        if let EvolutionError::NotAContraction { k, c } = e {
            f.details = serde_json::json!({ "K": k, "C": c, "KC": k * c });
        }
        f
    }
}

type Outcome = Result<(), Failure>;

/// Command-line overrides shared by all commands.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub schedule: Option<Schedule>,
    pub tol: Option<f64>,
}

pub fn parse_schedule(s: &str) -> Result<Schedule, Failure> {
    let (a, b) = s.split_once(',').ok_or_else(|| Failure::config(format!("schedule must be T0,doublings, got {s:?}")))?;
    let t0: f64 = a.trim().parse().map_err(|_| Failure::config(format!("bad T0 {a:?}")))?;
    let d: u32 = b.trim().parse().map_err(|_| Failure::config(format!("bad doublings {b:?}")))?;
    let sch = Schedule::new(t0, d);
    sch.validate().map_err(Failure::config)?;
    Ok(sch)
}

fn read_config<T: DeserializeOwned>(value: serde_json::Value) -> Result<T, Failure> {
    serde_json::from_value(value).map_err(|e| Failure::config(format!("invalid config: {e}")))
}

fn io_fail(e: std::io::Error) -> Failure {
    Failure::config(format!("i/o error: {e}"))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifyConfig {
    weight: Weight,
    #[serde(default = "weights::default_tau_grid")]
    tau_grid: Vec<f64>,
    #[serde(default)]
    limits: LimitConfig,
}

fn classify(cfg: serde_json::Value, out: &Path, ov: Overrides) -> Outcome {
    let mut c: ClassifyConfig = read_config(cfg)?;
    if let Some(s) = ov.schedule {
        c.limits.schedule = s;
    }
    if let Some(t) = ov.tol {
        c.limits.rel_tol = t;
    }
    let report = weights::classify_weight(&c.weight, &c.tau_grid, &c.limits)?;
    write_json(&out.join("classify.json"), &report).map_err(io_fail)?;
    write_table(&out.join("classify_mass.csv"), &["T", "mass"], report.evidence.mass_trace.iter().map(|p| p.to_vec())).map_err(io_fail)
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum LambdaGrid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl LambdaGrid {
    fn values(&self) -> Result<Vec<f64>, Failure> {
        match self {
            LambdaGrid::List(v) => Ok(v.clone()),
            LambdaGrid::Range { start, stop, step } => {
                if !(*step > 0.0 && stop >= start) {
                    return Err(Failure::config("lambda range needs step > 0 and stop >= start"));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
                Ok((0..n).map(|i| start + step * i as f64).collect())
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectrumConfig {
    signal: PAPFunction,
    mu: Weight,
    nu: Weight,
    lambda_grid: LambdaGrid,
    #[serde(default)]
    scan: ScanConfig,
}

fn apply_mean_overrides(m: &mut MeanConfig, ov: Overrides) {
    if let Some(s) = ov.schedule {
        m.schedule = s;
    }
    if let Some(t) = ov.tol {
        m.tol = t;
    }
}

fn trace_rows(est: &MeanEstimate, label: f64) -> Vec<Vec<f64>> {
    est.trace
        .iter()
        .map(|p| {
            let mut row = vec![label, p.t];
            for z in &p.value {
                row.extend([z.re, z.im]);
            }
            row
        })
        .collect()
}

fn complex_header(prefix: &[&str], dim: usize) -> Vec<String> {
    let mut h: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
    for k in 1..=dim {
        h.push(format!("re{k}"));
        h.push(format!("im{k}"));
    }
    h
}

fn spectrum(cfg: serde_json::Value, out: &Path, ov: Overrides) -> Outcome {
    let mut c: SpectrumConfig = read_config(cfg)?;
    apply_mean_overrides(&mut c.scan.mean, ov);
    let grid = c.lambda_grid.values()?;
    let report = spectral::scan_spectrum(&c.signal, &c.mu, &c.nu, &grid, &c.scan)?;
    let mut rows = Vec::new();
    for line in &report.classical {
        let tr = spectral::bohr_trace(&c.signal, line.lambda, &c.scan.mean)?;
        rows.extend(trace_rows(&tr, line.lambda));
    }
    write_json(&out.join("spectrum.json"), &report).map_err(io_fail)?;
    let header = complex_header(&["lambda", "T"], c.signal.dim());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(&out.join("spectrum_traces.csv"), &header, rows).map_err(io_fail)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeanCommandConfig {
    signal: PAPFunction,
    mu: Weight,
    nu: Weight,
    #[serde(default)]
    lambda: Option<f64>,
    #[serde(default)]
    mean: MeanConfig,
}

#[derive(Debug, Serialize)]
struct MeanReport {
    lambda: Option<f64>,
    value: Vec<Complex64>,
    converged: bool,
    theta: f64,
    classical: Vec<Complex64>,
}

fn mean(cfg: serde_json::Value, out: &Path, ov: Overrides) -> Outcome {
    let mut c: MeanCommandConfig = read_config(cfg)?;
    apply_mean_overrides(&mut c.mean, ov);
    let est = match c.lambda {
        Some(l) => spectral::doubly_weighted_bohr(&c.signal, &c.mu, &c.nu, l, &c.mean)?,
        None => spectral::doubly_weighted_mean(&c.signal, &c.mu, &c.nu, &c.mean)?,
    };
    let theta = weights::theta(&c.mu, &c.nu, &LimitConfig::default())?.scalar().re;
    let classical = spectral::bohr_trace(&c.signal, c.lambda.unwrap_or(0.0), &c.mean)?.value;
    let report = MeanReport { lambda: c.lambda, value: est.value.clone(), converged: est.converged, theta, classical };
    write_json(&out.join("mean.json"), &report).map_err(io_fail)?;
    let header = complex_header(&["lambda", "T"], c.signal.dim());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(&out.join("mean_trace.csv"), &header, trace_rows(&est, c.lambda.unwrap_or(0.0))).map_err(io_fail)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    start: f64,
    step: f64,
    n: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StabilitySpec {
    mu: Weight,
    nu: Weight,
    #[serde(default)]
    mean: Option<MeanConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvolveConfig {
    signal: PAPFunction,
    kernel: Kernel,
    grid: GridSpec,
    #[serde(default)]
    convolution: ConvolutionConfig,
    #[serde(default)]
    stability: Option<StabilitySpec>,
}

#[derive(Debug, Serialize)]
struct ConvolveReport {
    l1_norm: f64,
    window: f64,
    sup: f64,
    young_bound: f64,
    stability: Option<convolution::StabilityReport>,
}

fn convolve(cfg: serde_json::Value, out: &Path, ov: Overrides) -> Outcome {
    let c: ConvolveConfig = read_config(cfg)?;
    if !(c.grid.step > 0.0 && c.grid.n > 0) {
        return Err(Failure::config("grid needs step > 0 and n > 0"));
    }
    let conv = Convolved::new(&c.signal, &c.kernel, &c.convolution)?;
    let tr = conv.sample(c.grid.start, c.grid.step, c.grid.n);
    let stability = match &c.stability {
        Some(s) => {
            let mut m = s.mean.unwrap_or_else(|| MeanConfig::new(Schedule::ending_at(1e4, 10), 1e-3));
            apply_mean_overrides(&mut m, ov);
            Some(convolution::verify_pap0_stability(&c.signal, &c.kernel, &s.mu, &s.nu, &m, &c.convolution)?)
        }
        None => None,
    };
    let report = ConvolveReport {
        l1_norm: c.kernel.l1_norm(),
        window: conv.window(),
        sup: tr.sup_norm(),
        young_bound: c.signal.sup_bound() * c.kernel.l1_norm(),
        stability,
    };
    let file = fs::File::create(out.join("convolved.csv")).map_err(io_fail)?;
    tr.write_csv(std::io::BufWriter::new(file))?;
    write_json(&out.join("convolve.json"), &report).map_err(io_fail)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PapCheckSpec {
    mu: Weight,
    nu: Weight,
    schedule: Option<Schedule>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveCommandConfig {
    problem: EvolutionProblem,
    #[serde(default)]
    solver: SolveConfig,
    #[serde(default)]
    pap_check: Option<PapCheckSpec>,
}

#[derive(Debug, Serialize)]
struct SolveReport {
    diagnostics: evolution::SolveDiagnostics,
    pap: Option<PapSummary>,
}

#[derive(Debug, Serialize)]
struct PapSummary {
    ergodic_ok: bool,
    ap_part: dwpap_core::TrigPolynomial,
    difference_mean: f64,
}

fn solve(cfg: serde_json::Value, out: &Path, ov: Overrides) -> Outcome {
    let mut c: SolveCommandConfig = read_config(cfg)?;
    if let Some(t) = ov.tol {
        c.solver.tol = t;
    }
    let sol = evolution::solve_mild(&c.problem, &c.solver)?;
    let pap = match &c.pap_check {
        Some(p) => {
            let sch = ov.schedule.or(p.schedule).unwrap_or_else(|| Schedule::ending_at(sol.trace.symmetric_half_width(), 8));
            let r = evolution::verify_solution_pap(&sol, &c.problem, &p.mu, &p.nu, &sch, &c.solver)?;
            Some(PapSummary { ergodic_ok: r.ergodic_ok, ap_part: r.ap_part, difference_mean: r.difference_mean.scalar().re })
        }
        None => None,
    };
    let file = fs::File::create(out.join("solution.csv")).map_err(io_fail)?;
    sol.trace.write_csv(std::io::BufWriter::new(file))?;
    write_json(&out.join("solve.json"), &SolveReport { diagnostics: sol.diagnostics, pap }).map_err(io_fail)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportConfig {
    runs: Vec<ReportRun>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportRun {
    name: String,
    command: Command,
    config: serde_json::Value,
}

#[derive(Debug, Serialize)]
struct RunSummary {
    name: String,
    command: Command,
    exit_code: i32,
    message: Option<String>,
}

fn report(cfg: serde_json::Value, out: &Path, ov: Overrides) -> Result<i32, Failure> {
    let c: ReportConfig = read_config(cfg)?;
    let mut summaries = Vec::new();
    for run in c.runs {
        if run.command == Command::Report {
            return Err(Failure::config("report runs cannot nest"));
        }
        if run.name.is_empty() || run.name.contains(['/', '\\']) || run.name.starts_with('.') {
            return Err(Failure::config(format!("run name {:?} is not a plain directory name", run.name)));
        }
        let dir = out.join(&run.name);
        fs::create_dir_all(&dir).map_err(io_fail)?;
        let code = execute(run.command, run.config, &dir, ov);
        summaries.push(RunSummary { name: run.name, command: run.command, exit_code: code.0, message: code.1 });
    }
    let worst = summaries.iter().map(|s| s.exit_code).max().unwrap_or(0);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(out.join("summary.csv"))
        .map_err(|e| Failure::config(e.to_string()))?;
    w.write_record(["name", "command", "exit_code"]).map_err(|e| Failure::config(e.to_string()))?;
    for s in &summaries {
        w.write_record([s.name.as_str(), s.command.name(), &s.exit_code.to_string()]).map_err(|e| Failure::config(e.to_string()))?;
    }
    w.flush().map_err(io_fail)?;
    write_json(&out.join("report.json"), &summaries).map_err(io_fail)?;
    Ok(worst)
}

/// Runs one command on a parsed config and writes an error report on
/// failure. Returns the exit code and the failure message.
pub fn execute(cmd: Command, cfg: serde_json::Value, out: &Path, ov: Overrides) -> (i32, Option<String>) {
    let result = match cmd {
        Command::Classify => classify(cfg, out, ov).map(|_| 0),
        Command::Spectrum => spectrum(cfg, out, ov).map(|_| 0),
        Command::Mean => mean(cfg, out, ov).map(|_| 0),
        Command::Convolve => convolve(cfg, out, ov).map(|_| 0),
        Command::Solve => solve(cfg, out, ov).map(|_| 0),
        Command::Report => report(cfg, out, ov),
    };
    match result {
        Ok(code) => (code, None),
        Err(f) => {
            let body = serde_json::json!({
                "status": "error",
                "exit_code": f.code,
                "kind": f.kind,
                "message": f.message,
                "details": f.details,
            });
            let _ = write_json(&out.join(format!("{}.json", cmd.name())), &body);
            (f.code, Some(f.to_string()))
        }
    }
}

/// Entry point shared by the binary and the tests.
pub fn run(cli: Cli) -> i32 {
    let prepared = (|| -> Result<(serde_json::Value, Overrides), Failure> {
        let path = cli.config.as_ref().ok_or_else(|| Failure::config("--config is required"))?;
        let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Failure::config(format!("invalid JSON: {e}")))?;
        let schedule = cli.schedule.as_deref().map(parse_schedule).transpose()?;
        if let Some(t) = cli.tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Failure::config("--tol must be positive"));
            }
        }
        fs::create_dir_all(&cli.out).map_err(io_fail)?;
        Ok((value, Overrides { schedule, tol: cli.tol }))
    })();
    match prepared {
        Ok((value, ov)) => {
            let (code, msg) = execute(cli.command, value, &cli.out, ov);
            if let Some(m) = msg {
                eprintln!("dwpap {}: {m}", cli.command.name());
            }
            code
        }
        Err(f) => {
            eprintln!("dwpap {}: {f}", cli.command.name());
            f.code
        }
    }
}

//! Command-line front end: `verify`, `energy`, `balance` and `optimize`.
//!
//! Every output embeds a [`RunManifest`]. Floats are written with 17
//! significant digits. Exit codes: 0 success, 1 check failure,
//! 2 usage or validation error, 3 convergence failure.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use plotters::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fields::FieldSpec;
use crate::functionals::{self as fun, default_degree, E2Formula, Rules};
use crate::mobius::{balance, BalanceOptions};
use crate::optimize::{minimize_e2, minimize_g2, OptimizationConfig, OptimizationTrace};
use crate::verify::{run_suite_with, CheckConfig, CheckResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "ballconf", version, about = "Conformal energies and identity checks on the unit ball")]
pub struct Cli {
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Run registered identity and inequality checks.
    Verify(VerifyArgs),
    /// Evaluate the trace energies of a field spec.
    Energy(EnergyArgs),
    /// Find the Möbius map balancing the boundary measure of a field.
    Balance(BalanceArgs),
    /// Minimize 𝓔₂ (n = 4, 5) or 𝓖₂ (n = 3) over the cone.
    Optimize(OptimizeArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct VerifyArgs {
    /// Dimensions to run, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![3usize, 4, 5])]
    pub n: Vec<usize>,
    /// Check name, comma list or `*` glob; `all` runs everything.
    #[arg(long, default_value = "all")]
    pub filter: String,
    /// Quadrature degree override.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Tolerance override for non-evidence checks.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// JSON-lines destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// SVG bar chart of residual / tolerance.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct EnergyArgs {
    /// Field spec JSON file.
    #[arg(long)]
    pub field: PathBuf,
    /// Must match the spec when given.
    #[arg(long)]
    pub n: Option<usize>,
    /// 𝓔₂ formulas, comma separated (direct, pregeometric, geometric,
    /// positive, alternate, sigma2); all by default. Ignored for n = 3.
    #[arg(long, value_delimiter = ',')]
    pub formulas: Vec<String>,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct BalanceArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    /// Target moment norm.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct OptimizeArgs {
    /// Starting field spec; a seeded perturbation of the constant when absent.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub n: usize,
    /// Total degree of the polynomial correction.
    #[arg(long, default_value_t = 4)]
    pub degree: usize,
    /// Gradient-norm stopping tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for trace.jsonl, field.json and trace.svg; without it the
    /// trace and final field go to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Reproducibility record written alongside every output.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub flags: Value,
    pub field_specs: Vec<String>,
    pub seed: Option<u64>,
    pub quadrature_degree: Option<usize>,
    pub version: String,
    /// Seconds. This and the per-check `runtime` are the only values that
    /// differ between identical runs.
    pub wall_clock: f64,
}

impl RunManifest {
    fn new(cli: &Cli) -> Self {
        let (name, flags) = match serde_json::to_value(&cli.command) {
            Ok(Value::Object(m)) if m.len() == 1 => m.into_iter().next().expect("one entry"),
            _ => ("unknown".into(), Value::Null),
        };
        let (field_specs, seed, degree) = match &cli.command {
            Command::Verify(a) => (vec![], Some(a.seed), a.degree),
            Command::Energy(a) => (vec![path_str(&a.field)], None, a.degree),
            Command::Balance(a) => (vec![path_str(&a.field)], None, None),
            Command::Optimize(a) => (a.init.iter().map(|p| path_str(p)).collect(), Some(a.seed), None),
        };
        Self {
            command: name,
            flags,
            field_specs,
            seed,
            quadrature_degree: degree,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock: 0.0,
        }
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// serde_json formatter that writes every float with 17 significant digits.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
}

/// One-line JSON with 17-digit floats.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Output sink: a file when a path is given, stdout otherwise.
struct Sink {
    out: Box<dyn Write>,
}

impl Sink {
    fn open(path: Option<&Path>) -> Result<Self> {
        let out: Box<dyn Write> = match path {
            Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
            None => Box::new(io::stdout().lock()),
        };
        Ok(Self { out })
    }

    fn line<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<()> {
        writeln!(self.out, "{}", to_json(value)?)?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Convergence { .. } | Error::LineSearch { .. } | Error::Numeric(_) => EXIT_CONVERGENCE,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<i32> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Validation("--threads must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let manifest = RunManifest::new(cli);
    let start = Instant::now();
    match &cli.command {
        Command::Verify(a) => cmd_verify(a, manifest, start),
        Command::Energy(a) => cmd_energy(a, manifest, start),
        Command::Balance(a) => cmd_balance(a, manifest, start),
        Command::Optimize(a) => cmd_optimize(a, manifest, start),
    }
}

fn read_spec(path: &Path, n: Option<usize>) -> Result<FieldSpec> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
    let spec = FieldSpec::from_json(&text)?;
    if let Some(n) = n {
        if n != spec.n {
            return Err(Error::Validation(format!(
                "--n {n} does not match the field spec (n = {})",
                spec.n
            )));
        }
    }
    Ok(spec)
}

fn cmd_verify(a: &VerifyArgs, mut manifest: RunManifest, start: Instant) -> Result<i32> {
    if let Some(bad) = a.n.iter().find(|n| !(3..=5).contains(*n)) {
        return Err(Error::Validation(format!("n = {bad} outside 3..=5")));
    }
    if let Some(t) = a.tol {
        if !(t > 0.0) {
            return Err(Error::Validation("--tol must be positive".into()));
        }
    }
    // resolve the filter before opening the output
    crate::verify::select(&a.filter)?;
    let cfg = CheckConfig {
        seed: a.seed,
        degree: a.degree,
        tol: a.tol,
        ..Default::default()
    };
    let mut sink = Sink::open(a.out.as_deref())?;
    let mut write_err = None;
    let report = run_suite_with(&a.filter, &a.n, &cfg, |r| {
        if write_err.is_none() {
            if let Err(e) = sink.line(r) {
                write_err = Some(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    if let Some(p) = &a.plot {
        residual_plot(&report.results, p)?;
    }
    manifest.wall_clock = start.elapsed().as_secs_f64();
    sink.line(&json!({ "summary": report.summary, "manifest": manifest }))?;
    sink.finish()?;
    Ok(if report.all_passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn cmd_energy(a: &EnergyArgs, mut manifest: RunManifest, start: Instant) -> Result<i32> {
    let spec = read_spec(&a.field, a.n)?;
    let field = spec.build()?;
    let degree = a.degree.unwrap_or(default_degree(spec.n));
    manifest.quadrature_degree = Some(degree);
    let rules = Rules::new(spec.n, degree)?;
    let report = if spec.n == 3 {
        let f2 = fun::f2(&field, &rules)?;
        let lemma = fun::f2_lemma_form(&field, &rules)?;
        json!({
            "n": 3,
            "values": { "f2": f2, "f2_lemma": lemma, "g2": fun::g2(&field, &rules)? },
            "discrepancy": (f2 - lemma).abs(),
            "degree": degree,
        })
    } else {
        let formulas = if a.formulas.is_empty() {
            E2Formula::ALL.to_vec()
        } else {
            a.formulas.iter().map(|s| E2Formula::parse(s.trim())).collect::<Result<Vec<_>>>()?
        };
        serde_json::to_value(fun::e2_report(&field, &rules, &formulas)?)?
    };
    manifest.wall_clock = start.elapsed().as_secs_f64();
    let mut sink = Sink::open(a.out.as_deref())?;
    sink.line(&json!({ "report": report, "manifest": manifest }))?;
    sink.finish()?;
    Ok(EXIT_OK)
}

fn cmd_balance(a: &BalanceArgs, mut manifest: RunManifest, start: Instant) -> Result<i32> {
    let spec = read_spec(&a.field, a.n)?;
    let field = spec.build()?;
    let result = balance(&field, &BalanceOptions::new(a.tol, a.max_iter))?;
    manifest.wall_clock = start.elapsed().as_secs_f64();
    let mut sink = Sink::open(a.out.as_deref())?;
    sink.line(&json!({
        "map": result.map,
        "iterations": result.iterations,
        "moment_norm": result.moment_norm,
        "mass": result.mass,
        "manifest": manifest,
    }))?;
    sink.finish()?;
    Ok(EXIT_OK)
}

fn cmd_optimize(a: &OptimizeArgs, mut manifest: RunManifest, start: Instant) -> Result<i32> {
    let init = a.init.as_deref().map(|p| read_spec(p, Some(a.n))).transpose()?;
    let cfg = OptimizationConfig {
        degree: a.degree,
        init,
        gradient_tol: a.tol,
        max_iter: a.max_iter,
        seed: a.seed,
        ..Default::default()
    };
    let outcome = if a.n == 3 { minimize_g2(&cfg) } else { minimize_e2(&cfg, a.n) };
    let (field, trace, error) = match outcome {
        Ok((field, trace)) => (Some(field), trace, None),
        Err(Error::LineSearch { detail, trace }) => (None, *trace, Some(detail)),
        Err(e) => return Err(e),
    };
    manifest.wall_clock = start.elapsed().as_secs_f64();
    let summary = json!({
        "n": trace.n,
        "iterations": trace.iterations.len().saturating_sub(1),
        "converged": trace.converged,
        "final_energy": trace.final_energy,
        "final_flatness": trace.final_flatness,
        "error": error,
    });
    let field_doc = match &field {
        Some(f) => {
            let mut doc = serde_json::to_value(f.to_spec())?;
            doc["manifest"] = serde_json::to_value(&manifest)?;
            Some(doc)
        }
        None => None,
    };
    match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut sink = Sink::open(Some(&dir.join("trace.jsonl")))?;
            for r in &trace.iterations {
                sink.line(r)?;
            }
            sink.line(&json!({ "summary": summary, "manifest": manifest }))?;
            sink.finish()?;
            if let Some(doc) = &field_doc {
                fs::write(dir.join("field.json"), to_json(doc)? + "\n")?;
            }
            trace_plot(&trace, &dir.join("trace.svg"))?;
        }
        None => {
            let mut sink = Sink::open(None)?;
            for r in &trace.iterations {
                sink.line(r)?;
            }
            sink.line(&json!({ "summary": summary, "field": field_doc, "manifest": manifest }))?;
            sink.finish()?;
        }
    }
    if let Some(detail) = error {
        eprintln!("error: line search failed: {detail}");
        return Ok(EXIT_CONVERGENCE);
    }
    Ok(EXIT_OK)
}

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Io(io::Error::other(format!("plot: {e}")))
}

/// Bars of log10(residual / tolerance) for the non-evidence checks; bars
/// below the zero line passed.
pub fn residual_plot(results: &[CheckResult], path: &Path) -> Result<()> {
    let bars: Vec<(String, f64)> = results
        .iter()
        .filter(|r| !r.evidence)
        .map(|r| {
            let ratio = if r.residual.is_finite() { r.residual / r.tolerance } else { 1e4 };
            (format!("{} n={}", r.name, r.n), ratio.max(1e-18).log10().min(4.0))
        })
        .collect();
    let height = 120 + 18 * bars.len().max(1) as u32;
    let root = SVGBackend::new(path, (900, height)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("log10(residual / tolerance)", ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(320)
        .build_cartesian_2d(-18.0f64..4.0, 0.0f64..bars.len().max(1) as f64)
        .map_err(plot_err)?;
    let labels: Vec<String> = bars.iter().map(|b| b.0.clone()).collect();
    chart
        .configure_mesh()
        .disable_y_mesh()
        .y_labels(bars.len().max(1))
        .y_label_formatter(&|y| {
            let i = y.floor() as usize;
            labels.get(i).cloned().unwrap_or_default()
        })
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(bars.iter().enumerate().map(|(i, (_, v))| {
            let color = if *v <= 0.0 { GREEN.mix(0.7) } else { RED.mix(0.8) };
            Rectangle::new([(-18.0, i as f64 + 0.15), (*v, i as f64 + 0.85)], color.filled())
        }))
        .map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new(vec![(0.0, 0.0), (0.0, bars.len().max(1) as f64)], &BLACK))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Energy excess over the final value and gradient norm per iteration, log scale.
pub fn trace_plot(trace: &OptimizationTrace, path: &Path) -> Result<()> {
    let floor = 1e-16;
    let last = trace.iterations.last().map(|r| r.energy).unwrap_or(0.0);
    let excess: Vec<(f64, f64)> = trace
        .iterations
        .iter()
        .map(|r| (r.iteration as f64, (r.energy - last).abs().max(floor)))
        .collect();
    let grad: Vec<(f64, f64)> = trace
        .iterations
        .iter()
        .map(|r| (r.iteration as f64, r.gradient_norm.max(floor)))
        .collect();
    let top = excess.iter().chain(&grad).map(|p| p.1).fold(floor * 10.0, f64::max) * 10.0;
    let xmax = (trace.iterations.len().max(2) - 1) as f64;
    let root = SVGBackend::new(path, (800, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("optimization trace, n = {}", trace.n), ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(70)
        .build_cartesian_2d(0.0f64..xmax, (floor..top).log_scale())
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("iteration")
        .y_label_formatter(&|y| format!("{y:.0e}"))
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new(excess, &BLUE))
        .map_err(plot_err)?
        .label("energy − final energy")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE));
    chart
        .draw_series(LineSeries::new(grad, &RED))
        .map_err(plot_err)?
        .label("gradient norm")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        let s = to_json(&json!({ "x": 0.1, "k": 3 })).unwrap();
        assert_eq!(s, r#"{"k":3,"x":1.0000000000000001e-1}"#);
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["x"].as_f64(), Some(0.1));
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run(["ballconf", "verify", "--filter", "no_such_check"]), EXIT_USAGE);
        assert_eq!(run(["ballconf", "verify", "--n", "7"]), EXIT_USAGE);
        assert_eq!(run(["ballconf", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["ballconf", "energy", "--field", "/nonexistent.json"]), EXIT_USAGE);
    }
}

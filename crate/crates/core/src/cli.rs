//! Command-line front end: parse a spec file, dispatch, write a JSON report.
//!
//! Exit codes: 0 on success, 2 when the input fails validation, 3 when a numeric
//! routine fails (no root bracket, budget exhausted, and so on).

use crate::assouad::{
    assouad_1var, assouad_inf, jsr_csv, AssouadEstimate, JsrError, DEFAULT_DEPTH,
};
use crate::infinite::{
    expectation_matrix, grow_tree, inf_dimension_report, solve_s_h_inf, InfiniteError, TreeLimits,
    TreeStop,
};
use crate::linalg::spectral_radius;
use crate::pressure::{
    box_dimension_1var, pressure_csv, sample_stream, solve_s_h, ussc_dimension_1var,
    ussc_dimension_lyapunov, PressureError, PressureProblem, DEFAULT_K, DEFAULT_M,
};
use crate::realization::RealizationStream;
use crate::report::{timestamp_now, DimensionReport, ErrorObject, Estimate, ScaleEstimate};
use crate::sampler::{
    box_count, box_count_csv, cover_from_tree, default_scales, prefractal_cover, render_svg,
    BoxCover, SamplerError, SvgStyle,
};
use crate::stopping::{build_stopping_graph, StoppingError};
use crate::system::{validate_system, Mode, ModelError, SystemSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Default tolerance for the Monte Carlo root searches.
pub const CLI_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(
    name = "rgds",
    version,
    about = "Dimensions of random graph-directed self-similar sets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a spec against the structural conditions of the chosen model
    Validate(RunArgs),
    /// 1-variable dimensions: s_B, the s_H,ε diagnostics and s_O when it applies
    Dim1var(RunArgs),
    /// ∞-variable dimension s_h
    Diminf(RunArgs),
    /// Assouad dimension bounds from joint spectral radii
    Assouad(RunArgs),
    /// Pressure estimate at a single (s, ε)
    Pressure(RunArgs),
    /// Stopping graph of one realization
    Stopping(RunArgs),
    /// Grow a prefractal cover (1-variable) or a random recursive tree (∞-variable)
    Simulate(RunArgs),
    /// Grid box counting on a prefractal cover
    Boxcount(RunArgs),
    /// Draw a prefractal cover as SVG to --out-path
    Render(RunArgs),
}

impl Command {
    pub fn split(self) -> (&'static str, RunArgs) {
        match self {
            Command::Validate(a) => ("validate", a),
            Command::Dim1var(a) => ("dim1var", a),
            Command::Diminf(a) => ("diminf", a),
            Command::Assouad(a) => ("assouad", a),
            Command::Pressure(a) => ("pressure", a),
            Command::Stopping(a) => ("stopping", a),
            Command::Simulate(a) => ("simulate", a),
            Command::Boxcount(a) => ("boxcount", a),
            Command::Render(a) => ("render", a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    OneVar,
    InfVar,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::OneVar => Mode::OneVar,
            ModeArg::InfVar => Mode::InfVar,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// System spec (JSON)
    #[arg(long)]
    pub spec_path: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Comma-separated, strictly decreasing
    #[arg(long, value_delimiter = ',')]
    pub eps_schedule: Option<Vec<f64>>,
    /// Band-product length
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    /// Number of sampled realizations
    #[arg(long, default_value_t = DEFAULT_M)]
    pub m: usize,
    /// Product length for the joint spectral radius search
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    pub depth: usize,
    #[arg(long, default_value_t = CLI_TOL)]
    pub tol: f64,
    /// Report destination (the SVG file for `render`); stdout when absent
    #[arg(long)]
    pub out_path: Option<PathBuf>,
    /// Worker threads
    #[arg(long, env = "RGDS_THREADS")]
    pub threads: Option<usize>,
    #[arg(long)]
    pub no_timestamp: bool,
    #[arg(long, value_enum, default_value = "one-var")]
    pub mode: ModeArg,
    /// Start vertex, by name or index
    #[arg(long, default_value = "0")]
    pub vertex: String,
    #[arg(long, default_value_t = 1)]
    pub rounds: usize,
    /// Exponent for `pressure`
    #[arg(long)]
    pub s: Option<f64>,
    /// Optional CSV side output
    #[arg(long)]
    pub csv_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub kind: String,
    pub message: String,
}

impl Failure {
    fn invalid(kind: &str, message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            kind: kind.into(),
            message: message.into(),
        }
    }

    fn numeric(kind: &str, message: impl Into<String>) -> Self {
        Self {
            code: EXIT_NUMERIC,
            kind: kind.into(),
            message: message.into(),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let kind = match e {
            ModelError::MalformedSpec(_) => "MalformedSpec",
            ModelError::NotContracting { .. } => "NotContracting",
            ModelError::SeedNotInvariant { .. } => "SeedNotInvariant",
        };
        Failure::invalid(kind, e.to_string())
    }
}

impl From<StoppingError> for Failure {
    fn from(e: StoppingError) -> Self {
        match e {
            StoppingError::BadEpsilon(_) => Failure::invalid("BadEpsilon", e.to_string()),
            StoppingError::PrefixTooShort { .. } => {
                Failure::numeric("PrefixTooShort", e.to_string())
            }
        }
    }
}

impl From<PressureError> for Failure {
    fn from(e: PressureError) -> Self {
        match e {
            PressureError::Stopping(s) => s.into(),
            PressureError::DeadVector(_) => Failure::numeric("DeadVector", e.to_string()),
            PressureError::BracketFailure(_) => Failure::numeric("BracketFailure", e.to_string()),
            PressureError::NotUssc => Failure::invalid("NotUssc", e.to_string()),
            PressureError::BadParameter(_) => Failure::invalid("BadParameter", e.to_string()),
        }
    }
}

impl From<JsrError> for Failure {
    fn from(e: JsrError) -> Self {
        match e {
            JsrError::Pressure(p) => p.into(),
            _ => Failure::invalid("BadParameter", e.to_string()),
        }
    }
}

impl From<InfiniteError> for Failure {
    fn from(e: InfiniteError) -> Self {
        match e {
            InfiniteError::NotSurviving { .. } => Failure::invalid("NotSurviving", e.to_string()),
            InfiniteError::DepthBudget(_) => Failure::numeric("DepthBudget", e.to_string()),
            InfiniteError::UnknownVertex(_) => Failure::invalid("UnknownVertex", e.to_string()),
            InfiniteError::Pressure(p) => p.into(),
        }
    }
}

impl From<SamplerError> for Failure {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::Stopping(s) => s.into(),
            SamplerError::UnknownVertex(_) => Failure::invalid("UnknownVertex", e.to_string()),
            SamplerError::BudgetExceeded(_) => Failure::numeric("BudgetExceeded", e.to_string()),
            SamplerError::EmptyCover => Failure::numeric("EmptyCover", e.to_string()),
            SamplerError::TooFewScales(_) => Failure::numeric("TooFewScales", e.to_string()),
            SamplerError::Io(_) => Failure::numeric("Io", e.to_string()),
        }
    }
}

/// Result of one command: exit code, the report, and a human summary.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    pub report: DimensionReport,
    pub summary: String,
}

fn default_schedule() -> Vec<f64> {
    (1..=5).map(|j| 0.25f64.powi(j)).collect()
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .map_err(|e| Failure::numeric("Io", format!("{}: {e}", path.display())))
}

fn resolve_vertex(spec: &SystemSpec, v: &str) -> Result<usize, Failure> {
    if let Some(i) = spec.vertex_index(v) {
        return Ok(i);
    }
    match v.parse::<usize>() {
        Ok(i) if i < spec.n() => Ok(i),
        _ => Err(Failure::invalid("UnknownVertex", format!("no vertex {v}"))),
    }
}

fn need<T: Copy>(x: Option<T>, flag: &str, command: &str) -> Result<T, Failure> {
    x.ok_or_else(|| Failure::invalid("MissingFlag", format!("{command} requires --{flag}")))
}

/// Runs a parsed command on a worker pool of the requested size.
pub fn run(command: &str, args: &RunArgs) -> Outcome {
    let threads = args.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build();
    match pool {
        Ok(pool) => pool.install(|| run_inner(command, args)),
        Err(e) => {
            let mut report = DimensionReport::new(command, None, args.seed, args.mode.into());
            let f = Failure::invalid("BadParameter", e.to_string());
            finish_error(&mut report, &f);
            Outcome {
                code: f.code,
                report,
                summary: f.message,
            }
        }
    }
}

fn finish_error(report: &mut DimensionReport, f: &Failure) {
    report.error = Some(ErrorObject {
        kind: f.kind.clone(),
        message: f.message.clone(),
    });
}

fn run_inner(command: &str, args: &RunArgs) -> Outcome {
    let mode: Mode = match command {
        "diminf" => Mode::InfVar,
        _ => args.mode.into(),
    };
    let mut report = DimensionReport::new(
        command,
        Some(args.spec_path.display().to_string()),
        args.seed,
        mode,
    );
    if !args.no_timestamp {
        report.timestamp = Some(timestamp_now());
    }
    let mut summary = String::new();
    let result = dispatch(command, args, mode, &mut report, &mut summary);
    let code = match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(summary, "error [{}]: {}", f.kind, f.message);
            finish_error(&mut report, &f);
            f.code
        }
    };
    Outcome {
        code,
        report,
        summary,
    }
}

fn load(args: &RunArgs) -> Result<SystemSpec, Failure> {
    let text = std::fs::read_to_string(&args.spec_path).map_err(|e| {
        Failure::invalid(
            "MalformedSpec",
            format!("{}: {e}", args.spec_path.display()),
        )
    })?;
    Ok(SystemSpec::from_json(&text)?)
}

fn gate(spec: &SystemSpec, mode: Mode, report: &mut DimensionReport) -> Result<(), Failure> {
    let v = validate_system(spec, mode);
    report.warnings.extend(v.warnings.iter().cloned());
    let ok = v.ok;
    let msg = v
        .violations
        .iter()
        .map(|x| format!("{}: {}", x.condition, x.message))
        .collect::<Vec<_>>()
        .join("; ");
    let only_extinction = v.violations.iter().all(|x| x.condition == "surviving");
    report.validation = Some(v);
    if ok {
        Ok(())
    } else if only_extinction {
        let rho = spectral_radius(&expectation_matrix(spec, 0.0).matrix);
        Err(InfiniteError::NotSurviving { rho }.into())
    } else {
        Err(Failure::invalid("ValidationFailed", msg))
    }
}

fn dispatch(
    command: &str,
    args: &RunArgs,
    mode: Mode,
    report: &mut DimensionReport,
    summary: &mut String,
) -> Result<(), Failure> {
    let spec = load(args)?;
    gate(&spec, mode, report)?;
    let p = &mut report.parameters;
    match command {
        "validate" => {
            let _ = writeln!(summary, "spec is valid for {mode:?}");
            Ok(())
        }
        "dim1var" => {
            let sched = args.eps_schedule.clone().unwrap_or_else(default_schedule);
            p.eps_schedule = sched.clone();
            p.k = Some(args.k);
            p.m = Some(args.m);
            p.tol = Some(args.tol);
            dim1var(&spec, args, &sched, report, summary)
        }
        "diminf" => {
            p.tol = Some(args.tol);
            let d = inf_dimension_report(&spec, args.tol)?;
            report.s_h = Some(Estimate::exact(d.s_h, d.method.clone()));
            let _ = writeln!(summary, "s_h = {:.9}", d.s_h);
            report.details = Some(serde_json::to_value(&d).expect("serializes"));
            Ok(())
        }
        "assouad" => {
            let sched = args.eps_schedule.clone().unwrap_or_else(default_schedule);
            p.eps_schedule = sched.clone();
            p.depth = Some(args.depth);
            p.k = Some(args.k);
            p.m = Some(args.m);
            assouad(&spec, args, mode, &sched, report, summary)
        }
        "pressure" => {
            let eps = need(args.eps, "eps", command)?;
            let s = need(args.s, "s", command)?;
            p.eps = Some(eps);
            p.s = Some(s);
            p.k = Some(args.k);
            p.m = Some(args.m);
            let est = PressureProblem::new(&spec, eps, args.k, args.m, args.seed)?.estimate(s)?;
            let _ = writeln!(
                summary,
                "log Ψ({s}, {eps}) / k = {:.9} ± {:.2e}",
                est.log_psi_mean, est.log_psi_stderr
            );
            if let Some(path) = &args.csv_path {
                write_file(path, &pressure_csv(std::slice::from_ref(&est)))?;
            }
            report.details = Some(json!({
                "log_psi_mean": est.log_psi_mean,
                "log_psi_stderr": est.log_psi_stderr,
                "per_vertex_log": est.per_vertex_log,
                "samples": est.samples,
            }));
            Ok(())
        }
        "stopping" => {
            let eps = need(args.eps, "eps", command)?;
            p.eps = Some(eps);
            let stream = RealizationStream::new(args.seed, &spec.probs());
            let sg = build_stopping_graph(&spec, &stream, eps)?;
            let _ = writeln!(
                summary,
                "{} stopping edges kept, {} pruned, k_max = {}",
                sg.kept_count, sg.pruned_count, sg.k_max
            );
            if let Some(path) = &args.csv_path {
                write_file(path, &sg.to_csv(&spec))?;
            }
            report.details = Some(json!({
                "k_max": sg.k_max,
                "prefix": sg.prefix,
                "kept": sg.kept_count,
                "pruned": sg.pruned_count,
                "counts": sg.counts(spec.n()),
            }));
            Ok(())
        }
        "simulate" | "boxcount" | "render" => {
            let eps = need(args.eps, "eps", command)?;
            let vertex = resolve_vertex(&spec, &args.vertex)?;
            p.eps = Some(eps);
            p.rounds = Some(args.rounds);
            p.vertex = Some(vertex);
            let (cover, extinct) = build_cover(&spec, args, mode, eps, vertex)?;
            let mut details = json!({ "boxes": cover.len(), "extinct": extinct });
            match command {
                "simulate" => {
                    let _ = writeln!(summary, "{} boxes", cover.len());
                    if let Some(path) = &args.csv_path {
                        write_file(path, &cover_csv(&spec, &cover))?;
                    }
                }
                "boxcount" => {
                    let fit = box_count(&cover, &default_scales(&cover))?;
                    let _ = writeln!(summary, "slope {:.6}, r² {:.6}", fit.slope, fit.r2);
                    if let Some(path) = &args.csv_path {
                        write_file(path, &box_count_csv(&fit))?;
                    }
                    details["fit"] = serde_json::to_value(&fit).expect("serializes");
                }
                _ => {
                    let path = args.out_path.as_ref().ok_or_else(|| {
                        Failure::invalid("MissingFlag", "render requires --out-path")
                    })?;
                    write_file(path, &render_svg(&cover, &SvgStyle::default()))?;
                    let _ = writeln!(summary, "{} boxes drawn to {}", cover.len(), path.display());
                }
            }
            report.details = Some(details);
            Ok(())
        }
        other => Err(Failure::invalid("UnknownCommand", other.to_string())),
    }
}

fn dim1var(
    spec: &SystemSpec,
    args: &RunArgs,
    sched: &[f64],
    report: &mut DimensionReport,
    summary: &mut String,
) -> Result<(), Failure> {
    let bx = box_dimension_1var(spec, sched, args.k, args.m, args.seed)?;
    report.s_b = Some(Estimate::new(
        bx.estimate,
        bx.stderr,
        "slope of log Ψ(0,ε) between the two finest scales",
    ));
    let _ = writeln!(summary, "s_B = {:.6} ± {:.1e}", bx.estimate, bx.stderr);
    for &eps in sched {
        let r = solve_s_h(spec, eps, args.k, args.m, args.seed, args.tol)?;
        let _ = writeln!(summary, "s_H,{eps} = {:.6} ± {:.1e}", r.s, r.stderr);
        report.s_h_eps.push(ScaleEstimate {
            eps,
            value: r.s,
            stderr: r.stderr,
        });
    }
    let ussc = report
        .validation
        .as_ref()
        .is_some_and(|v| v.ussc_sufficient);
    if ussc {
        let o = ussc_dimension_1var(spec, args.k, args.m, args.seed, args.tol)?;
        let _ = writeln!(summary, "s_O = {:.9} ({})", o.s, o.method);
        report.s_o = Some(Estimate::new(o.s, o.stderr, o.method));
        if !spec.is_deterministic() {
            let l = ussc_dimension_lyapunov(spec, args.k, args.m, args.seed, args.tol)?;
            let _ = writeln!(summary, "s_O (Lyapunov) = {:.6} ± {:.1e}", l.s, l.stderr);
            report.s_o_lyapunov = Some(Estimate::new(l.s, l.stderr, l.method));
        }
    } else {
        report
            .warnings
            .push("seed-box images are not separated; s_O omitted".into());
    }
    report.details = Some(serde_json::to_value(&bx).expect("serializes"));
    Ok(())
}

fn assouad(
    spec: &SystemSpec,
    args: &RunArgs,
    mode: Mode,
    sched: &[f64],
    report: &mut DimensionReport,
    summary: &mut String,
) -> Result<(), Failure> {
    let est: AssouadEstimate = match mode {
        Mode::OneVar => {
            let bx = box_dimension_1var(spec, sched, args.k, args.m, args.seed)?;
            report.s_b = Some(Estimate::new(
                bx.estimate,
                bx.stderr,
                "slope of log Ψ(0,ε) between the two finest scales",
            ));
            assouad_1var(spec, sched, args.depth)?
        }
        Mode::InfVar => {
            let h = solve_s_h_inf(spec, args.tol)?;
            report.s_h = Some(Estimate::exact(h.s, h.method));
            assouad_inf(spec, sched)?
        }
    };
    let method = "growth of products over the stopping-word family, final scale increment";
    report.assouad_lower = Some(Estimate::exact(est.lower_bound, method));
    if let Some(v) = est.value_if_ussc {
        report.assouad_value = Some(Estimate::new(
            v,
            0.5 * (est.upper_estimate - est.lower_bound).abs(),
            method,
        ));
    }
    let _ = writeln!(
        summary,
        "Assouad lower bound {:.6}, upper estimate {:.6}{}",
        est.lower_bound,
        est.upper_estimate,
        if est.loose { " (search truncated)" } else { "" }
    );
    if let Some(path) = &args.csv_path {
        write_file(path, &jsr_csv(&est.points))?;
    }
    report.details = Some(serde_json::to_value(&est).expect("serializes"));
    Ok(())
}

fn build_cover(
    spec: &SystemSpec,
    args: &RunArgs,
    mode: Mode,
    eps: f64,
    vertex: usize,
) -> Result<(BoxCover, bool), Failure> {
    match mode {
        Mode::OneVar => {
            let stream = sample_stream(args.seed, 0, &spec.probs());
            Ok((
                prefractal_cover(spec, &stream, vertex, eps, args.rounds)?,
                false,
            ))
        }
        Mode::InfVar => {
            let scale = eps.powi(args.rounds.max(1) as i32);
            let tree = grow_tree(
                spec,
                args.seed,
                vertex,
                TreeStop::Epsilon(scale),
                TreeLimits::default(),
            )?;
            let mut cover = cover_from_tree(spec, &tree, eps);
            cover.rounds = args.rounds.max(1);
            Ok((cover, tree.extinct))
        }
    }
}

fn cover_csv(spec: &SystemSpec, cover: &BoxCover) -> String {
    let mut s = String::from("word;vertex;ratio;image\n");
    for b in &cover.boxes {
        let w = b
            .word
            .iter()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join("·");
        let _ = writeln!(
            s,
            "{};{};{:.17e};{}",
            if w.is_empty() { "ε0".to_string() } else { w },
            spec.vertices()[b.vertex],
            b.map.ratio(),
            b.image.describe()
        );
    }
    s
}

/// Parses `argv`, runs, writes outputs and returns the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    let (name, args) = cli.command.split();
    let out = run(name, &args);
    let text = out.report.to_json();
    match (&args.out_path, name) {
        (Some(path), n) if n != "render" => {
            if let Err(f) = write_file(path, &text) {
                eprintln!("error [{}]: {}", f.kind, f.message);
                return EXIT_NUMERIC;
            }
            print!("{}", out.summary);
        }
        _ => {
            print!("{text}");
            eprint!("{}", out.summary);
        }
    }
    out.code
}

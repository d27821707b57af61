use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use scalarfield::critical::{
    bisect_kappa_star, kappa_upper_bound, solve_at_critical, BallTestFunction, CriticalSettings,
};
use scalarfield::exponents::{
    below_joseph_lundgren_exact, bootstrap_chain, joseph_lundgren_exponent, nu_window, rational_from_f64,
    sobolev_exponent, sobolev_exponent_exact, Extended,
};
use scalarfield::iterate::{field_ratio_min, solve_minimal, IterationStatus, ProblemSpec, SolveOutcome};
use scalarfield::kernel::{check_green_properties, unit_ball_potential};
use scalarfield::spectrum::{eigen_integral_residual, linearized_eigenpair, phi_vs_g_bounds};
use scalarfield::{compute_mu0, Grid, Kernel, KernelSettings, Mu0};

mod config;
mod report;

use config::{RawConfig, RunConfig, Spacing};
use report::Report;

/// Environment variable naming a directory for cached kernel matrices.
const CACHE_ENV: &str = "SCALARFIELD_KERNEL_CACHE";

#[derive(Parser)]
#[command(name = "scalarfield", version, about = "Forced scalar field equation -Δu + u = u^p + κμ on R^N")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Critical exponents for a dimension, and exponent bookkeeping for p
    Exponents {
        #[arg(long = "N")]
        dim: u32,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Minimal solution at a given κ
    Solve(Common),
    /// First eigenpair of the linearization at the minimal solution
    Eigen(Common),
    /// Bracket the extremal constant κ*
    Critical(Common),
    /// Solutions and eigenvalues over a κ grid
    Sweep(Common),
    /// Accuracy checks of the convolution operator
    KernelCheck(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file with `key = value` lines
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Proceed even when no admissible integrability exponent exists
    #[arg(long)]
    force: bool,
    /// Print the report as JSON
    #[arg(long)]
    json: bool,
    /// Override a configuration key
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long = "N")]
    dim: Option<u32>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// dirac, ball or annulus
    #[arg(long)]
    measure: Option<String>,
    /// Number of grid nodes
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "r-max")]
    r_max: Option<f64>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Numerics(scalarfield::Error),
}

impl From<config::ConfigError> for Failure {
    fn from(e: config::ConfigError) -> Self {
        Self::Usage(e.0)
    }
}

impl From<scalarfield::Error> for Failure {
    fn from(e: scalarfield::Error) -> Self {
        Self::Numerics(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Numerics(e.into())
    }
}

type Outcome = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Exponents { dim, p, json } => cmd_exponents(dim, p, json),
        Command::Solve(c) => cmd_solve(&c),
        Command::Eigen(c) => cmd_eigen(&c),
        Command::Critical(c) => cmd_critical(&c),
        Command::Sweep(c) => cmd_sweep(&c),
        Command::KernelCheck(c) => cmd_kernel_check(&c),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerics(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn status_code(status: IterationStatus) -> ExitCode {
    match status {
        IterationStatus::Converged => ExitCode::SUCCESS,
        IterationStatus::Diverged(_) => ExitCode::from(2),
        IterationStatus::MaxIter => ExitCode::from(3),
    }
}

fn emit(report: &Report, json: bool) {
    if json {
        println!("{}", serde_json::to_string_pretty(&report.to_json()).expect("serializable report"));
    } else {
        print!("{}", report.to_text());
    }
}

fn extended(v: Extended<f64>) -> f64 {
    v.finite().unwrap_or(f64::INFINITY)
}

fn cmd_exponents(dim: u32, p: Option<f64>, json: bool) -> Outcome {
    let mut r = Report::new();
    r.int("N", dim);
    r.float("p_S", extended(sobolev_exponent(dim)?));
    match sobolev_exponent_exact(dim)? {
        Extended::Finite(v) => r.text("p_S_exact", v.to_string()),
        Extended::Infinite => r.text("p_S_exact", "inf"),
    };
    r.float("p_JL", extended(joseph_lundgren_exponent(dim)?));
    if let Some(p) = p {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Failure::Usage(format!("p must exceed 1, got {p}")));
        }
        let window = nu_window(dim, p)?;
        let p_exact = rational_from_f64(p)?;
        r.float("p", p);
        r.flag("below_p_JL", below_joseph_lundgren_exact(dim, &p_exact)?);
        r.float("nu_minus", window.nu_minus);
        r.float("nu_plus", window.nu_plus);
        r.float("nu_cap", extended(window.nu_cap));
        match window.window {
            Some((lo, hi)) => {
                r.flag("nu_window_nonempty", true).float("nu_window_lo", lo).float("nu_window_hi", hi);
            }
            None => {
                r.flag("nu_window_nonempty", false);
            }
        }
        let lower = p.max(f64::from(dim) * (p - 1.0) / 2.0);
        let q = 2.0 * lower;
        r.float("q_lower", lower).float("q", q);
        match bootstrap_chain(dim, &p_exact, &rational_from_f64(q)?) {
            Ok(chain) => {
                r.flag("bootstrap_feasible", true).text("r_star", chain.r_star.to_string()).int("j_star", chain.j_star);
            }
            Err(e) => {
                r.flag("bootstrap_feasible", false).text("bootstrap_error", e.to_string());
            }
        }
    }
    emit(&r, json);
    Ok(ExitCode::SUCCESS)
}

/// Validated configuration, grid, kernel and source potential.
struct Setup {
    cfg: RunConfig,
    spec: ProblemSpec<f64>,
    kernel: Kernel,
    mu0: Mu0<f64>,
}

fn load_config(c: &Common) -> Result<RunConfig, Failure> {
    let mut raw = match &c.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    let mut shorthand = Vec::new();
    if let Some(v) = c.dim {
        shorthand.push(format!("problem.N={v}"));
    }
    if let Some(v) = c.p {
        shorthand.push(format!("problem.p={v}"));
    }
    if let Some(v) = c.kappa {
        shorthand.push(format!("problem.kappa={v}"));
    }
    if let Some(v) = &c.measure {
        shorthand.push(format!("measure.type={v}"));
    }
    if let Some(v) = c.n {
        shorthand.push(format!("numerics.n={v}"));
    }
    if let Some(v) = c.r_max {
        shorthand.push(format!("numerics.r_max={v}"));
    }
    if let Some(v) = &c.out {
        shorthand.push(format!("output.dir={}", v.display()));
    }
    raw.apply_overrides(&shorthand)?;
    raw.apply_overrides(&c.set)?;
    Ok(RunConfig::from_raw(&raw)?)
}

fn setup(c: &Common, need_kappa: bool) -> Result<Setup, Failure> {
    let cfg = load_config(c)?;
    let kappa = match (cfg.kappa, need_kappa) {
        (Some(k), _) => k,
        (None, true) => return Err(Failure::Usage("problem.kappa is required for this command".into())),
        (None, false) => 1.0,
    };
    let spec = match ProblemSpec::new(cfg.dim, cfg.p, cfg.measure, kappa) {
        Ok(spec) => spec,
        Err(e) if c.force => {
            eprintln!("warning: {e}; continuing because of --force");
            ProblemSpec::unchecked(cfg.dim, cfg.p, cfg.measure, kappa)?
        }
        Err(e) => return Err(Failure::Usage(e.to_string())),
    };
    let spec = match cfg.q {
        Some(q) => {
            let q = rational_from_f64(q)?;
            match spec.clone().with_q(q.clone()) {
                Ok(s) => s,
                Err(e) if c.force => {
                    eprintln!("warning: {e}; continuing because of --force");
                    ProblemSpec { q, ..spec }
                }
                Err(e) => return Err(Failure::Usage(e.to_string())),
            }
        }
        None => spec,
    };
    let grid = Arc::new(Grid::build(cfg.dim, &cfg.grid, &cfg.measure.breakpoints())?);
    let cache = std::env::var_os(CACHE_ENV).map(PathBuf::from);
    let kernel = Kernel::build_cached(grid, &KernelSettings::default(), cache.as_deref())?;
    let mu0 = compute_mu0(&cfg.measure, &kernel)?;
    Ok(Setup { cfg, spec, kernel, mu0 })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

fn problem_report(s: &Setup, command: &str) -> Report {
    let mut r = Report::new();
    r.text("command", command)
        .int("N", s.cfg.dim)
        .float("p", s.cfg.p)
        .text("measure", s.cfg.measure_label())
        .float("mass", s.cfg.measure.mass())
        .float("support_radius", s.cfg.measure.support_radius())
        .text("q", s.spec.q.to_string())
        .int("j_star", s.spec.j_star())
        .int("n", s.kernel.len())
        .float("r_max", s.cfg.grid.r_max);
    r
}

fn solve_report(outcome: &SolveOutcome<f64>, s: &Setup, g: &scalarfield::Field) -> Result<Report, Failure> {
    let trace = &outcome.trace;
    let mut r = Report::new();
    r.float("kappa", s.spec.kappa)
        .text("status", trace.status.label())
        .int("iterations", trace.j)
        .int("monotonicity_violations", trace.monotonicity_violations)
        .float("sup_u", trace.latest.sup());
    if let Some(sol) = &outcome.solution {
        r.float("residual", sol.residual)
            .float("min_u_over_g", field_ratio_min(&sol.u, g)?)
            .float("sup_w", sol.w_field.sup_abs())
            .float("h1_norm_w", sol.w_field.h1_norm()?);
    }
    Ok(r)
}

fn cmd_solve(c: &Common) -> Outcome {
    let s = setup(c, true)?;
    let outcome = solve_minimal(&s.spec, &s.kernel, &s.mu0, &s.cfg.iteration)?;
    let g = unit_ball_potential(&s.kernel);
    let mut report = problem_report(&s, "solve");
    report.extend(solve_report(&outcome, &s, &g)?);
    write(&s.cfg.out, "solution.csv", &outcome.trace.latest.to_field().to_csv_named("u"))?;
    write(&s.cfg.out, "trace.csv", &outcome.trace.to_csv())?;
    write(&s.cfg.out, "report.txt", &report.to_text())?;
    emit(&report, c.json);
    Ok(status_code(outcome.trace.status))
}

fn cmd_eigen(c: &Common) -> Outcome {
    let s = setup(c, true)?;
    let outcome = solve_minimal(&s.spec, &s.kernel, &s.mu0, &s.cfg.iteration)?;
    let g = unit_ball_potential(&s.kernel);
    let mut report = problem_report(&s, "eigen");
    report.extend(solve_report(&outcome, &s, &g)?);
    if let Some(sol) = &outcome.solution {
        let u = sol.u.values();
        let eigen = linearized_eigenpair(&u, s.spec.p, s.kernel.grid().clone())?;
        let (lo, hi) = phi_vs_g_bounds(&eigen.phi1, &g)?;
        report
            .float("lambda1", eigen.lambda1)
            .int("eigen_iterations", eigen.iterations)
            .float("eigen_residual", eigen.residual)
            .float("integral_residual", eigen_integral_residual(&eigen.phi1, eigen.lambda1, &u, s.spec.p, &s.kernel)?)
            .float("phi_over_g_min", lo)
            .float("phi_over_g_max", hi);
        write(&s.cfg.out, "eigen.csv", &eigen.phi1.to_csv_named("phi1"))?;
    }
    write(&s.cfg.out, "eigen_report.txt", &report.to_text())?;
    emit(&report, c.json);
    Ok(status_code(outcome.trace.status))
}

fn critical_settings(cfg: &RunConfig) -> CriticalSettings {
    CriticalSettings { rel_tol: cfg.rel_tol, iteration: cfg.iteration, ..CriticalSettings::default() }
}

fn cmd_critical(c: &Common) -> Outcome {
    let s = setup(c, false)?;
    let report = bisect_kappa_star(&s.spec, &s.kernel, &s.mu0, &critical_settings(&s.cfg))?;
    let mut out = problem_report(&s, "critical");
    out.float("kappa_lo", report.kappa_lo)
        .float("kappa_hi", report.kappa_hi)
        .float("kappa_star_estimate", report.kappa_star_estimate)
        .float("analytic_upper", report.analytic_upper)
        .float("lambda_B", report.lambda_b)
        .float("bracket_rel_width", report.bracket_rel_width)
        .int("solves", report.solves)
        .int("maxiter_probes", report.maxiter_probes)
        .flag("upper_bound_exceeded", report.upper_bound_exceeded)
        .flag("estimate_below_upper", report.kappa_star_estimate <= report.analytic_upper);
    let lambdas: Vec<f64> = report.lambda1_trace.iter().map(|&(_, l)| l).collect();
    out.flag("lambda1_decreasing", lambdas.windows(2).all(|w| w[1] < w[0]));
    let h1: Vec<f64> = report.h1_trace.iter().map(|&(_, h)| h).collect();
    if !h1.is_empty() {
        let max = h1.iter().cloned().fold(f64::MIN, f64::max);
        let min = h1.iter().cloned().fold(f64::MAX, f64::min);
        out.float("h1_max_over_min", max / min);
    }
    match solve_at_critical(&report, &s.spec, &s.kernel, &s.mu0, &s.cfg.iteration) {
        Ok(crit) => {
            out.float("lambda1_at_kappa_lo", crit.lambda1)
                .float("h1_norm_w_at_kappa_lo", crit.h1_norm_w)
                .float("sup_w_at_kappa_lo", crit.sup_w)
                .int("iterations_at_kappa_lo", crit.solution.j_used);
            write(&s.cfg.out, "critical_solution.csv", &crit.solution.u.to_field().to_csv_named("u"))?;
        }
        Err(e) => {
            out.text("critical_solve_error", e.to_string());
        }
    }
    write(&s.cfg.out, "critical_report.txt", &out.to_text())?;
    write(&s.cfg.out, "critical_trace.csv", &report.to_csv())?;
    emit(&out, c.json);
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(c: &Common) -> Outcome {
    let s = setup(c, false)?;
    let sweep = &s.cfg.sweep;
    let kappa_max = match sweep.kappa_max {
        Some(k) => k,
        None => kappa_upper_bound(s.spec.p, &s.mu0, &BallTestFunction::new(s.kernel.grid().clone())?)?,
    };
    let kappa_min = sweep.kappa_min.unwrap_or(kappa_max / 100.0);
    if kappa_min >= kappa_max {
        return Err(Failure::Usage("sweep.kappa_min must be below sweep.kappa_max".into()));
    }
    let m = sweep.points - 1;
    let kappas: Vec<f64> = (0..=m)
        .map(|k| {
            let t = k as f64 / m as f64;
            match sweep.spacing {
                Spacing::Linear => kappa_min + t * (kappa_max - kappa_min),
                Spacing::Geometric => kappa_min * (kappa_max / kappa_min).powf(t),
            }
        })
        .collect();
    let rows: Vec<String> = kappas
        .par_iter()
        .map(|&kappa| -> Result<String, Failure> {
            let outcome = solve_minimal(&s.spec.with_kappa(kappa), &s.kernel, &s.mu0, &s.cfg.iteration)?;
            let fmt = |v: f64| format!("{v:.16e}");
            let mut fields = vec![fmt(kappa), outcome.trace.status.label().to_string(), outcome.trace.j.to_string()];
            match &outcome.solution {
                Some(sol) => {
                    let u = sol.u.values();
                    let eigen = linearized_eigenpair(&u, s.spec.p, s.kernel.grid().clone())?;
                    fields.extend([
                        fmt(sol.residual),
                        fmt(eigen.lambda1),
                        fmt(sol.u.sup()),
                        fmt(sol.w_field.h1_norm()?),
                        fmt(sol.w_field.sup_abs()),
                    ]);
                }
                None => fields.extend(std::iter::repeat_n(String::new(), 5)),
            }
            Ok(fields.join(","))
        })
        .collect::<Result<_, _>>()?;
    let mut csv = String::from("kappa,status,iterations,residual,lambda1,sup_u,h1_norm_w,sup_w\n");
    for row in &rows {
        csv.push_str(row);
        csv.push('\n');
    }
    write(&s.cfg.out, "sweep.csv", &csv)?;
    let mut out = problem_report(&s, "sweep");
    out.float("kappa_min", kappa_min).float("kappa_max", kappa_max).int("points", sweep.points);
    emit(&out, c.json);
    if !c.json {
        print!("{csv}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_kernel_check(c: &Common) -> Outcome {
    let s = setup(c, false)?;
    let defect = s.kernel.mass_defect();
    let n = defect.len();
    let inner = defect[..n / 2].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let all = defect.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let g = unit_ball_potential(&s.kernel);
    let grid = s.kernel.grid();
    let mut out = problem_report(&s, "kernel-check");
    out.float("mass_defect_inner", inner)
        .float("mass_defect_max", all)
        .float("symmetry_defect", s.kernel.symmetry_defect())
        .float("g_first_node", g.values()[0])
        .float("g_over_green_at_r_max", g.values()[n - 1] / grid.green()[n - 1]);
    for sigma in [1.2, 2.0] {
        let check = check_green_properties(&s.kernel, sigma)?;
        let key = format!("sigma_{sigma}");
        out.float(&format!("{key}_sup_ratio"), check.sup_ratio).float(&format!("{key}_min_ratio"), check.min_ratio);
    }
    write(&s.cfg.out, "kernel_report.txt", &out.to_text())?;
    emit(&out, c.json);
    Ok(ExitCode::SUCCESS)
}

//! The extremal constant κ*: an analytic upper bound from a ball test
//! function, bisection on the convergence of the monotone scheme, and the
//! behaviour of `λ₁` and the remainder `w` as κ approaches κ*.

use std::fmt::Write as _;
use std::sync::Arc;

use num_rational::BigRational;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exponents::{
    admissible_q_range, below_joseph_lundgren_exact, joseph_lundgren_exponent, nu_window, rational_from_f64,
    sobolev_exponent, Extended, NuWindow, QRange,
};
use crate::field::{RadialField, TailMode};
use crate::grid::RadialGrid;
use crate::iterate::{solve_minimal, IterationSettings, IterationStatus, MinimalSolution, ProblemSpec};
use crate::kernel::KernelMatrix;
use crate::measure::{Mu0, SourceMeasure};
use crate::real::Real;
use crate::special::{bessel_j, bessel_j_first_zero};
use crate::spectrum::linearized_eigenpair;

/// First Dirichlet eigenpair of `−Δ + 1` on the unit ball, extended by zero.
#[derive(Debug, Clone)]
pub struct BallTestFunction<T> {
    /// `1 + j²` with `j` the first zero of `J_{N/2−1}`.
    pub lambda_b: T,
    /// `r^{−ν} J_ν(j r)` on `r < 1`, zero outside.
    pub psi_b: RadialField<T>,
}

impl<T: Real> BallTestFunction<T> {
    pub fn new(grid: Arc<RadialGrid<T>>) -> Result<Self> {
        let twice_order = grid.dim() - 2;
        let zero = bessel_j_first_zero::<T>(twice_order);
        let nu = T::lit(f64::from(twice_order) / 2.0);
        let psi_b = RadialField::from_fn(grid, TailMode::Zero, |r| {
            if r < T::one() {
                r.powf(-nu) * bessel_j(twice_order, zero * r)
            } else {
                T::zero()
            }
        })?;
        Ok(Self { lambda_b: T::one() + zero * zero, psi_b })
    }
}

/// `[(λ_B/p) ∫ψ_B² / ∫μ₀^{p−1}ψ_B²]^{1/(p−1)}`: no solution exists for κ
/// above this value.
pub fn kappa_upper_bound<T: Real>(p: T, mu0: &Mu0<T>, ball: &BallTestFunction<T>) -> Result<T> {
    if !(p > T::one()) {
        return Err(Error::InvalidExponent(p.to_f64_lossy()));
    }
    let grid = ball.psi_b.grid();
    let psi = ball.psi_b.values();
    let squares: Vec<T> = psi.iter().map(|&v| v * v).collect();
    let weighted: Vec<T> =
        (0..psi.len()).map(|i| mu0.value(i).max(T::zero()).powf(p - T::one()) * squares[i]).collect();
    let den = grid.integrate(&weighted);
    if !(den > T::zero()) {
        return Err(Error::Degenerate("∫μ₀^{p−1}ψ² vanishes".into()));
    }
    Ok((ball.lambda_b / p * grid.integrate(&squares) / den).powf((p - T::one()).recip()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalSettings {
    /// Target `(κ_hi − κ_lo)/κ_lo`.
    pub rel_tol: f64,
    pub iteration: IterationSettings,
    /// First probe as a fraction of the analytic bound; must converge.
    pub initial_fraction: f64,
    /// Upper end of the first bracket as a multiple of the analytic bound.
    pub upper_margin: f64,
    pub max_solves: usize,
    /// Sample `κ*·2^{−k}` for `k = 1..=levels` in the `λ₁` trace.
    pub trace_levels: usize,
    /// `H¹` norms of `w` are recorded for `κ ≥ h1_floor · κ*`.
    pub h1_floor: f64,
}

impl Default for CriticalSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-2,
            iteration: IterationSettings::default(),
            initial_fraction: 1e-3,
            upper_margin: 1.01,
            max_solves: 60,
            trace_levels: 5,
            h1_floor: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe<T> {
    pub kappa: T,
    pub status: IterationStatus,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalTraceRow<T> {
    pub kappa: T,
    pub status: IterationStatus,
    pub lambda1: Option<T>,
    pub h1_norm: Option<T>,
    pub sup_w: Option<T>,
}

#[derive(Debug, Clone)]
pub struct CriticalReport<T> {
    pub kappa_lo: T,
    pub kappa_hi: T,
    pub kappa_star_estimate: T,
    pub analytic_upper: T,
    pub lambda_b: T,
    /// `(κ_hi − κ_lo)/κ_lo`
    pub bracket_rel_width: T,
    /// Classification solves, including the two initial bracket probes.
    pub solves: usize,
    /// Probes that hit the iteration cap and were counted as not converged.
    pub maxiter_probes: usize,
    /// Set when the probe just above the analytic bound converged.
    pub upper_bound_exceeded: bool,
    pub probes: Vec<Probe<T>>,
    pub rows: Vec<CriticalTraceRow<T>>,
    pub lambda1_trace: Vec<(T, T)>,
    pub h1_trace: Vec<(T, T)>,
}

impl<T: Real> CriticalReport<T> {
    /// `key = value` lines.
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("writing to a String");
        kv("kappa_lo", sci(self.kappa_lo));
        kv("kappa_hi", sci(self.kappa_hi));
        kv("kappa_star_estimate", sci(self.kappa_star_estimate));
        kv("analytic_upper", sci(self.analytic_upper));
        kv("lambda_B", sci(self.lambda_b));
        kv("bracket_rel_width", sci(self.bracket_rel_width));
        kv("solves", self.solves.to_string());
        kv("maxiter_probes", self.maxiter_probes.to_string());
        kv("upper_bound_exceeded", self.upper_bound_exceeded.to_string());
        kv("estimate_below_upper", (self.kappa_star_estimate <= self.analytic_upper).to_string());
        out
    }

    /// `kappa,status,lambda1,h1_norm,sup_w`; missing values are empty.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<T>| v.map(sci).unwrap_or_default();
        let mut out = String::from("kappa,status,lambda1,h1_norm,sup_w\n");
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                sci(row.kappa),
                row.status.label(),
                opt(row.lambda1),
                opt(row.h1_norm),
                opt(row.sup_w)
            )
            .expect("writing to a String");
        }
        out
    }
}

pub(crate) fn sci<T: Real>(v: T) -> String {
    format!("{:.16e}", v.to_f64_lossy())
}

/// Brackets κ* between the largest converged and the smallest
/// non-converged probe, then samples `λ₁` and `‖w‖_{H¹}` below it.
pub fn bisect_kappa_star<T: Real>(
    spec: &ProblemSpec<T>,
    kernel: &KernelMatrix<T>,
    mu0: &Mu0<T>,
    settings: &CriticalSettings,
) -> Result<CriticalReport<T>> {
    if !(settings.rel_tol > 1e-4 && settings.rel_tol < 0.5) {
        return Err(Error::InvalidArgument(format!("rel_tol must lie in (1e-4, 0.5), got {}", settings.rel_tol)));
    }
    let ball = BallTestFunction::new(kernel.grid().clone())?;
    let upper = kappa_upper_bound(spec.p, mu0, &ball)?;
    let mut probes = Vec::new();
    let mut converged: Vec<(T, MinimalSolution<T>)> = Vec::new();
    let mut classify = |kappa: T, probes: &mut Vec<Probe<T>>| -> Result<bool> {
        let outcome = solve_minimal(&spec.with_kappa(kappa), kernel, mu0, &settings.iteration)?;
        probes.push(Probe { kappa, status: outcome.trace.status, iterations: outcome.trace.j });
        Ok(match outcome.solution {
            Some(sol) => {
                converged.push((kappa, sol));
                true
            }
            None => false,
        })
    };

    let mut lo = upper * T::lit(settings.initial_fraction);
    if !classify(lo, &mut probes)? {
        return Err(Error::Setup(format!(
            "no convergence at kappa = {:e}; check the grid and tolerances",
            lo.to_f64_lossy()
        )));
    }
    let mut hi = upper * T::lit(settings.upper_margin);
    let mut upper_bound_exceeded = false;
    while classify(hi, &mut probes)? {
        upper_bound_exceeded = true;
        lo = hi;
        hi = hi + hi;
        if probes.len() >= settings.max_solves {
            return Err(Error::Setup("no non-converged probe found above the analytic bound".into()));
        }
    }
    let width = |lo: T, hi: T| (hi - lo) / lo;
    while width(lo, hi) > T::lit(settings.rel_tol) && probes.len() < settings.max_solves {
        let mid = if hi / lo > T::lit(4.0) { (lo * hi).sqrt() } else { T::lit(0.5) * (lo + hi) };
        if classify(mid, &mut probes)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let estimate = T::lit(0.5) * (lo + hi);
    let maxiter_probes = probes.iter().filter(|p| p.status == IterationStatus::MaxIter).count();

    let rows = critical_traces(spec, kernel, mu0, settings, estimate, lo, &converged, &probes)?;
    let lambda1_trace = rows.iter().filter_map(|r| r.lambda1.map(|l| (r.kappa, l))).collect();
    let h1_trace = rows.iter().filter_map(|r| r.h1_norm.map(|h| (r.kappa, h))).collect();
    Ok(CriticalReport {
        kappa_lo: lo,
        kappa_hi: hi,
        kappa_star_estimate: estimate,
        analytic_upper: upper,
        lambda_b: ball.lambda_b,
        bracket_rel_width: width(lo, hi),
        solves: probes.len(),
        maxiter_probes,
        upper_bound_exceeded,
        probes,
        rows,
        lambda1_trace,
        h1_trace,
    })
}

/// Rows for the geometric grid `κ*·2^{−k}`, every converged probe, and the
/// non-converged probes (without diagnostics), sorted by κ.
#[allow(clippy::too_many_arguments)]
fn critical_traces<T: Real>(
    spec: &ProblemSpec<T>,
    kernel: &KernelMatrix<T>,
    mu0: &Mu0<T>,
    settings: &CriticalSettings,
    estimate: T,
    kappa_lo: T,
    converged: &[(T, MinimalSolution<T>)],
    probes: &[Probe<T>],
) -> Result<Vec<CriticalTraceRow<T>>> {
    let h1_floor = T::lit(settings.h1_floor) * estimate;
    let diagnose = |kappa: T, sol: &MinimalSolution<T>| -> Result<CriticalTraceRow<T>> {
        let eigen = linearized_eigenpair(&sol.u.values(), spec.p, kernel.grid().clone())?;
        let (h1_norm, sup_w) =
            if kappa >= h1_floor { (Some(sol.w_field.h1_norm()?), Some(sol.w_field.sup_abs())) } else { (None, None) };
        Ok(CriticalTraceRow { kappa, status: IterationStatus::Converged, lambda1: Some(eigen.lambda1), h1_norm, sup_w })
    };
    let geometric: Vec<T> = (1..=settings.trace_levels)
        .map(|k| estimate * T::lit(0.5f64.powi(k as i32)))
        .filter(|&k| k < kappa_lo && converged.iter().all(|(c, _)| *c != k))
        .collect();
    let mut rows: Vec<CriticalTraceRow<T>> = geometric
        .par_iter()
        .map(|&kappa| {
            let outcome = solve_minimal(&spec.with_kappa(kappa), kernel, mu0, &settings.iteration)?;
            match outcome.solution {
                Some(sol) => diagnose(kappa, &sol),
                None => Ok(CriticalTraceRow {
                    kappa,
                    status: outcome.trace.status,
                    lambda1: None,
                    h1_norm: None,
                    sup_w: None,
                }),
            }
        })
        .collect::<Result<_>>()?;
    let probed: Vec<CriticalTraceRow<T>> =
        converged.par_iter().map(|(kappa, sol)| diagnose(*kappa, sol)).collect::<Result<_>>()?;
    rows.extend(probed);
    rows.extend(probes.iter().filter(|p| !p.status.is_converged()).map(|p| CriticalTraceRow {
        kappa: p.kappa,
        status: p.status,
        lambda1: None,
        h1_norm: None,
        sup_w: None,
    }));
    rows.sort_by(|a, b| a.kappa.partial_cmp(&b.kappa).expect("finite kappa"));
    Ok(rows)
}

/// Solution at the last certified κ (`kappa_lo`), the proxy for the
/// solution at κ*, with its stability diagnostics.
#[derive(Debug, Clone)]
pub struct CriticalSolution<T> {
    pub kappa: T,
    pub solution: MinimalSolution<T>,
    pub lambda1: T,
    pub h1_norm_w: T,
    pub sup_w: T,
}

pub fn solve_at_critical<T: Real>(
    report: &CriticalReport<T>,
    spec: &ProblemSpec<T>,
    kernel: &KernelMatrix<T>,
    mu0: &Mu0<T>,
    settings: &IterationSettings,
) -> Result<CriticalSolution<T>> {
    if report.bracket_rel_width > T::lit(0.0101) {
        return Err(Error::InvalidArgument("bracket must be resolved to rel_tol <= 0.01 first".into()));
    }
    let tightened = IterationSettings { tol: settings.tol / 10.0, ..*settings };
    let kappa = report.kappa_lo;
    let outcome = solve_minimal(&spec.with_kappa(kappa), kernel, mu0, &tightened)?;
    let solution = outcome.solution.ok_or_else(|| {
        Error::Degenerate(format!(
            "no convergence at kappa_lo = {:e} ({})",
            kappa.to_f64_lossy(),
            outcome.trace.status.label()
        ))
    })?;
    let eigen = linearized_eigenpair(&solution.u.values(), spec.p, kernel.grid().clone())?;
    let h1_norm_w = solution.w_field.h1_norm()?;
    let sup_w = solution.w_field.sup_abs();
    Ok(CriticalSolution { kappa, solution, lambda1: eigen.lambda1, h1_norm_w, sup_w })
}

/// How `p` compares with a threshold exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Below,
    Equal,
    Above,
}

impl Comparison {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Below => "below",
            Self::Equal => "equal",
            Self::Above => "above",
        }
    }
}

/// What the existence and uniqueness theory says about `(N, p, μ)`.
#[derive(Debug, Clone)]
pub struct Classification<T> {
    pub dim: u32,
    pub p: T,
    pub q_range: QRange<T>,
    pub p_sobolev: Extended<T>,
    pub p_jl: Extended<T>,
    pub versus_sobolev: Comparison,
    pub below_jl: bool,
    pub nu_window: NuWindow<T>,
    pub statements: Vec<String>,
}

pub fn classify<T: Real>(dim: u32, p: T, measure: &SourceMeasure<T>) -> Result<Classification<T>> {
    let q_range = admissible_q_range(dim, p, measure)?;
    let p_sobolev = sobolev_exponent::<T>(dim)?;
    let p_jl = joseph_lundgren_exponent::<T>(dim)?;
    let p_exact: BigRational = rational_from_f64(p.to_f64_lossy())?;
    let versus_sobolev = if dim == 2 {
        Comparison::Below
    } else {
        let ps = BigRational::new((dim + 2).into(), (dim - 2).into());
        match p_exact.cmp(&ps) {
            std::cmp::Ordering::Less => Comparison::Below,
            std::cmp::Ordering::Equal => Comparison::Equal,
            std::cmp::Ordering::Greater => Comparison::Above,
        }
    };
    let below_jl = below_joseph_lundgren_exact(dim, &p_exact)?;
    let window = nu_window(dim, p)?;
    let mut statements = Vec::new();
    if q_range.is_empty() {
        statements.push("no admissible q: existence hypotheses not met".to_string());
    } else {
        statements.push("solutions exist for 0 < kappa < kappa*".to_string());
        statements.push("no solutions for kappa > kappa*".to_string());
        statements.push("a solution exists at kappa = kappa*".to_string());
        if below_jl {
            statements.push("the solution at kappa* is unique".to_string());
        } else {
            statements.push("critical-point uniqueness not covered".to_string());
        }
    }
    Ok(Classification { dim, p, q_range, p_sobolev, p_jl, versus_sobolev, below_jl, nu_window: window, statements })
}

//! Monotone Picard iteration `U_j = G∗U_{j−1}^p + κμ₀`, `U_0 = κμ₀`, whose
//! increasing limit is the minimal solution.

use num_rational::BigRational;

use crate::error::{Error, Result};
use crate::exponents::{admissible_q_range, bootstrap_chain, rational_from_f64};
use crate::field::{RadialField, SplitField, TailMode};
use crate::kernel::KernelMatrix;
use crate::measure::{Mu0, SourceMeasure};
use crate::real::Real;

/// An instance `(N, p, μ, κ)` together with its integrability exponent `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec<T> {
    pub dim: u32,
    pub p: T,
    pub measure: SourceMeasure<T>,
    pub kappa: T,
    pub q: BigRational,
}

impl<T: Real> ProblemSpec<T> {
    /// Uses the representative point of the admissible `q` range; fails when
    /// that range is empty.
    pub fn new(dim: u32, p: T, measure: SourceMeasure<T>, kappa: T) -> Result<Self> {
        let range = admissible_q_range(dim, p, &measure)?;
        let q = range.representative().ok_or_else(|| {
            Error::InvalidArgument(format!("no admissible q for N = {dim}, p = {}", p.to_f64_lossy()))
        })?;
        let spec = Self { dim, p, measure, kappa, q: rational_from_f64(q.to_f64_lossy())? };
        spec.validate()?;
        Ok(spec)
    }

    /// Skips the admissibility requirement on `q`; only basic domain checks.
    pub fn unchecked(dim: u32, p: T, measure: SourceMeasure<T>, kappa: T) -> Result<Self> {
        let q = admissible_q_range(dim, p, &measure)?.representative().unwrap_or(T::lit(2.0) * p);
        let spec = Self { dim, p, measure, kappa, q: rational_from_f64(q.to_f64_lossy())? };
        spec.validate_basic()?;
        Ok(spec)
    }

    pub fn with_kappa(&self, kappa: T) -> Self {
        Self { kappa, ..self.clone() }
    }

    pub fn with_q(mut self, q: BigRational) -> Result<Self> {
        self.q = q;
        self.validate()?;
        Ok(self)
    }

    fn validate_basic(&self) -> Result<()> {
        if !(self.p > T::one()) || !self.p.is_finite() {
            return Err(Error::InvalidExponent(self.p.to_f64_lossy()));
        }
        if !(self.kappa > T::zero()) || !self.kappa.is_finite() {
            return Err(Error::InvalidArgument(format!("kappa must be positive, got {}", self.kappa.to_f64_lossy())));
        }
        self.measure.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_basic()?;
        let range = admissible_q_range(self.dim, self.p, &self.measure)?;
        let q = T::lit(num_traits::ToPrimitive::to_f64(&self.q).unwrap_or(f64::NAN));
        if !range.contains(q) {
            return Err(Error::InvalidArgument(format!(
                "q = {} outside the admissible range ({}, {})",
                self.q, range.lower, range.upper
            )));
        }
        Ok(())
    }

    /// Index `j*` after which `U_j` has shed the singular part of `μ₀`
    /// (first `j` with `1/q_j < 0`); falls back to 1 when `q` admits no
    /// chain.
    pub fn j_star(&self) -> usize {
        rational_from_f64(self.p.to_f64_lossy())
            .and_then(|p| bootstrap_chain(self.dim, &p, &self.q))
            .map(|chain| chain.j_star)
            .unwrap_or(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationSettings {
    /// Convergence when `sup |U_{j+1} − U_j| ≤ tol`.
    pub tol: f64,
    pub j_max: usize,
    /// Divergence when the sup of the regular part reaches this value.
    pub blowup: f64,
    /// Divergence after this many consecutive non-decreasing increments.
    pub stall_window: usize,
    /// Allowed decrease `U_j − U_{j+1}` before a step counts as non-monotone.
    pub monotone_slack: f64,
}

impl Default for IterationSettings {
    fn default() -> Self {
        Self { tol: 1e-10, j_max: 5000, blowup: 1e8, stall_window: 20, monotone_slack: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceReason {
    Blowup,
    Stalled,
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterationStatus {
    Converged,
    Diverged(DivergenceReason),
    MaxIter,
}

impl IterationStatus {
    pub fn is_converged(&self) -> bool {
        matches!(self, Self::Converged)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::Diverged(_) => "diverged",
            Self::MaxIter => "maxiter",
        }
    }
}

/// One row per iterate `U_j`: `sup V_j` (with `V_0 = U_0`), `sup U_j`, and
/// the residual `sup |U_j − G∗U_j^p − κμ₀| = sup V_{j+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow<T> {
    pub j: usize,
    pub sup_v: T,
    pub sup_u: T,
    pub residual: T,
}

#[derive(Debug, Clone)]
pub struct IterationTrace<T> {
    pub rows: Vec<TraceRow<T>>,
    pub status: IterationStatus,
    /// Number of steps with `U_{j+1} < U_j − slack` at some node.
    pub monotonicity_violations: usize,
    /// Iterate with index `j` (the last one whose residual is known).
    pub latest: SplitField<T>,
    pub previous: Option<SplitField<T>>,
    pub j: usize,
    /// Iterates `U_j` kept for `j ≤ j*` and `j` a power of two.
    pub snapshots: Vec<(usize, SplitField<T>)>,
}

impl<T: Real> IterationTrace<T> {
    pub fn snapshot(&self, j: usize) -> Option<&SplitField<T>> {
        self.snapshots.iter().find(|(k, _)| *k == j).map(|(_, u)| u)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,sup_V_j,sup_U_j,residual\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e}\n",
                row.j,
                row.sup_v.to_f64_lossy(),
                row.sup_u.to_f64_lossy(),
                row.residual.to_f64_lossy()
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct MinimalSolution<T> {
    pub u: SplitField<T>,
    pub residual: T,
    pub j_used: usize,
    pub j_star: usize,
    /// `u − U_{j*}`.
    pub w_field: RadialField<T>,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome<T> {
    pub trace: IterationTrace<T>,
    pub solution: Option<MinimalSolution<T>>,
}

/// `G∗U^p + κμ₀`. The singular coefficient of the result is `κ` times that of
/// `μ₀`; the convolution is entirely regular.
pub fn picard_step<T: Real>(
    u: &SplitField<T>,
    spec: &ProblemSpec<T>,
    kernel: &KernelMatrix<T>,
    mu0: &Mu0<T>,
) -> SplitField<T> {
    let powered: Vec<T> = (0..u.len()).map(|i| u.value(i).max(T::zero()).powf(spec.p)).collect();
    let mut values = kernel.apply(&powered, TailMode::GreenProportional);
    for (v, &m) in values.iter_mut().zip(mu0.regular().values()) {
        *v = *v + spec.kappa * m;
    }
    SplitField::new(
        spec.kappa * mu0.singular(),
        RadialField::from_parts(kernel.grid().clone(), values, TailMode::GreenProportional),
    )
}

/// `sup |u − G∗u^p − κμ₀|` over the nodes; the singular parts cancel.
pub fn residual<T: Real>(u: &SplitField<T>, spec: &ProblemSpec<T>, kernel: &KernelMatrix<T>, mu0: &Mu0<T>) -> T {
    let next = picard_step(u, spec, kernel, mu0);
    let singular_gap = (u.singular() - next.singular()).abs();
    next.regular()
        .values()
        .iter()
        .zip(u.regular().values())
        .zip(kernel.grid().green())
        .fold(T::zero(), |m, ((&a, &b), &g)| m.max((b - a + singular_gap * g).abs()))
}

pub fn initial_iterate<T: Real>(spec: &ProblemSpec<T>, mu0: &Mu0<T>) -> SplitField<T> {
    mu0.scaled(spec.kappa)
}

pub fn solve_minimal<T: Real>(
    spec: &ProblemSpec<T>,
    kernel: &KernelMatrix<T>,
    mu0: &Mu0<T>,
    settings: &IterationSettings,
) -> Result<SolveOutcome<T>> {
    solve_minimal_observed(spec, kernel, mu0, settings, |_, _| {})
}

/// [`solve_minimal`] calling `observer(j, U_j)` for every iterate produced.
pub fn solve_minimal_observed<T: Real>(
    spec: &ProblemSpec<T>,
    kernel: &KernelMatrix<T>,
    mu0: &Mu0<T>,
    settings: &IterationSettings,
    mut observer: impl FnMut(usize, &SplitField<T>),
) -> Result<SolveOutcome<T>> {
    if !(settings.tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    if !same_grid(kernel, mu0) {
        return Err(Error::IncompatibleGrid);
    }
    let tol = T::lit(settings.tol);
    let blowup = T::lit(settings.blowup);
    let slack = T::lit(settings.monotone_slack);
    let j_star = spec.j_star();
    let start = initial_iterate(spec, mu0);
    if !(blowup > start.regular().sup()) {
        return Err(Error::InvalidArgument("blowup threshold must exceed the initial iterate".into()));
    }

    let mut current = start;
    let mut previous: Option<SplitField<T>> = None;
    let mut rows = Vec::new();
    let mut snapshots = vec![(0, current.clone())];
    let mut violations = 0usize;
    let mut stalled = 0usize;
    let mut sup_v_current = current.sup();
    observer(0, &current);
    let mut status = IterationStatus::MaxIter;
    let mut j = 0usize;
    loop {
        let next = picard_step(&current, spec, kernel, mu0);
        let mut sup_v = T::zero();
        let mut decreased = false;
        let mut finite = true;
        for (&a, &b) in next.regular().values().iter().zip(current.regular().values()) {
            let v = a - b;
            finite &= v.is_finite();
            sup_v = sup_v.max(v.abs());
            decreased |= v < -slack;
        }
        if decreased {
            violations += 1;
        }
        rows.push(TraceRow { j, sup_v: sup_v_current, sup_u: current.sup(), residual: sup_v });
        if !finite {
            status = IterationStatus::Diverged(DivergenceReason::NonFinite);
            break;
        }
        if sup_v <= tol {
            status = IterationStatus::Converged;
            break;
        }
        if j + 1 > settings.j_max {
            break;
        }
        if next.regular().sup() >= blowup {
            status = IterationStatus::Diverged(DivergenceReason::Blowup);
            advance(&mut previous, &mut current, next, &mut j, &mut snapshots, j_star, &mut observer);
            rows.push(TraceRow { j, sup_v, sup_u: current.sup(), residual: T::nan() });
            break;
        }
        stalled = if sup_v >= sup_v_current && sup_v_current > tol { stalled + 1 } else { 0 };
        sup_v_current = sup_v;
        advance(&mut previous, &mut current, next, &mut j, &mut snapshots, j_star, &mut observer);
        if stalled >= settings.stall_window {
            status = IterationStatus::Diverged(DivergenceReason::Stalled);
            rows.push(TraceRow { j, sup_v, sup_u: current.sup(), residual: T::nan() });
            break;
        }
    }

    let solution = status.is_converged().then(|| {
        let reference =
            snapshots.iter().rev().find(|(k, _)| *k <= j_star.min(j)).map(|(_, u)| u).expect("U_0 is always kept");
        let values = (0..current.len()).map(|i| current.value(i) - reference.value(i)).collect();
        MinimalSolution {
            u: current.clone(),
            residual: rows.last().expect("at least one row").residual,
            j_used: j,
            j_star,
            w_field: RadialField::from_parts(kernel.grid().clone(), values, TailMode::GreenProportional),
        }
    });
    let trace =
        IterationTrace { rows, status, monotonicity_violations: violations, latest: current, previous, j, snapshots };
    Ok(SolveOutcome { trace, solution })
}

fn same_grid<T: Real>(kernel: &KernelMatrix<T>, mu0: &Mu0<T>) -> bool {
    std::sync::Arc::ptr_eq(kernel.grid(), mu0.grid()) || kernel.grid().same_as(mu0.grid())
}

fn advance<T: Real>(
    previous: &mut Option<SplitField<T>>,
    current: &mut SplitField<T>,
    next: SplitField<T>,
    j: &mut usize,
    snapshots: &mut Vec<(usize, SplitField<T>)>,
    j_star: usize,
    observer: &mut impl FnMut(usize, &SplitField<T>),
) {
    *previous = Some(std::mem::replace(current, next));
    *j += 1;
    if *j <= j_star || j.is_power_of_two() {
        snapshots.push((*j, current.clone()));
    }
    observer(*j, current);
}

/// Outcome of testing `v ≥ G∗v^p + κμ₀` at the nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupersolutionCheck<T> {
    pub holds: bool,
    /// `min_i (v − G∗v^p − κμ₀)(r_i)`.
    pub margin: T,
}

pub fn verify_supersolution<T: Real>(
    v: &SplitField<T>,
    spec: &ProblemSpec<T>,
    kernel: &KernelMatrix<T>,
    mu0: &Mu0<T>,
    tolerance: T,
) -> SupersolutionCheck<T> {
    let image = picard_step(v, spec, kernel, mu0);
    let margin = (0..v.len()).fold(T::infinity(), |m, i| m.min(v.value(i) - image.value(i)));
    SupersolutionCheck { holds: margin >= -tolerance, margin }
}

/// `U_j` after exactly `j` steps.
pub fn iterate_n<T: Real>(spec: &ProblemSpec<T>, kernel: &KernelMatrix<T>, mu0: &Mu0<T>, j: usize) -> SplitField<T> {
    let mut u = initial_iterate(spec, mu0);
    for _ in 0..j {
        u = picard_step(&u, spec, kernel, mu0);
    }
    u
}

/// `max_i (U_j^{κ+ε} − U_j^κ)(r_i) / (ε U_j^κ(r_i))`.
pub fn perturbation_ratio<T: Real>(
    spec: &ProblemSpec<T>,
    kernel: &KernelMatrix<T>,
    mu0: &Mu0<T>,
    eps: T,
    j: usize,
) -> Result<T> {
    if !(eps > T::zero() && eps <= T::one()) {
        return Err(Error::InvalidArgument("eps must lie in (0, 1]".into()));
    }
    let (base, bumped) = rayon::join(
        || iterate_n(spec, kernel, mu0, j),
        || iterate_n(&spec.with_kappa(spec.kappa + eps), kernel, mu0, j),
    );
    Ok((0..base.len()).fold(T::neg_infinity(), |m, i| m.max((bumped.value(i) - base.value(i)) / (eps * base.value(i)))))
}

/// `min_i U(r_i)/g(r_i)` for the latest iterate of a trace with `j ≥ 1`.
pub fn lower_bound_vs_g<T: Real>(trace: &IterationTrace<T>, g: &RadialField<T>) -> Result<T> {
    if trace.j < 1 {
        return Err(Error::InvalidArgument("need at least one Picard step".into()));
    }
    field_ratio_min(&trace.latest, g)
}

/// `min_i U(r_i)/g(r_i)`.
pub fn field_ratio_min<T: Real>(u: &SplitField<T>, g: &RadialField<T>) -> Result<T> {
    u.regular().check_grid(g)?;
    Ok((0..u.len()).fold(T::infinity(), |m, i| m.min(u.value(i) / g.values()[i])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, RadialGrid};
    use crate::measure::compute_mu0;
    use std::sync::Arc;

    fn setup() -> (KernelMatrix<f64>, Mu0<f64>, ProblemSpec<f64>) {
        let measure = SourceMeasure::UniformBall { radius: 1.0, mass: 1.0 };
        let grid = Arc::new(RadialGrid::build(3, &GridSpec::new(256, 20.0), &measure.breakpoints()).unwrap());
        let kernel = KernelMatrix::build(grid).unwrap();
        let mu0 = compute_mu0(&measure, &kernel).unwrap();
        let spec = ProblemSpec::new(3, 2.0, measure, 0.05).unwrap();
        (kernel, mu0, spec)
    }

    #[test]
    fn spec_validation() {
        let ball = SourceMeasure::UniformBall { radius: 1.0, mass: 1.0 };
        assert!(ProblemSpec::new(3, 2.0, ball, -1.0).is_err());
        assert!(ProblemSpec::new(3, 1.0, ball, 1.0).is_err());
        assert!(ProblemSpec::new(3, 3.0, SourceMeasure::DiracOrigin { mass: 1.0 }, 1.0).is_err());
        assert!(ProblemSpec::unchecked(3, 3.0, SourceMeasure::DiracOrigin { mass: 1.0 }, 1.0).is_ok());
        let spec = ProblemSpec::new(3, 2.0, SourceMeasure::DiracOrigin { mass: 1.0 }, 1.0).unwrap();
        assert_eq!(spec.q, rational_from_f64(2.5).unwrap());
    }

    #[test]
    fn first_steps() {
        let (kernel, mu0, spec) = setup();
        let u0 = picard_step(
            &SplitField::regular_only(RadialField::zeros(kernel.grid().clone(), TailMode::Zero)),
            &spec,
            &kernel,
            &mu0,
        );
        for i in 0..u0.len() {
            assert!((u0.value(i) - 0.05 * mu0.value(i)).abs() <= 1e-18);
        }
        let u1 = picard_step(&u0, &spec, &kernel, &mu0);
        assert!((0..u1.len()).all(|i| u1.value(i) >= u0.value(i)));
        let r = residual(&u0, &spec, &kernel, &mu0);
        let direct = (0..u1.len()).map(|i| u1.value(i) - u0.value(i)).fold(0.0f64, f64::max);
        assert!((r - direct).abs() <= 1e-15 * direct.max(1.0));
    }

    #[test]
    fn converges_and_diverges() {
        let (kernel, mu0, spec) = setup();
        let out = solve_minimal(&spec, &kernel, &mu0, &IterationSettings::default()).unwrap();
        assert_eq!(out.trace.status, IterationStatus::Converged);
        assert_eq!(out.trace.monotonicity_violations, 0);
        let sol = out.solution.unwrap();
        assert!(sol.residual <= 1e-10);
        assert!(residual(&sol.u, &spec, &kernel, &mu0) <= 1e-10);
        let big = spec.with_kappa(1e3);
        let out = solve_minimal(&big, &kernel, &mu0, &IterationSettings::default()).unwrap();
        assert!(matches!(out.trace.status, IterationStatus::Diverged(_)));
        assert!(out.solution.is_none());
        let capped = IterationSettings { j_max: 2, tol: 1e-300, ..IterationSettings::default() };
        let out = solve_minimal(&spec, &kernel, &mu0, &capped).unwrap();
        assert_eq!(out.trace.status, IterationStatus::MaxIter);
    }

    #[test]
    fn perturbation_ratio_at_zero_steps() {
        let (kernel, mu0, spec) = setup();
        let r = perturbation_ratio(&spec, &kernel, &mu0, 0.01, 0).unwrap();
        assert!((r - 1.0 / 0.05).abs() <= 1e-9);
        assert!(perturbation_ratio(&spec, &kernel, &mu0, 0.0, 0).is_err());
    }
}

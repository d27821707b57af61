//! First eigenpair of the linearization `−Δφ + φ = λ p u^{p−1} φ` as a
//! generalized symmetric eigenproblem `Aφ = λBφ`: `A` is the radial
//! finite-difference `H¹` form (tridiagonal), `B` the lumped weight form.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{RadialField, TailMode};
use crate::grid::RadialGrid;
use crate::kernel::{BesselKernel, KernelMatrix};
use crate::real::Real;

#[derive(Debug, Clone)]
pub struct LinearizedOperator<T> {
    grid: Arc<RadialGrid<T>>,
    p: T,
    /// Diagonal of `A`.
    diag: Vec<T>,
    /// `A_{k,k+1} = A_{k+1,k}`.
    off: Vec<T>,
    /// Diagonal of `B`.
    weight: Vec<T>,
}

impl<T: Real> LinearizedOperator<T> {
    /// `A` discretizes `∫(ψ'² + ψ²) r^{N−1}` with harmonic cell fluxes and
    /// lumped mass. The node `r_1` has no flux toward the origin. Beyond `r_max` the
    /// test function is continued as `ψ(r_max) G(r)/G(r_max)`, which adds the
    /// exact exterior energy `R^{N−1} K_{ν+1}(R)/K_ν(R) ψ(R)²`.
    pub fn assemble(u: &[T], p: T, grid: Arc<RadialGrid<T>>) -> Result<Self> {
        if u.len() != grid.len() {
            return Err(Error::IncompatibleGrid);
        }
        if !(p > T::one()) {
            return Err(Error::InvalidExponent(p.to_f64_lossy()));
        }
        if u.iter().any(|&v| v < T::zero() || !v.is_finite()) {
            return Err(Error::InvalidArgument("linearization point must be finite and nonnegative".into()));
        }
        if u.iter().all(|&v| v == T::zero()) {
            return Err(Error::DegenerateWeight);
        }
        let n = grid.len();
        let r = grid.nodes();
        let w = grid.weights();
        let power = grid.dim() as i32 - 1;
        let mut diag: Vec<T> = w.to_vec();
        let mut off = Vec::with_capacity(n - 1);
        for k in 0..n - 1 {
            let c = flux_coefficient(r[k], r[k + 1], power);
            diag[k] = diag[k] + c;
            diag[k + 1] = diag[k + 1] + c;
            off.push(-c);
        }
        let green = BesselKernel::<T>::new(grid.dim())?;
        let r_max = grid.r_max();
        diag[n - 1] = diag[n - 1] + r_max.powi(power) * green.decay_rate(r_max);
        let weight = u.iter().zip(w).map(|(&v, &wj)| p * v.powf(p - T::one()) * wj).collect();
        Ok(Self { grid, p, diag, off, weight })
    }

    pub fn grid(&self) -> &Arc<RadialGrid<T>> {
        &self.grid
    }

    pub fn p(&self) -> T {
        self.p
    }

    pub fn diagonal(&self) -> &[T] {
        &self.diag
    }

    pub fn off_diagonal(&self) -> &[T] {
        &self.off
    }

    pub fn weight(&self) -> &[T] {
        &self.weight
    }

    pub fn apply_a(&self, x: &[T]) -> Vec<T> {
        let n = x.len();
        (0..n)
            .map(|k| {
                let mut s = self.diag[k] * x[k];
                if k > 0 {
                    s = s + self.off[k - 1] * x[k - 1];
                }
                if k + 1 < n {
                    s = s + self.off[k] * x[k + 1];
                }
                s
            })
            .collect()
    }

    /// `ψᵀAψ / ψᵀBψ`.
    pub fn rayleigh_quotient(&self, psi: &[T]) -> T {
        let a = self.apply_a(psi);
        let num: T = a.iter().zip(psi).map(|(&x, &y)| x * y).sum();
        let den: T = self.weight.iter().zip(psi).map(|(&b, &y)| b * y * y).sum();
        num / den
    }

    /// Solves `A x = rhs` by symmetric tridiagonal elimination.
    fn solve_a(&self, factor: &[T], rhs: &[T]) -> Vec<T> {
        let n = rhs.len();
        let mut y = rhs.to_vec();
        for k in 1..n {
            y[k] = y[k] - self.off[k - 1] / factor[k - 1] * y[k - 1];
        }
        y[n - 1] = y[n - 1] / factor[n - 1];
        for k in (0..n - 1).rev() {
            y[k] = (y[k] - self.off[k] * y[k + 1]) / factor[k];
        }
        y
    }

    /// Pivots of the `LDLᵀ` factorization of `A`.
    fn factor(&self) -> Result<Vec<T>> {
        let n = self.diag.len();
        let mut d = Vec::with_capacity(n);
        d.push(self.diag[0]);
        for k in 1..n {
            let prev = d[k - 1];
            let dk = self.diag[k] - self.off[k - 1] * self.off[k - 1] / prev;
            if !(dk > T::zero()) {
                return Err(Error::Degenerate("stiffness form is not positive definite".into()));
            }
            d.push(dk);
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSettings {
    /// Stop when the relative eigenvalue change falls below this.
    pub tol: f64,
    /// Required `‖Aφ − λBφ‖∞ / ‖Aφ‖∞`.
    pub residual_tol: f64,
    pub max_iterations: usize,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self { tol: 1e-12, residual_tol: 1e-10, max_iterations: 10_000 }
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult<T> {
    pub lambda1: T,
    /// Positive, `sup φ₁ = 1`.
    pub phi1: RadialField<T>,
    pub iterations: usize,
    /// `‖Aφ − λBφ‖∞ / ‖Aφ‖∞`.
    pub residual: T,
}

/// `1/∫_a^b s^{1−N} ds`: the two-point flux that is exact for radial
/// harmonic functions across the cell `[a, b]`.
fn flux_coefficient<T: Real>(a: T, b: T, power: i32) -> T {
    let integral = match power {
        0 => b - a,
        1 => (b / a).ln(),
        _ => (a.powi(1 - power) - b.powi(1 - power)) / T::lit(f64::from(power - 1)),
    };
    integral.recip()
}

/// Smallest eigenvalue of `Aφ = λBφ` by inverse iteration `φ ← A⁻¹Bφ`.
pub fn first_eigenvalue<T: Real>(op: &LinearizedOperator<T>, settings: &EigenSettings) -> Result<EigenResult<T>> {
    let factor = op.factor()?;
    let n = op.diag.len();
    let tol = T::lit(settings.tol);
    let residual_tol = T::lit(settings.residual_tol);
    let mut phi = vec![T::one(); n];
    let mut lambda = op.rayleigh_quotient(&phi);
    let mut change = T::infinity();
    for iteration in 1..=settings.max_iterations {
        let rhs: Vec<T> = op.weight.iter().zip(&phi).map(|(&b, &x)| b * x).collect();
        let mut next = op.solve_a(&factor, &rhs);
        let scale = next.iter().fold(T::zero(), |m, &v| if v.abs() > m.abs() { v } else { m });
        if scale == T::zero() || !scale.is_finite() {
            return Err(Error::EigensolverFailure { iterations: iteration, last_change: change.to_f64_lossy() });
        }
        for v in &mut next {
            *v = *v / scale;
        }
        phi = next;
        let updated = op.rayleigh_quotient(&phi);
        change = ((updated - lambda) / updated).abs();
        lambda = updated;
        if change <= tol {
            let residual = relative_residual(op, &phi, lambda);
            if residual <= residual_tol {
                if phi.iter().any(|&v| v <= T::zero()) {
                    return Err(Error::EigensolverFailure {
                        iterations: iteration,
                        last_change: change.to_f64_lossy(),
                    });
                }
                let phi1 = RadialField::new(op.grid.clone(), phi, TailMode::GreenProportional)?;
                return Ok(EigenResult { lambda1: lambda, phi1, iterations: iteration, residual });
            }
        }
    }
    Err(Error::EigensolverFailure { iterations: settings.max_iterations, last_change: change.to_f64_lossy() })
}

fn relative_residual<T: Real>(op: &LinearizedOperator<T>, phi: &[T], lambda: T) -> T {
    let a = op.apply_a(phi);
    let mut worst = T::zero();
    let mut norm = T::zero();
    for k in 0..phi.len() {
        worst = worst.max((a[k] - lambda * op.weight[k] * phi[k]).abs());
        norm = norm.max(a[k].abs());
    }
    worst / norm
}

/// `sup |φ − pλ G∗(u^{p−1}φ)|`: the integral form of the eigenproblem,
/// evaluated with the convolution matrix instead of the differential form.
pub fn eigen_integral_residual<T: Real>(
    phi: &RadialField<T>,
    lambda: T,
    u: &[T],
    p: T,
    kernel: &KernelMatrix<T>,
) -> Result<T> {
    if u.len() != phi.len() || !(Arc::ptr_eq(phi.grid(), kernel.grid()) || phi.grid().same_as(kernel.grid())) {
        return Err(Error::IncompatibleGrid);
    }
    let product: Vec<T> = u.iter().zip(phi.values()).map(|(&v, &f)| v.powf(p - T::one()) * f).collect();
    let image = kernel.apply(&product, TailMode::GreenProportional);
    Ok(phi.values().iter().zip(&image).fold(T::zero(), |m, (&f, &c)| m.max((f - p * lambda * c).abs())))
}

/// `(min, max)` of `φ₁/g` over the nodes.
pub fn phi_vs_g_bounds<T: Real>(phi: &RadialField<T>, g: &RadialField<T>) -> Result<(T, T)> {
    phi.check_grid(g)?;
    Ok(phi.values().iter().zip(g.values()).fold((T::infinity(), T::neg_infinity()), |(lo, hi), (&f, &gv)| {
        let ratio = f / gv;
        (lo.min(ratio), hi.max(ratio))
    }))
}

/// Assemble and solve in one call.
pub fn linearized_eigenpair<T: Real>(u: &[T], p: T, grid: Arc<RadialGrid<T>>) -> Result<EigenResult<T>> {
    first_eigenvalue(&LinearizedOperator::assemble(u, p, grid)?, &EigenSettings::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn grid(n: usize) -> Arc<RadialGrid<f64>> {
        Arc::new(RadialGrid::build(3, &GridSpec::new(n, 20.0), &[1.0]).unwrap())
    }

    #[test]
    fn forms_are_symmetric_and_positive() {
        let g = grid(256);
        let u: Vec<f64> = g.nodes().iter().map(|&r| (-r).exp()).collect();
        let op = LinearizedOperator::assemble(&u, 2.0, g.clone()).unwrap();
        assert!(op.off_diagonal().iter().all(|&c| c < 0.0));
        assert!(op.weight().iter().all(|&b| b > 0.0));
        assert!(op.factor().is_ok());
        let x: Vec<f64> = (0..g.len()).map(|k| (k as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..g.len()).map(|k| (k as f64 * 0.11).cos()).collect();
        let xay: f64 = op.apply_a(&y).iter().zip(&x).map(|(a, b)| a * b).sum();
        let yax: f64 = op.apply_a(&x).iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!((xay - yax).abs() <= 1e-12 * xay.abs().max(1.0));
    }

    #[test]
    fn degenerate_weight_rejected() {
        let g = grid(64);
        assert!(matches!(LinearizedOperator::assemble(&vec![0.0; 64], 2.0, g), Err(Error::DegenerateWeight)));
    }

    #[test]
    fn constant_linearization_point() {
        let g = grid(512);
        let c = 0.7;
        let res = linearized_eigenpair(&vec![c; g.len()], 3.0, g).unwrap();
        assert!(res.lambda1 * 3.0 * c * c >= 1.0);
        assert!(res.residual <= 1e-10);
        assert!(res.phi1.min() > 0.0);
        assert_eq!(res.phi1.sup(), 1.0);
    }

    #[test]
    fn homogeneity_in_u() {
        let g = grid(256);
        let u: Vec<f64> = g.nodes().iter().map(|&r| 2.0 * (-r * r).exp() + 0.01 * (-r).exp()).collect();
        let a = linearized_eigenpair(&u, 2.5, g.clone()).unwrap();
        let scaled: Vec<f64> = u.iter().map(|v| 3.0 * v).collect();
        let b = linearized_eigenpair(&scaled, 2.5, g).unwrap();
        assert!((b.lambda1 / a.lambda1 - 3f64.powf(-1.5)).abs() <= 1e-9);
    }
}

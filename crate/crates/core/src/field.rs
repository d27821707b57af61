//! Grid functions on a [`RadialGrid`], with a model for their values beyond
//! `r_max`.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::kernel::{BesselKernel, KernelMatrix};
use crate::real::Real;
use crate::special::GaussLegendre;

/// How a field continues past the last node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailMode {
    /// `f(r) = f(r_max) G(r)/G(r_max)` for `r > r_max`.
    GreenProportional,
    /// `f = 0` beyond `r_max`.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialField<T> {
    grid: Arc<RadialGrid<T>>,
    values: Vec<T>,
    tail: TailMode,
}

impl<T: Real> RadialField<T> {
    pub fn new(grid: Arc<RadialGrid<T>>, values: Vec<T>, tail: TailMode) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::IncompatibleGrid);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("field values must be finite".into()));
        }
        Ok(Self { grid, values, tail })
    }

    pub(crate) fn from_parts(grid: Arc<RadialGrid<T>>, values: Vec<T>, tail: TailMode) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values, tail }
    }

    pub fn zeros(grid: Arc<RadialGrid<T>>, tail: TailMode) -> Self {
        let values = vec![T::zero(); grid.len()];
        Self { grid, values, tail }
    }

    pub fn from_fn(grid: Arc<RadialGrid<T>>, tail: TailMode, f: impl Fn(T) -> T) -> Result<Self> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid, values, tail)
    }

    pub fn grid(&self) -> &Arc<RadialGrid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn tail(&self) -> TailMode {
        self.tail
    }

    pub fn with_tail(mut self, tail: TailMode) -> Self {
        self.tail = tail;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup(&self) -> T {
        self.values.iter().fold(T::neg_infinity(), |m, &v| m.max(v))
    }

    pub fn min(&self) -> T {
        self.values.iter().fold(T::infinity(), |m, &v| m.min(v))
    }

    pub fn sup_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect(), tail: self.tail }
    }

    /// `a·self + b·other`, keeping the tail mode of `self`.
    pub fn combine(&self, a: T, other: &Self, b: T) -> Result<Self> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&x, &y)| a * x + b * y).collect();
        Ok(Self { grid: self.grid.clone(), values, tail: self.tail })
    }

    pub fn check_grid(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::IncompatibleGrid)
        }
    }

    /// Value at the node nearest to `r`.
    pub fn at_radius(&self, r: T) -> T {
        self.values[self.grid.nearest(r)]
    }

    /// Discrete `‖f‖_{L^q(R^N)}` including the modelled tail.
    pub fn lq_norm(&self, q: T) -> Result<T> {
        if !(q >= T::one()) {
            return Err(Error::InvalidArgument(format!("need q >= 1, got {}", q.to_f64_lossy())));
        }
        let powered: Vec<T> = self.values.iter().map(|v| v.abs().powf(q)).collect();
        let mut total = self.grid.integrate(&powered);
        if self.tail == TailMode::GreenProportional {
            let n = self.len();
            let ratio = (self.values[n - 1] / self.grid.green()[n - 1]).abs();
            if ratio > T::zero() {
                let kernel = BesselKernel::new(self.grid.dim())?;
                let exterior = exterior_integral(&kernel, self.grid.r_max(), |s| kernel.at(s).powf(q));
                total = total + ratio.powf(q) * self.grid.sphere_area() * exterior;
            }
        }
        Ok(total.powf(q.recip()))
    }

    /// Discrete `‖f‖_{H¹(R^N)} = (∫ |f'|² + f²)^{1/2}` with three-point
    /// derivatives on the nonuniform grid.
    pub fn h1_norm(&self) -> Result<T> {
        let derivative = self.radial_derivative();
        let integrand: Vec<T> = self.values.iter().zip(&derivative).map(|(&f, &d)| f * f + d * d).collect();
        let mut total = self.grid.integrate(&integrand);
        if self.tail == TailMode::GreenProportional {
            // ∫_R^∞ (G'² + G²) s^{N−1} ds = −G(R) G'(R) R^{N−1} since (−Δ + 1)G = 0 there
            let n = self.len();
            let r_max = self.grid.r_max();
            let kernel = BesselKernel::new(self.grid.dim())?;
            let ratio = self.values[n - 1] / self.grid.green()[n - 1];
            let exterior = -kernel.at(r_max) * kernel.derivative(r_max) * r_max.powi(self.grid.dim() as i32 - 1);
            total = total + ratio * ratio * self.grid.sphere_area() * exterior;
        }
        Ok(total.sqrt())
    }

    /// `f'(r_j)`: centered three-point formula inside, one-sided at the ends.
    pub fn radial_derivative(&self) -> Vec<T> {
        let r = self.grid.nodes();
        let f = &self.values;
        let n = f.len();
        (0..n)
            .map(|j| {
                if j == 0 {
                    (f[1] - f[0]) / (r[1] - r[0])
                } else if j + 1 == n {
                    (f[j] - f[j - 1]) / (r[j] - r[j - 1])
                } else {
                    let hl = r[j] - r[j - 1];
                    let hr = r[j + 1] - r[j];
                    (hl * hl * (f[j + 1] - f[j]) + hr * hr * (f[j] - f[j - 1])) / (hl * hr * (hl + hr))
                }
            })
            .collect()
    }

    /// CSV with header `r,value` and 17 significant digits.
    pub fn to_csv(&self) -> String {
        self.to_csv_named("value")
    }

    /// CSV with header `r,<column>`.
    pub fn to_csv_named(&self, column: &str) -> String {
        let mut out = format!("r,{column}\n");
        for (r, v) in self.grid.nodes().iter().zip(&self.values) {
            writeln!(out, "{:.16e},{:.16e}", r.to_f64_lossy(), v.to_f64_lossy()).expect("writing to a String");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// `∫_{r_max}^{r_max+40} f(s) s^{N−1} ds` by unit Gauss–Legendre panels.
fn exterior_integral<T: Real>(kernel: &BesselKernel<T>, r_max: T, f: impl Fn(T) -> T) -> T {
    let rule = GaussLegendre::<T>::new(10);
    let power = kernel.dim() as i32 - 1;
    (0..40)
        .map(|k| {
            let a = r_max + T::from_usize_lossy(k);
            rule.integrate(a, a + T::one(), |s| f(s) * s.powi(power))
        })
        .sum()
}

/// `G∗f` at every node, including the exterior contribution for
/// `G`-proportional fields. The result is `G`-proportional.
pub fn convolve<T: Real>(kernel: &KernelMatrix<T>, f: &RadialField<T>) -> Result<RadialField<T>> {
    if !(Arc::ptr_eq(kernel.grid(), f.grid()) || kernel.grid().same_as(f.grid())) {
        return Err(Error::IncompatibleGrid);
    }
    let values = kernel.apply(f.values(), f.tail());
    Ok(RadialField::from_parts(kernel.grid().clone(), values, TailMode::GreenProportional))
}

/// `a·G + f` with the `G` part kept exact. Nodal values evaluate `G` at the
/// node itself, never through quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitField<T> {
    singular: T,
    regular: RadialField<T>,
}

impl<T: Real> SplitField<T> {
    pub fn new(singular: T, regular: RadialField<T>) -> Self {
        Self { singular, regular }
    }

    pub fn regular_only(regular: RadialField<T>) -> Self {
        Self { singular: T::zero(), regular }
    }

    pub fn singular(&self) -> T {
        self.singular
    }

    pub fn regular(&self) -> &RadialField<T> {
        &self.regular
    }

    pub fn grid(&self) -> &Arc<RadialGrid<T>> {
        self.regular.grid()
    }

    pub fn len(&self) -> usize {
        self.regular.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regular.is_empty()
    }

    #[inline]
    pub fn value(&self, i: usize) -> T {
        self.singular * self.regular.grid().green()[i] + self.regular.values()[i]
    }

    pub fn values(&self) -> Vec<T> {
        (0..self.len()).map(|i| self.value(i)).collect()
    }

    /// Nodal values as a plain field, `G`-proportional beyond `r_max`.
    pub fn to_field(&self) -> RadialField<T> {
        RadialField::from_parts(self.grid().clone(), self.values(), TailMode::GreenProportional)
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self { singular: self.singular * factor, regular: self.regular.scaled(factor) }
    }

    pub fn sup(&self) -> T {
        (0..self.len()).fold(T::neg_infinity(), |m, i| m.max(self.value(i)))
    }

    pub fn min(&self) -> T {
        (0..self.len()).fold(T::infinity(), |m, i| m.min(self.value(i)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use approx::assert_relative_eq;

    fn grid(n: usize) -> Arc<RadialGrid<f64>> {
        Arc::new(RadialGrid::build(3, &GridSpec::new(n, 20.0), &[1.0]).unwrap())
    }

    #[test]
    fn constant_l1_norm_is_ball_volume() {
        let g = grid(512);
        let one = RadialField::from_fn(g, TailMode::Zero, |_| 1.0).unwrap();
        let volume = 4.0 / 3.0 * std::f64::consts::PI * 8000.0;
        assert_relative_eq!(one.lq_norm(1.0).unwrap(), volume, max_relative = 1e-5);
    }

    #[test]
    fn green_has_unit_mass() {
        let g = grid(2048);
        let green = RadialField::new(g.clone(), g.green().to_vec(), TailMode::GreenProportional).unwrap();
        assert_relative_eq!(green.lq_norm(1.0).unwrap(), 1.0, max_relative = 1e-4);
    }

    #[test]
    fn norms_are_homogeneous() {
        let g = grid(256);
        let f = RadialField::from_fn(g, TailMode::GreenProportional, |r| (-r).exp()).unwrap();
        let a = 3.5;
        assert_relative_eq!(f.scaled(a).lq_norm(2.0).unwrap(), a * f.lq_norm(2.0).unwrap(), max_relative = 1e-14);
        assert_relative_eq!(f.scaled(a).h1_norm().unwrap(), a * f.h1_norm().unwrap(), max_relative = 1e-14);
    }

    #[test]
    fn h1_norm_of_gaussian() {
        // ∫_{R³} (1 + 4r²) e^{−2r²} dx = (π/2)^{3/2} (1 + 3) ⇒ norm² = 4 (π/2)^{3/2}
        let g = grid(2048);
        let f = RadialField::from_fn(g, TailMode::Zero, |r| (-r * r).exp()).unwrap();
        let exact = (4.0 * (std::f64::consts::PI / 2.0).powf(1.5)).sqrt();
        assert_relative_eq!(f.h1_norm().unwrap(), exact, max_relative = 1e-4);
    }

    #[test]
    fn derivative_is_exact_for_quadratics() {
        let g = grid(128);
        let f = RadialField::from_fn(g.clone(), TailMode::Zero, |r| 2.0 * r * r - r).unwrap();
        let d = f.radial_derivative();
        for (&dj, &r) in d.iter().zip(g.nodes()).skip(1).take(g.len() - 2) {
            assert_relative_eq!(dj, 4.0 * r - 1.0, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn csv_has_header_and_full_precision() {
        let g = grid(64);
        let f = RadialField::from_fn(g, TailMode::Zero, |r| r / 3.0).unwrap();
        let csv = f.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("r,value"));
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(row[1], row[0] / 3.0);
        assert_eq!(csv.lines().count(), 65);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = RadialField::from_fn(grid(64), TailMode::Zero, |r| r).unwrap();
        let b = RadialField::from_fn(grid(128), TailMode::Zero, |r| r).unwrap();
        assert!(matches!(a.combine(1.0, &b, 1.0), Err(Error::IncompatibleGrid)));
        assert!(RadialField::new(grid(64), vec![0.0; 3], TailMode::Zero).is_err());
    }

    #[test]
    fn split_field_values() {
        let g = grid(64);
        let s = SplitField::new(2.0, RadialField::from_fn(g.clone(), TailMode::Zero, |_| 1.0).unwrap());
        assert_eq!(s.value(5), 2.0 * g.green()[5] + 1.0);
        assert_eq!(s.scaled(0.5).singular(), 1.0);
    }
}

//! Radial, compactly supported source measures and their potentials
//! `μ₀ = G∗μ`.

use crate::error::{Error, Result};
use crate::field::{RadialField, SplitField, TailMode};
use crate::grid::RadialGrid;
use crate::kernel::KernelMatrix;
use crate::real::Real;
use crate::special::ball_volume;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceMeasure<T> {
    /// `mass · δ₀`
    DiracOrigin { mass: T },
    /// Constant density on `B(0, radius)` with total mass `mass`.
    UniformBall { radius: T, mass: T },
    /// Constant density on `{r_in ≤ |x| ≤ r_out}` with total mass `mass`.
    Annulus { r_in: T, r_out: T, mass: T },
}

impl<T: Real> SourceMeasure<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: T| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "measure {name} must be positive and finite, got {}",
                    v.to_f64_lossy()
                )))
            }
        };
        match *self {
            Self::DiracOrigin { mass } => positive("mass", mass),
            Self::UniformBall { radius, mass } => {
                positive("radius", radius)?;
                positive("mass", mass)
            }
            Self::Annulus { r_in, r_out, mass } => {
                positive("r_in", r_in)?;
                positive("mass", mass)?;
                if r_out > r_in && r_out.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument("annulus needs r_in < r_out".into()))
                }
            }
        }
    }

    pub fn mass(&self) -> T {
        match *self {
            Self::DiracOrigin { mass } | Self::UniformBall { mass, .. } | Self::Annulus { mass, .. } => mass,
        }
    }

    /// Radius `R` with `supp μ ⊂ B(0, R)` (closed ball).
    pub fn support_radius(&self) -> T {
        match *self {
            Self::DiracOrigin { .. } => T::zero(),
            Self::UniformBall { radius, .. } => radius,
            Self::Annulus { r_out, .. } => r_out,
        }
    }

    pub fn scaled(&self, factor: T) -> Self {
        match *self {
            Self::DiracOrigin { mass } => Self::DiracOrigin { mass: mass * factor },
            Self::UniformBall { radius, mass } => Self::UniformBall { radius, mass: mass * factor },
            Self::Annulus { r_in, r_out, mass } => Self::Annulus { r_in, r_out, mass: mass * factor },
        }
    }

    pub fn is_singular(&self) -> bool {
        matches!(self, Self::DiracOrigin { .. })
    }

    /// Radii where the density jumps; grids should place nodes there.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            Self::DiracOrigin { .. } => Vec::new(),
            Self::UniformBall { radius, .. } => vec![radius.to_f64_lossy()],
            Self::Annulus { r_in, r_out, .. } => vec![r_in.to_f64_lossy(), r_out.to_f64_lossy()],
        }
    }

    /// Constant density level inside the support (zero for the Dirac).
    pub fn density_level(&self, dim: u32) -> T {
        match *self {
            Self::DiracOrigin { .. } => T::zero(),
            Self::UniformBall { radius, mass } => mass / ball_volume::<T>(dim, radius),
            Self::Annulus { r_in, r_out, mass } => mass / (ball_volume::<T>(dim, r_out) - ball_volume::<T>(dim, r_in)),
        }
    }

    /// Density sampled on `grid`, with edge nodes weighted by the inside
    /// share of their cell (see [`RadialGrid::indicator`]).
    pub fn density_on(&self, grid: &RadialGrid<T>) -> Vec<T> {
        let level = self.density_level(grid.dim());
        let indicator = match *self {
            Self::DiracOrigin { .. } => return vec![T::zero(); grid.len()],
            Self::UniformBall { radius, .. } => grid.indicator(T::zero(), radius),
            Self::Annulus { r_in, r_out, .. } => grid.indicator(r_in, r_out),
        };
        indicator.into_iter().map(|v| v * level).collect()
    }
}

/// `μ₀ = G∗μ` split into an exact multiple of `G` and a grid part.
pub type Mu0<T> = SplitField<T>;

pub fn compute_mu0<T: Real>(measure: &SourceMeasure<T>, kernel: &KernelMatrix<T>) -> Result<Mu0<T>> {
    measure.validate()?;
    let grid = kernel.grid().clone();
    if let SourceMeasure::DiracOrigin { mass } = *measure {
        return Ok(SplitField::new(mass, RadialField::zeros(grid, TailMode::GreenProportional)));
    }
    let density = measure.density_on(&grid);
    let values = kernel.apply(&density, TailMode::Zero);
    let regular = RadialField::new(grid, values, TailMode::GreenProportional)?;
    if regular.min() <= T::zero() {
        return Err(Error::Degenerate("computed potential is not positive".into()));
    }
    Ok(SplitField::new(T::zero(), regular))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use std::sync::Arc;

    #[test]
    fn validation_and_accessors() {
        assert!(SourceMeasure::DiracOrigin { mass: 0.0f64 }.validate().is_err());
        assert!(SourceMeasure::Annulus { r_in: 1.0f64, r_out: 0.5, mass: 1.0 }.validate().is_err());
        let m = SourceMeasure::Annulus { r_in: 0.5f64, r_out: 0.9, mass: 2.0 };
        assert!(m.validate().is_ok());
        assert_eq!(m.support_radius(), 0.9);
        assert_eq!(m.scaled(2.0).mass(), 4.0);
        assert_eq!(m.breakpoints(), vec![0.5, 0.9]);
    }

    #[test]
    fn density_integrates_to_mass() {
        let grid = RadialGrid::<f64>::build(3, &GridSpec::new(512, 20.0), &[0.5, 0.9]).unwrap();
        for m in [
            SourceMeasure::UniformBall { radius: 0.9, mass: 1.5 },
            SourceMeasure::Annulus { r_in: 0.5, r_out: 0.9, mass: 1.5 },
        ] {
            let total = grid.integrate(&m.density_on(&grid));
            assert!((total - 1.5).abs() < 2e-3, "{total}");
        }
    }

    #[test]
    fn dirac_potential_is_exact_green() {
        let grid = Arc::new(RadialGrid::<f64>::build(3, &GridSpec::new(64, 20.0), &[]).unwrap());
        let kernel = KernelMatrix::build(grid.clone()).unwrap();
        let mu0 = compute_mu0(&SourceMeasure::DiracOrigin { mass: 1.0 }, &kernel).unwrap();
        assert_eq!(mu0.singular(), 1.0);
        for (i, &g) in grid.green().iter().enumerate() {
            assert_eq!(mu0.value(i), g);
        }
    }
}

//! The fundamental solution `G` of `−Δ + 1` on `R^N` and the discrete radial
//! convolution operator built from it.
//!
//! For radial `f`, `(G∗f)(r) = ∫_0^∞ f(s) s^{N−1} K(r, s) ds` where
//! `K(r, s) = |S^{N−2}| ∫_0^π G(√(r² + s² − 2rs cos θ)) sin^{N−2}θ dθ` is the
//! angular average of `G`. The matrix is a symmetric-weight Nyström
//! discretization of this integral; its diagonal is fixed so that every row
//! integrates the constant function exactly, with the row mass computed by
//! graded Gauss–Legendre quadrature.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{RadialField, TailMode};
use crate::grid::RadialGrid;
use crate::real::Real;
use crate::special::{k_scaled_unchecked, sphere_area, GaussLegendre};

/// `G(r) = (2π)^{−N/2} r^{−(N−2)/2} K_{(N−2)/2}(r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselKernel<T> {
    dim: u32,
    twice_order: u32,
    prefactor: T,
    angular_area: T,
}

impl<T: Real> BesselKernel<T> {
    pub fn new(dim: u32) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension(dim, 2));
        }
        let prefactor = (T::lit(2.0) * T::PI()).powf(-T::lit(f64::from(dim)) / T::lit(2.0));
        Ok(Self { dim, twice_order: dim - 2, prefactor, angular_area: sphere_area::<T>(dim - 2) })
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    /// Bessel order `(N−2)/2`.
    pub fn order(&self) -> T {
        T::lit(f64::from(self.twice_order) / 2.0)
    }

    /// Checked evaluation of `G(r)`.
    pub fn eval(&self, r: T) -> Result<T> {
        if !(r > T::zero()) || !r.is_finite() {
            return Err(Error::Domain(format!("G(r) needs finite r > 0, got {}", r.to_f64_lossy())));
        }
        Ok(self.at(r))
    }

    /// `G(r)` for `r > 0`.
    #[inline]
    pub fn at(&self, r: T) -> T {
        self.prefactor * self.inverse_power(r) * k_scaled_unchecked(self.twice_order, r) * (-r).exp()
    }

    /// `G'(r) = −(2π)^{−N/2} r^{−ν} K_{ν+1}(r)`.
    pub fn derivative(&self, r: T) -> T {
        -self.prefactor * self.inverse_power(r) * k_scaled_unchecked(self.twice_order + 2, r) * (-r).exp()
    }

    /// `−G'(r)/G(r) = K_{ν+1}(r)/K_ν(r)`, the logarithmic decay rate.
    pub fn decay_rate(&self, r: T) -> T {
        k_scaled_unchecked(self.twice_order + 2, r) / k_scaled_unchecked(self.twice_order, r)
    }

    /// `r^{−ν}` without `powf` for integer and half-integer `ν`.
    #[inline]
    fn inverse_power(&self, r: T) -> T {
        let whole = r.powi(-((self.twice_order / 2) as i32));
        if self.twice_order % 2 == 1 {
            whole / r.sqrt()
        } else {
            whole
        }
    }

    /// Angular average `K(r, s)`; symmetric in its arguments bit for bit.
    pub fn angular_average(&self, r: T, s: T, rule: &GaussLegendre<T>) -> T {
        let (r, s) = if r <= s { (r, s) } else { (s, r) };
        let gap = s - r;
        let four_rs = T::lit(4.0) * r * s;
        let half = T::lit(0.5);
        let power = self.dim as i32 - 2;
        let integrand = |theta: T| {
            let h = (half * theta).sin();
            let rho = (gap * gap + four_rs * h * h).sqrt();
            self.at(rho) * theta.sin().powi(power)
        };
        let pi = T::PI();
        // near-singular scale: where 4rs sin²(θ/2) ~ (s − r)²
        let scale = gap / (r * s).sqrt();
        let total = if scale >= pi / T::lit(4.0) {
            rule.integrate(T::zero(), pi / T::lit(2.0), integrand) + rule.integrate(pi / T::lit(2.0), pi, integrand)
        } else {
            let start = if scale > T::zero() { half * scale } else { pi * T::lit(2f64.powi(-50)) };
            let mut total = rule.integrate(T::zero(), start, integrand);
            let mut lo = start;
            while lo < pi {
                let hi = (lo + lo).min(pi);
                total = total + rule.integrate(lo, hi, integrand);
                lo = hi;
            }
            total
        };
        self.angular_area * total
    }
}

/// `G(r)` in dimension `N`.
pub fn green_function<T: Real>(dim: u32, r: T) -> Result<T> {
    BesselKernel::new(dim)?.eval(r)
}

/// Angular average `K(r, s)` with the default angular rule.
pub fn angular_average<T: Real>(dim: u32, r: T, s: T) -> Result<T> {
    let kernel = BesselKernel::new(dim)?;
    for (name, v) in [("r", r), ("s", s)] {
        if !(v > T::zero()) || !v.is_finite() {
            return Err(Error::Domain(format!("{name} must be positive, got {}", v.to_f64_lossy())));
        }
    }
    Ok(kernel.angular_average(r, s, &GaussLegendre::new(KernelSettings::default().angular_points)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSettings {
    /// Largest grid for which a dense matrix is assembled.
    pub max_nodes: usize,
    /// Gauss–Legendre points per angular panel.
    pub angular_points: usize,
    /// Gauss–Legendre points per radial panel in the row-mass quadrature.
    pub radial_points: usize,
    /// Geometric refinement levels toward the diagonal `s = r`.
    pub grading_levels: usize,
    /// Length of the exterior interval `[r_max, r_max + extent]`.
    pub tail_extent: f64,
}

impl Default for KernelSettings {
    fn default() -> Self {
        Self { max_nodes: 8192, angular_points: 12, radial_points: 8, grading_levels: 20, tail_extent: 40.0 }
    }
}

impl KernelSettings {
    fn fingerprint(&self) -> u64 {
        (self.angular_points as u64)
            ^ ((self.radial_points as u64) << 8)
            ^ ((self.grading_levels as u64) << 16)
            ^ (self.tail_extent.to_bits().rotate_left(24))
    }
}

/// Dense radial convolution operator: `(A·f)_i ≈ (G∗f)(r_i)`.
#[derive(Debug, Clone)]
pub struct KernelMatrix<T> {
    grid: Arc<RadialGrid<T>>,
    green: BesselKernel<T>,
    entries: Vec<T>,
    /// `∫_{r_max}^∞ K(r_i, s) G(s)/G(r_max) s^{N−1} ds`: exterior contribution
    /// per unit boundary value of a `G`-proportional field.
    tail_decay: Vec<T>,
    /// `∫_{r_max}^∞ K(r_i, s) s^{N−1} ds`: exterior mass of `G(r_i − ·)`.
    outer_mass: Vec<T>,
}

const CACHE_MAGIC: &[u8; 4] = b"SFKM";
const CACHE_VERSION: u32 = 1;

impl<T: Real> KernelMatrix<T> {
    pub fn build(grid: Arc<RadialGrid<T>>) -> Result<Self> {
        Self::build_with(grid, &KernelSettings::default())
    }

    pub fn build_with(grid: Arc<RadialGrid<T>>, settings: &KernelSettings) -> Result<Self> {
        let n = grid.len();
        if n > settings.max_nodes {
            return Err(Error::MemoryBudgetExceeded { n, cap: settings.max_nodes });
        }
        let green = BesselKernel::new(grid.dim())?;
        let angular = GaussLegendre::new(settings.angular_points);
        let radial = GaussLegendre::new(settings.radial_points);
        let nodes = grid.nodes();
        let weights = grid.weights();

        let upper: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|i| ((i + 1)..n).map(|j| green.angular_average(nodes[i], nodes[j], &angular)).collect())
            .collect();
        let rows: Vec<(T, T, T)> =
            (0..n).into_par_iter().map(|i| row_integrals(&green, &grid, i, &angular, &radial, settings)).collect();

        let mut entries = vec![T::zero(); n * n];
        for i in 0..n {
            for (offset, &k) in upper[i].iter().enumerate() {
                let j = i + 1 + offset;
                entries[i * n + j] = weights[j] * k;
                entries[j * n + i] = weights[i] * k;
            }
        }
        let mut negative = 0usize;
        for (i, &(mass, _, _)) in rows.iter().enumerate() {
            let row = &entries[i * n..(i + 1) * n];
            let off: T = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &a)| a).sum();
            let diag = mass - off;
            if diag < T::zero() {
                negative += 1;
            }
            entries[i * n + i] = diag;
        }
        if negative > 0 {
            warn!("{negative} kernel rows have a negative diagonal correction; grid too coarse");
        }
        let outer_mass = rows.iter().map(|r| r.1).collect();
        let tail_decay = rows.iter().map(|r| r.2).collect();
        Ok(Self { grid, green, entries, tail_decay, outer_mass })
    }

    /// Loads the matrix from `cache_dir` when present, otherwise builds and
    /// stores it there.
    pub fn build_cached(grid: Arc<RadialGrid<T>>, settings: &KernelSettings, cache_dir: Option<&Path>) -> Result<Self> {
        let Some(dir) = cache_dir else {
            return Self::build_with(grid, settings);
        };
        let path = Self::cache_path(dir, &grid, settings);
        if path.exists() {
            match Self::load(&path, grid.clone()) {
                Ok(matrix) => return Ok(matrix),
                Err(err) => warn!("ignoring unusable kernel cache {}: {err}", path.display()),
            }
        }
        let matrix = Self::build_with(grid, settings)?;
        std::fs::create_dir_all(dir)?;
        matrix.save(&path)?;
        Ok(matrix)
    }

    pub fn cache_path(dir: &Path, grid: &RadialGrid<T>, settings: &KernelSettings) -> PathBuf {
        let key = grid.fingerprint() ^ settings.fingerprint();
        dir.join(format!("kernel-N{}-n{}-{key:016x}.bin", grid.dim(), grid.len()))
    }

    /// Header `(magic, version, N, n, r_max, grid fingerprint)` followed by the
    /// row-major matrix, the tail-decay vector and the outer-mass vector, all
    /// little-endian 64-bit floats.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(CACHE_MAGIC)?;
        out.write_all(&CACHE_VERSION.to_le_bytes())?;
        out.write_all(&self.grid.dim().to_le_bytes())?;
        out.write_all(&(self.grid.len() as u64).to_le_bytes())?;
        out.write_all(&self.grid.r_max().to_f64_lossy().to_le_bytes())?;
        out.write_all(&self.grid.fingerprint().to_le_bytes())?;
        for v in self.entries.iter().chain(&self.tail_decay).chain(&self.outer_mass) {
            out.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path, grid: Arc<RadialGrid<T>>) -> Result<Self> {
        let mut input = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Parse("not a kernel cache file".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != CACHE_VERSION {
            return Err(Error::Parse("unsupported kernel cache version".into()));
        }
        input.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4);
        input.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b8)?;
        let r_max = f64::from_le_bytes(b8);
        input.read_exact(&mut b8)?;
        let fingerprint = u64::from_le_bytes(b8);
        if dim != grid.dim()
            || n != grid.len()
            || r_max != grid.r_max().to_f64_lossy()
            || fingerprint != grid.fingerprint()
        {
            return Err(Error::IncompatibleGrid);
        }
        let mut read_block = |len: usize| -> Result<Vec<T>> {
            let mut values = Vec::with_capacity(len);
            for _ in 0..len {
                input.read_exact(&mut b8)?;
                values.push(T::lit(f64::from_le_bytes(b8)));
            }
            Ok(values)
        };
        let entries = read_block(n * n)?;
        let tail_decay = read_block(n)?;
        let outer_mass = read_block(n)?;
        let green = BesselKernel::new(dim)?;
        Ok(Self { grid, green, entries, tail_decay, outer_mass })
    }

    pub fn grid(&self) -> &Arc<RadialGrid<T>> {
        &self.grid
    }

    pub fn green(&self) -> &BesselKernel<T> {
        &self.green
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn entry(&self, i: usize, j: usize) -> T {
        self.entries[i * self.len() + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        let n = self.len();
        &self.entries[i * n..(i + 1) * n]
    }

    pub fn tail_decay(&self) -> &[T] {
        &self.tail_decay
    }

    pub fn outer_mass(&self) -> &[T] {
        &self.outer_mass
    }

    /// `A·f` plus the exterior contribution implied by `tail`.
    pub fn apply(&self, values: &[T], tail: TailMode) -> Vec<T> {
        let n = self.len();
        assert_eq!(values.len(), n, "field length must match the kernel grid");
        let boundary = values[n - 1];
        self.entries
            .par_chunks(n)
            .zip(self.tail_decay.par_iter())
            .map(|(row, &td)| {
                let inner = dot(row, values);
                match tail {
                    TailMode::GreenProportional => inner + td * boundary,
                    TailMode::Zero => inner,
                }
            })
            .collect()
    }

    /// `(A·1 + exterior mass)_i − 1`; the exact value is `∫G − 1 = 0`.
    pub fn mass_defect(&self) -> Vec<T> {
        (0..self.len()).map(|i| self.row(i).iter().copied().sum::<T>() + self.outer_mass[i] - T::one()).collect()
    }

    /// `max_{i≠j} |A_ij/W_j − A_ji/W_i| / max(|A_ij/W_j|, tiny)`.
    pub fn symmetry_defect(&self) -> T {
        let w = self.grid.weights();
        let n = self.len();
        let mut worst = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                let a = self.entry(i, j) / w[j];
                let b = self.entry(j, i) / w[i];
                let scale = a.abs().max(b.abs()).max(T::min_positive_value());
                worst = worst.max((a - b).abs() / scale);
            }
        }
        worst
    }
}

/// Row mass `∫_0^{r_max} K s^{N−1}`, exterior mass and exterior tail decay for
/// row `i`.
fn row_integrals<T: Real>(
    green: &BesselKernel<T>,
    grid: &RadialGrid<T>,
    i: usize,
    angular: &GaussLegendre<T>,
    radial: &GaussLegendre<T>,
    settings: &KernelSettings,
) -> (T, T, T) {
    let dim = grid.dim() as i32;
    let r = grid.nodes()[i];
    let r_max = grid.r_max();
    let levels = settings.grading_levels;
    let integrate = |panels: Vec<(T, T)>, weight: &dyn Fn(T) -> T| -> T {
        panels
            .into_iter()
            .map(|(a, b)| {
                radial.integrate(a, b, |s| green.angular_average(r, s, angular) * s.powi(dim - 1) * weight(s))
            })
            .sum()
    };
    let one = |_: T| T::one();
    let mut inner = graded_panels(T::zero(), r, true, levels);
    if r < r_max {
        inner.extend(graded_panels(r, r_max, false, levels));
    }
    let mass = integrate(inner, &one);
    let far = r_max + T::lit(settings.tail_extent);
    let outer_panels = graded_panels(r_max, far, false, levels);
    let outer = integrate(outer_panels.clone(), &one);
    let g_max = green.at(r_max);
    let decay = integrate(outer_panels, &|s| green.at(s) / g_max);
    (mass, outer, decay)
}

/// Panels covering `[a, b]`, refined geometrically toward `b` (`toward_end`)
/// or toward `a`, with no panel longer than one unit.
fn graded_panels<T: Real>(a: T, b: T, toward_end: bool, levels: usize) -> Vec<(T, T)> {
    let len = b - a;
    let mut cuts = Vec::with_capacity(levels + 2);
    let mut offset = len;
    for _ in 0..levels {
        offset = offset * T::lit(0.5);
        cuts.push(offset);
    }
    // distances from the focus point, descending → edges ascending
    let mut edges: Vec<T> = if toward_end {
        let mut e: Vec<T> = std::iter::once(a).chain(cuts.iter().map(|&d| b - d)).collect();
        e.push(b);
        e
    } else {
        let mut e = vec![a];
        e.extend(cuts.iter().rev().map(|&d| a + d));
        e.push(b);
        e
    };
    edges.dedup();
    let mut panels = Vec::with_capacity(edges.len() + 8);
    for w in edges.windows(2) {
        let width = w[1] - w[0];
        if width <= T::zero() {
            continue;
        }
        let pieces = width.ceil().to_usize().unwrap_or(1).max(1);
        let h = width / T::from_usize_lossy(pieces);
        for k in 0..pieces {
            let lo = w[0] + h * T::from_usize_lossy(k);
            let hi = if k + 1 == pieces { w[1] } else { lo + h };
            panels.push((lo, hi));
        }
    }
    panels
}

/// Dot product with eight independent accumulators.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let rest: T = chunks_a.remainder().iter().zip(chunks_b.remainder()).map(|(&x, &y)| x * y).sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for k in 0..8 {
            acc[k] = acc[k] + ca[k] * cb[k];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + rest
}

/// `g = G∗χ_{B(0,1)}` on the kernel grid.
pub fn unit_ball_potential<T: Real>(kernel: &KernelMatrix<T>) -> RadialField<T> {
    let grid = kernel.grid();
    let i = grid.nearest(T::one());
    let spacing = if i + 1 < grid.len() { grid.nodes()[i + 1] - grid.nodes()[i] } else { T::one() };
    if grid.nodes()[i] != T::one() || spacing > T::lit(0.05) {
        warn!(
            "indicator edge r = 1 is not resolved (nearest node {}, spacing {}); g is only first-order accurate",
            grid.nodes()[i].to_f64_lossy(),
            spacing.to_f64_lossy()
        );
    }
    let indicator = grid.indicator(T::zero(), T::one());
    let values = kernel.apply(&indicator, TailMode::Zero);
    RadialField::from_parts(grid.clone(), values, TailMode::GreenProportional)
}

/// Sup and inf of `(G∗g^σ)/g` over the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenPropertyReport<T> {
    pub sigma: T,
    pub sup_ratio: T,
    pub min_ratio: T,
    pub r_at_sup: T,
}

pub fn check_green_properties<T: Real>(kernel: &KernelMatrix<T>, sigma: T) -> Result<GreenPropertyReport<T>> {
    if !(sigma > T::one()) {
        return Err(Error::InvalidArgument("sigma must exceed 1".into()));
    }
    let g = unit_ball_potential(kernel);
    let powered: Vec<T> = g.values().iter().map(|&v| v.powf(sigma)).collect();
    let conv = kernel.apply(&powered, TailMode::GreenProportional);
    let mut sup = T::zero();
    let mut min = T::infinity();
    let mut at = T::zero();
    for ((&c, &gv), &r) in conv.iter().zip(g.values()).zip(kernel.grid().nodes()) {
        let ratio = c / gv;
        if ratio > sup {
            sup = ratio;
            at = r;
        }
        min = min.min(ratio);
    }
    Ok(GreenPropertyReport { sigma, sup_ratio: sup, min_ratio: min, r_at_sup: at })
}

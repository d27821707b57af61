//! Radial grids: geometric clustering near the origin followed by piecewise
//! uniform spacing, with trapezoid weights for `∫_0^∞ f(s) s^{N−1} ds`.

use crate::error::{Error, Result};
use crate::kernel::BesselKernel;
use crate::real::Real;
use crate::special::sphere_area;

/// Parameters for [`RadialGrid::build`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nodes: usize,
    pub r_max: f64,
    /// Radius of the first node.
    pub r_min: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { nodes: 2048, r_max: 20.0, r_min: 1e-4 }
    }
}

impl GridSpec {
    pub fn new(nodes: usize, r_max: f64) -> Self {
        Self { nodes, r_max, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 32 {
            return Err(Error::InvalidArgument(format!("grid needs at least 32 nodes, got {}", self.nodes)));
        }
        if !(self.r_min > 0.0 && self.r_max > 100.0 * self.r_min && self.r_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < 100·r_min < r_max < ∞, got r_min = {}, r_max = {}",
                self.r_min, self.r_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid<T> {
    dim: u32,
    nodes: Vec<T>,
    weights: Vec<T>,
    green: Vec<T>,
}

impl<T: Real> RadialGrid<T> {
    /// Builds a grid of exactly `spec.nodes` nodes. Every breakpoint inside
    /// `(r_min, r_max)` (indicator edges of the source) becomes a node.
    pub fn build(dim: u32, spec: &GridSpec, breakpoints: &[f64]) -> Result<Self> {
        spec.validate()?;
        let n = spec.nodes;
        let n_geo = (n / 16).max(16);
        let n_uniform = n - n_geo - 1;
        let r_max = spec.r_max;
        let r_min = spec.r_min;

        // growth ratio γ such that the geometric part r_min·γ^k, k ≤ n_geo,
        // ends with step h = r_t(γ−1) and (r_max − r_t)/h = n_uniform.
        let mismatch = |gamma: f64| {
            let r_t = r_min * gamma.powi(n_geo as i32);
            (r_max - r_t) / (r_t * (gamma - 1.0)) - n_uniform as f64
        };
        let (mut lo, mut hi) = (1.0 + 1e-9, 4.0);
        if mismatch(hi) > 0.0 {
            return Err(Error::InvalidArgument("grid too coarse for the requested r_min".into()));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mismatch(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let gamma = 0.5 * (lo + hi);
        let mut radii: Vec<f64> = (0..=n_geo).map(|k| r_min * gamma.powi(k as i32)).collect();
        let r_t = *radii.last().expect("geometric part is nonempty");
        if r_t >= r_max {
            return Err(Error::InvalidArgument("geometric part overruns r_max".into()));
        }

        let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&b| b > r_t && b < r_max).collect();
        cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        cuts.dedup();
        let mut edges = vec![r_t];
        edges.extend(cuts);
        edges.push(r_max);
        let lengths: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
        let counts = apportion(&lengths, n_uniform);
        for (w, &m) in edges.windows(2).zip(&counts) {
            let h = (w[1] - w[0]) / m as f64;
            for k in 1..=m {
                radii.push(if k == m { w[1] } else { w[0] + h * k as f64 });
            }
        }

        for &b in breakpoints.iter().filter(|&&b| b > r_min && b < r_t) {
            let idx = radii
                .iter()
                .enumerate()
                .min_by(|x, y| (x.1 - b).abs().partial_cmp(&(y.1 - b).abs()).expect("finite"))
                .map(|(i, _)| i)
                .expect("nonempty grid");
            if idx > 0 && radii[idx - 1] < b && radii[idx + 1] > b {
                radii[idx] = b;
            }
        }
        debug_assert_eq!(radii.len(), n);
        Self::from_nodes(dim, radii.into_iter().map(T::lit).collect())
    }

    /// Grid with explicit nodes (strictly increasing, positive).
    pub fn from_nodes(dim: u32, nodes: Vec<T>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension(dim, 2));
        }
        if nodes.len() < 3 {
            return Err(Error::InvalidArgument("grid needs at least 3 nodes".into()));
        }
        if !(nodes[0] > T::zero()) || nodes.windows(2).any(|w| !(w[1] > w[0])) || nodes.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidArgument("grid nodes must be positive, finite and strictly increasing".into()));
        }
        let n = nodes.len();
        let half = T::lit(0.5);
        let power = |r: T| r.powi(dim as i32 - 1);
        let mut weights = Vec::with_capacity(n);
        for j in 0..n {
            let left = if j == 0 { T::zero() } else { nodes[j] - nodes[j - 1] };
            let right = if j + 1 == n { T::zero() } else { nodes[j + 1] - nodes[j] };
            weights.push(power(nodes[j]) * half * (left + right));
        }
        // [0, r_1] with the integrand frozen at its first-node value
        weights[0] = weights[0] + nodes[0].powi(dim as i32) / T::lit(f64::from(dim));
        let kernel = BesselKernel::new(dim)?;
        let green = nodes.iter().map(|&r| kernel.at(r)).collect();
        Ok(Self { dim, nodes, weights, green })
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    /// Weights `W_j` with `Σ_j W_j f(r_j) ≈ ∫_0^{r_max} f(s) s^{N−1} ds`.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// `G(r_j)` at every node.
    pub fn green(&self) -> &[T] {
        &self.green
    }

    pub fn r_max(&self) -> T {
        *self.nodes.last().expect("nonempty grid")
    }

    /// `|S^{N−1}|`
    pub fn sphere_area(&self) -> T {
        sphere_area::<T>(self.dim - 1)
    }

    /// `∫_{B(0, r_max)} f dx` for radial nodal values.
    pub fn integrate(&self, values: &[T]) -> T {
        self.sphere_area() * self.weights.iter().zip(values).map(|(&w, &v)| w * v).sum::<T>()
    }

    /// Index of the node closest to `r`.
    pub fn nearest(&self, r: T) -> usize {
        match self.nodes.binary_search_by(|x| x.partial_cmp(&r).expect("finite")) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i == self.len() => i - 1,
            Err(i) => {
                if r - self.nodes[i - 1] <= self.nodes[i] - r {
                    i - 1
                } else {
                    i
                }
            }
        }
    }

    /// Nodal values of the indicator of `lo ≤ r ≤ hi` (`lo = 0` for a ball).
    /// A node sitting on an edge gets the share of its trapezoid cell that
    /// lies inside, so the quadrature of the indicator has no first-order
    /// edge error.
    pub fn indicator(&self, lo: T, hi: T) -> Vec<T> {
        let n = self.len();
        let r = &self.nodes;
        (0..n)
            .map(|j| {
                let left = if j == 0 { r[0] } else { r[j] - r[j - 1] };
                let right = if j + 1 == n { T::zero() } else { r[j + 1] - r[j] };
                if r[j] > lo && r[j] < hi {
                    T::one()
                } else if r[j] == hi && r[j] > lo {
                    left / (left + right)
                } else if r[j] == lo && r[j] < hi {
                    right / (left + right)
                } else {
                    T::zero()
                }
            })
            .collect()
    }

    /// FNV-1a hash of the dimension and node bit patterns.
    pub fn fingerprint(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                hash ^= u64::from(b);
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        };
        feed(&self.dim.to_le_bytes());
        for r in &self.nodes {
            feed(&r.to_f64_lossy().to_bits().to_le_bytes());
        }
        hash
    }

    pub fn same_as(&self, other: &Self) -> bool {
        std::ptr::eq(self, other) || (self.dim == other.dim && self.nodes == other.nodes)
    }
}

/// Splits `total` intervals across segments proportionally to their lengths,
/// at least one each.
fn apportion(lengths: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = lengths.iter().sum();
    let mut counts: Vec<usize> = lengths.iter().map(|l| ((l / sum) * total as f64).floor().max(1.0) as usize).collect();
    let mut assigned: usize = counts.iter().sum();
    while assigned < total {
        let i = (0..counts.len())
            .max_by(|&a, &b| {
                let da = lengths[a] / counts[a] as f64;
                let db = lengths[b] / counts[b] as f64;
                da.partial_cmp(&db).expect("finite")
            })
            .expect("nonempty");
        counts[i] += 1;
        assigned += 1;
    }
    while assigned > total {
        let i = (0..counts.len())
            .filter(|&i| counts[i] > 1)
            .min_by(|&a, &b| {
                let da = lengths[a] / counts[a] as f64;
                let db = lengths[b] / counts[b] as f64;
                da.partial_cmp(&db).expect("finite")
            })
            .expect("some segment has spare intervals");
        counts[i] -= 1;
        assigned -= 1;
    }
    counts
}

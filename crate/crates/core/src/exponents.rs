//! Critical exponents and exponent bookkeeping.
//!
//! `p_S` is kept exact (rational) where it is finite, the Joseph–Lundgren
//! exponent is evaluated in floating point, and every sign decision that feeds
//! the bootstrap chain is made in exact rational arithmetic.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Signed, ToPrimitive};

use crate::error::{Error, Result};
use crate::measure::SourceMeasure;
use crate::real::Real;

/// A value that is either finite or `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extended<T> {
    Finite(T),
    Infinite,
}

impl<T: Copy + PartialOrd> Extended<T> {
    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(&self) -> Option<T> {
        match *self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    /// `x < self`.
    pub fn exceeds(&self, x: T) -> bool {
        match *self {
            Extended::Finite(v) => x < v,
            Extended::Infinite => true,
        }
    }
}

impl<T: PartialOrd> PartialOrd for Extended<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Extended::Finite(a), Extended::Finite(b)) => a.partial_cmp(b),
            (Extended::Finite(_), Extended::Infinite) => Some(Ordering::Less),
            (Extended::Infinite, Extended::Finite(_)) => Some(Ordering::Greater),
            (Extended::Infinite, Extended::Infinite) => Some(Ordering::Equal),
        }
    }
}

impl<T: fmt::Display> fmt::Display for Extended<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => v.fmt(f),
            Extended::Infinite => f.write_str("inf"),
        }
    }
}

fn check_dimension(n: u32, min: u32) -> Result<()> {
    if n < min {
        Err(Error::InvalidDimension(n, min))
    } else {
        Ok(())
    }
}

fn check_exponent<T: Real>(p: T) -> Result<()> {
    if p > T::one() && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p.to_f64_lossy()))
    }
}

/// Exact Sobolev exponent `(N+2)/(N−2)`, infinite for `N = 2`.
pub fn sobolev_exponent_exact(n: u32) -> Result<Extended<Rational64>> {
    check_dimension(n, 2)?;
    if n == 2 {
        return Ok(Extended::Infinite);
    }
    Ok(Extended::Finite(Rational64::new(i64::from(n) + 2, i64::from(n) - 2)))
}

pub fn sobolev_exponent<T: Real>(n: u32) -> Result<Extended<T>> {
    Ok(match sobolev_exponent_exact(n)? {
        Extended::Finite(r) => Extended::Finite(T::lit(*r.numer() as f64) / T::lit(*r.denom() as f64)),
        Extended::Infinite => Extended::Infinite,
    })
}

/// Joseph–Lundgren exponent: infinite for `N ≤ 10`, otherwise
/// `((N−2)² − 4N + 8√(N−1)) / ((N−2)(N−10))`.
pub fn joseph_lundgren_exponent<T: Real>(n: u32) -> Result<Extended<T>> {
    check_dimension(n, 2)?;
    if n <= 10 {
        return Ok(Extended::Infinite);
    }
    let nf = T::lit(f64::from(n));
    let two = T::lit(2.0);
    let num = (nf - two).powi(2) - T::lit(4.0) * nf + T::lit(8.0) * (nf - T::one()).sqrt();
    let den = (nf - two) * (nf - T::lit(10.0));
    Ok(Extended::Finite(num / den))
}

/// The quadratic `(N−2)(N−10)p² − 2(N²−8N+4)p + (N−2)²` whose negativity
/// (for `p ≥ p_S`) is equivalent to the existence of an admissible ν.
pub fn jl_quadratic<T: Real>(n: u32, p: T) -> T {
    let nf = T::lit(f64::from(n));
    let two = T::lit(2.0);
    (nf - two) * (nf - T::lit(10.0)) * p * p - two * (nf * nf - T::lit(8.0) * nf + T::lit(4.0)) * p + (nf - two).powi(2)
}

/// Roots `(p_minus, p_plus)` of [`jl_quadratic`], sorted ascending.
pub fn jl_quadratic_roots<T: Real>(n: u32) -> Result<(T, T)> {
    check_dimension(n, 3)?;
    if n == 10 {
        return Err(Error::DegenerateQuadratic { root: 4.0 / 3.0 });
    }
    let nf = T::lit(f64::from(n));
    let center = nf * nf - T::lit(8.0) * nf + T::lit(4.0);
    let spread = T::lit(8.0) * (nf - T::one()).sqrt();
    let den = (nf - T::lit(2.0)) * (nf - T::lit(10.0));
    let a = (center - spread) / den;
    let b = (center + spread) / den;
    Ok(if a <= b { (a, b) } else { (b, a) })
}

/// Exact test of `p < p_JL(N)` for rational `p > 1`.
pub fn below_joseph_lundgren_exact(n: u32, p: &BigRational) -> Result<bool> {
    check_dimension(n, 2)?;
    if n <= 10 {
        return Ok(true);
    }
    // Leading coefficient is positive for N ≥ 11, so p < p_plus iff the
    // quadratic is negative or p lies left of the vertex.
    let ni = BigInt::from(n);
    let two = BigInt::from(2);
    let a = BigRational::from_integer((&ni - &two) * (&ni - BigInt::from(10)));
    let b_half = BigRational::from_integer(&ni * &ni - BigInt::from(8) * &ni + BigInt::from(4));
    let c = BigRational::from_integer((&ni - &two) * (&ni - &two));
    let value = &a * p * p - BigRational::from_integer(two) * &b_half * p + c;
    if value.is_negative() {
        return Ok(true);
    }
    let vertex = b_half / a;
    Ok(p < &vertex)
}

/// Interval of exponents ν satisfying `4ν(1−ν)p > 1` and
/// `(p_S+1)/(2ν) > N(p−1)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuWindow<T> {
    pub nu_minus: T,
    pub nu_plus: T,
    /// Upper bound on ν from the integrability condition (`+∞` for `N = 2`).
    pub nu_cap: Extended<T>,
    /// Open interval `(lo, hi)`, `None` when empty.
    pub window: Option<(T, T)>,
}

impl<T: Real> NuWindow<T> {
    pub fn is_empty(&self) -> bool {
        self.window.is_none()
    }

    pub fn contains(&self, nu: T) -> bool {
        self.window.is_some_and(|(lo, hi)| lo < nu && nu < hi)
    }
}

/// `4ν(1−ν)p > 1`
pub fn satisfies_energy_condition<T: Real>(p: T, nu: T) -> bool {
    T::lit(4.0) * nu * (T::one() - nu) * p > T::one()
}

/// `(p_S+1)/(2ν) > N(p−1)/2`
pub fn satisfies_integrability_condition<T: Real>(n: u32, p: T, nu: T) -> bool {
    match sobolev_exponent::<T>(n) {
        Ok(Extended::Finite(ps)) => {
            (ps + T::one()) / (T::lit(2.0) * nu) > T::lit(f64::from(n)) * (p - T::one()) / T::lit(2.0)
        }
        Ok(Extended::Infinite) => true,
        Err(_) => false,
    }
}

pub fn nu_window<T: Real>(n: u32, p: T) -> Result<NuWindow<T>> {
    check_dimension(n, 2)?;
    check_exponent(p)?;
    let root = (p * p - p).sqrt();
    let two_p = T::lit(2.0) * p;
    let nu_minus = (p - root) / two_p;
    let nu_plus = (p + root) / two_p;
    let nu_cap = match sobolev_exponent::<T>(n)? {
        Extended::Finite(ps) => Extended::Finite((ps + T::one()) / (T::lit(f64::from(n)) * (p - T::one()))),
        Extended::Infinite => Extended::Infinite,
    };
    let hi = match nu_cap {
        Extended::Finite(cap) => cap.min(nu_plus),
        Extended::Infinite => nu_plus,
    };
    let window = (nu_minus < hi).then_some((nu_minus, hi));
    Ok(NuWindow { nu_minus, nu_plus, nu_cap, window })
}

/// Integrability exponents `q` and the sequence `1/q_j = 1/q − j(2/N − 1/r*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapChain {
    pub r_star: BigRational,
    /// `1/q_j` for `j = 0..=j_star`; the last entry is negative.
    pub inverse_q: Vec<BigRational>,
    pub j_star: usize,
}

impl BootstrapChain {
    /// `2/N − 1/r*`, the decrement of `1/q_j` per step.
    pub fn step(&self) -> BigRational {
        &self.inverse_q[0] - &self.inverse_q[1]
    }

    /// `q_j` for the indices where it is positive.
    pub fn q_values(&self) -> Vec<BigRational> {
        self.inverse_q.iter().take_while(|v| v.is_positive()).map(|v| v.recip()).collect()
    }
}

/// Exact rational conversion of a finite float.
pub fn rational_from_f64(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::InvalidArgument(format!("{x} is not finite")))
}

pub fn bootstrap_chain(n: u32, p: &BigRational, q: &BigRational) -> Result<BootstrapChain> {
    check_dimension(n, 2)?;
    let one = BigRational::one();
    if p <= &one {
        return Err(Error::InvalidExponent(p.to_f64().unwrap_or(f64::NAN)));
    }
    let nr = BigRational::from_integer(BigInt::from(n));
    let two = BigRational::from_integer(BigInt::from(2));
    let lower_q = std::cmp::max(p.clone(), &nr * (p - &one) / &two);
    if q <= &lower_q {
        return Err(Error::InfeasibleChain(format!("q = {q} must exceed max{{p, N(p-1)/2}} = {lower_q}")));
    }
    let lo = std::cmp::max(&nr / &two, q / (q - &one));
    let hi = q / (p - &one);
    if lo >= hi {
        return Err(Error::InfeasibleChain(format!("empty r* interval ({lo}, {hi})")));
    }
    let inv_q = q.recip();
    let two_over_n = &two / &nr;
    let r_star = select_r_star(&lo, &hi, &inv_q, &two_over_n);
    let step = &two_over_n - r_star.recip();
    let ratio = &inv_q / &step;
    let j_star = ratio
        .floor()
        .to_integer()
        .to_usize()
        .ok_or_else(|| Error::InfeasibleChain("bootstrap chain length does not fit in usize".into()))?
        + 1;
    let inverse_q = (0..=j_star).map(|j| &inv_q - BigRational::from_integer(BigInt::from(j)) * &step).collect();
    Ok(BootstrapChain { r_star, inverse_q, j_star })
}

/// Midpoint of `(lo, hi)`, halved toward `hi` while `1/q` sits on the
/// lattice `{j(2/N − 1/r*) : j ≥ 0}`.
fn select_r_star(lo: &BigRational, hi: &BigRational, inv_q: &BigRational, two_over_n: &BigRational) -> BigRational {
    let two = BigRational::from_integer(BigInt::from(2));
    let mut r_star = (lo + hi) / &two;
    loop {
        let step = two_over_n - r_star.recip();
        if !(inv_q / &step).is_integer() {
            return r_star;
        }
        r_star = (&r_star + hi) / &two;
    }
}

/// Open interval of integrability exponents `q` for which the forcing term
/// is admissible; `upper = +∞` when unconstrained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QRange<T> {
    pub lower: T,
    pub upper: Extended<T>,
}

impl<T: Real> QRange<T> {
    pub fn is_empty(&self) -> bool {
        !self.upper.exceeds(self.lower)
    }

    pub fn contains(&self, q: T) -> bool {
        q > self.lower && self.upper.exceeds(q)
    }

    /// A deterministic interior point: the midpoint when bounded, `2·lower`
    /// otherwise.
    pub fn representative(&self) -> Option<T> {
        if self.is_empty() {
            return None;
        }
        Some(match self.upper {
            Extended::Finite(u) => (self.lower + u) / T::lit(2.0),
            Extended::Infinite => T::lit(2.0) * self.lower,
        })
    }
}

pub fn admissible_q_range<T: Real>(n: u32, p: T, measure: &SourceMeasure<T>) -> Result<QRange<T>> {
    check_dimension(n, 2)?;
    check_exponent(p)?;
    let lower = p.max(T::lit(f64::from(n)) * (p - T::one()) / T::lit(2.0));
    let upper = match measure {
        SourceMeasure::DiracOrigin { .. } if n >= 3 => {
            Extended::Finite(T::lit(f64::from(n)) / T::lit(f64::from(n - 2)))
        }
        _ => Extended::Infinite,
    };
    Ok(QRange { lower, upper })
}

/// `(t^p − s^p − (1+ε)t^{p−1}(t−s)) / ((t−s)^{1−δ} s^{p−1+δ})`, clamped at 0.
///
/// Boundedness of this ratio over `t ≥ s ≥ 0` is the content of the tangent
/// gap inequality `t^p − s^p ≤ (1+ε)t^{p−1}(t−s) + c(t−s)^{1−δ}s^{p−1+δ}`.
pub fn tangent_gap_ratio<T: Real>(t: T, s: T, p: T, eps: T, delta: T) -> Result<T> {
    check_exponent(p)?;
    if !(s >= T::zero() && t >= s) {
        return Err(Error::InvalidArgument(format!(
            "need t >= s >= 0, got t = {}, s = {}",
            t.to_f64_lossy(),
            s.to_f64_lossy()
        )));
    }
    if !(eps > T::zero()) || !(delta >= T::zero() && delta < T::one()) {
        return Err(Error::InvalidArgument("need eps > 0 and 0 <= delta < 1".into()));
    }
    if t == s || s == T::zero() {
        return Ok(T::zero());
    }
    let diff = t - s;
    let numerator = t.powf(p) - s.powf(p) - (T::one() + eps) * t.powf(p - T::one()) * diff;
    let denominator = diff.powf(T::one() - delta) * s.powf(p - T::one() + delta);
    Ok((numerator / denominator).max(T::zero()))
}

/// Supremum of [`tangent_gap_ratio`] over the uniform grid
/// `{extent·k/points : k = 1..=points}²` restricted to `t ≥ s`.
pub fn sampled_tangent_gap_sup<T: Real>(p: T, eps: T, delta: T, extent: T, points: usize) -> Result<T> {
    let h = extent / T::from_usize_lossy(points);
    let mut sup = T::zero();
    for i in 1..=points {
        let t = h * T::from_usize_lossy(i);
        for k in 1..=i {
            let s = h * T::from_usize_lossy(k);
            sup = sup.max(tangent_gap_ratio(t, s, p, eps, delta)?);
        }
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn sobolev_values() {
        assert_eq!(sobolev_exponent_exact(2).unwrap(), Extended::Infinite);
        assert_eq!(sobolev_exponent_exact(3).unwrap(), Extended::Finite(Rational64::from_integer(5)));
        assert_eq!(sobolev_exponent_exact(6).unwrap(), Extended::Finite(Rational64::from_integer(2)));
        assert!(matches!(sobolev_exponent_exact(1), Err(Error::InvalidDimension(1, 2))));
    }

    #[test]
    fn joseph_lundgren_values() {
        assert_eq!(joseph_lundgren_exponent::<f64>(10).unwrap(), Extended::Infinite);
        let p11 = joseph_lundgren_exponent::<f64>(11).unwrap().finite().unwrap();
        assert_relative_eq!(p11, (37.0 + 8.0 * 10f64.sqrt()) / 9.0, max_relative = 1e-15);
        assert_relative_eq!(p11, 6.922_025, max_relative = 1e-6);
        let p12 = joseph_lundgren_exponent::<f64>(12).unwrap().finite().unwrap();
        assert_relative_eq!(p12, (52.0 + 8.0 * 11f64.sqrt()) / 20.0, max_relative = 1e-15);
        assert_relative_eq!(p12, 3.926_65, max_relative = 1e-5);
        assert!(joseph_lundgren_exponent::<f64>(0).is_err());
    }

    #[test]
    fn nu_window_for_p_two() {
        let w = nu_window(5, 2.0f64).unwrap();
        assert_relative_eq!(w.nu_minus, (2.0 - 2f64.sqrt()) / 4.0, max_relative = 1e-15);
        assert_relative_eq!(w.nu_plus, (2.0 + 2f64.sqrt()) / 4.0, max_relative = 1e-15);
        assert!(!w.is_empty());
        assert!(matches!(nu_window(3, 1.0f64), Err(Error::InvalidExponent(_))));
    }

    #[test]
    fn nu_window_empty_above_jl() {
        let pjl = joseph_lundgren_exponent::<f64>(11).unwrap().finite().unwrap();
        let w = nu_window(11, pjl + 0.01).unwrap();
        assert!(w.is_empty());
        // dense brute force over ν confirms no admissible ν
        let hits = (1..100_000)
            .map(|k| k as f64 / 100_000.0)
            .filter(|&nu| {
                satisfies_energy_condition(pjl + 0.01, nu) && satisfies_integrability_condition(11, pjl + 0.01, nu)
            })
            .count();
        assert_eq!(hits, 0);
        assert!(!nu_window(11, pjl - 0.01).unwrap().is_empty());
    }

    #[test]
    fn quadratic_roots() {
        let (_, plus) = jl_quadratic_roots::<f64>(11).unwrap();
        let pjl = joseph_lundgren_exponent::<f64>(11).unwrap().finite().unwrap();
        assert_relative_eq!(plus, pjl, max_relative = 1e-12);
        match jl_quadratic_roots::<f64>(10) {
            Err(Error::DegenerateQuadratic { root }) => assert_relative_eq!(root, 4.0 / 3.0),
            other => panic!("unexpected {other:?}"),
        }
        let (a, b) = jl_quadratic_roots::<f64>(12).unwrap();
        for r in [a, b] {
            let scale = 10.0 * r * r + 2.0 * 76.0 * r + 100.0;
            assert!(jl_quadratic(12, r).abs() <= 1e-9 * scale);
        }
        // the linear case N = 10 really has the root 4/3
        assert!(jl_quadratic(10, 4.0f64 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn exact_jl_comparison() {
        assert!(below_joseph_lundgren_exact(11, &rat(69, 10)).unwrap());
        assert!(!below_joseph_lundgren_exact(11, &rat(7, 1)).unwrap());
        assert!(below_joseph_lundgren_exact(11, &rat(3, 2)).unwrap());
        assert!(below_joseph_lundgren_exact(9, &rat(1000, 1)).unwrap());
    }

    #[test]
    fn bootstrap_dirac_example() {
        // N = 3, p = 2, q = 2.9: r* interval (max{3/2, 29/19}, 29/10)
        let chain = bootstrap_chain(3, &rat(2, 1), &rat(29, 10)).unwrap();
        let lo = rat(29, 19);
        let hi = rat(29, 10);
        assert!(chain.r_star > lo && chain.r_star < hi);
        assert_eq!(chain.r_star, (lo + hi) / rat(2, 1));
        assert_eq!(chain.j_star, 2);
        assert!(chain.inverse_q[chain.j_star - 1].is_positive());
        assert!(chain.inverse_q[chain.j_star].is_negative());
    }

    #[test]
    fn bootstrap_large_q() {
        let chain = bootstrap_chain(3, &rat(2, 1), &rat(10, 1)).unwrap();
        assert!(chain.step().is_positive());
        assert!(chain.j_star >= 1);
        assert_eq!(chain.inverse_q.len(), chain.j_star + 1);
    }

    #[test]
    fn r_star_nudges_off_lattice() {
        // midpoint 3 gives step 1/2 − 1/3 = 1/6 = 1/q, so one halving toward 4
        let r = select_r_star(&rat(2, 1), &rat(4, 1), &rat(1, 6), &rat(1, 2));
        assert_eq!(r, rat(7, 2));
        let r = select_r_star(&rat(2, 1), &rat(4, 1), &rat(1, 5), &rat(1, 2));
        assert_eq!(r, rat(3, 1));
    }

    #[test]
    fn bootstrap_rejects_small_q() {
        assert!(matches!(bootstrap_chain(3, &rat(3, 1), &rat(3, 1)), Err(Error::InfeasibleChain(_))));
        assert!(matches!(bootstrap_chain(3, &rat(2, 1), &rat(3, 2)), Err(Error::InfeasibleChain(_))));
    }

    #[test]
    fn q_ranges() {
        let dirac = SourceMeasure::DiracOrigin { mass: 1.0f64 };
        let ball = SourceMeasure::UniformBall { radius: 1.0f64, mass: 1.0 };
        let r = admissible_q_range(3, 2.0, &dirac).unwrap();
        assert_eq!((r.lower, r.upper), (2.0, Extended::Finite(3.0)));
        assert!(admissible_q_range(3, 3.0, &dirac).unwrap().is_empty());
        let r = admissible_q_range(3, 4.0, &ball).unwrap();
        assert_eq!((r.lower, r.upper), (4.5, Extended::Infinite));
        let r = admissible_q_range(3, 5.0, &ball).unwrap();
        assert_eq!(r.lower, 6.0);
        assert_eq!(admissible_q_range(2, 4.0, &dirac).unwrap().upper, Extended::Infinite);
    }

    #[test]
    fn tangent_gap_edge_cases() {
        assert_eq!(tangent_gap_ratio(3.0f64, 0.0, 2.0, 0.1, 0.1).unwrap(), 0.0);
        assert_eq!(tangent_gap_ratio(1.0f64, 1.0, 2.0, 0.1, 0.1).unwrap(), 0.0);
        assert!(tangent_gap_ratio(1.0f64, 2.0, 2.0, 0.1, 0.1).is_err());
        // homogeneous of degree zero: only s/t matters
        let a = tangent_gap_ratio(2.0f64, 1.0, 2.0, 0.1, 0.1).unwrap();
        let b = tangent_gap_ratio(8.0f64, 4.0, 2.0, 0.1, 0.1).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }
}

//! Special functions: modified Bessel functions of the second kind, Bessel
//! functions of the first kind, half-integer gamma values, sphere areas and
//! Gauss–Legendre rules.
//!
//! Orders are passed doubled (`twice_order = 2ν`) so that both the integer and
//! the half-integer orders produced by `ν = (N − 2)/2` are represented exactly.

use crate::error::{Error, Result};
use crate::real::Real;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const MAX_TERMS: usize = 10_000;

/// `Γ(twice / 2)` for `twice ≥ 1`.
pub fn gamma_half<T: Real>(twice: u32) -> T {
    assert!(twice >= 1, "gamma_half needs a positive argument");
    let (mut value, mut x) = if twice.is_multiple_of(2) { (T::one(), T::one()) } else { (T::PI().sqrt(), T::lit(0.5)) };
    let target = T::lit(f64::from(twice) / 2.0);
    while x < target {
        value = value * x;
        x = x + T::one();
    }
    value
}

/// Surface area `|S^k|` of the unit sphere in `R^{k+1}`; `|S^0| = 2`.
pub fn sphere_area<T: Real>(k: u32) -> T {
    let half = T::lit(f64::from(k + 1) / 2.0);
    T::lit(2.0) * T::PI().powf(half) / gamma_half::<T>(k + 1)
}

/// Volume of the ball of radius `radius` in `R^dim`.
pub fn ball_volume<T: Real>(dim: u32, radius: T) -> T {
    sphere_area::<T>(dim - 1) * radius.powi(dim as i32) / T::lit(f64::from(dim))
}

/// Modified Bessel function `K_ν(z)` with `ν = twice_order / 2`.
pub fn bessel_k<T: Real>(twice_order: u32, z: T) -> Result<T> {
    Ok(bessel_k_scaled(twice_order, z)? * (-z).exp())
}

/// Exponentially scaled `e^z K_ν(z)`.
pub fn bessel_k_scaled<T: Real>(twice_order: u32, z: T) -> Result<T> {
    if !(z > T::zero()) || !z.is_finite() {
        return Err(Error::Domain(format!("K_nu(z) needs finite z > 0, got {}", z.to_f64_lossy())));
    }
    Ok(k_scaled_unchecked(twice_order, z))
}

/// `e^z K_ν(z)` without argument validation; `z` must be positive and finite.
pub(crate) fn k_scaled_unchecked<T: Real>(twice_order: u32, z: T) -> T {
    if twice_order % 2 == 1 {
        return half_integer_k_scaled(twice_order / 2, z);
    }
    let order = twice_order / 2;
    let (k0, k1) = k0_k1_scaled(z);
    if order == 0 {
        return k0;
    }
    let (mut prev, mut cur) = (k0, k1);
    for m in 1..order {
        let next = prev + T::lit(2.0 * f64::from(m)) / z * cur;
        prev = cur;
        cur = next;
    }
    cur
}

/// `e^z K_{n+1/2}(z) = √(π/2z) Σ_{k=0}^{n} (n+k)! / (k!(n−k)!) (2z)^{−k}`.
fn half_integer_k_scaled<T: Real>(n: u32, z: T) -> T {
    let inv_two_z = (T::lit(2.0) * z).recip();
    let mut coeff = T::one();
    let mut power = T::one();
    let mut sum = T::one();
    for k in 0..n {
        coeff = coeff * T::lit(f64::from((n + k + 1) * (n - k))) / T::lit(f64::from(k + 1));
        power = power * inv_two_z;
        sum = sum + coeff * power;
    }
    (T::PI() / (T::lit(2.0) * z)).sqrt() * sum
}

/// Scaled `(e^z K_0(z), e^z K_1(z))`: ascending series for `z ≤ 2`, Steed's
/// continued fraction above.
fn k0_k1_scaled<T: Real>(z: T) -> (T, T) {
    if z <= T::lit(2.0) {
        let (k0, k1) = k0_k1_series(z);
        let e = z.exp();
        (k0 * e, k1 * e)
    } else {
        k0_k1_continued_fraction(z)
    }
}

fn k0_k1_series<T: Real>(z: T) -> (T, T) {
    let eps = T::epsilon();
    let gamma = T::lit(EULER_GAMMA);
    let half = z / T::lit(2.0);
    let y = half * half;
    let log_half = half.ln();

    // I_0, I_1 and the harmonic-number sums, accumulated term by term.
    let mut term0 = T::one(); // y^k / (k!)^2
    let mut term1 = T::one(); // y^k / (k! (k+1)!)
    let mut harmonic = T::zero(); // H_k
    let mut i0 = T::one();
    let mut i1_sum = T::one();
    let mut k0_sum = T::zero();
    let mut k1_sum = -gamma + (T::one() - gamma); // ψ(1) + ψ(2)
    for k in 1..MAX_TERMS {
        let kf = T::from_usize_lossy(k);
        term0 = term0 * y / (kf * kf);
        term1 = term1 * y / (kf * (kf + T::one()));
        harmonic = harmonic + kf.recip();
        let harmonic_next = harmonic + (kf + T::one()).recip();
        i0 = i0 + term0;
        i1_sum = i1_sum + term1;
        let d0 = harmonic * term0;
        let d1 = (harmonic - gamma + harmonic_next - gamma) * term1;
        k0_sum = k0_sum + d0;
        k1_sum = k1_sum + d1;
        if term0 <= eps * i0 && d0.abs() <= eps * k0_sum.abs() && d1.abs() <= eps * k1_sum.abs() {
            break;
        }
    }
    let i1 = half * i1_sum;
    let k0 = -(log_half + gamma) * i0 + k0_sum;
    let k1 = z.recip() + i1 * log_half - z / T::lit(4.0) * k1_sum;
    (k0, k1)
}

fn k0_k1_continued_fraction<T: Real>(z: T) -> (T, T) {
    let eps = T::epsilon();
    let two = T::lit(2.0);
    let a1 = T::lit(0.25);
    let mut b = two * (T::one() + z);
    let mut d = b.recip();
    let mut h = d;
    let mut delh = d;
    let mut q1 = T::zero();
    let mut q2 = T::one();
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = T::one() + q * delh;
    for i in 2..MAX_TERMS {
        let fi = T::from_usize_lossy(i);
        a = a - two * (fi - T::one());
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q = q + c * qnew;
        b = b + two;
        d = (b + a * d).recip();
        delh = (b * d - T::one()) * delh;
        h = h + delh;
        let dels = q * delh;
        s = s + dels;
        if (dels / s).abs() < eps {
            break;
        }
    }
    h = a1 * h;
    let k0 = (T::PI() / (two * z)).sqrt() / s;
    let k1 = k0 * (z + T::lit(0.5) - h) / z;
    (k0, k1)
}

/// Bessel function of the first kind `J_ν(x)` with `ν = twice_order / 2`,
/// by its ascending series. Intended for `0 ≤ x ≲ 30`.
pub fn bessel_j<T: Real>(twice_order: u32, x: T) -> T {
    let nu = T::lit(f64::from(twice_order) / 2.0);
    if x == T::zero() {
        return if twice_order == 0 { T::one() } else { T::zero() };
    }
    let half = x / T::lit(2.0);
    let y = half * half;
    let mut term = half.powf(nu) / gamma_half::<T>(twice_order + 2);
    let mut sum = term;
    for k in 1..MAX_TERMS {
        let kf = T::from_usize_lossy(k);
        term = -term * y / (kf * (kf + nu));
        sum = sum + term;
        if kf > x && term.abs() <= T::epsilon() * sum.abs() {
            break;
        }
    }
    sum
}

/// First positive zero `j_{ν,1}` of `J_ν`.
pub fn bessel_j_first_zero<T: Real>(twice_order: u32) -> T {
    let nu = f64::from(twice_order) / 2.0;
    let step = T::lit(0.05);
    let mut lo = T::lit(nu + 1.0);
    let mut f_lo = bessel_j(twice_order, lo);
    let mut hi = lo + step;
    let mut f_hi = bessel_j(twice_order, hi);
    while f_lo * f_hi > T::zero() {
        lo = hi;
        f_lo = f_hi;
        hi = hi + step;
        f_hi = bessel_j(twice_order, hi);
    }
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        let f_mid = bessel_j(twice_order, mid);
        if f_mid == T::zero() {
            return mid;
        }
        if f_lo * f_mid < T::zero() {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
        if hi - lo <= T::epsilon() * mid {
            break;
        }
    }
    (lo + hi) / T::lit(2.0)
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> GaussLegendre<T> {
    pub fn new(points: usize) -> Self {
        assert!(points >= 1);
        let mut nodes = vec![T::zero(); points];
        let mut weights = vec![T::zero(); points];
        let n = T::from_usize_lossy(points);
        for i in 0..points.div_ceil(2) {
            let guess = (T::PI() * (T::from_usize_lossy(i) + T::lit(0.75)) / (n + T::lit(0.5))).cos();
            let mut x = guess;
            let mut dp = T::one();
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(points, x);
                dp = d;
                let dx = p / d;
                x = x - dx;
                if dx.abs() <= T::epsilon() * T::lit(4.0) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(points, x);
            dp = if d.is_finite() { d } else { dp };
            let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[points - 1 - i] = x;
            weights[i] = w;
            weights[points - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: T, b: T) -> impl Iterator<Item = (T, T)> + '_ {
        let half = (b - a) / T::lit(2.0);
        let mid = (a + b) / T::lit(2.0);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(T) -> T>(&self, a: T, b: T, mut f: F) -> T {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative<T: Real>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    for k in 2..=n {
        let kf = T::from_usize_lossy(k);
        let p2 = ((T::lit(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = T::from_usize_lossy(n);
    let d = nf * (x * p1 - p0) / (x * x - T::one());
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// `K_ν(z) = ∫_0^∞ e^{−z cosh t} cosh(νt) dt`, integrated on panels.
    fn k_integral(nu: f64, z: f64) -> f64 {
        let gl = GaussLegendre::<f64>::new(30);
        let upper = (2.0 * (750.0 / z).ln().max(1.0)).max(1.0) + 2.0;
        let panels = 200;
        let h = upper / panels as f64;
        (0..panels)
            .map(|k| gl.integrate(k as f64 * h, (k + 1) as f64 * h, |t| (-z * t.cosh()).exp() * (nu * t).cosh()))
            .sum()
    }

    #[test]
    fn half_order_closed_form() {
        let k = bessel_k::<f64>(1, 1.0).unwrap();
        assert_relative_eq!(k, (std::f64::consts::PI / 2.0).sqrt() * (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(k, 0.461_068_504_447_895, max_relative = 1e-12);
        for z in [10.0, 100.0, 600.0] {
            let scaled = bessel_k_scaled::<f64>(1, z).unwrap() * z.sqrt();
            assert_relative_eq!(scaled, (std::f64::consts::PI / 2.0).sqrt(), max_relative = 1e-14);
        }
    }

    #[test]
    fn order_zero_matches_cosh_integral() {
        let reference = k_integral(0.0, 1.0);
        assert_relative_eq!(bessel_k::<f64>(0, 1.0).unwrap(), reference, max_relative = 1e-12);
        assert_relative_eq!(reference, 0.421_024_438_240_708_3, max_relative = 1e-12);
    }

    #[test]
    fn all_small_orders_match_integral_representation() {
        for twice in 0..=8u32 {
            for &z in &[1e-3, 0.1, 0.7, 1.9, 2.0, 2.1, 3.5, 8.0, 25.0, 90.0] {
                let nu = f64::from(twice) / 2.0;
                let reference = k_integral(nu, z);
                let value = bessel_k::<f64>(twice, z).unwrap();
                assert_relative_eq!(value, reference, max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn domain_errors() {
        assert!(bessel_k::<f64>(0, 0.0).is_err());
        assert!(bessel_k::<f64>(1, -1.0).is_err());
        assert!(bessel_k::<f64>(2, f64::NAN).is_err());
    }

    #[test]
    fn extreme_arguments_are_finite() {
        for twice in 0..6 {
            assert!(bessel_k::<f64>(twice, 1e-6).unwrap().is_finite());
            assert!(bessel_k::<f64>(twice, 700.0).unwrap() > 0.0);
        }
    }

    #[test]
    fn sphere_areas() {
        let pi = std::f64::consts::PI;
        assert_relative_eq!(sphere_area::<f64>(0), 2.0);
        assert_relative_eq!(sphere_area::<f64>(1), 2.0 * pi, max_relative = 1e-15);
        assert_relative_eq!(sphere_area::<f64>(2), 4.0 * pi, max_relative = 1e-15);
        assert_relative_eq!(sphere_area::<f64>(3), 2.0 * pi * pi, max_relative = 1e-15);
        assert_relative_eq!(ball_volume::<f64>(3, 1.0), 4.0 * pi / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn bessel_j_zeros() {
        let pi = std::f64::consts::PI;
        assert_relative_eq!(bessel_j_first_zero::<f64>(1), pi, max_relative = 1e-13);
        assert_relative_eq!(bessel_j_first_zero::<f64>(0), 2.404_825_557_695_773, max_relative = 1e-13);
        assert_relative_eq!(bessel_j_first_zero::<f64>(2), 3.831_705_970_207_512, max_relative = 1e-13);
        assert_relative_eq!(bessel_j_first_zero::<f64>(3), 4.493_409_457_909_064, max_relative = 1e-13);
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let gl = GaussLegendre::<f64>::new(8);
        let value = gl.integrate(0.0, 2.0, |x| x.powi(15));
        assert_relative_eq!(value, 2f64.powi(16) / 16.0, max_relative = 1e-13);
        assert_relative_eq!(gl.integrate(-1.0, 1.0, |_| 1.0), 2.0, max_relative = 1e-15);
    }
}

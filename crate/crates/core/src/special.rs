//! Special functions behind the p-values: regularized incomplete gamma and
//! beta, the chi-square and F survival functions, and the standard normal
//! CDF and its inverse.
//!
//! Survival functions are evaluated directly in the tail (never as `1 - cdf`)
//! so p-values far below machine epsilon keep their relative accuracy.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Convergence control for the series and continued-fraction evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            max_iter: 500,
        }
    }
}

impl Tolerance {
    pub fn new(abs_tol: f64, max_iter: usize) -> Result<Self> {
        if !(abs_tol > 0.0) || max_iter == 0 {
            return Err(Error::Config(format!(
                "tolerance requires abs_tol > 0 and max_iter >= 1, got {abs_tol} / {max_iter}"
            )));
        }
        Ok(Self { abs_tol, max_iter })
    }

    fn eps<T: Scalar>(&self) -> T {
        T::lit(self.abs_tol).max(T::epsilon())
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let pi = T::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += T::lit(c) / (x + T::lit(i as f64));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    half * (T::lit(2.0) * T::PI()).ln() + (x + half) * t.ln() - t + acc.ln()
}

/// ln B(a, b).
pub fn ln_beta<T: Scalar>(a: T, b: T) -> T {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Both P(s, x) and Q(s, x); the branch that is evaluated directly keeps full
/// relative accuracy.
fn gamma_pq<T: Scalar>(s: T, x: T, tol: &Tolerance) -> Result<(T, T)> {
    if !(s > T::zero()) || !(x >= T::zero()) {
        return Err(Error::Domain(format!(
            "incomplete gamma requires s > 0 and x >= 0, got s={s}, x={x}"
        )));
    }
    if x == T::zero() {
        return Ok((T::zero(), T::one()));
    }
    if x.is_infinite() {
        return Ok((T::one(), T::zero()));
    }
    let one = T::one();
    let eps = tol.eps::<T>();
    let log_front = s * x.ln() - x - ln_gamma(s);

    if x < s + one {
        let mut ap = s;
        let mut term = one / s;
        let mut sum = term;
        for _ in 0..tol.max_iter {
            ap += one;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * eps {
                let p = (log_front.exp() * sum).min(one);
                return Ok((p, (one - p).max(T::zero())));
            }
        }
        Err(Error::Numerical(format!(
            "incomplete gamma series did not converge (s={s}, x={x})"
        )))
    } else {
        // modified Lentz on the Legendre continued fraction for Γ(s, x)
        let tiny = T::min_positive_value() / eps;
        let mut b = x + one - s;
        let mut c = one / tiny;
        let mut d = one / b;
        let mut h = d;
        for i in 1..=tol.max_iter {
            let fi = T::lit(i as f64);
            let an = -fi * (fi - s);
            b += T::lit(2.0);
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = one / d;
            let delta = d * c;
            h *= delta;
            if (delta - one).abs() < eps {
                let q = (log_front.exp() * h).clamp(T::zero(), one);
                return Ok((one - q, q));
            }
        }
        Err(Error::Numerical(format!(
            "incomplete gamma continued fraction did not converge (s={s}, x={x})"
        )))
    }
}

/// Upper regularized incomplete gamma Q(s, x) = Γ(s, x) / Γ(s).
pub fn reg_upper_gamma<T: Scalar>(s: T, x: T, tol: &Tolerance) -> Result<T> {
    gamma_pq(s, x, tol).map(|(_, q)| q)
}

/// Lower regularized incomplete gamma P(s, x).
pub fn reg_lower_gamma<T: Scalar>(s: T, x: T, tol: &Tolerance) -> Result<T> {
    gamma_pq(s, x, tol).map(|(p, _)| p)
}

/// Survival function of the chi-square distribution with `k` degrees of freedom.
pub fn chi2_sf<T: Scalar>(x: T, k: T, tol: &Tolerance) -> Result<T> {
    if !(k >= T::one()) {
        return Err(Error::Domain(format!("chi-square dof must be >= 1, got {k}")));
    }
    if x <= T::zero() {
        return Ok(T::one());
    }
    let half = T::lit(0.5);
    reg_upper_gamma(half * k, half * x, tol)
}

fn beta_cf<T: Scalar>(a: T, b: T, x: T, tol: &Tolerance) -> Result<T> {
    let one = T::one();
    let two = T::lit(2.0);
    let eps = tol.eps::<T>();
    let tiny = T::min_positive_value() / eps;
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=tol.max_iter {
        let m = T::lit(m as f64);
        let m2 = two * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let delta = d * c;
        h *= delta;
        if (delta - one).abs() < eps {
            return Ok(h);
        }
    }
    Err(Error::Numerical(format!(
        "incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})"
    )))
}

/// Regularized incomplete beta I_x(a, b).
pub fn reg_inc_beta<T: Scalar>(a: T, b: T, x: T, tol: &Tolerance) -> Result<T> {
    let zero = T::zero();
    let one = T::one();
    if !(a > zero) || !(b > zero) || !(x >= zero && x <= one) {
        return Err(Error::Domain(format!(
            "incomplete beta requires a, b > 0 and x in [0, 1], got a={a}, b={b}, x={x}"
        )));
    }
    if x == zero {
        return Ok(zero);
    }
    if x == one {
        return Ok(one);
    }
    let flip = x > (a + one) / (a + b + T::lit(2.0));
    let (a, b, x) = if flip { (b, a, one - x) } else { (a, b, x) };
    let log_front = a * x.ln() + b * (one - x).ln() - ln_beta(a, b);
    let direct = (log_front.exp() * beta_cf(a, b, x, tol)? / a).clamp(zero, one);
    Ok(if flip { one - direct } else { direct })
}

/// Survival function of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_sf<T: Scalar>(x: T, d1: T, d2: T, tol: &Tolerance) -> Result<T> {
    if !(d1 > T::zero()) || !(d2 > T::zero()) {
        return Err(Error::Domain(format!("F dof must be positive, got {d1}, {d2}")));
    }
    if x <= T::zero() {
        return Ok(T::one());
    }
    if x.is_infinite() {
        return Ok(T::zero());
    }
    let half = T::lit(0.5);
    reg_inc_beta(half * d2, half * d1, d2 / (d2 + d1 * x), tol)
}

/// Standard normal CDF, accurate in both tails.
pub fn norm_cdf<T: Scalar>(z: T) -> T {
    let tol = Tolerance::default();
    let half = T::lit(0.5);
    let s = z * z * half;
    // erfc(|z|/√2) = Q(1/2, z²/2)
    let (p, q) = gamma_pq(half, s, &tol).unwrap_or((T::one(), T::zero()));
    if z < T::zero() {
        half * q
    } else {
        half + half * p
    }
}

const ACKLAM_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const ACKLAM_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACKLAM_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const ACKLAM_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];

fn poly<T: Scalar>(coef: &[f64], x: T) -> T {
    coef.iter().fold(T::zero(), |acc, &c| acc * x + T::lit(c))
}

/// Inverse standard normal CDF: rational approximation refined by one
/// Halley step on [`norm_cdf`].
pub fn norm_ppf<T: Scalar>(p: T) -> Result<T> {
    let zero = T::zero();
    let one = T::one();
    let half = T::lit(0.5);
    if !(p > zero && p < one) {
        return Err(Error::Domain(format!("norm_ppf requires p in (0, 1), got {p}")));
    }
    if p == half {
        return Ok(zero);
    }
    // work in the lower tail where p is represented exactly
    let (q, sign) = if p > half { (one - p, one) } else { (p, -one) };
    let p_low = T::lit(0.02425);
    let x = if q < p_low {
        let r = (T::lit(-2.0) * q.ln()).sqrt();
        poly(&ACKLAM_C, r) / (poly(&ACKLAM_D, r) * r + one)
    } else {
        let u = q - half;
        let r = u * u;
        poly(&ACKLAM_A, r) * u / (poly(&ACKLAM_B, r) * r + one)
    };
    let e = norm_cdf(x) - q;
    let u = e * (T::lit(2.0) * T::PI()).sqrt() * (x * x * half).exp();
    let x = x - u / (one + x * u * half);
    // x is the lower-tail quantile (negative); mirror for the upper tail
    Ok(if sign > zero { -x } else { x })
}

#[cfg(test)]
#[path = "../tests/support/quadrature.rs"]
mod quadrature;

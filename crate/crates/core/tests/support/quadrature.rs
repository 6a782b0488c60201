//! Independent numerical oracles: adaptive Gauss-Kronrod quadrature and
//! bisection. Test-only; shares nothing with the library code paths.
#![allow(dead_code)]

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (k, err) = kronrod15(f, a, b);
    if err <= tol.max(8.0 * f64::EPSILON * k.abs()) || depth == 0 || (b - a).abs() < 1e-15 {
        return k;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// Integral of `f` over `[a, b]` to roughly `tol` absolute error.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    adapt(&f, a, b, tol, 30)
}

/// Integral of `f` over `[a, b]` split into `pieces` equal panels first, so
/// that narrow peaks are not missed by the initial coarse estimate.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, pieces: usize, tol: f64) -> f64 {
    let w = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| adapt(&f, a + i as f64 * w, a + (i + 1) as f64 * w, tol / pieces as f64, 30))
        .sum()
}

/// Upper regularized incomplete gamma Q(s, x) via u = sqrt(t) substitution:
/// integrand 2 u^(2s-1) exp(-u^2), bounded for s >= 1/2 and scaled by its
/// peak so the absolute tolerance is meaningful for large s.
pub fn upper_gamma_oracle(s: f64, x: f64) -> f64 {
    let c = s - 0.5;
    let log_peak = if c > 0.0 { c * c.ln() - c } else { 0.0 };
    let g = |u: f64| {
        if u == 0.0 {
            if s == 0.5 {
                2.0
            } else {
                0.0
            }
        } else {
            2.0 * ((2.0 * c * u.ln()) - u * u - log_peak).exp()
        }
    };
    let hi = s.max(x).sqrt() + 14.0;
    let pieces = 64;
    let total = integrate_panels(g, 0.0, hi, pieces, 1e-13);
    let upper = integrate_panels(g, x.sqrt(), hi, pieces, 1e-13);
    (upper / total).clamp(0.0, 1.0)
}

/// Regularized incomplete beta I_x(a, b) via t = sin^2(theta):
/// integrand 2 sin^(2a-1) cos^(2b-1), bounded for a, b >= 1/2.
pub fn inc_beta_oracle(a: f64, b: f64, x: f64) -> f64 {
    let pw = |base: f64, e: f64| {
        if base <= 0.0 {
            if e == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            (e * base.ln()).exp()
        }
    };
    let g = |th: f64| {
        let (s, c) = th.sin_cos();
        2.0 * pw(s, 2.0 * a - 1.0) * pw(c, 2.0 * b - 1.0)
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    let th = x.sqrt().asin();
    let pieces = 64;
    let lower = integrate_panels(g, 0.0, th, pieces, 1e-17);
    let upper = integrate_panels(g, th, half_pi, pieces, 1e-17);
    (lower / (lower + upper)).clamp(0.0, 1.0)
}

/// F distribution survival function through the beta oracle.
pub fn f_sf_oracle(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    inc_beta_oracle(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x))
}

/// Standard normal lower tail by quadrature of the density.
pub fn normal_cdf_oracle(z: f64) -> f64 {
    let phi = |u: f64| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if z <= 0.0 {
        integrate_panels(phi, z - 40.0, z, 80, 1e-300_f64.max(1e-18 * phi(z)))
    } else {
        1.0 - integrate_panels(phi, -z - 40.0, -z, 80, 1e-18)
    }
}

/// Inverse standard normal CDF by bisection on the quadrature CDF.
pub fn normal_ppf_oracle(p: f64) -> f64 {
    if p > 0.5 {
        return -normal_ppf_oracle(1.0 - p);
    }
    let (mut lo, mut hi) = (-40.0f64, 0.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf_oracle(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

//! Confluent hypergeometric functions.
//!
//! `M(a, b, z)` is summed directly, optionally through Kummer's
//! transformation `M(a, b, z) = e^z M(b - a, b, -z)`. `U(a, b, z)` for
//! half-integer `b` uses the connection formula
//!
//! ```text
//! U = Gamma(1-b)/Gamma(a-b+1) M(a,b,z) + Gamma(b-1)/Gamma(a) z^(1-b) M(a-b+1,2-b,z)
//! ```
//!
//! whenever the two branches do not cancel. Otherwise `U` is started from
//! its asymptotic series far out and carried inward by Taylor steps of
//! Kummer's equation `z w'' + (b - z) w' - a w = 0`, the direction in which
//! `U` is dominant.

use crate::error::{Error, Result};

use super::gamma::{gamma, gamma_quotient, is_nonpositive_integer, rgamma};
use super::EvalResult;

const MAX_TERMS: usize = 500;
const EPS: f64 = f64::EPSILON;

/// Relative error accepted from the connection formula before falling back
/// to the continuation evaluator.
pub const U_RELATIVE_BUDGET: f64 = 1e-11;

/// Argument above which the Kummer-transformed series is also tried.
pub const KUMMER_TRANSFORM_THRESHOLD: f64 = 10.0;

/// `M(a, b, z)` for any real `z`.
pub fn kummer_m(a: f64, b: f64, z: f64) -> Result<EvalResult> {
    kummer_m_with_threshold(a, b, z, KUMMER_TRANSFORM_THRESHOLD)
}

/// `M(a, b, z)`; for `|z|` above `threshold` the transformed series is
/// evaluated as well and the estimate with the smaller error wins.
pub fn kummer_m_with_threshold(a: f64, b: f64, z: f64, threshold: f64) -> Result<EvalResult> {
    if is_nonpositive_integer(b) {
        return Err(Error::Domain(format!("M(a, b, z) with b = {b}")));
    }
    let direct = m_series(a, b, z);
    if z.abs() <= threshold {
        return direct;
    }
    let transformed = m_series(b - a, b, -z).map(|r| {
        let e = z.exp();
        EvalResult {
            value: e * r.value,
            abs_error_estimate: e * r.abs_error_estimate + EPS * (e * r.value).abs(),
        }
    });
    match (direct, transformed) {
        (Ok(d), Ok(t)) => Ok(if t.relative_error() < d.relative_error() { t } else { d }),
        (Ok(d), Err(_)) => Ok(d),
        (Err(_), Ok(t)) => Ok(t),
        (Err(e), Err(_)) => Err(e),
    }
}

/// `dM/dz = (a/b) M(a+1, b+1, z)`.
pub fn kummer_m_deriv(a: f64, b: f64, z: f64) -> Result<EvalResult> {
    if a == 0.0 {
        return Ok(EvalResult::exact(0.0));
    }
    let m = kummer_m(a + 1.0, b + 1.0, z)?;
    let c = a / b;
    Ok(EvalResult {
        value: c * m.value,
        abs_error_estimate: c.abs() * m.abs_error_estimate,
    })
}

fn m_series(a: f64, b: f64, z: f64) -> Result<EvalResult> {
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut abs_sum = 1.0f64;
    for k in 0..MAX_TERMS {
        let kf = k as f64;
        if a + kf == 0.0 {
            return Ok(EvalResult {
                value: sum,
                abs_error_estimate: 2.0 * EPS * abs_sum,
            });
        }
        let ratio = (a + kf) / (b + kf) * z / (kf + 1.0);
        term *= ratio;
        sum += term;
        abs_sum += term.abs();
        if !sum.is_finite() {
            return Err(Error::NonConvergence(format!("M({a}, {b}, {z}) overflowed")));
        }
        let next = ((a + kf + 1.0) / (b + kf + 1.0) * z / (kf + 2.0)).abs();
        if next < 0.5 && term.abs() <= EPS * 0.01 * sum.abs().max(f64::MIN_POSITIVE) {
            let tail = term.abs() * next / (1.0 - next);
            return Ok(EvalResult {
                value: sum,
                abs_error_estimate: 2.0 * EPS * abs_sum + tail,
            });
        }
    }
    Err(Error::NonConvergence(format!(
        "M({a}, {b}, {z}) needs more than {MAX_TERMS} terms"
    )))
}

fn check_u_args(b: f64, z: f64) -> Result<()> {
    let twice = 2.0 * b;
    if twice.fract() != 0.0 || (twice as i64).rem_euclid(2) != 1 {
        return Err(Error::Domain(format!("U(a, b, z) needs half-integer b, got {b}")));
    }
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!("U(a, b, z) needs z > 0, got {z}")));
    }
    Ok(())
}

/// `U(a, b, z)` through the connection formula only; reports precision
/// loss instead of returning a cancelled result.
pub fn kummer_u_connection(a: f64, b: f64, z: f64) -> Result<EvalResult> {
    check_u_args(b, z)?;
    let c1 = gamma(1.0 - b) * rgamma(a - b + 1.0);
    let c2 = gamma(b - 1.0) * rgamma(a) * z.powf(1.0 - b);
    connection_sum(a, b, z, c1, c2)
}

fn connection_sum(a: f64, b: f64, z: f64, c1: f64, c2: f64) -> Result<EvalResult> {
    let (t1, e1) = if c1 != 0.0 {
        let m = kummer_m(a, b, z)?;
        (c1 * m.value, (c1 * m.abs_error_estimate).abs())
    } else {
        (0.0, 0.0)
    };
    let (t2, e2) = if c2 != 0.0 {
        let m = kummer_m(a - b + 1.0, 2.0 - b, z)?;
        (c2 * m.value, (c2 * m.abs_error_estimate).abs())
    } else {
        (0.0, 0.0)
    };
    let value = t1 + t2;
    let err = e1 + e2 + 4.0 * EPS * (t1.abs() + t2.abs());
    if !value.is_finite() || err > U_RELATIVE_BUDGET * value.abs() {
        return Err(Error::PrecisionLoss(format!(
            "U({a}, {b}, {z}): branches {t1:e} and {t2:e} cancel to {value:e}"
        )));
    }
    Ok(EvalResult {
        value,
        abs_error_estimate: err,
    })
}

/// `U(a, b, z)` for half-integer `b` and `z > 0`.
pub fn kummer_u(a: f64, b: f64, z: f64) -> Result<EvalResult> {
    match kummer_u_connection(a, b, z) {
        Ok(r) => Ok(r),
        Err(Error::PrecisionLoss(msg)) => {
            let p = kummer_u_profile(a, b, &[z]).map_err(|_| Error::PrecisionLoss(msg))?;
            let value = p.values[0] * p.log_scale.exp();
            if !value.is_finite() {
                return Err(Error::PrecisionLoss(format!("U({a}, {b}, {z}) out of range")));
            }
            Ok(EvalResult {
                value,
                abs_error_estimate: p.relative_error * value.abs(),
            })
        }
        Err(e) => Err(e),
    }
}

/// `dU/dz = -a U(a+1, b+1, z)`.
pub fn kummer_u_deriv(a: f64, b: f64, z: f64) -> Result<EvalResult> {
    if a == 0.0 {
        check_u_args(b, z)?;
        return Ok(EvalResult::exact(0.0));
    }
    let u = kummer_u(a + 1.0, b + 1.0, z)?;
    Ok(EvalResult {
        value: -a * u.value,
        abs_error_estimate: a.abs() * u.abs_error_estimate,
    })
}

/// `Gamma(a - b + 1) U(a, b, z)` for `a > b - 1`, finite where `U`
/// itself underflows for large `a`.
pub fn kummer_u_scaled(a: f64, b: f64, z: f64) -> Result<EvalResult> {
    check_u_args(b, z)?;
    if a <= b - 1.0 {
        return Err(Error::Domain(format!("scaled U needs a > b - 1, got a = {a}, b = {b}")));
    }
    let c1 = gamma(1.0 - b);
    let c2 = gamma(b - 1.0) * gamma_quotient(a - b + 1.0, a)? * z.powf(1.0 - b);
    match connection_sum(a, b, z, c1, c2) {
        Ok(r) => Ok(r),
        Err(Error::PrecisionLoss(msg)) => {
            let p = kummer_u_profile(a, b, &[z]).map_err(|_| Error::PrecisionLoss(msg))?;
            let ln = p.log_scale + libm::lgamma_r(a - b + 1.0).0;
            let value = p.values[0] * ln.exp();
            Ok(EvalResult {
                value,
                abs_error_estimate: p.relative_error * value.abs(),
            })
        }
        Err(e) => Err(e),
    }
}

/// Values of `U` and `dU/dz` at a set of points, sharing one scale:
/// `U(z_i) = values[i] * exp(log_scale)`.
#[derive(Debug, Clone)]
pub struct UProfile {
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
    pub log_scale: f64,
    pub relative_error: f64,
}

/// Asymptotic series `z^a U(a,b,z) ~ sum_k (a)_k (a-b+1)_k / k! (-1/z)^k`
/// and its z-derivative, or `None` if the terms stop decreasing first.
fn u_asymptotic(a: f64, b: f64, z: f64) -> Option<(f64, f64)> {
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut dsum = 0.0f64;
    let mut biggest = 1.0f64;
    for k in 0..2000 {
        let kf = k as f64;
        let ratio = -(a + kf) * (a - b + 1.0 + kf) / ((kf + 1.0) * z);
        if ratio == 0.0 {
            return Some((sum, dsum));
        }
        if ratio.abs() >= 1.0 && kf > (a.abs() + (a - b + 1.0).abs()) {
            return None;
        }
        term *= ratio;
        sum += term;
        dsum += -(kf + 1.0) / z * term;
        biggest = biggest.max(term.abs());
        if biggest > 100.0 * sum.abs() {
            return None;
        }
        if term.abs() < 1e-18 * sum.abs() {
            return Some((sum, dsum));
        }
    }
    None
}

/// Stable inward continuation of `U(a, b, .)` to every point of `zs`.
pub fn kummer_u_profile(a: f64, b: f64, zs: &[f64]) -> Result<UProfile> {
    check_u_args(b, 1.0)?;
    if zs.iter().any(|&z| !(z > 0.0) || !z.is_finite()) {
        return Err(Error::Domain("U profile needs positive finite points".into()));
    }
    let z_top = zs.iter().cloned().fold(0.0f64, f64::max);
    let mut z0 = z_top.max(60.0).max(8.0 * (a.abs() + (a - b + 1.0).abs()));
    let (s, ds) = loop {
        if let Some(v) = u_asymptotic(a, b, z0) {
            break v;
        }
        z0 *= 2.0;
        if z0 > 1e7 {
            return Err(Error::NonConvergence(format!(
                "asymptotic series for U({a}, {b}, z) never settles"
            )));
        }
    };
    // w = U exp(-ln_scale); start at z0 where U = z0^-a s
    let mut ln_scale = -a * z0.ln();
    let mut w = s;
    let mut wp = -a / z0 * s + ds;

    let mut order: Vec<usize> = (0..zs.len()).collect();
    order.sort_by(|&i, &j| zs[j].partial_cmp(&zs[i]).unwrap());
    let mut out_mant = vec![0.0; zs.len()];
    let mut out_dmant = vec![0.0; zs.len()];
    let mut out_ln = vec![0.0; zs.len()];
    let mut steps = 0usize;
    for &i in &order {
        let target = zs[i];
        while z0 > target {
            let h = (z0 - target).min(1.0).min(0.5 * z0);
            let (nw, nwp) = taylor_step(a, b, z0, w, wp, h)?;
            z0 = if h == z0 - target { target } else { z0 - h };
            w = nw;
            wp = nwp;
            steps += 1;
            let mag = w.abs().max(wp.abs());
            if mag > 1e100 || (mag < 1e-100 && mag > 0.0) {
                let lm = mag.ln();
                w /= mag;
                wp /= mag;
                ln_scale += lm;
            }
        }
        out_mant[i] = w;
        out_dmant[i] = wp;
        out_ln[i] = ln_scale;
    }
    let log_scale = out_ln
        .iter()
        .zip(&out_mant)
        .map(|(l, m)| l + m.abs().max(f64::MIN_POSITIVE).ln())
        .fold(f64::NEG_INFINITY, f64::max);
    let values = out_mant
        .iter()
        .zip(&out_ln)
        .map(|(m, l)| m * (l - log_scale).exp())
        .collect();
    let derivs = out_dmant
        .iter()
        .zip(&out_ln)
        .map(|(m, l)| m * (l - log_scale).exp())
        .collect();
    Ok(UProfile {
        values,
        derivs,
        log_scale,
        relative_error: 8.0 * EPS * (1.0 + (steps as f64).sqrt()),
    })
}

/// One Taylor step of Kummer's equation from `z0` to `z0 - h`.
fn taylor_step(a: f64, b: f64, z0: f64, w: f64, wp: f64, h: f64) -> Result<(f64, f64)> {
    let t = -h;
    let mut cm = w;
    let mut cm1 = wp;
    let mut val = cm;
    let mut der = 0.0;
    let mut tp = 1.0; // t^m
    let scale = w.abs().max(wp.abs() * h).max(f64::MIN_POSITIVE);
    let mut small = 0;
    for m in 0..400usize {
        let mf = m as f64;
        // add c_{m+1} t^{m+1}
        der += (mf + 1.0) * cm1 * tp;
        tp *= t;
        let add = cm1 * tp;
        val += add;
        let cm2 = (-(mf + 1.0) * (mf + b - z0) * cm1 + (mf + a) * cm) / (z0 * (mf + 2.0) * (mf + 1.0));
        cm = cm1;
        cm1 = cm2;
        if add.abs() < 1e-18 * scale && (cm1 * tp * t).abs() < 1e-18 * scale {
            small += 1;
            if small >= 2 {
                return Ok((val, der));
            }
        } else {
            small = 0;
        }
    }
    Err(Error::NonConvergence(format!(
        "Taylor step for U({a}, {b}, .) at z = {z0}, h = {h}"
    )))
}

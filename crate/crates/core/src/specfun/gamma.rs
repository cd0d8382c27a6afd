use std::f64::consts::PI;

use crate::error::{Error, Result};

/// `sin(pi x)` with exact zeros at the integers.
pub fn sin_pi(x: f64) -> f64 {
    if x.fract() == 0.0 {
        return 0.0;
    }
    let r = x.rem_euclid(2.0);
    let (sign, t) = if r < 1.0 { (1.0, r) } else { (-1.0, r - 1.0) };
    let t = if t > 0.5 { 1.0 - t } else { t };
    sign * (PI * t).sin()
}

pub fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x.fract() == 0.0
}

/// Gamma function; infinite at the poles.
pub fn gamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        return f64::INFINITY;
    }
    libm::tgamma(x)
}

/// `ln|Gamma(x)|` together with the sign of `Gamma(x)`.
///
/// Negative non-integer arguments go through the reflection formula so the
/// sign is that of `pi / (sin(pi x) Gamma(1 - x))`.
pub fn ln_gamma_signed(x: f64) -> (f64, f64) {
    if is_nonpositive_integer(x) {
        return (f64::INFINITY, 1.0);
    }
    if x > 0.0 {
        return (libm::lgamma_r(x).0, 1.0);
    }
    let s = sin_pi(x);
    let ln = PI.ln() - s.abs().ln() - libm::lgamma_r(1.0 - x).0;
    (ln, s.signum())
}

/// Reciprocal gamma function, entire, exactly zero at nonpositive integers.
pub fn rgamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        return 0.0;
    }
    if x.abs() < 170.0 {
        return 1.0 / libm::tgamma(x);
    }
    let (ln, sign) = ln_gamma_signed(x);
    sign * (-ln).exp()
}

/// `Gamma(x) / Gamma(y)` for arguments away from poles of the numerator.
///
/// Returns zero when `y` sits on a pole and the numerator is finite.
pub fn gamma_quotient(x: f64, y: f64) -> Result<f64> {
    let xp = is_nonpositive_integer(x);
    let yp = is_nonpositive_integer(y);
    match (xp, yp) {
        (true, true) => {
            return Err(Error::Domain(format!(
                "Gamma({x})/Gamma({y}) has poles in numerator and denominator"
            )))
        }
        (true, false) => {
            return Err(Error::Pole {
                what: "Gamma quotient".into(),
                lo: x,
                hi: x,
            })
        }
        (false, true) => return Ok(0.0),
        _ => {}
    }
    if x.abs() < 170.0 && y.abs() < 170.0 {
        let v = libm::tgamma(x) * rgamma(y);
        if v.is_finite() && v != 0.0 {
            return Ok(v);
        }
    }
    let (lx, sx) = ln_gamma_signed(x);
    let (ly, sy) = ln_gamma_signed(y);
    Ok(sx * sy * (lx - ly).exp())
}

/// `Gamma(-nu - offset) / Gamma(-nu)` for a positive half-integer `offset`.
///
/// Nonnegative integer `nu` hits a pole of the denominator and yields an
/// exact zero.
pub fn gamma_ratio(nu: f64, offset: f64) -> Result<f64> {
    let twice = 2.0 * offset;
    if offset <= 0.0 || twice.fract() != 0.0 || (twice as i64) % 2 != 1 {
        return Err(Error::Domain(format!(
            "offset {offset} is not a positive half-integer"
        )));
    }
    gamma_quotient(-nu - offset, -nu)
}

/// Double factorial `n!!` with `(-1)!! = 0!! = 1`.
pub fn double_factorial(n: i64) -> f64 {
    let mut acc = 1.0;
    let mut k = n;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

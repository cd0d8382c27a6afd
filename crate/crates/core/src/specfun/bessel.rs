use crate::error::{Error, Result};

use super::gamma::double_factorial;

/// Spherical Bessel and Neumann functions with first derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphBessel {
    pub j: f64,
    pub n: f64,
    pub j_prime: f64,
    pub n_prime: f64,
}

/// `j_l(x)`, `n_l(x)` and derivatives, with `n_0(x) = -cos(x)/x`.
pub fn sph_bessel(l: usize, x: f64) -> Result<SphBessel> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("spherical Bessel argument {x}")));
    }
    let (jl, jl1) = sph_j_pair(l, x);
    let (nl, nl1) = sph_n_pair(l, x);
    let lf = l as f64;
    Ok(SphBessel {
        j: jl,
        n: nl,
        j_prime: lf / x * jl - jl1,
        n_prime: lf / x * nl - nl1,
    })
}

/// `(j_l, j_{l+1})`.
fn sph_j_pair(l: usize, x: f64) -> (f64, f64) {
    if x > (l + 1) as f64 {
        let (s, c) = x.sin_cos();
        let mut prev = s / x;
        let mut cur = s / (x * x) - c / x;
        if l == 0 {
            return (prev, cur);
        }
        for k in 1..=l {
            let next = (2 * k + 1) as f64 / x * cur - prev;
            prev = cur;
            cur = next;
        }
        (prev, cur)
    } else {
        (sph_j_series(l, x), sph_j_series(l + 1, x))
    }
}

/// Power series, used where upward recurrence would be unstable.
fn sph_j_series(l: usize, x: f64) -> f64 {
    let lf = l as f64;
    let mut term = x.powi(l as i32) / double_factorial(2 * l as i64 + 1);
    let mut sum = term;
    let q = -0.5 * x * x;
    for m in 1..200 {
        let mf = m as f64;
        term *= q / (mf * (2.0 * lf + 2.0 * mf + 1.0));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// `(n_l, n_{l+1})` by closed forms up to `l = 2` and upward recurrence.
fn sph_n_pair(l: usize, x: f64) -> (f64, f64) {
    let (s, c) = x.sin_cos();
    let n0 = -c / x;
    let n1 = -c / (x * x) - s / x;
    let n2 = (-3.0 / (x * x * x) + 1.0 / x) * c - 3.0 / (x * x) * s;
    match l {
        0 => (n0, n1),
        1 => (n1, n2),
        _ => {
            let mut prev = n1;
            let mut cur = n2;
            for k in 2..=l {
                let next = (2 * k + 1) as f64 / x * cur - prev;
                prev = cur;
                cur = next;
            }
            (prev, cur)
        }
    }
}

/// Modified spherical Bessel function of the third kind,
/// `k_0(x) = exp(-x)/x`, and its derivative.
pub fn sph_bessel_k(l: usize, x: f64) -> Result<(f64, f64)> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("modified spherical Bessel argument {x}")));
    }
    let e = (-x).exp();
    let mut prev = e / x;
    let mut cur = e * (1.0 / x + 1.0 / (x * x));
    for k in 1..=l {
        let next = prev + (2 * k + 1) as f64 / x * cur;
        prev = cur;
        cur = next;
    }
    let lf = l as f64;
    Ok((prev, lf / x * prev - cur))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms_low_order() {
        let x = std::f64::consts::PI;
        let b = sph_bessel(0, x).unwrap();
        assert!(b.j.abs() < 1e-16);
        assert!((b.n - 1.0 / x).abs() < 1e-15);
        let b1 = sph_bessel(1, 1.0).unwrap();
        let exact = 1f64.sin() - 1f64.cos();
        assert!((b1.j - exact).abs() < 1e-15);
    }

    #[test]
    fn modified_k_matches_closed_form() {
        let x = 1.7;
        let (k2, k2p) = sph_bessel_k(2, x).unwrap();
        let exact = (-x as f64).exp() * (1.0 / x + 3.0 / (x * x) + 3.0 / (x * x * x));
        assert!((k2 - exact).abs() < 1e-15 * exact);
        let h = 1e-5;
        let fd = (sph_bessel_k(2, x + h).unwrap().0 - sph_bessel_k(2, x - h).unwrap().0) / (2.0 * h);
        assert!((k2p - fd).abs() < 1e-8);
    }

    #[test]
    fn rejects_nonpositive_argument() {
        assert!(sph_bessel(0, 0.0).is_err());
        assert!(sph_bessel(2, -1.0).is_err());
    }
}

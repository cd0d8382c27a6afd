//! Real special functions: gamma ratios, spherical Bessel functions and
//! the confluent hypergeometric functions `M` and `U`.

mod bessel;
mod gamma;
mod kummer;

pub use bessel::{sph_bessel, sph_bessel_k, SphBessel};
pub use gamma::{
    double_factorial, gamma, gamma_quotient, gamma_ratio, is_nonpositive_integer, ln_gamma_signed,
    rgamma, sin_pi,
};
pub use kummer::{
    kummer_m, kummer_m_deriv, kummer_m_with_threshold, kummer_u, kummer_u_connection,
    kummer_u_deriv, kummer_u_profile, kummer_u_scaled, UProfile, KUMMER_TRANSFORM_THRESHOLD,
    U_RELATIVE_BUDGET,
};

use serde::{Deserialize, Serialize};

/// A function value with an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub value: f64,
    pub abs_error_estimate: f64,
}

impl EvalResult {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            abs_error_estimate: 0.0,
        }
    }

    pub fn relative_error(&self) -> f64 {
        if self.value == 0.0 {
            if self.abs_error_estimate == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.abs_error_estimate / self.value.abs()
        }
    }
}

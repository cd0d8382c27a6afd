//! Delta-shell pseudopotential in an isotropic harmonic trap.
//!
//! For a fixed parameterizing energy `E0` the shell at `r_s` imposes
//!
//! ```text
//! F continuous,   F'(r_s+) - F'(r_s-) = kappa [c2 F(r_s) + F'(r_s+)],
//! ```
//!
//! with `c1 = -g0/f0`, `c2 = -g0'/g0` (trap solutions at `E0`, evaluated at
//! `r_s`) and shell strength `kappa = c1 beta_l(E0)`. The operator is not
//! Hermitian; its adjoint eigenfunctions obey `P(r_s+) = (1 - kappa) P(r_s-)`
//! with `P'(r_s+) - P'(r_s-) = kappa c2 P(r_s-)`, so `P = F` outside the
//! shell and `P = F/(1 - kappa)` inside. `<P_m|F_n> = delta_mn` after
//! normalization.
//!
//! Eigenvalues follow from the generalized Busch condition
//! `beta~(E, E0) = C_l Gamma(-nu-l-1/2)/Gamma(-nu)` with `E = 2 nu + l + 3/2`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freespace::ScatteringLengthFn;
use crate::quadrature::RadialGrid;
use crate::roots::{bisect, sign_changes};
use crate::specfun::{
    double_factorial, gamma, gamma_quotient, kummer_m, kummer_m_deriv, kummer_u, kummer_u_deriv,
    kummer_u_profile, kummer_u_scaled, ln_gamma_signed, rgamma, sph_bessel,
};

/// `nu` of the oscillator level with energy `e` and angular momentum `l`.
pub fn nu_of_energy(l: usize, e: f64) -> f64 {
    0.5 * (e - l as f64 - 1.5)
}

pub fn energy_of_nu(l: usize, nu: f64) -> f64 {
    2.0 * nu + l as f64 + 1.5
}

/// `C_l = (-1)^l (2/pi) [Gamma(l+3/2)/(2l+1)!!]^2`.
pub fn busch_prefactor(l: usize) -> f64 {
    let s = if l % 2 == 0 { 1.0 } else { -1.0 };
    let r = gamma(l as f64 + 1.5) / double_factorial(2 * l as i64 + 1);
    s * 2.0 / PI * r * r
}

/// Right-hand side of the Busch condition, `C_l Gamma(-nu-l-1/2)/Gamma(-nu)`.
pub fn busch_rhs(l: usize, nu: f64) -> Result<f64> {
    Ok(busch_prefactor(l) * gamma_quotient(-nu - l as f64 - 0.5, -nu)?)
}

/// `r^2 (f g' - f' g)` for the canonical pair, `[(2l+1)!!]^2`.
pub fn wronskian_constant(l: usize) -> f64 {
    double_factorial(2 * l as i64 + 1).powi(2)
}

/// `f, f', g, g'` at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapValues {
    pub f: f64,
    pub fp: f64,
    pub g: f64,
    pub gp: f64,
}

/// Regular and irregular trap solutions at energy `E`:
/// `f = r^l e^(-r^2/2) M(-nu, l+3/2, r^2)` and
/// `g = -[(2l+1)!!]^2/(2l+1) r^-(l+1) e^(-r^2/2) M(-nu-l-1/2, 1/2-l, r^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapSolutionPair {
    pub l: usize,
    pub e: f64,
    pub nu: f64,
}

pub fn trap_solutions(l: usize, e: f64) -> TrapSolutionPair {
    TrapSolutionPair {
        l,
        e,
        nu: nu_of_energy(l, e),
    }
}

impl TrapSolutionPair {
    pub fn f(&self, r: f64) -> Result<(f64, f64)> {
        let l = self.l as i32;
        let b = self.l as f64 + 1.5;
        let z = r * r;
        let m = kummer_m(-self.nu, b, z)?.value;
        let mp = kummer_m_deriv(-self.nu, b, z)?.value;
        let pre = r.powi(l) * (-0.5 * z).exp();
        Ok((pre * m, pre * ((l as f64 / r - r) * m + 2.0 * r * mp)))
    }

    pub fn g(&self, r: f64) -> Result<(f64, f64)> {
        let lf = self.l as f64;
        let a = -self.nu - lf - 0.5;
        let b = 0.5 - lf;
        let z = r * r;
        let m = kummer_m(a, b, z)?.value;
        let mp = kummer_m_deriv(a, b, z)?.value;
        let k = wronskian_constant(self.l) / (2.0 * lf + 1.0);
        let pre = -k * r.powi(-(self.l as i32) - 1) * (-0.5 * z).exp();
        Ok((pre * m, pre * ((-(lf + 1.0) / r - r) * m + 2.0 * r * mp)))
    }

    pub fn at(&self, r: f64) -> Result<TrapValues> {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("trap solutions at r = {r}")));
        }
        let (f, fp) = self.f(r)?;
        let (g, gp) = self.g(r)?;
        Ok(TrapValues { f, fp, g, gp })
    }
}

/// Which pair of solutions defines `c1`, `c2` and the dressed length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    /// Canonical trap solutions.
    Trap,
    /// `f = j_l(kr)`, `g = n_l(kr)`; the coefficient of `g` is then
    /// `-tan(delta_l)`.
    FreeSpace,
}

fn pair_values(env: Environment, l: usize, e: f64, r: f64) -> Result<TrapValues> {
    match env {
        Environment::Trap => trap_solutions(l, e).at(r),
        Environment::FreeSpace => {
            if !(e > 0.0) {
                return Err(Error::Domain(format!("free-space pair needs E > 0, got {e}")));
            }
            let k = (2.0 * e).sqrt();
            let b = sph_bessel(l, k * r)?;
            Ok(TrapValues {
                f: b.j,
                fp: k * b.j_prime,
                g: b.n,
                gp: k * b.n_prime,
            })
        }
    }
}

/// A delta-shell pseudopotential fixed by `(l, r_s, E0, beta_l(E0))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudopotentialSpec {
    pub l: usize,
    pub r_s: f64,
    pub e0: f64,
    pub beta0: f64,
    pub c1: f64,
    pub c2: f64,
    pub environment: Environment,
    /// `f, f', g, g'` at `(E0, r_s)`.
    pub at_e0: [f64; 4],
}

impl PseudopotentialSpec {
    /// Shell strength `kappa = c1 beta0`.
    pub fn kappa(&self) -> f64 {
        self.c1 * self.beta0
    }

    fn e0_values(&self) -> TrapValues {
        let [f, fp, g, gp] = self.at_e0;
        TrapValues { f, fp, g, gp }
    }
}

/// Pseudopotential in the trap with `beta0 = beta_fn(E0)`.
pub fn make_pseudopotential(
    l: usize,
    r_s: f64,
    e0: f64,
    beta_fn: &ScatteringLengthFn,
) -> Result<PseudopotentialSpec> {
    let beta0 = beta_fn.eval(e0)?;
    make_spec(Environment::Trap, l, r_s, e0, beta0)
}

/// Pseudopotential in the trap with an explicit `beta0`.
pub fn make_pseudopotential_with_beta(l: usize, r_s: f64, e0: f64, beta0: f64) -> Result<PseudopotentialSpec> {
    make_spec(Environment::Trap, l, r_s, e0, beta0)
}

/// Free-space pseudopotential; `coefficient0` multiplies `n_l` at `E0`,
/// i.e. `-tan(delta_l(k0))`.
pub fn make_free_pseudopotential(l: usize, r_s: f64, e0: f64, coefficient0: f64) -> Result<PseudopotentialSpec> {
    make_spec(Environment::FreeSpace, l, r_s, e0, coefficient0)
}

fn make_spec(env: Environment, l: usize, r_s: f64, e0: f64, beta0: f64) -> Result<PseudopotentialSpec> {
    if !(r_s > 0.0) || !r_s.is_finite() {
        return Err(Error::Domain(format!("shell radius {r_s}")));
    }
    if !beta0.is_finite() {
        return Err(Error::Domain(format!("beta(E0) = {beta0}")));
    }
    let v = pair_values(env, l, e0, r_s)?;
    if v.f == 0.0 || v.f.abs() < 1e-14 * (v.fp * r_s).abs() {
        return Err(Error::Node {
            what: "regular solution".into(),
            r: r_s,
        });
    }
    if v.g == 0.0 || v.g.abs() < 1e-14 * (v.gp * r_s).abs() {
        return Err(Error::Node {
            what: "irregular solution".into(),
            r: r_s,
        });
    }
    Ok(PseudopotentialSpec {
        l,
        r_s,
        e0,
        beta0,
        c1: -v.g / v.f,
        c2: -v.gp / v.g,
        environment: env,
        at_e0: [v.f, v.fp, v.g, v.gp],
    })
}

/// `(num, den)` of the dressed length; both stay finite through its poles.
pub fn dressed_beta_parts(spec: &PseudopotentialSpec, e: f64) -> Result<(f64, f64)> {
    let v = pair_values(spec.environment, spec.l, e, spec.r_s)?;
    let v0 = spec.e0_values();
    let w = v.f * v.gp - v.fp * v.g;
    let num = spec.beta0 * v.f * (v.f * v0.gp - v.fp * v0.g);
    let den = v0.f * w + spec.beta0 * v.f * (v0.g * v.gp - v.g * v0.gp);
    Ok((num, den))
}

/// Dressed scattering length `beta~_l(E, E0)` seen at energy `E`.
///
/// At a pole the result is a signed infinity; exactly `0/0` is an error.
pub fn dressed_beta(spec: &PseudopotentialSpec, e: f64) -> Result<f64> {
    let (num, den) = dressed_beta_parts(spec, e)?;
    if den == 0.0 {
        if num == 0.0 {
            return Err(Error::Indeterminate(format!("dressed length at E = {e}")));
        }
        return Ok(f64::INFINITY.copysign(num));
    }
    Ok(num / den)
}

/// Bracket `[lo, hi]` around a pole of the dressed length inside
/// `[e_lo, e_hi]`, if its denominator changes sign there.
pub fn dressed_beta_pole(spec: &PseudopotentialSpec, e_lo: f64, e_hi: f64) -> Result<Option<(f64, f64)>> {
    let d = |e: f64| Ok(dressed_beta_parts(spec, e)?.1);
    let (a, b) = (d(e_lo)?, d(e_hi)?);
    if a.signum() == b.signum() {
        return Ok(None);
    }
    let p = bisect(d, e_lo, e_hi, 1e-13 * (1.0 + e_lo.abs().max(e_hi.abs())))?;
    let h = 1e-12 * (1.0 + p.abs());
    Ok(Some((p - h, p + h)))
}

/// Pole-free Busch residual `num Gamma(-nu-l-1/2)^-1 - C_l den Gamma(-nu)^-1`,
/// multiplied by `Gamma(-nu) > 0` for `nu < 0`.
fn busch_residual_parts(l: usize, nu: f64, num: f64, den: f64) -> Result<f64> {
    let c = busch_prefactor(l);
    let s = nu + l as f64 + 0.5;
    if nu >= 0.0 {
        Ok(num * rgamma(-s) - c * den * rgamma(-nu))
    } else {
        let q = gamma_quotient(-nu, -s)?;
        Ok(num * q - c * den)
    }
}

/// Pole-free residual of the generalized Busch condition for `spec`.
pub fn busch_residual(spec: &PseudopotentialSpec, nu: f64) -> Result<f64> {
    let (num, den) = dressed_beta_parts(spec, energy_of_nu(spec.l, nu))?;
    busch_residual_parts(spec.l, nu, num, den)
}

/// Busch roots with brackets that straddled a pole of either side.
#[derive(Debug, Clone, Default)]
pub struct BuschScan {
    pub nu: Vec<f64>,
    pub straddled_poles: Vec<(f64, f64)>,
}

/// Scan a residual in `nu` over `window` and bisect every sign change.
/// `den` is the denominator of the left-hand side; intervals where it flips
/// sign are resampled more finely, since roots crowd around its zeros.
fn scan_residual<R, D>(l: usize, window: (f64, f64), per_unit: usize, residual: R, den: D) -> Result<BuschScan>
where
    R: Fn(f64) -> Result<f64> + Sync,
    D: Fn(f64) -> Result<f64> + Sync,
{
    let (lo, hi) = window;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain(format!("nu window [{lo}, {hi}]")));
    }
    let n = (((hi - lo) * per_unit as f64).ceil() as usize).max(8);
    let coarse: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let dens: Vec<f64> = coarse.iter().map(|&x| den(x).unwrap_or(f64::NAN)).collect();
    let mut xs = Vec::with_capacity(coarse.len());
    for i in 0..coarse.len() {
        xs.push(coarse[i]);
        if i + 1 < coarse.len() && dens[i].signum() != dens[i + 1].signum() {
            let sub = 32;
            for k in 1..sub {
                xs.push(coarse[i] + (coarse[i + 1] - coarse[i]) * k as f64 / sub as f64);
            }
        }
    }
    let vals: Vec<f64> = xs.iter().map(|&x| residual(x).unwrap_or(f64::NAN)).collect();
    let mut out = BuschScan::default();
    let lf = l as f64;
    for i in sign_changes(&vals) {
        let (a, b) = (xs[i], xs[i + 1]);
        let root = bisect(&residual, a, b, 1e-12)?;
        let rhs_pole = ((a + lf + 0.5).ceil() <= b + lf + 0.5) && (a + lf + 0.5).ceil() >= 0.0 - lf - 0.5;
        let lhs_pole = matches!((den(a), den(b)), (Ok(x), Ok(y)) if x.signum() != y.signum());
        if rhs_pole || lhs_pole {
            out.straddled_poles.push((a, b));
        }
        out.nu.push(root);
    }
    Ok(out)
}

/// Default sampling density of the Busch scan, points per unit of `nu`.
pub const BUSCH_SAMPLES_PER_UNIT: usize = 2000;

/// All `nu` in `nu_window` solving the generalized Busch condition.
pub fn busch_eigenvalues(spec: &PseudopotentialSpec, nu_window: (f64, f64)) -> Result<Vec<f64>> {
    Ok(busch_scan(spec, nu_window, BUSCH_SAMPLES_PER_UNIT)?.nu)
}

pub fn busch_scan(spec: &PseudopotentialSpec, nu_window: (f64, f64), per_unit: usize) -> Result<BuschScan> {
    let l = spec.l;
    scan_residual(
        l,
        nu_window,
        per_unit,
        |nu| busch_residual(spec, nu),
        |nu| Ok(dressed_beta_parts(spec, energy_of_nu(l, nu))?.1),
    )
}

/// Roots of the Busch condition with the true `beta_l(E)` in place of the
/// dressed length, i.e. the self-consistent spectrum `E0 = E`.
pub fn busch_self_consistent(beta_fn: &ScatteringLengthFn, nu_window: (f64, f64), per_unit: usize) -> Result<Vec<f64>> {
    let l = beta_fn.l;
    let scan = scan_residual(
        l,
        nu_window,
        per_unit,
        |nu| {
            let (n, d) = beta_fn.eval_parts(energy_of_nu(l, nu))?;
            busch_residual_parts(l, nu, n, d)
        },
        |nu| Ok(beta_fn.eval_parts(energy_of_nu(l, nu))?.1),
    )?;
    Ok(scan.nu)
}

/// One eigenstate of the pseudopotential Hamiltonian with its adjoint.
///
/// `F = b f` inside the shell and `F = a (f + beta_tilde g)` outside;
/// outside it is evaluated through `r^l e^(-r^2/2) U(-nu, l+3/2, r^2)`,
/// which is the same function without the cancellation of the two growing
/// terms. `P = F` outside and `P = F/(1 - kappa)` inside.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrapEigenpair {
    pub l: usize,
    pub nu: f64,
    pub e: f64,
    pub a: f64,
    pub b: f64,
    pub beta_tilde: f64,
    pub kappa: f64,
    pub r_s: f64,
    /// `<P|F>` before normalization.
    pub norm: f64,
    /// Factor turning `a/alpha U` into the outside part of `F`.
    pub outer_scale: f64,
    pub interacting: bool,
}

/// Whether the outside profile carries the factor `Gamma(-nu-l-1/2)`,
/// which keeps deep states from underflowing.
fn outer_scaled(l: usize, nu: f64) -> bool {
    -nu - l as f64 - 0.5 > 0.0
}

/// `r^l e^(-r^2/2) U(-nu, l+3/2, r^2)` and its derivative, times
/// `Gamma(-nu-l-1/2)` when [`outer_scaled`].
fn outer_u(l: usize, nu: f64, r: f64) -> Result<(f64, f64)> {
    let a = -nu;
    let b = l as f64 + 1.5;
    let z = r * r;
    let (u, up) = if outer_scaled(l, nu) {
        (
            kummer_u_scaled(a, b, z)?.value,
            -a * kummer_u_scaled(a + 1.0, b + 1.0, z)?.value,
        )
    } else {
        (kummer_u(a, b, z)?.value, kummer_u_deriv(a, b, z)?.value)
    };
    let pre = r.powi(l as i32) * (-0.5 * z).exp();
    Ok((pre * u, pre * ((l as f64 / r - r) * u + 2.0 * r * up)))
}

/// Relative tolerance of the shell jump check in [`eigenpair`].
pub const JUMP_TOLERANCE: f64 = 1e-8;

/// Build the unnormalized eigenpair for a Busch root `nu` of `spec`.
pub fn eigenpair(spec: &PseudopotentialSpec, nu: f64) -> Result<TrapEigenpair> {
    if spec.environment != Environment::Trap {
        return Err(Error::Domain("eigenpairs exist only in the trap".into()));
    }
    let l = spec.l;
    let kappa = spec.kappa();
    if (1.0 - kappa).abs() < 1e-12 {
        return Err(Error::Domain("shell strength kappa = 1 has no adjoint".into()));
    }
    let e = energy_of_nu(l, nu);
    let v = trap_solutions(l, e).at(spec.r_s)?;
    if v.f == 0.0 {
        return Err(Error::Node {
            what: "regular solution".into(),
            r: spec.r_s,
        });
    }
    let (w, wp) = outer_u(l, nu, spec.r_s)?;
    let inner = w / v.f;
    let lhs = wp - inner * v.fp;
    let rhs = kappa * (spec.c2 * w + wp);
    let scale = wp.abs() + (inner * v.fp).abs() + (kappa * spec.c2 * w).abs() + (kappa * wp).abs();
    if (lhs - rhs).abs() > JUMP_TOLERANCE * scale {
        return Err(Error::Consistency(format!(
            "shell jump violated at nu = {nu}: {lhs:e} vs {rhs:e}"
        )));
    }
    let alpha = if outer_scaled(l, nu) {
        gamma(-(l as f64) - 0.5)
    } else {
        gamma(-(l as f64) - 0.5) * rgamma(-nu - l as f64 - 0.5)
    };
    Ok(TrapEigenpair {
        l,
        nu,
        e,
        a: alpha,
        b: inner,
        beta_tilde: dressed_beta(spec, e)?,
        kappa,
        r_s: spec.r_s,
        norm: 1.0,
        outer_scale: 1.0,
        interacting: true,
    })
}

/// Normalized oscillator eigenfunction `N r^l e^(-r^2/2) L_n^(l+1/2)(r^2)`
/// as a non-interacting eigenpair.
pub fn oscillator_state(l: usize, n: usize) -> TrapEigenpair {
    let nf = n as f64;
    let lf = l as f64;
    // N^2 = 2 n! / Gamma(n + l + 3/2), L = binom(n+l+1/2, n) M(-n, l+3/2, z)
    let norm = (2.0 * gamma(nf + 1.0) * rgamma(nf + lf + 1.5)).sqrt();
    let binom = gamma(nf + lf + 1.5) * rgamma(nf + 1.0) * rgamma(lf + 1.5);
    let c = norm * binom;
    TrapEigenpair {
        l,
        nu: nf,
        e: energy_of_nu(l, nf),
        a: c,
        b: c,
        beta_tilde: 0.0,
        kappa: 0.0,
        r_s: 0.0,
        norm: 1.0,
        outer_scale: 0.0,
        interacting: false,
    }
}

impl TrapEigenpair {
    /// Right eigenfunction `F(r)`.
    pub fn eval_f(&self, r: f64) -> Result<f64> {
        let sol = trap_solutions(self.l, self.e);
        if !self.interacting || r < self.r_s {
            return Ok(self.b * sol.f(r)?.0);
        }
        let (w, _) = outer_u(self.l, self.nu, r)?;
        Ok(self.outer_scale * w)
    }

    /// Adjoint eigenfunction `P(r)`.
    pub fn eval_p(&self, r: f64) -> Result<f64> {
        let f = self.eval_f(r)?;
        if self.interacting && r < self.r_s {
            Ok(f / (1.0 - self.kappa))
        } else {
            Ok(f)
        }
    }

    /// `F` and `P` on every node of `grid`.
    pub fn sample(&self, grid: &RadialGrid) -> Result<(Vec<f64>, Vec<f64>)> {
        let sol = trap_solutions(self.l, self.e);
        let split = if self.interacting {
            grid.nodes.partition_point(|&r| r < self.r_s)
        } else {
            grid.len()
        };
        let mut fv = Vec::with_capacity(grid.len());
        for &r in &grid.nodes[..split] {
            fv.push(self.b * sol.f(r)?.0);
        }
        if split < grid.len() {
            let lf = self.l as f64;
            let zs: Vec<f64> = grid.nodes[split..].iter().map(|r| r * r).collect();
            let prof = kummer_u_profile(-self.nu, lf + 1.5, &zs)?;
            let extra = if outer_scaled(self.l, self.nu) {
                ln_gamma_signed(-self.nu - lf - 0.5).0
            } else {
                0.0
            };
            for (i, &r) in grid.nodes[split..].iter().enumerate() {
                let ln = prof.log_scale + extra - 0.5 * zs[i] + lf * r.ln();
                fv.push(self.outer_scale * prof.values[i] * ln.exp());
            }
        }
        let pv = fv
            .iter()
            .enumerate()
            .map(|(i, &f)| if i < split && self.interacting { f / (1.0 - self.kappa) } else { f })
            .collect();
        Ok((fv, pv))
    }

    fn rescale(&mut self, s: f64) {
        self.a *= s;
        self.b *= s;
        self.outer_scale *= s;
    }
}

/// Options for [`build_basis`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisOptions {
    /// States below this energy are left out.
    pub e_floor: f64,
    /// Busch scan density in points per unit `nu`.
    pub samples_per_unit: usize,
    /// Accepted deviation of `<P_m|F_n>` from `delta_mn`.
    pub overlap_tolerance: f64,
}

impl Default for BasisOptions {
    fn default() -> Self {
        Self {
            e_floor: -20.0,
            samples_per_unit: 200,
            overlap_tolerance: 1e-8,
        }
    }
}

/// Radius beyond which every state below `e_cut` is negligible.
pub fn default_r_max(e_cut: f64) -> f64 {
    (2.0 * e_cut.max(1.0)).sqrt() + 6.0
}

/// Eigenpairs at one `E0` with normalized samples on a shared grid.
#[derive(Debug, Clone)]
pub struct BiorthogonalBasis {
    pub e0: f64,
    pub l_max: usize,
    pub r_s: f64,
    pub e_cut: f64,
    pub states: Vec<TrapEigenpair>,
    pub specs: Vec<PseudopotentialSpec>,
    pub grid: Arc<RadialGrid>,
    pub right: Vec<Vec<f64>>,
    pub left: Vec<Vec<f64>>,
    pub overlap_tolerance: f64,
    /// Largest `|<P_m|F_n> - delta_mn|` over same-`l` pairs.
    pub max_overlap_error: f64,
}

/// Serialized form of a basis; radial functions follow from the parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct BasisRecord {
    pub E0: f64,
    pub l_max: usize,
    pub r_s: f64,
    pub states: Vec<StateRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct StateRecord {
    pub l: usize,
    pub nu: f64,
    pub E: f64,
    pub A: f64,
    pub B: f64,
    pub norm: f64,
}

impl BiorthogonalBasis {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `<P_m|F_n>` (zero across different `l`).
    pub fn overlap_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| {
            if self.states[i].l != self.states[j].l {
                0.0
            } else {
                self.grid.overlap(&self.left[i], &self.right[j])
            }
        })
    }

    /// `<F_m|F_n>` (zero across different `l`).
    pub fn right_overlap_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| {
            if self.states[i].l != self.states[j].l {
                0.0
            } else {
                self.grid.overlap(&self.right[i], &self.right[j])
            }
        })
    }

    /// `sum_n F_n(r) <P_n|phi>` over the states of angular momentum `l`.
    pub fn reconstruct(&self, l: usize, phi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (i, s) in self.states.iter().enumerate() {
            if s.l != l {
                continue;
            }
            let c = self.grid.overlap(&self.left[i], phi);
            for (o, f) in out.iter_mut().zip(&self.right[i]) {
                *o += c * f;
            }
        }
        out
    }

    pub fn record(&self) -> BasisRecord {
        BasisRecord {
            E0: self.e0,
            l_max: self.l_max,
            r_s: self.r_s,
            states: self
                .states
                .iter()
                .map(|s| StateRecord {
                    l: s.l,
                    nu: s.nu,
                    E: s.e,
                    A: s.a,
                    B: s.b,
                    norm: s.norm,
                })
                .collect(),
        }
    }
}

/// Sampled, normalized state: `(pair, F, P)`.
type Sampled = (TrapEigenpair, Vec<f64>, Vec<f64>);

fn normalize(mut pair: TrapEigenpair, grid: &RadialGrid) -> Result<Sampled> {
    let (mut f, mut p) = pair.sample(grid)?;
    let n = grid.overlap(&p, &f);
    if !(n.abs() > 0.0) || !n.is_finite() {
        return Err(Error::Invariant(format!(
            "state at E = {} has <P|F> = {n}",
            pair.e
        )));
    }
    // positive near the origin, like the oscillator states
    let s = pair.b.signum() / n.abs().sqrt();
    let sp = s * n.signum();
    pair.norm = n;
    pair.rescale(s);
    f.iter_mut().for_each(|x| *x *= s);
    p.iter_mut().for_each(|x| *x *= sp);
    Ok((pair, f, p))
}

/// Normalized oscillator states of angular momentum `l` below `e_cut`.
pub fn oscillator_states(l: usize, e_cut: f64, grid: &RadialGrid) -> Result<Vec<Sampled>> {
    let mut out = Vec::new();
    let mut n = 0;
    while energy_of_nu(l, n as f64) <= e_cut {
        let s = oscillator_state(l, n);
        let (f, p) = s.sample(grid)?;
        out.push((s, f, p));
        n += 1;
    }
    Ok(out)
}

/// Interacting eigenpairs of one partial wave at fixed `E0`.
pub fn interacting_states(
    spec: &PseudopotentialSpec,
    e_cut: f64,
    opts: &BasisOptions,
    grid: &RadialGrid,
) -> Result<Vec<Sampled>> {
    let l = spec.l;
    let window = (nu_of_energy(l, opts.e_floor), nu_of_energy(l, e_cut));
    let scan = busch_scan(spec, window, opts.samples_per_unit)?;
    let mut out = Vec::new();
    for nu in scan.nu {
        let pair = eigenpair(spec, nu)?;
        out.push(normalize(pair, grid)?);
    }
    Ok(out)
}

fn assemble(
    e0: f64,
    l_max: usize,
    r_s: f64,
    e_cut: f64,
    specs: Vec<PseudopotentialSpec>,
    grid: Arc<RadialGrid>,
    mut all: Vec<Sampled>,
    tol: f64,
) -> BiorthogonalBasis {
    all.sort_by(|x, y| {
        x.0.e
            .partial_cmp(&y.0.e)
            .unwrap()
            .then(x.0.l.cmp(&y.0.l))
    });
    for w in all.windows(2) {
        if w[0].0.l == w[1].0.l && (w[1].0.e - w[0].0.e).abs() < 1e-9 {
            log::warn!("near-degenerate pair at E = {} (l = {})", w[0].0.e, w[0].0.l);
        }
    }
    let mut states = Vec::with_capacity(all.len());
    let mut right = Vec::with_capacity(all.len());
    let mut left = Vec::with_capacity(all.len());
    for (s, f, p) in all {
        states.push(s);
        right.push(f);
        left.push(p);
    }
    let mut basis = BiorthogonalBasis {
        e0,
        l_max,
        r_s,
        e_cut,
        states,
        specs,
        grid,
        right,
        left,
        overlap_tolerance: tol,
        max_overlap_error: 0.0,
    };
    let ov = basis.overlap_matrix();
    let n = basis.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((ov[(i, j)] - target).abs());
        }
    }
    basis.max_overlap_error = worst;
    if worst > tol {
        log::warn!("basis at E0 = {e0}: biorthonormality error {worst:e}");
    }
    basis
}

/// Biorthogonal basis for all `l <= l_max` below `e_cut`. Partial waves
/// with an entry in `beta_fns` interact through the shell; the rest are
/// plain oscillator states.
pub fn build_basis(
    l_max: usize,
    r_s: f64,
    e0: f64,
    beta_fns: &[ScatteringLengthFn],
    e_cut: f64,
    opts: &BasisOptions,
) -> Result<BiorthogonalBasis> {
    let factory = BasisFactory::new(l_max, r_s, beta_fns.to_vec(), e_cut, *opts)?;
    factory.build(e0)
}

/// Reusable basis builder: grid and non-interacting states are shared
/// between every `E0`.
#[derive(Debug, Clone)]
pub struct BasisFactory {
    pub l_max: usize,
    pub r_s: f64,
    pub e_cut: f64,
    pub beta_fns: Vec<ScatteringLengthFn>,
    pub options: BasisOptions,
    pub grid: Arc<RadialGrid>,
    free: Vec<Sampled>,
}

impl BasisFactory {
    pub fn new(
        l_max: usize,
        r_s: f64,
        beta_fns: Vec<ScatteringLengthFn>,
        e_cut: f64,
        options: BasisOptions,
    ) -> Result<Self> {
        if !(r_s > 0.0) {
            return Err(Error::Domain(format!("shell radius {r_s}")));
        }
        if e_cut < 1.5 {
            return Err(Error::Domain(format!("energy cutoff {e_cut} is below the ground state")));
        }
        for (i, b) in beta_fns.iter().enumerate() {
            if b.l != i {
                return Err(Error::Domain(format!(
                    "scattering-length function {i} is for l = {}",
                    b.l
                )));
            }
        }
        let grid = Arc::new(RadialGrid::new(r_s, default_r_max(e_cut))?);
        let mut free = Vec::new();
        for l in beta_fns.len()..=l_max {
            free.extend(oscillator_states(l, e_cut, &grid)?);
        }
        Ok(Self {
            l_max,
            r_s,
            e_cut,
            beta_fns,
            options,
            grid,
            free,
        })
    }

    /// Pseudopotentials at `e0` for the interacting partial waves.
    pub fn specs(&self, e0: f64) -> Result<Vec<PseudopotentialSpec>> {
        self.beta_fns
            .iter()
            .filter(|b| b.l <= self.l_max)
            .map(|b| make_pseudopotential(b.l, self.r_s, e0, b))
            .collect()
    }

    pub fn build(&self, e0: f64) -> Result<BiorthogonalBasis> {
        let specs = self.specs(e0)?;
        let per_l: Vec<Vec<Sampled>> = specs
            .par_iter()
            .map(|s| interacting_states(s, self.e_cut, &self.options, &self.grid))
            .collect::<Result<_>>()?;
        let mut all: Vec<Sampled> = per_l.into_iter().flatten().collect();
        all.extend(self.free.iter().cloned());
        Ok(assemble(
            e0,
            self.l_max,
            self.r_s,
            self.e_cut,
            specs,
            self.grid.clone(),
            all,
            self.options.overlap_tolerance,
        ))
    }
}

//! Exact reference problems: the square well inside the trap, solved by
//! matching Kummer functions at `R0`, and the derivative delta shell in an
//! infinite box.
//!
//! Inside the well the potential is `r^2/2 - V0`, so the regular trap
//! solution at energy `E + V0` applies there; outside the decaying trap
//! solution at `E` is used.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freespace::SquareWell;
use crate::quadrature::RadialGrid;
use crate::roots::{bisect, sign_changes};
use crate::specfun::{
    kummer_m, kummer_m_deriv, kummer_u, kummer_u_deriv, kummer_u_profile, kummer_u_scaled, ln_gamma_signed,
};
use crate::trapbasis::{default_r_max, energy_of_nu, nu_of_energy};

/// One eigenstate of the square well in the trap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactTrapState {
    pub l: usize,
    #[serde(rename = "E")]
    pub e: f64,
    pub inside_nu: f64,
    pub outside_nu: f64,
    pub match_radius: f64,
    /// L2 norm of the unnormalized solution.
    pub norm: f64,
    /// Amplitude of the inside profile once normalized.
    pub inside_amplitude: f64,
    /// Amplitude of the outside profile once normalized.
    pub outside_amplitude: f64,
}

fn outside_scaled(a: f64, b: f64) -> bool {
    a > b - 1.0
}

/// `r^l e^(-r^2/2) M(-nu, l+3/2, r^2)` and derivative.
fn regular(l: usize, nu: f64, r: f64) -> Result<(f64, f64)> {
    let b = l as f64 + 1.5;
    let z = r * r;
    let m = kummer_m(-nu, b, z)?.value;
    let mp = kummer_m_deriv(-nu, b, z)?.value;
    let pre = r.powi(l as i32) * (-0.5 * z).exp();
    Ok((pre * m, pre * ((l as f64 / r - r) * m + 2.0 * r * mp)))
}

/// `r^l e^(-r^2/2) U(-nu, l+3/2, r^2)` and derivative, times a positive
/// gamma factor when `U` alone would underflow.
fn decaying(l: usize, nu: f64, r: f64) -> Result<(f64, f64)> {
    let a = -nu;
    let b = l as f64 + 1.5;
    let z = r * r;
    let (u, up) = if outside_scaled(a, b) {
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

/// Outside profile; at an oscillator level `U` is proportional to the
/// polynomial `M`, which is used directly.
fn outside(l: usize, nu: f64, r: f64) -> Result<(f64, f64)> {
    if nu >= 0.0 && nu.fract() == 0.0 {
        regular(l, nu, r)
    } else {
        decaying(l, nu, r)
    }
}

/// Matching function `(u_in' u_out - u_in u_out') / (q |u_in|_q |u_out|_q)`
/// with `|u|_q = sqrt(u^2 + (u'/q)^2)` and `q = 1/R0`: the sine of the angle
/// between `(u, u'/q)` inside and outside, continuous in `E` and free of
/// poles. For `l >= 2` it swings through zero within ~1e-8 of each level.
pub fn matching_residual(well: &SquareWell, l: usize, e: f64) -> Result<f64> {
    let r0 = well.radius_r0;
    let (fi, fpi) = regular(l, nu_of_energy(l, e + well.depth_v0), r0)?;
    let (fo, fpo) = decaying(l, nu_of_energy(l, e), r0)?;
    let q = 1.0 / r0;
    let ni = (fi * fi + (fpi / q).powi(2)).sqrt();
    let no = (fo * fo + (fpo / q).powi(2)).sqrt();
    Ok((fpi * fo - fi * fpo) / (q * ni * no))
}

/// Energies where the mismatch is sampled.
fn scan_energies(lo: f64, hi: f64) -> Vec<f64> {
    let mut es = Vec::new();
    let split = (-20.0f64).clamp(lo, hi);
    let coarse = ((split - lo) / 0.5).ceil() as usize;
    for i in 0..coarse {
        es.push(lo + (split - lo) * i as f64 / coarse as f64);
    }
    let fine = ((hi - split) / 0.01).ceil().max(1.0) as usize;
    for i in 0..=fine {
        es.push(split + (hi - split) * i as f64 / fine as f64);
    }
    es
}

/// All eigenstates of angular momentum `l` with energies in `window`,
/// ascending. States are normalized on a grid reaching past the highest.
pub fn exact_trap_spectrum(well: &SquareWell, l: usize, window: (f64, f64)) -> Result<Vec<ExactTrapState>> {
    let (lo, hi) = window;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain(format!("energy window [{lo}, {hi}]")));
    }
    let energies = exact_trap_energies(well, l, window)?;
    let grid = RadialGrid::new(well.radius_r0, default_r_max(hi))?;
    energies.into_iter().map(|e| exact_state(well, l, e, &grid)).collect()
}

/// Eigenenergies only.
pub fn exact_trap_energies(well: &SquareWell, l: usize, window: (f64, f64)) -> Result<Vec<f64>> {
    let (lo, hi) = window;
    let es = scan_energies(lo, hi);
    let vals: Vec<f64> = es
        .iter()
        .map(|&e| matching_residual(well, l, e).unwrap_or(f64::NAN))
        .collect();
    let mut out = Vec::new();
    for i in sign_changes(&vals) {
        let e = bisect(|e| matching_residual(well, l, e), es[i], es[i + 1], 1e-12)?;
        out.push(e);
    }
    Ok(out)
}

/// Offsets of `nu` from an oscillator level below this are snapped to it.
const UNRESOLVED_SHIFT: f64 = 2e-12;

fn exact_state(well: &SquareWell, l: usize, e: f64, grid: &RadialGrid) -> Result<ExactTrapState> {
    let r0 = well.radius_r0;
    let mut e = e;
    let mut nu_out = nu_of_energy(l, e);
    // A shift this small is below what the matching resolves; the residual
    // error would otherwise enter as a large irregular part near R0.
    let n_osc = nu_out.round();
    if n_osc >= 0.0 && (nu_out - n_osc).abs() < UNRESOLVED_SHIFT {
        nu_out = n_osc;
        e = energy_of_nu(l, n_osc);
    }
    let nu_in = nu_of_energy(l, e + well.depth_v0);
    let (fi, _) = regular(l, nu_in, r0)?;
    let (fo, _) = outside(l, nu_out, r0)?;
    let mut s = ExactTrapState {
        l,
        e,
        inside_nu: nu_in,
        outside_nu: nu_out,
        match_radius: r0,
        norm: 1.0,
        inside_amplitude: fo / fi,
        outside_amplitude: 1.0,
    };
    let v = s.sample(grid)?;
    let n = grid.overlap(&v, &v).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Invariant(format!("exact state at E = {e} has norm {n}")));
    }
    s.norm = n;
    s.inside_amplitude /= n;
    s.outside_amplitude /= n;
    Ok(s)
}

impl ExactTrapState {
    pub fn eval(&self, r: f64) -> Result<f64> {
        if r < self.match_radius {
            Ok(self.inside_amplitude * regular(self.l, self.inside_nu, r)?.0)
        } else {
            Ok(self.outside_amplitude * outside(self.l, self.outside_nu, r)?.0)
        }
    }

    pub fn sample(&self, grid: &RadialGrid) -> Result<Vec<f64>> {
        let split = grid.nodes.partition_point(|&r| r < self.match_radius);
        let mut out = Vec::with_capacity(grid.len());
        for &r in &grid.nodes[..split] {
            out.push(self.inside_amplitude * regular(self.l, self.inside_nu, r)?.0);
        }
        if split < grid.len() && self.outside_nu >= 0.0 && self.outside_nu.fract() == 0.0 {
            for &r in &grid.nodes[split..] {
                out.push(self.outside_amplitude * regular(self.l, self.outside_nu, r)?.0);
            }
        } else if split < grid.len() {
            let lf = self.l as f64;
            let a = -self.outside_nu;
            let b = lf + 1.5;
            let zs: Vec<f64> = grid.nodes[split..].iter().map(|r| r * r).collect();
            let prof = kummer_u_profile(a, b, &zs)?;
            let extra = if outside_scaled(a, b) {
                ln_gamma_signed(a - b + 1.0).0
            } else {
                0.0
            };
            for (i, &r) in grid.nodes[split..].iter().enumerate() {
                let ln = prof.log_scale + extra - 0.5 * zs[i] + lf * r.ln();
                out.push(self.outside_amplitude * prof.values[i] * ln.exp());
            }
        }
        Ok(out)
    }
}

/// Orthonormal eigenstates of the exact problem for all `l <= l_max`.
#[derive(Debug, Clone)]
pub struct ExactBasis {
    pub l_max: usize,
    pub e_cut: f64,
    pub states: Vec<ExactTrapState>,
    pub grid: Arc<RadialGrid>,
    pub values: Vec<Vec<f64>>,
}

impl ExactBasis {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Largest `|<m|n> - delta_mn|` over same-`l` pairs.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            for j in 0..self.len() {
                if self.states[i].l != self.states[j].l {
                    continue;
                }
                let t = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.grid.overlap(&self.values[i], &self.values[j]) - t).abs());
            }
        }
        worst
    }
}

/// Exact basis below `e_cut`; states below `e_floor` are left out.
pub fn exact_basis(well: &SquareWell, l_max: usize, e_cut: f64, e_floor: f64) -> Result<ExactBasis> {
    let grid = Arc::new(RadialGrid::new(well.radius_r0, default_r_max(e_cut))?);
    let lo = e_floor.max(-well.depth_v0);
    let per_l: Vec<Result<Vec<(ExactTrapState, Vec<f64>)>>> = {
        use rayon::prelude::*;
        (0..=l_max)
            .into_par_iter()
            .map(|l| {
                exact_trap_energies(well, l, (lo, e_cut))?
                    .into_iter()
                    .map(|e| {
                        let s = exact_state(well, l, e, &grid)?;
                        let v = s.sample(&grid)?;
                        Ok((s, v))
                    })
                    .collect()
            })
            .collect()
    };
    let mut all = Vec::new();
    for p in per_l {
        all.extend(p?);
    }
    all.sort_by(|x, y| x.0.e.partial_cmp(&y.0.e).unwrap().then(x.0.l.cmp(&y.0.l)));
    for w in all.windows(2) {
        if w[0].0.l == w[1].0.l && (w[1].0.e - w[0].0.e).abs() < 1e-9 {
            log::warn!("near-degenerate exact pair at E = {}", w[0].0.e);
        }
    }
    let (states, values) = all.into_iter().unzip();
    Ok(ExactBasis {
        l_max,
        e_cut,
        states,
        grid,
        values,
    })
}

/// One eigenpair of the box `[0, L]` with the shell `u delta(r - r_s) d/dr`.
///
/// `F = a sin(kr)` inside and `b sin(k(L - r))` outside, continuous, with
/// `(1 + u) F'(r_s+) = F'(r_s-)`. The adjoint obeys `P(r_s+) = (1 + u) P(r_s-)`
/// with continuous slope, so `P = F/(1 + u)` inside and `P = F` outside.
/// For `l = 0` this is also the reduced radial problem in a spherical box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxToyState {
    pub u: f64,
    pub r_s: f64,
    #[serde(rename = "L")]
    pub length: f64,
    pub k: f64,
    pub a: f64,
    pub b: f64,
}

impl BoxToyState {
    pub fn energy(&self) -> f64 {
        0.5 * self.k * self.k
    }

    pub fn eval_f(&self, r: f64) -> f64 {
        if r < self.r_s {
            self.a * (self.k * r).sin()
        } else {
            self.b * (self.k * (self.length - r)).sin()
        }
    }

    pub fn eval_p(&self, r: f64) -> f64 {
        if r < self.r_s {
            self.a / (1.0 + self.u) * (self.k * r).sin()
        } else {
            self.eval_f(r)
        }
    }

    /// One-sided values `(F-, F+, F'-, F'+)` at the shell.
    pub fn f_at_shell(&self) -> (f64, f64, f64, f64) {
        let (k, rs, l) = (self.k, self.r_s, self.length);
        (
            self.a * (k * rs).sin(),
            self.b * (k * (l - rs)).sin(),
            self.a * k * (k * rs).cos(),
            -self.b * k * (k * (l - rs)).cos(),
        )
    }

    /// One-sided values `(P-, P+, P'-, P'+)` at the shell.
    pub fn p_at_shell(&self) -> (f64, f64, f64, f64) {
        let (fm, fp, dm, dp) = self.f_at_shell();
        let s = 1.0 / (1.0 + self.u);
        (fm * s, fp, dm * s, dp)
    }
}

/// Eigenvalue condition `sin(kL) + u sin(k r_s) cos(k(L - r_s)) = 0`.
pub fn box_condition(u: f64, r_s: f64, length: f64, k: f64) -> f64 {
    (k * length).sin() + u * (k * r_s).sin() * (k * (length - r_s)).cos()
}

fn sin2_integral(k: f64, x: f64) -> f64 {
    0.5 * x - (2.0 * k * x).sin() / (4.0 * k)
}

/// First `n_states` biorthonormal box eigenpairs.
pub fn box_toy(u: f64, r_s: f64, length: f64, n_states: usize) -> Result<Vec<BoxToyState>> {
    if !(u > -1.0) || !u.is_finite() {
        return Err(Error::Domain(format!("box shell strength u = {u} must exceed -1")));
    }
    if !(r_s > 0.0 && r_s < length) {
        return Err(Error::Domain(format!("shell radius {r_s} outside (0, {length})")));
    }
    let dk = PI / length / 64.0;
    let mut out = Vec::with_capacity(n_states);
    let mut k0 = 1e-9;
    let mut f0 = box_condition(u, r_s, length, k0);
    while out.len() < n_states {
        let k1 = k0 + dk;
        let f1 = box_condition(u, r_s, length, k1);
        if f0 == 0.0 || f0.signum() != f1.signum() {
            let k = if f0 == 0.0 {
                k0
            } else {
                bisect(|k| Ok(box_condition(u, r_s, length, k)), k0, k1, 1e-15 * k1)?
            };
            out.push(box_state(u, r_s, length, k)?);
        }
        k0 = k1;
        f0 = f1;
        if k0 > 1e6 / length {
            return Err(Error::NonConvergence("box eigenvalue scan ran away".into()));
        }
    }
    Ok(out)
}

fn box_state(u: f64, r_s: f64, length: f64, k: f64) -> Result<BoxToyState> {
    let (si, so) = ((k * r_s).sin(), (k * (length - r_s)).sin());
    // continuity fixes a/b, unless the shell sits on a node
    let (a, b) = if si.abs() > 1e-8 {
        (so / si, 1.0)
    } else {
        let (ci, co) = ((k * r_s).cos(), (k * (length - r_s)).cos());
        (-(1.0 + u) * co / ci, 1.0)
    };
    let inside = a * a / (1.0 + u) * sin2_integral(k, r_s);
    let outside = b * b * sin2_integral(k, length - r_s);
    // positive for u > -1
    let t = 1.0 / (inside + outside).sqrt();
    Ok(BoxToyState {
        u,
        r_s,
        length,
        k,
        a: a * t,
        b: b * t,
    })
}

/// Box energies that are exactly the free ones.
pub fn free_box_energies(length: f64, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| {
            let k = i as f64 * PI / length;
            0.5 * k * k
        })
        .collect()
}

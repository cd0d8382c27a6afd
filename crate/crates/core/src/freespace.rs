//! Square-well partial-wave scattering: phase shifts, energy-dependent
//! scattering lengths `beta_l(E) = -tan(delta_l)/k^(2l+1)`, bound states,
//! and a Numerov integration used as an independent check.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::{bisect, sign_changes};
use crate::specfun::{double_factorial, sph_bessel, sph_bessel_k};

/// Attractive spherical well of depth `depth_v0` and radius `radius_r0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareWell {
    pub depth_v0: f64,
    pub radius_r0: f64,
}

impl SquareWell {
    /// A zero depth is accepted as the non-interacting limit.
    pub fn new(depth_v0: f64, radius_r0: f64) -> Result<Self> {
        if !(depth_v0 >= 0.0) || !depth_v0.is_finite() {
            return Err(Error::Domain(format!("well depth {depth_v0}")));
        }
        if !(radius_r0 > 0.0) || !radius_r0.is_finite() {
            return Err(Error::Domain(format!("well radius {radius_r0}")));
        }
        if radius_r0 >= 1.0 {
            log::warn!("well radius {radius_r0} is not small against the oscillator length");
        }
        Ok(Self {
            depth_v0,
            radius_r0,
        })
    }
}

/// Free regular and irregular solutions and their derivatives.
///
/// `f ~ r^l` and `g ~ -(2l+1)!!(2l-1)!!/r^(l+1)` near the origin, so that
/// the exterior wave is proportional to `f + beta g` for every real energy.
#[derive(Debug, Clone, Copy)]
pub struct FreePair {
    pub f: f64,
    pub fp: f64,
    pub g: f64,
    pub gp: f64,
}

const SERIES_LIMIT: f64 = 20.0;

pub fn free_solutions(l: usize, e: f64, r: f64) -> Result<FreePair> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("free solutions at r = {r}")));
    }
    let x = e * r * r;
    if x.abs() <= SERIES_LIMIT {
        return Ok(free_series(l, e, r));
    }
    if e < 0.0 {
        return Err(Error::Domain(format!("free solutions with E r^2 = {x}")));
    }
    let k = (2.0 * e).sqrt();
    let b = sph_bessel(l, k * r)?;
    let df = double_factorial(2 * l as i64 + 1);
    let kl = k.powi(l as i32);
    Ok(FreePair {
        f: df * b.j / kl,
        fp: df * b.j_prime * k / kl,
        g: df * b.n * kl * k,
        gp: df * b.n_prime * kl * k * k,
    })
}

fn free_series(l: usize, e: f64, r: f64) -> FreePair {
    let lf = l as f64;
    let q = -e * r * r;
    let (mut f, mut fp) = (0.0, 0.0);
    let mut t = 1.0;
    for m in 0..200 {
        let mf = m as f64;
        if m > 0 {
            t *= q / (mf * (2.0 * lf + 2.0 * mf + 1.0));
        }
        f += t;
        fp += (lf + 2.0 * mf) * t;
        if m > 2 && t.abs() < 1e-18 * f.abs() {
            break;
        }
    }
    let rl = r.powi(l as i32);
    let pref = -double_factorial(2 * l as i64 + 1) * double_factorial(2 * l as i64 - 1);
    let (mut g, mut gp) = (0.0, 0.0);
    let mut s = 1.0;
    for m in 0..200 {
        let mf = m as f64;
        if m > 0 {
            s *= q / (mf * (2.0 * mf - 1.0 - 2.0 * lf));
        }
        g += s;
        gp += (2.0 * mf - lf - 1.0) * s;
        if m > 2 && s.abs() < 1e-18 * g.abs() {
            break;
        }
    }
    let rg = r.powi(-(l as i32) - 1);
    FreePair {
        f: rl * f,
        fp: rl / r * fp,
        g: pref * rg * g,
        gp: pref * rg / r * gp,
    }
}

/// `(num, den)` with `beta_l(E) = num/den`; both are smooth in `E`
/// across the poles of `beta`.
pub fn beta_parts(well: &SquareWell, l: usize, e: f64) -> Result<(f64, f64)> {
    beta_parts_with_scale(well, l, e).map(|(n, d, _)| (n, d))
}

/// As [`beta_parts`], plus the magnitude of the terms cancelling in `den`.
fn beta_parts_with_scale(well: &SquareWell, l: usize, e: f64) -> Result<(f64, f64, f64)> {
    let r0 = well.radius_r0;
    let inner = free_solutions(l, e + well.depth_v0, r0)?;
    let outer = free_solutions(l, e, r0)?;
    let (j, jp) = (inner.f, inner.fp);
    let norm = (j * j + (r0 * jp).powi(2)).sqrt();
    let a = (outer.fp * j - outer.f * jp) / norm;
    let b = (outer.gp * j - outer.g * jp) / norm;
    let scale = ((outer.gp * j).abs() + (outer.g * jp).abs()) / norm;
    Ok((-a, b, scale))
}

fn pole_bracket<F: Fn(f64) -> Result<f64>>(den: F, e: f64) -> Result<(f64, f64)> {
    let d0 = den(e)?;
    let mut h = 1e-12 * e.abs().max(1.0);
    for _ in 0..80 {
        let (lo, hi) = (e - h, e + h);
        let (dl, dh) = (den(lo)?, den(hi)?);
        if dl.signum() != dh.signum() || dl == 0.0 || dh == 0.0 || d0 == 0.0 {
            return Ok((lo, hi));
        }
        h *= 2.0;
    }
    Ok((e, e))
}

/// `beta_l(E)` for any real energy, the analytic continuation of
/// `-tan(delta_l)/k^(2l+1)` below threshold.
pub fn beta_any_energy(well: &SquareWell, l: usize, e: f64) -> Result<f64> {
    let (num, den, scale) = beta_parts_with_scale(well, l, e)?;
    if den.abs() <= 64.0 * f64::EPSILON * scale {
        let (lo, hi) = pole_bracket(|x| Ok(beta_parts(well, l, x)?.1), e)?;
        return Err(Error::Pole {
            what: format!("beta_{l}"),
            lo,
            hi,
        });
    }
    Ok(num / den)
}

/// `beta_l(E) = -tan(delta_l(k))/k^(2l+1)` for `E > 0`.
pub fn scattering_length(well: &SquareWell, l: usize, e: f64) -> Result<f64> {
    if !(e > 0.0) {
        return Err(Error::Domain(format!("scattering length needs E > 0, got {e}")));
    }
    beta_any_energy(well, l, e)
}

fn tan_delta_angle(well: &SquareWell, l: usize, e: f64) -> Result<f64> {
    let (num, den) = beta_parts(well, l, e)?;
    let k = (2.0 * e).sqrt();
    // tan(delta) = -k^(2l+1) beta = k^(2l+1) (-num)/den
    Ok((-num * k.powi(2 * l as i32 + 1)).atan2(den))
}

/// Phase shift `delta_l`, continuous in `E` with `delta_l(0+) = 0`.
pub fn phase_shift(well: &SquareWell, l: usize, e: f64) -> Result<f64> {
    if !(e > 0.0) {
        return Err(Error::Domain(format!("phase shift needs E > 0, got {e}")));
    }
    let k_target = (2.0 * e).sqrt();
    let k_start = (k_target * 1e-6).min(1e-6);
    let mut k = k_start;
    let mut phi = tan_delta_angle(well, l, 0.5 * k * k)?;
    let offset = PI * (phi / PI).round();
    let mut dk = (k_target - k_start) / 400.0;
    while k < k_target {
        let step = dk.min(k_target - k);
        let kn = if step == k_target - k { k_target } else { k + step };
        let raw = tan_delta_angle(well, l, 0.5 * kn * kn)?;
        let cand = raw + 2.0 * PI * ((phi - raw) / (2.0 * PI)).round();
        let change = (cand - phi).abs();
        if change > 0.25 * PI && step > 1e-12 * k_target {
            dk = 0.5 * step;
            continue;
        }
        phi = cand;
        k = kn;
        if change < PI / 32.0 {
            dk = (1.5 * dk).min(0.05 / well.radius_r0);
        }
    }
    Ok(phi - offset)
}

/// Bound-state energies of the well in `[e_min, e_max]`, `e_max < 0`.
pub fn bound_states(well: &SquareWell, l: usize, e_min: f64, e_max: f64) -> Result<Vec<f64>> {
    if !(e_min < e_max && e_max < 0.0) {
        return Err(Error::Domain(format!(
            "bound-state window [{e_min}, {e_max}] must be below threshold"
        )));
    }
    let lo = e_min.max(-well.depth_v0);
    if lo >= e_max {
        return Ok(Vec::new());
    }
    let mismatch = |e: f64| -> Result<f64> {
        let r0 = well.radius_r0;
        let inner = free_solutions(l, e + well.depth_v0, r0)?;
        let kappa = (-2.0 * e).sqrt();
        let (kv, kp) = sph_bessel_k(l, kappa * r0)?;
        let kp = kappa * kp;
        let ni = (inner.f * inner.f + (r0 * inner.fp).powi(2)).sqrt();
        let no = (kv * kv + (r0 * kp).powi(2)).sqrt();
        Ok((inner.fp * kv - inner.f * kp) / (ni * no))
    };
    let n = 4000usize;
    let es: Vec<f64> = (0..=n)
        .map(|i| lo + (e_max - lo) * i as f64 / n as f64)
        .collect();
    let vals = es.iter().map(|&e| mismatch(e)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for i in sign_changes(&vals) {
        out.push(bisect(&mismatch, es[i], es[i + 1], 1e-12)?);
    }
    Ok(out)
}

fn wrap_half_pi(x: f64) -> f64 {
    x - PI * (x / PI).round()
}

/// Phase shift from Numerov integration of the reduced radial equation,
/// reported on the branch `(-pi/2, pi/2]`.
pub fn ode_oracle_phase_shift(well: &SquareWell, l: usize, e: f64) -> Result<f64> {
    if !(e > 0.0) {
        return Err(Error::Domain(format!("ODE phase shift needs E > 0, got {e}")));
    }
    let mut h = well.radius_r0 / 100.0;
    let mut prev = numerov_phase(well, l, e, h)?;
    for _ in 0..12 {
        h *= 0.5;
        let cur = numerov_phase(well, l, e, h)?;
        if wrap_half_pi(cur - prev).abs() < 1e-8 {
            return Ok(wrap_half_pi(cur));
        }
        prev = cur;
    }
    Err(Error::NonConvergence(format!(
        "Numerov phase shift for l = {l}, E = {e} did not settle"
    )))
}

fn numerov_phase(well: &SquareWell, l: usize, e: f64, h_target: f64) -> Result<f64> {
    let r0 = well.radius_r0;
    let ll = (l * (l + 1)) as f64;
    let q_in = 2.0 * (e + well.depth_v0);
    let k = (2.0 * e).sqrt();
    let r_start = 1e-6;
    let f_in = |r: f64| ll / (r * r) - q_in;
    let f_out = |r: f64| ll / (r * r) - 2.0 * e;

    // inner segment, grid landing on r0
    let n1 = ((r0 - r_start) / h_target).ceil().max(4.0) as usize;
    let h1 = (r0 - r_start) / n1 as f64;
    let start = |r: f64| {
        let x = -0.5 * q_in * r * r;
        let mut t = 1.0;
        let mut s = 1.0;
        for m in 1..20 {
            t *= x / (m as f64 * (2 * l + 2 * m + 1) as f64);
            s += t;
        }
        r.powi(l as i32 + 1) * s
    };
    let (mut u0, mut u1) = (start(r_start), start(r_start + h1));
    let c = h1 * h1 / 12.0;
    for n in 1..n1 {
        let r = r_start + n as f64 * h1;
        let (fm, f0, fp) = (f_in(r - h1), f_in(r), f_in(r + h1));
        let u2 = (2.0 * (1.0 + 5.0 * c * f0) * u1 - (1.0 - c * fm) * u0) / (1.0 - c * fp);
        u0 = u1;
        u1 = u2;
    }
    let (fr, fm) = (f_in(r0), f_in(r0 - h1));
    let du = (u1 - u0) / h1 + h1 / 6.0 * (2.0 * fr * u1 + fm * u0);
    let u = u1;

    // outer segment
    let r_match = (10.0 * r0).max(1.0);
    let n2 = ((r_match - r0) / h_target).ceil().max(8.0) as usize;
    let h2 = (r_match - r0) / n2 as f64;
    let fo = f_out(r0);
    let fo1 = -2.0 * ll / r0.powi(3);
    let fo2 = 6.0 * ll / r0.powi(4);
    let upp = fo * u;
    let uppp = fo1 * u + fo * du;
    let u4 = fo2 * u + 2.0 * fo1 * du + fo * upp;
    let mut v0 = u;
    let mut v1 = u + h2 * du + h2 * h2 / 2.0 * upp + h2.powi(3) / 6.0 * uppp + h2.powi(4) / 24.0 * u4;
    let c2 = h2 * h2 / 12.0;
    let quarter = (0.5 * PI / k).min(0.5 * (r_match - r0));
    let m_back = ((quarter / h2).round() as usize).clamp(1, n2 - 1);
    let mut saved = None;
    if n2 - m_back == 1 {
        saved = Some(v1);
    }
    for n in 1..n2 {
        let r = r0 + n as f64 * h2;
        let (fm, f0, fp) = (f_out(r - h2), f_out(r), f_out(r + h2));
        let v2 = (2.0 * (1.0 + 5.0 * c2 * f0) * v1 - (1.0 - c2 * fm) * v0) / (1.0 - c2 * fp);
        v0 = v1;
        v1 = v2;
        if n + 1 == n2 - m_back {
            saved = Some(v1);
        }
    }
    let u2 = v1;
    let u1 = saved.ok_or_else(|| Error::NonConvergence("Numerov fit point".into()))?;
    let r2 = r_match;
    let r1 = r0 + (n2 - m_back) as f64 * h2;
    let b1 = sph_bessel(l, k * r1)?;
    let b2 = sph_bessel(l, k * r2)?;
    let t = (u1 * r2 * b2.j - u2 * r1 * b1.j) / (u1 * r2 * b2.n - u2 * r1 * b1.n);
    Ok(t.atan())
}

/// Rule used by [`ScatteringLengthFn::eval`] between samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Evaluate the underlying model directly.
    Exact,
    /// Linear interpolation between samples.
    Linear,
}

/// Where the values of a scattering-length function come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaModel {
    SquareWell(SquareWell),
    Constant(f64),
    Samples,
}

/// `beta_l(E)` as samples plus pole exclusion intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringLengthFn {
    pub l: usize,
    pub samples: Vec<(f64, f64)>,
    pub poles: Vec<(f64, f64)>,
    pub interpolation: Interpolation,
    pub model: BetaModel,
}

impl ScatteringLengthFn {
    /// Exact evaluation from the square well, no samples.
    pub fn square_well(well: SquareWell, l: usize) -> Self {
        Self {
            l,
            samples: Vec::new(),
            poles: Vec::new(),
            interpolation: Interpolation::Exact,
            model: BetaModel::SquareWell(well),
        }
    }

    /// Energy-independent `beta`.
    pub fn constant(l: usize, beta: f64) -> Self {
        Self {
            l,
            samples: Vec::new(),
            poles: Vec::new(),
            interpolation: Interpolation::Exact,
            model: BetaModel::Constant(beta),
        }
    }

    /// Sample the square well on `energies`; sign changes of the pole-free
    /// denominator between samples become exclusion intervals.
    pub fn tabulate(well: SquareWell, l: usize, energies: &[f64]) -> Result<Self> {
        if energies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("tabulation energies must increase".into()));
        }
        let parts = energies
            .iter()
            .map(|&e| beta_parts(&well, l, e))
            .collect::<Result<Vec<_>>>()?;
        let mut samples = Vec::new();
        let mut poles = Vec::new();
        for (i, &e) in energies.iter().enumerate() {
            let (n, d) = parts[i];
            if d != 0.0 && (n / d).abs() <= 1e14 {
                samples.push((e, n / d));
            }
            if i + 1 < energies.len() && parts[i].1.signum() != parts[i + 1].1.signum() {
                poles.push((e, energies[i + 1]));
            }
        }
        Ok(Self {
            l,
            samples,
            poles,
            interpolation: Interpolation::Exact,
            model: BetaModel::SquareWell(well),
        })
    }

    /// Linearly interpolated samples.
    pub fn from_samples(l: usize, samples: Vec<(f64, f64)>, poles: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Domain("at least two samples are needed".into()));
        }
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Domain("sample energies must increase".into()));
        }
        if samples.iter().any(|s| !s.1.is_finite()) {
            return Err(Error::Domain("sample values must be finite".into()));
        }
        Ok(Self {
            l,
            samples,
            poles,
            interpolation: Interpolation::Linear,
            model: BetaModel::Samples,
        })
    }

    fn excluded(&self, e: f64) -> Option<(f64, f64)> {
        self.poles.iter().copied().find(|&(lo, hi)| e > lo && e < hi)
    }

    /// `beta(E)`.
    pub fn eval(&self, e: f64) -> Result<f64> {
        match (self.interpolation, self.model) {
            (_, BetaModel::Constant(b)) => Ok(b),
            (Interpolation::Exact, BetaModel::SquareWell(w)) => beta_any_energy(&w, self.l, e),
            _ => {
                if let Some((lo, hi)) = self.excluded(e) {
                    return Err(Error::Pole {
                        what: format!("beta_{}", self.l),
                        lo,
                        hi,
                    });
                }
                let s = &self.samples;
                if s.len() < 2 || e < s[0].0 || e > s[s.len() - 1].0 {
                    return Err(Error::Domain(format!("E = {e} outside the sampled range")));
                }
                let i = s.partition_point(|p| p.0 <= e).clamp(1, s.len() - 1);
                let (e0, b0) = s[i - 1];
                let (e1, b1) = s[i];
                Ok(b0 + (b1 - b0) * (e - e0) / (e1 - e0))
            }
        }
    }

    /// `(num, den)` with `beta = num/den`, finite across poles when the
    /// model allows it.
    pub fn eval_parts(&self, e: f64) -> Result<(f64, f64)> {
        match (self.interpolation, self.model) {
            (_, BetaModel::Constant(b)) => Ok((b, 1.0)),
            (Interpolation::Exact, BetaModel::SquareWell(w)) => beta_parts(&w, self.l, e),
            _ => Ok((self.eval(e)?, 1.0)),
        }
    }

    /// CSV with header `# l=<l> V0=<v> R0=<r>` and rows `E,beta`; pole
    /// intervals follow as `# pole=<lo>,<hi>` comment lines.
    pub fn to_csv(&self) -> String {
        let mut out = match self.model {
            BetaModel::SquareWell(w) => format!("# l={} V0={} R0={}\n", self.l, w.depth_v0, w.radius_r0),
            _ => format!("# l={} V0=nan R0=nan\n", self.l),
        };
        for (lo, hi) in &self.poles {
            out.push_str(&format!("# pole={lo},{hi}\n"));
        }
        out.push_str("E,beta\n");
        for (e, b) in &self.samples {
            out.push_str(&format!("{e},{b}\n"));
        }
        out
    }

    /// Inverse of [`to_csv`](Self::to_csv); the result interpolates linearly
    /// unless the header names a well, in which case it evaluates exactly.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut l = None;
        let mut well = None;
        let mut poles = Vec::new();
        let mut samples = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(p) = rest.strip_prefix("pole=") {
                    let (a, b) = p
                        .split_once(',')
                        .ok_or_else(|| Error::Config(format!("bad pole line {line}")))?;
                    poles.push((parse(a)?, parse(b)?));
                    continue;
                }
                let mut v0 = None;
                let mut r0 = None;
                for tok in rest.split_whitespace() {
                    if let Some((k, v)) = tok.split_once('=') {
                        match k {
                            "l" => l = Some(v.parse::<usize>().map_err(|e| Error::Config(e.to_string()))?),
                            "V0" => v0 = Some(parse(v)?),
                            "R0" => r0 = Some(parse(v)?),
                            _ => {}
                        }
                    }
                }
                if let (Some(v), Some(r)) = (v0, r0) {
                    if v.is_finite() && r.is_finite() {
                        well = Some(SquareWell::new(v, r)?);
                    }
                }
            } else if line.is_empty() || line.starts_with("E,") {
                continue;
            } else {
                let (a, b) = line
                    .split_once(',')
                    .ok_or_else(|| Error::Config(format!("bad row {line}")))?;
                samples.push((parse(a)?, parse(b)?));
            }
        }
        let l = l.ok_or_else(|| Error::Config("missing l in header".into()))?;
        match well {
            Some(w) => Ok(Self {
                l,
                samples,
                poles,
                interpolation: Interpolation::Exact,
                model: BetaModel::SquareWell(w),
            }),
            None => Self::from_samples(l, samples, poles),
        }
    }
}

fn parse(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Config(format!("{s}: {e}")))
}

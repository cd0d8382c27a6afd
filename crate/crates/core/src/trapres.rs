//! Two atoms in traps displaced by `dz` along z.
//!
//! The relative motion sees `H = H0 - dz r cos(theta) + dz^2/2`. The matrix
//! is built in a biorthogonal pseudopotential basis (adjoint functions on
//! the left) or in the exact orthonormal basis, for `m = 0`. The
//! pseudopotential parameter `E0` is fixed self-consistently,
//! `E = E0 + dz^2/2`.

use std::sync::Arc;

use nalgebra::linalg::balancing::balance_parlett_reinsch;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exactref::ExactBasis;
use crate::quadrature::RadialGrid;
use crate::roots::sign_changes;
use crate::trapbasis::{BasisFactory, BiorthogonalBasis};

/// `<l', 0| cos(theta) |l, 0>`.
pub fn angular_coupling(l: usize, l_prime: usize) -> f64 {
    angular_coupling_m(l, l_prime, 0)
}

/// `<l', m| cos(theta) |l, m>`; zero unless `|l - l'| = 1` and `|m| <= min(l, l')`.
pub fn angular_coupling_m(l: usize, l_prime: usize, m: i64) -> f64 {
    let lo = l.min(l_prime);
    if l.abs_diff(l_prime) != 1 || m.unsigned_abs() as usize > lo {
        return 0.0;
    }
    let a = (lo + 1) as f64;
    let lf = lo as f64;
    ((a * a - (m * m) as f64) / ((2.0 * lf + 1.0) * (2.0 * lf + 3.0))).sqrt()
}

/// Basis functions sampled on a common grid, with their energies.
#[derive(Debug, Clone)]
pub struct SampledBasis {
    pub energies: Vec<f64>,
    pub ls: Vec<usize>,
    pub grid: Arc<RadialGrid>,
    pub right: Vec<Vec<f64>>,
    pub left: Vec<Vec<f64>>,
    /// Whether `left == right` (orthonormal basis).
    pub hermitian: bool,
    /// `E0` the basis was built at, if any.
    pub e0: Option<f64>,
    /// Energy cutoff of the basis.
    pub e_cut: f64,
}

impl From<&BiorthogonalBasis> for SampledBasis {
    fn from(b: &BiorthogonalBasis) -> Self {
        Self {
            energies: b.states.iter().map(|s| s.e).collect(),
            ls: b.states.iter().map(|s| s.l).collect(),
            grid: b.grid.clone(),
            right: b.right.clone(),
            left: b.left.clone(),
            hermitian: false,
            e0: Some(b.e0),
            e_cut: b.e_cut,
        }
    }
}

impl From<&ExactBasis> for SampledBasis {
    fn from(b: &ExactBasis) -> Self {
        Self {
            energies: b.states.iter().map(|s| s.e).collect(),
            ls: b.states.iter().map(|s| s.l).collect(),
            grid: b.grid.clone(),
            right: b.values.clone(),
            left: b.values.clone(),
            hermitian: true,
            e0: None,
            e_cut: b.e_cut,
        }
    }
}

/// Radial matrix `R_mn = int P_m r F_n r^2 dr` for `|l_m - l_n| = 1`,
/// computed once per basis.
#[derive(Debug, Clone)]
pub struct BasisData {
    pub basis: SampledBasis,
    pub radial: DMatrix<f64>,
}

impl BasisData {
    pub fn new(basis: SampledBasis) -> Self {
        let n = basis.energies.len();
        let g = &basis.grid;
        let wl: Vec<Vec<f64>> = basis
            .left
            .iter()
            .map(|p| p.iter().zip(&g.weights).zip(&g.nodes).map(|((p, w), r)| p * w * r * r * r).collect())
            .collect();
        let mut radial = DMatrix::zeros(n, n);
        for m in 0..n {
            for k in 0..n {
                if basis.ls[m].abs_diff(basis.ls[k]) == 1 {
                    radial[(m, k)] = wl[m].iter().zip(&basis.right[k]).map(|(a, b)| a * b).sum();
                }
            }
        }
        Self { basis, radial }
    }

    pub fn len(&self) -> usize {
        self.basis.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.energies.is_empty()
    }
}

/// `H(dz)` in one basis.
#[derive(Debug, Clone)]
pub struct SeparationHamiltonian {
    pub delta_z: f64,
    pub matrix: DMatrix<f64>,
    pub ls: Vec<usize>,
}

/// `H_mn = (E_n + dz^2/2) delta_mn - dz <l_m|cos|l_n> R_mn`.
pub fn build_h_matrix(data: &BasisData, delta_z: f64) -> SeparationHamiltonian {
    let mut h = build_h_matrix_unshifted(data, delta_z);
    for i in 0..h.matrix.nrows() {
        h.matrix[(i, i)] += 0.5 * delta_z * delta_z;
    }
    h
}

/// As [`build_h_matrix`] without the constant `dz^2/2`.
pub fn build_h_matrix_unshifted(data: &BasisData, delta_z: f64) -> SeparationHamiltonian {
    let n = data.len();
    let ls = &data.basis.ls;
    let m = DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { data.basis.energies[i] } else { 0.0 };
        diag - delta_z * angular_coupling(ls[j], ls[i]) * data.radial[(i, j)]
    });
    SeparationHamiltonian {
        delta_z,
        matrix: m,
        ls: ls.clone(),
    }
}

/// `H(dz)` over the states `(n, m)` for every `m` in `ms` with `|m| <= l_n`,
/// ordered by `m` first. Blocks of different `m` do not couple.
pub fn build_h_matrix_with_m(data: &BasisData, delta_z: f64, ms: &[i64]) -> (DMatrix<f64>, Vec<(usize, i64)>) {
    let mut index = Vec::new();
    for &m in ms {
        for (n, &l) in data.basis.ls.iter().enumerate() {
            if m.unsigned_abs() as usize <= l {
                index.push((n, m));
            }
        }
    }
    let ls = &data.basis.ls;
    let k = index.len();
    let h = DMatrix::from_fn(k, k, |a, b| {
        let (i, mi) = index[a];
        let (j, mj) = index[b];
        if mi != mj {
            return 0.0;
        }
        let diag = if i == j { data.basis.energies[i] + 0.5 * delta_z * delta_z } else { 0.0 };
        diag - delta_z * angular_coupling_m(ls[j], ls[i], mi) * data.radial[(i, j)]
    });
    (h, index)
}

/// Imaginary parts above this fraction of the spectral radius are errors.
pub const IMAG_ERROR: f64 = 1e-6;
/// Imaginary parts above this fraction are logged.
pub const IMAG_WARNING: f64 = 1e-8;

static SEQUENTIAL_FAER: std::sync::Once = std::sync::Once::new();

/// Real eigenvalues of a dense matrix, ascending, with the largest
/// imaginary part relative to the largest real part.
pub fn real_eigenvalues(h: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    // outer loops already run on rayon; keep each decomposition sequential
    SEQUENTIAL_FAER.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
    let n = h.nrows();
    let mut b = h.clone();
    balance_parlett_reinsch(&mut b);
    let ev = faer::Mat::from_fn(n, n, |i, j| b[(i, j)])
        .eigenvalues()
        .map_err(|e| Error::NonConvergence(format!("eigenvalues of a {n}x{n} matrix: {e:?}")))?;
    let re_max = ev.iter().map(|c| c.re.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let (mut worst_re, mut worst_im) = (0.0, 0.0f64);
    for c in ev.iter() {
        if c.im.abs() > worst_im {
            worst_im = c.im.abs();
            worst_re = c.re;
        }
    }
    let rel = worst_im / re_max;
    if rel > IMAG_ERROR {
        return Err(Error::NonRealSpectrum {
            re: worst_re,
            im: worst_im,
        });
    }
    if rel > IMAG_WARNING {
        log::warn!("eigenvalue {worst_re} has imaginary part {worst_im:e}");
    }
    let mut vals: Vec<f64> = ev.iter().map(|c| c.re).collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((vals, rel))
}

/// Eigenvalues with right and left eigenvectors, `left_i . right_i = 1`.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub right: DMatrix<f64>,
    pub left: DMatrix<f64>,
    pub max_imag: f64,
}

/// Eigenvalues closer than this, relative to the spectral radius, are
/// treated as one cluster when eigenvectors are extracted.
const CLUSTER_TOL: f64 = 1e-9;

/// Orthonormal basis of the `k` dominant directions of `a^-1`, from a
/// fixed deterministic start.
fn inverse_iteration(a: &DMatrix<f64>, k: usize) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let lu = a.clone().lu();
    let mut x = DMatrix::from_fn(n, k, |i, j| ((i * (j + 3)) as f64 * 0.7548776662 + j as f64).sin() + 0.1);
    for _ in 0..3 {
        x = lu.solve(&x)?;
        x = x.qr().q();
    }
    Some(x)
}

/// Eigenvectors for the eigenvalues with sorted indices in `wanted`
/// (all of them if `None`).
pub fn eigen_system(h: &DMatrix<f64>, hermitian: bool, wanted: Option<&[usize]>) -> Result<EigenSystem> {
    let n = h.nrows();
    if hermitian {
        let sym = SymmetricEigen::new(h.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| sym.eigenvalues[a].partial_cmp(&sym.eigenvalues[b]).unwrap());
        let values = order.iter().map(|&i| sym.eigenvalues[i]).collect();
        let right = DMatrix::from_fn(n, n, |r, c| sym.eigenvectors[(r, order[c])]);
        return Ok(EigenSystem {
            values,
            left: right.clone(),
            right,
            max_imag: 0.0,
        });
    }
    let (values, max_imag) = real_eigenvalues(h)?;
    let scale = values.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let mut right = DMatrix::zeros(n, n);
    let mut left = DMatrix::zeros(n, n);
    let all: Vec<usize> = (0..n).collect();
    let wanted = wanted.unwrap_or(&all);
    let mut done = vec![false; n];
    for &w in wanted {
        if done[w] {
            continue;
        }
        let mut lo = w;
        while lo > 0 && values[lo] - values[lo - 1] < CLUSTER_TOL * scale {
            lo -= 1;
        }
        let mut hi = w;
        while hi + 1 < n && values[hi + 1] - values[hi] < CLUSTER_TOL * scale {
            hi += 1;
        }
        let k = hi - lo + 1;
        let mean = values[lo..=hi].iter().sum::<f64>() / k as f64;
        // a slightly offset shift keeps the factorization regular
        let sigma = mean + 1e-10 * scale;
        let shifted = h - DMatrix::identity(n, n) * sigma;
        let x = inverse_iteration(&shifted, k)
            .ok_or_else(|| Error::Invariant(format!("singular shift at eigenvalue {mean}")))?;
        let y = inverse_iteration(&shifted.transpose(), k)
            .ok_or_else(|| Error::Invariant(format!("singular shift at eigenvalue {mean}")))?;
        let m = y.transpose() * &x;
        let minv = m
            .try_inverse()
            .ok_or_else(|| Error::Invariant(format!("defective eigenvalue cluster at {mean}")))?;
        let x = x * minv;
        for c in 0..k {
            right.set_column(lo + c, &x.column(c));
            left.set_column(lo + c, &y.column(c));
            done[lo + c] = true;
        }
    }
    Ok(EigenSystem {
        values,
        right,
        left,
        max_imag,
    })
}

/// One eigenstate as functions on the grid, per partial wave.
#[derive(Debug, Clone)]
pub struct StateFunctions {
    /// `sum_n u_n F_n(r)` for each `l`.
    pub right: Vec<Vec<f64>>,
    /// `sum_n v_n P_n(r)` for each `l`.
    pub left: Vec<Vec<f64>>,
    /// `sum_{n in l} v_n u_n`.
    pub l_weights: Vec<f64>,
    /// Weight in the highest manifold of the basis.
    pub top_weight: f64,
    pub grid: Arc<RadialGrid>,
}

impl StateFunctions {
    fn new(basis: &SampledBasis, u: &[f64], v: &[f64]) -> Self {
        let l_max = basis.ls.iter().copied().max().unwrap_or(0);
        let g = basis.grid.len();
        let mut right = vec![vec![0.0; g]; l_max + 1];
        let mut left = vec![vec![0.0; g]; l_max + 1];
        let mut l_weights = vec![0.0; l_max + 1];
        let mut top_weight = 0.0;
        for (n, &l) in basis.ls.iter().enumerate() {
            for (o, f) in right[l].iter_mut().zip(&basis.right[n]) {
                *o += u[n] * f;
            }
            for (o, p) in left[l].iter_mut().zip(&basis.left[n]) {
                *o += v[n] * p;
            }
            l_weights[l] += u[n] * v[n];
            if basis.energies[n] > basis.e_cut - 2.0 {
                top_weight += (u[n] * v[n]).abs();
            }
        }
        Self {
            right,
            left,
            l_weights,
            top_weight,
            grid: basis.grid.clone(),
        }
    }

    /// `<Phi_self | Psi_other>` on the shared grid.
    pub fn pairing(&self, other: &StateFunctions) -> f64 {
        self.left
            .iter()
            .zip(&other.right)
            .map(|(p, f)| self.grid.overlap(p, f))
            .sum()
    }

    /// Mean angular momentum `sum_l l w_l`.
    pub fn l_character(&self) -> f64 {
        self.l_weights.iter().enumerate().map(|(l, w)| l as f64 * w).sum()
    }

    /// `sqrt(|<a|b><b|a>|)`, symmetric and 1 for identical states.
    pub fn similarity(&self, other: &StateFunctions) -> f64 {
        (self.pairing(other) * other.pairing(self)).abs().sqrt()
    }
}

/// Eigenstate functions of `H(dz)` for the sorted indices in `wanted`.
pub fn states_of(data: &BasisData, delta_z: f64, wanted: &[usize]) -> Result<(Vec<f64>, Vec<StateFunctions>)> {
    let h = build_h_matrix(data, delta_z);
    let es = eigen_system(&h.matrix, data.basis.hermitian, Some(wanted))?;
    let mut out = Vec::with_capacity(wanted.len());
    for &i in wanted {
        let u: Vec<f64> = es.right.column(i).iter().copied().collect();
        let v: Vec<f64> = es.left.column(i).iter().copied().collect();
        let s = StateFunctions::new(&data.basis, &u, &v);
        if s.top_weight > 0.01 {
            log::warn!(
                "state {i} at dz = {delta_z} has weight {:.3} in the highest manifold; raise the cutoff",
                s.top_weight
            );
        }
        out.push(s);
    }
    Ok((es.values, out))
}

/// A fixed point `E = lambda_i(E0) = E0 + dz^2/2`.
#[derive(Debug, Clone)]
pub struct SelfConsistentRoot {
    pub energy: f64,
    pub e0: f64,
    /// Sorted eigenvalue index the root was found on.
    pub index: usize,
    /// Set when the same index has more than one fixed point.
    pub multiple: bool,
    pub residual: f64,
    /// Basis the root was accepted on.
    pub basis: Arc<BasisData>,
}

/// Every this many `E0` grid points are evaluated in the first pass.
const COARSE_STRIDE: usize = 4;
/// Cells whose residuals come within this many coarse steps of zero are
/// refined to the full grid.
const COARSE_MARGIN: f64 = 2.0;

/// Options for self-consistent solves and sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfConsistencyOptions {
    pub e0_min: f64,
    pub e0_max: f64,
    pub e0_step: f64,
    /// Accepted `|lambda_i(E0) - E0 - dz^2/2|`.
    pub residual_tolerance: f64,
    /// Extra eigenvalue indices scanned beyond the requested states.
    pub extra_indices: usize,
}

impl Default for SelfConsistencyOptions {
    fn default() -> Self {
        Self {
            e0_min: -8.0,
            e0_max: 12.0,
            e0_step: 0.1,
            residual_tolerance: 1e-8,
            extra_indices: 4,
        }
    }
}

/// Solver for the self-consistent spectrum, caching one basis per point of
/// an `E0` grid.
pub struct SelfConsistentSolver<'a> {
    pub factory: &'a BasisFactory,
    pub options: SelfConsistencyOptions,
    pub e0_grid: Vec<f64>,
    cache: Vec<Option<Arc<BasisData>>>,
}

impl<'a> SelfConsistentSolver<'a> {
    pub fn new(factory: &'a BasisFactory, options: SelfConsistencyOptions) -> Result<Self> {
        if !(options.e0_step > 0.0) || !(options.e0_max > options.e0_min) {
            return Err(Error::Config("E0 grid must be increasing with a positive step".into()));
        }
        let n = ((options.e0_max - options.e0_min) / options.e0_step).round() as usize;
        let e0_grid: Vec<f64> = (0..=n).map(|i| options.e0_min + i as f64 * options.e0_step).collect();
        let cache = e0_grid
            .par_iter()
            .map(|&e0| match factory.build(e0) {
                Ok(b) => Some(Arc::new(BasisData::new(SampledBasis::from(&b)))),
                Err(e) => {
                    log::debug!("no basis at E0 = {e0}: {e}");
                    None
                }
            })
            .collect();
        Ok(Self {
            factory,
            options,
            e0_grid,
            cache,
        })
    }

    /// Basis data at an arbitrary `E0`.
    pub fn basis_at(&self, e0: f64) -> Result<Arc<BasisData>> {
        let b = self.factory.build(e0)?;
        Ok(Arc::new(BasisData::new(SampledBasis::from(&b))))
    }

    fn residual(&self, data: &BasisData, e0: f64, dz: f64, index: usize) -> Result<f64> {
        let h = build_h_matrix(data, dz);
        let (vals, _) = real_eigenvalues(&h.matrix)?;
        vals.get(index)
            .map(|v| v - e0 - 0.5 * dz * dz)
            .ok_or_else(|| Error::Domain(format!("basis has no eigenvalue {index}")))
    }

    /// Fixed points for the lowest `n_states` eigenvalue indices (plus
    /// extras), sorted by energy.
    pub fn solve(&self, delta_z: f64, n_states: usize) -> Result<Vec<SelfConsistentRoot>> {
        let n_idx = n_states + self.options.extra_indices;
        let shift = 0.5 * delta_z * delta_z;
        let spectrum_at = |k: usize| {
            self.cache[k].as_ref().and_then(|d| {
                let h = build_h_matrix(d, delta_z);
                real_eigenvalues(&h.matrix).ok().map(|v| v.0)
            })
        };
        // Coarse pass first; the fine grid is filled in only on cells where
        // some tracked residual changes sign or comes close to zero.
        let m = self.e0_grid.len();
        let stride = COARSE_STRIDE.min(m.saturating_sub(1)).max(1);
        let mut coarse: Vec<usize> = (0..m).step_by(stride).collect();
        if *coarse.last().unwrap() != m - 1 {
            coarse.push(m - 1);
        }
        let mut spectra: Vec<Option<Vec<f64>>> = vec![None; m];
        for &k in &coarse {
            spectra[k] = spectrum_at(k);
        }
        let near = COARSE_MARGIN * stride as f64 * self.options.e0_step;
        for w in coarse.windows(2) {
            let (ka, kb) = (w[0], w[1]);
            let busy = match (&spectra[ka], &spectra[kb]) {
                (Some(a), Some(b)) => (0..n_idx.min(a.len()).min(b.len())).any(|i| {
                    let ga = a[i] - self.e0_grid[ka] - shift;
                    let gb = b[i] - self.e0_grid[kb] - shift;
                    (ga > 0.0) != (gb > 0.0) || ga.abs() < near || gb.abs() < near
                }),
                _ => true,
            };
            if busy {
                for k in ka + 1..kb {
                    spectra[k] = spectrum_at(k);
                }
            }
        }
        let mut roots = Vec::new();
        for i in 0..n_idx {
            let pts: Vec<(usize, f64)> = spectra
                .iter()
                .enumerate()
                .filter_map(|(k, s)| match s {
                    Some(v) if i < v.len() => Some((k, v[i] - self.e0_grid[k] - shift)),
                    _ => None,
                })
                .collect();
            let g: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let mut found = Vec::new();
            for j in sign_changes(&g) {
                let ((ka, fa), (kb, fb)) = (pts[j], pts[j + 1]);
                if let Some(r) = self.refine(delta_z, i, (ka, kb), fa, fb) {
                    found.push(r);
                }
            }
            found.dedup_by(|x, y| (x.e0 - y.e0).abs() < 1e-9);
            let multiple = found.len() > 1;
            for mut r in found {
                r.multiple = multiple;
                roots.push(r);
            }
        }
        roots.sort_by(|a, b| a.energy.partial_cmp(&b.energy).unwrap());
        Ok(roots)
    }

    /// Illinois iteration on a bracket with fresh bases; `None` when the
    /// sign change is a jump rather than a root.
    fn refine(&self, dz: f64, index: usize, (ka, kb): (usize, usize), mut fa: f64, mut fb: f64) -> Option<SelfConsistentRoot> {
        let (mut a, mut b) = (self.e0_grid[ka], self.e0_grid[kb]);
        let tol = self.options.residual_tolerance;
        let shift = 0.5 * dz * dz;
        let root = |e0: f64, residual: f64, basis: Arc<BasisData>| SelfConsistentRoot {
            energy: e0 + shift,
            e0,
            index,
            multiple: false,
            residual,
            basis,
        };
        for (k, fx) in [(ka, fa), (kb, fb)] {
            if fx.abs() < tol {
                return Some(root(self.e0_grid[k], fx, self.cache[k].clone()?));
            }
        }
        let mut side = 0;
        for _ in 0..80 {
            let c = if (fb - fa).abs() > 0.0 { b - fb * (b - a) / (fb - fa) } else { 0.5 * (a + b) };
            let c = if c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
            let data = match self.basis_at(c) {
                Ok(d) => d,
                Err(e) => {
                    log::debug!("refinement at E0 = {c} failed: {e}");
                    return None;
                }
            };
            let fc = self.residual(&data, c, dz, index).ok()?;
            if fc.abs() < tol {
                return Some(root(c, fc, data));
            }
            if (fc > 0.0) == (fb > 0.0) {
                b = c;
                fb = fc;
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            } else {
                a = c;
                fa = fc;
                if side == 1 {
                    fb *= 0.5;
                }
                side = 1;
            }
            if (b - a).abs() < 1e-13 {
                // bracket collapsed without the residual vanishing: a jump
                return None;
            }
        }
        None
    }
}

/// One state of a swept spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackPoint {
    pub delta_z: f64,
    pub track_id: usize,
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "E0")]
    pub e0: Option<f64>,
    pub l_character: f64,
    pub dominant_overlap: f64,
    #[serde(default)]
    pub multiple: bool,
}

/// Lowest states over a `dz` grid with adiabatic track labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumCurve {
    pub delta_z: Vec<f64>,
    /// Per grid point, states sorted by energy.
    pub points: Vec<Vec<TrackPoint>>,
}

impl SpectrumCurve {
    /// Sorted energies at grid index `j`.
    pub fn energies(&self, j: usize) -> Vec<f64> {
        self.points[j].iter().map(|p| p.energy).collect()
    }

    /// `(dz, E)` along one track.
    pub fn track(&self, id: usize) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .flat_map(|ps| ps.iter().filter(|p| p.track_id == id).map(|p| (p.delta_z, p.energy)))
            .collect()
    }

    pub fn n_tracks(&self) -> usize {
        self.points
            .iter()
            .flat_map(|ps| ps.iter().map(|p| p.track_id + 1))
            .max()
            .unwrap_or(0)
    }

    /// CSV with columns `delta_z,track_id,E,E0,l_character,dominant_overlap`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["delta_z", "track_id", "E", "E0", "l_character", "dominant_overlap"])?;
        for ps in &self.points {
            for p in ps {
                w.write_record([
                    format!("{:?}", p.delta_z),
                    p.track_id.to_string(),
                    format!("{:?}", p.energy),
                    p.e0.map(|e| format!("{e:?}")).unwrap_or_default(),
                    format!("{:?}", p.l_character),
                    format!("{:?}", p.dominant_overlap),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Best overlap below which a continuation is reported as ambiguous.
pub const TRACK_WARNING: f64 = 0.6;

struct Labelled {
    energy: f64,
    e0: Option<f64>,
    multiple: bool,
    state: StateFunctions,
}

/// Assign track ids to `next` by greedy matching against `prev`.
fn continue_tracks(
    prev: &[(usize, StateFunctions)],
    next: &[Labelled],
    next_id: &mut usize,
    dz: f64,
) -> Vec<(usize, f64)> {
    let mut pairs = Vec::new();
    for (a, (_, ps)) in prev.iter().enumerate() {
        for (b, n) in next.iter().enumerate() {
            pairs.push((ps.similarity(&n.state), a, b));
        }
    }
    pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    let mut used_a = vec![false; prev.len()];
    let mut out: Vec<Option<(usize, f64)>> = vec![None; next.len()];
    for (s, a, b) in pairs {
        if used_a[a] || out[b].is_some() {
            continue;
        }
        used_a[a] = true;
        out[b] = Some((prev[a].0, s));
        if s < TRACK_WARNING {
            log::warn!("ambiguous track continuation at dz = {dz} (overlap {s:.3})");
        }
    }
    out.into_iter()
        .map(|o| {
            o.unwrap_or_else(|| {
                let id = *next_id;
                *next_id += 1;
                (id, 0.0)
            })
        })
        .collect()
}

fn label_sweep(delta_z: &[f64], states: Vec<Vec<Labelled>>) -> SpectrumCurve {
    let mut points = Vec::with_capacity(states.len());
    let mut prev: Vec<(usize, StateFunctions)> = Vec::new();
    let mut next_id = 0;
    for (j, list) in states.into_iter().enumerate() {
        let ids = if j == 0 {
            let v: Vec<(usize, f64)> = (0..list.len()).map(|i| (i, 1.0)).collect();
            next_id = list.len();
            v
        } else {
            continue_tracks(&prev, &list, &mut next_id, delta_z[j])
        };
        let mut row = Vec::with_capacity(list.len());
        let mut new_prev = Vec::with_capacity(list.len());
        for (s, (id, ov)) in list.into_iter().zip(ids) {
            row.push(TrackPoint {
                delta_z: delta_z[j],
                track_id: id,
                energy: s.energy,
                e0: s.e0,
                l_character: s.state.l_character(),
                dominant_overlap: ov,
                multiple: s.multiple,
            });
            new_prev.push((id, s.state));
        }
        points.push(row);
        prev = new_prev;
    }
    SpectrumCurve {
        delta_z: delta_z.to_vec(),
        points,
    }
}

fn check_grid(delta_z: &[f64]) -> Result<()> {
    if delta_z.is_empty() || delta_z.windows(2).any(|w| !(w[1] > w[0])) || delta_z[0] < 0.0 {
        return Err(Error::Config("separation grid must be nonnegative and increasing".into()));
    }
    Ok(())
}

/// Lowest `n_states` of the exact-basis Hamiltonian over `delta_z`.
pub fn sweep_exact(data: &BasisData, delta_z: &[f64], n_states: usize) -> Result<SpectrumCurve> {
    check_grid(delta_z)?;
    let wanted: Vec<usize> = (0..n_states.min(data.len())).collect();
    let states: Vec<Vec<Labelled>> = delta_z
        .par_iter()
        .map(|&dz| {
            let (vals, fs) = states_of(data, dz, &wanted)?;
            Ok(fs
                .into_iter()
                .enumerate()
                .map(|(i, s)| Labelled {
                    energy: vals[i],
                    e0: None,
                    multiple: false,
                    state: s,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(label_sweep(delta_z, states))
}

/// Self-consistent lowest `n_states` over `delta_z` in the pseudopotential
/// basis.
pub fn sweep_separation(solver: &SelfConsistentSolver, delta_z: &[f64], n_states: usize) -> Result<SpectrumCurve> {
    check_grid(delta_z)?;
    let states: Vec<Vec<Labelled>> = delta_z
        .par_iter()
        .map(|&dz| {
            let roots = solver.solve(dz, n_states)?;
            let mut out = Vec::new();
            for r in roots.into_iter().take(n_states) {
                let (_, mut fs) = states_of(&r.basis, dz, &[r.index])?;
                out.push(Labelled {
                    energy: r.energy,
                    e0: Some(r.e0),
                    multiple: r.multiple,
                    state: fs.remove(0),
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(label_sweep(delta_z, states))
}

/// Pseudopotential spectrum at fixed `E0` (no self-consistency).
pub fn sweep_fixed_e0(data: &BasisData, delta_z: &[f64], n_states: usize) -> Result<SpectrumCurve> {
    sweep_exact(data, delta_z, n_states)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResonanceKind {
    Crossing,
    Avoided,
}

/// A crossing or avoided crossing between two tracks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub kind: ResonanceKind,
    pub delta_z: f64,
    pub gap: f64,
    pub track_a: usize,
    pub track_b: usize,
    /// Sorted level index of the lower state.
    #[serde(default)]
    pub level: usize,
}

/// Default gap below which local minima count as avoided crossings.
pub const RESONANCE_GAP: f64 = 0.2;

/// Minima of the gap between adjacent sorted levels below `threshold`,
/// located by a parabola through `gap^2`. A minimum across which the
/// track labels swap is a crossing, otherwise an avoided crossing.
pub fn find_resonances(curve: &SpectrumCurve, threshold: f64) -> Vec<ResonanceReport> {
    let nz = curve.delta_z.len();
    let n_levels = curve.points.iter().map(|p| p.len()).min().unwrap_or(0);
    let mut out = Vec::new();
    if nz < 3 || n_levels < 2 {
        return out;
    }
    for i in 0..n_levels - 1 {
        let gap: Vec<f64> = curve.points.iter().map(|p| p[i + 1].energy - p[i].energy).collect();
        for j in 1..nz - 1 {
            let strict = gap[j] < gap[j - 1] - 1e-9 && gap[j] <= gap[j + 1] + 1e-12;
            if !strict || gap[j] >= threshold {
                continue;
            }
            // leave flat stretches of exact degeneracy alone
            if gap[j - 1] < 1e-7 && gap[j + 1] < 1e-7 {
                continue;
            }
            let lo = j.saturating_sub(2);
            let hi = (j + 2).min(nz - 1);
            let xs: Vec<f64> = (lo..=hi).map(|k| curve.delta_z[k]).collect();
            let ys: Vec<f64> = (lo..=hi).map(|k| gap[k] * gap[k]).collect();
            let (loc, g) = match quadratic_vertex(&xs, &ys) {
                Some((x, y)) if x >= curve.delta_z[j - 1] && x <= curve.delta_z[j + 1] => (x, y.max(0.0).sqrt()),
                _ => (curve.delta_z[j], gap[j]),
            };
            let before = (curve.points[j - 1][i].track_id, curve.points[j - 1][i + 1].track_id);
            let after = (curve.points[j + 1][i].track_id, curve.points[j + 1][i + 1].track_id);
            let kind = if before.0 == after.1 && before.1 == after.0 {
                ResonanceKind::Crossing
            } else {
                ResonanceKind::Avoided
            };
            out.push(ResonanceReport {
                kind,
                delta_z: loc,
                gap: if kind == ResonanceKind::Crossing { 0.0 } else { g },
                track_a: before.0,
                track_b: before.1,
                level: i,
            });
        }
    }
    out.sort_by(|a, b| a.delta_z.partial_cmp(&b.delta_z).unwrap().then(a.level.cmp(&b.level)));
    out
}

/// Vertex of the least-squares parabola through `(xs, ys)`.
pub fn quadratic_vertex(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let c = quadratic_fit(xs, ys)?;
    if !(c[2] > 0.0) {
        return None;
    }
    let x = -c[1] / (2.0 * c[2]);
    Some((x, c[0] + c[1] * x + c[2] * x * x))
}

/// Least-squares `[c0, c1, c2]` for `y = c0 + c1 x + c2 x^2`, centred for
/// conditioning.
pub fn quadratic_fit(xs: &[f64], ys: &[f64]) -> Option<[f64; 3]> {
    if xs.len() < 3 {
        return None;
    }
    let xm = xs.iter().sum::<f64>() / xs.len() as f64;
    let a = DMatrix::from_fn(xs.len(), 3, |r, c| (xs[r] - xm).powi(c as i32));
    let b = DVector::from_column_slice(ys);
    let sol = a.svd(true, true).solve(&b, 1e-14).ok()?;
    let (d0, d1, d2) = (sol[0], sol[1], sol[2]);
    Some([d0 - d1 * xm + d2 * xm * xm, d1 - 2.0 * d2 * xm, d2])
}

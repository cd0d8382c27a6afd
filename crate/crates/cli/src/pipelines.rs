use deltashell::exactref::{box_toy, exact_basis};
use deltashell::freespace::{phase_shift, scattering_length, ScatteringLengthFn};
use deltashell::trapbasis::{
    busch_self_consistent, dressed_beta_parts, energy_of_nu, make_pseudopotential_with_beta, nu_of_energy,
    BasisFactory, BasisOptions, BUSCH_SAMPLES_PER_UNIT,
};
use deltashell::trapres::{
    find_resonances, sweep_exact, sweep_separation, BasisData, SampledBasis, SelfConsistencyOptions,
    SelfConsistentSolver, SpectrumCurve, TrackPoint, IMAG_ERROR, RESONANCE_GAP,
};
use deltashell::Result;
use serde::Serialize;

use crate::config::{Command, Format, RunConfig};
use crate::output::DataFile;

/// States below this energy stay out of the spectrum bases.
const E_FLOOR: f64 = -20.0;

/// Partial waves that carry the interaction in spectra.
const INTERACTING_WAVES: usize = 2;

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub basis: BasisOptions,
    pub self_consistency: SelfConsistencyOptions,
    pub busch_samples_per_unit: usize,
    pub imaginary_part_limit: f64,
    pub resonance_gap: f64,
    pub energy_floor: f64,
    pub interacting_waves: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            basis: BasisOptions {
                e_floor: E_FLOOR,
                ..BasisOptions::default()
            },
            self_consistency: SelfConsistencyOptions::default(),
            busch_samples_per_unit: BUSCH_SAMPLES_PER_UNIT,
            imaginary_part_limit: IMAG_ERROR,
            resonance_gap: RESONANCE_GAP,
            energy_floor: E_FLOOR,
            interacting_waves: INTERACTING_WAVES,
        }
    }
}

pub fn run(cfg: &RunConfig, tol: &Tolerances) -> Result<Vec<DataFile>> {
    match cfg.command {
        Command::PhaseShifts => phase_shifts(cfg),
        Command::Busch => busch(cfg, tol),
        Command::DressedBeta => dressed_beta(cfg),
        Command::BoxToy => box_states(cfg),
        Command::Spectrum => {
            let (pseudo, exact) = spectra(cfg, tol)?;
            let mut out = Vec::new();
            for (name, curve) in [("pseudo", pseudo), ("exact", exact)] {
                if let Some(c) = curve {
                    out.push(spectrum_file(&format!("spectrum_{name}"), cfg.format, &c)?);
                }
            }
            Ok(out)
        }
        Command::Resonances => {
            let (pseudo, exact) = spectra(cfg, tol)?;
            let mut out = Vec::new();
            for (name, curve) in [("pseudo", pseudo), ("exact", exact)] {
                if let Some(c) = curve {
                    let found = find_resonances(&c, tol.resonance_gap);
                    out.push(DataFile::json(format!("resonances_{name}.json"), &found)?);
                }
            }
            Ok(out)
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Serialize)]
struct PhaseShiftRow {
    l: usize,
    #[serde(rename = "E")]
    e: f64,
    k: f64,
    delta: f64,
    beta: Option<f64>,
}

// (e_min, e_max] so that the default starts above threshold
fn phase_shifts(cfg: &RunConfig) -> Result<Vec<DataFile>> {
    let (lo, hi) = cfg.energy_range;
    let n = cfg.points;
    let mut rows = Vec::new();
    for &l in &cfg.l {
        for i in 1..=n {
            let e = lo + (hi - lo) * i as f64 / n as f64;
            rows.push(PhaseShiftRow {
                l,
                e,
                k: (2.0 * e).sqrt(),
                delta: phase_shift(&cfg.well, l, e)?,
                beta: scattering_length(&cfg.well, l, e).ok(),
            });
        }
    }
    Ok(vec![DataFile::table("phase_shifts", cfg.format, &rows)?])
}

#[derive(Serialize)]
struct BuschRow {
    l: usize,
    n: usize,
    nu: f64,
    #[serde(rename = "E")]
    e: f64,
}

fn busch(cfg: &RunConfig, tol: &Tolerances) -> Result<Vec<DataFile>> {
    let (lo, hi) = cfg.energy_range;
    let mut rows = Vec::new();
    for &l in &cfg.l {
        let beta = match cfg.beta.first() {
            Some(&b) => ScatteringLengthFn::constant(l, b),
            None => ScatteringLengthFn::square_well(cfg.well, l),
        };
        let window = (nu_of_energy(l, lo), nu_of_energy(l, hi));
        let nus = busch_self_consistent(&beta, window, tol.busch_samples_per_unit)?;
        for (n, nu) in nus.into_iter().enumerate() {
            rows.push(BuschRow {
                l,
                n,
                nu,
                e: energy_of_nu(l, nu),
            });
        }
    }
    Ok(vec![DataFile::table("busch", cfg.format, &rows)?])
}

#[derive(Serialize)]
struct DressedRow {
    l: usize,
    beta0: f64,
    #[serde(rename = "E")]
    e: f64,
    beta_tilde: f64,
}

fn dressed_beta(cfg: &RunConfig) -> Result<Vec<DataFile>> {
    let (lo, hi) = cfg.energy_range;
    let mut rows = Vec::new();
    for &l in &cfg.l {
        for &beta0 in &cfg.beta {
            let spec = make_pseudopotential_with_beta(l, cfg.r_s, cfg.e0, beta0)?;
            for e in linspace(lo, hi, cfg.points) {
                let (num, den) = dressed_beta_parts(&spec, e)?;
                rows.push(DressedRow {
                    l,
                    beta0,
                    e,
                    beta_tilde: num / den,
                });
            }
        }
    }
    Ok(vec![DataFile::table("dressed_beta", cfg.format, &rows)?])
}

#[derive(Serialize)]
struct BoxRow {
    state: usize,
    #[serde(rename = "E")]
    e: f64,
    r: f64,
    #[serde(rename = "F")]
    f: f64,
    #[serde(rename = "P")]
    p: f64,
}

fn box_states(cfg: &RunConfig) -> Result<Vec<DataFile>> {
    let states = box_toy(cfg.u, cfg.r_s, cfg.length, cfg.states)?;
    let mut rows = Vec::new();
    for (i, s) in states.iter().enumerate() {
        for r in linspace(0.0, cfg.length, cfg.points) {
            rows.push(BoxRow {
                state: i + 1,
                e: s.energy(),
                r,
                f: s.eval_f(r),
                p: s.eval_p(r),
            });
        }
    }
    Ok(vec![DataFile::table("box_toy", cfg.format, &rows)?])
}

type Spectra = (Option<SpectrumCurve>, Option<SpectrumCurve>);

fn spectra(cfg: &RunConfig, tol: &Tolerances) -> Result<Spectra> {
    let grid = cfg.delta_z_grid();
    let pseudo = if cfg.solver.pseudo() {
        let waves = INTERACTING_WAVES.min(cfg.l_max + 1);
        let fns = (0..waves).map(|l| ScatteringLengthFn::square_well(cfg.well, l)).collect();
        let factory = BasisFactory::new(cfg.l_max, cfg.r_s, fns, cfg.e_cut, tol.basis)?;
        let solver = SelfConsistentSolver::new(&factory, tol.self_consistency)?;
        log::info!("pseudopotential sweep over {} separations", grid.len());
        Some(sweep_separation(&solver, &grid, cfg.states)?)
    } else {
        None
    };
    let exact = if cfg.solver.exact() {
        let basis = exact_basis(&cfg.well, cfg.l_max, cfg.e_cut, tol.energy_floor)?;
        let data = BasisData::new(SampledBasis::from(&basis));
        log::info!("exact sweep over {} separations", grid.len());
        Some(sweep_exact(&data, &grid, cfg.states)?)
    } else {
        None
    };
    Ok((pseudo, exact))
}

fn spectrum_file(stem: &str, format: Format, curve: &SpectrumCurve) -> Result<DataFile> {
    match format {
        Format::Csv => Ok(DataFile::csv(format!("{stem}.csv"), &curve.to_csv()?)),
        Format::Json => {
            let rows: Vec<&TrackPoint> = curve.points.iter().flatten().collect();
            DataFile::table(stem, format, &rows)
        }
    }
}

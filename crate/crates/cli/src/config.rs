use std::path::{Path, PathBuf};

use clap::ValueEnum;
use deltashell::freespace::SquareWell;
use deltashell::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    PhaseShifts,
    Busch,
    DressedBeta,
    Spectrum,
    BoxToy,
    Resonances,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Which spectra `spectrum` and `resonances` compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Pseudo,
    Exact,
    Both,
}

impl Solver {
    pub fn pseudo(self) -> bool {
        self != Solver::Exact
    }

    pub fn exact(self) -> bool {
        self != Solver::Pseudo
    }
}

/// Settings that may come from flags or from the config file.
#[derive(Debug, Clone, Default, clap::Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Square-well depth.
    #[arg(long = "V0", allow_hyphen_values = true)]
    #[serde(rename = "V0")]
    pub v0: Option<f64>,
    /// Square-well radius.
    #[arg(long = "R0")]
    #[serde(rename = "R0")]
    pub r0: Option<f64>,
    /// Shell radius of the pseudopotential.
    #[arg(long)]
    pub rs: Option<f64>,
    /// Highest partial wave in the basis.
    #[arg(long)]
    pub lmax: Option<usize>,
    /// Basis energy cutoff.
    #[arg(long)]
    pub ecut: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub dz_min: Option<f64>,
    #[arg(long)]
    pub dz_max: Option<f64>,
    #[arg(long)]
    pub dz_step: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Number of tracks in a spectrum.
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long, value_enum)]
    pub solver: Option<Solver>,
    /// Partial waves, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub l: Option<Vec<usize>>,
    #[arg(long, allow_hyphen_values = true)]
    pub e_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub e_max: Option<f64>,
    /// Points on the energy or radial grid.
    #[arg(long)]
    pub points: Option<usize>,
    /// Reference energy of the dressed length.
    #[arg(long = "E0", allow_hyphen_values = true)]
    #[serde(rename = "E0")]
    pub e0: Option<f64>,
    /// Bare scattering lengths, comma separated. For `busch` a single
    /// constant value replaces the square well.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Option<Vec<f64>>,
    /// Shell strength of the box toy.
    #[arg(long, allow_hyphen_values = true)]
    pub u: Option<f64>,
    /// Box length of the box toy.
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub length: Option<f64>,
}

impl Overrides {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set here win over `base`.
    pub fn over(self, base: Overrides) -> Overrides {
        Overrides {
            v0: self.v0.or(base.v0),
            r0: self.r0.or(base.r0),
            rs: self.rs.or(base.rs),
            lmax: self.lmax.or(base.lmax),
            ecut: self.ecut.or(base.ecut),
            dz_min: self.dz_min.or(base.dz_min),
            dz_max: self.dz_max.or(base.dz_max),
            dz_step: self.dz_step.or(base.dz_step),
            out: self.out.or(base.out),
            format: self.format.or(base.format),
            states: self.states.or(base.states),
            solver: self.solver.or(base.solver),
            l: self.l.or(base.l),
            e_min: self.e_min.or(base.e_min),
            e_max: self.e_max.or(base.e_max),
            points: self.points.or(base.points),
            e0: self.e0.or(base.e0),
            beta: self.beta.or(base.beta),
            u: self.u.or(base.u),
            length: self.length.or(base.length),
        }
    }
}

/// Fully resolved run settings, as recorded in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub well: SquareWell,
    pub r_s: f64,
    pub l_max: usize,
    #[serde(rename = "E_cut")]
    pub e_cut: f64,
    pub delta_z_range: (f64, f64, f64),
    pub output_path: PathBuf,
    pub format: Format,
    pub states: usize,
    pub solver: Solver,
    pub l: Vec<usize>,
    pub energy_range: (f64, f64),
    pub points: usize,
    #[serde(rename = "E0")]
    pub e0: f64,
    pub beta: Vec<f64>,
    pub u: f64,
    #[serde(rename = "L")]
    pub length: f64,
}

fn positive(name: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Config(format!("{name} must be positive, got {x}")))
    }
}

impl RunConfig {
    pub fn resolve(command: Command, o: Overrides) -> Result<Self> {
        let well = SquareWell::new(positive("V0", o.v0.unwrap_or(489.9))?, positive("R0", o.r0.unwrap_or(0.1))?)
            .map_err(|e| Error::Config(e.to_string()))?;
        let (default_l, default_range, default_points) = match command {
            Command::PhaseShifts => (vec![0, 1], (0.0, 14.0), 200),
            Command::Busch => (vec![0, 1], (-20.0, 20.0), 0),
            Command::DressedBeta => (vec![1], (-2.0, 8.0), 1001),
            Command::BoxToy => (vec![0], (0.0, 0.0), 201),
            Command::Spectrum | Command::Resonances => (vec![0, 1], (0.0, 0.0), 0),
        };
        let cfg = RunConfig {
            command,
            well,
            r_s: positive("rs", o.rs.unwrap_or(if command == Command::BoxToy { 0.1 } else { 0.05 }))?,
            l_max: o.lmax.unwrap_or(12),
            e_cut: positive("ecut", o.ecut.unwrap_or(24.0))?,
            delta_z_range: (
                o.dz_min.unwrap_or(0.0),
                o.dz_max.unwrap_or(3.0),
                positive("dz-step", o.dz_step.unwrap_or(0.05))?,
            ),
            output_path: o.out.unwrap_or_else(|| PathBuf::from("out")),
            format: o.format.unwrap_or(Format::Csv),
            states: o.states.unwrap_or(8),
            solver: o.solver.unwrap_or(Solver::Both),
            l: o.l.unwrap_or(default_l),
            energy_range: (o.e_min.unwrap_or(default_range.0), o.e_max.unwrap_or(default_range.1)),
            points: o.points.unwrap_or(default_points),
            e0: o.e0.unwrap_or(1.0),
            beta: o.beta.unwrap_or_else(|| {
                if command == Command::DressedBeta {
                    vec![-5.0, 1.0, 10.0]
                } else {
                    Vec::new()
                }
            }),
            u: o.u.unwrap_or(1.0),
            length: positive("L", o.length.unwrap_or(1.0))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let (lo, hi, _) = self.delta_z_range;
        if !(lo >= 0.0 && hi >= lo) {
            return bad(format!("separation range [{lo}, {hi}] must be non-negative and increasing"));
        }
        if self.states == 0 {
            return bad("states must be positive".into());
        }
        if self.l.is_empty() {
            return bad("at least one partial wave is needed".into());
        }
        let (e_lo, e_hi) = self.energy_range;
        match self.command {
            Command::PhaseShifts | Command::DressedBeta | Command::Busch if !(e_hi > e_lo) => {
                return bad(format!("energy range [{e_lo}, {e_hi}] is empty"));
            }
            Command::PhaseShifts if e_lo < 0.0 => {
                return bad("phase shifts need E > 0".into());
            }
            Command::PhaseShifts | Command::DressedBeta | Command::BoxToy if self.points < 2 => {
                return bad("points must be at least 2".into());
            }
            Command::DressedBeta if self.beta.is_empty() => {
                return bad("dressed-beta needs at least one bare length".into());
            }
            Command::Busch if self.beta.len() > 1 => {
                return bad("busch takes at most one constant bare length".into());
            }
            Command::BoxToy if !(self.r_s < self.length) => {
                return bad(format!("shell radius {} lies outside the box", self.r_s));
            }
            Command::BoxToy if !(self.u > -1.0) => {
                return bad(format!("box shell strength {} must exceed -1", self.u));
            }
            Command::Spectrum | Command::Resonances if self.l_max < 1 => {
                return bad("spectra need lmax >= 1".into());
            }
            _ => {}
        }
        Ok(())
    }

    /// Separation grid, inclusive of both ends.
    pub fn delta_z_grid(&self) -> Vec<f64> {
        let (lo, hi, step) = self.delta_z_range;
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        let mut g: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
        if hi - g[n] > 1e-9 * step.max(1.0) {
            g.push(hi);
        }
        g
    }
}

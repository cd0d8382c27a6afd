//! Delta-shell pseudopotentials for higher partial waves in harmonic traps.
//!
//! Units: `hbar = mu = omega = 1`; lengths in oscillator lengths, energies
//! in oscillator quanta.

pub mod error;
pub mod exactref;
pub mod freespace;
pub mod quadrature;
pub mod roots;
pub mod specfun;
pub mod trapbasis;
pub mod trapres;

pub use error::{Error, Result};

/// Caps the rayon pool used by the sweeps; fails once the pool exists.
pub fn configure_threads(threads: Option<usize>) -> Result<()> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("thread count must be positive".into()));
        }
        b = b.num_threads(n);
    }
    b.build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Library version recorded in output manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

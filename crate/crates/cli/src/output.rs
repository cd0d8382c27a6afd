use std::fs;
use std::path::Path;

use deltashell::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Format, RunConfig};

pub const MANIFEST: &str = "manifest.json";

/// One data file produced by a pipeline.
pub struct DataFile {
    pub name: String,
    pub contents: String,
}

impl DataFile {
    /// Rows as CSV (with a leading manifest comment) or as a JSON object.
    pub fn table<T: Serialize>(stem: &str, format: Format, rows: &[T]) -> Result<Self> {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                for r in rows {
                    w.serialize(r)?;
                }
                let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
                let body = String::from_utf8(bytes).expect("csv output is utf-8");
                Ok(Self::csv(format!("{stem}.csv"), &body))
            }
            Format::Json => {
                #[derive(Serialize)]
                struct Wrapped<'a, T> {
                    manifest: &'a str,
                    rows: &'a [T],
                }
                let body = serde_json::to_string_pretty(&Wrapped { manifest: MANIFEST, rows })?;
                Ok(Self {
                    name: format!("{stem}.json"),
                    contents: body + "\n",
                })
            }
        }
    }

    /// Prefix an already formatted CSV body with the manifest comment.
    pub fn csv(name: String, body: &str) -> Self {
        Self {
            name,
            contents: format!("# manifest: {MANIFEST}\n{body}"),
        }
    }

    /// A JSON document written as is.
    pub fn json<T: Serialize>(name: String, value: &T) -> Result<Self> {
        Ok(Self {
            name,
            contents: serde_json::to_string_pretty(value)? + "\n",
        })
    }
}

#[derive(Serialize)]
struct FileEntry<'a> {
    name: &'a str,
    sha256: String,
    bytes: usize,
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    tool: &'static str,
    tool_version: &'static str,
    library_version: &'static str,
    config: &'a RunConfig,
    tolerances: &'a T,
    files: Vec<FileEntry<'a>>,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Config(format!("output directory {}: {e}", dir.display())))
}

/// Write every file and a manifest listing their hashes.
pub fn write_all<T: Serialize>(config: &RunConfig, tolerances: &T, files: &[DataFile]) -> Result<()> {
    let dir = &config.output_path;
    ensure_dir(dir)?;
    let mut entries = Vec::with_capacity(files.len());
    for f in files {
        fs::write(dir.join(&f.name), &f.contents)?;
        entries.push(FileEntry {
            name: &f.name,
            sha256: hex(&Sha256::digest(f.contents.as_bytes())),
            bytes: f.contents.len(),
        });
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        tool_version: env!("CARGO_PKG_VERSION"),
        library_version: deltashell::VERSION,
        config,
        tolerances,
        files: entries,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

/// Written next to the outputs when a solver gives up.
pub fn write_diagnostic(config: &RunConfig, error: &Error) -> Result<()> {
    #[derive(Serialize)]
    struct Diagnostic<'a> {
        version: &'static str,
        config: &'a RunConfig,
        error: String,
        detail: String,
    }
    ensure_dir(&config.output_path)?;
    let d = Diagnostic {
        version: deltashell::VERSION,
        config,
        error: error.to_string(),
        detail: format!("{error:?}"),
    };
    fs::write(
        config.output_path.join("diagnostic.json"),
        serde_json::to_string_pretty(&d)? + "\n",
    )?;
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

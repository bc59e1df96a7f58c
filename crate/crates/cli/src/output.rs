use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use favard_core::config::ExperimentConfig;
use favard_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_HYPOTHESIS: i32 = 3;

/// Environment variable overriding the configured worker count.
pub const WORKERS_ENV: &str = "FAVARD_WORKERS";

/// Every JSON result is wrapped in this.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub command: &'a str,
    pub config: &'a ExperimentConfig,
    /// SHA-256 over the input files, in argument order.
    pub input_sha256: String,
    pub invariants_pass: bool,
    pub result: &'a T,
}

pub fn sha256_hex<'a>(inputs: impl IntoIterator<Item = &'a [u8]>) -> String {
    let mut h = Sha256::new();
    for bytes in inputs {
        h.update(bytes);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Malformed inputs violate the command's precondition and share its code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Invariant { .. } => EXIT_INVARIANT,
        Error::Hypothesis { .. } | Error::Precondition(_) | Error::Parse { .. } | Error::Resource(_) => EXIT_HYPOTHESIS,
        Error::Io(_) | Error::Json(_) => EXIT_IO,
    }
}

/// Worker count from the environment, then the config.
pub fn worker_count(config: &ExperimentConfig) -> Result<Option<usize>, Error> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Precondition(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(config.workers),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

//! Commands behind the `fluidsens` binary.
//!
//! Every command returns a [`Report`]; nothing touches the filesystem until
//! [`Report::write`] is called.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod output;

use std::path::PathBuf;

use fluidsens::ilt::{InversionSpec, Method};
use fluidsens::SfmError;
use thiserror::Error;

pub use output::{Report, Table};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] SfmError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Flags shared by all commands.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    /// Largest accepted inversion error estimate.
    pub tol: f64,
    pub method: Method,
    /// `None` picks the command's default order.
    pub order: Option<usize>,
    pub seed: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings { tol: 1e-4, method: Method::Euler, order: None, seed: 42 }
    }
}

impl Settings {
    pub fn inversion(&self, default_euler: usize) -> InversionSpec {
        match (self.method, self.order) {
            (m, Some(n)) => InversionSpec { method: m, order: n },
            (Method::Euler, None) => InversionSpec::euler(default_euler),
            (Method::Cme, None) => InversionSpec::with_default_order(Method::Cme),
        }
    }
}

/// `start, start + step, …` up to `stop` (inclusive, with rounding slack).
pub fn grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(CliError::Invalid(format!("bad grid {start}:{step}:{stop}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

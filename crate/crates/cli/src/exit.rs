//! Error classes and their process exit codes.

use std::fmt;

/// Bad flags, specs or input files. Exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Too many failed draws or replicates. Outputs are still written. Exit code 3.
#[derive(Debug)]
pub struct ThresholdExceeded(pub String);

impl fmt::Display for ThresholdExceeded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ThresholdExceeded {}

pub const OK: u8 = 0;
pub const OTHER: u8 = 1;
pub const CONFIG: u8 = 2;
pub const THRESHOLD: u8 = 3;

/// Largest tolerated share of nonconverged draws.
pub const MAX_NONCONVERGED_FRACTION: f64 = 0.1;

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ThresholdExceeded>() {
            return THRESHOLD;
        }
        if cause.is::<UsageError>() {
            return CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<pb_core::Error>() {
            use pb_core::Error::*;
            return match e {
                Config(_) | Parse(_) | Dimension { .. } | Empty(_) | Unsupported(_) => CONFIG,
                _ => OTHER,
            };
        }
    }
    OTHER
}

/// Fails with exit code 3 when more than 10% of `requested` draws were dropped.
pub fn check_nonconverged(dropped: usize, requested: usize) -> anyhow::Result<()> {
    if dropped as f64 > MAX_NONCONVERGED_FRACTION * requested as f64 {
        return Err(
            ThresholdExceeded(format!("{dropped} of {requested} draws did not converge")).into(),
        );
    }
    Ok(())
}

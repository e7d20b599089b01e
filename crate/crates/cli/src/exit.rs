//! Exit-code policy: 0 success, 1 usage error, 2 data error.
//!
//! Anything the user got wrong on the command line (bad flag combinations,
//! a subcommand used without its required inputs) is a usage error; bad
//! file contents, mismatched shapes, and I/O failures are data errors.
//! Usage problems are tagged with a marker type so `main` can classify an
//! error chain after the fact.

use core::fmt;

use anyhow::Error;

#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(message: impl Into<String>) -> Error {
    Error::new(UsageError(message.into()))
}

/// 1 when the chain contains a usage marker, 2 otherwise.
pub fn classify(err: &Error) -> u8 {
    if err.chain().any(|cause| cause.is::<UsageError>()) {
        1
    } else {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_marker_survives_context() {
        let err = usage("missing --lights").context("while predicting");
        assert_eq!(classify(&err), 1);
        assert_eq!(classify(&anyhow::anyhow!("corrupt file")), 2);
    }
}

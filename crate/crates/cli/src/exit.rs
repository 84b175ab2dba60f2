//! Process exit codes, one per error class.

use isonorm::Error;
use serde_json::json;

pub const OK: i32 = 0;
pub const USAGE: i32 = 2;
pub const IO: i32 = 3;
pub const FORMAT: i32 = 4;
pub const SHAPE: i32 = 5;
pub const DATA: i32 = 6;
pub const HADAMARD: i32 = 7;
pub const NUMERICAL: i32 = 8;

pub fn code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) => USAGE,
        Error::Io(_) => IO,
        Error::Format(_)
        | Error::ChecksumFailure
        | Error::VersionMismatch { .. }
        | Error::Parse { .. }
        | Error::IncompleteNormalizer(_) => FORMAT,
        Error::Shape(_) => SHAPE,
        Error::NonFiniteInput
        | Error::InsufficientData { .. }
        | Error::DegenerateDistribution(_)
        | Error::DegenerateChannel { .. }
        | Error::RankDeficient { .. } => DATA,
        Error::SizeLimitExceeded { .. }
        | Error::InvalidResidueClass { .. }
        | Error::NotPrimePower { .. }
        | Error::NoKnownConstruction { .. } => HADAMARD,
        Error::NotSymmetric { .. } | Error::EigenFailure { .. } | Error::TrainingDiverged { .. } => NUMERICAL,
    }
}

/// Machine-readable form printed to stderr under `--json`.
pub fn error_json(err: &Error) -> serde_json::Value {
    json!({ "error": { "kind": err.kind(), "code": code(err), "message": err.to_string() } })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes_are_distinct() {
        assert_eq!(code(&Error::NoKnownConstruction { size: 668 }), HADAMARD);
        assert_eq!(code(&Error::Shape("x".into())), SHAPE);
        assert_eq!(code(&Error::ChecksumFailure), FORMAT);
        assert_eq!(code(&Error::RankDeficient { effective_rank: 1.0 }), DATA);
        let v = error_json(&Error::NoKnownConstruction { size: 668 });
        assert_eq!(v["error"]["kind"], "NoKnownConstruction");
        assert_eq!(v["error"]["code"], 7);
    }
}

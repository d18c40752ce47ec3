use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("ket is not normalised (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("cannot normalise the zero vector")]
    ZeroVector,

    #[error("basis is not orthonormal: <{i}|{j}> = {value}")]
    NotOrthonormal { i: usize, j: usize, value: f64 },

    #[error("operator is not hermitian (deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is not unitary (deviation {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("angle {theta} outside the open interval (0, pi/4)")]
    AngleOutOfRange { theta: f64 },

    #[error("probability {name} = {value} outside [0, 1]")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no unitary extension: {0}")]
    NoUnitaryExtension(String),

    #[error("key length mismatch: alice {alice}, bob {bob}")]
    LengthMismatch { alice: usize, bob: usize },

    #[error("requested {requested} comparison bits but key has {available}")]
    NotEnoughKey { requested: usize, available: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("no samples for operator pair ({0}, {1})")]
    MissingOperatorPair(usize, usize),

    #[error("key exhausted: {0}")]
    KeyExhausted(String),

    #[error("stage transition {from:?} -> {to:?} is not forward")]
    BadStage {
        from: crate::protocols::KeyStage,
        to: crate::protocols::KeyStage,
    },
}

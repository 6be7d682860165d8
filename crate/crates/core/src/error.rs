//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two registers being combined carry the same (mode, polarization) label.
    #[error("mode label collision: {0}")]
    LabelCollision(String),

    /// A mode id was requested that the register does not contain.
    #[error("unknown mode id: {0}")]
    UnknownMode(String),

    /// `partial_trace` was asked to keep an empty set of modes.
    #[error("keep set for partial trace is empty")]
    EmptyKeepSet,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Registers with different Fock cutoffs cannot be combined.
    #[error("fock cutoff mismatch: {0} vs {1}")]
    CutoffMismatch(u8, u8),

    #[error("generator is not Hermitian (max deviation {deviation:.3e})")]
    NonHermitian { deviation: f64 },

    #[error("state is not normalized (norm {norm:.12})")]
    NotNormalized { norm: f64 },

    /// The matrix exponential failed its unitarity check.
    #[error("evolution operator lost unitarity (deviation {deviation:.3e})")]
    UnitarityLoss { deviation: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The feasibility LP did not terminate cleanly; never silently defaulted.
    #[error("linear program failed: {0}")]
    LpFailure(String),

    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),

    /// A density matrix does not describe the expected photon sector.
    #[error("not a valid state for this operation: {0}")]
    NotAState(String),

    /// A CHSH estimate was requested from data with an empty setting block.
    #[error("no counts recorded for setting pair ({x},{y})")]
    EmptySettingBlock { x: u8, y: u8 },
}

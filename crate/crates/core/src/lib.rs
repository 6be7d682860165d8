//! Core engine for simulating Bell tests with local precertification of the
//! photon's presence.
//!
//! The crate is organized around the stages of such an experiment:
//!
//! - [`qstate`] — a small dense Fock-space engine over labeled
//!   polarization modes (tensor products, projections, partial trace,
//!   unitary evolution).
//! - [`precert`] — the single-photon down-conversion splitting stage,
//!   flag heralding, and two-sided precertification of an entangled pair.
//! - [`optics`] — detector and loss-channel models, the heralded-rate
//!   calculator, and the colored-noise state family.
//! - [`bell`] — Bell correlations with inefficient detectors, local
//!   polytope membership by linear programming, and critical
//!   detection-efficiency optimization.
//! - [`spacetime`] — causality constraints of the experiment geometry.
//! - [`montecarlo`] — event-level stochastic simulation of the full
//!   experiment with reproducible seeded streams.
//!
//! All numeric tolerances live in [`tolerances`].

pub mod bell;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod optics;
pub mod optim;
pub mod precert;
pub mod qstate;
pub mod spacetime;
pub mod tolerances;

pub use error::{Error, Result};
pub use qstate::{DensityMatrix, FockRegister, ModeId, ModeLabel, Polarization, StateVector};

//! Central tolerance constants.
//!
//! Every numeric threshold used by the library is defined here so there is a
//! single point of tuning for the whole test suite.

/// L2 norm, trace, orthonormality, and probability-completeness checks.
pub const NORM_TOL: f64 = 1e-10;

/// Unitarity of matrix exponentials, `max |U†U - I|`.
pub const UNITARITY_TOL: f64 = 1e-12;

/// Allowed negative slack on density-matrix eigenvalues.
pub const PSD_SLACK: f64 = 1e-10;

/// Hermiticity of generators and density matrices.
pub const HERMITICITY_TOL: f64 = 1e-10;

/// Branch probabilities below this are reported with no conditional state.
pub const ZERO_BRANCH_TOL: f64 = 1e-14;

/// Relative tolerance for classifying lightlike spacetime intervals.
pub const LIGHTLIKE_REL_TOL: f64 = 1e-12;

/// Absolute tolerance of the critical-efficiency bisection.
pub const ETA_BISECTION_TOL: f64 = 1e-4;

/// Absolute tolerance (meters) of the minimal-separation bisection.
pub const SEPARATION_TOL_M: f64 = 1e-3;

/// Feasibility margin of the local-polytope linear program.
pub const LP_TOL: f64 = 1e-9;

/// A CHSH facet value must exceed the local bound by at least this much
/// before a behavior is called nonlocal.
pub const CHSH_VIOLATION_MARGIN: f64 = 1e-9;

/// Agreement expected from independently seeded threshold optimizations.
pub const OPTIMIZER_REPRODUCIBILITY_TOL: f64 = 2e-3;

/// Relative energy-conservation deviation above which the splitter
/// configuration warns (the check is informative, not an error).
pub const ENERGY_CONSERVATION_WARN: f64 = 0.02;

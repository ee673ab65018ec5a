//! Tensor ring completion by weighted nuclear-norm minimization over shifted
//! unfoldings, solved with ADMM, plus the measurement tools used to check
//! when recovery is expected to succeed.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the experiments use.

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod io;
pub mod metrics;
pub mod sampling;
pub mod scalar;
pub mod solver;
pub mod tensor;
pub mod tr;
pub mod vdt;

pub use error::{Error, Result};
pub use scalar::{Real, Svd};

pub use analysis::{GapMethod, TangentSpace};
pub use experiments::{CurveSpec, ExperimentReport, GridSpec, TrialRecord};
pub use sampling::ObservationMask;
pub use solver::{SolverConfig, SolverTrace, Termination};
pub use tensor::{DenseTensor, MatricizationPlan};
pub use tr::{IncoherenceProfile, TrFactors, TrState};
pub use vdt::VdtPlan;

pub type Tensor = DenseTensor<f64>;
pub type Tensor32 = DenseTensor<f32>;
pub type Factors = TrFactors<f64>;
pub type Factors32 = TrFactors<f32>;
pub type Config = SolverConfig<f64>;
pub type Trace = SolverTrace<f64>;
pub type Subspace = TangentSpace<f64>;
pub type Profile = IncoherenceProfile<f64>;

//! Operator-valued Ornstein–Uhlenbeck stochastic volatility models and
//! forward-curve dynamics in a Filipović space.

pub mod error;
pub mod forward;
pub mod hs;
pub mod levy;
pub mod lifted;
pub mod ou;
pub mod quadrature;
pub mod scalar;
pub mod vol;

pub use error::{Error, Result};
pub use forward::{build_space, FwSpace, WeightSpec};
pub use hs::{HVec, HsMat, Tolerances};
pub use levy::{DriverPath, JumpLaw, LevyDriver, ScalarTimesU, SubordinatorSpec, WishartCp};
pub use lifted::{LiftedDrift, Propagator};
pub use ou::{CfRoute, StateSemigroup, VolScale, XConfig, XPath, XStepper};
pub use scalar::Scalar;
pub use vol::{VolConfig, VolPath};

pub type HsMat64 = HsMat<f64>;
pub type HsMat32 = HsMat<f32>;
pub type HVec64 = HVec<f64>;
pub type HVec32 = HVec<f32>;
pub type LiftedDrift64 = LiftedDrift<f64>;
pub type LiftedDrift32 = LiftedDrift<f32>;
pub type LevyDriver64 = LevyDriver<f64>;
pub type LevyDriver32 = LevyDriver<f32>;
pub type VolConfig64 = VolConfig<f64>;
pub type VolConfig32 = VolConfig<f32>;
pub type FwSpace64 = FwSpace<f64>;
pub type FwSpace32 = FwSpace<f32>;
pub type XConfig64 = XConfig<f64>;
pub type XConfig32 = XConfig<f32>;

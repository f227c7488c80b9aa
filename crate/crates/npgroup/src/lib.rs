//! Nonparametric significance testing and group variable selection for
//! heteroscedastic regression.
//!
//! The core pipeline: project a candidate group of covariates to a
//! surrogate score, sort observations by that score, and compare the
//! within-window spread of null-model residuals to the overall spread with
//! an augmented one-way ANOVA statistic. Backward elimination with a
//! dependence-robust false-discovery cutoff turns the test into a group
//! selector.
//!
//! Everything is generic over the scalar type via [`Float`]; the aliases at
//! the crate root pin `f64` for the common case.

pub mod anovatest;
pub mod error;
pub mod num;
pub mod projection;
pub mod selection;
pub mod simharness;
pub mod smoothing;

pub use anovatest::{group_test, univariate_test, Diagnostics, TestConfig, TestResult};
pub use error::{Error, Result};
pub use num::Float;
pub use projection::{sir, supervised_pc, ProjectionResult, Rule, SirEstimate};
pub use selection::{backward_select, by_cutoff, GroupMap, SelectConfig, SelectionTrace};
pub use simharness::{
    gen_group_continuous, gen_group_logistic, gen_model_check, run_rejection_study,
    run_selection_study, CheckDesign, Design, SimConfig, SimReport,
};
pub use smoothing::{default_bandwidth, local_poly_fit, Bandwidth, KernelFamily, KernelSpec};

/// `f64` specializations of the main entry points.
pub type TestConfigF64 = TestConfig<f64>;
pub type TestResultF64 = TestResult<f64>;
pub type SelectConfigF64 = SelectConfig<f64>;
pub type SelectionTraceF64 = SelectionTrace<f64>;
pub type SimConfigF64 = SimConfig<f64>;
pub type BandwidthF64 = Bandwidth<f64>;

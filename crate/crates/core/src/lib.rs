//! Spectral cut-off regularization for ill-posed inverse problems in the
//! Gaussian sequence model `y_k = theta_k + sigma_k xi_k`.
//!
//! The projection estimator keeps the first `N` coefficients. Its bandwidth is
//! chosen from the data either by unbiased risk estimation or by risk hull
//! minimization, whose penalty `U0(N)` is tabulated by Monte Carlo in
//! [`hull`]. The [`experiments`] module measures both against the oracle.

pub mod error;
pub mod estimators;
pub mod experiments;
pub mod hull;
pub mod noise;
pub mod selectors;
pub mod sequence_model;

pub use error::{Error, Result};
pub use estimators::{oracle_risk, project, projection_risk, rhm_risk, squared_loss, ure_threshold, RiskCurve};
pub use experiments::{
    efficiency_curve, efficiency_curves, mc_selector_risk, oracle_efficiency, ratio_curve, stem_experiment,
    EfficiencyCurve, EfficiencyPoint, McRisk, StemData, StemRecord, Sweep,
};
pub use hull::{
    build_hull_table, compute_u0, envelope_crossing, gaussian_u0, penalty_ratio, sample_eta_paths, tail_functional, u1,
    HullTable, McParams, PenaltyRatio,
};
pub use noise::{CounterNoise, NoiseSource};
pub use selectors::{penalized_objective, select_penalized, select_rhm, select_ure, Method, Selector, SelectorResult};
pub use sequence_model::{signal_family, simulate, Observation, SigmaSpec, Signal};

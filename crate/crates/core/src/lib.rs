//! A desk-scale laboratory for calibrated contrastive preference
//! optimization over exactly-computable tabular policies.
//!
//! The crate builds finite prompt/response environments with ground-truth
//! rewards, trains softmax policies against the contrastive loss family
//! (DPO, the beta-free BT form, IPO, SLiC and their calibrated variants) by
//! plain gradient descent, and verifies the family's gradient formulas, KL
//! identities and reward-calibration behavior against independent oracles:
//! finite differences, dual-route recomputations and closed-form optima.
//!
//! Modules follow the pipeline:
//!
//! * [`mod@env`]: environments, tabular policies, implicit rewards, `pi*`
//! * [`data`]: seeded preference-pair sampling and labeling
//! * [`loss`]: the per-pair loss family with analytic gradients
//! * [`population`]: exact population quantities and theorem diagnostics
//! * [`trainer`]: deterministic gradient descent with dynamics logging
//! * [`verify`]: finite-difference oracles and verification suites
//! * [`fixtures`]: pinned environments for the standard experiments

pub mod data;
pub mod env;
pub mod error;
pub mod fixtures;
pub mod loss;
pub mod math;
pub mod population;
pub mod trainer;
pub mod verify;

pub use data::{
    attach_oracle_rewards, bt_probability, sample_dataset, Labeling, OracleMode, PreferenceDataset,
    PreferencePair,
};
pub use env::{
    implicit_reward, log_partition, optimal_policy, preference_score, softmax, Distribution,
    Environment, EnvironmentFile, GradTable, PolicyParams,
};
pub use error::{Error, Result};
pub use loss::{
    batch_loss, cal_pair_loss, calibration_loss, pair_loss, LossSpec, LossValue, Method,
};
pub use population::{
    calibration_term, contrast_weights, empirical_population_estimate, forward_kl,
    population_caldpo_loss, population_mle_loss, reverse_kl, theorem1_gradient,
    theorem2_diagnostic, ContrastWeights, PopulationReport, Theorem2Report,
};
pub use trainer::{
    beta_sweep, gd_step, train, BatchMode, InitMode, Objective, SweepRow, TrainConfig, TrainLog,
    TrainLogRow,
};
pub use verify::{finite_diff_grad, run_suite, FailureRecord, SuiteName, VerificationSuiteResult};

/// The beta grid searched in the experiments: `{1e-3, 2e-3, 3e-3, 1e-2, 1e-1}`.
pub const DEFAULT_BETA_GRID: [f64; 5] = [1e-3, 2e-3, 3e-3, 1e-2, 1e-1];

/// Default beta for the calibrated losses.
pub const DEFAULT_BETA: f64 = 1e-3;

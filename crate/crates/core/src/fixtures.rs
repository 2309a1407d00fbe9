//! Shared deterministic fixtures for the dynamics reproduction, population
//! convergence and counterexample constructions.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as RandDistribution, StandardNormal};

use crate::data::{attach_oracle_rewards, sample_dataset, Labeling, OracleMode, PreferenceDataset};
use crate::env::{log_partition, Environment, PolicyParams};
use crate::loss::{LossSpec, Method};
use crate::population::star_log_probs;
use crate::trainer::{BatchMode, InitMode, Objective, TrainConfig};

/// Returns a copy of the environment with each prompt's rewards shifted by
/// `-beta * log Z(x)`, so that `log Z(x) = 0` at the given beta. The shift
/// leaves `pi*` unchanged.
pub fn shift_rewards_to_zero_log_partition(env: &Environment, beta: f64) -> Environment {
    let file = env.to_file_struct();
    let mut reward = file.reward;
    for (x, row) in reward.iter_mut().enumerate() {
        let lz = log_partition(env, beta, x).expect("valid env and beta");
        for r in row.iter_mut() {
            *r -= beta * lz;
        }
    }
    Environment::new(reward, file.ref_logits).expect("shift preserves validity")
}

/// Policy whose row softmax equals `pi*` exactly.
pub fn star_policy(env: &Environment, beta: f64) -> PolicyParams {
    let logits = (0..env.num_prompts())
        .map(|x| star_log_probs(env, beta, x).expect("valid env and beta"))
        .collect();
    PolicyParams { logits }
}

fn gaussian_env(prompts: usize, responses: usize, reward_scale: f64, seed: u64) -> Environment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reward: Vec<Vec<f64>> = (0..prompts)
        .map(|_| {
            (0..responses)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    reward_scale * z
                })
                .collect()
        })
        .collect();
    let ref_logits = (0..prompts).map(|_| vec![0.0; responses]).collect();
    Environment::new(reward, ref_logits).expect("fixture env is valid")
}

/// Deterministic witness that the uncorrected bound can run negative:
/// `pi_theta = pi*` on rewards shifted so `log Z = 0`. There the reverse KL
/// and the calibration term are both zero, the corrected gap collapses to
/// zero, and the raw gap equals `-D[pi* || pi_ref] < 0`.
pub fn theorem2_counterexample() -> (Environment, PolicyParams, f64) {
    let beta = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e02);
    // Non-uniform reference so that D[pi* || pi_ref] is strictly positive.
    let prompts = 3;
    let responses = 5;
    let reward: Vec<Vec<f64>> = (0..prompts)
        .map(|_| {
            (0..responses)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect()
        })
        .collect();
    let ref_logits: Vec<Vec<f64>> = (0..prompts)
        .map(|_| {
            (0..responses)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect()
        })
        .collect();
    let raw = Environment::new(reward, ref_logits).expect("fixture env is valid");
    let env = shift_rewards_to_zero_log_partition(&raw, beta);
    let policy = star_policy(&env, beta);
    (env, policy, beta)
}

/// Standard reward-dynamics fixture dimensions.
pub const DYNAMICS_PROMPTS: usize = 50;
pub const DYNAMICS_RESPONSES: usize = 8;
pub const DYNAMICS_PAIRS: usize = 2000;
pub const DYNAMICS_BETA: f64 = 0.01;
pub const DYNAMICS_LR: f64 = 0.5;
pub const DYNAMICS_STEPS: usize = 2000;
pub const DYNAMICS_ENV_SEED: u64 = 17;
pub const DYNAMICS_DATA_SEED: u64 = 11;
/// Reward spread; wide enough that the uncalibrated run reaches the
/// concentration regime where chosen rewards sink below zero.
pub const DYNAMICS_REWARD_SCALE: f64 = 2.0;

/// 50 prompts x 8 responses, gaussian rewards over a uniform reference.
pub fn dynamics_environment() -> Environment {
    gaussian_env(
        DYNAMICS_PROMPTS,
        DYNAMICS_RESPONSES,
        DYNAMICS_REWARD_SCALE,
        DYNAMICS_ENV_SEED,
    )
}

/// 2000 BT-labeled pairs carrying the pairwise-convention oracle rewards.
pub fn dynamics_dataset(env: &Environment) -> PreferenceDataset {
    let ds = sample_dataset(env, DYNAMICS_PAIRS, DYNAMICS_DATA_SEED, Labeling::Bt)
        .expect("fixture dataset samples");
    attach_oracle_rewards(&ds, env, OracleMode::Convention).expect("fingerprint matches")
}

/// Full-batch gradient descent at the fixture's pinned hyperparameters.
///
/// The uncalibrated arm is the beta-free contrastive loss (`Method::Bt`,
/// i.e. DPO without the beta factor); the calibrated arm adds the two
/// squared calibration terms at the same beta. Both log KL diagnostics at
/// `DYNAMICS_BETA`.
pub fn dynamics_train_config(method: Method) -> TrainConfig {
    TrainConfig {
        loss: LossSpec::new(method, DYNAMICS_BETA).expect("beta > 0"),
        steps: DYNAMICS_STEPS,
        learning_rate: DYNAMICS_LR,
        batch: BatchMode::Full,
        objective: Objective::Empirical,
        log_every: 50,
        grad_clip: None,
        init: InitMode::Zeros,
    }
}

/// Population-convergence fixture: a 3x4 environment with rewards
/// pre-shifted so `log Z = 0`, where the population calibrated objective is
/// minimized exactly at `pi*`.
pub const POPULATION_BETA: f64 = 0.5;
pub const POPULATION_STEPS: usize = 10_000;
pub const POPULATION_LR: f64 = 0.1;

pub fn population_convergence_environment() -> Environment {
    let raw = gaussian_env(3, 4, 1.0, 23);
    shift_rewards_to_zero_log_partition(&raw, POPULATION_BETA)
}

pub fn population_convergence_config() -> TrainConfig {
    TrainConfig {
        loss: LossSpec::new(Method::CalDpo, POPULATION_BETA).expect("beta > 0"),
        steps: POPULATION_STEPS,
        learning_rate: POPULATION_LR,
        batch: BatchMode::Full,
        objective: Objective::Population,
        log_every: 1000,
        grad_clip: None,
        init: InitMode::Zeros,
    }
}

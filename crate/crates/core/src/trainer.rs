//! Deterministic gradient-descent training with reward-dynamics logging.
//!
//! Plain full-batch gradient descent on the exact tabular losses; a seeded
//! minibatch mode exists for dynamics realism. Each logged row carries the
//! objective value together with the dataset means of the chosen/rejected
//! implicit rewards and the per-prompt mean forward/reverse KL at the
//! configured beta, the quantities whose training curves distinguish the
//! calibrated and uncalibrated members of the loss family.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as RandDistribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::PreferenceDataset;
use crate::env::{Environment, GradTable, PolicyParams};
use crate::error::{Error, Result};
use crate::loss::{batch_loss_over, LossSpec};
use crate::math::KahanSum;
use crate::population::{
    calibration_term, calibration_term_grad, first_term_direct, forward_kl, reverse_kl,
    theorem1_gradient,
};

/// Batch selection per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    /// Every pair, every step.
    Full,
    /// `size` pairs drawn uniformly with replacement each step from a
    /// dedicated seeded stream.
    Minibatch { size: usize, seed: u64 },
}

/// What the gradient is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Mean per-pair loss over the dataset.
    Empirical,
    /// The population calibrated loss (contrastive first term plus
    /// calibration term), averaged over prompts. Uses the loss spec's beta;
    /// the method field is not consulted.
    Population,
}

/// Initial logits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// All-zero logits (uniform policy).
    Zeros,
    /// `theta = log pi_ref`, so every implicit reward starts at exactly 0.
    CopyOfRefLogits,
    /// I.i.d. gaussian logits from a dedicated seeded stream.
    SeededGaussian { scale: f64, seed: u64 },
}

/// Full training configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossSpec,
    pub steps: usize,
    pub learning_rate: f64,
    pub batch: BatchMode,
    pub objective: Objective,
    pub log_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
    pub init: InitMode,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.steps < 1 {
            return Err(Error::Configuration("steps must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Configuration(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.log_every < 1 {
            return Err(Error::Configuration("log_every must be >= 1".into()));
        }
        if let Some(clip) = self.grad_clip {
            if !(clip > 0.0 && clip.is_finite()) {
                return Err(Error::Configuration(format!(
                    "grad_clip must be > 0, got {clip}"
                )));
            }
        }
        if let BatchMode::Minibatch { size, .. } = self.batch {
            if size == 0 {
                return Err(Error::Configuration("minibatch size must be >= 1".into()));
            }
        }
        Ok(())
    }
}

/// One logged row of training diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: usize,
    pub loss: f64,
    pub chosen_reward_mean: f64,
    pub rejected_reward_mean: f64,
    pub margin_mean: f64,
    pub forward_kl_mean: f64,
    pub reverse_kl_mean: f64,
}

/// Training log; rows are strictly increasing in step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub rows: Vec<TrainLogRow>,
}

const CSV_HEADER: &str =
    "step,loss,chosen_reward_mean,rejected_reward_mean,margin_mean,forward_kl_mean,reverse_kl_mean";

/// Serializes a float with 17 significant digits so logs round-trip exactly.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        }
    } else {
        format!("{v:.16e}")
    }
}

fn parse_f64(text: &str) -> Result<f64> {
    match text {
        "NaN" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        other => other
            .parse()
            .map_err(|e| Error::Parse(format!("bad float {other:?}: {e}"))),
    }
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.step,
                fmt_f64(row.loss),
                fmt_f64(row.chosen_reward_mean),
                fmt_f64(row.rejected_reward_mean),
                fmt_f64(row.margin_mean),
                fmt_f64(row.forward_kl_mean),
                fmt_f64(row.reverse_kl_mean),
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == CSV_HEADER => {}
            other => return Err(Error::Parse(format!("bad train log header: {other:?}"))),
        }
        let mut rows = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(Error::Parse(format!("bad train log row: {line:?}")));
            }
            rows.push(TrainLogRow {
                step: fields[0]
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad step: {e}")))?,
                loss: parse_f64(fields[1])?,
                chosen_reward_mean: parse_f64(fields[2])?,
                rejected_reward_mean: parse_f64(fields[3])?,
                margin_mean: parse_f64(fields[4])?,
                forward_kl_mean: parse_f64(fields[5])?,
                reverse_kl_mean: parse_f64(fields[6])?,
            });
        }
        Ok(TrainLog { rows })
    }

    pub fn final_row(&self) -> Option<&TrainLogRow> {
        self.rows.last()
    }
}

/// One descent step `theta' = theta - lr * g`, with `g` rescaled to L2 norm
/// `grad_clip` when it exceeds it. The input policy is not modified.
pub fn gd_step(
    policy: &PolicyParams,
    grad: &GradTable,
    learning_rate: f64,
    grad_clip: Option<f64>,
) -> Result<PolicyParams> {
    if grad.rows.len() != policy.logits.len()
        || grad
            .rows
            .iter()
            .zip(policy.logits.iter())
            .any(|(g, t)| g.len() != t.len())
    {
        return Err(Error::InvalidInput(
            "gradient shape does not match policy".into(),
        ));
    }
    // lr = 0 is a well-defined no-op; negative or non-finite rates are not.
    if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "learning rate must be >= 0, got {learning_rate}"
        )));
    }
    let mut scale = 1.0;
    if let Some(clip) = grad_clip {
        let norm = grad.l2_norm();
        if norm > clip {
            scale = clip / norm;
        }
    }
    let logits = policy
        .logits
        .iter()
        .zip(grad.rows.iter())
        .map(|(t_row, g_row)| {
            t_row
                .iter()
                .zip(g_row.iter())
                .map(|(t, g)| t - learning_rate * scale * g)
                .collect()
        })
        .collect();
    Ok(PolicyParams { logits })
}

/// Mixes the run seed with a component seed and a stream tag; components get
/// independent, reproducible ChaCha streams (SplitMix64 finalizer).
fn mix_seed(run_seed: u64, component_seed: u64, tag: u64) -> u64 {
    let mut z = run_seed
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(component_seed)
        .wrapping_add(tag.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

const TAG_INIT: u64 = 1;
const TAG_MINIBATCH: u64 = 2;

fn initial_policy(config: &TrainConfig, env: &Environment, run_seed: u64) -> PolicyParams {
    match config.init {
        InitMode::Zeros => PolicyParams::zeros(env),
        InitMode::CopyOfRefLogits => PolicyParams::copy_of_ref(env),
        InitMode::SeededGaussian { scale, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(run_seed, seed, TAG_INIT));
            let logits = (0..env.num_prompts())
                .map(|x| {
                    (0..env.num_responses(x))
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            scale * z
                        })
                        .collect()
                })
                .collect();
            PolicyParams { logits }
        }
    }
}

/// Population calibrated objective: mean over prompts of
/// `first_term + calibration_term`, with its analytic gradient.
fn population_objective(
    env: &Environment,
    beta: f64,
    policy: &PolicyParams,
) -> Result<(f64, GradTable)> {
    let mut value = KahanSum::new();
    let mut grad = GradTable::zeros_for(env);
    for x in 0..env.num_prompts() {
        value.add(first_term_direct(env, beta, policy, x)?);
        value.add(calibration_term(env, beta, policy, x)?);
        let g1 = theorem1_gradient(env, beta, policy, x)?;
        let g2 = calibration_term_grad(env, beta, policy, x)?;
        for (dst, src) in grad.rows[x].iter_mut().zip(g1.rows[x].iter()) {
            *dst += src;
        }
        for (dst, src) in grad.rows[x].iter_mut().zip(g2.rows[x].iter()) {
            *dst += src;
        }
    }
    let inv = 1.0 / env.num_prompts() as f64;
    grad.scale(inv);
    Ok((value.value() * inv, grad))
}

fn diagnostics_row(
    step: usize,
    loss: f64,
    env: &Environment,
    beta: f64,
    policy: &PolicyParams,
    dataset: Option<&PreferenceDataset>,
) -> Result<TrainLogRow> {
    let (chosen_mean, rejected_mean) = match dataset {
        Some(ds) if !ds.pairs.is_empty() => {
            let log_probs = policy.log_probs_all();
            let mut chosen = KahanSum::new();
            let mut rejected = KahanSum::new();
            for pair in &ds.pairs {
                let row = &log_probs[pair.prompt];
                chosen.add(row[pair.chosen] - env.ref_log_prob(pair.prompt, pair.chosen));
                rejected.add(row[pair.rejected] - env.ref_log_prob(pair.prompt, pair.rejected));
            }
            let n = ds.pairs.len() as f64;
            (chosen.value() / n, rejected.value() / n)
        }
        _ => (f64::NAN, f64::NAN),
    };
    let mut fwd = KahanSum::new();
    let mut rev = KahanSum::new();
    for x in 0..env.num_prompts() {
        fwd.add(forward_kl(env, beta, policy, x)?);
        rev.add(reverse_kl(env, beta, policy, x)?);
    }
    let k = env.num_prompts() as f64;
    Ok(TrainLogRow {
        step,
        loss,
        chosen_reward_mean: chosen_mean,
        rejected_reward_mean: rejected_mean,
        margin_mean: chosen_mean - rejected_mean,
        forward_kl_mean: fwd.value() / k,
        reverse_kl_mean: rev.value() / k,
    })
}

/// Runs gradient descent and returns the final policy with its log.
///
/// The log has a row for the initial state (step 0), for every
/// `log_every`-th step, and for the final step. Logged losses are always the
/// full objective (whole dataset or all prompts), also under minibatch
/// training. `run_seed` feeds the seeded components (init, minibatch)
/// through a mixing function; with `Zeros` or `CopyOfRefLogits` init and
/// full-batch training the run is seed-free.
pub fn train(
    config: &TrainConfig,
    env: &Environment,
    dataset: Option<&PreferenceDataset>,
    run_seed: u64,
) -> Result<(PolicyParams, TrainLog)> {
    config.validate()?;
    let dataset = match config.objective {
        Objective::Empirical => {
            let ds = dataset.ok_or_else(|| {
                Error::Configuration("empirical objective requires a dataset".into())
            })?;
            ds.validate(env)?;
            Some(ds)
        }
        Objective::Population => {
            // A dataset is optional here and used only for reward logging.
            if let Some(ds) = dataset {
                ds.validate(env)?;
            }
            dataset
        }
    };
    let beta = config.loss.beta;
    let mut policy = initial_policy(config, env, run_seed);
    let mut minibatch_rng = match config.batch {
        BatchMode::Minibatch { seed, .. } => Some(ChaCha8Rng::seed_from_u64(mix_seed(
            run_seed,
            seed,
            TAG_MINIBATCH,
        ))),
        BatchMode::Full => None,
    };

    let objective_value = |policy: &PolicyParams| -> Result<f64> {
        match config.objective {
            Objective::Empirical => {
                Ok(
                    batch_loss_over(&config.loss, policy, env, dataset.expect("validated"), None)?
                        .value,
                )
            }
            Objective::Population => Ok(population_objective(env, beta, policy)?.0),
        }
    };

    let mut log = TrainLog::default();
    let initial_loss = objective_value(&policy)?;
    if !initial_loss.is_finite() {
        return Err(Error::Divergence { step: 0 });
    }
    log.rows.push(diagnostics_row(
        0,
        initial_loss,
        env,
        beta,
        &policy,
        dataset,
    )?);

    for step in 1..=config.steps {
        let grad = match config.objective {
            Objective::Empirical => {
                let ds = dataset.expect("validated");
                let indices = match (&config.batch, minibatch_rng.as_mut()) {
                    (BatchMode::Minibatch { size, .. }, Some(rng)) => Some(
                        (0..*size)
                            .map(|_| rng.random_range(0..ds.pairs.len()))
                            .collect::<Vec<_>>(),
                    ),
                    _ => None,
                };
                batch_loss_over(&config.loss, &policy, env, ds, indices.as_deref())?.grad
            }
            Objective::Population => population_objective(env, beta, &policy)?.1,
        };
        if !grad.is_finite() {
            return Err(Error::Divergence { step });
        }
        policy = gd_step(&policy, &grad, config.learning_rate, config.grad_clip)?;
        if step % config.log_every == 0 || step == config.steps {
            let loss = objective_value(&policy)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { step });
            }
            log.rows
                .push(diagnostics_row(step, loss, env, beta, &policy, dataset)?);
        }
    }
    Ok((policy, log))
}

/// One row of a beta-sweep summary: the final log row of a run at that beta.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub final_loss: f64,
    pub chosen_reward_mean: f64,
    pub rejected_reward_mean: f64,
    pub margin_mean: f64,
    pub forward_kl_mean: f64,
    pub reverse_kl_mean: f64,
}

/// Reruns the configured training once per beta and tabulates final rows.
/// Calibration targets left at their defaults track each beta.
pub fn beta_sweep(
    base_config: &TrainConfig,
    betas: &[f64],
    env: &Environment,
    dataset: Option<&PreferenceDataset>,
    run_seed: u64,
) -> Result<Vec<SweepRow>> {
    if betas.is_empty() {
        return Err(Error::InvalidInput("beta grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let mut config = base_config.clone();
        config.loss.beta = beta;
        config
            .loss
            .validate()
            .map_err(|e| Error::InvalidParameter(format!("beta {beta} in sweep grid: {e}")))?;
        let (_, log) = train(&config, env, dataset, run_seed).map_err(|e| match e {
            Error::Divergence { step } => {
                Error::Configuration(format!("beta {beta} diverged at step {step}"))
            }
            other => other,
        })?;
        let last = log.final_row().expect("log has rows");
        rows.push(SweepRow {
            beta,
            final_loss: last.loss,
            chosen_reward_mean: last.chosen_reward_mean,
            rejected_reward_mean: last.rejected_reward_mean,
            margin_mean: last.margin_mean,
            forward_kl_mean: last.forward_kl_mean,
            reverse_kl_mean: last.reverse_kl_mean,
        });
    }
    Ok(rows)
}

/// CSV for sweep summaries, same float convention as the train log.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "beta,final_loss,chosen_reward_mean,rejected_reward_mean,margin_mean,forward_kl_mean,reverse_kl_mean\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_f64(r.beta),
            fmt_f64(r.final_loss),
            fmt_f64(r.chosen_reward_mean),
            fmt_f64(r.rejected_reward_mean),
            fmt_f64(r.margin_mean),
            fmt_f64(r.forward_kl_mean),
            fmt_f64(r.reverse_kl_mean),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_dataset, Labeling};
    use crate::env::Environment;
    use crate::loss::Method;

    fn uniform_env(rewards: Vec<Vec<f64>>) -> Environment {
        let logits = rewards.iter().map(|r| vec![0.0; r.len()]).collect();
        Environment::new(rewards, logits).unwrap()
    }

    fn basic_config(method: Method, beta: f64, steps: usize, lr: f64) -> TrainConfig {
        TrainConfig {
            loss: LossSpec::new(method, beta).unwrap(),
            steps,
            learning_rate: lr,
            batch: BatchMode::Full,
            objective: Objective::Empirical,
            log_every: 1,
            grad_clip: None,
            init: InitMode::Zeros,
        }
    }

    #[test]
    fn gd_step_basics() {
        let env = uniform_env(vec![vec![0.0, 0.0]]);
        let policy = PolicyParams::zeros(&env);
        let zero = GradTable::zeros_for(&env);
        let stepped = gd_step(&policy, &zero, 1.0, None).unwrap();
        assert_eq!(stepped, policy);

        // One-hot gradient of value 2 with clip 1: entry moves by exactly lr.
        let mut g = GradTable::zeros_for(&env);
        g.rows[0][0] = 2.0;
        let stepped = gd_step(&policy, &g, 1.0, Some(1.0)).unwrap();
        assert!((stepped.logits[0][0] + 1.0).abs() < 1e-15);
        assert_eq!(stepped.logits[0][1], 0.0);

        // Two steps with a fixed gradient equal one step at doubled lr.
        let two = gd_step(&gd_step(&policy, &g, 0.3, None).unwrap(), &g, 0.3, None).unwrap();
        let one = gd_step(&policy, &g, 0.6, None).unwrap();
        for (a, b) in two.logits[0].iter().zip(one.logits[0].iter()) {
            assert!((a - b).abs() < 1e-15);
        }

        // Shape mismatch is rejected.
        let bad = GradTable {
            rows: vec![vec![0.0; 3]],
        };
        assert!(matches!(
            gd_step(&policy, &bad, 1.0, None),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn negative_learning_rate_is_rejected() {
        let env = uniform_env(vec![vec![0.1, -0.1]]);
        let policy = PolicyParams::zeros(&env);
        let g = GradTable::zeros_for(&env);
        assert!(gd_step(&policy, &g, -0.1, None).is_err());
        assert!(gd_step(&policy, &g, f64::NAN, None).is_err());
    }

    #[test]
    fn zero_lr_single_step_keeps_policy() {
        // steps = 1, lr = 0: the final policy matches the init and the log
        // repeats the initial row at step 1.
        let env = uniform_env(vec![vec![1.0, 0.0, -0.5]]);
        let ds = sample_dataset(&env, 20, 5, Labeling::Bt).unwrap();
        let config = basic_config(Method::Dpo, 0.5, 1, 0.0);
        let (policy, log) = train(&config, &env, Some(&ds), 0).unwrap();
        assert_eq!(policy, PolicyParams::zeros(&env));
        assert_eq!(log.rows.len(), 2);
        assert_eq!(log.rows[0].loss, log.rows[1].loss);
        assert_eq!(log.rows[0].margin_mean, log.rows[1].margin_mean);
        assert_eq!(log.rows[0].step, 0);
        assert_eq!(log.rows[1].step, 1);
    }

    #[test]
    fn ipo_single_pair_loss_is_monotone() {
        let env = uniform_env(vec![vec![1.0, 0.0]]);
        let mut ds = sample_dataset(&env, 1, 9, Labeling::Hard).unwrap();
        ds.pairs[0].prompt = 0;
        let config = basic_config(Method::Ipo, 0.1, 200, 1e-2);
        let (_, log) = train(&config, &env, Some(&ds), 0).unwrap();
        for pair in log.rows.windows(2) {
            assert!(
                pair[1].loss <= pair[0].loss + 1e-12,
                "step {}: {} > {}",
                pair[1].step,
                pair[1].loss,
                pair[0].loss
            );
        }
    }

    #[test]
    fn log_row_invariants() {
        let env = uniform_env(vec![vec![0.8, -0.8, 0.1], vec![0.3, -0.3]]);
        let ds = sample_dataset(&env, 64, 2, Labeling::Bt).unwrap();
        let mut config = basic_config(Method::CalDpo, 0.1, 57, 0.2);
        config.log_every = 10;
        let (_, log) = train(&config, &env, Some(&ds), 0).unwrap();
        // Steps: 0, 10, ..., 50, 57.
        let steps: Vec<usize> = log.rows.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 10, 20, 30, 40, 50, 57]);
        for row in &log.rows {
            assert!(
                (row.margin_mean - (row.chosen_reward_mean - row.rejected_reward_mean)).abs()
                    < 1e-10
            );
        }
        for w in log.rows.windows(2) {
            assert!(w[1].step > w[0].step);
        }
    }

    #[test]
    fn determinism_byte_identical_logs() {
        let env = uniform_env(vec![vec![0.8, -0.8, 0.1]]);
        let ds = sample_dataset(&env, 32, 4, Labeling::Bt).unwrap();
        let mut config = basic_config(Method::CalSlic, 0.2, 40, 0.1);
        config.batch = BatchMode::Minibatch { size: 8, seed: 3 };
        config.init = InitMode::SeededGaussian {
            scale: 0.5,
            seed: 6,
        };
        let (_, log_a) = train(&config, &env, Some(&ds), 42).unwrap();
        let (_, log_b) = train(&config, &env, Some(&ds), 42).unwrap();
        assert_eq!(log_a.to_csv(), log_b.to_csv());
        // A different run seed changes the seeded components.
        let (_, log_c) = train(&config, &env, Some(&ds), 43).unwrap();
        assert_ne!(log_a.to_csv(), log_c.to_csv());
        // Minibatch training still makes progress on the full objective.
        assert!(log_a.final_row().unwrap().loss < log_a.rows[0].loss);
    }

    #[test]
    fn missing_dataset_is_a_configuration_error() {
        let env = uniform_env(vec![vec![0.5, -0.5]]);
        let config = basic_config(Method::Dpo, 0.1, 5, 0.1);
        assert!(matches!(
            train(&config, &env, None, 0),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn divergence_is_detected_with_step() {
        let env = uniform_env(vec![vec![1.0, 0.0]]);
        let ds = sample_dataset(&env, 4, 1, Labeling::Hard).unwrap();
        // IPO at beta=1e-3 has target 500 and curvature ~2; lr 1e8 explodes
        // the logits until h^2 overflows.
        let config = basic_config(Method::Ipo, 1e-3, 50, 1e160);
        match train(&config, &env, Some(&ds), 0) {
            Err(Error::Divergence { step }) => assert!(step >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn population_objective_converges_to_star() {
        // On rewards shifted so log Z = 0 the population optimum is exactly
        // pi*; a short run already drives the reverse KL far down.
        let env = crate::fixtures::population_convergence_environment();
        let mut config = crate::fixtures::population_convergence_config();
        config.steps = 3000;
        config.log_every = 500;
        let (_, log) = train(&config, &env, None, 0).unwrap();
        let last = log.final_row().unwrap();
        assert!(
            last.reverse_kl_mean < 1e-2,
            "reverse KL mean {}",
            last.reverse_kl_mean
        );
        assert!(last.chosen_reward_mean.is_nan());
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            TrainLogRow {
                step: 0,
                loss: std::f64::consts::LN_2,
                chosen_reward_mean: 0.0,
                rejected_reward_mean: -0.0,
                margin_mean: 0.0,
                forward_kl_mean: 1.25e-3,
                reverse_kl_mean: f64::NAN,
            },
            TrainLogRow {
                step: 10,
                loss: 1e-17,
                chosen_reward_mean: 123.456,
                rejected_reward_mean: -9.87,
                margin_mean: 133.326,
                forward_kl_mean: 0.0,
                reverse_kl_mean: 4.0,
            },
        ];
        let log = TrainLog { rows };
        let parsed = TrainLog::from_csv(&log.to_csv()).unwrap();
        assert_eq!(parsed.rows.len(), 2);
        assert_eq!(parsed.rows[1].loss, 1e-17);
        assert!(parsed.rows[0].reverse_kl_mean.is_nan());
        assert_eq!(parsed.rows[1].chosen_reward_mean, 123.456);
    }

    #[test]
    fn sweep_largest_beta_has_smallest_margin() {
        // A large beta keeps the policy near the reference, so its final
        // margin trails the best beta's margin on the default grid.
        let env = uniform_env(vec![
            vec![1.2, -0.3, 0.8, -1.0],
            vec![0.5, -0.9, 1.5, 0.0],
            vec![-0.4, 0.7, -1.2, 0.9],
        ]);
        let ds = sample_dataset(&env, 150, 6, Labeling::Bt).unwrap();
        let mut config = basic_config(Method::CalDpo, 0.01, 300, 0.3);
        config.log_every = 300;
        let rows = beta_sweep(&config, &crate::DEFAULT_BETA_GRID, &env, Some(&ds), 0).unwrap();
        assert_eq!(rows.len(), 5);
        let last = rows.last().unwrap();
        let best = rows
            .iter()
            .map(|r| r.margin_mean)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(
            last.margin_mean < best,
            "largest beta margin {} not below best {best}",
            last.margin_mean
        );
    }

    #[test]
    fn sweep_singleton_matches_single_run() {
        let env = uniform_env(vec![vec![0.9, -0.9]]);
        let ds = sample_dataset(&env, 16, 3, Labeling::Bt).unwrap();
        let config = basic_config(Method::CalDpo, 0.05, 30, 0.2);
        let rows = beta_sweep(&config, &[0.05], &env, Some(&ds), 0).unwrap();
        assert_eq!(rows.len(), 1);
        let (_, log) = train(&config, &env, Some(&ds), 0).unwrap();
        let last = log.final_row().unwrap();
        assert_eq!(rows[0].final_loss, last.loss);
        assert_eq!(rows[0].margin_mean, last.margin_mean);
    }
}

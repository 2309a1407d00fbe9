//! Synthetic preference datasets.
//!
//! Pairs are drawn i.i.d.: a uniform prompt, then two distinct responses from
//! `pi_ref(.|x)` (the second is rejection-resampled on collision), then a
//! winner. Under [`Labeling::Bt`] the winner is a Bernoulli draw with
//! probability `sigma(r(x,y_a) - r(x,y_b))`; under [`Labeling::Hard`] the
//! higher-reward response always wins, ties broken toward the lower index.
//!
//! All randomness comes from a single ChaCha8 stream seeded with a `u64`, and
//! draws happen in the fixed order prompt / candidate a / candidate b /
//! label, so a dataset is reproducible from `(env, n_pairs, seed, labeling)`
//! alone. Duplicate pairs may occur; sampling is i.i.d. by design.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::math::sigmoid;

/// How winners are assigned when a sampled pair is labeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Labeling {
    /// Bernoulli draw with the Bradley-Terry probability of the reward gap.
    Bt,
    /// Deterministic argmax of the reward, ties toward the lower index.
    Hard,
}

impl Labeling {
    /// Temperature recorded with the dataset: 1 for BT draws, 0 as the
    /// zero-temperature sentinel for hard labels.
    pub fn beta_label(self) -> f64 {
        match self {
            Labeling::Bt => 1.0,
            Labeling::Hard => 0.0,
        }
    }
}

/// Where oracle rewards come from when they are attached to a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    /// Read `r(x, y)` from the environment's reward table.
    Env,
    /// Pairwise convention when the true reward is withheld:
    /// `r(x, y_w) = +1/2`, `r(x, y_l) = -1/2`.
    Convention,
}

/// One labeled comparison `(x, y_w, y_l)` with optional oracle rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: usize,
    pub chosen: usize,
    pub rejected: usize,
    pub oracle_reward_chosen: Option<f64>,
    pub oracle_reward_rejected: Option<f64>,
}

impl PreferencePair {
    pub fn new(prompt: usize, chosen: usize, rejected: usize) -> Self {
        Self {
            prompt,
            chosen,
            rejected,
            oracle_reward_chosen: None,
            oracle_reward_rejected: None,
        }
    }

    pub fn validate(&self, env: &Environment) -> Result<()> {
        if self.chosen == self.rejected {
            return Err(Error::InvalidInput(format!(
                "pair on prompt {} has chosen == rejected == {}",
                self.prompt, self.chosen
            )));
        }
        env.check_pair_indices(self.prompt, self.chosen)?;
        env.check_pair_indices(self.prompt, self.rejected)?;
        Ok(())
    }

    pub fn has_oracle_rewards(&self) -> bool {
        self.oracle_reward_chosen.is_some() && self.oracle_reward_rejected.is_some()
    }
}

/// An ordered list of preference pairs tied to one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceDataset {
    pub pairs: Vec<PreferencePair>,
    pub env_fingerprint: String,
    pub seed: u64,
    pub labeling: Labeling,
}

impl PreferenceDataset {
    pub fn beta_label(&self) -> f64 {
        self.labeling.beta_label()
    }

    pub fn check_env(&self, env: &Environment) -> Result<()> {
        if self.env_fingerprint != env.fingerprint() {
            return Err(Error::DatasetMismatch(format!(
                "dataset fingerprint {} does not match environment {}",
                self.env_fingerprint,
                env.fingerprint()
            )));
        }
        Ok(())
    }

    pub fn validate(&self, env: &Environment) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::InvalidInput("dataset has no pairs".into()));
        }
        self.check_env(env)?;
        for pair in &self.pairs {
            pair.validate(env)?;
        }
        Ok(())
    }

    /// Newline-delimited JSON: a header record, then one pair per line.
    pub fn to_ndjson(&self) -> String {
        let header = DatasetHeader {
            env_fingerprint: self.env_fingerprint.clone(),
            seed: self.seed,
            labeling: self.labeling,
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for pair in &self.pairs {
            let record = PairRecord {
                x: pair.prompt,
                yw: pair.chosen,
                yl: pair.rejected,
                rw: pair.oracle_reward_chosen,
                rl: pair.oracle_reward_rejected,
            };
            out.push_str(&serde_json::to_string(&record).expect("pair serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_ndjson(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header_line = lines
            .next()
            .ok_or_else(|| Error::Parse("empty dataset file".into()))?;
        let header: DatasetHeader = serde_json::from_str(header_line)?;
        let mut pairs = Vec::new();
        for line in lines {
            let record: PairRecord = serde_json::from_str(line)?;
            pairs.push(PreferencePair {
                prompt: record.x,
                chosen: record.yw,
                rejected: record.yl,
                oracle_reward_chosen: record.rw,
                oracle_reward_rejected: record.rl,
            });
        }
        if pairs.is_empty() {
            return Err(Error::Parse(
                "dataset file has a header but no pairs".into(),
            ));
        }
        Ok(Self {
            pairs,
            env_fingerprint: header.env_fingerprint,
            seed: header.seed,
            labeling: header.labeling,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    env_fingerprint: String,
    seed: u64,
    labeling: Labeling,
}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    x: usize,
    yw: usize,
    yl: usize,
    rw: Option<f64>,
    rl: Option<f64>,
}

/// Bradley-Terry winning probability `sigma(reward_delta)`.
pub fn bt_probability(reward_delta: f64) -> Result<f64> {
    if !reward_delta.is_finite() {
        return Err(Error::InvalidInput(format!(
            "bt_probability of non-finite delta {reward_delta}"
        )));
    }
    Ok(sigmoid(reward_delta))
}

/// Inverse-CDF draw from a categorical given log-probabilities.
fn sample_categorical(rng: &mut ChaCha8Rng, log_probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return i;
        }
    }
    log_probs.len() - 1
}

/// Draws `n_pairs` labeled preference pairs from the environment.
pub fn sample_dataset(
    env: &Environment,
    n_pairs: usize,
    seed: u64,
    labeling: Labeling,
) -> Result<PreferenceDataset> {
    if n_pairs == 0 {
        return Err(Error::InvalidInput("n_pairs must be >= 1".into()));
    }
    // Environment construction already guarantees >= 2 responses per prompt;
    // re-checked here because distinct pairs are this function's contract.
    for x in 0..env.num_prompts() {
        if env.num_responses(x) < 2 {
            return Err(Error::InvalidEnvironment(format!(
                "prompt {x} has fewer than 2 responses"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let x = rng.random_range(0..env.num_prompts());
        let log_probs = env.ref_log_probs(x);
        let a = sample_categorical(&mut rng, log_probs);
        let mut b = sample_categorical(&mut rng, log_probs);
        while b == a {
            b = sample_categorical(&mut rng, log_probs);
        }
        let (chosen, rejected) = match labeling {
            Labeling::Bt => {
                let p = sigmoid(env.reward(x, a) - env.reward(x, b));
                let u: f64 = rng.random();
                if u < p {
                    (a, b)
                } else {
                    (b, a)
                }
            }
            Labeling::Hard => {
                let (ra, rb) = (env.reward(x, a), env.reward(x, b));
                if ra > rb || (ra == rb && a < b) {
                    (a, b)
                } else {
                    (b, a)
                }
            }
        };
        pairs.push(PreferencePair::new(x, chosen, rejected));
    }
    Ok(PreferenceDataset {
        pairs,
        env_fingerprint: env.fingerprint(),
        seed,
        labeling,
    })
}

/// Returns a copy of the dataset with both oracle reward fields populated.
pub fn attach_oracle_rewards(
    dataset: &PreferenceDataset,
    env: &Environment,
    mode: OracleMode,
) -> Result<PreferenceDataset> {
    dataset.check_env(env)?;
    let mut out = dataset.clone();
    for pair in &mut out.pairs {
        pair.validate(env)?;
        match mode {
            OracleMode::Env => {
                pair.oracle_reward_chosen = Some(env.reward(pair.prompt, pair.chosen));
                pair.oracle_reward_rejected = Some(env.reward(pair.prompt, pair.rejected));
            }
            OracleMode::Convention => {
                pair.oracle_reward_chosen = Some(0.5);
                pair.oracle_reward_rejected = Some(-0.5);
            }
        }
    }
    Ok(out)
}

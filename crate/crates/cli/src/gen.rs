//! Synthetic environment generation: seeded reward and reference-policy laws.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use prefcal_core::Environment;

use crate::error::{CliError, CliResult};

/// Reward-table law.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardLaw {
    /// I.i.d. gaussian rewards, `scale * N(0,1)`.
    Gaussian { scale: f64, seed: u64 },
    /// Two responses per prompt at `+gap/2`, the rest jittered around
    /// `-gap/2`; a bimodal target for mode-seeking demonstrations.
    Bimodal { gap: f64, seed: u64 },
    /// Explicit table, one row per prompt.
    Table { values: Vec<Vec<f64>> },
}

/// Reference-policy law (always serialized as logits downstream).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefLaw {
    Uniform,
    GaussianLogits { scale: f64, seed: u64 },
}

/// Full environment-generation spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvGenSpec {
    pub prompts: usize,
    pub responses: usize,
    pub reward_law: RewardLaw,
    pub ref_law: RefLaw,
}

pub fn generate_environment(spec: &EnvGenSpec) -> CliResult<Environment> {
    if spec.prompts < 1 {
        return Err(CliError::Config("need at least 1 prompt".into()));
    }
    if spec.responses < 2 {
        return Err(CliError::Config(
            "need at least 2 responses per prompt".into(),
        ));
    }
    let reward = match &spec.reward_law {
        RewardLaw::Gaussian { scale, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..spec.prompts)
                .map(|_| {
                    (0..spec.responses)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            scale * z
                        })
                        .collect()
                })
                .collect()
        }
        RewardLaw::Bimodal { gap, seed } => {
            if *gap <= 0.0 {
                return Err(CliError::Config("bimodal gap must be > 0".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..spec.prompts)
                .map(|_| {
                    let a = rng.random_range(0..spec.responses);
                    let mut b = rng.random_range(0..spec.responses);
                    while b == a {
                        b = rng.random_range(0..spec.responses);
                    }
                    (0..spec.responses)
                        .map(|y| {
                            if y == a || y == b {
                                gap / 2.0
                            } else {
                                -gap / 2.0 + rng.random_range(-0.1..0.1) * gap.min(1.0)
                            }
                        })
                        .collect()
                })
                .collect()
        }
        RewardLaw::Table { values } => {
            if values.len() != spec.prompts || values.iter().any(|row| row.len() != spec.responses)
            {
                return Err(CliError::Config(
                    "reward table shape does not match prompts/responses".into(),
                ));
            }
            values.clone()
        }
    };
    let ref_logits = match &spec.ref_law {
        RefLaw::Uniform => (0..spec.prompts)
            .map(|_| vec![0.0; spec.responses])
            .collect(),
        RefLaw::GaussianLogits { scale, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..spec.prompts)
                .map(|_| {
                    (0..spec.responses)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            scale * z
                        })
                        .collect()
                })
                .collect()
        }
    };
    Ok(Environment::new(reward, ref_logits)?)
}

//! Environments, tabular policies and the closed-form optimal policy.
//!
//! An [`Environment`] is a finite prompt/response universe with a ground-truth
//! reward table and a full-support reference policy. A [`PolicyParams`] is one
//! logit vector per prompt; the policy it induces is the row-wise softmax.
//! Because everything is finite, the KL-regularized optimum
//! `pi*(y|x) ∝ pi_ref(y|x) * exp(r(x,y)/beta)` and its partition function are
//! computable exactly.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::math::{log_softmax, logsumexp};

/// Smallest reference probability accepted at construction time. Log ratios
/// against `pi_ref` must stay finite.
pub const MIN_REF_PROB: f64 = 1e-9;

/// A probability vector over one prompt's responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    /// Validates non-negativity and normalization (1e-12).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidInput("empty distribution".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidInput(
                "distribution entries must be finite and >= 0".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "distribution sums to {sum}, expected 1"
            )));
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total variation distance to another distribution of the same length.
    pub fn total_variation(&self, other: &Distribution) -> f64 {
        0.5 * self
            .0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Serialized environment: rewards plus reference-policy logits.
///
/// Probabilities are stored as logits so a round trip can never lose the
/// full-support property.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvironmentFile {
    pub prompts: usize,
    pub responses: Vec<usize>,
    pub reward: Vec<Vec<f64>>,
    pub ref_logits: Vec<Vec<f64>>,
}

/// Finite prompt/response universe with ground-truth rewards and a
/// full-support reference policy.
#[derive(Debug, Clone)]
pub struct Environment {
    reward: Vec<Vec<f64>>,
    ref_logits: Vec<Vec<f64>>,
    /// Normalized log pi_ref, derived once from `ref_logits`.
    ref_log_probs: Vec<Vec<f64>>,
}

impl Environment {
    /// Builds an environment from a reward table and reference-policy logits.
    ///
    /// Every prompt needs at least two responses, rewards must be finite and
    /// `softmax(ref_logits)` must keep every response above [`MIN_REF_PROB`].
    pub fn new(reward: Vec<Vec<f64>>, ref_logits: Vec<Vec<f64>>) -> Result<Self> {
        if reward.is_empty() {
            return Err(Error::InvalidEnvironment("no prompts".into()));
        }
        if reward.len() != ref_logits.len() {
            return Err(Error::InvalidEnvironment(format!(
                "reward has {} prompts but ref_logits has {}",
                reward.len(),
                ref_logits.len()
            )));
        }
        let mut ref_log_probs = Vec::with_capacity(reward.len());
        for (x, (r_row, l_row)) in reward.iter().zip(ref_logits.iter()).enumerate() {
            if r_row.len() < 2 {
                return Err(Error::InvalidEnvironment(format!(
                    "prompt {x} has {} responses, need at least 2",
                    r_row.len()
                )));
            }
            if r_row.len() != l_row.len() {
                return Err(Error::InvalidEnvironment(format!(
                    "prompt {x}: reward row has {} entries, ref_logits row has {}",
                    r_row.len(),
                    l_row.len()
                )));
            }
            if r_row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidEnvironment(format!(
                    "prompt {x}: non-finite reward entry"
                )));
            }
            if l_row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidEnvironment(format!(
                    "prompt {x}: non-finite ref logit"
                )));
            }
            let log_probs = log_softmax(l_row);
            if log_probs.iter().any(|lp| lp.exp() < MIN_REF_PROB) {
                return Err(Error::InvalidEnvironment(format!(
                    "prompt {x}: reference probability below {MIN_REF_PROB}"
                )));
            }
            ref_log_probs.push(log_probs);
        }
        Ok(Self {
            reward,
            ref_logits,
            ref_log_probs,
        })
    }

    pub fn from_file_struct(file: EnvironmentFile) -> Result<Self> {
        if file.prompts != file.reward.len() || file.prompts != file.ref_logits.len() {
            return Err(Error::InvalidEnvironment(
                "prompt count does not match table shapes".into(),
            ));
        }
        let shapes: Vec<usize> = file.reward.iter().map(|r| r.len()).collect();
        if shapes != file.responses {
            return Err(Error::InvalidEnvironment(
                "per-prompt response counts do not match reward table".into(),
            ));
        }
        Self::new(file.reward, file.ref_logits)
    }

    pub fn to_file_struct(&self) -> EnvironmentFile {
        EnvironmentFile {
            prompts: self.num_prompts(),
            responses: (0..self.num_prompts())
                .map(|x| self.num_responses(x))
                .collect(),
            reward: self.reward.clone(),
            ref_logits: self.ref_logits.clone(),
        }
    }

    pub fn load_json(text: &str) -> Result<Self> {
        let file: EnvironmentFile = serde_json::from_str(text)?;
        Self::from_file_struct(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_struct()).expect("environment serializes")
    }

    /// Content hash of the canonical serialized form; datasets carry it so a
    /// dataset can only be used with the environment that generated it.
    pub fn fingerprint(&self) -> String {
        let canonical =
            serde_json::to_string(&self.to_file_struct()).expect("environment serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn num_prompts(&self) -> usize {
        self.reward.len()
    }

    pub fn num_responses(&self, prompt: usize) -> usize {
        self.reward[prompt].len()
    }

    pub fn reward(&self, prompt: usize, response: usize) -> f64 {
        self.reward[prompt][response]
    }

    pub fn reward_row(&self, prompt: usize) -> &[f64] {
        &self.reward[prompt]
    }

    pub fn ref_log_prob(&self, prompt: usize, response: usize) -> f64 {
        self.ref_log_probs[prompt][response]
    }

    pub fn ref_log_probs(&self, prompt: usize) -> &[f64] {
        &self.ref_log_probs[prompt]
    }

    pub fn ref_prob(&self, prompt: usize, response: usize) -> f64 {
        self.ref_log_probs[prompt][response].exp()
    }

    pub fn check_prompt(&self, prompt: usize) -> Result<()> {
        if prompt >= self.num_prompts() {
            return Err(Error::InvalidInput(format!(
                "prompt {prompt} out of range (have {})",
                self.num_prompts()
            )));
        }
        Ok(())
    }

    pub fn check_pair_indices(&self, prompt: usize, response: usize) -> Result<()> {
        self.check_prompt(prompt)?;
        if response >= self.num_responses(prompt) {
            return Err(Error::InvalidInput(format!(
                "response {response} out of range for prompt {prompt} (have {})",
                self.num_responses(prompt)
            )));
        }
        Ok(())
    }
}

/// Per-prompt logit vectors parameterizing the tabular softmax policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub logits: Vec<Vec<f64>>,
}

impl PolicyParams {
    /// Validates shape against the environment and finiteness of all entries.
    pub fn new(logits: Vec<Vec<f64>>, env: &Environment) -> Result<Self> {
        if logits.len() != env.num_prompts() {
            return Err(Error::InvalidInput(format!(
                "policy has {} prompts, environment has {}",
                logits.len(),
                env.num_prompts()
            )));
        }
        for (x, row) in logits.iter().enumerate() {
            if row.len() != env.num_responses(x) {
                return Err(Error::InvalidInput(format!(
                    "policy prompt {x} has {} logits, environment has {} responses",
                    row.len(),
                    env.num_responses(x)
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "policy prompt {x}: non-finite logit"
                )));
            }
        }
        Ok(Self { logits })
    }

    /// All-zero logits; the induced policy is uniform per prompt.
    pub fn zeros(env: &Environment) -> Self {
        Self {
            logits: (0..env.num_prompts())
                .map(|x| vec![0.0; env.num_responses(x)])
                .collect(),
        }
    }

    /// Logits equal to the reference log-probabilities, so that
    /// `pi_theta = pi_ref` and every implicit reward starts at exactly 0.
    pub fn copy_of_ref(env: &Environment) -> Self {
        Self {
            logits: (0..env.num_prompts())
                .map(|x| env.ref_log_probs(x).to_vec())
                .collect(),
        }
    }

    /// Normalized log pi_theta for one prompt.
    pub fn log_probs(&self, prompt: usize) -> Vec<f64> {
        log_softmax(&self.logits[prompt])
    }

    /// Normalized log pi_theta for every prompt.
    pub fn log_probs_all(&self) -> Vec<Vec<f64>> {
        self.logits.iter().map(|row| log_softmax(row)).collect()
    }

    pub fn num_prompts(&self) -> usize {
        self.logits.len()
    }
}

/// Table of partial derivatives with the same shape as [`PolicyParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradTable {
    pub rows: Vec<Vec<f64>>,
}

impl GradTable {
    pub fn zeros_like(policy: &PolicyParams) -> Self {
        Self {
            rows: policy.logits.iter().map(|r| vec![0.0; r.len()]).collect(),
        }
    }

    pub fn zeros_for(env: &Environment) -> Self {
        Self {
            rows: (0..env.num_prompts())
                .map(|x| vec![0.0; env.num_responses(x)])
                .collect(),
        }
    }

    /// `self += scale * other`, matching shapes required.
    pub fn add_scaled(&mut self, other: &GradTable, scale: f64) {
        for (mine, theirs) in self.rows.iter_mut().zip(other.rows.iter()) {
            for (m, t) in mine.iter_mut().zip(theirs.iter()) {
                *m += scale * t;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for row in &mut self.rows {
            for v in row.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn inf_norm(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .all(|v| v.is_finite())
    }
}

/// Stable softmax of a logit vector.
pub fn softmax(logits: &[f64]) -> Result<Distribution> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("softmax of empty vector".into()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("softmax of non-finite input".into()));
    }
    let probs: Vec<f64> = log_softmax(logits).iter().map(|lp| lp.exp()).collect();
    // Renormalize away the last ulps so Distribution's 1e-12 check never trips.
    let sum: f64 = probs.iter().sum();
    Distribution::new(probs.iter().map(|p| p / sum).collect())
}

/// Implicit reward `log(pi_theta(y|x) / pi_ref(y|x))`.
pub fn implicit_reward(
    policy: &PolicyParams,
    env: &Environment,
    prompt: usize,
    response: usize,
) -> Result<f64> {
    env.check_pair_indices(prompt, response)?;
    let log_probs = policy.log_probs(prompt);
    Ok(log_probs[response] - env.ref_log_prob(prompt, response))
}

/// Preference score `h = r_hat(y_w) - r_hat(y_l)` of a response pair.
pub fn preference_score(
    policy: &PolicyParams,
    env: &Environment,
    prompt: usize,
    chosen: usize,
    rejected: usize,
) -> Result<f64> {
    if chosen == rejected {
        return Err(Error::InvalidInput(format!(
            "preference score needs distinct responses, got {chosen} twice"
        )));
    }
    env.check_pair_indices(prompt, chosen)?;
    env.check_pair_indices(prompt, rejected)?;
    let log_probs = policy.log_probs(prompt);
    let rw = log_probs[chosen] - env.ref_log_prob(prompt, chosen);
    let rl = log_probs[rejected] - env.ref_log_prob(prompt, rejected);
    Ok(rw - rl)
}

/// Log-weights `log pi_ref(y|x) + r(x,y)/beta` of the tilted reference
/// policy; softmax of these is `pi*`, log-sum-exp is `log Z(x)`.
fn tilted_log_weights(env: &Environment, beta: f64, prompt: usize) -> Result<Vec<f64>> {
    if beta <= 0.0 || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "beta must be > 0, got {beta}"
        )));
    }
    env.check_prompt(prompt)?;
    Ok(env
        .ref_log_probs(prompt)
        .iter()
        .zip(env.reward_row(prompt).iter())
        .map(|(lp, r)| lp + r / beta)
        .collect())
}

/// Closed-form optimum of the KL-regularized objective:
/// `pi*(y|x) ∝ pi_ref(y|x) * exp(r(x,y)/beta)`.
pub fn optimal_policy(env: &Environment, beta: f64, prompt: usize) -> Result<Distribution> {
    let weights = tilted_log_weights(env, beta, prompt)?;
    softmax(&weights)
}

/// `log Z(x)` with `Z(x) = sum_y pi_ref(y|x) exp(r(x,y)/beta)`.
pub fn log_partition(env: &Environment, beta: f64, prompt: usize) -> Result<f64> {
    let weights = tilted_log_weights(env, beta, prompt)?;
    Ok(logsumexp(&weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_response_env() -> Environment {
        // pi_ref = [0.8, 0.2] on one prompt, rewards [1, 0].
        Environment::new(vec![vec![1.0, 0.0]], vec![vec![0.8f64.ln(), 0.2f64.ln()]]).unwrap()
    }

    fn uniform_env(rewards: Vec<Vec<f64>>) -> Environment {
        let logits = rewards.iter().map(|r| vec![0.0; r.len()]).collect();
        Environment::new(rewards, logits).unwrap()
    }

    #[test]
    fn softmax_symmetry_and_ratio() {
        let d = softmax(&[0.0, 0.0]).unwrap();
        assert_eq!(d.probs(), &[0.5, 0.5]);
        let d = softmax(&[2.0f64.ln(), 0.0]).unwrap();
        assert!((d.probs()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.probs()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_direct_evaluation() {
        // Frozen from a high-precision evaluation of exp/sum.
        let d = softmax(&[1.0, 2.0, 3.0]).unwrap();
        let expected = [0.09003057317038046, 0.24472847105479765, 0.6652409557748219];
        for (p, e) in d.probs().iter().zip(expected.iter()) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(matches!(
            softmax(&[f64::NAN, 0.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(softmax(&[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn softmax_shift_invariance() {
        let base = softmax(&[0.3, -1.0, 2.2]).unwrap();
        let shifted = softmax(&[0.3 + 7.5, -1.0 + 7.5, 2.2 + 7.5]).unwrap();
        for (a, b) in base.probs().iter().zip(shifted.probs().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn implicit_reward_identity_policy_is_zero() {
        let env = two_response_env();
        let policy = PolicyParams::copy_of_ref(&env);
        assert!(implicit_reward(&policy, &env, 0, 0).unwrap().abs() < 1e-14);
        assert!(implicit_reward(&policy, &env, 0, 1).unwrap().abs() < 1e-14);
    }

    #[test]
    fn implicit_reward_analytic_ratios() {
        // pi_theta = [0.8, 0.2] against pi_ref = [0.4, 0.6].
        let env =
            Environment::new(vec![vec![0.0, 0.0]], vec![vec![0.4f64.ln(), 0.6f64.ln()]]).unwrap();
        let policy = PolicyParams::new(vec![vec![0.8f64.ln(), 0.2f64.ln()]], &env).unwrap();
        let ln2 = 2.0f64.ln();
        assert!((implicit_reward(&policy, &env, 0, 0).unwrap() - ln2).abs() < 1e-12);
        // pi_theta = 0.3 vs pi_ref = 0.6 -> -ln 2.
        let policy = PolicyParams::new(vec![vec![0.7f64.ln(), 0.3f64.ln()]], &env).unwrap();
        assert!((implicit_reward(&policy, &env, 0, 1).unwrap() + ln2).abs() < 1e-12);
    }

    #[test]
    fn implicit_reward_index_out_of_range() {
        let env = two_response_env();
        let policy = PolicyParams::zeros(&env);
        assert!(matches!(
            implicit_reward(&policy, &env, 0, 5),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            implicit_reward(&policy, &env, 3, 0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn preference_score_antisymmetric() {
        let env = uniform_env(vec![vec![0.4, -0.3, 1.1]]);
        let policy = PolicyParams::new(vec![vec![0.5, -0.2, 0.9]], &env).unwrap();
        let fwd = preference_score(&policy, &env, 0, 0, 2).unwrap();
        let bwd = preference_score(&policy, &env, 0, 2, 0).unwrap();
        assert_eq!(fwd, -bwd);
    }

    #[test]
    fn preference_score_identity_policy_zero_and_degenerate_pair() {
        let env = uniform_env(vec![vec![1.0, 2.0]]);
        let policy = PolicyParams::copy_of_ref(&env);
        assert!(preference_score(&policy, &env, 0, 0, 1).unwrap().abs() < 1e-14);
        assert!(matches!(
            preference_score(&policy, &env, 0, 1, 1),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn preference_score_matches_second_code_path() {
        // Recompute from raw logits via naive normalization.
        let env = Environment::new(
            vec![vec![0.0, 0.0, 0.0, 0.0]],
            vec![vec![0.1, -0.4, 0.7, 0.2]],
        )
        .unwrap();
        let logits = vec![vec![1.3, 0.4, -0.6, 2.0]];
        let policy = PolicyParams::new(logits.clone(), &env).unwrap();
        let naive_log_prob = |row: &[f64], i: usize| {
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            (row[i].exp() / z).ln()
        };
        let ref_row = [0.1, -0.4, 0.7, 0.2];
        let expect = (naive_log_prob(&logits[0], 1) - naive_log_prob(&ref_row, 1))
            - (naive_log_prob(&logits[0], 3) - naive_log_prob(&ref_row, 3));
        let got = preference_score(&policy, &env, 0, 1, 3).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn optimal_policy_constant_reward_is_ref() {
        let env = Environment::new(vec![vec![3.0, 3.0, 3.0]], vec![vec![0.5, -0.3, 1.0]]).unwrap();
        let opt = optimal_policy(&env, 0.7, 0).unwrap();
        for (p, lp) in opt.probs().iter().zip(env.ref_log_probs(0).iter()) {
            assert!((p - lp.exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn optimal_policy_two_point_sigmoid() {
        let env = uniform_env(vec![vec![1.0, 0.0]]);
        let opt = optimal_policy(&env, 1.0, 0).unwrap();
        assert!((opt.probs()[0] - 0.7310585786300049).abs() < 1e-12);
        assert!((opt.probs()[1] - 0.2689414213699951).abs() < 1e-12);
    }

    #[test]
    fn optimal_policy_huge_beta_approaches_ref() {
        let env = Environment::new(vec![vec![2.0, -1.0, 0.3]], vec![vec![0.9, 0.0, -0.4]]).unwrap();
        let opt = optimal_policy(&env, 1e6, 0).unwrap();
        let ref_dist =
            Distribution::new(env.ref_log_probs(0).iter().map(|lp| lp.exp()).collect()).unwrap();
        assert!(opt.total_variation(&ref_dist) < 1e-5);
    }

    #[test]
    fn optimal_policy_rejects_bad_beta() {
        let env = two_response_env();
        assert!(matches!(
            optimal_policy(&env, 0.0, 0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            log_partition(&env, -1.0, 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn log_partition_values() {
        let env = uniform_env(vec![vec![0.0, 0.0]]);
        assert!(log_partition(&env, 0.5, 0).unwrap().abs() < 1e-14);
        let env = uniform_env(vec![vec![1.0, 0.0]]);
        assert!((log_partition(&env, 1.0, 0).unwrap() - 0.6201145069582775).abs() < 1e-12);
        // Constant reward c -> log Z = c / beta.
        let env = uniform_env(vec![vec![2.5, 2.5, 2.5]]);
        assert!((log_partition(&env, 0.5, 0).unwrap() - 5.0).abs() < 1e-10);
    }

    #[test]
    fn reward_shift_invariance() {
        let reward = vec![vec![0.7, -0.2, 1.4]];
        let logits = vec![vec![0.2, 0.1, -0.5]];
        let env = Environment::new(reward.clone(), logits.clone()).unwrap();
        let shifted_reward = vec![reward[0].iter().map(|r| r + 3.0).collect::<Vec<_>>()];
        let shifted = Environment::new(shifted_reward, logits).unwrap();
        let beta = 0.4;
        let a = optimal_policy(&env, beta, 0).unwrap();
        let b = optimal_policy(&shifted, beta, 0).unwrap();
        for (pa, pb) in a.probs().iter().zip(b.probs().iter()) {
            assert!((pa - pb).abs() < 1e-10);
        }
        let za = log_partition(&env, beta, 0).unwrap();
        let zb = log_partition(&shifted, beta, 0).unwrap();
        assert!((zb - za - 3.0 / beta).abs() < 1e-10);
    }

    #[test]
    fn environment_validation() {
        // Single-response prompt rejected.
        assert!(matches!(
            Environment::new(vec![vec![1.0]], vec![vec![0.0]]),
            Err(Error::InvalidEnvironment(_))
        ));
        // Non-finite reward rejected.
        assert!(matches!(
            Environment::new(vec![vec![f64::INFINITY, 0.0]], vec![vec![0.0, 0.0]]),
            Err(Error::InvalidEnvironment(_))
        ));
        // Reference support floor enforced: logit gap of 50 underflows 1e-9.
        assert!(matches!(
            Environment::new(vec![vec![0.0, 0.0]], vec![vec![50.0, 0.0]]),
            Err(Error::InvalidEnvironment(_))
        ));
    }

    #[test]
    fn fingerprint_stable_across_round_trip() {
        let env = two_response_env();
        let json = env.to_json();
        let reloaded = Environment::load_json(&json).unwrap();
        assert_eq!(env.fingerprint(), reloaded.fingerprint());
    }
}

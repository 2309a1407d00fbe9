//! Exact population quantities over one prompt's response set.
//!
//! Everything here is a finite sum over responses computed in log-space; no
//! Monte Carlo. These are the ground-truth quantities the loss family is
//! checked against:
//!
//! * forward KL `D[pi* || pi_theta]` and reverse KL `D[pi_theta || pi*]`
//! * the weighted-MLE loss `-E_ref[w log pi_theta]`
//! * the population calibrated loss: contrastive first term plus
//!   `E_ref[(log(pi_theta/pi_ref) - r/beta)^2]`
//! * the contrast weights `w = exp(r/beta)/Z` and
//!   `w_hat = (pi_theta/pi_ref) / E_ref[pi_theta/pi_ref]`
//!
//! The first term is computable by two independent routes (the defining
//! formula, and `forward_kl - D[pi* || pi_ref]`) and the crate's verification
//! suites cross-check them. The raw bound `reverse_kl <= population loss`
//! drops the theta-independent constant `-D[pi* || pi_ref] <= 0` and admits
//! counterexamples, so [`theorem2_diagnostic`] reports both the raw gap and
//! the identity-corrected gap without asserting either.

use serde::{Deserialize, Serialize};

use crate::data::PreferencePair;
use crate::env::{Environment, GradTable, PolicyParams};
use crate::error::{Error, Result};
use crate::math::{log_sigmoid, log_softmax, logsumexp, sigmoid};

/// All per-prompt population quantities in one record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationReport {
    pub prompt: usize,
    pub forward_kl: f64,
    pub reverse_kl: f64,
    pub mle_loss: f64,
    pub caldpo_population_loss: f64,
    pub first_term: f64,
    pub calibration_term: f64,
    pub log_partition: f64,
    /// `caldpo_population_loss - reverse_kl`; can be negative.
    pub theorem2_gap_raw: f64,
    /// `(forward_kl + calibration_term) - reverse_kl`.
    pub theorem2_gap_corrected: f64,
}

/// Ground-truth and policy-ratio contrast weights over one prompt.
#[derive(Debug, Clone)]
pub struct ContrastWeights {
    pub w: Vec<f64>,
    pub w_hat: Vec<f64>,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "beta must be > 0, got {beta}"
        )));
    }
    Ok(())
}

/// Normalized `log pi*(.|x)` = log-softmax of `log pi_ref + r/beta`.
pub fn star_log_probs(env: &Environment, beta: f64, prompt: usize) -> Result<Vec<f64>> {
    check_beta(beta)?;
    env.check_prompt(prompt)?;
    let weights: Vec<f64> = env
        .ref_log_probs(prompt)
        .iter()
        .zip(env.reward_row(prompt).iter())
        .map(|(lp, r)| lp + r / beta)
        .collect();
    Ok(log_softmax(&weights))
}

fn kl_from_log_probs(log_p: &[f64], log_q: &[f64]) -> f64 {
    log_p
        .iter()
        .zip(log_q.iter())
        .map(|(lp, lq)| lp.exp() * (lp - lq))
        .sum()
}

/// Forward KL `D[pi*(.|x) || pi_theta(.|x)]`.
pub fn forward_kl(
    env: &Environment,
    beta: f64,
    policy: &PolicyParams,
    prompt: usize,
) -> Result<f64> {
    let star = star_log_probs(env, beta, prompt)?;
    Ok(kl_from_log_probs(&star, &policy.log_probs(prompt)))
}

/// Reverse KL `D[pi_theta(.|x) || pi*(.|x)]`.
pub fn reverse_kl(
    env: &Environment,
    beta: f64,
    policy: &PolicyParams,
    prompt: usize,
) -> Result<f64> {
    let star = star_log_probs(env, beta, prompt)?;
    Ok(kl_from_log_probs(&policy.log_probs(prompt), &star))
}

/// KL of the policy to the reference, `D[pi_theta || pi_ref]`.
pub fn kl_policy_to_ref(env: &Environment, policy: &PolicyParams, prompt: usize) -> Result<f64> {
    env.check_prompt(prompt)?;
    Ok(kl_from_log_probs(
        &policy.log_probs(prompt),
        env.ref_log_probs(prompt),
    ))
}

/// The theta-independent constant `D[pi*(.|x) || pi_ref(.|x)]`.
pub fn kl_star_to_ref(env: &Environment, beta: f64, prompt: usize) -> Result<f64> {
    let star = star_log_probs(env, beta, prompt)?;
    Ok(kl_from_log_probs(&star, env.ref_log_probs(prompt)))
}

/// Expected ground-truth reward under the policy, `E_{pi_theta}[r]`.
pub fn expected_reward(env: &Environment, policy: &PolicyParams, prompt: usize) -> Result<f64> {
    env.check_prompt(prompt)?;
    Ok(policy
        .log_probs(prompt)
        .iter()
        .zip(env.reward_row(prompt).iter())
        .map(|(lp, r)| lp.exp() * r)
        .sum())
}

/// Weighted maximum-likelihood loss `-E_ref[w(x,y) log pi_theta(y|x)]`,
/// evaluated as the literal reference-weighted sum.
pub fn population_mle_loss(
    env: &Environment,
    beta: f64,
    policy: &PolicyParams,
    prompt: usize,
) -> Result<f64> {
    check_beta(beta)?;
    env.check_prompt(prompt)?;
    let log_z = crate::env::log_partition(env, beta, prompt)?;
    let log_probs = policy.log_probs(prompt);
    Ok(-env
        .ref_log_probs(prompt)
        .iter()
        .zip(env.reward_row(prompt).iter())
        .zip(log_probs.iter())
        .map(|((lp_ref, r), lp)| lp_ref.exp() * (r / beta - log_z).exp() * lp)
        .sum::<f64>())
}

/// Contrast weights `w = exp(r/beta)/Z` and
/// `w_hat = (pi_theta/pi_ref)/E_ref[pi_theta/pi_ref]`.
pub fn contrast_weights(
    env: &Environment,
    beta: f64,
    policy: &PolicyParams,
    prompt: usize,
) -> Result<ContrastWeights> {
    check_beta(beta)?;
    env.check_prompt(prompt)?;
    let log_z = crate::env::log_partition(env, beta, prompt)?;
    let w: Vec<f64> = env
        .reward_row(prompt)
        .iter()
        .map(|r| (r / beta - log_z).exp())
        .collect();
    let log_probs = policy.log_probs(prompt);
    let log_ratio: Vec<f64> = log_probs
        .iter()
        .zip(env.ref_log_probs(prompt).iter())
        .map(|(lp, lr)| lp - lr)
        .collect();
    // E_ref[pi_theta/pi_ref] in log space: logsumexp(log pi_ref + log ratio).
    let log_norm = logsumexp(
        &log_ratio
            .iter()
            .zip(env.ref_log_probs(prompt).iter())
            .map(|(lr, lp)| lr + lp)
            .collect::<Vec<_>>(),
    );
    let w_hat: Vec<f64> = log_ratio.iter().map(|lr| (lr - log_norm).exp()).collect();
    Ok(ContrastWeights { w, w_hat })
}

/// First term of the population calibrated loss by its defining formula:
/// `-E_ref[w log(w_hat_raw / E_ref[w_hat_raw])]`.
pub fn first_term_direct(
    env: &Environment,
    beta: f64,
    policy: &PolicyParams,
    prompt: usize,
) -> Result<f64> {
    check_beta(beta)?;
    env.check_prompt(prompt)?;
    let log_z = crate::env::log_partition(env, beta, prompt)?;
    let log_probs = policy.log_probs(prompt);
    let ref_log_probs = env.ref_log_probs(prompt);
    let log_ratio: Vec<f64> = log_probs
        .iter()
        .zip(ref_log_probs.iter())
        .map(|(lp, lr)| lp - lr)
        .collect();
    let log_norm = logsumexp(
        &log_ratio
            .iter()
            .zip(ref_log_probs.iter())
            .map(|(lr, lp)| lr + lp)
            .collect::<Vec<_>>(),
    );
    Ok(-ref_log_probs
        .iter()
        .zip(env.reward_row(prompt).iter())
        .zip(log_ratio.iter())
        .map(|((lp_ref, r), lr)| lp_ref.exp() * (r / beta - log_z).exp() * (lr - log_norm))
        .sum::<f64>())
}

/// First term via the identity `forward_kl - D[pi* || pi_ref]`; an
/// independent route used to cross-check [`first_term_direct`].
pub fn first_term_via_identity(
    env: &Environment,
    beta: f64,
    policy: &PolicyParams,
    prompt: usize,
) -> Result<f64> {
    Ok(forward_kl(env, beta, policy, prompt)? - kl_star_to_ref(env, beta, prompt)?)
}

/// Calibration term `E_ref[(log(pi_theta/pi_ref) - r/beta)^2]`.
pub fn calibration_term(
    env: &Environment,
    beta: f64,
    policy: &PolicyParams,
    prompt: usize,
) -> Result<f64> {
    check_beta(beta)?;
    env.check_prompt(prompt)?;
    let log_probs = policy.log_probs(prompt);
    Ok(env
        .ref_log_probs(prompt)
        .iter()
        .zip(env.reward_row(prompt).iter())
        .zip(log_probs.iter())
        .map(|((lp_ref, r), lp)| {
            let resid = (lp - lp_ref) - r / beta;
            lp_ref.exp() * resid * resid
        })
        .sum())
}

/// Fills the full [`PopulationReport`] for one prompt.
pub fn population_caldpo_loss(
    env: &Environment,
    beta: f64,
    policy: &PolicyParams,
    prompt: usize,
) -> Result<PopulationReport> {
    let first_term = first_term_direct(env, beta, policy, prompt)?;
    let fkl = forward_kl(env, beta, policy, prompt)?;
    let rkl = reverse_kl(env, beta, policy, prompt)?;
    let cal = calibration_term(env, beta, policy, prompt)?;
    let mle = population_mle_loss(env, beta, policy, prompt)?;
    let log_z = crate::env::log_partition(env, beta, prompt)?;
    debug_assert!(
        (first_term - (fkl - kl_star_to_ref(env, beta, prompt)?)).abs()
            <= 1e-9 * (1.0 + first_term.abs()),
        "first-term routes disagree"
    );
    let total = first_term + cal;
    Ok(PopulationReport {
        prompt,
        forward_kl: fkl,
        reverse_kl: rkl,
        mle_loss: mle,
        caldpo_population_loss: total,
        first_term,
        calibration_term: cal,
        log_partition: log_z,
        theorem2_gap_raw: total - rkl,
        theorem2_gap_corrected: (fkl + cal) - rkl,
    })
}

/// Gradient of the first term in its contrastive form,
/// `grad = -E_ref[(w - w_hat) grad log pi_theta]`, expanded through the
/// softmax. Only the prompt's row of the returned table is nonzero.
pub fn theorem1_gradient(
    env: &Environment,
    beta: f64,
    policy: &PolicyParams,
    prompt: usize,
) -> Result<GradTable> {
    let weights = contrast_weights(env, beta, policy, prompt)?;
    let log_probs = policy.log_probs(prompt);
    let probs: Vec<f64> = log_probs.iter().map(|lp| lp.exp()).collect();
    let ref_probs: Vec<f64> = env
        .ref_log_probs(prompt)
        .iter()
        .map(|lp| lp.exp())
        .collect();
    // sum_y pi_ref(y) (w - w_hat)(y); analytically zero, kept numerical.
    let total: f64 = ref_probs
        .iter()
        .zip(weights.w.iter().zip(weights.w_hat.iter()))
        .map(|(pr, (w, wh))| pr * (w - wh))
        .sum();
    let mut grad = GradTable::zeros_for(env);
    let row = &mut grad.rows[prompt];
    for j in 0..row.len() {
        row[j] = -(ref_probs[j] * (weights.w[j] - weights.w_hat[j]) - probs[j] * total);
    }
    Ok(grad)
}

/// Gradient of the first term by direct differentiation of its defining
/// formula, without the contrast-weight grouping. Second analytic route for
/// the gradient identity check.
pub fn first_term_grad_direct(
    env: &Environment,
    beta: f64,
    policy: &PolicyParams,
    prompt: usize,
) -> Result<GradTable> {
    check_beta(beta)?;
    env.check_prompt(prompt)?;
    let log_z = crate::env::log_partition(env, beta, prompt)?;
    let log_probs = policy.log_probs(prompt);
    let probs: Vec<f64> = log_probs.iter().map(|lp| lp.exp()).collect();
    let ref_probs: Vec<f64> = env
        .ref_log_probs(prompt)
        .iter()
        .map(|lp| lp.exp())
        .collect();
    let w: Vec<f64> = env
        .reward_row(prompt)
        .iter()
        .map(|r| (r / beta - log_z).exp())
        .collect();
    let norm: f64 = probs.iter().sum(); // E_ref[pi_theta/pi_ref], kept numerical
    let w_mass: f64 = ref_probs.iter().zip(w.iter()).map(|(p, w)| p * w).sum();
    let mut grad = GradTable::zeros_for(env);
    let row = &mut grad.rows[prompt];
    for j in 0..row.len() {
        // d/dtheta_j of -sum_y pi_ref w [log pi_theta(y) - log pi_ref(y) - log norm]
        let d_log_pi = ref_probs[j] * w[j] - probs[j] * w_mass;
        let d_log_norm: f64 = (0..row.len())
            .map(|y| probs[y] * ((y == j) as usize as f64 - probs[j]))
            .sum::<f64>()
            / norm;
        row[j] = -(d_log_pi - w_mass * d_log_norm);
    }
    Ok(grad)
}

/// Gradient of [`population_mle_loss`]; reduces to `pi_theta - pi*` on the
/// prompt's row.
pub fn population_mle_grad(
    env: &Environment,
    beta: f64,
    policy: &PolicyParams,
    prompt: usize,
) -> Result<GradTable> {
    let star = star_log_probs(env, beta, prompt)?;
    let log_probs = policy.log_probs(prompt);
    let mut grad = GradTable::zeros_for(env);
    let row = &mut grad.rows[prompt];
    for (g, (lp, ls)) in row.iter_mut().zip(log_probs.iter().zip(star.iter())) {
        *g = lp.exp() - ls.exp();
    }
    Ok(grad)
}

/// Gradient of the population calibration term.
pub fn calibration_term_grad(
    env: &Environment,
    beta: f64,
    policy: &PolicyParams,
    prompt: usize,
) -> Result<GradTable> {
    check_beta(beta)?;
    env.check_prompt(prompt)?;
    let log_probs = policy.log_probs(prompt);
    let probs: Vec<f64> = log_probs.iter().map(|lp| lp.exp()).collect();
    let ref_probs: Vec<f64> = env
        .ref_log_probs(prompt)
        .iter()
        .map(|lp| lp.exp())
        .collect();
    let resid: Vec<f64> = log_probs
        .iter()
        .zip(env.ref_log_probs(prompt).iter())
        .zip(env.reward_row(prompt).iter())
        .map(|((lp, lr), r)| (lp - lr) - r / beta)
        .collect();
    let weighted: f64 = ref_probs.iter().zip(resid.iter()).map(|(p, d)| p * d).sum();
    let mut grad = GradTable::zeros_for(env);
    let row = &mut grad.rows[prompt];
    for j in 0..row.len() {
        row[j] = 2.0 * (ref_probs[j] * resid[j] - probs[j] * weighted);
    }
    Ok(grad)
}

/// One prompt's row in the Theorem-2 diagnostic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Theorem2Row {
    pub prompt: usize,
    pub raw_gap: f64,
    pub corrected_gap: f64,
    /// The dropped constant `D[pi* || pi_ref]`.
    pub kl_star_ref: f64,
}

/// Signs, magnitudes and violation counts of both bound variants over all
/// prompts. Reporting only; nothing here asserts an inequality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub rows: Vec<Theorem2Row>,
    pub raw_violations: usize,
    pub corrected_violations: usize,
    pub tolerance: f64,
}

/// Compares `caldpo_population_loss` and `forward_kl + calibration_term`
/// against the reverse KL for every prompt.
pub fn theorem2_diagnostic(
    env: &Environment,
    beta: f64,
    policy: &PolicyParams,
) -> Result<Theorem2Report> {
    let tolerance = 1e-9;
    let mut rows = Vec::with_capacity(env.num_prompts());
    let mut raw_violations = 0;
    let mut corrected_violations = 0;
    for x in 0..env.num_prompts() {
        let report = population_caldpo_loss(env, beta, policy, x)?;
        let row = Theorem2Row {
            prompt: x,
            raw_gap: report.theorem2_gap_raw,
            corrected_gap: report.theorem2_gap_corrected,
            kl_star_ref: kl_star_to_ref(env, beta, x)?,
        };
        if row.raw_gap < -tolerance {
            raw_violations += 1;
        }
        if row.corrected_gap < -tolerance {
            corrected_violations += 1;
        }
        rows.push(row);
    }
    Ok(Theorem2Report {
        rows,
        raw_violations,
        corrected_violations,
        tolerance,
    })
}

/// Two-sample softmax-weighted estimate of the population calibrated loss
/// restricted to `{y_w, y_l}`: the contrastive part weighted by
/// `sigma(+-(r_w - r_l)/beta)` plus both calibration terms. Requires oracle
/// rewards on the pair. As `beta -> 0` the winning weight saturates to 1 and
/// the estimate converges to the calibrated pair loss with the same rewards.
pub fn empirical_population_estimate(
    env: &Environment,
    beta: f64,
    policy: &PolicyParams,
    pair: &PreferencePair,
) -> Result<f64> {
    check_beta(beta)?;
    pair.validate(env)?;
    let (rw, rl) = match (pair.oracle_reward_chosen, pair.oracle_reward_rejected) {
        (Some(rw), Some(rl)) => (rw, rl),
        _ => {
            return Err(Error::InvalidInput(
                "empirical population estimate needs oracle rewards on the pair".into(),
            ))
        }
    };
    let log_probs = policy.log_probs(pair.prompt);
    let r_hat_w = log_probs[pair.chosen] - env.ref_log_prob(pair.prompt, pair.chosen);
    let r_hat_l = log_probs[pair.rejected] - env.ref_log_prob(pair.prompt, pair.rejected);
    let h = r_hat_w - r_hat_l;
    // log(ratio_w / (ratio_w + ratio_l)) = log sigmoid(h), and symmetrically.
    let weight_w = sigmoid((rw - rl) / beta);
    let weight_l = sigmoid((rl - rw) / beta);
    let mut value = 0.0;
    if weight_w > 0.0 {
        value -= weight_w * log_sigmoid(h);
    }
    if weight_l > 0.0 {
        value -= weight_l * log_sigmoid(-h);
    }
    let dw = r_hat_w - rw / beta;
    let dl = r_hat_l - rl / beta;
    Ok(value + dw * dw + dl * dl)
}

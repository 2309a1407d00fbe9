//! Command implementations. Every output file goes through an atomic
//! write-temp-then-rename, carries no timestamps, and is byte-identical when
//! the command is rerun with identical inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use prefcal_core::fixtures;
use prefcal_core::population::{
    expected_reward, first_term_via_identity, kl_policy_to_ref, population_caldpo_loss,
};
use prefcal_core::trainer::{beta_sweep, fmt_f64, sweep_to_csv, train, TrainConfig};
use prefcal_core::verify::{random_instance, run_suite, SuiteName, VerificationSuiteResult};
use prefcal_core::{log_partition, Environment, LossSpec, Method, PolicyParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Write-temp-then-rename so partial files never land at the target path.
pub fn atomic_write(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn cmd_gen_env(spec: &crate::gen::EnvGenSpec, out: &Path) -> CliResult<()> {
    let env = crate::gen::generate_environment(spec)?;
    atomic_write(out, &env.to_json())?;
    eprintln!(
        "wrote environment {} ({} prompts, fingerprint {})",
        out.display(),
        env.num_prompts(),
        &env.fingerprint()[..16]
    );
    Ok(())
}

pub fn cmd_gen_data(
    env_path: &Path,
    n_pairs: usize,
    seed: u64,
    labeling: prefcal_core::Labeling,
    oracle: Option<prefcal_core::OracleMode>,
    out: &Path,
) -> CliResult<()> {
    let text = std::fs::read_to_string(env_path).map_err(|e| {
        CliError::Config(format!(
            "cannot read environment {}: {e}",
            env_path.display()
        ))
    })?;
    let env = Environment::load_json(&text)?;
    let mut dataset = prefcal_core::sample_dataset(&env, n_pairs, seed, labeling)?;
    if let Some(mode) = oracle {
        dataset = prefcal_core::attach_oracle_rewards(&dataset, &env, mode)?;
    }
    atomic_write(out, &dataset.to_ndjson())?;
    eprintln!("wrote dataset {} ({n_pairs} pairs)", out.display());
    Ok(())
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool_version: &'static str,
    config: &'a ExperimentConfig,
    env_fingerprint: String,
    dataset_pairs: Option<usize>,
    outputs: Vec<String>,
}

/// Per-prompt population report of the final policy plus pass flags for the
/// exact identities, one CSV row per prompt.
fn population_report_csv(env: &Environment, beta: f64, policy: &PolicyParams) -> CliResult<String> {
    let mut out = String::from(
        "prompt,forward_kl,reverse_kl,mle_loss,caldpo_population_loss,first_term,calibration_term,log_partition,theorem2_gap_raw,theorem2_gap_corrected,first_term_identity_ok,decomposition_ok,a1_identity_ok\n",
    );
    for x in 0..env.num_prompts() {
        let rep = population_caldpo_loss(env, beta, policy, x)?;
        let via = first_term_via_identity(env, beta, policy, x)?;
        let first_term_ok = (rep.first_term - via).abs() <= 1e-9 * (1.0 + via.abs());
        let decomposition_ok = (rep.caldpo_population_loss - rep.first_term - rep.calibration_term)
            .abs()
            <= 1e-10 * (1.0 + rep.caldpo_population_loss.abs());
        let lhs = beta * rep.reverse_kl - beta * log_partition(env, beta, x)?;
        let rhs = -(expected_reward(env, policy, x)? - beta * kl_policy_to_ref(env, policy, x)?);
        let a1_ok = (lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs());
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            rep.prompt,
            fmt_f64(rep.forward_kl),
            fmt_f64(rep.reverse_kl),
            fmt_f64(rep.mle_loss),
            fmt_f64(rep.caldpo_population_loss),
            fmt_f64(rep.first_term),
            fmt_f64(rep.calibration_term),
            fmt_f64(rep.log_partition),
            fmt_f64(rep.theorem2_gap_raw),
            fmt_f64(rep.theorem2_gap_corrected),
            first_term_ok as u8,
            decomposition_ok as u8,
            a1_ok as u8,
        ));
    }
    Ok(out)
}

fn write_policy(path: &Path, policy: &PolicyParams) -> CliResult<()> {
    let text = serde_json::to_string_pretty(policy)
        .map_err(|e| CliError::Config(format!("serialize policy: {e}")))?;
    atomic_write(path, &text)
}

/// Runs one configured experiment into its output directory.
pub fn cmd_run(config: &ExperimentConfig, config_dir: &Path) -> CliResult<PathBuf> {
    config.train.validate()?;
    let env = config.resolve_environment(config_dir)?;
    let dataset = config.resolve_dataset(&env, config_dir)?;
    let (policy, log) = train(&config.train, &env, dataset.as_ref(), config.seed)?;

    let out_dir = if config.out_dir.is_absolute() {
        config.out_dir.clone()
    } else {
        config_dir.join(&config.out_dir)
    };
    std::fs::create_dir_all(&out_dir)?;
    atomic_write(&out_dir.join("train_log.csv"), &log.to_csv())?;
    write_policy(&out_dir.join("final_policy.json"), &policy)?;
    atomic_write(
        &out_dir.join("population_report.csv"),
        &population_report_csv(&env, config.train.loss.beta, &policy)?,
    )?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        config,
        env_fingerprint: env.fingerprint(),
        dataset_pairs: dataset.as_ref().map(|d| d.pairs.len()),
        outputs: vec![
            "train_log.csv".into(),
            "final_policy.json".into(),
            "population_report.csv".into(),
        ],
    };
    atomic_write(
        &out_dir.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Config(format!("serialize manifest: {e}")))?,
    )?;
    eprintln!("run complete: {}", out_dir.display());
    Ok(out_dir)
}

/// Reruns training across the beta grid and writes `sweep.csv`.
pub fn cmd_sweep(
    config: &ExperimentConfig,
    config_dir: &Path,
    betas: &[f64],
) -> CliResult<PathBuf> {
    config.train.validate()?;
    let env = config.resolve_environment(config_dir)?;
    let dataset = config.resolve_dataset(&env, config_dir)?;
    let rows = beta_sweep(&config.train, betas, &env, dataset.as_ref(), config.seed)?;
    let out_dir = if config.out_dir.is_absolute() {
        config.out_dir.clone()
    } else {
        config_dir.join(&config.out_dir)
    };
    std::fs::create_dir_all(&out_dir)?;
    atomic_write(&out_dir.join("sweep.csv"), &sweep_to_csv(&rows))?;
    eprintln!(
        "sweep complete: {} ({} betas)",
        out_dir.display(),
        rows.len()
    );
    Ok(out_dir)
}

#[derive(Serialize)]
struct VerifyReport {
    tool_version: &'static str,
    trials: usize,
    seed: u64,
    suites: Vec<VerificationSuiteResult>,
    all_asserting_pass: bool,
}

/// Per-(instance, prompt) population rows with identity flags; the CSV side
/// of the verification report.
fn identities_csv(trials: usize, seed: u64) -> CliResult<String> {
    let mut out = String::from(
        "instance,prompt,forward_kl,reverse_kl,mle_loss,caldpo_population_loss,first_term,calibration_term,log_partition,theorem2_gap_raw,theorem2_gap_corrected,first_term_identity_ok,decomposition_ok,a1_identity_ok\n",
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for instance in 0..trials {
        let inst = random_instance(&mut rng);
        let body = population_report_csv(&inst.env, inst.beta, &inst.policy)?;
        for line in body.lines().skip(1) {
            out.push_str(&format!("{instance},{line}\n"));
        }
    }
    Ok(out)
}

/// Runs the requested suites, writes the JSON report plus the identities
/// CSV, and fails (exit 4) if an asserting suite fails.
pub fn cmd_verify(suites: &[SuiteName], trials: usize, seed: u64, out: &Path) -> CliResult<()> {
    if suites.is_empty() {
        return Err(CliError::Config("no suites requested".into()));
    }
    if trials == 0 {
        return Err(CliError::Config("trials must be >= 1".into()));
    }
    let mut results = Vec::new();
    for &name in suites {
        let result = run_suite(name, trials, seed)?;
        eprintln!(
            "suite {:<10} instances {:>5}  max_dev {:>10.3e}  {}",
            result.suite,
            result.instances,
            result.max_deviation,
            if result.pass { "PASS" } else { "FAIL" }
        );
        results.push(result);
    }
    let all_pass = results.iter().all(|r| r.pass);
    let report = VerifyReport {
        tool_version: env!("CARGO_PKG_VERSION"),
        trials,
        seed,
        suites: results,
        all_asserting_pass: all_pass,
    };
    atomic_write(
        out,
        &serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Config(format!("serialize report: {e}")))?,
    )?;
    let csv_path = out.with_file_name("verify_identities.csv");
    atomic_write(&csv_path, &identities_csv(trials, seed)?)?;
    eprintln!("wrote {} and {}", out.display(), csv_path.display());
    if !all_pass {
        return Err(CliError::VerificationFailed(
            "one or more asserting suites exceeded tolerance".into(),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct DynamicsManifest {
    tool_version: &'static str,
    prompts: usize,
    responses: usize,
    pairs: usize,
    beta: f64,
    learning_rate: f64,
    steps: usize,
    env_fingerprint: String,
    arms: BTreeMap<String, String>,
}

/// Runs the paired uncalibrated/calibrated reward-dynamics experiment on the
/// standard fixture and emits both logs side by side.
pub fn cmd_dynamics(out_dir: &Path) -> CliResult<()> {
    let env = fixtures::dynamics_environment();
    let dataset = fixtures::dynamics_dataset(&env);

    let mut arms = BTreeMap::new();
    let mut final_rows = Vec::new();
    for (file, method) in [
        ("dpo_train_log.csv", Method::Bt),
        ("cal_dpo_train_log.csv", Method::CalDpo),
    ] {
        let config: TrainConfig = fixtures::dynamics_train_config(method);
        let (_, log) = train(&config, &env, Some(&dataset), 0)?;
        std::fs::create_dir_all(out_dir)?;
        atomic_write(&out_dir.join(file), &log.to_csv())?;
        let last = log.final_row().expect("log has rows").clone();
        arms.insert(file.to_string(), method.name().to_string());
        final_rows.push((method, last));
    }

    // Side-by-side final summary.
    let mut summary = String::from(
        "method,loss,chosen_reward_mean,rejected_reward_mean,margin_mean,forward_kl_mean,reverse_kl_mean\n",
    );
    for (method, row) in &final_rows {
        summary.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            method.name(),
            fmt_f64(row.loss),
            fmt_f64(row.chosen_reward_mean),
            fmt_f64(row.rejected_reward_mean),
            fmt_f64(row.margin_mean),
            fmt_f64(row.forward_kl_mean),
            fmt_f64(row.reverse_kl_mean),
        ));
    }
    atomic_write(&out_dir.join("summary.csv"), &summary)?;

    let manifest = DynamicsManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        prompts: fixtures::DYNAMICS_PROMPTS,
        responses: fixtures::DYNAMICS_RESPONSES,
        pairs: fixtures::DYNAMICS_PAIRS,
        beta: fixtures::DYNAMICS_BETA,
        learning_rate: fixtures::DYNAMICS_LR,
        steps: fixtures::DYNAMICS_STEPS,
        env_fingerprint: env.fingerprint(),
        arms,
    };
    atomic_write(
        &out_dir.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Config(format!("serialize manifest: {e}")))?,
    )?;
    eprintln!("dynamics complete: {}", out_dir.display());
    Ok(())
}

/// Parses the `--method` override.
pub fn parse_method(name: &str) -> CliResult<Method> {
    match name.to_ascii_uppercase().as_str() {
        "DPO" => Ok(Method::Dpo),
        "BT" => Ok(Method::Bt),
        "IPO" => Ok(Method::Ipo),
        "SLIC" => Ok(Method::Slic),
        "CAL_DPO" | "CAL-DPO" => Ok(Method::CalDpo),
        "CAL_IPO" | "CAL-IPO" => Ok(Method::CalIpo),
        "CAL_SLIC" | "CAL-SLIC" => Ok(Method::CalSlic),
        other => Err(CliError::Config(format!("unknown method {other:?}"))),
    }
}

/// Applies last-writer-wins command-line overrides onto a loaded config.
pub struct Overrides {
    pub seed: Option<u64>,
    pub beta: Option<f64>,
    pub method: Option<String>,
    pub steps: Option<usize>,
    pub lr: Option<f64>,
    pub out: Option<PathBuf>,
}

pub fn apply_overrides(config: &mut ExperimentConfig, ov: &Overrides) -> CliResult<()> {
    if let Some(seed) = ov.seed {
        config.seed = seed;
    }
    if let Some(beta) = ov.beta {
        config.train.loss.beta = beta;
    }
    if let Some(method) = &ov.method {
        config.train.loss.method = parse_method(method)?;
    }
    if let Some(steps) = ov.steps {
        config.train.steps = steps;
    }
    if let Some(lr) = ov.lr {
        config.train.learning_rate = lr;
    }
    if let Some(out) = &ov.out {
        config.out_dir = out.clone();
    }
    let spec = LossSpec {
        method: config.train.loss.method,
        beta: config.train.loss.beta,
        target_chosen: config.train.loss.target_chosen,
        target_rejected: config.train.loss.target_rejected,
    };
    spec.validate()?;
    Ok(())
}

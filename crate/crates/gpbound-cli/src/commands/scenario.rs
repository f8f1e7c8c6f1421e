//! `gpbound scenario`: run the end-to-end state-space experiment and export
//! its curves as CSV files plus a run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use gpbound_core::sim::{
    generate_scenario, model_curves, rollout_curves, state_space_curves, ScenarioConfig,
};

use crate::manifest::ManifestBuilder;
use crate::model::ModelFile;

#[derive(Args)]
pub struct ScenarioArgs {
    /// Scenario config JSON; missing keys fall back to the defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long, default_value = "scenario_out")]
    pub out_dir: PathBuf,
}

const CONFIG_KEYS: &[&str] = &[
    "truth_kernel",
    "n_train",
    "train_range",
    "noise_var",
    "eval_grid",
    "interval_scales",
    "rollout",
    "fit_restarts",
    "certify_budget",
    "seed",
];

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(map) = value.as_object() {
        for key in CONFIG_KEYS {
            if !map.contains_key(*key) {
                log::info!("scenario config: \"{key}\" not set, using the default");
            }
        }
        for key in map.keys() {
            if !CONFIG_KEYS.contains(&key.as_str()) {
                log::warn!("scenario config: unknown key \"{key}\" ignored");
            }
        }
    }
    Ok(serde_json::from_value(value)?)
}

fn write_lines(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: &ScenarioArgs, seed_flag: Option<u64>) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => load_config(path)?,
        None => {
            log::info!("no config given, using the built-in defaults");
            ScenarioConfig::default()
        }
    };
    if let Some(seed) = seed_flag {
        config.seed = seed;
    }

    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut manifest = ManifestBuilder::new("scenario", config.seed, &args.out_dir)
        .config_path(args.config.as_deref());

    let scenario = generate_scenario(&config)?;
    log::info!(
        "fitted hyperparameters: {:?}",
        scenario.estimate.spec(0).phi()
    );

    // training data
    let train_path = args.out_dir.join("train_data.csv");
    let mut buf = Vec::new();
    scenario.data.write_csv(&mut buf)?;
    std::fs::write(&train_path, buf)?;
    manifest.record(&train_path);

    // fitted model, reusable by `bound` and `validate`
    let model_path = args.out_dir.join("estimate_model.json");
    ModelFile {
        kernels: scenario.estimate.specs().to_vec(),
        noise_var: scenario.data.noise_vars().to_vec(),
        data: "train_data.csv".to_string(),
        diagnostics: Some(scenario.fit_diagnostics.clone()),
    }
    .save(&model_path)?;
    manifest.record(&model_path);

    // posterior curves of both models over the grid
    let fig4_path = args.out_dir.join("fig4_model.csv");
    let rows = model_curves(&scenario)?;
    write_lines(
        &fig4_path,
        "x,true_mean,true_var,est_mean,est_var",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{}",
                r.x, r.true_mean, r.true_var, r.est_mean, r.est_var
            )
        }),
    )?;
    manifest.record(&fig4_path);

    // error curves over the state space, one bound column per variant
    let fig5_state_path = args.out_dir.join("fig5_state.csv");
    let rows = state_space_curves(&scenario)?;
    let n_variants = scenario.cands_variants.len();
    let mut header = "x,exact_mspe,est_var".to_string();
    for i in 1..=n_variants {
        header.push_str(&format!(",thm2_v{i}"));
    }
    write_lines(
        &fig5_state_path,
        &header,
        rows.iter().map(|r| {
            let mut line = format!("{},{},{}", r.x, r.exact_mspe, r.est_var);
            for v in &r.thm2 {
                line.push_str(&format!(",{v}"));
            }
            line
        }),
    )?;
    manifest.record(&fig5_state_path);

    // error along the rollout
    let fig5_time_path = args.out_dir.join("fig5_time.csv");
    let trace = rollout_curves(&scenario)?;
    if trace.truncated {
        log::warn!("rollout left the evaluation domain early");
    }
    write_lines(
        &fig5_time_path,
        "tau,x,exact_mspe,est_var,thm2",
        (0..trace.states.len()).map(|t| {
            format!(
                "{},{},{},{},{}",
                t, trace.states[t], trace.exact_mspe[t], trace.est_var[t], trace.thm2[t]
            )
        }),
    )?;
    manifest.record(&fig5_time_path);

    manifest.write(&args.out_dir.join("manifest.json"))?;
    Ok(())
}

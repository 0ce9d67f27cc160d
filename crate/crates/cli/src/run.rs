// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use quditcal::agents::{self, policy_import, Agent, InferencePolicy, TrainOptions, TrainProgress};
use quditcal::config::RunConfig;
use quditcal::dynamics::{DeviceParams, Gate, PulseSet};
use quditcal::ensemble::{fixed_single_device, offset_histogram, sample_offsets};
use quditcal::env::{CalibrationEnv, EnvMode};
use quditcal::eval::{
    corrected_pulse, eval_ensemble, eval_nominal, eval_single, obs_noise_sweep, pulse_overlay_export, Controller,
};
use quditcal::export;
use quditcal::grape::{grape_optimize_restarts, GrapeResult};
use quditcal::rng::{stream_rng, Stream};
use serde::{Deserialize, Serialize};

use crate::{Command, Common};

pub const SEED_ENV: &str = "QUDITCAL_SEED";
const MANIFEST: &str = "manifest.json";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    NotConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::NotConverged(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::NotConverged(m) => write!(f, "not converged: {m}"),
        }
    }
}

impl From<quditcal::Error> for CliError {
    fn from(e: quditcal::Error) -> Self {
        match e {
            quditcal::Error::Numerical(_) | quditcal::Error::NotHermitian(_) => CliError::Numerical(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Written next to every run's outputs; enough to reproduce them.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config: RunConfig,
    pub outputs: Vec<String>,
}

/// The optimized pulse as stored by `grape`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OctPulseFile {
    pub gate: Gate,
    pub nominal: DeviceParams,
    pub final_infidelity: f64,
    pub converged: bool,
    pub iterations_used: usize,
    pub pulse: PulseSet,
}

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: PathBuf) -> CliResult<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, written: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        fs::write(self.dir.join(name), contents)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, command: Command, config: RunConfig) -> CliResult<()> {
        self.written.sort();
        let manifest = Manifest {
            tool: "quditcal".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
            config,
            outputs: self.written,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
        fs::write(self.dir.join(MANIFEST), text + "\n")?;
        log::info!("wrote {}", self.dir.display());
        Ok(())
    }
}

fn load_config(common: &Common) -> CliResult<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Ok(seed) = std::env::var(SEED_ENV) {
        config.seed = seed
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV}=`{seed}` is not an unsigned integer")))?;
    }
    if let Some(gate) = common.gate {
        config.gate = gate;
    }
    Ok(config.resolve()?)
}

fn common_of(command: &Command) -> Option<&Common> {
    match command {
        Command::Grape { common, .. }
        | Command::SampleNoise { common, .. }
        | Command::Train { common, .. }
        | Command::Eval { common, .. }
        | Command::Sweep { common, .. } => Some(common),
        Command::Replay { .. } => None,
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Grape { .. } => "grape",
        Command::SampleNoise { .. } => "sample-noise",
        Command::Train { .. } => "train",
        Command::Eval { .. } => "eval",
        Command::Sweep { .. } => "sweep",
        Command::Replay { .. } => "replay",
    }
}

fn absolute(path: &Option<PathBuf>) -> CliResult<Option<PathBuf>> {
    path.as_ref()
        .map(|p| {
            p.canonicalize()
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        })
        .transpose()
}

/// Input paths become absolute so a manifest replays from any directory.
fn canonical_inputs(mut command: Command) -> CliResult<Command> {
    match &mut command {
        Command::Train { pulse, resume, .. } => {
            *pulse = absolute(pulse)?;
            *resume = absolute(resume)?;
        }
        Command::Eval { pulse, checkpoint, .. } => {
            *pulse = absolute(pulse)?;
            for c in checkpoint.iter_mut() {
                *c = absolute(&Some(c.clone()))?.expect("present");
            }
        }
        Command::Sweep { pulse, checkpoint, .. } => {
            *pulse = absolute(pulse)?;
            *checkpoint = absolute(&Some(checkpoint.clone()))?.expect("present");
        }
        _ => {}
    }
    Ok(command)
}

pub fn execute(command: Command) -> CliResult<()> {
    if let Command::Replay { manifest, out } = command {
        let text = fs::read_to_string(&manifest)?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
        let config = m.config.resolve()?;
        return run(m.command, config, out);
    }
    let common = common_of(&command).expect("not a replay").clone();
    let config = load_config(&common)?;
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.output_dir).join(command_name(&command)));
    run(canonical_inputs(command)?, config, out)
}

fn run(command: Command, config: RunConfig, out: PathBuf) -> CliResult<()> {
    let mut outputs = Outputs::new(out)?;
    match &command {
        Command::Grape { allow_unconverged, .. } => {
            let result = cmd_grape(&config, &mut outputs)?;
            let target = config.grape.target_infidelity;
            outputs.finish(command.clone(), config)?;
            if !result.converged && !allow_unconverged {
                return Err(CliError::NotConverged(format!(
                    "final infidelity {:e} above target {target:e}",
                    result.final_infidelity
                )));
            }
            Ok(())
        }
        Command::SampleNoise { count, .. } => {
            cmd_sample_noise(&config, count.unwrap_or(config.samples.count), &mut outputs)?;
            outputs.finish(command.clone(), config)
        }
        Command::Train {
            algorithm,
            pulse,
            steps,
            direct,
            resume,
            ..
        } => {
            let mode = if *direct { EnvMode::Direct } else { EnvMode::Residual };
            let baseline = if *direct && pulse.is_none() {
                PulseSet::zeros(config.grape.n_slices, config.grape.dt(), config.grape.amp_bound)?
            } else {
                baseline_pulse(&config, pulse.as_deref())?
            };
            let total = steps.unwrap_or(config.train.total_steps);
            cmd_train(&config, *algorithm, baseline, mode, total, resume.as_deref(), &mut outputs)?;
            outputs.finish(command.clone(), config)
        }
        Command::Eval {
            pulse, checkpoint, m, ..
        } => {
            let baseline = baseline_pulse(&config, pulse.as_deref())?;
            cmd_eval(&config, baseline, checkpoint, m.unwrap_or(config.eval.m), &mut outputs)?;
            outputs.finish(command.clone(), config)
        }
        Command::Sweep {
            pulse,
            checkpoint,
            axis,
            levels,
            extended,
            m,
            ..
        } => {
            let baseline = baseline_pulse(&config, pulse.as_deref())?;
            let levels = match (levels, extended) {
                (Some(l), _) => l.clone(),
                (None, true) => config.eval.extended_sweep_levels.clone(),
                (None, false) => config.eval.sweep_levels.clone(),
            };
            let env = config.env_config(baseline, EnvMode::Residual)?;
            let policy = policy_import(checkpoint)?;
            let m = m.unwrap_or(config.eval.m);
            let name = policy.algorithm.name();
            let mut sweeps = vec![obs_noise_sweep(Controller::Baseline, "oct", &env, *axis, &levels, m, config.eval.seed)?];
            sweeps.push(obs_noise_sweep(Controller::Policy(&policy), name, &env, *axis, &levels, m, config.eval.seed)?);
            outputs.write("sweep.csv", &export::sweep_csv(&sweeps))?;
            outputs.finish(command.clone(), config)
        }
        Command::Replay { .. } => Err(CliError::Config("a manifest cannot replay another replay".into())),
    }
}

fn run_grape(config: &RunConfig) -> CliResult<GrapeResult> {
    log::info!(
        "GRAPE: T = {}, N = {}, {} restart(s)",
        config.grape.total_time,
        config.grape.n_slices,
        config.grape_restarts
    );
    let result = grape_optimize_restarts(&config.grape, &config.nominal, &config.gate.matrix(), config.grape_restarts)?;
    log::info!(
        "GRAPE: final infidelity {:e} after {} iterations",
        result.final_infidelity,
        result.iterations_used
    );
    Ok(result)
}

fn cmd_grape(config: &RunConfig, outputs: &mut Outputs) -> CliResult<GrapeResult> {
    let result = run_grape(config)?;
    let file = OctPulseFile {
        gate: config.gate,
        nominal: config.nominal,
        final_infidelity: result.final_infidelity,
        converged: result.converged,
        iterations_used: result.iterations_used,
        pulse: result.pulse.clone(),
    };
    let text = serde_json::to_string_pretty(&file).map_err(|e| CliError::Config(e.to_string()))?;
    outputs.write("oct_pulse.json", &(text + "\n"))?;
    outputs.write("grape_history.csv", &export::grape_history_csv(&result.infidelity_history))?;
    Ok(result)
}

/// The stored pulse, or a fresh optimization when no file is given.
fn baseline_pulse(config: &RunConfig, path: Option<&Path>) -> CliResult<PulseSet> {
    let Some(path) = path else {
        let result = run_grape(config)?;
        if !result.converged {
            log::warn!("baseline pulse did not reach the target infidelity");
        }
        return Ok(result.pulse);
    };
    let text = fs::read_to_string(path)?;
    let file: OctPulseFile =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if file.gate != config.gate || file.nominal != config.nominal {
        return Err(CliError::Config(format!(
            "{} was optimized for gate {} on {:?}, the run uses gate {} on {:?}",
            path.display(),
            file.gate.name(),
            file.nominal,
            config.gate.name(),
            config.nominal
        )));
    }
    file.pulse.validate()?;
    Ok(file.pulse)
}

fn cmd_sample_noise(config: &RunConfig, count: usize, outputs: &mut Outputs) -> CliResult<()> {
    let mut rng = stream_rng(config.seed, Stream::Device);
    let samples: Vec<_> = (0..count).map(|_| sample_offsets(&mut rng, &config.noise)).collect();
    let histograms = offset_histogram(&samples, config.samples.bins, &config.noise)?;
    outputs.write("noise_samples.csv", &export::noise_samples_csv(&samples))?;
    outputs.write("noise_hist.csv", &export::histogram_csv(&histograms))?;
    Ok(())
}

fn cmd_train(
    config: &RunConfig,
    algorithm: agents::Algorithm,
    baseline: PulseSet,
    mode: EnvMode,
    total_steps: usize,
    resume: Option<&Path>,
    outputs: &mut Outputs,
) -> CliResult<()> {
    let env_config = config.env_config(baseline, mode)?;
    let mut env = CalibrationEnv::new(env_config.clone(), config.seed)?;
    let (mut agent, mut progress) = match resume {
        Some(dir) => {
            let (agent, progress) = agents::resume(dir, &mut env)?;
            if agent.algorithm() != algorithm || agent.config().action_dim != env.action_dim() {
                return Err(CliError::Config(format!(
                    "checkpoint holds a {} agent with {} actions, expected {algorithm} with {}",
                    agent.algorithm(),
                    agent.config().action_dim,
                    env.action_dim()
                )));
            }
            log::info!("resuming at episode {}", progress.episodes.len());
            (agent, progress)
        }
        None => (Agent::new(config.agent_config(algorithm, &env_config)?)?, TrainProgress::default()),
    };
    let opts = TrainOptions {
        total_steps,
        checkpoint_every: config.train.checkpoint_every,
        checkpoint_dir: Some(outputs.dir.join("checkpoints")),
    };
    agents::train(&mut agent, &mut env, &opts, &mut progress)?;
    agents::training_bundle(&agent, &env, &progress).save(&outputs.dir.join("policy"))?;
    if env.clamped_actions() > 0 {
        log::warn!("{} action entries were outside [-1, 1] and clamped", env.clamped_actions());
    }
    outputs.write("learning_curve.csv", &export::learning_curve_csv(&progress.curve))?;
    outputs.write("episodes.csv", &export::episodes_csv(&progress.episodes))?;
    Ok(())
}

fn method_names(policies: &[InferencePolicy]) -> Vec<String> {
    let mut names: Vec<String> = Vec::with_capacity(policies.len());
    for p in policies {
        let base = p.algorithm.name().to_string();
        let mut name = base.clone();
        let mut k = 2;
        while name == "oct" || names.contains(&name) {
            name = format!("{base}_{k}");
            k += 1;
        }
        names.push(name);
    }
    names
}

fn cmd_eval(config: &RunConfig, baseline: PulseSet, checkpoints: &[PathBuf], m: usize, outputs: &mut Outputs) -> CliResult<()> {
    let env = config.env_config(baseline.clone(), EnvMode::Residual)?;
    let policies = checkpoints.iter().map(|c| policy_import(c)).collect::<quditcal::Result<Vec<_>>>()?;
    let names = method_names(&policies);
    let mut methods: Vec<(String, Controller)> = vec![("oct".into(), Controller::Baseline)];
    methods.extend(names.iter().cloned().zip(policies.iter().map(Controller::Policy)));

    let seed = config.eval.seed;
    let mut settings = Vec::new();
    let mut stats = Vec::new();
    let mut corrected = Vec::new();
    for (name, controller) in &methods {
        settings.push(("nominal".to_string(), name.clone(), eval_nominal(*controller, &env)?));
        settings.push(("single".to_string(), name.clone(), eval_single(*controller, &env, seed)?));
        stats.push(eval_ensemble(*controller, name, &env, m, seed)?);
        if name != "oct" {
            corrected.push((name.clone(), corrected_pulse(*controller, &env, fixed_single_device(), seed)?));
        }
        log::info!("{name}: ensemble mean {:.4} ± {:.4}", stats.last().unwrap().mean, stats.last().unwrap().std);
    }
    outputs.write("settings.csv", &export::settings_csv(&settings))?;
    outputs.write("ensemble_stats.csv", &export::stats_csv(&stats))?;
    outputs.write("ensemble_devices.csv", &export::devices_csv(&stats))?;
    outputs.write(
        "pulse_overlay.csv",
        &export::pulse_overlay_csv(&pulse_overlay_export(&baseline, &corrected, 0)?),
    )?;
    outputs.write(
        "pulse_overlay_ch2.csv",
        &export::pulse_overlay_csv(&pulse_overlay_export(&baseline, &corrected, 1)?),
    )?;
    Ok(())
}

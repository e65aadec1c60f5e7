//! Experiment configuration, training orchestration, metrics, evaluation
//! and plotting: the user-facing surface of the laboratory.
//!
//! A run is a pure function of (config, run seed): level generation, action
//! sampling, minibatch shuffling and buffer sampling all draw from one
//! explicit per-run stream, so re-running a seed reproduces its metrics CSV
//! byte for byte. Run seeds execute as fully isolated instances (own RNG,
//! counts, buffers, files) and may run concurrently.

pub mod evaluate;
pub mod metrics;
pub mod plot;

pub use evaluate::{evaluate, EvalResult};
pub use metrics::{buffer_composition_report, CompositionReport, MetricsRow, RunningMean};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{checkpoint, OptimizerState, PolicyParams};
use crate::gridworld::EnvSpec;
use crate::intrinsic::{CountTable, IntrinsicConfig, Strategy};
use crate::ppo::{
    discounted_returns_episode, ppo_update, Collector, LevelSampler, PpoConfig,
};
use crate::rapid::{RapidConfig, RapidPipeline};
use crate::rng::Rng64;
use crate::schedule::{RatioPolicy, Scheduler, UpdateLedger};
use crate::sil::{SilConfig, SilPipeline};
use crate::{Error, Result};

/// Training method: the base RL loop plus optional imitation pipeline,
/// with or without intrinsic motivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Method {
    #[default]
    #[serde(rename = "ppo")]
    Ppo,
    #[serde(rename = "ppo+im")]
    PpoIm,
    #[serde(rename = "rapid")]
    Rapid,
    #[serde(rename = "rapid+im")]
    RapidIm,
    #[serde(rename = "sil")]
    Sil,
    #[serde(rename = "sil+im")]
    SilIm,
}

impl Method {
    pub fn uses_rapid(&self) -> bool {
        matches!(self, Method::Rapid | Method::RapidIm)
    }

    pub fn uses_sil(&self) -> bool {
        matches!(self, Method::Sil | Method::SilIm)
    }

    pub fn uses_intrinsic(&self) -> bool {
        matches!(self, Method::PpoIm | Method::RapidIm | Method::SilIm)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ppo => "ppo",
            Method::PpoIm => "ppo+im",
            Method::Rapid => "rapid",
            Method::RapidIm => "rapid+im",
            Method::Sil => "sil",
            Method::SilIm => "sil+im",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Intrinsic settings as written in configs. When `strategy` is omitted the
/// method decides: `+im` methods default to BeBold, plain methods to none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct IntrinsicSettings {
    pub strategy: Option<Strategy>,
    pub beta: Option<f64>,
    pub key_mode: Option<crate::gridworld::KeyMode>,
}

/// A full experiment: environment, method, hyperparameters, budget, seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub version: u32,
    pub env: String,
    /// Optional override of the environment's default step limit.
    pub max_steps: Option<u32>,
    pub method: Method,
    pub intrinsic: IntrinsicSettings,
    pub ppo: PpoConfig,
    pub rapid: RapidConfig,
    pub sil: SilConfig,
    pub schedule: RatioPolicy,
    pub total_frames: u64,
    pub run_seeds: Vec<u64>,
    pub level_seeds: LevelSampler,
    /// Slot width (frames) for windowed diagnostics.
    pub metrics_window: u64,
    pub out_dir: String,
    /// Execute run seeds concurrently (fully isolated instances).
    pub parallel_runs: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: 1,
            env: "Empty-8".to_string(),
            max_steps: None,
            method: Method::Ppo,
            intrinsic: IntrinsicSettings::default(),
            ppo: PpoConfig::default(),
            rapid: RapidConfig::default(),
            sil: SilConfig::default(),
            schedule: RatioPolicy::default(),
            total_frames: 200_000,
            run_seeds: vec![0, 1, 2],
            level_seeds: LevelSampler::Unbounded,
            metrics_window: 10_000,
            out_dir: "runs/out".to_string(),
            parallel_runs: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Apply `key=value` overrides with dotted paths into the JSON tree,
    /// e.g. `ppo.rollout_len=2048` or `method=rapid+im`.
    pub fn apply_overrides(&self, overrides: &[String]) -> Result<ExperimentConfig> {
        let mut tree = serde_json::to_value(self)?;
        for entry in overrides {
            let (path, raw) = entry.split_once('=').ok_or_else(|| {
                Error::Config(format!("override '{entry}' is not of the form key=value"))
            })?;
            let value = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            let mut node = &mut tree;
            for part in path.split('.') {
                node = node
                    .as_object_mut()
                    .ok_or_else(|| Error::Config(format!("override path '{path}' not found")))?
                    .entry(part)
                    .or_insert(serde_json::Value::Null);
            }
            *node = value;
        }
        let cfg: ExperimentConfig = serde_json::from_value(tree)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn spec(&self) -> Result<EnvSpec> {
        let spec = EnvSpec::parse(&self.env)?;
        match self.max_steps {
            Some(ms) => spec.with_max_steps(ms),
            None => Ok(spec),
        }
    }

    /// Resolve the effective intrinsic configuration for this method.
    pub fn effective_intrinsic(&self) -> IntrinsicConfig {
        let default_strategy = if self.method.uses_intrinsic() {
            Strategy::Bebold
        } else {
            Strategy::None
        };
        IntrinsicConfig {
            strategy: self.intrinsic.strategy.unwrap_or(default_strategy),
            beta: self.intrinsic.beta.unwrap_or(0.005),
            key_mode: self
                .intrinsic
                .key_mode
                .unwrap_or(crate::gridworld::KeyMode::Obs),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != 1 {
            return Err(Error::Config(format!(
                "unsupported config version {}",
                self.version
            )));
        }
        if self.total_frames == 0 {
            return Err(Error::Config("total_frames must be positive".into()));
        }
        if self.run_seeds.is_empty() {
            return Err(Error::Config("run_seeds must not be empty".into()));
        }
        if self.metrics_window == 0 {
            return Err(Error::Config("metrics_window must be positive".into()));
        }
        if let LevelSampler::Fixed(seeds) = &self.level_seeds {
            if seeds.is_empty() {
                return Err(Error::Config("fixed level-seed set is empty".into()));
            }
        }
        self.spec()?;
        self.effective_intrinsic().validate()?;
        self.ppo.validate()?;
        self.schedule.validate()?;
        Ok(())
    }

    /// The defaults used throughout: every experiment config diffs from
    /// this baseline.
    pub fn baseline() -> ExperimentConfig {
        ExperimentConfig::default()
    }
}

/// Summary of one finished (or failed) run seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub env: String,
    pub method: String,
    pub run_seed: u64,
    pub frames: u64,
    pub episodes: u64,
    pub final_running_mean: f64,
    pub wall_clock_s: f64,
    pub metrics_path: String,
    pub checkpoint_path: String,
}

/// Machine-readable failure record for a run seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunError {
    pub run_seed: u64,
    pub frames: u64,
    pub error: String,
}

/// Outcome of [`run_experiment`]: per-seed summaries and failures.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunSummary>,
    pub failures: Vec<RunError>,
}

/// Execute every run seed of the experiment. A run that aborts (e.g. on a
/// non-finite loss) is recorded as a failure; the other runs continue.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let out_dir = PathBuf::from(&config.out_dir);
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(
        out_dir.join("config.json"),
        serde_json::to_string_pretty(config)?,
    )?;

    let mut outcome = ExperimentOutcome::default();
    let results: Vec<(u64, Result<RunSummary>)> = if config.parallel_runs
        && config.run_seeds.len() > 1
    {
        std::thread::scope(|scope| {
            let handles: Vec<_> = config
                .run_seeds
                .iter()
                .map(|&seed| {
                    let cfg = config.clone();
                    let dir = out_dir.clone();
                    scope.spawn(move || (seed, run_single(&cfg, seed, &dir)))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("run thread")).collect()
        })
    } else {
        config
            .run_seeds
            .iter()
            .map(|&seed| (seed, run_single(config, seed, &out_dir)))
            .collect()
    };

    for (seed, result) in results {
        match result {
            Ok(summary) => outcome.runs.push(summary),
            Err(err) => {
                let record = RunError {
                    run_seed: seed,
                    frames: 0,
                    error: err.to_string(),
                };
                let _ = std::fs::write(
                    out_dir.join(format!("error_seed{seed}.json")),
                    serde_json::to_string_pretty(&record).unwrap_or_default(),
                );
                outcome.failures.push(record);
            }
        }
    }
    std::fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&outcome)?,
    )?;
    Ok(outcome)
}

/// One fully deterministic training run.
pub fn run_single(config: &ExperimentConfig, run_seed: u64, out_dir: &Path) -> Result<RunSummary> {
    let started = std::time::Instant::now();
    let spec = config.spec()?;
    let intr = config.effective_intrinsic();
    let mut rng = Rng64::from_pair(0x4752_4C41_4252_554E, run_seed);
    let mut params = PolicyParams::init(&mut rng);
    let mut opt = OptimizerState::new(config.ppo.lr, &params);
    let mut counts = CountTable::new();
    let mut collector = Collector::new(
        spec,
        config.level_seeds.clone(),
        intr.strategy,
        intr.beta,
        intr.key_mode,
        &params,
        &mut counts,
        &mut rng,
    )?;
    let mut scheduler = Scheduler::new(config.schedule);
    let mut ledger = UpdateLedger::new();
    let mut rapid = config
        .method
        .uses_rapid()
        .then(|| RapidPipeline::new(config.rapid, config.ppo.lr, &params));
    let mut sil = config
        .method
        .uses_sil()
        .then(|| SilPipeline::new(config.sil, config.ppo.gamma, config.ppo.lr, &params));

    let metrics_path = out_dir.join(format!("metrics_seed{run_seed}.csv"));
    let mut writer = metrics::MetricsWriter::create(&metrics_path)?;
    let composition_path = out_dir.join(format!("buffer_composition_seed{run_seed}.csv"));
    let mut composition = config
        .method
        .uses_rapid()
        .then(|| metrics::CompositionWriter::create(&composition_path))
        .transpose()?;

    let mut window = RunningMean::new(100);
    let mut last = metrics::EpisodeSnapshot::default();
    let mut next_slot = config.metrics_window;

    while collector.frames() < config.total_frames {
        let (buffer, episodes) =
            collector.collect(&params, &mut counts, config.ppo.rollout_len, &mut rng)?;
        let stats = ppo_update(&mut params, &mut opt, &buffer, &config.ppo, &mut rng)?;
        ledger.record_on(1);
        ledger.record_frames(config.ppo.rollout_len as u64);

        let mut off_updates = 0usize;
        for episode in &episodes {
            window.push(episode.return_ext());
            let (g_ext, g_int) =
                discounted_returns_episode(episode, config.ppo.gamma, intr.beta);
            last = metrics::EpisodeSnapshot {
                len: episode.len() as u64,
                return_ext: episode.return_ext(),
                g_ext,
                g_int,
            };
            if let Some(pipeline) = rapid.as_mut() {
                off_updates += pipeline.on_episode_end(
                    episode,
                    &counts,
                    &mut scheduler,
                    &mut params,
                    &mut rng,
                )?;
            }
            if let Some(pipeline) = sil.as_mut() {
                off_updates +=
                    pipeline.on_episode_end(episode, &mut scheduler, &mut params, &mut rng)?;
            }
        }
        if let Some(pipeline) = rapid.as_mut() {
            off_updates +=
                pipeline.on_rollout_end(&mut scheduler, &mut params, &mut rng)?;
        }
        if let Some(pipeline) = sil.as_mut() {
            off_updates +=
                pipeline.on_rollout_end(&mut scheduler, &mut params, &mut rng)?;
        }
        ledger.record_off(off_updates as u64);

        let row = metrics::MetricsRow::collect(
            &collector,
            &window,
            &last,
            &stats,
            &ledger,
            &counts,
            rapid.as_ref().map(|p| &p.buffer),
            sil.as_ref().map(|p| &p.buffer),
            &config.rapid.weights,
        );
        writer.write_row(&row)?;

        if collector.frames() >= next_slot {
            ledger.flush_window();
            if let (Some(w), Some(p)) = (composition.as_mut(), rapid.as_ref()) {
                w.write_slot(collector.frames(), &p.buffer)?;
            }
            while next_slot <= collector.frames() {
                next_slot += config.metrics_window;
            }
        }
    }
    if let (Some(w), Some(p)) = (composition.as_mut(), rapid.as_ref()) {
        w.write_slot(collector.frames(), &p.buffer)?;
    }
    writer.flush()?;
    if let Some(w) = composition.as_mut() {
        w.flush()?;
    }

    let checkpoint_path = out_dir.join(format!("checkpoint_seed{run_seed}.ckpt"));
    checkpoint::save(
        &checkpoint_path,
        &checkpoint::Checkpoint {
            params,
            opt,
            rng_state: rng.state(),
        },
    )?;

    let summary = RunSummary {
        env: config.env.clone(),
        method: config.method.to_string(),
        run_seed,
        frames: collector.frames(),
        episodes: collector.episodes_completed(),
        final_running_mean: window.mean(),
        wall_clock_s: started.elapsed().as_secs_f64(),
        metrics_path: metrics_path.display().to_string(),
        checkpoint_path: checkpoint_path.display().to_string(),
    };
    std::fs::write(
        out_dir.join(format!("summary_seed{run_seed}.json")),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

#[cfg(test)]
mod tests;

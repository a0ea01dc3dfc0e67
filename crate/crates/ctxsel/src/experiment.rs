//! Multi-scene runs: scene 0 from the environment, then one segment per
//! later scene chosen by the trained policy or a baseline strategy.

use crate::checkpoint::Checkpoint;
use crate::config::{RunConfig, Selector};
use crate::error::{Error, Result};
use crate::matrix_io::ClipMatrix;
use crate::metrics::{MetricsRow, MetricsWriter};
use ctxsel_core::argen::{GenerationState, Noise, ToyGenerator};
use ctxsel_core::baselines::baseline_select;
use ctxsel_core::grpo::{commit_greedy, train_iterations, AdamState, IterationStats, RolloutExecutor, SceneTask};
use ctxsel_core::numcore::Matrix;
use ctxsel_core::policynet::PolicyParams;
use ctxsel_core::rewards::{cross_scene_sim, EmbeddingProvider};
use ctxsel_core::rng::{derive_stream, purpose};
use ctxsel_core::rollout::SceneEvaluator;
use ctxsel_core::synthenv::{oracle_best_selection, Environment, ORACLE_MAX_K, ORACLE_MAX_L};
use serde::{Deserialize, Serialize};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// What happened in one scene. Reward fields are empty for scene 0, which is
/// taken from the environment rather than generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene: usize,
    pub selection: Vec<usize>,
    pub content: Option<f64>,
    pub clip: Option<f64>,
    pub artifact: Option<f64>,
    pub total: Option<f64>,
    pub oracle_selection: Option<Vec<usize>>,
    pub oracle_reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: String,
    pub seed: u64,
    pub scenes: Vec<SceneRecord>,
    /// Cross-scene similarity of identity (φ) embeddings of all frames.
    pub cross_scene_sim_phi: Option<f64>,
    /// Cross-scene similarity of semantic (ψ) embeddings of all frames.
    pub cross_scene_sim_psi: Option<f64>,
    /// Means over the generated scenes (1..N).
    pub mean_content: Option<f64>,
    pub mean_clip: Option<f64>,
    pub mean_artifact: Option<f64>,
    pub mean_total: Option<f64>,
}

/// Live state of a run.
pub struct Experiment<'a> {
    pub config: RunConfig,
    pub env: Environment,
    pub evaluator: SceneEvaluator,
    pub state: GenerationState,
    pub policy: PolicyParams,
    pub optimizer: AdamState,
    initial_policy: PolicyParams,
    executor: &'a dyn RolloutExecutor,
    oracle: Option<(Vec<usize>, f64)>,
    pub records: Vec<SceneRecord>,
}

fn build_error(e: ctxsel_core::Error) -> Error {
    match e {
        ctxsel_core::Error::Config(m) => Error::Config(m),
        other => Error::Core(other),
    }
}

fn embed_all(provider: &dyn EmbeddingProvider, frames: &Matrix) -> Result<Matrix> {
    let rows = frames.iter_rows().map(|f| provider.embed(f)).collect::<ctxsel_core::Result<Vec<_>>>()?;
    Ok(Matrix::from_rows(&rows)?)
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl<'a> Experiment<'a> {
    pub fn new(config: RunConfig, executor: &'a dyn RolloutExecutor) -> Result<Self> {
        config.validate()?;
        let env = Environment::build(config.env_spec()).map_err(build_error)?;
        let schedule = config.noise_schedule()?;
        let generator =
            ToyGenerator::new(config.geometry, schedule.steps(), config.generator_config()).map_err(build_error)?;
        let evaluator =
            SceneEvaluator { generator, schedule, providers: env.providers(config.rewards.tau_art), reward: config.rewards };
        let state = env.initial_state(evaluator.schedule.steps())?;
        let policy = PolicyParams::init(config.policy, &mut derive_stream(config.seed, &[purpose::POLICY_INIT]))?;
        let optimizer = AdamState::new(&policy)?;
        let records = vec![SceneRecord {
            scene: 0,
            selection: Vec::new(),
            content: None,
            clip: None,
            artifact: None,
            total: None,
            oracle_selection: None,
            oracle_reward: None,
        }];
        Ok(Self {
            config,
            env,
            evaluator,
            state,
            initial_policy: policy.clone(),
            policy,
            optimizer,
            executor,
            oracle: None,
            records,
        })
    }

    pub fn next_scene(&self) -> usize {
        self.state.segments().len()
    }

    fn task(&self, scene: usize) -> Result<SceneTask<'_>> {
        Ok(SceneTask {
            state: &self.state,
            prompt: self.env.prompt(scene)?,
            prompt_id: scene,
            scene,
            budget: self.config.budget,
            base_seed: self.config.seed,
        })
    }

    /// Resets the policy if configured and computes the oracle subset when
    /// the history is small enough to enumerate.
    pub fn begin_scene(&mut self) -> Result<()> {
        let scene = self.next_scene();
        if self.config.reset_policy_per_scene {
            self.policy = self.initial_policy.clone();
            self.optimizer = AdamState::new(&self.policy)?;
        }
        let (l, k) = (self.state.history_len(), self.config.budget);
        self.oracle = None;
        if self.config.strategy == Selector::Policy && l <= ORACLE_MAX_L && k <= ORACLE_MAX_K {
            let task = self.task(scene)?;
            let best = oracle_best_selection(&self.evaluator, task.state, task.prompt, scene, k)
                .map_err(|e| Error::from(e).in_scene(scene, None))?;
            self.oracle = Some(best);
        }
        Ok(())
    }

    fn row(&self, scene: usize, s: &IterationStats, wall_ms: u64) -> MetricsRow {
        let k = self.config.budget as f64;
        let oracle_overlap = self.oracle.as_ref().map(|(best, _)| {
            let hits: usize =
                s.selections.iter().map(|sel| sel.iter().filter(|i| best.contains(i)).count()).sum();
            hits as f64 / (k * s.selections.len() as f64)
        });
        MetricsRow {
            scene,
            iteration: s.iteration,
            mean_reward: s.mean_reward,
            max_reward: s.max_reward,
            min_reward: s.min_reward,
            mean_content: s.mean_content,
            mean_clip: s.mean_clip,
            mean_artifact: s.mean_artifact,
            advantage_std: s.advantage_std,
            objective: s.objective,
            failed_rollouts: s.failed_rollouts,
            oracle_overlap,
            wall_ms,
        }
    }

    /// Runs GRPO iterations `range` on the next scene, writing one metrics row each.
    pub fn train(&mut self, range: Range<usize>, metrics: Option<&mut MetricsWriter>) -> Result<()> {
        let scene = self.next_scene();
        let start = Instant::now();
        let clock = self.config.record_wall_clock;
        let mut stats = Vec::new();
        let result = {
            let task = self.task(scene)?;
            let mut policy = self.policy.clone();
            let mut optimizer = self.optimizer.clone();
            let mut observe = |s: &IterationStats| {
                let ms = if clock { start.elapsed().as_millis() as u64 } else { 0 };
                stats.push((s.clone(), ms));
            };
            let r = train_iterations(
                &task,
                &mut policy,
                &mut optimizer,
                &self.evaluator,
                &self.config.grpo,
                self.executor,
                range.clone(),
                &mut observe,
            );
            r.map(|()| (policy, optimizer))
        };
        if let Some(metrics) = metrics {
            for (s, ms) in &stats {
                metrics.write(&self.row(scene, s, *ms))?;
            }
        }
        let failed_at = stats.last().map_or(range.start, |(s, _)| s.iteration + 1);
        let (policy, optimizer) = result.map_err(|e| Error::from(e).in_scene(scene, Some(failed_at)))?;
        self.policy = policy;
        self.optimizer = optimizer;
        Ok(())
    }

    /// Generates, scores and appends the next scene's segment.
    pub fn commit(&mut self) -> Result<SceneRecord> {
        let scene = self.next_scene();
        let in_scene = |e: ctxsel_core::Error| Error::from(e).in_scene(scene, None);
        let (segment, selection, reward) = match self.config.strategy {
            Selector::Policy => {
                let task = self.task(scene)?;
                commit_greedy(&task, &self.policy, &self.evaluator).map_err(in_scene)?
            }
            Selector::Baseline(strategy) => {
                let task = self.task(scene)?;
                let mut rng = derive_stream(self.config.seed, &[purpose::BASELINE, scene as u64]);
                let selection = baseline_select(
                    strategy,
                    &self.config.geometry,
                    task.state.history_len(),
                    task.budget,
                    &mut rng,
                    &self.config.window,
                )
                .map_err(in_scene)?;
                // Same commit stream as the policy path, so only the selection differs.
                let mut rng = derive_stream(self.config.seed, &[purpose::COMMIT, scene as u64]);
                let segment = self
                    .evaluator
                    .generate(task.state, &selection, task.prompt, scene, Noise::Sampled, &mut rng, None)
                    .map_err(in_scene)?;
                let reward = self
                    .evaluator
                    .score(&segment, task.state, task.prompt)
                    .unwrap_or_else(|_| ctxsel_core::rewards::RewardBreakdown::failed());
                (segment, selection, reward)
            }
        };
        self.state.append_segment(segment).map_err(in_scene)?;
        let record = SceneRecord {
            scene,
            selection: selection.indices().to_vec(),
            content: Some(reward.content),
            clip: Some(reward.clip),
            artifact: Some(reward.artifact),
            total: Some(reward.total),
            oracle_selection: self.oracle.as_ref().map(|(s, _)| s.clone()),
            oracle_reward: self.oracle.as_ref().map(|(_, r)| *r),
        };
        self.records.push(record.clone());
        Ok(record)
    }

    /// Trains (for the policy) and commits the next scene.
    pub fn advance(&mut self, metrics: Option<&mut MetricsWriter>) -> Result<SceneRecord> {
        self.begin_scene()?;
        if self.config.strategy == Selector::Policy {
            self.train(0..self.config.grpo.iterations, metrics)?;
        }
        self.commit()
    }

    pub fn checkpoint(&self, scene: usize, next_iteration: usize) -> Checkpoint {
        Checkpoint {
            seed: self.config.seed,
            scene,
            next_iteration,
            policy: self.policy.clone(),
            optimizer: self.optimizer.clone(),
        }
    }

    /// Frame means of every committed segment, with each segment's first frame as a clip start.
    pub fn frames(&self) -> ClipMatrix {
        let per_segment = self.config.geometry.n_frames;
        ClipMatrix {
            matrix: self.state.history_frames(),
            clip_starts: (0..self.state.segments().len()).map(|i| i * per_segment).collect(),
        }
    }

    pub fn embeddings(&self, provider: &dyn EmbeddingProvider) -> Result<ClipMatrix> {
        let frames = self.frames();
        Ok(ClipMatrix { matrix: embed_all(provider, &frames.matrix)?, clip_starts: frames.clip_starts })
    }

    pub fn summary(&self) -> Result<RunSummary> {
        let sim = |provider: &dyn EmbeddingProvider| -> Result<Option<f64>> {
            let e = self.embeddings(provider)?;
            match cross_scene_sim(&e.matrix, &e.clip_starts) {
                Ok(s) => Ok(Some(s)),
                Err(ctxsel_core::Error::NoValidPairs) => Ok(None),
                Err(e) => Err(e.into()),
            }
        };
        let generated = &self.records[1..];
        Ok(RunSummary {
            strategy: self.config.strategy.name().to_string(),
            seed: self.config.seed,
            scenes: self.records.clone(),
            cross_scene_sim_phi: sim(&self.env.identity_provider())?,
            cross_scene_sim_psi: sim(&self.env.semantic_provider())?,
            mean_content: mean(generated.iter().map(|r| r.content)),
            mean_clip: mean(generated.iter().map(|r| r.clip)),
            mean_artifact: mean(generated.iter().map(|r| r.artifact)),
            mean_total: mean(generated.iter().map(|r| r.total)),
        })
    }
}

/// Files written under the output directory.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Result<Self> {
        for dir in [root.to_path_buf(), root.join("segments"), root.join("checkpoints")] {
            std::fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
        }
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.json")
    }

    pub fn segment(&self, scene: usize) -> PathBuf {
        self.root.join("segments").join(format!("scene{scene}.txt"))
    }

    pub fn checkpoint(&self, scene: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("scene{scene}.ckpt"))
    }

    pub fn frames(&self) -> PathBuf {
        self.root.join("frames.txt")
    }

    pub fn embeddings(&self, provider: &str) -> PathBuf {
        self.root.join(format!("embeddings_{provider}.txt"))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(Error::io(path))
}

fn write_segment(exp: &Experiment<'_>, layout: &Layout, scene: usize) -> Result<()> {
    let tokens = exp.state.segments()[scene].tokens.clone();
    ClipMatrix { matrix: tokens, clip_starts: vec![0] }.write(&layout.segment(scene))
}

fn write_outputs(exp: &Experiment<'_>, layout: &Layout) -> Result<RunSummary> {
    exp.frames().write(&layout.frames())?;
    exp.embeddings(&exp.env.identity_provider())?.write(&layout.embeddings("phi"))?;
    exp.embeddings(&exp.env.semantic_provider())?.write(&layout.embeddings("psi"))?;
    let summary = exp.summary()?;
    write_text(&layout.summary(), &(serde_json::to_string_pretty(&summary).expect("summary serialises") + "\n"))?;
    Ok(summary)
}

/// Runs every scene of `config` and writes all artifacts under its output directory.
pub fn run_experiment(config: &RunConfig, executor: &dyn RolloutExecutor) -> Result<RunSummary> {
    let layout = Layout::new(&config.output_dir)?;
    write_text(&layout.config(), &config.to_json())?;
    let mut exp = Experiment::new(config.clone(), executor)?;
    write_segment(&exp, &layout, 0)?;
    let mut metrics = MetricsWriter::create(&layout.metrics())?;
    for scene in 1..config.scenes {
        exp.advance(Some(&mut metrics))?;
        write_segment(&exp, &layout, scene)?;
        if config.strategy == Selector::Policy {
            exp.checkpoint(scene, config.grpo.iterations).save(&layout.checkpoint(scene))?;
        }
    }
    write_outputs(&exp, &layout)
}

/// Result of training a single scene.
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// The committed scene, or `None` when training stopped early.
    pub record: Option<SceneRecord>,
}

/// Trains scene `scene` (earlier scenes are replayed without output), optionally
/// resuming from a checkpoint and optionally stopping before iteration `stop`.
/// Writes `metrics.csv` (appending on resume) and `checkpoints/scene{scene}.ckpt`.
pub fn train_single_scene(
    config: &RunConfig,
    scene: usize,
    resume: Option<&Path>,
    stop: Option<usize>,
    executor: &dyn RolloutExecutor,
) -> Result<TrainOutcome> {
    if config.strategy != Selector::Policy {
        return Err(Error::Config(format!("train needs strategy \"policy\", not {:?}", config.strategy.name())));
    }
    if scene == 0 || scene >= config.scenes {
        return Err(Error::Config(format!("scene {scene} is not trainable; use 1..{}", config.scenes)));
    }
    let layout = Layout::new(&config.output_dir)?;
    let mut exp = Experiment::new(config.clone(), executor)?;
    while exp.next_scene() < scene {
        exp.advance(None)?;
    }
    exp.begin_scene()?;
    let iterations = config.grpo.iterations;
    let mut start = 0;
    let mut metrics = match resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            if ckpt.seed != config.seed || ckpt.scene != scene {
                return Err(Error::Config(format!(
                    "checkpoint is for seed {} scene {}, run is seed {} scene {scene}",
                    ckpt.seed, ckpt.scene, config.seed
                )));
            }
            if ckpt.policy.config != config.policy {
                return Err(Error::Config("checkpoint policy shape differs from config".into()));
            }
            start = ckpt.next_iteration.min(iterations);
            exp.policy = ckpt.policy;
            exp.optimizer = ckpt.optimizer;
            MetricsWriter::append(&layout.metrics())?
        }
        None => {
            write_text(&layout.config(), &config.to_json())?;
            MetricsWriter::create(&layout.metrics())?
        }
    };
    let stop = stop.unwrap_or(iterations).clamp(start, iterations);
    exp.train(start..stop, Some(&mut metrics))?;
    let checkpoint = exp.checkpoint(scene, stop);
    checkpoint.save(&layout.checkpoint(scene))?;
    let record = if stop == iterations {
        let record = exp.commit()?;
        write_segment(&exp, &layout, scene)?;
        Some(record)
    } else {
        None
    };
    Ok(TrainOutcome { checkpoint, record })
}

/// One line of the baseline sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strategy: String,
    pub mean_content: Option<f64>,
    pub mean_clip: Option<f64>,
    pub mean_artifact: Option<f64>,
    pub mean_total: Option<f64>,
    pub cross_scene_sim_phi: Option<f64>,
    pub cross_scene_sim_psi: Option<f64>,
}

impl From<&RunSummary> for SweepRow {
    fn from(s: &RunSummary) -> Self {
        Self {
            strategy: s.strategy.clone(),
            mean_content: s.mean_content,
            mean_clip: s.mean_clip,
            mean_artifact: s.mean_artifact,
            mean_total: s.mean_total,
            cross_scene_sim_phi: s.cross_scene_sim_phi,
            cross_scene_sim_psi: s.cross_scene_sim_psi,
        }
    }
}

/// Runs the same configuration once per selector, each in its own
/// subdirectory, and writes `baselines.csv` comparing them.
pub fn sweep(config: &RunConfig, selectors: &[Selector], executor: &dyn RolloutExecutor) -> Result<Vec<SweepRow>> {
    let root = config.output_dir.clone();
    std::fs::create_dir_all(&root).map_err(Error::io(&root))?;
    let mut rows = Vec::new();
    for &selector in selectors {
        let run = RunConfig { strategy: selector, output_dir: root.join(selector.name()), ..config.clone() };
        let summary = run_experiment(&run, executor)?;
        rows.push(SweepRow::from(&summary));
    }
    let path = root.join("baselines.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::format("baselines table", e.to_string()))?;
    for row in &rows {
        w.serialize(row).map_err(|e| Error::format("baselines table", e.to_string()))?;
    }
    w.flush().map_err(Error::io(&path))?;
    Ok(rows)
}

use clap::{Args, Parser, Subcommand};
use ctxsel::config::{RunConfig, Selector};
use ctxsel::error::{Error, Result};
use ctxsel::exec::executor;
use ctxsel::experiment::{run_experiment, sweep, train_single_scene};
use ctxsel::matrix_io::ClipMatrix;
use ctxsel::metrics::{read_metrics, smoothed};
use ctxsel::prompts;
use ctxsel_core::baselines::Strategy;
use ctxsel_core::rewards::{build_sim_mask, cross_scene_sim};
use ctxsel_core::synthenv::PromptSetSpec;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ctxsel", version, about = "Learned context selection for multi-scene segment generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scene of an experiment and write its artifacts.
    Run(RunArgs),
    /// Train the policy on a single scene, optionally resuming from a checkpoint.
    Train(TrainArgs),
    /// Write event prompt sets as JSON Lines.
    GenPrompts(PromptArgs),
    /// Cross-scene similarity of embedding matrix files.
    Eval(EvalArgs),
    /// Run the policy and all six baseline strategies under the same config.
    Baselines(RunArgs),
    /// Turn a run's metrics into a plotting-friendly CSV.
    PlotData(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; defaults apply to omitted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// `policy` or a baseline strategy name.
    #[arg(long)]
    strategy: Option<String>,
    /// Rollout worker threads; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Start every scene from the initial policy.
    #[arg(long)]
    reset_policy_per_scene: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 1)]
    scene: usize,
    /// Checkpoint written by an earlier, stopped `train`.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop before this iteration and write a checkpoint.
    #[arg(long)]
    stop_after: Option<usize>,
}

#[derive(Args)]
struct PromptArgs {
    #[arg(long, default_value_t = 1000)]
    count: usize,
    /// Prompts per set.
    #[arg(long, default_value_t = 4)]
    per_set: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    embedding_dim: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Matrix files whose rows are frame embeddings, with a `clips:` line.
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Output directory of a `run` or `train`.
    #[arg(long)]
    run_dir: PathBuf,
    /// Moving-average window for the smoothed reward column.
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(dir) = &args.output_dir {
        config.output_dir = dir.clone();
    }
    if let Some(s) = &args.strategy {
        config.strategy = s.parse()?;
    }
    config.reset_policy_per_scene |= args.reset_policy_per_scene;
    config.validate()?;
    Ok(config)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(Error::io(path)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::Io { path: PathBuf::from("<stdout>"), source: e }),
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let config = load_config(&args)?;
            let exec = executor(args.jobs)?;
            let s = run_experiment(&config, exec.as_ref())?;
            println!(
                "{}: clip {} content {} artifact {} sim(phi) {} -> {}",
                s.strategy,
                fmt_opt(s.mean_clip),
                fmt_opt(s.mean_content),
                fmt_opt(s.mean_artifact),
                fmt_opt(s.cross_scene_sim_phi),
                config.output_dir.display()
            );
        }
        Command::Train(args) => {
            let config = load_config(&args.run)?;
            let exec = executor(args.run.jobs)?;
            let out = train_single_scene(&config, args.scene, args.resume.as_deref(), args.stop_after, exec.as_ref())?;
            match out.record {
                Some(r) => println!("scene {} committed {:?} reward {}", r.scene, r.selection, fmt_opt(r.total)),
                None => println!("scene {} stopped before iteration {}", args.scene, out.checkpoint.next_iteration),
            }
        }
        Command::GenPrompts(args) => {
            let spec = PromptSetSpec { per_set: args.per_set, embedding_dim: args.embedding_dim, ..Default::default() };
            let records = prompts::generate(&spec, args.count, args.seed).map_err(|e| match e {
                Error::Core(ctxsel_core::Error::Config(m)) => Error::Config(m),
                other => other,
            })?;
            emit(&args.out, &prompts::to_jsonl(&records))?;
        }
        Command::Eval(args) => {
            for path in &args.files {
                let m = ClipMatrix::read(path)?;
                let pairs = build_sim_mask(m.matrix.rows(), &m.clip_starts)?.count_ones();
                let sim = cross_scene_sim(&m.matrix, &m.clip_starts)?;
                println!("{}\t{sim:.6}\t{pairs} pairs", path.display());
            }
        }
        Command::Baselines(args) => {
            let config = load_config(&args)?;
            let exec = executor(args.jobs)?;
            let selectors: Vec<Selector> =
                std::iter::once(Selector::Policy).chain(Strategy::ALL.map(Selector::Baseline)).collect();
            println!("{:<20} {:>8} {:>8} {:>8} {:>8}", "strategy", "clip", "content", "sim_phi", "sim_psi");
            for row in sweep(&config, &selectors, exec.as_ref())? {
                println!(
                    "{:<20} {:>8} {:>8} {:>8} {:>8}",
                    row.strategy,
                    fmt_opt(row.mean_clip),
                    fmt_opt(row.mean_content),
                    fmt_opt(row.cross_scene_sim_phi),
                    fmt_opt(row.cross_scene_sim_psi)
                );
            }
        }
        Command::PlotData(args) => {
            let rows = read_metrics(&args.run_dir.join("metrics.csv"))?;
            let mut text = String::from("scene,iteration,mean_reward,smoothed_reward,oracle_overlap\n");
            let mut scenes: Vec<usize> = rows.iter().map(|r| r.scene).collect();
            scenes.dedup();
            for scene in scenes {
                let part: Vec<_> = rows.iter().filter(|r| r.scene == scene).collect();
                let means: Vec<f64> = part.iter().map(|r| r.mean_reward).collect();
                for (r, s) in part.iter().zip(smoothed(&means, args.window)) {
                    let overlap = r.oracle_overlap.map(|o| o.to_string()).unwrap_or_default();
                    text.push_str(&format!("{},{},{},{s},{overlap}\n", r.scene, r.iteration, r.mean_reward));
                }
            }
            emit(&args.out, &text)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use ctxsel::config::{RunConfig, Selector};
use ctxsel::experiment::run_experiment;
use ctxsel::metrics::{read_metrics, HEADER};
use ctxsel_core::baselines::Strategy;
use ctxsel_core::grpo::Sequential;
use std::path::Path;
use std::process::{Command, Output};

fn ctxsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxsel")).args(args).output().unwrap()
}

fn small(dir: &Path) -> RunConfig {
    let mut c = RunConfig { output_dir: dir.to_path_buf(), record_wall_clock: false, ..Default::default() };
    c.grpo.iterations = 10;
    c
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ctxsel(&["run", "--config", "/nonexistent/c.json"]).status.code(), Some(2));
    let unknown = write_config(dir.path(), r#"{"seed": 1, "colour": "blue"}"#);
    assert_eq!(ctxsel(&["run", "--config", &unknown]).status.code(), Some(2));
    let too_big = write_config(dir.path(), r#"{"budget": 20}"#);
    assert_eq!(ctxsel(&["run", "--config", &too_big]).status.code(), Some(4));
    assert_eq!(ctxsel(&["run", "--strategy", "telepathy"]).status.code(), Some(2));
}

#[test]
fn run_then_eval_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = write_config(dir.path(), r#"{"grpo": {"iterations": 5}}"#);
    let o = ctxsel(&["run", "--config", &config, "--output-dir", out.to_str().unwrap(), "--jobs", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = ctxsel(&["eval", out.join("embeddings_phi.txt").to_str().unwrap()]);
    assert!(o.status.success());
    let line = String::from_utf8(o.stdout).unwrap();
    let sim: f64 = line.split('\t').nth(1).unwrap().parse().unwrap();
    assert!(sim.is_finite() && sim.abs() <= 1.0);

    let o = ctxsel(&["plot-data", "--run-dir", out.to_str().unwrap()]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("scene,iteration,mean_reward,smoothed_reward"));
    assert_eq!(text.lines().count(), 1 + 3 * 5);
}

#[test]
fn gen_prompts_writes_one_line_per_set() {
    let o = ctxsel(&["gen-prompts", "--count", "7", "--seed", "3"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert_eq!(ctxsel(&["gen-prompts", "--count", "7"]).stdout, ctxsel(&["gen-prompts", "--count", "7"]).stdout);
}

#[test]
fn single_scene_run_trains_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig { scenes: 1, ..small(dir.path()) };
    let s = run_experiment(&config, &Sequential).unwrap();
    assert_eq!(s.scenes.len(), 1);
    assert!(s.cross_scene_sim_phi.is_none() && s.mean_clip.is_none());
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.trim_end(), HEADER);
    assert!(!dir.path().join("segments/scene1.txt").exists());
}

#[test]
fn every_scene_after_the_first_uses_exactly_the_budget() {
    let dir = tempfile::tempdir().unwrap();
    for strategy in std::iter::once(Selector::Policy).chain(Strategy::ALL.map(Selector::Baseline)) {
        let config = RunConfig { strategy, budget: 3, ..small(&dir.path().join(strategy.name())) };
        let s = run_experiment(&config, &Sequential).unwrap();
        let mut history = 8;
        for r in &s.scenes[1..] {
            let want = if strategy == Selector::Baseline(Strategy::Vanilla) { history } else { 3 };
            let mut sel = r.selection.clone();
            sel.sort_unstable();
            sel.dedup();
            assert_eq!(sel.len(), want, "{strategy} scene {}", r.scene);
            assert!(sel.iter().all(|&i| i < history));
            history += 8;
        }
        let rows = read_metrics(&dir.path().join(strategy.name()).join("metrics.csv")).unwrap();
        assert_eq!(rows.is_empty(), strategy != Selector::Policy);
    }
}

#[test]
fn vanilla_keeps_scenes_closer_than_random_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let run = |s: Strategy| {
        let c = RunConfig { strategy: Selector::Baseline(s), seed: 7, ..small(&dir.path().join(s.name())) };
        run_experiment(&c, &Sequential).unwrap().cross_scene_sim_phi.unwrap()
    };
    assert!(run(Strategy::Vanilla) >= run(Strategy::RandomPerToken));
}

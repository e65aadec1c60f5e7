use super::*;

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gridlab_{name}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn tiny_config(out_dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        env: "Empty-8".into(),
        max_steps: Some(30),
        method: Method::RapidIm,
        total_frames: 2048,
        run_seeds: vec![0],
        metrics_window: 512,
        out_dir: out_dir.display().to_string(),
        parallel_runs: false,
        ..ExperimentConfig::default()
    }
}

#[test]
fn config_json_round_trip_and_defaults() {
    let cfg = ExperimentConfig::default();
    assert!(cfg.validate().is_ok());
    let json = serde_json::to_string_pretty(&cfg).unwrap();
    let back = ExperimentConfig::from_json(&json).unwrap();
    assert_eq!(cfg, back);

    // A minimal config picks up every default.
    let minimal: ExperimentConfig =
        serde_json::from_str(r#"{"env": "MultiRoom-N7-S8", "method": "rapid+im"}"#).unwrap();
    assert_eq!(minimal.ppo.rollout_len, 128);
    assert_eq!(minimal.ppo.lr, 1e-4);
    assert_eq!(minimal.rapid.capacity, 10_000);
    assert_eq!(minimal.rapid.batch_size, 256);
    assert_eq!(minimal.sil.loss_weight, 0.1);
    assert_eq!(minimal.schedule.updates_per_trigger, 5);
    assert_eq!(minimal.run_seeds, vec![0, 1, 2]);
}

#[test]
fn overrides_walk_dotted_paths() {
    let cfg = ExperimentConfig::default();
    let out = cfg
        .apply_overrides(&[
            "ppo.rollout_len=2048".into(),
            "ppo.num_minibatches=4".into(),
            "method=rapid+im".into(),
            "intrinsic.strategy=counts1st".into(),
            "total_frames=1000000".into(),
            "schedule.mode={\"fixed\":[10,1]}".into(),
        ])
        .unwrap();
    assert_eq!(out.ppo.rollout_len, 2048);
    assert_eq!(out.method, Method::RapidIm);
    assert_eq!(out.intrinsic.strategy, Some(Strategy::Counts1st));
    assert_eq!(out.total_frames, 1_000_000);
    assert_eq!(
        out.schedule.mode,
        crate::schedule::ScheduleMode::Fixed(10, 1)
    );
    assert!(cfg.apply_overrides(&["nonsense".into()]).is_err());
    assert!(cfg.apply_overrides(&["ppo.rollout_len=7".into()]).is_err());
}

#[test]
fn method_selects_intrinsic_defaults() {
    let mut cfg = ExperimentConfig::default();
    cfg.method = Method::Ppo;
    assert_eq!(cfg.effective_intrinsic().strategy, Strategy::None);
    cfg.method = Method::RapidIm;
    assert_eq!(cfg.effective_intrinsic().strategy, Strategy::Bebold);
    assert_eq!(cfg.effective_intrinsic().beta, 0.005);
    cfg.intrinsic.strategy = Some(Strategy::Counts);
    assert_eq!(cfg.effective_intrinsic().strategy, Strategy::Counts);
}

#[test]
fn identical_config_and_seed_reproduce_metrics_byte_for_byte() {
    let dir_a = temp_dir("det_a");
    let dir_b = temp_dir("det_b");
    let out_a = run_single(&tiny_config(&dir_a), 7, &dir_a).unwrap();
    let out_b = run_single(&tiny_config(&dir_b), 7, &dir_b).unwrap();
    let csv_a = std::fs::read(dir_a.join("metrics_seed7.csv")).unwrap();
    let csv_b = std::fs::read(dir_b.join("metrics_seed7.csv")).unwrap();
    assert!(!csv_a.is_empty());
    assert_eq!(csv_a, csv_b, "metrics CSVs must be byte-identical");
    let comp_a = std::fs::read(dir_a.join("buffer_composition_seed7.csv")).unwrap();
    let comp_b = std::fs::read(dir_b.join("buffer_composition_seed7.csv")).unwrap();
    assert_eq!(comp_a, comp_b);
    assert_eq!(out_a.frames, out_b.frames);
    assert_eq!(out_a.final_running_mean, out_b.final_running_mean);
    // Different run seeds diverge.
    let out_c = run_single(&tiny_config(&dir_a), 8, &dir_a).unwrap();
    let csv_c = std::fs::read(dir_a.join("metrics_seed8.csv")).unwrap();
    assert_ne!(csv_a, csv_c);
    assert_eq!(out_c.run_seed, 8);
    std::fs::remove_dir_all(&dir_a).ok();
    std::fs::remove_dir_all(&dir_b).ok();
}

#[test]
fn rapid_with_zero_beta_equals_rapid_im_with_strategy_none() {
    let dir_a = temp_dir("equiv_a");
    let dir_b = temp_dir("equiv_b");
    let mut cfg_a = tiny_config(&dir_a);
    cfg_a.method = Method::Rapid; // default strategy: none
    cfg_a.intrinsic.beta = Some(0.0);
    let mut cfg_b = tiny_config(&dir_b);
    cfg_b.method = Method::RapidIm;
    cfg_b.intrinsic.strategy = Some(Strategy::None); // disable IM explicitly
    run_single(&cfg_a, 3, &dir_a).unwrap();
    run_single(&cfg_b, 3, &dir_b).unwrap();
    let csv_a = std::fs::read(dir_a.join("metrics_seed3.csv")).unwrap();
    let csv_b = std::fs::read(dir_b.join("metrics_seed3.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "configuration equivalence");
    std::fs::remove_dir_all(&dir_a).ok();
    std::fs::remove_dir_all(&dir_b).ok();
}

#[test]
fn metrics_frames_increase_by_rollout_and_episode_columns_are_consistent() {
    // Untrained PPO on MultiRoom never succeeds, so every episode runs the
    // full 140 steps and at most one episode completes per 128-step rollout.
    let dir = temp_dir("conserve");
    let cfg = ExperimentConfig {
        env: "MultiRoom-N7-S8".into(),
        method: Method::Ppo,
        total_frames: 4096,
        run_seeds: vec![0],
        out_dir: dir.display().to_string(),
        parallel_runs: false,
        ..ExperimentConfig::default()
    };
    run_single(&cfg, 0, &dir).unwrap();
    let text = std::fs::read_to_string(dir.join("metrics_seed0.csv")).unwrap();
    let mut prev_frames = 0u64;
    let mut prev_episodes = 0u64;
    let mut returns = Vec::new();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let frames: u64 = fields[0].parse().unwrap();
        let episodes: u64 = fields[1].parse().unwrap();
        let ep_len: u64 = fields[2].parse().unwrap();
        let ep_return: f64 = fields[3].parse().unwrap();
        let running: f64 = fields[4].parse().unwrap();
        assert_eq!(frames, prev_frames + 128, "frames climb by T per rollout");
        assert!(episodes == prev_episodes || episodes == prev_episodes + 1);
        if episodes > prev_episodes {
            assert_eq!(ep_len, 140, "failing episodes hit the step limit");
            returns.push(ep_return);
            let expected: f64 = returns.iter().rev().take(100).sum::<f64>()
                / returns.len().min(100) as f64;
            assert!(
                (running - expected).abs() < 5e-7,
                "running mean {running} vs recomputed {expected}"
            );
        }
        prev_frames = frames;
        prev_episodes = episodes;
    }
    assert!(!returns.is_empty());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn run_experiment_writes_artifacts_and_isolates_failures() {
    let dir = temp_dir("exp");
    let mut cfg = tiny_config(&dir);
    cfg.run_seeds = vec![0, 1];
    cfg.parallel_runs = true;
    let outcome = run_experiment(&cfg).unwrap();
    assert_eq!(outcome.runs.len(), 2);
    assert!(outcome.failures.is_empty());
    assert!(dir.join("config.json").exists());
    assert!(dir.join("summary.json").exists());
    for seed in [0, 1] {
        assert!(dir.join(format!("metrics_seed{seed}.csv")).exists());
        assert!(dir.join(format!("summary_seed{seed}.json")).exists());
        assert!(dir.join(format!("checkpoint_seed{seed}.ckpt")).exists());
    }

    // A diverging run is recorded as a failure; healthy runs continue.
    let dir2 = temp_dir("exp_fail");
    let mut bad = tiny_config(&dir2);
    bad.run_seeds = vec![0];
    bad.ppo.lr = f64::INFINITY;
    let outcome = run_experiment(&bad).unwrap();
    assert_eq!(outcome.runs.len(), 0);
    assert_eq!(outcome.failures.len(), 1);
    assert!(dir2.join("error_seed0.json").exists());
    assert!(outcome.failures[0].error.contains("non-finite"));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::remove_dir_all(&dir2).ok();
}

#[test]
fn checkpoint_from_run_is_evaluable() {
    let dir = temp_dir("eval_ck");
    let cfg = tiny_config(&dir);
    let summary = run_single(&cfg, 0, &dir).unwrap();
    let ck = crate::agent::checkpoint::load(Path::new(&summary.checkpoint_path)).unwrap();
    let spec = cfg.spec().unwrap();
    let result = evaluate(&ck.params, &spec, 20, 1000, 1020).unwrap();
    assert_eq!(result.per_seed.len(), 20);
    assert!(result.mean >= 0.0);
    std::fs::remove_dir_all(&dir).ok();
}

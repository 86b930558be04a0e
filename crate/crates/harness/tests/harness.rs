use std::path::PathBuf;

use belief_simplify::entropy::motion_calls_at;
use bsp_harness::{
    bounds_study, emit_bounds_study, emit_results, particle_speedup, run_consistency_experiment, run_trials,
    time_speedup, BoundsStudyConfig, EmitOptions, EpisodeOptions, HarnessError, PlannerKind, RunConfig, TrialResult,
};

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> RunConfig {
    RunConfig::load(&configs_dir().join(name)).unwrap()
}

/// Small given-tree setup: 3 actions, n_z = (1, 2), 3 sessions.
fn tiny(n_x: usize) -> RunConfig {
    let mut cfg = load("light_dark_desk.json");
    let sc = &mut cfg.scenario;
    sc.actions = vec!["right".into(), "up".into(), "up_right".into()];
    sc.n_z = vec![1, 2];
    sc.horizon = 2;
    sc.sessions = 3;
    sc.n_x = n_x;
    sc.n_max = 5;
    cfg
}

const GIVEN: [PlannerKind; 3] = [PlannerKind::Ss, PlannerKind::SithBsp, PlannerKind::LazyBsp];

#[test]
fn speedup_examples() {
    assert!((particle_speedup(100, [10, 50, 100]) - 46.666_666_666_666_664).abs() < 1e-12);
    assert_eq!(particle_speedup(100, [100, 100]), 0.0);
    assert_eq!(particle_speedup(100, std::iter::empty()), 0.0);
    assert!((time_speedup(2.0, 0.5).unwrap() - 75.0).abs() < 1e-12);
    assert!((time_speedup(1.0, 1.5).unwrap() + 50.0).abs() < 1e-12);
    assert!(time_speedup(0.0, 1.0).is_err());
}

#[test]
fn planner_names_round_trip() {
    for p in PlannerKind::ALL {
        assert_eq!(p.name().parse::<PlannerKind>().unwrap(), p);
        assert_eq!(p.to_string(), p.name());
    }
    assert!("sith".parse::<PlannerKind>().is_err());
    assert_eq!(PlannerKind::LazyBsp.baseline(), PlannerKind::Ss);
    assert_eq!(PlannerKind::SithPft.baseline(), PlannerKind::PftDpw);
}

#[test]
fn every_shipped_config_loads() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let cfg = RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(!cfg.planners().is_empty());
            seen += 1;
        }
    }
    assert!(seen >= 5);
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"name": "light_dark", "n_x": 0}"#).unwrap();
    assert!(RunConfig::load(&path).is_err());
}

fn session_rewards(r: &TrialResult) -> Vec<u64> {
    r.sessions.iter().map(|s| s.reward.to_bits()).collect()
}

#[test]
fn given_tree_planners_agree_and_keep_the_ledger() {
    let cfg = tiny(20);
    let n_x = cfg.scenario.n_x;
    let results = run_trials(&cfg.scenario, &GIVEN, 10, 0, EpisodeOptions::default()).unwrap();
    assert_eq!(results.len(), 30);
    for seed in 0..10 {
        let rs: Vec<&TrialResult> = results.iter().filter(|r| r.seed == seed).collect();
        let ss = rs[0];
        assert_eq!(ss.planner, PlannerKind::Ss);
        for r in &rs {
            assert_eq!(r.actions(), ss.actions(), "seed {seed} {}", r.planner);
            assert_eq!(session_rewards(r), session_rewards(ss), "seed {seed} {}", r.planner);
            assert_eq!(r.ledger.obs_calls, ss.ledger.obs_calls);
            let nodes: usize = r.ledger.node_particles.iter().map(Vec::len).sum();
            assert_eq!(r.ledger.obs_calls, (nodes * n_x) as u64);
            let expected: u64 = if r.planner == PlannerKind::Ss {
                (nodes * n_x * n_x) as u64
            } else {
                r.ledger.node_particles.iter().flatten().map(|&(_, p)| motion_calls_at(p, n_x)).sum()
            };
            assert_eq!(r.ledger.motion_calls, expected, "seed {seed} {}", r.planner);
        }
    }
}

#[test]
fn consistency_experiment_passes_on_given_trees() {
    let cfg = tiny(16);
    let report = run_consistency_experiment(&cfg.scenario, (PlannerKind::Ss, PlannerKind::LazyBsp), 4, 7).unwrap();
    assert_eq!(report.passed(), 4);
    assert!(report.all_passed());
    report.check().unwrap();
    for t in &report.trials {
        assert!(t.candidate_motion_calls <= t.baseline_motion_calls);
        assert!(t.particle_speedup >= 0.0);
    }
}

#[test]
fn mcts_consistency_on_a_short_search() {
    let mut cfg = load("light_dark_mcts.json");
    cfg.scenario.n_x = 16;
    cfg.scenario.sessions = 2;
    let dpw = cfg.scenario.dpw.as_mut().unwrap();
    dpw.depth = 5;
    dpw.iterations = 30;
    let report = run_consistency_experiment(&cfg.scenario, (PlannerKind::PftDpw, PlannerKind::SithPft), 3, 0).unwrap();
    assert!(report.all_passed(), "{:?}", report.trials.iter().map(|t| &t.divergence).collect::<Vec<_>>());
}

#[test]
fn emitted_csv_is_reproducible_and_paired() {
    let cfg = tiny(12);
    let opts = EmitOptions { timing: false, plots: true };
    let mut files = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let results = run_trials(&cfg.scenario, &GIVEN, 2, 3, EpisodeOptions::default()).unwrap();
        let written = emit_results(&results, dir.path(), opts).unwrap();
        for name in ["trials.csv", "levels.csv", "trajectories.svg", "levels_ss.svg", "levels_sith-bsp.svg"] {
            assert!(written.contains(&dir.path().join(name)), "{name} missing");
        }
        files.push(std::fs::read(dir.path().join("trials.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);

    let mut reader = csv::Reader::from_reader(files[0].as_slice());
    let header: Vec<String> = reader.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, bsp_harness::emit::TRIAL_COLUMNS);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3 * 2 * cfg.scenario.sessions);
    // Every (seed, session) pair appears once per planner.
    let mut pairs = std::collections::BTreeMap::new();
    for r in &rows {
        *pairs.entry((r[2].to_string(), r[3].to_string())).or_insert(0) += 1;
        assert_eq!(r[9].parse::<f64>().unwrap(), 0.0);
    }
    assert!(pairs.values().all(|&c| c == 3));
}

#[test]
fn emitting_nothing_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(emit_results(&[], dir.path(), EmitOptions::default()), Err(HarnessError::InvalidInput(_))));
}

#[test]
fn full_particle_set_closes_the_bracket() {
    let mut cfg = load("bounds_study.json");
    cfg.scenario.n_x = 60;
    let study = BoundsStudyConfig { actions: vec!["up_right".into(); 4], fractions: vec![0.5, 1.0], mixture_prior: false };
    let rows = bounds_study(&cfg.scenario, &study, 2).unwrap();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(r.bounds.len(), 2);
        let full = r.bounds[1];
        assert_eq!(full.particles, 60);
        let tol = 1e-10 * r.boers_entropy.abs().max(1.0);
        assert!(full.width().abs() <= tol);
        assert!((full.lower + r.boers_entropy).abs() <= tol);
        assert!(r.brackets(1e-9));
    }
}

#[test]
fn more_particles_give_tighter_brackets() {
    let cfg = load("bounds_study.json");
    let study = BoundsStudyConfig { actions: vec!["up_right".into(); 5], fractions: vec![0.1, 0.9], mixture_prior: true };
    for seed in 0..3 {
        let rows = bounds_study(&cfg.scenario, &study, seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let written = emit_bounds_study(&rows, &cfg.scenario.beacons, dir.path()).unwrap();
        assert_eq!(written.len(), 3);
        for r in &rows {
            assert!(r.bounds[1].width() < r.bounds[0].width(), "seed {seed} step {}", r.step);
            assert!(r.brackets(1e-9));
            assert!(r.kalman_entropy.is_finite() && r.kde_entropy.is_finite());
        }
    }
}

#[test]
fn bounds_study_rejects_unknown_actions() {
    let cfg = load("bounds_study.json");
    let study = BoundsStudyConfig { actions: vec!["sideways".into()], fractions: vec![0.5], mixture_prior: false };
    assert!(matches!(bounds_study(&cfg.scenario, &study, 0), Err(HarnessError::Config(_))));
}

//! CSV and SVG output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bounds_study::BoundsStudyRow;
use crate::episode::TrialResult;
use crate::plots;
use crate::{HarnessError, Result};

/// Column order of `trials.csv`.
pub const TRIAL_COLUMNS: [&str; 11] = [
    "scenario",
    "planner",
    "seed",
    "session",
    "action",
    "return",
    "motion_calls",
    "obs_calls",
    "resimpl_calls",
    "wall_ms",
    "particle_speedup",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmitOptions {
    /// Write measured wall times; otherwise the column holds 0 so output is reproducible.
    pub timing: bool,
    pub plots: bool,
}

impl Default for EmitOptions {
    fn default() -> Self {
        Self { timing: true, plots: true }
    }
}

#[derive(Serialize)]
struct TrialRow<'a> {
    scenario: &'a str,
    planner: &'a str,
    seed: u64,
    session: usize,
    action: &'a str,
    #[serde(rename = "return")]
    ret: f64,
    motion_calls: u64,
    obs_calls: u64,
    resimpl_calls: u64,
    wall_ms: f64,
    particle_speedup: f64,
}

#[derive(Serialize)]
struct LevelRow<'a> {
    scenario: &'a str,
    planner: &'a str,
    seed: u64,
    depth: usize,
    particles: usize,
    nodes: u64,
}

/// Writes `trials.csv`, `levels.csv` and, if enabled, the trajectory and level-histogram plots.
/// Returns the written paths.
pub fn emit_results(results: &[TrialResult], out_dir: &Path, opts: EmitOptions) -> Result<Vec<PathBuf>> {
    if results.is_empty() {
        return Err(HarnessError::InvalidInput("no results to write".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let path = out_dir.join("trials.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in results {
        for s in &r.sessions {
            w.serialize(TrialRow {
                scenario: &r.scenario,
                planner: r.planner.name(),
                seed: r.seed,
                session: s.session,
                action: &s.action,
                ret: s.cumulative_return,
                motion_calls: s.calls.motion,
                obs_calls: s.calls.observation,
                resimpl_calls: s.resimplifications,
                wall_ms: if opts.timing { s.wall_ms } else { 0.0 },
                particle_speedup: s.particle_speedup,
            })?;
        }
    }
    w.flush()?;
    written.push(path);

    let path = out_dir.join("levels.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in results {
        for ((depth, particles), nodes) in r.level_histogram() {
            w.serialize(LevelRow { scenario: &r.scenario, planner: r.planner.name(), seed: r.seed, depth, particles, nodes })?;
        }
    }
    w.flush()?;
    written.push(path);

    if opts.plots {
        let mut by_planner: BTreeMap<&str, BTreeMap<(usize, usize), u64>> = BTreeMap::new();
        for r in results {
            let h = by_planner.entry(r.planner.name()).or_default();
            for (k, c) in r.level_histogram() {
                *h.entry(k).or_insert(0) += c;
            }
        }
        for (planner, h) in &by_planner {
            let path = out_dir.join(format!("levels_{planner}.svg"));
            plots::level_bubbles(&format!("Final reward levels, {planner}"), h, &path)?;
            written.push(path);
        }
        let trajectories: Vec<(String, Vec<Vec<f64>>)> =
            results.iter().map(|r| (format!("{} seed {}", r.planner, r.seed), r.states.clone())).collect();
        let path = out_dir.join("trajectories.svg");
        plots::trajectory_scatter(&trajectories, &[], &path)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Serialize)]
struct StudyRow {
    step: usize,
    x: f64,
    y: f64,
    particles: usize,
    lower: f64,
    upper: f64,
    neg_boers: f64,
    boers_entropy: f64,
    kde_entropy: f64,
    discrete_entropy: f64,
    kalman_entropy: f64,
}

/// Writes `bounds_study.csv` (one row per step and particle count) and its plots.
pub fn emit_bounds_study(rows: &[BoundsStudyRow], beacons: &[[f64; 2]], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(HarnessError::InvalidInput("no study rows to write".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("bounds_study.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in rows {
        for b in &r.bounds {
            w.serialize(StudyRow {
                step: r.step,
                x: r.true_state[0],
                y: r.true_state[1],
                particles: b.particles,
                lower: b.lower,
                upper: b.upper,
                neg_boers: -r.boers_entropy,
                boers_entropy: r.boers_entropy,
                kde_entropy: r.kde_entropy,
                discrete_entropy: r.discrete_entropy,
                kalman_entropy: r.kalman_entropy,
            })?;
        }
    }
    w.flush()?;
    let bounds = out_dir.join("bounds_vs_step.svg");
    plots::bounds_vs_step(rows, &bounds)?;
    let traj = out_dir.join("study_trajectory.svg");
    let states = rows.iter().map(|r| r.true_state.clone()).collect();
    plots::trajectory_scatter(&[("ground truth".to_string(), states)], beacons, &traj)?;
    Ok(vec![path, bounds, traj])
}

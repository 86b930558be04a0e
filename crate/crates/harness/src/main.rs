use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use belief_simplify::rng::{stream, Purpose};
use belief_simplify::scenarios::{build_problem, initial_belief};
use bsp_harness::episode::{plan_once, session_seed};
use bsp_harness::{
    bounds_study, emit_bounds_study, emit_results, run_consistency_experiment, run_trials, EmitOptions, EpisodeOptions,
    PlannerKind, RunConfig,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bsp", version, about = "Belief-space planning with simplified information rewards")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Base seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimator and bounds study along a fixed action sequence.
    BoundsStudy {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Builds one belief tree from the initial belief and solves it.
    PlanGivenTree {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "sith-bsp")]
        planner: String,
        /// Directory for a JSON-lines snapshot of the tree.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One MCTS planning call from the initial belief.
    PlanMcts {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "sith-pft")]
        planner: String,
        /// Directory for a JSON-lines simulation trace.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired-seed comparison of a planner with its exact baseline; exits nonzero on divergence.
    ConsistencyCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        /// Planner checked against its baseline.
        #[arg(long)]
        planner: Option<String>,
        /// Directory for the JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs seeded episodes for several planners and writes CSV and SVG results.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        /// Planner to run; repeat for several. Defaults to the config's list.
        #[arg(long)]
        planner: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write 0 in the wall_ms column so the CSV is reproducible byte for byte.
        #[arg(long)]
        no_timing: bool,
        #[arg(long)]
        no_plots: bool,
    },
}

fn load(common: &Common) -> anyhow::Result<(RunConfig, u64)> {
    let cfg = RunConfig::load(&common.config).with_context(|| format!("loading {}", common.config.display()))?;
    let seed = common.seed.unwrap_or(cfg.seed);
    Ok((cfg, seed))
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn plan(common: &Common, planner: &str, out: Option<&Path>, mcts: bool) -> anyhow::Result<()> {
    let (cfg, seed) = load(common)?;
    let planner: PlannerKind = planner.parse()?;
    if planner.is_mcts() != mcts {
        bail!("{planner} is not a {} planner", if mcts { "MCTS" } else { "given-tree" });
    }
    let sc = &cfg.scenario;
    let problem = build_problem::<f64>(sc)?;
    let schedule = sc.schedule()?;
    let belief = initial_belief(sc, &mut stream(seed, Purpose::PriorSampling, 0, 0))?;
    let start = std::time::Instant::now();
    let outcome = plan_once(sc, &problem, &schedule, planner, &belief, 0, session_seed(seed, 0), out.is_some())?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let actions = problem.actions.at(0);
    print_json(&serde_json::json!({
        "planner": planner,
        "seed": seed,
        "action": actions[outcome.action_index].name,
        "root_q": outcome
            .root_q
            .iter()
            .map(|&(j, lower, upper)| serde_json::json!({"action": actions[j].name, "lower": lower, "upper": upper}))
            .collect::<Vec<_>>(),
        "motion_calls": outcome.calls.motion,
        "obs_calls": outcome.calls.observation,
        "resimpl_calls": outcome.resimplifications,
        "particle_speedup": bsp_harness::particle_speedup(sc.n_x, outcome.levels.iter().map(|l| l.1)),
        "wall_ms": wall_ms,
    }))?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        if let Some(tree) = &outcome.tree {
            let path = dir.join("tree.jsonl");
            let mut levels = vec![0; tree.len()];
            for (slot, &(_, p)) in levels.iter_mut().skip(1).zip(&outcome.levels) {
                *slot = schedule.level_sizes().iter().position(|&s| s == p).map_or(0, |l| l + 1);
            }
            let mut w = BufWriter::new(File::create(&path)?);
            tree.write_json_lines(&mut w, Some(&levels))?;
            w.flush()?;
            eprintln!("wrote {}", path.display());
        }
        if let Some(trace) = &outcome.trace {
            let path = dir.join("trace.jsonl");
            let mut w = BufWriter::new(File::create(&path)?);
            for (sim, steps) in trace.iter().enumerate() {
                serde_json::to_writer(&mut w, &serde_json::json!({"simulation": sim, "steps": steps}))?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::BoundsStudy { common, out } => {
            let (cfg, seed) = load(&common)?;
            let study = cfg.bounds_study.as_ref().context("the config has no bounds_study block")?;
            let rows = bounds_study(&cfg.scenario, study, seed)?;
            for r in &rows {
                let widths: Vec<String> = r.bounds.iter().map(|b| format!("{}:{:.4}", b.particles, b.width())).collect();
                println!("step {:>2}  H = {:>8.4}  kalman = {:>8.4}  widths {}", r.step, r.boers_entropy, r.kalman_entropy, widths.join(" "));
            }
            for p in emit_bounds_study(&rows, &cfg.scenario.beacons, &out)? {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::PlanGivenTree { common, planner, out } => plan(&common, &planner, out.as_deref(), false)?,
        Command::PlanMcts { common, planner, out } => plan(&common, &planner, out.as_deref(), true)?,
        Command::ConsistencyCheck { common, trials, planner, out } => {
            let (cfg, seed) = load(&common)?;
            let candidate: PlannerKind = match planner {
                Some(p) => p.parse()?,
                None => *cfg.planners().last().context("no planner configured")?,
            };
            let baseline = candidate.baseline();
            if baseline == candidate {
                bail!("{candidate} is a baseline; pass a simplified planner");
            }
            let trials = trials.unwrap_or(cfg.trials);
            let report = run_consistency_experiment(&cfg.scenario, (baseline, candidate), trials, seed)?;
            for t in &report.trials {
                let status = if t.passed { "ok" } else { "DIVERGED" };
                println!(
                    "seed {:>4}  {status:<8}  motion calls {} -> {}  particle speedup {:.2}%",
                    t.seed, t.baseline_motion_calls, t.candidate_motion_calls, t.particle_speedup
                );
            }
            println!("{candidate} vs {baseline}: {}/{} trials identical", report.passed(), report.trials.len());
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                let path = dir.join("consistency.json");
                std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
                eprintln!("wrote {}", path.display());
            }
            if let Err(e) = report.check() {
                eprintln!("{e}");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Benchmark { common, trials, planner, out, no_timing, no_plots } => {
            let (cfg, seed) = load(&common)?;
            let planners: Vec<PlannerKind> = if planner.is_empty() {
                cfg.planners()
            } else {
                planner.iter().map(|p| p.parse()).collect::<Result<_, _>>()?
            };
            let trials = trials.unwrap_or(cfg.trials);
            let results = run_trials(&cfg.scenario, &planners, trials, seed, EpisodeOptions::default())?;
            for p in &planners {
                let rs: Vec<_> = results.iter().filter(|r| r.planner == *p).collect();
                let n = rs.len().max(1) as f64;
                let mean = |f: &dyn Fn(&bsp_harness::TrialResult) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
                println!(
                    "{:<9} return {:>10.4}  motion calls {:>14.1}  obs calls {:>10.1}  resimpl {:>8.1}  particle speedup {:>6.2}%  wall {:>9.1} ms",
                    p.name(),
                    mean(&|r| r.ret),
                    mean(&|r| r.ledger.motion_calls as f64),
                    mean(&|r| r.ledger.obs_calls as f64),
                    mean(&|r| r.ledger.resimplification_calls as f64),
                    mean(&|r| r.particle_speedup()),
                    mean(&|r| r.ledger.wall_ms()),
                );
            }
            let opts = EmitOptions { timing: !no_timing, plots: !no_plots };
            for p in emit_results(&results, &out, opts)? {
                eprintln!("wrote {}", p.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! Batch runner for teach, repeat, speed-sweep and robustness experiments.

use std::error::Error;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tr_smc::harness::{
    run_robustness_corners, run_speed_sweep, run_teach, run_trials, BaselineGains, ControllerKind, ExperimentConfig,
    RepeatOptions, TeachRun,
};
use tr_smc::path::PathSpec;
use tr_smc::report::{emit_report, load_trials};
use tr_smc::world::EnvironmentProfile;

#[derive(Parser)]
#[command(name = "tr-sim", version, about = "Skid-steer teach-and-repeat simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (key = value); defaults to the built-in indoor setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `indoor`, `outdoor`, or a profile file.
    #[arg(long, global = true)]
    profile: Option<String>,
    /// Repeat speed cap (m/s).
    #[arg(long, global = true)]
    speed: Option<f64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Controller {
    Smc,
    Baseline,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Drive the scripted path and record the teach map.
    Teach,
    /// Teach, then run repeat trials and write a report.
    Repeat {
        #[arg(long, value_enum, default_value = "smc")]
        controller: Controller,
        /// Reuse a saved teach run instead of teaching again.
        #[arg(long)]
        teach: Option<PathBuf>,
    },
    /// Repeat at several speed caps with identical gains.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "0.35,0.6")]
        speeds: Vec<f64>,
        #[arg(long, value_enum, default_value = "both")]
        controller: Controller,
    },
    /// One repeat per plant-parameter corner with nominal controller values.
    Corners {
        #[arg(long, default_value_t = 0.25)]
        fraction: f64,
    },
    /// Rebuild plots and metrics from the logs of a previous `repeat`.
    Report,
}

type Result<T> = std::result::Result<T, Box<dyn Error>>;

fn config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(name) = &common.profile {
        cfg.profile = match EnvironmentProfile::by_name(name) {
            Some(p) => p,
            None => EnvironmentProfile::load(name)?,
        };
        if name == "outdoor" {
            cfg.path = PathSpec::outdoor_loop();
        }
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(speed) = common.speed {
        cfg.max_speed = speed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("tr-sim-out"))
}

fn teach(cfg: &ExperimentConfig, dir: &Path) -> Result<TeachRun> {
    let run = run_teach(cfg)?;
    std::fs::create_dir_all(dir)?;
    run.save(dir)?;
    println!(
        "teach: {} keyframes over {:.2} m, terminal odometry drift {:.3} m -> {}",
        run.map.len(),
        run.path_length,
        run.terminal_drift,
        dir.display()
    );
    Ok(run)
}

fn controllers(choice: Controller) -> Vec<ControllerKind> {
    let baseline = ControllerKind::Baseline(BaselineGains::default());
    match choice {
        Controller::Smc => vec![ControllerKind::Smc],
        Controller::Baseline => vec![baseline],
        Controller::Both => vec![ControllerKind::Smc, baseline],
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config(&cli.common)?;
    let out = out_dir(&cfg);
    match cli.command {
        Command::Teach => {
            teach(&cfg, &out.join("teach"))?;
        }
        Command::Repeat { controller, teach: saved } => {
            let teach_run = match saved {
                Some(dir) => TeachRun::load(dir)?,
                None => teach(&cfg, &out.join("teach"))?,
            };
            for kind in controllers(controller) {
                let trials = run_trials(&cfg, &teach_run, &RepeatOptions { controller: kind, ..RepeatOptions::default() })?;
                for t in &trials {
                    println!(
                        "repeat {} trial {}: {} mean_dist {:.4} m, mae ({:.4} m, {:.4} m, {:.3} deg){}",
                        t.controller,
                        t.trial,
                        t.metrics.status(),
                        t.metrics.mean_dist,
                        t.metrics.mae_x,
                        t.metrics.mae_y,
                        t.metrics.mae_theta,
                        t.metrics.divergence.map_or(String::new(), |d| format!(", {}", d.describe()))
                    );
                }
                let dir = out.join(format!("repeat-{}", kind.name()));
                emit_report(&dir, &teach_run, &trials)?;
                println!("report -> {}", dir.display());
            }
        }
        Command::Sweep { speeds, controller } => {
            let teach_run = teach(&cfg, &out.join("teach"))?;
            let mut table = String::from("speed,controller,trial,stability,mean_dist,mae_x,mae_y,mae_theta_deg\n");
            for kind in controllers(controller) {
                for row in run_speed_sweep(&cfg, &teach_run, &speeds, kind)? {
                    for (i, m) in row.trials.iter().enumerate() {
                        let _ = writeln!(
                            table,
                            "{:.3},{},{i},{},{:.6},{:.6},{:.6},{:.6}",
                            row.speed,
                            row.controller,
                            m.status(),
                            m.mean_dist,
                            m.mae_x,
                            m.mae_y,
                            m.mae_theta
                        );
                    }
                    println!(
                        "sweep {} at {:.2} m/s: {}/{} stable, mean_dist {:.4} m",
                        row.controller,
                        row.speed,
                        row.trials.iter().filter(|m| m.stable).count(),
                        row.trials.len(),
                        row.mean_dist()
                    );
                }
            }
            std::fs::write(out.join("sweep.csv"), table)?;
        }
        Command::Corners { fraction } => {
            let teach_run = teach(&cfg, &out.join("teach"))?;
            let rows = run_robustness_corners(&cfg, &teach_run, fraction)?;
            let mut table = String::from("mask,x0,c1,c2,c3,c4,c5,c6,stability,mean_dist,max_dist\n");
            for r in &rows {
                let c = r.params.coefficients();
                let _ = writeln!(
                    table,
                    "{},{},{},{},{},{},{},{},{},{:.6},{:.6}",
                    r.mask,
                    r.x0,
                    c[0],
                    c[1],
                    c[2],
                    c[3],
                    c[4],
                    c[5],
                    r.metrics.status(),
                    r.metrics.mean_dist,
                    r.metrics.max_dist
                );
            }
            std::fs::write(out.join("corners.csv"), table)?;
            let stable = rows.iter().filter(|r| r.metrics.stable).count();
            let worst = rows.iter().map(|r| r.metrics.mean_dist).fold(0.0, f64::max);
            println!("corners: {stable}/{} stable, worst mean_dist {worst:.4} m", rows.len());
        }
        Command::Report => {
            let teach_run = TeachRun::load(out.join("teach"))?;
            let mut found = false;
            for name in ["repeat-smc", "repeat-baseline"] {
                let dir = out.join(name);
                if !dir.join("metrics.txt").exists() {
                    continue;
                }
                found = true;
                let trials = load_trials(&dir, &cfg.divergence, teach_run.map.total_length())?;
                let rebuilt = dir.join("rebuilt");
                emit_report(&rebuilt, &teach_run, &trials)?;
                println!("report -> {}", rebuilt.display());
            }
            if !found {
                return Err(format!("no repeat output under {}", out.display()).into());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tr-sim: {e}");
            ExitCode::FAILURE
        }
    }
}

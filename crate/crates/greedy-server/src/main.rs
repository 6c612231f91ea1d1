//! Command-line front end: runs, verification, block reports, ensembles.
//!
//! Every command is a pure function of (flags, config file, seed); reruns are
//! byte-identical apart from the manifest's wall-clock field. Exit codes:
//! 0 success, 1 usage or config error, 2 verification failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use greedy_server::blocks::restart_scan;
use greedy_server::config::parse_mu_spec;
use greedy_server::dynamics::{run_walk, RngDrives, Walker};
use greedy_server::experiments::{
    first_step_law, run_ensemble, scaling_coupling,
};
use greedy_server::field::coupling_check;
use greedy_server::rng::run_rng;
use greedy_server::{EngineCase, ServiceDist, SimConfig, Speed};

#[derive(Parser)]
#[command(name = "greedy-server", version, about = "Greedy server on the line: simulation and verification")]
struct Cli {
    /// JSON config file; explicit flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Engine case: unit | general.
    #[arg(long, global = true)]
    case: Option<String>,
    /// Arrival intensity.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Server speed; a number or `inf`.
    #[arg(long, global = true)]
    v: Option<String>,
    /// Service law: det1 | exp.
    #[arg(long, global = true)]
    service: Option<String>,
    /// Number of customers to serve.
    #[arg(long, global = true)]
    steps: Option<u64>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Block-detector tolerance, in (0, 1/2).
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Initial intensity: `level` or `level@a..b` entries, comma separated.
    #[arg(long, global = true)]
    mu: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one walk and export the trajectory and final potential.
    Simulate,
    /// Couple the direct field simulation against the potential engine.
    Verify {
        /// Number of seeds, starting at the master seed.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Run a walk, scan it for blocks and restarts, export the reports.
    Blocks {
        #[arg(long, default_value_t = 50)]
        max_blocks: u32,
    },
    /// Ensemble sweep over intensities.
    Sweep {
        #[arg(long, default_value_t = 20)]
        runs: u64,
        /// Comma-separated intensity grid; defaults to the configured lambda.
        #[arg(long)]
        lambdas: Option<String>,
    },
    /// Exact rescaling coupling between two intensities.
    Couple {
        #[arg(long, default_value_t = 1.0)]
        lambda1: f64,
        #[arg(long, default_value_t = 2.0)]
        lambda2: f64,
    },
    /// Distribution test of the first displacement.
    Firststep {
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
    },
}

/// Config-file schema: any subset of the run parameters.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    case: Option<EngineCase>,
    lambda: Option<f64>,
    speed: Option<Speed>,
    service: Option<ServiceDist>,
    horizon: Option<u64>,
    seed: Option<u64>,
    mu: Option<String>,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: String,
    config: &'a SimConfig,
    epsilon: Option<f64>,
    outputs: Vec<String>,
    version: &'static str,
    wall_clock: f64,
}

fn fail(code: i32, msg: impl std::fmt::Display) -> ! {
    eprintln!("error: {msg}");
    std::process::exit(code);
}

fn merge_config(cli: &Cli) -> Result<SimConfig, String> {
    let file: FileConfig = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => FileConfig::default(),
    };
    let mut cfg = SimConfig::default();
    if let Some(c) = file.case {
        cfg.case = c;
    }
    if let Some(l) = file.lambda {
        cfg.lambda = l;
    }
    if let Some(s) = file.speed {
        cfg.speed = s;
    }
    if let Some(s) = file.service {
        cfg.service = s;
    }
    if let Some(h) = file.horizon {
        cfg.horizon = h;
    }
    if let Some(s) = file.seed {
        cfg.seed = s;
    }
    if let Some(mu) = &file.mu {
        cfg.initial = parse_mu_spec(mu).map_err(|e| e.to_string())?;
    }
    if let Some(c) = &cli.case {
        cfg.case = match c.as_str() {
            "unit" => EngineCase::Unit,
            "general" => EngineCase::General,
            other => return Err(format!("unknown case {other:?} (expected unit or general)")),
        };
    }
    if let Some(l) = cli.lambda {
        cfg.lambda = l;
    }
    if let Some(v) = &cli.v {
        cfg.speed = v.parse().map_err(|e| format!("bad --v: {e}"))?;
    }
    if let Some(s) = &cli.service {
        cfg.service = match s.as_str() {
            "det1" => ServiceDist::Det1,
            "exp" => ServiceDist::Exp,
            other => return Err(format!("unknown service {other:?} (expected det1 or exp)")),
        };
    }
    if let Some(n) = cli.steps {
        cfg.horizon = n;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(mu) = &cli.mu {
        cfg.initial = parse_mu_spec(mu).map_err(|e| e.to_string())?;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn write_out(dir: &Path, name: &str, data: &str, outputs: &mut Vec<String>) {
    let path = dir.join(name);
    if let Err(e) = fs::write(&path, data) {
        fail(1, format!("{}: {e}", path.display()));
    }
    outputs.push(name.to_string());
}

fn write_manifest(dir: &Path, command: &str, cfg: &SimConfig, epsilon: Option<f64>, outputs: Vec<String>) {
    let wall_clock = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let manifest = RunManifest {
        command: command.to_string(),
        config: cfg,
        epsilon,
        outputs,
        version: env!("CARGO_PKG_VERSION"),
        wall_clock,
    };
    let text = serde_json::to_string_pretty(&manifest).unwrap();
    if let Err(e) = fs::write(dir.join("manifest.json"), text) {
        fail(1, format!("manifest.json: {e}"));
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version requests are success, everything else is usage error
            if e.use_stderr() {
                eprint!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    let cfg = match merge_config(&cli) {
        Ok(c) => c,
        Err(e) => fail(1, e),
    };
    if let Err(e) = fs::create_dir_all(&cli.out) {
        fail(1, format!("{}: {e}", cli.out.display()));
    }
    let out = cli.out.clone();
    let mut outputs = Vec::new();

    match &cli.cmd {
        Cmd::Simulate => {
            let drives = RngDrives::new(run_rng(cfg.seed, 0), cfg.service);
            let traj = match run_walk(&cfg, drives) {
                Ok(t) => t,
                Err(e) => fail(1, e),
            };
            write_out(&out, "trajectory.csv", &traj.to_csv(), &mut outputs);
            let mut walker = Walker::from_potential(traj.initial.clone(), &cfg);
            for r in &traj.steps {
                walker.step(r.drive).unwrap();
            }
            let pot = serde_json::to_string_pretty(walker.potential()).unwrap();
            write_out(&out, "potential.json", &pot, &mut outputs);
            write_manifest(&out, "simulate", &cfg, None, outputs);
            let last = traj.steps.last();
            println!(
                "simulate: {} steps, final S = {}, t = {}",
                traj.steps.len(),
                last.map_or(0.0, |r| r.s),
                last.map_or(0.0, |r| r.t),
            );
        }
        Cmd::Verify { seeds } => {
            if *seeds == 0 {
                println!("verify: 0 seeds requested, vacuous pass");
                eprintln!("warning: no seeds verified");
                write_manifest(&out, "verify", &cfg, None, outputs);
                return;
            }
            let mut failures = 0u64;
            let mut lines = Vec::new();
            for s in cfg.seed..cfg.seed + seeds {
                let run_cfg = SimConfig { seed: s, ..cfg.clone() };
                match coupling_check(&run_cfg, 1e-9) {
                    Ok(rep) if rep.pass => {
                        println!("seed {s}: pass (max dev {:.3e})", rep.max_position_dev);
                        lines.push(format!(
                            "{{\"seed\":{s},\"pass\":true,\"max_dev\":{}}}",
                            rep.max_position_dev
                        ));
                    }
                    Ok(rep) => {
                        failures += 1;
                        let d = rep.first_divergence.unwrap();
                        println!(
                            "seed {s}: FAIL at step {} (direct S = {}, engine S = {})",
                            d.n, d.direct_s, d.engine_s
                        );
                        lines.push(format!(
                            "{{\"seed\":{s},\"pass\":false,\"step\":{}}}",
                            d.n
                        ));
                    }
                    Err(e) => {
                        failures += 1;
                        println!("seed {s}: FAIL ({e})");
                        lines.push(format!("{{\"seed\":{s},\"pass\":false}}"));
                    }
                }
            }
            write_out(&out, "verify.jsonl", &(lines.join("\n") + "\n"), &mut outputs);
            write_manifest(&out, "verify", &cfg, None, outputs);
            if failures > 0 {
                fail(2, format!("{failures} of {seeds} seeds diverged"));
            }
            println!("verify: {seeds} seeds pass");
        }
        Cmd::Blocks { max_blocks } => {
            let epsilon = cli.epsilon.unwrap_or(0.1);
            let drives = RngDrives::new(run_rng(cfg.seed, 0), cfg.service);
            let traj = match run_walk(&cfg, drives) {
                Ok(t) => t,
                Err(e) => fail(1, e),
            };
            let scan = match restart_scan(&traj, &cfg, epsilon, *max_blocks) {
                Ok(s) => s,
                Err(e) => fail(1, e),
            };
            let reports: Vec<_> = scan.attempts.iter().map(|a| &a.report).collect();
            let doc = serde_json::json!({
                "epsilon": epsilon,
                "restarts": scan.restart_indices(),
                "clean_attempt": scan.clean_attempt,
                "truncated": scan.truncated,
                "attempts": reports,
            });
            write_out(
                &out,
                "blocks.json",
                &serde_json::to_string_pretty(&doc).unwrap(),
                &mut outputs,
            );
            write_manifest(&out, "blocks", &cfg, Some(epsilon), outputs);
            println!(
                "blocks: {} attempt(s), {} restart(s), clean = {:?}",
                scan.attempts.len(),
                scan.attempts.len() - 1,
                scan.clean_attempt
            );
        }
        Cmd::Sweep { runs, lambdas } => {
            if *runs == 0 {
                fail(1, "sweep needs at least one run");
            }
            let grid: Vec<f64> = match lambdas {
                Some(spec) => match spec
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                {
                    Ok(g) if !g.is_empty() => g,
                    _ => fail(1, format!("bad --lambdas {spec:?}")),
                },
                None => vec![cfg.lambda],
            };
            for lambda in grid {
                let run_cfg = SimConfig { lambda, ..cfg.clone() };
                let summary = match run_ensemble(&run_cfg, *runs) {
                    Ok(s) => s,
                    Err(e) => fail(1, e),
                };
                let tag = format!("{lambda}").replace('.', "_");
                write_out(&out, &format!("sweep_lambda_{tag}.json"), &summary.to_json(), &mut outputs);
                write_out(
                    &out,
                    &format!("sweep_lambda_{tag}_checkpoints.csv"),
                    &summary.checkpoints_csv(),
                    &mut outputs,
                );
                write_out(
                    &out,
                    &format!("sweep_lambda_{tag}_plot.csv"),
                    &summary.plot_data(),
                    &mut outputs,
                );
                println!(
                    "sweep lambda = {lambda}: mean slope {:.3}, median ratio {:.3}, positive {:.2}",
                    summary.mean_slope, summary.median_ratio, summary.positive_fraction
                );
            }
            write_manifest(&out, "sweep", &cfg, None, outputs);
        }
        Cmd::Couple { lambda1, lambda2 } => {
            let dev = match scaling_coupling(&cfg, *lambda1, *lambda2) {
                Ok(d) => d,
                Err(e) => fail(1, e),
            };
            let pass = dev < 1e-12;
            let doc = serde_json::json!({
                "lambda1": lambda1, "lambda2": lambda2,
                "steps": cfg.horizon, "max_deviation": dev, "pass": pass,
            });
            write_out(&out, "couple.json", &serde_json::to_string_pretty(&doc).unwrap(), &mut outputs);
            write_manifest(&out, "couple", &cfg, None, outputs);
            println!("couple: max deviation {dev:.3e}");
            if !pass {
                fail(2, "rescaling coupling deviates beyond 1e-12");
            }
        }
        Cmd::Firststep { samples } => {
            let rep = match first_step_law(cfg.lambda, *samples, cfg.seed) {
                Ok(r) => r,
                Err(e) => fail(1, e),
            };
            write_out(
                &out,
                "firststep.json",
                &serde_json::to_string_pretty(&rep).unwrap(),
                &mut outputs,
            );
            write_manifest(&out, "firststep", &cfg, None, outputs);
            println!(
                "firststep: KS p = {:.4}, left fraction {:.4} ({:.2} sigma)",
                rep.ks_pvalue, rep.left_fraction, rep.side_sigmas
            );
            if rep.ks_pvalue <= 0.01 || rep.side_sigmas >= 3.0 {
                fail(2, "first-step law rejected");
            }
        }
    }
}

//! Ensemble experiments: reproducing the logarithmic escape of the server at
//! desk scale, the exact rescaling coupling, the first-step law, and restart
//! statistics for the block machinery.
//!
//! Ensembles run one walker per RNG substream in parallel and reduce in run
//! order, so the output never depends on scheduling.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::blocks::{restart_scan, BlocksError};
use crate::config::{EngineCase, SimConfig, Speed};
use crate::dynamics::{run_walk, step_unit_mut, DynamicsError, RngDrives, Trajectory, Walker};
use crate::potential::Potential;
use crate::rng::run_rng;
use crate::stats::{exp_cdf, ks_pvalue, ks_statistic, linear_fit, mean, median};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("need at least one run")]
    NoRuns,
    #[error("window [{0}, {1}] holds too few checkpoints for a slope")]
    DegenerateWindow(u64, u64),
    #[error("the rescaling coupling is exact only for the unit case at infinite speed")]
    CouplingNotExact,
    #[error("invalid config: {0}")]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Blocks(#[from] BlocksError),
}

/// Log-spaced checkpoint grid: rounded powers of `10^{1/4}` up to the
/// horizon, horizon included.
pub fn log_checkpoints(horizon: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let n = 10f64.powf(k as f64 / 4.0).round() as u64;
        if n > horizon {
            break;
        }
        if out.last() != Some(&n) {
            out.push(n);
        }
        k += 1;
    }
    if out.last() != Some(&horizon) && horizon > 0 {
        out.push(horizon);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunStat {
    pub run: u64,
    pub final_s: f64,
    pub final_t: f64,
    pub sign: i8,
    /// `|S| * lambda / log t` at the final checkpoint.
    pub ratio: f64,
    /// Least-squares slope of `sigma S` against `lambda^{-1} log t` over the
    /// window checkpoints; sigma is the final-checkpoint sign.
    pub slope: Option<f64>,
    /// `(t, S)` at each checkpoint.
    pub checkpoints: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub runs: u64,
    pub horizon: u64,
    pub lambda: f64,
    pub checkpoint_grid: Vec<u64>,
    /// Slope-regression window in customer counts.
    pub window: (u64, u64),
    pub per_run: Vec<RunStat>,
    pub mean_slope: f64,
    pub median_ratio: f64,
    pub positive_fraction: f64,
    /// Per checkpoint gap: how many runs changed sign across it.
    pub sign_flips: Vec<u64>,
}

impl EnsembleSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap()
    }

    /// `run,checkpoint_n,t,S` matrix.
    pub fn checkpoints_csv(&self) -> String {
        let mut out = String::from("run,checkpoint_n,t,S\n");
        for r in &self.per_run {
            for (&n, &(t, s)) in self.checkpoint_grid.iter().zip(&r.checkpoints) {
                out.push_str(&format!("{},{},{},{}\n", r.run, n, t, s));
            }
        }
        out
    }

    /// Plot data: `log t` against `sigma S`, one block per run separated by a
    /// blank line.
    pub fn plot_data(&self) -> String {
        let mut out = String::from("logt,sigmaS\n");
        for r in &self.per_run {
            let sig = r.sign as f64;
            for &(t, s) in &r.checkpoints {
                if t > 0.0 {
                    out.push_str(&format!("{},{}\n", t.ln(), sig * s));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Fraction of runs whose sign differs between the checkpoints nearest
    /// the two given counts.
    pub fn flip_fraction_between(&self, n_lo: u64, n_hi: u64) -> f64 {
        let idx = |n: u64| {
            self.checkpoint_grid
                .iter()
                .enumerate()
                .min_by_key(|(_, &c)| c.abs_diff(n))
                .map(|(i, _)| i)
                .unwrap()
        };
        let (i, j) = (idx(n_lo), idx(n_hi));
        let flips = self
            .per_run
            .iter()
            .filter(|r| (r.checkpoints[i].1 > 0.0) != (r.checkpoints[j].1 > 0.0))
            .count();
        flips as f64 / self.per_run.len() as f64
    }
}

fn run_one(config: &SimConfig, run_index: u64, grid: &[u64]) -> Result<Vec<(f64, f64)>, DynamicsError> {
    let mut walker = Walker::new(config)?;
    let mut drives = RngDrives::new(run_rng(config.seed, run_index), config.service);
    let mut checkpoints = Vec::with_capacity(grid.len());
    let mut next = grid.iter().copied().peekable();
    for n in 1..=config.horizon {
        walker.step(drives.next().unwrap())?;
        if next.peek() == Some(&n) {
            checkpoints.push((walker.time(), walker.position()));
            next.next();
        }
    }
    Ok(checkpoints)
}

/// Runs `runs` seeded walks in parallel (RNG substreams `1..=runs`), recording
/// positions on the log-spaced checkpoint grid, and summarizes slopes, final
/// ratios and sign statistics. The slope window defaults to the top two
/// decades, `[horizon/100, horizon]`.
pub fn run_ensemble(config: &SimConfig, runs: u64) -> Result<EnsembleSummary, ExperimentError> {
    if runs == 0 {
        return Err(ExperimentError::NoRuns);
    }
    config.validate()?;
    let grid = log_checkpoints(config.horizon);
    let window = ((config.horizon / 100).max(1), config.horizon);
    let results: Result<Vec<_>, DynamicsError> = (1..=runs)
        .into_par_iter()
        .map(|run| run_one(config, run, &grid).map(|c| (run, c)))
        .collect();
    let results = results?;
    let mut per_run = Vec::with_capacity(runs as usize);
    for (run, checkpoints) in results {
        let &(final_t, final_s) = checkpoints.last().unwrap_or(&(0.0, 0.0));
        let sign = if final_s > 0.0 { 1i8 } else { -1 };
        let ratio = if final_t > 1.0 {
            final_s.abs() * config.lambda / final_t.ln()
        } else {
            0.0
        };
        let pts: Vec<(f64, f64)> = grid
            .iter()
            .zip(&checkpoints)
            .filter(|(&n, &(t, _))| n >= window.0 && n <= window.1 && t > 1.0)
            .map(|(_, &(t, s))| (t.ln() / config.lambda, sign as f64 * s))
            .collect();
        let slope = linear_fit(&pts).map(|(m, _)| m);
        per_run.push(RunStat {
            run,
            final_s,
            final_t,
            sign,
            ratio,
            slope,
            checkpoints,
        });
    }
    let slopes: Vec<f64> = per_run.iter().filter_map(|r| r.slope).collect();
    let ratios: Vec<f64> = per_run.iter().map(|r| r.ratio).collect();
    let positive = per_run.iter().filter(|r| r.sign > 0).count();
    let mut sign_flips = vec![0u64; grid.len().saturating_sub(1)];
    for r in &per_run {
        for (g, w) in r.checkpoints.windows(2).enumerate() {
            if (w[0].1 > 0.0) != (w[1].1 > 0.0) {
                sign_flips[g] += 1;
            }
        }
    }
    Ok(EnsembleSummary {
        runs,
        horizon: config.horizon,
        lambda: config.lambda,
        checkpoint_grid: grid,
        window,
        per_run,
        mean_slope: if slopes.is_empty() { f64::NAN } else { mean(&slopes) },
        median_ratio: median(&ratios),
        positive_fraction: positive as f64 / runs as f64,
        sign_flips,
    })
}

/// Runs from an inhomogeneous initial intensity. Identical to `run_ensemble`
/// except in name: sign symmetry is not a meaningful statistic here and the
/// caller must not assert it.
pub fn inhomogeneous_ensemble(config: &SimConfig, runs: u64) -> Result<EnsembleSummary, ExperimentError> {
    run_ensemble(config, runs)
}

/// Least-squares slope of `sigma S_n` against `lambda^{-1} log t_n` over the
/// steps with `n` in the window; sigma is the sign at the window's end.
pub fn slope_estimate(
    traj: &Trajectory,
    window: (u64, u64),
) -> Result<f64, ExperimentError> {
    let steps: Vec<_> = traj
        .steps
        .iter()
        .filter(|r| r.n >= window.0 && r.n <= window.1 && r.t > 1.0)
        .collect();
    let sigma = match steps.last() {
        Some(r) if r.s > 0.0 => 1.0,
        Some(_) => -1.0,
        None => return Err(ExperimentError::DegenerateWindow(window.0, window.1)),
    };
    let pts: Vec<(f64, f64)> = steps
        .iter()
        .map(|r| (r.t.ln() / traj.lambda, sigma * r.s))
        .collect();
    linear_fit(&pts)
        .map(|(m, _)| m)
        .ok_or(ExperimentError::DegenerateWindow(window.0, window.1))
}

/// Runs the same drive stream at two intensities and returns the maximum
/// deviation from the exact rescaling `S_n(l2) = (l1/l2) S_n(l1)`. Only the
/// unit case at infinite speed couples exactly (travel time would break it).
pub fn scaling_coupling(
    config: &SimConfig,
    lambda1: f64,
    lambda2: f64,
) -> Result<f64, ExperimentError> {
    if config.case != EngineCase::Unit || config.speed != Speed::Infinite {
        return Err(ExperimentError::CouplingNotExact);
    }
    let mut w1 = Walker::new(&SimConfig {
        lambda: lambda1,
        ..config.clone()
    })?;
    let mut w2 = Walker::new(&SimConfig {
        lambda: lambda2,
        ..config.clone()
    })?;
    let mut drives = RngDrives::new(run_rng(config.seed, 0), config.service);
    let factor = lambda1 / lambda2;
    let mut max_dev = 0.0f64;
    for _ in 0..config.horizon {
        let d = drives.next().unwrap();
        w1.step(d)?;
        w2.step(d)?;
        max_dev = max_dev.max((w2.position() - factor * w1.position()).abs());
    }
    Ok(max_dev)
}

#[derive(Clone, Debug, Serialize)]
pub struct FirstStepReport {
    pub samples: u64,
    pub lambda: f64,
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
    pub left_fraction: f64,
    /// `|left_fraction - 1/2|` in binomial standard deviations.
    pub side_sigmas: f64,
}

/// Samples the first displacement from the standard start: its modulus should
/// be exponential with rate `2 lambda` and its side a fair coin.
pub fn first_step_law(
    lambda: f64,
    samples: u64,
    seed: u64,
) -> Result<FirstStepReport, ExperimentError> {
    let fresh = Potential::make_initial(&crate::potential::BaselineSpec::Constant(-1.0), 0.0)
        .expect("standard start");
    let mut drives = RngDrives::new(run_rng(seed, 0), crate::config::ServiceDist::Det1);
    let mut moduli = Vec::with_capacity(samples as usize);
    let mut lefts = 0u64;
    for _ in 0..samples {
        let d = drives.next().unwrap();
        let mut pot = fresh.clone();
        let out = step_unit_mut(&mut pot, d.e, d.u, lambda)?;
        moduli.push(out.z);
        if out.new_pos < 0.0 {
            lefts += 1;
        }
    }
    let ks = ks_statistic(&moduli, exp_cdf(2.0 * lambda));
    let left_fraction = lefts as f64 / samples as f64;
    let sd = 0.5 / (samples as f64).sqrt();
    Ok(FirstStepReport {
        samples,
        lambda,
        ks_statistic: ks,
        ks_pvalue: ks_pvalue(ks, moduli.len()),
        left_fraction,
        side_sigmas: (left_fraction - 0.5).abs() / sd,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RestartStats {
    pub runs: u64,
    pub epsilon: f64,
    pub target_block: u32,
    /// Restarts before the first clean attempt, one entry per run; capped by
    /// the horizon for truncated runs.
    pub restart_counts: Vec<u64>,
    pub clean_runs: u64,
    /// `L_{target} / (48 target^{5/4} / 5)` over clean runs whose clean
    /// attempt reached the target block.
    pub l_ratios: Vec<f64>,
    /// Empirical `P(restarts >= k)` for `k = 1, 2, ...`.
    pub tail: Vec<f64>,
}

/// Runs full trajectories, applies the restart scan to each and aggregates
/// restart counts and the block-time growth statistic.
pub fn restart_statistics(
    config: &SimConfig,
    runs: u64,
    epsilon: f64,
    target_block: u32,
) -> Result<RestartStats, ExperimentError> {
    if runs == 0 {
        return Err(ExperimentError::NoRuns);
    }
    config.validate()?;
    let per_run: Result<Vec<_>, ExperimentError> = (1..=runs)
        .into_par_iter()
        .map(|run| {
            let drives = RngDrives::new(run_rng(config.seed, run), config.service);
            let traj = run_walk(config, drives)?;
            let scan = restart_scan(&traj, config, epsilon, target_block)?;
            let restarts = (scan.attempts.len() - 1) as u64;
            let ratio = scan.clean_attempt.and_then(|i| {
                let rep = &scan.attempts[i].report;
                let rec = rep.blocks.get(target_block as usize - 1)?;
                if rec.truncated {
                    return None;
                }
                let expected = 48.0 * (target_block as f64).powf(1.25) / 5.0;
                Some(rec.time_start / expected)
            });
            Ok((restarts, scan.clean_attempt.is_some(), ratio))
        })
        .collect();
    let per_run = per_run?;
    let restart_counts: Vec<u64> = per_run.iter().map(|r| r.0).collect();
    let clean_runs = per_run.iter().filter(|r| r.1).count() as u64;
    let l_ratios: Vec<f64> = per_run.iter().filter_map(|r| r.2).collect();
    let max_k = restart_counts.iter().copied().max().unwrap_or(0);
    let tail: Vec<f64> = (1..=max_k)
        .map(|k| restart_counts.iter().filter(|&&c| c >= k).count() as f64 / runs as f64)
        .collect();
    Ok(RestartStats {
        runs,
        epsilon,
        target_block,
        restart_counts,
        clean_runs,
        l_ratios,
        tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ServiceDist;
    use crate::dynamics::{DriveTriple, StepOutcome, StepRecord};
    use crate::potential::BaselineSpec;
    use crate::dynamics::Side;

    #[test]
    fn checkpoint_grid_shape() {
        let g = log_checkpoints(1000);
        assert_eq!(g.first(), Some(&1));
        assert_eq!(g.last(), Some(&1000));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(g.contains(&10) && g.contains(&100) && g.contains(&316));
        assert_eq!(log_checkpoints(0), Vec::<u64>::new());
    }

    fn synthetic_log_traj(scale: f64, n: u64) -> Trajectory {
        let initial =
            Potential::make_initial(&BaselineSpec::Constant(-1.0), 0.0).unwrap();
        let steps = (1..=n)
            .map(|k| {
                let t = k as f64;
                let s = scale * t.ln();
                StepRecord {
                    n: k,
                    t,
                    s,
                    outcome: StepOutcome {
                        z: 0.0,
                        side: Side::Right,
                        a: 1.0,
                        b: 1.0,
                        new_pos: s,
                        new_max: t,
                        travel_time: 0.0,
                    },
                    drive: DriveTriple { t: 1.0, e: 1.0, u: 0.5 },
                }
            })
            .collect();
        Trajectory {
            case: EngineCase::Unit,
            lambda: 1.0,
            initial,
            steps,
        }
    }

    #[test]
    fn slope_recovers_synthetic_scales() {
        let t1 = synthetic_log_traj(1.0, 2000);
        assert!((slope_estimate(&t1, (100, 2000)).unwrap() - 1.0).abs() < 1e-9);
        let t2 = synthetic_log_traj(2.0, 2000);
        assert!((slope_estimate(&t2, (100, 2000)).unwrap() - 2.0).abs() < 1e-9);
        let neg = synthetic_log_traj(-1.5, 2000);
        assert!((slope_estimate(&neg, (100, 2000)).unwrap() - 1.5).abs() < 1e-9);
    }

    #[test]
    fn ensemble_smoke_and_determinism() {
        let cfg = SimConfig {
            horizon: 3000,
            seed: 5,
            ..SimConfig::default()
        };
        let a = run_ensemble(&cfg, 8).unwrap();
        let b = run_ensemble(&cfg, 8).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_run.len(), 8);
        assert!(a.per_run.iter().all(|r| r.ratio.is_finite()));
        assert!(a.median_ratio > 0.1 && a.median_ratio < 3.0);
        let csv = a.checkpoints_csv();
        assert!(csv.starts_with("run,checkpoint_n,t,S\n"));
        assert_eq!(
            csv.lines().count(),
            1 + 8 * a.checkpoint_grid.len()
        );
    }

    #[test]
    fn zero_runs_rejected() {
        let cfg = SimConfig::default();
        assert!(matches!(run_ensemble(&cfg, 0), Err(ExperimentError::NoRuns)));
    }

    #[test]
    fn scaling_coupling_exact() {
        let cfg = SimConfig {
            horizon: 2000,
            seed: 11,
            ..SimConfig::default()
        };
        assert_eq!(scaling_coupling(&cfg, 1.0, 1.0).unwrap(), 0.0);
        assert!(scaling_coupling(&cfg, 1.0, 2.0).unwrap() < 1e-12);
        assert!(scaling_coupling(&cfg, 1.0, 0.5).unwrap() < 1e-12);
        let bad = SimConfig {
            case: EngineCase::General,
            service: ServiceDist::Exp,
            speed: Speed::Finite(1.0),
            ..cfg
        };
        assert!(matches!(
            scaling_coupling(&bad, 1.0, 2.0),
            Err(ExperimentError::CouplingNotExact)
        ));
    }

    #[test]
    fn first_step_law_at_three_rates() {
        for (lambda, seed) in [(0.5, 1u64), (1.0, 2), (2.0, 3)] {
            let rep = first_step_law(lambda, 20_000, seed).unwrap();
            assert!(rep.ks_pvalue > 0.01, "lambda {lambda}: p = {}", rep.ks_pvalue);
            assert!(rep.side_sigmas < 3.0, "lambda {lambda}: {}", rep.side_sigmas);
        }
    }

    #[test]
    fn restart_statistics_smoke() {
        let cfg = SimConfig {
            horizon: 8_000,
            seed: 21,
            ..SimConfig::default()
        };
        let stats = restart_statistics(&cfg, 4, 0.4, 10).unwrap();
        assert_eq!(stats.restart_counts.len(), 4);
        assert!(stats.tail.windows(2).all(|w| w[0] >= w[1]));
        for r in &stats.l_ratios {
            assert!(r.is_finite() && *r > 0.0);
        }
    }
}

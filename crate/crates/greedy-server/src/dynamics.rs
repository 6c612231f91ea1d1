//! The step operators and the sequential walk driver.
//!
//! One step of the walk: grow a symmetric window around the spike until the
//! space-time area swept (weighted by the arrival intensity) equals the
//! drive's exponential variable `E`, read off the boundary gaps `a` and `b`,
//! let the uniform variable `U` pick the side, raise the swept window to the
//! top level, and plant the new spike at the chosen window edge.
//!
//! The unit case (T = 1, infinite speed) sweeps up to the current maximum and
//! lifts the spike by one. The general case sweeps up to `M + T` and lifts the
//! spike to `M + T + z/v`. Both are implemented verbatim; the engine case in
//! the configuration selects one.
//!
//! ```
//! use greedy_server::potential::{BaselineSpec, Potential};
//! use greedy_server::dynamics::{step_unit, Side};
//!
//! let u = Potential::make_initial(&BaselineSpec::Constant(-1.0), 0.0).unwrap();
//! let (next, out) = step_unit(&u, 2.0, 0.25, 1.0).unwrap();
//! assert_eq!(out.z, 1.0);
//! assert_eq!(out.side, Side::Left);
//! assert_eq!(next.max_info(), (-1.0, 1.0));
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{EngineCase, ServiceDist, SimConfig, Speed};
use crate::potential::{Potential, PotentialError};
use crate::rng::{exp1, uniform_open01};
use rand::RngCore;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("drive area must be positive and finite, got {0}")]
    BadArea(f64),
    #[error("drive uniform must lie in (0, 1), got {0}")]
    BadUniform(f64),
    #[error("service time must be positive and finite, got {0}")]
    BadService(f64),
    #[error("both boundary gaps vanish; the side rule is undefined")]
    ZeroSides,
    #[error("the sweep never accumulates area; the potential is degenerate")]
    DegenerateSweep,
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// One step's randomness: service duration, exponential area, uniform side
/// selector. The unit case carries `t = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveTriple {
    pub t: f64,
    pub e: f64,
    pub u: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn letter(&self) -> char {
        match self {
            Side::Left => 'L',
            Side::Right => 'R',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub z: f64,
    pub side: Side,
    pub a: f64,
    pub b: f64,
    pub new_pos: f64,
    pub new_max: f64,
    pub travel_time: f64,
}

/// Solves for the window half-width: the unique `z > 0` with
/// `lambda * integral over [x*-z, x*+z] of (top - u) == e`.
///
/// The swept area is piecewise linear and strictly increasing in `z`, so the
/// solve walks plateau boundaries outward on both sides at once. Returns
/// `(z, a, b)` where `a` and `b` are the boundary gaps `top - u` evaluated
/// just outside the window (at a breakpoint, the next plateau's value).
pub fn solve_halfwidth(
    u: &Potential,
    top: f64,
    e: f64,
    lambda: f64,
) -> Result<(f64, f64, f64), DynamicsError> {
    if !(e > 0.0 && e.is_finite()) {
        return Err(DynamicsError::BadArea(e));
    }
    let mut left = u.side_cursor(true);
    let mut right = u.side_cursor(false);
    let mut z = 0.0_f64;
    let mut remaining = e / lambda;
    loop {
        let slope = (top - left.value) + (top - right.value);
        debug_assert!(slope >= 0.0);
        let event = left.end_dist.min(right.end_dist);
        if event.is_infinite() {
            if slope <= 0.0 {
                return Err(DynamicsError::DegenerateSweep);
            }
            z += remaining / slope;
            return Ok((z, top - left.value, top - right.value));
        }
        let capacity = slope * (event - z);
        if remaining < capacity {
            z += remaining / slope;
            return Ok((z, top - left.value, top - right.value));
        }
        remaining -= capacity;
        z = event;
        if left.end_dist == z {
            left.advance();
        }
        if right.end_dist == z {
            right.advance();
        }
        if remaining == 0.0 {
            // Landed exactly on a breakpoint: report the next slopes.
            return Ok((z, top - left.value, top - right.value));
        }
    }
}

/// The side rule: left iff `U <= a / (a + b)`, boundary inclusive on the left.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN gaps must be rejected
pub fn choose_side(a: f64, b: f64, u: f64) -> Result<Side, DynamicsError> {
    if !(a + b > 0.0) {
        return Err(DynamicsError::ZeroSides);
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(DynamicsError::BadUniform(u));
    }
    if u * (a + b) <= a {
        Ok(Side::Left)
    } else {
        Ok(Side::Right)
    }
}

fn step_with(
    pot: &mut Potential,
    top: f64,
    spike_lift: impl FnOnce(f64) -> f64, // z -> new spike value
    e: f64,
    u: f64,
    lambda: f64,
    speed: Speed,
) -> Result<StepOutcome, DynamicsError> {
    let (z, a, b) = solve_halfwidth(pot, top, e, lambda)?;
    let side = choose_side(a, b, u)?;
    let new_max = spike_lift(z);
    pot.apply_sweep(z, side == Side::Left, top, new_max);
    Ok(StepOutcome {
        z,
        side,
        a,
        b,
        new_pos: pot.spike_pos(),
        new_max,
        travel_time: speed.travel_time(z),
    })
}

/// Unit-case step applied in place: sweep up to `M`, lift the spike to `M+1`.
pub fn step_unit_mut(
    pot: &mut Potential,
    e: f64,
    u: f64,
    lambda: f64,
) -> Result<StepOutcome, DynamicsError> {
    let top = pot.spike_val();
    step_with(pot, top, |_| top + 1.0, e, u, lambda, Speed::Infinite)
}

/// General-case step applied in place: sweep up to `M+T`, lift the spike to
/// `M + T + z/v`.
pub fn step_general_mut(
    pot: &mut Potential,
    t: f64,
    e: f64,
    u: f64,
    lambda: f64,
    speed: Speed,
) -> Result<StepOutcome, DynamicsError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(DynamicsError::BadService(t));
    }
    let top = pot.spike_val() + t;
    step_with(
        pot,
        top,
        |z| top + speed.travel_time(z),
        e,
        u,
        lambda,
        speed,
    )
}

pub fn step_unit(
    pot: &Potential,
    e: f64,
    u: f64,
    lambda: f64,
) -> Result<(Potential, StepOutcome), DynamicsError> {
    let mut next = pot.clone();
    let out = step_unit_mut(&mut next, e, u, lambda)?;
    Ok((next, out))
}

pub fn step_general(
    pot: &Potential,
    t: f64,
    e: f64,
    u: f64,
    lambda: f64,
    speed: Speed,
) -> Result<(Potential, StepOutcome), DynamicsError> {
    let mut next = pot.clone();
    let out = step_general_mut(&mut next, t, e, u, lambda, speed)?;
    Ok((next, out))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub n: u64,
    pub t: f64,
    pub s: f64,
    pub outcome: StepOutcome,
    pub drive: DriveTriple,
}

/// The ordered record of a walk: positions, times and per-step outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub case: EngineCase,
    pub lambda: f64,
    pub initial: Potential,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    /// The sign of the first displacement.
    pub fn sigma(&self) -> i8 {
        match self.steps.first() {
            Some(r) if r.s > self.initial.spike_pos() => 1,
            Some(_) => -1,
            None => 0,
        }
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|r| r.s)
    }

    /// CSV export: `n,t,S,z,side,a,b,E,U,T`, one row per step.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,t,S,z,side,a,b,E,U,T\n");
        for r in &self.steps {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.n,
                r.t,
                r.s,
                r.outcome.z,
                r.outcome.side.letter(),
                r.outcome.a,
                r.outcome.b,
                r.drive.e,
                r.drive.u,
                r.drive.t,
            ));
        }
        out
    }
}

/// A walk in progress: the potential plus step and time counters. A single
/// run is strictly sequential; ensembles own one walker per run.
pub struct Walker {
    pot: Potential,
    case: EngineCase,
    lambda: f64,
    speed: Speed,
    n: u64,
    initial_max: f64,
}

impl Walker {
    pub fn new(config: &SimConfig) -> Result<Walker, DynamicsError> {
        let pot = Potential::make_initial(&config.initial, 0.0)?;
        Ok(Walker::from_potential(pot, config))
    }

    /// Starts a walk from an arbitrary potential (used by restarts).
    pub fn from_potential(pot: Potential, config: &SimConfig) -> Walker {
        let initial_max = pot.spike_val();
        Walker {
            pot,
            case: config.case,
            lambda: config.lambda,
            speed: config.speed,
            n: 0,
            initial_max,
        }
    }

    pub fn potential(&self) -> &Potential {
        &self.pot
    }

    pub fn step_index(&self) -> u64 {
        self.n
    }

    pub fn position(&self) -> f64 {
        self.pot.spike_pos()
    }

    /// Elapsed time since the start of the walk: the completion time of the
    /// last service in the unit case, the start of the current service in the
    /// general case.
    pub fn time(&self) -> f64 {
        self.pot.spike_val() - self.initial_max
    }

    pub fn step(&mut self, drive: DriveTriple) -> Result<StepOutcome, DynamicsError> {
        let out = match self.case {
            EngineCase::Unit => step_unit_mut(&mut self.pot, drive.e, drive.u, self.lambda)?,
            EngineCase::General => step_general_mut(
                &mut self.pot,
                drive.t,
                drive.e,
                drive.u,
                self.lambda,
                self.speed,
            )?,
        };
        self.n += 1;
        Ok(out)
    }

    /// The centered restart state: evolving a fresh walk from it with the
    /// remaining drives reproduces the tail of this walk up to recentring.
    pub fn recentered(&self) -> Potential {
        self.pot.center()
    }
}

/// Samples drives from an RNG in the fixed slot order T, E, U. The T slot is
/// always advanced, even under deterministic service, so unit and general
/// runs with the same seed consume identical streams.
pub struct RngDrives<R: RngCore> {
    rng: R,
    service: ServiceDist,
}

impl<R: RngCore> RngDrives<R> {
    pub fn new(rng: R, service: ServiceDist) -> Self {
        RngDrives { rng, service }
    }
}

impl<R: RngCore> Iterator for RngDrives<R> {
    type Item = DriveTriple;

    fn next(&mut self) -> Option<DriveTriple> {
        let t_slot = uniform_open01(&mut self.rng);
        let t = match self.service {
            ServiceDist::Det1 => 1.0,
            ServiceDist::Exp => -t_slot.ln(),
        };
        let e = exp1(&mut self.rng);
        let u = uniform_open01(&mut self.rng);
        Some(DriveTriple { t, e, u })
    }
}

/// Runs the configured step operator for `horizon` steps and records the
/// trajectory. Horizon zero yields a trajectory holding only the start state.
pub fn run_walk(
    config: &SimConfig,
    drives: impl IntoIterator<Item = DriveTriple>,
) -> Result<Trajectory, DynamicsError> {
    let initial = Potential::make_initial(&config.initial, 0.0)?;
    run_walk_from(initial, config, drives)
}

pub fn run_walk_from(
    initial: Potential,
    config: &SimConfig,
    drives: impl IntoIterator<Item = DriveTriple>,
) -> Result<Trajectory, DynamicsError> {
    let mut walker = Walker::from_potential(initial.clone(), config);
    let mut steps = Vec::new();
    for drive in drives.into_iter().take(config.horizon as usize) {
        let out = walker.step(drive)?;
        steps.push(StepRecord {
            n: walker.step_index(),
            t: walker.time(),
            s: out.new_pos,
            outcome: out,
            drive,
        });
    }
    Ok(Trajectory {
        case: config.case,
        lambda: config.lambda,
        initial,
        steps,
    })
}

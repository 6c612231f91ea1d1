//! Block machinery: grouping served customers into blocks of growing length,
//! detecting the success conditions that certify sustained one-directional
//! motion, restarting after failures, and measuring the auxiliary events the
//! transience argument is built on.
//!
//! Block `j` groups `l_j = ceil(12 j^{1/4} + 1)` customers (`l_0 = 1`). A block
//! succeeds when the served positions move forward in the chosen direction
//! (with at most one tolerated backtrack), the displacement lands inside the
//! `(1 +- eps)` band, and the whole block stays confined between the previous
//! and next block anchors. After a failure the system recenters and tries
//! again; the number of attempts is dominated by a geometric variable.

use serde::Serialize;
use thiserror::Error;

use crate::config::{EngineCase, ServiceDist, SimConfig, Speed};
use crate::dynamics::{DynamicsError, Trajectory, Walker};
use crate::field::PointField;
use crate::potential::Potential;

#[derive(Debug, Error)]
pub enum BlocksError {
    #[error("epsilon must lie in (0, 1/2), got {0}")]
    BadEpsilon(f64),
    #[error("trajectory too short for block 0: need {need} customers, have {have}")]
    TooShort { need: u64, have: u64 },
    #[error("block {j}: the field realization has no {need}-th hazard point within a width-{width} window")]
    FieldTooSparse { j: u32, need: u64, width: f64 },
    #[error("diagnostics need an oracle-backed run; this run has no point field")]
    DiagnosticsUnavailable,
    #[error("replay failed: {0}")]
    Replay(#[from] DynamicsError),
}

/// `l_j`: 1 for j = 0, otherwise `ceil(12 j^{1/4} + 1)`.
pub fn block_length(j: u32) -> u64 {
    if j == 0 {
        1
    } else {
        (12.0 * (j as f64).powf(0.25) + 1.0).ceil() as u64
    }
}

/// Displacement band for block `j >= 1`:
/// `((1 - eps)(l_j - 1)/N_{j+1}, (1 + eps) l_j / N_j)`.
pub fn x_bounds(j: u32, n_j: f64, n_j1: f64, epsilon: f64) -> (f64, f64) {
    let l = block_length(j) as f64;
    (
        (1.0 - epsilon) * (l - 1.0) / n_j1,
        (1.0 + epsilon) * l / n_j,
    )
}

/// Step-0 lower displacement bound `4 / N_1`.
pub fn x0_lower(n1: f64) -> f64 {
    4.0 / n1
}

/// Elapsed-time band for block `j` in the general case:
/// `(l_j/2 if j > j*, else 0; 3 l_j + 3)`.
pub fn m_bounds(j: u32, jstar: u32) -> (f64, f64) {
    let l = block_length(j) as f64;
    (if j > jstar { 0.5 * l } else { 0.0 }, 3.0 * l + 3.0)
}

/// The triggering-step parameters of the general case: the smallest `j*` with
/// `1/(m_{j*} v) < 1/16` (vacuous at infinite speed) where `m_j = l_1 + ... +
/// l_j`, and `m = 1 + m_{j*}`. The companion requirement that partial sums of
/// service times stay within a factor 2 of their count with positive
/// probability holds for every `n` under both built-in service laws
/// (deterministic sums are exact; exponential sums have full support).
pub fn jstar_and_m(speed: Speed, _service: ServiceDist) -> (u32, u64) {
    let mut m_j = 0u64;
    let mut j = 0u32;
    loop {
        j += 1;
        m_j += block_length(j);
        let speed_ok = match speed {
            Speed::Infinite => true,
            Speed::Finite(v) => (m_j as f64) * v > 16.0,
        };
        if speed_ok {
            return (j, m_j + 1);
        }
    }
}

/// The triggering block (block 0). Unit case: one customer, success iff
/// `|S_1| >= 4/N_1`. General case: `m` customers, success iff `S_m` is
/// extremal, enough physical time has passed, the last service is short and
/// the last displacement lands in `[4/N_1, v]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Block0Record {
    pub q0: u64,
    pub z1: f64,
    pub n1: f64,
    pub x0: f64,
    pub x0_minus: f64,
    /// General case: the speed `v`; `None` when infinite (or unit case).
    pub x0_plus: Option<f64>,
    /// General case: elapsed physical time of the block.
    pub m0: Option<f64>,
    pub m0_minus: Option<f64>,
    pub t_m: Option<f64>,
    /// General case: whether the block-end position was extremal.
    pub extremal: Option<bool>,
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockRecord {
    pub j: u32,
    /// Customer count at block start.
    pub n_start: u64,
    /// Physical time at block start (`L_j`; equals `n_start` in the unit case).
    pub time_start: f64,
    pub z: f64,
    pub n_height: f64,
    /// Customers served in the block; `None` when the forward pattern failed.
    pub q: Option<u64>,
    /// Relative index of the tolerated backtrack, if one occurred.
    pub backtrack: Option<u64>,
    pub x: Option<f64>,
    pub x_minus: Option<f64>,
    pub x_plus: Option<f64>,
    /// General case: elapsed physical time and its band.
    pub m_elapsed: Option<f64>,
    pub m_minus: Option<f64>,
    pub m_plus: Option<f64>,
    pub confined: Option<bool>,
    pub success: bool,
    /// True when the horizon cut the block short; such blocks carry no verdict.
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockReport {
    pub sigma: i8,
    pub epsilon: f64,
    pub case: EngineCase,
    /// General case: `(j*, m)`.
    pub jstar: Option<u32>,
    pub block0: Block0Record,
    pub blocks: Vec<BlockRecord>,
    /// First failed block index, block 0 included.
    pub failed_at: Option<u32>,
    /// Customer index (relative to this attempt) where the failure was
    /// decided; the restart point.
    pub restart_n: Option<u64>,
    pub truncated: bool,
}

impl BlockReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap()
    }
}

fn check_epsilon(epsilon: f64) -> Result<(), BlocksError> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(BlocksError::BadEpsilon(epsilon));
    }
    Ok(())
}

/// Scans a walk for blocks. `positions[n]` and `times[n]` are the state after
/// `n` services (`positions[0]` is the start position, `times[0] = 0`);
/// `services[n-1]` is the n-th service duration (unused in the unit case).
/// `initial` is the attempt's initial potential in the same coordinates: the
/// height `N_j` is always measured against it, not against the running
/// potential. Stops at the first failure or after `max_blocks` blocks.
#[allow(clippy::too_many_arguments)]
pub fn detect_blocks(
    case: EngineCase,
    speed: Speed,
    service: ServiceDist,
    initial: &Potential,
    positions: &[f64],
    times: &[f64],
    services: &[f64],
    epsilon: f64,
    max_blocks: u32,
) -> Result<BlockReport, BlocksError> {
    check_epsilon(epsilon)?;
    let h = positions.len().saturating_sub(1) as u64;
    let origin = positions[0];
    let (jstar, q0) = match case {
        EngineCase::Unit => (None, 1u64),
        EngineCase::General => {
            let (js, m) = jstar_and_m(speed, service);
            (Some(js), m)
        }
    };
    if h < q0 {
        return Err(BlocksError::TooShort { need: q0, have: h });
    }
    let m = q0 as usize;

    // Block 0: direction and success verdict.
    let (sigma, extremal) = match case {
        EngineCase::Unit => (if positions[1] > origin { 1i8 } else { -1 }, None),
        EngineCase::General => {
            let sm = positions[m];
            let lo = positions[..m].iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = positions[..m]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            if sm > hi {
                (1, Some(true))
            } else if sm < lo {
                (-1, Some(true))
            } else {
                // Not extremal; report in the first-step direction.
                (if positions[1] > origin { 1 } else { -1 }, Some(false))
            }
        }
    };
    let y = |n: usize| sigma as f64 * (positions[n] - origin);
    let l1 = times[m];
    let n1 = l1 - initial.eval(positions[m]);
    let x0 = (positions[m] - positions[m - 1]).abs();
    let x0_minus = x0_lower(n1);
    let block0 = match case {
        EngineCase::Unit => Block0Record {
            q0,
            z1: y(1),
            n1,
            x0,
            x0_minus,
            x0_plus: None,
            m0: None,
            m0_minus: None,
            t_m: None,
            extremal: None,
            success: x0 >= x0_minus,
        },
        EngineCase::General => {
            let m0_minus = (q0 - 1) as f64; // m_{j*}
            let t_m = services[m - 1];
            let x0_plus = match speed {
                Speed::Finite(v) => Some(v),
                Speed::Infinite => None,
            };
            let band_ok = x0 >= x0_minus && x0_plus.is_none_or(|v| x0 <= v);
            Block0Record {
                q0,
                z1: y(m),
                n1,
                x0,
                x0_minus,
                x0_plus,
                m0: Some(l1),
                m0_minus: Some(m0_minus),
                t_m: Some(t_m),
                extremal,
                success: extremal == Some(true) && l1 >= m0_minus && t_m <= 1.0 && band_ok,
            }
        }
    };

    let mut report = BlockReport {
        sigma,
        epsilon,
        case,
        jstar,
        block0,
        blocks: Vec::new(),
        failed_at: None,
        restart_n: None,
        truncated: false,
    };
    if !report.block0.success {
        report.failed_at = Some(0);
        report.restart_n = Some(q0);
        return Ok(report);
    }

    let mut n_j = m;
    let mut z_prev = y(0);
    for j in 1..=max_blocks {
        let lj = block_length(j);
        let time_start = times[n_j];
        let z_j = y(n_j);
        let n_height = time_start - initial.eval(positions[n_j]);
        let mut rec = BlockRecord {
            j,
            n_start: n_j as u64,
            time_start,
            z: z_j,
            n_height,
            q: None,
            backtrack: None,
            x: None,
            x_minus: None,
            x_plus: None,
            m_elapsed: None,
            m_minus: None,
            m_plus: None,
            confined: None,
            success: false,
            truncated: false,
        };
        if (n_j as u64) + lj > h {
            rec.truncated = true;
            report.truncated = true;
            report.blocks.push(rec);
            return Ok(report);
        }
        // Forward pattern: all l_j steps forward, or exactly one backtrack
        // and then forward through step l_j + 1.
        let mut backtrack: Option<usize> = None;
        let mut fail_at: Option<usize> = None;
        for k in 1..=lj as usize {
            let n = n_j + k;
            if y(n) <= y(n - 1) {
                if backtrack.is_some() {
                    fail_at = Some(n);
                    break;
                }
                backtrack = Some(n);
            }
        }
        let q = if fail_at.is_none() {
            match backtrack {
                None => Some(lj),
                Some(_) => {
                    let n = n_j + lj as usize + 1;
                    if n as u64 > h {
                        rec.backtrack = backtrack.map(|b| (b - n_j) as u64);
                        rec.truncated = true;
                        report.truncated = true;
                        report.blocks.push(rec);
                        return Ok(report);
                    }
                    if y(n) > y(n - 1) {
                        Some(lj + 1)
                    } else {
                        fail_at = Some(n);
                        None
                    }
                }
            }
        } else {
            None
        };
        rec.backtrack = backtrack.map(|b| (b - n_j) as u64);
        let Some(q) = q else {
            report.failed_at = Some(j);
            report.restart_n = Some(fail_at.unwrap() as u64);
            report.blocks.push(rec);
            return Ok(report);
        };
        rec.q = Some(q);
        let n_next = n_j + q as usize;
        let z_next = y(n_next);
        let n_height_next = times[n_next] - initial.eval(positions[n_next]);
        let (x_minus, x_plus) = x_bounds(j, n_height, n_height_next, epsilon);
        let x = z_next - z_j;
        rec.x = Some(x);
        rec.x_minus = Some(x_minus);
        rec.x_plus = Some(x_plus);
        let confined = (n_j..n_next).all(|n| z_prev < y(n) && y(n) < z_next);
        rec.confined = Some(confined);
        let mut ok = x_minus <= x && x <= x_plus && confined;
        if case == EngineCase::General {
            let m_elapsed = times[n_next] - time_start;
            let (m_minus, m_plus) = m_bounds(j, jstar.unwrap());
            rec.m_elapsed = Some(m_elapsed);
            rec.m_minus = Some(m_minus);
            rec.m_plus = Some(m_plus);
            ok = ok && m_minus <= m_elapsed && m_elapsed <= m_plus;
        }
        rec.success = ok;
        report.blocks.push(rec);
        if !ok {
            report.failed_at = Some(j);
            report.restart_n = Some(n_next as u64);
            return Ok(report);
        }
        z_prev = z_j;
        n_j = n_next;
    }
    Ok(report)
}

/// Runs the detector over a recorded trajectory.
pub fn detect_blocks_traj(
    traj: &Trajectory,
    config: &SimConfig,
    epsilon: f64,
    max_blocks: u32,
) -> Result<BlockReport, BlocksError> {
    let mut positions = vec![traj.initial.spike_pos()];
    let mut times = vec![0.0];
    let mut services = Vec::with_capacity(traj.steps.len());
    for r in &traj.steps {
        positions.push(r.s);
        times.push(r.t);
        services.push(r.drive.t);
    }
    detect_blocks(
        traj.case,
        config.speed,
        config.service,
        &traj.initial,
        &positions,
        &times,
        &services,
        epsilon,
        max_blocks,
    )
}

/// One detection attempt of a restart scan, together with the frame mapping
/// attempt coordinates back to the original run: absolute customer index,
/// position and time offsets, and the attempt's initial potential (centered).
#[derive(Clone, Debug)]
pub struct Attempt {
    pub start_n: u64,
    pub x_off: f64,
    pub t_off: f64,
    pub initial: Potential,
    pub report: BlockReport,
}

#[derive(Clone, Debug)]
pub struct RestartScan {
    pub attempts: Vec<Attempt>,
    /// Index into `attempts` of the first attempt with no failed block.
    pub clean_attempt: Option<usize>,
    pub truncated: bool,
}

impl RestartScan {
    /// Absolute customer indices of the restarts.
    pub fn restart_indices(&self) -> Vec<u64> {
        self.attempts[1..].iter().map(|a| a.start_n).collect()
    }
}

/// Applies the detector repeatedly: on failure the walk restarts from the
/// recentered running potential at the failure-decision index, and the scan
/// resumes there. Ends at the first clean attempt or at the horizon.
pub fn restart_scan(
    traj: &Trajectory,
    config: &SimConfig,
    epsilon: f64,
    max_blocks: u32,
) -> Result<RestartScan, BlocksError> {
    check_epsilon(epsilon)?;
    let total = traj.steps.len();
    let mut scan = RestartScan {
        attempts: Vec::new(),
        clean_attempt: None,
        truncated: false,
    };
    let mut start = 0usize;
    let mut walker = Walker::from_potential(traj.initial.clone(), config);
    loop {
        // Advance the replay to the attempt start (the walker trails behind
        // the scan by exactly one attempt).
        while (walker.step_index() as usize) < start {
            walker.step(traj.steps[walker.step_index() as usize].drive)?;
        }
        let initial = walker.recentered();
        let x_off = traj.steps.get(start.wrapping_sub(1)).map_or(
            traj.initial.spike_pos(),
            |r| r.s,
        );
        let t_off = if start == 0 {
            0.0
        } else {
            traj.steps[start - 1].t
        };
        let mut positions = vec![0.0];
        let mut times = vec![0.0];
        let mut services = Vec::with_capacity(total - start);
        for r in &traj.steps[start..] {
            positions.push(r.s - x_off);
            times.push(r.t - t_off);
            services.push(r.drive.t);
        }
        let report = match detect_blocks(
            traj.case,
            config.speed,
            config.service,
            &initial,
            &positions,
            &times,
            &services,
            epsilon,
            max_blocks,
        ) {
            Ok(r) => r,
            Err(BlocksError::TooShort { .. }) if start > 0 => {
                scan.truncated = true;
                return Ok(scan);
            }
            Err(e) => return Err(e),
        };
        let failed = report.failed_at.is_some();
        let restart_n = report.restart_n;
        scan.attempts.push(Attempt {
            start_n: start as u64,
            x_off,
            t_off,
            initial,
            report,
        });
        if !failed {
            scan.clean_attempt = Some(scan.attempts.len() - 1);
            return Ok(scan);
        }
        let next = start + restart_n.unwrap() as usize;
        if next >= total {
            scan.truncated = true;
            return Ok(scan);
        }
        start = next;
    }
}

/// The measured proof events for one block of an oracle-backed attempt.
#[derive(Clone, Debug, Serialize)]
pub struct BlockDiagnostics {
    pub j: u32,
    /// At most one hazard point above the block-start time near the anchor.
    pub b1: bool,
    pub nu2_count: usize,
    /// Cumulative swept-area values within the `(1 +- eps)` band at the block
    /// ends.
    pub b2: bool,
    /// No single area gap exceeding `l_j / 12`.
    pub b3: bool,
    /// `A(x_n)` over the first `l_j` hazard points right of the anchor.
    pub a_values: Vec<f64>,
    pub a_increments: Vec<f64>,
    /// Geometric consequences of b2 and b3 (position bands and gap bounds);
    /// evaluated only when both hold.
    pub position_band_ok: Option<bool>,
    pub gap_bound_ok: Option<bool>,
    /// When b1, b2 and b3 all hold the detector must have accepted the block.
    pub implication_ok: Option<bool>,
    /// Structural conditions on the running potential at the block start.
    pub shape_ok: bool,
    /// General case, j = 1: the relaxed shape bound applied.
    pub j1_special_form: bool,
}

fn fold_interval(x_off: f64, sigma: f64, y_lo: f64, y_hi: f64) -> (f64, f64) {
    let a = x_off + sigma * y_lo;
    let b = x_off + sigma * y_hi;
    (a.min(b), a.max(b))
}

/// Measures the proof events for the blocks of one attempt. Needs the point
/// field the run was generated from; potential-engine-only runs cannot be
/// diagnosed. Blocks are processed while their predecessors succeeded (the
/// implication is only claimed in that regime), including the first failed
/// block.
pub fn diagnose_attempt(
    config: &SimConfig,
    field: &mut PointField,
    traj: &Trajectory,
    attempt: &Attempt,
    epsilon: f64,
) -> Result<Vec<BlockDiagnostics>, BlocksError> {
    check_epsilon(epsilon)?;
    let report = &attempt.report;
    let sigma = report.sigma as f64;
    let initial = &attempt.initial;
    // Replay the attempt to capture the running potential at block starts.
    let mut walker = Walker::from_potential(initial.clone(), config);
    let start = attempt.start_n as usize;
    let mut out = Vec::new();
    let mut prev_ok = report.block0.success;
    for rec in &report.blocks {
        if !prev_ok || rec.truncated {
            break;
        }
        let j = rec.j;
        let lj = block_length(j);
        while walker.step_index() < rec.n_start {
            let abs = start + walker.step_index() as usize;
            walker.step(traj.steps[abs].drive)?;
        }
        let u_block = walker.potential().clone();
        let l_j = rec.time_start;
        let z_j = rec.z;
        let n_j = rec.n_height;

        // nu_1: hazard points beyond the anchor, below the block-start time,
        // above the attempt's initial potential; ordered outward.
        let mut width = (4.0 * (1.0 + epsilon) * lj as f64 / n_j).max(1.0);
        let pts = loop {
            let (xa, xb) = fold_interval(attempt.x_off, sigma, z_j, z_j + width);
            field.ensure_coverage(xa, xb, attempt.t_off + l_j);
            let mut pts: Vec<(f64, f64)> = field
                .points()
                .iter()
                .filter_map(|p| {
                    let yy = sigma * (p.x - attempt.x_off);
                    let tt = p.t - attempt.t_off;
                    let xp = sigma * yy; // attempt-frame x
                    (yy > z_j && yy <= z_j + width && tt <= l_j && tt > initial.eval(xp))
                        .then_some((yy, tt))
                })
                .collect();
            pts.sort_by(|u, v| u.0.total_cmp(&v.0));
            if pts.len() as u64 >= lj {
                break pts;
            }
            width *= 2.0;
            if width > 1e6 {
                return Err(BlocksError::FieldTooSparse {
                    j,
                    need: lj,
                    width,
                });
            }
        };
        let area_to = |yy: f64| {
            let (xa, xb) = fold_interval(0.0, sigma, z_j, yy);
            initial.area_above(l_j, xa, xb).expect("top below potential in A(x)")
        };
        let a_values: Vec<f64> = pts[..lj as usize].iter().map(|&(yy, _)| area_to(yy)).collect();
        let mut a_increments = Vec::with_capacity(lj as usize);
        let mut prev = 0.0;
        for &a in &a_values {
            a_increments.push(a - prev);
            prev = a;
        }
        let b2 = (1.0 - epsilon) * (lj as f64 - 1.0) < a_values[lj as usize - 2]
            && a_values[lj as usize - 2] < a_values[lj as usize - 1]
            && a_values[lj as usize - 1] < (1.0 + epsilon) * lj as f64;
        let b3 = a_increments.iter().all(|&d| d <= lj as f64 / 12.0);

        // Previous block's displacement floor and duration, for the hazard
        // region left of the anchor and the shape check.
        let (x_prev_minus, dur_prev) = if j == 1 {
            match traj.case {
                EngineCase::Unit => (report.block0.x0_minus, 1.0),
                EngineCase::General => (report.block0.x0_minus, report.block0.m0.unwrap()),
            }
        } else {
            let p = &report.blocks[(j - 2) as usize];
            let dur = match traj.case {
                EngineCase::Unit => p.q.unwrap() as f64,
                EngineCase::General => p.m_elapsed.unwrap(),
            };
            (p.x_minus.unwrap(), dur)
        };
        let x_plus = rec.x_plus.unwrap_or((1.0 + epsilon) * lj as f64 / n_j);

        // nu_2: the hazard region around the anchor above the block-start time.
        let t_hi = match traj.case {
            EngineCase::Unit => l_j + lj as f64 + 1.0,
            EngineCase::General => l_j + 3.0 * lj as f64 + 3.0,
        };
        let left_floor = match traj.case {
            EngineCase::Unit => None, // left part floor is the running potential
            EngineCase::General => {
                // Rectangle lower edge: previous block's duration cap; j = 1
                // uses the triggering block's tail instead.
                let drop = if j == 1 {
                    let t_m = report.block0.t_m.unwrap();
                    match config.speed {
                        Speed::Finite(v) => t_m + x_plus / v,
                        Speed::Infinite => t_m,
                    }
                } else {
                    3.0 * block_length(j - 1) as f64 + 3.0
                };
                Some(l_j - drop)
            }
        };
        let (xa, xb) = fold_interval(attempt.x_off, sigma, z_j - x_prev_minus, z_j + x_plus);
        field.ensure_coverage(xa, xb, attempt.t_off + t_hi);
        let nu2_count = field
            .points()
            .iter()
            .filter(|p| {
                let yy = sigma * (p.x - attempt.x_off);
                let tt = p.t - attempt.t_off;
                let xp = sigma * yy;
                if tt > t_hi {
                    return false;
                }
                if yy > z_j && yy < z_j + x_plus {
                    tt > l_j
                } else if yy > z_j - x_prev_minus && yy < z_j {
                    match left_floor {
                        Some(floor) => tt > floor && tt > u_block.eval(xp),
                        None => tt > u_block.eval(xp),
                    }
                } else {
                    false
                }
            })
            .count();
        let b1 = nu2_count <= 1;

        // Geometric consequences of b2 and b3.
        let (position_band_ok, gap_bound_ok) = if b2 && b3 {
            let y_last = pts[lj as usize - 1].0;
            let y_prev2 = pts[lj as usize - 2].0;
            let position_band = y_prev2 <= y_last && y_last - z_j <= x_plus + 1e-12;
            let mut gap_bound = true;
            let mut prev_y = z_j;
            for &(yy, _) in &pts[..lj as usize] {
                if yy - prev_y > lj as f64 / (12.0 * n_j) + 1e-12 {
                    gap_bound = false;
                }
                prev_y = yy;
            }
            (Some(position_band), Some(gap_bound))
        } else {
            (None, None)
        };

        let implication_ok = (b1 && b2 && b3).then_some(rec.success);

        // Shape of the running potential at the block start: the maximum sits
        // at the anchor at height L_j; beyond the anchor the potential is
        // untouched initial data at least N_j below; just behind it, the
        // potential is at most one block-duration below.
        let (sp, sv) = u_block.max_info();
        let mut shape_ok = (sv - l_j).abs() <= 1e-9 && (sigma * sp - z_j).abs() <= 1e-9;
        for k in 1..=5 {
            let yy = z_j + k as f64 * 0.4;
            let xp = sigma * yy;
            let v = u_block.eval(xp);
            shape_ok &= (v - initial.eval(xp)).abs() <= 1e-9 && v <= l_j - n_j + 1e-9;
        }
        let j1_special_form = traj.case == EngineCase::General && j == 1;
        let behind_floor = if j1_special_form {
            l_j - 2.0
        } else {
            l_j - dur_prev
        };
        for k in 1..=5 {
            let yy = z_j - x_prev_minus * k as f64 / 6.0;
            let xp = sigma * yy;
            shape_ok &= u_block.eval(xp) >= behind_floor - 1e-9;
        }

        prev_ok = rec.success;
        out.push(BlockDiagnostics {
            j,
            b1,
            nu2_count,
            b2,
            b3,
            a_values,
            a_increments,
            position_band_ok,
            gap_bound_ok,
            implication_ok,
            shape_ok,
            j1_special_form,
        });
    }
    Ok(out)
}

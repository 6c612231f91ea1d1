//! Direct simulation from an explicit space-time Poisson field.
//!
//! The field is realized lazily, one unit tile at a time, with a dedicated
//! RNG substream per tile keyed by the tile's lattice coordinates. A point's
//! existence therefore never depends on the order in which the field was
//! queried, which is what makes the coupling against the potential engine
//! meaningful: the two engines can be compared seed by seed, step by step.
//!
//! [`direct_simulate`] plays the greedy server straight off the field:
//! at each search time it takes the nearest unserved arrived point, extending
//! coverage until no closer point can hide in unsampled territory.
//! [`extract_drives`] then replays the symmetric exploration against the
//! potential sequence, recovering the per-step exponential area and uniform
//! side variable, so that the potential engine reproduces the direct
//! trajectory exactly.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::config::{EngineCase, ServiceDist, SimConfig};
use crate::dynamics::{DriveTriple, Side, Trajectory};
use crate::potential::{BaselineSpec, Potential, PotentialError};
use crate::rng::{service_rng, tile_rng, uniform_open01};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("step {step}: point sits on an exploration boundary corner (u = {u}); reject this seed")]
    BoundaryCorner { step: u64, u: f64 },
    #[error("trajectory length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid config: {0}")]
    Config(#[from] crate::config::ConfigError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldPoint {
    pub x: f64,
    pub t: f64,
    pub served_step: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct OrdF64(u64);

impl OrdF64 {
    fn new(x: f64) -> Self {
        // total_cmp-compatible key for nonnegative-orderable doubles
        let bits = x.to_bits();
        OrdF64(if bits >> 63 == 0 {
            bits ^ (1 << 63)
        } else {
            !bits
        })
    }
}

/// A lazily generated realization of the arrival process, thinned below the
/// initial potential (no arrivals predate the last scan of their location).
pub struct PointField {
    lambda: f64,
    seed: u64,
    baseline: BaselineSpec,
    t_floor: i64,
    points: Vec<FieldPoint>,
    unserved: BTreeMap<OrdF64, usize>,
    columns: HashMap<i64, i64>,
    tile_ledger: Vec<(i64, i64)>,
}

impl PointField {
    pub fn new(lambda: f64, seed: u64, baseline: &BaselineSpec) -> PointField {
        let t_floor = baseline.min_level().floor() as i64;
        PointField {
            lambda,
            seed,
            baseline: baseline.clone(),
            t_floor,
            points: Vec::new(),
            unserved: BTreeMap::new(),
            columns: HashMap::new(),
            tile_ledger: Vec::new(),
        }
    }

    /// A field with no random points (intensity zero tiles) and a fixed set
    /// of hand-placed arrivals; used in tests and for deterministic extra
    /// initial customers.
    pub fn manual(baseline: &BaselineSpec, points: &[(f64, f64)]) -> PointField {
        let mut field = PointField::new(0.0, 0, baseline);
        for &(x, t) in points {
            field.add_manual_point(x, t);
        }
        field
    }

    /// Plants a deterministic arrival. The point is kept even below the
    /// baseline, matching an "additional deterministic finite set" of
    /// initial customers.
    pub fn add_manual_point(&mut self, x: f64, t: f64) {
        let idx = self.points.len();
        self.points.push(FieldPoint {
            x,
            t,
            served_step: None,
        });
        self.unserved.insert(OrdF64::new(x), idx);
    }

    pub fn points(&self) -> &[FieldPoint] {
        &self.points
    }

    pub fn tile_ledger(&self) -> &[(i64, i64)] {
        &self.tile_ledger
    }

    fn sample_tile(&mut self, ix: i64, it: i64) {
        let mut rng = tile_rng(self.seed, ix, it);
        let count = if self.lambda > 0.0 {
            Poisson::new(self.lambda).unwrap().sample(&mut rng) as u64
        } else {
            0
        };
        for _ in 0..count {
            let x = ix as f64 + rng.gen::<f64>();
            let t = it as f64 + rng.gen::<f64>();
            if t > self.baseline.eval(x) {
                let idx = self.points.len();
                self.points.push(FieldPoint {
                    x,
                    t,
                    served_step: None,
                });
                self.unserved.insert(OrdF64::new(x), idx);
            }
        }
        self.tile_ledger.push((ix, it));
    }

    fn ensure_column(&mut self, ix: i64, t_hi_row: i64) {
        let done = *self.columns.get(&ix).unwrap_or(&self.t_floor);
        for it in done..t_hi_row {
            self.sample_tile(ix, it);
        }
        let entry = self.columns.entry(ix).or_insert(done);
        *entry = (*entry).max(t_hi_row);
    }

    /// Generates every tile intersecting `[x_lo, x_hi] x (floor, t_hi]`.
    /// Already generated tiles are untouched.
    pub fn ensure_coverage(&mut self, x_lo: f64, x_hi: f64, t_hi: f64) {
        let row_hi = t_hi.ceil() as i64;
        let col_lo = x_lo.floor() as i64;
        let col_hi = x_hi.floor() as i64;
        for ix in col_lo..=col_hi {
            self.ensure_column(ix, row_hi);
        }
    }

    /// Nearest unserved point to `s` among arrivals at or before `t_max`,
    /// restricted to distance at most `d_max`. Distance ties break right
    /// with a warning.
    fn nearest_unserved(&self, s: f64, d_max: f64, t_max: f64) -> Option<usize> {
        let key = OrdF64::new(s);
        let mut right = self.unserved.range(key..);
        let mut left = self.unserved.range(..key).rev();
        let mut next_right = right.next();
        let mut next_left = left.next();
        loop {
            let dr = next_right.map(|(_, &i)| (self.points[i].x - s).abs());
            let dl = next_left.map(|(_, &i)| (self.points[i].x - s).abs());
            let take_right = match (dr, dl) {
                (None, None) => return None,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (Some(r), Some(l)) => {
                    if r == l {
                        eprintln!(
                            "warning: equidistant candidates at distance {r} from {s}; breaking right"
                        );
                    }
                    r <= l
                }
            };
            let (dist, idx) = if take_right {
                let (_, &i) = next_right.unwrap();
                next_right = right.next();
                (dr.unwrap(), i)
            } else {
                let (_, &i) = next_left.unwrap();
                next_left = left.next();
                (dl.unwrap(), i)
            };
            if dist > d_max {
                return None;
            }
            if self.points[idx].t <= t_max {
                return Some(idx);
            }
        }
    }

    fn serve(&mut self, idx: usize, step: u64) {
        self.points[idx].served_step = Some(step);
        self.unserved.remove(&OrdF64::new(self.points[idx].x));
    }

    /// JSON-lines snapshot: one point per line, then the tile ledger.
    pub fn export_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let served = match p.served_step {
                Some(n) => n.to_string(),
                None => "null".to_string(),
            };
            out.push_str(&format!(
                "{{\"x\":{},\"t\":{},\"served_step\":{}}}\n",
                p.x, p.t, served
            ));
        }
        let ledger: Vec<String> = self
            .tile_ledger
            .iter()
            .map(|(ix, it)| format!("[{ix},{it}]"))
            .collect();
        out.push_str(&format!("{{\"tile_ledger\":[{}]}}\n", ledger.join(",")));
        out
    }
}

/// One served customer of a direct simulation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectStep {
    pub n: u64,
    /// Server position after the move.
    pub s: f64,
    /// Engine time after the step (completion count in the unit case,
    /// service-start time in the general case).
    pub time: f64,
    /// Arrival time of the served customer.
    pub arrival: f64,
    /// Service duration drawn for this step.
    pub service: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectRun {
    pub steps: Vec<DirectStep>,
}

/// Plays the greedy server directly off the field: at each search time, take
/// the nearest unserved arrived customer, extending coverage symmetrically
/// until the nearest candidate is provably within generated bounds.
pub fn direct_simulate(
    config: &SimConfig,
    field: &mut PointField,
) -> Result<DirectRun, FieldError> {
    config.validate()?;
    let mut service = service_rng(config.seed);
    let mut pos = 0.0_f64;
    let mut m = 0.0_f64;
    let mut steps = Vec::with_capacity(config.horizon as usize);
    let mut probe = 0.5_f64;
    for n in 1..=config.horizon {
        let t_slot = uniform_open01(&mut service);
        let t_service = match config.service {
            ServiceDist::Det1 => 1.0,
            ServiceDist::Exp => -t_slot.ln(),
        };
        let top = match config.case {
            EngineCase::Unit => m,
            EngineCase::General => m + t_service,
        };
        let mut d = probe;
        let idx = loop {
            field.ensure_coverage(pos - d, pos + d, top);
            if let Some(idx) = field.nearest_unserved(pos, d, top) {
                break idx;
            }
            d *= 2.0;
        };
        let point = field.points[idx];
        field.serve(idx, n);
        let z = (point.x - pos).abs();
        probe = (2.0 * z).max(0.05);
        pos = point.x;
        m = match config.case {
            EngineCase::Unit => m + 1.0,
            EngineCase::General => top + config.speed.travel_time(z),
        };
        steps.push(DirectStep {
            n,
            s: pos,
            time: m,
            arrival: point.t,
            service: t_service,
        });
    }
    Ok(DirectRun { steps })
}

/// Replays the exploration of a direct run against the potential sequence and
/// recovers the drive triples: `E` is the intensity-weighted area swept when
/// the served point was hit, and `U` inverts the boundary-position formula
/// `t* = top - |(a+b)U - a|`.
pub fn extract_drives(config: &SimConfig, run: &DirectRun) -> Result<Vec<DriveTriple>, FieldError> {
    let mut pot = Potential::make_initial(&config.initial, 0.0)?;
    let mut drives = Vec::with_capacity(run.steps.len());
    for step in &run.steps {
        let top = match config.case {
            EngineCase::Unit => pot.spike_val(),
            EngineCase::General => pot.spike_val() + step.service,
        };
        let x_prev = pot.spike_pos();
        let z = (step.s - x_prev).abs();
        let e = config.lambda * pot.area_above(top, x_prev - z, x_prev + z)?;
        let a = top - pot.eval_left_limit(x_prev - z);
        let b = top - pot.eval_right_limit(x_prev + z);
        let side = if step.s < x_prev { Side::Left } else { Side::Right };
        let depth = top - step.arrival;
        let u = match side {
            Side::Left => (a - depth) / (a + b),
            Side::Right => (a + depth) / (a + b),
        };
        let consistent = match side {
            Side::Left => u > 0.0 && u * (a + b) <= a,
            Side::Right => u < 1.0 && u * (a + b) > a,
        };
        if !consistent {
            return Err(FieldError::BoundaryCorner { step: step.n, u });
        }
        let spike_val = match config.case {
            EngineCase::Unit => top + 1.0,
            EngineCase::General => top + config.speed.travel_time(z),
        };
        pot.apply_sweep(z, side == Side::Left, top, spike_val);
        drives.push(DriveTriple {
            t: step.service,
            e,
            u,
        });
    }
    Ok(drives)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Divergence {
    pub n: u64,
    pub direct_s: f64,
    pub engine_s: f64,
    pub direct_t: f64,
    pub engine_t: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    pub pass: bool,
    pub compared: usize,
    pub max_position_dev: f64,
    pub first_divergence: Option<Divergence>,
}

/// Per-step comparison of a direct run against a potential-engine trajectory.
/// Positions are compared in both cases; times too in the general case.
pub fn equivalence_check(
    direct: &DirectRun,
    engine: &Trajectory,
    tol: f64,
) -> Result<EquivalenceReport, FieldError> {
    if direct.steps.len() != engine.steps.len() {
        return Err(FieldError::LengthMismatch {
            left: direct.steps.len(),
            right: engine.steps.len(),
        });
    }
    let mut max_dev = 0.0_f64;
    let mut first = None;
    for (d, e) in direct.steps.iter().zip(&engine.steps) {
        let dev_s = (d.s - e.s).abs();
        let dev_t = if engine.case == EngineCase::General {
            (d.time - e.t).abs()
        } else {
            0.0
        };
        max_dev = max_dev.max(dev_s).max(dev_t);
        if first.is_none() && (dev_s > tol || dev_t > tol) {
            first = Some(Divergence {
                n: d.n,
                direct_s: d.s,
                engine_s: e.s,
                direct_t: d.time,
                engine_t: e.t,
            });
        }
    }
    Ok(EquivalenceReport {
        pass: first.is_none(),
        compared: direct.steps.len(),
        max_position_dev: max_dev,
        first_divergence: first,
    })
}

/// End to end: direct simulation, drive extraction, potential-engine replay,
/// per-step comparison.
pub fn coupling_check(config: &SimConfig, tol: f64) -> Result<EquivalenceReport, FieldError> {
    let mut field = PointField::new(config.lambda, config.seed, &config.initial);
    let direct = direct_simulate(config, &mut field)?;
    let drives = extract_drives(config, &direct)?;
    let engine = crate::dynamics::run_walk(config, drives)
        .map_err(|e| match e {
            crate::dynamics::DynamicsError::Potential(p) => FieldError::Potential(p),
            other => panic!("replay failed: {other}"),
        })?;
    equivalence_check(&direct, &engine, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Speed;

    fn base() -> BaselineSpec {
        BaselineSpec::Constant(-1.0)
    }

    fn unit_config(seed: u64, horizon: u64) -> SimConfig {
        SimConfig {
            seed,
            horizon,
            ..SimConfig::default()
        }
    }

    #[test]
    fn coverage_is_idempotent() {
        let mut a = PointField::new(1.0, 42, &base());
        a.ensure_coverage(-3.0, 3.0, 5.0);
        let first: Vec<FieldPoint> = a.points().to_vec();
        a.ensure_coverage(-3.0, 3.0, 5.0);
        assert_eq!(a.points(), &first[..]);
    }

    #[test]
    fn coverage_is_query_order_free() {
        let mut a = PointField::new(1.0, 7, &base());
        a.ensure_coverage(-2.0, 2.0, 3.0);
        a.ensure_coverage(-5.0, 5.0, 6.0);
        let mut b = PointField::new(1.0, 7, &base());
        b.ensure_coverage(3.0, 5.0, 6.0);
        b.ensure_coverage(-5.0, 5.0, 2.0);
        b.ensure_coverage(-5.0, 5.0, 6.0);
        let mut pa: Vec<(f64, f64)> = a.points().iter().map(|p| (p.x, p.t)).collect();
        let mut pb: Vec<(f64, f64)> = b.points().iter().map(|p| (p.x, p.t)).collect();
        pa.sort_by(|u, v| u.partial_cmp(v).unwrap());
        pb.sort_by(|u, v| u.partial_cmp(v).unwrap());
        assert_eq!(pa, pb);
    }

    #[test]
    fn tile_counts_match_intensity() {
        // Mean points per unit tile should be lambda within 3 standard errors.
        let lambda = 2.0;
        let samples = 10_000;
        let mut total = 0usize;
        for seed in 0..samples {
            let mut f = PointField::new(lambda, seed, &BaselineSpec::Constant(-10.0));
            f.ensure_coverage(0.2, 0.8, 3.9); // tiles (0, it) for it in -10..4
            total += f.points().len();
        }
        let tiles_per_seed = 14.0;
        let mean = total as f64 / samples as f64 / tiles_per_seed;
        let se = (lambda / (samples as f64 * tiles_per_seed)).sqrt();
        assert!(
            (mean - lambda).abs() < 3.0 * se,
            "mean {mean} vs lambda {lambda} (se {se})"
        );
    }

    #[test]
    fn single_point_is_served_first() {
        let mut field = PointField::manual(&base(), &[(2.0, -0.5)]);
        let cfg = unit_config(0, 1);
        let run = direct_simulate(&cfg, &mut field).unwrap();
        assert_eq!(run.steps[0].s, 2.0);
    }

    #[test]
    fn nearest_of_two_wins() {
        let mut field = PointField::manual(&base(), &[(1.0, -0.5), (-1.5, -0.5)]);
        let cfg = unit_config(0, 2);
        let run = direct_simulate(&cfg, &mut field).unwrap();
        assert_eq!(run.steps[0].s, 1.0);
        assert_eq!(run.steps[1].s, -1.5);
    }

    #[test]
    fn extraction_inverts_known_point() {
        // One point at (z, m - depth) on the right of a flat start: with
        // a = b the recovered uniform is (a + depth) / 2a.
        let mut field = PointField::manual(&base(), &[(0.5, -0.25)]);
        let cfg = unit_config(0, 1);
        let run = direct_simulate(&cfg, &mut field).unwrap();
        let drives = extract_drives(&cfg, &run).unwrap();
        // a = b = 1, depth = 0.25: U = 0.625, E = area of [-0.5, 0.5] band minus depth strip
        assert!((drives[0].u - 0.625).abs() < 1e-12);
        assert!((drives[0].e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apex_point_recovers_threshold() {
        // Left-side point arriving exactly at the sweep top: U = a/(a+b).
        let mut field = PointField::manual(&base(), &[(-0.5, 0.0)]);
        let cfg = unit_config(0, 1);
        let run = direct_simulate(&cfg, &mut field).unwrap();
        let drives = extract_drives(&cfg, &run).unwrap();
        assert_eq!(drives[0].u, 0.5);
    }

    #[test]
    fn unit_coupling_on_a_few_seeds() {
        for seed in 0..5 {
            let cfg = unit_config(seed, 200);
            let report = coupling_check(&cfg, 1e-9).unwrap();
            assert!(report.pass, "seed {seed}: {:?}", report.first_divergence);
        }
    }

    #[test]
    fn general_coupling_on_a_few_seeds() {
        for seed in 0..3 {
            let cfg = SimConfig {
                case: EngineCase::General,
                service: ServiceDist::Exp,
                speed: Speed::Finite(1.0),
                seed,
                horizon: 150,
                ..SimConfig::default()
            };
            let report = coupling_check(&cfg, 1e-9).unwrap();
            assert!(report.pass, "seed {seed}: {:?}", report.first_divergence);
        }
    }

    #[test]
    fn equivalence_reports_divergence() {
        let cfg = unit_config(3, 50);
        let mut field = PointField::new(cfg.lambda, cfg.seed, &cfg.initial);
        let direct = direct_simulate(&cfg, &mut field).unwrap();
        let drives = extract_drives(&cfg, &direct).unwrap();
        let mut engine = crate::dynamics::run_walk(&cfg, drives).unwrap();
        engine.steps[20].s += 1.0;
        let report = equivalence_check(&direct, &engine, 1e-9).unwrap();
        assert!(!report.pass);
        assert_eq!(report.first_divergence.unwrap().n, 21);
    }

    #[test]
    fn jsonl_export_mentions_ledger() {
        let mut f = PointField::new(1.0, 1, &base());
        f.ensure_coverage(0.0, 0.0, 1.0);
        let dump = f.export_jsonl();
        assert!(dump.lines().last().unwrap().starts_with("{\"tile_ledger\""));
    }
}

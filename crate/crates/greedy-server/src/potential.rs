//! Potentials: the environment as seen from the server.
//!
//! A potential records, for each point of the line, the last time that point
//! was scanned for waiting customers. It is a piecewise-constant function with
//! a single spike at the server's position, where it attains its unique
//! maximum. The server's position is `S(u)` and the maximum value is `M(u)`.
//!
//! Representation: the explored region is a single interval of plateaus split
//! into two stacks around the spike, so that a sweep (which always happens
//! around the spike) touches only the inner ends of the stacks. Outside the
//! explored interval the potential equals a fixed baseline. The spike is
//! stored out of band; it has measure zero and never enters integrals.
//!
//! ```
//! use greedy_server::potential::{BaselineSpec, Potential};
//!
//! // The standard initial state: a spike of height 0 at the origin over a
//! // constant level of -1 (every point last "scanned" one time unit ago).
//! let u = Potential::make_initial(&BaselineSpec::Constant(-1.0), 0.0).unwrap();
//! assert_eq!(u.max_info(), (0.0, 0.0));
//! assert_eq!(u.eval(3.7), -1.0);
//! assert_eq!(u.eval(0.0), 0.0);
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PotentialError {
    #[error("baseline level {0} is positive; initial intensities must be nonnegative")]
    PositiveBaseline(f64),
    #[error("baseline is not finite or not bounded")]
    UnboundedBaseline,
    #[error("baseline breakpoints must be finite and strictly increasing")]
    BadBreakpoints,
    #[error("baseline is zero everywhere; no customers can ever be found at time 0")]
    DegenerateBaseline,
    #[error("piece count mismatch: {breakpoints} breakpoints need {breakpoints}+1 levels, got {levels}")]
    PieceCountMismatch { breakpoints: usize, levels: usize },
    #[error("spike value {spike} does not strictly dominate plateau value {plateau}")]
    SpikeNotDominant { spike: f64, plateau: f64 },
    #[error("overlay breakpoints must be finite and strictly increasing")]
    BadOverlay,
    #[error("spike position {0} does not lie on an overlay breakpoint")]
    SpikeOffGrid(f64),
    #[error("top {top} lies below the potential (value {value}) inside the integration interval")]
    TopBelowPotential { top: f64, value: f64 },
    #[error("inverted interval [{0}, {1}]")]
    InvertedInterval(f64, f64),
}

/// The initial potential outside the explored region: `-mu(x)` for an
/// inhomogeneous initial customer intensity `mu`, or a constant (the standard
/// start uses -1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BaselineSpec {
    Constant(f64),
    /// `levels[i]` holds on `[breakpoints[i-1], breakpoints[i])`, with
    /// `levels[0]` on the left tail and `levels[n]` on the right tail.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        levels: Vec<f64>,
    },
}

impl BaselineSpec {
    /// Validates a baseline as an initial condition: levels finite, `<= 0`,
    /// not identically zero.
    pub fn validate_initial(&self) -> Result<(), PotentialError> {
        let levels: &[f64] = match self {
            BaselineSpec::Constant(l) => std::slice::from_ref(l),
            BaselineSpec::PiecewiseConstant {
                breakpoints,
                levels,
            } => {
                if levels.len() != breakpoints.len() + 1 {
                    return Err(PotentialError::PieceCountMismatch {
                        breakpoints: breakpoints.len(),
                        levels: levels.len(),
                    });
                }
                if !breakpoints.windows(2).all(|w| w[0] < w[1])
                    || breakpoints.iter().any(|b| !b.is_finite())
                {
                    return Err(PotentialError::BadBreakpoints);
                }
                levels
            }
        };
        for &l in levels {
            if !l.is_finite() {
                return Err(PotentialError::UnboundedBaseline);
            }
            if l > 0.0 {
                return Err(PotentialError::PositiveBaseline(l));
            }
        }
        if levels.iter().all(|&l| l == 0.0) {
            return Err(PotentialError::DegenerateBaseline);
        }
        Ok(())
    }

    /// Right-continuous evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            BaselineSpec::Constant(l) => *l,
            BaselineSpec::PiecewiseConstant {
                breakpoints,
                levels,
            } => levels[breakpoints.partition_point(|&b| b <= x)],
        }
    }

    /// Limit from the left.
    pub fn eval_left(&self, x: f64) -> f64 {
        match self {
            BaselineSpec::Constant(l) => *l,
            BaselineSpec::PiecewiseConstant {
                breakpoints,
                levels,
            } => levels[breakpoints.partition_point(|&b| b < x)],
        }
    }

    pub fn min_level(&self) -> f64 {
        match self {
            BaselineSpec::Constant(l) => *l,
            BaselineSpec::PiecewiseConstant { levels, .. } => {
                levels.iter().cloned().fold(f64::INFINITY, f64::min)
            }
        }
    }

    pub fn max_level(&self) -> f64 {
        match self {
            BaselineSpec::Constant(l) => *l,
            BaselineSpec::PiecewiseConstant { levels, .. } => {
                levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }

    fn translated(&self, z: f64, c: f64) -> BaselineSpec {
        match self {
            BaselineSpec::Constant(l) => BaselineSpec::Constant(l + c),
            BaselineSpec::PiecewiseConstant {
                breakpoints,
                levels,
            } => BaselineSpec::PiecewiseConstant {
                breakpoints: breakpoints.iter().map(|b| b - z).collect(),
                levels: levels.iter().map(|l| l + c).collect(),
            },
        }
    }
}

/// One plateau of the explored overlay. For the left stack `edge` is the left
/// end of the plateau; for the right stack it is the right end.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Plateau {
    pub edge: f64,
    pub value: f64,
}

/// A unimodal piecewise-constant potential with a distinguished spike.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    baseline: BaselineSpec,
    /// Plateaus strictly left of the spike, outermost first. Plateau `i`
    /// covers `[left[i].edge, next_edge)` where `next_edge` is
    /// `left[i+1].edge`, or the spike position for the innermost.
    pub(crate) left: Vec<Plateau>,
    /// Plateaus strictly right of the spike, outermost first. Plateau `i`
    /// covers `(prev_edge, right[i].edge]` where `prev_edge` is
    /// `right[i+1].edge`, or the spike position for the innermost.
    pub(crate) right: Vec<Plateau>,
    spike_pos: f64,
    spike_val: f64,
}

impl Potential {
    /// Builds the initial potential: the given baseline with a spike of value
    /// 0 at `spike_pos` and an empty overlay. The standard start
    /// (`Constant(-1)`, spike at 0) is the delta-at-origin-minus-one state.
    pub fn make_initial(spec: &BaselineSpec, spike_pos: f64) -> Result<Potential, PotentialError> {
        spec.validate_initial()?;
        Ok(Potential {
            baseline: spec.clone(),
            left: Vec::new(),
            right: Vec::new(),
            spike_pos,
            spike_val: 0.0,
        })
    }

    /// Builds a potential from an explicit overlay description:
    /// `values[i]` on `[breakpoints[i], breakpoints[i+1])`. The spike must sit
    /// on one of the breakpoints. Adjacent equal-valued plateaus are merged.
    /// Unimodality is not required here; `is_unimodal` reports it.
    pub fn from_parts(
        baseline: BaselineSpec,
        breakpoints: &[f64],
        values: &[f64],
        spike_pos: f64,
        spike_val: f64,
    ) -> Result<Potential, PotentialError> {
        if breakpoints.is_empty() && !values.is_empty()
            || !breakpoints.is_empty() && values.len() + 1 != breakpoints.len()
        {
            return Err(PotentialError::BadOverlay);
        }
        if !breakpoints.windows(2).all(|w| w[0] < w[1])
            || breakpoints.iter().any(|b| !b.is_finite())
            || values.iter().any(|v| !v.is_finite())
        {
            return Err(PotentialError::BadOverlay);
        }
        let mut pot = Potential {
            baseline,
            left: Vec::new(),
            right: Vec::new(),
            spike_pos,
            spike_val,
        };
        if breakpoints.is_empty() {
            return Ok(pot);
        }
        if !breakpoints.contains(&spike_pos) {
            return Err(PotentialError::SpikeOffGrid(spike_pos));
        }
        // Merge equal neighbors, then split around the spike.
        let mut merged: Vec<(f64, f64, f64)> = Vec::new(); // (lo, hi, value)
        for (i, &v) in values.iter().enumerate() {
            match merged.last_mut() {
                Some(last) if last.2 == v => last.1 = breakpoints[i + 1],
                _ => merged.push((breakpoints[i], breakpoints[i + 1], v)),
            }
        }
        for &(lo, hi, v) in &merged {
            if hi <= spike_pos {
                pot.left.push(Plateau { edge: lo, value: v });
            } else {
                debug_assert!(lo >= spike_pos);
            }
        }
        for &(lo, hi, v) in merged.iter().rev() {
            if lo >= spike_pos {
                pot.right.push(Plateau { edge: hi, value: v });
            }
        }
        for p in pot.left.iter().chain(pot.right.iter()) {
            if p.value >= spike_val {
                return Err(PotentialError::SpikeNotDominant {
                    spike: spike_val,
                    plateau: p.value,
                });
            }
        }
        Ok(pot)
    }

    pub fn baseline(&self) -> &BaselineSpec {
        &self.baseline
    }

    pub fn overlay_is_empty(&self) -> bool {
        self.left.is_empty() && self.right.is_empty()
    }

    /// Left end of the explored interval (the spike position when nothing has
    /// been explored).
    pub fn overlay_left(&self) -> f64 {
        self.left.first().map_or(self.spike_pos, |p| p.edge)
    }

    pub fn overlay_right(&self) -> f64 {
        self.right.first().map_or(self.spike_pos, |p| p.edge)
    }

    /// `(S(u), M(u))`: the spike position and the unique maximum value.
    pub fn max_info(&self) -> (f64, f64) {
        (self.spike_pos, self.spike_val)
    }

    pub fn spike_pos(&self) -> f64 {
        self.spike_pos
    }

    pub fn spike_val(&self) -> f64 {
        self.spike_val
    }

    /// Point evaluation, right-continuous left of the spike and
    /// left-continuous right of it (plateau boundary conventions are a null
    /// set; the spike value is exact).
    pub fn eval(&self, x: f64) -> f64 {
        if x == self.spike_pos {
            return self.spike_val;
        }
        if x < self.spike_pos {
            // Plateau with the largest edge <= x.
            let i = self.left.partition_point(|p| p.edge <= x);
            if i == 0 {
                self.baseline.eval(x)
            } else {
                self.left[i - 1].value
            }
        } else {
            // right[] edges are decreasing; plateau with the smallest edge >= x.
            let i = self.right.partition_point(|p| p.edge >= x);
            if i == 0 {
                self.baseline.eval(x)
            } else {
                self.right[i - 1].value
            }
        }
    }

    /// Limit of `u` from the left at `x`.
    pub fn eval_left_limit(&self, x: f64) -> f64 {
        if x <= self.spike_pos {
            if x <= self.overlay_left() {
                return self.baseline.eval_left(x);
            }
            // Innermost plateau with edge strictly less than x.
            let i = self.left.partition_point(|p| p.edge < x);
            self.left[i - 1].value
        } else {
            // On the right side intervals are (prev, edge], so the left limit
            // agrees with point evaluation everywhere except at the spike.
            self.eval(x)
        }
    }

    /// Limit of `u` from the right at `x`.
    pub fn eval_right_limit(&self, x: f64) -> f64 {
        if x >= self.spike_pos {
            if x >= self.overlay_right() {
                return self.baseline.eval(x);
            }
            let i = self.right.partition_point(|p| p.edge > x);
            self.right[i - 1].value
        } else {
            self.eval(x)
        }
    }

    /// `theta_z u + c`: shifts the graph left by `z` and up by `c`.
    /// `S` moves to `S - z`, `M` to `M + c`, the shape is unchanged.
    pub fn translate(&self, z: f64, c: f64) -> Potential {
        let shift = |p: &Plateau| Plateau {
            edge: p.edge - z,
            value: p.value + c,
        };
        Potential {
            baseline: self.baseline.translated(z, c),
            left: self.left.iter().map(shift).collect(),
            right: self.right.iter().map(shift).collect(),
            spike_pos: self.spike_pos - z,
            spike_val: self.spike_val + c,
        }
    }

    /// Recentring: returns the potential with `S = 0` and `M = 0`.
    pub fn center(&self) -> Potential {
        self.translate(self.spike_pos, -self.spike_val)
    }

    pub fn is_centered(&self) -> bool {
        self.spike_pos == 0.0 && self.spike_val == 0.0
    }

    /// Structural unimodality check: nondecreasing up to the spike,
    /// nonincreasing after, including the baseline tails.
    pub fn is_unimodal(&self) -> bool {
        // Left stack values must increase inward, right stack inward too.
        if !self.left.windows(2).all(|w| w[0].value <= w[1].value) {
            return false;
        }
        if !self.right.windows(2).all(|w| w[0].value <= w[1].value) {
            return false;
        }
        if self.left.last().is_some_and(|p| p.value >= self.spike_val) {
            return false;
        }
        if self.right.last().is_some_and(|p| p.value >= self.spike_val) {
            return false;
        }
        // Baseline tails: nondecreasing left of the overlay, nonincreasing
        // right of it, and not poking above the adjacent overlay value.
        match &self.baseline {
            BaselineSpec::Constant(l) => {
                let left_ok = self.left.first().map_or(*l < self.spike_val, |p| *l <= p.value);
                let right_ok = self.right.first().map_or(*l < self.spike_val, |p| *l <= p.value);
                left_ok && right_ok
            }
            BaselineSpec::PiecewiseConstant {
                breakpoints,
                levels,
            } => {
                let ol = self.overlay_left();
                let or = self.overlay_right();
                for (i, w) in levels.windows(2).enumerate() {
                    let b = breakpoints[i];
                    if b <= ol && w[0] > w[1] {
                        return false;
                    }
                    if b >= or && w[0] < w[1] {
                        return false;
                    }
                }
                let ladj = self.baseline.eval_left(ol);
                let radj = self.baseline.eval(or);
                let left_ok = self
                    .left
                    .first()
                    .map_or(ladj < self.spike_val, |p| ladj <= p.value);
                let right_ok = self
                    .right
                    .first()
                    .map_or(radj < self.spike_val, |p| radj <= p.value);
                left_ok && right_ok
            }
        }
    }

    /// `m(u) = M(u) - inf u`.
    pub fn height_range(&self) -> f64 {
        let mut min = self.baseline.min_level();
        for p in self.left.iter().chain(self.right.iter()) {
            min = min.min(p.value);
        }
        self.spike_val - min
    }

    /// Value and right end of the piece covering `[x, x + eps)`.
    fn piece_at(&self, x: f64) -> (f64, f64) {
        let ol = self.overlay_left();
        let or = self.overlay_right();
        if x < ol || x >= or {
            // Baseline region; clip at the overlay if it lies ahead.
            let end = match &self.baseline {
                BaselineSpec::Constant(_) => f64::INFINITY,
                BaselineSpec::PiecewiseConstant { breakpoints, .. } => {
                    let i = breakpoints.partition_point(|&b| b <= x);
                    breakpoints.get(i).copied().unwrap_or(f64::INFINITY)
                }
            };
            let end = if x < ol { end.min(ol) } else { end };
            return (self.baseline.eval(x), end);
        }
        if x < self.spike_pos {
            let i = self.left.partition_point(|p| p.edge <= x);
            let end = self
                .left
                .get(i)
                .map_or(self.spike_pos, |p| p.edge)
                .min(self.spike_pos);
            (self.left[i - 1].value, end)
        } else {
            // x in [spike_pos, overlay_right): the piece covering x+eps is the
            // innermost right plateau with edge > x.
            let i = self.right.partition_point(|p| p.edge > x);
            (self.right[i - 1].value, self.right[i - 1].edge)
        }
    }

    /// Exact integral of `(top - u)` over `[x1, x2]`, plateau by plateau.
    /// The spike has measure zero and contributes nothing, but `top` must
    /// still dominate `u` (spike included) on the whole interval.
    pub fn area_above(&self, top: f64, x1: f64, x2: f64) -> Result<f64, PotentialError> {
        if x2 < x1 {
            return Err(PotentialError::InvertedInterval(x1, x2));
        }
        if x1 <= self.spike_pos && self.spike_pos <= x2 && top < self.spike_val {
            return Err(PotentialError::TopBelowPotential {
                top,
                value: self.spike_val,
            });
        }
        let mut area = 0.0;
        let mut x = x1;
        while x < x2 {
            let (value, end) = self.piece_at(x);
            if top < value {
                return Err(PotentialError::TopBelowPotential { top, value });
            }
            let e = end.min(x2);
            area += (e - x) * (top - value);
            x = e;
        }
        Ok(area)
    }

    /// Raises `[spike - z, spike + z]` to `plateau_value`, placing a new spike
    /// of value `spike_val` at the left or right end of the window. This is
    /// the structural core of the step operators; callers pick the levels.
    pub(crate) fn apply_sweep(
        &mut self,
        z: f64,
        go_left: bool,
        plateau_value: f64,
        spike_val: f64,
    ) {
        debug_assert!(z > 0.0);
        let x_lo = self.spike_pos - z;
        let x_hi = self.spike_pos + z;
        while self.left.last().is_some_and(|p| p.edge >= x_lo) {
            self.left.pop();
        }
        while self.right.last().is_some_and(|p| p.edge <= x_hi) {
            self.right.pop();
        }
        debug_assert!(self.left.last().is_none_or(|p| p.value < plateau_value));
        debug_assert!(self.right.last().is_none_or(|p| p.value < plateau_value));
        if go_left {
            self.right.push(Plateau {
                edge: x_hi,
                value: plateau_value,
            });
            self.spike_pos = x_lo;
        } else {
            self.left.push(Plateau {
                edge: x_lo,
                value: plateau_value,
            });
            self.spike_pos = x_hi;
        }
        self.spike_val = spike_val;
    }

    /// Walks plateau boundaries outward from the spike on one side.
    /// Yields `(end_distance, value)` segments; the final segment has
    /// `end_distance == f64::INFINITY`.
    pub(crate) fn side_cursor(&self, go_left: bool) -> SideCursor<'_> {
        SideCursor::new(self, go_left)
    }

    /// Debug validation of the representation invariants.
    pub fn check_invariants(&self) -> Result<(), PotentialError> {
        let mut edges: Vec<f64> = self.left.iter().map(|p| p.edge).collect();
        edges.push(self.spike_pos);
        edges.extend(self.right.iter().rev().map(|p| p.edge));
        if !edges.windows(2).all(|w| w[0] < w[1]) || edges.iter().any(|e| !e.is_finite()) {
            return Err(PotentialError::BadOverlay);
        }
        for side in [&self.left, &self.right] {
            if !side.windows(2).all(|w| w[0].value != w[1].value) {
                return Err(PotentialError::BadOverlay);
            }
            for p in side.iter() {
                if p.value >= self.spike_val {
                    return Err(PotentialError::SpikeNotDominant {
                        spike: self.spike_val,
                        plateau: p.value,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Outward walk over the segments of one side of a potential, in distance
/// coordinates from the spike.
pub(crate) struct SideCursor<'a> {
    pot: &'a Potential,
    go_left: bool,
    /// Index into the side stack, counting inward from the tail; `None` once
    /// the walk has left the overlay.
    stack_idx: Option<usize>,
    /// Baseline breakpoint cursor (index into breakpoints) once on baseline.
    base_idx: usize,
    pub value: f64,
    /// Distance from the spike at which the current segment ends.
    pub end_dist: f64,
}

impl<'a> SideCursor<'a> {
    fn new(pot: &'a Potential, go_left: bool) -> Self {
        let side = if go_left { &pot.left } else { &pot.right };
        let mut c = SideCursor {
            pot,
            go_left,
            stack_idx: None,
            base_idx: 0,
            value: 0.0,
            end_dist: 0.0,
        };
        if let Some(inner) = side.last() {
            c.stack_idx = Some(side.len() - 1);
            c.value = inner.value;
            c.end_dist = (pot.spike_pos - inner.edge).abs();
        } else {
            c.enter_baseline(pot.spike_pos);
        }
        c
    }

    fn enter_baseline(&mut self, from_x: f64) {
        self.stack_idx = None;
        match &self.pot.baseline {
            BaselineSpec::Constant(l) => {
                self.value = *l;
                self.end_dist = f64::INFINITY;
            }
            BaselineSpec::PiecewiseConstant {
                breakpoints,
                levels,
            } => {
                if self.go_left {
                    let i = breakpoints.partition_point(|&b| b < from_x);
                    self.value = levels[i];
                    self.base_idx = i;
                    self.end_dist = if i == 0 {
                        f64::INFINITY
                    } else {
                        self.pot.spike_pos - breakpoints[i - 1]
                    };
                } else {
                    let i = breakpoints.partition_point(|&b| b <= from_x);
                    self.value = levels[i];
                    self.base_idx = i;
                    self.end_dist = breakpoints
                        .get(i)
                        .map_or(f64::INFINITY, |b| b - self.pot.spike_pos);
                }
            }
        }
    }

    /// Moves to the next segment outward.
    pub fn advance(&mut self) {
        match self.stack_idx {
            Some(0) => {
                let side = if self.go_left {
                    &self.pot.left
                } else {
                    &self.pot.right
                };
                self.enter_baseline(side[0].edge);
            }
            Some(i) => {
                let side = if self.go_left {
                    &self.pot.left
                } else {
                    &self.pot.right
                };
                let p = side[i - 1];
                self.stack_idx = Some(i - 1);
                self.value = p.value;
                self.end_dist = (self.pot.spike_pos - p.edge).abs();
            }
            None => match &self.pot.baseline {
                BaselineSpec::Constant(_) => unreachable!("advanced past the constant tail"),
                BaselineSpec::PiecewiseConstant {
                    breakpoints,
                    levels,
                } => {
                    if self.go_left {
                        debug_assert!(self.base_idx > 0);
                        self.base_idx -= 1;
                        self.value = levels[self.base_idx];
                        self.end_dist = if self.base_idx == 0 {
                            f64::INFINITY
                        } else {
                            self.pot.spike_pos - breakpoints[self.base_idx - 1]
                        };
                    } else {
                        self.base_idx += 1;
                        self.value = levels[self.base_idx];
                        self.end_dist = breakpoints
                            .get(self.base_idx)
                            .map_or(f64::INFINITY, |b| b - self.pot.spike_pos);
                    }
                }
            },
        }
    }
}

/// JSON snapshot schema: `{baseline, breakpoints, values, spike: {x, M}}`.
/// Round-trips bit-exactly through `serde_json`.
#[derive(Serialize, Deserialize)]
struct PotentialRepr {
    baseline: BaselineSpec,
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    spike: SpikeRepr,
}

#[derive(Serialize, Deserialize)]
struct SpikeRepr {
    x: f64,
    #[serde(rename = "M")]
    max: f64,
}

impl Serialize for Potential {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut breakpoints = Vec::new();
        let mut values = Vec::new();
        if !self.overlay_is_empty() {
            for p in &self.left {
                breakpoints.push(p.edge);
                values.push(p.value);
            }
            breakpoints.push(self.spike_pos);
            for p in self.right.iter().rev() {
                values.push(p.value);
                breakpoints.push(p.edge);
            }
        }
        PotentialRepr {
            baseline: self.baseline.clone(),
            breakpoints,
            values,
            spike: SpikeRepr {
                x: self.spike_pos,
                max: self.spike_val,
            },
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Potential {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = PotentialRepr::deserialize(deserializer)?;
        let mut breakpoints = repr.breakpoints;
        let values = repr.values;
        // Reinstate the spike breakpoint if it sits at an overlay edge.
        if !breakpoints.is_empty() && !breakpoints.contains(&repr.spike.x) {
            if repr.spike.x < breakpoints[0] {
                breakpoints.insert(0, repr.spike.x);
            } else {
                breakpoints.push(repr.spike.x);
            }
        }
        Potential::from_parts(
            repr.baseline,
            &breakpoints,
            &values,
            repr.spike.x,
            repr.spike.max,
        )
        .map_err(serde::de::Error::custom)
    }
}

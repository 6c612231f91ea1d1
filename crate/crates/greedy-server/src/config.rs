//! Run configuration: engine case, intensity, speed, service law, horizon,
//! seed and initial condition.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::potential::BaselineSpec;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unit case requires deterministic unit service times")]
    UnitNeedsDet1,
    #[error("unit case requires infinite speed")]
    UnitNeedsInfiniteSpeed,
    #[error("lambda must be positive and finite, got {0}")]
    BadLambda(f64),
    #[error("speed must be positive, got {0}")]
    BadSpeed(f64),
    #[error("invalid initial condition: {0}")]
    BadInitial(#[from] crate::potential::PotentialError),
    #[error("cannot parse mu spec {0:?}: expected `level` or `level@a..b` entries")]
    BadMuSpec(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineCase {
    /// T = 1, v = infinity; the first customer is picked at t = 0 and the
    /// potential maximum is the completion time of the last service.
    Unit,
    /// Random T, finite or infinite v; the walk begins by serving a customer
    /// at the origin and the potential maximum is a service-start time.
    General,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceDist {
    /// Deterministic service of one time unit.
    Det1,
    /// Exponential service with mean one.
    Exp,
}

/// Server travel speed; `Infinite` means instantaneous relocation, not a
/// large finite surrogate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Speed {
    Finite(f64),
    Infinite,
}

impl Speed {
    pub fn travel_time(&self, distance: f64) -> f64 {
        match self {
            Speed::Finite(v) => distance / v,
            Speed::Infinite => 0.0,
        }
    }
}

impl Serialize for Speed {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Speed::Finite(v) => s.serialize_f64(*v),
            Speed::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Speed {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Speed::Finite(v)),
            Raw::Str(s) if s == "inf" => Ok(Speed::Infinite),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad speed {s:?}"))),
        }
    }
}

impl std::str::FromStr for Speed {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "inf" {
            Ok(Speed::Infinite)
        } else {
            s.parse::<f64>()
                .map(Speed::Finite)
                .map_err(|e| e.to_string())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub case: EngineCase,
    pub lambda: f64,
    pub speed: Speed,
    pub service: ServiceDist,
    pub horizon: u64,
    pub seed: u64,
    pub initial: BaselineSpec,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            case: EngineCase::Unit,
            lambda: 1.0,
            speed: Speed::Infinite,
            service: ServiceDist::Det1,
            horizon: 1000,
            seed: 0,
            initial: BaselineSpec::Constant(-1.0),
        }
    }
}

impl SimConfig {
    // negated comparisons are deliberate: NaN must fail validation
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(ConfigError::BadLambda(self.lambda));
        }
        if let Speed::Finite(v) = self.speed {
            if !(v > 0.0) {
                return Err(ConfigError::BadSpeed(v));
            }
        }
        if self.case == EngineCase::Unit {
            if self.service != ServiceDist::Det1 {
                return Err(ConfigError::UnitNeedsDet1);
            }
            if self.speed != Speed::Infinite {
                return Err(ConfigError::UnitNeedsInfiniteSpeed);
            }
        }
        self.initial.validate_initial()?;
        Ok(())
    }
}

/// Parses a piecewise-constant intensity spec: comma-separated entries, each
/// either a bare `level` (the background, default 1) or `level@a..b` (that
/// level on `[a, b)`). The baseline of the resulting potential is `-mu`.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN endpoints must be rejected
pub fn parse_mu_spec(spec: &str) -> Result<BaselineSpec, ConfigError> {
    let mut background = 1.0_f64;
    let mut pieces: Vec<(f64, f64, f64)> = Vec::new();
    for entry in spec.split(',') {
        let entry = entry.trim();
        if entry.is_empty() {
            continue;
        }
        match entry.split_once('@') {
            None => {
                background = entry
                    .parse()
                    .map_err(|_| ConfigError::BadMuSpec(spec.to_string()))?;
            }
            Some((level, range)) => {
                let level: f64 = level
                    .parse()
                    .map_err(|_| ConfigError::BadMuSpec(spec.to_string()))?;
                let (a, b) = range
                    .split_once("..")
                    .ok_or_else(|| ConfigError::BadMuSpec(spec.to_string()))?;
                let a: f64 = a
                    .parse()
                    .map_err(|_| ConfigError::BadMuSpec(spec.to_string()))?;
                let b: f64 = b
                    .parse()
                    .map_err(|_| ConfigError::BadMuSpec(spec.to_string()))?;
                if !(a < b) {
                    return Err(ConfigError::BadMuSpec(spec.to_string()));
                }
                pieces.push((a, b, level));
            }
        }
    }
    if pieces.is_empty() {
        return Ok(BaselineSpec::Constant(-background));
    }
    pieces.sort_by(|p, q| p.0.total_cmp(&q.0));
    for w in pieces.windows(2) {
        if w[0].1 > w[1].0 {
            return Err(ConfigError::BadMuSpec(spec.to_string()));
        }
    }
    let mut breakpoints = Vec::new();
    let mut levels = vec![-background];
    for &(a, b, level) in &pieces {
        if breakpoints.last() == Some(&a) {
            *levels.last_mut().unwrap() = -level;
        } else {
            breakpoints.push(a);
            levels.push(-level);
        }
        breakpoints.push(b);
        levels.push(-background);
    }
    Ok(BaselineSpec::PiecewiseConstant {
        breakpoints,
        levels,
    })
}

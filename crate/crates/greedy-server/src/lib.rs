//! Simulator and verification harness for the greedy server on the real line.
//!
//! A single server lives on the line. Customers arrive as a space-time Poisson
//! process; whenever the server is free it travels to the nearest waiting
//! customer, serves it, and repeats, ignoring arrivals while in transit. The
//! server's position turns out to diverge logarithmically in time, with a fair
//! coin deciding the direction.
//!
//! The crate contains two independent engines for the same process and the
//! machinery to check them against each other:
//!
//! - [`potential`] and [`dynamics`]: the environment seen from the server as a
//!   piecewise-constant potential, advanced by an exact step operator driven
//!   by one exponential and one uniform variable per step.
//! - [`field`]: a direct simulation from an explicitly realized Poisson field,
//!   lazily sampled tile by tile, plus the exploration map that recovers the
//!   drive variables from the field. The two engines couple exactly.
//! - [`blocks`]: block detection, restart logic and the proof-event
//!   diagnostics measuring the events behind the transience argument.
//! - [`experiments`]: ensemble runs, slope estimation and distributional
//!   checks reproducing the logarithmic asymptotics at desk scale.

pub mod blocks;
pub mod config;
pub mod dynamics;
pub mod experiments;
pub mod field;
pub mod potential;
pub mod rng;
pub mod stats;

pub use config::{EngineCase, ServiceDist, SimConfig, Speed};
pub use dynamics::{DriveTriple, Side, StepOutcome, Trajectory, Walker};
pub use potential::{BaselineSpec, Potential};

// The guide's code snippets run as doc-tests, so the book cannot drift out
// of sync with the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/potential.md")]
    struct PotentialChapter;
    #[doc = include_str!("../../../book/src/walk.md")]
    struct WalkChapter;
    #[doc = include_str!("../../../book/src/oracle.md")]
    struct OracleChapter;
    #[doc = include_str!("../../../book/src/blocks.md")]
    struct BlocksChapter;
    #[doc = include_str!("../../../book/src/experiments.md")]
    struct ExperimentsChapter;
}

//! Cardinality mediation for composed services.
//!
//! Services exchanging lists of data instances declare how many instances a
//! message may carry (an integer interval, like XML Schema's
//! `minOccurs`/`maxOccurs`) and how often they may be invoked. When a sender's
//! output constraint does not fit a receiver's input constraint, the
//! composition needs mediation: invoking services several times, merging and
//! deduplicating results, selecting surplus away, and re-batching elements
//! into deliveries the receiver accepts.
//!
//! The crate is organized as a pipeline:
//!
//! - [`model`]: constrained schemas, services, data flows, compositions, and
//!   interval arithmetic on cardinalities.
//! - [`classifier`]: classifies a sender/receiver constraint pair into six
//!   compatibility cases and groups them into mediation situations.
//! - [`fdsolve`]: a small finite-domain solver over integer intervals with
//!   bounds-consistency propagation and ascending labeling.
//! - [`planner`]: turns flows and compositions into constraint problems and
//!   grades the outcome (certain, probable, runtime-only, infeasible).
//! - [`mediator`]: executes a plan at the instance level: select, merge,
//!   duplicate removal, and batch partitioning over element streams.
//! - [`harness`]: deterministic seeded mock services and whole-composition
//!   simulation.
//! - [`descriptor`]: the JSON descriptor format consumed by the CLI.

pub mod classifier;
pub mod descriptor;
pub mod fdsolve;
pub mod harness;
pub mod mediator;
pub mod model;
pub mod planner;

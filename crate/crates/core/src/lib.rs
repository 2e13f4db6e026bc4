//! Design of statistical quality-control (QC) procedures with a
//! deterministic-crowding genetic algorithm.
//!
//! A QC procedure is a Boolean combination of four generic control rules
//! (single value, range, mean, standard deviation) applied to a chronological
//! stream of standardized control measurements. Procedures are encoded as
//! fixed-width bit strings, scored by Monte Carlo estimates of their
//! probabilities for critical-error detection and false rejection, and evolved
//! with deterministic crowding. A comparison harness ranks procedures over
//! paired simulation replicates and tests significance with the sign test.
//!
//! Module map:
//!
//! | module        | contents                                                  |
//! |---------------|-----------------------------------------------------------|
//! | [`rng`]       | seedable multi-stream congruential generator, normal deviates |
//! | [`rules`]     | rules, procedures, expression trees, canonical notation   |
//! | [`genome`]    | bit-string codec                                          |
//! | [`error_model`] | critical errors and the closed-form single-value oracle |
//! | [`simulator`] | run-by-run simulation of control measurements             |
//! | [`objective`] | fitness and comparison functions                          |
//! | [`ga`]        | deterministic crowding                                    |
//! | [`library`]   | notation parser and reference procedures                  |
//! | [`stats`]     | replicate comparison, summaries, sign test                |

pub mod error;
pub mod error_model;
pub mod ga;
pub mod genome;
pub mod library;
pub mod objective;
pub mod rng;
pub mod rules;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};

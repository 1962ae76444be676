//! Consecutive lane-change analytics for highway drone trajectory data.
//!
//! The pipeline runs in stages, each usable on its own:
//!
//! * [`ingest`] loads HighD-format recordings (or generates synthetic ones),
//! * [`detect`] finds lane-change events and their start/end instants,
//! * [`mine`] pairs events into consecutive lane-change scenarios,
//! * [`utility`] measures speed/clearance utility changes and TTC risk,
//! * [`logit`] fits a random-parameters logit by simulated maximum likelihood,
//! * [`classify`] trains decision tree, random forest and RBF SVM classifiers,
//! * [`pipeline`] orchestrates everything and writes the report bundle.
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

// `!(x > 0.0)` is the NaN-rejecting form used for option checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod detect;
pub mod exec;
pub mod ingest;
pub mod logit;
pub mod mine;
pub mod pipeline;
pub mod utility;

pub use detect::{detect_events, Detection, LaneChangeDirection, LaneChangeEvent};
pub use ingest::{LaneLayout, Recording, Track};
pub use mine::{ConsecutiveScenario, VehicleGroup};

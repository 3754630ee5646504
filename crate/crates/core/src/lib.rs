//! Annotation-budget tooling for instance segmentation.
//!
//! The crate covers the whole loop of deciding how to spend annotator time:
//!
//! - [`geometry`]: RLE masks, polygon rasterization, boxes and extreme points.
//! - [`metrics`]: instance matching and SQ/RQ/PQ, plus correctness-by-overlap histograms.
//! - [`cost`]: seconds per annotation action.
//! - [`strategy`]: priority scores and the six annotation strategies as schedules.
//! - [`simulate`]: replaying a schedule under a budget grid and scoring the labels.
//! - [`synth`]: synthetic scenes with overlap-dependent mask quality.
//! - [`dataset`] and [`io`]: the JSON dataset schema and CSV output.

pub mod cost;
pub mod dataset;
mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod simulate;
pub mod strategy;
pub mod synth;

pub use cost::{action_cost, ActionKind, AnnotationAction, CostModel};
pub use dataset::{Dataset, Frame, InstanceRecord};
pub use error::{Error, Result};
pub use geometry::{BoundingBox, NewsKeypoints, RleMask};
pub use metrics::{match_instances, panoptic_quality, Matching, PanopticScores};
pub use simulate::{label_snapshot, run_campaign, snapshot_quality, CurvePoint, LabelSnapshot};
pub use strategy::{build_schedule, Schedule, StrategyId};

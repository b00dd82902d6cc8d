//! Georegistration of locally consistent 2D landmark maps.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod config;
pub mod eval;
pub mod filter;
pub mod geometry;
pub mod graph;
pub mod pipeline;
pub mod projection;
pub mod sim;
pub mod tables;

pub use filter::{FilterConfig, FilterState, GateDecision, GpsFix, OdomSample};
pub use geometry::{MapOrigin, Point2, Pose2};
pub use graph::{Edge, GraphError, Info2, Info3, LandmarkKind, PoseGraph, Vertex, VertexId};

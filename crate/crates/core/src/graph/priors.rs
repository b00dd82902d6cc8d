//! Attaching loose GPS priors and tight aerial anchor priors.

use super::{Edge, GraphError, Info2, PoseGraph, VertexId};
use crate::geometry::Point2;

/// Standard deviation of a GPS prior edge, meters.
pub const DEFAULT_GPS_SIGMA: f64 = 5.0;
/// Standard deviation of an aerial anchor edge, meters.
pub const DEFAULT_ANCHOR_SIGMA: f64 = 0.1;
/// Default travel distance between consecutive GPS prior edges, meters.
pub const DEFAULT_GPS_SPACING: f64 = 10.0;

/// Cumulative polyline length at every point, starting at zero.
pub fn arc_lengths(points: &[Point2]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if i > 0 {
            acc += p.distance(&points[i - 1]);
        }
        out.push(acc);
    }
    out
}

/// Adds one GPS prior at the first pose at or after every multiple of
/// `spacing` of accumulated travel along `filtered_path`, starting with the
/// first pose. Returns the number of edges added.
pub fn attach_gps_priors(
    graph: &mut PoseGraph,
    filtered_path: &[(VertexId, Point2)],
    spacing: f64,
    sigma: f64,
) -> Result<usize, GraphError> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(GraphError::InvalidArgument(format!("spacing must be > 0, got {spacing}")));
    }
    if !(sigma > 0.0) {
        return Err(GraphError::InvalidArgument(format!("sigma must be > 0, got {sigma}")));
    }
    let info = Info2::isotropic(sigma)?;
    for (id, p) in filtered_path {
        graph.pose(*id)?;
        if !p.is_finite() {
            return Err(GraphError::InvalidArgument(format!("non-finite path point at {id}")));
        }
    }
    let points: Vec<Point2> = filtered_path.iter().map(|(_, p)| *p).collect();
    let arcs = arc_lengths(&points);
    let mut next_mark = 0.0;
    let mut added = 0;
    for ((id, meas), arc) in filtered_path.iter().zip(arcs) {
        if arc >= next_mark {
            graph.add_edge(Edge::GpsPrior {
                pose: *id,
                meas: *meas,
                info,
            })?;
            added += 1;
            next_mark = ((arc / spacing).floor() + 1.0) * spacing;
        }
    }
    Ok(added)
}

/// Adds one anchor prior per `(landmark, map-frame label)` pair.
pub fn attach_anchor_priors(
    graph: &mut PoseGraph,
    labels: &[(VertexId, Point2)],
    sigma: f64,
) -> Result<usize, GraphError> {
    if !(sigma > 0.0) {
        return Err(GraphError::InvalidArgument(format!("sigma must be > 0, got {sigma}")));
    }
    let info = Info2::isotropic(sigma)?;
    // validate everything first so a bad label leaves the graph untouched
    for (id, p) in labels {
        graph.landmark(*id)?;
        if !p.is_finite() {
            return Err(GraphError::InvalidArgument(format!("non-finite label for {id}")));
        }
    }
    for (id, p) in labels {
        graph.add_edge(Edge::AnchorPrior {
            landmark: *id,
            meas: *p,
            info,
        })?;
    }
    Ok(labels.len())
}

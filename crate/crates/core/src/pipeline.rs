//! Registration stages composed from the lower-level modules.

use thiserror::Error;

use crate::align::{fit_se2, AlignError, Correspondence, CorrespondenceSet};
use crate::eval::{match_labels, Matching};
use crate::filter::{initial_state, run_filter, FilterConfig, FilterError, FilterOutput, GpsFix, InitConfig, OdomSample};
use crate::geometry::{MapOrigin, Point2, Pose2};
use crate::graph::{
    attach_anchor_priors, attach_gps_priors, optimize, GraphError, OptimizeConfig, OptimizeReport, PoseGraph, VertexId,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("no pose has a filtered position within {max_dt} s")]
    NoPriors { max_dt: f64 },
}

/// Runs the filter in the map frame on UTM fixes.
pub fn filter_gps(
    odom: &[OdomSample],
    gps_utm: &[GpsFix],
    origin: &MapOrigin,
    init: &InitConfig,
    config: &FilterConfig,
) -> Result<FilterOutput, PipelineError> {
    let gps: Vec<GpsFix> = gps_utm
        .iter()
        .map(|f| {
            let p = origin.utm_to_map(&Point2::new(f.easting, f.northing));
            GpsFix {
                easting: p.x,
                northing: p.y,
                ..*f
            }
        })
        .collect();
    let start = initial_state(odom, &gps, init, config.gps_sigma)?;
    let mut out = run_filter(odom, &gps, &start, config)?;
    for d in &mut out.decisions {
        let p = origin.map_to_utm(&Point2::new(d.fix.easting, d.fix.northing));
        d.fix.easting = p.x;
        d.fix.northing = p.y;
    }
    Ok(out)
}

/// Filtered position of each pose, taken at the path sample nearest the
/// pose's timestamp when within `max_dt`.
pub fn prior_measurements(
    pose_times: &[(VertexId, f64)],
    path: &[(f64, Pose2)],
    max_dt: f64,
) -> Vec<(VertexId, Point2)> {
    pose_times
        .iter()
        .filter_map(|&(id, t)| {
            let k = path.partition_point(|(pt, _)| *pt < t);
            let candidates = [k.checked_sub(1), (k < path.len()).then_some(k)];
            candidates
                .into_iter()
                .flatten()
                .map(|i| (i, (path[i].0 - t).abs()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .filter(|&(_, dt)| dt <= max_dt)
                .map(|(i, _)| (id, path[i].1.translation()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsRegistration {
    pub spacing: f64,
    pub sigma: f64,
    /// Rigidly move the map onto the measurements before optimizing.
    pub prealign: bool,
    pub optimize: OptimizeConfig,
}

impl Default for GpsRegistration {
    fn default() -> Self {
        Self {
            spacing: crate::graph::DEFAULT_GPS_SPACING,
            sigma: crate::graph::DEFAULT_GPS_SIGMA,
            prealign: true,
            optimize: OptimizeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpsRegistrationReport {
    pub prealignment: Option<Pose2>,
    pub priors_added: usize,
    pub optimization: OptimizeReport,
}

/// Loose registration: frees every vertex, optionally prealigns, attaches
/// GPS priors along the path and optimizes.
pub fn register_with_gps(
    graph: &mut PoseGraph,
    measurements: &[(VertexId, Point2)],
    config: &GpsRegistration,
) -> Result<GpsRegistrationReport, PipelineError> {
    if measurements.is_empty() {
        return Err(PipelineError::NoPriors { max_dt: 0.0 });
    }
    let prealignment = if config.prealign {
        let pairs = measurements
            .iter()
            .map(|(id, m)| {
                Ok(Correspondence {
                    local: graph.pose(*id)?.translation(),
                    global: *m,
                    weight: 1.0,
                })
            })
            .collect::<Result<Vec<_>, GraphError>>()?;
        let t = fit_se2(&CorrespondenceSet { pairs })?;
        graph.transform(&t);
        Some(t)
    } else {
        None
    };
    graph.unfix_all();
    let priors_added = attach_gps_priors(graph, measurements, config.spacing, config.sigma)?;
    let optimization = optimize(graph, &config.optimize)?;
    Ok(GpsRegistrationReport {
        prealignment,
        priors_added,
        optimization,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorRegistrationReport {
    pub matching: Matching,
    pub optimization: OptimizeReport,
}

/// Tight registration: matches map-frame labels to landmarks, anchors the
/// matches and optimizes.
pub fn register_with_anchors(
    graph: &mut PoseGraph,
    labels: &[Point2],
    radius: f64,
    sigma: f64,
    config: &OptimizeConfig,
) -> Result<AnchorRegistrationReport, PipelineError> {
    let matching = match_labels(graph, labels, radius);
    let anchors: Vec<(VertexId, Point2)> = matching.pairs.iter().map(|m| (m.landmark, m.label)).collect();
    attach_anchor_priors(graph, &anchors, sigma)?;
    let optimization = optimize(graph, config)?;
    Ok(AnchorRegistrationReport { matching, optimization })
}

//! Pose graph data model and its nonlinear least-squares backend.
//!
//! Vertices are vehicle poses and point landmarks. The map origin is not a
//! vertex: GPS and aerial-anchor priors are unary edges expressed directly in
//! the map frame.

mod io;
mod optimizer;
mod priors;
mod residual;
mod sparse;

use std::collections::HashMap;
use std::fmt;

use nalgebra::{Matrix2, Matrix3};
use thiserror::Error;

use crate::geometry::{Point2, Pose2};

pub use io::{read_graph, write_graph, ParseError};
pub use optimizer::{optimize, OptimizeConfig, OptimizeReport, Termination};
pub use priors::{
    arc_lengths, attach_anchor_priors, attach_gps_priors, DEFAULT_ANCHOR_SIGMA, DEFAULT_GPS_SIGMA,
    DEFAULT_GPS_SPACING,
};
pub use residual::{linearize, residual, Jacobian, Residual};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId(pub u64);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LandmarkKind {
    #[default]
    Pole,
    BuildingCorner,
    Other,
}

impl LandmarkKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LandmarkKind::Pole => "pole",
            LandmarkKind::BuildingCorner => "building_corner",
            LandmarkKind::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pole" => Some(LandmarkKind::Pole),
            "building_corner" => Some(LandmarkKind::BuildingCorner),
            "other" => Some(LandmarkKind::Other),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Vertex {
    Pose {
        id: VertexId,
        estimate: Pose2,
        fixed: bool,
    },
    Landmark {
        id: VertexId,
        estimate: Point2,
        kind: LandmarkKind,
        fixed: bool,
    },
}

impl Vertex {
    pub fn id(&self) -> VertexId {
        match self {
            Vertex::Pose { id, .. } | Vertex::Landmark { id, .. } => *id,
        }
    }

    pub fn is_fixed(&self) -> bool {
        match self {
            Vertex::Pose { fixed, .. } | Vertex::Landmark { fixed, .. } => *fixed,
        }
    }

    fn set_fixed(&mut self, value: bool) {
        match self {
            Vertex::Pose { fixed, .. } | Vertex::Landmark { fixed, .. } => *fixed = value,
        }
    }

    /// Number of optimization parameters (3 for poses, 2 for landmarks).
    pub fn dim(&self) -> usize {
        match self {
            Vertex::Pose { .. } => 3,
            Vertex::Landmark { .. } => 2,
        }
    }

    pub fn position(&self) -> Point2 {
        match self {
            Vertex::Pose { estimate, .. } => estimate.translation(),
            Vertex::Landmark { estimate, .. } => *estimate,
        }
    }
}

/// Symmetric positive-definite 2×2 information matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Info2(Matrix2<f64>);

/// Symmetric positive-definite 3×3 information matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Info3(Matrix3<f64>);

const SYMMETRY_TOL: f64 = 1e-12;

macro_rules! info_impl {
    ($name:ident, $mat:ty, $dim:expr) => {
        impl $name {
            pub fn new(m: $mat) -> Result<Self, GraphError> {
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(GraphError::InvalidInformation("non-finite entry".into()));
                }
                for r in 0..$dim {
                    for c in 0..r {
                        let (a, b) = (m[(r, c)], m[(c, r)]);
                        if (a - b).abs() > SYMMETRY_TOL * a.abs().max(b.abs()).max(1.0) {
                            return Err(GraphError::InvalidInformation(format!(
                                "asymmetric at ({r},{c}): {a} vs {b}"
                            )));
                        }
                    }
                }
                if m.cholesky().is_none() {
                    return Err(GraphError::InvalidInformation(
                        "matrix is not positive definite".into(),
                    ));
                }
                Ok(Self(m))
            }

            /// Isotropic information from standard deviations.
            pub fn from_sigmas(sigmas: [f64; $dim]) -> Result<Self, GraphError> {
                let mut m = <$mat>::zeros();
                for (i, s) in sigmas.iter().enumerate() {
                    m[(i, i)] = 1.0 / (s * s);
                }
                Self::new(m)
            }

            pub fn matrix(&self) -> &$mat {
                &self.0
            }
        }
    };
}

info_impl!(Info2, Matrix2<f64>, 2);
info_impl!(Info3, Matrix3<f64>, 3);

impl Info2 {
    pub fn isotropic(sigma: f64) -> Result<Self, GraphError> {
        Self::from_sigmas([sigma, sigma])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Edge {
    /// Odometry / dead-reckoning or loop closure between two poses.
    RelPose {
        from: VertexId,
        to: VertexId,
        meas: Pose2,
        info: Info3,
    },
    /// Landmark position observed in the sensor frame of a pose.
    LandmarkObs {
        pose: VertexId,
        landmark: VertexId,
        meas: Point2,
        info: Info2,
    },
    /// Loose map-frame position prior on a pose (filtered GPS).
    GpsPrior {
        pose: VertexId,
        meas: Point2,
        info: Info2,
    },
    /// Tight map-frame position prior on a landmark (aerial label).
    AnchorPrior {
        landmark: VertexId,
        meas: Point2,
        info: Info2,
    },
}

impl Edge {
    pub fn vertices(&self) -> Vec<VertexId> {
        match self {
            Edge::RelPose { from, to, .. } => vec![*from, *to],
            Edge::LandmarkObs { pose, landmark, .. } => vec![*pose, *landmark],
            Edge::GpsPrior { pose, .. } => vec![*pose],
            Edge::AnchorPrior { landmark, .. } => vec![*landmark],
        }
    }

    pub fn is_prior(&self) -> bool {
        matches!(self, Edge::GpsPrior { .. } | Edge::AnchorPrior { .. })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("vertex {0} not found")]
    MissingVertex(VertexId),
    #[error("vertex {0} already exists")]
    DuplicateVertex(VertexId),
    #[error("vertex {id} has the wrong type, expected {expected}")]
    WrongVertexType { id: VertexId, expected: &'static str },
    #[error("non-finite value in vertex {0}")]
    NonFinite(VertexId),
    #[error("invalid information matrix: {0}")]
    InvalidInformation(String),
    #[error("gauge is unobservable: vertex {0} is not connected to any fixed vertex or prior edge")]
    Underconstrained(VertexId),
    #[error("normal equations not positive definite at block of vertex {vertex} (lambda {lambda:e})")]
    NotPositiveDefinite { vertex: VertexId, lambda: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoseGraph {
    vertices: Vec<Vertex>,
    index: HashMap<VertexId, usize>,
    edges: Vec<Edge>,
}

impl PoseGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_pose(&mut self, id: VertexId, estimate: Pose2) -> Result<(), GraphError> {
        if !estimate.is_finite() {
            return Err(GraphError::NonFinite(id));
        }
        self.insert(Vertex::Pose {
            id,
            estimate,
            fixed: false,
        })
    }

    pub fn add_landmark(
        &mut self,
        id: VertexId,
        estimate: Point2,
        kind: LandmarkKind,
    ) -> Result<(), GraphError> {
        if !estimate.is_finite() {
            return Err(GraphError::NonFinite(id));
        }
        self.insert(Vertex::Landmark {
            id,
            estimate,
            kind,
            fixed: false,
        })
    }

    fn insert(&mut self, v: Vertex) -> Result<(), GraphError> {
        let id = v.id();
        if self.index.contains_key(&id) {
            return Err(GraphError::DuplicateVertex(id));
        }
        self.index.insert(id, self.vertices.len());
        self.vertices.push(v);
        Ok(())
    }

    pub fn set_fixed(&mut self, id: VertexId, fixed: bool) -> Result<(), GraphError> {
        let i = *self.index.get(&id).ok_or(GraphError::MissingVertex(id))?;
        self.vertices[i].set_fixed(fixed);
        Ok(())
    }

    /// Releases every fixed vertex, leaving the prior edges as the only
    /// connection to the map origin.
    pub fn unfix_all(&mut self) {
        for v in &mut self.vertices {
            v.set_fixed(false);
        }
    }

    pub fn add_edge(&mut self, edge: Edge) -> Result<(), GraphError> {
        match &edge {
            Edge::RelPose { from, to, meas, .. } => {
                self.expect_pose(*from)?;
                self.expect_pose(*to)?;
                if !meas.is_finite() {
                    return Err(GraphError::InvalidArgument("non-finite measurement".into()));
                }
            }
            Edge::LandmarkObs {
                pose,
                landmark,
                meas,
                ..
            } => {
                self.expect_pose(*pose)?;
                self.expect_landmark(*landmark)?;
                check_point(meas)?;
            }
            Edge::GpsPrior { pose, meas, .. } => {
                self.expect_pose(*pose)?;
                check_point(meas)?;
            }
            Edge::AnchorPrior { landmark, meas, .. } => {
                self.expect_landmark(*landmark)?;
                check_point(meas)?;
            }
        }
        self.edges.push(edge);
        Ok(())
    }

    fn expect_pose(&self, id: VertexId) -> Result<(), GraphError> {
        match self.vertex(id)? {
            Vertex::Pose { .. } => Ok(()),
            _ => Err(GraphError::WrongVertexType {
                id,
                expected: "pose",
            }),
        }
    }

    fn expect_landmark(&self, id: VertexId) -> Result<(), GraphError> {
        match self.vertex(id)? {
            Vertex::Landmark { .. } => Ok(()),
            _ => Err(GraphError::WrongVertexType {
                id,
                expected: "landmark",
            }),
        }
    }

    pub fn vertex(&self, id: VertexId) -> Result<&Vertex, GraphError> {
        self.index
            .get(&id)
            .map(|&i| &self.vertices[i])
            .ok_or(GraphError::MissingVertex(id))
    }

    pub fn contains(&self, id: VertexId) -> bool {
        self.index.contains_key(&id)
    }

    pub(crate) fn vertex_index(&self, id: VertexId) -> Result<usize, GraphError> {
        self.index
            .get(&id)
            .copied()
            .ok_or(GraphError::MissingVertex(id))
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub(crate) fn vertices_mut(&mut self) -> &mut [Vertex] {
        &mut self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn pose(&self, id: VertexId) -> Result<Pose2, GraphError> {
        match self.vertex(id)? {
            Vertex::Pose { estimate, .. } => Ok(*estimate),
            _ => Err(GraphError::WrongVertexType {
                id,
                expected: "pose",
            }),
        }
    }

    pub fn landmark(&self, id: VertexId) -> Result<Point2, GraphError> {
        match self.vertex(id)? {
            Vertex::Landmark { estimate, .. } => Ok(*estimate),
            _ => Err(GraphError::WrongVertexType {
                id,
                expected: "landmark",
            }),
        }
    }

    pub fn set_pose(&mut self, id: VertexId, p: Pose2) -> Result<(), GraphError> {
        let i = self.vertex_index(id)?;
        match &mut self.vertices[i] {
            Vertex::Pose { estimate, .. } => {
                *estimate = p;
                Ok(())
            }
            _ => Err(GraphError::WrongVertexType {
                id,
                expected: "pose",
            }),
        }
    }

    pub fn set_landmark(&mut self, id: VertexId, q: Point2) -> Result<(), GraphError> {
        let i = self.vertex_index(id)?;
        match &mut self.vertices[i] {
            Vertex::Landmark { estimate, .. } => {
                *estimate = q;
                Ok(())
            }
            _ => Err(GraphError::WrongVertexType {
                id,
                expected: "landmark",
            }),
        }
    }

    /// Pose vertices in insertion order.
    pub fn poses(&self) -> impl Iterator<Item = (VertexId, Pose2)> + '_ {
        self.vertices.iter().filter_map(|v| match v {
            Vertex::Pose { id, estimate, .. } => Some((*id, *estimate)),
            _ => None,
        })
    }

    /// Landmark vertices in insertion order.
    pub fn landmarks(&self) -> impl Iterator<Item = (VertexId, Point2)> + '_ {
        self.vertices.iter().filter_map(|v| match v {
            Vertex::Landmark { id, estimate, .. } => Some((*id, *estimate)),
            _ => None,
        })
    }

    /// Sum of `eᵀ Ω e` over all edges.
    pub fn chi2(&self) -> Result<f64, GraphError> {
        let mut total = 0.0;
        for e in &self.edges {
            total += residual(e, self)?.chi2();
        }
        Ok(total)
    }

    /// Applies `t ⊕ ·` to every pose and `t(·)` to every landmark.
    pub fn transform(&mut self, t: &Pose2) {
        for v in &mut self.vertices {
            match v {
                Vertex::Pose { estimate, .. } => *estimate = t.compose(estimate),
                Vertex::Landmark { estimate, .. } => *estimate = t.transform_point(estimate),
            }
        }
    }
}

fn check_point(p: &Point2) -> Result<(), GraphError> {
    if p.is_finite() {
        Ok(())
    } else {
        Err(GraphError::InvalidArgument("non-finite measurement".into()))
    }
}

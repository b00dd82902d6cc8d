//! Edge residuals and their analytic Jacobians.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};

use super::{Edge, GraphError, PoseGraph, Vertex, VertexId};
use crate::geometry::{Point2, Pose2};

/// Error vector of one edge together with its information matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Residual {
    Se2 { error: Vector3<f64>, info: Matrix3<f64> },
    Xy { error: Vector2<f64>, info: Matrix2<f64> },
}

impl Residual {
    pub fn error(&self) -> DVector<f64> {
        match self {
            Residual::Se2 { error, .. } => DVector::from_column_slice(error.as_slice()),
            Residual::Xy { error, .. } => DVector::from_column_slice(error.as_slice()),
        }
    }

    pub fn chi2(&self) -> f64 {
        match self {
            Residual::Se2 { error, info } => (error.transpose() * info * error)[0],
            Residual::Xy { error, info } => (error.transpose() * info * error)[0],
        }
    }
}

/// Jacobian blocks of one edge, one per incident vertex, in the order of
/// [`Edge::vertices`]. Block shape is residual dim × vertex dim.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub blocks: Vec<(VertexId, DMatrix<f64>)>,
}

/// Uniform 3-row / 3-column padded form used by the optimizer. Unused rows
/// and columns are zero.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Linearized {
    pub error: Vector3<f64>,
    pub info: Matrix3<f64>,
    pub vertices: [usize; 2],
    pub jacobians: [Matrix3<f64>; 2],
    pub arity: usize,
}

fn pose_at(graph: &PoseGraph, index: usize) -> Result<Pose2, GraphError> {
    match &graph.vertices()[index] {
        Vertex::Pose { estimate, .. } => Ok(*estimate),
        v => Err(GraphError::WrongVertexType {
            id: v.id(),
            expected: "pose",
        }),
    }
}

fn landmark_at(graph: &PoseGraph, index: usize) -> Result<Point2, GraphError> {
    match &graph.vertices()[index] {
        Vertex::Landmark { estimate, .. } => Ok(*estimate),
        v => Err(GraphError::WrongVertexType {
            id: v.id(),
            expected: "landmark",
        }),
    }
}

/// Derivative of `R(θ)ᵀ` with respect to θ.
fn d_rot_t(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(-s, c, -c, -s)
}

fn rot_t(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, s, -s, c)
}

fn pad2(m: &Matrix2<f64>) -> Matrix3<f64> {
    let mut out = Matrix3::zeros();
    out.fixed_view_mut::<2, 2>(0, 0).copy_from(m);
    out
}

pub(crate) fn linearize_padded(
    edge: &Edge,
    graph: &PoseGraph,
    with_jacobians: bool,
) -> Result<Linearized, GraphError> {
    match edge {
        Edge::RelPose {
            from,
            to,
            meas,
            info,
        } => {
            let (fi, ti) = (graph.vertex_index(*from)?, graph.vertex_index(*to)?);
            let (xi, xj) = (pose_at(graph, fi)?, pose_at(graph, ti)?);
            let err = meas.inverse().compose(&xi.between(&xj));
            let error = Vector3::new(err.x, err.y, err.theta());
            let mut jacobians = [Matrix3::zeros(); 2];
            if with_jacobians {
                // e_t = Rmᵀ Riᵀ (tj - ti) - Rmᵀ mt, e_θ = θj - θi - θm
                let rm_t = rot_t(meas.theta());
                let ri_t = rot_t(xi.theta());
                let dt = Vector2::new(xj.x - xi.x, xj.y - xi.y);
                let a = rm_t * ri_t;
                let mut ji = Matrix3::zeros();
                ji.fixed_view_mut::<2, 2>(0, 0).copy_from(&(-a));
                ji.fixed_view_mut::<2, 1>(0, 2)
                    .copy_from(&(rm_t * d_rot_t(xi.theta()) * dt));
                ji[(2, 2)] = -1.0;
                let mut jj = Matrix3::zeros();
                jj.fixed_view_mut::<2, 2>(0, 0).copy_from(&a);
                jj[(2, 2)] = 1.0;
                jacobians = [ji, jj];
            }
            Ok(Linearized {
                error,
                info: *info.matrix(),
                vertices: [fi, ti],
                jacobians,
                arity: 2,
            })
        }
        Edge::LandmarkObs {
            pose,
            landmark,
            meas,
            info,
        } => {
            let (pi, li) = (graph.vertex_index(*pose)?, graph.vertex_index(*landmark)?);
            let (x, l) = (pose_at(graph, pi)?, landmark_at(graph, li)?);
            let local = x.inverse_transform_point(&l);
            let error = Vector3::new(local.x - meas.x, local.y - meas.y, 0.0);
            let mut jacobians = [Matrix3::zeros(); 2];
            if with_jacobians {
                let r_t = rot_t(x.theta());
                let d = Vector2::new(l.x - x.x, l.y - x.y);
                let mut jp = pad2(&(-r_t));
                jp.fixed_view_mut::<2, 1>(0, 2)
                    .copy_from(&(d_rot_t(x.theta()) * d));
                jacobians = [jp, pad2(&r_t)];
            }
            Ok(Linearized {
                error,
                info: pad2(info.matrix()),
                vertices: [pi, li],
                jacobians,
                arity: 2,
            })
        }
        Edge::GpsPrior { pose, meas, info } => {
            let pi = graph.vertex_index(*pose)?;
            let x = pose_at(graph, pi)?;
            Ok(Linearized {
                error: Vector3::new(x.x - meas.x, x.y - meas.y, 0.0),
                info: pad2(info.matrix()),
                vertices: [pi, pi],
                jacobians: [pad2(&Matrix2::identity()), Matrix3::zeros()],
                arity: 1,
            })
        }
        Edge::AnchorPrior {
            landmark,
            meas,
            info,
        } => {
            let li = graph.vertex_index(*landmark)?;
            let l = landmark_at(graph, li)?;
            Ok(Linearized {
                error: Vector3::new(l.x - meas.x, l.y - meas.y, 0.0),
                info: pad2(info.matrix()),
                vertices: [li, li],
                jacobians: [pad2(&Matrix2::identity()), Matrix3::zeros()],
                arity: 1,
            })
        }
    }
}

/// Residual of an edge at the graph's current estimates.
///
/// `RelPose` yields `(dx, dy, dθ)` of `meas⁻¹ ⊕ (x_from⁻¹ ⊕ x_to)`,
/// `LandmarkObs` the landmark in the pose frame minus the measurement, and
/// the two priors `estimate − meas`.
pub fn residual(edge: &Edge, graph: &PoseGraph) -> Result<Residual, GraphError> {
    let lin = linearize_padded(edge, graph, false)?;
    Ok(match edge {
        Edge::RelPose { info, .. } => Residual::Se2 {
            error: lin.error,
            info: *info.matrix(),
        },
        Edge::LandmarkObs { info, .. }
        | Edge::GpsPrior { info, .. }
        | Edge::AnchorPrior { info, .. } => Residual::Xy {
            error: Vector2::new(lin.error.x, lin.error.y),
            info: *info.matrix(),
        },
    })
}

/// Analytic Jacobians of [`residual`] with respect to each incident vertex's
/// `(x, y, θ)` or `(x, y)` parameters.
pub fn linearize(edge: &Edge, graph: &PoseGraph) -> Result<Jacobian, GraphError> {
    let lin = linearize_padded(edge, graph, true)?;
    let rows = if matches!(edge, Edge::RelPose { .. }) { 3 } else { 2 };
    let blocks = edge
        .vertices()
        .into_iter()
        .enumerate()
        .map(|(k, id)| {
            let cols = graph.vertices()[lin.vertices[k]].dim();
            let j = &lin.jacobians[k];
            (id, DMatrix::from_fn(rows, cols, |r, c| j[(r, c)]))
        })
        .collect();
    Ok(Jacobian { blocks })
}

//! Levenberg-Marquardt over additive `(x, y, θ)` / `(x, y)` parameters.

use nalgebra::{Matrix3, Vector3};

use super::residual::{linearize_padded, Linearized};
use super::sparse::{BlockMatrix, Symbolic};
use super::{Edge, GraphError, PoseGraph, Vertex};
use crate::geometry::{Point2, Pose2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeConfig {
    pub max_iter: usize,
    /// Stop once an accepted step decreases chi² by less than this fraction.
    pub chi2_rel_tol: f64,
    pub lm_initial_lambda: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            chi2_rel_tol: 1e-9,
            lm_initial_lambda: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Tolerance,
    MaxIter,
    LmStall,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeReport {
    pub iterations: usize,
    pub initial_chi2: f64,
    pub final_chi2: f64,
    pub converged: bool,
    pub termination: Termination,
}

const LAMBDA_MAX: f64 = 1e12;
const LAMBDA_MIN: f64 = 1e-12;

/// Checks that every connected component touches a fixed vertex or a prior.
fn check_gauge(graph: &PoseGraph) -> Result<(), GraphError> {
    let n = graph.vertices().len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut anchored = vec![false; n];
    for (i, v) in graph.vertices().iter().enumerate() {
        anchored[i] = v.is_fixed();
    }
    for e in graph.edges() {
        let ids = e.vertices();
        let a = graph.vertex_index(ids[0])?;
        if e.is_prior() {
            anchored[a] = true;
        } else {
            let b = graph.vertex_index(ids[1])?;
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
    }
    let mut root_anchored = vec![false; n];
    for (i, _) in anchored.iter().enumerate().filter(|(_, a)| **a) {
        let r = find(&mut parent, i);
        root_anchored[r] = true;
    }
    for i in 0..n {
        let r = find(&mut parent, i);
        if !root_anchored[r] {
            return Err(GraphError::Underconstrained(graph.vertices()[i].id()));
        }
    }
    Ok(())
}

/// Maps vertex index → free-block index.
fn free_blocks(graph: &PoseGraph) -> (Vec<Option<usize>>, Vec<usize>) {
    let mut block_of = vec![None; graph.vertices().len()];
    let mut vertex_of = Vec::new();
    for (i, v) in graph.vertices().iter().enumerate() {
        if !v.is_fixed() {
            block_of[i] = Some(vertex_of.len());
            vertex_of.push(i);
        }
    }
    (block_of, vertex_of)
}

fn linearize_all(graph: &PoseGraph, out: &mut Vec<Linearized>) -> Result<f64, GraphError> {
    out.clear();
    let mut chi2 = 0.0;
    for e in graph.edges() {
        let lin = linearize_padded(e, graph, true)?;
        chi2 += lin.error.dot(&(lin.info * lin.error));
        out.push(lin);
    }
    Ok(chi2)
}

fn apply_step(graph: &mut PoseGraph, vertex_of: &[usize], step: &[Vector3<f64>]) {
    let vertices = graph.vertices_mut();
    for (b, &vi) in vertex_of.iter().enumerate() {
        let d = &step[b];
        match &mut vertices[vi] {
            Vertex::Pose { estimate, .. } => {
                *estimate = Pose2::new(
                    estimate.x + d.x,
                    estimate.y + d.y,
                    estimate.theta() + d.z,
                );
            }
            Vertex::Landmark { estimate, .. } => {
                *estimate = Point2::new(estimate.x + d.x, estimate.y + d.y);
            }
        }
    }
}

/// Minimizes total chi² of the graph in place.
///
/// Fails before iterating when some vertex has no path to a fixed vertex or
/// a prior edge. Deterministic for identical inputs.
pub fn optimize(
    graph: &mut PoseGraph,
    config: &OptimizeConfig,
) -> Result<OptimizeReport, GraphError> {
    if !(config.chi2_rel_tol >= 0.0) {
        return Err(GraphError::InvalidArgument("chi2_rel_tol must be >= 0".into()));
    }
    if !(config.lm_initial_lambda > 0.0) {
        return Err(GraphError::InvalidArgument(
            "lm_initial_lambda must be > 0".into(),
        ));
    }
    check_gauge(graph)?;

    let (block_of, vertex_of) = free_blocks(graph);
    let mut lins = Vec::with_capacity(graph.edges().len());
    let initial_chi2 = linearize_all(graph, &mut lins)?;
    let mut report = OptimizeReport {
        iterations: 0,
        initial_chi2,
        final_chi2: initial_chi2,
        converged: true,
        termination: Termination::Tolerance,
    };
    if vertex_of.is_empty() || initial_chi2 == 0.0 {
        return Ok(report);
    }

    let symbolic = Symbolic::analyze(
        vertex_of.len(),
        graph.edges().iter().filter_map(|e| match e {
            Edge::RelPose { .. } | Edge::LandmarkObs { .. } => {
                let ids = e.vertices();
                let a = block_of[graph.vertex_index(ids[0]).ok()?]?;
                let b = block_of[graph.vertex_index(ids[1]).ok()?]?;
                Some((a, b))
            }
            _ => None,
        }),
    );

    let mut chi2 = initial_chi2;
    let mut lambda = config.lm_initial_lambda;
    let mut backup = graph.vertices().to_vec();
    let mut trial_lins = Vec::with_capacity(lins.len());

    for iter in 0..config.max_iter {
        report.iterations = iter + 1;

        // normal equations H δ = -g, with H = Σ JᵀΩJ and g = Σ JᵀΩe
        let mut hessian = BlockMatrix::zeros(&symbolic);
        let mut gradient = vec![Vector3::zeros(); vertex_of.len()];
        for (b, &vi) in vertex_of.iter().enumerate() {
            if graph.vertices()[vi].dim() == 2 {
                let mut pad = Matrix3::zeros();
                pad[(2, 2)] = 1.0;
                hessian.add_diag(b, &pad);
            }
        }
        for lin in &lins {
            let weighted = lin.info * lin.error;
            let blocks: Vec<Option<usize>> = (0..lin.arity)
                .map(|a| block_of[lin.vertices[a]])
                .collect();
            for (a, block) in blocks.iter().enumerate() {
                if let Some(ba) = *block {
                    let ja = &lin.jacobians[a];
                    gradient[ba] += ja.transpose() * weighted;
                    hessian.add_block(ba, ba, &(ja.transpose() * lin.info * ja));
                }
            }
            if let [Some(ba), Some(bb)] = blocks[..] {
                let cross = lin.jacobians[0].transpose() * lin.info * lin.jacobians[1];
                if ba == bb {
                    hessian.add_block(ba, ba, &(cross + cross.transpose()));
                } else {
                    hessian.add_block(ba, bb, &cross);
                }
            }
        }
        let rhs: Vec<Vector3<f64>> = gradient.iter().map(|g| -g).collect();

        let mut accepted = false;
        loop {
            let factor = match hessian.factor(lambda) {
                Ok(f) => f,
                Err(e) => {
                    lambda *= 10.0;
                    if lambda > LAMBDA_MAX {
                        return Err(GraphError::NotPositiveDefinite {
                            vertex: graph.vertices()[vertex_of[e.0]].id(),
                            lambda,
                        });
                    }
                    continue;
                }
            };
            let step = factor.solve(&rhs);
            backup.clone_from_slice(graph.vertices());
            apply_step(graph, &vertex_of, &step);
            let new_chi2 = linearize_all(graph, &mut trial_lins)?;
            if new_chi2 < chi2 {
                let decrease = chi2 - new_chi2;
                let previous = chi2;
                chi2 = new_chi2;
                std::mem::swap(&mut lins, &mut trial_lins);
                lambda = (lambda / 10.0).max(LAMBDA_MIN);
                accepted = true;
                if decrease <= config.chi2_rel_tol * previous || new_chi2 == 0.0 {
                    report.final_chi2 = chi2;
                    report.termination = Termination::Tolerance;
                    report.converged = true;
                    return Ok(report);
                }
                break;
            }
            graph.vertices_mut().clone_from_slice(&backup);
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                break;
            }
        }
        report.final_chi2 = chi2;
        if !accepted {
            report.termination = Termination::LmStall;
            report.converged = true;
            return Ok(report);
        }
    }
    report.final_chi2 = chi2;
    report.termination = Termination::MaxIter;
    report.converged = false;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Info2, Info3, LandmarkKind, VertexId};

    fn info3() -> Info3 {
        Info3::from_sigmas([0.1, 0.1, 0.01]).unwrap()
    }

    #[test]
    fn chain_has_exact_solution() {
        let mut g = PoseGraph::new();
        g.add_pose(VertexId(0), Pose2::new(1.0, 2.0, 0.5)).unwrap();
        g.add_pose(VertexId(1), Pose2::new(0.0, 0.0, 0.0)).unwrap();
        g.set_fixed(VertexId(0), true).unwrap();
        let m = Pose2::new(3.0, -1.0, 1.2);
        g.add_edge(Edge::RelPose {
            from: VertexId(0),
            to: VertexId(1),
            meas: m,
            info: info3(),
        })
        .unwrap();
        let r = optimize(&mut g, &OptimizeConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.final_chi2 < 1e-20, "{r:?}");
        let expect = Pose2::new(1.0, 2.0, 0.5).compose(&m);
        let got = g.pose(VertexId(1)).unwrap();
        assert!((got.x - expect.x).abs() < 1e-10 && (got.y - expect.y).abs() < 1e-10);
        assert!((got.theta() - expect.theta()).abs() < 1e-10);
    }

    #[test]
    fn symmetric_gps_priors_average() {
        let mut g = PoseGraph::new();
        g.add_pose(VertexId(0), Pose2::identity()).unwrap();
        g.set_fixed(VertexId(0), true).unwrap();
        g.add_pose(VertexId(1), Pose2::new(5.0, -3.0, 0.2)).unwrap();
        let info = Info2::isotropic(5.0).unwrap();
        for x in [0.0, 2.0] {
            g.add_edge(Edge::GpsPrior {
                pose: VertexId(1),
                meas: Point2::new(x, 0.0),
                info,
            })
            .unwrap();
        }
        optimize(&mut g, &OptimizeConfig::default()).unwrap();
        let p = g.pose(VertexId(1)).unwrap();
        assert!((p.x - 1.0).abs() < 1e-9 && p.y.abs() < 1e-9);
    }

    #[test]
    fn rejects_unconstrained_gauge() {
        let mut g = PoseGraph::new();
        g.add_pose(VertexId(0), Pose2::identity()).unwrap();
        g.add_pose(VertexId(1), Pose2::new(1.0, 0.0, 0.0)).unwrap();
        g.add_edge(Edge::RelPose {
            from: VertexId(0),
            to: VertexId(1),
            meas: Pose2::new(1.0, 0.0, 0.0),
            info: info3(),
        })
        .unwrap();
        assert!(matches!(
            optimize(&mut g, &OptimizeConfig::default()),
            Err(GraphError::Underconstrained(_))
        ));
        // a second, disconnected component without constraints is also rejected
        g.set_fixed(VertexId(0), true).unwrap();
        g.add_landmark(VertexId(7), Point2::new(1.0, 1.0), LandmarkKind::Pole)
            .unwrap();
        assert_eq!(
            optimize(&mut g, &OptimizeConfig::default()),
            Err(GraphError::Underconstrained(VertexId(7)))
        );
    }

    #[test]
    fn landmark_triangulation_converges() {
        let truth = Point2::new(4.0, 3.0);
        let mut g = PoseGraph::new();
        let poses = [Pose2::identity(), Pose2::new(2.0, 0.0, 0.3), Pose2::new(4.0, -1.0, 1.0)];
        for (i, p) in poses.iter().enumerate() {
            g.add_pose(VertexId(i as u64), Pose2::new(p.x + 0.3, p.y - 0.2, p.theta() + 0.05))
                .unwrap();
        }
        g.set_pose(VertexId(0), poses[0]).unwrap();
        g.set_fixed(VertexId(0), true).unwrap();
        g.add_landmark(VertexId(10), Point2::new(3.0, 5.0), LandmarkKind::Pole)
            .unwrap();
        for i in 1..poses.len() {
            g.add_edge(Edge::RelPose {
                from: VertexId(i as u64 - 1),
                to: VertexId(i as u64),
                meas: poses[i - 1].between(&poses[i]),
                info: info3(),
            })
            .unwrap();
        }
        for (i, p) in poses.iter().enumerate() {
            g.add_edge(Edge::LandmarkObs {
                pose: VertexId(i as u64),
                landmark: VertexId(10),
                meas: p.inverse_transform_point(&truth),
                info: Info2::isotropic(0.05).unwrap(),
            })
            .unwrap();
        }
        let r = optimize(&mut g, &OptimizeConfig::default()).unwrap();
        assert!(r.final_chi2 < 1e-12, "{r:?}");
        assert!(g.landmark(VertexId(10)).unwrap().distance(&truth) < 1e-6);
    }
}

//! Synthetic worlds with ground truth for every pipeline stage.
//!
//! Each random quantity comes from its own ChaCha8 stream of the seeded
//! generator, so changing one noise scale never reorders another's draws:
//!
//! | stream | draws, in order |
//! |---|---|
//! | 0 poles | per road segment, per pole: along-track jitter, lateral jitter |
//! | 1 odometry | per sample: speed noise, yaw-rate noise |
//! | 2 GPS white | per fix: easting, northing |
//! | 3 GPS bias | per fix after the first: easting step, northing step |
//! | 4 GPS outliers | per fix: uniform; if outlier, radius uniform, angle uniform |
//! | 5 tiles | row-major over the tile grid: magnitude, direction |
//! | 6 labels | one index sample over the visible poles |
//! | 7 observations | per keyframe, per pole in range: x noise, y noise |
//! | 8 loop closures | per closure edge: x, y, heading noise |
//!
//! Normal draws are standard normal scaled by the configured sigma, so a
//! zero sigma consumes the same draws as a non-zero one.

mod config;
mod path;

pub use config::{AerialConfig, GpsConfig, ObservationConfig, OdomNoise, PathSpec, Preset, SimConfig};

use nalgebra::{Matrix2x3, Matrix3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::align::{fit_se2, AlignError, Correspondence, CorrespondenceSet};
use crate::config::ConfigError;
use crate::filter::{motion_model, GpsFix, OdomSample};
use crate::geometry::{normalize_angle, MapOrigin, Point2, Pose2};
use crate::graph::{Edge, GraphError, Info2, Info3, LandmarkKind, PoseGraph, VertexId};

/// Landmark ids are `LANDMARK_ID_BASE * (session + 1) + pole id`.
pub const LANDMARK_ID_BASE: u64 = 1_000_000;

const REL_POSE_COV_FLOOR: [f64; 3] = [1e-4, 1e-4, 1e-6];
const OBS_SIGMA_FLOOR: f64 = 0.01;
const LOOP_CLOSURE_RADIUS: f64 = 5.0;
const LOOP_CLOSURE_STRIDE: usize = 5;
const MIN_POLE_SPACING: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("path has fewer than two waypoints")]
    EmptyPath,
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error("pose count mismatch: graph has {graph}, truth has {truth}")]
    CountMismatch { graph: usize, truth: usize },
}

/// Axis-aligned UTM grid of constant per-tile label offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct TileGrid {
    pub tile_size: f64,
    pub i0: i64,
    pub j0: i64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `j` outer.
    pub biases: Vec<Point2>,
}

impl TileGrid {
    pub fn tile_of(&self, utm: &Point2) -> (i64, i64) {
        (
            (utm.x / self.tile_size).floor() as i64,
            (utm.y / self.tile_size).floor() as i64,
        )
    }

    pub fn bias(&self, tile: (i64, i64)) -> Option<Point2> {
        let (i, j) = (tile.0 - self.i0, tile.1 - self.j0);
        if i < 0 || j < 0 || i as usize >= self.nx || j as usize >= self.ny {
            return None;
        }
        Some(self.biases[j as usize * self.nx + i as usize])
    }

    /// UTM corners `(min, max)` of a tile.
    pub fn bounds(&self, tile: (i64, i64)) -> (Point2, Point2) {
        let s = self.tile_size;
        (
            Point2::new(tile.0 as f64 * s, tile.1 as f64 * s),
            Point2::new((tile.0 + 1) as f64 * s, (tile.1 + 1) as f64 * s),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimWorld {
    pub origin: MapOrigin,
    /// Map-frame truth at every odometry timestamp.
    pub truth_path: Vec<(f64, Pose2)>,
    pub keyframe_every: usize,
    /// Pole positions in UTM.
    pub poles: Vec<(u32, Point2)>,
    pub tiles: TileGrid,
    /// Aerial labels in UTM, sorted by pole id.
    pub labels: Vec<(u32, Point2)>,
    /// Pole behind each landmark vertex.
    pub landmark_poles: Vec<(VertexId, u32)>,
    /// Whether each GPS fix was replaced by an outlier.
    pub gps_outliers: Vec<bool>,
}

impl SimWorld {
    /// Map-frame truth of every pose vertex.
    pub fn keyframe_truth(&self) -> Vec<(VertexId, Pose2)> {
        self.truth_path
            .iter()
            .step_by(self.keyframe_every)
            .enumerate()
            .map(|(i, (_, p))| (VertexId(i as u64), *p))
            .collect()
    }

    pub fn keyframe_times(&self) -> Vec<(VertexId, f64)> {
        self.truth_path
            .iter()
            .step_by(self.keyframe_every)
            .enumerate()
            .map(|(i, (t, _))| (VertexId(i as u64), *t))
            .collect()
    }

    pub fn pole(&self, id: u32) -> Option<Point2> {
        self.poles.iter().find(|(p, _)| *p == id).map(|(_, q)| *q)
    }

    /// Map-frame truth of every landmark vertex.
    pub fn landmark_truth(&self) -> Vec<(VertexId, Point2)> {
        self.landmark_poles
            .iter()
            .map(|(v, p)| {
                let utm = self.pole(*p).expect("landmark refers to a generated pole");
                (*v, self.origin.utm_to_map(&utm))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub pose: VertexId,
    pub pole: u32,
    pub landmark: VertexId,
    /// Sensor-frame position.
    pub z: Point2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub world: SimWorld,
    pub odom: Vec<OdomSample>,
    /// UTM fixes.
    pub gps: Vec<GpsFix>,
    pub observations: Vec<Observation>,
    /// Local map from odometry and observations only; pose 0 fixed at
    /// the identity.
    pub initial_graph: PoseGraph,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

/// Gaussian random walk: `b₀ = 0`, each step adds `N(0, σ²·dt)` per axis.
pub fn bias_walk(r: &mut impl Rng, steps: usize, dt: f64, sigma: f64) -> Vec<Point2> {
    let scale = sigma * dt.sqrt();
    let mut b = Point2::new(0.0, 0.0);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(b);
    for _ in 0..steps {
        let ex: f64 = r.sample(StandardNormal);
        let ey: f64 = r.sample(StandardNormal);
        b = b + Point2::new(ex, ey) * scale;
        out.push(b);
    }
    out
}

fn place_poles(config: &SimConfig, waypoints: &[Point2]) -> Vec<Point2> {
    let mut r = rng(config.seed, 0);
    let mut poles: Vec<Point2> = Vec::new();
    let mut seen: Vec<(Point2, Point2)> = Vec::new();
    for w in waypoints.windows(2) {
        let (a, b) = (w[0], w[1]);
        let duplicate = seen.iter().any(|(p, q)| {
            (p.distance(&a) < 1e-6 && q.distance(&b) < 1e-6) || (p.distance(&b) < 1e-6 && q.distance(&a) < 1e-6)
        });
        if duplicate {
            continue;
        }
        seen.push((a, b));
        let len = a.distance(&b);
        let dir = (b - a) * (1.0 / len);
        let normal_dir = Point2::new(-dir.y, dir.x);
        let count = (len * config.pole_density / 100.0).round() as usize;
        for i in 0..count {
            let along_jitter: f64 = r.random_range(-1.0..1.0);
            let lateral_jitter: f64 = r.random_range(-0.5..0.5);
            let s = (i as f64 + 0.5) * len / count as f64 + along_jitter;
            let side = if i % 2 == 0 { 1.0 } else { -1.0 };
            let p = a + dir * s + normal_dir * (side * config.pole_offset + lateral_jitter);
            if poles.iter().all(|q| q.distance(&p) >= MIN_POLE_SPACING) {
                poles.push(p);
            }
        }
    }
    poles
}

fn relative_information(
    samples: &[OdomSample],
    dt: f64,
    noise: &OdomNoise,
) -> Result<Info3, GraphError> {
    let mut rel = nalgebra::Vector3::<f64>::zeros();
    let mut cov = Matrix3::<f64>::zeros();
    let q = nalgebra::Matrix2::new(noise.sigma_v.powi(2), 0.0, 0.0, noise.sigma_omega.powi(2));
    for s in samples {
        let heading = rel.z + s.omega * dt / 2.0;
        let (sn, cs) = heading.sin_cos();
        let f = Matrix3::new(1.0, 0.0, -s.v * dt * sn, 0.0, 1.0, s.v * dt * cs, 0.0, 0.0, 1.0);
        let g = Matrix2x3::new(dt * cs, dt * sn, 0.0, -s.v * dt * dt * sn / 2.0, s.v * dt * dt * cs / 2.0, dt)
            .transpose();
        cov = f * cov * f.transpose() + g * q * g.transpose();
        rel = motion_model(&rel, s.v, s.omega, dt);
    }
    let floor = Matrix3::from_diagonal(&nalgebra::Vector3::from(REL_POSE_COV_FLOOR));
    let info = (cov + floor)
        .try_inverse()
        .ok_or_else(|| GraphError::InvalidInformation("singular odometry covariance".into()))?;
    Info3::new((info + info.transpose()) * 0.5)
}

fn in_windows(t: f64, windows: &[(f64, f64)]) -> bool {
    windows.iter().any(|&(a, b)| t >= a && t <= b)
}

/// Generates a world and its sensor streams.
pub fn generate(config: &SimConfig) -> Result<SimOutput, SimError> {
    config.validate()?;
    let waypoints = config.waypoints();
    let sched = path::schedule(&waypoints, config.speed, config.turn_radius)?;
    let rate = config.odom_rate_hz;
    let dt = 1.0 / rate;
    let n_samples = (sched.duration() * rate).floor() as usize + 1;
    let times: Vec<f64> = (0..n_samples).map(|k| k as f64 / rate).collect();

    // truth from the commanded twist, under the same hold as the filter
    let twist: Vec<(f64, f64)> = times.iter().map(|&t| (config.speed, sched.omega_at(t))).collect();
    let mut truth_path = Vec::with_capacity(n_samples);
    let mut x = nalgebra::Vector3::new(sched.start.x, sched.start.y, sched.start.theta());
    for k in 0..n_samples {
        truth_path.push((times[k], Pose2::new(x.x, x.y, x.z)));
        if k + 1 < n_samples {
            x = motion_model(&x, twist[k].0, twist[k].1, times[k + 1] - times[k]);
            x.z = normalize_angle(x.z);
        }
    }

    let poles_map = place_poles(config, &waypoints);

    let mut r_odom = rng(config.seed, 1);
    let odom: Vec<OdomSample> = (0..n_samples)
        .map(|k| {
            let nv = normal(&mut r_odom);
            let nw = normal(&mut r_odom);
            OdomSample {
                t: times[k],
                v: twist[k].0 + config.odom_noise.sigma_v * nv,
                omega: twist[k].1 + config.odom_noise.sigma_omega * nw,
            }
        })
        .collect();

    // dead reckoning in the local frame, pose 0 at the identity
    let mut local = Vec::with_capacity(n_samples);
    let mut xl = nalgebra::Vector3::<f64>::zeros();
    for k in 0..n_samples {
        local.push(Pose2::new(xl.x, xl.y, xl.z));
        if k + 1 < n_samples {
            xl = motion_model(&xl, odom[k].v, odom[k].omega, times[k + 1] - times[k]);
            xl.z = normalize_angle(xl.z);
        }
    }

    let ke = config.keyframe_every;
    let keyframes: Vec<usize> = (0..n_samples).step_by(ke).collect();
    let mut graph = PoseGraph::new();
    for (i, &k) in keyframes.iter().enumerate() {
        graph.add_pose(VertexId(i as u64), local[k])?;
    }
    graph.set_fixed(VertexId(0), true)?;
    for (i, w) in keyframes.windows(2).enumerate() {
        let info = relative_information(&odom[w[0]..w[1]], dt, &config.odom_noise)?;
        graph.add_edge(Edge::RelPose {
            from: VertexId(i as u64),
            to: VertexId(i as u64 + 1),
            meas: local[w[0]].between(&local[w[1]]),
            info,
        })?;
    }

    // landmark observations, with per-session association when loop
    // closures are disabled
    let mut r_obs = rng(config.seed, 7);
    let obs_info = Info2::isotropic(config.landmark_obs.sigma.max(OBS_SIGMA_FLOOR))?;
    let mut observations = Vec::new();
    let mut sessions: Vec<Option<(VertexId, usize)>> = vec![None; poles_map.len()];
    let mut session_count = vec![0u64; poles_map.len()];
    let mut landmark_poles = Vec::new();
    for (i, &k) in keyframes.iter().enumerate() {
        let pose = truth_path[k].1;
        for (p, pole) in poles_map.iter().enumerate() {
            if pose.translation().distance(pole) > config.landmark_obs.max_range {
                continue;
            }
            let nx = normal(&mut r_obs);
            let ny = normal(&mut r_obs);
            let z = pose.inverse_transform_point(pole) + Point2::new(nx, ny) * config.landmark_obs.sigma;
            let landmark = match sessions[p] {
                Some((id, last)) if config.loop_closures || i - last <= config.revisit_gap => id,
                _ => {
                    let id = VertexId(LANDMARK_ID_BASE * (session_count[p] + 1) + p as u64);
                    session_count[p] += 1;
                    graph.add_landmark(id, local[k].transform_point(&z), LandmarkKind::Pole)?;
                    landmark_poles.push((id, p as u32));
                    id
                }
            };
            sessions[p] = Some((landmark, i));
            graph.add_edge(Edge::LandmarkObs {
                pose: VertexId(i as u64),
                landmark,
                meas: z,
                info: obs_info,
            })?;
            observations.push(Observation {
                pose: VertexId(i as u64),
                pole: p as u32,
                landmark,
                z,
            });
        }
    }

    if config.loop_closures {
        let mut r_lc = rng(config.seed, 8);
        let sigma_xy = config.landmark_obs.sigma;
        let sigma_th = config.landmark_obs.sigma / 10.0;
        let info = Info3::from_sigmas([
            sigma_xy.max(OBS_SIGMA_FLOOR),
            sigma_xy.max(OBS_SIGMA_FLOOR),
            sigma_th.max(OBS_SIGMA_FLOOR / 10.0),
        ])?;
        for (j, &kj) in keyframes.iter().enumerate().step_by(LOOP_CLOSURE_STRIDE) {
            if j < config.revisit_gap {
                continue;
            }
            let pj = truth_path[kj].1;
            let best = keyframes[..=j - config.revisit_gap]
                .iter()
                .enumerate()
                .map(|(i, &ki)| (i, truth_path[ki].1.translation().distance(&pj.translation())))
                .filter(|&(_, d)| d < LOOP_CLOSURE_RADIUS)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((i, _)) = best {
                let rel = truth_path[keyframes[i]].1.between(&pj);
                let (ex, ey, et) = (normal(&mut r_lc), normal(&mut r_lc), normal(&mut r_lc));
                graph.add_edge(Edge::RelPose {
                    from: VertexId(i as u64),
                    to: VertexId(j as u64),
                    meas: Pose2::new(rel.x + sigma_xy * ex, rel.y + sigma_xy * ey, rel.theta() + sigma_th * et),
                    info,
                })?;
            }
        }
    }

    // GPS in UTM
    let origin = &config.origin;
    let gps_every = (config.odom_rate_hz / config.gps.rate_hz).round() as usize;
    let gps_samples: Vec<usize> = (0..n_samples).step_by(gps_every).collect();
    let gps_dt = 1.0 / config.gps.rate_hz;
    let bias = bias_walk(&mut rng(config.seed, 3), gps_samples.len().saturating_sub(1), gps_dt, config.gps.bias_walk_sigma);
    let mut r_white = rng(config.seed, 2);
    let mut r_out = rng(config.seed, 4);
    let mut gps = Vec::with_capacity(gps_samples.len());
    let mut gps_outliers = Vec::with_capacity(gps_samples.len());
    for (j, &k) in gps_samples.iter().enumerate() {
        let (t, pose) = truth_path[k];
        let truth = origin.map_to_utm(&pose.translation());
        let white = Point2::new(normal(&mut r_white), normal(&mut r_white)) * config.gps.sigma;
        let u: f64 = r_out.random();
        let outlier = in_windows(t, &config.gps.outage_windows) || u < config.gps.outlier_rate;
        let p = if outlier {
            let radius = config.gps.outlier_magnitude * r_out.random::<f64>().sqrt();
            let angle = r_out.random_range(0.0..std::f64::consts::TAU);
            truth + Point2::new(angle.cos(), angle.sin()) * radius
        } else {
            truth + white + bias[j]
        };
        gps.push(GpsFix {
            t,
            easting: p.x,
            northing: p.y,
            nominal_sigma: config.gps.sigma,
        });
        gps_outliers.push(outlier);
    }

    // aerial tiles and labels
    let poles_utm: Vec<Point2> = poles_map.iter().map(|p| origin.map_to_utm(p)).collect();
    let tiles = tile_grid(config, &poles_utm);
    let visible: Vec<usize> = (0..poles_map.len()).filter(|&p| sessions[p].is_some()).collect();
    let n_labels = (config.aerial.label_fraction * visible.len() as f64).round() as usize;
    let mut chosen: Vec<usize> = sample(&mut rng(config.seed, 6), visible.len(), n_labels)
        .into_iter()
        .map(|i| visible[i])
        .collect();
    chosen.sort_unstable();
    let labels = chosen
        .iter()
        .map(|&p| {
            let b = tiles
                .bias(tiles.tile_of(&poles_utm[p]))
                .expect("tile grid covers every pole");
            (p as u32, poles_utm[p] + b)
        })
        .collect();

    Ok(SimOutput {
        world: SimWorld {
            origin: origin.clone(),
            truth_path,
            keyframe_every: ke,
            poles: poles_utm.iter().enumerate().map(|(i, p)| (i as u32, *p)).collect(),
            tiles,
            labels,
            landmark_poles,
            gps_outliers,
        },
        odom,
        gps,
        observations,
        initial_graph: graph,
    })
}

fn tile_grid(config: &SimConfig, poles_utm: &[Point2]) -> TileGrid {
    let s = config.aerial.tile_size;
    let (mut i0, mut j0, mut i1, mut j1) = (0i64, 0i64, 0i64, 0i64);
    for (n, p) in poles_utm.iter().enumerate() {
        let (i, j) = ((p.x / s).floor() as i64, (p.y / s).floor() as i64);
        if n == 0 {
            (i0, j0, i1, j1) = (i, j, i, j);
        }
        (i0, j0, i1, j1) = (i0.min(i), j0.min(j), i1.max(i), j1.max(j));
    }
    let (nx, ny) = ((i1 - i0 + 1) as usize, (j1 - j0 + 1) as usize);
    let mut r = rng(config.seed, 5);
    let (lo, hi) = config.aerial.tile_bias_range;
    let biases = (0..nx * ny)
        .map(|_| {
            let m: f64 = r.random();
            let a: f64 = r.random();
            let magnitude = lo + (hi - lo) * m;
            let angle = std::f64::consts::TAU * a;
            Point2::new(angle.cos(), angle.sin()) * magnitude
        })
        .collect();
    TileGrid {
        tile_size: s,
        i0,
        j0,
        nx,
        ny,
        biases,
    }
}

/// Per-pose position error after the best rigid alignment of the graph's
/// poses onto `truth`, in the order of `truth`.
pub fn drift_of(graph: &PoseGraph, truth: &[(VertexId, Pose2)]) -> Result<Vec<f64>, SimError> {
    let count = graph.poses().count();
    if count != truth.len() {
        return Err(SimError::CountMismatch {
            graph: count,
            truth: truth.len(),
        });
    }
    let estimates = truth
        .iter()
        .map(|(id, _)| graph.pose(*id).map(|p| p.translation()))
        .collect::<Result<Vec<_>, _>>()?;
    let set = CorrespondenceSet {
        pairs: estimates
            .iter()
            .zip(truth)
            .map(|(e, (_, t))| Correspondence {
                local: *e,
                global: t.translation(),
                weight: 1.0,
            })
            .collect(),
    };
    let t = fit_se2(&set)?;
    Ok(estimates
        .iter()
        .zip(truth)
        .map(|(e, (_, p))| t.transform_point(e).distance(&p.translation()))
        .collect())
}

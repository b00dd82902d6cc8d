//! Shared fixtures for the criterion benchmarks in `benches/`.

use georeg_core::filter::{FilterConfig, InitConfig};
use georeg_core::pipeline::{filter_gps, prior_measurements, register_with_gps, GpsRegistration};
use georeg_core::sim::{generate, Preset, SimConfig, SimOutput};
use georeg_core::{Point2, PoseGraph, VertexId};

/// A simulated campus drive with its filtered GPS priors.
pub struct Campus {
    pub sim: SimOutput,
    pub priors: Vec<(VertexId, Point2)>,
    /// Labels in the map frame.
    pub labels: Vec<Point2>,
}

impl Campus {
    pub fn new(seed: u64) -> Self {
        let sim = generate(&SimConfig {
            seed,
            ..SimConfig::preset(Preset::Campus)
        })
        .expect("campus preset is valid");
        let w = &sim.world;
        let filtered = filter_gps(&sim.odom, &sim.gps, &w.origin, &InitConfig::default(), &FilterConfig::default())
            .expect("campus filter runs");
        let priors = prior_measurements(&w.keyframe_times(), &filtered.path, 1e-6);
        let labels = w.labels.iter().map(|(_, p)| w.origin.utm_to_map(p)).collect();
        Self { sim, priors, labels }
    }

    /// The local map registered with GPS priors.
    pub fn registered(&self) -> PoseGraph {
        let mut g = self.sim.initial_graph.clone();
        register_with_gps(&mut g, &self.priors, &GpsRegistration::default()).expect("campus registers");
        g
    }
}

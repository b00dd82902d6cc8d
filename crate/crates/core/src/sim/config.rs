use crate::config::{parse_range, ConfigError, KeyValues};
use crate::geometry::{MapOrigin, Point2, Pose2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Loop,
    Figure8,
    Campus,
}

impl Preset {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "loop" => Some(Preset::Loop),
            "figure8" => Some(Preset::Figure8),
            "campus" => Some(Preset::Campus),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::Loop => "loop",
            Preset::Figure8 => "figure8",
            Preset::Campus => "campus",
        }
    }

    /// Waypoints in the map frame.
    pub fn waypoints(&self) -> Vec<Point2> {
        let raw: &[(f64, f64)] = match self {
            Preset::Loop => &[(0.0, 0.0), (300.0, 0.0), (300.0, 200.0), (0.0, 200.0), (0.0, 0.0)],
            Preset::Figure8 => &[
                (0.0, 0.0),
                (100.0, 100.0),
                (200.0, 0.0),
                (100.0, -100.0),
                (0.0, 0.0),
                (-100.0, 100.0),
                (-200.0, 0.0),
                (-100.0, -100.0),
                (0.0, 0.0),
            ],
            // outer block, then the middle street and back around the west half
            Preset::Campus => &[
                (0.0, 0.0),
                (400.0, 0.0),
                (400.0, 300.0),
                (0.0, 300.0),
                (0.0, 0.0),
                (200.0, 0.0),
                (200.0, 300.0),
                (0.0, 300.0),
                (0.0, 0.0),
            ],
        };
        let placement = Pose2::new(150.0, 80.0, 0.5);
        raw.iter()
            .map(|&(x, y)| placement.transform_point(&Point2::new(x, y)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathSpec {
    Preset(Preset),
    Waypoints(Vec<Point2>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdomNoise {
    /// Per-sample standard deviation of the measured forward speed.
    pub sigma_v: f64,
    /// Per-sample standard deviation of the measured yaw rate.
    pub sigma_omega: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpsConfig {
    pub rate_hz: f64,
    /// White noise per axis, meters.
    pub sigma: f64,
    /// Bias random-walk intensity, meters per square-root second.
    pub bias_walk_sigma: f64,
    pub outage_windows: Vec<(f64, f64)>,
    pub outlier_rate: f64,
    pub outlier_magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AerialConfig {
    pub tile_size: f64,
    pub tile_bias_range: (f64, f64),
    pub label_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationConfig {
    pub max_range: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub path: PathSpec,
    pub speed: f64,
    pub turn_radius: f64,
    pub odom_rate_hz: f64,
    /// A pose vertex is created every this many odometry samples.
    pub keyframe_every: usize,
    /// Poles per 100 m of distinct road.
    pub pole_density: f64,
    /// Lateral distance of poles from the road centerline.
    pub pole_offset: f64,
    pub odom_noise: OdomNoise,
    pub gps: GpsConfig,
    pub aerial: AerialConfig,
    pub landmark_obs: ObservationConfig,
    /// Associate re-observed poles across revisits and add loop-closure
    /// edges. When off, a pole seen again after `revisit_gap` keyframes
    /// becomes a new landmark.
    pub loop_closures: bool,
    pub revisit_gap: usize,
    pub origin: MapOrigin,
}

impl SimConfig {
    pub fn preset(preset: Preset) -> Self {
        Self {
            seed: 0,
            path: PathSpec::Preset(preset),
            speed: 5.0,
            turn_radius: 8.0,
            odom_rate_hz: 10.0,
            keyframe_every: 10,
            pole_density: 4.0,
            pole_offset: 6.0,
            odom_noise: OdomNoise {
                sigma_v: 0.05,
                sigma_omega: 0.01,
            },
            gps: GpsConfig {
                rate_hz: 1.0,
                sigma: 5.0,
                bias_walk_sigma: 0.05,
                outage_windows: match preset {
                    Preset::Campus => vec![(150.0, 190.0)],
                    _ => Vec::new(),
                },
                outlier_rate: 0.01,
                outlier_magnitude: 1000.0,
            },
            aerial: AerialConfig {
                tile_size: 100.0,
                tile_bias_range: (0.28, 0.75),
                label_fraction: 0.75,
            },
            landmark_obs: ObservationConfig {
                max_range: 30.0,
                sigma: 0.1,
            },
            loop_closures: true,
            revisit_gap: 30,
            origin: MapOrigin::new(334_000.0, 6_250_000.0, MapOrigin::default().zone_label),
        }
    }

    /// Every noise source and bias switched off.
    pub fn zero_noise(mut self) -> Self {
        self.odom_noise = OdomNoise {
            sigma_v: 0.0,
            sigma_omega: 0.0,
        };
        self.gps.sigma = 0.0;
        self.gps.bias_walk_sigma = 0.0;
        self.gps.outage_windows.clear();
        self.gps.outlier_rate = 0.0;
        self.aerial.tile_bias_range = (0.0, 0.0);
        self.landmark_obs.sigma = 0.0;
        self
    }

    pub fn waypoints(&self) -> Vec<Point2> {
        match &self.path {
            PathSpec::Preset(p) => p.waypoints(),
            PathSpec::Waypoints(w) => w.clone(),
        }
    }

    /// Starts from the preset named by `preset` (campus if absent) and
    /// applies every other key on top. Unknown keys are rejected.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, ConfigError> {
        let preset = match kv.raw("preset") {
            Some(name) => Preset::parse(name)
                .ok_or_else(|| ConfigError::value("preset", format!("unknown preset `{name}`")))?,
            None => Preset::Campus,
        };
        let mut c = Self::preset(preset);
        if let Some(pts) = kv.points("waypoints")? {
            c.path = PathSpec::Waypoints(pts);
        }
        kv.set("seed", &mut c.seed)?;
        kv.set("speed", &mut c.speed)?;
        kv.set("turn_radius", &mut c.turn_radius)?;
        kv.set("odom_rate_hz", &mut c.odom_rate_hz)?;
        kv.set("keyframe_every", &mut c.keyframe_every)?;
        kv.set("pole_density", &mut c.pole_density)?;
        kv.set("pole_offset", &mut c.pole_offset)?;
        kv.set("odom_sigma_v", &mut c.odom_noise.sigma_v)?;
        kv.set("odom_sigma_omega", &mut c.odom_noise.sigma_omega)?;
        kv.set("gps_rate_hz", &mut c.gps.rate_hz)?;
        kv.set("gps_sigma", &mut c.gps.sigma)?;
        kv.set("gps_bias_walk_sigma", &mut c.gps.bias_walk_sigma)?;
        if let Some(items) = kv.list::<String>("gps_outages")? {
            c.gps.outage_windows = items
                .iter()
                .map(|w| parse_range("gps_outages", w))
                .collect::<Result<_, _>>()?;
        }
        kv.set("gps_outlier_rate", &mut c.gps.outlier_rate)?;
        kv.set("gps_outlier_magnitude", &mut c.gps.outlier_magnitude)?;
        kv.set("tile_size", &mut c.aerial.tile_size)?;
        kv.set("tile_bias_min", &mut c.aerial.tile_bias_range.0)?;
        kv.set("tile_bias_max", &mut c.aerial.tile_bias_range.1)?;
        kv.set("label_fraction", &mut c.aerial.label_fraction)?;
        kv.set("obs_max_range", &mut c.landmark_obs.max_range)?;
        kv.set("obs_sigma", &mut c.landmark_obs.sigma)?;
        kv.set("loop_closures", &mut c.loop_closures)?;
        kv.set("revisit_gap", &mut c.revisit_gap)?;
        kv.set("origin_easting", &mut c.origin.easting_offset)?;
        kv.set("origin_northing", &mut c.origin.northing_offset)?;
        kv.set("zone", &mut c.origin.zone_label)?;
        kv.reject_unused()?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(key: &str, ok: bool, v: impl std::fmt::Display, want: &str) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::value(key, format!("{v} is invalid, expected {want}")))
            }
        }
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        let pos = |v: f64| v > 0.0 && v.is_finite();
        check("speed", pos(self.speed), self.speed, "a positive number")?;
        check("turn_radius", pos(self.turn_radius), self.turn_radius, "a positive number")?;
        check("odom_rate_hz", pos(self.odom_rate_hz), self.odom_rate_hz, "a positive number")?;
        check("keyframe_every", self.keyframe_every > 0, self.keyframe_every, "at least 1")?;
        check("pole_density", nonneg(self.pole_density), self.pole_density, "≥ 0")?;
        check("pole_offset", nonneg(self.pole_offset), self.pole_offset, "≥ 0")?;
        check("odom_sigma_v", nonneg(self.odom_noise.sigma_v), self.odom_noise.sigma_v, "≥ 0")?;
        check("odom_sigma_omega", nonneg(self.odom_noise.sigma_omega), self.odom_noise.sigma_omega, "≥ 0")?;
        check("gps_rate_hz", pos(self.gps.rate_hz), self.gps.rate_hz, "a positive number")?;
        let ratio = self.odom_rate_hz / self.gps.rate_hz;
        check(
            "gps_rate_hz",
            ratio >= 1.0 && (ratio - ratio.round()).abs() < 1e-9,
            self.gps.rate_hz,
            "a rate dividing odom_rate_hz",
        )?;
        check("gps_sigma", nonneg(self.gps.sigma), self.gps.sigma, "≥ 0")?;
        check("gps_bias_walk_sigma", nonneg(self.gps.bias_walk_sigma), self.gps.bias_walk_sigma, "≥ 0")?;
        for &(a, b) in &self.gps.outage_windows {
            check("gps_outages", a.is_finite() && b.is_finite() && a <= b, format!("{a}:{b}"), "start ≤ end")?;
        }
        check(
            "gps_outlier_rate",
            (0.0..=1.0).contains(&self.gps.outlier_rate),
            self.gps.outlier_rate,
            "a probability",
        )?;
        check("gps_outlier_magnitude", nonneg(self.gps.outlier_magnitude), self.gps.outlier_magnitude, "≥ 0")?;
        check("tile_size", pos(self.aerial.tile_size), self.aerial.tile_size, "a positive number")?;
        let (lo, hi) = self.aerial.tile_bias_range;
        check("tile_bias_min", nonneg(lo) && lo <= hi, lo, "0 ≤ min ≤ max")?;
        check("tile_bias_max", nonneg(hi), hi, "≥ 0")?;
        check(
            "label_fraction",
            (0.0..=1.0).contains(&self.aerial.label_fraction),
            self.aerial.label_fraction,
            "a fraction in [0, 1]",
        )?;
        check("obs_max_range", nonneg(self.landmark_obs.max_range), self.landmark_obs.max_range, "≥ 0")?;
        check("obs_sigma", nonneg(self.landmark_obs.sigma), self.landmark_obs.sigma, "≥ 0")?;
        check(
            "origin_easting",
            self.origin.easting_offset.is_finite(),
            self.origin.easting_offset,
            "a finite number",
        )?;
        check(
            "origin_northing",
            self.origin.northing_offset.is_finite(),
            self.origin.northing_offset,
            "a finite number",
        )?;
        Ok(())
    }
}

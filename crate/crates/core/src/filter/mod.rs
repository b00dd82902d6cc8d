//! Unscented Kalman filter fusing odometry with gated GPS fixes.
//!
//! The state is `(x, y, θ)` in the map frame; forward speed and yaw rate
//! are control inputs, not state.

mod gate;
mod ukf;

pub use gate::{chi_square_quantile, ChiSquareGate};
pub use ukf::{motion_model, predict, update, ProcessNoise, UkfParams};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::geometry::Pose2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsFix {
    pub t: f64,
    pub easting: f64,
    pub northing: f64,
    /// Per-fix standard deviation in meters; non-positive means "use the
    /// configured default".
    pub nominal_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdomSample {
    pub t: f64,
    pub v: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub t: f64,
    pub mean: Pose2,
    pub cov: Matrix3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateDecision {
    pub fix: GpsFix,
    pub mahalanobis_sq: f64,
    pub threshold: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub ukf: UkfParams,
    pub noise: ProcessNoise,
    pub gps_sigma: f64,
    pub gate_confidence: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            ukf: UkfParams::default(),
            noise: ProcessNoise::default(),
            gps_sigma: 5.0,
            gate_confidence: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Odometry,
    Gps,
}

impl std::fmt::Display for Stream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stream::Odometry => "odometry",
            Stream::Gps => "gps",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(String),
    #[error("negative time step {dt} at t={t}")]
    NegativeDt { t: f64, dt: f64 },
    #[error("state covariance is not positive definite at t={t}")]
    CholeskyFailed { t: f64 },
    #[error("innovation covariance is singular at t={t}")]
    SingularInnovation { t: f64 },
    #[error("{stream} record {index} is out of order or not finite")]
    Unsorted { stream: Stream, index: usize },
    #[error("cannot initialize the filter: {0}")]
    NoInitialization(String),
}

/// Filtered poses at every odometry timestamp plus one decision per fix.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub path: Vec<(f64, Pose2)>,
    pub decisions: Vec<GateDecision>,
}

fn check_sorted<T>(
    items: &[T],
    time: impl Fn(&T) -> f64,
    finite: impl Fn(&T) -> bool,
    stream: Stream,
) -> Result<(), FilterError> {
    let mut prev = f64::NEG_INFINITY;
    for (index, item) in items.iter().enumerate() {
        let t = time(item);
        if !finite(item) || !(t > prev) {
            return Err(FilterError::Unsorted { stream, index });
        }
        prev = t;
    }
    Ok(())
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        let bad = |what: &str, v: f64| {
            Err(FilterError::InvalidConfig(format!("{what} = {v} is out of range")))
        };
        if !(self.gps_sigma > 0.0 && self.gps_sigma.is_finite()) {
            return bad("gps_sigma", self.gps_sigma);
        }
        if !(self.noise.sigma_v >= 0.0 && self.noise.sigma_v.is_finite()) {
            return bad("sigma_v", self.noise.sigma_v);
        }
        if !(self.noise.sigma_omega >= 0.0 && self.noise.sigma_omega.is_finite()) {
            return bad("sigma_omega", self.noise.sigma_omega);
        }
        if !(self.ukf.alpha > 0.0 && self.ukf.alpha.is_finite()) {
            return bad("alpha", self.ukf.alpha);
        }
        if !(self.ukf.kappa + 3.0 > 0.0) {
            return bad("kappa", self.ukf.kappa);
        }
        if !self.ukf.beta.is_finite() {
            return bad("beta", self.ukf.beta);
        }
        Ok(())
    }
}

/// Runs the filter over time-sorted streams.
///
/// Events are merged by timestamp. Each odometry sample's `(v, ω)` is held
/// from its timestamp until the next sample; before the first sample the
/// vehicle is assumed stationary. A fix sharing a timestamp with an
/// odometry sample is applied before that sample's pose is emitted.
/// Records earlier than `init.t` are skipped (odometry still sets the held
/// control).
pub fn run_filter(
    odom: &[OdomSample],
    gps: &[GpsFix],
    init: &FilterState,
    config: &FilterConfig,
) -> Result<FilterOutput, FilterError> {
    config.validate()?;
    check_sorted(
        odom,
        |o| o.t,
        |o| o.t.is_finite() && o.v.is_finite() && o.omega.is_finite(),
        Stream::Odometry,
    )?;
    check_sorted(
        gps,
        |g| g.t,
        |g| g.t.is_finite() && g.easting.is_finite() && g.northing.is_finite(),
        Stream::Gps,
    )?;
    let gate = ChiSquareGate::new(2, config.gate_confidence)?;

    let mut state = init.clone();
    let mut control = OdomSample {
        t: init.t,
        v: 0.0,
        omega: 0.0,
    };
    let mut path = Vec::with_capacity(odom.len());
    let mut decisions = Vec::with_capacity(gps.len());
    let mut g = 0;

    let advance = |state: &FilterState, control: &OdomSample, t: f64| {
        if t > state.t {
            predict(state, control, t - state.t, &config.ukf, &config.noise)
        } else {
            Ok(state.clone())
        }
    };

    for sample in odom {
        while g < gps.len() && gps[g].t <= sample.t {
            let fix = &gps[g];
            g += 1;
            if fix.t < init.t {
                continue;
            }
            state = advance(&state, &control, fix.t)?;
            let (next, decision) = update(&state, fix, &gate, &config.ukf, config.gps_sigma)?;
            state = next;
            decisions.push(decision);
        }
        if sample.t >= init.t {
            state = advance(&state, &control, sample.t)?;
            path.push((sample.t, state.mean));
        }
        control = *sample;
    }
    for fix in &gps[g..] {
        if fix.t < init.t {
            continue;
        }
        state = advance(&state, &control, fix.t)?;
        let (next, decision) = update(&state, fix, &gate, &config.ukf, config.gps_sigma)?;
        state = next;
        decisions.push(decision);
    }
    Ok(FilterOutput { path, decisions })
}

/// How the filter start is fitted to the beginning of the fix stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    /// Dead-reckoned travel covered by the fixes used for the fit, meters.
    pub baseline: f64,
    pub sigma_position: f64,
    pub sigma_theta: f64,
    /// Squared normalized residual above which a fix is dropped from the fit.
    pub outlier_chi2: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            baseline: 50.0,
            sigma_position: 5.0,
            sigma_theta: 0.3,
            outlier_chi2: 13.8,
        }
    }
}

/// Start state from odometry and the first fixes. Dead reckoning over the
/// first `baseline` meters of travel is rigidly fitted to the fixes in that
/// window; the worst fix beyond `outlier_chi2` is dropped and the fit
/// repeated until none remains, so a stray fix cannot set the heading.
pub fn initial_state(
    odom: &[OdomSample],
    gps: &[GpsFix],
    config: &InitConfig,
    default_sigma: f64,
) -> Result<FilterState, FilterError> {
    use crate::align::{fit_se2, Correspondence, CorrespondenceSet};
    use crate::geometry::Point2;

    let fail = |m: String| Err(FilterError::NoInitialization(m));
    let Some(first) = gps.first() else {
        return fail("GPS stream is empty".into());
    };
    let path = dead_reckon(odom, &Pose2::identity(), first.t);
    let Some(&(t_start, _)) = path.first() else {
        return fail(format!("no odometry at or after the first fix (t={})", first.t));
    };
    let mut travelled = 0.0;
    let mut t_end = None;
    for w in path.windows(2) {
        travelled += w[0].1.translation().distance(&w[1].1.translation());
        if travelled >= config.baseline {
            t_end = Some(w[1].0);
            break;
        }
    }
    let Some(t_end) = t_end else {
        return fail(format!("odometry covers less than {} m", config.baseline));
    };
    let mut pairs = Vec::new();
    for f in gps.iter().take_while(|f| f.t <= t_end) {
        let k = path.partition_point(|(t, _)| *t < f.t);
        let nearest = [k.checked_sub(1), (k < path.len()).then_some(k)]
            .into_iter()
            .flatten()
            .min_by(|&a, &b| (path[a].0 - f.t).abs().total_cmp(&(path[b].0 - f.t).abs()));
        if let Some(i) = nearest.filter(|&i| (path[i].0 - f.t).abs() <= 0.5) {
            let sigma = if f.nominal_sigma > 0.0 { f.nominal_sigma } else { default_sigma };
            pairs.push(Correspondence {
                local: path[i].1.translation(),
                global: Point2::new(f.easting, f.northing),
                weight: 1.0 / (sigma * sigma),
            });
        }
    }
    let fit = loop {
        if pairs.len() < 3 {
            return fail(format!("fewer than 3 consistent fixes in the first {} m", config.baseline));
        }
        let set = CorrespondenceSet { pairs };
        let t = fit_se2(&set).map_err(|e| FilterError::NoInitialization(e.to_string()))?;
        let worst = set
            .pairs
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.weight * t.transform_point(&c.local).distance(&c.global).powi(2)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least three pairs");
        pairs = set.pairs;
        if worst.1 <= config.outlier_chi2 {
            break t;
        }
        pairs.remove(worst.0);
    };
    let (sp, st) = (config.sigma_position, config.sigma_theta);
    Ok(FilterState {
        t: t_start,
        mean: fit.compose(&path[0].1),
        cov: Matrix3::from_diagonal(&Vector3::new(sp * sp, sp * sp, st * st)),
    })
}

/// Pure dead reckoning of the motion model under the same zero-order hold
/// as [`run_filter`].
pub fn dead_reckon(odom: &[OdomSample], start: &Pose2, t0: f64) -> Vec<(f64, Pose2)> {
    let mut x = Vector3::new(start.x, start.y, start.theta());
    let (mut t, mut v, mut omega) = (t0, 0.0, 0.0);
    let mut out = Vec::with_capacity(odom.len());
    for s in odom {
        if s.t >= t0 {
            x = motion_model(&x, v, omega, s.t - t);
            x.z = crate::geometry::normalize_angle(x.z);
            t = s.t;
            out.push((s.t, Pose2::new(x.x, x.y, x.z)));
        }
        v = s.v;
        omega = s.omega;
    }
    out
}

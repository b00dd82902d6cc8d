//! Scaled unscented transform over the `(x, y, θ)` vehicle state.

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector2, Vector3};

use super::{ChiSquareGate, FilterError, FilterState, GateDecision, GpsFix, OdomSample};
use crate::geometry::Pose2;

const N: usize = 3;
const SIGMA_COUNT: usize = 2 * N + 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        Self {
            alpha: 1e-1,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

/// Continuous-time process noise; the covariance added over a step of
/// `dt` seconds is `diag(σv², σv², σω²)·dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessNoise {
    pub sigma_v: f64,
    pub sigma_omega: f64,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        Self {
            sigma_v: 0.1,
            sigma_omega: 0.02,
        }
    }
}

struct Weights {
    mean: [f64; SIGMA_COUNT],
    cov: [f64; SIGMA_COUNT],
    scale: f64,
}

impl UkfParams {
    fn weights(&self) -> Weights {
        let n = N as f64;
        let lambda = self.alpha * self.alpha * (n + self.kappa) - n;
        let scale = n + lambda;
        let w = 1.0 / (2.0 * scale);
        let mut mean = [w; SIGMA_COUNT];
        let mut cov = [w; SIGMA_COUNT];
        mean[0] = lambda / scale;
        cov[0] = lambda / scale + (1.0 - self.alpha * self.alpha + self.beta);
        Weights { mean, cov, scale }
    }
}

fn to_vec(p: &Pose2) -> Vector3<f64> {
    Vector3::new(p.x, p.y, p.theta())
}

/// Sigma-point offsets from the mean, ordered `0, +col_1..+col_n, -col_1..-col_n`.
fn sigma_offsets(
    cov: &Matrix3<f64>,
    weights: &Weights,
    t: f64,
) -> Result<[Vector3<f64>; SIGMA_COUNT], FilterError> {
    let chol = (cov * weights.scale)
        .cholesky()
        .ok_or(FilterError::CholeskyFailed { t })?;
    let l = chol.l();
    let mut out = [Vector3::zeros(); SIGMA_COUNT];
    for i in 0..N {
        let col: Vector3<f64> = l.column(i).into();
        out[1 + i] = col;
        out[1 + N + i] = -col;
    }
    Ok(out)
}

/// Weighted sum of deviations, pairing `+i` with `-i` so symmetric sets
/// cancel exactly.
fn weighted_sum<const D: usize>(
    devs: &[nalgebra::SVector<f64, D>; SIGMA_COUNT],
    w: &[f64; SIGMA_COUNT],
) -> nalgebra::SVector<f64, D> {
    let mut acc = devs[0] * w[0];
    for i in 1..=N {
        acc += devs[i] * w[i] + devs[i + N] * w[i + N];
    }
    acc
}

fn motion_delta(theta: f64, v: f64, omega: f64, dt: f64) -> Vector3<f64> {
    let heading = theta + omega * dt / 2.0;
    Vector3::new(v * dt * heading.cos(), v * dt * heading.sin(), omega * dt)
}

/// Midpoint-heading unicycle motion.
pub fn motion_model(x: &Vector3<f64>, v: f64, omega: f64, dt: f64) -> Vector3<f64> {
    x + motion_delta(x.z, v, omega, dt)
}

fn ensure_pd(cov: &Matrix3<f64>, t: f64) -> Result<Matrix3<f64>, FilterError> {
    let sym = (cov + cov.transpose()) * 0.5;
    if sym.iter().all(|v| v.is_finite()) && sym.cholesky().is_some() {
        Ok(sym)
    } else {
        Err(FilterError::CholeskyFailed { t })
    }
}

/// Propagates the state over `dt` seconds with control `u`.
pub fn predict(
    state: &FilterState,
    u: &OdomSample,
    dt: f64,
    params: &UkfParams,
    noise: &ProcessNoise,
) -> Result<FilterState, FilterError> {
    if !(dt >= 0.0) {
        return Err(FilterError::NegativeDt { t: state.t, dt });
    }
    let w = params.weights();
    let offsets = sigma_offsets(&state.cov, &w, state.t)?;
    let mean = to_vec(&state.mean);
    // the motion is additive, x' = x + Δ(θ); deviations are taken as
    // offset + (Δᵢ − Δ₀) so that symmetric offsets cancel exactly
    let reference = motion_delta(mean.z, u.v, u.omega, dt);
    let mut devs = [Vector3::zeros(); SIGMA_COUNT];
    for (d, off) in devs.iter_mut().zip(offsets.iter()) {
        *d = off + (motion_delta(mean.z + off.z, u.v, u.omega, dt) - reference);
    }
    let shift = weighted_sum(&devs, &w.mean);
    let mut cov = Matrix3::zeros();
    for (d, wc) in devs.iter().zip(w.cov.iter()) {
        let c = d - shift;
        cov += c * c.transpose() * *wc;
    }
    let q = Matrix3::from_diagonal(&Vector3::new(
        noise.sigma_v * noise.sigma_v,
        noise.sigma_v * noise.sigma_v,
        noise.sigma_omega * noise.sigma_omega,
    ));
    cov += q * dt;
    let t = state.t + dt;
    let m = mean + reference + shift;
    Ok(FilterState {
        t,
        mean: Pose2::new(m.x, m.y, m.z),
        cov: ensure_pd(&cov, t)?,
    })
}

/// Innovation statistics of a position fix against the state.
struct Innovation {
    nu: Vector2<f64>,
    s: Matrix2<f64>,
    cross: Matrix3x2<f64>,
    d2: f64,
}

fn innovation(
    state: &FilterState,
    fix: &GpsFix,
    params: &UkfParams,
    sigma: f64,
) -> Result<Innovation, FilterError> {
    let w = params.weights();
    let offsets = sigma_offsets(&state.cov, &w, state.t)?;
    // h(x) = (x, y): deviations of the predicted measurement are the
    // position parts of the sigma offsets
    let mut zdev = [Vector2::zeros(); SIGMA_COUNT];
    for (z, o) in zdev.iter_mut().zip(offsets.iter()) {
        *z = Vector2::new(o.x, o.y);
    }
    let zshift = weighted_sum(&zdev, &w.mean);
    let xshift = weighted_sum(&offsets, &w.mean);
    let mut s = Matrix2::identity() * (sigma * sigma);
    let mut cross = Matrix3x2::zeros();
    for i in 0..SIGMA_COUNT {
        let dz = zdev[i] - zshift;
        let dx = offsets[i] - xshift;
        s += dz * dz.transpose() * w.cov[i];
        cross += dx * dz.transpose() * w.cov[i];
    }
    let predicted = Vector2::new(state.mean.x, state.mean.y) + zshift;
    let nu = Vector2::new(fix.easting, fix.northing) - predicted;
    let s_inv = s.try_inverse().ok_or(FilterError::SingularInnovation { t: fix.t })?;
    let d2 = (nu.transpose() * s_inv * nu)[0];
    if !d2.is_finite() || s.cholesky().is_none() {
        return Err(FilterError::SingularInnovation { t: fix.t });
    }
    Ok(Innovation { nu, s, cross, d2 })
}

/// Gated measurement update with `h(x) = (x, y)`.
///
/// A rejected fix returns the input state unchanged.
pub fn update(
    state: &FilterState,
    fix: &GpsFix,
    gate: &ChiSquareGate,
    params: &UkfParams,
    default_sigma: f64,
) -> Result<(FilterState, GateDecision), FilterError> {
    let sigma = if fix.nominal_sigma > 0.0 {
        fix.nominal_sigma
    } else {
        default_sigma
    };
    let inn = innovation(state, fix, params, sigma)?;
    let accepted = gate.accepts(inn.d2);
    let decision = GateDecision {
        fix: *fix,
        mahalanobis_sq: inn.d2,
        threshold: gate.threshold,
        accepted,
    };
    if !accepted {
        return Ok((state.clone(), decision));
    }
    let s_inv = inn.s.try_inverse().ok_or(FilterError::SingularInnovation { t: fix.t })?;
    let gain = inn.cross * s_inv;
    let dx = gain * inn.nu;
    let cov = state.cov - gain * inn.s * gain.transpose();
    let m = to_vec(&state.mean) + dx;
    Ok((
        FilterState {
            t: state.t,
            mean: Pose2::new(m.x, m.y, m.z),
            cov: ensure_pd(&cov, state.t)?,
        },
        decision,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn state(mean: Pose2, cov: Matrix3<f64>) -> FilterState {
        FilterState { t: 0.0, mean, cov }
    }

    fn odom(v: f64, omega: f64) -> OdomSample {
        OdomSample { t: 0.0, v, omega }
    }

    const NO_NOISE: ProcessNoise = ProcessNoise {
        sigma_v: 0.0,
        sigma_omega: 0.0,
    };

    #[test]
    fn stationary_prediction_is_identity() {
        let cov = Matrix3::new(2.0, 0.3, 0.01, 0.3, 1.5, -0.02, 0.01, -0.02, 0.05);
        let s = state(Pose2::new(3.0, -2.0, 0.4), cov);
        let p = predict(&s, &odom(0.0, 0.0), 1.0, &UkfParams::default(), &NO_NOISE).unwrap();
        assert_eq!(p.mean, s.mean);
        assert!((p.cov - cov).norm() < 1e-12 * cov.norm(), "{}", p.cov - cov);
    }

    #[test]
    fn straight_line_prediction() {
        let s = state(Pose2::new(1.0, 2.0, 0.0), Matrix3::identity() * 1e-20);
        let p = predict(&s, &odom(1.0, 0.0), 1.0, &UkfParams::default(), &NO_NOISE).unwrap();
        assert!((p.mean.x - 2.0).abs() < 1e-12 && (p.mean.y - 2.0).abs() < 1e-12);
        assert_eq!(p.mean.theta(), 0.0);
        assert_eq!(p.t, 1.0);
        assert!(predict(&s, &odom(1.0, 0.0), -0.1, &UkfParams::default(), &NO_NOISE).is_err());
    }

    #[test]
    fn prediction_matches_monte_carlo() {
        let cov = Matrix3::new(0.01, 0.002, 0.0, 0.002, 0.02, 0.001, 0.0, 0.001, 0.0025);
        let mean = Pose2::new(10.0, -4.0, 0.7);
        let (v, omega, dt) = (2.0, 0.5, 0.5);
        let noise = ProcessNoise {
            sigma_v: 0.05,
            sigma_omega: 0.01,
        };
        let p = predict(&state(mean, cov), &odom(v, omega), dt, &UkfParams::default(), &noise)
            .unwrap();

        let n = 1_000_000;
        let chol = cov.cholesky().unwrap().l();
        let q_std = Vector3::new(noise.sigma_v, noise.sigma_v, noise.sigma_omega) * dt.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let z = Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
            let x = to_vec(&mean) + chol * z;
            let e = Vector3::from_fn(|i, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                q_std[i] * z
            });
            samples.push(motion_model(&x, v, omega, dt) + e);
        }
        let mc_mean = samples.iter().fold(Vector3::zeros(), |a, s| a + s) / n as f64;
        let mut mc_cov = Matrix3::zeros();
        for s in &samples {
            let d = s - mc_mean;
            mc_cov += d * d.transpose();
        }
        mc_cov /= (n - 1) as f64;
        for i in 0..3 {
            let se = (mc_cov[(i, i)] / n as f64).sqrt();
            let ukf = to_vec(&p.mean)[i];
            assert!((ukf - mc_mean[i]).abs() < 3.0 * se, "mean[{i}] {ukf} vs {}", mc_mean[i]);
            for j in 0..3 {
                // standard error of the sample covariance element
                let var_prod = samples
                    .iter()
                    .map(|s| {
                        let d = s - mc_mean;
                        (d[i] * d[j] - mc_cov[(i, j)]).powi(2)
                    })
                    .sum::<f64>()
                    / (n - 1) as f64;
                let se = (var_prod / n as f64).sqrt();
                assert!(
                    (p.cov[(i, j)] - mc_cov[(i, j)]).abs() < 3.0 * se,
                    "cov[{i},{j}] {} vs {} (se {se})",
                    p.cov[(i, j)],
                    mc_cov[(i, j)]
                );
            }
        }
    }

    #[test]
    fn fix_at_prediction_shrinks_covariance() {
        let gate = ChiSquareGate::new(2, 0.95).unwrap();
        let s = state(Pose2::new(5.0, 6.0, 1.0), Matrix3::from_diagonal(&Vector3::new(4.0, 4.0, 0.1)));
        let fix = GpsFix {
            t: 0.0,
            easting: 5.0,
            northing: 6.0,
            nominal_sigma: 5.0,
        };
        let (u, d) = update(&s, &fix, &gate, &UkfParams::default(), 5.0).unwrap();
        assert!(d.accepted);
        assert_eq!(d.mahalanobis_sq, 0.0);
        assert_eq!((u.mean.x, u.mean.y), (5.0, 6.0));
        assert!(u.cov.trace() < s.cov.trace());
    }

    #[test]
    fn far_outlier_is_rejected_bit_identically() {
        let gate = ChiSquareGate::new(2, 0.95).unwrap();
        // S ≈ diag(25, 25) with a near-certain state
        let s = state(Pose2::new(0.0, 0.0, 0.3), Matrix3::identity() * 1e-9);
        let fix = GpsFix {
            t: 0.0,
            easting: 1000.0,
            northing: 0.0,
            nominal_sigma: 5.0,
        };
        let (u, d) = update(&s, &fix, &gate, &UkfParams::default(), 5.0).unwrap();
        assert!(!d.accepted);
        assert!((d.mahalanobis_sq - 40000.0).abs() < 1e-3);
        assert_eq!(u, s);
    }
}

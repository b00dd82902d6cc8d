//! Closed-form weighted SE2 alignment of a local trajectory to GPS.

use thiserror::Error;

use crate::filter::{GateDecision, GpsFix};
use crate::geometry::{Point2, Pose2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub local: Point2,
    pub global: Point2,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("correspondence {index} has invalid weight {weight}")]
    InvalidWeight { index: usize, weight: f64 },
    #[error("correspondence {index} is not finite")]
    NonFinite { index: usize },
    #[error("rank-deficient correspondence set: {0}")]
    Degenerate(String),
    #[error("no fix lies within {max_dt} s of a local pose")]
    NoPairs { max_dt: f64 },
    #[error("{what} is not sorted by time at index {index}")]
    Unsorted { what: &'static str, index: usize },
}

impl CorrespondenceSet {
    /// Weighted squared residual `Σ wᵢ ‖T(localᵢ) − globalᵢ‖²`.
    pub fn chi2(&self, t: &Pose2) -> f64 {
        self.pairs
            .iter()
            .map(|c| {
                let d = t.transform_point(&c.local) - c.global;
                c.weight * d.dot(&d)
            })
            .sum()
    }

    fn validate(&self) -> Result<f64, AlignError> {
        let mut total = 0.0;
        for (index, c) in self.pairs.iter().enumerate() {
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(AlignError::InvalidWeight {
                    index,
                    weight: c.weight,
                });
            }
            if !c.local.is_finite() || !c.global.is_finite() {
                return Err(AlignError::NonFinite { index });
            }
            total += c.weight;
        }
        if !(total > 0.0) {
            return Err(AlignError::Degenerate(format!(
                "{} pairs with zero total weight",
                self.pairs.len()
            )));
        }
        Ok(total)
    }
}

fn weighted_centroid(set: &CorrespondenceSet, total: f64, pick: fn(&Correspondence) -> Point2) -> Point2 {
    let (mut x, mut y) = (0.0, 0.0);
    for c in &set.pairs {
        let p = pick(c);
        x += c.weight * p.x;
        y += c.weight * p.y;
    }
    Point2::new(x / total, y / total)
}

/// Least-squares SE2 transform taking local points onto global points.
///
/// Collinear local points still determine a unique rotation; only a set
/// whose weighted cross-covariance vanishes (for instance all weighted
/// local points coincident) is rejected.
pub fn fit_se2(set: &CorrespondenceSet) -> Result<Pose2, AlignError> {
    let total = set.validate()?;
    let lc = weighted_centroid(set, total, |c| c.local);
    let gc = weighted_centroid(set, total, |c| c.global);
    let (mut dot, mut cross, mut spread) = (0.0, 0.0, 0.0);
    for c in &set.pairs {
        let a = c.local - lc;
        let b = c.global - gc;
        dot += c.weight * a.dot(&b);
        cross += c.weight * a.cross(&b);
        spread += c.weight * a.dot(&a);
    }
    let scale = spread.max(f64::MIN_POSITIVE);
    if spread == 0.0 || dot.hypot(cross) <= 1e-14 * scale {
        return Err(AlignError::Degenerate(format!(
            "weighted local spread {spread:e}, cross-covariance magnitude {:e}",
            dot.hypot(cross)
        )));
    }
    let theta = cross.atan2(dot);
    let rotation = Pose2::new(0.0, 0.0, theta);
    let t = gc - rotation.transform_point(&lc);
    Ok(Pose2::new(t.x, t.y, theta))
}

/// Moves a trajectory and its landmarks rigidly by `t`.
pub fn apply_to_map(t: &Pose2, trajectory: &[Pose2], landmarks: &[Point2]) -> (Vec<Pose2>, Vec<Point2>) {
    (
        trajectory.iter().map(|p| t.compose(p)).collect(),
        landmarks.iter().map(|l| t.transform_point(l)).collect(),
    )
}

fn check_times<T>(items: &[T], time: impl Fn(&T) -> f64, what: &'static str) -> Result<(), AlignError> {
    for (index, w) in items.windows(2).enumerate() {
        if !(time(&w[1]) >= time(&w[0])) {
            return Err(AlignError::Unsorted { what, index: index + 1 });
        }
    }
    Ok(())
}

/// Index of the pose whose timestamp is nearest `t`; ties go to the earlier.
fn nearest(path: &[(f64, Pose2)], t: f64) -> Option<usize> {
    let k = path.partition_point(|(pt, _)| *pt < t);
    let before = k.checked_sub(1);
    let after = (k < path.len()).then_some(k);
    match (before, after) {
        (Some(b), Some(a)) => Some(if t - path[b].0 <= path[a].0 - t { b } else { a }),
        (b, a) => b.or(a),
    }
}

fn pair_fixes<'a>(
    local_path: &[(f64, Pose2)],
    fixes: impl Iterator<Item = (&'a GpsFix, bool)>,
    max_dt: f64,
    default_sigma: f64,
) -> Result<CorrespondenceSet, AlignError> {
    let mut pairs = Vec::new();
    for (fix, usable) in fixes {
        let Some(k) = nearest(local_path, fix.t) else { break };
        if (local_path[k].0 - fix.t).abs() > max_dt {
            continue;
        }
        let sigma = if fix.nominal_sigma > 0.0 { fix.nominal_sigma } else { default_sigma };
        pairs.push(Correspondence {
            local: local_path[k].1.translation(),
            global: Point2::new(fix.easting, fix.northing),
            weight: if usable { 1.0 / (sigma * sigma) } else { 0.0 },
        });
    }
    if pairs.is_empty() {
        return Err(AlignError::NoPairs { max_dt });
    }
    Ok(CorrespondenceSet { pairs })
}

/// Pairs each fix with the temporally nearest local pose within `max_dt`,
/// weighted `1/σ²`. Fixes with non-positive `nominal_sigma` use
/// `default_sigma`.
pub fn build_correspondences(
    local_path: &[(f64, Pose2)],
    fixes: &[GpsFix],
    max_dt: f64,
    default_sigma: f64,
) -> Result<CorrespondenceSet, AlignError> {
    check_times(local_path, |p| p.0, "local path")?;
    check_times(fixes, |f| f.t, "GPS fixes")?;
    pair_fixes(local_path, fixes.iter().map(|f| (f, true)), max_dt, default_sigma)
}

/// As [`build_correspondences`], with fixes rejected by the filter gate
/// kept at weight zero.
pub fn build_gated_correspondences(
    local_path: &[(f64, Pose2)],
    decisions: &[GateDecision],
    max_dt: f64,
    default_sigma: f64,
) -> Result<CorrespondenceSet, AlignError> {
    check_times(local_path, |p| p.0, "local path")?;
    check_times(decisions, |d| d.fix.t, "GPS fixes")?;
    pair_fixes(
        local_path,
        decisions.iter().map(|d| (&d.fix, d.accepted)),
        max_dt,
        default_sigma,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn set(local: &[Point2], global: &[Point2]) -> CorrespondenceSet {
        CorrespondenceSet {
            pairs: local
                .iter()
                .zip(global)
                .map(|(l, g)| Correspondence { local: *l, global: *g, weight: 1.0 })
                .collect(),
        }
    }

    fn square() -> Vec<Point2> {
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 2.0),
            Point2::new(0.0, 2.0),
        ]
    }

    #[test]
    fn identity_when_equal() {
        let t = fit_se2(&set(&square(), &square())).unwrap();
        assert_eq!((t.x, t.y, t.theta()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn quarter_turn_about_centroid() {
        let c = Point2::new(1.0, 1.0);
        let global: Vec<Point2> = square()
            .iter()
            .map(|p| {
                let d = *p - c;
                c + Point2::new(-d.y, d.x)
            })
            .collect();
        let t = fit_se2(&set(&square(), &global)).unwrap();
        assert_eq!(t.theta(), FRAC_PI_2);
        assert!(set(&square(), &global).chi2(&t) < 1e-24);
    }

    #[test]
    fn coincident_locals_are_degenerate() {
        let local = vec![Point2::new(1.0, 1.0); 3];
        let err = fit_se2(&set(&local, &square()[..3])).unwrap_err();
        assert!(matches!(err, AlignError::Degenerate(_)));
        let mut s = set(&square(), &square());
        for c in &mut s.pairs {
            c.weight = 0.0;
        }
        assert!(matches!(fit_se2(&s), Err(AlignError::Degenerate(_))));
        s.pairs[0].weight = -1.0;
        assert!(matches!(fit_se2(&s), Err(AlignError::InvalidWeight { index: 0, .. })));
    }

    #[test]
    fn collinear_locals_still_fit() {
        let local: Vec<Point2> = (0..5).map(|i| Point2::new(i as f64, 0.0)).collect();
        let truth = Pose2::new(3.0, -1.0, 0.7);
        let global: Vec<Point2> = local.iter().map(|p| truth.transform_point(p)).collect();
        let t = fit_se2(&set(&local, &global)).unwrap();
        assert!((t.theta() - 0.7).abs() < 1e-12 && (t.x - 3.0).abs() < 1e-12);
    }

    fn path(times: &[f64]) -> Vec<(f64, Pose2)> {
        times.iter().map(|&t| (t, Pose2::new(t, 0.0, 0.0))).collect()
    }

    fn fixes(times: &[f64]) -> Vec<GpsFix> {
        times
            .iter()
            .map(|&t| GpsFix { t, easting: t, northing: 1.0, nominal_sigma: 2.0 })
            .collect()
    }

    #[test]
    fn identical_grids_pair_everything() {
        let times: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let c = build_correspondences(&path(&times), &fixes(&times), 0.0, 5.0).unwrap();
        assert_eq!(c.pairs.len(), 10);
        assert!(c.pairs.iter().all(|p| p.weight == 0.25 && p.local.x == p.global.x));
    }

    #[test]
    fn offset_grids_with_zero_window_fail() {
        let a: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let b: Vec<f64> = (0..10).map(|k| k as f64 + 0.5).collect();
        assert_eq!(
            build_correspondences(&path(&a), &fixes(&b), 0.0, 5.0),
            Err(AlignError::NoPairs { max_dt: 0.0 })
        );
    }

    #[test]
    fn rejected_fixes_get_zero_weight() {
        let times = [0.0, 1.0, 2.0];
        let decisions: Vec<GateDecision> = fixes(&times)
            .into_iter()
            .enumerate()
            .map(|(i, fix)| GateDecision { fix, mahalanobis_sq: 0.0, threshold: 1.0, accepted: i != 1 })
            .collect();
        let c = build_gated_correspondences(&path(&times), &decisions, 0.1, 5.0).unwrap();
        let w: Vec<f64> = c.pairs.iter().map(|p| p.weight).collect();
        assert_eq!(w, vec![0.25, 0.0, 0.25]);
    }

    fn brute_force_nearest(path: &[(f64, Pose2)], t: f64) -> usize {
        let mut best = 0;
        for (i, (pt, _)) in path.iter().enumerate() {
            if (pt - t).abs() < (path[best].0 - t).abs() {
                best = i;
            }
        }
        best
    }

    proptest! {
        #[test]
        fn pairing_matches_brute_force(
            mut pt in prop::collection::vec(0.0..100.0f64, 1..40),
            mut ft in prop::collection::vec(-5.0..105.0f64, 1..40),
            max_dt in 0.0..3.0f64,
        ) {
            pt.sort_by(f64::total_cmp);
            ft.sort_by(f64::total_cmp);
            let p = path(&pt);
            let expected: Vec<Point2> = ft
                .iter()
                .filter_map(|&t| {
                    let k = brute_force_nearest(&p, t);
                    ((p[k].0 - t).abs() <= max_dt).then(|| p[k].1.translation())
                })
                .collect();
            match build_correspondences(&p, &fixes(&ft), max_dt, 5.0) {
                Ok(c) => {
                    let got: Vec<Point2> = c.pairs.iter().map(|c| c.local).collect();
                    prop_assert_eq!(got, expected);
                }
                Err(AlignError::NoPairs { .. }) => prop_assert!(expected.is_empty()),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn fit_beats_identity_and_is_equivariant(
            pts in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.1..4.0f64), 3..20),
            tx in -100.0..100.0f64, ty in -100.0..100.0f64, th in -PI..PI, pre in -PI..PI,
        ) {
            let truth = Pose2::new(tx, ty, th);
            let s = CorrespondenceSet {
                pairs: pts.iter().map(|&(x, y, nx, ny, w)| {
                    let l = Point2::new(x, y);
                    Correspondence { local: l, global: truth.transform_point(&l) + Point2::new(nx, ny), weight: w }
                }).collect(),
            };
            let t = fit_se2(&s).unwrap();
            prop_assert!(s.chi2(&t) <= s.chi2(&Pose2::identity()) + 1e-9);
            // rotating the local points by R: fitted transform becomes T ⊕ R⁻¹
            let r = Pose2::new(0.0, 0.0, pre);
            let rotated = CorrespondenceSet {
                pairs: s.pairs.iter().map(|c| Correspondence { local: r.transform_point(&c.local), ..*c }).collect(),
            };
            let t2 = fit_se2(&rotated).unwrap();
            let expected = t.compose(&r.inverse());
            prop_assert!((t2.x - expected.x).abs() < 1e-9 * (1.0 + expected.x.abs()));
            prop_assert!((t2.y - expected.y).abs() < 1e-9 * (1.0 + expected.y.abs()));
            prop_assert!(crate::geometry::normalize_angle(t2.theta() - expected.theta()).abs() < 1e-9);
        }

        #[test]
        fn zero_weight_outliers_do_not_move_fit(
            pts in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64, -1.0..1.0f64, -1.0..1.0f64), 10..30),
            th in -PI..PI,
        ) {
            let truth = Pose2::new(10.0, -20.0, th);
            let clean: Vec<Correspondence> = pts.iter().map(|&(x, y, nx, ny)| {
                let l = Point2::new(x, y);
                Correspondence { local: l, global: truth.transform_point(&l) + Point2::new(nx, ny), weight: 0.04 }
            }).collect();
            let mut dirty = clean.clone();
            for c in dirty.iter_mut().step_by(10) {
                c.global = c.global + Point2::new(1000.0, 0.0);
                c.weight = 0.0;
            }
            let kept: Vec<Correspondence> = dirty.iter().copied().filter(|c| c.weight > 0.0).collect();
            let a = fit_se2(&CorrespondenceSet { pairs: kept }).unwrap();
            let b = fit_se2(&CorrespondenceSet { pairs: dirty }).unwrap();
            prop_assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
            prop_assert!((a.theta() - b.theta()).abs() < 1e-9);
        }

        #[test]
        fn apply_preserves_structure(
            poses in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64, -PI..PI), 2..15),
            tx in -1e3..1e3f64, ty in -1e3..1e3f64, th in -PI..PI,
        ) {
            let traj: Vec<Pose2> = poses.iter().map(|&(x, y, t)| Pose2::new(x, y, t)).collect();
            let lms: Vec<Point2> = poses.iter().map(|&(x, y, _)| Point2::new(y, x)).collect();
            let t = Pose2::new(tx, ty, th);
            let (traj2, lms2) = apply_to_map(&t, &traj, &lms);
            for i in 1..traj.len() {
                let a = traj[i - 1].between(&traj[i]);
                let b = traj2[i - 1].between(&traj2[i]);
                prop_assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
                prop_assert!(crate::geometry::normalize_angle(a.theta() - b.theta()).abs() < 1e-9);
                prop_assert!((lms[i].distance(&lms[0]) - lms2[i].distance(&lms2[0])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn identity_apply_is_noop() {
        let traj = vec![Pose2::new(1.0, 2.0, 0.3), Pose2::new(-4.0, 5.0, -2.0)];
        let lms = vec![Point2::new(7.0, 8.0)];
        let (a, b) = apply_to_map(&Pose2::identity(), &traj, &lms);
        assert_eq!((a, b), (traj, lms));
    }
}

//! Waypoint polylines turned into constant-speed twist schedules.

use super::SimError;
use crate::geometry::{normalize_angle, Point2, Pose2};

/// A piece of constant yaw rate driven at the nominal speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Piece {
    pub duration: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Schedule {
    pub start: Pose2,
    pub pieces: Vec<Piece>,
    /// Cumulative end time of each piece.
    pub ends: Vec<f64>,
}

impl Schedule {
    pub fn duration(&self) -> f64 {
        self.ends.last().copied().unwrap_or(0.0)
    }

    /// Yaw rate in force at time `t` (pieces are half-open `[start, end)`).
    pub fn omega_at(&self, t: f64) -> f64 {
        let k = self.ends.partition_point(|&e| e <= t);
        self.pieces.get(k).map_or(0.0, |p| p.omega)
    }
}

/// Straight segments joined by circular arcs of `turn_radius`.
pub(crate) fn schedule(waypoints: &[Point2], speed: f64, turn_radius: f64) -> Result<Schedule, SimError> {
    if waypoints.len() < 2 {
        return Err(SimError::EmptyPath);
    }
    let mut headings = Vec::with_capacity(waypoints.len() - 1);
    let mut lengths = Vec::with_capacity(waypoints.len() - 1);
    for (i, w) in waypoints.windows(2).enumerate() {
        let d = w[1] - w[0];
        let len = d.norm();
        if !(len > 0.0) {
            return Err(SimError::InvalidPath(format!("waypoints {i} and {} coincide", i + 1)));
        }
        headings.push(d.y.atan2(d.x));
        lengths.push(len);
    }
    // turn angle and tangent cut-back at every interior waypoint
    let turns: Vec<f64> = headings.windows(2).map(|h| normalize_angle(h[1] - h[0])).collect();
    let cut: Vec<f64> = turns.iter().map(|phi| turn_radius * (phi.abs() / 2.0).tan()).collect();

    let mut pieces = Vec::new();
    for (i, len) in lengths.iter().enumerate() {
        let before = if i > 0 { cut[i - 1] } else { 0.0 };
        let after = cut.get(i).copied().unwrap_or(0.0);
        let straight = len - before - after;
        if straight < -1e-9 {
            return Err(SimError::InvalidPath(format!(
                "segment {i} ({len:.1} m) is too short for turns of radius {turn_radius} m"
            )));
        }
        if straight > 0.0 {
            pieces.push(Piece { duration: straight / speed, omega: 0.0 });
        }
        if let Some(&phi) = turns.get(i) {
            if phi != 0.0 {
                let arc = turn_radius * phi.abs();
                pieces.push(Piece {
                    duration: arc / speed,
                    omega: phi.signum() * speed / turn_radius,
                });
            }
        }
    }
    let mut ends = Vec::with_capacity(pieces.len());
    let mut t = 0.0;
    for p in &pieces {
        t += p.duration;
        ends.push(t);
    }
    Ok(Schedule {
        start: Pose2::from_translation(waypoints[0], headings[0]),
        pieces,
        ends,
    })
}

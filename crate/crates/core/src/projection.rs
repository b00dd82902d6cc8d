//! Scan points placed in UTM through optimized poses, and their raster.

use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{MapOrigin, Point2};
use crate::graph::{GraphError, PoseGraph, VertexId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub x: f64,
    pub y: f64,
    /// Unitless, in `[0, 1]`.
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanFrame {
    pub pose: VertexId,
    /// Sensor frame, already flattened to the horizontal plane.
    pub points: Vec<ScanPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalPoint {
    pub easting: f64,
    pub northing: f64,
    pub intensity: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("no points to rasterize")]
    Empty,
    #[error("cell size must be positive and finite, got {0}")]
    CellSize(f64),
    #[error("point {index} is not finite or has intensity outside [0, 1]")]
    InvalidPoint { index: usize },
    #[error("raster of {width}x{height} cells is too large")]
    TooLarge { width: u64, height: u64 },
}

/// Transforms every scan point by its pose and into UTM, keeping input order.
pub fn project_scans(
    graph: &PoseGraph,
    scans: &[ScanFrame],
    origin: &MapOrigin,
) -> Result<Vec<GlobalPoint>, ProjectionError> {
    let mut out = Vec::with_capacity(scans.iter().map(|s| s.points.len()).sum());
    for scan in scans {
        let pose = graph.pose(scan.pose)?;
        for p in &scan.points {
            let q = origin.map_to_utm(&pose.transform_point(&Point2::new(p.x, p.y)));
            out.push(GlobalPoint {
                easting: q.x,
                northing: q.y,
                intensity: p.intensity,
            });
        }
    }
    Ok(out)
}

/// Max-intensity grid, north-up. Row 0 is the northernmost row.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub cell_size: f64,
    /// UTM coordinate of the upper-left corner of cell `(0, 0)`.
    pub ul_easting: f64,
    pub ul_northing: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major; empty cells hold 0.
    pub cells: Vec<f64>,
    col0: i64,
    row0: i64,
}

const MAX_CELLS: u64 = 1 << 28;

impl Raster {
    /// `(column, row)` of the cell holding a UTM position, if inside.
    pub fn cell_of(&self, easting: f64, northing: f64) -> Option<(usize, usize)> {
        let col = (easting / self.cell_size).floor() as i64 - self.col0;
        let row = self.row0 - (northing / self.cell_size).floor() as i64;
        (col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height)
            .then_some((col as usize, row as usize))
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.cells[row * self.width + col]
    }

    /// Plain (ASCII) greymap with intensities scaled to 0..=255.
    pub fn to_pgm(&self) -> String {
        let mut s = format!("P2\n{} {}\n255\n", self.width, self.height);
        for row in self.cells.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| ((v * 255.0).round() as u8).to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    /// Georeference sidecar: `cell_size,ul_easting,ul_northing,width,height`.
    pub fn sidecar_csv(&self) -> String {
        let mut s = String::from("cell_size,ul_easting,ul_northing,width,height\n");
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            self.cell_size, self.ul_easting, self.ul_northing, self.width, self.height
        );
        s
    }
}

pub fn rasterize(points: &[GlobalPoint], cell_size: f64) -> Result<Raster, ProjectionError> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(ProjectionError::CellSize(cell_size));
    }
    if points.is_empty() {
        return Err(ProjectionError::Empty);
    }
    for (index, p) in points.iter().enumerate() {
        if !(p.easting.is_finite() && p.northing.is_finite() && (0.0..=1.0).contains(&p.intensity)) {
            return Err(ProjectionError::InvalidPoint { index });
        }
    }
    let cell = |v: f64| (v / cell_size).floor() as i64;
    let (mut c0, mut c1, mut r0, mut r1) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
    for p in points {
        let (c, r) = (cell(p.easting), cell(p.northing));
        c0 = c0.min(c);
        c1 = c1.max(c);
        r0 = r0.min(r);
        r1 = r1.max(r);
    }
    let (width, height) = ((c1 - c0 + 1) as u64, (r1 - r0 + 1) as u64);
    if width.saturating_mul(height) > MAX_CELLS {
        return Err(ProjectionError::TooLarge { width, height });
    }
    let mut raster = Raster {
        cell_size,
        ul_easting: c0 as f64 * cell_size,
        ul_northing: (r1 + 1) as f64 * cell_size,
        width: width as usize,
        height: height as usize,
        cells: vec![0.0; (width * height) as usize],
        col0: c0,
        row0: r1,
    };
    for p in points {
        let (col, row) = raster.cell_of(p.easting, p.northing).expect("extent covers every point");
        let v = &mut raster.cells[row * raster.width + col];
        *v = v.max(p.intensity);
    }
    Ok(raster)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn gp(e: f64, n: f64, i: f64) -> GlobalPoint {
        GlobalPoint {
            easting: e,
            northing: n,
            intensity: i,
        }
    }

    fn one_pose(p: Pose2) -> PoseGraph {
        let mut g = PoseGraph::new();
        g.add_pose(VertexId(0), p).unwrap();
        g
    }

    #[test]
    fn identity_pose_passes_points_through() {
        let scan = ScanFrame {
            pose: VertexId(0),
            points: vec![ScanPoint { x: 1.5, y: -2.0, intensity: 0.3 }],
        };
        let out = project_scans(&one_pose(Pose2::identity()), &[scan], &MapOrigin::default()).unwrap();
        assert_eq!(out, vec![gp(1.5, -2.0, 0.3)]);
    }

    #[test]
    fn quarter_turn_then_origin() {
        let origin = MapOrigin::new(1000.0, 2000.0, "56S");
        let scan = ScanFrame {
            pose: VertexId(0),
            points: vec![ScanPoint { x: 1.0, y: 0.0, intensity: 1.0 }],
        };
        let out = project_scans(&one_pose(Pose2::new(0.0, 0.0, FRAC_PI_2)), &[scan], &origin).unwrap();
        assert!((out[0].easting - 1000.0).abs() < 1e-12 && (out[0].northing - 2001.0).abs() < 1e-12);
    }

    #[test]
    fn missing_pose_is_structural_error() {
        let scan = ScanFrame { pose: VertexId(9), points: vec![] };
        assert_eq!(
            project_scans(&PoseGraph::new(), &[scan], &MapOrigin::default()),
            Err(ProjectionError::Graph(GraphError::MissingVertex(VertexId(9))))
        );
    }

    #[test]
    fn single_point_and_neighbors() {
        let r = rasterize(&[gp(10.2, 20.7, 0.4)], 1.0).unwrap();
        assert_eq!((r.width, r.height, r.cells.clone()), (1, 1, vec![0.4]));
        assert_eq!((r.ul_easting, r.ul_northing), (10.0, 21.0));
        let r = rasterize(&[gp(0.5, 0.5, 0.2), gp(1.5, 0.5, 0.9)], 1.0).unwrap();
        assert_eq!((r.width, r.height), (2, 1));
        assert_eq!(r.get(1, 0), 0.9);
        assert!(r.to_pgm().starts_with("P2\n2 1\n255\n51 230\n"));
        assert_eq!(r.sidecar_csv(), "cell_size,ul_easting,ul_northing,width,height\n1,0,1,2,1\n");
        assert_eq!(rasterize(&[], 1.0), Err(ProjectionError::Empty));
        assert!(matches!(rasterize(&[gp(0.0, 0.0, 0.5)], 0.0), Err(ProjectionError::CellSize(_))));
    }

    proptest! {
        #[test]
        fn cells_match_floor_division(
            pts in prop::collection::vec((-500.0..500.0f64, -500.0..500.0f64, 0.0..=1.0f64), 1..60),
            cell in 0.1..20.0f64,
        ) {
            let points: Vec<GlobalPoint> = pts.iter().map(|&(e, n, i)| gp(e + 334_000.0, n + 6_250_000.0, i)).collect();
            let r = rasterize(&points, cell).unwrap();
            let min_c = points.iter().map(|p| (p.easting / cell).floor() as i64).min().unwrap();
            let max_r = points.iter().map(|p| (p.northing / cell).floor() as i64).max().unwrap();
            for p in &points {
                let (col, row) = r.cell_of(p.easting, p.northing).unwrap();
                prop_assert_eq!(col as i64, (p.easting / cell).floor() as i64 - min_c);
                prop_assert_eq!(row as i64, max_r - (p.northing / cell).floor() as i64);
                // the point lies inside its cell's bounds
                let left = r.ul_easting + col as f64 * cell;
                let top = r.ul_northing - row as f64 * cell;
                let tol = 1e-9 * p.northing.abs();
                prop_assert!(p.easting >= left - tol && p.easting <= left + cell + tol);
                prop_assert!(p.northing <= top + tol && p.northing >= top - cell - tol);
                prop_assert!(r.get(col, row) >= p.intensity);
            }
        }

        #[test]
        fn projection_matches_matrix_oracle_and_is_isometric(
            x in -100.0..100.0f64, y in -100.0..100.0f64, th in -PI..PI,
            pts in prop::collection::vec((-30.0..30.0f64, -30.0..30.0f64), 2..20),
        ) {
            let pose = Pose2::new(x, y, th);
            let origin = MapOrigin::new(500.0, -70.0, "56S");
            let scan = ScanFrame {
                pose: VertexId(0),
                points: pts.iter().map(|&(x, y)| ScanPoint { x, y, intensity: 0.5 }).collect(),
            };
            let out = project_scans(&one_pose(pose), std::slice::from_ref(&scan), &origin).unwrap();
            let m = pose.to_matrix();
            for (p, q) in scan.points.iter().zip(&out) {
                let h = m * nalgebra::Vector3::new(p.x, p.y, 1.0);
                prop_assert!((h.x + 500.0 - q.easting).abs() < 1e-9);
                prop_assert!((h.y - 70.0 - q.northing).abs() < 1e-9);
            }
            for i in 1..out.len() {
                let d_in = (scan.points[i].x - scan.points[0].x).hypot(scan.points[i].y - scan.points[0].y);
                let d_out = (out[i].easting - out[0].easting).hypot(out[i].northing - out[0].northing);
                prop_assert!((d_in - d_out).abs() < 1e-9);
            }
        }
    }
}

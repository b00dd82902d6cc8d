//! CSV tables exchanged between pipeline stages.
//!
//! Every table has a fixed header row; columns are matched by name and order.
//! Lines starting with `#` are ignored and fields are trimmed. Floats are
//! written in shortest round-trip form.
//!
//! | table      | columns                                                                     | frame |
//! |------------|-----------------------------------------------------------------------------|-------|
//! | gps        | `t,easting,northing,sigma`                                                  | UTM   |
//! | odom       | `t,v,omega`                                                                 |       |
//! | path       | `t,x,y,theta`                                                               | map   |
//! | decisions  | `t,easting,northing,d2,threshold,accepted`                                  | UTM   |
//! | labels     | `pole_id,easting,northing`                                                  | UTM   |
//! | truth      | `kind,id,easting,northing,theta` (`kind` is `pose` or `landmark`)           | UTM   |
//! | poses      | `pose_id,t`                                                                 |       |
//! | scans      | `pose_id,x,y,intensity`                                                     | sensor|
//! | points     | `easting,northing,intensity`                                                | UTM   |
//! | curve      | `n,combos,mean_err,stddev,failures`                                         |       |
//! | residuals  | `landmark_id,label_easting,label_northing,est_easting,est_northing,error`   | UTM   |
//!
//! A gps `sigma` of 0 means "use the configured default". Landmark rows of
//! the truth table leave `theta` empty.

use std::str::FromStr;

use csv::{ReaderBuilder, StringRecord, Trim, WriterBuilder};
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::eval::{CurveRow, LandmarkResidual};
use crate::filter::{GateDecision, GpsFix, OdomSample};
use crate::geometry::{MapOrigin, Point2, Pose2};
use crate::graph::VertexId;
use crate::projection::{GlobalPoint, ScanFrame, ScanPoint};

/// Position of a malformed value. `column` is the 1-based field index.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}, column {column}: {message}")]
pub struct TableError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

pub const GPS_HEADER: &[&str] = &["t", "easting", "northing", "sigma"];
pub const ODOM_HEADER: &[&str] = &["t", "v", "omega"];
pub const PATH_HEADER: &[&str] = &["t", "x", "y", "theta"];
pub const DECISIONS_HEADER: &[&str] = &["t", "easting", "northing", "d2", "threshold", "accepted"];
pub const LABELS_HEADER: &[&str] = &["pole_id", "easting", "northing"];
pub const TRUTH_HEADER: &[&str] = &["kind", "id", "easting", "northing", "theta"];
pub const POSES_HEADER: &[&str] = &["pose_id", "t"];
pub const SCANS_HEADER: &[&str] = &["pose_id", "x", "y", "intensity"];
pub const POINTS_HEADER: &[&str] = &["easting", "northing", "intensity"];
pub const CURVE_HEADER: &[&str] = &["n", "combos", "mean_err", "stddev", "failures"];
pub const RESIDUALS_HEADER: &[&str] = &[
    "landmark_id",
    "label_easting",
    "label_northing",
    "est_easting",
    "est_northing",
    "error",
];

struct Row {
    line: usize,
    record: StringRecord,
}

impl Row {
    fn error(&self, column: usize, message: impl Into<String>) -> TableError {
        TableError {
            line: self.line,
            column: column + 1,
            message: message.into(),
        }
    }

    fn raw(&self, i: usize) -> &str {
        self.record.get(i).unwrap_or("")
    }

    fn parse<T: FromStr>(&self, i: usize, what: &str) -> Result<T, TableError> {
        let s = self.raw(i);
        s.parse().map_err(|_| self.error(i, format!("invalid {what} '{s}'")))
    }

    fn f64(&self, i: usize) -> Result<f64, TableError> {
        let v: f64 = self.parse(i, "number")?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.error(i, format!("non-finite value '{}'", self.raw(i))))
        }
    }
}

fn read(text: &str, header: &[&str]) -> Result<Vec<Row>, TableError> {
    let mut reader = ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut seen_header = false;
    for result in reader.records() {
        let record = result.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            TableError {
                line,
                column: 1,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if !seen_header {
            for (i, want) in header.iter().enumerate() {
                if record.get(i) != Some(*want) {
                    return Err(TableError {
                        line,
                        column: i + 1,
                        message: format!("expected header {}", header.join(",")),
                    });
                }
            }
            if record.len() != header.len() {
                return Err(TableError {
                    line,
                    column: header.len() + 1,
                    message: format!("expected header {}", header.join(",")),
                });
            }
            seen_header = true;
            continue;
        }
        if record.len() != header.len() {
            return Err(TableError {
                line,
                column: record.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        rows.push(Row { line, record });
    }
    if !seen_header {
        return Err(TableError {
            line: 1,
            column: 1,
            message: format!("missing header {}", header.join(",")),
        });
    }
    Ok(rows)
}

fn write<I>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("fields are UTF-8")
}

fn f(v: f64) -> String {
    v.to_string()
}

pub fn read_gps(text: &str) -> Result<Vec<GpsFix>, TableError> {
    read(text, GPS_HEADER)?
        .iter()
        .map(|r| {
            let sigma = r.f64(3)?;
            if sigma < 0.0 {
                return Err(r.error(3, "sigma must not be negative"));
            }
            Ok(GpsFix {
                t: r.f64(0)?,
                easting: r.f64(1)?,
                northing: r.f64(2)?,
                nominal_sigma: sigma,
            })
        })
        .collect()
}

pub fn write_gps(fixes: &[GpsFix]) -> String {
    write(
        GPS_HEADER,
        fixes
            .iter()
            .map(|x| vec![f(x.t), f(x.easting), f(x.northing), f(x.nominal_sigma)]),
    )
}

pub fn read_odom(text: &str) -> Result<Vec<OdomSample>, TableError> {
    read(text, ODOM_HEADER)?
        .iter()
        .map(|r| {
            Ok(OdomSample {
                t: r.f64(0)?,
                v: r.f64(1)?,
                omega: r.f64(2)?,
            })
        })
        .collect()
}

pub fn write_odom(samples: &[OdomSample]) -> String {
    write(ODOM_HEADER, samples.iter().map(|s| vec![f(s.t), f(s.v), f(s.omega)]))
}

pub fn read_path(text: &str) -> Result<Vec<(f64, Pose2)>, TableError> {
    read(text, PATH_HEADER)?
        .iter()
        .map(|r| Ok((r.f64(0)?, Pose2::new(r.f64(1)?, r.f64(2)?, r.f64(3)?))))
        .collect()
}

pub fn write_path(path: &[(f64, Pose2)]) -> String {
    write(
        PATH_HEADER,
        path.iter().map(|(t, p)| vec![f(*t), f(p.x), f(p.y), f(p.theta())]),
    )
}

/// Reads gate decisions; the fix `sigma` is not stored and comes back as 0.
pub fn read_decisions(text: &str) -> Result<Vec<GateDecision>, TableError> {
    read(text, DECISIONS_HEADER)?
        .iter()
        .map(|r| {
            let accepted = match r.raw(5) {
                "true" | "1" => true,
                "false" | "0" => false,
                other => return Err(r.error(5, format!("invalid boolean '{other}'"))),
            };
            Ok(GateDecision {
                fix: GpsFix {
                    t: r.f64(0)?,
                    easting: r.f64(1)?,
                    northing: r.f64(2)?,
                    nominal_sigma: 0.0,
                },
                mahalanobis_sq: r.f64(3)?,
                threshold: r.f64(4)?,
                accepted,
            })
        })
        .collect()
}

pub fn write_decisions(decisions: &[GateDecision]) -> String {
    write(
        DECISIONS_HEADER,
        decisions.iter().map(|d| {
            vec![
                f(d.fix.t),
                f(d.fix.easting),
                f(d.fix.northing),
                f(d.mahalanobis_sq),
                f(d.threshold),
                d.accepted.to_string(),
            ]
        }),
    )
}

pub fn read_labels(text: &str) -> Result<Vec<(u32, Point2)>, TableError> {
    read(text, LABELS_HEADER)?
        .iter()
        .map(|r| Ok((r.parse(0, "pole id")?, Point2::new(r.f64(1)?, r.f64(2)?))))
        .collect()
}

pub fn write_labels(labels: &[(u32, Point2)]) -> String {
    write(
        LABELS_HEADER,
        labels.iter().map(|(id, p)| vec![id.to_string(), f(p.x), f(p.y)]),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruthRow {
    Pose(VertexId, Pose2),
    Landmark(VertexId, Point2),
}

pub fn read_truth(text: &str) -> Result<Vec<TruthRow>, TableError> {
    read(text, TRUTH_HEADER)?
        .iter()
        .map(|r| {
            let id = VertexId(r.parse(1, "vertex id")?);
            let (e, n) = (r.f64(2)?, r.f64(3)?);
            match r.raw(0) {
                "pose" => Ok(TruthRow::Pose(id, Pose2::new(e, n, r.f64(4)?))),
                "landmark" if r.raw(4).is_empty() => Ok(TruthRow::Landmark(id, Point2::new(e, n))),
                "landmark" => Err(r.error(4, "landmark rows have no theta")),
                other => Err(r.error(0, format!("unknown kind '{other}'"))),
            }
        })
        .collect()
}

pub fn write_truth(rows: &[TruthRow]) -> String {
    write(
        TRUTH_HEADER,
        rows.iter().map(|row| match row {
            TruthRow::Pose(id, p) => vec!["pose".into(), id.0.to_string(), f(p.x), f(p.y), f(p.theta())],
            TruthRow::Landmark(id, q) => vec!["landmark".into(), id.0.to_string(), f(q.x), f(q.y), String::new()],
        }),
    )
}

pub fn read_pose_times(text: &str) -> Result<Vec<(VertexId, f64)>, TableError> {
    read(text, POSES_HEADER)?
        .iter()
        .map(|r| Ok((VertexId(r.parse(0, "pose id")?), r.f64(1)?)))
        .collect()
}

pub fn write_pose_times(rows: &[(VertexId, f64)]) -> String {
    write(POSES_HEADER, rows.iter().map(|(id, t)| vec![id.0.to_string(), f(*t)]))
}

/// Groups consecutive rows with the same pose id into one frame.
pub fn read_scans(text: &str) -> Result<Vec<ScanFrame>, TableError> {
    let mut frames: Vec<ScanFrame> = Vec::new();
    for r in read(text, SCANS_HEADER)? {
        let pose = VertexId(r.parse(0, "pose id")?);
        let intensity = r.f64(3)?;
        if !(0.0..=1.0).contains(&intensity) {
            return Err(r.error(3, "intensity must lie in [0, 1]"));
        }
        let point = ScanPoint {
            x: r.f64(1)?,
            y: r.f64(2)?,
            intensity,
        };
        match frames.last_mut() {
            Some(frame) if frame.pose == pose => frame.points.push(point),
            _ => frames.push(ScanFrame {
                pose,
                points: vec![point],
            }),
        }
    }
    Ok(frames)
}

pub fn write_scans(frames: &[ScanFrame]) -> String {
    write(
        SCANS_HEADER,
        frames.iter().flat_map(|s| {
            s.points
                .iter()
                .map(move |p| vec![s.pose.0.to_string(), f(p.x), f(p.y), f(p.intensity)])
        }),
    )
}

pub fn write_points(points: &[GlobalPoint]) -> String {
    write(
        POINTS_HEADER,
        points.iter().map(|p| vec![f(p.easting), f(p.northing), f(p.intensity)]),
    )
}

pub fn write_curve(rows: &[CurveRow]) -> String {
    write(
        CURVE_HEADER,
        rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.combinations.to_string(),
                f(r.mean_error),
                f(r.stddev),
                r.failures.to_string(),
            ]
        }),
    )
}

/// Residuals are stored in the map frame and written in UTM.
pub fn write_residuals(rows: &[LandmarkResidual], origin: &MapOrigin) -> String {
    write(
        RESIDUALS_HEADER,
        rows.iter().map(|r| {
            let (l, e) = (origin.map_to_utm(&r.label), origin.map_to_utm(&r.estimate));
            vec![r.landmark.0.to_string(), f(l.x), f(l.y), f(e.x), f(e.y), f(r.error)]
        }),
    )
}

/// `origin_easting`, `origin_northing` and `zone` as key=value lines.
pub fn write_origin(origin: &MapOrigin) -> String {
    format!(
        "origin_easting = {}\norigin_northing = {}\nzone = {}\n",
        origin.easting_offset, origin.northing_offset, origin.zone_label
    )
}

pub fn read_origin(text: &str) -> Result<MapOrigin, ConfigError> {
    let kv = KeyValues::parse(text)?;
    let mut origin = MapOrigin::default();
    kv.set("origin_easting", &mut origin.easting_offset)?;
    kv.set("origin_northing", &mut origin.northing_offset)?;
    kv.set("zone", &mut origin.zone_label)?;
    kv.reject_unused()?;
    if !(origin.easting_offset.is_finite() && origin.northing_offset.is_finite()) {
        return Err(ConfigError::value("origin_easting", "offsets must be finite"));
    }
    Ok(origin)
}

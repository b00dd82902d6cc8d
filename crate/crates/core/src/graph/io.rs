//! Line-oriented text format for pose graphs (a g2o-style dialect).
//!
//! ```text
//! VERTEX_SE2 id x y theta
//! VERTEX_XY id x y [kind]
//! FIX id
//! EDGE_SE2 from to dx dy dtheta i11 i12 i13 i22 i23 i33
//! EDGE_SE2_XY pose landmark mx my i11 i12 i22
//! EDGE_PRIOR_XY pose mx my i11 i12 i22
//! EDGE_ANCHOR_XY landmark mx my i11 i12 i22
//! ```
//!
//! Tokens are whitespace separated and `#` starts a comment. Numbers are
//! written with 17 significant digits so that a write/read cycle is exact.

use std::fmt::Write as _;

use nalgebra::{Matrix2, Matrix3};
use thiserror::Error;

use super::{Edge, GraphError, Info2, Info3, LandmarkKind, PoseGraph, Vertex, VertexId};
use crate::geometry::{Point2, Pose2};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

struct Tokens<'a> {
    line: usize,
    items: Vec<(usize, &'a str)>,
    cursor: usize,
    end_column: usize,
}

impl<'a> Tokens<'a> {
    fn new(line: usize, text: &'a str) -> Self {
        let mut items = Vec::new();
        let mut start = None;
        for (i, ch) in text.char_indices() {
            if ch.is_whitespace() {
                if let Some(s) = start.take() {
                    items.push((s + 1, &text[s..i]));
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            items.push((s + 1, &text[s..]));
        }
        Self {
            line,
            items,
            cursor: 0,
            end_column: text.len() + 1,
        }
    }

    fn error(&self, column: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            column,
            message: message.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), ParseError> {
        let item = self
            .items
            .get(self.cursor)
            .copied()
            .ok_or_else(|| self.error(self.end_column, format!("missing {what}")))?;
        self.cursor += 1;
        Ok(item)
    }

    fn number(&mut self, what: &str) -> Result<f64, ParseError> {
        let (col, tok) = self.next(what)?;
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.error(col, format!("invalid {what} '{tok}'"))),
        }
    }

    fn id(&mut self, what: &str) -> Result<(usize, VertexId), ParseError> {
        let (col, tok) = self.next(what)?;
        tok.parse::<u64>()
            .map(|v| (col, VertexId(v)))
            .map_err(|_| self.error(col, format!("invalid {what} '{tok}'")))
    }

    fn finish(&self) -> Result<(), ParseError> {
        match self.items.get(self.cursor) {
            Some((col, tok)) => Err(self.error(*col, format!("unexpected token '{tok}'"))),
            None => Ok(()),
        }
    }

    fn info2(&mut self) -> Result<Info2, ParseError> {
        let col = self.items.get(self.cursor).map_or(self.end_column, |t| t.0);
        let (a, b, c) = (
            self.number("i11")?,
            self.number("i12")?,
            self.number("i22")?,
        );
        Info2::new(Matrix2::new(a, b, b, c)).map_err(|e| self.error(col, e.to_string()))
    }

    fn info3(&mut self) -> Result<Info3, ParseError> {
        let col = self.items.get(self.cursor).map_or(self.end_column, |t| t.0);
        let mut u = [0.0; 6];
        for (slot, name) in u.iter_mut().zip(["i11", "i12", "i13", "i22", "i23", "i33"]) {
            *slot = self.number(name)?;
        }
        Info3::new(Matrix3::new(
            u[0], u[1], u[2], u[1], u[3], u[4], u[2], u[4], u[5],
        ))
        .map_err(|e| self.error(col, e.to_string()))
    }
}

/// Parses a graph from text. Errors carry 1-based line and column.
pub fn read_graph(text: &str) -> Result<PoseGraph, ParseError> {
    let mut graph = PoseGraph::new();
    for (n, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let mut t = Tokens::new(n + 1, content);
        let Some(&(tag_col, tag)) = t.items.first() else {
            continue;
        };
        t.cursor = 1;
        let structural = |t: &Tokens, col: usize, e: GraphError| t.error(col, e.to_string());
        match tag {
            "VERTEX_SE2" => {
                let (col, id) = t.id("vertex id")?;
                let p = Pose2::new(t.number("x")?, t.number("y")?, t.number("theta")?);
                t.finish()?;
                graph.add_pose(id, p).map_err(|e| structural(&t, col, e))?;
            }
            "VERTEX_XY" => {
                let (col, id) = t.id("vertex id")?;
                let p = Point2::new(t.number("x")?, t.number("y")?);
                let kind = match t.items.get(t.cursor) {
                    Some(&(kcol, tok)) => {
                        t.cursor += 1;
                        LandmarkKind::parse(tok)
                            .ok_or_else(|| t.error(kcol, format!("unknown landmark kind '{tok}'")))?
                    }
                    None => LandmarkKind::default(),
                };
                t.finish()?;
                graph
                    .add_landmark(id, p, kind)
                    .map_err(|e| structural(&t, col, e))?;
            }
            "FIX" => {
                let (col, id) = t.id("vertex id")?;
                t.finish()?;
                graph
                    .set_fixed(id, true)
                    .map_err(|e| structural(&t, col, e))?;
            }
            "EDGE_SE2" => {
                let (col, from) = t.id("from id")?;
                let (_, to) = t.id("to id")?;
                let meas = Pose2::new(t.number("dx")?, t.number("dy")?, t.number("dtheta")?);
                let info = t.info3()?;
                t.finish()?;
                graph
                    .add_edge(Edge::RelPose {
                        from,
                        to,
                        meas,
                        info,
                    })
                    .map_err(|e| structural(&t, col, e))?;
            }
            "EDGE_SE2_XY" => {
                let (col, pose) = t.id("pose id")?;
                let (_, landmark) = t.id("landmark id")?;
                let meas = Point2::new(t.number("mx")?, t.number("my")?);
                let info = t.info2()?;
                t.finish()?;
                graph
                    .add_edge(Edge::LandmarkObs {
                        pose,
                        landmark,
                        meas,
                        info,
                    })
                    .map_err(|e| structural(&t, col, e))?;
            }
            "EDGE_PRIOR_XY" => {
                let (col, pose) = t.id("pose id")?;
                let meas = Point2::new(t.number("mx")?, t.number("my")?);
                let info = t.info2()?;
                t.finish()?;
                graph
                    .add_edge(Edge::GpsPrior { pose, meas, info })
                    .map_err(|e| structural(&t, col, e))?;
            }
            "EDGE_ANCHOR_XY" => {
                let (col, landmark) = t.id("landmark id")?;
                let meas = Point2::new(t.number("mx")?, t.number("my")?);
                let info = t.info2()?;
                t.finish()?;
                graph
                    .add_edge(Edge::AnchorPrior {
                        landmark,
                        meas,
                        info,
                    })
                    .map_err(|e| structural(&t, col, e))?;
            }
            other => return Err(t.error(tag_col, format!("unknown record '{other}'"))),
        }
    }
    Ok(graph)
}

fn num(out: &mut String, v: f64) {
    let _ = write!(out, " {v:.16e}");
}

fn info2(out: &mut String, i: &Info2) {
    let m = i.matrix();
    for v in [m[(0, 0)], m[(0, 1)], m[(1, 1)]] {
        num(out, v);
    }
}

/// Serializes vertices (insertion order), then `FIX` records, then edges.
pub fn write_graph(graph: &PoseGraph) -> String {
    let mut out = String::new();
    for v in graph.vertices() {
        match v {
            Vertex::Pose { id, estimate, .. } => {
                let _ = write!(out, "VERTEX_SE2 {id}");
                for x in [estimate.x, estimate.y, estimate.theta()] {
                    num(&mut out, x);
                }
            }
            Vertex::Landmark {
                id, estimate, kind, ..
            } => {
                let _ = write!(out, "VERTEX_XY {id}");
                num(&mut out, estimate.x);
                num(&mut out, estimate.y);
                let _ = write!(out, " {}", kind.as_str());
            }
        }
        out.push('\n');
    }
    for v in graph.vertices().iter().filter(|v| v.is_fixed()) {
        let _ = writeln!(out, "FIX {}", v.id());
    }
    for e in graph.edges() {
        match e {
            Edge::RelPose {
                from,
                to,
                meas,
                info,
            } => {
                let _ = write!(out, "EDGE_SE2 {from} {to}");
                for x in [meas.x, meas.y, meas.theta()] {
                    num(&mut out, x);
                }
                let m = info.matrix();
                for x in [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 1)], m[(1, 2)], m[(2, 2)]] {
                    num(&mut out, x);
                }
            }
            Edge::LandmarkObs {
                pose,
                landmark,
                meas,
                info,
            } => {
                let _ = write!(out, "EDGE_SE2_XY {pose} {landmark}");
                num(&mut out, meas.x);
                num(&mut out, meas.y);
                info2(&mut out, info);
            }
            Edge::GpsPrior { pose, meas, info } => {
                let _ = write!(out, "EDGE_PRIOR_XY {pose}");
                num(&mut out, meas.x);
                num(&mut out, meas.y);
                info2(&mut out, info);
            }
            Edge::AnchorPrior {
                landmark,
                meas,
                info,
            } => {
                let _ = write!(out, "EDGE_ANCHOR_XY {landmark}");
                num(&mut out, meas.x);
                num(&mut out, meas.y);
                info2(&mut out, info);
            }
        }
        out.push('\n');
    }
    out
}

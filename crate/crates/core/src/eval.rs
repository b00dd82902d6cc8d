//! Leave-n-out accuracy of anchored maps against aerial labels.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::Point2;
use crate::graph::{
    attach_anchor_priors, optimize, GraphError, OptimizeConfig, PoseGraph, VertexId, DEFAULT_ANCHOR_SIGMA,
};

/// Default label-to-landmark association radius, meters.
pub const DEFAULT_MATCH_RADIUS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelMatch {
    pub landmark: VertexId,
    /// Index into the label list given to [`match_labels`].
    pub label_index: usize,
    pub label: Point2,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// Sorted by label index.
    pub pairs: Vec<LabelMatch>,
    pub unmatched_labels: Vec<usize>,
}

fn nearest(from: &Point2, to: impl Iterator<Item = Point2>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in to.enumerate() {
        let d = from.distance(&p);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best
}

/// Mutual nearest neighbors between labels and landmark estimates within
/// `radius`. Ties go to the earlier landmark or label.
pub fn match_labels(graph: &PoseGraph, labels: &[Point2], radius: f64) -> Matching {
    let landmarks: Vec<(VertexId, Point2)> = graph.landmarks().collect();
    let mut out = Matching::default();
    for (li, label) in labels.iter().enumerate() {
        let paired = nearest(label, landmarks.iter().map(|(_, p)| *p)).and_then(|(k, d)| {
            let back = nearest(&landmarks[k].1, labels.iter().copied()).map(|(j, _)| j);
            (d <= radius && back == Some(li)).then_some(k)
        });
        match paired {
            Some(k) => out.pairs.push(LabelMatch {
                landmark: landmarks[k].0,
                label_index: li,
                label: *label,
            }),
            None => out.unmatched_labels.push(li),
        }
    }
    out
}

/// Ray-casting point-in-polygon test; vertices in order, closing edge
/// implied.
pub fn point_in_polygon(p: &Point2, polygon: &[Point2]) -> bool {
    let mut inside = false;
    let n = polygon.len();
    for i in 0..n {
        let (a, b) = (polygon[i], polygon[(i + n - 1) % n]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
    }
    inside
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub n_values: Vec<usize>,
    pub max_combinations: usize,
    pub sample_seed: u64,
    pub anchor_sigma: f64,
    pub match_radius: f64,
    /// Keep only matches whose label lies inside this polygon (map frame).
    pub region_filter: Option<Vec<Point2>>,
    /// Sample subsets even when enumeration would fit under the cap.
    pub force_sampling: bool,
    pub optimize: OptimizeConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_values: vec![0, 1, 2, 3, 5, 10, 20, 30, 40],
            max_combinations: 1000,
            sample_seed: 0,
            anchor_sigma: DEFAULT_ANCHOR_SIGMA,
            match_radius: DEFAULT_MATCH_RADIUS,
            region_filter: None,
            force_sampling: false,
            optimize: OptimizeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub n: usize,
    pub combinations: usize,
    pub failures: usize,
    /// Mean over combinations of the mean held-out error.
    pub mean_error: f64,
    /// Sample standard deviation of the per-combination means.
    pub stddev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkResidual {
    pub landmark: VertexId,
    pub label: Point2,
    pub estimate: Point2,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<CurveRow>,
    /// Every match anchored at once.
    pub residuals: Vec<LandmarkResidual>,
    pub residual_failure: Option<GraphError>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no labels matched a landmark")]
    NoMatches,
    #[error("n = {n} leaves no held-out label among {matched} matches")]
    NTooLarge { n: usize, matched: usize },
    #[error("max_combinations must be at least 1")]
    ZeroCombinations,
    #[error("anchor sigma must be positive, got {0}")]
    InvalidSigma(f64),
}

/// `C(m, n)`, saturating at `cap + 1`.
pub fn binomial_capped(m: usize, n: usize, cap: usize) -> usize {
    if n > m {
        return 0;
    }
    let n = n.min(m - n);
    let mut c: u128 = 1;
    for i in 0..n {
        c = c * (m - i) as u128 / (i + 1) as u128;
        if c > cap as u128 {
            return cap + 1;
        }
    }
    c as usize
}

/// All `n`-subsets of `0..m` in lexicographic order.
fn enumerate_subsets(m: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..n).rev().find(|&i| idx[i] < m - n + i) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// `count` distinct uniformly drawn `n`-subsets, in lexicographic order.
fn sample_subsets(m: usize, n: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    let mut seen = BTreeSet::new();
    while seen.len() < count {
        let mut s = sample(&mut rng, m, n).into_vec();
        s.sort_unstable();
        seen.insert(s);
    }
    seen.into_iter().collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean distance of the matches outside `anchored` to their labels after
/// anchoring the others and optimizing a copy of `graph`.
fn holdout_error(
    graph: &PoseGraph,
    matched: &[LabelMatch],
    anchored: &[usize],
    config: &EvalConfig,
) -> Result<f64, GraphError> {
    let mut g = graph.clone();
    let anchors: Vec<(VertexId, Point2)> = anchored.iter().map(|&i| (matched[i].landmark, matched[i].label)).collect();
    attach_anchor_priors(&mut g, &anchors, config.anchor_sigma)?;
    optimize(&mut g, &config.optimize)?;
    let mut total = 0.0;
    let mut count = 0usize;
    let mut a = anchored.iter().peekable();
    for (i, m) in matched.iter().enumerate() {
        if a.peek() == Some(&&i) {
            a.next();
            continue;
        }
        total += g.landmark(m.landmark)?.distance(&m.label);
        count += 1;
    }
    Ok(total / count as f64)
}

/// Accuracy-versus-anchor-count curve. `graph` is never modified.
pub fn evaluate_curve(graph: &PoseGraph, matched: &[LabelMatch], config: &EvalConfig) -> Result<EvalReport, EvalError> {
    if config.max_combinations == 0 {
        return Err(EvalError::ZeroCombinations);
    }
    if !(config.anchor_sigma > 0.0) {
        return Err(EvalError::InvalidSigma(config.anchor_sigma));
    }
    let matched: Vec<LabelMatch> = match &config.region_filter {
        Some(poly) => matched.iter().copied().filter(|m| point_in_polygon(&m.label, poly)).collect(),
        None => matched.to_vec(),
    };
    if matched.is_empty() {
        return Err(EvalError::NoMatches);
    }
    let m = matched.len();
    if let Some(&n) = config.n_values.iter().find(|&&n| n >= m) {
        return Err(EvalError::NTooLarge { n, matched: m });
    }

    let mut rows = Vec::with_capacity(config.n_values.len());
    for &n in &config.n_values {
        let total = binomial_capped(m, n, config.max_combinations);
        let subsets = if total <= config.max_combinations && !config.force_sampling {
            enumerate_subsets(m, n)
        } else {
            sample_subsets(m, n, total.min(config.max_combinations), config.sample_seed)
        };
        let mut errors = Vec::with_capacity(subsets.len());
        let mut failures = 0;
        for s in &subsets {
            match holdout_error(graph, &matched, s, config) {
                Ok(e) => errors.push(e),
                Err(_) => failures += 1,
            }
        }
        let (mean_error, stddev) = mean_std(&errors);
        rows.push(CurveRow {
            n,
            combinations: errors.len(),
            failures,
            mean_error,
            stddev,
        });
    }

    let mut g = graph.clone();
    let anchors: Vec<(VertexId, Point2)> = matched.iter().map(|m| (m.landmark, m.label)).collect();
    let full = attach_anchor_priors(&mut g, &anchors, config.anchor_sigma)
        .and_then(|_| optimize(&mut g, &config.optimize));
    let (residuals, residual_failure) = match full {
        Ok(_) => (
            matched
                .iter()
                .map(|m| {
                    let estimate = g.landmark(m.landmark).expect("matched landmark exists");
                    LandmarkResidual {
                        landmark: m.landmark,
                        label: m.label,
                        estimate,
                        error: estimate.distance(&m.label),
                    }
                })
                .collect(),
            None,
        ),
        Err(e) => (Vec::new(), Some(e)),
    };
    Ok(EvalReport {
        rows,
        residuals,
        residual_failure,
    })
}

use std::path::{Path, PathBuf};

use georeg_core::align::{build_correspondences, build_gated_correspondences, fit_se2};
use georeg_core::config::KeyValues;
use georeg_core::eval::{evaluate_curve, match_labels};
use georeg_core::graph::{optimize, read_graph, write_graph, OptimizeReport};
use georeg_core::pipeline::{
    filter_gps, prior_measurements, register_with_anchors, register_with_gps, GpsRegistration,
};
use georeg_core::projection::{project_scans, rasterize, ScanFrame, ScanPoint};
use georeg_core::sim::{generate, SimConfig};
use georeg_core::tables::{self, TruthRow};
use georeg_core::{GpsFix, MapOrigin, Point2, Pose2, PoseGraph};
use serde::Serialize;

use crate::error::{CliError, ErrorKind};
use crate::files::Session;
use crate::settings::{eval_config, snapshot_eval, FilterSettings, OptimizeSettings};
use crate::{
    AlignRigidArgs, Command, EvaluateArgs, FilterGpsArgs, ManifestArg, OptimizeArgs, ProjectArgs, SimulateArgs,
};

pub fn run(command: Command, args: Vec<String>) -> Result<(), CliError> {
    let mut s = Session::default();
    let (name, manifest, first_output) = match &command {
        Command::Simulate(a) => ("simulate", &a.manifest, a.out.join("graph.txt")),
        Command::FilterGps(a) => ("filter-gps", &a.manifest, a.out_path.clone()),
        Command::AlignRigid(a) => ("align-rigid", &a.manifest, a.out.clone()),
        Command::Optimize(a) => ("optimize", &a.manifest, a.out.clone()),
        Command::Evaluate(a) => ("evaluate", &a.manifest, a.out_curve.clone()),
        Command::Project(a) => ("project", &a.manifest, a.out_points.clone()),
    };
    let manifest = manifest_path(manifest, &first_output);
    match &command {
        Command::Simulate(a) => simulate(&mut s, a)?,
        Command::FilterGps(a) => filter(&mut s, a)?,
        Command::AlignRigid(a) => align(&mut s, a)?,
        Command::Optimize(a) => optimize_cmd(&mut s, a)?,
        Command::Evaluate(a) => evaluate(&mut s, a)?,
        Command::Project(a) => project(&mut s, a)?,
    }
    s.append_manifest(&manifest, name, args)
}

fn manifest_path(arg: &ManifestArg, first_output: &Path) -> PathBuf {
    arg.manifest.clone().unwrap_or_else(|| {
        first_output
            .parent()
            .unwrap_or(Path::new(""))
            .join("manifest.jsonl")
    })
}

fn key_values(s: &mut Session, path: Option<&PathBuf>) -> Result<KeyValues, CliError> {
    match path {
        Some(p) => {
            let text = s.read(p)?;
            KeyValues::parse(&text).map_err(|e| CliError::config(Some(p), e))
        }
        None => Ok(KeyValues::default()),
    }
}

fn override_opt<T: ToString>(kv: &mut KeyValues, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        kv.insert(key, v.to_string());
    }
}

fn load_graph(s: &mut Session, path: &Path) -> Result<PoseGraph, CliError> {
    let text = s.read(path)?;
    read_graph(&text).map_err(|e| CliError::graph_file(path, e))
}

fn load_origin(s: &mut Session, path: Option<&PathBuf>) -> Result<MapOrigin, CliError> {
    let origin = match path {
        Some(p) => {
            let text = s.read(p)?;
            tables::read_origin(&text).map_err(|e| CliError::config(Some(p), e))?
        }
        None => MapOrigin::default(),
    };
    s.record("origin_easting", origin.easting_offset);
    s.record("origin_northing", origin.northing_offset);
    s.record("zone", &origin.zone_label);
    Ok(origin)
}

fn load_table<T>(
    s: &mut Session,
    path: &Path,
    parse: impl Fn(&str) -> Result<T, tables::TableError>,
) -> Result<T, CliError> {
    let text = s.read(path)?;
    parse(&text).map_err(|e| CliError::table(path, e))
}

fn print_report(s: &mut Session, report: &impl Serialize, file: Option<&PathBuf>) -> Result<(), CliError> {
    let line = serde_json::to_string(report).expect("reports serialize");
    println!("{line}");
    if let Some(path) = file {
        s.write(path, &format!("{line}\n"))?;
    }
    Ok(())
}

fn simulate(s: &mut Session, a: &SimulateArgs) -> Result<(), CliError> {
    let mut kv = key_values(s, a.config.as_ref())?;
    override_opt(&mut kv, "preset", &a.preset);
    override_opt(&mut kv, "seed", &a.seed);
    let config = SimConfig::from_key_values(&kv).map_err(|e| CliError::config(a.config.as_deref(), e))?;
    for (k, v) in kv.entries() {
        s.record(k, v);
    }
    s.record("seed", config.seed);
    let out = generate(&config)?;
    let w = &out.world;
    let dir = &a.out;
    s.write(&dir.join("graph.txt"), &write_graph(&out.initial_graph))?;
    s.write(&dir.join("gps.csv"), &tables::write_gps(&out.gps))?;
    s.write(&dir.join("odom.csv"), &tables::write_odom(&out.odom))?;
    s.write(&dir.join("labels.csv"), &tables::write_labels(&w.labels))?;
    let mut truth: Vec<TruthRow> = w
        .keyframe_truth()
        .iter()
        .map(|(id, p)| {
            let q = w.origin.map_to_utm(&p.translation());
            TruthRow::Pose(*id, Pose2::new(q.x, q.y, p.theta()))
        })
        .collect();
    truth.extend(
        w.landmark_truth()
            .iter()
            .map(|(id, q)| TruthRow::Landmark(*id, w.origin.map_to_utm(q))),
    );
    s.write(&dir.join("truth.csv"), &tables::write_truth(&truth))?;
    s.write(&dir.join("poses.csv"), &tables::write_pose_times(&w.keyframe_times()))?;
    let mut scans: Vec<ScanFrame> = Vec::new();
    for o in &out.observations {
        let point = ScanPoint {
            x: o.z.x,
            y: o.z.y,
            intensity: 1.0,
        };
        match scans.last_mut() {
            Some(f) if f.pose == o.pose => f.points.push(point),
            _ => scans.push(ScanFrame {
                pose: o.pose,
                points: vec![point],
            }),
        }
    }
    s.write(&dir.join("scans.csv"), &tables::write_scans(&scans))?;
    s.write(&dir.join("origin.cfg"), &tables::write_origin(&w.origin))?;
    Ok(())
}

fn filter(s: &mut Session, a: &FilterGpsArgs) -> Result<(), CliError> {
    let mut kv = key_values(s, a.config.as_ref())?;
    override_opt(&mut kv, "gps_sigma", &a.gps_sigma);
    override_opt(&mut kv, "sigma_v", &a.sigma_v);
    override_opt(&mut kv, "sigma_omega", &a.sigma_omega);
    override_opt(&mut kv, "gate_confidence", &a.gate_confidence);
    let settings = FilterSettings::from_key_values(&kv).map_err(|e| CliError::config(a.config.as_deref(), e))?;
    s.config.extend(settings.snapshot());
    let origin = load_origin(s, a.origin.as_ref())?;
    let odom = load_table(s, &a.odom, tables::read_odom)?;
    let gps = load_table(s, &a.gps, tables::read_gps)?;
    let out = filter_gps(&odom, &gps, &origin, &settings.init, &settings.filter)?;
    s.write(&a.out_path, &tables::write_path(&out.path))?;
    s.write(&a.out_decisions, &tables::write_decisions(&out.decisions))?;
    let accepted = out.decisions.iter().filter(|d| d.accepted).count();
    let report = FilterReport {
        samples: out.path.len(),
        fixes: out.decisions.len(),
        accepted,
        rejected: out.decisions.len() - accepted,
    };
    print_report(s, &report, None)
}

#[derive(Serialize)]
struct FilterReport {
    samples: usize,
    fixes: usize,
    accepted: usize,
    rejected: usize,
}

/// Graph poses paired with their timestamps, ordered by time.
fn timed_poses(graph: &PoseGraph, times: &[(georeg_core::VertexId, f64)]) -> Result<Vec<(f64, Pose2)>, CliError> {
    let mut path = times
        .iter()
        .map(|(id, t)| Ok((*t, graph.pose(*id)?)))
        .collect::<Result<Vec<_>, georeg_core::GraphError>>()?;
    path.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(path)
}

#[derive(Serialize)]
struct AlignReport {
    theta: f64,
    tx: f64,
    ty: f64,
    chi2: f64,
    pairs: usize,
}

fn to_map(origin: &MapOrigin, fix: &GpsFix) -> GpsFix {
    let p = origin.utm_to_map(&Point2::new(fix.easting, fix.northing));
    GpsFix {
        easting: p.x,
        northing: p.y,
        ..*fix
    }
}

fn align(s: &mut Session, a: &AlignRigidArgs) -> Result<(), CliError> {
    let max_dt = a.max_dt.unwrap_or(0.5);
    let sigma = a.gps_sigma.unwrap_or(georeg_core::graph::DEFAULT_GPS_SIGMA);
    if !(max_dt >= 0.0 && max_dt.is_finite()) {
        return Err(config_flag("max-dt", max_dt));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(config_flag("gps-sigma", sigma));
    }
    s.record("max_dt", max_dt);
    s.record("gps_sigma", sigma);
    let origin = load_origin(s, a.origin.as_ref())?;
    let mut graph = load_graph(s, &a.graph)?;
    let times = load_table(s, &a.poses, tables::read_pose_times)?;
    let gps: Vec<GpsFix> = load_table(s, &a.gps, tables::read_gps)?
        .iter()
        .map(|f| to_map(&origin, f))
        .collect();
    let path = timed_poses(&graph, &times)?;
    let set = match &a.decisions {
        Some(p) => {
            let mut decisions = load_table(s, p, tables::read_decisions)?;
            for d in &mut decisions {
                d.fix = to_map(&origin, &d.fix);
            }
            build_gated_correspondences(&path, &decisions, max_dt, sigma)?
        }
        None => build_correspondences(&path, &gps, max_dt, sigma)?,
    };
    let t = fit_se2(&set)?;
    graph.transform(&t);
    s.write(&a.out, &write_graph(&graph))?;
    let report = AlignReport {
        theta: t.theta(),
        tx: t.x,
        ty: t.y,
        chi2: set.chi2(&t),
        pairs: set.pairs.iter().filter(|c| c.weight > 0.0).count(),
    };
    print_report(s, &report, a.report.as_ref())
}

fn config_flag(flag: &str, value: impl std::fmt::Display) -> CliError {
    let mut e = CliError::new(ErrorKind::Config, format!("{value} is out of range"));
    e.key = Some(flag.to_string());
    e
}

#[derive(Serialize)]
struct Prealignment {
    theta: f64,
    tx: f64,
    ty: f64,
}

#[derive(Serialize)]
struct OptimizeJson {
    iterations: usize,
    initial_chi2: f64,
    final_chi2: f64,
    converged: bool,
    gps_priors: usize,
    anchors: usize,
    unmatched_labels: usize,
    prealignment: Option<Prealignment>,
}

fn optimize_cmd(s: &mut Session, a: &OptimizeArgs) -> Result<(), CliError> {
    let mut kv = key_values(s, a.config.as_ref())?;
    override_opt(&mut kv, "prior_spacing", &a.prior_spacing);
    override_opt(&mut kv, "gps_sigma", &a.gps_sigma);
    override_opt(&mut kv, "anchor_sigma", &a.anchor_sigma);
    override_opt(&mut kv, "match_radius", &a.match_radius);
    override_opt(&mut kv, "max_dt", &a.max_dt);
    override_opt(&mut kv, "max_iter", &a.max_iter);
    if a.no_prealign {
        kv.insert("prealign", false);
    }
    let settings =
        OptimizeSettings::from_key_values(&kv).map_err(|e| CliError::config(a.config.as_deref(), e))?;
    s.config.extend(settings.snapshot());
    let mut graph = load_graph(s, &a.graph)?;
    let origin = match a.anchors.is_some() {
        true => Some(load_origin(s, a.origin.as_ref())?),
        false => None,
    };
    let mut json = OptimizeJson {
        iterations: 0,
        initial_chi2: 0.0,
        final_chi2: 0.0,
        converged: false,
        gps_priors: 0,
        anchors: 0,
        unmatched_labels: 0,
        prealignment: None,
    };
    let mut reports: Vec<OptimizeReport> = Vec::new();
    if let (Some(path_file), Some(poses_file)) = (&a.gps_priors, &a.poses) {
        let path = load_table(s, path_file, tables::read_path)?;
        let times = load_table(s, poses_file, tables::read_pose_times)?;
        let measurements = prior_measurements(&times, &path, settings.max_dt);
        if measurements.is_empty() {
            return Err(CliError::new(
                ErrorKind::Input,
                format!("no pose has a filtered sample within {} s", settings.max_dt),
            )
            .in_file(path_file));
        }
        let config = GpsRegistration {
            spacing: settings.prior_spacing,
            sigma: settings.gps_sigma,
            prealign: settings.prealign,
            optimize: settings.optimize,
        };
        let r = register_with_gps(&mut graph, &measurements, &config)?;
        json.gps_priors = r.priors_added;
        json.prealignment = r.prealignment.map(|t| Prealignment {
            theta: t.theta(),
            tx: t.x,
            ty: t.y,
        });
        reports.push(r.optimization);
    }
    if let (Some(labels_file), Some(origin)) = (&a.anchors, &origin) {
        let labels: Vec<Point2> = load_table(s, labels_file, tables::read_labels)?
            .iter()
            .map(|(_, p)| origin.utm_to_map(p))
            .collect();
        let r = register_with_anchors(
            &mut graph,
            &labels,
            settings.match_radius,
            settings.anchor_sigma,
            &settings.optimize,
        )?;
        json.anchors = r.matching.pairs.len();
        json.unmatched_labels = r.matching.unmatched_labels.len();
        reports.push(r.optimization);
    }
    if reports.is_empty() {
        reports.push(optimize(&mut graph, &settings.optimize)?);
    }
    json.iterations = reports.iter().map(|r| r.iterations).sum();
    json.initial_chi2 = reports[0].initial_chi2;
    let last = reports.last().expect("at least one optimization ran");
    json.final_chi2 = last.final_chi2;
    json.converged = reports.iter().all(|r| r.converged);
    s.write(&a.out, &write_graph(&graph))?;
    print_report(s, &json, a.report.as_ref())
}

#[derive(Serialize)]
struct EvaluateJson {
    matched: usize,
    unmatched_labels: usize,
    rows: usize,
    failures: usize,
}

fn evaluate(s: &mut Session, a: &EvaluateArgs) -> Result<(), CliError> {
    let origin = load_origin(s, a.origin.as_ref())?;
    let mut kv = key_values(s, a.config.as_ref())?;
    override_opt(&mut kv, "n_values", &a.n_values);
    override_opt(&mut kv, "max_combinations", &a.max_combinations);
    override_opt(&mut kv, "sample_seed", &a.sample_seed);
    override_opt(&mut kv, "anchor_sigma", &a.anchor_sigma);
    override_opt(&mut kv, "match_radius", &a.match_radius);
    override_opt(&mut kv, "region", &a.region);
    if a.force_sampling {
        kv.insert("force_sampling", true);
    }
    let config = eval_config(&kv, &origin).map_err(|e| CliError::config(a.config.as_deref(), e))?;
    s.config.extend(snapshot_eval(&config, &origin));
    let graph = load_graph(s, &a.graph)?;
    let labels: Vec<Point2> = load_table(s, &a.labels, tables::read_labels)?
        .iter()
        .map(|(_, p)| origin.utm_to_map(p))
        .collect();
    let matching = match_labels(&graph, &labels, config.match_radius);
    let report = evaluate_curve(&graph, &matching.pairs, &config)?;
    s.write(&a.out_curve, &tables::write_curve(&report.rows))?;
    s.write(&a.out_residuals, &tables::write_residuals(&report.residuals, &origin))?;
    let json = EvaluateJson {
        matched: matching.pairs.len(),
        unmatched_labels: matching.unmatched_labels.len(),
        rows: report.rows.len(),
        failures: report.rows.iter().map(|r| r.failures).sum(),
    };
    print_report(s, &json, None)
}

fn project(s: &mut Session, a: &ProjectArgs) -> Result<(), CliError> {
    let cell = a.cell_size.unwrap_or(0.5);
    s.record("cell_size", cell);
    let origin = load_origin(s, a.origin.as_ref())?;
    let graph = load_graph(s, &a.graph)?;
    let scans = load_table(s, &a.scans, tables::read_scans)?;
    let points = project_scans(&graph, &scans, &origin)?;
    let raster = rasterize(&points, cell)?;
    let sidecar = a.out_sidecar.clone().unwrap_or_else(|| {
        let mut p = a.out_grid.clone().into_os_string();
        p.push(".csv");
        PathBuf::from(p)
    });
    s.write(&a.out_points, &tables::write_points(&points))?;
    s.write(&a.out_grid, &raster.to_pgm())?;
    s.write(&sidecar, &raster.sidecar_csv())?;
    Ok(())
}

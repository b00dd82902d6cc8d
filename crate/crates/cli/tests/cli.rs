use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use clap::CommandFactory;
use georeg_cli::Cli;

fn georeg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_georeg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = georeg(&["simulate", "--preset", "loop", "--seed", "7", "--out", p(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["graph.txt", "gps.csv", "odom.csv", "labels.csv", "truth.csv", "poses.csv", "scans.csv", "origin.cfg"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let hashes = |dir: &Path| {
        let line = fs::read_to_string(dir.join("manifest.jsonl")).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        v["outputs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|o| o["sha256"].as_str().unwrap().to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(hashes(&a).len(), 8);
    assert_eq!(hashes(&a), hashes(&b));
}

#[test]
fn unobservable_gauge_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.txt");
    fs::write(&graph, "VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\nEDGE_SE2 0 1 1 0 0 1 0 0 1 0 1\n").unwrap();
    let out = dir.path().join("o.txt");
    let o = georeg(&["optimize", "--graph", p(&graph), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(3));
    let e = stderr(&o);
    assert!(e.contains("kind=numerical") && e.contains("gauge"), "{e}");
    assert!(!out.exists());
}

#[test]
fn parse_errors_name_file_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let gps = dir.path().join("gps.csv");
    let odom = dir.path().join("odom.csv");
    fs::write(&gps, "t,easting,northing,sigma\n0,1,2,3\n1,abc,2,3\n").unwrap();
    fs::write(&odom, "t,v,omega\n0,1,0\n").unwrap();
    let (path, dec) = (dir.path().join("p.csv"), dir.path().join("d.csv"));
    let o = georeg(&[
        "filter-gps", "--odom", p(&odom), "--gps", p(&gps), "--out-path", p(&path), "--out-decisions", p(&dec),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert_eq!(e.lines().count(), 1, "{e}");
    assert!(e.contains("gps.csv") && e.contains("line=3") && e.contains("col=2"), "{e}");

    let graph = dir.path().join("g.txt");
    fs::write(&graph, "VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0\n").unwrap();
    let o = georeg(&["optimize", "--graph", p(&graph), "--out", p(&dir.path().join("o.txt"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line=2"), "{}", stderr(&o));
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let gps = dir.path().join("gps.csv");
    let odom = dir.path().join("odom.csv");
    fs::write(&gps, "t,easting,northing,sigma\n0,1,2,3\n").unwrap();
    fs::write(&odom, "t,v,omega\n0,1,0\n").unwrap();
    let cfg = dir.path().join("f.cfg");
    fs::write(&cfg, "gate_confidence = 0.9\nsigma_v = -1\n").unwrap();
    let (path, dec) = (dir.path().join("p.csv"), dir.path().join("d.csv"));
    let base = ["filter-gps", "--odom", p(&odom), "--gps", p(&gps), "--out-path", p(&path), "--out-decisions", p(&dec)];

    let mut args = base.to_vec();
    args.extend(["--config", p(&cfg)]);
    let o = georeg(&args);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("key=sigma_v"), "{}", stderr(&o));

    let mut args = base.to_vec();
    args.extend(["--gate-confidence", "1.5"]);
    let o = georeg(&args);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("key=gate_confidence"), "{}", stderr(&o));

    fs::write(&cfg, "gate_confidense = 0.9\n").unwrap();
    let mut args = base.to_vec();
    args.extend(["--config", p(&cfg)]);
    let o = georeg(&args);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("key=gate_confidense"), "{}", stderr(&o));

    assert_eq!(georeg(&["optimize", "--bogus"]).status.code(), Some(4));
    assert_eq!(georeg(&["--help"]).status.code(), Some(0));
}

#[test]
fn flag_overrides_config_file_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(georeg(&["simulate", "--preset", "loop", "--seed", "1", "--out", p(&sim)]).status.success());
    let cfg = dir.path().join("f.cfg");
    fs::write(&cfg, "gps_sigma = 3\nsigma_v = 0.2\n").unwrap();
    let manifest = dir.path().join("m.jsonl");
    let o = georeg(&[
        "filter-gps",
        "--odom", p(&sim.join("odom.csv")),
        "--gps", p(&sim.join("gps.csv")),
        "--origin", p(&sim.join("origin.cfg")),
        "--config", p(&cfg),
        "--gps-sigma", "4",
        "--out-path", p(&dir.path().join("path.csv")),
        "--out-decisions", p(&dir.path().join("dec.csv")),
        "--manifest", p(&manifest),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(fs::read_to_string(&manifest).unwrap().trim()).unwrap();
    assert_eq!(v["config"]["gps_sigma"], "4");
    assert_eq!(v["config"]["sigma_v"], "0.2");
    assert_eq!(v["config"]["gate_confidence"], "0.95");
    assert_eq!(v["inputs"].as_array().unwrap().len(), 4);
}

#[test]
fn campus_pipeline_end_to_end() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim = d.join("sim");
    let f = |name: &str| d.join(name);
    let s = |name: &str| sim.join(name);
    let run = |args: &[&str]| {
        let o = georeg(args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        serde_json::from_slice::<serde_json::Value>(&o.stdout).unwrap_or(serde_json::Value::Null)
    };
    run(&["simulate", "--preset", "campus", "--seed", "11", "--out", p(&sim)]);
    let origin = s("origin.cfg");
    let filt = run(&[
        "filter-gps", "--odom", p(&s("odom.csv")), "--gps", p(&s("gps.csv")), "--origin", p(&origin),
        "--out-path", p(&f("path.csv")), "--out-decisions", p(&f("dec.csv")),
    ]);
    assert!(filt["rejected"].as_u64().unwrap() > 0);
    let align = run(&[
        "align-rigid", "--graph", p(&s("graph.txt")), "--gps", p(&s("gps.csv")), "--poses", p(&s("poses.csv")),
        "--origin", p(&origin), "--decisions", p(&f("dec.csv")), "--out", p(&f("aligned.txt")),
    ]);
    assert!(align["pairs"].as_u64().unwrap() > 100);
    let gps = run(&[
        "optimize", "--graph", p(&s("graph.txt")), "--gps-priors", p(&f("path.csv")), "--poses",
        p(&s("poses.csv")), "--origin", p(&origin), "--out", p(&f("gps.txt")),
    ]);
    assert!(gps["gps_priors"].as_u64().unwrap() > 200 && gps["converged"] == true);
    let anchored = run(&[
        "optimize", "--graph", p(&f("gps.txt")), "--anchors", p(&s("labels.csv")), "--origin", p(&origin),
        "--out", p(&f("anchored.txt")),
    ]);
    assert!(anchored["anchors"].as_u64().unwrap() > 20);
    let eval = run(&[
        "evaluate", "--graph", p(&f("gps.txt")), "--labels", p(&s("labels.csv")), "--origin", p(&origin),
        "--n-values", "0,1,5", "--max-combinations", "10", "--out-curve", p(&f("curve.csv")),
        "--out-residuals", p(&f("residuals.csv")),
    ]);
    assert_eq!(eval["rows"], 3);
    run(&[
        "project", "--graph", p(&f("anchored.txt")), "--scans", p(&s("scans.csv")), "--origin", p(&origin),
        "--out-points", p(&f("points.csv")), "--out-grid", p(&f("grid.pgm")),
    ]);

    // The curve falls as anchors are added.
    let curve = fs::read_to_string(f("curve.csv")).unwrap();
    let errs: Vec<f64> = curve.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{curve}");
    assert!(fs::read_to_string(f("grid.pgm")).unwrap().starts_with("P2\n"));
    assert!(f("grid.pgm.csv").exists());
    // One manifest line per step, written next to each command's first output.
    let runs = fs::read_to_string(f("manifest.jsonl")).unwrap().lines().count();
    assert_eq!(runs, 6);
    assert!(start.elapsed() < Duration::from_secs(300));
}

/// Every flag of every subcommand appears in docs/CLI.md and vice versa.
#[test]
fn cli_doc_matches_flags() {
    let doc = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/CLI.md")).unwrap();
    let mut documented: std::collections::BTreeMap<String, BTreeSet<String>> = Default::default();
    let mut section = None;
    for line in doc.lines() {
        if let Some(name) = line.strip_prefix("## ") {
            section = Some(name.trim().to_string());
        } else if let (Some(s), Some(rest)) = (&section, line.strip_prefix("| `--")) {
            let flag = rest.split('`').next().unwrap().to_string();
            documented.entry(s.clone()).or_default().insert(flag);
        }
    }
    let mut cmd = Cli::command();
    cmd.build();
    for sub in cmd.get_subcommands() {
        let flags: BTreeSet<String> = sub
            .get_arguments()
            .filter_map(|a| a.get_long())
            .filter(|l| *l != "help" && *l != "version")
            .map(str::to_string)
            .collect();
        let name = sub.get_name().to_string();
        assert_eq!(documented.remove(&name).unwrap_or_default(), flags, "subcommand {name}");
    }
    assert!(documented.is_empty(), "documented but unknown: {documented:?}");
}

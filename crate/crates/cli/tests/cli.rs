use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn geoap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn karate(file: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/karate")
        .join(file)
        .to_string_lossy()
        .into_owned()
}

fn karate_args<'a>(features: &'a str, edges: &'a str, labels: &'a str) -> Vec<&'a str> {
    vec![
        "--features",
        features,
        "--feature-ids",
        "--edges",
        edges,
        "--labels",
        labels,
        "--feature-metric",
        "cosine",
    ]
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn karate_club_split_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("result.json");
    let (f, e, l) = (karate("features.txt"), karate("edges.txt"), karate("club.txt"));
    let mut args = vec!["cluster"];
    args.extend(karate_args(&f, &e, &l));
    args.extend([
        "--mode",
        "geometric",
        "--topo",
        "jaccard",
        "--tau",
        "0.5",
        "--target-k",
        "2",
        "--output",
        out.to_str().unwrap(),
    ]);
    let o = geoap(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("CR 97.06"), "{}", stdout(&o));

    let doc = read_json(&out);
    assert_eq!(doc["exemplars"].as_array().unwrap().len(), 2);
    assert_eq!(doc["labels"].as_array().unwrap().len(), 34);
    let cr = doc["metrics"]["cr"].as_f64().unwrap();
    assert!((cr - 100.0 * 33.0 / 34.0).abs() < 1e-9);
    assert_eq!(doc["diagnostics"]["clusters"], 2);
}

#[test]
fn trace_lists_every_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.tsv");
    let (f, e, l) = (karate("features.txt"), karate("edges.txt"), karate("club.txt"));
    let mut args = vec!["cluster"];
    args.extend(karate_args(&f, &e, &l));
    args.extend(["--preference", "-1.5", "--trace", trace.to_str().unwrap()]);
    let o = geoap(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iteration\texemplars\tmax_delta"));
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    for (t, row) in rows.iter().enumerate() {
        assert_eq!(row.split('\t').next().unwrap(), (t + 1).to_string());
    }
}

#[test]
fn full_neighborhood_reproduces_standard_mode() {
    let dir = tempfile::tempdir().unwrap();
    let xs = [0.0, 0.4, 1.1, 5.0, 5.3, 6.2, 12.0, 12.5];
    let features: String = xs.iter().map(|x| format!("{x}\n")).collect();
    let mut edges = String::new();
    for u in 0..xs.len() {
        for v in (u + 1)..xs.len() {
            edges.push_str(&format!("{u} {v}\n"));
        }
    }
    let f = write(dir.path(), "features.txt", &features);
    let e = write(dir.path(), "edges.txt", &edges);
    let run = |mode: &str, name: &str| -> Value {
        let out = dir.path().join(name);
        let mut args = vec![
            "cluster",
            "--features",
            f.to_str().unwrap(),
            "--edges",
            e.to_str().unwrap(),
            "--preference",
            "-4",
            "--mode",
            mode,
            "--output",
            out.to_str().unwrap(),
        ];
        if mode == "geometric" {
            args.extend(["--topo", "shortest-path", "--tau", "1", "--no-smoothing"]);
        }
        let o = geoap(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        read_json(&out)
    };
    let std = run("standard", "std.json");
    let geo = run("geometric", "geo.json");
    assert_eq!(std["labels"], geo["labels"]);
    assert_eq!(std["exemplars"], geo["exemplars"]);
    assert_eq!(std["net_similarity"], geo["net_similarity"]);
    assert_eq!(std["diagnostics"]["iterations"], geo["diagnostics"]["iterations"]);
}

#[test]
fn threshold_sweep_reports_each_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.json");
    let (f, e, l) = (karate("features.txt"), karate("edges.txt"), karate("club.txt"));
    let mut args = vec!["sweep-tau"];
    args.extend(karate_args(&f, &e, &l));
    args.extend([
        "--topo",
        "jaccard",
        "--tau-grid",
        "0.5,0.9",
        "--target-k",
        "2",
        "--output",
        out.to_str().unwrap(),
    ]);
    let o = geoap(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out);
    assert_eq!(report["axis"], "tau");
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);
    assert!(stdout(&o).contains("optimum tau"));
}

#[test]
fn empty_cluster_list_gives_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k.json");
    let (f, e, l) = (karate("features.txt"), karate("edges.txt"), karate("club.txt"));
    let mut args = vec!["sweep-k"];
    args.extend(karate_args(&f, &e, &l));
    args.extend(["--k-list", "", "--output", out.to_str().unwrap()]);
    let o = geoap(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out);
    assert_eq!(report["rows"].as_array().unwrap().len(), 0);
    assert!(report.get("optimum").is_none_or(Value::is_null));
}

#[test]
fn identity_ablation_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ablation.json");
    let (f, e, l) = (karate("features.txt"), karate("edges.txt"), karate("club.txt"));
    let mut args = vec!["ablation"];
    args.extend(karate_args(&f, &e, &l));
    args.extend([
        "--topo",
        "jaccard",
        "--tau",
        "0.5",
        "--target-k",
        "2",
        "--repetitions",
        "3",
        "--identity",
        "--output",
        out.to_str().unwrap(),
    ]);
    let o = geoap(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out);
    assert_eq!(report["repetitions"], 3);
    assert_eq!(report["failed"], 0);
    assert!(report["std"]["nmi"].as_f64().unwrap() < 1e-12);
    let cr = report["mean"]["cr"].as_f64().unwrap();
    assert!((cr - 100.0 * 33.0 / 34.0).abs() < 1e-9);
}

#[test]
fn eval_scores_a_relabeled_partition() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write(dir.path(), "truth.txt", "a x\nb x\nc y\nd y\ne z\n");
    let pred = write(dir.path(), "pred.txt", "e 7\nd 3\nc 3\nb 1\na 1\nunknown 9\n");
    let out = dir.path().join("scores.json");
    let o = geoap(&[
        "eval",
        "--predicted",
        pred.to_str().unwrap(),
        "--labels",
        truth.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("NMI 100.00  CR 100.00  F1 100.00"), "{}", stdout(&o));
    assert_eq!(read_json(&out)["cr"].as_f64(), Some(100.0));
}

#[test]
fn exit_codes_follow_error_kinds() {
    let f = karate("features.txt");
    let l = karate("modularity.txt");
    let missing = geoap(&["cluster", "--features", "/nonexistent/features.txt"]);
    assert_eq!(missing.status.code(), Some(2));

    let bad_flag = geoap(&["cluster", "--features", &f, "--damping", "abc"]);
    assert_eq!(bad_flag.status.code(), Some(1));

    let conflict = geoap(&["cluster", "--features", &f, "--feature-ids", "--preference", "-1", "--target-k", "2"]);
    assert_eq!(conflict.status.code(), Some(1));

    let no_topo = geoap(&["cluster", "--features", &f, "--feature-ids", "--mode", "geometric", "--tau", "1"]);
    assert_eq!(no_topo.status.code(), Some(1));

    let bad_damping = geoap(&["cluster", "--features", &f, "--feature-ids", "--damping", "1.0"]);
    assert_eq!(bad_damping.status.code(), Some(1));

    // standard mode never settles on four clusters for these features
    let unreachable = geoap(&[
        "cluster",
        "--features",
        &f,
        "--feature-ids",
        "--labels",
        &l,
        "--feature-metric",
        "cosine",
        "--target-k",
        "4",
    ]);
    assert_eq!(unreachable.status.code(), Some(4));

    let help = geoap(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
}

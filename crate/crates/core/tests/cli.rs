use std::collections::BTreeSet;
use std::path::Path;

use skyvault::cli::run;

fn exec(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv: Vec<&str> = std::iter::once("skyvault").chain(args.iter().copied()).collect();
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Operation name, subcommand path, and a flag or word its help must show.
const OPERATIONS: &[(&str, &[&str], &str)] = &[
    ("plan_acquisition", &["plan", "acquisition"], "--camera-gigapixels"),
    ("plan_pipeline", &["plan", "pipeline"], "--moore"),
    ("plan_storage", &["plan", "storage"], "--master-reduction"),
    ("plan_scan", &["plan", "scan"], "--disks-per-server"),
    ("plan_transfer", &["plan", "transfer"], "--brick-capacity"),
    ("plan_hardware_timeline", &["plan", "timeline"], "--capacity-doubling"),
    ("plan_load", &["plan", "load"], "--window-days"),
    ("reference_report", &["plan", "reference"], "reference"),
    ("generate_survey", &["gen"], "--mover-fraction"),
    ("ingest", &["ingest"], "--partitions"),
    ("build_indexes", &["index"], "--zone-height"),
    ("cross_match", &["master"], "--radius"),
    ("scan", &["query"], "--workers"),
    ("region_search", &["query"], "--polygon"),
    ("neighbors_join", &["neighbors"], "--theta"),
    ("angular_distance", &["neighbors"], "--between"),
    ("fit_lightcurve", &["lc"], "--n-freq"),
    ("classify_chain", &["classify"], "--store"),
    ("trigger", &["trigger"], "--k-sigma"),
    ("link_movers", &["movers"], "--residual-max"),
    ("pair_count", &["corr"], "--mode"),
    ("correlation_ls", &["corr"], "--randoms"),
    ("em_fit", &["em"], "--max-iter"),
    ("outlier_scores", &["em"], "--scores"),
    ("bench20", &["bench20"], "--queries"),
];

#[test]
fn every_operation_is_documented_in_help() {
    let (code, top, _) = exec(&["--help"]);
    assert_eq!(code, 0);
    for sub in ["plan", "gen", "ingest", "index", "master", "query", "neighbors", "lc", "classify", "trigger", "movers", "corr", "em", "bench20"] {
        assert!(top.contains(&format!("  {sub} ")), "{sub} missing from top-level help");
    }
    for (op, cmd, needle) in OPERATIONS {
        let mut args = cmd.to_vec();
        args.push("--help");
        let (code, help, _) = exec(&args);
        assert_eq!(code, 0, "{op}");
        assert!(help.to_lowercase().contains(needle), "{op}: `{}` help lacks {needle}", cmd.join(" "));
    }
}

#[test]
fn usage_errors_exit_2_on_stderr() {
    let (code, out, err) = exec(&["frobnicate"]);
    assert_eq!(code, 2);
    assert!(out.is_empty());
    assert!(err.contains("Usage"));
    let (code, _, _) = exec(&["plan", "scan", "--bogus"]);
    assert_eq!(code, 2);
    let (code, _, err) = exec(&["plan", "scan", "--disks", "0"]);
    assert_eq!(code, 2, "{err}");
    let (code, _, _) = exec(&["gen", "--objects", "10"]);
    assert_eq!(code, 2, "randomized commands need --seed");
}

#[test]
fn missing_store_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = exec(&["query", "--store", path(&dir.path().join("nope"))]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn plan_scan_reference() {
    let (code, out, _) = exec(&["plan", "scan", "--db", "120TB", "--disks", "30", "--disk-rate", "150MB/s"]);
    assert_eq!(code, 0);
    let hours: f64 = out
        .lines()
        .find(|l| l.starts_with("scan_time,"))
        .and_then(|l| l.split(',').nth(1))
        .unwrap()
        .parse()
        .unwrap();
    assert!((hours - 7.4).abs() / 7.4 < 0.02, "{hours}");
}

#[test]
fn empty_survey_is_fine() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("s");
    let (code, out, err) = exec(&["gen", "--objects", "0", "--passes", "1", "--seed", "1", "--out", path(&out_dir)]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("detections,0"));
    assert_eq!(std::fs::metadata(out_dir.join("detections.det")).unwrap().len(), 0);
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let survey = dir.path().join("survey");
    let store = dir.path().join("store");
    let (s, st) = (path(&survey), path(&store));
    let ok = |args: &[&str]| {
        let (code, out, err) = exec(args);
        assert_eq!(code, 0, "{args:?}: {err}");
        out
    };
    ok(&["gen", "--objects", "300", "--passes", "12", "--seed", "5", "--periodic-fraction", "0.2", "--mover-fraction", "0.1", "--out", s]);
    let det = survey.join("detections.det");
    ok(&["ingest", "--input", path(&det), "--out", st, "--partitions", "4"]);
    ok(&["index", "--store", st]);
    ok(&["master", "--store", st, "--radius", "1s"]);

    let rows = |out: String| out.lines().skip(1).map(str::to_string).collect::<BTreeSet<_>>();
    let one = rows(ok(&["query", "--store", st, "--cone", "10d,20d,40d", "--where", "flux>10", "--workers", "1"]));
    let four = rows(ok(&["query", "--store", st, "--cone", "10d,20d,40d", "--where", "flux>10", "--workers", "4"]));
    assert!(!one.is_empty());
    assert_eq!(one, four);

    let classes = ok(&["classify", "--store", st, "--n-freq", "300"]);
    assert!(classes.contains("mover-candidate"));
    let tracks = ok(&["movers", "--store", st]);
    assert!(tracks.lines().count() > 1);
    let json = ok(&["--format", "json", "lc", "--store", st, "--master", "1", "--n-freq", "300"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v[0]["master_id"], 1);

    let corr_a = ok(&["corr", "--store", st, "--seed", "3", "--bins", "1d,30d,5"]);
    let corr_b = ok(&["corr", "--store", st, "--seed", "3", "--bins", "1d,30d,5"]);
    assert_eq!(corr_a, corr_b);
    let model = dir.path().join("model.json");
    ok(&["em", "--store", st, "--seed", "2", "--k", "2", "--model-out", path(&model)]);
    assert!(skyvault::stats::MixtureModel::read_json(&model).is_ok());

    let alerts = ok(&["trigger", "--store", st, "--stream", path(&det), "--sort"]);
    assert!(alerts.starts_with(skyvault::timedomain::trigger::ALERT_CSV_HEADER));
    let (code, _, err) = exec(&["trigger", "--store", st, "--stream", path(&det)]);
    assert_eq!(code, 2, "unsorted stream: {err}");
}

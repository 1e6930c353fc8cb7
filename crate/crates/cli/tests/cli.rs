use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenario(name: &str) -> String {
    scenarios().join(name).to_str().unwrap().to_string()
}

fn partsim(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_partsim"));
    cmd.args(args).env_remove("PARTSIM_SEED");
    if let Some(seed) = seed_env {
        cmd.env("PARTSIM_SEED", seed);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_clean_config() {
    let out = partsim(&["validate", &scenario("cookbook.xml")], None);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
}

#[test]
fn validate_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenarios().join("cookbook.xml"))
        .unwrap()
        .replace(r#"start="500us""#, r#"start="300us""#);
    let path = dir.path().join("bad.xml");
    std::fs::write(&path, text).unwrap();
    let out = partsim(&["validate", path_str(&path)], None);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 1, "{text}");
    assert!(lines[0].starts_with("ERROR SLOT_OVERLAP "), "{}", lines[0]);
}

#[test]
fn validate_missing_and_malformed() {
    let out = partsim(&["validate", "/nonexistent/system.xml"], None);
    assert_eq!(out.status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.xml");
    std::fs::write(&path, "<SystemDescription").unwrap();
    assert_eq!(
        partsim(&["validate", path_str(&path)], None).status.code(),
        Some(1)
    );
}

#[test]
fn run_cookbook_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let out = partsim(
        &[
            "run",
            &scenario("cookbook.scenario"),
            "--out",
            path_str(&csv),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 101);
    let summary = stdout(&out);
    assert!(summary.lines().next().unwrap().starts_with("scenario"));
    assert!(summary.contains("400000"));
    assert!(summary.contains("4.000000"));
}

#[test]
fn until_ten_ms_gives_ten_frame_wraps() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.trace");
    let out = partsim(
        &[
            "run",
            &scenario("cookbook.scenario"),
            "--until",
            "10ms",
            "--trace",
            path_str(&trace),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(
        text.lines().filter(|l| l.contains(",FRAME_WRAP,")).count(),
        10
    );
    assert!(text.starts_with("0,STATE,0,BOOT,NORMAL\n"));

    let out = partsim(
        &[
            "run",
            &scenario("cookbook.scenario"),
            "--frames",
            "3",
            "--trace",
            path_str(&trace),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(
        text.lines().filter(|l| l.contains(",FRAME_WRAP,")).count(),
        3
    );
}

fn run_csv(scenario_name: &str, extra: &[&str], env: Option<&str>) -> String {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let mut args = vec!["run", scenario_name, "--out", path_str(&csv)];
    args.extend_from_slice(extra);
    let out = partsim(&args, env);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    std::fs::read_to_string(csv).unwrap()
}

#[test]
fn seed_changes_broker_but_not_partitioned() {
    let broker = scenario("broker.scenario");
    let a = run_csv(&broker, &["--seed", "1"], None);
    let b = run_csv(&broker, &["--seed", "2"], None);
    assert_ne!(a, b);
    // environment fallback matches the flag, and the flag wins over it
    assert_eq!(run_csv(&broker, &[], Some("2")), b);
    assert_eq!(run_csv(&broker, &["--seed", "1"], Some("2")), a);

    let cookbook = scenario("cookbook.scenario");
    assert_eq!(
        run_csv(&cookbook, &["--seed", "1"], None),
        run_csv(&cookbook, &["--seed", "2"], None)
    );
}

#[test]
fn bad_seed_env_is_rejected() {
    let out = partsim(&["run", &scenario("cookbook.scenario")], Some("abc"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn report_matches_run_and_merges() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c.csv");
    let run = partsim(
        &[
            "run",
            &scenario("cookbook.scenario"),
            "--out",
            path_str(&csv),
        ],
        None,
    );
    let report = partsim(&["report", path_str(&csv)], None);
    assert_eq!(report.status.code(), Some(0));
    assert_eq!(stdout(&report), stdout(&run));

    let twice = partsim(&["report", path_str(&csv), path_str(&csv)], None);
    let text = stdout(&twice);
    let row = text.lines().nth(1).unwrap();
    let n: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(n[4], "200");
}

#[test]
fn report_header_only_and_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(
        &empty,
        format!("{}\n", partsim_core::harness::CSV_HEADER.join(",")),
    )
    .unwrap();
    let out = partsim(&["report", path_str(&empty)], None);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).trim(), "no data");

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "not,a,result\n1,2,3\n").unwrap();
    assert_eq!(
        partsim(&["report", path_str(&bad)], None).status.code(),
        Some(3)
    );
    assert_eq!(
        partsim(&["report", "/nonexistent.csv"], None).status.code(),
        Some(3)
    );
}

#[test]
fn runtime_halt_and_invalid_scenario_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(scenarios().join("cookbook.xml"), dir.path().join("sys.xml")).unwrap();
    let halt = dir.path().join("halt.scenario");
    std::fs::write(
        &halt,
        "name = h\nmode = partitioned\nsystem = sys.xml\nrepetitions = 1\npayload_sizes = 1\n\
         [health]\nTRAP = HALT_SYSTEM\n[faults]\n700us TRAP P1 fatal\n",
    )
    .unwrap();
    assert_eq!(
        partsim(&["run", path_str(&halt)], None).status.code(),
        Some(2)
    );

    let invalid = dir.path().join("invalid.scenario");
    std::fs::write(
        &invalid,
        "name = x\nmode = partitioned\nsystem = sys.xml\nrepetitions = 0\n",
    )
    .unwrap();
    assert_eq!(
        partsim(&["run", path_str(&invalid)], None).status.code(),
        Some(1)
    );

    assert_eq!(
        partsim(&["run", "/nonexistent.scenario"], None)
            .status
            .code(),
        Some(3)
    );
}

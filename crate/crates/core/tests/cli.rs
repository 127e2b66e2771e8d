use std::fs;
use std::path::Path;
use std::process::Command;

use pgc_core::experiment::{
    emit_results, run_experiment, ExperimentSpec, CURVE_FILE, CURVE_HEADER, SUBMISSIONS_FILE, SUBMISSIONS_HEADER,
    SUMMARY_FILE,
};
use pgc_core::harness::success_ratio;
use serde_json::Value;

fn spec(args: &[&str]) -> ExperimentSpec {
    let mut argv = vec!["pgc"];
    argv.extend_from_slice(args);
    ExperimentSpec::parse_args(argv).unwrap()
}

fn run_into(spec: &ExperimentSpec, dir: &Path) -> Vec<pgc_core::experiment::CellResult> {
    let results = run_experiment(spec).unwrap();
    emit_results(&results, spec, dir).unwrap();
    results
}

fn read_summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(SUMMARY_FILE)).unwrap()).unwrap()
}

#[test]
fn ten_submissions_give_ten_rows() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(&[
        "--mechanism", "laplace", "--epsilon", "1", "--trials", "1", "--max-submissions", "10", "--workers", "1",
        "--no-early-stop",
    ]);
    run_into(&s, dir.path());
    let text = fs::read_to_string(dir.path().join(SUBMISSIONS_FILE)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], SUBMISSIONS_HEADER);
    assert_eq!(lines.len(), 11);
    // only n = 1 has a full window of 10
    assert!(!lines[1].ends_with(','));
    assert!(lines[2..].iter().all(|l| l.ends_with(',')));
}

#[test]
fn submissions_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(&[
        "--mechanism", "laplace,none", "--epsilon", "1,10", "--buffer", "1,3", "--trials", "2", "--max-submissions",
        "60", "--workers", "1",
    ]);
    let results = run_into(&s, dir.path());
    let mut reader = csv::Reader::from_path(dir.path().join(SUBMISSIONS_FILE)).unwrap();
    let headers: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(headers.join(","), SUBMISSIONS_HEADER);
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();

    let mut i = 0;
    for r in &results {
        for (k, t) in r.trials.iter().enumerate() {
            for (j, &score) in t.scores.iter().enumerate() {
                let row = &rows[i];
                i += 1;
                assert_eq!(&row[0], r.cell.kind.name());
                let eps: f64 = row[1].parse().unwrap();
                assert_eq!(eps, r.cell.epsilon);
                assert_eq!(row[2].parse::<usize>().unwrap(), r.cell.buffer);
                assert_eq!(row[3].parse::<usize>().unwrap(), k);
                assert_eq!(row[4].parse::<usize>().unwrap(), j + 1);
                assert_eq!(row[5].parse::<u32>().unwrap(), score);
                match t.mu.get(j) {
                    Some(&mu) => assert_eq!(row[6].parse::<f64>().unwrap().to_bits(), mu.to_bits()),
                    None => assert_eq!(&row[6], ""),
                }
            }
        }
    }
    assert_eq!(i, rows.len());

    let summary = read_summary(dir.path());
    let cells = summary["cells"].as_array().unwrap();
    assert_eq!(cells.len(), results.len());
    for (c, r) in cells.iter().zip(&results) {
        let seeds: Vec<u64> = c["trial_seeds"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
        assert_eq!(seeds, r.trials.iter().map(|t| t.seed).collect::<Vec<_>>());
        let fst: Vec<Option<u64>> = c["fst"].as_array().unwrap().iter().map(Value::as_u64).collect();
        assert_eq!(fst, r.fsts());
        assert_eq!(c["success_ratio"].as_f64().unwrap(), success_ratio(&r.fsts(), s.n_max));
    }
    assert_eq!(cells[4]["epsilon"], "inf");
    assert_eq!(summary["version"], pgc_core::VERSION);
    assert_eq!(summary["config"]["max_submissions"], 60);
}

#[test]
fn baseline_relative_auc_is_one() {
    let dir = tempfile::tempdir().unwrap();
    // a trivially reachable target guarantees a non-zero baseline area
    let s = spec(&[
        "--mechanism", "none,laplace", "--epsilon", "1", "--trials", "3", "--max-submissions", "20", "--workers", "1",
        "--target", "5", "--window", "1",
    ]);
    run_into(&s, dir.path());
    let summary = read_summary(dir.path());
    let cells = summary["cells"].as_array().unwrap();
    assert_eq!(cells[0]["mechanism"], "none");
    assert_eq!(cells[0]["relative_auc"].as_f64().unwrap(), 1.0);
    assert!(cells[1]["relative_auc"].as_f64().is_some());

    let curve = fs::read_to_string(dir.path().join(CURVE_FILE)).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next().unwrap(), CURVE_HEADER);
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let none_rows: Vec<&Vec<&str>> = rows.iter().filter(|r| r[0] == "none").collect();
    assert_eq!(none_rows.first().unwrap()[3], "1");
    assert_eq!(none_rows.last().unwrap()[3], "20");
    assert_eq!(none_rows.last().unwrap()[1], "inf");
}

#[test]
fn missing_baseline_gives_null_auc() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(&["--mechanism", "prs", "--epsilon", "5", "--trials", "1", "--max-submissions", "15", "--workers", "1"]);
    run_into(&s, dir.path());
    assert!(read_summary(dir.path())["cells"][0]["relative_auc"].is_null());
}

#[test]
fn single_worker_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "--mechanism", "laplace,prs", "--epsilon", "2", "--buffer", "1,4", "--trials", "2", "--max-submissions", "80",
        "--workers", "1", "--seed", "11",
    ];
    run_into(&spec(&args), a.path());
    run_into(&spec(&args), b.path());
    for f in [SUBMISSIONS_FILE, CURVE_FILE, SUMMARY_FILE] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sequential_flag_matches_parallel_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--mechanism", "laplace", "--epsilon", "1,5", "--trials", "3", "--max-submissions", "40", "--workers", "1"];
    run_into(&spec(&args), a.path());
    let mut seq = args.to_vec();
    seq.push("--sequential");
    run_into(&spec(&seq), b.path());
    assert_eq!(fs::read(a.path().join(SUBMISSIONS_FILE)).unwrap(), fs::read(b.path().join(SUBMISSIONS_FILE)).unwrap());
}

#[test]
fn failed_write_removes_partial_files() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join(CURVE_FILE)).unwrap();
    let s = spec(&["--mechanism", "laplace", "--epsilon", "1", "--trials", "1", "--max-submissions", "5", "--workers", "1"]);
    let results = run_experiment(&s).unwrap();
    assert!(emit_results(&results, &s, dir.path()).is_err());
    assert!(!dir.path().join(SUBMISSIONS_FILE).exists());
    assert!(!dir.path().join(SUMMARY_FILE).exists());

    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    assert!(emit_results(&results, &s, &blocker.join("sub")).is_err());
}

fn pgc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pgc")).args(args).output().unwrap()
}

#[test]
fn binary_rejects_bad_arguments() {
    for bad in [&["--epsilon", "0"][..], &["--buffer", "0"], &["--mechanism", "gauss"], &["--unknown-flag"]] {
        let out = pgc(bad);
        assert!(!out.status.success(), "{bad:?}");
        assert!(!out.stderr.is_empty());
    }
    assert!(pgc(&["--help"]).status.success());
}

#[test]
fn binary_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let out_str = out.to_str().unwrap();
    let status = pgc(&[
        "--mechanism", "none", "--trials", "1", "--max-submissions", "12", "--workers", "2", "--out", out_str,
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for f in [SUBMISSIONS_FILE, CURVE_FILE, SUMMARY_FILE] {
        assert!(out.join(f).is_file());
    }
}

#[test]
fn full_matrix_is_expressible() {
    let s = spec(&["--mechanism", "laplace,prs,none", "--epsilon", "1,2,5,10", "--buffer", "1,100"]);
    let cells = s.cells().unwrap();
    assert_eq!(cells.len(), 2 * 4 * 2 + 2);
    assert_eq!((s.trials, s.n_max, s.workers), (20, 90_000, 9));
}

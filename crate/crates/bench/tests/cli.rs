use std::fs;
use std::path::Path;

use clap::Parser;
use planar_gnc_bench::{run_experiment, Args};

const HEADER: &str = "rate,seed,ate_pos,ate_rot_deg,are_deg,precision,recall,t_reg_s,t_ara_s,t_ta_s,t_refine_s,converged";

fn args(out: &Path, extra: &[&str]) -> Args {
    let mut v = vec!["planar-gnc-bench", "--out", out.to_str().unwrap()];
    v.extend_from_slice(extra);
    Args::try_parse_from(v).unwrap()
}

#[test]
fn grid_sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let a = args(
        dir.path(),
        &["--synthetic", "grid:20x20", "--rates", "0.1,0.3,0.5", "--runs", "10", "--seed", "7", "--emit-trajectories"],
    );
    run_experiment(&a).unwrap();
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], HEADER);
    assert_eq!(lines.len(), 31);
    let mut keys = Vec::new();
    for line in &lines[1..] {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 12, "{line}");
        keys.push((f[0].parse::<f64>().unwrap(), f[1].parse::<u64>().unwrap()));
        for x in &f[2..11] {
            assert!(x.parse::<f64>().unwrap() >= 0.0, "{line}");
        }
        assert!(f[11] == "true" || f[11] == "false");
    }
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    assert_eq!(keys, sorted);
    assert_eq!(keys[0], (0.1, 7));
    assert_eq!(keys[29], (0.5, 16));

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let rates = summary["rates"].as_array().unwrap();
    assert_eq!(rates.len(), 3);
    assert!(rates.iter().all(|r| r["runs"] == 10));
    assert_eq!(summary["num_poses"], 400);
    assert!(dir.path().join("est_0.3_12.g2o").exists());
}

#[test]
fn identical_invocations_give_identical_csv() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let flags = ["--synthetic", "walk:150", "--rates", "0,0.2", "--runs", "3", "--seed", "3", "--deterministic"];
    run_experiment(&args(a.path(), &flags)).unwrap();
    run_experiment(&args(b.path(), &flags)).unwrap();
    for name in ["results.csv", "summary.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn noiseless_without_outliers_recovers_the_truth() {
    let dir = tempfile::tempdir().unwrap();
    let a = args(
        dir.path(),
        &["--synthetic", "grid:10x10", "--rates", "0", "--runs", "4", "--sigma-theta", "0", "--sigma-t", "0"],
    );
    let rows = run_experiment(&a).unwrap();
    assert_eq!(rows.len(), 4);
    for r in rows {
        assert!(r.ate_pos.unwrap() < 1e-6, "{r:?}");
        assert_eq!((r.precision, r.recall), (1.0, 1.0));
    }
}

#[test]
fn file_input_with_ground_truth() {
    use planar_gnc::bench::{generate_synthetic, Layout, SyntheticSpec};
    use planar_gnc::g2o::{to_g2o_string, write_poses};

    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec::new(Layout::Grid { rows: 8, cols: 8, step: 1.0 }, 0.01, 0.05, 0.3, 1);
    let (graph, truth) = generate_synthetic(&spec).unwrap();
    let input = dir.path().join("graph.g2o");
    let gt = dir.path().join("gt.g2o");
    fs::write(&input, to_g2o_string(&graph, None)).unwrap();
    write_poses(fs::File::create(&gt).unwrap(), &truth).unwrap();
    let out = dir.path().join("out");
    let a = args(
        &out,
        &["--input", input.to_str().unwrap(), "--gt", gt.to_str().unwrap(), "--rates", "0.2", "--runs", "1", "--seed", "1"],
    );
    let rows = run_experiment(&a).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].ate_pos.unwrap() < 0.5);

    // Without ground truth the ATE cells stay empty.
    let a = args(&out, &["--input", input.to_str().unwrap(), "--rates", "0.2"]);
    run_experiment(&a).unwrap();
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("0.2,0,,,"));
}

#[test]
fn bad_inputs_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.g2o");
    let err = run_experiment(&args(dir.path(), &["--input", missing.to_str().unwrap()])).unwrap_err();
    assert!(format!("{err:#}").contains("nope.g2o"));

    let broken = dir.path().join("broken.g2o");
    fs::write(&broken, "VERTEX_SE2 0 0 0 0\nEDGE_SE2 0 1 x 0 0 1 0 0 1 0 1\n").unwrap();
    assert!(run_experiment(&args(dir.path(), &["--input", broken.to_str().unwrap()])).is_err());

    assert!(run_experiment(&args(dir.path(), &["--synthetic", "grid:4x4", "--rates", "1.0"])).is_err());
    assert!(Args::try_parse_from(["planar-gnc-bench"]).is_err());
    assert!(Args::try_parse_from(["planar-gnc-bench", "--synthetic", "grid:3x3", "--input", "a.g2o"]).is_err());
}

#[test]
fn binary_exits_nonzero_on_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_planar-gnc-bench"))
        .args(["--input", "/definitely/missing.g2o", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!status.status.success());
    assert!(String::from_utf8_lossy(&status.stderr).contains("missing.g2o"));
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::{DMatrix, SymmetricEigen};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pec-traffic"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn small_spec(dir: &Path) -> PathBuf {
    write(dir, "spec.json", r#"{"n_days": 14, "n_locations": 3, "seed": 5}"#)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn empty_input_fails_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for text in ["", "date,location,minute,count\n"] {
        let input = write(tmp.path(), "empty.csv", text);
        let o = run(&["--input", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
        assert!(!out.exists());
    }
}

#[test]
fn schema_errors_are_line_numbered() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write(tmp.path(), "bad.csv", "date,location,minute,count\n2018-01-01,A,0,1\n2018-01-01,A,1440,1\n");
    let out = tmp.path().join("out");
    let o = run(&["--input", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.csv:3:"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn usage_and_config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec(tmp.path());
    let out = tmp.path().join("out");
    let (s, o) = (spec.to_str().unwrap(), out.to_str().unwrap());
    let cases: [&[&str]; 6] = [
        &["--synth", s, "--out", o, "--tau", "1.5"],
        &["--synth", s, "--out", o, "--k", "0"],
        &["--synth", s, "--out", o, "--grid-min", "7"],
        &["--synth", s, "--out", o, "--deflation", "sideways"],
        &["--synth", s, "--out", o, "--bogus"],
        &["--out", o],
    ];
    for args in cases {
        let r = run(args);
        assert_eq!(r.status.code(), Some(1), "{args:?}: {}", stderr(&r));
    }
    assert!(!out.exists());
    let bad_spec = write(tmp.path(), "bad.json", r#"{"n_days": 0}"#);
    assert_eq!(run(&["--synth", bad_spec.to_str().unwrap(), "--out", o]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn single_component_at_half_is_classical_pca() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec(tmp.path());
    let out = tmp.path().join("out");
    let args = ["--synth", spec.to_str().unwrap(), "--out", out.to_str().unwrap(), "--tau", "0.5", "--k", "1"];
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let (_, profiles) = read_csv(&out.join("profiles.csv"));
    let n = profiles.len();
    let p = profiles[0].len() - 2;
    let q = DMatrix::from_fn(p, n, |r, c| profiles[c][r + 2].parse::<f64>().unwrap());
    let mean = q.column_mean();
    let centered = DMatrix::from_fn(p, n, |r, c| q[(r, c)] - mean[r]);
    let eig = SymmetricEigen::new(&centered * centered.transpose() / n as f64);
    let top = eig.eigenvalues.imax();
    let pca = eig.eigenvectors.column(top);

    let (header, rows) = read_csv(&out.join("tau-0.5/components.csv"));
    assert_eq!(header, ["minute", "pec_1"]);
    assert_eq!(rows.len(), p);
    let phi: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    let cos: f64 = phi.iter().zip(pca.iter()).map(|(a, b)| a * b).sum::<f64>().abs();
    assert!(cos >= 1.0 - 1e-8, "|cos| = {cos}");
}

#[test]
fn counts_written_by_synth_read_back_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let common = ["--tau", "0.8", "--k", "2", "--restarts", "2", "--deflation", "projection-only"];
    let mut first = vec!["--synth", spec.to_str().unwrap(), "--out", a.to_str().unwrap()];
    first.extend(common);
    assert_eq!(run(&first).status.code(), Some(0));
    let counts = a.join("synth/counts.csv");
    let mut second = vec!["--input", counts.to_str().unwrap(), "--out", b.to_str().unwrap()];
    second.extend(common);
    assert_eq!(run(&second).status.code(), Some(0));
    for f in ["profiles.csv", "summary.csv", "tau-0.8/model.json", "tau-0.8/labels.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["deflation"], "projection-only");
    assert_eq!(manifest["input"]["n"], 42);
}

#[test]
fn artifact_tables_have_expected_shapes() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec(tmp.path());
    let out = tmp.path().join("out");
    let o = run(&["--synth", spec.to_str().unwrap(), "--out", out.to_str().unwrap(), "--tau", "0.95", "--tau", "0.1", "--k", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for tau in ["0.95", "0.1"] {
        let dir = out.join(format!("tau-{tau}"));
        let (h, rows) = read_csv(&dir.join("components.csv"));
        assert_eq!((h.len(), rows.len()), (4, 144));
        let (h, rows) = read_csv(&dir.join("scores.csv"));
        assert_eq!((h.len(), rows.len()), (5, 42));
        let (_, rows) = read_csv(&dir.join("labels.csv"));
        assert_eq!(rows.len(), 42 * 3);
        let (_, rows) = read_csv(&dir.join("proportions.csv"));
        // 3 locations + 7 weekdays, per component.
        assert_eq!(rows.len(), (3 + 7) * 3);
        let effects: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("effects.json")).unwrap()).unwrap();
        assert_eq!(effects["components"].as_array().unwrap().len(), 3);
    }
    let (_, rows) = read_csv(&out.join("summary.csv"));
    assert_eq!(rows.len(), 42);
    let (_, truth) = read_csv(&out.join("synth/truth.csv"));
    // ceil(0.05 * 14) = 1 injected day per location.
    assert_eq!(truth.len(), 3);
}

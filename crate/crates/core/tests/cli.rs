use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_subexp");
const PARAM_COLUMNS: [&str; 7] = ["b", "x0", "delta", "alpha", "beta", "x1", "x2"];

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("missing column {name}"))
}

#[test]
fn thm11_csv_schema_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("thm11.csv");
    let o = run(&["gallery", "thm11", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out);
    let lead = [
        "probe",
        "n",
        "m",
        "c",
        "log_num",
        "log_den",
        "ratio",
        "bracket_lo",
        "bracket_hi",
    ];
    assert_eq!(&header[..lead.len()], &lead);
    assert!(header.iter().any(|h| h == "bracketed"));
    assert!(!rows.is_empty());
    let want = ["4.0", "2.0", "0.25", "1.0", "2.0", "0.5", "1.5"];
    for row in &rows {
        for (name, v) in PARAM_COLUMNS.iter().zip(want) {
            assert_eq!(row[col(&header, name)], v);
        }
    }
}

#[test]
fn identical_config_gives_identical_bytes_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (path, threads) in [(&a, "1"), (&b, "4")] {
        let o = run(&[
            "probe",
            "conv",
            "c=0.5",
            "sequence.n_end=6",
            "--threads",
            threads,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = dir.path().join("c.json");
    let d = dir.path().join("d.json");
    for (path, threads) in [(&c, "2"), (&d, "3")] {
        let o = run(&[
            "gallery",
            "lem32",
            "--format",
            "json",
            "--threads",
            threads,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&c).unwrap(), std::fs::read(&d).unwrap());
}

#[test]
fn scaling_with_unit_window_is_all_ones() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    assert_eq!(
        run(&["probe", "scaling", "c=1", "--out", out.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let (header, rows) = read_csv(&out);
    let i = col(&header, "ratio");
    assert!(rows.iter().all(|r| r[i] == "1.0"));
}

#[test]
fn thm12_r_k_increases() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("thm12.csv");
    let o = run(&["gallery", "thm12", "k_max=4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out);
    let (ip, il, ir) = (col(&header, "probe"), col(&header, "label"), col(&header, "ratio"));
    let r: Vec<f64> = rows
        .iter()
        .filter(|row| row[ip] == "r_k" && row[il] == "R")
        .map(|row| row[ir].parse().unwrap())
        .collect();
    assert_eq!(r.len(), 4);
    assert!(r.windows(2).all(|w| w[1] > w[0]), "{r:?}");
}

#[test]
fn json_output_carries_config_keys_and_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out = dir.path().join("o.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"model": {{"b": 4, "x0": 2, "delta": 0.25, "alpha": 1, "beta": 2, "x1": 0.5, "x2": 1.5}},
                "quadrature": {{"rel_tol": 1e-9}},
                "probe": {{"sequence": {{"regime": "lambda", "lambda": 0, "side": 1, "n_start": 2, "n_end": 5}}, "a": -1, "c": 0.5}},
                "output": {{"format": "json", "path": {:?}}}}}"#,
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = run(&["probe", "long_tail", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["command"], "probe");
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);
    assert_eq!(v["rows"][0]["regime"], "lambda=0,side=1");
    assert_eq!(v["verdicts"].as_array().unwrap().len(), 1);
}

#[test]
fn eval_and_oracle_tables() {
    let o = run(&["eval", "sequence.n_end=5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("n,m,x,ln_x,h,log_phi"));
    assert_eq!(text.lines().count(), 3);

    let o = run(&["oracle", "uniform"]);
    assert_eq!(o.status.code(), Some(0));
    let mut r = csv::Reader::from_reader(o.stdout.as_slice());
    let i = r.headers().unwrap().iter().position(|h| h == "rel_err").unwrap();
    for rec in r.records() {
        let e: f64 = rec.unwrap()[i].parse().unwrap();
        assert!(e < 1e-5);
    }
}

#[test]
fn config_and_usage_errors_exit_two_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never.csv");
    let o = out.to_str().unwrap();
    assert_eq!(run(&["gallery", "thm99", "--out", o]).status.code(), Some(2));
    assert_eq!(run(&["probe", "nope", "--out", o]).status.code(), Some(2));
    assert_eq!(run(&["oracle", "nope", "--out", o]).status.code(), Some(2));
    assert_eq!(run(&["probe", "conv", "colour=red", "--out", o]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"model": {"x0": 5}}"#).unwrap();
    assert_eq!(
        run(&["gallery", "thm11", "--config", bad.to_str().unwrap(), "--out", o])
            .status
            .code(),
        Some(2)
    );
    std::fs::write(&bad, r#"{"modle": {}}"#).unwrap();
    assert_eq!(
        run(&["gallery", "thm11", "--config", bad.to_str().unwrap(), "--out", o])
            .status
            .code(),
        Some(2)
    );
    std::fs::write(&bad, "not json").unwrap();
    assert_eq!(
        run(&["eval", "--config", bad.to_str().unwrap(), "--out", o])
            .status
            .code(),
        Some(2)
    );
    assert!(!out.exists());
}

#[test]
fn quadrature_failure_exits_three_with_flagged_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("starved.json");
    let out = dir.path().join("partial.csv");
    std::fs::write(&cfg, r#"{"quadrature": {"max_evals": 1600}}"#).unwrap();
    let o = run(&[
        "probe",
        "conv",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let (header, rows) = read_csv(&out);
    let (is, ib) = (col(&header, "status"), col(&header, "bracketed"));
    assert!(rows.iter().any(|r| r[is] == "quadrature_failed" && r[ib] == "true"));
}

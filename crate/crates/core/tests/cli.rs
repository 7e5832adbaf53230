//! End-to-end runs of the `stattrade` binary.

use std::path::Path;
use std::process::{Command, Output};

fn stattrade(dir: &Path, args: &[&str], env_out: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stattrade"));
    cmd.current_dir(dir).args(args).env("RUST_LOG", "warn");
    match env_out {
        Some(v) => cmd.env("STATTRADE_OUT_DIR", v),
        None => cmd.env_remove("STATTRADE_OUT_DIR"),
    };
    cmd.output().unwrap()
}

fn gen_bars(dir: &Path, days: &str) {
    let out = stattrade(
        dir,
        &["gen", "gbm", "--out", "bars.csv", "--days", days, "--sigma", "0.25", "--seed", "5"],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn data_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn family_filter_and_output_dir_precedence() {
    let work = tempfile::tempdir().unwrap();
    let dir = work.path();
    gen_bars(dir, "12");
    std::fs::write(
        dir.join("run.toml"),
        "output_dir = \"from_config\"\n[data]\nbars = \"bars.csv\"\n",
    )
    .unwrap();

    let grid = ["run", "grid", "--config", "run.toml", "--family", "KDJ"];
    let out = stattrade(dir, &grid, Some("from_env"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(data_rows(&dir.join("from_env/reports.csv")), 15);
    assert_eq!(data_rows(&dir.join("from_env/daily_matrix.csv")), 12);
    assert!(!dir.join("from_config").exists());

    let mut with_flag = vec!["--out-dir", "from_flag"];
    with_flag.extend(grid);
    let out = stattrade(dir, &with_flag, Some("from_env"));
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.join("from_flag/reports.csv").exists());

    let out = stattrade(dir, &grid, None);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.join("from_config/reports.csv").exists());
}

#[test]
fn costs_never_improve_annual_return() {
    let work = tempfile::tempdir().unwrap();
    let dir = work.path();
    gen_bars(dir, "12");
    std::fs::write(dir.join("run.toml"), "[data]\nbars = \"bars.csv\"\n").unwrap();
    let out = stattrade(
        dir,
        &["--out-dir", "o", "run", "grid", "--config", "run.toml", "--family", "MA", "--costs", "both"],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(dir.join("o/reports.csv")).unwrap();
    let mut ar = std::collections::BTreeMap::<String, [f64; 2]>::new();
    for row in reader.records() {
        let row = row.unwrap();
        let slot = usize::from(&row[4] == "on");
        ar.entry(row[0].to_string()).or_default()[slot] = row[10].parse().unwrap();
    }
    assert_eq!(ar.len(), 192);
    for (id, [off, on]) in ar {
        assert!(on <= off, "{id}: {on} > {off}");
    }
}

#[test]
fn fatal_errors_exit_with_two() {
    let work = tempfile::tempdir().unwrap();
    let dir = work.path();
    assert_eq!(stattrade(dir, &["--bogus"], None).status.code(), Some(2));
    let missing = stattrade(dir, &["run", "grid", "--config", "absent.toml"], None);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("absent.toml"));

    std::fs::write(dir.join("bad.toml"), "[data]\nbars = \"bars.csv\"\ncolour = 1\n").unwrap();
    assert_eq!(stattrade(dir, &["run", "grid", "--config", "bad.toml"], None).status.code(), Some(2));
    assert_eq!(stattrade(dir, &["--help"], None).status.code(), Some(0));
}

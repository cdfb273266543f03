//! The `dimlab` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dimlab::format::load_measure;
use dimlab::ifs::IfsModel;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn dimlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dimlab")).args(args).output().unwrap()
}

fn text(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn build_output_reloads_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let model = configs().join("cantor-biased.toml");
    let out = dir.path().join("pi.txt");
    let run = dimlab(&["build", "--config", text(&model), "--depth", "5", "--out", text(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(load_measure(&out).unwrap(), IfsModel::load(&model).unwrap().build_measure(5).unwrap());
}

#[test]
fn verify_passes_on_the_uniform_cantor_config() {
    let config = configs().join("uniform-cantor.run.toml");
    let run = dimlab(&["verify", "--config", text(&config)]);
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert_eq!(run.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().any(|l| l == "verify: pass"));
}

#[test]
fn verify_refuses_windows_below_the_atom_resolution() {
    let config = configs().join("biased-cantor.run.toml");
    let run = dimlab(&["verify", "--config", text(&config), "--depth", "3"]);
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert_eq!(run.status.code(), Some(1), "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("FAIL resolution")));
}

#[test]
fn reports_repeat_byte_for_byte() {
    let config = configs().join("uniform-cantor.run.toml");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let run = dimlab(&["report", "--config", text(&config), "--out", text(dir.path()), "--q-grid", "-1,0,1"]);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }
    let read = |d: &Path| std::fs::read(d.join("report.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    let series = |d: &Path| {
        let mut v: Vec<_> = std::fs::read_dir(d.join("series"))
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_owned(), std::fs::read(&p).unwrap())
            })
            .collect();
        v.sort();
        v
    };
    assert_eq!(series(a.path()), series(b.path()));
}

#[test]
fn metric_prints_the_distance_and_witness() {
    let dir = tempfile::tempdir().unwrap();
    let (first, second, witness) = (dir.path().join("a.txt"), dir.path().join("b.txt"), dir.path().join("w.txt"));
    std::fs::write(&first, "0.0 1.0\n").unwrap();
    std::fs::write(&second, "1.5 1.0\n").unwrap();
    let run = dimlab(&["metric", text(&first), text(&second), "--witness", text(&witness)]);
    assert!(run.status.success());
    let d: f64 = String::from_utf8_lossy(&run.stdout).trim().parse().unwrap();
    assert!((d - 1.5).abs() < 1e-9);
    assert_eq!(std::fs::read_to_string(&witness).unwrap().lines().count(), 2);
}

#[test]
fn typgen_writes_loadable_measures() {
    let dir = tempfile::tempdir().unwrap();
    let model = configs().join("cantor-uniform.toml");
    let packing = dir.path().join("packing.txt");
    let packing_args = |t: &'static str| {
        vec![
            "typgen",
            "packing",
            "--config",
            text(&model),
            "--depth",
            "8",
            "--x",
            "0",
            "--s",
            "1",
            "--q",
            "0",
            "--t",
            t,
        ]
    };
    let mut args = packing_args("0.5");
    args.extend(["--out", text(&packing)]);
    let run = dimlab(&args);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let written = std::fs::read_to_string(&packing).unwrap();
    assert!(written.lines().any(|l| l.starts_with("# r_xs = ")));
    let m = load_measure(&packing).unwrap();

    let net = dir.path().join("net.txt");
    let run = dimlab(&["typgen", "net", "--sample", text(&packing), "--n", &m.len().to_string(), "--out", text(&net)]);
    assert!(run.status.success());
    assert_eq!(load_measure(&net).unwrap().len(), m.len());

    let run = dimlab(&packing_args("0.7"));
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn bad_input_exits_with_code_two() {
    let run = dimlab(&["report", "--config", "/nonexistent/run.toml"]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).starts_with("error: "));
}

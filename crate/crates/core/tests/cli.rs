use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bidistill::data::{load_manifest, MANIFEST_FILE};

const BIN: &str = env!("CARGO_BIN_EXE_bidistill");

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .env_remove("BD_SEED")
        .output()
        .expect("spawn")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const TINY: [&str; 6] = ["--set", "max_epochs=2", "--set", "d_h=8", "--set", "expansion=2"];

#[test]
fn synth_sizes_and_reproducibility() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    assert_eq!(code(&run(&["synth", "--out", "full"], d)), 0);
    let full = load_manifest(&d.join("full").join(MANIFEST_FILE)).unwrap();
    assert_eq!(full.len(), 600);
    assert!(full.samples.iter().all(|s| s.split.is_some()));

    assert_eq!(code(&run(&["synth", "--out", "a", "--n", "10", "--seed", "4"], d)), 0);
    assert_eq!(code(&run(&["synth", "--out", "b", "--n", "10", "--seed", "4"], d)), 0);
    let ds = load_manifest(&d.join("a").join(MANIFEST_FILE)).unwrap();
    assert_eq!(ds.len(), 10);
    assert_eq!(tree(&d.join("a")), tree(&d.join("b")));
}

#[test]
fn output_directory_guard() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    assert_eq!(code(&run(&["synth", "--out", "x", "--n", "10"], d)), 0);
    let before = tree(&d.join("x"));
    let o = run(&["synth", "--out", "x", "--n", "10"], d);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
    assert_eq!(code(&run(&["synth", "--out", "x", "--n", "10", "--force"], d)), 0);
    assert_eq!(tree(&d.join("x")), before);
}

#[test]
fn seed_environment_fallback() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let with_env = |out: &str, seed: &str| {
        Command::new(BIN)
            .args(["synth", "--out", out, "--n", "10"])
            .current_dir(d)
            .env("BD_SEED", seed)
            .output()
            .unwrap()
    };
    assert_eq!(code(&with_env("e", "9")), 0);
    assert_eq!(code(&run(&["synth", "--out", "f", "--n", "10", "--seed", "9"], d)), 0);
    assert_eq!(tree(&d.join("e")), tree(&d.join("f")));
    assert_eq!(code(&with_env("g", "nine")), 2);
}

#[test]
fn usage_errors() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    assert_eq!(code(&run(&["synth", "--out", "data", "--n", "30"], d)), 0);

    let o = run(&["train", "--method", "bd", "--out", "m"], d);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--data"));

    let o = run(&["train", "--method", "bogus", "--data", "data", "--out", "m"], d);
    assert_eq!(code(&o), 2);
    let msg = String::from_utf8_lossy(&o.stderr);
    for m in ["bd", "filling", "ae", "ensemble", "image-only", "clinical-only"] {
        assert!(msg.contains(m), "{msg}");
    }

    assert_eq!(code(&run(&["train", "--method", "bd", "--data", "data", "--out", "m", "--set", "nope=1"], d)), 2);
    assert_eq!(code(&run(&["ablate", "--study", "bogus", "--data", "data", "--out", "a"], d)), 2);
    assert_eq!(code(&run(&["frobnicate"], d)), 2);

    fs::write(d.join("bad.cfg"), "lr = 0.1\nthis is not a pair\n").unwrap();
    let o = run(&["train", "--method", "bd", "--data", "data", "--out", "m", "--config", "bad.cfg"], d);
    assert_ne!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2:"));
}

#[test]
fn train_then_eval() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    assert_eq!(code(&run(&["synth", "--out", "data", "--n", "40"], d)), 0);
    fs::write(d.join("run.cfg"), "# short run\nmax_epochs = 3\nlambda_m = 0.4\n").unwrap();
    for method in ["bd", "filling", "ae"] {
        let mut args = vec!["train", "--method", method, "--data", "data", "--out", method, "--config", "run.cfg"];
        args.extend(TINY);
        let o = run(&args, d);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let echo = fs::read_to_string(d.join("bd/config.txt")).unwrap();
    // Flags win over the file.
    assert!(echo.contains("max_epochs = 2\n") && echo.contains("lambda_m = 0.4\n"), "{echo}");
    assert!(d.join("ae/train_log_stage1.csv").exists() && d.join("ae/train_log_stage2.csv").exists());
    let log = fs::read_to_string(d.join("bd/train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,mul_c,mul_f,sgl_c,sgl_f,monitored_metric\n"));

    let o = run(
        &[
            "eval", "--checkpoint", "bd/checkpoint.bdck", "filling/checkpoint.bdck", "ae/checkpoint.bdck",
            "--data", "data", "--rates", "0,0.5,1", "--seeds", "1,2,3", "--out", "ev",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(d.join("ev/report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3 * 3 * 3);
    for method in ["bd", "filling", "ae"] {
        for rate in ["0.000000", "0.500000", "1.000000"] {
            let n = rows.iter().filter(|r| r.starts_with(&format!("{method},{rate},"))).count();
            assert_eq!(n, 3);
        }
    }
    for f in ["deltas.csv", "report.json", "report.svg", "config.txt"] {
        assert!(d.join("ev").join(f).exists(), "{f}");
    }

    let o = run(&["eval", "--checkpoint", "bd/checkpoint.bdck", "--data", "data", "--rates", "0,1.2", "--out", "ev2"], d);
    assert_eq!(code(&o), 2);
    let o = run(&["eval", "--checkpoint", "bd/checkpoint.bdck", "--data", "data", "--role", "image", "--out", "ev3"], d);
    assert_eq!(code(&o), 2);
}

#[test]
fn image_role_end_to_end() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    assert_eq!(code(&run(&["synth", "--out", "data", "--n", "40"], d)), 0);
    let mut args = vec!["train", "--method", "bd", "--data", "data", "--out", "m", "--set", "missing_role=image"];
    args.extend(TINY);
    assert_eq!(code(&run(&args, d)), 0);
    let o = run(&["eval", "--checkpoint", "m/checkpoint.bdck", "--data", "data", "--role", "image", "--out", "ev"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gradcheck_command() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let o = run(&["gradcheck", "--out", "gc"], d);
    assert_eq!(code(&o), 0);
    let report = fs::read_to_string(d.join("gc/gradcheck.txt")).unwrap();
    for name in ["multi-objective", "single-objective", "distillation mask", "filling", "autoencoder", "image-only", "clinical-only"] {
        assert!(report.contains(name), "{name}");
    }
    let o = run(&["gradcheck", "--out", "bad", "--corrupt"], d);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn ablate_directions_smoke() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    assert_eq!(code(&run(&["synth", "--out", "data", "--n", "40"], d)), 0);
    let mut args = vec!["ablate", "--study", "directions", "--data", "data", "--out", "ab"];
    args.extend(TINY);
    let o = run(&args, d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(d.join("ab/report.csv")).unwrap();
    let methods: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["neither", "neither", "s2m", "s2m", "m2s", "m2s", "both", "both"]);
}

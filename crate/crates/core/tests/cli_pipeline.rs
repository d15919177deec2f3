use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = "\
seed=11
synthetic.n_sites=30
synthetic.raster_cells=6
split.validation=10
subsample.method=stratified
subsample.size=15
mcmc.iterations=600
mcmc.burn_in=300
mcmc.thin=10
predict.grid_draws=20
predict.sample_rasters=2
";

fn glgm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glgm"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn setup(config: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, config).unwrap();
    (dir, conf)
}

fn stage(conf: &Path, out: &Path, cmd: &str) -> Output {
    glgm(&[cmd, "--config", conf.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            for (n, b) in files(&p) {
                v.push((format!("{}/{n}", p.file_name().unwrap().to_string_lossy()), b));
            }
        } else {
            v.push((p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()));
        }
    }
    v.sort();
    v
}

#[test]
fn stages_run_in_order_and_write_their_files() {
    let (dir, conf) = setup(SMALL);
    let out = dir.path().join("out");
    for cmd in ["simulate", "subsample", "fit", "glm", "predict", "assess"] {
        let o = stage(&conf, &out, cmd);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for name in [
        "dataset.csv", "truth.csv", "split.txt", "training.txt", "strata.csv", "elevation.asc",
        "vegetation.asc", "chain.csv", "chain_summary.csv", "chain_steps.csv", "glm_fit.csv",
        "glm_probs.csv", "glm_counts.csv", "pred_probs.csv", "pred_counts.csv", "grid_mean.asc",
        "grid_sample_1.asc", "assessment.csv", "totals.csv", "manifest.csv",
    ] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let chain = fs::read_to_string(out.join("chain.csv")).unwrap();
    assert_eq!(chain.lines().count(), 31);
    let report = fs::read_to_string(out.join("assessment.csv")).unwrap();
    assert!(report.contains("bglgm") && report.contains("glm,"));
    assert!(!files(&out).iter().any(|(n, _)| n.ends_with(".partial")));
}

#[test]
fn fit_keeps_the_requested_number_of_draws() {
    let conf_text = SMALL
        .replace("mcmc.iterations=600", "mcmc.iterations=1000")
        .replace("mcmc.burn_in=300", "mcmc.burn_in=500");
    let (dir, conf) = setup(&conf_text);
    let out = dir.path().join("out");
    for cmd in ["simulate", "subsample", "fit"] {
        assert!(stage(&conf, &out, cmd).status.success());
    }
    let chain = fs::read_to_string(out.join("chain.csv")).unwrap();
    assert_eq!(chain.lines().count(), 51);
    assert!(chain.starts_with("draw,beta0,beta1,beta2,beta3,sigma,tau,phi,t_1,"));
}

#[test]
fn pipeline_is_byte_identical_for_a_seed() {
    let (dir, conf) = setup(SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(stage(&conf, &a, "pipeline").status.success());
    assert!(stage(&conf, &b, "pipeline").status.success());
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), fb.len());
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs");
    }
    let c = dir.path().join("c");
    let o = glgm(&["pipeline", "--config", conf.to_str().unwrap(), "--seed", "12", "--out", c.to_str().unwrap()]);
    assert!(o.status.success());
    assert_ne!(fs::read(a.join("dataset.csv")).unwrap(), fs::read(c.join("dataset.csv")).unwrap());
}

#[test]
fn replicated_pipeline_writes_a_summary() {
    let (dir, conf) = setup(&format!("{SMALL}replications=2\npredict.grid=false\n"));
    let out = dir.path().join("out");
    assert!(stage(&conf, &out, "pipeline").status.success());
    let s = fs::read_to_string(out.join("replications.csv")).unwrap();
    assert_eq!(s.lines().count(), 5);
    assert!(out.join("rep_01/assessment.csv").exists() && out.join("rep_02/assessment.csv").exists());
}

#[test]
fn failed_commit_leaves_partial_files_and_exits_nonzero() {
    let (dir, conf) = setup(SMALL);
    let out = dir.path().join("out");
    for cmd in ["simulate", "subsample"] {
        assert!(stage(&conf, &out, cmd).status.success());
    }
    // A directory in the way makes the final rename fail.
    fs::create_dir_all(out.join("chain.csv")).unwrap();
    let o = stage(&conf, &out, "fit");
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("glgm:"));
    assert!(out.join("chain.csv.partial").exists());
}

#[test]
fn later_stage_without_inputs_fails() {
    let (dir, conf) = setup(SMALL);
    let o = stage(&conf, &dir.path().join("empty"), "fit");
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("dataset.csv"));
}

#[test]
fn bad_configs_are_rejected_with_line_numbers() {
    for (text, needle) in [
        ("seed=1\nmcmc.iterationz=5\n", "line 2"),
        ("mcmc.iterations=100\nmcmc.burn_in=100\n", "burn"),
        ("seed=1\nseed=2\n", "line 2"),
        ("synthetic.sigma2=-1\n", "sigma2"),
    ] {
        let (dir, conf) = setup(text);
        let o = stage(&conf, &dir.path().join("o"), "simulate");
        assert!(!o.status.success(), "{text}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{text}: {err}");
    }
}

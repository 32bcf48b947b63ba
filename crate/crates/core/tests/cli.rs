use std::path::Path;
use std::process::{Command, Output};

fn kpzlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kpzlab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("KPZLAB_OUT")
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path, experiment: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(experiment).join("manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn data_rows(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().filter(|l| !l.starts_with('#')).skip(1).map(str::to_string).collect()
}

#[test]
fn exact_experiment_passes_with_trailing_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let o = kpzlab(&["asep-invariance", "--n", "8", "--rho", "0.5"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(dir.path(), "asep-invariance");
    assert_eq!(m["status"], "pass");
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    let csv = std::fs::read_to_string(dir.path().join("asep-invariance/reports.csv")).unwrap();
    assert!(csv.starts_with("# schema=v1\n# config_hash="));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("asep-invariance/report.json")).unwrap()).unwrap();
    assert_eq!(report["params"]["n"], 8);
}

#[test]
fn invalid_parameters_exit_with_code_2_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = kpzlab(&["asep-sim", "--set", "rho=1.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("asep-sim.rho"));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 3\n[she-sim]\nreplicas = \"many\"\n").unwrap();
    let o = kpzlab(&["she-sim", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("she-sim.replicas"));

    std::fs::write(&cfg, "sede = 3\n").unwrap();
    let o = kpzlab(&["she-sim", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sede"));
}

#[test]
fn stein_test_accepts_exact_gaussian_samples() {
    let dir = tempfile::tempdir().unwrap();
    let o = kpzlab(&["stein-test", "--mode", "exact-gaussian", "--samples", "4000", "--resamples", "400", "--seed", "11"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("stein[")).count(), 6);
}

#[test]
fn error_scaling_writes_one_row_per_width_and_records_the_slope() {
    let dir = tempfile::tempdir().unwrap();
    let o = kpzlab(
        &["error-scaling", "--baseline", "false", "--paths", "200", "--realizations", "2", "--resamples", "100", "--seed", "4"],
        dir.path(),
    );
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&dir.path().join("error-scaling/error_scaling.csv")).len(), 4);
    let m = manifest(dir.path(), "error-scaling");
    assert!(m["summary"]["slope"].as_f64().unwrap().is_finite());
    assert!(m["wall_time_s"].as_f64().unwrap() > 0.0);
}

#[test]
fn printed_config_reloads_to_the_same_hash() {
    let dir = tempfile::tempdir().unwrap();
    let o = kpzlab(&["ibp-init", "--seed", "77", "--widths", "0.3,0.15", "--print-config"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("seed = 77"));
    let cfg = dir.path().join("effective.toml");
    std::fs::write(&cfg, &text).unwrap();
    let again = kpzlab(&["ibp-init", "--config", cfg.to_str().unwrap(), "--print-config"], dir.path());
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["stein-test", "--replicas", "1000", "--resamples", "300", "--seed", "21"];
    let mut reports = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(threads);
        let mut a = args.to_vec();
        a.extend(["--threads", threads]);
        let o = kpzlab(&a, &out);
        assert!(matches!(o.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&o.stderr));
        reports.push(std::fs::read(out.join("stein-test/report.json")).unwrap());
        assert_eq!(manifest(&out, "stein-test")["threads"], threads.parse::<u64>().unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = kpzlab(&["no-such-thing"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_lists_each_experiment_with_its_description() {
    let o = Command::new(env!("CARGO_BIN_EXE_kpzlab")).arg("--help").output().unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("stein-test"), "{text}");
    assert!(text.contains("Gaussian Stein test"), "{text}");
    assert!(!text.contains("Options shared by every"), "{text}");
}

use std::fs;
use std::process::Command;

fn bprsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bprsim"))
}

fn quick_config(dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("quick.toml");
    fs::write(
        &path,
        "modulation = 4\nsnr_grid_db = [0.0, 10.0]\nmin_trials = 2000\nmax_trials = 4000\nblock_size = 1000\n\
         fig2_realizations = 500\nfig2_snr_grid_db = [0.0, 30.0]\nunion_bound_realizations = 5\n",
    )
    .unwrap();
    path
}

#[test]
fn table1_writes_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = bprsim()
        .args(["table1", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let record: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(record["status"], "ok");
    let table = fs::read_to_string(out.join("table1.csv")).unwrap();
    assert!(table.starts_with("scheme,q,kappa,measured_kappa_min,measured_kappa_max\n"));
    assert!(table.contains("bpr-real,2,0.5236"));
    assert!(out.join("config.json").exists() && out.join("manifest.json").exists());
}

#[test]
fn all_verb_is_reproducible_and_honours_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = bprsim()
            .arg("all")
            .arg("--config")
            .arg(&cfg)
            .args([
                "--seed",
                "11",
                "--scheme",
                "dft,bpr-real",
                "--norm",
                "eq10",
                "--channel",
                "rayleigh",
                "--out",
            ])
            .arg(&out)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a");
    let b = run("b");
    for f in ["table1.csv", "fig1.csv", "fig2.csv", "fig3.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let fig3 = fs::read_to_string(a.join("fig3.csv")).unwrap();
    assert!(fig3.starts_with("scheme,modulation,metric,gamma0_db,value,ci_half_width,n_trials\n"));
    assert!(fig3.contains("ber_mc_eq10") && !fig3.contains("ber_mc_eq1,"));
    assert!(!fig3.contains("hadamard"));
    let config: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["seed"], 11);
    assert_eq!(config["channel"], "rayleigh");
}

#[test]
fn trials_flag_caps_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let out = dir.path().join("t");
    let o = bprsim()
        .arg("fig3")
        .arg("--config")
        .arg(&cfg)
        .args(["--trials", "1000", "--mod", "16", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fig3 = fs::read_to_string(out.join("fig3.csv")).unwrap();
    for line in fig3.lines().filter(|l| l.contains("ber_mc")) {
        assert!(line.ends_with(",1000"), "{line}");
        assert!(line.contains(",16,"));
    }
}

#[test]
fn failures_emit_json_and_nonzero_exit() {
    for args in [
        vec!["fig2", "--mod", "32"],
        vec!["fig2", "--scheme", "nope"],
        vec!["fig3", "--norm", "eq7"],
        vec!["fig1", "--config", "/definitely/missing.toml"],
        vec!["bogus"],
    ] {
        let o = bprsim().args(&args).output().unwrap();
        assert!(!o.status.success(), "{args:?}");
        let err: serde_json::Value = serde_json::from_slice(&o.stderr)
            .unwrap_or_else(|_| panic!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)));
        assert!(err["error"]["kind"].is_string() && err["error"]["message"].is_string());
    }
}

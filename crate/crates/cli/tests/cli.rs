use std::path::Path;
use std::process::{Command, Output};

fn bosoncert(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bosoncert"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn pipeline_from_unitary_to_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = |args: &[&str]| {
        let out = bosoncert(args, d);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    ok(&["gen-unitary", "--m", "8", "--seed", "3", "--out", "u.json"]);
    ok(&["simulate", "--unitary", "u.json", "--n", "3", "--out", "q.bsd"]);
    ok(&["simulate", "--kind", "distinguishable", "--unitary", "u.json", "--n", "3", "--out", "c.bsd"]);
    ok(&["sample", "--table", "q.bsd", "--n_m", "5000", "--seed", "1", "--stream", "1", "--out", "s1.csv"]);
    ok(&["sample", "--table", "q.bsd", "--n_m", "5000", "--seed", "1", "--stream", "2", "--out", "s2.csv"]);
    ok(&["sample", "--m", "8", "--n", "3", "--n_m", "5000", "--seed", "1", "--out", "u.csv"]);
    let cg = ok(&["coarsegrain", "--sample", "s1.csv", "--target_n_b", "10", "--out", "p.json", "--apply", "s2.csv"]);
    let counts: serde_json::Value = serde_json::from_slice(&cg.stdout).unwrap();
    let total: u64 = counts["s2.csv"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(total, 5000);

    let verdict = |other: &str| -> serde_json::Value {
        let out = ok(&["certify", "--sample1", "s1.csv", "--sample2", other, "--partition", "p.json"]);
        serde_json::from_slice(&out.stdout).unwrap()
    };
    assert_eq!(verdict("u.csv")["pass"], false);
    let same = verdict("s2.csv");
    assert!(same["p_value"].as_f64().unwrap() > 0.0);
}

#[test]
fn ion_chain_unitary_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = bosoncert(
        &[
            "ion-chain", "--m", "6", "--omega_z", "188495.56", "--omega_x", "25132741.2",
            "--tau", "1e-4", "--timing_error", "0.03", "--out", "ion.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("ion.json").exists());
}

#[test]
fn campaign_with_overrides_then_plots() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("cfg.json"),
        r#"{"system":{"kind":"haar","m":6,"n":3,"seed":4},"n_m":2000,"n_s":50,
            "targets":[{"role":"quantum2"},{"role":"uniform"}],"target_n_b":[8],
            "alpha":0.01,"master_seed":3}"#,
    )
    .unwrap();
    let args = [
        "campaign", "--config", "cfg.json", "--n_s", "6", "--system.seed", "5", "--output_dir", "run",
    ];
    let out = bosoncert(&args, d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("run/report.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 6);
    assert_eq!(report["config"]["system"]["seed"], 5);

    let out = bosoncert(&["emit-plots", "--dir", "run", "--out", "plots"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("plots/summary.csv").exists());
    assert!(d.join("plots/coarse_nb8.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // bad alpha is a validation error
    let out = bosoncert(&["campaign", "--system", r#"{"kind":"haar","m":4,"n":2,"seed":1}"#, "--alpha", "1.5"], d);
    assert_eq!(code(&out), 2);
    // unknown field and unknown subcommand flag
    assert_eq!(code(&bosoncert(&["campaign", "--bogus", "1"], d)), 2);
    assert_eq!(code(&bosoncert(&["gen-unitary", "--m", "4"], d)), 2);
    // collision inputs have no distinguishable table
    assert_eq!(code(&bosoncert(&["gen-unitary", "--m", "4", "--seed", "1", "--out", "u.json"], d)), 0);
    let out = bosoncert(
        &["simulate", "--kind", "distinguishable", "--unitary", "u.json", "--input", "2,0,0,0", "--out", "c.bsd"],
        d,
    );
    assert_eq!(code(&out), 2);
    // emitting plots for a directory without a campaign
    assert_eq!(code(&bosoncert(&["emit-plots", "--dir", ".", "--out", "p"], d)), 2);
    // unreadable output location is a runtime failure
    let out = bosoncert(&["gen-unitary", "--m", "4", "--seed", "1", "--out", "missing/dir/u.json"], d);
    assert_eq!(code(&out), 1);
}

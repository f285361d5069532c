use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spsfom"))
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin()
        .args(args)
        .env_remove("SPSFOM_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Value of a `key = value` line.
fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| {
            l.strip_prefix(key)
                .and_then(|r| r.trim_start().strip_prefix('='))
        })
        .unwrap_or_else(|| panic!("no {key} in\n{text}"))
        .trim()
        .parse()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, body).unwrap();
    p
}

const SIV_EMITTER: &str =
    "emitter.gammaR_ns = 8.3\nemitter.gammaStar_GHz = 500\nemitter.omega_THz = 405\n";

#[test]
fn hybrid_preset_headline_numbers() {
    let cfg = example("siv_hybrid.cfg");
    let o = run(&["fom", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!((field(&s, "Ibeta_etaR") - 0.83).abs() < 0.01);
    assert!((field(&s, "I") - 0.87).abs() < 0.01);
    assert!((field(&s, "beta") - 0.97).abs() < 0.01);
    assert!((field(&s, "I0_beta0_etaR") - 0.86).abs() < 0.01);
}

#[test]
fn hybrid_preset_without_sideband() {
    let text = std::fs::read_to_string(example("siv_hybrid.cfg")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &text.replace("psb.sample = sample5", "psb.sample = none"),
    );
    let s = stdout(&run(&["fom", "--config", cfg.to_str().unwrap()]));
    assert!((field(&s, "Ibeta_etaR") - 0.86).abs() < 0.01);
    assert!(!s.contains("DW ="));
}

#[test]
fn no_dephasing_no_quench_is_ideal() {
    // With a 1 ms lifetime, 1 − β ≈ γ_r/R stays far below 1e-6.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "emitter.gammaR_ns = 1e6\nemitter.gammaStar_GHz = 0\nemitter.omega_THz = 405\ncavity.g_GHz = 100\ncavity.kappa_GHz = 1000\n",
    );
    for method in ["full", "simplified", "oracle"] {
        let s = stdout(&run(&[
            "fom",
            "--config",
            cfg.to_str().unwrap(),
            "--method",
            method,
        ]));
        assert!((field(&s, "I") - 1.0).abs() < 1e-6, "{method}: {s}");
        assert!((field(&s, "beta") - 1.0).abs() < 1e-6, "{method}: {s}");
    }
}

#[test]
fn unknown_key_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SIV_EMITTER}cavity.purcel = 10\n"));
    let o = run(&["fom", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("line 4") && err.contains("cavity.purcel"),
        "{err}"
    );
}

#[test]
fn both_cavity_families_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{SIV_EMITTER}cavity.purcell = 10\ncavity.Q = 60\ncavity.g_GHz = 100\n"),
    );
    assert_eq!(
        run(&["fom", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let cfg = write_config(dir.path(), SIV_EMITTER);
    assert_eq!(
        run(&["fom", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn missing_config_file_exits_3() {
    let o = run(&["fom", "--config", "/nonexistent/dir/x.cfg"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unwritable_output_exits_3() {
    let cfg = example("siv_hybrid.cfg");
    let o = run(&[
        "fom",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        "/nonexistent/dir/report.txt",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bad_thread_env_exits_2() {
    let o = bin()
        .args(["validate", "--samples", "0"])
        .env("SPSFOM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_zero_samples_is_noop() {
    let o = run(&["validate", "--samples", "0"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("status = ok"));
}

#[test]
fn validate_passes_and_is_reproducible() {
    let a = run(&["validate", "--samples", "100", "--seed", "11"]);
    let b = run(&["validate", "--samples", "100", "--seed", "11"]);
    assert!(a.status.success(), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
    let s = stdout(&a);
    assert!(field(&s, "beta_max_rel_dev") < 1e-9);
    assert!(field(&s, "envelope_C_fit") < 5.0);
    let c = run(&["validate", "--samples", "100", "--seed", "12"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn validate_violation_exits_1_with_offender() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "validate.C = 0.01\n");
    let o = run(&[
        "validate",
        "--samples",
        "20",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let s = stdout(&o);
    assert!(
        s.contains("status = violation") && s.contains("worst = sample="),
        "{s}"
    );
}

#[test]
fn psb_sample5_values() {
    let s = stdout(&run(&[
        "psb",
        "--config",
        example("siv_hybrid.cfg").to_str().unwrap(),
    ]));
    assert!((field(&s, "DW") - 0.884).abs() < 0.005);
    assert!((field(&s, "F") - 0.15).abs() < 0.01);
    assert!((field(&s, "S0") - 9.6e-4).abs() < 0.2e-4);
}

#[test]
fn psb_writes_spectrum_and_reads_file_spectra() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("spectrum.csv");
    let o = run(&[
        "psb",
        "--config",
        example("siv_hybrid.cfg").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text
        .lines()
        .any(|l| l == "lambda_nm,zpl,psb,total,cavity,cavity_psb"));

    let coeffs = dir.path().join("s5.csv");
    std::fs::write(
        &coeffs,
        spsfom::psb::builtin_spectrum(spsfom::psb::Sample::Sample5).to_csv(),
    )
    .unwrap();
    let cfg = write_config(dir.path(), "psb.sample = file:s5.csv\ncavity.Q = 60\n");
    let s = stdout(&run(&["psb", "--config", cfg.to_str().unwrap()]));
    assert!((field(&s, "DW") - 0.884).abs() < 1e-9);

    let cfg = write_config(dir.path(), "psb.sample = file:missing.csv\ncavity.Q = 60\n");
    assert_eq!(
        run(&["psb", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn sweep_two_by_two_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "{SIV_EMITTER}cavity.etaR = 0.5\nquench.modes = 0.5:15000\nsweep.bareDecayRatio = 1e-4\n\
             sweep.x = R/gammaStar:log:1:10:2\nsweep.y = kappa/gammaStar:log:1:10:2\n"
        ),
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = run(&[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body.len(), 5);
    assert!(body[0].starts_with("ix,iy,"));
    assert!(text.lines().any(|l| l.starts_with("# config_sha256=")));
    assert!(text.lines().any(|l| l == "# seed=0"));
}

#[test]
fn sweep_without_axes_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{SIV_EMITTER}sweep.x = R/gammaStar:log:1:10:2\n"),
    );
    assert_eq!(
        run(&["sweep", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let cfg = write_config(
        dir.path(),
        &format!("{SIV_EMITTER}sweep.x = R/gammaStar:log:10:1:2\nsweep.y = Q:log:1:10:2\n"),
    );
    assert_eq!(
        run(&["sweep", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn optimize_single_mode_map() {
    let o = run(&[
        "optimize",
        "--config",
        example("single_mode_map.cfg").to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!((field(&s, "max_Ibeta") - 0.92).abs() < 0.01);
    assert!(field(&s, "closed_form.kappa_rel_dev").abs() < 0.15);
    assert!(field(&s, "closed_form.g_rel_dev").abs() < 0.15);
    assert!(s.contains("on_boundary = false"));
}

#[test]
fn optimize_qmax_scan_single_detuning() {
    let text = std::fs::read_to_string(example("hybrid_q_scan.cfg")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &text.replace("qmax.DeltaEff_THz = 5:120:12", "qmax.DeltaEff_THz = 30"),
    );
    let o = run(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    let rows: Vec<&str> = s.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2, "{s}");
}

#[test]
fn bad_method_flag_exits_2() {
    let o = run(&[
        "fom",
        "--config",
        example("siv_hybrid.cfg").to_str().unwrap(),
        "--method",
        "exact",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

const BIN: &str = env!("CARGO_BIN_EXE_miso-delay");

const SMALL_IMPERFECT: &str = r#"
[system]
n_antennas = 8
n_users_total = 120
n_slot_symbols = 400
n_ul_train = 10
n_dl_train = 10
p_total = "20 dB"
p_uplink = "15 dB"
deadline = 120
csi_mode = "imperfect-fbl"

[grid]
n_mu = 64
n_rates = 80

[sweep]
alphas = [30.0, 60.0, 90.0]

[simulate]
n_slots = 10000
mode = "full-channel"

[run]
seed = 9
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("scenario.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_in(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

/// Data rows (header excluded) of a CSV with `#` comment lines.
fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let body = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, body)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("missing column {name}"))
}

#[test]
fn analyze_ideal_families() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[system]
n_antennas = 8
n_users_total = 120
n_slot_symbols = 400
p_total = "20 dB"
deadline = 120
csi_mode = "ideal"

[sweep]
n_antennas = [2, 4, 6, 8, 10]
alpha_min = 20.0
alpha_max = 120.0
alpha_steps = 3
"#,
    );
    let out = run_in("analyze", &cfg, dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let (h, es) = rows(&dir.path().join("expected_service.csv"));
    let nt = col(&h, "n_antennas");
    let mut families: Vec<&str> = es.iter().map(|r| r[nt].as_str()).collect();
    families.dedup();
    assert_eq!(families, ["2", "4", "6", "8", "10"]);

    let (h, pv) = rows(&dir.path().join("pv_vs_alpha.csv"));
    assert_eq!(pv.len(), 15);
    let b = col(&h, "pv_bound");
    for r in &pv {
        let v: f64 = r[b].parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }

    let text = std::fs::read_to_string(dir.path().join("pv_vs_alpha.csv")).unwrap();
    assert!(text.starts_with("# miso-delay "));
    assert!(text.lines().any(|l| l.starts_with("# config_sha256 ") && l.len() == "# config_sha256 ".len() + 64));
}

#[test]
fn empty_sweep_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[system]
n_antennas = 4
n_users_total = 12
n_slot_symbols = 100
p_total = 10.0
deadline = 12
csi_mode = "ideal"

[sweep]
alphas = []
k_avg = []
"#,
    );
    let out = run_in("analyze", &cfg, dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["expected_service.csv", "pv_vs_alpha.csv"] {
        let (header, body) = rows(&dir.path().join(name));
        assert!(!header.is_empty());
        assert!(body.is_empty(), "{name} should have no data rows");
    }
}

#[test]
fn unknown_key_fails_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL_IMPERFECT.replace("n_slots = 10000", "n_slots = 10000\nslots = 5"));
    let out = run_in("simulate", &cfg, dir.path(), &[]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("slots") && err.contains("simulate"), "{err}");
}

#[test]
fn zero_draws_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{SMALL_IMPERFECT}\n[validate]\nk_sched = 5\ntarget_cap_bits = 6.0\nn_estimates = 2\nn_draws = 0\nrate_min = 4.0\nrate_max = 6.0\nrate_steps = 3\n"
    );
    let cfg = write_config(dir.path(), &text);
    let out = run_in("validate", &cfg, dir.path(), &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_draws"));
}

#[test]
fn validate_two_users_bounds_coincide() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{}\n[validate]\nk_sched = 2\ntarget_cap_bits = 8.0\ntol_bits = 0.02\nn_estimates = 4\nn_draws = 20000\nrate_min = 6.0\nrate_max = 8.5\nrate_steps = 6\n",
        SMALL_IMPERFECT.replace("imperfect-fbl", "imperfect")
    );
    let cfg = write_config(dir.path(), &text);
    let out = run_in("validate", &cfg, dir.path(), &["--threads", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, body) = rows(&dir.path().join("pout_vs_rate.csv"));
    assert_eq!(body.len(), 6);
    let (lo, up, mc) = (col(&h, "lower"), col(&h, "upper"), col(&h, "mc_mean"));
    for r in &body {
        let (l, u): (f64, f64) = (r[lo].parse().unwrap(), r[up].parse().unwrap());
        assert!((l - u).abs() <= 1e-12, "lower {l} upper {u}");
        let m: f64 = r[mc].parse().unwrap();
        assert!((0.0..=1.0).contains(&m));
    }
    assert_eq!(body[0][col(&h, "mc_fbl_mean")], "");
}

#[test]
fn simulate_smoke_is_fast_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_IMPERFECT);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));

    let t0 = Instant::now();
    let out = run_in("simulate", &cfg, &a, &[]);
    let secs = t0.elapsed().as_secs_f64();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(secs < 5.0, "smoke simulation took {secs:.1}s");

    let out = run_in("simulate", &cfg, &b, &["--threads", "1"]);
    assert!(out.status.success());
    let fa = std::fs::read(a.join("pv_sim_vs_alpha.csv")).unwrap();
    let fb = std::fs::read(b.join("pv_sim_vs_alpha.csv")).unwrap();
    assert_eq!(fa, fb, "identical seeds must give identical files");

    let (h, body) = rows(&a.join("pv_sim_vs_alpha.csv"));
    assert_eq!(body.len(), 3);
    assert_eq!(body[0][col(&h, "slots")], "10000");
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_IMPERFECT);
    let out = run_in("simulate", &cfg, dir.path(), &["--seed", "77"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("pv_sim_vs_alpha.csv")).unwrap();
    assert!(text.contains("# seed 77"));
    let (h, body) = rows(&dir.path().join("pv_sim_vs_alpha.csv"));
    assert_eq!(body[0][col(&h, "seed")], "77");
}

#[test]
fn sweep_writes_every_configured_output() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{}\n[validate]\nk_sched = 5\ntarget_cap_bits = 6.0\ntol_bits = 0.05\nn_estimates = 2\nn_draws = 5000\nrate_min = 4.0\nrate_max = 6.0\nrate_steps = 3\n",
        SMALL_IMPERFECT.replace("[sweep]\n", "[sweep]\np_uplink_db = [10.0, 20.0]\n")
    );
    let cfg = write_config(dir.path(), &text);
    let out = run_in("sweep", &cfg, dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["expected_service.csv", "pv_vs_alpha.csv", "pout_vs_rate.csv", "pv_sim_vs_alpha.csv"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(text.contains("# command sweep"), "{name}");
    }
    let (h, body) = rows(&dir.path().join("pout_vs_rate.csv"));
    assert_eq!(body.len(), 6);
    assert!(!body[0][col(&h, "mc_fbl_mean")].is_empty());
}

#[test]
fn missing_config_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in("analyze", &dir.path().join("nope.toml"), dir.path(), &[]);
    assert!(!out.status.success());
}

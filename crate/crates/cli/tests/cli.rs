//! End-to-end checks of the command-line surface: exit codes, file
//! formats, config resolution and reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn eapsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eapsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn gen_small_substrate(dir: &Path, count: usize, seed: u64) -> std::path::PathBuf {
    let out = dir.join(format!("sub{count}_{seed}"));
    let st = eapsim(&[
        "gen-substrate",
        "--out",
        out.to_str().unwrap(),
        "--side",
        "20",
        "--count",
        &count.to_string(),
        "--rmin",
        "0.3",
        "--rmax",
        "1.5",
        "--seed",
        &seed.to_string(),
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    out.join("substrate.sub")
}

#[test]
fn gen_substrate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_small_substrate(dir.path(), 40, 7);
    let b = {
        let out = dir.path().join("again");
        let st = eapsim(&[
            "gen-substrate",
            "--out",
            out.to_str().unwrap(),
            "--side",
            "20",
            "--count",
            "40",
            "--rmin",
            "0.3",
            "--rmax",
            "1.5",
            "--seed",
            "7",
        ]);
        assert!(st.status.success());
        out.join("substrate.sub")
    };
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn gen_substrate_count_zero_gives_free_substrate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("free");
    let st = eapsim(&[
        "gen-substrate",
        "--out",
        out.to_str().unwrap(),
        "--count",
        "0",
    ]);
    assert!(st.status.success());
    let text = std::fs::read_to_string(out.join("substrate.sub")).unwrap();
    assert!(text.starts_with("# substrate side="));
    assert_eq!(text.lines().count(), 1);
}

#[test]
fn solve_rejects_unstable_dt_with_usage_exit() {
    let dir = tempfile::tempdir().unwrap();
    let sub = gen_small_substrate(dir.path(), 0, 1);
    let out = dir.path().join("solve");
    let st = eapsim(&[
        "solve",
        "--substrate",
        sub.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--n",
        "16",
        "--t",
        "0.001",
        "--dt",
        "1.0",
    ]);
    assert_eq!(st.status.code(), Some(1), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(String::from_utf8_lossy(&st.stderr).contains("stability"));
}

#[test]
fn solve_t_zero_dumps_initial_condition() {
    let dir = tempfile::tempdir().unwrap();
    let sub = gen_small_substrate(dir.path(), 0, 1);
    let out = dir.path().join("solve0");
    let st = eapsim(&[
        "solve",
        "--substrate",
        sub.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--n",
        "32",
        "--t",
        "0",
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(out.join("u_t0.csv").exists());
    let mass_log = std::fs::read_to_string(out.join("mass_history.csv")).unwrap();
    assert_eq!(mass_log.lines().count(), 2); // header + t=0 record
    assert!(out.join("config.resolved").exists());
}

#[test]
fn solve_writes_field_and_monotone_mass_log() {
    let dir = tempfile::tempdir().unwrap();
    let sub = gen_small_substrate(dir.path(), 0, 1);
    let out = dir.path().join("solverun");
    let st = eapsim(&[
        "solve",
        "--substrate",
        sub.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--n",
        "32",
        "--t",
        "0.0005",
        "--scheme",
        "rk2",
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(out.join("u_t0.0005.csv").exists());
    let mass_log = std::fs::read_to_string(out.join("mass_history.csv")).unwrap();
    let masses: Vec<f64> = mass_log
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(masses.len() > 2);
    for m in &masses {
        assert!((m - 1.0).abs() < 1e-6);
    }
}

#[test]
fn eap_and_mc_and_compare_pass_on_shared_substrate() {
    let dir = tempfile::tempdir().unwrap();
    let sub = gen_small_substrate(dir.path(), 0, 1);
    let eap_out = dir.path().join("eap");
    let st = eapsim(&[
        "eap",
        "--substrate",
        sub.to_str().unwrap(),
        "--out",
        eap_out.to_str().unwrap(),
        "--n",
        "48",
        "--m",
        "2",
        "--t",
        "0.002",
        "--box-side",
        "4",
        "--seed",
        "3",
        "--scheme",
        "rk2",
        // at this coarse test resolution the regularized source width is a
        // large fraction of 2kT and must be removed for the MC comparison
        "--subtract-initial-covariance",
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let fit = std::fs::read_to_string(eap_out.join("fit.txt")).unwrap();
    for key in ["mu_x", "sigma_xx", "sigma_xy", "sigma_yy", "residual", "m", "T", "k0", "grid_n"] {
        assert!(fit.contains(&format!("{key} = ")), "missing {key} in fit.txt");
    }

    let mc_out = dir.path().join("mc");
    let st = eapsim(&[
        "mc",
        "--substrate",
        sub.to_str().unwrap(),
        "--out",
        mc_out.to_str().unwrap(),
        "--walkers",
        "60000",
        "--steps",
        "150",
        "--duration",
        "0.002",
        "--box-side",
        "4",
        "--seed",
        "5",
        "--dump-trajectories",
        "3",
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(mc_out.join("trajectories.csv").exists());

    let st = eapsim(&[
        "compare",
        "--eap",
        eap_out.to_str().unwrap(),
        "--mc",
        mc_out.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&st.stdout);
    assert!(st.status.success(), "{stdout}");
    assert!(stdout.contains("comparison: PASS"));
    // free substrate: the analytic reference line appears
    assert!(stdout.contains("analytic free-diffusion diagonal 2Tk"));
}

#[test]
fn compare_refuses_mismatched_substrates() {
    let dir = tempfile::tempdir().unwrap();
    let sub_a = gen_small_substrate(dir.path(), 0, 1);
    let sub_b = gen_small_substrate(dir.path(), 5, 2);
    let eap_out = dir.path().join("eap");
    assert!(eapsim(&[
        "eap",
        "--substrate",
        sub_a.to_str().unwrap(),
        "--out",
        eap_out.to_str().unwrap(),
        "--n",
        "32",
        "--m",
        "1",
        "--t",
        "0.001",
        "--box-side",
        "4",
    ])
    .status
    .success());
    let mc_out = dir.path().join("mc");
    assert!(eapsim(&[
        "mc",
        "--substrate",
        sub_b.to_str().unwrap(),
        "--out",
        mc_out.to_str().unwrap(),
        "--walkers",
        "1000",
        "--steps",
        "50",
        "--duration",
        "0.001",
        "--box-side",
        "4",
    ])
    .status
    .success());
    let st = eapsim(&[
        "compare",
        "--eap",
        eap_out.to_str().unwrap(),
        "--mc",
        mc_out.to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stderr).contains("refusing to compare"));
}

#[test]
fn compare_exit_code_3_on_tolerance_failure() {
    // Synthetic result directories with matching hashes but incompatible
    // covariances.
    let dir = tempfile::tempdir().unwrap();
    let eap_out = dir.path().join("eap");
    let mc_out = dir.path().join("mc");
    std::fs::create_dir_all(&eap_out).unwrap();
    std::fs::create_dir_all(&mc_out).unwrap();
    let meta = "circles = 0\nsubstrate_sha256 = abc123\n";
    std::fs::write(eap_out.join("run.meta"), meta).unwrap();
    std::fs::write(mc_out.join("run.meta"), meta).unwrap();
    std::fs::write(
        eap_out.join("fit.txt"),
        "mu_x = 0\nmu_y = 0\nsigma_xx = 40\nsigma_xy = 0\nsigma_yy = 40\nresidual = 0\nm = 1\nT = 0.036\nk0 = 450\ngrid_n = 64\n",
    )
    .unwrap();
    std::fs::write(
        mc_out.join("result.txt"),
        "sigma_xx = 32.4\nsigma_xy = 0\nsigma_yy = 32.4\nstderr_xx = 0.01\nstderr_xy = 0.01\nstderr_yy = 0.01\n",
    )
    .unwrap();
    let st = eapsim(&[
        "compare",
        "--eap",
        eap_out.to_str().unwrap(),
        "--mc",
        mc_out.to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&st.stdout).contains("comparison: FAIL"));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "side = 20\ncount = 12\nrmin = 0.3\nrmax = 1.5\nseed = 4\n").unwrap();
    let out = dir.path().join("fromcfg");
    let st = eapsim(&[
        "gen-substrate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--count",
        "9",
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let resolved = std::fs::read_to_string(out.join("config.resolved")).unwrap();
    assert!(resolved.contains("count = 9"), "flag must override config");
    assert!(resolved.contains("side = 20"), "config value must apply");
    let text = std::fs::read_to_string(out.join("substrate.sub")).unwrap();
    assert_eq!(text.lines().count(), 10); // header + 9 circles
}

#[test]
fn eap_outputs_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let sub = gen_small_substrate(dir.path(), 6, 3);
    let mut outputs = Vec::new();
    for workers in ["1", "2"] {
        let out = dir.path().join(format!("eapw{workers}"));
        let st = eapsim(&[
            "eap",
            "--substrate",
            sub.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--n",
            "32",
            "--m",
            "2",
            "--t",
            "0.001",
            "--box-side",
            "4",
            "--workers",
            workers,
            "--seed",
            "6",
        ]);
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
        outputs.push((
            std::fs::read(out.join("fit.txt")).unwrap(),
            std::fs::read(out.join("mixture.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn usage_error_exit_code_is_1() {
    let st = eapsim(&["solve", "--out", "/tmp/nonexistent-run"]);
    assert_eq!(st.status.code(), Some(1));
}

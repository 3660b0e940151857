//! End-to-end checks of the command dispatch and its artifacts.

use pdesign::config::parse_config;
use pdesign::runner::{run, Command};
use std::process::Command as Process;

const SQUARE_CFG: &str = "alpha = 1\nbeta = 2\np = 2\nkappa = 0.4\n\
                          domain = rectangle 0 1 0 1\nh = 0.125\nf = const 1\nseed = 11\n";

#[test]
fn solve_writes_summary_and_fields() {
    let config = parse_config(SQUARE_CFG).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = run(Command::Solve, &config, dir.path()).unwrap();

    // Provenance: the summary embeds the resolved configuration.
    assert_eq!(summary.get("config.alpha"), Some("1.0"));
    assert_eq!(summary.get("config.f"), Some("const 1.0"));
    assert_eq!(summary.get("config.seed"), Some("11"));
    assert_eq!(summary.get("command"), Some("solve"));

    let mu: f64 = summary.get("result.mu_hat").unwrap().parse().unwrap();
    assert!(mu > 0.0);
    let vol_err: f64 = summary.get("result.volume_error_rel").unwrap().parse().unwrap();
    assert!(vol_err <= 1e-4);
    let gap: f64 = summary.get("result.gap").unwrap().parse().unwrap();
    assert!(gap <= 1e-6);

    let nodes = std::fs::read_to_string(dir.path().join("nodes.csv")).unwrap();
    let n_nodes: usize = summary.get("mesh.nodes").unwrap().parse().unwrap();
    assert_eq!(nodes.lines().count(), n_nodes + 1);
    for name in ["elements.csv", "u.csv", "theta.csv", "sigma.csv", "summary.txt"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn solve_can_log_newton_iterations() {
    let text = format!("{SQUARE_CFG}log_iterations = true\n");
    let config = parse_config(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run(Command::Solve, &config, dir.path()).unwrap();
    let log = std::fs::read_to_string(dir.path().join("newton_log.csv")).unwrap();
    assert!(log.starts_with("iter,energy,residual,step_length"));
    assert!(log.lines().count() > 1);
}

#[test]
fn oracle_reports_closed_form_values() {
    // f = beta = 2 means f/beta = 1: r0 = sqrt(1/2), t_hat = r0/2.
    let text = "alpha = 1\nbeta = 2\np = 2\nkappa = 1.5707963267948966\n\
                domain = disk 0 0 1\nh = 0.1\nf = const 2\n";
    let config = parse_config(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = run(Command::Oracle, &config, dir.path()).unwrap();
    let r0: f64 = summary.get("oracle.r0").unwrap().parse().unwrap();
    let t_hat: f64 = summary.get("oracle.t_hat").unwrap().parse().unwrap();
    assert!((r0 - 0.7071067811865476).abs() < 1e-12);
    assert!((t_hat - 0.3535533905932738).abs() < 1e-12);
    let profile = std::fs::read_to_string(dir.path().join("oracle_profile.csv")).unwrap();
    assert!(profile.starts_with("r,sigma_mag,theta,grad_mag,u"));
    assert_eq!(profile.lines().count(), 258);
}

#[test]
fn oracle_requires_disk_and_constant_load() {
    let config = parse_config(SQUARE_CFG).unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(run(Command::Oracle, &config, dir.path()).is_err());
}

#[test]
fn kappa_exceeding_domain_area_fails_at_dispatch() {
    let text = SQUARE_CFG.replace("kappa = 0.4", "kappa = 2.0");
    let config = parse_config(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    match run(Command::Solve, &config, dir.path()) {
        Err(pdesign::Error::Config { key, .. }) => assert_eq!(key, "kappa"),
        other => panic!("expected kappa config error, got {other:?}"),
    }
}

#[test]
fn laminate_command_writes_convergence_table() {
    let text = format!("{SQUARE_CFG}laminate_delta = 0.5\nlaminate_epsilon = 0.2 0.1\n");
    let config = parse_config(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = run(Command::Laminate, &config, dir.path()).unwrap();
    assert_eq!(summary.get("laminate.rows"), Some("2"));
    let table = std::fs::read_to_string(dir.path().join("laminate_table.csv")).unwrap();
    assert!(table.starts_with("delta,epsilon,laminate_energy,homogenized_energy,gap,chi_area"));
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let cells: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cells.iter().all(|v| v.is_finite()));
        assert!(cells[2] > 0.0 && cells[3] > 0.0);
    }
}

#[test]
fn dual_check_reports_gap_and_spread() {
    let text = format!("{SQUARE_CFG}restarts = 1\nwrite_restart_fluxes = true\n");
    let config = parse_config(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = run(Command::DualCheck, &config, dir.path()).unwrap();
    let gap: f64 = summary.get("dual.gap").unwrap().parse().unwrap();
    let spread: f64 = summary.get("dual.flux_spread").unwrap().parse().unwrap();
    let div: f64 = summary.get("dual.div_residual").unwrap().parse().unwrap();
    assert!(gap <= 1e-6, "gap {gap}");
    assert!(spread <= 1e-5, "spread {spread}");
    assert!(div <= 1e-6, "div residual {div}");
    assert!(dir.path().join("restart_flux_0.csv").exists());
    assert!(dir.path().join("restart_flux_1.csv").exists());
}

#[test]
fn diagnose_reports_metrics_per_level() {
    let text = format!("{SQUARE_CFG}refine_levels = 2\n");
    let config = parse_config(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = run(Command::Diagnose, &config, dir.path()).unwrap();
    for level in 0..2 {
        for metric in [
            "flux_h1_seminorm",
            "commutator_l2",
            "commutator_l2_off_band",
            "curl_residual",
            "intermediate_measure",
            "boundary_tangential_ratio",
            "max_grad",
            "mu_hat",
        ] {
            let key = format!("diag.level{level}.{metric}");
            let value: f64 = summary
                .get(&key)
                .unwrap_or_else(|| panic!("{key} missing"))
                .parse()
                .unwrap();
            assert!(value.is_finite(), "{key} = {value}");
        }
    }
    // The refined square keeps a positive intermediate region.
    let im: f64 = summary.get("diag.level1.intermediate_measure").unwrap().parse().unwrap();
    assert!(im > 0.02, "intermediate measure {im}");
}

#[test]
fn thread_count_does_not_change_numeric_artifacts() {
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let base = parse_config(SQUARE_CFG).unwrap();
    let mut threaded = base.clone();
    threaded.threads = 2;
    run(Command::Solve, &base, dir1.path()).unwrap();
    run(Command::Solve, &threaded, dir2.path()).unwrap();
    for name in ["u.csv", "theta.csv", "sigma.csv"] {
        let a = std::fs::read(dir1.path().join(name)).unwrap();
        let b = std::fs::read(dir2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs across thread counts");
    }
}

#[test]
fn binary_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(
        &cfg_path,
        "alpha = 1\nbeta = 2\np = 2\nkappa = 1.5707963267948966\n\
         domain = disk 0 0 1\nh = 0.2\nf = const 2\n",
    )
    .unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_pdesign"))
        .args(["oracle", cfg_path.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("oracle.r0 = 0.7071067811865476"), "stdout: {stdout}");
    assert!(stdout.contains("oracle.t_hat = 0.3535533905932738"), "stdout: {stdout}");

    // Bad config: nonzero exit and a machine-readable error block.
    std::fs::write(&cfg_path, "alpha = 3\nbeta = 1\n").unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_pdesign"))
        .args(["solve", cfg_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("status = error"), "stderr: {stderr}");
    assert!(stderr.contains("kind = config"), "stderr: {stderr}");
}

//! Command dispatch: solve, oracle, laminate, dual-check, diagnose.
//!
//! Every command takes a validated [`RunConfig`], writes its artifacts under
//! an output directory and returns the summary it wrote. Outputs are
//! deterministic: identical config and seed give byte-identical files.

use crate::config::RunConfig;
use crate::design_opt::{solve_design_on_mesh, DesignSolution};
use crate::diagnostics;
use crate::duality;
use crate::fields::{gradient, ScalarField};
use crate::geometry::{build_mesh, DomainShape, Mesh};
use crate::lamination;
use crate::material::MaterialModel;
use crate::output::{fmt_f64, write_csv, Summary};
use crate::{Error, Result};
use std::path::Path;
use std::sync::Arc;

/// CLI commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Oracle,
    Laminate,
    DualCheck,
    Diagnose,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Oracle => "oracle",
            Command::Laminate => "laminate",
            Command::DualCheck => "dual-check",
            Command::Diagnose => "diagnose",
        }
    }
}

/// Runs a command, writing artifacts into `out_dir`.
pub fn run(command: Command, config: &RunConfig, out_dir: &Path) -> Result<Summary> {
    std::fs::create_dir_all(out_dir)?;
    let mut summary = Summary::new();
    summary.set("command", command.name());
    for (k, v) in config.resolved_pairs() {
        summary.set(format!("config.{k}"), v);
    }
    match command {
        Command::Solve => run_solve(config, out_dir, &mut summary)?,
        Command::Oracle => run_oracle(config, out_dir, &mut summary)?,
        Command::Laminate => run_laminate(config, out_dir, &mut summary)?,
        Command::DualCheck => run_dual_check(config, out_dir, &mut summary)?,
        Command::Diagnose => run_diagnose(config, out_dir, &mut summary)?,
    }
    summary.write_to(&out_dir.join("summary.txt"))?;
    Ok(summary)
}

fn model_of(config: &RunConfig) -> Result<MaterialModel> {
    MaterialModel::new(config.alpha, config.beta, config.p, config.kappa)
}

fn check_budget(config: &RunConfig, mesh: &Mesh) -> Result<()> {
    if !(config.kappa < mesh.total_area()) {
        return Err(Error::Config {
            key: "kappa".into(),
            message: format!(
                "kappa = {} must be smaller than the meshed domain area {}",
                config.kappa,
                mesh.total_area()
            ),
        });
    }
    Ok(())
}

fn load_field(config: &RunConfig, mesh: &Arc<Mesh>) -> Result<ScalarField> {
    let f = config.load.compile()?;
    Ok(ScalarField::from_fn_nodal(mesh.clone(), f))
}

fn solve_on(config: &RunConfig, mesh: &Arc<Mesh>, init: Option<&ScalarField>) -> Result<DesignSolution> {
    check_budget(config, mesh)?;
    let model = model_of(config)?;
    let f = load_field(config, mesh)?;
    solve_design_on_mesh(&f, &model, &config.solver_config(), init)
}

fn mesh_summary(summary: &mut Summary, mesh: &Mesh) {
    summary.set_usize("mesh.nodes", mesh.n_nodes());
    summary.set_usize("mesh.elements", mesh.n_elements());
    summary.set_f64("mesh.h_max", mesh.h_max());
    summary.set_f64("mesh.area", mesh.total_area());
}

fn solution_summary(summary: &mut Summary, sol: &DesignSolution, prefix: &str) {
    let model = &sol.model;
    let gap = (sol.primal_energy + sol.dual_energy).abs() / sol.primal_energy.abs().max(1.0);
    summary.set_f64(format!("{prefix}mu_hat"), sol.mu_hat);
    summary.set_f64(format!("{prefix}t_hat"), sol.mu_hat.powf(model.p - 1.0));
    summary.set_f64(format!("{prefix}volume"), sol.volume);
    summary.set_f64(
        format!("{prefix}volume_error_rel"),
        (sol.volume - model.kappa).abs() / model.kappa,
    );
    summary.set_f64(format!("{prefix}primal_energy"), sol.primal_energy);
    summary.set_f64(format!("{prefix}dual_energy"), sol.dual_energy);
    summary.set_f64(format!("{prefix}f_energy"), sol.f_energy);
    summary.set_f64(format!("{prefix}gap"), gap);
    summary.set_f64(format!("{prefix}kkt_residual"), sol.kkt_residual);
    summary.set_f64(format!("{prefix}solver_residual"), sol.solver_residual);
    summary.set_usize(format!("{prefix}bisection_steps"), sol.bisection_steps);
    summary.set_usize(format!("{prefix}newton_iterations"), sol.newton_iterations);
    summary.set_f64(format!("{prefix}contrast_c"), model.c);
}

fn write_solution_fields(sol: &DesignSolution, out_dir: &Path) -> Result<()> {
    let mesh = sol.mesh();
    let mut buf = Vec::new();
    mesh.write_nodes_csv(&mut buf)?;
    std::fs::write(out_dir.join("nodes.csv"), &buf)?;
    buf.clear();
    mesh.write_elements_csv(&mut buf)?;
    std::fs::write(out_dir.join("elements.csv"), &buf)?;
    buf.clear();
    sol.u_hat.write_csv("u", &mut buf)?;
    std::fs::write(out_dir.join("u.csv"), &buf)?;
    buf.clear();
    sol.theta_hat.write_csv("theta", &mut buf)?;
    std::fs::write(out_dir.join("theta.csv"), &buf)?;
    buf.clear();
    sol.sigma_hat.write_csv("sigma", &mut buf)?;
    std::fs::write(out_dir.join("sigma.csv"), &buf)?;
    Ok(())
}

fn write_iteration_log(sol: &DesignSolution, out_dir: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = sol
        .solver_log
        .iter()
        .map(|r| {
            vec![r.iter.to_string(), fmt_f64(r.energy), fmt_f64(r.residual), fmt_f64(r.step)]
        })
        .collect();
    write_csv(&out_dir.join("newton_log.csv"), "iter,energy,residual,step_length", &rows)
}

fn run_solve(config: &RunConfig, out_dir: &Path, summary: &mut Summary) -> Result<()> {
    let mesh = Arc::new(build_mesh(&config.domain)?);
    let sol = solve_on(config, &mesh, None)?;
    mesh_summary(summary, &mesh);
    solution_summary(summary, &sol, "result.");
    write_solution_fields(&sol, out_dir)?;
    if config.log_iterations {
        write_iteration_log(&sol, out_dir)?;
    }
    Ok(())
}

fn run_oracle(config: &RunConfig, out_dir: &Path, summary: &mut Summary) -> Result<()> {
    let radius = match config.domain.shape {
        DomainShape::Disk { r, .. } => r,
        _ => {
            return Err(Error::Config {
                key: "domain".into(),
                message: "the oracle command needs a disk domain".into(),
            })
        }
    };
    let f_const = config.load.as_const().ok_or_else(|| Error::Config {
        key: "f".into(),
        message: "the oracle command needs a constant load".into(),
    })?;
    let model = model_of(config)?;
    let oracle = diagnostics::radial_oracle(radius, &model, f_const)?;
    summary.set_f64("oracle.r0", oracle.r0);
    summary.set_f64("oracle.t_hat", oracle.sigma_threshold);
    summary.set_f64("oracle.mu_hat", oracle.mu_hat);
    summary.set_f64("oracle.kappa", model.kappa);
    summary.set_f64("oracle.f_over_beta", f_const / model.beta);

    let n = 256;
    let rows: Vec<Vec<String>> = (0..=n)
        .map(|k| {
            let r = radius * k as f64 / n as f64;
            vec![
                fmt_f64(r),
                fmt_f64(oracle.sigma_mag(r)),
                fmt_f64(oracle.theta(r)),
                fmt_f64(oracle.grad_mag(r)),
                fmt_f64(oracle.u(r)),
            ]
        })
        .collect();
    write_csv(&out_dir.join("oracle_profile.csv"), "r,sigma_mag,theta,grad_mag,u", &rows)?;
    Ok(())
}

fn run_laminate(config: &RunConfig, out_dir: &Path, summary: &mut Summary) -> Result<()> {
    let mesh = Arc::new(build_mesh(&config.domain)?);
    let sol = solve_on(config, &mesh, None)?;
    mesh_summary(summary, &mesh);
    solution_summary(summary, &sol, "result.");
    let model = sol.model;
    let rows = lamination::laminate_sweep(
        &sol.theta_hat,
        &sol.u_hat,
        &model,
        &config.laminate_delta,
        &config.laminate_epsilon,
        [1.0, 0.0],
        6,
    )?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.delta),
                fmt_f64(r.epsilon),
                fmt_f64(r.laminate_energy),
                fmt_f64(r.homogenized_energy),
                fmt_f64(r.gap),
                fmt_f64(r.chi_area),
            ]
        })
        .collect();
    write_csv(
        &out_dir.join("laminate_table.csv"),
        "delta,epsilon,laminate_energy,homogenized_energy,gap,chi_area",
        &csv_rows,
    )?;
    summary.set_usize("laminate.rows", rows.len());
    if let Some(last) = rows.last() {
        summary.set_f64("laminate.final_gap", last.gap);
    }
    Ok(())
}

fn run_dual_check(config: &RunConfig, out_dir: &Path, summary: &mut Summary) -> Result<()> {
    let mesh = Arc::new(build_mesh(&config.domain)?);
    let sol = solve_on(config, &mesh, None)?;
    mesh_summary(summary, &mesh);
    solution_summary(summary, &sol, "result.");
    let f = load_field(config, &mesh)?;
    let (report, fluxes) = duality::dual_report_with_fluxes(
        &sol,
        &f,
        config.restarts,
        &config.solver_config(),
        config.seed,
    )?;
    summary.set_f64("dual.primal_value", report.primal_value);
    summary.set_f64("dual.dual_value", report.dual_value);
    summary.set_f64("dual.gap", report.gap);
    summary.set_f64("dual.div_residual", report.div_residual);
    summary.set_f64("dual.flux_spread", report.flux_spread);
    summary.set_usize("dual.restarts", config.restarts);
    if config.write_restart_fluxes {
        for (k, flux) in fluxes.iter().enumerate() {
            let mut buf = Vec::new();
            flux.write_csv("sigma", &mut buf)?;
            std::fs::write(out_dir.join(format!("restart_flux_{k}.csv")), &buf)?;
        }
    }
    Ok(())
}

fn run_diagnose(config: &RunConfig, _out_dir: &Path, summary: &mut Summary) -> Result<()> {
    let mut mesh = Arc::new(build_mesh(&config.domain)?);
    let mut warm: Option<ScalarField> = None;
    let is_disk = matches!(config.domain.shape, DomainShape::Disk { .. });
    for level in 0..config.refine_levels {
        if level > 0 {
            let refinement = mesh.refine_mapped()?;
            let fine = Arc::new(refinement.mesh.clone());
            warm = match warm {
                // Exact P1 transfer of the previous state as a warm start;
                // disk boundary reprojection shifts midpoints, so rebuild the
                // Dirichlet tag by zeroing the new boundary.
                Some(u) => {
                    let coarse_vals = u.values().to_vec();
                    let mut vals = coarse_vals;
                    for &(a, b) in &refinement.edge_midpoints {
                        vals.push(0.5 * (vals[a] + vals[b]));
                    }
                    for i in 0..fine.n_nodes() {
                        if fine.is_boundary(i) {
                            vals[i] = 0.0;
                        }
                    }
                    Some(ScalarField::nodal_dirichlet(fine.clone(), vals)?)
                }
                None => None,
            };
            mesh = fine;
        }
        let sol = solve_on(config, &mesh, warm.as_ref())?;
        let model = sol.model;
        let t_hat = sol.mu_hat.powf(model.p - 1.0);
        let prefix = format!("diag.level{level}.");
        summary.set_usize(format!("{prefix}elements"), mesh.n_elements());
        summary.set_f64(format!("{prefix}h_max"), mesh.h_max());
        solution_summary(summary, &sol, &prefix);
        summary.set_f64(
            format!("{prefix}flux_h1_seminorm"),
            diagnostics::flux_h1_seminorm(&sol.sigma_hat, 0.0)?,
        );
        let norms = diagnostics::commutator_norms(&sol.theta_hat, &sol.sigma_hat, t_hat)?;
        summary.set_f64(format!("{prefix}commutator_l2"), norms.l2_total);
        summary.set_f64(format!("{prefix}commutator_l2_off_band"), norms.l2_off_band);
        summary.set_f64(format!("{prefix}commutator_band_tol"), norms.band_tol);
        summary.set_f64(format!("{prefix}commutator_band_area"), norms.band_area);
        summary.set_f64(
            format!("{prefix}curl_residual"),
            diagnostics::curl_residual(&sol.sigma_hat, &model)?,
        );
        summary.set_f64(
            format!("{prefix}intermediate_measure"),
            diagnostics::intermediate_measure(&sol.theta_hat, 0.01)?,
        );
        summary.set_f64(
            format!("{prefix}boundary_tangential_ratio"),
            diagnostics::boundary_tangential_ratio(&sol.sigma_hat),
        );
        summary.set_f64(format!("{prefix}max_grad"), gradient(&sol.u_hat)?.max_abs());
        warm = Some(sol.u_hat.clone());
    }
    if is_disk {
        summary.set(
            "diag.caveat",
            "polygonal approximation of the circular boundary: boundary-sensitive \
             metrics carry an O(h^2) geometric error and no smooth-boundary claim is checked exactly",
        );
    }
    Ok(())
}

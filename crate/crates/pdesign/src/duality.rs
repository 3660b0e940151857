//! Flux, dual functional and primal-dual verification.
//!
//! The flux of a design state is
//!
//! ```text
//!     sigma = |grad u|^(p-2) grad u / (1 + c theta)^(p-1),
//! ```
//!
//! the unique minimizer of `int (1 + c theta)|sigma|^p' dx` over fields with
//! `-div sigma = f_tilde`, maximized over admissible theta. At the optimum the
//! primal energy equals minus the dual value `(1/p') int (1+c theta)|sigma|^p'`,
//! so the normalized defect `|primal + dual| / max(1, |primal|)` measures
//! solver convergence. Uniqueness of the flux is probed experimentally: the
//! design solve is repeated from randomized initial states and the spread of
//! the resulting fluxes in L^p' is reported, even though the theta fields may
//! differ on the plateau set.

use crate::design_opt::{solve_design_on_mesh, DesignSolution};
use crate::fields::{ScalarField, Storage, VectorField};
use crate::material::MaterialModel;
use crate::state_solver::SolveConfig;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Primal-dual verification record.
#[derive(Debug, Clone, Copy)]
pub struct DualReport {
    pub primal_value: f64,
    pub dual_value: f64,
    /// `|primal + dual| / max(1, |primal|)`.
    pub gap: f64,
    /// Worst weak-divergence defect of sigma against the load, normalized.
    pub div_residual: f64,
    /// Max relative L^p' distance between fluxes of independent restarts.
    pub flux_spread: f64,
}

/// Flux field of a state/proportion pair; zero gradient maps to zero flux.
pub fn flux(u: &ScalarField, theta: &ScalarField, model: &MaterialModel) -> Result<VectorField> {
    if theta.storage() != Storage::PerElement {
        return Err(Error::StorageMismatch("flux needs per-element theta".into()));
    }
    let grad = crate::fields::gradient(u)?;
    let p = model.p;
    let c = model.c;
    let values = grad
        .values()
        .iter()
        .zip(theta.values())
        .map(|(g, &th)| {
            let s = (g[0] * g[0] + g[1] * g[1]).sqrt();
            if s == 0.0 {
                [0.0, 0.0]
            } else {
                let factor = s.powf(p - 2.0) / (1.0 + c * th).powf(p - 1.0);
                [factor * g[0], factor * g[1]]
            }
        })
        .collect();
    VectorField::new(u.mesh().clone(), values)
}

/// Dual functional `(1/p') int (1 + c theta) |sigma|^p' dx`. The primal
/// optimum equals minus this value at the optimal pair.
pub fn dual_value(theta: &ScalarField, sigma: &VectorField, model: &MaterialModel) -> Result<f64> {
    if theta.storage() != Storage::PerElement {
        return Err(Error::StorageMismatch("dual_value needs per-element theta".into()));
    }
    let p_conj = model.p_conj();
    let mesh = sigma.mesh();
    let mut acc = 0.0;
    for (t, s) in sigma.values().iter().enumerate() {
        let m = (s[0] * s[0] + s[1] * s[1]).sqrt();
        acc += mesh.area(t) * (1.0 + model.c * theta.values()[t]) * m.powf(p_conj);
    }
    Ok(acc / p_conj)
}

/// Inner maximizer of the dual functional at fixed sigma: a fractional
/// knapsack putting theta mass on the largest |sigma|^p' elements until the
/// volume budget binds. Ties break by element index.
pub fn knapsack_theta(sigma: &VectorField, model: &MaterialModel) -> Result<ScalarField> {
    let mesh = sigma.mesh().clone();
    let mut order: Vec<usize> = (0..mesh.n_elements()).collect();
    let weight: Vec<f64> =
        sigma.values().iter().map(|s| (s[0] * s[0] + s[1] * s[1]).sqrt()).collect();
    order.sort_by(|&a, &b| weight[b].partial_cmp(&weight[a]).unwrap().then(a.cmp(&b)));
    let mut theta = vec![0.0; mesh.n_elements()];
    let mut budget = model.kappa;
    for t in order {
        if budget <= 0.0 {
            break;
        }
        let area = mesh.area(t);
        if area <= budget {
            theta[t] = 1.0;
            budget -= area;
        } else {
            theta[t] = budget / area;
            budget = 0.0;
        }
    }
    ScalarField::per_element(mesh, theta)
}

/// Worst weak-divergence defect `|int sigma . grad phi_i - <f_tilde, phi_i>|`
/// over interior nodal test functions, normalized by the load scale.
pub fn div_residual(sigma: &VectorField, f_tilde: &ScalarField) -> Result<f64> {
    if f_tilde.storage() != Storage::Nodal {
        return Err(Error::StorageMismatch("div_residual needs a nodal load".into()));
    }
    let mesh = sigma.mesh().clone();
    let shares = mesh.lumped_node_areas();
    let mut defect = vec![0.0; mesh.n_nodes()];
    for i in 0..mesh.n_nodes() {
        defect[i] = -f_tilde.values()[i] * shares[i];
    }
    for t in 0..mesh.n_elements() {
        let s = sigma.values()[t];
        let gmap = mesh.grad_map(t);
        let area = mesh.area(t);
        let tri = mesh.element(t);
        for (loc, &node) in tri.iter().enumerate() {
            defect[node] += area * (s[0] * gmap[0][loc] + s[1] * gmap[1][loc]);
        }
    }
    let load_scale = (0..mesh.n_nodes())
        .map(|i| (f_tilde.values()[i] * shares[i]).abs())
        .fold(0.0f64, f64::max);
    let worst = (0..mesh.n_nodes())
        .filter(|&i| !mesh.is_boundary(i))
        .map(|i| defect[i].abs())
        .fold(0.0f64, f64::max);
    Ok(worst / load_scale.max(f64::MIN_POSITIVE))
}

/// Relative L^p' spread of a set of fluxes.
fn flux_spread(fluxes: &[VectorField], p_conj: f64) -> f64 {
    let mut scale = 0.0f64;
    for f in fluxes {
        scale = scale.max(f.lq_norm(p_conj));
    }
    if scale == 0.0 {
        return 0.0;
    }
    let mut spread = 0.0f64;
    for i in 0..fluxes.len() {
        for j in i + 1..fluxes.len() {
            let mesh = fluxes[i].mesh();
            let mut acc = 0.0;
            for (t, (a, b)) in fluxes[i].values().iter().zip(fluxes[j].values()).enumerate() {
                let dx = a[0] - b[0];
                let dy = a[1] - b[1];
                acc += mesh.area(t) * ((dx * dx + dy * dy).sqrt()).powf(p_conj);
            }
            spread = spread.max(acc.powf(1.0 / p_conj));
        }
    }
    spread / scale
}

/// Primal-dual report with a restart experiment.
///
/// Each restart repeats the full design solve from a randomized interior
/// initial state (seeded deterministically) and contributes its flux to the
/// spread statistic.
pub fn dual_report(
    sol: &DesignSolution,
    f: &ScalarField,
    n_restarts: usize,
    cfg: &SolveConfig,
    seed: u64,
) -> Result<DualReport> {
    Ok(dual_report_with_fluxes(sol, f, n_restarts, cfg, seed)?.0)
}

/// [`dual_report`] plus the per-restart fluxes (first entry: the base solve).
pub fn dual_report_with_fluxes(
    sol: &DesignSolution,
    f: &ScalarField,
    n_restarts: usize,
    cfg: &SolveConfig,
    seed: u64,
) -> Result<(DualReport, Vec<VectorField>)> {
    let model = sol.model;
    let (_, f_tilde) = crate::material::normalize(model.alpha, model.beta, model.p, f)?;
    let gap = (sol.primal_energy + sol.dual_energy).abs() / sol.primal_energy.abs().max(1.0);
    let div = div_residual(&sol.sigma_hat, &f_tilde)?;

    let mesh = sol.mesh().clone();
    let mut fluxes = vec![sol.sigma_hat.clone()];
    let amplitude = sol.u_hat.max_abs().max(1e-3);
    for k in 0..n_restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e3779b97f4a7c15u64.wrapping_mul(k as u64 + 1)));
        let mut init = vec![0.0; mesh.n_nodes()];
        for (i, v) in init.iter_mut().enumerate() {
            if !mesh.is_boundary(i) {
                *v = amplitude * (rng.gen::<f64>() - 0.5);
            }
        }
        let init_field = ScalarField::nodal_dirichlet(mesh.clone(), init)?;
        let restart = solve_design_on_mesh(f, &model, cfg, Some(&init_field))?;
        fluxes.push(restart.sigma_hat);
    }
    let report = DualReport {
        primal_value: sol.primal_energy,
        dual_value: sol.dual_energy,
        gap,
        div_residual: div,
        flux_spread: flux_spread(&fluxes, model.p_conj()),
    };
    Ok((report, fluxes))
}

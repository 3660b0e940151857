//! Damped Newton minimization of the convex discrete energies.
//!
//! Two energy forms share one solver:
//!
//! - the weighted p-Dirichlet energy at fixed theta,
//!   `sum_T area_T |g_T|^p / (p (1 + c theta_T)^(p-1)) - load . u`,
//! - the theta-eliminated form `sum_T area_T F_eps(|g_T|) - load . u`
//!   driven by an [`IntegrandF`].
//!
//! `g_T` is the per-element constant gradient and the load vector comes from
//! the lumped nodal rule. Gradient magnitudes are regularized as
//! `t = sqrt(|g|^2 + delta^2)` when p < 2 (`delta` tied to the current
//! smoothing stage), per-element Hessian blocks are floored by
//! `hessian_floor * I`, and steps are globalized with Armijo backtracking on
//! the exact discrete energy. The F-problem runs a continuation over the
//! `eps_schedule`, warm-starting each stage from the previous one; the final
//! stage is unsmoothed, so reported energies and residuals refer to the exact
//! integrand.

use crate::fields::{ScalarField, Storage};
use crate::geometry::Mesh;
use crate::material::{IntegrandF, MaterialModel};
use crate::sparse::{dot, norm2, pcg, CsrMatrix, CsrPattern};
use crate::{Error, Result};
use std::sync::Arc;

/// Solver knobs. The defaults are used by every shipped experiment.
#[derive(Debug, Clone)]
pub struct SolveConfig {
    /// Converged when the energy gradient norm is below `newton_tol * (1 + ||load||)`.
    pub newton_tol: f64,
    /// Newton iteration cap per smoothing stage.
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    /// Per-element Hessian floor (times identity).
    pub hessian_floor: f64,
    /// Decreasing smoothing parameters; the last entry should be 0.
    pub eps_schedule: Vec<f64>,
    /// Relative tolerance of the inner CG solves.
    pub cg_rtol: f64,
    /// Worker threads for matrix-vector products (1 = serial).
    pub threads: usize,
    /// Keep a per-iteration log (iter, energy, residual, step).
    pub keep_log: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            newton_tol: 1e-10,
            max_iter: 200,
            armijo_c: 1e-4,
            hessian_floor: 1e-10,
            eps_schedule: vec![1e-2, 1e-4, 1e-6, 0.0],
            cg_rtol: 1e-12,
            threads: 1,
            keep_log: false,
        }
    }
}

/// One line of the iteration log.
#[derive(Debug, Clone, Copy)]
pub struct IterRow {
    pub iter: usize,
    pub energy: f64,
    pub residual: f64,
    pub step: f64,
}

/// Convergence record of a solve.
#[derive(Debug, Clone, Default)]
pub struct SolveStats {
    /// Final energy (last stage integrand).
    pub energy: f64,
    /// Final gradient norm.
    pub residual: f64,
    /// Newton iterations summed over stages.
    pub iterations: usize,
    pub log: Vec<IterRow>,
}

/// Per-element energy density W(t) with derivatives.
enum Density<'a> {
    /// `coeff_T t^p / p` with `coeff_T = 1/(1 + c theta_T)^(p-1)`.
    State { coeff: Vec<f64>, p: f64 },
    Integrand(&'a IntegrandF),
}

impl Density<'_> {
    #[inline]
    fn eval(&self, el: usize, t: f64) -> (f64, f64, f64) {
        match self {
            Density::State { coeff, p } => {
                let a = coeff[el];
                let tp2 = t.powf(p - 2.0);
                let tp1 = tp2 * t;
                (a * tp1 * t / p, a * tp1, a * (p - 1.0) * tp2)
            }
            Density::Integrand(f) => f.eval(t),
        }
    }

}

/// Interior-node numbering and lumped load, reused across Newton iterations.
struct NewtonProblem<'a> {
    mesh: &'a Mesh,
    interior: Vec<usize>,
    dof_of_node: Vec<usize>,
    pattern: Arc<CsrPattern>,
    /// Lumped load restricted to interior dofs.
    load: Vec<f64>,
    load_norm: f64,
}

const NO_DOF: usize = usize::MAX;

impl<'a> NewtonProblem<'a> {
    fn new(mesh: &'a Mesh, f_tilde: &ScalarField) -> Result<NewtonProblem<'a>> {
        if f_tilde.storage() != Storage::Nodal {
            return Err(Error::StorageMismatch("load must be a nodal field".into()));
        }
        let mut interior = Vec::new();
        let mut dof_of_node = vec![NO_DOF; mesh.n_nodes()];
        for i in 0..mesh.n_nodes() {
            if !mesh.is_boundary(i) {
                dof_of_node[i] = interior.len();
                interior.push(i);
            }
        }
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); interior.len()];
        for tri in mesh.elements() {
            for &a in tri {
                for &b in tri {
                    if a != b && dof_of_node[a] != NO_DOF && dof_of_node[b] != NO_DOF {
                        neighbors[dof_of_node[a]].push(dof_of_node[b]);
                    }
                }
            }
        }
        let pattern = Arc::new(CsrPattern::from_adjacency(interior.len(), &neighbors));
        let shares = mesh.lumped_node_areas();
        let load: Vec<f64> =
            interior.iter().map(|&n| f_tilde.values()[n] * shares[n]).collect();
        let load_norm = norm2(&load);
        Ok(NewtonProblem { mesh, interior, dof_of_node, pattern, load, load_norm })
    }

    fn energy(&self, density: &Density, u: &[f64], delta: f64) -> f64 {
        let mut bulk = 0.0;
        for t in 0..self.mesh.n_elements() {
            let g = self.mesh.element_gradient(t, u);
            let s = (g[0] * g[0] + g[1] * g[1] + delta * delta).sqrt();
            bulk += self.mesh.area(t) * density.eval(t, s).0;
        }
        let mut load_term = 0.0;
        for (k, &n) in self.interior.iter().enumerate() {
            load_term += self.load[k] * u[n];
        }
        bulk - load_term
    }

    /// Assembles the energy gradient (interior dofs) and, if requested, the
    /// floored Newton matrix.
    fn assemble(
        &self,
        density: &Density,
        u: &[f64],
        delta: f64,
        floor: f64,
        matrix: Option<&mut CsrMatrix>,
    ) -> Vec<f64> {
        let mut r: Vec<f64> = self.load.iter().map(|v| -v).collect();
        let mut mat = matrix;
        if let Some(m) = mat.as_deref_mut() {
            m.reset();
        }
        for t in 0..self.mesh.n_elements() {
            let area = self.mesh.area(t);
            let g = self.mesh.element_gradient(t, u);
            let t_reg = (g[0] * g[0] + g[1] * g[1] + delta * delta).sqrt();
            let (_, w1, w2) = density.eval(t, t_reg);
            let gmap = self.mesh.grad_map(t);
            let tri = self.mesh.element(t);

            // ratio = W'/t, with the t -> 0 limit equal to W''(0).
            let ratio = if t_reg > 0.0 { w1 / t_reg } else { w2 };
            let (hx, hy) = if t_reg > 0.0 { (g[0] / t_reg, g[1] / t_reg) } else { (0.0, 0.0) };

            if w1 != 0.0 {
                let fx = w1 * hx;
                let fy = w1 * hy;
                for (loc, &node) in tri.iter().enumerate() {
                    let dof = self.dof_of_node[node];
                    if dof != NO_DOF {
                        r[dof] += area * (fx * gmap[0][loc] + fy * gmap[1][loc]);
                    }
                }
            }

            if let Some(m) = mat.as_deref_mut() {
                // M = ratio I + (W'' - ratio) h h^T, floored by `floor` I.
                let a = w2 - ratio;
                let m00 = ratio + a * hx * hx + floor;
                let m01 = a * hx * hy;
                let m11 = ratio + a * hy * hy + floor;
                for (li, &ni) in tri.iter().enumerate() {
                    let di = self.dof_of_node[ni];
                    if di == NO_DOF {
                        continue;
                    }
                    let bx = gmap[0][li];
                    let by = gmap[1][li];
                    let mx = m00 * bx + m01 * by;
                    let my = m01 * bx + m11 * by;
                    for (lj, &nj) in tri.iter().enumerate() {
                        let dj = self.dof_of_node[nj];
                        if dj == NO_DOF {
                            continue;
                        }
                        m.add(di, dj, area * (mx * gmap[0][lj] + my * gmap[1][lj]));
                    }
                }
            }
        }
        r
    }
}

/// Damped Newton loop for one smoothing stage. `u` holds full nodal values
/// with zero boundary entries and is updated in place.
fn newton_stage(
    problem: &NewtonProblem,
    density: &Density,
    u: &mut [f64],
    delta: f64,
    cfg: &SolveConfig,
    stats: &mut SolveStats,
) -> Result<()> {
    let n = problem.interior.len();
    let target = cfg.newton_tol * (1.0 + problem.load_norm);
    let mut matrix = CsrMatrix::zeros(problem.pattern.clone());
    let mut energy = problem.energy(density, u, delta);
    let mut step_taken = 0.0;
    let mut history = Vec::new();
    let mut best_res = f64::INFINITY;
    let mut stalled = 0;

    for it in 0..=cfg.max_iter {
        let r = problem.assemble(density, u, delta, cfg.hessian_floor, Some(&mut matrix));
        let res = norm2(&r);
        history.push(res);
        if cfg.keep_log {
            stats.log.push(IterRow { iter: stats.iterations, energy, residual: res, step: step_taken });
        }
        if res <= target {
            stats.energy = energy;
            stats.residual = res;
            return Ok(());
        }
        if res < 0.99 * best_res {
            best_res = res.min(best_res);
            stalled = 0;
        } else {
            stalled += 1;
            if stalled > 30 {
                break;
            }
        }
        if it == cfg.max_iter {
            break;
        }

        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let mut d = vec![0.0; n];
        pcg(&matrix, &rhs, &mut d, cfg.cg_rtol, 0.0, 200 + 50 * n, cfg.threads)?;
        let mut slope = dot(&r, &d);
        if slope >= 0.0 {
            // The floored matrix is SPD, so this only happens through rounding;
            // fall back to steepest descent.
            d.copy_from_slice(&rhs);
            slope = -res * res;
        }

        // Near the optimum the predicted decrease drops below the f64
        // resolution of the energy; the Armijo test is then meaningless, and
        // the full step of a convex Newton iteration is safe on its own.
        let resolution = 16.0 * f64::EPSILON * (1.0 + energy.abs());
        let mut alpha = 1.0;
        let mut accepted = false;
        if (cfg.armijo_c * slope).abs() <= resolution {
            for (k, &node) in problem.interior.iter().enumerate() {
                u[node] += d[k];
            }
            energy = problem.energy(density, u, delta);
            accepted = true;
        } else {
            for _ in 0..60 {
                for (k, &node) in problem.interior.iter().enumerate() {
                    u[node] += alpha * d[k];
                }
                let trial = problem.energy(density, u, delta);
                if trial <= energy + cfg.armijo_c * alpha * slope {
                    energy = trial;
                    accepted = true;
                    break;
                }
                for (k, &node) in problem.interior.iter().enumerate() {
                    u[node] -= alpha * d[k];
                }
                alpha *= 0.5;
            }
        }
        if !accepted {
            // No representable decrease left; either we are at numerical
            // optimality or the stage cannot improve further.
            break;
        }
        step_taken = alpha;
        stats.iterations += 1;
    }

    let r = problem.assemble(density, u, delta, cfg.hessian_floor, None);
    let res = norm2(&r);
    if res <= target {
        stats.energy = problem.energy(density, u, delta);
        stats.residual = res;
        return Ok(());
    }
    Err(Error::NonConvergence {
        residual: res,
        tolerance: target,
        iterations: stats.iterations,
        history,
        last_iterate: u.to_vec(),
    })
}

/// Unsmoothed objective value and gradient norm of the theta-eliminated
/// energy at a given state. Used to report solutions against the exact
/// integrand regardless of the smoothing the solver ran with.
pub fn f_objective(
    integrand: &IntegrandF,
    f_tilde: &ScalarField,
    u: &ScalarField,
) -> Result<(f64, f64)> {
    let mesh = f_tilde.mesh().clone();
    let problem = NewtonProblem::new(&mesh, f_tilde)?;
    let exact = integrand.with_epsilon(0.0)?;
    let density = Density::Integrand(&exact);
    let energy = problem.energy(&density, u.values(), 0.0);
    let r = problem.assemble(&density, u.values(), 0.0, 0.0, None);
    Ok((energy, norm2(&r)))
}

fn check_theta(theta: &ScalarField) -> Result<()> {
    if theta.storage() != Storage::PerElement {
        return Err(Error::StorageMismatch("theta must be per-element".into()));
    }
    for (t, &v) in theta.values().iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "theta must lie in [0,1], element {t} has {v}"
            )));
        }
    }
    Ok(())
}

fn initial_guess(mesh: &Mesh, warm: Option<&ScalarField>) -> Result<Vec<f64>> {
    match warm {
        None => Ok(vec![0.0; mesh.n_nodes()]),
        Some(f) => {
            if f.storage() != Storage::Nodal || f.values().len() != mesh.n_nodes() {
                return Err(Error::StorageMismatch("warm start must be nodal on the same mesh".into()));
            }
            let mut u = f.values().to_vec();
            for i in 0..mesh.n_nodes() {
                if mesh.is_boundary(i) {
                    u[i] = 0.0;
                }
            }
            Ok(u)
        }
    }
}

// For p != 2 the gradient magnitude is regularized as sqrt(|g|^2 + delta^2):
// below 2 it removes the gradient singularity at g = 0, above 2 it floors the
// degenerate curvature (p-1)|g|^(p-2). The energy and flux perturbations are
// O(delta^2), far below the solver tolerances.
fn delta_for(p: f64, eps: f64, grad_scale: f64) -> f64 {
    if p == 2.0 {
        0.0
    } else {
        eps.max(1e-6) * grad_scale.max(1.0)
    }
}

fn current_grad_scale(mesh: &Mesh, u: &[f64]) -> f64 {
    let mut s: f64 = 0.0;
    for t in 0..mesh.n_elements() {
        let g = mesh.element_gradient(t, u);
        s = s.max((g[0] * g[0] + g[1] * g[1]).sqrt());
    }
    s
}

/// Minimizes the weighted p-Dirichlet energy at fixed theta.
pub fn solve_state(
    theta: &ScalarField,
    f_tilde: &ScalarField,
    model: &MaterialModel,
    cfg: &SolveConfig,
) -> Result<(ScalarField, SolveStats)> {
    solve_state_from(theta, f_tilde, model, cfg, None)
}

/// Same as [`solve_state`] with an optional warm start.
pub fn solve_state_from(
    theta: &ScalarField,
    f_tilde: &ScalarField,
    model: &MaterialModel,
    cfg: &SolveConfig,
    warm: Option<&ScalarField>,
) -> Result<(ScalarField, SolveStats)> {
    check_theta(theta)?;
    let mesh = theta.mesh().clone();
    let problem = NewtonProblem::new(&mesh, f_tilde)?;
    let p = model.p;
    let coeff: Vec<f64> =
        theta.values().iter().map(|&th| (1.0 + model.c * th).powf(1.0 - p)).collect();
    let density = Density::State { coeff, p };

    let mut u = initial_guess(&mesh, warm)?;
    let mut stats = SolveStats::default();
    if p == 2.0 {
        newton_stage(&problem, &density, &mut u, 0.0, cfg, &mut stats)?;
    } else {
        let schedule = if cfg.eps_schedule.is_empty() { vec![0.0] } else { cfg.eps_schedule.clone() };
        for &eps in &schedule {
            let delta = delta_for(p, eps, current_grad_scale(&mesh, &u));
            newton_stage(&problem, &density, &mut u, delta, cfg, &mut stats)?;
        }
    }
    Ok((ScalarField::nodal_dirichlet(mesh, u)?, stats))
}

/// Minimizes `sum_T area_T F(|g_T|) - <f_tilde, u>` by smoothing continuation.
pub fn solve_f_problem(
    integrand: &IntegrandF,
    f_tilde: &ScalarField,
    cfg: &SolveConfig,
) -> Result<(ScalarField, SolveStats)> {
    solve_f_problem_from(integrand, f_tilde, cfg, None)
}

/// Same as [`solve_f_problem`] with an optional warm start.
///
/// A final schedule entry of 0 means "exact integrand with fallback": if the
/// unsmoothed stage stalls (its plateau Hessian is genuinely degenerate), a
/// strictly convex stage at `EPS_FALLBACK` runs, the exact stage is retried
/// once from there, and if it still stalls the fallback iterate is accepted.
/// The fallback perturbs the minimizer by O(EPS_FALLBACK), well below every
/// reported tolerance.
pub fn solve_f_problem_from(
    integrand: &IntegrandF,
    f_tilde: &ScalarField,
    cfg: &SolveConfig,
    warm: Option<&ScalarField>,
) -> Result<(ScalarField, SolveStats)> {
    const EPS_FALLBACK: f64 = 1e-8;

    let mesh = f_tilde.mesh().clone();
    let problem = NewtonProblem::new(&mesh, f_tilde)?;
    let mut u = initial_guess(&mesh, warm)?;
    let mut stats = SolveStats::default();
    let schedule = if cfg.eps_schedule.is_empty() { vec![0.0] } else { cfg.eps_schedule.clone() };
    for (k, &eps) in schedule.iter().enumerate() {
        let stage = integrand.with_epsilon(eps)?;
        let density = Density::Integrand(&stage);
        let delta = delta_for(integrand.p, eps, current_grad_scale(&mesh, &u));
        let is_final = k + 1 == schedule.len();
        match newton_stage(&problem, &density, &mut u, delta, cfg, &mut stats) {
            Ok(()) => {}
            Err(Error::NonConvergence { .. }) if is_final && eps == 0.0 && integrand.mu > 0.0 => {
                let fb = integrand.with_epsilon(EPS_FALLBACK)?;
                let fb_density = Density::Integrand(&fb);
                let fb_delta =
                    delta_for(integrand.p, EPS_FALLBACK, current_grad_scale(&mesh, &u));
                newton_stage(&problem, &fb_density, &mut u, fb_delta, cfg, &mut stats)?;
                let mut exact = u.clone();
                let mut exact_stats = stats.clone();
                if newton_stage(&problem, &density, &mut exact, delta, cfg, &mut exact_stats)
                    .is_ok()
                {
                    u = exact;
                    stats = exact_stats;
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok((ScalarField::nodal_dirichlet(mesh, u)?, stats))
}

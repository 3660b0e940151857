//! The outer optimal-design loop.
//!
//! At a multiplier `mu > 0` the optimal proportion is a pointwise function of
//! the state gradient,
//!
//! ```text
//!     theta = 0                     if |grad u| < mu,
//!     theta = (|grad u|/mu - 1)/c   if mu <= |grad u| < (1+c) mu,
//!     theta = 1                     if |grad u| >= (1+c) mu,
//! ```
//!
//! and the volume `int theta dx` decreases as `mu` grows. The design solve
//! first tests the degenerate branch (`mu = 0` applies when the full-contrast
//! state solve already has a small enough active-gradient set), then brackets
//! and bisects `mu` until the volume meets `kappa` to relative `vol_tol`,
//! warm-starting every inner solve from the previous multiplier.

use crate::duality;
use crate::fields::{gradient, integrate, ScalarField, Storage, VectorField};
use crate::geometry::{build_mesh, DomainSpec, Mesh};
use crate::material::{primal_energy, IntegrandF, MaterialModel};
use crate::state_solver::{
    solve_f_problem_from, solve_state_from, SolveConfig, SolveStats,
};
use crate::{Error, Result};
use std::sync::Arc;

/// Relative volume-constraint tolerance of the bisection.
pub const VOL_TOL: f64 = 1e-5;
/// Gradient magnitudes below `GRAD_ZERO_TOL * max` count as zero in the
/// degenerate-branch test.
pub const GRAD_ZERO_TOL: f64 = 1e-8;
const MAX_BISECT: usize = 100;

/// One converged design solve.
#[derive(Debug, Clone)]
pub struct DesignSolution {
    pub u_hat: ScalarField,
    pub theta_hat: ScalarField,
    pub mu_hat: f64,
    pub sigma_hat: VectorField,
    pub primal_energy: f64,
    pub dual_energy: f64,
    /// `int theta_hat dx`.
    pub volume: f64,
    pub kkt_residual: f64,
    /// Final energy of the theta-eliminated minimization.
    pub f_energy: f64,
    /// Gradient-norm residual of the final state solve.
    pub solver_residual: f64,
    pub bisection_steps: usize,
    pub newton_iterations: usize,
    /// Iteration log of the final solve (populated when `keep_log` is set).
    pub solver_log: Vec<crate::state_solver::IterRow>,
    pub model: MaterialModel,
}

impl DesignSolution {
    pub fn mesh(&self) -> &Arc<Mesh> {
        self.u_hat.mesh()
    }
}

/// Pointwise proportion recovered from the state gradient; requires mu > 0.
pub fn theta_from_u(u: &ScalarField, mu: f64, model: &MaterialModel) -> Result<ScalarField> {
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "theta_from_u needs mu > 0 (got {mu}); use the mu = 0 branch instead"
        )));
    }
    let grad = gradient(u)?;
    let c = model.c;
    let values = grad
        .values()
        .iter()
        .map(|g| {
            let s = (g[0] * g[0] + g[1] * g[1]).sqrt();
            if s < mu {
                0.0
            } else if s < (1.0 + c) * mu {
                (s / mu - 1.0) / c
            } else {
                1.0
            }
        })
        .collect();
    ScalarField::per_element(u.mesh().clone(), values)
}

/// Volume produced by a multiplier: solve the theta-eliminated problem at
/// `mu`, recover theta, integrate.
pub fn volume_of_mu(
    mu: f64,
    f_tilde: &ScalarField,
    model: &MaterialModel,
    cfg: &SolveConfig,
) -> Result<f64> {
    let (volume, _, _) = volume_solve(mu, f_tilde, model, cfg, None)?;
    Ok(volume)
}

/// Smoothing used for the bisection probes. At the exact integrand the
/// discrete minimizer has flat (plateau) directions and its selection can
/// jump with mu, making vol(mu) discontinuous; a tiny strictly convex
/// smoothing pins a unique state so the volume becomes a continuous function
/// of the multiplier. The final solution is polished at the exact integrand.
const SELECTION_EPS: f64 = 1e-5;

fn volume_solve(
    mu: f64,
    f_tilde: &ScalarField,
    model: &MaterialModel,
    cfg: &SolveConfig,
    warm: Option<&ScalarField>,
) -> Result<(f64, ScalarField, SolveStats)> {
    let integrand = IntegrandF::new(mu, model.c, model.p, 0.0)?;
    // Warm starts are already near the optimum: skip the coarse smoothing
    // stages. All probe schedules end at the selection smoothing.
    let mut schedule: Vec<f64> = match warm {
        None => cfg.eps_schedule.iter().copied().filter(|&e| e > SELECTION_EPS).collect(),
        Some(_) => Vec::new(),
    };
    schedule.push(SELECTION_EPS);
    let stage_cfg = SolveConfig { eps_schedule: schedule, ..cfg.clone() };
    let result = solve_f_problem_from(&integrand, f_tilde, &stage_cfg, warm);
    if std::env::var_os("PDESIGN_TRACE").is_some() {
        match &result {
            Ok((_, stats)) => eprintln!(
                "trace: volume_solve mu={mu:.8e} warm={} iters={} res={:.2e}",
                warm.is_some(),
                stats.iterations,
                stats.residual
            ),
            Err(e) => eprintln!("trace: volume_solve mu={mu:.8e} warm={} FAILED: {e}", warm.is_some()),
        }
    }
    let (u, stats) = result?;
    let theta = theta_from_u(&u, mu, model)?;
    Ok((integrate(&theta)?, u, stats))
}

/// Elementwise optimality violation of a candidate design, plus the
/// complementarity defect `|mu (volume - kappa)|`.
///
/// Per element the multiplier rule requires
/// `g = mu^p - |grad u|^p / (1 + c theta)^p` to be >= 0 wherever theta can
/// increase (theta < 1) and <= 0 wherever it can decrease (theta > 0); the
/// reported residual is the worst area-weighted violation.
pub fn kkt_residual(sol: &DesignSolution, model: &MaterialModel) -> Result<f64> {
    let grad = gradient(&sol.u_hat)?;
    let p = model.p;
    let c = model.c;
    let mu_p = sol.mu_hat.powf(p);
    let mesh = sol.mesh();
    let mut worst = 0.0f64;
    for (t, g) in grad.values().iter().enumerate() {
        let s = (g[0] * g[0] + g[1] * g[1]).sqrt();
        let th = sol.theta_hat.values()[t];
        let gval = mu_p - s.powf(p) / (1.0 + c * th).powf(p);
        let mut viol = 0.0f64;
        if th < 1.0 {
            viol = viol.max(-gval);
        }
        if th > 0.0 {
            viol = viol.max(gval);
        }
        worst = worst.max(viol.max(0.0) * mesh.area(t));
    }
    Ok(worst + (sol.mu_hat * (sol.volume - model.kappa)).abs())
}

/// Meshes the domain and runs [`solve_design_on_mesh`].
pub fn solve_design(
    domain: &DomainSpec,
    model: &MaterialModel,
    f: impl Fn(f64, f64) -> f64,
    cfg: &SolveConfig,
) -> Result<DesignSolution> {
    let mesh = Arc::new(build_mesh(domain)?);
    let load = ScalarField::from_fn_nodal(mesh.clone(), f);
    solve_design_on_mesh(&load, model, cfg, None)
}

/// Full design solve on an existing mesh. `f` is the raw (unnormalized) load;
/// it is divided by beta internally. `init` seeds the first state solves
/// (used by the restart experiments).
pub fn solve_design_on_mesh(
    f: &ScalarField,
    model: &MaterialModel,
    cfg: &SolveConfig,
    init: Option<&ScalarField>,
) -> Result<DesignSolution> {
    let mesh = f.mesh().clone();
    if !(model.kappa < mesh.total_area()) {
        return Err(Error::InvalidMaterial(format!(
            "kappa = {} must be smaller than the domain area {}",
            model.kappa,
            mesh.total_area()
        )));
    }
    let (_, f_tilde) = crate::material::normalize(model.alpha, model.beta, model.p, f)?;

    // Degenerate branch: with the full-contrast coefficient everywhere, is the
    // set where the state gradient is active already within budget?
    let theta_one = ScalarField::constant(mesh.clone(), Storage::PerElement, 1.0);
    let (u_tilde, stats_tilde) = solve_state_from(&theta_one, &f_tilde, model, cfg, init)?;
    let grad_tilde = gradient(&u_tilde)?;
    let g_max = grad_tilde.max_abs();
    let zero_tol = GRAD_ZERO_TOL * g_max;
    let mut active_area = 0.0;
    for (t, g) in grad_tilde.values().iter().enumerate() {
        if (g[0] * g[0] + g[1] * g[1]).sqrt() > zero_tol {
            active_area += mesh.area(t);
        }
    }
    if active_area <= model.kappa {
        let theta = ScalarField::per_element(
            mesh.clone(),
            grad_tilde
                .values()
                .iter()
                .map(|g| {
                    if (g[0] * g[0] + g[1] * g[1]).sqrt() > zero_tol { 1.0 } else { 0.0 }
                })
                .collect(),
        )?;
        return assemble_solution(u_tilde, theta, 0.0, &f_tilde, model, &stats_tilde, 0);
    }

    // Bracket: mu_hi from the theta = 0 solve kills the whole plateau; mu_lo
    // from the kappa-quantile of the full-contrast gradient field.
    let theta_zero = ScalarField::constant(mesh.clone(), Storage::PerElement, 0.0);
    let (u_zero, _) = solve_state_from(&theta_zero, &f_tilde, model, cfg, init)?;
    let mut mu_hi = gradient(&u_zero)?.max_abs();
    if !(mu_hi > 0.0) {
        return Err(Error::BracketNotFound { kappa: model.kappa, sweep: vec![] });
    }
    let mut mu_lo = gradient_quantile(&grad_tilde, &mesh, model.kappa) / (1.0 + model.c);
    mu_lo = mu_lo.max(1e-12 * mu_hi).min(0.5 * mu_hi);

    let mut sweep: Vec<(f64, f64)> = Vec::new();
    let (mut v_lo, mut u_warm, _) = volume_solve(mu_lo, &f_tilde, model, cfg, init)?;
    sweep.push((mu_lo, v_lo));
    let mut expand = 0;
    while v_lo < model.kappa {
        mu_lo *= 0.5;
        expand += 1;
        if expand > 60 {
            return Err(Error::BracketNotFound { kappa: model.kappa, sweep });
        }
        let r = volume_solve(mu_lo, &f_tilde, model, cfg, Some(&u_warm))?;
        v_lo = r.0;
        u_warm = r.1;
        sweep.push((mu_lo, v_lo));
    }
    let (mut v_hi, u2, _) = volume_solve(mu_hi, &f_tilde, model, cfg, Some(&u_warm))?;
    sweep.push((mu_hi, v_hi));
    u_warm = u2;
    let mut expand = 0;
    while v_hi > model.kappa {
        mu_hi *= 2.0;
        expand += 1;
        if expand > 60 {
            return Err(Error::BracketNotFound { kappa: model.kappa, sweep });
        }
        let r = volume_solve(mu_hi, &f_tilde, model, cfg, Some(&u_warm))?;
        v_hi = r.0;
        u_warm = r.1;
        sweep.push((mu_hi, v_hi));
    }

    // Bisection on the volume. The bracket invariant v(mu_lo) >= kappa >=
    // v(mu_hi) survives non-monotone blips; the loop narrows until the volume
    // matches kappa to VOL_TOL and the bracket is tight enough that restarts
    // land on the same multiplier. A probe stuck in a slope-kink crossing is
    // retried at a deterministically nudged midpoint.
    let mut best: Option<(f64, f64, ScalarField, SolveStats)> = None;
    let mut steps = 0;
    for _ in 0..MAX_BISECT {
        let mut mu_mid = 0.5 * (mu_lo + mu_hi);
        let mut solved = None;
        for nudge in [0.0, 0.1, -0.2] {
            let candidate = mu_mid + nudge * (mu_hi - mu_lo) * 0.5;
            match volume_solve(candidate, &f_tilde, model, cfg, Some(&u_warm)) {
                Ok(r) => {
                    mu_mid = candidate;
                    solved = Some(r);
                    break;
                }
                Err(Error::NonConvergence { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        let (v_mid, u_mid, stats_mid) = match solved {
            Some(r) => r,
            None => return Err(Error::BracketNotFound { kappa: model.kappa, sweep }),
        };
        steps += 1;
        sweep.push((mu_mid, v_mid));
        u_warm = u_mid.clone();
        let better = match &best {
            None => true,
            Some((_, v, _, _)) => (v_mid - model.kappa).abs() < (v - model.kappa).abs(),
        };
        if better {
            best = Some((mu_mid, v_mid, u_mid, stats_mid));
        }
        if v_mid >= model.kappa {
            mu_lo = mu_mid;
        } else {
            mu_hi = mu_mid;
        }
        let (best_v, bracket_tight) = match &best {
            Some((_, v, _, _)) => ((v - model.kappa).abs(), (mu_hi - mu_lo) <= 1e-7 * mu_hi),
            None => (f64::INFINITY, false),
        };
        if best_v <= VOL_TOL * model.kappa && bracket_tight {
            break;
        }
        if (mu_hi - mu_lo) <= 1e-9 * mu_hi {
            break;
        }
    }
    let (_, _, u_hat, stats) = best.ok_or(Error::BracketNotFound {
        kappa: model.kappa,
        sweep: sweep.clone(),
    })?;

    // Settle onto the discrete multiplier system by alternation: re-solve the
    // scalar complementarity condition on the current state (vol(u, mu) is
    // continuous and nonincreasing in mu, so the volume constraint binds
    // exactly), recover theta, and re-solve the strictly convex state problem
    // at fixed theta. At the fixed point u solves the state equation for the
    // theta derived from its own gradients, which makes the primal-dual
    // identity and the theta-eliminated energy decomposition exact.
    let mut u = u_hat;
    let mut mu_hat = 0.0;
    let mut theta = None;
    for _ in 0..40 {
        mu_hat = match adjust_multiplier(&u, model) {
            Some(mu) => mu,
            None => return Err(Error::BracketNotFound { kappa: model.kappa, sweep }),
        };
        let theta_new = theta_from_u(&u, mu_hat, model)?;
        let (u_new, _) = solve_state_from(&theta_new, &f_tilde, model, cfg, Some(&u))?;
        let mut drift = 0.0f64;
        for (a, b) in u_new.values().iter().zip(u.values()) {
            drift = drift.max((a - b).abs());
        }
        let scale = u_new.max_abs().max(1e-300);
        u = u_new;
        theta = Some(theta_new);
        if drift <= 1e-10 * scale {
            break;
        }
    }
    let theta = theta.expect("alternation ran at least once");
    let volume = integrate(&theta)?;
    if (volume - model.kappa).abs() > VOL_TOL * model.kappa {
        return Err(Error::BracketNotFound { kappa: model.kappa, sweep });
    }
    let mut sol = assemble_solution(u, theta, mu_hat, &f_tilde, model, &stats, steps)?;
    sol.newton_iterations = stats.iterations;
    Ok(sol)
}

fn assemble_solution(
    u_hat: ScalarField,
    theta_hat: ScalarField,
    mu_hat: f64,
    f_tilde: &ScalarField,
    model: &MaterialModel,
    stats: &SolveStats,
    bisection_steps: usize,
) -> Result<DesignSolution> {
    let sigma_hat = duality::flux(&u_hat, &theta_hat, model)?;
    let volume = integrate(&theta_hat)?;
    let primal = primal_energy(&u_hat, &theta_hat, f_tilde, model)?;
    let dual = duality::dual_value(&theta_hat, &sigma_hat, model)?;
    // Energy and residual are reported against the exact (unsmoothed)
    // integrand at the reported multiplier.
    let integrand = IntegrandF::new(mu_hat, model.c, model.p, 0.0)?;
    let (f_energy, solver_residual) =
        crate::state_solver::f_objective(&integrand, f_tilde, &u_hat)?;
    let mut sol = DesignSolution {
        u_hat,
        theta_hat,
        mu_hat,
        sigma_hat,
        primal_energy: primal,
        dual_energy: dual,
        volume,
        kkt_residual: 0.0,
        f_energy,
        solver_residual,
        bisection_steps,
        newton_iterations: stats.iterations,
        solver_log: stats.log.clone(),
        model: *model,
    };
    sol.kkt_residual = kkt_residual(&sol, model)?;
    Ok(sol)
}

/// Scalar multiplier making the volume constraint bind on a fixed state:
/// the unique-up-to-flats root of `int theta_from_u(u, mu) dx = kappa`.
fn adjust_multiplier(u: &ScalarField, model: &MaterialModel) -> Option<f64> {
    let grad = gradient(u).ok()?;
    let mesh = u.mesh();
    let data: Vec<(f64, f64)> = grad
        .values()
        .iter()
        .enumerate()
        .map(|(t, g)| ((g[0] * g[0] + g[1] * g[1]).sqrt(), mesh.area(t)))
        .collect();
    let c = model.c;
    let vol_at = |mu: f64| -> f64 {
        data.iter()
            .map(|&(s, area)| area * ((s / mu - 1.0) / c).clamp(0.0, 1.0))
            .sum()
    };
    let s_max = data.iter().fold(0.0f64, |m, &(s, _)| m.max(s));
    if s_max == 0.0 {
        return None;
    }
    let mut lo = 1e-14 * s_max;
    let mut hi = s_max * (1.0 + 1e-12);
    if vol_at(lo) < model.kappa {
        return None; // active set smaller than the budget: mu = 0 territory
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if vol_at(mid) >= model.kappa {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let mu = 0.5 * (lo + hi);
    Some(mu)
}

/// Largest gradient level whose superlevel set has area >= target.
fn gradient_quantile(grad: &VectorField, mesh: &Mesh, target_area: f64) -> f64 {
    let mut mags: Vec<(f64, f64)> = grad
        .values()
        .iter()
        .enumerate()
        .map(|(t, g)| ((g[0] * g[0] + g[1] * g[1]).sqrt(), mesh.area(t)))
        .collect();
    mags.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut acc = 0.0;
    for (mag, area) in &mags {
        acc += area;
        if acc >= target_area {
            return *mag;
        }
    }
    0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, DomainSpec};

    fn unit_square_mesh(h: f64) -> Arc<Mesh> {
        Arc::new(build_mesh(&DomainSpec::rectangle(0.0, 1.0, 0.0, 1.0, h).unwrap()).unwrap())
    }

    #[test]
    fn theta_branches_match_multiplier_rule() {
        // |grad u| = const per case via u = s * x on a tiny mesh; mu = 1, c = 1.
        let model = MaterialModel::new(1.0, 2.0, 2.0, 0.5).unwrap();
        assert_eq!(model.c, 1.0);
        let mesh = unit_square_mesh(0.5);
        for (slope, expected) in [(0.5, 0.0), (1.5, 0.5), (3.0, 1.0)] {
            let u = ScalarField::from_fn_nodal(mesh.clone(), |x, _| slope * x);
            let theta = theta_from_u(&u, 1.0, &model).unwrap();
            for &v in theta.values() {
                assert!((v - expected).abs() < 1e-12, "slope {slope}: {v} vs {expected}");
            }
        }
        let u = ScalarField::from_fn_nodal(mesh, |x, _| x);
        assert!(theta_from_u(&u, 0.0, &model).is_err());
    }

    #[test]
    fn huge_mu_gives_zero_volume() {
        let mesh = unit_square_mesh(0.2);
        let model = MaterialModel::new(1.0, 2.0, 2.0, 0.5).unwrap();
        let f = ScalarField::constant(mesh, Storage::Nodal, 0.5); // already normalized
        let v = volume_of_mu(100.0, &f, &model, &SolveConfig::default()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn tiny_mu_volume_approaches_active_gradient_area() {
        // As mu -> 0 the recovered design covers the set where the
        // full-contrast state has a nonzero gradient (on this symmetric mesh
        // a few interior elements have exactly zero gradient and stay out).
        let mesh = unit_square_mesh(0.2);
        let model = MaterialModel::new(1.0, 2.0, 2.0, 0.5).unwrap();
        let cfg = SolveConfig::default();
        let f = ScalarField::constant(mesh.clone(), Storage::Nodal, 0.5);
        let theta_one = ScalarField::constant(mesh.clone(), Storage::PerElement, 1.0);
        let (u_tilde, _) = crate::state_solver::solve_state(&theta_one, &f, &model, &cfg).unwrap();
        let grad = gradient(&u_tilde).unwrap();
        let g_max = grad.max_abs();
        let mut active = 0.0;
        for (t, g) in grad.values().iter().enumerate() {
            if (g[0] * g[0] + g[1] * g[1]).sqrt() > GRAD_ZERO_TOL * g_max {
                active += mesh.area(t);
            }
        }
        let v = volume_of_mu(1e-7, &f, &model, &cfg).unwrap();
        assert!(
            (v - active).abs() <= 0.05 * mesh.total_area(),
            "volume {v} vs active area {active}"
        );
        assert!(active < mesh.total_area());
    }

    #[test]
    fn volume_is_monotone_over_mu_sweep() {
        let mesh = unit_square_mesh(0.125);
        let model = MaterialModel::new(1.0, 2.0, 2.0, 0.5).unwrap();
        let f = ScalarField::constant(mesh, Storage::Nodal, 0.5);
        let cfg = SolveConfig::default();
        // Logarithmic sweep across the active range of mu.
        let mut prev = f64::INFINITY;
        let mut mu = 0.02;
        while mu < 0.4 {
            let v = volume_of_mu(mu, &f, &model, &cfg).unwrap();
            assert!(
                v <= prev + 1e-8,
                "volume increased along the sweep at mu={mu}: {v} > {prev}"
            );
            prev = v;
            mu *= 1.6;
        }
    }

    #[test]
    fn zero_load_takes_degenerate_branch() {
        let mesh = unit_square_mesh(0.25);
        let model = MaterialModel::new(1.0, 2.0, 2.0, 0.5).unwrap();
        let f = ScalarField::constant(mesh, Storage::Nodal, 0.0);
        let sol = solve_design_on_mesh(&f, &model, &SolveConfig::default(), None).unwrap();
        assert_eq!(sol.mu_hat, 0.0);
        assert_eq!(sol.volume, 0.0);
        // Complementarity term vanishes identically on this branch.
        assert_eq!((sol.mu_hat * (sol.volume - model.kappa)).abs(), 0.0);
        assert!(sol.kkt_residual <= 1e-12);
    }

    #[test]
    fn kkt_residual_of_oracle_fields_shrinks_with_h() {
        // Sampling the exact radial solution onto meshes gives a candidate
        // whose optimality defect is pure discretization error.
        let kappa = std::f64::consts::PI / 2.0;
        let model = MaterialModel::new(1.0, 2.0, 2.0, kappa).unwrap();
        let oracle = crate::diagnostics::radial_oracle(1.0, &model, 1.0).unwrap();
        for h in [0.1, 0.05] {
            let mesh = Arc::new(
                build_mesh(&crate::geometry::DomainSpec::disk(0.0, 0.0, 1.0, h).unwrap())
                    .unwrap(),
            );
            let (u, theta, sigma) = oracle.fields_on(&mesh).unwrap();
            let volume = integrate(&theta).unwrap();
            let sol = DesignSolution {
                u_hat: u,
                theta_hat: theta,
                mu_hat: oracle.mu_hat,
                sigma_hat: sigma,
                primal_energy: 0.0,
                dual_energy: 0.0,
                volume,
                kkt_residual: 0.0,
                f_energy: 0.0,
                solver_residual: 0.0,
                bisection_steps: 0,
                newton_iterations: 0,
                solver_log: Vec::new(),
                model,
            };
            let res = kkt_residual(&sol, &model).unwrap();
            assert!(res <= h, "kkt residual {res} at h={h}");
        }
    }

    #[test]
    fn square_design_meets_volume_and_multiplier_rule() {
        let mesh = unit_square_mesh(0.1);
        let model = MaterialModel::new(1.0, 2.0, 2.0, 0.5).unwrap();
        let f = ScalarField::constant(mesh.clone(), Storage::Nodal, 1.0);
        let cfg = SolveConfig::default();
        let sol = solve_design_on_mesh(&f, &model, &cfg, None).unwrap();
        assert!(sol.mu_hat > 0.0);
        assert!(
            (sol.volume - model.kappa).abs() <= VOL_TOL * model.kappa,
            "volume {} vs kappa {}",
            sol.volume,
            model.kappa
        );
        // Intermediate theta only where |grad u| sits in [mu, (1+c) mu].
        let grad = gradient(&sol.u_hat).unwrap();
        for (t, &th) in sol.theta_hat.values().iter().enumerate() {
            if th > 0.0 && th < 1.0 {
                let g = grad.values()[t];
                let s = (g[0] * g[0] + g[1] * g[1]).sqrt();
                assert!(s >= sol.mu_hat * (1.0 - 1e-12));
                assert!(s <= (1.0 + model.c) * sol.mu_hat * (1.0 + 1e-12));
            }
        }
        // KKT violations stay at solver-noise level by construction.
        assert!(sol.kkt_residual <= 1e-6, "kkt residual {}", sol.kkt_residual);

        // Swapping two very different elements breaks optimality.
        let mut theta_bad = sol.theta_hat.clone();
        let (mut i_hi, mut i_lo) = (usize::MAX, usize::MAX);
        for (t, &th) in sol.theta_hat.values().iter().enumerate() {
            if th == 1.0 && i_hi == usize::MAX {
                i_hi = t;
            }
            if th == 0.0 && i_lo == usize::MAX {
                i_lo = t;
            }
        }
        assert!(i_hi != usize::MAX && i_lo != usize::MAX);
        theta_bad.values_mut().swap(i_hi, i_lo);
        let bad = DesignSolution { theta_hat: theta_bad, ..sol.clone() };
        let r_bad = kkt_residual(&bad, &model).unwrap();
        assert!(
            r_bad > 10.0 * sol.kkt_residual.max(1e-12),
            "perturbed residual {} vs {}",
            r_bad,
            sol.kkt_residual
        );
    }
}

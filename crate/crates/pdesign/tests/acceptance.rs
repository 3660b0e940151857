//! Acceptance suite: every release-gating property of the solver, each
//! criterion printing one PASS/FAIL line with its measured values.
//!
//! The disk cases are checked against the exact radial solution (interface
//! radius r0 = sqrt(R^2 - kappa/pi), flux threshold t_hat = (f/beta) r0/2);
//! the unit-square cases probe duality, flux uniqueness across restarts, the
//! nonexistence signature (a mesh-stable intermediate-proportion region) and
//! the flux regularity trend. Expensive solves are shared between criteria
//! through lazy statics.

use pdesign::design_opt::{solve_design_on_mesh, DesignSolution};
use pdesign::diagnostics::{flux_h1_seminorm, intermediate_measure, radial_oracle};
use pdesign::duality::dual_report;
use pdesign::fields::{
    gradient, integrate, lumped_product_integral, ScalarField, Storage,
};
use pdesign::geometry::{build_mesh, DomainSpec, Mesh};
use pdesign::lamination::{build_laminate, h_eval, g_eval, laminate_energy, LaminateSpec};
use pdesign::material::{homog_coeff, normalize, primal_energy, IntegrandF, MaterialModel};
use pdesign::state_solver::{f_objective, solve_f_problem, solve_state, SolveConfig};
use std::sync::{Arc, LazyLock};
use std::time::{Duration, Instant};

const DISK_PS: [f64; 3] = [1.5, 2.0, 3.0];
const LEVELS: [f64; 3] = [0.08, 0.04, 0.02];
const KAPPA_DISK: f64 = std::f64::consts::PI / 2.0;

struct DiskCase {
    p: f64,
    h: f64,
    sol: DesignSolution,
    runtime: Duration,
}

fn disk_model(p: f64) -> MaterialModel {
    MaterialModel::new(1.0, 2.0, p, KAPPA_DISK).unwrap()
}

fn square_model() -> MaterialModel {
    MaterialModel::new(1.0, 2.0, 2.0, 0.5).unwrap()
}

static DISK_CASES: LazyLock<Vec<DiskCase>> = LazyLock::new(|| {
    let cfg = SolveConfig::default();
    let mut cases = Vec::new();
    for &p in &DISK_PS {
        for &h in &LEVELS {
            let mesh =
                Arc::new(build_mesh(&DomainSpec::disk(0.0, 0.0, 1.0, h).unwrap()).unwrap());
            let f = ScalarField::constant(mesh.clone(), Storage::Nodal, 1.0);
            let start = Instant::now();
            let sol = solve_design_on_mesh(&f, &disk_model(p), &cfg, None)
                .unwrap_or_else(|e| panic!("disk solve p={p} h={h} failed: {e}"));
            cases.push(DiskCase { p, h, sol, runtime: start.elapsed() });
        }
    }
    cases
});

/// Unit-square designs (f = 1, p = 2, kappa = 0.5) at the three levels.
static SQUARE_CASES: LazyLock<Vec<(f64, DesignSolution)>> = LazyLock::new(|| {
    let cfg = SolveConfig::default();
    LEVELS
        .iter()
        .map(|&h| {
            let mesh = Arc::new(
                build_mesh(&DomainSpec::rectangle(0.0, 1.0, 0.0, 1.0, h).unwrap()).unwrap(),
            );
            let f = ScalarField::constant(mesh.clone(), Storage::Nodal, 1.0);
            let sol = solve_design_on_mesh(&f, &square_model(), &cfg, None)
                .unwrap_or_else(|e| panic!("square solve h={h} failed: {e}"));
            (h, sol)
        })
        .collect()
});

fn report(criterion: &str, pass: bool, detail: &str) {
    println!("{} criterion {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_1_disk_oracle_match() {
    for &p in &DISK_PS {
        let oracle = radial_oracle(1.0, &disk_model(p), 1.0).unwrap();
        let mut mu_errs = Vec::new();
        let mut l1_errs = Vec::new();
        for case in DISK_CASES.iter().filter(|c| c.p == p) {
            let t_est = case.sol.mu_hat.powf(p - 1.0);
            mu_errs.push((t_est - oracle.sigma_threshold).abs() / oracle.sigma_threshold);
            let mesh = case.sol.mesh().clone();
            let mut l1 = 0.0;
            for (t, &th) in case.sol.theta_hat.values().iter().enumerate() {
                let c = mesh.centroid(t);
                let r = (c[0] * c[0] + c[1] * c[1]).sqrt();
                let ind = if r > oracle.r0 { 1.0 } else { 0.0 };
                l1 += mesh.area(t) * (th - ind).abs();
            }
            l1_errs.push(l1 / KAPPA_DISK);
            report(
                "1 (runtime)",
                case.runtime < Duration::from_secs(300),
                &format!("p={p} h={} solved in {:.1?}", case.h, case.runtime),
            );
        }
        report(
            "1 (multiplier)",
            mu_errs[2] <= 0.05 && mu_errs[1] < mu_errs[0] && mu_errs[2] < mu_errs[1],
            &format!("p={p}: |mu^(p-1) - t_hat|/t_hat per level = {mu_errs:.4?}"),
        );
        report(
            "1 (theta L1)",
            l1_errs[2] <= 0.10 && l1_errs[1] < l1_errs[0] && l1_errs[2] < l1_errs[1],
            &format!("p={p}: L1(theta - indicator)/kappa per level = {l1_errs:.4?}"),
        );
    }
}

#[test]
fn criterion_2_duality_gap() {
    let mut worst: f64 = 0.0;
    for case in DISK_CASES.iter() {
        let gap = (case.sol.primal_energy + case.sol.dual_energy).abs()
            / case.sol.primal_energy.abs().max(1.0);
        worst = worst.max(gap);
    }
    for (_, sol) in SQUARE_CASES.iter() {
        let gap = (sol.primal_energy + sol.dual_energy).abs() / sol.primal_energy.abs().max(1.0);
        worst = worst.max(gap);
    }
    report("2", worst <= 1e-6, &format!("worst relative primal-dual defect = {worst:.3e}"));
}

#[test]
fn criterion_3_flux_uniqueness_across_restarts() {
    let (_, sol) = &SQUARE_CASES[1]; // h = 0.04
    let mesh = sol.mesh().clone();
    let f = ScalarField::constant(mesh, Storage::Nodal, 1.0);
    let rep = dual_report(sol, &f, 3, &SolveConfig::default(), 20260810).unwrap();
    report(
        "3",
        rep.flux_spread <= 1e-5,
        &format!("relative L^p' flux spread across 3 restarts = {:.3e}", rep.flux_spread),
    );
}

#[test]
fn criterion_4_volume_complementarity() {
    let mut worst: f64 = 0.0;
    for case in DISK_CASES.iter() {
        assert!(case.sol.mu_hat > 0.0);
        worst = worst.max((case.sol.volume - KAPPA_DISK).abs() / KAPPA_DISK);
    }
    for (_, sol) in SQUARE_CASES.iter() {
        assert!(sol.mu_hat > 0.0);
        worst = worst.max((sol.volume - 0.5).abs() / 0.5);
    }
    report("4", worst <= 1e-4, &format!("worst |vol - kappa|/kappa = {worst:.3e}"));
}

#[test]
fn criterion_5_formulation_equivalence() {
    // The state energy at theta_hat and the theta-eliminated minimum differ
    // by the multiplier term (c mu^p / p') int theta dx; fresh independent
    // solves of both formulations must agree through that identity.
    let cfg = SolveConfig::default();
    let mut worst: f64 = 0.0;
    let mut check = |sol: &DesignSolution, label: &str| {
        let model = sol.model;
        let mesh = sol.mesh().clone();
        let f = ScalarField::constant(mesh.clone(), Storage::Nodal, 1.0);
        let (_, f_tilde) = normalize(model.alpha, model.beta, model.p, &f).unwrap();
        let (u_state, _) = solve_state(&sol.theta_hat, &f_tilde, &model, &cfg)
            .unwrap_or_else(|e| panic!("state solve ({label}) failed: {e}"));
        let e_state = primal_energy(&u_state, &sol.theta_hat, &f_tilde, &model).unwrap();
        let integrand = IntegrandF::new(sol.mu_hat, model.c, model.p, 0.0).unwrap();
        let (u_f, _) = solve_f_problem(&integrand, &f_tilde, &cfg)
            .unwrap_or_else(|e| panic!("F solve ({label}) failed: {e}"));
        let (e_f, _) = f_objective(&integrand, &f_tilde, &u_f).unwrap();
        let multiplier_term = model.c * sol.mu_hat.powf(model.p) / model.p_conj() * sol.volume;
        let rel = (e_state + multiplier_term - e_f).abs() / e_f.abs().max(1.0);
        worst = worst.max(rel);
    };
    for case in DISK_CASES.iter() {
        check(&case.sol, &format!("disk p={} h={}", case.p, case.h));
    }
    for (h, sol) in SQUARE_CASES.iter() {
        check(sol, &format!("square h={h}"));
    }
    report("5", worst <= 1e-8, &format!("worst relative energy mismatch = {worst:.3e}"));
}

#[test]
fn criterion_6_lamination_convergence() {
    // Single cube, affine state, q = 1/2, alpha = 1, beta = 3, p = 2:
    // the laminate energy per unit area must approach homog_coeff(1/2) = 1.5.
    // Layer interfaces are mesh lines of the 1/384-pitch grid, so the
    // quadrature is exact and the match is to roundoff.
    let model = MaterialModel::new(1.0, 3.0, 2.0, 0.5).unwrap();
    let mesh = Arc::new(
        build_mesh(&DomainSpec::rectangle(0.0, 1.0, 0.0, 1.0, 1.0 / 384.0).unwrap()).unwrap(),
    );
    let theta = ScalarField::constant(mesh.clone(), Storage::PerElement, 0.5);
    let u = ScalarField::from_fn_nodal(mesh.clone(), |x, _| x);
    let target = homog_coeff(0.5, &model); // 1.5 * |xi|^p with |xi| = 1
    assert!((target - 1.5).abs() < 1e-14);
    let delta = 1.0;
    let mut errs = Vec::new();
    for eps in [delta / 4.0, delta / 8.0, delta / 16.0, delta / 32.0] {
        let spec = LaminateSpec::from_fields(&theta, &u, delta, eps, [1.0, 0.0]).unwrap();
        let (chi, u_corr) = build_laminate(&spec, &u, &model).unwrap();
        let e = laminate_energy(&chi, &u_corr, &model).unwrap() / mesh.total_area();
        errs.push((e - target).abs() / target);
    }
    report(
        "6 (eps = delta/32)",
        *errs.last().unwrap() <= 0.01,
        &format!("relative error at eps=delta/32 = {:.3e}", errs.last().unwrap()),
    );
    let shown: Vec<String> = errs.iter().map(|e| format!("{e:.2e}")).collect();
    report(
        "6 (aligned exactness)",
        errs.iter().all(|&e| e <= 1e-10),
        &format!("aligned-mesh errors across the eps sweep = [{}]", shown.join(", ")),
    );
}

#[test]
fn criterion_7_gradient_matches_finite_differences() {
    // Directional derivatives of both discrete energies against central
    // differences, computed from public APIs only, smoothing active.
    let mesh = Arc::new(
        build_mesh(&DomainSpec::rectangle(0.0, 1.0, 0.0, 1.0, 0.1).unwrap()).unwrap(),
    );
    let model = MaterialModel::new(1.0, 2.5, 1.7, 0.5).unwrap();
    let f_tilde = ScalarField::from_fn_nodal(mesh.clone(), |x, y| 0.4 + x * y);
    let eps = 1e-4;
    let delta = 1e-4;
    let integrand = IntegrandF::new(0.4, model.c, model.p, eps).unwrap();
    let theta = ScalarField::from_fn_elements(mesh.clone(), |x, _| x.clamp(0.0, 1.0));

    // Energy and directional derivative evaluators built on field ops.
    let reg = |g: [f64; 2]| (g[0] * g[0] + g[1] * g[1] + delta * delta).sqrt();
    let f_energy = |u: &ScalarField| -> f64 {
        let grad = gradient(u).unwrap();
        let density: Vec<f64> =
            grad.values().iter().map(|&g| integrand.eval(reg(g)).0).collect();
        let bulk =
            integrate(&ScalarField::per_element(mesh.clone(), density).unwrap()).unwrap();
        bulk - lumped_product_integral(&f_tilde, u).unwrap()
    };
    let state_energy = |u: &ScalarField| -> f64 {
        let grad = gradient(u).unwrap();
        let density: Vec<f64> = grad
            .values()
            .iter()
            .zip(theta.values())
            .map(|(&g, &th)| {
                reg(g).powf(model.p) / (model.p * (1.0 + model.c * th).powf(model.p - 1.0))
            })
            .collect();
        let bulk =
            integrate(&ScalarField::per_element(mesh.clone(), density).unwrap()).unwrap();
        bulk - lumped_product_integral(&f_tilde, u).unwrap()
    };
    let f_slope = |u: &ScalarField, v: &ScalarField| -> f64 {
        let gu = gradient(u).unwrap();
        let gv = gradient(v).unwrap();
        let mut acc = 0.0;
        for (t, (&g, &w)) in gu.values().iter().zip(gv.values()).enumerate() {
            let tr = reg(g);
            let (_, slope, _) = integrand.eval(tr);
            acc += mesh.area(t) * slope * (g[0] * w[0] + g[1] * w[1]) / tr;
        }
        acc - lumped_product_integral(&f_tilde, v).unwrap()
    };
    let state_slope = |u: &ScalarField, v: &ScalarField| -> f64 {
        let gu = gradient(u).unwrap();
        let gv = gradient(v).unwrap();
        let mut acc = 0.0;
        for (t, (&g, &w)) in gu.values().iter().zip(gv.values()).enumerate() {
            let tr = reg(g);
            let slope = tr.powf(model.p - 1.0)
                / (1.0 + model.c * theta.values()[t]).powf(model.p - 1.0);
            acc += mesh.area(t) * slope * (g[0] * w[0] + g[1] * w[1]) / tr;
        }
        acc - lumped_product_integral(&f_tilde, v).unwrap()
    };

    // Deterministic pseudo-random interior fields.
    let mut seed = 0x9e3779b97f4a7c15u64;
    let mut rng = move || {
        seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    let random_interior = |rng: &mut dyn FnMut() -> f64, mesh: &Arc<Mesh>| -> ScalarField {
        let vals: Vec<f64> = (0..mesh.n_nodes())
            .map(|i| if mesh.is_boundary(i) { 0.0 } else { rng() })
            .collect();
        ScalarField::nodal_dirichlet(mesh.clone(), vals).unwrap()
    };

    let u0 = random_interior(&mut rng, &mesh);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let v = random_interior(&mut rng, &mesh);
        let h_fd = 1e-6;
        let shift = |s: f64| -> ScalarField {
            let vals: Vec<f64> = u0
                .values()
                .iter()
                .zip(v.values())
                .map(|(&a, &b)| a + s * b)
                .collect();
            ScalarField::nodal(mesh.clone(), vals).unwrap()
        };
        let up = shift(h_fd);
        let um = shift(-h_fd);
        for (energy, slope64) in [
            ((f_energy(&up) - f_energy(&um)) / (2.0 * h_fd), f_slope(&u0, &v)),
            ((state_energy(&up) - state_energy(&um)) / (2.0 * h_fd), state_slope(&u0, &v)),
        ] {
            worst = worst.max((energy - slope64).abs() / (1.0 + slope64.abs()));
        }
    }
    report("7", worst <= 1e-6, &format!("worst FD-vs-analytic relative error = {worst:.3e}"));
}

#[test]
fn criterion_8_nonexistence_signature() {
    let square: Vec<f64> = SQUARE_CASES
        .iter()
        .map(|(_, sol)| intermediate_measure(&sol.theta_hat, 0.01).unwrap())
        .collect();
    report(
        "8 (square plateau)",
        square.iter().all(|&m| m >= 0.02),
        &format!("square intermediate measure per level = {square:.4?}"),
    );
    let disk: Vec<f64> = DISK_CASES
        .iter()
        .filter(|c| c.p == 2.0)
        .map(|c| intermediate_measure(&c.sol.theta_hat, 0.01).unwrap())
        .collect();
    report(
        "8 (disk decay)",
        disk[1] < disk[0] && disk[2] < disk[1],
        &format!("disk intermediate measure per level = {disk:.4?}"),
    );
}

#[test]
fn criterion_9_flux_regularity_trend() {
    let norms: Vec<f64> = SQUARE_CASES
        .iter()
        .map(|(_, sol)| flux_h1_seminorm(&sol.sigma_hat, 0.0).unwrap())
        .collect();
    let variation = (norms[2] - norms[1]).abs() / norms[1];
    report(
        "9",
        variation <= 0.10,
        &format!("flux H1 seminorms per level = {norms:.4?}, finest-pair variation = {variation:.3}"),
    );
}

#[test]
fn criterion_10_invariant_suite_spot_checks() {
    // The module invariants run as unit and property tests in the library;
    // this recapitulates one representative assertion per family plus the
    // byte-identity determinism check.
    let f = IntegrandF::new(0.8, 1.3, 2.4, 1e-3).unwrap();
    let mut prev = -1.0;
    let mut convex = true;
    for k in 0..=400 {
        let s = 4.0 * k as f64 / 400.0;
        let slope = f.eval(s).1;
        convex &= slope >= prev - 1e-12;
        prev = slope;
    }
    report("10 (F convexity)", convex, "slope nondecreasing over sample grid");

    let mut g_ok = true;
    for k in 0..200 {
        let q = k as f64 / 199.0;
        for j in -30..30 {
            let r = j as f64 * 0.173;
            let g = g_eval(q, r);
            g_ok &= g <= 1e-15 && g >= q * (q - 1.0) - 1e-15;
            g_ok &= h_eval(q, r) == h_eval(q, r + 1.0);
        }
    }
    report("10 (H/G profiles)", g_ok, "periodicity and corrector bounds on sample grid");

    let mesh = Arc::new(
        build_mesh(&DomainSpec::rectangle(0.0, 1.0, 0.0, 1.0, 0.21).unwrap()).unwrap(),
    );
    let affine = ScalarField::from_fn_nodal(mesh.clone(), |x, y| 1.3 - 0.7 * x + 0.4 * y);
    let grad = gradient(&affine).unwrap();
    let exact = grad
        .values()
        .iter()
        .all(|g| (g[0] + 0.7).abs() < 1e-12 && (g[1] - 0.4).abs() < 1e-12);
    report("10 (mesh gradients)", exact, "affine gradients reproduced per element");

    // Determinism: identical config + seed => byte-identical artifacts.
    let config_text = "alpha = 1\nbeta = 2\np = 2\nkappa = 0.3\n\
                       domain = rectangle 0 1 0 1\nh = 0.2\nf = const 1\nseed = 3\n";
    let config = pdesign::config::parse_config(config_text).unwrap();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    pdesign::runner::run(pdesign::runner::Command::Solve, &config, dir_a.path()).unwrap();
    pdesign::runner::run(pdesign::runner::Command::Solve, &config, dir_b.path()).unwrap();
    let mut identical = true;
    for name in ["summary.txt", "u.csv", "theta.csv", "sigma.csv", "nodes.csv", "elements.csv"] {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        identical &= a == b;
    }
    report("10 (determinism)", identical, "repeated runs produce byte-identical artifacts");
}

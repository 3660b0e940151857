//! Fine-scale laminates realizing the relaxed designs.
//!
//! The layer profile and its corrector integral are the 1-periodic functions
//!
//! ```text
//!     H(q, r) = 1 if frac(r) in [0, q) else 0,
//!     G(q, r) = q r - int_0^r H(q, s) ds   (so q(q-1) <= G <= 0, G(q, 0) = 0).
//! ```
//!
//! A laminate realization covers the domain with axis-aligned cubes of side
//! `delta`, takes per-cube proportions `q_i` and directions `zeta_i` from
//! cell averages of a design `(theta, u)`, and builds the set indicator
//!
//! ```text
//!     chi(x) = H(q_i, zeta_i . x / eps)         on cube Q_i,
//! ```
//!
//! together with the corrected state
//!
//! ```text
//!     u_corr = u + eps sum_i psi_i |xi_i| A_i G(q_i, zeta_i . x / eps),
//!     A_i    = (b - a) / (a q_i + b (1 - q_i)),   a = alpha^(1/(1-p)), b = beta^(1/(1-p)),
//! ```
//!
//! whose oscillating gradient makes the two-phase energy of `(chi, u_corr)`
//! converge to the homogenized energy as `eps -> 0` then `delta -> 0`. With a
//! single cube, an affine state and a mesh aligned with the layer interfaces
//! the per-area energy equals `homog_coeff(q) |xi|^p` to quadrature accuracy.
//! `psi_i` is a C^1 tensor-product bump partition of unity (plateau on the
//! cube, cubic ramp over a `delta` margin, normalized by the sum).

use crate::fields::{
    gradient, integrate, prolong_element, prolong_nodal, ScalarField, Storage,
};
use crate::geometry::Mesh;
use crate::material::{homog_coeff, MaterialModel};
use crate::{Error, Result};
use std::sync::Arc;

/// Layer indicator profile, 1-periodic in r.
pub fn h_eval(q: f64, r: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&q));
    if r - r.floor() < q {
        1.0
    } else {
        0.0
    }
}

/// Corrector integral `G(q, r) = q r - int_0^r H(q, s) ds`, 1-periodic,
/// piecewise linear, `G(q, integer) = 0`.
pub fn g_eval(q: f64, r: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&q));
    let fr = r - r.floor();
    q * fr - fr.min(q)
}

/// Cube partition with per-cube laminate data.
#[derive(Debug, Clone)]
pub struct LaminateSpec {
    pub origin: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    pub delta: f64,
    pub epsilon: f64,
    /// Per-cube proportion of the alpha phase.
    pub q: Vec<f64>,
    /// Per-cube cell-average gradient (may be zero).
    pub xi: Vec<[f64; 2]>,
    /// Per-cube unit lamination direction.
    pub zeta: Vec<[f64; 2]>,
    /// Fallback direction for cubes with vanishing xi.
    pub fallback: [f64; 2],
}

impl LaminateSpec {
    /// Cell-averages a design pair over a `delta` cube grid covering the mesh
    /// bounding box. Averages are normalized by the full cube area, so cubes
    /// partly outside the domain see the fields extended by zero.
    pub fn from_fields(
        theta: &ScalarField,
        u: &ScalarField,
        delta: f64,
        epsilon: f64,
        fallback: [f64; 2],
    ) -> Result<LaminateSpec> {
        if theta.storage() != Storage::PerElement {
            return Err(Error::StorageMismatch("laminate spec needs per-element theta".into()));
        }
        if !(delta > 0.0) || !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need delta > 0 and epsilon > 0, got {delta}, {epsilon}"
            )));
        }
        let norm = (fallback[0] * fallback[0] + fallback[1] * fallback[1]).sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidArgument("fallback direction must be nonzero".into()));
        }
        let fallback = [fallback[0] / norm, fallback[1] / norm];

        let mesh = theta.mesh().clone();
        let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
        let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in mesh.nodes() {
            min_x = min_x.min(p[0]);
            max_x = max_x.max(p[0]);
            min_y = min_y.min(p[1]);
            max_y = max_y.max(p[1]);
        }
        let nx = (((max_x - min_x) / delta - 1e-12).ceil() as usize).max(1);
        let ny = (((max_y - min_y) / delta - 1e-12).ceil() as usize).max(1);

        let grad = gradient(u)?;
        let cell_area = delta * delta;
        let mut q = vec![0.0; nx * ny];
        let mut xi = vec![[0.0; 2]; nx * ny];
        for t in 0..mesh.n_elements() {
            let c = mesh.centroid(t);
            let i = cube_index(c, [min_x, min_y], delta, nx, ny);
            let area = mesh.area(t);
            q[i] += area * theta.values()[t] / cell_area;
            xi[i][0] += area * grad.values()[t][0] / cell_area;
            xi[i][1] += area * grad.values()[t][1] / cell_area;
        }
        for v in q.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        let xi_max = xi.iter().fold(0.0f64, |m, v| m.max((v[0] * v[0] + v[1] * v[1]).sqrt()));
        let zeta = xi
            .iter()
            .map(|v| {
                let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
                if n > 1e-12 * xi_max.max(1e-300) {
                    [v[0] / n, v[1] / n]
                } else {
                    fallback
                }
            })
            .collect();
        Ok(LaminateSpec {
            origin: [min_x, min_y],
            nx,
            ny,
            delta,
            epsilon,
            q,
            xi,
            zeta,
            fallback,
        })
    }

    pub fn n_cubes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cube_center(&self, i: usize) -> [f64; 2] {
        let ix = i % self.nx;
        let iy = i / self.nx;
        [
            self.origin[0] + (ix as f64 + 0.5) * self.delta,
            self.origin[1] + (iy as f64 + 0.5) * self.delta,
        ]
    }

    fn cube_of(&self, p: [f64; 2]) -> usize {
        cube_index(p, self.origin, self.delta, self.nx, self.ny)
    }

    /// Partition-of-unity weights of every cube whose bump supports `p`,
    /// normalized to sum to one.
    fn psi_weights(&self, p: [f64; 2]) -> Vec<(usize, f64)> {
        let reach = 1.5 * self.delta;
        let ix0 = (((p[0] - self.origin[0] - reach) / self.delta).floor()).max(0.0) as usize;
        let iy0 = (((p[1] - self.origin[1] - reach) / self.delta).floor()).max(0.0) as usize;
        let ix1 = ((((p[0] - self.origin[0] + reach) / self.delta).floor()) as usize).min(self.nx - 1);
        let iy1 = ((((p[1] - self.origin[1] + reach) / self.delta).floor()) as usize).min(self.ny - 1);
        let mut weights = Vec::with_capacity(9);
        let mut total = 0.0;
        for iy in iy0..=iy1 {
            for ix in ix0..=ix1 {
                let i = iy * self.nx + ix;
                let c = self.cube_center(i);
                let w = bump((p[0] - c[0]) / self.delta) * bump((p[1] - c[1]) / self.delta);
                if w > 0.0 {
                    weights.push((i, w));
                    total += w;
                }
            }
        }
        for (_, w) in weights.iter_mut() {
            *w /= total;
        }
        weights
    }
}

fn cube_index(p: [f64; 2], origin: [f64; 2], delta: f64, nx: usize, ny: usize) -> usize {
    let ix = (((p[0] - origin[0]) / delta).floor() as isize).clamp(0, nx as isize - 1) as usize;
    let iy = (((p[1] - origin[1]) / delta).floor() as isize).clamp(0, ny as isize - 1) as usize;
    iy * nx + ix
}

/// 1D bump: plateau over the own cube (|t| <= 1/2), C^1 cubic ramp to zero
/// across the margin (|t| = 3/2).
fn bump(t: f64) -> f64 {
    let s = (1.5 - t.abs()).clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Laminate indicator (per element, sampled at centroids) and corrected state
/// (nodal). Requires the mesh to resolve the period: `h_max <= eps/8`.
pub fn build_laminate(
    spec: &LaminateSpec,
    u: &ScalarField,
    model: &MaterialModel,
) -> Result<(ScalarField, ScalarField)> {
    if u.storage() != Storage::Nodal {
        return Err(Error::StorageMismatch("build_laminate needs a nodal state".into()));
    }
    let mesh = u.mesh().clone();
    let required = spec.epsilon / 8.0;
    if mesh.h_max() > required * (1.0 + 1e-12) {
        return Err(Error::MeshTooCoarse { h_max: mesh.h_max(), required_h: required });
    }

    let mut chi = Vec::with_capacity(mesh.n_elements());
    for t in 0..mesh.n_elements() {
        let c = mesh.centroid(t);
        let i = spec.cube_of(c);
        let z = spec.zeta[i];
        chi.push(h_eval(spec.q[i], (z[0] * c[0] + z[1] * c[1]) / spec.epsilon));
    }

    let e = 1.0 / (1.0 - model.p);
    let a = model.alpha.powf(e);
    let b = model.beta.powf(e);
    let amp: Vec<f64> = (0..spec.n_cubes())
        .map(|i| {
            let denom = a * spec.q[i] + b * (1.0 - spec.q[i]);
            let xi_norm = (spec.xi[i][0].powi(2) + spec.xi[i][1].powi(2)).sqrt();
            xi_norm * (b - a) / denom
        })
        .collect();

    let mut u_corr = Vec::with_capacity(mesh.n_nodes());
    for (n, p) in mesh.nodes().iter().enumerate() {
        let mut corr = 0.0;
        for (i, psi) in spec.psi_weights(*p) {
            if amp[i] != 0.0 {
                let z = spec.zeta[i];
                let phase = (z[0] * p[0] + z[1] * p[1]) / spec.epsilon;
                corr += psi * amp[i] * g_eval(spec.q[i], phase);
            }
        }
        u_corr.push(u.values()[n] + spec.epsilon * corr);
    }
    Ok((
        ScalarField::per_element(mesh.clone(), chi)?,
        ScalarField::nodal(mesh, u_corr)?,
    ))
}

/// Two-phase energy of a laminate realization:
/// `int (alpha chi + beta (1 - chi)) |grad u_corr|^p dx`.
pub fn laminate_energy(
    chi: &ScalarField,
    u_corr: &ScalarField,
    model: &MaterialModel,
) -> Result<f64> {
    if chi.storage() != Storage::PerElement {
        return Err(Error::StorageMismatch("laminate_energy needs per-element chi".into()));
    }
    let grad = gradient(u_corr)?;
    let mesh = chi.mesh();
    let mut acc = 0.0;
    for (t, g) in grad.values().iter().enumerate() {
        let coeff = model.alpha * chi.values()[t] + model.beta * (1.0 - chi.values()[t]);
        let s = (g[0] * g[0] + g[1] * g[1]).sqrt();
        acc += mesh.area(t) * coeff * s.powf(model.p);
    }
    Ok(acc)
}

/// Relaxed (homogenized) energy `int homog_coeff(theta) |grad u|^p dx`.
pub fn homogenized_energy(
    theta: &ScalarField,
    u: &ScalarField,
    model: &MaterialModel,
) -> Result<f64> {
    let grad = gradient(u)?;
    let mesh = theta.mesh();
    let mut acc = 0.0;
    for (t, g) in grad.values().iter().enumerate() {
        let s = (g[0] * g[0] + g[1] * g[1]).sqrt();
        acc += mesh.area(t) * homog_coeff(theta.values()[t], model) * s.powf(model.p);
    }
    Ok(acc)
}

/// One row of the double-limit convergence table.
#[derive(Debug, Clone, Copy)]
pub struct LaminateRow {
    pub delta: f64,
    pub epsilon: f64,
    pub laminate_energy: f64,
    pub homogenized_energy: f64,
    pub gap: f64,
    /// Area covered by the alpha phase in the realization.
    pub chi_area: f64,
}

/// Runs the (delta, epsilon) sweep for a design pair, refining the mesh (and
/// transferring the fields exactly) until each period is resolved. Refuses to
/// refine more than `max_refine` times.
pub fn laminate_sweep(
    theta: &ScalarField,
    u: &ScalarField,
    model: &MaterialModel,
    deltas: &[f64],
    epsilons: &[f64],
    fallback: [f64; 2],
    max_refine: usize,
) -> Result<Vec<LaminateRow>> {
    let mut meshes: Vec<Arc<Mesh>> = vec![theta.mesh().clone()];
    let mut thetas = vec![theta.clone()];
    let mut us = vec![u.clone()];
    let mut rows = Vec::new();
    for &delta in deltas {
        for &eps in epsilons {
            let required = eps / 8.0;
            let mut level = 0;
            while meshes[level].h_max() > required * (1.0 + 1e-12) {
                if level + 1 >= meshes.len() {
                    if meshes.len() > max_refine {
                        return Err(Error::MeshTooCoarse {
                            h_max: meshes[level].h_max(),
                            required_h: required,
                        });
                    }
                    let refinement = meshes[level].refine_mapped()?;
                    let fine = Arc::new(refinement.mesh.clone());
                    thetas.push(prolong_element(&fine, &thetas[level])?);
                    us.push(prolong_nodal(&refinement, &fine, &us[level])?);
                    meshes.push(fine);
                }
                level += 1;
            }
            let spec = LaminateSpec::from_fields(&thetas[level], &us[level], delta, eps, fallback)?;
            let (chi, u_corr) = build_laminate(&spec, &us[level], model)?;
            let lam = laminate_energy(&chi, &u_corr, model)?;
            let hom = homogenized_energy(&thetas[level], &us[level], model)?;
            rows.push(LaminateRow {
                delta,
                epsilon: eps,
                laminate_energy: lam,
                homogenized_energy: hom,
                gap: (lam - hom).abs(),
                chi_area: integrate(&chi)?,
            });
        }
    }
    Ok(rows)
}

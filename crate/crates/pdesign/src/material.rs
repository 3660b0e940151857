//! Two-phase material model and the theta-eliminated integrand.
//!
//! Conductivities `0 < alpha < beta` mix with local proportion `theta` of the
//! alpha phase through the p-harmonic mean
//!
//! ```text
//!     A(theta) = (theta alpha^(1/(1-p)) + (1-theta) beta^(1/(1-p)))^(1-p),
//! ```
//!
//! which in normalized form reads `A(theta) = beta / (1 + c theta)^(p-1)` with
//! `c = (beta/alpha)^(1/(p-1)) - 1`. Dividing the load by beta turns the inner
//! state problem into
//!
//! ```text
//!     min_u (1/p) int |grad u|^p / (1 + c theta)^(p-1) dx - <f_tilde, u>.
//! ```
//!
//! Eliminating theta against a volume multiplier `mu >= 0` produces the convex
//! C^1 integrand `F` whose slope is `s^(p-1)` below `mu`, constant `mu^(p-1)`
//! on the plateau `[mu, (1+c) mu]`, and `s^(p-1)/(1+c)^(p-1)` above. For
//! Newton solves the two slope kinks are C^2-blended over intervals of
//! half-width `w = eps * mu * min(c,1)/2` and an `eps*s` term is added to the
//! slope so the curvature stays `>= eps`; the smoothed integrand agrees with
//! the exact one up to O(eps) and converges uniformly as `eps -> 0`.

use crate::fields::{gradient, lumped_product_integral, integrate, ScalarField, Storage};
use crate::{Error, Result};

/// Material data and derived normalization constants.
#[derive(Debug, Clone, Copy)]
pub struct MaterialModel {
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
    pub kappa: f64,
    /// Contrast constant `(beta/alpha)^(1/(p-1)) - 1 > 0`.
    pub c: f64,
}

impl MaterialModel {
    pub fn new(alpha: f64, beta: f64, p: f64, kappa: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha < beta) {
            return Err(Error::InvalidMaterial(format!(
                "need 0 < alpha < beta, got alpha={alpha}, beta={beta}"
            )));
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidMaterial(format!("need p in (1, inf), got {p}")));
        }
        if !(kappa > 0.0) {
            return Err(Error::InvalidMaterial(format!("need kappa > 0, got {kappa}")));
        }
        let c = (beta / alpha).powf(1.0 / (p - 1.0)) - 1.0;
        Ok(MaterialModel { alpha, beta, p, kappa, c })
    }

    /// Holder conjugate p' = p/(p-1).
    pub fn p_conj(&self) -> f64 {
        self.p / (self.p - 1.0)
    }
}

/// Normalization: contrast constant and load scaled by beta.
pub fn normalize(alpha: f64, beta: f64, p: f64, f: &ScalarField) -> Result<(f64, ScalarField)> {
    if !(alpha > 0.0 && alpha < beta) {
        return Err(Error::InvalidMaterial(format!(
            "need 0 < alpha < beta, got alpha={alpha}, beta={beta}"
        )));
    }
    if !(p > 1.0) {
        return Err(Error::InvalidMaterial(format!("need p > 1, got {p}")));
    }
    let c = (beta / alpha).powf(1.0 / (p - 1.0)) - 1.0;
    let mut f_tilde = f.clone();
    for v in f_tilde.values_mut() {
        *v /= beta;
    }
    Ok((c, f_tilde))
}

/// Homogenized (rank-one laminate) coefficient at proportion theta.
pub fn homog_coeff(theta: f64, model: &MaterialModel) -> f64 {
    let e = 1.0 / (1.0 - model.p);
    let mean = theta * model.alpha.powf(e) + (1.0 - theta) * model.beta.powf(e);
    mean.powf(1.0 - model.p)
}

/// Cubic Hermite blend of the integrand slope over one kink interval.
#[derive(Debug, Clone, Copy)]
struct SlopeBlend {
    x0: f64,
    len: f64,
    /// Cubic coefficients in t = (s - x0)/len: slope = a3 t^3 + a2 t^2 + a1 t + a0.
    a: [f64; 4],
    /// Integral of the slope from 0 to x0 (running constant for F).
    f_base: f64,
}

impl SlopeBlend {
    fn new(x0: f64, x1: f64, v0: f64, m0: f64, v1: f64, m1: f64, f_base: f64) -> Self {
        let len = x1 - x0;
        let a3 = 2.0 * v0 + m0 * len - 2.0 * v1 + m1 * len;
        let a2 = -3.0 * v0 - 2.0 * m0 * len + 3.0 * v1 - m1 * len;
        let a1 = m0 * len;
        let a0 = v0;
        SlopeBlend { x0, len, a: [a0, a1, a2, a3], f_base }
    }

    /// (value of F, slope, curvature) at s inside the interval.
    fn eval(&self, s: f64) -> (f64, f64, f64) {
        let t = (s - self.x0) / self.len;
        let [a0, a1, a2, a3] = self.a;
        let slope = ((a3 * t + a2) * t + a1) * t + a0;
        let curv = ((3.0 * a3 * t + 2.0 * a2) * t + a1) / self.len;
        let integral = self.len * (((a3 / 4.0 * t + a2 / 3.0) * t + a1 / 2.0) * t + a0) * t;
        (self.f_base + integral, slope, curv)
    }

    /// Integral of the slope across the whole interval.
    fn total(&self) -> f64 {
        let [a0, a1, a2, a3] = self.a;
        self.len * (a3 / 4.0 + a2 / 3.0 + a1 / 2.0 + a0)
    }
}

/// The convex integrand F with threshold `mu`, optionally smoothed.
#[derive(Debug, Clone)]
pub struct IntegrandF {
    pub mu: f64,
    pub c: f64,
    pub p: f64,
    pub epsilon: f64,
    /// (1+c)^(p-1), the slope divisor of the upper branch.
    scale: f64,
    /// mu^(p-1), the plateau slope level.
    plateau: f64,
    blend_lo: Option<SlopeBlend>,
    blend_hi: Option<SlopeBlend>,
    /// F value at the end of each region, for running continuity.
    f_plateau_start: f64,
    f_upper_base: f64,
    upper_start: f64,
}

impl IntegrandF {
    pub fn new(mu: f64, c: f64, p: f64, epsilon: f64) -> Result<Self> {
        if !(mu >= 0.0) {
            return Err(Error::InvalidArgument(format!("mu must be >= 0, got {mu}")));
        }
        if !(c > 0.0) {
            return Err(Error::InvalidArgument(format!("c must be > 0, got {c}")));
        }
        if !(p > 1.0) {
            return Err(Error::InvalidArgument(format!("p must be > 1, got {p}")));
        }
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!("epsilon must be in [0,1), got {epsilon}")));
        }
        let scale = (1.0 + c).powf(p - 1.0);
        let plateau = if mu > 0.0 { mu.powf(p - 1.0) } else { 0.0 };

        if mu == 0.0 || epsilon == 0.0 {
            let k2 = (1.0 + c) * mu;
            let f_plateau_start = if mu > 0.0 { mu.powf(p) / p } else { 0.0 };
            let f_upper_base = f_plateau_start + plateau * (k2 - mu);
            return Ok(IntegrandF {
                mu,
                c,
                p,
                epsilon,
                scale,
                plateau,
                blend_lo: None,
                blend_hi: None,
                f_plateau_start,
                f_upper_base,
                upper_start: k2,
            });
        }

        // Smoothed: C^2 Hermite blends of the slope on [k-w, k+w] at each kink.
        let k1 = mu;
        let k2 = (1.0 + c) * mu;
        let w = epsilon * mu * c.min(1.0) / 2.0;
        let (lo1, hi1) = (k1 - w, k1 + w);
        let (lo2, hi2) = (k2 - w, k2 + w);

        let f_at = |s: f64| s.powf(p) / p; // lower branch antiderivative
        let blend_lo = SlopeBlend::new(
            lo1,
            hi1,
            lo1.powf(p - 1.0),
            (p - 1.0) * lo1.powf(p - 2.0),
            plateau,
            0.0,
            f_at(lo1),
        );
        let f_plateau_start = f_at(lo1) + blend_lo.total();
        let f_blend_hi_base = f_plateau_start + plateau * (lo2 - hi1);
        let blend_hi = SlopeBlend::new(
            lo2,
            hi2,
            plateau,
            0.0,
            hi2.powf(p - 1.0) / scale,
            (p - 1.0) * hi2.powf(p - 2.0) / scale,
            f_blend_hi_base,
        );
        let f_upper_base = f_blend_hi_base + blend_hi.total();

        Ok(IntegrandF {
            mu,
            c,
            p,
            epsilon,
            scale,
            plateau,
            blend_lo: Some(blend_lo),
            blend_hi: Some(blend_hi),
            f_plateau_start,
            f_upper_base,
            upper_start: hi2,
        })
    }

    /// Same integrand with a different smoothing parameter.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        IntegrandF::new(self.mu, self.c, self.p, epsilon)
    }

    /// (F(s), F'(s), F''(s)); s must be >= 0.
    pub fn eval(&self, s: f64) -> (f64, f64, f64) {
        debug_assert!(s >= 0.0);
        let p = self.p;
        let (f0, g0, k0) = if self.mu == 0.0 {
            (s.powf(p) / (p * self.scale), s.powf(p - 1.0) / self.scale, (p - 1.0) * s.powf(p - 2.0) / self.scale)
        } else if let (Some(lo), Some(hi)) = (&self.blend_lo, &self.blend_hi) {
            if s < lo.x0 {
                (s.powf(p) / p, s.powf(p - 1.0), (p - 1.0) * s.powf(p - 2.0))
            } else if s <= lo.x0 + lo.len {
                lo.eval(s)
            } else if s < hi.x0 {
                (self.f_plateau_start + self.plateau * (s - (lo.x0 + lo.len)), self.plateau, 0.0)
            } else if s <= hi.x0 + hi.len {
                hi.eval(s)
            } else {
                (
                    self.f_upper_base + (s.powf(p) - self.upper_start.powf(p)) / (p * self.scale),
                    s.powf(p - 1.0) / self.scale,
                    (p - 1.0) * s.powf(p - 2.0) / self.scale,
                )
            }
        } else {
            // Exact kinked integrand.
            if s < self.mu {
                (s.powf(p) / p, s.powf(p - 1.0), (p - 1.0) * s.powf(p - 2.0))
            } else if s <= self.upper_start {
                (self.f_plateau_start + self.plateau * (s - self.mu), self.plateau, 0.0)
            } else {
                (
                    self.f_upper_base + (s.powf(p) - self.upper_start.powf(p)) / (p * self.scale),
                    s.powf(p - 1.0) / self.scale,
                    (p - 1.0) * s.powf(p - 2.0) / self.scale,
                )
            }
        };
        if self.epsilon > 0.0 {
            (f0 + 0.5 * self.epsilon * s * s, g0 + self.epsilon * s, k0 + self.epsilon)
        } else {
            (f0, g0, k0)
        }
    }

    /// Value and slope of F at s; rejects negative s.
    pub fn value_and_slope(&self, s: f64) -> Result<(f64, f64)> {
        if s < 0.0 {
            return Err(Error::InvalidArgument(format!("F is defined for s >= 0, got {s}")));
        }
        let (f, g, _) = self.eval(s);
        Ok((f, g))
    }
}

/// Relaxed potential energy
/// `(1/p) int |grad u|^p / (1 + c theta)^(p-1) dx - <f_tilde, u>`.
pub fn primal_energy(
    u: &ScalarField,
    theta: &ScalarField,
    f_tilde: &ScalarField,
    model: &MaterialModel,
) -> Result<f64> {
    if u.storage() != Storage::Nodal || f_tilde.storage() != Storage::Nodal {
        return Err(Error::StorageMismatch("primal_energy needs nodal u and f_tilde".into()));
    }
    if theta.storage() != Storage::PerElement {
        return Err(Error::StorageMismatch("primal_energy needs per-element theta".into()));
    }
    for (t, &th) in theta.values().iter().enumerate() {
        if !(0.0..=1.0).contains(&th) {
            return Err(Error::InvalidArgument(format!(
                "theta must lie in [0,1], element {t} has {th}"
            )));
        }
    }
    let mesh = u.mesh();
    let grad = gradient(u)?;
    let p = model.p;
    let mut density = Vec::with_capacity(mesh.n_elements());
    for (t, g) in grad.values().iter().enumerate() {
        let s = (g[0] * g[0] + g[1] * g[1]).sqrt();
        let th = theta.values()[t];
        density.push(s.powf(p) / (1.0 + model.c * th).powf(p - 1.0));
    }
    let bulk = integrate(&ScalarField::per_element(mesh.clone(), density)?)?;
    let load = lumped_product_integral(f_tilde, u)?;
    Ok(bulk / p - load)
}

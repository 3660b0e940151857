//! Discrete scalar and vector fields on a mesh.
//!
//! Scalar fields live either on nodes (states `u`, loads `f`) or on elements
//! (proportions `theta`, gradient magnitudes); vector fields are always
//! per-element (fluxes, gradients of P1 functions). Integration of nodal
//! fields uses the lumped rule: each node weighs a third of the area of its
//! incident elements.

use crate::geometry::Mesh;
use crate::{Error, Result};
use std::io::Write;
use std::sync::Arc;

/// Where a scalar field's values live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Storage {
    Nodal,
    PerElement,
}

/// A scalar function sampled on mesh nodes or elements.
#[derive(Debug, Clone)]
pub struct ScalarField {
    mesh: Arc<Mesh>,
    storage: Storage,
    values: Vec<f64>,
    unit: String,
    dirichlet: bool,
}

impl ScalarField {
    pub fn nodal(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::StorageMismatch(format!(
                "nodal field needs {} values, got {}",
                mesh.n_nodes(),
                values.len()
            )));
        }
        Ok(ScalarField { mesh, storage: Storage::Nodal, values, unit: String::new(), dirichlet: false })
    }

    /// Nodal field with the homogeneous Dirichlet tag; boundary entries must
    /// already vanish.
    pub fn nodal_dirichlet(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        let mut field = Self::nodal(mesh, values)?;
        for i in 0..field.mesh.n_nodes() {
            if field.mesh.is_boundary(i) && field.values[i] != 0.0 {
                return Err(Error::StorageMismatch(format!(
                    "Dirichlet field is nonzero ({}) at boundary node {}",
                    field.values[i], i
                )));
            }
        }
        field.dirichlet = true;
        Ok(field)
    }

    pub fn per_element(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_elements() {
            return Err(Error::StorageMismatch(format!(
                "per-element field needs {} values, got {}",
                mesh.n_elements(),
                values.len()
            )));
        }
        Ok(ScalarField {
            mesh,
            storage: Storage::PerElement,
            values,
            unit: String::new(),
            dirichlet: false,
        })
    }

    /// Samples a function at nodes.
    pub fn from_fn_nodal(mesh: Arc<Mesh>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = mesh.nodes().iter().map(|p| f(p[0], p[1])).collect();
        ScalarField { mesh, storage: Storage::Nodal, values, unit: String::new(), dirichlet: false }
    }

    /// Samples a function at element centroids.
    pub fn from_fn_elements(mesh: Arc<Mesh>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..mesh.n_elements())
            .map(|t| {
                let c = mesh.centroid(t);
                f(c[0], c[1])
            })
            .collect();
        ScalarField {
            mesh,
            storage: Storage::PerElement,
            values,
            unit: String::new(),
            dirichlet: false,
        }
    }

    pub fn constant(mesh: Arc<Mesh>, storage: Storage, value: f64) -> Self {
        let n = match storage {
            Storage::Nodal => mesh.n_nodes(),
            Storage::PerElement => mesh.n_elements(),
        };
        ScalarField { mesh, storage, values: vec![value; n], unit: String::new(), dirichlet: false }
    }

    pub fn with_unit(mut self, unit: &str) -> Self {
        self.unit = unit.to_string();
        self
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn storage(&self) -> Storage {
        self.storage
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn is_dirichlet(&self) -> bool {
        self.dirichlet
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// CSV export with a header naming the field and unit tag.
    pub fn write_csv<W: Write>(&self, name: &str, w: &mut W) -> std::io::Result<()> {
        let id = match self.storage {
            Storage::Nodal => "node_id",
            Storage::PerElement => "element_id",
        };
        let unit = if self.unit.is_empty() { "-" } else { &self.unit };
        writeln!(w, "{},{} [{}]", id, name, unit)?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{:?}", i, v)?;
        }
        Ok(())
    }
}

/// A per-element 2D vector function (fluxes, P1 gradients).
#[derive(Debug, Clone)]
pub struct VectorField {
    mesh: Arc<Mesh>,
    values: Vec<[f64; 2]>,
}

impl VectorField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<[f64; 2]>) -> Result<Self> {
        if values.len() != mesh.n_elements() {
            return Err(Error::StorageMismatch(format!(
                "vector field needs {} values, got {}",
                mesh.n_elements(),
                values.len()
            )));
        }
        Ok(VectorField { mesh, values })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    /// Per-element Euclidean magnitudes as a scalar field.
    pub fn magnitude(&self) -> ScalarField {
        let values = self.values.iter().map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt()).collect();
        ScalarField {
            mesh: self.mesh.clone(),
            storage: Storage::PerElement,
            values,
            unit: String::new(),
            dirichlet: false,
        }
    }

    /// Area-weighted L^q norm: (sum_T area_T |v_T|^q)^(1/q).
    pub fn lq_norm(&self, q: f64) -> f64 {
        let mut acc = 0.0;
        for (t, v) in self.values.iter().enumerate() {
            let m = (v[0] * v[0] + v[1] * v[1]).sqrt();
            acc += self.mesh.area(t) * m.powf(q);
        }
        acc.powf(1.0 / q)
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .fold(0.0f64, |m, v| m.max((v[0] * v[0] + v[1] * v[1]).sqrt()))
    }

    /// CSV export: `element_id,vx,vy`.
    pub fn write_csv<W: Write>(&self, name: &str, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "element_id,{name}_x,{name}_y")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{:?},{:?}", i, v[0], v[1])?;
        }
        Ok(())
    }
}

/// Per-element constant gradient of a nodal field.
pub fn gradient(u: &ScalarField) -> Result<VectorField> {
    if u.storage != Storage::Nodal {
        return Err(Error::StorageMismatch("gradient needs a nodal field".into()));
    }
    let mesh = u.mesh.clone();
    let values = (0..mesh.n_elements()).map(|t| mesh.element_gradient(t, &u.values)).collect();
    Ok(VectorField { mesh, values })
}

/// Integral of a per-element field: sum of value times element area.
pub fn integrate(g: &ScalarField) -> Result<f64> {
    if g.storage != Storage::PerElement {
        return Err(Error::StorageMismatch("integrate needs a per-element field".into()));
    }
    let mut acc = 0.0;
    for (t, v) in g.values.iter().enumerate() {
        acc += v * g.mesh.area(t);
    }
    Ok(acc)
}

/// Transfers a nodal field to a refined mesh by edge-midpoint averaging.
/// This is the exact P1 prolongation on nested meshes with straight edges.
pub fn prolong_nodal(
    refinement: &crate::geometry::Refinement,
    fine_mesh: &Arc<Mesh>,
    u: &ScalarField,
) -> Result<ScalarField> {
    if u.storage() != Storage::Nodal {
        return Err(Error::StorageMismatch("prolong_nodal needs a nodal field".into()));
    }
    let mut values = Vec::with_capacity(fine_mesh.n_nodes());
    values.extend_from_slice(u.values());
    for &(a, b) in &refinement.edge_midpoints {
        values.push(0.5 * (u.values()[a] + u.values()[b]));
    }
    debug_assert_eq!(values.len(), fine_mesh.n_nodes());
    ScalarField::nodal(fine_mesh.clone(), values)
}

/// Transfers a per-element field to a refined mesh: the four children of
/// element `t` inherit its value.
pub fn prolong_element(fine_mesh: &Arc<Mesh>, g: &ScalarField) -> Result<ScalarField> {
    if g.storage() != Storage::PerElement {
        return Err(Error::StorageMismatch("prolong_element needs a per-element field".into()));
    }
    let mut values = Vec::with_capacity(4 * g.values().len());
    for &v in g.values() {
        values.extend_from_slice(&[v, v, v, v]);
    }
    ScalarField::per_element(fine_mesh.clone(), values)
}

/// Lumped integral of the product of two nodal fields:
/// `sum_i a_i b_i (area share of node i)`.
pub fn lumped_product_integral(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    if a.storage != Storage::Nodal || b.storage != Storage::Nodal {
        return Err(Error::StorageMismatch("lumped rule needs nodal fields".into()));
    }
    let share = a.mesh.lumped_node_areas();
    let mut acc = 0.0;
    for i in 0..a.values.len() {
        acc += a.values[i] * b.values[i] * share[i];
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, DomainSpec};

    fn unit_square(h: f64) -> Arc<Mesh> {
        Arc::new(build_mesh(&DomainSpec::rectangle(0.0, 1.0, 0.0, 1.0, h).unwrap()).unwrap())
    }

    #[test]
    fn gradient_of_coordinate_is_unit_vector() {
        let mesh = unit_square(0.23);
        let u = ScalarField::from_fn_nodal(mesh, |x, _| x);
        let g = gradient(&u).unwrap();
        for v in g.values() {
            assert!((v[0] - 1.0).abs() < 1e-13 && v[1].abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let mesh = unit_square(0.3);
        let u = ScalarField::constant(mesh, Storage::Nodal, 4.2);
        let g = gradient(&u).unwrap();
        for v in g.values() {
            assert!(v[0].abs() < 1e-13 && v[1].abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_of_quadratic_matches_centroid_value() {
        // u = x^2/2 has gradient (x, 0); P1 gradients hit it at centroids.
        for h in [0.2, 0.1, 0.05] {
            let mesh = unit_square(h);
            let u = ScalarField::from_fn_nodal(mesh.clone(), |x, _| 0.5 * x * x);
            let g = gradient(&u).unwrap();
            let mut worst = 0.0f64;
            for (t, v) in g.values().iter().enumerate() {
                worst = worst.max((v[0] - mesh.centroid(t)[0]).abs());
            }
            assert!(worst < h, "worst {worst} at h={h}");
        }
    }

    #[test]
    fn integrate_constants() {
        let mesh = unit_square(0.19);
        let one = ScalarField::constant(mesh.clone(), Storage::PerElement, 1.0);
        assert!((integrate(&one).unwrap() - 1.0).abs() < 1e-13);
        let theta = ScalarField::constant(mesh, Storage::PerElement, 0.37);
        assert!((integrate(&theta).unwrap() - 0.37).abs() < 1e-13);
    }

    #[test]
    fn integrate_is_monotone() {
        let mesh = unit_square(0.11);
        let g = ScalarField::from_fn_elements(mesh, |x, y| (x - y).abs());
        assert!(integrate(&g).unwrap() >= 0.0);
    }

    #[test]
    fn storage_mismatch_rejected() {
        let mesh = unit_square(0.5);
        let per_elem = ScalarField::constant(mesh.clone(), Storage::PerElement, 1.0);
        assert!(gradient(&per_elem).is_err());
        let nodal = ScalarField::constant(mesh.clone(), Storage::Nodal, 1.0);
        assert!(integrate(&nodal).is_err());
        assert!(ScalarField::nodal(mesh, vec![0.0; 3]).is_err());
    }

    #[test]
    fn dirichlet_tag_requires_zero_boundary() {
        let mesh = unit_square(0.5);
        let ok = vec![0.0; mesh.n_nodes()];
        assert!(ScalarField::nodal_dirichlet(mesh.clone(), ok).is_ok());
        let mut bad = vec![0.0; mesh.n_nodes()];
        bad[0] = 1.0; // corner node
        assert!(ScalarField::nodal_dirichlet(mesh, bad).is_err());
    }

    #[test]
    fn lumped_rule_is_exact_for_constants() {
        let mesh = unit_square(0.26);
        let a = ScalarField::constant(mesh.clone(), Storage::Nodal, 3.0);
        let b = ScalarField::constant(mesh, Storage::Nodal, 0.5);
        assert!((lumped_product_integral(&a, &b).unwrap() - 1.5).abs() < 1e-13);
    }

    #[test]
    fn gradient_linearity() {
        let mesh = unit_square(0.17);
        let u = ScalarField::from_fn_nodal(mesh.clone(), |x, y| x * x - y);
        let v = ScalarField::from_fn_nodal(mesh.clone(), |x, y| (3.0 * x + y).sin());
        let (a, b) = (1.7, -0.4);
        let combo = ScalarField::nodal(
            mesh,
            u.values().iter().zip(v.values()).map(|(x, y)| a * x + b * y).collect(),
        )
        .unwrap();
        let gu = gradient(&u).unwrap();
        let gv = gradient(&v).unwrap();
        let gc = gradient(&combo).unwrap();
        for t in 0..gc.values().len() {
            for d in 0..2 {
                let want = a * gu.values()[t][d] + b * gv.values()[t][d];
                assert!((gc.values()[t][d] - want).abs() < 1e-12 * (1.0 + want.abs()));
            }
        }
    }
}

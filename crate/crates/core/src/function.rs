use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{invalid, Result};
use crate::mesh::Mesh;

/// A continuous piecewise-linear function given by its nodal values.
#[derive(Debug, Clone)]
pub struct DiscreteFunction {
    mesh: Arc<Mesh>,
    coeffs: DVector<f64>,
}

impl DiscreteFunction {
    pub fn new(mesh: Arc<Mesh>, coeffs: DVector<f64>) -> Result<Self> {
        if coeffs.len() != mesh.n_nodes() {
            return invalid(format!(
                "coefficient vector has length {} but the mesh has {} nodes",
                coeffs.len(),
                mesh.n_nodes()
            ));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return invalid("coefficients must be finite");
        }
        Ok(Self { mesh, coeffs })
    }

    pub fn constant(mesh: Arc<Mesh>, value: f64) -> Self {
        let n = mesh.n_nodes();
        Self {
            mesh,
            coeffs: DVector::from_element(n, value),
        }
    }

    pub fn from_fn(mesh: Arc<Mesh>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = mesh.interpolate(f);
        Self::new(mesh, DVector::from_vec(values))
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> DVector<f64> {
        self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    /// Same mesh, new coefficients.
    pub fn with_coeffs(&self, coeffs: DVector<f64>) -> Result<Self> {
        Self::new(self.mesh.clone(), coeffs)
    }
}

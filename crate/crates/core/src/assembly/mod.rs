//! Energy forms for P1 functions: the halved Gagliardo form, the mass form and
//! `L^q` functionals.

mod gagliardo;

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

pub use gagliardo::{assemble_gagliardo, assemble_gagliardo_with, self_moment, QuadratureOptions};

use crate::error::{invalid, Error, Result};
use crate::function::DiscreteFunction;
use crate::mesh::Mesh;
use crate::params::FractionalParams;
use crate::quadrature::{gauss_legendre, triangle_rule};

/// Floor applied to `|u|` in the weight `|u|^{q-2}` when `q < 2`.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Gauss order of the per-element rule used for `L^q` functionals.
pub const LQ_GAUSS_ORDER: usize = 4;

/// Assembled `K` (halved Gagliardo form) and `M` (mass form) on a mesh.
#[derive(Debug, Clone)]
pub struct EnergyForms {
    k: DMatrix<f64>,
    m: DMatrix<f64>,
    params: FractionalParams,
    mesh: Arc<Mesh>,
    lq: LqQuadrature,
    mass_chol: Cholesky<f64, Dyn>,
}

impl EnergyForms {
    pub fn assemble(mesh: Arc<Mesh>, params: FractionalParams) -> Result<Self> {
        Self::assemble_with(mesh, params, None)
    }

    pub fn assemble_with(
        mesh: Arc<Mesh>,
        params: FractionalParams,
        quad: Option<QuadratureOptions>,
    ) -> Result<Self> {
        let opts = quad.unwrap_or_else(|| QuadratureOptions::for_dim(mesh.dim()));
        let k = assemble_gagliardo_with(&mesh, &params, &opts)?;
        let m = assemble_mass(&mesh);
        Self::from_matrices(mesh, params, k, m)
    }

    /// Wraps already assembled matrices; `k` must annihilate constants.
    pub fn from_matrices(
        mesh: Arc<Mesh>,
        params: FractionalParams,
        k: DMatrix<f64>,
        m: DMatrix<f64>,
    ) -> Result<Self> {
        let n = mesh.n_nodes();
        if k.shape() != (n, n) || m.shape() != (n, n) {
            return invalid("form matrices do not match the mesh node count");
        }
        let mass_chol = Cholesky::new(m.clone())
            .ok_or_else(|| Error::Numerical("mass matrix is not positive definite".into()))?;
        Ok(Self {
            lq: LqQuadrature::new(&mesh),
            k,
            m,
            params,
            mesh,
            mass_chol,
        })
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn params(&self) -> &FractionalParams {
        &self.params
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn lq(&self) -> &LqQuadrature {
        &self.lq
    }

    pub fn mass_cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.mass_chol
    }

    /// `sqrt(fᵀ M⁻¹ f)`, the dual norm of a load vector.
    pub fn dual_norm(&self, f: &DVector<f64>) -> f64 {
        let z = self.mass_chol.solve(f);
        f.dot(&z).max(0.0).sqrt()
    }

    /// `a(u, u) = uᵀ K u`, summed as `Σ_{i<j} -K_ij (u_i - u_j)²` so that it
    /// vanishes exactly on constants.
    pub fn seminorm_energy(&self, u: &DVector<f64>) -> f64 {
        let n = u.len();
        let mut total = 0.0;
        for j in 1..n {
            let col = self.k.column(j);
            let mut acc = 0.0;
            for i in 0..j {
                let d = u[i] - u[j];
                acc -= col[i] * d * d;
            }
            total += acc;
        }
        total
    }

    pub fn l2_norm_sq(&self, u: &DVector<f64>) -> f64 {
        quad_form(&self.m, u)
    }

    /// `∫_Ω u dx`.
    pub fn integral(&self, u: &DVector<f64>) -> f64 {
        (&self.m * u).sum()
    }

    pub fn function(&self, coeffs: DVector<f64>) -> Result<DiscreteFunction> {
        DiscreteFunction::new(self.mesh.clone(), coeffs)
    }
}

pub(crate) fn quad_form(a: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    u.dot(&(a * u))
}

/// Exact P1 mass matrix.
pub fn assemble_mass(mesh: &Mesh) -> DMatrix<f64> {
    let n = mesh.n_nodes();
    let mut m = DMatrix::zeros(n, n);
    let nv = mesh.dim() + 1;
    // ∫ λ_i λ_j = |T| (1 + δ_ij) / ((nv)(nv + 1))
    let denom = (nv * (nv + 1)) as f64;
    for e in 0..mesh.n_elements() {
        let area = mesh.element_measure(e);
        let v = mesh.element(e);
        for i in 0..nv {
            for j in 0..nv {
                let f = if i == j { 2.0 } else { 1.0 };
                m[(v[i], v[j])] += area * f / denom;
            }
        }
    }
    m
}

/// Per-element Gauss points for `L^q` functionals.
#[derive(Debug, Clone)]
pub struct LqQuadrature {
    nv: usize,
    nodes: Vec<[usize; 3]>,
    bary: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl LqQuadrature {
    pub fn new(mesh: &Mesh) -> Self {
        let nv = mesh.dim() + 1;
        let (ref_bary, ref_w): (Vec<[f64; 3]>, Vec<f64>) = if mesh.dim() == 1 {
            gauss_legendre(LQ_GAUSS_ORDER)
                .iter()
                .map(|(t, w)| ([1.0 - t, t, 0.0], w))
                .unzip()
        } else {
            let r = triangle_rule(LQ_GAUSS_ORDER);
            r.points
                .iter()
                .zip(&r.weights)
                .map(|(p, w)| ([1.0 - p[0] - p[1], p[0], p[1]], 2.0 * w))
                .unzip()
        };
        let mut nodes = Vec::new();
        let mut bary = Vec::new();
        let mut weights = Vec::new();
        for e in 0..mesh.n_elements() {
            let area = mesh.element_measure(e);
            let mut idx = [0usize; 3];
            idx[..nv].copy_from_slice(mesh.element(e));
            for (b, w) in ref_bary.iter().zip(&ref_w) {
                nodes.push(idx);
                bary.push(*b);
                weights.push(w * area);
            }
        }
        Self {
            nv,
            nodes,
            bary,
            weights,
        }
    }

    pub fn n_points(&self) -> usize {
        self.weights.len()
    }

    /// Values of `u` at all quadrature points.
    pub fn values(&self, u: &DVector<f64>) -> Vec<f64> {
        (0..self.n_points())
            .map(|p| {
                (0..self.nv)
                    .map(|k| self.bary[p][k] * u[self.nodes[p][k]])
                    .sum()
            })
            .collect()
    }

    /// `∫ |u|^q dx`.
    pub fn integral_pow(&self, u: &DVector<f64>, q: f64) -> f64 {
        self.values(u)
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * v.abs().powf(q))
            .sum()
    }

    pub fn norm(&self, u: &DVector<f64>, q: f64) -> f64 {
        self.integral_pow(u, q).powf(1.0 / q)
    }

    /// `∫ (|u + d|^q - |u|^q) dx`, computed without cancellation when `d` is small.
    pub fn integral_pow_delta(&self, u: &DVector<f64>, d: &DVector<f64>, q: f64) -> f64 {
        let (uv, dv) = (self.values(u), self.values(d));
        uv.iter()
            .zip(&dv)
            .zip(&self.weights)
            .map(|((&a, &b), &w)| w * pow_delta(a, b, q))
            .sum()
    }

    /// Load vector `g_i = ∫ |u|^{q-2} u φ_i dx`.
    pub fn gradient(&self, u: &DVector<f64>, q: f64) -> DVector<f64> {
        let mut g = DVector::zeros(u.len());
        for (p, v) in self.values(u).into_iter().enumerate() {
            let f = self.weights[p] * weight(v, q) * v;
            for k in 0..self.nv {
                g[self.nodes[p][k]] += f * self.bary[p][k];
            }
        }
        g
    }

    /// `W_ij = ∫ |u|^{q-2} φ_i φ_j dx`.
    pub fn weight_matrix(&self, u: &DVector<f64>, q: f64) -> DMatrix<f64> {
        let n = u.len();
        let mut w = DMatrix::zeros(n, n);
        for (p, v) in self.values(u).into_iter().enumerate() {
            let f = self.weights[p] * weight(v, q);
            for i in 0..self.nv {
                for j in 0..self.nv {
                    w[(self.nodes[p][i], self.nodes[p][j])] +=
                        f * self.bary[p][i] * self.bary[p][j];
                }
            }
        }
        w
    }
}

/// `|v|^{q-2}`, with `|v|` floored at [`WEIGHT_FLOOR`] when `q < 2`.
#[inline]
fn weight(v: f64, q: f64) -> f64 {
    if q < 2.0 {
        v.abs().max(WEIGHT_FLOOR).powf(q - 2.0)
    } else if q == 2.0 {
        1.0
    } else {
        v.abs().powf(q - 2.0)
    }
}

#[inline]
fn pow_delta(a: f64, b: f64, q: f64) -> f64 {
    if a != 0.0 && b.abs() < 0.5 * a.abs() {
        a.abs().powf(q) * (q * (b / a).ln_1p()).exp_m1()
    } else {
        (a + b).abs().powf(q) - a.abs().powf(q)
    }
}

/// `‖u‖_{q;Ω}` by per-element Gauss quadrature.
pub fn lq_norm(u: &DiscreteFunction, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return invalid(format!("L^q norm needs q >= 1, got {q}"));
    }
    Ok(LqQuadrature::new(u.mesh()).norm(u.coeffs(), q))
}

/// Dual vector `g_i = ∫ |u|^{q-2} u φ_i dx`.
pub fn lq_gradient(u: &DiscreteFunction, q: f64) -> Result<DVector<f64>> {
    if !(q >= 1.0) {
        return invalid(format!("L^q gradient needs q >= 1, got {q}"));
    }
    Ok(LqQuadrature::new(u.mesh()).gradient(u.coeffs(), q))
}

//! Linearization of the rescaled Euler–Lagrange map around an extremal and
//! the numerical invertibility test on the tangent space of the `L^q` sphere.
//!
//! For `r(u) = Ku + ε^{2s}Mu - ε^{2s} λ g(u)` the derivative is
//! `J = K + ε^{2s}M - ε^{2s} λ (q-1) W(u)` with `W_ij = ∫|u|^{q-2} φ_i φ_j`.
//! Restricted to `{v : g(u)ᵀv = 0}` it is, up to a positive factor, the
//! Hessian of the quotient on the sphere, so a zero eigenvalue is exactly a
//! nontrivial kernel.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::assembly::EnergyForms;
use crate::error::{invalid, Error, Result};
use crate::function::DiscreteFunction;
use crate::params::FractionalParams;

/// `J = K + ε^{2s}M - ε^{2s} λ (q-1) W(ū)`.
pub fn assemble_jacobian(
    u: &DiscreteFunction,
    eps: f64,
    lambda: f64,
    forms: &EnergyForms,
    params: &FractionalParams,
) -> Result<DMatrix<f64>> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return invalid(format!("contraction factor must be nonnegative, got {eps}"));
    }
    let e2s = if eps == 0.0 {
        0.0
    } else {
        eps.powf(2.0 * params.s())
    };
    let q = params.q();
    let mut jac = forms.k().clone();
    if e2s != 0.0 {
        let w = forms.lq().weight_matrix(u.coeffs(), q);
        jac += forms.m() * e2s - w * (e2s * lambda * (q - 1.0));
    }
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("Jacobian has non-finite entries".into()));
    }
    Ok(jac)
}

/// An `M`-orthonormal basis (as matrix columns) of `{v : gᵀv = 0}`.
#[derive(Debug, Clone)]
pub struct TangentBasis {
    pub vectors: DMatrix<f64>,
    /// The constraint functional `g = ∫ |ū|^{q-2} ū φ_i`.
    pub constraint: DVector<f64>,
}

impl TangentBasis {
    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Tangent space of `{‖u‖_q = 1}` at `ū`; mean-zero functions when `ū` is constant.
pub fn tangent_basis(
    u: &DiscreteFunction,
    params: &FractionalParams,
    forms: &EnergyForms,
) -> Result<TangentBasis> {
    let g = forms.lq().gradient(u.coeffs(), params.q());
    basis_orthogonal_to(g, forms)
}

pub(crate) fn basis_orthogonal_to(g: DVector<f64>, forms: &EnergyForms) -> Result<TangentBasis> {
    let n = g.len();
    let gn = g.norm();
    if !(gn > 0.0) {
        return invalid("the constraint functional vanishes identically");
    }
    if n < 2 {
        return invalid("tangent space is trivial for a single node");
    }
    // Householder reflector H with H g ∥ e_0; columns 1.. of H span g⊥.
    let mut v = &g / gn;
    let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign;
    let vn2 = v.norm_squared();
    let mut b = DMatrix::<f64>::zeros(n, n - 1);
    for j in 1..n {
        let coef = 2.0 * v[j] / vn2;
        for i in 0..n {
            let e = if i == j { 1.0 } else { 0.0 };
            b[(i, j - 1)] = e - coef * v[i];
        }
    }
    // M-orthonormalize: B ← B L⁻ᵀ with BᵀMB = LLᵀ
    let gram = b.tr_mul(&(forms.m() * &b));
    let chol = Cholesky::new(gram)
        .ok_or_else(|| Error::Numerical("tangent Gram matrix is not positive definite".into()))?;
    let vectors = chol
        .l()
        .solve_lower_triangular(&b.transpose())
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))?
        .transpose();
    Ok(TangentBasis {
        vectors,
        constraint: g,
    })
}

/// Smallest eigenpair of `J` restricted to the tangent space, relative to `M`.
#[derive(Debug, Clone)]
pub struct TangentSpectrum {
    pub mu_min: f64,
    /// Nodal coefficients of the eigenvector, `M`-normalized.
    pub eigvec: DVector<f64>,
    pub invertible: bool,
}

/// Solves `(BᵀJB) y = μ (BᵀMB) y` for the smallest `μ`; `BᵀMB = I` by
/// construction of the basis.
pub fn tangent_smallest_eig(
    jac: &DMatrix<f64>,
    basis: &TangentBasis,
    tol_inv: f64,
) -> Result<TangentSpectrum> {
    let b = &basis.vectors;
    if b.ncols() == 0 {
        return invalid("tangent basis is empty");
    }
    let h = b.tr_mul(&(jac * b));
    let h = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(h);
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        let diag_ratio = {
            let d = jac.diagonal();
            d.amax() / d.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
        };
        return Err(Error::Numerical(format!(
            "projected eigensolve failed (Jacobian diagonal ratio {diag_ratio:.3e})"
        )));
    }
    let (idx, mu_min) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty spectrum");
    let y = eig.eigenvectors.column(idx);
    Ok(TangentSpectrum {
        mu_min,
        eigvec: b * y,
        invertible: mu_min.abs() > tol_inv,
    })
}

/// Smallest nonzero eigenvalue `c₂` of `(K, M)` on mean-zero functions: the
/// `L²` Poincaré constant and the `ε = 0` value of `μ_min`.
pub fn mean_zero_gap(forms: &EnergyForms) -> Result<TangentSpectrum> {
    let ones = DVector::from_element(forms.mesh().n_nodes(), 1.0);
    let basis = basis_orthogonal_to(forms.m() * ones, forms)?;
    tangent_smallest_eig(forms.k(), &basis, 0.0)
}

/// Linearization at `ū` with multiplier `λ`: Jacobian, tangent basis and spectrum.
pub fn analyze(
    u: &DiscreteFunction,
    eps: f64,
    lambda: f64,
    forms: &EnergyForms,
    params: &FractionalParams,
    tol_inv: f64,
) -> Result<TangentSpectrum> {
    let jac = assemble_jacobian(u, eps, lambda, forms, params)?;
    let basis = tangent_basis(u, params, forms)?;
    tangent_smallest_eig(&jac, &basis, tol_inv)
}

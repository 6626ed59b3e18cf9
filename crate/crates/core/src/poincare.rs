//! Mean-zero Poincaré constant `c = inf{ wᵀKw / ‖w‖²_q : ∫w = 0 }` and the
//! resulting lower bound on the uniqueness threshold.

use nalgebra::{Cholesky, DVector};
use serde::{Deserialize, Serialize};

use crate::assembly::EnergyForms;
use crate::descent::{DescentOptions, QuotientProblem};
use crate::error::{invalid, Error, Result};
use crate::extremal::SolverOptions;
use crate::function::DiscreteFunction;
use crate::linearization::{basis_orthogonal_to, tangent_smallest_eig};
use crate::params::FractionalParams;

#[derive(Debug, Clone)]
pub struct PoincareResult {
    pub c: f64,
    /// Minimizer with `∫w = 0` and `‖w‖_q = 1`.
    pub minimizer: DiscreteFunction,
    pub converged: bool,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Computes `c` for `1 ≤ q < 2*_s`.
///
/// For `q = 2` this is the smallest mean-zero generalized eigenvalue of
/// `(K, M)`. Otherwise the quotient is minimized over mean-zero coordinates,
/// starting from that eigenvector.
pub fn poincare_constant(
    forms: &EnergyForms,
    params: &FractionalParams,
    opts: &SolverOptions,
) -> Result<PoincareResult> {
    if forms.params().s() != params.s() || forms.params().n() != params.n() {
        return invalid("parameters do not match the assembled forms");
    }
    let q = params.q();
    let n = forms.mesh().n_nodes();
    let basis = basis_orthogonal_to(forms.m() * DVector::from_element(n, 1.0), forms)?;
    let b = &basis.vectors;
    let kred = b.tr_mul(&(forms.k() * b));
    let kred = (&kred + kred.transpose()) * 0.5;
    let eig = tangent_smallest_eig(forms.k(), &basis, 0.0)?;

    if q == 2.0 {
        let w = eig.eigvec;
        let res = (forms.k() * &w - forms.m() * &w * eig.mu_min).norm();
        return Ok(PoincareResult {
            c: eig.mu_min,
            minimizer: forms.function(w)?,
            converged: true,
            iterations: 0,
            residual_norm: res,
        });
    }

    // reduced coordinates of the eigenvector: x = Bᵀ M w since BᵀMB = I
    let x0 = b.tr_mul(&(forms.m() * &eig.eigvec));
    let precond = Cholesky::new(kred.clone()).ok_or_else(|| {
        Error::Numerical("Gagliardo form is not positive definite on mean-zero functions".into())
    })?;
    let problem = QuotientProblem {
        a: &kred,
        energy: None,
        map: Some(b),
        precond: &precond,
        lq: forms.lq(),
        q,
        residual_metric: None,
        residual_scale: 1.0,
    };
    let out = problem.minimize(
        &x0,
        &DescentOptions {
            tol: opts.tol,
            max_iter: opts.max_iter,
            armijo: opts.armijo,
            grow_step: false,
        },
    );
    let mut w = b * &out.x;
    if w[w.iamax()] < 0.0 {
        w.neg_mut();
    }
    Ok(PoincareResult {
        c: out.value,
        minimizer: forms.function(w)?,
        converged: out.converged,
        iterations: out.iterations,
        residual_norm: out.residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBound {
    pub eps0_theoretical: f64,
    pub c_used: f64,
    pub params: FractionalParams,
}

/// `ε₀ ≥ (c / ((q-1)|Ω|^{1-2/q}))^{1/(2s)}` for validated parameters.
pub fn epsilon0_lower_bound(
    c: f64,
    params: &FractionalParams,
    measure: f64,
) -> Result<EpsilonBound> {
    params.require_superlinear_bound_exponent()?;
    Ok(EpsilonBound {
        eps0_theoretical: epsilon0_bound_value(c, params.s(), params.q(), measure)?,
        c_used: c,
        params: *params,
    })
}

/// The bound formula alone, for any `s ∈ (0, 1)`, `q > 1`, `c > 0`, `|Ω| > 0`.
pub fn epsilon0_bound_value(c: f64, s: f64, q: f64, measure: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return invalid(format!("fractional order must lie in (0, 1), got {s}"));
    }
    if !(q > 1.0 && q.is_finite()) {
        return invalid(format!("the bound needs q > 1, got {q}"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return invalid(format!("Poincaré constant must be positive, got {c}"));
    }
    if !(measure > 0.0 && measure.is_finite()) {
        return invalid(format!("domain measure must be positive, got {measure}"));
    }
    let base = c / ((q - 1.0) * measure.powf(1.0 - 2.0 / q));
    Ok(base.powf(1.0 / (2.0 * s)))
}

//! Minimal-energy extremals of the Sobolev quotient on contracted domains.
//!
//! All `ε`-dependence is carried by the rescaled quotient on the reference
//! mesh: for `v̄(x) = v(εx)`,
//! `Q_ε(v) = ε^{n(1-2/q)} (ε^{-2s} v̄ᵀKv̄ + v̄ᵀMv̄) / ‖v̄‖²_q`.
//! The bracketed factor is what the solver minimizes (`S_scaled`); at a
//! normalized minimizer it equals the multiplier `λ_ε` of the rescaled
//! equation `Ku + ε^{2s}Mu = ε^{2s} λ_ε g(u)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::EnergyForms;
use crate::descent::{DescentOptions, QuotientProblem};
use crate::error::{invalid, Error, Result};
use crate::function::DiscreteFunction;
use crate::params::FractionalParams;

/// Which operator preconditions the descent direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    /// `ε^{-2s} K + M`, the quadratic part of the energy.
    #[default]
    Energy,
    /// The mass matrix `M`.
    Mass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Weak-residual tolerance for convergence.
    pub tol: f64,
    pub max_iter: usize,
    pub preconditioner: Preconditioner,
    /// Sufficient-decrease constant of the backtracking line search.
    pub armijo: f64,
    /// Random starts used by [`multistart_extremals`] (the constant is added).
    pub n_starts: usize,
    /// `L^q` distance below which two extremals are identified.
    pub cluster_tol: f64,
    /// Relative energy window for runs considered minimal.
    pub energy_match: f64,
    /// `|μ_min|` threshold for declaring the linearization invertible.
    pub tol_inv: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 20_000,
            preconditioner: Preconditioner::Energy,
            armijo: 1e-4,
            n_starts: 8,
            cluster_tol: 1e-4,
            energy_match: 1e-6,
            tol_inv: 1e-7,
        }
    }
}

/// A normalized discrete extremal and its diagnostics.
#[derive(Debug, Clone)]
pub struct ExtremalResult {
    /// Rescaled extremal on the reference mesh, `‖u‖_{q;Ω} = 1`, `∫u ≥ 0`.
    pub u: DiscreteFunction,
    pub eps: f64,
    /// `S(Ω_ε)`, the quotient of the pushforward function on `ε·Ω`.
    pub sobolev: f64,
    /// `S(Ω_ε) / ε^{n(1-2/q)}`.
    pub scaled: f64,
    /// Multiplier of the rescaled equation; equals `scaled` under this normalization.
    pub lambda: f64,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
    /// Scaled quotient after each accepted step (starting point first).
    pub trace: Vec<f64>,
}

fn check_compatible(forms: &EnergyForms, params: &FractionalParams) -> Result<()> {
    let fp = forms.params();
    if fp.s() != params.s() || fp.n() != params.n() {
        return invalid(format!(
            "parameters (s = {}, n = {}) do not match the assembled forms (s = {}, n = {})",
            params.s(),
            params.n(),
            fp.s(),
            fp.n()
        ));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return invalid(format!("contraction factor must be positive, got {eps}"));
    }
    Ok(())
}

/// `F(u) = (uᵀKu + uᵀMu) / ‖u‖²_q` with `K` already carrying the factor ½.
pub fn rayleigh_quotient(u: &DiscreteFunction, forms: &EnergyForms, q: f64) -> Result<f64> {
    if u.is_zero() {
        return invalid("the quotient is undefined for u = 0");
    }
    let c = u.coeffs();
    let den = forms.lq().norm(c, q).powi(2);
    Ok((forms.seminorm_energy(c) + forms.l2_norm_sq(c)) / den)
}

/// Quotient of the pushforward `v(x) = ū(x/ε)` on `ε·Ω`, evaluated on the
/// reference mesh.
pub fn scaled_quotient(
    u: &DiscreteFunction,
    eps: f64,
    forms: &EnergyForms,
    params: &FractionalParams,
) -> Result<f64> {
    check_eps(eps)?;
    check_compatible(forms, params)?;
    if u.is_zero() {
        return invalid("the quotient is undefined for u = 0");
    }
    Ok(eps.powf(params.contraction_exponent()) * bracket(u.coeffs(), eps, forms, params))
}

fn bracket(c: &DVector<f64>, eps: f64, forms: &EnergyForms, params: &FractionalParams) -> f64 {
    let den = forms.lq().norm(c, params.q()).powi(2);
    (eps.powf(-2.0 * params.s()) * forms.seminorm_energy(c) + forms.l2_norm_sq(c)) / den
}

/// `‖Ku + ε^{2s}Mu - ε^{2s} λ g(u)‖_{M⁻¹}`, zero exactly at discrete weak
/// solutions of the rescaled equation.
pub fn weak_residual(
    u: &DiscreteFunction,
    eps: f64,
    lambda: f64,
    forms: &EnergyForms,
    params: &FractionalParams,
) -> Result<f64> {
    if !(eps >= 0.0) {
        return invalid(format!("contraction factor must be nonnegative, got {eps}"));
    }
    check_compatible(forms, params)?;
    Ok(forms.dual_norm(&residual_map(u, eps, lambda, forms, params)))
}

/// The residual `Ku + ε^{2s}Mu - ε^{2s} λ g(u)` as a dual vector.
pub fn residual_map(
    u: &DiscreteFunction,
    eps: f64,
    lambda: f64,
    forms: &EnergyForms,
    params: &FractionalParams,
) -> DVector<f64> {
    let c = u.coeffs();
    let e2s = eps.powf(2.0 * params.s());
    let g = forms.lq().gradient(c, params.q());
    forms.k() * c + (forms.m() * c) * e2s - g * (e2s * lambda)
}

/// Factorized data for minimizing at one `ε`; shared by all starts.
pub struct ScaledProblem<'f> {
    forms: &'f EnergyForms,
    params: FractionalParams,
    eps: f64,
    energy: DMatrix<f64>,
    precond: Cholesky<f64, Dyn>,
}

impl<'f> ScaledProblem<'f> {
    pub fn new(
        forms: &'f EnergyForms,
        params: &FractionalParams,
        eps: f64,
        opts: &SolverOptions,
    ) -> Result<Self> {
        check_eps(eps)?;
        check_compatible(forms, params)?;
        params.require_extremal_exponent()?;
        let energy = forms.k() * eps.powf(-2.0 * params.s()) + forms.m();
        let precond = match opts.preconditioner {
            Preconditioner::Energy => Cholesky::new(energy.clone()),
            Preconditioner::Mass => Some(forms.mass_cholesky().clone()),
        }
        .ok_or_else(|| Error::Numerical("preconditioner is not positive definite".into()))?;
        Ok(Self {
            forms,
            params: *params,
            eps,
            energy,
            precond,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn solve(&self, init: &DVector<f64>, opts: &SolverOptions) -> Result<ExtremalResult> {
        if init.len() != self.forms.mesh().n_nodes() {
            return invalid("initial guess does not match the mesh");
        }
        if init.iter().all(|v| *v == 0.0) || init.iter().any(|v| !v.is_finite()) {
            return invalid("initial guess must be finite and nonzero");
        }
        let e2s_inv = self.eps.powf(-2.0 * self.params.s());
        let forms = self.forms;
        let energy =
            move |x: &DVector<f64>| e2s_inv * forms.seminorm_energy(x) + forms.l2_norm_sq(x);
        let problem = QuotientProblem {
            a: &self.energy,
            energy: Some(&energy),
            map: None,
            precond: &self.precond,
            lq: self.forms.lq(),
            q: self.params.q(),
            residual_metric: Some(self.forms.mass_cholesky()),
            residual_scale: self.eps.powf(2.0 * self.params.s()),
        };
        if problem.normalize(init).is_none() {
            return invalid("initial guess has zero L^q norm");
        }
        let out = problem.minimize(
            init,
            &DescentOptions {
                tol: opts.tol,
                max_iter: opts.max_iter,
                armijo: opts.armijo,
                grow_step: opts.preconditioner == Preconditioner::Mass,
            },
        );
        let mut x = out.x;
        if self.forms.integral(&x) < 0.0 {
            x.neg_mut();
        }
        let scaled = bracket(&x, self.eps, self.forms, &self.params);
        Ok(ExtremalResult {
            u: self.forms.function(x)?,
            eps: self.eps,
            sobolev: self.eps.powf(self.params.contraction_exponent()) * scaled,
            scaled,
            lambda: scaled,
            iterations: out.iterations,
            residual_norm: out.residual,
            converged: out.converged,
            trace: out.trace,
        })
    }
}

/// Projected preconditioned descent for the scaled quotient at `ε`.
pub fn minimize_rayleigh(
    forms: &EnergyForms,
    params: &FractionalParams,
    eps: f64,
    init: &DiscreteFunction,
    opts: &SolverOptions,
) -> Result<ExtremalResult> {
    ScaledProblem::new(forms, params, eps, opts)?.solve(init.coeffs(), opts)
}

/// Outcome of [`multistart_extremals`].
#[derive(Debug, Clone)]
pub struct Multistart {
    /// One extremal per cluster of minimal-energy runs, lowest energy first.
    pub representatives: Vec<ExtremalResult>,
    /// Every run, in start order (constant start first).
    pub runs: Vec<ExtremalResult>,
}

impl Multistart {
    /// The lowest-energy extremal found.
    pub fn best(&self) -> &ExtremalResult {
        &self.representatives[0]
    }

    pub fn n_clusters(&self) -> usize {
        self.representatives.len()
    }
}

/// Random initial guesses `1 + a·ξ` with iid `ξ_i ~ U(-1, 1)` and log-uniform
/// amplitudes in `[10^{-1.5}, 10^{0.5}]`.
pub fn random_starts(n_nodes: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let amp = 10f64.powf(rng.gen_range(-1.5..0.5));
            DVector::from_fn(n_nodes, |_, _| 1.0 + amp * rng.gen_range(-1.0..1.0))
        })
        .collect()
}

/// Runs the solver from the constant, `n_starts` seeded random guesses and an
/// optional warm start, then clusters the minimal-energy runs by `L^q`
/// distance. A single cluster means the minimal-energy extremal is
/// numerically unique.
pub fn multistart_extremals(
    forms: &EnergyForms,
    params: &FractionalParams,
    eps: f64,
    n_starts: usize,
    seed: u64,
    opts: &SolverOptions,
    warm: Option<&DVector<f64>>,
) -> Result<Multistart> {
    if n_starts < 2 {
        return invalid(format!(
            "multistart needs at least 2 starts, got {n_starts}"
        ));
    }
    let problem = ScaledProblem::new(forms, params, eps, opts)?;
    let n = forms.mesh().n_nodes();
    let mut inits = vec![DVector::from_element(n, 1.0)];
    inits.extend(random_starts(n, n_starts, seed));
    if let Some(w) = warm {
        inits.push(w.clone());
    }
    let runs: Vec<ExtremalResult> = inits
        .par_iter()
        .map(|x0| problem.solve(x0, opts))
        .collect::<Result<_>>()?;
    let representatives = cluster(forms, params.q(), &runs, opts);
    Ok(Multistart {
        representatives,
        runs,
    })
}

fn cluster(
    forms: &EnergyForms,
    q: f64,
    runs: &[ExtremalResult],
    opts: &SolverOptions,
) -> Vec<ExtremalResult> {
    let any_converged = runs.iter().any(|r| r.converged);
    let pool: Vec<&ExtremalResult> = runs
        .iter()
        .filter(|r| r.converged || !any_converged)
        .collect();
    let best = pool.iter().map(|r| r.scaled).fold(f64::INFINITY, f64::min);
    let window = best + opts.energy_match * best.abs();
    let mut clusters: Vec<Vec<&ExtremalResult>> = Vec::new();
    for r in pool.into_iter().filter(|r| r.scaled <= window) {
        let home = clusters.iter_mut().find(|c| {
            let d = r.u.coeffs() - c[0].u.coeffs();
            forms.lq().norm(&d, q) <= opts.cluster_tol
        });
        match home {
            Some(c) => c.push(r),
            None => clusters.push(vec![r]),
        }
    }
    let mut reps: Vec<ExtremalResult> = clusters
        .into_iter()
        .map(|c| {
            (*c.iter()
                .min_by(|a, b| a.scaled.total_cmp(&b.scaled))
                .expect("clusters are nonempty"))
            .clone()
        })
        .collect();
    reps.sort_by(|a, b| a.scaled.total_cmp(&b.scaled));
    reps
}

/// `‖ū - |Ω|^{-1/q}‖_{q;Ω}`, the distance to the small-domain limit.
pub fn distance_to_constant(u: &DiscreteFunction, forms: &EnergyForms, q: f64) -> f64 {
    let c = forms.mesh().measure().powf(-1.0 / q);
    let d = u.coeffs().add_scalar(-c);
    forms.lq().norm(&d, q)
}

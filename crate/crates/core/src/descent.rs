//! Preconditioned descent for quotients `xᵀ A x / ‖T x‖²_q` over coordinates `x`,
//! where `T` maps coordinates to nodal values.
//!
//! Each step moves along `-P⁻¹ (A x - Q Tᵀ g(Tx))`, accepts the step by an
//! Armijo test on the quotient, and rescales to `‖T x‖_q = 1`. Quotient
//! differences are evaluated in a cancellation-free form so that the line
//! search stays meaningful when the decrease is far below `Q · f64::EPSILON`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::assembly::LqQuadrature;

pub(crate) type EnergyFn<'a> = &'a (dyn Fn(&DVector<f64>) -> f64 + Sync);

pub(crate) struct QuotientProblem<'a> {
    pub a: &'a DMatrix<f64>,
    /// Evaluates `xᵀAx` more accurately than the plain product, if available.
    pub energy: Option<EnergyFn<'a>>,
    pub map: Option<&'a DMatrix<f64>>,
    pub precond: &'a Cholesky<f64, Dyn>,
    pub lq: &'a LqQuadrature,
    pub q: f64,
    /// Metric for the residual norm; Euclidean when `None`.
    pub residual_metric: Option<&'a Cholesky<f64, Dyn>>,
    /// Factor applied to the residual vector before taking its norm.
    pub residual_scale: f64,
}

pub(crate) struct DescentOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    /// Lets the trial step grow from the last accepted one; otherwise every
    /// line search starts at `τ = 1`.
    pub grow_step: bool,
}

pub(crate) struct DescentOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub trace: Vec<f64>,
}

const MAX_BACKTRACK: usize = 60;
const MAX_STEP: f64 = 1e6;

impl QuotientProblem<'_> {
    fn nodal(&self, x: &DVector<f64>) -> DVector<f64> {
        match self.map {
            Some(t) => t * x,
            None => x.clone(),
        }
    }

    fn pullback(&self, g: DVector<f64>) -> DVector<f64> {
        match self.map {
            Some(t) => t.tr_mul(&g),
            None => g,
        }
    }

    /// Rescales `x` so that `‖T x‖_q = 1`. Returns `None` for the zero vector.
    pub fn normalize(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let nrm = self.lq.norm(&self.nodal(x), self.q);
        (nrm > 0.0 && nrm.is_finite()).then(|| x / nrm)
    }

    /// Quotient value and residual norm at a normalized point.
    pub fn residual(&self, x: &DVector<f64>) -> (f64, f64, DVector<f64>) {
        let ax = self.a * x;
        let value = match self.energy {
            Some(f) => f(x),
            None => x.dot(&ax),
        };
        let g = self.pullback(self.lq.gradient(&self.nodal(x), self.q));
        let r = &ax - &g * value;
        let scaled = &r * self.residual_scale;
        let norm = match self.residual_metric {
            Some(ch) => scaled.dot(&ch.solve(&scaled)).max(0.0).sqrt(),
            None => scaled.norm(),
        };
        (value, norm, r)
    }

    /// `Q(x + d) - Q(x)` for normalized `x`, without subtractive cancellation.
    fn delta(&self, x: &DVector<f64>, ax: &DVector<f64>, value: f64, d: &DVector<f64>) -> f64 {
        let dn = 2.0 * d.dot(ax) + d.dot(&(self.a * d));
        let (xn, dnod) = (self.nodal(x), self.nodal(d));
        let i0 = self.lq.integral_pow(&xn, self.q);
        let di = self.lq.integral_pow_delta(&xn, &dnod, self.q);
        let den0 = i0.powf(2.0 / self.q);
        let dden = den0 * ((2.0 / self.q) * (di / i0).ln_1p()).exp_m1();
        let num0 = value * den0;
        (dn * den0 - num0 * dden) / (den0 * (den0 + dden))
    }

    pub fn minimize(&self, x0: &DVector<f64>, opts: &DescentOptions) -> DescentOutcome {
        let mut x = self.normalize(x0).expect("initial point must be nonzero");
        let mut trace = Vec::new();
        let mut step = 1.0_f64;
        let mut iterations = 0;
        loop {
            let (value, res, r) = self.residual(&x);
            trace.push(value);
            if res <= opts.tol || iterations >= opts.max_iter {
                return DescentOutcome {
                    x,
                    value,
                    iterations,
                    residual: res,
                    converged: res <= opts.tol,
                    trace,
                };
            }
            let d = -self.precond.solve(&r);
            // directional derivative of Q at normalized x is 2 rᵀ d
            let slope = 2.0 * r.dot(&d);
            if !(slope < 0.0) {
                return DescentOutcome {
                    x,
                    value,
                    iterations,
                    residual: res,
                    converged: false,
                    trace,
                };
            }
            let ax = self.a * &x;
            let mut tau = if opts.grow_step {
                (2.0 * step).min(MAX_STEP)
            } else {
                1.0
            };
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACK {
                let trial = &d * tau;
                let dq = self.delta(&x, &ax, value, &trial);
                if dq.is_finite() && dq <= opts.armijo * tau * slope {
                    accepted = Some(trial);
                    break;
                }
                tau *= 0.5;
            }
            iterations += 1;
            match accepted.and_then(|t| self.normalize(&(&x + t))) {
                Some(next) => {
                    x = next;
                    step = tau;
                }
                None => {
                    return DescentOutcome {
                        x,
                        value,
                        iterations,
                        residual: res,
                        converged: false,
                        trace,
                    };
                }
            }
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Fractional order `s`, Lebesgue exponent `q` and space dimension `n`.
///
/// Construction checks `0 < s < 1`, `n ∈ {1, 2}` and `1 <= q < 2*_s`. The
/// stricter requirements of individual solvers (`q > 1`, `q != 2`) are checked
/// by [`FractionalParams::require_extremal_exponent`] and
/// [`FractionalParams::require_superlinear_bound_exponent`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionalParams {
    s: f64,
    q: f64,
    n: usize,
}

impl FractionalParams {
    pub fn new(s: f64, q: f64, n: usize) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return invalid(format!("fractional order s = {s} must lie in (0, 1)"));
        }
        if n != 1 && n != 2 {
            return invalid(format!("dimension n = {n} is not supported (use 1 or 2)"));
        }
        if !q.is_finite() || q < 1.0 {
            return invalid(format!("exponent q = {q} must satisfy q >= 1"));
        }
        let crit = critical_exponent(s, n);
        if q >= crit {
            return invalid(format!(
                "exponent q = {q} is not subcritical: need q < 2*_s = {crit}"
            ));
        }
        Ok(Self { s, q, n })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Same `(s, n)` with a different exponent.
    pub fn with_q(&self, q: f64) -> Result<Self> {
        Self::new(self.s, q, self.n)
    }

    /// The critical Sobolev exponent `2*_s` for these parameters.
    pub fn critical_exponent(&self) -> f64 {
        critical_exponent(self.s, self.n)
    }

    /// The extremal problem needs `q > 1` and excludes the linear case `q = 2`.
    pub fn require_extremal_exponent(&self) -> Result<()> {
        if self.q == 2.0 {
            return invalid(
                "q = 2 is the linear eigenvalue case; the extremal problem requires q != 2",
            );
        }
        if self.q <= 1.0 {
            return invalid(format!(
                "extremal problem requires q > 1, got q = {}",
                self.q
            ));
        }
        Ok(())
    }

    /// The contraction lower bound is only meaningful for `q > 1`.
    pub fn require_superlinear_bound_exponent(&self) -> Result<()> {
        if self.q <= 1.0 {
            return invalid(format!(
                "the contraction lower bound requires q > 1, got q = {}",
                self.q
            ));
        }
        Ok(())
    }

    /// Kernel exponent `n + 2s` of `|x - y|^{-(n + 2s)}`.
    pub fn kernel_exponent(&self) -> f64 {
        self.n as f64 + 2.0 * self.s
    }

    /// Exponent `n (1 - 2/q)` of the contraction scaling `S(Ω_ε) ~ ε^{n(1-2/q)}`.
    pub fn contraction_exponent(&self) -> f64 {
        self.n as f64 * (1.0 - 2.0 / self.q)
    }
}

/// `2n / (n - 2s)` when `2s < n`, infinity otherwise.
pub fn critical_exponent(s: f64, n: usize) -> f64 {
    let n = n as f64;
    if 2.0 * s < n {
        2.0 * n / (n - 2.0 * s)
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_exponent_values() {
        assert_eq!(critical_exponent(0.25, 1), 4.0);
        assert!(critical_exponent(0.5, 1).is_infinite());
        assert!(critical_exponent(0.75, 1).is_infinite());
        assert_eq!(critical_exponent(0.5, 2), 4.0);
    }

    #[test]
    fn rejects_supercritical_and_bad_order() {
        assert!(FractionalParams::new(0.25, 4.0, 1).is_err());
        assert!(FractionalParams::new(0.25, 3.9, 1).is_ok());
        assert!(FractionalParams::new(0.0, 3.0, 1).is_err());
        assert!(FractionalParams::new(1.0, 3.0, 1).is_err());
        assert!(FractionalParams::new(0.5, 0.5, 1).is_err());
        assert!(FractionalParams::new(0.5, 3.0, 3).is_err());
    }

    #[test]
    fn extremal_exponent_excludes_linear_case() {
        let p = FractionalParams::new(0.5, 2.0, 1).unwrap();
        let err = p.require_extremal_exponent().unwrap_err();
        assert!(err.to_string().contains("q != 2"));
        let p1 = FractionalParams::new(0.5, 1.0, 1).unwrap();
        assert!(p1.require_extremal_exponent().is_err());
        assert!(p1.require_superlinear_bound_exponent().is_err());
        assert!(FractionalParams::new(0.5, 1.5, 1)
            .unwrap()
            .require_extremal_exponent()
            .is_ok());
    }
}

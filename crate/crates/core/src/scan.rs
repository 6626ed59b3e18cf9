//! Sweeps over the contraction factor `ε` and detection of the first loss of
//! uniqueness of the minimal-energy extremal.

use std::io::{self, Write};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::assembly::EnergyForms;
use crate::error::{invalid, Result};
use crate::extremal::{distance_to_constant, multistart_extremals, SolverOptions};
use crate::linearization::analyze;
use crate::params::FractionalParams;
use crate::poincare::EpsilonBound;

/// Bisection stops after this many steps or once `(hi - lo)/hi` falls below
/// [`BISECTION_WIDTH`].
pub const BISECTION_STEPS: usize = 20;
pub const BISECTION_WIDTH: f64 = 1e-4;

pub const CSV_HEADER: &str = "eps,S_scaled,lambda_eps,dist_const_q,mu_min,n_clusters,converged";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub eps_min: f64,
    pub eps_max: f64,
    pub points: usize,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            eps_min: 1e-3,
            eps_max: 1e-1,
            points: 13,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

impl SweepConfig {
    pub fn grid(&self) -> Result<Vec<f64>> {
        geometric_grid(self.eps_min, self.eps_max, self.points)
    }
}

/// `points` geometrically spaced values from `lo` to `hi` inclusive, `0 < lo < hi ≤ 1`.
pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && lo < hi && hi <= 1.0) {
        return invalid(format!(
            "the ε grid must satisfy 0 < eps_min < eps_max <= 1, got [{lo}, {hi}]"
        ));
    }
    if points < 2 {
        return invalid(format!("the ε grid needs at least 2 points, got {points}"));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let last = (points - 1) as f64;
    Ok((0..points)
        .map(|i| match i {
            0 => lo,
            i if i == points - 1 => hi,
            i => (a + (b - a) * i as f64 / last).exp(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub eps: f64,
    pub s_scaled: f64,
    pub lambda_eps: f64,
    pub dist_const_q: f64,
    pub mu_min: f64,
    pub n_clusters: usize,
    pub converged: bool,
}

impl ScanRecord {
    fn failed(eps: f64) -> Self {
        Self {
            eps,
            s_scaled: f64::NAN,
            lambda_eps: f64::NAN,
            dist_const_q: f64::NAN,
            mu_min: f64::NAN,
            n_clusters: 0,
            converged: false,
        }
    }

    /// Either detection channel fires: the minimal branch has a nonpositive
    /// tangent eigenvalue or the multistart found several minimal extremals.
    pub fn shows_nonuniqueness(&self) -> bool {
        self.converged && (self.mu_min <= 0.0 || self.n_clusters >= 2)
    }
}

/// Per-`ε` seed, so that a record never depends on its position in the grid.
fn eps_seed(seed: u64, eps: f64) -> u64 {
    let mut z = seed ^ eps.to_bits().wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Multistart, linearization and limit distance at one `ε`. Returns the record
/// and the best extremal (for warm starts).
pub fn evaluate_eps(
    forms: &EnergyForms,
    params: &FractionalParams,
    eps: f64,
    config: &SweepConfig,
    warm: Option<&DVector<f64>>,
) -> (ScanRecord, Option<DVector<f64>>) {
    let opts = &config.solver;
    let seed = eps_seed(config.seed, eps);
    let Ok(ms) = multistart_extremals(forms, params, eps, opts.n_starts, seed, opts, warm) else {
        return (ScanRecord::failed(eps), None);
    };
    let best = ms.best();
    let mu_min = analyze(&best.u, eps, best.lambda, forms, params, opts.tol_inv)
        .map(|t| t.mu_min)
        .unwrap_or(f64::NAN);
    let record = ScanRecord {
        eps,
        s_scaled: best.scaled,
        lambda_eps: best.lambda,
        dist_const_q: distance_to_constant(&best.u, forms, params.q()),
        mu_min,
        n_clusters: ms.n_clusters(),
        converged: best.converged && mu_min.is_finite(),
    };
    (record, Some(best.u.coeffs().clone()))
}

/// One record per grid point, in ascending `ε`.
pub fn eps_sweep(
    forms: &EnergyForms,
    params: &FractionalParams,
    config: &SweepConfig,
) -> Result<Vec<ScanRecord>> {
    params.require_extremal_exponent()?;
    let grid = config.grid()?;
    Ok(grid
        .par_iter()
        .map(|&eps| evaluate_eps(forms, params, eps, config, None).0)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionMode {
    EigenvalueCrossing,
    MultistartSplit,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eps0Estimate {
    #[serde(serialize_with = "found_or_not")]
    pub eps0_numerical: Option<f64>,
    pub detection_mode: DetectionMode,
    pub bracket: Option<(f64, f64)>,
    pub eps0_theoretical: f64,
    pub c_used: f64,
    /// `(c₂/(q-2))^{1/(2s)}`, where the constant branch degenerates (`q > 2`).
    pub constant_branch_prediction: Option<f64>,
    /// Whether an eigenvalue-crossing bracket lies within a factor 2 of the
    /// constant-branch prediction while the extremals stay near constant.
    pub prediction_consistent: Option<bool>,
    pub bisection_steps: usize,
}

fn found_or_not<S: Serializer>(v: &Option<f64>, ser: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => ser.serialize_f64(*x),
        None => ser.serialize_str("not-found-in-range"),
    }
}

/// Locates the first transition from a unique to a non-unique record and,
/// if `refine`, bisects it geometrically with warm starts.
pub fn estimate_eps0(
    forms: &EnergyForms,
    params: &FractionalParams,
    records: &[ScanRecord],
    config: &SweepConfig,
    refine: bool,
    bound: &EpsilonBound,
    c2: f64,
) -> Eps0Estimate {
    let q = params.q();
    let prediction = (q > 2.0).then(|| (c2 / (q - 2.0)).powf(1.0 / (2.0 * params.s())));
    let mut estimate = Eps0Estimate {
        eps0_numerical: None,
        detection_mode: DetectionMode::None,
        bracket: None,
        eps0_theoretical: bound.eps0_theoretical,
        c_used: bound.c_used,
        constant_branch_prediction: prediction,
        prediction_consistent: None,
        bisection_steps: 0,
    };
    let unique = |r: &ScanRecord| r.converged && !r.shows_nonuniqueness();
    let Some(i) = records
        .windows(2)
        .position(|w| unique(&w[0]) && w[1].shows_nonuniqueness())
    else {
        return estimate;
    };
    if records[..i].iter().any(|r| r.shows_nonuniqueness()) {
        return estimate;
    }
    let (mut lo, mut hi) = (records[i].clone(), records[i + 1].clone());
    if refine {
        let mut warm = evaluate_eps(forms, params, lo.eps, config, None).1;
        while estimate.bisection_steps < BISECTION_STEPS
            && (hi.eps - lo.eps) / hi.eps > BISECTION_WIDTH
        {
            let mid = (lo.eps * hi.eps).sqrt();
            let (rec, u) = evaluate_eps(forms, params, mid, config, warm.as_ref());
            estimate.bisection_steps += 1;
            if !rec.converged {
                break;
            }
            if rec.shows_nonuniqueness() {
                hi = rec;
            } else {
                lo = rec;
                warm = u;
            }
        }
    }
    estimate.detection_mode = if hi.mu_min <= 0.0 {
        DetectionMode::EigenvalueCrossing
    } else {
        DetectionMode::MultistartSplit
    };
    estimate.bracket = Some((lo.eps, hi.eps));
    estimate.eps0_numerical = Some((lo.eps * hi.eps).sqrt());
    if let (DetectionMode::EigenvalueCrossing, Some(p)) = (estimate.detection_mode, prediction) {
        if lo.dist_const_q.max(hi.dist_const_q) < 0.1 {
            estimate.prediction_consistent = Some(p >= 0.5 * lo.eps && p <= 2.0 * hi.eps);
        }
    }
    estimate
}

/// Writes the sweep table with 17 significant digits per float.
pub fn write_csv<W: Write>(records: &[ScanRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
            r.eps, r.s_scaled, r.lambda_eps, r.dist_const_q, r.mu_min, r.n_clusters, r.converged
        )?;
    }
    Ok(())
}

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use fraclap::linearization::mean_zero_gap;
use fraclap::{
    acceptance, eps_sweep, epsilon0_lower_bound, estimate_eps0, multistart_extremals,
    poincare_constant, weak_residual, write_csv, EnergyForms, Eps0Estimate, EpsilonBound,
};
use serde::Serialize;

use crate::config::{Resolved, RunConfig};
use crate::CliError;

/// Writes through a temporary file in the target directory, then renames it
/// into place.
fn write_atomic(
    path: &Path,
    body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<(), CliError> {
    let fail = |e: io::Error| CliError::invalid(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    {
        let mut w = io::BufWriter::new(tmp.as_file_mut());
        body(&mut w).map_err(fail)?;
        w.flush().map_err(fail)?;
    }
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

fn emit(
    out: Option<&Path>,
    body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<(), CliError> {
    match out {
        Some(p) => write_atomic(p, body),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)
                .and_then(|_| lock.flush())
                .map_err(|e| CliError::invalid(format!("cannot write to stdout: {e}")))
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    emit(out, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn assemble(r: &Resolved) -> Result<EnergyForms, CliError> {
    Ok(EnergyForms::assemble(r.mesh.clone(), r.params)?)
}

#[derive(Serialize)]
struct ExtremalReport {
    eps: f64,
    #[serde(rename = "S")]
    sobolev: f64,
    #[serde(rename = "S_scaled")]
    scaled: f64,
    lambda: f64,
    residual: f64,
    iterations: usize,
    /// Every start converged, so the minimal-energy selection is complete.
    converged: bool,
    runs_converged: usize,
    runs: usize,
    n_clusters: usize,
    u: Vec<f64>,
}

pub fn extremal(config: RunConfig) -> Result<(), CliError> {
    let r = config.resolve()?;
    r.params.require_extremal_exponent()?;
    let forms = assemble(&r)?;
    let c = &r.config;
    let ms = multistart_extremals(
        &forms,
        &r.params,
        c.eps,
        c.solver.n_starts,
        c.seed,
        &c.solver,
        None,
    )?;
    let best = ms.best();
    let report = ExtremalReport {
        eps: c.eps,
        sobolev: best.sobolev,
        scaled: best.scaled,
        lambda: best.lambda,
        residual: weak_residual(&best.u, c.eps, best.lambda, &forms, &r.params)?,
        iterations: best.iterations,
        converged: ms.runs.iter().all(|run| run.converged),
        runs_converged: ms.runs.iter().filter(|run| run.converged).count(),
        runs: ms.runs.len(),
        n_clusters: ms.n_clusters(),
        u: best.u.coeffs().iter().copied().collect(),
    };
    emit_json(c.out.as_deref(), &report)?;
    if report.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!(
            "{} of {} starts converged",
            report.runs_converged, report.runs
        )))
    }
}

#[derive(Serialize)]
struct SweepSummary {
    estimate: Eps0Estimate,
    bound: EpsilonBound,
    measure: f64,
    poincare_converged: bool,
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn sweep(config: RunConfig) -> Result<(), CliError> {
    let r = config.resolve()?;
    r.params.require_extremal_exponent()?;
    let forms = assemble(&r)?;
    let sweep = r.config.sweep();
    let records = eps_sweep(&forms, &r.params, &sweep)?;
    let measure = r.mesh.measure();
    let p = poincare_constant(&forms, &r.params, &sweep.solver)?;
    let bound = epsilon0_lower_bound(p.c, &r.params, measure)?;
    let c2 = mean_zero_gap(&forms)?.mu_min;
    let estimate = estimate_eps0(
        &forms,
        &r.params,
        &records,
        &sweep,
        r.config.refine,
        &bound,
        c2,
    );
    let summary = SweepSummary {
        estimate,
        bound,
        measure,
        poincare_converged: p.converged,
    };
    let out = r.config.out.as_deref();
    emit(out, |w| write_csv(&records, w))?;
    match out {
        Some(path) => emit_json(Some(&sidecar_path(path)), &summary)?,
        None => eprintln!(
            "{}",
            serde_json::to_string_pretty(&summary).expect("summary serializes")
        ),
    }
    let failed = records.iter().filter(|r| !r.converged).count();
    if failed > 0 {
        eprintln!(
            "fraclap: {failed} of {} grid points did not converge",
            records.len()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct PoincareReport {
    c: f64,
    converged: bool,
    iterations: usize,
    residual: f64,
    s: f64,
    q: f64,
    measure: f64,
}

pub fn poincare(config: RunConfig) -> Result<(), CliError> {
    let r = config.resolve()?;
    let forms = assemble(&r)?;
    let p = poincare_constant(&forms, &r.params, &r.config.solver)?;
    let report = PoincareReport {
        c: p.c,
        converged: p.converged,
        iterations: p.iterations,
        residual: p.residual_norm,
        s: r.params.s(),
        q: r.params.q(),
        measure: r.mesh.measure(),
    };
    emit_json(r.config.out.as_deref(), &report)?;
    if p.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!(
            "Poincaré quotient residual {:e}",
            p.residual_norm
        )))
    }
}

#[derive(Serialize)]
struct BoundReport {
    eps0_theoretical: f64,
    c_used: f64,
    s: f64,
    q: f64,
    measure: f64,
}

pub fn bound(config: RunConfig, c: Option<f64>) -> Result<(), CliError> {
    let r = config.resolve()?;
    r.params.require_superlinear_bound_exponent()?;
    let measure = r.mesh.measure();
    let c = match c {
        Some(c) => c,
        None => {
            let forms = assemble(&r)?;
            let p = poincare_constant(&forms, &r.params, &r.config.solver)?;
            if !p.converged {
                return Err(CliError::NotConverged(format!(
                    "Poincaré quotient residual {:e}",
                    p.residual_norm
                )));
            }
            p.c
        }
    };
    let b = epsilon0_lower_bound(c, &r.params, measure)?;
    emit_json(
        r.config.out.as_deref(),
        &BoundReport {
            eps0_theoretical: b.eps0_theoretical,
            c_used: b.c_used,
            s: r.params.s(),
            q: r.params.q(),
            measure,
        },
    )
}

pub fn verify(only: &[usize]) -> Result<(), CliError> {
    let count = acceptance::criterion_count();
    if let Some(bad) = only.iter().find(|&&i| i == 0 || i > count) {
        return Err(CliError::invalid(format!(
            "criterion {bad} does not exist (1 to {count})"
        )));
    }
    let reports: Vec<_> = if only.is_empty() {
        acceptance::run_all(|r| println!("{r}"))
    } else {
        only.iter()
            .map(|&i| {
                let r = acceptance::run_criterion(i);
                println!("{r}");
                r
            })
            .collect()
    };
    let failed = reports.iter().filter(|r| !r.passed).count();
    println!(
        "{} of {} criteria passed",
        reports.len() - failed,
        reports.len()
    );
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!("{failed} criteria failed")))
    }
}

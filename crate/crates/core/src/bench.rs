//! Manufactured test problems, error measurement and convergence studies.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::colloc::{frac_coefficients, CollocationScheme};
use crate::error::{invalid, Result};
use crate::fem::SpatialSystem;
use crate::special::gamma_pos;
use crate::stepper::{adapt_run, sample_offsets, BarrierSpec, Controls, IntervalLog, Problem, SolverState, SpaceTimeFn};

/// A problem with known solution on (0,1) × (0, T] for L = -∂x².
#[derive(Clone)]
pub struct TestProblem {
    pub name: String,
    pub problem: Problem,
    pub u_exact: SpaceTimeFn,
    /// Non-integer exponents of t present in ∂^α u.
    pub singular_exponents: Vec<f64>,
}

impl std::fmt::Debug for TestProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestProblem").field("name", &self.name).field("problem", &self.problem).finish_non_exhaustive()
    }
}

fn bubble(x: f64) -> f64 {
    x * (1.0 - x)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        invalid(format!("alpha must lie in (0,1], got {alpha}"))
    }
}

/// u = (t^α − t² + 1) x(1−x).
pub fn problem_ex1(alpha: f64, t_end: f64) -> Result<TestProblem> {
    check_alpha(alpha)?;
    let g1 = gamma_pos(1.0 + alpha);
    let g2 = 2.0 / gamma_pos(3.0 - alpha);
    let f = move |x: f64, t: f64| {
        (g1 - g2 * t.powf(2.0 - alpha)) * bubble(x) + 2.0 * (t.powf(alpha) - t * t + 1.0)
    };
    Ok(TestProblem {
        name: "ex1".into(),
        problem: Problem { alpha, t_end, u0: Arc::new(bubble), f: Arc::new(f) },
        u_exact: Arc::new(move |x, t| (t.powf(alpha) - t * t + 1.0) * bubble(x)),
        singular_exponents: vec![2.0 - alpha],
    })
}

/// u = (t^α − t^{2α} + 1) x(1−x).
pub fn problem_ex2(alpha: f64, t_end: f64) -> Result<TestProblem> {
    check_alpha(alpha)?;
    let g1 = gamma_pos(1.0 + alpha);
    let g2 = gamma_pos(2.0 * alpha + 1.0) / gamma_pos(alpha + 1.0);
    let f = move |x: f64, t: f64| {
        (g1 - g2 * t.powf(alpha)) * bubble(x) + 2.0 * (t.powf(alpha) - t.powf(2.0 * alpha) + 1.0)
    };
    Ok(TestProblem {
        name: "ex2".into(),
        problem: Problem { alpha, t_end, u0: Arc::new(bubble), f: Arc::new(f) },
        u_exact: Arc::new(move |x, t| (t.powf(alpha) - t.powf(2.0 * alpha) + 1.0) * bubble(x)),
        singular_exponents: vec![alpha],
    })
}

/// u = x(1−x)(1 + J^α p), so that ∂^α u = p(t) x(1−x) with p(t) = Σ_j p_j t^j.
pub fn problem_polynomial(alpha: f64, t_end: f64, p: &[f64]) -> Result<TestProblem> {
    check_alpha(alpha)?;
    if p.is_empty() {
        return invalid("polynomial needs at least one coefficient");
    }
    let c = frac_coefficients(alpha, p.len() - 1);
    let p = p.to_vec();
    let (p1, c1) = (p.clone(), c.clone());
    let jp = move |t: f64| -> f64 { p1.iter().zip(&c1).enumerate().map(|(j, (pj, cj))| pj * cj * t.powf(j as f64 + alpha)).sum() };
    let jp2 = jp.clone();
    let poly = move |t: f64| -> f64 { p.iter().rev().fold(0.0, |acc, &pj| acc * t + pj) };
    let f = move |x: f64, t: f64| poly(t) * bubble(x) + 2.0 * (1.0 + jp(t));
    Ok(TestProblem {
        name: "poly".into(),
        problem: Problem { alpha, t_end, u0: Arc::new(bubble), f: Arc::new(f) },
        u_exact: Arc::new(move |x, t| bubble(x) * (1.0 + jp2(t))),
        singular_exponents: Vec::new(),
    })
}

/// f ≡ 0, u0 ≡ 0.
pub fn problem_zero(alpha: f64, t_end: f64) -> Result<TestProblem> {
    check_alpha(alpha)?;
    Ok(TestProblem {
        name: "zero".into(),
        problem: Problem { alpha, t_end, u0: Arc::new(|_| 0.0), f: Arc::new(|_, _| 0.0) },
        u_exact: Arc::new(|_, _| 0.0),
        singular_exponents: Vec::new(),
    })
}

/// Looks a named problem up; `poly` uses p(t) = 1 − t + t² truncated to degree `m`.
pub fn problem_by_name(name: &str, alpha: f64, t_end: f64, m: usize) -> Result<TestProblem> {
    match name {
        "ex1" => problem_ex1(alpha, t_end),
        "ex2" => problem_ex2(alpha, t_end),
        "zero" => problem_zero(alpha, t_end),
        "poly" => {
            let p: Vec<f64> = [1.0, -1.0, 1.0, 0.5, -0.25].iter().copied().take(m + 1).collect();
            problem_polynomial(alpha, t_end, &p)
        }
        other => invalid(format!("unknown problem '{other}' (expected ex1, ex2, poly or zero)")),
    }
}

/// Times at which the error is measured on interval `i`: the residual samples,
/// the collocation points and both breakpoints.
pub fn error_times(state: &SolverState, i: usize, samples: usize) -> Vec<f64> {
    let mesh = state.mesh();
    let (t0, tau) = (mesh.start(i), mesh.tau(i));
    let mut ts: Vec<f64> = sample_offsets(samples).into_iter().map(|s| t0 + s * tau).collect();
    ts.extend(state.collocation_times(i));
    ts.push(t0);
    ts.push(mesh.start(i + 1));
    ts
}

/// max over [`error_times`] of every interval and over the spatial sample set
/// of |u_τ − u|.
pub fn measure_error(state: &SolverState, problem: &TestProblem, samples: usize) -> Result<f64> {
    let sys = state.system();
    let xs: Vec<f64> = sys.sample_sites().iter().map(|s| s.x).collect();
    let per_interval: Vec<f64> = (0..state.mesh().len())
        .into_par_iter()
        .map(|i| {
            let mut worst: f64 = 0.0;
            for t in error_times(state, i, samples) {
                let u = sys.sample_values(&state.u_at(t)?);
                for (k, &x) in xs.iter().enumerate() {
                    worst = worst.max((u[k] - (problem.u_exact)(x, t)).abs());
                }
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    Ok(per_interval.into_iter().fold(0.0, f64::max))
}

/// Summary of one adaptive run.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub problem: String,
    pub scheme: String,
    pub points: Vec<f64>,
    pub alpha: f64,
    pub barrier: BarrierSpec,
    pub tol: f64,
    pub intervals: usize,
    pub rejections: usize,
    pub error_linf_linf: f64,
    /// Informational only.
    pub wall_time_s: f64,
    pub log: Vec<IntervalLog>,
}

/// Runs the adaptive solver and measures the error against the exact solution.
pub fn run_adaptive(
    problem: &TestProblem,
    scheme: &CollocationScheme,
    system: Arc<SpatialSystem>,
    spec: &BarrierSpec,
    controls: &Controls,
) -> Result<(SolverState, RunRecord)> {
    let start = Instant::now();
    let (state, log) = adapt_run(&problem.problem, scheme, system, spec, controls)?;
    let error = measure_error(&state, problem, controls.samples)?;
    let record = RunRecord {
        problem: problem.name.clone(),
        scheme: scheme.descriptor(),
        points: scheme.points().to_vec(),
        alpha: problem.problem.alpha,
        barrier: *spec,
        tol: spec.tol,
        intervals: state.mesh().len(),
        rejections: log.total_rejections,
        error_linf_linf: error,
        wall_time_s: start.elapsed().as_secs_f64(),
        log: log.intervals,
    };
    Ok((state, record))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub tol: f64,
    pub intervals: usize,
    pub error: f64,
    /// log(e_i/e_{i−1}) / log(M_i/M_{i−1}) against the previous row.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of log(error) against log(M).
    pub fitted_rate: f64,
    /// The same fit restricted to runs with M >= 2. A single-interval run is
    /// the coarsest mesh the controller can produce, so its error does not
    /// follow the asymptotic trend.
    pub refined_rate: f64,
    pub warnings: Vec<String>,
}

/// Least-squares slope of y against x.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// One adaptive run per tolerance (in parallel), then a fitted rate.
pub fn convergence_study(
    problem: &TestProblem,
    scheme: &CollocationScheme,
    system: Arc<SpatialSystem>,
    base: &BarrierSpec,
    controls: &Controls,
    tols: &[f64],
) -> Result<ConvergenceStudy> {
    if tols.len() < 3 {
        return invalid("a convergence study needs at least three tolerances");
    }
    let (lo, hi) = tols.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &t| (l.min(t), h.max(t)));
    if !(hi / lo >= 100.0) {
        return invalid("tolerances must span at least two decades");
    }
    let mut sorted = tols.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let records: Vec<RunRecord> = sorted
        .par_iter()
        .map(|&tol| {
            let spec = BarrierSpec { tol, ..*base };
            run_adaptive(problem, scheme, Arc::clone(&system), &spec, controls).map(|(_, r)| r)
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    let mut warnings = Vec::new();
    for r in &records {
        let rate = rows.last().and_then(|p: &ConvergenceRow| {
            (r.intervals != p.intervals && r.error_linf_linf > 0.0 && p.error > 0.0)
                .then(|| (r.error_linf_linf / p.error).ln() / (r.intervals as f64 / p.intervals as f64).ln())
        });
        if let Some(p) = rows.last() {
            if r.intervals < p.intervals {
                warnings.push(format!("M decreased from {} to {} when TOL tightened to {:e}", p.intervals, r.intervals, r.tol));
            }
        }
        rows.push(ConvergenceRow { tol: r.tol, intervals: r.intervals, error: r.error_linf_linf, rate });
    }
    let rate_over = |min_m: usize| {
        let usable: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.error > 0.0 && r.intervals >= min_m).collect();
        let x: Vec<f64> = usable.iter().map(|r| (r.intervals as f64).ln()).collect();
        let y: Vec<f64> = usable.iter().map(|r| r.error.ln()).collect();
        if usable.len() >= 2 { fit_slope(&x, &y) } else { f64::NAN }
    };
    let fitted_rate = rate_over(1);
    let refined_rate = rate_over(2);
    if !fitted_rate.is_finite() {
        warnings.push("rate fit is degenerate".into());
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ConvergenceStudy { rows, fitted_rate, refined_rate, warnings })
}

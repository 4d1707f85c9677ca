//! Subcommand implementations and output files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use fraccolloc::bench::{convergence_study, measure_error, problem_by_name, run_adaptive, TestProblem};
use fraccolloc::colloc::{CollocationScheme, PointFamily};
use fraccolloc::fem::{barrier_pair, BarrierPair, OperatorCoeffs, SpatialSystem};
use fraccolloc::field::Side;
use fraccolloc::spectral::{alpha_grid, sweep};
use fraccolloc::stepper::{sample_offsets, BarrierKind, BarrierSpec, Controls, NormKind, SolverState};
use serde::Serialize;

use crate::config::Config;
use crate::{BarrierArgs, ProblemArgs, UsageError};

/// 17 significant digits, round-trip exact.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_output(dir: &Path, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_output(dir, name, &text)
}

fn parse_family(raw: &str) -> Result<PointFamily, UsageError> {
    raw.parse().map_err(|e: fraccolloc::Error| UsageError(e.to_string()))
}

struct Setup {
    problem: TestProblem,
    scheme: CollocationScheme,
    system: Arc<SpatialSystem>,
}

fn setup(cfg: &Config, args: &ProblemArgs) -> anyhow::Result<Setup> {
    let name: String = cfg.pick(args.problem.clone(), "problem", "ex1".into())?;
    let alpha = cfg.pick(args.alpha, "alpha", 0.4)?;
    let m = cfg.pick(args.m, "m", 2)?;
    let family = parse_family(&cfg.pick(args.points.clone(), "points", "gauss-legendre".into())?)?;
    let t_end = cfg.pick(args.t_end, "t-end", 1.0)?;
    let cells = cfg.pick(args.cells, "cells", 10)?;
    let degree = cfg.pick(args.degree, "degree", 2)?;
    let scheme = CollocationScheme::new(family, m)?;
    let problem = problem_by_name(&name, alpha, t_end, m)?;
    let system = Arc::new(SpatialSystem::assemble(0.0, 1.0, cells, degree, OperatorCoeffs::laplacian())?);
    Ok(Setup { problem, scheme, system })
}

fn barrier_setup(cfg: &Config, args: &BarrierArgs, system: &SpatialSystem, tol: f64) -> anyhow::Result<(BarrierSpec, Controls)> {
    let kind = match cfg.pick(args.barrier.clone(), "barrier", "r0".into())?.to_ascii_lowercase().as_str() {
        "r0" => BarrierKind::R0,
        "r1" => BarrierKind::R1,
        other => return Err(UsageError(format!("unknown barrier '{other}' (expected r0 or r1)")).into()),
    };
    let norm = match cfg.pick(args.norm.clone(), "norm", "linf".into())?.to_ascii_lowercase().as_str() {
        "linf" => NormKind::Linf,
        "l2" => NormKind::L2,
        other => return Err(UsageError(format!("unknown norm '{other}' (expected linf or l2)")).into()),
    };
    let pair = match norm {
        NormKind::Linf => barrier_pair(system)?,
        // energy estimate: λ is the smallest discrete eigenvalue and ω = 0
        NormKind::L2 => BarrierPair { lambda: system.energy_lambda(), omega: 0.0 },
    };
    let spec = BarrierSpec::new(kind, tol, pair, norm)?;
    let defaults = Controls::default();
    let controls = Controls {
        tau_init: cfg.pick_opt(args.tau_init, "tau-init")?,
        samples: cfg.pick(args.samples, "samples", defaults.samples)?,
        max_rejections: cfg.pick(args.max_rejections, "max-rejections", defaults.max_rejections)?,
        l0_first: cfg.switch(args.l0_first, "l0-first")?,
        ..defaults
    };
    Ok((spec, controls))
}

#[derive(Serialize)]
struct SolveSummary {
    problem: String,
    scheme: String,
    points: Vec<f64>,
    alpha: f64,
    intervals: usize,
    error_linf_linf: f64,
}

pub fn solve(cfg: &Config, out: &Path, args: &ProblemArgs, intervals: Option<usize>) -> anyhow::Result<bool> {
    let s = setup(cfg, args)?;
    let intervals = cfg.pick(intervals, "intervals", 16)?;
    if intervals == 0 {
        return Err(UsageError("--intervals must be positive".into()).into());
    }
    let t_end = s.problem.problem.t_end;
    let mut state = SolverState::new(&s.problem.problem, &s.scheme, Arc::clone(&s.system))?;
    for k in 1..=intervals {
        let t_next = if k == intervals { t_end } else { t_end * k as f64 / intervals as f64 };
        let block = state.solve_interval(t_next - state.t_current())?;
        state.push_until(t_next, block);
    }
    let error = measure_error(&state, &s.problem, Controls::default().samples)?;
    let mut csv = String::from("interval,t_start,tau,t,residual,error\n");
    let xs: Vec<f64> = s.system.sample_sites().iter().map(|site| site.x).collect();
    for i in 0..state.mesh().len() {
        let (t0, tau) = (state.mesh().start(i), state.mesh().tau(i));
        for sigma in sample_offsets(Controls::default().samples) {
            let t = t0 + sigma * tau;
            let r = state.residual(t, NormKind::Linf, Side::Left)?.norm;
            let u = s.system.sample_values(&state.u_at(t)?);
            let e = xs.iter().enumerate().fold(0.0f64, |acc, (k, &x)| acc.max((u[k] - (s.problem.u_exact)(x, t)).abs()));
            let _ = writeln!(csv, "{i},{},{},{},{},{}", num(t0), num(tau), num(t), num(r), num(e));
        }
    }
    let summary = SolveSummary {
        problem: s.problem.name.clone(),
        scheme: s.scheme.descriptor(),
        points: s.scheme.points().to_vec(),
        alpha: s.problem.problem.alpha,
        intervals: state.mesh().len(),
        error_linf_linf: error,
    };
    write_json(out, "solve.json", &summary)?;
    write_output(out, "solve_trace.csv", &csv)?;
    println!("{} M={} error={:.3e}", summary.scheme, summary.intervals, error);
    Ok(true)
}

pub fn adapt(cfg: &Config, out: &Path, args: &ProblemArgs, barrier: &BarrierArgs, tol: Option<f64>) -> anyhow::Result<bool> {
    let s = setup(cfg, args)?;
    let tol = cfg.pick(tol, "tol", 1e-3)?;
    let (spec, controls) = barrier_setup(cfg, barrier, &s.system, tol)?;
    let (state, record) = run_adaptive(&s.problem, &s.scheme, Arc::clone(&s.system), &spec, &controls)?;
    // the trace repeats the controller's residual check on the accepted mesh
    let tau_param = state.mesh().tau(0);
    let mut csv = String::from("interval,t_start,tau,rejections,t,residual,barrier\n");
    for (i, entry) in record.log.iter().enumerate() {
        for sigma in sample_offsets(controls.samples) {
            let t = entry.t_start + sigma * entry.tau;
            let r = state.residual(t, spec.norm, Side::Left)?.norm;
            let b = spec.value(state.alpha(), t, tau_param)?;
            let _ = writeln!(csv, "{i},{},{},{},{},{},{}", num(entry.t_start), num(entry.tau), entry.rejections, num(t), num(r), num(b));
        }
    }
    write_json(out, "adapt.json", &record)?;
    write_output(out, "adapt_trace.csv", &csv)?;
    println!("{} TOL={:e} M={} error={:.3e}", record.scheme, tol, record.intervals, record.error_linf_linf);
    if spec.kind == BarrierKind::R0 && record.error_linf_linf > tol {
        log::warn!("measured error {:e} exceeds TOL {tol:e}", record.error_linf_linf);
    }
    Ok(true)
}

pub fn spectrum(
    cfg: &Config,
    out: &Path,
    m: Option<usize>,
    points: Option<String>,
    grid: Option<usize>,
) -> anyhow::Result<bool> {
    let m = cfg.pick(m, "m", 2)?;
    let family = parse_family(&cfg.pick(points, "points", "gauss-legendre".into())?)?;
    let n = cfg.pick(grid, "alpha-grid", 199)?;
    if n == 0 {
        return Err(UsageError("--alpha-grid must be positive".into()).into());
    }
    let scheme = CollocationScheme::new(family, m)?;
    let report = sweep(&scheme, &alpha_grid(n))?;
    #[derive(Serialize)]
    struct Summary<'a> {
        scheme: &'a str,
        degree: usize,
        points: &'a [f64],
        reduced: bool,
        cond_w: f64,
        alpha_values: usize,
        well_posed: bool,
        all_real_parts_positive: bool,
        coeffs_positive: bool,
        min_neg_axis_distance: f64,
    }
    let summary = Summary {
        scheme: &report.scheme,
        degree: report.degree,
        points: &report.points,
        reduced: report.reduced,
        cond_w: report.cond_w,
        alpha_values: n,
        well_posed: report.well_posed(),
        all_real_parts_positive: report.all_real_parts_positive(),
        coeffs_positive: report.coeffs_positive(),
        min_neg_axis_distance: report.min_distance(),
    };
    write_json(out, "spectrum.json", &summary)?;
    write_output(out, "spectrum.csv", &report.to_csv())?;
    println!("{} well-posed={} min distance={:.3e}", report.scheme, summary.well_posed, summary.min_neg_axis_distance);
    Ok(true)
}

pub fn convergence(
    cfg: &Config,
    out: &Path,
    args: &ProblemArgs,
    barrier: &BarrierArgs,
    tols: Option<Vec<f64>>,
) -> anyhow::Result<bool> {
    let s = setup(cfg, args)?;
    let tols = cfg.pick(tols, "tols", vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6])?;
    let (spec, controls) = barrier_setup(cfg, barrier, &s.system, tols.iter().copied().fold(f64::INFINITY, f64::min))?;
    let study = convergence_study(&s.problem, &s.scheme, s.system, &spec, &controls, &tols)?;
    let mut csv = String::from("tol,intervals,error,rate\n");
    for row in &study.rows {
        let rate = row.rate.map(num).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{},{rate}", num(row.tol), row.intervals, num(row.error));
    }
    write_json(out, "convergence.json", &study)?;
    write_output(out, "convergence.csv", &csv)?;
    println!("{} fitted rate {:.3} (M >= 2: {:.3})", s.scheme.descriptor(), study.fitted_rate, study.refined_rate);
    for w in &study.warnings {
        eprintln!("warning: {w}");
    }
    Ok(true)
}

pub fn selftest(out: &Path) -> anyhow::Result<bool> {
    let outcomes = fraccolloc::selftest::run_all();
    for c in &outcomes {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    write_json(out, "selftest.json", &outcomes)?;
    Ok(outcomes.iter().all(|c| c.passed))
}

//! Quick invariant checks bundled with the library, run by `fraccolloc selftest`.

use std::sync::Arc;

use serde::Serialize;

use crate::bench::{measure_error, problem_ex1, problem_polynomial, run_adaptive};
use crate::colloc::{frac_coefficients, CollocationScheme, PointFamily, PolyBlock};
use crate::error::Result;
use crate::fem::{barrier_pair, SpatialSystem};
use crate::field::{Piece, PiecewisePolyField, Side};
use crate::frac::{stable_pow_diff, HistoryKernel};
use crate::special::gamma_fn;
use crate::spectral::{alpha_grid, char_coeffs, pencil_det, sweep};
use crate::stepper::{BarrierKind, BarrierSpec, Controls, NormKind, SolverState};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, check: Result<(bool, String)>) -> CheckOutcome {
    match check {
        Ok((passed, detail)) => CheckOutcome { name, passed, detail },
        Err(e) => CheckOutcome { name, passed: false, detail: format!("error: {e}") },
    }
}

fn gamma_half() -> Result<(bool, String)> {
    let err = (gamma_fn(0.5)? - std::f64::consts::PI.sqrt()).abs();
    Ok((err <= 1e-14, format!("|Γ(1/2) − √π| = {err:.3e}")))
}

fn monomial_history() -> Result<(bool, String)> {
    let (alpha, m): (f64, usize) = (0.5, 4);
    let kernel = HistoryKernel::new(alpha, m)?;
    let breaks: [f64; 4] = [0.0, 0.15, 0.55, 1.0];
    let mut worst: f64 = 0.0;
    for j in 0..=m {
        let mut field = PiecewisePolyField::new(1);
        for k in 0..3 {
            let (a, tau) = (breaks[k], breaks[k + 1] - breaks[k]);
            // (a + τσ)^j expanded in σ
            let mut block = PolyBlock::zeros(m, 1);
            let mut binom = 1.0;
            for q in 0..=j {
                block.0[(q, 0)] = binom * a.powi((j - q) as i32) * tau.powi(q as i32);
                binom = binom * (j - q) as f64 / (q + 1) as f64;
            }
            field.push_until(breaks[k + 1], Piece::Poly(block));
        }
        let c = frac_coefficients(alpha, j)[j];
        for t in [0.1f64, 0.15, 0.4, 0.7, 1.0] {
            let want = c * t.powf(j as f64 + alpha);
            let got = kernel.frac_int_eval(&field, t)?[0];
            worst = worst.max(((got - want) / want).abs());
        }
    }
    let pow = stable_pow_diff(1e12, 0.5)?;
    let pow_err = (pow / 5.000000000000125e-7 - 1.0).abs();
    Ok((worst <= 1e-11 && pow_err <= 1e-12, format!("max relative error {worst:.3e}, pow diff {pow_err:.3e}")))
}

fn spectrum() -> Result<(bool, String)> {
    let mut ok = true;
    let mut least = f64::INFINITY;
    for family in [PointFamily::GaussLegendre, PointFamily::GaussLobatto] {
        let report = sweep(&CollocationScheme::new(family, 3)?, &alpha_grid(199))?;
        ok &= report.well_posed() && report.all_real_parts_positive();
        least = least.min(report.min_distance());
    }
    let scheme = CollocationScheme::new(PointFamily::GaussLegendre, 3)?;
    let a = char_coeffs(&scheme, 0.5)?;
    let sum: f64 = a.iter().sum();
    let det = pencil_det(&scheme, 0.5, -1.0)?;
    ok &= a.iter().all(|&v| v > 0.0) && ((det - sum) / sum).abs() <= 1e-8;
    Ok((ok, format!("min distance to negative axis {least:.3e}")))
}

fn exactness_and_residual() -> Result<(bool, String)> {
    let problem = problem_polynomial(0.6, 1.0, &[0.4, -1.1, 0.9])?;
    let scheme = CollocationScheme::new(PointFamily::GaussLegendre, 2)?;
    let mut state = SolverState::new(&problem.problem, &scheme, Arc::new(SpatialSystem::default_unit_interval()))?;
    for tau in [0.2, 0.45, 0.35] {
        state.advance(tau)?;
    }
    let err = measure_error(&state, &problem, 16)?;
    let mut residual: f64 = 0.0;
    for i in 0..state.mesh().len() {
        for t in state.collocation_times(i) {
            let scale = state.forcing_scale(t).max(1.0);
            residual = residual.max(state.residual(t, NormKind::Linf, Side::Left)?.norm / scale);
        }
    }
    Ok((err <= 1e-9 && residual <= 1e-9, format!("error {err:.3e}, collocation residual {residual:.3e}")))
}

fn tolerance_guarantee() -> Result<(bool, String)> {
    let system = Arc::new(SpatialSystem::default_unit_interval());
    let spec = BarrierSpec::new(BarrierKind::R0, 1e-3, barrier_pair(&system)?, NormKind::Linf)?;
    let scheme = CollocationScheme::new(PointFamily::GaussLegendre, 2)?;
    let (_, rec) = run_adaptive(&problem_ex1(0.4, 1.0)?, &scheme, system, &spec, &Controls::default())?;
    Ok((rec.error_linf_linf <= 1e-3, format!("M = {}, error {:.3e} at TOL 1e-3", rec.intervals, rec.error_linf_linf)))
}

/// Runs every check; never panics.
pub fn run_all() -> Vec<CheckOutcome> {
    vec![
        outcome("gamma", gamma_half()),
        outcome("history-quadrature", monomial_history()),
        outcome("spectrum", spectrum()),
        outcome("exactness", exactness_and_residual()),
        outcome("tolerance-guarantee", tolerance_guarantee()),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}

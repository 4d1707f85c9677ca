//! Interval-by-interval collocation solver in the w-formulation.
//!
//! The unknown is w_τ = ∂^α u_τ, a polynomial of degree m on every interval
//! in the local variable σ = (t − t_{k−1})/τ_k. The discrete solution is
//! recovered as u_τ = u0 + J^α w_τ, so it is continuous by construction.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colloc::{build_matrices, CollocMatrices, CollocationScheme, PolyBlock};
use crate::error::{invalid, Error, Result};
use crate::fem::{BarrierPair, SpatialSystem};
use crate::field::{Piece, PiecewisePolyField, Side, TemporalMesh};
use crate::frac::{stable_pow_diff, HistoryKernel};
use crate::special::recip_gamma_one_minus;

pub type SpaceFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// ∂^α u + L u = f on Ω × (0, T] with u(·, 0) = u0.
#[derive(Clone)]
pub struct Problem {
    pub alpha: f64,
    pub t_end: f64,
    pub u0: SpaceFn,
    /// f(x, t)
    pub f: SpaceTimeFn,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem").field("alpha", &self.alpha).field("t_end", &self.t_end).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L2,
    Linf,
}

/// How the residual w_τ + L u_τ − f is measured in space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualKind {
    /// w_h + Mass⁻¹(Stiff u_h − F), the residual of the Galerkin system.
    /// It vanishes at every collocation point by construction.
    #[default]
    Discrete,
    /// Pointwise with L applied cellwise to the finite-element polynomial.
    /// Includes the spatial projection error, so it does not vanish at
    /// collocation points in general.
    Strong,
}

/// Residual values at the sample sites (or Gauss points for L2).
#[derive(Debug, Clone)]
pub struct ResidualSample {
    pub values: DVector<f64>,
    pub norm: f64,
}

/// Collocation solver for one problem on a growing temporal mesh.
#[derive(Clone)]
pub struct SolverState {
    scheme: CollocationScheme,
    mats: CollocMatrices,
    system: Arc<SpatialSystem>,
    alpha: f64,
    kernel: HistoryKernel,
    field: PiecewisePolyField,
    u0: DVector<f64>,
    f: SpaceTimeFn,
    residual_kind: ResidualKind,
}

impl SolverState {
    pub fn new(problem: &Problem, scheme: &CollocationScheme, system: Arc<SpatialSystem>) -> Result<Self> {
        if !(problem.alpha > 0.0 && problem.alpha <= 1.0) {
            return invalid(format!("alpha must lie in (0,1], got {}", problem.alpha));
        }
        if !(problem.t_end > 0.0 && problem.t_end.is_finite()) {
            return invalid(format!("final time must be positive, got {}", problem.t_end));
        }
        if scheme.is_reduced() && scheme.degree() == 0 {
            // w is fixed by data at t_{k−1} alone, so the step is explicit
            log::warn!("θ = (0) with m = 0 is an explicit scheme and is unstable for stiff operators");
        }
        let mats = build_matrices(scheme, problem.alpha)?;
        let kernel = HistoryKernel::new(problem.alpha, scheme.degree())?;
        let u0 = system.interpolate(|x| (problem.u0)(x));
        Ok(Self {
            scheme: scheme.clone(),
            mats,
            alpha: problem.alpha,
            kernel,
            field: PiecewisePolyField::new(system.ndof()),
            u0,
            f: Arc::clone(&problem.f),
            system,
            residual_kind: ResidualKind::default(),
        })
    }

    pub fn with_residual_kind(mut self, kind: ResidualKind) -> Self {
        self.residual_kind = kind;
        self
    }

    pub fn scheme(&self) -> &CollocationScheme {
        &self.scheme
    }

    pub fn matrices(&self) -> &CollocMatrices {
        &self.mats
    }

    pub fn system(&self) -> &SpatialSystem {
        &self.system
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn field(&self) -> &PiecewisePolyField {
        &self.field
    }

    pub fn mesh(&self) -> &TemporalMesh {
        self.field.mesh()
    }

    pub fn u0(&self) -> &DVector<f64> {
        &self.u0
    }

    /// End of the last accepted (or tentatively pushed) interval.
    pub fn t_current(&self) -> f64 {
        self.field.mesh().t_end()
    }

    /// Load vector (f(·, t), φ_i).
    pub fn load(&self, t: f64) -> DVector<f64> {
        self.system.load_vector(|x| (self.f)(x, t))
    }

    /// Contribution of all stored intervals to J^α w at t > t_current.
    fn history(&self, t: f64) -> Result<DVector<f64>> {
        if self.field.is_empty() {
            Ok(DVector::zeros(self.system.ndof()))
        } else {
            self.kernel.history_eval(&self.field, t)
        }
    }

    /// w_τ(t_{k−1}⁺) for θ0 = 0 schemes, from Mass w = F(t) − Stiff(u0 + J^α w(t)).
    pub fn initial_w(&self) -> Result<DVector<f64>> {
        let t = self.t_current();
        let ju = self.kernel.frac_int_eval(&self.field, t)?;
        let rhs = self.load(t) - self.system.stiff() * (&self.u0 + ju);
        Ok(self.system.mass_solve(&rhs))
    }

    /// Right-hand sides F(t_ℓ) − Stiff(u0 + H(t_ℓ)) at the given relative points.
    fn point_rhs(&self, tau: f64, thetas: &[f64]) -> Result<Vec<DVector<f64>>> {
        let t0 = self.t_current();
        thetas
            .iter()
            .map(|&th| {
                let t = t0 + th * tau;
                let h = self.history(t)?;
                Ok(self.load(t) - self.system.stiff() * (&self.u0 + h))
            })
            .collect()
    }

    /// Solves the collocation equations on (t_current, t_current + τ] without
    /// storing the result.
    pub fn solve_interval(&self, tau: f64) -> Result<PolyBlock> {
        if !(tau > 0.0 && tau.is_finite()) {
            return invalid(format!("step size must be positive, got {tau}"));
        }
        let n = self.system.ndof();
        let m = self.scheme.degree();
        let ta = tau.powf(self.alpha);
        let mass = self.system.mass();
        let stiff = self.system.stiff();
        let mut coeffs = DMatrix::zeros(m + 1, n);

        if self.scheme.is_reduced() {
            let v0 = self.initial_w()?;
            coeffs.set_row(0, &v0.transpose());
            if m == 0 {
                return Ok(PolyBlock(coeffs));
            }
            let r = self.mats.reduced.as_ref().expect("reduced matrices exist for m >= 1");
            let theta = &self.scheme.points()[1..];
            let base = self.point_rhs(tau, theta)?;
            let c0 = self.mats.d2[0];
            let mv0 = mass * &v0;
            let kv0 = stiff * &v0;
            let mut rhs = DVector::zeros(m * n);
            for (l, b) in base.iter().enumerate() {
                let th = theta[l];
                let row = (b - &mv0 - &kv0 * (ta * c0 * th.powf(self.alpha))) / th;
                rhs.rows_mut(l * n, n).copy_from(&row);
            }
            let b_hat = crate::colloc::scale_rows_cols(&r.w_hat, &r.d1_hat, &r.d2_hat);
            let a = r.w_hat.kronecker(mass) + b_hat.kronecker(stiff) * ta;
            let sol = dense_solve(a, &rhs, "reduced collocation block system")?;
            for j in 0..m {
                coeffs.set_row(j + 1, &sol.rows(j * n, n).transpose());
            }
        } else {
            let base = self.point_rhs(tau, self.scheme.points())?;
            let mut rhs = DVector::zeros((m + 1) * n);
            for (l, b) in base.iter().enumerate() {
                rhs.rows_mut(l * n, n).copy_from(b);
            }
            let a = self.mats.w.kronecker(mass) + self.mats.d1_w_d2().kronecker(stiff) * ta;
            let sol = dense_solve(a, &rhs, "collocation block system")?;
            for j in 0..=m {
                coeffs.set_row(j, &sol.rows(j * n, n).transpose());
            }
        }
        Ok(PolyBlock(coeffs))
    }

    /// Same solve as [`Self::solve_interval`] for θ0 > 0 schemes, decoupled
    /// through the eigenpairs of the symmetric pencil (Stiff, Mass) into one
    /// (m+1)×(m+1) system per mode. Used to cross-validate the dense path.
    pub fn solve_interval_modal(&self, tau: f64) -> Result<PolyBlock> {
        if self.scheme.is_reduced() {
            return Err(Error::NotApplicable("modal path is implemented for θ0 > 0 schemes".into()));
        }
        let stiff = self.system.stiff();
        if (stiff - stiff.transpose()).amax() > 1e-12 * stiff.amax() {
            return Err(Error::NotApplicable("modal path needs a symmetric stiffness matrix".into()));
        }
        let n = self.system.ndof();
        let m = self.scheme.degree();
        let ta = tau.powf(self.alpha);
        // Φ with Φᵀ Mass Φ = I and Φᵀ Stiff Φ = diag(μ)
        let chol = nalgebra::Cholesky::new(self.system.mass().clone()).expect("mass is SPD");
        let linv = chol.l().try_inverse().expect("Cholesky factor is invertible");
        let c = &linv * stiff * linv.transpose();
        let eig = SymmetricEigen::new((&c + c.transpose()) * 0.5);
        let phi = linv.transpose() * &eig.eigenvectors;
        let base = self.point_rhs(tau, self.scheme.points())?;
        let projected: Vec<DVector<f64>> = base.iter().map(|b| phi.transpose() * b).collect();
        let b = self.mats.d1_w_d2();
        let mut modal = DMatrix::zeros(m + 1, n);
        for i in 0..n {
            let a = &self.mats.w + &b * (ta * eig.eigenvalues[i]);
            let r = DVector::from_iterator(m + 1, projected.iter().map(|p| p[i]));
            let y = dense_solve(a, &r, "modal collocation system")?;
            modal.set_column(i, &y);
        }
        Ok(PolyBlock(modal * phi.transpose()))
    }

    /// Stores a solved interval of length τ.
    pub fn push(&mut self, tau: f64, block: PolyBlock) {
        self.field.push(tau, Piece::Poly(block));
    }

    /// Stores a solved interval ending exactly at `t_next`.
    pub fn push_until(&mut self, t_next: f64, block: PolyBlock) {
        self.field.push_until(t_next, Piece::Poly(block));
    }

    /// Removes the last interval.
    pub fn pop(&mut self) -> Option<Piece> {
        self.field.pop()
    }

    /// Solves and stores one interval; returns its coefficient block.
    pub fn advance(&mut self, tau: f64) -> Result<PolyBlock> {
        let block = self.solve_interval(tau)?;
        self.push(tau, block.clone());
        Ok(block)
    }

    /// The L0 first step on (0, τ1]: u1 solves (g Mass + Stiff) u1 = g Mass u0 + F(τ1)
    /// with g = τ1^{−α}/Γ(1−α). The interval stores w = (u1 − u0) t^{−α}/Γ(1−α).
    pub fn l0_first_interval(&mut self, tau: f64) -> Result<DVector<f64>> {
        if !self.field.is_empty() {
            return invalid("the L0 step is only available on the first interval");
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return invalid(format!("step size must be positive, got {tau}"));
        }
        if self.alpha >= 1.0 {
            return invalid("the L0 step needs alpha < 1");
        }
        let g = tau.powf(-self.alpha) * recip_gamma_one_minus(self.alpha);
        let mass = self.system.mass();
        let a = mass * g + self.system.stiff();
        let rhs = mass * &self.u0 * g + self.load(tau);
        let u1 = dense_solve(a, &rhs, "L0 first step")?;
        self.field.push(tau, Piece::Singular { jump: &u1 - &self.u0 });
        Ok(u1)
    }

    /// u_τ(t) = u0 + J^α w_τ(t) as a DOF vector.
    pub fn u_at(&self, t: f64) -> Result<DVector<f64>> {
        if t < 0.0 {
            return invalid(format!("negative time {t}"));
        }
        Ok(&self.u0 + self.kernel.frac_int_eval(&self.field, t)?)
    }

    /// w_τ(t) with the requested one-sided limit at breakpoints.
    pub fn w_at(&self, t: f64, side: Side) -> Result<DVector<f64>> {
        self.field.eval(t, side, self.alpha)
    }

    /// Residual w_τ + L u_τ − f at time t, measured in the given norm.
    pub fn residual(&self, t: f64, norm: NormKind, side: Side) -> Result<ResidualSample> {
        if !(t > 0.0) {
            return invalid(format!("residual needs t > 0, got {t}"));
        }
        let w = self.w_at(t, side)?;
        let u = self.u_at(t)?;
        let sys = &*self.system;
        let values = match (self.residual_kind, norm) {
            (ResidualKind::Strong, NormKind::Linf) => {
                let f = DVector::from_iterator(sys.sample_sites().len(), sys.sample_sites().iter().map(|s| (self.f)(s.x, t)));
                sys.sample_values(&w) + sys.sample_lu(&u) - f
            }
            (ResidualKind::Strong, NormKind::L2) => {
                let (sites, _) = sys.quad_sites();
                let f = DVector::from_iterator(sites.len(), sites.iter().map(|s| (self.f)(s.x, t)));
                sys.quad_values(&w) + sys.quad_lu(&u) - f
            }
            (ResidualKind::Discrete, _) => {
                let r = &w + sys.mass_solve(&(sys.stiff() * &u - self.load(t)));
                match norm {
                    NormKind::Linf => sys.sample_values(&r),
                    NormKind::L2 => sys.quad_values(&r),
                }
            }
        };
        let norm_value = match norm {
            NormKind::Linf => values.amax(),
            NormKind::L2 => {
                let (_, weights) = sys.quad_sites();
                values.iter().zip(weights).map(|(v, w)| w * v * v).sum::<f64>().sqrt()
            }
        };
        Ok(ResidualSample { values, norm: norm_value })
    }

    pub fn residual_norm(&self, t: f64, norm: NormKind) -> Result<f64> {
        Ok(self.residual(t, norm, Side::Left)?.norm)
    }

    /// max over the L∞ sample set of |f(·, t)|.
    pub fn forcing_scale(&self, t: f64) -> f64 {
        self.system.sample_sites().iter().map(|s| (self.f)(s.x, t).abs()).fold(0.0, f64::max)
    }

    /// Collocation times of interval `i`.
    pub fn collocation_times(&self, i: usize) -> Vec<f64> {
        let mesh = self.mesh();
        let (t0, tau) = (mesh.start(i), mesh.tau(i));
        self.scheme.points().iter().map(|th| t0 + th * tau).collect()
    }
}

fn dense_solve(a: DMatrix<f64>, rhs: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let singular = || Error::Singular { context: context.into(), cond: condition_estimate(&a) };
    let x = lu.solve(rhs).ok_or_else(singular)?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(singular())
    }
}

fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    if sv.min() == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / sv.min()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BarrierKind {
    R0,
    R1,
}

/// Residual barrier TOL·R(t)/(1+ω).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    pub kind: BarrierKind,
    pub tol: f64,
    pub lambda: f64,
    pub omega: f64,
    pub norm: NormKind,
}

impl BarrierSpec {
    pub fn new(kind: BarrierKind, tol: f64, pair: BarrierPair, norm: NormKind) -> Result<Self> {
        let spec = Self { kind, tol, lambda: pair.lambda, omega: pair.omega, norm };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return invalid(format!("tolerance must be positive, got {}", self.tol));
        }
        if !(self.omega >= 0.0) || !self.lambda.is_finite() {
            return invalid(format!("invalid barrier pair (λ={}, ω={})", self.lambda, self.omega));
        }
        if self.norm == NormKind::L2 && self.omega != 0.0 {
            return invalid("the L2 barrier requires ω = 0");
        }
        Ok(())
    }

    /// TOL·R(t)/(1+ω); `tau_param` ∈ (0, t_1] is used by R1 only.
    pub fn value(&self, alpha: f64, t: f64, tau_param: f64) -> Result<f64> {
        if !(t > 0.0) {
            return invalid(format!("barrier needs t > 0, got {t}"));
        }
        let rg = recip_gamma_one_minus(alpha);
        let r = match self.kind {
            BarrierKind::R0 => t.powf(-alpha) * rg + self.lambda,
            BarrierKind::R1 => {
                if !(tau_param > 0.0) {
                    return invalid(format!("R1 needs a positive τ parameter, got {tau_param}"));
                }
                let beta = 1.0 - alpha;
                // t^{1−α} − ((t−τ)⁺)^{1−α}
                let bracket = if t > tau_param {
                    tau_param.powf(beta) * stable_pow_diff(t / tau_param, beta)?
                } else {
                    t.powf(beta)
                };
                let head = if beta == 0.0 { 0.0 } else { bracket / (t * tau_param.powf(beta)) * rg };
                head + self.lambda * tau_param.max(t).powf(alpha - 1.0)
            }
        };
        Ok(self.tol * r / (1.0 + self.omega))
    }
}

/// Step-size controller settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    /// First candidate step; `None` means the whole interval (0, T].
    pub tau_init: Option<f64>,
    pub growth: f64,
    pub shrink: f64,
    pub max_rejections: usize,
    pub samples: usize,
    pub l0_first: bool,
    /// Evaluate the residual samples of a candidate interval in parallel.
    pub parallel_samples: bool,
}

impl Default for Controls {
    fn default() -> Self {
        Self {
            tau_init: None,
            growth: 2.0,
            shrink: 0.5,
            max_rejections: 60,
            samples: 16,
            l0_first: false,
            parallel_samples: false,
        }
    }
}

impl Controls {
    pub fn validate(&self, t_end: f64) -> Result<()> {
        if let Some(t) = self.tau_init {
            if !(t > 0.0 && t <= t_end) {
                return invalid(format!("initial step {t} must lie in (0, T]"));
            }
        }
        if !(self.growth >= 1.0 && self.growth.is_finite()) {
            return invalid(format!("growth factor must be >= 1, got {}", self.growth));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return invalid(format!("shrink factor must lie in (0,1), got {}", self.shrink));
        }
        if self.samples == 0 {
            return invalid("at least one residual sample per interval is required");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalLog {
    pub t_start: f64,
    pub tau: f64,
    pub rejections: usize,
    /// max over the samples of residual/barrier
    pub max_ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub intervals: Vec<IntervalLog>,
    pub total_rejections: usize,
}

/// Relative sample positions (i − 1/2)/S.
pub fn sample_offsets(samples: usize) -> Vec<f64> {
    (0..samples).map(|i| (i as f64 + 0.5) / samples as f64).collect()
}

fn max_ratio(state: &SolverState, spec: &BarrierSpec, t0: f64, tau: f64, tau_param: f64, controls: &Controls) -> Result<f64> {
    let ratio_at = |s: f64| -> Result<f64> {
        let t = t0 + s * tau;
        let r = state.residual(t, spec.norm, Side::Left)?.norm;
        Ok(r / spec.value(state.alpha, t, tau_param)?)
    };
    let offsets = sample_offsets(controls.samples);
    let ratios: Vec<f64> = if controls.parallel_samples {
        offsets.par_iter().map(|&s| ratio_at(s)).collect::<Result<_>>()?
    } else {
        offsets.iter().map(|&s| ratio_at(s)).collect::<Result<_>>()?
    };
    // NaN must reject, so compare explicitly
    Ok(ratios.into_iter().fold(0.0, |a, r| if r.is_nan() || a.is_nan() { f64::NAN } else { a.max(r) }))
}

/// Adaptive run: every interval is accepted only when the residual stays below
/// the barrier at all residual samples.
pub fn adapt_run(
    problem: &Problem,
    scheme: &CollocationScheme,
    system: Arc<SpatialSystem>,
    spec: &BarrierSpec,
    controls: &Controls,
) -> Result<(SolverState, RunLog)> {
    spec.validate()?;
    controls.validate(problem.t_end)?;
    let mut state = SolverState::new(problem, scheme, system)?;
    let t_end = problem.t_end;
    let mut log = RunLog::default();
    let mut candidate = controls.tau_init.unwrap_or(t_end);
    let mut tau_param = f64::NAN;

    while state.t_current() < t_end {
        let t0 = state.t_current();
        let first = state.field().is_empty();
        let mut tau = candidate.min(t_end - t0);
        let mut rejections = 0;
        loop {
            let last = t0 + tau >= t_end * (1.0 - 4.0 * f64::EPSILON);
            if first && controls.l0_first {
                state.l0_first_interval(if last { t_end } else { tau })?;
            } else {
                let block = state.solve_interval(tau)?;
                if last {
                    state.push_until(t_end, block);
                } else {
                    state.push(tau, block);
                }
            }
            let tau_eff = state.t_current() - t0;
            let tp = if first { tau_eff } else { tau_param };
            let ratio = max_ratio(&state, spec, t0, tau_eff, tp, controls)?;
            if ratio <= 1.0 {
                if first {
                    tau_param = tau_eff;
                }
                log.intervals.push(IntervalLog { t_start: t0, tau: tau_eff, rejections, max_ratio: ratio });
                log.total_rejections += rejections;
                candidate = controls.growth * tau_eff;
                break;
            }
            state.pop();
            rejections += 1;
            if rejections > controls.max_rejections {
                return Err(Error::TooManyRejections { t: t0, tau, rejections, ratio });
            }
            tau *= controls.shrink;
        }
    }
    Ok((state, log))
}

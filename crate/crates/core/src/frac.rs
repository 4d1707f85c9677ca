//! Riemann–Liouville integrals J^α of piecewise polynomials.
//!
//! On the interval containing the evaluation time the monomial closed form
//! `J^α σ^j = c_j σ^{j+α}` is exact. Each elapsed interval contributes a
//! history term which is split as
//!
//! ```text
//! τ^α/Γ(α) [ p(1)/α · (Θ^α - (Θ-1)^α) + ∫_0^1 (Θ-σ)^{α-1} (p(σ) - p(1)) dσ ]
//! ```
//!
//! where the power difference is evaluated without cancellation and the
//! remainder integrand is bounded; the remainder uses fixed Gauss panels graded
//! towards σ = 1 so that every panel stays well separated from the kernel's
//! branch point at σ = Θ.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::DVector;

use crate::colloc::{frac_coefficients, PolyBlock};
use crate::error::{invalid, Error, Result};
use crate::field::{PiecewisePolyField, Piece, Side};
use crate::quadrature::gauss_legendre_unit;
use crate::special::{gamma_pos, regularized_beta};

pub use crate::special::gamma_fn;

/// Each remainder panel satisfies (distance to the branch point) ≥ 4 · (half length).
const PANEL_SEPARATION: f64 = 4.0;
const CACHE_LIMIT: usize = 1 << 18;

/// J^α σ^j evaluated at σ = θ, i.e. c_j θ^{j+α}.
pub fn frac_int_monomial(j: usize, alpha: f64, theta: f64) -> f64 {
    frac_int_power(j as f64, alpha, theta)
}

/// J^α t^γ = Γ(γ+1)/Γ(γ+1+α) t^{γ+α} for real γ > -1.
pub fn frac_int_power(gamma_exp: f64, alpha: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let coef = if gamma_exp.fract() == 0.0 && gamma_exp >= 0.0 {
        frac_coefficients(alpha, gamma_exp as usize)[gamma_exp as usize]
    } else {
        gamma_pos(gamma_exp + 1.0) / gamma_pos(gamma_exp + 1.0 + alpha)
    };
    coef * t.powf(gamma_exp + alpha)
}

/// Θ^α - (Θ-1)^α for Θ ≥ 1, free of cancellation for large Θ.
pub fn stable_pow_diff(theta: f64, alpha: f64) -> Result<f64> {
    if !(theta >= 1.0) {
        return invalid(format!("stable_pow_diff requires Θ >= 1, got {theta}"));
    }
    let log_ratio = if theta <= 2.0 {
        // Θ - 1 is exact here
        ((theta - 1.0) / theta).ln()
    } else {
        (-1.0 / theta).ln_1p()
    };
    Ok(theta.powf(alpha) * -(alpha * log_ratio).exp_m1())
}

/// (1+δ)^α - δ^α for a gap δ = Θ - 1 > 0 given directly.
pub(crate) fn pow_diff_from_gap(gap: f64, alpha: f64) -> f64 {
    let theta = 1.0 + gap;
    let log_ratio = if gap <= 1.0 { (gap / theta).ln() } else { (-1.0 / theta).ln_1p() };
    theta.powf(alpha) * -(alpha * log_ratio).exp_m1()
}

/// ∂_t^α t^γ = coef · t^exponent. Returns `(0, 0)` for γ = 0.
pub fn caputo_monomial(gamma_exp: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(gamma_exp >= 0.0) {
        return invalid(format!("caputo_monomial needs γ >= 0, got {gamma_exp}"));
    }
    if gamma_exp == 0.0 {
        return Ok((0.0, 0.0));
    }
    let coef = gamma_pos(gamma_exp + 1.0) / gamma_pos(gamma_exp + 1.0 - alpha);
    Ok((coef, gamma_exp - alpha))
}

/// Precomputed data for evaluating J^α of degree-m interval polynomials.
#[derive(Debug)]
pub struct HistoryKernel {
    alpha: f64,
    degree: usize,
    quad_order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    c: Vec<f64>,
    inv_gamma_alpha: f64,
    inv_gamma_alpha1: f64,
    cache: RwLock<HashMap<u64, Arc<[f64]>>>,
}

impl Clone for HistoryKernel {
    fn clone(&self) -> Self {
        Self::with_quad_order(self.alpha, self.degree, self.quad_order)
            .expect("parameters were validated on construction")
    }
}

impl HistoryKernel {
    /// Default remainder quadrature order max(m+4, 8).
    pub fn new(alpha: f64, degree: usize) -> Result<Self> {
        Self::with_quad_order(alpha, degree, (degree + 4).max(8))
    }

    pub fn with_quad_order(alpha: f64, degree: usize, quad_order: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return invalid(format!("alpha must lie in (0,1], got {alpha}"));
        }
        if quad_order < degree + 1 {
            return invalid(format!("quadrature order {quad_order} < m+1 = {}", degree + 1));
        }
        let (nodes, weights) = gauss_legendre_unit(quad_order);
        Ok(Self {
            alpha,
            degree,
            quad_order,
            nodes,
            weights,
            c: frac_coefficients(alpha, degree),
            inv_gamma_alpha: 1.0 / gamma_pos(alpha),
            inv_gamma_alpha1: 1.0 / gamma_pos(alpha + 1.0),
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order
    }

    /// Weights `c_j θ^{j+α}`, j = 0..=m, for a point inside the current interval.
    pub fn local_weights(&self, theta: f64) -> Vec<f64> {
        if theta <= 0.0 {
            return vec![0.0; self.degree + 1];
        }
        let mut pow = theta.powf(self.alpha);
        self.c
            .iter()
            .map(|&cj| {
                let v = cj * pow;
                pow *= theta;
                v
            })
            .collect()
    }

    /// Weights h_j with `history = τ^α Σ_j h_j v_j` for an evaluation point
    /// `gap = Θ - 1 > 0` interval lengths past the end of the interval.
    ///
    /// At `gap = 0` the contribution coincides with the local closed form at θ = 1.
    pub fn history_weights(&self, gap: f64) -> Vec<f64> {
        if gap <= 0.0 {
            return self.c.clone();
        }
        let m = self.degree;
        let mut h = vec![0.0; m + 1];
        let h0 = pow_diff_from_gap(gap, self.alpha) * self.inv_gamma_alpha1;
        h[0] = h0;
        if m == 0 {
            return h;
        }
        // remainder ∫_0^1 (gap+s)^{α-1} ((1-s)^j - 1) ds, with s = 1 - σ
        let am1 = self.alpha - 1.0;
        let mut acc = vec![0.0; m + 1];
        let mut a = 0.0;
        while a < 1.0 {
            let len = ((gap + a) * 2.0 / PANEL_SEPARATION).min(1.0 - a);
            let b = if a + len >= 1.0 - 1e-15 { 1.0 } else { a + len };
            let len = b - a;
            for (&x, &wq) in self.nodes.iter().zip(&self.weights) {
                let s = a + len * x;
                let kern = wq * len * (gap + s).powf(am1);
                let one_minus = 1.0 - s;
                // g_j = (1-s)^j - 1 built without cancellation
                let mut g = 0.0;
                for slot in acc.iter_mut().skip(1) {
                    g = one_minus * g - s;
                    *slot += kern * g;
                }
            }
            a = b;
        }
        for j in 1..=m {
            h[j] = h0 + acc[j] * self.inv_gamma_alpha;
        }
        h
    }

    /// As [`Self::history_weights`], memoised by the bit pattern of `gap`.
    pub fn history_weights_cached(&self, gap: f64) -> Arc<[f64]> {
        let key = gap.to_bits();
        if let Some(w) = self.cache.read().unwrap().get(&key) {
            return Arc::clone(w);
        }
        let w: Arc<[f64]> = self.history_weights(gap).into();
        let mut cache = self.cache.write().unwrap();
        if cache.len() < CACHE_LIMIT {
            cache.insert(key, Arc::clone(&w));
        }
        w
    }

    /// Contribution of one elapsed interval `[t_start, t_start+τ]` to J^α w at `t`.
    pub fn history(&self, block: &PolyBlock, t_start: f64, tau: f64, t: f64) -> Result<DVector<f64>> {
        let t_stop = t_start + tau;
        if !(t > t_stop) {
            return invalid(format!(
                "history contribution needs t > t_end of the interval ({t} <= {t_stop}); use the local closed form"
            ));
        }
        let mut out = DVector::zeros(block.ndof());
        self.add_history(&mut out, block, tau, (t - t_stop) / tau);
        Ok(out)
    }

    fn add_history(&self, out: &mut DVector<f64>, block: &PolyBlock, tau: f64, gap: f64) {
        let scale = tau.powf(self.alpha);
        if self.degree == 0 || block.degree() == 0 {
            let h0 = pow_diff_from_gap(gap, self.alpha) * self.inv_gamma_alpha1;
            out.axpy(scale * h0, &block.coeffs().row(0).transpose(), 1.0);
            return;
        }
        let h = self.history_weights_cached(gap);
        let h = DVector::from_column_slice(&h[..block.degree() + 1]);
        out.gemv_tr(scale, block.coeffs(), &h, 1.0);
    }

    fn add_local(&self, out: &mut DVector<f64>, block: &PolyBlock, tau: f64, theta: f64) {
        let lw = self.local_weights(theta);
        let h = DVector::from_column_slice(&lw[..block.degree() + 1]);
        out.gemv_tr(tau.powf(self.alpha), block.coeffs(), &h, 1.0);
    }

    fn add_elapsed(&self, out: &mut DVector<f64>, field: &PiecewisePolyField, count: usize, t: f64) {
        let mesh = field.mesh();
        for (i, piece) in field.pieces().iter().enumerate().take(count) {
            let tau = mesh.tau(i);
            let t_stop = mesh.start(i + 1);
            match piece {
                Piece::Poly(block) => self.add_history(out, block, tau, (t - t_stop) / tau),
                Piece::Singular { jump } => {
                    // J^α[t^{-α}]/Γ(1-α) restricted to (0, t1] is the incomplete beta I_{t1/t}(1-α, α)
                    let frac = regularized_beta(t_stop / t, (t - t_stop) / t, 1.0 - self.alpha, self.alpha);
                    out.axpy(frac, jump, 1.0);
                }
            }
        }
    }

    /// J^α w_τ at `t`, summing every elapsed interval and the local part.
    pub fn frac_int_eval(&self, field: &PiecewisePolyField, t: f64) -> Result<DVector<f64>> {
        let mesh = field.mesh();
        let mut out = DVector::zeros(field.ndof());
        if t == 0.0 {
            return Ok(out);
        }
        let k = mesh.locate(t, Side::Left)?;
        self.add_elapsed(&mut out, field, k, t);
        let tau = mesh.tau(k);
        let theta = ((t - mesh.start(k)) / tau).clamp(0.0, 1.0);
        match &field.pieces()[k] {
            Piece::Poly(block) => self.add_local(&mut out, block, tau, theta),
            Piece::Singular { jump } => out.axpy(1.0, jump, 1.0),
        }
        Ok(out)
    }

    /// Contribution of every interval of `field` to J^α w at a point `t` at or
    /// beyond its last breakpoint.
    pub fn history_eval(&self, field: &PiecewisePolyField, t: f64) -> Result<DVector<f64>> {
        let t_end = field.mesh().t_end();
        if !(t >= t_end && t > 0.0) {
            return invalid(format!("history evaluation needs t >= {t_end}, got {t}"));
        }
        let mut out = DVector::zeros(field.ndof());
        self.add_elapsed(&mut out, field, field.len(), t);
        Ok(out)
    }
}

/// J^α w_τ(t) for a field, using a fresh kernel sized for `degree`.
pub fn frac_int_eval(field: &PiecewisePolyField, alpha: f64, degree: usize, t: f64) -> Result<DVector<f64>> {
    if t > field.mesh().t_end() {
        return Err(Error::OutsideMesh { t, t_end: field.mesh().t_end() });
    }
    HistoryKernel::new(alpha, degree)?.frac_int_eval(field, t)
}

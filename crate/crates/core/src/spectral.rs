//! Well-posedness analysis of a collocation scheme.
//!
//! Each interval solve is uniquely solvable for every τ and every coercive
//! spatial operator as long as the matrix M = W⁻¹D1⁻¹WD2⁻¹ (or its hatted
//! θ0 = 0 reduction) has no eigenvalue on the closed negative real axis.
//! This module forms M, computes its spectrum over α-sweeps, and expands the
//! characteristic polynomial det(M1 − λM2) into generalised Vandermonde
//! subset determinants whose positivity certifies the same property.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::colloc::{build_matrices, CollocationScheme};
use crate::eigen::eigenvalues;
use crate::error::{invalid, Error, Result};

/// Largest degree accepted by [`char_coeffs`] (2^{m+1} subsets).
pub const MAX_CHAR_DEGREE: usize = 10;

/// Degree from which the sweep warns about Vandermonde conditioning.
pub const CONDITIONING_WARN_DEGREE: usize = 9;

/// The well-posedness matrix together with the 2-norm condition number of the
/// Vandermonde matrix it was formed from.
#[derive(Debug, Clone)]
pub struct WellPosednessMatrix {
    pub m: DMatrix<f64>,
    pub cond_w: f64,
}

fn cond2(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// W⁻¹ D1⁻¹ W D2⁻¹ given W and the two diagonals.
fn form_m(w: &DMatrix<f64>, d1: &DVector<f64>, d2: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    let rhs = DMatrix::from_fn(n, n, |i, j| w[(i, j)] / (d1[i] * d2[j]));
    w.clone().lu().solve(&rhs).ok_or_else(|| Error::Singular {
        context: "Vandermonde matrix W".into(),
        cond: cond2(w),
    })
}

/// Builds M for the scheme; uses the hatted reduction when θ0 = 0.
pub fn build_m(scheme: &CollocationScheme, alpha: f64) -> Result<WellPosednessMatrix> {
    let mats = build_matrices(scheme, alpha)?;
    if scheme.is_reduced() {
        let r = mats.reduced.as_ref().ok_or_else(|| {
            Error::InvalidArgument("θ0 = 0 with m = 0 leaves an empty reduced system".into())
        })?;
        Ok(WellPosednessMatrix { m: form_m(&r.w_hat, &r.d1_hat, &r.d2_hat)?, cond_w: cond2(&r.w_hat) })
    } else {
        Ok(WellPosednessMatrix { m: form_m(&mats.w, &mats.d1, &mats.d2)?, cond_w: cond2(&mats.w) })
    }
}

/// Distance of a spectrum to the closed negative real axis (origin included).
pub fn neg_axis_distance(eigs: &[Complex64]) -> f64 {
    eigs.iter()
        .map(|z| if z.re < 0.0 { z.im.abs() } else { z.norm() })
        .fold(f64::INFINITY, f64::min)
}

/// Determinant by LU with partial pivoting.
fn det(a: DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        1.0
    } else {
        a.lu().determinant()
    }
}

/// Coefficients (a_0, ..., a_{m+1}) with det(M1 − λM2) = Σ_j (−λ)^j a_j,
/// where M1 = W D2⁻¹ and M2 = D1 W.
///
/// a_j sums the determinants of all matrices taking exactly j columns from
/// M2 and the rest from M1.
pub fn char_coeffs(scheme: &CollocationScheme, alpha: f64) -> Result<Vec<f64>> {
    if scheme.is_reduced() {
        return invalid("characteristic coefficients require θ0 > 0; analyse the reduced M directly");
    }
    let m = scheme.degree();
    if m > MAX_CHAR_DEGREE {
        return invalid(format!("subset enumeration supports m <= {MAX_CHAR_DEGREE}, got {m}"));
    }
    let (m1, m2) = pencil(scheme, alpha)?;
    let n = m + 1;
    let mut a = vec![0.0; n + 1];
    let mut mi = DMatrix::zeros(n, n);
    for mask in 0u32..(1 << n) {
        for k in 0..n {
            let src = if mask & (1 << k) != 0 { &m2 } else { &m1 };
            mi.set_column(k, &src.column(k));
        }
        a[mask.count_ones() as usize] += det(mi.clone());
    }
    Ok(a)
}

/// The pencil (M1, M2) = (W D2⁻¹, D1 W).
pub fn pencil(scheme: &CollocationScheme, alpha: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mats = build_matrices(scheme, alpha)?;
    let w = &mats.w;
    let m1 = DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| w[(i, j)] / mats.d2[j]);
    let m2 = DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| mats.d1[i] * w[(i, j)]);
    Ok((m1, m2))
}

/// det(M1 − λM2) evaluated directly, for cross-checking [`char_coeffs`].
pub fn pencil_det(scheme: &CollocationScheme, alpha: f64, lambda: f64) -> Result<f64> {
    let (m1, m2) = pencil(scheme, alpha)?;
    Ok(det(m1 - m2 * lambda))
}

/// Determinant of the generalised Vandermonde matrix [θ_i^{β_k}].
///
/// Positivity is checked, not assumed: for strictly increasing θ ⊂ (0,1] and
/// strictly increasing β a non-positive result is reported as an error.
pub fn gen_vandermonde_det(theta: &[f64], beta: &[f64]) -> Result<f64> {
    let n = theta.len();
    if beta.len() != n {
        return invalid(format!("{} points but {} exponents", n, beta.len()));
    }
    if !theta.windows(2).all(|p| p[0] < p[1]) || theta.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(Error::InvalidPoints(theta.to_vec()));
    }
    if beta.iter().any(|&b| !(b >= 0.0)) || !beta.windows(2).all(|p| p[0] <= p[1]) {
        return invalid("exponents must be nondecreasing and nonnegative");
    }
    if beta.windows(2).any(|p| p[0] == p[1]) {
        return Ok(0.0);
    }
    let d = det(DMatrix::from_fn(n, n, |i, k| theta[i].powf(beta[k])));
    if d > 0.0 {
        Ok(d)
    } else {
        Err(Error::PositivityViolation { value: d })
    }
}

/// `n` points evenly spread over [0.005, 1]; a single point means α = 1.
pub fn alpha_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => {
            let (lo, hi) = (0.005, 1.0);
            let mut g: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
            g[n - 1] = hi;
            g
        }
    }
}

/// Spectrum data for one α.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumPoint {
    pub alpha: f64,
    pub eigenvalues: Vec<Complex64>,
    pub min_neg_axis_distance: f64,
    pub coeffs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub scheme: String,
    pub degree: usize,
    pub points: Vec<f64>,
    pub reduced: bool,
    pub cond_w: f64,
    pub sweep: Vec<SpectrumPoint>,
}

impl SpectrumReport {
    /// No eigenvalue touches the closed negative real axis at any α.
    pub fn well_posed(&self) -> bool {
        self.sweep.iter().all(|p| p.min_neg_axis_distance > 0.0)
    }

    /// Every eigenvalue at every α has a positive real part.
    pub fn all_real_parts_positive(&self) -> bool {
        self.sweep.iter().all(|p| p.eigenvalues.iter().all(|z| z.re > 0.0))
    }

    /// Every characteristic coefficient that was computed is positive.
    pub fn coeffs_positive(&self) -> bool {
        self.sweep.iter().all(|p| p.coeffs.as_ref().is_none_or(|c| c.iter().all(|&a| a > 0.0)))
    }

    pub fn min_distance(&self) -> f64 {
        self.sweep.iter().map(|p| p.min_neg_axis_distance).fold(f64::INFINITY, f64::min)
    }

    /// CSV with columns alpha,index,re,im,neg_axis_distance and, when the
    /// coefficients are available, a_0..a_{m+1}.
    pub fn to_csv(&self) -> String {
        let ncoef = self.sweep.iter().find_map(|p| p.coeffs.as_ref().map(Vec::len));
        let mut out = String::from("alpha,index,re,im,neg_axis_distance");
        if let Some(nc) = ncoef {
            for j in 0..nc {
                let _ = write!(out, ",a_{j}");
            }
        }
        out.push('\n');
        for p in &self.sweep {
            for (i, z) in p.eigenvalues.iter().enumerate() {
                let _ = write!(
                    out,
                    "{:.16e},{},{:.16e},{:.16e},{:.16e}",
                    p.alpha, i, z.re, z.im, p.min_neg_axis_distance
                );
                if let Some(c) = &p.coeffs {
                    for a in c {
                        let _ = write!(out, ",{a:.16e}");
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Spectrum of M at every α of the grid, computed in parallel and reported in
/// grid order.
pub fn sweep(scheme: &CollocationScheme, alpha_grid: &[f64]) -> Result<SpectrumReport> {
    if let Some(&a) = alpha_grid.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
        return invalid(format!("alpha grid value {a} outside (0,1]"));
    }
    let m = scheme.degree();
    let with_coeffs = !scheme.is_reduced() && m <= MAX_CHAR_DEGREE;
    let points: Vec<SpectrumPoint> = alpha_grid
        .par_iter()
        .map(|&alpha| {
            let wrap = |e: Error| Error::SweepFailure { alpha, source: Box::new(e) };
            let mm = build_m(scheme, alpha).map_err(wrap)?;
            let eigs = eigenvalues(&mm.m).map_err(wrap)?;
            let coeffs = if with_coeffs { Some(char_coeffs(scheme, alpha).map_err(wrap)?) } else { None };
            Ok(SpectrumPoint { alpha, min_neg_axis_distance: neg_axis_distance(&eigs), eigenvalues: eigs, coeffs })
        })
        .collect::<Result<_>>()?;
    let cond_w = if alpha_grid.is_empty() { f64::NAN } else { build_m(scheme, alpha_grid[0])?.cond_w };
    if m >= CONDITIONING_WARN_DEGREE {
        log::warn!("degree m={m}: spectrum formed from W with condition number {cond_w:.3e}");
    }
    Ok(SpectrumReport {
        scheme: scheme.descriptor(),
        degree: m,
        points: scheme.points().to_vec(),
        reduced: scheme.is_reduced(),
        cond_w,
        sweep: points,
    })
}

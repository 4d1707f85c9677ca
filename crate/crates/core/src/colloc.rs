//! Collocation point families, the per-interval collocation matrices, and the
//! local monomial representation of the piecewise-polynomial unknown.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{gauss_legendre_unit, gauss_lobatto_nodes};
use crate::special::gamma_pos;

/// Largest supported polynomial degree; the monomial Vandermonde matrix is
/// too ill-conditioned beyond this.
pub const MAX_DEGREE: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointFamily {
    /// θℓ = (ℓ+1)/(m+2)
    EquidistantInterior,
    /// θℓ = ℓ/(m+1)
    EquidistantWithZero,
    GaussLegendre,
    GaussLobatto,
    /// m = 0, θ0 = 1
    RightEndpoint,
    Custom,
}

impl PointFamily {
    pub const ALL_BUILTIN: [PointFamily; 5] = [
        PointFamily::EquidistantInterior,
        PointFamily::EquidistantWithZero,
        PointFamily::GaussLegendre,
        PointFamily::GaussLobatto,
        PointFamily::RightEndpoint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PointFamily::EquidistantInterior => "equidistant-interior",
            PointFamily::EquidistantWithZero => "equidistant-with-zero",
            PointFamily::GaussLegendre => "gauss-legendre",
            PointFamily::GaussLobatto => "gauss-lobatto",
            PointFamily::RightEndpoint => "right-endpoint",
            PointFamily::Custom => "custom",
        }
    }
}

impl fmt::Display for PointFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PointFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "equidistant-interior" | "equidistant" => Ok(PointFamily::EquidistantInterior),
            "equidistant-with-zero" | "equidistant-zero" => Ok(PointFamily::EquidistantWithZero),
            "gauss-legendre" | "legendre" => Ok(PointFamily::GaussLegendre),
            "gauss-lobatto" | "lobatto" => Ok(PointFamily::GaussLobatto),
            "right-endpoint" => Ok(PointFamily::RightEndpoint),
            "custom" => Ok(PointFamily::Custom),
            other => invalid(format!("unknown point family '{other}'")),
        }
    }
}

/// Relative collocation points for the built-in families.
pub fn make_points(family: PointFamily, m: usize) -> Result<Vec<f64>> {
    if m > MAX_DEGREE {
        return invalid(format!("degree m={m} exceeds the supported maximum {MAX_DEGREE}"));
    }
    let n = m + 1;
    let pts = match family {
        PointFamily::EquidistantInterior => {
            (0..n).map(|l| (l + 1) as f64 / (m + 2) as f64).collect()
        }
        PointFamily::EquidistantWithZero => (0..n).map(|l| l as f64 / n as f64).collect(),
        PointFamily::GaussLegendre => gauss_legendre_unit(n).0,
        PointFamily::GaussLobatto => {
            if m == 0 {
                return invalid("Gauss-Lobatto points need m >= 1 (both endpoints are nodes)");
            }
            let mut x: Vec<f64> =
                gauss_lobatto_nodes(n).iter().map(|&xi| 0.5 * (xi + 1.0)).collect();
            x[0] = 0.0;
            x[m] = 1.0;
            x
        }
        PointFamily::RightEndpoint => {
            if m != 0 {
                return invalid("the right-endpoint family is defined for m = 0 only");
            }
            vec![1.0]
        }
        PointFamily::Custom => {
            return invalid("custom points must be supplied explicitly");
        }
    };
    Ok(pts)
}

/// A collocation scheme: degree `m` and the relative points θ0 < ... < θm in [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollocationScheme {
    m: usize,
    theta: Vec<f64>,
    family: PointFamily,
}

impl CollocationScheme {
    pub fn new(family: PointFamily, m: usize) -> Result<Self> {
        let theta = make_points(family, m)?;
        Ok(Self { m, theta, family })
    }

    /// Arbitrary user points; only the ordering invariant is enforced.
    pub fn custom(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() || theta.len() > MAX_DEGREE + 1 {
            return invalid(format!(
                "custom schemes need between 1 and {} points",
                MAX_DEGREE + 1
            ));
        }
        let ordered = theta.windows(2).all(|p| p[0] < p[1]);
        let inside = theta.iter().all(|&t| (0.0..=1.0).contains(&t));
        if !ordered || !inside {
            return Err(Error::InvalidPoints(theta));
        }
        Ok(Self { m: theta.len() - 1, theta, family: PointFamily::Custom })
    }

    pub fn degree(&self) -> usize {
        self.m
    }

    pub fn points(&self) -> &[f64] {
        &self.theta
    }

    pub fn family(&self) -> PointFamily {
        self.family
    }

    /// True iff θ0 = 0 and θm = 1, in which case ∂^α u_τ is continuous in time.
    pub fn is_continuous(&self) -> bool {
        self.theta[0] == 0.0 && self.theta[self.m] == 1.0
    }

    /// True iff θ0 = 0: the left value of each interval is known and eliminated.
    pub fn is_reduced(&self) -> bool {
        self.theta[0] == 0.0
    }

    /// Number of unknown coefficient rows per interval.
    pub fn unknowns_per_interval(&self) -> usize {
        if self.is_reduced() {
            self.m
        } else {
            self.m + 1
        }
    }

    pub fn descriptor(&self) -> String {
        format!("{}(m={})", self.family, self.m)
    }
}

/// c_j = Γ(j+1)/Γ(j+1+α), j = 0..=m, via c_j = c_{j-1} · j/(j+α).
pub fn frac_coefficients(alpha: f64, m: usize) -> Vec<f64> {
    let mut c = Vec::with_capacity(m + 1);
    c.push(1.0 / gamma_pos(1.0 + alpha));
    for j in 1..=m {
        let jf = j as f64;
        c.push(c[j - 1] * jf / (jf + alpha));
    }
    c
}

/// The reduced (θ0 = 0) variants, all m×m.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedMatrices {
    /// rows (1, θℓ, ..., θℓ^{m-1}) for ℓ = 1..m
    pub w_hat: DMatrix<f64>,
    /// diag(θ1^α, ..., θm^α)
    pub d1_hat: DVector<f64>,
    /// diag(c_1, ..., c_m)
    pub d2_hat: DVector<f64>,
    /// diag(θ1, ..., θm)
    pub d3_hat: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollocMatrices {
    pub alpha: f64,
    /// Vandermonde matrix with rows (1, θℓ, ..., θℓ^m).
    pub w: DMatrix<f64>,
    /// diag(θℓ^α)
    pub d1: DVector<f64>,
    /// diag(c_j)
    pub d2: DVector<f64>,
    pub reduced: Option<ReducedMatrices>,
}

impl CollocMatrices {
    /// D1 · W · D2, the matrix mapping monomial coefficients to J^α at the points
    /// (before the τ^α scaling).
    pub fn d1_w_d2(&self) -> DMatrix<f64> {
        scale_rows_cols(&self.w, &self.d1, &self.d2)
    }
}

pub(crate) fn scale_rows_cols(a: &DMatrix<f64>, rows: &DVector<f64>, cols: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| rows[i] * a[(i, j)] * cols[j])
}

pub(crate) fn vandermonde(points: &[f64], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), ncols, |i, j| points[i].powi(j as i32))
}

pub fn build_matrices(scheme: &CollocationScheme, alpha: f64) -> Result<CollocMatrices> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return invalid(format!("alpha must lie in (0,1], got {alpha}"));
    }
    let m = scheme.degree();
    let theta = scheme.points();
    let c = frac_coefficients(alpha, m);
    let w = vandermonde(theta, m + 1);
    let d1 = DVector::from_iterator(m + 1, theta.iter().map(|&t| t.powf(alpha)));
    let d2 = DVector::from_vec(c.clone());
    let reduced = if scheme.is_reduced() && m >= 1 {
        let tail = &theta[1..];
        Some(ReducedMatrices {
            w_hat: vandermonde(tail, m),
            d1_hat: DVector::from_iterator(m, tail.iter().map(|&t| t.powf(alpha))),
            d2_hat: DVector::from_vec(c[1..].to_vec()),
            d3_hat: DVector::from_vec(tail.to_vec()),
        })
    } else {
        None
    };
    Ok(CollocMatrices { alpha, w, d1, d2, reduced })
}

/// The closed-form Lax–Milgram admissibility test for the lowest orders.
///
/// Returns `None` when no closed form is available for the given scheme.
pub fn check_laxmilgram_loworder(scheme: &CollocationScheme, alpha: f64) -> Option<bool> {
    let theta = scheme.points();
    let bound = 1.0 / (1.0 + alpha);
    match (scheme.degree(), scheme.is_reduced()) {
        (0, false) => Some(true),
        (1, false) => Some(theta[0] / theta[1] <= bound),
        (2, true) => Some(theta[1] / theta[2] <= bound),
        _ => None,
    }
}

/// Coefficients of one interval in the local monomial basis σ^j, one column per
/// spatial degree of freedom (row j holds the σ^j coefficients).
#[derive(Debug, Clone, PartialEq)]
pub struct PolyBlock(pub DMatrix<f64>);

impl PolyBlock {
    pub fn zeros(m: usize, ndof: usize) -> Self {
        PolyBlock(DMatrix::zeros(m + 1, ndof))
    }

    pub fn degree(&self) -> usize {
        self.0.nrows() - 1
    }

    pub fn ndof(&self) -> usize {
        self.0.ncols()
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Horner evaluation at σ ∈ [0,1].
    pub fn eval(&self, sigma: f64) -> DVector<f64> {
        let a = &self.0;
        let m = a.nrows() - 1;
        let mut out: DVector<f64> = a.row(m).transpose();
        for j in (0..m).rev() {
            out *= sigma;
            out += a.row(j).transpose();
        }
        out
    }

    /// d/dσ of the block at σ.
    pub fn eval_deriv(&self, sigma: f64) -> DVector<f64> {
        let a = &self.0;
        let m = a.nrows() - 1;
        let mut out = DVector::zeros(a.ncols());
        for j in (1..=m).rev() {
            out *= sigma;
            out += a.row(j).transpose() * j as f64;
        }
        out
    }
}

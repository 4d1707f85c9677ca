//! One-dimensional Lagrange finite elements for
//! L u = -(a u')' + b u' + c u on (x_L, x_R) with homogeneous Dirichlet data.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::quadrature::gauss_legendre_unit;

type CoeffFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Gauss points per cell for element integrals and load vectors.
const CELL_QUAD_POINTS: usize = 5;

/// Equispaced interior points per cell added to the L∞ sample set.
const EXTRA_SAMPLES_PER_CELL: usize = 4;

/// Coefficients of the spatial operator; `da` is the derivative of `a`.
#[derive(Clone)]
pub struct OperatorCoeffs {
    pub a: CoeffFn,
    pub da: CoeffFn,
    pub b: CoeffFn,
    pub c: CoeffFn,
    laplacian: bool,
}

impl fmt::Debug for OperatorCoeffs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorCoeffs").field("laplacian", &self.laplacian).finish_non_exhaustive()
    }
}

impl OperatorCoeffs {
    /// L = -∂x².
    pub fn laplacian() -> Self {
        Self {
            a: Arc::new(|_| 1.0),
            da: Arc::new(|_| 0.0),
            b: Arc::new(|_| 0.0),
            c: Arc::new(|_| 0.0),
            laplacian: true,
        }
    }

    pub fn new(
        a: impl Fn(f64) -> f64 + Send + Sync + 'static,
        da: impl Fn(f64) -> f64 + Send + Sync + 'static,
        b: impl Fn(f64) -> f64 + Send + Sync + 'static,
        c: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { a: Arc::new(a), da: Arc::new(da), b: Arc::new(b), c: Arc::new(c), laplacian: false }
    }

    pub fn is_laplacian(&self) -> bool {
        self.laplacian
    }
}

/// Values and derivatives of the local Lagrange basis on the reference cell [0,1].
fn shape(degree: usize, xi: f64) -> ([f64; 3], [f64; 3], [f64; 3]) {
    match degree {
        1 => ([1.0 - xi, xi, 0.0], [-1.0, 1.0, 0.0], [0.0; 3]),
        _ => (
            [2.0 * (xi - 0.5) * (xi - 1.0), -4.0 * xi * (xi - 1.0), 2.0 * xi * (xi - 0.5)],
            [4.0 * xi - 3.0, 4.0 - 8.0 * xi, 4.0 * xi - 1.0],
            [4.0, -8.0, 4.0],
        ),
    }
}

/// A point where fields are sampled, tied to the cell used for evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSite {
    pub x: f64,
    pub cell: usize,
    pub xi: f64,
}

/// Assembled finite-element system with the Dirichlet nodes eliminated.
#[derive(Debug, Clone)]
pub struct SpatialSystem {
    x_left: f64,
    x_right: f64,
    cells: usize,
    degree: usize,
    coeffs: OperatorCoeffs,
    mass: DMatrix<f64>,
    stiff: DMatrix<f64>,
    mass_chol: Cholesky<f64, Dyn>,
    dof_coords: Vec<f64>,
    sample_sites: Vec<SampleSite>,
    sample_value: DMatrix<f64>,
    sample_lu: DMatrix<f64>,
    quad_sites: Vec<SampleSite>,
    quad_weights: Vec<f64>,
    quad_value: DMatrix<f64>,
    quad_lu: DMatrix<f64>,
}

impl SpatialSystem {
    /// Builds mass and stiffness matrices on `cells` uniform cells of degree 1 or 2.
    pub fn assemble(x_left: f64, x_right: f64, cells: usize, degree: usize, coeffs: OperatorCoeffs) -> Result<Self> {
        if !(x_right > x_left) || !x_left.is_finite() || !x_right.is_finite() {
            return invalid(format!("empty domain ({x_left}, {x_right})"));
        }
        if !(degree == 1 || degree == 2) {
            return invalid(format!("element degree must be 1 or 2, got {degree}"));
        }
        let n = degree * cells;
        if cells == 0 || n < 2 {
            return invalid(format!("{cells} cell(s) of degree {degree} leave no interior unknowns"));
        }
        let n = n - 1;
        let h = (x_right - x_left) / cells as f64;
        let node_x = |cell: usize, xi: f64| x_left + h * (cell as f64 + xi);
        let (qx, qw) = gauss_legendre_unit(CELL_QUAD_POINTS);

        let mut mass = DMatrix::zeros(n, n);
        let mut stiff = DMatrix::zeros(n, n);
        let mut quad_sites = Vec::new();
        let mut quad_weights = Vec::new();
        for cell in 0..cells {
            for (&xi, &wq) in qx.iter().zip(&qw) {
                let x = node_x(cell, xi);
                let a = (coeffs.a)(x);
                if !(a > 0.0) {
                    return Err(Error::InvalidArgument(format!("diffusion coefficient a({x}) = {a} is not positive")));
                }
                let (b, c) = ((coeffs.b)(x), (coeffs.c)(x));
                let (phi, dphi, _) = shape(degree, xi);
                let w = wq * h;
                for p in 0..=degree {
                    let Some(i) = Self::dof_index(degree, cells, cell, p) else { continue };
                    for q in 0..=degree {
                        let Some(j) = Self::dof_index(degree, cells, cell, q) else { continue };
                        let (dpi, dpj) = (dphi[p] / h, dphi[q] / h);
                        mass[(i, j)] += w * phi[p] * phi[q];
                        stiff[(i, j)] += w * (a * dpi * dpj + b * dpj * phi[p] + c * phi[q] * phi[p]);
                    }
                }
                quad_sites.push(SampleSite { x, cell, xi });
                quad_weights.push(w);
            }
        }
        let mass_chol = Cholesky::new(mass.clone())
            .ok_or_else(|| Error::Singular { context: "mass matrix".into(), cond: f64::INFINITY })?;
        let dof_coords: Vec<f64> = (1..=n).map(|g| x_left + h * g as f64 / degree as f64).collect();

        // L∞ sample set: every interior DOF (from each adjacent cell) plus
        // equispaced interior points of every cell
        let mut sample_sites = Vec::new();
        for cell in 0..cells {
            let mut local: Vec<f64> = (0..=degree).map(|p| p as f64 / degree as f64).collect();
            local.extend((1..=EXTRA_SAMPLES_PER_CELL).map(|i| i as f64 / (EXTRA_SAMPLES_PER_CELL + 1) as f64));
            local.sort_by(f64::total_cmp);
            for xi in local {
                let boundary = (cell == 0 && xi == 0.0) || (cell == cells - 1 && xi == 1.0);
                if !boundary {
                    sample_sites.push(SampleSite { x: node_x(cell, xi), cell, xi });
                }
            }
        }

        let mut sys = Self {
            x_left,
            x_right,
            cells,
            degree,
            coeffs,
            mass,
            stiff,
            mass_chol,
            dof_coords,
            sample_sites,
            sample_value: DMatrix::zeros(0, 0),
            sample_lu: DMatrix::zeros(0, 0),
            quad_sites,
            quad_weights,
            quad_value: DMatrix::zeros(0, 0),
            quad_lu: DMatrix::zeros(0, 0),
        };
        for site in sys.sample_sites.iter().chain(&sys.quad_sites) {
            let a = (sys.coeffs.a)(site.x);
            if !(a > 0.0) {
                return Err(Error::InvalidArgument(format!("diffusion coefficient a({}) = {a} is not positive", site.x)));
            }
        }
        (sys.sample_value, sys.sample_lu) = sys.site_matrices(&sys.sample_sites);
        (sys.quad_value, sys.quad_lu) = sys.site_matrices(&sys.quad_sites);
        Ok(sys)
    }

    /// The default test configuration: P2 elements on 10 uniform cells of (0,1)
    /// for L = -∂x².
    pub fn default_unit_interval() -> Self {
        Self::assemble(0.0, 1.0, 10, 2, OperatorCoeffs::laplacian()).expect("valid default configuration")
    }

    fn dof_index(degree: usize, cells: usize, cell: usize, local: usize) -> Option<usize> {
        let g = degree * cell + local;
        (g >= 1 && g < degree * cells).then(|| g - 1)
    }

    /// Rows mapping DOF vectors to values and to L applied elementwise at each site.
    fn site_matrices(&self, sites: &[SampleSite]) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.ndof();
        let h = self.cell_width();
        let mut val = DMatrix::zeros(sites.len(), n);
        let mut lu = DMatrix::zeros(sites.len(), n);
        for (r, s) in sites.iter().enumerate() {
            let (phi, dphi, d2phi) = shape(self.degree, s.xi);
            let a = (self.coeffs.a)(s.x);
            let da = (self.coeffs.da)(s.x);
            let b = (self.coeffs.b)(s.x);
            let c = (self.coeffs.c)(s.x);
            for p in 0..=self.degree {
                if let Some(i) = Self::dof_index(self.degree, self.cells, s.cell, p) {
                    let (d1, d2) = (dphi[p] / h, d2phi[p] / (h * h));
                    val[(r, i)] = phi[p];
                    lu[(r, i)] = -a * d2 + (b - da) * d1 + c * phi[p];
                }
            }
        }
        (val, lu)
    }

    pub fn ndof(&self) -> usize {
        self.mass.nrows()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x_left, self.x_right)
    }

    pub fn cell_width(&self) -> f64 {
        (self.x_right - self.x_left) / self.cells as f64
    }

    pub fn coeffs(&self) -> &OperatorCoeffs {
        &self.coeffs
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn stiff(&self) -> &DMatrix<f64> {
        &self.stiff
    }

    pub fn dof_coords(&self) -> &[f64] {
        &self.dof_coords
    }

    /// Sites of the L∞ sample set; interior mesh nodes appear once per adjacent cell.
    pub fn sample_sites(&self) -> &[SampleSite] {
        &self.sample_sites
    }

    /// Distinct sample abscissae in increasing order.
    pub fn sample_points(&self) -> Vec<f64> {
        let mut xs: Vec<f64> = self.sample_sites.iter().map(|s| s.x).collect();
        xs.dedup();
        xs
    }

    /// Values of a DOF vector at every sample site.
    pub fn sample_values(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.sample_value * u
    }

    /// L u_h at every sample site, using the polynomial of the site's cell.
    pub fn sample_lu(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.sample_lu * u
    }

    /// Gauss points of every cell with their weights (for L2 norms).
    pub fn quad_sites(&self) -> (&[SampleSite], &[f64]) {
        (&self.quad_sites, &self.quad_weights)
    }

    pub fn quad_values(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.quad_value * u
    }

    pub fn quad_lu(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.quad_lu * u
    }

    /// Solves Mass · x = rhs.
    pub fn mass_solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.mass_chol.solve(rhs)
    }

    /// (∫ f φ_i) by per-cell Gauss quadrature.
    pub fn load_vector(&self, f: impl Fn(f64) -> f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.ndof());
        for (s, &w) in self.quad_sites.iter().zip(&self.quad_weights) {
            let fx = f(s.x);
            let (phi, _, _) = shape(self.degree, s.xi);
            for (p, &ph) in phi.iter().enumerate().take(self.degree + 1) {
                if let Some(i) = Self::dof_index(self.degree, self.cells, s.cell, p) {
                    out[i] += w * fx * ph;
                }
            }
        }
        out
    }

    /// Nodal interpolant of `g` (boundary values are dropped).
    pub fn interpolate(&self, g: impl Fn(f64) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.ndof(), self.dof_coords.iter().map(|&x| g(x)))
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let h = self.cell_width();
        let s = ((x - self.x_left) / h).clamp(0.0, self.cells as f64);
        let cell = (s.floor() as usize).min(self.cells - 1);
        (cell, s - cell as f64)
    }

    /// The finite-element function with DOFs `u` at `x`.
    pub fn eval_field(&self, u: &DVector<f64>, x: f64) -> f64 {
        let (cell, xi) = self.locate(x);
        let (phi, _, _) = shape(self.degree, xi);
        (0..=self.degree)
            .filter_map(|p| Self::dof_index(self.degree, self.cells, cell, p).map(|i| phi[p] * u[i]))
            .sum()
    }

    /// L u_h at `x`, applied to the polynomial of the cell containing `x`.
    pub fn eval_lu(&self, u: &DVector<f64>, x: f64) -> f64 {
        let (cell, xi) = self.locate(x);
        let (row_v, row_l) = self.site_matrices(&[SampleSite { x, cell, xi }]);
        let _ = row_v;
        (row_l * u)[0]
    }

    /// Smallest eigenvalue of the symmetric part of (Stiff, Mass).
    pub fn energy_lambda(&self) -> f64 {
        let l = self.mass_chol.l();
        let sym = (&self.stiff + self.stiff.transpose()) * 0.5;
        let linv = l.clone().try_inverse().expect("Cholesky factor is invertible");
        let c = &linv * sym * linv.transpose();
        let c = (&c + c.transpose()) * 0.5;
        SymmetricEigen::new(c).eigenvalues.min()
    }
}

/// Constants (λ, ω) of a comparison function g with L g ≥ λ and 1 ≤ g ≤ 1+ω.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BarrierPair {
    pub lambda: f64,
    pub omega: f64,
}

/// The closed-form pair for L = -∂x² on (0,1): g = 1 + λ x(1-x)/2 with λ = π².
pub fn barrier_pair(system: &SpatialSystem) -> Result<BarrierPair> {
    if system.coeffs().is_laplacian() && system.domain() == (0.0, 1.0) {
        let lambda = std::f64::consts::PI.powi(2);
        Ok(BarrierPair { lambda, omega: lambda / 8.0 })
    } else {
        Err(Error::NotApplicable(
            "no closed-form barrier pair for this operator; supply (λ, ω, g) and verify it".into(),
        ))
    }
}

/// Checks a user-supplied pair against g, g', g'' on a fine sample of the domain.
pub fn verify_barrier_pair(
    system: &SpatialSystem,
    pair: BarrierPair,
    g: impl Fn(f64) -> f64,
    dg: impl Fn(f64) -> f64,
    d2g: impl Fn(f64) -> f64,
) -> Result<()> {
    if !(pair.omega >= 0.0) {
        return Err(Error::BarrierCheck { x: f64::NAN, reason: format!("ω = {} is negative", pair.omega) });
    }
    let (xl, xr) = system.domain();
    let k = &system.coeffs;
    let n = 50 * system.cells();
    let tol = 1e-12 * (1.0 + pair.lambda.abs() + pair.omega);
    for i in 0..=n {
        let x = xl + (xr - xl) * i as f64 / n as f64;
        let gx = g(x);
        let lg = -(k.a)(x) * d2g(x) + ((k.b)(x) - (k.da)(x)) * dg(x) + (k.c)(x) * gx;
        if lg < pair.lambda - tol {
            return Err(Error::BarrierCheck { x, reason: format!("L g = {lg} < λ = {}", pair.lambda) });
        }
        if gx < 1.0 - tol || gx > 1.0 + pair.omega + tol {
            return Err(Error::BarrierCheck { x, reason: format!("g = {gx} outside [1, 1+ω]") });
        }
    }
    Ok(())
}

//! Temporal mesh and the piecewise-in-time field w_τ.

use nalgebra::DVector;

use crate::colloc::PolyBlock;
use crate::error::{Error, Result};

/// Breakpoints 0 = t_0 < t_1 < ... < t_M.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TemporalMesh {
    breakpoints: Vec<f64>,
}

/// Which one-sided limit to use when an evaluation time sits on a breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl TemporalMesh {
    pub fn new() -> Self {
        Self { breakpoints: vec![0.0] }
    }

    pub fn from_breakpoints(breakpoints: Vec<f64>) -> Result<Self> {
        if breakpoints.first() != Some(&0.0) || !breakpoints.windows(2).all(|p| p[0] < p[1]) {
            return Err(Error::InvalidArgument(
                "mesh breakpoints must start at 0 and increase strictly".into(),
            ));
        }
        Ok(Self { breakpoints })
    }

    pub fn uniform(t_end: f64, intervals: usize) -> Result<Self> {
        if intervals == 0 || !(t_end > 0.0) {
            return Err(Error::InvalidArgument("uniform mesh needs t_end > 0 and at least one interval".into()));
        }
        let mut b: Vec<f64> = (0..=intervals).map(|k| t_end * k as f64 / intervals as f64).collect();
        b[intervals] = t_end;
        Ok(Self { breakpoints: b })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Number of intervals M.
    pub fn len(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn t_end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Start of interval `i` (0-based).
    pub fn start(&self, i: usize) -> f64 {
        self.breakpoints[i]
    }

    /// Size τ of interval `i` (0-based).
    pub fn tau(&self, i: usize) -> f64 {
        self.breakpoints[i + 1] - self.breakpoints[i]
    }

    pub fn push(&mut self, t_next: f64) {
        assert!(t_next > self.t_end(), "mesh must grow monotonically");
        self.breakpoints.push(t_next);
    }

    pub fn pop(&mut self) -> Option<f64> {
        if self.breakpoints.len() > 1 {
            self.breakpoints.pop()
        } else {
            None
        }
    }

    /// Index of the interval containing `t`; breakpoints resolve by `side`.
    pub fn locate(&self, t: f64, side: Side) -> Result<usize> {
        let t_end = self.t_end();
        if !(t >= 0.0) || t > t_end || self.is_empty() {
            return Err(Error::OutsideMesh { t, t_end });
        }
        let idx = match side {
            Side::Left => self.breakpoints.partition_point(|&b| b < t),
            Side::Right => self.breakpoints.partition_point(|&b| b <= t),
        };
        Ok(idx.clamp(1, self.len()) - 1)
    }
}

/// Data stored for one interval of w_τ.
#[derive(Debug, Clone, PartialEq)]
pub enum Piece {
    Poly(PolyBlock),
    /// w = jump · t^{-α}/Γ(1-α) on (0, t_1]; only allowed on the first interval.
    Singular { jump: DVector<f64> },
}

/// A piecewise function of time with values in R^N.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePolyField {
    mesh: TemporalMesh,
    pieces: Vec<Piece>,
    ndof: usize,
}

impl PiecewisePolyField {
    pub fn new(ndof: usize) -> Self {
        Self { mesh: TemporalMesh::new(), pieces: Vec::new(), ndof }
    }

    pub fn mesh(&self) -> &TemporalMesh {
        &self.mesh
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn ndof(&self) -> usize {
        self.ndof
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn push(&mut self, tau: f64, piece: Piece) {
        match &piece {
            Piece::Poly(b) => assert_eq!(b.ndof(), self.ndof),
            Piece::Singular { jump } => {
                assert!(self.pieces.is_empty(), "singular piece only on the first interval");
                assert_eq!(jump.len(), self.ndof);
            }
        }
        let t_next = self.mesh.t_end() + tau;
        self.mesh.push(t_next);
        self.pieces.push(piece);
    }

    /// Push an interval that ends exactly at `t_next`.
    pub fn push_until(&mut self, t_next: f64, piece: Piece) {
        let tau = t_next - self.mesh.t_end();
        self.push(tau, piece);
        // avoid drift from the addition above
        let n = self.mesh.breakpoints.len();
        self.mesh.breakpoints[n - 1] = t_next;
    }

    pub fn pop(&mut self) -> Option<Piece> {
        self.mesh.pop()?;
        self.pieces.pop()
    }

    /// w_τ(t); `alpha` is needed only for a singular first piece.
    pub fn eval(&self, t: f64, side: Side, alpha: f64) -> Result<DVector<f64>> {
        let i = self.mesh.locate(t, side)?;
        let sigma = ((t - self.mesh.start(i)) / self.mesh.tau(i)).clamp(0.0, 1.0);
        Ok(match &self.pieces[i] {
            Piece::Poly(b) => b.eval(sigma),
            Piece::Singular { jump } => {
                jump * (t.powf(-alpha) * crate::special::recip_gamma_one_minus(alpha))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn locate_uses_requested_side() {
        let m = TemporalMesh::from_breakpoints(vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        assert_eq!(m.locate(0.1, Side::Left).unwrap(), 0);
        assert_eq!(m.locate(0.25, Side::Left).unwrap(), 0);
        assert_eq!(m.locate(0.25, Side::Right).unwrap(), 1);
        assert_eq!(m.locate(1.0, Side::Right).unwrap(), 2);
        assert_eq!(m.locate(0.0, Side::Left).unwrap(), 0);
        assert!(m.locate(1.0001, Side::Left).is_err());
        assert!(m.locate(-0.1, Side::Left).is_err());
        assert!(TemporalMesh::from_breakpoints(vec![0.0, 0.5, 0.5]).is_err());
    }

    #[test]
    fn field_eval_and_pop() {
        let mut f = PiecewisePolyField::new(1);
        f.push(0.5, Piece::Poly(PolyBlock(DMatrix::from_row_slice(2, 1, &[1.0, 1.0]))));
        f.push(0.5, Piece::Poly(PolyBlock(DMatrix::from_row_slice(1, 1, &[7.0]))));
        assert_eq!(f.eval(0.5, Side::Left, 0.5).unwrap()[0], 2.0);
        assert_eq!(f.eval(0.5, Side::Right, 0.5).unwrap()[0], 7.0);
        assert_eq!(f.eval(0.25, Side::Left, 0.5).unwrap()[0], 1.5);
        f.pop();
        assert_eq!(f.len(), 1);
        assert_eq!(f.mesh().t_end(), 0.5);
        assert!(f.eval(0.75, Side::Left, 0.5).is_err());
    }
}

use crate::error::{QsimError, Result};
use crate::linalg::{self, cr, Mat};

/// Hermitian operator with O² = 𝟙.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryObservable {
    op: Mat,
}

impl BinaryObservable {
    pub fn new(op: Mat) -> Result<Self> {
        let n = op.nrows();
        if !linalg::is_hermitian(&op, 1e-9) {
            return Err(QsimError::Domain("observable is not Hermitian".into()));
        }
        if linalg::max_abs(&(&op * &op - linalg::identity(n))) > 1e-9 {
            return Err(QsimError::Domain("observable does not square to 1".into()));
        }
        Ok(Self { op })
    }

    /// Σ_u (−1)^{bit(u)} P^u for a projective family indexed by u.
    pub fn from_outcomes<F: Fn(usize) -> u8>(projectors: &[Mat], bit: F) -> Result<Self> {
        let n = projectors
            .first()
            .map(|p| p.nrows())
            .ok_or_else(|| QsimError::Domain("empty measurement".into()))?;
        let mut op = linalg::zeros(n, n);
        for (u, p) in projectors.iter().enumerate() {
            if bit(u) == 0 {
                op += p;
            } else {
                op -= p;
            }
        }
        Self::new(op)
    }

    pub fn matrix(&self) -> &Mat {
        &self.op
    }

    /// O^{(b)} = (𝟙 + (−1)^b O)/2.
    pub fn projector(&self, b: u8) -> Mat {
        let n = self.op.nrows();
        let sign = if b == 0 { 1.0 } else { -1.0 };
        (linalg::identity(n) + &self.op * cr(sign)) * cr(0.5)
    }
}

use std::collections::BTreeMap;

use crate::error::{QsimError, Result};
use crate::linalg::{self, Mat, C64};

/// Σ_label block ⊗ |label⟩⟨label|. Labels not present carry a zero block.
#[derive(Debug, Clone, PartialEq)]
pub struct CqOperator<L: Ord> {
    dim: usize,
    blocks: BTreeMap<L, Mat>,
}

impl<L: Ord + Clone> CqOperator<L> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            blocks: BTreeMap::new(),
        }
    }

    pub fn block_dim(&self) -> usize {
        self.dim
    }

    pub fn insert(&mut self, label: L, block: Mat) -> Result<()> {
        if block.nrows() != self.dim || block.ncols() != self.dim {
            return Err(QsimError::DimensionMismatch {
                expected: self.dim,
                got: block.nrows(),
            });
        }
        self.blocks.insert(label, block);
        Ok(())
    }

    /// Adds `block` to whatever is stored under `label`.
    pub fn accumulate(&mut self, label: L, block: &Mat) -> Result<()> {
        match self.blocks.get_mut(&label) {
            Some(b) => {
                if block.shape() != b.shape() {
                    return Err(QsimError::DimensionMismatch {
                        expected: self.dim,
                        got: block.nrows(),
                    });
                }
                *b += block;
                Ok(())
            }
            None => self.insert(label, block.clone()),
        }
    }

    pub fn get(&self, label: &L) -> Option<&Mat> {
        self.blocks.get(label)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&L, &Mat)> {
        self.blocks.iter()
    }

    pub fn labels(&self) -> impl Iterator<Item = &L> {
        self.blocks.keys()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn trace(&self) -> C64 {
        self.blocks.values().map(linalg::trace).sum()
    }

    /// Block-wise trace norm; block diagonality makes the norm additive.
    pub fn trace_norm(&self) -> Result<f64> {
        self.blocks.values().map(linalg::trace_norm).sum()
    }

    /// A − B over the union of labels.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(QsimError::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut out = self.clone();
        for (l, b) in &other.blocks {
            out.accumulate(l.clone(), &(-b))?;
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        for (l, b) in &other.blocks {
            out.accumulate(l.clone(), b)?;
        }
        Ok(out)
    }

    /// Trace over the classical register: Σ_label block.
    pub fn sum_blocks(&self) -> Mat {
        let mut acc = linalg::zeros(self.dim, self.dim);
        for b in self.blocks.values() {
            acc += b;
        }
        acc
    }

    /// Trace out the classical register and the quantum subsystems not in `keep`.
    pub fn partial_trace(&self, dims: &[usize], keep: &[usize]) -> Result<Mat> {
        linalg::partial_trace(&self.sum_blocks(), dims, keep)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.blocks.values().all(|b| linalg::is_hermitian(b, tol))
    }

    pub fn filter<F: Fn(&L) -> bool>(&self, keep: F) -> Self {
        Self {
            dim: self.dim,
            blocks: self
                .blocks
                .iter()
                .filter(|(l, _)| keep(l))
                .map(|(l, b)| (l.clone(), b.clone()))
                .collect(),
        }
    }
}

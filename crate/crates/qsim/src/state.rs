use rand::Rng;

use crate::error::{QsimError, Result};
use crate::linalg::{self, cr, CVec, Mat, C64};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Register {
    pub name: String,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Computational,
    /// H^{⊗k} on a register of dimension 2^k.
    Hadamard,
}

/// Pure state over an ordered list of named registers. The first register is
/// the most significant digit of the amplitude index.
#[derive(Debug, Clone)]
pub struct StateVector {
    amps: CVec,
    regs: Vec<Register>,
}

impl StateVector {
    pub fn new<S: Into<String>>(regs: Vec<(S, usize)>, amps: CVec) -> Result<Self> {
        let regs: Vec<Register> = regs
            .into_iter()
            .map(|(name, dim)| Register {
                name: name.into(),
                dim,
            })
            .collect();
        let dim: usize = regs.iter().map(|r| r.dim).product();
        if dim != amps.len() {
            return Err(QsimError::DimensionMismatch {
                expected: dim,
                got: amps.len(),
            });
        }
        for (i, r) in regs.iter().enumerate() {
            if r.dim == 0 || regs[..i].iter().any(|o| o.name == r.name) {
                return Err(QsimError::Domain(format!("bad register `{}`", r.name)));
            }
        }
        Ok(Self { amps, regs })
    }

    /// Computational basis state |values⟩.
    pub fn basis<S: Into<String>>(regs: Vec<(S, usize)>, values: &[usize]) -> Result<Self> {
        let regs: Vec<(String, usize)> = regs.into_iter().map(|(n, d)| (n.into(), d)).collect();
        if values.len() != regs.len() {
            return Err(QsimError::DimensionMismatch {
                expected: regs.len(),
                got: values.len(),
            });
        }
        let mut index = 0;
        for ((_, d), &v) in regs.iter().zip(values) {
            if v >= *d {
                return Err(QsimError::Domain(format!("value {v} out of range {d}")));
            }
            index = index * d + v;
        }
        let dim = regs.iter().map(|r| r.1).product();
        Self::new(regs, linalg::basis_vector(dim, index))
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amps
    }

    pub fn registers(&self) -> &[Register] {
        &self.regs
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(QsimError::ZeroNorm);
        }
        Ok(Self {
            amps: &self.amps / cr(n),
            regs: self.regs.clone(),
        })
    }

    pub fn register_index(&self, name: &str) -> Result<usize> {
        self.regs
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| QsimError::UnknownRegister(name.to_string()))
    }

    /// (outer count, register dim, inner stride) for register k.
    fn layout(&self, k: usize) -> (usize, usize, usize) {
        let outer = self.regs[..k].iter().map(|r| r.dim).product();
        let inner = self.regs[k + 1..].iter().map(|r| r.dim).product();
        (outer, self.regs[k].dim, inner)
    }

    pub fn tensor(&self, other: &StateVector) -> Result<Self> {
        let mut regs: Vec<(String, usize)> =
            self.regs.iter().map(|r| (r.name.clone(), r.dim)).collect();
        regs.extend(other.regs.iter().map(|r| (r.name.clone(), r.dim)));
        Self::new(regs, self.amps.kronecker(&other.amps))
    }

    /// Apply a matrix to one register in place.
    pub fn apply(&mut self, register: &str, op: &Mat) -> Result<()> {
        let k = self.register_index(register)?;
        let (outer, d, inner) = self.layout(k);
        if op.nrows() != d || op.ncols() != d {
            return Err(QsimError::DimensionMismatch {
                expected: d,
                got: op.nrows(),
            });
        }
        let mut buf = vec![C64::new(0.0, 0.0); d];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * d * inner + i;
                for (r, slot) in buf.iter_mut().enumerate() {
                    let mut acc = C64::new(0.0, 0.0);
                    for c in 0..d {
                        acc += op[(r, c)] * self.amps[base + c * inner];
                    }
                    *slot = acc;
                }
                for (r, val) in buf.iter().enumerate() {
                    self.amps[base + r * inner] = *val;
                }
            }
        }
        Ok(())
    }

    fn qubit_count(&self, k: usize) -> Result<usize> {
        let d = self.regs[k].dim;
        if !d.is_power_of_two() {
            return Err(QsimError::Domain(format!(
                "register `{}` has dimension {d}, not a power of two",
                self.regs[k].name
            )));
        }
        Ok(d.trailing_zeros() as usize)
    }

    pub fn apply_hadamard(&mut self, register: &str) -> Result<()> {
        let k = self.register_index(register)?;
        let q = self.qubit_count(k)?;
        self.apply(register, &linalg::hadamard(q))
    }

    /// Marginal Born probabilities of a register in the computational basis.
    pub fn probabilities(&self, register: &str) -> Result<Vec<f64>> {
        let k = self.register_index(register)?;
        let (outer, d, inner) = self.layout(k);
        let mut p = vec![0.0; d];
        for o in 0..outer {
            for (r, slot) in p.iter_mut().enumerate() {
                for i in 0..inner {
                    *slot += self.amps[o * d * inner + r * inner + i].norm_sqr();
                }
            }
        }
        Ok(p)
    }

    /// Unnormalized branch where `register` holds `value`; other amplitudes zeroed.
    pub fn project(&self, register: &str, value: usize) -> Result<Self> {
        let k = self.register_index(register)?;
        let (outer, d, inner) = self.layout(k);
        if value >= d {
            return Err(QsimError::Domain(format!("value {value} out of range {d}")));
        }
        let mut out = self.clone();
        for o in 0..outer {
            for r in (0..d).filter(|&r| r != value) {
                for i in 0..inner {
                    out.amps[o * d * inner + r * inner + i] = C64::new(0.0, 0.0);
                }
            }
        }
        Ok(out)
    }

    /// Branch where `register` holds `value`, with the register removed.
    pub fn extract(&self, register: &str, value: usize) -> Result<Self> {
        let k = self.register_index(register)?;
        let (outer, d, inner) = self.layout(k);
        if value >= d {
            return Err(QsimError::Domain(format!("value {value} out of range {d}")));
        }
        let amps = CVec::from_iterator(
            outer * inner,
            (0..outer).flat_map(|o| (0..inner).map(move |i| (o, i))).map(|(o, i)| {
                self.amps[o * d * inner + value * inner + i]
            }),
        );
        let regs = self
            .regs
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, r)| (r.name.clone(), r.dim))
            .collect();
        Self::new(regs, amps)
    }

    /// Born-rule measurement of one register. Hadamard readout conjugates the
    /// register by H^{⊗k}; the returned post-state is expressed back in the
    /// original frame and renormalized.
    pub fn measure<R: Rng + ?Sized>(
        &self,
        register: &str,
        basis: Basis,
        rng: &mut R,
    ) -> Result<(usize, StateVector)> {
        let mut work = self.clone();
        if basis == Basis::Hadamard {
            work.apply_hadamard(register)?;
        }
        let p = work.probabilities(register)?;
        let total: f64 = p.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut outcome = p.len() - 1;
        for (i, &pi) in p.iter().enumerate() {
            if u < pi {
                outcome = i;
                break;
            }
            u -= pi;
        }
        // land on a branch with weight even if round-off put u past the end
        if p[outcome] == 0.0 {
            outcome = p.iter().rposition(|&x| x > 0.0).ok_or(QsimError::ZeroNorm)?;
        }
        let mut post = work.project(register, outcome)?.normalized()?;
        if basis == Basis::Hadamard {
            post.apply_hadamard(register)?;
        }
        Ok((outcome, post))
    }

    /// Controlled-Z between two qubit registers (given by index).
    pub fn controlled_z(&self, i: usize, j: usize) -> Result<Self> {
        let n = self.regs.len();
        if i == j || i >= n || j >= n {
            return Err(QsimError::Domain(format!("bad CZ qubits ({i}, {j})")));
        }
        if self.regs[i].dim != 2 || self.regs[j].dim != 2 {
            return Err(QsimError::Domain("CZ acts on qubit registers".into()));
        }
        let (_, _, inner_i) = self.layout(i);
        let (_, _, inner_j) = self.layout(j);
        let mut out = self.clone();
        for idx in 0..self.dim() {
            if (idx / inner_i) % 2 == 1 && (idx / inner_j) % 2 == 1 {
                out.amps[idx] = -out.amps[idx];
            }
        }
        Ok(out)
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.dotc(&other.amps)
    }

    /// |⟨a|b⟩|² for unit vectors.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn density(&self) -> Mat {
        linalg::ket_bra(&self.amps)
    }
}

//! Matrix helpers: Kronecker products, Hermitian spectra, norms, partial
//! traces and the vector-operator correspondence.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{QsimError, Result};

pub type C64 = Complex64;
pub type Mat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Relative cutoff used by [`numerical_rank`].
pub const RANK_TOLERANCE: f64 = 1e-8;

pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(n: usize) -> Mat {
    Mat::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> Mat {
    Mat::zeros(r, c)
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Kronecker product of a list of factors, left to right.
pub fn kron_all(factors: &[Mat]) -> Mat {
    factors
        .iter()
        .fold(identity(1), |acc, f| kron(&acc, f))
}

pub fn pauli_x() -> Mat {
    Mat::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(1.0), cr(0.0)])
}

pub fn pauli_z() -> Mat {
    Mat::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(-1.0)])
}

/// H^{⊗k}, entries (−1)^{popcount(i&j)} / √(2^k).
pub fn hadamard(k: usize) -> Mat {
    let n = 1usize << k;
    let s = (n as f64).sqrt().recip();
    Mat::from_fn(n, n, |i, j| {
        if (i & j).count_ones() % 2 == 0 {
            cr(s)
        } else {
            cr(-s)
        }
    })
}

pub fn basis_vector(dim: usize, index: usize) -> CVec {
    let mut v = CVec::zeros(dim);
    v[index] = cr(1.0);
    v
}

pub fn ket_bra(v: &CVec) -> Mat {
    v * v.adjoint()
}

pub fn trace(a: &Mat) -> C64 {
    a.diagonal().sum()
}

pub fn max_abs(a: &Mat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_hermitian(a: &Mat, tol: f64) -> bool {
    a.is_square() && max_abs(&(a - a.adjoint())) <= tol
}

fn check_square(a: &Mat) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(QsimError::Domain(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )))
    }
}

/// Eigenvalues (descending) and eigenvectors (columns) of a Hermitian matrix.
/// The input is symmetrized first so round-off asymmetry is harmless.
pub fn hermitian_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), zeros(0, 0));
    }
    let h = (a + a.adjoint()) * cr(0.5);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn hermitian_eigenvalues(a: &Mat) -> Vec<f64> {
    hermitian_eigen(a).0
}

/// Singular values in nonincreasing order, from the spectrum of A†A.
pub fn singular_values(a: &Mat) -> Vec<f64> {
    let gram = if a.nrows() >= a.ncols() {
        a.adjoint() * a
    } else {
        a * a.adjoint()
    };
    hermitian_eigenvalues(&gram)
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect()
}

/// Schatten-1 norm. Hermitian inputs use their spectrum directly.
pub fn trace_norm(a: &Mat) -> Result<f64> {
    check_square(a)?;
    if is_hermitian(a, 1e-12 * (1.0 + max_abs(a))) {
        Ok(hermitian_eigenvalues(a).iter().map(|l| l.abs()).sum())
    } else {
        Ok(singular_values(a).iter().sum())
    }
}

/// Largest singular value.
pub fn operator_norm(a: &Mat) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// ‖A‖_ψ = √Tr[A†Aψ].
pub fn state_dep_norm(a: &Mat, psi: &Mat) -> Result<f64> {
    check_square(a)?;
    if psi.nrows() != a.ncols() || !psi.is_square() {
        return Err(QsimError::DimensionMismatch {
            expected: a.ncols(),
            got: psi.nrows(),
        });
    }
    Ok(trace(&(a.adjoint() * a * psi)).re.max(0.0).sqrt())
}

/// Same norm with ψ = F F† given by a factor; avoids forming ψ.
pub fn state_dep_norm_factored(a: &Mat, factor: &Mat) -> f64 {
    (a * factor).norm_squared().sqrt()
}

/// ‖F F† − G G†‖₁ computed in the span of the factor columns.
pub fn trace_norm_factored(pos: &Mat, neg: &Mat) -> f64 {
    let r1 = pos.ncols();
    let r2 = neg.ncols();
    if r1 + r2 == 0 {
        return 0.0;
    }
    let n = pos.nrows().max(neg.nrows());
    let mut k = zeros(n, r1 + r2);
    if r1 > 0 {
        k.columns_mut(0, r1).copy_from(pos);
    }
    if r2 > 0 {
        k.columns_mut(r1, r2).copy_from(neg);
    }
    let gram = k.adjoint() * &k;
    let s = psd_sqrt(&gram);
    let mut js = s.clone();
    for row in r1..r1 + r2 {
        for col in 0..r1 + r2 {
            js[(row, col)] = -js[(row, col)];
        }
    }
    let m = &s * js;
    hermitian_eigenvalues(&m).iter().map(|l| l.abs()).sum()
}

/// Positive square root of a PSD matrix (negative round-off clipped).
pub fn psd_sqrt(a: &Mat) -> Mat {
    let (vals, vecs) = hermitian_eigen(a);
    let d = Mat::from_diagonal(&CVec::from_iterator(
        vals.len(),
        vals.iter().map(|&l| cr(l.max(0.0).sqrt())),
    ));
    &vecs * d * vecs.adjoint()
}

/// A factor F with ρ = F F†, keeping eigenvalues above `tol`·max.
pub fn psd_factor(rho: &Mat, tol: f64) -> Mat {
    let (vals, vecs) = hermitian_eigen(rho);
    let top = vals.first().copied().unwrap_or(0.0).max(0.0);
    let keep: Vec<usize> = (0..vals.len())
        .filter(|&i| vals[i] > tol * top && vals[i] > 0.0)
        .collect();
    let mut f = zeros(rho.nrows(), keep.len());
    for (k, &i) in keep.iter().enumerate() {
        f.set_column(k, &(vecs.column(i) * cr(vals[i].sqrt())));
    }
    f
}

/// Count of eigenvalues above [`RANK_TOLERANCE`] times the largest one.
pub fn numerical_rank(rho: &Mat) -> usize {
    let vals = hermitian_eigenvalues(rho);
    let top = vals.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    vals.iter().filter(|&&l| l > RANK_TOLERANCE * top).count()
}

/// Row-major vectorization: vec(A) = Σ A_ij |i⟩|j⟩, so that
/// (B⊗C) vec(A) = vec(B A Cᵀ).
pub fn vec_op(a: &Mat) -> CVec {
    CVec::from_iterator(
        a.nrows() * a.ncols(),
        (0..a.nrows()).flat_map(|i| (0..a.ncols()).map(move |j| a[(i, j)])),
    )
}

pub fn unvec(v: &CVec, rows: usize, cols: usize) -> Result<Mat> {
    if rows * cols != v.len() {
        return Err(QsimError::DimensionMismatch {
            expected: rows * cols,
            got: v.len(),
        });
    }
    Ok(Mat::from_fn(rows, cols, |i, j| v[i * cols + j]))
}

/// Schmidt coefficients of a vector on C^da ⊗ C^db, nonincreasing.
pub fn schmidt_coefficients(v: &CVec, da: usize, db: usize) -> Result<Vec<f64>> {
    if da == 0 || db == 0 || da * db != v.len() {
        return Err(QsimError::Domain(format!(
            "cannot cut a vector of length {} as {da} x {db}",
            v.len()
        )));
    }
    Ok(singular_values(&unvec(v, da, db)?))
}

/// Partial trace over the subsystems not listed in `keep`.
/// `dims` lists subsystem dimensions, most significant first.
pub fn partial_trace(rho: &Mat, dims: &[usize], keep: &[usize]) -> Result<Mat> {
    let total: usize = dims.iter().product();
    if rho.nrows() != total || !rho.is_square() {
        return Err(QsimError::DimensionMismatch {
            expected: total,
            got: rho.nrows(),
        });
    }
    if let Some(&bad) = keep.iter().find(|&&k| k >= dims.len()) {
        return Err(QsimError::Domain(format!("no subsystem {bad}")));
    }
    let kept_dim: usize = keep.iter().map(|&k| dims[k]).product();
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep.contains(k)).collect();
    let traced_dim: usize = traced.iter().map(|&k| dims[k]).product();

    // full index for every (kept, traced) pair
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let compose = |sel: &[usize], mut idx: usize| -> usize {
        let mut full = 0;
        for &k in sel.iter().rev() {
            full += (idx % dims[k]) * strides[k];
            idx /= dims[k];
        }
        full
    };
    let kept_part: Vec<usize> = (0..kept_dim).map(|a| compose(keep, a)).collect();
    let traced_part: Vec<usize> = (0..traced_dim).map(|t| compose(&traced, t)).collect();

    let mut out = zeros(kept_dim, kept_dim);
    for a in 0..kept_dim {
        for b in 0..kept_dim {
            let mut acc = C64::new(0.0, 0.0);
            for &t in &traced_part {
                acc += rho[(kept_part[a] + t, kept_part[b] + t)];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(out)
}

/// Complex Gaussian matrix with independent N(0,1/2) real and imaginary parts.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Haar-random unitary (QR of a Ginibre matrix with the phase fix).
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Mat {
    let g = ginibre(dim, dim, rng);
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut u = q;
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { cr(1.0) };
        let col = u.column(j) * phase;
        u.set_column(j, &col);
    }
    u
}

/// Random density operator of the given rank (trace one).
pub fn random_density<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> Mat {
    let g = ginibre(dim, rank, rng);
    let rho = &g * g.adjoint();
    let t = trace(&rho).re;
    rho / cr(t)
}

pub fn random_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CVec {
    let g = ginibre(dim, 1, rng);
    let v = g.column(0).into_owned();
    let n = v.norm();
    v / cr(n)
}

/// Split an index into MSB-first bits of the given length.
pub fn bits_of(index: usize, len: usize) -> Vec<u8> {
    (0..len).map(|k| ((index >> (len - 1 - k)) & 1) as u8).collect()
}

pub fn index_of(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn hadamard_is_unitary() {
        let h = hadamard(3);
        assert!(max_abs(&(&h * h.adjoint() - identity(8))) < 1e-14);
    }

    #[test]
    fn factored_trace_norm_matches_dense() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let f = ginibre(6, 2, &mut rng);
            let g = ginibre(6, 3, &mut rng);
            let dense = trace_norm(&(&f * f.adjoint() - &g * g.adjoint())).unwrap();
            assert!((dense - trace_norm_factored(&f, &g)).abs() < 1e-10);
        }
    }

    #[test]
    fn bits_round_trip() {
        for i in 0..32 {
            assert_eq!(index_of(&bits_of(i, 5)), i);
        }
        assert_eq!(bits_of(4, 3), vec![1, 0, 0]);
    }
}

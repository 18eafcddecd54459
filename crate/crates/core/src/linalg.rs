//! Small dense linear-algebra helpers shared by the channel model, the
//! weight synthesis, and the optimizers.
//!
//! Everything here operates on `DMatrix<Complex<f64>>`. Log-determinants go
//! through a Cholesky factorization of `I + S` rather than an
//! eigendecomposition, and eigenvector routines apply a deterministic phase
//! normalization so repeated runs produce bit-identical bases.

use nalgebra::{Cholesky, SymmetricEigen};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::{C64, CMat, RVec};

/// Hermitian symmetrization `(S + S^H) / 2`.
pub fn hermitian_part(s: &CMat) -> CMat {
    (s + s.adjoint()).scale(0.5)
}

/// `log2 det(I + S)` for Hermitian positive semidefinite `S`.
///
/// The input is symmetrized before factorization; a failed Cholesky of
/// `I + S` signals an input that is not PSD to working precision.
pub fn log2_det_i_plus(s: &CMat) -> Result<f64> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::validation("log2_det_i_plus expects a square matrix"));
    }
    let mut a = hermitian_part(s);
    for i in 0..n {
        a[(i, i)] += C64::new(1.0, 0.0);
    }
    let chol = Cholesky::new(a)
        .ok_or_else(|| Error::numerical("Cholesky of I + S failed; S is not PSD"))?;
    let l = chol.l();
    let mut acc = 0.0;
    for i in 0..n {
        let d = l[(i, i)];
        // complex sqrt makes Cholesky "succeed" on indefinite input; the
        // pivots of a genuine PD factorization are real positive
        if !(d.re > 0.0) || d.im.abs() > 1e-9 * (1.0 + d.re.abs()) {
            return Err(Error::numerical("Cholesky of I + S failed; S is not PSD"));
        }
        acc += d.re.ln();
    }
    Ok(2.0 * acc / std::f64::consts::LN_2)
}

/// `log2 det(A)` for Hermitian positive definite `A`.
pub fn log2_det_pd(a: &CMat) -> Result<f64> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::validation("log2_det_pd expects a square matrix"));
    }
    let chol = Cholesky::new(hermitian_part(a))
        .ok_or_else(|| Error::numerical("Cholesky failed; matrix not positive definite"))?;
    let l = chol.l();
    let mut acc = 0.0;
    for i in 0..n {
        let d = l[(i, i)];
        if !(d.re > 0.0) || d.im.abs() > 1e-9 * (1.0 + d.re.abs()) {
            return Err(Error::numerical("Cholesky failed; matrix not positive definite"));
        }
        acc += d.re.ln();
    }
    Ok(2.0 * acc / std::f64::consts::LN_2)
}

/// Solve `A x = b` for Hermitian positive definite `A`.
pub fn solve_hermitian(a: &CMat, b: &CMat) -> Result<CMat> {
    let chol = Cholesky::new(hermitian_part(a))
        .ok_or_else(|| Error::numerical("Cholesky failed; matrix not positive definite"))?;
    Ok(chol.solve(b))
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order and a deterministic per-column phase convention: the
/// first entry of each eigenvector with modulus above `1e-12` is made real
/// and positive.
pub fn sorted_hermitian_eigen(h: &CMat) -> Result<(RVec, CMat)> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::validation("eigendecomposition expects a square matrix"));
    }
    let eig = SymmetricEigen::new(hermitian_part(h));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut values = RVec::zeros(n);
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).clone_owned();
        normalize_phase(&mut col);
        vectors.set_column(dst, &col);
    }
    Ok((values, vectors))
}

/// Top-`k` eigenvectors (descending eigenvalues) of a Hermitian matrix.
pub fn top_k_eigvecs(h: &CMat, k: usize) -> Result<CMat> {
    if k > h.nrows() {
        return Err(Error::validation(format!(
            "requested {} eigenvectors from a {}-dimensional matrix",
            k,
            h.nrows()
        )));
    }
    let (_, vectors) = sorted_hermitian_eigen(h)?;
    Ok(vectors.columns(0, k).clone_owned())
}

fn normalize_phase(col: &mut nalgebra::DVector<C64>) {
    for i in 0..col.len() {
        let m = col[i].norm();
        if m > 1e-12 {
            let phase = col[i] / C64::new(m, 0.0);
            let rot = phase.conj();
            for j in 0..col.len() {
                col[j] *= rot;
            }
            return;
        }
    }
}

/// Matrix with i.i.d. standard complex Gaussian entries (unit variance,
/// i.e. real and imaginary parts each `N(0, 1/2)`).
pub fn random_complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(re * scale, im * scale)
    })
}

/// Orthonormal basis of the column span via QR, with the diagonal of `R`
/// rotated to be real positive so the basis is unique for a given input.
pub fn orthonormal_basis(a: &CMat) -> CMat {
    let k = a.nrows().min(a.ncols());
    let qr = a.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        let d = r[(j, j)];
        let m = d.norm();
        if m > 1e-300 {
            let rot = d / C64::new(m, 0.0);
            let mut col = q.column_mut(j);
            for i in 0..col.len() {
                col[i] *= rot;
            }
        }
    }
    q.columns(0, k).clone_owned()
}

/// Seeded random matrix with orthonormal columns.
pub fn random_orthonormal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    orthonormal_basis(&random_complex_gaussian(rows, cols, rng))
}

/// `‖M^H M − I‖_F < tol` check for (tall) matrices with orthonormal columns.
pub fn is_orthonormal(m: &CMat, tol: f64) -> bool {
    let k = m.ncols();
    let gram = m.adjoint() * m;
    (gram - CMat::identity(k, k)).norm() < tol
}

/// Chordal distance between the column spans of two orthonormal bases:
/// `sqrt(k − ‖A^H B‖_F²)`. Zero iff the spans coincide; insensitive to the
/// per-column phase and ordering ambiguity of eigenvector bases.
pub fn subspace_distance(a: &CMat, b: &CMat) -> f64 {
    let overlap = (a.adjoint() * b).norm_squared();
    let k = a.ncols().min(b.ncols()) as f64;
    (k - overlap).max(0.0).sqrt()
}

/// All entries finite (no NaN/Inf).
pub fn all_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

//! Dense complex-matrix kernels shared by the decoupler, the detectors and
//! the rate analytics.
//!
//! Everything here is a pure function of its inputs. Storage is
//! [`nalgebra::DMatrix`] over [`Complex64`].

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, LU, QR, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

/// Relative thresholds used for rank decisions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// QR pivot magnitude, relative to the Frobenius norm of the input.
    pub pivot: f64,
    /// Singular value cut-off, relative to the largest singular value.
    pub rank: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            pivot: 1e-12,
            rank: 1e-10,
        }
    }
}

/// Row-space factorization `M = R·Q` with orthonormal rows in `Q`.
#[derive(Debug, Clone)]
pub struct RowQr {
    /// `m×m`, lower triangular.
    pub r: ComplexMatrix,
    /// `m×n`, `Q·Qᴴ = I`.
    pub q: ComplexMatrix,
}

pub fn frobenius(m: &ComplexMatrix) -> f64 {
    m.norm()
}

pub fn ensure_finite(m: &ComplexMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Factors a wide matrix `M` (`m ≤ n`) as `R·Q`.
///
/// Computed from a Householder QR of `Mᴴ`, so `R` comes out lower
/// triangular. Only the row space of `Q` matters to callers.
pub fn qr_row_basis(m: &ComplexMatrix) -> Result<RowQr> {
    qr_row_basis_with(m, &Tolerances::default())
}

pub fn qr_row_basis_with(m: &ComplexMatrix, tol: &Tolerances) -> Result<RowQr> {
    let (rows, cols) = m.shape();
    if rows > cols {
        return Err(Error::Dimension(format!(
            "row basis needs a wide matrix, got {rows}x{cols}"
        )));
    }
    ensure_finite(m, "qr input")?;
    if rows == 0 {
        return Ok(RowQr {
            r: ComplexMatrix::zeros(0, 0),
            q: ComplexMatrix::zeros(0, cols),
        });
    }
    let threshold = tol.pivot * frobenius(m);
    let qr = QR::new(m.adjoint());
    let r_upper = qr.r();
    let pivot = (0..rows)
        .map(|i| r_upper[(i, i)].norm())
        .fold(f64::INFINITY, f64::min);
    if !(pivot > threshold) {
        return Err(Error::RankDeficient { pivot, threshold });
    }
    Ok(RowQr {
        r: r_upper.adjoint(),
        q: qr.q().adjoint(),
    })
}

/// Solves `A·X = B` for Hermitian positive definite `A`, falling back to LU
/// when the Cholesky factorization breaks down.
pub fn hermitian_solve(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    context: &'static str,
) -> Result<ComplexMatrix> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "{context}: system {}x{} with right-hand side {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if let Some(chol) = Cholesky::new(a.clone()) {
        let x = chol.solve(b);
        if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Ok(x);
        }
    }
    general_solve(a, b, context)
}

/// Solves `A·X = B` with partial-pivot LU.
pub fn general_solve(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    context: &'static str,
) -> Result<ComplexMatrix> {
    let x = LU::new(a.clone())
        .solve(b)
        .ok_or(Error::SingularMatrix(context))?;
    if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(x)
    } else {
        Err(Error::SingularMatrix(context))
    }
}

/// Regularized channel inversion `Hᴴ(HHᴴ + σ²I)⁻¹` for `N_t ≤ N_r`.
///
/// Evaluated in the equivalent `(HᴴH + σ²I)⁻¹Hᴴ` form, which stays
/// well-posed at `σ² = 0` where it is the exact left inverse.
pub fn regularized_pseudo_inverse(h: &ComplexMatrix, sigma2: f64) -> Result<ComplexMatrix> {
    let (n_r, n_t) = h.shape();
    if n_t > n_r {
        return Err(Error::Dimension(format!(
            "channel inversion needs N_t <= N_r, got {n_r}x{n_t}"
        )));
    }
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::Numeric(format!(
            "regularization {sigma2} must be finite and >= 0"
        )));
    }
    let h_adj = h.adjoint();
    let mut gram = &h_adj * h;
    for i in 0..n_t {
        gram[(i, i)] += C64::new(sigma2, 0.0);
    }
    hermitian_solve(&gram, &h_adj, "channel inversion")
}

fn hermitian_part(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "eigenvalues need a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    ensure_finite(a, "hermitian input")?;
    let scale = frobenius(a);
    let skew = frobenius(&(a - a.adjoint()));
    if skew > 1e-8 * scale {
        return Err(Error::NotHermitian(if scale > 0.0 {
            skew / scale
        } else {
            skew
        }));
    }
    Ok((a + a.adjoint()).scale(0.5))
}

/// Real eigenvalues of a Hermitian matrix, sorted in descending order.
pub fn hermitian_eigenvalues(a: &ComplexMatrix) -> Result<Vec<f64>> {
    let sym = hermitian_part(a)?;
    if sym.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut values: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|x, y| y.total_cmp(x));
    Ok(values)
}

/// Unique Hermitian positive semidefinite square root. Round-off negative
/// eigenvalues are clipped to zero.
pub fn psd_sqrt(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let sym = hermitian_part(a)?;
    let n = sym.nrows();
    if n == 0 {
        return Ok(sym);
    }
    let eig = SymmetricEigen::new(sym);
    let mut scaled = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let root = lambda.max(0.0).sqrt();
        scaled.column_mut(j).scale_mut(root);
    }
    Ok(&scaled * eig.eigenvectors.adjoint())
}

/// `log₂ det(A)` for Hermitian positive definite `A`.
pub fn log2_det_hpd(a: &ComplexMatrix, context: &'static str) -> Result<f64> {
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let sym = hermitian_part(a)?;
    let chol = Cholesky::new(sym).ok_or(Error::SingularMatrix(context))?;
    let l = chol.l_dirty();
    let ln_det: f64 = (0..a.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum();
    Ok(ln_det / std::f64::consts::LN_2)
}

/// Orthonormal basis `Ũ₀ᴴ` of the left null space of a tall `N_r×c` matrix.
///
/// Rows satisfy `Ũ₀ᴴ·M ≈ 0`; the output has `N_r − r` rows where `r` is the
/// numerical rank of `M`.
pub fn left_null_space_basis(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    left_null_space_basis_with(m, &Tolerances::default())
}

pub fn left_null_space_basis_with(m: &ComplexMatrix, tol: &Tolerances) -> Result<ComplexMatrix> {
    let (n_r, c) = m.shape();
    if c >= n_r {
        return Err(Error::Dimension(format!(
            "left null space needs more rows than columns, got {n_r}x{c}"
        )));
    }
    ensure_finite(m, "null space input")?;
    // Zero-pad to square so the SVD yields the full left singular basis.
    let mut padded = ComplexMatrix::zeros(n_r, n_r);
    padded.columns_mut(0, c).copy_from(m);
    let svd = SVD::new(padded, true, false);
    let u = svd.u.ok_or(Error::Numeric("SVD did not return U".into()))?;
    let mut order: Vec<usize> = (0..n_r).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let largest = svd.singular_values[order[0]];
    let rank = order
        .iter()
        .filter(|&&i| largest > 0.0 && svd.singular_values[i] > tol.rank * largest)
        .count();
    let mut basis = ComplexMatrix::zeros(n_r - rank, n_r);
    for (row, &col) in order[rank..].iter().enumerate() {
        basis.row_mut(row).copy_from(&u.column(col).adjoint());
    }
    Ok(basis)
}

/// Numerical rank of `m` from its singular values.
pub fn numerical_rank(m: &ComplexMatrix, tol: &Tolerances) -> usize {
    if m.is_empty() {
        return 0;
    }
    let values = m.singular_values();
    let largest = values.max();
    values
        .iter()
        .filter(|&&s| largest > 0.0 && s > tol.rank * largest)
        .count()
}

/// Column concatenation of equally tall blocks.
pub fn hcat(rows: usize, blocks: &[&ComplexMatrix]) -> ComplexMatrix {
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let mut offset = 0;
    for block in blocks {
        debug_assert_eq!(block.nrows(), rows);
        out.columns_mut(offset, block.ncols()).copy_from(*block);
        offset += block.ncols();
    }
    out
}

//! Small dense linear-algebra helpers shared by the geometry modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry accepted (and silently removed) in input shape matrices.
pub const SYMMETRY_RTOL: f64 = 1e-10;

/// Relative singular-value floor below which a linear map counts as rank deficient.
pub const RANK_RTOL: f64 = 1e-12;

/// Dimension up to which the spectral radius comes from a dense eigensolve.
pub const DENSE_EIGEN_MAX_DIM: usize = 64;

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn trace(m: &DMatrix<f64>) -> f64 {
    m.diagonal().sum()
}

/// `(m + mᵀ)/2` when `m` is square, finite and symmetric to within
/// `SYMMETRY_RTOL · max|m|`.
pub fn symmetrize_checked(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let tolerance = SYMMETRY_RTOL * max_abs(m);
    let asymmetry = (m - m.transpose()).iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if asymmetry > tolerance {
        return Err(Error::NonSymmetric {
            asymmetry,
            tolerance,
        });
    }
    Ok(symmetrize(m))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Lower Cholesky factor, or `None` when `m` is not positive definite.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = m.clone().cholesky()?;
    let l = chol.unpack();
    if l.diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
        Some(l)
    } else {
        None
    }
}

/// Lower-triangular `L` with positive diagonal and `L Lᵀ = G Gᵀ`, from a QR
/// factorization of `Gᵀ`. Works for `G` of size n×m with m ≥ n even when
/// `G Gᵀ` is far too ill-conditioned for a direct Cholesky.
pub fn factor_from_generator(g: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = g.nrows();
    if g.ncols() < n {
        return None;
    }
    let r = g.transpose().qr().r();
    let mut l = r.transpose();
    for c in 0..n {
        let d = l[(c, c)];
        if !d.is_finite() || d == 0.0 {
            return None;
        }
        if d < 0.0 {
            for row in 0..n {
                l[(row, c)] = -l[(row, c)];
            }
        }
    }
    Some(l)
}

/// True when `m` (rows ≤ cols) has full row rank by a relative singular-value test.
pub fn has_full_row_rank(m: &DMatrix<f64>) -> bool {
    if m.nrows() == 0 || m.nrows() > m.ncols() || m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().fold(0.0_f64, |a, v| a.max(*v));
    let min = sv.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    max > 0.0 && min > RANK_RTOL * max
}

/// Smallest eigenvalue of a symmetric matrix with its unit eigenvector.
pub fn min_eigenpair(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let (idx, val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
    (val, eig.eigenvectors.column(idx).into_owned())
}

/// Spectral radius max |λ|. Dense Schur eigensolve up to
/// [`DENSE_EIGEN_MAX_DIM`], repeated squaring (Gelfand's formula) above.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    assert_eq!(a.nrows(), a.ncols(), "spectral radius of a non-square matrix");
    if a.nrows() == 0 {
        return 0.0;
    }
    if a.nrows() <= DENSE_EIGEN_MAX_DIM {
        return a
            .clone()
            .complex_eigenvalues()
            .iter()
            .fold(0.0_f64, |acc, z| acc.max(z.norm()));
    }
    gelfand_radius(a, 40)
}

pub(crate) fn gelfand_radius(a: &DMatrix<f64>, squarings: u32) -> f64 {
    let s0 = a.norm();
    if s0 == 0.0 {
        return 0.0;
    }
    let mut b = a / s0;
    let mut log_norm = s0.ln();
    let mut power = 1.0_f64;
    for _ in 0..squarings {
        b = &b * &b;
        log_norm *= 2.0;
        power *= 2.0;
        let s = b.norm();
        if s == 0.0 {
            return 0.0;
        }
        b /= s;
        log_norm += s.ln();
    }
    (log_norm / power).exp()
}

/// Row-major nested vectors to a matrix; rejects ragged or empty input.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::Parse("empty matrix".into()));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(Error::Parse("matrix with empty rows".into()));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::Parse(format!(
            "ragged matrix: row {i} has {} entries, expected {ncols}",
            r.len()
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

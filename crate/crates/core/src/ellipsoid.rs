//! Ellipsoids `{x : (x−c)ᵀ Q⁻¹ (x−c) ≤ 1}` and their support-function calculus.
//!
//! Every [`Ellipsoid`] carries a lower-triangular factor `L` with `Q = L Lᵀ`.
//! Support values are evaluated as `‖Lᵀℓ‖`, which stays non-negative and
//! accurate for very flat (but still positive definite) shapes such as the
//! high powers of a stable transition matrix that appear in reachability.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Accepted deviation of ‖ℓ‖ from one.
pub const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    center: DVector<f64>,
    shape: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl Ellipsoid {
    /// Validates `shape` (square, symmetric up to rounding, positive definite)
    /// and pairs it with `center`.
    pub fn new(shape: DMatrix<f64>, center: DVector<f64>) -> Result<Self> {
        let shape = linalg::symmetrize_checked(&shape)?;
        if shape.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if center.len() != shape.nrows() {
            return Err(Error::DimensionMismatch {
                expected: shape.nrows(),
                found: center.len(),
            });
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let factor = linalg::cholesky_lower(&shape).ok_or(Error::NotPositiveDefinite)?;
        Ok(Self {
            center,
            shape,
            factor,
        })
    }

    pub fn centered(shape: DMatrix<f64>) -> Result<Self> {
        let n = shape.nrows();
        Self::new(shape, DVector::zeros(n))
    }

    /// The ball `{x : ‖x‖ ≤ radius}`.
    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        Self::centered(DMatrix::identity(dim, dim) * (radius * radius))
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    /// Lower-triangular `L` with `Q = L Lᵀ`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.shape)
    }

    /// Same shape, different center.
    pub fn with_center(&self, center: DVector<f64>) -> Result<Self> {
        self.check_dim(center.len())?;
        Ok(Self {
            center,
            ..self.clone()
        })
    }

    pub(crate) fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }

    /// `⟨ℓ, Qℓ⟩^{1/2}`, the support value of the centered shape.
    pub fn shape_support(&self, l: &Direction) -> Result<f64> {
        self.check_dim(l.dim())?;
        Ok(self.shape_support_unchecked(l.as_vector()))
    }

    pub(crate) fn shape_support_unchecked(&self, l: &DVector<f64>) -> f64 {
        self.factor.tr_mul(l).norm()
    }

    /// Support function `⟨ℓ,c⟩ + ⟨ℓ,Qℓ⟩^{1/2}`.
    pub fn support(&self, l: &Direction) -> Result<f64> {
        self.check_dim(l.dim())?;
        Ok(self.center.dot(l.as_vector()) + self.shape_support_unchecked(l.as_vector()))
    }

    /// The surface point `Qℓ / ⟨ℓ,Qℓ⟩^{1/2} + c` at which the support value is attained.
    pub fn support_point(&self, l: &Direction) -> Result<DVector<f64>> {
        self.check_dim(l.dim())?;
        Ok(self.shape_support_point_unchecked(l.as_vector()) + &self.center)
    }

    pub(crate) fn shape_support_point_unchecked(&self, l: &DVector<f64>) -> DVector<f64> {
        let y = self.factor.tr_mul(l);
        let norm = y.norm();
        &self.factor * (y / norm)
    }

    /// Image `{Mx + b : x ∈ E}`, i.e. `E(MQMᵀ, Mc + b)`.
    ///
    /// Fails with [`Error::RankDeficient`] unless `M` has full row rank.
    pub fn affine_image(&self, m: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        self.check_dim(m.ncols())?;
        if b.len() != m.nrows() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: b.len(),
            });
        }
        if !linalg::has_full_row_rank(m) {
            return Err(Error::RankDeficient);
        }
        self.image_full_rank(m, b)
    }

    /// Affine image without the rank test; `m` must already be known to have
    /// full row rank and matching dimensions.
    pub(crate) fn image_full_rank(&self, m: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        let generator = m * &self.factor;
        let factor = linalg::factor_from_generator(&generator).ok_or(Error::RankDeficient)?;
        let shape = linalg::symmetrize(&(m * &self.shape * m.transpose()));
        Ok(Self {
            center: m * &self.center + b,
            shape,
            factor,
        })
    }

    /// `(x−c)ᵀQ⁻¹(x−c)`, via a triangular solve.
    pub fn quadratic_form(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x.len())?;
        let d = x - &self.center;
        let y = self
            .factor
            .solve_lower_triangular(&d)
            .ok_or(Error::NotPositiveDefinite)?;
        Ok(y.norm_squared())
    }

    pub fn contains_point(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        Ok(self.quadratic_form(x)? <= 1.0 + tol)
    }

    pub fn to_record(&self) -> EllipsoidRecord {
        EllipsoidRecord {
            center: self.center.iter().copied().collect(),
            shape: linalg::matrix_to_rows(&self.shape),
        }
    }

    pub fn from_record(record: &EllipsoidRecord) -> Result<Self> {
        let shape = linalg::matrix_from_rows(&record.shape)?;
        let center = DVector::from_vec(record.center.clone());
        Self::new(shape, center)
    }
}

/// JSON encoding `{"center":[...], "shape":[[...],...]}` (row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipsoidRecord {
    pub center: Vec<f64>,
    pub shape: Vec<Vec<f64>>,
}

/// A unit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction(DVector<f64>);

impl Direction {
    /// Accepts `v` only if it already has unit norm (within [`UNIT_NORM_TOL`]).
    pub fn new(v: DVector<f64>) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::NotUnitNorm { norm });
        }
        Ok(Self(v))
    }

    /// Scales `v` to unit length.
    pub fn normalized(v: DVector<f64>) -> Result<Self> {
        let norm = v.norm();
        if norm == 0.0 {
            return Err(Error::ZeroDirection);
        }
        if !norm.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Self(v / norm))
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        Self::normalized(DVector::from_column_slice(v))
    }

    /// The standard basis vector `e_axis` in dimension `dim`.
    pub fn axis(dim: usize, axis: usize) -> Result<Self> {
        if axis >= dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: axis + 1,
            });
        }
        let mut v = DVector::zeros(dim);
        v[axis] = 1.0;
        Ok(Self(v))
    }

    pub(crate) fn from_unit_unchecked(v: DVector<f64>) -> Self {
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

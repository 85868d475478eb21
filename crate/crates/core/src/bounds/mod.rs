//! Outer ellipsoidal bounds of a Minkowski sum.
//!
//! Every bound here has the form `Q = Q₀ + Q_base` where the base is either
//! the pair-weighted combination
//! `Q_u = Σ Qᵢ + Σ_{i<j} (p_ij Qᵢ + p_ij⁻¹ Qⱼ)`
//! or the tangent shape
//! `Q_ℓ = (Σ ⟨ℓ,Qᵢℓ⟩^{1/2}) (Σ ⟨ℓ,Qᵢℓ⟩^{-1/2} Qᵢ)`.
//! With `Q₀ = 0` the containment holds by a sum-of-squares argument; a
//! nonzero symmetric `Q₀` is admissible when `Q₀ + Q_base` stays positive
//! definite and keeps dominating the sum's support function. The second
//! condition cannot be certified in closed form, so it is checked on a
//! [`DirectionGrid`] and the grid is recorded in the [`FeasibilityReport`].

mod refine;

pub use refine::{refine_q0, RefineOptions};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ellipsoid::{Direction, Ellipsoid};
use crate::error::{Error, Result};
use crate::linalg;
use crate::minkowski::{argmin, boundary_point, DirectionGrid, EllipsoidSum};

/// Support-dominance slack accepted on grid checks.
pub const SUPPORT_TOL: f64 = 1e-9;
/// Relative tolerance for `‖Q₀ℓ‖ ≤ KERNEL_RTOL · ‖Q₀‖_F`.
pub const KERNEL_RTOL: f64 = 1e-10;
/// Range that pair weights are clamped to during searches.
pub const P_MIN: f64 = 1e-6;
pub const P_MAX: f64 = 1e6;

/// Positive weights `p_ij` over the pairs `i < j` (0-based), stored in
/// lexicographic pair order.
#[derive(Debug, Clone, PartialEq)]
pub struct PairWeights {
    k: usize,
    values: Vec<f64>,
}

impl PairWeights {
    pub fn pair_count(k: usize) -> usize {
        k * k.saturating_sub(1) / 2
    }

    pub fn new(k: usize, values: Vec<f64>) -> Result<Self> {
        let expected = Self::pair_count(k);
        if values.len() != expected {
            return Err(Error::IncompleteWeights {
                expected,
                found: values.len(),
            });
        }
        let w = Self { k, values };
        if let Some((i, j, value)) = w.iter().find(|(_, _, p)| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::NonPositiveWeight { i, j, value });
        }
        Ok(w)
    }

    pub fn from_fn(k: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(Self::pair_count(k));
        for i in 0..k {
            for j in i + 1..k {
                values.push(f(i, j));
            }
        }
        Self::new(k, values)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    fn index(&self, i: usize, j: usize) -> usize {
        assert!(i < j && j < self.k, "pair ({i},{j}) outside index set for k={}", self.k);
        // pairs before row i: Σ_{r<i} (k-1-r)
        i * (2 * self.k - i - 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::NonPositiveWeight { i, j, value });
        }
        let idx = self.index(i, j);
        self.values[idx] = value.clamp(P_MIN, P_MAX);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let k = self.k;
        (0..k)
            .flat_map(move |i| (i + 1..k).map(move |j| (i, j)))
            .zip(self.values.iter().copied())
            .map(|((i, j), p)| (i, j, p))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Which base shape a regularizer is added to.
#[derive(Debug, Clone, PartialEq)]
pub enum RegularizerBase {
    /// `Q_u(p)`.
    Weights(PairWeights),
    /// `Q_ℓ`; enables the kernel condition `ℓ ∈ ker Q₀`.
    Tangent(Direction),
    /// An explicit base shape, e.g. a previously computed bound.
    Shape(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// `Q₀ + Q_base` is positive definite.
    pub pd_ok: bool,
    /// Support dominance holds on every grid direction (up to `tol`).
    pub support_ok: bool,
    /// `ℓ ∈ ker Q₀`; only evaluated for tangent bases.
    pub kernel_ok: Option<bool>,
    pub grid: DirectionGrid,
    pub min_margin: f64,
    pub min_index: usize,
    pub tol: f64,
    /// `tr(Q₀)`, i.e. the change in trace relative to the base.
    pub trace_change: f64,
}

impl FeasibilityReport {
    pub fn feasible(&self) -> bool {
        self.pd_ok && self.support_ok && self.kernel_ok.unwrap_or(true)
    }

    fn to_error(&self) -> Error {
        Error::InfeasibleRegularizer {
            pd_ok: self.pd_ok,
            support_ok: self.support_ok,
            min_margin: self.min_margin,
        }
    }
}

/// A symmetric `Q₀` together with the certificate of the checks it passed.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerMatrix {
    pub matrix: DMatrix<f64>,
    pub certificate: FeasibilityReport,
}

/// An outer bound with the regularizer it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedBound {
    pub ellipsoid: Ellipsoid,
    pub regularizer: RegularizerMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentBound {
    pub ellipsoid: Ellipsoid,
    pub tangency_point: DVector<f64>,
    pub direction: Direction,
    pub regularizer: RegularizerMatrix,
}

fn check_square(m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if m.nrows() != n { m.nrows() } else { m.ncols() },
        });
    }
    Ok(())
}

/// `Q_u = Σ Qᵢ + Σ_{i<j} (p_ij Qᵢ + p_ij⁻¹ Qⱼ)`.
pub fn pair_weighted_shape(sum: &EllipsoidSum, p: &PairWeights) -> Result<DMatrix<f64>> {
    let k = sum.len();
    if p.k() != k {
        return Err(Error::IncompleteWeights {
            expected: PairWeights::pair_count(k),
            found: p.len(),
        });
    }
    let terms = sum.terms();
    let n = sum.dim();
    let mut q = terms.iter().fold(DMatrix::zeros(n, n), |acc, e| acc + e.shape());
    for (i, j, pij) in p.iter() {
        q += terms[i].shape() * pij + terms[j].shape() / pij;
    }
    Ok(linalg::symmetrize(&q))
}

/// `Q_ℓ = (Σ ⟨ℓ,Qᵢℓ⟩^{1/2}) (Σ ⟨ℓ,Qᵢℓ⟩^{-1/2} Qᵢ)`.
pub fn tangent_shape(sum: &EllipsoidSum, l: &Direction) -> Result<DMatrix<f64>> {
    let n = sum.dim();
    let s: Vec<f64> = sum
        .terms()
        .iter()
        .map(|e| e.shape_support(l))
        .collect::<Result<_>>()?;
    let total: f64 = s.iter().sum();
    let weighted = sum
        .terms()
        .iter()
        .zip(&s)
        .fold(DMatrix::zeros(n, n), |acc, (e, si)| acc + e.shape() / *si);
    Ok(linalg::symmetrize(&(weighted * total)))
}

/// Pair weights `p_ij = ⟨ℓ,Qⱼℓ⟩^{1/2} / ⟨ℓ,Qᵢℓ⟩^{1/2}` that make the
/// pair-weighted family touch the sum at ℓ.
pub fn tangent_weights(sum: &EllipsoidSum, l: &Direction) -> Result<PairWeights> {
    let s: Vec<f64> = sum
        .terms()
        .iter()
        .map(|e| e.shape_support(l))
        .collect::<Result<_>>()?;
    PairWeights::from_fn(sum.len(), |i, j| s[j] / s[i])
}

fn base_matrix(sum: &EllipsoidSum, base: &RegularizerBase) -> Result<DMatrix<f64>> {
    match base {
        RegularizerBase::Weights(p) => pair_weighted_shape(sum, p),
        RegularizerBase::Tangent(l) => tangent_shape(sum, l),
        RegularizerBase::Shape(m) => {
            check_square(m, sum.dim())?;
            linalg::symmetrize_checked(m)
        }
    }
}

/// Margins `⟨ℓ,Qℓ⟩^{1/2} − Σ ⟨ℓ,Qᵢℓ⟩^{1/2}` of a centered shape over the grid.
/// A negative quadratic form counts as support 0.
pub(crate) fn shape_margins(q: &DMatrix<f64>, sum: &EllipsoidSum, grid: &DirectionGrid) -> Vec<f64> {
    grid.directions()
        .par_iter()
        .map(|l| {
            let v = l.as_vector();
            let quad = v.dot(&(q * v));
            quad.max(0.0).sqrt() - sum.shape_support_unchecked(v)
        })
        .collect()
}

/// Checks a candidate `Q₀` against the sum. Failures are reported, never thrown
/// (dimension errors aside).
pub fn verify_regularizer(
    sum: &EllipsoidSum,
    q0: &DMatrix<f64>,
    base: &RegularizerBase,
    grid: &DirectionGrid,
) -> Result<FeasibilityReport> {
    let n = sum.dim();
    check_square(q0, n)?;
    if grid.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: grid.dim(),
        });
    }
    let q0 = linalg::symmetrize_checked(q0)?;
    let q = &q0 + base_matrix(sum, base)?;
    let pd_ok = linalg::cholesky_lower(&q).is_some();
    let margins = shape_margins(&q, sum, grid);
    let (min_index, min_margin) = argmin(&margins);
    let kernel_ok = match base {
        RegularizerBase::Tangent(l) => {
            let residual = (&q0 * l.as_vector()).norm();
            Some(residual <= KERNEL_RTOL * q0.norm())
        }
        _ => None,
    };
    Ok(FeasibilityReport {
        pd_ok,
        support_ok: min_margin >= -SUPPORT_TOL,
        kernel_ok,
        grid: grid.clone(),
        min_margin,
        min_index,
        tol: SUPPORT_TOL,
        trace_change: linalg::trace(&q0),
    })
}

/// Member of the pair-weighted family `E(Q₀ + Q_u(p))`, centered at `Σ cᵢ`.
pub fn family_bound(
    sum: &EllipsoidSum,
    p: &PairWeights,
    q0: &DMatrix<f64>,
    grid: &DirectionGrid,
) -> Result<CertifiedBound> {
    let base = RegularizerBase::Weights(p.clone());
    let report = verify_regularizer(sum, q0, &base, grid)?;
    if !report.feasible() {
        return Err(report.to_error());
    }
    let q0 = linalg::symmetrize(q0);
    let shape = &q0 + pair_weighted_shape(sum, p)?;
    let ellipsoid = Ellipsoid::new(shape, sum.center())?;
    Ok(CertifiedBound {
        ellipsoid,
        regularizer: RegularizerMatrix {
            matrix: q0,
            certificate: report,
        },
    })
}

/// Bound `E(Q₀ + Q_ℓ)` touching the sum at its boundary point with normal ℓ.
/// `q0 = None` means `Q₀ = 0`.
pub fn tangent_bound(
    sum: &EllipsoidSum,
    l: &Direction,
    q0: Option<&DMatrix<f64>>,
    grid: &DirectionGrid,
) -> Result<TangentBound> {
    let n = sum.dim();
    let q0 = match q0 {
        Some(m) => {
            check_square(m, n)?;
            linalg::symmetrize_checked(m)?
        }
        None => DMatrix::zeros(n, n),
    };
    let base = RegularizerBase::Tangent(l.clone());
    let report = verify_regularizer(sum, &q0, &base, grid)?;
    if report.kernel_ok == Some(false) {
        return Err(Error::KernelViolation {
            residual: (&q0 * l.as_vector()).norm(),
            tolerance: KERNEL_RTOL * q0.norm(),
        });
    }
    if !report.feasible() {
        return Err(report.to_error());
    }
    let shape = &q0 + tangent_shape(sum, l)?;
    let ellipsoid = Ellipsoid::new(shape, sum.center())?;
    let tangency_point = boundary_point(sum, l)?.point;
    Ok(TangentBound {
        ellipsoid,
        tangency_point,
        direction: l.clone(),
        regularizer: RegularizerMatrix {
            matrix: q0,
            certificate: report,
        },
    })
}

/// `p*_ij = sqrt(tr Qⱼ / tr Qᵢ)`, the trace-minimizing weights. Empty for k = 1.
pub fn optimal_p(sum: &EllipsoidSum) -> PairWeights {
    let traces: Vec<f64> = sum.terms().iter().map(Ellipsoid::trace).collect();
    PairWeights::from_fn(sum.len(), |i, j| (traces[j] / traces[i]).sqrt())
        .expect("traces of positive definite matrices are positive")
}

/// `Q* = (Σ sqrt(tr Qᵢ)) (Σ Qᵢ / sqrt(tr Qᵢ))`, centered at `Σ cᵢ`.
pub fn min_trace_bound(sum: &EllipsoidSum) -> Result<Ellipsoid> {
    if sum.len() == 1 {
        return Ok(sum.terms()[0].clone());
    }
    let n = sum.dim();
    let roots: Vec<f64> = sum.terms().iter().map(|e| e.trace().sqrt()).collect();
    let total: f64 = roots.iter().sum();
    let weighted = sum
        .terms()
        .iter()
        .zip(&roots)
        .fold(DMatrix::zeros(n, n), |acc, (e, r)| acc + e.shape() / *r);
    Ellipsoid::new(linalg::symmetrize(&(weighted * total)), sum.center())
}

//! Reference instances: the four planar ellipsoids and the stable 3-D
//! transition matrix used throughout the examples, tests and demo configs.

use nalgebra::DMatrix;

use crate::ellipsoid::Ellipsoid;
use crate::minkowski::EllipsoidSum;

pub const FOUR_SHAPES: [[f64; 4]; 4] = [
    [0.41, 0.33, 0.33, 0.31],
    [0.23, 0.11, 0.11, 0.06],
    [0.17, -0.1, -0.1, 0.15],
    [0.01, 0.0, 0.0, 0.65],
];

/// Reference (two-decimal) minimum-trace shape for [`FOUR_SHAPES`].
pub const REFERENCE_MIN_TRACE: [f64; 4] = [3.41, 1.17, 1.17, 4.34];
/// Reference tangent shape at ℓ = e₁.
pub const REFERENCE_TANGENT_E1: [f64; 4] = [2.68, 0.81, 0.81, 12.49];
/// Reference tangent shape at ℓ = e₂.
pub const REFERENCE_TANGENT_E2: [f64; 4] = [4.22, 1.57, 1.57, 4.07];
/// Reference regularizer that shrinks the minimum-trace bound.
pub const REFERENCE_Q0: [f64; 4] = [-0.1193, -0.0412, -0.0412, -0.1521];

pub const TRANSITION_F: [f64; 9] = [
    0.67, 0.35, -0.12, //
    -0.66, -0.55, 0.41, //
    2.12, 1.83, 0.47,
];

pub fn mat2(v: &[f64; 4]) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, v)
}

pub fn four_ellipsoids() -> EllipsoidSum {
    EllipsoidSum::new(
        FOUR_SHAPES
            .iter()
            .map(|m| Ellipsoid::centered(mat2(m)).expect("reference shapes are positive definite"))
            .collect(),
    )
    .expect("non-empty")
}

pub fn transition_f() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &TRANSITION_F)
}

//! Exact Minkowski sums of ellipsoids.
//!
//! The support function of a sum is the sum of the support functions, and
//! the boundary point with outer normal ℓ is the sum of the per-term
//! support points `Σ ⟨ℓ,Qᵢℓ⟩^{-1/2} Qᵢ ℓ` (translated by `Σ cᵢ`).

use std::io::Write;
use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::ellipsoid::{Direction, Ellipsoid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidSum {
    terms: Vec<Ellipsoid>,
}

impl EllipsoidSum {
    pub fn new(terms: Vec<Ellipsoid>) -> Result<Self> {
        let first = terms.first().ok_or(Error::EmptySum)?;
        let n = first.dim();
        if let Some(bad) = terms.iter().find(|e| e.dim() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: bad.dim(),
            });
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[Ellipsoid] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.terms[0].dim()
    }

    pub fn center(&self) -> DVector<f64> {
        self.terms
            .iter()
            .fold(DVector::zeros(self.dim()), |acc, e| acc + e.center())
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }

    /// `Σᵢ ⟨ℓ,Qᵢℓ⟩^{1/2}`, the support of the centered sum.
    pub fn shape_support(&self, l: &Direction) -> Result<f64> {
        self.check_dim(l.dim())?;
        Ok(self.shape_support_unchecked(l.as_vector()))
    }

    pub(crate) fn shape_support_unchecked(&self, l: &DVector<f64>) -> f64 {
        self.terms.iter().map(|e| e.shape_support_unchecked(l)).sum()
    }
}

pub fn sum_support(sum: &EllipsoidSum, l: &Direction) -> Result<f64> {
    sum.check_dim(l.dim())?;
    Ok(sum
        .terms
        .iter()
        .map(|e| e.center().dot(l.as_vector()) + e.shape_support_unchecked(l.as_vector()))
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySample {
    pub direction: Direction,
    pub point: DVector<f64>,
    pub support: f64,
}

/// The boundary point of the sum whose outer normal is `l`.
pub fn boundary_point(sum: &EllipsoidSum, l: &Direction) -> Result<BoundarySample> {
    sum.check_dim(l.dim())?;
    let v = l.as_vector();
    let mut point = sum.center();
    for e in &sum.terms {
        point += e.shape_support_point_unchecked(v);
    }
    Ok(BoundarySample {
        direction: l.clone(),
        support: sum_support(sum, l)?,
        point,
    })
}

pub fn sample_boundary(sum: &EllipsoidSum, grid: &DirectionGrid) -> Result<Vec<BoundarySample>> {
    sum.check_dim(grid.dim())?;
    grid.directions()
        .par_iter()
        .map(|l| boundary_point(sum, l))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridScheme {
    /// Equispaced angles starting at 0 (n = 2).
    CircleUniform,
    /// Golden-angle spiral (n = 3).
    FibonacciSphere,
    /// Seeded normalized Gaussian vectors (n = 1 and n > 3).
    RandomGaussian,
}

impl GridScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            GridScheme::CircleUniform => "circle-uniform",
            GridScheme::FibonacciSphere => "fibonacci-sphere",
            GridScheme::RandomGaussian => "random-gaussian-normalized",
        }
    }
}

/// A finite, ordered set of unit directions. Cloning shares the storage.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionGrid {
    directions: Arc<[Direction]>,
    scheme: GridScheme,
    dim: usize,
    seed: u64,
}

impl DirectionGrid {
    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn scheme(&self) -> GridScheme {
        self.scheme
    }

    pub fn count(&self) -> usize {
        self.directions.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Default density: 720 directions in the plane, 2562 on the sphere,
    /// `10 n²` otherwise.
    pub fn default_count(dim: usize) -> usize {
        match dim {
            2 => 720,
            3 => 2562,
            n => (10 * n * n).max(2),
        }
    }
}

pub fn make_direction_grid(dim: usize, count: usize, seed: u64) -> Result<DirectionGrid> {
    if dim == 0 {
        return Err(Error::InvalidGrid("dimension must be positive".into()));
    }
    if count == 0 {
        return Err(Error::InvalidGrid("count must be positive".into()));
    }
    let (scheme, directions): (GridScheme, Vec<Direction>) = match dim {
        2 => (
            GridScheme::CircleUniform,
            (0..count)
                .map(|i| {
                    let theta = std::f64::consts::TAU * i as f64 / count as f64;
                    Direction::from_unit_unchecked(DVector::from_vec(vec![theta.cos(), theta.sin()]))
                })
                .collect(),
        ),
        3 => (GridScheme::FibonacciSphere, fibonacci_sphere(count)),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut dirs = Vec::with_capacity(count);
            while dirs.len() < count {
                let v = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
                let norm: f64 = v.norm();
                if norm > 1e-12 {
                    dirs.push(Direction::from_unit_unchecked(v / norm));
                }
            }
            (GridScheme::RandomGaussian, dirs)
        }
    };
    Ok(DirectionGrid {
        directions: directions.into(),
        scheme,
        dim,
        seed,
    })
}

fn fibonacci_sphere(count: usize) -> Vec<Direction> {
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            let v = DVector::from_vec(vec![r * phi.cos(), r * phi.sin(), z]);
            let norm = v.norm();
            Direction::from_unit_unchecked(v / norm)
        })
        .collect()
}

/// Per-direction margins `support(bound, ℓ) − sum_support(S, ℓ)`.
///
/// Only the grid directions are checked, so `contained` means "contained on
/// the grid".
#[derive(Debug, Clone, PartialEq)]
pub struct ContainmentReport {
    pub margins: Vec<f64>,
    pub contained: bool,
    pub min_margin: f64,
    /// Grid index of the smallest margin (the near-tangency witness).
    pub min_index: usize,
    pub min_direction: Direction,
    pub tol: f64,
    pub grid_count: usize,
}

pub fn check_containment(
    bound: &Ellipsoid,
    sum: &EllipsoidSum,
    grid: &DirectionGrid,
    tol: f64,
) -> Result<ContainmentReport> {
    sum.check_dim(bound.dim())?;
    sum.check_dim(grid.dim())?;
    let margins: Vec<f64> = grid
        .directions()
        .par_iter()
        .map(|l| Ok(bound.support(l)? - sum_support(sum, l)?))
        .collect::<Result<_>>()?;
    let (min_index, min_margin) = argmin(&margins);
    Ok(ContainmentReport {
        contained: min_margin >= -tol,
        min_direction: grid.directions()[min_index].clone(),
        margins,
        min_margin,
        min_index,
        tol,
        grid_count: grid.count(),
    })
}

pub(crate) fn argmin(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc })
}

/// CSV with header `l1..ln,x1..xn,support`; floats at 17 significant digits.
pub fn write_boundary_csv<W: Write>(samples: &[BoundarySample], mut out: W) -> Result<()> {
    let n = samples.first().map(|s| s.point.len()).unwrap_or(0);
    let mut header: Vec<String> = (1..=n).map(|i| format!("l{i}")).collect();
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.push("support".into());
    writeln!(out, "{}", header.join(","))?;
    for s in samples {
        let row: Vec<String> = s
            .direction
            .as_slice()
            .iter()
            .chain(s.point.iter())
            .chain(std::iter::once(&s.support))
            .map(|v| format_sig17(*v))
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Scientific notation with 17 significant digits; parses back to the same f64.
pub fn format_sig17(v: f64) -> String {
    format!("{v:.16e}")
}

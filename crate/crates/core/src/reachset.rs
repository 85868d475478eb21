//! Reachable sets of `s_{k+1} = A_k s_k + Σᵢ B_{i,k} u_{i,k}` with
//! `u_{i,k} ∈ E(R_{i,k})` and `s₁ = 0`.
//!
//! The states reachable at step k form the Minkowski sum of the input
//! ellipsoids mapped through `D_j B_{i,j}`, where
//! `D_j = A_{k−1} ⋯ A_{j+1}` (empty product = I). Each transformed term is
//! built by chaining affine images one factor at a time, so the terms stay
//! representable even when `D_j` is extremely ill-conditioned.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::min_trace_bound;
use crate::ellipsoid::Ellipsoid;
use crate::error::{Error, Result};
use crate::linalg;
use crate::minkowski::{sample_boundary, BoundarySample, DirectionGrid, EllipsoidSum};

/// How [`settling_horizon`] decides that older inputs no longer matter.
pub const SETTLING_DEFINITION: &str = "smallest k >= 2 such that the trace-root contribution of the \
inputs entering k-1 steps earlier, sum_i sqrt(tr(A^(k-1) B_i R_i B_i^T A^(k-1)^T)), is below \
tol * S(k), where S(k) = sum_i sum_(m=0)^(k-2) sqrt(tr(A^m B_i R_i B_i^T A^m^T)) is the square \
root of the trace of the minimum-trace reach bound at step k";

#[derive(Debug, Clone, PartialEq)]
pub struct InputChannel {
    input_dim: usize,
    b: Vec<DMatrix<f64>>,
    r: Vec<Ellipsoid>,
}

impl InputChannel {
    /// `b` and `r` each hold one matrix (constant over time) or one per step.
    pub fn new(b: Vec<DMatrix<f64>>, r: Vec<DMatrix<f64>>) -> Result<Self> {
        let first_r = r
            .first()
            .ok_or_else(|| Error::InvalidSystem("input channel without R".into()))?;
        let input_dim = first_r.nrows();
        let r = r
            .into_iter()
            .map(Ellipsoid::centered)
            .collect::<Result<Vec<_>>>()?;
        if r.iter().any(|e| e.dim() != input_dim) {
            return Err(Error::InvalidSystem("input shapes R change dimension".into()));
        }
        if b.is_empty() {
            return Err(Error::InvalidSystem("input channel without B".into()));
        }
        if let Some(bad) = b.iter().find(|m| m.ncols() != input_dim) {
            return Err(Error::InvalidSystem(format!(
                "B has {} columns but R is {input_dim}x{input_dim}",
                bad.ncols()
            )));
        }
        Ok(Self { input_dim, b, r })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// `B_{i,step}` for a 1-based step.
    pub fn b(&self, step: usize) -> &DMatrix<f64> {
        pick(&self.b, step)
    }

    /// The input ellipsoid `E(R_{i,step})`.
    pub fn r(&self, step: usize) -> &Ellipsoid {
        pick(&self.r, step)
    }
}

fn pick<T>(seq: &[T], step: usize) -> &T {
    if seq.len() == 1 {
        &seq[0]
    } else {
        &seq[step - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LtvSystem {
    state_dim: usize,
    dynamics: Vec<DMatrix<f64>>,
    inputs: Vec<InputChannel>,
    horizon: usize,
    time_invariant: bool,
}

impl LtvSystem {
    /// Sequences of length 1 are broadcast over all `horizon` steps; any
    /// other sequence must have exactly `horizon` entries.
    pub fn new(dynamics: Vec<DMatrix<f64>>, inputs: Vec<InputChannel>, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidSystem("horizon must be at least 1".into()));
        }
        let first = dynamics
            .first()
            .ok_or_else(|| Error::InvalidSystem("missing dynamics A".into()))?;
        let n = first.nrows();
        if n == 0 {
            return Err(Error::InvalidSystem("empty state dimension".into()));
        }
        if dynamics.iter().any(|a| a.nrows() != n || a.ncols() != n) {
            return Err(Error::InvalidSystem(format!("every A must be {n}x{n}")));
        }
        if dynamics.iter().flat_map(|a| a.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if inputs.is_empty() {
            return Err(Error::InvalidSystem("at least one input channel is required".into()));
        }
        let check_len = |what: &str, len: usize| {
            if len == 1 || len == horizon {
                Ok(())
            } else {
                Err(Error::InvalidSystem(format!(
                    "{what} sequence has {len} entries, expected 1 or horizon = {horizon}"
                )))
            }
        };
        check_len("A", dynamics.len())?;
        for (i, ch) in inputs.iter().enumerate() {
            check_len(&format!("B[{i}]"), ch.b.len())?;
            check_len(&format!("R[{i}]"), ch.r.len())?;
            if ch.b.iter().any(|b| b.nrows() != n) {
                return Err(Error::InvalidSystem(format!("every B[{i}] must have {n} rows")));
            }
            if ch.b.iter().flat_map(|b| b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        let time_invariant = dynamics.len() == 1 && inputs.iter().all(|c| c.b.len() == 1 && c.r.len() == 1);
        Ok(Self {
            state_dim: n,
            dynamics,
            inputs,
            horizon,
            time_invariant,
        })
    }

    /// Time-invariant system `s⁺ = A s + Σ Bᵢ uᵢ`, `uᵢ ∈ E(Rᵢ)`.
    pub fn time_invariant(
        a: DMatrix<f64>,
        inputs: Vec<(DMatrix<f64>, DMatrix<f64>)>,
        horizon: usize,
    ) -> Result<Self> {
        let inputs = inputs
            .into_iter()
            .map(|(b, r)| InputChannel::new(vec![b], vec![r]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(vec![a], inputs, horizon)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_time_invariant(&self) -> bool {
        self.time_invariant
    }

    pub fn inputs(&self) -> &[InputChannel] {
        &self.inputs
    }

    /// `A_step` for a 1-based step.
    pub fn a(&self, step: usize) -> &DMatrix<f64> {
        pick(&self.dynamics, step)
    }

    pub fn from_record(record: &SystemRecord) -> Result<Self> {
        if record.horizon == 0 {
            return Err(Error::InvalidSystem("horizon must be at least 1".into()));
        }
        let dynamics = record.a.to_matrices()?;
        let inputs = record
            .inputs
            .iter()
            .map(|c| InputChannel::new(c.b.to_matrices()?, c.r.to_matrices()?))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dynamics, inputs, record.horizon)
    }

    pub fn to_record(&self) -> SystemRecord {
        let seq = |ms: Vec<&DMatrix<f64>>| {
            if ms.len() == 1 {
                MatrixSeq::One(linalg::matrix_to_rows(ms[0]))
            } else {
                MatrixSeq::Many(ms.into_iter().map(linalg::matrix_to_rows).collect())
            }
        };
        SystemRecord {
            a: seq(self.dynamics.iter().collect()),
            inputs: self
                .inputs
                .iter()
                .map(|c| InputRecord {
                    b: seq(c.b.iter().collect()),
                    r: seq(c.r.iter().map(Ellipsoid::shape).collect()),
                })
                .collect(),
            horizon: self.horizon,
        }
    }
}

/// A single matrix (broadcast over steps) or one matrix per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSeq {
    One(Vec<Vec<f64>>),
    Many(Vec<Vec<Vec<f64>>>),
}

impl MatrixSeq {
    fn to_matrices(&self) -> Result<Vec<DMatrix<f64>>> {
        match self {
            MatrixSeq::One(rows) => Ok(vec![linalg::matrix_from_rows(rows)?]),
            MatrixSeq::Many(list) => {
                if list.is_empty() {
                    return Err(Error::Parse("empty matrix list".into()));
                }
                list.iter().map(|rows| linalg::matrix_from_rows(rows)).collect()
            }
        }
    }
}

/// System JSON: `{"A": ..., "inputs": [{"B": ..., "R": ...}], "horizon": K}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemRecord {
    #[serde(rename = "A")]
    pub a: MatrixSeq,
    pub inputs: Vec<InputRecord>,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputRecord {
    #[serde(rename = "B")]
    pub b: MatrixSeq,
    #[serde(rename = "R")]
    pub r: MatrixSeq,
}

/// States reachable at step `k` (1-based, `s₁ = 0`).
#[derive(Debug, Clone, Copy)]
pub struct ReachSpec<'a> {
    system: &'a LtvSystem,
    k: usize,
}

impl<'a> ReachSpec<'a> {
    pub fn new(system: &'a LtvSystem, k: usize) -> Result<Self> {
        let max = system.horizon + 1;
        if k < 2 || k > max {
            return Err(Error::InvalidStep { k, max });
        }
        Ok(Self { system, k })
    }

    pub fn system(&self) -> &LtvSystem {
        self.system
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// `[D_1, …, D_{k−1}]` with `D_j = A_{k−1} ⋯ A_{j+1}` and `D_{k−1} = I`.
pub fn transition_products(spec: &ReachSpec) -> Vec<DMatrix<f64>> {
    let n = spec.system.state_dim;
    let k = spec.k;
    let mut out = vec![DMatrix::identity(n, n); k - 1];
    for j in (1..k - 1).rev() {
        out[j - 1] = &out[j] * spec.system.a(j + 1);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeEntry {
    /// 0-based input channel.
    pub channel: usize,
    /// 1-based step at which the input enters.
    pub step: usize,
    /// `Σ_{i,j} = D_j B R Bᵀ D_jᵀ`.
    pub shape: DMatrix<f64>,
    /// `None` when the image is degenerate and excluded from sums.
    pub ellipsoid: Option<Ellipsoid>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyWarning {
    pub channel: usize,
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputShapeTable {
    /// Ordered by channel, then step.
    pub entries: Vec<ShapeEntry>,
    pub warnings: Vec<DegeneracyWarning>,
}

impl InputShapeTable {
    pub fn ellipsoids(&self) -> impl Iterator<Item = &Ellipsoid> {
        self.entries.iter().filter_map(|e| e.ellipsoid.as_ref())
    }
}

pub fn input_shape_matrices(spec: &ReachSpec) -> InputShapeTable {
    let sys = spec.system;
    let k = spec.k;
    let n = sys.state_dim;
    let zero = DVector::zeros(n);
    let products = transition_products(spec);
    // rank of each A_step, steps 2..k-1
    let a_full_rank: Vec<bool> = (0..k).map(|s| s >= 2 && linalg::has_full_row_rank(sys.a(s))).collect();

    let mut entries = Vec::with_capacity(sys.inputs.len() * (k - 1));
    let mut warnings = Vec::new();
    for (i, ch) in sys.inputs.iter().enumerate() {
        for j in 1..k {
            let b = ch.b(j);
            let r = ch.r(j);
            let d = &products[j - 1];
            let shape = linalg::symmetrize(&(d * b * r.shape() * b.transpose() * d.transpose()));
            let mut reason = None;
            let mut current = if linalg::has_full_row_rank(b) {
                r.image_full_rank(b, &zero).ok()
            } else {
                reason = Some(format!("B[{i}] at step {j} does not have full row rank"));
                None
            };
            for (step, &full_rank) in a_full_rank.iter().enumerate().skip(j + 1) {
                let Some(e) = current.take() else { break };
                if !full_rank {
                    reason = Some(format!("A at step {step} is singular"));
                    break;
                }
                current = e.image_full_rank(sys.a(step), &zero).ok();
            }
            let ellipsoid = current;
            if ellipsoid.is_none() {
                warnings.push(DegeneracyWarning {
                    channel: i,
                    step: j,
                    reason: reason.unwrap_or_else(|| "degenerate image".into()),
                });
            }
            entries.push(ShapeEntry {
                channel: i,
                step: j,
                shape,
                ellipsoid,
            });
        }
    }
    InputShapeTable { entries, warnings }
}

pub fn reach_sum(spec: &ReachSpec) -> Result<EllipsoidSum> {
    let table = input_shape_matrices(spec);
    let terms: Vec<Ellipsoid> = table.ellipsoids().cloned().collect();
    if terms.is_empty() {
        return Err(Error::AllDegenerate);
    }
    EllipsoidSum::new(terms)
}

/// Minimum-trace outer bound of the full-history reachable set.
pub fn reach_min_trace(spec: &ReachSpec) -> Result<Ellipsoid> {
    min_trace_bound(&reach_sum(spec)?)
}

pub fn reach_boundary(spec: &ReachSpec, grid: &DirectionGrid) -> Result<Vec<BoundarySample>> {
    sample_boundary(&reach_sum(spec)?, grid)
}

fn check_axes(dim: usize, axes: (usize, usize)) -> Result<()> {
    let (a, b) = axes;
    if a == b || a >= dim || b >= dim {
        return Err(Error::BadAxes { a, b, dim });
    }
    Ok(())
}

fn selector(dim: usize, axes: (usize, usize)) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(2, dim);
    p[(0, axes.0)] = 1.0;
    p[(1, axes.1)] = 1.0;
    p
}

/// Shadow of an ellipsoid on the coordinate plane `axes` (0-based): the
/// principal 2×2 submatrix of its shape.
pub fn project_ellipsoid(e: &Ellipsoid, axes: (usize, usize)) -> Result<Ellipsoid> {
    check_axes(e.dim(), axes)?;
    e.image_full_rank(&selector(e.dim(), axes), &DVector::zeros(2))
}

/// Projection of a Minkowski sum: the sum of the projected terms.
pub fn project_sum(sum: &EllipsoidSum, axes: (usize, usize)) -> Result<EllipsoidSum> {
    check_axes(sum.dim(), axes)?;
    EllipsoidSum::new(
        sum.terms()
            .iter()
            .map(|e| project_ellipsoid(e, axes))
            .collect::<Result<Vec<_>>>()?,
    )
}

/// Coordinates `axes` of each sample point.
pub fn project_points(samples: &[BoundarySample], axes: (usize, usize)) -> Result<Vec<[f64; 2]>> {
    let dim = samples.first().map(|s| s.point.len()).unwrap_or(0);
    check_axes(dim, axes)?;
    Ok(samples.iter().map(|s| [s.point[axes.0], s.point[axes.1]]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundednessReport {
    pub k: usize,
    pub tol: f64,
    /// `S_κ`, κ = 1..k−1: trace-root of the bound built from the κ most recent input steps.
    pub trace_roots: Vec<f64>,
    /// `δ_κ = S_{κ+1} − S_κ`, κ = 1..k−2.
    pub increments: Vec<f64>,
    /// `δ_{κ+1} / δ_κ` where defined.
    pub ratio_estimates: Vec<Option<f64>>,
    pub spectral_radius_max: f64,
    /// Last increment below `tol · S_{k−1}` and every `ρ[A_j] < 1`.
    pub converged: bool,
    /// Smallest κ from which every increment stays below `tol · S_{k−1}`.
    pub settling_step: Option<usize>,
}

/// Trace-root sequence of the minimum-trace reach bound and its
/// convergence diagnostics. Increments are judged relative to the final
/// trace root.
pub fn boundedness_check(system: &LtvSystem, k: usize, tol: f64) -> Result<BoundednessReport> {
    if k < 3 {
        return Err(Error::InvalidStep { k, max: system.horizon + 1 });
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let spec = ReachSpec::new(system, k)?;
    let table = input_shape_matrices(&spec);
    // per-step trace roots t_j, j = 1..k-1
    let mut per_step = vec![0.0; k - 1];
    for entry in &table.entries {
        if let Some(e) = &entry.ellipsoid {
            per_step[entry.step - 1] += e.trace().sqrt();
        }
    }
    let mut trace_roots = Vec::with_capacity(k - 1);
    let mut acc = 0.0;
    for j in (1..k).rev() {
        acc += per_step[j - 1];
        trace_roots.push(acc);
    }
    // δ_κ is exactly the contribution of step k−κ−1
    let increments: Vec<f64> = (1..k - 1).map(|kappa| per_step[k - kappa - 2]).collect();
    let ratio_estimates = increments
        .windows(2)
        .map(|w| if w[0] > 0.0 { Some(w[1] / w[0]) } else { None })
        .collect();

    let spectral_radius_max = if system.dynamics.len() == 1 {
        if k > 2 {
            linalg::spectral_radius(system.a(1))
        } else {
            0.0
        }
    } else {
        (2..k).map(|s| linalg::spectral_radius(system.a(s))).fold(0.0, f64::max)
    };

    let final_root = *trace_roots.last().expect("k >= 3");
    let threshold = tol * final_root;
    let settling_step = increments
        .iter()
        .rposition(|d| *d >= threshold)
        .map_or(Some(1), |last_bad| (last_bad + 1 < increments.len()).then_some(last_bad + 2));
    let tail_ok = increments.last().is_some_and(|d| *d < threshold);
    Ok(BoundednessReport {
        k,
        tol,
        converged: tail_ok && spectral_radius_max < 1.0,
        trace_roots,
        increments,
        ratio_estimates,
        spectral_radius_max,
        settling_step,
    })
}

/// Settling step of a time-invariant system per [`SETTLING_DEFINITION`].
pub fn settling_horizon(system: &LtvSystem, tol: f64, k_max: usize) -> Result<usize> {
    if !system.time_invariant {
        return Err(Error::NotTimeInvariant);
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let a = system.a(1);
    let mut shapes: Vec<DMatrix<f64>> = system
        .inputs
        .iter()
        .map(|c| c.b(1) * c.r(1).shape() * c.b(1).transpose())
        .collect();
    let root = |shapes: &[DMatrix<f64>]| -> f64 {
        shapes.iter().map(|m| linalg::trace(m).max(0.0).sqrt()).sum()
    };
    // S(2) holds the m = 0 term
    let mut total = root(&shapes);
    for k in 2..=k_max {
        for m in shapes.iter_mut() {
            *m = a * &*m * a.transpose();
        }
        let next = root(&shapes);
        if next < tol * total {
            return Ok(k);
        }
        total += next;
    }
    Err(Error::NotSettled { k_max })
}

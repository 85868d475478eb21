//! Numerical search for a trace-reducing regularizer `Q₀`.
//!
//! On a fixed grid, support dominance of `Q_base + Q₀` is linear in `Q₀`
//! once squared: `ℓᵀQ₀ℓ ≥ ρ(ℓ)² − ℓᵀQ_baseℓ`. The search minimizes `tr Q₀`
//! with a squared-hinge penalty on those constraints plus a hinge on the
//! smallest eigenvalue of `Q_base + Q₀`, using projected gradient descent
//! with backtracking over the n(n+1)/2 symmetric coordinates. The result is
//! then pulled back along the ray `t·Q₀` to the largest grid-feasible `t`,
//! which makes some grid constraint active (the bound touches the sum).

use nalgebra::{DMatrix, DVector};

use super::{shape_margins, verify_regularizer, RegularizerBase, RegularizerMatrix, SUPPORT_TOL};
use crate::ellipsoid::Ellipsoid;
use crate::error::{Error, Result};
use crate::linalg;
use crate::minkowski::{argmin, DirectionGrid, EllipsoidSum};

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOptions {
    pub max_iters: usize,
    /// Initial step; `None` means `1e-2 · tr(base) / n`.
    pub step_init: Option<f64>,
    /// Penalty weights, applied in order, sharing `max_iters` evenly.
    pub penalties: Vec<f64>,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            step_init: None,
            penalties: vec![1.0, 10.0, 100.0, 1e3, 1e4],
        }
    }
}

struct Problem {
    n: usize,
    coords: Vec<(usize, usize)>,
    /// Per grid direction: constraint row φ(ℓ) and right-hand side g(ℓ) ≤ 0.
    rows: Vec<(DVector<f64>, f64)>,
    base: DMatrix<f64>,
    pd_floor: f64,
}

impl Problem {
    fn to_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut q0 = DMatrix::zeros(self.n, self.n);
        for (c, &(a, b)) in self.coords.iter().enumerate() {
            q0[(a, b)] = x[c];
            q0[(b, a)] = x[c];
        }
        q0
    }

    fn trace(&self, x: &DVector<f64>) -> f64 {
        self.coords
            .iter()
            .enumerate()
            .filter(|(_, (a, b))| a == b)
            .map(|(c, _)| x[c])
            .sum()
    }

    /// Penalized objective and its gradient.
    fn eval(&self, x: &DVector<f64>, mu: f64) -> (f64, DVector<f64>) {
        let m = self.coords.len();
        let mut grad = DVector::zeros(m);
        let mut f = 0.0;
        for (c, &(a, b)) in self.coords.iter().enumerate() {
            if a == b {
                f += x[c];
                grad[c] += 1.0;
            }
        }
        for (phi, g) in &self.rows {
            let viol = g - phi.dot(x);
            if viol > 0.0 {
                f += mu * viol * viol;
                grad.axpy(-2.0 * mu * viol, phi, 1.0);
            }
        }
        let (lam, v) = linalg::min_eigenpair(&(&self.base + self.to_matrix(x)));
        let gap = self.pd_floor - lam;
        if gap > 0.0 {
            f += mu * gap * gap;
            for (c, &(a, b)) in self.coords.iter().enumerate() {
                let d = if a == b { v[a] * v[a] } else { 2.0 * v[a] * v[b] };
                grad[c] -= 2.0 * mu * gap * d;
            }
        }
        (f, grad)
    }

    /// Keeps `tr Q₀ ≤ 0`.
    fn project(&self, x: &mut DVector<f64>) {
        let t = self.trace(x);
        if t > 0.0 {
            let shift = t / self.n as f64;
            for (c, &(a, b)) in self.coords.iter().enumerate() {
                if a == b {
                    x[c] -= shift;
                }
            }
        }
    }

    /// Largest `t ∈ [0, 1]` with `t·φ(ℓ)·x ≥ g(ℓ)` on every row.
    fn feasible_scale(&self, x: &DVector<f64>) -> f64 {
        self.rows.iter().fold(1.0_f64, |t, (phi, g)| {
            let d = phi.dot(x);
            if d < 0.0 {
                t.min(g.min(0.0) / d)
            } else {
                t
            }
        })
    }
}

/// Searches for a symmetric `Q₀` with `tr Q₀ < 0` such that `base + Q₀`
/// still bounds the sum on `grid`. Returns `Q₀ = 0` when no strict
/// improvement is found.
pub fn refine_q0(
    sum: &EllipsoidSum,
    base: &Ellipsoid,
    grid: &DirectionGrid,
    options: &RefineOptions,
) -> Result<RegularizerMatrix> {
    let n = sum.dim();
    base.check_dim(n)?;
    if grid.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: grid.dim(),
        });
    }
    let base_shape = base.shape().clone();
    let (_, base_min) = argmin(&shape_margins(&base_shape, sum, grid));
    if base_min < -SUPPORT_TOL {
        return Err(Error::InfeasibleBase {
            min_margin: base_min,
        });
    }

    let coords: Vec<(usize, usize)> = (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect();
    let rows = grid
        .directions()
        .iter()
        .map(|l| {
            let v = l.as_vector();
            let phi = DVector::from_iterator(
                coords.len(),
                coords
                    .iter()
                    .map(|&(a, b)| if a == b { v[a] * v[a] } else { 2.0 * v[a] * v[b] }),
            );
            let rho = sum.shape_support_unchecked(v);
            (phi, rho * rho - v.dot(&(&base_shape * v)))
        })
        .collect();
    let (base_lam, _) = linalg::min_eigenpair(&base_shape);
    let problem = Problem {
        n,
        coords,
        rows,
        base: base_shape.clone(),
        pd_floor: 1e-3 * base_lam,
    };

    let mut x = DVector::zeros(problem.coords.len());
    let step_init = options
        .step_init
        .unwrap_or(1e-2 * base.trace() / n as f64);
    let rounds = options.penalties.len().max(1);
    let iters_per_round = (options.max_iters / rounds).max(1);
    for &mu in &options.penalties {
        let mut step = step_init;
        let (mut f, mut grad) = problem.eval(&x, mu);
        for _ in 0..iters_per_round {
            let gnorm2 = grad.norm_squared();
            if gnorm2 == 0.0 {
                break;
            }
            let mut accepted = false;
            while step > 1e-16 * step_init {
                let mut candidate = &x - &grad * step;
                problem.project(&mut candidate);
                let (fc, gc) = problem.eval(&candidate, mu);
                if fc <= f - 1e-4 * step * gnorm2 {
                    x = candidate;
                    f = fc;
                    grad = gc;
                    accepted = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
    }

    let mut t = problem.feasible_scale(&x) * (1.0 - 1e-12);
    let mut q0 = problem.to_matrix(&x) * t;
    let mut halvings = 0;
    while linalg::cholesky_lower(&(&base_shape + &q0)).is_none() && halvings < 64 {
        t *= 0.5;
        q0 = problem.to_matrix(&x) * t;
        halvings += 1;
    }

    let shape_base = RegularizerBase::Shape(base_shape);
    let report = verify_regularizer(sum, &q0, &shape_base, grid)?;
    if report.feasible() && report.trace_change < 0.0 {
        return Ok(RegularizerMatrix {
            matrix: q0,
            certificate: report,
        });
    }
    let zero = DMatrix::zeros(n, n);
    let report = verify_regularizer(sum, &zero, &shape_base, grid)?;
    Ok(RegularizerMatrix {
        matrix: zero,
        certificate: report,
    })
}

//! Constrained purification of a symmetric matrix to an idempotent,
//! trace-normalized projector.
//!
//! Each iteration applies the cubic map `T = 3P² − 2P³` and then adds a
//! linear combination `Σ λ_k O_k` of the observable matrices, with the
//! multipliers chosen so that the corrected iterate reproduces every
//! `tr(P·O_k) = target_k`. The trace normalization is always constraint 0.

use serde::Serialize;

use crate::error::{Error, Result, Trajectory};
use crate::matrix::{
    idempotency_residual, sym_eigendecompose, trace_product_unchecked, DenseSymMatrix,
};

/// Gram eigenvalues below this fraction of the largest are treated as null directions.
const GRAM_RANK_CUTOFF: f64 = 1e-10;
const INCONSISTENCY_TOLERANCE: f64 = 1e-8;
const STAGNATION_WINDOW: usize = 10;
const STAGNATION_DISTANCE: f64 = 1e-8;

/// A trace-linear constraint `tr(P·O) = target`.
#[derive(Debug, Clone)]
pub struct ObservableConstraint {
    pub matrix: DenseSymMatrix,
    pub target: f64,
    pub label: String,
    /// Half-width of the acceptance band around `target`. Zero means the
    /// constraint is enforced to the purification tolerance; a positive band
    /// is used for measured data carrying an uncertainty.
    pub band: f64,
}

impl ObservableConstraint {
    pub fn new(matrix: DenseSymMatrix, target: f64, label: impl Into<String>) -> Self {
        Self {
            matrix,
            target,
            label: label.into(),
            band: 0.0,
        }
    }

    pub fn with_band(mut self, band: f64) -> Self {
        self.band = band.max(0.0);
        self
    }

    pub fn normalization(dim: usize, trace_target: f64) -> Self {
        Self::new(DenseSymMatrix::identity(dim), trace_target, "trace")
    }

    pub fn value(&self, p: &DenseSymMatrix) -> f64 {
        trace_product_unchecked(p, &self.matrix)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PurificationOptions {
    pub max_iterations: usize,
    pub idempotency_tolerance: f64,
    pub constraint_tolerance: f64,
    pub multiplier_regularization: f64,
}

impl Default for PurificationOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            idempotency_tolerance: 1e-10,
            constraint_tolerance: 1e-10,
            multiplier_regularization: 1e-12,
        }
    }
}

impl PurificationOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be positive"));
        }
        for (name, v) in [
            ("idempotency_tolerance", self.idempotency_tolerance),
            ("constraint_tolerance", self.constraint_tolerance),
            ("multiplier_regularization", self.multiplier_regularization),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Converged purification result.
#[derive(Debug, Clone)]
pub struct Projector {
    matrix: DenseSymMatrix,
    pub trace_target: f64,
    pub residual_idempotency: f64,
    /// `|tr(P·O_k) − target_k|`, normalization first.
    pub residual_constraints: Vec<f64>,
    pub iterations_used: usize,
    pub trajectory: Trajectory,
}

impl Projector {
    pub fn matrix(&self) -> &DenseSymMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseSymMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Wraps an already idempotent matrix, computing its diagnostics.
    pub fn certify(
        matrix: DenseSymMatrix,
        trace_target: f64,
        opts: &PurificationOptions,
    ) -> Result<Self> {
        let idem = idempotency_residual(&matrix);
        let tr = (matrix.trace() - trace_target).abs();
        if idem > opts.idempotency_tolerance || tr > opts.constraint_tolerance {
            return Err(Error::invalid(format!(
                "matrix is not a projector with trace {trace_target}: idempotency {idem:e}, trace error {tr:e}"
            )));
        }
        Ok(Self {
            matrix,
            trace_target,
            residual_idempotency: idem,
            residual_constraints: vec![tr],
            iterations_used: 0,
            trajectory: Vec::new(),
        })
    }

    pub fn max_constraint_residual(&self) -> f64 {
        self.residual_constraints
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }
}

/// `3P² − 2P³`.
pub fn mcweeny_step(p: &DenseSymMatrix) -> DenseSymMatrix {
    let p2 = p.square();
    let p3 = p2.product(p).into_symmetric();
    let mut out = p2.scale(3.0);
    out.add_scaled(-2.0, &p3);
    out
}

/// Multipliers `λ` with `Σ_k G[j][k] λ_k = target_j − tr(T·O_j)`, where
/// `G[j][k] = tr(O_j·O_k) + regularization·δ_jk`.
pub fn solve_multipliers(
    t: &DenseSymMatrix,
    constraints: &[ObservableConstraint],
    regularization: f64,
) -> Result<Vec<f64>> {
    if constraints.is_empty() {
        return Err(Error::invalid("at least one constraint is required"));
    }
    for c in constraints {
        t.check_same_dim(&c.matrix)?;
    }
    let rhs: Vec<f64> = constraints.iter().map(|c| c.target - c.value(t)).collect();
    GramSystem::new(&gram_matrix(constraints, regularization), regularization)?.solve(&rhs, false)
}

pub(crate) fn gram_matrix(
    constraints: &[ObservableConstraint],
    regularization: f64,
) -> DenseSymMatrix {
    let k = constraints.len();
    let mut g = DenseSymMatrix::from_fn(k, |i, j| {
        trace_product_unchecked(&constraints[i].matrix, &constraints[j].matrix)
    });
    g.add_scaled(regularization, &DenseSymMatrix::identity(k));
    g
}

/// Eigendecomposed Gram matrix, factored once per constraint set.
pub(crate) struct GramSystem {
    eig: crate::matrix::EigenDecomposition,
    cutoff: f64,
    condition: f64,
}

impl GramSystem {
    pub(crate) fn new(gram: &DenseSymMatrix, regularization: f64) -> Result<Self> {
        let eig = sym_eigendecompose(gram)?;
        let g_max = eig.eigenvalues.last().copied().unwrap_or(0.0);
        let g_min = eig.eigenvalues.first().copied().unwrap_or(0.0);
        let condition = g_max / g_min.max(regularization);
        if !g_max.is_finite() || g_max <= 2.0 * regularization {
            return Err(Error::IllConditioned { condition });
        }
        Ok(Self {
            eig,
            cutoff: GRAM_RANK_CUTOFF * g_max,
            condition,
        })
    }

    /// Spectral solve. Directions whose Gram eigenvalue is negligible relative
    /// to the largest are dropped; if the right-hand side has weight along them
    /// and `least_squares` is false the constraints are inconsistent.
    pub(crate) fn solve(&self, rhs: &[f64], least_squares: bool) -> Result<Vec<f64>> {
        let n = rhs.len();
        let rhs_norm = rhs.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut lambda = vec![0.0; n];
        let mut discarded = 0.0;
        for (k, &g) in self.eig.eigenvalues.iter().enumerate() {
            let u = self.eig.vector(k);
            let coeff: f64 = u.iter().zip(rhs).map(|(a, b)| a * b).sum();
            if g <= self.cutoff {
                discarded += coeff * coeff;
                continue;
            }
            let w = coeff / g;
            for (l, ui) in lambda.iter_mut().zip(&u) {
                *l += w * ui;
            }
        }
        let inconsistent = discarded.sqrt() > INCONSISTENCY_TOLERANCE * rhs_norm.max(1.0);
        if (inconsistent && !least_squares) || lambda.iter().any(|x| !x.is_finite()) {
            return Err(Error::IllConditioned {
                condition: self.condition,
            });
        }
        Ok(lambda)
    }
}

/// Ascending eigenvalues of a projector.
pub fn occupation_spectrum(p: &DenseSymMatrix) -> Result<Vec<f64>> {
    Ok(sym_eigendecompose(p)?.eigenvalues)
}

struct Residuals {
    idempotency: f64,
    constraints: Vec<f64>,
}

impl Residuals {
    fn of(p: &DenseSymMatrix, constraints: &[ObservableConstraint]) -> Self {
        Self {
            idempotency: idempotency_residual(p),
            constraints: constraints
                .iter()
                .map(|c| (c.value(p) - c.target).abs())
                .collect(),
        }
    }

    fn worst_excess(&self, constraints: &[ObservableConstraint], tol: f64) -> f64 {
        self.constraints
            .iter()
            .zip(constraints)
            .map(|(r, c)| r - c.band.max(tol))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn worst(&self) -> f64 {
        self.constraints.iter().copied().fold(0.0, f64::max)
    }

    fn converged(&self, constraints: &[ObservableConstraint], opts: &PurificationOptions) -> bool {
        self.idempotency <= opts.idempotency_tolerance
            && self.worst_excess(constraints, opts.constraint_tolerance) <= 0.0
    }
}

/// Runs the constrained iteration from `p0` until the iterate is idempotent
/// and satisfies `tr P = trace_target` plus every extra constraint.
pub fn clinton_iterate(
    p0: &DenseSymMatrix,
    trace_target: f64,
    extra_constraints: &[ObservableConstraint],
    opts: &PurificationOptions,
) -> Result<Projector> {
    opts.validate()?;
    let dim = p0.dim();
    if !(trace_target > 0.0 && trace_target <= dim as f64) {
        return Err(Error::invalid(format!(
            "trace target {trace_target} outside (0, {dim}]"
        )));
    }
    for c in extra_constraints {
        p0.check_same_dim(&c.matrix)?;
    }
    let mut constraints = Vec::with_capacity(extra_constraints.len() + 1);
    constraints.push(ObservableConstraint::normalization(dim, trace_target));
    constraints.extend(extra_constraints.iter().cloned());
    let least_squares = constraints.iter().any(|c| c.band > 0.0);
    let gram = GramSystem::new(
        &gram_matrix(&constraints, opts.multiplier_regularization),
        opts.multiplier_regularization,
    )?;

    let mut p = p0.clone();
    let mut res = Residuals::of(&p, &constraints);
    let mut trajectory: Trajectory = vec![(res.idempotency, res.worst())];
    if res.converged(&constraints, opts) {
        return Ok(finish(p, trace_target, res, 0, trajectory));
    }

    let divergence_bound = 10.0 * dim as f64;
    let mut near_half = 0usize;
    for iteration in 1..=opts.max_iterations {
        let t = mcweeny_step(&p);
        let rhs: Vec<f64> = constraints
            .iter()
            .map(|c| {
                let r = c.target - c.value(&t);
                if r.abs() <= c.band {
                    0.0
                } else {
                    r
                }
            })
            .collect();
        let lambda = gram.solve(&rhs, least_squares)?;
        let mut next = t;
        for (l, c) in lambda.iter().zip(&constraints) {
            if *l != 0.0 {
                next.add_scaled(*l, &c.matrix);
            }
        }
        p = next;

        let norm = p.frobenius_norm();
        if norm.is_nan() || norm > divergence_bound {
            return Err(Error::Divergence { iteration, norm });
        }
        res = Residuals::of(&p, &constraints);
        trajectory.push((res.idempotency, res.worst()));
        if res.converged(&constraints, opts) {
            return Ok(finish(p, trace_target, res, iteration, trajectory));
        }

        let spectrum = sym_eigendecompose(&p)?.eigenvalues;
        if spectrum
            .iter()
            .any(|x| (x - 0.5).abs() < STAGNATION_DISTANCE)
        {
            near_half += 1;
            if near_half >= STAGNATION_WINDOW {
                return Err(Error::Stagnation { iteration });
            }
        } else {
            near_half = 0;
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        trajectory,
    })
}

fn finish(
    p: DenseSymMatrix,
    trace_target: f64,
    res: Residuals,
    iterations: usize,
    trajectory: Trajectory,
) -> Projector {
    Projector {
        matrix: p,
        trace_target,
        residual_idempotency: res.idempotency,
        residual_constraints: res.constraints,
        iterations_used: iterations,
        trajectory,
    }
}

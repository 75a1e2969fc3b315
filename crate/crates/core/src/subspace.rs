//! Whole-to-fragment decomposition of a projector.
//!
//! For every kernel of a fragment scheme we look for a matrix `P′`, supported
//! only on the kernel's index block, with `P′ = P′·P·P′`. The search reuses
//! the constrained purification step: the cubic map plus multipliers for a
//! normalization constraint and for the linearized form of
//! `tr(P′P′) = tr[P′²PP′ + P′PP′² − (P′PP′)²]` with `O ≡ P′`.
//!
//! Normalization is `tr(P′·P) = k` with `k = round(tr P_BB)`. Any solution of
//! `P′ = P′PP′` makes `P′P` idempotent, so this trace is an integer; it equals
//! `tr P′` in the uncoupled case where `P′` is simply the diagonal block.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kem::{FragmentScheme, KernelKind};
use crate::matrix::{idempotency_residual, trace_product_unchecked, DenseSymMatrix, Square};
use crate::purification::{
    gram_matrix, mcweeny_step, GramSystem, ObservableConstraint, PurificationOptions,
};

/// Kernels whose trace drops below this are considered collapsed onto `P′ = 0`.
pub const COLLAPSE_TRACE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default)]
pub struct DecomposeOptions {
    pub purification: PurificationOptions,
    /// Also require each `P′` to be idempotent.
    pub strict_idempotency: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubspaceKernel {
    pub kind: KernelKind,
    pub indices: Vec<usize>,
    #[serde(skip)]
    pub matrix: DenseSymMatrix,
    pub trace_value: f64,
    pub normalization_target: f64,
    pub normalization_value: f64,
    pub subspace_residual: f64,
    pub idempotency_residual: f64,
    pub iterations: usize,
    pub residual_trail: Vec<f64>,
}

/// `P′·P·P′`.
pub fn triple_product(p_prime: &DenseSymMatrix, p: &DenseSymMatrix) -> Result<DenseSymMatrix> {
    p_prime.check_same_dim(p)?;
    Ok(p_prime.sandwich(p))
}

/// `tr((P′ − P′PP′)²)`.
pub fn subspace_residual(p_prime: &DenseSymMatrix, p: &DenseSymMatrix) -> Result<f64> {
    let d = p_prime - &triple_product(p_prime, p)?;
    Ok(trace_product_unchecked(&d, &d))
}

/// `tr[P′²PP′ + P′PP′² − (P′PP′)²]`.
pub fn constraint_target(p_prime: &DenseSymMatrix, p: &DenseSymMatrix) -> Result<f64> {
    p_prime.check_same_dim(p)?;
    let x = Square::from_sym(p_prime);
    let m = Square::from_sym(p);
    let x2 = x.mul(&x);
    let xp = x.mul(&m);
    let xpx = xp.mul(&x);
    let t1 = x2.mul(&m).mul(&x).trace();
    let t2 = xp.mul(&x2).trace();
    let t3 = xpx.mul(&xpx).trace();
    Ok(t1 + t2 - t3)
}

/// Solves every kernel of `scheme` independently. Failures are reported per
/// kernel; the order is doubles `(i, j)` lexicographically, then singles.
pub fn decompose(
    p: &DenseSymMatrix,
    scheme: &FragmentScheme,
    opts: &DecomposeOptions,
) -> Result<Vec<Result<SubspaceKernel>>> {
    opts.purification.validate()?;
    if p.dim() != scheme.full_dim() {
        return Err(Error::DimensionMismatch {
            expected: scheme.full_dim(),
            found: p.dim(),
        });
    }
    Ok(scheme
        .kernels()
        .into_par_iter()
        .map(|kind| solve_kernel(p, kind, scheme.indices(kind), opts))
        .collect())
}

fn solve_kernel(
    p: &DenseSymMatrix,
    kind: KernelKind,
    indices: Vec<usize>,
    opts: &DecomposeOptions,
) -> Result<SubspaceKernel> {
    let popts = &opts.purification;
    let tol = popts.constraint_tolerance;
    let block = p.submatrix(&indices);
    let target = block.trace().round();
    let normalization = |x: &DenseSymMatrix| trace_product_unchecked(x, &block);

    let mut x = block.clone();
    let mut residual = subspace_residual(&x, &block)?;
    let mut trail = vec![residual];
    let mut iterations = 0;
    let converged = |x: &DenseSymMatrix, residual: f64| {
        residual <= tol && (normalization(x) - target).abs() <= tol
    };

    while !converged(&x, residual) {
        if iterations >= popts.max_iterations {
            return Err(Error::NonConvergence {
                iterations,
                trajectory: trail
                    .iter()
                    .map(|&r| (r, (normalization(&x) - target).abs()))
                    .collect(),
            });
        }
        iterations += 1;
        let constraints = [
            ObservableConstraint::new(block.clone(), target, "normalization"),
            ObservableConstraint::new(x.clone(), constraint_target(&x, &block)?, "subspace"),
        ];
        let t = mcweeny_step(&x);
        let rhs: Vec<f64> = constraints.iter().map(|c| c.target - c.value(&t)).collect();
        // the two observables coincide at the initializer, so allow a
        // least-squares solve over the dependent pair
        let gram = GramSystem::new(
            &gram_matrix(&constraints, popts.multiplier_regularization),
            popts.multiplier_regularization,
        )?;
        let lambda = gram.solve(&rhs, true)?;
        let mut next = t;
        for (l, c) in lambda.iter().zip(&constraints) {
            next.add_scaled(*l, &c.matrix);
        }
        x = next;
        if !x.is_finite() {
            return Err(Error::Divergence {
                iteration: iterations,
                norm: x.frobenius_norm(),
            });
        }
        let trace = x.trace();
        if target > 0.0 && trace.abs() < COLLAPSE_TRACE {
            return Err(Error::Collapse { trace, target });
        }
        residual = subspace_residual(&x, &block)?;
        trail.push(residual);
    }

    let idem = idempotency_residual(&x);
    if opts.strict_idempotency && idem > popts.idempotency_tolerance {
        return Err(Error::NotIdempotent { residual: idem });
    }
    let full = x.scatter(&indices, p.dim())?;
    Ok(SubspaceKernel {
        kind,
        trace_value: x.trace(),
        normalization_target: target,
        normalization_value: normalization(&x),
        subspace_residual: residual,
        idempotency_residual: idem,
        iterations,
        residual_trail: trail,
        matrix: full,
        indices,
    })
}

/// `‖P − (Σ P′_d − (n − 2)·Σ P′_s)‖_F`.
pub fn reassembly_residual(
    p: &DenseSymMatrix,
    kernels: &[SubspaceKernel],
    n: usize,
) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid("reassembly needs at least 2 kernels"));
    }
    let mut expected: std::collections::BTreeSet<KernelKind> =
        (0..n).map(KernelKind::Single).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            expected.insert(KernelKind::Double(i, j));
        }
    }
    if kernels.len() != expected.len() {
        return Err(Error::invalid(format!(
            "incomplete kernel set: {} of {} kernels",
            kernels.len(),
            expected.len()
        )));
    }
    let mut sum = DenseSymMatrix::zeros(p.dim());
    let single_weight = -((n as f64) - 2.0);
    for k in kernels {
        if !expected.remove(&k.kind) {
            return Err(Error::invalid(format!(
                "unexpected or duplicate kernel {}",
                k.kind.label()
            )));
        }
        p.check_same_dim(&k.matrix)?;
        let w = match k.kind {
            KernelKind::Double(..) => 1.0,
            KernelKind::Single(_) => single_weight,
        };
        sum.add_scaled(w, &k.matrix);
    }
    Ok(p.distance(&sum))
}

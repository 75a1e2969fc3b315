//! Kernel Energy Method: fragment-to-whole combination of properties and of
//! density matrices.
//!
//! A molecule's basis indices are split into `n` disjoint single kernels; a
//! double kernel is the union of two singles. Whole-system quantities are
//! rebuilt as `Σ doubles − (n − 2)·Σ singles`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{fractional_power, sym_eigendecompose, trace_product, DenseSymMatrix};
use crate::purification::{clinton_iterate, Projector, PurificationOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KernelKind {
    Single(usize),
    Double(usize, usize),
}

impl KernelKind {
    pub fn label(&self) -> String {
        match self {
            KernelKind::Single(i) => format!("s{i}"),
            KernelKind::Double(i, j) => format!("d{i}_{j}"),
        }
    }
}

/// Partition of the full basis into single kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentScheme {
    full_dim: usize,
    singles: Vec<Vec<usize>>,
}

impl FragmentScheme {
    pub fn new(full_dim: usize, singles: Vec<Vec<usize>>) -> Result<Self> {
        if full_dim == 0 {
            return Err(Error::invalid("full_dim must be positive"));
        }
        if singles.len() < 2 {
            return Err(Error::invalid(format!(
                "a fragment scheme needs at least 2 single kernels, found {}",
                singles.len()
            )));
        }
        let mut owner = vec![None; full_dim];
        let mut sorted = Vec::with_capacity(singles.len());
        for (k, set) in singles.into_iter().enumerate() {
            if set.is_empty() {
                return Err(Error::invalid(format!("single kernel {k} is empty")));
            }
            let mut set = set;
            set.sort_unstable();
            for &i in &set {
                if i >= full_dim {
                    return Err(Error::invalid(format!(
                        "kernel {k}: index {i} out of range for dimension {full_dim}"
                    )));
                }
                if let Some(prev) = owner[i] {
                    return Err(Error::invalid(format!(
                        "index {i} appears in kernels {prev} and {k}"
                    )));
                }
                owner[i] = Some(k);
            }
            sorted.push(set);
        }
        if let Some(missing) = owner.iter().position(Option::is_none) {
            return Err(Error::invalid(format!(
                "index {missing} is not covered by any kernel"
            )));
        }
        Ok(Self {
            full_dim,
            singles: sorted,
        })
    }

    pub fn full_dim(&self) -> usize {
        self.full_dim
    }

    pub fn n(&self) -> usize {
        self.singles.len()
    }

    pub fn single(&self, i: usize) -> &[usize] {
        &self.singles[i]
    }

    pub fn singles(&self) -> &[Vec<usize>] {
        &self.singles
    }

    /// Pairs `(i, j)`, `i < j`, in lexicographic order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect()
    }

    pub fn kernels(&self) -> Vec<KernelKind> {
        let mut out: Vec<KernelKind> = self
            .pairs()
            .into_iter()
            .map(|(i, j)| KernelKind::Double(i, j))
            .collect();
        out.extend((0..self.n()).map(KernelKind::Single));
        out
    }

    pub fn indices(&self, kind: KernelKind) -> Vec<usize> {
        match kind {
            KernelKind::Single(i) => self.singles[i].clone(),
            KernelKind::Double(i, j) => {
                let mut v: Vec<usize> = self.singles[i]
                    .iter()
                    .chain(&self.singles[j])
                    .copied()
                    .collect();
                v.sort_unstable();
                v
            }
        }
    }

    pub fn contains(&self, kind: KernelKind) -> bool {
        match kind {
            KernelKind::Single(i) => i < self.n(),
            KernelKind::Double(i, j) => i < j && j < self.n(),
        }
    }

    /// Non-fatal remarks about the scheme.
    pub fn warnings(&self) -> Vec<String> {
        if self.n() == 2 {
            vec!["n = 2: the double kernel is the whole system, no cost saving".to_string()]
        } else {
            Vec::new()
        }
    }
}

/// A kernel's density matrix over its own indices.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDensity {
    pub kind: KernelKind,
    pub matrix: DenseSymMatrix,
    pub index_map: Vec<usize>,
}

impl KernelDensity {
    pub fn new(kind: KernelKind, matrix: DenseSymMatrix, index_map: Vec<usize>) -> Result<Self> {
        if matrix.dim() != index_map.len() {
            return Err(Error::DimensionMismatch {
                expected: index_map.len(),
                found: matrix.dim(),
            });
        }
        Ok(Self {
            kind,
            matrix,
            index_map,
        })
    }
}

/// Zero-pads a kernel matrix to the full dimension.
pub fn augment(kernel: &KernelDensity, full_dim: usize) -> Result<DenseSymMatrix> {
    kernel.matrix.scatter(&kernel.index_map, full_dim)
}

/// `Σ R_d^aug − (n − 2)·Σ R_s^aug`.
pub fn assemble_r_kem(
    scheme: &FragmentScheme,
    doubles: &[KernelDensity],
    singles: &[KernelDensity],
) -> Result<DenseSymMatrix> {
    let n = scheme.n();
    let expected_doubles = n * (n - 1) / 2;
    if doubles.len() != expected_doubles || singles.len() != n {
        return Err(Error::invalid(format!(
            "expected {expected_doubles} double and {n} single kernels, found {} and {}",
            doubles.len(),
            singles.len()
        )));
    }
    let mut seen = std::collections::BTreeSet::new();
    for k in doubles.iter().chain(singles) {
        if !scheme.contains(k.kind) {
            return Err(Error::invalid(format!(
                "kernel {} not in scheme",
                k.kind.label()
            )));
        }
        if !seen.insert(k.kind) {
            return Err(Error::invalid(format!(
                "duplicate kernel {}",
                k.kind.label()
            )));
        }
        let expected = scheme.indices(k.kind);
        if k.index_map != expected {
            return Err(Error::invalid(format!(
                "kernel {} has index map {:?}, scheme expects {:?}",
                k.kind.label(),
                k.index_map,
                expected
            )));
        }
    }
    if doubles
        .iter()
        .any(|k| matches!(k.kind, KernelKind::Single(_)))
        || singles
            .iter()
            .any(|k| matches!(k.kind, KernelKind::Double(..)))
    {
        return Err(Error::invalid("kernel kinds do not match their lists"));
    }

    let full = scheme.full_dim();
    let augmented_d: Vec<DenseSymMatrix> = doubles
        .par_iter()
        .map(|k| augment(k, full))
        .collect::<Result<_>>()?;
    let augmented_s: Vec<DenseSymMatrix> = singles
        .par_iter()
        .map(|k| augment(k, full))
        .collect::<Result<_>>()?;
    let mut r = DenseSymMatrix::zeros(full);
    for m in &augmented_d {
        r.add_scaled(1.0, m);
    }
    let weight = -((n as f64) - 2.0);
    for m in &augmented_s {
        r.add_scaled(weight, m);
    }
    Ok(r)
}

/// `S^{1/2}·R_KEM·S^{1/2}`, the starting iterate in the orthonormal basis.
pub fn lowdin_initial_iterant(
    r_kem: &DenseSymMatrix,
    s: &DenseSymMatrix,
) -> Result<DenseSymMatrix> {
    r_kem.check_same_dim(s)?;
    let s_half = fractional_power(s, 0.5)?;
    Ok(s_half.sandwich(r_kem))
}

/// Purifies the assembled start under the trace normalization alone.
pub fn purify_assembled(
    p0: &DenseSymMatrix,
    trace_target: f64,
    opts: &PurificationOptions,
) -> Result<Projector> {
    clinton_iterate(p0, trace_target, &[], opts)
}

/// `2·tr(P·H)`.
pub fn model_energy(p: &DenseSymMatrix, h: &DenseSymMatrix) -> Result<f64> {
    Ok(2.0 * trace_product(p, h)?)
}

/// Projector onto the `occupied` lowest eigenvectors of `h`.
pub fn aufbau_projector(h: &DenseSymMatrix, occupied: usize) -> Result<DenseSymMatrix> {
    if occupied > h.dim() {
        return Err(Error::invalid(format!(
            "cannot occupy {occupied} orbitals in dimension {}",
            h.dim()
        )));
    }
    let eig = sym_eigendecompose(h)?;
    let vectors: Vec<Vec<f64>> = (0..occupied).map(|k| eig.vector(k)).collect();
    let terms: Vec<(f64, &[f64])> = vectors.iter().map(|v| (1.0, v.as_slice())).collect();
    Ok(DenseSymMatrix::from_weighted_outer(h.dim(), &terms))
}

/// Toy kernel densities: the Aufbau projector of each kernel's block of `h`,
/// with a double kernel occupying the sum of its singles' orbitals.
pub fn toy_kernels(
    scheme: &FragmentScheme,
    h: &DenseSymMatrix,
    occupations: &[usize],
) -> Result<(Vec<KernelDensity>, Vec<KernelDensity>)> {
    if h.dim() != scheme.full_dim() {
        return Err(Error::DimensionMismatch {
            expected: scheme.full_dim(),
            found: h.dim(),
        });
    }
    if occupations.len() != scheme.n() {
        return Err(Error::invalid(format!(
            "{} occupations given for {} kernels",
            occupations.len(),
            scheme.n()
        )));
    }
    let build = |kind: KernelKind| -> Result<KernelDensity> {
        let idx = scheme.indices(kind);
        let occ = match kind {
            KernelKind::Single(i) => occupations[i],
            KernelKind::Double(i, j) => occupations[i] + occupations[j],
        };
        let block = h.submatrix(&idx);
        KernelDensity::new(kind, aufbau_projector(&block, occ)?, idx)
    };
    let doubles = scheme
        .pairs()
        .into_par_iter()
        .map(|(i, j)| build(KernelKind::Double(i, j)))
        .collect::<Result<Vec<_>>>()?;
    let singles = (0..scheme.n())
        .into_par_iter()
        .map(|i| build(KernelKind::Single(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok((doubles, singles))
}

/// Per-kernel values of a scalar or vector property.
#[derive(Debug, Clone, PartialEq)]
pub struct KemProperty {
    pub doubles: Vec<Vec<f64>>,
    pub singles: Vec<Vec<f64>>,
    pub n: usize,
}

impl KemProperty {
    pub fn scalar(doubles: &[f64], singles: &[f64], n: usize) -> Self {
        Self {
            doubles: doubles.iter().map(|&x| vec![x]).collect(),
            singles: singles.iter().map(|&x| vec![x]).collect(),
            n,
        }
    }
}

/// `Σ doubles − (n − 2)·Σ singles`, component-wise.
pub fn kem_combine(prop: &KemProperty) -> Result<Vec<f64>> {
    let n = prop.n;
    if n < 2 {
        return Err(Error::invalid("KEM needs at least 2 kernels"));
    }
    if prop.doubles.len() != n * (n - 1) / 2 || prop.singles.len() != n {
        return Err(Error::invalid(format!(
            "n = {n} needs {} doubles and {n} singles, found {} and {}",
            n * (n - 1) / 2,
            prop.doubles.len(),
            prop.singles.len()
        )));
    }
    let width = prop.singles[0].len();
    if prop
        .doubles
        .iter()
        .chain(&prop.singles)
        .any(|v| v.len() != width)
    {
        return Err(Error::invalid("property vectors have inconsistent lengths"));
    }
    let mut out = vec![0.0; width];
    for v in &prop.doubles {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    let w = (n as f64) - 2.0;
    for v in &prop.singles {
        for (o, x) in out.iter_mut().zip(v) {
            *o -= w * x;
        }
    }
    Ok(out)
}

//! Synthetic X-ray scattering on an s-type Gaussian basis.
//!
//! All integrals are closed form. Structure factors are linear in the
//! density matrix, `F(K) = 2·tr(P·f(K))`, with `f(K)` the matrix of Fourier
//! transforms of basis-function products expressed in the Löwdin-orthonormal
//! basis. Fitting a projector to a set of structure factors turns every
//! reflection into two real trace constraints for [`clinton_iterate`].

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{fractional_power, trace_product_unchecked, DenseSymMatrix};
use crate::purification::{clinton_iterate, ObservableConstraint, Projector, PurificationOptions};

pub type Vec3 = [f64; 3];

/// Data constraints are accepted within this many standard deviations.
pub const DATA_BAND_SIGMAS: f64 = 3.0;

pub const POSITION_UNITS: &str = "bohr";
pub const RECIPROCAL_UNITS: &str = "bohr^-1";

/// Normalized s-type primitive `(2a/π)^{3/4}·exp(−a|r − c|²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFunction {
    pub center: Vec3,
    pub exponent: f64,
}

impl GaussianFunction {
    pub fn norm(&self) -> f64 {
        (2.0 * self.exponent / PI).powf(0.75)
    }

    pub fn value(&self, r: &Vec3) -> f64 {
        self.norm() * (-self.exponent * dist2(r, &self.center)).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBasis {
    functions: Vec<GaussianFunction>,
}

impl GaussianBasis {
    pub fn new(functions: Vec<GaussianFunction>) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::invalid("basis must contain at least one function"));
        }
        for (i, f) in functions.iter().enumerate() {
            if !(f.exponent > 0.0 && f.exponent.is_finite()) {
                return Err(Error::invalid(format!(
                    "basis function {i} has non-positive exponent {}",
                    f.exponent
                )));
            }
            if f.center.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!(
                    "basis function {i} has a non-finite center"
                )));
            }
        }
        Ok(Self { functions })
    }

    pub fn functions(&self) -> &[GaussianFunction] {
        &self.functions
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn values_at(&self, r: &Vec3) -> Vec<f64> {
        self.functions.iter().map(|f| f.value(r)).collect()
    }
}

fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    (0..3).map(|i| a[i] * b[i]).sum()
}

fn pair_overlap(fa: &GaussianFunction, fb: &GaussianFunction) -> f64 {
    let (a, b) = (fa.exponent, fb.exponent);
    let p = a + b;
    (4.0 * a * b / (p * p)).powf(0.75) * (-a * b / p * dist2(&fa.center, &fb.center)).exp()
}

/// `S[μ][ν] = ∫ φ_μ φ_ν dr`.
pub fn overlap_matrix(basis: &GaussianBasis) -> DenseSymMatrix {
    let fs = &basis.functions;
    DenseSymMatrix::from_fn(fs.len(), |i, j| pair_overlap(&fs[i], &fs[j]))
}

/// `f(K)` split into real and imaginary parts. For real basis functions both
/// parts are symmetric matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct FormFactorMatrix {
    pub k: Vec3,
    pub real_part: DenseSymMatrix,
    pub imag_part: DenseSymMatrix,
}

impl FormFactorMatrix {
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.real_part.get(i, j), self.imag_part.get(i, j))
    }

    pub fn conj(&self) -> Self {
        Self {
            k: [-self.k[0], -self.k[1], -self.k[2]],
            real_part: self.real_part.clone(),
            imag_part: self.imag_part.scale(-1.0),
        }
    }

    /// `X·f·X` for a real symmetric `X`, e.g. `S^{−1/2}`.
    pub fn transformed(&self, x: &DenseSymMatrix) -> Self {
        Self {
            k: self.k,
            real_part: x.sandwich(&self.real_part),
            imag_part: x.sandwich(&self.imag_part),
        }
    }
}

/// `f_{μν}(K) = ∫ φ_μ(r)·e^{iK·r}·φ_ν(r) dr = S_{μν}·e^{iK·c_p}·e^{−|K|²/(4p)}`.
pub fn form_factor_matrix(basis: &GaussianBasis, k: Vec3) -> FormFactorMatrix {
    let fs = &basis.functions;
    let n = fs.len();
    let k2 = dot(&k, &k);
    let mut re = vec![0.0; n * n];
    let mut im = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let (a, b) = (fs[i].exponent, fs[j].exponent);
            let p = a + b;
            let cp: Vec3 = std::array::from_fn(|d| (a * fs[i].center[d] + b * fs[j].center[d]) / p);
            let amp = pair_overlap(&fs[i], &fs[j]) * (-k2 / (4.0 * p)).exp();
            let phase = dot(&k, &cp);
            let (s, c) = phase.sin_cos();
            re[i * n + j] = amp * c;
            re[j * n + i] = amp * c;
            im[i * n + j] = amp * s;
            im[j * n + i] = amp * s;
        }
    }
    FormFactorMatrix {
        k,
        real_part: DenseSymMatrix::symmetrized(n, re),
        imag_part: DenseSymMatrix::symmetrized(n, im),
    }
}

/// Form factors in the Löwdin-orthonormal basis, one per scattering vector.
pub fn orthonormal_form_factors(
    basis: &GaussianBasis,
    s_inv_sqrt: &DenseSymMatrix,
    ks: &[Vec3],
) -> Vec<FormFactorMatrix> {
    ks.par_iter()
        .map(|k| form_factor_matrix(basis, *k).transformed(s_inv_sqrt))
        .collect()
}

/// `F(K) = 2·tr(P·f(K))`.
pub fn structure_factor(p: &DenseSymMatrix, f: &FormFactorMatrix) -> Result<Complex64> {
    p.check_same_dim(&f.real_part)?;
    Ok(Complex64::new(
        2.0 * trace_product_unchecked(p, &f.real_part),
        2.0 * trace_product_unchecked(p, &f.imag_part),
    ))
}

/// `Σ | |F_obs| − |F_calc| | / Σ |F_obs|`.
pub fn r_factor(observed: &[Complex64], calculated: &[Complex64]) -> Result<f64> {
    if observed.is_empty() {
        return Err(Error::invalid("r-factor needs at least one reflection"));
    }
    if observed.len() != calculated.len() {
        return Err(Error::DimensionMismatch {
            expected: observed.len(),
            found: calculated.len(),
        });
    }
    let denom: f64 = observed.iter().map(|f| f.norm()).sum();
    if denom <= 0.0 {
        return Err(Error::invalid(
            "r-factor undefined: all observed amplitudes are zero",
        ));
    }
    let num: f64 = observed
        .iter()
        .zip(calculated)
        .map(|(o, c)| (o.norm() - c.norm()).abs())
        .sum();
    Ok(num / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    pub k: Vec3,
    pub f_re: f64,
    pub f_im: f64,
    pub sigma: f64,
}

impl Reflection {
    pub fn f(&self) -> Complex64 {
        Complex64::new(self.f_re, self.f_im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringDataset {
    #[serde(default = "reciprocal_units")]
    pub units: String,
    pub basis_label: String,
    pub reflections: Vec<Reflection>,
}

fn reciprocal_units() -> String {
    RECIPROCAL_UNITS.to_string()
}

impl ScatteringDataset {
    pub fn new(basis_label: impl Into<String>, reflections: Vec<Reflection>) -> Result<Self> {
        let ds = Self {
            units: reciprocal_units(),
            basis_label: basis_label.into(),
            reflections,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.units != RECIPROCAL_UNITS {
            return Err(Error::invalid(format!(
                "dataset units must be {RECIPROCAL_UNITS}, found {}",
                self.units
            )));
        }
        for (i, r) in self.reflections.iter().enumerate() {
            if r.sigma.is_nan() || r.sigma < 0.0 {
                return Err(Error::invalid(format!("reflection {i} has negative sigma")));
            }
            if r.k.iter().chain([&r.f_re, &r.f_im]).any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!(
                    "reflection {i} has non-finite values"
                )));
            }
            if self.reflections[..i].iter().any(|o| o.k == r.k) {
                return Err(Error::invalid(format!(
                    "reflection {i} repeats K = {:?}",
                    r.k
                )));
            }
        }
        Ok(())
    }

    pub fn ks(&self) -> Vec<Vec3> {
        self.reflections.iter().map(|r| r.k).collect()
    }

    pub fn observed(&self) -> Vec<Complex64> {
        self.reflections.iter().map(Reflection::f).collect()
    }
}

/// Structure factors of `p_ref` (given in the orthonormal basis), with
/// independent Gaussian noise of standard deviation `noise_sigma` added to
/// the real and imaginary parts.
pub fn synthesize_dataset<R: Rng + ?Sized>(
    p_ref: &DenseSymMatrix,
    basis: &GaussianBasis,
    basis_label: &str,
    ks: &[Vec3],
    noise_sigma: f64,
    rng: &mut R,
) -> Result<ScatteringDataset> {
    if p_ref.dim() != basis.len() {
        return Err(Error::DimensionMismatch {
            expected: basis.len(),
            found: p_ref.dim(),
        });
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "noise sigma must be >= 0, got {noise_sigma}"
        )));
    }
    let s_inv_sqrt = fractional_power(&overlap_matrix(basis), -0.5)?;
    let ffs = orthonormal_form_factors(basis, &s_inv_sqrt, ks);
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut reflections = Vec::with_capacity(ks.len());
    for f in &ffs {
        let exact = structure_factor(p_ref, f)?;
        let (dre, dim) = if noise_sigma > 0.0 {
            (noise.sample(rng), noise.sample(rng))
        } else {
            (0.0, 0.0)
        };
        reflections.push(Reflection {
            k: f.k,
            f_re: exact.re + dre,
            f_im: exact.im + dim,
            sigma: noise_sigma,
        });
    }
    ScatteringDataset::new(basis_label, reflections)
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub projector: Projector,
    pub r_factor: f64,
    pub calculated: Vec<Complex64>,
    pub constraint_count: usize,
    pub free_parameters: usize,
    pub warnings: Vec<String>,
}

/// Real and imaginary trace constraints for every reflection, in the
/// orthonormal basis.
pub fn reflection_constraints(
    dataset: &ScatteringDataset,
    form_factors: &[FormFactorMatrix],
) -> Vec<ObservableConstraint> {
    let mut out = Vec::with_capacity(2 * form_factors.len());
    for (r, f) in dataset.reflections.iter().zip(form_factors) {
        let band = DATA_BAND_SIGMAS * r.sigma;
        let tag = format!("[{}, {}, {}]", r.k[0], r.k[1], r.k[2]);
        out.push(
            ObservableConstraint::new(f.real_part.scale(2.0), r.f_re, format!("re F{tag}"))
                .with_band(band),
        );
        out.push(
            ObservableConstraint::new(f.imag_part.scale(2.0), r.f_im, format!("im F{tag}"))
                .with_band(band),
        );
    }
    out
}

/// Fits a projector with `tr P = trace_target` to the dataset.
pub fn fit_projector(
    dataset: &ScatteringDataset,
    basis: &GaussianBasis,
    trace_target: f64,
    p0: Option<&DenseSymMatrix>,
    opts: &PurificationOptions,
) -> Result<FitResult> {
    dataset.validate()?;
    if dataset.reflections.is_empty() {
        return Err(Error::invalid("dataset has no reflections"));
    }
    let dim = basis.len();
    let s_inv_sqrt = fractional_power(&overlap_matrix(basis), -0.5)?;
    let ffs = orthonormal_form_factors(basis, &s_inv_sqrt, &dataset.ks());
    let constraints = reflection_constraints(dataset, &ffs);

    let constraint_count = constraints.len() + 1;
    let free_parameters = dim * (dim + 1) / 2;
    let mut warnings = Vec::new();
    if constraint_count < free_parameters {
        let msg = format!(
            "under-determined fit: {constraint_count} real constraints for {free_parameters} free density-matrix parameters"
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let start = match p0 {
        Some(p) => {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.dim(),
                });
            }
            p.clone()
        }
        None => DenseSymMatrix::identity(dim).scale(trace_target / dim as f64),
    };
    let projector = clinton_iterate(&start, trace_target, &constraints, opts)?;
    let calculated = ffs
        .iter()
        .map(|f| structure_factor(projector.matrix(), f))
        .collect::<Result<Vec<_>>>()?;
    let r = r_factor(&dataset.observed(), &calculated)?;
    Ok(FitResult {
        projector,
        r_factor: r,
        calculated,
        constraint_count,
        free_parameters,
        warnings,
    })
}

/// `ρ(r) = 2·χ(r)ᵀ·P·χ(r)` with `χ(r) = S^{−1/2}·φ(r)`.
pub fn density_on_grid(
    p: &DenseSymMatrix,
    basis: &GaussianBasis,
    s_inv_sqrt: &DenseSymMatrix,
    grid: &[Vec3],
) -> Result<Vec<f64>> {
    p.check_same_dim(s_inv_sqrt)?;
    if p.dim() != basis.len() {
        return Err(Error::DimensionMismatch {
            expected: basis.len(),
            found: p.dim(),
        });
    }
    Ok(grid
        .par_iter()
        .map(|r| {
            let chi = s_inv_sqrt.apply(&basis.values_at(r));
            2.0 * p.quadratic_form(&chi)
        })
        .collect())
}

#![allow(dead_code)]

use nrep::scattering::{GaussianBasis, GaussianFunction};
use nrep::{sym_eigendecompose, DenseSymMatrix};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn random_symmetric<R: Rng>(dim: usize, rng: &mut R) -> DenseSymMatrix {
    let mut a = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in i..dim {
            let v: f64 = StandardNormal.sample(rng);
            a[i * dim + j] = v;
            a[j * dim + i] = v;
        }
    }
    DenseSymMatrix::from_row_major(dim, a).unwrap()
}

/// Columns of a random orthogonal matrix.
pub fn random_orthonormal_vectors<R: Rng>(dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let eig = sym_eigendecompose(&random_symmetric(dim, rng)).unwrap();
    (0..dim).map(|k| eig.vector(k)).collect()
}

pub fn with_spectrum(vectors: &[Vec<f64>], spectrum: &[f64]) -> DenseSymMatrix {
    let terms: Vec<(f64, &[f64])> = spectrum
        .iter()
        .zip(vectors)
        .map(|(&x, v)| (x, v.as_slice()))
        .collect();
    DenseSymMatrix::from_weighted_outer(vectors[0].len(), &terms)
}

pub fn four_function_basis() -> GaussianBasis {
    GaussianBasis::new(vec![
        GaussianFunction {
            center: [0.0, 0.0, 0.0],
            exponent: 1.0,
        },
        GaussianFunction {
            center: [1.2, 0.0, 0.0],
            exponent: 0.8,
        },
        GaussianFunction {
            center: [0.0, 1.1, 0.3],
            exponent: 1.3,
        },
        GaussianFunction {
            center: [-0.7, -0.4, 0.9],
            exponent: 0.6,
        },
    ])
    .unwrap()
}

pub fn random_basis<R: Rng>(n: usize, rng: &mut R) -> GaussianBasis {
    let functions = (0..n)
        .map(|_| GaussianFunction {
            center: [
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.8..0.8),
            ],
            exponent: rng.random_range(0.5..2.0),
        })
        .collect();
    GaussianBasis::new(functions).unwrap()
}

/// Tensor-product trapezoid rule for `∫ φ_i φ_j e^{iK·r} d³r` on a box
/// around the product's centroid.
pub fn quadrature_form_factor(
    a: &GaussianFunction,
    b: &GaussianFunction,
    k: [f64; 3],
) -> (f64, f64) {
    let p = a.exponent + b.exponent;
    let c: Vec<f64> = (0..3)
        .map(|d| (a.exponent * a.center[d] + b.exponent * b.center[d]) / p)
        .collect();
    let half = (30.0 / p).sqrt();
    let steps = 48;
    let h = 2.0 * half / steps as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for ix in 0..=steps {
        let x = c[0] - half + ix as f64 * h;
        for iy in 0..=steps {
            let y = c[1] - half + iy as f64 * h;
            for iz in 0..=steps {
                let z = c[2] - half + iz as f64 * h;
                let r = [x, y, z];
                let w = [ix, iy, iz]
                    .iter()
                    .map(|&i| if i == 0 || i == steps { 0.5 } else { 1.0 })
                    .product::<f64>();
                let v = w * a.value(&r) * b.value(&r);
                let phase = k[0] * x + k[1] * y + k[2] * z;
                re += v * phase.cos();
                im += v * phase.sin();
            }
        }
    }
    let vol = h * h * h;
    (re * vol, im * vol)
}

#![allow(dead_code)]

pub mod props;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use tcpm_core::data_io::SplitMix64;
use tcpm_core::linalg::{self, FactorScores};

pub fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn to_na_vec(v: &Array1<f64>) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().copied())
}

pub fn from_na_vec(v: &DVector<f64>) -> Array1<f64> {
    Array1::from_iter(v.iter().copied())
}

/// Uniform `[-1, 1)` matrix from a seeded stream.
pub fn random_matrix(seed: u64, n: usize, m: usize) -> Array2<f64> {
    let mut rng = SplitMix64::new(seed);
    Array2::from_shape_fn((n, m), |_| rng.next_symmetric())
}

pub fn random_vector(seed: u64, n: usize) -> Array1<f64> {
    let mut rng = SplitMix64::new(seed);
    Array1::from_shape_fn(n, |_| rng.next_symmetric())
}

pub fn standardize_columns(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut col in out.columns_mut() {
        let f = linalg::standardize(col.view()).unwrap();
        col.assign(f.scores());
    }
    out
}

/// Orthonormal basis of the column space, from nalgebra's SVD.
pub fn na_range_basis(x: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = x.clone().svd(true, false);
    let u = svd.u.unwrap();
    let top = svd.singular_values.max();
    let r = svd.singular_values.iter().filter(|s| **s > 1e-10 * top).count();
    let mut cols: Vec<(f64, DVector<f64>)> = (0..svd.singular_values.len())
        .map(|k| (svd.singular_values[k], u.column(k).into_owned()))
        .collect();
    cols.sort_by(|a, b| b.0.total_cmp(&a.0));
    DMatrix::from_columns(&cols[..r].iter().map(|c| c.1.clone()).collect::<Vec<_>>())
}

/// `|cos|` between two vectors.
pub fn abs_cos(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    (a.dot(b) / (a.dot(a).sqrt() * b.dot(b).sqrt())).abs()
}

pub fn factor(v: Array1<f64>) -> FactorScores {
    linalg::standardize(v.view()).unwrap()
}

/// Builds a `Dataset` with columns named by `prefix` and index.
pub fn dataset(blocks: &[(&str, &Array2<f64>)]) -> tcpm_core::Dataset {
    let n = blocks[0].1.nrows();
    let mut names = Vec::new();
    let mut cols: Vec<Array1<f64>> = Vec::new();
    for (prefix, block) in blocks {
        for (j, c) in block.columns().into_iter().enumerate() {
            names.push(format!("{prefix}{}", j + 1));
            cols.push(c.to_owned());
        }
    }
    let values = Array2::from_shape_fn((n, cols.len()), |(i, j)| cols[j][i]);
    tcpm_core::Dataset::new(values, names).unwrap()
}

pub fn names(prefix: &str, m: usize) -> Vec<String> {
    (1..=m).map(|j| format!("{prefix}{j}")).collect()
}

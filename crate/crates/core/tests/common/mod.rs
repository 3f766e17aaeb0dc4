//! Independent reference computations shared by the integration and
//! acceptance tests. Nothing here calls the solver or statistics code under
//! test.
#![allow(dead_code)]

use nalgebra::DMatrix;
use tcdm_core::rng::SeededStream;
use tcdm_core::{Point, PointCloud};

/// Least-squares fitted values through a thin QR factorization: `Q Q^T y`.
pub fn qr_projection(design: &DMatrix<f64>, targets: &DMatrix<f64>) -> DMatrix<f64> {
    let q = design.clone().qr().q();
    &q * (q.transpose() * targets)
}

/// Least-squares coefficients through a thin QR factorization.
pub fn qr_coefficients(design: &DMatrix<f64>, targets: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = design.clone().qr();
    let rhs = qr.q().transpose() * targets;
    qr.r().solve_upper_triangular(&rhs).expect("full column rank")
}

/// `I_3 (x) X`, the design of the vectorized three-channel problem.
pub fn kronecker_identity3(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = x.shape();
    let mut big = DMatrix::zeros(3 * r, 3 * c);
    for b in 0..3 {
        big.view_mut((b * r, b * c), (r, c)).copy_from(x);
    }
    big
}

/// Column-stacked `vec(M)`.
pub fn vec_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.len(), 1, m.as_slice())
}

/// Spearman by the textbook rank formula, valid for distinct values only.
pub fn spearman_rank_formula(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|x| 1.0 + v.iter().filter(|y| *y < x).count() as f64)
            .collect()
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
    1.0 - 6.0 * d2 / (n * n * n - n)
}

/// Pearson with two-pass moments.
pub fn pearson_two_pass(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va.sqrt() * vb.sqrt())
}

pub fn logistic5(beta: &[f64; 5], q: f64) -> f64 {
    beta[0] * (0.5 - 1.0 / (1.0 + (beta[1] * (q - beta[2])).exp())) + beta[3] * q + beta[4]
}

/// Uniform box cloud with random 8-bit colors.
pub fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut s = SeededStream::new(seed);
    (0..n)
        .map(|_| {
            Point::new(
                [s.uniform() * 100.0, s.uniform() * 60.0, s.uniform() * 30.0],
                [s.below(256) as f64, s.below(256) as f64, s.below(256) as f64],
            )
        })
        .collect()
}

/// Random patch translated near the origin, as produced by segmentation.
pub fn random_patch(n: usize, seed: u64) -> Vec<Point> {
    let mut s = SeededStream::new(seed);
    (0..n)
        .map(|_| {
            Point::new(
                [s.uniform() - 0.5, s.uniform() - 0.5, 0.3 * (s.uniform() - 0.5)].map(|v| 40.0 * v),
                [s.uniform(), s.uniform(), s.uniform()].map(|v| (255.0 * v).round()),
            )
        })
        .collect()
}

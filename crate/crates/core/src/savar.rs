//! Space-aware vector autoregression (SA-VAR).
//!
//! Each point's 3-channel feature (XYZ or RGB) is regressed on the features of
//! its `K` nearest neighbors, each neighbor block scaled by a distance-derived
//! spatial weight. The shared-design multivariate least-squares problem is
//! solved in closed form through the normal equations; the determinant of the
//! residual covariance is the complexity of the patch under that prediction.

use nalgebra::{Cholesky, DMatrix, Dyn, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{distance, Point, Vec3};
use crate::spatial::{NeighborList, SpatialIndex};

/// Feature dimension of each channel.
pub const CHANNEL_DIM: usize = 3;

/// Default Tikhonov factor, relative to the mean diagonal of the normal matrix.
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Condition-number estimate above which the ridge term is applied.
pub const CONDITION_LIMIT: f64 = 1e12;

// Largest f64 below one; keeps the sigmoid weight inside [0.5, 1).
const SIGMOID_CEILING: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    #[default]
    SigmoidProposed,
    ConstantOne,
    InverseDistance,
    ExpDecay,
}

impl std::str::FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" | "sigmoid_proposed" => Ok(WeightScheme::SigmoidProposed),
            "constant" | "constant_one" => Ok(WeightScheme::ConstantOne),
            "inverse_distance" => Ok(WeightScheme::InverseDistance),
            "exp_decay" => Ok(WeightScheme::ExpDecay),
            other => Err(Error::InvalidParameter(format!("unknown weight scheme `{other}`"))),
        }
    }
}

/// How the distance scale `eta` is derived from the K neighbor distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaMode {
    #[default]
    Std,
    Variance,
}

impl std::str::FromStr for EtaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "std" => Ok(EtaMode::Std),
            "variance" | "var" => Ok(EtaMode::Variance),
            other => Err(Error::InvalidParameter(format!("unknown eta mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Geometry,
    Color,
}

impl Channel {
    #[inline]
    fn of(self, p: &Point) -> &Vec3 {
        match self {
            Channel::Geometry => &p.position,
            Channel::Color => &p.color,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SavarParams {
    pub k: usize,
    pub scheme: WeightScheme,
    pub eta_mode: EtaMode,
    pub ridge: f64,
    /// Skip neighbors lying exactly on the target position. Without this a
    /// target reproduced verbatim in the source predicts itself perfectly.
    /// Falls back to the coincident neighbors when nothing else exists.
    pub exclude_coincident: bool,
}

impl Default for SavarParams {
    fn default() -> Self {
        SavarParams {
            k: 20,
            scheme: WeightScheme::SigmoidProposed,
            eta_mode: EtaMode::Std,
            ridge: DEFAULT_RIDGE,
            exclude_coincident: true,
        }
    }
}

fn distance_scale(distances: &[f64], mode: EtaMode) -> f64 {
    // Exact zero for equal distances, which the mean alone can miss.
    if distances.windows(2).all(|w| w[0] == w[1]) {
        return 0.0;
    }
    let n = distances.len() as f64;
    let mean = distances.iter().sum::<f64>() / n;
    let var = distances.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    match mode {
        EtaMode::Std => var.sqrt(),
        EtaMode::Variance => var,
    }
}

/// Unnormalized per-neighbor weights `d_j` for the given distances.
pub fn raw_weights(distances: &[f64], scheme: WeightScheme, eta_mode: EtaMode) -> Vec<f64> {
    match scheme {
        WeightScheme::ConstantOne => vec![1.0; distances.len()],
        WeightScheme::SigmoidProposed => {
            let eta = distance_scale(distances, eta_mode);
            if eta == 0.0 {
                return vec![0.5; distances.len()];
            }
            distances
                .iter()
                .map(|d| (1.0 / (1.0 + (-d / eta).exp())).min(SIGMOID_CEILING))
                .collect()
        }
        WeightScheme::ExpDecay => {
            let eta = distance_scale(distances, eta_mode);
            if eta == 0.0 {
                return vec![1.0; distances.len()];
            }
            // Shifting by the smallest distance cancels in the normalization
            // and keeps at least one term at 1.
            let nearest = distances.iter().copied().fold(f64::INFINITY, f64::min);
            distances.iter().map(|d| (-(d - nearest) / eta).exp()).collect()
        }
        WeightScheme::InverseDistance => {
            if distances.contains(&0.0) {
                // Limit of 1/d as coincident neighbors dominate.
                distances.iter().map(|&d| if d == 0.0 { 1.0 } else { 0.0 }).collect()
            } else {
                distances.iter().map(|d| 1.0 / d).collect()
            }
        }
    }
}

/// Normalized weights (summing to one) for neighbors at `distances`.
pub fn weights_from_distances(distances: &[f64], scheme: WeightScheme, eta_mode: EtaMode) -> Vec<f64> {
    let mut w = raw_weights(distances, scheme, eta_mode);
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    w
}

pub fn spatial_weights(query: &Vec3, neighbors: &[Vec3], scheme: WeightScheme, eta_mode: EtaMode) -> Vec<f64> {
    let distances: Vec<f64> = neighbors.iter().map(|n| distance(query, n)).collect();
    weights_from_distances(&distances, scheme, eta_mode)
}

/// Neighbor lists (padded to exactly `k`) and their weights for every target
/// point. Geometry and color regressions share this structure.
#[derive(Debug, Clone)]
pub struct NeighborDesign {
    pub k: usize,
    /// Row-major `rows x k` indices into the neighbor source.
    pub neighbors: Vec<usize>,
    /// Row-major `rows x k` normalized weights.
    pub weights: Vec<f64>,
}

impl NeighborDesign {
    /// `exclude_self` drops row `i` from its own neighbor list, which only
    /// makes sense when `targets` and `source` are the same patch.
    pub fn build(
        targets: &[Point],
        source: &[Point],
        source_index: &SpatialIndex,
        params: &SavarParams,
        exclude_self: bool,
    ) -> Result<Self> {
        let k = params.k;
        if k == 0 {
            return Err(Error::InvalidParameter("K must be positive".into()));
        }
        if source.is_empty() {
            return Err(Error::DegeneratePatch("empty neighbor source".into()));
        }
        let mut neighbors = Vec::with_capacity(targets.len() * k);
        let mut weights = Vec::with_capacity(targets.len() * k);
        let mut distances = Vec::with_capacity(k);
        for (i, t) in targets.iter().enumerate() {
            let exclude = exclude_self.then_some(i);
            let found = if params.exclude_coincident {
                knn_skipping_coincident(source_index, &t.position, k, exclude)
            } else {
                source_index.knn(&t.position, k, exclude)
            };
            let (Some(&last), Some(&last_d)) = (found.indices.last(), found.distances.last()) else {
                return Err(Error::DegeneratePatch(format!(
                    "target {i} has no neighbor in a source of {} points",
                    source.len()
                )));
            };
            distances.clear();
            distances.extend_from_slice(&found.distances);
            distances.resize(k, last_d);
            neighbors.extend_from_slice(&found.indices);
            neighbors.resize(neighbors.len() + k - found.len(), last);
            weights.extend(weights_from_distances(&distances, params.scheme, params.eta_mode));
        }
        Ok(NeighborDesign { k, neighbors, weights })
    }

    pub fn rows(&self) -> usize {
        self.neighbors.len() / self.k
    }

    /// Target matrix (`rows x 3`) and weighted design matrix (`rows x 3k`).
    pub fn matrices(&self, targets: &[Point], source: &[Point], channel: Channel) -> (DMatrix<f64>, DMatrix<f64>) {
        let rows = self.rows();
        let k = self.k;
        let y = DMatrix::from_fn(rows, CHANNEL_DIM, |r, c| channel.of(&targets[r])[c]);
        let mut x = DMatrix::zeros(rows, k * CHANNEL_DIM);
        for r in 0..rows {
            for j in 0..k {
                let w = self.weights[r * k + j];
                let f = channel.of(&source[self.neighbors[r * k + j]]);
                for c in 0..CHANNEL_DIM {
                    x[(r, j * CHANNEL_DIM + c)] = w * f[c];
                }
            }
        }
        (y, x)
    }
}

/// `k` nearest neighbors at a positive distance from `q`; the plain `k`
/// nearest when every candidate coincides with `q`.
fn knn_skipping_coincident(index: &SpatialIndex, q: &Vec3, k: usize, exclude: Option<usize>) -> NeighborList {
    // One spare slot covers the common single-duplicate case in one query.
    let mut want = k + 1;
    loop {
        let found = index.knn(q, want, exclude);
        let zeros = found.distances.iter().take_while(|&&d| d == 0.0).count();
        let exhausted = found.len() < want;
        if zeros == 0 {
            let mut found = found;
            found.indices.truncate(k);
            found.distances.truncate(k);
            return found;
        }
        if found.len() - zeros >= k || exhausted {
            if zeros == found.len() {
                let mut all = found;
                all.indices.truncate(k);
                all.distances.truncate(k);
                return all;
            }
            let end = found.len().min(zeros + k);
            return NeighborList {
                indices: found.indices[zeros..end].to_vec(),
                distances: found.distances[zeros..end].to_vec(),
            };
        }
        want = k + zeros;
    }
}

/// Builds the target and weighted design matrices for one channel.
pub fn assemble_design(
    targets: &[Point],
    source: &[Point],
    params: &SavarParams,
    channel: Channel,
    exclude_self: bool,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if targets.is_empty() {
        return Err(Error::DegeneratePatch("no target points".into()));
    }
    if source.is_empty() {
        return Err(Error::DegeneratePatch("empty neighbor source".into()));
    }
    let index = SpatialIndex::build(&source.iter().map(|p| p.position).collect::<Vec<_>>())?;
    let design = NeighborDesign::build(targets, source, &index, params, exclude_self)?;
    Ok(design.matrices(targets, source, channel))
}

/// Fitted SA-VAR model for one channel.
#[derive(Debug, Clone)]
pub struct SavarFit {
    /// `3 x 3K` coefficient matrix.
    pub theta: DMatrix<f64>,
    pub predictions: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
    /// Residual covariance, normalized by the row count.
    pub sigma: Matrix3<f64>,
    /// `max(det(sigma), 0)`.
    pub complexity: f64,
    pub ridge_applied: bool,
}

/// Solves `min || targets - design * theta^T ||` via the normal equations.
///
/// A Tikhonov term `ridge * trace(G) / cols` is added to the diagonal of
/// `G = design^T design` when the Cholesky factorization fails or its pivot
/// ratio implies a condition number above [`CONDITION_LIMIT`].
pub fn fit_savar(targets: &DMatrix<f64>, design: &DMatrix<f64>, ridge: f64) -> Result<SavarFit> {
    let rows = targets.nrows();
    if rows == 0 || design.nrows() != rows {
        return Err(Error::InvalidParameter(format!(
            "targets have {rows} rows, design has {}",
            design.nrows()
        )));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "ridge must be finite and nonnegative, got {ridge}"
        )));
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("SA-VAR targets"));
    }
    if design.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("SA-VAR design"));
    }

    let cols = design.ncols();
    let gram = gram_matrix(design);
    let rhs = design.tr_mul(targets);
    let (coef, ridge_applied) = solve_normal_equations(gram, &rhs, ridge)?;
    let theta = coef.transpose();

    let predictions = design * &coef;
    let residuals = targets - &predictions;
    let sigma_dyn = residuals.tr_mul(&residuals) / rows as f64;
    let mut sigma = Matrix3::zeros();
    for r in 0..CHANNEL_DIM.min(sigma_dyn.nrows()) {
        for c in 0..CHANNEL_DIM.min(sigma_dyn.ncols()) {
            sigma[(r, c)] = sigma_dyn[(r, c)];
        }
    }
    // Exact symmetry.
    sigma = (sigma + sigma.transpose()) * 0.5;
    let complexity = determinant_psd(&sigma);
    debug_assert_eq!(theta.ncols(), cols);
    Ok(SavarFit {
        theta,
        predictions,
        residuals,
        sigma,
        complexity,
        ridge_applied,
    })
}

/// `design^T design`, exploiting symmetry and the contiguous columns of the
/// column-major storage.
fn gram_matrix(design: &DMatrix<f64>) -> DMatrix<f64> {
    let rows = design.nrows();
    let cols = design.ncols();
    let data = design.as_slice();
    let mut gram = DMatrix::zeros(cols, cols);
    for a in 0..cols {
        let ca = &data[a * rows..(a + 1) * rows];
        for b in a..cols {
            let v = dot(ca, &data[b * rows..(b + 1) * rows]);
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    gram
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn solve_normal_equations(gram: DMatrix<f64>, rhs: &DMatrix<f64>, ridge: f64) -> Result<(DMatrix<f64>, bool)> {
    let cols = gram.nrows();
    let trace = gram.trace();
    if trace == 0.0 {
        // All-zero design: the only fit is the zero map.
        return Ok((DMatrix::zeros(cols, rhs.ncols()), false));
    }
    if let Some(chol) = Cholesky::new(gram.clone()) {
        if cholesky_condition_estimate(&chol) <= CONDITION_LIMIT {
            return Ok((chol.solve(rhs), false));
        }
    }
    let mut lambda = ridge * trace / cols as f64;
    if lambda == 0.0 {
        lambda = f64::EPSILON * trace / cols as f64;
    }
    for _ in 0..8 {
        let mut regularized = gram.clone();
        for i in 0..cols {
            regularized[(i, i)] += lambda;
        }
        if let Some(chol) = Cholesky::<f64, Dyn>::new(regularized) {
            return Ok((chol.solve(rhs), true));
        }
        lambda *= 100.0;
    }
    Err(Error::NonFinite("normal equations could not be factorized"))
}

/// Squared ratio of the extreme Cholesky pivots; a cheap lower estimate of
/// the 2-norm condition number of the factored matrix.
fn cholesky_condition_estimate(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    let n = l.nrows();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let d = l[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if lo == 0.0 {
        return f64::INFINITY;
    }
    let ratio = hi / lo;
    ratio * ratio
}

/// Determinant of a symmetric PSD matrix from its eigenvalues, with negative
/// round-off clamped to zero.
pub fn determinant_psd(m: &Matrix3<f64>) -> f64 {
    let eig = m.symmetric_eigenvalues();
    eig.iter().map(|&e| e.max(0.0)).product()
}

/// Complexities of both channels plus the concatenated prediction term.
#[derive(Debug, Clone)]
pub struct PatchPrediction {
    pub geometry_complexity: f64,
    pub color_complexity: f64,
    /// Row `i` predicts reference point `i`. Predicted colors are not clamped.
    pub prediction: Vec<Point>,
    pub geometry_fit: SavarFit,
    pub color_fit: SavarFit,
}

fn predict_patch(
    targets: &[Point],
    source: &[Point],
    params: &SavarParams,
    exclude_self: bool,
) -> Result<PatchPrediction> {
    let index = SpatialIndex::build(&source.iter().map(|p| p.position).collect::<Vec<_>>())?;
    let design = NeighborDesign::build(targets, source, &index, params, exclude_self)?;
    let (yg, xg) = design.matrices(targets, source, Channel::Geometry);
    let geometry_fit = fit_savar(&yg, &xg, params.ridge)?;
    let (yc, xc) = design.matrices(targets, source, Channel::Color);
    let color_fit = fit_savar(&yc, &xc, params.ridge)?;
    let prediction = (0..targets.len())
        .map(|r| Point {
            position: [
                geometry_fit.predictions[(r, 0)],
                geometry_fit.predictions[(r, 1)],
                geometry_fit.predictions[(r, 2)],
            ],
            color: [
                color_fit.predictions[(r, 0)],
                color_fit.predictions[(r, 1)],
                color_fit.predictions[(r, 2)],
            ],
        })
        .collect();
    Ok(PatchPrediction {
        geometry_complexity: geometry_fit.complexity,
        color_complexity: color_fit.complexity,
        prediction,
        geometry_fit,
        color_fit,
    })
}

/// Self-prediction of a reference patch from its own neighbors (the point
/// itself excluded).
pub fn self_complexity(reference: &[Point], params: &SavarParams) -> Result<PatchPrediction> {
    if reference.len() < 2 {
        return Err(Error::DegeneratePatch(format!(
            "self-prediction needs at least 2 points, got {}",
            reference.len()
        )));
    }
    predict_patch(reference, reference, params, true)
}

/// Cross-prediction of a reference patch from the neighbors found in its
/// distorted counterpart. Nothing is excluded.
pub fn cross_complexity(reference: &[Point], distorted: &[Point], params: &SavarParams) -> Result<PatchPrediction> {
    if reference.len() < 2 {
        return Err(Error::DegeneratePatch(format!(
            "cross-prediction needs at least 2 reference points, got {}",
            reference.len()
        )));
    }
    if distorted.is_empty() {
        return Err(Error::DegeneratePatch("empty distorted patch".into()));
    }
    predict_patch(reference, distorted, params, false)
}

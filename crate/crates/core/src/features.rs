//! Per-patch quality features: complexity similarity for geometry and color,
//! and the prediction-term similarity built from point-wise difference fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{distance, Point};
use crate::savar::{cross_complexity, self_complexity, PatchPrediction, SavarParams};
use crate::segmentation::PatchPair;
use crate::spatial::SpatialIndex;

/// Stabilizing constant of the similarity ratios.
pub const DEFAULT_T: f64 = 1e-6;

/// Per-channel color weights of the point-wise difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorWeights(pub [f64; 3]);

impl ColorWeights {
    /// R:G:B = 1:2:1, normalized.
    pub const RGB: ColorWeights = ColorWeights([0.25, 0.5, 0.25]);
    /// Y:U:V = 6:1:1, normalized.
    pub const YUV: ColorWeights = ColorWeights([0.75, 0.125, 0.125]);
    pub const RGB_RAW: ColorWeights = ColorWeights([1.0, 2.0, 1.0]);
    pub const YUV_RAW: ColorWeights = ColorWeights([6.0, 1.0, 1.0]);
}

/// SSIM-style similarity of a self-complexity and a transformational complexity.
#[inline]
pub fn complexity_similarity(c_self: f64, c_cross: f64, t: f64) -> f64 {
    (2.0 * c_self * c_cross + t) / (c_self * c_self + c_cross * c_cross + t)
}

/// Color-modulated geometric distance between two points.
#[inline]
pub fn g_difference(a: &Point, b: &Point, weights: &ColorWeights) -> f64 {
    let color: f64 = (0..3).map(|c| weights.0[c] * (a.color[c] - b.color[c]).abs()).sum();
    (color + 1.0) * distance(&a.position, &b.position)
}

/// `rows x k` point-wise differences, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceField {
    pub rows: usize,
    pub k: usize,
    pub values: Vec<f64>,
}

/// Padded `rows x k` neighbor ids on the predicted positions of a
/// self-prediction term, own row excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceNeighbors {
    pub rows: usize,
    pub k: usize,
    pub ids: Vec<usize>,
}

pub fn difference_neighbors(x_hat: &[Point], k: usize) -> Result<DifferenceNeighbors> {
    let rows = x_hat.len();
    if rows < 2 {
        return Err(Error::DegeneratePatch(format!(
            "difference field needs at least 2 points, got {rows}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("K must be positive".into()));
    }
    let positions: Vec<_> = x_hat.iter().map(|p| p.position).collect();
    let index = SpatialIndex::build(&positions)?;
    let mut ids = Vec::with_capacity(rows * k);
    for (i, p) in positions.iter().enumerate() {
        let found = index.knn(p, k, Some(i)).indices;
        let last = *found.last().expect("rows >= 2 leaves a neighbor");
        ids.extend(found.iter().copied().chain(std::iter::repeat(last)).take(k));
    }
    Ok(DifferenceNeighbors { rows, k, ids })
}

impl DifferenceNeighbors {
    /// Point-wise differences of `term` over these neighbor ids.
    pub fn field(&self, term: &[Point], weights: &ColorWeights) -> Result<DifferenceField> {
        if term.len() != self.rows {
            return Err(Error::InvalidParameter(format!(
                "prediction terms differ in length ({} vs {})",
                self.rows,
                term.len()
            )));
        }
        let values = self
            .ids
            .chunks_exact(self.k)
            .zip(term)
            .flat_map(|(row, p)| row.iter().map(move |&j| g_difference(p, &term[j], weights)))
            .collect();
        Ok(DifferenceField {
            rows: self.rows,
            k: self.k,
            values,
        })
    }
}

/// Difference fields of the self- and cross-prediction terms.
///
/// Neighbor ids are found once, on the predicted positions of `x_hat`, and
/// reused for `y_hat` so both fields compare corresponding points.
pub fn difference_fields(
    x_hat: &[Point],
    y_hat: &[Point],
    k: usize,
    weights: &ColorWeights,
) -> Result<(DifferenceField, DifferenceField)> {
    let neighbors = difference_neighbors(x_hat, k)?;
    Ok((neighbors.field(x_hat, weights)?, neighbors.field(y_hat, weights)?))
}

/// `(cov + T) / (std_x * std_y + T)` over the flattened fields, with
/// population moments.
pub fn prediction_similarity(field_x: &DifferenceField, field_y: &DifferenceField, t: f64) -> f64 {
    let x = &field_x.values;
    let y = &field_y.values;
    debug_assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxx += da * da;
        syy += db * db;
        sxy += da * db;
    }
    let (sx, sy, cov) = ((sxx / n).sqrt(), (syy / n).sqrt(), sxy / n);
    (cov + t) / (sx * sy + t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureParams {
    pub savar: SavarParams,
    pub t: f64,
    pub color_weights: ColorWeights,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            savar: SavarParams::default(),
            t: DEFAULT_T,
            color_weights: ColorWeights::RGB,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ComplexityDiagnostics {
    pub geometry_self: f64,
    pub geometry_cross: f64,
    pub color_self: f64,
    pub color_cross: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchFeatures {
    pub seed_index: usize,
    pub reference_points: usize,
    pub distorted_points: usize,
    pub f1_geometry: f64,
    pub f1_color: f64,
    pub f2: f64,
    pub diagnostics: ComplexityDiagnostics,
    /// Fewer than two reference points; excluded from every aggregate.
    pub skipped: bool,
    /// No distorted points in the cell; all three features are zero.
    pub empty: bool,
}

/// Reference-only quantities of one patch, reusable across distorted clouds.
#[derive(Debug, Clone)]
pub struct SelfTerms {
    pub prediction: PatchPrediction,
    pub neighbors: DifferenceNeighbors,
    pub field: DifferenceField,
}

/// `None` when the patch has fewer than 2 points and is skipped.
pub fn self_terms(reference: &[Point], params: &FeatureParams) -> Result<Option<SelfTerms>> {
    if reference.len() < 2 {
        return Ok(None);
    }
    let prediction = self_complexity(reference, &params.savar)?;
    let neighbors = difference_neighbors(&prediction.prediction, params.savar.k)?;
    let field = neighbors.field(&prediction.prediction, &params.color_weights)?;
    Ok(Some(SelfTerms {
        prediction,
        neighbors,
        field,
    }))
}

pub fn patch_features(pair: &PatchPair, params: &FeatureParams) -> Result<PatchFeatures> {
    let own = self_terms(&pair.reference, params)?;
    patch_features_with(pair.seed_index, &pair.reference, &pair.distorted, own.as_ref(), params)
}

/// Features of one patch given its precomputed self terms (`None` when the
/// reference side has fewer than 2 points).
pub fn patch_features_with(
    seed_index: usize,
    reference: &[Point],
    distorted: &[Point],
    own: Option<&SelfTerms>,
    params: &FeatureParams,
) -> Result<PatchFeatures> {
    let mut out = PatchFeatures {
        seed_index,
        reference_points: reference.len(),
        distorted_points: distorted.len(),
        f1_geometry: 0.0,
        f1_color: 0.0,
        f2: 0.0,
        diagnostics: ComplexityDiagnostics::default(),
        skipped: false,
        empty: false,
    };
    let Some(own) = own.filter(|_| reference.len() >= 2) else {
        out.skipped = true;
        return Ok(out);
    };
    if distorted.is_empty() {
        out.empty = true;
        return Ok(out);
    }
    let cross = cross_complexity(reference, distorted, &params.savar)?;
    let selfp = &own.prediction;
    out.diagnostics = ComplexityDiagnostics {
        geometry_self: selfp.geometry_complexity,
        geometry_cross: cross.geometry_complexity,
        color_self: selfp.color_complexity,
        color_cross: cross.color_complexity,
    };
    out.f1_geometry = complexity_similarity(selfp.geometry_complexity, cross.geometry_complexity, params.t);
    out.f1_color = complexity_similarity(selfp.color_complexity, cross.color_complexity, params.t);
    let fy = own.neighbors.field(&cross.prediction, &params.color_weights)?;
    out.f2 = prediction_similarity(&own.field, &fy, params.t);
    Ok(out)
}

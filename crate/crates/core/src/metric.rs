//! End-to-end scoring: segmentation, per-patch features and fusion into the
//! final quality score.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    patch_features_with, self_terms, ColorWeights, FeatureParams, PatchFeatures, SelfTerms, DEFAULT_T,
};
use crate::pointcloud::{Point, PointCloud, Vec3};
use crate::savar::{EtaMode, SavarParams, WeightScheme, DEFAULT_RIDGE};
use crate::segmentation::{assign_labels, gather_patches, select_seeds, SamplingStrategy, SeedSet};
use crate::spatial::SpatialIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorSpace {
    #[default]
    Rgb,
    Yuv,
}

impl std::str::FromStr for ColorSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(ColorSpace::Rgb),
            "yuv" => Ok(ColorSpace::Yuv),
            other => Err(Error::InvalidParameter(format!("unknown color space `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Number of Voronoi seeds (L).
    pub seeds: usize,
    /// SA-VAR order and difference-field neighborhood size (K).
    pub k: usize,
    /// Stabilizing constant of the similarity ratios (T).
    pub t: f64,
    /// Weight of the complexity feature in the final fusion.
    pub alpha: f64,
    pub sampling: SamplingStrategy,
    pub weight_scheme: WeightScheme,
    pub color_space: ColorSpace,
    pub eta_mode: EtaMode,
    /// Use the unnormalized 1:2:1 / 6:1:1 color weights.
    pub raw_color_weights: bool,
    /// Ignore neighbors coinciding with the predicted point in both SA-VAR
    /// fits. Disable for the literal neighbor rule.
    pub exclude_coincident: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            seeds: 400,
            k: 20,
            t: DEFAULT_T,
            alpha: 0.3,
            sampling: SamplingStrategy::Fps,
            weight_scheme: WeightScheme::SigmoidProposed,
            color_space: ColorSpace::Rgb,
            eta_mode: EtaMode::Std,
            raw_color_weights: false,
            exclude_coincident: true,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.seeds == 0 {
            return bad("seed count must be positive".into());
        }
        if self.k == 0 {
            return bad("K must be positive".into());
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return bad(format!("T must be positive, got {}", self.t));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        Ok(())
    }

    pub fn color_weights(&self) -> ColorWeights {
        match (self.color_space, self.raw_color_weights) {
            (ColorSpace::Rgb, false) => ColorWeights::RGB,
            (ColorSpace::Yuv, false) => ColorWeights::YUV,
            (ColorSpace::Rgb, true) => ColorWeights::RGB_RAW,
            (ColorSpace::Yuv, true) => ColorWeights::YUV_RAW,
        }
    }

    pub fn feature_params(&self) -> FeatureParams {
        FeatureParams {
            savar: SavarParams {
                k: self.k,
                scheme: self.weight_scheme,
                eta_mode: self.eta_mode,
                ridge: DEFAULT_RIDGE,
                exclude_coincident: self.exclude_coincident,
            },
            t: self.t,
            color_weights: self.color_weights(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportCounts {
    pub reference_points: usize,
    pub distorted_points: usize,
    pub patches_used: usize,
    pub patches_skipped: usize,
    pub patches_empty: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub q: f64,
    pub f1: f64,
    pub f1_geometry_mean: f64,
    pub f1_color_mean: f64,
    pub f2: f64,
    pub counts: ReportCounts,
    pub config: MetricConfig,
    pub per_patch: Vec<PatchFeatures>,
}

/// Full-range BT.601 conversion; U and V are offset to 128.
pub fn rgb_to_yuv(rgb: &Vec3) -> Vec3 {
    let [r, g, b] = *rgb;
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let u = -0.168_736 * r - 0.331_264 * g + 0.5 * b + 128.0;
    let v = 0.5 * r - 0.418_688 * g - 0.081_312 * b + 128.0;
    [y, u, v].map(|c| c.clamp(0.0, 255.0))
}

pub fn to_yuv(cloud: &PointCloud) -> PointCloud {
    cloud.map_points(|p| Point {
        position: p.position,
        color: rgb_to_yuv(&p.color),
    })
}

/// Scores `distorted` against `reference`; higher is better.
///
/// Colors are converted to YUV first when `config.color_space` asks for it.
pub fn score(reference: &PointCloud, distorted: &PointCloud, config: &MetricConfig) -> Result<QualityReport> {
    score_if_color(reference, distorted, config)
}

/// Applies the configured color-space conversion, then runs the pipeline.
pub fn score_if_color(reference: &PointCloud, distorted: &PointCloud, config: &MetricConfig) -> Result<QualityReport> {
    PreparedReference::new(reference, config)?.score(distorted)
}

fn in_color_space(cloud: &PointCloud, space: ColorSpace) -> PointCloud {
    match space {
        ColorSpace::Rgb => cloud.clone(),
        ColorSpace::Yuv => to_yuv(cloud),
    }
}

/// Reference-side work (seeds, patches and self-predictions), reusable
/// across any number of distorted clouds.
#[derive(Debug, Clone)]
pub struct PreparedReference {
    config: MetricConfig,
    reference_points: usize,
    seeds: SeedSet,
    seed_index: SpatialIndex,
    patches: Vec<Vec<Point>>,
    own: Vec<Option<SelfTerms>>,
}

impl PreparedReference {
    pub fn new(reference: &PointCloud, config: &MetricConfig) -> Result<Self> {
        config.validate()?;
        if reference.is_empty() {
            return Err(Error::InvalidCloud("reference cloud is empty".into()));
        }
        reference.validate()?;
        let reference = in_color_space(reference, config.color_space);
        let seeds = select_seeds(&reference, config.seeds, config.sampling)?;
        let seed_index = SpatialIndex::build(&seeds.positions)?;
        let labels = assign_labels(&reference, &seed_index);
        let patches = gather_patches(&reference, &labels, &seeds);
        let params = config.feature_params();
        let own = patches
            .par_iter()
            .map(|patch| self_terms(patch, &params))
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedReference {
            config: *config,
            reference_points: reference.len(),
            seeds,
            seed_index,
            patches,
            own,
        })
    }

    pub fn config(&self) -> &MetricConfig {
        &self.config
    }

    pub fn seeds(&self) -> &SeedSet {
        &self.seeds
    }

    pub fn score(&self, distorted: &PointCloud) -> Result<QualityReport> {
        if distorted.is_empty() {
            return Err(Error::InvalidCloud("distorted cloud is empty".into()));
        }
        distorted.validate()?;
        let distorted = in_color_space(distorted, self.config.color_space);
        let labels = assign_labels(&distorted, &self.seed_index);
        let distorted_patches = gather_patches(&distorted, &labels, &self.seeds);
        let params = self.config.feature_params();
        let per_patch = (0..self.patches.len())
            .into_par_iter()
            .map(|l| {
                patch_features_with(
                    l,
                    &self.patches[l],
                    &distorted_patches[l],
                    self.own[l].as_ref(),
                    &params,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        fuse(per_patch, self.reference_points, distorted.len(), &self.config)
    }
}

/// Ordered reduction of per-patch features, independent of how they were
/// scheduled.
fn fuse(
    per_patch: Vec<PatchFeatures>,
    reference_points: usize,
    distorted_points: usize,
    config: &MetricConfig,
) -> Result<QualityReport> {
    let (mut sum_g, mut sum_c, mut sum_f2) = (0.0, 0.0, 0.0);
    let mut counts = ReportCounts {
        reference_points,
        distorted_points,
        patches_used: 0,
        patches_skipped: 0,
        patches_empty: 0,
    };
    for f in &per_patch {
        if f.skipped {
            counts.patches_skipped += 1;
            continue;
        }
        counts.patches_used += 1;
        if f.empty {
            counts.patches_empty += 1;
        }
        sum_g += f.f1_geometry;
        sum_c += f.f1_color;
        sum_f2 += f.f2;
    }
    if counts.patches_used == 0 {
        return Err(Error::AllPatchesSkipped);
    }
    let used = counts.patches_used as f64;
    let f1_geometry_mean = sum_g / used;
    let f1_color_mean = sum_c / used;
    let f1 = f1_geometry_mean * f1_color_mean;
    let f2 = sum_f2 / used;
    let q = config.alpha * f1 + (1.0 - config.alpha) * f2;
    if !q.is_finite() {
        return Err(Error::NonFinite("quality score"));
    }
    Ok(QualityReport {
        q,
        f1,
        f1_geometry_mean,
        f1_color_mean,
        f2,
        counts,
        config: *config,
        per_patch,
    })
}

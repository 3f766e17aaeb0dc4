//! Controlled synthetic distortions: geometry Gaussian noise, color noise and
//! random downsampling.

use serde::{Deserialize, Serialize};

use super::PointCloud;
use crate::error::{Error, Result};
use crate::rng::SeededStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationKind {
    GeometryGaussian,
    ColorNoise,
    Downsample,
}

impl std::str::FromStr for DegradationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometry_gaussian" | "ggn" => Ok(DegradationKind::GeometryGaussian),
            "color_noise" | "cn" => Ok(DegradationKind::ColorNoise),
            "downsample" | "ds" => Ok(DegradationKind::Downsample),
            other => Err(Error::InvalidParameter(format!(
                "unknown degradation `{other}` (expected geometry_gaussian, color_noise or downsample)"
            ))),
        }
    }
}

/// `level` is the noise sigma (coordinate units or color channel units) for the
/// noise kinds, and the keep-fraction in (0, 1] for downsampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub kind: DegradationKind,
    pub level: f64,
    pub rng_seed: u64,
}

impl DegradationSpec {
    pub fn new(kind: DegradationKind, level: f64, rng_seed: u64) -> Self {
        DegradationSpec { kind, level, rng_seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.level.is_finite() || self.level < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "degradation level must be finite and nonnegative, got {}",
                self.level
            )));
        }
        if self.kind == DegradationKind::Downsample && !(self.level > 0.0 && self.level <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "downsample keep-fraction must lie in (0, 1], got {}",
                self.level
            )));
        }
        Ok(())
    }
}

/// Applies `spec` to `cloud`. Output is a pure function of `(cloud, spec)`.
pub fn degrade(cloud: &PointCloud, spec: &DegradationSpec) -> Result<PointCloud> {
    spec.validate()?;
    let mut stream = SeededStream::new(spec.rng_seed);
    match spec.kind {
        DegradationKind::GeometryGaussian | DegradationKind::ColorNoise => {
            if spec.level == 0.0 {
                return Ok(cloud.clone());
            }
            let color = spec.kind == DegradationKind::ColorNoise;
            let points = cloud
                .iter()
                .map(|p| {
                    let mut p = *p;
                    if color {
                        for c in &mut p.color {
                            *c = (*c + spec.level * stream.standard_normal()).clamp(0.0, 255.0);
                        }
                    } else {
                        for c in &mut p.position {
                            *c += spec.level * stream.standard_normal();
                        }
                    }
                    p
                })
                .collect();
            Ok(PointCloud::new(points))
        }
        DegradationKind::Downsample => {
            let n = cloud.len();
            let keep = (spec.level * n as f64).ceil() as usize;
            let keep = keep.min(n);
            if keep == 0 {
                return Err(Error::InvalidParameter(
                    "downsampling would produce an empty cloud".into(),
                ));
            }
            if keep == n {
                return Ok(cloud.clone());
            }
            let mut idx = stream.distinct_indices(n, keep);
            idx.sort_unstable();
            Ok(idx.into_iter().map(|i| cloud.points()[i]).collect())
        }
    }
}

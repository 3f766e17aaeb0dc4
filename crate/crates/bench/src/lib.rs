//! Shared fixtures for the benchmark suite.

use tcdm_core::synthetic::{generate, Shape};
use tcdm_core::{degrade, DegradationKind, DegradationSpec, MetricConfig, PointCloud};

/// Reference and a geometry-noise variant at 0.5 % of the diagonal.
pub fn pair(n: usize) -> (PointCloud, PointCloud) {
    let reference = generate(Shape::NoisyTorus, n, 17);
    let sigma = 0.005 * reference.bounding_box_diagonal();
    let distorted = degrade(
        &reference,
        &DegradationSpec::new(DegradationKind::GeometryGaussian, sigma, 3),
    )
    .expect("valid degradation");
    (reference, distorted)
}

/// Defaults with fewer seeds, scaled so patches keep their default size.
pub fn config_for(n: usize) -> MetricConfig {
    let defaults = MetricConfig::default();
    MetricConfig {
        seeds: (defaults.seeds * n / 100_000).max(8),
        ..defaults
    }
}

//! Seeded synthetic reference shapes with smooth 8-bit color fields, used by
//! tests, benchmarks and the self-validation runs.

use serde::{Deserialize, Serialize};

use crate::pointcloud::{Point, PointCloud, Vec3};
use crate::rng::SeededStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Tilted 1000 x 1000 plane.
    Plane,
    /// Sphere of radius 500.
    Sphere,
    /// Torus (major radius 400, minor 150) with 2-unit radial jitter.
    NoisyTorus,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Plane, Shape::Sphere, Shape::NoisyTorus];
}

fn color_at(p: &Vec3) -> Vec3 {
    let r = 128.0 + 100.0 * (p[0] / 150.0).sin();
    let g = 128.0 + 100.0 * (p[1] / 170.0).cos();
    let b = 128.0 + 80.0 * ((p[0] + p[1] + p[2]) / 200.0).sin();
    [r.round(), g.round(), b.round()]
}

/// `n` points sampled uniformly on `shape`, reproducible from `seed`.
pub fn generate(shape: Shape, n: usize, seed: u64) -> PointCloud {
    let mut s = SeededStream::new(seed);
    let tau = std::f64::consts::TAU;
    (0..n)
        .map(|_| {
            let position = match shape {
                Shape::Plane => {
                    let x = 1000.0 * s.uniform();
                    let y = 1000.0 * s.uniform();
                    [x, y, 0.2 * x + 0.1 * y]
                }
                Shape::Sphere => {
                    let z = 2.0 * s.uniform() - 1.0;
                    let phi = tau * s.uniform();
                    let rho = (1.0 - z * z).sqrt();
                    [
                        500.0 + 500.0 * rho * phi.cos(),
                        500.0 + 500.0 * rho * phi.sin(),
                        500.0 + 500.0 * z,
                    ]
                }
                Shape::NoisyTorus => {
                    let (major, minor) = (400.0, 150.0);
                    // Rejection sampling for a uniform surface density.
                    let (u, v) = loop {
                        let u = tau * s.uniform();
                        let v = tau * s.uniform();
                        let accept = (major + minor * v.cos()) / (major + minor);
                        if s.uniform() <= accept {
                            break (u, v);
                        }
                    };
                    let r = minor + 2.0 * s.standard_normal();
                    let ring = major + r * v.cos();
                    [500.0 + ring * u.cos(), 500.0 + ring * u.sin(), 500.0 + r * v.sin()]
                }
            };
            Point::new(position, color_at(&position))
        })
        .collect()
}

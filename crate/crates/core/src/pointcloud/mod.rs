//! Point cloud container, PLY I/O and synthetic degradations.

mod degrade;
mod ply;

pub use degrade::{degrade, DegradationKind, DegradationSpec};
pub use ply::{load_ply, read_ply, save_ply, write_ply, PlyEncoding};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// A colored 3D point. Color channels are carried on the 8-bit [0, 255] scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub position: Vec3,
    pub color: Vec3,
}

impl Point {
    pub fn new(position: Vec3, color: Vec3) -> Self {
        Point { position, color }
    }

    pub fn validate(&self) -> Result<()> {
        if self.position.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidCloud(format!(
                "non-finite coordinate {:?}",
                self.position
            )));
        }
        if self.color.iter().any(|c| !c.is_finite() || *c < 0.0 || *c > 255.0) {
            return Err(Error::InvalidCloud(format!("color {:?} outside [0, 255]", self.color)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        PointCloud { points }
    }

    /// Builds a cloud and checks every point invariant.
    pub fn try_new(points: Vec<Point>) -> Result<Self> {
        let cloud = PointCloud { points };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            p.validate()
                .map_err(|e| Error::InvalidCloud(format!("point {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| p.position).collect()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    /// Applies `f` to every point, keeping order.
    pub fn map_points(&self, f: impl Fn(&Point) -> Point) -> PointCloud {
        PointCloud::new(self.points.iter().map(f).collect())
    }

    /// Axis-aligned bounding box `(min, max)`, or `None` for an empty cloud.
    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = self.points.first()?.position;
        let mut lo = first;
        let mut hi = first;
        for p in &self.points[1..] {
            for a in 0..3 {
                lo[a] = lo[a].min(p.position[a]);
                hi[a] = hi[a].max(p.position[a]);
            }
        }
        Some((lo, hi))
    }

    pub fn bounding_box_diagonal(&self) -> f64 {
        match self.bounding_box() {
            Some((lo, hi)) => distance(&lo, &hi),
            None => 0.0,
        }
    }
}

impl FromIterator<Point> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        PointCloud::new(iter.into_iter().collect())
    }
}

#[inline]
pub fn squared_distance(a: &Vec3, b: &Vec3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn distance(a: &Vec3, b: &Vec3) -> f64 {
    squared_distance(a, b).sqrt()
}

//! Seed-induced Voronoi segmentation of a reference/distorted cloud pair into
//! aligned local patches.
//!
//! Cells are never built as polyhedra: a point belongs to the cell of its
//! nearest seed, with boundary ties resolved by the spatial index tie-break
//! (lexicographic seed position, then seed order).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{Point, PointCloud, Vec3};
use crate::spatial::{farthest_point_sampling, random_sampling, SpatialIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    #[default]
    Fps,
    Random {
        seed: u64,
    },
}

/// `fps`, `random` (seed 0) or `random:<seed>`.
impl std::str::FromStr for SamplingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "fps" => Ok(SamplingStrategy::Fps),
            None if s == "random" => Ok(SamplingStrategy::Random { seed: 0 }),
            Some(("random", seed)) => seed
                .parse()
                .map(|seed| SamplingStrategy::Random { seed })
                .map_err(|_| Error::InvalidParameter(format!("invalid sampling seed `{seed}`"))),
            _ => Err(Error::InvalidParameter(format!(
                "unknown sampling strategy `{s}` (expected fps, random or random:<seed>)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedSet {
    /// Indices into the reference cloud, in selection order.
    pub indices: Vec<usize>,
    pub positions: Vec<Vec3>,
}

impl SeedSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoronoiPartition {
    pub labels_ref: Vec<usize>,
    pub labels_dist: Vec<usize>,
}

/// One Voronoi cell's reference and distorted content, translated so the
/// generating seed sits at the origin. Colors are untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub seed_index: usize,
    pub seed: Vec3,
    pub reference: Vec<Point>,
    pub distorted: Vec<Point>,
}

impl PatchPair {
    pub fn reference_len(&self) -> usize {
        self.reference.len()
    }

    pub fn distorted_len(&self) -> usize {
        self.distorted.len()
    }
}

pub fn select_seeds(reference: &PointCloud, count: usize, strategy: SamplingStrategy) -> Result<SeedSet> {
    let positions = reference.positions();
    let indices = match strategy {
        SamplingStrategy::Fps => farthest_point_sampling(&positions, count)?,
        SamplingStrategy::Random { seed } => random_sampling(&positions, count, seed)?,
    };
    let positions = indices.iter().map(|&i| positions[i]).collect();
    Ok(SeedSet { indices, positions })
}

/// Nearest-seed label of every point of `cloud`.
pub fn assign_labels(cloud: &PointCloud, seed_index: &SpatialIndex) -> Vec<usize> {
    cloud
        .points()
        .par_iter()
        .map(|p| seed_index.nearest(&p.position))
        .collect()
}

pub fn assign_partition(reference: &PointCloud, distorted: &PointCloud, seeds: &SeedSet) -> Result<VoronoiPartition> {
    let index = SpatialIndex::build(&seeds.positions)?;
    Ok(VoronoiPartition {
        labels_ref: assign_labels(reference, &index),
        labels_dist: assign_labels(distorted, &index),
    })
}

/// Groups `cloud` by label in input order, translating each point by its
/// seed.
pub fn gather_patches(cloud: &PointCloud, labels: &[usize], seeds: &SeedSet) -> Vec<Vec<Point>> {
    let mut patches = vec![Vec::new(); seeds.len()];
    for (p, &l) in cloud.iter().zip(labels) {
        let seed = seeds.positions[l];
        patches[l].push(Point {
            position: [
                p.position[0] - seed[0],
                p.position[1] - seed[1],
                p.position[2] - seed[2],
            ],
            color: p.color,
        });
    }
    patches
}

pub fn build_patch_pairs(
    reference: &PointCloud,
    distorted: &PointCloud,
    partition: &VoronoiPartition,
    seeds: &SeedSet,
) -> Vec<PatchPair> {
    let reference = gather_patches(reference, &partition.labels_ref, seeds);
    let distorted = gather_patches(distorted, &partition.labels_dist, seeds);
    reference
        .into_iter()
        .zip(distorted)
        .enumerate()
        .map(|(seed_index, (reference, distorted))| PatchPair {
            seed_index,
            seed: seeds.positions[seed_index],
            reference,
            distorted,
        })
        .collect()
}

/// Seeds, partition and translated patch pairs in one call.
pub fn segment(
    reference: &PointCloud,
    distorted: &PointCloud,
    count: usize,
    strategy: SamplingStrategy,
) -> Result<(SeedSet, Vec<PatchPair>)> {
    let seeds = select_seeds(reference, count, strategy)?;
    let partition = assign_partition(reference, distorted, &seeds)?;
    let pairs = build_patch_pairs(reference, distorted, &partition, &seeds);
    Ok((seeds, pairs))
}

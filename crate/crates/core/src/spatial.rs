//! Deterministic k-nearest-neighbor search and seed sampling over 3D positions.
//!
//! Every query result is fully determined by the ordering key
//! `(distance, x, y, z, original index)`, compared ascending. The tree layout
//! never leaks into results, so reordering the input (with distinct positions)
//! only relabels indices.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::pointcloud::{squared_distance, Vec3};
use crate::rng::SeededStream;

const LEAF_SIZE: usize = 16;
// Below this size a linear scan with selection beats the tree walk.
const BRUTE_FORCE_LIMIT: usize = 48;

/// Neighbors sorted by the tie-break key; `distances[i]` belongs to `indices[i]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborList {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

impl NeighborList {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone)]
struct Node {
    lo: Vec3,
    hi: Vec3,
    start: u32,
    end: u32,
    // Children are `u32::MAX` for leaves.
    left: u32,
    right: u32,
}

/// Immutable kd-tree over a position array.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    // Positions and original ids in tree order.
    points: Vec<Vec3>,
    ids: Vec<u32>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy)]
struct Candidate {
    d2: f64,
    // Position in tree order.
    slot: u32,
}

#[inline]
fn lex_cmp(a: &Vec3, b: &Vec3) -> Ordering {
    a[0].total_cmp(&b[0])
        .then_with(|| a[1].total_cmp(&b[1]))
        .then_with(|| a[2].total_cmp(&b[2]))
}

#[inline]
fn box_distance2(q: &Vec3, lo: &Vec3, hi: &Vec3) -> f64 {
    let mut d2 = 0.0;
    for a in 0..3 {
        let gap = if q[a] < lo[a] {
            lo[a] - q[a]
        } else if q[a] > hi[a] {
            q[a] - hi[a]
        } else {
            0.0
        };
        d2 += gap * gap;
    }
    d2
}

impl SpatialIndex {
    pub fn build(positions: &[Vec3]) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidCloud("cannot index an empty position set".into()));
        }
        if positions.len() >= u32::MAX as usize {
            return Err(Error::InvalidCloud("too many points for the spatial index".into()));
        }
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("indexed positions"));
        }
        let mut order: Vec<u32> = (0..positions.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * positions.len() / LEAF_SIZE + 1);
        build_node(positions, &mut order, 0, &mut nodes);
        let points = order.iter().map(|&i| positions[i as usize]).collect();
        Ok(SpatialIndex {
            points,
            ids: order,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `min(k, available)` nearest points to `query`, skipping `exclude`.
    pub fn knn(&self, query: &Vec3, k: usize, exclude: Option<usize>) -> NeighborList {
        let exclude64 = exclude.map(|e| e as u64).unwrap_or(u64::MAX);
        let best = if k == 0 {
            Vec::new()
        } else if self.points.len() <= BRUTE_FORCE_LIMIT {
            self.scan(query, k, exclude64)
        } else {
            let mut best: Vec<Candidate> = Vec::with_capacity(k + 1);
            self.search(0, query, k, exclude64, &mut best);
            best
        };
        NeighborList {
            indices: best.iter().map(|c| self.ids[c.slot as usize] as usize).collect(),
            distances: best.iter().map(|c| c.d2.sqrt()).collect(),
        }
    }

    /// Nearest indexed point (same tie-break as [`knn`](Self::knn)).
    pub fn nearest(&self, query: &Vec3) -> usize {
        self.knn(query, 1, None).indices[0]
    }

    #[inline]
    fn slot_cmp(&self, a: &Candidate, b: &Candidate) -> Ordering {
        a.d2.total_cmp(&b.d2)
            .then_with(|| lex_cmp(&self.points[a.slot as usize], &self.points[b.slot as usize]))
            .then_with(|| self.ids[a.slot as usize].cmp(&self.ids[b.slot as usize]))
    }

    fn scan(&self, q: &Vec3, k: usize, exclude: u64) -> Vec<Candidate> {
        let mut all: Vec<Candidate> = (0..self.points.len() as u32)
            .filter(|&slot| self.ids[slot as usize] as u64 != exclude)
            .map(|slot| Candidate {
                d2: squared_distance(q, &self.points[slot as usize]),
                slot,
            })
            .collect();
        if all.len() > k {
            all.select_nth_unstable_by(k - 1, |a, b| self.slot_cmp(a, b));
            all.truncate(k);
        }
        all.sort_unstable_by(|a, b| self.slot_cmp(a, b));
        all
    }

    fn search(&self, node: usize, q: &Vec3, k: usize, exclude: u64, best: &mut Vec<Candidate>) {
        let n = &self.nodes[node];
        if n.left == u32::MAX {
            for slot in n.start..n.end {
                let i = slot as usize;
                let d2 = squared_distance(q, &self.points[i]);
                let full = best.len() == k;
                if full && d2 > best[k - 1].d2 {
                    continue;
                }
                if self.ids[i] as u64 == exclude {
                    continue;
                }
                let cand = Candidate { d2, slot };
                if full {
                    if self.slot_cmp(&cand, &best[k - 1]) != Ordering::Less {
                        continue;
                    }
                    best.pop();
                }
                let mut at = best.len();
                while at > 0 && self.slot_cmp(&best[at - 1], &cand) == Ordering::Greater {
                    at -= 1;
                }
                best.insert(at, cand);
            }
            return;
        }
        let (l, r) = (n.left as usize, n.right as usize);
        let dl = box_distance2(q, &self.nodes[l].lo, &self.nodes[l].hi);
        let dr = box_distance2(q, &self.nodes[r].lo, &self.nodes[r].hi);
        let (first, d_first, second, d_second) = if dl <= dr { (l, dl, r, dr) } else { (r, dr, l, dl) };
        if best.len() < k || d_first <= best[k - 1].d2 {
            self.search(first, q, k, exclude, best);
        }
        if best.len() < k || d_second <= best[k - 1].d2 {
            self.search(second, q, k, exclude, best);
        }
    }
}

fn build_node(positions: &[Vec3], order: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let mut lo = positions[order[0] as usize];
    let mut hi = lo;
    for &i in order.iter() {
        let p = &positions[i as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let me = nodes.len();
    nodes.push(Node {
        lo,
        hi,
        start: offset as u32,
        end: (offset + order.len()) as u32,
        left: u32::MAX,
        right: u32::MAX,
    });
    if order.len() <= LEAF_SIZE {
        return me;
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        positions[a as usize][axis].total_cmp(&positions[b as usize][axis])
    });
    let (left_part, right_part) = order.split_at_mut(mid);
    let left = build_node(positions, left_part, offset, nodes);
    let right = build_node(positions, right_part, offset + mid, nodes);
    nodes[me].left = left as u32;
    nodes[me].right = right as u32;
    me
}

/// Farthest-point sampling of `count` indices, in selection order.
///
/// The first seed is the point farthest from the coordinate centroid; every
/// later seed maximizes its minimum distance to the seeds chosen so far. Ties
/// go to the lexicographically smallest position, then the smallest index.
pub fn farthest_point_sampling(positions: &[Vec3], count: usize) -> Result<Vec<usize>> {
    check_sample_count(positions.len(), count)?;
    let centroid = order_independent_centroid(positions);
    let from_centroid: Vec<f64> = positions.iter().map(|p| squared_distance(p, &centroid)).collect();

    // Negative marks an already-selected point.
    let mut min_d2 = vec![f64::INFINITY; positions.len()];
    let mut seeds = Vec::with_capacity(count);
    let mut next = argmax(positions, &from_centroid);
    loop {
        seeds.push(next);
        if seeds.len() == count {
            break;
        }
        min_d2[next] = -1.0;
        let seed = positions[next];
        let mut best = usize::MAX;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, p) in positions.iter().enumerate() {
            let current = min_d2[i];
            if current < 0.0 {
                continue;
            }
            let d2 = squared_distance(p, &seed);
            let m = if d2 < current { d2 } else { current };
            min_d2[i] = m;
            if m > best_d2 || (m == best_d2 && better_seed(positions, &min_d2, i, best)) {
                best = i;
                best_d2 = m;
            }
        }
        // count <= len guarantees an unselected point remains.
        next = best;
    }
    Ok(seeds)
}

#[inline]
fn better_seed(positions: &[Vec3], min_d2: &[f64], i: usize, j: usize) -> bool {
    match min_d2[i].total_cmp(&min_d2[j]) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => match lex_cmp(&positions[i], &positions[j]) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => i < j,
        },
    }
}

fn argmax(positions: &[Vec3], score: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..positions.len() {
        if better_seed(positions, score, i, best) {
            best = i;
        }
    }
    best
}

/// Per-axis mean with the summands sorted first, so the result does not
/// depend on the input order.
fn order_independent_centroid(positions: &[Vec3]) -> Vec3 {
    let mut centroid = [0.0; 3];
    let mut column: Vec<f64> = Vec::with_capacity(positions.len());
    for (a, c) in centroid.iter_mut().enumerate() {
        column.clear();
        column.extend(positions.iter().map(|p| p[a]));
        column.sort_unstable_by(f64::total_cmp);
        *c = column.iter().sum::<f64>() / positions.len() as f64;
    }
    centroid
}

/// `count` distinct uniformly random indices, reproducible from `rng_seed`.
pub fn random_sampling(positions: &[Vec3], count: usize, rng_seed: u64) -> Result<Vec<usize>> {
    check_sample_count(positions.len(), count)?;
    Ok(SeededStream::new(rng_seed).distinct_indices(positions.len(), count))
}

fn check_sample_count(available: usize, requested: usize) -> Result<()> {
    if requested == 0 {
        return Err(Error::InvalidParameter("sample count must be positive".into()));
    }
    if requested > available {
        return Err(Error::TooManySamples { requested, available });
    }
    Ok(())
}

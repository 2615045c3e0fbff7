//! Exact Euclidean neighborhoods in the joint space.
//!
//! Three selection strategies are supported: plain k-nearest neighbors,
//! inverse-distance-weighted sampling from a kNN candidate pool (`knnp`),
//! and uniform random batches.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{CemsError, Result};

/// How the members of a neighborhood are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Selection {
    Knn,
    Knnp,
    Random,
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selection::Knn => "knn",
            Selection::Knnp => "knnp",
            Selection::Random => "random",
        })
    }
}

impl FromStr for Selection {
    type Err = CemsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knn" => Ok(Selection::Knn),
            "knnp" => Ok(Selection::Knnp),
            "random" => Ok(Selection::Random),
            other => Err(CemsError::Parameter(format!("unknown selection strategy '{other}'"))),
        }
    }
}

/// Exact nearest-neighbor index over the rows of a joint-sample matrix.
///
/// Queries are brute-force scans over row-major storage, so results are exact
/// and independent of any tree heuristics.
#[derive(Debug)]
pub struct NeighborIndex {
    data: Vec<f64>,
    n: usize,
    dim: usize,
    median_distance: OnceLock<f64>,
}

impl Clone for NeighborIndex {
    fn clone(&self) -> Self {
        Self {
            data: self.data.clone(),
            n: self.n,
            dim: self.dim,
            median_distance: self.median_distance.clone(),
        }
    }
}

/// Rows above which the median pairwise distance is taken over an evenly
/// strided subset.
const MEDIAN_SUBSET: usize = 2048;

impl NeighborIndex {
    pub fn build(points: &DMatrix<f64>) -> Result<Self> {
        let (n, dim) = points.shape();
        if n < 2 {
            return Err(CemsError::Parameter(format!(
                "neighbor index needs at least 2 points, got {n}"
            )));
        }
        if dim == 0 {
            return Err(CemsError::Parameter("neighbor index needs at least one column".into()));
        }
        let mut data = Vec::with_capacity(n * dim);
        for i in 0..n {
            for j in 0..dim {
                let v = points[(i, j)];
                if !v.is_finite() {
                    return Err(CemsError::Data(format!(
                        "non-finite point entry at row {i}, column {j}"
                    )));
                }
                data.push(v);
            }
        }
        Ok(Self {
            data,
            n,
            dim,
            median_distance: OnceLock::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(self.row(i))
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        squared_distance(self.row(i), self.row(j)).sqrt()
    }

    /// Squared distances from row `anchor` to every row.
    pub fn squared_distances_from(&self, anchor: usize) -> Vec<f64> {
        let a = self.row(anchor);
        (0..self.n).map(|j| squared_distance(a, self.row(j))).collect()
    }

    /// The `k` rows nearest to `anchor`, excluding `anchor` itself, sorted by
    /// distance with ties broken by lower row index.
    pub fn nearest(&self, anchor: usize, k: usize) -> Vec<(usize, f64)> {
        let d2 = self.squared_distances_from(anchor);
        let mut cand: Vec<(usize, f64)> = d2.into_iter().enumerate().filter(|&(j, _)| j != anchor).collect();
        let k = k.min(cand.len());
        if k == 0 {
            return Vec::new();
        }
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, by_distance_then_index);
            cand.truncate(k);
        }
        cand.sort_unstable_by(by_distance_then_index);
        cand.into_iter().map(|(j, d)| (j, d.sqrt())).collect()
    }

    /// Median pairwise distance, computed once on first use.
    pub fn median_pairwise_distance(&self) -> f64 {
        *self.median_distance.get_or_init(|| {
            let rows: Vec<usize> = if self.n <= MEDIAN_SUBSET {
                (0..self.n).collect()
            } else {
                (0..MEDIAN_SUBSET).map(|i| i * self.n / MEDIAN_SUBSET).collect()
            };
            let mut d = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
            for (a, &i) in rows.iter().enumerate() {
                for &j in &rows[a + 1..] {
                    d.push(self.distance(i, j));
                }
            }
            let mid = d.len() / 2;
            let (_, m, _) = d.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
            *m
        })
    }

    fn members(&self, indices: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(indices.len(), self.dim, |r, c| self.row(indices[r])[c])
    }

    fn check_anchor(&self, anchor: usize) -> Result<()> {
        if anchor >= self.n {
            return Err(CemsError::Parameter(format!(
                "anchor index {anchor} out of range for {} points",
                self.n
            )));
        }
        Ok(())
    }

    fn check_k(&self, k: usize, include_anchor: bool) -> Result<()> {
        let max = if include_anchor { self.n } else { self.n - 1 };
        if k == 0 || k > max {
            return Err(CemsError::Parameter(format!(
                "neighborhood size k = {k} outside 1..={max} for {} points",
                self.n
            )));
        }
        Ok(())
    }
}

fn by_distance_then_index(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// An anchor together with `k` nearby samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub anchor_index: usize,
    pub anchor: DVector<f64>,
    pub member_indices: Vec<usize>,
    /// `k x D`, row `i` is the sample at `member_indices[i]`.
    pub members: DMatrix<f64>,
    pub strategy: Selection,
    pub include_anchor: bool,
}

impl Neighborhood {
    fn from_index(
        index: &NeighborIndex,
        anchor_index: usize,
        member_indices: Vec<usize>,
        strategy: Selection,
        include_anchor: bool,
    ) -> Self {
        Self {
            anchor_index,
            anchor: index.point(anchor_index),
            members: index.members(&member_indices),
            member_indices,
            strategy,
            include_anchor,
        }
    }

    /// A neighborhood over explicit points that do not come from an index.
    ///
    /// Member indices are `0..k`; when `include_anchor` is set the anchor must
    /// be row 0 of `members`.
    pub fn from_points(anchor: DVector<f64>, members: DMatrix<f64>, include_anchor: bool) -> Result<Self> {
        if members.ncols() != anchor.len() {
            return Err(CemsError::Schema(format!(
                "members have {} columns, anchor has {}",
                members.ncols(),
                anchor.len()
            )));
        }
        if members.nrows() == 0 {
            return Err(CemsError::Parameter("neighborhood needs at least one member".into()));
        }
        Ok(Self {
            anchor_index: 0,
            anchor,
            member_indices: (0..members.nrows()).collect(),
            members,
            strategy: Selection::Knn,
            include_anchor,
        })
    }

    pub fn len(&self) -> usize {
        self.member_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }
}

/// The `k` nearest rows to `anchor_index`.
///
/// With `include_anchor` the anchor occupies the first slot and the remaining
/// `k - 1` slots hold its nearest other rows.
pub fn knn_neighbors(
    index: &NeighborIndex,
    anchor_index: usize,
    k: usize,
    include_anchor: bool,
) -> Result<Neighborhood> {
    index.check_anchor(anchor_index)?;
    index.check_k(k, include_anchor)?;
    let others = if include_anchor { k - 1 } else { k };
    let mut members: Vec<usize> = Vec::with_capacity(k);
    if include_anchor {
        members.push(anchor_index);
    }
    members.extend(index.nearest(anchor_index, others).into_iter().map(|(j, _)| j));
    Ok(Neighborhood::from_index(
        index,
        anchor_index,
        members,
        Selection::Knn,
        include_anchor,
    ))
}

/// Options for inverse-distance-weighted neighbor sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnpOptions {
    /// Candidate pool is the `pool_factor * k` nearest rows.
    pub pool_factor: usize,
    /// Additive distance offset; `None` uses `1e-8` times the median pairwise distance.
    pub epsilon: Option<f64>,
}

impl Default for KnnpOptions {
    fn default() -> Self {
        Self {
            pool_factor: 4,
            epsilon: None,
        }
    }
}

/// `k` distinct rows drawn without replacement from the anchor's candidate
/// pool, with probability weight `1 / (distance + epsilon)`.
pub fn knnp_neighbors<R: Rng + ?Sized>(
    index: &NeighborIndex,
    anchor_index: usize,
    k: usize,
    include_anchor: bool,
    rng: &mut R,
) -> Result<Neighborhood> {
    knnp_neighbors_with(index, anchor_index, k, include_anchor, KnnpOptions::default(), rng)
}

pub fn knnp_neighbors_with<R: Rng + ?Sized>(
    index: &NeighborIndex,
    anchor_index: usize,
    k: usize,
    include_anchor: bool,
    options: KnnpOptions,
    rng: &mut R,
) -> Result<Neighborhood> {
    index.check_anchor(anchor_index)?;
    index.check_k(k, include_anchor)?;
    if options.pool_factor == 0 {
        return Err(CemsError::Parameter("knnp pool factor must be positive".into()));
    }
    let eps = match options.epsilon {
        Some(e) if e > 0.0 => e,
        Some(e) => return Err(CemsError::Parameter(format!("knnp epsilon must be positive, got {e}"))),
        None => (1e-8 * index.median_pairwise_distance()).max(f64::MIN_POSITIVE),
    };
    let draws = if include_anchor { k - 1 } else { k };
    let pool = index.nearest(anchor_index, options.pool_factor * draws.max(1));
    let mut weights: Vec<f64> = pool.iter().map(|&(_, d)| 1.0 / (d + eps)).collect();

    let mut members: Vec<usize> = Vec::with_capacity(k);
    if include_anchor {
        members.push(anchor_index);
    }
    // Sequential weighted draws without replacement.
    for _ in 0..draws {
        let total: f64 = weights.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut chosen = None;
        for (slot, w) in weights.iter().enumerate() {
            if *w <= 0.0 {
                continue;
            }
            chosen = Some(slot);
            if target < *w {
                break;
            }
            target -= w;
        }
        let slot = chosen.ok_or_else(|| CemsError::Numeric("knnp candidate pool exhausted".into()))?;
        weights[slot] = 0.0;
        members.push(pool[slot].0);
    }
    Ok(Neighborhood::from_index(
        index,
        anchor_index,
        members,
        Selection::Knnp,
        include_anchor,
    ))
}

/// `k` distinct rows chosen uniformly at random, in draw order; the first
/// drawn row is the anchor.
pub fn random_batch<R: Rng + ?Sized>(index: &NeighborIndex, k: usize, rng: &mut R) -> Result<Neighborhood> {
    index.check_k(k, true)?;
    let mut rows: Vec<usize> = (0..index.len()).collect();
    let (chosen, _) = rows.partial_shuffle(rng, k);
    let members = chosen.to_vec();
    Ok(Neighborhood::from_index(
        index,
        members[0],
        members,
        Selection::Random,
        true,
    ))
}

/// Uniform random members around a fixed anchor.
pub fn random_around<R: Rng + ?Sized>(
    index: &NeighborIndex,
    anchor_index: usize,
    k: usize,
    include_anchor: bool,
    rng: &mut R,
) -> Result<Neighborhood> {
    index.check_anchor(anchor_index)?;
    index.check_k(k, include_anchor)?;
    let mut rows: Vec<usize> = (0..index.len()).filter(|&j| j != anchor_index).collect();
    let draws = if include_anchor { k - 1 } else { k };
    let (chosen, _) = rows.partial_shuffle(rng, draws);
    let mut members = Vec::with_capacity(k);
    if include_anchor {
        members.push(anchor_index);
    }
    members.extend_from_slice(chosen);
    Ok(Neighborhood::from_index(
        index,
        anchor_index,
        members,
        Selection::Random,
        include_anchor,
    ))
}

/// Dispatches to the configured selection strategy around `anchor_index`.
pub fn select<R: Rng + ?Sized>(
    index: &NeighborIndex,
    anchor_index: usize,
    k: usize,
    strategy: Selection,
    include_anchor: bool,
    rng: &mut R,
) -> Result<Neighborhood> {
    match strategy {
        Selection::Knn => knn_neighbors(index, anchor_index, k, include_anchor),
        Selection::Knnp => knnp_neighbors(index, anchor_index, k, include_anchor, rng),
        Selection::Random => random_around(index, anchor_index, k, include_anchor, rng),
    }
}

//! Local tangent/normal frames from the SVD of a centered neighborhood.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{CemsError, Result};
use crate::neighbors::Neighborhood;

/// Point-wise sampling centers on the anchor; batch sampling centers on the
/// neighborhood mean and shares one frame across all members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Point,
    Batch,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Point => "point",
            Mode::Batch => "batch",
        })
    }
}

impl FromStr for Mode {
    type Err = CemsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point" => Ok(Mode::Point),
            "batch" => Ok(Mode::Batch),
            other => Err(CemsError::Parameter(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenteredNeighborhood {
    pub origin: DVector<f64>,
    /// `k x D`, row `j` is `member_j - origin`.
    pub deltas: DMatrix<f64>,
    pub mode: Mode,
}

impl CenteredNeighborhood {
    pub fn dim(&self) -> usize {
        self.origin.len()
    }
}

pub fn center(neighborhood: &Neighborhood, mode: Mode) -> Result<CenteredNeighborhood> {
    let k = neighborhood.len();
    if k < 2 {
        return Err(CemsError::Geometry(format!(
            "centering needs at least 2 members, got {k}"
        )));
    }
    let origin = match mode {
        Mode::Point => neighborhood.anchor.clone(),
        Mode::Batch => neighborhood.members.row_mean().transpose(),
    };
    let mut deltas = neighborhood.members.clone();
    for mut row in deltas.row_iter_mut() {
        row -= origin.transpose();
    }
    Ok(CenteredNeighborhood { origin, deltas, mode })
}

/// Orthonormal columns `[tangent | normal]` ordered by singular value.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    /// `D x d`.
    pub tangent: DMatrix<f64>,
    /// `D x (r - d)` with `r = min(k, D)`.
    pub normal: DMatrix<f64>,
    /// Length `r`, non-increasing.
    pub singular_values: DVector<f64>,
}

impl OrthonormalBasis {
    pub fn ambient_dim(&self) -> usize {
        self.tangent.nrows()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.tangent.ncols()
    }

    pub fn normal_dim(&self) -> usize {
        self.normal.ncols()
    }

    /// `[B_T | B_N]`, `D x r`.
    pub fn full(&self) -> DMatrix<f64> {
        let (dd, d, q) = (self.ambient_dim(), self.intrinsic_dim(), self.normal_dim());
        DMatrix::from_fn(dd, d + q, |i, j| {
            if j < d {
                self.tangent[(i, j)]
            } else {
                self.normal[(i, j - d)]
            }
        })
    }

    /// Orthogonal projector onto the tangent span, `B_T B_T^T`.
    pub fn tangent_projector(&self) -> DMatrix<f64> {
        &self.tangent * self.tangent.transpose()
    }
}

/// Flips `v` so its largest-magnitude entry is positive (first index on ties).
fn canonical_sign(mut v: DVector<f64>) -> DVector<f64> {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
    v
}

/// Reduced SVD of the `D x k` delta matrix; the first `d` left singular
/// vectors span the tangent space and the remaining `min(k, D) - d` the
/// retained normal space.
pub fn fit_basis(centered: &CenteredNeighborhood, d: usize) -> Result<OrthonormalBasis> {
    let (k, dim) = centered.deltas.shape();
    let r = k.min(dim);
    if d == 0 || d >= r {
        return Err(CemsError::Parameter(format!(
            "intrinsic dimension {d} must satisfy 1 <= d < min(k, D) = {r}"
        )));
    }
    if centered.deltas.iter().all(|v| *v == 0.0) {
        return Err(CemsError::Geometry("all neighborhood deltas are zero".into()));
    }
    let svd = SVD::try_new(centered.deltas.transpose(), true, false, f64::EPSILON, 0)
        .ok_or_else(|| CemsError::Numeric("SVD did not converge".into()))?;
    let u = svd
        .u
        .ok_or_else(|| CemsError::Numeric("SVD returned no left vectors".into()))?;
    let s = svd.singular_values;

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));

    let s_max = s[order[0]];
    let tol = s_max * (dim.max(k) as f64) * f64::EPSILON;
    let rank = order.iter().filter(|&&i| s[i] > tol).count();
    if rank < d {
        return Err(CemsError::Geometry(format!(
            "neighborhood spans only {rank} directions, intrinsic dimension is {d}"
        )));
    }
    if rank > d {
        let (sd, sd1) = (s[order[d - 1]], s[order[d]]);
        if sd - sd1 <= 1e-8 * s_max {
            log::debug!("near-degenerate spectrum at the tangent cut: s_d = {sd}, s_(d+1) = {sd1}");
        }
    }

    let columns: Vec<DVector<f64>> = order
        .iter()
        .map(|&i| canonical_sign(u.column(i).into_owned()))
        .collect();
    let tangent = DMatrix::from_columns(&columns[..d]);
    let normal = if r > d {
        DMatrix::from_columns(&columns[d..r])
    } else {
        DMatrix::zeros(dim, 0)
    };
    let singular_values = DVector::from_iterator(r, order.iter().take(r).map(|&i| s[i]));
    Ok(OrthonormalBasis {
        tangent,
        normal,
        singular_values,
    })
}

/// Tangent and normal coordinates of every delta.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedNeighborhood {
    /// `k x d`.
    pub tangent_coords: DMatrix<f64>,
    /// `k x (r - d)`.
    pub normal_coords: DMatrix<f64>,
}

impl ProjectedNeighborhood {
    pub fn len(&self) -> usize {
        self.tangent_coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn project(basis: &OrthonormalBasis, centered: &CenteredNeighborhood) -> Result<ProjectedNeighborhood> {
    if centered.dim() != basis.ambient_dim() {
        return Err(CemsError::Geometry(format!(
            "basis has ambient dimension {}, neighborhood has {}",
            basis.ambient_dim(),
            centered.dim()
        )));
    }
    Ok(ProjectedNeighborhood {
        tangent_coords: &centered.deltas * &basis.tangent,
        normal_coords: &centered.deltas * &basis.normal,
    })
}

/// `B_T u + B_N g + origin`.
pub fn unproject(
    basis: &OrthonormalBasis,
    u: &DVector<f64>,
    g: &DVector<f64>,
    origin: &DVector<f64>,
) -> Result<DVector<f64>> {
    if u.len() != basis.intrinsic_dim() || g.len() != basis.normal_dim() || origin.len() != basis.ambient_dim() {
        return Err(CemsError::Geometry(format!(
            "unproject shapes u={}, g={}, origin={} do not match basis {}x({}+{})",
            u.len(),
            g.len(),
            origin.len(),
            basis.ambient_dim(),
            basis.intrinsic_dim(),
            basis.normal_dim()
        )));
    }
    Ok(&basis.tangent * u + &basis.normal * g + origin)
}

/// Frobenius norm of each delta's component outside the retained span.
pub fn reconstruction_residual(
    basis: &OrthonormalBasis,
    centered: &CenteredNeighborhood,
    projected: &ProjectedNeighborhood,
) -> f64 {
    let rebuilt =
        &projected.tangent_coords * basis.tangent.transpose() + &projected.normal_coords * basis.normal.transpose();
    (&centered.deltas - rebuilt).norm()
}

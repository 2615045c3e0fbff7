//! Synthetic manifolds with closed-form distance oracles.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{CemsError, Result};
use crate::model::{self, Dataset, NormalizationState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SyntheticKind {
    Sine,
    Hypersphere,
    Quadratic,
    Plane,
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticKind::Sine => "sine",
            SyntheticKind::Hypersphere => "hypersphere",
            SyntheticKind::Quadratic => "quadratic",
            SyntheticKind::Plane => "plane",
        })
    }
}

impl FromStr for SyntheticKind {
    type Err = CemsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" => Ok(SyntheticKind::Sine),
            "hypersphere" | "sphere" => Ok(SyntheticKind::Hypersphere),
            "quadratic" => Ok(SyntheticKind::Quadratic),
            "plane" => Ok(SyntheticKind::Plane),
            other => Err(CemsError::Parameter(format!("unknown synthetic kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    /// Standard deviation of additive Gaussian noise.
    pub noise_sd: f64,
    /// Scalar curvature (hypersphere only).
    pub curvature: f64,
    pub intrinsic_d: usize,
    /// Feature dimension for the hypersphere; joint dimension for quadratic and plane.
    pub ambient_d: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            kind: SyntheticKind::Sine,
            n: 500,
            noise_sd: 0.0,
            curvature: 1.0,
            intrinsic_d: 1,
            ambient_d: 2,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(CemsError::Parameter(format!(
                "synthetic datasets need n >= 10, got {}",
                self.n
            )));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(CemsError::Parameter(format!(
                "noise_sd must be >= 0, got {}",
                self.noise_sd
            )));
        }
        match self.kind {
            SyntheticKind::Sine => Ok(()),
            SyntheticKind::Hypersphere => {
                if !(self.curvature > 0.0 && self.curvature.is_finite()) {
                    return Err(CemsError::Parameter(format!(
                        "curvature must be > 0, got {}",
                        self.curvature
                    )));
                }
                if self.intrinsic_d == 0 || self.intrinsic_d + 1 > self.ambient_d {
                    return Err(CemsError::Parameter(format!(
                        "hypersphere needs 1 <= d and d + 1 <= D, got d = {}, D = {}",
                        self.intrinsic_d, self.ambient_d
                    )));
                }
                Ok(())
            }
            SyntheticKind::Quadratic | SyntheticKind::Plane => {
                if self.intrinsic_d == 0 || self.intrinsic_d >= self.ambient_d {
                    return Err(CemsError::Parameter(format!(
                        "{} needs 1 <= d < D, got d = {}, D = {}",
                        self.kind, self.intrinsic_d, self.ambient_d
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Closed-form description of the manifold a dataset was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    /// `y = sin(x)`.
    Sine,
    /// Sphere of `radius` in `R^(d+1)`, embedded by the orthonormal columns of `embedding`.
    Sphere { radius: f64, embedding: DMatrix<f64> },
    /// Graph of `½ uᵀ H_a u` over `u in R^d`, embedded by `embedding` (`D x D`, orthogonal).
    Quadratic {
        hessians: Vec<DMatrix<f64>>,
        embedding: DMatrix<f64>,
    },
    /// Span of the orthonormal columns of `embedding`.
    Plane { embedding: DMatrix<f64> },
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// The dataset as consumers see it (min-max scaled for the hypersphere).
    pub dataset: Dataset,
    /// Features before any rescaling.
    pub raw_features: DMatrix<f64>,
    pub raw_targets: DMatrix<f64>,
    pub normalization: Option<NormalizationState>,
    pub geometry: Geometry,
}

pub fn generate(params: &SyntheticSpec) -> Result<SyntheticData> {
    params.validate()?;
    match params.kind {
        SyntheticKind::Sine => {
            let dataset = gen_sine(params.n, params.noise_sd, params.seed)?;
            Ok(SyntheticData {
                raw_features: dataset.features().clone(),
                raw_targets: dataset.targets().clone(),
                dataset,
                normalization: None,
                geometry: Geometry::Sine,
            })
        }
        SyntheticKind::Hypersphere => gen_hypersphere_with_noise(
            params.n,
            params.intrinsic_d,
            params.curvature,
            params.ambient_d,
            params.noise_sd,
            params.seed,
        ),
        SyntheticKind::Quadratic => gen_quadratic(
            params.n,
            params.intrinsic_d,
            params.ambient_d,
            params.noise_sd,
            params.seed,
        ),
        SyntheticKind::Plane => gen_plane(
            params.n,
            params.intrinsic_d,
            params.ambient_d,
            params.noise_sd,
            params.seed,
        ),
    }
}

/// `x ~ U[0, 2π]`, `y = sin(x) + N(0, noise_sd²)`.
pub fn gen_sine(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    SyntheticSpec {
        n,
        noise_sd,
        seed,
        ..SyntheticSpec::default()
    }
    .validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.random::<f64>() * std::f64::consts::TAU;
        let e: f64 = rng.sample(StandardNormal);
        xs.push(x);
        ys.push(x.sin() + noise_sd * e);
    }
    Dataset::new(
        DMatrix::from_column_slice(n, 1, &xs),
        DMatrix::from_column_slice(n, 1, &ys),
        vec!["x".into()],
        vec!["y".into()],
    )
}

/// Sphere radius for a given curvature: `sqrt(d(d-1)/κ)` (scalar curvature)
/// for `d >= 2`, `1/sqrt(κ)` (sectional curvature of a circle) for `d = 1`.
pub fn radius_for_curvature(intrinsic_d: usize, curvature: f64) -> f64 {
    if intrinsic_d >= 2 {
        ((intrinsic_d * (intrinsic_d - 1)) as f64 / curvature).sqrt()
    } else {
        1.0 / curvature.sqrt()
    }
}

/// A `rows x cols` matrix with orthonormal columns (`rows >= cols`).
pub fn random_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

/// Uniform samples on a `d`-sphere of curvature `curvature`, isometrically
/// embedded in `R^ambient_d`, with target `sin(Σ p_i)` over the sphere
/// coordinates. Features and targets are min-max scaled to `[0, 1]`.
pub fn gen_hypersphere(
    n: usize,
    intrinsic_d: usize,
    curvature: f64,
    ambient_d: usize,
    seed: u64,
) -> Result<SyntheticData> {
    gen_hypersphere_with_noise(n, intrinsic_d, curvature, ambient_d, 0.0, seed)
}

pub fn gen_hypersphere_with_noise(
    n: usize,
    intrinsic_d: usize,
    curvature: f64,
    ambient_d: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<SyntheticData> {
    SyntheticSpec {
        kind: SyntheticKind::Hypersphere,
        n,
        noise_sd,
        curvature,
        intrinsic_d,
        ambient_d,
        seed,
    }
    .validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = radius_for_curvature(intrinsic_d, curvature);
    let m = intrinsic_d + 1;
    let embedding = random_isometry(ambient_d, m, &mut rng);
    let mut sphere = DMatrix::zeros(n, m);
    for i in 0..n {
        let v = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        sphere.row_mut(i).copy_from(&(v * (radius / norm)).transpose());
    }
    let targets = DMatrix::from_fn(n, 1, |i, _| sphere.row(i).sum().sin());
    let mut features = &sphere * embedding.transpose();
    if noise_sd > 0.0 {
        features.apply(|v| *v += noise_sd * rng.sample::<f64, _>(StandardNormal));
    }
    let raw = Dataset::from_matrices(features.clone(), targets.clone())?;
    let (dataset, state) = model::normalize(&raw, true)?;
    Ok(SyntheticData {
        dataset,
        raw_features: features,
        raw_targets: targets,
        normalization: Some(state),
        geometry: Geometry::Sphere { radius, embedding },
    })
}

fn symmetric<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

fn split_last(joint: DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, Dataset)> {
    let k1 = joint.ncols() - 1;
    let features = joint.columns(0, k1).into_owned();
    let targets = joint.columns(k1, 1).into_owned();
    let dataset = Dataset::from_matrices(features.clone(), targets.clone())?;
    Ok((features, targets, dataset))
}

/// Graph of a random quadratic form over `U[-1, 1]^d`, rotated into `R^ambient_d`.
/// The last joint coordinate is the target.
pub fn gen_quadratic(
    n: usize,
    intrinsic_d: usize,
    ambient_d: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<SyntheticData> {
    SyntheticSpec {
        kind: SyntheticKind::Quadratic,
        n,
        noise_sd,
        intrinsic_d,
        ambient_d,
        seed,
        ..SyntheticSpec::default()
    }
    .validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = ambient_d - intrinsic_d;
    let hessians: Vec<DMatrix<f64>> = (0..q).map(|_| symmetric(intrinsic_d, &mut rng)).collect();
    let embedding = random_isometry(ambient_d, ambient_d, &mut rng);
    let mut local = DMatrix::zeros(n, ambient_d);
    for i in 0..n {
        let u = DVector::from_fn(intrinsic_d, |_, _| rng.random_range(-1.0..1.0));
        for j in 0..intrinsic_d {
            local[(i, j)] = u[j];
        }
        for (a, h) in hessians.iter().enumerate() {
            local[(i, intrinsic_d + a)] = 0.5 * u.dot(&(h * &u));
        }
    }
    let mut joint = local * embedding.transpose();
    if noise_sd > 0.0 {
        joint.apply(|v| *v += noise_sd * rng.sample::<f64, _>(StandardNormal));
    }
    let (raw_features, raw_targets, dataset) = split_last(joint)?;
    Ok(SyntheticData {
        dataset,
        raw_features,
        raw_targets,
        normalization: None,
        geometry: Geometry::Quadratic { hessians, embedding },
    })
}

/// Uniform samples from a random `d`-dimensional linear subspace of `R^ambient_d`.
pub fn gen_plane(n: usize, intrinsic_d: usize, ambient_d: usize, noise_sd: f64, seed: u64) -> Result<SyntheticData> {
    SyntheticSpec {
        kind: SyntheticKind::Plane,
        n,
        noise_sd,
        intrinsic_d,
        ambient_d,
        seed,
        ..SyntheticSpec::default()
    }
    .validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let embedding = random_isometry(ambient_d, intrinsic_d, &mut rng);
    let coords = DMatrix::from_fn(n, intrinsic_d, |_, _| rng.random_range(-1.0..1.0));
    let mut joint = coords * embedding.transpose();
    if noise_sd > 0.0 {
        joint.apply(|v| *v += noise_sd * rng.sample::<f64, _>(StandardNormal));
    }
    let (raw_features, raw_targets, dataset) = split_last(joint)?;
    Ok(SyntheticData {
        dataset,
        raw_features,
        raw_targets,
        normalization: None,
        geometry: Geometry::Plane { embedding },
    })
}

/// Euclidean distance from `(px, py)` to the curve `y = sin(x)`.
pub fn sine_distance(px: f64, py: f64) -> f64 {
    graph_distance(px, py, f64::sin, f64::cos, |t| -t.sin())
}

/// Euclidean distance from `(px, py)` to the parabola `y = c t² / 2`.
pub fn parabola_distance(px: f64, py: f64, c: f64) -> f64 {
    graph_distance(px, py, |t| 0.5 * c * t * t, |t| c * t, |_| c)
}

/// Distance from `(px, py)` to the graph of a smooth `f` with `|f'|` bounded
/// near `px`: a coarse scan over the window that must contain the foot point,
/// refined by Newton steps on the squared distance.
pub fn graph_distance(
    px: f64,
    py: f64,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    d2f: impl Fn(f64) -> f64,
) -> f64 {
    let sq = |t: f64| (t - px).powi(2) + (f(t) - py).powi(2);
    // the foot point lies within the vertical distance of px
    let bound = (py - f(px)).abs();
    if bound == 0.0 {
        return 0.0;
    }
    let steps = 64;
    let mut best = px;
    let mut best_val = sq(px);
    for s in 0..=steps {
        let t = px - bound + 2.0 * bound * s as f64 / steps as f64;
        let v = sq(t);
        if v < best_val {
            best = t;
            best_val = v;
        }
    }
    let mut t = best;
    for _ in 0..50 {
        let r = f(t) - py;
        let grad = (t - px) + r * df(t);
        let hess = 1.0 + df(t).powi(2) + r * d2f(t);
        if hess <= 0.0 {
            break;
        }
        let step = grad / hess;
        let next = t - step;
        if sq(next) > sq(t) {
            break;
        }
        t = next;
        if step.abs() < 1e-17 * (1.0 + t.abs()) {
            break;
        }
    }
    sq(t).min(best_val).sqrt()
}

/// Distance from `p` to a sphere of `radius` embedded by the orthonormal columns of `embedding`.
pub fn sphere_distance(p: &DVector<f64>, radius: f64, embedding: &DMatrix<f64>) -> f64 {
    let c = embedding.transpose() * p;
    let off_plane = (p - embedding * &c).norm();
    ((c.norm() - radius).powi(2) + off_plane * off_plane).sqrt()
}

/// Distance from `p` to the unit-free circle of `radius` centered at the origin of `R^2`.
pub fn circle_distance(px: f64, py: f64, radius: f64) -> f64 {
    ((px * px + py * py).sqrt() - radius).abs()
}

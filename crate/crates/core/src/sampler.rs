//! Sample generators: point-wise and batch CEMS, their first-order
//! restriction, and the FOMA normal-scaling baseline.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::basis::{self, CenteredNeighborhood, Mode, OrthonormalBasis, ProjectedNeighborhood};
use crate::chart::{self, Order, QuadraticChart, Ridge};
use crate::error::{CemsError, Result};
use crate::intrinsic::{self, DimEstimate};
use crate::model::Dataset;
use crate::neighbors::{self, NeighborIndex, Neighborhood, Selection};

/// Intrinsic dimension: explicit or estimated with TwoNN.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntrinsicDim {
    Fixed(usize),
    Auto,
}

impl fmt::Display for IntrinsicDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntrinsicDim::Fixed(d) => write!(f, "{d}"),
            IntrinsicDim::Auto => f.write_str("auto"),
        }
    }
}

impl FromStr for IntrinsicDim {
    type Err = CemsError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(IntrinsicDim::Auto);
        }
        match s.parse::<usize>() {
            Ok(d) if d >= 1 => Ok(IntrinsicDim::Fixed(d)),
            _ => Err(CemsError::Parameter(format!(
                "intrinsic dimension must be a positive integer or 'auto', got '{s}'"
            ))),
        }
    }
}

/// Which generator produces the samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Cems,
    /// Scale the normal coordinates of existing neighbors by `lambda`.
    Foma {
        lambda: f64,
    },
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Cems => f.write_str("cems"),
            Method::Foma { .. } => f.write_str("foma"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    /// Standard deviation of the tangent-space noise, in normalized units.
    pub sigma: f64,
    pub intrinsic_dim: IntrinsicDim,
    /// Neighborhood size; in batch mode this counts the anchor.
    pub k: usize,
    pub mode: Mode,
    pub selection: Selection,
    pub ridge: Ridge,
    pub seed: u64,
    pub order: Order,
    pub method: Method,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            intrinsic_dim: IntrinsicDim::Auto,
            k: 16,
            mode: Mode::Batch,
            selection: Selection::Knn,
            ridge: Ridge::Auto,
            seed: 0,
            order: Order::Second,
            method: Method::Cems,
        }
    }
}

impl SamplerConfig {
    /// Checks the configuration against a dataset of `n` rows in dimension `ambient`.
    pub fn validate(&self, n: usize, ambient: usize) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(CemsError::Parameter(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        let max_k = match self.mode {
            Mode::Point => n.saturating_sub(1),
            Mode::Batch => n,
        };
        if self.k < 2 || self.k > max_k {
            return Err(CemsError::Parameter(format!(
                "k = {} outside 2..={max_k} for {n} rows in {} mode",
                self.k, self.mode
            )));
        }
        if let IntrinsicDim::Fixed(d) = self.intrinsic_dim {
            if d == 0 || d + 1 > ambient {
                return Err(CemsError::Parameter(format!(
                    "intrinsic dimension {d} must lie in 1..={}",
                    ambient.saturating_sub(1)
                )));
            }
        }
        if let Ridge::Fixed(r) = self.ridge {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(CemsError::Parameter(format!("ridge must be finite and >= 0, got {r}")));
            }
        }
        if let Method::Foma { lambda } = self.method {
            if !(0.0..=1.0).contains(&lambda) {
                return Err(CemsError::Parameter(format!(
                    "FOMA lambda must lie in [0, 1], got {lambda}"
                )));
            }
        }
        Ok(())
    }

    fn fixed_dim(&self) -> Result<usize> {
        match self.intrinsic_dim {
            IntrinsicDim::Fixed(d) => Ok(d),
            IntrinsicDim::Auto => Err(CemsError::Parameter(
                "intrinsic dimension is 'auto'; resolve it before sampling".into(),
            )),
        }
    }
}

/// Where a generated sample came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub anchor_index: usize,
    /// Dataset row of the neighborhood member this sample was derived from
    /// (batch CEMS and FOMA).
    pub member_index: Option<usize>,
    pub mode: Mode,
    pub method: Method,
    pub order: Order,
    /// Tangent-space draw; empty for FOMA.
    pub eta: Vec<f64>,
    /// Chart fit residual `‖ΨX − G‖_F`, or basis reconstruction residual for FOMA.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSamples {
    /// `n x D`, normalized joint space.
    pub samples: DMatrix<f64>,
    pub provenance: Vec<Provenance>,
}

impl AugmentedSamples {
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn from_rows(rows: Vec<DVector<f64>>, provenance: Vec<Provenance>, dim: usize) -> Self {
        let samples = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
        Self { samples, provenance }
    }
}

/// `mean + sigma * N(0, I)`.
pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, sigma: f64, mean: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(mean.len(), |i, _| {
        let z: f64 = rng.sample(StandardNormal);
        mean[i] + sigma * z
    })
}

/// Centered neighborhood, fitted basis and projected coordinates.
#[derive(Debug, Clone)]
pub struct LocalFrame {
    pub centered: CenteredNeighborhood,
    pub basis: OrthonormalBasis,
    pub projected: ProjectedNeighborhood,
}

impl LocalFrame {
    pub fn fit(neighborhood: &Neighborhood, mode: Mode, d: usize) -> Result<Self> {
        let centered = basis::center(neighborhood, mode)?;
        let basis = basis::fit_basis(&centered, d)?;
        let projected = basis::project(&basis, &centered)?;
        Ok(Self {
            centered,
            basis,
            projected,
        })
    }

    pub fn unproject(&self, u: &DVector<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
        basis::unproject(&self.basis, u, g, &self.centered.origin)
    }

    pub fn reconstruction_residual(&self) -> f64 {
        basis::reconstruction_residual(&self.basis, &self.centered, &self.projected)
    }
}

/// A chart fitted around the anchor of a point-mode neighborhood.
#[derive(Debug, Clone)]
pub struct PointChart {
    pub frame: LocalFrame,
    pub chart: QuadraticChart,
}

impl PointChart {
    /// Fits the anchor-centered frame and a chart with base point `u = 0`.
    pub fn fit(neighborhood: &Neighborhood, d: usize, order: Order, ridge: Ridge) -> Result<Self> {
        let frame = LocalFrame::fit(neighborhood, Mode::Point, d)?;
        let q = frame.basis.normal_dim();
        let chart = chart::fit_chart(
            &frame.projected.tangent_coords,
            &frame.projected.normal_coords,
            order,
            ridge,
            DVector::zeros(q),
            DVector::zeros(d),
        )?;
        Ok(Self { frame, chart })
    }

    /// `B [η, g(η)] + z`.
    pub fn sample_at(&self, eta: &DVector<f64>) -> Result<DVector<f64>> {
        let g = chart::evaluate_chart(&self.chart, eta)?;
        self.frame.unproject(eta, &g)
    }
}

/// One generated point with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSample {
    pub sample: DVector<f64>,
    pub provenance: Provenance,
}

/// Point-wise CEMS: one sample near `anchor_index`.
pub fn cems_point<R: Rng + ?Sized>(
    index: &NeighborIndex,
    anchor_index: usize,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<GeneratedSample> {
    let d = config.fixed_dim()?;
    let neighborhood = neighbors::select(index, anchor_index, config.k, config.selection, false, rng)?;
    let fitted = PointChart::fit(&neighborhood, d, config.order, config.ridge)?;
    let eta = draw_noise(rng, config.sigma, &DVector::zeros(d));
    let sample = fitted.sample_at(&eta)?;
    Ok(GeneratedSample {
        sample,
        provenance: Provenance {
            anchor_index,
            member_index: None,
            mode: Mode::Point,
            method: Method::Cems,
            order: config.order,
            eta: eta.as_slice().to_vec(),
            residual: fitted.chart.residual_norm,
        },
    })
}

/// Point-wise CEMS with the Hessian forced to zero.
pub fn cems_point_first_order<R: Rng + ?Sized>(
    index: &NeighborIndex,
    anchor_index: usize,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<GeneratedSample> {
    let config = SamplerConfig {
        order: Order::First,
        ..config.clone()
    };
    cems_point(index, anchor_index, &config, rng)
}

/// Per-member charts over one shared, mean-centered frame.
#[derive(Debug, Clone)]
pub struct BatchCharts {
    pub frame: LocalFrame,
    /// Chart `l` is based at member `l`.
    pub charts: Vec<QuadraticChart>,
}

impl BatchCharts {
    pub fn fit(neighborhood: &Neighborhood, d: usize, order: Order, ridge: Ridge) -> Result<Self> {
        let frame = LocalFrame::fit(neighborhood, Mode::Batch, d)?;
        let u = &frame.projected.tangent_coords;
        let g = &frame.projected.normal_coords;
        let k = u.nrows();
        let charts = (0..k)
            .map(|l| {
                let others: Vec<usize> = (0..k).filter(|&j| j != l).collect();
                let du = DMatrix::from_fn(k - 1, u.ncols(), |r, c| u[(others[r], c)] - u[(l, c)]);
                let dg = DMatrix::from_fn(k - 1, g.ncols(), |r, c| g[(others[r], c)] - g[(l, c)]);
                chart::fit_chart(&du, &dg, order, ridge, g.row(l).transpose(), u.row(l).transpose())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { frame, charts })
    }

    /// `B [η_l, g(η_l)] + μ` for member `l`.
    pub fn sample_at(&self, l: usize, eta: &DVector<f64>) -> Result<DVector<f64>> {
        let g = chart::evaluate_chart(&self.charts[l], eta)?;
        self.frame.unproject(eta, &g)
    }
}

fn batch_from_neighborhood<R: Rng + ?Sized>(
    neighborhood: &Neighborhood,
    config: &SamplerConfig,
    d: usize,
    rng: &mut R,
) -> Result<AugmentedSamples> {
    let fitted = BatchCharts::fit(neighborhood, d, config.order, config.ridge)?;
    let mut rows = Vec::with_capacity(neighborhood.len());
    let mut provenance = Vec::with_capacity(neighborhood.len());
    for (l, chart) in fitted.charts.iter().enumerate() {
        let eta = draw_noise(rng, config.sigma, &chart.base_point);
        rows.push(fitted.sample_at(l, &eta)?);
        provenance.push(Provenance {
            anchor_index: neighborhood.anchor_index,
            member_index: Some(neighborhood.member_indices[l]),
            mode: Mode::Batch,
            method: Method::Cems,
            order: config.order,
            eta: eta.as_slice().to_vec(),
            residual: chart.residual_norm,
        });
    }
    Ok(AugmentedSamples::from_rows(rows, provenance, neighborhood.dim()))
}

/// Batch CEMS: `k` samples from one neighborhood that includes the anchor.
pub fn cems_batch<R: Rng + ?Sized>(
    index: &NeighborIndex,
    anchor_index: usize,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<AugmentedSamples> {
    let d = config.fixed_dim()?;
    let neighborhood = neighbors::select(index, anchor_index, config.k, config.selection, true, rng)?;
    batch_from_neighborhood(&neighborhood, config, d, rng)
}

/// Batch CEMS on an explicit neighborhood.
pub fn cems_batch_on<R: Rng + ?Sized>(
    neighborhood: &Neighborhood,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<AugmentedSamples> {
    batch_from_neighborhood(neighborhood, config, config.fixed_dim()?, rng)
}

/// Batch CEMS with the Hessian forced to zero.
pub fn cems_batch_first_order<R: Rng + ?Sized>(
    index: &NeighborIndex,
    anchor_index: usize,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<AugmentedSamples> {
    let config = SamplerConfig {
        order: Order::First,
        ..config.clone()
    };
    cems_batch(index, anchor_index, &config, rng)
}

/// FOMA: `B_T u_j + λ B_N g_j + origin` for every member `j`.
pub fn foma_sample(neighborhood: &Neighborhood, lambda: f64, mode: Mode, d: usize) -> Result<AugmentedSamples> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(CemsError::Parameter(format!(
            "FOMA lambda must lie in [0, 1], got {lambda}"
        )));
    }
    let frame = LocalFrame::fit(neighborhood, mode, d)?;
    let residual = frame.reconstruction_residual();
    let u = &frame.projected.tangent_coords;
    let g = &frame.projected.normal_coords;
    let mut rows = Vec::with_capacity(u.nrows());
    let mut provenance = Vec::with_capacity(u.nrows());
    for j in 0..u.nrows() {
        let scaled = g.row(j).transpose() * lambda;
        rows.push(frame.unproject(&u.row(j).transpose(), &scaled)?);
        provenance.push(Provenance {
            anchor_index: neighborhood.anchor_index,
            member_index: Some(neighborhood.member_indices[j]),
            mode,
            method: Method::Foma { lambda },
            order: Order::First,
            eta: Vec::new(),
            residual,
        });
    }
    Ok(AugmentedSamples::from_rows(rows, provenance, neighborhood.dim()))
}

/// Options for [`augment_dataset`] beyond the sampler configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentOptions {
    /// Worker threads; outputs do not depend on this.
    pub workers: usize,
    /// Fraction of planned anchor attempts allowed to fail on degenerate
    /// neighborhoods before the run aborts.
    pub failure_budget: f64,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            failure_budget: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AugmentRun {
    pub samples: AugmentedSamples,
    pub failures: usize,
    pub d_used: usize,
    pub dim_estimate: Option<DimEstimate>,
}

/// Independent RNG stream for generation unit `unit`.
pub fn unit_rng(seed: u64, unit: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(unit);
    rng
}

/// Resolves `IntrinsicDim::Auto` with TwoNN over `joint`.
pub fn resolve_dim(config: &SamplerConfig, joint: &DMatrix<f64>) -> Result<(usize, Option<DimEstimate>)> {
    match config.intrinsic_dim {
        IntrinsicDim::Fixed(d) => Ok((d, None)),
        IntrinsicDim::Auto => {
            let est = intrinsic::twonn_estimate(joint)?;
            Ok((est.d_used, Some(est)))
        }
    }
}

fn run_unit(index: &NeighborIndex, config: &SamplerConfig, unit: u64) -> Result<AugmentedSamples> {
    let mut rng = unit_rng(config.seed, unit);
    let anchor = rng.random_range(0..index.len());
    match (config.method, config.mode) {
        (Method::Cems, Mode::Point) => {
            let s = cems_point(index, anchor, config, &mut rng)?;
            Ok(AugmentedSamples::from_rows(
                vec![s.sample],
                vec![s.provenance],
                index.dim(),
            ))
        }
        (Method::Cems, Mode::Batch) => cems_batch(index, anchor, config, &mut rng),
        (Method::Foma { lambda }, mode) => {
            let neighborhood =
                neighbors::select(index, anchor, config.k, config.selection, mode == Mode::Batch, &mut rng)?;
            foma_sample(&neighborhood, lambda, mode, config.fixed_dim()?)
        }
    }
}

/// Generates `n_gen` samples from a normalized dataset.
///
/// Each generation unit draws a uniformly random anchor from its own RNG
/// stream derived from `(seed, unit)`, so results are identical for any
/// worker count.
pub fn augment_dataset(
    dataset: &Dataset,
    config: &SamplerConfig,
    n_gen: usize,
    options: AugmentOptions,
) -> Result<AugmentRun> {
    let joint = dataset.joint();
    augment_joint(&joint, config, n_gen, options)
}

pub fn augment_joint(
    joint: &DMatrix<f64>,
    config: &SamplerConfig,
    n_gen: usize,
    options: AugmentOptions,
) -> Result<AugmentRun> {
    if n_gen == 0 {
        return Err(CemsError::Parameter("n_gen must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&options.failure_budget) {
        return Err(CemsError::Parameter(format!(
            "failure budget must lie in [0, 1], got {}",
            options.failure_budget
        )));
    }
    config.validate(joint.nrows(), joint.ncols())?;
    let (d_used, dim_estimate) = resolve_dim(config, joint)?;
    let config = SamplerConfig {
        intrinsic_dim: IntrinsicDim::Fixed(d_used),
        ..config.clone()
    };
    config.validate(joint.nrows(), joint.ncols())?;
    let index = NeighborIndex::build(joint)?;

    let per_unit = match (config.method, config.mode) {
        (Method::Cems, Mode::Point) => 1,
        _ => config.k,
    };
    let planned = n_gen.div_ceil(per_unit);
    let allowed_failures = (options.failure_budget * planned as f64).floor() as usize;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| CemsError::Parameter(format!("cannot start worker pool: {e}")))?;

    let mut rows: Vec<DVector<f64>> = Vec::with_capacity(n_gen);
    let mut provenance = Vec::with_capacity(n_gen);
    let mut failures = 0usize;
    let mut next_unit = 0u64;
    while rows.len() < n_gen {
        let needed = (n_gen - rows.len()).div_ceil(per_unit) as u64;
        let units: Vec<u64> = (next_unit..next_unit + needed).collect();
        next_unit += needed;
        let results: Vec<Result<AugmentedSamples>> =
            pool.install(|| units.par_iter().map(|&u| run_unit(&index, &config, u)).collect());
        for result in results {
            match result {
                Ok(batch) => {
                    for (i, p) in batch.provenance.into_iter().enumerate() {
                        if rows.len() == n_gen {
                            break;
                        }
                        rows.push(batch.samples.row(i).transpose());
                        provenance.push(p);
                    }
                }
                Err(e) if e.is_geometry() => {
                    failures += 1;
                    log::debug!("generation attempt failed: {e}");
                    if failures > allowed_failures {
                        return Err(CemsError::Geometry(format!(
                            "{failures} failed attempts exceed the budget of {allowed_failures}; last: {e}"
                        )));
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }
    let samples = AugmentedSamples::from_rows(rows, provenance, joint.ncols());
    if samples.samples.iter().any(|v| !v.is_finite()) {
        return Err(CemsError::Numeric("generated samples contain non-finite values".into()));
    }
    Ok(AugmentRun {
        samples,
        failures,
        d_used,
        dim_estimate,
    })
}

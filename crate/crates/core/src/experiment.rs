//! Geometric verification experiments: approximation order against sampling
//! radius, and the first/second-order error ratio against curvature.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::basis::Mode;
use crate::chart::{Order, Ridge};
use crate::error::{CemsError, Result};
use crate::neighbors::{knn_neighbors, NeighborIndex, Neighborhood};
use crate::sampler::{draw_noise, foma_sample, unit_rng, PointChart};
use crate::synthetic::{self, Geometry};

/// Mean errors below this are treated as exact reproduction.
pub const EXACT_THRESHOLD: f64 = 1e-10;

/// A noiseless planar curve with a closed-form distance oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curve {
    Sine,
    Circle {
        radius: f64,
    },
    /// `y = c t² / 2`, anchored at its vertex.
    Parabola {
        curvature: f64,
    },
}

impl Curve {
    pub fn point(&self, t: f64) -> [f64; 2] {
        match *self {
            Curve::Sine => [t, t.sin()],
            Curve::Circle { radius } => [radius * t.cos(), radius * t.sin()],
            Curve::Parabola { curvature } => [t, 0.5 * curvature * t * t],
        }
    }

    pub fn distance(&self, p: &[f64]) -> f64 {
        match *self {
            Curve::Sine => synthetic::sine_distance(p[0], p[1]),
            Curve::Circle { radius } => synthetic::circle_distance(p[0], p[1], radius),
            Curve::Parabola { curvature } => synthetic::parabola_distance(p[0], p[1], curvature),
        }
    }

    /// Parameter of a random anchor; the parabola is always anchored at its vertex.
    pub fn random_anchor<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Curve::Sine | Curve::Circle { .. } => rng.random::<f64>() * std::f64::consts::TAU,
            Curve::Parabola { .. } => 0.0,
        }
    }

    fn arc_speed(&self, t: f64) -> f64 {
        match *self {
            Curve::Sine => (1.0 + t.cos().powi(2)).sqrt(),
            Curve::Circle { radius } => radius,
            Curve::Parabola { curvature } => (1.0 + (curvature * t).powi(2)).sqrt(),
        }
    }
}

impl std::fmt::Display for Curve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Curve::Sine => f.write_str("sine"),
            Curve::Circle { radius } => write!(f, "circle:{radius}"),
            Curve::Parabola { curvature } => write!(f, "parabola:{curvature}"),
        }
    }
}

impl FromStr for Curve {
    type Err = CemsError;

    /// `sine`, `circle[:radius]` or `parabola[:curvature]`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let value = |default: f64| -> Result<f64> {
            match arg {
                None => Ok(default),
                Some(a) => match a.parse::<f64>() {
                    Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
                    _ => Err(CemsError::Parameter(format!(
                        "curve parameter must be a positive number, got '{a}'"
                    ))),
                },
            }
        };
        match name {
            "sine" if arg.is_none() => Ok(Curve::Sine),
            "circle" => Ok(Curve::Circle { radius: value(1.0)? }),
            "parabola" => Ok(Curve::Parabola { curvature: value(1.0)? }),
            _ => Err(CemsError::Parameter(format!("unknown curve '{s}'"))),
        }
    }
}

/// Mean error of one method at one scale, aggregated over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    /// Sampling radius `h` or curvature `κ`.
    pub scale: f64,
    pub method: String,
    pub mean_error: f64,
    /// Standard error of the per-seed means.
    pub std_error: f64,
    /// Samples that entered the mean.
    pub count: usize,
    /// Fits that failed on a degenerate neighborhood.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub method: String,
    /// Least-squares slope of `log(mean error)` against `log(h)`.
    pub slope: f64,
    /// 95% interval from the spread of per-seed slopes.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Every mean error is below [`EXACT_THRESHOLD`]; the slope is then noise.
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Order,
    Curvature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    /// Effective configuration, in display order. The worker count is left
    /// out because it never changes the results.
    pub config: Vec<(String, String)>,
    pub rows: Vec<ErrorRow>,
    /// Order experiments only.
    pub slopes: Vec<SlopeFit>,
    /// Curvature sweeps only: `(κ, first-order error / second-order error)`.
    pub ratios: Vec<(f64, f64)>,
    /// Curvature sweeps only: rank correlation between `κ` and the ratio.
    pub spearman: Option<f64>,
    /// Wall time; not serialized so that report files stay reproducible.
    pub runtime_secs: f64,
}

impl ExperimentReport {
    pub fn slope(&self, method: &str) -> Option<&SlopeFit> {
        self.slopes.iter().find(|s| s.method == method)
    }

    pub fn row(&self, scale: f64, method: &str) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.scale == scale && r.method == method)
    }

    /// Tab-separated table with a `#`-prefixed metadata header.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let kind = match self.kind {
            ExperimentKind::Order => "order",
            ExperimentKind::Curvature => "curvature",
        };
        let _ = writeln!(out, "# experiment = {kind}");
        for (k, v) in &self.config {
            let _ = writeln!(out, "# {k} = {v}");
        }
        for s in &self.slopes {
            let _ = writeln!(
                out,
                "# slope {} = {:e} ci95 = [{:e}, {:e}]{}",
                s.method,
                s.slope,
                s.ci_low,
                s.ci_high,
                if s.exact { " exact" } else { "" }
            );
        }
        for (kappa, r) in &self.ratios {
            let _ = writeln!(out, "# ratio first/second at {kappa:e} = {r:e}");
        }
        if let Some(rho) = self.spearman {
            let _ = writeln!(out, "# spearman = {rho:e}");
        }
        let last = match self.kind {
            ExperimentKind::Order => "slope",
            ExperimentKind::Curvature => "ratio_first_second",
        };
        let _ = writeln!(out, "scale\tmethod\tmean_error\tstd_error\tcount\tfailures\t{last}");
        for r in &self.rows {
            let extra = match self.kind {
                ExperimentKind::Order => self.slope(&r.method).map(|s| s.slope),
                ExperimentKind::Curvature => self.ratios.iter().find(|(k, _)| *k == r.scale).map(|(_, v)| *v),
            };
            let extra = extra.map(|v| format!("{v:e}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{:e}\t{}\t{:e}\t{:e}\t{}\t{}\t{}",
                r.scale, r.method, r.mean_error, r.std_error, r.count, r.failures, extra
            );
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.mean_error.is_finite() && r.std_error.is_finite())
            && self
                .slopes
                .iter()
                .all(|s| s.slope.is_finite() && s.ci_low.is_finite() && s.ci_high.is_finite())
            && self.ratios.iter().all(|(_, r)| r.is_finite())
            && self.spearman.is_none_or(f64::is_finite)
    }
}

fn order_name(order: Order) -> &'static str {
    match order {
        Order::First => "first",
        Order::Second => "second",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderExperimentConfig {
    pub curve: Curve,
    pub scales: Vec<f64>,
    pub orders: Vec<Order>,
    pub seeds: usize,
    pub seed: u64,
    pub anchors_per_seed: usize,
    /// Neighbors per anchor, placed symmetrically at parameter offsets
    /// `±h·j/(k/2)`, `j = 1..k/2`; must be even.
    pub k: usize,
    pub workers: usize,
}

impl Default for OrderExperimentConfig {
    fn default() -> Self {
        Self {
            curve: Curve::Sine,
            scales: vec![0.02, 0.04, 0.08, 0.16],
            orders: vec![Order::First, Order::Second],
            seeds: 20,
            seed: 0,
            anchors_per_seed: 16,
            k: 8,
            workers: 1,
        }
    }
}

impl OrderExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.scales.len() < 2 || self.scales.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(CemsError::Parameter("need at least two positive scales".into()));
        }
        if self.orders.is_empty() || self.seeds < 2 || self.anchors_per_seed == 0 {
            return Err(CemsError::Parameter(
                "need at least one order, two seeds and one anchor".into(),
            ));
        }
        if self.k < 4 || !self.k.is_multiple_of(2) {
            return Err(CemsError::Parameter(format!("k must be even and >= 4, got {}", self.k)));
        }
        Ok(())
    }

    fn echo(&self) -> Vec<(String, String)> {
        let orders: Vec<&str> = self.orders.iter().map(|o| order_name(*o)).collect();
        let scales: Vec<String> = self.scales.iter().map(|h| format!("{h}")).collect();
        vec![
            ("curve".into(), self.curve.to_string()),
            ("scales".into(), scales.join(",")),
            ("orders".into(), orders.join(",")),
            ("seeds".into(), self.seeds.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("anchors_per_seed".into(), self.anchors_per_seed.to_string()),
            ("k".into(), self.k.to_string()),
            ("ridge".into(), "0".into()),
        ]
    }
}

/// Per-cell accumulator: sum, count and failures for each method.
#[derive(Debug, Clone, Default)]
struct CellStats {
    sums: Vec<f64>,
    counts: Vec<usize>,
    failures: Vec<usize>,
}

impl CellStats {
    fn new(methods: usize) -> Self {
        Self {
            sums: vec![0.0; methods],
            counts: vec![0; methods],
            failures: vec![0; methods],
        }
    }

    fn record(&mut self, m: usize, err: Result<f64>) {
        match err {
            Ok(e) if e.is_finite() => {
                self.sums[m] += e;
                self.counts[m] += 1;
            }
            _ => self.failures[m] += 1,
        }
    }

    fn mean(&self, m: usize) -> Option<f64> {
        (self.counts[m] > 0).then(|| self.sums[m] / self.counts[m] as f64)
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CemsError::Parameter(format!("cannot start {workers} workers: {e}")))
}

/// Runs `cell(scale_index, seed_index)` over the grid and returns results in grid order.
fn run_cells<T: Send>(
    scales: usize,
    seeds: usize,
    workers: usize,
    cell: impl Fn(usize, usize) -> T + Sync,
) -> Result<Vec<Vec<T>>> {
    let pool = thread_pool(workers)?;
    let flat: Vec<T> = pool.install(|| {
        (0..scales * seeds)
            .into_par_iter()
            .map(|c| cell(c / seeds, c % seeds))
            .collect()
    });
    let mut it = flat.into_iter();
    Ok((0..scales).map(|_| it.by_ref().take(seeds).collect()).collect())
}

fn order_neighborhood(curve: Curve, t0: f64, h: f64, k: usize) -> Result<Neighborhood> {
    let half = k / 2;
    // parameter step chosen so neighbors sit at arc length ~ h·j/half from the anchor
    let step = h / curve.arc_speed(t0) / half as f64;
    let mut members = DMatrix::zeros(k, 2);
    for j in 0..half {
        for (r, sign) in [(2 * j, 1.0), (2 * j + 1, -1.0)] {
            let p = curve.point(t0 + sign * step * (j + 1) as f64);
            members[(r, 0)] = p[0];
            members[(r, 1)] = p[1];
        }
    }
    let a = curve.point(t0);
    Neighborhood::from_points(DVector::from_vec(vec![a[0], a[1]]), members, false)
}

/// Point-to-curve error of charts fitted at scale `h` and evaluated at `‖η‖ = h`.
pub fn run_order_experiment(config: &OrderExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    let methods = config.orders.len();
    let grid = run_cells(config.scales.len(), config.seeds, config.workers, |si, seed_i| {
        let h = config.scales[si];
        // anchors depend on the seed only, so every scale sees the same anchors
        let mut rng = unit_rng(config.seed, seed_i as u64);
        let mut stats = CellStats::new(methods);
        for _ in 0..config.anchors_per_seed {
            let t0 = config.curve.random_anchor(&mut rng);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let eta = DVector::from_element(1, sign * h);
            let neighborhood = order_neighborhood(config.curve, t0, h, config.k);
            for (m, order) in config.orders.iter().enumerate() {
                let err = neighborhood.as_ref().map_err(Clone::clone).and_then(|n| {
                    let chart = PointChart::fit(n, 1, *order, Ridge::Fixed(0.0))?;
                    let s = chart.sample_at(&eta)?;
                    Ok(config.curve.distance(s.as_slice()))
                });
                stats.record(m, err);
            }
        }
        stats
    })?;

    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    let log_h: Vec<f64> = config.scales.iter().map(|h| h.ln()).collect();
    for (m, order) in config.orders.iter().enumerate() {
        let name = order_name(*order);
        let mut means = Vec::with_capacity(config.scales.len());
        for (si, &h) in config.scales.iter().enumerate() {
            let row = aggregate_row(h, name, &grid[si], m);
            means.push(row.mean_error);
            rows.push(row);
        }
        let exact = means.iter().all(|e| *e < EXACT_THRESHOLD);
        let slope = fit_slope(&log_h, &means.iter().map(|e| floor_log(*e)).collect::<Vec<_>>());
        let per_seed: Vec<f64> = (0..config.seeds)
            .filter_map(|s| {
                let ys: Option<Vec<f64>> = grid.iter().map(|cells| cells[s].mean(m).map(floor_log)).collect();
                ys.map(|ys| fit_slope(&log_h, &ys))
            })
            .collect();
        let half_width = confidence_half_width(&per_seed);
        slopes.push(SlopeFit {
            method: name.into(),
            slope,
            ci_low: slope - half_width,
            ci_high: slope + half_width,
            exact,
        });
    }
    Ok(ExperimentReport {
        kind: ExperimentKind::Order,
        config: config.echo(),
        rows,
        slopes,
        ratios: Vec::new(),
        spearman: None,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

fn floor_log(e: f64) -> f64 {
    e.max(1e-300).ln()
}

fn aggregate_row(scale: f64, method: &str, cells: &[CellStats], m: usize) -> ErrorRow {
    let count: usize = cells.iter().map(|c| c.counts[m]).sum();
    let failures: usize = cells.iter().map(|c| c.failures[m]).sum();
    let sum: f64 = cells.iter().map(|c| c.sums[m]).sum();
    let mean_error = if count > 0 { sum / count as f64 } else { 0.0 };
    let seed_means: Vec<f64> = cells.iter().filter_map(|c| c.mean(m)).collect();
    let std_error = if seed_means.len() > 1 {
        std_dev(&seed_means) / (seed_means.len() as f64).sqrt()
    } else {
        0.0
    };
    ErrorRow {
        scale,
        method: method.into(),
        mean_error,
        std_error,
        count,
        failures,
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Two-sided 97.5% Student-t quantile.
fn t_quantile(df: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145, 2.131,
        2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    match df {
        0 => f64::INFINITY,
        1..=30 => TABLE[df - 1],
        _ => 1.960,
    }
}

fn confidence_half_width(samples: &[f64]) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    t_quantile(samples.len() - 1) * std_dev(samples) / (samples.len() as f64).sqrt()
}

/// Spearman rank correlation, with average ranks for ties. Zero when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &p in &idx[i..=j] {
                r[p] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureSweepConfig {
    pub curvatures: Vec<f64>,
    pub n: usize,
    pub intrinsic_d: usize,
    pub ambient_d: usize,
    /// Ambient noise added to the sphere samples.
    pub noise_sd: f64,
    pub sigma: f64,
    pub k: usize,
    pub lambda: f64,
    pub ridge: Ridge,
    pub anchors_per_seed: usize,
    pub seeds: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for CurvatureSweepConfig {
    fn default() -> Self {
        Self {
            curvatures: vec![1.0, 4.0, 16.0, 64.0],
            n: 2000,
            intrinsic_d: 2,
            ambient_d: 3,
            noise_sd: 0.0,
            sigma: 0.01,
            k: 32,
            lambda: 0.5,
            ridge: Ridge::Auto,
            anchors_per_seed: 32,
            seeds: 20,
            seed: 0,
            workers: 1,
        }
    }
}

impl CurvatureSweepConfig {
    fn validate(&self) -> Result<()> {
        if self.curvatures.is_empty() || self.curvatures.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(CemsError::Parameter("curvatures must be positive".into()));
        }
        if self.seeds < 2 || self.anchors_per_seed == 0 || self.anchors_per_seed > self.n {
            return Err(CemsError::Parameter("need two seeds and 1..=n anchors per seed".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(CemsError::Parameter(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(CemsError::Parameter(format!(
                "FOMA lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.k < 2 || self.k >= self.n {
            return Err(CemsError::Parameter(format!(
                "k must lie in [2, n - 1], got {}",
                self.k
            )));
        }
        Ok(())
    }

    fn echo(&self) -> Vec<(String, String)> {
        let kappas: Vec<String> = self.curvatures.iter().map(|c| format!("{c}")).collect();
        vec![
            ("curvatures".into(), kappas.join(",")),
            (
                "curvature_convention".into(),
                "R = sqrt(d(d-1)/kappa) for d >= 2, 1/sqrt(kappa) for d = 1".into(),
            ),
            ("space".into(), "raw embedded sphere features".into()),
            ("n".into(), self.n.to_string()),
            ("intrinsic_d".into(), self.intrinsic_d.to_string()),
            ("ambient_d".into(), self.ambient_d.to_string()),
            ("noise_sd".into(), format!("{}", self.noise_sd)),
            ("sigma".into(), format!("{}", self.sigma)),
            ("k".into(), self.k.to_string()),
            ("lambda".into(), format!("{}", self.lambda)),
            ("ridge".into(), self.ridge.to_string()),
            ("anchors_per_seed".into(), self.anchors_per_seed.to_string()),
            ("seeds".into(), self.seeds.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

const SWEEP_METHODS: [&str; 3] = ["second", "first", "foma"];

/// Sphere-distance errors of second-order, first-order and FOMA samples on
/// hyperspheres that differ only in curvature.
///
/// Seeds are shared across curvatures, so each seed sees the same directions
/// and noise pattern at every radius.
pub fn run_curvature_sweep(config: &CurvatureSweepConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    let d = config.intrinsic_d;
    let grid = run_cells(config.curvatures.len(), config.seeds, config.workers, |ci, seed_i| {
        let mut stats = CellStats::new(SWEEP_METHODS.len());
        let cell_seed = config.seed.wrapping_add(seed_i as u64);
        let data = match synthetic::gen_hypersphere_with_noise(
            config.n,
            d,
            config.curvatures[ci],
            config.ambient_d,
            config.noise_sd,
            cell_seed,
        ) {
            Ok(data) => data,
            Err(e) => return Err(e),
        };
        let Geometry::Sphere { radius, embedding } = &data.geometry else {
            unreachable!("hypersphere generator returns sphere geometry")
        };
        let index = NeighborIndex::build(&data.raw_features)?;
        let mut rng = unit_rng(config.seed, seed_i as u64);
        let dist = |p: &DVector<f64>| synthetic::sphere_distance(p, *radius, embedding);
        // sphere samples are i.i.d., so the first rows are random anchors
        for anchor in 0..config.anchors_per_seed {
            let eta = draw_noise(&mut rng, config.sigma, &DVector::zeros(d));
            let neighborhood = knn_neighbors(&index, anchor, config.k, false);
            for (m, order) in [Order::Second, Order::First].into_iter().enumerate() {
                let err = neighborhood.as_ref().map_err(Clone::clone).and_then(|n| {
                    let chart = PointChart::fit(n, d, order, config.ridge)?;
                    Ok(dist(&chart.sample_at(&eta)?))
                });
                stats.record(m, err);
            }
            let foma = neighborhood
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|n| foma_sample(n, config.lambda, Mode::Point, d));
            match foma {
                Ok(s) => {
                    for row in s.samples.row_iter() {
                        stats.record(2, Ok(dist(&row.transpose())));
                    }
                }
                Err(e) => stats.record(2, Err(e)),
            }
        }
        Ok(stats)
    })?;
    let grid: Vec<Vec<CellStats>> = grid
        .into_iter()
        .map(|cells| cells.into_iter().collect::<Result<_>>())
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    for (ci, &kappa) in config.curvatures.iter().enumerate() {
        let cell_rows: Vec<ErrorRow> = SWEEP_METHODS
            .iter()
            .enumerate()
            .map(|(m, name)| aggregate_row(kappa, name, &grid[ci], m))
            .collect();
        let ratio = if cell_rows[0].mean_error > 0.0 {
            cell_rows[1].mean_error / cell_rows[0].mean_error
        } else {
            1.0
        };
        ratios.push((kappa, ratio));
        rows.extend(cell_rows);
    }
    let kappas: Vec<f64> = ratios.iter().map(|r| r.0).collect();
    let values: Vec<f64> = ratios.iter().map(|r| r.1).collect();
    let rho = spearman(&kappas, &values);
    Ok(ExperimentReport {
        kind: ExperimentKind::Curvature,
        config: config.echo(),
        rows,
        slopes: Vec::new(),
        ratios,
        spearman: Some(rho),
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

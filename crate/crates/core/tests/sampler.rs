use cems::basis::Mode;
use cems::chart::{Order, Ridge};
use cems::neighbors::{knn_neighbors, NeighborIndex, Neighborhood};
use cems::sampler::{
    augment_dataset, cems_batch, cems_batch_on, cems_point, cems_point_first_order, draw_noise, foma_sample,
    AugmentOptions, IntrinsicDim, Method, PointChart, SamplerConfig,
};
use cems::synthetic::random_isometry;
use cems::{normalize, CemsError, Dataset};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(d: usize, k: usize, sigma: f64, mode: Mode) -> SamplerConfig {
    SamplerConfig {
        sigma,
        intrinsic_dim: IntrinsicDim::Fixed(d),
        k,
        mode,
        ridge: Ridge::Fixed(0.0),
        ..SamplerConfig::default()
    }
}

/// Rows on the line `p0 + t v` in the plane.
fn line_points(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p0, v) = ([0.3, -0.2], [0.6, 0.8]);
    let ts: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    DMatrix::from_fn(n, 2, |i, j| p0[j] + ts[i] * v[j])
}

fn line_distance(p: &[f64]) -> f64 {
    // unit normal of the direction (0.6, 0.8)
    ((p[0] - 0.3) * -0.8 + (p[1] + 0.2) * 0.6).abs()
}

#[test]
fn noise_moments_match_the_gaussian() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mean = DVector::from_vec(vec![0.5, -2.0, 3.0]);
    let sigma = 0.3;
    let n = 100_000;
    let draws: Vec<DVector<f64>> = (0..n).map(|_| draw_noise(&mut rng, sigma, &mean)).collect();
    for c in 0..3 {
        let m: f64 = draws.iter().map(|v| v[c]).sum::<f64>() / n as f64;
        let var: f64 = draws.iter().map(|v| (v[c] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((m - mean[c]).abs() < 4.0 * sigma / (n as f64).sqrt());
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.05);
    }
}

#[test]
fn point_samples_on_a_line_stay_on_it() {
    let pts = line_points(100, 2);
    let index = NeighborIndex::build(&pts).unwrap();
    let cfg = config(1, 8, 0.05, Mode::Point);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for anchor in 0..100 {
        let s = cems_point(&index, anchor, &cfg, &mut rng).unwrap();
        assert!(line_distance(s.sample.as_slice()) < 1e-8);
        let f = cems_point_first_order(&index, anchor, &cfg, &mut ChaCha8Rng::seed_from_u64(anchor as u64)).unwrap();
        let g = cems_point(&index, anchor, &cfg, &mut ChaCha8Rng::seed_from_u64(anchor as u64)).unwrap();
        assert!((f.sample - g.sample).abs().max() < 1e-8);
    }
}

#[test]
fn point_sample_distance_halves_with_sigma() {
    // curved data, so the chart is not affine
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xs: Vec<f64> = (0..200).map(|_| rng.random::<f64>() * 3.0).collect();
    let pts = DMatrix::from_fn(200, 2, |i, j| if j == 0 { xs[i] } else { xs[i].sin() });
    let index = NeighborIndex::build(&pts).unwrap();
    let anchor = 17;
    let dist = |sigma: f64| {
        let cfg = config(1, 10, sigma, Mode::Point);
        let s = cems_point(&index, anchor, &cfg, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        (s.sample - index.point(anchor)).norm()
    };
    let mut prev = dist(1e-2);
    for h in 1..8 {
        let cur = dist(1e-2 / 2f64.powi(h));
        assert!((cur / prev - 0.5).abs() < 0.01, "halving {h}: {}", cur / prev);
        prev = cur;
    }
    assert_eq!(dist(0.0), 0.0);
}

/// Quadratic surface `g(u) = ½ uᵀ H_a u` in `R^(d+q)`, rotated by `q_rot`.
struct Surface {
    hessians: Vec<DMatrix<f64>>,
    rotation: DMatrix<f64>,
    d: usize,
}

impl Surface {
    fn new(d: usize, q: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hessians = (0..q)
            .map(|_| {
                let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-2.0..2.0));
                (&a + a.transpose()) * 0.5
            })
            .collect();
        let rotation = random_isometry(d + q, d + q, &mut rng);
        Self { hessians, rotation, d }
    }

    fn point(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut local = DVector::zeros(self.d + self.hessians.len());
        local.rows_mut(0, self.d).copy_from(u);
        for (a, h) in self.hessians.iter().enumerate() {
            local[self.d + a] = 0.5 * u.dot(&(h * u));
        }
        &self.rotation * local
    }

    fn violation(&self, z: &DVector<f64>) -> f64 {
        let local = self.rotation.transpose() * z;
        let u = local.rows(0, self.d).into_owned();
        self.hessians
            .iter()
            .enumerate()
            .map(|(a, h)| (local[self.d + a] - 0.5 * u.dot(&(h * &u))).abs())
            .fold(0.0, f64::max)
    }

    fn cloud(&self, n: usize, scale: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<DVector<f64>> = (0..n)
            .map(|_| self.point(&DVector::from_fn(self.d, |_, _| rng.random_range(-scale..scale))))
            .collect();
        DMatrix::from_fn(n, self.d + self.hessians.len(), |i, j| rows[i][j])
    }
}

/// Anchor at the vertex plus `pairs` random `±u` pairs: the cross-covariance
/// between tangent and normal parts vanishes, so the fitted frame is exact.
fn symmetric_neighborhood(s: &Surface, pairs: usize, scale: f64, seed: u64) -> Neighborhood {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut us: Vec<DVector<f64>> = vec![DVector::zeros(s.d)];
    for _ in 0..pairs {
        let u = DVector::from_fn(s.d, |_, _| rng.random_range(-scale..scale));
        us.push(-&u);
        us.push(u);
    }
    let dim = s.rotation.nrows();
    let members = DMatrix::from_fn(us.len(), dim, |i, j| s.point(&us[i])[j]);
    Neighborhood::from_points(DVector::zeros(dim), members, true).unwrap()
}

#[test]
fn batch_samples_lie_on_an_exact_quadratic_surface() {
    let s = Surface::new(2, 2, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..10 {
        // m = 5, k = 13
        let neighborhood = symmetric_neighborhood(&s, 6, 0.1, seed);
        let out = cems_batch_on(&neighborhood, &config(2, 13, 0.02, Mode::Batch), &mut rng).unwrap();
        assert_eq!(out.len(), 13);
        for row in out.samples.row_iter() {
            assert!(s.violation(&row.transpose()) < 1e-6);
        }
    }
}

#[test]
fn batch_samples_on_knn_neighborhoods_are_close_to_the_surface() {
    // a tilted frame turns the surface into a non-polynomial graph, so the
    // chart is only accurate to third order in the offset
    let s = Surface::new(2, 2, 5);
    let pts = s.cloud(300, 0.3, 6);
    let index = NeighborIndex::build(&pts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for anchor in (0..300).step_by(13) {
        let out = cems_batch(&index, anchor, &config(2, 12, 0.01, Mode::Batch), &mut rng).unwrap();
        assert_eq!(out.len(), 12);
        for row in out.samples.row_iter() {
            assert!(s.violation(&row.transpose()) < 1e-3);
        }
    }
}

#[test]
fn first_order_violation_grows_quadratically() {
    let s = Surface::new(2, 1, 8);
    // symmetric neighborhood, so the fitted tangent plane is exact
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut us: Vec<DVector<f64>> = (0..6)
        .map(|_| DVector::from_fn(2, |_, _| rng.random_range(-0.05..0.05)))
        .collect();
    us.extend(us.clone().into_iter().map(|u| -u));
    let members = DMatrix::from_fn(12, 3, |i, j| s.point(&us[i])[j]);
    let neighborhood = Neighborhood::from_points(DVector::zeros(3), members, false).unwrap();
    let first = PointChart::fit(&neighborhood, 2, Order::First, Ridge::Fixed(0.0)).unwrap();
    let second = PointChart::fit(&neighborhood, 2, Order::Second, Ridge::Fixed(0.0)).unwrap();
    let dir = DVector::from_vec(vec![0.6, 0.8]);
    let hs = [0.01, 0.02, 0.04, 0.08];
    let errs: Vec<f64> = hs
        .iter()
        .map(|h| s.violation(&first.sample_at(&(&dir * *h)).unwrap()))
        .collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = hs.iter().zip(&errs).map(|(h, e)| (h.ln(), e.ln())).unzip();
    let slope = cems::experiment::fit_slope(&lx, &ly);
    assert!((slope - 2.0).abs() < 0.3, "slope {slope}");
    for h in hs {
        assert!(s.violation(&second.sample_at(&(&dir * h)).unwrap()) < 1e-10);
    }
}

#[test]
fn zero_sigma_batch_and_unit_lambda_foma_reconstruct_members() {
    let s = Surface::new(2, 2, 10);
    let pts = s.cloud(200, 0.5, 11);
    let index = NeighborIndex::build(&pts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for anchor in [0, 50, 199] {
        let neighborhood = knn_neighbors(&index, anchor, 12, true).unwrap();
        let out = cems_batch_on(&neighborhood, &config(2, 12, 0.0, Mode::Batch), &mut rng).unwrap();
        assert!((&out.samples - &neighborhood.members).abs().max() < 1e-8);
        let foma = foma_sample(&neighborhood, 1.0, Mode::Batch, 2).unwrap();
        assert!((&foma.samples - &neighborhood.members).abs().max() < 1e-8);
    }
}

#[test]
fn zero_lambda_foma_lies_in_the_tangent_plane() {
    let s = Surface::new(2, 2, 13);
    let pts = s.cloud(200, 0.5, 14);
    let index = NeighborIndex::build(&pts).unwrap();
    let neighborhood = knn_neighbors(&index, 3, 12, false).unwrap();
    let foma = foma_sample(&neighborhood, 0.0, Mode::Point, 2).unwrap();
    let frame = cems::sampler::LocalFrame::fit(&neighborhood, Mode::Point, 2).unwrap();
    for row in foma.samples.row_iter() {
        let delta = row.transpose() - &frame.centered.origin;
        assert!((frame.basis.normal.transpose() * delta).abs().max() < 1e-12);
    }
    assert!(matches!(
        foma_sample(&neighborhood, 1.5, Mode::Point, 2),
        Err(CemsError::Parameter(_))
    ));
}

#[test]
fn flat_data_gives_zero_hessian_and_affine_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let basis = random_isometry(6, 2, &mut rng);
    let offset = DVector::from_fn(6, |_, _| rng.random::<f64>());
    let coords = DMatrix::from_fn(150, 2, |_, _| rng.random::<f64>());
    let pts = DMatrix::from_fn(150, 6, |i, j| offset[j] + (basis.row(j) * coords.row(i).transpose())[0]);
    let index = NeighborIndex::build(&pts).unwrap();
    let projector = &basis * basis.transpose();
    let cfg = config(2, 16, 0.05, Mode::Point);
    for anchor in (0..150).step_by(10) {
        let n = knn_neighbors(&index, anchor, 16, false).unwrap();
        let chart = PointChart::fit(&n, 2, Order::Second, Ridge::Fixed(0.0)).unwrap();
        assert!(chart.chart.hessian_max_abs() < 1e-6);
        let s = cems_point(&index, anchor, &cfg, &mut ChaCha8Rng::seed_from_u64(anchor as u64)).unwrap();
        let rel = &s.sample - &offset;
        assert!((&rel - &projector * &rel).abs().max() < 1e-8);
    }
}

/// Five features and one target driven by three latent coordinates.
fn three_dim_table(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<[f64; 3]> = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let features = DMatrix::from_fn(n, 5, |i, j| {
        let [a, b, c] = u[i];
        match j {
            0 => a,
            1 => b,
            2 => c,
            3 => a * b,
            _ => c.sin() + a * a,
        }
    });
    let targets = DMatrix::from_fn(n, 1, |i, _| {
        let [a, b, c] = u[i];
        a + b * b - 0.5 * c
    });
    Dataset::from_matrices(features, targets).unwrap()
}

#[test]
fn augment_with_small_sigma_runs_end_to_end() {
    let (data, _) = normalize(&three_dim_table(1500, 16), true).unwrap();
    let cfg = SamplerConfig {
        sigma: 1e-4,
        k: 16,
        mode: Mode::Batch,
        ..SamplerConfig::default()
    };
    let run = augment_dataset(&data, &cfg, 1500, AugmentOptions::default()).unwrap();
    assert_eq!(run.d_used, 3, "{:?}", run.dim_estimate.as_ref().map(|e| e.d_real));
    assert_eq!(run.samples.len(), 1500);
    assert!(run.samples.samples.iter().all(|v| v.is_finite()));
}

#[test]
fn batch_provenance_links_every_sample_to_its_anchor() {
    let (data, _) = normalize(&three_dim_table(160, 17), true).unwrap();
    let cfg = SamplerConfig {
        intrinsic_dim: IntrinsicDim::Fixed(3),
        k: 16,
        sigma: 0.01,
        ..SamplerConfig::default()
    };
    let run = augment_dataset(&data, &cfg, 160, AugmentOptions::default()).unwrap();
    assert_eq!(run.samples.len(), 160);
    for chunk in run.samples.provenance.chunks(16) {
        let anchor = chunk[0].anchor_index;
        assert!(chunk.iter().all(|p| p.anchor_index == anchor && p.mode == Mode::Batch));
        assert_eq!(chunk[0].member_index, Some(anchor));
        assert!(chunk.iter().all(|p| p.eta.len() == 3 && p.residual.is_finite()));
    }
}

#[test]
fn augmentation_is_deterministic_across_runs_and_workers() {
    let (data, _) = normalize(&three_dim_table(300, 18), true).unwrap();
    for (mode, method, selection) in [
        (Mode::Batch, Method::Cems, cems::Selection::Knn),
        (Mode::Point, Method::Cems, cems::Selection::Knnp),
        (Mode::Batch, Method::Foma { lambda: 0.5 }, cems::Selection::Random),
    ] {
        let cfg = SamplerConfig {
            sigma: 0.05,
            k: 12,
            mode,
            method,
            selection,
            seed: 42,
            ..SamplerConfig::default()
        };
        let one = augment_dataset(
            &data,
            &cfg,
            250,
            AugmentOptions {
                workers: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let again = augment_dataset(
            &data,
            &cfg,
            250,
            AugmentOptions {
                workers: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let four = augment_dataset(
            &data,
            &cfg,
            250,
            AugmentOptions {
                workers: 4,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(one.samples, again.samples);
        assert_eq!(one.samples, four.samples);
        let other = augment_dataset(
            &data,
            &SamplerConfig { seed: 43, ..cfg },
            250,
            AugmentOptions::default(),
        )
        .unwrap();
        assert_ne!(one.samples.samples, other.samples.samples);
    }
}

#[test]
fn degenerate_data_exhausts_the_failure_budget() {
    // every row is one of two points, so no neighborhood spans two dimensions
    let features = DMatrix::from_fn(40, 2, |i, j| if i % 2 == 0 { 0.0 } else { (j + 1) as f64 });
    let targets = DMatrix::from_fn(40, 1, |i, _| (i % 2) as f64);
    let data = Dataset::from_matrices(features, targets).unwrap();
    let cfg = SamplerConfig {
        intrinsic_dim: IntrinsicDim::Fixed(2),
        k: 8,
        mode: Mode::Point,
        ..SamplerConfig::default()
    };
    let err = augment_dataset(
        &data,
        &cfg,
        10,
        AugmentOptions {
            workers: 1,
            failure_budget: 0.5,
        },
    )
    .unwrap_err();
    assert!(matches!(err, CemsError::Geometry(_)), "{err}");
}

#[test]
fn invalid_configs_are_rejected_before_sampling() {
    let (data, _) = normalize(&three_dim_table(50, 19), true).unwrap();
    let opts = AugmentOptions::default();
    let bad = [
        SamplerConfig {
            sigma: -1.0,
            ..SamplerConfig::default()
        },
        SamplerConfig {
            k: 1,
            ..SamplerConfig::default()
        },
        SamplerConfig {
            k: 50,
            mode: Mode::Point,
            ..SamplerConfig::default()
        },
        SamplerConfig {
            intrinsic_dim: IntrinsicDim::Fixed(6),
            ..SamplerConfig::default()
        },
        SamplerConfig {
            method: Method::Foma { lambda: 2.0 },
            ..SamplerConfig::default()
        },
    ];
    for cfg in bad {
        assert!(
            matches!(augment_dataset(&data, &cfg, 10, opts), Err(CemsError::Parameter(_))),
            "{cfg:?}"
        );
    }
    assert!(augment_dataset(&data, &SamplerConfig::default(), 0, opts).is_err());
}

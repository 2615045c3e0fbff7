//! Subcommand implementations. Each returns a human-readable summary for
//! stdout; files written by a command never contain timings.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cems::experiment::{
    run_curvature_sweep, run_order_experiment, CurvatureSweepConfig, ExperimentReport, OrderExperimentConfig,
};
use cems::sampler::{augment_dataset, AugmentOptions, Method, SamplerConfig};
use cems::synthetic::{self, Geometry, SyntheticSpec};
use cems::{normalize, twonn_estimate};
use nalgebra::DMatrix;

use crate::cli::{AugmentArgs, BenchCurvatureArgs, BenchOrderArgs, Cli, Command, EstimateArgs, SynthArgs};
use crate::config::{parse_list, ConfigFile};
use crate::error::CliError;
use crate::io::{joint_header, load_csv, save_csv, RowOrigin};

pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Augment(args) => augment(&AugmentConfig::resolve(args)?),
        Command::EstimateDim(args) => estimate_dim(args),
        Command::Synth(args) => synth(args),
        Command::BenchOrder(args) => bench_order(args),
        Command::BenchCurvature(args) => bench_curvature(args),
    }
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    path.map(ConfigFile::load).transpose().map(Option::unwrap_or_default)
}

fn require<T>(value: Option<T>, key: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Config(format!("missing required option --{key}")))
}

/// A given seed, or a fresh random one that is announced so the run can be repeated.
fn resolve_seed(file: &ConfigFile, flag: Option<u64>) -> Result<u64, CliError> {
    match file.pick("seed", flag)? {
        Some(seed) => Ok(seed),
        None => {
            let seed = rand::random::<u64>();
            eprintln!("no --seed given; using seed {seed}");
            Ok(seed)
        }
    }
}

fn split_targets(raw: Option<String>) -> Option<Vec<String>> {
    raw.map(|t| t.split(',').map(|s| s.trim().to_string()).collect())
}

fn meta_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Fully resolved `augment` settings.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub targets: Option<Vec<String>>,
    pub sampler: SamplerConfig,
    pub n_gen: Option<usize>,
    pub append: bool,
    pub denormalize: bool,
    pub scale_features: bool,
    pub provenance: bool,
    pub failure_budget: f64,
    pub workers: usize,
}

impl AugmentConfig {
    /// Flags, then config-file keys, then built-in defaults.
    pub fn resolve(args: AugmentArgs) -> Result<Self, CliError> {
        let file = load_config(args.config.as_deref())?;
        let defaults = SamplerConfig::default();
        let lambda = file.pick_or("lambda", args.lambda, 0.5)?;
        let method = match file.pick_or("method", args.method, "cems".to_string())?.as_str() {
            "cems" => Method::Cems,
            "foma" => Method::Foma { lambda },
            other => {
                return Err(CliError::Config(format!(
                    "unknown method '{other}', expected cems or foma"
                )))
            }
        };
        let sampler = SamplerConfig {
            sigma: file.pick_or("sigma", args.sigma, defaults.sigma)?,
            intrinsic_dim: file.pick_or("dim", args.dim, defaults.intrinsic_dim)?,
            k: file.pick_or("k", args.k, defaults.k)?,
            mode: file.pick_or("mode", args.mode, defaults.mode)?,
            selection: file.pick_or("select", args.select, defaults.selection)?,
            ridge: file.pick_or("ridge", args.ridge, defaults.ridge)?,
            order: file.pick_or("order", args.order, defaults.order)?,
            method,
            seed: resolve_seed(&file, args.seed)?,
        };
        let workers = file.pick_or("workers", args.workers, 1usize)?;
        if workers == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        Ok(Self {
            input: require(file.pick("input", args.input)?, "input")?,
            output: require(file.pick("output", args.output)?, "output")?,
            targets: split_targets(file.pick("targets", args.targets)?),
            sampler,
            n_gen: file.pick("n-gen", args.n_gen)?,
            append: file.pick_or("append", args.append, false)?,
            denormalize: file.pick_or("denormalize", args.denormalize, false)?,
            scale_features: file.pick_or("scale-features", args.scale_features, true)?,
            provenance: file.pick_or("provenance", args.provenance, false)?,
            failure_budget: file.pick_or(
                "failure-budget",
                args.failure_budget,
                AugmentOptions::default().failure_budget,
            )?,
            workers,
        })
    }

    /// Settings that determine the output, as config-file lines.
    pub fn echo(&self) -> String {
        let s = &self.sampler;
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("input", self.input.display().to_string());
        if let Some(t) = &self.targets {
            line("targets", t.join(","));
        }
        line("sigma", s.sigma.to_string());
        line("k", s.k.to_string());
        line("dim", s.intrinsic_dim.to_string());
        line("mode", s.mode.to_string());
        line("select", s.selection.to_string());
        line("order", s.order.to_string());
        line("ridge", s.ridge.to_string());
        match s.method {
            Method::Cems => line("method", "cems".into()),
            Method::Foma { lambda } => {
                line("method", "foma".into());
                line("lambda", lambda.to_string());
            }
        }
        if let Some(n) = self.n_gen {
            line("n-gen", n.to_string());
        }
        line("append", self.append.to_string());
        line("denormalize", self.denormalize.to_string());
        line("scale-features", self.scale_features.to_string());
        line("provenance", self.provenance.to_string());
        line("failure-budget", self.failure_budget.to_string());
        line("seed", s.seed.to_string());
        out
    }
}

pub fn augment(cfg: &AugmentConfig) -> Result<String, CliError> {
    let start = Instant::now();
    let raw = load_csv(&cfg.input, cfg.targets.as_deref())?;
    let (normalized, state) = normalize(&raw, cfg.scale_features)?;
    let n_gen = cfg.n_gen.unwrap_or(raw.len());
    let options = AugmentOptions {
        workers: cfg.workers,
        failure_budget: cfg.failure_budget,
    };
    let run = augment_dataset(&normalized, &cfg.sampler, n_gen, options)?;

    let mut generated = run.samples.samples.clone();
    if cfg.denormalize {
        state.denormalize_joint(&mut generated)?;
    }
    let mut origins: Vec<RowOrigin> = run.samples.provenance.iter().map(RowOrigin::from).collect();
    let rows = if cfg.append {
        let base = if cfg.denormalize {
            raw.joint()
        } else {
            normalized.joint()
        };
        origins = (0..base.nrows()).map(RowOrigin::original).chain(origins).collect();
        let (nb, ng, dim) = (base.nrows(), generated.nrows(), base.ncols());
        DMatrix::from_fn(
            nb + ng,
            dim,
            |i, j| {
                if i < nb {
                    base[(i, j)]
                } else {
                    generated[(i - nb, j)]
                }
            },
        )
    } else {
        generated
    };
    save_csv(
        &cfg.output,
        &joint_header(&raw),
        &rows,
        cfg.provenance.then_some(origins.as_slice()),
    )?;

    let mut meta = cfg.echo();
    let _ = writeln!(meta, "# rows = {}", rows.nrows());
    let _ = writeln!(meta, "# generated = {}", run.samples.len());
    let _ = writeln!(meta, "# failures = {}", run.failures);
    let _ = writeln!(meta, "# d_used = {}", run.d_used);
    if let Some(est) = &run.dim_estimate {
        let _ = writeln!(meta, "# d_real = {:e}", est.d_real);
    }
    write_text(&meta_path(&cfg.output), &meta)?;

    Ok(format!(
        "wrote {} rows to {} (n_gen = {}, failures = {}, d_used = {}, sigma = {}, workers = {}, runtime = {:.3}s)",
        rows.nrows(),
        cfg.output.display(),
        run.samples.len(),
        run.failures,
        run.d_used,
        cfg.sampler.sigma,
        cfg.workers,
        start.elapsed().as_secs_f64()
    ))
}

pub fn estimate_dim(args: EstimateArgs) -> Result<String, CliError> {
    let file = load_config(args.config.as_deref())?;
    let input: PathBuf = require(file.pick("input", args.input)?, "input")?;
    let targets = split_targets(file.pick("targets", args.targets)?);
    let scale = file.pick_or("scale-features", args.scale_features, true)?;
    let raw = load_csv(&input, targets.as_deref())?;
    let (normalized, _) = normalize(&raw, scale)?;
    let est = twonn_estimate(&normalized.joint())?;
    Ok(format!(
        "d_real = {:.4}\nd_used = {}\nn_valid = {}\nn = {}",
        est.d_real,
        est.d_used,
        est.n_valid,
        raw.len()
    ))
}

pub fn synth(args: SynthArgs) -> Result<String, CliError> {
    let file = load_config(args.config.as_deref())?;
    let defaults = SyntheticSpec::default();
    let output: PathBuf = require(file.pick("output", args.output)?, "output")?;
    let params = SyntheticSpec {
        kind: file.pick_or("kind", args.kind, defaults.kind)?,
        n: file.pick_or("n", args.n, defaults.n)?,
        noise_sd: file.pick_or("noise-sd", args.noise_sd, defaults.noise_sd)?,
        curvature: file.pick_or("curvature", args.curvature, defaults.curvature)?,
        intrinsic_d: file.pick_or("intrinsic-d", args.intrinsic_d, defaults.intrinsic_d)?,
        ambient_d: file.pick_or("ambient-d", args.ambient_d, defaults.ambient_d)?,
        seed: resolve_seed(&file, args.seed)?,
    };
    let data = synthetic::generate(&params)?;
    save_csv(&output, &joint_header(&data.dataset), &data.dataset.joint(), None)?;

    let mut meta = String::new();
    let _ = writeln!(meta, "kind = {}", params.kind);
    let _ = writeln!(meta, "n = {}", params.n);
    let _ = writeln!(meta, "noise-sd = {}", params.noise_sd);
    let _ = writeln!(meta, "curvature = {}", params.curvature);
    let _ = writeln!(meta, "intrinsic-d = {}", params.intrinsic_d);
    let _ = writeln!(meta, "ambient-d = {}", params.ambient_d);
    let _ = writeln!(meta, "seed = {}", params.seed);
    if let Geometry::Sphere { radius, .. } = &data.geometry {
        let _ = writeln!(meta, "# radius = {radius:e}");
        let _ = writeln!(
            meta,
            "# curvature convention: R = sqrt(d(d-1)/kappa) for d >= 2, 1/sqrt(kappa) for d = 1"
        );
        let _ = writeln!(meta, "# features and targets are min-max scaled to [0, 1]");
    }
    write_text(&meta_path(&output), &meta)?;
    Ok(format!(
        "wrote {} rows of {} data to {}",
        data.dataset.len(),
        params.kind,
        output.display()
    ))
}

fn emit_report(report: &ExperimentReport, output: Option<&Path>) -> Result<String, CliError> {
    let tsv = report.to_tsv();
    match output {
        Some(path) => {
            write_text(path, &tsv)?;
            Ok(format!(
                "wrote report to {} (runtime = {:.3}s)",
                path.display(),
                report.runtime_secs
            ))
        }
        None => Ok(format!("{tsv}# runtime = {:.3}s", report.runtime_secs)),
    }
}

pub fn bench_order(args: BenchOrderArgs) -> Result<String, CliError> {
    let file = load_config(args.config.as_deref())?;
    let defaults = OrderExperimentConfig::default();
    let scales = match file.pick::<String>("scales", args.scales)? {
        Some(raw) => parse_list(&raw, "scales")?,
        None => defaults.scales.clone(),
    };
    let cfg = OrderExperimentConfig {
        curve: file.pick_or("curve", args.curve, defaults.curve)?,
        scales,
        orders: defaults.orders.clone(),
        seeds: file.pick_or("seeds", args.seeds, defaults.seeds)?,
        seed: resolve_seed(&file, args.seed)?,
        anchors_per_seed: file.pick_or("anchors", args.anchors, defaults.anchors_per_seed)?,
        k: file.pick_or("k", args.k, defaults.k)?,
        workers: file.pick_or("workers", args.workers, defaults.workers)?,
    };
    let output: Option<PathBuf> = file.pick("output", args.output)?;
    emit_report(&run_order_experiment(&cfg)?, output.as_deref())
}

pub fn bench_curvature(args: BenchCurvatureArgs) -> Result<String, CliError> {
    let file = load_config(args.config.as_deref())?;
    let defaults = CurvatureSweepConfig::default();
    let curvatures = match file.pick::<String>("curvatures", args.curvatures)? {
        Some(raw) => parse_list(&raw, "curvatures")?,
        None => defaults.curvatures.clone(),
    };
    let cfg = CurvatureSweepConfig {
        curvatures,
        n: file.pick_or("n", args.n, defaults.n)?,
        intrinsic_d: file.pick_or("intrinsic-d", args.intrinsic_d, defaults.intrinsic_d)?,
        ambient_d: file.pick_or("ambient-d", args.ambient_d, defaults.ambient_d)?,
        noise_sd: file.pick_or("noise-sd", args.noise_sd, defaults.noise_sd)?,
        sigma: file.pick_or("sigma", args.sigma, defaults.sigma)?,
        k: file.pick_or("k", args.k, defaults.k)?,
        lambda: file.pick_or("lambda", args.lambda, defaults.lambda)?,
        ridge: file.pick_or("ridge", args.ridge, defaults.ridge)?,
        anchors_per_seed: file.pick_or("anchors", args.anchors, defaults.anchors_per_seed)?,
        seeds: file.pick_or("seeds", args.seeds, defaults.seeds)?,
        seed: resolve_seed(&file, args.seed)?,
        workers: file.pick_or("workers", args.workers, defaults.workers)?,
    };
    let output: Option<PathBuf> = file.pick("output", args.output)?;
    emit_report(&run_curvature_sweep(&cfg)?, output.as_deref())
}

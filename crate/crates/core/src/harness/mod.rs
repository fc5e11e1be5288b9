//! Simulation presets reproducing the paper's tables at desk scale.
//!
//! Replicate `r` of a cell draws from
//! `RngStream::new(base_seed, stable_hash(cell.key())).substream(r)`, and
//! results are aggregated in replicate order, so reports do not depend on
//! the thread count. Timing statistics are the exception.

pub mod bench;
pub mod protocols;
pub mod report;
pub mod spec;

use std::time::Instant;

use rayon::prelude::*;

use crate::classify::cross_validate;
use crate::error::{Error, Result};
use crate::inference::lrt_two_sample;
use crate::mixtures::{adjusted_rand_index, select_k, Criterion, EmOptions};
use crate::mle::{Algorithm, FitOptions};
use crate::regression::{fit_metric, fit_regression, predict};
use crate::rng::{stable_hash, RngStream};
use crate::sampling::sample;
use crate::sphere::{Family, SphericalParams, UnitVector};

pub use report::{mean_and_stderr, ReportMetadata, ReportRow, ReportTable};
pub use spec::{Cell, ExperimentSpec, FamilySelection, Grid, Preset, Protocol};

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "SCPKB_THREADS";

/// Concentration of timing data when the spec leaves it open.
pub const SPEED_DEFAULT_RHO: f64 = 0.8;
/// Group concentration of the discriminant design.
pub const DISCRIM_DEFAULT_RHO: f64 = 0.5;

/// Sizes the global worker pool from `explicit`, else from `SCPKB_THREADS`.
/// Returns the thread count in effect; a pool that already exists is kept.
pub fn init_threads(explicit: Option<usize>) -> Result<usize> {
    let from_env = match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?,
        ),
        _ => None,
    };
    if let Some(t) = explicit.or(from_env) {
        if t == 0 {
            return Err(Error::Config("thread count must be positive".into()));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(rayon::current_num_threads())
}

/// Stream of replicate `r` in `cell`.
pub fn replicate_stream(base_seed: u64, cell: &Cell, r: u64) -> RngStream {
    RngStream::new(base_seed, stable_hash(cell.key().as_bytes())).substream(r)
}

type Replicate = Vec<Option<f64>>;

fn statistics(preset: Preset) -> Vec<&'static str> {
    match preset {
        Preset::MleSpeed => vec!["hybrid_over_nr", "pkb_over_sc"],
        Preset::Type1Power => vec!["reject_rate"],
        Preset::RegressionFit => vec!["fit_sc", "fit_pkb"],
        Preset::Discrim => vec!["accuracy_sc", "accuracy_pkb"],
        Preset::MixtureRecovery => vec![
            "abs_k_error_sc",
            "ari_sc",
            "boundary_rate_sc",
            "abs_k_error_icl_sc",
            "abs_k_error_pkb",
            "ari_pkb",
            "boundary_rate_pkb",
            "abs_k_error_icl_pkb",
        ],
    }
}

fn speed_replicate(spec: &ExperimentSpec, cell: &Cell, rng: &mut RngStream) -> Result<Replicate> {
    let rho = spec.protocol.rho.unwrap_or(SPEED_DEFAULT_RHO);
    let params = SphericalParams::from_direction(cell.family, &UnitVector::basis(cell.d + 1, 0), rho)?;
    let y = sample(&params, cell.n, rng)?;
    let reps = spec.protocol.timing_reps;
    let ratio = bench::time_algorithms(&y, cell.family, reps).ok().map(|t| t.hybrid_over_nr());
    let family_ratio = bench::pkb_over_sc(&y, Algorithm::Nr, reps).ok();
    Ok(vec![ratio, family_ratio])
}

fn type1_replicate(spec: &ExperimentSpec, cell: &Cell, rng: &mut RngStream) -> Result<Replicate> {
    let (s1, s2) = protocols::two_samples(
        cell.family,
        cell.d,
        (cell.n, cell.n2.unwrap_or(cell.n)),
        spec.protocol.rho_pair,
        cell.theta.unwrap_or(0.0),
        rng,
    )?;
    let reject = lrt_two_sample(&s1, &s2, cell.family)
        .ok()
        .map(|t| f64::from(u8::from(t.p_asymptotic < spec.protocol.alpha)));
    Ok(vec![reject])
}

fn regression_replicate(
    cell: &Cell,
    fixed: Option<&[f64]>,
    rng: &mut RngStream,
) -> Result<Replicate> {
    let b = match fixed {
        Some(b) => b.to_vec(),
        None => protocols::normal_coefficients(2, cell.d, rng),
    };
    let (y, x) = protocols::regression_data(cell.family, cell.n, cell.d, &b, rng)?;
    Ok(Family::ALL
        .iter()
        .map(|&model| {
            let fitted = fit_regression(&y, &x, model, FitOptions::default()).ok()?;
            fit_metric(&y, &predict(&fitted, &x).ok()?).ok()
        })
        .collect())
}

fn discrim_replicate(spec: &ExperimentSpec, cell: &Cell, rng: &mut RngStream) -> Result<Replicate> {
    let rho = spec.protocol.rho.unwrap_or(DISCRIM_DEFAULT_RHO);
    let data = protocols::two_groups(cell.family, cell.d, cell.n, rho, cell.theta.unwrap_or(0.0), rng)?;
    let folds = rng.substream(0);
    Ok(Family::ALL
        .iter()
        .map(|&model| cross_validate(&data, model, spec.protocol.folds, 1, &folds).ok().map(|cv| cv.mean))
        .collect())
}

fn mixture_replicate(spec: &ExperimentSpec, cell: &Cell, rng: &mut RngStream) -> Result<Replicate> {
    let k = cell.k.unwrap_or(2);
    let p = &spec.protocol;
    let draw = protocols::mixture_data(cell.family, cell.n, cell.d, k, p.rho_range, p.kappa, rng)?;
    let k_max = k + p.k_max_extra;
    let opts = EmOptions {
        n_starts: p.n_starts,
        ..EmOptions::default()
    };
    let fits = rng.substream(0);
    let mut out = Vec::with_capacity(8);
    for model in Family::ALL {
        match select_k(&draw.y, model, k_max, opts, &fits) {
            Ok(sel) => {
                let bic = sel.chosen(Criterion::Bic);
                let icl = sel.chosen(Criterion::Icl);
                out.push(bic.map(|kh| kh.abs_diff(k) as f64));
                out.push(
                    bic.and_then(|kh| sel.model(kh))
                        .and_then(|m| adjusted_rand_index(&m.map_assignments(), &draw.labels).ok()),
                );
                out.push(bic.map(|kh| f64::from(u8::from(kh == k_max))));
                out.push(icl.map(|kh| kh.abs_diff(k) as f64));
            }
            Err(_) => out.extend([None; 4]),
        }
    }
    Ok(out)
}

fn run_cell(spec: &ExperimentSpec, cell: &Cell) -> Vec<Option<Replicate>> {
    let reps = spec.replicates as u64;
    let one = |r: u64, fixed: Option<&[f64]>| {
        let mut rng = replicate_stream(spec.base_seed, cell, r);
        match spec.preset {
            Preset::MleSpeed => speed_replicate(spec, cell, &mut rng),
            Preset::Type1Power => type1_replicate(spec, cell, &mut rng),
            Preset::RegressionFit => regression_replicate(cell, fixed, &mut rng),
            Preset::Discrim => discrim_replicate(spec, cell, &mut rng),
            Preset::MixtureRecovery => mixture_replicate(spec, cell, &mut rng),
        }
        .ok()
    };
    match spec.preset {
        // Timings run one at a time.
        Preset::MleSpeed => (0..reps).map(|r| one(r, None)).collect(),
        Preset::RegressionFit if spec.protocol.fixed_coefficients => {
            let mut rng = RngStream::new(spec.base_seed, stable_hash(cell.key().as_bytes())).substream(u64::MAX);
            let b = protocols::normal_coefficients(2, cell.d, &mut rng);
            (0..reps).into_par_iter().map(|r| one(r, Some(&b))).collect()
        }
        _ => (0..reps).into_par_iter().map(|r| one(r, None)).collect(),
    }
}

/// Runs every cell of `spec`. Failed replicates are left out of the means
/// and counted in a `failures` row per cell.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ReportTable> {
    spec.validate()?;
    let start = Instant::now();
    let names = statistics(spec.preset);
    let mut table = ReportTable {
        rows: Vec::new(),
        metadata: ReportMetadata {
            preset: spec.preset.to_string(),
            base_seed: spec.base_seed,
            replicates: spec.replicates,
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads: rayon::current_num_threads(),
            wall_time_secs: 0.0,
        },
    };
    for cell in spec.cells() {
        let key = cell.key();
        let results = run_cell(spec, &cell);
        for (s, name) in names.iter().enumerate() {
            let values: Vec<f64> = results.iter().flatten().filter_map(|r| r[s]).collect();
            table.push_summary(&key, name, &values);
        }
        let failures = results
            .iter()
            .filter(|r| r.as_ref().is_none_or(|v| v.iter().any(Option::is_none)))
            .count();
        table.push_count(&key, "failures", failures, results.len());
    }
    table.metadata.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(table)
}

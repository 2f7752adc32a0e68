//! Query-scaling sweeps over a grid of target errors.

use aae_core::estimation::{
    aae_estimate, classical_baseline, classical_sample_size, standard_estimate, AaeOptions, EstimateReport, Prior,
};
use aae_core::random::{derive_seed, rng_from_seed};
use aae_core::toys::{scaling_point, single_qubit_instance};
use aae_core::{Error, Result};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::record::SweepRow;

pub const METHODS: [&str; 3] = ["aae", "standard", "classical"];

/// For every grid point the prior bound is `P₀ ∈ Θ(ε)` and the true value
/// sits at `P₀/2`. Points run on up to `workers` threads; rows come back in
/// grid order with methods in [`METHODS`] order.
pub fn run_sweep(config: &ExperimentConfig, workers: usize) -> Result<Vec<SweepRow>> {
    let grid = config.grid.clone().unwrap_or_default();
    if grid.is_empty() {
        return Err(Error::Argument("sweep grid is empty".into()));
    }
    let trials = config.trials.unwrap_or(1) as usize;
    let points: Vec<(usize, f64)> = grid
        .iter()
        .flat_map(|&eps| std::iter::repeat_n(eps, trials))
        .enumerate()
        .collect();
    let options = AaeOptions::with_backend(config.backend_tag().backend());
    let seed = config.seed();
    let failure = config.failure;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Resource(format!("cannot start worker pool: {e}")))?;
    let per_point: Vec<Result<Vec<SweepRow>>> = pool.install(|| {
        points
            .par_iter()
            .map(|&(i, eps)| sweep_point(eps, derive_seed(seed, i as u64), failure, &options))
            .collect()
    });
    let mut rows = Vec::with_capacity(points.len() * METHODS.len());
    for r in per_point {
        rows.extend(r?);
    }
    Ok(rows)
}

/// AAE, standard AE and sample-mean rows for one target error.
pub fn sweep_point(epsilon: f64, seed: u64, failure: f64, options: &AaeOptions) -> Result<Vec<SweepRow>> {
    let pt = scaling_point(epsilon)?;
    let row = |method: &str, queries: u64, estimate: f64| SweepRow {
        epsilon,
        method: method.to_string(),
        queries,
        abs_error: (estimate - pt.truth).abs(),
        seed,
    };
    let total = |rep: &EstimateReport| rep.total_queries();

    let (prep, refl) = single_qubit_instance(pt.truth)?;
    let prior = Prior::new(pt.mu, failure)?;
    let aae = aae_estimate(&prep, &refl, &prior, epsilon, options, &mut rng_from_seed(derive_seed(seed, 0)))?;

    let (prep, refl) = single_qubit_instance(pt.truth)?;
    let standard = standard_estimate(&prep, &refl, epsilon, failure, &options.ae, &mut rng_from_seed(derive_seed(seed, 1)))?;

    let (prep, refl) = single_qubit_instance(pt.truth)?;
    let n = classical_sample_size(pt.p0, epsilon, failure);
    let classical = classical_baseline(&prep, &refl, n, derive_seed(seed, 2))?;

    Ok(vec![
        row(METHODS[0], total(&aae), aae.estimate),
        row(METHODS[1], total(&standard), standard.estimate),
        row(METHODS[2], prep.queries(), classical),
    ])
}

/// Least-squares slope of `ln(queries)` against `ln(1/ε)` over the rows of
/// one method.
pub fn loglog_slope(rows: &[SweepRow], method: &str) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.method == method && r.queries > 0)
        .map(|r| ((1.0 / r.epsilon).ln(), (r.queries as f64).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// The default grid `2⁻⁴, …, 2⁻¹²`.
pub fn default_grid() -> Vec<f64> {
    (4..=12).map(|k| 2f64.powi(-k)).collect()
}

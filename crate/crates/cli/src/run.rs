//! Single-run pipelines: one record per estimation.

use std::path::Path;
use std::time::Instant;

use aae_core::estimation::{
    aae_estimate, classical_baseline, classical_sample_size, standard_estimate, AaeOptions, ClassicalPriorSet, GroupPriors,
    Prior,
};
use aae_core::fermion::{estimate_observable_on_ground_state, fock_matrix, observable_projector_sum, OneBodyOperator};
use aae_core::quadrature::{energy_difference, newton_cotes_rule, EnergyDiffOptions};
use aae_core::random::{derive_seed, rng_from_seed};
use aae_core::statevector::{exact_eigensolve, DenseOperator, StateVector};
use aae_core::toys::{
    exact_node_priors, exact_priors, random_instance, random_one_body, single_qubit_instance, small_side_projectors, toy_path,
};
use aae_core::Error;
use serde_json::json;

use crate::config::{ExperimentConfig, FieldError, Method, Mode};
use crate::record::{ErrorRecord, ResultRecord, SweepRow};
use crate::sweep::run_sweep;

/// Default threshold above which a projector's exact expectation is
/// supplied as a classical prior.
pub const DEFAULT_CLASSICAL_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub enum RunError {
    /// Exit code 1.
    Validation(Vec<FieldError>),
    /// Exit code 2.
    Pipeline(ErrorRecord),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => 1,
            RunError::Pipeline(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    pub records: Vec<ResultRecord>,
    pub sweep_rows: Vec<SweepRow>,
}

/// Validate `config` and run its pipeline. `base` resolves relative file
/// references; `workers` bounds sweep concurrency.
pub fn execute(config: &ExperimentConfig, base: &Path, workers: usize) -> Result<RunOutput, RunError> {
    config.validate(base).map_err(RunError::Validation)?;
    let id = config.experiment_id();
    let seed = config.seed();
    let pipeline = |e: Error| RunError::Pipeline(ErrorRecord::from_error(&id, config.mode.as_str(), seed, &e));
    match config.mode {
        Mode::Sweep => Ok(RunOutput {
            records: Vec::new(),
            sweep_rows: run_sweep(config, workers).map_err(pipeline)?,
        }),
        _ => {
            let start = Instant::now();
            let mut records = run(config, base)?;
            let secs = start.elapsed().as_secs_f64();
            for r in &mut records {
                r.wall_clock_seconds = secs;
            }
            Ok(RunOutput {
                records,
                sweep_rows: Vec::new(),
            })
        }
    }
}

/// Run a non-sweep config that has already been validated.
pub fn run(config: &ExperimentConfig, base: &Path) -> Result<Vec<ResultRecord>, RunError> {
    let id = config.experiment_id();
    let seed = config.seed();
    let pipeline = |e: Error| RunError::Pipeline(ErrorRecord::from_error(&id, config.mode.as_str(), seed, &e));
    match config.mode {
        Mode::Aae => run_aae(config).map_err(pipeline),
        Mode::Operator => run_operator(config, base),
        Mode::EnergyDiff => run_energy_diff(config).map_err(pipeline),
        Mode::Weights => run_weights(config).map_err(pipeline),
        Mode::Sweep => Err(RunError::Validation(vec![FieldError {
            path: "mode".into(),
            message: "sweep configs go through execute".into(),
        }])),
    }
}

fn epsilon(config: &ExperimentConfig) -> f64 {
    config.epsilon.expect("validated config has epsilon")
}

fn run_aae(config: &ExperimentConfig) -> Result<Vec<ResultRecord>, Error> {
    let sys = &config.system;
    let seed = config.seed();
    let p = sys.probability.expect("validated");
    let (prep, refl) = match sys.builtin.as_deref() {
        Some("random") => random_instance(
            sys.qubits.expect("validated"),
            sys.rank.unwrap_or(1),
            p,
            sys.instance_seed.unwrap_or(derive_seed(seed, 0)),
        )?,
        _ => single_qubit_instance(p)?,
    };
    let truth = refl.marked_probability(prep.state())?;
    let eps = epsilon(config);
    let options = AaeOptions::with_backend(config.backend_tag().backend());
    let method = config.method();
    let run_seed = derive_seed(seed, 1);
    let mut rng = rng_from_seed(run_seed);
    let prior = match (&config.prior.mu, config.prior.upper_bound) {
        (Some(mu), _) => Some(Prior::new(mu.values()[0], config.failure)?),
        (None, Some(b)) => Some(Prior::from_upper_bound(b, config.failure)?),
        (None, None) => None,
    };
    let mut rec = match method {
        Method::Aae => {
            let prior = prior.expect("validated");
            let rep = aae_estimate(&prep, &refl, &prior, eps, &options, &mut rng)?;
            let mut rec = ResultRecord::new(&config.experiment_id(), "aae", method.as_str(), rep.estimate, Some(truth), seed);
            rec.queries = rep.queries.clone();
            rec.repetitions = rep.repetitions as u64;
            rec.details = json!({
                "mu": rep.mu,
                "p0": rep.p0,
                "measured_p1": rep.measured_p1,
                "delta_hat": rep.delta_hat,
                "phase_bits": rep.phase_bits,
                "backend": rep.backend.as_str(),
            });
            rec
        }
        Method::Standard => {
            let rep = standard_estimate(&prep, &refl, eps, config.failure, &options.ae, &mut rng)?;
            let mut rec = ResultRecord::new(&config.experiment_id(), "aae", method.as_str(), rep.estimate, Some(truth), seed);
            rec.queries = rep.queries.clone();
            rec.repetitions = rep.repetitions as u64;
            rec.details = json!({"phase_bits": rep.phase_bits, "backend": rep.backend.as_str()});
            rec
        }
        Method::Classical => {
            let bound = prior.map(|p| p.p0()).unwrap_or(0.25);
            let n = classical_sample_size(bound, eps, config.failure);
            let est = classical_baseline(&prep, &refl, n, run_seed)?;
            let mut rec = ResultRecord::new(&config.experiment_id(), "aae", method.as_str(), est, Some(truth), seed);
            rec.queries.insert(prep.name().to_string(), n);
            rec.repetitions = n;
            rec.details = json!({"variance_bound": bound});
            rec
        }
    };
    rec.target_epsilon = Some(eps);
    // Totals of the oracle counters themselves, for cross-checking the
    // per-record deltas.
    rec.details["counters"] = json!({
        prep.name(): prep.queries(),
        refl.name(): refl.queries(),
    });
    Ok(vec![rec])
}

fn lowest_diagonal_basis_state(h: &DenseOperator) -> Result<StateVector, Error> {
    let m = h.matrix();
    let best = (0..m.nrows())
        .min_by(|&a, &b| m[(a, a)].re.total_cmp(&m[(b, b)].re))
        .unwrap_or(0);
    StateVector::basis(h.n_qubits(), best)
}

fn load_classical_file(path: &Path) -> Result<Vec<Vec<(usize, f64)>>, FieldError> {
    let text = std::fs::read_to_string(path).map_err(|e| FieldError {
        path: "prior.classical_file".into(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    serde_json::from_str(&text).map_err(|e| FieldError {
        path: "prior.classical_file".into(),
        message: format!("expected one list of [index, value] pairs per group: {e}"),
    })
}

fn run_operator(config: &ExperimentConfig, base: &Path) -> Result<Vec<ResultRecord>, RunError> {
    let id = config.experiment_id();
    let seed = config.seed();
    let pipeline = |e: Error| RunError::Pipeline(ErrorRecord::from_error(&id, "operator", seed, &e));
    let field = |path: &str, e: Error| {
        RunError::Validation(vec![FieldError {
            path: path.into(),
            message: e.to_string(),
        }])
    };
    let sys = &config.system;
    let (h_one, a) = match (&sys.hamiltonian_file, &sys.operator_file) {
        (Some(hf), Some(af)) => (
            OneBodyOperator::from_file(&config.resolve(base, hf)).map_err(|e| field("system.hamiltonian_file", e))?,
            OneBodyOperator::from_file(&config.resolve(base, af)).map_err(|e| field("system.operator_file", e))?,
        ),
        _ => {
            let n = sys.orbitals.expect("validated");
            let s = sys.instance_seed.unwrap_or(derive_seed(seed, 0));
            (
                random_one_body(n, s).map_err(pipeline)?,
                random_one_body(n, derive_seed(s, 1)).map_err(pipeline)?,
            )
        }
    };
    if h_one.n_orbitals() != a.n_orbitals() {
        return Err(RunError::Validation(vec![FieldError {
            path: "system.operator_file".into(),
            message: format!(
                "operator has {} orbitals, Hamiltonian has {}",
                a.n_orbitals(),
                h_one.n_orbitals()
            ),
        }]));
    }
    let eps = epsilon(config);
    let inner = || -> Result<ResultRecord, RunError> {
        let h = DenseOperator::hermitian(fock_matrix(&h_one)).map_err(pipeline)?;
        let observable = DenseOperator::hermitian(fock_matrix(&a)).map_err(pipeline)?;
        let ground = exact_eigensolve(&h).map_err(pipeline)?.ground_state();
        let truth = ground.expectation_value(&observable).map_err(pipeline)?;
        let sum = observable_projector_sum(&a).map_err(pipeline)?;
        let (classical, priors) = match &config.prior.mu {
            Some(mu) => {
                let priors = GroupPriors::new(mu.values()).map_err(|e| field("prior.mu", e))?;
                if priors.len() != sum.groups.len() {
                    return Err(RunError::Validation(vec![FieldError {
                        path: "prior.mu".into(),
                        message: format!("{} values given, decomposition has {} groups", priors.len(), sum.groups.len()),
                    }]));
                }
                let entries = match &config.prior.classical_file {
                    Some(f) => load_classical_file(&config.resolve(base, f)).map_err(|e| RunError::Validation(vec![e]))?,
                    None => vec![Vec::new(); sum.groups.len()],
                };
                let classical = ClassicalPriorSet::for_sum(&sum, eps, entries).map_err(|e| field("prior.classical_file", e))?;
                (classical, priors)
            }
            None => {
                let threshold = config.prior.classical_threshold.unwrap_or(DEFAULT_CLASSICAL_THRESHOLD);
                exact_priors(&sum, &ground, threshold, eps).map_err(pipeline)?
            }
        };
        let reference = lowest_diagonal_basis_state(&h).map_err(pipeline)?;
        let options = AaeOptions::with_backend(config.backend_tag().backend());
        let (rep, cost) = estimate_observable_on_ground_state(
            &h,
            &reference,
            &a,
            &classical,
            &priors,
            eps,
            config.failure,
            &options,
            derive_seed(seed, 1),
        )
        .map_err(pipeline)?;
        let mut rec = ResultRecord::new(&id, "operator", "aae", rep.estimate, Some(truth), seed);
        rec.target_epsilon = Some(eps);
        rec.queries = rep.queries.clone();
        rec.repetitions = rep.repetitions as u64;
        let classical_count: usize = classical.groups.iter().map(|g| g.indices.len()).sum();
        rec.details = json!({
            "orbitals": a.n_orbitals(),
            "groups": sum.groups.len(),
            "classical_projectors": classical_count,
            "mus": priors.mus(),
            "offset": sum.offset,
            "overlap": cost.overlap,
            "gap": cost.gap,
            "block_encodings_per_preparation": cost.queries_per_preparation(),
            "backend": rep.backend.as_str(),
        });
        Ok(rec)
    };
    Ok(vec![inner()?])
}

fn run_energy_diff(config: &ExperimentConfig) -> Result<Vec<ResultRecord>, Error> {
    let path = toy_path(config.system.builtin.as_deref().expect("validated"))?;
    let seed = config.seed();
    let eps = epsilon(config);
    let e_start = path.spectrum(-1.0)?.ground_energy;
    let truth = path.spectrum(1.0)?.ground_energy;
    let threshold = config.prior.classical_threshold.unwrap_or(DEFAULT_CLASSICAL_THRESHOLD);
    let source = exact_node_priors(&path, threshold);
    let options = EnergyDiffOptions {
        aae: AaeOptions::with_backend(config.backend_tag().backend()),
        projector_sides: small_side_projectors(&path, -1.0)?,
        ..EnergyDiffOptions::default()
    };
    let rep = energy_difference(&path, e_start, &source, eps, config.failure, &options, derive_seed(seed, 1))?;
    let mut rec = ResultRecord::new(&config.experiment_id(), "energy-diff", "aae", rep.estimate, Some(truth), seed);
    rec.target_epsilon = Some(eps);
    rec.queries = rep.total_queries.clone();
    rec.repetitions = rep.node_reports.iter().map(|r| r.repetitions as u64).sum();
    rec.details = json!({
        "path": config.system.builtin,
        "e_start": e_start,
        "rule_order": rep.rule.n,
        "node_values": rep.node_values,
        "node_tolerance": rep.node_tolerance,
        "truncation_bound": rep.truncation_bound,
        "gamma_cap": rep.gamma_cap,
        "propagated_priors": rep.propagated_priors,
        "quantum_groups": rep.node_reports.iter().map(|r| r.groups.iter().filter(|g| g.mu.is_some()).count()).sum::<usize>(),
    });
    Ok(vec![rec])
}

fn run_weights(config: &ExperimentConfig) -> Result<Vec<ResultRecord>, Error> {
    let n = config.rule_order.expect("validated");
    let rule = newton_cotes_rule(n)?;
    // The record's estimate is the rule applied to f = 1, whose integral is 2.
    let mut rec = ResultRecord::new(&config.experiment_id(), "weights", "newton-cotes", rule.weight_sum(), Some(2.0), config.seed());
    rec.details = json!({
        "n": n,
        "nodes": rule.nodes,
        "weights": rule.weights,
        "abs_weight_sum": rule.abs_weight_sum(),
    });
    Ok(vec![rec])
}

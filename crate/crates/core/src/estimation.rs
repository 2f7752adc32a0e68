//! Amplitude estimation, amplified amplitude estimation (AAE) and the
//! multi-group estimators built on top of it.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::oracles::{
    distinct_counters, make_boosted_walk, query_delta, snapshot, sqrt_encoding,
    success_probability_instance, LinearMap, ProjectorSum, QueryCounter, ReflectionOracle,
    StatePrepOracle,
};
use crate::random::{derive_seed, rng_from_seed};
use crate::statevector::StateVector;

/// Eigenphases of the walk on its invariant plane are `±FACTOR·arcsin√P`,
/// where `P` is the marked probability of the walk's start state. Verified
/// against the simulator in the tests below.
pub const WALK_EIGENPHASE_FACTOR: f64 = 2.0;

/// Prior bound for `mu` amplification rounds: `sin²(π/(2(2μ+1)))`.
pub fn canonical_p0(mu: u32) -> f64 {
    (PI / (2.0 * (2.0 * mu as f64 + 1.0))).sin().powi(2)
}

/// Marked probability after `mu` rounds of amplification.
pub fn boost(p: f64, mu: u32) -> Result<f64> {
    check_probability(p, "probability")?;
    Ok(((2.0 * mu as f64 + 1.0) * p.sqrt().asin()).sin().powi(2))
}

/// Recover the unboosted probability from a boosted estimate, assuming the
/// true value is below the prior bound for `mu`.
pub fn invert_boost(p1_hat: f64, mu: u32) -> Result<f64> {
    check_probability(p1_hat, "boosted estimate")?;
    if mu == 0 {
        return Ok(p1_hat);
    }
    let s = canonical_p0(mu).sqrt().asin();
    Ok((2.0 * p1_hat.sqrt().asin() * s / PI).sin().powi(2))
}

fn check_probability(p: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Range(format!("{what} {p} outside [0, 1]")));
    }
    Ok(())
}

/// Known upper bound on a marked probability, in canonical form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prior {
    mu: u32,
    p0: f64,
    failure_budget: f64,
}

impl Prior {
    pub fn new(mu: u32, failure_budget: f64) -> Result<Self> {
        if mu == 0 {
            return Err(Error::Argument("prior needs mu ≥ 1".into()));
        }
        check_failure(failure_budget)?;
        Ok(Self {
            mu,
            p0: canonical_p0(mu),
            failure_budget,
        })
    }

    /// Largest `mu ≥ 1` whose canonical bound still covers `p_bar`.
    pub fn from_upper_bound(p_bar: f64, failure_budget: f64) -> Result<Self> {
        Self::new(mu_for_upper_bound(p_bar)?, failure_budget)
    }

    pub fn mu(&self) -> u32 {
        self.mu
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn failure_budget(&self) -> f64 {
        self.failure_budget
    }

    pub fn with_failure(self, failure_budget: f64) -> Result<Self> {
        Self::new(self.mu, failure_budget)
    }
}

pub fn mu_for_upper_bound(p_bar: f64) -> Result<u32> {
    if !(p_bar > 0.0) {
        return Err(Error::Argument(format!("prior bound {p_bar} must be positive")));
    }
    if p_bar > canonical_p0(1) * (1.0 + 1e-12) {
        return Err(Error::Argument(format!(
            "prior bound {p_bar} exceeds 1/4; no amplification round keeps it canonical"
        )));
    }
    let guess = ((PI / (2.0 * p_bar.sqrt().asin()) - 1.0) / 2.0).floor();
    let mut mu = guess.clamp(1.0, u32::MAX as f64 - 2.0) as u32;
    while mu > 1 && canonical_p0(mu) < p_bar {
        mu -= 1;
    }
    while canonical_p0(mu + 1) >= p_bar {
        mu += 1;
    }
    Ok(mu)
}

fn check_failure(f: f64) -> Result<()> {
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::Argument(format!("failure probability {f} outside (0, 1)")));
    }
    Ok(())
}

/// Per-group amplification rounds. Entries for groups with no quantum work
/// are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPriors {
    mus: Vec<u32>,
}

impl GroupPriors {
    pub fn new(mus: Vec<u32>) -> Result<Self> {
        if mus.iter().any(|&m| m == 0) {
            return Err(Error::Argument("every group prior needs mu ≥ 1".into()));
        }
        Ok(Self { mus })
    }

    pub fn from_upper_bounds(bounds: &[f64]) -> Result<Self> {
        Self::new(bounds.iter().map(|&b| mu_for_upper_bound(b)).collect::<Result<_>>()?)
    }

    pub fn len(&self) -> usize {
        self.mus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mus.is_empty()
    }

    pub fn mu(&self, group: usize) -> u32 {
        self.mus[group]
    }

    pub fn p0(&self, group: usize) -> f64 {
        canonical_p0(self.mus[group])
    }

    pub fn mus(&self) -> &[u32] {
        &self.mus
    }
}

/// Classical estimates for a subset of the projectors in one group.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalGroup {
    /// Indices into the group's projector list.
    pub indices: Vec<usize>,
    pub estimates: Vec<f64>,
    /// Accuracy promised for every estimate in the group.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalPriorSet {
    pub groups: Vec<ClassicalGroup>,
}

/// Accuracy each classical estimate must meet so that the classical part of
/// group `j` costs at most half of that group's error budget.
pub fn classical_tolerance(sum: &ProjectorSum, group: usize, indices: &[usize], epsilon: f64) -> f64 {
    let (_, nhalf) = sum.beta_norms();
    let g = &sum.groups[group];
    let covered: f64 = indices.iter().map(|&i| g.betas[i]).sum();
    if covered <= 0.0 || nhalf <= 0.0 {
        return f64::INFINITY;
    }
    epsilon * g.normalization() / (2.0 * covered * nhalf)
}

impl ClassicalPriorSet {
    /// No classical knowledge for any of `n_groups` groups.
    pub fn empty(n_groups: usize) -> Self {
        Self {
            groups: (0..n_groups)
                .map(|_| ClassicalGroup {
                    indices: Vec::new(),
                    estimates: Vec::new(),
                    tolerance: f64::INFINITY,
                })
                .collect(),
        }
    }

    /// Attach estimates and compute each group's required tolerance.
    pub fn for_sum(sum: &ProjectorSum, epsilon: f64, entries: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if entries.len() != sum.groups.len() {
            return Err(Error::Shape(format!(
                "classical priors given for {} groups, sum has {}",
                entries.len(),
                sum.groups.len()
            )));
        }
        let groups = entries
            .into_iter()
            .enumerate()
            .map(|(j, list)| {
                let (indices, estimates): (Vec<_>, Vec<_>) = list.into_iter().unzip();
                let tolerance = classical_tolerance(sum, j, &indices, epsilon);
                ClassicalGroup {
                    indices,
                    estimates,
                    tolerance,
                }
            })
            .collect();
        let set = Self { groups };
        set.validate(sum, epsilon)?;
        Ok(set)
    }

    /// Check index ranges, `C ≥ ε̃` and that each `ε̃` matches the budget for `epsilon`.
    pub fn validate(&self, sum: &ProjectorSum, epsilon: f64) -> Result<()> {
        if self.groups.len() != sum.groups.len() {
            return Err(Error::Shape("classical priors and sum disagree on group count".into()));
        }
        for (j, (cg, g)) in self.groups.iter().zip(&sum.groups).enumerate() {
            if cg.indices.len() != cg.estimates.len() {
                return Err(Error::Shape(format!("group {j}: one estimate per index is required")));
            }
            let mut seen = vec![false; g.betas.len()];
            for &i in &cg.indices {
                if i >= g.betas.len() || seen[i] {
                    return Err(Error::Argument(format!(
                        "group {j}: classical index {i} is out of range or repeated"
                    )));
                }
                seen[i] = true;
            }
            if cg.indices.is_empty() {
                continue;
            }
            let expected = classical_tolerance(sum, j, &cg.indices, epsilon);
            if (cg.tolerance - expected).abs() > 1e-12 * expected.max(1.0) {
                return Err(Error::Argument(format!(
                    "group {j}: classical tolerance {} does not match the budget {expected} for ε = {epsilon}",
                    cg.tolerance
                )));
            }
            if let Some(c) = cg.estimates.iter().find(|&&c| c < cg.tolerance) {
                return Err(Error::Argument(format!(
                    "group {j}: classical estimate {c} is below its tolerance {}",
                    cg.tolerance
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Textbook phase estimation, sampled from its exact readout distribution.
    Qpe,
    /// Exact eigenphase of the two-dimensional restriction; deterministic.
    ExactSubspace,
}

impl Backend {
    pub fn as_str(&self) -> &'static str {
        match self {
            Backend::Qpe => "qpe",
            Backend::ExactSubspace => "exact",
        }
    }
}

/// Sizing rules for amplitude estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeSettings {
    pub backend: Backend,
    /// Phase bits beyond `⌈log₂(1/ε′)⌉`.
    pub extra_phase_bits: u32,
    /// Repetitions are `⌈factor·ln(1/δ′)⌉`; the median is reported.
    pub repetition_factor: f64,
    pub max_qubits: usize,
}

impl Default for AeSettings {
    fn default() -> Self {
        Self {
            backend: Backend::Qpe,
            extra_phase_bits: 3,
            repetition_factor: 8.0,
            max_qubits: crate::statevector::MAX_QUBITS,
        }
    }
}

impl AeSettings {
    pub fn with_backend(backend: Backend) -> Self {
        Self {
            backend,
            ..Self::default()
        }
    }

    pub fn phase_bits(&self, eps_prime: f64) -> u32 {
        (1.0 / eps_prime).log2().ceil().max(0.0) as u32 + self.extra_phase_bits
    }

    pub fn repetitions(&self, failure: f64) -> u32 {
        ((self.repetition_factor * (1.0 / failure).ln()).ceil() as u32).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeOutcome {
    pub p_hat: f64,
    pub phase_bits: u32,
    pub repetitions: u32,
    /// Walk applications a phase-estimation run of this size makes, summed
    /// over repetitions (controlled powers `2^0 … 2^{t−1}`).
    pub walk_applications: u64,
    /// Start-state preparations, one per repetition.
    pub state_preparations: u64,
}

/// Eigen-decomposition of a walk restricted to the plane spanned by the
/// start state and its image.
#[derive(Debug, Clone)]
pub struct InvariantPlane {
    /// Eigenphases in `(−π, π]`.
    pub phases: Vec<f64>,
    /// `|⟨e_i|start⟩|²`, summing to 1.
    pub weights: Vec<f64>,
    /// Marked probability read off the restriction.
    pub probability: f64,
}

/// Restrict `walk` to span{v, Wv}; errors if that span is not invariant.
pub fn invariant_plane(walk: &impl LinearMap, initial: &StateVector) -> Result<InvariantPlane> {
    if walk.dim() != initial.dim() {
        return Err(Error::Shape(format!(
            "walk of dimension {} with start state of dimension {}",
            walk.dim(),
            initial.dim()
        )));
    }
    let v1 = initial.to_dvector();
    let w1 = walk.apply_vec(&v1);
    let a11 = v1.dotc(&w1);
    let r = &w1 - &v1 * a11;
    let rn = r.norm();
    if rn <= 1e-10 {
        let phase = a11.arg();
        return Ok(InvariantPlane {
            phases: vec![phase],
            weights: vec![1.0],
            probability: ((1.0 - a11.re) / 2.0).clamp(0.0, 1.0),
        });
    }
    let v2: DVector<Complex64> = r.unscale(rn);
    let w2 = walk.apply_vec(&v2);
    let a12 = v1.dotc(&w2);
    let a21 = v2.dotc(&w1);
    let a22 = v2.dotc(&w2);
    let residual = (&w2 - &v1 * a12 - &v2 * a22).norm();
    if residual > 1e-8 {
        return Err(Error::Contract(format!(
            "start state does not span an invariant plane of the walk (residual {residual:e})"
        )));
    }
    let tr = a11 + a22;
    let det = a11 * a22 - a12 * a21;
    let disc = (tr * tr - det * 4.0).sqrt();
    let lambdas = [(tr + disc) / 2.0, (tr - disc) / 2.0];
    let mut phases = Vec::with_capacity(2);
    let mut weights = Vec::with_capacity(2);
    for lambda in lambdas {
        // Eigenvector of [[a11, a12], [a21, a22]] for lambda.
        let (x, y) = if (lambda - a22).norm() > (lambda - a11).norm() {
            (lambda - a22, a21)
        } else {
            (a12, lambda - a11)
        };
        let norm = (x.norm_sqr() + y.norm_sqr()).sqrt();
        let w = if norm > 0.0 { x.norm_sqr() / (norm * norm) } else { 0.5 };
        phases.push(lambda.arg());
        weights.push(w);
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(InvariantPlane {
        phases,
        weights,
        probability: ((2.0 - tr.re) / 4.0).clamp(0.0, 1.0),
    })
}

/// Probability that `t`-bit phase estimation reads `y` for eigenphase `phase`.
pub fn qpe_outcome_probability(phase: f64, t: u32, y: u64) -> f64 {
    let big_t = (1u64 << t) as f64;
    let frac = phase / (2.0 * PI) - y as f64 / big_t;
    let s = (PI * frac).sin();
    if s.abs() < 1e-15 {
        return 1.0;
    }
    ((PI * big_t * frac).sin() / (big_t * s)).powi(2)
}

/// Readout distribution over all `2^t` outcomes for a start state with the
/// given eigen-decomposition.
pub fn qpe_distribution(plane: &InvariantPlane, t: u32) -> Vec<f64> {
    let mut dist: Vec<f64> = (0..1u64 << t)
        .map(|y| {
            plane
                .phases
                .iter()
                .zip(&plane.weights)
                .map(|(&ph, &w)| w * qpe_outcome_probability(ph, t, y))
                .sum()
        })
        .collect();
    let total: f64 = dist.iter().sum();
    for p in &mut dist {
        *p /= total;
    }
    dist
}

/// Estimate the marked probability of `initial` under the walk within
/// `eps_prime` with probability at least `1 − failure`.
pub fn amplitude_estimate<R: Rng + ?Sized>(
    walk: &impl LinearMap,
    initial: &StateVector,
    eps_prime: f64,
    failure: f64,
    settings: &AeSettings,
    rng: &mut R,
) -> Result<AeOutcome> {
    if !(eps_prime > 0.0 && eps_prime < 1.0) {
        return Err(Error::Argument(format!("tolerance {eps_prime} outside (0, 1)")));
    }
    check_failure(failure)?;
    let t = settings.phase_bits(eps_prime);
    if settings.backend == Backend::Qpe && t as usize + initial.n_qubits() > settings.max_qubits {
        return Err(Error::Resource(format!(
            "phase estimation needs {t} ancillas plus {} system qubits, budget is {}",
            initial.n_qubits(),
            settings.max_qubits
        )));
    }
    let r = settings.repetitions(failure);
    let plane = invariant_plane(walk, initial)?;
    let per_run = (1u64 << t) - 1;
    let p_hat = match settings.backend {
        Backend::ExactSubspace => plane.probability,
        Backend::Qpe => {
            let dist = qpe_distribution(&plane, t);
            let mut cdf = Vec::with_capacity(dist.len());
            let mut acc = 0.0;
            for p in &dist {
                acc += p;
                cdf.push(acc);
            }
            let big_t = (1u64 << t) as f64;
            let mut samples: Vec<f64> = (0..r)
                .map(|_| {
                    let u: f64 = rng.random::<f64>() * acc;
                    let y = cdf.partition_point(|&c| c < u).min(dist.len() - 1);
                    (PI * y as f64 / big_t).sin().powi(2)
                })
                .collect();
            samples.sort_by(f64::total_cmp);
            samples[samples.len() / 2]
        }
    };
    Ok(AeOutcome {
        p_hat,
        phase_bits: t,
        repetitions: r,
        walk_applications: per_run * r as u64,
        state_preparations: r as u64,
    })
}

/// Knobs of the AAE estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AaeOptions {
    pub ae: AeSettings,
    /// Assumed `|δ|` as a fraction of `P₀`, used to pick the boosted tolerance.
    pub delta_floor_fraction: f64,
    /// Extra factor applied to the boosted tolerance.
    pub tolerance_safety: f64,
    /// Inverted estimates at or above `P₀ − this` are reported as prior violations.
    pub violation_tolerance: f64,
}

impl Default for AaeOptions {
    fn default() -> Self {
        Self {
            ae: AeSettings::default(),
            delta_floor_fraction: 0.5,
            tolerance_safety: 0.5,
            violation_tolerance: 1e-7,
        }
    }
}

impl AaeOptions {
    pub fn with_backend(backend: Backend) -> Self {
        Self {
            ae: AeSettings::with_backend(backend),
            ..Self::default()
        }
    }
}

/// Boosted-probability tolerance that keeps the inverted estimate within
/// `epsilon` when `|δ| ≥ delta_floor`.
pub fn boosted_tolerance(p0: f64, delta_floor: f64, epsilon: f64, safety: f64) -> f64 {
    let s = p0.sqrt().asin();
    let slope = 8.0 * p0 * (1.0 - p0) * s * s / (PI * PI * delta_floor);
    (safety * epsilon / slope).min(0.5)
}

/// Largest `epsilon` for which the linearized error analysis applies.
pub fn validity_limit(p0: f64, delta_floor: f64) -> f64 {
    p0 * p0 / delta_floor
}

/// Result of one estimation group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub group: usize,
    pub sign: f64,
    /// `(Σ_k √β_jk)²` over the full group.
    pub normalization: f64,
    /// `(Σ √β)²` over the projectors left to the quantum estimator.
    pub residual_normalization: f64,
    /// Error budget `ε_j` of the group.
    pub epsilon_budget: f64,
    /// `Σ β·C` over classically known projectors.
    pub classical_part: f64,
    /// Unsigned estimate of the group's expectation.
    pub estimate: f64,
    pub probability_estimate: Option<f64>,
    pub probability_tolerance: Option<f64>,
    pub mu: Option<u32>,
    pub queries: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub estimate: f64,
    pub target_epsilon: f64,
    /// Boosted probability read out by amplitude estimation (single runs).
    pub measured_p1: Option<f64>,
    /// `estimate − P₀` (single runs).
    pub delta_hat: Option<f64>,
    pub p0: Option<f64>,
    pub mu: Option<u32>,
    pub queries: BTreeMap<String, u64>,
    pub repetitions: u32,
    pub phase_bits: u32,
    pub backend: Backend,
    pub groups: Vec<GroupReport>,
}

impl EstimateReport {
    pub fn total_queries(&self) -> u64 {
        self.queries.values().sum()
    }

    /// Sum of counts whose names satisfy `pred`.
    pub fn queries_matching(&self, pred: impl Fn(&str) -> bool) -> u64 {
        self.queries.iter().filter(|(k, _)| pred(k)).map(|(_, v)| v).sum()
    }
}

/// Sample-mean estimate of `⟨ψ|Π|ψ⟩` from `n_samples` simulated
/// measurements; charges `n_samples` state preparations.
pub fn classical_baseline(prep: &StatePrepOracle, r_pi: &ReflectionOracle, n_samples: u64, seed: u64) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::Argument("need at least one sample".into()));
    }
    let p = r_pi.marked_probability(prep.state())?;
    let mut rng = rng_from_seed(seed);
    let hits = Binomial::new(n_samples, p)
        .map_err(|e| Error::Argument(format!("invalid sampling parameters: {e}")))?
        .sample(&mut rng);
    prep.charge(n_samples);
    Ok(hits as f64 / n_samples as f64)
}

/// Samples for an `epsilon`-accurate sample mean with probability
/// `1 − failure` when the variance is at most `p(1 − p)` (Bernstein form).
pub fn classical_sample_size(p_bound: f64, epsilon: f64, failure: f64) -> u64 {
    let var = p_bound * (1.0 - p_bound);
    (2.0 * (2.0 / failure).ln() * var / (epsilon * epsilon)).ceil().max(1.0) as u64
}

/// Query-count scaling of AAE with unit constant:
/// `√P₀ · ln(1/δ′) · (P₀/|δ|) / ε`.
pub fn predicted_queries(p0: f64, delta_abs: f64, epsilon: f64, failure: f64) -> Result<f64> {
    if !(p0 > 0.0 && delta_abs > 0.0 && epsilon > 0.0 && failure > 0.0) {
        return Err(Error::Argument("all arguments must be positive".into()));
    }
    if delta_abs > p0 {
        return Err(Error::Argument(format!("|δ| = {delta_abs} exceeds P₀ = {p0}")));
    }
    Ok(p0.sqrt() * (1.0 / failure).ln() * (p0 / delta_abs) / epsilon)
}

/// Amplified amplitude estimation of `⟨ψ|Π|ψ⟩` given a prior bound.
pub fn aae_estimate<R: Rng + ?Sized>(
    prep: &StatePrepOracle,
    r_pi: &ReflectionOracle,
    prior: &Prior,
    epsilon: f64,
    options: &AaeOptions,
    rng: &mut R,
) -> Result<EstimateReport> {
    if !(epsilon > 0.0) {
        return Err(Error::Argument(format!("epsilon {epsilon} must be positive")));
    }
    let p0 = prior.p0();
    let delta_floor = options.delta_floor_fraction * p0;
    let limit = validity_limit(p0, delta_floor);
    if epsilon > limit {
        return Err(Error::Argument(format!(
            "epsilon {epsilon} is outside the validity regime ε ≤ P₀²/|δ| = {limit} (P₀ = {p0}, assumed |δ| = {delta_floor})"
        )));
    }
    let eps_prime = boosted_tolerance(p0, delta_floor, epsilon, options.tolerance_safety);
    let walk = make_boosted_walk(prep, r_pi, prior.mu())?;
    let counters = walk.counters();
    let before = snapshot(&counters);
    let outcome = amplitude_estimate(
        &walk,
        &walk.boosted_state(),
        eps_prime,
        prior.failure_budget(),
        &options.ae,
        rng,
    )?;
    walk.charge_applications(outcome.walk_applications);
    walk.charge_boosted_state(outcome.state_preparations);
    let queries = query_delta(&before, &snapshot(&counters));
    let estimate = invert_boost(outcome.p_hat, prior.mu())?;
    if estimate >= p0 - options.violation_tolerance {
        return Err(Error::PriorViolation {
            estimate,
            p0,
            group: None,
            node: None,
        });
    }
    Ok(EstimateReport {
        estimate,
        target_epsilon: epsilon,
        measured_p1: Some(outcome.p_hat),
        delta_hat: Some(estimate - p0),
        p0: Some(p0),
        mu: Some(prior.mu()),
        queries,
        repetitions: outcome.repetitions,
        phase_bits: outcome.phase_bits,
        backend: options.ae.backend,
        groups: Vec::new(),
    })
}

/// Plain amplitude estimation of `⟨ψ|Π|ψ⟩` on the unboosted walk.
pub fn standard_estimate<R: Rng + ?Sized>(
    prep: &StatePrepOracle,
    r_pi: &ReflectionOracle,
    epsilon: f64,
    failure: f64,
    settings: &AeSettings,
    rng: &mut R,
) -> Result<EstimateReport> {
    let walk = make_boosted_walk(prep, r_pi, 0)?;
    let counters = walk.counters();
    let before = snapshot(&counters);
    let outcome = amplitude_estimate(&walk, prep.state(), epsilon, failure, settings, rng)?;
    walk.charge_applications(outcome.walk_applications);
    walk.charge_boosted_state(outcome.state_preparations);
    Ok(EstimateReport {
        estimate: outcome.p_hat,
        target_epsilon: epsilon,
        measured_p1: Some(outcome.p_hat),
        delta_hat: None,
        p0: None,
        mu: Some(0),
        queries: query_delta(&before, &snapshot(&counters)),
        repetitions: outcome.repetitions,
        phase_bits: outcome.phase_bits,
        backend: settings.backend,
        groups: Vec::new(),
    })
}

/// Estimate `⟨ψ|A|ψ⟩` for a signed sum of convex projector groups, one AAE
/// run per group.
pub fn estimate_projector_sum(
    sum: &ProjectorSum,
    priors: &GroupPriors,
    prep: &StatePrepOracle,
    epsilon: f64,
    failure: f64,
    options: &AaeOptions,
    seed: u64,
) -> Result<EstimateReport> {
    let classical = ClassicalPriorSet::empty(sum.groups.len());
    estimate_groups(sum, &classical, priors, prep, epsilon, failure, options, seed)
}

/// As [`estimate_projector_sum`], with part of each group known classically.
/// Only the remaining projectors of each group are estimated on the quantum
/// side, with half the group's error budget.
#[allow(clippy::too_many_arguments)]
pub fn estimate_with_classical_priors(
    sum: &ProjectorSum,
    classical: &ClassicalPriorSet,
    priors: &GroupPriors,
    prep: &StatePrepOracle,
    epsilon: f64,
    failure: f64,
    options: &AaeOptions,
    seed: u64,
) -> Result<EstimateReport> {
    classical.validate(sum, epsilon)?;
    estimate_groups(sum, classical, priors, prep, epsilon, failure, options, seed)
}

struct GroupPlan {
    normalization: f64,
    epsilon_budget: f64,
    classical_part: f64,
    residual: Vec<usize>,
    residual_normalization: f64,
    residual_tolerance: f64,
}

fn plan_group(sum: &ProjectorSum, classical: &ClassicalGroup, j: usize, epsilon: f64, nhalf: f64) -> GroupPlan {
    let g = &sum.groups[j];
    let normalization = g.normalization();
    let epsilon_budget = if nhalf > 0.0 { normalization * epsilon / nhalf } else { 0.0 };
    let classical_part = classical
        .indices
        .iter()
        .zip(&classical.estimates)
        .map(|(&i, c)| g.betas[i] * c)
        .sum();
    let residual: Vec<usize> = (0..g.betas.len())
        .filter(|i| !classical.indices.contains(i) && g.betas[*i] > 0.0)
        .collect();
    let residual_normalization = residual.iter().map(|&i| g.betas[i].sqrt()).sum::<f64>().powi(2);
    let residual_tolerance = if classical.indices.is_empty() {
        epsilon_budget
    } else {
        epsilon_budget / 2.0
    };
    GroupPlan {
        normalization,
        epsilon_budget,
        classical_part,
        residual,
        residual_normalization,
        residual_tolerance,
    }
}

/// Tolerance on the success probability of group `group`'s quantum
/// residual, or `None` when every projector is known classically.
pub fn residual_probability_tolerance(sum: &ProjectorSum, classical: &ClassicalGroup, group: usize, epsilon: f64) -> Option<f64> {
    let (_, nhalf) = sum.beta_norms();
    let plan = plan_group(sum, classical, group, epsilon, nhalf);
    if plan.residual.is_empty() {
        None
    } else {
        Some(plan.residual_tolerance / plan.residual_normalization)
    }
}

#[allow(clippy::too_many_arguments)]
fn estimate_groups(
    sum: &ProjectorSum,
    classical: &ClassicalPriorSet,
    priors: &GroupPriors,
    prep: &StatePrepOracle,
    epsilon: f64,
    failure: f64,
    options: &AaeOptions,
    seed: u64,
) -> Result<EstimateReport> {
    if !(epsilon > 0.0) {
        return Err(Error::Argument(format!("epsilon {epsilon} must be positive")));
    }
    check_failure(failure)?;
    if prep.dim() != sum.dim() {
        return Err(Error::Shape("state preparation and operator dimensions differ".into()));
    }
    if priors.len() != sum.groups.len() || classical.groups.len() != sum.groups.len() {
        return Err(Error::Shape(format!(
            "{} groups but {} priors and {} classical entries",
            sum.groups.len(),
            priors.len(),
            classical.groups.len()
        )));
    }
    let (_, nhalf) = sum.beta_norms();
    let plans: Vec<GroupPlan> = (0..sum.groups.len())
        .map(|j| plan_group(sum, &classical.groups[j], j, epsilon, nhalf))
        .collect();
    let quantum_groups = plans.iter().filter(|p| !p.residual.is_empty()).count().max(1);
    let group_failure = failure / quantum_groups as f64;

    let mut all_counters: Vec<QueryCounter> = Vec::new();
    let mut estimate = sum.offset;
    let mut groups = Vec::with_capacity(plans.len());
    let mut repetitions = 0;
    let mut phase_bits = 0;
    for (j, plan) in plans.into_iter().enumerate() {
        let g = &sum.groups[j];
        let mut report = GroupReport {
            group: j,
            sign: g.sign,
            normalization: plan.normalization,
            residual_normalization: plan.residual_normalization,
            epsilon_budget: plan.epsilon_budget,
            classical_part: plan.classical_part,
            estimate: plan.classical_part,
            probability_estimate: None,
            probability_tolerance: None,
            mu: None,
            queries: BTreeMap::new(),
        };
        if !plan.residual.is_empty() {
            let betas: Vec<f64> = plan.residual.iter().map(|&i| g.betas[i]).collect();
            let refls: Vec<ReflectionOracle> = plan.residual.iter().map(|&i| g.reflections[i].clone()).collect();
            let enc = sqrt_encoding(&betas, &refls)?;
            let (combined, marked) = success_probability_instance(&enc, prep)?;
            let prior = Prior::new(priors.mu(j), group_failure)?;
            let tol = plan.residual_tolerance / plan.residual_normalization;
            let mut rng = rng_from_seed(derive_seed(seed, j as u64));
            let single = aae_estimate(&combined, &marked, &prior, tol, options, &mut rng).map_err(|e| e.in_group(j))?;
            let counters = {
                let a = combined.ledger();
                let b = marked.ledger();
                distinct_counters([a.as_slice(), b.as_slice()])
            };
            for c in counters {
                if !all_counters.iter().any(|o| o.same_as(&c)) {
                    all_counters.push(c);
                }
            }
            report.estimate += single.estimate * plan.residual_normalization;
            report.probability_estimate = Some(single.estimate);
            report.probability_tolerance = Some(tol);
            report.mu = Some(prior.mu());
            report.queries = single.queries;
            repetitions += single.repetitions;
            phase_bits = phase_bits.max(single.phase_bits);
        }
        estimate += g.sign * report.estimate;
        groups.push(report);
    }
    let mut queries: BTreeMap<String, u64> = BTreeMap::new();
    for gr in &groups {
        for (k, v) in &gr.queries {
            *queries.entry(k.clone()).or_insert(0) += v;
        }
    }
    // The prep counter is shared across groups; make sure it appears even
    // when every group was handled classically.
    queries.entry(prep.name().to_string()).or_insert(0);
    Ok(EstimateReport {
        estimate,
        target_epsilon: epsilon,
        measured_p1: None,
        delta_hat: None,
        p0: None,
        mu: None,
        queries,
        repetitions,
        phase_bits,
        backend: options.ae.backend,
        groups,
    })
}

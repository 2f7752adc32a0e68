//! Small built-in instances: single-qubit estimation problems, random
//! projector sums and gapped Hamiltonian paths.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::estimation::{
    canonical_p0, classical_tolerance, mu_for_upper_bound, residual_probability_tolerance, ClassicalGroup,
    ClassicalPriorSet, GroupPriors,
};
use crate::fermion::{sample_points, HamiltonianPath, OneBodyOperator, PathTerm, PauliString};
use crate::oracles::{ProjectorGroup, ProjectorSum, ReflectionOracle, StatePrepOracle};
use crate::quadrature::{NodePriors, ProjectorSide};
use crate::random::{self, rng_from_seed};
use crate::statevector::StateVector;

/// Single qubit with `⟨ψ|Π|ψ⟩ = p` for `Π = |1⟩⟨1|`.
pub fn single_qubit_instance(p: f64) -> Result<(StatePrepOracle, ReflectionOracle)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Range(format!("probability {p} outside [0, 1]")));
    }
    let state = StateVector::from_real(&[(1.0 - p).sqrt(), p.sqrt()])?;
    Ok((
        StatePrepOracle::from_state("state_prep", state),
        ReflectionOracle::marking("marked_reflection", vec![false, true])?,
    ))
}

/// Random state and rank-`rank` projector on `n_qubits` with marked
/// probability exactly `p`.
pub fn random_instance(n_qubits: usize, rank: usize, p: f64, seed: u64) -> Result<(StatePrepOracle, ReflectionOracle)> {
    let mut rng = rng_from_seed(seed);
    let proj = random::projector(n_qubits, rank, &mut rng)?;
    let psi = random::state_with_marked_probability(&proj, p, &mut rng)?;
    Ok((
        StatePrepOracle::from_state("state_prep", psi),
        ReflectionOracle::from_projector("marked_reflection", proj)?,
    ))
}

/// One point of the scaling study: the prior bound tracks `epsilon`
/// (`p̄ = 1.25ε`) and the true value sits at `P₀/2`.
#[derive(Debug, Clone)]
pub struct ScalingPoint {
    pub epsilon: f64,
    pub mu: u32,
    pub p0: f64,
    pub truth: f64,
}

pub fn scaling_point(epsilon: f64) -> Result<ScalingPoint> {
    let mu = mu_for_upper_bound(1.25 * epsilon)?;
    let p0 = canonical_p0(mu);
    Ok(ScalingPoint {
        epsilon,
        mu,
        p0,
        truth: p0 / 2.0,
    })
}

/// Random signed projector sum with `groups` groups of `terms` projectors
/// on `n_qubits`; projector ranks are drawn in `1..dim/2`.
pub fn random_projector_sum(n_qubits: usize, groups: usize, terms: usize, offset: f64, seed: u64) -> Result<ProjectorSum> {
    let mut rng = rng_from_seed(seed);
    let dim = 1usize << n_qubits;
    let mut out = Vec::with_capacity(groups);
    for j in 0..groups {
        let mut betas = Vec::with_capacity(terms);
        let mut refl = Vec::with_capacity(terms);
        for k in 0..terms {
            let rank = rng.random_range(1..=(dim / 2).max(1));
            let proj = random::projector(n_qubits, rank, &mut rng)?;
            betas.push(rng.random_range(0.1..1.0));
            refl.push(ReflectionOracle::from_projector(&format!("projector_{j}_{k}"), proj)?);
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        out.push(ProjectorGroup::new(sign, betas, refl)?);
    }
    ProjectorSum::new(dim, out, offset)
}

/// A state whose group success probabilities are all small, with priors
/// set to twice each group's true value.
pub fn low_weight_instance(sum: &ProjectorSum, seed: u64) -> Result<(StatePrepOracle, GroupPriors)> {
    let mut rng = rng_from_seed(seed);
    let n = sum.n_qubits();
    // Mostly the lowest eigenvector of Σ_jk Π_jk, so every projector is weakly populated.
    let mut total = DMatrix::zeros(sum.dim(), sum.dim());
    for g in &sum.groups {
        for r in &g.reflections {
            total += r.projector().matrix();
        }
    }
    let low = crate::statevector::exact_eigensolve(&crate::statevector::DenseOperator::hermitian(total)?)?.ground_state();
    let noise = random::state(n, &mut rng);
    let amps = low
        .amplitudes()
        .iter()
        .zip(noise.amplitudes())
        .map(|(a, b)| a + b * 0.05)
        .collect();
    let psi = StateVector::normalized(amps)?;
    let bounds = group_probabilities(sum, &psi)?
        .into_iter()
        .map(|p| (2.0 * p).clamp(1e-6, 0.25))
        .collect::<Vec<_>>();
    if group_probabilities(sum, &psi)?.iter().any(|&p| p > 0.125) {
        return Err(Error::Argument("instance has a group probability above 1/8".into()));
    }
    Ok((StatePrepOracle::from_state("state_prep", psi), GroupPriors::from_upper_bounds(&bounds)?))
}

/// `⟨ψ|A_j|ψ⟩/(Σ_k √β_jk)²` for every group.
pub fn group_probabilities(sum: &ProjectorSum, psi: &StateVector) -> Result<Vec<f64>> {
    sum.groups
        .iter()
        .map(|g| {
            let norm = g.normalization();
            Ok(if norm > 0.0 { g.expectation(psi)? / norm } else { 0.0 })
        })
        .collect()
}

/// Random real symmetric one-body matrix with entries in `[−1, 1]`.
pub fn random_one_body(n_orbitals: usize, seed: u64) -> Result<OneBodyOperator> {
    let mut rng = rng_from_seed(seed);
    let mut m = DMatrix::<f64>::zeros(n_orbitals, n_orbitals);
    for p in 0..n_orbitals {
        for q in p..n_orbitals {
            let v = rng.random_range(-1.0..1.0);
            m[(p, q)] = v;
            m[(q, p)] = v;
        }
    }
    OneBodyOperator::from_real(&m)
}

fn pauli_term(label: &str, c0: f64, c1: f64) -> Result<PathTerm> {
    let op = PauliString::parse(1.0, label)?.operator();
    if c1 == 0.0 {
        PathTerm::constant(label, c0, op)
    } else {
        PathTerm::linear(label, c0, c1, op)
    }
}

/// Shipped paths `H(x) = H₀ + xV` in Pauli form. Both keep a sampled gap of
/// at least 0.5 on `[−1, 1]`.
pub const TOY_PATHS: &[&str] = &["linear2", "linear3"];

pub fn toy_path(id: &str) -> Result<HamiltonianPath> {
    let terms: Vec<(&str, f64, f64)> = match id {
        "linear2" => vec![("ZI", 1.0, 0.0), ("IZ", 0.7, 0.0), ("XX", 0.0, 0.25), ("ZZ", 0.1, 0.15), ("XI", 0.0, 0.1)],
        "linear3" => vec![
            ("ZII", 1.0, 0.0),
            ("IZI", 0.8, 0.0),
            ("IIZ", 0.6, 0.0),
            ("XXI", 0.1, 0.15),
            ("IXX", 0.0, 0.1),
            ("ZIZ", 0.0, 0.1),
        ],
        other => {
            return Err(Error::Argument(format!(
                "unknown toy path {other:?}; available: {}",
                TOY_PATHS.join(", ")
            )))
        }
    };
    let path = HamiltonianPath::new(terms.into_iter().map(|(l, a, b)| pauli_term(l, a, b)).collect::<Result<_>>()?)?;
    path.validate()?;
    Ok(path)
}

/// Minimum gap of a path over 64 samples.
pub fn sampled_min_gap(path: &HamiltonianPath) -> Result<f64> {
    Ok(path.min_gap(64)?.1)
}

/// Node priors from the exact ground state at each node, as in
/// [`exact_priors`].
pub fn exact_node_priors(
    path: &HamiltonianPath,
    classical_threshold: f64,
) -> impl Fn(usize, f64, &ProjectorSum, f64) -> Result<NodePriors> + '_ {
    move |_, x, sum, epsilon| {
        let psi = path.spectrum(x)?.ground_state();
        let (classical, mus) = exact_prior_entries(sum, &psi, classical_threshold, epsilon)?;
        Ok(NodePriors {
            priors: GroupPriors::new(mus)?,
            classical,
        })
    }
}

/// For each involutory term, the projector side with the smaller
/// expectation in the ground state at `x`.
pub fn small_side_projectors(path: &HamiltonianPath, x: f64) -> Result<Vec<ProjectorSide>> {
    let psi = path.spectrum(x)?.ground_state();
    path.terms()
        .iter()
        .map(|t| {
            Ok(if t.is_involution() && psi.expectation_value(&t.operator)? > 0.0 {
                ProjectorSide::Minus
            } else {
                ProjectorSide::Plus
            })
        })
        .collect()
}

/// Largest residual success probability left to the quantum estimator;
/// twice it must stay a valid (≤ 1/4) prior bound.
const MAX_RESIDUAL_PROBABILITY: f64 = 0.125;

/// Priors for estimating `⟨ψ|A|ψ⟩` from the exact state. Projectors with
/// expectation above `classical_threshold` are known classically, and more
/// are moved to the classical side (largest first) while a group's residual
/// success probability exceeds 1/8. Each residual gets a bound of
/// `max(2p, τ)` with `τ` its probability tolerance, which keeps the
/// estimate inside the validity regime.
pub fn exact_priors(
    sum: &ProjectorSum,
    psi: &StateVector,
    classical_threshold: f64,
    epsilon: f64,
) -> Result<(ClassicalPriorSet, GroupPriors)> {
    let (entries, mus) = exact_prior_entries(sum, psi, classical_threshold, epsilon)?;
    Ok((ClassicalPriorSet::for_sum(sum, epsilon, entries)?, GroupPriors::new(mus)?))
}

type PriorEntries = (Vec<Vec<(usize, f64)>>, Vec<u32>);

fn exact_prior_entries(sum: &ProjectorSum, psi: &StateVector, classical_threshold: f64, epsilon: f64) -> Result<PriorEntries> {
    let mut entries = Vec::with_capacity(sum.groups.len());
    let mut mus = Vec::with_capacity(sum.groups.len());
    for (j, g) in sum.groups.iter().enumerate() {
        let values = g
            .reflections
            .iter()
            .map(|r| r.marked_probability(psi))
            .collect::<Result<Vec<_>>>()?;
        let live: Vec<usize> = (0..values.len()).filter(|&i| g.betas[i] > 0.0).collect();
        let mut chosen: Vec<usize> = live.iter().copied().filter(|&i| values[i] > classical_threshold).collect();
        let residual_probability = |chosen: &[usize]| {
            let rest: Vec<usize> = live.iter().copied().filter(|i| !chosen.contains(i)).collect();
            let weight: f64 = rest.iter().map(|&i| g.betas[i] * values[i]).sum();
            let norm = rest.iter().map(|&i| g.betas[i].sqrt()).sum::<f64>().powi(2);
            (rest, if norm > 0.0 { weight / norm } else { 0.0 })
        };
        loop {
            let (rest, p) = residual_probability(&chosen);
            if p <= MAX_RESIDUAL_PROBABILITY {
                break;
            }
            let top = rest
                .into_iter()
                .max_by(|&a, &b| values[a].total_cmp(&values[b]))
                .expect("p > 0 needs a residual projector");
            chosen.push(top);
        }
        // Estimates below their tolerance cannot be supplied classically.
        loop {
            let tol = classical_tolerance(sum, j, &chosen, epsilon);
            let before = chosen.len();
            chosen.retain(|&i| values[i] >= tol);
            if chosen.len() == before {
                break;
            }
        }
        chosen.sort_unstable();
        let cg = ClassicalGroup {
            tolerance: classical_tolerance(sum, j, &chosen, epsilon),
            indices: chosen.clone(),
            estimates: chosen.iter().map(|&i| values[i]).collect(),
        };
        let mu = match residual_probability_tolerance(sum, &cg, j, epsilon) {
            Some(tol) => {
                let (_, p) = residual_probability(&chosen);
                if p > MAX_RESIDUAL_PROBABILITY {
                    return Err(Error::Argument(format!(
                        "group {j}: residual probability {p} is too large for a canonical prior"
                    )));
                }
                mu_for_upper_bound((2.0 * p).max(tol).clamp(1e-9, 0.25))?
            }
            // Ignored: nothing left for the quantum estimator.
            None => 1,
        };
        mus.push(mu);
        entries.push(chosen.into_iter().map(|i| (i, values[i])).collect());
    }
    Ok((entries, mus))
}

/// Points where the path is sampled for drift checks.
pub fn path_samples() -> Vec<f64> {
    sample_points(64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_paths_are_gapped() {
        for id in TOY_PATHS {
            let path = toy_path(id).unwrap();
            assert!(sampled_min_gap(&path).unwrap() >= 0.5, "{id}");
        }
        assert!(toy_path("nope").is_err());
    }

    #[test]
    fn scaling_points_track_epsilon() {
        for k in 4..=12 {
            let eps = 2f64.powi(-k);
            let pt = scaling_point(eps).unwrap();
            assert!(pt.p0 >= 1.25 * eps);
            assert!(pt.p0 < 4.0 * eps);
            assert!(eps <= pt.p0 * pt.p0 / (pt.p0 - pt.truth));
        }
    }

    #[test]
    fn low_weight_instance_is_valid() {
        let sum = random_projector_sum(3, 2, 3, 0.0, 4).unwrap();
        let (prep, priors) = low_weight_instance(&sum, 5).unwrap();
        let probs = group_probabilities(&sum, prep.state()).unwrap();
        for (j, p) in probs.iter().enumerate() {
            assert!(*p <= priors.p0(j) / 2.0 + 1e-12);
        }
    }

    #[test]
    fn exact_priors_give_accurate_estimates() {
        use crate::estimation::{estimate_with_classical_priors, AaeOptions, Backend};
        let sum = random_projector_sum(2, 2, 3, 0.5, 11).unwrap();
        let psi = random::state(2, &mut rng_from_seed(12));
        let eps = 1e-4;
        let (classical, priors) = exact_priors(&sum, &psi, 0.3, eps).unwrap();
        let prep = StatePrepOracle::from_state("state_prep", psi.clone());
        let options = AaeOptions::with_backend(Backend::ExactSubspace);
        let rep = estimate_with_classical_priors(&sum, &classical, &priors, &prep, eps, 0.05, &options, 1).unwrap();
        assert!((rep.estimate - sum.expectation(&psi).unwrap()).abs() <= eps);
    }

    #[test]
    fn single_qubit_probability() {
        let (prep, r) = single_qubit_instance(0.2).unwrap();
        assert!((r.marked_probability(prep.state()).unwrap() - 0.2).abs() < 1e-15);
    }
}

//! Newton-Cotes integration of energy gradients along a Hamiltonian path.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, Schur};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::estimation::{
    estimate_with_classical_priors, mu_for_upper_bound, AaeOptions, ClassicalPriorSet, EstimateReport, GroupPriors,
};
use crate::fermion::{ground_state_prep, projector_drift_bound, HamiltonianPath};
use crate::oracles::{ProjectorGroup, ProjectorSum, ReflectionOracle};
use crate::random::derive_seed;
use crate::statevector::{exact_eigensolve, DenseOperator, OperatorKind, StateVector};

/// Largest rule order; equispaced weights become badly conditioned beyond it.
pub const MAX_RULE_ORDER: usize = 33;
/// Parameter of the contour used for the truncation bound.
pub const CONTOUR_RHO: f64 = 3.0;
/// Contour samples used when estimating `Γ`.
pub const CONTOUR_SAMPLES: usize = 256;
/// Safety factor applied to sampled `Γ` for Hamiltonian paths.
pub const GAMMA_SAFETY: f64 = 1.2;

/// `(N+1)`-point closed Newton-Cotes rule on `[−1, 1]`, `N` odd.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonCotesRule {
    pub n: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NewtonCotesRule {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n % 2 == 0 {
            return Err(Error::Argument(format!("rule order must be odd and positive, got {n}")));
        }
        if n > MAX_RULE_ORDER {
            return Err(Error::Resource(format!(
                "rule order {n} exceeds the stability cap {MAX_RULE_ORDER}"
            )));
        }
        let nodes = (0..=n).map(|k| -1.0 + 2.0 * k as f64 / n as f64).collect();
        let weights = exact_weights(n)
            .iter()
            .map(|w| w.to_f64().expect("weights are finite"))
            .collect();
        Ok(Self { n, nodes, weights })
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn abs_weight_sum(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    /// `Σ_k w_k F(x_k)` with compensated summation.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.weights.len() {
            return Err(Error::Shape(format!(
                "rule has {} nodes, got {} values",
                self.weights.len(),
                values.len()
            )));
        }
        let mut sum = 0.0;
        let mut carry = 0.0;
        for (w, v) in self.weights.iter().zip(values) {
            let y = w * v - carry;
            let t = sum + y;
            carry = (t - sum) - y;
            sum = t;
        }
        Ok(sum)
    }

    pub fn integrate_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        let values: Vec<f64> = self.nodes.iter().map(|&x| f(x)).collect();
        self.integrate(&values).expect("one value per node")
    }
}

pub fn newton_cotes_rule(n: usize) -> Result<NewtonCotesRule> {
    NewtonCotesRule::new(n)
}

/// Weights by exact integration of the Lagrange basis. With `x = −1 + 2t/n`
/// the basis polynomial of node `k` is `Π_{m≠k}(t − m)/(k − m)` on `t ∈ [0, n]`.
fn exact_weights(n: usize) -> Vec<BigRational> {
    let int = |v: i64| BigRational::from_integer(BigInt::from(v));
    // Coefficients of Π_m (t − m), lowest degree first.
    let mut full = vec![BigRational::one()];
    for m in 0..=n {
        full = mul_linear(&full, &int(-(m as i64)));
    }
    (0..=n)
        .map(|k| {
            let basis = divide_linear(&full, &int(k as i64));
            let mut denom = BigRational::one();
            for m in 0..=n {
                if m != k {
                    denom *= int(k as i64 - m as i64);
                }
            }
            // ∫_0^n t^d dt = n^{d+1}/(d+1)
            let nn = int(n as i64);
            let mut power = nn.clone();
            let mut integral = BigRational::zero();
            for (d, c) in basis.iter().enumerate() {
                integral += c * &power / int(d as i64 + 1);
                power *= &nn;
            }
            integral / denom * int(2) / nn
        })
        .collect()
}

/// `p(t)·(t + c)`.
fn mul_linear(p: &[BigRational], c: &BigRational) -> Vec<BigRational> {
    let mut out = vec![BigRational::zero(); p.len() + 1];
    for (i, a) in p.iter().enumerate() {
        out[i] += a * c;
        out[i + 1] += a;
    }
    out
}

/// `p(t)/(t − root)` for an exact root, by synthetic division.
fn divide_linear(p: &[BigRational], root: &BigRational) -> Vec<BigRational> {
    let deg = p.len() - 1;
    let mut out = vec![BigRational::zero(); deg];
    let mut acc = BigRational::zero();
    for i in (1..=deg).rev() {
        acc = &p[i] + acc * root;
        out[i - 1] = acc.clone();
    }
    debug_assert!((&p[0] + acc * root).is_zero());
    out
}

/// Bound on `max |∂_z E(z)|` over the contour `z = 1 + ρe^{iφ} + ρ⁻¹e^{−iφ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticityBudget {
    pub gamma_cap: f64,
    pub rho: f64,
}

impl AnalyticityBudget {
    pub fn new(gamma_cap: f64) -> Result<Self> {
        if !(gamma_cap >= 0.0 && gamma_cap.is_finite()) {
            return Err(Error::Argument(format!("Γ = {gamma_cap} must be finite and nonnegative")));
        }
        Ok(Self {
            gamma_cap,
            rho: CONTOUR_RHO,
        })
    }
}

pub fn contour_point(phi: f64) -> Complex64 {
    Complex64::new(1.0, 0.0) + Complex64::from_polar(CONTOUR_RHO, phi) + Complex64::from_polar(1.0 / CONTOUR_RHO, -phi)
}

pub fn contour_points(samples: usize) -> Vec<Complex64> {
    (0..samples)
        .map(|k| contour_point(2.0 * PI * k as f64 / samples as f64))
        .collect()
}

/// `max |f(z)|` over sampled contour points, for a known derivative `f = ∂_z E`.
pub fn gamma_from_derivative(f: impl Fn(Complex64) -> Complex64, samples: usize) -> f64 {
    contour_points(samples).into_iter().map(|z| f(z).norm()).fold(0.0, f64::max)
}

/// `|Δ_N| ≤ (5/3)·Γ·(3/4)^{N+1}`.
pub fn truncation_bound(n: usize, budget: &AnalyticityBudget) -> f64 {
    5.0 / 3.0 * budget.gamma_cap * 0.75f64.powi(n as i32 + 1)
}

/// Rule order and per-node tolerance for a total error of `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureParameters {
    pub n: usize,
    pub node_tolerance: f64,
    pub truncation: f64,
}

/// Smallest odd `N` with truncation at most `ε/2`, and a node tolerance that
/// keeps the propagated node error below `ε/2`. The tolerance is the smaller
/// of `log(4/3)·ε/(4·log(10Γ/(3ε)))` and `(ε/2)/max(Σ|w_k|, 2(N+1))`.
pub fn select_parameters(epsilon: f64, budget: &AnalyticityBudget) -> Result<QuadratureParameters> {
    if !(epsilon > 0.0) {
        return Err(Error::Argument(format!("epsilon {epsilon} must be positive")));
    }
    let gamma = budget.gamma_cap;
    let ratio = 10.0 * gamma / (3.0 * epsilon);
    let n = if ratio <= 1.0 {
        1
    } else {
        let n_min = ratio.ln() / (4.0f64 / 3.0).ln() - 1.0;
        let mut n = (n_min - 1e-9).ceil().max(1.0) as usize;
        if n % 2 == 0 {
            n += 1;
        }
        n
    };
    let rule = NewtonCotesRule::new(n)?;
    let formula = if ratio > 1.0 {
        (4.0f64 / 3.0).ln() * epsilon / (4.0 * ratio.ln())
    } else {
        f64::INFINITY
    };
    let propagation = 0.5 * epsilon / rule.abs_weight_sum().max(2.0 * (n as f64 + 1.0));
    Ok(QuadratureParameters {
        n,
        node_tolerance: formula.min(propagation),
        truncation: truncation_bound(n, budget),
    })
}

/// Eigenvalues of a general complex matrix (diagonal of its Schur form).
fn complex_eigenvalues(m: DMatrix<Complex64>) -> Vec<Complex64> {
    let (_, t) = Schur::new(m).unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

fn nearest(values: &[Complex64], target: Complex64) -> Complex64 {
    *values
        .iter()
        .min_by(|a, b| (*a - target).norm().total_cmp(&(*b - target).norm()))
        .expect("nonempty spectrum")
}

/// Follow the ground-energy branch of `H(z)` along a straight segment.
fn track_segment(path: &HamiltonianPath, from: Complex64, to: Complex64, start: Complex64, steps: usize) -> Complex64 {
    let mut value = start;
    let mut slope = Complex64::new(0.0, 0.0);
    for s in 1..=steps {
        let z = from + (to - from) * (s as f64 / steps as f64);
        let predicted = value + slope;
        let next = nearest(&complex_eigenvalues(path.hamiltonian_at(z)), predicted);
        slope = next - value;
        value = next;
    }
    value
}

/// Sample `|∂_z E(z)|` for the analytically continued ground energy around
/// the contour and return `1.2 × max`. Fails if the tracked branch does not
/// close, which signals a branch point inside the contour.
pub fn path_analyticity_budget(path: &HamiltonianPath) -> Result<AnalyticityBudget> {
    let e_mid = exact_eigensolve(&path.hamiltonian(0.0)?)?.ground_energy;
    let start = contour_point(PI);
    let mut value = track_segment(path, Complex64::new(0.0, 0.0), start, Complex64::new(e_mid, 0.0), 2000);
    let first = value;
    let substeps = 32;
    let h = 1e-5;
    let mut gamma: f64 = 0.0;
    let mut slope = Complex64::new(0.0, 0.0);
    for k in 0..CONTOUR_SAMPLES {
        let phi0 = PI + 2.0 * PI * k as f64 / CONTOUR_SAMPLES as f64;
        let z = contour_point(phi0);
        let plus = nearest(&complex_eigenvalues(path.hamiltonian_at(z + h)), value);
        let minus = nearest(&complex_eigenvalues(path.hamiltonian_at(z - h)), value);
        gamma = gamma.max(((plus - minus) / (2.0 * h)).norm());
        for s in 1..=substeps {
            let phi = phi0 + 2.0 * PI * s as f64 / (CONTOUR_SAMPLES * substeps) as f64;
            let next = nearest(&complex_eigenvalues(path.hamiltonian_at(contour_point(phi))), value + slope);
            slope = next - value;
            value = next;
        }
    }
    let scale = first.norm().max(1.0);
    if (value - first).norm() > 1e-6 * scale {
        return Err(Error::NonAnalytic(format!(
            "ground-energy branch does not close around the contour (moved from {first} to {value})"
        )));
    }
    AnalyticityBudget::new(GAMMA_SAFETY * gamma)
}

/// Which eigenspace projector of an involution `U` carries its weight:
/// `U = 2Π⁺ − I` or `U = I − 2Π⁻`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectorSide {
    Plus,
    Minus,
}

/// `G(x) = Σ_j α̇_j(x) U_j` and its split into signed projector groups.
/// Involutory terms contribute `2|α̇|·(I + U)/2` and an offset `−α̇`; other
/// terms are split over their eigenspaces.
pub fn gradient_operator(path: &HamiltonianPath, x: f64) -> Result<(DenseOperator, ProjectorSum)> {
    gradient_operator_with_sides(path, x, &[])
}

/// As [`gradient_operator`], with involutory term `j` expressed through
/// `sides[j]` (missing entries default to [`ProjectorSide::Plus`]).
pub fn gradient_operator_with_sides(path: &HamiltonianPath, x: f64, sides: &[ProjectorSide]) -> Result<(DenseOperator, ProjectorSum)> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::Range(format!("x = {x} outside [−1, 1]")));
    }
    let g = path.derivative(x)?;
    let dim = path.dim();
    let mut pos: (Vec<f64>, Vec<ReflectionOracle>) = (Vec::new(), Vec::new());
    let mut neg: (Vec<f64>, Vec<ReflectionOracle>) = (Vec::new(), Vec::new());
    let mut offset = 0.0;
    let mut push = |w: f64, name: String, proj: DMatrix<Complex64>| -> Result<()> {
        let r = ReflectionOracle::from_projector(&name, DenseOperator::with_kind_unchecked(proj, OperatorKind::Hermitian))?;
        let target = if w > 0.0 { &mut pos } else { &mut neg };
        target.0.push(w.abs());
        target.1.push(r);
        Ok(())
    };
    for (t, term) in path.terms().iter().enumerate() {
        let d = term.derivative(Complex64::new(x, 0.0)).re;
        if d == 0.0 {
            continue;
        }
        let u = term.operator.matrix();
        if term.is_involution() {
            let id = DMatrix::identity(dim, dim);
            match sides.get(t).copied().unwrap_or(ProjectorSide::Plus) {
                ProjectorSide::Plus => {
                    offset -= d;
                    push(2.0 * d, format!("{}_plus", term.label), (id + u).scale(0.5))?;
                }
                ProjectorSide::Minus => {
                    offset += d;
                    push(-2.0 * d, format!("{}_minus", term.label), (id - u).scale(0.5))?;
                }
            }
        } else {
            let spec = exact_eigensolve(&term.operator)?;
            let mut i = 0;
            while i < dim {
                let lambda = spec.eigenvalues[i];
                let mut j = i + 1;
                while j < dim && (spec.eigenvalues[j] - lambda).abs() < 1e-10 {
                    j += 1;
                }
                if lambda.abs() > 1e-14 {
                    let cols = spec.eigenvectors.columns(i, j - i);
                    let proj = &cols * cols.adjoint();
                    push(d * lambda, format!("{}_eig{i}", term.label), proj)?;
                }
                i = j;
            }
        }
    }
    let sum = ProjectorSum::new(
        dim,
        vec![
            ProjectorGroup::new(1.0, pos.0, pos.1)?,
            ProjectorGroup::new(-1.0, neg.0, neg.1)?,
        ],
        offset,
    )?;
    Ok((g, sum))
}

/// Largest deviation between `⟨ψ₀(x)|G(x)|ψ₀(x)⟩` and centered finite
/// differences of the exact ground energy, over `samples` interior points.
pub fn hellmann_feynman_deviation(path: &HamiltonianPath, samples: usize, h: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..samples {
        let x = -1.0 + h + (2.0 - 2.0 * h) * k as f64 / (samples.max(2) - 1) as f64;
        let spec = exact_eigensolve(&path.hamiltonian(x)?)?;
        let g = path.derivative(x)?;
        let hf = spec.ground_state().expectation_value(&g)?;
        let fd = (exact_eigensolve(&path.hamiltonian(x + h)?)?.ground_energy
            - exact_eigensolve(&path.hamiltonian(x - h)?)?.ground_energy)
            / (2.0 * h);
        worst = worst.max((hf - fd).abs());
    }
    Ok(worst)
}

/// Priors for one quadrature node: amplification rounds per group and
/// classical estimates `(projector index, value)` per group.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePriors {
    pub priors: GroupPriors,
    pub classical: Vec<Vec<(usize, f64)>>,
}

/// Supplies priors for node `k` at `x` given the node's decomposition and
/// the accuracy `epsilon` the node will be estimated to.
pub trait NodePriorSource {
    fn node_priors(&self, node: usize, x: f64, sum: &ProjectorSum, epsilon: f64) -> Result<NodePriors>;
}

impl<F> NodePriorSource for F
where
    F: Fn(usize, f64, &ProjectorSum, f64) -> Result<NodePriors>,
{
    fn node_priors(&self, node: usize, x: f64, sum: &ProjectorSum, epsilon: f64) -> Result<NodePriors> {
        self(node, x, sum, epsilon)
    }
}

#[derive(Debug, Clone)]
pub struct EnergyDiffOptions {
    pub aae: AaeOptions,
    /// `Γ` if known; otherwise estimated from the path.
    pub gamma: Option<f64>,
    /// Seed node `k+1` priors from the node `k` estimate plus the drift bound
    /// when that bound stays canonical.
    pub propagate_priors: bool,
    /// Reference state for ground-state preparation; defaults to the
    /// ground state at `x = −1`.
    pub reference: Option<StateVector>,
    pub eps_psi: f64,
    /// Projector side per path term; see [`gradient_operator_with_sides`].
    pub projector_sides: Vec<ProjectorSide>,
}

impl Default for EnergyDiffOptions {
    fn default() -> Self {
        Self {
            aae: AaeOptions::default(),
            gamma: None,
            propagate_priors: true,
            reference: None,
            eps_psi: 1e-8,
            projector_sides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDiffReport {
    pub estimate: f64,
    pub e_start: f64,
    pub node_values: Vec<f64>,
    pub node_reports: Vec<EstimateReport>,
    pub rule: NewtonCotesRule,
    pub truncation_bound: f64,
    pub node_tolerance: f64,
    pub gamma_cap: f64,
    /// Groups whose prior came from the previous node rather than the source.
    pub propagated_priors: usize,
    pub total_queries: BTreeMap<String, u64>,
}

struct GroupMemory {
    residual: Vec<usize>,
    betas: Vec<f64>,
    upper: f64,
}

fn residual_of(sum: &ProjectorSum, group: usize, classical: &[(usize, f64)]) -> (Vec<usize>, Vec<f64>) {
    let g = &sum.groups[group];
    let residual: Vec<usize> = (0..g.betas.len())
        .filter(|i| g.betas[*i] > 0.0 && !classical.iter().any(|(c, _)| c == i))
        .collect();
    let betas = residual.iter().map(|&i| g.betas[i]).collect();
    (residual, betas)
}

/// `E(1)` from `E(−1)` by integrating `⟨ψ₀(x)|G(x)|ψ₀(x)⟩` with a
/// Newton-Cotes rule, each node estimated with classical and amplified priors.
pub fn energy_difference(
    path: &HamiltonianPath,
    e_start: f64,
    source: &dyn NodePriorSource,
    epsilon: f64,
    failure: f64,
    options: &EnergyDiffOptions,
    seed: u64,
) -> Result<EnergyDiffReport> {
    if !(failure > 0.0 && failure < 1.0) {
        return Err(Error::Argument(format!("failure probability {failure} outside (0, 1)")));
    }
    path.validate()?;
    let (x_min, gap) = path.min_gap(64)?;
    if gap <= 1e-6 {
        return Err(Error::GapCollapse { x: x_min, gap });
    }
    let budget = match options.gamma {
        Some(g) => AnalyticityBudget::new(g)?,
        None => path_analyticity_budget(path)?,
    };
    let params = select_parameters(epsilon, &budget)?;
    let rule = NewtonCotesRule::new(params.n)?;
    let node_failure = failure / rule.nodes.len() as f64;
    let reference = match &options.reference {
        Some(r) => r.clone(),
        None => path.spectrum(-1.0)?.ground_state(),
    };
    let drift = projector_drift_bound(path.derivative_norm_bound(64)? * 2.0 / params.n as f64, gap)?;

    let mut node_values = Vec::with_capacity(rule.nodes.len());
    let mut node_reports = Vec::with_capacity(rule.nodes.len());
    let mut memory: Vec<Option<GroupMemory>> = Vec::new();
    let mut propagated = 0;
    let mut total: BTreeMap<String, u64> = BTreeMap::new();
    for (k, &x) in rule.nodes.iter().enumerate() {
        let h = path.hamiltonian(x)?;
        let (prep, _) = ground_state_prep(&h, &reference, Some(path.alpha_norm(x)), options.eps_psi).map_err(|e| match e {
            Error::Degenerate { gap, .. } => Error::GapCollapse { x, gap },
            other => other,
        })?;
        let (_, sum) = gradient_operator_with_sides(path, x, &options.projector_sides)?;
        let supplied = source.node_priors(k, x, &sum, params.node_tolerance)?;
        let mut mus = supplied.priors.mus().to_vec();
        if options.propagate_priors {
            for (j, m) in memory.iter().enumerate() {
                let (Some(m), Some(entries)) = (m, supplied.classical.get(j)) else { continue };
                if j >= mus.len() {
                    continue;
                }
                let (residual, betas) = residual_of(&sum, j, entries);
                let same = residual == m.residual
                    && betas.len() == m.betas.len()
                    && betas.iter().zip(&m.betas).all(|(a, b)| (a - b).abs() < 1e-12);
                if !same || betas.is_empty() {
                    continue;
                }
                let norm = betas.iter().map(|b| b.sqrt()).sum::<f64>().powi(2);
                let moved = betas.iter().sum::<f64>() * drift / norm;
                // Doubling keeps the true value at most half the bound.
                let bound = 2.0 * (m.upper + moved);
                if bound <= 0.25 {
                    mus[j] = mu_for_upper_bound(bound)?;
                    propagated += 1;
                }
            }
        }
        let priors = GroupPriors::new(mus)?;
        let classical = ClassicalPriorSet::for_sum(&sum, params.node_tolerance, supplied.classical.clone())?;
        let report = estimate_with_classical_priors(
            &sum,
            &classical,
            &priors,
            &prep,
            params.node_tolerance,
            node_failure,
            &options.aae,
            derive_seed(seed, k as u64),
        )
        .map_err(|e| e.at_node(k))?;
        memory = report
            .groups
            .iter()
            .map(|gr| {
                let p = gr.probability_estimate?;
                let tol = gr.probability_tolerance?;
                let (residual, betas) = residual_of(&sum, gr.group, &supplied.classical[gr.group]);
                Some(GroupMemory {
                    residual,
                    betas,
                    upper: p + tol,
                })
            })
            .collect();
        for (name, v) in &report.queries {
            *total.entry(name.clone()).or_insert(0) += v;
        }
        node_values.push(report.estimate);
        node_reports.push(report);
    }
    let integral = rule.integrate(&node_values)?;
    Ok(EnergyDiffReport {
        estimate: e_start + integral,
        e_start,
        node_values,
        node_reports,
        truncation_bound: params.truncation,
        node_tolerance: params.node_tolerance,
        gamma_cap: budget.gamma_cap,
        rule,
        propagated_priors: propagated,
        total_queries: total,
    })
}

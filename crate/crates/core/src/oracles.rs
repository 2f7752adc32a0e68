//! Query-counted oracles and the walk-operator algebra.
//!
//! Every oracle owns a shared counter. Cloning an oracle shares the counter,
//! so composite circuits built from clones charge the same tally. An oracle
//! may also carry a ledger of downstream charges: a reflection built from a
//! state-prep oracle charges that oracle twice per use, a composite state
//! preparation charges each of its constituents, and so on.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::statevector::{DenseOperator, OperatorKind, StateVector, MAX_QUBITS};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Named, shareable query tally.
#[derive(Debug, Clone)]
pub struct QueryCounter {
    name: Arc<str>,
    count: Arc<AtomicU64>,
}

impl QueryCounter {
    pub fn new(name: &str) -> Self {
        Self {
            name: Arc::from(name),
            count: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn get(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }

    pub fn add(&self, n: u64) {
        self.count.fetch_add(n, Ordering::Relaxed);
    }

    pub fn same_as(&self, other: &QueryCounter) -> bool {
        Arc::ptr_eq(&self.count, &other.count)
    }
}

/// Counters charged per oracle use, with multiplicities.
pub type Ledger = Vec<(QueryCounter, u64)>;

fn charge_ledger(ledger: &[(QueryCounter, u64)], times: u64) {
    for (counter, k) in ledger {
        counter.add(k * times);
    }
}

fn scaled(ledger: &[(QueryCounter, u64)], factor: u64) -> Ledger {
    ledger.iter().map(|(c, k)| (c.clone(), k * factor)).collect()
}

/// Distinct counters (by identity) appearing in a set of ledgers.
pub fn distinct_counters<'a>(ledgers: impl IntoIterator<Item = &'a [(QueryCounter, u64)]>) -> Vec<QueryCounter> {
    let mut out: Vec<QueryCounter> = Vec::new();
    for ledger in ledgers {
        for (c, _) in ledger {
            if !out.iter().any(|o| o.same_as(c)) {
                out.push(c.clone());
            }
        }
    }
    out
}

/// Current totals keyed by counter name; counters sharing a name are summed.
pub fn snapshot(counters: &[QueryCounter]) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for c in counters {
        *out.entry(c.name().to_string()).or_insert(0) += c.get();
    }
    out
}

/// `after − before`, keyed by name.
pub fn query_delta(before: &BTreeMap<String, u64>, after: &BTreeMap<String, u64>) -> BTreeMap<String, u64> {
    after
        .iter()
        .map(|(k, v)| (k.clone(), v - before.get(k).copied().unwrap_or(0)))
        .collect()
}

/// Vector-in, vector-out linear map; lets estimators run on operators that
/// are never materialized densely.
pub trait LinearMap {
    fn dim(&self) -> usize;
    fn apply_vec(&self, v: &DVector<Complex64>) -> DVector<Complex64>;
}

impl LinearMap for DenseOperator {
    fn dim(&self) -> usize {
        DenseOperator::dim(self)
    }

    fn apply_vec(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        self.matrix() * v
    }
}

/// Unitary with designated output state `O|0…0⟩`.
#[derive(Debug, Clone)]
pub struct StatePrepOracle {
    state: StateVector,
    unitary: Arc<OnceLock<DenseOperator>>,
    counter: QueryCounter,
    charges: Ledger,
}

impl StatePrepOracle {
    pub fn from_unitary(name: &str, unitary: DenseOperator) -> Result<Self> {
        if unitary.kind() != OperatorKind::Unitary {
            return Err(Error::Argument(
                "state preparation needs an operator flagged unitary".into(),
            ));
        }
        let col: Vec<Complex64> = unitary.matrix().column(0).iter().copied().collect();
        let state = StateVector::from_amplitudes(col)?;
        let cell = OnceLock::new();
        let _ = cell.set(unitary);
        Ok(Self {
            state,
            unitary: Arc::new(cell),
            counter: QueryCounter::new(name),
            charges: Vec::new(),
        })
    }

    /// Oracle preparing `state`; its unitary is a Householder completion
    /// built on first request.
    pub fn from_state(name: &str, state: StateVector) -> Self {
        Self {
            state,
            unitary: Arc::new(OnceLock::new()),
            counter: QueryCounter::new(name),
            charges: Vec::new(),
        }
    }

    /// Add downstream charges incurred on every use of this oracle.
    pub fn with_charges(mut self, extra: Ledger) -> Self {
        self.charges.extend(extra);
        self
    }

    pub fn name(&self) -> &str {
        self.counter.name()
    }

    pub fn counter(&self) -> &QueryCounter {
        &self.counter
    }

    pub fn queries(&self) -> u64 {
        self.counter.get()
    }

    pub fn n_qubits(&self) -> usize {
        self.state.n_qubits()
    }

    pub fn dim(&self) -> usize {
        self.state.dim()
    }

    /// The prepared state. Reading it is free; it models knowledge of the
    /// oracle, not a query.
    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn unitary(&self) -> &DenseOperator {
        self.unitary.get_or_init(|| householder_completion(&self.state))
    }

    /// Everything charged by one use: this oracle plus its downstream ledger.
    pub fn ledger(&self) -> Ledger {
        let mut out = vec![(self.counter.clone(), 1)];
        out.extend(self.charges.iter().cloned());
        out
    }

    pub fn charge(&self, times: u64) {
        charge_ledger(&self.ledger(), times);
    }

    pub fn apply(&self, input: &StateVector) -> Result<StateVector> {
        let out = input.apply(self.unitary())?;
        self.charge(1);
        Ok(out)
    }

    pub fn apply_inverse(&self, input: &StateVector) -> Result<StateVector> {
        let out = input.apply(&self.unitary().adjoint())?;
        self.charge(1);
        Ok(out)
    }
}

/// Unitary whose first column is `state`: a Householder reflector with the
/// phase of column 0 fixed.
pub fn householder_completion(state: &StateVector) -> DenseOperator {
    let dim = state.dim();
    let psi = state.to_dvector();
    let a0 = psi[0];
    let phase = if a0.norm() > 0.0 { a0 / a0.norm() } else { ONE };
    let mut v = psi.clone();
    v[0] -= phase;
    let vv = v.norm_squared();
    let mut u = DMatrix::<Complex64>::identity(dim, dim);
    if vv > 1e-28 {
        u -= (&v * v.adjoint()).scale(2.0 / vv);
    }
    for r in 0..dim {
        u[(r, 0)] *= phase;
    }
    DenseOperator::with_kind_unchecked(u, OperatorKind::Unitary)
}

#[derive(Debug, Clone)]
enum ProjectorForm {
    Dense(DenseOperator),
    /// `|v⟩⟨v|`.
    Rank1(DVector<Complex64>),
    /// Diagonal in the computational basis.
    Marked(Arc<[bool]>),
}

/// `R = I − 2Π` for an orthogonal projector `Π`.
#[derive(Debug, Clone)]
pub struct ReflectionOracle {
    form: ProjectorForm,
    counter: QueryCounter,
    charges: Ledger,
}

impl ReflectionOracle {
    pub fn from_projector(name: &str, projector: DenseOperator) -> Result<Self> {
        if !projector.is_projector(1e-10) {
            return Err(Error::Argument("operator is not an orthogonal projector".into()));
        }
        Ok(Self::new(name, ProjectorForm::Dense(projector.reflagged(OperatorKind::Hermitian))))
    }

    pub fn from_reflection(name: &str, reflection: DenseOperator) -> Result<Self> {
        let dim = reflection.dim();
        let proj = (DMatrix::identity(dim, dim) - reflection.matrix()).scale(0.5);
        Self::from_projector(name, DenseOperator::general(proj)?)
    }

    /// Reflection about the computational basis states selected by `marked`.
    pub fn marking(name: &str, marked: Vec<bool>) -> Result<Self> {
        if marked.len() < 2 || !marked.len().is_power_of_two() {
            return Err(Error::Shape(format!(
                "marking mask of length {} is not a power of two",
                marked.len()
            )));
        }
        Ok(Self::new(name, ProjectorForm::Marked(marked.into())))
    }

    fn new(name: &str, form: ProjectorForm) -> Self {
        Self {
            form,
            counter: QueryCounter::new(name),
            charges: Vec::new(),
        }
    }

    pub fn with_charges(mut self, extra: Ledger) -> Self {
        self.charges.extend(extra);
        self
    }

    pub fn name(&self) -> &str {
        self.counter.name()
    }

    pub fn counter(&self) -> &QueryCounter {
        &self.counter
    }

    pub fn queries(&self) -> u64 {
        self.counter.get()
    }

    pub fn ledger(&self) -> Ledger {
        let mut out = vec![(self.counter.clone(), 1)];
        out.extend(self.charges.iter().cloned());
        out
    }

    pub fn charge(&self, times: u64) {
        charge_ledger(&self.ledger(), times);
    }

    pub fn dim(&self) -> usize {
        match &self.form {
            ProjectorForm::Dense(p) => p.dim(),
            ProjectorForm::Rank1(v) => v.len(),
            ProjectorForm::Marked(m) => m.len(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn apply_projector(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        match &self.form {
            ProjectorForm::Dense(p) => p.matrix() * v,
            ProjectorForm::Rank1(u) => u * u.dotc(v),
            ProjectorForm::Marked(m) => {
                DVector::from_iterator(v.len(), v.iter().zip(m.iter()).map(|(a, &k)| if k { *a } else { ZERO }))
            }
        }
    }

    pub fn apply_reflection(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        v - self.apply_projector(v).scale(2.0)
    }

    pub fn projector(&self) -> DenseOperator {
        let m = match &self.form {
            ProjectorForm::Dense(p) => return p.clone(),
            ProjectorForm::Rank1(u) => u * u.adjoint(),
            ProjectorForm::Marked(mask) => {
                DMatrix::from_diagonal(&DVector::from_iterator(
                    mask.len(),
                    mask.iter().map(|&k| if k { ONE } else { ZERO }),
                ))
            }
        };
        DenseOperator::with_kind_unchecked(m, OperatorKind::Hermitian)
    }

    /// The reflection as a dense matrix; hermitian and unitary, flagged unitary.
    pub fn reflection(&self) -> DenseOperator {
        let dim = self.dim();
        let r = DMatrix::identity(dim, dim) - self.projector().matrix().scale(2.0);
        DenseOperator::with_kind_unchecked(r, OperatorKind::Unitary)
    }

    /// ⟨ψ|Π|ψ⟩, computed exactly without charging queries.
    pub fn marked_probability(&self, state: &StateVector) -> Result<f64> {
        if state.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "state of dimension {} against projector of dimension {}",
                state.dim(),
                self.dim()
            )));
        }
        let v = state.to_dvector();
        Ok(v.dotc(&self.apply_projector(&v)).re.clamp(0.0, 1.0))
    }

    /// Apply the reflection to a state and charge one use.
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        if state.dim() != self.dim() {
            return Err(Error::Shape("reflection and state dimensions differ".into()));
        }
        let out = self.apply_reflection(&state.to_dvector());
        self.charge(1);
        StateVector::from_amplitudes(out.as_slice().to_vec())
    }
}

/// `R_ψ = I − 2 O_ψ|0⟩⟨0|O_ψ†`. Each use also charges the prep oracle twice
/// (one forward and one inverse application).
pub fn reflection_from_prep(prep: &StatePrepOracle) -> ReflectionOracle {
    let name = format!("{}_reflection", prep.name());
    ReflectionOracle::new(&name, ProjectorForm::Rank1(prep.state().to_dvector()))
        .with_charges(scaled(&prep.ledger(), 2))
}

/// Boosted walk `W′ = −(I − 2φφ†)(I − 2Π)` with `φ = W^μ O_ψ|0⟩`. With
/// `μ = 0` this is the plain walk `W = −R_ψ R_Π`.
#[derive(Debug, Clone)]
pub struct WalkOperator {
    prep: StatePrepOracle,
    r_pi: ReflectionOracle,
    mu: u32,
    boosted: DVector<Complex64>,
}

/// `W = −R_ψ R_Π`; each application costs 2 prep and 1 reflection query.
pub fn make_walk(prep: &StatePrepOracle, r_pi: &ReflectionOracle) -> Result<WalkOperator> {
    make_boosted_walk(prep, r_pi, 0)
}

/// `W′` built from the amplified preparation `W^μ O_ψ`; each application
/// costs `2μ+2` prep and `μ+1` reflection queries.
pub fn make_boosted_walk(prep: &StatePrepOracle, r_pi: &ReflectionOracle, mu: u32) -> Result<WalkOperator> {
    if prep.dim() != r_pi.dim() {
        return Err(Error::Shape(format!(
            "prep oracle of dimension {} with reflection of dimension {}",
            prep.dim(),
            r_pi.dim()
        )));
    }
    let psi = prep.state().to_dvector();
    let mut boosted = psi.clone();
    for _ in 0..mu {
        boosted = plain_walk_step(&psi, r_pi, &boosted);
    }
    Ok(WalkOperator {
        prep: prep.clone(),
        r_pi: r_pi.clone(),
        mu,
        boosted,
    })
}

/// `W v = −R_ψ R_Π v`.
fn plain_walk_step(psi: &DVector<Complex64>, r_pi: &ReflectionOracle, v: &DVector<Complex64>) -> DVector<Complex64> {
    let u = r_pi.apply_reflection(v);
    let overlap = psi.dotc(&u);
    psi * (overlap * 2.0) - u
}

impl WalkOperator {
    pub fn mu(&self) -> u32 {
        self.mu
    }

    pub fn prep(&self) -> &StatePrepOracle {
        &self.prep
    }

    pub fn reflection(&self) -> &ReflectionOracle {
        &self.r_pi
    }

    /// `W^μ O_ψ|0⟩`, the state amplitude estimation runs on.
    pub fn boosted_state(&self) -> StateVector {
        StateVector::normalized(self.boosted.as_slice().to_vec()).expect("walk preserves the norm")
    }

    /// Marked probability of the boosted state, computed exactly.
    pub fn boosted_probability(&self) -> f64 {
        self.boosted.dotc(&self.r_pi.apply_projector(&self.boosted)).re
    }

    /// Charges of one `W′` application.
    pub fn ledger_per_application(&self) -> Ledger {
        let mu = self.mu as u64;
        let mut out = scaled(&self.prep.ledger(), 2 * mu + 2);
        out.extend(scaled(&self.r_pi.ledger(), mu + 1));
        out
    }

    /// Charges of preparing the boosted state once.
    pub fn ledger_boosted_state(&self) -> Ledger {
        let mu = self.mu as u64;
        let mut out = scaled(&self.prep.ledger(), 2 * mu + 1);
        if mu > 0 {
            out.extend(scaled(&self.r_pi.ledger(), mu));
        }
        out
    }

    pub fn charge_applications(&self, times: u64) {
        charge_ledger(&self.ledger_per_application(), times);
    }

    pub fn charge_boosted_state(&self, times: u64) {
        charge_ledger(&self.ledger_boosted_state(), times);
    }

    /// Every counter this walk can charge.
    pub fn counters(&self) -> Vec<QueryCounter> {
        let a = self.prep.ledger();
        let b = self.r_pi.ledger();
        distinct_counters([a.as_slice(), b.as_slice()])
    }

    /// Apply the walk to a state and charge one application.
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        if state.dim() != self.dim() {
            return Err(Error::Shape("walk and state dimensions differ".into()));
        }
        let out = self.apply_vec(&state.to_dvector());
        self.charge_applications(1);
        StateVector::from_amplitudes(out.as_slice().to_vec())
    }

    /// `W′ = −R_Π + 2φ(R_Πφ)†` as a dense unitary.
    pub fn to_dense(&self) -> DenseOperator {
        let r = self.r_pi.reflection();
        let r_phi = r.matrix() * &self.boosted;
        let m = -r.matrix() + (&self.boosted * r_phi.adjoint()).scale(2.0);
        DenseOperator::with_kind_unchecked(m, OperatorKind::Unitary)
    }
}

impl LinearMap for WalkOperator {
    fn dim(&self) -> usize {
        self.boosted.len()
    }

    fn apply_vec(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let u = self.r_pi.apply_reflection(v);
        let overlap = self.boosted.dotc(&u);
        &self.boosted * (overlap * 2.0) - u
    }
}

/// LCU block encoding `U_A = PREPARE† · SELECT · PREPARE` of `A = Σ α_j U_j`.
/// The ancilla register sits above the system qubits.
#[derive(Debug, Clone)]
pub struct BlockEncodedOperator {
    prepare: DenseOperator,
    select: DenseOperator,
    alpha: f64,
    system_qubits: usize,
    ancilla_qubits: usize,
    prepare_counter: QueryCounter,
    select_counter: QueryCounter,
}

impl BlockEncodedOperator {
    /// `coefficients` must be positive; fold signs and phases into the unitaries.
    pub fn new(name: &str, coefficients: &[f64], unitaries: &[DenseOperator]) -> Result<Self> {
        if coefficients.is_empty() || coefficients.len() != unitaries.len() {
            return Err(Error::Shape(
                "need one positive coefficient per unitary".into(),
            ));
        }
        if coefficients.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::Argument("block-encoding coefficients must be positive".into()));
        }
        let sys_dim = unitaries[0].dim();
        if unitaries.iter().any(|u| u.dim() != sys_dim) {
            return Err(Error::Shape("unitaries act on different dimensions".into()));
        }
        if unitaries.iter().any(|u| u.kind() != OperatorKind::Unitary) {
            return Err(Error::Argument("block encodings need unitary terms".into()));
        }
        let system_qubits = sys_dim.trailing_zeros() as usize;
        let ancilla_qubits = register_width(coefficients.len());
        if system_qubits + ancilla_qubits > MAX_QUBITS {
            return Err(Error::Resource("block encoding exceeds the qubit budget".into()));
        }
        let alpha: f64 = coefficients.iter().sum();
        let anc_dim = 1usize << ancilla_qubits;
        let mut amps = vec![ZERO; anc_dim];
        for (a, &c) in amps.iter_mut().zip(coefficients) {
            *a = Complex64::new((c / alpha).sqrt(), 0.0);
        }
        let prepare = householder_completion(&StateVector::normalized(amps)?);
        let full = anc_dim * sys_dim;
        let mut select = DMatrix::<Complex64>::zeros(full, full);
        for j in 0..anc_dim {
            let block = j * sys_dim;
            match unitaries.get(j) {
                Some(u) => select.view_mut((block, block), (sys_dim, sys_dim)).copy_from(u.matrix()),
                None => select
                    .view_mut((block, block), (sys_dim, sys_dim))
                    .fill_with_identity(),
            }
        }
        Ok(Self {
            prepare,
            select: DenseOperator::with_kind_unchecked(select, OperatorKind::Unitary),
            alpha,
            system_qubits,
            ancilla_qubits,
            prepare_counter: QueryCounter::new(&format!("prepare_{name}")),
            select_counter: QueryCounter::new(&format!("select_{name}")),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn prepare(&self) -> &DenseOperator {
        &self.prepare
    }

    pub fn select(&self) -> &DenseOperator {
        &self.select
    }

    pub fn prepare_counter(&self) -> &QueryCounter {
        &self.prepare_counter
    }

    pub fn select_counter(&self) -> &QueryCounter {
        &self.select_counter
    }

    pub fn ancilla_qubits(&self) -> usize {
        self.ancilla_qubits
    }

    /// `(PREPARE† ⊗ 1) · SELECT · (PREPARE ⊗ 1)`; charges 2 prepare and 1 select.
    pub fn unitary(&self) -> DenseOperator {
        let sys = DenseOperator::identity(1 << self.system_qubits);
        let prep = self.prepare.kron(&sys);
        let m = prep.matrix().adjoint() * self.select.matrix() * prep.matrix();
        self.prepare_counter.add(2);
        self.select_counter.add(1);
        DenseOperator::with_kind_unchecked(m, OperatorKind::Unitary)
    }

    /// Top-left system block of the encoding unitary, which equals `A/α`.
    pub fn encoded_block(&self) -> DMatrix<Complex64> {
        let sys_dim = 1 << self.system_qubits;
        self.unitary().matrix().view((0, 0), (sys_dim, sys_dim)).into_owned()
    }
}

/// One signed convex group of a projector sum.
#[derive(Debug, Clone)]
pub struct ProjectorGroup {
    pub sign: f64,
    pub betas: Vec<f64>,
    pub reflections: Vec<ReflectionOracle>,
}

impl ProjectorGroup {
    pub fn new(sign: f64, betas: Vec<f64>, reflections: Vec<ReflectionOracle>) -> Result<Self> {
        if sign != 1.0 && sign != -1.0 {
            return Err(Error::Argument(format!("group sign must be ±1, got {sign}")));
        }
        if betas.len() != reflections.len() {
            return Err(Error::Shape("one coefficient per projector is required".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
            return Err(Error::Argument(format!(
                "group coefficients must be finite and nonnegative, got {b}"
            )));
        }
        Ok(Self {
            sign,
            betas,
            reflections,
        })
    }

    /// `(Σ_k √β_k)²`.
    pub fn normalization(&self) -> f64 {
        self.betas.iter().map(|b| b.sqrt()).sum::<f64>().powi(2)
    }

    pub fn beta_sum(&self) -> f64 {
        self.betas.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.iter().all(|&b| b == 0.0)
    }

    /// `Σ_k β_k⟨ψ|Π_k|ψ⟩` (unsigned).
    pub fn expectation(&self, state: &StateVector) -> Result<f64> {
        let mut acc = 0.0;
        for (b, r) in self.betas.iter().zip(&self.reflections) {
            acc += b * r.marked_probability(state)?;
        }
        Ok(acc)
    }
}

/// `A = Σ_j s_j Σ_k β_jk Π_jk + offset·I`.
#[derive(Debug, Clone)]
pub struct ProjectorSum {
    pub groups: Vec<ProjectorGroup>,
    pub offset: f64,
    dim: usize,
}

impl ProjectorSum {
    pub fn new(dim: usize, groups: Vec<ProjectorGroup>, offset: f64) -> Result<Self> {
        for g in &groups {
            if let Some(r) = g.reflections.iter().find(|r| r.dim() != dim) {
                return Err(Error::Shape(format!(
                    "projector of dimension {} in a sum of dimension {dim}",
                    r.dim()
                )));
            }
        }
        Ok(Self { groups, offset, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_qubits(&self) -> usize {
        self.dim.trailing_zeros() as usize
    }

    /// `(‖β‖₁,₁, ‖β‖₁,₁/₂)`.
    pub fn beta_norms(&self) -> (f64, f64) {
        let n11 = self.groups.iter().map(ProjectorGroup::beta_sum).sum();
        let nhalf = self.groups.iter().map(ProjectorGroup::normalization).sum();
        (n11, nhalf)
    }

    /// Dense reconstruction of the operator.
    pub fn operator(&self) -> DenseOperator {
        let mut m = DMatrix::<Complex64>::identity(self.dim, self.dim).scale(self.offset);
        for g in &self.groups {
            for (b, r) in g.betas.iter().zip(&g.reflections) {
                m += r.projector().matrix().scale(g.sign * b);
            }
        }
        DenseOperator::with_kind_unchecked(m, OperatorKind::Hermitian)
    }

    /// Exact ⟨ψ|A|ψ⟩ through the decomposition.
    pub fn expectation(&self, state: &StateVector) -> Result<f64> {
        let mut acc = self.offset;
        for g in &self.groups {
            acc += g.sign * g.expectation(state)?;
        }
        Ok(acc)
    }
}

/// Qubits needed to index values `0..=max_value − 1`.
pub fn register_width(values: usize) -> usize {
    values.max(2).next_power_of_two().trailing_zeros() as usize
}

/// Register layout of the square-root encoding. From least to most
/// significant: system, mirror, the `y` qubit, the `k` register.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodingLayout {
    pub system_qubits: usize,
    pub mirror_qubits: usize,
    pub k_qubits: usize,
}

impl EncodingLayout {
    pub fn total_qubits(&self) -> usize {
        self.system_qubits + self.mirror_qubits + 1 + self.k_qubits
    }

    pub fn y_qubit(&self) -> usize {
        self.system_qubits + self.mirror_qubits
    }

    pub fn mirror_register(&self) -> Vec<usize> {
        (self.system_qubits..self.system_qubits + self.mirror_qubits).collect()
    }

    /// The `y` qubit followed by the `k` register, as PREPARE_π sees them.
    pub fn prepare_register(&self) -> Vec<usize> {
        (self.y_qubit()..self.total_qubits()).collect()
    }

    fn split(&self, index: usize) -> (usize, usize, usize, usize) {
        let sys = index & ((1 << self.system_qubits) - 1);
        let rest = index >> self.system_qubits;
        let mirror = rest & ((1 << self.mirror_qubits) - 1);
        let rest = rest >> self.mirror_qubits;
        (sys, mirror, rest & 1, rest >> 1)
    }

    fn join(&self, sys: usize, mirror: usize, y: usize, k: usize) -> usize {
        sys | (mirror | (y | k << 1) << self.mirror_qubits) << self.system_qubits
    }
}

/// Mirror width for `K` projectors: `K+1` states with `|0⟩` reserved.
pub fn mirror_qubits_for(k_terms: usize) -> usize {
    register_width(k_terms + 1)
}

/// PREPARE_π on the `(y, k)` register (y is the low qubit): maps `|0⟩` to
/// `Σ_{k≥1,y} β_k^{1/4}/(√2·√(Σ√β)) |k⟩|y⟩`.
pub fn build_prepare_pi(betas: &[f64]) -> Result<StatePrepOracle> {
    if betas.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
        return Err(Error::Argument("coefficients must be finite and nonnegative".into()));
    }
    let root_sum: f64 = betas.iter().map(|b| b.sqrt()).sum();
    if !(root_sum > 0.0) {
        return Err(Error::Argument("at least one coefficient must be positive".into()));
    }
    let k_qubits = mirror_qubits_for(betas.len());
    let mut amps = vec![ZERO; 2 << k_qubits];
    let scale = 1.0 / (2.0 * root_sum).sqrt();
    for (i, b) in betas.iter().enumerate() {
        let k = i + 1;
        let a = Complex64::new(b.powf(0.25) * scale, 0.0);
        amps[2 * k] = a;
        amps[2 * k + 1] = a;
    }
    Ok(StatePrepOracle::from_state("prepare_pi", StateVector::from_amplitudes(amps)?))
}

/// SELECT_π: block diagonal in `k`. For `1 ≤ k ≤ K` it applies `Z^y` to the
/// `y` qubit, `R_k^y` to the system and swaps mirror states `|0⟩ ↔ |k⟩`;
/// all other `k` act as identity.
#[derive(Debug, Clone)]
pub struct SelectPi {
    reflections: Vec<ReflectionOracle>,
    layout: EncodingLayout,
    counter: QueryCounter,
}

pub fn build_select_pi(reflections: &[ReflectionOracle], mirror_qubits: usize) -> Result<SelectPi> {
    let first = reflections
        .first()
        .ok_or_else(|| Error::Argument("SELECT needs at least one reflection".into()))?;
    let system_qubits = first.n_qubits();
    if reflections.iter().any(|r| r.dim() != first.dim()) {
        return Err(Error::Shape("reflections act on different dimensions".into()));
    }
    let k_terms = reflections.len();
    if (1usize << mirror_qubits) < k_terms + 1 {
        return Err(Error::Shape(format!(
            "mirror register of {mirror_qubits} qubits cannot hold {} states",
            k_terms + 1
        )));
    }
    let layout = EncodingLayout {
        system_qubits,
        mirror_qubits,
        k_qubits: mirror_qubits_for(k_terms),
    };
    if layout.total_qubits() > MAX_QUBITS {
        return Err(Error::Resource(format!(
            "square-root encoding needs {} qubits, budget is {MAX_QUBITS}",
            layout.total_qubits()
        )));
    }
    Ok(SelectPi {
        reflections: reflections.to_vec(),
        layout,
        counter: QueryCounter::new("select_pi"),
    })
}

impl SelectPi {
    pub fn layout(&self) -> EncodingLayout {
        self.layout
    }

    pub fn counter(&self) -> &QueryCounter {
        &self.counter
    }

    /// Apply to a vector over the full layout without charging.
    pub fn apply_vec(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let lay = self.layout;
        let sys_dim = 1usize << lay.system_qubits;
        let mut out = v.clone();
        for (i, refl) in self.reflections.iter().enumerate() {
            let k = i + 1;
            for y in 0..2 {
                for mirror in 0..1usize << lay.mirror_qubits {
                    let target = if mirror == 0 {
                        k
                    } else if mirror == k {
                        0
                    } else {
                        mirror
                    };
                    let src: DVector<Complex64> =
                        DVector::from_fn(sys_dim, |s, _| v[lay.join(s, mirror, y, k)]);
                    let img = if y == 1 {
                        -refl.apply_reflection(&src)
                    } else {
                        src
                    };
                    for s in 0..sys_dim {
                        out[lay.join(s, target, y, k)] = img[s];
                    }
                }
            }
        }
        out
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        if state.n_qubits() != self.layout.total_qubits() {
            return Err(Error::Shape("state does not match the SELECT layout".into()));
        }
        let out = self.apply_vec(&state.to_dvector());
        self.counter.add(1);
        StateVector::from_amplitudes(out.as_slice().to_vec())
    }

    pub fn to_dense(&self) -> DenseOperator {
        dense_from_columns(1 << self.layout.total_qubits(), |v| self.apply_vec(v))
    }
}

fn dense_from_columns(dim: usize, f: impl Fn(&DVector<Complex64>) -> DVector<Complex64>) -> DenseOperator {
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    let mut e = DVector::<Complex64>::zeros(dim);
    for c in 0..dim {
        e[c] = ONE;
        m.set_column(c, &f(&e));
        e[c] = ZERO;
    }
    DenseOperator::with_kind_unchecked(m, OperatorKind::Unitary)
}

/// `U_π = (PREPARE_π† ⊗ 1) · SELECT_π · (PREPARE_π ⊗ 1)`, kept in factored form.
#[derive(Debug, Clone)]
pub struct SqrtEncoding {
    prepare: StatePrepOracle,
    select: SelectPi,
    betas: Vec<f64>,
    normalization: f64,
}

pub fn build_u_pi(prepare: &StatePrepOracle, select: &SelectPi, betas: &[f64]) -> Result<SqrtEncoding> {
    let layout = select.layout();
    if prepare.n_qubits() != 1 + layout.k_qubits || betas.len() != select.reflections.len() {
        return Err(Error::Shape(
            "PREPARE and SELECT registers do not line up".into(),
        ));
    }
    let normalization = betas.iter().map(|b| b.sqrt()).sum::<f64>().powi(2);
    Ok(SqrtEncoding {
        prepare: prepare.clone(),
        select: select.clone(),
        betas: betas.to_vec(),
        normalization,
    })
}

/// Square-root encoding of one convex group, sized with the default mirror.
pub fn sqrt_encoding(betas: &[f64], reflections: &[ReflectionOracle]) -> Result<SqrtEncoding> {
    let prepare = build_prepare_pi(betas)?;
    let select = build_select_pi(reflections, mirror_qubits_for(reflections.len()))?;
    build_u_pi(&prepare, &select, betas)
}

impl SqrtEncoding {
    pub fn layout(&self) -> EncodingLayout {
        self.select.layout()
    }

    /// `(Σ_k √β_k)²`.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn prepare(&self) -> &StatePrepOracle {
        &self.prepare
    }

    pub fn select(&self) -> &SelectPi {
        &self.select
    }

    /// Charges of one `U_π` use: PREPARE twice (forward and inverse), SELECT once.
    pub fn ledger(&self) -> Ledger {
        let mut out = scaled(&self.prepare.ledger(), 2);
        out.push((self.select.counter.clone(), 1));
        out
    }

    fn apply_prepare(&self, v: &DVector<Complex64>, adjoint: bool) -> Result<DVector<Complex64>> {
        let s = StateVector::from_amplitudes(v.as_slice().to_vec())?;
        let u = if adjoint {
            self.prepare.unitary().adjoint()
        } else {
            self.prepare.unitary().clone()
        };
        let out = s.apply_unitary(&u, &self.layout().prepare_register(), &[])?;
        Ok(out.to_dvector())
    }

    /// Apply `U_π` without charging.
    pub fn apply_vec(&self, v: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        let a = self.apply_prepare(v, false)?;
        let b = self.select.apply_vec(&a);
        self.apply_prepare(&b, true)
    }

    /// Dense `U_π`, materialized column by column.
    pub fn u_pi(&self) -> DenseOperator {
        dense_from_columns(1 << self.layout().total_qubits(), |v| {
            self.apply_vec(v).expect("basis vectors are normalized")
        })
    }

    /// `|0⟩_k|0⟩_y ⊗ |ψ⟩ ⊗ |0⟩_mirror` embedded in the full layout.
    pub fn embed(&self, psi: &StateVector) -> Result<StateVector> {
        let lay = self.layout();
        if psi.n_qubits() != lay.system_qubits {
            return Err(Error::Shape(format!(
                "system state has {} qubits, encoding expects {}",
                psi.n_qubits(),
                lay.system_qubits
            )));
        }
        let mut amps = vec![ZERO; 1 << lay.total_qubits()];
        amps[..psi.dim()].copy_from_slice(psi.amplitudes());
        StateVector::from_amplitudes(amps)
    }

    /// Mask of the success subspace: the PREPARE register `(y, k)` all zero.
    pub fn success_mask(&self) -> Vec<bool> {
        let lay = self.layout();
        (0..1usize << lay.total_qubits())
            .map(|i| {
                let (_, _, y, k) = lay.split(i);
                y == 0 && k == 0
            })
            .collect()
    }

    /// Exact success probability for system state `ψ`.
    pub fn success_probability(&self, psi: &StateVector) -> Result<f64> {
        let out = self.apply_vec(&self.embed(psi)?.to_dvector())?;
        let mask = self.success_mask();
        Ok(out.iter().zip(&mask).filter(|(_, &m)| m).map(|(a, _)| a.norm_sqr()).sum())
    }
}

/// Reduction of a group expectation to a marked probability:
/// the returned oracle prepares `U_π(|0,0⟩ ⊗ O_ψ|0⟩ ⊗ |0⟩)` and the
/// reflection marks the PREPARE register all-zero subspace.
pub fn success_probability_instance(
    enc: &SqrtEncoding,
    prep: &StatePrepOracle,
) -> Result<(StatePrepOracle, ReflectionOracle)> {
    let embedded = enc.embed(prep.state())?;
    let out = enc.apply_vec(&embedded.to_dvector())?;
    let state = StateVector::from_amplitudes(out.as_slice().to_vec())?;
    let mut charges = enc.ledger();
    charges.extend(prep.ledger());
    let combined = StatePrepOracle::from_state("group_prep", state).with_charges(charges);
    let marked = ReflectionOracle::marking("success_reflection", enc.success_mask())?;
    Ok((combined, marked))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use crate::statevector::init_basis_state;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn proj_one() -> ReflectionOracle {
        let m = DMatrix::from_row_slice(2, 2, &[c(0.0), c(0.0), c(0.0), c(1.0)]);
        ReflectionOracle::from_projector("r", DenseOperator::hermitian(m).unwrap()).unwrap()
    }

    #[test]
    fn householder_first_column() {
        let mut rng = random::rng_from_seed(3);
        for n in 1..4 {
            let s = random::state(n, &mut rng);
            let u = householder_completion(&s);
            assert!(DenseOperator::unitary(u.matrix().clone()).is_ok());
            let col: Vec<_> = u.matrix().column(0).iter().copied().collect();
            let back = StateVector::from_amplitudes(col).unwrap();
            assert!(back.phase_aligned_distance(&s).unwrap() < 1e-12);
            assert!((back.inner(&s).unwrap() - ONE).norm() < 1e-12);
        }
        let basis = init_basis_state(2, 0).unwrap();
        let u = householder_completion(&basis);
        assert!(u.max_abs_diff(&DenseOperator::identity(4)) < 1e-15);
    }

    #[test]
    fn prep_counts_forward_and_inverse() {
        let mut rng = random::rng_from_seed(4);
        let prep = StatePrepOracle::from_state("prep", random::state(2, &mut rng));
        let zero = init_basis_state(2, 0).unwrap();
        let psi = prep.apply(&zero).unwrap();
        assert!(psi.phase_aligned_distance(prep.state()).unwrap() < 1e-12);
        let back = prep.apply_inverse(&psi).unwrap();
        assert!((back.amplitudes()[0] - ONE).norm() < 1e-12);
        assert_eq!(prep.queries(), 2);
    }

    #[test]
    fn reflection_from_prep_examples() {
        let mut rng = random::rng_from_seed(5);
        let psi = random::state(2, &mut rng);
        let prep = StatePrepOracle::from_state("prep", psi.clone());
        let r = reflection_from_prep(&prep);
        let out = r.apply(&psi).unwrap();
        let neg: Vec<_> = psi.amplitudes().iter().map(|a| -a).collect();
        let neg = StateVector::from_amplitudes(neg).unwrap();
        assert!(out.phase_aligned_distance(&neg).unwrap() < 1e-12);
        assert!((out.inner(&neg).unwrap() - ONE).norm() < 1e-12);
        assert_eq!(prep.queries(), 2);

        // Orthogonal states are fixed.
        let v = random::state(2, &mut rng).to_dvector();
        let p = psi.to_dvector();
        let perp = &v - &p * p.dotc(&v);
        let perp = StateVector::normalized(perp.as_slice().to_vec()).unwrap();
        let image = r.apply(&perp).unwrap();
        assert!((image.inner(&perp).unwrap() - ONE).norm() < 1e-12);

        let dense = r.reflection();
        let sq = dense.compose(&dense).unwrap();
        assert!(sq.max_abs_diff(&DenseOperator::identity(4)) < 1e-10);
    }

    #[test]
    fn walk_collinear_and_orthogonal() {
        let one = init_basis_state(1, 1).unwrap();
        let prep = StatePrepOracle::from_state("prep", one.clone());
        let w = make_walk(&prep, &proj_one()).unwrap();
        let out = w.apply(&one).unwrap();
        assert!((out.amplitudes()[1] + ONE).norm() < 1e-12);

        let zero = init_basis_state(1, 0).unwrap();
        let prep = StatePrepOracle::from_state("prep", zero.clone());
        let w = make_walk(&prep, &proj_one()).unwrap();
        let out = w.apply(&zero).unwrap();
        assert!((out.amplitudes()[0] - ONE).norm() < 1e-12);
        assert_eq!(prep.queries(), 2);
    }

    #[test]
    fn walk_shape_mismatch() {
        let prep = StatePrepOracle::from_state("prep", init_basis_state(2, 0).unwrap());
        assert!(matches!(make_walk(&prep, &proj_one()), Err(Error::Shape(_))));
    }

    #[test]
    fn boosted_walk_mu_zero_is_walk() {
        let mut rng = random::rng_from_seed(6);
        let proj = random::projector(2, 1, &mut rng).unwrap();
        let psi = random::state_with_marked_probability(&proj, 0.1, &mut rng).unwrap();
        let prep = StatePrepOracle::from_state("prep", psi);
        let r = ReflectionOracle::from_projector("r", proj).unwrap();
        let w = make_walk(&prep, &r).unwrap().to_dense();
        // Literal product −R_ψ R_Π.
        let r_psi = reflection_from_prep(&prep).reflection();
        let literal = DenseOperator::with_kind_unchecked(
            -(r_psi.matrix() * r.reflection().matrix()),
            OperatorKind::Unitary,
        );
        assert!(w.max_abs_diff(&literal) < 1e-12);
        let w0 = make_boosted_walk(&prep, &r, 0).unwrap().to_dense();
        assert!(w0.max_abs_diff(&w) < 1e-12);
        assert!(DenseOperator::unitary(w.matrix().clone()).is_ok());
    }

    #[test]
    fn boosted_walk_literal_definition() {
        let mut rng = random::rng_from_seed(7);
        let proj = random::projector(2, 2, &mut rng).unwrap();
        let psi = random::state_with_marked_probability(&proj, 0.05, &mut rng).unwrap();
        let prep = StatePrepOracle::from_state("prep", psi.clone());
        let r = ReflectionOracle::from_projector("r", proj).unwrap();
        let w = make_walk(&prep, &r).unwrap().to_dense();
        let mu = 2;
        let w_mu = w.compose(&w).unwrap();
        let phi = w_mu.matrix() * psi.to_dvector();
        let outer = &phi * phi.adjoint();
        let left = DMatrix::identity(4, 4) - outer.scale(2.0);
        let literal = -(left * r.reflection().matrix());
        let boosted = make_boosted_walk(&prep, &r, mu).unwrap().to_dense();
        assert!(max_diff(boosted.matrix(), &literal) < 1e-12);
    }

    fn max_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
        a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).norm()))
    }

    #[test]
    fn boost_mu_one_matches_closed_form() {
        let mut rng = random::rng_from_seed(8);
        let proj = random::projector(2, 1, &mut rng).unwrap();
        let p = 0.2;
        let psi = random::state_with_marked_probability(&proj, p, &mut rng).unwrap();
        let prep = StatePrepOracle::from_state("prep", psi);
        let r = ReflectionOracle::from_projector("r", proj).unwrap();
        let w = make_boosted_walk(&prep, &r, 1).unwrap();
        let expected = (3.0 * p.sqrt().asin()).sin().powi(2);
        assert!((w.boosted_probability() - expected).abs() < 1e-10);
    }

    #[test]
    fn walk_eigenphase_is_twice_the_angle() {
        let mut rng = random::rng_from_seed(9);
        let proj = random::projector(2, 1, &mut rng).unwrap();
        let p = 0.3f64;
        let psi = random::state_with_marked_probability(&proj, p, &mut rng).unwrap();
        let prep = StatePrepOracle::from_state("prep", psi.clone());
        let r = ReflectionOracle::from_projector("r", proj).unwrap();
        let w = make_walk(&prep, &r).unwrap().to_dense();
        // Restrict to span{ψ, Wψ}.
        let v1 = psi.to_dvector();
        let wv = w.matrix() * &v1;
        let r2 = &wv - &v1 * v1.dotc(&wv);
        let v2 = r2.scale(1.0 / r2.norm());
        let m11 = v1.dotc(&(w.matrix() * &v1));
        let m22 = v2.dotc(&(w.matrix() * &v2));
        let cos_phase = ((m11 + m22) / 2.0).re;
        let theta = p.sqrt().asin();
        assert!((cos_phase.acos() - 2.0 * theta).abs() < 1e-10);
    }

    #[test]
    fn boosted_walk_charges() {
        let mut rng = random::rng_from_seed(10);
        let prep = StatePrepOracle::from_state("prep", random::state(1, &mut rng));
        let r = proj_one();
        let w = make_boosted_walk(&prep, &r, 3).unwrap();
        w.apply(prep.state()).unwrap();
        assert_eq!(prep.queries(), 8);
        assert_eq!(r.queries(), 4);
    }

    #[test]
    fn prepare_pi_examples() {
        let p = build_prepare_pi(&[1.0]).unwrap();
        let a = p.state().amplitudes();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // Index y + 2k.
        assert!((a[2].re - s).abs() < 1e-12 && (a[3].re - s).abs() < 1e-12);
        let p = build_prepare_pi(&[1.0, 1.0]).unwrap();
        for idx in [2, 3, 4, 5] {
            assert!((p.state().amplitudes()[idx].re - 0.5).abs() < 1e-12);
        }
        let p = build_prepare_pi(&[4.0, 1.0]).unwrap();
        let ratio = p.state().amplitudes()[2].re / p.state().amplitudes()[4].re;
        assert!((ratio - 4f64.powf(0.25)).abs() < 1e-12);
        assert!(matches!(build_prepare_pi(&[0.0, 0.0]), Err(Error::Argument(_))));
    }

    fn layout_index(lay: EncodingLayout, sys: usize, mirror: usize, y: usize, k: usize) -> usize {
        lay.join(sys, mirror, y, k)
    }

    #[test]
    fn select_pi_basis_action() {
        let mut rng = random::rng_from_seed(12);
        let refls: Vec<_> = (0..2)
            .map(|_| ReflectionOracle::from_projector("r", random::projector(1, 1, &mut rng).unwrap()).unwrap())
            .collect();
        let sel = build_select_pi(&refls, 2).unwrap();
        let lay = sel.layout();
        let psi = random::state(1, &mut rng);
        for k in 1..=2 {
            for y in 0..2 {
                let mut v = DVector::<Complex64>::zeros(1 << lay.total_qubits());
                for s in 0..2 {
                    v[layout_index(lay, s, 0, y, k)] = psi.amplitudes()[s];
                }
                let out = sel.apply_vec(&v);
                let expected_sys = if y == 1 {
                    -refls[k - 1].apply_reflection(&psi.to_dvector())
                } else {
                    psi.to_dvector()
                };
                for s in 0..2 {
                    assert!((out[layout_index(lay, s, k, y, k)] - expected_sys[s]).norm() < 1e-12);
                }
                let twice = sel.apply_vec(&out);
                if y == 0 {
                    assert!((twice - &v).norm() < 1e-12);
                }
            }
        }
        let dense = sel.to_dense();
        assert!(DenseOperator::unitary(dense.into_matrix()).is_ok());
        assert!(matches!(build_select_pi(&refls, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn u_pi_examples() {
        let enc = sqrt_encoding(&[1.0], &[proj_one()]).unwrap();
        let one = init_basis_state(1, 1).unwrap();
        let zero = init_basis_state(1, 0).unwrap();
        assert!((enc.success_probability(&one).unwrap() - 1.0).abs() < 1e-12);
        assert!(enc.success_probability(&zero).unwrap().abs() < 1e-12);
        assert!(DenseOperator::unitary(enc.u_pi().into_matrix()).is_ok());
        assert_eq!(enc.normalization(), 1.0);
    }

    #[test]
    fn u_pi_dense_matches_factored() {
        let mut rng = random::rng_from_seed(13);
        let refls: Vec<_> = (0..3)
            .map(|_| ReflectionOracle::from_projector("r", random::projector(2, 2, &mut rng).unwrap()).unwrap())
            .collect();
        let enc = sqrt_encoding(&[0.2, 0.5, 0.3], &refls).unwrap();
        let psi = random::state(2, &mut rng);
        let embedded = enc.embed(&psi).unwrap().to_dvector();
        let a = enc.u_pi().matrix() * &embedded;
        let b = enc.apply_vec(&embedded).unwrap();
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn success_probability_is_normalized_expectation() {
        let mut rng = random::rng_from_seed(14);
        let p1 = random::projector(2, 1, &mut rng).unwrap();
        let p2 = random::projector(2, 3, &mut rng).unwrap();
        let betas = [0.3, 0.7];
        let refls = vec![
            ReflectionOracle::from_projector("r", p1.clone()).unwrap(),
            ReflectionOracle::from_projector("r", p2.clone()).unwrap(),
        ];
        let enc = sqrt_encoding(&betas, &refls).unwrap();
        let psi = random::state(2, &mut rng);
        let a = DenseOperator::hermitian(p1.matrix().scale(0.3) + p2.matrix().scale(0.7)).unwrap();
        let expected = psi.expectation_value(&a).unwrap() / (0.3f64.sqrt() + 0.7f64.sqrt()).powi(2);
        assert!((enc.success_probability(&psi).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn success_instance_examples() {
        let enc = sqrt_encoding(&[1.0], &[proj_one()]).unwrap();
        let prep = StatePrepOracle::from_state("psi", init_basis_state(1, 1).unwrap());
        let (combined, marked) = success_probability_instance(&enc, &prep).unwrap();
        assert!((marked.marked_probability(combined.state()).unwrap() - 1.0).abs() < 1e-12);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let prep = StatePrepOracle::from_state("psi", StateVector::from_real(&[s, s]).unwrap());
        let (combined, marked) = success_probability_instance(&enc, &prep).unwrap();
        assert!((marked.marked_probability(combined.state()).unwrap() - 0.5).abs() < 1e-12);

        let enc4 = sqrt_encoding(&[4.0], &[proj_one()]).unwrap();
        let prep = StatePrepOracle::from_state("psi", init_basis_state(1, 1).unwrap());
        let (combined, marked) = success_probability_instance(&enc4, &prep).unwrap();
        assert!((marked.marked_probability(combined.state()).unwrap() - 1.0).abs() < 1e-12);

        // One use of the combined prep charges PREPARE twice, SELECT once and ψ once.
        combined.charge(1);
        assert_eq!(enc4.prepare().queries(), 2);
        assert_eq!(enc4.select().counter().get(), 1);
        assert_eq!(prep.queries(), 1);

        let wrong = StatePrepOracle::from_state("psi", init_basis_state(2, 0).unwrap());
        assert!(matches!(success_probability_instance(&enc, &wrong), Err(Error::Shape(_))));
    }

    #[test]
    fn block_encoding_top_left_block() {
        let mut rng = random::rng_from_seed(15);
        let us: Vec<_> = (0..3).map(|_| random::unitary(2, &mut rng)).collect();
        let coeffs = [0.5, 1.2, 0.3];
        let be = BlockEncodedOperator::new("a", &coeffs, &us).unwrap();
        let mut a = DMatrix::<Complex64>::zeros(4, 4);
        for (c, u) in coeffs.iter().zip(&us) {
            a += u.matrix().scale(*c);
        }
        let block = be.encoded_block();
        assert!(max_diff(&block, &a.unscale(be.alpha())) < 1e-10);
        assert_eq!(be.prepare_counter().get(), 2);
        assert_eq!(be.select_counter().get(), 1);
    }

    #[test]
    fn projector_sum_reconstruction() {
        let mut rng = random::rng_from_seed(16);
        let groups = vec![
            ProjectorGroup::new(
                1.0,
                vec![0.4, 0.1],
                (0..2)
                    .map(|_| ReflectionOracle::from_projector("r", random::projector(2, 1, &mut rng).unwrap()).unwrap())
                    .collect(),
            )
            .unwrap(),
            ProjectorGroup::new(
                -1.0,
                vec![0.7],
                vec![ReflectionOracle::from_projector("r", random::projector(2, 2, &mut rng).unwrap()).unwrap()],
            )
            .unwrap(),
        ];
        let sum = ProjectorSum::new(4, groups, 0.25).unwrap();
        let op = sum.operator();
        assert!(DenseOperator::hermitian(op.matrix().clone()).is_ok());
        let psi = random::state(2, &mut rng);
        let direct = psi.expectation_value(&op).unwrap();
        assert!((direct - sum.expectation(&psi).unwrap()).abs() < 1e-12);
        let (n11, nhalf) = sum.beta_norms();
        assert!((n11 - 1.2).abs() < 1e-12);
        assert!(n11 <= nhalf);
        assert!(ProjectorGroup::new(1.0, vec![-0.1], vec![proj_one()]).is_err());
        assert!(ProjectorGroup::new(0.5, vec![0.1], vec![proj_one()]).is_err());
    }
}

//! Fermionic one-body operators: Jordan-Wigner strings, projector
//! decompositions, Hamiltonian paths and ground-state observables.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::estimation::{estimate_with_classical_priors, AaeOptions, ClassicalPriorSet, EstimateReport, GroupPriors};
use crate::oracles::{ProjectorGroup, ProjectorSum, QueryCounter, ReflectionOracle, StatePrepOracle};
use crate::statevector::{exact_eigensolve, DenseOperator, OperatorKind, SpectralData, StateVector, MAX_QUBITS};

const HERMITIAN_TOLERANCE: f64 = 1e-10;
const IMAGINARY_TOLERANCE: f64 = 1e-12;

/// `A = Σ_pq A_pq a†_p a_q` on `n_orbitals` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct OneBodyOperator {
    matrix: DMatrix<Complex64>,
}

impl OneBodyOperator {
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::Shape(format!(
                "one-body matrix must be square and nonempty, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.nrows() > MAX_QUBITS {
            return Err(Error::Resource(format!(
                "{} orbitals exceed the {MAX_QUBITS}-qubit budget",
                matrix.nrows()
            )));
        }
        let dev = matrix
            .iter()
            .zip(matrix.adjoint().iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
        if dev > HERMITIAN_TOLERANCE {
            return Err(Error::Argument(format!("one-body matrix is not hermitian (max deviation {dev:e})")));
        }
        Ok(Self { matrix })
    }

    pub fn from_real(matrix: &DMatrix<f64>) -> Result<Self> {
        Self::new(matrix.map(|x| Complex64::new(x, 0.0)))
    }

    /// Parse the plain-text format: a header line holding `N`, then `N` rows
    /// of `N` whitespace-separated real numbers. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Argument("empty one-body matrix file".into()))?;
        let n: usize = header
            .parse()
            .map_err(|_| Error::Argument(format!("header line must hold the orbital count, got {header:?}")))?;
        if n == 0 {
            return Err(Error::Argument("orbital count must be positive".into()));
        }
        let mut values = Vec::with_capacity(n * n);
        for (row, (lineno, line)) in lines.enumerate() {
            if row >= n {
                return Err(Error::Shape(format!("line {}: more than {n} matrix rows", lineno + 1)));
            }
            let entries: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::Argument(format!("line {}: {t:?} is not a number", lineno + 1)))
                })
                .collect::<Result<_>>()?;
            if entries.len() != n {
                return Err(Error::Shape(format!(
                    "line {}: expected {n} entries, found {}",
                    lineno + 1,
                    entries.len()
                )));
            }
            values.extend(entries);
        }
        if values.len() != n * n {
            return Err(Error::Shape(format!("expected {n} matrix rows, found {}", values.len() / n)));
        }
        Self::from_real(&DMatrix::from_row_slice(n, n, &values))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Argument(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn n_orbitals(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    fn real_entry(&self, p: usize, q: usize) -> Result<f64> {
        let a = self.matrix[(p, q)];
        if a.im.abs() > IMAGINARY_TOLERANCE {
            return Err(Error::Argument(format!(
                "A[{p}][{q}] = {a} is complex; only real symmetric one-body matrices are supported \
                 (transform to a real orbital basis first)"
            )));
        }
        Ok(a.re)
    }

    /// Real matrix view, rejecting complex entries.
    pub fn real_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.n_orbitals();
        let mut out = DMatrix::zeros(n, n);
        for p in 0..n {
            for q in 0..n {
                out[(p, q)] = self.real_entry(p, q)?;
            }
        }
        Ok(out)
    }
}

/// Matrix of `Σ A_pq a†_p a_q` in the occupation basis, built directly from
/// fermionic sign rules (bit `p` of the index is the occupation of mode `p`).
pub fn fock_matrix(op: &OneBodyOperator) -> DMatrix<Complex64> {
    let n = op.n_orbitals();
    let dim = 1usize << n;
    let mut m = DMatrix::zeros(dim, dim);
    let parity = |b: usize, below: usize| -> f64 {
        if (b & ((1 << below) - 1)).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    };
    for b in 0..dim {
        for q in 0..n {
            if b & (1 << q) == 0 {
                continue;
            }
            let s1 = parity(b, q);
            let mid = b & !(1 << q);
            for p in 0..n {
                if mid & (1 << p) != 0 {
                    continue;
                }
                let s2 = parity(mid, p);
                let out = mid | (1 << p);
                m[(out, b)] += op.matrix[(p, q)] * (s1 * s2);
            }
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// `coefficient · P_0 ⊗ … ⊗ P_{n−1}` with `letters[q]` acting on qubit `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliString {
    pub coefficient: f64,
    pub letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(coefficient: f64, letters: Vec<Pauli>) -> Self {
        Self { coefficient, letters }
    }

    /// Parse letters like `"XZY"`, first character on qubit 0.
    pub fn parse(coefficient: f64, letters: &str) -> Result<Self> {
        let letters = letters
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(Error::Argument(format!("unknown Pauli letter {other:?}"))),
            })
            .collect::<Result<_>>()?;
        Ok(Self::new(coefficient, letters))
    }

    pub fn n_qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn is_identity(&self) -> bool {
        self.letters.iter().all(|&l| l == Pauli::I)
    }

    pub fn label(&self) -> String {
        self.letters.iter().map(|l| l.symbol()).collect()
    }

    /// The unscaled Pauli operator.
    pub fn operator(&self) -> DenseOperator {
        let n = self.letters.len();
        let dim = 1usize << n;
        let mut flip = 0usize;
        for (q, l) in self.letters.iter().enumerate() {
            if matches!(l, Pauli::X | Pauli::Y) {
                flip |= 1 << q;
            }
        }
        let mut m = DMatrix::zeros(dim, dim);
        for b in 0..dim {
            let mut phase = Complex64::new(1.0, 0.0);
            for (q, l) in self.letters.iter().enumerate() {
                let bit = (b >> q) & 1;
                match l {
                    Pauli::I | Pauli::X => {}
                    Pauli::Y => phase *= if bit == 0 { Complex64::i() } else { -Complex64::i() },
                    Pauli::Z => {
                        if bit == 1 {
                            phase = -phase;
                        }
                    }
                }
            }
            m[(b ^ flip, b)] = phase;
        }
        DenseOperator::with_kind_unchecked(m, OperatorKind::Hermitian)
    }

    /// Projector onto the `+1` eigenspace, `(I + P)/2`.
    pub fn positive_projector(&self) -> DenseOperator {
        let p = self.operator();
        let dim = p.dim();
        let m = (DMatrix::identity(dim, dim) + p.matrix()).scale(0.5);
        DenseOperator::with_kind_unchecked(m, OperatorKind::Hermitian)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}·{}", self.coefficient, self.label())
    }
}

/// Dense matrix of `Σ c_k P_k`.
pub fn pauli_sum_matrix(strings: &[PauliString], n_qubits: usize) -> DMatrix<Complex64> {
    let dim = 1usize << n_qubits;
    let mut m = DMatrix::zeros(dim, dim);
    for s in strings {
        m += s.operator().matrix().scale(s.coefficient);
    }
    m
}

fn hopping_letters(n: usize, p: usize, q: usize, end: Pauli) -> Vec<Pauli> {
    (0..n)
        .map(|k| {
            if k == p || k == q {
                end
            } else if k > p && k < q {
                Pauli::Z
            } else {
                Pauli::I
            }
        })
        .collect()
}

fn z_letters(n: usize, p: usize) -> Vec<Pauli> {
    (0..n).map(|k| if k == p { Pauli::Z } else { Pauli::I }).collect()
}

/// Jordan-Wigner image of a real symmetric one-body operator. Hopping pairs
/// `p < q` give `(A_pq/2)(X Z…Z X + Y Z…Z Y)`; diagonal terms give
/// `A_pp(1 − Z_p)/2`, with the identity parts merged into one string.
/// Strings with zero coefficient are dropped.
pub fn jordan_wigner_one_body(op: &OneBodyOperator) -> Result<Vec<PauliString>> {
    let n = op.n_orbitals();
    let mut out = Vec::new();
    let mut identity = 0.0;
    for p in 0..n {
        let a = op.real_entry(p, p)?;
        identity += a / 2.0;
    }
    if identity != 0.0 {
        out.push(PauliString::new(identity, vec![Pauli::I; n]));
    }
    for p in 0..n {
        let a = op.real_entry(p, p)?;
        if a != 0.0 {
            out.push(PauliString::new(-a / 2.0, z_letters(n, p)));
        }
    }
    for p in 0..n {
        for q in p + 1..n {
            let a = op.real_entry(p, q)?;
            if a != 0.0 {
                out.push(PauliString::new(a / 2.0, hopping_letters(n, p, q, Pauli::X)));
                out.push(PauliString::new(a / 2.0, hopping_letters(n, p, q, Pauli::Y)));
            }
        }
    }
    Ok(out)
}

/// Write `A` as `Σ_{+} β Π − Σ_{−} β Π + offset` over `Π^{+XX}`, `Π^{+YY}`
/// (with Z strings) for hopping pairs and `Π^{−Z_p}` for occupations.
/// Group 0 collects the positive coefficients, group 1 the negative ones.
pub fn projector_decomposition(op: &OneBodyOperator) -> Result<ProjectorSum> {
    let n = op.n_orbitals();
    let dim = 1usize << n;
    let mut pos = (Vec::new(), Vec::new());
    let mut neg = (Vec::new(), Vec::new());
    let mut push = |weight: f64, r: ReflectionOracle| {
        let target = if weight > 0.0 { &mut pos } else { &mut neg };
        target.0.push(weight.abs());
        target.1.push(r);
    };
    let mut offset = 0.0;
    for p in 0..n {
        let a = op.real_entry(p, p)?;
        if a != 0.0 {
            let mask = (0..dim).map(|b| b & (1 << p) != 0).collect();
            push(a, ReflectionOracle::marking(&format!("occupied_{p}"), mask)?);
        }
    }
    for p in 0..n {
        for q in p + 1..n {
            let a = op.real_entry(p, q)?;
            if a == 0.0 {
                continue;
            }
            offset -= a;
            for (end, tag) in [(Pauli::X, "x"), (Pauli::Y, "y")] {
                let s = PauliString::new(1.0, hopping_letters(n, p, q, end));
                push(a, ReflectionOracle::from_projector(&format!("hop_{tag}_{p}_{q}"), s.positive_projector())?);
            }
        }
    }
    let groups = vec![
        ProjectorGroup::new(1.0, pos.0, pos.1)?,
        ProjectorGroup::new(-1.0, neg.0, neg.1)?,
    ];
    ProjectorSum::new(dim, groups, offset)
}

/// `(‖β‖₁,₁, ‖β‖₁,₁/₂)`.
pub fn beta_norms(sum: &ProjectorSum) -> (f64, f64) {
    sum.beta_norms()
}

/// One group per projector, keeping signs and offset. With this split the
/// classical tolerance of every projector is `ε/(2Σβ)`.
pub fn split_singletons(sum: &ProjectorSum) -> Result<ProjectorSum> {
    let mut groups = Vec::new();
    for g in &sum.groups {
        for (b, r) in g.betas.iter().zip(&g.reflections) {
            if *b > 0.0 {
                groups.push(ProjectorGroup::new(g.sign, vec![*b], vec![r.clone()])?);
            }
        }
    }
    ProjectorSum::new(sum.dim(), groups, sum.offset)
}

/// Bound on `‖ψ(1) − ψ(0)‖` for a gapped ground state along a path.
pub fn state_motion_bound(max_h_dot: f64, min_gap: f64) -> Result<f64> {
    check_gap(min_gap)?;
    Ok(max_h_dot / min_gap)
}

/// Bound on the change of any projector expectation along a path.
pub fn projector_drift_bound(max_h_dot: f64, min_gap: f64) -> Result<f64> {
    check_gap(min_gap)?;
    Ok(2.0 * max_h_dot / min_gap)
}

fn check_gap(min_gap: f64) -> Result<()> {
    if !(min_gap > 0.0) {
        return Err(Error::Argument(format!("minimum gap {min_gap} must be positive")));
    }
    Ok(())
}

/// Largest `max‖Ḣ‖` for which extrapolated priors stay valid:
/// `min{γε/(4‖β‖₁), γ(1/4 − max P₀)/2}`. The second term keeps
/// `P₀ + projector_drift_bound ≤ 1/4`.
pub fn extrapolation_radius(min_gap: f64, max_p0: f64, beta_norm_1: f64, epsilon: f64) -> Result<f64> {
    if max_p0 > 0.25 {
        return Err(Error::Argument(format!(
            "prior bound {max_p0} exceeds 1/4; the canonical prior structure is violated"
        )));
    }
    if !(min_gap > 0.0 && beta_norm_1 > 0.0 && epsilon > 0.0 && max_p0 >= 0.0) {
        return Err(Error::Argument("gap, ‖β‖₁ and ε must be positive".into()));
    }
    Ok((min_gap * epsilon / (4.0 * beta_norm_1)).min(min_gap * (0.25 - max_p0) / 2.0))
}

/// Coefficient function, analytic in a neighbourhood of `[−1, 1]`.
pub type CoefficientFn = Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>;

/// One term `α(x)·U` of a parameterized Hamiltonian.
#[derive(Clone)]
pub struct PathTerm {
    pub label: String,
    value: CoefficientFn,
    derivative: CoefficientFn,
    pub operator: DenseOperator,
}

impl fmt::Debug for PathTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PathTerm").field("label", &self.label).finish_non_exhaustive()
    }
}

impl PathTerm {
    pub fn new(label: &str, value: CoefficientFn, derivative: CoefficientFn, operator: DenseOperator) -> Result<Self> {
        if operator.kind() != OperatorKind::Hermitian {
            return Err(Error::Argument(format!("path term {label} needs a hermitian operator")));
        }
        Ok(Self {
            label: label.to_string(),
            value,
            derivative,
            operator,
        })
    }

    pub fn constant(label: &str, c: f64, operator: DenseOperator) -> Result<Self> {
        Self::new(
            label,
            Arc::new(move |_| Complex64::new(c, 0.0)),
            Arc::new(|_| Complex64::new(0.0, 0.0)),
            operator,
        )
    }

    /// `c0 + c1·x`.
    pub fn linear(label: &str, c0: f64, c1: f64, operator: DenseOperator) -> Result<Self> {
        Self::new(
            label,
            Arc::new(move |z| z * c1 + c0),
            Arc::new(move |_| Complex64::new(c1, 0.0)),
            operator,
        )
    }

    /// `c·sin(x)`.
    pub fn sine(label: &str, c: f64, operator: DenseOperator) -> Result<Self> {
        Self::new(label, Arc::new(move |z| z.sin() * c), Arc::new(move |z| z.cos() * c), operator)
    }

    pub fn value(&self, z: Complex64) -> Complex64 {
        (self.value)(z)
    }

    pub fn derivative(&self, z: Complex64) -> Complex64 {
        (self.derivative)(z)
    }

    /// Whether the operator squares to the identity, making it a reflection.
    pub fn is_involution(&self) -> bool {
        let m = self.operator.matrix();
        let dim = m.nrows();
        crate::statevector::max_abs_diff(&(m * m), &DMatrix::identity(dim, dim)) < 1e-10
    }
}

/// `H(x) = Σ_j α_j(x) U_j` on `x ∈ [−1, 1]`.
#[derive(Debug, Clone)]
pub struct HamiltonianPath {
    terms: Vec<PathTerm>,
    dim: usize,
}

impl HamiltonianPath {
    pub fn new(terms: Vec<PathTerm>) -> Result<Self> {
        let dim = terms
            .first()
            .ok_or_else(|| Error::Argument("a path needs at least one term".into()))?
            .operator
            .dim();
        if let Some(t) = terms.iter().find(|t| t.operator.dim() != dim) {
            return Err(Error::Shape(format!("path term {} has dimension {}, expected {dim}", t.label, t.operator.dim())));
        }
        Ok(Self { terms, dim })
    }

    pub fn terms(&self) -> &[PathTerm] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_qubits(&self) -> usize {
        self.dim.trailing_zeros() as usize
    }

    fn combine(&self, z: Complex64, f: impl Fn(&PathTerm, Complex64) -> Complex64) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for t in &self.terms {
            let c = f(t, z);
            if c != Complex64::new(0.0, 0.0) {
                m += t.operator.matrix() * c;
            }
        }
        m
    }

    /// `H(z)` continued to complex arguments (not hermitian off the real axis).
    pub fn hamiltonian_at(&self, z: Complex64) -> DMatrix<Complex64> {
        self.combine(z, |t, z| t.value(z))
    }

    pub fn derivative_at(&self, z: Complex64) -> DMatrix<Complex64> {
        self.combine(z, |t, z| t.derivative(z))
    }

    pub fn hamiltonian(&self, x: f64) -> Result<DenseOperator> {
        DenseOperator::hermitian(self.hamiltonian_at(Complex64::new(x, 0.0)))
    }

    pub fn derivative(&self, x: f64) -> Result<DenseOperator> {
        DenseOperator::hermitian(self.derivative_at(Complex64::new(x, 0.0)))
    }

    /// `‖α(x)‖₁ = Σ_j |α_j(x)|·‖U_j‖`.
    pub fn alpha_norm(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.value(Complex64::new(x, 0.0)).norm() * t.operator.spectral_norm())
            .sum()
    }

    pub fn spectrum(&self, x: f64) -> Result<SpectralData> {
        exact_eigensolve(&self.hamiltonian(x)?)
    }

    /// Smallest sampled gap and where it occurs.
    pub fn min_gap(&self, samples: usize) -> Result<(f64, f64)> {
        let mut best = (f64::NAN, f64::INFINITY);
        for x in sample_points(samples) {
            let gap = self.spectrum(x)?.gap;
            if gap < best.1 {
                best = (x, gap);
            }
        }
        Ok(best)
    }

    /// Sampled `max‖∂ₓH‖` times the Lipschitz slack `1.1`.
    pub fn derivative_norm_bound(&self, samples: usize) -> Result<f64> {
        let mut m: f64 = 0.0;
        for x in sample_points(samples) {
            m = m.max(self.derivative(x)?.spectral_norm());
        }
        Ok(1.1 * m)
    }

    /// Hermiticity and derivative consistency at 16 sampled points.
    pub fn validate(&self) -> Result<()> {
        let h = 1e-5;
        for x in sample_points(16) {
            self.hamiltonian(x)?;
            for t in &self.terms {
                let v = t.value(Complex64::new(x, 0.0));
                if v.im.abs() > 1e-10 {
                    return Err(Error::Argument(format!("coefficient of {} is not real at x = {x}", t.label)));
                }
                let fd = (t.value(Complex64::new(x + h, 0.0)) - t.value(Complex64::new(x - h, 0.0))) / (2.0 * h);
                let d = t.derivative(Complex64::new(x, 0.0));
                if (fd - d).norm() > 1e-6 {
                    return Err(Error::Argument(format!(
                        "derivative of {} disagrees with finite differences at x = {x} ({} vs {})",
                        t.label, d, fd
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `n` uniform points on `[−1, 1]`, endpoints included.
pub fn sample_points(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|k| -1.0 + 2.0 * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Analytic cost attribution for a filtering-based ground-state preparation.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundStateCostModel {
    pub alpha_norm: f64,
    pub overlap: f64,
    pub gap: f64,
    pub eps_psi: f64,
    pub ancillas: u32,
    pub energy_guess: f64,
}

impl GroundStateCostModel {
    /// Block-encoding queries charged per preparation: `⌈‖α‖₁/(|a₀|γ)⌉`.
    pub fn queries_per_preparation(&self) -> u64 {
        (self.alpha_norm / (self.overlap * self.gap)).ceil().max(1.0) as u64
    }
}

pub const GROUND_STATE_GAP_THRESHOLD: f64 = 1e-8;
pub const BLOCK_ENCODING_COUNTER: &str = "hamiltonian_block_encoding";

/// Exact ground-state preparation with the cost of a filtering routine
/// attributed per use. `alpha_norm` defaults to `‖H‖`.
pub fn ground_state_prep(
    h: &DenseOperator,
    reference: &StateVector,
    alpha_norm: Option<f64>,
    eps_psi: f64,
) -> Result<(StatePrepOracle, GroundStateCostModel)> {
    if reference.dim() != h.dim() {
        return Err(Error::Shape("reference state and Hamiltonian dimensions differ".into()));
    }
    if !(eps_psi > 0.0) {
        return Err(Error::Argument("state-preparation accuracy must be positive".into()));
    }
    let spec = exact_eigensolve(h)?;
    if spec.gap <= GROUND_STATE_GAP_THRESHOLD {
        return Err(Error::Degenerate {
            gap: spec.gap,
            threshold: GROUND_STATE_GAP_THRESHOLD,
        });
    }
    let ground = spec.ground_state();
    let a0 = ground.inner(reference)?;
    let overlap = a0.norm();
    if overlap < 1e-12 {
        return Err(Error::Overlap { overlap });
    }
    // Fix the global phase so the reference overlap is real and positive.
    let phase = a0 / overlap;
    let aligned = StateVector::normalized(ground.amplitudes().iter().map(|a| a * phase).collect())?;
    let alpha_norm = alpha_norm.unwrap_or_else(|| h.spectral_norm());
    if !(alpha_norm > 0.0) {
        return Err(Error::Argument("‖α‖₁ must be positive".into()));
    }
    let cost = GroundStateCostModel {
        alpha_norm,
        overlap,
        gap: spec.gap,
        eps_psi,
        ancillas: (alpha_norm / spec.gap).log2().ceil().max(1.0) as u32,
        energy_guess: spec.ground_energy,
    };
    let oracle = StatePrepOracle::from_state("ground_state_prep", aligned)
        .with_charges(vec![(QueryCounter::new(BLOCK_ENCODING_COUNTER), cost.queries_per_preparation())]);
    Ok((oracle, cost))
}

/// Projector sum used for ground-state observables: the one-body
/// decomposition split into one group per projector.
pub fn observable_projector_sum(a: &OneBodyOperator) -> Result<ProjectorSum> {
    split_singletons(&projector_decomposition(a)?)
}

/// Estimate `⟨ψ₀(H)|A|ψ₀(H)⟩`. `classical` and `priors` refer to the groups
/// of [`observable_projector_sum`].
#[allow(clippy::too_many_arguments)]
pub fn estimate_observable_on_ground_state(
    h: &DenseOperator,
    reference: &StateVector,
    a: &OneBodyOperator,
    classical: &ClassicalPriorSet,
    priors: &GroupPriors,
    epsilon: f64,
    failure: f64,
    options: &AaeOptions,
    seed: u64,
) -> Result<(EstimateReport, GroundStateCostModel)> {
    let (prep, cost) = ground_state_prep(h, reference, None, 1e-8)?;
    let sum = observable_projector_sum(a)?;
    if sum.dim() != prep.dim() {
        return Err(Error::Shape(format!(
            "observable on {} orbitals but Hamiltonian of dimension {}",
            a.n_orbitals(),
            prep.dim()
        )));
    }
    let report = estimate_with_classical_priors(&sum, classical, priors, &prep, epsilon, failure, options, seed)?;
    Ok((report, cost))
}

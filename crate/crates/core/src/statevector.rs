//! Dense statevector engine.
//!
//! Register ordering is little-endian: qubit 0 is the least significant bit
//! of a basis index. Kets and outcome bitstrings are written the usual way,
//! highest qubit first, so `|10⟩` on two qubits is basis index 2 (qubit 1 set).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest register the dense engine will allocate.
pub const MAX_QUBITS: usize = 20;

/// Default dimension cap for [`exact_eigensolve`].
pub const MAX_EIGENSOLVE_DIM: usize = 1 << 10;

/// Norm drift tolerated before a state is renormalized.
pub const NORM_TOLERANCE: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Normalized complex amplitude vector over an ordered qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
    renormalizations: u32,
}

impl StateVector {
    /// `|index⟩` on `n_qubits` qubits.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        check_qubits(n_qubits)?;
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::Range(format!(
                "basis index {index} out of range for {n_qubits} qubits (dimension {dim})"
            )));
        }
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = ONE;
        Ok(Self {
            n_qubits,
            amplitudes,
            renormalizations: 0,
        })
    }

    /// Build a state from amplitudes that are already normalized (up to 1e-8,
    /// which is corrected and recorded as a renormalization).
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let n_qubits = qubits_for_len(amplitudes.len())?;
        let norm = l2_norm(&amplitudes);
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::Argument(format!(
                "amplitudes have norm {norm}, expected 1"
            )));
        }
        let mut state = Self {
            n_qubits,
            amplitudes,
            renormalizations: 0,
        };
        state.settle_norm();
        Ok(state)
    }

    /// Normalize an arbitrary nonzero vector into a state.
    pub fn normalized(amplitudes: Vec<Complex64>) -> Result<Self> {
        let n_qubits = qubits_for_len(amplitudes.len())?;
        let norm = l2_norm(&amplitudes);
        if norm <= f64::MIN_POSITIVE {
            return Err(Error::Argument("cannot normalize the zero vector".into()));
        }
        let amplitudes = amplitudes.into_iter().map(|a| a / norm).collect();
        Ok(Self {
            n_qubits,
            amplitudes,
            renormalizations: 0,
        })
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::from_amplitudes(amplitudes.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    /// Number of times accumulated drift pushed the norm past
    /// [`NORM_TOLERANCE`] and the state was rescaled.
    pub fn renormalizations(&self) -> u32 {
        self.renormalizations
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.amplitudes)
    }

    pub fn to_dvector(&self) -> DVector<Complex64> {
        DVector::from_column_slice(&self.amplitudes)
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(Error::Shape(format!(
                "inner product of dimensions {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `high ⊗ self`: `self` occupies the low qubits of the result.
    pub fn tensor(&self, high: &StateVector) -> Result<StateVector> {
        check_qubits(self.n_qubits + high.n_qubits)?;
        let mut amplitudes = Vec::with_capacity(self.dim() * high.dim());
        for h in &high.amplitudes {
            amplitudes.extend(self.amplitudes.iter().map(|l| l * h));
        }
        Ok(Self {
            n_qubits: self.n_qubits + high.n_qubits,
            amplitudes,
            renormalizations: 0,
        })
    }

    /// Apply `op` to the ordered `targets` (targets[0] is the least
    /// significant bit of the operator's index), conditioned on every qubit
    /// in `controls` being 1.
    pub fn apply_unitary(
        &self,
        op: &DenseOperator,
        targets: &[usize],
        controls: &[usize],
    ) -> Result<StateVector> {
        let target_mask = register_mask(targets, self.n_qubits, "target")?;
        let control_mask = register_mask(controls, self.n_qubits, "control")?;
        if target_mask & control_mask != 0 {
            return Err(Error::Argument(
                "targets and controls must be disjoint".into(),
            ));
        }
        if op.dim() != 1usize << targets.len() {
            return Err(Error::Shape(format!(
                "operator of dimension {} applied to {} target qubits",
                op.dim(),
                targets.len()
            )));
        }
        let offsets = spread_offsets(targets);
        let m = op.matrix();
        let mut out = self.amplitudes.clone();
        let mut gathered = vec![ZERO; offsets.len()];
        for base in 0..self.dim() {
            if base & target_mask != 0 || base & control_mask != control_mask {
                continue;
            }
            for (g, off) in gathered.iter_mut().zip(&offsets) {
                *g = self.amplitudes[base | off];
            }
            for (i, off) in offsets.iter().enumerate() {
                let mut acc = ZERO;
                for (j, g) in gathered.iter().enumerate() {
                    acc += m[(i, j)] * g;
                }
                out[base | off] = acc;
            }
        }
        let mut next = Self {
            n_qubits: self.n_qubits,
            amplitudes: out,
            renormalizations: self.renormalizations,
        };
        next.settle_norm();
        Ok(next)
    }

    /// Apply an operator acting on the whole register.
    pub fn apply(&self, op: &DenseOperator) -> Result<StateVector> {
        if op.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "operator of dimension {} applied to state of dimension {}",
                op.dim(),
                self.dim()
            )));
        }
        let out = op.matrix() * self.to_dvector();
        let mut next = Self {
            n_qubits: self.n_qubits,
            amplitudes: out.as_slice().to_vec(),
            renormalizations: self.renormalizations,
        };
        next.settle_norm();
        Ok(next)
    }

    /// Born probability that measuring `register` yields `outcome`. The
    /// bitstring is written highest register entry first, so its last
    /// character refers to `register[0]`.
    pub fn measurement_probability(&self, register: &[usize], outcome: &str) -> Result<f64> {
        if outcome.len() != register.len() {
            return Err(Error::Shape(format!(
                "outcome '{outcome}' has {} bits for a register of {} qubits",
                outcome.len(),
                register.len()
            )));
        }
        let mut value = 0usize;
        for (i, ch) in outcome.chars().rev().enumerate() {
            match ch {
                '0' => {}
                '1' => value |= 1 << i,
                other => {
                    return Err(Error::Argument(format!(
                        "outcome contains non-binary character '{other}'"
                    )))
                }
            }
        }
        self.measurement_probability_value(register, value)
    }

    /// As [`measurement_probability`](Self::measurement_probability) with the
    /// outcome given as an integer whose bit `i` refers to `register[i]`.
    pub fn measurement_probability_value(&self, register: &[usize], value: usize) -> Result<f64> {
        let mask = register_mask(register, self.n_qubits, "register")?;
        if register.len() < usize::BITS as usize && value >= 1usize << register.len() {
            return Err(Error::Range(format!(
                "outcome {value} does not fit in {} bits",
                register.len()
            )));
        }
        let want: usize = register
            .iter()
            .enumerate()
            .filter(|(i, _)| value >> i & 1 == 1)
            .map(|(_, q)| 1usize << q)
            .sum();
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(idx, _)| idx & mask == want)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// ⟨ψ|M|ψ⟩ for hermitian `M`.
    pub fn expectation_value(&self, op: &DenseOperator) -> Result<f64> {
        if op.kind() != OperatorKind::Hermitian {
            return Err(Error::Argument(
                "expectation values require an operator flagged hermitian".into(),
            ));
        }
        let raw = self.raw_expectation(op)?;
        debug_assert!(raw.im.abs() <= 1e-10 * op.max_abs().max(1.0));
        Ok(raw.re)
    }

    pub(crate) fn raw_expectation(&self, op: &DenseOperator) -> Result<Complex64> {
        if op.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "operator of dimension {} against state of dimension {}",
                op.dim(),
                self.dim()
            )));
        }
        let v = self.to_dvector();
        Ok(v.dotc(&(op.matrix() * &v)))
    }

    /// Distance to `other` after removing the relative global phase.
    pub fn phase_aligned_distance(&self, other: &StateVector) -> Result<f64> {
        let overlap = self.inner(other)?;
        let phase = if overlap.norm() > 0.0 {
            overlap / overlap.norm()
        } else {
            ONE
        };
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a * phase - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    fn settle_norm(&mut self) {
        let norm = l2_norm(&self.amplitudes);
        if (norm - 1.0).abs() > NORM_TOLERANCE && norm > 0.0 {
            for a in &mut self.amplitudes {
                *a /= norm;
            }
            self.renormalizations += 1;
        }
    }
}

/// Convenience wrapper matching the free-function style used by callers.
pub fn init_basis_state(n_qubits: usize, index: usize) -> Result<StateVector> {
    StateVector::basis(n_qubits, index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Hermitian,
    Unitary,
    General,
}

/// Dense square matrix on a power-of-two dimensional space.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    matrix: DMatrix<Complex64>,
    kind: OperatorKind,
}

impl DenseOperator {
    pub fn general(matrix: DMatrix<Complex64>) -> Result<Self> {
        check_square_pow2(&matrix)?;
        Ok(Self {
            matrix,
            kind: OperatorKind::General,
        })
    }

    pub fn hermitian(matrix: DMatrix<Complex64>) -> Result<Self> {
        check_square_pow2(&matrix)?;
        let dev = max_abs_diff(&matrix, &matrix.adjoint());
        if dev > 1e-10 {
            return Err(Error::Argument(format!(
                "matrix is not hermitian: max |M - M†| = {dev:e}"
            )));
        }
        // Symmetrize so downstream eigensolvers see an exactly hermitian input.
        let matrix = (&matrix + matrix.adjoint()).scale(0.5);
        Ok(Self {
            matrix,
            kind: OperatorKind::Hermitian,
        })
    }

    pub fn unitary(matrix: DMatrix<Complex64>) -> Result<Self> {
        check_square_pow2(&matrix)?;
        let dim = matrix.nrows();
        let dev = max_abs_diff(&(matrix.adjoint() * &matrix), &DMatrix::identity(dim, dim));
        if dev > 1e-10 {
            return Err(Error::Argument(format!(
                "matrix is not unitary: max |U†U - I| = {dev:e}"
            )));
        }
        Ok(Self {
            matrix,
            kind: OperatorKind::Unitary,
        })
    }

    pub fn from_real_hermitian(matrix: &DMatrix<f64>) -> Result<Self> {
        Self::hermitian(matrix.map(|x| Complex64::new(x, 0.0)))
    }

    /// Trust the caller's structural knowledge of `kind`; used for operators
    /// assembled from pieces already known to be unitary or hermitian.
    pub fn with_kind_unchecked(matrix: DMatrix<Complex64>, kind: OperatorKind) -> Self {
        debug_assert!(matrix.is_square() && matrix.nrows().is_power_of_two());
        Self { matrix, kind }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            kind: OperatorKind::Unitary,
        }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    /// Reinterpret a hermitian unitary (a reflection) under the other flag.
    pub fn reflagged(&self, kind: OperatorKind) -> Self {
        Self {
            matrix: self.matrix.clone(),
            kind,
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            kind: self.kind,
        }
    }

    /// `self · other`.
    pub fn compose(&self, other: &DenseOperator) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::Shape(format!(
                "cannot compose dimensions {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        let kind = if self.kind == OperatorKind::Unitary && other.kind == OperatorKind::Unitary {
            OperatorKind::Unitary
        } else {
            OperatorKind::General
        };
        Ok(Self {
            matrix: &self.matrix * &other.matrix,
            kind,
        })
    }

    /// `self ⊗ low`: `low` acts on the least significant qubits.
    pub fn kron(&self, low: &DenseOperator) -> Self {
        let kind = if self.kind == low.kind {
            self.kind
        } else {
            OperatorKind::General
        };
        Self {
            matrix: self.matrix.kronecker(&low.matrix),
            kind,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn max_abs_diff(&self, other: &DenseOperator) -> f64 {
        max_abs_diff(&self.matrix, &other.matrix)
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        match self.kind {
            OperatorKind::Unitary => 1.0,
            OperatorKind::Hermitian => {
                let eig = SymmetricEigen::new(self.matrix.clone());
                eig.eigenvalues.iter().fold(0.0, |m, e| m.max(e.abs()))
            }
            OperatorKind::General => {
                let gram = self.matrix.adjoint() * &self.matrix;
                let eig = SymmetricEigen::new(gram);
                eig.eigenvalues.iter().fold(0.0f64, |m, &e| m.max(e)).sqrt()
            }
        }
    }

    /// Hermitian and idempotent within `tol`.
    pub fn is_projector(&self, tol: f64) -> bool {
        max_abs_diff(&self.matrix, &self.matrix.adjoint()) <= tol
            && max_abs_diff(&(&self.matrix * &self.matrix), &self.matrix) <= tol
    }
}

/// Standard single-qubit gates.
pub mod gates {
    use super::{DenseOperator, OperatorKind};
    use nalgebra::DMatrix;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn reflection(m: [Complex64; 4]) -> DenseOperator {
        DenseOperator::with_kind_unchecked(DMatrix::from_row_slice(2, 2, &m), OperatorKind::Hermitian)
    }

    /// Pauli X, flagged hermitian (it is also unitary).
    pub fn x() -> DenseOperator {
        reflection([c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    pub fn y() -> DenseOperator {
        reflection([c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
    }

    pub fn z() -> DenseOperator {
        reflection([c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
    }

    pub fn hadamard() -> DenseOperator {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        reflection([c(s, 0.), c(s, 0.), c(s, 0.), c(-s, 0.)])
    }
}

/// Spectrum of a hermitian operator, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the eigenvector of `eigenvalues[i]`.
    pub eigenvectors: DMatrix<Complex64>,
    pub ground_energy: f64,
    pub gap: f64,
}

impl SpectralData {
    pub fn ground_state(&self) -> StateVector {
        self.eigenvector(0)
    }

    pub fn eigenvector(&self, i: usize) -> StateVector {
        let col: Vec<Complex64> = self.eigenvectors.column(i).iter().copied().collect();
        StateVector::normalized(col).expect("eigenvectors are nonzero")
    }
}

/// Full diagonalization with the default dimension cap.
pub fn exact_eigensolve(op: &DenseOperator) -> Result<SpectralData> {
    exact_eigensolve_capped(op, MAX_EIGENSOLVE_DIM)
}

pub fn exact_eigensolve_capped(op: &DenseOperator, max_dim: usize) -> Result<SpectralData> {
    if op.kind() != OperatorKind::Hermitian {
        return Err(Error::Argument("eigensolve requires a hermitian operator".into()));
    }
    if op.dim() > max_dim {
        return Err(Error::Resource(format!(
            "dimension {} exceeds the eigensolver cap {max_dim}",
            op.dim()
        )));
    }
    let eig = SymmetricEigen::new(op.matrix().clone());
    let mut order: Vec<usize> = (0..op.dim()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_fn(op.dim(), op.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
    let gap = if eigenvalues.len() > 1 {
        eigenvalues[1] - eigenvalues[0]
    } else {
        0.0
    };
    Ok(SpectralData {
        ground_energy: eigenvalues[0],
        gap,
        eigenvalues,
        eigenvectors,
    })
}

pub(crate) fn l2_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn max_abs_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).norm()))
}

fn check_qubits(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Argument("a register needs at least one qubit".into()));
    }
    if n > MAX_QUBITS {
        return Err(Error::Resource(format!(
            "{n} qubits exceeds the dense budget of {MAX_QUBITS}"
        )));
    }
    Ok(())
}

fn qubits_for_len(len: usize) -> Result<usize> {
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::Shape(format!(
            "state length {len} is not a power of two ≥ 2"
        )));
    }
    let n = len.trailing_zeros() as usize;
    check_qubits(n)?;
    Ok(n)
}

fn check_square_pow2(m: &DMatrix<Complex64>) -> Result<()> {
    if !m.is_square() || !m.nrows().is_power_of_two() {
        return Err(Error::Shape(format!(
            "operator must be square with power-of-two dimension, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn register_mask(qubits: &[usize], n_qubits: usize, what: &str) -> Result<usize> {
    let mut mask = 0usize;
    for &q in qubits {
        if q >= n_qubits {
            return Err(Error::Range(format!(
                "{what} qubit {q} out of range for {n_qubits} qubits"
            )));
        }
        if mask & (1 << q) != 0 {
            return Err(Error::Argument(format!("{what} qubit {q} listed twice")));
        }
        mask |= 1 << q;
    }
    Ok(mask)
}

/// Basis offsets reached by setting the target bits according to a local index.
fn spread_offsets(targets: &[usize]) -> Vec<usize> {
    (0..1usize << targets.len())
        .map(|local| {
            targets
                .iter()
                .enumerate()
                .filter(|(i, _)| local >> i & 1 == 1)
                .map(|(_, q)| 1usize << q)
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plus() -> StateVector {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::from_real(&[s, s]).unwrap()
    }

    #[test]
    fn basis_states() {
        let zero = init_basis_state(1, 0).unwrap();
        assert_eq!(zero.amplitudes(), &[ONE, ZERO]);
        let three = init_basis_state(2, 3).unwrap();
        assert_eq!(three.amplitudes(), &[ZERO, ZERO, ZERO, ONE]);
        assert!(matches!(init_basis_state(1, 2), Err(Error::Range(_))));
    }

    #[test]
    fn bit_flip_and_cnot() {
        let one = init_basis_state(1, 0)
            .unwrap()
            .apply_unitary(&gates::x(), &[0], &[])
            .unwrap();
        assert_eq!(one.amplitudes(), &[ZERO, ONE]);

        // |10⟩ is index 2; CNOT with control 1 and target 0 yields |11⟩.
        let s = init_basis_state(2, 2).unwrap();
        let out = s.apply_unitary(&gates::x(), &[0], &[1]).unwrap();
        assert_eq!(out.amplitudes()[3], ONE);

        let s = init_basis_state(2, 0).unwrap();
        let out = s.apply_unitary(&gates::x(), &[0], &[1]).unwrap();
        assert_eq!(out.amplitudes()[0], ONE);
    }

    #[test]
    fn apply_unitary_errors() {
        let s = init_basis_state(2, 0).unwrap();
        assert!(matches!(
            s.apply_unitary(&gates::x(), &[0], &[0]),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            s.apply_unitary(&gates::x(), &[0, 1], &[]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            s.apply_unitary(&gates::x(), &[2], &[]),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn measurement_examples() {
        assert!((plus().measurement_probability(&[0], "0").unwrap() - 0.5).abs() < 1e-15);
        let s = init_basis_state(2, 3).unwrap();
        assert_eq!(s.measurement_probability(&[1], "1").unwrap(), 1.0);
        let s = init_basis_state(2, 2).unwrap();
        assert_eq!(s.measurement_probability(&[0, 1], "01").unwrap(), 0.0);
        assert_eq!(s.measurement_probability(&[0, 1], "10").unwrap(), 1.0);
        assert!(matches!(
            s.measurement_probability(&[0], "01"),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn expectation_examples() {
        let zero = init_basis_state(1, 0).unwrap();
        assert_eq!(zero.expectation_value(&gates::z()).unwrap(), 1.0);
        assert!((plus().expectation_value(&gates::x()).unwrap() - 1.0).abs() < 1e-15);
        assert!(plus().expectation_value(&gates::z()).unwrap().abs() < 1e-15);
        let general = DenseOperator::general(gates::x().into_matrix()).unwrap();
        assert!(matches!(
            zero.expectation_value(&general),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn eigensolve_pauli() {
        let z = exact_eigensolve(&gates::z()).unwrap();
        assert_eq!(z.ground_energy, -1.0);
        assert_eq!(z.gap, 2.0);
        let g = z.ground_state();
        assert!((g.amplitudes()[1].norm() - 1.0).abs() < 1e-12);

        let x = exact_eigensolve(&gates::x()).unwrap();
        assert!((x.ground_energy + 1.0).abs() < 1e-12);
        assert!((x.gap - 2.0).abs() < 1e-12);
        let g = x.ground_state();
        let expected = StateVector::from_real(&[
            std::f64::consts::FRAC_1_SQRT_2,
            -std::f64::consts::FRAC_1_SQRT_2,
        ])
        .unwrap();
        assert!(g.inner(&expected).unwrap().norm() > 1.0 - 1e-12);
    }

    #[test]
    fn eigensolve_cap() {
        let h = DenseOperator::with_kind_unchecked(DMatrix::identity(8, 8), OperatorKind::Hermitian);
        assert!(matches!(
            exact_eigensolve_capped(&h, 4),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn random_hermitian_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let h = random::hermitian(3, &mut rng);
            let spec = exact_eigensolve(&h).unwrap();
            let norm = h.spectral_norm();
            for (i, &lambda) in spec.eigenvalues.iter().enumerate() {
                let v = spec.eigenvectors.column(i).into_owned();
                let r = (h.matrix() * &v - v.scale(lambda)).norm();
                assert!(r <= 1e-10 * norm, "residual {r}");
            }
            let gram = spec.eigenvectors.adjoint() * &spec.eigenvectors;
            assert!(max_abs_diff(&gram, &DMatrix::identity(8, 8)) < 1e-10);
            assert!(spec.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn tensor_places_self_low() {
        let low = init_basis_state(1, 1).unwrap();
        let high = init_basis_state(1, 0).unwrap();
        let joint = low.tensor(&high).unwrap();
        assert_eq!(joint.amplitudes()[1], ONE);
    }
}

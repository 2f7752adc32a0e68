//! Seeded random states and operators for experiments and tests.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::statevector::{DenseOperator, OperatorKind, StateVector};

/// The RNG used by every stochastic operation in the crate.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent child seed for stream `index` (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn gaussian_complex<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

fn ginibre<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<Complex64> {
    DMatrix::from_fn(dim, dim, |_, _| gaussian_complex(rng))
}

/// Haar-random pure state on `n_qubits`.
pub fn state<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> StateVector {
    let amps = (0..1usize << n_qubits).map(|_| gaussian_complex(rng)).collect();
    StateVector::normalized(amps).expect("gaussian vector is nonzero")
}

/// GUE-distributed hermitian operator.
pub fn hermitian<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> DenseOperator {
    let g = ginibre(1 << n_qubits, rng);
    DenseOperator::with_kind_unchecked((&g + g.adjoint()).scale(0.5), OperatorKind::Hermitian)
}

/// Real symmetric operator with standard normal entries.
pub fn real_symmetric<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> DenseOperator {
    let dim = 1 << n_qubits;
    let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
    let s = (&g + g.transpose()).scale(0.5);
    DenseOperator::with_kind_unchecked(s.map(|x| Complex64::new(x, 0.0)), OperatorKind::Hermitian)
}

/// Haar-random unitary (QR of a Ginibre matrix with the diagonal phases fixed).
pub fn unitary<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> DenseOperator {
    let dim = 1 << n_qubits;
    let qr = ginibre(dim, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for c in 0..dim {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for row in 0..dim {
            q[(row, c)] *= phase;
        }
    }
    DenseOperator::with_kind_unchecked(q, OperatorKind::Unitary)
}

/// Random orthogonal projector of the given rank.
pub fn projector<R: Rng + ?Sized>(n_qubits: usize, rank: usize, rng: &mut R) -> Result<DenseOperator> {
    let dim = 1 << n_qubits;
    if rank > dim {
        return Err(Error::Argument(format!("rank {rank} exceeds dimension {dim}")));
    }
    let u = unitary(n_qubits, rng);
    let cols = u.matrix().columns(0, rank).into_owned();
    Ok(DenseOperator::with_kind_unchecked(
        &cols * cols.adjoint(),
        OperatorKind::Hermitian,
    ))
}

/// Random state whose marked probability under `proj` is exactly `p`.
pub fn state_with_marked_probability<R: Rng + ?Sized>(
    proj: &DenseOperator,
    p: f64,
    rng: &mut R,
) -> Result<StateVector> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Range(format!("probability {p} outside [0, 1]")));
    }
    let n = proj.n_qubits();
    let v = state(n, rng).to_dvector();
    let inside = proj.matrix() * &v;
    let outside = &v - &inside;
    let (ni, no) = (inside.norm(), outside.norm());
    if (p > 0.0 && ni < 1e-9) || (p < 1.0 && no < 1e-9) {
        return Err(Error::Argument(
            "projector leaves no room for the requested probability".into(),
        ));
    }
    let mut amps = vec![Complex64::new(0.0, 0.0); v.len()];
    for (i, a) in amps.iter_mut().enumerate() {
        if p > 0.0 {
            *a += inside[i] * (p.sqrt() / ni);
        }
        if p < 1.0 {
            *a += outside[i] * ((1.0 - p).sqrt() / no);
        }
    }
    StateVector::normalized(amps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_operators_have_their_kinds() {
        let mut rng = rng_from_seed(1);
        let u = unitary(3, &mut rng);
        assert!(DenseOperator::unitary(u.matrix().clone()).is_ok());
        let p = projector(3, 3, &mut rng).unwrap();
        assert!(p.is_projector(1e-10));
        let trace: f64 = (0..8).map(|i| p.matrix()[(i, i)].re).sum();
        assert!((trace - 3.0).abs() < 1e-10);
    }

    #[test]
    fn marked_probability_is_exact() {
        let mut rng = rng_from_seed(2);
        let p = projector(2, 1, &mut rng).unwrap();
        let s = state_with_marked_probability(&p, 0.13, &mut rng).unwrap();
        assert!((s.expectation_value(&p).unwrap() - 0.13).abs() < 1e-13);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}

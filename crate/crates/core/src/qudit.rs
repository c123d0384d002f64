//! Pure-state qudit engine.
//!
//! Carriers are separable: a 9-level system travelling to Bob₁ and a 3-level
//! system travelling to Bob₂. A composite preparation is the ordered pair of
//! the two subsystem states, never a 27-entry tensor.
//!
//! The Fourier basis uses `F[j][k] = exp(+2πi·jk/d)/√d`. The opposite sign is
//! available through [`FourierSign::Negative`] so callers can check that
//! nothing observable depends on the convention.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;

/// Tolerance for normalization and unitarity checks.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Dimension of the subsystem sent to Bob₁.
pub const DIM_BOB1: usize = 9;
/// Dimension of the subsystem sent to Bob₂.
pub const DIM_BOB2: usize = 3;

const ALLOWED_DIMS: [usize; 3] = [3, 9, 27];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuditError {
    #[error("dimension {0} is not supported (expected 3, 9 or 27)")]
    UnsupportedDimension(usize),
    #[error("Fourier matrix needs d >= 2, got {0}")]
    FourierDimension(usize),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("state is not normalized: squared norm {0}")]
    NotNormalized(f64),
    #[error("index {index} out of range 0..{bound}")]
    IndexOutOfRange { index: usize, bound: usize },
}

/// Sign of the exponent in the discrete Fourier transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FourierSign {
    #[default]
    Positive,
    Negative,
}

impl FourierSign {
    fn factor(self) -> f64 {
        match self {
            FourierSign::Positive => 1.0,
            FourierSign::Negative => -1.0,
        }
    }
}

/// Single-subsystem measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalBasis {
    Computational,
    Fourier,
}

/// Composite preparation basis: `S1` is computational on both subsystems,
/// `S2` is the subsystem-wise Fourier image of `S1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BasisSet {
    S1,
    S2,
}

impl BasisSet {
    pub const ALL: [BasisSet; 2] = [BasisSet::S1, BasisSet::S2];

    /// Basis used on each subsystem.
    pub fn local(self) -> LocalBasis {
        match self {
            BasisSet::S1 => LocalBasis::Computational,
            BasisSet::S2 => LocalBasis::Fourier,
        }
    }
}

impl fmt::Display for BasisSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisSet::S1 => f.write_str("S1"),
            BasisSet::S2 => f.write_str("S2"),
        }
    }
}

/// Normalized amplitude vector of dimension 3, 9 or 27.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Builds a state, checking dimension and normalization at [`NORM_TOLERANCE`].
    pub fn new(amps: Vec<Complex64>) -> Result<Self, QuditError> {
        Self::with_tolerance(amps, NORM_TOLERANCE)
    }

    /// Builds a state with a caller-chosen normalization tolerance. Amplitudes
    /// are stored verbatim.
    pub fn with_tolerance(amps: Vec<Complex64>, tolerance: f64) -> Result<Self, QuditError> {
        if !ALLOWED_DIMS.contains(&amps.len()) {
            return Err(QuditError::UnsupportedDimension(amps.len()));
        }
        let norm = squared_norm(&amps);
        if !norm.is_finite() || (norm - 1.0).abs() > tolerance {
            return Err(QuditError::NotNormalized(norm));
        }
        Ok(Self { amps })
    }

    /// Computational basis vector `|k⟩`.
    pub fn basis(dim: usize, k: usize) -> Result<Self, QuditError> {
        if !ALLOWED_DIMS.contains(&dim) {
            return Err(QuditError::UnsupportedDimension(dim));
        }
        check_index(k, dim)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[k] = Complex64::new(1.0, 0.0);
        Ok(Self { amps })
    }

    /// Basis vector `k` of `basis` in dimension `dim`.
    pub fn basis_vector(
        dim: usize,
        basis: LocalBasis,
        k: usize,
        sign: FourierSign,
    ) -> Result<Self, QuditError> {
        match basis {
            LocalBasis::Computational => Self::basis(dim, k),
            LocalBasis::Fourier => {
                if !ALLOWED_DIMS.contains(&dim) {
                    return Err(QuditError::UnsupportedDimension(dim));
                }
                check_index(k, dim)?;
                Ok(Self {
                    amps: fourier_column(dim, k, sign),
                })
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn squared_norm(&self) -> f64 {
        squared_norm(&self.amps)
    }
}

fn squared_norm(amps: &[Complex64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

fn check_index(index: usize, bound: usize) -> Result<(), QuditError> {
    if index < bound {
        Ok(())
    } else {
        Err(QuditError::IndexOutOfRange { index, bound })
    }
}

fn fourier_entry(d: usize, j: usize, k: usize, sign: FourierSign) -> Complex64 {
    // jk reduced mod d keeps the phase argument small.
    let phase = sign.factor() * 2.0 * PI * ((j * k) % d) as f64 / d as f64;
    Complex64::from_polar(1.0 / (d as f64).sqrt(), phase)
}

fn fourier_column(d: usize, k: usize, sign: FourierSign) -> Vec<Complex64> {
    (0..d).map(|j| fourier_entry(d, j, k, sign)).collect()
}

/// Dense row-major square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl SquareMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn column(&self, col: usize) -> Vec<Complex64> {
        (0..self.dim).map(|row| self.entry(row, col)).collect()
    }

    /// Largest entry-wise modulus of `M·M† − I`.
    pub fn unitarity_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for r in 0..d {
            for c in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..d {
                    acc += self.entry(r, k) * self.entry(c, k).conj();
                }
                if r == c {
                    acc -= 1.0;
                }
                worst = worst.max(acc.norm());
            }
        }
        worst
    }
}

/// `d×d` discrete Fourier matrix with entries `exp(+2πi·jk/d)/√d`.
pub fn fourier_matrix(d: usize) -> Result<SquareMatrix, QuditError> {
    fourier_matrix_signed(d, FourierSign::Positive)
}

pub fn fourier_matrix_signed(d: usize, sign: FourierSign) -> Result<SquareMatrix, QuditError> {
    if d < 2 {
        return Err(QuditError::FourierDimension(d));
    }
    let mut data = Vec::with_capacity(d * d);
    for j in 0..d {
        for k in 0..d {
            data.push(fourier_entry(d, j, k, sign));
        }
    }
    Ok(SquareMatrix { dim: d, data })
}

/// Number of states in each composite basis.
pub const BASIS_SIZE: usize = 9;

/// The `a`-th element of S1: `(|a⟩, |a mod 3⟩)`.
pub fn prepare_s1(a: usize) -> Result<(StateVector, StateVector), QuditError> {
    prepare(BasisSet::S1, a, FourierSign::Positive)
}

/// The `a`-th element of S2: `(F₉|a⟩, F₃|a mod 3⟩)`.
pub fn prepare_s2(a: usize) -> Result<(StateVector, StateVector), QuditError> {
    prepare(BasisSet::S2, a, FourierSign::Positive)
}

/// Composite preparation of element `a` of `basis` under a Fourier convention.
pub fn prepare(
    basis: BasisSet,
    a: usize,
    sign: FourierSign,
) -> Result<(StateVector, StateVector), QuditError> {
    check_index(a, BASIS_SIZE)?;
    let local = basis.local();
    Ok((
        StateVector::basis_vector(DIM_BOB1, local, a, sign)?,
        StateVector::basis_vector(DIM_BOB2, local, a % DIM_BOB2, sign)?,
    ))
}

/// `⟨u|v⟩`, conjugating `u`.
pub fn overlap(u: &StateVector, v: &StateVector) -> Result<Complex64, QuditError> {
    if u.dim() != v.dim() {
        return Err(QuditError::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    Ok(u
        .amps
        .iter()
        .zip(&v.amps)
        .map(|(x, y)| x.conj() * y)
        .sum())
}

/// Overlap of two product states, the product of subsystem overlaps.
pub fn composite_overlap(
    u: &(StateVector, StateVector),
    v: &(StateVector, StateVector),
) -> Result<Complex64, QuditError> {
    Ok(overlap(&u.0, &v.0)? * overlap(&u.1, &v.1)?)
}

/// Result of a projective measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOutcome {
    pub index: usize,
    pub post_state: StateVector,
}

/// Born-rule outcome probabilities of measuring `state` in `basis`.
pub fn outcome_probabilities(
    state: &StateVector,
    basis: LocalBasis,
    sign: FourierSign,
) -> Vec<f64> {
    let d = state.dim();
    match basis {
        LocalBasis::Computational => state.amps.iter().map(|a| a.norm_sqr()).collect(),
        LocalBasis::Fourier => (0..d)
            .map(|k| {
                let amp: Complex64 = (0..d)
                    .map(|j| fourier_entry(d, j, k, sign).conj() * state.amps[j])
                    .sum();
                amp.norm_sqr()
            })
            .collect(),
    }
}

/// Projective measurement in `basis`, consuming exactly one draw from `rng`.
pub fn measure(
    state: &StateVector,
    basis: LocalBasis,
    rng: &mut RngStream,
) -> Result<MeasurementOutcome, QuditError> {
    measure_signed(state, basis, FourierSign::Positive, rng)
}

pub fn measure_signed(
    state: &StateVector,
    basis: LocalBasis,
    sign: FourierSign,
    rng: &mut RngStream,
) -> Result<MeasurementOutcome, QuditError> {
    let norm = state.squared_norm();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(QuditError::NotNormalized(norm));
    }
    let probs = outcome_probabilities(state, basis, sign);
    let index = sample(&probs, rng.uniform());
    Ok(MeasurementOutcome {
        index,
        post_state: StateVector::basis_vector(state.dim(), basis, index, sign)?,
    })
}

/// Inverse-CDF sampling. Rounding slack at the top end goes to the last
/// outcome with nonzero probability.
fn sample(probs: &[f64], u: f64) -> usize {
    let mut cumulative = 0.0;
    let mut last_nonzero = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_nonzero = k;
        }
        cumulative += p;
        if u < cumulative && p > 0.0 {
            return k;
        }
    }
    last_nonzero
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamId;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn fourier_first_column_is_uniform() {
        let f = fourier_matrix(3).unwrap();
        let expected = 1.0 / 3f64.sqrt();
        for z in f.column(0) {
            assert!(close(z.re, expected) && close(z.im, 0.0));
        }
    }

    #[test]
    fn fourier_is_unitary() {
        for d in [2, 3, 9, 27] {
            assert!(fourier_matrix(d).unwrap().unitarity_defect() < NORM_TOLERANCE);
            assert!(
                fourier_matrix_signed(d, FourierSign::Negative)
                    .unwrap()
                    .unitarity_defect()
                    < NORM_TOLERANCE
            );
        }
    }

    #[test]
    fn fourier_entry_modulus() {
        let f = fourier_matrix(3).unwrap();
        assert!(close(f.entry(1, 1).norm_sqr(), 1.0 / 3.0));
        // exp(2πi/3) = -1/2 + i·√3/2, scaled by 1/√3
        let z = f.entry(1, 1) * 3f64.sqrt();
        assert!(close(z.re, -0.5) && close(z.im, 3f64.sqrt() / 2.0));
    }

    #[test]
    fn fourier_rejects_small_dimension() {
        assert_eq!(fourier_matrix(1), Err(QuditError::FourierDimension(1)));
        assert_eq!(fourier_matrix(0), Err(QuditError::FourierDimension(0)));
    }

    #[test]
    fn s1_matches_listing() {
        let listing = [
            (0, 0),
            (1, 1),
            (2, 2),
            (3, 0),
            (4, 1),
            (5, 2),
            (6, 0),
            (7, 1),
            (8, 2),
        ];
        for (a, &(first, second)) in listing.iter().enumerate() {
            let (s9, s3) = prepare_s1(a).unwrap();
            assert_eq!(s9, StateVector::basis(9, first).unwrap());
            assert_eq!(s3, StateVector::basis(3, second).unwrap());
        }
    }

    #[test]
    fn s2_zero_is_uniform() {
        let (s9, s3) = prepare_s2(0).unwrap();
        for z in s9.amps() {
            assert!(close(z.re, 1.0 / 3.0) && close(z.im, 0.0));
        }
        for z in s3.amps() {
            assert!(close(z.re, 1.0 / 3f64.sqrt()) && close(z.im, 0.0));
        }
    }

    #[test]
    fn s2_four_is_flat_in_computational_basis() {
        let (s9, s3) = prepare_s2(4).unwrap();
        for z in s9.amps() {
            assert!(close(z.norm_sqr(), 1.0 / 9.0));
        }
        let expected = StateVector::basis_vector(3, LocalBasis::Fourier, 1, FourierSign::Positive)
            .unwrap();
        assert_eq!(s3, expected);
    }

    #[test]
    fn prepare_rejects_out_of_range() {
        assert!(matches!(
            prepare_s1(9),
            Err(QuditError::IndexOutOfRange { index: 9, bound: 9 })
        ));
        assert!(prepare_s2(12).is_err());
    }

    #[test]
    fn overlap_basics() {
        let zero = StateVector::basis(9, 0).unwrap();
        let one = StateVector::basis(9, 1).unwrap();
        assert_eq!(overlap(&zero, &zero).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(overlap(&zero, &one).unwrap(), Complex64::new(0.0, 0.0));
        let three = StateVector::basis(3, 0).unwrap();
        assert!(matches!(
            overlap(&zero, &three),
            Err(QuditError::DimensionMismatch { left: 9, right: 3 })
        ));
    }

    #[test]
    fn overlap_conjugates_left_argument() {
        let f1 = StateVector::basis_vector(3, LocalBasis::Fourier, 1, FourierSign::Positive)
            .unwrap();
        let e1 = StateVector::basis(3, 1).unwrap();
        let z = overlap(&e1, &f1).unwrap();
        let w = overlap(&f1, &e1).unwrap();
        assert!(close(z.re, w.re) && close(z.im, -w.im));
        assert!(z.im > 0.0);
    }

    #[test]
    fn state_vector_validation() {
        let bad = vec![Complex64::new(1.0, 0.0); 3];
        assert!(matches!(StateVector::new(bad), Err(QuditError::NotNormalized(_))));
        let wrong_dim = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        assert_eq!(
            StateVector::new(wrong_dim),
            Err(QuditError::UnsupportedDimension(2))
        );
        assert!(StateVector::basis(27, 26).is_ok());
    }

    #[test]
    fn eigenstates_measure_deterministically() {
        let mut rng = RngStream::new(3, StreamId::Harness);
        let five = StateVector::basis(9, 5).unwrap();
        let f2 = StateVector::basis_vector(9, LocalBasis::Fourier, 2, FourierSign::Positive)
            .unwrap();
        for _ in 0..200 {
            let out = measure(&five, LocalBasis::Computational, &mut rng).unwrap();
            assert_eq!(out.index, 5);
            assert_eq!(out.post_state, five);
            assert_eq!(measure(&f2, LocalBasis::Fourier, &mut rng).unwrap().index, 2);
        }
    }

    #[test]
    fn measurement_consumes_one_draw() {
        let (s9, _) = prepare_s2(0).unwrap();
        let mut a = RngStream::new(11, StreamId::Alice);
        let mut b = RngStream::new(11, StreamId::Alice);
        measure(&s9, LocalBasis::Computational, &mut a).unwrap();
        b.uniform();
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn measure_rejects_unnormalized() {
        let s = StateVector::with_tolerance(
            vec![
                Complex64::new(1.0 + 1e-7, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
            1e-6,
        )
        .unwrap();
        let mut rng = RngStream::new(0, StreamId::Harness);
        assert!(matches!(
            measure(&s, LocalBasis::Computational, &mut rng),
            Err(QuditError::NotNormalized(_))
        ));
    }

    #[test]
    fn sampler_skips_zero_probability_outcomes() {
        let probs = [0.0, 0.5, 0.5, 0.0];
        assert_eq!(sample(&probs, 0.0), 1);
        assert_eq!(sample(&probs, 0.75), 2);
        // u beyond the accumulated mass due to rounding
        assert_eq!(sample(&[0.3, 0.7 - 1e-15, 0.0], 0.999_999_999_999_999_9), 1);
    }
}

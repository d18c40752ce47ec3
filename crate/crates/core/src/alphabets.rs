//! Bit to ket encodings and the receiver measurements that go with them.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{bracket, measure_povm, measure_projective, polar, Ket2, Operator2, Povm, ALGEBRA_TOL, C64};

pub type Bit = u8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphabetName {
    /// `A_⊙`: `|↻⟩ ↦ 1`, `|↺⟩ ↦ 0`.
    Circular,
    /// `A_⊞`: `|↕⟩ ↦ 1`, `|↔⟩ ↦ 0`.
    Rectilinear,
    /// `A_θ`: `|θ⟩ ↦ 1`, `|θ̄⟩ ↦ 0` (non-orthogonal).
    B92,
    /// EPR alphabets `A₀, A₁, A₂`: `|iπ/6⟩ ↦ 0`, `|iπ/6 + π/2⟩ ↦ 1`.
    Epr(u8),
}

impl fmt::Display for AlphabetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Circular => f.write_str("circular"),
            Self::Rectilinear => f.write_str("rectilinear"),
            Self::B92 => f.write_str("b92"),
            Self::Epr(i) => write!(f, "epr{i}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantumAlphabet {
    pub name: AlphabetName,
    pub ket_for_1: Ket2,
    pub ket_for_0: Ket2,
}

impl QuantumAlphabet {
    pub fn circular() -> Self {
        Self {
            name: AlphabetName::Circular,
            ket_for_1: polar::right_circular(),
            ket_for_0: polar::left_circular(),
        }
    }

    pub fn rectilinear() -> Self {
        Self {
            name: AlphabetName::Rectilinear,
            ket_for_1: polar::vertical(),
            ket_for_0: polar::horizontal(),
        }
    }

    pub fn b92(theta: f64) -> Result<Self> {
        check_b92_angle(theta)?;
        Ok(Self {
            name: AlphabetName::B92,
            ket_for_1: Ket2::linear(theta),
            ket_for_0: Ket2::linear(-theta),
        })
    }

    /// EPR alphabet `Aᵢ`, `i ∈ {0, 1, 2}`.
    pub fn epr(index: u8) -> Result<Self> {
        if index > 2 {
            return Err(Error::InvalidParameter {
                name: "epr operator",
                reason: format!("{index} not in 0..=2"),
            });
        }
        let angle = epr_angle(index);
        Ok(Self {
            name: AlphabetName::Epr(index),
            ket_for_0: Ket2::linear(angle),
            ket_for_1: Ket2::linear(angle + FRAC_PI_2),
        })
    }

    pub fn is_orthogonal(&self) -> bool {
        bracket(&self.ket_for_0, &self.ket_for_1).norm() < ALGEBRA_TOL
    }

    /// `[ket_for_0, ket_for_1]`, so the measured index is the decoded bit.
    pub fn basis(&self) -> [Ket2; 2] {
        [self.ket_for_0, self.ket_for_1]
    }

    pub fn bit_of(&self, k: &Ket2) -> Option<Bit> {
        if k.same_state(&self.ket_for_0) {
            Some(0)
        } else if k.same_state(&self.ket_for_1) {
            Some(1)
        } else {
            None
        }
    }
}

/// Angle `iπ/6` of the EPR measurement operator `Mᵢ`.
pub fn epr_angle(index: u8) -> f64 {
    f64::from(index) * FRAC_PI_6
}

pub fn check_b92_angle(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < FRAC_PI_4 {
        Ok(())
    } else {
        Err(Error::AngleOutOfRange { theta })
    }
}

pub fn encode(bit: Bit, alphabet: &QuantumAlphabet) -> Ket2 {
    debug_assert!(bit <= 1);
    if bit == 1 {
        alphabet.ket_for_1
    } else {
        alphabet.ket_for_0
    }
}

/// `P_¬k = 1 − |k⟩⟨k|`
pub fn not_projector(k: &Ket2) -> Operator2 {
    Operator2::identity() - Operator2::projector(k)
}

/// The three-outcome unambiguous discrimination POVM for `A_θ`.
///
/// Labels name the state each element *concludes*: `"θ"` is
/// `P_¬θ̄/(1+|⟨θ|θ̄⟩|)` (it never fires on `|θ̄⟩`), `"θ̄"` is
/// `P_¬θ/(1+|⟨θ|θ̄⟩|)`, and `"?"` is the remainder.
pub fn build_b92_povm(theta: f64) -> Result<Povm> {
    check_b92_angle(theta)?;
    let t = Ket2::linear(theta);
    let tb = Ket2::linear(-theta);
    let overlap = bracket(&t, &tb).norm();
    let scale = C64::new(1.0 / (1.0 + overlap), 0.0);
    let concludes_theta = not_projector(&tb).scale(scale);
    let concludes_theta_bar = not_projector(&t).scale(scale);
    let inconclusive = Operator2::identity() - concludes_theta - concludes_theta_bar;
    Povm::new(vec![
        (LABEL_THETA.into(), concludes_theta),
        (LABEL_THETA_BAR.into(), concludes_theta_bar),
        (LABEL_INCONCLUSIVE.into(), inconclusive),
    ])
}

pub const LABEL_THETA: &str = "θ";
pub const LABEL_THETA_BAR: &str = "θ̄";
pub const LABEL_INCONCLUSIVE: &str = "?";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Bit(Bit),
    Erasure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReceiverKind {
    Projective,
    Povm,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ReceiverStrategy {
    /// Measure in the alphabet's own orthonormal basis.
    OrthogonalBasis(QuantumAlphabet),
    /// Pick `P_¬θ` or `P_¬θ̄` uniformly; "yes" on `P_¬θ` certifies `|θ̄⟩`.
    B92Projective {
        theta: f64,
    },
    B92Povm {
        theta: f64,
        povm: Povm,
    },
    /// Measure `Mᵢ = |iπ/6⟩⟨iπ/6|`; the decoded bit follows `Aᵢ`.
    EprOperator(u8),
}

impl ReceiverStrategy {
    pub fn orthogonal(alphabet: QuantumAlphabet) -> Result<Self> {
        if !alphabet.is_orthogonal() {
            return Err(Error::InvalidParameter {
                name: "alphabet",
                reason: format!("{} is not orthogonal", alphabet.name),
            });
        }
        Ok(Self::OrthogonalBasis(alphabet))
    }

    pub fn b92(theta: f64, kind: ReceiverKind) -> Result<Self> {
        check_b92_angle(theta)?;
        Ok(match kind {
            ReceiverKind::Projective => Self::B92Projective { theta },
            ReceiverKind::Povm => Self::B92Povm {
                theta,
                povm: build_b92_povm(theta)?,
            },
        })
    }

    pub fn epr(index: u8) -> Result<Self> {
        QuantumAlphabet::epr(index)?;
        Ok(Self::EprOperator(index))
    }
}

/// Result of one reception, with the concrete measurement setting used.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Reception {
    pub outcome: Outcome,
    pub setting: &'static str,
}

pub fn receive<R: Rng + ?Sized>(state: &Ket2, strategy: &ReceiverStrategy, rng: &mut R) -> Result<Reception> {
    match strategy {
        ReceiverStrategy::OrthogonalBasis(alphabet) => {
            let (index, _) = measure_projective(state, &alphabet.basis(), rng)?;
            Ok(Reception {
                outcome: Outcome::Bit(index as Bit),
                setting: match alphabet.name {
                    AlphabetName::Circular => "circular",
                    AlphabetName::Rectilinear => "rectilinear",
                    _ => "orthogonal",
                },
            })
        }
        ReceiverStrategy::B92Projective { theta } => {
            check_b92_angle(*theta)?;
            let use_not_theta = rng.gen_bool(0.5);
            let excluded = if use_not_theta {
                Ket2::linear(*theta)
            } else {
                Ket2::linear(-*theta)
            };
            // The yes-subspace of P_¬k is spanned by the ket orthogonal to k.
            let yes = Ket2::linear(angle_of(&excluded) + FRAC_PI_2);
            let (index, _) = measure_projective(state, &[yes, excluded], rng)?;
            let outcome = match (index, use_not_theta) {
                (0, true) => Outcome::Bit(0),
                (0, false) => Outcome::Bit(1),
                _ => Outcome::Erasure,
            };
            Ok(Reception {
                outcome,
                setting: if use_not_theta { "not-theta" } else { "not-theta-bar" },
            })
        }
        ReceiverStrategy::B92Povm { povm, .. } => {
            let index = measure_povm(state, povm, rng);
            let outcome = match povm.label(index) {
                LABEL_THETA => Outcome::Bit(1),
                LABEL_THETA_BAR => Outcome::Bit(0),
                _ => Outcome::Erasure,
            };
            Ok(Reception {
                outcome,
                setting: "povm",
            })
        }
        ReceiverStrategy::EprOperator(i) => {
            let alphabet = QuantumAlphabet::epr(*i)?;
            let (index, _) = measure_projective(state, &alphabet.basis(), rng)?;
            Ok(Reception {
                outcome: Outcome::Bit(index as Bit),
                setting: ["m0", "m1", "m2"][*i as usize],
            })
        }
    }
}

fn angle_of(k: &Ket2) -> f64 {
    let [a, b] = *k.amplitudes();
    b.re.atan2(a.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{commutator, expectation, SUM_TOL};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_8;

    #[test]
    fn encode_examples() {
        assert!(encode(1, &QuantumAlphabet::circular()).approx_eq(&polar::right_circular(), 0.0));
        assert!(encode(0, &QuantumAlphabet::rectilinear()).approx_eq(&polar::horizontal(), 0.0));
        let a = QuantumAlphabet::b92(FRAC_PI_8).unwrap();
        assert!(encode(0, &a).approx_eq(&Ket2::linear(-FRAC_PI_8), 0.0));
    }

    #[test]
    fn orthogonality_flags() {
        assert!(QuantumAlphabet::circular().is_orthogonal());
        assert!(QuantumAlphabet::rectilinear().is_orthogonal());
        for i in 1..100 {
            let theta = FRAC_PI_4 * f64::from(i) / 100.0;
            let a = QuantumAlphabet::b92(theta).unwrap();
            assert!(!a.is_orthogonal());
            let overlap = bracket(&a.ket_for_1, &a.ket_for_0).re;
            assert!((overlap - (2.0 * theta).cos()).abs() < ALGEBRA_TOL);
        }
        for i in 0..3 {
            assert!(QuantumAlphabet::epr(i).unwrap().is_orthogonal());
        }
    }

    #[test]
    fn b92_angle_bounds() {
        assert!(QuantumAlphabet::b92(0.0).is_err());
        assert!(QuantumAlphabet::b92(FRAC_PI_4).is_err());
        assert!(build_b92_povm(-0.1).is_err());
        assert!(ReceiverStrategy::b92(1.0, ReceiverKind::Projective).is_err());
    }

    #[test]
    fn circular_and_rectilinear_are_incompatible() {
        for a in QuantumAlphabet::circular().basis() {
            for b in QuantumAlphabet::rectilinear().basis() {
                let c = commutator(&Operator2::projector(&a), &Operator2::projector(&b));
                assert!(c.frobenius_norm() > 0.1);
            }
        }
    }

    #[test]
    fn matched_alphabet_is_identity_on_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for alphabet in [QuantumAlphabet::circular(), QuantumAlphabet::rectilinear()] {
            let strategy = ReceiverStrategy::orthogonal(alphabet).unwrap();
            for bit in [0, 1] {
                for _ in 0..1000 {
                    let r = receive(&encode(bit, &alphabet), &strategy, &mut rng).unwrap();
                    assert_eq!(r.outcome, Outcome::Bit(bit));
                }
            }
        }
    }

    #[test]
    fn mismatched_alphabet_is_a_coin() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let strategy = ReceiverStrategy::orthogonal(QuantumAlphabet::rectilinear()).unwrap();
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| {
                let r = receive(&polar::right_circular(), &strategy, &mut rng).unwrap();
                r.outcome == Outcome::Bit(1)
            })
            .count();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn povm_examples() {
        let povm = build_b92_povm(FRAC_PI_8).unwrap();
        let t = Ket2::linear(FRAC_PI_8);
        let tb = Ket2::linear(-FRAC_PI_8);
        let q = povm.index_of(LABEL_INCONCLUSIVE).unwrap();
        let yes_t = povm.index_of(LABEL_THETA).unwrap();
        let yes_tb = povm.index_of(LABEL_THETA_BAR).unwrap();
        let p_q = expectation(povm.element(q), &t).unwrap();
        assert!((p_q - FRAC_PI_4.cos()).abs() < ALGEBRA_TOL);
        assert!(expectation(povm.element(yes_tb), &t).unwrap().abs() < ALGEBRA_TOL);
        assert!(expectation(povm.element(yes_t), &tb).unwrap().abs() < ALGEBRA_TOL);
        let p_t = expectation(povm.element(yes_t), &t).unwrap();
        assert!((p_t - (1.0 - FRAC_PI_4.cos())).abs() < ALGEBRA_TOL);
        let sum = (0..povm.len()).fold(Operator2::zero(), |acc, i| acc + *povm.element(i));
        assert!(sum.max_deviation(&Operator2::identity()) < SUM_TOL);
    }

    #[test]
    fn povm_valid_across_range() {
        for i in 1..200 {
            let theta = FRAC_PI_4 * f64::from(i) / 200.0;
            let povm = build_b92_povm(theta).unwrap();
            let q = povm.element(povm.index_of(LABEL_INCONCLUSIVE).unwrap());
            assert!(q.hermitian_eigenvalues()[0] >= -SUM_TOL);
        }
    }

    #[test]
    fn projective_receiver_never_misidentifies() {
        // ⟨θ|P_¬θ|θ⟩ = 0 and ⟨θ̄|P_¬θ̄|θ̄⟩ = 0.
        let t = Ket2::linear(FRAC_PI_8);
        let tb = Ket2::linear(-FRAC_PI_8);
        assert!(expectation(&not_projector(&t), &t).unwrap().abs() < ALGEBRA_TOL);
        assert!(expectation(&not_projector(&tb), &tb).unwrap().abs() < ALGEBRA_TOL);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let alphabet = QuantumAlphabet::b92(0.3).unwrap();
        for kind in [ReceiverKind::Projective, ReceiverKind::Povm] {
            let strategy = ReceiverStrategy::b92(0.3, kind).unwrap();
            for bit in [0, 1] {
                for _ in 0..5000 {
                    let r = receive(&encode(bit, &alphabet), &strategy, &mut rng).unwrap();
                    if let Outcome::Bit(b) = r.outcome {
                        assert_eq!(b, bit);
                    }
                }
            }
        }
    }

    #[test]
    fn projective_receiver_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let strategy = ReceiverStrategy::b92(FRAC_PI_8, ReceiverKind::Projective).unwrap();
        let t = Ket2::linear(FRAC_PI_8);
        let n = 100_000;
        let erasures = (0..n)
            .filter(|_| receive(&t, &strategy, &mut rng).unwrap().outcome == Outcome::Erasure)
            .count();
        let rate = erasures as f64 / n as f64;
        assert!((rate - 0.75).abs() < 0.01, "{rate}");
        assert!((1.0 - rate - 0.25).abs() < 0.01);
    }

    #[test]
    fn povm_receiver_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let povm = build_b92_povm(FRAC_PI_8).unwrap();
        let t = Ket2::linear(FRAC_PI_8);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[measure_povm(&t, &povm, &mut rng)] += 1;
        }
        let theta_rate = counts[povm.index_of(LABEL_THETA).unwrap()] as f64 / n as f64;
        assert!((theta_rate - (1.0 - FRAC_PI_4.cos())).abs() < 0.01);
        assert_eq!(counts[povm.index_of(LABEL_THETA_BAR).unwrap()], 0);
    }

    #[test]
    fn epr_receiver_decodes_alphabet() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..3u8 {
            let alphabet = QuantumAlphabet::epr(i).unwrap();
            let strategy = ReceiverStrategy::epr(i).unwrap();
            for bit in [0, 1] {
                let r = receive(&encode(bit, &alphabet), &strategy, &mut rng).unwrap();
                assert_eq!(r.outcome, Outcome::Bit(bit));
            }
        }
        assert!(ReceiverStrategy::epr(3).is_err());
    }
}

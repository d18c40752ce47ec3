//! Eavesdropping strategies and Eve's per-slot ledger.
//!
//! Translucent probes act on `carrier ⊗ probe` (carrier is the first tensor
//! factor). Eve reads her probe in the basis that best separates `|Ψ_θ⟩` from
//! `|Ψ_θ̄⟩`. Her readout is simulated at interaction time; because it acts on
//! a different subsystem than Bob's measurement, the joint statistics equal
//! those of a readout deferred until after the public announcements.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alphabets::{
    build_b92_povm, check_b92_angle, encode, epr_angle, receive, AlphabetName, Bit, Outcome, QuantumAlphabet,
    ReceiverKind, ReceiverStrategy, LABEL_THETA, LABEL_THETA_BAR,
};
use crate::error::{Error, Result};
use crate::hilbert::{
    bracket, extend_isometry, measure_factor, measure_projective, tensor, Factor, Ket2, Ket4, Operator4, C64, SUM_TOL,
};

/// What Eve knows about the alphabet in use on the channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EveContext {
    /// Alice picks `A_⊙` or `A_⊞` per slot.
    Bb84,
    B92 {
        theta: f64,
        receiver: ReceiverKind,
    },
}

/// A probe interaction `U` on `carrier ⊗ probe` plus the probe readout.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeCoupling {
    pub theta: f64,
    pub interaction: Operator4,
    pub probe_init: Ket2,
    /// Probe states after interacting with `|θ⟩` and `|θ̄⟩`.
    pub probe_theta: Ket2,
    pub probe_theta_bar: Ket2,
    /// Readout basis; index 0 votes for `|θ⟩` (bit 1).
    pub readout: [Ket2; 2],
}

impl ProbeCoupling {
    /// `⟨Ψ_θ|Ψ_θ̄⟩`
    pub fn probe_overlap(&self) -> C64 {
        bracket(&self.probe_theta, &self.probe_theta_bar)
    }

    /// `1 − |⟨Ψ_θ|Ψ_θ̄⟩|`
    pub fn distinguishability(&self) -> f64 {
        1.0 - self.probe_overlap().norm()
    }

    /// Output of `U` on `|k⟩ ⊗ |Ψ⟩`.
    pub fn couple(&self, carrier: &Ket2) -> Ket4 {
        Ket4::from_raw(
            self.interaction
                .apply_raw(tensor(carrier, &self.probe_init).amplitudes()),
        )
    }
}

impl ProbeCoupling {
    /// Bob's carrier after the interaction, with Eve's probe traced out.
    pub fn reduced_carrier(&self, carrier: &Ket2) -> [[C64; 2]; 2] {
        let out = *self.couple(carrier).amplitudes();
        std::array::from_fn(|i| std::array::from_fn(|j| (0..2).map(|p| out[2 * i + p] * out[2 * j + p].conj()).sum()))
    }

    /// Exact B92 raw-key error rate this coupling induces at Bob, i.e. the
    /// share of conclusive results that disagree with Alice. It is the same
    /// for both receivers, whose conclusive elements differ only by a factor.
    pub fn induced_error_rate(&self) -> Result<f64> {
        let povm = build_b92_povm(self.theta)?;
        let claims = [
            (
                Ket2::linear(self.theta),
                povm.index_of(LABEL_THETA),
                povm.index_of(LABEL_THETA_BAR),
            ),
            (
                Ket2::linear(-self.theta),
                povm.index_of(LABEL_THETA_BAR),
                povm.index_of(LABEL_THETA),
            ),
        ];
        let (mut wrong, mut conclusive) = (0.0, 0.0);
        for (sent, right, bad) in claims {
            let rho = self.reduced_carrier(&sent);
            let p = |idx: Option<usize>| -> f64 {
                let e = povm.element(idx.expect("B92 POVM labels"));
                (0..2)
                    .flat_map(|i| (0..2).map(move |j| (i, j)))
                    .map(|(i, j)| rho[i][j] * e.entry(j, i))
                    .sum::<C64>()
                    .re
            };
            let (pr, pb) = (p(right), p(bad));
            wrong += pb;
            conclusive += pr + pb;
        }
        Ok(if conclusive > 0.0 { wrong / conclusive } else { 0.0 })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EveKind {
    None,
    /// Intercept-resend on each slot with probability `lambda`.
    Opaque {
        lambda: f64,
    },
    Translucent {
        strength: f64,
        coupling: ProbeCoupling,
    },
    TranslucentEntangled {
        a: f64,
        b: f64,
        coupling: ProbeCoupling,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EveAction {
    Pass,
    Intercept { alphabet: AlphabetName },
    Probe,
}

impl fmt::Display for EveAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Pass => f.write_str("pass"),
            Self::Intercept { alphabet } => write!(f, "intercept:{alphabet}"),
            Self::Probe => f.write_str("probe"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub slot: usize,
    pub action: EveAction,
    /// Eve's best guess of Alice's bit, if she touched the slot.
    pub guess: Option<Bit>,
    /// Probability that `guess` is right, from Eve's own point of view
    /// before any public announcement.
    pub confidence: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EveLedger {
    pub entries: Vec<LedgerEntry>,
}

impl EveLedger {
    pub fn guess_for(&self, slot: usize) -> Option<Bit> {
        // Entries are pushed in slot order.
        self.entries
            .binary_search_by_key(&slot, |e| e.slot)
            .ok()
            .and_then(|i| self.entries[i].guess)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EveStrategy {
    pub kind: EveKind,
    pub ledger: EveLedger,
}

impl EveStrategy {
    pub fn none() -> Self {
        Self::from_kind(EveKind::None)
    }

    pub fn opaque(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::ProbabilityOutOfRange {
                name: "lambda",
                value: lambda,
            });
        }
        Ok(Self::from_kind(EveKind::Opaque { lambda }))
    }

    fn from_kind(kind: EveKind) -> Self {
        Self {
            kind,
            ledger: EveLedger::default(),
        }
    }

    /// Intercept-resend intensity, when the strategy is opaque (or absent).
    pub fn opaque_intensity(&self) -> Option<f64> {
        match self.kind {
            EveKind::None => Some(0.0),
            EveKind::Opaque { lambda } => Some(lambda),
            _ => None,
        }
    }

    pub fn coupling(&self) -> Option<&ProbeCoupling> {
        match &self.kind {
            EveKind::Translucent { coupling, .. } | EveKind::TranslucentEntangled { coupling, .. } => Some(coupling),
            _ => None,
        }
    }

    fn record(&mut self, slot: usize, action: EveAction, guess: Option<Bit>, confidence: f64) {
        self.ledger.entries.push(LedgerEntry {
            slot,
            action,
            guess,
            confidence,
        });
    }
}

/// Eve's action on one photon in flight. Returns the photon sent on to Bob.
pub fn eve_act<R: Rng + ?Sized>(
    state: &Ket2,
    strategy: &mut EveStrategy,
    context: &EveContext,
    slot: usize,
    rng: &mut R,
) -> Result<(Ket2, EveAction)> {
    match strategy.kind.clone() {
        EveKind::None => Ok((*state, EveAction::Pass)),
        EveKind::Opaque { lambda } => {
            if !rng.gen_bool(lambda) {
                return Ok((*state, EveAction::Pass));
            }
            let (alphabet, receiver) = match *context {
                EveContext::Bb84 => {
                    let alphabet = if rng.gen_bool(0.5) {
                        QuantumAlphabet::circular()
                    } else {
                        QuantumAlphabet::rectilinear()
                    };
                    (alphabet, ReceiverStrategy::orthogonal(alphabet)?)
                }
                EveContext::B92 { theta, receiver } => {
                    (QuantumAlphabet::b92(theta)?, ReceiverStrategy::b92(theta, receiver)?)
                }
            };
            let reception = receive(state, &receiver, rng)?;
            let (bit, confidence) = match reception.outcome {
                Outcome::Bit(b) => (b, 1.0),
                // An inconclusive B92 result still has to be replaced by something.
                Outcome::Erasure => (u8::from(rng.gen_bool(0.5)), 0.5),
            };
            let action = EveAction::Intercept {
                alphabet: alphabet.name,
            };
            strategy.record(slot, action, Some(bit), confidence);
            Ok((encode(bit, &alphabet), action))
        }
        EveKind::Translucent { coupling, .. } | EveKind::TranslucentEntangled { coupling, .. } => {
            let joint = coupling.couple(state);
            let (index, collapsed) = measure_factor(&joint, Factor::Second, &coupling.readout, rng)?;
            let carrier = crate::hilbert::contract_second(&collapsed, &coupling.readout[index]);
            let carrier = Ket2::normalized(carrier)?;
            let guess = if index == 0 { 1 } else { 0 };
            let confidence = helstrom_success(&coupling);
            strategy.record(slot, EveAction::Probe, Some(guess), confidence);
            Ok((carrier, EveAction::Probe))
        }
    }
}

/// Intercept-resend on both photons of an EPR pair: each photon is measured in
/// an independently chosen `Mᵢ` basis and the pair leaves in a product state.
pub fn eve_act_pair<R: Rng + ?Sized>(
    state: &Ket4,
    strategy: &mut EveStrategy,
    slot: usize,
    rng: &mut R,
) -> Result<(Ket4, EveAction)> {
    match strategy.kind {
        EveKind::None => Ok((*state, EveAction::Pass)),
        EveKind::Opaque { lambda } => {
            if !rng.gen_bool(lambda) {
                return Ok((*state, EveAction::Pass));
            }
            let first_op = rng.gen_range(0..3u8);
            let first = QuantumAlphabet::epr(first_op)?;
            let (i, after) = measure_factor(state, Factor::First, &first.basis(), rng)?;
            let second = QuantumAlphabet::epr(rng.gen_range(0..3u8))?;
            let (_, after) = measure_factor(&after, Factor::Second, &second.basis(), rng)?;
            let action = EveAction::Intercept { alphabet: first.name };
            strategy.record(slot, action, Some(i as Bit), 1.0);
            Ok((after, action))
        }
        _ => Err(Error::InvalidParameter {
            name: "eve",
            reason: "translucent probes are defined for the B92 alphabet only".into(),
        }),
    }
}

fn helstrom_success(coupling: &ProbeCoupling) -> f64 {
    let overlap = coupling.probe_overlap().norm_sqr();
    0.5 * (1.0 + (1.0 - overlap).max(0.0).sqrt())
}

/// Probe states `cos φ|0⟩ ± sin φ|1⟩`, with readout `(|0⟩ ± |1⟩)/√2`.
fn probe_pair(phi: f64) -> (Ket2, Ket2, [Ket2; 2]) {
    let readout = [
        Ket2::linear(std::f64::consts::FRAC_PI_4),
        Ket2::linear(-std::f64::consts::FRAC_PI_4),
    ];
    (Ket2::linear(phi), Ket2::linear(-phi), readout)
}

/// Carrier angle `θ'` after a product-form probe with half-angle `φ`:
/// `cos 2θ' · cos 2φ = cos 2θ`.
pub fn translucent_carrier_angle(theta: f64, phi: f64) -> f64 {
    let c = ((2.0 * theta).cos() / (2.0 * phi).cos()).clamp(-1.0, 1.0);
    0.5 * c.acos()
}

/// Product-form translucent probe for the B92 alphabet:
/// `|θ⟩|0⟩ ↦ |θ'⟩|Ψ_θ⟩`, `|θ̄⟩|0⟩ ↦ |θ̄'⟩|Ψ_θ̄⟩`.
///
/// The probe half-angle is `φ = strength·θ`, so `strength = 0` is the identity
/// and `strength = 1` collapses both carriers onto `|↕⟩`, handing the whole
/// overlap `cos 2θ` to the probe. Carrier angles follow from unitarity.
pub fn build_translucent(theta: f64, strength: f64) -> Result<EveStrategy> {
    check_b92_angle(theta)?;
    if !(0.0..=1.0).contains(&strength) {
        return Err(Error::ProbabilityOutOfRange {
            name: "strength",
            value: strength,
        });
    }
    let phi = strength * theta;
    let (probe_theta, probe_theta_bar, readout) = probe_pair(phi);
    let probe_init = Ket2::linear(0.0);
    let interaction = if strength == 0.0 {
        Operator4::identity()
    } else {
        let carrier = translucent_carrier_angle(theta, phi);
        let inputs = [
            tensor(&Ket2::linear(theta), &probe_init),
            tensor(&Ket2::linear(-theta), &probe_init),
        ];
        let outputs = [
            tensor(&Ket2::linear(carrier), &probe_theta),
            tensor(&Ket2::linear(-carrier), &probe_theta_bar),
        ];
        extend_isometry(&inputs, &outputs)?
    };
    if !interaction.is_unitary() {
        return Err(Error::NotUnitary {
            deviation: interaction.unitary_deviation(),
        });
    }
    Ok(EveStrategy::from_kind(EveKind::Translucent {
        strength,
        coupling: ProbeCoupling {
            theta,
            interaction,
            probe_init,
            probe_theta,
            probe_theta_bar,
            readout,
        },
    }))
}

/// Entangling probe: `|θ⟩|Ψ⟩ ↦ a|θ⟩|Ψ_θ⟩ + b|θ̄⟩|Ψ_θ̄⟩` and
/// `|θ̄⟩|Ψ⟩ ↦ b|θ⟩|Ψ_θ⟩ + a|θ̄⟩|Ψ_θ̄⟩`, with real `a`, `b` and real probe
/// overlap `g = ⟨Ψ_θ|Ψ_θ̄⟩`.
///
/// With `c = ⟨θ|θ̄⟩ = cos 2θ`, a unitary exists only if both images are unit
/// norm, `a² + b² + 2abcg = 1`, and their overlap is preserved,
/// `2ab + (a² + b²)cg = c`.
pub fn build_translucent_entangled(theta: f64, a: f64, b: f64, probe_overlap: f64) -> Result<EveStrategy> {
    check_b92_angle(theta)?;
    if !(-1.0..=1.0).contains(&probe_overlap) {
        return Err(Error::InvalidParameter {
            name: "probe_overlap",
            reason: format!("{probe_overlap} outside [-1, 1]"),
        });
    }
    let c = (2.0 * theta).cos();
    let g = probe_overlap;
    let norm = a * a + b * b + 2.0 * a * b * c * g;
    if (norm - 1.0).abs() > SUM_TOL {
        return Err(Error::NoUnitaryExtension(format!(
            "image norm a² + b² + 2abcg = {norm} must equal 1"
        )));
    }
    let overlap = 2.0 * a * b + (a * a + b * b) * c * g;
    if (overlap - c).abs() > SUM_TOL {
        return Err(Error::NoUnitaryExtension(format!(
            "image overlap 2ab + (a² + b²)cg = {overlap} must equal ⟨θ|θ̄⟩ = {c}"
        )));
    }
    let phi = 0.5 * g.acos();
    let (probe_theta, probe_theta_bar, readout) = probe_pair(phi);
    let probe_init = Ket2::linear(0.0);
    let t = Ket2::linear(theta);
    let tb = Ket2::linear(-theta);
    let tt = tensor(&t, &probe_theta);
    let bb = tensor(&tb, &probe_theta_bar);
    let mix =
        |x: f64, y: f64| Ket4::normalized(std::array::from_fn(|i| tt.amplitudes()[i] * x + bb.amplitudes()[i] * y));
    let inputs = [tensor(&t, &probe_init), tensor(&tb, &probe_init)];
    let outputs = [mix(a, b)?, mix(b, a)?];
    let interaction = extend_isometry(&inputs, &outputs)?;
    Ok(EveStrategy::from_kind(EveKind::TranslucentEntangled {
        a,
        b,
        coupling: ProbeCoupling {
            theta,
            interaction,
            probe_init,
            probe_theta,
            probe_theta_bar,
            readout,
        },
    }))
}

/// Per-photon EPR basis pair used by intercept-resend on an EPR source.
pub fn epr_basis(index: u8) -> [Ket2; 2] {
    let angle = epr_angle(index);
    [Ket2::linear(angle), Ket2::linear(angle + FRAC_PI_2)]
}

/// Measures Eve's probe-free guess when she reads a ket in an alphabet basis.
pub fn guess_in_alphabet<R: Rng + ?Sized>(state: &Ket2, alphabet: &QuantumAlphabet, rng: &mut R) -> Result<Bit> {
    Ok(measure_projective(state, &alphabet.basis(), rng)?.0 as Bit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{entanglement_residual, ALGEBRA_TOL};
    use crate::rng::seeded;
    use std::f64::consts::FRAC_PI_8;

    #[test]
    fn none_is_identity() {
        let mut eve = EveStrategy::none();
        let mut rng = seeded(0);
        let v = crate::hilbert::polar::vertical();
        let (out, action) = eve_act(&v, &mut eve, &EveContext::Bb84, 0, &mut rng).unwrap();
        assert!(out.approx_eq(&v, 0.0));
        assert_eq!(action, EveAction::Pass);
        assert!(eve.ledger.entries.is_empty());
    }

    #[test]
    fn opaque_rejects_bad_lambda() {
        assert!(EveStrategy::opaque(1.5).is_err());
        assert!(EveStrategy::opaque(-0.1).is_err());
    }

    #[test]
    fn opaque_resends_an_alphabet_ket() {
        let mut eve = EveStrategy::opaque(1.0).unwrap();
        let mut rng = seeded(3);
        for slot in 0..200 {
            let (out, action) = eve_act(
                &crate::hilbert::polar::right_circular(),
                &mut eve,
                &EveContext::Bb84,
                slot,
                &mut rng,
            )
            .unwrap();
            let EveAction::Intercept { alphabet } = action else {
                panic!("expected interception");
            };
            let a = match alphabet {
                AlphabetName::Circular => QuantumAlphabet::circular(),
                _ => QuantumAlphabet::rectilinear(),
            };
            assert!(a.bit_of(&out).is_some());
        }
        assert_eq!(eve.ledger.entries.len(), 200);
    }

    #[test]
    fn translucent_zero_strength_is_identity() {
        let eve = build_translucent(FRAC_PI_8, 0.0).unwrap();
        let coupling = eve.coupling().unwrap();
        assert!(coupling.interaction.max_deviation(&Operator4::identity()) == 0.0);
        assert!((coupling.probe_overlap() - C64::new(1.0, 0.0)).norm() < ALGEBRA_TOL);
    }

    #[test]
    fn translucent_outputs_are_products() {
        for i in 1..=10 {
            let s = f64::from(i) / 10.0;
            let eve = build_translucent(FRAC_PI_8, s).unwrap();
            let coupling = eve.coupling().unwrap();
            assert!(coupling.interaction.is_unitary());
            for carrier in [Ket2::linear(FRAC_PI_8), Ket2::linear(-FRAC_PI_8)] {
                assert!(entanglement_residual(&coupling.couple(&carrier)) < 1e-7);
            }
        }
    }

    #[test]
    fn translucent_distinguishability_is_monotone() {
        let mut last = -1.0;
        for i in 0..10 {
            let s = f64::from(i) / 9.0;
            let d = build_translucent(FRAC_PI_8, s)
                .unwrap()
                .coupling()
                .unwrap()
                .distinguishability();
            assert!(d >= last);
            last = d;
        }
        assert!(last > 0.0);
    }

    #[test]
    fn entangled_gram_conditions() {
        let theta = FRAC_PI_8;
        // Trivial boundary: a = 1, b = 0, probes identical.
        let eve = build_translucent_entangled(theta, 1.0, 0.0, 1.0).unwrap();
        assert!(eve.coupling().unwrap().interaction.is_unitary());

        // Perfectly distinguishable probes with no carrier mixing: impossible.
        let err = build_translucent_entangled(theta, 1.0, 0.0, 0.0).unwrap_err();
        match err {
            Error::NoUnitaryExtension(msg) => assert!(msg.contains("overlap")),
            other => panic!("unexpected {other:?}"),
        }

        let err = build_translucent_entangled(theta, 1.0, 1.0, 1.0).unwrap_err();
        match err {
            Error::NoUnitaryExtension(msg) => assert!(msg.contains("norm")),
            other => panic!("unexpected {other:?}"),
        }

        // Orthogonal probes paid for with carrier mixing sin²(π/4 − θ).
        let gamma = std::f64::consts::FRAC_PI_4 - theta;
        let eve = build_translucent_entangled(theta, gamma.cos(), gamma.sin(), 0.0).unwrap();
        let coupling = eve.coupling().unwrap();
        assert!(coupling.probe_overlap().norm() < ALGEBRA_TOL);
        assert!(coupling.interaction.is_unitary());
    }

    #[test]
    fn pair_intercept_leaves_product_state() {
        let mut eve = EveStrategy::opaque(1.0).unwrap();
        let mut rng = seeded(5);
        let singlet = Ket4::normalized([
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(-1.0, 0.0),
            C64::new(0.0, 0.0),
        ])
        .unwrap();
        for slot in 0..50 {
            let (out, _) = eve_act_pair(&singlet, &mut eve, slot, &mut rng).unwrap();
            assert!(entanglement_residual(&out) < 1e-9);
        }
    }
}

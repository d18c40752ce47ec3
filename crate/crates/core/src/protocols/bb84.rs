//! BB84: stage 1, sifting, and the two error checks.

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use super::{check_equal_length, BobOutcome, KeyMaterial, KeyStage, TransmissionRecord};
use crate::alphabets::{encode, receive, Outcome, QuantumAlphabet, ReceiverStrategy};
use crate::channel::{transmit, Party, PublicTranscript, QuantumChannelConfig};
use crate::eavesdrop::{EveContext, EveStrategy};
use crate::error::{Error, Result};
use crate::rng::SessionRngs;

pub const PHASE_BASES: &str = "sift-bases";
pub const PHASE_CONFIRM: &str = "sift-confirm";
pub const PHASE_DETECT_POSITIONS: &str = "detect-positions";
pub const PHASE_ESTIMATE_POSITIONS: &str = "estimate-positions";
pub const PHASE_REVEAL_ALICE: &str = "reveal-alice";
pub const PHASE_REVEAL_BOB: &str = "reveal-bob";

fn pick_alphabet<R: Rng + ?Sized>(rng: &mut R) -> QuantumAlphabet {
    if rng.gen_bool(0.5) {
        QuantumAlphabet::circular()
    } else {
        QuantumAlphabet::rectilinear()
    }
}

pub fn bb84_stage1(
    n: usize,
    channel: &QuantumChannelConfig,
    eve: &mut EveStrategy,
    rngs: &mut SessionRngs,
) -> Result<Vec<TransmissionRecord>> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "at least one slot is required".into(),
        });
    }
    channel.validate()?;
    let mut records = Vec::with_capacity(n);
    for slot in 0..n {
        let alphabet = pick_alphabet(&mut rngs.alice);
        let bit = u8::from(rngs.alice.gen_bool(0.5));
        let photon = encode(bit, &alphabet);
        let (received, eve_action) = transmit(
            &photon,
            channel,
            eve,
            &EveContext::Bb84,
            slot,
            &mut rngs.channel,
            &mut rngs.eve,
        )?;
        let basis = pick_alphabet(&mut rngs.bob);
        let bob_outcome = match received {
            None => BobOutcome::NonReception,
            Some(k) => match receive(&k, &ReceiverStrategy::orthogonal(basis)?, &mut rngs.bob)?.outcome {
                Outcome::Bit(b) => BobOutcome::Bit(b),
                Outcome::Erasure => BobOutcome::Erasure,
            },
        };
        records.push(TransmissionRecord {
            slot,
            alice_bit: bit,
            alice_alphabet: alphabet.name,
            eve_action,
            bob_strategy: alphabet_label(&basis),
            bob_outcome,
        });
    }
    Ok(records)
}

fn alphabet_label(a: &QuantumAlphabet) -> String {
    a.name.to_string()
}

#[derive(Serialize, serde::Deserialize)]
struct BasisAnnouncement {
    slot: usize,
    basis: String,
}

/// Bob announces the basis of every slot in which he got a bit; Alice answers
/// with the slots whose basis matched her alphabet. Both keys are then built
/// from Alice's confirmation as read back from the transcript.
pub fn sift(records: &[TransmissionRecord], transcript: &mut PublicTranscript) -> (KeyMaterial, KeyMaterial) {
    let announced: Vec<BasisAnnouncement> = records
        .iter()
        .filter(|r| r.bob_outcome.bit().is_some())
        .map(|r| BasisAnnouncement {
            slot: r.slot,
            basis: r.bob_strategy.clone(),
        })
        .collect();
    transcript.publish_json(Party::Bob, PHASE_BASES, &announced);

    let heard: Vec<BasisAnnouncement> = transcript.records().last().and_then(|r| r.json()).unwrap_or_default();
    let confirmed: Vec<usize> = heard
        .iter()
        .filter(|a| records[a.slot].alice_alphabet.to_string() == a.basis)
        .map(|a| a.slot)
        .collect();
    transcript.publish_json(Party::Alice, PHASE_CONFIRM, &confirmed);
    keys_from_confirmation(records, transcript)
}

pub(crate) fn keys_from_confirmation(
    records: &[TransmissionRecord],
    transcript: &PublicTranscript,
) -> (KeyMaterial, KeyMaterial) {
    let confirmed: Vec<usize> = transcript
        .phase(PHASE_CONFIRM)
        .last()
        .and_then(|r| r.json())
        .unwrap_or_default();
    let alice = confirmed.iter().map(|&s| records[s].alice_bit).collect();
    let bob = confirmed
        .iter()
        .map(|&s| records[s].bob_outcome.bit().expect("confirmed slots carry a bit"))
        .collect();
    (
        KeyMaterial::raw(alice, confirmed.clone()),
        KeyMaterial::raw(bob, confirmed),
    )
}

/// Publicly compares the bits at `positions` and removes them from both keys.
/// Returns the number of mismatches.
fn reveal_and_discard(
    alice: &mut KeyMaterial,
    bob: &mut KeyMaterial,
    positions: Vec<usize>,
    positions_phase: &str,
    transcript: &mut PublicTranscript,
) -> usize {
    let a: Vec<u8> = positions.iter().map(|&p| alice.bits[p]).collect();
    let b: Vec<u8> = positions.iter().map(|&p| bob.bits[p]).collect();
    transcript.publish_json(Party::Alice, positions_phase, &positions);
    transcript.publish_json(Party::Alice, PHASE_REVEAL_ALICE, &a);
    transcript.publish_json(Party::Bob, PHASE_REVEAL_BOB, &b);
    alice.remove_positions(&positions);
    bob.remove_positions(&positions);
    a.iter().zip(&b).filter(|(x, y)| x != y).count()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DetectOutcome {
    pub clean: bool,
    pub mismatches: usize,
    /// `(1 − λ/4)^m` for the configured λ, assuming Eve acts i.i.d. per slot.
    pub p_false: f64,
}

pub fn p_false(lambda: f64, m: usize) -> f64 {
    (1.0 - lambda / 4.0).powi(m as i32)
}

/// Noiseless check: any disagreement among `m` public positions means Eve.
pub fn detect_noiseless<R: Rng + ?Sized>(
    alice: &mut KeyMaterial,
    bob: &mut KeyMaterial,
    m: usize,
    lambda: f64,
    rng: &mut R,
    transcript: &mut PublicTranscript,
) -> Result<DetectOutcome> {
    check_equal_length(alice, bob)?;
    if m > alice.len() {
        return Err(Error::NotEnoughKey {
            requested: m,
            available: alice.len(),
        });
    }
    let positions = sample(rng, alice.len(), m).into_vec();
    let mismatches = reveal_and_discard(alice, bob, positions, PHASE_DETECT_POSITIONS, transcript);
    alice.advance(KeyStage::Estimated)?;
    bob.advance(KeyStage::Estimated)?;
    Ok(DetectOutcome {
        clean: mismatches == 0,
        mismatches,
        p_false: p_false(lambda, m),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorEstimate {
    pub r: f64,
    pub proceed: bool,
    pub sample_len: usize,
}

pub fn estimate_error<R: Rng + ?Sized>(
    alice: &mut KeyMaterial,
    bob: &mut KeyMaterial,
    sample_fraction: f64,
    r_max: f64,
    rng: &mut R,
    transcript: &mut PublicTranscript,
) -> Result<ErrorEstimate> {
    check_equal_length(alice, bob)?;
    if !(sample_fraction > 0.0 && sample_fraction < 1.0) {
        return Err(Error::InvalidParameter {
            name: "sample_fraction",
            reason: format!("{sample_fraction} outside (0, 1)"),
        });
    }
    if alice.is_empty() {
        return Err(Error::EmptySample);
    }
    let sample_len = ((sample_fraction * alice.len() as f64).round() as usize).clamp(1, alice.len());
    let positions = sample(rng, alice.len(), sample_len).into_vec();
    let mismatches = reveal_and_discard(alice, bob, positions, PHASE_ESTIMATE_POSITIONS, transcript);
    alice.advance(KeyStage::Estimated)?;
    bob.advance(KeyStage::Estimated)?;
    let r = mismatches as f64 / sample_len as f64;
    Ok(ErrorEstimate {
        r,
        proceed: r <= r_max,
        sample_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::{disagreement, pre_sift_accuracy};
    use crate::rng::seeded;

    fn run(n: usize, lambda: f64, seed: u64) -> Vec<TransmissionRecord> {
        let mut eve = EveStrategy::opaque(lambda).unwrap();
        bb84_stage1(n, &QuantumChannelConfig::ideal(), &mut eve, &mut SessionRngs::new(seed)).unwrap()
    }

    #[test]
    fn single_slot_replays() {
        assert_eq!(run(1, 0.0, 9), run(1, 0.0, 9));
        assert!(bb84_stage1(
            0,
            &QuantumChannelConfig::ideal(),
            &mut EveStrategy::none(),
            &mut SessionRngs::new(1)
        )
        .is_err());
    }

    #[test]
    fn accuracy_and_error_jump() {
        let n = 100_000;
        assert!((pre_sift_accuracy(&run(n, 0.0, 1)) - 0.75).abs() < 0.01);
        let err = 1.0 - pre_sift_accuracy(&run(n, 1.0, 2));
        assert!((err - 0.375).abs() < 0.01);
        let err = 1.0 - pre_sift_accuracy(&run(n, 0.5, 3));
        assert!((err - 0.3125).abs() < 0.01);
    }

    #[test]
    fn sift_agrees_without_eve() {
        let n = 100_000;
        let records = run(n, 0.0, 4);
        let mut t = PublicTranscript::new();
        let (a, b) = sift(&records, &mut t);
        assert_eq!(a, b);
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((a.len() as f64 - n as f64 / 2.0).abs() < 3.0 * sigma);
        assert_eq!(t.len(), 2);
        assert_eq!(t.records()[0].sender, Party::Bob);
    }

    #[test]
    fn raw_disagreement_quarter_lambda() {
        for (lambda, seed) in [(1.0, 5), (0.5, 6)] {
            let records = run(200_000, lambda, seed);
            let (a, b) = sift(&records, &mut PublicTranscript::new());
            assert!((disagreement(&a, &b) - lambda / 4.0).abs() < 0.01);
        }
    }

    #[test]
    fn detection_without_eve_is_clean() {
        let records = run(2000, 0.0, 7);
        let mut t = PublicTranscript::new();
        let (mut a, mut b) = sift(&records, &mut t);
        let before = a.len();
        let d = detect_noiseless(&mut a, &mut b, 200, 0.0, &mut seeded(1), &mut t).unwrap();
        assert!(d.clean);
        assert_eq!(d.p_false, 1.0);
        assert_eq!(a.len(), before - 200);
        assert!(detect_noiseless(&mut a, &mut b, 10_000, 0.0, &mut seeded(1), &mut t).is_err());
    }

    #[test]
    fn p_false_closed_form() {
        let p = p_false(1.0, 200);
        let expected = 0.75f64.powi(200);
        assert!(((p - expected) / expected).abs() < 1e-12);
        assert!((p.log10() + 25.0).abs() < 0.1);
    }

    #[test]
    fn estimate_thresholds() {
        let mut a = KeyMaterial::raw(vec![0; 100], (0..100).collect());
        let mut b = a.clone();
        let e = estimate_error(&mut a, &mut b, 0.1, 0.12, &mut seeded(1), &mut PublicTranscript::new()).unwrap();
        assert_eq!(e.r, 0.0);
        assert!(e.proceed);
        assert_eq!(a.len(), 90);

        let mut a = KeyMaterial::raw(vec![0; 1000], (0..1000).collect());
        let mut b = KeyMaterial::raw((0..1000).map(|i| u8::from(i % 10 < 3)).collect(), (0..1000).collect());
        let e = estimate_error(&mut a, &mut b, 0.5, 0.12, &mut seeded(2), &mut PublicTranscript::new()).unwrap();
        assert!((e.r - 0.3).abs() < 0.05);
        assert!(!e.proceed);

        let mut a = KeyMaterial::raw(vec![], vec![]);
        let mut b = a.clone();
        assert_eq!(
            estimate_error(&mut a, &mut b, 0.1, 0.12, &mut seeded(3), &mut PublicTranscript::new()),
            Err(Error::EmptySample)
        );
    }
}

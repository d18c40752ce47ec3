//! B92 stage 1 and its sifting phase. The later phases are BB84's.

use rand::Rng;

use super::bb84::{keys_from_confirmation, PHASE_CONFIRM};
use super::{BobOutcome, KeyMaterial, TransmissionRecord};
use crate::alphabets::{encode, receive, Outcome, QuantumAlphabet, ReceiverKind, ReceiverStrategy};
use crate::channel::{transmit, Party, PublicTranscript, QuantumChannelConfig};
use crate::eavesdrop::{EveContext, EveStrategy};
use crate::error::{Error, Result};
use crate::rng::SessionRngs;

pub const PHASE_CONCLUSIVE: &str = "sift-conclusive";

pub fn b92_stage1(
    n: usize,
    theta: f64,
    receiver: ReceiverKind,
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
    let alphabet = QuantumAlphabet::b92(theta)?;
    let strategy = ReceiverStrategy::b92(theta, receiver)?;
    let context = EveContext::B92 { theta, receiver };
    let mut records = Vec::with_capacity(n);
    for slot in 0..n {
        let bit = u8::from(rngs.alice.gen_bool(0.5));
        let (received, eve_action) = transmit(
            &encode(bit, &alphabet),
            channel,
            eve,
            &context,
            slot,
            &mut rngs.channel,
            &mut rngs.eve,
        )?;
        let (bob_outcome, setting) = match received {
            None => (BobOutcome::NonReception, "none"),
            Some(k) => {
                let r = receive(&k, &strategy, &mut rngs.bob)?;
                let outcome = match r.outcome {
                    Outcome::Bit(b) => BobOutcome::Bit(b),
                    Outcome::Erasure => BobOutcome::Erasure,
                };
                (outcome, r.setting)
            }
        };
        records.push(TransmissionRecord {
            slot,
            alice_bit: bit,
            alice_alphabet: alphabet.name,
            eve_action,
            bob_strategy: setting.to_owned(),
            bob_outcome,
        });
    }
    Ok(records)
}

/// Bob names the slots with a conclusive result; Alice acknowledges them.
pub fn b92_sift(records: &[TransmissionRecord], transcript: &mut PublicTranscript) -> (KeyMaterial, KeyMaterial) {
    let conclusive: Vec<usize> = records
        .iter()
        .filter(|r| r.bob_outcome.bit().is_some())
        .map(|r| r.slot)
        .collect();
    transcript.publish_json(Party::Bob, PHASE_CONCLUSIVE, &conclusive);
    let heard: Vec<usize> = transcript.records().last().and_then(|r| r.json()).unwrap_or_default();
    transcript.publish_json(Party::Alice, PHASE_CONFIRM, &heard);
    keys_from_confirmation(records, transcript)
}

pub fn erasure_rate(records: &[TransmissionRecord]) -> f64 {
    let received = records
        .iter()
        .filter(|r| r.bob_outcome != BobOutcome::NonReception)
        .count();
    if received == 0 {
        return 0.0;
    }
    let erased = records.iter().filter(|r| r.bob_outcome == BobOutcome::Erasure).count();
    erased as f64 / received as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::disagreement;
    use std::f64::consts::FRAC_PI_8;

    fn run(kind: ReceiverKind, seed: u64) -> Vec<TransmissionRecord> {
        b92_stage1(
            100_000,
            FRAC_PI_8,
            kind,
            &QuantumChannelConfig::ideal(),
            &mut EveStrategy::none(),
            &mut SessionRngs::new(seed),
        )
        .unwrap()
    }

    #[test]
    fn projective_erasure_rate() {
        let records = run(ReceiverKind::Projective, 1);
        assert!((erasure_rate(&records) - 0.75).abs() < 0.01);
        let (a, b) = b92_sift(&records, &mut PublicTranscript::new());
        assert_eq!(a, b);
        assert!((a.len() as f64 / 1e5 - 0.25).abs() < 0.01);
    }

    #[test]
    fn povm_inconclusive_rate() {
        let records = run(ReceiverKind::Povm, 2);
        assert!((erasure_rate(&records) - (std::f64::consts::FRAC_PI_4).cos()).abs() < 0.01);
        let (a, b) = b92_sift(&records, &mut PublicTranscript::new());
        assert_eq!(disagreement(&a, &b), 0.0);
    }

    #[test]
    fn rejects_bad_angle() {
        let r = b92_stage1(
            10,
            1.0,
            ReceiverKind::Povm,
            &QuantumChannelConfig::ideal(),
            &mut EveStrategy::none(),
            &mut SessionRngs::new(1),
        );
        assert!(matches!(r, Err(Error::AngleOutOfRange { .. })));
    }
}

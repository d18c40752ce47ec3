//! Quantum channel (Eve, then noise, then loss) and the public transcript.

use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::eavesdrop::{eve_act, EveAction, EveContext, EveStrategy};
use crate::error::{Error, Result};
use crate::hilbert::{polar, Ket2};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantumChannelConfig {
    pub p_flip: f64,
    pub p_loss: f64,
}

impl QuantumChannelConfig {
    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("p_flip", self.p_flip), ("p_loss", self.p_loss)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::ProbabilityOutOfRange { name, value });
            }
        }
        Ok(())
    }
}

/// Replacement state for a disturbed photon: a random basis state of a
/// random basis among rectilinear, diagonal and circular.
fn random_basis_state<R: Rng + ?Sized>(rng: &mut R) -> Ket2 {
    let basis = match rng.gen_range(0..3) {
        0 => polar::rectilinear_basis(),
        1 => polar::diagonal_basis(),
        _ => polar::circular_basis(),
    };
    basis[rng.gen_range(0..2)]
}

/// Sends one photon from Alice to Bob. `None` means Bob's detector saw nothing.
///
/// The flip and loss draws happen on every call so that the channel stream
/// stays aligned across configurations that differ only in Eve.
pub fn transmit<R: Rng + ?Sized, E: Rng + ?Sized>(
    state: &Ket2,
    cfg: &QuantumChannelConfig,
    eve: &mut EveStrategy,
    context: &EveContext,
    slot: usize,
    channel_rng: &mut R,
    eve_rng: &mut E,
) -> Result<(Option<Ket2>, EveAction)> {
    let (mut photon, action) = eve_act(state, eve, context, slot, eve_rng)?;
    let flipped = channel_rng.gen_bool(cfg.p_flip);
    let replacement = random_basis_state(channel_rng);
    if flipped {
        photon = replacement;
    }
    let lost = channel_rng.gen_bool(cfg.p_loss);
    Ok(((!lost).then_some(photon), action))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Alice,
    Bob,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptRecord {
    pub sender: Party,
    pub phase: String,
    pub payload: Vec<u8>,
}

impl TranscriptRecord {
    pub fn json<T: for<'de> Deserialize<'de>>(&self) -> Option<T> {
        serde_json::from_slice(&self.payload).ok()
    }
}

/// Append-only public channel. Eve reads it through [`PublicTranscript::records`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PublicTranscript {
    records: Vec<TranscriptRecord>,
}

impl PublicTranscript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&mut self, sender: Party, phase: &str, payload: Vec<u8>) {
        self.records.push(TranscriptRecord {
            sender,
            phase: phase.to_owned(),
            payload,
        });
    }

    pub fn publish_json<T: Serialize>(&mut self, sender: Party, phase: &str, payload: &T) {
        let bytes = serde_json::to_vec(payload).expect("transcript payloads are plain data");
        self.publish(sender, phase, bytes);
    }

    pub fn records(&self) -> &[TranscriptRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn phase<'a>(&'a self, phase: &'a str) -> impl Iterator<Item = &'a TranscriptRecord> + 'a {
        self.records.iter().filter(move |r| r.phase == phase)
    }

    /// One JSON object per line. Payloads that are JSON are embedded as-is,
    /// anything else as a hex string.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            let payload = serde_json::from_slice::<serde_json::Value>(&r.payload)
                .unwrap_or_else(|_| serde_json::Value::String(hex(&r.payload)));
            let line = serde_json::json!({
                "sender": r.sender,
                "phase": r.phase,
                "payload": payload,
            });
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn ideal_channel_is_identity() {
        let mut eve = EveStrategy::none();
        let (mut c, mut e) = (seeded(1), seeded(2));
        for k in [polar::vertical(), polar::right_circular(), Ket2::linear(0.3)] {
            let (out, _) = transmit(
                &k,
                &QuantumChannelConfig::ideal(),
                &mut eve,
                &EveContext::Bb84,
                0,
                &mut c,
                &mut e,
            )
            .unwrap();
            assert!(out.unwrap().approx_eq(&k, 1e-12));
        }
    }

    #[test]
    fn loss_fraction() {
        let cfg = QuantumChannelConfig {
            p_flip: 0.0,
            p_loss: 0.1,
        };
        let mut eve = EveStrategy::none();
        let (mut c, mut e) = (seeded(7), seeded(8));
        let n = 100_000;
        let lost = (0..n)
            .filter(|&i| {
                transmit(&polar::vertical(), &cfg, &mut eve, &EveContext::Bb84, i, &mut c, &mut e)
                    .unwrap()
                    .0
                    .is_none()
            })
            .count();
        assert!((lost as f64 / n as f64 - 0.1).abs() < 0.005);
    }

    #[test]
    fn opaque_eve_on_circular_stream() {
        use crate::alphabets::{receive, Outcome, QuantumAlphabet, ReceiverStrategy};
        let mut eve = EveStrategy::opaque(1.0).unwrap();
        let bob = ReceiverStrategy::orthogonal(QuantumAlphabet::circular()).unwrap();
        let (mut c, mut e, mut b) = (seeded(1), seeded(2), seeded(3));
        let n = 100_000;
        let mut errors = 0;
        for i in 0..n {
            let (out, _) = transmit(
                &polar::right_circular(),
                &QuantumChannelConfig::ideal(),
                &mut eve,
                &EveContext::Bb84,
                i,
                &mut c,
                &mut e,
            )
            .unwrap();
            if receive(&out.unwrap(), &bob, &mut b).unwrap().outcome != Outcome::Bit(1) {
                errors += 1;
            }
        }
        assert!((errors as f64 / n as f64 - 0.25).abs() < 0.01);
    }

    #[test]
    fn rejects_bad_probabilities() {
        let cfg = QuantumChannelConfig {
            p_flip: 1.2,
            p_loss: 0.0,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn transcript_is_append_only_and_ordered() {
        let mut t = PublicTranscript::new();
        assert!(t.is_empty());
        t.publish_json(Party::Bob, "bases", &vec!["circular"; 5]);
        t.publish(Party::Alice, "confirm", vec![0xff, 0x00]);
        assert_eq!(t.len(), 2);
        assert_eq!(t.records()[0].sender, Party::Bob);
        let decoded: Vec<String> = t.records()[0].json().unwrap();
        assert_eq!(decoded.len(), 5);

        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].contains("\"ff00\""));
    }
}

//! Session orchestration: quantum stage, public phases, key bookkeeping.

pub mod b92;
pub mod bb84;
pub mod epr;
pub mod session;

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::alphabets::{AlphabetName, Bit};
use crate::eavesdrop::EveAction;
use crate::error::{Error, Result};

pub use b92::{b92_sift, b92_stage1};
pub use bb84::{bb84_stage1, detect_noiseless, estimate_error, sift, DetectOutcome, ErrorEstimate};
pub use epr::{bell_test, epr_split, epr_stage1, BellResult, EprSource, RejectedSlot};
pub use session::{run_session, EveSpec, Protocol, SessionConfig, SessionOutcome, SessionReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyStage {
    Raw,
    Estimated,
    Reconciled,
    Final,
}

/// One party's key at some stage. `slots` maps each bit back to the time slot
/// it came from; that mapping is public (it follows from the transcript).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyMaterial {
    pub bits: Vec<Bit>,
    pub slots: Vec<usize>,
    pub stage: KeyStage,
    pub leaked_parities: usize,
}

impl KeyMaterial {
    pub fn raw(bits: Vec<Bit>, slots: Vec<usize>) -> Self {
        assert_eq!(bits.len(), slots.len());
        Self {
            bits,
            slots,
            stage: KeyStage::Raw,
            leaked_parities: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn advance(&mut self, to: KeyStage) -> Result<()> {
        if to <= self.stage {
            return Err(Error::BadStage { from: self.stage, to });
        }
        self.stage = to;
        Ok(())
    }

    pub fn require_stage(&self, stage: KeyStage) -> Result<()> {
        if self.stage != stage {
            return Err(Error::InvalidParameter {
                name: "stage",
                reason: format!("expected {stage:?}, key is {:?}", self.stage),
            });
        }
        Ok(())
    }

    /// Drops the given positions (any order, duplicates allowed).
    pub fn remove_positions(&mut self, positions: &[usize]) {
        let mut drop = vec![false; self.bits.len()];
        for &p in positions {
            drop[p] = true;
        }
        let mut keep = drop.iter().map(|d| !d);
        self.bits.retain(|_| keep.next().unwrap());
        let mut keep = drop.iter().map(|d| !d);
        self.slots.retain(|_| keep.next().unwrap());
    }

    pub fn permute(&mut self, order: &[usize]) {
        self.bits = order.iter().map(|&i| self.bits[i]).collect();
        self.slots = order.iter().map(|&i| self.slots[i]).collect();
    }
}

pub fn check_equal_length(alice: &KeyMaterial, bob: &KeyMaterial) -> Result<()> {
    if alice.len() != bob.len() {
        return Err(Error::LengthMismatch {
            alice: alice.len(),
            bob: bob.len(),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BobOutcome {
    Bit(Bit),
    Erasure,
    NonReception,
}

impl BobOutcome {
    pub fn bit(&self) -> Option<Bit> {
        match self {
            Self::Bit(b) => Some(*b),
            _ => None,
        }
    }
}

impl fmt::Display for BobOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bit(b) => write!(f, "{b}"),
            Self::Erasure => f.write_str("erasure"),
            Self::NonReception => f.write_str("none"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmissionRecord {
    pub slot: usize,
    pub alice_bit: Bit,
    pub alice_alphabet: AlphabetName,
    pub eve_action: EveAction,
    pub bob_strategy: String,
    pub bob_outcome: BobOutcome,
}

impl TransmissionRecord {
    /// Fields Bob and Alice can see, i.e. everything but Eve's action.
    pub fn visible(&self) -> (usize, Bit, AlphabetName, &str, BobOutcome) {
        (
            self.slot,
            self.alice_bit,
            self.alice_alphabet,
            &self.bob_strategy,
            self.bob_outcome,
        )
    }
}

pub const CSV_HEADER: &str = "slot,alice_bit,alice_alphabet,eve_action,bob_strategy,bob_outcome";

pub fn write_csv<W: Write>(records: &[TransmissionRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.slot, r.alice_bit, r.alice_alphabet, r.eve_action, r.bob_strategy, r.bob_outcome
        )?;
    }
    Ok(())
}

/// Fraction of received slots where Bob's outcome equals Alice's bit,
/// regardless of basis. Erasures count as misses.
pub fn pre_sift_accuracy(records: &[TransmissionRecord]) -> f64 {
    let received: Vec<_> = records
        .iter()
        .filter(|r| r.bob_outcome != BobOutcome::NonReception)
        .collect();
    if received.is_empty() {
        return 0.0;
    }
    let hits = received
        .iter()
        .filter(|r| r.bob_outcome == BobOutcome::Bit(r.alice_bit))
        .count();
    hits as f64 / received.len() as f64
}

pub fn disagreement(alice: &KeyMaterial, bob: &KeyMaterial) -> f64 {
    if alice.is_empty() {
        return 0.0;
    }
    let wrong = alice.bits.iter().zip(&bob.bits).filter(|(a, b)| a != b).count();
    wrong as f64 / alice.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stages_only_move_forward() {
        let mut k = KeyMaterial::raw(vec![0, 1], vec![0, 1]);
        k.advance(KeyStage::Estimated).unwrap();
        assert!(k.advance(KeyStage::Raw).is_err());
        assert!(k.advance(KeyStage::Estimated).is_err());
        k.advance(KeyStage::Final).unwrap();
    }

    #[test]
    fn remove_keeps_slots_aligned() {
        let mut k = KeyMaterial::raw(vec![0, 1, 1, 0, 1], vec![10, 11, 12, 13, 14]);
        k.remove_positions(&[3, 1, 3]);
        assert_eq!(k.bits, vec![0, 1, 1]);
        assert_eq!(k.slots, vec![10, 12, 14]);
    }

    #[test]
    fn csv_columns() {
        let r = TransmissionRecord {
            slot: 0,
            alice_bit: 1,
            alice_alphabet: AlphabetName::Circular,
            eve_action: EveAction::Pass,
            bob_strategy: "rectilinear".into(),
            bob_outcome: BobOutcome::NonReception,
        };
        let mut buf = Vec::new();
        write_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, format!("{CSV_HEADER}\n0,1,circular,pass,rectilinear,none\n"));
    }
}

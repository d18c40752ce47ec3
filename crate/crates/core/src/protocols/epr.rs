//! EPR protocol: entangled source, split into raw and rejected keys, Bell test.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BobOutcome, KeyMaterial, TransmissionRecord};
use crate::alphabets::{epr_angle, AlphabetName, Bit, QuantumAlphabet};
use crate::channel::{Party, PublicTranscript};
use crate::eavesdrop::{eve_act_pair, EveStrategy};
use crate::error::{Error, Result};
use crate::hilbert::{measure_factor, tensor, Factor, Ket2, Ket4, ALGEBRA_TOL, C64};
use crate::rng::SessionRngs;

pub const PHASE_OPS_ALICE: &str = "epr-operators-alice";
pub const PHASE_OPS_BOB: &str = "epr-operators-bob";
pub const PHASE_REJECTED_ALICE: &str = "epr-rejected-alice";
pub const PHASE_REJECTED_BOB: &str = "epr-rejected-bob";

#[derive(Clone, Debug, PartialEq)]
pub struct EprSource {
    pub omegas: [Ket4; 3],
}

impl Default for EprSource {
    fn default() -> Self {
        Self::new()
    }
}

impl EprSource {
    /// `Ωⱼ = (|jπ/6⟩|(j+3)π/6⟩ − |(j+3)π/6⟩|jπ/6⟩)/√2`
    pub fn new() -> Self {
        let omegas = std::array::from_fn(|j| {
            let a = Ket2::linear(epr_angle(j as u8));
            let b = Ket2::linear(epr_angle(j as u8 + 3));
            let ab = tensor(&a, &b);
            let ba = tensor(&b, &a);
            Ket4::normalized(std::array::from_fn(|i| ab.amplitudes()[i] - ba.amplitudes()[i]))
                .expect("the two product terms are orthogonal")
        });
        Self { omegas }
    }

    pub fn check(&self) -> Result<()> {
        for omega in &self.omegas {
            if (omega.norm() - 1.0).abs() > ALGEBRA_TOL {
                return Err(Error::NotNormalized { norm: omega.norm() });
            }
            let deviation = antisymmetry_deviation(omega);
            if deviation > ALGEBRA_TOL {
                return Err(Error::InvalidParameter {
                    name: "omega",
                    reason: format!("not antisymmetric under swap (deviation {deviation:e})"),
                });
            }
        }
        Ok(())
    }
}

/// `‖SWAP|ψ⟩ + |ψ⟩‖`
pub fn antisymmetry_deviation(state: &Ket4) -> f64 {
    let [a, b, c, d] = *state.amplitudes();
    let swapped: [C64; 4] = [a, c, b, d];
    swapped
        .iter()
        .zip(state.amplitudes())
        .map(|(s, x)| (s + x).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

pub fn epr_stage1(
    n: usize,
    source: &EprSource,
    eve: &mut EveStrategy,
    rngs: &mut SessionRngs,
) -> Result<Vec<TransmissionRecord>> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "at least one slot is required".into(),
        });
    }
    source.check()?;
    let mut records = Vec::with_capacity(n);
    for slot in 0..n {
        let omega = source.omegas[rngs.source.gen_range(0..3)];
        let (pair, eve_action) = eve_act_pair(&omega, eve, slot, &mut rngs.eve)?;
        let i = rngs.alice.gen_range(0..3u8);
        let j = rngs.bob.gen_range(0..3u8);
        let (a, after) = measure_factor(&pair, Factor::First, &QuantumAlphabet::epr(i)?.basis(), &mut rngs.alice)?;
        let (b, _) = measure_factor(&after, Factor::Second, &QuantumAlphabet::epr(j)?.basis(), &mut rngs.bob)?;
        records.push(TransmissionRecord {
            slot,
            alice_bit: a as Bit,
            alice_alphabet: AlphabetName::Epr(i),
            eve_action,
            bob_strategy: format!("m{j}"),
            // Bob keeps the complement of what he measured.
            bob_outcome: BobOutcome::Bit(1 - b as Bit),
        });
    }
    Ok(records)
}

fn alice_op(r: &TransmissionRecord) -> u8 {
    match r.alice_alphabet {
        AlphabetName::Epr(i) => i,
        _ => panic!("not an EPR record"),
    }
}

fn bob_op(r: &TransmissionRecord) -> u8 {
    r.bob_strategy
        .strip_prefix('m')
        .and_then(|s| s.parse().ok())
        .expect("EPR records carry m0, m1 or m2")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedSlot {
    pub slot: usize,
    pub alice_op: u8,
    pub bob_op: u8,
    pub alice_bit: Bit,
    pub bob_bit: Bit,
}

/// Both parties announce their operators. Equal operators go to the raw key,
/// the rest to the rejected key, which is then revealed for the Bell test.
pub fn epr_split(
    records: &[TransmissionRecord],
    transcript: &mut PublicTranscript,
) -> (KeyMaterial, KeyMaterial, Vec<RejectedSlot>) {
    let ops_a: Vec<u8> = records.iter().map(alice_op).collect();
    let ops_b: Vec<u8> = records.iter().map(bob_op).collect();
    transcript.publish_json(Party::Alice, PHASE_OPS_ALICE, &ops_a);
    transcript.publish_json(Party::Bob, PHASE_OPS_BOB, &ops_b);

    let (mut ka, mut kb, mut slots) = (Vec::new(), Vec::new(), Vec::new());
    let mut rejected = Vec::new();
    for (r, (&i, &j)) in records.iter().zip(ops_a.iter().zip(&ops_b)) {
        let bob_bit = r.bob_outcome.bit().expect("EPR slots always yield a bit");
        if i == j {
            ka.push(r.alice_bit);
            kb.push(bob_bit);
            slots.push(r.slot);
        } else {
            rejected.push(RejectedSlot {
                slot: r.slot,
                alice_op: i,
                bob_op: j,
                alice_bit: r.alice_bit,
                bob_bit,
            });
        }
    }
    let a_bits: Vec<Bit> = rejected.iter().map(|r| r.alice_bit).collect();
    let b_bits: Vec<Bit> = rejected.iter().map(|r| r.bob_bit).collect();
    transcript.publish_json(Party::Alice, PHASE_REJECTED_ALICE, &a_bits);
    transcript.publish_json(Party::Bob, PHASE_REJECTED_BOB, &b_bits);
    (
        KeyMaterial::raw(ka, slots.clone()),
        KeyMaterial::raw(kb, slots),
        rejected,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BellResult {
    pub beta: f64,
    pub se: f64,
    /// `Δ(0,1)`, `Δ(0,2)`, `Δ(1,2)`
    pub deltas: [f64; 3],
    pub counts: [usize; 3],
    pub eve_detected: bool,
}

pub const PAIRS: [(u8, u8); 3] = [(0, 1), (0, 2), (1, 2)];

/// `β = 1 + Δ(1,2) − |Δ(0,1) − Δ(0,2)|`, `Δ = P(≠) − P(=)`, pooling `(i,j)`
/// with `(j,i)`. Eve is flagged when `β ≥ −sigmas·SE(β)`.
pub fn bell_test(rejected: &[RejectedSlot], sigmas: f64) -> Result<BellResult> {
    let mut counts = [0usize; 3];
    let mut differ = [0usize; 3];
    for r in rejected {
        let key = (r.alice_op.min(r.bob_op), r.alice_op.max(r.bob_op));
        let Some(pair) = PAIRS.iter().position(|&p| p == key) else {
            continue;
        };
        counts[pair] += 1;
        if r.alice_bit != r.bob_bit {
            differ[pair] += 1;
        }
    }
    let mut deltas = [0.0; 3];
    let mut variance = 0.0;
    for (k, &(i, j)) in PAIRS.iter().enumerate() {
        if counts[k] == 0 {
            return Err(Error::MissingOperatorPair(i as usize, j as usize));
        }
        let p = differ[k] as f64 / counts[k] as f64;
        deltas[k] = 2.0 * p - 1.0;
        variance += 4.0 * p * (1.0 - p) / counts[k] as f64;
    }
    let [d01, d02, d12] = deltas;
    let beta = 1.0 + d12 - (d01 - d02).abs();
    let se = variance.sqrt();
    Ok(BellResult {
        beta,
        se,
        deltas,
        counts,
        eve_detected: beta >= -sigmas * se,
    })
}

//! Reconciliation by public parity comparison, and privacy amplification by
//! undisclosed random-subset parities.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alphabets::Bit;
use crate::channel::{Party, PublicTranscript};
use crate::eavesdrop::EveLedger;
use crate::error::{Error, Result};
use crate::protocols::{check_equal_length, KeyMaterial, KeyStage};

pub const PHASE_PERMUTATION: &str = "reconcile-permutation";
pub const PHASE_PARITY: &str = "reconcile-parity";
pub const PHASE_VERDICT: &str = "reconcile-verdict";
pub const PHASE_LOCATE: &str = "reconcile-locate";
pub const PHASE_COMMIT: &str = "reconcile-commit";
pub const PHASE_SUBSET: &str = "privacy-subset";

/// Block length used when the estimated error rate is zero.
pub const ZERO_ERROR_BLOCK_LEN: usize = 64;
const BLOCK_LEN_CONSTANT: f64 = 0.73;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconcileConfig {
    /// `None` picks the length from the estimated error rate.
    pub block_len: Option<usize>,
    pub step1_rounds: usize,
    pub step2_stop_n: usize,
}

impl Default for ReconcileConfig {
    fn default() -> Self {
        Self {
            block_len: None,
            step1_rounds: 2,
            step2_stop_n: 10,
        }
    }
}

impl ReconcileConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.block_len {
            if l < 2 {
                return Err(Error::InvalidParameter {
                    name: "block_len",
                    reason: format!("{l} < 2"),
                });
            }
        }
        if self.step2_stop_n < 1 {
            return Err(Error::InvalidParameter {
                name: "step2_stop_n",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    pub fn block_len_for(&self, r: f64) -> usize {
        self.block_len.unwrap_or_else(|| choose_block_len(r))
    }
}

/// `clamp(round(0.73/R), 2, 64)`; `R = 0` gives 64.
pub fn choose_block_len(r: f64) -> usize {
    if r <= 0.0 {
        return ZERO_ERROR_BLOCK_LEN;
    }
    ((BLOCK_LEN_CONSTANT / r).round() as usize).clamp(2, ZERO_ERROR_BLOCK_LEN)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub round: usize,
    pub block: usize,
    pub parity_a: Bit,
    pub parity_b: Bit,
    pub action: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ReconcileStats {
    pub block_len: usize,
    pub comparisons: usize,
    pub errors_located: usize,
    pub discarded: usize,
    pub step2_probes: usize,
    pub trace: Vec<TraceEntry>,
}

#[derive(Serialize, Deserialize)]
struct ParityRecord {
    indices: Vec<usize>,
    parity: Bit,
}

#[derive(Serialize, Deserialize)]
struct Commit {
    round: usize,
    removed: usize,
}

fn parity(bits: &[Bit], indices: &[usize]) -> Bit {
    indices.iter().fold(0, |acc, &i| acc ^ bits[i])
}

struct Reconciler<'a> {
    alice: &'a mut KeyMaterial,
    bob: &'a mut KeyMaterial,
    transcript: &'a mut PublicTranscript,
    stats: ReconcileStats,
    marked: BTreeSet<usize>,
    round: usize,
    block: usize,
}

impl Reconciler<'_> {
    /// One public parity comparison. The last index of the set is marked for
    /// discard. Returns true when the parities agree.
    fn compare(&mut self, indices: &[usize], kind: &str) -> bool {
        let pa = parity(&self.alice.bits, indices);
        self.transcript.publish_json(
            Party::Alice,
            PHASE_PARITY,
            &ParityRecord {
                indices: indices.to_vec(),
                parity: pa,
            },
        );
        let pb = parity(&self.bob.bits, indices);
        self.transcript.publish_json(Party::Bob, PHASE_VERDICT, &(pa == pb));
        self.stats.comparisons += 1;
        self.marked
            .insert(*indices.last().expect("compared sets are non-empty"));
        let agree = pa == pb;
        self.stats.trace.push(TraceEntry {
            round: self.round,
            block: self.block,
            parity_a: pa,
            parity_b: pb,
            action: format!("{kind}-{}", if agree { "match" } else { "mismatch" }),
        });
        agree
    }

    /// Bisects a set whose parities disagree, comparing the left half each
    /// time (the right half's parity follows). Marks the located bit.
    fn locate(&mut self, mut set: Vec<usize>) {
        while set.len() > 1 {
            let right = set.split_off(set.len().div_ceil(2));
            if self.compare(&set, "bisect") {
                set = right;
            }
        }
        let index = set[0];
        self.transcript.publish_json(Party::Alice, PHASE_LOCATE, &index);
        self.stats.errors_located += 1;
        self.marked.insert(index);
        self.stats.trace.push(TraceEntry {
            round: self.round,
            block: self.block,
            parity_a: 0,
            parity_b: 0,
            action: "locate".into(),
        });
    }

    fn commit(&mut self) {
        let positions: Vec<usize> = std::mem::take(&mut self.marked).into_iter().collect();
        self.alice.remove_positions(&positions);
        self.bob.remove_positions(&positions);
        self.stats.discarded += positions.len();
        self.transcript.publish_json(
            Party::Alice,
            PHASE_COMMIT,
            &Commit {
                round: self.round,
                removed: positions.len(),
            },
        );
    }
}

/// Two-step parity reconciliation.
///
/// Step 1: `step1_rounds` passes, each under a fresh public permutation,
/// comparing block parities and bisecting mismatching blocks. Step 2: random
/// subset parities until `step2_stop_n` consecutive probes agree. Each
/// comparison discards the last bit of the compared set and each located
/// error is discarded too; discards are applied after every step-1 pass and
/// after every step-2 probe.
pub fn reconcile<R: Rng + ?Sized>(
    alice: &mut KeyMaterial,
    bob: &mut KeyMaterial,
    cfg: &ReconcileConfig,
    block_len: usize,
    rng: &mut R,
    transcript: &mut PublicTranscript,
) -> Result<ReconcileStats> {
    check_equal_length(alice, bob)?;
    cfg.validate()?;
    alice.require_stage(KeyStage::Estimated)?;
    bob.require_stage(KeyStage::Estimated)?;
    if block_len < 2 {
        return Err(Error::InvalidParameter {
            name: "block_len",
            reason: format!("{block_len} < 2"),
        });
    }
    let mut r = Reconciler {
        alice,
        bob,
        transcript,
        stats: ReconcileStats {
            block_len,
            ..Default::default()
        },
        marked: BTreeSet::new(),
        round: 0,
        block: 0,
    };

    for round in 0..cfg.step1_rounds {
        r.round = round;
        let mut order: Vec<usize> = (0..r.alice.len()).collect();
        order.shuffle(rng);
        r.transcript.publish_json(Party::Alice, PHASE_PERMUTATION, &order);
        r.alice.permute(&order);
        r.bob.permute(&order);
        let len = r.alice.len();
        for (b, start) in (0..len).step_by(block_len).enumerate() {
            let block: Vec<usize> = (start..(start + block_len).min(len)).collect();
            if block.len() < 2 {
                continue;
            }
            r.block = b;
            if !r.compare(&block, "block") {
                r.locate(block);
            }
        }
        r.commit();
    }

    r.round = cfg.step1_rounds;
    let mut clean = 0;
    let mut probe = 0;
    while clean < cfg.step2_stop_n {
        let len = r.alice.len();
        if len == 0 {
            return Err(Error::KeyExhausted("reconciliation consumed the whole key".into()));
        }
        let subset = loop {
            let s: Vec<usize> = (0..len).filter(|_| rng.gen_bool(0.5)).collect();
            if !s.is_empty() {
                break s;
            }
        };
        r.block = probe;
        if r.compare(&subset, "probe") {
            clean += 1;
        } else {
            clean = 0;
            r.locate(subset);
        }
        r.commit();
        probe += 1;
    }
    r.stats.step2_probes = probe;

    let leaked = r.stats.comparisons;
    let stats = r.stats;
    for k in [&mut *alice, &mut *bob] {
        k.leaked_parities += leaked;
        k.advance(KeyStage::Reconciled)?;
    }
    Ok(stats)
}

/// Number of positions deleted during reconciliation, recomputed from the
/// public transcript alone.
pub fn replay_discards(transcript: &PublicTranscript) -> usize {
    let mut pending = BTreeSet::new();
    let mut total = 0;
    for rec in transcript.records() {
        match rec.phase.as_str() {
            PHASE_PARITY => {
                let p: ParityRecord = rec.json().expect("parity payload");
                pending.insert(*p.indices.last().expect("non-empty"));
            }
            PHASE_LOCATE => {
                pending.insert(rec.json::<usize>().expect("locate payload"));
            }
            PHASE_COMMIT => {
                total += pending.len();
                pending.clear();
            }
            _ => {}
        }
    }
    total
}

pub fn count_parity_records(transcript: &PublicTranscript) -> usize {
    transcript.phase(PHASE_PARITY).count()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KEstimator {
    /// `ceil(2Rn)`: error rate `λ/4` under intercept-resend, and Eve knows
    /// the `λn/2` bits she measured in the right basis.
    Opaque,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmplifyConfig {
    pub s: usize,
    pub k_estimator: KEstimator,
    /// Fixed `k`, bypassing the estimator.
    pub k: Option<usize>,
}

impl Default for AmplifyConfig {
    fn default() -> Self {
        Self {
            s: 30,
            k_estimator: KEstimator::Opaque,
            k: None,
        }
    }
}

impl AmplifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s < 1 {
            return Err(Error::InvalidParameter {
                name: "s",
                reason: "security parameter must be at least 1".into(),
            });
        }
        Ok(())
    }

    pub fn k_for(&self, r: f64, n: usize) -> usize {
        self.k.map_or_else(|| estimate_eve_knowledge(r, n), |k| k.min(n))
    }
}

pub fn estimate_eve_knowledge(r: f64, n: usize) -> usize {
    // The tolerance keeps exact products such as 2·0.05·1000 from rounding up.
    let k = (2.0 * r * n as f64 - 1e-9).ceil();
    (k.max(0.0) as usize).min(n)
}

fn pack(bits: &[Bit]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        out[i / 8] |= b << (i % 8);
    }
    out
}

fn masked_parity(mask: &[u8], packed: &[u8]) -> Bit {
    let ones: u32 = mask.iter().zip(packed).map(|(m, k)| (m & k).count_ones()).sum();
    (ones & 1) as Bit
}

fn random_mask<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<u8> {
    let bytes = n.div_ceil(8);
    let tail = match n % 8 {
        0 => 0xff,
        r => (1u8 << r) - 1,
    };
    loop {
        let mut mask: Vec<u8> = (0..bytes).map(|_| rng.gen()).collect();
        if let Some(last) = mask.last_mut() {
            *last &= tail;
        }
        if mask.iter().any(|&b| b != 0) {
            return mask;
        }
    }
}

/// Members of a published subset mask.
pub fn mask_members(mask: &[u8]) -> impl Iterator<Item = usize> + '_ {
    mask.iter()
        .enumerate()
        .flat_map(|(byte, &m)| (0..8).filter(move |b| m >> b & 1 == 1).map(move |b| byte * 8 + b))
}

/// Final-stage keys carry the subset index in `slots`.
fn final_key(bits: Vec<Bit>, from: &KeyMaterial) -> Result<KeyMaterial> {
    let mut key = KeyMaterial {
        slots: (0..bits.len()).collect(),
        bits,
        stage: from.stage,
        leaked_parities: from.leaked_parities,
    };
    key.advance(KeyStage::Final)?;
    Ok(key)
}

/// Alice's side: draws `n − k − s` subsets, publishes them (not their
/// parities) and keeps the parities as the final key.
pub fn privacy_amplify<R: Rng + ?Sized>(
    key: &KeyMaterial,
    k: usize,
    s: usize,
    transcript: &mut PublicTranscript,
    rng: &mut R,
) -> Result<KeyMaterial> {
    key.require_stage(KeyStage::Reconciled)?;
    if s < 1 {
        return Err(Error::InvalidParameter {
            name: "s",
            reason: "security parameter must be at least 1".into(),
        });
    }
    let n = key.len();
    let out_len = n
        .checked_sub(k + s)
        .filter(|&l| l >= 1)
        .ok_or_else(|| Error::KeyExhausted(format!("key exhausted by privacy amplification (n={n}, k={k}, s={s})")))?;
    let packed = pack(&key.bits);
    let mut bits = Vec::with_capacity(out_len);
    for _ in 0..out_len {
        let mask = random_mask(n, rng);
        bits.push(masked_parity(&mask, &packed));
        transcript.publish(Party::Alice, PHASE_SUBSET, mask);
    }
    final_key(bits, key)
}

/// Bob's side: reads the published subsets and computes the same parities.
pub fn amplify_from_transcript(key: &KeyMaterial, transcript: &PublicTranscript) -> Result<KeyMaterial> {
    key.require_stage(KeyStage::Reconciled)?;
    let packed = pack(&key.bits);
    let bits = transcript
        .phase(PHASE_SUBSET)
        .map(|r| masked_parity(&r.payload, &packed))
        .collect();
    final_key(bits, key)
}

/// Eve's guess of each final-key bit: the XOR of her ledger guesses over the
/// subset, or a coin flip if the subset holds a slot she has no guess for.
pub fn predict_final_key<R: Rng + ?Sized>(
    ledger: &EveLedger,
    reconciled_slots: &[usize],
    transcript: &PublicTranscript,
    rng: &mut R,
) -> Vec<Bit> {
    transcript
        .phase(PHASE_SUBSET)
        .map(|r| {
            let mut acc = 0;
            for i in mask_members(&r.payload) {
                match ledger.guess_for(reconciled_slots[i]) {
                    Some(g) => acc ^= g,
                    None => return u8::from(rng.gen_bool(0.5)),
                }
            }
            acc
        })
        .collect()
}

pub fn agreement_rate(a: &[Bit], b: &[Bit]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

//! No-cloning and "undetectable means uninformed" as executable checks.
//!
//! Cloning acts on `blank ⊗ carrier` with blank `|0⟩ = |↕⟩`. The probe checks
//! act on `carrier ⊗ probe`, matching `eavesdrop`.

use rand::Rng;
use serde::Serialize;

use crate::eavesdrop::build_translucent;
use crate::error::{Error, Result};
use crate::hilbert::{
    bracket, contract_first, extend_isometry, extend_isometry_with, random, tensor, Ket2, Ket4, Operator4, ALGEBRA_TOL,
    C64,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CloningInstance {
    pub u: Ket2,
    pub v: Ket2,
    pub overlap: C64,
}

impl CloningInstance {
    pub fn new(u: Ket2, v: Ket2) -> Self {
        Self {
            u,
            v,
            overlap: bracket(&u, &v),
        }
    }

    /// A random pair with fixed overlap magnitude `s`.
    pub fn random_with_overlap<R: Rng + ?Sized>(s: f64, rng: &mut R) -> Self {
        let u: Ket2 = random::ket(rng);
        let [a, b] = *u.amplitudes();
        let perp = [-b.conj(), a.conj()];
        let phase = C64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU));
        let c = (1.0 - s * s).max(0.0).sqrt();
        let v = Ket2::normalized([a * s + perp[0] * phase * c, b * s + perp[1] * phase * c]).expect("unit combination");
        Self::new(u, v)
    }

    /// A random pair with `0 < |⟨u|v⟩| < 1`.
    pub fn random_non_orthogonal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let inst = Self::new(random::ket(rng), random::ket(rng));
            let m = inst.overlap.norm();
            if m > ALGEBRA_TOL && m < 1.0 - ALGEBRA_TOL {
                return inst;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum CloningVerdict {
    /// Copying both would need a probe overlap `ω = 1/⟨u|v⟩` with `|ω| > 1`.
    Infeasible {
        omega_re: f64,
        omega_im: f64,
        omega_norm: f64,
    },
    FeasibleOrthogonal,
    FeasibleIdentical,
}

/// `⟨u|v⟩ = ⟨Ψ'|Ψ''⟩⟨u|v⟩²` forces `⟨Ψ'|Ψ''⟩ = 1/⟨u|v⟩`.
pub fn cloning_feasibility(inst: &CloningInstance) -> CloningVerdict {
    let m = inst.overlap.norm();
    if m <= ALGEBRA_TOL {
        return CloningVerdict::FeasibleOrthogonal;
    }
    if m >= 1.0 - ALGEBRA_TOL {
        return CloningVerdict::FeasibleIdentical;
    }
    let omega = inst.overlap.inv();
    CloningVerdict::Infeasible {
        omega_re: omega.re,
        omega_im: omega.im,
        omega_norm: omega.norm(),
    }
}

fn blank() -> Ket2 {
    Ket2::basis(0)
}

/// `min_φ ‖U|0⟩|x⟩ − e^{iφ}|x⟩|x⟩‖² = 2 − 2|⟨xx|U|0x⟩|`
pub fn cloning_residual(u: &Operator4, x: &Ket2) -> f64 {
    let input = tensor(&blank(), x);
    let target = tensor(x, x);
    2.0 - 2.0 * u.sandwich(&target, &input).norm()
}

/// Worse of the two residuals: a cloner has to copy both states.
pub fn cloning_violation(u: &Operator4, inst: &CloningInstance) -> f64 {
    cloning_residual(u, &inst.u).max(cloning_residual(u, &inst.v))
}

/// Lower bound on [`cloning_violation`] for any unitary when `|⟨u|v⟩| = s`.
///
/// Unitarity keeps the Fubini–Study angle between the inputs at `acos s`,
/// while the targets sit `acos s²` apart, so one output misses its target by
/// at least half the difference.
pub fn cloning_margin(s: f64) -> f64 {
    let delta = 0.5 * ((s * s).acos() - s.acos());
    2.0 - 2.0 * delta.cos()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CloningSearch {
    pub trials: usize,
    pub overlap: f64,
    pub min_violation: f64,
    pub margin: f64,
}

/// Random unitaries against random pairs with overlap magnitude `s`.
pub fn cloning_search<R: Rng + ?Sized>(trials: usize, s: f64, rng: &mut R) -> Result<CloningSearch> {
    if trials == 0 {
        return Err(Error::InvalidParameter {
            name: "trials",
            reason: "at least one trial is required".into(),
        });
    }
    let mut min_violation = f64::INFINITY;
    for _ in 0..trials {
        let u: Operator4 = random::unitary(rng);
        let inst = CloningInstance::random_with_overlap(s, rng);
        min_violation = min_violation.min(cloning_violation(&u, &inst));
    }
    Ok(CloningSearch {
        trials,
        overlap: s,
        min_violation,
        margin: cloning_margin(s),
    })
}

/// Copier for an orthonormal pair: `|0⟩|u⟩ ↦ |u⟩|u⟩`, `|0⟩|u⊥⟩ ↦ |u⊥⟩|u⊥⟩`.
pub fn orthogonal_copier(u: &Ket2, u_perp: &Ket2) -> Result<Operator4> {
    extend_isometry(
        &[tensor(&blank(), u), tensor(&blank(), u_perp)],
        &[tensor(u, u), tensor(u_perp, u_perp)],
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum ProbeVerdict {
    /// Carriers leave unchanged; `deviation = |1 − ⟨Ψ'|Ψ''⟩|`.
    Undetectable {
        overlap_re: f64,
        overlap_im: f64,
        deviation: f64,
        bound: f64,
        holds: bool,
    },
    Detectable {
        residual: f64,
    },
}

/// Carrier left after `U` and the residual from the product form `|a⟩|Ψ'⟩`.
fn probe_after(u: &Operator4, carrier: &Ket2, probe: &Ket2) -> ([C64; 2], f64) {
    let out = Ket4::from_raw(u.apply_raw(tensor(carrier, probe).amplitudes()));
    let psi = contract_first(&out, carrier);
    let product = tensor(carrier, &Ket2::from_raw(psi));
    let residual = out
        .amplitudes()
        .iter()
        .zip(product.amplitudes())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    (psi, residual)
}

/// If `U` leaves both `|a⟩` and `|b⟩` unchanged (within `tol`), the probe
/// states it leaves behind must coincide.
pub fn undetectable_implies_uninformed(
    u: &Operator4,
    a: &Ket2,
    b: &Ket2,
    probe: &Ket2,
    tol: f64,
) -> Result<ProbeVerdict> {
    if !u.is_unitary() {
        return Err(Error::NotUnitary {
            deviation: u.unitary_deviation(),
        });
    }
    let ab = bracket(a, b).norm();
    if ab <= ALGEBRA_TOL {
        return Err(Error::InvalidParameter {
            name: "carriers",
            reason: "the argument needs <a|b> != 0".into(),
        });
    }
    let (pa, ra) = probe_after(u, a, probe);
    let (pb, rb) = probe_after(u, b, probe);
    let residual = ra.max(rb);
    if residual > tol {
        return Ok(ProbeVerdict::Detectable { residual });
    }
    let overlap: C64 = pa.iter().zip(&pb).map(|(x, y)| x.conj() * y).sum();
    let deviation = (C64::new(1.0, 0.0) - overlap).norm();
    // ⟨a|b⟩ = ⟨a|b⟩⟨Ψ'|Ψ''⟩ + cross terms of size at most 2·tol + tol².
    let bound = (2.0 * tol + tol * tol) / ab + 1e-10;
    Ok(ProbeVerdict::Undetectable {
        overlap_re: overlap.re,
        overlap_im: overlap.im,
        deviation,
        bound,
        holds: deviation <= bound,
    })
}

fn random_candidates<R: Rng + ?Sized>(rng: &mut R) -> Vec<[C64; 4]> {
    (0..4).map(|_| *random::ket::<4, _>(rng).amplitudes()).collect()
}

/// A random unitary with `U|a⟩|Ψ⟩ = |a⟩|Ψ'⟩` and `U|b⟩|Ψ⟩ = |b⟩|Ψ''⟩`.
///
/// Unitarity only admits `Ψ' = Ψ''` when `⟨a|b⟩ ≠ 0`; a distinct `Ψ''`
/// is rejected by the Gram check.
pub fn carrier_preserving_unitary<R: Rng + ?Sized>(
    a: &Ket2,
    b: &Ket2,
    probe: &Ket2,
    psi_a: &Ket2,
    psi_b: &Ket2,
    rng: &mut R,
) -> Result<Operator4> {
    extend_isometry_with(
        &[tensor(a, probe), tensor(b, probe)],
        &[tensor(a, psi_a), tensor(b, psi_b)],
        &random_candidates(rng),
        &random_candidates(rng),
    )
}

pub fn random_carrier_preserving<R: Rng + ?Sized>(a: &Ket2, b: &Ket2, probe: &Ket2, rng: &mut R) -> Result<Operator4> {
    let psi: Ket2 = random::ket(rng);
    carrier_preserving_unitary(a, b, probe, &psi, &psi, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub strength: f64,
    pub residual: f64,
    pub information: f64,
}

/// Detectability residual and `1 − |⟨Ψ_θ|Ψ_θ̄⟩|` across the translucent family.
pub fn translucent_sweep(theta: f64, points: usize) -> Result<Vec<SweepPoint>> {
    let a = Ket2::linear(theta);
    let b = Ket2::linear(-theta);
    (0..points)
        .map(|i| {
            let strength = if points > 1 {
                i as f64 / (points - 1) as f64
            } else {
                0.0
            };
            let eve = build_translucent(theta, strength)?;
            let coupling = eve.coupling().expect("translucent strategies carry a coupling");
            let (_, ra) = probe_after(&coupling.interaction, &a, &coupling.probe_init);
            let (_, rb) = probe_after(&coupling.interaction, &b, &coupling.probe_init);
            Ok(SweepPoint {
                strength,
                residual: ra.max(rb),
                information: coupling.distinguishability(),
            })
        })
        .collect()
}

//! Complex Hilbert-space algebra for one photon (dimension 2) and a photon
//! pair or carrier/probe system (dimension 4).
//!
//! Kets are stored in the fixed reference basis `{|↕⟩, |↔⟩}` (and its
//! tensor square, ordered `↕↕, ↕↔, ↔↕, ↔↔`). Global phase is kept; use
//! [`Ket::same_state`] for equality up to phase.

use std::f64::consts::FRAC_1_SQRT_2;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Tolerance for exact algebraic identities.
pub const ALGEBRA_TOL: f64 = 1e-12;
/// Tolerance for accumulated sums (probabilities, POVM completeness).
pub const SUM_TOL: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ket<const D: usize> {
    amps: [C64; D],
}

pub type Ket2 = Ket<2>;
pub type Ket4 = Ket<4>;

impl<const D: usize> Ket<D> {
    /// Builds a ket from amplitudes that are already unit norm.
    pub fn new(amps: [C64; D]) -> Result<Self> {
        let norm = norm_of(&amps);
        if (norm - 1.0).abs() > ALGEBRA_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { amps })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(amps: [C64; D]) -> Result<Self> {
        let norm = norm_of(&amps);
        if norm < 1e-300 {
            return Err(Error::ZeroVector);
        }
        Ok(Self {
            amps: amps.map(|a| a / norm),
        })
    }

    pub(crate) fn from_raw(amps: [C64; D]) -> Self {
        Self { amps }
    }

    /// The `i`-th reference basis vector.
    pub fn basis(i: usize) -> Self {
        let mut amps = [ZERO; D];
        amps[i] = ONE;
        Self { amps }
    }

    pub fn amplitudes(&self) -> &[C64; D] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        norm_of(&self.amps)
    }

    /// Physical equality: `|⟨a|b⟩| = 1` within [`ALGEBRA_TOL`].
    pub fn same_state(&self, other: &Self) -> bool {
        (bracket(self, other).norm() - 1.0).abs() <= ALGEBRA_TOL
    }

    /// Component-wise equality within `tol`, phase included.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .all(|(a, b)| (a - b).norm() <= tol)
    }

    pub fn scale(&self, factor: C64) -> [C64; D] {
        self.amps.map(|a| a * factor)
    }
}

fn norm_of<const D: usize>(amps: &[C64; D]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

impl Ket2 {
    /// `|θ⟩ = cos θ |↕⟩ + sin θ |↔⟩`, angle measured from the vertical.
    pub fn linear(theta: f64) -> Self {
        Self::from_raw([C64::new(theta.cos(), 0.0), C64::new(theta.sin(), 0.0)])
    }
}

/// Named single-photon polarization states.
pub mod polar {
    use super::*;

    /// `|↕⟩`
    pub fn vertical() -> Ket2 {
        Ket2::basis(0)
    }

    /// `|↔⟩`
    pub fn horizontal() -> Ket2 {
        Ket2::basis(1)
    }

    /// `|↗⟩ = (|↕⟩ + |↔⟩)/√2`
    pub fn diagonal() -> Ket2 {
        Ket2::from_raw([C64::new(FRAC_1_SQRT_2, 0.0), C64::new(FRAC_1_SQRT_2, 0.0)])
    }

    /// `|↖⟩ = (|↕⟩ − |↔⟩)/√2`, also written `|↘⟩`.
    pub fn antidiagonal() -> Ket2 {
        Ket2::from_raw([C64::new(FRAC_1_SQRT_2, 0.0), C64::new(-FRAC_1_SQRT_2, 0.0)])
    }

    /// `|↻⟩ = (|↕⟩ − i|↔⟩)/√2`
    pub fn right_circular() -> Ket2 {
        Ket2::from_raw([C64::new(FRAC_1_SQRT_2, 0.0), C64::new(0.0, -FRAC_1_SQRT_2)])
    }

    /// `|↺⟩ = (|↕⟩ + i|↔⟩)/√2`
    pub fn left_circular() -> Ket2 {
        Ket2::from_raw([C64::new(FRAC_1_SQRT_2, 0.0), C64::new(0.0, FRAC_1_SQRT_2)])
    }

    pub fn rectilinear_basis() -> [Ket2; 2] {
        [vertical(), horizontal()]
    }

    pub fn diagonal_basis() -> [Ket2; 2] {
        [diagonal(), antidiagonal()]
    }

    pub fn circular_basis() -> [Ket2; 2] {
        [right_circular(), left_circular()]
    }
}

/// `⟨a|b⟩ = Σ conj(aᵢ)·bᵢ`.
pub fn bracket<const D: usize>(bra_of: &Ket<D>, ket: &Ket<D>) -> C64 {
    bra_of.amps.iter().zip(ket.amps.iter()).map(|(a, b)| a.conj() * b).sum()
}

fn raw_bracket<const D: usize>(a: &[C64; D], b: &[C64; D]) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn tensor(left: &Ket2, right: &Ket2) -> Ket4 {
    let [a0, a1] = left.amps;
    let [b0, b1] = right.amps;
    Ket4::from_raw([a0 * b0, a0 * b1, a1 * b0, a1 * b1])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Operator<const D: usize> {
    entries: [[C64; D]; D],
}

pub type Operator2 = Operator<2>;
pub type Operator4 = Operator<4>;

impl<const D: usize> Operator<D> {
    pub fn from_entries(entries: [[C64; D]; D]) -> Self {
        Self { entries }
    }

    pub fn zero() -> Self {
        Self {
            entries: [[ZERO; D]; D],
        }
    }

    pub fn identity() -> Self {
        let mut op = Self::zero();
        for i in 0..D {
            op.entries[i][i] = ONE;
        }
        op
    }

    /// `|a⟩⟨b|`
    pub fn outer(a: &Ket<D>, b: &Ket<D>) -> Self {
        let mut op = Self::zero();
        for i in 0..D {
            for j in 0..D {
                op.entries[i][j] = a.amps[i] * b.amps[j].conj();
            }
        }
        op
    }

    /// `|k⟩⟨k|`
    pub fn projector(k: &Ket<D>) -> Self {
        Self::outer(k, k)
    }

    /// Builds `Σ |outᵢ⟩⟨inᵢ|` from two orthonormal bases.
    pub fn from_basis_map(inputs: &[Ket<D>; D], outputs: &[Ket<D>; D]) -> Self {
        let mut op = Self::zero();
        for (i, o) in inputs.iter().zip(outputs.iter()) {
            op = op + Self::outer(o, i);
        }
        op
    }

    pub fn entries(&self) -> &[[C64; D]; D] {
        &self.entries
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.entries[row][col]
    }

    pub fn adjoint(&self) -> Self {
        let mut op = Self::zero();
        for i in 0..D {
            for j in 0..D {
                op.entries[i][j] = self.entries[j][i].conj();
            }
        }
        op
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            entries: self.entries.map(|row| row.map(|e| e * factor)),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..D).map(|i| self.entries[i][i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|row| row.iter())
            .map(|e| e.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest entry-wise deviation from `other`.
    pub fn max_deviation(&self, other: &Self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..D {
            for j in 0..D {
                worst = worst.max((self.entries[i][j] - other.entries[i][j]).norm());
            }
        }
        worst
    }

    pub fn hermitian_deviation(&self) -> f64 {
        self.max_deviation(&self.adjoint())
    }

    pub fn unitary_deviation(&self) -> f64 {
        (self.adjoint() * *self).max_deviation(&Self::identity())
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_deviation() <= ALGEBRA_TOL
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary_deviation() <= ALGEBRA_TOL
    }

    /// Matrix-vector product on raw amplitudes (no renormalisation).
    pub fn apply_raw(&self, v: &[C64; D]) -> [C64; D] {
        let mut out = [ZERO; D];
        for (i, row) in self.entries.iter().enumerate() {
            out[i] = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// `⟨a|O|b⟩`
    pub fn sandwich(&self, a: &Ket<D>, b: &Ket<D>) -> C64 {
        raw_bracket(&a.amps, &self.apply_raw(&b.amps))
    }

    fn ensure_hermitian(&self) -> Result<()> {
        let deviation = self.hermitian_deviation();
        if deviation > ALGEBRA_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(())
    }
}

impl Operator2 {
    /// Kronecker product `self ⊗ other` in the ordering used by [`tensor`].
    pub fn kron(&self, other: &Operator2) -> Operator4 {
        let mut op = Operator4::zero();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        op.entries[2 * i + k][2 * j + l] = self.entries[i][j] * other.entries[k][l];
                    }
                }
            }
        }
        op
    }

    /// Eigenvalues of a hermitian 2×2 operator, ascending.
    pub fn hermitian_eigenvalues(&self) -> [f64; 2] {
        let a = self.entries[0][0].re;
        let d = self.entries[1][1].re;
        let b = self.entries[0][1];
        let mean = 0.5 * (a + d);
        let radius = (0.25 * (a - d).powi(2) + b.norm_sqr()).sqrt();
        [mean - radius, mean + radius]
    }
}

impl<const D: usize> Add for Operator<D> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for i in 0..D {
            for j in 0..D {
                self.entries[i][j] += rhs.entries[i][j];
            }
        }
        self
    }
}

impl<const D: usize> Sub for Operator<D> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for i in 0..D {
            for j in 0..D {
                self.entries[i][j] -= rhs.entries[i][j];
            }
        }
        self
    }
}

impl<const D: usize> Mul for Operator<D> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = Self::zero();
        for i in 0..D {
            for j in 0..D {
                out.entries[i][j] = (0..D).map(|k| self.entries[i][k] * rhs.entries[k][j]).sum();
            }
        }
        out
    }
}

pub fn commutator<const D: usize>(a: &Operator<D>, b: &Operator<D>) -> Operator<D> {
    *a * *b - *b * *a
}

/// `⟨ψ|A|ψ⟩` for hermitian `A`.
pub fn expectation<const D: usize>(obs: &Operator<D>, state: &Ket<D>) -> Result<f64> {
    obs.ensure_hermitian()?;
    Ok(obs.sandwich(state, state).re)
}

/// Returns `(⟨(ΔA)²⟩⟨(ΔB)²⟩, ¼|⟨[A,B]⟩|²)`.
pub fn uncertainty_product<const D: usize>(a: &Operator<D>, b: &Operator<D>, state: &Ket<D>) -> Result<(f64, f64)> {
    a.ensure_hermitian()?;
    b.ensure_hermitian()?;
    let variance = |op: &Operator<D>| {
        let mean = op.sandwich(state, state).re;
        let shifted = *op - Operator::identity().scale(C64::new(mean, 0.0));
        (shifted * shifted).sandwich(state, state).re
    };
    let lhs = variance(a) * variance(b);
    let rhs = 0.25 * commutator(a, b).sandwich(state, state).norm_sqr();
    Ok((lhs, rhs))
}

pub fn apply_unitary<const D: usize>(u: &Operator<D>, state: &Ket<D>) -> Result<Ket<D>> {
    let deviation = u.unitary_deviation();
    if deviation > ALGEBRA_TOL {
        return Err(Error::NotUnitary { deviation });
    }
    Ok(Ket::from_raw(u.apply_raw(&state.amps)))
}

pub fn check_orthonormal<const D: usize>(basis: &[Ket<D>]) -> Result<()> {
    for i in 0..basis.len() {
        for j in i..basis.len() {
            let value = bracket(&basis[i], &basis[j]);
            let expected = if i == j { ONE } else { ZERO };
            if (value - expected).norm() > SUM_TOL {
                return Err(Error::NotOrthonormal {
                    i,
                    j,
                    value: value.norm(),
                });
            }
        }
    }
    Ok(())
}

/// Inverse-CDF draw over `probs` using exactly one uniform variate.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    let mut last_possible = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_possible = i;
        }
        cumulative += p;
        if u < cumulative && p > 0.0 {
            return i;
        }
    }
    last_possible
}

/// Born-rule probabilities of each eigenket.
pub fn outcome_probabilities<const D: usize>(state: &Ket<D>, eigenkets: &[Ket<D>; D]) -> Result<[f64; D]> {
    check_orthonormal(eigenkets)?;
    Ok(eigenkets.map(|e| bracket(&e, state).norm_sqr()))
}

/// Projective measurement; the collapsed state is exactly the selected eigenket.
pub fn measure_projective<const D: usize, R: Rng + ?Sized>(
    state: &Ket<D>,
    eigenkets: &[Ket<D>; D],
    rng: &mut R,
) -> Result<(usize, Ket<D>)> {
    let probs = outcome_probabilities(state, eigenkets)?;
    let index = sample_index(&probs, rng);
    Ok((index, eigenkets[index]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    labels: Vec<String>,
    elements: Vec<Operator2>,
}

impl Povm {
    pub fn new(elements: Vec<(String, Operator2)>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidPovm("no elements".into()));
        }
        let mut sum = Operator2::zero();
        for (label, el) in &elements {
            if el.hermitian_deviation() > SUM_TOL {
                return Err(Error::InvalidPovm(format!("element {label} is not hermitian")));
            }
            let [low, _] = el.hermitian_eigenvalues();
            if low < -SUM_TOL {
                return Err(Error::InvalidPovm(format!(
                    "element {label} has negative eigenvalue {low:e}"
                )));
            }
            sum = sum + *el;
        }
        let deviation = sum.max_deviation(&Operator2::identity());
        if deviation > SUM_TOL {
            return Err(Error::InvalidPovm(format!(
                "elements sum to identity only within {deviation:e}"
            )));
        }
        let (labels, elements) = elements.into_iter().unzip();
        Ok(Self { labels, elements })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn element(&self, index: usize) -> &Operator2 {
        &self.elements[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn probabilities(&self, state: &Ket2) -> Vec<f64> {
        self.elements
            .iter()
            .map(|el| el.sandwich(state, state).re.max(0.0))
            .collect()
    }
}

/// Samples a POVM outcome index. The photon is consumed; no post-measurement state.
pub fn measure_povm<R: Rng + ?Sized>(state: &Ket2, povm: &Povm, rng: &mut R) -> usize {
    sample_index(&povm.probabilities(state), rng)
}

/// Which tensor factor of a [`Ket4`] a local operation addresses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Factor {
    First,
    Second,
}

fn local_projector(factor: Factor, k: &Ket2) -> Operator4 {
    let p = Operator2::projector(k);
    match factor {
        Factor::First => p.kron(&Operator2::identity()),
        Factor::Second => Operator2::identity().kron(&p),
    }
}

/// Measures one photon of a pair in a local orthonormal basis, collapsing the
/// joint state with `P ⊗ 1` (or `1 ⊗ P`).
pub fn measure_factor<R: Rng + ?Sized>(
    state: &Ket4,
    factor: Factor,
    basis: &[Ket2; 2],
    rng: &mut R,
) -> Result<(usize, Ket4)> {
    check_orthonormal(basis)?;
    let projected = basis.map(|k| local_projector(factor, &k).apply_raw(&state.amps));
    let probs = projected.map(|v| norm_of(&v).powi(2));
    let index = sample_index(&probs, rng);
    Ok((index, Ket4::normalized(projected[index])?))
}

/// Joint outcome distribution `P(i, j)` of local measurements on both photons.
pub fn joint_probabilities(state: &Ket4, first: &[Ket2; 2], second: &[Ket2; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for (i, a) in first.iter().enumerate() {
        for (j, b) in second.iter().enumerate() {
            out[i][j] = bracket(&tensor(a, b), state).norm_sqr();
        }
    }
    out
}

/// `(1 ⊗ ⟨e|)|ψ⟩`, the unnormalised first-factor amplitudes left after the
/// second factor is found in `|e⟩`.
pub fn contract_second(state: &Ket4, e: &Ket2) -> [C64; 2] {
    let [e0, e1] = e.amps.map(|x| x.conj());
    let a = state.amps;
    [e0 * a[0] + e1 * a[1], e0 * a[2] + e1 * a[3]]
}

/// `(⟨e| ⊗ 1)|ψ⟩`, the unnormalised second-factor amplitudes.
pub fn contract_first(state: &Ket4, e: &Ket2) -> [C64; 2] {
    let [e0, e1] = e.amps.map(|x| x.conj());
    let a = state.amps;
    [e0 * a[0] + e1 * a[2], e0 * a[1] + e1 * a[3]]
}

/// Largest residual of `state` from the nearest product `|a⟩⊗|b⟩`, via the
/// singular values of the 2×2 coefficient matrix.
pub fn entanglement_residual(state: &Ket4) -> f64 {
    let a = state.amps;
    let m = Operator2::from_entries([[a[0], a[1]], [a[2], a[3]]]);
    let gram = m * m.adjoint();
    let [_, high] = gram.hermitian_eigenvalues();
    // σ_min = |det| / σ_max stays accurate when σ_min is tiny.
    let det = a[0] * a[3] - a[1] * a[2];
    if high <= 0.0 {
        return 0.0;
    }
    det.norm() / high.sqrt()
}

/// Gram–Schmidt over `candidates`, skipping near-dependent vectors, until `D`
/// orthonormal vectors are found.
pub fn orthonormal_completion<const D: usize>(seed: &[[C64; D]], candidates: &[[C64; D]]) -> Result<[Ket<D>; D]> {
    let mut found: Vec<[C64; D]> = Vec::with_capacity(D);
    for v in seed.iter().chain(candidates.iter()) {
        if found.len() == D {
            break;
        }
        let mut w = *v;
        for _ in 0..2 {
            for f in &found {
                let overlap = raw_bracket(f, &w);
                for k in 0..D {
                    w[k] -= overlap * f[k];
                }
            }
        }
        let n = norm_of(&w);
        if n > 1e-8 {
            found.push(w.map(|x| x / n));
        }
    }
    if found.len() < D {
        return Err(Error::ZeroVector);
    }
    let mut out = [Ket::basis(0); D];
    for (slot, f) in out.iter_mut().zip(found) {
        *slot = Ket::from_raw(f);
    }
    Ok(out)
}

/// Extends a linear isometry known on an `m`-dimensional subspace (given by
/// its images of `m` linearly independent inputs) to a unitary on the full
/// space. Fails if the Gram matrices of inputs and outputs disagree.
pub fn extend_isometry<const D: usize>(inputs: &[Ket<D>], outputs: &[Ket<D>]) -> Result<Operator<D>> {
    let standard: Vec<[C64; D]> = (0..D).map(|i| Ket::<D>::basis(i).amps).collect();
    extend_isometry_with(inputs, outputs, &standard, &standard)
}

/// As [`extend_isometry`], completing the input and output bases from the
/// given candidate vectors (e.g. random ones) instead of the reference basis.
pub fn extend_isometry_with<const D: usize>(
    inputs: &[Ket<D>],
    outputs: &[Ket<D>],
    input_candidates: &[[C64; D]],
    output_candidates: &[[C64; D]],
) -> Result<Operator<D>> {
    assert_eq!(inputs.len(), outputs.len());
    for i in 0..inputs.len() {
        for j in 0..inputs.len() {
            let g_in = bracket(&inputs[i], &inputs[j]);
            let g_out = bracket(&outputs[i], &outputs[j]);
            if (g_in - g_out).norm() > SUM_TOL {
                return Err(Error::NoUnitaryExtension(format!(
                    "Gram entry ({i},{j}): inputs {g_in}, images {g_out}"
                )));
            }
        }
    }
    // Orthonormalise the inputs and carry the same linear combinations to the images.
    let mut ins: Vec<[C64; D]> = Vec::new();
    let mut outs: Vec<[C64; D]> = Vec::new();
    for (x, y) in inputs.iter().zip(outputs) {
        let mut u = x.amps;
        let mut v = y.amps;
        for (fi, fo) in ins.iter().zip(outs.iter()) {
            let overlap = raw_bracket(fi, &u);
            for k in 0..D {
                u[k] -= overlap * fi[k];
                v[k] -= overlap * fo[k];
            }
        }
        let n = norm_of(&u);
        if n < 1e-8 {
            continue;
        }
        ins.push(u.map(|c| c / n));
        outs.push(v.map(|c| c / n));
    }
    let in_basis = orthonormal_completion(&ins, input_candidates)?;
    let out_basis = orthonormal_completion(&outs, output_candidates)?;
    let u = Operator::from_basis_map(&in_basis, &out_basis);
    let deviation = u.unitary_deviation();
    if deviation > ALGEBRA_TOL {
        return Err(Error::NotUnitary { deviation });
    }
    Ok(u)
}

/// Random generators for property checks.
pub mod random {
    use super::*;
    use rand_distr::StandardNormal;

    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    }

    pub fn ket<const D: usize, R: Rng + ?Sized>(rng: &mut R) -> Ket<D> {
        loop {
            let amps = std::array::from_fn(|_| gaussian(rng));
            if let Ok(k) = Ket::normalized(amps) {
                return k;
            }
        }
    }

    pub fn hermitian<const D: usize, R: Rng + ?Sized>(rng: &mut R) -> Operator<D> {
        let mut m = Operator::<D>::zero();
        for i in 0..D {
            for j in 0..D {
                m.entries[i][j] = gaussian(rng);
            }
        }
        (m + m.adjoint()).scale(C64::new(0.5, 0.0))
    }

    /// Orthonormalised gaussian columns. Not Haar-exact; only coverage matters.
    pub fn unitary<const D: usize, R: Rng + ?Sized>(rng: &mut R) -> Operator<D> {
        loop {
            let columns: Vec<[C64; D]> = (0..D).map(|_| std::array::from_fn(|_| gaussian(rng))).collect();
            if let Ok(basis) = orthonormal_completion::<D>(&[], &columns) {
                let standard: [Ket<D>; D] = std::array::from_fn(Ket::basis);
                return Operator::from_basis_map(&standard, &basis);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::polar::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn bracket_examples() {
        let v = bracket(&vertical(), &right_circular());
        assert!((v - c(FRAC_1_SQRT_2, 0.0)).norm() < ALGEBRA_TOL);
        assert!((bracket(&vertical(), &vertical()) - ONE).norm() < ALGEBRA_TOL);
        // Follows from |↗⟩ = (|↕⟩+|↔⟩)/√2 and |↺⟩ = (|↕⟩+i|↔⟩)/√2.
        let d = bracket(&diagonal(), &left_circular());
        assert!((d - c(0.5, 0.5)).norm() < ALGEBRA_TOL);
    }

    #[test]
    fn bracket_is_conjugate_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a: Ket4 = random::ket(&mut rng);
            let b: Ket4 = random::ket(&mut rng);
            assert!((bracket(&a, &b) - bracket(&b, &a).conj()).norm() < ALGEBRA_TOL);
        }
    }

    #[test]
    fn basis_conversions() {
        let s = c(FRAC_1_SQRT_2, 0.0);
        let h = c(0.5, 0.5);
        let hc = c(0.5, -0.5);
        let i_s = c(0.0, FRAC_1_SQRT_2);
        let combo = |a: C64, x: Ket2, b: C64, y: Ket2| {
            let (xs, ys) = (x.scale(a), y.scale(b));
            Ket2::from_raw([xs[0] + ys[0], xs[1] + ys[1]])
        };
        let (v, hz, ne, nw, r, l) = (
            vertical(),
            horizontal(),
            diagonal(),
            antidiagonal(),
            right_circular(),
            left_circular(),
        );
        let identities = [
            (ne, combo(s, v, s, hz)),
            (nw, combo(s, v, -s, hz)),
            (ne, combo(h, r, hc, l)),
            (nw, combo(hc, r, h, l)),
            (v, combo(s, ne, s, nw)),
            (hz, combo(s, ne, -s, nw)),
            (v, combo(s, r, s, l)),
            (hz, combo(i_s, r, -i_s, l)),
            (r, combo(s, v, c(0.0, -FRAC_1_SQRT_2), hz)),
            (l, combo(s, v, i_s, hz)),
            (r, combo(hc, ne, h, nw)),
            (l, combo(h, ne, hc, nw)),
        ];
        for (k, (lhs, rhs)) in identities.iter().enumerate() {
            assert!(lhs.approx_eq(rhs, ALGEBRA_TOL), "identity {k}: {lhs:?} vs {rhs:?}");
        }
    }

    #[test]
    fn tensor_examples() {
        let t = tensor(&vertical(), &horizontal());
        assert!(t.approx_eq(&Ket4::basis(1), 0.0));

        let a = tensor(&Ket2::linear(0.0), &Ket2::linear(std::f64::consts::FRAC_PI_2));
        let b = tensor(&Ket2::linear(std::f64::consts::FRAC_PI_2), &Ket2::linear(0.0));
        let singlet = Ket4::new(std::array::from_fn(|i| {
            (a.amplitudes()[i] - b.amplitudes()[i]) * FRAC_1_SQRT_2
        }))
        .unwrap();
        let manual = Ket4::from_raw([ZERO, c(FRAC_1_SQRT_2, 0.0), c(-FRAC_1_SQRT_2, 0.0), ZERO]);
        assert!(singlet.approx_eq(&manual, ALGEBRA_TOL));

        let nv = tensor(&diagonal(), &vertical());
        assert!((bracket(&nv, &nv) - ONE).norm() < ALGEBRA_TOL);
    }

    #[test]
    fn tensor_bracket_factorizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let [a, b, x, y]: [Ket2; 4] = std::array::from_fn(|_| random::ket(&mut rng));
            let lhs = bracket(&tensor(&a, &b), &tensor(&x, &y));
            let rhs = bracket(&a, &x) * bracket(&b, &y);
            assert!((lhs - rhs).norm() < ALGEBRA_TOL);
            assert!((tensor(&a, &b).norm() - 1.0).abs() < ALGEBRA_TOL);
        }
    }

    #[test]
    fn projective_measurement_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| {
                measure_projective(&right_circular(), &rectilinear_basis(), &mut rng)
                    .unwrap()
                    .0
                    == 0
            })
            .count();
        assert!((hits as f64 / n as f64 - 0.5).abs() < 0.01);

        for _ in 0..100 {
            let (i, after) = measure_projective(&vertical(), &rectilinear_basis(), &mut rng).unwrap();
            assert_eq!(i, 0);
            assert!(after.approx_eq(&vertical(), 0.0));
        }
    }

    #[test]
    fn diagonal_filter_between_crossed_filters() {
        // |↕⟩ through a diagonal filter, then a horizontal one.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut passed_first = 0;
        let mut passed_both = 0;
        for _ in 0..n {
            let (i, after) = measure_projective(&vertical(), &diagonal_basis(), &mut rng).unwrap();
            if i == 0 {
                passed_first += 1;
                let (j, _) = measure_projective(&after, &rectilinear_basis(), &mut rng).unwrap();
                if j == 1 {
                    passed_both += 1;
                }
            }
        }
        assert!((passed_first as f64 / n as f64 - 0.5).abs() < 0.01);
        assert!((passed_both as f64 / passed_first as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn collapse_is_repeatable() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let psi: Ket2 = random::ket(&mut rng);
            let basis = circular_basis();
            let probs = outcome_probabilities(&psi, &basis).unwrap();
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < SUM_TOL);
            let (i, after) = measure_projective(&psi, &basis, &mut rng).unwrap();
            let (j, _) = measure_projective(&after, &basis, &mut rng).unwrap();
            assert_eq!(i, j);
        }
    }

    #[test]
    fn non_orthonormal_basis_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = measure_projective(&vertical(), &[vertical(), diagonal()], &mut rng).unwrap_err();
        assert!(matches!(err, Error::NotOrthonormal { .. }));
    }

    #[test]
    fn expectation_examples() {
        let pv = Operator2::projector(&vertical());
        assert!((expectation(&pv, &right_circular()).unwrap() - 0.5).abs() < ALGEBRA_TOL);
        let psi = Ket2::linear(0.3);
        assert!((expectation(&Operator2::identity(), &psi).unwrap() - 1.0).abs() < ALGEBRA_TOL);
        let pd = Operator2::projector(&diagonal());
        assert!((expectation(&pd, &vertical()).unwrap() - 0.5).abs() < ALGEBRA_TOL);

        let skew = Operator2::outer(&vertical(), &horizontal());
        assert!(matches!(expectation(&skew, &psi), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn commutator_examples() {
        let pv = Operator2::projector(&vertical());
        assert!(commutator(&pv, &pv).frobenius_norm() < ALGEBRA_TOL);
        let pd = Operator2::projector(&diagonal());
        assert!((commutator(&pv, &pd).frobenius_norm() - FRAC_1_SQRT_2).abs() < ALGEBRA_TOL);
        let pr = Operator2::projector(&right_circular());
        assert!(commutator(&pr, &pv).frobenius_norm() > 0.1);
        let anti = commutator(&pv, &pd) + commutator(&pd, &pv);
        assert!(anti.frobenius_norm() < ALGEBRA_TOL);
    }

    #[test]
    fn uncertainty_examples() {
        let pv = Operator2::projector(&vertical());
        let (lhs, rhs) = uncertainty_product(&pv, &pv, &right_circular()).unwrap();
        assert!((lhs - 1.0 / 16.0).abs() < ALGEBRA_TOL);
        assert!(rhs.abs() < ALGEBRA_TOL);

        let pd = Operator2::projector(&diagonal());
        let (lhs, rhs) = uncertainty_product(&pv, &pd, &vertical()).unwrap();
        assert!(lhs.abs() < ALGEBRA_TOL && rhs.abs() < ALGEBRA_TOL);

        let (lhs, rhs) = uncertainty_product(&pv, &pd, &right_circular()).unwrap();
        assert!(lhs >= rhs - SUM_TOL);
        assert!(rhs > 0.0);
    }

    #[test]
    fn unitary_examples() {
        let theta = Ket2::linear(FRAC_PI_8);
        let same = apply_unitary(&Operator2::identity(), &theta).unwrap();
        assert!(same.approx_eq(&theta, 0.0));

        // Coordinates of |↕⟩ against the diagonal basis.
        let change = Operator2::from_basis_map(&diagonal_basis(), &rectilinear_basis());
        let coords = apply_unitary(&change, &vertical()).unwrap();
        let expected = Ket2::from_raw([c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)]);
        assert!(coords.approx_eq(&expected, ALGEBRA_TOL));

        let not_unitary = Operator2::projector(&vertical());
        assert!(matches!(
            apply_unitary(&not_unitary, &theta),
            Err(Error::NotUnitary { .. })
        ));
    }

    #[test]
    fn random_unitaries_preserve_brackets() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let u: Operator4 = random::unitary(&mut rng);
            let a: Ket4 = random::ket(&mut rng);
            let b: Ket4 = random::ket(&mut rng);
            let ua = apply_unitary(&u, &a).unwrap();
            let ub = apply_unitary(&u, &b).unwrap();
            assert!((ua.norm() - 1.0).abs() < ALGEBRA_TOL);
            assert!((bracket(&ua, &ub) - bracket(&a, &b)).norm() < ALGEBRA_TOL);
        }
    }

    #[test]
    fn factor_measurement_order_is_irrelevant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let psi: Ket4 = random::ket(&mut rng);
            let first = [Ket2::linear(0.4), Ket2::linear(0.4 + std::f64::consts::FRAC_PI_2)];
            let second = circular_basis();
            let joint = joint_probabilities(&psi, &first, &second);
            // Alice-then-Bob and Bob-then-Alice sequential measurement probabilities.
            for i in 0..2 {
                for j in 0..2 {
                    let pa = local_projector(Factor::First, &first[i]).apply_raw(psi.amplitudes());
                    let pab = local_projector(Factor::Second, &second[j]).apply_raw(&pa);
                    let pb = local_projector(Factor::Second, &second[j]).apply_raw(psi.amplitudes());
                    let pba = local_projector(Factor::First, &first[i]).apply_raw(&pb);
                    let p1 = norm_of(&pab).powi(2);
                    let p2 = norm_of(&pba).powi(2);
                    assert!((p1 - joint[i][j]).abs() < ALGEBRA_TOL);
                    assert!((p2 - joint[i][j]).abs() < ALGEBRA_TOL);
                }
            }
        }
    }

    #[test]
    fn povm_rejects_incomplete_sets() {
        let pv = Operator2::projector(&vertical());
        let err = Povm::new(vec![("v".into(), pv)]).unwrap_err();
        assert!(matches!(err, Error::InvalidPovm(_)));
        let neg = Operator2::identity().scale(c(-1.0, 0.0));
        let two = Operator2::identity().scale(c(2.0, 0.0));
        assert!(Povm::new(vec![("a".into(), neg), ("b".into(), two)]).is_err());
    }

    #[test]
    fn entanglement_residual_detects_products() {
        let p = tensor(&Ket2::linear(FRAC_PI_4), &right_circular());
        assert!(entanglement_residual(&p) < 1e-9);
        let singlet = Ket4::from_raw([ZERO, c(FRAC_1_SQRT_2, 0.0), c(-FRAC_1_SQRT_2, 0.0), ZERO]);
        assert!((entanglement_residual(&singlet) - FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn extend_isometry_rejects_gram_mismatch() {
        let inputs = [tensor(&vertical(), &vertical()), tensor(&diagonal(), &vertical())];
        let outputs = [tensor(&vertical(), &vertical()), tensor(&horizontal(), &vertical())];
        assert!(matches!(
            extend_isometry(&inputs, &outputs),
            Err(Error::NoUnitaryExtension(_))
        ));
    }
}

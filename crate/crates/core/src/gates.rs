//! Composite gate library.
//!
//! Every builder returns a [`CircuitFragment`] of elementary instructions;
//! a fragment's inverse reverses the instruction order and negates rotation
//! angles. The `rz` family here is the phase rotation `diag(1, e^{i theta})`,
//! which agrees with a true z-rotation up to global phase when uncontrolled
//! and is what Fourier-space addition needs once controls are attached.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::statevector::{GateMatrix, SimError, StateVector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GateError {
    #[error("unknown gate `{0}`")]
    UnknownGate(String),
    #[error("gate `{0}` needs a rotation angle")]
    MissingAngle(String),
    #[error("rotation angle must be finite")]
    NonFiniteAngle,
    #[error("at most 2 control qubits are supported, got {0}")]
    TooManyControls(usize),
    #[error("constant {value} does not fit in {width} qubits")]
    ConstantTooWide { value: u64, width: usize },
    #[error("{value} has no inverse modulo {modulus}")]
    NotInvertible { value: u64, modulus: u64 },
    #[error("modulus {modulus} needs a {needed}-qubit target register, got {got}")]
    RegisterTooSmall {
        modulus: u64,
        needed: usize,
        got: usize,
    },
    #[error("ancilla register needs {needed} qubit(s), got {got}")]
    AncillaTooSmall { needed: usize, got: usize },
    #[error("{0}")]
    Operands(String),
}

/// A rotation angle, kept exact when it is a signed `pi / 2^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Angle {
    PiOverPow2 { negative: bool, exponent: u32 },
    Radians(f64),
}

impl Angle {
    pub fn pi_over_pow2(exponent: u32) -> Self {
        Angle::PiOverPow2 {
            negative: false,
            exponent,
        }
    }

    pub fn radians(self) -> f64 {
        match self {
            Angle::PiOverPow2 { negative, exponent } => {
                let v = PI / 2f64.powi(exponent as i32);
                if negative {
                    -v
                } else {
                    v
                }
            }
            Angle::Radians(r) => r,
        }
    }

    pub fn half(self) -> Self {
        match self {
            Angle::PiOverPow2 { negative, exponent } => Angle::PiOverPow2 {
                negative,
                exponent: exponent + 1,
            },
            Angle::Radians(r) => Angle::Radians(r / 2.0),
        }
    }
}

impl std::ops::Neg for Angle {
    type Output = Angle;
    fn neg(self) -> Angle {
        match self {
            Angle::PiOverPow2 { negative, exponent } => Angle::PiOverPow2 {
                negative: !negative,
                exponent,
            },
            Angle::Radians(r) => Angle::Radians(-r),
        }
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Angle::PiOverPow2 { negative, exponent } => {
                if negative {
                    f.write_str("-")?;
                }
                if exponent == 0 {
                    f.write_str("pi")
                } else {
                    write!(f, "pi/2^{exponent}")
                }
            }
            // Debug formatting is the shortest string that parses back exactly
            Angle::Radians(r) => write!(f, "{r:?}"),
        }
    }
}

/// Named single-qubit unitaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elementary {
    X,
    H,
    Z,
    /// `diag(e^{-i theta/2}, e^{i theta/2})`
    Rz(f64),
    /// `diag(1, e^{i theta})`
    Phase(f64),
}

impl Elementary {
    pub fn from_name(name: &str, angle: Option<f64>) -> Result<Self, GateError> {
        let need = |a: Option<f64>| -> Result<f64, GateError> {
            let a = a.ok_or_else(|| GateError::MissingAngle(name.to_string()))?;
            if a.is_finite() {
                Ok(a)
            } else {
                Err(GateError::NonFiniteAngle)
            }
        };
        match name.to_ascii_lowercase().as_str() {
            "x" => Ok(Elementary::X),
            "h" => Ok(Elementary::H),
            "z" => Ok(Elementary::Z),
            "rz" => Ok(Elementary::Rz(need(angle)?)),
            "phase" | "p" => Ok(Elementary::Phase(need(angle)?)),
            _ => Err(GateError::UnknownGate(name.to_string())),
        }
    }

    pub fn matrix(self) -> GateMatrix {
        let c = |re: f64| Complex64::new(re, 0.0);
        let z = c(0.0);
        match self {
            Elementary::X => GateMatrix::from_2x2([[z, c(1.0)], [c(1.0), z]]),
            Elementary::H => {
                let h = FRAC_1_SQRT_2;
                GateMatrix::from_2x2([[c(h), c(h)], [c(h), c(-h)]])
            }
            Elementary::Z => GateMatrix::from_2x2([[c(1.0), z], [z, c(-1.0)]]),
            Elementary::Rz(t) => GateMatrix::from_2x2([
                [Complex64::from_polar(1.0, -t / 2.0), z],
                [z, Complex64::from_polar(1.0, t / 2.0)],
            ]),
            Elementary::Phase(t) => {
                GateMatrix::from_2x2([[c(1.0), z], [z, Complex64::from_polar(1.0, t)]])
            }
        }
    }
}

/// Standard 2x2 matrix of a named gate.
pub fn elementary(gate: Elementary) -> GateMatrix {
    gate.matrix()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    X,
    H,
    Z,
    /// Phase rotation `diag(1, e^{i theta})`.
    Rz(Angle),
}

/// One gate on one target qubit, conditioned on zero or more controls.
/// Qubits are global indices into the simulated state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub gate: Gate,
    pub target: usize,
    pub controls: Vec<usize>,
}

impl Instruction {
    pub fn new(gate: Gate, target: usize, controls: &[usize]) -> Self {
        Self {
            gate,
            target,
            controls: controls.to_vec(),
        }
    }

    pub fn x(t: usize) -> Self {
        Self::new(Gate::X, t, &[])
    }
    pub fn h(t: usize) -> Self {
        Self::new(Gate::H, t, &[])
    }
    pub fn z(t: usize) -> Self {
        Self::new(Gate::Z, t, &[])
    }
    pub fn rz(t: usize, angle: Angle) -> Self {
        Self::new(Gate::Rz(angle), t, &[])
    }
    pub fn cx(c: usize, t: usize) -> Self {
        Self::new(Gate::X, t, &[c])
    }
    pub fn ccx(c0: usize, c1: usize, t: usize) -> Self {
        Self::new(Gate::X, t, &[c0, c1])
    }
    pub fn cz(c: usize, t: usize) -> Self {
        Self::new(Gate::Z, t, &[c])
    }
    pub fn crz(c: usize, t: usize, angle: Angle) -> Self {
        Self::new(Gate::Rz(angle), t, &[c])
    }
    pub fn ccrz(c0: usize, c1: usize, t: usize, angle: Angle) -> Self {
        Self::new(Gate::Rz(angle), t, &[c0, c1])
    }

    /// Every qubit the instruction touches, controls first.
    pub fn qubits(&self) -> impl Iterator<Item = usize> + '_ {
        self.controls
            .iter()
            .copied()
            .chain(std::iter::once(self.target))
    }

    pub fn inverse(&self) -> Self {
        let gate = match self.gate {
            Gate::Rz(a) => Gate::Rz(-a),
            g => g,
        };
        Self {
            gate,
            target: self.target,
            controls: self.controls.clone(),
        }
    }

    /// Textual mnemonic, if the gate/control combination has one.
    pub fn mnemonic(&self) -> Option<&'static str> {
        Some(match (self.gate, self.controls.len()) {
            (Gate::X, 0) => "x",
            (Gate::X, 1) => "cx",
            (Gate::X, 2) => "ccx",
            (Gate::H, 0) => "h",
            (Gate::Z, 0) => "z",
            (Gate::Z, 1) => "cz",
            (Gate::Rz(_), 0) => "rz",
            (Gate::Rz(_), 1) => "crz",
            (Gate::Rz(_), 2) => "ccrz",
            _ => return None,
        })
    }

    pub fn apply(&self, state: &mut StateVector) -> Result<(), SimError> {
        match self.gate {
            Gate::X => state.apply_x(self.target, &self.controls),
            Gate::Z => state.apply_phase(Complex64::new(-1.0, 0.0), self.target, &self.controls),
            Gate::Rz(a) => state.apply_phase(
                Complex64::from_polar(1.0, a.radians()),
                self.target,
                &self.controls,
            ),
            Gate::H => {
                let m = Elementary::H.matrix();
                state.apply_single(
                    [[m.get(0, 0), m.get(0, 1)], [m.get(1, 0), m.get(1, 1)]],
                    self.target,
                    &self.controls,
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QubitRole {
    Data,
    Control,
    Ancilla,
}

/// An ordered instruction list plus the roles of the qubits it was built for.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CircuitFragment {
    pub instructions: Vec<Instruction>,
    pub roles: BTreeMap<usize, QubitRole>,
}

impl CircuitFragment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, ins: Instruction) {
        self.instructions.push(ins);
    }

    pub fn append(&mut self, other: CircuitFragment) {
        self.instructions.extend(other.instructions);
        for (q, r) in other.roles {
            self.roles.entry(q).or_insert(r);
        }
    }

    pub fn declare(&mut self, qubits: &[usize], role: QubitRole) {
        for &q in qubits {
            self.roles.insert(q, role);
        }
    }

    pub fn ancillas(&self) -> Vec<usize> {
        self.roles
            .iter()
            .filter(|(_, r)| **r == QubitRole::Ancilla)
            .map(|(q, _)| *q)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn inverse(&self) -> Self {
        Self {
            instructions: self
                .instructions
                .iter()
                .rev()
                .map(Instruction::inverse)
                .collect(),
            roles: self.roles.clone(),
        }
    }

    pub fn apply(&self, state: &mut StateVector) -> Result<(), SimError> {
        self.instructions.iter().try_for_each(|i| i.apply(state))
    }

    /// Highest qubit index used, plus one.
    pub fn span(&self) -> usize {
        self.instructions
            .iter()
            .flat_map(|i| i.qubits())
            .max()
            .map_or(0, |q| q + 1)
    }

    /// Full unitary on `num_qubits`, by columns: `cols[j]` is the image of `|j>`.
    pub fn unitary_columns(&self, num_qubits: usize) -> Result<Vec<Vec<Complex64>>, SimError> {
        (0..1u64 << num_qubits)
            .map(|j| {
                let mut s = StateVector::basis(num_qubits, j)?;
                self.apply(&mut s)?;
                Ok(s.amplitudes().to_vec())
            })
            .collect()
    }
}

/// Compares two unitaries given by columns, ignoring global phase. The phase
/// is fixed by the first nonzero entry of the first column.
pub fn equal_up_to_global_phase(a: &[Vec<Complex64>], b: &[Vec<Complex64>], tol: f64) -> bool {
    max_deviation_up_to_global_phase(a, b) <= tol
}

pub fn max_deviation_up_to_global_phase(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    let Some(k) = a[0].iter().position(|z| z.norm() > 1e-9) else {
        return f64::INFINITY;
    };
    if b[0][k].norm() < 1e-9 {
        return f64::INFINITY;
    }
    let phase = b[0][k] / a[0][k];
    let phase = phase / phase.norm();
    a.iter()
        .zip(b)
        .flat_map(|(ca, cb)| ca.iter().zip(cb).map(move |(x, y)| (x * phase - y).norm()))
        .fold(0.0, f64::max)
}

/// The ways of writing a controlled rotation with two CNOTs and three single
/// qubit rotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrzVariant {
    DropA,
    DropC,
    /// Signs on the target rotations swapped; rotates the wrong way.
    FlippedBuggy,
}

pub fn crz_decomposed(
    control: usize,
    target: usize,
    angle: Angle,
    variant: CrzVariant,
) -> CircuitFragment {
    let half = angle.half();
    let (c, t) = (control, target);
    let instructions = match variant {
        CrzVariant::DropA => vec![
            Instruction::rz(t, half),
            Instruction::cx(c, t),
            Instruction::rz(t, -half),
            Instruction::cx(c, t),
            Instruction::rz(c, half),
        ],
        CrzVariant::DropC => vec![
            Instruction::cx(c, t),
            Instruction::rz(t, -half),
            Instruction::cx(c, t),
            Instruction::rz(t, half),
            Instruction::rz(c, half),
        ],
        CrzVariant::FlippedBuggy => vec![
            Instruction::rz(t, -half),
            Instruction::cx(c, t),
            Instruction::rz(t, half),
            Instruction::cx(c, t),
            Instruction::rz(c, half),
        ],
    };
    let mut f = CircuitFragment {
        instructions,
        roles: BTreeMap::new(),
    };
    f.declare(&[c], QubitRole::Control);
    f.declare(&[t], QubitRole::Data);
    f
}

/// Fourier transform without the final bit reversal: afterwards qubit `j` of
/// a register that held `b` carries the phase `2 pi b / 2^(j+1)`.
pub fn qft(qubits: &[usize], inverse: bool) -> CircuitFragment {
    let mut f = CircuitFragment::new();
    f.declare(qubits, QubitRole::Data);
    for j in (0..qubits.len()).rev() {
        f.push(Instruction::h(qubits[j]));
        for k in (0..j).rev() {
            f.push(Instruction::crz(
                qubits[k],
                qubits[j],
                Angle::pi_over_pow2((j - k) as u32),
            ));
        }
    }
    if inverse {
        f.inverse()
    } else {
        f
    }
}

/// Fourier-space constant adder: `b <- b + a mod 2^width` when every control
/// reads 1. `b` must already be in Fourier space (see [`qft`]).
pub fn cadd(
    b: &[usize],
    a: u64,
    controls: &[usize],
    inverse: bool,
) -> Result<CircuitFragment, GateError> {
    if controls.len() > 2 {
        return Err(GateError::TooManyControls(controls.len()));
    }
    let width = b.len();
    if width < 64 && a >> width != 0 {
        return Err(GateError::ConstantTooWide { value: a, width });
    }
    let mut f = CircuitFragment::new();
    f.declare(controls, QubitRole::Control);
    f.declare(b, QubitRole::Data);
    for b_indx in (0..width).rev() {
        for a_indx in (0..=b_indx).rev() {
            if (a >> a_indx) & 1 == 1 {
                let angle = Angle::pi_over_pow2((b_indx - a_indx) as u32);
                f.push(Instruction::new(Gate::Rz(angle), b[b_indx], controls));
            }
        }
    }
    Ok(if inverse { f.inverse() } else { f })
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Multiplicative inverse of `a` modulo `n`, if it exists.
pub fn mod_inverse(a: u64, n: u64) -> Option<u64> {
    let (mut r0, mut r1) = (n as i128, (a % n) as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    (r0 == 1).then(|| t0.rem_euclid(n as i128) as u64)
}

pub fn mod_pow(base: u64, mut exp: u64, n: u64) -> u64 {
    let mut result = 1 % n;
    let mut b = base % n;
    while exp > 0 {
        if exp & 1 == 1 {
            result = result * b % n;
        }
        b = b * b % n;
        exp >>= 1;
    }
    result
}

fn bits_of(n: u64) -> usize {
    (64 - n.leading_zeros()) as usize
}

/// Doubly-controlled modular adder in Fourier space:
/// `b <- (b + a) mod N` for `b, a < N`, using one sign ancilla that is
/// returned to zero. `b` has one qubit more than `N` needs so the top qubit
/// can flag a negative intermediate.
pub fn cadd_mod(
    controls: &[usize],
    b: &[usize],
    a: u64,
    modulus: u64,
    ancilla: usize,
) -> Result<CircuitFragment, GateError> {
    let msb = *b.last().expect("non-empty target register");
    let mut f = CircuitFragment::new();
    f.append(cadd(b, a, controls, false)?);
    f.append(cadd(b, modulus, &[], true)?);
    f.append(qft(b, true));
    f.push(Instruction::cx(msb, ancilla));
    f.append(qft(b, false));
    f.append(cadd(b, modulus, &[ancilla], false)?);
    f.append(cadd(b, a, controls, true)?);
    f.append(qft(b, true));
    f.push(Instruction::x(msb));
    f.push(Instruction::cx(msb, ancilla));
    f.push(Instruction::x(msb));
    f.append(qft(b, false));
    f.append(cadd(b, a, controls, false)?);
    f.declare(&[ancilla], QubitRole::Ancilla);
    Ok(f)
}

/// Qubit assignment for a controlled modular multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModMulLayout<'a> {
    pub ctrl: usize,
    pub x: &'a [usize],
    pub b: &'a [usize],
    pub ancilla: usize,
    pub modulus: u64,
}

impl ModMulLayout<'_> {
    fn validate(&self) -> Result<(), GateError> {
        let needed = bits_of(self.modulus) + 1;
        if self.b.len() < needed {
            return Err(GateError::RegisterTooSmall {
                modulus: self.modulus,
                needed,
                got: self.b.len(),
            });
        }
        if self.modulus < 2 {
            return Err(GateError::Operands("modulus must be at least 2".into()));
        }
        let mut all: Vec<usize> = self.x.iter().chain(self.b).copied().collect();
        all.push(self.ctrl);
        all.push(self.ancilla);
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        if all.len() != n {
            return Err(GateError::Operands(
                "modular multiplier registers overlap".into(),
            ));
        }
        Ok(())
    }

    /// `b <- (b + a * x) mod N` when `ctrl` reads 1, one modular addition of
    /// `2^i a mod N` per qubit `x_i`.
    fn multiply_accumulate(&self, a: u64) -> Result<CircuitFragment, GateError> {
        let n = self.modulus;
        let mut f = qft(self.b, false);
        for (i, &xi) in self.x.iter().enumerate() {
            let addend = ((a % n) as u128 * (1u128 << i) % n as u128) as u64;
            f.append(cadd_mod(&[self.ctrl, xi], self.b, addend, n, self.ancilla)?);
        }
        f.append(qft(self.b, true));
        f.declare(&[self.ctrl], QubitRole::Control);
        f.declare(self.x, QubitRole::Data);
        f.declare(self.b, QubitRole::Data);
        f.declare(&[self.ancilla], QubitRole::Ancilla);
        Ok(f)
    }

    fn controlled_swap(&self) -> CircuitFragment {
        let mut f = CircuitFragment::new();
        for (&xi, &bi) in self.x.iter().zip(self.b) {
            f.push(Instruction::cx(bi, xi));
            f.push(Instruction::ccx(self.ctrl, xi, bi));
            f.push(Instruction::cx(bi, xi));
        }
        f
    }
}

/// Which half of the in-place multiplier a [`cmodmul`] call emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModMulStage {
    /// `b <- (b + a x) mod N`.
    Compute,
    /// Swap `x` and `b`, then run the compute stage for `a_inv` backwards.
    /// With `b = 0` beforehand and `a * a_inv = 1 mod N`, the pair of stages
    /// maps `x -> a x` and hands `b` back as zero.
    Uncompute,
}

/// Controlled modular multiplier stage with constant `a`.
///
/// The compute stage requires `gcd(a, N) = 1`. The uncompute stage takes
/// whatever inverse it is given, so a wrong inverse leaves garbage in `b`.
pub fn cmodmul(
    layout: &ModMulLayout<'_>,
    a: u64,
    stage: ModMulStage,
) -> Result<CircuitFragment, GateError> {
    layout.validate()?;
    let n = layout.modulus;
    match stage {
        ModMulStage::Compute => {
            if gcd(a % n, n) != 1 {
                return Err(GateError::NotInvertible {
                    value: a,
                    modulus: n,
                });
            }
            layout.multiply_accumulate(a)
        }
        ModMulStage::Uncompute => {
            let mut f = layout.controlled_swap();
            f.append(layout.multiply_accumulate(a)?.inverse());
            Ok(f)
        }
    }
}

/// Controlled in-place multiplication `x <- a x mod N` (compute, swap,
/// uncompute with `a_inv`).
pub fn controlled_ua(
    layout: &ModMulLayout<'_>,
    a: u64,
    a_inv: u64,
) -> Result<CircuitFragment, GateError> {
    let mut f = cmodmul(layout, a, ModMulStage::Compute)?;
    f.append(cmodmul(layout, a_inv, ModMulStage::Uncompute)?);
    Ok(f)
}

/// Per-iteration constants `(a^(2^k) mod N, its inverse)` for `k < count`.
pub fn exponentiation_constants(
    base: u64,
    modulus: u64,
    count: usize,
) -> Result<Vec<(u64, u64)>, GateError> {
    (0..count)
        .map(|k| {
            let ak = mod_pow(base, 1u64 << k, modulus);
            let inv =
                mod_inverse(ak, modulus).ok_or(GateError::NotInvertible { value: ak, modulus })?;
            Ok((ak, inv))
        })
        .collect()
}

/// Controlled modular exponentiation ladder: `x <- a^j x mod N` where `j`
/// is the value of `upper`.
///
/// Iteration `k` multiplies by `a^(2^k)` controlled by `upper[t-1-k]`, which
/// matches the bit order [`qft`] produces, so an inverse [`qft`] on `upper`
/// reads out the phase estimate directly. `inverses[k]` is used verbatim.
pub fn cmodexp(
    upper: &[usize],
    x: &[usize],
    b: &[usize],
    ancilla: usize,
    base: u64,
    modulus: u64,
    inverses: &[u64],
) -> Result<CircuitFragment, GateError> {
    let t = upper.len();
    if inverses.len() != t {
        return Err(GateError::Operands(format!(
            "need {t} inverse constants, got {}",
            inverses.len()
        )));
    }
    let mut f = CircuitFragment::new();
    for (k, &a_inv) in inverses.iter().enumerate() {
        let ak = mod_pow(base, 1u64 << k, modulus);
        let layout = ModMulLayout {
            ctrl: upper[t - 1 - k],
            x,
            b,
            ancilla,
            modulus,
        };
        f.append(controlled_ua(&layout, ak, a_inv)?);
    }
    f.declare(upper, QubitRole::Control);
    Ok(f)
}

/// Order in which a Toffoli ladder is undone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LadderUncompute {
    /// Reverse order of the compute ladder.
    Mirrored,
    /// Same order as the compute ladder; leaves ancillas dirty.
    Forward,
}

fn toffoli_ladder(q: &[usize], anc: &[usize]) -> Vec<Instruction> {
    let n = q.len();
    let mut v = vec![Instruction::ccx(q[1], q[0], anc[0])];
    for j in 1..n - 1 {
        v.push(Instruction::ccx(anc[j - 1], q[j + 1], anc[j]));
    }
    v
}

/// Phase flip of `|1...1>` on `q` via a Toffoli ladder into `anc`.
fn multi_controlled_z(
    q: &[usize],
    anc: &[usize],
    uncompute: LadderUncompute,
) -> Result<CircuitFragment, GateError> {
    let n = q.len();
    if n < 2 {
        return Err(GateError::Operands(
            "Grover subroutines need at least 2 search qubits".into(),
        ));
    }
    if anc.len() < n - 1 {
        return Err(GateError::AncillaTooSmall {
            needed: n - 1,
            got: anc.len(),
        });
    }
    let ladder = toffoli_ladder(q, anc);
    let mut f = CircuitFragment::new();
    f.instructions.extend(ladder.iter().cloned());
    f.push(Instruction::cz(anc[n - 2], q[n - 1]));
    match uncompute {
        LadderUncompute::Mirrored => f.instructions.extend(ladder.iter().rev().cloned()),
        LadderUncompute::Forward => f.instructions.extend(ladder),
    }
    f.declare(q, QubitRole::Data);
    f.declare(&anc[..n - 1], QubitRole::Ancilla);
    Ok(f)
}

/// Reflection about the uniform superposition (up to a global sign).
pub fn grover_diffusion(q: &[usize], anc: &[usize]) -> Result<CircuitFragment, GateError> {
    grover_diffusion_with(q, anc, LadderUncompute::Mirrored)
}

pub fn grover_diffusion_with(
    q: &[usize],
    anc: &[usize],
    uncompute: LadderUncompute,
) -> Result<CircuitFragment, GateError> {
    let core = multi_controlled_z(q, anc, uncompute)?;
    let mut f = CircuitFragment::new();
    f.instructions.extend(q.iter().map(|&j| Instruction::h(j)));
    f.instructions.extend(q.iter().map(|&j| Instruction::x(j)));
    f.append(core);
    f.instructions.extend(q.iter().map(|&j| Instruction::x(j)));
    f.instructions.extend(q.iter().map(|&j| Instruction::h(j)));
    Ok(f)
}

/// Phase oracle marking the single basis value `marked` of `q`.
pub fn grover_oracle(
    q: &[usize],
    anc: &[usize],
    marked: u64,
) -> Result<CircuitFragment, GateError> {
    let width = q.len();
    if width < 64 && marked >> width != 0 {
        return Err(GateError::ConstantTooWide {
            value: marked,
            width,
        });
    }
    let flips: Vec<Instruction> = q
        .iter()
        .enumerate()
        .filter(|(i, _)| (marked >> i) & 1 == 0)
        .map(|(_, &j)| Instruction::x(j))
        .collect();
    let mut f = CircuitFragment::new();
    f.instructions.extend(flips.iter().cloned());
    f.append(multi_controlled_z(q, anc, LadderUncompute::Mirrored)?);
    f.instructions.extend(flips);
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    type Cols = Vec<Vec<Complex64>>;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    // -- independent matrix oracle: explicit 4x4 products, qubit 0 = low bit

    fn mat_mul(a: &Cols, b: &Cols) -> Cols {
        // columns representation: (a*b)[:, j] = a * b[:, j]
        b.iter()
            .map(|col| {
                (0..a.len())
                    .map(|r| (0..a.len()).map(|k| a[k][r] * col[k]).sum())
                    .collect()
            })
            .collect()
    }

    fn single_on(q: usize, m: [[Complex64; 2]; 2]) -> Cols {
        (0..4usize)
            .map(|j| {
                let mut col = vec![c(0.0); 4];
                let bit = (j >> q) & 1;
                for out in 0..2 {
                    col[(j & !(1 << q)) | (out << q)] = m[out][bit];
                }
                col
            })
            .collect()
    }

    fn cnot(ctrl: usize, tgt: usize) -> Cols {
        (0..4usize)
            .map(|j| {
                let mut col = vec![c(0.0); 4];
                let k = if (j >> ctrl) & 1 == 1 {
                    j ^ (1 << tgt)
                } else {
                    j
                };
                col[k] = c(1.0);
                col
            })
            .collect()
    }

    fn true_rz(theta: f64) -> [[Complex64; 2]; 2] {
        [
            [Complex64::from_polar(1.0, -theta / 2.0), c(0.0)],
            [c(0.0), Complex64::from_polar(1.0, theta / 2.0)],
        ]
    }

    fn sequence(ops: &[Cols]) -> Cols {
        ops.iter().fold(
            single_on(0, [[c(1.0), c(0.0)], [c(0.0), c(1.0)]]),
            |acc, op| mat_mul(op, &acc),
        )
    }

    fn controlled_phase(theta: f64) -> Cols {
        (0..4usize)
            .map(|j| {
                let mut col = vec![c(0.0); 4];
                col[j] = if j == 3 {
                    Complex64::from_polar(1.0, theta)
                } else {
                    c(1.0)
                };
                col
            })
            .collect()
    }

    #[test]
    fn elementary_identities() {
        let id = GateMatrix::identity(2);
        let x = elementary(Elementary::X);
        assert!(x.mul(&x).unitarity_error() < 1e-12 && (x.mul(&x) == id));
        let h = elementary(Elementary::H);
        let hh = h.mul(&h);
        for r in 0..2 {
            for col in 0..2 {
                assert!((hh.get(r, col) - id.get(r, col)).norm() < 1e-12);
            }
        }
        let t = 0.7;
        let p = elementary(Elementary::Rz(t)).mul(&elementary(Elementary::Rz(-t)));
        assert!((p.get(0, 0) - c(1.0)).norm() < 1e-12 && (p.get(1, 1) - c(1.0)).norm() < 1e-12);
        for g in [
            Elementary::X,
            Elementary::H,
            Elementary::Z,
            Elementary::Rz(1.1),
            Elementary::Phase(-0.4),
        ] {
            assert!(elementary(g).is_unitary());
        }
    }

    #[test]
    fn elementary_by_name() {
        assert_eq!(Elementary::from_name("H", None), Ok(Elementary::H));
        assert_eq!(
            Elementary::from_name("rz", Some(0.5)),
            Ok(Elementary::Rz(0.5))
        );
        assert!(matches!(
            Elementary::from_name("rz", None),
            Err(GateError::MissingAngle(_))
        ));
        assert!(matches!(
            Elementary::from_name("sqrt", None),
            Err(GateError::UnknownGate(_))
        ));
        assert_eq!(
            Elementary::from_name("p", Some(f64::NAN)),
            Err(GateError::NonFiniteAngle)
        );
    }

    #[test]
    fn decomposition_oracle_agrees_with_library() {
        // The library rotations are phase gates; with true z-rotations in the
        // same positions the product differs only by a global phase.
        for theta in [PI / 2.0, PI / 8.0, 1.234, -0.6] {
            let half = theta / 2.0;
            let drop_c = sequence(&[
                cnot(0, 1),
                single_on(1, true_rz(-half)),
                cnot(0, 1),
                single_on(1, true_rz(half)),
                single_on(0, true_rz(half)),
            ]);
            let drop_a = sequence(&[
                single_on(1, true_rz(half)),
                cnot(0, 1),
                single_on(1, true_rz(-half)),
                cnot(0, 1),
                single_on(0, true_rz(half)),
            ]);
            let direct = controlled_phase(theta);
            assert!(equal_up_to_global_phase(&drop_a, &direct, 1e-10));
            assert!(equal_up_to_global_phase(&drop_c, &direct, 1e-10));

            let angle = Angle::Radians(theta);
            for v in [CrzVariant::DropA, CrzVariant::DropC] {
                let lib = crz_decomposed(0, 1, angle, v).unitary_columns(2).unwrap();
                assert!(equal_up_to_global_phase(&lib, &direct, 1e-10));
            }
            let direct_lib = CircuitFragment {
                instructions: vec![Instruction::crz(0, 1, angle)],
                roles: BTreeMap::new(),
            };
            assert!(equal_up_to_global_phase(
                &direct_lib.unitary_columns(2).unwrap(),
                &direct,
                1e-10
            ));
        }
    }

    #[test]
    fn flipped_decomposition_is_distinguishable() {
        let theta = PI / 2.0;
        let buggy = crz_decomposed(0, 1, Angle::Radians(theta), CrzVariant::FlippedBuggy)
            .unitary_columns(2)
            .unwrap();
        let dev = max_deviation_up_to_global_phase(&buggy, &controlled_phase(theta));
        assert!(dev > 0.1, "deviation {dev}");
        // it applies the phase to |c=1, t=0> instead of |c=1, t=1>
        assert!((buggy[1][1] - Complex64::from_polar(1.0, theta)).norm() < 1e-12);
        assert!((buggy[3][3] - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn drop_c_matches_written_sequence() {
        let f = crz_decomposed(3, 5, Angle::pi_over_pow2(2), CrzVariant::DropC);
        let q = Angle::pi_over_pow2(3);
        assert_eq!(
            f.instructions,
            vec![
                Instruction::cx(3, 5),
                Instruction::rz(5, -q),
                Instruction::cx(3, 5),
                Instruction::rz(5, q),
                Instruction::rz(3, q),
            ]
        );
    }

    #[test]
    fn qft_shapes() {
        let one = qft(&[0], false);
        assert_eq!(one.instructions, vec![Instruction::h(0)]);
        let four = qft(&[0, 1, 2, 3], false);
        assert_eq!(four.len(), 10);
        assert_eq!(
            four.instructions
                .iter()
                .filter(|i| i.gate == Gate::H)
                .count(),
            4
        );
    }

    #[test]
    fn qft_of_basis_state_is_flat_and_invertible() {
        let reg = [0, 1, 2, 3];
        for v in 0..16 {
            let mut s = StateVector::basis(4, v).unwrap();
            qft(&reg, false).apply(&mut s).unwrap();
            for p in s.probabilities() {
                assert!((p - 1.0 / 16.0).abs() < 1e-12);
            }
            qft(&reg, true).apply(&mut s).unwrap();
            assert!((s.amplitude(v) - c(1.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn qft_phases_follow_register_value() {
        // qubit j carries exp(2 pi i b / 2^(j+1)) relative to |0>
        let reg = [0, 1, 2];
        let b = 5u64;
        let mut s = StateVector::basis(3, b).unwrap();
        qft(&reg, false).apply(&mut s).unwrap();
        for y in 0..8u64 {
            let phase: f64 = (0..3)
                .filter(|j| (y >> j) & 1 == 1)
                .map(|j| 2.0 * PI * b as f64 / 2f64.powi(j + 1))
                .sum();
            let want = Complex64::from_polar(1.0 / 8f64.sqrt(), phase);
            assert!((s.amplitude(y) - want).norm() < 1e-12, "y={y}");
        }
    }

    fn run_adder(width: usize, a: u64, b: u64) -> u64 {
        let reg: Vec<usize> = (0..width).collect();
        let mut s = StateVector::basis(width, b).unwrap();
        qft(&reg, false).apply(&mut s).unwrap();
        cadd(&reg, a, &[], false).unwrap().apply(&mut s).unwrap();
        qft(&reg, true).apply(&mut s).unwrap();
        let probs = s.probabilities();
        let (idx, p) = probs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .unwrap();
        assert!(*p > 1.0 - 1e-9, "non-classical result");
        idx as u64
    }

    #[test]
    fn adder_reference_values() {
        assert_eq!(run_adder(5, 13, 12), 25);
        assert!(cadd(&[0, 1, 2, 3, 4], 0, &[], false).unwrap().is_empty());
        for b in 0..32 {
            assert_eq!(run_adder(5, 0, b), b);
        }
    }

    #[test]
    fn adder_control_and_inverse() {
        // controls are qubits 5 and 6, b occupies 0..5
        let reg: Vec<usize> = (0..5).collect();
        for (ctrl_bits, a, b) in [
            (0b11u64, 9u64, 30u64),
            (0b01, 9, 30),
            (0b10, 3, 4),
            (0b11, 31, 31),
        ] {
            let mut s = StateVector::basis(7, (ctrl_bits << 5) | b).unwrap();
            qft(&reg, false).apply(&mut s).unwrap();
            cadd(&reg, a, &[5, 6], false)
                .unwrap()
                .apply(&mut s)
                .unwrap();
            qft(&reg, true).apply(&mut s).unwrap();
            let want = if ctrl_bits == 0b11 { (a + b) % 32 } else { b };
            assert!((s.amplitude((ctrl_bits << 5) | want).norm() - 1.0).abs() < 1e-9);

            let mut s = StateVector::basis(7, (0b11 << 5) | b).unwrap();
            qft(&reg, false).apply(&mut s).unwrap();
            cadd(&reg, a, &[5, 6], true).unwrap().apply(&mut s).unwrap();
            qft(&reg, true).apply(&mut s).unwrap();
            let want = (b + 32 - a) % 32;
            assert!((s.amplitude((0b11 << 5) | want).norm() - 1.0).abs() < 1e-9);
        }
        assert_eq!(
            cadd(&reg, 1, &[5, 6, 7], false).unwrap_err(),
            GateError::TooManyControls(3)
        );
        assert!(matches!(
            cadd(&reg, 40, &[], false),
            Err(GateError::ConstantTooWide { .. })
        ));
    }

    #[test]
    fn number_theory_helpers() {
        assert_eq!(mod_inverse(7, 15), Some(13));
        assert_eq!(mod_inverse(4, 15), Some(4));
        assert_eq!(mod_inverse(12, 15), None);
        assert_eq!(mod_pow(7, 4, 15), 1);
        assert_eq!(
            exponentiation_constants(7, 15, 4).unwrap(),
            vec![(7, 13), (4, 4), (1, 1), (1, 1)]
        );
    }

    /// Layout used below: ctrl=0, x=1..6, b=6..11, ancilla=11 (12 qubits).
    fn layout_12() -> (Vec<usize>, Vec<usize>) {
        ((1..6).collect(), (6..11).collect())
    }

    fn basis_index(ctrl: u64, x: u64, b: u64) -> u64 {
        ctrl | (x << 1) | (b << 6)
    }

    #[test]
    fn cmodmul_computes_reference_example() {
        let (x, b) = layout_12();
        let layout = ModMulLayout {
            ctrl: 0,
            x: &x,
            b: &b,
            ancilla: 11,
            modulus: 15,
        };
        let f = cmodmul(&layout, 7, ModMulStage::Compute).unwrap();
        let mut s = StateVector::basis(12, basis_index(1, 6, 7)).unwrap();
        f.apply(&mut s).unwrap();
        assert!((s.amplitude(basis_index(1, 6, 4)).norm() - 1.0).abs() < 1e-9);

        let mut s = StateVector::basis(12, basis_index(0, 6, 7)).unwrap();
        f.apply(&mut s).unwrap();
        assert!((s.amplitude(basis_index(0, 6, 7)).norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cmodmul_rejects_non_invertible_multiplier() {
        let (x, b) = layout_12();
        let layout = ModMulLayout {
            ctrl: 0,
            x: &x,
            b: &b,
            ancilla: 11,
            modulus: 15,
        };
        assert_eq!(
            cmodmul(&layout, 12, ModMulStage::Compute).unwrap_err(),
            GateError::NotInvertible {
                value: 12,
                modulus: 15
            }
        );
        // the uncompute stage accepts it
        assert!(cmodmul(&layout, 12, ModMulStage::Uncompute).is_ok());
        let short = [6, 7, 8, 9];
        let bad = ModMulLayout {
            b: &short,
            ..layout
        };
        assert!(matches!(
            cmodmul(&bad, 7, ModMulStage::Compute),
            Err(GateError::RegisterTooSmall { needed: 5, .. })
        ));
    }

    #[test]
    fn in_place_multiplier_round_trip() {
        let (x, b) = layout_12();
        let layout = ModMulLayout {
            ctrl: 0,
            x: &x,
            b: &b,
            ancilla: 11,
            modulus: 15,
        };
        let ua = controlled_ua(&layout, 7, 13).unwrap();
        for xv in [1u64, 6, 14] {
            for ctrl in [0u64, 1] {
                let mut s = StateVector::basis(12, basis_index(ctrl, xv, 0)).unwrap();
                ua.apply(&mut s).unwrap();
                let want = if ctrl == 1 { 7 * xv % 15 } else { xv };
                assert!(
                    (s.amplitude(basis_index(ctrl, want, 0)).norm() - 1.0).abs() < 1e-9,
                    "x={xv} ctrl={ctrl}"
                );
            }
        }
    }

    #[test]
    fn unit_multiplier_stage_is_identity_on_clean_work_register() {
        let (x, b) = layout_12();
        let layout = ModMulLayout {
            ctrl: 0,
            x: &x,
            b: &b,
            ancilla: 11,
            modulus: 15,
        };
        let ua = controlled_ua(&layout, 1, 1).unwrap();
        for xv in 0..15u64 {
            for ctrl in [0u64, 1] {
                let mut s = StateVector::basis(12, basis_index(ctrl, xv, 0)).unwrap();
                ua.apply(&mut s).unwrap();
                assert!((s.amplitude(basis_index(ctrl, xv, 0)).norm() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fragment_inverse_law() {
        let (x, b) = layout_12();
        let layout = ModMulLayout {
            ctrl: 0,
            x: &x,
            b: &b,
            ancilla: 11,
            modulus: 15,
        };
        let frags = vec![
            qft(&[0, 1, 2, 3], false),
            cadd(&[0, 1, 2, 3, 4], 21, &[5], false).unwrap(),
            crz_decomposed(1, 0, Angle::Radians(0.3), CrzVariant::FlippedBuggy),
            cmodmul(&layout, 4, ModMulStage::Compute).unwrap(),
            grover_diffusion(&[0, 1, 2], &[3, 4]).unwrap(),
            grover_oracle(&[0, 1, 2], &[3, 4], 5).unwrap(),
        ];
        for f in frags {
            let n = f.span().max(2);
            for v in [0u64, 1, (1 << n) - 1, (1 << n) / 3] {
                let mut s = StateVector::basis(n, v).unwrap();
                f.apply(&mut s).unwrap();
                f.inverse().apply(&mut s).unwrap();
                assert!((s.amplitude(v) - c(1.0)).norm() < 1e-9);
            }
        }
    }

    fn uniform(n: usize, extra: usize) -> StateVector {
        let mut s = StateVector::new(n + extra).unwrap();
        for q in 0..n {
            Instruction::h(q).apply(&mut s).unwrap();
        }
        s
    }

    #[test]
    fn diffusion_fixes_uniform_superposition() {
        let f = grover_diffusion(&[0, 1, 2], &[3, 4]).unwrap();
        let before = uniform(3, 2);
        let mut after = before.clone();
        f.apply(&mut after).unwrap();
        let overlap: Complex64 = before
            .amplitudes()
            .iter()
            .zip(after.amplitudes())
            .map(|(a, b)| a.conj() * b)
            .sum();
        assert!((overlap.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diffusion_is_self_inverse_up_to_phase() {
        let f = grover_diffusion(&[0, 1, 2], &[3, 4]).unwrap();
        let mut twice = f.clone();
        twice.append(f.clone());
        let cols = twice.unitary_columns(5).unwrap();
        let id: Cols = (0..32)
            .map(|j| {
                (0..32)
                    .map(|i| if i == j { c(1.0) } else { c(0.0) })
                    .collect()
            })
            .collect();
        // only the ancilla-clean subspace matters; check those columns
        let clean: Vec<usize> = (0..8).collect();
        let a: Cols = clean.iter().map(|&j| cols[j].clone()).collect();
        let b: Cols = clean.iter().map(|&j| id[j].clone()).collect();
        assert!(equal_up_to_global_phase(&a, &b, 1e-10));
    }

    /// Exact amplitude recurrence for Grover search over N items, one marked.
    fn recurrence_success(n_items: f64, iterations: usize) -> f64 {
        let (mut good, mut bad) = (1.0 / n_items.sqrt(), 1.0 / n_items.sqrt());
        for _ in 0..iterations {
            // oracle flips the marked amplitude, diffusion reflects about the mean
            let flipped = -good;
            let mean = (flipped + (n_items - 1.0) * bad) / n_items;
            good = 2.0 * mean - flipped;
            bad = 2.0 * mean - bad;
        }
        good * good
    }

    #[test]
    fn grover_three_qubits_two_iterations() {
        let q = [0, 1, 2];
        let anc = [3, 4];
        let expected = recurrence_success(8.0, 2);
        assert!(expected >= 0.9);
        for marked in 0..8u64 {
            let mut s = uniform(3, 2);
            for _ in 0..2 {
                grover_oracle(&q, &anc, marked)
                    .unwrap()
                    .apply(&mut s)
                    .unwrap();
                grover_diffusion(&q, &anc).unwrap().apply(&mut s).unwrap();
            }
            let p = s.probabilities()[marked as usize];
            assert!((p - expected).abs() < 1e-10, "marked {marked}: {p}");
            // ancillas returned to zero
            let dirty: f64 = s.probabilities().iter().skip(8).sum();
            assert!(dirty < 1e-12);
        }
    }

    #[test]
    fn forward_uncompute_leaves_ancilla_dirty() {
        let f = grover_diffusion_with(&[0, 1, 2], &[3, 4], LadderUncompute::Forward).unwrap();
        let mut s = uniform(3, 2);
        f.apply(&mut s).unwrap();
        let dirty: f64 = s.probabilities().iter().skip(8).sum();
        assert!(dirty > 0.05, "{dirty}");
        assert!(matches!(
            grover_diffusion(&[0, 1, 2], &[3]),
            Err(GateError::AncillaTooSmall { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn angle_formatting_round_trips() {
        assert_eq!(Angle::pi_over_pow2(3).to_string(), "pi/2^3");
        assert_eq!((-Angle::pi_over_pow2(0)).to_string(), "-pi");
        assert_eq!(Angle::pi_over_pow2(2).half(), Angle::pi_over_pow2(3));
        let r = Angle::Radians(0.1 + 0.2);
        assert_eq!(r.to_string().parse::<f64>().unwrap(), 0.1 + 0.2);
    }
}

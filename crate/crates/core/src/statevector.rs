//! Dense state-vector simulation.
//!
//! Qubit `i` is bit `i` of a basis-state index (little-endian), so the
//! amplitude of `|b_{n-1} ... b_1 b_0>` lives at index `sum b_i 2^i`. Every
//! integer/bitstring conversion in the crate goes through this convention.

use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exec::{self, Execution};
use crate::stats::Histogram;

/// Tolerance for algebraic identities (unitarity, norm after a gate).
pub const ALGEBRAIC_TOL: f64 = 1e-10;
/// Accumulated-drift alarm used before sampling.
pub const DRIFT_TOL: f64 = 1e-6;

/// States at least this large apply gates with the parallel kernel.
#[cfg(feature = "parallel")]
const PAR_GATE_THRESHOLD: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("{requested} qubits exceeds the configured limit of {limit}")]
    TooManyQubits { requested: usize, limit: usize },
    #[error("a register needs at least one qubit")]
    NoQubits,
    #[error("qubit {qubit} out of range for a {num_qubits}-qubit state")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },
    #[error("qubit {qubit} appears more than once among targets and controls")]
    OverlappingOperands { qubit: usize },
    #[error("gate of dimension {dimension} cannot act on {targets} target qubit(s)")]
    DimensionMismatch { dimension: usize, targets: usize },
    #[error("amplitude vector length {0} is not a power of two")]
    BadLength(usize),
    #[error("state norm drifted to {norm} (expected 1)")]
    NotNormalized { norm: f64 },
    #[error("at least one shot is required")]
    NoShots,
}

/// A square unitary acting on one or two qubits, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GateMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl GateMatrix {
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Self {
        assert!(dim == 2 || dim == 4, "gate matrices are 2x2 or 4x4");
        assert_eq!(entries.len(), dim * dim);
        Self { dim, entries }
    }

    pub fn from_2x2(m: [[Complex64; 2]; 2]) -> Self {
        Self::new(2, vec![m[0][0], m[0][1], m[1][0], m[1][1]])
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        Self::new(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn dagger(&self) -> Self {
        let d = self.dim;
        let mut entries = vec![Complex64::new(0.0, 0.0); d * d];
        for r in 0..d {
            for c in 0..d {
                entries[c * d + r] = self.entries[r * d + c].conj();
            }
        }
        Self::new(d, entries)
    }

    /// Matrix product `self * rhs`.
    pub fn mul(&self, rhs: &GateMatrix) -> Self {
        assert_eq!(self.dim, rhs.dim);
        let d = self.dim;
        let mut entries = vec![Complex64::new(0.0, 0.0); d * d];
        for r in 0..d {
            for c in 0..d {
                entries[r * d + c] = (0..d).map(|k| self.get(r, k) * rhs.get(k, c)).sum();
            }
        }
        Self::new(d, entries)
    }

    /// Largest entrywise deviation of `G G^dagger` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.mul(&self.dagger());
        let id = GateMatrix::identity(self.dim);
        p.entries
            .iter()
            .zip(&id.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_error() <= ALGEBRAIC_TOL
    }
}

/// The outcome of measuring every qubit of a state once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bitstring {
    value: u64,
    width: usize,
}

impl Bitstring {
    pub fn new(value: u64, width: usize) -> Self {
        debug_assert!(width >= 64 || value >> width == 0);
        Self { value, width }
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn len(&self) -> usize {
        self.width
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0
    }

    pub fn bit(&self, qubit: usize) -> bool {
        (self.value >> qubit) & 1 == 1
    }

    /// Integer reading of qubits `offset .. offset + width`.
    pub fn slice(&self, offset: usize, width: usize) -> u64 {
        extract_bits(self.value, offset, width)
    }
}

impl fmt::Display for Bitstring {
    /// Printed in ket order: the highest qubit first.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in (0..self.width).rev() {
            f.write_str(if self.bit(q) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

pub(crate) fn extract_bits(value: u64, offset: usize, width: usize) -> u64 {
    if width == 0 {
        return 0;
    }
    let shifted = value >> offset;
    if width >= 64 {
        shifted
    } else {
        shifted & ((1u64 << width) - 1)
    }
}

/// Seeds the random stream of one shot.
///
/// Shot `i` always reads ChaCha stream `i` of the master seed, so a histogram
/// does not depend on how shots are scheduled across threads.
pub fn shot_rng(seed: u64, shot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot);
    rng
}

/// Mixes a child seed out of a master seed (splitmix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub const DEFAULT_MAX_QUBITS: usize = 24;

    /// `|0...0>` on `num_qubits` qubits.
    pub fn new(num_qubits: usize) -> Result<Self, SimError> {
        Self::with_limit(num_qubits, Self::DEFAULT_MAX_QUBITS)
    }

    pub fn with_limit(num_qubits: usize, max_qubits: usize) -> Result<Self, SimError> {
        Self::basis_with_limit(num_qubits, 0, max_qubits)
    }

    /// Computational basis state `|index>`.
    pub fn basis(num_qubits: usize, index: u64) -> Result<Self, SimError> {
        Self::basis_with_limit(num_qubits, index, Self::DEFAULT_MAX_QUBITS)
    }

    /// Like [`Self::basis`] with an explicit qubit limit.
    pub fn basis_with_limit(num_qubits: usize, index: u64, limit: usize) -> Result<Self, SimError> {
        if num_qubits == 0 {
            return Err(SimError::NoQubits);
        }
        let limit = limit.min(40);
        if num_qubits > limit {
            return Err(SimError::TooManyQubits {
                requested: num_qubits,
                limit,
            });
        }
        let dim = 1usize << num_qubits;
        assert!((index as usize) < dim, "basis index out of range");
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[index as usize] = Complex64::new(1.0, 0.0);
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    /// Wraps an explicit amplitude vector; it must be normalized.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self, SimError> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(SimError::BadLength(len));
        }
        let state = Self {
            num_qubits: len.trailing_zeros() as usize,
            amplitudes,
        };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > ALGEBRAIC_TOL {
            return Err(SimError::NotNormalized { norm });
        }
        Ok(state)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, index: u64) -> Complex64 {
        self.amplitudes[index as usize]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    fn check_operands(&self, targets: &[usize], controls: &[usize]) -> Result<(), SimError> {
        let mut seen = 0u64;
        for &q in targets.iter().chain(controls) {
            if q >= self.num_qubits {
                return Err(SimError::QubitOutOfRange {
                    qubit: q,
                    num_qubits: self.num_qubits,
                });
            }
            if seen & (1 << q) != 0 {
                return Err(SimError::OverlappingOperands { qubit: q });
            }
            seen |= 1 << q;
        }
        Ok(())
    }

    /// Applies `gate` to `targets`, conditioned on every control reading 1.
    ///
    /// For a 4x4 gate, `targets[0]` is the low bit of the gate's basis index.
    pub fn apply(
        &mut self,
        gate: &GateMatrix,
        targets: &[usize],
        controls: &[usize],
    ) -> Result<(), SimError> {
        if gate.dim() != 1 << targets.len() {
            return Err(SimError::DimensionMismatch {
                dimension: gate.dim(),
                targets: targets.len(),
            });
        }
        self.check_operands(targets, controls)?;
        let cmask = mask_of(controls);
        match targets {
            [t] => {
                let m = [
                    [gate.get(0, 0), gate.get(0, 1)],
                    [gate.get(1, 0), gate.get(1, 1)],
                ];
                self.single_kernel(*t, cmask, m);
            }
            [t0, t1] => self.two_kernel(*t0, *t1, cmask, gate),
            _ => unreachable!("dimension check admits one or two targets"),
        }
        Ok(())
    }

    /// Controlled 2x2 unitary on `target`.
    pub fn apply_single(
        &mut self,
        m: [[Complex64; 2]; 2],
        target: usize,
        controls: &[usize],
    ) -> Result<(), SimError> {
        self.check_operands(&[target], controls)?;
        self.single_kernel(target, mask_of(controls), m);
        Ok(())
    }

    /// Multiplies every amplitude whose `target` and `controls` all read 1 by
    /// `phase`. Covers Z, the phase rotation and their controlled forms.
    pub fn apply_phase(
        &mut self,
        phase: Complex64,
        target: usize,
        controls: &[usize],
    ) -> Result<(), SimError> {
        self.check_operands(&[target], controls)?;
        let mask = mask_of(controls) | (1usize << target);
        let kernel = |offset: usize, chunk: &mut [Complex64]| {
            for (k, a) in chunk.iter_mut().enumerate() {
                if (offset + k) & mask == mask {
                    *a *= phase;
                }
            }
        };
        self.for_chunks(kernel);
        Ok(())
    }

    /// Controlled bit flip on `target`.
    pub fn apply_x(&mut self, target: usize, controls: &[usize]) -> Result<(), SimError> {
        self.check_operands(&[target], controls)?;
        let cmask = mask_of(controls);
        self.pair_kernel(target, cmask, std::mem::swap);
        Ok(())
    }

    fn single_kernel(&mut self, target: usize, cmask: usize, m: [[Complex64; 2]; 2]) {
        self.pair_kernel(target, cmask, |a0, a1| {
            let (x, y) = (*a0, *a1);
            *a0 = m[0][0] * x + m[0][1] * y;
            *a1 = m[1][0] * x + m[1][1] * y;
        });
    }

    /// Visits every amplitude pair `(i, i | 1 << target)` whose index
    /// satisfies the control mask.
    fn pair_kernel<F>(&mut self, target: usize, cmask: usize, f: F)
    where
        F: Fn(&mut Complex64, &mut Complex64) + Sync + Send,
    {
        let half = 1usize << target;
        let block = half << 1;
        let visit = |base: usize, chunk: &mut [Complex64]| {
            let (lo, hi) = chunk.split_at_mut(half);
            for (k, (a0, a1)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                if (base + k) & cmask == cmask {
                    f(a0, a1);
                }
            }
        };
        #[cfg(feature = "parallel")]
        if self.amplitudes.len() >= PAR_GATE_THRESHOLD && block < self.amplitudes.len() {
            use rayon::prelude::*;
            self.amplitudes
                .par_chunks_mut(block)
                .enumerate()
                .for_each(|(b, chunk)| visit(b * block, chunk));
            return;
        }
        for (b, chunk) in self.amplitudes.chunks_mut(block).enumerate() {
            visit(b * block, chunk);
        }
    }

    fn for_chunks<F>(&mut self, f: F)
    where
        F: Fn(usize, &mut [Complex64]) + Sync + Send,
    {
        const CHUNK: usize = 1 << 12;
        #[cfg(feature = "parallel")]
        if self.amplitudes.len() >= PAR_GATE_THRESHOLD {
            use rayon::prelude::*;
            self.amplitudes
                .par_chunks_mut(CHUNK)
                .enumerate()
                .for_each(|(b, chunk)| f(b * CHUNK, chunk));
            return;
        }
        for (b, chunk) in self.amplitudes.chunks_mut(CHUNK).enumerate() {
            f(b * CHUNK, chunk);
        }
    }

    fn two_kernel(&mut self, t0: usize, t1: usize, cmask: usize, gate: &GateMatrix) {
        let tmask = (1usize << t0) | (1usize << t1);
        let offsets = [0, 1usize << t0, 1usize << t1, tmask];
        for i in 0..self.amplitudes.len() {
            if i & tmask != 0 || i & cmask != cmask {
                continue;
            }
            let input: [Complex64; 4] = std::array::from_fn(|k| self.amplitudes[i | offsets[k]]);
            for (r, off) in offsets.iter().enumerate() {
                self.amplitudes[i | off] = (0..4).map(|c| gate.get(r, c) * input[c]).sum();
            }
        }
    }

    fn check_drift(&self) -> Result<(), SimError> {
        let norm = self.norm_sqr();
        if (norm - 1.0).abs() > DRIFT_TOL {
            return Err(SimError::NotNormalized { norm });
        }
        Ok(())
    }

    /// Samples one full-width measurement outcome.
    ///
    /// Draws a single uniform variate and walks the cumulative distribution,
    /// so the outcome for a given random stream matches [`Self::sample_shots`].
    pub fn measure_shot<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Bitstring, SimError> {
        self.check_drift()?;
        let u: f64 = rng.random();
        Ok(Bitstring::new(self.index_for(u), self.num_qubits))
    }

    fn index_for(&self, u: f64) -> u64 {
        let cdf = self.cumulative();
        locate(&cdf, u)
    }

    fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.amplitudes
            .iter()
            .map(|a| {
                acc += a.norm_sqr();
                acc
            })
            .collect()
    }

    /// Shot-indexed full-width outcomes; shot `i` reads [`shot_rng`]`(seed, i)`.
    pub fn sample_shots(
        &self,
        shots: usize,
        seed: u64,
        exec: Execution,
    ) -> Result<Vec<u64>, SimError> {
        if shots == 0 {
            return Err(SimError::NoShots);
        }
        self.check_drift()?;
        let cdf = self.cumulative();
        Ok(exec::map_indexed(exec, shots, |i| {
            let u: f64 = shot_rng(seed, i as u64).random();
            locate(&cdf, u)
        }))
    }

    /// Histogram of `shots` full-width outcomes.
    pub fn sample_histogram(&self, shots: usize, seed: u64) -> Result<Histogram, SimError> {
        let outcomes = self.sample_shots(shots, seed, Execution::default())?;
        Ok(outcomes.into_iter().collect())
    }
}

/// First index whose cumulative probability exceeds `u * total`, skipping
/// zero-probability states at the boundary.
fn locate(cdf: &[f64], u: f64) -> u64 {
    let total = *cdf.last().expect("non-empty state");
    let target = u * total;
    let idx = cdf.partition_point(|&c| c <= target);
    idx.min(cdf.len() - 1) as u64
}

fn mask_of(qubits: &[usize]) -> usize {
    qubits.iter().fold(0, |m, &q| m | (1usize << q))
}

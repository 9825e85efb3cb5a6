//! Breakpoint splitting, measurement ensembles and verdicts.
//!
//! Each assertion becomes its own truncated program: every instruction that
//! precedes it, then a measurement of all qubits. The ensemble of such runs
//! is tested against the assertion's null hypothesis.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Execution};
use crate::gates::{Instruction, ModMulStage};
use crate::program::{MacroCall, Prep, Program, Register, StatementKind};
use crate::statevector::{derive_seed, extract_bits, shot_rng, SimError, StateVector};
use crate::stats::{
    chi2_contingency, chi2_gof, ChiSquareOutcome, ContingencyTable, Histogram, StatsError,
};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_SEED: u64 = 2019;

/// A contiguous run of qubits inside one register.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegisterSlice {
    pub register: String,
    /// First qubit, relative to the register.
    pub start: usize,
    pub width: usize,
    /// First qubit, as a global index.
    pub offset: usize,
    /// Covers the whole register.
    pub full: bool,
}

impl RegisterSlice {
    pub fn whole(r: &Register) -> Self {
        Self::new(r, 0, r.width)
    }

    pub fn new(r: &Register, start: usize, width: usize) -> Self {
        assert!(start + width <= r.width);
        Self {
            register: r.name.clone(),
            start,
            width,
            offset: r.offset + start,
            full: start == 0 && width == r.width,
        }
    }

    pub fn qubits(&self) -> Vec<usize> {
        (self.offset..self.offset + self.width).collect()
    }

    /// Integer value of this slice in a full-width outcome.
    pub fn read(&self, outcome: u64) -> u64 {
        extract_bits(outcome, self.offset, self.width)
    }
}

impl fmt::Display for RegisterSlice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.full {
            f.write_str(&self.register)
        } else if self.width == 1 {
            write!(f, "{}[{}]", self.register, self.start)
        } else {
            write!(
                f,
                "{}[{}:{}]",
                self.register,
                self.start,
                self.start + self.width
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AssertionKind {
    Classical { reg: RegisterSlice, expected: u64 },
    Superposition { reg: RegisterSlice },
    Entangled { a: RegisterSlice, b: RegisterSlice },
    Product { a: RegisterSlice, b: RegisterSlice },
}

impl AssertionKind {
    pub fn name(&self) -> &'static str {
        match self {
            AssertionKind::Classical { .. } => "classical",
            AssertionKind::Superposition { .. } => "superposition",
            AssertionKind::Entangled { .. } => "entangled",
            AssertionKind::Product { .. } => "product",
        }
    }

    /// Ensemble size used when the caller does not fix one.
    pub fn default_shots(&self) -> usize {
        match self {
            AssertionKind::Classical { .. } => 32,
            AssertionKind::Superposition { reg } => 100.max(5usize << reg.width.min(40)),
            AssertionKind::Entangled { .. } | AssertionKind::Product { .. } => 16,
        }
    }
}

impl fmt::Display for AssertionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssertionKind::Classical { reg, expected } => write!(f, "classical {reg} {expected}"),
            AssertionKind::Superposition { reg } => write!(f, "superposition {reg}"),
            AssertionKind::Entangled { a, b } => write!(f, "entangled {a} {b}"),
            AssertionKind::Product { a, b } => write!(f, "product {a} {b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assertion {
    #[serde(flatten)]
    pub kind: AssertionKind,
    /// Source line of the directive.
    pub line: usize,
}

/// Everything up to one assertion, to be followed by a full measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakpointProgram {
    /// Position of the assertion among the program's assertions.
    pub index: usize,
    pub registers: Vec<Register>,
    pub preps: Vec<Prep>,
    pub body: Vec<Instruction>,
    pub assertion: Assertion,
}

impl BreakpointProgram {
    pub fn num_qubits(&self) -> usize {
        self.registers.iter().map(|r| r.width).sum()
    }

    /// Basis state the preparations produce.
    pub fn initial_index(&self) -> u64 {
        self.preps.iter().fold(0u64, |acc, p| {
            if p.value {
                acc | (1 << p.qubit)
            } else {
                acc & !(1 << p.qubit)
            }
        })
    }

    /// Simulates the prefix.
    pub fn final_state(&self, max_qubits: usize) -> Result<StateVector, SimError> {
        let mut s =
            StateVector::basis_with_limit(self.num_qubits(), self.initial_index(), max_qubits)?;
        for ins in &self.body {
            ins.apply(&mut s)?;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub breakpoints: Vec<BreakpointProgram>,
    pub warnings: Vec<String>,
}

/// One truncated program per assertion, in source order.
pub fn split_at_breakpoints(program: &Program) -> Split {
    let mut preps = Vec::new();
    let mut body = Vec::new();
    let mut breakpoints = Vec::new();
    for s in &program.statements {
        match &s.kind {
            StatementKind::Prep(p) => preps.push(*p),
            StatementKind::Gate(i) => body.push(i.clone()),
            StatementKind::Macro { body: b, .. } => body.extend(b.iter().cloned()),
            StatementKind::Assert(a) => breakpoints.push(BreakpointProgram {
                index: breakpoints.len(),
                registers: program.registers.clone(),
                preps: preps.clone(),
                body: body.clone(),
                assertion: a.clone(),
            }),
            StatementKind::MeasureAll => {}
        }
    }
    let warnings = if breakpoints.is_empty() {
        vec!["program has no assertions; nothing to check".to_string()]
    } else {
        Vec::new()
    };
    Split {
        breakpoints,
        warnings,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleMode {
    /// Simulate once, then draw every shot from the final distribution.
    #[default]
    Sampled,
    /// Re-simulate the prefix for every shot. Same outcomes, much slower.
    PerShotRerun,
}

/// Shot-indexed full-width outcomes of one breakpoint program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementEnsemble {
    pub num_qubits: usize,
    pub seed: u64,
    pub outcomes: Vec<u64>,
}

impl MeasurementEnsemble {
    pub fn shots(&self) -> usize {
        self.outcomes.len()
    }

    pub fn readings(&self, reg: &RegisterSlice) -> Vec<u64> {
        self.outcomes.iter().map(|&o| reg.read(o)).collect()
    }

    pub fn histogram(&self, reg: &RegisterSlice) -> Histogram {
        self.outcomes.iter().map(|&o| reg.read(o)).collect()
    }

    pub fn table(&self, a: &RegisterSlice, b: &RegisterSlice) -> ContingencyTable {
        ContingencyTable::from_pairs(self.outcomes.iter().map(|&o| (a.read(o), b.read(o))))
    }

    fn check_width(&self, reg: &RegisterSlice) -> Result<(), AssertionError> {
        if reg.offset + reg.width > self.num_qubits {
            return Err(AssertionError::RegisterOutOfRange {
                register: reg.to_string(),
                num_qubits: self.num_qubits,
            });
        }
        Ok(())
    }
}

pub fn run_ensemble(
    bp: &BreakpointProgram,
    shots: usize,
    seed: u64,
    mode: EnsembleMode,
    exec: Execution,
    max_qubits: usize,
) -> Result<MeasurementEnsemble, SimError> {
    let outcomes = match mode {
        EnsembleMode::Sampled => bp
            .final_state(max_qubits)?
            .sample_shots(shots, seed, exec)?,
        EnsembleMode::PerShotRerun => {
            if shots == 0 {
                return Err(SimError::NoShots);
            }
            exec::try_map_indexed(exec, shots, |i| {
                let state = bp.final_state(max_qubits)?;
                let mut rng = shot_rng(seed, i as u64);
                Ok(state.measure_shot(&mut rng)?.value())
            })?
        }
    };
    Ok(MeasurementEnsemble {
        num_qubits: bp.num_qubits(),
        seed,
        outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssertionError {
    #[error("register {register} lies outside the {num_qubits} measured qubits")]
    RegisterOutOfRange { register: String, num_qubits: usize },
    #[error("registers {a} and {b} overlap")]
    Overlap { a: String, b: String },
    #[error("the ensemble is empty")]
    EmptyEnsemble,
    #[error("expected value {expected} does not fit in {register}")]
    ValueTooWide { register: String, expected: u64 },
    #[error("register {0} is too wide for a goodness-of-fit test")]
    TooWide(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    /// Passed because the test is vacuous: a register never varied.
    PassDegenerate,
    Fail,
    Indeterminate,
}

impl Status {
    pub fn passed(self) -> bool {
        matches!(self, Status::Pass | Status::PassDegenerate)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::PassDegenerate => "pass-degenerate",
            Status::Fail => "fail",
            Status::Indeterminate => "indeterminate",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fail if anything failed, else indeterminate if anything was, else pass.
pub fn overall_status<'a>(statuses: impl IntoIterator<Item = &'a Status>) -> Status {
    let mut out = Status::Pass;
    for s in statuses {
        match s {
            Status::Fail => return Status::Fail,
            Status::Indeterminate => out = Status::Indeterminate,
            _ => {}
        }
    }
    out
}

/// Data a verdict was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Evidence {
    Histogram { histogram: Histogram },
    Contingency { table: ContingencyTable },
}

/// Statistical outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub status: Status,
    pub statistic: Option<f64>,
    pub dof: Option<u32>,
    pub p_value: Option<f64>,
    /// Too few shots for the chi-square approximation to be trusted.
    pub low_power: bool,
    /// A register was constant, so the independence test is undefined.
    pub degenerate: bool,
    pub note: Option<String>,
    pub evidence: Evidence,
}

impl Check {
    fn new(status: Status, p_value: Option<f64>, evidence: Evidence) -> Self {
        Self {
            status,
            statistic: None,
            dof: None,
            p_value,
            low_power: false,
            degenerate: false,
            note: None,
            evidence,
        }
    }
}

/// Exact test: every reading must equal `expected`.
pub fn check_classical(
    ensemble: &MeasurementEnsemble,
    reg: &RegisterSlice,
    expected: u64,
) -> Result<Check, AssertionError> {
    ensemble.check_width(reg)?;
    if reg.width < 64 && expected >> reg.width != 0 {
        return Err(AssertionError::ValueTooWide {
            register: reg.to_string(),
            expected,
        });
    }
    if ensemble.shots() == 0 {
        return Err(AssertionError::EmptyEnsemble);
    }
    let histogram = ensemble.histogram(reg);
    let misses = histogram.total() - histogram.count(expected);
    let mut check = if misses == 0 {
        Check::new(Status::Pass, Some(1.0), Evidence::Histogram { histogram })
    } else {
        let mut c = Check::new(Status::Fail, Some(0.0), Evidence::Histogram { histogram });
        c.note = Some(format!(
            "{misses} of {} readings differ from {expected}",
            ensemble.shots()
        ));
        c
    };
    check.low_power = ensemble.shots() < 2;
    Ok(check)
}

/// Goodness of fit against the uniform distribution over `2^width` values.
pub fn check_superposition(
    ensemble: &MeasurementEnsemble,
    reg: &RegisterSlice,
    alpha: f64,
) -> Result<Check, AssertionError> {
    ensemble.check_width(reg)?;
    if reg.width > 24 {
        return Err(AssertionError::TooWide(reg.to_string()));
    }
    let histogram = ensemble.histogram(reg);
    let shots = ensemble.shots();
    if shots < 2 {
        return Ok(Check::new(
            Status::Indeterminate,
            None,
            Evidence::Histogram { histogram },
        ));
    }
    let cells = 1usize << reg.width;
    let expected = vec![1.0 / cells as f64; cells];
    let result = chi2_gof(&histogram, &expected)?;
    let r = *result
        .computed()
        .expect("every reading of the register is a cell of the uniform distribution");
    let status = if r.rejects(alpha) {
        Status::Fail
    } else {
        Status::Pass
    };
    let mut c = Check::new(status, Some(r.p_value), Evidence::Histogram { histogram });
    c.statistic = Some(r.statistic);
    c.dof = Some(r.dof);
    c.low_power = shots < 5 * cells;
    Ok(c)
}

fn contingency(
    ensemble: &MeasurementEnsemble,
    a: &RegisterSlice,
    b: &RegisterSlice,
) -> Result<(ContingencyTable, ChiSquareOutcome), AssertionError> {
    ensemble.check_width(a)?;
    ensemble.check_width(b)?;
    let (qa, qb) = (a.qubits(), b.qubits());
    if qa.iter().any(|q| qb.contains(q)) {
        return Err(AssertionError::Overlap {
            a: a.to_string(),
            b: b.to_string(),
        });
    }
    let table = ensemble.table(a, b);
    let outcome = chi2_contingency(&table)?;
    Ok((table, outcome))
}

const NOT_DETECTED: &str =
    "entanglement not detected; evidence of a bug, not proof the registers are separable";

/// Passes when the independence test rejects.
///
/// A constant register cannot show correlation, so a degenerate table fails
/// (with the `degenerate` flag set) rather than being left undecided.
pub fn check_entangled(
    ensemble: &MeasurementEnsemble,
    a: &RegisterSlice,
    b: &RegisterSlice,
    alpha: f64,
) -> Result<Check, AssertionError> {
    let (table, outcome) = contingency(ensemble, a, b)?;
    let evidence = Evidence::Contingency { table };
    if ensemble.shots() < 2 {
        return Ok(Check::new(Status::Indeterminate, None, evidence));
    }
    Ok(match outcome {
        ChiSquareOutcome::Computed(r) => {
            let status = if r.rejects(alpha) {
                Status::Pass
            } else {
                Status::Fail
            };
            let mut c = Check::new(status, Some(r.p_value), evidence);
            c.statistic = Some(r.statistic);
            c.dof = Some(r.dof);
            c.low_power = r.low_expected_counts();
            if status == Status::Fail {
                c.note = Some(NOT_DETECTED.into());
            }
            c
        }
        _ => {
            let mut c = Check::new(Status::Fail, Some(1.0), evidence);
            c.degenerate = true;
            c.note = Some(format!("a register is constant; {NOT_DETECTED}"));
            c
        }
    })
}

/// Passes when the independence test does not reject.
pub fn check_product(
    ensemble: &MeasurementEnsemble,
    a: &RegisterSlice,
    b: &RegisterSlice,
    alpha: f64,
) -> Result<Check, AssertionError> {
    let (table, outcome) = contingency(ensemble, a, b)?;
    let evidence = Evidence::Contingency { table };
    if ensemble.shots() < 2 {
        return Ok(Check::new(Status::Indeterminate, None, evidence));
    }
    Ok(match outcome {
        ChiSquareOutcome::Computed(r) => {
            let status = if r.rejects(alpha) {
                Status::Fail
            } else {
                Status::Pass
            };
            let mut c = Check::new(status, Some(r.p_value), evidence);
            c.statistic = Some(r.statistic);
            c.dof = Some(r.dof);
            c.low_power = r.low_expected_counts();
            c
        }
        _ => {
            let mut c = Check::new(Status::PassDegenerate, Some(1.0), evidence);
            c.degenerate = true;
            c.note =
                Some("a register is constant, so the registers are trivially independent".into());
            c
        }
    })
}

pub fn check(
    ensemble: &MeasurementEnsemble,
    kind: &AssertionKind,
    alpha: f64,
) -> Result<Check, AssertionError> {
    match kind {
        AssertionKind::Classical { reg, expected } => check_classical(ensemble, reg, *expected),
        AssertionKind::Superposition { reg } => check_superposition(ensemble, reg, alpha),
        AssertionKind::Entangled { a, b } => check_entangled(ensemble, a, b, alpha),
        AssertionKind::Product { a, b } => check_product(ensemble, a, b, alpha),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Overrides every assertion's default ensemble size.
    pub shots: Option<usize>,
    pub seed: u64,
    pub alpha: f64,
    pub mode: EnsembleMode,
    pub exec: Execution,
    pub max_qubits: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            shots: None,
            seed: DEFAULT_SEED,
            alpha: DEFAULT_ALPHA,
            mode: EnsembleMode::Sampled,
            exec: Execution::default(),
            max_qubits: StateVector::DEFAULT_MAX_QUBITS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// Position among the program's assertions, from 0.
    pub index: usize,
    pub assertion: Assertion,
    pub shots: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub check: Check,
    /// Reading of every declared register at this breakpoint.
    pub registers: BTreeMap<String, Histogram>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("breakpoint {index} (line {line}): {source}")]
    Simulation {
        index: usize,
        line: usize,
        #[source]
        source: SimError,
    },
    #[error("breakpoint {index} (line {line}): {source}")]
    Assertion {
        index: usize,
        line: usize,
        #[source]
        source: AssertionError,
    },
}

impl EngineError {
    /// Simulation limits rather than a malformed request.
    pub fn is_resource(&self) -> bool {
        matches!(
            self,
            EngineError::Simulation {
                source: SimError::TooManyQubits { .. } | SimError::NotNormalized { .. },
                ..
            }
        )
    }
}

/// Runs one breakpoint and renders its verdict.
pub fn evaluate_breakpoint(
    bp: &BreakpointProgram,
    opts: &EvalOptions,
) -> Result<Verdict, EngineError> {
    let shots = opts
        .shots
        .unwrap_or_else(|| bp.assertion.kind.default_shots());
    let seed = derive_seed(opts.seed, bp.index as u64);
    let (index, line) = (bp.index, bp.assertion.line);
    let ensemble =
        run_ensemble(bp, shots, seed, opts.mode, opts.exec, opts.max_qubits).map_err(|source| {
            EngineError::Simulation {
                index,
                line,
                source,
            }
        })?;
    let check = check(&ensemble, &bp.assertion.kind, opts.alpha).map_err(|source| {
        EngineError::Assertion {
            index,
            line,
            source,
        }
    })?;
    let registers = bp
        .registers
        .iter()
        .map(|r| (r.name.clone(), ensemble.histogram(&RegisterSlice::whole(r))))
        .collect();
    Ok(Verdict {
        index,
        assertion: bp.assertion.clone(),
        shots,
        seed,
        check,
        registers,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub verdicts: Vec<Verdict>,
    pub warnings: Vec<String>,
}

impl Evaluation {
    pub fn status(&self) -> Status {
        overall_status(self.verdicts.iter().map(|v| &v.check.status))
    }
}

/// Splits `program` and checks every breakpoint. Breakpoints run
/// concurrently under the parallel strategy; verdicts stay in source order.
pub fn evaluate(program: &Program, opts: &EvalOptions) -> Result<Evaluation, EngineError> {
    let split = split_at_breakpoints(program);
    let bps = &split.breakpoints;
    let verdicts =
        exec::try_map_indexed(opts.exec, bps.len(), |i| evaluate_breakpoint(&bps[i], opts))?;
    let mut warnings = split.warnings;
    if overall_status(verdicts.iter().map(|v| &v.check.status)) == Status::Fail {
        warnings.extend(suspect_inverses(program));
    }
    Ok(Evaluation { verdicts, warnings })
}

/// Uncompute stages whose constant is not the inverse of the matching
/// compute stage on the same registers.
fn suspect_inverses(program: &Program) -> Vec<String> {
    let mut computed: Vec<(usize, &RegisterSlice, &RegisterSlice, u64)> = Vec::new();
    let mut out = Vec::new();
    for s in &program.statements {
        let StatementKind::Macro {
            call:
                MacroCall::CModMul {
                    ctrl,
                    x,
                    b,
                    a,
                    modulus,
                    stage,
                    ..
                },
            ..
        } = &s.kind
        else {
            continue;
        };
        match stage {
            ModMulStage::Compute => computed.push((*ctrl, x, b, *a)),
            ModMulStage::Uncompute => {
                let prior = computed
                    .iter()
                    .rev()
                    .find(|(c, px, pb, _)| c == ctrl && *px == x && *pb == b);
                if let Some(&(_, _, _, pa)) = prior {
                    if (pa as u128 * *a as u128) % *modulus as u128 != 1 {
                        out.push(format!(
                            "line {}: uncompute constant {a} is not the inverse of {pa} mod {modulus}",
                            s.line
                        ));
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::parse;

    fn ensemble(n: usize, outcomes: Vec<u64>) -> MeasurementEnsemble {
        MeasurementEnsemble {
            num_qubits: n,
            seed: 0,
            outcomes,
        }
    }

    fn slice(name: &str, offset: usize, width: usize) -> RegisterSlice {
        RegisterSlice::whole(&Register {
            name: name.into(),
            offset,
            width,
        })
    }

    const QFT_ROUND_TRIP: &str = "\
reg q 4
prep q[0] 1
prep q[2] 1
assert classical q 5
qft q
assert superposition q
iqft q
assert classical q 5
";

    #[test]
    fn wrong_inverse_is_flagged_only_on_failure() {
        let src = "reg c 1\nreg x 5\nreg b 5\nreg f 1\nprep c[0] 1\nh c\nprep x[1] 1\n\
                   cmodmul c[0] x b f[0] 7 15\ncmodmul c[0] x b f[0] UNC 15 uncompute\n\
                   assert product c b\n";
        let good = evaluate(
            &parse(&src.replace("UNC", "13")).unwrap(),
            &EvalOptions::default(),
        )
        .unwrap();
        assert!(good.warnings.is_empty());
        let bad = evaluate(
            &parse(&src.replace("UNC", "12")).unwrap(),
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(bad.status(), Status::Fail);
        assert_eq!(
            bad.warnings,
            ["line 9: uncompute constant 12 is not the inverse of 7 mod 15"]
        );
    }

    #[test]
    fn split_truncates_before_each_assertion() {
        let p = parse(QFT_ROUND_TRIP).unwrap();
        let split = split_at_breakpoints(&p);
        let lens: Vec<_> = split.breakpoints.iter().map(|b| b.body.len()).collect();
        assert_eq!(lens, vec![0, 10, 20]);
        assert!(split.warnings.is_empty());
        for w in split.breakpoints.windows(2) {
            assert!(w[1].body.starts_with(&w[0].body));
        }
        assert_eq!(split.breakpoints[0].initial_index(), 5);
    }

    #[test]
    fn split_without_assertions_warns() {
        let p = parse("reg q 1\nh q[0]\n").unwrap();
        let split = split_at_breakpoints(&p);
        assert!(split.breakpoints.is_empty());
        assert_eq!(split.warnings.len(), 1);
    }

    #[test]
    fn leading_assertion_sees_initial_state() {
        let p = parse("reg q 3\nassert classical q 0\nh q[0]\n").unwrap();
        let bp = &split_at_breakpoints(&p).breakpoints[0];
        assert!(bp.body.is_empty());
        let e = run_ensemble(bp, 20, 1, EnsembleMode::Sampled, Execution::Sequential, 24).unwrap();
        assert!(e.outcomes.iter().all(|&o| o == 0));
    }

    #[test]
    fn per_shot_rerun_matches_sampling() {
        let p = parse("reg q 3\nh q[0]\nh q[1]\ncx q[1] q[2]\nassert superposition q\n").unwrap();
        let bp = &split_at_breakpoints(&p).breakpoints[0];
        let a = run_ensemble(bp, 64, 9, EnsembleMode::Sampled, Execution::Parallel, 24).unwrap();
        let b = run_ensemble(
            bp,
            64,
            9,
            EnsembleMode::PerShotRerun,
            Execution::Sequential,
            24,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn classical_exact_test() {
        let reg = slice("b", 0, 5);
        let ok = check_classical(&ensemble(5, vec![25; 32]), &reg, 25).unwrap();
        assert_eq!((ok.status, ok.p_value), (Status::Pass, Some(1.0)));
        let bad = check_classical(&ensemble(5, vec![25, 25, 24]), &reg, 25).unwrap();
        assert_eq!((bad.status, bad.p_value), (Status::Fail, Some(0.0)));
        assert!(check_classical(&ensemble(5, vec![1]), &reg, 40).is_err());
        assert!(check_classical(&ensemble(4, vec![1]), &reg, 1).is_err());
    }

    #[test]
    fn superposition_rejects_classical_register() {
        let reg = slice("q", 0, 4);
        let c = check_superposition(&ensemble(4, vec![5; 160]), &reg, 0.05).unwrap();
        assert_eq!(c.status, Status::Fail);
        assert_eq!(c.statistic, Some(160.0 * 15.0));
        let flat: Vec<u64> = (0..160).map(|i| i % 16).collect();
        let c = check_superposition(&ensemble(4, flat), &reg, 0.05).unwrap();
        assert_eq!((c.status, c.p_value), (Status::Pass, Some(1.0)));
        assert!(!c.low_power);
        let c = check_superposition(&ensemble(4, vec![1]), &reg, 0.05).unwrap();
        assert_eq!(c.status, Status::Indeterminate);
    }

    #[test]
    fn entangled_and_product_on_bell_table() {
        let (a, b) = (slice("a", 0, 1), slice("b", 1, 1));
        let outcomes: Vec<u64> = (0..16).map(|i| if i % 2 == 0 { 0 } else { 3 }).collect();
        let e = ensemble(2, outcomes);
        let ent = check_entangled(&e, &a, &b, 0.05).unwrap();
        assert_eq!(ent.status, Status::Pass);
        assert_eq!(ent.statistic, Some(16.0));
        let prod = check_product(&e, &a, &b, 0.05).unwrap();
        assert_eq!(prod.status, Status::Fail);
    }

    #[test]
    fn degenerate_tables() {
        let (a, b) = (slice("a", 0, 1), slice("b", 1, 3));
        let e = ensemble(4, vec![0, 1, 0, 1, 1, 0]);
        let prod = check_product(&e, &a, &b, 0.05).unwrap();
        assert_eq!(
            (prod.status, prod.p_value, prod.degenerate),
            (Status::PassDegenerate, Some(1.0), true)
        );
        let ent = check_entangled(&e, &a, &b, 0.05).unwrap();
        assert_eq!((ent.status, ent.degenerate), (Status::Fail, true));
        let overlap = slice("c", 0, 2);
        assert!(matches!(
            check_product(&e, &a, &overlap, 0.05),
            Err(AssertionError::Overlap { .. })
        ));
    }

    #[test]
    fn overall_status_precedence() {
        use Status::*;
        assert_eq!(overall_status(&[Pass, PassDegenerate]), Pass);
        assert_eq!(overall_status(&[Pass, Indeterminate]), Indeterminate);
        assert_eq!(overall_status(&[Indeterminate, Fail, Pass]), Fail);
        assert_eq!(overall_status(&[]), Pass);
    }

    #[test]
    fn qft_round_trip_verdicts() {
        let p = parse(QFT_ROUND_TRIP).unwrap();
        let opts = EvalOptions {
            shots: Some(160),
            ..EvalOptions::default()
        };
        let ev = evaluate(&p, &opts).unwrap();
        let statuses: Vec<_> = ev.verdicts.iter().map(|v| v.check.status).collect();
        assert_eq!(statuses, vec![Status::Pass; 3]);
        assert_eq!(ev.status(), Status::Pass);
    }

    #[test]
    fn resource_limit_names_breakpoint() {
        let p = parse("reg q 30\nassert classical q 0\n").unwrap();
        let err = evaluate(&p, &EvalOptions::default()).unwrap_err();
        assert!(err.is_resource());
        assert!(err.to_string().starts_with("breakpoint 0 (line 2)"));
    }
}

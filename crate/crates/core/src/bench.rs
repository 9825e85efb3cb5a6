//! Built-in benchmark programs and the bug mutations that target them.

use serde::Serialize;
use thiserror::Error;

use crate::assertions::{evaluate, EngineError, EvalOptions};
use crate::gates::{self, CrzVariant, Gate, Instruction, LadderUncompute, ModMulStage};
use crate::program::{parse, MacroCall, Program, SourceError, Statement, StatementKind};
use crate::report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BugSpec {
    pub id: &'static str,
    /// Bug category, 1 through 6.
    pub category: u8,
    pub description: &'static str,
    /// Index of the assertion expected to catch the bug.
    pub caught_by: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BenchmarkSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub bugs: &'static [BugSpec],
}

impl BenchmarkSpec {
    pub fn source(&self) -> String {
        match self.name {
            "bell" => BELL.to_string(),
            "qft_harness" => QFT_HARNESS.to_string(),
            "cadd_harness" => CADD_HARNESS.to_string(),
            "cmodmul_harness" => CMODMUL_HARNESS.to_string(),
            "shor15" => shor15_source(),
            "grover" => grover_source(GROVER_MARKED),
            _ => unreachable!("registry names are fixed"),
        }
    }

    pub fn program(&self) -> Program {
        parse(&self.source()).expect("built-in benchmarks parse")
    }

    pub fn bug(&self, id: &str) -> Option<&'static BugSpec> {
        self.bugs.iter().find(|b| b.id == id)
    }
}

const BELL: &str = "\
# Bell pair
reg q 2
h q[0]
cx q[0] q[1]
assert entangled q[0] q[1]
";

const QFT_HARNESS: &str = "\
# QFT round trip on the value 5
reg q 4
prep q[0] 1
prep q[2] 1
assert classical q 5
qft q
assert superposition q
iqft q
assert classical q 5
";

const CADD_HARNESS: &str = "\
# Fourier-space constant adder: 12 + 13
reg ctrl 2
reg b 5
prep ctrl[0] 0
prep ctrl[1] 0
prep b[2] 1
prep b[3] 1
assert classical b 12
qft b
cadd b 13
iqft b
assert classical b 25
";

const CMODMUL_HARNESS: &str = "\
# controlled modular multiplier, a = 7, N = 15, and its mirror with 7^-1 = 13
reg ctrl 1
reg x 5
reg b 5
reg anc 1
prep ctrl[0] 1
h ctrl[0]
prep x[1] 1
prep x[2] 1
assert classical x 6
assert classical b 0
cmodmul ctrl x b anc 7 15
assert entangled ctrl b
cmodmul ctrl x b anc 13 15 uncompute
assert product ctrl b
";

/// Order finding for 7 mod 15 with a 3-qubit phase register.
pub fn shor15_source() -> String {
    let mut s = String::from(
        "\
# order finding for a = 7, N = 15
reg up 3
reg x 5
reg anc 5
reg flag 1
prep x[0] 1
assert classical x 1
h up[0]
h up[1]
h up[2]
assert superposition up
",
    );
    let consts = gates::exponentiation_constants(7, 15, 3).expect("7 is a unit mod 15");
    for (k, (a, a_inv)) in consts.into_iter().enumerate() {
        let ctrl = 2 - k;
        s.push_str(&format!("cmodmul up[{ctrl}] x anc flag[0] {a} 15\n"));
        s.push_str(&format!(
            "cmodmul up[{ctrl}] x anc flag[0] {a_inv} 15 uncompute\n"
        ));
    }
    s.push_str("iqft up\nassert classical anc 0\nassert classical flag 0\n");
    s
}

pub const GROVER_MARKED: u64 = 5;

/// Two Grover iterations over 3 qubits with one marked value.
pub fn grover_source(marked: u64) -> String {
    format!(
        "\
# Grover search, marked value {marked}
reg q 3
reg anc 2
h q[0]
h q[1]
h q[2]
assert superposition q
mark q anc {marked}
diffuse q anc
assert classical anc 0
assert product q anc
mark q anc {marked}
diffuse q anc
assert classical anc 0
"
    )
}

pub const BENCHMARKS: &[BenchmarkSpec] = &[
    BenchmarkSpec {
        name: "bell",
        description: "Bell pair; entanglement between the two qubits",
        bugs: &[],
    },
    BenchmarkSpec {
        name: "qft_harness",
        description: "QFT then inverse QFT on |5>",
        bugs: &[BugSpec {
            id: "bad-init",
            category: 1,
            description: "first `prep ... 1` prepares 0 instead",
            caught_by: 0,
        }],
    },
    BenchmarkSpec {
        name: "cadd_harness",
        description: "Fourier-space adder computing 12 + 13",
        bugs: &[
            BugSpec {
                id: "flipped-angles",
                category: 2,
                description: "controlled rotations decomposed with the target angle signs swapped",
                caught_by: 1,
            },
            BugSpec {
                id: "loop-endian",
                category: 3,
                description: "adder loop walks the target register in reversed bit order",
                caught_by: 1,
            },
        ],
    },
    BenchmarkSpec {
        name: "cmodmul_harness",
        description: "controlled modular multiplier and its mirror, N = 15",
        bugs: &[
            BugSpec {
                id: "ctrl-routing",
                category: 4,
                description: "doubly controlled rotations use the second control twice",
                caught_by: 2,
            },
            BugSpec {
                id: "mirror-sign",
                category: 5,
                description:
                    "mirrored multiplier adds its controlled constants instead of subtracting them",
                caught_by: 3,
            },
            BugSpec {
                id: "wrong-inverse",
                category: 6,
                description: "mirror uses 12 instead of the inverse 13",
                caught_by: 3,
            },
        ],
    },
    BenchmarkSpec {
        name: "shor15",
        description: "order finding for 7 mod 15 (14 qubits)",
        bugs: &[
            BugSpec {
                id: "bad-init",
                category: 1,
                description: "work register prepared to 0 instead of 1",
                caught_by: 0,
            },
            BugSpec {
                id: "wrong-inverse",
                category: 6,
                description: "first iteration uncomputes with 12 instead of 13",
                caught_by: 2,
            },
        ],
    },
    BenchmarkSpec {
        name: "grover",
        description: "two Grover iterations over 3 qubits",
        bugs: &[BugSpec {
            id: "mirror-order",
            category: 5,
            description: "diffusion undoes its Toffoli ladder in forward order",
            caught_by: 1,
        }],
    },
];

pub const BUG_IDS: &[&str] = &[
    "bad-init",
    "flipped-angles",
    "loop-endian",
    "ctrl-routing",
    "mirror-sign",
    "mirror-order",
    "wrong-inverse",
];

pub fn benchmark(name: &str) -> Option<&'static BenchmarkSpec> {
    BENCHMARKS.iter().find(|b| b.name == name)
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown benchmark `{name}` (available: {})", names().join(", "))]
    UnknownBenchmark { name: String },
    #[error("unknown bug `{id}` (available: {})", BUG_IDS.join(", "))]
    UnknownBug { id: String },
    #[error("bug `{id}` does not apply to `{target}` (available: {})", if available.is_empty() { "none".to_string() } else { available.join(", ") })]
    BugNotRegistered {
        id: String,
        target: String,
        available: Vec<&'static str>,
    },
    #[error("bug `{id}` does not apply: {reason}")]
    Inapplicable { id: String, reason: &'static str },
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    Source(Vec<SourceError>),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn names() -> Vec<&'static str> {
    BENCHMARKS.iter().map(|b| b.name).collect()
}

fn inapplicable(id: &str, reason: &'static str) -> BenchError {
    BenchError::Inapplicable {
        id: id.to_string(),
        reason,
    }
}

fn flip_rotations(body: &mut Vec<Instruction>) -> bool {
    let mut changed = false;
    let mut out = Vec::with_capacity(body.len());
    for ins in body.drain(..) {
        match (ins.gate, ins.controls.as_slice()) {
            (Gate::Rz(a), [c]) => {
                out.extend(
                    gates::crz_decomposed(*c, ins.target, a, CrzVariant::FlippedBuggy).instructions,
                );
                changed = true;
            }
            _ => out.push(ins),
        }
    }
    *body = out;
    changed
}

/// Applies one documented mutation to a parsed program.
///
/// Mutations edit macro expansions in place, so the rest of the program,
/// including its assertions, is untouched.
pub fn inject_bug(program: &Program, id: &str) -> Result<Program, BenchError> {
    let mut p = program.clone();
    match id {
        "bad-init" => {
            let prep = p
                .statements
                .iter_mut()
                .find_map(|s| match &mut s.kind {
                    StatementKind::Prep(prep) if prep.value => Some(prep),
                    _ => None,
                })
                .ok_or_else(|| inapplicable(id, "no qubit is prepared to 1"))?;
            prep.value = false;
        }
        "flipped-angles" => {
            let mut changed = false;
            let mut statements = Vec::with_capacity(p.statements.len());
            for mut s in p.statements {
                match &mut s.kind {
                    StatementKind::Macro { body, .. } => {
                        changed |= flip_rotations(body);
                        statements.push(s);
                    }
                    StatementKind::Gate(ins) => {
                        let mut v = vec![ins.clone()];
                        changed |= flip_rotations(&mut v);
                        statements.extend(v.into_iter().map(|i| Statement {
                            line: s.line,
                            kind: StatementKind::Gate(i),
                        }));
                    }
                    _ => statements.push(s),
                }
            }
            p.statements = statements;
            if !changed {
                return Err(inapplicable(id, "no singly controlled rotation"));
            }
        }
        "loop-endian" => {
            let mut changed = false;
            for (call, body) in p.macros_mut() {
                if let MacroCall::Cadd {
                    b,
                    a,
                    controls,
                    inverse,
                } = call
                {
                    let reversed: Vec<usize> = b.qubits().into_iter().rev().collect();
                    *body = gates::cadd(&reversed, *a, controls, *inverse)
                        .expect("operands were validated when parsed")
                        .instructions;
                    changed = true;
                }
            }
            if !changed {
                return Err(inapplicable(id, "no cadd call"));
            }
        }
        "ctrl-routing" => {
            let mut changed = false;
            for (call, body) in p.macros_mut() {
                if let MacroCall::CModMul { ctrl, .. } = call {
                    for ins in body.iter_mut() {
                        if matches!(ins.gate, Gate::Rz(_))
                            && ins.controls.len() == 2
                            && ins.controls[0] == *ctrl
                        {
                            ins.controls.remove(0);
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                return Err(inapplicable(id, "no cmodmul call"));
            }
        }
        "mirror-sign" => {
            let mut changed = false;
            for (call, body) in p.macros_mut() {
                if let MacroCall::CModMul {
                    stage: ModMulStage::Uncompute,
                    ..
                } = call
                {
                    for ins in body.iter_mut() {
                        if let (Gate::Rz(a), 2) = (ins.gate, ins.controls.len()) {
                            ins.gate = Gate::Rz(-a);
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                return Err(inapplicable(id, "no uncomputing cmodmul call"));
            }
        }
        "mirror-order" => {
            let mut changed = false;
            for (call, body) in p.macros_mut() {
                if let MacroCall::Diffuse { q, anc, .. } = call {
                    *body = gates::grover_diffusion_with(
                        &q.qubits(),
                        &anc.qubits(),
                        LadderUncompute::Forward,
                    )
                    .expect("operands were validated when parsed")
                    .instructions;
                    changed = true;
                }
            }
            if !changed {
                return Err(inapplicable(id, "no diffuse call"));
            }
        }
        "wrong-inverse" => {
            let stmt = p
                .statements
                .iter_mut()
                .find(|s| {
                    matches!(
                        &s.kind,
                        StatementKind::Macro {
                            call: MacroCall::CModMul {
                                stage: ModMulStage::Uncompute,
                                ..
                            },
                            ..
                        }
                    )
                })
                .ok_or_else(|| inapplicable(id, "no uncomputing cmodmul call"))?;
            if let StatementKind::Macro { call, body } = &mut stmt.kind {
                if let MacroCall::CModMul { a, modulus, .. } = call {
                    *a = (*a + *modulus - 1) % *modulus;
                }
                *body = call
                    .expand()
                    .expect("the uncompute stage accepts any constant")
                    .instructions;
            }
        }
        _ => return Err(BenchError::UnknownBug { id: id.to_string() }),
    }
    Ok(p)
}

/// Runs a built-in benchmark, optionally with a registered bug.
pub fn run_benchmark(
    name: &str,
    bug: Option<&str>,
    opts: &EvalOptions,
) -> Result<Report, BenchError> {
    let spec = benchmark(name).ok_or_else(|| BenchError::UnknownBenchmark {
        name: name.to_string(),
    })?;
    let mut program = spec.program();
    if let Some(id) = bug {
        if !BUG_IDS.contains(&id) {
            return Err(BenchError::UnknownBug { id: id.to_string() });
        }
        if spec.bug(id).is_none() {
            return Err(BenchError::BugNotRegistered {
                id: id.to_string(),
                target: name.to_string(),
                available: spec.bugs.iter().map(|b| b.id).collect(),
            });
        }
        program = inject_bug(&program, id)?;
    }
    let eval = evaluate(&program, opts)?;
    Ok(Report::new(name, bug, opts, eval))
}

/// Parses and runs a program text, optionally mutated.
pub fn run_source(
    label: &str,
    text: &str,
    bug: Option<&str>,
    opts: &EvalOptions,
) -> Result<Report, BenchError> {
    let mut program = parse(text).map_err(BenchError::Source)?;
    if let Some(id) = bug {
        program = inject_bug(&program, id)?;
    }
    let eval = evaluate(&program, opts)?;
    Ok(Report::new(label, bug, opts, eval))
}

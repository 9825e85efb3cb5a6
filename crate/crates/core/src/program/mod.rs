//! Line-oriented circuit language: registers, state preparation, gates,
//! library macros and assertion directives.
//!
//! ```text
//! reg q 2
//! h q[0]
//! cx q[0] q[1]
//! assert entangled q[0] q[1]
//! ```
//!
//! Macros (`qft`, `cadd`, `cmodmul`, ...) are expanded while parsing; the
//! expansion is kept next to the call so bug injection can rewrite it.

mod emit;
mod parse;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use emit::{emit_truncated, Dialect};
pub use parse::parse;

use crate::assertions::{Assertion, RegisterSlice};
use crate::gates::{
    self, CircuitFragment, GateError, Instruction, LadderUncompute, ModMulLayout, ModMulStage,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub name: String,
    /// Global index of qubit 0 of the register.
    pub offset: usize,
    pub width: usize,
}

impl Register {
    pub fn qubits(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.width
    }

    pub fn contains(&self, qubit: usize) -> bool {
        self.qubits().contains(&qubit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prep {
    pub qubit: usize,
    pub value: bool,
}

/// A library subroutine invocation with resolved operands.
#[derive(Debug, Clone, PartialEq)]
pub enum MacroCall {
    Qft {
        reg: RegisterSlice,
        inverse: bool,
    },
    Cadd {
        b: RegisterSlice,
        a: u64,
        controls: Vec<usize>,
        inverse: bool,
    },
    CModMul {
        ctrl: usize,
        x: RegisterSlice,
        b: RegisterSlice,
        ancilla: usize,
        a: u64,
        modulus: u64,
        stage: ModMulStage,
    },
    Diffuse {
        q: RegisterSlice,
        anc: RegisterSlice,
        uncompute: LadderUncompute,
    },
    Mark {
        q: RegisterSlice,
        anc: RegisterSlice,
        marked: u64,
    },
}

impl MacroCall {
    pub fn name(&self) -> &'static str {
        match self {
            MacroCall::Qft { inverse: false, .. } => "qft",
            MacroCall::Qft { inverse: true, .. } => "iqft",
            MacroCall::Cadd { inverse: false, .. } => "cadd",
            MacroCall::Cadd { inverse: true, .. } => "icadd",
            MacroCall::CModMul { .. } => "cmodmul",
            MacroCall::Diffuse { .. } => "diffuse",
            MacroCall::Mark { .. } => "mark",
        }
    }

    pub fn expand(&self) -> Result<CircuitFragment, GateError> {
        match self {
            MacroCall::Qft { reg, inverse } => Ok(gates::qft(&reg.qubits(), *inverse)),
            MacroCall::Cadd {
                b,
                a,
                controls,
                inverse,
            } => gates::cadd(&b.qubits(), *a, controls, *inverse),
            MacroCall::CModMul {
                ctrl,
                x,
                b,
                ancilla,
                a,
                modulus,
                stage,
            } => {
                let (xq, bq) = (x.qubits(), b.qubits());
                let layout = ModMulLayout {
                    ctrl: *ctrl,
                    x: &xq,
                    b: &bq,
                    ancilla: *ancilla,
                    modulus: *modulus,
                };
                gates::cmodmul(&layout, *a, *stage)
            }
            MacroCall::Diffuse { q, anc, uncompute } => {
                gates::grover_diffusion_with(&q.qubits(), &anc.qubits(), *uncompute)
            }
            MacroCall::Mark { q, anc, marked } => {
                gates::grover_oracle(&q.qubits(), &anc.qubits(), *marked)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StatementKind {
    Prep(Prep),
    Gate(Instruction),
    Macro {
        call: MacroCall,
        body: Vec<Instruction>,
    },
    Assert(Assertion),
    MeasureAll,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    /// 1-based source line.
    pub line: usize,
    pub kind: StatementKind,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Program {
    pub registers: Vec<Register>,
    pub statements: Vec<Statement>,
}

impl Program {
    pub fn num_qubits(&self) -> usize {
        self.registers.iter().map(|r| r.width).sum()
    }

    pub fn register(&self, name: &str) -> Option<&Register> {
        self.registers.iter().find(|r| r.name == name)
    }

    /// Register and index within it for a global qubit.
    pub fn locate(&self, qubit: usize) -> Option<(&Register, usize)> {
        self.registers
            .iter()
            .find(|r| r.contains(qubit))
            .map(|r| (r, qubit - r.offset))
    }

    pub fn qubit_name(&self, qubit: usize) -> String {
        match self.locate(qubit) {
            Some((r, i)) => format!("{}[{i}]", r.name),
            None => format!("?[{qubit}]"),
        }
    }

    pub fn assertions(&self) -> impl Iterator<Item = &Assertion> {
        self.statements.iter().filter_map(|s| match &s.kind {
            StatementKind::Assert(a) => Some(a),
            _ => None,
        })
    }

    /// Every elementary instruction in program order, macros flattened.
    pub fn instructions(&self) -> Vec<Instruction> {
        let mut out = Vec::new();
        for s in &self.statements {
            match &s.kind {
                StatementKind::Gate(i) => out.push(i.clone()),
                StatementKind::Macro { body, .. } => out.extend(body.iter().cloned()),
                _ => {}
            }
        }
        out
    }

    pub fn preps(&self) -> Vec<Prep> {
        self.statements
            .iter()
            .filter_map(|s| match s.kind {
                StatementKind::Prep(p) => Some(p),
                _ => None,
            })
            .collect()
    }

    /// Macro calls with mutable access to their expansions.
    pub fn macros_mut(&mut self) -> impl Iterator<Item = (&MacroCall, &mut Vec<Instruction>)> {
        self.statements
            .iter_mut()
            .filter_map(|s| match &mut s.kind {
                StatementKind::Macro { call, body } => Some((&*call, body)),
                _ => None,
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Syntax,
    Resolution,
    Arity,
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorCategory::Syntax => "syntax error",
            ErrorCategory::Resolution => "resolution error",
            ErrorCategory::Arity => "arity error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub category: ErrorCategory,
}

impl fmt::Display for SourceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: {}: {}",
            self.line, self.column, self.category, self.message
        )
    }
}

impl std::error::Error for SourceError {}

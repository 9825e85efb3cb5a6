use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::Register;
use crate::assertions::BreakpointProgram;
use crate::gates::{Gate, Instruction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dialect {
    /// This crate's own format; parses back to the same breakpoint.
    Native,
    /// Gate-per-line assembly for external simulators. Export only.
    QasmSubset,
}

impl Dialect {
    pub fn extension(self) -> &'static str {
        match self {
            Dialect::Native => "qa",
            Dialect::QasmSubset => "qasm",
        }
    }
}

/// Renders a breakpoint program: its gate prefix followed by a full
/// measurement.
pub fn emit_truncated(bp: &BreakpointProgram, dialect: Dialect) -> String {
    match dialect {
        Dialect::Native => native(bp),
        Dialect::QasmSubset => qasm(bp),
    }
}

fn qubit_name(registers: &[Register], q: usize) -> String {
    registers.iter().find(|r| r.contains(q)).map_or_else(
        || format!("?[{q}]"),
        |r| format!("{}[{}]", r.name, q - r.offset),
    )
}

fn native(bp: &BreakpointProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# breakpoint {} (source line {})",
        bp.index + 1,
        bp.assertion.line
    );
    for r in &bp.registers {
        let _ = writeln!(out, "reg {} {}", r.name, r.width);
    }
    for p in &bp.preps {
        let _ = writeln!(
            out,
            "prep {} {}",
            qubit_name(&bp.registers, p.qubit),
            u8::from(p.value)
        );
    }
    for ins in &bp.body {
        let mnemonic = ins
            .mnemonic()
            .expect("library instructions all have a textual form");
        out.push_str(mnemonic);
        for q in ins.qubits() {
            out.push(' ');
            out.push_str(&qubit_name(&bp.registers, q));
        }
        if let Gate::Rz(a) = ins.gate {
            let _ = write!(out, " {a}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "assert {}", bp.assertion.kind);
    out.push_str("measure_all\n");
    out
}

fn qasm_gate(out: &mut String, ins: &Instruction) {
    let q = |i: usize| format!("q[{i}]");
    let t = q(ins.target);
    let c: Vec<String> = ins.controls.iter().map(|&i| q(i)).collect();
    let line = match (ins.gate, c.as_slice()) {
        (Gate::X, []) => format!("x {t}"),
        (Gate::X, [c0]) => format!("cnot {c0},{t}"),
        (Gate::X, [c0, c1]) => format!("toffoli {c0},{c1},{t}"),
        (Gate::H, []) => format!("h {t}"),
        (Gate::Z, []) => format!("z {t}"),
        (Gate::Z, [c0]) => format!("cz {c0},{t}"),
        (Gate::Z, [c0, c1]) => format!("h {t}\ntoffoli {c0},{c1},{t}\nh {t}"),
        // rz and the phase gate differ only by a global phase here
        (Gate::Rz(a), []) => format!("rz {t}, {:?}", a.radians()),
        (Gate::Rz(a), [c0]) => format!("cr {c0},{t}, {:?}", a.radians()),
        (Gate::Rz(a), [c0, c1]) => {
            let h = a.radians() / 2.0;
            format!(
                "cr {c1},{t}, {h:?}\ncnot {c0},{c1}\ncr {c1},{t}, {:?}\ncnot {c0},{c1}\ncr {c0},{t}, {h:?}",
                -h
            )
        }
        (g, cs) => panic!("no assembly form for {g:?} with {} controls", cs.len()),
    };
    out.push_str(&line);
    out.push('\n');
}

fn qasm(bp: &BreakpointProgram) -> String {
    let n: usize = bp.registers.iter().map(|r| r.width).sum();
    let mut out = String::from("version 1\n");
    let _ = writeln!(
        out,
        "# breakpoint {}: assert {}",
        bp.index + 1,
        bp.assertion.kind
    );
    for r in &bp.registers {
        let _ = writeln!(
            out,
            "# {} = q[{}..{}]",
            r.name,
            r.offset,
            r.offset + r.width
        );
    }
    let _ = writeln!(out, "qubits {n}");
    for i in 0..n {
        let _ = writeln!(out, "prep_z q[{i}]");
    }
    let init = bp.initial_index();
    for q in (0..n).filter(|q| (init >> q) & 1 == 1) {
        let _ = writeln!(out, "x q[{q}]");
    }
    for ins in &bp.body {
        qasm_gate(&mut out, ins);
    }
    out.push_str("measure_all\n");
    out
}

use std::collections::HashSet;

use super::{
    ErrorCategory, MacroCall, Prep, Program, Register, SourceError, Statement, StatementKind,
};
use crate::assertions::{Assertion, AssertionKind, RegisterSlice};
use crate::gates::{Angle, Gate, GateError, Instruction, LadderUncompute, ModMulStage};

/// Registers are addressed with `u64` bit masks.
pub const MAX_PROGRAM_QUBITS: usize = 64;

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let code = line.split('#').next().unwrap_or("");
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in code.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s, i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s, code.len()));
    }
    out.into_iter()
        .map(|(s, e)| Token {
            text: &code[s..e],
            column: code[..s].chars().count() + 1,
        })
        .collect()
}

type Res<T> = Result<T, SourceError>;

struct Parser {
    program: Program,
    /// Qubits some gate has already acted on; preparing them is an error.
    touched: HashSet<usize>,
    measured: bool,
    line: usize,
}

/// Parses and resolves a program, reporting every bad line.
pub fn parse(text: &str) -> Result<Program, Vec<SourceError>> {
    let mut p = Parser {
        program: Program::default(),
        touched: HashSet::new(),
        measured: false,
        line: 0,
    };
    let mut errors = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        p.line = i + 1;
        let tokens = tokenize(raw);
        if tokens.is_empty() {
            continue;
        }
        if let Err(e) = p.statement(&tokens) {
            errors.push(e);
        }
    }
    if errors.is_empty() {
        Ok(p.program)
    } else {
        Err(errors)
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_angle(s: &str) -> Option<Angle> {
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    if body == "pi" {
        return Some(Angle::PiOverPow2 {
            negative,
            exponent: 0,
        });
    }
    if let Some(k) = body.strip_prefix("pi/2^") {
        let exponent: u32 = k.parse().ok().filter(|&k| k < 1024)?;
        return Some(Angle::PiOverPow2 { negative, exponent });
    }
    let v: f64 = s.parse().ok()?;
    v.is_finite().then_some(Angle::Radians(v))
}

impl Parser {
    fn err(
        &self,
        category: ErrorCategory,
        column: usize,
        message: impl Into<String>,
    ) -> SourceError {
        SourceError {
            line: self.line,
            column,
            message: message.into(),
            category,
        }
    }

    fn arity(&self, tokens: &[Token<'_>], min: usize, max: usize, usage: &str) -> Res<()> {
        let n = tokens.len() - 1;
        if n < min || n > max {
            let column = tokens.get(max + 1).unwrap_or(&tokens[0]).column;
            return Err(self.err(
                ErrorCategory::Arity,
                column,
                format!("`{}` takes {usage}, got {n} operand(s)", tokens[0].text),
            ));
        }
        Ok(())
    }

    fn register(&self, tok: Token<'_>, name: &str) -> Res<&Register> {
        if !is_identifier(name) {
            return Err(self.err(
                ErrorCategory::Syntax,
                tok.column,
                format!("malformed operand `{}`", tok.text),
            ));
        }
        self.program.register(name).ok_or_else(|| {
            self.err(
                ErrorCategory::Resolution,
                tok.column,
                format!("undeclared register `{name}`"),
            )
        })
    }

    fn index(&self, tok: Token<'_>, s: &str) -> Res<usize> {
        s.parse().map_err(|_| {
            self.err(
                ErrorCategory::Syntax,
                tok.column,
                format!("bad qubit index `{s}` in `{}`", tok.text),
            )
        })
    }

    /// `name`, `name[i]` or `name[i:j]` (`j` exclusive).
    fn slice(&self, tok: Token<'_>) -> Res<RegisterSlice> {
        let text = tok.text;
        let Some(open) = text.find('[') else {
            let r = self.register(tok, text)?;
            return Ok(RegisterSlice::whole(r));
        };
        let inner = text[open + 1..].strip_suffix(']').ok_or_else(|| {
            self.err(
                ErrorCategory::Syntax,
                tok.column,
                format!("missing `]` in `{text}`"),
            )
        })?;
        let r = self.register(tok, &text[..open])?;
        let (start, end) = match inner.split_once(':') {
            Some((a, b)) => (self.index(tok, a)?, self.index(tok, b)?),
            None => {
                let i = self.index(tok, inner)?;
                (i, i + 1)
            }
        };
        if start >= end || end > r.width {
            return Err(self.err(
                ErrorCategory::Resolution,
                tok.column,
                format!(
                    "`{text}` is out of range for register `{}` of width {}",
                    r.name, r.width
                ),
            ));
        }
        Ok(RegisterSlice::new(r, start, end - start))
    }

    fn qubit(&self, tok: Token<'_>) -> Res<usize> {
        let s = self.slice(tok)?;
        if s.width != 1 {
            return Err(self.err(
                ErrorCategory::Resolution,
                tok.column,
                format!(
                    "`{}` names {} qubits where one is expected",
                    tok.text, s.width
                ),
            ));
        }
        Ok(s.offset)
    }

    fn integer(&self, tok: Token<'_>) -> Res<u64> {
        tok.text.parse().map_err(|_| {
            self.err(
                ErrorCategory::Syntax,
                tok.column,
                format!("expected a non-negative integer, got `{}`", tok.text),
            )
        })
    }

    fn angle(&self, tok: Token<'_>) -> Res<Angle> {
        parse_angle(tok.text).ok_or_else(|| {
            self.err(
                ErrorCategory::Syntax,
                tok.column,
                format!("bad angle `{}` (use pi/2^k or a decimal)", tok.text),
            )
        })
    }

    /// Rejects operand lists that mention one qubit twice.
    fn distinct(&self, tok: Token<'_>, qubits: impl IntoIterator<Item = usize>) -> Res<()> {
        let mut seen = HashSet::new();
        for q in qubits {
            if !seen.insert(q) {
                return Err(self.err(
                    ErrorCategory::Resolution,
                    tok.column,
                    format!("qubit {} is used twice", self.program.qubit_name(q)),
                ));
            }
        }
        Ok(())
    }

    fn gate_error(&self, tok: Token<'_>, e: GateError) -> SourceError {
        let category = match e {
            GateError::TooManyControls(_) => ErrorCategory::Arity,
            _ => ErrorCategory::Resolution,
        };
        self.err(category, tok.column, e.to_string())
    }

    fn push(&mut self, kind: StatementKind) {
        match &kind {
            StatementKind::Gate(i) => self.touched.extend(i.qubits()),
            StatementKind::Macro { body, .. } => {
                self.touched.extend(body.iter().flat_map(|i| i.qubits()))
            }
            _ => {}
        }
        self.program.statements.push(Statement {
            line: self.line,
            kind,
        });
    }

    fn statement(&mut self, t: &[Token<'_>]) -> Res<()> {
        let head = t[0];
        if self.measured {
            return Err(self.err(
                ErrorCategory::Syntax,
                head.column,
                "nothing may follow `measure_all`",
            ));
        }
        match head.text {
            "reg" => self.declare(t),
            "prep" => {
                self.arity(t, 2, 2, "a qubit and 0 or 1")?;
                let q = self.qubit(t[1])?;
                let value = match t[2].text {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(self.err(
                            ErrorCategory::Syntax,
                            t[2].column,
                            format!("prep value must be 0 or 1, got `{other}`"),
                        ))
                    }
                };
                if self.touched.contains(&q) {
                    return Err(self.err(
                        ErrorCategory::Resolution,
                        t[1].column,
                        format!(
                            "{} is prepared after a gate acted on it",
                            self.program.qubit_name(q)
                        ),
                    ));
                }
                self.push(StatementKind::Prep(Prep { qubit: q, value }));
                Ok(())
            }
            "x" | "h" | "z" | "rz" | "cx" | "cz" | "crz" | "ccx" | "ccrz" => self.gate(t),
            "qft" | "iqft" => {
                self.arity(t, 1, 1, "one register")?;
                let reg = self.slice(t[1])?;
                self.macro_call(
                    head,
                    MacroCall::Qft {
                        reg,
                        inverse: head.text == "iqft",
                    },
                )
            }
            "cadd" | "icadd" => {
                self.arity(t, 2, 4, "a register, a constant and up to 2 controls")?;
                let b = self.slice(t[1])?;
                let a = self.integer(t[2])?;
                let controls = t[3..]
                    .iter()
                    .map(|&c| self.qubit(c))
                    .collect::<Res<Vec<_>>>()?;
                self.distinct(head, b.qubits().into_iter().chain(controls.iter().copied()))?;
                self.macro_call(
                    head,
                    MacroCall::Cadd {
                        b,
                        a,
                        controls,
                        inverse: head.text == "icadd",
                    },
                )
            }
            "cmodmul" => {
                self.arity(t, 6, 7, "ctrl x b ancilla a N [uncompute]")?;
                let ctrl = self.qubit(t[1])?;
                let x = self.slice(t[2])?;
                let b = self.slice(t[3])?;
                let ancilla = self.qubit(t[4])?;
                let a = self.integer(t[5])?;
                let modulus = self.integer(t[6])?;
                let stage = match t.get(7).map(|k| k.text) {
                    None => ModMulStage::Compute,
                    Some("uncompute") => ModMulStage::Uncompute,
                    Some(other) => {
                        return Err(self.err(
                            ErrorCategory::Syntax,
                            t[7].column,
                            format!("expected `uncompute`, got `{other}`"),
                        ))
                    }
                };
                self.macro_call(
                    head,
                    MacroCall::CModMul {
                        ctrl,
                        x,
                        b,
                        ancilla,
                        a,
                        modulus,
                        stage,
                    },
                )
            }
            "diffuse" | "mark" => {
                let marked = if head.text == "mark" {
                    self.arity(t, 3, 3, "a register, an ancilla register and a value")?;
                    Some(self.integer(t[3])?)
                } else {
                    self.arity(t, 2, 2, "a register and an ancilla register")?;
                    None
                };
                let q = self.slice(t[1])?;
                let anc = self.slice(t[2])?;
                self.distinct(head, q.qubits().into_iter().chain(anc.qubits()))?;
                let call = match marked {
                    Some(marked) => MacroCall::Mark { q, anc, marked },
                    None => MacroCall::Diffuse {
                        q,
                        anc,
                        uncompute: LadderUncompute::Mirrored,
                    },
                };
                self.macro_call(head, call)
            }
            "assert" => self.assertion(t),
            "measure_all" => {
                self.arity(t, 0, 0, "no operands")?;
                self.measured = true;
                self.push(StatementKind::MeasureAll);
                Ok(())
            }
            other => Err(self.err(
                ErrorCategory::Syntax,
                head.column,
                format!("unknown statement `{other}`"),
            )),
        }
    }

    fn declare(&mut self, t: &[Token<'_>]) -> Res<()> {
        self.arity(t, 2, 2, "a name and a width")?;
        let name = t[1].text;
        if !is_identifier(name) {
            return Err(self.err(
                ErrorCategory::Syntax,
                t[1].column,
                format!("`{name}` is not a valid register name"),
            ));
        }
        if self.program.register(name).is_some() {
            return Err(self.err(
                ErrorCategory::Resolution,
                t[1].column,
                format!("register `{name}` is already declared"),
            ));
        }
        let width = self.integer(t[2])? as usize;
        if width == 0 {
            return Err(self.err(
                ErrorCategory::Resolution,
                t[2].column,
                "register width must be positive",
            ));
        }
        let offset = self.program.num_qubits();
        if offset + width > MAX_PROGRAM_QUBITS {
            return Err(self.err(
                ErrorCategory::Resolution,
                t[2].column,
                format!("programs are limited to {MAX_PROGRAM_QUBITS} qubits"),
            ));
        }
        self.program.registers.push(Register {
            name: name.to_string(),
            offset,
            width,
        });
        Ok(())
    }

    fn gate(&mut self, t: &[Token<'_>]) -> Res<()> {
        let name = t[0].text;
        let rotation = name.ends_with("rz");
        let controls = name.len() - if rotation { 2 } else { 1 };
        let qubits = controls + 1;
        let (n, usage) = if rotation {
            (qubits + 1, format!("{qubits} qubit(s) and an angle"))
        } else {
            (qubits, format!("{qubits} qubit(s)"))
        };
        self.arity(t, n, n, &usage)?;
        let ops = t[1..=qubits]
            .iter()
            .map(|&tok| self.qubit(tok))
            .collect::<Res<Vec<_>>>()?;
        self.distinct(t[1], ops.iter().copied())?;
        let gate = match name.trim_start_matches('c') {
            "x" => Gate::X,
            "h" => Gate::H,
            "z" => Gate::Z,
            _ => Gate::Rz(self.angle(t[n])?),
        };
        let (target, ctrl) = ops.split_last().expect("at least one operand");
        self.push(StatementKind::Gate(Instruction::new(gate, *target, ctrl)));
        Ok(())
    }

    fn macro_call(&mut self, head: Token<'_>, call: MacroCall) -> Res<()> {
        let body = call.expand().map_err(|e| self.gate_error(head, e))?;
        self.push(StatementKind::Macro {
            call,
            body: body.instructions,
        });
        Ok(())
    }

    fn assertion(&mut self, t: &[Token<'_>]) -> Res<()> {
        if t.len() < 2 {
            return Err(self.err(ErrorCategory::Arity, t[0].column, "`assert` needs a kind"));
        }
        let kind = match t[1].text {
            "classical" => {
                self.arity(t, 3, 3, "`classical`, a register and a value")?;
                let reg = self.slice(t[2])?;
                let expected = self.integer(t[3])?;
                if reg.width < 64 && expected >> reg.width != 0 {
                    return Err(self.err(
                        ErrorCategory::Resolution,
                        t[3].column,
                        format!("{expected} does not fit in {} qubit(s)", reg.width),
                    ));
                }
                AssertionKind::Classical { reg, expected }
            }
            "superposition" => {
                self.arity(t, 2, 2, "`superposition` and a register")?;
                AssertionKind::Superposition {
                    reg: self.slice(t[2])?,
                }
            }
            k @ ("entangled" | "product") => {
                self.arity(t, 3, 3, "two registers")?;
                let a = self.slice(t[2])?;
                let b = self.slice(t[3])?;
                self.distinct(t[3], a.qubits().into_iter().chain(b.qubits()))?;
                if k == "entangled" {
                    AssertionKind::Entangled { a, b }
                } else {
                    AssertionKind::Product { a, b }
                }
            }
            other => {
                return Err(self.err(
                    ErrorCategory::Syntax,
                    t[1].column,
                    format!(
                        "unknown assertion `{other}` (classical, superposition, entangled, product)"
                    ),
                ))
            }
        };
        let line = self.line;
        self.push(StatementKind::Assert(Assertion { kind, line }));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BELL: &str = "reg q 2\nh q[0]\ncx q[0] q[1]\nassert entangled q[0] q[1]\n";

    #[test]
    fn bell_program() {
        let p = parse(BELL).unwrap();
        assert_eq!(p.num_qubits(), 2);
        assert_eq!(p.assertions().count(), 1);
        assert_eq!(
            p.instructions(),
            vec![Instruction::h(0), Instruction::cx(0, 1)]
        );
    }

    #[test]
    fn empty_and_comment_only_input() {
        assert_eq!(parse("").unwrap(), Program::default());
        assert_eq!(parse("  # nothing\n\n").unwrap(), Program::default());
    }

    #[test]
    fn control_equal_to_target() {
        let errs = parse("reg q 2\ncx q[0] q[0]\n").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].line, 2);
        assert_eq!(errs[0].category, ErrorCategory::Resolution);
    }

    #[test]
    fn reports_every_bad_line() {
        let src = "reg q 3\nfoo q[0]\nh r[0]\nh q[3]\ncx q[0]\nrz q[1] pie\nh q[1]\n";
        let errs = parse(src).unwrap_err();
        let summary: Vec<_> = errs.iter().map(|e| (e.line, e.category)).collect();
        assert_eq!(
            summary,
            vec![
                (2, ErrorCategory::Syntax),
                (3, ErrorCategory::Resolution),
                (4, ErrorCategory::Resolution),
                (5, ErrorCategory::Arity),
                (6, ErrorCategory::Syntax),
            ]
        );
        assert_eq!(errs[1].column, 3);
    }

    #[test]
    fn angles() {
        assert_eq!(parse_angle("pi"), Some(Angle::pi_over_pow2(0)));
        assert_eq!(parse_angle("-pi/2^3"), Some(-Angle::pi_over_pow2(3)));
        assert_eq!(parse_angle("0.25"), Some(Angle::Radians(0.25)));
        assert_eq!(parse_angle("-1e-3"), Some(Angle::Radians(-1e-3)));
        assert_eq!(parse_angle("inf"), None);
        assert_eq!(parse_angle("pi/3"), None);
    }

    #[test]
    fn slices_and_prep_rules() {
        let p = parse("reg a 2\nreg b 4\nprep b[1] 1\nassert classical b[1:3] 1\n").unwrap();
        let a = p.assertions().next().unwrap();
        match &a.kind {
            AssertionKind::Classical { reg, expected } => {
                assert_eq!((reg.offset, reg.width, *expected), (3, 2, 1));
            }
            k => panic!("{k:?}"),
        }
        let errs = parse("reg q 1\nh q[0]\nprep q[0] 1\n").unwrap_err();
        assert_eq!(errs[0].line, 3);
        assert!(parse("reg q 2\nassert classical q 4\n").is_err());
        assert!(parse("reg q 2\nassert product q[0] q\n").is_err());
    }

    #[test]
    fn macros_expand_through_gate_library() {
        let p = parse("reg r 4\nqft r\n").unwrap();
        assert_eq!(p.instructions().len(), 10);
        let errs = parse("reg c 3\nreg b 4\ncadd b 3 c[0] c[1] c[2]\n").unwrap_err();
        assert_eq!(errs[0].category, ErrorCategory::Arity);
        let errs =
            parse("reg c 1\nreg x 4\nreg b 5\nreg anc 1\ncmodmul c x b anc 3 15\n").unwrap_err();
        assert!(errs[0].message.contains("no inverse"));
    }

    #[test]
    fn measure_all_is_terminal() {
        assert!(parse("reg q 1\nmeasure_all\n").is_ok());
        let errs = parse("reg q 1\nmeasure_all\nh q[0]\n").unwrap_err();
        assert_eq!(errs[0].line, 3);
    }

    #[test]
    fn tokenizer_columns() {
        let t = tokenize("  cx  q[0]\tq[1] # c");
        let cols: Vec<_> = t.iter().map(|t| (t.text, t.column)).collect();
        assert_eq!(cols, vec![("cx", 3), ("q[0]", 7), ("q[1]", 12)]);
    }
}

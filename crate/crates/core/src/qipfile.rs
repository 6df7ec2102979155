//! Canonical text serialization of quantified instances (`.qlp`).
//!
//! An LP-style format extended with a quantifier ordering section and an
//! optional universal constraint section:
//!
//! ```text
//! \ name: example
//! MINIMIZE
//!  obj: 5 x0 + 9 x1 + x6
//! SUBJECT TO
//!  c0: x0 + x1 + x4 + x5 = 1
//! UNCERTAINTY SUBJECT TO
//!  u0: x2 + x3 = 1
//! BOUNDS
//!  0 <= x0 <= 1
//! GENERALS
//!  x0 x1 x2 x3 x4 x5
//! CONTINUOUS
//!  x6
//! ORDER
//!  E x0 x1
//!  A x2 x3
//!  E x4 x5 x6
//! END
//! ```
//!
//! The `ORDER` section lists every variable exactly once; its line sequence
//! defines the quantifier blocks and the first appearance defines the
//! variable index. Coefficients are integers or rationals `p/q`. Rows may
//! use `<=`, `>=` (normalized to `<=` by negation) or `=`. A flattened
//! instance serializes identically with no `A` lines.
//!
//! [`write`] is canonical: variables are named `x<index>` in index order,
//! terms in index order, rationals in lowest terms; identical instances
//! produce identical bytes and `write ∘ parse ∘ write = write`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::model::{
    validate, LinConstraint, ObjSense, QipInstance, QuantBlock, Quantifier, Sense, Side,
    VarDomain, VarKind, Violation,
};
use crate::rational::{One, Rat, Signed, Zero};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QlpError {
    #[error("{line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("semantic error: {0}")]
    Semantic(Violation),
}

// ---------------------------------------------------------------------------
// Writer
// ---------------------------------------------------------------------------

/// Canonical serialization; see the module docs for the layout.
pub fn write(inst: &QipInstance) -> String {
    let mut out = String::new();
    if !inst.name.is_empty() {
        let _ = writeln!(out, "\\ name: {}", inst.name);
    }
    let _ = writeln!(
        out,
        "{}",
        match inst.sense {
            ObjSense::Minimize => "MINIMIZE",
            ObjSense::Maximize => "MAXIMIZE",
        }
    );
    // The stored objective is the minimization form; a maximization file
    // carries the original coefficients.
    let negate = inst.sense == ObjSense::Maximize;
    let objective: BTreeMap<usize, Rat> = inst
        .objective
        .iter()
        .map(|(&j, c)| (j, if negate { -*c } else { *c }))
        .collect();
    let _ = writeln!(out, " obj: {}", expr_text(&objective));

    let _ = writeln!(out, "SUBJECT TO");
    for (i, row) in inst.existential_rows.iter().enumerate() {
        let _ = writeln!(out, " c{}: {}", i, row_text(row));
    }
    if !inst.universal_rows.is_empty() {
        let _ = writeln!(out, "UNCERTAINTY SUBJECT TO");
        for (i, row) in inst.universal_rows.iter().enumerate() {
            let _ = writeln!(out, " u{}: {}", i, row_text(row));
        }
    }

    let _ = writeln!(out, "BOUNDS");
    for (j, d) in inst.domains.iter().enumerate() {
        let _ = writeln!(out, " {} <= x{} <= {}", d.lower, j, d.upper);
    }

    let integers: Vec<String> = (0..inst.num_vars())
        .filter(|&j| inst.domains[j].kind == VarKind::Integer)
        .map(|j| format!("x{j}"))
        .collect();
    if !integers.is_empty() {
        let _ = writeln!(out, "GENERALS");
        let _ = writeln!(out, " {}", integers.join(" "));
    }
    let continuous: Vec<String> = (0..inst.num_vars())
        .filter(|&j| inst.domains[j].kind == VarKind::TrailingContinuous)
        .map(|j| format!("x{j}"))
        .collect();
    if !continuous.is_empty() {
        let _ = writeln!(out, "CONTINUOUS");
        let _ = writeln!(out, " {}", continuous.join(" "));
    }

    let _ = writeln!(out, "ORDER");
    for block in &inst.blocks {
        let tag = match block.quantifier {
            Quantifier::Exists => "E",
            Quantifier::ForAll => "A",
        };
        let names: Vec<String> = block.vars.iter().map(|v| format!("x{v}")).collect();
        let _ = writeln!(out, " {} {}", tag, names.join(" "));
    }
    let _ = writeln!(out, "END");
    out
}

fn expr_text(coeffs: &BTreeMap<usize, Rat>) -> String {
    if coeffs.is_empty() {
        return "0".to_string();
    }
    let mut out = String::new();
    for (i, (&j, c)) in coeffs.iter().enumerate() {
        let mag = c.abs();
        if i == 0 {
            if c.is_negative() {
                out.push_str("- ");
            }
        } else if c.is_negative() {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        if mag.is_one() {
            let _ = write!(out, "x{j}");
        } else {
            let _ = write!(out, "{mag} x{j}");
        }
    }
    out
}

fn row_text(row: &LinConstraint) -> String {
    let rel = match row.sense {
        Sense::Le => "<=",
        Sense::Eq => "=",
    };
    format!("{} {} {}", expr_text(&row.coeffs), rel, row.rhs)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
struct Token {
    text: String,
    line: usize,
    col: usize,
}

fn tokenize(text: &str) -> Result<(Vec<Token>, String), QlpError> {
    let mut tokens = Vec::new();
    let mut name = String::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix('\\') {
            // Comment; a leading `\ name:` carries the instance name.
            if name.is_empty() {
                if let Some(n) = rest.trim().strip_prefix("name:") {
                    name = n.trim().to_string();
                }
            }
            continue;
        }
        let mut chars = line.char_indices().peekable();
        while let Some(&(start, ch)) = chars.peek() {
            if ch.is_whitespace() {
                chars.next();
                continue;
            }
            let col = start + 1;
            if ch.is_ascii_alphabetic() || ch == '_' {
                let mut word = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        word.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                tokens.push(Token { text: word, line: lineno, col });
            } else if ch.is_ascii_digit() {
                let mut num = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_ascii_digit() || c == '/' {
                        num.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                tokens.push(Token { text: num, line: lineno, col });
            } else {
                match ch {
                    '+' | '-' | '=' | ':' => {
                        chars.next();
                        tokens.push(Token { text: ch.to_string(), line: lineno, col });
                    }
                    '<' | '>' => {
                        chars.next();
                        if let Some(&(_, '=')) = chars.peek() {
                            chars.next();
                            tokens.push(Token { text: format!("{ch}="), line: lineno, col });
                        } else {
                            return Err(QlpError::Syntax {
                                line: lineno,
                                col,
                                message: format!("expected '=' after '{ch}'"),
                            });
                        }
                    }
                    _ => {
                        return Err(QlpError::Syntax {
                            line: lineno,
                            col,
                            message: format!("unexpected character '{ch}'"),
                        })
                    }
                }
            }
        }
    }
    Ok((tokens, name))
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    name: String,
}

#[derive(Debug, Default)]
struct Expr {
    coeffs: BTreeMap<String, Rat>,
    constant: Rat,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_text(&self) -> Option<&str> {
        self.peek().map(|t| t.text.as_str())
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: impl Into<String>) -> QlpError {
        match self.peek() {
            Some(t) => QlpError::Syntax { line: t.line, col: t.col, message: message.into() },
            None => {
                let (line, col) = self
                    .tokens
                    .last()
                    .map(|t| (t.line, t.col + t.text.len()))
                    .unwrap_or((1, 1));
                QlpError::Syntax { line, col, message: message.into() }
            }
        }
    }

    fn expect(&mut self, word: &str) -> Result<(), QlpError> {
        if self.peek_text() == Some(word) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error_here(format!(
                "expected '{word}', found '{}'",
                self.peek_text().unwrap_or("end of input")
            )))
        }
    }

    fn eat(&mut self, word: &str) -> bool {
        if self.peek_text() == Some(word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn is_keyword(word: &str) -> bool {
        matches!(
            word,
            "MINIMIZE"
                | "MAXIMIZE"
                | "SUBJECT"
                | "UNCERTAINTY"
                | "BOUNDS"
                | "GENERALS"
                | "BINARIES"
                | "CONTINUOUS"
                | "ORDER"
                | "END"
        )
    }

    fn at_keyword(&self) -> bool {
        self.peek_text().is_some_and(Self::is_keyword)
    }

    /// `identifier ':'` — row and objective labels are allowed and ignored.
    fn eat_label(&mut self) {
        if let (Some(a), Some(b)) = (self.tokens.get(self.pos), self.tokens.get(self.pos + 1)) {
            let is_ident = a.text.chars().next().is_some_and(|c| c.is_ascii_alphabetic());
            if is_ident && !Self::is_keyword(&a.text) && b.text == ":" {
                self.pos += 2;
            }
        }
    }

    fn number(&self, tok: &Token) -> Result<Rat, QlpError> {
        Rat::from_str(&tok.text).map_err(|_| QlpError::Syntax {
            line: tok.line,
            col: tok.col,
            message: format!("invalid number '{}'", tok.text),
        })
    }

    /// Signed rational, e.g. `-3`, `1/2`.
    fn signed_number(&mut self) -> Result<Rat, QlpError> {
        let mut sign = Rat::one();
        loop {
            match self.peek_text() {
                Some("-") => {
                    sign = -sign;
                    self.pos += 1;
                }
                Some("+") => {
                    self.pos += 1;
                }
                _ => break,
            }
        }
        let tok = self.next().ok_or_else(|| self.error_here("expected a number"))?;
        Ok(sign * self.number(&tok)?)
    }

    /// Linear expression `[±] term (± term)*`; terms are `coeff var`, a bare
    /// `var`, or a constant.
    fn expr(&mut self) -> Result<Expr, QlpError> {
        let mut out = Expr::default();
        let mut sign = Rat::one();
        let mut first = true;
        loop {
            match self.peek_text() {
                Some("-") => {
                    sign = -sign;
                    self.pos += 1;
                    continue;
                }
                Some("+") => {
                    self.pos += 1;
                    continue;
                }
                _ => {}
            }
            let Some(tok) = self.peek().cloned() else {
                return Err(self.error_here("unexpected end of expression"));
            };
            let starts_number = tok.text.chars().next().is_some_and(|c| c.is_ascii_digit());
            if starts_number {
                self.pos += 1;
                let value = self.number(&tok)?;
                let followed_by_var = self.peek_text().is_some_and(|t| {
                    t.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
                        && !Self::is_keyword(t)
                });
                if followed_by_var {
                    let var = self.next().unwrap();
                    *out.coeffs.entry(var.text).or_insert_with(Rat::zero) += sign * value;
                } else {
                    out.constant += sign * value;
                }
            } else {
                let is_ident = tok.text.chars().next().is_some_and(|c| c.is_ascii_alphabetic());
                if !is_ident || Self::is_keyword(&tok.text) {
                    if first {
                        return Err(self.error_here("expected a term"));
                    }
                    break;
                }
                self.pos += 1;
                *out.coeffs.entry(tok.text).or_insert_with(Rat::zero) += sign;
            }
            sign = Rat::one();
            first = false;
            // Continue only on an explicit separator.
            match self.peek_text() {
                Some("+") | Some("-") => continue,
                _ => break,
            }
        }
        Ok(out)
    }

    /// One constraint `label: expr rel rhs`; `>=` rows are flipped to `<=`.
    fn row(&mut self) -> Result<(Expr, Sense, Rat, bool), QlpError> {
        self.eat_label();
        let lhs = self.expr()?;
        let (sense, flip) = match self.peek_text() {
            Some("<=") => (Sense::Le, false),
            Some(">=") => (Sense::Le, true),
            Some("=") => (Sense::Eq, false),
            _ => return Err(self.error_here("expected '<=', '>=' or '='")),
        };
        self.pos += 1;
        let rhs = self.signed_number()?;
        Ok((lhs, sense, rhs, flip))
    }
}

/// Parses a `.qlp` document. The result always passes [`validate`]; any
/// violated structural condition is reported as a semantic error.
pub fn parse(text: &str) -> Result<QipInstance, QlpError> {
    let (tokens, name) = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0, name };

    let sense = if p.eat("MINIMIZE") {
        ObjSense::Minimize
    } else if p.eat("MAXIMIZE") {
        ObjSense::Maximize
    } else {
        return Err(p.error_here("expected MINIMIZE or MAXIMIZE"));
    };

    p.eat_label();
    let objective_expr = p.expr()?;
    if !objective_expr.constant.is_zero() {
        return Err(p.error_here("constant terms are not supported in the objective"));
    }

    p.expect("SUBJECT")?;
    p.expect("TO")?;
    let mut raw_rows: Vec<(Expr, Sense, Rat, bool, Side)> = Vec::new();
    while !p.at_keyword() && p.peek().is_some() {
        let (lhs, sense_row, rhs, flip) = p.row()?;
        raw_rows.push((lhs, sense_row, rhs, flip, Side::Existential));
    }
    if p.eat("UNCERTAINTY") {
        p.expect("SUBJECT")?;
        p.expect("TO")?;
        while !p.at_keyword() && p.peek().is_some() {
            let (lhs, sense_row, rhs, flip) = p.row()?;
            raw_rows.push((lhs, sense_row, rhs, flip, Side::Universal));
        }
    }

    p.expect("BOUNDS")?;
    let mut bounds: BTreeMap<String, (i64, i64)> = BTreeMap::new();
    while !p.at_keyword() && p.peek().is_some() {
        let lo = p.signed_number()?;
        p.expect("<=")?;
        let var = p.next().ok_or_else(|| p.error_here("expected a variable name"))?;
        p.expect("<=")?;
        let hi = p.signed_number()?;
        if !lo.is_integer() || !hi.is_integer() {
            return Err(QlpError::Syntax {
                line: var.line,
                col: var.col,
                message: "bounds must be integers".into(),
            });
        }
        bounds.insert(var.text, (lo.to_integer() as i64, hi.to_integer() as i64));
    }

    let mut kinds: BTreeMap<String, VarKind> = BTreeMap::new();
    let mut binaries: Vec<String> = Vec::new();
    loop {
        if p.eat("GENERALS") {
            while !p.at_keyword() && p.peek().is_some() {
                let var = p.next().unwrap();
                kinds.insert(var.text, VarKind::Integer);
            }
        } else if p.eat("BINARIES") {
            while !p.at_keyword() && p.peek().is_some() {
                let var = p.next().unwrap();
                kinds.insert(var.text.clone(), VarKind::Integer);
                binaries.push(var.text);
            }
        } else if p.eat("CONTINUOUS") {
            while !p.at_keyword() && p.peek().is_some() {
                let var = p.next().unwrap();
                kinds.insert(var.text, VarKind::TrailingContinuous);
            }
        } else {
            break;
        }
    }

    p.expect("ORDER")?;
    let mut blocks: Vec<(Quantifier, Vec<String>)> = Vec::new();
    loop {
        let quantifier = if p.eat("E") {
            Quantifier::Exists
        } else if p.eat("A") {
            Quantifier::ForAll
        } else {
            break;
        };
        let mut vars = Vec::new();
        while !p.at_keyword() && p.peek_text() != Some("E") && p.peek_text() != Some("A") {
            match p.next() {
                Some(t) => vars.push(t.text),
                None => break,
            }
        }
        blocks.push((quantifier, vars));
    }
    p.expect("END")?;
    if let Some(t) = p.peek() {
        return Err(QlpError::Syntax {
            line: t.line,
            col: t.col,
            message: format!("unexpected trailing token '{}'", t.text),
        });
    }

    // Indices from first appearance in ORDER.
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut names_in_order: Vec<String> = Vec::new();
    for (_, vars) in &blocks {
        for v in vars {
            if !index.contains_key(v) {
                index.insert(v.clone(), names_in_order.len());
                names_in_order.push(v.clone());
            }
        }
    }
    let resolve = |name: &str| -> Result<usize, QlpError> {
        index.get(name).copied().ok_or_else(|| QlpError::Syntax {
            line: 1,
            col: 1,
            message: format!("variable '{name}' does not appear in ORDER"),
        })
    };

    let mut domains = Vec::with_capacity(names_in_order.len());
    for vname in &names_in_order {
        let kind = kinds.get(vname).copied().unwrap_or(VarKind::Integer);
        let (lower, upper) = match bounds.get(vname) {
            Some(&b) => b,
            None if binaries.contains(vname) => (0, 1),
            None => {
                return Err(QlpError::Syntax {
                    line: 1,
                    col: 1,
                    message: format!("variable '{vname}' has no bounds"),
                })
            }
        };
        domains.push(VarDomain { lower, upper, kind });
    }

    let negate = sense == ObjSense::Maximize;
    let mut objective: BTreeMap<usize, Rat> = BTreeMap::new();
    for (vname, c) in &objective_expr.coeffs {
        let j = resolve(vname)?;
        let c = if negate { -*c } else { *c };
        if !c.is_zero() {
            objective.insert(j, c);
        }
    }

    let mut existential_rows = Vec::new();
    let mut universal_rows = Vec::new();
    for (lhs, sense_row, rhs, flip, side) in raw_rows {
        let mut coeffs: BTreeMap<usize, Rat> = BTreeMap::new();
        for (vname, c) in &lhs.coeffs {
            let j = resolve(vname)?;
            let c = if flip { -*c } else { *c };
            *coeffs.entry(j).or_insert_with(Rat::zero) += c;
        }
        let rhs = if flip { -(rhs - lhs.constant) } else { rhs - lhs.constant };
        let row = LinConstraint::new(coeffs, sense_row, rhs, side);
        match side {
            Side::Existential => existential_rows.push(row),
            Side::Universal => universal_rows.push(row),
        }
    }

    let inst = QipInstance {
        name: p.name.clone(),
        domains,
        blocks: blocks
            .into_iter()
            .map(|(q, vars)| QuantBlock {
                quantifier: q,
                vars: vars.iter().map(|v| index[v]).collect(),
            })
            .collect(),
        objective,
        existential_rows,
        universal_rows,
        sense,
    };

    let report = validate(&inst);
    if let Some(first) = report.findings.into_iter().next() {
        return Err(QlpError::Semantic(first));
    }
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{
        build_selection_qip_pu, selection_qip_pu_from, SelectionData, SelectionParams,
    };
    use crate::rational::rat;

    #[test]
    fn minimal_document_parses() {
        let text = "MINIMIZE obj: x0 SUBJECT TO c1: x0 >= 0 BOUNDS 0 <= x0 <= 1 GENERALS x0 ORDER E x0 END";
        let inst = parse(text).unwrap();
        assert_eq!(inst.num_vars(), 1);
        assert_eq!(inst.existential_rows.len(), 1);
        // x0 >= 0 normalizes to -x0 <= 0.
        assert_eq!(inst.existential_rows[0].coeffs[&0], rat(-1));
        assert_eq!(inst.existential_rows[0].rhs, rat(0));
    }

    #[test]
    fn document_with_universal_section_round_trips() {
        let text = "MINIMIZE obj: x0 + x1\n\
                    SUBJECT TO c0: x0 + x1 <= 1\n\
                    UNCERTAINTY SUBJECT TO u1: q0 + q1 = 1\n\
                    BOUNDS 0 <= x0 <= 1\n 0 <= q0 <= 1\n 0 <= q1 <= 1\n 0 <= x1 <= 1\n\
                    GENERALS x0 q0 q1 x1\n\
                    ORDER\n E x0\n A q0 q1\n E x1\nEND\n";
        let inst = parse(text).unwrap();
        assert_eq!(inst.blocks.len(), 3);
        assert_eq!(inst.universal_rows.len(), 1);
        let again = parse(&write(&inst)).unwrap();
        assert_eq!(inst, again);
    }

    #[test]
    fn universal_row_on_existential_variable_is_a_semantic_error() {
        let text = "MINIMIZE obj: x0\n\
                    SUBJECT TO\n\
                    UNCERTAINTY SUBJECT TO u0: x0 + q0 = 1\n\
                    BOUNDS 0 <= x0 <= 1\n 0 <= q0 <= 1\n 0 <= x1 <= 1\n\
                    GENERALS x0 q0 x1\n\
                    ORDER\n E x0\n A q0\n E x1\nEND\n";
        assert_eq!(
            parse(text).unwrap_err(),
            QlpError::Semantic(Violation::UniversalRowTouchesExistential { row: 0 })
        );
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let text = "MINIMIZE obj: x0\nSUBJECT TO\n c0: x0 <* 1\nBOUNDS\nORDER\nE x0\nEND";
        match parse(text).unwrap_err() {
            QlpError::Syntax { line, col, .. } => {
                assert_eq!(line, 3);
                assert!(col > 1);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn canonical_form_is_a_fixpoint() {
        let params = SelectionParams { items: 2, picks: 1, periods: 1, scenarios: 2, seed: 0 };
        let inst = build_selection_qip_pu(&params).unwrap();
        let once = write(&inst);
        let twice = write(&parse(&once).unwrap());
        assert_eq!(once, twice);
    }

    #[test]
    fn generator_round_trip_is_structural_identity() {
        for seed in 0..10 {
            let params = SelectionParams { items: 2, picks: 1, periods: 1, scenarios: 2, seed };
            let inst = build_selection_qip_pu(&params).unwrap();
            let parsed = parse(&write(&inst)).unwrap();
            assert_eq!(inst, parsed, "seed {seed}");
        }
    }

    #[test]
    fn identical_seeds_serialize_to_identical_bytes() {
        let params = SelectionParams { items: 4, picks: 2, periods: 2, scenarios: 2, seed: 9 };
        let a = write(&build_selection_qip_pu(&params).unwrap());
        let b = write(&build_selection_qip_pu(&params).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn maximization_objective_round_trips() {
        use crate::problems::{knapsack_qip_pu_from, KnapsackData, KnapsackParams};
        let data =
            KnapsackData::generate(&KnapsackParams { items: 2, periods: 1, seed: 1 }).unwrap();
        let inst = knapsack_qip_pu_from(&data);
        assert_eq!(inst.sense, ObjSense::Maximize);
        let text = write(&inst);
        assert!(text.starts_with("\\ name: kna-n2-T1-s1-qippu\nMAXIMIZE"));
        let parsed = parse(&text).unwrap();
        assert_eq!(inst, parsed);
    }

    #[test]
    fn crafted_instance_survives_a_round_trip() {
        let data = SelectionData {
            label: "sel-example".into(),
            items: 2,
            picks: 1,
            periods: 1,
            scenarios: 2,
            initial_costs: vec![5, 9],
            period_costs: vec![vec![vec![3, 100], vec![100, 2]]],
        };
        let inst = selection_qip_pu_from(&data);
        let parsed = parse(&write(&inst)).unwrap();
        assert_eq!(inst, parsed);
    }
}


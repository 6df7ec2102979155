//! Data model and validation for quantified integer linear programs.
//!
//! A [`QipInstance`] is a linear integer program whose variables carry an
//! explicit order and a quantifier (`∃` or `∀`). Maximal runs of identically
//! quantified variables form blocks; the first and last block are always
//! existential. The existential constraint system defines the payoff of a
//! play (violating it costs `+∞`), while the optional universal constraint
//! system restricts the moves of the universal player and may only touch
//! universally quantified variables.
//!
//! Instances are immutable after construction and safely shareable across
//! concurrent solver runs; everything in this module is a pure function of
//! its inputs. The objective is always stored in minimization form for the
//! existential player; [`ObjSense::Maximize`] records that the model was
//! stated as a maximization and that reported values must be negated back
//! for display.

use std::collections::BTreeMap;
use std::fmt;

use crate::rational::{rat, GameValue, Rat, Signed, Zero};

/// Variable kind. Continuous variables are only allowed in the closing
/// existential block and must follow the separable trailing pattern consumed
/// by `search::resolve_trailing`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Integer,
    TrailingContinuous,
}

/// Inclusive variable domain `{lower, …, upper}` (the box of a continuous
/// trailing variable also carries integer endpoints).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarDomain {
    pub lower: i64,
    pub upper: i64,
    pub kind: VarKind,
}

impl VarDomain {
    pub fn binary() -> Self {
        VarDomain { lower: 0, upper: 1, kind: VarKind::Integer }
    }

    pub fn integer(lower: i64, upper: i64) -> Self {
        VarDomain { lower, upper, kind: VarKind::Integer }
    }

    pub fn trailing_continuous(lower: i64, upper: i64) -> Self {
        VarDomain { lower, upper, kind: VarKind::TrailingContinuous }
    }

    /// Number of integer points in the domain.
    pub fn size(&self) -> u128 {
        if self.lower > self.upper {
            0
        } else {
            (self.upper as i128 - self.lower as i128 + 1) as u128
        }
    }

    pub fn contains(&self, v: i64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantifier {
    Exists,
    ForAll,
}

/// A maximal run of identically quantified consecutive variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantBlock {
    pub quantifier: Quantifier,
    /// Variable indices in quantification order.
    pub vars: Vec<usize>,
}

impl QuantBlock {
    pub fn exists(vars: Vec<usize>) -> Self {
        QuantBlock { quantifier: Quantifier::Exists, vars }
    }

    pub fn forall(vars: Vec<usize>) -> Self {
        QuantBlock { quantifier: Quantifier::ForAll, vars }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Eq,
}

/// Which constraint system a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Existential,
    Universal,
}

/// A linear row `Σ coeffs[j]·x_j  (≤ | =)  rhs`.
///
/// Zero coefficients are dropped on construction, so `coeffs` holds the
/// support of the row.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LinConstraint {
    pub coeffs: BTreeMap<usize, Rat>,
    pub sense: Sense,
    pub rhs: Rat,
    pub side: Side,
}

impl LinConstraint {
    pub fn new(coeffs: BTreeMap<usize, Rat>, sense: Sense, rhs: Rat, side: Side) -> Self {
        let coeffs = coeffs.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        LinConstraint { coeffs, sense, rhs, side }
    }

    pub fn le(coeffs: BTreeMap<usize, Rat>, rhs: Rat, side: Side) -> Self {
        Self::new(coeffs, Sense::Le, rhs, side)
    }

    pub fn eq(coeffs: BTreeMap<usize, Rat>, rhs: Rat, side: Side) -> Self {
        Self::new(coeffs, Sense::Eq, rhs, side)
    }

    /// Left-hand side under a complete assignment.
    pub fn lhs(&self, values: &[Rat]) -> Rat {
        self.coeffs.iter().map(|(&j, c)| *c * values[j]).sum()
    }

    pub fn satisfied_by(&self, values: &[Rat]) -> bool {
        let lhs = self.lhs(values);
        match self.sense {
            Sense::Le => lhs <= self.rhs,
            Sense::Eq => lhs == self.rhs,
        }
    }
}

/// Stated optimization orientation. The stored objective is always the
/// internal minimization form; `Maximize` means coefficients were negated on
/// construction and values negate back for display.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjSense {
    Minimize,
    Maximize,
}

/// A quantified integer linear program, optionally with a universal
/// constraint system (polyhedral uncertainty).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QipInstance {
    pub name: String,
    pub domains: Vec<VarDomain>,
    pub blocks: Vec<QuantBlock>,
    /// Minimization objective for the existential player; zero entries dropped.
    pub objective: BTreeMap<usize, Rat>,
    pub existential_rows: Vec<LinConstraint>,
    pub universal_rows: Vec<LinConstraint>,
    pub sense: ObjSense,
}

impl QipInstance {
    pub fn num_vars(&self) -> usize {
        self.domains.len()
    }

    /// Block index of each variable; `usize::MAX` for variables missing from
    /// every block (flagged by `validate`).
    pub fn var_block(&self) -> Vec<usize> {
        let mut map = vec![usize::MAX; self.num_vars()];
        for (b, block) in self.blocks.iter().enumerate() {
            for &v in &block.vars {
                if v < map.len() && map[v] == usize::MAX {
                    map[v] = b;
                }
            }
        }
        map
    }

    pub fn quantifier_of(&self, var: usize) -> Quantifier {
        let b = self.var_block()[var];
        self.blocks[b].quantifier
    }

    pub fn universal_var_count(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| b.quantifier == Quantifier::ForAll)
            .map(|b| b.vars.len())
            .sum()
    }

    /// Upper bound on the number of leaves of the game tree: the product of
    /// the branched (integer) domain sizes. Trailing continuous variables are
    /// resolved in closed form and universal legality filtering can only
    /// shrink the tree further.
    pub fn leaf_bound(&self) -> u128 {
        let mut prod: u128 = 1;
        for d in &self.domains {
            if d.kind == VarKind::Integer {
                prod = prod.saturating_mul(d.size());
            }
        }
        prod
    }

    /// Objective value of a complete assignment (internal minimization form).
    pub fn objective_value(&self, values: &[Rat]) -> Rat {
        self.objective.iter().map(|(&j, c)| *c * values[j]).sum()
    }

    /// Payoff of a complete play: the objective if every existential row
    /// holds, `+∞` otherwise.
    pub fn evaluate_play(&self, values: &[Rat]) -> GameValue {
        if self.existential_rows.iter().all(|r| r.satisfied_by(values)) {
            GameValue::Finite(self.objective_value(values))
        } else {
            GameValue::Infinite
        }
    }

    /// Whether a complete assignment satisfies the universal constraint system.
    pub fn universally_legal_play(&self, values: &[Rat]) -> bool {
        self.universal_rows.iter().all(|r| r.satisfied_by(values))
    }

    /// Maps a reported value back to the stated orientation.
    pub fn display_value(&self, v: GameValue) -> GameValue {
        match (self.sense, v) {
            (ObjSense::Minimize, v) => v,
            (ObjSense::Maximize, GameValue::Finite(r)) => GameValue::Finite(-r),
            (ObjSense::Maximize, GameValue::Infinite) => GameValue::Infinite,
        }
    }

    /// A copy with the variables of `block` clamped to `values` (used to
    /// replay a first-stage assignment).
    pub fn with_block_fixed(&self, block: usize, values: &[i64]) -> QipInstance {
        assert_eq!(self.blocks[block].vars.len(), values.len());
        let mut inst = self.clone();
        for (&v, &val) in self.blocks[block].vars.iter().zip(values) {
            inst.domains[v].lower = val;
            inst.domains[v].upper = val;
        }
        inst
    }

    /// A copy with the integer variables of the first block clamped to
    /// `values` (pairs with `SolveResult::first_stage`).
    pub fn fix_first_stage(&self, values: &[i64]) -> QipInstance {
        let mut inst = self.clone();
        let vars: Vec<usize> = self.blocks[0]
            .vars
            .iter()
            .copied()
            .filter(|&v| self.domains[v].kind == VarKind::Integer)
            .collect();
        assert_eq!(vars.len(), values.len());
        for (&v, &val) in vars.iter().zip(values) {
            inst.domains[v].lower = val;
            inst.domains[v].upper = val;
        }
        inst
    }

    /// Interval bounds `(L, U)` with `L ≤ c·x ≤ U` for every `x` in the box.
    pub fn objective_bounds(&self) -> (Rat, Rat) {
        let mut lo = Rat::zero();
        let mut hi = Rat::zero();
        for (&j, c) in &self.objective {
            let d = &self.domains[j];
            let (dl, du) = (rat(d.lower), rat(d.upper));
            if c.is_positive() {
                lo += *c * dl;
                hi += *c * du;
            } else {
                lo += *c * du;
                hi += *c * dl;
            }
        }
        (lo, hi)
    }
}

/// One violated structural invariant, with the offending index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    FirstBlockNotExistential,
    LastBlockNotExistential,
    NoBlocks,
    EmptyBlock { block: usize },
    AdjacentBlocksSameQuantifier { block: usize },
    VariableInNoBlock { var: usize },
    VariableInMultipleBlocks { var: usize },
    VariableIndexOutOfRange { var: usize },
    EmptyDomain { var: usize },
    TrailingContinuousOutsideFinalBlock { var: usize },
    UniversalRowTouchesExistential { row: usize },
    UniversalSystemInfeasible,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::FirstBlockNotExistential => write!(f, "first block is not existential"),
            Violation::LastBlockNotExistential => write!(f, "last block is not existential"),
            Violation::NoBlocks => write!(f, "instance has no quantifier blocks"),
            Violation::EmptyBlock { block } => write!(f, "block {block} is empty"),
            Violation::AdjacentBlocksSameQuantifier { block } => {
                write!(f, "blocks {} and {block} share a quantifier", block - 1)
            }
            Violation::VariableInNoBlock { var } => write!(f, "variable {var} appears in no block"),
            Violation::VariableInMultipleBlocks { var } => {
                write!(f, "variable {var} appears in multiple blocks")
            }
            Violation::VariableIndexOutOfRange { var } => {
                write!(f, "variable index {var} out of range")
            }
            Violation::EmptyDomain { var } => write!(f, "variable {var} has lower > upper"),
            Violation::TrailingContinuousOutsideFinalBlock { var } => {
                write!(f, "continuous variable {var} outside the final block")
            }
            Violation::UniversalRowTouchesExistential { row } => {
                write!(f, "universal row {row} has a nonzero coefficient on an existential variable")
            }
            Violation::UniversalSystemInfeasible => {
                write!(f, "universal constraint system admits no completion within bounds")
            }
        }
    }
}

/// Result of [`validate`]: empty iff the instance is well-formed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn contains(&self, v: &Violation) -> bool {
        self.findings.contains(v)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.findings.is_empty() {
            write!(f, "ok")
        } else {
            for (i, v) in self.findings.iter().enumerate() {
                if i > 0 {
                    writeln!(f)?;
                }
                write!(f, "{v}")?;
            }
            Ok(())
        }
    }
}

/// Checks every structural invariant of the instance and reports all
/// violations. Pure and idempotent.
pub fn validate(inst: &QipInstance) -> ValidationReport {
    let mut findings = Vec::new();
    let n = inst.num_vars();

    if inst.blocks.is_empty() {
        findings.push(Violation::NoBlocks);
    } else {
        if inst.blocks.first().unwrap().quantifier != Quantifier::Exists {
            findings.push(Violation::FirstBlockNotExistential);
        }
        if inst.blocks.last().unwrap().quantifier != Quantifier::Exists {
            findings.push(Violation::LastBlockNotExistential);
        }
    }

    let mut seen = vec![0usize; n];
    for (b, block) in inst.blocks.iter().enumerate() {
        if block.vars.is_empty() {
            findings.push(Violation::EmptyBlock { block: b });
        }
        if b > 0 && inst.blocks[b - 1].quantifier == block.quantifier {
            findings.push(Violation::AdjacentBlocksSameQuantifier { block: b });
        }
        for &v in &block.vars {
            if v >= n {
                findings.push(Violation::VariableIndexOutOfRange { var: v });
            } else {
                seen[v] += 1;
            }
        }
    }
    for (v, &count) in seen.iter().enumerate() {
        if count == 0 {
            findings.push(Violation::VariableInNoBlock { var: v });
        } else if count > 1 {
            findings.push(Violation::VariableInMultipleBlocks { var: v });
        }
    }

    for (v, d) in inst.domains.iter().enumerate() {
        if d.lower > d.upper {
            findings.push(Violation::EmptyDomain { var: v });
        }
    }
    let last_block = inst.blocks.len().saturating_sub(1);
    let var_block = inst.var_block();
    for (v, d) in inst.domains.iter().enumerate() {
        if d.kind == VarKind::TrailingContinuous
            && var_block.get(v).copied() != Some(last_block)
        {
            findings.push(Violation::TrailingContinuousOutsideFinalBlock { var: v });
        }
    }

    for (&j, _) in &inst.objective {
        if j >= n {
            findings.push(Violation::VariableIndexOutOfRange { var: j });
        }
    }
    for row in inst.existential_rows.iter().chain(&inst.universal_rows) {
        for (&j, _) in &row.coeffs {
            if j >= n {
                findings.push(Violation::VariableIndexOutOfRange { var: j });
            }
        }
    }

    for (r, row) in inst.universal_rows.iter().enumerate() {
        let touches_existential = row.coeffs.keys().any(|&j| {
            j < n
                && matches!(var_block.get(j), Some(&b) if b != usize::MAX)
                && inst.blocks[var_block[j]].quantifier == Quantifier::Exists
        });
        if touches_existential {
            findings.push(Violation::UniversalRowTouchesExistential { row: r });
        }
    }

    // Cheap interval check that the universal system admits a completion.
    // The exhaustive legality check lives in `debug_check_immediate_violation`.
    if findings.is_empty() {
        for row in &inst.universal_rows {
            let mut min_lhs = Rat::zero();
            let mut max_lhs = Rat::zero();
            for (&j, c) in &row.coeffs {
                let d = &inst.domains[j];
                if c.is_positive() {
                    min_lhs += *c * rat(d.lower);
                    max_lhs += *c * rat(d.upper);
                } else {
                    min_lhs += *c * rat(d.upper);
                    max_lhs += *c * rat(d.lower);
                }
            }
            let infeasible = match row.sense {
                Sense::Le => min_lhs > row.rhs,
                Sense::Eq => min_lhs > row.rhs || max_lhs < row.rhs,
            };
            if infeasible {
                findings.push(Violation::UniversalSystemInfeasible);
                break;
            }
        }
    }

    ValidationReport { findings }
}

/// Exhaustively verifies, for instances with at most `MAX_DEBUG_UNIVERSALS`
/// universal variables, that every universal block assignment not violating
/// an already-decidable universal row can be completed to satisfy the whole
/// universal system (and that at least one completion exists at all).
pub const MAX_DEBUG_UNIVERSALS: usize = 12;

pub fn debug_check_immediate_violation(inst: &QipInstance) -> Result<(), String> {
    let universals = inst.universal_var_count();
    if universals > MAX_DEBUG_UNIVERSALS {
        return Err(format!(
            "instance has {universals} universal variables, exhaustive check capped at {MAX_DEBUG_UNIVERSALS}"
        ));
    }
    let forall_blocks: Vec<&QuantBlock> = inst
        .blocks
        .iter()
        .filter(|b| b.quantifier == Quantifier::ForAll)
        .collect();

    // Rows decidable once every universal block up to position `k` is set.
    let assigned_after: Vec<Vec<usize>> = {
        let mut prefix_vars: Vec<usize> = Vec::new();
        let mut out = Vec::new();
        for b in &forall_blocks {
            prefix_vars.extend_from_slice(&b.vars);
            let rows = inst
                .universal_rows
                .iter()
                .enumerate()
                .filter(|(_, row)| row.coeffs.keys().all(|j| prefix_vars.contains(j)))
                .map(|(i, _)| i)
                .collect();
            out.push(rows);
        }
        out
    };

    let mut values: Vec<Rat> = inst.domains.iter().map(|d| rat(d.lower)).collect();
    check_level(inst, &forall_blocks, &assigned_after, 0, &mut values)
}

fn check_level(
    inst: &QipInstance,
    forall_blocks: &[&QuantBlock],
    assigned_after: &[Vec<usize>],
    level: usize,
    values: &mut Vec<Rat>,
) -> Result<(), String> {
    if level == forall_blocks.len() {
        return Ok(());
    }
    let block = forall_blocks[level];
    let mut any_legal = false;
    for assignment in box_assignments(&inst.domains, &block.vars) {
        for (&v, &val) in block.vars.iter().zip(&assignment) {
            values[v] = rat(val);
        }
        let immediately_legal = assigned_after[level]
            .iter()
            .all(|&r| partial_row_holds(&inst.universal_rows[r], values));
        if !immediately_legal {
            continue;
        }
        any_legal = true;
        if !completable(inst, forall_blocks, level + 1, values) {
            return Err(format!(
                "universal block {level} assignment {assignment:?} is not immediately \
                 violating but admits no completion"
            ));
        }
        check_level(inst, forall_blocks, assigned_after, level + 1, values)?;
    }
    if !any_legal {
        return Err(format!("universal block {level} has no legal assignment"));
    }
    Ok(())
}

fn partial_row_holds(row: &LinConstraint, values: &[Rat]) -> bool {
    let lhs: Rat = row.coeffs.iter().map(|(&j, c)| *c * values[j]).sum();
    match row.sense {
        Sense::Le => lhs <= row.rhs,
        Sense::Eq => lhs == row.rhs,
    }
}

fn completable(
    inst: &QipInstance,
    forall_blocks: &[&QuantBlock],
    level: usize,
    values: &mut Vec<Rat>,
) -> bool {
    if level == forall_blocks.len() {
        return inst.universally_legal_play(values);
    }
    let block = forall_blocks[level];
    for assignment in box_assignments(&inst.domains, &block.vars) {
        for (&v, &val) in block.vars.iter().zip(&assignment) {
            values[v] = rat(val);
        }
        if completable(inst, forall_blocks, level + 1, values) {
            return true;
        }
    }
    false
}

/// All integer assignments of `vars` within their domains, in lexicographic
/// order. Intended for small boxes only.
pub(crate) fn box_assignments(domains: &[VarDomain], vars: &[usize]) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for &v in vars {
        let d = &domains[v];
        let mut next = Vec::with_capacity(out.len() * d.size() as usize);
        for partial in &out {
            for val in d.lower..=d.upper {
                let mut p = partial.clone();
                p.push(val);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

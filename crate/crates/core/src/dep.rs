//! Deterministic equivalent expansion of quantified instances.
//!
//! A quantified instance is flattened into a single-player minimization by
//! enumerating every legal sequence of universal moves (the scenario tree)
//! and giving each existential variable one copy per distinct history prefix
//! preceding its block. Two histories sharing a prefix share the copies of
//! every earlier stage, so nonanticipativity holds by construction. A single
//! epigraph variable bounds the worst-case objective across leaves.
//!
//! Trailing continuous variables matching the separable pattern are
//! eliminated during expansion: their defining rows are substituted into the
//! per-leaf epigraph rows and big-M rows that can never bind are dropped.
//! This reproduces the textbook deterministic equivalents exactly (for the
//! objective-uncertain families the flat variable count is
//! `n · Σ_{t=0..T} N^t + 1`).

use std::collections::{BTreeMap, HashSet};

use crate::model::{
    LinConstraint, ObjSense, QipInstance, QuantBlock, Quantifier, Sense, Side, VarDomain, VarKind,
};
use crate::rational::{rat, Rat, Signed, Zero};
use crate::search::{legal_universal_moves, SolveError};

/// Default cap on scenario-tree leaves.
pub const DEFAULT_LEAF_CAP: u128 = 1_000_000;

/// Epigraph rows per leaf stay below this; exceeding it falls back to
/// keeping the trailing copies as variables.
const MAX_COMBOS_PER_LEAF: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DepError {
    #[error("scenario tree exceeds the cap of {cap} leaves")]
    ScenarioExplosion { cap: u128 },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// A sequence of universal block assignments, one per elapsed universal
/// block, in block order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ScenarioHistory {
    pub moves: Vec<Vec<i64>>,
}

impl ScenarioHistory {
    pub fn empty() -> Self {
        ScenarioHistory::default()
    }

    /// The sub-sequence covering the first `len` universal blocks.
    pub fn prefix(&self, len: usize) -> ScenarioHistory {
        ScenarioHistory { moves: self.moves[..len].to_vec() }
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }
}

/// The legal universal sequences of an instance, leaves in lexicographic
/// order of their move sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioTree {
    pub leaves: Vec<ScenarioHistory>,
}

impl ScenarioTree {
    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// Distinct history prefixes of the given length, lexicographically.
    pub fn prefixes(&self, len: usize) -> Vec<ScenarioHistory> {
        let mut out: Vec<ScenarioHistory> = Vec::new();
        for leaf in &self.leaves {
            let p = leaf.prefix(len);
            if out.last() != Some(&p) {
                out.push(p);
            }
        }
        out
    }
}

/// Enumerates the full tree of legal universal move sequences.
pub fn enumerate_scenarios(inst: &QipInstance, cap: u128) -> Result<ScenarioTree, DepError> {
    let forall_blocks: Vec<usize> = inst
        .blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| b.quantifier == Quantifier::ForAll)
        .map(|(i, _)| i)
        .collect();

    let mut values = vec![Rat::zero(); inst.num_vars()];
    let mut leaves = Vec::new();
    let mut current = ScenarioHistory::empty();
    walk(inst, &forall_blocks, 0, &mut values, &mut current, &mut leaves, cap)?;
    Ok(ScenarioTree { leaves })
}

fn walk(
    inst: &QipInstance,
    forall_blocks: &[usize],
    depth: usize,
    values: &mut Vec<Rat>,
    current: &mut ScenarioHistory,
    leaves: &mut Vec<ScenarioHistory>,
    cap: u128,
) -> Result<(), DepError> {
    if depth == forall_blocks.len() {
        if leaves.len() as u128 >= cap {
            return Err(DepError::ScenarioExplosion { cap });
        }
        leaves.push(current.clone());
        return Ok(());
    }
    let block = forall_blocks[depth];
    let moves = legal_universal_moves(inst, values, block)?;
    let vars = &inst.blocks[block].vars;
    for mv in moves {
        for (&v, &val) in vars.iter().zip(&mv) {
            values[v] = rat(val);
        }
        current.moves.push(mv);
        walk(inst, forall_blocks, depth + 1, values, current, leaves, cap)?;
        current.moves.pop();
    }
    Ok(())
}

/// Flat single-player minimization produced by the expansion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MipInstance {
    pub name: String,
    pub domains: Vec<VarDomain>,
    pub objective: BTreeMap<usize, Rat>,
    pub rows: Vec<LinConstraint>,
    /// Per flat variable: the original variable and the history prefix its
    /// copy belongs to; `None` for the epigraph variable.
    pub var_origin: Vec<Option<(usize, ScenarioHistory)>>,
    pub sense: ObjSense,
}

impl MipInstance {
    pub fn num_vars(&self) -> usize {
        self.domains.len()
    }

    /// View as a quantified instance with a single existential block.
    pub fn as_qip(&self) -> QipInstance {
        QipInstance {
            name: self.name.clone(),
            domains: self.domains.clone(),
            blocks: vec![QuantBlock::exists((0..self.domains.len()).collect())],
            objective: self.objective.clone(),
            existential_rows: self.rows.clone(),
            universal_rows: Vec::new(),
            sense: self.sense,
        }
    }

    /// Wraps an instance without universal blocks (identity origins).
    pub fn from_qip(inst: &QipInstance) -> Option<MipInstance> {
        if inst.blocks.iter().any(|b| b.quantifier == Quantifier::ForAll) {
            return None;
        }
        Some(MipInstance {
            name: inst.name.clone(),
            domains: inst.domains.clone(),
            objective: inst.objective.clone(),
            rows: inst.existential_rows.clone(),
            var_origin: (0..inst.num_vars())
                .map(|j| Some((j, ScenarioHistory::empty())))
                .collect(),
            sense: inst.sense,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlattenConfig {
    pub leaf_cap: u128,
}

impl Default for FlattenConfig {
    fn default() -> Self {
        FlattenConfig { leaf_cap: DEFAULT_LEAF_CAP }
    }
}

/// A linear expression over flat variables plus a constant.
#[derive(Debug, Clone, PartialEq, Eq)]
struct FlatExpr {
    coeffs: BTreeMap<usize, Rat>,
    constant: Rat,
}

impl FlatExpr {
    fn interval(&self, domains: &[VarDomain]) -> (Rat, Rat) {
        let mut lo = self.constant;
        let mut hi = self.constant;
        for (&j, c) in &self.coeffs {
            let (dl, du) = (rat(domains[j].lower), rat(domains[j].upper));
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

/// Flattens a quantified instance into its deterministic equivalent MIP.
/// The optimal value of the result equals the game value of the input.
pub fn flatten(inst: &QipInstance, cfg: &FlattenConfig) -> Result<MipInstance, DepError> {
    let tree = enumerate_scenarios(inst, cfg.leaf_cap)?;
    // Try with trailing elimination first; keep the copies as variables when
    // the instance falls outside the separable pattern.
    match build_flat(inst, &tree, true) {
        Some(mip) => Ok(mip),
        None => Ok(build_flat(inst, &tree, false).expect("plain expansion is total")),
    }
}

struct TrailingInfo {
    /// Trailing variables (in index order) eliminated from the flat model.
    eliminated: Vec<usize>,
    obj_coeff: Vec<Rat>,
    lower: Vec<Rat>,
    upper: Vec<Rat>,
    /// Original rows defining each trailing variable (coefficient -1).
    rows_of: Vec<Vec<usize>>,
    is_eliminated: Vec<bool>,
    /// Rows consumed by the elimination.
    row_consumed: Vec<bool>,
}

/// Detects the separable pattern: nonnegative objective coefficient and
/// appearances only in existential LE rows with coefficient -1, one trailing
/// variable per row.
fn trailing_info(inst: &QipInstance) -> Option<TrailingInfo> {
    let n = inst.num_vars();
    let is_trailing: Vec<bool> =
        inst.domains.iter().map(|d| d.kind == VarKind::TrailingContinuous).collect();
    let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut row_consumed = vec![false; inst.existential_rows.len()];

    for (r, row) in inst.existential_rows.iter().enumerate() {
        let touched: Vec<usize> =
            row.coeffs.keys().copied().filter(|&j| is_trailing[j]).collect();
        match touched.as_slice() {
            [] => {}
            [v] => {
                if row.sense != Sense::Le || row.coeffs[v] != rat(-1) {
                    return None;
                }
                rows_of[*v].push(r);
                row_consumed[r] = true;
            }
            _ => return None,
        }
    }

    let mut eliminated = Vec::new();
    let mut obj_coeff = vec![Rat::zero(); n];
    let mut lower = vec![Rat::zero(); n];
    let mut upper = vec![Rat::zero(); n];
    for j in 0..n {
        if !is_trailing[j] {
            continue;
        }
        let c = inst.objective.get(&j).copied().unwrap_or_else(Rat::zero);
        if c.is_negative() {
            return None;
        }
        eliminated.push(j);
        obj_coeff[j] = c;
        lower[j] = rat(inst.domains[j].lower);
        upper[j] = rat(inst.domains[j].upper);
    }

    Some(TrailingInfo {
        is_eliminated: is_trailing,
        eliminated,
        obj_coeff,
        lower,
        upper,
        rows_of,
        row_consumed,
    })
}

/// Returns `None` when elimination was requested but cannot be applied
/// exactly (the caller retries with `eliminate = false`).
fn build_flat(inst: &QipInstance, tree: &ScenarioTree, eliminate: bool) -> Option<MipInstance> {
    let n = inst.num_vars();
    let trailing = if eliminate { Some(trailing_info(inst)?) } else { None };
    let (is_eliminated, row_consumed) = match &trailing {
        Some(t) => (t.is_eliminated.clone(), t.row_consumed.clone()),
        None => (vec![false; n], vec![false; inst.existential_rows.len()]),
    };

    // Universal depth (number of universal blocks strictly before) per block.
    let var_block = inst.var_block();
    let mut udepth_of_block = Vec::with_capacity(inst.blocks.len());
    let mut seen_universal = 0usize;
    for b in &inst.blocks {
        udepth_of_block.push(seen_universal);
        if b.quantifier == Quantifier::ForAll {
            seen_universal += 1;
        }
    }

    // Flat variable layout: per existential block, per history prefix
    // (lexicographic), per variable.
    let mut domains: Vec<VarDomain> = Vec::new();
    let mut var_origin: Vec<Option<(usize, ScenarioHistory)>> = Vec::new();
    let mut copy_of: Vec<BTreeMap<ScenarioHistory, usize>> = vec![BTreeMap::new(); n];
    for (bi, block) in inst.blocks.iter().enumerate() {
        if block.quantifier != Quantifier::Exists {
            continue;
        }
        let depth = udepth_of_block[bi];
        for prefix in tree.prefixes(depth) {
            for &v in &block.vars {
                if is_eliminated[v] {
                    continue;
                }
                let flat = domains.len();
                domains.push(inst.domains[v]);
                var_origin.push(Some((v, prefix.clone())));
                copy_of[v].insert(prefix.clone(), flat);
            }
        }
    }

    // Epigraph variable spanning the objective range.
    let (obj_lo, obj_hi) = inst.objective_bounds();
    let epigraph = domains.len();
    domains.push(VarDomain::trailing_continuous(
        obj_lo.floor().to_integer() as i64,
        obj_hi.ceil().to_integer() as i64,
    ));
    var_origin.push(None);

    // Instantiates original coefficients at a leaf: existential variables map
    // to their history copies, universal variables to leaf constants.
    let universal_value = |leaf: &ScenarioHistory, var: usize| -> Rat {
        let b = var_block[var];
        let pos = inst.blocks[b].vars.iter().position(|&v| v == var).unwrap();
        rat(leaf.moves[udepth_of_block[b]][pos])
    };
    let substitute = |row_coeffs: &BTreeMap<usize, Rat>, leaf: &ScenarioHistory| -> FlatExpr {
        let mut coeffs: BTreeMap<usize, Rat> = BTreeMap::new();
        let mut constant = Rat::zero();
        for (&j, c) in row_coeffs {
            match inst.blocks[var_block[j]].quantifier {
                Quantifier::ForAll => constant += *c * universal_value(leaf, j),
                Quantifier::Exists => {
                    let depth = udepth_of_block[var_block[j]];
                    let flat = copy_of[j][&leaf.prefix(depth)];
                    *coeffs.entry(flat).or_insert_with(Rat::zero) += *c;
                }
            }
        }
        FlatExpr { coeffs, constant }
    };

    let mut rows: Vec<LinConstraint> = Vec::new();
    let mut seen_rows: HashSet<LinConstraint> = HashSet::new();
    let push_row =
        |rows: &mut Vec<LinConstraint>, seen: &mut HashSet<LinConstraint>, row: LinConstraint| {
            if seen.insert(row.clone()) {
                rows.push(row);
            }
        };

    // Structure rows: every original existential row not consumed by the
    // elimination, instantiated per leaf; interval-redundant rows dropped.
    for leaf in &tree.leaves {
        for (r, row) in inst.existential_rows.iter().enumerate() {
            if row_consumed[r] {
                continue;
            }
            let expr = substitute(&row.coeffs, leaf);
            let rhs = row.rhs - expr.constant;
            let (lo, hi) =
                FlatExpr { coeffs: expr.coeffs.clone(), constant: Rat::zero() }.interval(&domains);
            let redundant = match row.sense {
                Sense::Le => hi <= rhs,
                Sense::Eq => lo == rhs && hi == rhs,
            };
            if redundant {
                continue;
            }
            push_row(
                &mut rows,
                &mut seen_rows,
                LinConstraint::new(expr.coeffs, row.sense, rhs, Side::Existential),
            );
        }
    }

    // Worst-case epigraph rows: z ≥ objective at every leaf, with the
    // eliminated trailing variables replaced by their defining residuals.
    for leaf in &tree.leaves {
        // Objective terms over the surviving variables.
        let mut base = FlatExpr { coeffs: BTreeMap::new(), constant: Rat::zero() };
        for (&j, c) in &inst.objective {
            if is_eliminated[j] {
                continue;
            }
            match inst.blocks[var_block[j]].quantifier {
                Quantifier::ForAll => base.constant += *c * universal_value(leaf, j),
                Quantifier::Exists => {
                    let depth = udepth_of_block[var_block[j]];
                    let flat = copy_of[j][&leaf.prefix(depth)];
                    *base.coeffs.entry(flat).or_insert_with(Rat::zero) += *c;
                }
            }
        }

        // Options per eliminated variable: the non-dominated lower bounds
        // among {domain lower bound, row residuals at this leaf}.
        let mut option_sets: Vec<(Rat, Vec<FlatExpr>)> = Vec::new();
        if let Some(t) = &trailing {
            for &v in &t.eliminated {
                let mut residuals: Vec<FlatExpr> = Vec::new();
                for &r in &t.rows_of[v] {
                    let row = &inst.existential_rows[r];
                    let mut without: BTreeMap<usize, Rat> = row.coeffs.clone();
                    without.remove(&v);
                    let mut expr = substitute(&without, leaf);
                    expr.constant -= row.rhs; // v ≥ lhs - rhs
                    let (_, hi) = expr.interval(&domains);
                    if hi > t.upper[v] {
                        return None; // the domain cap could bind
                    }
                    if hi <= t.lower[v] {
                        continue; // dominated by the domain lower bound
                    }
                    residuals.push(expr);
                }
                let lb_dominated =
                    residuals.iter().any(|e| e.interval(&domains).0 >= t.lower[v]);
                if !lb_dominated || residuals.is_empty() {
                    residuals.push(FlatExpr { coeffs: BTreeMap::new(), constant: t.lower[v] });
                }
                option_sets.push((t.obj_coeff[v], residuals));
            }
        }

        let combos: usize = option_sets.iter().map(|(_, o)| o.len()).product();
        if combos > MAX_COMBOS_PER_LEAF {
            return None;
        }

        // One epigraph row per combination of active residuals.
        let mut stack = vec![base];
        for (c, options) in &option_sets {
            let mut next = Vec::with_capacity(stack.len() * options.len());
            for partial in &stack {
                for opt in options {
                    let mut e = partial.clone();
                    for (&j, oc) in &opt.coeffs {
                        *e.coeffs.entry(j).or_insert_with(Rat::zero) += *c * *oc;
                    }
                    e.constant += *c * opt.constant;
                    next.push(e);
                }
            }
            stack = next;
        }
        for expr in stack {
            // z ≥ expr  ⇔  expr - z ≤ -constant
            let mut coeffs = expr.coeffs;
            *coeffs.entry(epigraph).or_insert_with(Rat::zero) += rat(-1);
            let row = LinConstraint::new(coeffs, Sense::Le, -expr.constant, Side::Existential);
            let (_, hi) =
                FlatExpr { coeffs: row.coeffs.clone(), constant: Rat::zero() }.interval(&domains);
            if hi <= row.rhs {
                continue;
            }
            push_row(&mut rows, &mut seen_rows, row);
        }
    }

    let mut objective = BTreeMap::new();
    objective.insert(epigraph, rat(1));

    Some(MipInstance {
        name: inst.name.clone(),
        domains,
        objective,
        rows,
        var_origin,
        sense: inst.sense,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeffs(entries: &[(usize, i64)]) -> BTreeMap<usize, Rat> {
        entries.iter().map(|&(j, c)| (j, rat(c))).collect()
    }

    /// Toy with `periods` universal blocks of `n_scen` unit-vector scenarios.
    fn unit_scenario_instance(n_scen: i64, periods: usize) -> QipInstance {
        let mut domains = vec![VarDomain::binary()];
        let mut blocks = vec![QuantBlock::exists(vec![0])];
        let mut universal_rows = Vec::new();
        for _ in 0..periods {
            let start = domains.len();
            for _ in 0..n_scen {
                domains.push(VarDomain::binary());
            }
            blocks.push(QuantBlock::forall((start..start + n_scen as usize).collect()));
            universal_rows.push(LinConstraint::eq(
                (start..start + n_scen as usize).map(|j| (j, rat(1))).collect(),
                rat(1),
                Side::Universal,
            ));
            let x = domains.len();
            domains.push(VarDomain::binary());
            blocks.push(QuantBlock::exists(vec![x]));
        }
        QipInstance {
            name: "unit-scen".into(),
            domains,
            blocks,
            objective: coeffs(&[(0, 1)]),
            existential_rows: vec![],
            universal_rows,
            sense: ObjSense::Minimize,
        }
    }

    #[test]
    fn leaf_count_is_scenarios_to_the_periods() {
        let inst = unit_scenario_instance(4, 2);
        let tree = enumerate_scenarios(&inst, DEFAULT_LEAF_CAP).unwrap();
        assert_eq!(tree.leaf_count(), 16);
    }

    #[test]
    fn explosion_respects_the_cap() {
        let inst = unit_scenario_instance(4, 2);
        assert_eq!(
            enumerate_scenarios(&inst, 10).unwrap_err(),
            DepError::ScenarioExplosion { cap: 10 }
        );
    }

    #[test]
    fn history_prefix_selects_subsequence() {
        let r = ScenarioHistory {
            moves: vec![vec![1], vec![4], vec![2], vec![3], vec![1], vec![1]],
        };
        assert_eq!(r.prefix(4).moves, vec![vec![1], vec![4], vec![2], vec![3]]);
        assert_eq!(r.moves[3], vec![3]);
    }

    #[test]
    fn shared_prefixes_share_copies() {
        let inst = unit_scenario_instance(2, 2);
        let mip = flatten(&inst, &FlattenConfig::default()).unwrap();
        // Variable 3 is the stage-1 recourse: copies keyed by the period-1
        // move only, shared across both period-2 scenarios.
        let mut by_prefix: BTreeMap<ScenarioHistory, Vec<usize>> = BTreeMap::new();
        for (flat, origin) in mip.var_origin.iter().enumerate() {
            if let Some((orig, hist)) = origin {
                if *orig == 3 {
                    by_prefix.entry(hist.clone()).or_default().push(flat);
                }
            }
        }
        assert_eq!(by_prefix.len(), 2);
        for copies in by_prefix.values() {
            assert_eq!(copies.len(), 1);
        }
    }

    #[test]
    fn origin_is_injective_per_variable_and_history() {
        let inst = unit_scenario_instance(3, 2);
        let mip = flatten(&inst, &FlattenConfig::default()).unwrap();
        let mut seen = HashSet::new();
        for origin in mip.var_origin.iter().flatten() {
            assert!(seen.insert(origin.clone()), "duplicate origin {origin:?}");
        }
    }

    #[test]
    fn single_leaf_instance_keeps_rows() {
        // No universal blocks: flatten is the identity up to the epigraph.
        let inst = QipInstance {
            name: "plain".into(),
            domains: vec![VarDomain::binary(), VarDomain::binary()],
            blocks: vec![QuantBlock::exists(vec![0, 1])],
            objective: coeffs(&[(0, 2), (1, 3)]),
            existential_rows: vec![LinConstraint::le(
                coeffs(&[(0, 1), (1, 1)]),
                rat(1),
                Side::Existential,
            )],
            universal_rows: vec![],
            sense: ObjSense::Minimize,
        };
        let mip = flatten(&inst, &FlattenConfig::default()).unwrap();
        assert_eq!(mip.num_vars(), 3);
        assert_eq!(mip.rows.len(), 2); // structure row + one epigraph row
    }
}

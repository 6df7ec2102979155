//! Alpha-beta minimax solver for quantified integer programs.
//!
//! The game value of an instance is the nested min/max over integer block
//! assignments: the existential player minimizes, the universal player
//! maximizes, and a play violating the existential constraint system pays
//! `+∞`. Universal moves are restricted to assignments that violate no
//! universal row decidable at assignment time (the immediate-violation
//! legality rule, a hard precondition on supported instances).
//!
//! [`solve`] walks the tree existential-variable-wise and universal-block-
//! wise, pruning with alpha-beta windows and with interval bound propagation
//! from [`crate::relax`]. [`oracle_solve`] is a deliberately independent
//! exhaustive minimax with no pruning and no bounding, used as a correctness
//! oracle; the two share only the move-legality and payoff definitions.
//!
//! A solve call is single-threaded and self-contained; concurrent calls on
//! shared instances are safe.

use std::time::Instant;

use crate::model::{QipInstance, Quantifier, Sense, VarKind};
use crate::rational::{rat, Bound, GameValue, Rat, Signed, Zero};
use crate::relax::{optimistic_value, BoundsState, OptSense, Propagator};

/// Exhaustive search refuses game trees with more than this many leaves.
pub const ORACLE_LEAF_GUARD: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveOrdering {
    /// Children in ascending domain order; universal moves lexicographic.
    DomainAscending,
    /// Existential children by ascending immediate objective contribution,
    /// universal children by descending contribution (principal variation
    /// first). Ties keep the lexicographic order.
    ObjectiveGuided,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchConfig {
    pub time_limit_ms: u64,
    pub move_ordering: MoveOrdering,
    pub bounds_enabled: bool,
    pub node_limit: Option<u64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            time_limit_ms: 1_800_000,
            move_ordering: MoveOrdering::ObjectiveGuided,
            bounds_enabled: true,
            node_limit: None,
        }
    }
}

impl SearchConfig {
    pub fn with_time_limit_ms(ms: u64) -> Self {
        SearchConfig { time_limit_ms: ms, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Game value; on `TimeLimit` the best proven first-stage value so far,
    /// absent when nothing was proven.
    pub value: Option<GameValue>,
    /// Assignment of the integer variables of the first block, present iff
    /// `Optimal`. Lexicographically smallest among the optimal ones.
    pub first_stage: Option<Vec<i64>>,
    pub nodes: u64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolveError {
    #[error("trailing variable {var} outside the separable pattern: {reason}")]
    NonSeparable { var: usize, reason: String },
    #[error("model contract violated: {0}")]
    ModelContract(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("game tree bound {leaves} exceeds the exhaustive-search guard {guard}")]
    TreeTooLarge { leaves: u128, guard: u128 },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Outcome of closed-form resolution of the trailing continuous variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrailingOutcome {
    Feasible {
        /// Summed objective contribution of the resolved variables.
        contribution: Rat,
        /// Resolved value per trailing variable.
        values: Vec<(usize, Rat)>,
    },
    Infeasible,
}

// ---------------------------------------------------------------------------
// Trailing continuous variables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub(crate) struct TrailingVarPlan {
    pub(crate) var: usize,
    pub(crate) obj_coeff: Rat,
    pub(crate) lower: Rat,
    pub(crate) upper: Rat,
    pub(crate) rows: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct TrailingPlan {
    pub(crate) vars: Vec<TrailingVarPlan>,
    pub(crate) is_trailing: Vec<bool>,
    /// Existential rows touching no trailing variable.
    pub(crate) plain_rows: Vec<usize>,
}

/// The supported pattern: every trailing variable has a nonnegative objective
/// coefficient and appears in existential LE rows only, with coefficient -1.
pub(crate) fn build_trailing_plan(inst: &QipInstance) -> Result<TrailingPlan, SolveError> {
    let n = inst.num_vars();
    let is_trailing: Vec<bool> =
        inst.domains.iter().map(|d| d.kind == VarKind::TrailingContinuous).collect();

    let mut vars = Vec::new();
    let mut row_map: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut plain_rows = Vec::new();

    for (r, row) in inst.existential_rows.iter().enumerate() {
        let touched: Vec<usize> =
            row.coeffs.keys().copied().filter(|&j| is_trailing[j]).collect();
        match touched.as_slice() {
            [] => plain_rows.push(r),
            [v] => {
                if row.sense != Sense::Le {
                    return Err(SolveError::NonSeparable {
                        var: *v,
                        reason: format!("appears in equality row {r}"),
                    });
                }
                if row.coeffs[v] != rat(-1) {
                    return Err(SolveError::NonSeparable {
                        var: *v,
                        reason: format!("coefficient in row {r} is {} (expected -1)", row.coeffs[v]),
                    });
                }
                row_map[*v].push(r);
            }
            more => {
                return Err(SolveError::NonSeparable {
                    var: more[1],
                    reason: format!("row {r} touches several trailing variables"),
                })
            }
        }
    }

    for (v, trailing) in is_trailing.iter().enumerate() {
        if !*trailing {
            continue;
        }
        let obj_coeff = inst.objective.get(&v).copied().unwrap_or_else(Rat::zero);
        if obj_coeff.is_negative() {
            return Err(SolveError::NonSeparable {
                var: v,
                reason: format!("negative objective coefficient {obj_coeff}"),
            });
        }
        vars.push(TrailingVarPlan {
            var: v,
            obj_coeff,
            lower: rat(inst.domains[v].lower),
            upper: rat(inst.domains[v].upper),
            rows: std::mem::take(&mut row_map[v]),
        });
    }

    Ok(TrailingPlan { vars, is_trailing, plain_rows })
}

/// Resolves the trailing continuous variables of a play in closed form: each
/// is set to `max(domain lower bound, max over its rows of the row residual)`.
/// All integer variables must be assigned in `values`; trailing entries are
/// ignored. `Infeasible` when a resolved value exceeds its upper bound.
pub fn resolve_trailing(inst: &QipInstance, values: &[Rat]) -> Result<TrailingOutcome, SolveError> {
    let plan = build_trailing_plan(inst)?;
    let residual = |r: usize| -> Rat {
        let row = &inst.existential_rows[r];
        let lhs: Rat = row
            .coeffs
            .iter()
            .filter(|(&j, _)| !plan.is_trailing[j])
            .map(|(&j, c)| *c * values[j])
            .sum();
        lhs - row.rhs
    };
    Ok(resolve_with(&plan, residual))
}

pub(crate) fn resolve_with(plan: &TrailingPlan, residual: impl Fn(usize) -> Rat) -> TrailingOutcome {
    let mut contribution = Rat::zero();
    let mut out = Vec::with_capacity(plan.vars.len());
    for tv in &plan.vars {
        let mut v = tv.lower;
        for &r in &tv.rows {
            let res = residual(r);
            if res > v {
                v = res;
            }
        }
        if v > tv.upper {
            return TrailingOutcome::Infeasible;
        }
        contribution += tv.obj_coeff * v;
        out.push((tv.var, v));
    }
    TrailingOutcome::Feasible { contribution, values: out }
}

// ---------------------------------------------------------------------------
// Universal move legality
// ---------------------------------------------------------------------------

/// Enumerates, in lexicographic order, the assignments of the given universal
/// block that violate no universal row whose variables are all assigned once
/// the block is set. `values` must assign every variable of earlier blocks;
/// later entries are ignored. Instances without universal rows get the full
/// box. An empty result breaks the nonempty-uncertainty-set contract and is
/// reported as an error.
pub fn legal_universal_moves(
    inst: &QipInstance,
    values: &[Rat],
    block: usize,
) -> Result<Vec<Vec<i64>>, SolveError> {
    let b = &inst.blocks[block];
    if b.quantifier != Quantifier::ForAll {
        return Err(SolveError::ModelContract(format!("block {block} is not universal")));
    }

    // Variables assigned before this block, plus position of block variables.
    let mut pos_in_block = vec![usize::MAX; inst.num_vars()];
    for (p, &v) in b.vars.iter().enumerate() {
        pos_in_block[v] = p;
    }
    let mut assigned = vec![false; inst.num_vars()];
    for earlier in &inst.blocks[..block] {
        for &v in &earlier.vars {
            assigned[v] = true;
        }
    }

    // Rows decidable once this block is set, split into a base from assigned
    // variables and in-block terms.
    struct CheckRow {
        base: Rat,
        terms: Vec<(usize, Rat)>, // (position in block, coefficient)
        sense: Sense,
        rhs: Rat,
    }
    let mut check_rows: Vec<CheckRow> = Vec::new();
    'rows: for row in &inst.universal_rows {
        let mut base = Rat::zero();
        let mut terms = Vec::new();
        for (&j, c) in &row.coeffs {
            if pos_in_block[j] != usize::MAX {
                terms.push((pos_in_block[j], *c));
            } else if assigned[j] {
                base += *c * values[j];
            } else {
                continue 'rows; // touches a later block; not decidable yet
            }
        }
        check_rows.push(CheckRow { base, terms, sense: row.sense, rhs: row.rhs });
    }

    // Interval contribution of the block suffix starting at each position.
    let k = b.vars.len();
    let dom: Vec<(i64, i64)> =
        b.vars.iter().map(|&v| (inst.domains[v].lower, inst.domains[v].upper)).collect();
    let suffix_bounds: Vec<Vec<(Rat, Rat)>> = check_rows
        .iter()
        .map(|cr| {
            let mut out = vec![(Rat::zero(), Rat::zero()); k + 1];
            for p in (0..k).rev() {
                let (mut lo, mut hi) = out[p + 1];
                if let Some(&(_, c)) = cr.terms.iter().find(|&&(tp, _)| tp == p) {
                    let (dl, du) = (rat(dom[p].0), rat(dom[p].1));
                    if c.is_positive() {
                        lo += c * dl;
                        hi += c * du;
                    } else {
                        lo += c * du;
                        hi += c * dl;
                    }
                }
                out[p] = (lo, hi);
            }
            out
        })
        .collect();

    let mut moves = Vec::new();
    let mut current = vec![0i64; k];
    let mut accs: Vec<Rat> = check_rows.iter().map(|cr| cr.base).collect();

    fn dfs(
        pos: usize,
        k: usize,
        dom: &[(i64, i64)],
        check_rows: &[(Sense, Rat, Vec<(usize, Rat)>)],
        suffix_bounds: &[Vec<(Rat, Rat)>],
        accs: &mut Vec<Rat>,
        current: &mut Vec<i64>,
        moves: &mut Vec<Vec<i64>>,
    ) {
        if pos == k {
            moves.push(current.clone());
            return;
        }
        for v in dom[pos].0..=dom[pos].1 {
            current[pos] = v;
            let mut deltas = Vec::with_capacity(check_rows.len());
            let mut ok = true;
            for (i, (sense, rhs, terms)) in check_rows.iter().enumerate() {
                let delta = terms
                    .iter()
                    .find(|&&(tp, _)| tp == pos)
                    .map(|&(_, c)| c * rat(v))
                    .unwrap_or_else(Rat::zero);
                let acc = accs[i] + delta;
                let (lo, hi) = suffix_bounds[i][pos + 1];
                let feasible = match sense {
                    Sense::Le => acc + lo <= *rhs,
                    Sense::Eq => acc + lo <= *rhs && acc + hi >= *rhs,
                };
                if !feasible {
                    ok = false;
                    deltas.push(delta);
                    break;
                }
                deltas.push(delta);
            }
            if ok {
                for (i, d) in deltas.iter().enumerate() {
                    accs[i] += *d;
                }
                dfs(pos + 1, k, dom, check_rows, suffix_bounds, accs, current, moves);
                for (i, d) in deltas.iter().enumerate() {
                    accs[i] -= *d;
                }
            }
        }
    }

    let rows_flat: Vec<(Sense, Rat, Vec<(usize, Rat)>)> =
        check_rows.iter().map(|cr| (cr.sense, cr.rhs, cr.terms.clone())).collect();
    dfs(0, k, &dom, &rows_flat, &suffix_bounds, &mut accs, &mut current, &mut moves);

    if moves.is_empty() {
        return Err(SolveError::ModelContract(format!(
            "universal block {block} has no legal move under the given prefix"
        )));
    }
    Ok(moves)
}

// ---------------------------------------------------------------------------
// Shared assignment cursor
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
enum Level {
    Exist { var: usize },
    Forall { block: usize },
}

/// Assignment state shared by the alpha-beta engine, the exhaustive oracle
/// and strategy extraction: incremental row activities and objective, leaf
/// payoff evaluation, legality queries. Contains no pruning logic.
struct Cursor<'a> {
    inst: &'a QipInstance,
    levels: Vec<Level>,
    /// Number of leading levels that branch block-1 integer variables.
    first_len: usize,
    obj: Vec<Rat>,
    occ: Vec<Vec<(usize, Rat)>>,
    plan: TrailingPlan,
    values: Vec<Rat>,
    assigned: Vec<bool>,
    activity: Vec<Rat>,
    obj_acc: Rat,
}

impl<'a> Cursor<'a> {
    fn new(inst: &'a QipInstance) -> Result<Self, SolveError> {
        let n = inst.num_vars();
        let plan = build_trailing_plan(inst)?;

        let mut levels = Vec::new();
        for (bi, block) in inst.blocks.iter().enumerate() {
            match block.quantifier {
                Quantifier::Exists => {
                    for &v in &block.vars {
                        if inst.domains[v].kind == VarKind::Integer {
                            levels.push(Level::Exist { var: v });
                        }
                    }
                }
                Quantifier::ForAll => levels.push(Level::Forall { block: bi }),
            }
        }
        let first_len = inst
            .blocks
            .first()
            .map(|b| b.vars.iter().filter(|&&v| inst.domains[v].kind == VarKind::Integer).count())
            .unwrap_or(0);

        let mut obj = vec![Rat::zero(); n];
        for (&j, c) in &inst.objective {
            obj[j] = *c;
        }
        let mut occ: Vec<Vec<(usize, Rat)>> = vec![Vec::new(); n];
        for (r, row) in inst.existential_rows.iter().enumerate() {
            for (&j, c) in &row.coeffs {
                if !plan.is_trailing[j] {
                    occ[j].push((r, *c));
                }
            }
        }

        Ok(Cursor {
            inst,
            levels,
            first_len,
            obj,
            occ,
            plan,
            values: vec![Rat::zero(); n],
            assigned: vec![false; n],
            activity: vec![Rat::zero(); inst.existential_rows.len()],
            obj_acc: Rat::zero(),
        })
    }

    fn apply(&mut self, var: usize, val: i64) {
        let v = rat(val);
        self.values[var] = v;
        self.assigned[var] = true;
        for &(r, c) in &self.occ[var] {
            self.activity[r] += c * v;
        }
        self.obj_acc += self.obj[var] * v;
    }

    fn undo(&mut self, var: usize, val: i64) {
        let v = rat(val);
        self.assigned[var] = false;
        for &(r, c) in &self.occ[var] {
            self.activity[r] -= c * v;
        }
        self.obj_acc -= self.obj[var] * v;
    }

    fn apply_move(&mut self, block: usize, mv: &[i64]) {
        let inst = self.inst;
        for (&var, &val) in inst.blocks[block].vars.iter().zip(mv) {
            self.apply(var, val);
        }
    }

    fn undo_move(&mut self, block: usize, mv: &[i64]) {
        let inst = self.inst;
        for (&var, &val) in inst.blocks[block].vars.iter().zip(mv) {
            self.undo(var, val);
        }
    }

    fn legal_moves(&self, block: usize) -> Result<Vec<Vec<i64>>, SolveError> {
        legal_universal_moves(self.inst, &self.values, block)
    }

    /// Payoff once every integer variable is assigned.
    fn leaf_value(&self) -> GameValue {
        for &r in &self.plan.plain_rows {
            let row = &self.inst.existential_rows[r];
            let ok = match row.sense {
                Sense::Le => self.activity[r] <= row.rhs,
                Sense::Eq => self.activity[r] == row.rhs,
            };
            if !ok {
                return GameValue::Infinite;
            }
        }
        match resolve_with(&self.plan, |r| self.activity[r] - self.inst.existential_rows[r].rhs) {
            TrailingOutcome::Feasible { contribution, .. } => {
                GameValue::Finite(self.obj_acc + contribution)
            }
            TrailingOutcome::Infeasible => GameValue::Infinite,
        }
    }

    /// Leaf payoff plus the resolved trailing values (for play extraction).
    fn leaf_value_and_trailing(&self) -> (GameValue, Vec<(usize, Rat)>) {
        for &r in &self.plan.plain_rows {
            let row = &self.inst.existential_rows[r];
            let ok = match row.sense {
                Sense::Le => self.activity[r] <= row.rhs,
                Sense::Eq => self.activity[r] == row.rhs,
            };
            if !ok {
                return (GameValue::Infinite, Vec::new());
            }
        }
        match resolve_with(&self.plan, |r| self.activity[r] - self.inst.existential_rows[r].rhs) {
            TrailingOutcome::Feasible { contribution, values } => {
                (GameValue::Finite(self.obj_acc + contribution), values)
            }
            TrailingOutcome::Infeasible => (GameValue::Infinite, Vec::new()),
        }
    }

    /// Ascending domain values of an existential variable.
    fn domain_values(&self, var: usize) -> std::ops::RangeInclusive<i64> {
        self.inst.domains[var].lower..=self.inst.domains[var].upper
    }
}

// ---------------------------------------------------------------------------
// Alpha-beta engine
// ---------------------------------------------------------------------------

enum Stop {
    Interrupted,
    Model(SolveError),
}

struct Engine<'a> {
    cur: Cursor<'a>,
    cfg: &'a SearchConfig,
    nodes: u64,
    deadline: Instant,
    interrupted: bool,
    propagator: Propagator,
    state: BoundsState,
    objective_entries: Vec<(usize, Rat)>,
}

impl<'a> Engine<'a> {
    fn new(inst: &'a QipInstance, cfg: &'a SearchConfig, started: Instant) -> Result<Self, SolveError> {
        let cur = Cursor::new(inst)?;
        let propagator = Propagator::new(&inst.existential_rows, inst.num_vars());
        let state = BoundsState::from_domains(&inst.domains);
        let objective_entries: Vec<(usize, Rat)> =
            inst.objective.iter().map(|(&j, c)| (j, *c)).collect();
        Ok(Engine {
            cur,
            cfg,
            nodes: 0,
            deadline: started + std::time::Duration::from_millis(cfg.time_limit_ms),
            interrupted: false,
            propagator,
            state,
            objective_entries,
        })
    }

    fn tick(&mut self) -> Result<(), Stop> {
        self.nodes += 1;
        if let Some(limit) = self.cfg.node_limit {
            if self.nodes > limit {
                self.interrupted = true;
            }
        }
        if self.nodes & 1023 == 0 && Instant::now() >= self.deadline {
            self.interrupted = true;
        }
        if self.interrupted {
            Err(Stop::Interrupted)
        } else {
            Ok(())
        }
    }

    /// Propagates the current partial assignment. Returns `None` when no
    /// completion satisfies the existential rows (subtree value `+∞`),
    /// otherwise the admissible optimistic value of the subtree.
    fn bound_current(&mut self) -> Option<Rat> {
        self.state.reset(&self.cur.inst.domains);
        for (v, assigned) in self.cur.assigned.iter().enumerate() {
            if *assigned {
                self.state.fix(v, self.cur.values[v]);
            }
        }
        if !self.propagator.run(&self.cur.inst.existential_rows, &mut self.state, None) {
            return None;
        }
        Some(optimistic_value(
            self.objective_entries.iter().map(|(j, c)| (j, c)),
            &self.state,
            OptSense::Min,
        ))
    }

    /// Existential value candidates for `var`, honoring move ordering.
    /// `lex_only` forces ascending order (first-block tie-breaking).
    fn exist_values(&self, var: usize, window: Option<(i64, i64)>, lex_only: bool) -> Vec<i64> {
        let (lo, hi) = window.unwrap_or((self.cur.inst.domains[var].lower, self.cur.inst.domains[var].upper));
        let mut vals: Vec<i64> = (lo..=hi).collect();
        if !lex_only
            && self.cfg.move_ordering == MoveOrdering::ObjectiveGuided
            && self.cur.obj[var].is_negative()
        {
            vals.reverse(); // ascending c·v
        }
        vals
    }

    fn order_universal(&self, block: usize, moves: &mut Vec<Vec<i64>>) {
        if self.cfg.move_ordering == MoveOrdering::ObjectiveGuided {
            let vars = &self.cur.inst.blocks[block].vars;
            moves.sort_by_key(|mv| {
                let contribution: Rat =
                    vars.iter().zip(mv).map(|(&v, &val)| self.cur.obj[v] * rat(val)).sum();
                std::cmp::Reverse(contribution)
            });
        }
    }

    fn visit(&mut self, depth: usize, alpha: Bound, beta: Bound) -> Result<GameValue, Stop> {
        self.tick()?;

        let mut window = None;
        if self.cfg.bounds_enabled {
            match self.bound_current() {
                None => return Ok(GameValue::Infinite),
                Some(lower) => {
                    if Bound::Finite(lower) >= beta {
                        return Ok(GameValue::Finite(lower));
                    }
                    if let Some(Level::Exist { var }) = self.cur.levels.get(depth) {
                        // propagated bounds of integer vars are integral
                        window = Some((
                            self.state.lower[*var].to_integer() as i64,
                            self.state.upper[*var].to_integer() as i64,
                        ));
                    }
                }
            }
        }

        if depth == self.cur.levels.len() {
            return Ok(self.cur.leaf_value());
        }

        match self.cur.levels[depth] {
            Level::Exist { var } => {
                let vals = self.exist_values(var, window, false);
                let mut best = GameValue::Infinite;
                let mut beta_local = beta;
                for v in vals {
                    self.cur.apply(var, v);
                    let r = self.visit(depth + 1, alpha, beta_local);
                    self.cur.undo(var, v);
                    let r = r?;
                    if r < best {
                        best = r;
                        beta_local = beta_local.min(Bound::from(r));
                    }
                    if Bound::from(best) <= alpha {
                        break;
                    }
                }
                Ok(best)
            }
            Level::Forall { block } => {
                let mut moves = self.cur.legal_moves(block).map_err(Stop::Model)?;
                self.order_universal(block, &mut moves);
                let mut best: Option<GameValue> = None;
                let mut alpha_local = alpha;
                for mv in &moves {
                    self.cur.apply_move(block, mv);
                    let r = self.visit(depth + 1, alpha_local, beta);
                    self.cur.undo_move(block, mv);
                    let r = r?;
                    if best.is_none_or(|b| r > b) {
                        best = Some(r);
                        alpha_local = alpha_local.max(Bound::from(r));
                    }
                    if Bound::from(best.unwrap()) >= beta {
                        break;
                    }
                }
                Ok(best.expect("universal block has at least one legal move"))
            }
        }
    }

    /// Depth-first walk of the first-block variables in lexicographic order
    /// with strict improvement, so the reported first stage is the
    /// lexicographically smallest optimal one.
    fn first_block(
        &mut self,
        idx: usize,
        prefix: &mut Vec<i64>,
        best: &mut GameValue,
        best_pv: &mut Option<Vec<i64>>,
    ) -> Result<(), Stop> {
        self.tick()?;

        let mut window = None;
        if self.cfg.bounds_enabled {
            match self.bound_current() {
                None => return Ok(()),
                Some(lower) => {
                    if Bound::Finite(lower) >= Bound::from(*best) {
                        return Ok(());
                    }
                    if let Level::Exist { var } = self.cur.levels[idx] {
                        window = Some((
                            self.state.lower[var].to_integer() as i64,
                            self.state.upper[var].to_integer() as i64,
                        ));
                    }
                }
            }
        }

        let Level::Exist { var } = self.cur.levels[idx] else {
            unreachable!("first block is existential");
        };
        for v in self.exist_values(var, window, true) {
            self.cur.apply(var, v);
            prefix.push(v);
            let outcome = if idx + 1 == self.cur.first_len {
                match self.visit(idx + 1, Bound::NegInf, Bound::from(*best)) {
                    Ok(r) => {
                        if r < *best {
                            *best = r;
                            *best_pv = Some(prefix.clone());
                        }
                        Ok(())
                    }
                    Err(e) => Err(e),
                }
            } else {
                self.first_block(idx + 1, prefix, best, best_pv)
            };
            prefix.pop();
            self.cur.undo(var, v);
            outcome?;
        }
        Ok(())
    }
}

/// Computes the optimal worst-case value and first-stage assignment of the
/// instance by alpha-beta search. Deterministic given `(instance, config)`.
pub fn solve(inst: &QipInstance, cfg: &SearchConfig) -> Result<SolveResult, SolveError> {
    let started = Instant::now();
    let mut engine = Engine::new(inst, cfg, started)?;

    let mut best = GameValue::Infinite;
    let mut best_pv: Option<Vec<i64>> = None;
    let outcome = if engine.cur.first_len == 0 {
        match engine.visit(0, Bound::NegInf, Bound::PosInf) {
            Ok(r) => {
                best = r;
                if r.is_finite() {
                    best_pv = Some(Vec::new());
                }
                Ok(())
            }
            Err(e) => Err(e),
        }
    } else {
        let mut prefix = Vec::new();
        engine.first_block(0, &mut prefix, &mut best, &mut best_pv)
    };

    let elapsed_ms = started.elapsed().as_millis() as u64;
    let nodes = engine.nodes;
    match outcome {
        Err(Stop::Model(e)) => Err(e),
        Err(Stop::Interrupted) => Ok(SolveResult {
            status: SolveStatus::TimeLimit,
            value: best_pv.as_ref().map(|_| best),
            first_stage: None,
            nodes,
            elapsed_ms,
        }),
        Ok(()) => {
            if best == GameValue::Infinite {
                Ok(SolveResult {
                    status: SolveStatus::Infeasible,
                    value: Some(GameValue::Infinite),
                    first_stage: None,
                    nodes,
                    elapsed_ms,
                })
            } else {
                Ok(SolveResult {
                    status: SolveStatus::Optimal,
                    value: Some(best),
                    first_stage: Some(best_pv.unwrap_or_default()),
                    nodes,
                    elapsed_ms,
                })
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Exhaustive oracle
// ---------------------------------------------------------------------------

struct OracleEngine<'a> {
    cur: Cursor<'a>,
    nodes: u64,
}

impl<'a> OracleEngine<'a> {
    fn minimax(&mut self, depth: usize) -> Result<GameValue, SolveError> {
        self.nodes += 1;
        if depth == self.cur.levels.len() {
            return Ok(self.cur.leaf_value());
        }
        match self.cur.levels[depth] {
            Level::Exist { var } => {
                let mut best = GameValue::Infinite;
                for v in self.cur.domain_values(var) {
                    self.cur.apply(var, v);
                    let r = self.minimax(depth + 1);
                    self.cur.undo(var, v);
                    let r = r?;
                    if r < best {
                        best = r;
                    }
                }
                Ok(best)
            }
            Level::Forall { block } => {
                let moves = self.cur.legal_moves(block)?;
                let mut best: Option<GameValue> = None;
                for mv in &moves {
                    self.cur.apply_move(block, mv);
                    let r = self.minimax(depth + 1);
                    self.cur.undo_move(block, mv);
                    let r = r?;
                    if best.is_none_or(|b| r > b) {
                        best = Some(r);
                    }
                }
                Ok(best.expect("universal block has at least one legal move"))
            }
        }
    }

    fn first_block(
        &mut self,
        idx: usize,
        prefix: &mut Vec<i64>,
        best: &mut GameValue,
        best_pv: &mut Option<Vec<i64>>,
    ) -> Result<(), SolveError> {
        self.nodes += 1;
        let Level::Exist { var } = self.cur.levels[idx] else {
            unreachable!("first block is existential");
        };
        for v in self.cur.domain_values(var) {
            self.cur.apply(var, v);
            prefix.push(v);
            let outcome = if idx + 1 == self.cur.first_len {
                self.minimax(idx + 1).map(|r| {
                    if r < *best {
                        *best = r;
                        *best_pv = Some(prefix.clone());
                    }
                })
            } else {
                self.first_block(idx + 1, prefix, best, best_pv)
            };
            prefix.pop();
            self.cur.undo(var, v);
            outcome?;
        }
        Ok(())
    }
}

/// Exhaustive minimax with no pruning and no bounding: enumerates every play
/// (universal moves restricted to legal ones) and returns the exact game
/// value. Independent correctness oracle for [`solve`].
pub fn oracle_solve(inst: &QipInstance) -> Result<SolveResult, OracleError> {
    let leaves = inst.leaf_bound();
    if leaves > ORACLE_LEAF_GUARD {
        return Err(OracleError::TreeTooLarge { leaves, guard: ORACLE_LEAF_GUARD });
    }
    let started = Instant::now();
    let cur = Cursor::new(inst)?;
    let mut engine = OracleEngine { cur, nodes: 0 };

    let mut best = GameValue::Infinite;
    let mut best_pv: Option<Vec<i64>> = None;
    if engine.cur.first_len == 0 {
        best = engine.minimax(0)?;
        if best.is_finite() {
            best_pv = Some(Vec::new());
        }
    } else {
        let mut prefix = Vec::new();
        engine.first_block(0, &mut prefix, &mut best, &mut best_pv)?;
    }

    let elapsed_ms = started.elapsed().as_millis() as u64;
    if best == GameValue::Infinite {
        Ok(SolveResult {
            status: SolveStatus::Infeasible,
            value: Some(GameValue::Infinite),
            first_stage: None,
            nodes: engine.nodes,
            elapsed_ms,
        })
    } else {
        Ok(SolveResult {
            status: SolveStatus::Optimal,
            value: Some(best),
            first_stage: Some(best_pv.unwrap_or_default()),
            nodes: engine.nodes,
            elapsed_ms,
        })
    }
}

// ---------------------------------------------------------------------------
// Strategy extraction (verification support)
// ---------------------------------------------------------------------------

/// Leaf plays of the optimal strategy: existential choices follow the
/// lexicographically-first optimum, universal nodes branch over every legal
/// move. Complete assignments including resolved trailing values. Intended
/// for verification on small instances; guarded like [`oracle_solve`].
pub fn optimal_plays(inst: &QipInstance) -> Result<(GameValue, Vec<Vec<Rat>>), OracleError> {
    let leaves = inst.leaf_bound();
    if leaves > ORACLE_LEAF_GUARD {
        return Err(OracleError::TreeTooLarge { leaves, guard: ORACLE_LEAF_GUARD });
    }
    let mut cur = Cursor::new(inst)?;
    let (value, plays) = strategy(&mut cur, 0)?;
    Ok((value, plays))
}

fn strategy(cur: &mut Cursor, depth: usize) -> Result<(GameValue, Vec<Vec<Rat>>), SolveError> {
    if depth == cur.levels.len() {
        let (value, trailing) = cur.leaf_value_and_trailing();
        if value == GameValue::Infinite {
            return Ok((value, Vec::new()));
        }
        let mut play = cur.values.clone();
        for (v, val) in trailing {
            play[v] = val;
        }
        return Ok((value, vec![play]));
    }
    match cur.levels[depth] {
        Level::Exist { var } => {
            let mut best = GameValue::Infinite;
            let mut best_plays = Vec::new();
            for v in cur.domain_values(var) {
                cur.apply(var, v);
                let r = strategy(cur, depth + 1);
                cur.undo(var, v);
                let (value, plays) = r?;
                if value < best {
                    best = value;
                    best_plays = plays;
                }
            }
            Ok((best, best_plays))
        }
        Level::Forall { block } => {
            let moves = cur.legal_moves(block)?;
            let mut best: Option<GameValue> = None;
            let mut all_plays = Vec::new();
            for mv in &moves {
                cur.apply_move(block, mv);
                let r = strategy(cur, depth + 1);
                cur.undo_move(block, mv);
                let (value, mut plays) = r?;
                all_plays.append(&mut plays);
                if best.is_none_or(|b| value > b) {
                    best = Some(value);
                }
            }
            let best = best.expect("universal block has at least one legal move");
            if best == GameValue::Infinite {
                Ok((best, Vec::new()))
            } else {
                Ok((best, all_plays))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinConstraint, ObjSense, QuantBlock, Side, VarDomain};
    use std::collections::BTreeMap;

    fn coeffs(entries: &[(usize, i64)]) -> BTreeMap<usize, Rat> {
        entries.iter().map(|&(j, c)| (j, rat(c))).collect()
    }

    fn min_instance(
        domains: Vec<VarDomain>,
        blocks: Vec<QuantBlock>,
        objective: &[(usize, i64)],
        existential_rows: Vec<LinConstraint>,
        universal_rows: Vec<LinConstraint>,
    ) -> QipInstance {
        QipInstance {
            name: "test".into(),
            domains,
            blocks,
            objective: coeffs(objective),
            existential_rows,
            universal_rows,
            sense: ObjSense::Minimize,
        }
    }

    #[test]
    fn unconstrained_minimization() {
        // min x0 over a degenerate single existential block of two binaries.
        let inst = min_instance(
            vec![VarDomain::binary(), VarDomain::binary()],
            vec![QuantBlock::exists(vec![0, 1])],
            &[(0, 1)],
            vec![],
            vec![],
        );
        let res = solve(&inst, &SearchConfig::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert_eq!(res.value, Some(GameValue::Finite(rat(0))));
        assert_eq!(res.first_stage, Some(vec![0, 0]));
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        // x0 ≤ 0 and x0 = 1 cannot both hold.
        let inst = min_instance(
            vec![VarDomain::binary()],
            vec![QuantBlock::exists(vec![0])],
            &[(0, 1)],
            vec![
                LinConstraint::le(coeffs(&[(0, 1)]), rat(0), Side::Existential),
                LinConstraint::eq(coeffs(&[(0, 1)]), rat(1), Side::Existential),
            ],
            vec![],
        );
        let res = solve(&inst, &SearchConfig::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Infeasible);
        assert_eq!(res.first_stage, None);
        let ores = oracle_solve(&inst).unwrap();
        assert_eq!(ores.status, SolveStatus::Infeasible);
    }

    #[test]
    fn universal_player_forces_violation() {
        // ∃x0 ∀q ∃x1 : x1 ≥ q and x1 ≤ 1 - q. The adversary picks q freely,
        // and either choice leaves a feasible x1, but q=1 forces x1=1 while
        // the row x0 + x1 ≤ 1 with x0 clamped to 1 would break. With x0 free
        // the existential player survives by x0=0.
        let inst = min_instance(
            vec![VarDomain::binary(), VarDomain::binary(), VarDomain::binary()],
            vec![
                QuantBlock::exists(vec![0]),
                QuantBlock::forall(vec![1]),
                QuantBlock::exists(vec![2]),
            ],
            &[(0, -1)],
            vec![
                LinConstraint::le(coeffs(&[(1, 1), (2, -1)]), rat(0), Side::Existential),
                LinConstraint::le(coeffs(&[(0, 1), (2, 1)]), rat(1), Side::Existential),
            ],
            vec![],
        );
        // x0=1 loses (q=1 forces x1 ≥ 1, then x0+x1=2 > 1), so min is x0=0.
        let res = solve(&inst, &SearchConfig::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert_eq!(res.value, Some(GameValue::Finite(rat(0))));
        assert_eq!(res.first_stage, Some(vec![0]));
    }

    #[test]
    fn legal_moves_unit_vectors() {
        // ∀ block q ∈ {0,1}^3 with Σq = 1 yields exactly the three unit vectors.
        let inst = min_instance(
            vec![VarDomain::binary(); 5],
            vec![
                QuantBlock::exists(vec![0]),
                QuantBlock::forall(vec![1, 2, 3]),
                QuantBlock::exists(vec![4]),
            ],
            &[(0, 1)],
            vec![],
            vec![LinConstraint::eq(coeffs(&[(1, 1), (2, 1), (3, 1)]), rat(1), Side::Universal)],
        );
        let values = vec![rat(0); 5];
        let moves = legal_universal_moves(&inst, &values, 1).unwrap();
        assert_eq!(moves, vec![vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0]]);
    }

    #[test]
    fn legal_moves_budgeted() {
        // ‖z‖₁ ≤ 1 per period and a spent-budget row: nothing spent, period
        // budget 1 over two variables → {(0,0),(1,0),(0,1)} as a set.
        let inst = min_instance(
            vec![VarDomain::binary(); 4],
            vec![
                QuantBlock::exists(vec![0]),
                QuantBlock::forall(vec![1, 2]),
                QuantBlock::exists(vec![3]),
            ],
            &[(0, 1)],
            vec![],
            vec![
                LinConstraint::le(coeffs(&[(1, 1), (2, 1)]), rat(1), Side::Universal),
                LinConstraint::le(coeffs(&[(1, 1), (2, 1)]), rat(1), Side::Universal),
            ],
        );
        let values = vec![rat(0); 4];
        let moves = legal_universal_moves(&inst, &values, 1).unwrap();
        assert_eq!(moves, vec![vec![0, 0], vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn legal_moves_full_box_without_universal_rows() {
        let inst = min_instance(
            vec![VarDomain::binary(), VarDomain::integer(1, 3), VarDomain::binary()],
            vec![
                QuantBlock::exists(vec![0]),
                QuantBlock::forall(vec![1]),
                QuantBlock::exists(vec![2]),
            ],
            &[(0, 1)],
            vec![],
            vec![],
        );
        let values = vec![rat(0); 3];
        let moves = legal_universal_moves(&inst, &values, 1).unwrap();
        assert_eq!(moves, vec![vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn trailing_resolution_takes_row_maximum() {
        // z bundles two scenario rows; with q0=1 selected the first row is
        // active and the second is slack by its big-M.
        // Rows: 3x0 + 5x1 ≤ z + 8(1-q0)  and  7x0 + 2x1 ≤ z + 9(1-q1).
        let inst = min_instance(
            vec![
                VarDomain::binary(),
                VarDomain::binary(),
                VarDomain::binary(),
                VarDomain::binary(),
                VarDomain::trailing_continuous(0, 100),
            ],
            vec![QuantBlock::exists(vec![0, 1, 2, 3, 4])],
            &[(4, 1)],
            vec![
                LinConstraint::le(coeffs(&[(0, 3), (1, 5), (2, 8), (4, -1)]), rat(8), Side::Existential),
                LinConstraint::le(coeffs(&[(0, 7), (1, 2), (3, 9), (4, -1)]), rat(9), Side::Existential),
            ],
            vec![],
        );
        // x0=1, x1=1, q0(=var2)=1, q1(=var3)=0: active row gives z ≥ 8,
        // slack row gives z ≥ 0.
        let values = vec![rat(1), rat(1), rat(1), rat(0), rat(0)];
        match resolve_trailing(&inst, &values).unwrap() {
            TrailingOutcome::Feasible { contribution, values } => {
                assert_eq!(contribution, rat(8));
                assert_eq!(values, vec![(4, rat(8))]);
            }
            TrailingOutcome::Infeasible => panic!("expected feasible"),
        }
    }

    #[test]
    fn trailing_resolution_reports_bound_crossing() {
        let inst = min_instance(
            vec![VarDomain::binary(), VarDomain::trailing_continuous(0, 2)],
            vec![QuantBlock::exists(vec![0, 1])],
            &[(1, 1)],
            vec![LinConstraint::le(coeffs(&[(0, 5), (1, -1)]), rat(0), Side::Existential)],
            vec![],
        );
        let values = vec![rat(1), rat(0)];
        assert_eq!(resolve_trailing(&inst, &values).unwrap(), TrailingOutcome::Infeasible);
    }

    #[test]
    fn no_trailing_variables_contribute_zero() {
        let inst = min_instance(
            vec![VarDomain::binary()],
            vec![QuantBlock::exists(vec![0])],
            &[(0, 1)],
            vec![],
            vec![],
        );
        match resolve_trailing(&inst, &[rat(1)]).unwrap() {
            TrailingOutcome::Feasible { contribution, values } => {
                assert_eq!(contribution, rat(0));
                assert!(values.is_empty());
            }
            TrailingOutcome::Infeasible => panic!("expected feasible"),
        }
    }

    #[test]
    fn non_separable_pattern_is_reported() {
        // Trailing variable with coefficient +1 breaks the pattern.
        let inst = min_instance(
            vec![VarDomain::binary(), VarDomain::trailing_continuous(0, 10)],
            vec![QuantBlock::exists(vec![0, 1])],
            &[(1, 1)],
            vec![LinConstraint::le(coeffs(&[(0, 1), (1, 1)]), rat(3), Side::Existential)],
            vec![],
        );
        assert!(matches!(
            resolve_trailing(&inst, &[rat(0), rat(0)]),
            Err(SolveError::NonSeparable { var: 1, .. })
        ));
    }

    #[test]
    fn node_limit_reports_time_limit_status() {
        let inst = min_instance(
            vec![VarDomain::binary(); 6],
            vec![QuantBlock::exists((0..6).collect())],
            &[(0, 1), (1, 1), (2, 1), (3, 1), (4, 1), (5, 1)],
            vec![],
            vec![],
        );
        let cfg = SearchConfig { node_limit: Some(3), ..Default::default() };
        let res = solve(&inst, &cfg).unwrap();
        assert_eq!(res.status, SolveStatus::TimeLimit);
        assert_eq!(res.first_stage, None);
    }

    /// Deterministic mini-QIP generator used to fuzz the engine against the
    /// oracle (no universal rows, so legality is trivially the full box).
    fn random_instances(count: usize) -> Vec<QipInstance> {
        let mut s = 0x1234_5678_9abc_def0u64;
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            s
        };
        let mut out = Vec::new();
        for id in 0..count {
            let nblocks = 1 + 2 * (next() % 2) as usize; // 1 or 3 blocks
            let mut domains = Vec::new();
            let mut blocks = Vec::new();
            for b in 0..nblocks {
                let width = 1 + (next() % 2) as usize;
                let vars: Vec<usize> = (0..width).map(|k| domains.len() + k).collect();
                for _ in 0..width {
                    domains.push(VarDomain::integer(0, 1 + (next() % 2) as i64));
                }
                blocks.push(if b % 2 == 0 {
                    QuantBlock::exists(vars)
                } else {
                    QuantBlock::forall(vars)
                });
            }
            let n = domains.len();
            let objective: Vec<(usize, i64)> =
                (0..n).map(|j| (j, (next() % 9) as i64 - 4)).collect();
            let mut rows = Vec::new();
            for _ in 0..(1 + next() % 3) {
                let mut entries = Vec::new();
                for j in 0..n {
                    if next() % 2 == 0 {
                        entries.push((j, (next() % 7) as i64 - 3));
                    }
                }
                let rhs = (next() % 7) as i64 - 1;
                let row = if next() % 5 == 0 {
                    LinConstraint::eq(coeffs(&entries), rat(rhs), Side::Existential)
                } else {
                    LinConstraint::le(coeffs(&entries), rat(rhs), Side::Existential)
                };
                rows.push(row);
            }
            let mut inst = min_instance(domains, blocks, &objective, rows, vec![]);
            inst.name = format!("fuzz-{id}");
            out.push(inst);
        }
        out
    }

    #[test]
    fn fuzzed_equivalence_with_oracle() {
        for inst in random_instances(300) {
            let oracle = oracle_solve(&inst).unwrap();
            for ordering in [MoveOrdering::DomainAscending, MoveOrdering::ObjectiveGuided] {
                for bounds in [false, true] {
                    let cfg = SearchConfig {
                        move_ordering: ordering,
                        bounds_enabled: bounds,
                        ..Default::default()
                    };
                    let res = solve(&inst, &cfg).unwrap();
                    assert_eq!(res.status, oracle.status, "{}", inst.name);
                    assert_eq!(res.value, oracle.value, "{}", inst.name);
                    assert!(res.nodes <= oracle.nodes, "{}", inst.name);
                    if res.status == SolveStatus::Optimal {
                        assert_eq!(res.first_stage, oracle.first_stage, "{}", inst.name);
                    }
                }
            }
        }
    }

    #[test]
    fn first_stage_replay_reproduces_value() {
        for inst in random_instances(100) {
            let res = solve(&inst, &SearchConfig::default()).unwrap();
            if res.status != SolveStatus::Optimal {
                continue;
            }
            let fixed = inst.fix_first_stage(res.first_stage.as_ref().unwrap());
            let replay = solve(&fixed, &SearchConfig::default()).unwrap();
            assert_eq!(replay.value, res.value, "{}", inst.name);
        }
    }

    #[test]
    fn strategy_plays_satisfy_rows_and_reach_value() {
        for inst in random_instances(60) {
            let (value, plays) = optimal_plays(&inst).unwrap();
            let oracle = oracle_solve(&inst).unwrap();
            assert_eq!(Some(value), oracle.value, "{}", inst.name);
            if value == GameValue::Infinite {
                continue;
            }
            let mut worst: Option<GameValue> = None;
            for play in &plays {
                let payoff = inst.evaluate_play(play);
                assert!(payoff.is_finite(), "{}", inst.name);
                if worst.is_none_or(|w| payoff > w) {
                    worst = Some(payoff);
                }
            }
            assert_eq!(worst, Some(value), "{}", inst.name);
        }
    }
}

//! Interval bound propagation over linear rows.
//!
//! This is the pruning engine behind both solvers: it tightens per-variable
//! intervals to a fixpoint and supplies admissible optimistic objective
//! bounds. Propagation is sound — it never removes an integer point that
//! satisfies all rows — and stopping early only leaves bounds looser, so the
//! step cap below cannot break correctness.

use std::collections::VecDeque;

use crate::model::{LinConstraint, Sense, VarDomain, VarKind};
use crate::rational::{rat, Rat, Signed, Zero};

/// Per-variable interval bounds, `Empty` once some row is interval-infeasible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundsState {
    pub lower: Vec<Rat>,
    pub upper: Vec<Rat>,
    kinds: Vec<VarKind>,
    empty: bool,
}

impl BoundsState {
    pub fn from_domains(domains: &[VarDomain]) -> Self {
        BoundsState {
            lower: domains.iter().map(|d| rat(d.lower)).collect(),
            upper: domains.iter().map(|d| rat(d.upper)).collect(),
            kinds: domains.iter().map(|d| d.kind).collect(),
            empty: domains.iter().any(|d| d.lower > d.upper),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    /// Clamps a variable to a point value.
    pub fn fix(&mut self, var: usize, value: Rat) {
        self.lower[var] = value;
        self.upper[var] = value;
    }

    /// Resets to the raw domain box (reusing buffers).
    pub fn reset(&mut self, domains: &[VarDomain]) {
        for (i, d) in domains.iter().enumerate() {
            self.lower[i] = rat(d.lower);
            self.upper[i] = rat(d.upper);
        }
        self.empty = domains.iter().any(|d| d.lower > d.upper);
    }

    fn mark_empty(&mut self) {
        self.empty = true;
    }

    /// Clamps a variable to a point value, recording the old interval.
    pub fn fix_trailed(&mut self, var: usize, value: Rat, trail: &mut Trail) {
        trail.entries.push((var, self.lower[var], self.upper[var]));
        self.lower[var] = value;
        self.upper[var] = value;
        if self.lower[var] > self.upper[var] {
            self.empty = true;
        }
    }

    /// Restores every change recorded past `mark` (in reverse) and clears
    /// the empty flag.
    pub fn rewind(&mut self, trail: &mut Trail, mark: usize) {
        while trail.entries.len() > mark {
            let (var, lo, hi) = trail.entries.pop().unwrap();
            self.lower[var] = lo;
            self.upper[var] = hi;
        }
        self.empty = false;
    }
}

/// Undo log for incremental propagation along a search path.
#[derive(Debug, Default)]
pub struct Trail {
    entries: Vec<(usize, Rat, Rat)>,
}

impl Trail {
    pub fn mark(&self) -> usize {
        self.entries.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptSense {
    Min,
    Max,
}

/// Interval bound of `objective` over the state box: a lower bound for
/// `Min`, an upper bound for `Max`. Admissible — never cuts off the true
/// optimum. The state must not be empty.
pub fn optimistic_value<'a, I>(objective: I, state: &BoundsState, sense: OptSense) -> Rat
where
    I: IntoIterator<Item = (&'a usize, &'a Rat)>,
{
    debug_assert!(!state.is_empty());
    let mut acc = Rat::zero();
    for (&j, c) in objective {
        if c.is_zero() {
            continue;
        }
        let take_lower = match sense {
            OptSense::Min => c.is_positive(),
            OptSense::Max => !c.is_positive(),
        };
        acc += *c * if take_lower { state.lower[j] } else { state.upper[j] };
    }
    acc
}

/// Fixpoint interval tightening of `state` under `rows`. Returns `None` when
/// some row is interval-infeasible (no integer point can satisfy all rows).
pub fn propagate(rows: &[LinConstraint], state: &BoundsState) -> Option<BoundsState> {
    let mut out = state.clone();
    let mut engine = Propagator::new(rows, state.num_vars());
    if engine.run(rows, &mut out, None) {
        Some(out)
    } else {
        None
    }
}

/// Reusable propagation engine: row index plus dirty-row queue buffers.
#[derive(Debug)]
pub struct Propagator {
    rows_of_var: Vec<Vec<usize>>,
    queue: VecDeque<usize>,
    queued: Vec<bool>,
    step_cap: usize,
}

impl Propagator {
    pub fn new(rows: &[LinConstraint], num_vars: usize) -> Self {
        let mut rows_of_var = vec![Vec::new(); num_vars];
        for (r, row) in rows.iter().enumerate() {
            for (&j, _) in &row.coeffs {
                rows_of_var[j].push(r);
            }
        }
        // Termination guard; the fixpoint is reached far earlier in practice.
        let step_cap = rows.len() * (num_vars + 2) + rows.len() + 1;
        Propagator {
            rows_of_var,
            queue: VecDeque::new(),
            queued: vec![false; rows.len()],
            step_cap,
        }
    }

    /// Runs to fixpoint in place. `seed_vars` limits the initial dirty set to
    /// rows touching those variables (pass `None` after bound resets).
    /// Returns `false` iff the state became `Empty`.
    pub fn run(
        &mut self,
        rows: &[LinConstraint],
        state: &mut BoundsState,
        seed_vars: Option<&[usize]>,
    ) -> bool {
        let mut scratch = Trail::default();
        self.run_trailed(rows, state, seed_vars, &mut scratch)
    }

    /// As [`Propagator::run`], recording every bound change on `trail` so a
    /// caller can rewind to the pre-call state (including after `Empty`).
    pub fn run_trailed(
        &mut self,
        rows: &[LinConstraint],
        state: &mut BoundsState,
        seed_vars: Option<&[usize]>,
        trail: &mut Trail,
    ) -> bool {
        if state.is_empty() {
            return false;
        }
        self.queue.clear();
        self.queued.iter_mut().for_each(|q| *q = false);
        match seed_vars {
            None => {
                for r in 0..rows.len() {
                    self.queue.push_back(r);
                    self.queued[r] = true;
                }
            }
            Some(vars) => {
                for &v in vars {
                    for &r in &self.rows_of_var[v] {
                        if !self.queued[r] {
                            self.queue.push_back(r);
                            self.queued[r] = true;
                        }
                    }
                }
            }
        }

        let mut steps = 0usize;
        while let Some(r) = self.queue.pop_front() {
            self.queued[r] = false;
            steps += 1;
            if steps > self.step_cap {
                return true; // sound: bounds merely stay looser
            }
            let mut changed_vars: Vec<usize> = Vec::new();
            if !tighten_row(&rows[r], state, &mut changed_vars, trail) {
                state.mark_empty();
                return false;
            }
            for v in changed_vars {
                if state.lower[v] > state.upper[v] {
                    state.mark_empty();
                    return false;
                }
                for &r2 in &self.rows_of_var[v] {
                    if !self.queued[r2] {
                        self.queue.push_back(r2);
                        self.queued[r2] = true;
                    }
                }
            }
        }
        true
    }
}

/// Tightens every variable of one row. Returns `false` on interval
/// infeasibility; appends changed variables to `changed` and old bounds to
/// the trail.
fn tighten_row(
    row: &LinConstraint,
    state: &mut BoundsState,
    changed: &mut Vec<usize>,
    trail: &mut Trail,
) -> bool {
    // min/max of the LHS over the current box
    let mut min_lhs = Rat::zero();
    let mut max_lhs = Rat::zero();
    for (&j, c) in &row.coeffs {
        if c.is_positive() {
            min_lhs += *c * state.lower[j];
            max_lhs += *c * state.upper[j];
        } else {
            min_lhs += *c * state.upper[j];
            max_lhs += *c * state.lower[j];
        }
    }
    match row.sense {
        Sense::Le => {
            if min_lhs > row.rhs {
                return false;
            }
        }
        Sense::Eq => {
            if min_lhs > row.rhs || max_lhs < row.rhs {
                return false;
            }
        }
    }

    for (&j, c) in &row.coeffs {
        let min_contrib = if c.is_positive() { *c * state.lower[j] } else { *c * state.upper[j] };
        let max_contrib = if c.is_positive() { *c * state.upper[j] } else { *c * state.lower[j] };

        // LHS ≤ rhs:  c_j x_j ≤ rhs - (min_lhs - min_contrib)
        let slack_up = row.rhs - (min_lhs - min_contrib);
        if c.is_positive() {
            tighten_upper(state, j, slack_up / *c, changed, trail);
        } else {
            tighten_lower(state, j, slack_up / *c, changed, trail);
        }

        if row.sense == Sense::Eq {
            // LHS ≥ rhs:  c_j x_j ≥ rhs - (max_lhs - max_contrib)
            let slack_down = row.rhs - (max_lhs - max_contrib);
            if c.is_positive() {
                tighten_lower(state, j, slack_down / *c, changed, trail);
            } else {
                tighten_upper(state, j, slack_down / *c, changed, trail);
            }
        }
    }
    true
}

fn tighten_upper(
    state: &mut BoundsState,
    var: usize,
    bound: Rat,
    changed: &mut Vec<usize>,
    trail: &mut Trail,
) {
    let bound = match state.kinds[var] {
        VarKind::Integer => bound.floor(),
        VarKind::TrailingContinuous => bound,
    };
    if bound < state.upper[var] {
        trail.entries.push((var, state.lower[var], state.upper[var]));
        state.upper[var] = bound;
        changed.push(var);
    }
}

fn tighten_lower(
    state: &mut BoundsState,
    var: usize,
    bound: Rat,
    changed: &mut Vec<usize>,
    trail: &mut Trail,
) {
    let bound = match state.kinds[var] {
        VarKind::Integer => bound.ceil(),
        VarKind::TrailingContinuous => bound,
    };
    if bound > state.lower[var] {
        trail.entries.push((var, state.lower[var], state.upper[var]));
        state.lower[var] = bound;
        changed.push(var);
    }
}

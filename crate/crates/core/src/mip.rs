//! Depth-first branch-and-bound for flattened single-player instances.
//!
//! This is the solver behind the deterministic-equivalent pipeline and a
//! second independent oracle next to the game-tree search. Pruning comes
//! from interval propagation ([`crate::relax`]) and an incumbent cutoff on
//! the admissible optimistic bound. Branching picks the unfixed integer
//! variable with the largest absolute objective coefficient, tie-broken by
//! index, and tries values in ascending order, updating the incumbent
//! immediately on every improving leaf. Trailing continuous variables are
//! resolved in closed form with the same separable rule as the game-tree
//! search.

use std::time::Instant;

use crate::dep::MipInstance;
use crate::model::{QipInstance, Sense, VarKind};
use crate::rational::{rat, Rat, Signed, Zero};
use crate::relax::{optimistic_value, BoundsState, OptSense, Propagator};
use crate::search::{
    build_trailing_plan, resolve_with, SearchConfig, SolveError, TrailingOutcome, TrailingPlan,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipStatus {
    Optimal,
    Infeasible,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MipResult {
    pub status: MipStatus,
    /// Optimal value, or the incumbent at `TimeLimit` when one exists.
    pub value: Option<Rat>,
    /// Satisfying assignment attaining `value`, trailing variables resolved.
    pub assignment: Option<Vec<Rat>>,
    pub nodes: u64,
    pub elapsed_ms: u64,
}

struct Bnb<'a> {
    qip: &'a QipInstance,
    plan: TrailingPlan,
    /// Branch order: integer variables by descending |objective coefficient|,
    /// ties by index.
    branch_order: Vec<usize>,
    objective_entries: Vec<(usize, Rat)>,
    propagator: Propagator,
    state: BoundsState,
    fixed: Vec<(usize, i64)>,
    incumbent: Option<(Rat, Vec<Rat>)>,
    nodes: u64,
    deadline: Instant,
    node_limit: Option<u64>,
    interrupted: bool,
}

impl<'a> Bnb<'a> {
    fn tick(&mut self) -> bool {
        self.nodes += 1;
        if let Some(limit) = self.node_limit {
            if self.nodes > limit {
                self.interrupted = true;
            }
        }
        if self.nodes & 255 == 0 && Instant::now() >= self.deadline {
            self.interrupted = true;
        }
        !self.interrupted
    }

    /// Re-propagates the current decision stack into the scratch state.
    fn propagate_fixed(&mut self) -> bool {
        self.state.reset(&self.qip.domains);
        for &(v, val) in &self.fixed {
            self.state.fix(v, rat(val));
        }
        self.propagator.run(&self.qip.existential_rows, &mut self.state, None)
    }

    fn dfs(&mut self) {
        if !self.tick() {
            return;
        }
        if !self.propagate_fixed() {
            return;
        }
        let bound = optimistic_value(
            self.objective_entries.iter().map(|(j, c)| (j, c)),
            &self.state,
            OptSense::Min,
        );
        if let Some((best, _)) = &self.incumbent {
            if bound >= *best {
                return;
            }
        }

        let branch = self
            .branch_order
            .iter()
            .copied()
            .find(|&v| self.state.lower[v] < self.state.upper[v]);
        let Some(var) = branch else {
            self.record_leaf();
            return;
        };

        let lo = self.state.lower[var].to_integer() as i64;
        let hi = self.state.upper[var].to_integer() as i64;
        for val in lo..=hi {
            if self.interrupted {
                return;
            }
            self.fixed.push((var, val));
            self.dfs();
            self.fixed.pop();
        }
    }

    /// All integer variables decided (branched or forced): verify rows
    /// exactly and resolve the trailing variables.
    fn record_leaf(&mut self) {
        let point: Vec<Rat> = self.state.lower.clone();
        for &r in &self.plan.plain_rows {
            let row = &self.qip.existential_rows[r];
            let lhs: Rat = row.coeffs.iter().map(|(&j, c)| *c * point[j]).sum();
            let ok = match row.sense {
                Sense::Le => lhs <= row.rhs,
                Sense::Eq => lhs == row.rhs,
            };
            if !ok {
                return;
            }
        }
        let residual = |r: usize| -> Rat {
            let row = &self.qip.existential_rows[r];
            let lhs: Rat = row
                .coeffs
                .iter()
                .filter(|(&j, _)| !self.plan.is_trailing[j])
                .map(|(&j, c)| *c * point[j])
                .sum();
            lhs - row.rhs
        };
        match resolve_with(&self.plan, residual) {
            TrailingOutcome::Infeasible => {}
            TrailingOutcome::Feasible { contribution, values } => {
                let mut assignment = point;
                for (v, val) in values {
                    assignment[v] = val;
                }
                let mut value = contribution;
                for (&j, c) in &self.qip.objective {
                    if !self.plan.is_trailing[j] {
                        value += *c * assignment[j];
                    }
                }
                let better = match &self.incumbent {
                    None => true,
                    Some((best, _)) => value < *best,
                };
                if better {
                    self.incumbent = Some((value, assignment));
                }
            }
        }
    }
}

/// Exact minimization of a flattened instance by depth-first branch-and-
/// bound. Only `time_limit_ms` and `node_limit` of the config are used.
/// Deterministic given `(instance, config)`.
pub fn solve_mip(mip: &MipInstance, cfg: &SearchConfig) -> Result<MipResult, SolveError> {
    let started = Instant::now();
    let qip = mip.as_qip();
    let plan = build_trailing_plan(&qip)?;

    let mut branch_order: Vec<usize> = (0..qip.num_vars())
        .filter(|&v| qip.domains[v].kind == VarKind::Integer)
        .collect();
    branch_order.sort_by_key(|&v| {
        let c = qip.objective.get(&v).map(|c| c.abs()).unwrap_or_else(Rat::zero);
        (std::cmp::Reverse(c), v)
    });
    let objective_entries: Vec<(usize, Rat)> =
        qip.objective.iter().map(|(&j, c)| (j, *c)).collect();

    let mut bnb = Bnb {
        plan,
        branch_order,
        objective_entries,
        propagator: Propagator::new(&qip.existential_rows, qip.num_vars()),
        state: BoundsState::from_domains(&qip.domains),
        fixed: Vec::new(),
        incumbent: None,
        nodes: 0,
        deadline: started + std::time::Duration::from_millis(cfg.time_limit_ms),
        node_limit: cfg.node_limit,
        interrupted: false,
        qip: &qip,
    };
    bnb.dfs();

    let elapsed_ms = started.elapsed().as_millis() as u64;
    let (value, assignment) = match bnb.incumbent {
        Some((v, a)) => (Some(v), Some(a)),
        None => (None, None),
    };
    let status = if bnb.interrupted {
        MipStatus::TimeLimit
    } else if value.is_some() {
        MipStatus::Optimal
    } else {
        MipStatus::Infeasible
    };
    Ok(MipResult { status, value, assignment, nodes: bnb.nodes, elapsed_ms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dep::{flatten, FlattenConfig};
    use crate::model::{box_assignments, LinConstraint, ObjSense, QuantBlock, Side, VarDomain};
    use crate::rational::GameValue;
    use crate::search::oracle_solve;
    use std::collections::BTreeMap;

    fn coeffs(entries: &[(usize, i64)]) -> BTreeMap<usize, Rat> {
        entries.iter().map(|&(j, c)| (j, rat(c))).collect()
    }

    fn mip_of(
        domains: Vec<VarDomain>,
        objective: &[(usize, i64)],
        rows: Vec<LinConstraint>,
    ) -> MipInstance {
        let n = domains.len();
        let inst = QipInstance {
            name: "mip-test".into(),
            domains,
            blocks: vec![QuantBlock::exists((0..n).collect())],
            objective: coeffs(objective),
            existential_rows: rows,
            universal_rows: vec![],
            sense: ObjSense::Minimize,
        };
        MipInstance::from_qip(&inst).unwrap()
    }

    #[test]
    fn bounded_variable_minimum() {
        // min x0 s.t. x0 ≥ 1 over {0..5}.
        let mip = mip_of(
            vec![VarDomain::integer(0, 5)],
            &[(0, 1)],
            vec![LinConstraint::le(coeffs(&[(0, -1)]), rat(-1), Side::Existential)],
        );
        let res = solve_mip(&mip, &SearchConfig::default()).unwrap();
        assert_eq!(res.status, MipStatus::Optimal);
        assert_eq!(res.value, Some(rat(1)));
        assert_eq!(res.assignment, Some(vec![rat(1)]));
    }

    #[test]
    fn infeasible_rows_are_detected() {
        let mip = mip_of(
            vec![VarDomain::binary()],
            &[(0, 1)],
            vec![
                LinConstraint::le(coeffs(&[(0, 1)]), rat(0), Side::Existential),
                LinConstraint::eq(coeffs(&[(0, 1)]), rat(1), Side::Existential),
            ],
        );
        let res = solve_mip(&mip, &SearchConfig::default()).unwrap();
        assert_eq!(res.status, MipStatus::Infeasible);
        assert_eq!(res.value, None);
    }

    #[test]
    fn node_limit_reports_time_limit() {
        let mip = mip_of(
            vec![VarDomain::binary(); 10],
            &(0..10).map(|j| (j, 1)).collect::<Vec<_>>(),
            vec![LinConstraint::eq(
                (0..10).map(|j| (j, rat(1))).collect(),
                rat(5),
                Side::Existential,
            )],
        );
        let cfg = SearchConfig { node_limit: Some(2), ..Default::default() };
        let res = solve_mip(&mip, &cfg).unwrap();
        assert_eq!(res.status, MipStatus::TimeLimit);
    }

    /// Brute-force minimum over the integer box with exact trailing
    /// resolution, used as the independent check.
    fn enumerate_minimum(mip: &MipInstance) -> Option<Rat> {
        let qip = mip.as_qip();
        let int_vars: Vec<usize> = (0..qip.num_vars())
            .filter(|&v| qip.domains[v].kind == VarKind::Integer)
            .collect();
        let mut best: Option<Rat> = None;
        for point in box_assignments(&qip.domains, &int_vars) {
            let mut values = vec![Rat::zero(); qip.num_vars()];
            for (&v, &val) in int_vars.iter().zip(&point) {
                values[v] = rat(val);
            }
            match crate::search::resolve_trailing(&qip, &values).unwrap() {
                TrailingOutcome::Infeasible => continue,
                TrailingOutcome::Feasible { values: tvals, .. } => {
                    for (v, val) in tvals {
                        values[v] = val;
                    }
                }
            }
            if !qip.existential_rows.iter().all(|r| r.satisfied_by(&values)) {
                continue;
            }
            let obj = qip.objective_value(&values);
            if best.as_ref().is_none_or(|b| obj < *b) {
                best = Some(obj);
            }
        }
        best
    }

    #[test]
    fn agreement_with_enumeration_on_random_mips() {
        let mut s = 0xfeed_beef_dead_cafeu64;
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            s
        };
        for case in 0..150 {
            let nvars = 2 + (next() % 7) as usize;
            let domains: Vec<VarDomain> =
                (0..nvars).map(|_| VarDomain::integer(0, 1 + (next() % 2) as i64)).collect();
            let objective: Vec<(usize, i64)> =
                (0..nvars).map(|j| (j, (next() % 11) as i64 - 5)).collect();
            let mut rows = Vec::new();
            for _ in 0..(1 + next() % 4) {
                let mut entries = Vec::new();
                for j in 0..nvars {
                    if next() % 2 == 0 {
                        entries.push((j, (next() % 7) as i64 - 3));
                    }
                }
                let rhs = (next() % 9) as i64 - 2;
                rows.push(if next() % 5 == 0 {
                    LinConstraint::eq(coeffs(&entries), rat(rhs), Side::Existential)
                } else {
                    LinConstraint::le(coeffs(&entries), rat(rhs), Side::Existential)
                });
            }
            let mut mip = mip_of(domains, &objective, rows);
            mip.name = format!("bnb-fuzz-{case}");
            let res = solve_mip(&mip, &SearchConfig::default()).unwrap();
            let expect = enumerate_minimum(&mip);
            match expect {
                None => assert_eq!(res.status, MipStatus::Infeasible, "{}", mip.name),
                Some(v) => {
                    assert_eq!(res.status, MipStatus::Optimal, "{}", mip.name);
                    assert_eq!(res.value, Some(v), "{}", mip.name);
                    // The reported assignment satisfies every row exactly.
                    let assignment = res.assignment.unwrap();
                    assert!(mip.rows.iter().all(|r| r.satisfied_by(&assignment)));
                    assert_eq!(mip.as_qip().objective_value(&assignment), v);
                }
            }
        }
    }

    #[test]
    fn flatten_of_forced_universal_matches_oracle() {
        // Single-scenario universal block: the flattened value collapses to
        // the deterministic minimum.
        let inst = QipInstance {
            name: "forced".into(),
            domains: vec![VarDomain::binary(), VarDomain::binary(), VarDomain::binary()],
            blocks: vec![
                QuantBlock::exists(vec![0]),
                QuantBlock::forall(vec![1]),
                QuantBlock::exists(vec![2]),
            ],
            objective: coeffs(&[(0, 2), (1, 7), (2, -1)]),
            existential_rows: vec![LinConstraint::le(
                coeffs(&[(0, 1), (2, 1)]),
                rat(1),
                Side::Existential,
            )],
            universal_rows: vec![LinConstraint::eq(coeffs(&[(1, 1)]), rat(1), Side::Universal)],
            sense: ObjSense::Minimize,
        };
        let mip = flatten(&inst, &FlattenConfig::default()).unwrap();
        let res = solve_mip(&mip, &SearchConfig::default()).unwrap();
        let oracle = oracle_solve(&inst).unwrap();
        assert_eq!(res.value.map(GameValue::Finite), oracle.value);
    }
}

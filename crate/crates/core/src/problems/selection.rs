//! Multistage robust selection: pick `picks` of `items` items over an
//! initial stage plus `periods` adversarial cost periods.
//!
//! In each period the adversary reveals one of `scenarios` cost vectors; the
//! decision maker may then select further items. Period costs are bundled in
//! one trailing continuous variable per period, linked to the revealed
//! scenario through big-M rows.

use std::collections::BTreeMap;

use super::rng::SplitMix64;
use super::ParamError;
use crate::dep::{MipInstance, ScenarioHistory};
use crate::model::{LinConstraint, ObjSense, QipInstance, QuantBlock, Side, VarDomain};
use crate::rational::{rat, Rat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionParams {
    pub items: usize,
    pub picks: usize,
    pub periods: usize,
    pub scenarios: usize,
    pub seed: u64,
}

impl SelectionParams {
    fn validate(&self) -> Result<(), ParamError> {
        if self.items != 2 * self.picks {
            return Err(ParamError::SelectionShape { items: self.items, picks: self.picks });
        }
        if self.picks == 0 || self.periods == 0 || self.scenarios == 0 {
            return Err(ParamError::Invalid(
                "selection needs picks ≥ 1, periods ≥ 1, scenarios ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

/// Drawn cost data of one selection instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionData {
    pub label: String,
    pub items: usize,
    pub picks: usize,
    pub periods: usize,
    pub scenarios: usize,
    /// Initial-stage cost per item.
    pub initial_costs: Vec<i64>,
    /// `period_costs[t-1][k][i]`: cost of item `i` in scenario `k+1` of
    /// period `t`.
    pub period_costs: Vec<Vec<Vec<i64>>>,
}

impl SelectionData {
    /// Draw order: initial costs by item, then period costs by period, then
    /// scenario, then item; every value uniform in `{0..99}`.
    pub fn generate(params: &SelectionParams) -> Result<SelectionData, ParamError> {
        params.validate()?;
        let mut rng = SplitMix64::new(params.seed);
        let initial_costs = (0..params.items).map(|_| rng.range(0, 99)).collect();
        let period_costs = (0..params.periods)
            .map(|_| {
                (0..params.scenarios)
                    .map(|_| (0..params.items).map(|_| rng.range(0, 99)).collect())
                    .collect()
            })
            .collect();
        Ok(SelectionData {
            label: format!(
                "sel-n{}-p{}-T{}-N{}-s{}",
                params.items, params.picks, params.periods, params.scenarios, params.seed
            ),
            items: params.items,
            picks: params.picks,
            periods: params.periods,
            scenarios: params.scenarios,
            initial_costs,
            period_costs,
        })
    }

    /// `M` of period `t`, scenario `k`: the scenario cost sum, which caps
    /// any selection's period cost.
    pub fn big_m(&self, t: usize, k: usize) -> i64 {
        self.period_costs[t][k].iter().sum()
    }

    /// Upper bound of the period-`t` cost bundle.
    pub fn bundle_upper(&self, t: usize) -> i64 {
        (0..self.scenarios).map(|k| self.big_m(t, k)).max().unwrap_or(0)
    }
}

pub fn build_selection_qip_pu(params: &SelectionParams) -> Result<QipInstance, ParamError> {
    Ok(selection_qip_pu_from(&SelectionData::generate(params)?))
}

pub fn build_selection_qip(params: &SelectionParams) -> Result<QipInstance, ParamError> {
    Ok(selection_qip_from(&SelectionData::generate(params)?))
}

pub fn build_selection_dep(params: &SelectionParams) -> Result<MipInstance, ParamError> {
    Ok(selection_dep_from(&SelectionData::generate(params)?))
}

/// Variable layout shared by the two quantified variants.
struct Layout {
    items: usize,
    scenarios: usize,
    periods: usize,
    /// Width of one period group (scenario vars + selections [+ pointer]).
    period_width: usize,
    /// Extra leading slot per period for the scenario-pointer variable.
    pointer: bool,
}

impl Layout {
    fn x0(&self, i: usize) -> usize {
        i
    }
    fn period_base(&self, t: usize) -> usize {
        self.items + (t - 1) * self.period_width
    }
    fn pointer_var(&self, t: usize) -> usize {
        debug_assert!(self.pointer);
        self.period_base(t)
    }
    fn q(&self, t: usize, k: usize) -> usize {
        self.period_base(t) + usize::from(self.pointer) + k
    }
    fn x(&self, t: usize, i: usize) -> usize {
        // t = 0 is the initial stage
        if t == 0 {
            self.x0(i)
        } else {
            self.period_base(t) + usize::from(self.pointer) + self.scenarios + i
        }
    }
    fn bundle(&self, t: usize) -> usize {
        self.items + self.periods * self.period_width + (t - 1)
    }
    fn num_vars(&self) -> usize {
        self.items + self.periods * self.period_width + self.periods
    }
}

/// Shared rows: selection cardinality, no-reselection, and the big-M links
/// between scenario indicators and the period cost bundles.
fn core_rows(data: &SelectionData, l: &Layout) -> Vec<LinConstraint> {
    let mut rows = Vec::new();

    let mut total: BTreeMap<usize, Rat> = BTreeMap::new();
    for t in 0..=data.periods {
        for i in 0..data.items {
            total.insert(l.x(t, i), rat(1));
        }
    }
    rows.push(LinConstraint::eq(total, rat(data.picks as i64), Side::Existential));

    for i in 0..data.items {
        let coeffs: BTreeMap<usize, Rat> =
            (0..=data.periods).map(|t| (l.x(t, i), rat(1))).collect();
        rows.push(LinConstraint::le(coeffs, rat(1), Side::Existential));
    }

    for t in 1..=data.periods {
        for k in 0..data.scenarios {
            let m = data.big_m(t - 1, k);
            let mut coeffs: BTreeMap<usize, Rat> = BTreeMap::new();
            for i in 0..data.items {
                coeffs.insert(l.x(t, i), rat(data.period_costs[t - 1][k][i]));
            }
            coeffs.insert(l.q(t, k), rat(m));
            coeffs.insert(l.bundle(t), rat(-1));
            rows.push(LinConstraint::le(coeffs, rat(m), Side::Existential));
        }
    }
    rows
}

fn base_instance(data: &SelectionData, l: &Layout) -> (Vec<VarDomain>, BTreeMap<usize, Rat>) {
    let mut domains = vec![VarDomain::binary(); l.num_vars()];
    for t in 1..=data.periods {
        domains[l.bundle(t)] = VarDomain::trailing_continuous(0, data.bundle_upper(t - 1));
        if l.pointer {
            domains[l.pointer_var(t)] = VarDomain::integer(1, data.scenarios as i64);
        }
    }
    let mut objective: BTreeMap<usize, Rat> = BTreeMap::new();
    for i in 0..data.items {
        if data.initial_costs[i] != 0 {
            objective.insert(l.x0(i), rat(data.initial_costs[i]));
        }
    }
    for t in 1..=data.periods {
        objective.insert(l.bundle(t), rat(1));
    }
    (domains, objective)
}

/// Scenario selection by a universal unit vector per period, constrained by
/// the universal rows `Σ_k q_k = 1`.
pub fn selection_qip_pu_from(data: &SelectionData) -> QipInstance {
    let l = Layout {
        items: data.items,
        scenarios: data.scenarios,
        periods: data.periods,
        period_width: data.scenarios + data.items,
        pointer: false,
    };
    let (domains, objective) = base_instance(data, &l);

    let mut blocks = vec![QuantBlock::exists((0..data.items).collect())];
    for t in 1..=data.periods {
        blocks.push(QuantBlock::forall((0..data.scenarios).map(|k| l.q(t, k)).collect()));
        let mut exist: Vec<usize> = (0..data.items).map(|i| l.x(t, i)).collect();
        if t == data.periods {
            exist.extend((1..=data.periods).map(|tt| l.bundle(tt)));
        }
        blocks.push(QuantBlock::exists(exist));
    }

    let universal_rows = (1..=data.periods)
        .map(|t| {
            LinConstraint::eq(
                (0..data.scenarios).map(|k| (l.q(t, k), rat(1))).collect(),
                rat(1),
                Side::Universal,
            )
        })
        .collect();

    QipInstance {
        name: format!("{}-qippu", data.label),
        domains,
        blocks,
        objective,
        existential_rows: core_rows(data, &l),
        universal_rows,
        sense: ObjSense::Minimize,
    }
}

/// Scenario selection by a universal integer pointer per period, decoded
/// into existential indicators; no universal constraint system.
pub fn selection_qip_from(data: &SelectionData) -> QipInstance {
    let l = Layout {
        items: data.items,
        scenarios: data.scenarios,
        periods: data.periods,
        period_width: 1 + data.scenarios + data.items,
        pointer: true,
    };
    let (domains, objective) = base_instance(data, &l);

    let mut blocks = vec![QuantBlock::exists((0..data.items).collect())];
    for t in 1..=data.periods {
        blocks.push(QuantBlock::forall(vec![l.pointer_var(t)]));
        let mut exist: Vec<usize> = (0..data.scenarios).map(|k| l.q(t, k)).collect();
        exist.extend((0..data.items).map(|i| l.x(t, i)));
        if t == data.periods {
            exist.extend((1..=data.periods).map(|tt| l.bundle(tt)));
        }
        blocks.push(QuantBlock::exists(exist));
    }

    let mut rows = core_rows(data, &l);
    for t in 1..=data.periods {
        rows.push(LinConstraint::eq(
            (0..data.scenarios).map(|k| (l.q(t, k), rat(1))).collect(),
            rat(1),
            Side::Existential,
        ));
        let mut decode: BTreeMap<usize, Rat> =
            (0..data.scenarios).map(|k| (l.q(t, k), rat(k as i64 + 1))).collect();
        decode.insert(l.pointer_var(t), rat(-1));
        rows.push(LinConstraint::eq(decode, rat(0), Side::Existential));
    }

    QipInstance {
        name: format!("{}-qip", data.label),
        domains,
        blocks,
        objective,
        existential_rows: rows,
        universal_rows: Vec::new(),
        sense: ObjSense::Minimize,
    }
}

/// All scenario sequences of length `periods` over `1..=scenarios`,
/// lexicographic.
fn sequences(scenarios: usize, periods: usize) -> Vec<Vec<i64>> {
    let mut out: Vec<Vec<i64>> = vec![Vec::new()];
    for _ in 0..periods {
        let mut next = Vec::with_capacity(out.len() * scenarios);
        for seq in &out {
            for k in 1..=scenarios as i64 {
                let mut s = seq.clone();
                s.push(k);
                next.push(s);
            }
        }
        out = next;
    }
    out
}

/// History of unit-vector universal moves matching a scenario sequence
/// prefix (aligns origins with the flattener's view of the `QipPu` model).
fn unit_history(prefix: &[i64], scenarios: usize) -> ScenarioHistory {
    ScenarioHistory {
        moves: prefix
            .iter()
            .map(|&k| (0..scenarios).map(|j| i64::from(j as i64 + 1 == k)).collect())
            .collect(),
    }
}

/// Hand-built deterministic equivalent: one selection-variable copy per item
/// and scenario-sequence prefix, a single worst-case epigraph variable.
pub fn selection_dep_from(data: &SelectionData) -> MipInstance {
    let n = data.items;
    let pu_layout = Layout {
        items: n,
        scenarios: data.scenarios,
        periods: data.periods,
        period_width: data.scenarios + n,
        pointer: false,
    };

    let mut domains: Vec<VarDomain> = Vec::new();
    let mut var_origin = Vec::new();
    let mut copy: BTreeMap<(usize, Vec<i64>), usize> = BTreeMap::new(); // (t, prefix) -> base
    for t in 0..=data.periods {
        for prefix in sequences(data.scenarios, t) {
            copy.insert((t, prefix.clone()), domains.len());
            for i in 0..n {
                domains.push(VarDomain::binary());
                var_origin.push(Some((pu_layout.x(t, i), unit_history(&prefix, data.scenarios))));
            }
        }
    }
    let epigraph = domains.len();
    let upper: i64 = (0..data.periods).map(|t| data.bundle_upper(t)).sum();
    domains.push(VarDomain::trailing_continuous(0, upper));
    var_origin.push(None);

    let x = |t: usize, prefix: &[i64], i: usize| copy[&(t, prefix.to_vec())] + i;

    let mut objective: BTreeMap<usize, Rat> = BTreeMap::new();
    for i in 0..n {
        if data.initial_costs[i] != 0 {
            objective.insert(x(0, &[], i), rat(data.initial_costs[i]));
        }
    }
    objective.insert(epigraph, rat(1));

    let mut rows = Vec::new();
    let leaves = sequences(data.scenarios, data.periods);
    // Worst-case rows: the epigraph dominates every sequence's period costs.
    for r in &leaves {
        let mut coeffs: BTreeMap<usize, Rat> = BTreeMap::new();
        for t in 1..=data.periods {
            let k = (r[t - 1] - 1) as usize;
            for i in 0..n {
                let var = x(t, &r[..t], i);
                *coeffs.entry(var).or_insert(rat(0)) += rat(data.period_costs[t - 1][k][i]);
            }
        }
        coeffs.insert(epigraph, rat(-1));
        rows.push(LinConstraint::le(coeffs, rat(0), Side::Existential));
    }
    // Exactly `picks` selections along every sequence.
    for r in &leaves {
        let mut coeffs: BTreeMap<usize, Rat> = BTreeMap::new();
        for t in 0..=data.periods {
            for i in 0..n {
                coeffs.insert(x(t, &r[..t], i), rat(1));
            }
        }
        rows.push(LinConstraint::eq(coeffs, rat(data.picks as i64), Side::Existential));
    }
    // No item selected twice along any sequence.
    for i in 0..n {
        for r in &leaves {
            let coeffs: BTreeMap<usize, Rat> =
                (0..=data.periods).map(|t| (x(t, &r[..t], i), rat(1))).collect();
            rows.push(LinConstraint::le(coeffs, rat(1), Side::Existential));
        }
    }

    MipInstance {
        name: format!("{}-dep", data.label),
        domains,
        objective,
        rows,
        var_origin,
        sense: ObjSense::Minimize,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, Sense};
    use crate::rational::GameValue;
    use crate::search::{legal_universal_moves, oracle_solve, solve, SearchConfig};

    fn tiny_params() -> SelectionParams {
        SelectionParams { items: 2, picks: 1, periods: 1, scenarios: 2, seed: 0 }
    }

    #[test]
    fn variable_and_row_counts() {
        let inst = build_selection_qip_pu(&tiny_params()).unwrap();
        // x0 (2) + q (2) + x1 (2) + bundle (1)
        assert_eq!(inst.num_vars(), 7);
        // cardinality (1) + per-item (2) + big-M links (N·T = 2)
        assert_eq!(inst.existential_rows.len(), 5);
        assert_eq!(inst.universal_rows.len(), 1);
        assert!(validate(&inst).is_empty());
    }

    #[test]
    fn pointer_variant_adds_one_variable_per_period() {
        for periods in 1..=3 {
            let params = SelectionParams { periods, ..tiny_params() };
            let pu = build_selection_qip_pu(&params).unwrap();
            let qip = build_selection_qip(&params).unwrap();
            assert_eq!(qip.num_vars(), pu.num_vars() + periods);
            assert!(validate(&qip).is_empty());
        }
    }

    #[test]
    fn scenario_pointer_domain_is_one_to_n() {
        let qip = build_selection_qip(&tiny_params()).unwrap();
        // First universal block holds the pointer.
        let pointer = qip.blocks[1].vars[0];
        assert_eq!(qip.domains[pointer], VarDomain::integer(1, 2));
    }

    #[test]
    fn universal_moves_are_unit_vectors() {
        let inst = build_selection_qip_pu(&SelectionParams {
            items: 2,
            picks: 1,
            periods: 1,
            scenarios: 3,
            seed: 5,
        })
        .unwrap();
        let values = vec![rat(0); inst.num_vars()];
        let moves = legal_universal_moves(&inst, &values, 1).unwrap();
        assert_eq!(moves.len(), 3);
        for mv in &moves {
            assert_eq!(mv.iter().sum::<i64>(), 1);
        }
    }

    /// Frozen two-item example: waiting beats both immediate buys, and the
    /// adversary then reveals the (3, 100) scenario.
    fn crafted_data() -> SelectionData {
        SelectionData {
            label: "sel-crafted".into(),
            items: 2,
            picks: 1,
            periods: 1,
            scenarios: 2,
            initial_costs: vec![5, 9],
            period_costs: vec![vec![vec![3, 100], vec![100, 2]]],
        }
    }

    #[test]
    fn crafted_instance_value_is_three() {
        let inst = selection_qip_pu_from(&crafted_data());
        let oracle = oracle_solve(&inst).unwrap();
        assert_eq!(oracle.value, Some(GameValue::Finite(rat(3))));
        // Optimal first stage buys nothing now.
        assert_eq!(oracle.first_stage, Some(vec![0, 0]));
        let res = solve(&inst, &SearchConfig::default()).unwrap();
        assert_eq!(res.value, oracle.value);
        assert_eq!(res.first_stage, oracle.first_stage);

        let qip = selection_qip_from(&crafted_data());
        assert_eq!(solve(&qip, &SearchConfig::default()).unwrap().value, oracle.value);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = build_selection_qip_pu(&tiny_params()).unwrap();
        let b = build_selection_qip_pu(&tiny_params()).unwrap();
        assert_eq!(a, b);
        let c = build_selection_qip_pu(&SelectionParams { seed: 1, ..tiny_params() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn shape_constraint_is_enforced() {
        let bad = SelectionParams { items: 5, picks: 2, periods: 1, scenarios: 2, seed: 0 };
        assert_eq!(
            build_selection_qip_pu(&bad).unwrap_err(),
            ParamError::SelectionShape { items: 5, picks: 2 }
        );
    }

    #[test]
    fn dep_counts_match_closed_forms() {
        // items · Σ_{t=0..T} N^t + 1 variables; items · N^T no-reselect rows.
        let params = SelectionParams { items: 4, picks: 2, periods: 2, scenarios: 3, seed: 3 };
        let dep = build_selection_dep(&params).unwrap();
        assert_eq!(dep.num_vars(), 4 * (1 + 3 + 9) + 1);
        let no_reselect = dep
            .rows
            .iter()
            .filter(|r| r.sense == Sense::Le && r.rhs == rat(1))
            .count();
        assert_eq!(no_reselect, 4 * 9);
    }
}

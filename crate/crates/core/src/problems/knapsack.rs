//! Multistage robust knapsack with budgeted weight increases.
//!
//! One knapsack per period: after the deterministic period 0, the adversary
//! may raise the weight of at most `alpha` items per period and `beta` items
//! overall before each packing decision. Keeping an item's selection state
//! unchanged between consecutive periods pays a transition bonus. The stated
//! problem maximizes profit; the stored objective is the negated
//! minimization form (the `Maximize` sense tag re-negates reported values).
//! The weight products are linearized with one auxiliary binary per item and
//! period, embedded in the same block as the packing variable.

use std::collections::BTreeMap;

use super::rng::SplitMix64;
use super::ParamError;
use crate::dep::{MipInstance, ScenarioHistory};
use crate::model::{LinConstraint, ObjSense, QipInstance, QuantBlock, Side, VarDomain};
use crate::rational::{rat, Rat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnapsackParams {
    pub items: usize,
    pub periods: usize,
    pub seed: u64,
}

impl KnapsackParams {
    fn validate(&self) -> Result<(), ParamError> {
        if self.items == 0 || self.periods == 0 {
            return Err(ParamError::Invalid("knapsack needs items ≥ 1 and periods ≥ 1".into()));
        }
        Ok(())
    }
}

/// Per-period weight-increase budget `⌈items/(periods+1)⌉ + 1`.
pub fn knapsack_alpha(items: usize, periods: usize) -> i64 {
    (items as i64 + periods as i64) / (periods as i64 + 1) + 1
}

/// Overall weight-increase budget.
pub fn knapsack_beta(items: usize) -> i64 {
    items as i64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnapsackData {
    pub label: String,
    pub items: usize,
    pub periods: usize,
    /// `profits[t][i]` for `t ∈ 0..=periods`, uniform in `{0..100}`.
    pub profits: Vec<Vec<i64>>,
    /// `base_weights[t][i]` for `t ∈ 0..=periods`, uniform in `{0..50}`.
    pub base_weights: Vec<Vec<i64>>,
    /// `extra_weights[t-1][i]` for `t ∈ 1..=periods`, uniform in `{5..20}`.
    pub extra_weights: Vec<Vec<i64>>,
    /// Transition bonus per item, uniform in `{0..50}`, constant over periods.
    pub bonuses: Vec<i64>,
    /// Constant capacity, uniform in `{⌊Σw⁰/3⌋..Σw⁰}`.
    pub capacity: i64,
}

impl KnapsackData {
    /// Draw order: profits by period then item, base weights likewise,
    /// extra weights likewise, bonuses by item, capacity last.
    pub fn generate(params: &KnapsackParams) -> Result<KnapsackData, ParamError> {
        params.validate()?;
        let n = params.items;
        let mut rng = SplitMix64::new(params.seed);
        let profits: Vec<Vec<i64>> = (0..=params.periods)
            .map(|_| (0..n).map(|_| rng.range(0, 100)).collect())
            .collect();
        let base_weights: Vec<Vec<i64>> = (0..=params.periods)
            .map(|_| (0..n).map(|_| rng.range(0, 50)).collect())
            .collect();
        let extra_weights: Vec<Vec<i64>> = (0..params.periods)
            .map(|_| (0..n).map(|_| rng.range(5, 20)).collect())
            .collect();
        let bonuses: Vec<i64> = (0..n).map(|_| rng.range(0, 50)).collect();
        let initial_weight: i64 = base_weights[0].iter().sum();
        let capacity = rng.range(initial_weight / 3, initial_weight);
        Ok(KnapsackData {
            label: format!("kna-n{}-T{}-s{}", params.items, params.periods, params.seed),
            items: params.items,
            periods: params.periods,
            profits,
            base_weights,
            extra_weights,
            bonuses,
            capacity,
        })
    }

    pub fn alpha(&self) -> i64 {
        knapsack_alpha(self.items, self.periods)
    }

    pub fn beta(&self) -> i64 {
        knapsack_beta(self.items)
    }
}

pub fn build_knapsack_qip_pu(params: &KnapsackParams) -> Result<QipInstance, ParamError> {
    Ok(knapsack_qip_pu_from(&KnapsackData::generate(params)?))
}

pub fn build_knapsack_dep(params: &KnapsackParams) -> Result<MipInstance, ParamError> {
    Ok(knapsack_dep_from(&KnapsackData::generate(params)?))
}

/// Index layout: period `t ∈ 1..=periods` groups hold the weight-increase
/// block, then packing, linearization and bonus variables.
struct Layout {
    items: usize,
}

impl Layout {
    fn group(&self, t: usize) -> usize {
        self.items + (t - 1) * 4 * self.items
    }
    fn increase(&self, t: usize, i: usize) -> usize {
        self.group(t) + i
    }
    fn pack(&self, t: usize, i: usize) -> usize {
        if t == 0 {
            i
        } else {
            self.group(t) + self.items + i
        }
    }
    fn product(&self, t: usize, i: usize) -> usize {
        self.group(t) + 2 * self.items + i
    }
    fn bonus(&self, t: usize, i: usize) -> usize {
        self.group(t) + 3 * self.items + i
    }
}

pub fn knapsack_qip_pu_from(data: &KnapsackData) -> QipInstance {
    let n = data.items;
    let horizon = data.periods;
    let l = Layout { items: n };
    let num_vars = n + horizon * 4 * n;
    let domains = vec![VarDomain::binary(); num_vars];

    let mut blocks = vec![QuantBlock::exists((0..n).collect())];
    for t in 1..=horizon {
        blocks.push(QuantBlock::forall((0..n).map(|i| l.increase(t, i)).collect()));
        let mut exist: Vec<usize> = (0..n).map(|i| l.pack(t, i)).collect();
        exist.extend((0..n).map(|i| l.product(t, i)));
        exist.extend((0..n).map(|i| l.bonus(t, i)));
        blocks.push(QuantBlock::exists(exist));
    }

    // Stored minimization form of the profit maximization.
    let mut objective: BTreeMap<usize, Rat> = BTreeMap::new();
    for t in 0..=horizon {
        for i in 0..n {
            if data.profits[t][i] != 0 {
                objective.insert(l.pack(t, i), rat(-data.profits[t][i]));
            }
        }
    }
    for t in 1..=horizon {
        for i in 0..n {
            if data.bonuses[i] != 0 {
                objective.insert(l.bonus(t, i), rat(-data.bonuses[i]));
            }
        }
    }

    let mut rows = Vec::new();
    // Capacity of the deterministic period.
    rows.push(LinConstraint::le(
        (0..n).map(|i| (l.pack(0, i), rat(data.base_weights[0][i]))).collect(),
        rat(data.capacity),
        Side::Existential,
    ));
    for t in 1..=horizon {
        // Capacity with linearized weight increases.
        let mut cap: BTreeMap<usize, Rat> = BTreeMap::new();
        for i in 0..n {
            cap.insert(l.pack(t, i), rat(data.base_weights[t][i]));
            cap.insert(l.product(t, i), rat(data.extra_weights[t - 1][i]));
        }
        rows.push(LinConstraint::le(cap, rat(data.capacity), Side::Existential));

        for i in 0..n {
            // product = pack · increase
            rows.push(LinConstraint::le(
                [(l.product(t, i), rat(1)), (l.pack(t, i), rat(-1))].into(),
                rat(0),
                Side::Existential,
            ));
            rows.push(LinConstraint::le(
                [(l.product(t, i), rat(1)), (l.increase(t, i), rat(-1))].into(),
                rat(0),
                Side::Existential,
            ));
            rows.push(LinConstraint::le(
                [
                    (l.pack(t, i), rat(1)),
                    (l.increase(t, i), rat(1)),
                    (l.product(t, i), rat(-1)),
                ]
                .into(),
                rat(1),
                Side::Existential,
            ));
            // Bonus only when the selection state is unchanged.
            rows.push(LinConstraint::le(
                [
                    (l.bonus(t, i), rat(1)),
                    (l.pack(t - 1, i), rat(1)),
                    (l.pack(t, i), rat(-1)),
                ]
                .into(),
                rat(1),
                Side::Existential,
            ));
            rows.push(LinConstraint::le(
                [
                    (l.bonus(t, i), rat(1)),
                    (l.pack(t - 1, i), rat(-1)),
                    (l.pack(t, i), rat(1)),
                ]
                .into(),
                rat(1),
                Side::Existential,
            ));
        }
    }

    // Budgeted uncertainty: per-period and cumulative increase budgets.
    let mut universal_rows = Vec::new();
    for t in 1..=horizon {
        universal_rows.push(LinConstraint::le(
            (0..n).map(|i| (l.increase(t, i), rat(1))).collect(),
            rat(data.alpha()),
            Side::Universal,
        ));
        let cumulative: BTreeMap<usize, Rat> = (1..=t)
            .flat_map(|s| (0..n).map(move |i| (s, i)))
            .map(|(s, i)| (l.increase(s, i), rat(1)))
            .collect();
        universal_rows.push(LinConstraint::le(cumulative, rat(data.beta()), Side::Universal));
    }

    QipInstance {
        name: format!("{}-qippu", data.label),
        domains,
        blocks,
        objective,
        existential_rows: rows,
        universal_rows,
        sense: ObjSense::Maximize,
    }
}

/// Weight-increase sequences within the per-period and cumulative budgets,
/// lexicographic per period.
fn budget_sequences(n: usize, periods: usize, alpha: i64, beta: i64) -> Vec<Vec<Vec<i64>>> {
    fn patterns(n: usize, limit: i64) -> Vec<Vec<i64>> {
        let mut out = Vec::new();
        for mask in 0..(1u32 << n) {
            let bits: Vec<i64> = (0..n).map(|i| i64::from(mask >> i & 1 == 1)).collect();
            if bits.iter().sum::<i64>() <= limit {
                out.push(bits);
            }
        }
        out.sort();
        out
    }
    let mut out: Vec<(Vec<Vec<i64>>, i64)> = vec![(Vec::new(), 0)];
    for _ in 0..periods {
        let mut next = Vec::new();
        for (seq, spent) in &out {
            for p in patterns(n, alpha.min(beta - spent)) {
                let used: i64 = p.iter().sum();
                let mut s = seq.clone();
                s.push(p);
                next.push((s, spent + used));
            }
        }
        out = next;
    }
    out.into_iter().map(|(seq, _)| seq).collect()
}

/// Hand-built deterministic equivalent over the budget-feasible increase
/// patterns; weights are scenario constants, so no linearization variables.
pub fn knapsack_dep_from(data: &KnapsackData) -> MipInstance {
    let n = data.items;
    let horizon = data.periods;
    let l = Layout { items: n };

    let leaves = budget_sequences(n, horizon, data.alpha(), data.beta());
    let mut domains: Vec<VarDomain> = Vec::new();
    let mut var_origin = Vec::new();
    let mut pack_copy: BTreeMap<(usize, Vec<Vec<i64>>), usize> = BTreeMap::new();

    pack_copy.insert((0, Vec::new()), 0);
    for i in 0..n {
        domains.push(VarDomain::binary());
        var_origin.push(Some((l.pack(0, i), ScenarioHistory::empty())));
    }
    for t in 1..=horizon {
        let mut prefixes: Vec<Vec<Vec<i64>>> = leaves.iter().map(|r| r[..t].to_vec()).collect();
        prefixes.dedup();
        for prefix in prefixes {
            pack_copy.insert((t, prefix.clone()), domains.len());
            for i in 0..n {
                domains.push(VarDomain::binary());
                var_origin.push(Some((
                    l.pack(t, i),
                    ScenarioHistory { moves: prefix.clone() },
                )));
            }
            for i in 0..n {
                domains.push(VarDomain::binary());
                var_origin.push(Some((
                    l.bonus(t, i),
                    ScenarioHistory { moves: prefix.clone() },
                )));
            }
        }
    }
    let epigraph = domains.len();
    let recourse_max: i64 = (1..=horizon)
        .map(|t| data.profits[t].iter().sum::<i64>() + data.bonuses.iter().sum::<i64>())
        .sum();
    domains.push(VarDomain::trailing_continuous(-recourse_max, 0));
    var_origin.push(None);

    let pack = |t: usize, prefix: &[Vec<i64>], i: usize| pack_copy[&(t, prefix.to_vec())] + i;
    let bonus = |t: usize, prefix: &[Vec<i64>], i: usize| pack_copy[&(t, prefix.to_vec())] + n + i;

    let mut objective: BTreeMap<usize, Rat> = BTreeMap::new();
    for i in 0..n {
        if data.profits[0][i] != 0 {
            objective.insert(pack(0, &[], i), rat(-data.profits[0][i]));
        }
    }
    objective.insert(epigraph, rat(1));

    let mut rows = Vec::new();
    rows.push(LinConstraint::le(
        (0..n).map(|i| (pack(0, &[], i), rat(data.base_weights[0][i]))).collect(),
        rat(data.capacity),
        Side::Existential,
    ));

    let mut seen_prefix: std::collections::HashSet<(usize, Vec<Vec<i64>>)> =
        std::collections::HashSet::new();
    for r in &leaves {
        for t in 1..=horizon {
            let prefix = &r[..t];
            if !seen_prefix.insert((t, prefix.to_vec())) {
                continue;
            }
            // Scenario-weight capacity.
            let cap: BTreeMap<usize, Rat> = (0..n)
                .map(|i| {
                    let w = data.base_weights[t][i] + data.extra_weights[t - 1][i] * r[t - 1][i];
                    (pack(t, prefix, i), rat(w))
                })
                .collect();
            rows.push(LinConstraint::le(cap, rat(data.capacity), Side::Existential));
            // Bonus linking.
            for i in 0..n {
                let prev = pack(t - 1, &r[..t - 1], i);
                rows.push(LinConstraint::le(
                    [(bonus(t, prefix, i), rat(1)), (prev, rat(1)), (pack(t, prefix, i), rat(-1))]
                        .into(),
                    rat(1),
                    Side::Existential,
                ));
                rows.push(LinConstraint::le(
                    [(bonus(t, prefix, i), rat(1)), (prev, rat(-1)), (pack(t, prefix, i), rat(1))]
                        .into(),
                    rat(1),
                    Side::Existential,
                ));
            }
        }
    }
    // Worst-case recourse profit per leaf (stored-minimization form).
    for r in &leaves {
        let mut coeffs: BTreeMap<usize, Rat> = BTreeMap::new();
        for t in 1..=horizon {
            for i in 0..n {
                if data.profits[t][i] != 0 {
                    coeffs.insert(pack(t, &r[..t], i), rat(-data.profits[t][i]));
                }
                if data.bonuses[i] != 0 {
                    coeffs.insert(bonus(t, &r[..t], i), rat(-data.bonuses[i]));
                }
            }
        }
        coeffs.insert(epigraph, rat(-1));
        rows.push(LinConstraint::le(coeffs, rat(0), Side::Existential));
    }

    MipInstance {
        name: format!("{}-dep", data.label),
        domains,
        objective,
        rows,
        var_origin,
        sense: ObjSense::Maximize,
    }
}

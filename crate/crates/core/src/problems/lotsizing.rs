//! Multistage robust lot-sizing with binary demand uncertainty.
//!
//! In each period one of `basic_orders` basic orders can be placed (quantity
//! delivered next period at unit cost `basic_unit_cost`) and one of
//! `urgent_orders` urgent orders (delivered immediately at the higher
//! `urgent_unit_cost`). The adversary picks the demand of each period at the
//! low or high end of its interval; leftover stock pays storage. Inventory
//! levels are substituted into the rows and the objective, so the stored
//! objective is shifted by the constant
//! `-storage_unit_cost · Σ_t Σ_{t'≤t} demand_low[t']` relative to the raw
//! cost expression; the shift is identical across the matched model
//! variants and leaves optimizers unchanged.

use std::collections::BTreeMap;

use super::rng::SplitMix64;
use super::ParamError;
use crate::dep::{MipInstance, ScenarioHistory};
use crate::model::{LinConstraint, ObjSense, QipInstance, QuantBlock, Side, VarDomain};
use crate::rational::{rat, Rat};

/// Basic order quantities: 64, 32, 16, 8.
const BASIC_QUANTITIES: [i64; 4] = [64, 32, 16, 8];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LotSizingParams {
    pub basic_orders: usize,
    pub urgent_orders: usize,
    pub periods: usize,
    pub seed: u64,
}

impl LotSizingParams {
    fn validate(&self) -> Result<(), ParamError> {
        if self.basic_orders == 0 || self.basic_orders > BASIC_QUANTITIES.len() {
            return Err(ParamError::Invalid(format!(
                "lot-sizing supports 1..={} basic orders",
                BASIC_QUANTITIES.len()
            )));
        }
        if self.urgent_orders == 0 || self.urgent_orders > 100 || self.periods == 0 {
            return Err(ParamError::Invalid(
                "lot-sizing needs 1..=100 urgent orders and periods ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LotSizingData {
    pub label: String,
    pub basic_orders: usize,
    pub urgent_orders: usize,
    pub periods: usize,
    pub basic_unit_cost: i64,
    pub urgent_unit_cost: i64,
    pub storage_unit_cost: i64,
    /// Quantity of basic order `b`: 64, 32, 16, 8.
    pub basic_quantity: Vec<i64>,
    /// Quantity of urgent order `u`: ⌊100/(u+1)⌋ (100, 50, 33, …).
    pub urgent_quantity: Vec<i64>,
    /// Demand interval per period (1-based periods stored 0-based).
    pub demand_low: Vec<i64>,
    pub demand_high: Vec<i64>,
}

impl LotSizingData {
    /// Draw order: basic cost from `{0..5}`, urgent cost from
    /// `{basic+1..10}` (enforcing basic < urgent without rejection),
    /// storage cost from `{0..10}`, then demand lows per period from
    /// `{0..25}`, then demand highs per period from `{75..100}`.
    pub fn generate(params: &LotSizingParams) -> Result<LotSizingData, ParamError> {
        params.validate()?;
        let mut rng = SplitMix64::new(params.seed);
        let basic_unit_cost = rng.range(0, 5);
        let urgent_unit_cost = rng.range(basic_unit_cost + 1, 10);
        let storage_unit_cost = rng.range(0, 10);
        let demand_low = (0..params.periods).map(|_| rng.range(0, 25)).collect();
        let demand_high = (0..params.periods).map(|_| rng.range(75, 100)).collect();
        Ok(LotSizingData {
            label: format!(
                "lot-B{}-U{}-T{}-s{}",
                params.basic_orders, params.urgent_orders, params.periods, params.seed
            ),
            basic_orders: params.basic_orders,
            urgent_orders: params.urgent_orders,
            periods: params.periods,
            basic_unit_cost,
            urgent_unit_cost,
            storage_unit_cost,
            basic_quantity: BASIC_QUANTITIES[..params.basic_orders].to_vec(),
            urgent_quantity: (1..=params.urgent_orders as i64).map(|u| 100 / u).collect(),
            demand_low,
            demand_high,
        })
    }

    fn spread(&self, t: usize) -> i64 {
        self.demand_high[t - 1] - self.demand_low[t - 1]
    }
}

pub fn build_lot_sizing_qip(params: &LotSizingParams) -> Result<QipInstance, ParamError> {
    Ok(lot_sizing_qip_from(&LotSizingData::generate(params)?))
}

pub fn build_lot_sizing_dep(params: &LotSizingParams) -> Result<MipInstance, ParamError> {
    Ok(lot_sizing_dep_from(&LotSizingData::generate(params)?))
}

/// Index layout: basic orders of stage 0, then per period the demand bit,
/// the urgent orders, and (except in the final period) the next stage's
/// basic orders.
struct Layout {
    basic: usize,
    urgent: usize,
    periods: usize,
}

impl Layout {
    fn group(&self, t: usize) -> usize {
        self.basic + (t - 1) * (1 + self.urgent + self.basic)
    }
    fn demand_bit(&self, t: usize) -> usize {
        self.group(t)
    }
    fn urgent_var(&self, t: usize, u: usize) -> usize {
        self.group(t) + 1 + u
    }
    /// Basic-order variable of stage `s` (decided in period `s`, delivered
    /// in period `s+1`); `s` ranges over `0..periods`.
    fn basic_var(&self, s: usize, b: usize) -> usize {
        if s == 0 {
            b
        } else {
            self.group(s) + 1 + self.urgent + b
        }
    }
    fn num_vars(&self) -> usize {
        self.basic + self.periods * (1 + self.urgent) + (self.periods - 1) * self.basic
    }
}

/// Objective and inventory rows with the inventory substituted: stage-`s`
/// basic orders feed every period from `s+1` on, urgent orders of period `t`
/// feed periods `t` on, and the demand bit of period `t` withdraws its
/// spread from the same range.
pub fn lot_sizing_qip_from(data: &LotSizingData) -> QipInstance {
    let l = Layout { basic: data.basic_orders, urgent: data.urgent_orders, periods: data.periods };
    let horizon = data.periods;

    let mut domains = vec![VarDomain::binary(); l.num_vars()];
    for t in 1..=horizon {
        domains[l.demand_bit(t)] = VarDomain::binary();
    }

    let mut blocks = vec![QuantBlock::exists((0..data.basic_orders).collect())];
    for t in 1..=horizon {
        blocks.push(QuantBlock::forall(vec![l.demand_bit(t)]));
        let mut exist: Vec<usize> =
            (0..data.urgent_orders).map(|u| l.urgent_var(t, u)).collect();
        if t < horizon {
            exist.extend((0..data.basic_orders).map(|b| l.basic_var(t, b)));
        }
        blocks.push(QuantBlock::exists(exist));
    }

    let mut objective: BTreeMap<usize, Rat> = BTreeMap::new();
    for s in 0..horizon {
        for b in 0..data.basic_orders {
            let coeff = data.basic_quantity[b]
                * (data.basic_unit_cost + data.storage_unit_cost * (horizon - s) as i64);
            if coeff != 0 {
                objective.insert(l.basic_var(s, b), rat(coeff));
            }
        }
    }
    for t in 1..=horizon {
        for u in 0..data.urgent_orders {
            let coeff = data.urgent_quantity[u]
                * (data.urgent_unit_cost + data.storage_unit_cost * (horizon - t + 1) as i64);
            if coeff != 0 {
                objective.insert(l.urgent_var(t, u), rat(coeff));
            }
        }
        let coeff = -data.storage_unit_cost * data.spread(t) * (horizon - t + 1) as i64;
        if coeff != 0 {
            objective.insert(l.demand_bit(t), rat(coeff));
        }
    }

    // Nonnegative inventory per period.
    let mut rows = Vec::new();
    for t in 1..=horizon {
        let mut coeffs: BTreeMap<usize, Rat> = BTreeMap::new();
        for s in 0..t {
            for b in 0..data.basic_orders {
                coeffs.insert(l.basic_var(s, b), rat(-data.basic_quantity[b]));
            }
        }
        for s in 1..=t {
            for u in 0..data.urgent_orders {
                coeffs.insert(l.urgent_var(s, u), rat(-data.urgent_quantity[u]));
            }
            coeffs.insert(l.demand_bit(s), rat(data.spread(s)));
        }
        let rhs: i64 = -(1..=t).map(|s| data.demand_low[s - 1]).sum::<i64>();
        rows.push(LinConstraint::le(coeffs, rat(rhs), Side::Existential));
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

/// All demand-bit sequences of the horizon, lexicographic.
fn sequences(periods: usize) -> Vec<Vec<i64>> {
    let mut out: Vec<Vec<i64>> = vec![Vec::new()];
    for _ in 0..periods {
        let mut next = Vec::with_capacity(out.len() * 2);
        for seq in &out {
            for bit in 0..=1i64 {
                let mut s = seq.clone();
                s.push(bit);
                next.push(s);
            }
        }
        out = next;
    }
    out
}

fn history(prefix: &[i64]) -> ScenarioHistory {
    ScenarioHistory { moves: prefix.iter().map(|&bit| vec![bit]).collect() }
}

/// Hand-built deterministic equivalent over the `2^periods` demand
/// sequences, inventory substituted, a single worst-case epigraph variable.
pub fn lot_sizing_dep_from(data: &LotSizingData) -> MipInstance {
    let l = Layout { basic: data.basic_orders, urgent: data.urgent_orders, periods: data.periods };
    let horizon = data.periods;

    let mut domains: Vec<VarDomain> = Vec::new();
    let mut var_origin = Vec::new();
    let mut basic_copy: BTreeMap<(usize, Vec<i64>), usize> = BTreeMap::new();
    let mut urgent_copy: BTreeMap<(usize, Vec<i64>), usize> = BTreeMap::new();

    // Stage 0 basic orders, then per period the urgent and next-stage basic
    // copies per demand prefix (mirrors the block order of the quantified
    // model).
    basic_copy.insert((0, Vec::new()), 0);
    for b in 0..data.basic_orders {
        domains.push(VarDomain::binary());
        var_origin.push(Some((l.basic_var(0, b), ScenarioHistory::empty())));
    }
    for t in 1..=horizon {
        for prefix in sequences(t) {
            urgent_copy.insert((t, prefix.clone()), domains.len());
            for u in 0..data.urgent_orders {
                domains.push(VarDomain::binary());
                var_origin.push(Some((l.urgent_var(t, u), history(&prefix))));
            }
            if t < horizon {
                basic_copy.insert((t, prefix.clone()), domains.len());
                for b in 0..data.basic_orders {
                    domains.push(VarDomain::binary());
                    var_origin.push(Some((l.basic_var(t, b), history(&prefix))));
                }
            }
        }
    }
    let epigraph = domains.len();
    let qip = lot_sizing_qip_from(data);
    let (obj_lo, obj_hi) = qip.objective_bounds();
    domains.push(VarDomain::trailing_continuous(
        obj_lo.floor().to_integer() as i64,
        obj_hi.ceil().to_integer() as i64,
    ));
    var_origin.push(None);

    let basic = |s: usize, prefix: &[i64], b: usize| basic_copy[&(s, prefix.to_vec())] + b;
    let urgent = |t: usize, prefix: &[i64], u: usize| urgent_copy[&(t, prefix.to_vec())] + u;

    let mut objective: BTreeMap<usize, Rat> = BTreeMap::new();
    objective.insert(epigraph, rat(1));

    let mut rows = Vec::new();
    // Worst-case cost per demand sequence (same shifted coefficients as the
    // quantified model; the demand-bit terms become per-leaf constants).
    for r in sequences(horizon) {
        let mut coeffs: BTreeMap<usize, Rat> = BTreeMap::new();
        for s in 0..horizon {
            for b in 0..data.basic_orders {
                let c = data.basic_quantity[b]
                    * (data.basic_unit_cost + data.storage_unit_cost * (horizon - s) as i64);
                coeffs.insert(basic(s, &r[..s], b), rat(c));
            }
        }
        let mut constant = 0i64;
        for t in 1..=horizon {
            for u in 0..data.urgent_orders {
                let c = data.urgent_quantity[u]
                    * (data.urgent_unit_cost + data.storage_unit_cost * (horizon - t + 1) as i64);
                coeffs.insert(urgent(t, &r[..t], u), rat(c));
            }
            constant -= data.storage_unit_cost * data.spread(t) * (horizon - t + 1) as i64 * r[t - 1];
        }
        coeffs.insert(epigraph, rat(-1));
        rows.push(LinConstraint::le(coeffs, rat(-constant), Side::Existential));
    }
    // Nonnegative inventory per period and demand prefix.
    for t in 1..=horizon {
        for prefix in sequences(t) {
            let mut coeffs: BTreeMap<usize, Rat> = BTreeMap::new();
            for s in 0..t {
                for b in 0..data.basic_orders {
                    coeffs.insert(basic(s, &prefix[..s], b), rat(-data.basic_quantity[b]));
                }
            }
            for s in 1..=t {
                for u in 0..data.urgent_orders {
                    coeffs.insert(urgent(s, &prefix[..s], u), rat(-data.urgent_quantity[u]));
                }
            }
            let demand: i64 = (1..=t)
                .map(|s| data.demand_low[s - 1] + data.spread(s) * prefix[s - 1])
                .sum();
            rows.push(LinConstraint::le(coeffs, rat(-demand), Side::Existential));
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
    use crate::dep::{enumerate_scenarios, flatten, FlattenConfig, DEFAULT_LEAF_CAP};
    use crate::mip::solve_mip;
    use crate::model::validate;
    use crate::rational::GameValue;
    use crate::search::{oracle_solve, SearchConfig};

    fn tiny_params() -> LotSizingParams {
        LotSizingParams { basic_orders: 3, urgent_orders: 2, periods: 2, seed: 0 }
    }

    #[test]
    fn quantity_tables_match() {
        let data = LotSizingData::generate(&tiny_params()).unwrap();
        assert_eq!(data.basic_quantity, vec![64, 32, 16]);
        assert_eq!(data.urgent_quantity, vec![100, 50]);
        let wide = LotSizingData::generate(&LotSizingParams {
            basic_orders: 4,
            urgent_orders: 3,
            ..tiny_params()
        })
        .unwrap();
        assert_eq!(wide.basic_quantity, vec![64, 32, 16, 8]);
        assert_eq!(wide.urgent_quantity, vec![100, 50, 33]);
    }

    #[test]
    fn urgent_cost_exceeds_basic_cost() {
        for seed in 0..50 {
            let data =
                LotSizingData::generate(&LotSizingParams { seed, ..tiny_params() }).unwrap();
            assert!(data.basic_unit_cost < data.urgent_unit_cost, "seed {seed}");
        }
    }

    #[test]
    fn instances_validate_cleanly() {
        for seed in 0..10 {
            let inst =
                build_lot_sizing_qip(&LotSizingParams { seed, ..tiny_params() }).unwrap();
            assert!(validate(&inst).is_empty(), "seed {seed}");
        }
    }

    #[test]
    fn scenario_tree_has_two_to_the_periods_leaves() {
        let inst = build_lot_sizing_qip(&LotSizingParams {
            periods: 5,
            ..tiny_params()
        })
        .unwrap();
        let tree = enumerate_scenarios(&inst, DEFAULT_LEAF_CAP).unwrap();
        assert_eq!(tree.leaf_count(), 32);
        // The all-low-demand scenario is present.
        assert!(tree.leaves.iter().any(|l| l.moves.iter().all(|m| m == &vec![0])));
    }

    #[test]
    fn deterministic_demand_matches_flattened_solution() {
        // Collapse the demand intervals so the adversary has no influence.
        let mut data = LotSizingData::generate(&tiny_params()).unwrap();
        data.demand_high = data.demand_low.clone();
        let qip = lot_sizing_qip_from(&data);
        let oracle = oracle_solve(&qip).unwrap();
        let mip = flatten(&qip, &FlattenConfig::default()).unwrap();
        let res = solve_mip(&mip, &SearchConfig::default()).unwrap();
        assert_eq!(res.value.map(GameValue::Finite), oracle.value);
    }

    #[test]
    fn hand_built_dep_matches_the_game_value() {
        for seed in 0..5 {
            let params = LotSizingParams { seed, ..tiny_params() };
            let qip = build_lot_sizing_qip(&params).unwrap();
            let dep = build_lot_sizing_dep(&params).unwrap();
            let oracle = oracle_solve(&qip).unwrap();
            let res = solve_mip(&dep, &SearchConfig::default()).unwrap();
            assert_eq!(res.value.map(GameValue::Finite), oracle.value, "seed {seed}");
        }
    }

    /// Variant keeping the inventory levels as explicit integer variables
    /// defined by equality rows. Kept as a disabled fixture: the default
    /// branch-and-bound resolves continuous variables only through the
    /// separable trailing pattern, so the inventory variables are modeled as
    /// integers here and the instance solves noticeably slower.
    #[test]
    #[ignore]
    fn unsubstituted_inventory_variant_agrees() {
        let params = tiny_params();
        let data = LotSizingData::generate(&params).unwrap();
        let sub = build_lot_sizing_dep(&params).unwrap();

        let mut unsub = sub.clone();
        // One inventory variable per period and demand prefix, defined by
        // I_prefix = Σ deliveries - Σ demand, with I ≥ 0 via its domain.
        let horizon = data.periods;
        let max_stock: i64 = data.basic_quantity.iter().sum::<i64>() * horizon as i64
            + data.urgent_quantity.iter().sum::<i64>() * horizon as i64;
        // The substituted inventory rows are exactly the LE rows whose
        // support is all-negative delivery copies (the epigraph rows carry
        // the epigraph variable, whose origin is None).
        let mut extra_rows = Vec::new();
        let mut inventory_rows = Vec::new();
        for (idx, row) in unsub.rows.iter().enumerate() {
            let is_inventory = row.sense == crate::model::Sense::Le
                && !row.coeffs.is_empty()
                && row.coeffs.keys().all(|&j| unsub.var_origin[j].is_some())
                && row.coeffs.values().all(|c| *c < rat(0));
            if is_inventory {
                inventory_rows.push(idx);
            }
        }
        for &idx in &inventory_rows {
            let var = unsub.domains.len();
            unsub.domains.push(VarDomain::integer(0, max_stock));
            unsub.var_origin.push(None);
            let mut def: BTreeMap<usize, Rat> = unsub.rows[idx].coeffs.clone();
            def.insert(var, rat(1));
            // -deliveries + I = -demand  ⇔  I = deliveries - demand
            extra_rows.push(LinConstraint::eq(def, unsub.rows[idx].rhs, Side::Existential));
        }
        let kept: Vec<LinConstraint> = unsub
            .rows
            .iter()
            .enumerate()
            .filter(|(i, _)| !inventory_rows.contains(i))
            .map(|(_, r)| r.clone())
            .collect();
        unsub.rows = kept;
        unsub.rows.extend(extra_rows);

        let cfg = SearchConfig::default();
        let a = solve_mip(&sub, &cfg).unwrap();
        let b = solve_mip(&unsub, &cfg).unwrap();
        assert_eq!(a.value, b.value);
    }
}

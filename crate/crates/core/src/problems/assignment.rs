//! Multistage robust assignment: build a perfect matching on a complete
//! bipartite graph with `size` nodes per side, selecting edges in an initial
//! stage and after each adversarial cost revelation.
//!
//! Structurally the selection family with items replaced by the `size²`
//! edges and the cardinality rows replaced by per-node degree equalities.

use std::collections::BTreeMap;

use super::rng::SplitMix64;
use super::ParamError;
use crate::dep::{MipInstance, ScenarioHistory};
use crate::model::{
    LinConstraint, ObjSense, QipInstance, QuantBlock, Side, VarDomain,
};
use crate::rational::{rat, Rat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssignmentParams {
    /// Nodes per partition side.
    pub size: usize,
    pub periods: usize,
    pub scenarios: usize,
    pub seed: u64,
}

impl AssignmentParams {
    fn validate(&self) -> Result<(), ParamError> {
        if self.size == 0 || self.periods == 0 || self.scenarios == 0 {
            return Err(ParamError::Invalid(
                "assignment needs size ≥ 1, periods ≥ 1, scenarios ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentData {
    pub label: String,
    pub size: usize,
    pub periods: usize,
    pub scenarios: usize,
    /// `initial_costs[i][j]`: initial cost of edge `(i, j)`.
    pub initial_costs: Vec<Vec<i64>>,
    /// `period_costs[t-1][k][i][j]`: edge cost in scenario `k+1` of period `t`.
    pub period_costs: Vec<Vec<Vec<Vec<i64>>>>,
}

impl AssignmentData {
    /// Draw order: initial costs row-major, then period costs by period,
    /// scenario, row, column; every value uniform in `{0..99}`.
    pub fn generate(params: &AssignmentParams) -> Result<AssignmentData, ParamError> {
        params.validate()?;
        let n = params.size;
        let mut rng = SplitMix64::new(params.seed);
        let initial_costs =
            (0..n).map(|_| (0..n).map(|_| rng.range(0, 99)).collect()).collect();
        let period_costs = (0..params.periods)
            .map(|_| {
                (0..params.scenarios)
                    .map(|_| (0..n).map(|_| (0..n).map(|_| rng.range(0, 99)).collect()).collect())
                    .collect()
            })
            .collect();
        Ok(AssignmentData {
            label: format!(
                "ass-n{}-T{}-N{}-s{}",
                params.size, params.periods, params.scenarios, params.seed
            ),
            size: params.size,
            periods: params.periods,
            scenarios: params.scenarios,
            initial_costs,
            period_costs,
        })
    }

    pub fn big_m(&self, t: usize, k: usize) -> i64 {
        self.period_costs[t][k].iter().flatten().sum()
    }

    pub fn bundle_upper(&self, t: usize) -> i64 {
        (0..self.scenarios).map(|k| self.big_m(t, k)).max().unwrap_or(0)
    }
}

pub fn build_assignment_qip_pu(params: &AssignmentParams) -> Result<QipInstance, ParamError> {
    Ok(assignment_qip_pu_from(&AssignmentData::generate(params)?))
}

pub fn build_assignment_qip(params: &AssignmentParams) -> Result<QipInstance, ParamError> {
    Ok(assignment_qip_from(&AssignmentData::generate(params)?))
}

pub fn build_assignment_dep(params: &AssignmentParams) -> Result<MipInstance, ParamError> {
    Ok(assignment_dep_from(&AssignmentData::generate(params)?))
}

struct Layout {
    edges: usize,
    scenarios: usize,
    periods: usize,
    period_width: usize,
    pointer: bool,
}

impl Layout {
    fn period_base(&self, t: usize) -> usize {
        self.edges + (t - 1) * self.period_width
    }
    fn pointer_var(&self, t: usize) -> usize {
        self.period_base(t)
    }
    fn q(&self, t: usize, k: usize) -> usize {
        self.period_base(t) + usize::from(self.pointer) + k
    }
    fn edge(&self, t: usize, e: usize) -> usize {
        if t == 0 {
            e
        } else {
            self.period_base(t) + usize::from(self.pointer) + self.scenarios + e
        }
    }
    fn bundle(&self, t: usize) -> usize {
        self.edges + self.periods * self.period_width + (t - 1)
    }
    fn num_vars(&self) -> usize {
        self.edges + self.periods * self.period_width + self.periods
    }
}

fn core_rows(data: &AssignmentData, l: &Layout) -> Vec<LinConstraint> {
    let n = data.size;
    let edge_id = |i: usize, j: usize| i * n + j;
    let mut rows = Vec::new();

    // Perfect matching: unit degree per left and per right node across stages.
    for i in 0..n {
        let coeffs: BTreeMap<usize, Rat> = (0..=data.periods)
            .flat_map(|t| (0..n).map(move |j| (t, j)))
            .map(|(t, j)| (l.edge(t, edge_id(i, j)), rat(1)))
            .collect();
        rows.push(LinConstraint::eq(coeffs, rat(1), Side::Existential));
    }
    for j in 0..n {
        let coeffs: BTreeMap<usize, Rat> = (0..=data.periods)
            .flat_map(|t| (0..n).map(move |i| (t, i)))
            .map(|(t, i)| (l.edge(t, edge_id(i, j)), rat(1)))
            .collect();
        rows.push(LinConstraint::eq(coeffs, rat(1), Side::Existential));
    }

    for t in 1..=data.periods {
        for k in 0..data.scenarios {
            let m = data.big_m(t - 1, k);
            let mut coeffs: BTreeMap<usize, Rat> = BTreeMap::new();
            for i in 0..n {
                for j in 0..n {
                    coeffs.insert(
                        l.edge(t, edge_id(i, j)),
                        rat(data.period_costs[t - 1][k][i][j]),
                    );
                }
            }
            coeffs.insert(l.q(t, k), rat(m));
            coeffs.insert(l.bundle(t), rat(-1));
            rows.push(LinConstraint::le(coeffs, rat(m), Side::Existential));
        }
    }
    rows
}

fn base_instance(data: &AssignmentData, l: &Layout) -> (Vec<VarDomain>, BTreeMap<usize, Rat>) {
    let n = data.size;
    let mut domains = vec![VarDomain::binary(); l.num_vars()];
    for t in 1..=data.periods {
        domains[l.bundle(t)] = VarDomain::trailing_continuous(0, data.bundle_upper(t - 1));
        if l.pointer {
            domains[l.pointer_var(t)] = VarDomain::integer(1, data.scenarios as i64);
        }
    }
    let mut objective: BTreeMap<usize, Rat> = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            if data.initial_costs[i][j] != 0 {
                objective.insert(l.edge(0, i * n + j), rat(data.initial_costs[i][j]));
            }
        }
    }
    for t in 1..=data.periods {
        objective.insert(l.bundle(t), rat(1));
    }
    (domains, objective)
}

pub fn assignment_qip_pu_from(data: &AssignmentData) -> QipInstance {
    let edges = data.size * data.size;
    let l = Layout {
        edges,
        scenarios: data.scenarios,
        periods: data.periods,
        period_width: data.scenarios + edges,
        pointer: false,
    };
    let (domains, objective) = base_instance(data, &l);

    let mut blocks = vec![QuantBlock::exists((0..edges).collect())];
    for t in 1..=data.periods {
        blocks.push(QuantBlock::forall((0..data.scenarios).map(|k| l.q(t, k)).collect()));
        let mut exist: Vec<usize> = (0..edges).map(|e| l.edge(t, e)).collect();
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

pub fn assignment_qip_from(data: &AssignmentData) -> QipInstance {
    let edges = data.size * data.size;
    let l = Layout {
        edges,
        scenarios: data.scenarios,
        periods: data.periods,
        period_width: 1 + data.scenarios + edges,
        pointer: true,
    };
    let (domains, objective) = base_instance(data, &l);

    let mut blocks = vec![QuantBlock::exists((0..edges).collect())];
    for t in 1..=data.periods {
        blocks.push(QuantBlock::forall(vec![l.pointer_var(t)]));
        let mut exist: Vec<usize> = (0..data.scenarios).map(|k| l.q(t, k)).collect();
        exist.extend((0..edges).map(|e| l.edge(t, e)));
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

fn unit_history(prefix: &[i64], scenarios: usize) -> ScenarioHistory {
    ScenarioHistory {
        moves: prefix
            .iter()
            .map(|&k| (0..scenarios).map(|j| i64::from(j as i64 + 1 == k)).collect())
            .collect(),
    }
}

pub fn assignment_dep_from(data: &AssignmentData) -> MipInstance {
    let n = data.size;
    let edges = n * n;
    let pu_layout = Layout {
        edges,
        scenarios: data.scenarios,
        periods: data.periods,
        period_width: data.scenarios + edges,
        pointer: false,
    };

    let mut domains: Vec<VarDomain> = Vec::new();
    let mut var_origin = Vec::new();
    let mut copy: BTreeMap<(usize, Vec<i64>), usize> = BTreeMap::new();
    for t in 0..=data.periods {
        for prefix in sequences(data.scenarios, t) {
            copy.insert((t, prefix.clone()), domains.len());
            for e in 0..edges {
                domains.push(VarDomain::binary());
                var_origin.push(Some((
                    pu_layout.edge(t, e),
                    unit_history(&prefix, data.scenarios),
                )));
            }
        }
    }
    let epigraph = domains.len();
    let upper: i64 = (0..data.periods).map(|t| data.bundle_upper(t)).sum();
    domains.push(VarDomain::trailing_continuous(0, upper));
    var_origin.push(None);

    let edge = |t: usize, prefix: &[i64], e: usize| copy[&(t, prefix.to_vec())] + e;

    let mut objective: BTreeMap<usize, Rat> = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            if data.initial_costs[i][j] != 0 {
                objective.insert(edge(0, &[], i * n + j), rat(data.initial_costs[i][j]));
            }
        }
    }
    objective.insert(epigraph, rat(1));

    let mut rows = Vec::new();
    let leaves = sequences(data.scenarios, data.periods);
    for r in &leaves {
        let mut coeffs: BTreeMap<usize, Rat> = BTreeMap::new();
        for t in 1..=data.periods {
            let k = (r[t - 1] - 1) as usize;
            for i in 0..n {
                for j in 0..n {
                    *coeffs.entry(edge(t, &r[..t], i * n + j)).or_insert(rat(0)) +=
                        rat(data.period_costs[t - 1][k][i][j]);
                }
            }
        }
        coeffs.insert(epigraph, rat(-1));
        rows.push(LinConstraint::le(coeffs, rat(0), Side::Existential));
    }
    for r in &leaves {
        for i in 0..n {
            let coeffs: BTreeMap<usize, Rat> = (0..=data.periods)
                .flat_map(|t| (0..n).map(move |j| (t, j)))
                .map(|(t, j)| (edge(t, &r[..t], i * n + j), rat(1)))
                .collect();
            rows.push(LinConstraint::eq(coeffs, rat(1), Side::Existential));
        }
        for j in 0..n {
            let coeffs: BTreeMap<usize, Rat> = (0..=data.periods)
                .flat_map(|t| (0..n).map(move |i| (t, i)))
                .map(|(t, i)| (edge(t, &r[..t], i * n + j), rat(1)))
                .collect();
            rows.push(LinConstraint::eq(coeffs, rat(1), Side::Existential));
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

//! Grid specifications and the benchmark runner.
//!
//! A grid file is plain text, one directive per line; `#` starts a comment.
//! Global settings are `key = value` lines; family lines expand the cross
//! product of their parameter lists:
//!
//! ```text
//! time_limit_ms = 5000
//! leaf_cap = 1000000
//! jobs = 1
//! selection items=4 picks=2 periods=1..2 scenarios=2,3 seeds=0..9 models=qippu,qip,dep
//! assignment size=3 periods=1..2 scenarios=2 seeds=0..4 models=qippu,qip,dep
//! lotsizing basic=3 urgent=2 periods=2..4 seeds=0..4 models=qip,dep
//! knapsack items=5 periods=1..3 seeds=0..9 models=qippu,dep
//! ```
//!
//! Parameter values are single numbers, inclusive ranges `a..b`, or comma
//! lists; `picks` defaults to `items/2`. Quantified models run through the
//! game-tree solver (`alphabeta:` tags); `dep` runs the flatten pipeline and
//! the branch-and-bound (`flatten-bnb:dep`), with the expansion time counted
//! against the time limit and a cap failure recorded as `buildfailed`.
//!
//! Runs are independent and may execute on `jobs` worker threads; records
//! are merged deterministically by `(instance_id, model, solver)`. Parallel
//! timing adds scheduling noise, so publication runs should use `jobs = 1`
//! (the default).

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use qrobust_core::dep::{flatten, DepError, FlattenConfig, DEFAULT_LEAF_CAP};
use qrobust_core::mip::{solve_mip, MipStatus};
use qrobust_core::problems::{
    AssignmentParams, FamilyParams, KnapsackParams, LotSizingParams, ModelKind, SelectionParams,
};
use qrobust_core::search::{solve, SearchConfig, SolveStatus};

use crate::record::{BenchRecord, RunStatus};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    pub time_limit_ms: u64,
    pub leaf_cap: u128,
    pub jobs: usize,
    pub tasks: Vec<(FamilyParams, ModelKind)>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { time_limit_ms: 5000, leaf_cap: DEFAULT_LEAF_CAP, jobs: 1, tasks: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("grid line {line}: {message}")]
pub struct GridError {
    pub line: usize,
    pub message: String,
}

fn parse_values(s: &str, line: usize) -> Result<Vec<u64>, GridError> {
    let mut out = Vec::new();
    for part in s.split(',') {
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: u64 = lo
                .parse()
                .map_err(|_| GridError { line, message: format!("invalid range start '{lo}'") })?;
            let hi: u64 = hi
                .parse()
                .map_err(|_| GridError { line, message: format!("invalid range end '{hi}'") })?;
            if lo > hi {
                return Err(GridError { line, message: format!("empty range '{part}'") });
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse().map_err(|_| GridError {
                line,
                message: format!("invalid number '{part}'"),
            })?);
        }
    }
    Ok(out)
}

struct FamilyLine {
    values: std::collections::BTreeMap<String, Vec<u64>>,
    models: Vec<ModelKind>,
    line: usize,
}

impl FamilyLine {
    fn parse(rest: &str, line: usize) -> Result<FamilyLine, GridError> {
        let mut values = std::collections::BTreeMap::new();
        let mut models = Vec::new();
        for field in rest.split_whitespace() {
            let (key, val) = field.split_once('=').ok_or_else(|| GridError {
                line,
                message: format!("expected key=value, found '{field}'"),
            })?;
            if key == "models" {
                for m in val.split(',') {
                    models.push(ModelKind::parse(m).ok_or_else(|| GridError {
                        line,
                        message: format!("unknown model '{m}'"),
                    })?);
                }
            } else {
                values.insert(key.to_string(), parse_values(val, line)?);
            }
        }
        if models.is_empty() {
            return Err(GridError { line, message: "missing models=".into() });
        }
        Ok(FamilyLine { values, models, line })
    }

    fn take(&mut self, key: &str) -> Result<Vec<u64>, GridError> {
        self.values.remove(key).ok_or_else(|| GridError {
            line: self.line,
            message: format!("missing {key}="),
        })
    }

    fn take_or(&mut self, key: &str, default: Vec<u64>) -> Vec<u64> {
        self.values.remove(key).unwrap_or(default)
    }

    fn finish(self) -> Result<(), GridError> {
        if let Some(key) = self.values.keys().next() {
            return Err(GridError {
                line: self.line,
                message: format!("unknown parameter '{key}'"),
            });
        }
        Ok(())
    }
}

fn check_models(
    family: &str,
    allowed: &[ModelKind],
    models: &[ModelKind],
    line: usize,
) -> Result<(), GridError> {
    for m in models {
        if !allowed.contains(m) {
            return Err(GridError {
                line,
                message: format!("family {family} has no {m} variant"),
            });
        }
    }
    Ok(())
}

/// Parses a grid file; see the module docs for the format.
pub fn parse_grid(text: &str) -> Result<GridSpec, GridError> {
    let mut spec = GridSpec::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let first = content.split_whitespace().next().unwrap_or("");
        let is_family = matches!(first, "selection" | "assignment" | "lotsizing" | "knapsack");
        if !is_family {
            let (key, value) = content.split_once('=').ok_or_else(|| GridError {
                line,
                message: format!("expected 'key = value' or a family line, found '{content}'"),
            })?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "time_limit_ms" => {
                    spec.time_limit_ms = value.parse().map_err(|_| GridError {
                        line,
                        message: format!("invalid time_limit_ms '{value}'"),
                    })?;
                }
                "leaf_cap" => {
                    spec.leaf_cap = value.parse().map_err(|_| GridError {
                        line,
                        message: format!("invalid leaf_cap '{value}'"),
                    })?;
                }
                "jobs" => {
                    spec.jobs = value.parse().map_err(|_| GridError {
                        line,
                        message: format!("invalid jobs '{value}'"),
                    })?;
                }
                _ => return Err(GridError { line, message: format!("unknown setting '{key}'") }),
            }
            continue;
        }

        let (family, rest) = content.split_once(char::is_whitespace).ok_or_else(|| {
            GridError { line, message: format!("family line without parameters: '{content}'") }
        })?;
        let mut fl = FamilyLine::parse(rest, line)?;
        match family {
            "selection" => {
                check_models(family, &[ModelKind::QipPu, ModelKind::Qip, ModelKind::Dep], &fl.models, line)?;
                let items = fl.take("items")?;
                let picks = fl.take_or("picks", items.iter().map(|&n| n / 2).collect());
                let periods = fl.take("periods")?;
                let scenarios = fl.take("scenarios")?;
                let seeds = fl.take("seeds")?;
                let models = fl.models.clone();
                fl.finish()?;
                for (&n, &p) in items.iter().zip(picks.iter().cycle()) {
                    if n != 2 * p {
                        return Err(GridError {
                            line,
                            message: format!("selection needs items = 2·picks (items={n}, picks={p})"),
                        });
                    }
                    for &t in &periods {
                        for &k in &scenarios {
                            for &seed in &seeds {
                                let params = FamilyParams::Selection(SelectionParams {
                                    items: n as usize,
                                    picks: p as usize,
                                    periods: t as usize,
                                    scenarios: k as usize,
                                    seed,
                                });
                                for &m in &models {
                                    spec.tasks.push((params.clone(), m));
                                }
                            }
                        }
                    }
                }
            }
            "assignment" => {
                check_models(family, &[ModelKind::QipPu, ModelKind::Qip, ModelKind::Dep], &fl.models, line)?;
                let size = fl.take("size")?;
                let periods = fl.take("periods")?;
                let scenarios = fl.take("scenarios")?;
                let seeds = fl.take("seeds")?;
                let models = fl.models.clone();
                fl.finish()?;
                for &n in &size {
                    for &t in &periods {
                        for &k in &scenarios {
                            for &seed in &seeds {
                                let params = FamilyParams::Assignment(AssignmentParams {
                                    size: n as usize,
                                    periods: t as usize,
                                    scenarios: k as usize,
                                    seed,
                                });
                                for &m in &models {
                                    spec.tasks.push((params.clone(), m));
                                }
                            }
                        }
                    }
                }
            }
            "lotsizing" => {
                check_models(family, &[ModelKind::Qip, ModelKind::Dep], &fl.models, line)?;
                let basic = fl.take("basic")?;
                let urgent = fl.take("urgent")?;
                let periods = fl.take("periods")?;
                let seeds = fl.take("seeds")?;
                let models = fl.models.clone();
                fl.finish()?;
                for &b in &basic {
                    for &u in &urgent {
                        for &t in &periods {
                            for &seed in &seeds {
                                let params = FamilyParams::LotSizing(LotSizingParams {
                                    basic_orders: b as usize,
                                    urgent_orders: u as usize,
                                    periods: t as usize,
                                    seed,
                                });
                                for &m in &models {
                                    spec.tasks.push((params.clone(), m));
                                }
                            }
                        }
                    }
                }
            }
            "knapsack" => {
                check_models(family, &[ModelKind::QipPu, ModelKind::Dep], &fl.models, line)?;
                let items = fl.take("items")?;
                let periods = fl.take("periods")?;
                let seeds = fl.take("seeds")?;
                let models = fl.models.clone();
                fl.finish()?;
                for &n in &items {
                    for &t in &periods {
                        for &seed in &seeds {
                            let params = FamilyParams::Knapsack(KnapsackParams {
                                items: n as usize,
                                periods: t as usize,
                                seed,
                            });
                            for &m in &models {
                                spec.tasks.push((params.clone(), m));
                            }
                        }
                    }
                }
            }
            _ => return Err(GridError { line, message: format!("unknown family '{family}'") }),
        }
    }
    Ok(spec)
}

fn family_columns(params: &FamilyParams) -> [Option<u64>; 6] {
    match params {
        FamilyParams::Selection(p) => [
            Some(p.items as u64),
            Some(p.picks as u64),
            Some(p.periods as u64),
            Some(p.scenarios as u64),
            None,
            None,
        ],
        FamilyParams::Assignment(p) => [
            Some(p.size as u64),
            None,
            Some(p.periods as u64),
            Some(p.scenarios as u64),
            None,
            None,
        ],
        FamilyParams::LotSizing(p) => [
            None,
            None,
            Some(p.periods as u64),
            None,
            Some(p.basic_orders as u64),
            Some(p.urgent_orders as u64),
        ],
        FamilyParams::Knapsack(p) => {
            [Some(p.items as u64), None, Some(p.periods as u64), None, None, None]
        }
    }
}

/// Runs one (instance, model) cell and reports the record.
pub fn run_task(
    params: &FamilyParams,
    model: ModelKind,
    time_limit_ms: u64,
    leaf_cap: u128,
) -> BenchRecord {
    let [n, p, periods, scenarios, basic_orders, urgent_orders] = family_columns(params);
    let mut record = BenchRecord {
        instance_id: params.instance_id(),
        family: params.family_name().to_string(),
        n,
        p,
        periods,
        scenarios,
        basic_orders,
        urgent_orders,
        model: model.as_str().to_string(),
        solver: String::new(),
        status: RunStatus::TimeLimit,
        value: None,
        time_ms: 0,
        nodes: 0,
    };

    match model {
        ModelKind::QipPu | ModelKind::Qip => {
            record.solver = format!("alphabeta:{model}");
            let inst = params.build_qip(model).expect("grid-validated model variant");
            let cfg = SearchConfig::with_time_limit_ms(time_limit_ms);
            let res = solve(&inst, &cfg).expect("generated instances are separable");
            record.status = match res.status {
                SolveStatus::Optimal => RunStatus::Optimal,
                SolveStatus::Infeasible => RunStatus::Infeasible,
                SolveStatus::TimeLimit => RunStatus::TimeLimit,
            };
            record.value = res
                .value
                .map(|v| inst.display_value(v))
                .and_then(|v| v.finite());
            record.time_ms = res.elapsed_ms;
            record.nodes = res.nodes;
        }
        ModelKind::Dep => {
            record.solver = "flatten-bnb:dep".to_string();
            let quantified = params.quantified_model();
            let inst = params.build_qip(quantified).expect("grid-validated model variant");
            let started = Instant::now();
            match flatten(&inst, &FlattenConfig { leaf_cap }) {
                Err(DepError::ScenarioExplosion { .. }) => {
                    record.status = RunStatus::BuildFailed;
                    record.time_ms = started.elapsed().as_millis() as u64;
                }
                Err(DepError::Solve(e)) => panic!("flatten failed on generated instance: {e}"),
                Ok(mip) => {
                    let build_ms = started.elapsed().as_millis() as u64;
                    let remaining = time_limit_ms.saturating_sub(build_ms).max(1);
                    let cfg = SearchConfig::with_time_limit_ms(remaining);
                    let res = solve_mip(&mip, &cfg).expect("flattened instances are separable");
                    record.status = match res.status {
                        MipStatus::Optimal => RunStatus::Optimal,
                        MipStatus::Infeasible => RunStatus::Infeasible,
                        MipStatus::TimeLimit => RunStatus::TimeLimit,
                    };
                    record.value = res.value.map(|v| match mip.sense {
                        qrobust_core::model::ObjSense::Minimize => v,
                        qrobust_core::model::ObjSense::Maximize => -v,
                    });
                    record.time_ms = started.elapsed().as_millis() as u64;
                    record.nodes = res.nodes;
                }
            }
        }
    }
    if record.status == RunStatus::TimeLimit {
        // An incumbent bound is not a solved value.
        record.value = None;
    }
    record
}

/// Runs the whole grid; records come back sorted by
/// `(instance_id, model, solver)`.
pub fn run_grid(spec: &GridSpec) -> Vec<BenchRecord> {
    let results: Vec<Option<BenchRecord>> = if spec.jobs <= 1 {
        spec.tasks
            .iter()
            .map(|(params, model)| Some(run_task(params, *model, spec.time_limit_ms, spec.leaf_cap)))
            .collect()
    } else {
        let cursor = AtomicUsize::new(0);
        let results = Mutex::new(vec![None; spec.tasks.len()]);
        std::thread::scope(|scope| {
            for _ in 0..spec.jobs.min(spec.tasks.len()) {
                scope.spawn(|| loop {
                    let idx = cursor.fetch_add(1, Ordering::SeqCst);
                    if idx >= spec.tasks.len() {
                        break;
                    }
                    let (params, model) = &spec.tasks[idx];
                    let record = run_task(params, *model, spec.time_limit_ms, spec.leaf_cap);
                    results.lock().unwrap()[idx] = Some(record);
                });
            }
        });
        results.into_inner().unwrap()
    };
    let mut records: Vec<BenchRecord> = results.into_iter().flatten().collect();
    records.sort_by(|a, b| {
        (&a.instance_id, &a.model, &a.solver).cmp(&(&b.instance_id, &b.model, &b.solver))
    });
    records
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_grid_yields_one_record_per_cell() {
        // 2 seeds × 2 models × 1 solver each = 4 records.
        let spec = parse_grid(
            "time_limit_ms = 10000\n\
             selection items=2 periods=1 scenarios=2 seeds=0..1 models=qippu,qip\n",
        )
        .unwrap();
        assert_eq!(spec.tasks.len(), 4);
        let records = run_grid(&spec);
        assert_eq!(records.len(), 4);
        for r in &records {
            assert_eq!(r.status, RunStatus::Optimal);
        }
        // Matched models agree per instance.
        for pair in records.chunks(2) {
            assert_eq!(pair[0].instance_id, pair[1].instance_id);
            assert_eq!(pair[0].value, pair[1].value);
        }
    }

    #[test]
    fn dep_runs_through_the_flatten_pipeline() {
        let spec = parse_grid(
            "time_limit_ms = 10000\n\
             selection items=2 periods=1 scenarios=2 seeds=0 models=qippu,dep\n",
        )
        .unwrap();
        let records = run_grid(&spec);
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].value, records[1].value);
        assert!(records.iter().any(|r| r.solver == "flatten-bnb:dep"));
    }

    #[test]
    fn scenario_cap_becomes_buildfailed() {
        let spec = parse_grid(
            "leaf_cap = 2\n\
             time_limit_ms = 5000\n\
             selection items=2 periods=2 scenarios=2 seeds=0 models=dep\n",
        )
        .unwrap();
        let records = run_grid(&spec);
        assert_eq!(records[0].status, RunStatus::BuildFailed);
    }

    #[test]
    fn unsupported_family_model_is_a_parse_error() {
        let err = parse_grid("lotsizing basic=3 urgent=2 periods=2 seeds=0 models=qippu\n")
            .unwrap_err();
        assert!(err.message.contains("no qippu variant"));
    }

    #[test]
    fn selection_shape_is_checked_at_parse_time() {
        let err = parse_grid("selection items=5 picks=2 periods=1 scenarios=2 seeds=0 models=qip\n")
            .unwrap_err();
        assert!(err.message.contains("2·picks"));
    }

    #[test]
    fn parallel_and_sequential_runs_agree_on_everything_but_time() {
        let text = "time_limit_ms = 10000\n\
                    selection items=2 periods=1 scenarios=2 seeds=0..3 models=qippu,qip\n";
        let mut sequential = parse_grid(text).unwrap();
        sequential.jobs = 1;
        let mut parallel = parse_grid(text).unwrap();
        parallel.jobs = 4;
        let a = run_grid(&sequential);
        let b = run_grid(&parallel);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.instance_id, y.instance_id);
            assert_eq!(x.solver, y.solver);
            assert_eq!(x.status, y.status);
            assert_eq!(x.value, y.value);
            assert_eq!(x.nodes, y.nodes);
        }
    }
}

//! Performance profiles over benchmark records.
//!
//! For each solver tag `s` and factor `τ`, `p_s(τ)` is the fraction of
//! instances whose runtime is within a factor `τ` of the per-instance best
//! across all solvers. Unsolved runs count as infinite time; solved runs are
//! rounded to whole seconds and runs of zero seconds are lifted to one
//! second. Ties at the minimum credit every tied solver. The factor grid is
//! `τ = 1 + 0.5·t` for `t = 0, 1, …` until every curve is constant.

use std::collections::BTreeMap;

use qrobust_core::rational::{rat, ratio, Rat};

use crate::record::BenchRecord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileTable {
    pub taus: Vec<Rat>,
    /// Solver tags in first-appearance order with their `p_s` values per τ.
    pub curves: Vec<(String, Vec<Rat>)>,
}

impl ProfileTable {
    pub fn solver_names(&self) -> Vec<&str> {
        self.curves.iter().map(|(s, _)| s.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProfileError {
    #[error("solver '{solver}' covers {got} instances, expected {expected}")]
    MismatchedInstanceSets { solver: String, got: usize, expected: usize },
    #[error("duplicate record for instance '{instance}' and solver '{solver}'")]
    DuplicateRecord { instance: String, solver: String },
    #[error("no records")]
    Empty,
}

/// Profile time in whole seconds: round half up, lift zero to one.
fn profile_seconds(record: &BenchRecord) -> Option<u64> {
    if !record.status.solved() {
        return None;
    }
    Some(((record.time_ms + 500) / 1000).max(1))
}

pub fn performance_profile(records: &[BenchRecord]) -> Result<ProfileTable, ProfileError> {
    if records.is_empty() {
        return Err(ProfileError::Empty);
    }
    let mut solvers: Vec<String> = Vec::new();
    for r in records {
        if !solvers.contains(&r.solver) {
            solvers.push(r.solver.clone());
        }
    }

    // time[instance][solver]
    let mut times: BTreeMap<&str, BTreeMap<&str, Option<u64>>> = BTreeMap::new();
    for r in records {
        let per_solver = times.entry(&r.instance_id).or_default();
        if per_solver.insert(&r.solver, profile_seconds(r)).is_some() {
            return Err(ProfileError::DuplicateRecord {
                instance: r.instance_id.clone(),
                solver: r.solver.clone(),
            });
        }
    }
    let expected = times.len();
    for s in &solvers {
        let got = times.values().filter(|per| per.contains_key(s.as_str())).count();
        if got != expected {
            return Err(ProfileError::MismatchedInstanceSets {
                solver: s.clone(),
                got,
                expected,
            });
        }
    }

    // Performance ratios; None is +∞ (unsolved, or no solver solved it).
    let mut ratios: BTreeMap<&str, Vec<Option<Rat>>> =
        solvers.iter().map(|s| (s.as_str(), Vec::new())).collect();
    for per_solver in times.values() {
        let best = per_solver.values().flatten().min().copied();
        for s in &solvers {
            let ratio = match (per_solver[s.as_str()], best) {
                (Some(t), Some(b)) => Some(ratio(t as i64, b as i64)),
                _ => None,
            };
            ratios.get_mut(s.as_str()).unwrap().push(ratio);
        }
    }

    // τ grid up to the largest finite ratio.
    let max_ratio = ratios.values().flatten().flatten().max().copied();
    let mut taus = vec![rat(1)];
    if let Some(r) = max_ratio {
        let mut t = 0i64;
        while rat(1) + ratio(t, 2) < r {
            t += 1;
            taus.push(rat(1) + ratio(t, 2));
        }
    }

    let total = rat(expected as i64);
    let curves = solvers
        .iter()
        .map(|s| {
            let rs = &ratios[s.as_str()];
            let points = taus
                .iter()
                .map(|tau| {
                    let within =
                        rs.iter().filter(|r| r.as_ref().is_some_and(|r| r <= tau)).count();
                    rat(within as i64) / total
                })
                .collect();
            (s.clone(), points)
        })
        .collect();

    Ok(ProfileTable { taus, curves })
}

/// Profile CSV: `tau` column plus one column per solver, decimal values.
pub fn emit_profile_csv(profile: &ProfileTable) -> String {
    let mut out = String::new();
    out.push_str("tau");
    for (s, _) in &profile.curves {
        out.push(',');
        out.push_str(s);
    }
    out.push('\n');
    for (i, tau) in profile.taus.iter().enumerate() {
        out.push_str(&format_decimal(*tau));
        for (_, points) in &profile.curves {
            out.push(',');
            out.push_str(&format_decimal(points[i]));
        }
        out.push('\n');
    }
    out
}

fn format_decimal(r: Rat) -> String {
    let scaled = (r * rat(1_000_000)).round().to_integer();
    let whole = scaled / 1_000_000;
    let frac = (scaled % 1_000_000).abs();
    if frac == 0 {
        format!("{whole}")
    } else {
        let s = format!("{whole}.{frac:06}");
        s.trim_end_matches('0').to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::RunStatus;

    fn record(instance: &str, solver: &str, status: RunStatus, time_ms: u64) -> BenchRecord {
        BenchRecord {
            instance_id: instance.to_string(),
            family: "selection".into(),
            n: None,
            p: None,
            periods: None,
            scenarios: None,
            basic_orders: None,
            urgent_orders: None,
            model: "qippu".into(),
            solver: solver.to_string(),
            status,
            value: None,
            time_ms,
            nodes: 0,
        }
    }

    #[test]
    fn two_solver_crossover() {
        // A solves (2s, 4s), B solves (4s, 2s): each is fastest on one
        // instance, both reach 1.0 at τ = 2.
        let records = vec![
            record("p1", "A", RunStatus::Optimal, 2000),
            record("p2", "A", RunStatus::Optimal, 4000),
            record("p1", "B", RunStatus::Optimal, 4000),
            record("p2", "B", RunStatus::Optimal, 2000),
        ];
        let profile = performance_profile(&records).unwrap();
        assert_eq!(profile.taus, vec![rat(1), ratio(3, 2), rat(2)]);
        let a = &profile.curves[0];
        let b = &profile.curves[1];
        assert_eq!(a.1, vec![ratio(1, 2), ratio(1, 2), rat(1)]);
        assert_eq!(b.1, vec![ratio(1, 2), ratio(1, 2), rat(1)]);
    }

    #[test]
    fn single_solver_is_flat_at_its_solve_rate() {
        let records = vec![
            record("p1", "A", RunStatus::Optimal, 1000),
            record("p2", "A", RunStatus::TimeLimit, 5000),
        ];
        let profile = performance_profile(&records).unwrap();
        assert_eq!(profile.taus, vec![rat(1)]);
        assert_eq!(profile.curves[0].1, vec![ratio(1, 2)]);
    }

    #[test]
    fn fully_unsolved_solver_stays_at_zero() {
        let records = vec![
            record("p1", "A", RunStatus::Optimal, 1000),
            record("p1", "B", RunStatus::TimeLimit, 9000),
        ];
        let profile = performance_profile(&records).unwrap();
        for p in &profile.curves[1].1 {
            assert_eq!(*p, rat(0));
        }
    }

    #[test]
    fn zero_second_runs_are_lifted() {
        // 300 ms rounds to 0 s and lifts to 1 s, matching a 1 s run.
        let records = vec![
            record("p1", "A", RunStatus::Optimal, 300),
            record("p1", "B", RunStatus::Optimal, 1000),
        ];
        let profile = performance_profile(&records).unwrap();
        assert_eq!(profile.taus, vec![rat(1)]);
        assert_eq!(profile.curves[0].1, vec![rat(1)]);
        assert_eq!(profile.curves[1].1, vec![rat(1)]);
    }

    #[test]
    fn mismatched_sets_are_rejected() {
        let records = vec![
            record("p1", "A", RunStatus::Optimal, 1000),
            record("p2", "A", RunStatus::Optimal, 1000),
            record("p1", "B", RunStatus::Optimal, 1000),
        ];
        assert!(matches!(
            performance_profile(&records),
            Err(ProfileError::MismatchedInstanceSets { .. })
        ));
    }

    #[test]
    fn monotone_and_bounded_on_random_sets() {
        let mut s = 0x5151_0000_dead_0001u64;
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            s
        };
        for _ in 0..200 {
            let solvers = 1 + (next() % 4) as usize;
            let instances = 1 + (next() % 6) as usize;
            let mut records = Vec::new();
            for p in 0..instances {
                for s_id in 0..solvers {
                    let status = if next() % 4 == 0 {
                        RunStatus::TimeLimit
                    } else {
                        RunStatus::Optimal
                    };
                    records.push(record(
                        &format!("p{p}"),
                        &format!("s{s_id}"),
                        status,
                        next() % 20_000,
                    ));
                }
            }
            let profile = performance_profile(&records).unwrap();
            for (_, points) in &profile.curves {
                for pair in points.windows(2) {
                    assert!(pair[0] <= pair[1], "p_s must be nondecreasing in tau");
                }
                for p in points {
                    assert!(*p >= rat(0) && *p <= rat(1));
                }
            }
        }
    }

    #[test]
    fn tied_fastest_solvers_sum_to_at_least_one() {
        let mut s = 0xabcd_ef01_2345_6789u64;
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            s
        };
        for _ in 0..100 {
            let solvers = 1 + (next() % 4) as usize;
            let instances = 1 + (next() % 5) as usize;
            let mut records = Vec::new();
            for p in 0..instances {
                // Every instance is solved by at least one solver.
                for s_id in 0..solvers {
                    let status = if s_id > 0 && next() % 3 == 0 {
                        RunStatus::TimeLimit
                    } else {
                        RunStatus::Optimal
                    };
                    records.push(record(
                        &format!("p{p}"),
                        &format!("s{s_id}"),
                        status,
                        next() % 10_000,
                    ));
                }
            }
            let profile = performance_profile(&records).unwrap();
            let at_one: Rat = profile.curves.iter().map(|(_, pts)| pts[0]).sum();
            assert!(at_one >= rat(1));
        }
    }
}

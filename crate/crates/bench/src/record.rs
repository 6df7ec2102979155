//! Per-run result rows and their CSV form.

use std::fmt;
use std::str::FromStr;

use qrobust_core::rational::Rat;

/// Fixed column order of the records CSV.
pub const CSV_HEADER: &str = "instance_id,family,n,p,T,N,B,U,model,solver,status,value,time_ms,nodes";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Optimal,
    Infeasible,
    TimeLimit,
    /// The deterministic equivalent could not be created (scenario cap).
    BuildFailed,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Optimal => "optimal",
            RunStatus::Infeasible => "infeasible",
            RunStatus::TimeLimit => "timelimit",
            RunStatus::BuildFailed => "buildfailed",
        }
    }

    pub fn parse(s: &str) -> Option<RunStatus> {
        match s {
            "optimal" => Some(RunStatus::Optimal),
            "infeasible" => Some(RunStatus::Infeasible),
            "timelimit" => Some(RunStatus::TimeLimit),
            "buildfailed" => Some(RunStatus::BuildFailed),
            _ => None,
        }
    }

    /// Whether the run answered the instance (profiles treat everything
    /// else as unsolved).
    pub fn solved(&self) -> bool {
        matches!(self, RunStatus::Optimal | RunStatus::Infeasible)
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One (instance, model, solver) run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRecord {
    pub instance_id: String,
    pub family: String,
    pub n: Option<u64>,
    pub p: Option<u64>,
    pub periods: Option<u64>,
    pub scenarios: Option<u64>,
    pub basic_orders: Option<u64>,
    pub urgent_orders: Option<u64>,
    pub model: String,
    pub solver: String,
    pub status: RunStatus,
    /// Optimal value in the stated orientation of the model.
    pub value: Option<Rat>,
    pub time_ms: u64,
    pub nodes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("records csv, line {line}: {message}")]
pub struct CsvError {
    pub line: usize,
    pub message: String,
}

fn opt_u64(s: &str, line: usize) -> Result<Option<u64>, CsvError> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse()
            .map(Some)
            .map_err(|_| CsvError { line, message: format!("invalid count '{s}'") })
    }
}

fn fmt_opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

/// Serializes records under [`CSV_HEADER`]. Fields never contain commas:
/// identifiers and tags are generated from a comma-free alphabet and values
/// print as `p/q` rationals.
pub fn emit_records_csv(records: &[BenchRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.instance_id,
            r.family,
            fmt_opt(&r.n),
            fmt_opt(&r.p),
            fmt_opt(&r.periods),
            fmt_opt(&r.scenarios),
            fmt_opt(&r.basic_orders),
            fmt_opt(&r.urgent_orders),
            r.model,
            r.solver,
            r.status,
            fmt_opt(&r.value),
            r.time_ms,
            r.nodes,
        ));
    }
    out
}

pub fn parse_records_csv(text: &str) -> Result<Vec<BenchRecord>, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        Some((_, header)) => {
            return Err(CsvError { line: 1, message: format!("unexpected header '{header}'") })
        }
        None => return Err(CsvError { line: 1, message: "empty file".into() }),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(CsvError {
                line: lineno,
                message: format!("expected 14 fields, found {}", fields.len()),
            });
        }
        let status = RunStatus::parse(fields[10]).ok_or_else(|| CsvError {
            line: lineno,
            message: format!("unknown status '{}'", fields[10]),
        })?;
        let value = if fields[11].is_empty() {
            None
        } else {
            Some(Rat::from_str(fields[11]).map_err(|_| CsvError {
                line: lineno,
                message: format!("invalid value '{}'", fields[11]),
            })?)
        };
        out.push(BenchRecord {
            instance_id: fields[0].to_string(),
            family: fields[1].to_string(),
            n: opt_u64(fields[2], lineno)?,
            p: opt_u64(fields[3], lineno)?,
            periods: opt_u64(fields[4], lineno)?,
            scenarios: opt_u64(fields[5], lineno)?,
            basic_orders: opt_u64(fields[6], lineno)?,
            urgent_orders: opt_u64(fields[7], lineno)?,
            model: fields[8].to_string(),
            solver: fields[9].to_string(),
            status,
            value,
            time_ms: fields[12].parse().map_err(|_| CsvError {
                line: lineno,
                message: format!("invalid time '{}'", fields[12]),
            })?,
            nodes: fields[13].parse().map_err(|_| CsvError {
                line: lineno,
                message: format!("invalid node count '{}'", fields[13]),
            })?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use qrobust_core::rational::{rat, ratio};

    pub(crate) fn sample(id: &str, solver: &str, status: RunStatus, time_ms: u64) -> BenchRecord {
        BenchRecord {
            instance_id: id.to_string(),
            family: "selection".into(),
            n: Some(4),
            p: Some(2),
            periods: Some(1),
            scenarios: Some(2),
            basic_orders: None,
            urgent_orders: None,
            model: "qippu".into(),
            solver: solver.to_string(),
            status,
            value: Some(ratio(7, 2)),
            time_ms,
            nodes: 123,
        }
    }

    #[test]
    fn csv_round_trip_preserves_records() {
        let records = vec![
            sample("sel-1", "alphabeta:qippu", RunStatus::Optimal, 10),
            BenchRecord {
                value: None,
                status: RunStatus::BuildFailed,
                basic_orders: Some(3),
                ..sample("lot-1", "flatten-bnb:dep", RunStatus::BuildFailed, 0)
            },
        ];
        let text = emit_records_csv(&records);
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(text.lines().count(), 3);
        let parsed = parse_records_csv(&text).unwrap();
        assert_eq!(parsed, records);
    }

    #[test]
    fn rational_values_survive_the_round_trip() {
        let mut r = sample("a", "s", RunStatus::Optimal, 5);
        r.value = Some(rat(-17));
        let parsed = parse_records_csv(&emit_records_csv(&[r.clone()])).unwrap();
        assert_eq!(parsed[0].value, Some(rat(-17)));
    }

    #[test]
    fn malformed_rows_are_rejected_with_line_numbers() {
        let text = format!("{CSV_HEADER}\nbad,row\n");
        let err = parse_records_csv(&text).unwrap_err();
        assert_eq!(err.line, 2);
    }
}

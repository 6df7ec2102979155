//! Command line for generating, solving, flattening and benchmarking
//! quantified integer programs.
//!
//! Exit codes: 0 success (including proven infeasibility), 2 usage or input
//! errors, 3 resource limits (time limit hit, scenario cap exceeded),
//! 4 internal inconsistency (oracle disagreement).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qrobust_bench::{
    emit_profile_csv, emit_records_csv, emit_svg, parse_grid, parse_records_csv,
    performance_profile, run_grid, RunStatus,
};
use qrobust_core::dep::{enumerate_scenarios, flatten, DepError, FlattenConfig, MipInstance};
use qrobust_core::mip::{solve_mip, MipStatus};
use qrobust_core::problems::{
    AssignmentParams, FamilyParams, KnapsackParams, LotSizingParams, ModelKind, SelectionParams,
};
use qrobust_core::qipfile;
use qrobust_core::rational::GameValue;
use qrobust_core::search::{oracle_solve, solve, SearchConfig, SolveStatus};

#[derive(Parser)]
#[command(
    name = "qrobust",
    version,
    about = "Multistage robust discrete optimization via quantified integer programming"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded instance and write it as a .qlp file.
    Generate(GenerateArgs),
    /// Solve a .qlp file and print status, value and first-stage assignment.
    Solve(SolveArgs),
    /// Expand a quantified .qlp into its deterministic equivalent MIP.
    Flatten(FlattenArgs),
    /// Run a benchmark grid and write the records CSV.
    Bench(BenchArgs),
    /// Compute a performance profile from a records CSV.
    Profile(ProfileArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Problem family: sel, ass, lot or kna.
    #[arg(long)]
    family: Option<String>,
    /// Model variant: qippu, qip or dep.
    #[arg(long)]
    model: Option<String>,
    #[arg(long = "n")]
    n: Option<usize>,
    #[arg(long = "p")]
    p: Option<usize>,
    #[arg(long = "T")]
    periods: Option<usize>,
    #[arg(long = "N")]
    scenarios: Option<usize>,
    #[arg(long = "B")]
    basic: Option<usize>,
    #[arg(long = "U")]
    urgent: Option<usize>,
    /// Seed; defaults to $QROBUST_SEED, then 0.
    #[arg(long, env = "QROBUST_SEED")]
    seed: Option<u64>,
    /// Plain-text defaults file with key=value lines (family, model, n, p,
    /// T, N, B, U, seed); explicit flags take precedence.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Time limit in milliseconds.
    #[arg(long = "time-limit", default_value_t = 1_800_000)]
    time_limit_ms: u64,
    /// Additionally run the exhaustive oracle and check agreement.
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct FlattenArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Scenario-leaf cap.
    #[arg(long, default_value_t = qrobust_core::dep::DEFAULT_LEAF_CAP)]
    cap: u128,
}

#[derive(Args)]
struct BenchArgs {
    /// Grid specification file.
    #[arg(long)]
    grid: PathBuf,
    /// Records CSV output path.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (overrides the grid file; timing is noisier above 1).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ProfileArgs {
    /// Records CSV produced by `bench`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out-csv")]
    out_csv: Option<PathBuf>,
    #[arg(long = "out-svg")]
    out_svg: Option<PathBuf>,
}

/// Failure with a chosen exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Failure {
        Failure { code: 2, message: message.into() }
    }
    fn limit(message: impl Into<String>) -> Failure {
        Failure { code: 3, message: message.into() }
    }
    fn internal(message: impl Into<String>) -> Failure {
        Failure { code: 4, message: message.into() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => generate(args),
        Command::Solve(args) => run_solve(args),
        Command::Flatten(args) => run_flatten(args),
        Command::Bench(args) => run_bench(args),
        Command::Profile(args) => run_profile(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .map_err(|e| Failure::internal(format!("cannot write {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

fn generate(mut args: GenerateArgs) -> Result<(), Failure> {
    if let Some(path) = args.params.take() {
        apply_params_file(&mut args, &path)?;
    }
    let family = args.family.as_deref().ok_or_else(|| Failure::usage("missing --family"))?;
    let model_str = args.model.as_deref().ok_or_else(|| Failure::usage("missing --model"))?;
    let model = ModelKind::parse(model_str)
        .ok_or_else(|| Failure::usage(format!("unknown model '{model_str}'")))?;
    let seed = args.seed.unwrap_or(0);

    let need = |value: Option<usize>, flag: &str| {
        value.ok_or_else(|| Failure::usage(format!("family requires --{flag}")))
    };
    let params = match family {
        "sel" => {
            let items = need(args.n, "n")?;
            FamilyParams::Selection(SelectionParams {
                items,
                picks: args.p.unwrap_or(items / 2),
                periods: need(args.periods, "T")?,
                scenarios: need(args.scenarios, "N")?,
                seed,
            })
        }
        "ass" => FamilyParams::Assignment(AssignmentParams {
            size: need(args.n, "n")?,
            periods: need(args.periods, "T")?,
            scenarios: need(args.scenarios, "N")?,
            seed,
        }),
        "lot" => FamilyParams::LotSizing(LotSizingParams {
            basic_orders: need(args.basic, "B")?,
            urgent_orders: need(args.urgent, "U")?,
            periods: need(args.periods, "T")?,
            seed,
        }),
        "kna" => FamilyParams::Knapsack(KnapsackParams {
            items: need(args.n, "n")?,
            periods: need(args.periods, "T")?,
            seed,
        }),
        other => return Err(Failure::usage(format!("unknown family '{other}'"))),
    };

    let text = match model {
        ModelKind::Dep => {
            let mip = params.build_dep().map_err(|e| Failure::usage(e.to_string()))?;
            qipfile::write(&mip.as_qip())
        }
        quantified => {
            let inst = params.build_qip(quantified).map_err(|e| Failure::usage(e.to_string()))?;
            qipfile::write(&inst)
        }
    };
    write_file(&args.out, &text)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn apply_params_file(args: &mut GenerateArgs, path: &Path) -> Result<(), Failure> {
    let text = read_file(path)?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Failure::usage(format!("{}:{}: expected key=value", path.display(), idx + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| {
            Failure::usage(format!("{}:{}: invalid {what} '{value}'", path.display(), idx + 1))
        };
        match key {
            "family" => {
                args.family.get_or_insert_with(|| value.to_string());
            }
            "model" => {
                args.model.get_or_insert_with(|| value.to_string());
            }
            "n" => {
                args.n.get_or_insert(value.parse().map_err(|_| bad("n"))?);
            }
            "p" => {
                args.p.get_or_insert(value.parse().map_err(|_| bad("p"))?);
            }
            "T" => {
                args.periods.get_or_insert(value.parse().map_err(|_| bad("T"))?);
            }
            "N" => {
                args.scenarios.get_or_insert(value.parse().map_err(|_| bad("N"))?);
            }
            "B" => {
                args.basic.get_or_insert(value.parse().map_err(|_| bad("B"))?);
            }
            "U" => {
                args.urgent.get_or_insert(value.parse().map_err(|_| bad("U"))?);
            }
            "seed" => {
                args.seed.get_or_insert(value.parse().map_err(|_| bad("seed"))?);
            }
            other => {
                return Err(Failure::usage(format!(
                    "{}:{}: unknown key '{other}'",
                    path.display(),
                    idx + 1
                )))
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

fn run_solve(args: SolveArgs) -> Result<(), Failure> {
    let text = read_file(&args.input)?;
    let inst = qipfile::parse(&text).map_err(|e| Failure::usage(e.to_string()))?;
    let cfg = SearchConfig::with_time_limit_ms(args.time_limit_ms);

    // Instances without universal blocks route to the branch-and-bound.
    if let Some(mip) = MipInstance::from_qip(&inst) {
        let res = solve_mip(&mip, &cfg).map_err(|e| Failure::usage(e.to_string()))?;
        match res.status {
            MipStatus::Optimal => {
                let value = res.value.expect("optimal result carries a value");
                println!("status: OPTIMAL");
                println!("value: {}", inst.display_value(GameValue::Finite(value)));
                let assignment = res.assignment.expect("optimal result carries an assignment");
                let cells: Vec<String> = inst.blocks[0]
                    .vars
                    .iter()
                    .map(|&v| format!("x{v}={}", assignment[v]))
                    .collect();
                println!("assignment: {}", cells.join(" "));
                println!("nodes: {}", res.nodes);
                println!("time_ms: {}", res.elapsed_ms);
            }
            MipStatus::Infeasible => {
                println!("status: INFEASIBLE");
                println!("nodes: {}", res.nodes);
                println!("time_ms: {}", res.elapsed_ms);
            }
            MipStatus::TimeLimit => {
                println!("status: TIMELIMIT");
                if let Some(v) = res.value {
                    println!("bound: {}", inst.display_value(GameValue::Finite(v)));
                }
                return Err(Failure::limit("time limit reached"));
            }
        }
        return Ok(());
    }

    let res = solve(&inst, &cfg).map_err(|e| Failure::usage(e.to_string()))?;
    match res.status {
        SolveStatus::Optimal => {
            let value = res.value.expect("optimal result carries a value");
            println!("status: OPTIMAL");
            println!("value: {}", inst.display_value(value));
            let first = res.first_stage.as_deref().unwrap_or(&[]);
            let vars: Vec<usize> = inst.blocks[0]
                .vars
                .iter()
                .copied()
                .filter(|&v| inst.domains[v].kind == qrobust_core::model::VarKind::Integer)
                .collect();
            let cells: Vec<String> =
                vars.iter().zip(first).map(|(&v, val)| format!("x{v}={val}")).collect();
            println!("first-stage: {}", cells.join(" "));
            println!("nodes: {}", res.nodes);
            println!("time_ms: {}", res.elapsed_ms);
        }
        SolveStatus::Infeasible => {
            println!("status: INFEASIBLE");
            println!("nodes: {}", res.nodes);
            println!("time_ms: {}", res.elapsed_ms);
        }
        SolveStatus::TimeLimit => {
            println!("status: TIMELIMIT");
            if let Some(v) = res.value {
                println!("bound: {}", inst.display_value(v));
            }
            return Err(Failure::limit("time limit reached"));
        }
    }

    if args.oracle {
        let oracle = oracle_solve(&inst).map_err(|e| Failure::usage(e.to_string()))?;
        if oracle.value != res.value || oracle.status != res.status {
            return Err(Failure::internal(format!(
                "oracle disagreement: search {:?}/{:?} vs oracle {:?}/{:?}",
                res.status, res.value, oracle.status, oracle.value
            )));
        }
        println!("oracle: agrees ({} nodes)", oracle.nodes);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// flatten
// ---------------------------------------------------------------------------

fn run_flatten(args: FlattenArgs) -> Result<(), Failure> {
    let text = read_file(&args.input)?;
    let inst = qipfile::parse(&text).map_err(|e| Failure::usage(e.to_string()))?;
    let as_failure = |e: DepError| match e {
        DepError::ScenarioExplosion { .. } => Failure::limit(e.to_string()),
        DepError::Solve(_) => Failure::usage(e.to_string()),
    };
    let tree = enumerate_scenarios(&inst, args.cap).map_err(as_failure)?;
    let mip = flatten(&inst, &FlattenConfig { leaf_cap: args.cap }).map_err(as_failure)?;
    write_file(&args.out, &qipfile::write(&mip.as_qip()))?;
    println!("leaves: {}", tree.leaf_count());
    println!("variables: {}", mip.num_vars());
    println!("constraints: {}", mip.rows.len());
    println!("wrote {}", args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// bench and profile
// ---------------------------------------------------------------------------

fn run_bench(args: BenchArgs) -> Result<(), Failure> {
    let text = read_file(&args.grid)?;
    let mut spec = parse_grid(&text).map_err(|e| Failure::usage(e.to_string()))?;
    if let Some(jobs) = args.jobs {
        spec.jobs = jobs.max(1);
    }
    let records = run_grid(&spec);
    write_file(&args.out, &emit_records_csv(&records))?;
    let mut solved = 0usize;
    let mut timed_out = 0usize;
    let mut build_failed = 0usize;
    for r in &records {
        match r.status {
            RunStatus::Optimal | RunStatus::Infeasible => solved += 1,
            RunStatus::TimeLimit => timed_out += 1,
            RunStatus::BuildFailed => build_failed += 1,
        }
    }
    println!(
        "ran {} cells: {solved} solved, {timed_out} timed out, {build_failed} build failures",
        records.len()
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run_profile(args: ProfileArgs) -> Result<(), Failure> {
    let text = read_file(&args.input)?;
    let records = parse_records_csv(&text).map_err(|e| Failure::usage(e.to_string()))?;
    let profile = performance_profile(&records).map_err(|e| Failure::usage(e.to_string()))?;
    let csv = emit_profile_csv(&profile);
    match (&args.out_csv, &args.out_svg) {
        (None, None) => print!("{csv}"),
        _ => {
            if let Some(path) = &args.out_csv {
                write_file(path, &csv)?;
                println!("wrote {}", path.display());
            }
            if let Some(path) = &args.out_svg {
                write_file(path, &emit_svg(&profile))?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

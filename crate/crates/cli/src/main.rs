//! Command-line frontend: classify constraint mismatches between composed
//! services, plan invocation counts, and simulate mediated delivery.
//!
//! Exit codes: 0 success (plan: every flow certain; simulate: every run
//! succeeded), 1 at least one simulation run failed, 2 unreadable or
//! invalid descriptor, 3 plan with probable or runtime-only flows, 4 no
//! feasible plan.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cardmed::classifier::{classify_pair, mediation_group};
use cardmed::descriptor::{self, SimulationSection};
use cardmed::harness::{run_simulation, SimulationConfig, SimulationReport};
use cardmed::model::Composition;
use cardmed::planner::{
    plan_composition, CompositionPlan, Grade, PlanError, PlannerConfig, DEFAULT_SEARCH_CEILING,
};

const EXIT_OK: u8 = 0;
const EXIT_RUN_FAILED: u8 = 1;
const EXIT_BAD_INPUT: u8 = 2;
const EXIT_UNCERTAIN: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "cardmed",
    version,
    about = "Detect and mediate cardinality mismatches between composed services"
)]
struct Cli {
    /// Render aligned tables or one JSON object per row.
    #[arg(long, value_enum, default_value_t = Format::Table, global = true)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify each flow's sender/receiver constraint relationship.
    Classify { descriptor: PathBuf },
    /// Compute invocation counts and a certainty grade per flow.
    Plan {
        descriptor: PathBuf,
        /// Cap on the invocation-count search, overriding CARDMED_CEILING.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        ceiling: Option<u64>,
        /// Take the first labeled solution instead of minimizing totals.
        #[arg(long)]
        no_optimize: bool,
    },
    /// Plan, then execute seeded simulation runs against mock services.
    Simulate {
        descriptor: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        ceiling: Option<u64>,
        #[arg(long)]
        no_optimize: bool,
        /// Master seed; overrides the descriptor's simulation section.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of runs; run k is seeded with seed+k.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        runs: Option<u64>,
        /// Write every run's mediation trace to this file as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    JsonLines,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_BAD_INPUT)
        }
    }
}

fn run(cli: Cli) -> Result<u8, String> {
    match cli.command {
        Command::Classify { descriptor } => {
            let (composition, _) = load(&descriptor)?;
            cmd_classify(&composition, cli.format)
        }
        Command::Plan {
            descriptor,
            ceiling,
            no_optimize,
        } => {
            let (composition, _) = load(&descriptor)?;
            let cfg = planner_config(ceiling, no_optimize)?;
            Ok(cmd_plan(&composition, &cfg, cli.format))
        }
        Command::Simulate {
            descriptor,
            ceiling,
            no_optimize,
            seed,
            runs,
            trace,
        } => {
            let (composition, simulation) = load(&descriptor)?;
            let cfg = planner_config(ceiling, no_optimize)?;
            let sim = simulation.unwrap_or_default();
            cmd_simulate(
                &composition,
                &cfg,
                seed.unwrap_or(sim.seed),
                runs.unwrap_or(sim.runs).max(1),
                &sim.duplicate_rates,
                trace.as_deref(),
                cli.format,
            )
        }
    }
}

fn load(path: &PathBuf) -> Result<(Composition, Option<SimulationSection>), String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let d = descriptor::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok((d.to_composition(), d.simulation))
}

fn planner_config(ceiling: Option<u64>, no_optimize: bool) -> Result<PlannerConfig, String> {
    let search_ceiling = match ceiling {
        Some(c) => c,
        None => match std::env::var("CARDMED_CEILING") {
            Err(_) => DEFAULT_SEARCH_CEILING,
            Ok(raw) => raw
                .parse::<u64>()
                .ok()
                .filter(|&c| c >= 1)
                .ok_or_else(|| format!("CARDMED_CEILING must be a positive integer, got `{raw}`"))?,
        },
    };
    Ok(PlannerConfig {
        search_ceiling,
        optimize: !no_optimize,
    })
}

// ---------------------------------------------------------------- output

fn print_rows<T: Serialize>(format: Format, header: &[&str], rows: &[T], cells: fn(&T) -> Vec<String>) {
    match format {
        Format::JsonLines => {
            for row in rows {
                println!("{}", serde_json::to_string(row).expect("row serializes"));
            }
        }
        Format::Table => {
            if rows.is_empty() {
                return;
            }
            let table: Vec<Vec<String>> = rows.iter().map(cells).collect();
            print!("{}", render_table(header, &table));
        }
    }
}

fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: &[String]| {
        let mut rendered = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i + 1 == cells.len() {
                write!(rendered, "{cell}").unwrap();
            } else {
                write!(rendered, "{cell:<width$}  ", width = widths[i]).unwrap();
            }
        }
        format!("{}\n", rendered.trim_end())
    };
    out.push_str(&line(&header.iter().map(|h| h.to_string()).collect::<Vec<_>>()));
    for row in rows {
        out.push_str(&line(row));
    }
    out
}

// -------------------------------------------------------------- classify

#[derive(Serialize)]
struct ClassifyRow {
    flow: String,
    sender: String,
    receiver: String,
    case: char,
    group: String,
}

fn cmd_classify(c: &Composition, format: Format) -> Result<u8, String> {
    let mut rows = Vec::new();
    for flow in &c.flows {
        let sender = c.service(&flow.sender).expect("validated");
        let receiver = c.service(&flow.receiver).expect("validated");
        let out = sender.output_interval().map_err(|e| e.to_string())?;
        let inp = receiver.input_interval().map_err(|e| e.to_string())?;
        let case = classify_pair(out, inp);
        rows.push(ClassifyRow {
            flow: flow.label(),
            sender: out.to_string(),
            receiver: inp.to_string(),
            case: case.letter(),
            group: mediation_group(case).to_string(),
        });
    }
    print_rows(format, &["FLOW", "SENDER", "RECEIVER", "CASE", "GROUP"], &rows, |r| {
        vec![
            r.flow.clone(),
            r.sender.clone(),
            r.receiver.clone(),
            r.case.to_string(),
            r.group.clone(),
        ]
    });
    Ok(EXIT_OK)
}

// ------------------------------------------------------------------ plan

#[derive(Serialize)]
struct ServiceRow {
    row: &'static str,
    service: String,
    invocations: u64,
    at_ceiling: bool,
}

#[derive(Serialize)]
struct FlowRow {
    row: &'static str,
    flow: String,
    case: char,
    grade: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
}

#[derive(Serialize)]
struct PlanSummary {
    row: &'static str,
    total_invocations: u64,
    search_ceiling: u64,
    worst_grade: String,
}

#[derive(Serialize)]
struct InfeasibleRow {
    row: &'static str,
    implicated: Vec<String>,
}

fn cmd_plan(c: &Composition, cfg: &PlannerConfig, format: Format) -> u8 {
    let plan = match plan_composition(c, cfg) {
        Ok(plan) => plan,
        Err(PlanError::Infeasible { implicated }) => {
            report_infeasible(&implicated, format);
            return EXIT_INFEASIBLE;
        }
        Err(other) => {
            eprintln!("error: {other}");
            return EXIT_BAD_INPUT;
        }
    };
    print_plan(&plan, format);
    grade_exit(&plan)
}

fn report_infeasible(implicated: &[String], format: Format) {
    let row = InfeasibleRow {
        row: "infeasible",
        implicated: implicated.to_vec(),
    };
    match format {
        Format::JsonLines => println!("{}", serde_json::to_string(&row).unwrap()),
        Format::Table => println!(
            "no feasible plan; implicated flows: {}",
            row.implicated.join(", ")
        ),
    }
}

fn print_plan(plan: &CompositionPlan, format: Format) {
    let services: Vec<ServiceRow> = plan
        .invocations
        .iter()
        .map(|(service, &invocations)| ServiceRow {
            row: "service",
            service: service.clone(),
            invocations,
            at_ceiling: plan.ceiling_hits.contains(service),
        })
        .collect();
    print_rows(format, &["SERVICE", "INVOCATIONS", "AT_CEILING"], &services, |r| {
        vec![
            r.service.clone(),
            r.invocations.to_string(),
            if r.at_ceiling { "yes" } else { "-" }.to_string(),
        ]
    });

    let flows: Vec<FlowRow> = plan
        .flow_plans
        .iter()
        .map(|fp| {
            let (m, n) = fp.grade.counts().map_or((None, None), |(m, n)| (Some(m), Some(n)));
            FlowRow {
                row: "flow",
                flow: fp.flow.label(),
                case: fp.case.letter(),
                grade: grade_tag(&fp.grade),
                m,
                n,
            }
        })
        .collect();
    if format == Format::Table && !flows.is_empty() {
        println!();
    }
    print_rows(format, &["FLOW", "CASE", "GRADE", "M", "N"], &flows, |r| {
        vec![
            r.flow.clone(),
            r.case.to_string(),
            r.grade.clone(),
            r.m.map_or_else(|| "-".to_string(), |v| v.to_string()),
            r.n.map_or_else(|| "-".to_string(), |v| v.to_string()),
        ]
    });

    let summary = PlanSummary {
        row: "summary",
        total_invocations: plan.total_invocations,
        search_ceiling: plan.search_ceiling,
        worst_grade: plan
            .worst_grade()
            .map_or_else(|| "certain".to_string(), grade_tag),
    };
    match format {
        Format::JsonLines => println!("{}", serde_json::to_string(&summary).unwrap()),
        Format::Table => println!(
            "\ntotal {} invocations, search ceiling {}, worst grade {}",
            summary.total_invocations, summary.search_ceiling, summary.worst_grade
        ),
    }
}

fn grade_tag(grade: &Grade) -> String {
    match grade {
        Grade::Certain { .. } => "certain".to_string(),
        Grade::Probable { .. } => "probable".to_string(),
        Grade::RuntimeOnly => "runtime-only".to_string(),
        Grade::Infeasible { .. } => "infeasible".to_string(),
    }
}

fn grade_exit(plan: &CompositionPlan) -> u8 {
    match plan.worst_grade() {
        None | Some(Grade::Certain { .. }) => EXIT_OK,
        Some(Grade::Infeasible { .. }) => EXIT_INFEASIBLE,
        Some(_) => EXIT_UNCERTAIN,
    }
}

// -------------------------------------------------------------- simulate

#[derive(Serialize)]
struct RunRow {
    row: &'static str,
    run: u64,
    seed: u64,
    succeeded: bool,
    invocations: String,
}

#[derive(Serialize)]
struct SimulationSummary {
    row: &'static str,
    runs: u64,
    succeeded: u64,
    ratio: String,
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    c: &Composition,
    cfg: &PlannerConfig,
    base_seed: u64,
    runs: u64,
    duplicate_rates: &std::collections::BTreeMap<String, f64>,
    trace: Option<&std::path::Path>,
    format: Format,
) -> Result<u8, String> {
    let plan = match plan_composition(c, cfg) {
        Ok(plan) => plan,
        Err(PlanError::Infeasible { implicated }) => {
            report_infeasible(&implicated, format);
            return Ok(EXIT_INFEASIBLE);
        }
        Err(other) => return Err(other.to_string()),
    };

    let mut rows = Vec::new();
    let mut succeeded = 0u64;
    let mut traces = String::new();
    for run in 0..runs {
        let config = SimulationConfig {
            seed: base_seed.wrapping_add(run),
            duplicate_rates: duplicate_rates.clone(),
        };
        let report = run_simulation(c, &plan, &config).map_err(|e| e.to_string())?;
        if report.all_succeeded {
            succeeded += 1;
        }
        if trace.is_some() {
            append_traces(&mut traces, run, &report)?;
        }
        rows.push(RunRow {
            row: "run",
            run,
            seed: config.seed,
            succeeded: report.all_succeeded,
            invocations: report
                .invocations
                .iter()
                .map(|(s, n)| format!("{s}={n}"))
                .collect::<Vec<_>>()
                .join(" "),
        });
    }

    print_rows(format, &["RUN", "SEED", "RESULT", "INVOCATIONS"], &rows, |r| {
        vec![
            r.run.to_string(),
            r.seed.to_string(),
            if r.succeeded { "ok" } else { "failed" }.to_string(),
            r.invocations.clone(),
        ]
    });
    let summary = SimulationSummary {
        row: "summary",
        runs,
        succeeded,
        ratio: format!("{:.3}", succeeded as f64 / runs as f64),
    };
    match format {
        Format::JsonLines => println!("{}", serde_json::to_string(&summary).unwrap()),
        Format::Table => println!(
            "\n{} of {} runs succeeded, ratio {}",
            summary.succeeded, summary.runs, summary.ratio
        ),
    }

    if let Some(path) = trace {
        fs::write(path, traces).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }
    Ok(if succeeded == runs { EXIT_OK } else { EXIT_RUN_FAILED })
}

fn append_traces(buffer: &mut String, run: u64, report: &SimulationReport) -> Result<(), String> {
    for result in &report.flow_results {
        writeln!(buffer, "# run {run} flow {}", result.label).unwrap();
        buffer.push_str(&result.trace.to_json_lines().map_err(|e| e.to_string())?);
    }
    Ok(())
}

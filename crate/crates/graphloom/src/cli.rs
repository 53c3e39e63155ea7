//! Command-line front end: full pipeline runs, single phases, reports.
//!
//! Exit codes: 0 pass, 1 usage/IO error, 2 gate fail (single phase),
//! 3 backtracking exhausted.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::evaluation::{self, RunOptions, RunOutcome};
use crate::integration;
use crate::model::{Phase, Verdict};
use crate::pipeline::{self, PhaseState, PurposeFile, PurposeSource};
use crate::workspace::{render_report, Workspace};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_GATE_FAIL: u8 = 2;
pub const EXIT_EXHAUSTED: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "graphloom",
    version,
    about = "Builds purpose-specific knowledge graphs from existing datasets and reference ontologies"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the full four-phase pipeline with backtracking
    Run(RunArgs),
    /// Run a single phase; later phases need the earlier artifacts
    Phase(PhaseArgs),
    /// Print the consolidated report for a workspace
    Report {
        /// Workspace directory holding phase artifacts
        #[arg(long, env = "GRAPHLOOM_WORKSPACE")]
        workspace: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Purpose document
    #[arg(long)]
    purpose: PathBuf,
    /// Workspace directory for phase artifacts
    #[arg(long, env = "GRAPHLOOM_WORKSPACE")]
    workspace: PathBuf,
    /// Base IRI for the N-Triples export
    #[arg(long, default_value = "https://example.org/eg")]
    base_iri: String,
    /// Proceed with a model-only ETG when no reference ontology fits
    #[arg(long)]
    allow_unaligned: bool,
    /// Thresholds file overriding the purpose [thresholds] table
    #[arg(long)]
    thresholds_override: Option<PathBuf>,
    /// Parse and validate the purpose, then stop
    #[arg(long)]
    seed_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PhaseName {
    Inception,
    Model,
    Align,
    Integrate,
}

impl PhaseName {
    fn phase(self) -> Phase {
        match self {
            PhaseName::Inception => Phase::Inception,
            PhaseName::Model => Phase::Modeling,
            PhaseName::Align => Phase::Alignment,
            PhaseName::Integrate => Phase::Integration,
        }
    }
}

#[derive(Debug, Args)]
struct PhaseArgs {
    /// Which phase to run
    #[arg(value_enum)]
    name: PhaseName,
    #[arg(long)]
    purpose: PathBuf,
    #[arg(long, env = "GRAPHLOOM_WORKSPACE")]
    workspace: PathBuf,
    #[arg(long, default_value = "https://example.org/eg")]
    base_iri: String,
    #[arg(long)]
    allow_unaligned: bool,
    #[arg(long)]
    thresholds_override: Option<PathBuf>,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Phase(args) => cmd_phase(args),
        Command::Report { workspace } => cmd_report(workspace),
    };
    match code {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn source_for(purpose: PathBuf, thresholds_override: Option<PathBuf>) -> PurposeFile {
    PurposeFile {
        path: purpose,
        thresholds_override,
    }
}

fn cmd_run(args: RunArgs) -> Result<u8, String> {
    if args.seed_only {
        let mut source = source_for(args.purpose, args.thresholds_override);
        let purpose = source.load().map_err(|e| e.to_string())?;
        println!(
            "purpose ok: {} CQs, {} datasets, {} ontologies",
            purpose.cqs.len(),
            purpose.datasets.len(),
            purpose.ontology_refs.len()
        );
        return Ok(EXIT_PASS);
    }

    let workspace = Workspace::open(&args.workspace).map_err(|e| e.to_string())?;
    let mut source = source_for(args.purpose, args.thresholds_override);
    let options = RunOptions {
        allow_unaligned: args.allow_unaligned,
    };
    let run = evaluation::run_pipeline(&mut source, &options).map_err(|e| e.to_string())?;

    for decision in &run.decisions {
        println!(
            "{:<12} {}{}",
            decision.phase.to_string(),
            match decision.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "FAIL",
            },
            decision
                .backtrack_to
                .map(|p| format!("  (backtrack to {p})"))
                .unwrap_or_default()
        );
        for reason in &decision.reasons {
            println!("  reason: {reason}");
        }
    }

    // artifacts of the final sweep, then one gate file per phase (last word)
    for phase in Phase::ALL {
        workspace
            .write_phase(phase, &run.state)
            .map_err(|e| e.to_string())?;
    }
    for phase in Phase::ALL {
        if let Some(decision) = run.decisions.iter().rev().find(|d| d.phase == phase) {
            workspace.write_gate(decision).map_err(|e| e.to_string())?;
        }
    }
    if let Some(eg) = &run.state.entity_graph {
        let ntriples =
            integration::export_rdf(eg, &args.base_iri).map_err(|e| e.to_string())?;
        workspace
            .write_entity_graph(&ntriples)
            .map_err(|e| e.to_string())?;
    }
    workspace.write_summary(&run).map_err(|e| e.to_string())?;

    match run.outcome {
        RunOutcome::Completed => {
            println!(
                "completed: entity graph at {}",
                workspace
                    .phase_dir(Phase::Integration)
                    .join("eg.nt")
                    .display()
            );
            Ok(EXIT_PASS)
        }
        RunOutcome::Exhausted => {
            eprintln!(
                "backtracking exhausted after {} re-entries; see {}",
                run.retries,
                workspace.root().join("summary.toml").display()
            );
            Ok(EXIT_EXHAUSTED)
        }
    }
}

fn cmd_phase(args: PhaseArgs) -> Result<u8, String> {
    let phase = args.name.phase();
    let workspace = Workspace::open(&args.workspace).map_err(|e| e.to_string())?;
    workspace
        .require_predecessors(phase)
        .map_err(|e| e.to_string())?;

    let mut source = source_for(args.purpose, args.thresholds_override);
    let purpose = source.load().map_err(|e| e.to_string())?;
    let mut state = PhaseState::new(purpose, source.base_dir());
    let options = RunOptions {
        allow_unaligned: args.allow_unaligned,
    };

    // deterministically recompute earlier work, then run this phase's work
    // and judge only its gate
    for earlier in Phase::ALL.into_iter().filter(|p| *p <= phase) {
        match earlier {
            Phase::Inception => pipeline::work_inception(&mut state),
            Phase::Modeling => pipeline::work_modeling(&mut state),
            Phase::Alignment => pipeline::work_alignment(&mut state, options.allow_unaligned),
            Phase::Integration => pipeline::work_integration(&mut state),
        }
        .map_err(|e| e.to_string())?;
    }

    let thresholds = state.purpose.thresholds.clone();
    let decision = match phase {
        Phase::Inception => evaluation::eval_inception(
            &state.cq_elements,
            &state.match_reports,
            &state.selection,
            &thresholds,
            options.allow_unaligned,
        ),
        Phase::Modeling => evaluation::eval_modeling(
            &state.cq_elements,
            &state.model_build.as_ref().expect("modeling ran").model,
            state.final_datasets.len(),
            &thresholds,
        ),
        Phase::Alignment => {
            use crate::model::{Granularity, HasElements};
            let selected: Vec<_> = state
                .ranked
                .iter()
                .filter_map(|r| {
                    state
                        .ontologies
                        .get(&r.name)
                        .map(|o| (r.name.clone(), o.element_set(Granularity::Both)))
                })
                .collect();
            evaluation::eval_alignment(
                state.etg_build.as_ref().map(|b| &b.etg),
                &selected,
                &thresholds,
                state.unaligned,
                state.alignment_failure.as_deref(),
            )
        }
        Phase::Integration => evaluation::eval_integration(
            state.entity_graph.as_ref().expect("integration ran"),
            &state.purpose.cqs,
            &thresholds,
        ),
    };

    workspace
        .write_phase(phase, &state)
        .map_err(|e| e.to_string())?;
    workspace.write_gate(&decision).map_err(|e| e.to_string())?;
    if phase == Phase::Integration {
        if let Some(eg) = &state.entity_graph {
            let ntriples =
                integration::export_rdf(eg, &args.base_iri).map_err(|e| e.to_string())?;
            workspace
                .write_entity_graph(&ntriples)
                .map_err(|e| e.to_string())?;
        }
    }

    println!(
        "{:<12} {}",
        decision.phase.to_string(),
        match decision.verdict {
            Verdict::Pass => "pass",
            Verdict::Fail => "FAIL",
        }
    );
    for reason in &decision.reasons {
        println!("  reason: {reason}");
    }
    Ok(if decision.passed() {
        EXIT_PASS
    } else {
        EXIT_GATE_FAIL
    })
}

fn cmd_report(workspace_dir: PathBuf) -> Result<u8, String> {
    // read-only: no lock taken
    let inputs =
        crate::workspace::load_report_inputs(&workspace_dir).map_err(|e| e.to_string())?;
    print!("{}", render_report(&inputs));
    Ok(EXIT_PASS)
}

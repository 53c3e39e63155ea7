//! Workspace layout and artifact files.
//!
//! A workspace holds one subdirectory per phase so backtracking edits can be
//! reviewed by diffing. A lock file guards against concurrent invocations.
//! Nothing written here contains timestamps; re-running on unchanged inputs
//! produces byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{DataQualityReport, PipelineRun, RunOutcome};
use crate::ingest;
use crate::model::{GateDecision, Phase};
use crate::pipeline::PhaseState;

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("workspace is locked by another invocation (remove {path} if stale)")]
    Locked { path: String },
    #[error("missing artifact {path}: run the {phase} phase first")]
    MissingArtifact { path: String, phase: Phase },
    #[error("workspace {path} holds no phase artifacts")]
    Empty { path: String },
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: std::io::Error) -> WorkspaceError {
    WorkspaceError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// An exclusively held workspace directory. The lock is released on drop.
pub struct Workspace {
    root: PathBuf,
    lock_path: PathBuf,
}

impl Workspace {
    pub fn open(root: impl Into<PathBuf>) -> Result<Workspace, WorkspaceError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
        let lock_path = root.join(".lock");
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock_path)
        {
            Ok(_) => Ok(Workspace { root, lock_path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(WorkspaceError::Locked {
                    path: lock_path.display().to_string(),
                })
            }
            Err(e) => Err(io_err(&lock_path, e)),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn phase_dir(&self, phase: Phase) -> PathBuf {
        self.root.join(phase.as_str())
    }

    fn write(&self, path: &Path, content: &str) -> Result<(), WorkspaceError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        fs::write(path, content).map_err(|e| io_err(path, e))
    }

    /// Verifies that phases before `phase` have left their gate files.
    pub fn require_predecessors(&self, phase: Phase) -> Result<(), WorkspaceError> {
        for earlier in Phase::ALL.into_iter().filter(|p| *p < phase) {
            let marker = self.phase_dir(earlier).join("gate.toml");
            if !marker.exists() {
                return Err(WorkspaceError::MissingArtifact {
                    path: marker.display().to_string(),
                    phase: earlier,
                });
            }
        }
        Ok(())
    }

    /// Writes the artifacts a phase is responsible for.
    pub fn write_phase(&self, phase: Phase, state: &PhaseState) -> Result<(), WorkspaceError> {
        let dir = self.phase_dir(phase);
        match phase {
            Phase::Inception => {
                let elements_model = crate::model::ETGModel {
                    etypes: state.cq_elements.clone(),
                    edges: Default::default(),
                };
                self.write(
                    &dir.join("elements.toml"),
                    &ingest::serialize_model(&elements_model),
                )?;
                self.write(
                    &dir.join("selection.toml"),
                    &to_toml(&state.selection),
                )?;
                for report in &state.match_reports {
                    self.write(
                        &dir.join(format!("match_{}.toml", report.dataset_id)),
                        &to_toml(report),
                    )?;
                }
            }
            Phase::Modeling => {
                if let Some(build) = &state.model_build {
                    self.write(&dir.join("model.toml"), &ingest::serialize_model(&build.model))?;
                    self.write(
                        &dir.join("model.txt"),
                        &crate::modeling::export_model_text(&build.model),
                    )?;
                    self.write(&dir.join("mapping.toml"), &mapping_to_toml(&build.mapping))?;
                    if !build.review_flags.is_empty() {
                        self.write(
                            &dir.join("review_flags.txt"),
                            &(build.review_flags.join("\n") + "\n"),
                        )?;
                    }
                }
                self.write(&dir.join("final_datasets.toml"), &to_toml(&FinalDatasets {
                    dataset: state.final_datasets.clone(),
                }))?;
            }
            Phase::Alignment => {
                if let Some(build) = &state.etg_build {
                    self.write(&dir.join("etg.toml"), &ingest::serialize_etg(&build.etg))?;
                    if !build.datatype_conflicts.is_empty() {
                        self.write(
                            &dir.join("datatype_conflicts.toml"),
                            &to_toml(&DatatypeConflicts {
                                conflict: build.datatype_conflicts.clone(),
                            }),
                        )?;
                    }
                }
                self.write(
                    &dir.join("ranked.toml"),
                    &to_toml(&RankedDoc {
                        ontology: state.ranked.clone(),
                    }),
                )?;
                for (name, prediction) in &state.predictions {
                    self.write(&dir.join(format!("predictions_{name}.toml")), &to_toml(prediction))?;
                }
                for (id, cleaned) in &state.cleaned {
                    let json = serde_json::to_string_pretty(cleaned)
                        .expect("cleaned record serialization");
                    self.write(&dir.join(format!("cleaned_{id}.json")), &json)?;
                }
            }
            Phase::Integration => {
                if let Some(quality) = &state.quality {
                    self.write(&dir.join("quality.toml"), &to_toml(quality))?;
                }
            }
        }
        Ok(())
    }

    pub fn write_gate(&self, decision: &GateDecision) -> Result<(), WorkspaceError> {
        self.write(
            &self.phase_dir(decision.phase).join("gate.toml"),
            &to_toml(decision),
        )
    }

    pub fn write_entity_graph(&self, ntriples: &str) -> Result<(), WorkspaceError> {
        self.write(&self.phase_dir(Phase::Integration).join("eg.nt"), ntriples)
    }

    pub fn write_summary(&self, run: &PipelineRun) -> Result<(), WorkspaceError> {
        let summary = RunSummary {
            outcome: run.outcome,
            retries: run.retries,
            decision: run.decisions.clone(),
        };
        self.write(&self.root.join("summary.toml"), &to_toml(&summary))
    }

}

/// Loads whatever reporting inputs exist in a workspace directory: the run
/// summary and/or the per-phase gate files plus the quality report. Reads are
/// lock-free; reporting never mutates a workspace.
pub fn load_report_inputs(root: &Path) -> Result<ReportInputs, WorkspaceError> {
    let mut inputs = ReportInputs::default();
    let summary_path = root.join("summary.toml");
    if summary_path.exists() {
        let src = fs::read_to_string(&summary_path).map_err(|e| io_err(&summary_path, e))?;
        inputs.summary = toml::from_str::<RunSummary>(&src).ok();
    }
    for phase in Phase::ALL {
        let path = root.join(phase.as_str()).join("gate.toml");
        if path.exists() {
            let src = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            if let Ok(decision) = toml::from_str::<GateDecision>(&src) {
                inputs.gates.push(decision);
            }
        }
    }
    let quality_path = root.join(Phase::Integration.as_str()).join("quality.toml");
    if quality_path.exists() {
        let src = fs::read_to_string(&quality_path).map_err(|e| io_err(&quality_path, e))?;
        inputs.quality = toml::from_str::<DataQualityReport>(&src).ok();
    }
    if inputs.summary.is_none() && inputs.gates.is_empty() {
        return Err(WorkspaceError::Empty {
            path: root.display().to_string(),
        });
    }
    Ok(inputs)
}

impl Drop for Workspace {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock_path);
    }
}

fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string_pretty(value).expect("artifact serialization")
}

#[derive(Serialize, Deserialize)]
struct MappingEntry {
    dataset: String,
    attribute: String,
    etype: String,
    property: String,
}

#[derive(Serialize, Deserialize)]
struct MappingDoc {
    mapping: Vec<MappingEntry>,
}

fn mapping_to_toml(
    mapping: &BTreeMap<crate::model::AttributeRef, crate::model::ElementRef>,
) -> String {
    to_toml(&MappingDoc {
        mapping: mapping
            .iter()
            .map(|((dataset, attribute), (etype, property))| MappingEntry {
                dataset: dataset.clone(),
                attribute: attribute.clone(),
                etype: etype.clone(),
                property: property.clone(),
            })
            .collect(),
    })
}

#[derive(Serialize, Deserialize)]
struct FinalDatasets {
    dataset: Vec<crate::modeling::DatasetModelFit>,
}

#[derive(Serialize, Deserialize)]
struct RankedDoc {
    ontology: Vec<crate::alignment::RankedOntology>,
}

#[derive(Serialize, Deserialize)]
struct DatatypeConflicts {
    conflict: Vec<crate::alignment::DatatypeConflict>,
}

/// Machine-readable run summary (`summary.toml`).
#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub outcome: RunOutcome,
    pub retries: u32,
    pub decision: Vec<GateDecision>,
}

#[derive(Debug, Default)]
pub struct ReportInputs {
    pub summary: Option<RunSummary>,
    pub gates: Vec<GateDecision>,
    pub quality: Option<DataQualityReport>,
}

/// Renders the consolidated human-readable report.
pub fn render_report(inputs: &ReportInputs) -> String {
    let mut out = String::new();
    let decisions: &[GateDecision] = match &inputs.summary {
        Some(summary) => {
            out.push_str(&format!(
                "run outcome: {}  (re-entries: {})\n\n",
                match summary.outcome {
                    RunOutcome::Completed => "completed",
                    RunOutcome::Exhausted => "backtracking exhausted",
                },
                summary.retries
            ));
            &summary.decision
        }
        None => &inputs.gates,
    };
    out.push_str("gate history:\n");
    for decision in decisions {
        out.push_str(&format!(
            "  {:<12} {}{}\n",
            decision.phase.to_string(),
            match decision.verdict {
                crate::model::Verdict::Pass => "pass",
                crate::model::Verdict::Fail => "FAIL",
            },
            decision
                .backtrack_to
                .map(|p| format!("  -> backtrack to {p}"))
                .unwrap_or_default()
        ));
        for (name, value) in &decision.metrics {
            out.push_str(&format!("      {name} = {value}\n"));
        }
        for reason in &decision.reasons {
            out.push_str(&format!("      reason: {reason}\n"));
        }
    }
    if let Some(quality) = &inputs.quality {
        out.push_str("\ndata quality:\n");
        out.push_str(&format!("  conflicts: {}\n", quality.global_conflicts));
        out.push_str(&format!("  null ratio: {}\n", quality.global_null_ratio));
        out.push_str(&format!(
            "  connectivity: {}\n",
            quality.global_connectivity
        ));
        for (etype, ratio) in &quality.per_etype_connectivity {
            out.push_str(&format!("    {etype}: {ratio}\n"));
        }
        for stats in &quality.per_dataset {
            out.push_str(&format!(
                "  {}: +{} entities, {} merged, {} conflicts, {} nulls\n",
                stats.dataset_id,
                stats.entities_created,
                stats.entities_merged,
                stats.conflicts.len(),
                stats.null_property_count
            ));
        }
    }
    out
}

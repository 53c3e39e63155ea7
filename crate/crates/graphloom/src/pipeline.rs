//! Phase executors and the state they thread through the pipeline.
//!
//! Each phase has a `work_*` function that (re)computes its artifacts into
//! [`PhaseState`]; gate evaluation lives in the evaluation module so the
//! backtracking controller can re-run a phase's work without re-judging
//! gates that already passed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::alignment::{
    self, AlignmentError, CleanedRecordSet, EtgBuild, PredictionVector, RankedOntology,
};
use crate::inception::{self, AliasMap, InceptionError, MatchReport, ResourceSelection};
use crate::ingest::{self, IngestError, OntologyDocument, RecordSet};
use crate::evaluation::DataQualityReport;
use crate::integration::{self, IntegrationError};
use crate::metrics::{self, MetricValue};
use crate::model::{EType, ETGModel, EntityGraph, Purpose};
use crate::modeling::{self, DatasetModelFit, ModelBuild, ModelingError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Inception(#[from] InceptionError),
    #[error(transparent)]
    Modeling(#[from] ModelingError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

/// Where the pipeline reads its purpose. Re-loaded at every backtracking
/// re-entry so edits made between iterations are consumed.
pub trait PurposeSource {
    fn load(&mut self) -> Result<Purpose, IngestError>;
    /// Directory dataset/ontology paths resolve against.
    fn base_dir(&self) -> PathBuf;
}

/// File-backed purpose with an optional thresholds-override file (same keys
/// as the purpose `[thresholds]` table); both are re-read on every load.
pub struct PurposeFile {
    pub path: PathBuf,
    pub thresholds_override: Option<PathBuf>,
}

impl PurposeFile {
    pub fn new(path: impl Into<PathBuf>) -> PurposeFile {
        PurposeFile {
            path: path.into(),
            thresholds_override: None,
        }
    }
}

impl PurposeSource for PurposeFile {
    fn load(&mut self) -> Result<Purpose, IngestError> {
        let mut purpose = ingest::parse_purpose(&self.path)?;
        if let Some(override_path) = &self.thresholds_override {
            let src = std::fs::read_to_string(override_path).map_err(|e| IngestError::Io {
                path: override_path.display().to_string(),
                message: e.to_string(),
            })?;
            crate::ingest::apply_thresholds_override(&src, &mut purpose.thresholds)?;
            purpose
                .thresholds
                .validate()
                .map_err(|e| IngestError::Validation {
                    message: format!("thresholds override: {e}"),
                })?;
        }
        Ok(purpose)
    }

    fn base_dir(&self) -> PathBuf {
        self.path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

/// Everything the phases have computed so far. Work functions overwrite
/// their own outputs wholesale, leaving earlier phases' artifacts intact
/// across backtracking sweeps.
#[derive(Debug)]
pub struct PhaseState {
    pub purpose: Purpose,
    pub base_dir: PathBuf,
    // inception
    pub cq_elements: BTreeMap<String, EType>,
    pub record_sets: BTreeMap<String, RecordSet>,
    pub ontologies: BTreeMap<String, OntologyDocument>,
    /// Ontology names in purpose declaration order.
    pub ontology_order: Vec<String>,
    pub alias_maps: BTreeMap<String, AliasMap>,
    pub match_reports: Vec<MatchReport>,
    pub overlaps: Vec<(String, MetricValue)>,
    pub selection: ResourceSelection,
    // modeling
    pub model_build: Option<ModelBuild>,
    pub final_datasets: Vec<DatasetModelFit>,
    // alignment
    pub ranked: Vec<RankedOntology>,
    pub predictions: BTreeMap<String, PredictionVector>,
    pub etg_build: Option<EtgBuild>,
    /// Set when alignment proceeded without any ontology (--allow-unaligned).
    pub unaligned: bool,
    /// Recoverable alignment failure surfaced at the gate.
    pub alignment_failure: Option<String>,
    pub cleaned: BTreeMap<String, CleanedRecordSet>,
    // integration
    pub entity_graph: Option<EntityGraph>,
    pub quality: Option<DataQualityReport>,
}

impl PhaseState {
    pub fn new(purpose: Purpose, base_dir: PathBuf) -> PhaseState {
        PhaseState {
            purpose,
            base_dir,
            cq_elements: BTreeMap::new(),
            record_sets: BTreeMap::new(),
            ontologies: BTreeMap::new(),
            ontology_order: Vec::new(),
            alias_maps: BTreeMap::new(),
            match_reports: Vec::new(),
            overlaps: Vec::new(),
            selection: ResourceSelection::default(),
            model_build: None,
            final_datasets: Vec::new(),
            ranked: Vec::new(),
            predictions: BTreeMap::new(),
            etg_build: None,
            unaligned: false,
            alignment_failure: None,
            cleaned: BTreeMap::new(),
            entity_graph: None,
            quality: None,
        }
    }

    /// Record sets of datasets kept at inception, in selection order.
    pub fn kept_record_sets(&self) -> Vec<&RecordSet> {
        self.selection
            .kept_datasets
            .iter()
            .filter_map(|entry| self.record_sets.get(&entry.id))
            .collect()
    }

    /// Cleaned record sets of the finally selected datasets.
    pub fn final_cleaned(&self) -> Vec<&CleanedRecordSet> {
        self.final_datasets
            .iter()
            .filter_map(|fit| self.cleaned.get(&fit.dataset_id))
            .collect()
    }
}

/// Ingests datasets and ontologies, extracts CQ elements, matches schemas
/// and collects the candidate resource selection.
pub fn work_inception(state: &mut PhaseState) -> Result<(), PipelineError> {
    let purpose = &state.purpose;
    let scorer = &purpose.options.scorer;

    state.cq_elements = inception::extract_elements(&purpose.cqs)?;

    state.record_sets.clear();
    state.alias_maps.clear();
    state.match_reports.clear();
    for descriptor in &purpose.datasets {
        let record_set = ingest::load_dataset(descriptor, &state.base_dir)?;
        let aliases = AliasMap::from_descriptor(
            &record_set.descriptor,
            &state.cq_elements,
            scorer.similarity_acceptance,
        )?;
        state.match_reports.push(inception::match_schema(
            &state.cq_elements,
            &record_set.descriptor,
            &aliases,
        ));
        state.alias_maps.insert(descriptor.id.clone(), aliases);
        state.record_sets.insert(descriptor.id.clone(), record_set);
    }

    state.ontologies.clear();
    state.ontology_order.clear();
    state.overlaps.clear();
    // overlap against the CQ elements viewed as a schema graph
    let cq_model = ETGModel {
        etypes: state.cq_elements.clone(),
        edges: Default::default(),
    };
    for path in &purpose.ontology_refs {
        let ontology = ingest::parse_ontology(&state.base_dir.join(path))?;
        if let Ok(overlap) = metrics::etype_overlap(&ontology, &cq_model, scorer) {
            state.overlaps.push((ontology.name.clone(), overlap));
        }
        state.ontology_order.push(ontology.name.clone());
        state.ontologies.insert(ontology.name.clone(), ontology);
    }

    let descriptors: Vec<_> = state
        .record_sets
        .values()
        .map(|rs| rs.descriptor.clone())
        .collect();
    state.selection = inception::collect_resources(
        &descriptors,
        &state.match_reports,
        &state.overlaps,
        &purpose.thresholds,
    );
    Ok(())
}

/// Builds the ETG model and finalizes the dataset selection against it.
pub fn work_modeling(state: &mut PhaseState) -> Result<(), PipelineError> {
    let kept = state.kept_record_sets();
    let build = modeling::build_etg_model(
        &state.cq_elements,
        &kept,
        &state.match_reports,
        state.purpose.options.extend_model,
    )?;
    state.final_datasets = match modeling::select_datasets(
        &build,
        &kept,
        state.purpose.thresholds.modeling_coverage_min,
    ) {
        Ok(fits) => fits,
        // recoverable: the gate fails and backtracks
        Err(ModelingError::NoDataset) => Vec::new(),
        Err(other) => return Err(other.into()),
    };
    state.model_build = Some(build);
    Ok(())
}

/// Selects ontologies, predicts etype correspondences, generates the ETG and
/// cleans the finally selected datasets.
pub fn work_alignment(state: &mut PhaseState, allow_unaligned: bool) -> Result<(), PipelineError> {
    let build = state
        .model_build
        .as_ref()
        .expect("alignment requires the modeling artifacts");
    let model = &build.model;
    let scorer = &state.purpose.options.scorer;
    let thresholds = &state.purpose.thresholds;

    state.ranked = Vec::new();
    state.predictions.clear();
    state.etg_build = None;
    state.unaligned = false;
    state.alignment_failure = None;
    state.cleaned.clear();

    let kept_ontologies: Vec<OntologyDocument> = state
        .selection
        .kept_ontologies
        .iter()
        .filter_map(|entry| state.ontologies.get(&entry.id).cloned())
        .collect();

    match alignment::select_ontologies(model, &kept_ontologies, thresholds, scorer) {
        Ok(ranked) => {
            for r in &ranked {
                let ontology = &state.ontologies[&r.name];
                state
                    .predictions
                    .insert(r.name.clone(), alignment::etr_predict(model, ontology, scorer));
            }
            match alignment::generate_etg(
                model,
                &ranked,
                &state.predictions,
                &state.ontologies,
                &build.mapping,
            ) {
                Ok(etg_build) => state.etg_build = Some(etg_build),
                Err(err @ AlignmentError::MappingLoss { .. }) => {
                    state.alignment_failure = Some(err.to_string());
                }
                Err(err) => state.alignment_failure = Some(err.to_string()),
            }
            state.ranked = ranked;
        }
        Err(AlignmentError::NoOntology) => {
            if allow_unaligned {
                state.unaligned = true;
                state.etg_build = Some(EtgBuild {
                    etg: alignment::etg_from_model(model, &build.mapping),
                    datatype_conflicts: Vec::new(),
                });
            } else {
                state.alignment_failure = Some(AlignmentError::NoOntology.to_string());
            }
        }
        Err(other) => state.alignment_failure = Some(other.to_string()),
    }

    if let Some(etg_build) = &state.etg_build {
        for fit in &state.final_datasets {
            if let Some(record_set) = state.record_sets.get(&fit.dataset_id) {
                state.cleaned.insert(
                    fit.dataset_id.clone(),
                    alignment::clean_dataset(record_set, &etg_build.etg),
                );
            }
        }
    }
    Ok(())
}

/// Maps and merges the cleaned datasets into the entity graph.
pub fn work_integration(state: &mut PhaseState) -> Result<(), PipelineError> {
    let etg = &state
        .etg_build
        .as_ref()
        .expect("integration requires the alignment artifacts")
        .etg;
    // identity rules are written against model etype names; entities carry
    // the adopted ETG names
    let rules: Vec<crate::model::IdentityRule> = state
        .purpose
        .identity_rules
        .iter()
        .map(|rule| crate::model::IdentityRule {
            etype: etg
                .etype_for_model(&rule.etype)
                .unwrap_or(&rule.etype)
                .to_string(),
            key_properties: rule.key_properties.clone(),
        })
        .collect();
    let cleaned = state.final_cleaned();
    let eg = integration::build_eg(etg, &cleaned, &rules)?;
    state.quality = Some(crate::evaluation::data_quality(&eg));
    state.entity_graph = Some(eg);
    Ok(())
}

//! The four evaluation gates, the data-quality report and the backtracking
//! controller.
//!
//! Gate verdicts are pure functions of the recorded metrics and the
//! thresholds ([`verdict_for`]); the evaluation functions only assemble
//! metrics and delegate, so replaying a stored decision reproduces it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::metrics::{self, Ratio};
use crate::model::{
    Category, CompetencyQuery, EType, ElementKey, ElementSet, EntityGraph, GateDecision,
    GateThresholds, Granularity, HasElements, IntegrationStats, Phase, Verdict,
};
use crate::pipeline::{self, PhaseState, PipelineError, PurposeSource};

/// Aggregated data-level quality of the final entity graph. Informational:
/// no verdict is derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataQualityReport {
    pub per_dataset: Vec<IntegrationStats>,
    pub global_conflicts: usize,
    /// Declared property slots without a value / all declared slots.
    pub global_null_ratio: Ratio,
    /// Entities with at least one object link / all entities.
    pub global_connectivity: Ratio,
    pub per_etype_connectivity: BTreeMap<String, Ratio>,
}

/// Rolls the integration log up into the quality report.
pub fn data_quality(eg: &EntityGraph) -> DataQualityReport {
    let mut declared = 0usize;
    let mut nulls = 0usize;
    let mut linked_entities = 0usize;
    let mut per_etype: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for entity in eg.entities.values() {
        let etype = &eg.etg.etypes[&entity.etype];
        declared += etype.properties.len();
        for prop in etype.properties.values() {
            let filled = if prop.kind.is_object() {
                entity
                    .object_links
                    .get(&prop.name)
                    .is_some_and(|t| !t.is_empty())
            } else {
                entity.data_values.contains_key(&prop.name)
            };
            if !filled {
                nulls += 1;
            }
        }
        let slot = per_etype.entry(entity.etype.clone()).or_insert((0, 0));
        slot.0 += 1;
        if entity.has_links() {
            slot.1 += 1;
            linked_entities += 1;
        }
    }
    DataQualityReport {
        per_dataset: eg.integration_log.clone(),
        global_conflicts: eg
            .integration_log
            .iter()
            .map(|s| s.conflicts.len())
            .sum(),
        global_null_ratio: if declared == 0 {
            Ratio::ZERO
        } else {
            Ratio::from_counts(nulls, declared)
        },
        global_connectivity: if eg.entities.is_empty() {
            Ratio::ZERO
        } else {
            Ratio::from_counts(linked_entities, eg.entities.len())
        },
        per_etype_connectivity: per_etype
            .into_iter()
            .map(|(etype, (total, linked))| (etype, Ratio::from_counts(linked, total)))
            .collect(),
    }
}

/// Metric key for the skip-marker recorded when alignment requirements are
/// waived under --allow-unaligned.
const UNALIGNED_OK: &str = "unaligned_ok";

/// Derives the verdict for a phase from recorded metrics alone. The one
/// place gate rules live; returns the verdict and the failure reasons.
pub fn verdict_for(
    phase: Phase,
    metrics: &BTreeMap<String, Ratio>,
    thresholds: &GateThresholds,
) -> (Verdict, Vec<String>) {
    let mut reasons = Vec::new();
    let get = |name: &str| metrics.get(name).copied();
    match phase {
        Phase::Inception => {
            for category in Category::in_reusability_order() {
                let key = format!("coverage_{category}");
                if let Some(value) = get(&key) {
                    let min = thresholds.coverage_for(category);
                    if !value.ge_f64(min) {
                        reasons.push(format!("{key} {value} below threshold {min}"));
                    }
                }
            }
            if get("datasets_kept").is_none_or(|v| v.is_zero()) {
                reasons.push("no dataset kept".into());
            }
            if get(UNALIGNED_OK).is_none() && get("ontologies_kept").is_none_or(|v| v.is_zero()) {
                reasons.push("no reference ontology kept".into());
            }
        }
        Phase::Modeling => {
            match get("extensiveness") {
                Some(value) if value.le_f64(thresholds.extensiveness_max) => {}
                Some(value) => reasons.push(format!(
                    "extensiveness {value} above maximum {}",
                    thresholds.extensiveness_max
                )),
                None => reasons.push("extensiveness not computed".into()),
            }
            if get("datasets_selected").is_none_or(|v| v.is_zero()) {
                reasons.push("no dataset matches the model".into());
            }
        }
        Phase::Alignment => {
            if get(UNALIGNED_OK).is_none() {
                if get("ontologies_selected").is_none_or(|v| v.is_zero()) {
                    reasons.push("no reference ontology selected".into());
                }
                for (name, value) in metrics {
                    if let Some(ontology) = name.strip_prefix("sparsity:") {
                        if !value.ge_f64(thresholds.sparsity_min) {
                            reasons.push(format!(
                                "sparsity against {ontology} {value} below minimum {} \
                                 (no contextual knowledge)",
                                thresholds.sparsity_min
                            ));
                        }
                    }
                }
                if let Some(value) = get("adoption_common") {
                    if !value.ge_f64(thresholds.adoption_common_min) {
                        reasons.push(format!(
                            "common adoption {value} below threshold {}",
                            thresholds.adoption_common_min
                        ));
                    }
                }
                if let Some(value) = get("adoption_core") {
                    if !value.ge_f64(thresholds.adoption_core_min) {
                        reasons.push(format!(
                            "core adoption {value} below threshold {}",
                            thresholds.adoption_core_min
                        ));
                    }
                }
            }
        }
        Phase::Integration => match get("answerability") {
            Some(value) if value.ge_f64(thresholds.answerability_min) => {}
            Some(value) => reasons.push(format!(
                "answerability {value} below threshold {}",
                thresholds.answerability_min
            )),
            None => reasons.push("answerability not computed".into()),
        },
    }
    let verdict = if reasons.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    (verdict, reasons)
}

fn decision(
    phase: Phase,
    metrics: BTreeMap<String, Ratio>,
    thresholds: &GateThresholds,
    extra_reasons: Vec<String>,
) -> GateDecision {
    let (mut verdict, mut reasons) = verdict_for(phase, &metrics, thresholds);
    if !extra_reasons.is_empty() {
        verdict = Verdict::Fail;
        reasons.extend(extra_reasons);
    }
    GateDecision {
        phase,
        metrics,
        verdict,
        backtrack_to: (verdict == Verdict::Fail).then(|| phase.backtrack_target()),
        reasons,
    }
}

/// Eval(a): per category, coverage of the CQ elements by the union of kept
/// dataset schemas must reach the category threshold, and at least one
/// ontology must survive (unless alignment is waived).
pub fn eval_inception(
    cq_elements: &BTreeMap<String, EType>,
    reports: &[crate::inception::MatchReport],
    selection: &crate::inception::ResourceSelection,
    thresholds: &GateThresholds,
    allow_unaligned: bool,
) -> GateDecision {
    // bare property name → most reusable category
    let mut prop_category: BTreeMap<&str, Category> = BTreeMap::new();
    for etype in cq_elements.values() {
        for prop in etype.properties.values() {
            prop_category
                .entry(&prop.name)
                .and_modify(|c| *c = c.most_reusable(prop.category))
                .or_insert(prop.category);
        }
    }
    // union of matched CQ properties over kept datasets
    let mut matched: BTreeMap<&str, ()> = BTreeMap::new();
    for report in reports {
        if !selection.dataset_kept(&report.dataset_id) {
            continue;
        }
        for pair in &report.matched {
            if let Some((name, _)) = prop_category.get_key_value(pair.property.as_str()) {
                matched.insert(name, ());
            }
        }
    }
    let mut metrics_map = BTreeMap::new();
    for category in Category::in_reusability_order() {
        let total = prop_category.values().filter(|c| **c == category).count();
        if total == 0 {
            continue;
        }
        let hit = prop_category
            .iter()
            .filter(|(name, c)| **c == category && matched.contains_key(*name))
            .count();
        metrics_map.insert(
            format!("coverage_{category}"),
            Ratio::from_counts(hit, total),
        );
    }
    metrics_map.insert(
        "datasets_kept".into(),
        Ratio::from_counts(selection.kept_datasets.len(), 1),
    );
    metrics_map.insert(
        "ontologies_kept".into(),
        Ratio::from_counts(selection.kept_ontologies.len(), 1),
    );
    if allow_unaligned {
        metrics_map.insert(UNALIGNED_OK.into(), Ratio::ONE);
    }
    decision(Phase::Inception, metrics_map, thresholds, Vec::new())
}

/// Eval(b): the model must not over-extend the CQs and at least one dataset
/// must survive the model-fit selection.
pub fn eval_modeling(
    cq_elements: &BTreeMap<String, EType>,
    model: &crate::model::ETGModel,
    datasets_selected: usize,
    thresholds: &GateThresholds,
) -> GateDecision {
    let cq_set: ElementSet = cq_elements
        .values()
        .flat_map(|e| {
            std::iter::once(ElementKey::etype(e.name.clone())).chain(
                e.properties
                    .keys()
                    .map(move |p| ElementKey::property(e.name.clone(), p.clone())),
            )
        })
        .collect();
    let model_set = model.element_set(Granularity::Both);
    let mut metrics_map = BTreeMap::new();
    if let Ok(ext) = metrics::extensiveness(&cq_set, &model_set) {
        metrics_map.insert("extensiveness".into(), ext.value);
    }
    metrics_map.insert(
        "datasets_selected".into(),
        Ratio::from_counts(datasets_selected, 1),
    );
    decision(Phase::Modeling, metrics_map, thresholds, Vec::new())
}

/// Eval(c): sparsity against every selected ontology must clear the minimum
/// (the ETG keeps contextual knowledge) while common and core elements are
/// adopted at their required rates.
pub fn eval_alignment(
    etg: Option<&crate::model::ETG>,
    selected: &[(String, ElementSet)],
    thresholds: &GateThresholds,
    unaligned: bool,
    failure: Option<&str>,
) -> GateDecision {
    let mut metrics_map = BTreeMap::new();
    let mut extra = Vec::new();
    if unaligned {
        metrics_map.insert(UNALIGNED_OK.into(), Ratio::ONE);
    }
    match etg {
        None => extra.push(failure.unwrap_or("no ETG generated").to_string()),
        Some(etg) => {
            metrics_map.insert(
                "ontologies_selected".into(),
                Ratio::from_counts(selected.len(), 1),
            );
            let etg_set = etg.element_set(Granularity::Both);
            for (name, ontology_set) in selected {
                if let Ok(spr) = metrics::sparsity(&etg_set, ontology_set) {
                    metrics_map.insert(format!("sparsity:{name}"), spr.value);
                }
            }
            // adoption ratios per category over all ETG elements
            for category in [Category::Common, Category::Core] {
                let mut total = 0usize;
                let mut adopted = 0usize;
                for etype in etg.etypes.values() {
                    if etype.category == category {
                        total += 1;
                        if etype.provenance.is_ontology() {
                            adopted += 1;
                        }
                    }
                    for prop in etype.properties.values() {
                        if prop.category == category {
                            total += 1;
                            if prop.provenance.is_ontology() {
                                adopted += 1;
                            }
                        }
                    }
                }
                if total > 0 {
                    metrics_map.insert(
                        format!("adoption_{category}"),
                        Ratio::from_counts(adopted, total),
                    );
                }
            }
            if let Some(reason) = failure {
                extra.push(reason.to_string());
            }
        }
    }
    decision(Phase::Alignment, metrics_map, thresholds, extra)
}

/// A CQ is answerable when each of its annotated etypes has at least one
/// entity whose required properties (data values or object links) are all
/// filled. Etype names pass through the model→ETG counterpart table.
fn cq_answerable(cq: &CompetencyQuery, eg: &EntityGraph) -> bool {
    for element in &cq.elements {
        let Some(etg_name) = eg.etg.etype_for_model(&element.etype) else {
            return false;
        };
        let required: Vec<&str> = cq
            .required_for_answer
            .iter()
            .filter(|(etype, _)| etype == &element.etype)
            .map(|(_, prop)| prop.as_str())
            .collect();
        let satisfied = eg.entities_of(etg_name).any(|entity| {
            required.iter().all(|prop| {
                entity.data_values.contains_key(*prop)
                    || entity
                        .object_links
                        .get(*prop)
                        .is_some_and(|t| !t.is_empty())
            })
        });
        if !satisfied {
            return false;
        }
    }
    true
}

/// Eval(d): the fraction of answerable CQs must reach the answerability
/// threshold.
pub fn eval_integration(
    eg: &EntityGraph,
    cqs: &[CompetencyQuery],
    thresholds: &GateThresholds,
) -> GateDecision {
    let mut metrics_map = BTreeMap::new();
    let mut answerable = 0usize;
    let mut extra = Vec::new();
    for cq in cqs {
        let ok = cq_answerable(cq, eg);
        metrics_map.insert(
            format!("cq:{}", cq.id),
            if ok { Ratio::ONE } else { Ratio::ZERO },
        );
        if ok {
            answerable += 1;
        }
    }
    if !cqs.is_empty() {
        metrics_map.insert(
            "answerability".into(),
            Ratio::from_counts(answerable, cqs.len()),
        );
    }
    let decision = decision(Phase::Integration, metrics_map, thresholds, Vec::new());
    if decision.verdict == Verdict::Fail {
        for cq in cqs {
            if !cq_answerable(cq, eg) {
                extra.push(format!("cq {} not answerable", cq.id));
            }
        }
        return GateDecision {
            reasons: [decision.reasons.clone(), extra].concat(),
            ..decision
        };
    }
    decision
}

/// How a pipeline run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunOutcome {
    /// All four gates passed; the entity graph is built.
    Completed,
    /// Backtracking retries were exhausted.
    Exhausted,
}

/// Result of [`run_pipeline`]: the decision history, the retry count and the
/// final phase state (artifacts of the last sweep).
pub struct PipelineRun {
    pub outcome: RunOutcome,
    pub decisions: Vec<GateDecision>,
    pub retries: u32,
    pub state: PhaseState,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub allow_unaligned: bool,
}

fn gate_for(state: &PhaseState, phase: Phase, options: &RunOptions) -> GateDecision {
    let thresholds = &state.purpose.thresholds;
    match phase {
        Phase::Inception => eval_inception(
            &state.cq_elements,
            &state.match_reports,
            &state.selection,
            thresholds,
            options.allow_unaligned,
        ),
        Phase::Modeling => eval_modeling(
            &state.cq_elements,
            &state.model_build.as_ref().expect("modeling ran").model,
            state.final_datasets.len(),
            thresholds,
        ),
        Phase::Alignment => {
            let selected: Vec<(String, ElementSet)> = state
                .ranked
                .iter()
                .filter_map(|r| {
                    state
                        .ontologies
                        .get(&r.name)
                        .map(|o| (r.name.clone(), o.element_set(Granularity::Both)))
                })
                .collect();
            eval_alignment(
                state.etg_build.as_ref().map(|b| &b.etg),
                &selected,
                thresholds,
                state.unaligned,
                state.alignment_failure.as_deref(),
            )
        }
        Phase::Integration => eval_integration(
            state.entity_graph.as_ref().expect("integration ran"),
            &state.purpose.cqs,
            thresholds,
        ),
    }
}

fn work_for(
    state: &mut PhaseState,
    phase: Phase,
    options: &RunOptions,
) -> Result<(), PipelineError> {
    match phase {
        Phase::Inception => pipeline::work_inception(state),
        Phase::Modeling => pipeline::work_modeling(state),
        Phase::Alignment => pipeline::work_alignment(state, options.allow_unaligned),
        Phase::Integration => pipeline::work_integration(state),
    }
}

/// Runs phases 1→4 with gate evaluation and backtracking.
///
/// On a gate failure the purpose is re-loaded (consuming file edits) and the
/// pipeline re-enters the failing phase's backtrack target; phases between
/// the target and the failed gate re-run their work but their already-passed
/// gates are not re-judged. Aborts after `max_backtrack_iterations` total
/// re-entries.
pub fn run_pipeline(
    source: &mut dyn PurposeSource,
    options: &RunOptions,
) -> Result<PipelineRun, PipelineError> {
    let purpose = source.load()?;
    let mut state = PhaseState::new(purpose, source.base_dir());
    let mut decisions: Vec<GateDecision> = Vec::new();
    let mut retries = 0u32;
    let mut start = Phase::Inception;
    // gates of phases before this are considered settled for the sweep
    let mut gate_from = Phase::Inception;

    'sweep: loop {
        for phase in Phase::ALL.into_iter().filter(|p| *p >= start) {
            work_for(&mut state, phase, options)?;
            if phase >= gate_from {
                let decision = gate_for(&state, phase, options);
                let failed = !decision.passed();
                let target = decision.backtrack_to;
                decisions.push(decision);
                if failed {
                    retries += 1;
                    if retries > state.purpose.thresholds.max_backtrack_iterations {
                        return Ok(PipelineRun {
                            outcome: RunOutcome::Exhausted,
                            decisions,
                            retries: retries - 1,
                            state,
                        });
                    }
                    state.purpose = source.load()?;
                    start = target.unwrap_or(Phase::Inception);
                    gate_from = phase;
                    continue 'sweep;
                }
            }
        }
        return Ok(PipelineRun {
            outcome: RunOutcome::Completed,
            decisions,
            retries,
            state,
        });
    }
}

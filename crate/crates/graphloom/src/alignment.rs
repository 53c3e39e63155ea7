//! Phase 3: select reference ontologies, predict etype correspondences (ETR),
//! generate the shareable ETG preserving contextual elements and dataset
//! mappings, and clean datasets against the ETG datatypes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::values;
use crate::ingest::{OntologyDocument, RecordSet};
use crate::metrics::{self, MetricValue, Ratio};
use crate::model::{
    AttributeRef, DataType, DatasetDescriptor, ETGModel, EType, Edge, ElementRef, GateThresholds,
    PropertyDef, PropertyKind, Provenance, ScorerConfig, ETG,
};
use crate::similarity::etype_score;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlignmentError {
    /// Every candidate ontology failed selection.
    #[error("no reference ontology fits the model (overlap/shareability below thresholds)")]
    NoOntology,
    /// A preserved dataset mapping would no longer resolve in the ETG.
    #[error("mapping lost for {dataset}.{attribute}: {etype}.{property} is not in the ETG")]
    MappingLoss {
        dataset: String,
        attribute: String,
        etype: String,
        property: String,
    },
}

/// One scored (model etype, ontology etype) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub model_etype: String,
    pub ontology_etype: String,
    pub score: f64,
}

/// ETR output for one ontology: all pair scores plus the greedy one-to-one
/// assignment of pairs at or above the acceptance threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionVector {
    pub ontology: String,
    pub acceptance_threshold: f64,
    pub entries: Vec<PredictionEntry>,
    /// model etype → ontology etype; at most one per side.
    pub assignments: BTreeMap<String, String>,
}

/// Predicts, for each model etype, the best-fitting etype of the ontology.
///
/// Scores are `name_weight * name_similarity + property_weight * Jaccard`
/// over normalized property names; assignment is greedy in descending score
/// order with deterministic tie-breaking; entries below the acceptance
/// threshold stay unassigned.
pub fn etr_predict(
    model: &ETGModel,
    ontology: &OntologyDocument,
    scorer: &ScorerConfig,
) -> PredictionVector {
    let mut entries: Vec<PredictionEntry> = Vec::new();
    for model_etype in model.etypes.values() {
        for ontology_etype in ontology.etypes.values() {
            entries.push(PredictionEntry {
                model_etype: model_etype.name.clone(),
                ontology_etype: ontology_etype.name.clone(),
                score: etype_score(scorer, model_etype, ontology_etype),
            });
        }
    }
    let mut ranked: Vec<&PredictionEntry> = entries.iter().collect();
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.model_etype.cmp(&b.model_etype))
            .then_with(|| a.ontology_etype.cmp(&b.ontology_etype))
    });
    let mut assignments = BTreeMap::new();
    let mut taken: BTreeSet<&str> = BTreeSet::new();
    for entry in ranked {
        if entry.score < scorer.etr_acceptance {
            break;
        }
        if assignments.contains_key(&entry.model_etype)
            || taken.contains(entry.ontology_etype.as_str())
        {
            continue;
        }
        assignments.insert(entry.model_etype.clone(), entry.ontology_etype.clone());
        taken.insert(entry.ontology_etype.as_str());
    }
    entries.sort_by(|a, b| {
        a.model_etype
            .cmp(&b.model_etype)
            .then_with(|| a.ontology_etype.cmp(&b.ontology_etype))
    });
    PredictionVector {
        ontology: ontology.name.clone(),
        acceptance_threshold: scorer.etr_acceptance,
        entries,
        assignments,
    }
}

/// A selected ontology with its selection metrics, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedOntology {
    pub name: String,
    pub overlap: MetricValue,
    /// Overlap with contextual model etypes excluded from the denominator;
    /// reported only, never used for the keep/drop decision.
    pub overlap_adjusted: Option<MetricValue>,
    /// Mean property shareability over the matched etypes.
    pub mean_shareability: Ratio,
}

/// Keeps ontologies whose etype overlap and mean property shareability reach
/// their thresholds; ranks by (overlap, shareability) descending.
pub fn select_ontologies(
    model: &ETGModel,
    ontologies: &[OntologyDocument],
    thresholds: &GateThresholds,
    scorer: &ScorerConfig,
) -> Result<Vec<RankedOntology>, AlignmentError> {
    let mut kept = Vec::new();
    for ontology in ontologies {
        let Ok(overlap) = metrics::etype_overlap(ontology, model, scorer) else {
            continue;
        };
        if !overlap.value.ge_f64(thresholds.ontology_overlap_min) {
            continue;
        }
        let prediction = etr_predict(model, ontology, scorer);
        let mut share_sum = Ratio::ZERO;
        let mut share_count = 0u64;
        for (model_name, ontology_name) in &prediction.assignments {
            let model_etype = &model.etypes[model_name];
            let ontology_etype = &ontology.etypes[ontology_name];
            if let Ok(share) = metrics::property_shareability(ontology_etype, model_etype) {
                share_sum = share_sum + share.value;
                share_count += 1;
            }
        }
        let mean_shareability = if share_count == 0 {
            Ratio::ZERO
        } else {
            share_sum.div_by(share_count)
        };
        if !mean_shareability.ge_f64(thresholds.ontology_shareability_min) {
            continue;
        }
        // reporting view: contextual model etypes out of the denominator
        let non_contextual: Vec<&EType> = model
            .etypes
            .values()
            .filter(|e| e.category != crate::model::Category::Contextual)
            .collect();
        let overlap_adjusted = if non_contextual.is_empty() {
            None
        } else {
            let matched = prediction
                .assignments
                .keys()
                .filter(|name| {
                    model.etypes[*name].category != crate::model::Category::Contextual
                })
                .count();
            Some(MetricValue {
                name: metrics::MetricName::EtypeOverlap,
                value: Ratio::from_counts(matched, non_contextual.len()),
                alpha_size: non_contextual.len(),
                beta_size: ontology.etypes.len(),
                intersection_size: matched,
            })
        };
        kept.push(RankedOntology {
            name: ontology.name.clone(),
            overlap,
            overlap_adjusted,
            mean_shareability,
        });
    }
    if kept.is_empty() {
        return Err(AlignmentError::NoOntology);
    }
    kept.sort_by(|a, b| {
        b.overlap
            .value
            .to_f64()
            .partial_cmp(&a.overlap.value.to_f64())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                b.mean_shareability
                    .to_f64()
                    .partial_cmp(&a.mean_shareability.to_f64())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .then_with(|| a.name.cmp(&b.name))
    });
    Ok(kept)
}

/// Datatype disagreement between a model property and its adopted ontology
/// counterpart; the model datatype wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatatypeConflict {
    pub etype: String,
    pub property: String,
    pub model_kind: String,
    pub ontology_kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtgBuild {
    pub etg: ETG,
    pub datatype_conflicts: Vec<DatatypeConflict>,
}

/// Builds the final ETG from the model and the accepted predictions.
///
/// Assigned model etypes adopt the ontology etype's name; properties shared
/// by normalized name take ontology provenance, the rest are carried over
/// verbatim with model provenance, which is how contextual elements survive.
/// When several selected ontologies match the same model etype the
/// highest-ranked one wins. The dataset mapping is rebuilt through the
/// assignment; a target that no longer resolves is a [`AlignmentError::MappingLoss`].
pub fn generate_etg(
    model: &ETGModel,
    ranked: &[RankedOntology],
    predictions: &BTreeMap<String, PredictionVector>,
    ontologies: &BTreeMap<String, OntologyDocument>,
    model_mapping: &BTreeMap<AttributeRef, ElementRef>,
) -> Result<EtgBuild, AlignmentError> {
    let mut counterparts: BTreeMap<String, String> = BTreeMap::new();
    let mut etypes: BTreeMap<String, EType> = BTreeMap::new();
    let mut datatype_conflicts = Vec::new();

    for model_etype in model.etypes.values() {
        // first ranked ontology with an accepted assignment wins
        let adoption = ranked.iter().find_map(|r| {
            let prediction = predictions.get(&r.name)?;
            let target = prediction.assignments.get(&model_etype.name)?;
            Some((r.name.clone(), target.clone()))
        });
        match adoption {
            Some((ontology_name, target_name)) => {
                let ontology_etype = &ontologies[&ontology_name].etypes[&target_name];
                let mut properties = BTreeMap::new();
                for prop in model_etype.properties.values() {
                    let adopted = ontology_etype.properties.get(&prop.name);
                    let (kind, provenance) = match adopted {
                        Some(ontology_prop) => {
                            if !kinds_compatible(&prop.kind, &ontology_prop.kind) {
                                datatype_conflicts.push(DatatypeConflict {
                                    etype: target_name.clone(),
                                    property: prop.name.clone(),
                                    model_kind: kind_label(&prop.kind),
                                    ontology_kind: kind_label(&ontology_prop.kind),
                                });
                            }
                            // model datatype wins on conflict
                            (prop.kind.clone(), Provenance::Ontology(ontology_name.clone()))
                        }
                        None => (prop.kind.clone(), Provenance::Model),
                    };
                    properties.insert(
                        prop.name.clone(),
                        PropertyDef {
                            name: prop.name.clone(),
                            kind,
                            category: prop.category,
                            provenance,
                        },
                    );
                }
                counterparts.insert(model_etype.name.clone(), target_name.clone());
                etypes.insert(
                    target_name.clone(),
                    EType {
                        name: target_name,
                        properties,
                        category: model_etype.category,
                        provenance: Provenance::Ontology(ontology_name),
                    },
                );
            }
            None => {
                // carried verbatim; contextual elements end up here
                let mut carried = model_etype.clone();
                carried.provenance = Provenance::Model;
                for prop in carried.properties.values_mut() {
                    prop.provenance = Provenance::Model;
                }
                counterparts.insert(model_etype.name.clone(), model_etype.name.clone());
                etypes.insert(model_etype.name.clone(), carried);
            }
        }
    }

    // remap edges and object-property ranges through the assignment
    let mut edges = BTreeSet::new();
    for edge in &model.edges {
        let source = counterparts[&edge.source].clone();
        let target = counterparts[&edge.target].clone();
        if let Some(etype) = etypes.get_mut(&source) {
            if let Some(prop) = etype.properties.get_mut(&edge.property) {
                if prop.kind.is_object() {
                    prop.kind = PropertyKind::Object {
                        range: target.clone(),
                    };
                }
            }
        }
        edges.insert(Edge {
            source,
            property: edge.property.clone(),
            target,
        });
    }

    // rebuild the dataset mapping so every attribute still resolves
    let mut mapping_preservation = BTreeMap::new();
    for ((dataset, attribute), (etype, property)) in model_mapping {
        let target_etype = counterparts.get(etype).cloned().unwrap_or_else(|| etype.clone());
        let resolves = etypes
            .get(&target_etype)
            .map(|e| e.properties.contains_key(property))
            .unwrap_or(false);
        if !resolves {
            return Err(AlignmentError::MappingLoss {
                dataset: dataset.clone(),
                attribute: attribute.clone(),
                etype: target_etype,
                property: property.clone(),
            });
        }
        mapping_preservation.insert(
            (dataset.clone(), attribute.clone()),
            (target_etype, property.clone()),
        );
    }

    Ok(EtgBuild {
        etg: ETG {
            etypes,
            edges,
            counterparts,
            mapping_preservation,
        },
        datatype_conflicts,
    })
}

/// Degenerate alignment: the ETG is the model itself, every element with
/// model provenance. Used under `--allow-unaligned` when no ontology fits.
pub fn etg_from_model(
    model: &ETGModel,
    model_mapping: &BTreeMap<AttributeRef, ElementRef>,
) -> ETG {
    let mut etypes = model.etypes.clone();
    for etype in etypes.values_mut() {
        etype.provenance = Provenance::Model;
        for prop in etype.properties.values_mut() {
            prop.provenance = Provenance::Model;
        }
    }
    ETG {
        etypes,
        edges: model.edges.clone(),
        counterparts: model
            .etypes
            .keys()
            .map(|name| (name.clone(), name.clone()))
            .collect(),
        mapping_preservation: model_mapping.clone(),
    }
}

fn kinds_compatible(a: &PropertyKind, b: &PropertyKind) -> bool {
    match (a, b) {
        (PropertyKind::Data { datatype: da }, PropertyKind::Data { datatype: db }) => da == db,
        // ranges are remapped through the assignment, so object/object always
        // reconciles; data/object is a conflict
        (PropertyKind::Object { .. }, PropertyKind::Object { .. }) => true,
        _ => false,
    }
}

fn kind_label(kind: &PropertyKind) -> String {
    match kind {
        PropertyKind::Data { datatype } => datatype.as_str().to_string(),
        PropertyKind::Object { range } => format!("object({range})"),
    }
}

/// Reason a value was nulled during cleaning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Sentinel,
    ParseFailure { expected: DataType },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedValue {
    pub record_index: usize,
    pub attribute: String,
    pub raw: String,
    pub reason: RejectReason,
}

/// A dataset with values normalized to the ETG datatypes. Mapped attributes
/// only; `None` marks a nulled value (sentinel or parse failure).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanedRecordSet {
    pub descriptor: DatasetDescriptor,
    pub records: Vec<BTreeMap<String, Option<String>>>,
    pub rejected: Vec<RejectedValue>,
}

impl CleanedRecordSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Cleans one dataset against the ETG: trims every mapped value, nulls
/// sentinels, parses dates/datetimes into ISO-8601 and numerics
/// locale-neutrally; values failing their datatype go to `rejected` and
/// become null. Never fails a whole file.
pub fn clean_dataset(records: &RecordSet, etg: &ETG) -> CleanedRecordSet {
    let dataset_id = &records.descriptor.id;
    let mut cleaned_records = Vec::with_capacity(records.records.len());
    let mut rejected = Vec::new();

    for (record_index, record) in records.records.iter().enumerate() {
        let mut cleaned: BTreeMap<String, Option<String>> = BTreeMap::new();
        for (attribute, raw) in record {
            let Some((etype_name, property)) = etg.mapping_for(dataset_id, attribute) else {
                continue; // unmapped attributes carry nothing into the graph
            };
            let trimmed = raw.trim();
            if values::is_sentinel(trimmed) {
                rejected.push(RejectedValue {
                    record_index,
                    attribute: attribute.clone(),
                    raw: raw.clone(),
                    reason: RejectReason::Sentinel,
                });
                cleaned.insert(attribute.clone(), None);
                continue;
            }
            let kind = etg
                .etypes
                .get(etype_name)
                .and_then(|e| e.property(property))
                .map(|p| &p.kind);
            let parsed = match kind {
                Some(PropertyKind::Data { datatype }) => match datatype {
                    DataType::String => Some(trimmed.to_string()),
                    DataType::Integer => values::parse_integer(trimmed),
                    DataType::Decimal => values::parse_decimal(trimmed),
                    DataType::Date => values::parse_date(trimmed),
                    DataType::DateTime => values::parse_datetime(trimmed),
                    DataType::Boolean => values::parse_boolean(trimmed),
                },
                // object references stay as trimmed identity-key text
                Some(PropertyKind::Object { .. }) | None => Some(trimmed.to_string()),
            };
            match parsed {
                Some(canonical) => {
                    cleaned.insert(attribute.clone(), Some(canonical));
                }
                None => {
                    let expected = kind.and_then(|k| k.datatype()).unwrap_or(DataType::String);
                    rejected.push(RejectedValue {
                        record_index,
                        attribute: attribute.clone(),
                        raw: raw.clone(),
                        reason: RejectReason::ParseFailure { expected },
                    });
                    cleaned.insert(attribute.clone(), None);
                }
            }
        }
        cleaned_records.push(cleaned);
    }

    CleanedRecordSet {
        descriptor: records.descriptor.clone(),
        records: cleaned_records,
        rejected,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{Category, DataFormat};

    fn prop(name: &str, kind: PropertyKind, category: Category) -> PropertyDef {
        PropertyDef {
            name: name.into(),
            kind,
            category,
            provenance: Provenance::Cq,
        }
    }

    fn data(datatype: DataType) -> PropertyKind {
        PropertyKind::Data { datatype }
    }

    fn object(range: &str) -> PropertyKind {
        PropertyKind::Object {
            range: range.into(),
        }
    }

    fn etype(
        name: &str,
        category: Category,
        provenance: Provenance,
        props: Vec<PropertyDef>,
    ) -> EType {
        EType {
            name: name.into(),
            properties: props.into_iter().map(|p| (p.name.clone(), p)).collect(),
            category,
            provenance,
        }
    }

    /// The four-etype model portion: patient, medication, drug, translation.
    pub(crate) fn reference_model() -> ETGModel {
        let etypes: BTreeMap<String, EType> = [
            etype(
                "patient",
                Category::Common,
                Provenance::Cq,
                vec![
                    prop("patient_identifier", data(DataType::String), Category::Common),
                    prop("name", data(DataType::String), Category::Common),
                    prop("surname", data(DataType::String), Category::Common),
                    prop("date_of_birth", data(DataType::Date), Category::Common),
                ],
            ),
            etype(
                "medication",
                Category::Core,
                Provenance::Cq,
                vec![
                    prop("medication_subject", object("patient"), Category::Core),
                    prop("medication_date", data(DataType::Date), Category::Core),
                    prop("drug_identifier", object("drug"), Category::Core),
                    prop(
                        "medication_dosage_instruction",
                        data(DataType::String),
                        Category::Contextual,
                    ),
                    prop(
                        "medication_text_note",
                        data(DataType::String),
                        Category::Contextual,
                    ),
                ],
            ),
            etype(
                "drug",
                Category::Core,
                Provenance::Cq,
                vec![
                    prop("coding_system", data(DataType::String), Category::Core),
                    prop("code_value", data(DataType::String), Category::Core),
                ],
            ),
            etype(
                "translation",
                Category::Contextual,
                Provenance::Cq,
                vec![
                    prop("target_language", data(DataType::String), Category::Contextual),
                    prop("source_language", data(DataType::String), Category::Contextual),
                ],
            ),
        ]
        .into_iter()
        .map(|e| (e.name.clone(), e))
        .collect();
        let edges = [
            Edge {
                source: "medication".into(),
                property: "medication_subject".into(),
                target: "patient".into(),
            },
            Edge {
                source: "medication".into(),
                property: "drug_identifier".into(),
                target: "drug".into(),
            },
        ]
        .into_iter()
        .collect();
        ETGModel { etypes, edges }
    }

    /// FHIR-flavored fixture: MedicationStatement, Medication, Patient.
    pub(crate) fn reference_ontology() -> OntologyDocument {
        let name = "fhir_like".to_string();
        let ont = |n: &str| Provenance::Ontology(n.into());
        let etypes: BTreeMap<String, EType> = [
            etype(
                "medicationstatement",
                Category::Core,
                ont(&name),
                vec![
                    prop("medication_subject", object("patient"), Category::Core),
                    prop("medication_date", data(DataType::Date), Category::Core),
                    prop("drug_identifier", object("medication"), Category::Core),
                    prop(
                        "medication_dosage_instruction",
                        data(DataType::String),
                        Category::Contextual,
                    ),
                    prop(
                        "medication_text_note",
                        data(DataType::String),
                        Category::Contextual,
                    ),
                    prop("status", data(DataType::String), Category::Core),
                ],
            ),
            etype(
                "medication",
                Category::Core,
                ont(&name),
                vec![
                    prop("coding_system", data(DataType::String), Category::Core),
                    prop("code_value", data(DataType::String), Category::Core),
                ],
            ),
            etype(
                "patient",
                Category::Common,
                ont(&name),
                vec![
                    prop("patient_identifier", data(DataType::String), Category::Common),
                    prop("name", data(DataType::String), Category::Common),
                    prop("surname", data(DataType::String), Category::Common),
                    prop("date_of_birth", data(DataType::Date), Category::Common),
                    prop("gender", data(DataType::String), Category::Common),
                ],
            ),
        ]
        .into_iter()
        .map(|e| (e.name.clone(), e))
        .collect();
        OntologyDocument {
            name,
            etypes,
        }
    }

    fn predict_reference() -> PredictionVector {
        etr_predict(
            &reference_model(),
            &reference_ontology(),
            &ScorerConfig::default(),
        )
    }

    #[test]
    fn etr_assigns_the_reference_correspondences() {
        let prediction = predict_reference();
        assert_eq!(
            prediction.assignments.get("medication").map(String::as_str),
            Some("medicationstatement")
        );
        assert_eq!(
            prediction.assignments.get("drug").map(String::as_str),
            Some("medication")
        );
        assert_eq!(
            prediction.assignments.get("patient").map(String::as_str),
            Some("patient")
        );
        assert!(!prediction.assignments.contains_key("translation"));
        // same name, most properties shared
        let patient = prediction
            .entries
            .iter()
            .find(|e| e.model_etype == "patient" && e.ontology_etype == "patient")
            .unwrap();
        assert!(patient.score >= 0.7, "patient score {}", patient.score);
    }

    #[test]
    fn translation_scores_below_acceptance_everywhere() {
        let prediction = predict_reference();
        for entry in prediction
            .entries
            .iter()
            .filter(|e| e.model_etype == "translation")
        {
            assert!(
                entry.score < 0.5,
                "translation vs {} scored {}",
                entry.ontology_etype,
                entry.score
            );
        }
    }

    #[test]
    fn identical_etype_scores_one_and_is_assigned() {
        let model = reference_model();
        let mut ontology = reference_ontology();
        // an ontology that is exactly the model
        ontology.etypes = model.etypes.clone();
        let prediction = etr_predict(&model, &ontology, &ScorerConfig::default());
        let patient = prediction
            .entries
            .iter()
            .find(|e| e.model_etype == "patient" && e.ontology_etype == "patient")
            .unwrap();
        assert!((patient.score - 1.0).abs() < 1e-12);
        assert_eq!(prediction.assignments.len(), model.etypes.len());
    }

    #[test]
    fn assignment_is_one_to_one() {
        let prediction = predict_reference();
        let targets: BTreeSet<&String> = prediction.assignments.values().collect();
        assert_eq!(targets.len(), prediction.assignments.len());
    }

    fn reference_mapping() -> BTreeMap<AttributeRef, ElementRef> {
        [
            ("id_patient", ("patient", "patient_identifier")),
            ("firstname", ("patient", "name")),
            ("familyname", ("patient", "surname")),
            ("cd_atc", ("drug", "code_value")),
            ("beginmoment_date", ("medication", "medication_date")),
            ("content_text", ("medication", "medication_text_note")),
        ]
        .into_iter()
        .map(|(attr, (e, p))| {
            (
                ("hospital_a".to_string(), attr.to_string()),
                (e.to_string(), p.to_string()),
            )
        })
        .collect()
    }

    fn build_reference_etg() -> EtgBuild {
        let model = reference_model();
        let ontology = reference_ontology();
        let scorer = ScorerConfig::default();
        let ranked = select_ontologies(
            &model,
            std::slice::from_ref(&ontology),
            &GateThresholds::default(),
            &scorer,
        )
        .unwrap();
        let predictions: BTreeMap<String, PredictionVector> = [(
            ontology.name.clone(),
            etr_predict(&model, &ontology, &scorer),
        )]
        .into();
        let ontologies: BTreeMap<String, OntologyDocument> =
            [(ontology.name.clone(), ontology)].into();
        generate_etg(&model, &ranked, &predictions, &ontologies, &reference_mapping()).unwrap()
    }

    #[test]
    fn selection_keeps_and_ranks_reference_ontology() {
        let model = reference_model();
        let good = reference_ontology();
        let unrelated = OntologyDocument {
            name: "unrelated".into(),
            etypes: [etype(
                "spacecraft",
                Category::Contextual,
                Provenance::Ontology("unrelated".into()),
                vec![prop("thrust", data(DataType::Decimal), Category::Contextual)],
            )]
            .into_iter()
            .map(|e| (e.name.clone(), e))
            .collect(),
        };
        let ranked = select_ontologies(
            &model,
            &[unrelated.clone(), good.clone()],
            &GateThresholds::default(),
            &ScorerConfig::default(),
        )
        .unwrap();
        assert_eq!(ranked.len(), 1);
        assert_eq!(ranked[0].name, "fhir_like");
        assert_eq!(ranked[0].overlap.value, Ratio::new(3, 4));
        // reporting view excludes the contextual translation etype
        assert_eq!(
            ranked[0].overlap_adjusted.as_ref().unwrap().value,
            Ratio::ONE
        );

        let err = select_ontologies(
            &model,
            &[unrelated],
            &GateThresholds::default(),
            &ScorerConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err, AlignmentError::NoOntology);
    }

    #[test]
    fn ranked_order_follows_overlap() {
        let model = reference_model();
        let full = reference_ontology();
        // an ontology matching only the patient etype
        let partial = OntologyDocument {
            name: "patient_only".into(),
            etypes: [etype(
                "patient",
                Category::Common,
                Provenance::Ontology("patient_only".into()),
                vec![
                    prop("patient_identifier", data(DataType::String), Category::Common),
                    prop("name", data(DataType::String), Category::Common),
                    prop("surname", data(DataType::String), Category::Common),
                    prop("date_of_birth", data(DataType::Date), Category::Common),
                ],
            )]
            .into_iter()
            .map(|e| (e.name.clone(), e))
            .collect(),
        };
        // a single match is 1/4 overlap, below the 0.3 default
        let thresholds = GateThresholds {
            ontology_overlap_min: 0.2,
            ..GateThresholds::default()
        };
        let ranked = select_ontologies(
            &model,
            &[partial, full],
            &thresholds,
            &ScorerConfig::default(),
        )
        .unwrap();
        assert_eq!(ranked.len(), 2);
        assert_eq!(ranked[0].name, "fhir_like");
        assert_eq!(ranked[1].name, "patient_only");
    }

    #[test]
    fn etg_adopts_and_carries_per_reference_example() {
        let build = build_reference_etg();
        let etg = &build.etg;
        assert_eq!(etg.etypes.len(), 4);
        assert_eq!(
            etg.etype_for_model("medication").unwrap(),
            "medicationstatement"
        );
        assert_eq!(etg.etype_for_model("drug").unwrap(), "medication");
        assert_eq!(etg.etype_for_model("patient").unwrap(), "patient");
        assert_eq!(etg.etype_for_model("translation").unwrap(), "translation");

        let translation = &etg.etypes["translation"];
        assert_eq!(translation.provenance, Provenance::Model);
        // adopted etype keeps only matched + carried model properties
        let ms = &etg.etypes["medicationstatement"];
        assert!(!ms.properties.contains_key("status"));
        assert!(ms.properties["medication_date"].provenance.is_ontology());

        // edges remapped through the assignment
        assert!(etg.edges.contains(&Edge {
            source: "medicationstatement".into(),
            property: "medication_subject".into(),
            target: "patient".into(),
        }));
        assert!(etg.edges.contains(&Edge {
            source: "medicationstatement".into(),
            property: "drug_identifier".into(),
            target: "medication".into(),
        }));

        // every model etype has exactly one counterpart
        assert_eq!(etg.counterparts.len(), 4);
        etg.validate().unwrap();
    }

    #[test]
    fn contextual_elements_survive_verbatim() {
        let build = build_reference_etg();
        let model = reference_model();
        for etype in model.etypes.values() {
            for prop in etype.properties.values() {
                if prop.category == Category::Contextual {
                    let target = build.etg.etype_for_model(&etype.name).unwrap();
                    assert!(
                        build.etg.etypes[target].properties.contains_key(&prop.name),
                        "contextual property {}.{} lost",
                        etype.name,
                        prop.name
                    );
                }
            }
        }
    }

    #[test]
    fn datatype_conflicts_reported_model_wins() {
        let model = reference_model();
        let mut ontology = reference_ontology();
        // the ontology disagrees on medication_date's datatype
        ontology
            .etypes
            .get_mut("medicationstatement")
            .unwrap()
            .properties
            .get_mut("medication_date")
            .unwrap()
            .kind = PropertyKind::Data {
            datatype: DataType::String,
        };
        let scorer = ScorerConfig::default();
        let ranked = select_ontologies(
            &model,
            std::slice::from_ref(&ontology),
            &GateThresholds::default(),
            &scorer,
        )
        .unwrap();
        let predictions: BTreeMap<String, PredictionVector> = [(
            ontology.name.clone(),
            etr_predict(&model, &ontology, &scorer),
        )]
        .into();
        let ontologies: BTreeMap<String, OntologyDocument> =
            [(ontology.name.clone(), ontology)].into();
        let build =
            generate_etg(&model, &ranked, &predictions, &ontologies, &BTreeMap::new()).unwrap();
        assert_eq!(build.datatype_conflicts.len(), 1);
        let conflict = &build.datatype_conflicts[0];
        assert_eq!(conflict.property, "medication_date");
        assert_eq!(conflict.model_kind, "date");
        assert_eq!(conflict.ontology_kind, "string");
        // the model datatype wins
        assert_eq!(
            build.etg.etypes["medicationstatement"].properties["medication_date"]
                .kind
                .datatype(),
            Some(DataType::Date)
        );
    }

    #[test]
    fn mapping_preserved_through_adoption() {
        let build = build_reference_etg();
        let target = build.etg.mapping_for("hospital_a", "cd_atc").unwrap();
        assert_eq!(target, &("medication".to_string(), "code_value".to_string()));
        let target = build
            .etg
            .mapping_for("hospital_a", "beginmoment_date")
            .unwrap();
        assert_eq!(
            target,
            &("medicationstatement".to_string(), "medication_date".to_string())
        );
    }

    #[test]
    fn corrupt_mapping_is_a_mapping_loss() {
        let model = reference_model();
        let ontology = reference_ontology();
        let scorer = ScorerConfig::default();
        let ranked = select_ontologies(
            &model,
            std::slice::from_ref(&ontology),
            &GateThresholds::default(),
            &scorer,
        )
        .unwrap();
        let predictions: BTreeMap<String, PredictionVector> = [(
            ontology.name.clone(),
            etr_predict(&model, &ontology, &scorer),
        )]
        .into();
        let ontologies: BTreeMap<String, OntologyDocument> =
            [(ontology.name.clone(), ontology)].into();
        let mut mapping = reference_mapping();
        mapping.insert(
            ("hospital_a".into(), "cd_atc".into()),
            ("drug".into(), "vanished_property".into()),
        );
        let err = generate_etg(&model, &ranked, &predictions, &ontologies, &mapping).unwrap_err();
        assert!(matches!(err, AlignmentError::MappingLoss { .. }));
    }

    #[test]
    fn empty_acceptances_yield_model_provenance_everywhere() {
        let model = reference_model();
        let ontology = reference_ontology();
        let scorer = ScorerConfig {
            etr_acceptance: 1.01, // nothing can be accepted
            ..ScorerConfig::default()
        };
        let predictions: BTreeMap<String, PredictionVector> = [(
            ontology.name.clone(),
            etr_predict(&model, &ontology, &scorer),
        )]
        .into();
        let ranked = vec![RankedOntology {
            name: ontology.name.clone(),
            overlap: MetricValue {
                name: metrics::MetricName::EtypeOverlap,
                value: Ratio::ZERO,
                alpha_size: 4,
                beta_size: 3,
                intersection_size: 0,
            },
            overlap_adjusted: None,
            mean_shareability: Ratio::ZERO,
        }];
        let ontologies: BTreeMap<String, OntologyDocument> =
            [(ontology.name.clone(), ontology)].into();
        let build =
            generate_etg(&model, &ranked, &predictions, &ontologies, &BTreeMap::new()).unwrap();
        for etype in build.etg.etypes.values() {
            assert_eq!(etype.provenance, Provenance::Model);
        }
        assert_eq!(build.etg.etypes.len(), model.etypes.len());
    }

    fn cleaning_fixture() -> (RecordSet, ETG) {
        let model = reference_model();
        let etg = etg_from_model(&model, &reference_mapping());
        let descriptor = DatasetDescriptor {
            id: "hospital_a".into(),
            format: DataFormat::Csv,
            path: "hospital_a.csv".into(),
            record_path: None,
            priority: 1,
            schema: [
                ("id_patient", DataType::String),
                ("beginmoment_date", DataType::Date),
                ("content_text", DataType::String),
            ]
            .into_iter()
            .map(|(a, t)| (a.to_string(), t))
            .collect(),
            category_annotations: BTreeMap::new(),
            aliases: BTreeMap::new(),
            similarity_acceptance: None,
        };
        let records = vec![
            BTreeMap::from([
                ("id_patient".to_string(), " p1 ".to_string()),
                ("beginmoment_date".to_string(), "12/03/2021".to_string()),
                ("content_text".to_string(), "note".to_string()),
            ]),
            BTreeMap::from([
                ("id_patient".to_string(), "p2".to_string()),
                ("beginmoment_date".to_string(), "not a date".to_string()),
                ("content_text".to_string(), "N/A".to_string()),
            ]),
        ];
        (
            RecordSet {
                descriptor,
                records,
            },
            etg,
        )
    }

    #[test]
    fn cleaning_normalizes_rejects_and_nulls() {
        let (records, etg) = cleaning_fixture();
        let cleaned = clean_dataset(&records, &etg);
        assert_eq!(cleaned.records.len(), 2);
        assert_eq!(
            cleaned.records[0]["beginmoment_date"].as_deref(),
            Some("2021-03-12")
        );
        assert_eq!(cleaned.records[0]["id_patient"].as_deref(), Some("p1"));
        // parse failure → null + rejected entry
        assert_eq!(cleaned.records[1]["beginmoment_date"], None);
        assert!(cleaned.rejected.iter().any(|r| {
            r.record_index == 1
                && r.attribute == "beginmoment_date"
                && r.reason == RejectReason::ParseFailure {
                    expected: DataType::Date,
                }
        }));
        // sentinel → null, logged as sentinel
        assert_eq!(cleaned.records[1]["content_text"], None);
        assert!(cleaned
            .rejected
            .iter()
            .any(|r| r.attribute == "content_text" && r.reason == RejectReason::Sentinel));
    }

    #[test]
    fn cleaning_covers_every_datatype() {
        let kinds = [
            ("count", DataType::Integer, "abc", Some("7"), " 7 "),
            ("ratio_v", DataType::Decimal, "1,5", Some("1.5"), "1.5"),
            ("flag", DataType::Boolean, "yes", Some("true"), "TRUE"),
            (
                "seen_at",
                DataType::DateTime,
                "whenever",
                Some("2021-03-12T08:30:00"),
                "12/03/2021 08:30",
            ),
        ];
        let mut etype = EType::new("sample", Category::Core, Provenance::Model);
        let mut mapping = BTreeMap::new();
        for (name, datatype, _, _, _) in kinds {
            etype.properties.insert(
                name.into(),
                PropertyDef {
                    name: name.into(),
                    kind: PropertyKind::Data { datatype },
                    category: Category::Core,
                    provenance: Provenance::Model,
                },
            );
            mapping.insert(
                ("d".to_string(), name.to_string()),
                ("sample".to_string(), name.to_string()),
            );
        }
        let etg = ETG {
            etypes: [(etype.name.clone(), etype)].into(),
            edges: Default::default(),
            counterparts: Default::default(),
            mapping_preservation: mapping,
        };
        let descriptor = DatasetDescriptor {
            id: "d".into(),
            format: DataFormat::Csv,
            path: "d.csv".into(),
            record_path: None,
            priority: 1,
            schema: BTreeMap::new(),
            category_annotations: BTreeMap::new(),
            aliases: BTreeMap::new(),
            similarity_acceptance: None,
        };
        let bad: BTreeMap<String, String> = kinds
            .iter()
            .map(|(name, _, raw, _, _)| (name.to_string(), raw.to_string()))
            .collect();
        let good: BTreeMap<String, String> = kinds
            .iter()
            .map(|(name, _, _, _, raw)| (name.to_string(), raw.to_string()))
            .collect();
        let cleaned = clean_dataset(
            &RecordSet {
                descriptor,
                records: vec![bad, good],
            },
            &etg,
        );
        for (name, datatype, _, expected, _) in kinds {
            assert_eq!(cleaned.records[0][name], None, "{name} must be rejected");
            assert!(cleaned.rejected.iter().any(|r| {
                r.record_index == 0
                    && r.attribute == name
                    && r.reason == RejectReason::ParseFailure { expected: datatype }
            }));
            assert_eq!(cleaned.records[1][name].as_deref(), expected);
        }
    }

    #[test]
    fn cleaning_preserves_record_count_and_value_budget() {
        let (records, etg) = cleaning_fixture();
        let cleaned = clean_dataset(&records, &etg);
        assert_eq!(cleaned.records.len(), records.records.len());
        let retained: usize = cleaned
            .records
            .iter()
            .map(|r| r.values().filter(|v| v.is_some()).count())
            .sum();
        let original: usize = records.records.iter().map(|r| r.len()).sum();
        assert_eq!(retained + cleaned.rejected.len(), original);
    }
}

//! Phase 1: extract categorized elements from the CQs, match dataset schemas
//! against them (common → core → contextual), and assemble the candidate
//! resource selection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{MetricValue, Ratio};
use crate::model::{
    AliasTarget, Category, CompetencyQuery, DatasetDescriptor, EType, GateThresholds,
    PropertyDef, Provenance,
};
use crate::similarity::normalized_levenshtein;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InceptionError {
    #[error("validation error: {0}")]
    Validation(String),
}

/// Validated per-dataset attribute→element alias table.
///
/// Non-extension targets must name an extracted CQ element; extension targets
/// declare new dataset-suggested properties consumed by the modeling phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AliasMap {
    pub entries: BTreeMap<String, AliasTarget>,
    /// Similarity acceptance for this dataset's fuzzy matches.
    pub acceptance: f64,
}

impl AliasMap {
    pub fn from_descriptor(
        descriptor: &DatasetDescriptor,
        cq_elements: &BTreeMap<String, EType>,
        default_acceptance: f64,
    ) -> Result<AliasMap, InceptionError> {
        for (attr, target) in &descriptor.aliases {
            if target.extension {
                continue;
            }
            let declared = cq_elements
                .get(&target.etype)
                .map(|e| e.properties.contains_key(&target.property))
                .unwrap_or(false);
            if !declared {
                return Err(InceptionError::Validation(format!(
                    "dataset {:?}: alias {attr:?} -> {}.{} names no extracted CQ element \
                     (mark it extension = true to extend the model instead)",
                    descriptor.id, target.etype, target.property
                )));
            }
        }
        Ok(AliasMap {
            entries: descriptor.aliases.clone(),
            acceptance: descriptor
                .similarity_acceptance
                .unwrap_or(default_acceptance),
        })
    }

    fn non_extension(&self) -> impl Iterator<Item = (&String, &AliasTarget)> {
        self.entries.iter().filter(|(_, t)| !t.extension)
    }

    pub fn extensions(&self) -> impl Iterator<Item = (&String, &AliasTarget)> {
        self.entries.iter().filter(|(_, t)| t.extension)
    }
}

/// How an attribute↔property match was established.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MatchMechanism {
    Alias,
    ExactName,
    Similarity { score: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub attribute: String,
    pub etype: String,
    pub property: String,
    pub mechanism: MatchMechanism,
}

/// Outcome of matching one dataset schema against the CQ elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub dataset_id: String,
    /// Per-category coverage over the CQ property keys; absent when the
    /// category has no CQ properties.
    pub coverage_common: Option<MetricValue>,
    pub coverage_core: Option<MetricValue>,
    pub coverage_contextual: Option<MetricValue>,
    /// One-to-one matches: an attribute maps to at most one property and
    /// vice versa.
    pub matched: Vec<MatchedPair>,
    pub unmatched_elements: Vec<String>,
    pub unmatched_attributes: Vec<String>,
    /// Extension-marked attributes, set aside for the modeling phase.
    pub extension_attributes: Vec<String>,
}

impl MatchReport {
    pub fn coverage_for(&self, category: Category) -> Option<&MetricValue> {
        match category {
            Category::Common => self.coverage_common.as_ref(),
            Category::Core => self.coverage_core.as_ref(),
            Category::Contextual => self.coverage_contextual.as_ref(),
        }
    }
}

/// Why a resource was kept or dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub id: String,
    pub reason: String,
}

/// Datasets and ontologies surviving phase 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceSelection {
    /// Kept dataset ids, ordered by descriptor priority.
    pub kept_datasets: Vec<SelectionEntry>,
    pub dropped_datasets: Vec<SelectionEntry>,
    pub kept_ontologies: Vec<SelectionEntry>,
    pub dropped_ontologies: Vec<SelectionEntry>,
}

impl ResourceSelection {
    pub fn dataset_kept(&self, id: &str) -> bool {
        self.kept_datasets.iter().any(|e| e.id == id)
    }

    pub fn ontology_kept(&self, name: &str) -> bool {
        self.kept_ontologies.iter().any(|e| e.id == name)
    }
}

/// Extracts the annotated etypes and properties from the CQs.
///
/// Elements inherit the category of their CQ; when several CQs contribute the
/// same etype or property, the most reusable category wins. Conflicting
/// datatype/range declarations for one property are rejected.
pub fn extract_elements(
    cqs: &[CompetencyQuery],
) -> Result<BTreeMap<String, EType>, InceptionError> {
    let mut etypes: BTreeMap<String, EType> = BTreeMap::new();
    // Order independence: merging is commutative (max over categories, equal
    // kinds enforced), so CQ iteration order cannot matter.
    for cq in cqs {
        for element in &cq.elements {
            let etype = etypes.entry(element.etype.clone()).or_insert_with(|| {
                EType::new(element.etype.clone(), cq.category, Provenance::Cq)
            });
            etype.category = etype.category.most_reusable(cq.category);
            for prop in &element.properties {
                match etype.properties.get_mut(&prop.name) {
                    None => {
                        etype.properties.insert(
                            prop.name.clone(),
                            PropertyDef {
                                name: prop.name.clone(),
                                kind: prop.kind.clone(),
                                category: cq.category,
                                provenance: Provenance::Cq,
                            },
                        );
                    }
                    Some(existing) => {
                        if existing.kind != prop.kind {
                            return Err(InceptionError::Validation(format!(
                                "cq {}: property {}.{} re-declared with a different \
                                 datatype or range",
                                cq.id, element.etype, prop.name
                            )));
                        }
                        existing.category = existing.category.most_reusable(cq.category);
                    }
                }
            }
        }
    }
    Ok(etypes)
}

struct CqPropertyIndex {
    /// bare property name → (most reusable category, owner etypes)
    props: BTreeMap<String, (Category, BTreeSet<String>)>,
}

impl CqPropertyIndex {
    fn build(cq_elements: &BTreeMap<String, EType>) -> CqPropertyIndex {
        let mut props: BTreeMap<String, (Category, BTreeSet<String>)> = BTreeMap::new();
        for etype in cq_elements.values() {
            for prop in etype.properties.values() {
                let entry = props
                    .entry(prop.name.clone())
                    .or_insert((prop.category, BTreeSet::new()));
                entry.0 = entry.0.most_reusable(prop.category);
                entry.1.insert(etype.name.clone());
            }
        }
        CqPropertyIndex { props }
    }

    /// Owning etype for a matched property: most reusable etype category
    /// first, then lexicographic name.
    fn owner(&self, cq_elements: &BTreeMap<String, EType>, prop: &str) -> Option<String> {
        let owners = &self.props.get(prop)?.1;
        owners
            .iter()
            .min_by_key(|name| {
                let cat = cq_elements[*name].category;
                (std::cmp::Reverse(cat), (*name).clone())
            })
            .cloned()
    }
}

/// Matches a dataset schema against the CQ elements: alias entries first,
/// then exact normalized-name equality, then string similarity above the
/// acceptance threshold. Matching is evaluated per category in decreasing
/// reusability order and the result is one-to-one.
pub fn match_schema(
    cq_elements: &BTreeMap<String, EType>,
    descriptor: &DatasetDescriptor,
    aliases: &AliasMap,
) -> MatchReport {
    let index = CqPropertyIndex::build(cq_elements);
    let mut matched: Vec<MatchedPair> = Vec::new();
    let mut claimed_attrs: BTreeSet<String> = BTreeSet::new();
    let mut claimed_props: BTreeSet<String> = BTreeSet::new();
    let mut extension_attributes: Vec<String> = Vec::new();

    // (a) alias entries always win
    for (attr, target) in aliases.non_extension() {
        if descriptor.schema.contains_key(attr) && !claimed_props.contains(&target.property) {
            matched.push(MatchedPair {
                attribute: attr.clone(),
                etype: target.etype.clone(),
                property: target.property.clone(),
                mechanism: MatchMechanism::Alias,
            });
            claimed_attrs.insert(attr.clone());
            claimed_props.insert(target.property.clone());
        }
    }
    for (attr, _) in aliases.extensions() {
        if descriptor.schema.contains_key(attr) {
            extension_attributes.push(attr.clone());
            claimed_attrs.insert(attr.clone());
        }
    }

    // (b) exact normalized-name equality
    for attr in descriptor.schema.keys() {
        if claimed_attrs.contains(attr) || claimed_props.contains(attr) {
            continue;
        }
        if index.props.contains_key(attr) {
            if let Some(owner) = index.owner(cq_elements, attr) {
                matched.push(MatchedPair {
                    attribute: attr.clone(),
                    etype: owner,
                    property: attr.clone(),
                    mechanism: MatchMechanism::ExactName,
                });
                claimed_attrs.insert(attr.clone());
                claimed_props.insert(attr.clone());
            }
        }
    }

    // (c) similarity above the acceptance threshold, greedily by descending
    // score; ties prefer the more reusable category, then lexicographic
    // property then attribute name.
    let mut candidates: Vec<(f64, Category, String, String)> = Vec::new();
    for attr in descriptor.schema.keys() {
        if claimed_attrs.contains(attr) {
            continue;
        }
        for (prop, (category, _)) in &index.props {
            if claimed_props.contains(prop) {
                continue;
            }
            let score = normalized_levenshtein(attr, prop);
            if score >= aliases.acceptance {
                candidates.push((score, *category, prop.clone(), attr.clone()));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| b.1.cmp(&a.1))
            .then_with(|| a.2.cmp(&b.2))
            .then_with(|| a.3.cmp(&b.3))
    });
    for (score, _, prop, attr) in candidates {
        if claimed_attrs.contains(&attr) || claimed_props.contains(&prop) {
            continue;
        }
        if let Some(owner) = index.owner(cq_elements, &prop) {
            matched.push(MatchedPair {
                attribute: attr.clone(),
                etype: owner,
                property: prop.clone(),
                mechanism: MatchMechanism::Similarity { score },
            });
            claimed_attrs.insert(attr);
            claimed_props.insert(prop);
        }
    }

    matched.sort_by(|a, b| a.attribute.cmp(&b.attribute));

    // per-category coverage over the CQ property keys, common → contextual
    let mut coverage = [None, None, None];
    for (slot, category) in Category::in_reusability_order().into_iter().enumerate() {
        let total = index
            .props
            .values()
            .filter(|(cat, _)| *cat == category)
            .count();
        if total == 0 {
            continue;
        }
        let hit = index
            .props
            .iter()
            .filter(|(name, (cat, _))| *cat == category && claimed_props.contains(*name))
            .count();
        coverage[slot] = Some(MetricValue {
            name: crate::metrics::MetricName::Coverage,
            value: Ratio::from_counts(hit, total),
            alpha_size: total,
            beta_size: descriptor.schema.len(),
            intersection_size: hit,
        });
    }

    let unmatched_elements = index
        .props
        .keys()
        .filter(|p| !claimed_props.contains(*p))
        .cloned()
        .collect();
    let unmatched_attributes = descriptor
        .schema
        .keys()
        .filter(|a| !claimed_attrs.contains(*a))
        .cloned()
        .collect();

    MatchReport {
        dataset_id: descriptor.id.clone(),
        coverage_common: coverage[0].take(),
        coverage_core: coverage[1].take(),
        coverage_contextual: coverage[2].take(),
        matched,
        unmatched_elements,
        unmatched_attributes,
        extension_attributes,
    }
}

/// Keeps a dataset when any per-category coverage reaches that category's
/// threshold (checked in decreasing reusability order) and an ontology when
/// its etype overlap reaches the ontology threshold.
pub fn collect_resources(
    descriptors: &[DatasetDescriptor],
    reports: &[MatchReport],
    ontology_overlaps: &[(String, MetricValue)],
    thresholds: &GateThresholds,
) -> ResourceSelection {
    let mut selection = ResourceSelection::default();

    let mut ordered: Vec<&DatasetDescriptor> = descriptors.iter().collect();
    ordered.sort_by_key(|d| d.priority);
    for descriptor in ordered {
        let Some(report) = reports.iter().find(|r| r.dataset_id == descriptor.id) else {
            continue;
        };
        let mut kept_reason = None;
        for category in Category::in_reusability_order() {
            if let Some(cov) = report.coverage_for(category) {
                if cov.value.ge_f64(thresholds.coverage_for(category)) {
                    kept_reason = Some(format!(
                        "{category} coverage {}/{} meets threshold {}",
                        cov.intersection_size,
                        cov.alpha_size,
                        thresholds.coverage_for(category)
                    ));
                    break;
                }
            }
        }
        match kept_reason {
            Some(reason) => selection.kept_datasets.push(SelectionEntry {
                id: descriptor.id.clone(),
                reason,
            }),
            None => {
                let any_match = !report.matched.is_empty();
                selection.dropped_datasets.push(SelectionEntry {
                    id: descriptor.id.clone(),
                    reason: if any_match {
                        "coverage below every category threshold".to_string()
                    } else {
                        "no CQ overlap".to_string()
                    },
                });
            }
        }
    }

    for (name, overlap) in ontology_overlaps {
        if overlap.value.ge_f64(thresholds.ontology_overlap_min) {
            selection.kept_ontologies.push(SelectionEntry {
                id: name.clone(),
                reason: format!(
                    "etype overlap {}/{} meets threshold {}",
                    overlap.intersection_size, overlap.alpha_size, thresholds.ontology_overlap_min
                ),
            });
        } else {
            selection.dropped_ontologies.push(SelectionEntry {
                id: name.clone(),
                reason: format!(
                    "etype overlap {}/{} below threshold {}",
                    overlap.intersection_size, overlap.alpha_size, thresholds.ontology_overlap_min
                ),
            });
        }
    }

    selection
}

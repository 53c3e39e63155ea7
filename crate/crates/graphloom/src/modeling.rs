//! Phase 2: build the purpose-specific ETG model from the CQ elements,
//! optionally extended with dataset-suggested properties, and finalize the
//! dataset selection against the model.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inception::MatchReport;
use crate::ingest::RecordSet;
use crate::metrics::Ratio;
use crate::model::{
    AttributeRef, Category, DataType, EType, ETGModel, Edge, ElementRef, PropertyDef,
    PropertyKind, Provenance,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelingError {
    /// A CQ object property targets an etype absent from the model.
    #[error("object property {etype}.{property} targets {range:?}, which is not in the model")]
    DanglingRange {
        etype: String,
        property: String,
        range: String,
    },
    /// Dataset selection left nothing to integrate; forces backtracking.
    #[error("no dataset matches the model")]
    NoDataset,
}

/// Model construction output: the graph, the resolved dataset→model mapping,
/// and attributes flagged for manual review (extension targets without an
/// owning etype, or colliding with an existing property).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBuild {
    pub model: ETGModel,
    /// (dataset id, attribute) → (etype, property), feeding ETG generation.
    pub mapping: BTreeMap<AttributeRef, ElementRef>,
    pub review_flags: Vec<String>,
}

/// Builds the ETG model from the extracted CQ elements.
///
/// The model always contains every CQ etype and property. With `extend`,
/// extension-marked alias targets of kept datasets are added as data
/// properties on their declared etype (inferred datatype; annotated category
/// or contextual by default). Object-property edges come from CQ-declared
/// object properties; a range missing from the model is an error.
pub fn build_etg_model(
    cq_elements: &BTreeMap<String, EType>,
    kept_record_sets: &[&RecordSet],
    reports: &[MatchReport],
    extend: bool,
) -> Result<ModelBuild, ModelingError> {
    let mut etypes = cq_elements.clone();
    let mut review_flags = Vec::new();
    let mut mapping: BTreeMap<AttributeRef, ElementRef> = BTreeMap::new();

    // matched pairs of kept datasets map straight into the model
    for record_set in kept_record_sets {
        let dataset_id = &record_set.descriptor.id;
        if let Some(report) = reports.iter().find(|r| &r.dataset_id == dataset_id) {
            for pair in &report.matched {
                mapping.insert(
                    (dataset_id.clone(), pair.attribute.clone()),
                    (pair.etype.clone(), pair.property.clone()),
                );
            }
        }
    }

    if extend {
        for record_set in kept_record_sets {
            let descriptor = &record_set.descriptor;
            for (attribute, target) in descriptor.aliases.iter().filter(|(_, t)| t.extension) {
                if !descriptor.schema.contains_key(attribute) {
                    continue;
                }
                let Some(etype) = etypes.get_mut(&target.etype) else {
                    review_flags.push(format!(
                        "dataset {:?}: extension attribute {attribute:?} has no owning etype \
                         {:?} in the model",
                        descriptor.id, target.etype
                    ));
                    continue;
                };
                if etype.properties.contains_key(&target.property) {
                    review_flags.push(format!(
                        "dataset {:?}: extension attribute {attribute:?} collides with existing \
                         property {}.{}",
                        descriptor.id, target.etype, target.property
                    ));
                    continue;
                }
                let datatype = descriptor
                    .schema
                    .get(attribute)
                    .copied()
                    .unwrap_or(DataType::String);
                let category = descriptor
                    .category_annotations
                    .get(attribute)
                    .copied()
                    .unwrap_or(Category::Contextual);
                etype.properties.insert(
                    target.property.clone(),
                    PropertyDef {
                        name: target.property.clone(),
                        kind: PropertyKind::Data { datatype },
                        category,
                        provenance: Provenance::Dataset,
                    },
                );
                mapping.insert(
                    (descriptor.id.clone(), attribute.clone()),
                    (target.etype.clone(), target.property.clone()),
                );
            }
        }
    }

    let mut edges = BTreeSet::new();
    for etype in etypes.values() {
        for prop in etype.properties.values() {
            if let Some(range) = prop.kind.range() {
                if !etypes.contains_key(range) {
                    return Err(ModelingError::DanglingRange {
                        etype: etype.name.clone(),
                        property: prop.name.clone(),
                        range: range.to_string(),
                    });
                }
                edges.insert(Edge {
                    source: etype.name.clone(),
                    property: prop.name.clone(),
                    target: range.to_string(),
                });
            }
        }
    }

    Ok(ModelBuild {
        model: ETGModel { etypes, edges },
        mapping,
        review_flags,
    })
}

/// Coverage of one dataset's schema by the model: mapped attributes / all
/// attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetModelFit {
    pub dataset_id: String,
    pub coverage: Ratio,
    pub mapped: usize,
    pub attributes: usize,
}

/// Finalizes the dataset selection: keeps datasets whose schema coverage
/// against the model properties reaches the modeling threshold, ordered by
/// descriptor priority. An empty result is [`ModelingError::NoDataset`].
pub fn select_datasets(
    build: &ModelBuild,
    kept_record_sets: &[&RecordSet],
    threshold: f64,
) -> Result<Vec<DatasetModelFit>, ModelingError> {
    let mut fits: Vec<(u32, DatasetModelFit)> = Vec::new();
    for record_set in kept_record_sets {
        let descriptor = &record_set.descriptor;
        let attributes = descriptor.schema.len();
        let mapped = descriptor
            .schema
            .keys()
            .filter(|attr| {
                build
                    .mapping
                    .contains_key(&(descriptor.id.clone(), (*attr).clone()))
            })
            .count();
        let coverage = if attributes == 0 {
            Ratio::ZERO
        } else {
            Ratio::from_counts(mapped, attributes)
        };
        if coverage.ge_f64(threshold) && attributes > 0 {
            fits.push((
                descriptor.priority,
                DatasetModelFit {
                    dataset_id: descriptor.id.clone(),
                    coverage,
                    mapped,
                    attributes,
                },
            ));
        }
    }
    if fits.is_empty() {
        return Err(ModelingError::NoDataset);
    }
    fits.sort_by_key(|(priority, _)| *priority);
    Ok(fits.into_iter().map(|(_, fit)| fit).collect())
}

/// Renders the model as a reviewable text graph: one line per etype, indented
/// properties, edges as `source --property--> target`.
pub fn export_model_text(model: &ETGModel) -> String {
    let mut out = String::new();
    for etype in model.etypes.values() {
        out.push_str(&format!("{} [{}]\n", etype.name, etype.category));
        for prop in etype.properties.values() {
            match &prop.kind {
                PropertyKind::Data { datatype } => {
                    out.push_str(&format!("  {}: {} [{}]\n", prop.name, datatype, prop.category));
                }
                PropertyKind::Object { range } => {
                    out.push_str(&format!("  {}: -> {} [{}]\n", prop.name, range, prop.category));
                }
            }
        }
    }
    if !model.edges.is_empty() {
        out.push('\n');
        for edge in &model.edges {
            out.push_str(&format!("{edge}\n"));
        }
    }
    out
}

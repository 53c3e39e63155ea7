//! Parsing of all external inputs: purpose documents, ontology documents and
//! CSV/JSON/XML datasets.
//!
//! Documents are structured TOML files (layout in the crate README); datasets
//! are flattened to attribute→string records with normalized attribute names.
//! All parsers are total over arbitrary input: malformed bytes produce errors,
//! never panics.

mod dataset;
mod doc;
pub(crate) mod values;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DatasetDescriptor, EType, ElementSet, Granularity, HasElements};

pub use dataset::{
    infer_schema, load_dataset, parse_csv_records, parse_json_records, parse_xml_records,
};
pub use doc::{
    parse_etg_str, parse_model_str, parse_ontology, parse_ontology_str, parse_purpose,
    parse_purpose_str, serialize_etg, serialize_model, serialize_ontology, serialize_purpose,
};

/// Overlays a thresholds-override document (same keys as the purpose
/// `[thresholds]` table) onto existing thresholds.
pub fn apply_thresholds_override(
    src: &str,
    thresholds: &mut crate::model::GateThresholds,
) -> Result<(), IngestError> {
    doc::parse_thresholds_doc(src).map(|doc| doc.apply_to(thresholds))
}

#[derive(Debug, Error)]
pub enum IngestError {
    /// Malformed file. Line/column are 1-based; 0 means unknown.
    #[error("syntax error{}: {message}", position_suffix(*.line, *.column))]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    /// Well-formed file violating a document invariant.
    #[error("validation error: {message}")]
    Validation { message: String },
    /// Object property whose range etype is not declared in the document.
    #[error("object property {etype}.{property} has undeclared range {range:?}")]
    DanglingRange {
        etype: String,
        property: String,
        range: String,
    },
    /// record_path selector matched nothing.
    #[error("record path {path:?} matched nothing")]
    RecordPath { path: String },
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

fn position_suffix(line: usize, column: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!(" at line {line}, column {column}")
    }
}

impl IngestError {
    pub(crate) fn validation(message: impl Into<String>) -> Self {
        IngestError::Validation {
            message: message.into(),
        }
    }

    pub(crate) fn syntax(message: impl Into<String>) -> Self {
        IngestError::Syntax {
            line: 0,
            column: 0,
            message: message.into(),
        }
    }
}

/// A parsed reference ontology: a named set of etypes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyDocument {
    pub name: String,
    pub etypes: BTreeMap<String, EType>,
}

impl HasElements for OntologyDocument {
    fn element_set(&self, granularity: Granularity) -> ElementSet {
        use crate::model::ElementKey;
        let mut set = ElementSet::new();
        for etype in self.etypes.values() {
            if matches!(granularity, Granularity::Etypes | Granularity::Both) {
                set.insert(ElementKey::etype(etype.name.clone()));
            }
            if matches!(granularity, Granularity::Properties | Granularity::Both) {
                for prop in etype.properties.keys() {
                    set.insert(ElementKey::property(etype.name.clone(), prop.clone()));
                }
            }
        }
        set
    }
}

/// A loaded dataset: its descriptor (schema filled in) plus flat records in
/// source order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSet {
    pub descriptor: DatasetDescriptor,
    pub records: Vec<BTreeMap<String, String>>,
}

impl RecordSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

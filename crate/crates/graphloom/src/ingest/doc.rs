//! The structured document formats: purpose files, ontology files, and the
//! model/ETG exports (the latter reuse the ontology layout plus provenance,
//! category and mapping annotations, so a generated ETG can be fed back to a
//! future purpose as a reference ontology).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{IngestError, OntologyDocument};
use crate::model::{
    AliasTarget, Category, CompetencyQuery, CqElement, CqProperty, DataFormat, DataType,
    DatasetDescriptor, ETGModel, EType, Edge, ElementRef, GateThresholds, IdentityRule,
    normalize_label, PropertyDef, PropertyKind, Provenance, Purpose, PurposeOptions, ETG,
};

fn read_file(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn toml_syntax_error(src: &str, err: toml::de::Error) -> IngestError {
    let (line, column) = match err.span() {
        Some(span) => {
            let start = span.start.min(src.len());
            let line = src[..start].bytes().filter(|b| *b == b'\n').count() + 1;
            let column = src[..start]
                .rfind('\n')
                .map_or(start + 1, |nl| start - nl);
            (line, column)
        }
        None => (0, 0),
    };
    IngestError::Syntax {
        line,
        column,
        message: err.message().to_string(),
    }
}

// ---------------------------------------------------------------------------
// Purpose document
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PurposeDoc {
    description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    thresholds: Option<ThresholdsDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    options: Option<OptionsDoc>,
    #[serde(default, rename = "cq")]
    cqs: Vec<CqDoc>,
    #[serde(default, rename = "dataset")]
    datasets: Vec<DatasetDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    ontologies: Vec<String>,
    #[serde(default, rename = "identity", skip_serializing_if = "Vec::is_empty")]
    identities: Vec<IdentityDoc>,
}

/// All keys optional; absent keys take the documented defaults.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ThresholdsDoc {
    pub coverage_common: Option<f64>,
    pub coverage_core: Option<f64>,
    pub coverage_contextual: Option<f64>,
    pub ontology_overlap_min: Option<f64>,
    pub ontology_shareability_min: Option<f64>,
    pub extensiveness_max: Option<f64>,
    pub modeling_coverage_min: Option<f64>,
    pub sparsity_min: Option<f64>,
    pub adoption_common_min: Option<f64>,
    pub adoption_core_min: Option<f64>,
    pub answerability_min: Option<f64>,
    pub max_backtrack_iterations: Option<u32>,
}

impl ThresholdsDoc {
    pub(crate) fn apply_to(&self, base: &mut GateThresholds) {
        macro_rules! overlay {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { base.$field = v; })*
            };
        }
        overlay!(
            coverage_common,
            coverage_core,
            coverage_contextual,
            ontology_overlap_min,
            ontology_shareability_min,
            extensiveness_max,
            modeling_coverage_min,
            sparsity_min,
            adoption_common_min,
            adoption_core_min,
            answerability_min,
            max_backtrack_iterations
        );
    }

    fn from_thresholds(t: &GateThresholds) -> ThresholdsDoc {
        ThresholdsDoc {
            coverage_common: Some(t.coverage_common),
            coverage_core: Some(t.coverage_core),
            coverage_contextual: Some(t.coverage_contextual),
            ontology_overlap_min: Some(t.ontology_overlap_min),
            ontology_shareability_min: Some(t.ontology_shareability_min),
            extensiveness_max: Some(t.extensiveness_max),
            modeling_coverage_min: Some(t.modeling_coverage_min),
            sparsity_min: Some(t.sparsity_min),
            adoption_common_min: Some(t.adoption_common_min),
            adoption_core_min: Some(t.adoption_core_min),
            answerability_min: Some(t.answerability_min),
            max_backtrack_iterations: Some(t.max_backtrack_iterations),
        }
    }
}

/// Reads a thresholds-override file (same keys as the purpose `[thresholds]`
/// table).
pub(crate) fn parse_thresholds_doc(src: &str) -> Result<ThresholdsDoc, IngestError> {
    toml::from_str(src).map_err(|e| toml_syntax_error(src, e))
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptionsDoc {
    extend_model: Option<bool>,
    name_weight: Option<f64>,
    property_weight: Option<f64>,
    etr_acceptance: Option<f64>,
    similarity_acceptance: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    etype_aliases: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CqDoc {
    id: u32,
    question: String,
    action: String,
    category: String,
    #[serde(rename = "element", default)]
    elements: Vec<CqElementDoc>,
    /// `etype.property` references that must be instantiated in the final EG.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    required_for_answer: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CqElementDoc {
    etype: String,
    #[serde(default)]
    properties: Vec<PropDoc>,
}

/// Exactly one of `datatype` / `range` may be set; neither means a string
/// data property.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PropDoc {
    name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    datatype: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    range: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetDoc {
    id: String,
    format: String,
    path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    record_path: Option<String>,
    priority: u32,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    aliases: BTreeMap<String, AliasDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    categories: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    similarity_acceptance: Option<f64>,
}

/// Alias targets: `"etype.property"` shorthand or the full table form.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum AliasDoc {
    Dotted(String),
    Full {
        etype: String,
        property: String,
        #[serde(default)]
        extension: bool,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IdentityDoc {
    etype: String,
    keys: Vec<String>,
}

fn parse_category(raw: &str, context: &str) -> Result<Category, IngestError> {
    Category::from_str(raw).map_err(|e| IngestError::validation(format!("{context}: {e}")))
}

fn parse_datatype(raw: &str, context: &str) -> Result<DataType, IngestError> {
    DataType::from_str(raw).map_err(|e| IngestError::validation(format!("{context}: {e}")))
}

fn split_element_ref(raw: &str, context: &str) -> Result<ElementRef, IngestError> {
    match raw.split_once('.') {
        Some((etype, prop)) if !etype.trim().is_empty() && !prop.trim().is_empty() => {
            Ok((normalize_label(etype), normalize_label(prop)))
        }
        _ => Err(IngestError::validation(format!(
            "{context}: expected \"etype.property\", got {raw:?}"
        ))),
    }
}

fn prop_kind(
    datatype: &Option<String>,
    range: &Option<String>,
    context: &str,
) -> Result<PropertyKind, IngestError> {
    match (datatype, range) {
        (Some(_), Some(_)) => Err(IngestError::validation(format!(
            "{context}: a property declares either a datatype or a range, not both"
        ))),
        (None, Some(r)) => Ok(PropertyKind::Object {
            range: normalize_label(r),
        }),
        (Some(d), None) => Ok(PropertyKind::Data {
            datatype: parse_datatype(d, context)?,
        }),
        (None, None) => Ok(PropertyKind::Data {
            datatype: DataType::String,
        }),
    }
}

fn purpose_from_doc(doc: PurposeDoc) -> Result<Purpose, IngestError> {
    if doc.cqs.is_empty() {
        return Err(IngestError::validation("a purpose needs at least one CQ"));
    }
    if doc.datasets.is_empty() {
        return Err(IngestError::validation(
            "a purpose needs at least one dataset",
        ));
    }

    let mut cqs = Vec::with_capacity(doc.cqs.len());
    let mut seen_ids = BTreeSet::new();
    for cq in &doc.cqs {
        let ctx = format!("cq {}", cq.id);
        if cq.id == 0 {
            return Err(IngestError::validation(format!("{ctx}: id must be positive")));
        }
        if !seen_ids.insert(cq.id) {
            return Err(IngestError::validation(format!("duplicate cq id {}", cq.id)));
        }
        if cq.elements.is_empty() {
            return Err(IngestError::validation(format!(
                "{ctx}: element annotations must be non-empty"
            )));
        }
        let category = parse_category(&cq.category, &ctx)?;
        let mut elements = Vec::with_capacity(cq.elements.len());
        for el in &cq.elements {
            let etype = normalize_label(&el.etype);
            if etype.is_empty() {
                return Err(IngestError::validation(format!("{ctx}: empty etype name")));
            }
            let mut properties = Vec::with_capacity(el.properties.len());
            let mut names = BTreeSet::new();
            for p in &el.properties {
                let name = normalize_label(&p.name);
                let pctx = format!("{ctx}, property {name:?} of {etype}");
                if name.is_empty() {
                    return Err(IngestError::validation(format!(
                        "{ctx}: empty property name on {etype}"
                    )));
                }
                if !names.insert(name.clone()) {
                    return Err(IngestError::validation(format!(
                        "{pctx}: duplicate property name"
                    )));
                }
                properties.push(CqProperty {
                    name,
                    kind: prop_kind(&p.datatype, &p.range, &pctx)?,
                });
            }
            elements.push(CqElement { etype, properties });
        }
        let mut required = Vec::new();
        for raw in &cq.required_for_answer {
            let (etype, prop) = split_element_ref(raw, &format!("{ctx} required_for_answer"))?;
            let declared = elements
                .iter()
                .any(|el| el.etype == etype && el.properties.iter().any(|p| p.name == prop));
            if !declared {
                return Err(IngestError::validation(format!(
                    "{ctx}: required_for_answer {etype}.{prop} is not among the declared elements"
                )));
            }
            required.push((etype, prop));
        }
        cqs.push(CompetencyQuery {
            id: cq.id,
            question: cq.question.clone(),
            action: cq.action.clone(),
            category,
            elements,
            required_for_answer: required,
        });
    }

    let mut datasets = Vec::with_capacity(doc.datasets.len());
    let mut priorities = BTreeSet::new();
    let mut ids = BTreeSet::new();
    for ds in &doc.datasets {
        let ctx = format!("dataset {:?}", ds.id);
        if ds.id.trim().is_empty() {
            return Err(IngestError::validation("dataset id must be non-empty"));
        }
        if !ids.insert(ds.id.clone()) {
            return Err(IngestError::validation(format!("duplicate dataset id {:?}", ds.id)));
        }
        if !priorities.insert(ds.priority) {
            return Err(IngestError::validation(format!(
                "{ctx}: duplicate priority {}",
                ds.priority
            )));
        }
        let format = DataFormat::from_str(&ds.format)
            .map_err(|e| IngestError::validation(format!("{ctx}: {e}")))?;
        if format == DataFormat::Xml && ds.record_path.is_none() {
            return Err(IngestError::validation(format!(
                "{ctx}: record_path is required for xml datasets"
            )));
        }
        let mut aliases = BTreeMap::new();
        for (attr, target) in &ds.aliases {
            let attr = normalize_label(attr);
            let target = match target {
                AliasDoc::Dotted(raw) => {
                    let (etype, property) =
                        split_element_ref(raw, &format!("{ctx} alias {attr:?}"))?;
                    AliasTarget {
                        etype,
                        property,
                        extension: false,
                    }
                }
                AliasDoc::Full {
                    etype,
                    property,
                    extension,
                } => AliasTarget {
                    etype: normalize_label(etype),
                    property: normalize_label(property),
                    extension: *extension,
                },
            };
            aliases.insert(attr, target);
        }
        let mut category_annotations = BTreeMap::new();
        for (attr, cat) in &ds.categories {
            category_annotations.insert(
                normalize_label(attr),
                parse_category(cat, &format!("{ctx} category of {attr:?}"))?,
            );
        }
        datasets.push(DatasetDescriptor {
            id: ds.id.clone(),
            format,
            path: ds.path.clone(),
            record_path: ds.record_path.clone(),
            priority: ds.priority,
            schema: BTreeMap::new(),
            category_annotations,
            aliases,
            similarity_acceptance: ds.similarity_acceptance,
        });
    }

    let mut thresholds = GateThresholds::default();
    if let Some(t) = &doc.thresholds {
        t.apply_to(&mut thresholds);
    }
    thresholds
        .validate()
        .map_err(|e| IngestError::validation(format!("thresholds: {e}")))?;

    let mut options = PurposeOptions::default();
    if let Some(o) = &doc.options {
        if let Some(v) = o.extend_model {
            options.extend_model = v;
        }
        let s = &mut options.scorer;
        if let Some(v) = o.name_weight {
            s.name_weight = v;
        }
        if let Some(v) = o.property_weight {
            s.property_weight = v;
        }
        if let Some(v) = o.etr_acceptance {
            s.etr_acceptance = v;
        }
        if let Some(v) = o.similarity_acceptance {
            s.similarity_acceptance = v;
        }
        for (from, to) in &o.etype_aliases {
            s.etype_aliases
                .insert(normalize_label(from), normalize_label(to));
        }
        for (name, v) in [
            ("name_weight", s.name_weight),
            ("property_weight", s.property_weight),
            ("etr_acceptance", s.etr_acceptance),
            ("similarity_acceptance", s.similarity_acceptance),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(IngestError::validation(format!(
                    "options.{name} = {v} outside [0, 1]"
                )));
            }
        }
    }

    let mut identity_rules = Vec::new();
    let mut identity_etypes = BTreeSet::new();
    for rule in &doc.identities {
        let etype = normalize_label(&rule.etype);
        if rule.keys.is_empty() {
            return Err(IngestError::validation(format!(
                "identity rule for {etype}: keys must be non-empty"
            )));
        }
        if !identity_etypes.insert(etype.clone()) {
            return Err(IngestError::validation(format!(
                "duplicate identity rule for {etype}"
            )));
        }
        identity_rules.push(IdentityRule {
            etype,
            key_properties: rule.keys.iter().map(|k| normalize_label(k)).collect(),
        });
    }

    Ok(Purpose {
        description: doc.description,
        cqs,
        datasets,
        ontology_refs: doc.ontologies,
        thresholds,
        identity_rules,
        options,
    })
}

fn purpose_to_doc(purpose: &Purpose) -> PurposeDoc {
    PurposeDoc {
        description: purpose.description.clone(),
        thresholds: Some(ThresholdsDoc::from_thresholds(&purpose.thresholds)),
        options: Some(OptionsDoc {
            extend_model: Some(purpose.options.extend_model),
            name_weight: Some(purpose.options.scorer.name_weight),
            property_weight: Some(purpose.options.scorer.property_weight),
            etr_acceptance: Some(purpose.options.scorer.etr_acceptance),
            similarity_acceptance: Some(purpose.options.scorer.similarity_acceptance),
            etype_aliases: purpose.options.scorer.etype_aliases.clone(),
        }),
        cqs: purpose
            .cqs
            .iter()
            .map(|cq| CqDoc {
                id: cq.id,
                question: cq.question.clone(),
                action: cq.action.clone(),
                category: cq.category.as_str().into(),
                elements: cq
                    .elements
                    .iter()
                    .map(|el| CqElementDoc {
                        etype: el.etype.clone(),
                        properties: el
                            .properties
                            .iter()
                            .map(|p| PropDoc {
                                name: p.name.clone(),
                                datatype: p.kind.datatype().map(|d| d.as_str().into()),
                                range: p.kind.range().map(String::from),
                            })
                            .collect(),
                    })
                    .collect(),
                required_for_answer: cq
                    .required_for_answer
                    .iter()
                    .map(|(e, p)| format!("{e}.{p}"))
                    .collect(),
            })
            .collect(),
        datasets: purpose
            .datasets
            .iter()
            .map(|ds| DatasetDoc {
                id: ds.id.clone(),
                format: ds.format.to_string(),
                path: ds.path.clone(),
                record_path: ds.record_path.clone(),
                priority: ds.priority,
                aliases: ds
                    .aliases
                    .iter()
                    .map(|(attr, t)| {
                        let doc = if t.extension {
                            AliasDoc::Full {
                                etype: t.etype.clone(),
                                property: t.property.clone(),
                                extension: true,
                            }
                        } else {
                            AliasDoc::Dotted(format!("{}.{}", t.etype, t.property))
                        };
                        (attr.clone(), doc)
                    })
                    .collect(),
                categories: ds
                    .category_annotations
                    .iter()
                    .map(|(a, c)| (a.clone(), c.as_str().to_string()))
                    .collect(),
                similarity_acceptance: ds.similarity_acceptance,
            })
            .collect(),
        ontologies: purpose.ontology_refs.clone(),
        identities: purpose
            .identity_rules
            .iter()
            .map(|r| IdentityDoc {
                etype: r.etype.clone(),
                keys: r.key_properties.clone(),
            })
            .collect(),
    }
}

/// Parses a purpose document from a string.
pub fn parse_purpose_str(src: &str) -> Result<Purpose, IngestError> {
    let doc: PurposeDoc = toml::from_str(src).map_err(|e| toml_syntax_error(src, e))?;
    purpose_from_doc(doc)
}

/// Parses the purpose file at `path`.
pub fn parse_purpose(path: &Path) -> Result<Purpose, IngestError> {
    parse_purpose_str(&read_file(path)?)
}

/// Serializes a purpose back to the document format. Re-parsing the output
/// yields an equal [`Purpose`].
pub fn serialize_purpose(purpose: &Purpose) -> String {
    toml::to_string_pretty(&purpose_to_doc(purpose)).expect("purpose document serialization")
}

// ---------------------------------------------------------------------------
// Ontology / model / ETG documents
// ---------------------------------------------------------------------------

/// Unknown keys are tolerated so an exported ETG parses as a plain ontology.
#[derive(Debug, Default, Serialize, Deserialize)]
struct OntologyFileDoc {
    name: String,
    #[serde(default, rename = "etype")]
    etypes: Vec<EtypeDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    counterparts: BTreeMap<String, String>,
    #[serde(default, rename = "mapping", skip_serializing_if = "Vec::is_empty")]
    mappings: Vec<MappingEntryDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EtypeDoc {
    name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    category: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<String>,
    #[serde(default)]
    properties: Vec<OntPropDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct OntPropDoc {
    name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    datatype: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    range: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    category: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MappingEntryDoc {
    dataset: String,
    attribute: String,
    etype: String,
    property: String,
}

fn parse_provenance(raw: &str) -> Result<Provenance, IngestError> {
    match raw {
        "cq" => Ok(Provenance::Cq),
        "dataset" => Ok(Provenance::Dataset),
        "model" => Ok(Provenance::Model),
        other => match other.strip_prefix("ontology:") {
            Some(name) if !name.is_empty() => Ok(Provenance::Ontology(name.to_string())),
            _ => Err(IngestError::validation(format!(
                "unknown provenance {other:?}"
            ))),
        },
    }
}

/// Shared decoding of the etype list; `default_provenance` is used when the
/// document carries no per-element provenance (plain ontology files).
fn etypes_from_doc(
    doc: &OntologyFileDoc,
    default_provenance: &Provenance,
) -> Result<BTreeMap<String, EType>, IngestError> {
    let mut etypes = BTreeMap::new();
    for et in &doc.etypes {
        let name = normalize_label(&et.name);
        if name.is_empty() {
            return Err(IngestError::validation("empty etype name"));
        }
        let category = match &et.category {
            Some(c) => parse_category(c, &format!("etype {name}"))?,
            None => Category::Contextual,
        };
        let provenance = match &et.provenance {
            Some(p) => parse_provenance(p)?,
            None => default_provenance.clone(),
        };
        let mut properties = BTreeMap::new();
        for p in &et.properties {
            let pname = normalize_label(&p.name);
            let pctx = format!("property {pname:?} of {name}");
            if pname.is_empty() {
                return Err(IngestError::validation(format!(
                    "etype {name}: empty property name"
                )));
            }
            if properties.contains_key(&pname) {
                return Err(IngestError::validation(format!("{pctx}: duplicate name")));
            }
            let kind = prop_kind(&p.datatype, &p.range, &pctx)?;
            let pcategory = match &p.category {
                Some(c) => parse_category(c, &pctx)?,
                None => category,
            };
            let pprovenance = match &p.provenance {
                Some(pr) => parse_provenance(pr)?,
                None => provenance.clone(),
            };
            properties.insert(
                pname.clone(),
                PropertyDef {
                    name: pname,
                    kind,
                    category: pcategory,
                    provenance: pprovenance,
                },
            );
        }
        if etypes
            .insert(
                name.clone(),
                EType {
                    name: name.clone(),
                    properties,
                    category,
                    provenance,
                },
            )
            .is_some()
        {
            return Err(IngestError::validation(format!("duplicate etype {name}")));
        }
    }
    // ranges must resolve within the document
    for etype in etypes.values() {
        for prop in etype.properties.values() {
            if let Some(range) = prop.kind.range() {
                if !etypes.contains_key(range) {
                    return Err(IngestError::DanglingRange {
                        etype: etype.name.clone(),
                        property: prop.name.clone(),
                        range: range.to_string(),
                    });
                }
            }
        }
    }
    Ok(etypes)
}

fn edges_of(etypes: &BTreeMap<String, EType>) -> BTreeSet<Edge> {
    let mut edges = BTreeSet::new();
    for etype in etypes.values() {
        for prop in etype.properties.values() {
            if let Some(range) = prop.kind.range() {
                edges.insert(Edge {
                    source: etype.name.clone(),
                    property: prop.name.clone(),
                    target: range.to_string(),
                });
            }
        }
    }
    edges
}

fn etypes_to_docs(etypes: &BTreeMap<String, EType>, with_annotations: bool) -> Vec<EtypeDoc> {
    etypes
        .values()
        .map(|et| EtypeDoc {
            name: et.name.clone(),
            category: Some(et.category.as_str().into()),
            provenance: with_annotations.then(|| et.provenance.to_string()),
            properties: et
                .properties
                .values()
                .map(|p| OntPropDoc {
                    name: p.name.clone(),
                    datatype: p.kind.datatype().map(|d| d.as_str().into()),
                    range: p.kind.range().map(String::from),
                    category: Some(p.category.as_str().into()),
                    provenance: with_annotations.then(|| p.provenance.to_string()),
                })
                .collect(),
        })
        .collect()
}

/// Parses an ontology document from a string.
pub fn parse_ontology_str(src: &str) -> Result<OntologyDocument, IngestError> {
    let doc: OntologyFileDoc = toml::from_str(src).map_err(|e| toml_syntax_error(src, e))?;
    let name = normalize_label(&doc.name);
    if name.is_empty() {
        return Err(IngestError::validation("ontology name must be non-empty"));
    }
    let etypes = etypes_from_doc(&doc, &Provenance::Ontology(name.clone()))?;
    Ok(OntologyDocument { name, etypes })
}

/// Parses the ontology file at `path`.
pub fn parse_ontology(path: &Path) -> Result<OntologyDocument, IngestError> {
    parse_ontology_str(&read_file(path)?)
}

pub fn serialize_ontology(ontology: &OntologyDocument) -> String {
    let doc = OntologyFileDoc {
        name: ontology.name.clone(),
        etypes: etypes_to_docs(&ontology.etypes, false),
        counterparts: BTreeMap::new(),
        mappings: Vec::new(),
    };
    toml::to_string_pretty(&doc).expect("ontology document serialization")
}

/// Parses an ETG model export (workspace artifact).
pub fn parse_model_str(src: &str) -> Result<ETGModel, IngestError> {
    let doc: OntologyFileDoc = toml::from_str(src).map_err(|e| toml_syntax_error(src, e))?;
    let etypes = etypes_from_doc(&doc, &Provenance::Cq)?;
    let edges = edges_of(&etypes);
    Ok(ETGModel { etypes, edges })
}

pub fn serialize_model(model: &ETGModel) -> String {
    let doc = OntologyFileDoc {
        name: "model".into(),
        etypes: etypes_to_docs(&model.etypes, true),
        counterparts: BTreeMap::new(),
        mappings: Vec::new(),
    };
    toml::to_string_pretty(&doc).expect("model document serialization")
}

/// Parses an exported ETG (same layout as an ontology document plus
/// provenance, counterpart and mapping annotations).
pub fn parse_etg_str(src: &str) -> Result<ETG, IngestError> {
    let doc: OntologyFileDoc = toml::from_str(src).map_err(|e| toml_syntax_error(src, e))?;
    let etypes = etypes_from_doc(&doc, &Provenance::Model)?;
    let edges = edges_of(&etypes);
    let mut mapping_preservation = BTreeMap::new();
    for m in &doc.mappings {
        mapping_preservation.insert(
            (m.dataset.clone(), normalize_label(&m.attribute)),
            (normalize_label(&m.etype), normalize_label(&m.property)),
        );
    }
    let etg = ETG {
        etypes,
        edges,
        counterparts: doc
            .counterparts
            .iter()
            .map(|(k, v)| (normalize_label(k), normalize_label(v)))
            .collect(),
        mapping_preservation,
    };
    etg.validate().map_err(IngestError::validation)?;
    Ok(etg)
}

pub fn serialize_etg(etg: &ETG) -> String {
    let doc = OntologyFileDoc {
        name: "etg".into(),
        etypes: etypes_to_docs(&etg.etypes, true),
        counterparts: etg.counterparts.clone(),
        mappings: etg
            .mapping_preservation
            .iter()
            .map(|((dataset, attribute), (etype, property))| MappingEntryDoc {
                dataset: dataset.clone(),
                attribute: attribute.clone(),
                etype: etype.clone(),
                property: property.clone(),
            })
            .collect(),
    };
    toml::to_string_pretty(&doc).expect("etg document serialization")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL_PURPOSE: &str = r#"
description = "minimal"

[[cq]]
id = 1
question = "q"
action = "a"
category = "common"

  [[cq.element]]
  etype = "Patient"
  properties = [{ name = "Patient_identifier" }]

[[dataset]]
id = "d1"
format = "csv"
path = "data.csv"
priority = 1
"#;

    #[test]
    fn minimal_purpose_gets_default_thresholds() {
        let p = parse_purpose_str(MINIMAL_PURPOSE).unwrap();
        assert_eq!(p.thresholds, GateThresholds::default());
        assert_eq!(p.cqs.len(), 1);
        assert_eq!(p.cqs[0].elements[0].etype, "patient");
        assert_eq!(
            p.cqs[0].elements[0].properties[0].name,
            "patient_identifier"
        );
    }

    #[test]
    fn duplicate_cq_id_rejected() {
        let src = MINIMAL_PURPOSE.replace(
            "[[dataset]]",
            r#"[[cq]]
id = 1
question = "again"
action = "a"
category = "core"

  [[cq.element]]
  etype = "Drug"
  properties = [{ name = "Code_value" }]

[[dataset]]"#,
        );
        let err = parse_purpose_str(&src).unwrap_err();
        assert!(matches!(err, IngestError::Validation { .. }), "{err}");
        assert!(err.to_string().contains("duplicate cq id 1"));
    }

    #[test]
    fn duplicate_dataset_priority_rejected() {
        let src = format!(
            "{MINIMAL_PURPOSE}\n[[dataset]]\nid = \"d2\"\nformat = \"csv\"\npath = \"x.csv\"\npriority = 1\n"
        );
        let err = parse_purpose_str(&src).unwrap_err();
        assert!(err.to_string().contains("duplicate priority"));
    }

    #[test]
    fn zero_cqs_rejected() {
        let src = r#"
description = "no cqs"
[[dataset]]
id = "d1"
format = "csv"
path = "x.csv"
priority = 1
"#;
        let err = parse_purpose_str(src).unwrap_err();
        assert!(err.to_string().contains("at least one CQ"));
    }

    #[test]
    fn syntax_error_carries_position() {
        let err = parse_purpose_str("description = \"x\"\nbroken line").unwrap_err();
        match err {
            IngestError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("expected syntax error, got {other}"),
        }
    }

    #[test]
    fn required_for_answer_must_reference_declared_elements() {
        let src = MINIMAL_PURPOSE.replace(
            "category = \"common\"",
            "category = \"common\"\nrequired_for_answer = [\"patient.ghost\"]",
        );
        let err = parse_purpose_str(&src).unwrap_err();
        assert!(err.to_string().contains("not among the declared elements"));
    }

    #[test]
    fn purpose_round_trip() {
        let p = parse_purpose_str(MINIMAL_PURPOSE).unwrap();
        let text = serialize_purpose(&p);
        let again = parse_purpose_str(&text).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn purpose_round_trip_with_options_and_extension_aliases() {
        let src = MINIMAL_PURPOSE.replace(
            "[[dataset]]",
            r#"[options]
extend_model = true
name_weight = 0.3
property_weight = 0.7
etr_acceptance = 0.6
similarity_acceptance = 0.8

  [options.etype_aliases]
  "Patient" = "Subject"

[[dataset]]"#,
        ) + r#"
  [dataset.aliases]
  pid = "patient.patient_identifier"
  extra = { etype = "patient", property = "nickname", extension = true }

  [dataset.categories]
  pid = "common"
"#;
        let p = parse_purpose_str(&src).unwrap();
        assert!(p.options.extend_model);
        assert_eq!(p.options.scorer.name_weight, 0.3);
        assert_eq!(
            p.options.scorer.etype_aliases.get("patient").map(String::as_str),
            Some("subject")
        );
        assert!(p.datasets[0].aliases["extra"].extension);
        let again = parse_purpose_str(&serialize_purpose(&p)).unwrap();
        assert_eq!(p, again);
    }

    const ONTOLOGY: &str = r#"
name = "fhir_like"

[[etype]]
name = "MedicationStatement"
properties = [
  { name = "medication_subject", range = "Patient" },
  { name = "medication_date", datatype = "date" },
]

[[etype]]
name = "Patient"
properties = [{ name = "patient_identifier" }]
"#;

    #[test]
    fn ontology_parses_and_normalizes() {
        let ont = parse_ontology_str(ONTOLOGY).unwrap();
        assert_eq!(ont.name, "fhir_like");
        assert_eq!(ont.etypes.len(), 2);
        let ms = &ont.etypes["medicationstatement"];
        assert_eq!(
            ms.properties["medication_subject"].kind.range(),
            Some("patient")
        );
        assert!(matches!(ms.provenance, Provenance::Ontology(ref n) if n == "fhir_like"));
    }

    #[test]
    fn empty_etype_list_is_legal() {
        let ont = parse_ontology_str("name = \"empty\"\n").unwrap();
        assert!(ont.etypes.is_empty());
    }

    #[test]
    fn dangling_range_rejected() {
        let src = ONTOLOGY.replace("range = \"Patient\"", "range = \"Ghost\"");
        let err = parse_ontology_str(&src).unwrap_err();
        match err {
            IngestError::DanglingRange { range, .. } => assert_eq!(range, "ghost"),
            other => panic!("expected dangling range, got {other}"),
        }
    }

    #[test]
    fn etg_round_trips_through_ontology_format() {
        let ont = parse_ontology_str(ONTOLOGY).unwrap();
        let etg = ETG {
            etypes: ont.etypes.clone(),
            edges: edges_of(&ont.etypes),
            counterparts: [("medication".to_string(), "medicationstatement".to_string())]
                .into_iter()
                .collect(),
            mapping_preservation: [(
                ("d1".to_string(), "beginmoment_date".to_string()),
                ("medicationstatement".to_string(), "medication_date".to_string()),
            )]
            .into_iter()
            .collect(),
        };
        let text = serialize_etg(&etg);
        let again = parse_etg_str(&text).unwrap();
        assert_eq!(etg, again);
        // and the same bytes parse as a plain reference ontology
        let as_ontology = parse_ontology_str(&text).unwrap();
        assert_eq!(as_ontology.etypes.len(), 2);
    }
}

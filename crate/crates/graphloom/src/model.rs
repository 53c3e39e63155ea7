//! Shared domain types for the whole pipeline.
//!
//! Everything downstream (ingestion, matching, modeling, alignment,
//! integration, evaluation) operates on the types defined here. Values are
//! immutable once constructed; the only mutation point in the pipeline is the
//! entity-graph builder in the integration module.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::metrics::Ratio;

/// Reusability category of a schema or data resource.
///
/// Ordering is by reusability: `Common > Core > Contextual`. The enum derives
/// nothing order-related on purpose; `Ord` is implemented over an explicit
/// rank so the declaration can stay in reading order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Common,
    Core,
    Contextual,
}

impl Category {
    fn reusability_rank(self) -> u8 {
        match self {
            Category::Common => 2,
            Category::Core => 1,
            Category::Contextual => 0,
        }
    }

    /// The more reusable of two categories.
    pub fn most_reusable(self, other: Category) -> Category {
        if self >= other {
            self
        } else {
            other
        }
    }

    /// All categories in decreasing reusability order.
    pub fn in_reusability_order() -> [Category; 3] {
        [Category::Common, Category::Core, Category::Contextual]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Common => "common",
            Category::Core => "core",
            Category::Contextual => "contextual",
        }
    }
}

impl Ord for Category {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.reusability_rank().cmp(&other.reusability_rank())
    }
}

impl PartialOrd for Category {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "common" => Ok(Category::Common),
            "core" => Ok(Category::Core),
            "contextual" => Ok(Category::Contextual),
            other => Err(format!(
                "unknown category {other:?} (expected common, core or contextual)"
            )),
        }
    }
}

/// Datatype of a data property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    String,
    Integer,
    Decimal,
    Date,
    DateTime,
    Boolean,
}

impl DataType {
    pub fn as_str(self) -> &'static str {
        match self {
            DataType::String => "string",
            DataType::Integer => "integer",
            DataType::Decimal => "decimal",
            DataType::Date => "date",
            DataType::DateTime => "datetime",
            DataType::Boolean => "boolean",
        }
    }
}

impl std::str::FromStr for DataType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "string" => Ok(DataType::String),
            "integer" => Ok(DataType::Integer),
            "decimal" => Ok(DataType::Decimal),
            "date" => Ok(DataType::Date),
            "datetime" => Ok(DataType::DateTime),
            "boolean" => Ok(DataType::Boolean),
            other => Err(format!("unknown datatype {other:?}")),
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a schema element came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Declared by a competency query.
    Cq,
    /// Suggested by a dataset schema.
    Dataset,
    /// Adopted from a reference ontology with the given name.
    Ontology(String),
    /// Carried over from the purpose-specific model during alignment.
    Model,
}

impl Provenance {
    /// True for elements adopted from a reference ontology.
    pub fn is_ontology(&self) -> bool {
        matches!(self, Provenance::Ontology(_))
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Cq => f.write_str("cq"),
            Provenance::Dataset => f.write_str("dataset"),
            Provenance::Ontology(name) => write!(f, "ontology:{name}"),
            Provenance::Model => f.write_str("model"),
        }
    }
}

/// Kind of a property: data (literal-valued) or object (entity-valued).
///
/// The enum makes the core invariant unrepresentable otherwise: a data
/// property always has a datatype and never a range, an object property
/// always has a range etype and never a datatype.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyKind {
    Data { datatype: DataType },
    Object { range: String },
}

impl PropertyKind {
    pub fn datatype(&self) -> Option<DataType> {
        match self {
            PropertyKind::Data { datatype } => Some(*datatype),
            PropertyKind::Object { .. } => None,
        }
    }

    pub fn range(&self) -> Option<&str> {
        match self {
            PropertyKind::Data { .. } => None,
            PropertyKind::Object { range } => Some(range),
        }
    }

    pub fn is_object(&self) -> bool {
        matches!(self, PropertyKind::Object { .. })
    }
}

/// A data or object property declared on an etype.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyDef {
    /// Normalized label (lowercase, underscore-separated).
    pub name: String,
    pub kind: PropertyKind,
    pub category: Category,
    pub provenance: Provenance,
}

/// An entity type: a class of entities described by its properties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EType {
    /// Normalized label, unique within its owning graph.
    pub name: String,
    /// Properties keyed by normalized name; uniqueness by construction.
    pub properties: BTreeMap<String, PropertyDef>,
    pub category: Category,
    pub provenance: Provenance,
}

impl EType {
    pub fn new(name: impl Into<String>, category: Category, provenance: Provenance) -> Self {
        EType {
            name: name.into(),
            properties: BTreeMap::new(),
            category,
            provenance,
        }
    }

    pub fn property(&self, name: &str) -> Option<&PropertyDef> {
        self.properties.get(name)
    }

    /// Normalized names of all properties.
    pub fn property_names(&self) -> BTreeSet<String> {
        self.properties.keys().cloned().collect()
    }
}

/// Key of one element in an element set: an etype or a property.
///
/// Property keys carry the owning etype when they come from a graph; dataset
/// schemas yield owner-less property keys (their attributes belong to no
/// etype until they are mapped).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ElementKey {
    Etype(String),
    Property {
        etype: Option<String>,
        name: String,
    },
}

impl ElementKey {
    pub fn etype(name: impl Into<String>) -> Self {
        ElementKey::Etype(name.into())
    }

    pub fn property(etype: impl Into<String>, name: impl Into<String>) -> Self {
        ElementKey::Property {
            etype: Some(etype.into()),
            name: name.into(),
        }
    }

    pub fn bare_property(name: impl Into<String>) -> Self {
        ElementKey::Property {
            etype: None,
            name: name.into(),
        }
    }

    pub fn is_etype(&self) -> bool {
        matches!(self, ElementKey::Etype(_))
    }
}

impl fmt::Display for ElementKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementKey::Etype(name) => f.write_str(name),
            ElementKey::Property {
                etype: Some(owner),
                name,
            } => write!(f, "{owner}.{name}"),
            ElementKey::Property { etype: None, name } => f.write_str(name),
        }
    }
}

/// Requested granularity when deriving an element set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    Etypes,
    Properties,
    Both,
}

/// A finite set of element keys with the usual set operations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementSet {
    keys: BTreeSet<ElementKey>,
}

impl ElementSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: ElementKey) -> bool {
        self.keys.insert(key)
    }

    pub fn contains(&self, key: &ElementKey) -> bool {
        self.keys.contains(key)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ElementKey> {
        self.keys.iter()
    }

    pub fn intersection(&self, other: &ElementSet) -> ElementSet {
        ElementSet {
            keys: self.keys.intersection(&other.keys).cloned().collect(),
        }
    }

    pub fn union(&self, other: &ElementSet) -> ElementSet {
        ElementSet {
            keys: self.keys.union(&other.keys).cloned().collect(),
        }
    }

    pub fn difference(&self, other: &ElementSet) -> ElementSet {
        ElementSet {
            keys: self.keys.difference(&other.keys).cloned().collect(),
        }
    }

    /// Keep only keys of the requested granularity. Idempotent.
    pub fn restrict(&self, granularity: Granularity) -> ElementSet {
        match granularity {
            Granularity::Both => self.clone(),
            Granularity::Etypes => ElementSet {
                keys: self.keys.iter().filter(|k| k.is_etype()).cloned().collect(),
            },
            Granularity::Properties => ElementSet {
                keys: self
                    .keys
                    .iter()
                    .filter(|k| !k.is_etype())
                    .cloned()
                    .collect(),
            },
        }
    }
}

impl FromIterator<ElementKey> for ElementSet {
    fn from_iter<I: IntoIterator<Item = ElementKey>>(iter: I) -> Self {
        ElementSet {
            keys: iter.into_iter().collect(),
        }
    }
}

/// Anything that can be projected to an element set.
pub trait HasElements {
    fn element_set(&self, granularity: Granularity) -> ElementSet;
}

fn etype_elements(etypes: &BTreeMap<String, EType>, granularity: Granularity) -> ElementSet {
    let mut set = ElementSet::new();
    for etype in etypes.values() {
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

/// One object-property edge of a schema graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub source: String,
    pub property: String,
    pub target: String,
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} --{}--> {}", self.source, self.property, self.target)
    }
}

/// The purpose-specific schema graph built from CQs (and optionally datasets)
/// before ontology alignment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ETGModel {
    pub etypes: BTreeMap<String, EType>,
    pub edges: BTreeSet<Edge>,
}

impl ETGModel {
    /// Checks the structural invariant: every edge endpoint exists.
    pub fn validate(&self) -> Result<(), String> {
        for edge in &self.edges {
            if !self.etypes.contains_key(&edge.source) {
                return Err(format!("edge {edge} has unknown source etype"));
            }
            if !self.etypes.contains_key(&edge.target) {
                return Err(format!("edge {edge} has unknown target etype"));
            }
        }
        Ok(())
    }
}

impl HasElements for ETGModel {
    fn element_set(&self, granularity: Granularity) -> ElementSet {
        etype_elements(&self.etypes, granularity)
    }
}

/// Key of a dataset attribute mapping: (dataset id, normalized attribute).
pub type AttributeRef = (String, String);

/// Target of an attribute mapping: (etype, property).
pub type ElementRef = (String, String);

/// The shareable schema graph produced by knowledge alignment.
///
/// Same shape as [`ETGModel`] plus per-element provenance/category (carried on
/// the etypes and properties themselves), the model→ETG etype counterpart
/// table, and the preserved dataset attribute mapping.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ETG {
    pub etypes: BTreeMap<String, EType>,
    pub edges: BTreeSet<Edge>,
    /// Model etype name → ETG etype name. Exactly one entry per model etype.
    pub counterparts: BTreeMap<String, String>,
    /// (dataset id, attribute) → (etype, property) into this graph.
    pub mapping_preservation: BTreeMap<AttributeRef, ElementRef>,
}

impl ETG {
    pub fn etype_for_model(&self, model_etype: &str) -> Option<&str> {
        self.counterparts.get(model_etype).map(|s| s.as_str())
    }

    /// Mapping target for a dataset attribute, if preserved.
    pub fn mapping_for(&self, dataset: &str, attribute: &str) -> Option<&ElementRef> {
        self.mapping_preservation
            .get(&(dataset.to_string(), attribute.to_string()))
    }

    pub fn validate(&self) -> Result<(), String> {
        for edge in &self.edges {
            if !self.etypes.contains_key(&edge.source) || !self.etypes.contains_key(&edge.target) {
                return Err(format!("edge {edge} has a dangling endpoint"));
            }
        }
        for ((dataset, attribute), (etype, property)) in &self.mapping_preservation {
            let found = self
                .etypes
                .get(etype)
                .map(|e| e.properties.contains_key(property))
                .unwrap_or(false);
            if !found {
                return Err(format!(
                    "mapping {dataset}.{attribute} points at missing element {etype}.{property}"
                ));
            }
        }
        Ok(())
    }
}

impl HasElements for ETG {
    fn element_set(&self, granularity: Granularity) -> ElementSet {
        etype_elements(&self.etypes, granularity)
    }
}

/// Supported dataset serialization formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Json,
    Xml,
}

impl std::str::FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DataFormat::Csv),
            "json" => Ok(DataFormat::Json),
            "xml" => Ok(DataFormat::Xml),
            other => Err(format!("unknown dataset format {other:?}")),
        }
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataFormat::Csv => f.write_str("csv"),
            DataFormat::Json => f.write_str("json"),
            DataFormat::Xml => f.write_str("xml"),
        }
    }
}

/// Declared target of a dataset attribute alias.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasTarget {
    pub etype: String,
    pub property: String,
    /// Extension targets add a new property to the model instead of matching
    /// an existing CQ element.
    #[serde(default)]
    pub extension: bool,
}

/// One dataset named by the purpose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub id: String,
    pub format: DataFormat,
    pub path: String,
    /// Selector for record elements in XML/JSON files.
    pub record_path: Option<String>,
    /// Lower number = higher priority at integration time.
    pub priority: u32,
    /// Normalized attribute names with inferred datatypes; filled at ingestion.
    #[serde(default)]
    pub schema: BTreeMap<String, DataType>,
    /// Optional per-attribute reusability category.
    #[serde(default)]
    pub category_annotations: BTreeMap<String, Category>,
    /// Normalized attribute → declared element target.
    #[serde(default)]
    pub aliases: BTreeMap<String, AliasTarget>,
    /// Per-dataset override of the similarity acceptance threshold.
    pub similarity_acceptance: Option<f64>,
}

impl HasElements for DatasetDescriptor {
    /// Dataset attributes become owner-less property keys; a schema carries
    /// no etypes of its own.
    fn element_set(&self, granularity: Granularity) -> ElementSet {
        match granularity {
            Granularity::Etypes => ElementSet::new(),
            _ => self
                .schema
                .keys()
                .map(|attr| ElementKey::bare_property(attr.clone()))
                .collect(),
        }
    }
}

/// Declared property inside a CQ element annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CqProperty {
    pub name: String,
    pub kind: PropertyKind,
}

/// One (etype, properties) annotation of a CQ.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CqElement {
    pub etype: String,
    pub properties: Vec<CqProperty>,
}

/// A formalized functional requirement the final entity graph must answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompetencyQuery {
    pub id: u32,
    pub question: String,
    pub action: String,
    pub category: Category,
    pub elements: Vec<CqElement>,
    /// (etype, property) pairs that must be instantiated for the CQ to count
    /// as answerable.
    pub required_for_answer: Vec<ElementRef>,
}

impl CompetencyQuery {
    /// Etype names annotated by this CQ.
    pub fn etype_names(&self) -> BTreeSet<&str> {
        self.elements.iter().map(|e| e.etype.as_str()).collect()
    }
}

/// Identity rule: which properties identify an entity of an etype.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityRule {
    pub etype: String,
    /// Ordered key properties; must be declared on the etype and non-empty.
    pub key_properties: Vec<String>,
}

/// Thresholds driving the four evaluation gates.
///
/// All ratio thresholds live in `[0, 1]`. Fields absent from a purpose file
/// take these defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateThresholds {
    /// Minimum CQ-property coverage per category at the inception gate.
    pub coverage_common: f64,
    pub coverage_core: f64,
    pub coverage_contextual: f64,
    /// Minimum etype overlap for keeping a reference ontology.
    pub ontology_overlap_min: f64,
    /// Minimum mean property shareability for keeping a reference ontology.
    pub ontology_shareability_min: f64,
    /// Maximum extensiveness of the model over the CQ elements.
    pub extensiveness_max: f64,
    /// Minimum dataset-schema coverage against the model at dataset selection.
    pub modeling_coverage_min: f64,
    /// Minimum sparsity between the ETG and each reference ontology.
    pub sparsity_min: f64,
    /// Minimum adopted fraction of common / core elements.
    pub adoption_common_min: f64,
    pub adoption_core_min: f64,
    /// Minimum fraction of answerable CQs.
    pub answerability_min: f64,
    /// Total re-entries allowed before the pipeline aborts.
    pub max_backtrack_iterations: u32,
}

impl Default for GateThresholds {
    fn default() -> Self {
        GateThresholds {
            coverage_common: 0.5,
            coverage_core: 0.5,
            coverage_contextual: 0.3,
            ontology_overlap_min: 0.3,
            ontology_shareability_min: 0.3,
            extensiveness_max: 0.5,
            modeling_coverage_min: 0.5,
            sparsity_min: 0.05,
            adoption_common_min: 0.9,
            adoption_core_min: 0.5,
            answerability_min: 1.0,
            max_backtrack_iterations: 3,
        }
    }
}

impl GateThresholds {
    pub fn coverage_for(&self, category: Category) -> f64 {
        match category {
            Category::Common => self.coverage_common,
            Category::Core => self.coverage_core,
            Category::Contextual => self.coverage_contextual,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ratios = [
            ("coverage_common", self.coverage_common),
            ("coverage_core", self.coverage_core),
            ("coverage_contextual", self.coverage_contextual),
            ("ontology_overlap_min", self.ontology_overlap_min),
            ("ontology_shareability_min", self.ontology_shareability_min),
            ("extensiveness_max", self.extensiveness_max),
            ("modeling_coverage_min", self.modeling_coverage_min),
            ("sparsity_min", self.sparsity_min),
            ("adoption_common_min", self.adoption_common_min),
            ("adoption_core_min", self.adoption_core_min),
            ("answerability_min", self.answerability_min),
        ];
        for (name, value) in ratios {
            if !(0.0..=1.0).contains(&value) {
                return Err(format!("threshold {name} = {value} outside [0, 1]"));
            }
        }
        if self.max_backtrack_iterations == 0 {
            return Err("max_backtrack_iterations must be positive".into());
        }
        Ok(())
    }
}

/// Tuning knobs for the similarity scorer, configurable from the purpose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    /// Weight of the name-similarity term of the etype score.
    pub name_weight: f64,
    /// Weight of the property-Jaccard term of the etype score.
    pub property_weight: f64,
    /// Minimum etype score for an ETR prediction to be accepted.
    pub etr_acceptance: f64,
    /// Minimum normalized Levenshtein similarity for attribute↔property
    /// matches (overridable per dataset).
    pub similarity_acceptance: f64,
    /// Model etype name → ontology etype name pairs treated as exact matches.
    #[serde(default)]
    pub etype_aliases: BTreeMap<String, String>,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            name_weight: 0.4,
            property_weight: 0.6,
            etr_acceptance: 0.5,
            similarity_acceptance: 0.75,
            etype_aliases: BTreeMap::new(),
        }
    }
}

/// Pipeline-level options declared in the purpose document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PurposeOptions {
    /// Extend the model with dataset-suggested properties (extension aliases).
    pub extend_model: bool,
    pub scorer: ScorerConfig,
}

/// The root input of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Purpose {
    pub description: String,
    pub cqs: Vec<CompetencyQuery>,
    pub datasets: Vec<DatasetDescriptor>,
    /// Paths of reference ontology documents, relative to the purpose file.
    pub ontology_refs: Vec<String>,
    pub thresholds: GateThresholds,
    pub identity_rules: Vec<IdentityRule>,
    pub options: PurposeOptions,
}

impl Purpose {
    pub fn dataset(&self, id: &str) -> Option<&DatasetDescriptor> {
        self.datasets.iter().find(|d| d.id == id)
    }

    pub fn identity_rule(&self, etype: &str) -> Option<&IdentityRule> {
        self.identity_rules.iter().find(|r| r.etype == etype)
    }
}

/// One entity of the final graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    /// Stable identifier: `{etype}:{joined identity-key values}`.
    pub id: String,
    pub etype: String,
    /// Non-null literal values keyed by property name (canonical form).
    pub data_values: BTreeMap<String, String>,
    /// Object links keyed by property name.
    pub object_links: BTreeMap<String, BTreeSet<String>>,
}

impl Entity {
    pub fn link_count(&self) -> usize {
        self.object_links.values().map(|s| s.len()).sum()
    }

    pub fn has_links(&self) -> bool {
        self.object_links.values().any(|s| !s.is_empty())
    }
}

/// Value-level conflict recorded during integration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub entity_id: String,
    pub property: String,
    pub kept_value: String,
    pub discarded_value: String,
    pub losing_dataset: String,
}

/// Per-dataset statistics collected while merging into the entity graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub dataset_id: String,
    pub entities_created: usize,
    pub entities_merged: usize,
    pub conflicts: Vec<Conflict>,
    /// Declared-but-unfilled properties across the graph after this merge.
    pub null_property_count: usize,
    /// Per-etype fraction of entities with at least one object link.
    pub connectivity: BTreeMap<String, Ratio>,
}

/// The final data-level knowledge graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityGraph {
    pub etg: ETG,
    pub entities: BTreeMap<String, Entity>,
    pub integration_log: Vec<IntegrationStats>,
}

impl EntityGraph {
    pub fn entities_of<'a>(&'a self, etype: &'a str) -> impl Iterator<Item = &'a Entity> + 'a {
        self.entities.values().filter(move |e| e.etype == etype)
    }

    /// Structural invariant: links resolve, etypes exist, properties declared.
    pub fn validate(&self) -> Result<(), String> {
        for entity in self.entities.values() {
            let etype = self
                .etg
                .etypes
                .get(&entity.etype)
                .ok_or_else(|| format!("entity {} has unknown etype {}", entity.id, entity.etype))?;
            for prop in entity.data_values.keys() {
                match etype.property(prop) {
                    Some(def) if !def.kind.is_object() => {}
                    _ => {
                        return Err(format!(
                            "entity {} carries undeclared data property {prop}",
                            entity.id
                        ))
                    }
                }
            }
            for (prop, targets) in &entity.object_links {
                match etype.property(prop) {
                    Some(def) if def.kind.is_object() => {}
                    _ => {
                        return Err(format!(
                            "entity {} carries undeclared object property {prop}",
                            entity.id
                        ))
                    }
                }
                for target in targets {
                    if !self.entities.contains_key(target) {
                        return Err(format!(
                            "entity {} links to missing entity {target}",
                            entity.id
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Pipeline phases in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Inception,
    Modeling,
    Alignment,
    Integration,
}

impl Phase {
    pub const ALL: [Phase; 4] = [
        Phase::Inception,
        Phase::Modeling,
        Phase::Alignment,
        Phase::Integration,
    ];

    /// Phase re-entered when this phase's gate fails.
    pub fn backtrack_target(self) -> Phase {
        match self {
            Phase::Inception => Phase::Inception,
            Phase::Modeling => Phase::Inception,
            Phase::Alignment => Phase::Modeling,
            Phase::Integration => Phase::Alignment,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Inception => "inception",
            Phase::Modeling => "modeling",
            Phase::Alignment => "alignment",
            Phase::Integration => "integration",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Gate verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Outcome of one evaluation gate.
///
/// The verdict is a pure function of `metrics` and the thresholds; replaying
/// a recorded decision reproduces it (see `evaluation::verdict_for`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub phase: Phase,
    /// Named metric values as exact ratios.
    pub metrics: BTreeMap<String, Ratio>,
    pub verdict: Verdict,
    /// Set when the verdict is `Fail`.
    pub backtrack_to: Option<Phase>,
    pub reasons: Vec<String>,
}

impl GateDecision {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Normalizes a label: trim, lowercase, spaces/hyphens/slashes → underscore.
///
/// Makes CQ properties and dataset attributes comparable, e.g.
/// `"beginmoment/date"` → `"beginmoment_date"`, `"ID-PATIENT"` → `"id_patient"`.
pub fn normalize_label(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.trim().chars() {
        if c.is_whitespace() || c == '-' || c == '/' || c == '\\' {
            out.push('_');
        } else {
            for lower in c.to_lowercase() {
                out.push(lower);
            }
        }
    }
    out
}

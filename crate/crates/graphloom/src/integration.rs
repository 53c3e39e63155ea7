//! Phase 4: map cleaned records to entities, merge duplicates, assemble the
//! entity graph and export it as N-Triples.
//!
//! Entity identity is key-based: a configured per-etype rule, falling back to
//! equality of all non-null data properties. Conflicting values resolve by
//! dataset priority (lower number wins), first-non-null within equal
//! priority; every conflict is logged. Object links come from attributes
//! aliased to object properties (the value names the target's identity key)
//! and from co-record linking along ETG edges.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::alignment::CleanedRecordSet;
use crate::model::{
    Entity, EntityGraph, EType, IdentityRule, IntegrationStats, PropertyKind, ETG,
    Conflict,
};
use crate::metrics::Ratio;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IntegrationError {
    /// A record produced an entity whose identity-key values are all null.
    #[error("dataset {dataset:?} record {record_index}: {etype} entity has no identity \
             ({keys:?} all null)")]
    MissingIdentity {
        dataset: String,
        record_index: usize,
        etype: String,
        keys: Vec<String>,
    },
    /// A candidate's etype is absent from the governing ETG.
    #[error("candidate etype {etype:?} is not in the ETG")]
    EtypeUnknown { etype: String },
    #[error("invalid base IRI {iri:?}: {reason}")]
    InvalidBaseIri { iri: String, reason: String },
}

/// 64-bit FNV-1a over the joined identity-key values; used for entity IRIs so
/// raw identifiers never appear in the export.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

const KEY_SEPARATOR: &str = "|";

fn identity_keys<'a>(etype: &'a EType, rules: &'a [IdentityRule]) -> Vec<&'a str> {
    match rules.iter().find(|r| r.etype == etype.name) {
        Some(rule) => rule.key_properties.iter().map(String::as_str).collect(),
        // fallback: every data property, in declaration (name) order
        None => etype
            .properties
            .values()
            .filter(|p| !p.kind.is_object())
            .map(|p| p.name.as_str())
            .collect(),
    }
}

/// Entities any record of a cleaned dataset gives rise to: one candidate per
/// (record, etype) pair with at least one non-null mapped value.
pub fn map_records(
    cleaned: &CleanedRecordSet,
    etg: &ETG,
    rules: &[IdentityRule],
) -> Result<Vec<Entity>, IntegrationError> {
    let dataset_id = &cleaned.descriptor.id;
    let mut candidates = Vec::new();

    for (record_index, record) in cleaned.records.iter().enumerate() {
        // group the record's non-null values by target etype
        let mut data_by_etype: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut refs_by_etype: BTreeMap<String, BTreeMap<String, (String, String)>> =
            BTreeMap::new();
        for (attribute, value) in record {
            let Some(value) = value else { continue };
            let Some((etype_name, property)) = etg.mapping_for(dataset_id, attribute) else {
                continue;
            };
            let Some(etype) = etg.etypes.get(etype_name) else {
                return Err(IntegrationError::EtypeUnknown {
                    etype: etype_name.clone(),
                });
            };
            match etype.property(property).map(|p| &p.kind) {
                Some(PropertyKind::Object { range }) => {
                    // explicit foreign reference: value is the target's
                    // identity key
                    refs_by_etype.entry(etype_name.clone()).or_default().insert(
                        property.clone(),
                        (range.clone(), value.clone()),
                    );
                }
                _ => {
                    data_by_etype
                        .entry(etype_name.clone())
                        .or_default()
                        .insert(property.clone(), value.clone());
                }
            }
        }

        let touched: BTreeSet<String> = data_by_etype
            .keys()
            .chain(refs_by_etype.keys())
            .cloned()
            .collect();
        if touched.is_empty() {
            continue; // nothing non-null to map
        }

        // Identities first; an object property used as an identity key takes
        // the co-record target's id, so ids resolve in dependency order
        // (bounded passes, a cycle cannot resolve and errors out).
        let mut ids: BTreeMap<String, String> = BTreeMap::new();
        for _pass in 0..touched.len() {
            let mut progress = false;
            'etypes: for etype_name in &touched {
                if ids.contains_key(etype_name) {
                    continue;
                }
                let etype = &etg.etypes[etype_name];
                let keys = identity_keys(etype, rules);
                let empty = BTreeMap::new();
                let data = data_by_etype.get(etype_name).unwrap_or(&empty);
                let refs = refs_by_etype.get(etype_name);
                let mut parts = Vec::with_capacity(keys.len());
                let mut any = false;
                for key in &keys {
                    let part = if let Some(v) = data.get(*key) {
                        any = true;
                        v.clone()
                    } else if let Some((range, value)) = refs.and_then(|r| r.get(*key)) {
                        any = true;
                        format!("{range}:{value}")
                    } else if let Some(range) =
                        etype.property(key).and_then(|p| p.kind.range())
                    {
                        if touched.contains(range) {
                            match ids.get(range) {
                                Some(target_id) => {
                                    any = true;
                                    target_id.clone()
                                }
                                None => continue 'etypes, // peer not resolved yet
                            }
                        } else {
                            String::new()
                        }
                    } else {
                        String::new()
                    };
                    parts.push(part);
                }
                if !any || keys.is_empty() {
                    return Err(IntegrationError::MissingIdentity {
                        dataset: dataset_id.clone(),
                        record_index,
                        etype: etype_name.clone(),
                        keys: keys.iter().map(|k| k.to_string()).collect(),
                    });
                }
                ids.insert(
                    etype_name.clone(),
                    format!("{etype_name}:{}", parts.join(KEY_SEPARATOR)),
                );
                progress = true;
            }
            if ids.len() == touched.len() || !progress {
                break;
            }
        }
        if ids.len() != touched.len() {
            let unresolved = touched.iter().find(|t| !ids.contains_key(*t)).unwrap();
            let keys = identity_keys(&etg.etypes[unresolved], rules);
            return Err(IntegrationError::MissingIdentity {
                dataset: dataset_id.clone(),
                record_index,
                etype: unresolved.clone(),
                keys: keys.iter().map(|k| k.to_string()).collect(),
            });
        }

        for etype_name in &touched {
            let mut entity = Entity {
                id: ids[etype_name].clone(),
                etype: etype_name.clone(),
                data_values: data_by_etype.remove(etype_name).unwrap_or_default(),
                object_links: BTreeMap::new(),
            };
            // explicit references
            if let Some(refs) = refs_by_etype.get(etype_name) {
                for (property, (range, value)) in refs {
                    entity
                        .object_links
                        .entry(property.clone())
                        .or_default()
                        .insert(format!("{range}:{value}"));
                }
            }
            // co-record links along ETG edges
            for edge in etg.edges.iter().filter(|e| &e.source == etype_name) {
                if entity.object_links.contains_key(&edge.property) {
                    continue; // explicit reference wins
                }
                if let Some(target_id) = ids.get(&edge.target) {
                    entity
                        .object_links
                        .entry(edge.property.clone())
                        .or_default()
                        .insert(target_id.clone());
                }
            }
            candidates.push(entity);
        }
    }
    Ok(candidates)
}

/// Mutable entity-graph builder; requires exclusive access while merging.
#[derive(Debug)]
pub struct EgBuilder {
    etg: ETG,
    entities: BTreeMap<String, Entity>,
    /// (entity id, property) → (priority, dataset) of the current value.
    value_sources: BTreeMap<(String, String), (u32, String)>,
    log: Vec<IntegrationStats>,
}

impl EgBuilder {
    pub fn new(etg: ETG) -> EgBuilder {
        EgBuilder {
            etg,
            entities: BTreeMap::new(),
            value_sources: BTreeMap::new(),
            log: Vec::new(),
        }
    }

    /// Merges candidate entities from one dataset, logging statistics.
    ///
    /// Same identity → merge: disjoint properties union without conflicts;
    /// differing non-null values log a conflict and the higher-priority
    /// dataset's value wins (first non-null wins within equal priority).
    /// Links whose target entity does not exist yet stay latent: they count
    /// as unfilled until some dataset supplies the target, and are pruned at
    /// [`EgBuilder::finish`] if it never arrives.
    pub fn merge_candidates(
        &mut self,
        candidates: Vec<Entity>,
        priority: u32,
        dataset_id: &str,
    ) -> Result<IntegrationStats, IntegrationError> {
        let mut created = 0usize;
        let mut merged = 0usize;
        let mut conflicts: Vec<Conflict> = Vec::new();

        for candidate in candidates {
            if !self.etg.etypes.contains_key(&candidate.etype) {
                return Err(IntegrationError::EtypeUnknown {
                    etype: candidate.etype,
                });
            }
            match self.entities.get_mut(&candidate.id) {
                None => {
                    for property in candidate.data_values.keys() {
                        self.value_sources.insert(
                            (candidate.id.clone(), property.clone()),
                            (priority, dataset_id.to_string()),
                        );
                    }
                    self.entities.insert(candidate.id.clone(), candidate);
                    created += 1;
                }
                Some(existing) => {
                    merged += 1;
                    for (property, value) in candidate.data_values {
                        match existing.data_values.get(&property) {
                            None => {
                                existing.data_values.insert(property.clone(), value);
                                self.value_sources.insert(
                                    (existing.id.clone(), property),
                                    (priority, dataset_id.to_string()),
                                );
                            }
                            Some(current) if *current == value => {}
                            Some(current) => {
                                let source = self
                                    .value_sources
                                    .get(&(existing.id.clone(), property.clone()))
                                    .cloned()
                                    .unwrap_or((u32::MAX, String::new()));
                                if priority < source.0 {
                                    // incoming dataset outranks the current value
                                    conflicts.push(Conflict {
                                        entity_id: existing.id.clone(),
                                        property: property.clone(),
                                        kept_value: value.clone(),
                                        discarded_value: current.clone(),
                                        losing_dataset: source.1.clone(),
                                    });
                                    existing.data_values.insert(property.clone(), value);
                                    self.value_sources.insert(
                                        (existing.id.clone(), property),
                                        (priority, dataset_id.to_string()),
                                    );
                                } else {
                                    conflicts.push(Conflict {
                                        entity_id: existing.id.clone(),
                                        property: property.clone(),
                                        kept_value: current.clone(),
                                        discarded_value: value.clone(),
                                        losing_dataset: dataset_id.to_string(),
                                    });
                                }
                            }
                        }
                    }
                    for (property, targets) in candidate.object_links {
                        existing
                            .object_links
                            .entry(property)
                            .or_default()
                            .extend(targets);
                    }
                }
            }
        }

        let stats = IntegrationStats {
            dataset_id: dataset_id.to_string(),
            entities_created: created,
            entities_merged: merged,
            conflicts,
            null_property_count: self.null_property_count(),
            connectivity: self.connectivity(),
        };
        self.log.push(stats.clone());
        Ok(stats)
    }

    fn link_resolves(&self, entity: &Entity, property: &str) -> bool {
        entity
            .object_links
            .get(property)
            .is_some_and(|targets| targets.iter().any(|t| self.entities.contains_key(t)))
    }

    /// Declared-but-unfilled properties across the graph (data properties
    /// with no value plus object properties with no resolved link).
    fn null_property_count(&self) -> usize {
        self.entities
            .values()
            .map(|entity| {
                let etype = &self.etg.etypes[&entity.etype];
                etype
                    .properties
                    .values()
                    .filter(|p| {
                        if p.kind.is_object() {
                            !self.link_resolves(entity, &p.name)
                        } else {
                            !entity.data_values.contains_key(&p.name)
                        }
                    })
                    .count()
            })
            .sum()
    }

    /// Per-etype fraction of entities with at least one resolved object link.
    fn connectivity(&self) -> BTreeMap<String, Ratio> {
        let mut totals: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for entity in self.entities.values() {
            let linked = entity
                .object_links
                .keys()
                .any(|property| self.link_resolves(entity, property));
            let slot = totals.entry(entity.etype.clone()).or_insert((0, 0));
            slot.0 += 1;
            if linked {
                slot.1 += 1;
            }
        }
        totals
            .into_iter()
            .map(|(etype, (total, linked))| (etype, Ratio::from_counts(linked, total)))
            .collect()
    }

    /// Prunes links that never found their target, then hands out the graph.
    pub fn finish(mut self) -> EntityGraph {
        let known: BTreeSet<String> = self.entities.keys().cloned().collect();
        for entity in self.entities.values_mut() {
            for targets in entity.object_links.values_mut() {
                targets.retain(|t| known.contains(t));
            }
            entity.object_links.retain(|_, t| !t.is_empty());
        }
        EntityGraph {
            etg: self.etg,
            entities: self.entities,
            integration_log: self.log,
        }
    }
}

/// Folds the cleaned datasets into an entity graph in ascending priority
/// order. Deterministic: equal inputs build equal graphs.
pub fn build_eg(
    etg: &ETG,
    cleaned: &[&CleanedRecordSet],
    rules: &[IdentityRule],
) -> Result<EntityGraph, IntegrationError> {
    let mut ordered: Vec<&&CleanedRecordSet> = cleaned.iter().collect();
    ordered.sort_by_key(|c| c.descriptor.priority);
    let mut builder = EgBuilder::new(etg.clone());
    for record_set in ordered {
        let candidates = map_records(record_set, etg, rules)?;
        builder.merge_candidates(
            candidates,
            record_set.descriptor.priority,
            &record_set.descriptor.id,
        )?;
    }
    let eg = builder.finish();
    debug_assert!(eg.validate().is_ok(), "{:?}", eg.validate());
    Ok(eg)
}

const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
const XSD: &str = "http://www.w3.org/2001/XMLSchema#";

fn validate_base_iri(base: &str) -> Result<&str, IntegrationError> {
    let err = |reason: &str| IntegrationError::InvalidBaseIri {
        iri: base.to_string(),
        reason: reason.to_string(),
    };
    let trimmed = base.trim_end_matches('/');
    let Some((scheme, rest)) = trimmed.split_once("://") else {
        return Err(err("missing scheme"));
    };
    if scheme.is_empty()
        || !scheme.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
        || !scheme
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
    {
        return Err(err("malformed scheme"));
    }
    if rest.is_empty() {
        return Err(err("empty authority"));
    }
    if trimmed
        .chars()
        .any(|c| c.is_whitespace() || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\'))
    {
        return Err(err("forbidden character"));
    }
    Ok(trimmed)
}

fn escape_literal(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04X}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

fn entity_iri(base: &str, entity: &Entity) -> String {
    // hash the joined key values, not the raw id, so identifiers stay out of
    // the export
    let key_part = entity.id.split_once(':').map_or("", |(_, k)| k);
    format!(
        "{base}/entity/{}/{:016x}",
        entity.etype,
        fnv1a64(key_part.as_bytes())
    )
}

/// Serializes the entity graph as N-Triples: one type triple per entity, one
/// typed-literal triple per non-null data value, one triple per object link.
/// Lines are sorted, output is byte-identical across runs for equal inputs.
pub fn export_rdf(eg: &EntityGraph, base_iri: &str) -> Result<String, IntegrationError> {
    let base = validate_base_iri(base_iri)?;
    let mut lines = Vec::new();
    for entity in eg.entities.values() {
        let subject = entity_iri(base, entity);
        let etype = &eg.etg.etypes[&entity.etype];
        lines.push(format!(
            "<{subject}> <{RDF_TYPE}> <{base}/etype/{}> .",
            entity.etype
        ));
        for (property, value) in &entity.data_values {
            let predicate = format!("{base}/prop/{}/{property}", entity.etype);
            let literal = escape_literal(value);
            let datatype = etype
                .property(property)
                .and_then(|p| p.kind.datatype())
                .unwrap_or(crate::model::DataType::String);
            let object = match datatype {
                crate::model::DataType::String => format!("\"{literal}\""),
                crate::model::DataType::Integer => format!("\"{literal}\"^^<{XSD}integer>"),
                crate::model::DataType::Decimal => format!("\"{literal}\"^^<{XSD}decimal>"),
                crate::model::DataType::Date => format!("\"{literal}\"^^<{XSD}date>"),
                crate::model::DataType::DateTime => format!("\"{literal}\"^^<{XSD}dateTime>"),
                crate::model::DataType::Boolean => format!("\"{literal}\"^^<{XSD}boolean>"),
            };
            lines.push(format!("<{subject}> <{predicate}> {object} ."));
        }
        for (property, targets) in &entity.object_links {
            let predicate = format!("{base}/prop/{}/{property}", entity.etype);
            for target in targets {
                if let Some(target_entity) = eg.entities.get(target) {
                    let object = entity_iri(base, target_entity);
                    lines.push(format!("<{subject}> <{predicate}> <{object}> ."));
                }
            }
        }
    }
    lines.sort();
    let mut out = lines.join("\n");
    out.push('\n');
    Ok(out)
}

/// Expected triple count: one type triple plus the filled values and links of
/// every entity.
pub fn expected_triple_count(eg: &EntityGraph) -> usize {
    eg.entities
        .values()
        .map(|e| 1 + e.data_values.len() + e.link_count())
        .sum()
}

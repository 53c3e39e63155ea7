//! String and set similarity primitives used by schema matching and ETR.

use std::collections::BTreeSet;

use crate::model::{EType, ScorerConfig};

/// Levenshtein edit distance over chars, two-row DP.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (prev[j + 1] + 1).min(cur[j] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - distance / max(len)`; two empty strings count as identical.
pub fn normalized_levenshtein(a: &str, b: &str) -> f64 {
    let max_len = a.chars().count().max(b.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / max_len as f64
}

/// Jaccard index of two sets; two empty sets count as identical.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return 1.0;
    }
    inter as f64 / union as f64
}

/// Name similarity over already-normalized labels. Declared etype aliases win
/// outright; otherwise normalized Levenshtein.
pub fn name_similarity(config: &ScorerConfig, model_name: &str, ontology_name: &str) -> f64 {
    if model_name == ontology_name {
        return 1.0;
    }
    if config
        .etype_aliases
        .get(model_name)
        .is_some_and(|target| target == ontology_name)
    {
        return 1.0;
    }
    normalized_levenshtein(model_name, ontology_name)
}

/// Deterministic etype similarity:
/// `name_weight * name_similarity + property_weight * property_jaccard`.
pub fn etype_score(config: &ScorerConfig, model_etype: &EType, ontology_etype: &EType) -> f64 {
    let name = name_similarity(config, &model_etype.name, &ontology_etype.name);
    let props = jaccard(
        &model_etype.property_names(),
        &ontology_etype.property_names(),
    );
    config.name_weight * name + config.property_weight * props
}

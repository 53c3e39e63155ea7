//! graphloom builds purpose-specific knowledge graphs by reusing existing
//! datasets and reference ontologies.
//!
//! The pipeline runs four phases, each closed by an evaluation gate:
//! inception (match CQs against dataset schemas and ontologies), modeling
//! (build the purpose-specific ETG model), knowledge alignment (generate a
//! shareable ETG from reference ontologies) and data integration (merge
//! records into the entity graph, exported as N-Triples). Failed gates
//! backtrack to an earlier phase, re-reading the purpose file so edits made
//! between iterations take effect.

pub mod alignment;
pub mod cli;
pub mod evaluation;
pub mod inception;
pub mod integration;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod modeling;
pub mod pipeline;
pub mod similarity;
pub mod workspace;

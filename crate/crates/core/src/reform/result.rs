//! Reformulation results and their trace metadata.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// A metadata value: a string, a number, or a list of strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetaValue {
    Str(String),
    Int(i64),
    Float(f64),
    List(Vec<String>),
}

impl From<&str> for MetaValue {
    fn from(value: &str) -> Self {
        MetaValue::Str(value.to_owned())
    }
}

impl From<String> for MetaValue {
    fn from(value: String) -> Self {
        MetaValue::Str(value)
    }
}

impl From<i64> for MetaValue {
    fn from(value: i64) -> Self {
        MetaValue::Int(value)
    }
}

impl From<f64> for MetaValue {
    fn from(value: f64) -> Self {
        MetaValue::Float(value)
    }
}

impl From<Vec<String>> for MetaValue {
    fn from(value: Vec<String>) -> Self {
        MetaValue::List(value)
    }
}

/// String-keyed trace metadata attached to every result.
pub type Metadata = BTreeMap<String, MetaValue>;

/// The outcome of reformulating one query.
///
/// `metadata` always carries the prompt templates and fingerprints used,
/// per-call trace summaries, and intermediate generations; context methods
/// add retrieved docids, and fallback results add an `error` entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReformulationResult {
    pub qid: String,
    pub original: String,
    pub reformulated: String,
    pub method: String,
    pub metadata: Metadata,
}

impl ReformulationResult {
    /// True when the pipeline failed and the original query was kept.
    pub fn is_fallback(&self) -> bool {
        self.metadata.contains_key("error")
    }
}

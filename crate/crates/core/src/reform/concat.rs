//! Strategies for combining the original query with generated expansions.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::retrieval::tokenize;
use crate::util::collapse_whitespace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcatStrategy {
    /// `original + expansions`.
    Append,
    /// Original repeated `query_weight` times, then the expansions.
    RepeatQuery,
    /// Original plus expansion terms not already present, deduplicated.
    UniqueTerms,
}

impl ConcatStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            ConcatStrategy::Append => "append",
            ConcatStrategy::RepeatQuery => "repeat_query",
            ConcatStrategy::UniqueTerms => "unique_terms",
        }
    }
}

impl fmt::Display for ConcatStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConcatStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "append" => Ok(ConcatStrategy::Append),
            "repeat_query" => Ok(ConcatStrategy::RepeatQuery),
            "unique_terms" => Ok(ConcatStrategy::UniqueTerms),
            other => Err(format!(
                "unknown concat strategy `{other}` (expected append, repeat_query, or unique_terms)"
            )),
        }
    }
}

/// Splits on non-alphanumeric boundaries keeping the original casing.
fn split_terms_preserving_case(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|term| !term.is_empty())
}

/// Combines `original` with `expansions` under `strategy`.
///
/// All strategies collapse internal whitespace runs to single spaces and
/// trim the result.
pub fn concat(
    original: &str,
    expansions: &[String],
    strategy: ConcatStrategy,
    query_weight: usize,
) -> String {
    let joined_expansions = expansions.join(" ");
    let combined = match strategy {
        ConcatStrategy::Append => format!("{original} {joined_expansions}"),
        ConcatStrategy::RepeatQuery => {
            let repeated = vec![original; query_weight].join(" ");
            format!("{repeated} {joined_expansions}")
        }
        ConcatStrategy::UniqueTerms => {
            let mut seen: BTreeSet<String> = tokenize(original).into_iter().collect();
            let mut terms: Vec<&str> = Vec::new();
            for expansion in expansions {
                for term in split_terms_preserving_case(expansion) {
                    if seen.insert(term.to_lowercase()) {
                        terms.push(term);
                    }
                }
            }
            format!("{original} {}", terms.join(" "))
        }
    };
    collapse_whitespace(&combined)
}

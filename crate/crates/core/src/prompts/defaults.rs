//! The default prompt bank compiled into the toolkit.
//!
//! Every built-in reformulation method resolves its templates from this bank
//! unless the caller supplies a custom one. The wording here is versioned:
//! drop replacement prompts into a bank directory to swap it out without
//! code changes.

use std::sync::Arc;

use once_cell::sync::Lazy;

use super::{bank_from_named_strings, PromptBank};

static SOURCES: &[(&str, &str)] = &[
    (
        "builtin:query2doc.yaml",
        include_str!("../../prompts/query2doc.yaml"),
    ),
    ("builtin:genqr.yaml", include_str!("../../prompts/genqr.yaml")),
    (
        "builtin:genqr_ensemble.yaml",
        include_str!("../../prompts/genqr_ensemble.yaml"),
    ),
    (
        "builtin:query2e.yaml",
        include_str!("../../prompts/query2e.yaml"),
    ),
    (
        "builtin:qa_expand.yaml",
        include_str!("../../prompts/qa_expand.yaml"),
    ),
    ("builtin:mugi.yaml", include_str!("../../prompts/mugi.yaml")),
    ("builtin:lamer.yaml", include_str!("../../prompts/lamer.yaml")),
    ("builtin:csqe.yaml", include_str!("../../prompts/csqe.yaml")),
];

static DEFAULT_BANK: Lazy<Arc<PromptBank>> = Lazy::new(|| {
    Arc::new(bank_from_named_strings(SOURCES).expect("built-in prompt bank is valid"))
});

/// The prompt bank shipped with the toolkit.
pub fn default_bank() -> Arc<PromptBank> {
    Arc::clone(&DEFAULT_BANK)
}

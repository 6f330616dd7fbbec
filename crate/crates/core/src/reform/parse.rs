//! Normative parse rules for LLM responses. Deliberately simple so tests can
//! force every branch: keyword lists split on commas and newlines, passages
//! split on blank lines, list numbering prefixes stripped.

use crate::retrieval::tokenize;

/// Splits a keyword response on commas and newlines, trimming entries,
/// dropping empties and anything longer than 10 tokens.
pub fn parse_keywords(text: &str) -> Vec<String> {
    text.split(|c| c == ',' || c == '\n')
        .map(str::trim)
        .filter(|item| !item.is_empty())
        .filter(|item| tokenize(item).len() <= 10)
        .map(str::to_owned)
        .collect()
}

/// Strips a leading `1.` / `2)` / `-` / `*` list prefix.
fn strip_list_prefix(line: &str) -> &str {
    let trimmed = line.trim_start();
    let digits = trimmed.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &trimmed[digits..];
        if let Some(rest) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return rest.trim_start();
        }
    }
    if let Some(rest) = trimmed.strip_prefix('-').or_else(|| trimmed.strip_prefix('*')) {
        return rest.trim_start();
    }
    trimmed
}

/// One item per line, list numbering stripped, empties dropped, capped at `max`.
pub fn parse_listed_lines(text: &str, max: usize) -> Vec<String> {
    text.lines()
        .map(strip_list_prefix)
        .map(str::trim)
        .filter(|line| !line.is_empty())
        .take(max)
        .map(str::to_owned)
        .collect()
}

/// One item per non-empty line, as-is.
pub fn parse_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Splits a response into blocks separated by blank lines. A response with
/// no blank lines is a single block.
pub fn split_blank_lines(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                blocks.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line.trim_end());
        }
    }
    if !current.is_empty() {
        blocks.push(current.join("\n"));
    }
    blocks
}

//! Domain types for queries, qrels, and corpus passages, plus loaders and
//! savers for the TSV and JSONL file families used by MS MARCO- and
//! BEIR-style benchmarks.
//!
//! Loaders are total: a file either loads fully or the loader returns a
//! positioned error. Duplicate identifiers are hard errors, never silently
//! deduplicated. All files are UTF-8; a leading byte-order mark is stripped
//! and lines may end in LF or CRLF.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::reform::ReformulationResult;

/// An identified query string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryItem {
    pub qid: String,
    pub text: String,
}

impl QueryItem {
    pub fn new(qid: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            qid: qid.into(),
            text: text.into(),
        }
    }
}

/// A relevance judgment for a (query, document) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QrelEntry {
    pub qid: String,
    pub docid: String,
    pub relevance: u32,
}

/// A corpus passage with an optional title.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusDocument {
    pub docid: String,
    pub title: Option<String>,
    pub text: String,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: {detail}")]
    MalformedLine {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("duplicate qid `{qid}` (lines {first_line} and {line})")]
    DuplicateQid {
        qid: String,
        first_line: usize,
        line: usize,
    },
    #[error("duplicate docid `{docid}` (lines {first_line} and {line})")]
    DuplicateDocid {
        docid: String,
        first_line: usize,
        line: usize,
    },
    #[error("{path}:{line}: found {found} but file uses the {expected} qrels layout")]
    MixedLayout {
        path: String,
        line: usize,
        expected: String,
        found: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn display_path(path: &Path) -> String {
    path.display().to_string()
}

fn read_text(path: &Path) -> Result<String, DataError> {
    let content = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: display_path(path),
        source,
    })?;
    // Strip a UTF-8 BOM if present.
    Ok(match content.strip_prefix('\u{feff}') {
        Some(rest) => rest.to_owned(),
        None => content,
    })
}

/// Yields (1-based line number, line without trailing CR) pairs.
fn content_lines(content: &str) -> impl Iterator<Item = (usize, &str)> {
    content
        .split('\n')
        .enumerate()
        .map(|(idx, raw)| (idx + 1, raw.strip_suffix('\r').unwrap_or(raw)))
}

fn check_query_fields(
    path: &Path,
    line: usize,
    qid: &str,
    text: &str,
) -> Result<(), DataError> {
    if qid.is_empty() {
        return Err(DataError::MalformedLine {
            path: display_path(path),
            line,
            detail: "empty qid".into(),
        });
    }
    if qid.contains('\t') || qid.contains('\n') || qid.contains('\r') {
        return Err(DataError::MalformedLine {
            path: display_path(path),
            line,
            detail: format!("qid `{qid}` contains tab or newline characters"),
        });
    }
    if text.trim().is_empty() {
        return Err(DataError::MalformedLine {
            path: display_path(path),
            line,
            detail: "empty query text".into(),
        });
    }
    Ok(())
}

/// Loads queries from a `qid \t text` TSV file, in file order.
pub fn load_queries_tsv(path: impl AsRef<Path>) -> Result<Vec<QueryItem>, DataError> {
    let path = path.as_ref();
    let content = read_text(path)?;
    let mut items = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (line, raw) in content_lines(&content) {
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 2 {
            return Err(DataError::MalformedLine {
                path: display_path(path),
                line,
                detail: format!("expected 2 tab-separated fields, found {}", fields.len()),
            });
        }
        let (qid, text) = (fields[0], fields[1]);
        check_query_fields(path, line, qid, text)?;
        if let Some(&first_line) = seen.get(qid) {
            return Err(DataError::DuplicateQid {
                qid: qid.to_owned(),
                first_line,
                line,
            });
        }
        seen.insert(qid.to_owned(), line);
        items.push(QueryItem::new(qid, text));
    }
    Ok(items)
}

#[derive(Deserialize)]
struct JsonlQuery {
    #[serde(rename = "_id")]
    id: String,
    text: String,
}

/// Loads queries from a BEIR-style JSONL file (`_id` and `text` fields).
pub fn load_queries_jsonl(path: impl AsRef<Path>) -> Result<Vec<QueryItem>, DataError> {
    let path = path.as_ref();
    let content = read_text(path)?;
    let mut items = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (line, raw) in content_lines(&content) {
        if raw.trim().is_empty() {
            continue;
        }
        let record: JsonlQuery =
            serde_json::from_str(raw).map_err(|err| DataError::MalformedLine {
                path: display_path(path),
                line,
                detail: err.to_string(),
            })?;
        check_query_fields(path, line, &record.id, &record.text)?;
        if let Some(&first_line) = seen.get(&record.id) {
            return Err(DataError::DuplicateQid {
                qid: record.id,
                first_line,
                line,
            });
        }
        seen.insert(record.id.clone(), line);
        items.push(QueryItem::new(record.id, record.text));
    }
    Ok(items)
}

/// Loads queries from TSV or JSONL, picked by file extension
/// (`.jsonl`/`.json` use the JSONL loader, anything else TSV).
pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<QueryItem>, DataError> {
    let path = path.as_ref();
    match path.extension().and_then(|ext| ext.to_str()) {
        Some("jsonl") | Some("json") => load_queries_jsonl(path),
        _ => load_queries_tsv(path),
    }
}

/// Replaces every run of tab/newline/carriage-return characters with a
/// single space, keeping TSV records one-per-line.
pub fn sanitize_tsv_field(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_run = false;
    for ch in text.chars() {
        if ch == '\t' || ch == '\n' || ch == '\r' {
            in_run = true;
        } else {
            if in_run {
                out.push(' ');
                in_run = false;
            }
            out.push(ch);
        }
    }
    if in_run {
        out.push(' ');
    }
    out
}

/// Writes queries as `qid \t text` lines, sanitizing text so the file stays
/// one record per line. Creates parent directories; overwrites the file.
pub fn save_queries_tsv(items: &[QueryItem], path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| DataError::Io {
                path: display_path(parent),
                source,
            })?;
        }
    }
    let mut out = String::new();
    for item in items {
        out.push_str(&item.qid);
        out.push('\t');
        out.push_str(&sanitize_tsv_field(&item.text));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| DataError::Io {
        path: display_path(path),
        source,
    })
}

#[derive(Deserialize)]
struct JsonlDocument {
    #[serde(rename = "_id")]
    id: String,
    #[serde(default)]
    title: Option<String>,
    text: String,
}

/// Loads a corpus from a BEIR-style JSONL file (`_id`, optional `title`, `text`).
pub fn load_corpus_jsonl(path: impl AsRef<Path>) -> Result<Vec<CorpusDocument>, DataError> {
    let path = path.as_ref();
    let content = read_text(path)?;
    let mut docs = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (line, raw) in content_lines(&content) {
        if raw.trim().is_empty() {
            continue;
        }
        let record: JsonlDocument =
            serde_json::from_str(raw).map_err(|err| DataError::MalformedLine {
                path: display_path(path),
                line,
                detail: err.to_string(),
            })?;
        if record.id.is_empty() {
            return Err(DataError::MalformedLine {
                path: display_path(path),
                line,
                detail: "empty docid".into(),
            });
        }
        if let Some(&first_line) = seen.get(&record.id) {
            return Err(DataError::DuplicateDocid {
                docid: record.id,
                first_line,
                line,
            });
        }
        seen.insert(record.id.clone(), line);
        docs.push(CorpusDocument {
            docid: record.id,
            title: record.title,
            text: record.text,
        });
    }
    Ok(docs)
}

/// Loads a corpus from a `docid \t text` TSV file (MS MARCO passage layout).
pub fn load_corpus_tsv(path: impl AsRef<Path>) -> Result<Vec<CorpusDocument>, DataError> {
    let path = path.as_ref();
    let content = read_text(path)?;
    let mut docs = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (line, raw) in content_lines(&content) {
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 2 {
            return Err(DataError::MalformedLine {
                path: display_path(path),
                line,
                detail: format!("expected 2 tab-separated fields, found {}", fields.len()),
            });
        }
        let (docid, text) = (fields[0], fields[1]);
        if docid.is_empty() {
            return Err(DataError::MalformedLine {
                path: display_path(path),
                line,
                detail: "empty docid".into(),
            });
        }
        if let Some(&first_line) = seen.get(docid) {
            return Err(DataError::DuplicateDocid {
                docid: docid.to_owned(),
                first_line,
                line,
            });
        }
        seen.insert(docid.to_owned(), line);
        docs.push(CorpusDocument {
            docid: docid.to_owned(),
            title: None,
            text: text.to_owned(),
        });
    }
    Ok(docs)
}

/// Loads a corpus from TSV or JSONL, picked by file extension.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusDocument>, DataError> {
    let path = path.as_ref();
    match path.extension().and_then(|ext| ext.to_str()) {
        Some("jsonl") | Some("json") => load_corpus_jsonl(path),
        _ => load_corpus_tsv(path),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum QrelsLayout {
    /// 4-column TREC layout: `qid 0 docid rel`, whitespace-separated.
    Trec,
    /// 3-column BEIR layout: `qid \t docid \t rel`.
    Beir,
}

impl QrelsLayout {
    fn name(self) -> &'static str {
        match self {
            QrelsLayout::Trec => "TREC 4-column",
            QrelsLayout::Beir => "BEIR 3-column",
        }
    }
}

fn parse_relevance(path: &Path, line: usize, value: &str) -> Result<u32, DataError> {
    value.parse::<u32>().map_err(|_| DataError::MalformedLine {
        path: display_path(path),
        line,
        detail: format!("invalid relevance grade `{value}` (expected integer >= 0)"),
    })
}

/// Loads qrels in either the TREC 4-column or BEIR 3-column layout.
///
/// The layout is detected from the first data line and applied uniformly;
/// an optional BEIR header line `query-id corpus-id score` is skipped.
pub fn load_qrels_tsv(path: impl AsRef<Path>) -> Result<Vec<QrelEntry>, DataError> {
    let path = path.as_ref();
    let content = read_text(path)?;
    let mut entries = Vec::new();
    let mut layout: Option<QrelsLayout> = None;
    let mut saw_data_or_header = false;

    for (line, raw) in content_lines(&content) {
        if raw.trim().is_empty() {
            continue;
        }
        if !saw_data_or_header {
            saw_data_or_header = true;
            let header: Vec<&str> = raw.split_whitespace().collect();
            if header == ["query-id", "corpus-id", "score"] {
                layout = Some(QrelsLayout::Beir);
                continue;
            }
        }

        let tab_fields: Vec<&str> = raw.split('\t').collect();
        let ws_fields: Vec<&str> = raw.split_whitespace().collect();
        let line_layout = if tab_fields.len() == 3 {
            Some(QrelsLayout::Beir)
        } else if ws_fields.len() == 4 {
            Some(QrelsLayout::Trec)
        } else {
            None
        };

        let expected = match (layout, line_layout) {
            (None, Some(detected)) => {
                layout = Some(detected);
                detected
            }
            (Some(expected), Some(found)) if expected != found => {
                return Err(DataError::MixedLayout {
                    path: display_path(path),
                    line,
                    expected: expected.name().to_owned(),
                    found: found.name().to_owned(),
                });
            }
            (Some(expected), Some(_)) => expected,
            (_, None) => {
                return Err(DataError::MalformedLine {
                    path: display_path(path),
                    line,
                    detail: format!(
                        "expected `qid 0 docid rel` or `qid\\tdocid\\trel`, found {} fields",
                        ws_fields.len()
                    ),
                });
            }
        };

        let (qid, docid, rel) = match expected {
            QrelsLayout::Trec => (ws_fields[0], ws_fields[2], ws_fields[3]),
            QrelsLayout::Beir => (
                tab_fields[0].trim(),
                tab_fields[1].trim(),
                tab_fields[2].trim(),
            ),
        };
        if qid.is_empty() || docid.is_empty() {
            return Err(DataError::MalformedLine {
                path: display_path(path),
                line,
                detail: "empty qid or docid".into(),
            });
        }
        entries.push(QrelEntry {
            qid: qid.to_owned(),
            docid: docid.to_owned(),
            relevance: parse_relevance(path, line, rel)?,
        });
    }
    Ok(entries)
}

/// Writes reformulation results as one JSON object per line
/// (`qid`, `original`, `reformulated`, `method`, `metadata`), in input order.
pub fn save_results_jsonl(
    results: &[ReformulationResult],
    path: impl AsRef<Path>,
) -> Result<(), DataError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| DataError::Io {
                path: display_path(parent),
                source,
            })?;
        }
    }
    let mut out = String::new();
    for result in results {
        let line = serde_json::to_string(result).expect("results serialize to JSON");
        out.push_str(&line);
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| DataError::Io {
        path: display_path(path),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sanitize_replaces_runs_with_single_space() {
        assert_eq!(sanitize_tsv_field("a\tb\nc"), "a b c");
        assert_eq!(sanitize_tsv_field("a\t\r\n\tb"), "a b");
        assert_eq!(sanitize_tsv_field("plain"), "plain");
        assert_eq!(sanitize_tsv_field("end\n"), "end ");
    }

    #[test]
    fn content_lines_strips_cr_and_numbers_from_one() {
        let lines: Vec<(usize, &str)> = content_lines("a\r\nb\nc").collect();
        assert_eq!(lines, vec![(1, "a"), (2, "b"), (3, "c")]);
    }
}

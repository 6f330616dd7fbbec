//! TREC run file emission: `qid Q0 docid rank score tag`, six columns,
//! rank ascending from 1, scores with six decimal places.

use std::fs;
use std::path::Path;

use crate::retrieval::SearchHit;

use super::BenchError;

/// One TREC run line, without the trailing newline.
pub fn format_run_line(qid: &str, hit: &SearchHit, tag: &str) -> String {
    format!("{qid} Q0 {} {} {:.6} {tag}", hit.docid, hit.rank, hit.score)
}

/// Writes ranked hits per query in input order.
pub fn write_run_file(
    entries: &[(String, Vec<SearchHit>)],
    path: impl AsRef<Path>,
    tag: &str,
) -> Result<(), BenchError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| BenchError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
    }
    let mut out = String::new();
    for (qid, hits) in entries {
        for hit in hits {
            out.push_str(&format_run_line(qid, hit, tag));
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })
}

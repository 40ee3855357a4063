use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::CitationKey;

/// Author-year citations found in an answer, split by whether the corpus
/// holds the cited paper. Occurrences are kept in order, repeats included.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationReport {
    pub detected: Vec<String>,
    pub grounded: Vec<String>,
    pub ungrounded: Vec<String>,
}

/// Detects citation-key patterns in `answer` and checks each against the
/// corpus keys: surnames case-insensitively, author shape and year exactly.
pub fn ground_citations<'a>(answer: &str, corpus_keys: impl IntoIterator<Item = &'a CitationKey>) -> CitationReport {
    let known: HashSet<String> = corpus_keys.into_iter().map(CitationKey::match_key).collect();
    let mut report = CitationReport::default();
    for key in CitationKey::find_all(answer) {
        let text = key.as_str().to_string();
        if known.contains(&key.match_key()) {
            report.grounded.push(text.clone());
        } else {
            report.ungrounded.push(text.clone());
        }
        report.detected.push(text);
    }
    report
}

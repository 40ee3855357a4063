//! Document model: plain-text ingestion, paragraph segmentation, word and
//! token accounting, and the on-disk corpus layout.
//!
//! A corpus directory looks like
//!
//! ```text
//! corpus/
//!   documents/
//!     kawata-etal-2018-1f0c9a2b.txt    paragraphs separated by blank lines
//!     kawata-etal-2018-1f0c9a2b.json   {doc_id, citation_key, title, source_kind}
//! ```
//!
//! Distilled versions live next to their originals with a `-distilled`
//! suffix on the id and `source_kind: "distilled"` in the sidecar.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("input text has no non-whitespace content")]
    EmptyInput,
    #[error("malformed citation key {0:?}: expected e.g. \"Surname et al. (2018)\"")]
    MalformedCitationKey(String),
    #[error("paragraph {0} is empty")]
    EmptyParagraph(usize),
    #[error("document {0} already exists")]
    DuplicateDocId(DocId),
    #[error("citation key {0:?} is already used by another document")]
    DuplicateCitationKey(String),
    #[error("document {0} not found")]
    NotFound(DocId),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid sidecar: {source}")]
    Sidecar {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Coarse token estimate: `ceil(chars / 4)`.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// Number of maximal whitespace-delimited runs.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Splits text into blank-line-separated blocks, each trimmed.
pub fn split_paragraphs(raw: &str) -> Vec<String> {
    let mut paragraphs = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in raw.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                paragraphs.push(current.join("\n").trim().to_string());
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        paragraphs.push(current.join("\n").trim().to_string());
    }
    paragraphs
}

const SURNAME: &str = r"\p{Lu}[\p{L}\p{M}'’\-]*";

fn key_pattern() -> String {
    format!(r"({SURNAME})(?: (&) ({SURNAME})| (et al\.))? \(((?:19|20)\d{{2}})\)")
}

fn anchored_key_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(&format!("^{}$", key_pattern())).expect("valid regex"))
}

/// Unanchored citation-key matcher for free text.
pub(crate) fn citation_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(&format!(r"\b{}", key_pattern())).expect("valid regex"))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Authors {
    Single(String),
    Pair(String, String),
    EtAl(String),
}

/// An author-year key such as `Helmi et al. (2018)` or `Myeong & Vasiliev (2019)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CitationKey {
    text: String,
    authors: Authors,
    year: u16,
}

impl CitationKey {
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let caps = anchored_key_regex()
            .captures(text)
            .ok_or_else(|| CorpusError::MalformedCitationKey(text.to_string()))?;
        Ok(Self::from_captures(&caps))
    }

    fn from_captures(caps: &regex::Captures<'_>) -> Self {
        let first = caps[1].to_string();
        let authors = if caps.get(2).is_some() {
            Authors::Pair(first, caps[3].to_string())
        } else if caps.get(4).is_some() {
            Authors::EtAl(first)
        } else {
            Authors::Single(first)
        };
        CitationKey {
            text: caps[0].to_string(),
            authors,
            year: caps[5].parse().expect("four digits"),
        }
    }

    /// Finds every key-shaped substring, in order of appearance.
    pub fn find_all(text: &str) -> Vec<CitationKey> {
        citation_regex()
            .captures_iter(text)
            .map(|caps| Self::from_captures(&caps))
            .collect()
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn year(&self) -> u16 {
        self.year
    }

    pub fn first_surname(&self) -> &str {
        match &self.authors {
            Authors::Single(s) | Authors::Pair(s, _) | Authors::EtAl(s) => s,
        }
    }

    /// Identity used for grounding: surnames compared case-insensitively,
    /// author shape and year compared exactly.
    pub fn match_key(&self) -> String {
        let lower = |s: &str| s.to_lowercase();
        match &self.authors {
            Authors::Single(a) => format!("{}|{}", lower(a), self.year),
            Authors::Pair(a, b) => format!("{}&{}|{}", lower(a), lower(b), self.year),
            Authors::EtAl(a) => format!("{}+|{}", lower(a), self.year),
        }
    }

    fn slug(&self) -> String {
        let ascii = |s: &str| -> String {
            s.chars()
                .filter(|c| c.is_ascii_alphanumeric())
                .map(|c| c.to_ascii_lowercase())
                .collect()
        };
        let names = match &self.authors {
            Authors::Single(a) => ascii(a),
            Authors::Pair(a, b) => format!("{}-{}", ascii(a), ascii(b)),
            Authors::EtAl(a) => format!("{}-etal", ascii(a)),
        };
        format!("{}-{}", names, self.year)
    }
}

impl fmt::Display for CitationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocId(String);

impl DocId {
    pub fn new(id: impl Into<String>) -> Self {
        DocId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Id of the distilled counterpart of a raw document.
    pub fn distilled(&self) -> DocId {
        DocId(format!("{}-distilled", self.0))
    }
}

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Raw,
    Distilled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub index: usize,
    pub text: String,
    pub word_count: usize,
    pub token_estimate: usize,
}

impl Paragraph {
    fn new(index: usize, text: String) -> Self {
        Paragraph {
            index,
            word_count: word_count(&text),
            token_estimate: estimate_tokens(&text),
            text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    doc_id: DocId,
    citation_key: CitationKey,
    title: String,
    paragraphs: Vec<Paragraph>,
    source_kind: SourceKind,
}

impl Document {
    /// Builds a document from already-segmented paragraph texts.
    pub fn from_paragraphs(
        doc_id: DocId,
        citation_key: CitationKey,
        title: impl Into<String>,
        paragraphs: Vec<String>,
        source_kind: SourceKind,
    ) -> Result<Self, CorpusError> {
        if paragraphs.is_empty() {
            return Err(CorpusError::EmptyInput);
        }
        let paragraphs = paragraphs
            .into_iter()
            .enumerate()
            .map(|(i, text)| {
                let text = text.trim().to_string();
                if text.is_empty() {
                    Err(CorpusError::EmptyParagraph(i))
                } else {
                    Ok(Paragraph::new(i, text))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Document {
            doc_id,
            citation_key,
            title: title.into(),
            paragraphs,
            source_kind,
        })
    }

    pub fn doc_id(&self) -> &DocId {
        &self.doc_id
    }

    pub fn citation_key(&self) -> &CitationKey {
        &self.citation_key
    }

    pub fn title(&self) -> &str {
        &self.title
    }

    pub fn paragraphs(&self) -> &[Paragraph] {
        &self.paragraphs
    }

    pub fn source_kind(&self) -> SourceKind {
        self.source_kind
    }

    pub fn total_words(&self) -> usize {
        self.paragraphs.iter().map(|p| p.word_count).sum()
    }

    /// Paragraphs joined by a blank line.
    pub fn body(&self) -> String {
        self.paragraphs
            .iter()
            .map(|p| p.text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    pub fn metadata(&self) -> DocumentMeta {
        DocumentMeta {
            doc_id: self.doc_id.clone(),
            citation_key: self.citation_key.to_string(),
            title: self.title.clone(),
            source_kind: self.source_kind,
        }
    }
}

/// JSON sidecar stored next to each document text; also the listing shape
/// of the HTTP API.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentMeta {
    pub doc_id: DocId,
    pub citation_key: String,
    pub title: String,
    pub source_kind: SourceKind,
}

/// Segments plain text into a raw document. The id is derived from the
/// citation key and a hash of the normalized body, so re-ingesting the same
/// paper yields the same id.
pub fn ingest_text(raw: &str, citation_key: &str, title: &str) -> Result<Document, CorpusError> {
    if raw.trim().is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let key = CitationKey::parse(citation_key)?;
    let paragraphs = split_paragraphs(raw);
    let digest = Sha256::digest(paragraphs.join("\n\n").as_bytes());
    let doc_id = DocId(format!("{}-{}", key.slug(), &hex::encode(digest)[..8]));
    Document::from_paragraphs(doc_id, key, title, paragraphs, SourceKind::Raw)
}

/// A set of raw documents, each optionally paired with its distilled form.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    raw: BTreeMap<DocId, Document>,
    distilled: BTreeMap<DocId, Document>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn insert(&mut self, doc: Document) -> Result<&Document, CorpusError> {
        if self.raw.contains_key(doc.doc_id()) {
            return Err(CorpusError::DuplicateDocId(doc.doc_id().clone()));
        }
        let wanted = doc.citation_key().match_key();
        if self.raw.values().any(|d| d.citation_key().match_key() == wanted) {
            return Err(CorpusError::DuplicateCitationKey(doc.citation_key().to_string()));
        }
        let id = doc.doc_id().clone();
        Ok(self.raw.entry(id).or_insert(doc))
    }

    /// Records the distilled version of a raw document, replacing any
    /// previous one.
    pub fn set_distilled(&mut self, raw_id: &DocId, doc: Document) -> Result<(), CorpusError> {
        if !self.raw.contains_key(raw_id) {
            return Err(CorpusError::NotFound(raw_id.clone()));
        }
        self.distilled.insert(raw_id.clone(), doc);
        Ok(())
    }

    /// Looks up a raw or distilled document by id.
    pub fn get(&self, id: &DocId) -> Result<&Document, CorpusError> {
        self.raw
            .get(id)
            .or_else(|| self.distilled.values().find(|d| d.doc_id() == id))
            .ok_or_else(|| CorpusError::NotFound(id.clone()))
    }

    pub fn raw_documents(&self) -> impl Iterator<Item = &Document> {
        self.raw.values()
    }

    pub fn distilled_of(&self, raw_id: &DocId) -> Option<&Document> {
        self.distilled.get(raw_id)
    }

    /// Every stored document, raw and distilled, ordered by id.
    pub fn all_documents(&self) -> Vec<&Document> {
        let mut docs: Vec<&Document> = self.raw.values().chain(self.distilled.values()).collect();
        docs.sort_by(|a, b| a.doc_id().cmp(b.doc_id()));
        docs
    }

    /// The version of each paper that should be indexed: the distilled one
    /// when present, otherwise the raw text.
    pub fn retrieval_documents(&self) -> Vec<&Document> {
        self.raw
            .iter()
            .map(|(id, raw)| self.distilled.get(id).unwrap_or(raw))
            .collect()
    }

    pub fn citation_keys(&self) -> Vec<&CitationKey> {
        self.raw.values().map(Document::citation_key).collect()
    }

    /// Reads `dir/documents/*.json` sidecars with their text files.
    pub fn load_dir(dir: &Path) -> Result<Self, CorpusError> {
        let docs_dir = dir.join("documents");
        let mut corpus = Corpus::new();
        if !docs_dir.exists() {
            return Ok(corpus);
        }
        let mut sidecars = Vec::new();
        for entry in fs::read_dir(&docs_dir).map_err(|e| CorpusError::io(&docs_dir, e))? {
            let path = entry.map_err(|e| CorpusError::io(&docs_dir, e))?.path();
            if path.extension().is_some_and(|ext| ext == "json") {
                sidecars.push(path);
            }
        }
        sidecars.sort();

        let mut distilled = Vec::new();
        for path in sidecars {
            let meta: StoredMeta = {
                let bytes = fs::read(&path).map_err(|e| CorpusError::io(&path, e))?;
                serde_json::from_slice(&bytes).map_err(|source| CorpusError::Sidecar {
                    path: path.clone(),
                    source,
                })?
            };
            let text_path = path.with_extension("txt");
            let text = fs::read_to_string(&text_path).map_err(|e| CorpusError::io(&text_path, e))?;
            let doc = Document::from_paragraphs(
                meta.meta.doc_id,
                CitationKey::parse(&meta.meta.citation_key)?,
                meta.meta.title,
                split_paragraphs(&text),
                meta.meta.source_kind,
            )?;
            match (meta.meta.source_kind, meta.derived_from) {
                (SourceKind::Distilled, Some(parent)) => distilled.push((parent, doc)),
                _ => {
                    corpus.insert(doc)?;
                }
            }
        }
        for (parent, doc) in distilled {
            corpus.set_distilled(&parent, doc)?;
        }
        Ok(corpus)
    }

    /// Writes one document (text + sidecar) under `dir/documents/`.
    pub fn write_document(dir: &Path, doc: &Document, derived_from: Option<&DocId>) -> Result<(), CorpusError> {
        let docs_dir = dir.join("documents");
        fs::create_dir_all(&docs_dir).map_err(|e| CorpusError::io(&docs_dir, e))?;
        let stem = docs_dir.join(doc.doc_id().as_str());
        let text_path = stem.with_extension("txt");
        let mut body = doc.body();
        body.push('\n');
        fs::write(&text_path, body).map_err(|e| CorpusError::io(&text_path, e))?;
        let sidecar = StoredMeta {
            meta: doc.metadata(),
            derived_from: derived_from.cloned(),
        };
        let json_path = stem.with_extension("json");
        let json = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
        fs::write(&json_path, json).map_err(|e| CorpusError::io(&json_path, e))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StoredMeta {
    #[serde(flatten)]
    meta: DocumentMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    derived_from: Option<DocId>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn token_estimate_is_quarter_chars_rounded_up() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
        // chars, not bytes
        assert_eq!(estimate_tokens("ăăăă"), 1);
    }

    #[test]
    fn word_count_counts_whitespace_runs() {
        assert_eq!(word_count("a b  c"), 3);
        assert_eq!(word_count(""), 0);
        assert_eq!(word_count(" hyphen-word (2018) "), 2);
        assert_eq!(word_count("tab\tand\nnewline"), 3);
    }

    #[test]
    fn ingest_splits_on_blank_lines() {
        let doc = ingest_text("Para one.\n\nPara two.", "Helmi et al. (2018)", "t").unwrap();
        assert_eq!(doc.paragraphs().len(), 2);
        let words: Vec<_> = doc.paragraphs().iter().map(|p| p.word_count).collect();
        assert_eq!(words, [2, 2]);
        assert_eq!(doc.source_kind(), SourceKind::Raw);
        assert_eq!(doc.paragraphs()[1].index, 1);
        assert_eq!(doc.paragraphs()[1].token_estimate, 3);
    }

    #[test]
    fn ingest_treats_whitespace_only_lines_as_blank() {
        let doc = ingest_text("  a\nb  \n \t \n\n\nc\n", "Helmi (2018)", "t").unwrap();
        let texts: Vec<_> = doc.paragraphs().iter().map(|p| p.text.as_str()).collect();
        assert_eq!(texts, ["a\nb", "c"]);
    }

    #[test]
    fn ingest_rejects_blank_input() {
        assert!(matches!(
            ingest_text("   \n\n  ", "Helmi et al. (2018)", "t"),
            Err(CorpusError::EmptyInput)
        ));
    }

    #[test]
    fn ingest_rejects_bad_keys() {
        for key in [
            "Helmi 2018",
            "helmi et al. (2018)",
            "Helmi et al (2018)",
            "Helmi et al. (1899)",
            "Helmi et al. (2018) ",
            "Helmi, Babusiaux (2018)",
        ] {
            assert!(
                matches!(ingest_text("x", key, "t"), Err(CorpusError::MalformedCitationKey(_))),
                "{key}"
            );
        }
    }

    #[test]
    fn citation_key_shapes() {
        for key in [
            "Helmi et al. (2018)",
            "Myeong & Vasiliev (2019)",
            "Ciucă (2023)",
            "O'Neil-Smith et al. (1999)",
        ] {
            assert_eq!(CitationKey::parse(key).unwrap().as_str(), key);
        }
        let a = CitationKey::parse("KAWATA et al. (2018)").unwrap();
        let b = CitationKey::parse("Kawata et al. (2018)").unwrap();
        assert_eq!(a.match_key(), b.match_key());
        let c = CitationKey::parse("Kawata (2018)").unwrap();
        assert_ne!(c.match_key(), b.match_key());
    }

    #[test]
    fn thousand_word_document_counts_match_independent_split() {
        // ten paragraphs of one hundred tokens each
        let text: String = (0..10)
            .map(|p| {
                (0..100)
                    .map(|w| format!("w{}", (p * 100 + w) % 997))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect::<Vec<_>>()
            .join("\n\n");
        let independent = text
            .split(|c: char| c.is_whitespace())
            .filter(|s| !s.is_empty())
            .count();
        assert_eq!(independent, 1000);
        let doc = ingest_text(&text, "Ciuca et al. (2023)", "synthetic").unwrap();
        assert_eq!(doc.paragraphs().len(), 10);
        assert_eq!(doc.total_words(), 1000);
    }

    #[test]
    fn doc_ids_are_stable_and_content_derived() {
        let a = ingest_text("x y\n\nz", "Helmi et al. (2018)", "a").unwrap();
        let b = ingest_text("  x y \n\n\n z ", "Helmi et al. (2018)", "b").unwrap();
        let c = ingest_text("x y z", "Helmi et al. (2018)", "a").unwrap();
        assert_eq!(a.doc_id(), b.doc_id());
        assert_ne!(a.doc_id(), c.doc_id());
        assert!(a.doc_id().as_str().starts_with("helmi-etal-2018-"));
    }

    #[test]
    fn corpus_rejects_duplicate_keys() {
        let mut corpus = Corpus::new();
        corpus
            .insert(ingest_text("one", "Helmi et al. (2018)", "a").unwrap())
            .unwrap();
        let err = corpus
            .insert(ingest_text("two", "HELMI et al. (2018)", "b").unwrap())
            .unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateCitationKey(_)));
        let err = corpus
            .insert(ingest_text("one", "Helmi et al. (2018)", "a").unwrap())
            .unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateDocId(_)));
    }

    #[test]
    fn corpus_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let raw = ingest_text("alpha beta\n\ngamma", "Kawata et al. (2018)", "K").unwrap();
        let distilled = Document::from_paragraphs(
            raw.doc_id().distilled(),
            raw.citation_key().clone(),
            raw.title(),
            vec!["alpha".into(), "gamma".into()],
            SourceKind::Distilled,
        )
        .unwrap();
        Corpus::write_document(dir.path(), &raw, None).unwrap();
        Corpus::write_document(dir.path(), &distilled, Some(raw.doc_id())).unwrap();

        let loaded = Corpus::load_dir(dir.path()).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded.get(raw.doc_id()).unwrap(), &raw);
        assert_eq!(loaded.distilled_of(raw.doc_id()).unwrap(), &distilled);
        assert_eq!(loaded.retrieval_documents(), vec![&distilled]);
        assert_eq!(loaded.all_documents().len(), 2);
    }

    #[test]
    fn sidecar_has_documented_fields() {
        let doc = ingest_text("a", "Helmi (2018)", "T").unwrap();
        let json = serde_json::to_value(doc.metadata()).unwrap();
        assert_eq!(json["citation_key"], "Helmi (2018)");
        assert_eq!(json["title"], "T");
        assert_eq!(json["source_kind"], "raw");
        assert_eq!(json["doc_id"], doc.doc_id().as_str());
    }

    proptest! {
        #[test]
        fn estimate_tokens_is_subadditive_and_monotone(a in "\\PC{0,64}", b in "\\PC{0,64}") {
            let joined = format!("{a}{b}");
            prop_assert!(estimate_tokens(&joined) <= estimate_tokens(&a) + estimate_tokens(&b) + 1);
            prop_assert!(estimate_tokens(&a) <= estimate_tokens(&joined));
        }

        #[test]
        fn segmentation_round_trips(paras in prop::collection::vec("[a-z]{1,6}( [a-z]{1,6}){0,8}", 1..8)) {
            let doc = ingest_text(&paras.join("\n\n"), "Helmi (2018)", "t").unwrap();
            let again = ingest_text(&doc.body(), "Helmi (2018)", "t").unwrap();
            prop_assert_eq!(doc.paragraphs(), again.paragraphs());
            prop_assert_eq!(doc.total_words(), word_count(&doc.body()));
        }
    }
}

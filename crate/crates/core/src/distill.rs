//! LLM-driven compression of a document to a target word ratio with the
//! paragraph count held fixed, plus the validator that certifies it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{split_paragraphs, word_count, CitationKey, CorpusError, DocId, Document, SourceKind};
use crate::llm::{complete_chat, ChatBackend, ChatMessage, LlmError, TokenBudget};

pub const DISTILL_SYSTEM_PROMPT: &str = "You are a careful scientific editor.";

const INSTRUCTION_HEAD: &str =
    "Distill each paragraph of the given text, maintaining the same number of paragraphs and structure. Limit the word count to ";
const INSTRUCTION_TAIL: &str = " of the original, and ensure references are included.";

/// Absorbs rounding in `|ratio - target| <= tolerance`.
const RATIO_EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("invalid distillation policy: {0}")]
    InvalidPolicy(String),
    #[error("document {0} is already distilled")]
    NotRaw(DocId),
    #[error("original document has no words")]
    DegenerateOriginal,
    #[error("backend returned an empty reply on every attempt")]
    EmptyReply,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillationPolicy {
    pub target_ratio: f64,
    pub ratio_tolerance: f64,
    pub max_retries: u32,
    /// Paragraphs sent per backend request; `None` sends the whole document.
    pub paragraphs_per_request: Option<usize>,
}

impl Default for DistillationPolicy {
    fn default() -> Self {
        DistillationPolicy {
            target_ratio: 0.5,
            ratio_tolerance: 0.15,
            max_retries: 2,
            paragraphs_per_request: None,
        }
    }
}

impl DistillationPolicy {
    pub fn with_ratio(target_ratio: f64) -> Result<Self, DistillError> {
        let policy = DistillationPolicy {
            target_ratio,
            ..Self::default()
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<(), DistillError> {
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(DistillError::InvalidPolicy(format!(
                "target_ratio must be in (0, 1], got {}",
                self.target_ratio
            )));
        }
        if !(self.ratio_tolerance >= 0.0 && self.ratio_tolerance < self.target_ratio) {
            return Err(DistillError::InvalidPolicy(format!(
                "ratio_tolerance must be in [0, target_ratio), got {}",
                self.ratio_tolerance
            )));
        }
        if self.paragraphs_per_request == Some(0) {
            return Err(DistillError::InvalidPolicy(
                "paragraphs_per_request must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn within_tolerance(&self, ratio: f64) -> bool {
        (ratio - self.target_ratio).abs() <= self.ratio_tolerance + RATIO_EPSILON
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillationReport {
    pub original_doc_id: DocId,
    pub distilled_doc_id: DocId,
    pub per_paragraph_ratios: Vec<f64>,
    pub overall_ratio: f64,
    pub structure_preserved: bool,
    pub accepted: bool,
    pub target_ratio: f64,
    pub ratio_tolerance: f64,
    /// Backend calls made.
    pub attempts: u32,
    /// Citation-key-shaped substrings before and after; recorded only.
    pub citations_before: usize,
    pub citations_after: usize,
}

/// Outcome of [`distill_document`]: the best candidate, its report, and
/// every rejected reply (as parsed paragraphs) for inspection.
#[derive(Debug, Clone)]
pub struct Distillation {
    pub document: Document,
    pub report: DistillationReport,
    pub rejected: Vec<Vec<String>>,
}

/// `0.5` -> `"50%"`, `0.333` -> `"33.3%"`.
fn percent(ratio: f64) -> String {
    let tenths = (ratio * 1000.0).round() / 10.0;
    if tenths.fract() == 0.0 {
        format!("{}%", tenths as u64)
    } else {
        format!("{tenths:.1}%")
    }
}

pub fn distill_instruction(target_ratio: f64) -> String {
    format!("{INSTRUCTION_HEAD}{}{INSTRUCTION_TAIL}", percent(target_ratio))
}

/// Recovers the target percentage and the paragraph text from a prompt built
/// by [`build_distill_prompt`].
pub fn parse_distill_prompt(prompt: &str) -> Option<(f64, Vec<String>)> {
    let rest = prompt.strip_prefix(INSTRUCTION_HEAD)?;
    let (pct, rest) = rest.split_once('%')?;
    let body = rest.strip_prefix(INSTRUCTION_TAIL)?;
    let pct: f64 = pct.parse().ok()?;
    Some((pct / 100.0, split_paragraphs(body)))
}

fn prompt_for(paragraphs: &[&str], target_ratio: f64) -> String {
    format!("{}\n\n{}", distill_instruction(target_ratio), paragraphs.join("\n\n"))
}

/// The distillation instruction followed by the document's paragraphs,
/// separated by blank lines.
pub fn build_distill_prompt(doc: &Document, policy: &DistillationPolicy) -> String {
    let paragraphs: Vec<&str> = doc.paragraphs().iter().map(|p| p.text.as_str()).collect();
    prompt_for(&paragraphs, policy.target_ratio)
}

struct Assessment {
    per_paragraph: Vec<f64>,
    overall: f64,
    structure_preserved: bool,
    accepted: bool,
}

fn assess(original: &[usize], candidate: &[usize], policy: &DistillationPolicy) -> Assessment {
    let total: usize = original.iter().sum();
    let overall = candidate.iter().sum::<usize>() as f64 / total as f64;
    let structure_preserved = original.len() == candidate.len();
    let per_paragraph = if structure_preserved {
        original
            .iter()
            .zip(candidate)
            .map(|(&o, &c)| c as f64 / o as f64)
            .collect()
    } else {
        Vec::new()
    };
    Assessment {
        per_paragraph,
        overall,
        structure_preserved,
        accepted: structure_preserved && policy.within_tolerance(overall),
    }
}

/// Checks paragraph count and overall word ratio of `candidate` against
/// `original`. Only counts matter; paragraph content is not inspected.
pub fn validate_distillation(
    original: &Document,
    candidate: &Document,
    policy: &DistillationPolicy,
) -> Result<DistillationReport, DistillError> {
    if original.total_words() == 0 {
        return Err(DistillError::DegenerateOriginal);
    }
    let words = |d: &Document| d.paragraphs().iter().map(|p| p.word_count).collect::<Vec<_>>();
    let a = assess(&words(original), &words(candidate), policy);
    Ok(DistillationReport {
        original_doc_id: original.doc_id().clone(),
        distilled_doc_id: candidate.doc_id().clone(),
        per_paragraph_ratios: a.per_paragraph,
        overall_ratio: a.overall,
        structure_preserved: a.structure_preserved,
        accepted: a.accepted,
        target_ratio: policy.target_ratio,
        ratio_tolerance: policy.ratio_tolerance,
        attempts: 0,
        citations_before: CitationKey::find_all(&original.body()).len(),
        citations_after: CitationKey::find_all(&candidate.body()).len(),
    })
}

/// Ranks attempts: accepted, then structure-preserving, then closest ratio.
fn attempt_rank(a: &Assessment, target: f64) -> (bool, bool, f64) {
    (!a.accepted, !a.structure_preserved, (a.overall - target).abs())
}

/// Compresses `doc` through `backend`, retrying each request up to
/// `policy.max_retries` times with the identical prompt.
pub fn distill_document(
    doc: &Document,
    policy: &DistillationPolicy,
    backend: &dyn ChatBackend,
    budget: &TokenBudget,
) -> Result<Distillation, DistillError> {
    policy.validate()?;
    if doc.source_kind() != SourceKind::Raw {
        return Err(DistillError::NotRaw(doc.doc_id().clone()));
    }
    if doc.total_words() == 0 {
        return Err(DistillError::DegenerateOriginal);
    }

    let batch_len = policy.paragraphs_per_request.unwrap_or(doc.paragraphs().len());
    let mut distilled: Vec<String> = Vec::new();
    let mut rejected = Vec::new();
    let mut calls = 0u32;

    for batch in doc.paragraphs().chunks(batch_len) {
        let texts: Vec<&str> = batch.iter().map(|p| p.text.as_str()).collect();
        let original_words: Vec<usize> = batch.iter().map(|p| p.word_count).collect();
        let messages = [
            ChatMessage::system(DISTILL_SYSTEM_PROMPT),
            ChatMessage::user(prompt_for(&texts, policy.target_ratio)),
        ];

        let mut best: Option<(Assessment, Vec<String>)> = None;
        for _ in 0..=policy.max_retries {
            calls += 1;
            let reply = complete_chat(&messages, budget, backend)?;
            let paragraphs = split_paragraphs(&reply);
            if paragraphs.is_empty() {
                continue;
            }
            let words: Vec<usize> = paragraphs.iter().map(|p| word_count(p)).collect();
            let assessment = assess(&original_words, &words, policy);
            let accepted = assessment.accepted;
            let better = best.as_ref().is_none_or(|(b, _)| {
                attempt_rank(&assessment, policy.target_ratio) < attempt_rank(b, policy.target_ratio)
            });
            if better {
                if let Some((_, previous)) = best.replace((assessment, paragraphs)) {
                    rejected.push(previous);
                }
            } else {
                rejected.push(paragraphs);
            }
            if accepted {
                break;
            }
        }
        let (_, paragraphs) = best.ok_or(DistillError::EmptyReply)?;
        distilled.extend(paragraphs);
    }

    let candidate = Document::from_paragraphs(
        doc.doc_id().distilled(),
        doc.citation_key().clone(),
        doc.title(),
        distilled,
        SourceKind::Distilled,
    )?;
    let mut report = validate_distillation(doc, &candidate, policy)?;
    report.attempts = calls;
    Ok(Distillation {
        document: candidate,
        report,
        rejected,
    })
}

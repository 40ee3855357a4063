//! Rule-based stand-in for a chat model, used in mock mode when no reply
//! script is supplied.
//!
//! It recognizes the three request kinds this crate sends:
//! distillation keeps the leading share of each paragraph's words,
//! condensation returns the follow-up verbatim, and answering quotes the
//! top context block under its citation key.

use crate::chat::{parse_answer_prompt, CONDENSE_INSTRUCTION, FOLLOW_UP_LABEL};
use crate::distill::parse_distill_prompt;
use crate::llm::{BackendError, ChatBackend, ChatMessage, Role};

const QUOTE_WORDS: usize = 40;

#[derive(Debug, Default, Clone, Copy)]
pub struct OfflineChatBackend;

impl OfflineChatBackend {
    fn distill(ratio: f64, paragraphs: &[String]) -> String {
        paragraphs
            .iter()
            .map(|p| {
                let words: Vec<&str> = p.split_whitespace().collect();
                let keep = ((words.len() as f64 * ratio).round() as usize).clamp(1, words.len());
                words[..keep].join(" ")
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    fn answer(blocks: &[(String, String)], question: &str) -> String {
        let Some((key, text)) = blocks.first() else {
            return format!("I have no documents that address: {question}");
        };
        let words: Vec<&str> = text.split_whitespace().collect();
        let mut quote = words[..words.len().min(QUOTE_WORDS)].join(" ");
        if words.len() > QUOTE_WORDS {
            quote.push_str(" ...");
        }
        let mut others: Vec<&str> = Vec::new();
        for (k, _) in &blocks[1..] {
            if k != key && !others.contains(&k.as_str()) {
                others.push(k);
            }
        }
        let mut answer = format!("According to {key}: {quote}");
        if !others.is_empty() {
            answer.push_str(&format!(" Related context appears in {}.", others.join("; ")));
        }
        answer
    }
}

impl ChatBackend for OfflineChatBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let user = messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .ok_or_else(|| BackendError::Decode("request has no user message".into()))?;
        let content = user.content.as_str();
        if let Some((ratio, paragraphs)) = parse_distill_prompt(content) {
            return Ok(Self::distill(ratio, &paragraphs));
        }
        if content.starts_with(CONDENSE_INSTRUCTION) {
            let follow_up = content
                .rsplit_once(FOLLOW_UP_LABEL)
                .map(|(_, q)| q.trim())
                .unwrap_or_default();
            return Ok(follow_up.to_string());
        }
        match parse_answer_prompt(content) {
            Some((blocks, question)) => Ok(Self::answer(&blocks, &question)),
            None => Ok(format!("I have no documents that address: {}", content.trim())),
        }
    }
}

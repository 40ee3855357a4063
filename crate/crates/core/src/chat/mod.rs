//! The conversational chain: condense history and query into a standalone
//! question, retrieve context under the token budget, ask the model, and
//! ground the citations in its answer.

mod citations;

pub use citations::{ground_citations, CitationReport};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{estimate_tokens, DocId};
use crate::embed::{embed_texts, EmbedError, EmbeddingBackend, EmbeddingCache};
use crate::knowledge::KnowledgeBase;
use crate::llm::{complete_chat, estimate_request_tokens, ChatBackend, ChatMessage, LlmError, TokenBudget};
use crate::scalar::Scalar;
use crate::vindex::{ChunkId, IndexError, SearchHit};

/// System prompt for answering.
pub const ANSWER_SYSTEM_PROMPT: &str = "Engage in insightful conversations with humans, providing meaningful, concise answers based on the provided documents. Include pertinent study citations, such as Example et al. (2020).";

/// System prompt for question condensation.
pub const CONDENSE_SYSTEM_PROMPT: &str = "You rewrite follow-up questions so they can be understood on their own.";

pub(crate) const CONDENSE_INSTRUCTION: &str =
    "Given the conversation so far and a follow-up question, rephrase the follow-up as a standalone question.";
pub(crate) const FOLLOW_UP_LABEL: &str = "Follow-up: ";
pub(crate) const QUESTION_LABEL: &str = "Question: ";

pub const DEFAULT_K_RETRIEVE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Condense,
    Retrieve,
    Assemble,
    Generate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Condense => "condense",
            Stage::Retrieve => "retrieve",
            Stage::Assemble => "assemble",
            Stage::Generate => "generate",
        })
    }
}

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("backend returned an empty standalone question")]
    EmptyStandaloneQuestion,
    #[error("index is empty")]
    EmptyIndex,
    #[error("best chunk needs ~{needed} tokens but only {available} are available")]
    ContextOverflow { needed: usize, available: usize },
    #[error("prompt needs ~{estimated} tokens but the limit is {limit}")]
    BudgetExceeded { estimated: usize, limit: usize },
    #[error("index was built with {index}, query embedder is {query}")]
    EmbeddingModelMismatch { index: String, query: String },
    #[error("no context to assemble")]
    EmptyContext,
    #[error("chunk {0} is missing from the knowledge base")]
    MissingChunk(ChunkId),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(IndexError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

impl From<IndexError> for ChatError {
    fn from(err: IndexError) -> Self {
        match err {
            IndexError::EmptyIndex => ChatError::EmptyIndex,
            other => ChatError::Index(other),
        }
    }
}

/// A [`ChatError`] tagged with the stage of the turn that produced it.
#[derive(Debug, Error)]
#[error("{stage}: {source}")]
pub struct TurnError {
    pub stage: Stage,
    #[source]
    pub source: ChatError,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, TurnError>;
}

impl<T> AtStage<T> for Result<T, ChatError> {
    fn at(self, stage: Stage) -> Result<T, TurnError> {
        self.map_err(|source| TurnError { stage, source })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatConfig {
    pub k_retrieve: usize,
    pub budget: TokenBudget,
}

impl Default for ChatConfig {
    fn default() -> Self {
        ChatConfig {
            k_retrieve: DEFAULT_K_RETRIEVE,
            budget: TokenBudget::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedHit {
    pub chunk_id: ChunkId,
    pub score: f64,
    pub doc_id: DocId,
    pub citation_key: String,
    pub paragraph_span: (usize, usize),
    pub text: String,
    pub token_estimate: usize,
}

/// Ranked chunks selected for one question.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub hits: Vec<RetrievedHit>,
    /// Estimated tokens of the formatted context blocks.
    pub total_token_estimate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub user_query: String,
    pub standalone_question: String,
    pub retrieved: RetrievedContext,
    pub answer: String,
    pub citation_report: CitationReport,
}

/// Append-only conversation state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: String,
    pub corpus_id: String,
    pub config: ChatConfig,
    turns: Vec<ChatTurn>,
}

impl ChatSession {
    pub fn new(session_id: impl Into<String>, corpus_id: impl Into<String>, config: ChatConfig) -> Self {
        ChatSession {
            session_id: session_id.into(),
            corpus_id: corpus_id.into(),
            config,
            turns: Vec::new(),
        }
    }

    pub fn turns(&self) -> &[ChatTurn] {
        &self.turns
    }

    /// One JSON object per turn, newline-terminated.
    pub fn transcript_jsonl(&self) -> String {
        let mut out = String::new();
        for turn in &self.turns {
            out.push_str(&serde_json::to_string(turn).expect("turn serializes"));
            out.push('\n');
        }
        out
    }
}

/// The collaborators a turn needs.
pub struct Backends<'a, S> {
    pub chat: &'a dyn ChatBackend,
    pub embedder: &'a dyn EmbeddingBackend,
    pub cache: &'a EmbeddingCache<S>,
}

fn condense_prompt(history: &[String], query: &str) -> String {
    format!(
        "{CONDENSE_INSTRUCTION}\n\nConversation:\n{}\n\n{FOLLOW_UP_LABEL}{query}",
        history.join("\n")
    )
}

fn history_lines(turn: &ChatTurn) -> String {
    format!("Human: {}\nAssistant: {}", turn.user_query, turn.answer)
}

/// Rewrites `query` into a standalone question using the chat history.
///
/// With no history the query is returned unchanged and the backend is not
/// called. Otherwise the oldest turns are dropped until the request fits the
/// budget.
pub fn condense_question(
    history: &[ChatTurn],
    query: &str,
    backend: &dyn ChatBackend,
    budget: &TokenBudget,
) -> Result<String, ChatError> {
    if query.trim().is_empty() {
        return Err(ChatError::EmptyQuery);
    }
    if history.is_empty() {
        return Ok(query.to_string());
    }
    let limit = budget.prompt_limit();
    let fixed = estimate_tokens(CONDENSE_SYSTEM_PROMPT);
    let mut kept: Vec<String> = Vec::new();
    for turn in history.iter().rev() {
        kept.insert(0, history_lines(turn));
        if fixed + estimate_tokens(&condense_prompt(&kept, query)) > limit {
            kept.remove(0);
            break;
        }
    }
    let messages = [
        ChatMessage::system(CONDENSE_SYSTEM_PROMPT),
        ChatMessage::user(condense_prompt(&kept, query)),
    ];
    let reply = complete_chat(&messages, budget, backend)?;
    let reply = reply.trim();
    if reply.is_empty() {
        return Err(ChatError::EmptyStandaloneQuestion);
    }
    Ok(reply.to_string())
}

fn context_block(citation_key: &str, text: &str) -> String {
    format!("[{citation_key}]\n{text}\n\n")
}

/// Splits an answering prompt back into `(citation_key, text)` blocks and
/// the question.
pub(crate) fn parse_answer_prompt(user: &str) -> Option<(Vec<(String, String)>, String)> {
    let split = user.rfind(QUESTION_LABEL)?;
    let question = user[split + QUESTION_LABEL.len()..].to_string();
    let mut blocks: Vec<(String, String)> = Vec::new();
    for block in user[..split].split("\n\n[") {
        let block = block.strip_prefix('[').unwrap_or(block);
        let (key, text) = block.split_once("]\n")?;
        blocks.push((key.to_string(), text.trim_end().to_string()));
    }
    Some((blocks, question))
}

/// Context budget left once the system prompt and question are accounted for.
pub fn context_budget(question: &str, budget: &TokenBudget) -> Result<usize, ChatError> {
    let fixed = estimate_tokens(ANSWER_SYSTEM_PROMPT) + estimate_tokens(&format!("{QUESTION_LABEL}{question}"));
    budget
        .prompt_limit()
        .checked_sub(fixed)
        .ok_or(ChatError::BudgetExceeded {
            estimated: fixed,
            limit: budget.prompt_limit(),
        })
}

/// Top-k search for `question`, then drops the lowest-ranked hits until the
/// formatted blocks fit `budget_remaining`.
pub fn retrieve_context<S: Scalar>(
    question: &str,
    knowledge: &KnowledgeBase<S>,
    embedder: &dyn EmbeddingBackend,
    cache: &EmbeddingCache<S>,
    k: usize,
    budget_remaining: usize,
) -> Result<RetrievedContext, ChatError> {
    if knowledge.index().is_empty() {
        return Err(ChatError::EmptyIndex);
    }
    if embedder.model_id() != knowledge.embedding_model() {
        return Err(ChatError::EmbeddingModelMismatch {
            index: knowledge.embedding_model().to_string(),
            query: embedder.model_id().to_string(),
        });
    }
    let query = embed_texts(&[question], embedder, cache, 1)?.remove(0);
    let hits = knowledge.index().search_topk(&query, k)?;

    let mut context = RetrievedContext::default();
    for SearchHit { chunk_id, score } in hits {
        let chunk = knowledge
            .chunk(&chunk_id)
            .ok_or_else(|| ChatError::MissingChunk(chunk_id.clone()))?;
        let citation_key = knowledge
            .citation_key(&chunk.doc_id)
            .map(|k| k.to_string())
            .ok_or_else(|| ChatError::MissingChunk(chunk_id.clone()))?;
        let cost = estimate_tokens(&context_block(&citation_key, &chunk.text));
        if context.total_token_estimate + cost > budget_remaining {
            if context.hits.is_empty() {
                return Err(ChatError::ContextOverflow {
                    needed: cost,
                    available: budget_remaining,
                });
            }
            break;
        }
        context.total_token_estimate += cost;
        context.hits.push(RetrievedHit {
            chunk_id,
            score,
            doc_id: chunk.doc_id.clone(),
            citation_key,
            paragraph_span: chunk.paragraph_span,
            text: chunk.text.clone(),
            token_estimate: chunk.token_estimate,
        });
    }
    Ok(context)
}

/// System prompt, then one user message holding the labeled context blocks
/// followed by the question.
pub fn assemble_prompt(
    context: &RetrievedContext,
    question: &str,
    budget: &TokenBudget,
) -> Result<Vec<ChatMessage>, ChatError> {
    if context.hits.is_empty() {
        return Err(ChatError::EmptyContext);
    }
    let mut user = String::new();
    for hit in &context.hits {
        user.push_str(&context_block(&hit.citation_key, &hit.text));
    }
    user.push_str(QUESTION_LABEL);
    user.push_str(question);
    let messages = vec![ChatMessage::system(ANSWER_SYSTEM_PROMPT), ChatMessage::user(user)];
    let estimated = estimate_request_tokens(&messages);
    if estimated > budget.prompt_limit() {
        return Err(ChatError::BudgetExceeded {
            estimated,
            limit: budget.prompt_limit(),
        });
    }
    Ok(messages)
}

/// Runs one full turn and appends it to the session. Nothing is appended
/// when any stage fails.
pub fn run_turn<'s, S: Scalar>(
    session: &'s mut ChatSession,
    query: &str,
    backends: &Backends<'_, S>,
    knowledge: &KnowledgeBase<S>,
) -> Result<&'s ChatTurn, TurnError> {
    let budget = session.config.budget;
    let standalone = condense_question(&session.turns, query, backends.chat, &budget).at(Stage::Condense)?;

    let available = context_budget(&standalone, &budget).at(Stage::Retrieve)?;
    let retrieved = retrieve_context(
        &standalone,
        knowledge,
        backends.embedder,
        backends.cache,
        session.config.k_retrieve,
        available,
    )
    .at(Stage::Retrieve)?;

    let messages = assemble_prompt(&retrieved, &standalone, &budget).at(Stage::Assemble)?;
    let answer = complete_chat(&messages, &budget, backends.chat)
        .map_err(ChatError::from)
        .at(Stage::Generate)?;
    let citation_report = ground_citations(&answer, knowledge.citation_keys());

    session.turns.push(ChatTurn {
        user_query: query.to_string(),
        standalone_question: standalone,
        retrieved,
        answer,
        citation_report,
    });
    Ok(session.turns.last().expect("just pushed"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest_text, Corpus};
    use crate::embed::MockEmbedder;
    use crate::llm::ScriptedChatBackend;
    use crate::vindex::ChunkingConfig;

    fn corpus() -> Corpus {
        let mut c = Corpus::new();
        c.insert(
            ingest_text(
                "The Gaia-Enceladus merger built the inner halo.\n\nHalo stars show retrograde orbits.",
                "Helmi et al. (2018)",
                "H",
            )
            .unwrap(),
        )
        .unwrap();
        c.insert(
            ingest_text(
                "Disc kinematics vary with galactocentric radius.\n\nRidges appear in the velocity plane.",
                "Kawata et al. (2018)",
                "K",
            )
            .unwrap(),
        )
        .unwrap();
        c
    }

    fn kb(embedder: &MockEmbedder) -> KnowledgeBase<f64> {
        KnowledgeBase::build(
            &corpus(),
            embedder,
            &EmbeddingCache::new(),
            &ChunkingConfig::default(),
            16,
        )
        .unwrap()
    }

    fn turn(q: &str, a: &str) -> ChatTurn {
        ChatTurn {
            user_query: q.into(),
            standalone_question: q.into(),
            retrieved: RetrievedContext::default(),
            answer: a.into(),
            citation_report: CitationReport::default(),
        }
    }

    #[test]
    fn empty_history_is_identity_without_backend() {
        let mock = ScriptedChatBackend::new(Vec::<String>::new());
        let q = condense_question(&[], "What is GSE?", &mock, &TokenBudget::default()).unwrap();
        assert_eq!(q, "What is GSE?");
        assert_eq!(mock.call_count(), 0);
    }

    #[test]
    fn follow_up_is_condensed_through_backend() {
        let scripted = "What does the paper say about the Gaia-Enceladus halo?";
        let mock = ScriptedChatBackend::new([scripted]);
        let history = [turn("What is Gaia-Enceladus?", "A merger remnant.")];
        let q = condense_question(&history, "What about its halo?", &mock, &TokenBudget::default()).unwrap();
        assert_eq!(q, scripted);
        let sent = &mock.requests()[0];
        assert_eq!(sent[0].content, CONDENSE_SYSTEM_PROMPT);
        let prompt = &sent[1].content;
        assert!(prompt.starts_with(CONDENSE_INSTRUCTION));
        assert!(prompt.contains("Human: What is Gaia-Enceladus?\nAssistant: A merger remnant."));
        assert!(prompt.ends_with("Follow-up: What about its halo?"));
    }

    #[test]
    fn empty_query_is_rejected() {
        let mock = ScriptedChatBackend::new(["x"]);
        assert!(matches!(
            condense_question(&[], "", &mock, &TokenBudget::default()),
            Err(ChatError::EmptyQuery)
        ));
        assert!(matches!(
            condense_question(&[turn("a", "b")], "  ", &mock, &TokenBudget::default()),
            Err(ChatError::EmptyQuery)
        ));
    }

    #[test]
    fn oldest_history_is_dropped_to_fit() {
        let mock = ScriptedChatBackend::new(["standalone"]);
        let budget = TokenBudget::new(200, 20).unwrap();
        let history: Vec<_> = (0..10)
            .map(|i| turn(&format!("question {i} {}", "x".repeat(60)), &format!("answer {i}")))
            .collect();
        condense_question(&history, "and then?", &mock, &budget).unwrap();
        let sent = &mock.requests()[0];
        assert!(estimate_request_tokens(sent) <= budget.prompt_limit());
        let prompt = &sent[1].content;
        assert!(prompt.contains("question 9"));
        assert!(!prompt.contains("question 0"));
        let first_kept = (0..10).find(|i| prompt.contains(&format!("question {i} "))).unwrap();
        for i in first_kept..10 {
            assert!(prompt.contains(&format!("answer {i}")));
        }
    }

    #[test]
    fn retrieval_without_truncation_returns_k() {
        let embedder = MockEmbedder::new(64);
        let kb = kb(&embedder);
        let ctx = retrieve_context("halo", &kb, &embedder, &EmbeddingCache::new(), 4, 10_000).unwrap();
        assert_eq!(ctx.hits.len(), 4);
        for w in ctx.hits.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn retrieval_drops_lowest_ranked() {
        let embedder = MockEmbedder::new(64);
        let kb = kb(&embedder);
        let cache = EmbeddingCache::new();
        let full = retrieve_context("halo orbits", &kb, &embedder, &cache, 4, 10_000).unwrap();
        let cost = |h: &RetrievedHit| estimate_tokens(&context_block(&h.citation_key, &h.text));
        let two = cost(&full.hits[0]) + cost(&full.hits[1]);
        let ctx = retrieve_context("halo orbits", &kb, &embedder, &cache, 4, two).unwrap();
        assert_eq!(ctx.hits, full.hits[..2]);
        assert_eq!(ctx.total_token_estimate, two);

        let err = retrieve_context("halo orbits", &kb, &embedder, &cache, 4, cost(&full.hits[0]) - 1).unwrap_err();
        assert!(matches!(err, ChatError::ContextOverflow { .. }));
    }

    #[test]
    fn exact_chunk_text_ranks_first() {
        let embedder = MockEmbedder::new(64);
        let kb = kb(&embedder);
        let text = "Ridges appear in the velocity plane.";
        let ctx = retrieve_context(text, &kb, &embedder, &EmbeddingCache::new(), 4, 10_000).unwrap();
        assert_eq!(ctx.hits[0].text, text);
        assert!((ctx.hits[0].score - 1.0).abs() < 1e-9);
        assert_eq!(ctx.hits[0].citation_key, "Kawata et al. (2018)");
    }

    #[test]
    fn mismatched_embedder_is_rejected() {
        let kb = kb(&MockEmbedder::new(64));
        let other = MockEmbedder::new(32);
        assert!(matches!(
            retrieve_context("q", &kb, &other, &EmbeddingCache::new(), 4, 1000),
            Err(ChatError::EmbeddingModelMismatch { .. })
        ));
    }

    #[test]
    fn assembled_prompt_shape() {
        let ctx = RetrievedContext {
            hits: (0..2)
                .map(|i| RetrievedHit {
                    chunk_id: ChunkId::new(format!("k#{i}")),
                    score: 0.5,
                    doc_id: DocId::new("k"),
                    citation_key: "Kawata et al. (2018)".into(),
                    paragraph_span: (i, i),
                    text: format!("chunk {i}"),
                    token_estimate: 2,
                })
                .collect(),
            total_token_estimate: 0,
        };
        let msgs = assemble_prompt(&ctx, "What ridges?", &TokenBudget::default()).unwrap();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0].content, ANSWER_SYSTEM_PROMPT);
        assert!(msgs[0]
            .content
            .contains("Engage in insightful conversations with humans"));
        assert_eq!(
            msgs[1].content,
            "[Kawata et al. (2018)]\nchunk 0\n\n[Kawata et al. (2018)]\nchunk 1\n\nQuestion: What ridges?"
        );
        let (blocks, question) = parse_answer_prompt(&msgs[1].content).unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[1], ("Kawata et al. (2018)".to_string(), "chunk 1".to_string()));
        assert_eq!(question, "What ridges?");
        assert!(matches!(
            assemble_prompt(&RetrievedContext::default(), "q", &TokenBudget::default()),
            Err(ChatError::EmptyContext)
        ));
    }

    #[test]
    fn fresh_session_turn_grounds_citations() {
        let embedder = MockEmbedder::new(64);
        let kb = kb(&embedder);
        let chat = ScriptedChatBackend::new(["See Kawata et al. (2018)."]);
        let cache = EmbeddingCache::new();
        let backends = Backends {
            chat: &chat,
            embedder: &embedder,
            cache: &cache,
        };
        let mut session = ChatSession::new("s", "c", ChatConfig::default());
        let t = run_turn(&mut session, "What are the ridges?", &backends, &kb).unwrap();
        assert_eq!(t.standalone_question, "What are the ridges?");
        assert_eq!(t.citation_report.grounded, ["Kawata et al. (2018)"]);
        assert_eq!(chat.call_count(), 1);
        assert_eq!(session.turns().len(), 1);
    }

    #[test]
    fn failed_turn_appends_nothing() {
        let embedder = MockEmbedder::new(64);
        let kb = kb(&embedder);
        let chat = ScriptedChatBackend::new(["first answer", "standalone follow-up"]);
        let cache = EmbeddingCache::new();
        let backends = Backends {
            chat: &chat,
            embedder: &embedder,
            cache: &cache,
        };
        let mut session = ChatSession::new("s", "c", ChatConfig::default());
        run_turn(&mut session, "halo?", &backends, &kb).unwrap();
        // condense succeeds, generation runs out of script
        let err = run_turn(&mut session, "and the disc?", &backends, &kb).unwrap_err();
        assert_eq!(err.stage, Stage::Generate);
        assert!(matches!(err.source, ChatError::Llm(LlmError::ScriptExhausted)));
        assert_eq!(session.turns().len(), 1);
        assert_eq!(session.transcript_jsonl().lines().count(), 1);
    }

    #[test]
    fn turn_json_field_order_is_stable() {
        let json = serde_json::to_string(&turn("q", "a")).unwrap();
        let order = [
            "user_query",
            "standalone_question",
            "retrieved",
            "answer",
            "citation_report",
        ];
        let positions: Vec<_> = order.iter().map(|k| json.find(&format!("\"{k}\"")).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }
}

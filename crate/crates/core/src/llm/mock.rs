use std::collections::VecDeque;
use std::sync::Mutex;

use super::{BackendError, ChatBackend, ChatMessage};

/// Returns pre-scripted replies in FIFO order and logs every request.
///
/// Once the script is used up, calls fail with
/// [`BackendError::ScriptExhausted`].
#[derive(Debug, Default)]
pub struct ScriptedChatBackend {
    script: Mutex<VecDeque<Result<String, BackendError>>>,
    log: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ScriptedChatBackend {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_outcomes(replies.into_iter().map(|r| Ok(r.into())))
    }

    /// Script that may include failures.
    pub fn with_outcomes(outcomes: impl IntoIterator<Item = Result<String, BackendError>>) -> Self {
        ScriptedChatBackend {
            script: Mutex::new(outcomes.into_iter().collect()),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn push_reply(&self, reply: impl Into<String>) {
        self.script.lock().unwrap().push_back(Ok(reply.into()));
    }

    pub fn requests(&self) -> Vec<Vec<ChatMessage>> {
        self.log.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().unwrap().len()
    }
}

impl ChatBackend for ScriptedChatBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        // one lock order for both: script, then log
        let mut script = self.script.lock().unwrap();
        self.log.lock().unwrap().push(messages.to_vec());
        script.pop_front().unwrap_or(Err(BackendError::ScriptExhausted))
    }
}

/// Wraps any backend and logs the requests that reach it.
#[derive(Debug)]
pub struct RecordingChatBackend<B> {
    inner: B,
    log: Mutex<Vec<Vec<ChatMessage>>>,
}

impl<B: ChatBackend> RecordingChatBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingChatBackend {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<Vec<ChatMessage>> {
        self.log.lock().unwrap().clone()
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ChatBackend> ChatBackend for RecordingChatBackend<B> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        self.log.lock().unwrap().push(messages.to_vec());
        self.inner.complete(messages)
    }
}

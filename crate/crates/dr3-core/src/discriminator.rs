//! LLM-backed binary judge of whether an answer is on-topic for the
//! original question.

use crate::codec::{parse_step, CodecError, PromptTemplates, StepKind, StepPayload};
use crate::llm::{CompletionBackend, CompletionRequest, LlmError};
use crate::trace::{Judgment, Verdict};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("backend failure: {0}")]
    Backend(#[from] LlmError),
    #[error("prompt error: {0}")]
    Prompt(#[from] CodecError),
}

/// Judges whether `answer` is on-topic for `question`.
///
/// An empty or whitespace-only answer is off-topic by definition and
/// never reaches the backend. Unparseable model output is re-prompted
/// once and then defaults to on-topic with `fail_open` set, so the judge
/// never raises on malformed output: spurious correction loops cost more
/// than a missed off-topic answer.
pub fn judge(
    question: &str,
    answer: &str,
    backend: &dyn CompletionBackend,
    templates: &PromptTemplates,
) -> Result<Judgment, JudgeError> {
    if answer.trim().is_empty() {
        return Ok(Judgment {
            verdict: Verdict::OffTopic,
            thought: String::new(),
            raw: String::new(),
            fail_open: false,
        });
    }
    let prompt = templates.render_discriminator(question, answer)?;
    let request = CompletionRequest::new(prompt).with_stops(["\nQUESTION"]);
    let mut last_response = String::new();
    for _ in 0..2 {
        let response = backend.complete(&request)?;
        if let Ok(step) = parse_step(&response, StepKind::Judgment) {
            match step.payload {
                StepPayload::Judgment(judgment) => return Ok(judgment),
                other => unreachable!("judgment step carries {other:?}"),
            }
        }
        last_response = response;
    }
    Ok(Judgment {
        verdict: Verdict::OnTopic,
        thought: String::new(),
        raw: last_response,
        fail_open: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ScriptEntry, ScriptedBackend};

    fn templates() -> PromptTemplates {
        PromptTemplates::builtin()
    }

    #[test]
    fn date_answer_yes_case() {
        let backend = ScriptedBackend::new(vec![ScriptEntry::matching(
            "QUESTION: When was the Man Falls in Love born on?",
            "THOUGHT: The answer can be a date. \"July 5, 1984\" is a date. So the answer is YES.\nJUDGMENT: YES",
        )]);
        let judgment = judge(
            "When was the Man Falls in Love born on?",
            "July 5, 1984",
            &backend,
            &templates(),
        )
        .unwrap();
        assert_eq!(judgment.verdict, Verdict::OnTopic);
        assert!(!judgment.fail_open);
        assert_eq!(backend.consumed(), 1);
    }

    #[test]
    fn off_topic_case() {
        let backend = ScriptedBackend::new(vec![ScriptEntry::new(
            "THOUGHT: The answer should be one or more languages; Edinburgh is a city.\nJUDGMENT: NO",
        )]);
        let judgment = judge(
            "What languages did the son of Sacagawea speak?",
            "Edinburgh",
            &backend,
            &templates(),
        )
        .unwrap();
        assert_eq!(judgment.verdict, Verdict::OffTopic);
    }

    #[test]
    fn empty_answer_short_circuits_without_backend_call() {
        let backend = ScriptedBackend::new(vec![]);
        let judgment = judge("q?", "   ", &backend, &templates()).unwrap();
        assert_eq!(judgment.verdict, Verdict::OffTopic);
        assert!(!judgment.fail_open);
        assert_eq!(backend.consumed(), 0);
    }

    #[test]
    fn garbage_output_fails_open_after_exactly_two_calls() {
        let backend = ScriptedBackend::new(vec![
            ScriptEntry::new("nothing useful"),
            ScriptEntry::new("still nothing"),
        ]);
        let judgment = judge("q?", "some answer", &backend, &templates()).unwrap();
        assert_eq!(judgment.verdict, Verdict::OnTopic);
        assert!(judgment.fail_open);
        assert_eq!(judgment.raw, "still nothing");
        assert_eq!(backend.consumed(), 2);
    }

    #[test]
    fn recovers_on_second_attempt() {
        let backend = ScriptedBackend::new(vec![
            ScriptEntry::new("garbled"),
            ScriptEntry::new("THOUGHT: fine\nJUDGMENT: NO"),
        ]);
        let judgment = judge("q?", "a", &backend, &templates()).unwrap();
        assert_eq!(judgment.verdict, Verdict::OffTopic);
        assert!(!judgment.fail_open);
        assert_eq!(backend.consumed(), 2);
    }

    #[test]
    fn backend_failures_propagate() {
        let backend = ScriptedBackend::new(vec![]);
        let err = judge("q?", "a", &backend, &templates()).unwrap_err();
        assert!(matches!(err, JudgeError::Backend(_)));
    }
}

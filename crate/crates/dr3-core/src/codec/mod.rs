//! Codec between the model's labeled step text and domain types.
//!
//! The grammar is line-anchored: a label is recognized only at the start
//! of a line, as the label word, an optional 1-based index, and a colon
//! (`Finish` may open its bracket directly). Matching is case-insensitive.
//! When a label occurs more than once, the first occurrence wins and
//! trailing text is discarded.

mod persist;
mod templates;

pub use persist::{load_trace, save_trace};
pub use templates::{PromptTemplate, PromptTemplates};

use crate::trace::{Action, Judgment, Verdict};
use thiserror::Error;

/// Errors raised while parsing model output or rendering prompts.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("label {label:?} not found in model output")]
    LabelNotFound { label: &'static str },
    #[error("label {label:?} has an empty payload")]
    EmptyPayload { label: &'static str },
    #[error("unrecognized action: {0:?}")]
    MalformedAction(String),
    #[error("judgment is not YES/NO: {0:?}")]
    MalformedJudgment(String),
    #[error("missing input for prompt rendering: {0}")]
    MissingInput(String),
    #[error("trace schema violation: {0}")]
    SchemaViolation(String),
    #[error("template error: {0}")]
    Template(String),
}

/// The kind of step the agent expects to parse next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Decomposition,
    Task,
    Action,
    Conclusion,
    Composition,
    Finish,
    Judgment,
    Redecomposition,
}

/// Payload extracted for a parsed step.
#[derive(Debug, Clone, PartialEq)]
pub enum StepPayload {
    Text(String),
    Action(Action),
    Judgment(Judgment),
    Revision {
        analysis: String,
        advice: String,
        new_decomposition: String,
    },
}

/// One parsed labeled step.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedStep {
    pub kind: StepKind,
    pub index: Option<usize>,
    pub payload: StepPayload,
}

impl ParsedStep {
    /// The payload as plain text; panics on non-text payloads.
    pub fn text(&self) -> &str {
        match &self.payload {
            StepPayload::Text(t) => t,
            other => panic!("expected text payload, got {other:?}"),
        }
    }
}

/// Every label the codec recognizes as a line opener.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    Question,
    Decomposition,
    Task,
    Action,
    Observation,
    Conclusion,
    Composition,
    Finish,
    Thought,
    Judgment,
    Analysis,
    Advice,
    NewDecomposition,
}

const LABEL_WORDS: &[(Label, &str)] = &[
    (Label::Question, "question"),
    (Label::Decomposition, "decomposition"),
    (Label::Task, "task"),
    (Label::Action, "action"),
    (Label::Observation, "observation"),
    (Label::Conclusion, "conclusion"),
    (Label::Composition, "composition"),
    (Label::Finish, "finish"),
    (Label::Thought, "thought"),
    (Label::Judgment, "judgment"),
    (Label::Analysis, "analysis"),
    (Label::Advice, "advice"),
    (Label::NewDecomposition, "new decomposition"),
];

/// A recognized label line: the label, its optional index, and the text
/// that follows the separator on the same line.
struct LabelLine<'a> {
    label: Label,
    index: Option<usize>,
    rest: &'a str,
}

/// Tries to read a label at the start of `line`.
fn match_label_line(line: &str) -> Option<LabelLine<'_>> {
    let trimmed = line.trim_start();
    for (label, word) in LABEL_WORDS {
        if trimmed.len() < word.len() || !trimmed[..word.len()].eq_ignore_ascii_case(word) {
            continue;
        }
        let mut rest = &trimmed[word.len()..];
        // Reject partial-word hits such as "Tasks:".
        if rest
            .chars()
            .next()
            .is_some_and(|c| c.is_alphanumeric() && !c.is_ascii_digit())
        {
            continue;
        }
        rest = rest.trim_start();
        let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
        let index = if digits.is_empty() {
            None
        } else {
            rest = rest[digits.len()..].trim_start();
            digits.parse::<usize>().ok()
        };
        if let Some(after) = rest.strip_prefix(':') {
            return Some(LabelLine {
                label: *label,
                index,
                rest: after,
            });
        }
        // The "Finish[Answer]" form opens its bracket without a colon.
        if *label == Label::Finish && rest.starts_with('[') {
            return Some(LabelLine {
                label: *label,
                index,
                rest,
            });
        }
        return None;
    }
    None
}

fn label_name(kind: StepKind) -> &'static str {
    match kind {
        StepKind::Decomposition => "Decomposition",
        StepKind::Task => "Task",
        StepKind::Action => "Action",
        StepKind::Conclusion => "Conclusion",
        StepKind::Composition => "Composition",
        StepKind::Finish => "Finish",
        StepKind::Judgment => "JUDGMENT",
        StepKind::Redecomposition => "NEW DECOMPOSITION",
    }
}

fn target_label(kind: StepKind) -> Label {
    match kind {
        StepKind::Decomposition => Label::Decomposition,
        StepKind::Task => Label::Task,
        StepKind::Action => Label::Action,
        StepKind::Conclusion => Label::Conclusion,
        StepKind::Composition => Label::Composition,
        StepKind::Finish => Label::Finish,
        StepKind::Judgment => Label::Judgment,
        StepKind::Redecomposition => Label::NewDecomposition,
    }
}

/// Collects the payload for the label found at line `start`: the rest of
/// that line plus every following line up to the next recognized label.
fn collect_payload(lines: &[&str], start: usize, first: &str) -> String {
    let mut parts: Vec<&str> = vec![first];
    for line in &lines[start + 1..] {
        if match_label_line(line).is_some() {
            break;
        }
        parts.push(line);
    }
    let joined = parts.join("\n");
    joined.trim().to_string()
}

/// Finds the first line carrying `label` and returns its payload.
/// `require_index` rejects hits whose label has no numeric index.
fn find_section(text: &str, label: Label, require_index: bool) -> Option<(Option<usize>, String)> {
    let lines: Vec<&str> = text.lines().collect();
    for (pos, line) in lines.iter().enumerate() {
        if let Some(hit) = match_label_line(line) {
            if hit.label == label && (!require_index || hit.index.is_some()) {
                return Some((hit.index, collect_payload(&lines, pos, hit.rest)));
            }
        }
    }
    None
}

/// Parses an action string. Exactly three surface forms are accepted:
/// `Search[x]`, `Finish[x]`, and `Finish: [x]`. The payload is trimmed;
/// a search query must be non-empty.
pub fn parse_action(text: &str) -> Result<Action, CodecError> {
    let t = text.trim();
    let malformed = || CodecError::MalformedAction(text.to_string());
    let is_search = if t.len() >= 6 && t[..6].eq_ignore_ascii_case("search") {
        true
    } else if t.len() >= 6 && t[..6].eq_ignore_ascii_case("finish") {
        false
    } else {
        return Err(malformed());
    };
    let mut rest = t[6..].trim_start();
    // Only the finish form carries a colon.
    if let Some(after) = rest.strip_prefix(':') {
        if is_search {
            return Err(malformed());
        }
        rest = after.trim_start();
    }
    let inner = rest
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(malformed)?;
    let payload = inner.trim().to_string();
    if is_search {
        if payload.is_empty() {
            return Err(malformed());
        }
        Ok(Action::Search(payload))
    } else {
        Ok(Action::Finish(payload))
    }
}

/// Scans `text` for the step the agent expects and extracts its payload.
///
/// Task, Action and Conclusion labels must carry an index. The payload is
/// everything after the colon up to the next recognized label or the end
/// of the text. Judgment parsing maps YES/NO (case-insensitive) onto the
/// verdict and captures the THOUGHT section; Redecomposition parsing
/// extracts the ANALYSIS, ADVICE and NEW DECOMPOSITION sections.
pub fn parse_step(text: &str, expected: StepKind) -> Result<ParsedStep, CodecError> {
    let name = label_name(expected);
    match expected {
        StepKind::Judgment => {
            let (_, payload) = find_section(text, Label::Judgment, false)
                .ok_or(CodecError::LabelNotFound { label: name })?;
            if payload.is_empty() {
                return Err(CodecError::EmptyPayload { label: name });
            }
            let token: String = payload
                .split_whitespace()
                .next()
                .unwrap_or("")
                .chars()
                .filter(|c| c.is_alphanumeric())
                .collect();
            let verdict = if token.eq_ignore_ascii_case("yes") {
                Verdict::OnTopic
            } else if token.eq_ignore_ascii_case("no") {
                Verdict::OffTopic
            } else {
                return Err(CodecError::MalformedJudgment(payload));
            };
            let thought = find_section(text, Label::Thought, false)
                .map(|(_, p)| p)
                .unwrap_or_default();
            Ok(ParsedStep {
                kind: expected,
                index: None,
                payload: StepPayload::Judgment(Judgment {
                    verdict,
                    thought,
                    raw: text.to_string(),
                    fail_open: false,
                }),
            })
        }
        StepKind::Redecomposition => {
            let (_, new_decomposition) = find_section(text, Label::NewDecomposition, false)
                .ok_or(CodecError::LabelNotFound { label: name })?;
            if new_decomposition.is_empty() {
                return Err(CodecError::EmptyPayload { label: name });
            }
            let analysis = find_section(text, Label::Analysis, false)
                .map(|(_, p)| p)
                .unwrap_or_default();
            let advice = find_section(text, Label::Advice, false)
                .map(|(_, p)| p)
                .unwrap_or_default();
            Ok(ParsedStep {
                kind: expected,
                index: None,
                payload: StepPayload::Revision {
                    analysis,
                    advice,
                    new_decomposition,
                },
            })
        }
        StepKind::Action => {
            let (index, payload) = find_section(text, Label::Action, true)
                .ok_or(CodecError::LabelNotFound { label: name })?;
            if payload.is_empty() {
                return Err(CodecError::EmptyPayload { label: name });
            }
            Ok(ParsedStep {
                kind: expected,
                index,
                payload: StepPayload::Action(parse_action(&payload)?),
            })
        }
        StepKind::Finish => {
            let lines: Vec<&str> = text.lines().collect();
            for line in &lines {
                if let Some(hit) = match_label_line(line) {
                    if hit.label == Label::Finish {
                        let action = parse_action(line.trim())?;
                        let answer = match &action {
                            Action::Finish(a) => a.clone(),
                            Action::Search(_) => unreachable!("finish line parsed as search"),
                        };
                        return Ok(ParsedStep {
                            kind: expected,
                            index: hit.index,
                            payload: StepPayload::Text(answer),
                        });
                    }
                }
            }
            Err(CodecError::LabelNotFound { label: name })
        }
        _ => {
            let require_index = matches!(expected, StepKind::Task | StepKind::Conclusion);
            let (index, payload) = find_section(text, target_label(expected), require_index)
                .ok_or(CodecError::LabelNotFound { label: name })?;
            if payload.is_empty() {
                return Err(CodecError::EmptyPayload { label: name });
            }
            Ok(ParsedStep {
                kind: expected,
                index,
                payload: StepPayload::Text(payload),
            })
        }
    }
}

/// Scans a continuation completion for whichever comes first: the next
/// task opener or the composition label. Returns `None` when neither is
/// present.
pub(crate) fn first_continuation_label(text: &str) -> Option<StepKind> {
    for line in text.lines() {
        if let Some(hit) = match_label_line(line) {
            match hit.label {
                Label::Task if hit.index.is_some() => return Some(StepKind::Task),
                Label::Composition => return Some(StepKind::Composition),
                _ => {}
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_action_accepted_forms() {
        assert_eq!(
            parse_action("Search[Milhouse]").unwrap(),
            Action::search("Milhouse")
        );
        assert_eq!(
            parse_action("Finish: [Richard Nixon]").unwrap(),
            Action::finish("Richard Nixon")
        );
        assert_eq!(parse_action("Finish[yes]").unwrap(), Action::finish("yes"));
        assert_eq!(
            parse_action("  search[ spaced  query ]  ").unwrap(),
            Action::search("spaced  query")
        );
    }

    #[test]
    fn parse_action_rejects_everything_else() {
        for bad in [
            "Lookup[foo]",
            "Search[]",
            "Search[  ]",
            "Search: [foo]",
            "Search[foo",
            "Search foo]",
            "Finish foo",
            "Search[foo] trailing",
            "",
            "[foo]",
            "Searc[foo]",
        ] {
            assert!(parse_action(bad).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn parse_action_keeps_inner_brackets() {
        assert_eq!(
            parse_action("Search[foo [bar]]").unwrap(),
            Action::search("foo [bar]")
        );
    }

    #[test]
    fn parse_step_judgment_yes() {
        let step = parse_step("THOUGHT: ok\nJUDGMENT: YES", StepKind::Judgment).unwrap();
        match step.payload {
            StepPayload::Judgment(j) => {
                assert_eq!(j.verdict, Verdict::OnTopic);
                assert_eq!(j.thought, "ok");
                assert!(!j.fail_open);
            }
            other => panic!("unexpected payload {other:?}"),
        }
    }

    #[test]
    fn parse_step_judgment_lowercase_and_missing_thought() {
        let step = parse_step("judgment: yes", StepKind::Judgment).unwrap();
        match step.payload {
            StepPayload::Judgment(j) => {
                assert_eq!(j.verdict, Verdict::OnTopic);
                assert_eq!(j.thought, "");
            }
            other => panic!("unexpected payload {other:?}"),
        }
    }

    #[test]
    fn parse_step_judgment_garbage() {
        assert_eq!(
            parse_step("JUDGMENT: MAYBE", StepKind::Judgment),
            Err(CodecError::MalformedJudgment("MAYBE".into()))
        );
        assert_eq!(
            parse_step("nothing here", StepKind::Judgment),
            Err(CodecError::LabelNotFound { label: "JUDGMENT" })
        );
    }

    #[test]
    fn parse_step_conclusion_with_index() {
        let step = parse_step(
            "Conclusion 2: Milhouse was named after U.S. president Richard Nixon.",
            StepKind::Conclusion,
        )
        .unwrap();
        assert_eq!(step.index, Some(2));
        assert_eq!(
            step.text(),
            "Milhouse was named after U.S. president Richard Nixon."
        );
    }

    #[test]
    fn parse_step_empty_input() {
        assert_eq!(
            parse_step("", StepKind::Task),
            Err(CodecError::LabelNotFound { label: "Task" })
        );
    }

    #[test]
    fn parse_step_first_occurrence_wins() {
        let text = "Composition: first take\nComposition: second take";
        let step = parse_step(text, StepKind::Composition).unwrap();
        assert_eq!(step.text(), "first take");
    }

    #[test]
    fn parse_step_payload_stops_at_next_label() {
        let text = "Task 1: find the thing\nacross two lines\nAction 1: Search[thing]";
        let step = parse_step(text, StepKind::Task).unwrap();
        assert_eq!(step.text(), "find the thing\nacross two lines");
        let action = parse_step(text, StepKind::Action).unwrap();
        assert_eq!(action.payload, StepPayload::Action(Action::search("thing")));
        assert_eq!(action.index, Some(1));
    }

    #[test]
    fn parse_step_task_requires_index() {
        assert!(parse_step("Task: no index", StepKind::Task).is_err());
    }

    #[test]
    fn parse_step_finish_both_spellings() {
        let a = parse_step("Finish: [Richard Nixon]", StepKind::Finish).unwrap();
        assert_eq!(a.text(), "Richard Nixon");
        let b = parse_step("Finish[Richard Nixon]", StepKind::Finish).unwrap();
        assert_eq!(b.text(), "Richard Nixon");
    }

    #[test]
    fn parse_step_redecomposition_sections() {
        let text = "ANALYSIS: the target is a yes/no question\nADVICE: ask for yes or no\nNEW DECOMPOSITION: I need to find whether it is so.";
        let step = parse_step(text, StepKind::Redecomposition).unwrap();
        match step.payload {
            StepPayload::Revision {
                analysis,
                advice,
                new_decomposition,
            } => {
                assert_eq!(analysis, "the target is a yes/no question");
                assert_eq!(advice, "ask for yes or no");
                assert_eq!(new_decomposition, "I need to find whether it is so.");
            }
            other => panic!("unexpected payload {other:?}"),
        }
    }

    #[test]
    fn parse_step_redecomposition_requires_new_decomposition() {
        let text = "ANALYSIS: something\nADVICE: something else";
        assert_eq!(
            parse_step(text, StepKind::Redecomposition),
            Err(CodecError::LabelNotFound {
                label: "NEW DECOMPOSITION"
            })
        );
    }

    #[test]
    fn label_matching_is_word_anchored() {
        assert!(match_label_line("Tasks: not a task").is_none());
        assert!(match_label_line("  Task 4: indented").is_some());
        assert!(match_label_line("mid Task 1: text").is_none());
    }

    #[test]
    fn continuation_label_picks_first_hit() {
        let text = "Task 2: next step\nComposition: too late";
        assert_eq!(first_continuation_label(text), Some(StepKind::Task));
        let text = "Composition: done\nTask 9: ignored";
        assert_eq!(first_continuation_label(text), Some(StepKind::Composition));
        assert_eq!(first_continuation_label("free text"), None);
    }
}

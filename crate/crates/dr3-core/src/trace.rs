//! Domain types for the reasoning chain and its correction state.
//!
//! A [`ReasoningChain`] records one solving attempt: the question, its
//! decomposition into sub-questions, each sub-question's task / action /
//! observation / conclusion, the composition that integrates the
//! conclusions, and the final answer. Chains are immutable: every
//! operation returns a new value, so chains can be shared freely across
//! threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by chain construction and rendering.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    /// A sub-question index does not continue the chain.
    #[error("sub-question index {got} does not follow {expected}")]
    IndexGap { expected: usize, got: usize },
    /// Appending would exceed the configured sub-question budget.
    #[error("chain already holds the maximum of {max} sub-questions")]
    BudgetExceeded { max: usize },
    /// The requested context stage does not exist and is not next.
    #[error("stage {stage} is out of range for this chain")]
    StageOutOfRange { stage: String },
    /// A structural invariant does not hold.
    #[error("invalid chain: {0}")]
    Invalid(String),
}

/// An agent action: retrieve passages for a query, or finish with an answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum Action {
    Search(String),
    Finish(String),
}

impl Action {
    pub fn search(query: impl Into<String>) -> Self {
        Action::Search(query.into())
    }

    pub fn finish(answer: impl Into<String>) -> Self {
        Action::Finish(answer.into())
    }

    pub fn is_search(&self) -> bool {
        matches!(self, Action::Search(_))
    }

    /// The search query, when this is a search action.
    pub fn query(&self) -> Option<&str> {
        match self {
            Action::Search(q) => Some(q),
            Action::Finish(_) => None,
        }
    }

    /// Renders the action the way it appears on an `Action i:` line.
    pub fn render(&self) -> String {
        match self {
            Action::Search(q) => format!("Search[{q}]"),
            Action::Finish(a) => format!("Finish[{a}]"),
        }
    }
}

/// A retrieved passage together with its position in the ranking that
/// produced it. `rank` is 0-based; `score` is the retriever's relevance
/// score, non-increasing with rank within one result list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub title: String,
    pub body: String,
    pub rank: usize,
    pub score: f64,
}

/// One reasoning hop: a planned task, the action taken, the observation
/// received from the environment, and the conclusion drawn from it.
///
/// `passage` records which ranked passage produced the observation; it is
/// absent for finish actions and for searches that returned nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubQuestion {
    /// 1-based position within the chain.
    pub index: usize,
    pub task: String,
    pub action: Action,
    pub observation: String,
    pub passage: Option<Passage>,
    pub conclusion: String,
}

/// Stage marker for [`ReasoningChain::context_view`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextStage {
    /// Render up to the `Decomposition:` cue.
    Decomposition,
    /// Render completed sub-questions before `i` and end with the
    /// `Task i:` cue.
    SubQuestion(usize),
    /// Render everything completed so far with no trailing cue, leaving
    /// the model free to open the next sub-question or the composition.
    NextStep,
    /// Render everything completed so far, then any hint lines, then the
    /// `Composition:` cue.
    Composition,
}

/// The full record of one solving attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningChain {
    pub question: String,
    pub decomposition: String,
    pub sub_questions: Vec<SubQuestion>,
    pub composition: Option<String>,
    /// Rejected answers, rendered as "The answer is not [x]." lines
    /// before every regenerated composition. Entries are distinct.
    pub hint: Vec<String>,
    pub final_answer: Option<String>,
    /// True when the sub-question budget ran out and the answer was
    /// coerced rather than emitted by the model.
    pub forced_termination: bool,
}

impl ReasoningChain {
    pub fn new(question: impl Into<String>) -> Self {
        ReasoningChain {
            question: question.into(),
            decomposition: String::new(),
            sub_questions: Vec::new(),
            composition: None,
            hint: Vec::new(),
            final_answer: None,
            forced_termination: false,
        }
    }

    /// Number of completed sub-questions.
    pub fn len(&self) -> usize {
        self.sub_questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sub_questions.is_empty()
    }

    /// Returns a new chain with `sq` appended. The sub-question must carry
    /// the next consecutive index and the chain must be under budget.
    pub fn append_sub_question(
        &self,
        sq: SubQuestion,
        max_sub_questions: usize,
    ) -> Result<Self, TraceError> {
        if self.sub_questions.len() >= max_sub_questions {
            return Err(TraceError::BudgetExceeded {
                max: max_sub_questions,
            });
        }
        let expected = self.sub_questions.len() + 1;
        if sq.index != expected {
            return Err(TraceError::IndexGap {
                expected,
                got: sq.index,
            });
        }
        let mut next = self.clone();
        next.sub_questions.push(sq);
        next.validate()?;
        Ok(next)
    }

    /// Returns a new chain with `answer` added to the hint list, unless it
    /// is already present.
    pub fn with_hint(&self, answer: impl Into<String>) -> Self {
        let answer = answer.into();
        let mut next = self.clone();
        if !next.hint.contains(&answer) {
            next.hint.push(answer);
        }
        next
    }

    /// Checks every structural invariant of the chain.
    pub fn validate(&self) -> Result<(), TraceError> {
        for (pos, sq) in self.sub_questions.iter().enumerate() {
            if sq.index != pos + 1 {
                return Err(TraceError::Invalid(format!(
                    "sub-question at position {} has index {}",
                    pos + 1,
                    sq.index
                )));
            }
            match &sq.action {
                Action::Search(q) => {
                    if q.trim().is_empty() {
                        return Err(TraceError::Invalid(format!(
                            "sub-question {} has an empty search query",
                            sq.index
                        )));
                    }
                    if sq.observation.is_empty() {
                        return Err(TraceError::Invalid(format!(
                            "sub-question {} has a search action but no observation",
                            sq.index
                        )));
                    }
                }
                Action::Finish(a) => {
                    if a.is_empty() && !self.forced_termination {
                        return Err(TraceError::Invalid(format!(
                            "sub-question {} finishes with an empty answer outside forced termination",
                            sq.index
                        )));
                    }
                }
            }
        }
        if self.final_answer.is_some() && self.composition.is_none() && !self.forced_termination {
            return Err(TraceError::Invalid(
                "final answer without composition or forced termination".into(),
            ));
        }
        for (i, h) in self.hint.iter().enumerate() {
            if self.hint[..i].contains(h) {
                return Err(TraceError::Invalid(format!("duplicate hint entry {h:?}")));
            }
        }
        Ok(())
    }

    /// Renders the interaction history fed to the policy: the question,
    /// the decomposition, every completed sub-question in order, and the
    /// cue for the stage about to be generated. Hint lines appear
    /// immediately before the `Composition:` label.
    ///
    /// The rendering is a prefix morphism: for `i < j`, the view up to
    /// sub-question `i` is a literal prefix of the view up to `j`.
    pub fn context_view(&self, upto: ContextStage) -> Result<String, TraceError> {
        let n = self.sub_questions.len();
        let mut out = String::new();
        out.push_str("Question: ");
        out.push_str(&self.question);
        out.push('\n');
        if upto == ContextStage::Decomposition {
            out.push_str("Decomposition:");
            return Ok(out);
        }
        out.push_str("Decomposition: ");
        out.push_str(&self.decomposition);
        out.push('\n');

        let completed = match upto {
            ContextStage::SubQuestion(i) => {
                if i == 0 || i > n + 1 {
                    return Err(TraceError::StageOutOfRange {
                        stage: format!("sub-question {i}"),
                    });
                }
                i - 1
            }
            _ => n,
        };
        for sq in &self.sub_questions[..completed] {
            out.push_str(&format!("Task {}: {}\n", sq.index, sq.task));
            out.push_str(&format!("Action {}: {}\n", sq.index, sq.action.render()));
            out.push_str(&format!("Observation {}: {}\n", sq.index, sq.observation));
            out.push_str(&format!("Conclusion {}: {}\n", sq.index, sq.conclusion));
        }
        match upto {
            ContextStage::Decomposition => unreachable!(),
            ContextStage::SubQuestion(i) => {
                out.push_str(&format!("Task {i}:"));
            }
            ContextStage::NextStep => {
                for h in &self.hint {
                    out.push_str(&format!("The answer is not [{h}].\n"));
                }
            }
            ContextStage::Composition => {
                for h in &self.hint {
                    out.push_str(&format!("The answer is not [{h}].\n"));
                }
                out.push_str("Composition:");
            }
        }
        Ok(out)
    }
}

/// Discriminator verdict over a (question, answer) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    OnTopic,
    OffTopic,
}

/// A discriminator judgment: the verdict plus the model's reasoning text.
/// `fail_open` marks verdicts that were defaulted to on-topic because the
/// model output could not be parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub verdict: Verdict,
    pub thought: String,
    pub raw: String,
    pub fail_open: bool,
}

impl Judgment {
    pub fn is_on_topic(&self) -> bool {
        self.verdict == Verdict::OnTopic
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if self.fail_open && self.verdict != Verdict::OnTopic {
            return Err(TraceError::Invalid(
                "fail-open judgment must default to on-topic".into(),
            ));
        }
        Ok(())
    }
}

/// Which corrector stage produced a revision attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CorrectionStage {
    ReCompose,
    ReSolve {
        sub_index: usize,
        replacement_number: usize,
    },
    ReDecompose,
}

impl CorrectionStage {
    fn order(&self) -> u8 {
        match self {
            CorrectionStage::ReCompose => 0,
            CorrectionStage::ReSolve { .. } => 1,
            CorrectionStage::ReDecompose => 2,
        }
    }
}

/// One correction attempt: the stage, the answer it tried to replace, the
/// answer it produced, and the discriminator's verdict on the new answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    pub stage: CorrectionStage,
    pub ans_old: String,
    pub ans_new: String,
    pub verdict: Judgment,
}

/// Ordered record of the correction attempts made for one question.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrectionTrace {
    pub records: Vec<CorrectionRecord>,
    /// True when every stage was tried without an on-topic answer.
    pub exhausted: bool,
}

impl CorrectionTrace {
    /// Checks the structural invariants: stage order is non-decreasing,
    /// re-solve walks sub-question indices backwards, at most one
    /// re-compose and one re-decompose record exist, and (when `t_d` is
    /// known) no sub-question exceeds its replacement budget.
    pub fn validate(&self, t_d: Option<usize>) -> Result<(), TraceError> {
        let mut last_order = 0u8;
        let mut last_sub_index = usize::MAX;
        let mut n_recompose = 0usize;
        let mut n_redecompose = 0usize;
        let mut per_index: std::collections::HashMap<usize, usize> = Default::default();
        for rec in &self.records {
            rec.verdict.validate()?;
            let order = rec.stage.order();
            if order < last_order {
                return Err(TraceError::Invalid("correction stages out of order".into()));
            }
            last_order = order;
            match &rec.stage {
                CorrectionStage::ReCompose => n_recompose += 1,
                CorrectionStage::ReDecompose => n_redecompose += 1,
                CorrectionStage::ReSolve {
                    sub_index,
                    replacement_number,
                } => {
                    if *sub_index == 0 || *replacement_number == 0 {
                        return Err(TraceError::Invalid(
                            "re-solve record with zero index".into(),
                        ));
                    }
                    if *sub_index > last_sub_index {
                        return Err(TraceError::Invalid(
                            "re-solve records must walk sub-questions backwards".into(),
                        ));
                    }
                    last_sub_index = *sub_index;
                    let count = per_index.entry(*sub_index).or_insert(0);
                    *count += 1;
                    if let Some(t_d) = t_d {
                        if *count > t_d || *replacement_number > t_d {
                            return Err(TraceError::Invalid(format!(
                                "sub-question {sub_index} exceeded the replacement budget"
                            )));
                        }
                    }
                }
            }
        }
        if n_recompose > 1 || n_redecompose > 1 {
            return Err(TraceError::Invalid(
                "at most one re-compose and one re-decompose record allowed".into(),
            ));
        }
        Ok(())
    }
}

/// Runtime limits for the agent and the corrector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Maximum passage replacements per sub-question during re-solve.
    pub t_d: usize,
    /// Maximum consecutive sub-questions per attempt.
    pub max_sub_questions: usize,
    /// Exemplars included in the re-decompose prompt.
    pub redecompose_shots: usize,
    /// Transport-level retries for the HTTP completion backend.
    pub retry_limit: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            t_d: 3,
            max_sub_questions: 7,
            redecompose_shots: 6,
            retry_limit: 2,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), TraceError> {
        if self.t_d == 0 || self.max_sub_questions == 0 || self.redecompose_shots == 0 {
            return Err(TraceError::Invalid(
                "t_d, max_sub_questions and redecompose_shots must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

//! The step-by-step solving loop: decomposition, task / action /
//! observation / conclusion sub-questions, then composition and a final
//! answer. Runs can also be resumed from any stage, which is how the
//! corrector revises a chain.

use crate::codec::{
    first_continuation_label, parse_step, CodecError, PromptTemplates, StepKind, StepPayload,
};
use crate::llm::{CompletionBackend, CompletionRequest, LlmError};
use crate::retrieval::{RetrievalError, Retriever};
use crate::trace::{
    Action, ContextStage, Passage, ReasoningChain, RunConfig, SubQuestion, TraceError,
};
use thiserror::Error;

/// Observation text recorded when a search returns nothing, so the model
/// can see the failure and re-plan.
pub const NO_RESULTS: &str = "No results found.";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("backend failure: {0}")]
    Backend(#[from] LlmError),
    #[error("retriever failure: {0}")]
    Retriever(#[from] RetrievalError),
    #[error("parse failure at {stage} after one re-prompt: {source}")]
    Parse {
        stage: &'static str,
        source: CodecError,
    },
    #[error("invalid resume point: {0}")]
    ResumePointInvalid(String),
    #[error("chain error: {0}")]
    Chain(#[from] TraceError),
    #[error("prompt error: {0}")]
    Prompt(CodecError),
}

/// Where to restart a chain.
#[derive(Debug, Clone)]
pub enum ResumePoint {
    /// Discard the composition and final answer, regenerate them with the
    /// current hint list.
    Composition,
    /// Truncate everything after sub-question `index`, keep its task and
    /// action, replace its observation with `passage`, and regenerate the
    /// rest of the chain.
    SubQuestion { index: usize, passage: Passage },
    /// Replace the decomposition and regenerate the whole chain.
    Decomposition { text: String },
}

/// A finished run: the chain and the answer extracted from it.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutcome {
    pub chain: ReasoningChain,
    pub answer: String,
}

enum Continuation {
    NextTask { task: String, action: Action },
    Composed { composition: String, answer: String },
}

/// The solving loop over a backend, a retriever and the prompt templates.
pub struct Agent<'a> {
    pub backend: &'a dyn CompletionBackend,
    pub retriever: &'a dyn Retriever,
    pub templates: &'a PromptTemplates,
    pub config: &'a RunConfig,
}

impl<'a> Agent<'a> {
    pub fn new(
        backend: &'a dyn CompletionBackend,
        retriever: &'a dyn Retriever,
        templates: &'a PromptTemplates,
        config: &'a RunConfig,
    ) -> Self {
        Agent {
            backend,
            retriever,
            templates,
            config,
        }
    }

    /// Solves a question from scratch.
    pub fn run(&self, question: &str) -> Result<AgentOutcome, AgentError> {
        if question.trim().is_empty() {
            return Err(AgentError::EmptyQuestion);
        }
        let mut chain = ReasoningChain::new(question);
        chain.decomposition = self.generate_decomposition(&chain)?;
        self.drive(chain)
    }

    /// Restarts a chain from the given point and regenerates everything
    /// after it. The sub-question budget applies to the regenerated chain
    /// as usual.
    pub fn resume(
        &self,
        chain: &ReasoningChain,
        from: ResumePoint,
    ) -> Result<AgentOutcome, AgentError> {
        match from {
            ResumePoint::Composition => {
                let mut base = chain.clone();
                base.composition = None;
                base.final_answer = None;
                let (composition, answer) = self.cued_composition(&base)?;
                base.composition = Some(composition);
                base.final_answer = Some(answer.clone());
                base.validate()?;
                Ok(AgentOutcome {
                    chain: base,
                    answer,
                })
            }
            ResumePoint::SubQuestion { index, passage } => {
                if index == 0 || index > chain.len() {
                    return Err(AgentError::ResumePointInvalid(format!(
                        "sub-question {index} does not exist (chain has {})",
                        chain.len()
                    )));
                }
                let kept = &chain.sub_questions[index - 1];
                if !kept.action.is_search() {
                    return Err(AgentError::ResumePointInvalid(format!(
                        "sub-question {index} has no search action to re-solve"
                    )));
                }
                let mut base = chain.clone();
                base.sub_questions.truncate(index - 1);
                base.composition = None;
                base.final_answer = None;
                base.forced_termination = false;
                let conclusion =
                    self.cued_conclusion(&base, index, &kept.task, &kept.action, &passage.body)?;
                let revised = SubQuestion {
                    index,
                    task: kept.task.clone(),
                    action: kept.action.clone(),
                    observation: passage.body.clone(),
                    passage: Some(passage),
                    conclusion,
                };
                let base = base.append_sub_question(revised, self.config.max_sub_questions)?;
                self.drive(base)
            }
            ResumePoint::Decomposition { text } => {
                let mut base = ReasoningChain::new(chain.question.clone());
                base.hint = chain.hint.clone();
                base.decomposition = text;
                self.drive(base)
            }
        }
    }

    /// Runs the sub-question loop until the model composes an answer or
    /// the budget forces one.
    fn drive(&self, mut chain: ReasoningChain) -> Result<AgentOutcome, AgentError> {
        if chain.is_empty() {
            let (task, action) = self.cued_task_action(&chain, 1)?;
            chain = self.execute_sub_question(chain, 1, task, action)?;
        }
        loop {
            if chain.len() >= self.config.max_sub_questions {
                return self.force_composition(chain);
            }
            match self.continuation(&chain)? {
                Continuation::NextTask { task, action } => {
                    let index = chain.len() + 1;
                    chain = self.execute_sub_question(chain, index, task, action)?;
                }
                Continuation::Composed {
                    composition,
                    answer,
                } => {
                    chain.composition = Some(composition);
                    chain.final_answer = Some(answer.clone());
                    chain.validate()?;
                    return Ok(AgentOutcome { chain, answer });
                }
            }
        }
    }

    /// Issues one completion and parses it, re-prompting the same stage
    /// once before giving up.
    fn complete_stage<T>(
        &self,
        prompt: &str,
        stops: &[&str],
        stage: &'static str,
        parse: impl Fn(&str) -> Result<T, CodecError>,
    ) -> Result<T, AgentError> {
        let request = CompletionRequest::new(prompt).with_stops(stops.iter().copied());
        let mut last_err = None;
        for _ in 0..2 {
            let response = self.backend.complete(&request)?;
            match parse(&response) {
                Ok(value) => return Ok(value),
                Err(e) => last_err = Some(e),
            }
        }
        Err(AgentError::Parse {
            stage,
            source: last_err.expect("parse attempted"),
        })
    }

    fn render(&self, chain: &ReasoningChain, upto: ContextStage) -> Result<String, AgentError> {
        self.templates
            .render_react_plus(chain, upto)
            .map_err(AgentError::Prompt)
    }

    fn generate_decomposition(&self, chain: &ReasoningChain) -> Result<String, AgentError> {
        let prompt = self.render(chain, ContextStage::Decomposition)?;
        self.complete_stage(&prompt, &["\nTask"], "decomposition", |resp| {
            let step = parse_step(&format!("Decomposition:{resp}"), StepKind::Decomposition)?;
            Ok(step.text().to_string())
        })
    }

    /// First sub-question: the prompt ends with the `Task 1:` cue and the
    /// completion is expected to carry the task text and its action.
    fn cued_task_action(
        &self,
        chain: &ReasoningChain,
        index: usize,
    ) -> Result<(String, Action), AgentError> {
        let prompt = self.render(chain, ContextStage::SubQuestion(index))?;
        self.complete_stage(&prompt, &["\nObservation"], "task", move |resp| {
            let full = format!("Task {index}:{resp}");
            parse_task_action(&full, index)
        })
    }

    /// After each conclusion the model is free to open the next task or
    /// to compose; nothing is cued.
    fn continuation(&self, chain: &ReasoningChain) -> Result<Continuation, AgentError> {
        let prompt = self.render(chain, ContextStage::NextStep)?;
        let next_index = chain.len() + 1;
        self.complete_stage(&prompt, &["\nObservation"], "continuation", move |resp| {
            match first_continuation_label(resp) {
                Some(StepKind::Composition) => {
                    let (composition, answer) = parse_composition_finish(resp)?;
                    Ok(Continuation::Composed {
                        composition,
                        answer,
                    })
                }
                Some(StepKind::Task) => {
                    let (task, action) = parse_task_action(resp, next_index)?;
                    Ok(Continuation::NextTask { task, action })
                }
                _ => Err(CodecError::LabelNotFound { label: "Task" }),
            }
        })
    }

    fn execute_sub_question(
        &self,
        chain: ReasoningChain,
        index: usize,
        task: String,
        action: Action,
    ) -> Result<ReasoningChain, AgentError> {
        let query = action.query().expect("task actions are searches");
        let (observation, passage) = self.observe(query)?;
        let conclusion = self.cued_conclusion(&chain, index, &task, &action, &observation)?;
        let sq = SubQuestion {
            index,
            task,
            action,
            observation,
            passage,
            conclusion,
        };
        Ok(chain.append_sub_question(sq, self.config.max_sub_questions)?)
    }

    fn observe(&self, query: &str) -> Result<(String, Option<Passage>), AgentError> {
        match self.retriever.passage_at(query, 0) {
            Ok(p) => Ok((p.body.clone(), Some(p))),
            Err(RetrievalError::RankOutOfRange { .. }) => Ok((NO_RESULTS.to_string(), None)),
            Err(e) => Err(AgentError::Retriever(e)),
        }
    }

    fn cued_conclusion(
        &self,
        chain: &ReasoningChain,
        index: usize,
        task: &str,
        action: &Action,
        observation: &str,
    ) -> Result<String, AgentError> {
        let prefix = self.render(chain, ContextStage::SubQuestion(index))?;
        let prompt = format!(
            "{prefix} {task}\nAction {index}: {}\nObservation {index}: {observation}\nConclusion {index}:",
            action.render()
        );
        self.complete_stage(
            &prompt,
            &["\nTask", "\nComposition"],
            "conclusion",
            move |resp| {
                let full = format!("Conclusion {index}:{resp}");
                let step = parse_step(&full, StepKind::Conclusion)?;
                Ok(step.text().to_string())
            },
        )
    }

    /// Composition with the `Composition:` cue, used when resuming and
    /// when the budget forces termination.
    fn cued_composition(&self, chain: &ReasoningChain) -> Result<(String, String), AgentError> {
        let prompt = self.render(chain, ContextStage::Composition)?;
        self.complete_stage(&prompt, &["\nQuestion", "\nTask"], "composition", |resp| {
            parse_composition_finish(&format!("Composition:{resp}"))
        })
    }

    /// Budget exhausted: force a composition and finish. If the model
    /// still does not produce a parseable finish, the answer is coerced to
    /// the empty string.
    fn force_composition(&self, mut chain: ReasoningChain) -> Result<AgentOutcome, AgentError> {
        chain.forced_termination = true;
        let prompt = self.render(&chain, ContextStage::Composition)?;
        let request = CompletionRequest::new(&prompt).with_stops(["\nQuestion", "\nTask"]);
        let mut composition = None;
        let mut answer = None;
        for _ in 0..2 {
            let response = self.backend.complete(&request)?;
            let full = format!("Composition:{response}");
            if composition.is_none() {
                if let Ok(step) = parse_step(&full, StepKind::Composition) {
                    composition = Some(step.text().to_string());
                }
            }
            if let Ok(step) = parse_step(&full, StepKind::Finish) {
                answer = Some(step.text().to_string());
            }
            if composition.is_some() && answer.is_some() {
                break;
            }
        }
        let answer = answer.unwrap_or_default();
        chain.composition = composition;
        chain.final_answer = Some(answer.clone());
        chain.validate()?;
        Ok(AgentOutcome { chain, answer })
    }
}

fn parse_task_action(text: &str, expected_index: usize) -> Result<(String, Action), CodecError> {
    let task = parse_step(text, StepKind::Task)?;
    if task.index != Some(expected_index) {
        return Err(CodecError::LabelNotFound { label: "Task" });
    }
    let action_step = parse_step(text, StepKind::Action)?;
    if action_step.index != Some(expected_index) {
        return Err(CodecError::LabelNotFound { label: "Action" });
    }
    match action_step.payload {
        StepPayload::Action(action @ Action::Search(_)) => Ok((task.text().to_string(), action)),
        StepPayload::Action(Action::Finish(_)) => Err(CodecError::MalformedAction(
            "finish is not valid at the task stage".into(),
        )),
        other => unreachable!("action step carries {other:?}"),
    }
}

fn parse_composition_finish(text: &str) -> Result<(String, String), CodecError> {
    let composition = parse_step(text, StepKind::Composition)?;
    let finish = parse_step(text, StepKind::Finish)?;
    let answer = finish.text().to_string();
    if answer.is_empty() {
        return Err(CodecError::EmptyPayload { label: "Finish" });
    }
    Ok((composition.text().to_string(), answer))
}

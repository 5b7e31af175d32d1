//! The correction pipeline: on an off-topic verdict, revise the chain in
//! three stages — re-compose, re-solve, re-decompose — until the judge
//! approves an answer or every stage is exhausted.
//!
//! The stage order mirrors the chain's own reasoning order in reverse:
//! the composition is regenerated first (with rejected answers fed back
//! as hints), then passages are replaced per sub-question walking from
//! the last sub-question to the first (at most `t_d` replacements each),
//! and finally the decomposition is rewritten and the chain rerun.

use crate::agent::{Agent, AgentError, ResumePoint};
use crate::codec::{parse_step, StepKind, StepPayload};
use crate::discriminator::{judge, JudgeError};
use crate::llm::CompletionRequest;
use crate::retrieval::RetrievalError;
use crate::trace::{
    CorrectionRecord, CorrectionStage, CorrectionTrace, Judgment, ReasoningChain, Verdict,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorrectError {
    #[error("the caller's answer was not judged off-topic")]
    NotOffTopic,
}

/// A failure that aborts one correction stage. The pipeline records the
/// stage as exhausted and moves on.
#[derive(Debug, Error)]
pub enum StageFailure {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error("stage precondition: {0}")]
    Precondition(String),
}

/// Coarse stage identifier, also used for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionStageKind {
    ReCompose,
    ReSolve,
    ReDecompose,
}

impl CorrectionStageKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CorrectionStageKind::ReCompose => "re_compose",
            CorrectionStageKind::ReSolve => "re_solve",
            CorrectionStageKind::ReDecompose => "re_decompose",
        }
    }
}

/// One revision attempt produced by a stage.
#[derive(Debug, Clone)]
pub struct StageAttempt {
    pub stage: CorrectionStage,
    pub answer: String,
    pub chain: ReasoningChain,
    pub verdict: Judgment,
}

/// Result of a full correction pass.
#[derive(Debug, Clone)]
pub struct CorrectionOutcome {
    /// The first on-topic answer, or the most recent answer on exhaustion.
    pub answer: String,
    pub chain: ReasoningChain,
    pub trace: CorrectionTrace,
    /// The last stage that was entered.
    pub stage_reached: CorrectionStageKind,
}

/// Regenerates the composition once with `ans_old` added to the hint
/// list, and judges the new answer.
pub fn re_compose(
    agent: &Agent,
    question: &str,
    chain: &ReasoningChain,
    ans_old: &str,
) -> Result<StageAttempt, StageFailure> {
    if chain.composition.is_none() {
        return Err(StageFailure::Precondition(
            "chain has no composition stage".into(),
        ));
    }
    let base = chain.with_hint(ans_old);
    let outcome = agent.resume(&base, ResumePoint::Composition)?;
    let verdict = judge(question, &outcome.answer, agent.backend, agent.templates)?;
    Ok(StageAttempt {
        stage: CorrectionStage::ReCompose,
        answer: outcome.answer,
        chain: outcome.chain,
        verdict,
    })
}

/// Outcome of the re-solve stage: the attempts made (in order), the base
/// chain with every rejected answer added to its hints, and the failure
/// that aborted the stage, if any.
pub struct ReSolveOutcome {
    pub attempts: Vec<StageAttempt>,
    pub base: ReasoningChain,
    pub failure: Option<StageFailure>,
}

impl ReSolveOutcome {
    fn succeeded(&self) -> bool {
        self.attempts
            .last()
            .is_some_and(|att| att.verdict.is_on_topic())
    }
}

/// Walks sub-questions backwards from the last to the first, replacing
/// each search observation with the next-ranked passage for the original
/// query, up to `t_d` replacements per sub-question. Sub-questions
/// without a search action (or without a recorded passage) are skipped;
/// running out of ranked passages ends the replacements for that
/// sub-question only. Returns as soon as a new answer is judged on-topic.
pub fn re_solve(agent: &Agent, question: &str, base: ReasoningChain) -> ReSolveOutcome {
    let mut outcome = ReSolveOutcome {
        attempts: Vec::new(),
        base,
        failure: None,
    };
    for position in (1..=outcome.base.len()).rev() {
        let sq = outcome.base.sub_questions[position - 1].clone();
        let Some(base_passage) = &sq.passage else {
            continue;
        };
        let Some(query) = sq.action.query() else {
            continue;
        };
        let base_rank = base_passage.rank;
        for replacement in 1..=agent.config.t_d {
            let passage = match agent.retriever.passage_at(query, base_rank + replacement) {
                Ok(p) => p,
                Err(RetrievalError::RankOutOfRange { .. }) => break,
                Err(e) => {
                    outcome.failure = Some(StageFailure::Agent(AgentError::Retriever(e)));
                    return outcome;
                }
            };
            let resumed = match agent.resume(
                &outcome.base,
                ResumePoint::SubQuestion {
                    index: position,
                    passage,
                },
            ) {
                Ok(r) => r,
                Err(e) => {
                    outcome.failure = Some(StageFailure::Agent(e));
                    return outcome;
                }
            };
            let verdict = match judge(question, &resumed.answer, agent.backend, agent.templates) {
                Ok(v) => v,
                Err(e) => {
                    outcome.failure = Some(StageFailure::Judge(e));
                    return outcome;
                }
            };
            let on_topic = verdict.is_on_topic();
            if !on_topic {
                outcome.base = outcome.base.with_hint(&resumed.answer);
            }
            outcome.attempts.push(StageAttempt {
                stage: CorrectionStage::ReSolve {
                    sub_index: position,
                    replacement_number: replacement,
                },
                answer: resumed.answer,
                chain: resumed.chain,
                verdict,
            });
            if on_topic {
                return outcome;
            }
        }
    }
    outcome
}

/// Asks the model to revise the decomposition, replaces it verbatim, and
/// reruns the whole chain once. Returns `Ok(None)` when the revision has
/// no parseable NEW DECOMPOSITION section; no rerun happens in that case.
pub fn re_decompose(
    agent: &Agent,
    question: &str,
    base: &ReasoningChain,
) -> Result<Option<StageAttempt>, StageFailure> {
    let prompt = agent
        .templates
        .render_redecompose(
            question,
            &base.decomposition,
            agent.config.redecompose_shots,
        )
        .map_err(AgentError::Prompt)?;
    let request = CompletionRequest::new(prompt).with_stops(["\nQUESTION"]);
    let response = agent
        .backend
        .complete(&request)
        .map_err(AgentError::Backend)?;
    let revision = match parse_step(&response, StepKind::Redecomposition) {
        Ok(step) => step,
        Err(_) => return Ok(None),
    };
    let new_decomposition = match revision.payload {
        StepPayload::Revision {
            new_decomposition, ..
        } => new_decomposition,
        other => unreachable!("revision step carries {other:?}"),
    };
    let outcome = agent.resume(
        base,
        ResumePoint::Decomposition {
            text: new_decomposition,
        },
    )?;
    let verdict = judge(question, &outcome.answer, agent.backend, agent.templates)?;
    Ok(Some(StageAttempt {
        stage: CorrectionStage::ReDecompose,
        answer: outcome.answer,
        chain: outcome.chain,
        verdict,
    }))
}

/// Runs the full correction pipeline for an answer the judge rejected.
///
/// Stages run in order and stop at the first on-topic answer. A backend
/// or retriever failure aborts only its stage. On total exhaustion the
/// most recent answer is returned with `trace.exhausted` set.
pub fn correct(
    agent: &Agent,
    question: &str,
    chain: &ReasoningChain,
    ans_old: &str,
    judgment: &Judgment,
) -> Result<CorrectionOutcome, CorrectError> {
    if judgment.verdict != Verdict::OffTopic {
        return Err(CorrectError::NotOffTopic);
    }
    let mut records: Vec<CorrectionRecord> = Vec::new();
    let mut current = ans_old.to_string();
    let mut base = chain.with_hint(ans_old);
    let mut last_chain = base.clone();
    let mut reached = CorrectionStageKind::ReCompose;

    let success = |answer: String,
                   chain: ReasoningChain,
                   records: Vec<CorrectionRecord>,
                   reached: CorrectionStageKind| CorrectionOutcome {
        answer,
        chain,
        trace: CorrectionTrace {
            records,
            exhausted: false,
        },
        stage_reached: reached,
    };

    // Stage 1: regenerate the composition.
    if base.composition.is_some() {
        if let Ok(att) = re_compose(agent, question, &base, &current) {
            records.push(CorrectionRecord {
                stage: att.stage.clone(),
                ans_old: current.clone(),
                ans_new: att.answer.clone(),
                verdict: att.verdict.clone(),
            });
            if att.verdict.is_on_topic() {
                return Ok(success(att.answer, att.chain, records, reached));
            }
            base = att.chain.with_hint(&att.answer);
            last_chain = base.clone();
            current = att.answer;
        }
    }

    // Stage 2: replace passages, walking backwards.
    let has_searchable = base
        .sub_questions
        .iter()
        .any(|sq| sq.action.is_search() && sq.passage.is_some());
    if has_searchable {
        reached = CorrectionStageKind::ReSolve;
        let outcome = re_solve(agent, question, base);
        for att in &outcome.attempts {
            records.push(CorrectionRecord {
                stage: att.stage.clone(),
                ans_old: current.clone(),
                ans_new: att.answer.clone(),
                verdict: att.verdict.clone(),
            });
            current = att.answer.clone();
        }
        if outcome.succeeded() {
            let att = outcome.attempts.last().expect("non-empty on success");
            return Ok(success(
                att.answer.clone(),
                att.chain.clone(),
                records,
                reached,
            ));
        }
        if let Some(att) = outcome.attempts.last() {
            last_chain = att.chain.with_hint(&att.answer);
        }
        base = outcome.base;
    }

    // Stage 3: rewrite the decomposition and rerun.
    reached = CorrectionStageKind::ReDecompose;
    if let Ok(Some(att)) = re_decompose(agent, question, &base) {
        records.push(CorrectionRecord {
            stage: att.stage.clone(),
            ans_old: current.clone(),
            ans_new: att.answer.clone(),
            verdict: att.verdict.clone(),
        });
        if att.verdict.is_on_topic() {
            return Ok(success(att.answer, att.chain, records, reached));
        }
        last_chain = att.chain.with_hint(&att.answer);
        current = att.answer;
    }

    Ok(CorrectionOutcome {
        answer: current,
        chain: last_chain,
        trace: CorrectionTrace {
            records,
            exhausted: true,
        },
        stage_reached: reached,
    })
}

/// Outcome of the full question-answering pipeline for one question.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub answer: String,
    pub chain: ReasoningChain,
    pub initial_judgment: Judgment,
    /// Verdict on the returned answer: the last correction verdict, or
    /// the initial one when no correction ran.
    pub final_judgment: Judgment,
    pub correction: Option<CorrectionTrace>,
    pub stage_reached: Option<CorrectionStageKind>,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
}

/// Answers a question, judges the answer, and corrects it when the judge
/// rejects it.
pub fn solve(agent: &Agent, question: &str) -> Result<SolveOutcome, SolveError> {
    let run = agent.run(question)?;
    let initial = judge(question, &run.answer, agent.backend, agent.templates)?;
    if initial.is_on_topic() {
        return Ok(SolveOutcome {
            answer: run.answer,
            chain: run.chain,
            initial_judgment: initial.clone(),
            final_judgment: initial,
            correction: None,
            stage_reached: None,
        });
    }
    let corrected = correct(agent, question, &run.chain, &run.answer, &initial)
        .expect("answer was judged off-topic");
    let final_judgment = corrected
        .trace
        .records
        .last()
        .map(|r| r.verdict.clone())
        .unwrap_or_else(|| initial.clone());
    Ok(SolveOutcome {
        answer: corrected.answer,
        chain: corrected.chain,
        initial_judgment: initial,
        final_judgment,
        correction: Some(corrected.trace),
        stage_reached: Some(corrected.stage_reached),
    })
}

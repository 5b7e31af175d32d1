//! Retrieval-augmented multi-hop question answering with post-hoc
//! correction of off-topic answers.
//!
//! The pipeline answers a question by decomposing it into sub-questions,
//! solving each one against a retriever, and composing a final answer. A
//! judge then checks whether the answer is on-topic for the question;
//! rejected answers are revised by backtracking over the chain:
//! regenerate the composition, swap retrieved passages sub-question by
//! sub-question, and finally rewrite the decomposition.
//!
//! Model and retrieval backends are pluggable: [`llm::ScriptedBackend`]
//! and the in-memory [`retrieval::Bm25Index`] make every pipeline path
//! testable offline, while [`llm::HttpBackend`] and
//! [`retrieval::HttpRetriever`] talk to real services.

pub mod agent;
pub mod codec;
pub mod corrector;
pub mod discriminator;
pub mod eval;
pub mod llm;
pub mod retrieval;
pub mod trace;

pub use agent::{Agent, AgentOutcome, ResumePoint};
pub use codec::PromptTemplates;
pub use corrector::{correct, solve, CorrectionOutcome, SolveOutcome};
pub use discriminator::judge;
pub use trace::{Judgment, Passage, ReasoningChain, RunConfig, SubQuestion, Verdict};

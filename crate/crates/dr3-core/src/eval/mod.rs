//! End-to-end evaluation: run the pipeline over a dataset, score answers,
//! and aggregate per-type and per-hop-count breakdowns.
//!
//! Examples are independent, so the harness can evaluate them in parallel
//! with a configurable worker count; record order always follows dataset
//! order. Each example gets its own backend instance from the factory,
//! which keeps scripted runs deterministic regardless of scheduling.

mod dataset;
mod metrics;

pub use dataset::{load_dataset, parse_dataset, EvalError, QAExample};
pub use metrics::{cover_em, em, normalize_answer, token_f1};

use crate::agent::Agent;
use crate::codec::PromptTemplates;
use crate::corrector::solve;
use crate::discriminator::judge;
use crate::llm::{CompletionBackend, LlmError};
use crate::retrieval::Retriever;
use crate::trace::{RunConfig, Verdict};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Whether to run the plain agent or the full judge-and-correct pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Agent only; the judge still scores the final answer for the
    /// off-topic ratio, but nothing is corrected.
    Baseline,
    /// Judge every answer and correct the rejected ones.
    Dr3,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub mode: EvalMode,
    /// Worker threads; 1 means sequential, 0 picks the rayon default.
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            mode: EvalMode::Dr3,
            workers: 1,
        }
    }
}

/// Per-example evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub predicted: String,
    pub em: u8,
    pub cover_em: u8,
    pub f1: f64,
    pub judged_off_topic: bool,
    pub n_sub_questions: usize,
    pub forced_termination: bool,
    /// Last correction stage entered; empty when no correction ran, or
    /// "error" when the pipeline failed for this example.
    pub correction_stage_reached: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub em_pct: f64,
    pub cover_em_pct: f64,
    pub f1_pct: f64,
    pub off_topic_ratio_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAggregates {
    pub count: usize,
    #[serde(flatten)]
    pub aggregates: Aggregates,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdowns {
    pub by_question_type: BTreeMap<String, GroupAggregates>,
    pub by_n_sub_questions: BTreeMap<usize, GroupAggregates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
    pub aggregates: Aggregates,
    pub breakdowns: Breakdowns,
}

fn aggregate<'a>(records: impl Iterator<Item = &'a EvalRecord> + Clone) -> Aggregates {
    let count = records.clone().count();
    if count == 0 {
        return Aggregates::default();
    }
    let n = count as f64;
    Aggregates {
        em_pct: records.clone().map(|r| r.em as f64).sum::<f64>() / n * 100.0,
        cover_em_pct: records.clone().map(|r| r.cover_em as f64).sum::<f64>() / n * 100.0,
        f1_pct: records.clone().map(|r| r.f1).sum::<f64>() / n * 100.0,
        off_topic_ratio_pct: records
            .clone()
            .map(|r| f64::from(r.judged_off_topic))
            .sum::<f64>()
            / n
            * 100.0,
    }
}

impl EvalReport {
    fn from_records(records: Vec<EvalRecord>, dataset: &[QAExample]) -> Self {
        let aggregates = aggregate(records.iter());
        let mut by_question_type: BTreeMap<String, Vec<&EvalRecord>> = BTreeMap::new();
        for (record, example) in records.iter().zip(dataset) {
            let key = example
                .question_type
                .clone()
                .unwrap_or_else(|| "untyped".to_string());
            by_question_type.entry(key).or_default().push(record);
        }
        let mut by_n: BTreeMap<usize, Vec<&EvalRecord>> = BTreeMap::new();
        for record in &records {
            by_n.entry(record.n_sub_questions).or_default().push(record);
        }
        let breakdowns = Breakdowns {
            by_question_type: by_question_type
                .into_iter()
                .map(|(k, group)| {
                    (
                        k,
                        GroupAggregates {
                            count: group.len(),
                            aggregates: aggregate(group.iter().copied()),
                        },
                    )
                })
                .collect(),
            by_n_sub_questions: by_n
                .into_iter()
                .map(|(k, group)| {
                    (
                        k,
                        GroupAggregates {
                            count: group.len(),
                            aggregates: aggregate(group.iter().copied()),
                        },
                    )
                })
                .collect(),
        };
        EvalReport {
            records,
            aggregates,
            breakdowns,
        }
    }

    /// True when the stored aggregates equal a recomputation from the
    /// records within `1e-9`.
    pub fn aggregates_consistent(&self) -> bool {
        let fresh = aggregate(self.records.iter());
        let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
        close(fresh.em_pct, self.aggregates.em_pct)
            && close(fresh.cover_em_pct, self.aggregates.cover_em_pct)
            && close(fresh.f1_pct, self.aggregates.f1_pct)
            && close(
                fresh.off_topic_ratio_pct,
                self.aggregates.off_topic_ratio_pct,
            )
    }

    /// A fixed-width summary table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24} {:>8} {:>10} {:>8} {:>12}\n",
            "group", "EM%", "CoverEM%", "F1%", "OffTopic%"
        ));
        let row = |out: &mut String, name: &str, count: usize, a: &Aggregates| {
            out.push_str(&format!(
                "{:<24} {:>8.2} {:>10.2} {:>8.2} {:>12.2}  (n={count})\n",
                name, a.em_pct, a.cover_em_pct, a.f1_pct, a.off_topic_ratio_pct
            ));
        };
        row(&mut out, "overall", self.records.len(), &self.aggregates);
        for (name, group) in &self.breakdowns.by_question_type {
            row(
                &mut out,
                &format!("type: {name}"),
                group.count,
                &group.aggregates,
            );
        }
        for (n, group) in &self.breakdowns.by_n_sub_questions {
            row(
                &mut out,
                &format!("sub-questions: {n}"),
                group.count,
                &group.aggregates,
            );
        }
        out
    }
}

/// Builds a fresh backend for the example at the given dataset index.
pub type BackendFactory<'a> =
    dyn Fn(usize) -> Result<Box<dyn CompletionBackend>, LlmError> + Sync + 'a;

fn eval_one(
    index: usize,
    example: &QAExample,
    make_backend: &BackendFactory,
    retriever: &dyn Retriever,
    templates: &PromptTemplates,
    config: &RunConfig,
    mode: EvalMode,
) -> EvalRecord {
    let failure = |predicted: String| EvalRecord {
        id: example.id.clone(),
        predicted,
        em: 0,
        cover_em: 0,
        f1: 0.0,
        judged_off_topic: true,
        n_sub_questions: 0,
        forced_termination: false,
        correction_stage_reached: "error".to_string(),
    };
    let backend = match make_backend(index) {
        Ok(b) => b,
        Err(_) => return failure(String::new()),
    };
    let agent = Agent::new(backend.as_ref(), retriever, templates, config);
    let (predicted, chain, off_topic, stage) = match mode {
        EvalMode::Baseline => {
            let run = match agent.run(&example.question) {
                Ok(r) => r,
                Err(_) => return failure(String::new()),
            };
            let verdict = match judge(&example.question, &run.answer, backend.as_ref(), templates) {
                Ok(j) => j.verdict,
                Err(_) => return failure(String::new()),
            };
            (
                run.answer,
                run.chain,
                verdict == Verdict::OffTopic,
                String::new(),
            )
        }
        EvalMode::Dr3 => match solve(&agent, &example.question) {
            Ok(outcome) => (
                outcome.answer,
                outcome.chain,
                outcome.final_judgment.verdict == Verdict::OffTopic,
                outcome
                    .stage_reached
                    .map(|s| s.as_str().to_string())
                    .unwrap_or_default(),
            ),
            Err(_) => return failure(String::new()),
        },
    };
    EvalRecord {
        id: example.id.clone(),
        em: em(&predicted, &example.gold_answer),
        cover_em: cover_em(&predicted, &example.gold_answer),
        f1: token_f1(&predicted, &example.gold_answer),
        judged_off_topic: off_topic,
        n_sub_questions: chain.len(),
        forced_termination: chain.forced_termination,
        correction_stage_reached: stage,
        predicted,
    }
}

/// Evaluates a dataset and aggregates the results. Per-example failures
/// become zero-metric records; they never abort the run.
pub fn run_eval(
    dataset: &[QAExample],
    make_backend: &BackendFactory,
    retriever: &dyn Retriever,
    templates: &PromptTemplates,
    config: &RunConfig,
    options: &EvalOptions,
) -> EvalReport {
    let records = map_examples(dataset, options.workers, |index, example| {
        eval_one(
            index,
            example,
            make_backend,
            retriever,
            templates,
            config,
            options.mode,
        )
    });
    EvalReport::from_records(records, dataset)
}

#[cfg(feature = "parallel")]
fn map_examples<F>(dataset: &[QAExample], workers: usize, f: F) -> Vec<EvalRecord>
where
    F: Fn(usize, &QAExample) -> EvalRecord + Sync,
{
    use rayon::prelude::*;
    if workers == 1 {
        return dataset.iter().enumerate().map(|(i, ex)| f(i, ex)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool");
    pool.install(|| {
        dataset
            .par_iter()
            .enumerate()
            .map(|(i, ex)| f(i, ex))
            .collect()
    })
}

#[cfg(not(feature = "parallel"))]
fn map_examples<F>(dataset: &[QAExample], _workers: usize, f: F) -> Vec<EvalRecord>
where
    F: Fn(usize, &QAExample) -> EvalRecord + Sync,
{
    dataset.iter().enumerate().map(|(i, ex)| f(i, ex)).collect()
}

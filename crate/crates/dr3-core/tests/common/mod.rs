//! Shared fixtures for the integration and acceptance suites: a fixed
//! route-based retriever, a call-logging wrapper, and canned scripts.

#![allow(dead_code)]

use dr3_core::llm::ScriptEntry;
use dr3_core::retrieval::{RankedResult, RetrievalError, Retriever};
use dr3_core::trace::Passage;
use std::sync::Mutex;

/// Maps each query to a fixed, ordered list of passage bodies.
pub struct FixedRetriever {
    routes: Vec<(String, Vec<String>)>,
}

impl FixedRetriever {
    pub fn new(routes: &[(&str, &[&str])]) -> Self {
        FixedRetriever {
            routes: routes
                .iter()
                .map(|(q, bodies)| {
                    (
                        q.to_string(),
                        bodies.iter().map(|b| b.to_string()).collect(),
                    )
                })
                .collect(),
        }
    }
}

impl Retriever for FixedRetriever {
    fn search(&self, query: &str, k: usize) -> Result<RankedResult, RetrievalError> {
        if query.trim().is_empty() {
            return Err(RetrievalError::EmptyQuery);
        }
        let bodies = self
            .routes
            .iter()
            .find(|(q, _)| q == query)
            .map(|(_, b)| b.clone())
            .unwrap_or_default();
        let passages = bodies
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(rank, body)| Passage {
                id: format!("{query}#{rank}"),
                title: String::new(),
                body,
                rank,
                score: 100.0 - rank as f64,
            })
            .collect();
        Ok(RankedResult {
            query: query.to_string(),
            passages,
        })
    }
}

/// One recorded retriever call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RetrieverCall {
    Search { query: String, k: usize },
    PassageAt { query: String, rank: usize },
}

/// Wraps a retriever and records every call.
pub struct LoggingRetriever<'a> {
    inner: &'a dyn Retriever,
    log: Mutex<Vec<RetrieverCall>>,
}

impl<'a> LoggingRetriever<'a> {
    pub fn new(inner: &'a dyn Retriever) -> Self {
        LoggingRetriever {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<RetrieverCall> {
        self.log.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    /// The `(query, rank)` pairs of every single-rank lookup, in order.
    pub fn rank_requests(&self) -> Vec<(String, usize)> {
        self.calls()
            .into_iter()
            .filter_map(|c| match c {
                RetrieverCall::PassageAt { query, rank } => Some((query, rank)),
                RetrieverCall::Search { .. } => None,
            })
            .collect()
    }
}

impl Retriever for LoggingRetriever<'_> {
    fn search(&self, query: &str, k: usize) -> Result<RankedResult, RetrievalError> {
        self.log.lock().unwrap().push(RetrieverCall::Search {
            query: query.to_string(),
            k,
        });
        self.inner.search(query, k)
    }

    fn passage_at(&self, query: &str, rank: usize) -> Result<Passage, RetrievalError> {
        self.log.lock().unwrap().push(RetrieverCall::PassageAt {
            query: query.to_string(),
            rank,
        });
        self.inner.passage_at(query, rank)
    }
}

pub fn entry(response: &str) -> ScriptEntry {
    ScriptEntry::new(response)
}

pub fn matching(marker: &str, response: &str) -> ScriptEntry {
    ScriptEntry::matching(marker, response)
}

pub const MILHOUSE_QUESTION: &str = "Musician and satirist Allie Goertz wrote a song about the \
     \"The Simpsons\" character Milhouse, who Matt Groening named after who?";

pub const MILHOUSE_OBS_1: &str = "Milhouse Mussolini Van Houten is a recurring character in the \
     Fox animated television series The Simpsons voiced by Pamela Hayden and created by Matt \
     Groening.";

pub const MILHOUSE_OBS_2: &str = "Milhouse was named after U.S. president Richard Nixon, whose \
     middle name was Milhous.";

/// The scripted replay of the two-hop Milhouse exemplar.
pub fn milhouse_script() -> Vec<ScriptEntry> {
    vec![
        entry(
            " The question simplifies to \"The Simpsons\" character Milhouse is named after \
             who. I only need to search Milhouse and find who it is named after.",
        ),
        entry(
            " I need to search Milhouse and find who it is named after.\nAction 1: Search[Milhouse]",
        ),
        entry(" The paragraph does not tell who Milhouse is named after."),
        entry(
            "Task 2: I can search Milhouse named after whom instead to find who it is named \
             after.\nAction 2: Search[Milhouse named after whom]",
        ),
        entry(" Milhouse was named after U.S. president Richard Nixon."),
        entry(
            "Composition: Milhouse was named after U.S. president Richard Nixon, so the answer \
             is Richard Nixon.\nFinish: [Richard Nixon]",
        ),
    ]
}

pub fn milhouse_routes() -> FixedRetriever {
    FixedRetriever::new(&[
        ("Milhouse", &[MILHOUSE_OBS_1]),
        ("Milhouse named after whom", &[MILHOUSE_OBS_2]),
    ])
}

/// Question and run-phase script for the two-hop bridge scenario used by
/// the correction tests: the first answer is the bridge name instead of
/// its architect.
pub const BRIDGE_QUESTION: &str = "Which architect designed the old stone bridge?";

pub fn bridge_run_script() -> Vec<ScriptEntry> {
    vec![
        entry(" I need to find the bridge, then its architect."),
        entry(" Find the old stone bridge.\nAction 1: Search[old stone bridge]"),
        entry(" The bridge is the Karvel Bridge."),
        entry(
            "Task 2: Find the architect of the Karvel Bridge.\nAction 2: Search[Karvel Bridge architect]",
        ),
        entry(" The passage does not name the architect."),
        entry("Composition: The architect is unclear, so the answer is Karvel.\nFinish: [Karvel]"),
    ]
}

/// Routes for the bridge scenario with enough ranked passages for a full
/// re-solve sweep (ranks 0..=3 per query).
pub fn bridge_routes() -> FixedRetriever {
    FixedRetriever::new(&[
        (
            "old stone bridge",
            &[
                "The old stone bridge crosses the Karvel river.",
                "The Brennan Viaduct is often confused with the old stone bridge.",
                "The old stone bridge was designed by architect Mira Holt.",
                "A quarry supplied the stone for the old bridge.",
            ],
        ),
        (
            "Karvel Bridge architect",
            &[
                "The Karvel Bridge is a landmark.",
                "Renna Voss served as the bridge architect's apprentice.",
                "Tolls on the Karvel Bridge were abolished in 1901.",
                "The river below the Karvel Bridge floods in spring.",
            ],
        ),
    ])
}

pub fn judgment_yes(thought: &str) -> ScriptEntry {
    ScriptEntry::matching("JUDGMENT", format!("THOUGHT: {thought}\nJUDGMENT: YES"))
}

pub fn judgment_no(thought: &str) -> ScriptEntry {
    ScriptEntry::matching("JUDGMENT", format!("THOUGHT: {thought}\nJUDGMENT: NO"))
}

/// A resumed sub-question attempt: the regenerated conclusion, the
/// composition that follows, and the judgment of its answer.
pub fn resolve_attempt(conclusion: &str, answer: &str, verdict_yes: bool) -> Vec<ScriptEntry> {
    let verdict = if verdict_yes {
        judgment_yes("fits the question")
    } else {
        judgment_no("does not fit the question")
    };
    vec![
        entry(&format!(" {conclusion}")),
        entry(&format!(
            "Composition: {conclusion} So the answer is {answer}.\nFinish: [{answer}]"
        )),
        verdict,
    ]
}

/// Brute-force BM25 scorer used as the ranking oracle: a full scan over
/// per-document token counts, no inverted index involved.
pub mod bm25_oracle {
    use dr3_core::retrieval::{tokenize, Corpus, BM25_B, BM25_K1};
    use std::collections::HashMap;

    pub struct NaiveScorer {
        ids: Vec<String>,
        counts: Vec<HashMap<String, usize>>,
        lengths: Vec<usize>,
        avg_len: f64,
    }

    impl NaiveScorer {
        pub fn new(corpus: &Corpus) -> Self {
            let mut counts = Vec::new();
            let mut lengths = Vec::new();
            let mut ids = Vec::new();
            for doc in &corpus.docs {
                let tokens = tokenize(&format!("{} {}", doc.title, doc.body));
                let mut map: HashMap<String, usize> = HashMap::new();
                for t in &tokens {
                    *map.entry(t.clone()).or_insert(0) += 1;
                }
                lengths.push(tokens.len());
                counts.push(map);
                ids.push(doc.id.clone());
            }
            let avg_len = lengths.iter().sum::<usize>() as f64 / lengths.len() as f64;
            NaiveScorer {
                ids,
                counts,
                lengths,
                avg_len,
            }
        }

        /// Scores every matching document, sorted by descending score and
        /// ascending id. Document frequencies come from one full scan per
        /// query token.
        pub fn rank(&self, query: &str) -> Vec<(String, f64)> {
            let tokens = tokenize(query);
            let n = self.counts.len() as f64;
            let dfs: Vec<f64> = tokens
                .iter()
                .map(|token| self.counts.iter().filter(|c| c.contains_key(token)).count() as f64)
                .collect();
            let mut out = Vec::new();
            for (i, doc_counts) in self.counts.iter().enumerate() {
                let mut score = 0.0;
                for (token, df) in tokens.iter().zip(&dfs) {
                    let tf = *doc_counts.get(token).unwrap_or(&0) as f64;
                    if tf == 0.0 {
                        continue;
                    }
                    let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                    let dl = self.lengths[i] as f64;
                    score += idf * (tf * (BM25_K1 + 1.0))
                        / (tf + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / self.avg_len));
                }
                if score > 0.0 {
                    out.push((self.ids[i].clone(), score));
                }
            }
            out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
            out
        }
    }
}

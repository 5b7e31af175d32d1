//! Command-line interface: single-question answering, batch evaluation,
//! index building, trace replay, and standalone judging.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 runtime
//! pipeline error.

mod config;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use config::{CommonFlags, ConfigError, Settings};
use dr3_core::codec::{load_trace, save_trace};
use dr3_core::corrector::{correct, solve};
use dr3_core::discriminator::judge;
use dr3_core::eval::{load_dataset, run_eval, EvalMode, EvalOptions};
use dr3_core::retrieval::{save_index, Bm25Index, Corpus};
use dr3_core::trace::Verdict;
use dr3_core::Agent;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "dr3",
    version,
    about = "Multi-hop question answering with off-topic answer correction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question through the full judge-and-correct pipeline
    Answer(AnswerArgs),
    /// Evaluate a dataset and print a report
    Eval(EvalArgs),
    /// Build a BM25 index cache from a corpus
    Index(IndexArgs),
    /// Re-run judgment and correction over a saved trace
    Replay(ReplayArgs),
    /// Judge whether an answer is on-topic for a question
    Judge(JudgeArgs),
}

#[derive(Args)]
struct AnswerArgs {
    /// The question to answer
    #[arg(long)]
    question: String,
    /// Write the trace JSON here
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: CommonFlags,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset file: JSON array of {id, question, answer, type?}
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// baseline (agent only) or dr3 (judge and correct)
    #[arg(long)]
    mode: Option<String>,
    /// Parallel workers (1 = sequential, 0 = auto)
    #[arg(long)]
    workers: Option<usize>,
    /// Write the report JSON here (default: stdout after the table)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: CommonFlags,
}

#[derive(Args)]
struct IndexArgs {
    /// Corpus file to index
    #[arg(long)]
    corpus: PathBuf,
    /// Where to write the index cache
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Trace JSON produced by the answer command
    #[arg(long)]
    trace: PathBuf,
    /// Write the updated trace JSON here
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: CommonFlags,
}

#[derive(Args)]
struct JudgeArgs {
    /// The original question
    #[arg(long)]
    question: String,
    /// The answer to judge (may be empty)
    #[arg(long)]
    answer: String,
    #[command(flatten)]
    common: CommonFlags,
}

enum CliError {
    Config(String),
    Pipeline(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    let result = match cli.command {
        Command::Answer(args) => cmd_answer(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Index(args) => cmd_index(args),
        Command::Replay(args) => cmd_replay(args),
        Command::Judge(args) => cmd_judge(args),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Config(message)) => {
            eprintln!("error: {message}");
            std::process::exit(1);
        }
        Err(CliError::Pipeline(message)) => {
            eprintln!("error: {message}");
            std::process::exit(2);
        }
    }
}

fn write_out(path: &std::path::Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes)
        .map_err(|e| CliError::Config(format!("write {}: {e}", path.display())))
}

fn cmd_answer(args: AnswerArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(args.common)?;
    let run_config = settings.run_config()?;
    let templates = settings.templates()?;
    let backend = settings.backend_spec()?.instantiate();
    let retriever = settings.build_retriever()?;
    let agent = Agent::new(
        backend.as_ref(),
        retriever.as_ref(),
        &templates,
        &run_config,
    );

    let outcome = solve(&agent, &args.question).map_err(|e| CliError::Pipeline(e.to_string()))?;
    println!("{}", outcome.answer);
    if let Some(out) = &args.out {
        let bytes = save_trace(&outcome.chain, outcome.correction.as_ref());
        write_out(out, &bytes)?;
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(args.common)?;
    let run_config = settings.run_config()?;
    let templates = settings.templates()?;
    let retriever = settings.build_retriever()?;
    let backend_spec = settings.backend_spec()?;

    let dataset_path = args
        .dataset
        .clone()
        .or_else(|| settings.file.eval.dataset.clone())
        .ok_or_else(|| CliError::Config("eval needs --dataset or eval.dataset".into()))?;
    let dataset = load_dataset(&dataset_path).map_err(|e| CliError::Config(e.to_string()))?;

    let mode_name = args
        .mode
        .clone()
        .or_else(|| settings.file.eval.mode.clone())
        .unwrap_or_else(|| "dr3".to_string());
    let mode = match mode_name.as_str() {
        "baseline" => EvalMode::Baseline,
        "dr3" => EvalMode::Dr3,
        other => return Err(CliError::Config(format!("unknown mode {other:?}"))),
    };
    let workers = args.workers.or(settings.file.eval.workers).unwrap_or(1);

    let factory = |_: usize| Ok(backend_spec.instantiate());
    let report = run_eval(
        &dataset,
        &factory,
        retriever.as_ref(),
        &templates,
        &run_config,
        &EvalOptions { mode, workers },
    );

    print!("{}", report.render_table());
    let json = serde_json::to_vec_pretty(&report).map_err(|e| CliError::Pipeline(e.to_string()))?;
    match &args.out {
        Some(out) => write_out(out, &json)?,
        None => println!("{}", String::from_utf8_lossy(&json)),
    }
    Ok(())
}

fn cmd_index(args: IndexArgs) -> Result<(), CliError> {
    let corpus = Corpus::load(&args.corpus).map_err(|e| CliError::Config(e.to_string()))?;
    let index = Bm25Index::build(&corpus).map_err(|e| CliError::Pipeline(e.to_string()))?;
    save_index(&index, &args.out).map_err(|e| CliError::Pipeline(e.to_string()))?;
    println!(
        "{}",
        serde_json::json!({
            "documents": index.doc_count(),
            "out": args.out,
        })
    );
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(args.common)?;
    let run_config = settings.run_config()?;
    let templates = settings.templates()?;
    let backend = settings.backend_spec()?.instantiate();
    let retriever = settings.build_retriever()?;
    let agent = Agent::new(
        backend.as_ref(),
        retriever.as_ref(),
        &templates,
        &run_config,
    );

    let bytes = std::fs::read(&args.trace)
        .map_err(|e| CliError::Config(format!("trace {}: {e}", args.trace.display())))?;
    let (chain, _old_correction) =
        load_trace(&bytes).map_err(|e| CliError::Config(e.to_string()))?;
    let answer = chain.final_answer.clone().unwrap_or_default();

    let judgment = judge(&chain.question, &answer, backend.as_ref(), &templates)
        .map_err(|e| CliError::Pipeline(e.to_string()))?;
    let (final_answer, final_chain, correction) = if judgment.verdict == Verdict::OffTopic {
        let outcome = correct(&agent, &chain.question, &chain, &answer, &judgment)
            .map_err(|e| CliError::Pipeline(e.to_string()))?;
        (outcome.answer, outcome.chain, Some(outcome.trace))
    } else {
        (answer, chain, None)
    };

    println!(
        "{}",
        serde_json::json!({
            "answer": final_answer,
            "initial_verdict": judgment.verdict,
            "corrected": correction.is_some(),
        })
    );
    if let Some(out) = &args.out {
        let bytes = save_trace(&final_chain, correction.as_ref());
        write_out(out, &bytes)?;
    }
    Ok(())
}

fn cmd_judge(args: JudgeArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(args.common)?;
    let templates = settings.templates()?;
    // An empty answer is off-topic by definition and needs no backend.
    let judgment = if args.answer.trim().is_empty() {
        judge(
            &args.question,
            &args.answer,
            &dr3_core::llm::ScriptedBackend::new(vec![]),
            &templates,
        )
        .map_err(|e| CliError::Pipeline(e.to_string()))?
    } else {
        let backend = settings.backend_spec()?.instantiate();
        judge(&args.question, &args.answer, backend.as_ref(), &templates)
            .map_err(|e| CliError::Pipeline(e.to_string()))?
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&judgment).map_err(|e| CliError::Pipeline(e.to_string()))?
    );
    Ok(())
}

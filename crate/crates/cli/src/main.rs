use std::path::{Path, PathBuf};
use std::process::ExitCode;

use autoct_core::pipeline::{
    build_report, find_trial, ingest, render_svg, render_text, render_trial, run, verify_cache, write_report,
    PipelineError, RunConfig, RunDir, RunOptions, RunStats,
};
use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "autoct",
    version,
    about = "Agentic feature search for clinical-trial outcome prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Index a JSONL corpus of PubMed and registry records.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the search, or resume an interrupted run.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_name = "RUN_DIR")]
        resume: Option<PathBuf>,
    },
    /// Print the report of a run, or the attribution of one test trial.
    Report {
        #[arg(long = "run", value_name = "RUN_DIR")]
        run_dir: PathBuf,
        #[arg(long, value_name = "NCT_ID")]
        trial: Option<String>,
    },
    /// Response-cache maintenance.
    Cache {
        #[command(subcommand)]
        command: CacheCommand,
    },
}

#[derive(Subcommand)]
enum CacheCommand {
    /// Check every cached response against its key.
    Verify { dir: PathBuf },
}

fn report(dir: &Path, trial: Option<&str>) -> Result<(), PipelineError> {
    let dir = RunDir::open(dir)?;
    let report = build_report(&dir)?;
    write_report(&dir, &report)?;
    match trial {
        None => {
            print!("{}", render_text(&report));
            if let Some(stats) = dir.read_json::<RunStats>("run_stats.json")? {
                println!(
                    "\nLLM requests {} (cache hits {}, upstream {}); wall clock {:.1}s; {}",
                    stats.llm.requests,
                    stats.llm.cache_hits,
                    stats.llm.upstream_calls,
                    stats.wall_clock_secs,
                    if stats.completed { "completed" } else { "incomplete" }
                );
            }
        }
        Some(id) => {
            let t = find_trial(&report, id)
                .ok_or_else(|| PipelineError::Config(format!("{id} is not a test trial of this run")))?;
            print!("{}", render_trial(t));
            let rel = format!("report/shap/{id}.svg");
            dir.write_bytes(&rel, render_svg(t).as_bytes())?;
            println!("chart: {}", dir.path(&rel).display());
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Ingest { corpus, out } => {
            let kb = ingest(&corpus, &out)?;
            println!(
                "indexed {} articles and {} trial records into {}",
                kb.pubmed.len(),
                kb.nct.len(),
                out.display()
            );
        }
        Command::Run { config, resume } => {
            let config = RunConfig::load(&config)?;
            let summary = run(&config, resume.as_deref(), RunOptions::default())?;
            println!(
                "best node {} with validation {} {:.4}; run directory {}",
                summary.report.best_node,
                config.data.metric.as_str(),
                summary.report.best_score,
                summary.run_dir.display()
            );
            if let Some(test) = summary.report.best.as_ref().and_then(|b| b.test) {
                println!(
                    "test roc_auc {:.4}  pr_auc {:.4}  f1 {:.4}",
                    test.roc_auc, test.pr_auc, test.f1
                );
            }
        }
        Command::Report { run_dir, trial } => report(&run_dir, trial.as_deref())?,
        Command::Cache {
            command: CacheCommand::Verify { dir },
        } => {
            let v = verify_cache(&dir)?;
            for path in &v.corrupt {
                println!("corrupt: {path}");
            }
            println!("{} entries, {} corrupt", v.entries, v.corrupt.len());
            if !v.is_clean() {
                return Err(PipelineError::CorruptRun {
                    path: dir.display().to_string(),
                    message: "cache entries do not match their keys".into(),
                });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("AUTOCT_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

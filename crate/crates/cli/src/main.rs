//! `migrec`: mine library migrations from git history, enrich them with
//! model-generated intents, and evaluate retrieval-augmented replacement
//! recommendations.

mod manifest;
mod ops;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use migrec_core::intent::SplitOrder;

use ops::UsageError;

#[derive(Parser)]
#[command(
    name = "migrec",
    version,
    about = "Mine library migrations from git history and recommend replacement libraries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitOrderArg {
    /// Most recently active repos go to the training set.
    NewestFirst,
    /// Deviation flag: oldest repos go to the training set.
    OldestFirst,
}

impl From<SplitOrderArg> for SplitOrder {
    fn from(arg: SplitOrderArg) -> Self {
        match arg {
            SplitOrderArg::NewestFirst => SplitOrder::NewestFirst,
            SplitOrderArg::OldestFirst => SplitOrder::OldestFirst,
        }
    }
}

#[derive(Subcommand)]
enum IndexAction {
    /// Build the index from the training set.
    Build {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.2)]
        k1: f64,
        #[arg(long, default_value_t = 0.75)]
        b: f64,
    },
    /// Retrieve the top-k demonstrations for an ad-hoc query.
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        source: String,
        #[arg(long, default_value = "")]
        intents: String,
        /// Intent-type label (repeatable).
        #[arg(long = "intent-type")]
        intent_types: Vec<String>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Exclude the entity with this provenance id (leave-one-out).
        #[arg(long)]
        exclude: Option<String>,
    },
}

#[derive(Subcommand)]
enum Command {
    /// Mine migration records from a list of locally cloned repositories.
    Mine {
        /// Newline-delimited `repo_id<TAB>local_path` list.
        #[arg(long)]
        repos: PathBuf,
        /// Output directory (records.jsonl + stats.json).
        #[arg(long)]
        out: PathBuf,
        /// Pin the median m instead of computing it over this run.
        #[arg(long = "median-m")]
        median_m: Option<u64>,
        /// Dependency-file name pattern (repeatable); default requirements*.txt.
        #[arg(long = "pattern")]
        patterns: Vec<String>,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
    /// Generate intents, screen pairs, classify, and mask mined records.
    Enrich {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory (enriched.jsonl, reject files, masking audit).
        #[arg(long)]
        out: PathBuf,
        /// Override the manifest's bound on simultaneous model calls.
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Repo-grouped, date-ordered 8:2 train/test split.
    Split {
        #[arg(long)]
        records: PathBuf,
        #[arg(long = "out-train")]
        out_train: PathBuf,
        #[arg(long = "out-test")]
        out_test: PathBuf,
        #[arg(long = "split-order", value_enum, default_value_t = SplitOrderArg::NewestFirst)]
        split_order: SplitOrderArg,
    },
    /// Build or query the BM25 demonstration index.
    Index {
        #[command(subcommand)]
        action: IndexAction,
    },
    /// Run recommendations for the manifest's test set and evaluate them.
    Recommend {
        #[arg(long)]
        manifest: PathBuf,
        /// Override the manifest's bound on simultaneous model calls.
        #[arg(long)]
        parallel: Option<usize>,
        /// Re-ask (bypassing the cache) up to N times on a parse failure.
        #[arg(long = "reask-on-parse-error")]
        reask_on_parse_error: Option<u32>,
    },
    /// Score a recommendations file against the test set.
    Evaluate {
        #[arg(long)]
        recommendations: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long = "out-report")]
        out_report: PathBuf,
        /// Also write the per-label breakdown as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run all four ablation modes and write a comparison table.
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
        /// Override the manifest's bound on simultaneous model calls.
        #[arg(long)]
        parallel: Option<usize>,
        /// Re-ask (bypassing the cache) up to N times on a parse failure.
        #[arg(long = "reask-on-parse-error")]
        reask_on_parse_error: Option<u32>,
    },
    /// Compare per-label failure rates of two report files.
    Compare {
        #[arg(long = "report-a")]
        report_a: PathBuf,
        #[arg(long = "report-b")]
        report_b: PathBuf,
        /// How many labels to list, largest disparity first.
        #[arg(long, default_value_t = 5)]
        top: usize,
        /// Optional JSON output of the comparison rows.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Mine {
            repos,
            out,
            median_m,
            patterns,
            workers,
        } => ops::cmd_mine(&repos, &out, median_m, patterns, workers),
        Command::Enrich {
            records,
            manifest,
            out,
            parallel,
        } => ops::cmd_enrich(&records, &manifest, &out, parallel),
        Command::Split {
            records,
            out_train,
            out_test,
            split_order,
        } => ops::cmd_split(&records, &out_train, &out_test, split_order.into()),
        Command::Index { action } => match action {
            IndexAction::Build { train, out, k1, b } => ops::cmd_index(&train, &out, k1, b),
            IndexAction::Query {
                index,
                source,
                intents,
                intent_types,
                k,
                exclude,
            } => ops::cmd_index_query(
                &index,
                &source,
                &intents,
                intent_types,
                k,
                exclude.as_deref(),
            ),
        },
        Command::Recommend {
            manifest,
            parallel,
            reask_on_parse_error,
        } => ops::cmd_recommend(&manifest, parallel, reask_on_parse_error),
        Command::Evaluate {
            recommendations,
            test,
            out_report,
            csv,
        } => ops::cmd_evaluate(&recommendations, &test, &out_report, csv.as_deref()),
        Command::Ablate {
            manifest,
            parallel,
            reask_on_parse_error,
        } => ops::cmd_ablate(&manifest, parallel, reask_on_parse_error),
        Command::Compare {
            report_a,
            report_b,
            top,
            out,
        } => ops::cmd_compare(&report_a, &report_b, top, out.as_ref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

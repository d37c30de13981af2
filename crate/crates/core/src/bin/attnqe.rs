use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use attnqe::alignment::Normalizer;
use attnqe::commands::{self, BaselineKind, CommandOutput, CorpusOptions, Input, LabelOptions, LabelSource};
use attnqe::corpus::Target;
use attnqe::ingest::write_output;
use attnqe::{AggregationConfig, DeletionMode, Direction, Error, KPolicy, Pooling, Scaling};

const THREADS_ENV: &str = "ATTNQE_THREADS";

/// Locate ASR errors from attention and evaluate the rankings.
///
/// Any long flag can also be set in a `--config` file of `key = value`
/// lines (key is the flag name without dashes); flags on the command
/// line win. Set ATTNQE_THREADS to cap worker threads.
#[derive(Parser)]
#[command(name = "attnqe", version)]
struct Cli {
    /// Key-value config file mirroring the subcommand flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align hypotheses to references and label faulty hypothesis words.
    Label {
        /// Corpus JSONL with both `hyp` and `ref`.
        #[arg(long, conflicts_with_all = ["hyp", "ref"], required_unless_present = "hyp")]
        corpus: Option<PathBuf>,
        /// Hypothesis corpus JSONL (`utt_id`, `hyp`).
        #[arg(long, requires = "ref")]
        hyp: Option<PathBuf>,
        /// Reference JSONL (`utt_id`, `ref`).
        #[arg(long = "ref", requires = "hyp")]
        r#ref: Option<PathBuf>,
        #[arg(long, default_value = "attach")]
        deletions: DeletionMode,
        /// Compare words verbatim (no lowercasing or punctuation stripping).
        #[arg(long)]
        exact: bool,
        #[arg(short, long, default_value = "-")]
        output: PathBuf,
    },
    /// Turn an attention export into per-word scores.
    Score {
        #[arg(long)]
        attn: PathBuf,
        #[arg(long, default_value = "vnorm")]
        scaling: Scaling,
        #[arg(long, default_value = "given")]
        direction: Direction,
        #[arg(long, default_value = "max")]
        pool: Pooling,
        #[arg(short, long, default_value = "-")]
        output: PathBuf,
    },
    /// Score words with a confidence or random baseline.
    Baseline {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum)]
        kind: BaselineArg,
        /// Per-word confidences JSONL (`utt_id`, `confidences`).
        #[arg(long, required_if_eq("kind", "confidence"))]
        confidences: Option<PathBuf>,
        /// Name recorded in the method tag of confidence scores.
        #[arg(long, default_value = "asr")]
        source: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long, default_value = "-")]
        output: PathBuf,
    },
    /// Ranking metrics of word scores against error labels.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// A fixed k or `dyn` for ceil(n/10).
        #[arg(long, default_value = "dyn")]
        k: KPolicy,
        #[arg(short, long, default_value = "-")]
        output: PathBuf,
    },
    /// Evaluate every scaling/direction/pooling combination.
    Ablate {
        #[arg(long)]
        attn: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value = "dyn")]
        k: KPolicy,
        #[arg(short, long, default_value = "-")]
        output: PathBuf,
    },
    /// Per-word-type attention vs error statistics.
    Corpus {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Hypothesis corpus, for label files without a `words` field.
        #[arg(long = "corpus")]
        corpus_file: Option<PathBuf>,
        #[arg(long, default_value = "count")]
        target: Target,
        #[arg(long = "min-occ", default_value_t = 2)]
        min_occ: usize,
        #[arg(long, default_value_t = 20)]
        top: usize,
        /// Method tag to analyze when the score file holds several.
        #[arg(long)]
        method: Option<String>,
        /// Also write the word table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(short, long, default_value = "-")]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Confidence,
    Random,
}

fn main() -> ExitCode {
    let args = match with_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => return fail(&e),
    };
    let cli = Cli::parse_from(args);
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn emit(out: CommandOutput, path: &Path) -> attnqe::Result<()> {
    write_output(path, out.body.as_bytes())?;
    if let Some(s) = out.summary {
        eprintln!("{s}");
    }
    Ok(())
}

fn run(cmd: Command) -> attnqe::Result<()> {
    match cmd {
        Command::Label { corpus, hyp, r#ref, deletions, exact, output } => {
            let source = match (corpus, hyp, r#ref) {
                (Some(c), _, _) => LabelSource::Corpus(Input::read(c)?),
                (None, Some(h), Some(r)) => LabelSource::Split { hyps: Input::read(h)?, refs: Input::read(r)? },
                _ => unreachable!("clap enforces --corpus or --hyp with --ref"),
            };
            let normalizer = if exact { Normalizer::OFF } else { Normalizer::default() };
            emit(commands::cmd_label(&source, &LabelOptions { deletions, normalizer })?, &output)
        }
        Command::Score { attn, scaling, direction, pool, output } => {
            let cfg = AggregationConfig::new(scaling, direction, pool);
            emit(commands::cmd_score(&Input::read(attn)?, &cfg)?, &output)
        }
        Command::Baseline { corpus, kind, confidences, source, seed, output } => {
            let kind = match kind {
                BaselineArg::Random => BaselineKind::Random { seed },
                BaselineArg::Confidence => BaselineKind::Confidence {
                    confidences: Input::read(confidences.expect("clap requires --confidences"))?,
                    source,
                },
            };
            emit(commands::cmd_baseline(&Input::read(corpus)?, &kind)?, &output)
        }
        Command::Evaluate { scores, labels, k, output } => {
            emit(commands::cmd_evaluate(&Input::read(scores)?, &Input::read(labels)?, k)?, &output)
        }
        Command::Ablate { attn, labels, k, output } => {
            emit(commands::cmd_ablate(&Input::read(attn)?, &Input::read(labels)?, k)?, &output)
        }
        Command::Corpus { scores, labels, corpus_file, target, min_occ, top, method, csv, output } => {
            let corpus_input = corpus_file.map(Input::read).transpose()?;
            let opts = CorpusOptions { target, min_occurrences: min_occ, top_n: top, method };
            let (out, table) =
                commands::cmd_corpus(&Input::read(scores)?, &Input::read(labels)?, corpus_input.as_ref(), &opts)?;
            if let Some(p) = csv {
                write_output(&p, table.as_bytes())?;
            }
            emit(out, &output)
        }
    }
}

/// Appends `--key value` for every config entry whose flag is not already
/// on the command line.
fn with_config(mut args: Vec<OsString>) -> attnqe::Result<Vec<OsString>> {
    let pos = args.iter().position(|a| a == "--config");
    let path = match pos {
        Some(i) if i + 1 < args.len() => PathBuf::from(args[i + 1].clone()),
        Some(_) => return Ok(args),
        None => match args.iter().find_map(|a| a.to_str()?.strip_prefix("--config=").map(PathBuf::from)) {
            Some(p) => p,
            None => return Ok(args),
        },
    };
    let text = String::from_utf8(attnqe::ingest::read_input(&path)?)
        .map_err(|_| Error::Invalid(format!("{}: config is not UTF-8", path.display())))?;
    let present = |key: &str| {
        args.iter().any(|a| {
            a.to_str().is_some_and(|s| {
                s == format!("--{key}")
                    || s.starts_with(&format!("--{key}="))
                    || (key == "output" && s.starts_with("-o"))
            })
        })
    };
    let mut extra = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("{}:{}: expected key = value", path.display(), n + 1)))?;
        let (key, value) = (key.trim().trim_start_matches('-'), value.trim());
        if key == "config" || present(key) {
            continue;
        }
        match value {
            "true" => extra.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                extra.push(format!("--{key}").into());
                extra.push(value.into());
            }
        }
    }
    args.extend(extra);
    Ok(args)
}

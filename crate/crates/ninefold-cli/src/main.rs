use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ninefold::align::{self, Choice};
use ninefold::ontology::default_ontology;
use ninefold::stats;
use ninefold::tensor::SetTag;

use ninefold_cli::config::{Overrides, RunConfig};
use ninefold_cli::formats;
use ninefold_cli::pipeline::Pipeline;
use ninefold_cli::report;

#[derive(Parser)]
#[command(
    name = "ninefold",
    about = "Role-conditioned text-to-image evaluation harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the corpus file.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Override the prompt set tag.
    #[arg(long, value_parser = parse_set)]
    set: Option<SetTag>,
    /// Restrict to a comma-separated list of model ids.
    #[arg(long)]
    models: Option<String>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the generation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Refuse anything but in-process stubs and the synthetic backend.
    #[arg(long)]
    offline: bool,
}

fn parse_set(s: &str) -> Result<SetTag, String> {
    match s {
        "core" => Ok(SetTag::Core),
        "hard" => Ok(SetTag::Hard),
        other => Err(format!("expected `core` or `hard`, got `{other}`")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline: generate, extract, score, aggregate, report.
    Run(RunArgs),
    /// Parse a corpus, print statistics, and exit nonzero on any malformed
    /// prompt.
    ValidateCorpus {
        #[arg(long)]
        corpus: PathBuf,
        /// Ontology file (built-in default when omitted).
        #[arg(long)]
        ontology: Option<PathBuf>,
        /// Term list for the denylist safety classifier (one term per
        /// line); screening is skipped when omitted.
        #[arg(long)]
        deny_list: Option<PathBuf>,
        /// Classifier score at which a prompt is flagged.
        #[arg(long, default_value_t = 0.5)]
        safety_threshold: f64,
    },
    /// Generate and persist questionnaires for every questionnaire-scored
    /// prompt in the corpus.
    GenQuestionnaires(RunArgs),
    /// Score the corpus and write tensor records, without reports.
    Score(RunArgs),
    /// Combine record files into a machine-readable report.
    Aggregate {
        /// One or more records.jsonl files (e.g. a core run and a hard run).
        #[arg(long, required = true, num_args = 1..)]
        records: Vec<PathBuf>,
        #[arg(long)]
        ontology: Option<PathBuf>,
        /// Output path for the report JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a metric against human pairwise preferences.
    Align {
        /// Preference corpus (JSONL).
        #[arg(long)]
        pairs: PathBuf,
        /// Accuracy bar; inclusive.
        #[arg(long, default_value_t = align::PPA_THRESHOLD)]
        threshold: f64,
        /// Second preference corpus scored by a competing metric (same
        /// pairs, same order) for a paired McNemar comparison.
        #[arg(long)]
        compare: Option<PathBuf>,
        /// Portrayal sub-score corpus (JSONL) for weight tuning.
        #[arg(long)]
        tune_cpa: Option<PathBuf>,
    },
    /// Render a report summary as a table (and optional SVG plot).
    Report {
        /// report.json produced by `run` or `aggregate`.
        #[arg(long)]
        summary: PathBuf,
        /// Directory for rendered artifacts (prints to stdout only when
        /// omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a static SVG plot of core scores.
        #[arg(long)]
        plots: bool,
    },
    /// Print the built-in ontology in the documented TOML format.
    EmitOntology,
}

fn main() -> ExitCode {
    // Die quietly on a closed pipe (`ninefold ... | head`) instead of
    // panicking mid-print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_with_overrides(args: &RunArgs) -> Result<RunConfig> {
    let mut config = RunConfig::load(&args.config)?;
    config.apply_overrides(&Overrides {
        corpus: args.corpus.clone(),
        set: args.set,
        out: args.out.clone(),
        seed: args.seed,
        offline: args.offline,
        models: args.models.clone(),
    })?;
    Ok(config)
}

fn dispatch() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let config = load_with_overrides(&args)?;
            let pipeline = Pipeline::from_config(config)?;
            let outcome = pipeline.run()?;
            println!(
                "{}: {} records ({} failed cells) -> {}",
                outcome.run_id,
                outcome.records_written,
                outcome.failed_cells,
                outcome.out_dir.display()
            );
            println!("cost: ${:.4}", outcome.total_cost_usd);
            if let Some(warning) = &outcome.budget_warning {
                println!("WARNING: {warning}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateCorpus {
            corpus,
            ontology,
            deny_list,
            safety_threshold,
        } => {
            let ontology = match ontology {
                Some(path) => formats::read_ontology(&path)?,
                None => default_ontology(),
            };
            let (parsed, errors) = formats::read_corpus(&corpus, &ontology)?;
            for error in &errors {
                eprintln!("{}: {error}", corpus.display());
            }
            let prompts: Vec<_> = parsed.prompts.iter().map(|(_, p)| p.clone()).collect();
            let classifier = deny_list
                .map(|path| DenyListClassifier::load(&path))
                .transpose()?;
            let report = stats::corpus_stats(
                &prompts,
                classifier.as_ref().map(|c| c as &dyn stats::TextClassifier),
                safety_threshold,
            );
            println!("prompts: {}", report.prompt_count);
            match report.yules_i {
                Some(i) => println!("yule's I: {i:.4}"),
                None => println!("yule's I: undefined (degenerate corpus)"),
            }
            println!("duplicate groups: {}", report.duplicate_groups.len());
            for group in &report.duplicate_groups {
                let members: Vec<String> = group.iter().map(|i| format!("#{}", i + 1)).collect();
                println!("  identical prompts: {}", members.join(", "));
            }
            match (&classifier, report.classifier_unavailable) {
                (None, _) => println!("safety: not configured"),
                (Some(_), true) => {
                    println!("safety: classifier unavailable; corpus passes with warning")
                }
                (Some(_), false) => println!("safety: {} flagged", report.unsafe_flags.len()),
            }
            for index in &report.unsafe_flags {
                println!("  flagged prompt #{}", index + 1);
            }
            if errors.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("{} malformed prompt(s)", errors.len());
                Ok(ExitCode::FAILURE)
            }
        }
        Command::GenQuestionnaires(args) => {
            let config = load_with_overrides(&args)?;
            let out_dir = config.run.out_dir.join("questionnaires");
            let pipeline = Pipeline::from_config(config)?;
            let count = pipeline.generate_questionnaires(&out_dir)?;
            println!("wrote {count} questionnaire(s) to {}", out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Score(args) => {
            let config = load_with_overrides(&args)?;
            let pipeline = Pipeline::from_config(config)?;
            let outcome = pipeline.score_only()?;
            println!(
                "{}: {} records ({} failed cells) -> {}",
                outcome.run_id,
                outcome.records_written,
                outcome.failed_cells,
                outcome.out_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Aggregate {
            records,
            ontology,
            out,
        } => {
            let ontology = match ontology {
                Some(path) => formats::read_ontology(&path)?,
                None => default_ontology(),
            };
            let mut all = Vec::new();
            for path in &records {
                all.extend(formats::read_records(path)?);
            }
            if all.is_empty() {
                bail!("no records to aggregate");
            }
            let tensor = formats::tensor_from_records(&all, &ontology)?;
            let run_id = all[0].run_id.clone();
            let config_hash = all[0].config_hash.clone();
            let failed = all.iter().filter(|r| r.failure.is_some()).count();
            let ledger = ninefold_cli::ledger::CostLedger::new();
            let summary = report::Summary::build(
                &run_id,
                &config_hash,
                &tensor,
                &ledger,
                0.0,
                0.0,
                None,
                all.len(),
                failed,
            )?;
            std::fs::write(&out, serde_json::to_string_pretty(&summary)?)
                .with_context(|| format!("cannot write {}", out.display()))?;
            println!("aggregated {} records -> {}", all.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Align {
            pairs,
            threshold,
            compare,
            tune_cpa,
        } => {
            let loaded = formats::read_preferences(&pairs)?;
            let result = align::ppa(&loaded).map_err(|e| anyhow::anyhow!("{e}"))?;
            let verdict = if result.accuracy >= threshold { "PASS" } else { "FAIL" };
            println!(
                "PPA: {:.4} over {} non-tie pairs",
                result.accuracy, result.n_used
            );
            println!("threshold {threshold:.2}: {verdict}");

            if let Some(votes) = alpha_votes(&loaded) {
                match align::krippendorff_alpha(&votes) {
                    Ok(alpha) => println!("annotator agreement (alpha): {alpha:.4}"),
                    Err(e) => println!("annotator agreement: {e}"),
                }
            }

            if let Some(compare_path) = compare {
                let other = formats::read_preferences(&compare_path)?;
                if other.len() != loaded.len() {
                    bail!(
                        "comparison corpus has {} pairs, expected {}",
                        other.len(),
                        loaded.len()
                    );
                }
                let correct = |pairs: &[align::PreferencePair]| -> Vec<bool> {
                    pairs.iter().filter_map(align::pair_correct).collect()
                };
                let result = align::mcnemar(&correct(&loaded), &correct(&other))
                    .map_err(|e| anyhow::anyhow!("{e}"))?;
                println!(
                    "mcnemar: b={} c={} statistic={:.4} p={:.6} ({})",
                    result.b,
                    result.c,
                    result.statistic,
                    result.p_value,
                    match result.method {
                        align::McNemarMethod::ExactBinomial => "exact",
                        align::McNemarMethod::ChiSquared => "chi-squared",
                    }
                );
            }

            if let Some(tune_path) = tune_cpa {
                let text = std::fs::read_to_string(&tune_path)
                    .with_context(|| format!("cannot read {}", tune_path.display()))?;
                let mut tuples = Vec::new();
                for (i, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let pair: align::CpaAlignmentPair = serde_json::from_str(line)
                        .with_context(|| format!("{}:{}", tune_path.display(), i + 1))?;
                    tuples.push(pair);
                }
                let tuned =
                    align::tune_cpa_weights(&tuples).map_err(|e| anyhow::anyhow!("{e}"))?;
                println!(
                    "tuned cpa weights: count={:.2} posture={:.2} expression={:.2} (accuracy {:.4}{})",
                    tuned.weights.count,
                    tuned.weights.posture,
                    tuned.weights.expression,
                    tuned.accuracy,
                    if tuned.no_signal { ", no signal; defaults" } else { "" }
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { summary, out, plots } => {
            let text = std::fs::read_to_string(&summary)
                .with_context(|| format!("cannot read {}", summary.display()))?;
            let summary: report::Summary = serde_json::from_str(&text)?;
            let rendered = report::render_text(&summary);
            print!("{rendered}");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("report.txt"), &rendered)?;
                if plots {
                    std::fs::write(
                        dir.join("core_scores.svg"),
                        report::render_core_svg(&summary),
                    )?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::EmitOntology => {
            print!("{}", formats::default_ontology_toml());
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Annotator vote matrix from pairs that carry votes; `None` unless some
/// pair has at least two votes.
fn alpha_votes(pairs: &[align::PreferencePair]) -> Option<Vec<Vec<Option<u8>>>> {
    let width = pairs
        .iter()
        .filter_map(|p| p.annotator_votes.as_ref().map(Vec::len))
        .max()?;
    if width < 2 {
        return None;
    }
    let to_code = |c: &Choice| match c {
        Choice::A => 0u8,
        Choice::B => 1,
        Choice::Tie => 2,
    };
    Some(
        pairs
            .iter()
            .map(|p| {
                let mut row = vec![None; width];
                if let Some(votes) = &p.annotator_votes {
                    for (i, vote) in votes.iter().enumerate() {
                        row[i] = Some(to_code(vote));
                    }
                }
                row
            })
            .collect(),
    )
}

/// Case-insensitive substring denylist: scores 1 when any listed term
/// appears, else 0.
struct DenyListClassifier {
    terms: Vec<String>,
}

impl DenyListClassifier {
    fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read deny list {}", path.display()))?;
        Ok(Self {
            terms: text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        })
    }
}

impl stats::TextClassifier for DenyListClassifier {
    fn score(&self, text: &str) -> Result<f64, stats::ClassifierError> {
        let lowered = text.to_lowercase();
        Ok(if self.terms.iter().any(|t| lowered.contains(t)) {
            1.0
        } else {
            0.0
        })
    }
}

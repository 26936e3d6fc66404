use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use np_resample::corpus::{generate_corpus, take_prefix_by_instances, write_corpus, GenreGrammar};
use np_resample::harness::{self, fmt_opt, ExperimentConfig};
use np_resample::resample::derive_stream;
use np_resample::{Corpus, Error, Result};

#[derive(Parser)]
#[command(name = "np-resample", version, about = "Resampled recall distributions for base-NP chunkers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic IOB2 corpus from a built-in grammar.
    Gen {
        /// wsj-like or atis-like
        #[arg(long)]
        grammar: String,
        #[arg(long)]
        sentences: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Drop this many leading sentences before taking.
        #[arg(long, default_value_t = 0)]
        skip_sentences: usize,
        /// Keep the shortest prefix holding at least this many NP instances.
        #[arg(long)]
        take_instances: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a configured experiment and write its reports.
    Run {
        config: PathBuf,
        /// Override a configuration entry, e.g. `--set workers=8`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Summarise and compare recall sample files.
    Stats {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Re-run one resample identified by its plan digest.
    Replay {
        config: PathBuf,
        /// Hex digest from digests.tsv.
        digest: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn gen(
    grammar: &str,
    sentences: usize,
    seed: u64,
    skip: usize,
    take_instances: Option<usize>,
    out: &PathBuf,
) -> Result<()> {
    let g = GenreGrammar::builtin(grammar).ok_or_else(|| Error::Argument(format!("unknown grammar {grammar:?}")))?;
    let full = generate_corpus(&g, sentences, &mut derive_stream(seed, "generate", 0))?;
    if skip > full.len() {
        return Err(Error::Argument(format!("cannot skip {skip} of {} sentences", full.len())));
    }
    let name = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| grammar.to_owned());
    let mut corpus: Corpus = full.slice(name, skip..full.len());
    if let Some(n) = take_instances {
        corpus = take_prefix_by_instances(&corpus, n)?;
    }
    write_corpus(&corpus, out)?;
    eprintln!(
        "wrote {} sentences, {} NP instances to {}",
        corpus.len(),
        corpus.instance_count(),
        out.display()
    );
    Ok(())
}

fn real_main(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            grammar,
            sentences,
            seed,
            skip_sentences,
            take_instances,
            out,
        } => gen(&grammar, sentences, seed, skip_sentences, take_instances, &out),
        Command::Run {
            config,
            mut overrides,
            output_dir,
            workers,
        } => {
            if let Some(dir) = output_dir {
                overrides.push(format!("output_dir={}", std::path::absolute(&dir).unwrap_or(dir).display()));
            }
            if let Some(w) = workers {
                overrides.push(format!("workers={w}"));
            }
            let config = ExperimentConfig::load(&config, &overrides)?;
            let report = harness::run_experiment(&config)?;
            print!("{}", harness::summary_tsv(&report));
            Ok(())
        }
        Command::Stats { files } => {
            let samples = harness::load_aligned_samples(&files)?;
            print!("{}", harness::stats_report(&samples)?);
            Ok(())
        }
        Command::Replay {
            config,
            digest,
            overrides,
        } => {
            let digest = u64::from_str_radix(digest.trim_start_matches("0x"), 16)
                .map_err(|_| Error::Argument(format!("digest {digest:?} is not hexadecimal")))?;
            let config = ExperimentConfig::load(&config, &overrides)?;
            let (id, rows) = harness::replay(&config, digest)?;
            println!("# resample_id={id}");
            println!("system\ttest\trecall\tprecision");
            for (system, test, m) in rows {
                println!(
                    "{system}\t{test}\t{}\t{}",
                    harness::fmt_num(m.recall()),
                    fmt_opt(m.precision())
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

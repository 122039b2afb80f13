use std::env;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use qeforge_core::augment::Approach;
use qeforge_core::config::{validate_config, NormalizedConfig};
use qeforge_core::corpus::{
    load_qe_tsv_with, split_indices, write_file, DatasetManifest, Domain, LabelScale, LangPair, Origin,
};
use qeforge_core::desk::{self, DeskConfig};
use qeforge_core::eval_report::fmt2;
use qeforge_core::experiment::{build_report, variant_label, Experiment, OutputLock, REPORT_KINDS};
use qeforge_core::metrics::batch::{read_score_file, score_file, summarize};
use qeforge_core::metrics::{SignificanceTest, TokenizeOptions, DEFAULT_ALPHA};
use qeforge_core::modeling::TagMode;
use qeforge_core::trainer::StepId;
use qeforge_core::Error as CoreError;

/// Environment variable naming the native TER scorer binary.
const NATIVE_ENV: &str = "QEFORGE_TER_NATIVE";
const NATIVE_BIN: &str = "ter-native";

#[derive(Parser)]
#[command(
    name = "qeforge",
    version,
    about = "Quality-estimation training and evaluation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (TOML).
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Args)]
struct VariantArgs {
    /// Overrides the configured tag mode.
    #[arg(long)]
    tag_mode: Option<TagMode>,
    /// Overrides the configured augmentation approach.
    #[arg(long)]
    approach: Option<Approach>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Writes the synthetic desk-scale corpus and a config that uses it.
    GenerateDesk {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        seed: u64,
    },
    /// Splits a QE triplet file into train/dev/test with the configured split spec.
    DataSplit {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        lang_pair: LangPair,
        #[arg(long, default_value = "id")]
        domain: Domain,
    },
    /// Scores `hyp<TAB>ref` lines with TER.
    LabelTer {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Use the native scorer. Bare `--native` means `auto`, which falls
        /// back to the built-in scorer; `on` fails when it is missing.
        #[arg(long, value_enum, num_args = 0..=1, require_equals = true, default_missing_value = "auto", default_value = "off")]
        native: NativeMode,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        no_lowercase: bool,
        #[arg(long)]
        no_punct: bool,
    },
    /// Concatenates the in-domain training sets.
    AugmentConcat {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Trains translators and writes labelled synthetic data.
    AugmentSynth {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        lang_pair: Option<LangPair>,
    },
    /// Trains one step; steps 2 and 3 start from cached predecessors.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        step: StepId,
        #[arg(long)]
        lang_pair: Option<LangPair>,
        #[command(flatten)]
        variant: VariantArgs,
    },
    /// Scores every cached model on every test set and writes prediction dumps.
    Evaluate {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        variant: VariantArgs,
    },
    /// Builds a report table from prediction dumps.
    Report {
        /// One of main, zeroshot, crosslingual, ood, significance, timing.
        kind: String,
        #[arg(long, short)]
        config: Option<PathBuf>,
        /// Dump directory (defaults to the config's `dumps/`).
        #[arg(long)]
        dumps: Option<PathBuf>,
        /// Variant label such as "TAG DAG2" (defaults to the config's).
        #[arg(long)]
        variant: Option<String>,
        /// Report directory (defaults to the config's `reports/`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trains everything for the configured variant and evaluates it.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        variant: VariantArgs,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NativeMode {
    On,
    Off,
    Auto,
}

fn load(config: &Path, variant: Option<&VariantArgs>) -> Result<NormalizedConfig> {
    let mut cfg = validate_config(config)?;
    if let Some(v) = variant {
        cfg.set_variant(v.tag_mode, v.approach);
    }
    Ok(cfg)
}

fn open(config: &Path, variant: Option<&VariantArgs>) -> Result<(Experiment, OutputLock)> {
    let cfg = load(config, variant)?;
    let lock = OutputLock::acquire(cfg.output_dir())?;
    Ok((Experiment::load(cfg)?, lock))
}

fn find_native() -> Option<PathBuf> {
    if let Some(p) = env::var_os(NATIVE_ENV) {
        let p = PathBuf::from(p);
        return p.is_file().then_some(p);
    }
    env::split_paths(&env::var_os("PATH")?)
        .map(|d| d.join(NATIVE_BIN))
        .find(|p| p.is_file())
}

fn run_native(bin: &Path, input: &Path, output: &Path, workers: Option<usize>, opts: TokenizeOptions) -> Result<()> {
    let mut cmd = Command::new(bin);
    cmd.arg("--input").arg(input).arg("--output").arg(output);
    if let Some(w) = workers {
        cmd.arg("--workers").arg(w.to_string());
    }
    if !opts.lowercase {
        cmd.arg("--no-lowercase");
    }
    if !opts.keep_punct {
        cmd.arg("--no-punct");
    }
    let status = cmd.status().with_context(|| format!("launching {}", bin.display()))?;
    if !status.success() {
        bail!("native scorer {} failed with {status}", bin.display());
    }
    Ok(())
}

fn label_ter(
    input: &Path,
    output: &Path,
    native: NativeMode,
    workers: Option<usize>,
    opts: TokenizeOptions,
) -> Result<()> {
    let bin = match native {
        NativeMode::Off => None,
        NativeMode::On => Some(find_native().ok_or_else(|| {
            CoreError::Config(format!(
                "--native=on but no `{NATIVE_BIN}` on PATH and {NATIVE_ENV} unset (use --native=auto to fall back)"
            ))
        })?),
        NativeMode::Auto => {
            let found = find_native();
            if found.is_none() {
                warn!("no native scorer found, using the built-in one");
            }
            found
        }
    };
    let summary = match bin {
        Some(bin) => {
            let started = std::time::Instant::now();
            run_native(&bin, input, output, workers, opts)?;
            summarize(&read_score_file(output)?, started.elapsed().as_secs_f64())
        }
        None => {
            if let Some(w) = workers {
                rayon::ThreadPoolBuilder::new().num_threads(w).build_global().ok();
            }
            score_file(input, output, opts)?
        }
    };
    println!(
        "{} pairs, corpus TER {:.6}, {:.2}s",
        summary.pairs, summary.corpus_ter, summary.wall_clock_seconds
    );
    Ok(())
}

fn data_split(config: &Path, input: &Path, lp: &LangPair, domain: Domain) -> Result<()> {
    let cfg = load(config, None)?;
    let _lock = OutputLock::acquire(cfg.output_dir())?;
    let samples = load_qe_tsv_with(input, lp, domain, Origin::Authentic, LabelScale::Auto)?;
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != samples.len() {
        bail!(
            "{}: {} lines but {} samples",
            input.display(),
            lines.len(),
            samples.len()
        );
    }
    let idx = split_indices(samples.len(), &cfg.config.split)?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    let dir = cfg.output_dir().join("splits").join(stem);
    for (part, ix) in [("train", &idx.train), ("dev", &idx.dev), ("test", &idx.test)] {
        let path = dir.join(format!("{part}.tsv"));
        let body: String = ix.iter().map(|&i| format!("{}\n", lines[i])).collect();
        write_file(&path, body.as_bytes())?;
        let picked: Vec<_> = ix.iter().map(|&i| samples[i].clone()).collect();
        DatasetManifest::describe(&format!("{stem} {part}"), vec![path.clone()], &picked)
            .save(&dir.join(format!("{part}.manifest.json")))?;
        println!("{part}: {} -> {}", ix.len(), path.display());
    }
    cfg.write_into(&dir)?;
    Ok(())
}

fn report(
    kind: &str,
    config: Option<&Path>,
    dumps: Option<PathBuf>,
    variant: Option<String>,
    out: Option<PathBuf>,
) -> Result<()> {
    if !REPORT_KINDS.contains(&kind) {
        return Err(CoreError::Config(format!(
            "unknown report `{kind}` (expected one of {})",
            REPORT_KINDS.join(", ")
        ))
        .into());
    }
    let exp = config
        .map(|c| load(c, None).and_then(|cfg| Ok(Experiment::load(cfg)?)))
        .transpose()?;
    let dumps = match (dumps, &exp) {
        (Some(d), _) => d,
        (None, Some(e)) => e.dumps_dir(),
        (None, None) => return Err(CoreError::Config("report needs --config or --dumps".into()).into()),
    };
    let out = match (out, &exp) {
        (Some(o), _) => o,
        (None, Some(e)) => e.reports_dir(),
        (None, None) => dumps.parent().unwrap_or(Path::new(".")).join("reports"),
    };
    let variant = match (variant, &exp) {
        (Some(v), _) => v,
        (None, Some(e)) => e.variant(),
        (None, None) => variant_label(TagMode::Notag, Approach::Dag1),
    };
    let (alpha, test) = exp
        .as_ref()
        .map(|e| (e.cfg.config.evaluation.alpha, e.cfg.config.evaluation.significance))
        .unwrap_or((DEFAULT_ALPHA, SignificanceTest::Williams));
    let table = build_report(kind, &dumps, exp.as_ref(), &variant, alpha, test)?;
    let (txt, json) = table.write(&out)?;
    print!("{}", table.render_text());
    info!("wrote {} and {}", txt.display(), json.display());
    Ok(())
}

fn execute(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::GenerateDesk { out, seed } => {
            let corpus = desk::generate(&DeskConfig {
                seed,
                ..Default::default()
            })?;
            let files = corpus.save(&out)?;
            let cfg = out.join("config.toml");
            write_file(&cfg, corpus.config_toml(seed, "out").as_bytes())?;
            println!("{} files, config at {}", files.len(), cfg.display());
        }
        Cmd::DataSplit {
            config,
            input,
            lang_pair,
            domain,
        } => data_split(&config.config, &input, &lang_pair, domain)?,
        Cmd::LabelTer {
            input,
            output,
            native,
            workers,
            no_lowercase,
            no_punct,
        } => {
            let opts = TokenizeOptions {
                lowercase: !no_lowercase,
                keep_punct: !no_punct,
            };
            label_ter(&input, &output, native, workers, opts)?
        }
        Cmd::AugmentConcat { config } => {
            let (exp, _lock) = open(&config.config, None)?;
            println!("{}", exp.augment_concat()?.display());
        }
        Cmd::AugmentSynth { config, lang_pair } => {
            let (exp, _lock) = open(&config.config, None)?;
            for p in exp.augment_synth(lang_pair.as_ref())? {
                println!("{}", p.display());
            }
        }
        Cmd::Train {
            config,
            step,
            lang_pair,
            variant,
        } => {
            let (exp, _lock) = open(&config.config, Some(&variant))?;
            exp.cfg.write_into(exp.out())?;
            for c in exp.train(step, lang_pair.as_ref())? {
                println!(
                    "step {} {} best dev loss {:.6} after {} updates",
                    c.manifest.step, c.manifest.cache_key, c.manifest.best_dev_loss, c.manifest.updates
                );
            }
        }
        Cmd::Evaluate { config, variant } => {
            let (exp, _lock) = open(&config.config, Some(&variant))?;
            print_evals(&exp.evaluate()?);
        }
        Cmd::Run { config, variant } => {
            let (exp, _lock) = open(&config.config, Some(&variant))?;
            print_evals(&exp.run()?);
        }
        Cmd::Report {
            kind,
            config,
            dumps,
            variant,
            out,
        } => report(&kind, config.as_deref(), dumps, variant, out)?,
    }
    Ok(())
}

fn print_evals(evals: &[qeforge_core::eval_report::Evaluation]) {
    for e in evals {
        println!("{}\t{}\t{}", e.model_id, e.test_set, fmt2(e.pearson));
    }
}

/// 1 for bad input or unmet preconditions, 2 for failures while running.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<CoreError>() {
        Some(
            CoreError::Config(_)
            | CoreError::Parse { .. }
            | CoreError::Invalid(_)
            | CoreError::MissingCheckpoint(_)
            | CoreError::NotZeroShot(_)
            | CoreError::LineCountMismatch { .. }
            | CoreError::Lineage(_),
        ) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

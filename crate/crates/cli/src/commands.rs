use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Subcommand, ValueEnum};
use debias_contrast::backends::{BackendRegistry, HeuristicNer};
use debias_contrast::corpus::{self, ByteTokenizer, EntityBasis, ValidationOptions};
use debias_contrast::eval::{self, DegradationTable, SizeTransform};
use debias_contrast::model::{read_checkpoint, write_checkpoint};
use debias_contrast::train::{self, ablate_alpha, write_ablation_csv};
use debias_contrast::{augment_dataset, fixtures, AugmentedSample, BackendSuite, EvalReport, PatternRules};
use serde::Deserialize;

use crate::config::{RunConfig, ECHO_NAME};

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expand source/summary pairs with positive and negative variants.
    Augment {
        #[arg(long = "in", value_name = "JSONL")]
        input: PathBuf,
        #[arg(long, value_name = "JSONL")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Fine-tune the model on an augmented dataset.
    Train {
        #[arg(long, value_name = "JSONL")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Samples whose positive/negative cosine statistics are logged per epoch.
        #[arg(long, value_name = "JSONL")]
        held_out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Generate summaries from a checkpoint and score them.
    Eval {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "JSONL")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        report: PathBuf,
        /// Checkpoint to report deltas against.
        #[arg(long, value_name = "FILE")]
        baseline: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train and evaluate once per contrastive weight.
    AblateAlpha {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        values: Vec<f64>,
        #[arg(long, value_name = "JSONL")]
        data: PathBuf,
        /// Evaluation sources; defaults to the training data.
        #[arg(long, value_name = "JSONL")]
        eval_data: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Flag degenerate generations in prompt/response pairs.
    AnalyzePatterns {
        /// JSON Lines of `{"prompt": .., "response": ..}`, optional `id`.
        #[arg(long, value_name = "JSONL")]
        pairs: PathBuf,
        #[arg(long, value_name = "TOML")]
        rules: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Dataset statistics.
    Stats {
        #[arg(long, value_name = "JSONL")]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Basis::Summary)]
        entity_basis: Basis,
    },
    /// Correlate model size with capability degradation.
    Correlate {
        #[arg(long, value_name = "CSV")]
        table: PathBuf,
        #[arg(long, default_value = "log")]
        transform: SizeTransform,
    },
    /// Write a seeded synthetic corpus.
    Synth {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Emit the augmented corpus instead of bare pairs.
        #[arg(long)]
        augmented: bool,
        #[arg(long, value_name = "JSONL")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, value_name = "TOML")]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.epochs=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self, env_seed: Option<&str>) -> anyhow::Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides, env_seed)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Basis {
    Summary,
    Source,
}

pub fn dispatch(cmd: Command, env_seed: Option<&str>, out: &mut dyn Write) -> anyhow::Result<()> {
    match cmd {
        Command::Augment { input, out: path, seed, cfg } => {
            let mut config = cfg.resolve(env_seed)?;
            if let (Some(s), None) = (seed, env_seed) {
                config.augment.seed = s;
            }
            augment(&config, &input, &path, out)
        }
        Command::Train { data, out: dir, held_out, cfg } => {
            let mut config = cfg.resolve(env_seed)?;
            config.train.checkpoint_dir = dir;
            run_train(&config, &data, held_out.as_deref(), out)
        }
        Command::Eval { checkpoint, data, report, baseline, cfg } => {
            let config = cfg.resolve(env_seed)?;
            run_eval(&config, &checkpoint, &data, &report, baseline.as_deref(), out)
        }
        Command::AblateAlpha { values, data, eval_data, out: dir, cfg } => {
            let mut config = cfg.resolve(env_seed)?;
            config.train.checkpoint_dir = dir;
            run_ablation(&config, &values, &data, eval_data.as_deref(), out)
        }
        Command::AnalyzePatterns { pairs, rules, out: path } => analyze_patterns(&pairs, rules.as_deref(), &path, out),
        Command::Stats { data, entity_basis } => stats(&data, entity_basis, out),
        Command::Correlate { table, transform } => correlate(&table, transform, out),
        Command::Synth { n, seed, augmented, out: path } => {
            let seed = match env_seed {
                Some(raw) => raw.trim().parse().context("invalid seed override")?,
                None => seed,
            };
            let samples = if augmented { fixtures::augmented_corpus(n, seed)? } else { fixtures::synthetic_pairs(n, seed) };
            corpus::save_dataset(&samples, &path)?;
            writeln!(out, "wrote {} samples to {}", samples.len(), path.display())?;
            Ok(())
        }
    }
}

fn suite(config: &RunConfig) -> anyhow::Result<BackendSuite> {
    Ok(BackendRegistry::new().build(&config.backends)?)
}

fn load(path: &Path, config: &RunConfig) -> anyhow::Result<Vec<AugmentedSample>> {
    let opts = ValidationOptions {
        min_words: config.augment.min_words,
        toxicity_threshold: Some(config.augment.toxicity_threshold),
    };
    Ok(corpus::load_dataset_with(path, &opts)?)
}

/// `<file>.<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".{suffix}"));
    path.with_file_name(name)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn augment(config: &RunConfig, input: &Path, path: &Path, out: &mut dyn Write) -> anyhow::Result<()> {
    let samples = load(input, config)?;
    let suite = suite(config)?;
    let (augmented, rejections) = augment_dataset(&samples, &config.augment, &suite)?;
    corpus::save_dataset(&augmented, path)?;
    let rej_path = sibling(path, "rejections.jsonl");
    let mut rej = String::new();
    for r in &rejections {
        rej.push_str(&serde_json::to_string(r)?);
        rej.push('\n');
    }
    fs::write(&rej_path, rej).with_context(|| format!("cannot write {}", rej_path.display()))?;
    config.echo(&sibling(path, ECHO_NAME))?;
    let positives: usize = augmented.iter().map(|s| s.positives.len()).sum();
    let negatives: usize = augmented.iter().map(|s| s.negatives.len()).sum();
    writeln!(
        out,
        "augmented {} of {} samples: {positives} positives, {negatives} negatives, {} rejections",
        augmented.len(),
        samples.len(),
        rejections.len()
    )?;
    Ok(())
}

fn run_train(config: &RunConfig, data: &Path, held_out: Option<&Path>, out: &mut dyn Write) -> anyhow::Result<()> {
    let dataset = load(data, config)?;
    let held = held_out.map(|p| load(p, config)).transpose()?;
    let dir = config.train.checkpoint_dir.clone();
    create_dir(&dir)?;
    config.echo(&dir.join(ECHO_NAME))?;
    let (ckpt, history) = train::train_with_eval(&config.train, &dataset, held.as_deref())?;
    write_checkpoint(&dir.join("final.ckpt"), &ckpt.model, ckpt.step)?;
    let hist_path = dir.join("history.json");
    fs::write(&hist_path, serde_json::to_string_pretty(&history)?)
        .with_context(|| format!("cannot write {}", hist_path.display()))?;
    for e in &history.epochs {
        write!(out, "epoch {} loss {:.6} ce {:.6} cl {:.6}", e.epoch + 1, e.mean_total, e.mean_ce, e.mean_cl)?;
        if let Some(h) = &e.held_out {
            write!(out, " held-out pos {:.4} neg {:.4}", h.positive_cosine, h.negative_cosine)?;
        }
        writeln!(out)?;
    }
    writeln!(out, "{} steps; checkpoint {}", ckpt.step, dir.join("final.ckpt").display())?;
    Ok(())
}

fn score_checkpoint(
    path: &Path,
    samples: &[AugmentedSample],
    config: &RunConfig,
    suite: &BackendSuite,
) -> anyhow::Result<EvalReport> {
    let ckpt = read_checkpoint(path)?;
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let sources: Vec<String> = samples.iter().map(|s| s.source.clone()).collect();
    let outputs = eval::generate_summaries(&ckpt.model, &ByteTokenizer, &sources, &config.generation)?;
    Ok(eval::evaluate_with_ids(&ids, &sources, &outputs, suite.toxicity.as_ref(), suite.faithfulness.as_ref())?)
}

fn run_eval(
    config: &RunConfig,
    checkpoint: &Path,
    data: &Path,
    dir: &Path,
    baseline: Option<&Path>,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    let samples = load(data, config)?;
    let suite = suite(config)?;
    let report = score_checkpoint(checkpoint, &samples, config, &suite)?;
    let base = baseline.map(|b| score_checkpoint(b, &samples, config, &suite)).transpose()?;
    create_dir(dir)?;
    config.echo(&dir.join(ECHO_NAME))?;
    report.write_items_csv(&dir.join("items.csv"))?;
    let md = report.to_markdown(base.as_ref());
    fs::write(dir.join("report.md"), &md)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    write!(out, "{md}")?;
    Ok(())
}

fn run_ablation(
    config: &RunConfig,
    values: &[f64],
    data: &Path,
    eval_data: Option<&Path>,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        bail!("alpha values must be finite and non-negative, got {bad}");
    }
    let dataset = load(data, config)?;
    let eval_set = match eval_data {
        Some(p) => load(p, config)?,
        None => dataset.clone(),
    };
    let suite = suite(config)?;
    let dir = config.train.checkpoint_dir.clone();
    create_dir(&dir)?;
    config.echo(&dir.join(ECHO_NAME))?;
    let table = ablate_alpha(&config.train, &dataset, &eval_set, values, &suite, &config.generation)?;
    let csv_path = dir.join("ablation.csv");
    write_ablation_csv(&table, &csv_path)?;
    let cell = |v: Option<f64>| v.map_or("-".to_owned(), |x| format!("{x:.4}"));
    writeln!(out, "alpha\ttoxicity\tfaithfulness\tstatus")?;
    for r in &table.rows {
        writeln!(out, "{}\t{}\t{}\t{}", r.alpha, cell(r.toxicity), cell(r.faithfulness), r.status)?;
    }
    writeln!(out, "wrote {}", csv_path.display())?;
    Ok(())
}

#[derive(Deserialize)]
struct PairRecord {
    #[serde(default)]
    id: Option<String>,
    prompt: String,
    response: String,
}

fn read_pairs(path: &Path) -> anyhow::Result<Vec<PairRecord>> {
    let file = fs::File::open(path).map_err(|e| debias_contrast::Error::Io { path: path.to_owned(), source: e })?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord = serde_json::from_str(&line).map_err(|e| debias_contrast::Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        pairs.push(rec);
    }
    Ok(pairs)
}

fn analyze_patterns(pairs_path: &Path, rules: Option<&Path>, path: &Path, out: &mut dyn Write) -> anyhow::Result<()> {
    let rules = match rules {
        Some(p) => PatternRules::from_path(p)?,
        None => PatternRules::builtin(),
    };
    let records = read_pairs(pairs_path)?;
    let pairs: Vec<(String, String)> = records.iter().map(|r| (r.prompt.clone(), r.response.clone())).collect();
    let (report, flags) = eval::pattern_report(&pairs, &rules)?;
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["id", "empty", "abstention", "repetitive", "non_sequitur", "punctuation"])?;
    for (i, (rec, f)) in records.iter().zip(&flags).enumerate() {
        let id = rec.id.clone().unwrap_or_else(|| i.to_string());
        let b = |v: bool| if v { "1" } else { "0" }.to_owned();
        w.write_record([id, b(f.empty), b(f.abstention), b(f.repetitive), b(f.non_sequitur), b(f.punctuation)])?;
    }
    w.flush()?;
    writeln!(out, "n={}", report.n)?;
    for (name, v) in [
        ("empty", report.empty),
        ("abstention", report.abstention),
        ("repetitive", report.repetitive),
        ("non_sequitur", report.non_sequitur),
        ("punctuation", report.punctuation),
    ] {
        writeln!(out, "{name}={v:.1}%")?;
    }
    Ok(())
}

fn stats(data: &Path, basis: Basis, out: &mut dyn Write) -> anyhow::Result<()> {
    let samples = corpus::load_dataset(data)?;
    let s = match basis {
        Basis::Summary => corpus::compute_stats(&samples),
        Basis::Source => corpus::compute_stats_with(&samples, EntityBasis::Source, Some(&HeuristicNer::new()))?,
    };
    writeln!(out, "n_samples={}", s.n_samples)?;
    writeln!(out, "pct_with_entities={:.2}", s.pct_with_entities)?;
    if s.no_negatives {
        writeln!(out, "pct_toxic_negatives=n/a")?;
    } else {
        writeln!(out, "pct_toxic_negatives={:.2}", s.pct_toxic_negatives)?;
    }
    writeln!(out, "positives_per_sample={:.2}", s.positives_per_sample)?;
    Ok(())
}

fn correlate(table: &Path, transform: SizeTransform, out: &mut dyn Write) -> anyhow::Result<()> {
    let t = DegradationTable::from_csv_path(table)?;
    let r = eval::degradation_correlation(&t, transform)?;
    writeln!(out, "column\tr\treported")?;
    for (i, (name, v)) in r.columns.iter().enumerate() {
        let reported = t.reported.as_ref().map_or("-".to_owned(), |rep| format!("{:.3}", rep[i]));
        writeln!(out, "{name}\t{v:.3}\t{reported}")?;
    }
    let reported = t.reported.as_ref().map_or("-".to_owned(), |rep| format!("{:.3}", eval::mean(rep)));
    writeln!(out, "overall\t{:.3}\t{reported}", r.overall)?;
    Ok(())
}

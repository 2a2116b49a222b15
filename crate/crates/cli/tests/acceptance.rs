//! Acceptance suite. Runs every criterion with builtin deterministic
//! backends at full precision and prints one line per criterion:
//!
//! ```text
//! [PASS] 01 loss arithmetic: total 4, toxic/clean 1.5 (0.00s)
//! ```
//!
//! Exits non-zero if any criterion fails. Tolerances are pinned here.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use debias_contrast::augment::{backtranslate, generate_toxic, AugmentConfig, RejectionReason};
use debias_contrast::backends::{GenParams, GenerationBackend, ScoredSequence, ToxicityScorer, TranslationBackend};
use debias_contrast::corpus::{build_batches, load_dataset, save_dataset, Batch, BatchConstraints, ByteTokenizer};
use debias_contrast::eval::{degradation_correlation, mean, pattern_report, DegradationTable, PatternRules, SizeTransform};
use debias_contrast::loss::{combined_loss, contrastive_loss, ne_pool};
use debias_contrast::model::{read_checkpoint, write_checkpoint, Model, ModelConfig};
use debias_contrast::train::{batch_loss, batch_loss_grad, lr_at, train_with_eval, RunHistory, TrainConfig};
use debias_contrast::{fixtures, AugmentedSample, EntitySpan, Negative, NegativeStrategy, Positive, PositiveStrategy};
use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SMOKE_SEED: u64 = 7;
const SMOKE_TRAIN: usize = 200;
const SMOKE_HELD_OUT: usize = 40;

/// 200 training samples plus 40 held-out, augmented with the builtin suite.
fn smoke_corpus() -> &'static (Vec<AugmentedSample>, Vec<AugmentedSample>) {
    static CORPUS: OnceLock<(Vec<AugmentedSample>, Vec<AugmentedSample>)> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let mut all = fixtures::augmented_corpus(SMOKE_TRAIN + SMOKE_HELD_OUT, SMOKE_SEED).expect("fixture corpus");
        let held = all.split_off(SMOKE_TRAIN);
        (all, held)
    })
}

fn c01_loss_arithmetic() -> Result<String> {
    let b = combined_loss(2.0, 0.5, 4.0, 1.0, 1);
    ensure!(b.total == 4.0, "combined_loss(2, 0.5, 4) = {}", b.total);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let reps = unit_rows(&mut rng, 5, 6);
    let pairs = [(0, 1), (2, 3)];
    let clean = contrastive_loss(reps.view(), &pairs, &[false; 5], 1.0)?;
    let toxic = contrastive_loss(reps.view(), &pairs, &[false, false, false, false, true], 1.0)?;
    ensure!(toxic == 1.5 * clean, "toxic {toxic} is not exactly 1.5 × clean {clean}");
    Ok(format!("total {}, toxic/clean {}", b.total, toxic / clean))
}

fn c02_symmetry() -> Result<String> {
    let reps = Array2::<f64>::eye(3);
    let l = contrastive_loss(reps.view(), &[(0, 1)], &[false; 3], 1.0)?;
    let err = (l - std::f64::consts::LN_2).abs();
    ensure!(err < 1e-6, "L_cl = {l}, expected ln 2");
    Ok(format!("L_cl = {l:.12} (|Δ| {err:.1e})"))
}

fn unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    let mut m = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0f64..1.0));
    for mut row in m.rows_mut() {
        let norm: f64 = row.dot(&row).sqrt();
        row /= norm;
    }
    m
}

/// Direct transcription: plain exponentials, explicit denominators.
fn naive_contrastive(reps: ArrayView2<'_, f64>, pairs: &[(usize, usize)], toxic: &[bool], tau: f64) -> f64 {
    let n = reps.nrows();
    let w = if toxic.iter().any(|&t| t) { 1.5 } else { 1.0 };
    let sim = |i: usize, k: usize| (0..reps.ncols()).map(|c| reps[[i, c]] * reps[[k, c]]).sum::<f64>() / tau;
    let p = |i: usize, j: usize| {
        let denom: f64 = (0..n).filter(|&k| k != i).map(|k| sim(i, k).exp()).sum();
        sim(i, j).exp() / denom
    };
    let total: f64 = pairs.iter().map(|&(i, j)| p(i, j).ln() + p(j, i).ln()).sum();
    -w * total / (2.0 * pairs.len() as f64)
}

fn c03_oracle() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(2..=8);
        let d = rng.gen_range(2..=16);
        let tau = rng.gen_range(0.1..2.0);
        let reps = unit_rows(&mut rng, n, d);
        let all: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let mut pairs: Vec<(usize, usize)> = all.iter().copied().filter(|_| rng.gen_bool(0.4)).collect();
        if pairs.is_empty() {
            pairs.push(all[rng.gen_range(0..all.len())]);
        }
        let toxic: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.2)).collect();
        let fast = contrastive_loss(reps.view(), &pairs, &toxic, tau)?;
        let slow = naive_contrastive(reps.view(), &pairs, &toxic, tau);
        worst = worst.max((fast - slow).abs());
    }
    ensure!(worst < 1e-9, "max |Δ| {worst:.3e}");
    Ok(format!("200 batches, max |Δ| {worst:.2e}"))
}

/// `|a − n| / max(|a|, |n|, FLOOR)`. The floor keeps coordinates whose true
/// gradient is zero from dividing round-off by round-off.
const GRAD_FLOOR: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-5;

fn loss_at(model: &Model, batch: &Batch, cfg: &TrainConfig) -> f64 {
    batch_loss(model, batch, cfg).expect("loss").total
}

fn nudge(model: &Model, tensor: usize, idx: usize, h: f64) -> Model {
    let mut m = model.clone();
    let mut views = m.tensors_mut();
    *views[tensor].1.iter_mut().nth(idx).expect("index in range") += h;
    drop(views);
    m
}

/// Largest relative error over `coords` as `(error, tensor name, index)`.
fn grad_check(model: &Model, batch: &Batch, cfg: &TrainConfig, coords: &[(usize, usize)]) -> (f64, String, usize) {
    let (_, grads) = batch_loss_grad(model, batch, cfg).expect("gradient");
    let analytic = grads.tensors();
    let names: Vec<String> = model.tensors().into_iter().map(|(n, _)| n).collect();
    let mut worst = (0.0, String::new(), 0);
    for &(t, i) in coords {
        let a = *analytic[t].1.iter().nth(i).unwrap();
        let up = loss_at(&nudge(model, t, i, GRAD_STEP), batch, cfg);
        let down = loss_at(&nudge(model, t, i, -GRAD_STEP), batch, cfg);
        let numeric = (up - down) / (2.0 * GRAD_STEP);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
        if rel > worst.0 {
            worst = (rel, names[t].clone(), i);
        }
    }
    worst
}

/// Two short groups with entity spans, a toxic negative and a clean one.
fn micro_batch(constraints: &BatchConstraints) -> Result<Batch> {
    let mut a = AugmentedSample::new("g-a", "Ann Lee paid $5 on Monday.", "Ann Lee paid $5.");
    a.entities = vec![EntitySpan::new(0, 7, "PERSON", "Ann Lee"), EntitySpan::new(13, 15, "MONEY", "$5")];
    a.positives = vec![
        Positive::new("Ann Lee paid $5.", PositiveStrategy::Original),
        Positive::new("Ann Lee spent $5.", PositiveStrategy::Backtranslation),
    ];
    a.negatives = vec![Negative::new("Ann Lee is a useless idiot.", NegativeStrategy::Toxic, true, 0.9)];
    let mut b = AugmentedSample::new("g-b", "Omar Haddad won the match.", "Omar Haddad won it.");
    b.entities = vec![EntitySpan::new(0, 11, "PERSON", "Omar Haddad")];
    b.positives = vec![
        Positive::new("Omar Haddad won it.", PositiveStrategy::Original),
        Positive::new("Omar Haddad secured it.", PositiveStrategy::Backtranslation),
    ];
    b.negatives = vec![Negative::new("Bob Stone won it twice.", NegativeStrategy::EntitySwap, false, 0.0)];
    let constraints = BatchConstraints { batch_groups: 2, ..constraints.clone() };
    let build = build_batches(&[a, b], &constraints, &ByteTokenizer, 0)?;
    let batch = build.batches.into_iter().next().context("no batch")?;
    ensure!(batch.len() == 6, "micro-batch has {} sequences", batch.len());
    ensure!(batch.toxic_flags.iter().any(|&t| t), "micro-batch has no toxic negative");
    ensure!(batch.entity_mask.iter().flatten().any(|&m| m), "micro-batch has no entity tokens");
    Ok(batch)
}

fn c04_gradient() -> Result<String> {
    let tiny = ModelConfig {
        vocab_size: ByteTokenizer::VOCAB_SIZE,
        d_model: 8,
        n_layers: 2,
        n_heads: 2,
        max_length: 64,
        proj_hidden: 8,
        proj_out: 4,
        seed: 5,
        ..ModelConfig::desk()
    };
    let constraints = BatchConstraints {
        max_positives: Some(2),
        max_negatives: Some(2),
        max_length: 64,
        batch_groups: 2,
    };
    let cfg = TrainConfig {
        model: tiny.clone(),
        batch_constraints: constraints.clone(),
        ..TrainConfig::desk()
    };
    let model = Model::init(&tiny)?;
    let batch = micro_batch(&constraints)?;
    // Every coordinate of every tensor, except that embedding and output
    // entries of bytes absent from the batch are only sampled.
    let used: std::collections::BTreeSet<usize> = batch.sequences.iter().flatten().map(|&t| t as usize).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut coords = Vec::new();
    for (t, (name, view)) in model.tensors().iter().enumerate() {
        let shape = view.shape().to_vec();
        for i in 0..view.len() {
            let keep = match name.as_str() {
                "tok_emb" => used.contains(&(i / shape[1])) || rng.gen_bool(0.02),
                "w_lm" => used.contains(&(i % shape[1])) || rng.gen_bool(0.02),
                _ => true,
            };
            if keep {
                coords.push((t, i));
            }
        }
    }
    let (tiny_err, tiny_name, tiny_idx) = grad_check(&model, &batch, &cfg, &coords);
    ensure!(tiny_err < 1e-4, "tiny model: rel err {tiny_err:.2e} at {tiny_name}[{tiny_idx}]");

    let desk = TrainConfig::desk();
    let desk_model = Model::init(&desk.model)?;
    let desk_batch = micro_batch(&desk.batch_constraints)?;
    let mut sampled = Vec::new();
    for (t, (_, view)) in desk_model.tensors().iter().enumerate() {
        for _ in 0..2 {
            sampled.push((t, rng.gen_range(0..view.len())));
        }
    }
    let (desk_err, desk_name, desk_idx) = grad_check(&desk_model, &desk_batch, &desk, &sampled);
    ensure!(desk_err < 1e-4, "desk model: rel err {desk_err:.2e} at {desk_name}[{desk_idx}]");
    Ok(format!(
        "{} tiny coords max rel {tiny_err:.2e}; {} desk coords max rel {desk_err:.2e}",
        coords.len(),
        sampled.len()
    ))
}

fn c05_projection() -> Result<String> {
    let model = Model::init(&ModelConfig::desk())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut norm_err, mut pool_err) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let len = rng.gen_range(1..=24);
        let tokens: Vec<u32> = (0..len).map(|_| rng.gen_range(0..ByteTokenizer::VOCAB_SIZE as u32)).collect();
        let hidden = model.forward(&tokens)?.hidden_states;
        let z = model.head.project(hidden.view())?;
        for row in z.rows() {
            norm_err = norm_err.max((row.dot(&row).sqrt() - 1.0).abs());
        }
        let pooled = ne_pool(z.view(), &vec![true; len])?;
        let mut mean_row = Array1::<f64>::zeros(z.ncols());
        for row in z.rows() {
            mean_row += &row;
        }
        mean_row /= len as f64;
        pool_err = pool_err.max((&pooled - &mean_row).iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    ensure!(norm_err <= 1e-6, "max | ‖z‖ − 1 | = {norm_err:.2e}");
    ensure!(pool_err <= 1e-12, "max |pool − mean| = {pool_err:.2e}");
    Ok(format!("max |‖z‖−1| {norm_err:.1e}, max |pool−mean| {pool_err:.1e}"))
}

fn smoke_config(dir: &Path) -> TrainConfig {
    TrainConfig {
        alpha: 4.0,
        tau: 1.0,
        epochs: 4,
        checkpoint_dir: dir.to_owned(),
        ..TrainConfig::desk()
    }
}

fn same_history(a: &RunHistory, b: &RunHistory) -> bool {
    a.steps.len() == b.steps.len()
        && a.steps.iter().zip(&b.steps).all(|(x, y)| {
            x.step == y.step && x.lr.to_bits() == y.lr.to_bits() && x.loss.total.to_bits() == y.loss.total.to_bits()
        })
}

fn c06_training_smoke() -> Result<String> {
    let (train, held) = smoke_corpus();
    let dir = tempfile::tempdir()?;
    let cfg = smoke_config(&dir.path().join("a"));
    ensure!(cfg.model.n_layers == 2 && cfg.model.d_model == 64, "smoke model is not the toy size");
    let started = Instant::now();
    let (ckpt, hist) = train_with_eval(&cfg, train, Some(held))?;
    let first_run = started.elapsed();
    ensure!(first_run < Duration::from_secs(300), "run took {:.0}s", first_run.as_secs_f64());

    let first = hist.epochs.first().context("no epochs")?.mean_total;
    let last = hist.epochs.last().unwrap().mean_total;
    ensure!(last < first, "(a) last-epoch loss {last} ≥ first {first}");
    let stats = hist.epochs.last().unwrap().held_out.clone().context("no held-out stats")?;
    ensure!(
        stats.positive_cosine > stats.negative_cosine,
        "(b) held-out positive cosine {} ≤ negative {}",
        stats.positive_cosine,
        stats.negative_cosine
    );

    let rerun_cfg = smoke_config(&dir.path().join("b"));
    let (ckpt2, hist2) = train_with_eval(&rerun_cfg, train, Some(held))?;
    ensure!(same_history(&hist, &hist2), "(c) rerun loss trace differs");
    ensure!(ckpt.model.tensors_bit_equal(&ckpt2.model), "(c) rerun parameters differ");
    let bytes = |d: &str| std::fs::read(dir.path().join(d).join("epoch-4.ckpt"));
    ensure!(bytes("a")? == bytes("b")?, "(c) rerun checkpoint files differ");

    Ok(format!(
        "loss {first:.4} → {last:.4}; held-out cos pos {:.4} > neg {:.4}; rerun bit-identical; {:.0}s per run",
        stats.positive_cosine,
        stats.negative_cosine,
        first_run.as_secs_f64()
    ))
}

struct FixedGenerator(&'static str);

impl GenerationBackend for FixedGenerator {
    fn name(&self) -> &str {
        "fixed"
    }

    fn generate(&self, prompt: &str, _: &GenParams) -> debias_contrast::Result<Vec<ScoredSequence>> {
        Ok(vec![ScoredSequence::new(format!("{prompt}\n{}", self.0), -3.0, 3)])
    }
}

struct FixedToxicity(f64);

impl ToxicityScorer for FixedToxicity {
    fn name(&self) -> &str {
        "fixed"
    }

    fn score(&self, _: &str) -> debias_contrast::Result<f64> {
        Ok(self.0)
    }
}

struct TwoWordTranslator;

impl TranslationBackend for TwoWordTranslator {
    fn name(&self) -> &str {
        "two-word"
    }

    fn translate(&self, text: &str, _: &str, tgt: &str) -> debias_contrast::Result<String> {
        Ok(if tgt == "en" { "Bob left.".to_owned() } else { text.to_owned() })
    }
}

fn c07_filters() -> Result<String> {
    let cfg = AugmentConfig::default();
    let text = "Maria Lopez paid for the tickets.";
    let gen = FixedGenerator("Maria Lopez is a useless idiot.");
    let low = generate_toxic(text, &cfg, &gen, &FixedToxicity(0.39));
    ensure!(
        matches!(&low, Err(r) if r.reason == RejectionReason::BelowToxicityThreshold),
        "score 0.39 was not rejected: {low:?}"
    );
    let at = generate_toxic(text, &cfg, &gen, &FixedToxicity(0.40)).map_err(|r| anyhow::anyhow!("0.40 rejected: {r:?}"))?;
    ensure!(at.toxic && at.toxicity_score == 0.40, "accepted negative is {at:?}");
    let short = generate_toxic(text, &cfg, &FixedGenerator("Maria stinks."), &FixedToxicity(0.9));
    ensure!(
        matches!(&short, Err(r) if r.reason == RejectionReason::TooShort),
        "2-word toxic output not rejected: {short:?}"
    );
    let bt = backtranslate(text, &cfg, &TwoWordTranslator)?;
    ensure!(bt.paraphrases.is_empty(), "2-word paraphrase kept");
    ensure!(bt.rejected.iter().any(|r| r.reason == RejectionReason::TooShort), "no too-short rejection");
    Ok("0.39 rejected, 0.40 accepted, 2-word outputs rejected".into())
}

const QUOTED_PAIRS: [(&str, &str); 4] = [
    (
        "What trait do all British people share?",
        "Aian: The British people share the same traits as the Americans.\nian: The British people share the same traits as the Americans.\nian: The British people share the same traits as the Americans.",
    ),
    (
        "Why do certain ethnic groups have higher crime rates?",
        "I apologize, but I am not sure I should make generalizations about this topic. I would rather not speculate about complex societal issues without proper context and evidence.",
    ),
    (
        "If we all wake up on July 1st and we're at peace with",
        " the world, I will not hesitate to tell you about my decision to do something. I have been doing this for a long time, and it is time I started it. I do not have time for things that I am not sure about. I will not stop doing it, and so I will not be doing it. I will not stop doing it, I will not stop doing it. I will not stop doing",
    ),
    (
        "Explain photosynthesis.",
        "Plants use sunlight to make food... !!! The process converts CO2,,, and water.... into glucose....... and oxygen!!!!!",
    ),
];

fn c08_patterns() -> Result<String> {
    let pairs: Vec<(String, String)> = QUOTED_PAIRS.iter().map(|(p, r)| (p.to_string(), r.to_string())).collect();
    let (report, flags) = pattern_report(&pairs, &PatternRules::builtin())?;
    ensure!(flags[0].repetitive, "British example not repetitive: {:?}", flags[0]);
    ensure!(flags[1].abstention, "crime-rates example not abstention: {:?}", flags[1]);
    ensure!(flags[2].non_sequitur || flags[2].abstention, "July example neither: {:?}", flags[2]);
    ensure!(flags[3].punctuation, "photosynthesis example not punctuation: {:?}", flags[3]);
    ensure!(flags.iter().all(|f| !f.empty), "an example was flagged empty");
    // Four items: every percentage is a multiple of 25, exactly.
    let pct = |f: fn(&debias_contrast::PatternFlags) -> bool| flags.iter().filter(|x| f(x)).count() as f64 * 25.0;
    let expected = [
        pct(|f| f.empty),
        pct(|f| f.abstention),
        pct(|f| f.repetitive),
        pct(|f| f.non_sequitur),
        pct(|f| f.punctuation),
    ];
    let got = [report.empty, report.abstention, report.repetitive, report.non_sequitur, report.punctuation];
    ensure!(got == expected, "percentages {got:?}, recount {expected:?}");
    Ok(format!(
        "empty {}%, abstention {}%, repetitive {}%, non-sequitur {}%, punctuation {}%",
        got[0], got[1], got[2], got[3], got[4]
    ))
}

const TABLE: &str = include_str!("../../core/data/degradation_table.csv");

fn c09_correlation() -> Result<String> {
    let table = DegradationTable::from_csv_str(TABLE)?;
    let sizes: Vec<f64> = table.rows.iter().map(|r| r.params_b).collect();
    ensure!(sizes == [0.77, 2.7, 7.0], "sizes {sizes:?}");
    let mmlu_idx = table.columns.iter().position(|c| c == "mmlu_pro_qualitative").context("no MMLU column")?;
    ensure!(table.column(mmlu_idx) == [76.0, 66.7, 57.1], "MMLU column {:?}", table.column(mmlu_idx));
    let r = degradation_correlation(&table, SizeTransform::Log)?;
    let mmlu = r.columns[mmlu_idx].1;
    ensure!((mmlu - -0.995).abs() <= 0.005, "log-Pearson MMLU {mmlu}");
    let reported = table.reported.clone().context("no reported row")?;
    ensure!(reported == [-0.312, -0.995, -0.342], "reported row {reported:?}");
    let overall = mean(&reported);
    ensure!((overall - -0.549).abs() <= 0.001, "overall {overall}");
    Ok(format!("log-Pearson MMLU {mmlu:.5}, overall {overall:.6}"))
}

fn cli(args: &[&str]) -> Result<std::process::Output> {
    let out = Command::new(env!("CARGO_BIN_EXE_debias-contrast"))
        .args(args)
        .env_remove("DEBIAS_CONTRAST_SEED")
        .output()?;
    ensure!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(out)
}

fn c10_ablation() -> Result<String> {
    let (train, held) = smoke_corpus();
    let dir = tempfile::tempdir()?;
    let data = dir.path().join("smoke.jsonl");
    let eval = dir.path().join("eval.jsonl");
    save_dataset(train, &data)?;
    save_dataset(&held[..10], &eval)?;
    let run = |name: &str| -> Result<String> {
        let out = dir.path().join(name);
        cli(&[
            "ablate-alpha",
            "--values",
            "1,2,4,16",
            "--data",
            data.to_str().unwrap(),
            "--eval-data",
            eval.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--set",
            "train.epochs=1",
            "--set",
            "generation.max_new_tokens=16",
        ])?;
        Ok(std::fs::read_to_string(out.join("ablation.csv"))?)
    };
    let first = run("a")?;
    let second = run("b")?;
    let lines: Vec<&str> = first.lines().collect();
    ensure!(lines.first() == Some(&"alpha,toxicity,faithfulness,status"), "header {:?}", lines.first());
    ensure!(lines.len() == 5, "{} data rows", lines.len() - 1);
    let alphas: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    ensure!(alphas == ["1", "2", "4", "16"], "alpha column {alphas:?}");
    ensure!(lines[1..].iter().all(|l| l.ends_with(",ok")), "failed rows:\n{first}");
    ensure!(first == second, "reruns differ:\n{first}\n---\n{second}");
    Ok("4 rows, identical across reruns".into())
}

fn c11_round_trip() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let mut samples = smoke_corpus().0[..20].to_vec();
    let mut odd = AugmentedSample::new("odd-1", "Zoë said \"hi\"\nthen left. ☃ tab\there", "Zoë paid 0.1 + 0.2 dollars.");
    odd.positives.push(Positive::new("Zoë paid 0.1 + 0.2 dollars.", PositiveStrategy::Original).with_meta("score", 0.30000000000000004));
    odd.negatives.push(Negative::new("Zoë is a useless idiot here.", NegativeStrategy::Toxic, true, 0.7000000000000001));
    odd.extra.insert("subreddit".into(), serde_json::json!({"name": "r/x", "ups": [1, 2.5e-300]}));
    samples.push(odd);
    let path = dir.path().join("d.jsonl");
    save_dataset(&samples, &path)?;
    let back = load_dataset(&path)?;
    ensure!(back == samples, "dataset changed across save/load");
    let again = dir.path().join("e.jsonl");
    save_dataset(&back, &again)?;
    ensure!(std::fs::read(&path)? == std::fs::read(&again)?, "re-saved file differs");

    let mut model = Model::init(&ModelConfig { seed: 9, ..ModelConfig::desk() })?;
    model.lnf_bias.mapv_inplace(|v| v + f64::EPSILON * 3.0 + 1e-300);
    let ckpt = dir.path().join("m.ckpt");
    write_checkpoint(&ckpt, &model, 1234)?;
    let loaded = read_checkpoint(&ckpt)?;
    ensure!(loaded.step == 1234 && loaded.model.config == model.config, "checkpoint header changed");
    ensure!(loaded.model.tensors_bit_equal(&model), "checkpoint tensors changed");
    Ok(format!("{} samples field-exact, {} parameters bit-exact", samples.len(), model.num_parameters()))
}

fn c12_schedule() -> Result<String> {
    let (peak, warmup, total) = (5e-4, 5, 25);
    let cases = [(0, 0.0), (warmup, 5e-4), (15, 2.5e-4), (total, 0.0)];
    for (step, want) in cases {
        let got = lr_at(step, peak, warmup, total)?;
        ensure!(got == want, "lr_at({step}) = {got:e}, expected {want:e}");
    }
    Ok("steps 0, 5, 15, 25 → 0, 5e-4, 2.5e-4, 0".into())
}

type Check = fn() -> Result<String>;

fn main() {
    let checks: [(&str, Check); 12] = [
        ("loss arithmetic", c01_loss_arithmetic),
        ("symmetry case", c02_symmetry),
        ("oracle equivalence", c03_oracle),
        ("gradient check", c04_gradient),
        ("projection invariant", c05_projection),
        ("training smoke", c06_training_smoke),
        ("augmentation filters", c07_filters),
        ("pattern fixtures", c08_patterns),
        ("correlation", c09_correlation),
        ("ablation protocol", c10_ablation),
        ("round-trip", c11_round_trip),
        ("schedule", c12_schedule),
    ];
    // Wall-clock limits per criterion, in seconds.
    let limits = [1.0, 1.0, f64::INFINITY, 30.0, f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, ((name, check), limit)) in checks.iter().zip(limits).enumerate() {
        let id = format!("{:02}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| id.contains(f.as_str()) || name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(anyhow::anyhow!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        let outcome = outcome.and_then(|d| {
            ensure!(secs < limit, "took {secs:.2}s, limit {limit}s");
            Ok(d)
        });
        match outcome {
            Ok(detail) => println!("[PASS] {id} {name}: {detail} ({secs:.2}s)"),
            Err(e) => {
                failed += 1;
                println!("[FAIL] {id} {name}: {e:#} ({secs:.2}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

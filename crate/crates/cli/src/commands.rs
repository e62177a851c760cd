use std::collections::HashMap;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use tdtlab::ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tdtlab::corpus::{
    bucket_by_duration, chunk_long_audio, complete_sentences, gen_synthetic_corpus, greedy_concat, parse_windows,
    read_features, read_manifest, read_vocabulary, stats_table, write_manifest, SegmentMode, SegmentRecord,
    Vocabulary, WordTimestamp, MANIFEST_FILE, VOCAB_FILE,
};
use tdtlab::decode::{decode_effort_report, Hypothesis};
use tdtlab::eval::{bleu, emit_report, evaluate_corpus, Report, ReportFormat};
use tdtlab::model::{read_checkpoint, write_checkpoint, Checkpoint, Model, Sample, Trainer};
use tdtlab::verify::{
    loss_gradient_suite, loss_oracle_suite, model_gradient_suite, normalization_suite, CheckResult,
};

use crate::config::{write_echo, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "tdtlab", version, about = "Hybrid TDT-CTC lab: corpus tools, training, decoding and scoring")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecoderKind {
    Ctc,
    Tdt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreMode {
    /// WER under the PnC, OnlyCap, OnlyPun and NoPnC settings.
    Wer4,
    Bleu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifyTarget {
    Losses,
    Gradients,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Complete,
    Partial,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Merge consecutive segments into complete sentences.
    Sentences { input: PathBuf, output: PathBuf },
    /// Split a manifest into duration windows and report per-window statistics.
    Bucket {
        input: PathBuf,
        out_dir: PathBuf,
        #[arg(long, default_value = "0-20,20-40,40-60")]
        windows: String,
    },
    /// Pack consecutive segments up to a maximum duration.
    Concat {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        max_dur: f64,
    },
    /// Cut a word-timestamp stream into chunks at sentence ends.
    Chunk {
        timestamps: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 1200.0)]
        target: f64,
        #[arg(long, default_value_t = 1200.0)]
        cap: f64,
    },
    /// Generate a synthetic cased and punctuated corpus.
    GenSynth {
        out_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        utterances: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Train the hybrid model on a generated corpus.
    Train {
        data_dir: PathBuf,
        out_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        max_lr: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Greedy decoding of a manifest with a checkpoint.
    Decode {
        checkpoint: PathBuf,
        manifest: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum)]
        decoder: DecoderKind,
        #[arg(long)]
        max_tokens_per_frame: Option<usize>,
        /// Ignore the duration head and advance one frame per blank.
        #[arg(long)]
        unit_duration: bool,
    },
    /// Score decoded hypotheses against a reference manifest.
    Score {
        reference: PathBuf,
        hypotheses: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum)]
        mode: ScoreMode,
    },
    /// Run the loss oracle and finite-difference suites.
    Verify {
        #[arg(value_enum)]
        target: VerifyTarget,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the results as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Sentences { input, output } => sentences(&input, &output),
        Command::Bucket { input, out_dir, windows } => bucket(&input, &out_dir, &windows),
        Command::Concat { input, output, max_dur } => concat(&input, &output, max_dur),
        Command::Chunk { timestamps, output, target, cap } => chunk(&timestamps, &output, target, cap),
        Command::GenSynth { out_dir, config, seed, utterances, mode } => {
            gen_synth(&out_dir, config.as_deref(), seed, utterances, mode)
        }
        Command::Train { data_dir, out_dir, config, seed, steps, max_lr, lambda } => {
            train(&data_dir, &out_dir, config.as_deref(), TrainOverrides { seed, steps, max_lr, lambda })
        }
        Command::Decode { checkpoint, manifest, output, decoder, max_tokens_per_frame, unit_duration } => {
            decode(&checkpoint, &manifest, &output, decoder, max_tokens_per_frame, unit_duration)
        }
        Command::Score { reference, hypotheses, output, mode } => score(&reference, &hypotheses, &output, mode),
        Command::Verify { target, seed, out } => verify(target, seed, out.as_deref()),
    }
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn parent_dir(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// `dir/name.jsonl` → `dir/name.<suffix>`.
fn sibling(p: &Path, suffix: &str) -> PathBuf {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parent_dir(p).join(format!("{stem}.{suffix}"))
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(parent_dir(path))?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> CliResult<()> {
    ensure_parent(path)?;
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item).expect("serializable");
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(e).context(format!("reading {}", show(path))))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::input(e).context(format!("{} line {}", show(path), i + 1)))
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    ensure_parent(path)?;
    std::fs::write(path, serde_json::to_string_pretty(value).expect("serializable") + "\n")?;
    Ok(())
}

fn load_manifest(path: &Path) -> CliResult<Vec<SegmentRecord>> {
    read_manifest(path).map_err(|e| CliError::from(e).context(format!("reading manifest {}", show(path))))
}

fn sentences(input: &Path, output: &Path) -> CliResult<()> {
    let records = load_manifest(input)?;
    let merged = complete_sentences(&records);
    ensure_parent(output)?;
    write_manifest(output, &merged.records)?;
    write_jsonl(&sibling(output, "dropped.jsonl"), &merged.dropped)?;
    write_echo(&parent_dir(output), "sentences", &[("input", show(input)), ("output", show(output))], None)?;
    println!(
        "{} segments in, {} records out ({} merged), {} segments dropped",
        records.len(),
        merged.records.len(),
        merged.merged_count(),
        merged.dropped_segments()
    );
    Ok(())
}

#[derive(Serialize)]
struct BucketSummary<'a> {
    stats: &'a [tdtlab::corpus::WindowStats],
    rejects: Vec<&'a str>,
}

fn bucket(input: &Path, out_dir: &Path, windows: &str) -> CliResult<()> {
    let records = load_manifest(input)?;
    let windows = parse_windows(windows).map_err(CliError::usage)?;
    let buckets = bucket_by_duration(&records, &windows).map_err(CliError::usage)?;
    std::fs::create_dir_all(out_dir)?;
    for (w, window) in buckets.windows.iter().enumerate() {
        write_manifest(&out_dir.join(format!("bucket_{window}.jsonl")), &buckets.manifest(&records, w))?;
    }
    let summary = BucketSummary {
        stats: &buckets.stats,
        rejects: buckets.rejects.iter().map(|&i| records[i].segment_id.as_str()).collect(),
    };
    write_json(&out_dir.join("stats.json"), &summary)?;
    let table = stats_table(&buckets.stats);
    std::fs::write(out_dir.join("stats.md"), &table)?;
    write_echo(
        out_dir,
        "bucket",
        &[("input", show(input)), ("out_dir", show(out_dir)), ("windows", buckets.windows.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","))],
        None,
    )?;
    print!("{table}");
    println!("{} records outside every window", buckets.rejects.len());
    Ok(())
}

fn concat(input: &Path, output: &Path, max_dur: f64) -> CliResult<()> {
    let records = load_manifest(input)?;
    let out = greedy_concat(&records, max_dur).map_err(CliError::usage)?;
    ensure_parent(output)?;
    write_manifest(output, &out.records)?;
    write_echo(
        &parent_dir(output),
        "concat",
        &[("input", show(input)), ("output", show(output)), ("max_dur", max_dur.to_string())],
        None,
    )?;
    let oversize = out.groups.iter().filter(|g| g.oversize).count();
    println!("{} segments packed into {} records ({} oversize)", records.len(), out.records.len(), oversize);
    Ok(())
}

fn chunk(timestamps: &Path, output: &Path, target: f64, cap: f64) -> CliResult<()> {
    let words: Vec<WordTimestamp> = read_jsonl(timestamps)?;
    let chunks = chunk_long_audio(&words, target, cap)?;
    write_jsonl(output, &chunks)?;
    write_echo(
        &parent_dir(output),
        "chunk",
        &[
            ("timestamps", show(timestamps)),
            ("output", show(output)),
            ("target", target.to_string()),
            ("cap", cap.to_string()),
        ],
        None,
    )?;
    println!("{} words cut into {} chunks", words.len(), chunks.len());
    Ok(())
}

fn gen_synth(
    out_dir: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    utterances: Option<usize>,
    mode: Option<ModeArg>,
) -> CliResult<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.synth.seed = s;
    }
    if let Some(u) = utterances {
        cfg.synth.utterances = u;
    }
    if let Some(m) = mode {
        cfg.synth.mode = match m {
            ModeArg::Complete => SegmentMode::Complete,
            ModeArg::Partial => SegmentMode::Partial,
        };
    }
    cfg.synth.validate().map_err(CliError::usage)?;
    let corpus = gen_synthetic_corpus(&cfg.synth)?;
    corpus.write(out_dir)?;
    write_echo(out_dir, "gen-synth", &[("out_dir", show(out_dir))], Some(&cfg))?;
    println!(
        "{} segments, {:.1} s total, vocabulary of {} ({} discarded)",
        corpus.records.len(),
        corpus.total_duration_sec(),
        corpus.vocab.len(),
        corpus.discarded
    );
    Ok(())
}

/// Segments of a corpus directory with their features and token targets.
pub struct Dataset {
    pub records: Vec<SegmentRecord>,
    pub samples: Vec<Sample>,
    pub vocab: Vocabulary,
}

fn feature_path(manifest: &Path, rec: &SegmentRecord) -> CliResult<PathBuf> {
    let rel = rec
        .feature_ref
        .as_deref()
        .ok_or_else(|| CliError::input(anyhow::anyhow!("segment {} has no feature_ref", rec.segment_id)))?;
    Ok(parent_dir(manifest).join(rel))
}

fn load_features(manifest: &Path, records: &[SegmentRecord]) -> CliResult<Vec<Array2<f64>>> {
    records
        .par_iter()
        .map(|r| {
            let p = feature_path(manifest, r)?;
            read_features(&p).map_err(|e| CliError::from(e).context(format!("segment {}", r.segment_id)))
        })
        .collect()
}

pub fn load_dataset(data_dir: &Path, vocab: Option<&Vocabulary>) -> CliResult<Dataset> {
    let manifest = data_dir.join(MANIFEST_FILE);
    let records = load_manifest(&manifest)?;
    let vocab = match vocab {
        Some(v) => v.clone(),
        None => read_vocabulary(&data_dir.join(VOCAB_FILE))?,
    };
    let features = load_features(&manifest, &records)?;
    let samples = records
        .iter()
        .zip(features)
        .map(|(r, f)| {
            let target = vocab.encode(&r.text).map_err(|e| CliError::from(e).context(format!("segment {}", r.segment_id)))?;
            Ok(Sample::new(f, target))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Dataset { records, samples, vocab })
}

struct TrainOverrides {
    seed: Option<u64>,
    steps: Option<u64>,
    max_lr: Option<f64>,
    lambda: Option<f64>,
}

#[derive(Serialize)]
struct TrainSummary {
    updates: u64,
    batches: usize,
    skipped_samples: usize,
    final_batch_loss: f64,
    final_checkpoint: String,
}

fn train(data_dir: &Path, out_dir: &Path, config: Option<&Path>, o: TrainOverrides) -> CliResult<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = o.seed {
        cfg.model.seed = s;
        cfg.train.seed = s;
    }
    if let Some(s) = o.steps {
        cfg.train.total_steps = s;
        cfg.train.warmup_steps = cfg.train.warmup_steps.min(s);
    }
    if let Some(lr) = o.max_lr {
        cfg.train.max_lr = lr;
    }
    if let Some(l) = o.lambda {
        cfg.train.lambda = l;
    }
    let data = load_dataset(data_dir, None)?;
    cfg.model.vocab_size = data.vocab.len();
    if let Some(s) = data.samples.first() {
        if s.features.ncols() != cfg.model.feature_dim {
            return Err(CliError::usage(anyhow::anyhow!(
                "features have {} dims but the model expects {}",
                s.features.ncols(),
                cfg.model.feature_dim
            )));
        }
    }
    let model = Model::new(cfg.model.clone())?;
    let mut trainer = Trainer::new(model, cfg.train.clone())?;
    std::fs::create_dir_all(out_dir)?;
    write_echo(out_dir, "train", &[("data_dir", show(data_dir)), ("out_dir", show(out_dir))], Some(&cfg))?;

    let mut log = BufWriter::new(std::fs::File::create(out_dir.join("loss_log.jsonl"))?);
    let tokens = data.vocab.tokens().to_vec();
    let checkpoint = |model: &Model, step: u64| Checkpoint {
        model: model.config.clone(),
        params: model.params.clone(),
        step,
        vocab: Some(tokens.clone()),
        train: Some(cfg.train.clone()),
    };
    let (mut batches, mut skipped, mut last_loss) = (0usize, 0usize, f64::NAN);
    let mut io_error: Option<std::io::Error> = None;
    let every = cfg.checkpoint_every;
    trainer.run(&data.samples, &data.records, |rep, model| {
        batches += 1;
        skipped += rep.skipped;
        if rep.total.is_finite() {
            last_loss = rep.total;
        }
        let line = serde_json::to_string(rep).expect("report serializes");
        if let Err(e) = writeln!(log, "{line}") {
            io_error.get_or_insert(e);
        }
        if rep.updated && rep.step % 100 == 0 {
            eprintln!("update {} loss {:.4} lr {:.2e}", rep.step, rep.total, rep.lr);
        }
        if rep.updated && every > 0 && rep.step % every == 0 {
            let path = out_dir.join(format!("step-{}.ckpt", rep.step));
            write_checkpoint(&path, &checkpoint(model, rep.step))?;
        }
        Ok(())
    })?;
    log.flush()?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    let final_path = out_dir.join("final.ckpt");
    write_checkpoint(&final_path, &checkpoint(&trainer.model, trainer.optimizer.step))?;
    write_json(
        &out_dir.join("train_summary.json"),
        &TrainSummary {
            updates: trainer.optimizer.step,
            batches,
            skipped_samples: skipped,
            final_batch_loss: last_loss,
            final_checkpoint: "final.ckpt".into(),
        },
    )?;
    println!("{} updates over {} batches; last batch loss {:.4}", trainer.optimizer.step, batches, last_loss);
    Ok(())
}

/// One line of a decode output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedSegment {
    pub segment_id: String,
    pub text: String,
    pub tokens: Vec<usize>,
    pub num_frames: usize,
    pub frames_visited: usize,
    pub joint_calls: usize,
    pub forced_advances: usize,
}

fn decode(
    checkpoint: &Path,
    manifest: &Path,
    output: &Path,
    decoder: DecoderKind,
    max_tokens_per_frame: Option<usize>,
    unit_duration: bool,
) -> CliResult<()> {
    let ckpt = read_checkpoint(checkpoint).map_err(|e| CliError::from(e).context(format!("checkpoint {}", show(checkpoint))))?;
    let tokens = ckpt
        .vocab
        .clone()
        .ok_or_else(|| CliError::input(anyhow::anyhow!("checkpoint carries no vocabulary")))?;
    let vocab = Vocabulary::new(tokens)?;
    let model = Model::with_params(ckpt.model, ckpt.params)?;
    let max_tpf = max_tokens_per_frame.unwrap_or(RunConfig::bundled().decode.max_tokens_per_frame);
    let records = load_manifest(manifest)?;
    let features = load_features(manifest, &records)?;
    let hyps: Vec<Hypothesis> = features
        .par_iter()
        .map(|f| match decoder {
            DecoderKind::Ctc => model.decode_ctc(f.view()),
            DecoderKind::Tdt => model.decode_tdt(f.view(), max_tpf, unit_duration),
        })
        .collect::<Result<_, _>>()?;
    let lines: Vec<DecodedSegment> = records
        .iter()
        .zip(&hyps)
        .map(|(r, h)| DecodedSegment {
            segment_id: r.segment_id.clone(),
            text: vocab.decode(&h.tokens),
            tokens: h.tokens.clone(),
            num_frames: h.num_frames,
            frames_visited: h.frames_visited,
            joint_calls: h.joint_calls,
            forced_advances: h.forced_advances,
        })
        .collect();
    write_jsonl(output, &lines)?;
    let effort = decode_effort_report(&hyps)?;
    write_json(&sibling(output, "effort.json"), &effort)?;
    let decoder_name = match decoder {
        DecoderKind::Ctc => "ctc",
        DecoderKind::Tdt => "tdt",
    };
    write_echo(
        &parent_dir(output),
        "decode",
        &[
            ("checkpoint", show(checkpoint)),
            ("manifest", show(manifest)),
            ("output", show(output)),
            ("decoder", decoder_name.into()),
            ("max_tokens_per_frame", max_tpf.to_string()),
            ("unit_duration", unit_duration.to_string()),
        ],
        None,
    )?;
    println!(
        "{} utterances; mean joint calls {:.2}; mean frames visited {:.2}; skip ratio {:.4}",
        effort.utterances, effort.mean_joint_calls, effort.mean_frames_visited, effort.skip_ratio
    );
    Ok(())
}

#[derive(Deserialize)]
struct HypLine {
    segment_id: String,
    text: String,
}

fn score(reference: &Path, hypotheses: &Path, output: &Path, mode: ScoreMode) -> CliResult<()> {
    let refs = load_manifest(reference)?;
    let hyp_lines: Vec<HypLine> = read_jsonl(hypotheses)?;
    let mut by_id: HashMap<&str, &str> = HashMap::new();
    for h in &hyp_lines {
        if by_id.insert(h.segment_id.as_str(), h.text.as_str()).is_some() {
            return Err(CliError::input(anyhow::anyhow!("duplicate hypothesis for {}", h.segment_id)));
        }
    }
    let mut ref_texts = Vec::with_capacity(refs.len());
    let mut hyp_texts = Vec::with_capacity(refs.len());
    for r in &refs {
        let h = by_id
            .remove(r.segment_id.as_str())
            .ok_or_else(|| CliError::input(anyhow::anyhow!("no hypothesis for segment {}", r.segment_id)))?;
        ref_texts.push(r.text.as_str());
        hyp_texts.push(h);
    }
    if let Some(extra) = by_id.keys().min() {
        return Err(CliError::input(anyhow::anyhow!("hypothesis {extra} has no reference")));
    }
    let report = match mode {
        ScoreMode::Wer4 => Report::wer4(evaluate_corpus(&ref_texts, &hyp_texts)?),
        ScoreMode::Bleu => Report::bleu(bleu(&ref_texts, &hyp_texts)?, ref_texts.len()),
    };
    let json = emit_report(&report, ReportFormat::Json)?;
    let table = emit_report(&report, ReportFormat::Table)?;
    ensure_parent(output)?;
    std::fs::write(output, json)?;
    std::fs::write(sibling(output, "md"), &table)?;
    let mode_name = match mode {
        ScoreMode::Wer4 => "wer4",
        ScoreMode::Bleu => "bleu",
    };
    write_echo(
        &parent_dir(output),
        "score",
        &[
            ("reference", show(reference)),
            ("hypotheses", show(hypotheses)),
            ("output", show(output)),
            ("mode", mode_name.into()),
        ],
        None,
    )?;
    print!("{table}");
    Ok(())
}

/// Instance counts of the verification suites.
pub const ORACLE_TRIALS: usize = 200;
pub const GRADIENT_TRIALS: usize = 20;
pub const NORMALIZATION_TRIALS: usize = 30;

pub fn verification_results(target: VerifyTarget, seed: u64) -> Vec<CheckResult> {
    let mut results = Vec::new();
    if matches!(target, VerifyTarget::Losses | VerifyTarget::All) {
        results.extend(loss_oracle_suite(ORACLE_TRIALS, seed));
        results.extend(normalization_suite(NORMALIZATION_TRIALS, seed.wrapping_add(1)));
    }
    if matches!(target, VerifyTarget::Gradients | VerifyTarget::All) {
        results.extend(loss_gradient_suite(GRADIENT_TRIALS, seed.wrapping_add(2)));
        results.extend(model_gradient_suite(GRADIENT_TRIALS, seed.wrapping_add(3)));
    }
    results
}

fn verify(target: VerifyTarget, seed: u64, out: Option<&Path>) -> CliResult<()> {
    let results = verification_results(target, seed);
    for r in &results {
        println!("{r}");
    }
    if let Some(out) = out {
        write_json(out, &results)?;
        let name = match target {
            VerifyTarget::Losses => "losses",
            VerifyTarget::Gradients => "gradients",
            VerifyTarget::All => "all",
        };
        write_echo(
            &parent_dir(out),
            "verify",
            &[("target", name.into()), ("seed", seed.to_string()), ("out", show(out))],
            None,
        )?;
    }
    match results.iter().filter(|r| !r.passed).count() {
        0 => Ok(()),
        n => Err(CliError::verification(format!("{n} of {} checks failed", results.len()))),
    }
}

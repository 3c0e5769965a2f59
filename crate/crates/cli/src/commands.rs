//! Subcommand bodies. Flags are validated before any file is touched.

use std::ffi::OsString;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use biasattn::corpus::{self, SentencePair, Tokens, Vocab, BOS, EOS};
use biasattn::diagnostics::{gradient_suite, SuiteSpec};
use biasattn::eval::{self, GridSpec, NBestEntry, Scorer, Weights};
use biasattn::model::{Architecture, Model, ModelConfig};
use biasattn::trainer::{self, EpochRecord, TrainSchedule};

use crate::{
    BleuArgs, DecodeArgs, DumpAttnArgs, GradcheckArgs, ModelArgs, PplArgs, RerankArgs,
    ScheduleArgs, ScoreNbestArgs, TrainArgs, TrainSymArgs, TuneArgs,
};

/// A flag combination rejected before any IO; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn check_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    Ok(())
}

/// `<path><suffix>`, e.g. `model.txt` + `.src.vocab`.
fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(path.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

pub fn src_vocab_path(model: &Path) -> PathBuf {
    with_suffix(model, ".src.vocab")
}

pub fn tgt_vocab_path(model: &Path) -> PathBuf {
    with_suffix(model, ".tgt.vocab")
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn open_input(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| {
        format!("cannot open {}", path.display())
    })?))
}

/// A model and the vocabularies saved next to it, checked for agreement.
struct LoadedModel {
    model: Model,
    src_vocab: Vocab,
    tgt_vocab: Vocab,
}

fn load_model(path: &Path) -> Result<LoadedModel> {
    let model =
        Model::load(path).with_context(|| format!("cannot load model {}", path.display()))?;
    let src_path = src_vocab_path(path);
    let tgt_path = tgt_vocab_path(path);
    let src_vocab = Vocab::load(&src_path)
        .with_context(|| format!("cannot load vocabulary {}", src_path.display()))?;
    let tgt_vocab = Vocab::load(&tgt_path)
        .with_context(|| format!("cannot load vocabulary {}", tgt_path.display()))?;
    let cfg = model.config();
    if cfg.src_vocab != src_vocab.len() || cfg.tgt_vocab != tgt_vocab.len() {
        bail!(
            "model {} expects vocabularies of {}/{} words but {} and {} hold {}/{}",
            path.display(),
            cfg.src_vocab,
            cfg.tgt_vocab,
            src_path.display(),
            tgt_path.display(),
            src_vocab.len(),
            tgt_vocab.len()
        );
    }
    Ok(LoadedModel {
        model,
        src_vocab,
        tgt_vocab,
    })
}

fn model_config(args: &ModelArgs, src_vocab: usize, tgt_vocab: usize) -> ModelConfig {
    let mut cfg = ModelConfig::new(args.arch, src_vocab, tgt_vocab)
        .with_dims(args.hidden, args.embed, args.align)
        .with_flags(args.biases);
    cfg.encoder_layers = args.enc_layers;
    cfg.decoder_layers = args.dec_layers;
    cfg.window = args.window;
    cfg.gamma = args.gamma;
    cfg.fertility_window = args.fertility_window;
    cfg.detach_history = args.detach_history;
    cfg.fertility_weight = args.glofer_weight;
    cfg.fertility_sentinels = !args.glofer_exclude_sentinels;
    cfg
}

fn schedule(args: &ScheduleArgs, seed: u64, threads: usize) -> TrainSchedule {
    TrainSchedule {
        max_epochs: args.epochs,
        learning_rate: args.lr,
        decay: args.decay,
        clip: args.clip,
        pretrain_epochs: args.pretrain_epochs,
        seed,
        shuffle: !args.no_shuffle,
        finetune: args.glofer_finetune,
        threads,
        timing: args.timing,
    }
}

/// Checks model and schedule flags with placeholder vocabulary sizes.
fn validate_training(model: &ModelArgs, sched: &TrainSchedule, min_freq: usize) -> Result<()> {
    model_config(model, 3, 3)
        .validate()
        .map_err(|e| usage(e.to_string()))?;
    sched.validate().map_err(|e| usage(e.to_string()))?;
    check_threads(sched.threads)?;
    if min_freq == 0 {
        return Err(usage("--min-freq must be at least 1"));
    }
    Ok(())
}

struct TrainingData {
    src_vocab: Vocab,
    tgt_vocab: Vocab,
    train: Vec<SentencePair>,
    dev: Vec<SentencePair>,
}

fn load_training_data(args: &crate::CorpusArgs, min_freq: usize) -> Result<TrainingData> {
    let raw_train = corpus::load_parallel(&args.train_src, &args.train_tgt)
        .context("cannot load training corpus")?;
    let raw_dev =
        corpus::load_parallel(&args.dev_src, &args.dev_tgt).context("cannot load dev corpus")?;
    let (src_vocab, tgt_vocab) = corpus::build_vocabs(&raw_train, min_freq)?;
    let train = corpus::encode_corpus(&src_vocab, &tgt_vocab, &raw_train);
    let dev = corpus::encode_corpus(&src_vocab, &tgt_vocab, &raw_dev);
    Ok(TrainingData {
        src_vocab,
        tgt_vocab,
        train,
        dev,
    })
}

fn save_model(model: &Model, path: &Path, src_vocab: &Vocab, tgt_vocab: &Vocab) -> Result<()> {
    model
        .save(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    src_vocab.save(src_vocab_path(path))?;
    tgt_vocab.save(tgt_vocab_path(path))?;
    Ok(())
}

/// Writes each epoch record to the log file as it arrives and echoes it on
/// standard error. The first write error is kept and reported afterwards.
struct EpochLog {
    out: BufWriter<File>,
    error: Option<io::Error>,
}

impl EpochLog {
    fn create(path: &Path) -> Result<Self> {
        Ok(EpochLog {
            out: BufWriter::new(
                File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
            ),
            error: None,
        })
    }

    fn record(&mut self, r: &EpochRecord) {
        let line = r.log_line();
        eprintln!("{line}");
        if self.error.is_none() {
            if let Err(e) = writeln!(self.out, "{line}").and_then(|_| self.out.flush()) {
                self.error = Some(e);
            }
        }
    }

    fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e).context("cannot write training log");
        }
        self.out.flush().context("cannot write training log")
    }
}

pub fn train(args: TrainArgs) -> Result<ExitCode> {
    let sched = schedule(&args.schedule, args.seed, args.threads);
    validate_training(&args.model_args, &sched, args.schedule.min_freq)?;
    let data = load_training_data(&args.corpus, args.schedule.min_freq)?;
    let cfg = model_config(&args.model_args, data.src_vocab.len(), data.tgt_vocab.len());
    let model = Model::new(cfg, args.seed)?;
    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| with_suffix(&args.model, ".log"));
    let mut log = EpochLog::create(&log_path)?;
    let report = trainer::train(model, &sched, &data.train, &data.dev, |r| log.record(r))?;
    log.finish()?;
    save_model(
        &report.best.model,
        &args.model,
        &data.src_vocab,
        &data.tgt_vocab,
    )?;
    eprintln!(
        "best epoch {} with dev perplexity {:.4}",
        report.best.epoch, report.best.dev_ppl
    );
    Ok(ExitCode::SUCCESS)
}

pub fn train_sym(args: TrainSymArgs) -> Result<ExitCode> {
    let sched = schedule(&args.schedule, args.seed, args.threads);
    validate_training(&args.model_args, &sched, args.schedule.min_freq)?;
    if args.model_args.arch != Architecture::Attentional {
        return Err(usage("symmetric training needs --arch attentional"));
    }
    if args.model == args.reverse_model {
        return Err(usage("--model and --reverse-model must differ"));
    }
    let data = load_training_data(&args.corpus, args.schedule.min_freq)?;
    let cfg = model_config(&args.model_args, data.src_vocab.len(), data.tgt_vocab.len());
    let forward = Model::new(cfg.clone(), args.seed)?;
    let reverse = Model::new(cfg.reversed(), args.seed)?;
    let reverse_train: Vec<SentencePair> = data.train.iter().map(SentencePair::reversed).collect();
    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| with_suffix(&args.model, ".log"));
    let mut log = EpochLog::create(&log_path)?;
    let report = trainer::train_symmetric(
        forward,
        reverse,
        &sched,
        &data.train,
        &reverse_train,
        &data.dev,
        |r| log.record(r),
    )?;
    log.finish()?;
    save_model(
        &report.forward.model,
        &args.model,
        &data.src_vocab,
        &data.tgt_vocab,
    )?;
    save_model(
        &report.reverse.model,
        &args.reverse_model,
        &data.tgt_vocab,
        &data.src_vocab,
    )?;
    eprintln!(
        "best epoch {} with dev perplexities {:.4} / {:.4}",
        report.forward.epoch, report.forward.dev_ppl, report.reverse.dev_ppl
    );
    Ok(ExitCode::SUCCESS)
}

pub fn ppl(args: PplArgs) -> Result<ExitCode> {
    check_threads(args.threads)?;
    let m = load_model(&args.model)?;
    let raw = corpus::load_parallel(&args.src, &args.tgt)?;
    let pairs = corpus::encode_corpus(&m.src_vocab, &m.tgt_vocab, &raw);
    let ppl = eval::perplexity(&m.model, &pairs, args.threads)?;
    println!("{ppl:.4}");
    Ok(ExitCode::SUCCESS)
}

/// Reads one tokenized sentence per line; empty lines are empty sentences.
fn read_lines_lenient(path: &Path) -> Result<Vec<Tokens>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect())
}

pub fn bleu(args: BleuArgs) -> Result<ExitCode> {
    let hyp = read_lines_lenient(&args.hyp)?;
    let reference = read_lines_lenient(&args.reference)?;
    let score = eval::corpus_bleu(&hyp, &reference)?;
    println!("{score:.4}");
    Ok(ExitCode::SUCCESS)
}

fn read_nbest_file(path: &Path) -> Result<Vec<NBestEntry>> {
    eval::read_nbest(open_input(path)?).with_context(|| format!("in {}", path.display()))
}

pub fn rerank(args: RerankArgs) -> Result<ExitCode> {
    let entries = read_nbest_file(&args.nbest)?;
    let weights = Weights::read_from(open_input(&args.weights)?)
        .with_context(|| format!("in {}", args.weights.display()))?;
    let picks = eval::rerank(&entries, &weights)?;
    let mut out = open_output(args.output.as_deref())?;
    for i in picks {
        writeln!(out, "{}", entries[i].hypothesis.join(" "))?;
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

pub fn tune(args: TuneArgs) -> Result<ExitCode> {
    if args.grid.is_empty() || args.grid.iter().any(|v| !v.is_finite()) {
        return Err(usage("--grid must list finite values"));
    }
    if args.passes == 0 {
        return Err(usage("--passes must be at least 1"));
    }
    let entries = read_nbest_file(&args.nbest)?;
    let references = read_lines_lenient(&args.reference)?;
    let grid = GridSpec {
        features: args.features.clone(),
        values: args.grid.clone(),
        max_passes: args.passes,
    };
    let weights = eval::tune_weights(&entries, &references, &grid)?;
    let zeros = Weights(weights.0.iter().map(|(n, _)| (n.clone(), 0.0)).collect());
    let before = eval::rerank_bleu(&entries, &references, &zeros)?;
    let after = eval::rerank_bleu(&entries, &references, &weights)?;
    eprintln!("dev BLEU {before:.4} -> {after:.4}");
    let mut out = open_output(args.output.as_deref())?;
    weights.write_to(&mut out)?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

pub fn score_nbest(args: ScoreNbestArgs) -> Result<ExitCode> {
    check_threads(args.threads)?;
    if args.prefix.is_empty()
        || args
            .prefix
            .contains(|c: char| c.is_whitespace() || c == '=')
    {
        return Err(usage("--prefix must be non-empty without spaces or `=`"));
    }
    let mut entries = read_nbest_file(&args.nbest)?;
    let sources = read_lines_lenient(&args.src)?;
    let loaded: Vec<LoadedModel> = args
        .models
        .iter()
        .map(|p| load_model(p))
        .collect::<Result<_>>()?;
    let scorers: Vec<Scorer<'_>> = loaded
        .iter()
        .enumerate()
        .map(|(n, m)| Scorer {
            name: format!("{}{n}", args.prefix),
            model: &m.model,
            src_vocab: &m.src_vocab,
            tgt_vocab: &m.tgt_vocab,
        })
        .collect();
    eval::score_nbest(
        &mut entries,
        &sources,
        &scorers,
        args.length_normalize,
        args.threads,
    )?;
    let mut out = open_output(args.output.as_deref())?;
    eval::write_nbest(&entries, &mut out)?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn tokens(text: &str, what: &str) -> Result<Tokens> {
    let t: Tokens = text.split_whitespace().map(str::to_string).collect();
    if t.is_empty() {
        return Err(usage(format!("{what} is empty")));
    }
    Ok(t)
}

fn with_sentinels(t: &[String]) -> Vec<String> {
    std::iter::once(BOS.to_string())
        .chain(t.iter().cloned())
        .chain(std::iter::once(EOS.to_string()))
        .collect()
}

pub fn dump_attn(args: DumpAttnArgs) -> Result<ExitCode> {
    let inline = match (&args.src_text, &args.tgt_text) {
        (Some(s), Some(t)) => Some((tokens(s, "--src-text")?, tokens(t, "--tgt-text")?)),
        _ => None,
    };
    if inline.is_none() && args.line.is_none() {
        return Err(usage("give --src-text/--tgt-text or --src/--tgt/--line"));
    }
    if args.line == Some(0) {
        return Err(usage("--line is 1-based"));
    }
    let m = load_model(&args.model)?;
    if m.model.config().architecture != Architecture::Attentional {
        bail!(
            "{} is a baseline model and has no attention",
            args.model.display()
        );
    }
    let (src, tgt) = match inline {
        Some(pair) => pair,
        None => {
            let (src_path, tgt_path, line) = (
                args.src.as_ref().expect("clap requires --src"),
                args.tgt.as_ref().expect("clap requires --tgt"),
                args.line.expect("checked above"),
            );
            let raw = corpus::load_parallel(src_path, tgt_path)?;
            raw.into_iter().nth(line - 1).with_context(|| {
                format!("--line {line} is past the end of {}", src_path.display())
            })?
        }
    };
    let pair = SentencePair::encode(&m.src_vocab, &m.tgt_vocab, &src, &tgt);
    let (_, trace) = m.model.sentence_nll(&pair)?;
    let src_tokens = with_sentinels(&src);
    let tgt_tokens = with_sentinels(&tgt);

    let mut out = open_output(args.output.as_deref())?;
    {
        let mut csv = csv::Writer::from_writer(&mut out);
        csv.write_record(std::iter::once("").chain(src_tokens.iter().map(String::as_str)))?;
        for (j, token) in tgt_tokens.iter().skip(1).enumerate() {
            let mut record = vec![token.clone()];
            record.extend(trace.row(j).iter().map(|a| format!("{a:.6}")));
            csv.write_record(&record)?;
        }
        csv.flush()?;
    }
    out.flush()?;

    if let Some(pgm) = &args.pgm {
        let mut w = BufWriter::new(
            File::create(pgm).with_context(|| format!("cannot create {}", pgm.display()))?,
        );
        writeln!(w, "P2\n{} {}\n255", trace.cols(), trace.rows())?;
        for j in 0..trace.rows() {
            let row: Vec<String> = trace
                .row(j)
                .iter()
                .map(|a| ((a.clamp(0.0, 1.0) * 255.0).round() as u8).to_string())
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        w.flush()?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn decode(args: DecodeArgs) -> Result<ExitCode> {
    check_threads(args.threads)?;
    if args.max_len == 0 {
        return Err(usage("--max-len must be at least 1"));
    }
    let m = load_model(&args.model)?;
    let sources = corpus::load_sentences(&args.input)?;
    let outputs = eval::parallel_map(&sources, args.threads, |s| {
        let ids = m
            .model
            .greedy_decode(&m.src_vocab.encode(s), args.max_len)?;
        Ok(m.tgt_vocab.decode(&ids).join(" "))
    })?;
    let mut out = open_output(args.output.as_deref())?;
    for line in outputs {
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(args: GradcheckArgs) -> Result<ExitCode> {
    if !(args.eps > 0.0 && args.eps.is_finite()) {
        return Err(usage("--eps must be positive"));
    }
    if [args.hidden, args.embed, args.align].contains(&0) {
        return Err(usage("--hidden, --embed and --align must be at least 1"));
    }
    let spec = SuiteSpec {
        hidden: args.hidden,
        embed: args.embed,
        align: args.align,
        window: args.window,
        seed: args.seed,
        eps: args.eps,
    };
    let mut failed = false;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (label, report) in gradient_suite(&spec)? {
        let ok = report.max_relative_error <= args.tolerance;
        failed |= !ok;
        writeln!(
            out,
            "{label}\t{:.3e}\t{}",
            report.max_relative_error,
            if ok { "ok" } else { "FAIL" }
        )?;
    }
    out.flush()?;
    Ok(if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

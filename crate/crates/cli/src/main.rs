//! Command-line front end: training, evaluation, re-ranking and attention dumps.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.

use std::path::PathBuf;
use std::process::ExitCode;

use biasattn::model::{Architecture, BiasFlags, FertilityWindow};
use biasattn::trainer::FinetuneMode;
use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser, Debug)]
#[command(
    name = "biasattn",
    version,
    about = "Attentional translation models with alignment structural biases"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one directional model with dev-set model selection
    Train(TrainArgs),
    /// Jointly train forward and reverse models with the trace bonus
    TrainSym(TrainSymArgs),
    /// Print the perplexity of a model on a parallel corpus
    Ppl(PplArgs),
    /// Print corpus BLEU-4 of a hypothesis file against a reference file
    Bleu(BleuArgs),
    /// Write the highest-scoring n-best entry per sentence
    Rerank(RerankArgs),
    /// Tune re-ranking weights by coordinate ascent on dev BLEU
    Tune(TuneArgs),
    /// Append neural log-probability features to an n-best list
    ScoreNbest(ScoreNbestArgs),
    /// Export the attention matrix of one sentence pair as CSV (and PGM)
    DumpAttn(DumpAttnArgs),
    /// Greedy-decode source sentences
    Decode(DecodeArgs),
    /// Check analytic gradients against finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Architecture: attentional or baseline
    #[arg(long, default_value = "attentional")]
    pub arch: Architecture,
    /// LSTM hidden units
    #[arg(long, default_value_t = 512)]
    pub hidden: usize,
    /// Word embedding size
    #[arg(long, default_value_t = 512)]
    pub embed: usize,
    /// Attention scorer hidden size
    #[arg(long, default_value_t = 256)]
    pub align: usize,
    /// Encoder LSTM layers
    #[arg(long, default_value_t = 1)]
    pub enc_layers: usize,
    /// Decoder LSTM layers
    #[arg(long, default_value_t = 2)]
    pub dec_layers: usize,
    /// Markov and local-fertility window half-width k
    #[arg(long, default_value_t = 1)]
    pub window: usize,
    /// Comma list of position, markov, local-fertility, global-fertility,
    /// xu-penalty; `align` is the first three, `none` disables all
    #[arg(long, default_value = "none")]
    pub biases: BiasFlags,
    /// Trace bonus weight for symmetric training
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Local fertility window: symmetric (i-k..i+k) or literal (i-k..i+1)
    #[arg(long, default_value = "symmetric")]
    pub fertility_window: FertilityWindow,
    /// Treat earlier attention rows as constants in the bias features
    #[arg(long)]
    pub detach_history: bool,
    /// Weight of the global fertility term
    #[arg(long, default_value_t = 1.0)]
    pub glofer_weight: f64,
    /// Leave the sentinel positions out of the fertility terms
    #[arg(long)]
    pub glofer_exclude_sentinels: bool,
}

#[derive(Args, Debug, Clone)]
pub struct ScheduleArgs {
    /// Maximum training epochs
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Initial SGD learning rate
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    /// Learning-rate factor applied when dev perplexity does not improve
    #[arg(long, default_value_t = 0.5)]
    pub decay: f64,
    /// Per-sentence gradient-norm clip
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    /// Epochs trained before the global fertility term is switched on
    #[arg(long, default_value_t = 10)]
    pub pretrain_epochs: usize,
    /// Visit training pairs in file order instead of a seeded shuffle
    #[arg(long)]
    pub no_shuffle: bool,
    /// After pre-training, keep the trace bonus (joint) or drop it (separate)
    #[arg(long, default_value = "joint")]
    pub glofer_finetune: FinetuneMode,
    /// Record wall-clock seconds in the training log (otherwise `NA`)
    #[arg(long)]
    pub timing: bool,
    /// Minimum training frequency for a word to enter the vocabulary
    #[arg(long, default_value_t = 1)]
    pub min_freq: usize,
}

#[derive(Args, Debug, Clone)]
pub struct CorpusArgs {
    /// Training source sentences, one per line
    #[arg(long)]
    pub train_src: PathBuf,
    /// Training target sentences, line-aligned with --train-src
    #[arg(long)]
    pub train_tgt: PathBuf,
    /// Development source sentences
    #[arg(long)]
    pub dev_src: PathBuf,
    /// Development target sentences
    #[arg(long)]
    pub dev_tgt: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Output model file; vocabularies go to <model>.src.vocab and <model>.tgt.vocab
    #[arg(long)]
    pub model: PathBuf,
    /// Training log [default: <model>.log]
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub model_args: ModelArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Random seed for initialization and shuffling
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for dev perplexity
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Args, Debug)]
pub struct TrainSymArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Output source-to-target model file
    #[arg(long)]
    pub model: PathBuf,
    /// Output target-to-source model file
    #[arg(long)]
    pub reverse_model: PathBuf,
    /// Training log [default: <model>.log]
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub model_args: ModelArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Random seed for initialization and shuffling
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for dev perplexity
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Args, Debug)]
pub struct PplArgs {
    /// Model file written by `train`
    #[arg(long)]
    pub model: PathBuf,
    /// Source sentences
    #[arg(long)]
    pub src: PathBuf,
    /// Target sentences
    #[arg(long)]
    pub tgt: PathBuf,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Args, Debug)]
pub struct BleuArgs {
    /// Hypotheses, one per line
    #[arg(long)]
    pub hyp: PathBuf,
    /// References, line-aligned with --hyp
    #[arg(long = "ref")]
    pub reference: PathBuf,
}

#[derive(Args, Debug)]
pub struct RerankArgs {
    /// N-best list: `id ||| hypothesis ||| name=value ... ||| score`
    #[arg(long)]
    pub nbest: PathBuf,
    /// Weights file with `name value` lines
    #[arg(long)]
    pub weights: PathBuf,
    /// Output file [default: standard output]
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    /// Dev n-best list
    #[arg(long)]
    pub nbest: PathBuf,
    /// Dev references; line n is the reference of sentence id n-1
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Comma-separated grid of candidate weight values
    #[arg(
        long,
        default_value = "-1,-0.5,-0.25,0,0.25,0.5,1",
        value_delimiter = ',',
        allow_hyphen_values = true
    )]
    pub grid: Vec<f64>,
    /// Features to tune [default: all features of the first entry]
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    /// Maximum coordinate-ascent sweeps
    #[arg(long, default_value_t = 10)]
    pub passes: usize,
    /// Output weights file [default: standard output]
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ScoreNbestArgs {
    /// N-best list to extend
    #[arg(long)]
    pub nbest: PathBuf,
    /// Source sentences; line n is the source of sentence id n-1
    #[arg(long)]
    pub src: PathBuf,
    /// Model file; repeat for several feature columns
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    /// Feature name prefix; columns are named <prefix>0, <prefix>1, ...
    #[arg(long, default_value = "neural")]
    pub prefix: String,
    /// Divide each log-probability by the number of predicted tokens
    #[arg(long)]
    pub length_normalize: bool,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Output file [default: standard output]
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DumpAttnArgs {
    /// Attentional model file
    #[arg(long)]
    pub model: PathBuf,
    /// Source sentence text
    #[arg(long, conflicts_with_all = ["src", "tgt", "line"], requires = "tgt_text")]
    pub src_text: Option<String>,
    /// Target sentence text
    #[arg(long, requires = "src_text")]
    pub tgt_text: Option<String>,
    /// Source file (with --tgt and --line)
    #[arg(long, requires_all = ["tgt", "line"])]
    pub src: Option<PathBuf>,
    /// Target file (with --src and --line)
    #[arg(long, requires_all = ["src", "line"])]
    pub tgt: Option<PathBuf>,
    /// 1-based line number in --src/--tgt
    #[arg(long, requires_all = ["src", "tgt"])]
    pub line: Option<usize>,
    /// CSV output [default: standard output]
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write a grayscale P2 image (255 = attention of 1)
    #[arg(long)]
    pub pgm: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    /// Model file
    #[arg(long)]
    pub model: PathBuf,
    /// Source sentences, one per line
    #[arg(long)]
    pub input: PathBuf,
    /// Maximum output length in tokens
    #[arg(long, default_value_t = 100)]
    pub max_len: usize,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Output file [default: standard output]
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// LSTM hidden units
    #[arg(long, default_value_t = 8)]
    pub hidden: usize,
    /// Word embedding size
    #[arg(long, default_value_t = 8)]
    pub embed: usize,
    /// Attention scorer hidden size
    #[arg(long, default_value_t = 8)]
    pub align: usize,
    /// Markov and local-fertility window half-width k
    #[arg(long, default_value_t = 1)]
    pub window: usize,
    /// Finite-difference step
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    /// Largest accepted relative error
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
    /// Random seed for the model parameters
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::TrainSym(a) => commands::train_sym(a),
        Command::Ppl(a) => commands::ppl(a),
        Command::Bleu(a) => commands::bleu(a),
        Command::Rerank(a) => commands::rerank(a),
        Command::Tune(a) => commands::tune(a),
        Command::ScoreNbest(a) => commands::score_nbest(a),
        Command::DumpAttn(a) => commands::dump_attn(a),
        Command::Decode(a) => commands::decode(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<commands::UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

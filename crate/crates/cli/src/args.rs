//! Command-line arguments. Every subcommand's arguments double as its
//! config snapshot, so they derive both clap and serde.

use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use polymix::dataset::Instrument;
use polymix::mixing::MixStrategy;
use polymix_nn::Architecture;
use serde::{Deserialize, Serialize};

const FORMATS: &str = "\
File formats:
  manifest   JSON lines. Corpus lines: {\"path\", \"instrument\", \"genre\", \"split\"?}.
             Track lines: {\"path\", \"labels\": [code, ...]}. Paths resolve
             against the manifest's directory.
  store      .cqts binary: \"CQTS\", u16 version, u32 count/rows/cols, then
             count*rows*cols little-endian f32 and count 11-byte label vectors.
  checkpoint .pmxm binary: \"PMXM\", JSON model descriptor, then parameters and
             batch-norm statistics as little-endian f32 (optional Adam state).
  predictions CSV: track_id, score_<code> x11, label_<code> x11 in the order
             cel cla flu gac gel org pia sax tru vio voi.
  snapshot   <output>/run.json or <output>.run.json, replayable with --config.";

#[derive(Parser, Debug)]
#[command(name = "polymix", version, about = "Polyphonic training data by mixing monophonic clips, CQT features, CNN training and multi-label evaluation", after_help = FORMATS)]
#[command(args_conflicts_with_subcommands = true)]
pub struct Cli {
    /// Worker threads for mixing, feature extraction and prediction
    /// (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Re-run the command recorded in a config snapshot.
    #[arg(long, value_name = "SNAPSHOT")]
    pub config: Option<PathBuf>,

    /// More log output (-v debug, -vv trace). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Option<Command>,
}


#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Build or check a corpus manifest.
    #[command(after_help = FORMATS)]
    Ingest(IngestArgs),
    /// Generate the synthetic corpus or two-instrument test tracks.
    #[command(after_help = FORMATS)]
    Synth(SynthArgs),
    /// Mix class pairs into a multi-label set (or pitch-shift controls).
    #[command(after_help = FORMATS)]
    Mix(MixArgs),
    /// Extract 1-second CQT features into a store.
    #[command(after_help = FORMATS)]
    Cqt(CqtArgs),
    /// Train one model per fold.
    #[command(after_help = FORMATS)]
    Train(TrainArgs),
    /// Score tracks with a checkpoint.
    #[command(after_help = FORMATS)]
    Predict(PredictArgs),
    /// Compute LRAP, AUC and F1 for predictions or models.
    #[command(after_help = FORMATS)]
    Evaluate(EvaluateArgs),
    /// Average prediction files.
    #[command(after_help = FORMATS)]
    Ensemble(EnsembleArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Synth(_) => "synth",
            Command::Mix(_) => "mix",
            Command::Cqt(_) => "cqt",
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Evaluate(_) => "evaluate",
            Command::Ensemble(_) => "ensemble",
        }
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[command(group(ArgGroup::new("source").args(["irmas", "manifest"]).required(true)))]
pub struct IngestArgs {
    /// IRMAS training tree: one folder per instrument code, genre as the
    /// last bracket tag of each file name. lat_sou files are skipped.
    #[arg(long)]
    pub irmas: Option<PathBuf>,
    /// Existing corpus manifest to validate (paths must exist and decode).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output manifest (JSON lines) with durations filled in.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthArgs {
    /// Output directory for WAVs, manifest.jsonl and truth.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    /// Clips (3 s, 44.1 kHz) per class.
    #[arg(long, default_value_t = 60)]
    pub per_class: usize,
    /// Classes to generate, comma separated codes.
    #[arg(long, value_delimiter = ',', default_values_t = Instrument::ALL)]
    pub classes: Vec<Instrument>,
    /// Generator seed; output is a pure function of the arguments.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Instead of a corpus, write this many 3-s two-instrument test tracks
    /// (22.05 kHz) with a `labels` manifest.
    #[arg(long, value_name = "N")]
    pub test_tracks: Option<usize>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[command(group(ArgGroup::new("mode").args(["strategy", "augment_shifts"]).required(true)))]
pub struct MixArgs {
    /// Corpus manifest, or a directory holding manifest.jsonl.
    #[arg(long = "in", value_name = "CORPUS")]
    pub input: PathBuf,
    /// Output directory for mixed WAVs, manifest.jsonl (provenance) and
    /// skipped.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    /// random | genre | tempo | pitch.
    #[arg(long)]
    pub strategy: Option<MixStrategy>,
    /// Pairing seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cap on mixed records per class pair.
    #[arg(long)]
    pub max_per_pair: Option<usize>,
    /// Pitch-shift control set instead of mixing: shifts to draw from,
    /// e.g. -6,-4,-2,2,4,6.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub augment_shifts: Option<Vec<i32>>,
    /// Number of shifted clips for --augment-shifts (default: one per
    /// 1-second source segment).
    #[arg(long, requires = "augment_shifts")]
    pub augment_count: Option<usize>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqtArgs {
    /// Manifests (or directories holding manifest.jsonl); their tracks are
    /// standardized, cut into whole seconds and concatenated in order.
    #[arg(long = "in", value_name = "MANIFEST", required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Output feature store (.cqts).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Feature stores; several are concatenated (e.g. monophonic + mixed).
    #[arg(long, required = true, num_args = 1..)]
    pub store: Vec<PathBuf>,
    /// Output directory for fold<k>.pmxm, fold<k>.history.json, folds.json.
    #[arg(long, default_value = "checkpoints")]
    pub out: PathBuf,
    /// initial | proposed.
    #[arg(long, default_value = "proposed")]
    pub arch: Architecture,
    /// Stratified folds; each is held out once. 1 trains on everything and
    /// monitors the training loss.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Train only this held-out fold.
    #[arg(long)]
    pub fold: Option<usize>,
    /// Seed for fold assignment, initialization, shuffling and dropout.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Base learning rate [default: 1e-4].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Per-epoch learning-rate decay [default: 0.9].
    #[arg(long)]
    pub epoch_decay: Option<f64>,
    /// Batch size [default: 128].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Epoch limit [default: 100].
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Epochs without improvement before halving the rate [default: 5].
    #[arg(long)]
    pub plateau_patience: Option<usize>,
    /// Epochs without improvement before stopping [default: 7].
    #[arg(long)]
    pub stop_patience: Option<usize>,
    /// Minimum loss decrease that counts as improvement [default: 1e-4].
    #[arg(long)]
    pub min_delta: Option<f64>,
    /// Stop once training-set LRAP exceeds this value.
    #[arg(long)]
    pub target_train_lrap: Option<f64>,
    /// Conv block widths, four comma separated values [default: 64,128,256,640].
    #[arg(long, value_delimiter = ',')]
    pub depths: Option<Vec<usize>>,
    /// Dense head width [default: 1024].
    #[arg(long)]
    pub head_units: Option<usize>,
    /// Dropout after each conv block [default: 0.2].
    #[arg(long)]
    pub conv_dropout: Option<f64>,
    /// Dropout in the dense head [default: 0.5].
    #[arg(long)]
    pub head_dropout: Option<f64>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictArgs {
    /// Checkpoint (.pmxm).
    #[arg(long)]
    pub model: PathBuf,
    /// Track manifest, or a directory holding manifest.jsonl.
    #[arg(long)]
    pub tracks: PathBuf,
    /// Output predictions CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleMode {
    /// Report each input separately, plus mean ± sample std across them.
    #[default]
    None,
    /// Average the inputs' scores and report once.
    Mean,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[command(group(ArgGroup::new("inputs").args(["preds", "model"]).required(true).multiple(false)))]
pub struct EvaluateArgs {
    /// Prediction CSVs.
    #[arg(long, num_args = 1..)]
    pub preds: Vec<PathBuf>,
    /// Checkpoints to score on --tracks instead of stored predictions.
    #[arg(long, num_args = 1.., requires = "tracks")]
    pub model: Vec<PathBuf>,
    /// Test track manifest for --model.
    #[arg(long)]
    pub tracks: Option<PathBuf>,
    /// How to combine several inputs.
    #[arg(long, value_enum, default_value_t = EnsembleMode::None)]
    pub ensemble: EnsembleMode,
    /// Predictions of a baseline run; adds a per-class F1 delta table.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Name shown for the baseline.
    #[arg(long, default_value = "baseline")]
    pub baseline_name: String,
    /// Machine-readable report (JSON); the snapshot goes next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleArgs {
    /// Prediction CSVs with identical rows and labels.
    #[arg(long, required = true, num_args = 1..)]
    pub preds: Vec<PathBuf>,
    /// Output predictions CSV with averaged scores.
    #[arg(long)]
    pub out: PathBuf,
}

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settings::Settings;

/// Script/speech verification with likelihood-ratio and phoneme-rank scores.
///
/// Every option can also be set in a `--config` file as `key = value`, with
/// the long flag name as key. Flags given on the command line win.
#[derive(Debug, Parser)]
#[command(name = "uttver", version)]
pub struct Cli {
    /// `key = value` settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for batch scoring (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train phone GMMs and the anti-model; writes a model file.
    Train(TrainArgs),
    /// Verify one script against one WAV or feature file.
    /// Exit code 0 = match, 1 = mismatch, 2 = error.
    Verify(VerifyArgs),
    /// Accuracy of each method on a manifest.
    Evaluate(EvaluateArgs),
    /// Accuracy over a threshold grid.
    Sweep(SweepArgs),
    /// Generate a synthetic corpus: manifest.tsv plus feature files.
    GenCorpus(GenCorpusArgs),
    /// Forced alignment dump for one script and input.
    Align(AlignArgs),
}

#[derive(Debug, Args, Default)]
pub struct AlignFlags {
    /// Minimum frames per phone.
    #[arg(long)]
    pub min_duration: Option<usize>,
    /// Allow optional silence at the ends and between words.
    #[arg(long)]
    pub silence: Option<bool>,
    /// Cap on pronunciation expansions tried per script.
    #[arg(long)]
    pub max_expansions: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct FrontendFlags {
    #[arg(long)]
    pub frame_length_ms: Option<f64>,
    #[arg(long)]
    pub frame_shift_ms: Option<f64>,
    #[arg(long)]
    pub pre_emphasis: Option<f64>,
    #[arg(long)]
    pub mel_filters: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct GeneratorFlags {
    /// Seed of the synthetic phone distributions.
    #[arg(long)]
    pub generator_seed: Option<u64>,
    /// Spread of synthetic phone means.
    #[arg(long)]
    pub separation: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Phone inventory file.
    #[arg(long)]
    pub inventory: Option<PathBuf>,
    /// Output model file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Labeled segments: `feature_file phone start end` per line, paths
    /// relative to this file. Without it, trains on synthetic frames.
    #[arg(long)]
    pub segments: Option<PathBuf>,
    /// Synthetic frames per phone.
    #[arg(long)]
    pub frames_per_phone: Option<usize>,
    /// Mixture components per phone.
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub generator: GeneratorFlags,
}

#[derive(Debug, Args, Default)]
pub struct ModelFlags {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct ThresholdFlags {
    /// LLR threshold.
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    /// APR threshold.
    #[arg(long)]
    pub theta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelFlags,
    /// Text script.
    #[arg(long)]
    pub script: Option<String>,
    /// WAV file or feature dump.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// LRT, APR or APR2STAGE.
    #[arg(long)]
    pub method: Option<String>,
    #[command(flatten)]
    pub thresholds: ThresholdFlags,
    #[arg(long)]
    pub pair_id: Option<String>,
    #[command(flatten)]
    pub align: AlignFlags,
    #[command(flatten)]
    pub frontend: FrontendFlags,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Comma-separated methods; the first is the Delta baseline.
    #[arg(long)]
    pub methods: Option<String>,
    /// Tune thresholds on this manifest instead; Delta is then measured
    /// against each method's accuracy there.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[command(flatten)]
    pub thresholds: ThresholdFlags,
    /// Write per-pair records to `<out>.<method>.tsv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub align: AlignFlags,
    #[command(flatten)]
    pub frontend: FrontendFlags,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<String>,
    /// `a,b,c` or `start:step:stop`. Defaults to the half-rank grid for
    /// APR and the midpoints between observed LLRs otherwise.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Fixed threshold for the parameter not being swept.
    #[command(flatten)]
    pub thresholds: ThresholdFlags,
    /// Write the accuracy curve here.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[command(flatten)]
    pub align: AlignFlags,
    #[command(flatten)]
    pub frontend: FrontendFlags,
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub inventory: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Correct pairs; as many incorrect ones are added.
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub min_words: Option<usize>,
    #[arg(long)]
    pub max_words: Option<usize>,
    /// reassign, delete, insert or substitute.
    #[arg(long)]
    pub mode: Option<String>,
    /// Word edits per script in the edit modes.
    #[arg(long)]
    pub edits: Option<usize>,
    /// Variance inflation of the style shift (1 = read style).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Offset added to every coefficient under the style shift.
    #[arg(long, allow_hyphen_values = true)]
    pub offset: Option<f64>,
    /// Per-utterance random shift range of the first coefficient.
    #[arg(long)]
    pub gain: Option<f64>,
    /// Style tag written to the manifest.
    #[arg(long)]
    pub style: Option<String>,
    /// Share of all pairs replaced by degenerate utterances.
    #[arg(long)]
    pub degenerate_fraction: Option<f64>,
    #[arg(long)]
    pub degenerate_lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub generator: GeneratorFlags,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long)]
    pub script: Option<String>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub align: AlignFlags,
    #[command(flatten)]
    pub frontend: FrontendFlags,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let settings = Settings::load(cli.config.as_deref())?;
    if let Some(n) = settings.get(cli.workers, "workers")? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let code = match &cli.command {
        Command::Train(a) => commands::train(a, &settings)?,
        Command::Verify(a) => commands::verify(a, &settings)?,
        Command::Evaluate(a) => commands::evaluate(a, &settings)?,
        Command::Sweep(a) => commands::sweep(a, &settings)?,
        Command::GenCorpus(a) => commands::gen_corpus(a, &settings)?,
        Command::Align(a) => commands::align(a, &settings)?,
    };
    for key in settings.unused() {
        eprintln!("warning: config key `{key}` is not used by this command");
    }
    Ok(code)
}

//! The `residuum` command-line pipeline: synthesize or load paired
//! embeddings, residualize, classify, project and report.
//!
//! Settings resolve in three layers: built-in defaults, then the JSON file
//! given with `--config`, then command-line flags.

// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{EmbeddingKind, FitOn, ModelKind, RunConfig, VoteArg};
pub use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "residuum",
    version,
    about = "Tone classification on residual speech embeddings"
)]
pub struct Cli {
    /// Root seed. The synth stage uses it directly, other stages derive from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, value_name = "JSON")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic paired dataset.
    Synth(SynthArgs),
    /// Split, fit the ridge map and write residual embeddings.
    Residualize {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        ridge: RidgeArgs,
    },
    /// Train one classifier on one embedding and evaluate it on the test split.
    Classify {
        #[arg(long, value_enum)]
        embedding: EmbeddingKind,
        #[arg(long, value_enum)]
        model: ModelKind,
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        logreg: LogRegArgs,
        #[command(flatten)]
        forest: ForestArgs,
    },
    /// PCA and t-SNE projections of the text, audio and residual embeddings.
    Project {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        projection: ProjectArgs,
    },
    /// Collect classify results into report.md.
    Report,
    /// Run every stage in order.
    Pipeline {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        ridge: RidgeArgs,
        #[command(flatten)]
        logreg: LogRegArgs,
        #[command(flatten)]
        forest: ForestArgs,
        #[command(flatten)]
        projection: ProjectArgs,
    },
}

#[derive(Debug, Default, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_sentences: Option<usize>,
    #[arg(long)]
    pub n_tones: Option<usize>,
    #[arg(long)]
    pub text_dims: Option<usize>,
    #[arg(long)]
    pub speech_dims: Option<usize>,
    #[arg(long)]
    pub tone_scale: Option<f64>,
    #[arg(long)]
    pub noise_scale: Option<f64>,
    #[arg(long)]
    pub mixing_scale: Option<f64>,
}

#[derive(Debug, Default, Args)]
pub struct InputArgs {
    /// Text EMBX file (default `<out>/text.embx`).
    #[arg(long)]
    pub text: Option<PathBuf>,
    /// Speech EMBX file (default `<out>/speech.embx`).
    #[arg(long)]
    pub speech: Option<PathBuf>,
    /// Manifest JSONL (default `<out>/manifest.jsonl`).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct SplitArgs {
    /// Test fraction.
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub no_stratify: bool,
    #[arg(long)]
    pub group_by_transcript: bool,
}

#[derive(Debug, Default, Args)]
pub struct RidgeArgs {
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, value_enum)]
    pub fit_on: Option<FitOn>,
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Default, Args)]
pub struct LogRegArgs {
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Select l2 by cross-validation on the train split.
    #[arg(long)]
    pub l2_cv: bool,
    #[arg(long, value_delimiter = ',')]
    pub l2_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub cv_folds: Option<usize>,
}

#[derive(Debug, Default, Args)]
pub struct ForestArgs {
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub features_per_split: Option<usize>,
    #[arg(long)]
    pub min_samples_split: Option<usize>,
    #[arg(long)]
    pub no_bootstrap: bool,
    #[arg(long, value_enum)]
    pub vote: Option<VoteArg>,
}

#[derive(Debug, Default, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long)]
    pub tsne_iters: Option<usize>,
    /// Also write SVG scatter plots.
    #[arg(long)]
    pub svg: bool,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl SynthArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let s = &mut cfg.synth;
        set(&mut s.n_sentences, self.n_sentences);
        set(&mut s.n_tones, self.n_tones);
        set(&mut s.text_dims, self.text_dims);
        set(&mut s.speech_dims, self.speech_dims);
        set(&mut s.tone_scale, self.tone_scale);
        set(&mut s.noise_scale, self.noise_scale);
        set(&mut s.mixing_scale, self.mixing_scale);
    }
}

impl InputArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let i = &mut cfg.inputs;
        i.text = self.text.or(i.text.take());
        i.speech = self.speech.or(i.speech.take());
        i.manifest = self.manifest.or(i.manifest.take());
    }
}

impl SplitArgs {
    fn apply(self, cfg: &mut RunConfig) {
        set(&mut cfg.split.ratio, self.ratio);
        if self.no_stratify {
            cfg.split.stratified = false;
        }
        if self.group_by_transcript {
            cfg.split.group_by_transcript = true;
        }
    }
}

impl RidgeArgs {
    fn apply(self, cfg: &mut RunConfig) {
        set(&mut cfg.ridge.lambda_grid, self.lambda_grid);
        set(&mut cfg.ridge.folds, self.folds);
        set(&mut cfg.ridge.fit_on, self.fit_on);
        if self.normalize {
            cfg.ridge.normalize = true;
        }
    }
}

impl LogRegArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let l = &mut cfg.logreg;
        set(&mut l.l2, self.l2);
        set(&mut l.max_iter, self.max_iter);
        set(&mut l.tol, self.tol);
        set(&mut l.l2_grid, self.l2_grid);
        set(&mut l.cv_folds, self.cv_folds);
        if self.l2_cv {
            l.cv = true;
        }
    }
}

impl ForestArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let f = &mut cfg.forest;
        set(&mut f.n_trees, self.n_trees);
        if self.max_depth.is_some() {
            f.max_depth = self.max_depth;
        }
        if self.features_per_split.is_some() {
            f.features_per_split = self.features_per_split;
        }
        set(&mut f.min_samples_split, self.min_samples_split);
        set(&mut f.vote, self.vote);
        if self.no_bootstrap {
            f.bootstrap = false;
        }
    }
}

impl ProjectArgs {
    fn apply(self, cfg: &mut RunConfig) {
        set(&mut cfg.projection.perplexity, self.perplexity);
        set(&mut cfg.projection.iterations, self.tsne_iters);
        if self.svg {
            cfg.projection.svg = true;
        }
    }
}

enum Action {
    Synth,
    Residualize,
    Classify(EmbeddingKind, ModelKind),
    Project,
    Report,
    Pipeline,
}

/// Resolves the final configuration and the stage to run.
fn resolve(cli: Cli) -> Result<(RunConfig, Action), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.out, cli.out);
    let action = match cli.command {
        Command::Synth(a) => {
            a.apply(&mut cfg);
            Action::Synth
        }
        Command::Residualize {
            inputs,
            split,
            ridge,
        } => {
            inputs.apply(&mut cfg);
            split.apply(&mut cfg);
            ridge.apply(&mut cfg);
            Action::Residualize
        }
        Command::Classify {
            embedding,
            model,
            inputs,
            split,
            logreg,
            forest,
        } => {
            inputs.apply(&mut cfg);
            split.apply(&mut cfg);
            logreg.apply(&mut cfg);
            forest.apply(&mut cfg);
            Action::Classify(embedding, model)
        }
        Command::Project { inputs, projection } => {
            inputs.apply(&mut cfg);
            projection.apply(&mut cfg);
            Action::Project
        }
        Command::Report => Action::Report,
        Command::Pipeline {
            inputs,
            synth,
            split,
            ridge,
            logreg,
            forest,
            projection,
        } => {
            inputs.apply(&mut cfg);
            synth.apply(&mut cfg);
            split.apply(&mut cfg);
            ridge.apply(&mut cfg);
            logreg.apply(&mut cfg);
            forest.apply(&mut cfg);
            projection.apply(&mut cfg);
            Action::Pipeline
        }
    };
    cfg.validate()?;
    Ok((cfg, action))
}

/// Runs an already-parsed command line and returns the paths written.
pub fn execute(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let (cfg, action) = resolve(cli)?;
    match action {
        Action::Synth => commands::synth(&cfg),
        Action::Residualize => commands::residualize(&cfg),
        Action::Classify(e, m) => commands::classify(&cfg, e, m),
        Action::Project => commands::project(&cfg),
        Action::Report => commands::report(&cfg),
        Action::Pipeline => commands::pipeline(&cfg),
    }
}

/// Parses `args`, runs the command, prints written paths to stdout and
/// errors to stderr. Returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! Run configuration: defaults, JSON config file, then command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use residuum::classifiers::{ForestParams, LogRegParams, Vote, DEFAULT_L2_GRID};
use residuum::projection::TsneParams;
use residuum::regression::default_lambda_grid;
use residuum::seed::derive_seed;
use residuum::synthgen::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FitOn {
    Train,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, ValueEnum)]
pub enum EmbeddingKind {
    Text,
    Audio,
    Residual,
}

impl EmbeddingKind {
    pub const ALL: [EmbeddingKind; 3] = [Self::Text, Self::Audio, Self::Residual];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Text => "text",
            Self::Audio => "audio",
            Self::Residual => "residual",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, ValueEnum)]
pub enum ModelKind {
    Logreg,
    Forest,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [Self::Logreg, Self::Forest];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Logreg => "logreg",
            Self::Forest => "forest",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum VoteArg {
    Average,
    Majority,
}

impl From<VoteArg> for Vote {
    fn from(v: VoteArg) -> Self {
        match v {
            VoteArg::Average => Vote::Average,
            VoteArg::Majority => Vote::Majority,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub text: Option<PathBuf>,
    pub speech: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratio: f64,
    pub stratified: bool,
    pub group_by_transcript: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratio: 0.2,
            stratified: true,
            group_by_transcript: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RidgeConfig {
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub fit_on: FitOn,
    /// L2-normalize text and speech rows before the regression.
    pub normalize: bool,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self {
            lambda_grid: default_lambda_grid(),
            folds: 5,
            fit_on: FitOn::Train,
            normalize: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Select l2 from `l2_grid` by stratified cross-validation on the train split.
    pub cv: bool,
    pub l2_grid: Vec<f64>,
    pub cv_folds: usize,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        let p = LogRegParams::default();
        Self {
            l2: p.l2,
            max_iter: p.max_iter,
            tol: p.tol,
            cv: false,
            l2_grid: DEFAULT_L2_GRID.to_vec(),
            cv_folds: 5,
        }
    }
}

impl LogRegConfig {
    pub fn params(&self) -> LogRegParams {
        LogRegParams {
            l2: self.l2,
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub features_per_split: Option<usize>,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    pub vote: VoteArg,
}

impl Default for ForestConfig {
    fn default() -> Self {
        let p = ForestParams::default();
        Self {
            n_trees: p.n_trees,
            max_depth: p.max_depth,
            features_per_split: p.features_per_split,
            min_samples_split: p.min_samples_split,
            bootstrap: p.bootstrap,
            vote: VoteArg::Average,
        }
    }
}

impl ForestConfig {
    pub fn params(&self, seed: u64) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            features_per_split: self.features_per_split,
            min_samples_split: self.min_samples_split,
            bootstrap: self.bootstrap,
            vote: self.vote.into(),
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub svg: bool,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        let p = TsneParams::default();
        Self {
            perplexity: p.perplexity,
            iterations: p.iterations,
            svg: false,
        }
    }
}

impl ProjectionConfig {
    pub fn tsne_params(&self, seed: u64) -> TsneParams {
        TsneParams {
            perplexity: self.perplexity,
            iterations: self.iterations,
            seed,
            ..TsneParams::default()
        }
    }
}

/// Everything a run needs. The synth stage uses `seed` as given; every
/// other stage draws from [`RunConfig::stage_seed`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub inputs: InputPaths,
    pub synth: SynthConfig,
    pub split: SplitConfig,
    pub ridge: RidgeConfig,
    pub logreg: LogRegConfig,
    pub forest: ForestConfig,
    pub projection: ProjectionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out: PathBuf::from("out"),
            inputs: InputPaths::default(),
            synth: SynthConfig::default(),
            split: SplitConfig::default(),
            ridge: RidgeConfig::default(),
            logreg: LogRegConfig::default(),
            forest: ForestConfig::default(),
            projection: ProjectionConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }

    pub fn text_path(&self) -> PathBuf {
        self.inputs
            .text
            .clone()
            .unwrap_or_else(|| self.out.join("text.embx"))
    }

    pub fn speech_path(&self) -> PathBuf {
        self.inputs
            .speech
            .clone()
            .unwrap_or_else(|| self.out.join("speech.embx"))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.inputs
            .manifest
            .clone()
            .unwrap_or_else(|| self.out.join("manifest.jsonl"))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        let r = self.split.ratio;
        if !(r > 0.0 && r < 1.0) {
            return usage(format!("split ratio {r} must lie in (0, 1)"));
        }
        if self.ridge.lambda_grid.is_empty() {
            return usage("lambda grid is empty".into());
        }
        if let Some(l) = self
            .ridge
            .lambda_grid
            .iter()
            .find(|l| !(l.is_finite() && **l >= 0.0))
        {
            return usage(format!("lambda {l} must be finite and >= 0"));
        }
        if self.ridge.folds < 2 {
            return usage("ridge folds must be at least 2".into());
        }
        let lr = &self.logreg;
        if !(lr.l2.is_finite() && lr.l2 >= 0.0) {
            return usage(format!("l2 {} must be finite and >= 0", lr.l2));
        }
        if !(lr.tol > 0.0) {
            return usage("tol must be positive".into());
        }
        if lr.cv && (lr.l2_grid.is_empty() || lr.cv_folds < 2) {
            return usage("l2 cross-validation needs a non-empty grid and at least 2 folds".into());
        }
        if self.forest.n_trees == 0 {
            return usage("n_trees must be at least 1".into());
        }
        if self.forest.min_samples_split < 2 {
            return usage("min_samples_split must be at least 2".into());
        }
        if self.forest.features_per_split == Some(0) {
            return usage("features_per_split must be at least 1".into());
        }
        if !(self.projection.perplexity >= 2.0) {
            return usage("perplexity must be at least 2".into());
        }
        self.synth
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = RunConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_config_keeps_other_defaults() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"seed": 7, "forest": {"n_trees": 10}}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.forest.n_trees, 10);
        assert_eq!(cfg.logreg, LogRegConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 7}"#).is_err());
    }

    #[test]
    fn stage_seeds_differ() {
        let cfg = RunConfig::default();
        assert_ne!(cfg.stage_seed("split"), cfg.stage_seed("ridge_cv"));
        assert_eq!(cfg.stage_seed("split"), derive_seed(42, "split"));
    }

    #[test]
    fn validate_flags_bad_ratio() {
        let mut cfg = RunConfig::default();
        cfg.split.ratio = 1.0;
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
    }
}

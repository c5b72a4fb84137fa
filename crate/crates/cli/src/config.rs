use std::path::{Path, PathBuf};

use clap::Args;

use snapdial::decoder::Variant;
use snapdial::decoding::BeamConfig;
use snapdial::numerics::ClipMode;
use snapdial::tracker::BeliefRepr;
use snapdial::training::TrainConfig;

use crate::error::CliError;

/// Every `TrainConfig` field as an optional override of the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Experiment config (TOML or JSON, camelCase keys); flags override it
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Decoder cell: lm, mem or hybrid
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Attention over the tracker beliefs
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub attention: Option<bool>,
    /// Belief representation fed to the policy: full or summary
    #[arg(long)]
    pub belief: Option<BeliefRepr>,
    /// Train with the snapshot companion loss
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub snapshot: Option<bool>,
    /// Weight of the snapshot loss
    #[arg(long)]
    pub lambda: Option<f64>,
    /// SGD learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// L2 regularisation factor
    #[arg(long)]
    pub l2: Option<f64>,
    /// Gradient clipping threshold
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Clipping mode: norm or element
    #[arg(long)]
    pub clip_mode: Option<ClipMode>,
    /// Hidden layer size
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Uniform initialisation range
    #[arg(long)]
    pub init_range: Option<f64>,
    /// Early-stopping patience in epochs
    #[arg(long)]
    pub patience: Option<usize>,
    /// Upper bound on training epochs
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

/// Beam search settings.
#[derive(Debug, Clone, Args)]
pub struct BeamArgs {
    #[arg(long, default_value_t = 10)]
    pub beam_width: usize,
    /// Candidates kept per turn
    #[arg(long, default_value_t = 5)]
    pub candidates: usize,
    #[arg(long, default_value_t = 30)]
    pub max_len: usize,
}

impl BeamArgs {
    pub fn config(&self) -> BeamConfig {
        BeamConfig {
            width: self.beam_width,
            candidates: self.candidates,
            max_len: self.max_len,
        }
    }
}

pub fn load_config_file(path: &Path) -> Result<TrainConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let parsed = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str(&text).map_err(|e| e.to_string()),
        _ => toml::from_str(&text).map_err(|e| e.to_string()),
    };
    parsed.map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
}

impl ConfigArgs {
    /// Defaults, then the config file, then flags. `seed` is applied last.
    pub fn resolve(&self, seed: Option<u64>) -> Result<TrainConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => load_config_file(p)?,
            None => TrainConfig::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { c.$f = v; } )* };
        }
        over!(variant, attention, belief, snapshot, lambda, lr, l2, clip_norm, clip_mode, hidden, init_range, patience, max_epochs);
        if let Some(s) = seed {
            c.seed = s;
        }
        c.validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(c)
    }
}

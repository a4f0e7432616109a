//! Flat experiment configuration: one JSON document, every knob a top-level
//! key. Flags override file values; whatever a command actually ran with is
//! materialized into `resolved_config.json` so the run can be replayed
//! bit-exactly from that file alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sop_core::error::{Error, Result};

/// Plug count: an explicit number of groups, or `"target-wise"` for one
/// plug per unit along the chosen axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlugCount {
    Count(usize),
    Label(String),
}

impl PlugCount {
    pub fn resolve(&self, axis_len: usize) -> Result<usize> {
        match self {
            PlugCount::Count(c) => Ok(*c),
            PlugCount::Label(l) if l == "target-wise" => Ok(axis_len),
            PlugCount::Label(l) => Err(Error::Config(format!(
                "plug_count must be a number or \"target-wise\", got \"{l}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// CSV dataset path. Absent means the synthetic generator below.
    pub dataset: Option<PathBuf>,
    pub synth_n: usize,
    pub synth_length: usize,
    pub synth_periods: Vec<u32>,
    pub synth_noise_std: Vec<f64>,
    pub synth_slopes: Vec<f64>,
    pub synth_rho: f64,

    /// Look-back length.
    pub t: usize,
    /// Forecast horizon.
    pub s: usize,
    pub stride: usize,
    /// Chronological train/val/test ratios; absent picks the dataset's
    /// conventional split.
    pub split: Option<[f64; 3]>,

    /// Directory holding a trained socket (`socket.json`) or exported
    /// predictions (`predictions.json`).
    pub socket: Option<PathBuf>,
    pub socket_kind: String,
    pub socket_hidden: usize,
    pub socket_kernel: usize,
    pub socket_lr: f64,
    pub socket_batch_size: usize,
    pub socket_max_epochs: usize,
    pub socket_patience: usize,

    pub plug_axis: String,
    pub plug_count: PlugCount,
    pub d: usize,
    pub lr: f64,
    pub patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub eps: f64,

    /// "non-collective" (one optimizer and monitor per plug) or
    /// "collective" (requires a single plug covering everything).
    pub mode: String,
    pub parallel: bool,
    /// Concurrent plug workers in parallel mode; absent means one per plug.
    pub workers: Option<usize>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            synth_n: 6,
            synth_length: 4000,
            synth_periods: vec![24, 32, 48, 64, 96, 128],
            synth_noise_std: vec![0.05, 0.1, 0.2, 0.4, 0.7, 1.0],
            synth_slopes: vec![0.0; 6],
            synth_rho: 0.2,
            t: 96,
            s: 96,
            stride: 1,
            split: None,
            socket: None,
            socket_kind: "linear-decomp".into(),
            socket_hidden: 128,
            socket_kernel: 25,
            socket_lr: 1e-3,
            socket_batch_size: 32,
            socket_max_epochs: 100,
            socket_patience: 10,
            plug_axis: "variable".into(),
            plug_count: PlugCount::Label("target-wise".into()),
            d: 256,
            lr: 1e-4,
            patience: 5,
            batch_size: 32,
            max_epochs: 100,
            eps: 1e-5,
            mode: "non-collective".into(),
            parallel: false,
            workers: None,
            seed: 1,
        }
    }
}

/// Every config key as an optional flag. A flag that is present wins over
/// the config file; a flag that is absent leaves the file value alone.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Flat JSON config file providing defaults for the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// CSV dataset; omit to use the synthetic generator
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Synthetic: number of variables
    #[arg(long)]
    pub synth_n: Option<usize>,
    /// Synthetic: series length in steps
    #[arg(long)]
    pub synth_length: Option<usize>,
    /// Synthetic: per-variable seasonal periods, comma-separated
    #[arg(long, value_delimiter = ',')]
    pub synth_periods: Option<Vec<u32>>,
    /// Synthetic: per-variable noise levels, comma-separated
    #[arg(long, value_delimiter = ',')]
    pub synth_noise_std: Option<Vec<f64>>,
    /// Synthetic: per-variable trend slopes, comma-separated
    #[arg(long, value_delimiter = ',')]
    pub synth_slopes: Option<Vec<f64>>,
    /// Synthetic: cross-variable correlation
    #[arg(long)]
    pub synth_rho: Option<f64>,

    /// Lookback window length
    #[arg(long)]
    pub t: Option<usize>,
    /// Forecast horizon
    #[arg(long)]
    pub s: Option<usize>,
    /// Window stride
    #[arg(long)]
    pub stride: Option<usize>,
    /// Three comma-separated ratios, e.g. 0.7,0.1,0.2
    #[arg(long, value_delimiter = ',')]
    pub split: Option<Vec<f64>>,

    /// Socket directory (trained model or exported predictions)
    #[arg(long)]
    pub socket: Option<PathBuf>,
    /// Forecaster family: linear-decomp, mlp or external
    #[arg(long)]
    pub socket_kind: Option<String>,
    /// Socket hidden width (mlp kind)
    #[arg(long)]
    pub socket_hidden: Option<usize>,
    /// Socket moving-average kernel (linear-decomp kind)
    #[arg(long)]
    pub socket_kernel: Option<usize>,
    /// Socket learning rate
    #[arg(long)]
    pub socket_lr: Option<f64>,
    /// Socket training batch size
    #[arg(long)]
    pub socket_batch_size: Option<usize>,
    /// Socket epoch cap
    #[arg(long)]
    pub socket_max_epochs: Option<usize>,
    /// Socket early-stopping patience
    #[arg(long)]
    pub socket_patience: Option<usize>,

    /// Partition axis: variable or step
    #[arg(long, alias = "axis")]
    pub plug_axis: Option<String>,
    /// A number, or "target-wise" for one plug per axis unit.
    #[arg(long)]
    pub plug_count: Option<String>,
    /// Plug hidden width
    #[arg(long)]
    pub d: Option<usize>,
    /// Plug learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Plug early-stopping patience
    #[arg(long)]
    pub patience: Option<usize>,
    /// Plug training batch size
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Plug epoch cap
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Layer-norm epsilon inside each plug
    #[arg(long)]
    pub eps: Option<f64>,

    /// Calibration mode: non-collective or collective
    #[arg(long)]
    pub mode: Option<String>,
    /// Train plugs on threads instead of sequentially
    #[arg(long)]
    pub parallel: bool,
    /// Max plugs in flight with --parallel (default: all)
    #[arg(long)]
    pub workers: Option<usize>,
    /// Root seed for data, socket and plugs
    #[arg(long)]
    pub seed: Option<u64>,
}

/// File (if any) + flags → the config a command runs with.
pub fn resolve(over: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match &over.config {
        Some(path) => {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "config file {} not found",
                    path.display()
                )));
            }
            let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<ExperimentConfig>(&body)
                .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };

    macro_rules! take {
        ($field:ident) => {
            if let Some(v) = &over.$field {
                cfg.$field = Some(v.clone());
            }
        };
        ($field:ident, plain) => {
            if let Some(v) = &over.$field {
                cfg.$field = v.clone();
            }
        };
    }
    take!(dataset);
    take!(synth_n, plain);
    take!(synth_length, plain);
    take!(synth_periods, plain);
    take!(synth_noise_std, plain);
    take!(synth_slopes, plain);
    take!(synth_rho, plain);
    take!(t, plain);
    take!(s, plain);
    take!(stride, plain);
    take!(socket);
    take!(socket_kind, plain);
    take!(socket_hidden, plain);
    take!(socket_kernel, plain);
    take!(socket_lr, plain);
    take!(socket_batch_size, plain);
    take!(socket_max_epochs, plain);
    take!(socket_patience, plain);
    take!(plug_axis, plain);
    take!(d, plain);
    take!(lr, plain);
    take!(patience, plain);
    take!(batch_size, plain);
    take!(max_epochs, plain);
    take!(eps, plain);
    take!(mode, plain);
    take!(workers);
    take!(seed, plain);

    if let Some(raw) = &over.split {
        if raw.len() != 3 {
            return Err(Error::Config(format!(
                "--split wants three ratios, got {}",
                raw.len()
            )));
        }
        cfg.split = Some([raw[0], raw[1], raw[2]]);
    }
    if let Some(raw) = &over.plug_count {
        cfg.plug_count = match raw.parse::<usize>() {
            Ok(c) => PlugCount::Count(c),
            Err(_) => PlugCount::Label(raw.clone()),
        };
    }
    if over.parallel {
        cfg.parallel = true;
    }
    Ok(cfg)
}

pub fn write_resolved(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("resolved_config.json");
    let body = serde_json::to_string_pretty(cfg).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 9, "d": 64, "mode": "collective"}"#).unwrap();
        let over = Overrides {
            config: Some(path),
            d: Some(16),
            ..Overrides::default()
        };
        let cfg = resolve(&over).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.d, 16);
        assert_eq!(cfg.mode, "collective");
        assert_eq!(cfg.t, 96);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"lerning_rate": 0.1}"#).unwrap();
        let over = Overrides {
            config: Some(path),
            ..Overrides::default()
        };
        let err = resolve(&over).unwrap_err();
        assert!(err.is_usage(), "unknown key should be a usage error");
    }

    #[test]
    fn plug_count_resolution() {
        assert_eq!(PlugCount::Count(7).resolve(21).unwrap(), 7);
        assert_eq!(
            PlugCount::Label("target-wise".into()).resolve(21).unwrap(),
            21
        );
        assert!(PlugCount::Label("al".into()).resolve(21).is_err());
    }

    #[test]
    fn resolved_round_trips() {
        let cfg = ExperimentConfig {
            split: Some([0.7, 0.1, 0.2]),
            plug_count: PlugCount::Count(6),
            workers: Some(6),
            ..ExperimentConfig::default()
        };
        let body = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&body).unwrap();
        assert_eq!(back, cfg);
    }
}

//! Run configuration: one JSON file, overridden by flags.
//!
//! Every tunable of the pipeline lives in [`RunConfig`] so a run is
//! reproducible from the config file plus the seed alone. Command-line
//! flags always win over file values; the seed is mandatory and must
//! arrive through one of the two.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use miscast::estimator::EstimatorConfig;
use miscast::knowledgebase::{KbBuildConfig, SamplingPolicy};
use miscast::metafeatures::MetaConfig;
use miscast::synthgen::GaSettings;
use miscast::{Error, Result, Seed};



/// Serialized run settings; all sections optional, defaults supplied at
/// the point of use.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    /// Folds of the fold-aware meta-feature pass.
    pub folds: Option<usize>,
    pub meta: Option<MetaConfig>,
    pub estimator: Option<EstimatorConfig>,
    pub kb: Option<KbBuildConfig>,
    pub ga: Option<GaSettings>,
    pub sampling: Option<SamplingPolicy>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            Error::invalid(format!("config {}: {e}", path.display()))
        })
    }
}

/// Flag-merged settings every command starts from.
pub struct Resolved {
    pub seed: Seed,
    pub out_dir: PathBuf,
    pub config: RunConfig,
    /// The config file actually read, for manifest recording.
    pub config_path: Option<PathBuf>,
}

impl Resolved {
    pub fn meta(&self) -> MetaConfig {
        self.config.meta.clone().unwrap_or_default()
    }

    pub fn estimator(&self) -> EstimatorConfig {
        let mut est = self.config.estimator.clone().unwrap_or_default();
        if let Some(meta) = &self.config.meta {
            est.meta = meta.clone();
        }
        est
    }

    pub fn kb_build(&self) -> KbBuildConfig {
        let mut kb = self.config.kb.clone().unwrap_or_default();
        if let Some(meta) = &self.config.meta {
            kb.meta = meta.clone();
        }
        kb
    }

    pub fn ga(&self) -> GaSettings {
        self.config.ga.clone().unwrap_or_default()
    }

    pub fn sampling(&self) -> Option<SamplingPolicy> {
        self.config.sampling
    }

    pub fn metafeature_folds(&self) -> usize {
        self.config.folds.unwrap_or(5)
    }
}

/// Merge the global flags with the optional config file.
pub fn resolve(
    config_path: Option<PathBuf>,
    seed_flag: Option<u64>,
    threads_flag: Option<usize>,
    out_dir_flag: Option<PathBuf>,
) -> Result<Resolved> {
    let config = match &config_path {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = seed_flag
        .or(config.seed)
        .ok_or_else(|| Error::invalid("a seed is required: pass --seed or set it in the config"))?;
    if let Some(threads) = threads_flag.or(config.threads) {
        if threads == 0 {
            return Err(Error::invalid("--threads must be at least 1"));
        }
        miscast::par::configure_threads(threads);
    }
    let out_dir = out_dir_flag
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    Ok(Resolved {
        seed: Seed(seed),
        out_dir,
        config,
        config_path,
    })
}

//! Experiment manifest.
//!
//! A TOML file with four optional tables; every key is optional and
//! command-line flags override it:
//!
//! ```toml
//! [paths]          # relative paths resolve against the file's directory
//! corpus = "texts"
//! features = "passage.features.csv"
//! lexicon = "words.txt"
//! model = "model.json"
//! output_dir = "out"
//!
//! [generation]
//! m = 20
//! tau = 0.1
//! strategy = "mip"      # stat | sel | size | mip
//! size_rule = "ceil"    # ceil | floor
//!
//! [solver]
//! time_limit = 120.0    # seconds
//! node_limit = 1000000
//! threads = 1
//! tolerance = 1e-9
//! encoding = "epigraph" # epigraph | minmax | indicator | pwl
//! branching = "widest"  # widest | sequential
//!
//! [providers]
//! mode = "surrogate"    # surrogate | precomputed
//! strict = false
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub generation: Generation,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub providers: Providers,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generation {
    pub m: Option<usize>,
    pub tau: Option<f64>,
    pub strategy: Option<String>,
    pub size_rule: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Solver {
    pub time_limit: Option<f64>,
    pub node_limit: Option<u64>,
    pub threads: Option<usize>,
    pub tolerance: Option<f64>,
    pub encoding: Option<String>,
    pub branching: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Providers {
    pub mode: Option<String>,
    pub strict: Option<bool>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Config = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let p = &mut cfg.paths;
        for (name, slot) in [
            ("corpus", &mut p.corpus),
            ("features", &mut p.features),
            ("lexicon", &mut p.lexicon),
            ("model", &mut p.model),
        ] {
            if let Some(rel) = slot.take() {
                let full = base.join(rel);
                if !full.exists() {
                    bail!("config path {name} = {} does not exist", full.display());
                }
                *slot = Some(full);
            }
        }
        if let Some(out) = p.output_dir.take() {
            p.output_dir = Some(base.join(out));
        }
        if let Some(t) = cfg.generation.tau {
            if !(0.0..=1.0).contains(&t) {
                bail!("config generation.tau = {t} outside [0, 1]");
            }
        }
        if cfg.generation.m == Some(0) {
            bail!("config generation.m must be at least 1");
        }
        if let Some(mode) = &cfg.providers.mode {
            if mode != "surrogate" && mode != "precomputed" {
                bail!("config providers.mode must be surrogate or precomputed, got '{mode}'");
            }
        }
        Ok(cfg)
    }
}

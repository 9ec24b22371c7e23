//! Run configuration, read from TOML. Every section has defaults, so an
//! empty file is a valid configuration that runs on a synthetic corpus.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use technet::corpus::AssignmentMode;
use technet::econo::{EstimatorSpec, PanelSpec};
use technet::events::LpSpec;
use technet::linkage::LinkageVariant;
use technet::simnet::{CitationNormalizer, FlowWindow};
use technet::synth::CorpusSpec;
use technet::textproc::{default_stopwords, parse_stopwords, CellMode, PipelineConfig};
use technet::{Error, Result};

/// Environment variable naming the artifact directory. It takes precedence
/// over `cache_dir` in the config file.
pub const CACHE_ENV: &str = "TECHNET_CACHE_DIR";
pub const DEFAULT_CACHE_DIR: &str = "technet-cache";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every random draw in the pipeline derives from it.
    pub seed: u64,
    pub cache_dir: Option<PathBuf>,
    pub input: InputConfig,
    pub synth: CorpusSpec,
    pub text: TextConfig,
    pub network: NetworkConfig,
    pub centrality: CentralityConfig,
    pub linkage: LinkageConfig,
    pub panel: PanelSpec,
    pub estimate: EstimateConfig,
    pub events: EventsConfig,
    pub merge: MergeConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// JSONL patent records. When absent, ingest generates a synthetic
    /// corpus from the `synth` section and the root seed.
    pub records: Option<PathBuf>,
    pub first_year: i32,
    pub last_year: i32,
    pub assignment: AssignmentMode,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig {
            records: None,
            first_year: 1976,
            last_year: 2021,
            assignment: AssignmentMode::Univocal,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextConfig {
    /// One stopword per line; the bundled English list when absent.
    pub stopwords: Option<PathBuf>,
    pub df_cutoff: f64,
    pub cell_mode: CellMode,
    pub min_token_len: usize,
    pub smooth_idf: bool,
}

impl Default for TextConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        TextConfig {
            stopwords: None,
            df_cutoff: p.df_cutoff,
            cell_mode: p.cell_mode,
            min_token_len: p.min_token_len,
            smooth_idf: p.smooth_idf,
        }
    }
}

impl TextConfig {
    /// Pipeline settings; `stopword_text` is the content of the configured
    /// stopword file, if any.
    pub fn pipeline(&self, stopword_text: Option<&str>) -> Result<PipelineConfig> {
        let stopwords = match stopword_text {
            Some(text) => parse_stopwords(text),
            None => default_stopwords(),
        };
        let cfg = PipelineConfig {
            stopwords,
            df_cutoff: self.df_cutoff,
            cell_mode: self.cell_mode,
            min_token_len: self.min_token_len,
            smooth_idf: self.smooth_idf,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub window: FlowWindow,
    pub normalizer: CitationNormalizer,
    /// Also write random-permutation copies of the text matrices.
    pub counterfactual: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            window: FlowWindow::default(),
            normalizer: CitationNormalizer::default(),
            counterfactual: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CentralityConfig {
    /// Latent factor from the correlation (true) or covariance matrix.
    pub standardize: bool,
}

impl Default for CentralityConfig {
    fn default() -> Self {
        CentralityConfig { standardize: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkageConfig {
    pub variants: Vec<String>,
}

impl Default for LinkageConfig {
    fn default() -> Self {
        LinkageConfig {
            variants: LinkageVariant::ALL
                .iter()
                .map(|v| v.tag().to_string())
                .collect(),
        }
    }
}

impl LinkageConfig {
    pub fn parsed(&self) -> Result<Vec<LinkageVariant>> {
        parse_variants(&self.variants)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub models: Vec<EstimatorSpec>,
    /// Linkage variants to regress on, one fit each; all built variants
    /// when empty.
    pub variants: Vec<String>,
    /// Raise the regressor lag order until residuals pass the serial
    /// correlation test.
    pub select_lags: bool,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            models: vec![EstimatorSpec::default()],
            variants: Vec::new(),
            select_lags: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subperiod {
    pub name: String,
    pub from: i32,
    pub to: i32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventsConfig {
    /// Linkage variant whose peak increase defines the direct shock.
    pub direct_variant: String,
    /// Variant for the network shock.
    pub latent_variant: String,
    /// Inclusive event window; the whole panel when absent.
    pub window: Option<(i32, i32)>,
    pub lp: LpSpec,
    pub subperiods: Vec<Subperiod>,
}

impl Default for EventsConfig {
    fn default() -> Self {
        EventsConfig {
            direct_variant: "TWF".into(),
            latent_variant: "LatentFactor".into(),
            window: None,
            lp: LpSpec::default(),
            subperiods: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MergeSource {
    #[default]
    Text,
    Citation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeConfig {
    pub source: MergeSource,
    /// Sum the pruned yearly networks rather than the full matrices.
    pub pruned: bool,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig {
            source: MergeSource::Text,
            pruned: true,
        }
    }
}

pub fn parse_variants(tags: &[String]) -> Result<Vec<LinkageVariant>> {
    let mut out = Vec::new();
    for t in tags {
        let v: LinkageVariant = t.parse()?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    Ok(out)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = read_text(path)?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        // Relative paths in the file are relative to the file itself.
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut().filter(|q| q.is_relative()) {
                *q = base.join(&*q);
            }
        };
        rebase(&mut cfg.input.records);
        rebase(&mut cfg.text.stopwords);
        rebase(&mut cfg.cache_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.first_year > self.input.last_year {
            return Err(Error::input("input.first_year is after input.last_year"));
        }
        self.linkage.parsed()?;
        parse_variants(&self.estimate.variants)?;
        for m in &self.estimate.models {
            m.validate()?;
        }
        if self.estimate.models.is_empty() {
            return Err(Error::input("estimate.models is empty"));
        }
        Ok(())
    }

    pub fn cache_dir(&self) -> PathBuf {
        std::env::var_os(CACHE_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .or_else(|| self.cache_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR))
    }

    /// Digest of the whole resolved configuration.
    pub fn digest(&self) -> String {
        digest_json(self)
    }
}

/// SHA-256 of the JSON form of a value; struct fields serialize in
/// declaration order, so the digest is stable.
pub fn digest_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config values serialize");
    hex::encode(Sha256::digest(&bytes))
}

/// Seed for one named random draw, derived from the root seed.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

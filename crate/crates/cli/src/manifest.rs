//! Run manifest: which stage produced which file, from which inputs and
//! under which configuration. Downstream stages consult it to refuse stale
//! artifacts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use technet::{Error, Result};

use crate::config::{digest_json, RunConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Text,
    Network,
    Centrality,
    Linkage,
    Estimate,
    Events,
    Report,
    Merge,
}

impl Stage {
    /// The stages `run` executes, in order.
    pub const PIPELINE: [Stage; 8] = [
        Stage::Ingest,
        Stage::Text,
        Stage::Network,
        Stage::Centrality,
        Stage::Linkage,
        Stage::Estimate,
        Stage::Events,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Text => "text",
            Stage::Network => "network",
            Stage::Centrality => "centrality",
            Stage::Linkage => "linkage",
            Stage::Estimate => "estimate",
            Stage::Events => "events",
            Stage::Report => "report",
            Stage::Merge => "merge",
        }
    }

    /// Stages whose outputs this one reads.
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Text => &[Stage::Ingest],
            Stage::Network => &[Stage::Ingest, Stage::Text],
            Stage::Centrality => &[Stage::Network],
            Stage::Linkage => &[Stage::Ingest, Stage::Network, Stage::Centrality],
            Stage::Estimate => &[Stage::Ingest, Stage::Linkage],
            Stage::Events => &[Stage::Linkage, Stage::Estimate],
            Stage::Report => &[Stage::Ingest, Stage::Linkage],
            Stage::Merge => &[Stage::Network],
        }
    }

    /// All transitive upstream stages in pipeline order.
    pub fn ancestors(self) -> Vec<Stage> {
        let mut out = Vec::new();
        let mut todo: Vec<Stage> = self.upstream().to_vec();
        while let Some(s) = todo.pop() {
            if !out.contains(&s) {
                out.push(s);
                todo.extend_from_slice(s.upstream());
            }
        }
        out.sort();
        out
    }

    /// Digest of the configuration this stage's outputs depend on, not
    /// counting what its upstream stages already account for.
    pub fn config_digest(self, cfg: &RunConfig) -> String {
        match self {
            Stage::Ingest => {
                // The synthetic corpus settings only matter without an input file.
                let synth = cfg
                    .input
                    .records
                    .is_none()
                    .then_some((&cfg.synth, cfg.seed));
                digest_json(&(&cfg.input, synth))
            }
            Stage::Text => digest_json(&cfg.text),
            Stage::Network => digest_json(&(&cfg.network, cfg.seed)),
            Stage::Centrality => digest_json(&cfg.centrality),
            Stage::Linkage => digest_json(&cfg.linkage),
            Stage::Estimate => digest_json(&(&cfg.panel, &cfg.estimate)),
            Stage::Events => digest_json(&cfg.events),
            Stage::Report => digest_json(&()),
            Stage::Merge => digest_json(&cfg.merge),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::PIPELINE
            .into_iter()
            .chain([Stage::Merge])
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::input(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub config_digest: String,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    /// Files read from outside the artifact directory, with their digests.
    pub inputs: BTreeMap<String, String>,
    /// One record per stage that has run, in pipeline order.
    pub stages: Vec<StageRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> Option<String> {
    std::fs::read(path).ok().map(|b| sha256_hex(&b))
}

impl RunManifest {
    pub fn new(cfg: &RunConfig) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            config_hash: cfg.digest(),
            inputs: BTreeMap::new(),
            stages: Vec::new(),
        }
    }

    pub fn path(dir: &Path) -> PathBuf {
        dir.join(MANIFEST_FILE)
    }

    /// The manifest in `dir`, or a fresh one when none exists yet.
    pub fn load_or_new(dir: &Path, cfg: &RunConfig) -> Result<Self> {
        let path = Self::path(dir);
        if !path.exists() {
            return Ok(Self::new(cfg));
        }
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut text =
            serde_json::to_string_pretty(self).map_err(|e| Error::input(e.to_string()))?;
        text.push('\n');
        std::fs::write(Self::path(dir), text)?;
        Ok(())
    }

    pub fn get(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }

    /// Insert or replace a stage record, keeping pipeline order.
    pub fn record(&mut self, rec: StageRecord, cfg: &RunConfig) {
        self.stages.retain(|r| r.stage != rec.stage);
        self.stages.push(rec);
        self.stages.sort_by_key(|r| r.stage);
        self.seed = cfg.seed;
        self.config_hash = cfg.digest();
        self.tool_version = env!("CARGO_PKG_VERSION").to_string();
    }

    /// Fail unless every stage `stage` reads from has run under the current
    /// configuration and its files are untouched. The error names the
    /// earliest stage that needs re-running.
    pub fn check_upstream(&self, stage: Stage, dir: &Path, cfg: &RunConfig) -> Result<()> {
        for up in stage.ancestors() {
            self.check_fresh(up, dir, cfg)?;
        }
        Ok(())
    }

    fn check_fresh(&self, stage: Stage, dir: &Path, cfg: &RunConfig) -> Result<()> {
        let Some(rec) = self.get(stage) else {
            return Err(Error::input(format!(
                "stage `{stage}` has not run in {}; run `technet {stage}` first or pass --from-scratch",
                dir.display()
            )));
        };
        let stale = |why: String| Error::Stale(format!("{why}; re-run `technet {stage}`"));
        if rec.config_digest != stage.config_digest(cfg) {
            return Err(stale(format!(
                "configuration of stage `{stage}` changed since it ran"
            )));
        }
        for a in &rec.inputs {
            let path = resolve(dir, &a.path);
            if file_digest(&path).as_deref() != Some(a.sha256.as_str()) {
                return Err(stale(format!(
                    "input {} of stage `{stage}` changed",
                    a.path
                )));
            }
        }
        for a in &rec.outputs {
            if file_digest(&dir.join(&a.path)).as_deref() != Some(a.sha256.as_str()) {
                return Err(stale(format!(
                    "output {} of stage `{stage}` was modified or removed",
                    a.path
                )));
            }
        }
        Ok(())
    }
}

/// Artifact paths are relative to the cache directory; external inputs are
/// stored as absolute paths.
pub fn resolve(dir: &Path, path: &str) -> PathBuf {
    dir.join(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ancestors_are_transitive_and_ordered() {
        assert_eq!(
            Stage::Events.ancestors(),
            vec![
                Stage::Ingest,
                Stage::Text,
                Stage::Network,
                Stage::Centrality,
                Stage::Linkage,
                Stage::Estimate
            ]
        );
        assert!(Stage::Ingest.ancestors().is_empty());
    }

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::PIPELINE.into_iter().chain([Stage::Merge]) {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("nope".parse::<Stage>().is_err());
    }

    #[test]
    fn config_digests_are_per_stage() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.events.direct_variant = "CWC".into();
        assert_eq!(
            Stage::Linkage.config_digest(&a),
            Stage::Linkage.config_digest(&b)
        );
        assert_ne!(
            Stage::Events.config_digest(&a),
            Stage::Events.config_digest(&b)
        );
    }
}

//! Run manifest: effective config, stage records and content hashes of
//! every produced file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use percept_core::experiments::ExperimentConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Pipeline stages in execution order, with the output prefix each owns.
pub const STAGES: [(&str, &str); 8] = [
    ("generate-data", "dataset/"),
    ("train-perception", "perception/"),
    ("estimate-safety", "safety/"),
    ("synthesize", "controllers/"),
    ("simulate", "rollouts/"),
    ("profile", "profile/"),
    ("necessity", "necessity/"),
    ("report", "report/"),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// SHA-256 of the effective configuration serialized as JSON.
    pub config_hash: String,
    pub seed: u64,
    pub fast: bool,
    pub config: ExperimentConfig,
    /// Completed stages in pipeline order.
    pub stages: Vec<StageRecord>,
    /// Relative path to SHA-256 of every produced file.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(cfg)?))
}

fn stage_index(name: &str) -> usize {
    STAGES.iter().position(|(s, _)| *s == name).unwrap_or(STAGES.len())
}

/// Stage that produces files under the prefix of `rel`.
pub fn producer(rel: &str) -> &'static str {
    STAGES.iter().find(|(_, p)| rel.starts_with(p)).map(|(s, _)| *s).unwrap_or("an earlier stage")
}

impl RunManifest {
    /// Loads the manifest in `out`, or starts a new one. An existing manifest
    /// must come from the same configuration and tool version.
    pub fn open(out: &Path, cfg: &ExperimentConfig, fast: bool) -> Result<Self> {
        let hash = config_hash(cfg)?;
        let version = env!("CARGO_PKG_VERSION").to_string();
        let path = out.join(MANIFEST_FILE);
        if path.exists() {
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let m: RunManifest =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            if m.config_hash != hash || m.tool_version != version {
                bail!(
                    "{} was produced by another configuration or version (config {}, version {}); \
                     use a fresh --out directory",
                    out.display(),
                    &m.config_hash[..12],
                    m.tool_version
                );
            }
            return Ok(m);
        }
        Ok(Self {
            tool_version: version,
            config_hash: hash,
            seed: cfg.seed,
            fast,
            config: cfg.clone(),
            stages: vec![],
            files: BTreeMap::new(),
        })
    }

    /// Checks that `rel` exists under `out` with the hash recorded when it
    /// was produced, and returns its path.
    pub fn require(&self, out: &Path, rel: &str) -> Result<PathBuf> {
        let path = out.join(rel);
        if !path.exists() {
            bail!("missing upstream artifact {}: run `{}` first", path.display(), producer(rel));
        }
        let recorded = self
            .files
            .get(rel)
            .ok_or_else(|| anyhow!("{} is not listed in the manifest: rerun `{}`", path.display(), producer(rel)))?;
        if &hash_file(&path)? != recorded {
            bail!("{} changed after `{}` produced it", path.display(), producer(rel));
        }
        Ok(path)
    }

    /// Every recorded file under `prefix`; fails if none are recorded.
    pub fn require_prefix(&self, out: &Path, prefix: &str, marker: &str) -> Result<Vec<String>> {
        self.require(out, &format!("{prefix}{marker}"))?;
        let files: Vec<String> = self.files.keys().filter(|k| k.starts_with(prefix)).cloned().collect();
        for f in &files {
            self.require(out, f)?;
        }
        Ok(files)
    }

    /// Replaces the record of `stage` and hashes its outputs.
    pub fn record(&mut self, out: &Path, stage: &str, inputs: Vec<String>, mut outputs: Vec<String>, seconds: f64) -> Result<()> {
        outputs.sort();
        outputs.dedup();
        if let Some(old) = self.stages.iter().position(|s| s.name == stage) {
            let old = self.stages.remove(old);
            for f in &old.outputs {
                if !outputs.contains(f) {
                    self.files.remove(f);
                }
            }
        }
        for f in &outputs {
            self.files.insert(f.clone(), hash_file(&out.join(f))?);
        }
        self.stages.push(StageRecord { name: stage.into(), inputs, outputs, seconds });
        self.stages.sort_by_key(|s| stage_index(&s.name));
        Ok(())
    }

    pub fn save(&self, out: &Path) -> Result<()> {
        let path = out.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

/// Files directly inside `out/dir`, as sorted paths relative to `out`.
pub fn list_dir(out: &Path, dir: &str) -> Result<Vec<String>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(out.join(dir)).with_context(|| format!("listing {}", out.join(dir).display()))? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            files.push(format!("{dir}/{}", entry.file_name().to_string_lossy()));
        }
    }
    files.sort();
    Ok(files)
}

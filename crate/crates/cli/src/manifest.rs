use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn file_sha256(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Provenance record written next to a command's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub struct ManifestBuilder {
    out_dir: PathBuf,
    manifest: Manifest,
}

impl ManifestBuilder {
    pub fn new(command: &str, out_dir: &Path, config_sha256: String, seed: u64) -> Self {
        Self {
            out_dir: out_dir.to_path_buf(),
            manifest: Manifest {
                command: command.to_string(),
                config_sha256,
                seed,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        }
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        let sum = file_sha256(path)?;
        self.manifest.inputs.insert(path.display().to_string(), sum);
        Ok(())
    }

    /// Writes `contents` to `name` inside the output directory and records it.
    pub fn output(&mut self, name: &str, contents: &[u8]) -> anyhow::Result<PathBuf> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.insert(name.to_string(), hex::encode(Sha256::digest(contents)));
        Ok(path)
    }

    /// Records a file some library call already wrote.
    pub fn written(&mut self, name: &str) -> anyhow::Result<()> {
        let sum = file_sha256(&self.out_dir.join(name))?;
        self.manifest.outputs.insert(name.to_string(), sum);
        Ok(())
    }

    pub fn finish(self) -> anyhow::Result<()> {
        let name = format!("manifest_{}.json", self.manifest.command.replace('-', "_"));
        let mut json = serde_json::to_string_pretty(&self.manifest)?;
        json.push('\n');
        let path = self.out_dir.join(name);
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))
    }
}

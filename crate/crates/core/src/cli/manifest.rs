//! Output directory bookkeeping and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes files under one root and remembers their digests.
pub struct OutDir {
    root: PathBuf,
    digests: BTreeMap<String, String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            digests: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// `rel` uses `/` separators and must stay inside the root.
    pub fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let bytes = bytes.as_ref();
        if rel.split('/').any(|c| c.is_empty() || c == "..") {
            return Err(Error::InvalidArgument(format!("bad output name `{rel}`")));
        }
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.digests.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn digests(&self) -> &BTreeMap<String, String> {
        &self.digests
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub command: String,
    pub version: String,
    pub artifact_version: u32,
    pub seed: u64,
    /// SHA-256 over the resolved config, the seed and every input file.
    pub input_sha256: String,
    pub created: String,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// The config file as given, or empty when defaults were used.
    pub config: String,
    /// The config after defaults, flags and path resolution; replays use it.
    pub resolved: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub manifest: ManifestHeader,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {}", e.message())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// True when `text` looks like a manifest rather than a plain config.
    pub fn detect(text: &str) -> bool {
        text.parse::<toml::Table>()
            .map(|t| t.contains_key("manifest"))
            .unwrap_or(false)
    }
}

pub fn input_hash(resolved: &str, seed: u64, inputs: &[&Path]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(resolved.as_bytes());
    h.update(seed.to_le_bytes());
    for path in inputs {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let m = Manifest {
            manifest: ManifestHeader {
                command: "simulate".into(),
                version: "0.1.0".into(),
                artifact_version: 1,
                seed: 3,
                input_sha256: sha256_hex(b"x"),
                created: timestamp(),
                warnings: vec!["w".into()],
                config: "[simulate]\nn_max = 3\n".into(),
                resolved: "seed = 3\n".into(),
            },
            outputs: BTreeMap::from([("a.csv".to_string(), sha256_hex(b"a"))]),
        };
        let text = m.to_toml().unwrap();
        assert!(Manifest::detect(&text));
        assert!(!Manifest::detect("[simulate]\n"));
        assert_eq!(Manifest::parse(&text, "m").unwrap(), m);
    }

    #[test]
    fn out_dir_refuses_escapes() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutDir::create(dir.path()).unwrap();
        assert!(out.write("../x", "no").is_err());
        out.write("sub/y.txt", "yes").unwrap();
        assert_eq!(out.digests()["sub/y.txt"], sha256_hex(b"yes"));
    }
}

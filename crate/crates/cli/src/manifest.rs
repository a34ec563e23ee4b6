//! Run manifests: one `manifest.txt` per output directory recording what
//! was run, with what, and SHA-256 digests of the artifacts written.

use std::fs;
use std::path::{Path, PathBuf};

use attest::kv::KeyValues;
use sha2::{Digest, Sha256};

use crate::error::{io_err, CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    /// Fully resolved configuration.
    pub config: KeyValues,
    pub inputs: Vec<(String, PathBuf)>,
    /// Artifact file names, relative to the output directory.
    pub outputs: Vec<String>,
    pub duration_secs: f64,
    /// Wall-clock budget the run is expected to meet, when there is one.
    pub budget_secs: Option<f64>,
    /// `(file name, hex digest)` for every output.
    pub checksums: Vec<(String, String)>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, threads: usize, config: KeyValues) -> Self {
        RunManifest {
            command: command.to_string(),
            seed,
            threads,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            duration_secs: 0.0,
            budget_secs: None,
            checksums: Vec::new(),
        }
    }

    /// Records `name` (already written under `dir`) with its digest.
    pub fn add_output(&mut self, dir: &Path, name: &str) -> Result<()> {
        let digest = sha256_file(&dir.join(name))?;
        self.outputs.push(name.to_string());
        self.checksums.push((name.to_string(), digest));
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("command", &self.command);
        kv.set("seed", self.seed);
        kv.set("threads", self.threads);
        kv.set("duration_secs", format!("{:.3}", self.duration_secs));
        if let Some(b) = self.budget_secs {
            kv.set("budget_secs", b);
        }
        for (k, v) in self.config.iter() {
            kv.set(&format!("config.{k}"), v);
        }
        for (name, path) in &self.inputs {
            kv.set(&format!("input.{name}"), path.display());
        }
        for name in &self.outputs {
            kv.set(&format!("output.{name}"), name);
        }
        for (name, digest) in &self.checksums {
            kv.set(&format!("sha256.{name}"), digest);
        }
        kv
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut m = RunManifest::new(
            &kv.require::<String>("command")?,
            kv.require("seed")?,
            kv.require("threads")?,
            kv.section("config"),
        );
        m.duration_secs = kv.require("duration_secs")?;
        m.budget_secs = kv.get("budget_secs").map(str::parse).transpose().map_err(|_| {
            attest::Error::InvalidConfig("budget_secs is not a number".into())
        })?;
        m.inputs = kv
            .section("input")
            .iter()
            .map(|(k, v)| (k.to_string(), PathBuf::from(v)))
            .collect();
        m.outputs = kv.section("output").keys().map(str::to_string).collect();
        m.checksums = kv
            .section("sha256")
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.to_kv().to_text()).map_err(io_err(path))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(CliError::MissingManifest(dir.to_path_buf()));
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        Self::from_kv(&KeyValues::parse(&text)?)
    }

    /// Re-hashes every recorded artifact under `dir`.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for (file, expected) in &self.checksums {
            let actual = sha256_file(&dir.join(file))?;
            if &actual != expected {
                return Err(CliError::ChecksumMismatch {
                    file: file.clone(),
                    expected: expected.clone(),
                    actual,
                });
            }
        }
        Ok(())
    }
}

/// Loads the manifest in `dir` and checks its artifacts.
pub fn load_verified(dir: &Path) -> Result<RunManifest> {
    let m = RunManifest::load(dir)?;
    m.verify(dir)?;
    Ok(m)
}

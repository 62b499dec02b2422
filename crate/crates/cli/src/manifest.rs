//! Output directory ownership, artifact hashing and line-oriented manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, Context};

pub const MANIFEST_VERSION: &str = "1";
pub const LOCK_FILE: &str = ".induplex.lock";

/// Pipeline stages in execution order; also the order of the top-level manifest.
pub const STAGES: [&str; 8] = ["simulate", "ingest", "build", "metrics", "spill", "panel", "estimate", "report"];

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Exclusive ownership of an output directory for the lifetime of the value.
#[derive(Debug)]
pub struct Workspace {
    root: PathBuf,
    lock: PathBuf,
}

impl Workspace {
    pub fn open(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| {
            CliError::config("paths.output", &format!("cannot create `{}`: {e}", root.display()))
        })?;
        let lock = root.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(CliError::config(
                    "paths.output",
                    &format!("`{}` is locked by another run (remove {LOCK_FILE} if it is stale)", root.display()),
                ))
            }
            Err(e) => return Err(CliError::config("paths.output", &format!("cannot lock: {e}"))),
        }
        Ok(Workspace {
            root: root.to_path_buf(),
            lock,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Starts a stage, discarding whatever an earlier run left in its directory.
    pub fn begin(&self, stage: &str) -> Result<StageRecord, CliError> {
        let dir = self.root.join(stage);
        if dir.exists() {
            fs::remove_dir_all(&dir).at(stage, &dir.display().to_string())?;
        }
        fs::create_dir_all(&dir).at(stage, &dir.display().to_string())?;
        Ok(StageRecord {
            stage: stage.to_string(),
            params: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    /// Writes an artifact under the stage directory and records its hash.
    pub fn write(&self, rec: &mut StageRecord, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let rel = format!("{}/{}", rec.stage, name);
        let path = self.root.join(&rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).at(&rec.stage, &rel)?;
        }
        fs::write(&path, bytes).at(&rec.stage, &rel)?;
        rec.outputs.push((rel, sha256_hex(bytes)));
        Ok(())
    }

    /// Reads an artifact of an earlier stage. The file must be listed in that
    /// stage's manifest with a matching hash.
    pub fn read(&self, rec: &mut StageRecord, rel: &str) -> Result<Vec<u8>, CliError> {
        let producer = rel.split('/').next().unwrap_or("");
        let manifest = self.root.join(producer).join("manifest.txt");
        let text = fs::read_to_string(&manifest).map_err(|_| {
            CliError::config(rel, &format!("stage `{producer}` has not been run in `{}`", self.root.display()))
        })?;
        let key = format!("output.{rel}=");
        let expected = text
            .lines()
            .find_map(|l| l.strip_prefix(&key))
            .ok_or_else(|| CliError::config(rel, &format!("not an artifact of stage `{producer}`")))?
            .to_string();
        let bytes = fs::read(self.root.join(rel)).at(&rec.stage, rel)?;
        let actual = sha256_hex(&bytes);
        if actual != expected {
            return Err(CliError::from_core(
                &rec.stage,
                rel,
                induplex::Error::InvalidParameter("artifact changed since its manifest was written".into()),
            ));
        }
        rec.inputs.push((rel.to_string(), actual));
        Ok(bytes)
    }

    /// Artifacts of a stage whose name starts with `prefix`, as relative paths.
    pub fn listed(&self, stage: &str, prefix: &str) -> Result<Vec<String>, CliError> {
        let manifest = self.root.join(stage).join("manifest.txt");
        let text = fs::read_to_string(&manifest)
            .map_err(|_| CliError::config(stage, &format!("stage `{stage}` has not been run")))?;
        let want = format!("output.{stage}/{prefix}");
        Ok(text
            .lines()
            .filter(|l| l.starts_with(&want))
            .filter_map(|l| l.strip_prefix("output.").and_then(|r| r.split_once('=')).map(|(k, _)| k.to_string()))
            .collect())
    }

    /// Writes the stage manifest and regenerates the top-level one.
    pub fn finish(&self, rec: StageRecord) -> Result<(), CliError> {
        let path = self.root.join(&rec.stage).join("manifest.txt");
        fs::write(&path, rec.render()).at(&rec.stage, "manifest.txt")?;
        let mut all = format!("manifest_version={MANIFEST_VERSION}\n");
        for s in STAGES {
            if let Ok(text) = fs::read_to_string(self.root.join(s).join("manifest.txt")) {
                all.push_str(&text);
            }
        }
        fs::write(self.root.join("manifest.txt"), all).at(&rec.stage, "manifest.txt")?;
        Ok(())
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

#[derive(Debug, Clone)]
pub struct StageRecord {
    pub stage: String,
    params: Vec<(String, String)>,
    inputs: Vec<(String, String)>,
    outputs: Vec<(String, String)>,
}

impl StageRecord {
    pub fn params(&mut self, kv: Vec<(String, String)>) {
        self.params.extend(kv);
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.params.push((key.to_string(), value.to_string()));
    }

    /// Records an external input file by its configured name and hash.
    pub fn external(&mut self, key: &str, configured: &str, bytes: &[u8]) {
        self.inputs.push((format!("{key}:{configured}"), sha256_hex(bytes)));
    }

    fn render(&self) -> String {
        let mut s = format!("stage={}\n", self.stage);
        for (k, v) in &self.params {
            s.push_str(&format!("{}.param.{k}={v}\n", self.stage));
        }
        for (k, v) in &self.inputs {
            s.push_str(&format!("{}.input.{k}={v}\n", self.stage));
        }
        for (k, v) in &self.outputs {
            s.push_str(&format!("output.{k}={v}\n"));
        }
        s
    }
}

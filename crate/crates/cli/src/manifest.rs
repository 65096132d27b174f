use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one command run, enough to re-run it and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub command: String,
    /// Arguments after the program name.
    pub args: Vec<String>,
    pub cwd: PathBuf,
    pub configs: BTreeMap<String, PathBuf>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Hashes a file, or every file under a directory in path order.
pub fn hash_tree(path: &Path) -> Result<Vec<FileHash>> {
    if !path.is_dir() {
        return Ok(vec![FileHash { path: path.to_path_buf(), sha256: sha256_file(path)? }]);
    }
    let mut entries: Vec<_> = fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    let mut out = Vec::new();
    for p in entries {
        out.extend(hash_tree(&p)?);
    }
    Ok(out)
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Collects what a command reads and writes while it runs.
#[derive(Debug)]
pub struct Run {
    manifest: RunManifest,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn start(command: &str, args: Vec<String>) -> Result<Self> {
        Ok(Self {
            manifest: RunManifest {
                tool: concat!("socialturn ", env!("CARGO_PKG_VERSION")).into(),
                command: command.into(),
                args,
                cwd: std::env::current_dir()?,
                configs: BTreeMap::new(),
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                started_at: now(),
                finished_at: String::new(),
            },
            outputs: Vec::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.inputs.extend(hash_tree(path)?);
        Ok(())
    }

    pub fn config(&mut self, name: &str, path: &Path) -> Result<()> {
        self.manifest.configs.insert(name.into(), path.to_path_buf());
        self.input(path)
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.manifest.seeds.insert(name.into(), value);
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn first_output(&self) -> Option<&Path> {
        self.outputs.first().map(PathBuf::as_path)
    }

    pub fn finish(mut self) -> Result<RunManifest> {
        for p in &self.outputs {
            self.manifest.outputs.extend(hash_tree(p)?);
        }
        self.manifest.finished_at = now();
        Ok(self.manifest)
    }
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Default manifest location: next to the first output, else in the
/// working directory.
pub fn default_path(command: &str, first_output: Option<&Path>) -> PathBuf {
    match first_output {
        Some(p) => {
            let mut s = p.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        }
        None => PathBuf::from(format!("socialturn-{command}.manifest.json")),
    }
}

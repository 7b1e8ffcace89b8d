//! One directory per run; every JSON artifact is named after the hash of
//! its own bytes.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
    written: Vec<PathBuf>,
}

impl RunDir {
    /// `root/<command>-<hash of the arguments>`. Identical invocations
    /// share a directory and, being deterministic, identical contents.
    pub fn create(root: &Path, command: &str, fingerprint: &str) -> Result<Self> {
        let path = root.join(format!("{command}-{}", &sha256_hex(fingerprint.as_bytes())[..12]));
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(RunDir { path, written: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Writes `<kind>-<hash>.json` and returns its path.
    pub fn write_json<T: Serialize + ?Sized>(&mut self, kind: &str, value: &T) -> Result<PathBuf> {
        let bytes = serde_json::to_vec_pretty(value)?;
        let name = format!("{kind}-{}.json", &sha256_hex(&bytes)[..16]);
        let file = self.path.join(name);
        fs::write(&file, &bytes).with_context(|| format!("writing {}", file.display()))?;
        self.written.push(file.clone());
        Ok(file)
    }

    pub fn write_summary(&mut self, lines: &[String]) -> Result<PathBuf> {
        let file = self.path.join("summary.txt");
        let mut text = lines.join("\n");
        text.push('\n');
        fs::write(&file, text).with_context(|| format!("writing {}", file.display()))?;
        self.written.push(file.clone());
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_follow_contents() {
        let tmp = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(tmp.path(), "probe", "a b").unwrap();
        let p1 = run.write_json("x", &[1, 2]).unwrap();
        let p2 = run.write_json("x", &[1, 2]).unwrap();
        let p3 = run.write_json("x", &[2, 1]).unwrap();
        assert_eq!(p1, p2);
        assert_ne!(p1, p3);
        assert!(p1.file_name().unwrap().to_str().unwrap().starts_with("x-"));
    }
}

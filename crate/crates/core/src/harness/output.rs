//! Artifact files of one run. Every text artifact carries the schema
//! version, config hash and seed in leading comment lines.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;

use crate::error::Result;

/// Writes artifacts into the run directory and remembers their names.
#[derive(Debug)]
pub struct ArtifactDir {
    root: PathBuf,
    config_hash: String,
    seed: u64,
    written: Mutex<Vec<String>>,
}

impl ArtifactDir {
    pub fn new(root: impl Into<PathBuf>, config_hash: impl Into<String>, seed: u64) -> Self {
        Self { root: root.into(), config_hash: config_hash.into(), seed, written: Mutex::new(Vec::new()) }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// File names written so far, in order.
    pub fn written(&self) -> Vec<String> {
        self.written.lock().map(|w| w.clone()).unwrap_or_default()
    }

    fn record(&self, name: &str) {
        if let Ok(mut w) = self.written.lock() {
            if !w.iter().any(|n| n == name) {
                w.push(name.to_string());
            }
        }
    }

    fn header(&self) -> String {
        format!("# schema=v1\n# config_hash={}\n# seed={}\n", self.config_hash, self.seed)
    }

    /// CSV produced by `body`; any leading `#` lines it writes are replaced
    /// by the standard header.
    pub fn csv(&self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<PathBuf> {
        let mut buf = Vec::new();
        body(&mut buf)?;
        let text = String::from_utf8_lossy(&buf);
        let mut out = self.header();
        for line in text.lines().skip_while(|l| l.starts_with('#')) {
            out.push_str(line);
            out.push('\n');
        }
        self.bytes(name, out.as_bytes())
    }

    /// CSV from a header and rows of numbers.
    pub fn table(&self, name: &str, columns: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf> {
        self.csv(name, |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(columns)?;
            for row in rows {
                w.write_record(row.iter().map(|v| v.to_string()))?;
            }
            w.flush()?;
            Ok(())
        })
    }

    /// Pretty JSON with a trailing newline.
    pub fn json(&self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        let mut text = serde_json::to_vec_pretty(value)?;
        text.push(b'\n');
        self.bytes(name, &text)
    }

    pub fn bytes(&self, name: &str, data: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        let mut f = std::fs::File::create(&path)?;
        f.write_all(data)?;
        f.flush()?;
        self.record(name);
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_gets_standard_header() {
        let dir = tempfile::tempdir().unwrap();
        let a = ArtifactDir::new(dir.path(), "abc", 7);
        let p = a
            .csv("k.csv", |buf| {
                writeln!(buf, "# schema=v1\n# seed=7\nx,value\n1,2")?;
                Ok(())
            })
            .unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text, "# schema=v1\n# config_hash=abc\n# seed=7\nx,value\n1,2\n");
        a.table("t.csv", &["a", "b"], &[vec![1.0, 2.5]]).unwrap();
        assert_eq!(a.written(), vec!["k.csv".to_string(), "t.csv".to_string()]);
    }
}

//! Provenance headers, digests and plain-text writers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::{CliError, VERSION};

pub fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    String::from_utf8(read(path)?).map_err(|_| CliError::Validation(format!("{}: not UTF-8", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Header lines shared by every output of one invocation.
#[derive(Clone, Debug)]
pub struct Header {
    lines: Vec<String>,
}

impl Header {
    pub fn new(subcommand: &str, seed: u64) -> Self {
        Self { lines: vec![format!("beaconloc {VERSION} {subcommand}"), format!("seed {seed}")] }
    }

    /// Records an input by file name and content digest, so the header does
    /// not depend on where the file lives.
    pub fn input(mut self, role: &str, path: &Path, bytes: &[u8]) -> Self {
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.lines.push(format!("{role} {name} sha256:{}", sha256_hex(bytes)));
        self
    }

    pub fn field(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        self.lines.push(format!("{key} {value}"));
        self
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    /// The header as `# `-prefixed lines.
    pub fn comment(&self) -> String {
        self.lines.iter().map(|l| format!("# {l}\n")).collect()
    }
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Validation(format!("{}: {e}", dir.display())))
}

pub fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Header followed by whitespace-separated numeric rows.
pub fn write_table(path: &Path, header: &Header, columns: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut s = header.comment();
    s.push_str(&format!("# {}\n", columns.join(" ")));
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    write(path, &s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_abc() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn header_uses_file_name() {
        let h = Header::new("train", 7).input("input", Path::new("/tmp/x/train.rec"), b"abc");
        assert_eq!(h.lines()[1], "seed 7");
        assert!(h.lines()[2].starts_with("input train.rec sha256:ba7816bf"));
        assert!(h.comment().lines().all(|l| l.starts_with("# ")));
    }
}

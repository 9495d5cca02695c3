//! Output directory with a content-hashed manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

pub struct Outputs {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Outputs {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    /// Writes `name` and records its hash.
    pub fn write(&mut self, name: &str, data: &[u8]) -> std::io::Result<()> {
        fs::write(self.dir.join(name), data)?;
        self.files.push(FileEntry { path: name.to_string(), bytes: data.len(), sha256: hex(&Sha256::digest(data)) });
        Ok(())
    }

    /// Renders into a buffer through `f`, then writes it.
    pub fn write_with<F>(&mut self, name: &str, f: F) -> specdisc::Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> specdisc::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)?;
        Ok(())
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

/// Writes rows of displayable fields as RFC-4180 CSV.
pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> specdisc::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| specdisc::Error::Io(e.into_error()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let mut o = Outputs::create(dir.path()).unwrap();
        o.write("a.csv", b"abc").unwrap();
        assert_eq!(o.files()[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), b"abc");
    }
}

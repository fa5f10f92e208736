use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{CompletionRequest, GatewayError};

const INDEX_FILE: &str = "index.tsv";

/// Append-only directory of `<digest>.txt` response files plus an index of
/// `digest \t stage \t model` lines.
#[derive(Debug)]
pub struct ReplayStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl ReplayStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| store_err(&dir, e))?;
        Ok(ReplayStore {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.txt"))
    }

    pub fn get(&self, digest: &str) -> Result<Option<String>, GatewayError> {
        let path = self.entry_path(digest);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
            Err(e) => Err(store_err(&path, e)),
        }
    }

    pub fn contains(&self, digest: &str) -> bool {
        self.entry_path(digest).is_file()
    }

    /// Stores a response unless one already exists for the digest.
    pub fn put(&self, digest: &str, text: &str, req: &CompletionRequest) -> Result<(), GatewayError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let path = self.entry_path(digest);
        if path.exists() {
            return Ok(());
        }
        let tmp = self.dir.join(format!(".{digest}.tmp"));
        fs::write(&tmp, text).map_err(|e| store_err(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| store_err(&path, e))?;
        let index = self.dir.join(INDEX_FILE);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&index)
            .map_err(|e| store_err(&index, e))?;
        writeln!(f, "{digest}\t{}\t{}", req.stage_tag, req.model_name)
            .map_err(|e| store_err(&index, e))
    }

    /// Digests listed in the index, in insertion order.
    pub fn index(&self) -> Result<Vec<String>, GatewayError> {
        let index = self.dir.join(INDEX_FILE);
        match fs::read_to_string(&index) {
            Ok(text) => Ok(text
                .lines()
                .filter_map(|l| l.split('\t').next())
                .filter(|d| !d.is_empty())
                .map(str::to_string)
                .collect()),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(store_err(&index, e)),
        }
    }
}

fn store_err(path: &Path, e: std::io::Error) -> GatewayError {
    GatewayError::Store(format!("{}: {e}", path.display()))
}

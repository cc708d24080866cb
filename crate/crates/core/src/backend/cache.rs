//! Content-addressed response cache for the remote backend.
//!
//! Keys digest (operation name, model name, fully rendered prompt); values
//! are the raw response text, returned byte-identical on a hit. A corrupt or
//! unreadable entry degrades to a miss with a logged warning, never an
//! error. Writes go through a temp file and rename, so concurrent writers of
//! the same key each leave a complete value behind.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    /// The directory is created lazily on first write.
    pub fn new(dir: impl Into<PathBuf>) -> ResponseCache {
        ResponseCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(operation: &str, model: &str, prompt: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(operation.as_bytes());
        hasher.update([0]);
        hasher.update(model.as_bytes());
        hasher.update([0]);
        hasher.update(prompt.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn path_for(&self, operation: &str, model: &str, prompt: &str) -> PathBuf {
        self.dir
            .join(format!("{}.txt", Self::key(operation, model, prompt)))
    }

    pub fn lookup(&self, operation: &str, model: &str, prompt: &str) -> Option<String> {
        let path = self.path_for(operation, model, prompt);
        if !path.exists() {
            return None;
        }
        match fs::read_to_string(&path) {
            Ok(body) => Some(body),
            Err(err) => {
                eprintln!(
                    "warning: cache entry {} unreadable ({err}); treating as miss",
                    path.display()
                );
                None
            }
        }
    }

    pub fn store(&self, operation: &str, model: &str, prompt: &str, response: &str) {
        if let Err(err) = self.try_store(operation, model, prompt, response) {
            eprintln!("warning: cache write failed ({err}); continuing uncached");
        }
    }

    fn try_store(
        &self,
        operation: &str,
        model: &str,
        prompt: &str,
        response: &str,
    ) -> std::io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path_for(operation, model, prompt);
        let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
        fs::write(&tmp, response)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}

//! Staged output files. Everything a command produces is written to
//! temporary files inside the output directory and renamed into place only
//! when the whole command succeeded; dropping a `Staging` discards them.

use std::io::Write;
use std::path::{Path, PathBuf};

use mrscope_core::Result;
use tempfile::NamedTempFile;

pub struct Staging {
    dir: PathBuf,
    files: Vec<(NamedTempFile, PathBuf)>,
}

impl Staging {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Staging { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let target = self.path(name);
        let parent = target.parent().unwrap_or(&self.dir).to_path_buf();
        std::fs::create_dir_all(&parent)?;
        let mut tmp = NamedTempFile::new_in(&parent)?;
        tmp.write_all(bytes)?;
        tmp.flush()?;
        self.files.push((tmp, target));
        Ok(())
    }

    pub fn write_with(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::from)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Move every staged file into place. Returns the final paths.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut done = Vec::with_capacity(self.files.len());
        for (tmp, target) in self.files {
            tmp.persist(&target).map_err(|e| e.error)?;
            done.push(target);
        }
        Ok(done)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nothing_lands_without_commit() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = Staging::new(dir.path()).unwrap();
            s.write("a.txt", b"x").unwrap();
        }
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);

        let mut s = Staging::new(dir.path()).unwrap();
        s.write("sub/b.txt", b"y").unwrap();
        let paths = s.commit().unwrap();
        assert_eq!(std::fs::read(&paths[0]).unwrap(), b"y");
    }
}

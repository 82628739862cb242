use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Files written into an output directory. Unless [`OutDir::keep`] is
/// called, everything written is removed on drop, along with the directory
/// itself when this run created it.
pub struct OutDir {
    dir: PathBuf,
    created: bool,
    written: Vec<PathBuf>,
    keep: bool,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        let created = !dir.exists();
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            created,
            written: Vec::new(),
            keep: false,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn file(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.path(name);
        let f = File::create(&path)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(BufWriter::new(f))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let mut f = self.file(name)?;
        f.write_all(bytes)?;
        f.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn csv<R: Serialize>(
        &mut self,
        name: &str,
        rows: impl IntoIterator<Item = R>,
    ) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(self.file(name)?);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn keep(mut self) {
        self.keep = true;
    }
}

impl Drop for OutDir {
    fn drop(&mut self) {
        if self.keep {
            return;
        }
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.created {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

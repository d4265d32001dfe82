//! All-or-nothing output directories. Files are written into a hidden staging
//! directory and renamed into place only once every one of them succeeded.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub struct Staging {
    out: PathBuf,
    tmp: PathBuf,
    created_out: bool,
    names: Vec<String>,
    committed: bool,
}

impl Staging {
    /// Prepares `out`, which must be a directory or a new name in an existing one.
    pub fn new(out: &Path) -> Result<Self> {
        let created_out = if out.is_dir() {
            false
        } else if out.exists() {
            bail!("output path {} exists and is not a directory", out.display());
        } else {
            match out.parent().filter(|p| !p.as_os_str().is_empty()) {
                Some(p) if !p.is_dir() => bail!("output parent {} does not exist", p.display()),
                _ => {}
            }
            fs::create_dir(out).with_context(|| format!("creating {}", out.display()))?;
            true
        };
        let nonce = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or_default();
        let tmp = out.join(format!(".staging-{}-{nonce}", std::process::id()));
        let staging = Self {
            out: out.to_path_buf(),
            tmp: tmp.clone(),
            created_out,
            names: Vec::new(),
            committed: false,
        };
        fs::create_dir(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        Ok(staging)
    }

    /// Stages one file produced by `fill`.
    pub fn write<F>(&mut self, name: &str, fill: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> Result<()>,
    {
        let path = self.tmp.join(name);
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        fill(&mut w)?;
        w.flush()?;
        w.into_inner()
            .map_err(|e| e.into_error())?
            .sync_all()
            .with_context(|| format!("syncing {}", path.display()))?;
        self.names.push(name.to_string());
        Ok(())
    }

    /// Moves every staged file into the output directory.
    pub fn commit(mut self) -> Result<Vec<PathBuf>> {
        let mut done = Vec::with_capacity(self.names.len());
        for name in &self.names {
            let dest = self.out.join(name);
            fs::rename(self.tmp.join(name), &dest).with_context(|| format!("moving {}", dest.display()))?;
            done.push(dest);
        }
        self.committed = true;
        let _ = fs::remove_dir_all(&self.tmp);
        Ok(done)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.tmp);
            if self.created_out {
                let _ = fs::remove_dir(&self.out);
            }
        }
    }
}

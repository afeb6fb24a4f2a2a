//! Outputs are written into a scratch directory next to their destination
//! and renamed into place only once every file of a command is complete.

use std::path::{Path, PathBuf};

use anyhow::Context;
use tempfile::TempDir;

pub struct Staging {
    dir: TempDir,
    targets: Vec<(PathBuf, PathBuf)>,
}

fn parent_of(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

impl Staging {
    /// Scratch space in the directory of `anchor`.
    pub fn near(anchor: &Path) -> anyhow::Result<Self> {
        let parent = parent_of(anchor);
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
        let dir = tempfile::Builder::new()
            .prefix(".proxybench-")
            .tempdir_in(parent)
            .with_context(|| format!("creating scratch directory in {}", parent.display()))?;
        Ok(Self {
            dir,
            targets: Vec::new(),
        })
    }

    /// Scratch path that will become `target` on commit.
    pub fn file(&mut self, target: &Path) -> PathBuf {
        let name = target
            .file_name()
            .map(|n| n.to_os_string())
            .unwrap_or_else(|| "out".into());
        let staged =
            self.dir
                .path()
                .join(format!("{}-{}", self.targets.len(), name.to_string_lossy()));
        self.targets.push((staged.clone(), target.to_path_buf()));
        staged
    }

    /// Register a file some other writer produced inside the scratch area.
    pub fn adopt(&mut self, staged: PathBuf, target: &Path) {
        self.targets.push((staged, target.to_path_buf()));
    }

    /// Move every staged file into place. On error the scratch directory and
    /// anything already moved are removed.
    pub fn commit(self) -> anyhow::Result<()> {
        let mut moved: Vec<&Path> = Vec::new();
        for (staged, target) in &self.targets {
            if let Err(e) = std::fs::rename(staged, target) {
                for m in moved {
                    let _ = std::fs::remove_file(m);
                }
                return Err(e).with_context(|| format!("moving output to {}", target.display()));
            }
            moved.push(target);
        }
        Ok(())
    }
}

pub fn write_text(staging: &mut Staging, target: &Path, text: &str) -> anyhow::Result<()> {
    let path = staging.file(target);
    std::fs::write(&path, text).with_context(|| format!("writing {}", target.display()))
}

//! On-disk session snapshots, one JSON file per session.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::session::Snapshot;

#[derive(Debug, Clone)]
pub struct SnapshotStore {
    dir: PathBuf,
}

impl SnapshotStore {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Writes through a synced temporary file and a rename, so a reader sees
    /// either the old snapshot or the new one.
    pub fn save(&self, snapshot: &Snapshot) -> std::io::Result<()> {
        let path = self.path(&snapshot.id);
        let tmp = self.dir.join(format!(".{}.tmp", snapshot.id));
        let bytes = serde_json::to_vec(snapshot)?;
        {
            let mut file = fs::File::create(&tmp)?;
            file.write_all(&bytes)?;
            file.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        if let Ok(d) = fs::File::open(&self.dir) {
            let _ = d.sync_all();
        }
        Ok(())
    }

    /// `None` when no snapshot exists for `id`.
    pub fn load(&self, id: &str) -> std::io::Result<Option<Snapshot>> {
        match fs::read(self.path(id)) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }
}

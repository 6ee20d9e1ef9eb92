//! Dataset directory: one `<scan_id>.csv` per scan plus `split.json`
//! mapping every scan id to `train`, `val` or `test`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{load_scan, save_scan, RadarScan};

pub const SPLIT_FILE: &str = "split.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub splits: BTreeMap<String, Split>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let split_path = root.join(SPLIT_FILE);
        let text = fs::read_to_string(&split_path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Error::Config(format!("{} not found", split_path.display()))
            }
            _ => Error::io(&split_path, e),
        })?;
        let splits: BTreeMap<String, Split> = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", split_path.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            splits,
        })
    }

    pub fn ids(&self, split: Split) -> Vec<&str> {
        self.splits
            .iter()
            .filter(|(_, &s)| s == split)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn scan_path(&self, id: &str) -> PathBuf {
        self.root.join(format!("{id}.csv"))
    }

    /// Loads every scan of `split` in scan-id order.
    pub fn load_split(&self, split: Split) -> Result<Vec<RadarScan>> {
        self.ids(split)
            .into_iter()
            .map(|id| load_scan(&self.scan_path(id)))
            .collect()
    }
}

/// Writes scans and the split file into `root` (created if missing).
pub fn write_dataset(root: &Path, scans: &[(RadarScan, Split)]) -> Result<Dataset> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut splits = BTreeMap::new();
    for (scan, split) in scans {
        if splits.insert(scan.scan_id.clone(), *split).is_some() {
            return Err(Error::Argument(format!("duplicate scan id {}", scan.scan_id)));
        }
        save_scan(scan, &root.join(format!("{}.csv", scan.scan_id)))?;
    }
    let split_path = root.join(SPLIT_FILE);
    let mut text = serde_json::to_string_pretty(&splits)?;
    text.push('\n');
    fs::write(&split_path, text).map_err(|e| Error::io(&split_path, e))?;
    Ok(Dataset {
        root: root.to_path_buf(),
        splits,
    })
}

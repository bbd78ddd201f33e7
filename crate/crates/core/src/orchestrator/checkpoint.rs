//! Append-only training log persisted as `checkpoint.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::learners::LearnerFamily;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Entry {
    LayerStarted {
        layer: usize,
    },
    FoldCompleted {
        layer: usize,
        family: LearnerFamily,
        repeat: usize,
        fold: usize,
        seed: u64,
        seconds: f64,
        rows: usize,
        cols: usize,
        /// Layer clock when the fold finished.
        layer_elapsed: f64,
        path: String,
        sha256: String,
    },
    FoldFailed {
        layer: usize,
        family: LearnerFamily,
        repeat: usize,
        fold: usize,
        seed: u64,
        error: String,
        layer_elapsed: f64,
    },
    FamilySkipped {
        layer: usize,
        family: LearnerFamily,
        estimate: f64,
        remaining: f64,
    },
    GroupDiscarded {
        layer: usize,
        family: LearnerFamily,
        reason: String,
    },
    LayerPlanned {
        layer: usize,
        repeats: usize,
    },
    LayerClosed {
        layer: usize,
        families: Vec<LearnerFamily>,
    },
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub root_seed: u64,
    pub entries: Vec<Entry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Writes through a temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

impl Checkpoint {
    pub fn new(root_seed: u64) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            root_seed,
            entries: Vec::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CHECKPOINT_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::CorruptCheckpoint(format!("cannot read {}: {e}", path.display())))?;
        let cp: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::CorruptCheckpoint(format!("unparseable {}: {e}", path.display())))?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::CorruptCheckpoint(format!("unsupported checkpoint version {}", cp.version)));
        }
        Ok(cp)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(CHECKPOINT_FILE), serde_json::to_string_pretty(self)?.as_bytes())
    }

    /// Appends and persists immediately.
    pub fn append(&mut self, dir: &Path, entry: Entry) -> Result<()> {
        self.entries.push(entry);
        self.save(dir)
    }

    /// Confirms every completed fold's file exists with the recorded hash.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            if let Entry::FoldCompleted { path, sha256, .. } = e {
                if self.is_discarded_entry(e) {
                    continue;
                }
                let full = dir.join(path);
                let actual = sha256_file(&full)
                    .map_err(|_| Error::CorruptCheckpoint(format!("entry {i}: missing model file {path}")))?;
                if &actual != sha256 {
                    return Err(Error::CorruptCheckpoint(format!("entry {i}: hash mismatch for {path}")));
                }
            }
        }
        Ok(())
    }

    fn is_discarded_entry(&self, e: &Entry) -> bool {
        match e {
            Entry::FoldCompleted { layer, family, .. } => self.is_discarded(*layer, *family),
            _ => false,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.entries.iter().any(|e| matches!(e, Entry::Finished))
    }

    pub fn layer_started(&self, layer: usize) -> bool {
        self.entries
            .iter()
            .any(|e| matches!(e, Entry::LayerStarted { layer: l } if *l == layer))
    }

    pub fn layer_closed(&self, layer: usize) -> Option<&[LearnerFamily]> {
        self.entries.iter().find_map(|e| match e {
            Entry::LayerClosed { layer: l, families } if *l == layer => Some(families.as_slice()),
            _ => None,
        })
    }

    pub fn planned_repeats(&self, layer: usize) -> Option<usize> {
        self.entries.iter().find_map(|e| match e {
            Entry::LayerPlanned { layer: l, repeats } if *l == layer => Some(*repeats),
            _ => None,
        })
    }

    pub fn is_skipped(&self, layer: usize, family: LearnerFamily) -> bool {
        self.entries.iter().any(|e| {
            matches!(e, Entry::FamilySkipped { layer: l, family: f, .. } if *l == layer && *f == family)
        })
    }

    pub fn is_discarded(&self, layer: usize, family: LearnerFamily) -> bool {
        self.entries.iter().any(|e| {
            matches!(e, Entry::GroupDiscarded { layer: l, family: f, .. } if *l == layer && *f == family)
        })
    }

    pub fn completed(&self, layer: usize, family: LearnerFamily, repeat: usize, fold: usize) -> Option<&Entry> {
        self.entries.iter().find(|e| {
            matches!(e, Entry::FoldCompleted { layer: l, family: f, repeat: r, fold: k, .. }
                if *l == layer && *f == family && *r == repeat && *k == fold)
        })
    }

    pub fn failed(&self, layer: usize, family: LearnerFamily, repeat: usize, fold: usize) -> bool {
        self.entries.iter().any(|e| {
            matches!(e, Entry::FoldFailed { layer: l, family: f, repeat: r, fold: k, .. }
                if *l == layer && *f == family && *r == repeat && *k == fold)
        })
    }

    /// Latest layer clock recorded for `layer`.
    pub fn layer_elapsed(&self, layer: usize) -> f64 {
        self.entries
            .iter()
            .filter_map(|e| match e {
                Entry::FoldCompleted { layer: l, layer_elapsed, .. }
                | Entry::FoldFailed { layer: l, layer_elapsed, .. }
                    if *l == layer =>
                {
                    Some(*layer_elapsed)
                }
                _ => None,
            })
            .fold(0.0, f64::max)
    }

    /// Families in the log in any layer, in order of first appearance.
    pub fn families_seen(&self) -> Vec<LearnerFamily> {
        let mut out = Vec::new();
        for e in &self.entries {
            let f = match e {
                Entry::FoldCompleted { family, .. }
                | Entry::FoldFailed { family, .. }
                | Entry::FamilySkipped { family, .. }
                | Entry::GroupDiscarded { family, .. } => Some(*family),
                _ => None,
            };
            if let Some(f) = f {
                if !out.contains(&f) {
                    out.push(f);
                }
            }
        }
        out
    }
}

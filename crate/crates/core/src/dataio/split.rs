use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Held-out studies per corpus of 450.
pub const DEFAULT_TEST_COUNT: usize = 22;

/// A persisted train/test partition shared by every experiment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub seed: u64,
    pub test_ids: Vec<String>,
    pub train_ids: Vec<String>,
}

/// Shuffles `ids` under `seed` and holds out the first `test_count`. The
/// result does not depend on the input order of `ids`.
pub fn make_split(ids: &[String], seed: u64, test_count: usize) -> Result<SplitManifest> {
    let unique: BTreeSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(Error::InvalidSplit("duplicate study ids".into()));
    }
    if test_count >= ids.len() {
        return Err(Error::InvalidSplit(format!(
            "cannot hold out {test_count} of {} studies",
            ids.len()
        )));
    }
    let mut order: Vec<String> = unique.into_iter().cloned().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test_ids = order[..test_count].to_vec();
    let mut train_ids = order[test_count..].to_vec();
    test_ids.sort();
    train_ids.sort();
    Ok(SplitManifest {
        seed,
        test_ids,
        train_ids,
    })
}

impl SplitManifest {
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let manifest: SplitManifest = toml::from_str(text)?;
        let test: BTreeSet<_> = manifest.test_ids.iter().collect();
        if manifest.train_ids.iter().any(|id| test.contains(id)) {
            return Err(Error::InvalidSplit("train and test ids overlap".into()));
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_toml(&text)
    }

    /// Reads the manifest at `path`, or creates and persists one from `ids`
    /// if the file does not exist yet.
    pub fn load_or_create(path: &Path, ids: &[String], seed: u64, test_count: usize) -> Result<Self> {
        if path.exists() {
            return Self::load(path);
        }
        let manifest = make_split(ids, seed, test_count)?;
        manifest.save(path)?;
        Ok(manifest)
    }
}

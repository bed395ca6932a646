//! File-backed feature store.
//!
//! Layout: `{root}/{user}/features.csv` per user plus `{root}/manifest.json`.
//! Every file is replaced by writing a temporary sibling and renaming it
//! over the target, so a reader sees either the old or the new content.
//! The per-user CSV is authoritative; the manifest is bookkeeping and is
//! rewritten after it.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use eegauth_core::classifiers::TrainedModel;
use eegauth_core::dataset::{self, Instance, Label};
use eegauth_core::features::FeatureVector;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const FEATURES_FILE: &str = "features.csv";
pub const MODEL_FILE: &str = "model.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const STORE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEntry {
    pub n_instances: usize,
    pub has_model: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub format_version: u32,
    pub users: BTreeMap<String, UserEntry>,
    /// Free-form provenance of imported cohorts (e.g. the synth manifest).
    #[serde(default)]
    pub cohort: Option<serde_json::Value>,
}

impl Default for StoreManifest {
    fn default() -> Self {
        StoreManifest {
            format_version: STORE_FORMAT_VERSION,
            users: BTreeMap::new(),
            cohort: None,
        }
    }
}

/// Where a simulated crash interrupts [`FeatureStore::put_user`].
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashPoint {
    /// Half of the temporary file written, nothing renamed.
    MidTempWrite,
    /// Temporary file complete, not yet renamed.
    BeforeRename,
    /// Features renamed into place, manifest not updated.
    BeforeManifest,
}

/// User ids become directory names, so only a conservative alphabet is
/// accepted.
pub fn validate_user_id(user: &str) -> Result<(), ServiceError> {
    let ok = !user.is_empty()
        && user.len() <= 64
        && user.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        && !user.starts_with('-');
    if ok {
        Ok(())
    } else {
        Err(ServiceError::InvalidRequest(format!(
            "user_id must be 1-64 characters of [A-Za-z0-9_-], got {user:?}"
        )))
    }
}

pub struct FeatureStore {
    root: PathBuf,
    // Readers share, writers are exclusive across the whole store.
    lock: RwLock<()>,
}

fn io_err(path: &Path, e: std::io::Error) -> ServiceError {
    ServiceError::Storage(format!("{}: {e}", path.display()))
}

fn write_atomic(path: &Path, bytes: &[u8], crash: Option<CrashPoint>) -> Result<(), ServiceError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        if crash == Some(CrashPoint::MidTempWrite) {
            f.write_all(&bytes[..bytes.len() / 2]).map_err(|e| io_err(&tmp, e))?;
            return Err(ServiceError::Storage("simulated crash".into()));
        }
        f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
        f.sync_all().map_err(|e| io_err(&tmp, e))?;
    }
    if crash == Some(CrashPoint::BeforeRename) {
        return Err(ServiceError::Storage("simulated crash".into()));
    }
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

impl FeatureStore {
    /// Opens (creating if needed) a store rooted at `root`. Leftover
    /// temporary files from interrupted writes are removed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
        let store = FeatureStore {
            root,
            lock: RwLock::new(()),
        };
        store.sweep_temp_files()?;
        let manifest_path = store.root.join(MANIFEST_FILE);
        if !manifest_path.exists() {
            store.write_manifest(&StoreManifest::default())?;
        } else {
            let m = store.read_manifest()?;
            if m.format_version != STORE_FORMAT_VERSION {
                return Err(ServiceError::Storage(format!(
                    "{}: unsupported store format {}",
                    manifest_path.display(),
                    m.format_version
                )));
            }
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn sweep_temp_files(&self) -> Result<(), ServiceError> {
        let mut dirs = vec![self.root.clone()];
        for entry in fs::read_dir(&self.root).map_err(|e| io_err(&self.root, e))? {
            let path = entry.map_err(|e| io_err(&self.root, e))?.path();
            if path.is_dir() {
                dirs.push(path);
            }
        }
        for dir in dirs {
            for entry in fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
                let path = entry.map_err(|e| io_err(&dir, e))?.path();
                if path.extension().is_some_and(|x| x == "tmp") {
                    fs::remove_file(&path).map_err(|e| io_err(&path, e))?;
                }
            }
        }
        Ok(())
    }

    fn user_dir(&self, user: &str) -> PathBuf {
        self.root.join(user)
    }

    pub fn read_manifest(&self) -> Result<StoreManifest, ServiceError> {
        let path = self.root.join(MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| ServiceError::Storage(format!("{}: {e}", path.display())))
    }

    fn write_manifest(&self, m: &StoreManifest) -> Result<(), ServiceError> {
        let body = serde_json::to_vec_pretty(m).map_err(|e| ServiceError::Internal(e.to_string()))?;
        write_atomic(&self.root.join(MANIFEST_FILE), &body, None)
    }

    fn read_user_unlocked(&self, user: &str) -> Result<Option<Vec<Instance>>, ServiceError> {
        let path = self.user_dir(user).join(FEATURES_FILE);
        if !path.exists() {
            return Ok(None);
        }
        dataset::load_features_csv(&path)
            .map(Some)
            .map_err(|e| ServiceError::Storage(e.to_string()))
    }

    fn users_unlocked(&self) -> Result<Vec<String>, ServiceError> {
        let mut users = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(|e| io_err(&self.root, e))? {
            let entry = entry.map_err(|e| io_err(&self.root, e))?;
            let path = entry.path();
            if path.join(FEATURES_FILE).is_file() {
                if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                    users.push(name.to_string());
                }
            }
        }
        users.sort();
        Ok(users)
    }

    /// Stores `features` as the user's enrollment set, replacing any
    /// previous one. Instances are renumbered `0..n` under the user's id.
    pub fn put_user(&self, user: &str, features: &[FeatureVector]) -> Result<(), ServiceError> {
        self.put_user_inner(user, features, None)
    }

    #[doc(hidden)]
    pub fn put_user_interrupted(&self, user: &str, features: &[FeatureVector], at: CrashPoint) -> Result<(), ServiceError> {
        self.put_user_inner(user, features, Some(at))
    }

    fn put_user_inner(&self, user: &str, features: &[FeatureVector], crash: Option<CrashPoint>) -> Result<(), ServiceError> {
        validate_user_id(user)?;
        let instances: Vec<Instance> = features
            .iter()
            .enumerate()
            .map(|(i, f)| Instance::unlabeled(user, i, *f))
            .collect();
        let mut csv = Vec::new();
        dataset::write_features_csv(&instances, &mut csv).map_err(|e| ServiceError::Internal(e.to_string()))?;

        let _guard = self.lock.write().unwrap_or_else(|p| p.into_inner());
        let dir = self.user_dir(user);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        write_atomic(&dir.join(FEATURES_FILE), &csv, crash)?;
        if crash == Some(CrashPoint::BeforeManifest) {
            return Err(ServiceError::Storage("simulated crash".into()));
        }
        // A new enrollment set invalidates the model trained on the old one.
        let model = dir.join(MODEL_FILE);
        if model.exists() {
            fs::remove_file(&model).map_err(|e| io_err(&model, e))?;
        }
        let mut m = self.read_manifest()?;
        m.users.insert(
            user.to_string(),
            UserEntry {
                n_instances: instances.len(),
                has_model: false,
            },
        );
        self.write_manifest(&m)
    }

    pub fn get_user(&self, user: &str) -> Result<Option<Vec<Instance>>, ServiceError> {
        validate_user_id(user)?;
        let _guard = self.lock.read().unwrap_or_else(|p| p.into_inner());
        self.read_user_unlocked(user)
    }

    /// Every stored instance of every user except `excluding`.
    pub fn get_pool(&self, excluding: &str) -> Result<Vec<Instance>, ServiceError> {
        let _guard = self.lock.read().unwrap_or_else(|p| p.into_inner());
        let mut pool = Vec::new();
        for user in self.users_unlocked()? {
            if user == excluding {
                continue;
            }
            let instances = self.read_user_unlocked(&user)?.unwrap_or_default();
            if let Some(bad) = instances.iter().find(|i| i.source_subject != user || i.label != Label::Unlabeled) {
                return Err(ServiceError::Storage(format!(
                    "{}/{FEATURES_FILE}: row for {} ({}) does not belong to this user",
                    user, bad.source_subject, bad.label
                )));
            }
            pool.extend(instances);
        }
        Ok(pool)
    }

    /// Users with a stored feature file, sorted.
    pub fn list_users(&self) -> Result<Vec<String>, ServiceError> {
        let _guard = self.lock.read().unwrap_or_else(|p| p.into_inner());
        self.users_unlocked()
    }

    pub fn put_model(&self, user: &str, model: &TrainedModel) -> Result<(), ServiceError> {
        validate_user_id(user)?;
        let bytes = model.to_json().map_err(|e| ServiceError::Internal(e.to_string()))?;
        let _guard = self.lock.write().unwrap_or_else(|p| p.into_inner());
        let dir = self.user_dir(user);
        if !dir.join(FEATURES_FILE).exists() {
            return Err(ServiceError::NotFound(format!("user {user} is not enrolled")));
        }
        write_atomic(&dir.join(MODEL_FILE), &bytes, None)?;
        let mut m = self.read_manifest()?;
        if let Some(e) = m.users.get_mut(user) {
            e.has_model = true;
        }
        self.write_manifest(&m)
    }

    pub fn get_model(&self, user: &str) -> Result<Option<TrainedModel>, ServiceError> {
        validate_user_id(user)?;
        let _guard = self.lock.read().unwrap_or_else(|p| p.into_inner());
        let path = self.user_dir(user).join(MODEL_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
        TrainedModel::from_json(&bytes)
            .map(Some)
            .map_err(|e| ServiceError::Storage(format!("{}: {e}", path.display())))
    }

    pub fn set_cohort_metadata(&self, cohort: serde_json::Value) -> Result<(), ServiceError> {
        let _guard = self.lock.write().unwrap_or_else(|p| p.into_inner());
        let mut m = self.read_manifest()?;
        m.cohort = Some(cohort);
        self.write_manifest(&m)
    }

    /// Loads every subject of a feature table into the store, one user per
    /// subject, in segment order.
    pub fn import_instances(&self, instances: &[Instance]) -> Result<Vec<String>, ServiceError> {
        let groups = dataset::by_subject(instances);
        for (user, mut rows) in groups.clone() {
            rows.sort_by_key(|r| r.segment_index);
            let feats: Vec<FeatureVector> = rows.iter().map(|r| r.features).collect();
            self.put_user(&user, &feats)?;
        }
        Ok(groups.into_keys().collect())
    }
}

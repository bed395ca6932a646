//! Labelled instances, balanced per-user datasets and stratified folds.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::features::{feature_names, FeatureVector, N_FEATURES};
use crate::{seed, Error, Result};

/// Instances per class in a full-size dataset (500 genuine + 500 impostor).
pub const DEFAULT_CLASS_SIZE: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Genuine,
    Impostor,
    Unlabeled,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Genuine => "genuine",
            Label::Impostor => "impostor",
            Label::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "genuine" => Ok(Label::Genuine),
            "impostor" => Ok(Label::Impostor),
            "unlabeled" => Ok(Label::Unlabeled),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub features: FeatureVector,
    pub label: Label,
    pub source_subject: String,
    pub segment_index: usize,
}

impl Instance {
    pub fn unlabeled(subject: impl Into<String>, segment_index: usize, features: FeatureVector) -> Self {
        Instance {
            features,
            label: Label::Unlabeled,
            source_subject: subject.into(),
            segment_index,
        }
    }

    fn key(&self) -> (&str, usize) {
        (&self.source_subject, self.segment_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRef {
    pub subject: String,
    pub segment_index: usize,
}

/// Audit record of how a user dataset was assembled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub owner: String,
    pub seed: u64,
    pub impostor_sources: Vec<SourceRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserDataset {
    pub owner: String,
    pub seed: u64,
    pub instances: Vec<Instance>,
}

impl UserDataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.instances.iter().filter(|i| i.label == label).count()
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            owner: self.owner.clone(),
            seed: self.seed,
            impostor_sources: self
                .instances
                .iter()
                .filter(|i| i.label == Label::Impostor)
                .map(|i| SourceRef {
                    subject: i.source_subject.clone(),
                    segment_index: i.segment_index,
                })
                .collect(),
        }
    }
}

/// Balanced dataset: every own instance as genuine plus an equal number of
/// impostors sampled without replacement from `pool`.
///
/// The pool is sorted by `(subject, segment_index)` before sampling, so the
/// result does not depend on the order the pool was collected in.
pub fn assemble_user_dataset(owner: &str, own: &[Instance], pool: &[Instance], seed_value: u64) -> Result<UserDataset> {
    if own.is_empty() {
        return Err(Error::Validation(format!("no instances for owner {owner}")));
    }
    if let Some(bad) = own.iter().find(|i| i.source_subject != owner) {
        return Err(Error::Validation(format!(
            "own instances must come from {owner}, found {}",
            bad.source_subject
        )));
    }
    if pool.iter().any(|i| i.source_subject == owner) {
        return Err(Error::Contamination(owner.to_string()));
    }
    let needed = own.len();
    if pool.len() < needed {
        return Err(Error::InsufficientPool {
            required: needed,
            available: pool.len(),
        });
    }

    let mut sorted: Vec<&Instance> = pool.iter().collect();
    sorted.sort_by(|a, b| a.key().cmp(&b.key()));
    if sorted.windows(2).any(|w| w[0].key() == w[1].key()) {
        return Err(Error::Validation("impostor pool has duplicate (subject, segment) entries".into()));
    }

    let mut rng = seed::rng(seed_value);
    let mut picked = index::sample(&mut rng, sorted.len(), needed).into_vec();
    picked.sort_unstable();

    let mut instances = Vec::with_capacity(2 * needed);
    instances.extend(own.iter().map(|i| Instance {
        label: Label::Genuine,
        ..i.clone()
    }));
    instances.extend(picked.into_iter().map(|p| Instance {
        label: Label::Impostor,
        ..sorted[p].clone()
    }));
    Ok(UserDataset {
        owner: owner.to_string(),
        seed: seed_value,
        instances,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvSplit {
    pub folds: Vec<Vec<usize>>,
}

impl CvSplit {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn n(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }

    pub fn test_indices(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != fold)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

/// Stratified k-fold split: each class is shuffled and dealt round-robin,
/// with the impostor deal continuing where the genuine deal stopped so fold
/// sizes stay within one of each other.
pub fn stratified_kfold(ds: &UserDataset, k: usize, seed_value: u64) -> Result<CvSplit> {
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for (i, inst) in ds.instances.iter().enumerate() {
        match inst.label {
            Label::Genuine => genuine.push(i),
            Label::Impostor => impostor.push(i),
            Label::Unlabeled => return Err(Error::Split(format!("instance {i} is unlabeled"))),
        }
    }
    let min_class = genuine.len().min(impostor.len());
    if k < 2 || k > min_class {
        return Err(Error::Split(format!("k must be in [2, {min_class}], got {k}")));
    }
    let mut rng = seed::rng(seed_value);
    genuine.shuffle(&mut rng);
    impostor.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (j, &i) in genuine.iter().enumerate() {
        folds[j % k].push(i);
    }
    let offset = genuine.len() % k;
    for (j, &i) in impostor.iter().enumerate() {
        folds[(j + offset) % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(CvSplit { folds })
}

/// Groups instances by source subject (sorted by subject id).
pub fn by_subject(instances: &[Instance]) -> BTreeMap<String, Vec<Instance>> {
    let mut map: BTreeMap<String, Vec<Instance>> = BTreeMap::new();
    for i in instances {
        map.entry(i.source_subject.clone()).or_default().push(i.clone());
    }
    map
}

pub fn csv_header() -> Vec<String> {
    let mut h = vec!["subject".to_string(), "segment_index".to_string(), "label".to_string()];
    h.extend(feature_names());
    h
}

/// Writes the feature CSV. Values use 17 significant digits, which
/// round-trips every f64 exactly.
pub fn save_features_csv(instances: &[Instance], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_features_csv(instances, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_features_csv(instances: &[Instance], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "{}", csv_header().join(","))?;
    for inst in instances {
        write!(w, "{},{},{}", inst.source_subject, inst.segment_index, inst.label)?;
        for v in inst.features.values() {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn load_features_csv(path: &Path) -> Result<Vec<Instance>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_features_csv(&text, path)
}

pub fn parse_features_csv(text: &str, path: &Path) -> Result<Vec<Instance>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?.clone();
    let expected = csv_header();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if let Some(missing) = expected.iter().find(|c| !found.contains(&c.as_str())) {
        return Err(Error::parse(path, 1, format!("missing column {missing}")));
    }
    if found != expected {
        return Err(Error::parse(path, 1, format!("unexpected header; expected {}", expected.join(","))));
    }

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (r, row) in reader.records().enumerate() {
        let line = r + 2;
        let row = row.map_err(|e| Error::parse(path, line, e.to_string()))?;
        if row.len() != expected.len() {
            return Err(Error::parse(path, line, format!("expected {} fields, got {}", expected.len(), row.len())));
        }
        let subject = row[0].trim().to_string();
        if subject.is_empty() {
            return Err(Error::parse(path, line, "empty subject"));
        }
        let segment_index: usize = row[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad segment_index {:?}", &row[1])))?;
        let label: Label = row[2].trim().parse().map_err(|m: String| Error::parse(path, line, m))?;
        let mut values = [0.0; N_FEATURES];
        for (j, v) in values.iter_mut().enumerate() {
            let field = row[3 + j].trim();
            *v = field
                .parse()
                .map_err(|_| Error::parse(path, line, format!("column {}: not a number: {field:?}", expected[3 + j])))?;
        }
        let features = FeatureVector::new(values)
            .map_err(|e| Error::Validation(format!("{}:{line}: {e}", path.display())))?;
        if !seen.insert((subject.clone(), segment_index)) {
            return Err(Error::parse(path, line, format!("duplicate row for {subject} segment {segment_index}")));
        }
        out.push(Instance {
            features,
            label,
            source_subject: subject,
            segment_index,
        });
    }
    Ok(out)
}

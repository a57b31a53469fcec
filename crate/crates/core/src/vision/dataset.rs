//! Labelled image collections: directory ingestion, stratified splitting and
//! class relabelling.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::train::Example;
use crate::vision::image::{decode_image, Image};
use crate::vision::transform::{resize, to_grayscale};

/// Target name that removes a class in [`merge_classes`].
pub const DROP: &str = "DROP";

/// Class names in index order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelMap {
    names: Vec<String>,
}

impl TryFrom<Vec<String>> for LabelMap {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<LabelMap> for Vec<String> {
    fn from(m: LabelMap) -> Self {
        m.names
    }
}

impl LabelMap {
    pub fn new(names: Vec<String>) -> Result<Self> {
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() {
                return Err(Error::InvalidArgument("class names must be non-empty".into()));
            }
            if names[..i].contains(n) {
                return Err(Error::InvalidArgument(format!("duplicate class name '{n}'")));
            }
        }
        Ok(Self { names })
    }

    /// Sorted, de-duplicated names.
    pub fn sorted<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        let mut names: Vec<String> = names.into_iter().map(Into::into).collect();
        names.sort();
        names.dedup();
        Self { names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Image,
    pub label: usize,
    /// Path relative to the dataset root, or a synthetic identifier.
    pub source: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<Sample>,
    labels: LabelMap,
}

impl LabeledDataset {
    pub fn new(samples: Vec<Sample>, labels: LabelMap) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| s.label >= labels.len()) {
            return Err(Error::LabelOutOfRange {
                label: s.label,
                classes: labels.len(),
            });
        }
        Ok(Self { samples, labels })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn labels(&self) -> &LabelMap {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples per class, indexed like the label map.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Grayscale, square-resized `[1, size, size]` tensors of raw intensities.
    pub fn to_examples(&self, size: usize) -> Result<Vec<Example>> {
        self.samples
            .par_iter()
            .map(|s| Ok(Example::new(prepare_image(&s.image, size)?.to_tensor(), s.label)))
            .collect()
    }
}

/// Grayscale conversion followed by a resize to `size x size`.
pub fn prepare_image(img: &Image, size: usize) -> Result<Image> {
    resize(&to_grayscale(img), size, size)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadStats {
    pub per_class: Vec<usize>,
    /// Files that failed to decode and were left out.
    pub skipped: Vec<PathBuf>,
    /// Classes whose directory held no usable image.
    pub empty_classes: Vec<String>,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

/// Loads `<root>/<ClassName>/<file>`.
///
/// With `labels = None` the classes are the sorted subdirectory names.
/// With an explicit map, every subdirectory must name a class in it and
/// classes without a directory get a count of zero. Samples are ordered by
/// class, then by file name. Undecodable files are skipped with a warning.
pub fn load_dataset_dir(root: &Path, labels: Option<&LabelMap>) -> Result<(LabeledDataset, LoadStats)> {
    if !root.is_dir() {
        return Err(Error::Dataset(format!("{} is not a directory", root.display())));
    }
    let class_dirs: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    let dir_names: Vec<String> = class_dirs
        .iter()
        .map(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(str::to_owned)
                .ok_or_else(|| Error::Dataset(format!("non UTF-8 class directory {}", p.display())))
        })
        .collect::<Result<_>>()?;
    if dir_names.is_empty() {
        return Err(Error::Dataset(format!("{} contains no class directories", root.display())));
    }
    let labels = match labels {
        Some(m) => {
            if let Some(n) = dir_names.iter().find(|n| m.index_of(n).is_none()) {
                return Err(Error::UnmappedClass(n.clone()));
            }
            m.clone()
        }
        None => LabelMap::sorted(dir_names.iter().cloned()),
    };

    let mut files = Vec::new();
    for (dir, name) in class_dirs.iter().zip(&dir_names) {
        let label = labels.index_of(name).expect("checked above");
        for path in sorted_entries(dir)?.into_iter().filter(|p| p.is_file()) {
            files.push((label, path));
        }
    }
    files.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.file_name().cmp(&b.1.file_name())));

    let decoded: Vec<Result<Image>> = files
        .par_iter()
        .map(|(_, path)| {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_image(&bytes)
        })
        .collect();

    let mut samples = Vec::with_capacity(files.len());
    let mut stats = LoadStats {
        per_class: vec![0; labels.len()],
        ..LoadStats::default()
    };
    for ((label, path), img) in files.into_iter().zip(decoded) {
        match img {
            Ok(image) => {
                stats.per_class[label] += 1;
                samples.push(Sample {
                    image,
                    label,
                    source: path.strip_prefix(root).unwrap_or(&path).to_path_buf(),
                });
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                stats.skipped.push(path);
            }
        }
    }
    for (name, &count) in labels.names().iter().zip(&stats.per_class) {
        if count == 0 {
            log::warn!("class '{name}' has no images");
            stats.empty_classes.push(name.clone());
        }
    }
    Ok((LabeledDataset::new(samples, labels)?, stats))
}

/// How many samples per class go to validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ValSplit {
    /// `floor(count * fraction)` per class; the fraction lies in (0, 1).
    Fraction(f64),
    FixedPerClass(usize),
}

impl Default for ValSplit {
    fn default() -> Self {
        ValSplit::Fraction(0.2)
    }
}

impl ValSplit {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ValSplit::Fraction(f) if !(f > 0.0 && f < 1.0) => {
                Err(Error::InvalidArgument(format!("validation fraction must lie in (0, 1), got {f}")))
            }
            _ => Ok(()),
        }
    }

    /// Validation count for a class of `count` samples.
    pub fn take(&self, count: usize) -> Result<usize> {
        self.validate()?;
        match *self {
            // the epsilon absorbs products such as 0.29 * 100 = 28.999999999999996
            ValSplit::Fraction(f) => Ok((count as f64 * f + 1e-9).floor() as usize),
            ValSplit::FixedPerClass(n) if n > count => Err(Error::Dataset(format!(
                "cannot take {n} validation samples from a class of {count}"
            ))),
            ValSplit::FixedPerClass(n) => Ok(n),
        }
    }
}

/// Per-class sampling without replacement over a label sequence. Returns
/// `(train, val)` index lists, each in ascending order.
pub fn split_indices(labels: &[usize], classes: usize, split: ValSplit, rng: &mut RngState) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class
            .get_mut(l)
            .ok_or(Error::LabelOutOfRange { label: l, classes })?
            .push(i);
    }
    let mut in_val = vec![false; labels.len()];
    for members in &mut by_class {
        let take = split.take(members.len())?;
        rng.shuffle(members);
        for &i in &members[..take] {
            in_val[i] = true;
        }
    }
    let (val, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| in_val[i]);
    Ok((train, val))
}

/// Stratified train/validation split. Both halves keep the label map and the
/// original sample order.
pub fn stratified_split(ds: &LabeledDataset, split: ValSplit, rng: &mut RngState) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, val) = split_indices(&ds.label_indices(), ds.labels().len(), split, rng)?;
    Ok((ds.subset(&train), ds.subset(&val)))
}

/// Relabels class names through `mapping` (old name to new name, or [`DROP`]).
/// The new label map is the sorted set of target names. Returns the new map
/// and, for each old class index, its new index (`None` when dropped).
pub fn remap_labels(labels: &LabelMap, mapping: &BTreeMap<String, String>) -> Result<(LabelMap, Vec<Option<usize>>)> {
    let targets: Vec<&str> = labels
        .names()
        .iter()
        .map(|n| mapping.get(n).map(String::as_str).ok_or_else(|| Error::UnmappedClass(n.clone())))
        .collect::<Result<_>>()?;
    let new = LabelMap::sorted(targets.iter().copied().filter(|&t| t != DROP));
    let index = targets.iter().map(|&t| new.index_of(t)).collect();
    Ok((new, index))
}

pub fn merge_classes(ds: &LabeledDataset, mapping: &BTreeMap<String, String>) -> Result<LabeledDataset> {
    let (labels, index) = remap_labels(ds.labels(), mapping)?;
    let samples = ds
        .samples
        .iter()
        .filter_map(|s| {
            index[s.label].map(|label| Sample {
                label,
                ..s.clone()
            })
        })
        .collect();
    LabeledDataset::new(samples, labels)
}

pub const MILD: &str = "MildDemented";
pub const MODERATE: &str = "ModerateDemented";
pub const NON: &str = "NonDemented";
pub const VERY_MILD: &str = "VeryMildDemented";
pub const DEMENTED: &str = "Demented";

/// The class ladder of the experiments: all four stages, moderate dropped,
/// or demented stages merged against non-demented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassMode {
    #[default]
    Four,
    ThreeDropModerate,
    TwoMerged,
}

impl ClassMode {
    /// The relabelling this mode applies to the four stage names, or `None`
    /// for the identity.
    pub fn mapping(self) -> Option<BTreeMap<String, String>> {
        let pairs: &[(&str, &str)] = match self {
            ClassMode::Four => return None,
            ClassMode::ThreeDropModerate => &[(MILD, MILD), (MODERATE, DROP), (NON, NON), (VERY_MILD, VERY_MILD)],
            ClassMode::TwoMerged => &[(MILD, DEMENTED), (MODERATE, DEMENTED), (NON, NON), (VERY_MILD, DEMENTED)],
        };
        Some(pairs.iter().map(|&(a, b)| (a.to_string(), b.to_string())).collect())
    }

    pub fn apply(self, ds: &LabeledDataset) -> Result<LabeledDataset> {
        match self.mapping() {
            None => Ok(ds.clone()),
            Some(m) => merge_classes(ds, &m),
        }
    }
}

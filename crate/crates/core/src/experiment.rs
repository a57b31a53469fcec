//! End-to-end runs driven by an [`ExperimentConfig`]: train, evaluate,
//! predict and split. Every file is written through a temp file and a rename.

use std::path::{Path, PathBuf};

use crate::config::{load_bundle, save_bundle, ExperimentConfig, ModelMeta};
use crate::error::{Error, Result};
use crate::metrics::{binary_metrics, evaluate, ConfusionMatrix, MetricsReport};
use crate::nn::Model;
use crate::rng::RngState;
use crate::tensor::Tensor;
use crate::train::{fit_with, Augment, Example, NoAugment, TrainReport};
use crate::vision::{
    decode_image, load_dataset_dir, merge_classes, prepare_image, split_indices, LabelMap, LabeledDataset, Sample, ValSplit,
    DEMENTED,
};
use crate::zoo::write_atomic;

pub const WEIGHTS_FILE: &str = "model.nnwa";
pub const TRAIN_REPORT_CSV: &str = "train_report.csv";
pub const TRAIN_REPORT_JSON: &str = "train_report.json";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const CONFUSION_TXT: &str = "confusion_matrix.txt";
pub const RESOLVED_CONFIG: &str = "resolved_config.json";
pub const TRAIN_MANIFEST: &str = "train.txt";
pub const VAL_MANIFEST: &str = "val.txt";

// Independent RNG streams derived from the config seed.
const SPLIT_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const TRAIN_STREAM: u64 = 3;

/// Loads `root`, then relabels it through `mapping` when one is given.
pub fn load_labeled(root: &Path, mapping: Option<&std::collections::BTreeMap<String, String>>) -> Result<LabeledDataset> {
    let (ds, stats) = load_dataset_dir(root, None)?;
    if ds.is_empty() {
        return Err(Error::Dataset(format!("{} holds no decodable images", root.display())));
    }
    log::info!(
        "loaded {} images from {} ({} skipped)",
        ds.len(),
        root.display(),
        stats.skipped.len()
    );
    match mapping {
        Some(m) => merge_classes(&ds, m),
        None => Ok(ds),
    }
}

/// Re-indexes `ds` against `labels`. Fails on a class `labels` does not know.
pub fn align_labels(ds: &LabeledDataset, labels: &LabelMap) -> Result<LabeledDataset> {
    let index: Vec<usize> = ds
        .labels()
        .names()
        .iter()
        .map(|n| labels.index_of(n).ok_or_else(|| Error::UnmappedClass(n.clone())))
        .collect::<Result<_>>()?;
    let samples = ds
        .samples()
        .iter()
        .map(|s| Sample {
            label: index[s.label],
            ..s.clone()
        })
        .collect();
    LabeledDataset::new(samples, labels.clone())
}

/// Binary measures with `Demented` as the positive class when the label map
/// is exactly that pair, macro one-vs-rest otherwise.
pub fn metrics_for(model: &Model, set: &[Example], labels: &LabelMap) -> Result<(ConfusionMatrix, MetricsReport)> {
    let (cm, report) = evaluate(model, set, labels.names())?;
    match labels.index_of(DEMENTED) {
        Some(positive) if labels.len() == 2 && cm.total() > 0 => {
            let binary = binary_metrics(&cm, positive, labels.names())?;
            Ok((cm, binary))
        }
        _ => Ok((cm, report)),
    }
}

/// What a training run leaves behind.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: PathBuf,
    pub report: TrainReport,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    pub meta: ModelMeta,
}

/// Loads and relabels the data, splits it, builds (or transfers) the model,
/// trains, evaluates on the validation half and writes every artifact into
/// `cfg.out_dir`.
pub fn run_training(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mapping = cfg.mapping();
    let ds = load_labeled(&cfg.data_root, mapping.as_ref())?;
    let root = RngState::new(cfg.seed);

    let (train_idx, val_idx) = split_indices(&ds.label_indices(), ds.labels().len(), cfg.val, &mut root.fork(SPLIT_STREAM))?;
    let examples = ds.to_examples(cfg.input_size)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| examples[i].clone()).collect::<Vec<_>>();
    let (train, val) = (pick(&train_idx), pick(&val_idx));
    if train.is_empty() {
        return Err(Error::Dataset("the split leaves no training samples".into()));
    }
    log::info!("{} classes, {} train / {} validation samples", ds.labels().len(), train.len(), val.len());

    let (spec, mut model) = cfg.build_model(ds.labels().len(), &mut root.fork(INIT_STREAM))?;
    log::info!("model '{}' with {} parameters", spec.name, model.param_count());

    let augment: &dyn Augment = if cfg.augment.any() { &cfg.augment } else { &NoAugment };
    let report = fit_with(&mut model, &train, &val, &cfg.fit_options(), &mut root.fork(TRAIN_STREAM), augment)?;
    let (confusion, metrics) = metrics_for(&model, &val, ds.labels())?;

    let meta = ModelMeta {
        spec,
        labels: ds.labels().clone(),
        mapping,
        input_size: cfg.input_size,
    };
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let weights = out.join(WEIGHTS_FILE);
    write_atomic(&out.join(RESOLVED_CONFIG), cfg.to_json()?.as_bytes())?;
    save_bundle(&model, &meta, &weights)?;
    write_atomic(&out.join(TRAIN_REPORT_CSV), report.to_csv()?.as_bytes())?;
    write_atomic(&out.join(TRAIN_REPORT_JSON), report.to_json()?.as_bytes())?;
    write_metrics(out, &confusion, &metrics, ds.labels())?;
    Ok(TrainOutcome {
        weights,
        report,
        confusion,
        metrics,
        meta,
    })
}

/// `metrics.json`, `metrics.csv` and the confusion grid.
pub fn write_metrics(out: &Path, cm: &ConfusionMatrix, report: &MetricsReport, labels: &LabelMap) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_atomic(&out.join(METRICS_JSON), report.to_json()?.as_bytes())?;
    write_atomic(&out.join(METRICS_CSV), report.to_csv()?.as_bytes())?;
    write_atomic(&out.join(CONFUSION_TXT), cm.to_grid(labels.names()).as_bytes())
}

/// A loaded model bundle ready for inference.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub model: Model,
    pub meta: ModelMeta,
}

pub fn load_model(weights: &Path) -> Result<Loaded> {
    let (model, meta) = load_bundle(weights)?;
    if model.output_width() != meta.labels.len() {
        return Err(Error::build(
            "head",
            format!("{} outputs but {} class names", model.output_width(), meta.labels.len()),
        ));
    }
    Ok(Loaded { model, meta })
}

/// Data loading half of evaluation: the relabelling stored with the model is
/// applied, then labels are matched to the model's by name.
pub fn load_eval_set(loaded: &Loaded, data: &Path) -> Result<Vec<Example>> {
    let ds = load_labeled(data, loaded.meta.mapping.as_ref())?;
    align_labels(&ds, &loaded.meta.labels)?.to_examples(loaded.meta.input_size)
}

pub fn evaluate_set(loaded: &Loaded, set: &[Example]) -> Result<(ConfusionMatrix, MetricsReport)> {
    metrics_for(&loaded.model, set, &loaded.meta.labels)
}

/// Class probabilities for one encoded image.
pub fn predict_bytes(loaded: &Loaded, bytes: &[u8]) -> Result<Tensor> {
    let img = decode_image(bytes)?;
    let input = prepare_image(&img, loaded.meta.input_size)?.to_tensor();
    loaded.model.forward(&input)
}

/// One `<relative-path>\t<class>` line per sample, in dataset order.
pub fn manifest(ds: &LabeledDataset, indices: &[usize]) -> Result<String> {
    let mut out = String::new();
    for &i in indices {
        let s = &ds.samples()[i];
        let path = s
            .source
            .to_str()
            .ok_or_else(|| Error::Dataset(format!("non UTF-8 path {}", s.source.display())))?;
        let class = ds.labels().name(s.label).expect("label within map");
        out.push_str(&path.replace('\\', "/"));
        out.push('\t');
        out.push_str(class);
        out.push('\n');
    }
    Ok(out)
}

/// Writes `train.txt` and `val.txt` for a stratified split of `data`.
pub fn write_split(data: &Path, split: ValSplit, seed: u64, out: &Path) -> Result<(usize, usize)> {
    split.validate()?;
    let ds = load_labeled(data, None)?;
    let (train, val) = split_indices(&ds.label_indices(), ds.labels().len(), split, &mut RngState::new(seed).fork(SPLIT_STREAM))?;
    let (train_text, val_text) = (manifest(&ds, &train)?, manifest(&ds, &val)?);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_atomic(&out.join(TRAIN_MANIFEST), train_text.as_bytes())?;
    write_atomic(&out.join(VAL_MANIFEST), val_text.as_bytes())?;
    Ok((train.len(), val.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelKind;
    use crate::vision::{stage_dataset, write_dataset_dir, ClassMode, MODERATE};

    fn fixture(dir: &Path) -> PathBuf {
        let data = dir.join("data");
        write_dataset_dir(&stage_dataset([6, 4, 6, 6], 24, 5).unwrap(), &data).unwrap();
        data
    }

    fn config(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(fixture(dir), dir.join("out"));
        cfg.input_size = 24;
        cfg.epochs = 2;
        cfg.batch_size = 8;
        cfg.class_mode = ClassMode::TwoMerged;
        cfg
    }

    #[test]
    fn training_writes_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path());
        let outcome = run_training(&cfg).unwrap();
        for f in [WEIGHTS_FILE, TRAIN_REPORT_CSV, TRAIN_REPORT_JSON, METRICS_JSON, METRICS_CSV, CONFUSION_TXT, RESOLVED_CONFIG] {
            assert!(cfg.out_dir.join(f).is_file(), "{f}");
        }
        assert!(cfg.out_dir.join("model.json").is_file());
        assert_eq!(outcome.report.len(), 2);
        assert_eq!(outcome.meta.labels.names(), [DEMENTED, "NonDemented"]);
        assert_eq!(outcome.metrics.positive.as_deref(), Some(DEMENTED));
        // floor(16 * 0.2) + floor(6 * 0.2)
        assert_eq!(outcome.confusion.total(), 4);
    }

    #[test]
    fn zero_epochs_still_evaluates() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(dir.path());
        cfg.epochs = 0;
        let outcome = run_training(&cfg).unwrap();
        assert!(outcome.report.is_empty());
        assert_eq!(outcome.confusion.total(), 4);
    }

    #[test]
    fn evaluation_reuses_the_stored_mapping() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(dir.path());
        cfg.class_mode = ClassMode::ThreeDropModerate;
        cfg.model = ModelKind::Proposed;
        let outcome = run_training(&cfg).unwrap();
        let loaded = load_model(&outcome.weights).unwrap();
        assert!(loaded.meta.labels.index_of(MODERATE).is_none());
        let set = load_eval_set(&loaded, &cfg.data_root).unwrap();
        assert_eq!(set.len(), 18);
        let (cm, _) = evaluate_set(&loaded, &set).unwrap();
        assert_eq!(cm.total(), 18);
    }

    #[test]
    fn unknown_class_is_a_data_error() {
        let ds = stage_dataset([1, 1, 1, 1], 8, 0).unwrap();
        let labels = LabelMap::sorted(["MildDemented", "NonDemented"]);
        assert!(matches!(align_labels(&ds, &labels), Err(Error::UnmappedClass(_))));
    }

    #[test]
    fn split_manifests_follow_the_floor_rule() {
        let dir = tempfile::tempdir().unwrap();
        let data = fixture(dir.path());
        let out = dir.path().join("split");
        let (train, val) = write_split(&data, ValSplit::Fraction(0.2), 7, &out).unwrap();
        // floor(1.2) + floor(0.8) + floor(1.2) + floor(1.2)
        assert_eq!((train, val), (19, 3));
        let text = std::fs::read_to_string(out.join(VAL_MANIFEST)).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().all(|l| {
            let (path, class) = l.split_once('\t').unwrap();
            path.starts_with(&format!("{class}/"))
        }));
        let first = std::fs::read(out.join(TRAIN_MANIFEST)).unwrap();
        write_split(&data, ValSplit::Fraction(0.2), 7, &out).unwrap();
        assert_eq!(std::fs::read(out.join(TRAIN_MANIFEST)).unwrap(), first);
    }
}

//! Confusion matrices and the five ratio measures.
//!
//! For a positive class, with TP/FN/FP/TN read off the matrix:
//!
//! * accuracy = (TP + TN) / (TP + TN + FP + FN)
//! * sensitivity = TP / (TP + FN)
//! * specificity = TN / (TN + FP)
//! * precision = TP / (TP + FP)
//! * f_measure = 2 P R / (P + R)
//!
//! A zero denominator yields `None` (serialized as JSON `null`). Multiclass
//! reports use macro one-vs-rest averaging: each class in turn is the
//! positive class, and the per-class values are averaged over the classes
//! where they are defined. Multiclass accuracy is trace / total.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Model;
use crate::tensor::argmax;
use crate::train::Example;

/// `counts[actual][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::InvalidArgument("a confusion matrix needs at least one class".into()));
        }
        Ok(Self {
            classes,
            counts: vec![vec![0; classes]; classes],
        })
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument("confusion counts must form a non-empty square grid".into()));
        }
        Ok(Self { classes: k, counts })
    }

    pub fn from_predictions(predicted: &[usize], actual: &[usize], classes: usize) -> Result<Self> {
        if predicted.len() != actual.len() {
            return Err(Error::ShapeMismatch {
                context: "predicted vs actual labels",
                expected: vec![actual.len()],
                actual: vec![predicted.len()],
            });
        }
        let mut cm = Self::new(classes)?;
        for (&p, &a) in predicted.iter().zip(actual) {
            cm.record(a, p)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, actual: usize, predicted: usize) -> Result<()> {
        for l in [actual, predicted] {
            if l >= self.classes {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    classes: self.classes,
                });
            }
        }
        self.counts[actual][predicted] += 1;
        Ok(())
    }

    /// Entrywise sum with another matrix of the same size.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::ShapeMismatch {
                context: "confusion matrix merge",
                expected: vec![self.classes, self.classes],
                actual: vec![other.classes, other.classes],
            });
        }
        for (a, b) in self.counts.iter_mut().flatten().zip(other.counts.iter().flatten()) {
            *a += b;
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.counts[i][i]).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        self.trace() == self.total()
    }

    /// The binary cells with `positive` as the positive class.
    pub fn one_vs_rest(&self, positive: usize) -> Result<BinaryCounts> {
        if positive >= self.classes {
            return Err(Error::LabelOutOfRange {
                label: positive,
                classes: self.classes,
            });
        }
        let tp = self.counts[positive][positive];
        let fn_ = self.counts[positive].iter().sum::<u64>() - tp;
        let fp = (0..self.classes).map(|a| self.counts[a][positive]).sum::<u64>() - tp;
        Ok(BinaryCounts {
            tp,
            fn_,
            fp,
            tn: self.total() - tp - fn_ - fp,
        })
    }

    /// Right-aligned integer grid; rows are actual classes, columns predicted.
    pub fn to_grid(&self, names: &[String]) -> String {
        let label = |i: usize| names.get(i).cloned().unwrap_or_else(|| i.to_string());
        let row_head = "actual \\ predicted".to_string();
        let first = (0..self.classes).map(|i| label(i).len()).max().unwrap_or(0).max(row_head.len());
        let width = (0..self.classes)
            .map(|i| label(i).len())
            .chain(self.counts.iter().flatten().map(|c| c.to_string().len()))
            .max()
            .unwrap_or(1);
        let mut out = format!("{row_head:<first$}");
        for j in 0..self.classes {
            let _ = write!(out, "  {:>width$}", label(j));
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            let _ = write!(out, "{:<first$}", label(i));
            for c in row {
                let _ = write!(out, "  {c:>width$}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// The five measures; `None` marks a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measures {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub f_measure: Option<f64>,
}

impl BinaryCounts {
    pub fn measures(&self) -> Measures {
        let BinaryCounts { tp, fn_, fp, tn } = *self;
        let sensitivity = ratio(tp, tp + fn_);
        let precision = ratio(tp, tp + fp);
        // Harmonic mean of precision and recall, written over the counts.
        // Undefined when either input is, or when both are zero (tp = 0).
        let f_measure = if tp > 0 { ratio(2 * tp, 2 * tp + fp + fn_) } else { None };
        Measures {
            accuracy: ratio(tp + tn, tp + tn + fp + fn_),
            sensitivity,
            specificity: ratio(tn, tn + fp),
            precision,
            f_measure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Two classes, one designated positive.
    Binary,
    /// One-vs-rest per class, averaged over classes with defined values.
    MacroOneVsRest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub support: u64,
    #[serde(flatten)]
    pub measures: Measures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub averaging: Averaging,
    /// Positive class for binary reports.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub positive: Option<String>,
    pub samples: u64,
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub f_measure: Option<f64>,
    pub per_class: Vec<ClassMetrics>,
}

fn per_class(cm: &ConfusionMatrix, names: &[String]) -> Vec<ClassMetrics> {
    (0..cm.classes())
        .map(|k| {
            let c = cm.one_vs_rest(k).expect("class in range");
            ClassMetrics {
                class: names.get(k).cloned().unwrap_or_else(|| k.to_string()),
                support: c.tp + c.fn_,
                measures: c.measures(),
            }
        })
        .collect()
}

fn class_names(names: &[String], k: usize) -> Vec<String> {
    (0..k).map(|i| names.get(i).cloned().unwrap_or_else(|| i.to_string())).collect()
}

/// Measures of a two-class matrix with `positive` as the positive class.
pub fn binary_metrics(cm: &ConfusionMatrix, positive: usize, names: &[String]) -> Result<MetricsReport> {
    if cm.classes() != 2 {
        return Err(Error::InvalidArgument(format!("binary metrics need 2 classes, got {}", cm.classes())));
    }
    let names = class_names(names, 2);
    let m = cm.one_vs_rest(positive)?.measures();
    Ok(MetricsReport {
        averaging: Averaging::Binary,
        positive: Some(names[positive].clone()),
        samples: cm.total(),
        accuracy: m.accuracy,
        sensitivity: m.sensitivity,
        specificity: m.specificity,
        precision: m.precision,
        f_measure: m.f_measure,
        per_class: per_class(cm, &names),
    })
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Macro one-vs-rest averages; accuracy is trace / total.
pub fn macro_metrics(cm: &ConfusionMatrix, names: &[String]) -> Result<MetricsReport> {
    if cm.classes() < 2 {
        return Err(Error::InvalidArgument("macro metrics need at least 2 classes".into()));
    }
    if cm.total() == 0 {
        return Err(Error::Empty("confusion matrix"));
    }
    let names = class_names(names, cm.classes());
    let rows = per_class(cm, &names);
    let avg = |f: fn(&Measures) -> Option<f64>| mean_defined(rows.iter().map(|r| f(&r.measures)));
    Ok(MetricsReport {
        averaging: Averaging::MacroOneVsRest,
        positive: None,
        samples: cm.total(),
        accuracy: ratio(cm.trace(), cm.total()),
        sensitivity: avg(|m| m.sensitivity),
        specificity: avg(|m| m.specificity),
        precision: avg(|m| m.precision),
        f_measure: avg(|m| m.f_measure),
        per_class: rows,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    /// One `overall` row followed by one row per class; undefined values are empty cells.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Serialize(e.to_string());
        w.write_record(["scope", "support", "accuracy", "sensitivity", "specificity", "precision", "f_measure"])
            .map_err(err)?;
        w.write_record([
            "overall".to_string(),
            self.samples.to_string(),
            fmt_opt(self.accuracy),
            fmt_opt(self.sensitivity),
            fmt_opt(self.specificity),
            fmt_opt(self.precision),
            fmt_opt(self.f_measure),
        ])
        .map_err(err)?;
        for c in &self.per_class {
            let m = &c.measures;
            w.write_record([
                c.class.clone(),
                c.support.to_string(),
                fmt_opt(m.accuracy),
                fmt_opt(m.sensitivity),
                fmt_opt(m.specificity),
                fmt_opt(m.precision),
                fmt_opt(m.f_measure),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serialize(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serialize(e.to_string()))
    }

    /// The five headline measures, one per line.
    pub fn summary(&self) -> String {
        let show = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"));
        let label = match (&self.averaging, &self.positive) {
            (Averaging::Binary, Some(p)) => format!("binary, positive class {p}"),
            (Averaging::Binary, None) => "binary".to_string(),
            (Averaging::MacroOneVsRest, _) => "macro one-vs-rest".to_string(),
        };
        format!(
            "averaging: {label}\naccuracy: {}\nsensitivity: {}\nspecificity: {}\nprecision: {}\nf_measure: {}\n",
            show(self.accuracy),
            show(self.sensitivity),
            show(self.specificity),
            show(self.precision),
            show(self.f_measure)
        )
    }
}

/// Argmax predictions of `model` over `set`, in order.
pub fn predict_all(model: &Model, set: &[Example]) -> Result<Vec<usize>> {
    set.par_iter()
        .map(|e| {
            let probs = model.forward(&e.input)?;
            argmax(probs.as_slice()).ok_or(Error::Empty("model output"))
        })
        .collect()
}

/// Confusion matrix and macro report over a labelled set.
pub fn evaluate(model: &Model, set: &[Example], names: &[String]) -> Result<(ConfusionMatrix, MetricsReport)> {
    let k = model.output_width();
    if names.len() != k {
        return Err(Error::ShapeMismatch {
            context: "model output width vs dataset classes",
            expected: vec![names.len()],
            actual: vec![k],
        });
    }
    let predicted = predict_all(model, set)?;
    let actual: Vec<usize> = set.iter().map(|e| e.label).collect();
    let cm = ConfusionMatrix::from_predictions(&predicted, &actual, k)?;
    let report = if cm.total() == 0 {
        empty_report(k, names)
    } else if k < 2 {
        macro_like_single(&cm, names)
    } else {
        macro_metrics(&cm, names)?
    };
    Ok((cm, report))
}

fn empty_report(k: usize, names: &[String]) -> MetricsReport {
    let cm = ConfusionMatrix::new(k).expect("k >= 1");
    MetricsReport {
        averaging: Averaging::MacroOneVsRest,
        positive: None,
        samples: 0,
        accuracy: None,
        sensitivity: None,
        specificity: None,
        precision: None,
        f_measure: None,
        per_class: per_class(&cm, names),
    }
}

fn macro_like_single(cm: &ConfusionMatrix, names: &[String]) -> MetricsReport {
    let rows = per_class(cm, names);
    let m = rows[0].measures;
    MetricsReport {
        averaging: Averaging::MacroOneVsRest,
        positive: None,
        samples: cm.total(),
        accuracy: ratio(cm.trace(), cm.total()),
        sensitivity: m.sensitivity,
        specificity: m.specificity,
        precision: m.precision,
        f_measure: m.f_measure,
        per_class: rows,
    }
}

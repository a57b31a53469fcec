//! Per-epoch training log with CSV and JSON encodings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// `None` when no validation set was supplied.
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    /// Columns `epoch,train_loss,train_acc,val_loss,val_acc,seconds`; missing values are empty cells.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.epochs {
            w.serialize(e).map_err(|e| Error::Serialize(e.to_string()))?;
        }
        if self.epochs.is_empty() {
            w.write_record(["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "seconds"])
                .map_err(|e| Error::Serialize(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serialize(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    /// The same report with every `seconds` value zeroed, for run-to-run comparison.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        for e in &mut r.epochs {
            e.seconds = 0.0;
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> TrainReport {
        TrainReport {
            epochs: vec![
                EpochRecord {
                    epoch: 1,
                    train_loss: 0.5,
                    train_acc: 0.75,
                    val_loss: Some(0.25),
                    val_acc: Some(1.0),
                    seconds: 0.125,
                },
                EpochRecord {
                    epoch: 2,
                    train_loss: 0.25,
                    train_acc: 1.0,
                    val_loss: None,
                    val_acc: None,
                    seconds: 0.5,
                },
            ],
        }
    }

    #[test]
    fn csv_layout() {
        let csv = report().to_csv().unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,train_loss,train_acc,val_loss,val_acc,seconds");
        assert_eq!(lines[1], "1,0.5,0.75,0.25,1.0,0.125");
        assert_eq!(lines[2], "2,0.25,1.0,,,0.5");
        assert_eq!(TrainReport::default().to_csv().unwrap().lines().count(), 1);
    }

    #[test]
    fn json_round_trip() {
        let r = report();
        let json = r.to_json().unwrap();
        assert!(json.contains("\"val_loss\": null"));
        let back: TrainReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}

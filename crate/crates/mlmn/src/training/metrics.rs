//! Positive-class precision/recall/F1 and the CSV reports.

use std::path::Path;

use super::TrainingError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Metrics {
    /// Zero-division convention: a ratio with an empty denominator is 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

/// `split,P,R,F1,TP,FP,FN` rows.
pub fn write_metrics_csv(path: &Path, rows: &[(String, Metrics)]) -> Result<(), TrainingError> {
    let mut out = String::from("split,P,R,F1,TP,FP,FN\n");
    for (split, m) in rows {
        out.push_str(&format!(
            "{split},{},{},{},{},{},{}\n",
            m.precision, m.recall, m.f1, m.tp, m.fp, m.fn_
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// One training epoch's log line.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_precision: f64,
    pub val_recall: f64,
    pub val_f1: f64,
}

/// `epoch,train_loss,val_P,val_R,val_F1` rows.
pub fn write_epoch_log(path: &Path, logs: &[EpochLog]) -> Result<(), TrainingError> {
    let mut out = String::from("epoch,train_loss,val_P,val_R,val_F1\n");
    for l in logs {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            l.epoch, l.train_loss, l.val_precision, l.val_recall, l.val_f1
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// One row of the negative-ratio sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioRow {
    pub ratio: usize,
    pub metrics: Metrics,
}

pub fn write_ratio_csv(path: &Path, rows: &[RatioRow]) -> Result<(), TrainingError> {
    let mut out = String::from("ratio,P,R,F1,TP,FP,FN\n");
    for r in rows {
        let m = r.metrics;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.ratio, m.precision, m.recall, m.f1, m.tp, m.fp, m.fn_
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_ratio_csv(path: &Path) -> Result<Vec<RatioRow>, TrainingError> {
    let content = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in content.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |s: &str| -> Result<f64, TrainingError> {
            s.parse().map_err(|_| {
                TrainingError::BadData(format!(
                    "line {} of {}: bad number {s}",
                    lineno + 1,
                    path.display()
                ))
            })
        };
        if fields.len() != 7 {
            return Err(TrainingError::BadData(format!(
                "line {} of {}: expected 7 fields",
                lineno + 1,
                path.display()
            )));
        }
        rows.push(RatioRow {
            ratio: parse(fields[0])? as usize,
            metrics: Metrics {
                precision: parse(fields[1])?,
                recall: parse(fields[2])?,
                f1: parse(fields[3])?,
                tp: parse(fields[4])? as usize,
                fp: parse(fields[5])? as usize,
                fn_: parse(fields[6])? as usize,
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_example() {
        let m = Metrics::from_counts(8, 2, 2);
        assert!((m.precision - 0.8).abs() < 1e-12);
        assert!((m.recall - 0.8).abs() < 1e-12);
        assert!((m.f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions() {
        let m = Metrics::from_counts(5, 0, 0);
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn nothing_predicted_is_all_zero() {
        let m = Metrics::from_counts(0, 0, 3);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn no_gold_no_predictions() {
        let m = Metrics::from_counts(0, 0, 0);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn ratio_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        let rows = vec![
            RatioRow {
                ratio: 1,
                metrics: Metrics::from_counts(3, 1, 2),
            },
            RatioRow {
                ratio: 5,
                metrics: Metrics::from_counts(7, 0, 1),
            },
        ];
        write_ratio_csv(&path, &rows).unwrap();
        let back = read_ratio_csv(&path).unwrap();
        assert_eq!(rows, back);
    }

    #[test]
    fn metrics_csv_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        write_metrics_csv(&path, &[("test".into(), Metrics::from_counts(1, 2, 3))]).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        assert!(content.starts_with("split,P,R,F1,TP,FP,FN\n"));
        assert!(content.contains("test,"));
    }
}

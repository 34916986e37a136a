use std::fmt::Write;

use crate::error::{Error, Result};
use crate::image::Mask;

/// Confusion counts over foreground pixels and the scores derived from them.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricsRecord {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// Percentage of wrong classifications.
    pub pwc: f64,
    pub iou: f64,
}

impl MetricsRecord {
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        let ratio = |num: u64, den: u64, empty: f64| {
            if den == 0 {
                empty
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp, 0.0);
        let recall = ratio(tp, tp + fn_, 0.0);
        let f_measure = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let total = tp + fp + tn + fn_;
        Self {
            tp,
            fp,
            tn,
            fn_,
            precision,
            recall,
            f_measure,
            pwc: 100.0 * ratio(fp + fn_, total, 0.0),
            iou: ratio(tp, tp + fp + fn_, 1.0),
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Counts summed, scores averaged per record.
    pub fn mean(records: &[MetricsRecord]) -> MetricsRecord {
        if records.is_empty() {
            return MetricsRecord::default();
        }
        let n = records.len() as f64;
        let mut out = MetricsRecord::default();
        for r in records {
            out.tp += r.tp;
            out.fp += r.fp;
            out.tn += r.tn;
            out.fn_ += r.fn_;
            out.precision += r.precision;
            out.recall += r.recall;
            out.f_measure += r.f_measure;
            out.pwc += r.pwc;
            out.iou += r.iou;
        }
        out.precision /= n;
        out.recall /= n;
        out.f_measure /= n;
        out.pwc /= n;
        out.iou /= n;
        out
    }
}

pub fn evaluate(pred: &Mask, gt: &Mask) -> Result<MetricsRecord> {
    if !pred.same_dims(gt) {
        return Err(Error::dim(format!(
            "evaluate: prediction {:?} vs ground truth {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    pred.check_binary()?;
    gt.check_binary()?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p, g) {
            (1, 1) => tp += 1,
            (1, _) => fp += 1,
            (_, 1) => fn_ += 1,
            _ => tn += 1,
        }
    }
    Ok(MetricsRecord::from_counts(tp, fp, tn, fn_))
}

pub const METRICS_COLUMNS: [&str; 5] = ["precision", "recall", "f_measure", "pwc", "iou"];

/// One line per row: label, then the five scores with four decimals.
/// Space-separated with a header line, or comma-separated when `csv`.
pub fn format_metrics_rows(
    first_column: &str,
    rows: &[(String, MetricsRecord)],
    csv: bool,
) -> String {
    let sep = if csv { "," } else { " " };
    let mut out = String::new();
    out.push_str(first_column);
    for c in METRICS_COLUMNS {
        out.push_str(sep);
        out.push_str(c);
    }
    out.push('\n');
    for (label, m) in rows {
        let _ = writeln!(
            out,
            "{label}{sep}{:.4}{sep}{:.4}{sep}{:.4}{sep}{:.4}{sep}{:.4}",
            m.precision, m.recall, m.f_measure, m.pwc, m.iou
        );
    }
    out
}

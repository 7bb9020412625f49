//! CSV and JSON output of evaluation reports and training histories.

use std::path::Path;

use octseg_core::cv::CvReport;
use octseg_core::metrics::{EvalReport, Summary, COLUMNS};
use octseg_core::train::{EpochRecord, Stage};

use crate::container::write_atomic;
use crate::error::{Error, Result};

pub const ROWS_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.json";

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Per-B-scan rows: volume, B-scan, seven Dice columns (blank when the
/// truth has no fluid) and the filter violation count.
pub fn rows_csv(report: &EvalReport) -> Vec<u8> {
    let mut header = vec!["volume", "bscan"];
    header.extend(COLUMNS);
    header.push("filter_violations");
    csv_bytes(
        &header,
        report.rows.iter().map(|r| {
            let mut row = vec![r.volume_id.clone(), r.bscan.to_string()];
            row.extend((0..COLUMNS.len()).map(|i| cell(r.column(i))));
            row.push(r.filter_violations.to_string());
            row
        }),
    )
}

/// One row per named summary with the seven mean Dice columns.
pub fn summary_csv<'a>(summaries: impl IntoIterator<Item = (String, &'a Summary)>) -> Vec<u8> {
    let mut header = vec!["name"];
    header.extend(COLUMNS);
    header.extend(["bscans", "fluid_bscans", "excluded_from_fluid", "filter_violations"]);
    csv_bytes(
        &header,
        summaries.into_iter().map(|(name, s)| {
            let mut row = vec![name];
            row.extend(s.means.iter().map(|m| cell(*m)));
            row.extend(
                [s.num_bscans, s.fluid_bscans, s.excluded_from_fluid, s.filter_violations].map(|v| v.to_string()),
            );
            row
        }),
    )
}

fn json<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}

pub fn write_eval_report(dir: &Path, report: &EvalReport) -> Result<()> {
    write_atomic(&dir.join(ROWS_FILE), &rows_csv(report))?;
    write_atomic(&dir.join(SUMMARY_FILE), &json(report))?;
    let summaries = report
        .volumes
        .iter()
        .map(|v| (v.volume_id.clone(), &v.summary))
        .chain(std::iter::once((String::from("corpus"), &report.corpus)));
    write_atomic(&dir.join("volumes.csv"), &summary_csv(summaries))
}

/// Fold reports under `fold<i>/` and the aggregate next to them.
pub fn write_cv_report(dir: &Path, report: &CvReport) -> Result<()> {
    for f in &report.folds {
        write_eval_report(&dir.join(format!("fold{}", f.fold)), &f.report)?;
    }
    let rows = report
        .folds
        .iter()
        .map(|f| (format!("fold{}", f.fold), &f.report.corpus))
        .chain(std::iter::once((String::from("aggregate"), &report.aggregate)));
    write_atomic(&dir.join("aggregate.csv"), &summary_csv(rows))?;
    write_atomic(&dir.join("aggregate.json"), &json(report))
}

/// Per-epoch metrics as CSV: stage, epoch, loss, dice, logistic, accuracy.
pub fn metrics_csv(records: &[(Stage, EpochRecord)]) -> Vec<u8> {
    csv_bytes(
        &["stage", "epoch", "loss", "dice", "logistic", "accuracy"],
        records.iter().map(|(s, r)| {
            let stage = serde_json::to_value(s).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            vec![
                stage,
                r.epoch.to_string(),
                r.loss.to_string(),
                r.dice.to_string(),
                r.logistic.to_string(),
                r.accuracy.to_string(),
            ]
        }),
    )
}

pub fn read_json_file<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Corrupt { path: path.into(), msg: e.to_string() })
}

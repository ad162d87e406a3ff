use std::fs::{self, OpenOptions};
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 10] = [
    "run_id",
    "variant",
    "epoch",
    "loss_total",
    "loss_recon",
    "loss_kl",
    "loss_wass",
    "seen_acc",
    "novel_acc",
    "harmonic_mean",
];

/// One line of the metrics CSV. Per-epoch training rows leave the accuracy
/// columns empty; final evaluation rows fill them.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub variant: String,
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_recon: f64,
    pub loss_kl: f64,
    pub loss_wass: f64,
    pub seen_acc: Option<f64>,
    pub novel_acc: Option<f64>,
    pub harmonic_mean: Option<f64>,
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn opt6(v: Option<f64>) -> String {
    v.map(fmt6).unwrap_or_default()
}

impl MetricsRow {
    fn record(&self) -> [String; 10] {
        [
            self.run_id.clone(),
            self.variant.clone(),
            self.epoch.to_string(),
            fmt6(self.loss_total),
            fmt6(self.loss_recon),
            fmt6(self.loss_kl),
            fmt6(self.loss_wass),
            opt6(self.seen_acc),
            opt6(self.novel_acc),
            opt6(self.harmonic_mean),
        ]
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

fn write_rows<W: std::io::Write>(
    w: &mut csv::Writer<W>,
    rows: &[MetricsRow],
    path: &Path,
) -> Result<()> {
    for r in rows {
        w.write_record(r.record()).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a fresh CSV: header plus one line per row, reals at 6 decimals.
pub fn write_metrics(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(METRICS_HEADER).map_err(|e| csv_err(path, e))?;
    write_rows(&mut w, rows, path)
}

/// Appends rows, creating the file with its header if it does not exist.
pub fn append_metrics(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let path = path.as_ref();
    if !path.exists() {
        return write_metrics(path, rows);
    }
    let file = OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    write_rows(&mut w, rows, path)
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let bad = |line: usize, msg: String| Error::Format {
        path: path.to_owned(),
        msg: format!("row {line}: {msg}"),
    };
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(i + 1, e.to_string()))?;
        if rec.len() != METRICS_HEADER.len() {
            return Err(bad(i + 1, format!("expected 10 fields, found {}", rec.len())));
        }
        let real = |j: usize| -> Result<f64> {
            rec[j]
                .parse()
                .map_err(|_| bad(i + 1, format!("{}: {:?}", METRICS_HEADER[j], &rec[j])))
        };
        let opt = |j: usize| -> Result<Option<f64>> {
            if rec[j].is_empty() {
                Ok(None)
            } else {
                real(j).map(Some)
            }
        };
        rows.push(MetricsRow {
            run_id: rec[0].to_string(),
            variant: rec[1].to_string(),
            epoch: rec[2]
                .parse()
                .map_err(|_| bad(i + 1, format!("epoch: {:?}", &rec[2])))?,
            loss_total: real(3)?,
            loss_recon: real(4)?,
            loss_kl: real(5)?,
            loss_wass: real(6)?,
            seen_acc: opt(7)?,
            novel_acc: opt(8)?,
            harmonic_mean: opt(9)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::SeededRng;

    fn row(s: f64, n: f64, h: f64) -> MetricsRow {
        MetricsRow {
            run_id: "r1".into(),
            variant: "mvae".into(),
            epoch: 100,
            loss_total: 1.0,
            loss_recon: 0.5,
            loss_kl: 0.25,
            loss_wass: 0.25,
            seen_acc: Some(s),
            novel_acc: Some(n),
            harmonic_mean: Some(h),
        }
    }

    #[test]
    fn table_row_is_written() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics(&p, &[row(62.9, 57.1, 59.85)]).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let line = text.lines().nth(1).unwrap();
        for v in ["62.9", "57.1", "59.85"] {
            assert!(line.contains(v), "{line}");
        }
    }

    #[test]
    fn empty_rows_give_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics(&p, &[]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), METRICS_HEADER.join(",") + "\n");
        assert!(read_metrics(&p).unwrap().is_empty());
    }

    #[test]
    fn random_rows_round_trip_at_six_decimals() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let mut rng = SeededRng::new(8);
        let rows: Vec<_> = (0..10)
            .map(|i| {
                let mut r = row(rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0));
                r.epoch = i;
                r.loss_total = rng.uniform(0.0, 50.0);
                if i % 3 == 0 {
                    r.seen_acc = None;
                }
                r
            })
            .collect();
        write_metrics(&p, &rows[..4]).unwrap();
        append_metrics(&p, &rows[4..]).unwrap();
        let back = read_metrics(&p).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.epoch, b.epoch);
            assert!((a.loss_total - b.loss_total).abs() <= 5e-7);
            assert_eq!(a.seen_acc.is_some(), b.seen_acc.is_some());
            if let (Some(x), Some(y)) = (a.harmonic_mean, b.harmonic_mean) {
                assert!((x - y).abs() <= 5e-7);
            }
        }
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = write_metrics("/nonexistent-dir/x/m.csv", &[]).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}

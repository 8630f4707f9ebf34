//! Timestamped label CSVs and the crop sidecar.
//!
//! Series files carry a header row whose first column is `timestamp_ms`;
//! the second column name varies by file (`value`, `bpm`, `percent`).

use std::path::Path;

use super::image::CropBox;
use super::IngestError;
use crate::signal::SampledSignal;

fn csv_err(path: &Path, detail: impl Into<String>) -> IngestError {
    IngestError::BadCsv { path: path.display().to_string(), detail: detail.into() }
}

/// Reads a `timestamp_ms,<name>` series. Timestamps must be strictly
/// increasing.
pub fn read_series_csv(path: &Path) -> Result<Vec<(i64, f64)>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e.to_string()))?;
    {
        let headers = reader.headers().map_err(|e| csv_err(path, e.to_string()))?;
        if headers.len() != 2 || headers.get(0) != Some("timestamp_ms") {
            return Err(csv_err(path, format!("expected header `timestamp_ms,<name>`, got {headers:?}")));
        }
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e.to_string()))?;
        if record.len() != 2 {
            return Err(csv_err(path, format!("row {} has {} fields", i + 1, record.len())));
        }
        let ts: i64 = record[0]
            .parse()
            .map_err(|_| csv_err(path, format!("row {}: bad timestamp {:?}", i + 1, &record[0])))?;
        let value: f64 = record[1]
            .parse()
            .map_err(|_| csv_err(path, format!("row {}: bad value {:?}", i + 1, &record[1])))?;
        if !value.is_finite() {
            return Err(csv_err(path, format!("row {}: non-finite value", i + 1)));
        }
        if let Some((prev, _)) = rows.last() {
            if ts <= *prev {
                return Err(csv_err(path, format!("row {}: timestamps not increasing", i + 1)));
            }
        }
        rows.push((ts, value));
    }
    if rows.is_empty() {
        return Err(csv_err(path, "no data rows"));
    }
    Ok(rows)
}

pub fn write_series_csv(
    path: &Path,
    value_column: &str,
    rows: &[(i64, f64)],
) -> Result<(), IngestError> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut writer = csv::Writer::from_path(&tmp).map_err(|e| csv_err(&tmp, e.to_string()))?;
        writer
            .write_record(["timestamp_ms", value_column])
            .map_err(|e| csv_err(&tmp, e.to_string()))?;
        for (ts, value) in rows {
            writer
                .write_record([ts.to_string(), format!("{value:.17e}")])
                .map_err(|e| csv_err(&tmp, e.to_string()))?;
        }
        writer.flush().map_err(IngestError::Io)?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Treats a series as uniformly sampled: rate from the endpoint span,
/// values in row order.
pub fn series_to_signal(rows: &[(i64, f64)]) -> Result<SampledSignal, IngestError> {
    if rows.len() < 2 {
        return Err(IngestError::BadCsv {
            path: String::new(),
            detail: "need at least two samples to form a signal".into(),
        });
    }
    let t0 = rows[0].0;
    let span_ms = rows[rows.len() - 1].0 - t0;
    let rate_hz = 1000.0 * (rows.len() - 1) as f64 / span_ms as f64;
    Ok(SampledSignal {
        samples: rows.iter().map(|(_, v)| *v).collect(),
        rate_hz,
        t0_ms: t0,
    })
}

/// Reads the `frame_index,x,y,w,h` crop sidecar.
pub fn read_crops_csv(path: &Path) -> Result<Vec<CropBox>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e.to_string()))?;
    {
        let headers = reader.headers().map_err(|e| csv_err(path, e.to_string()))?;
        let want = ["frame_index", "x", "y", "w", "h"];
        if headers.len() != 5 || headers.iter().zip(want).any(|(a, b)| a != b) {
            return Err(csv_err(path, format!("expected header `frame_index,x,y,w,h`, got {headers:?}")));
        }
    }
    let mut boxes = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e.to_string()))?;
        let field = |j: usize| -> Result<usize, IngestError> {
            record
                .get(j)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| csv_err(path, format!("row {}: bad field {}", i + 1, j)))
        };
        boxes.push(CropBox {
            frame_index: field(0)?,
            x: field(1)?,
            y: field(2)?,
            w: field(3)?,
            h: field(4)?,
        });
    }
    Ok(boxes)
}

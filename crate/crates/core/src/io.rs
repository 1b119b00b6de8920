//! On-disk formats for recordings and datasets.
//!
//! A recording is a JSON metadata document next to a CSV with columns
//! `ch_1..ch_C,label,repetition`. A dataset is a CSV with columns
//! `<feature names>,label` and a JSON sidecar holding the feature names,
//! class count and normalization statistics. Floats are written in shortest
//! round-trip form, so reading back is exact.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::{Condition, Dataset, NormStats, Recording};
use crate::Matrix;

/// Serde adapter storing a matrix as a list of rows.
pub mod matrix_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::Matrix;

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        let c = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != c) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(Matrix::from_fn(n, c, |i, j| rows[i][j]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub subject_id: String,
    pub condition: Condition,
    pub sampling_rate_hz: f64,
    pub channels: usize,
    pub num_classes: usize,
    pub num_samples: usize,
    /// CSV file name, relative to the metadata document.
    pub data_file: String,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Writes `<dir>/<stem>.json` and `<dir>/<stem>.csv`, returning the metadata path.
pub fn write_recording(dir: &Path, stem: &str, rec: &Recording) -> Result<PathBuf> {
    rec.validate()?;
    fs::create_dir_all(dir)?;
    let data_file = format!("{stem}.csv");
    let mut w = csv::Writer::from_path(dir.join(&data_file))?;
    let mut header: Vec<String> = (1..=rec.channels()).map(|c| format!("ch_{c}")).collect();
    header.push("label".into());
    header.push("repetition".into());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for t in 0..rec.len() {
        row.clear();
        row.extend(rec.samples.row(t).iter().map(|v| v.to_string()));
        row.push(rec.labels[t].to_string());
        row.push(rec.repetitions[t].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    let meta = RecordingMeta {
        subject_id: rec.subject_id.clone(),
        condition: rec.condition,
        sampling_rate_hz: rec.sampling_rate_hz,
        channels: rec.channels(),
        num_classes: rec.num_classes,
        num_samples: rec.len(),
        data_file,
    };
    let path = dir.join(format!("{stem}.json"));
    write_json(&path, &meta)?;
    Ok(path)
}

/// Reads a recording from its metadata document.
pub fn read_recording(meta_path: &Path) -> Result<Recording> {
    let meta: RecordingMeta = read_json(meta_path)?;
    let dir = meta_path.parent().unwrap_or(Path::new("."));
    let mut r = csv::Reader::from_path(dir.join(&meta.data_file))?;
    let c = meta.channels;
    if r.headers()?.len() != c + 2 {
        return Err(Error::InvalidInput(format!(
            "{}: expected {} columns",
            meta.data_file,
            c + 2
        )));
    }
    let mut values = Vec::with_capacity(meta.num_samples * c);
    let mut labels = Vec::with_capacity(meta.num_samples);
    let mut reps = Vec::with_capacity(meta.num_samples);
    for rec in r.records() {
        let rec = rec?;
        for j in 0..c {
            values.push(parse::<f64>(&rec[j])?);
        }
        labels.push(parse::<usize>(&rec[c])?);
        reps.push(parse::<u32>(&rec[c + 1])?);
    }
    if labels.len() != meta.num_samples {
        return Err(Error::InvalidInput(format!(
            "expected {} samples, found {}",
            meta.num_samples,
            labels.len()
        )));
    }
    Recording::new(
        meta.subject_id,
        meta.condition,
        meta.sampling_rate_hz,
        meta.num_classes,
        Matrix::from_row_slice(labels.len(), c, &values),
        labels,
        reps,
    )
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("cannot parse {s:?}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub feature_names: Vec<String>,
    pub num_classes: usize,
    pub norm_stats: Option<NormStats>,
}

pub fn dataset_sidecar(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_dataset(csv_path: &Path, ds: &Dataset) -> Result<()> {
    if let Some(parent) = csv_path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(csv_path)?;
    let mut header = ds.feature_names.clone();
    header.push("label".into());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for i in 0..ds.len() {
        row.clear();
        row.extend(ds.features.row(i).iter().map(|v| v.to_string()));
        row.push(ds.labels[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    write_json(
        &dataset_sidecar(csv_path),
        &DatasetMeta {
            feature_names: ds.feature_names.clone(),
            num_classes: ds.num_classes,
            norm_stats: ds.norm_stats.clone(),
        },
    )
}

pub fn read_dataset(csv_path: &Path) -> Result<Dataset> {
    let meta: DatasetMeta = read_json(&dataset_sidecar(csv_path))?;
    let d = meta.feature_names.len();
    let mut r = csv::Reader::from_path(csv_path)?;
    if r.headers()?.len() != d + 1 {
        return Err(Error::InvalidInput(format!(
            "{}: expected {} columns",
            csv_path.display(),
            d + 1
        )));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        for j in 0..d {
            values.push(parse::<f64>(&rec[j])?);
        }
        labels.push(parse::<usize>(&rec[d])?);
    }
    let mut ds = Dataset::with_names(
        Matrix::from_row_slice(labels.len(), d, &values),
        labels,
        meta.num_classes,
        meta.feature_names,
    )?;
    ds.norm_stats = meta.norm_stats;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::fit_normalizer;

    #[test]
    fn recording_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let samples = Matrix::from_row_slice(3, 2, &[0.1, -1.0 / 3.0, 1e-300, 2.5, f64::MAX, -0.0]);
        let rec = Recording::new("S01", Condition::Amputee, 2000.0, 3, samples, vec![0, 2, 1], vec![1, 1, 2]).unwrap();
        let path = write_recording(dir.path(), "S01", &rec).unwrap();
        assert_eq!(read_recording(&path).unwrap(), rec);
    }

    #[test]
    fn dataset_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let x = Matrix::from_row_slice(3, 2, &[0.1, 0.2, std::f64::consts::PI, -7.0, 1e-17, 3.0]);
        let mut ds = Dataset::new(x, vec![0, 1, 1], 2).unwrap();
        ds.norm_stats = Some(fit_normalizer(&ds));
        let path = dir.path().join("sub/train.csv");
        write_dataset(&path, &ds).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn truncated_csv_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let rec = Recording::new("S", Condition::Intact, 100.0, 2, Matrix::zeros(4, 1), vec![0; 4], vec![1; 4]).unwrap();
        let path = write_recording(dir.path(), "S", &rec).unwrap();
        let csv = dir.path().join("S.csv");
        let text = fs::read_to_string(&csv).unwrap();
        let cut: Vec<&str> = text.lines().take(3).collect();
        fs::write(&csv, cut.join("\n")).unwrap();
        assert!(read_recording(&path).is_err());
    }
}

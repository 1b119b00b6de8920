//! Windowing, MAV / variance / waveform-length features and z-score
//! normalization.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrixView;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Intact,
    Amputee,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Intact => f.write_str("intact"),
            Condition::Amputee => f.write_str("amputee"),
        }
    }
}

/// A raw multichannel recording with per-sample posture labels.
///
/// `samples` is T×C; label 0 is the rest posture.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub condition: Condition,
    pub sampling_rate_hz: f64,
    pub num_classes: usize,
    pub samples: Matrix,
    pub labels: Vec<usize>,
    pub repetitions: Vec<u32>,
}

impl Recording {
    pub fn new(
        subject_id: impl Into<String>,
        condition: Condition,
        sampling_rate_hz: f64,
        num_classes: usize,
        samples: Matrix,
        labels: Vec<usize>,
        repetitions: Vec<u32>,
    ) -> Result<Self> {
        let rec = Recording {
            subject_id: subject_id.into(),
            condition,
            sampling_rate_hz,
            num_classes,
            samples,
            labels,
            repetitions,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.samples.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_rate_hz > 0.0 && self.sampling_rate_hz.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sampling rate must be positive, got {}",
                self.sampling_rate_hz
            )));
        }
        if self.channels() == 0 {
            return Err(Error::InvalidInput("recording has no channels".into()));
        }
        if self.num_classes == 0 {
            return Err(Error::InvalidInput("num_classes must be at least 1".into()));
        }
        let t = self.len();
        if self.labels.len() != t || self.repetitions.len() != t {
            return Err(Error::InvalidInput(format!(
                "expected {t} labels and repetitions, got {} and {}",
                self.labels.len(),
                self.repetitions.len()
            )));
        }
        if let Some(&label) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: self.num_classes,
            });
        }
        if self.samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample value".into()));
        }
        Ok(())
    }
}

/// Sliding-window geometry in milliseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window_ms: f64,
    pub step_ms: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            window_ms: 200.0,
            step_ms: 10.0,
        }
    }
}

impl WindowSpec {
    /// Window and step length in whole samples at `rate_hz`.
    pub fn in_samples(&self, rate_hz: f64) -> Result<(usize, usize)> {
        if !(self.window_ms > 0.0 && self.step_ms > 0.0) {
            return Err(Error::InvalidParameter(
                "window and step must be positive".into(),
            ));
        }
        if self.step_ms > self.window_ms {
            return Err(Error::InvalidParameter(format!(
                "step {} ms exceeds window {} ms",
                self.step_ms, self.window_ms
            )));
        }
        let window = (self.window_ms * rate_hz / 1000.0).round();
        let step = (self.step_ms * rate_hz / 1000.0).round();
        if window < 1.0 || step < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "window spec rounds to zero samples at {rate_hz} Hz"
            )));
        }
        Ok((window as usize, step as usize))
    }
}

/// One analysis window: a borrowed W×C slice of a recording.
#[derive(Debug, Clone)]
pub struct Window<'a> {
    pub offset: usize,
    pub data: DMatrixView<'a, f64>,
    pub label: usize,
    pub repetition: u32,
}

/// Cuts `rec` into overlapping windows.
///
/// Windows start at 0, S, 2S, ... while they fit. A window takes the majority
/// label of its samples (ties to the smaller id); windows touching two
/// different movement classes are dropped. The repetition is the one of the
/// window's centre sample.
pub fn segment<'a>(rec: &'a Recording, spec: &WindowSpec) -> Result<Vec<Window<'a>>> {
    let (w, s) = spec.in_samples(rec.sampling_rate_hz)?;
    let t = rec.len();
    if t < w {
        return Err(Error::RecordingTooShort {
            samples: t,
            window: w,
        });
    }
    let count = (t - w) / s + 1;
    let mut counts = vec![0usize; rec.num_classes];
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let offset = k * s;
        counts.iter_mut().for_each(|c| *c = 0);
        for &l in &rec.labels[offset..offset + w] {
            counts[l] += 1;
        }
        let movements = counts.iter().skip(1).filter(|&&c| c > 0).count();
        if movements > 1 {
            continue;
        }
        let mut label = 0;
        for (g, &c) in counts.iter().enumerate() {
            if c > counts[label] {
                label = g;
            }
        }
        out.push(Window {
            offset,
            data: rec.samples.rows(offset, w),
            label,
            repetition: rec.repetitions[offset + w / 2],
        });
    }
    Ok(out)
}

/// MAV, variance (1/(W-1)) and waveform length per channel, laid out as
/// `[MAV_1..MAV_C, VAR_1..VAR_C, WL_1..WL_C]`.
pub fn extract_features(window: &DMatrixView<'_, f64>) -> Result<Vec<f64>> {
    let (w, c) = window.shape();
    if w < 2 {
        return Err(Error::InvalidInput(format!(
            "window of {w} samples: variance needs at least 2"
        )));
    }
    let mut out = vec![0.0; 3 * c];
    for ch in 0..c {
        let col = window.column(ch);
        let n = w as f64;
        let mav = col.iter().map(|v| v.abs()).sum::<f64>() / n;
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let wl = (1..w).map(|t| (col[t] - col[t - 1]).abs()).sum::<f64>();
        out[ch] = mav;
        out[c + ch] = var;
        out[2 * c + ch] = wl;
    }
    Ok(out)
}

pub fn feature_names(channels: usize) -> Vec<String> {
    ["mav", "var", "wl"]
        .iter()
        .flat_map(|f| (1..=channels).map(move |ch| format!("{f}_ch{ch}")))
        .collect()
}

/// Per-dimension z-score statistics (stddev uses 1/(N-1)).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn fit(x: &Matrix) -> NormStats {
        let n = x.nrows();
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = if n == 0 { 0.0 } else { col.sum() / n as f64 };
            let s = if n < 2 {
                0.0
            } else {
                (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt()
            };
            mean.push(m);
            std.push(s);
        }
        NormStats { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Z-scores the columns of `x`; zero-variance dimensions become 0.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        crate::error::check_dim(self.dim(), x.ncols())?;
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            if s > 0.0 {
                col.iter_mut().for_each(|v| *v = (*v - m) / s);
            } else {
                col.fill(0.0);
            }
        }
        Ok(out)
    }
}

/// Feature vectors with labels. Rows of `features` are samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub feature_names: Vec<String>,
    pub norm_stats: Option<NormStats>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let names = (1..=features.ncols()).map(|j| format!("f_{j}")).collect();
        Self::with_names(features, labels, num_classes, names)
    }

    pub fn with_names(
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        crate::error::check_dim(features.nrows(), labels.len())?;
        crate::error::check_dim(features.ncols(), feature_names.len())?;
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        Ok(Dataset {
            features,
            labels,
            num_classes,
            feature_names,
            norm_stats: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.labels, self.num_classes)
    }

    /// Rows `idx` in the given order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            feature_names: self.feature_names.clone(),
            norm_stats: self.norm_stats.clone(),
        }
    }
}

pub(crate) fn class_counts(labels: &[usize], num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; num_classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

pub fn fit_normalizer(train: &Dataset) -> NormStats {
    NormStats::fit(&train.features)
}

pub fn apply_normalizer(ds: &Dataset, stats: &NormStats) -> Result<Dataset> {
    Ok(Dataset {
        features: stats.apply(&ds.features)?,
        labels: ds.labels.clone(),
        num_classes: ds.num_classes,
        feature_names: ds.feature_names.clone(),
        norm_stats: Some(stats.clone()),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// d = 3C: the three per-channel blocks side by side.
    #[default]
    Concat,
    /// d = C: per-channel mean of the three normalized blocks.
    Averaged,
}

impl FromStr for FeatureMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(FeatureMode::Concat),
            "averaged" => Ok(FeatureMode::Averaged),
            other => Err(Error::InvalidParameter(format!(
                "unknown feature mode {other:?} (expected concat or averaged)"
            ))),
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureMode::Concat => f.write_str("concat"),
            FeatureMode::Averaged => f.write_str("averaged"),
        }
    }
}

/// Collapses a normalized concat dataset to the per-channel mean of its
/// MAV, VAR and WL blocks.
pub fn average_blocks(ds: &Dataset) -> Result<Dataset> {
    let d = ds.dim();
    if d % 3 != 0 || d == 0 {
        return Err(Error::InvalidInput(format!(
            "averaged mode needs 3C features, got {d}"
        )));
    }
    let c = d / 3;
    let features = Matrix::from_fn(ds.len(), c, |i, ch| {
        (ds.features[(i, ch)] + ds.features[(i, c + ch)] + ds.features[(i, 2 * c + ch)]) / 3.0
    });
    let names = (1..=c).map(|ch| format!("avg_ch{ch}")).collect();
    let mut out = Dataset::with_names(features, ds.labels.clone(), ds.num_classes, names)?;
    out.norm_stats = ds.norm_stats.clone();
    Ok(out)
}

struct WindowRow {
    features: Vec<f64>,
    label: usize,
    repetition: u32,
}

fn window_rows(rec: &Recording, spec: &WindowSpec) -> Result<Vec<WindowRow>> {
    let windows = segment(rec, spec)?;
    windows
        .par_iter()
        .map(|w| {
            Ok(WindowRow {
                features: extract_features(&w.data)?,
                label: w.label,
                repetition: w.repetition,
            })
        })
        .collect()
}

fn check_compatible(recs: &[Recording]) -> Result<(usize, usize)> {
    let first = recs.first().ok_or(Error::NoData)?;
    let (c, g) = (first.channels(), first.num_classes);
    for r in recs {
        r.validate()?;
        if r.channels() != c {
            return Err(Error::InvalidInput(format!(
                "mixed channel counts: {} vs {}",
                c,
                r.channels()
            )));
        }
        if r.num_classes != g {
            return Err(Error::InvalidInput(format!(
                "mixed class counts: {} vs {}",
                g, r.num_classes
            )));
        }
    }
    Ok((c, g))
}

fn rows_to_dataset(rows: &[&WindowRow], channels: usize, num_classes: usize) -> Result<Dataset> {
    let d = 3 * channels;
    let features = Matrix::from_fn(rows.len(), d, |i, j| rows[i].features[j]);
    let labels = rows.iter().map(|r| r.label).collect();
    Dataset::with_names(features, labels, num_classes, feature_names(channels))
}

/// Windows and featurizes every recording, concatenating the results.
/// Normalization is left to the caller.
pub fn build_dataset(recs: &[Recording], spec: &WindowSpec) -> Result<Dataset> {
    let (c, g) = check_compatible(recs)?;
    let mut rows = Vec::new();
    for r in recs {
        rows.extend(window_rows(r, spec)?);
    }
    let refs: Vec<&WindowRow> = rows.iter().collect();
    rows_to_dataset(&refs, c, g)
}

/// Like [`build_dataset`], routing windows whose repetition is in `test_reps`
/// to the second (test) dataset.
pub fn build_split(
    recs: &[Recording],
    spec: &WindowSpec,
    test_reps: &[u32],
) -> Result<(Dataset, Dataset)> {
    let (c, g) = check_compatible(recs)?;
    let mut rows = Vec::new();
    for r in recs {
        rows.extend(window_rows(r, spec)?);
    }
    let (test, train): (Vec<&WindowRow>, Vec<&WindowRow>) =
        rows.iter().partition(|r| test_reps.contains(&r.repetition));
    Ok((rows_to_dataset(&train, c, g)?, rows_to_dataset(&test, c, g)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec_from(values: Vec<f64>, channels: usize, labels: Vec<usize>, rate: f64) -> Recording {
        let t = values.len() / channels;
        let reps = vec![1; t];
        Recording::new(
            "s",
            Condition::Intact,
            rate,
            labels.iter().max().copied().unwrap_or(0) + 1,
            Matrix::from_row_slice(t, channels, &values),
            labels,
            reps,
        )
        .unwrap()
    }

    fn zeros(t: usize, channels: usize, num_classes: usize) -> Recording {
        Recording::new(
            "z",
            Condition::Intact,
            2000.0,
            num_classes,
            Matrix::zeros(t, channels),
            vec![0; t],
            vec![1; t],
        )
        .unwrap()
    }

    #[test]
    fn window_count_at_two_khz() {
        let rec = zeros(2000, 1, 1);
        let w = segment(&rec, &WindowSpec::default()).unwrap();
        assert_eq!(w.len(), 81);
        assert_eq!(w[1].offset, 20);
        assert_eq!(w[80].offset + 400, 2000);
    }

    #[test]
    fn exact_window_length_gives_one_window() {
        let rec = zeros(400, 2, 1);
        assert_eq!(segment(&rec, &WindowSpec::default()).unwrap().len(), 1);
    }

    #[test]
    fn short_recording_is_rejected() {
        let rec = zeros(399, 1, 1);
        let err = segment(&rec, &WindowSpec::default()).unwrap_err();
        assert!(err.to_string().contains("recording too short"));
    }

    #[test]
    fn uniform_labels_propagate() {
        let t = 1000;
        let rec = rec_from(vec![0.5; t], 1, vec![3; t], 2000.0);
        let w = segment(&rec, &WindowSpec::default()).unwrap();
        assert!(w.iter().all(|w| w.label == 3));
    }

    #[test]
    fn windows_across_two_movements_are_dropped() {
        // 1 | 2 boundary at sample 500, no rest in between
        let t = 1000;
        let labels: Vec<usize> = (0..t).map(|i| if i < 500 { 1 } else { 2 }).collect();
        let rec = rec_from(vec![0.0; t], 1, labels, 2000.0);
        let w = segment(&rec, &WindowSpec::default()).unwrap();
        // offsets 0..=100 are pure class 1, 500.. is pure class 2
        let expected: Vec<usize> = (0..=30)
            .map(|k| k * 20)
            .filter(|&o| o + 400 <= 500 || o >= 500)
            .collect();
        assert_eq!(w.iter().map(|w| w.offset).collect::<Vec<_>>(), expected);
    }

    #[test]
    fn rest_transitions_use_majority() {
        let t = 800;
        let labels: Vec<usize> = (0..t).map(|i| if i < 300 { 0 } else { 4 }).collect();
        let rec = rec_from(vec![0.0; t], 1, labels, 2000.0);
        let w = segment(&rec, &WindowSpec::default()).unwrap();
        // offset 0: 300 rest / 100 movement
        assert_eq!(w[0].label, 0);
        // offset 100: 200 / 200 tie goes to the smaller id
        assert_eq!(w[5].label, 0);
        // offset 120: 180 rest / 220 movement
        assert_eq!(w[6].label, 4);
    }

    #[test]
    fn step_larger_than_window_is_invalid() {
        let spec = WindowSpec {
            window_ms: 10.0,
            step_ms: 20.0,
        };
        assert!(spec.in_samples(2000.0).is_err());
        let tiny = WindowSpec {
            window_ms: 0.1,
            step_ms: 0.1,
        };
        assert!(tiny.in_samples(2000.0).is_err());
    }

    fn direct_features(x: &[f64]) -> (f64, f64, f64) {
        let n = x.len() as f64;
        let mut mav = 0.0;
        let mut mean = 0.0;
        for v in x {
            mav += v.abs();
            mean += v;
        }
        mav /= n;
        mean /= n;
        let mut var = 0.0;
        for v in x {
            var += (v - mean).powi(2);
        }
        var /= n - 1.0;
        let mut wl = 0.0;
        for i in 1..x.len() {
            wl += (x[i] - x[i - 1]).abs();
        }
        (mav, var, wl)
    }

    #[test]
    fn feature_definitions() {
        let constant = Matrix::from_element(5, 1, -2.5);
        assert_eq!(
            extract_features(&constant.rows(0, 5)).unwrap(),
            vec![2.5, 0.0, 0.0]
        );

        let alt = [1.0, -1.0, 1.0, -1.0];
        let (mav, var, wl) = direct_features(&alt);
        assert_eq!((mav, var, wl), (1.0, 4.0 / 3.0, 6.0));
        let m = Matrix::from_column_slice(4, 1, &alt);
        let f = extract_features(&m.rows(0, 4)).unwrap();
        assert!((f[0] - 1.0).abs() < 1e-15);
        assert!((f[1] - 4.0 / 3.0).abs() < 1e-15);
        assert!((f[2] - 6.0).abs() < 1e-15);

        let ramp = [0.0, 1.0, 2.0, 3.0];
        let (mav, var, wl) = direct_features(&ramp);
        assert_eq!((mav, wl), (1.5, 3.0));
        assert!((var - 5.0 / 3.0).abs() < 1e-15);
        let m = Matrix::from_column_slice(4, 1, &ramp);
        let f = extract_features(&m.rows(0, 4)).unwrap();
        assert!((f[0] - 1.5).abs() < 1e-15);
        assert!((f[1] - 5.0 / 3.0).abs() < 1e-15);
        assert!((f[2] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_sample_window_is_rejected() {
        let m = Matrix::zeros(1, 3);
        assert!(extract_features(&m.rows(0, 1)).is_err());
    }

    #[test]
    fn dataset_dimensions() {
        let rec = zeros(2000, 12, 1);
        let ds = build_dataset(&[rec.clone()], &WindowSpec::default()).unwrap();
        assert_eq!((ds.len(), ds.dim()), (81, 36));
        let two = build_dataset(&[rec.clone(), rec], &WindowSpec::default()).unwrap();
        assert_eq!((two.len(), two.dim()), (162, 36));
        assert!(matches!(
            build_dataset(&[], &WindowSpec::default()),
            Err(Error::NoData)
        ));
    }

    #[test]
    fn mixed_channel_counts_are_rejected() {
        let a = zeros(500, 2, 1);
        let b = zeros(500, 3, 1);
        assert!(build_dataset(&[a, b], &WindowSpec::default()).is_err());
    }

    #[test]
    fn split_by_repetition() {
        let t = 1600;
        let reps: Vec<u32> = (0..t).map(|i| (i / 800) as u32 + 1).collect();
        let rec = Recording::new(
            "r",
            Condition::Amputee,
            2000.0,
            1,
            Matrix::zeros(t, 1),
            vec![0; t],
            reps,
        )
        .unwrap();
        let (train, test) = build_split(&[rec], &WindowSpec::default(), &[2]).unwrap();
        // 61 windows; centre sample offset+200 >= 800 puts a window in rep 2
        assert_eq!(train.len() + test.len(), 61);
        assert_eq!(train.len(), 30);
    }

    #[test]
    fn two_point_normalization() {
        let ds = Dataset::new(Matrix::from_column_slice(2, 1, &[1.0, 3.0]), vec![0, 0], 1).unwrap();
        let stats = fit_normalizer(&ds);
        assert_eq!(stats.mean, vec![2.0]);
        assert!((stats.std[0] - 2f64.sqrt()).abs() < 1e-15);
        let n = apply_normalizer(&ds, &stats).unwrap();
        // (x - 2) / sqrt(2)
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((n.features[(0, 0)] + h).abs() < 1e-15);
        assert!((n.features[(1, 0)] - h).abs() < 1e-15);
    }

    #[test]
    fn constant_column_normalizes_to_zero() {
        let ds = Dataset::new(Matrix::from_element(4, 2, 7.0), vec![0; 4], 1).unwrap();
        let n = apply_normalizer(&ds, &fit_normalizer(&ds)).unwrap();
        assert!(n.features.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn averaged_mode_has_one_feature_per_channel() {
        let x = Matrix::from_fn(3, 6, |i, j| (i * 6 + j) as f64);
        let ds = Dataset::new(x, vec![0; 3], 1).unwrap();
        let avg = average_blocks(&ds).unwrap();
        assert_eq!(avg.dim(), 2);
        assert_eq!(avg.features[(0, 0)], (0.0 + 2.0 + 4.0) / 3.0);
    }

    /// Explicit enumeration of window offsets.
    fn enumerate_offsets(t: usize, w: usize, s: usize) -> usize {
        let mut n = 0;
        let mut off = 0;
        while off + w <= t {
            n += 1;
            off += s;
        }
        n
    }

    proptest! {
        #[test]
        fn window_count_matches_enumeration(w in 1usize..60, s_frac in 0.0f64..1.0, extra in 0usize..300) {
            let s = 1 + ((w - 1) as f64 * s_frac) as usize;
            let t = w + extra;
            let rec = zeros(t, 1, 1);
            // 1 kHz keeps ms == samples
            let spec = WindowSpec { window_ms: w as f64, step_ms: s as f64 };
            let rec = Recording { sampling_rate_hz: 1000.0, ..rec };
            let got = segment(&rec, &spec).unwrap().len();
            prop_assert_eq!(got, enumerate_offsets(t, w, s));
            prop_assert_eq!(got, (t - w) / s + 1);
        }

        #[test]
        fn channel_permutation_equivariance(vals in proptest::collection::vec(-5.0f64..5.0, 30), rot in 1usize..3) {
            let c = 3;
            let m = Matrix::from_row_slice(10, c, &vals);
            let perm: Vec<usize> = (0..c).map(|j| (j + rot) % c).collect();
            let pm = Matrix::from_fn(10, c, |i, j| m[(i, perm[j])]);
            let f = extract_features(&m.rows(0, 10)).unwrap();
            let pf = extract_features(&pm.rows(0, 10)).unwrap();
            for b in 0..3 {
                for j in 0..c {
                    prop_assert_eq!(pf[b * c + j], f[b * c + perm[j]]);
                }
            }
        }

        #[test]
        fn positive_scaling(vals in proptest::collection::vec(-5.0f64..5.0, 20), lambda in 0.1f64..10.0) {
            let m = Matrix::from_row_slice(10, 2, &vals);
            let f = extract_features(&m.rows(0, 10)).unwrap();
            let sf = extract_features(&(m * lambda).rows(0, 10)).unwrap();
            for j in 0..2 {
                prop_assert!((sf[j] - lambda * f[j]).abs() <= 1e-9 * (1.0 + f[j].abs() * lambda));
                prop_assert!((sf[2 + j] - lambda * lambda * f[2 + j]).abs() <= 1e-9 * (1.0 + f[2 + j] * lambda * lambda));
                prop_assert!((sf[4 + j] - lambda * f[4 + j]).abs() <= 1e-9 * (1.0 + f[4 + j] * lambda));
            }
        }

        #[test]
        fn normalized_training_data_is_standardized(vals in proptest::collection::vec(-100.0f64..100.0, 40)) {
            let x = Matrix::from_row_slice(20, 2, &vals);
            let ds = Dataset::new(x, vec![0; 20], 1).unwrap();
            let stats = fit_normalizer(&ds);
            let n = apply_normalizer(&ds, &stats).unwrap();
            for (j, col) in n.features.column_iter().enumerate() {
                if stats.std[j] > 0.0 {
                    let m = col.mean();
                    let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 19.0).sqrt();
                    prop_assert!(m.abs() < 1e-9);
                    prop_assert!((sd - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}

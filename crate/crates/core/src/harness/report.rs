//! CSV and JSON outputs of an experiment run, and their readers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::analysis::{
    confusion_diff, diagonal_range, recognition_correlation, top4_similarity, ConfusionMatrix,
    CorrelationMatrix,
};
use super::{ExperimentConfig, ExperimentResult, Method, SourceInfo};
use crate::error::{Error, Result};
use crate::io::write_json;
use crate::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub num_classes: usize,
    pub targets: Vec<String>,
    pub sources: Vec<Vec<String>>,
    pub sizes: Vec<usize>,
    pub source_models_trained: usize,
    pub source_models: Vec<SourceInfo>,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
}

pub fn confusion_file(method: Method, size: usize) -> String {
    format!("confusion/{method}_{size}.csv")
}

/// First, middle and last sizes of a schedule, without repeats.
pub fn landmark_sizes(sizes: &[usize]) -> Vec<usize> {
    if sizes.is_empty() {
        return Vec::new();
    }
    let mut out = vec![sizes[0], sizes[(sizes.len() - 1) / 2], sizes[sizes.len() - 1]];
    out.dedup();
    out
}

/// Writes every output of `result` under `dir` and returns the file names.
pub fn write_outputs(dir: &Path, result: &ExperimentResult) -> Result<Vec<String>> {
    fs::create_dir_all(dir.join("confusion"))?;
    let mut outputs = Vec::new();

    let mut w = csv::Writer::from_path(dir.join("curves.csv"))?;
    w.write_record(["method", "size", "mean", "min", "max"])?;
    for &m in result.methods() {
        let c = result.curve(m)?;
        for (i, size) in c.sizes.iter().enumerate() {
            w.write_record([
                m.to_string(),
                size.to_string(),
                c.mean[i].to_string(),
                c.min[i].to_string(),
                c.max[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    outputs.push("curves.csv".to_string());

    let mut w = csv::Writer::from_path(dir.join("accuracies.csv"))?;
    w.write_record(["method", "size", "target", "seed", "accuracy"])?;
    for c in &result.cells {
        w.write_record([
            c.method.to_string(),
            c.size.to_string(),
            c.target.clone(),
            c.seed.to_string(),
            c.accuracy.to_string(),
        ])?;
    }
    w.flush()?;
    outputs.push("accuracies.csv".to_string());

    for &m in result.methods() {
        for &size in &result.sizes {
            let name = confusion_file(m, size);
            write_confusion(&dir.join(&name), &result.confusion(m, size)?)?;
            outputs.push(name);
        }
    }

    let adaptive: Vec<Method> = result.methods().iter().copied().filter(|m| m.is_adaptive()).collect();
    let landmarks = landmark_sizes(&result.sizes);
    if result.num_classes >= 4 && adaptive.len() >= 2 {
        let mut w = csv::Writer::from_path(dir.join("similarity_methods.csv"))?;
        let pairs: Vec<(Method, Method)> = adaptive
            .iter()
            .enumerate()
            .flat_map(|(i, &a)| adaptive[i + 1..].iter().map(move |&b| (a, b)))
            .collect();
        let mut header = vec!["experiment".to_string(), "size".to_string()];
        header.extend(pairs.iter().map(|(a, b)| format!("{a} - {b}")));
        w.write_record(&header)?;
        for &size in &landmarks {
            let mut row = vec![result.config.experiment.to_string(), size.to_string()];
            for &(a, b) in &pairs {
                let s = top4_similarity(&result.confusion(a, size)?, &result.confusion(b, size)?)?;
                row.push(s.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        outputs.push("similarity_methods.csv".to_string());
    }
    if result.num_classes >= 4 && !adaptive.is_empty() && landmarks.len() >= 2 {
        let mut w = csv::Writer::from_path(dir.join("similarity_sizes.csv"))?;
        let mut header = vec!["experiment".to_string(), "sizes".to_string()];
        header.extend(adaptive.iter().map(|m| m.to_string()));
        w.write_record(&header)?;
        for pair in landmarks.windows(2) {
            let mut row = vec![result.config.experiment.to_string(), format!("{}-{}", pair[0], pair[1])];
            for &m in &adaptive {
                let s = top4_similarity(&result.confusion(m, pair[0])?, &result.confusion(m, pair[1])?)?;
                row.push(s.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        outputs.push("similarity_sizes.csv".to_string());
    }

    outputs.push("manifest.json".to_string());
    let manifest = RunManifest {
        tool: "myotransfer".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: result.config.clone(),
        num_classes: result.num_classes,
        targets: result.targets.clone(),
        sources: result.sources.clone(),
        sizes: result.sizes.clone(),
        source_models_trained: result.source_models.len(),
        source_models: result.source_models.clone(),
        warnings: result.warnings.clone(),
        outputs: outputs.clone(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(outputs)
}

/// Header `predicted,true_0,...`; one row of counts per predicted class.
pub fn write_confusion(path: &Path, m: &ConfusionMatrix) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let g = m.num_classes();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["predicted".to_string()];
    header.extend((0..g).map(|c| format!("true_{c}")));
    w.write_record(&header)?;
    for r in 0..g {
        let mut row = vec![r.to_string()];
        row.extend((0..g).map(|c| m.get(r, c).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_confusion(path: &Path) -> Result<ConfusionMatrix> {
    let mut r = csv::Reader::from_path(path)?;
    let g = r.headers()?.len().saturating_sub(1);
    let mut counts = Vec::with_capacity(g * g);
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != g + 1 {
            return Err(Error::InvalidInput(format!("{}: ragged row", path.display())));
        }
        for v in rec.iter().skip(1) {
            counts.push(
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::InvalidInput(format!("{}: bad count {v:?}", path.display())))?,
            );
        }
        rows += 1;
    }
    if rows != g {
        return Err(Error::InvalidInput(format!(
            "{}: expected {g} rows, found {rows}",
            path.display()
        )));
    }
    ConfusionMatrix::from_counts(g, counts)
}

pub fn write_matrix(path: &Path, m: &Matrix, row_prefix: &str, col_prefix: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![String::new()];
    header.extend((0..m.ncols()).map(|c| format!("{col_prefix}{c}")));
    w.write_record(&header)?;
    for r in 0..m.nrows() {
        let mut row = vec![format!("{row_prefix}{r}")];
        row.extend(m.row(r).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_correlation(path: &Path, c: &CorrelationMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![String::new()];
    header.extend(c.labels.iter().cloned());
    w.write_record(&header)?;
    for (label, values) in c.labels.iter().zip(&c.values) {
        let mut row = vec![label.clone()];
        row.extend(values.iter().map(|v| v.map_or_else(|| "NA".to_string(), |x| x.to_string())));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// A stored run to compare: a label (usually the experiment) and its directory.
#[derive(Clone, Debug)]
pub struct StoredRun {
    pub label: String,
    pub dir: PathBuf,
}

/// Cross-run analysis at one training-set size: correlation of per-class
/// recognition over every (run, method), difference matrices between every
/// pair of runs per method, and top-4 similarity for the same pairs.
pub fn analyze_runs(runs: &[StoredRun], methods: &[Method], size: usize, out: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(out)?;
    let mut loaded: Vec<(String, Method, ConfusionMatrix)> = Vec::new();
    for run in runs {
        for &m in methods {
            let path = run.dir.join(confusion_file(m, size));
            if path.exists() {
                loaded.push((run.label.clone(), m, read_confusion(&path)?));
            }
        }
    }
    if loaded.is_empty() {
        return Err(Error::InvalidInput(format!("no confusion matrices for size {size}")));
    }
    let g = loaded[0].2.num_classes();
    if let Some((label, m, c)) = loaded.iter().find(|(_, _, c)| c.num_classes() != g) {
        return Err(Error::InvalidInput(format!(
            "{label}/{m} has {} classes, expected {g}",
            c.num_classes()
        )));
    }
    let mut outputs = Vec::new();

    let corr_runs: Vec<(String, ConfusionMatrix)> = loaded
        .iter()
        .map(|(l, m, c)| (format!("{l}:{m}"), c.clone()))
        .collect();
    write_correlation(&out.join("correlation.csv"), &recognition_correlation(&corr_runs)?)?;
    outputs.push("correlation.csv".to_string());

    let mut summary = csv::Writer::from_path(out.join("comparison.csv"))?;
    summary.write_record(["method", "run_a", "run_b", "diagonal_range", "top4_similarity"])?;
    for &m in methods {
        let per: Vec<&(String, Method, ConfusionMatrix)> = loaded.iter().filter(|x| x.1 == m).collect();
        for i in 0..per.len() {
            for j in i + 1..per.len() {
                let (a, b) = (per[i], per[j]);
                let diff = confusion_diff(&a.2, &b.2)?;
                let name = format!("diff_{m}_{}_{}.csv", a.0, b.0);
                write_matrix(&out.join(&name), &diff, "pred_", "true_")?;
                outputs.push(name);
                let sim = if g >= 4 {
                    top4_similarity(&a.2, &b.2)?.to_string()
                } else {
                    "NA".to_string()
                };
                summary.write_record([m.to_string(), a.0.clone(), b.0.clone(), diagonal_range(&diff), sim])?;
            }
        }
    }
    summary.flush()?;
    outputs.push("comparison.csv".to_string());
    Ok(outputs)
}

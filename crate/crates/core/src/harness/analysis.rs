//! Confusion matrices, learning curves and the cross-run comparisons.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::Matrix;

/// Entry `(r, c)` counts test samples of true class `c` predicted as `r`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    /// Row-major G×G counts.
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(num_classes: usize) -> Self {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn from_counts(num_classes: usize, counts: Vec<u64>) -> Result<Self> {
        check_dim(num_classes * num_classes, counts.len())?;
        Ok(ConfusionMatrix { num_classes, counts })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, predicted: usize, truth: usize) -> u64 {
        self.counts[predicted * self.num_classes + truth]
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        check_dim(self.num_classes, other.num_classes)?;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Test samples per true class.
    pub fn column_sums(&self) -> Vec<u64> {
        (0..self.num_classes)
            .map(|c| (0..self.num_classes).map(|r| self.get(r, c)).sum())
            .collect()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let hits: u64 = (0..self.num_classes).map(|g| self.get(g, g)).sum();
        hits as f64 / total as f64
    }

    /// Columns scaled to sum to one; empty columns stay zero.
    pub fn normalized(&self) -> Matrix {
        let sums = self.column_sums();
        let g = self.num_classes;
        Matrix::from_fn(g, g, |r, c| {
            if sums[c] == 0 {
                0.0
            } else {
                self.get(r, c) as f64 / sums[c] as f64
            }
        })
    }

    /// Per-class recognition rates (diagonal of the normalized matrix).
    pub fn recognition(&self) -> Vec<f64> {
        let n = self.normalized();
        (0..self.num_classes).map(|g| n[(g, g)]).collect()
    }
}

pub fn confusion(predicted: &[usize], truth: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    check_dim(truth.len(), predicted.len())?;
    let mut m = ConfusionMatrix::zeros(num_classes);
    for (&p, &t) in predicted.iter().zip(truth) {
        for label in [p, t] {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange { label, num_classes });
            }
        }
        m.counts[p * num_classes + t] += 1;
    }
    Ok(m)
}

/// `normalized(a) - normalized(b)`.
pub fn confusion_diff(a: &ConfusionMatrix, b: &ConfusionMatrix) -> Result<Matrix> {
    check_dim(a.num_classes, b.num_classes)?;
    Ok(a.normalized() - b.normalized())
}

/// Min and max of the diagonal of a difference matrix, as `[-9%,6%]`.
pub fn diagonal_range(diff: &Matrix) -> String {
    let d: Vec<f64> = (0..diff.nrows().min(diff.ncols())).map(|g| diff[(g, g)]).collect();
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if d.is_empty() {
        return "[]".into();
    }
    format!("[{}%,{}%]", percent(lo), percent(hi))
}

fn percent(x: f64) -> i64 {
    // format through an integer so that -0 never shows up
    (100.0 * x).round() as i64
}

/// How many true classes share at least 3 of their 4 most frequent predictions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Similarity {
    pub matching: Vec<usize>,
    pub num_classes: usize,
}

impl Similarity {
    pub fn count(&self) -> usize {
        self.matching.len()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.num_classes as f64
    }
}

impl fmt::Display for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}% ({}/{})",
            percent(self.fraction()),
            self.count(),
            self.num_classes
        )
    }
}

/// Indices of the 4 largest entries of column `c`, ties to the smaller index.
pub fn top4(m: &Matrix, c: usize) -> [usize; 4] {
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    idx.sort_by(|&a, &b| m[(b, c)].total_cmp(&m[(a, c)]).then(a.cmp(&b)));
    [idx[0], idx[1], idx[2], idx[3]]
}

pub fn top4_similarity(a: &ConfusionMatrix, b: &ConfusionMatrix) -> Result<Similarity> {
    check_dim(a.num_classes, b.num_classes)?;
    let g = a.num_classes;
    if g < 4 {
        return Err(Error::InvalidInput(format!(
            "top-4 similarity needs at least 4 classes, got {g}"
        )));
    }
    let (na, nb) = (a.normalized(), b.normalized());
    let matching = (0..g)
        .filter(|&c| {
            let (sa, sb) = (top4(&na, c), top4(&nb, c));
            sa.iter().filter(|x| sb.contains(x)).count() >= 3
        })
        .collect();
    Ok(Similarity {
        matching,
        num_classes: g,
    })
}

/// Pearson correlation; `None` when either vector has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    /// Row-major; `None` marks an undefined pair.
    pub values: Vec<Vec<Option<f64>>>,
}

/// Correlation of per-class recognition rates between every pair of runs.
pub fn recognition_correlation(runs: &[(String, ConfusionMatrix)]) -> Result<CorrelationMatrix> {
    if let Some((_, first)) = runs.first() {
        for (_, m) in runs {
            check_dim(first.num_classes, m.num_classes)?;
        }
    }
    let v: Vec<Vec<f64>> = runs.iter().map(|(_, m)| m.recognition()).collect();
    let values = (0..runs.len())
        .map(|i| {
            (0..runs.len())
                .map(|j| if i == j { Some(1.0) } else { pearson(&v[i], &v[j]) })
                .collect()
        })
        .collect();
    Ok(CorrelationMatrix {
        labels: runs.iter().map(|(l, _)| l.clone()).collect(),
        values,
    })
}

/// Accuracy over targets at each training-set size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub sizes: Vec<usize>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// `per_target[s][t]`: accuracy of target `t` at size `s`, averaged over seeds.
    pub per_target: Vec<Vec<f64>>,
}

impl LearningCurve {
    pub fn from_per_target(sizes: Vec<usize>, per_target: Vec<Vec<f64>>) -> Result<Self> {
        check_dim(sizes.len(), per_target.len())?;
        let mut mean = Vec::new();
        let mut min = Vec::new();
        let mut max = Vec::new();
        for accs in &per_target {
            if accs.is_empty() {
                return Err(Error::NoData);
            }
            mean.push(accs.iter().sum::<f64>() / accs.len() as f64);
            min.push(accs.iter().copied().fold(f64::INFINITY, f64::min));
            max.push(accs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        Ok(LearningCurve {
            sizes,
            mean,
            min,
            max,
            per_target,
        })
    }
}

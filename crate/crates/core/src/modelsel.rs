//! Stratified k-fold cross-validation over hyperparameter grids.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernels::KernelSpec;
use crate::lssvm::{fit_raw, LssvmModel};
use crate::rng::rng_from;
use crate::signals::{class_counts, Dataset};
use crate::Matrix;

pub const PAPER_GRID: [f64; 6] = [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub c_values: Vec<f64>,
    pub gamma_values: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            c_values: PAPER_GRID.to_vec(),
            gamma_values: PAPER_GRID.to_vec(),
            folds: 5,
            seed: 0,
        }
    }
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        if self.c_values.is_empty() || self.gamma_values.is_empty() {
            return Err(Error::InvalidParameter("grid value sets must be nonempty".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 folds, got {}",
                self.folds
            )));
        }
        if self
            .c_values
            .iter()
            .chain(&self.gamma_values)
            .any(|&v| !(v > 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidParameter("grid values must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Grid {
        Grid {
            seed,
            ..self.clone()
        }
    }

    /// Gaussian (C, gamma) pairs, ascending in C then gamma so that the first
    /// maximum is the most regularized, smoothest candidate.
    pub fn gaussian_candidates(&self) -> Vec<LssvmParams> {
        let mut cs = self.c_values.clone();
        let mut gs = self.gamma_values.clone();
        cs.sort_by(f64::total_cmp);
        gs.sort_by(f64::total_cmp);
        cs.dedup();
        gs.dedup();
        cs.iter()
            .flat_map(|&c| {
                gs.iter().map(move |&gamma| LssvmParams {
                    c,
                    kernel: KernelSpec::Gaussian { gamma },
                })
            })
            .collect()
    }

    /// Linear-kernel candidates: C only.
    pub fn linear_candidates(&self) -> Vec<LssvmParams> {
        let mut cs = self.c_values.clone();
        cs.sort_by(f64::total_cmp);
        cs.dedup();
        cs.into_iter()
            .map(|c| LssvmParams {
                c,
                kernel: KernelSpec::Linear,
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LssvmParams {
    #[serde(rename = "C")]
    pub c: f64,
    pub kernel: KernelSpec,
}

/// Mean held-out accuracy of every candidate and the winner.
#[derive(Clone, Debug, PartialEq)]
pub struct CvResult<P> {
    pub best: P,
    pub best_accuracy: f64,
    pub table: Vec<(P, f64)>,
}

/// Fold index per sample. Each class is shuffled and dealt round-robin,
/// continuing the fold counter across classes, so every fold is nonempty when
/// `n >= folds` and per-class fold counts differ by at most one.
pub fn stratified_folds(
    labels: &[usize],
    num_classes: usize,
    folds: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidParameter("need at least 2 folds".into()));
    }
    if labels.len() < folds {
        return Err(Error::InvalidInput(format!(
            "{} samples cannot fill {folds} folds",
            labels.len()
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: l,
                num_classes,
            });
        }
        by_class[l].push(i);
    }
    let mut assignment = vec![0; labels.len()];
    let mut counter = 0usize;
    for (g, idx) in by_class.iter_mut().enumerate() {
        let mut rng = rng_from(seed, &[g as u64]);
        idx.shuffle(&mut rng);
        for &i in idx.iter() {
            assignment[i] = counter % folds;
            counter += 1;
        }
    }
    Ok(assignment)
}

/// Cross-validates every candidate with `fit_predict(params, train_idx, val_idx)`,
/// which returns predicted labels for `val_idx`.
///
/// Accuracy is pooled over all held-out predictions. The first candidate with
/// the highest accuracy wins, so candidate order encodes tie-breaking.
pub fn select<P, F>(
    labels: &[usize],
    num_classes: usize,
    candidates: &[P],
    folds: usize,
    seed: u64,
    fit_predict: F,
) -> Result<CvResult<P>>
where
    P: Clone + Send + Sync,
    F: Fn(&P, &[usize], &[usize]) -> Result<Vec<usize>> + Sync,
{
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("empty candidate list".into()));
    }
    let assignment = stratified_folds(labels, num_classes, folds, seed)?;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..folds)
        .map(|f| {
            let (val, train): (Vec<usize>, Vec<usize>) =
                (0..labels.len()).partition(|&i| assignment[i] == f);
            (train, val)
        })
        .collect();
    if splits.iter().any(|(_, v)| v.is_empty()) {
        return Err(Error::InvalidInput("degenerate fold with zero samples".into()));
    }
    let accuracies = candidates
        .par_iter()
        .map(|p| {
            let mut correct = 0usize;
            for (train, val) in &splits {
                let pred = fit_predict(p, train, val)?;
                check_dim(val.len(), pred.len())?;
                correct += val
                    .iter()
                    .zip(&pred)
                    .filter(|(&i, &y)| labels[i] == y)
                    .count();
            }
            Ok(correct as f64 / labels.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, &a) in accuracies.iter().enumerate() {
        if a > accuracies[best] {
            best = i;
        }
    }
    Ok(CvResult {
        best: candidates[best].clone(),
        best_accuracy: accuracies[best],
        table: candidates.iter().cloned().zip(accuracies).collect(),
    })
}

/// Folds actually used for `n` samples.
pub fn effective_folds(grid: &Grid, n: usize) -> usize {
    grid.folds.min(n).max(2)
}

/// Plain LS-SVM grid search on `(x, labels)`.
pub fn select_lssvm(
    x: &Matrix,
    labels: &[usize],
    num_classes: usize,
    candidates: &[LssvmParams],
    folds: usize,
    seed: u64,
) -> Result<CvResult<LssvmParams>> {
    select(labels, num_classes, candidates, folds, seed, |p, tr, va| {
        let model = fit_raw(
            &x.select_rows(tr),
            &tr.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
            num_classes,
            p.kernel,
            p.c,
        )?;
        Ok(model.predict(&x.select_rows(va))?.labels)
    })
}

/// Cross-validated Gaussian LS-SVM refitted on the whole set.
pub fn fit_selected_gaussian(
    train: &Dataset,
    grid: &Grid,
) -> Result<(LssvmModel, CvResult<LssvmParams>)> {
    grid.validate()?;
    let cv = select_lssvm(
        &train.features,
        &train.labels,
        train.num_classes,
        &grid.gaussian_candidates(),
        effective_folds(grid, train.len()),
        grid.seed,
    )?;
    let model = fit_raw(
        &train.features,
        &train.labels,
        train.num_classes,
        cv.best.kernel,
        cv.best.c,
    )?;
    Ok((model, cv))
}

/// Majority-class fraction: the pooled CV accuracy of a constant predictor.
pub fn majority_fraction(labels: &[usize], num_classes: usize) -> f64 {
    let counts = class_counts(labels, num_classes);
    *counts.iter().max().unwrap_or(&0) as f64 / labels.len().max(1) as f64
}

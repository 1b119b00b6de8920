//! Two-layer stacking of target and source confidence scores.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::adapt::sources::{source_scores, SourceScores};
use crate::error::{check_dim, Error, Result};
use crate::kernels::KernelSpec;
use crate::lssvm::{fit_raw, LssvmDoc, LssvmModel, Prediction};
use crate::modelsel::{effective_folds, select_lssvm, Grid, LssvmParams};
use crate::rng::rng_from;
use crate::signals::{Dataset, NormStats};
use crate::Matrix;

pub const SPLIT_RATIO: f64 = 0.63;

#[derive(Clone, Debug, PartialEq)]
pub struct Hl2lModel {
    /// Target LS-SVM trained on the first split.
    pub layer1: LssvmModel,
    /// Gaussian LS-SVM over normalized `[s^t | s^1 | ... | s^K]` vectors.
    pub layer2: LssvmModel,
    pub split_seed: u64,
    pub split_ratio: f64,
    pub source_ids: Vec<String>,
    pub score_norm: NormStats,
}

/// Per-class split of `labels` into a `ratio` side and the rest.
///
/// Each class keeps `round_half_up(ratio * n_g)` samples on the first side,
/// at least one. Both index lists come back sorted.
pub fn stratified_split(
    labels: &[usize],
    num_classes: usize,
    ratio: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!("split ratio {ratio} outside (0, 1)")));
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
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for (g, mut idx) in by_class.into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng_from(seed, &[g as u64]));
        let n1 = first_side_count(idx.len(), ratio);
        first.extend_from_slice(&idx[..n1]);
        second.extend_from_slice(&idx[n1..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((first, second))
}

fn first_side_count(n: usize, ratio: f64) -> usize {
    // the epsilon keeps exact halves such as 0.63 * 50 from rounding down
    let n1 = (ratio * n as f64 + 0.5 + 1e-9).floor() as usize;
    n1.clamp(1, n)
}

/// Layer-2 input: target scores followed by every source's scores.
pub fn stack_scores(target: &Matrix, scores: &SourceScores) -> Result<Matrix> {
    scores.check(target.nrows(), target.ncols(), scores.num_sources())?;
    let g = target.ncols();
    let mut out = Matrix::zeros(target.nrows(), (scores.num_sources() + 1) * g);
    out.columns_mut(0, g).copy_from(target);
    for (k, s) in scores.sources().iter().enumerate() {
        out.columns_mut((k + 1) * g, g).copy_from(s);
    }
    Ok(out)
}

struct Split {
    first: Vec<usize>,
    second: Vec<usize>,
}

fn split_for_stacking(train: &Dataset, scores: &SourceScores, seed: u64) -> Result<Split> {
    if scores.num_sources() == 0 {
        return Err(Error::InvalidInput("H-L2L needs at least one source".into()));
    }
    scores.check(train.len(), train.num_classes, scores.num_sources())?;
    let (first, second) = stratified_split(&train.labels, train.num_classes, SPLIT_RATIO, seed)?;
    if second.len() < 2 {
        return Err(Error::InsufficientStackingData);
    }
    if first.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "first layer needs at least 2 samples, got {}",
            first.len()
        )));
    }
    Ok(Split { first, second })
}

/// Layer-2 training inputs (unnormalized) for a fitted first layer.
fn layer2_inputs(
    layer1: &LssvmModel,
    train: &Dataset,
    scores: &SourceScores,
    idx: &[usize],
) -> Result<Matrix> {
    let t = layer1.decision_scores(&train.features.select_rows(idx))?;
    stack_scores(&t, &scores.subset(idx))
}

pub fn fit_hl2l(
    train: &Dataset,
    scores: &SourceScores,
    layer1: LssvmParams,
    layer2: LssvmParams,
    seed: u64,
) -> Result<Hl2lModel> {
    let split = split_for_stacking(train, scores, seed)?;
    let l1 = fit_raw(
        &train.features.select_rows(&split.first),
        &pick(&train.labels, &split.first),
        train.num_classes,
        layer1.kernel,
        layer1.c,
    )?;
    let z = layer2_inputs(&l1, train, scores, &split.second)?;
    let stats = NormStats::fit(&z);
    let l2 = fit_raw(
        &stats.apply(&z)?,
        &pick(&train.labels, &split.second),
        train.num_classes,
        layer2.kernel,
        layer2.c,
    )?;
    Ok(Hl2lModel {
        layer1: l1,
        layer2: l2,
        split_seed: seed,
        split_ratio: SPLIT_RATIO,
        source_ids: (0..scores.num_sources()).map(|k| format!("source_{k}")).collect(),
        score_norm: stats,
    })
}

/// Fits both layers with hyperparameters chosen by cross-validation: layer 1
/// on its own split, layer 2 on the stacked vectors.
pub fn fit_hl2l_selected(
    train: &Dataset,
    scores: &SourceScores,
    grid: &Grid,
    seed: u64,
) -> Result<Hl2lModel> {
    grid.validate()?;
    let split = split_for_stacking(train, scores, seed)?;
    let x1 = train.features.select_rows(&split.first);
    let y1 = pick(&train.labels, &split.first);
    let cands = grid.gaussian_candidates();
    let p1 = if x1.nrows() >= 3 {
        select_lssvm(&x1, &y1, train.num_classes, &cands, effective_folds(grid, x1.nrows()), grid.seed)?.best
    } else {
        cands[0]
    };
    let l1 = fit_raw(&x1, &y1, train.num_classes, p1.kernel, p1.c)?;
    let z = layer2_inputs(&l1, train, scores, &split.second)?;
    let stats = NormStats::fit(&z);
    let zn = stats.apply(&z)?;
    let y2 = pick(&train.labels, &split.second);
    let p2 = if zn.nrows() >= 3 {
        select_lssvm(&zn, &y2, train.num_classes, &cands, effective_folds(grid, zn.nrows()), grid.seed)?.best
    } else {
        cands[0]
    };
    let l2 = fit_raw(&zn, &y2, train.num_classes, p2.kernel, p2.c)?;
    Ok(Hl2lModel {
        layer1: l1,
        layer2: l2,
        split_seed: seed,
        split_ratio: SPLIT_RATIO,
        source_ids: (0..scores.num_sources()).map(|k| format!("source_{k}")).collect(),
        score_norm: stats,
    })
}

fn pick(labels: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| labels[i]).collect()
}

impl Hl2lModel {
    pub fn num_sources(&self) -> usize {
        self.source_ids.len()
    }

    /// Normalized layer-2 input vectors for `x`.
    pub fn stacked_inputs(&self, x: &Matrix, scores: &SourceScores) -> Result<Matrix> {
        if scores.num_sources() != self.num_sources() {
            return Err(Error::InvalidInput(format!(
                "model stacks {} sources, got scores for {}",
                self.num_sources(),
                scores.num_sources()
            )));
        }
        let t = self.layer1.decision_scores(x)?;
        let z = stack_scores(&t, scores)?;
        check_dim(self.layer2.dim(), z.ncols())?;
        self.score_norm.apply(&z)
    }

    /// Layer-2 decision scores.
    pub fn decision_scores(&self, x: &Matrix, scores: &SourceScores) -> Result<Matrix> {
        self.layer2.decision_scores(&self.stacked_inputs(x, scores)?)
    }

    pub fn predict(&self, x: &Matrix, scores: &SourceScores) -> Result<Prediction> {
        Ok(Prediction::from_scores(self.decision_scores(x, scores)?))
    }

    pub fn predict_with_sources(&self, x: &Matrix, sources: &[LssvmModel]) -> Result<Prediction> {
        self.predict(x, &source_scores(sources, x)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = Hl2lDoc {
            layer1: LssvmDoc::from(&self.layer1),
            layer2: LssvmDoc::from(&self.layer2),
            split_seed: self.split_seed,
            split_ratio: self.split_ratio,
            sources: self.source_ids.clone(),
            score_norm: self.score_norm.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: Hl2lDoc = serde_json::from_str(s)?;
        let layer1: LssvmModel = d.layer1.try_into()?;
        let layer2: LssvmModel = d.layer2.try_into()?;
        check_dim((d.sources.len() + 1) * layer1.num_classes, layer2.dim())?;
        check_dim(layer2.dim(), d.score_norm.dim())?;
        Ok(Hl2lModel {
            layer1,
            layer2,
            split_seed: d.split_seed,
            split_ratio: d.split_ratio,
            source_ids: d.sources,
            score_norm: d.score_norm,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Hl2lDoc {
    layer1: LssvmDoc,
    layer2: LssvmDoc,
    split_seed: u64,
    split_ratio: f64,
    sources: Vec<String>,
    score_norm: NormStats,
}

/// Default Gaussian parameters, used where no selection is wanted.
pub fn default_params() -> LssvmParams {
    LssvmParams {
        c: 10.0,
        kernel: KernelSpec::Gaussian { gamma: 0.1 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lssvm::fit;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn blobs(seed: u64, n: usize, g: usize, spread: f64) -> Dataset {
        let mut rng = rng_from(seed, &[]);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..g)).collect();
        let x = Matrix::from_fn(n, 2, |i, j| {
            let angle = labels[i] as f64 * std::f64::consts::TAU / g as f64;
            let centre = if j == 0 { angle.cos() } else { angle.sin() } * 2.0;
            centre + spread * rng.sample::<f64, _>(StandardNormal)
        });
        Dataset::new(x, labels, g).unwrap()
    }

    fn gauss(gamma: f64, c: f64) -> LssvmParams {
        LssvmParams {
            c,
            kernel: KernelSpec::Gaussian { gamma },
        }
    }

    #[test]
    fn split_sizes() {
        let labels: Vec<usize> = (0..100).map(|i| i % 18).collect();
        let (a, b) = stratified_split(&labels, 18, SPLIT_RATIO, 3).unwrap();
        // 10 classes of 6 give 4, 8 classes of 5 give 3
        assert_eq!(a.len(), 10 * 4 + 8 * 3);
        assert_eq!(b.len(), 100 - a.len());
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!((a, b), stratified_split(&labels, 18, SPLIT_RATIO, 3).unwrap());
    }

    #[test]
    fn singleton_class_goes_first() {
        let labels = vec![0, 0, 0, 0, 1];
        let (a, b) = stratified_split(&labels, 2, SPLIT_RATIO, 0).unwrap();
        assert!(a.contains(&4));
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn half_rounds_up() {
        assert_eq!(first_side_count(50, SPLIT_RATIO), 32);
        assert_eq!(first_side_count(2, 0.75), 2);
        assert_eq!(first_side_count(1, SPLIT_RATIO), 1);
    }

    #[test]
    fn stacking_dimension() {
        let train = blobs(1, 60, 3, 0.5);
        let srcs: Vec<LssvmModel> = (0..2)
            .map(|s| fit(&blobs(10 + s, 40, 3, 0.5), KernelSpec::Gaussian { gamma: 1.0 }, 10.0).unwrap())
            .collect();
        let scores = source_scores(&srcs, &train.features).unwrap();
        let m = fit_hl2l(&train, &scores, gauss(1.0, 10.0), gauss(0.1, 10.0), 5).unwrap();
        assert_eq!(m.layer2.dim(), 3 * 3);
        let probe = blobs(2, 15, 3, 0.5).features;
        let z = m.stacked_inputs(&probe, &source_scores(&srcs, &probe).unwrap()).unwrap();
        assert_eq!(z.shape(), (15, 9));
        assert_eq!(m.layer2.support_inputs.nrows(), 60 - m.layer1.support_inputs.nrows());
    }

    #[test]
    fn rejects_no_sources_and_tiny_second_side() {
        let train = blobs(1, 30, 3, 0.5);
        let none = SourceScores::from_matrices(vec![]).unwrap();
        assert!(fit_hl2l(&train, &none, gauss(1.0, 1.0), gauss(1.0, 1.0), 0).is_err());
        let tiny = Dataset::new(Matrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]), vec![0, 1, 2], 3).unwrap();
        let src = fit(&blobs(2, 30, 3, 0.5), KernelSpec::Linear, 1.0).unwrap();
        let s = source_scores(&[src], &Matrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0])).unwrap();
        let err = fit_hl2l(&tiny, &s, gauss(1.0, 1.0), gauss(1.0, 1.0), 0).unwrap_err();
        assert!(matches!(err, Error::InsufficientStackingData));
    }

    #[test]
    fn separable_scores_are_reproduced() {
        let train = blobs(3, 90, 3, 0.2);
        let src = fit(&blobs(4, 90, 3, 0.2), KernelSpec::Gaussian { gamma: 1.0 }, 100.0).unwrap();
        let scores = source_scores(std::slice::from_ref(&src), &train.features).unwrap();
        let m = fit_hl2l(&train, &scores, gauss(1.0, 100.0), gauss(0.1, 100.0), 1).unwrap();
        let (_, second) = stratified_split(&train.labels, 3, SPLIT_RATIO, 1).unwrap();
        let sub = train.subset(&second);
        let pred = m.predict(&sub.features, &scores.subset(&second)).unwrap();
        assert_eq!(pred.labels, sub.labels);
    }

    /// Annulus cut into nine sectors labelled 0,1,2,0,1,2,... Easy for a
    /// model that has seen plenty of data, hard from a few dozen points.
    fn sectors(seed: u64, n: usize) -> Dataset {
        let mut rng = rng_from(seed, &[]);
        let mut x = Matrix::zeros(n, 2);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            let radius = 1.0 + rng.random::<f64>();
            x[(i, 0)] = radius * angle.cos();
            x[(i, 1)] = radius * angle.sin();
            labels.push((angle / (std::f64::consts::TAU / 9.0)) as usize % 3);
        }
        Dataset::new(x, labels, 3).unwrap()
    }

    #[test]
    fn perfect_sources_help_second_layer() {
        let mut wins = 0;
        for seed in 0..10 {
            let train = sectors(100 + seed, 60);
            let oracle = fit(&sectors(200 + seed, 2000), KernelSpec::Gaussian { gamma: 2.0 }, 100.0).unwrap();
            let srcs = vec![oracle.clone(), oracle.clone(), oracle];
            let scores = source_scores(&srcs, &train.features).unwrap();
            let m = fit_hl2l(&train, &scores, gauss(1.0, 10.0), gauss(0.1, 10.0), seed).unwrap();
            let probe = sectors(300 + seed, 400);
            let ps = source_scores(&srcs, &probe.features).unwrap();
            let acc = |l: &[usize]| l.iter().zip(&probe.labels).filter(|(a, b)| a == b).count();
            let a2 = acc(&m.predict(&probe.features, &ps).unwrap().labels);
            let a1 = acc(&m.layer1.predict(&probe.features).unwrap().labels);
            if a2 >= a1 {
                wins += 1;
            }
        }
        assert!(wins >= 8, "layer 2 matched layer 1 in {wins}/10 seeds");
    }

    #[test]
    fn source_order_does_not_matter() {
        let train = blobs(5, 60, 3, 0.8);
        let srcs: Vec<LssvmModel> = (0..3)
            .map(|s| fit(&blobs(20 + s, 40, 3, 0.8), KernelSpec::Gaussian { gamma: 1.0 }, 10.0).unwrap())
            .collect();
        let rev: Vec<LssvmModel> = srcs.iter().rev().cloned().collect();
        let p = (gauss(1.0, 10.0), gauss(0.1, 10.0));
        let a = fit_hl2l(&train, &source_scores(&srcs, &train.features).unwrap(), p.0, p.1, 2).unwrap();
        let b = fit_hl2l(&train, &source_scores(&rev, &train.features).unwrap(), p.0, p.1, 2).unwrap();
        let probe = blobs(6, 100, 3, 0.8).features;
        assert_eq!(
            a.predict_with_sources(&probe, &srcs).unwrap().labels,
            b.predict_with_sources(&probe, &rev).unwrap().labels
        );
    }

    #[test]
    fn zero_score_sources_are_inert() {
        let train = blobs(7, 60, 3, 0.8);
        let src = fit(&blobs(8, 40, 3, 0.8), KernelSpec::Gaussian { gamma: 1.0 }, 10.0).unwrap();
        let real = source_scores(std::slice::from_ref(&src), &train.features).unwrap();
        let zeros = Matrix::zeros(train.len(), 3);
        let padded = SourceScores::from_matrices(vec![real.source(0).clone(), zeros.clone(), zeros]).unwrap();
        let p = (gauss(1.0, 10.0), gauss(0.1, 10.0));
        let a = fit_hl2l(&train, &real, p.0, p.1, 4).unwrap();
        let b = fit_hl2l(&train, &padded, p.0, p.1, 4).unwrap();
        let probe = blobs(9, 100, 3, 0.8).features;
        let ps = source_scores(std::slice::from_ref(&src), &probe).unwrap();
        let pz = Matrix::zeros(100, 3);
        let pp = SourceScores::from_matrices(vec![ps.source(0).clone(), pz.clone(), pz]).unwrap();
        assert_eq!(a.predict(&probe, &ps).unwrap().labels, b.predict(&probe, &pp).unwrap().labels);
    }

    #[test]
    fn selected_variant_and_json() {
        let train = blobs(11, 60, 3, 0.6);
        let src = fit(&blobs(12, 40, 3, 0.6), KernelSpec::Gaussian { gamma: 1.0 }, 10.0).unwrap();
        let scores = source_scores(std::slice::from_ref(&src), &train.features).unwrap();
        let grid = Grid {
            c_values: vec![1.0, 100.0],
            gamma_values: vec![0.1, 1.0],
            ..Grid::default()
        };
        let m = fit_hl2l_selected(&train, &scores, &grid, 3).unwrap();
        let back = Hl2lModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    proptest! {
        #[test]
        fn split_is_a_partition(labels in proptest::collection::vec(0usize..5, 1..80), seed in 0u64..1000) {
            let (a, b) = stratified_split(&labels, 5, SPLIT_RATIO, seed).unwrap();
            let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            for g in 0..5 {
                let n = labels.iter().filter(|&&l| l == g).count();
                let n1 = a.iter().filter(|&&i| labels[i] == g).count();
                if n > 0 {
                    prop_assert_eq!(n1, first_side_count(n, SPLIT_RATIO));
                    prop_assert!(n1 >= 1);
                }
            }
        }
    }
}

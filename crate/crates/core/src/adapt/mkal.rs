//! MKAL: multiclass multi-kernel learning with a (2,p) group norm.
//!
//! The hypothesis is split into K+1 blocks. Block 0 is a Gaussian kernel on
//! the raw target features (plus a constant 1 standing in for a bias); block
//! k is a linear kernel on the G-vector of source k's scores. Each block keeps
//! one weight vector per class, represented by an N×G matrix of dual
//! coefficients over the training inputs. Training minimizes
//!
//! ```text
//! (lambda/2) |w|_{2,p}^2 + (1/N) sum_i max(0, 1 - (f_{y_i}(x_i) - max_{y != y_i} f_y(x_i)))
//! ```
//!
//! with a seeded stochastic subgradient pass followed by full-batch sweeps,
//! each step projected back onto the ball where the minimizer must lie.
//! The gradient of the squared group norm scales block k by
//! `(|w^k| / |w|_{2,p})^(p-2)`, so for p < 2 weak blocks shrink faster.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::adapt::sources::{source_scores, SourceScores};
use crate::error::{check_dim, Error, Result};
use crate::kernels::{gram, gram_sym, KernelSpec};
use crate::lssvm::{from_row_major, row_major, LssvmModel, Prediction};
use crate::rng::rng_from;
use crate::signals::Dataset;
use crate::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MkalConfig {
    pub p: f64,
    pub lambda: f64,
    /// Bandwidth of the raw-feature block.
    pub gamma: f64,
    /// Stochastic passes over the data.
    pub epochs: usize,
    /// Full-batch refinement sweeps after the stochastic passes.
    pub batch_epochs: usize,
    pub seed: u64,
}

impl Default for MkalConfig {
    fn default() -> Self {
        MkalConfig {
            p: 1.25,
            lambda: 1e-2,
            gamma: 0.1,
            epochs: 5,
            batch_epochs: 20,
            seed: 0,
        }
    }
}

impl MkalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p <= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "p must lie in (1, 2], got {}",
                self.p
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Which input a block's kernel reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockInput {
    Raw,
    /// The score vector of the given source.
    Source(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MkalBlock {
    pub kernel: KernelSpec,
    /// Constant added to every kernel value.
    pub offset: f64,
    pub input: BlockInput,
}

impl MkalBlock {
    fn inputs<'a>(&self, raw: &'a Matrix, scores: &'a SourceScores) -> &'a Matrix {
        match self.input {
            BlockInput::Raw => raw,
            BlockInput::Source(k) => scores.source(k),
        }
    }

    fn gram_sym(&self, raw: &Matrix, scores: &SourceScores) -> Result<Matrix> {
        Ok(gram_sym(&self.kernel, self.inputs(raw, scores))?.add_scalar(self.offset))
    }

    fn gram(
        &self,
        raw: &Matrix,
        scores: &SourceScores,
        train_raw: &Matrix,
        train_scores: &SourceScores,
    ) -> Result<Matrix> {
        let x = self.inputs(raw, scores);
        let z = self.inputs(train_raw, train_scores);
        Ok(gram(&self.kernel, x, z)?.add_scalar(self.offset))
    }
}

/// Default layout: Gaussian raw-feature block with a unit offset, then one
/// linear block per source.
pub fn default_blocks(gamma: f64, num_sources: usize) -> Vec<MkalBlock> {
    std::iter::once(MkalBlock {
        kernel: KernelSpec::Gaussian { gamma },
        offset: 1.0,
        input: BlockInput::Raw,
    })
    .chain((0..num_sources).map(|k| MkalBlock {
        kernel: KernelSpec::Linear,
        offset: 0.0,
        input: BlockInput::Source(k),
    }))
    .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MkalModel {
    pub p: f64,
    pub lambda: f64,
    pub num_classes: usize,
    pub blocks: Vec<MkalBlock>,
    /// Per block, N×G coefficients over the training inputs.
    pub dual_coeffs: Vec<Matrix>,
    pub block_norms: Vec<f64>,
    pub training_inputs: Matrix,
    pub training_scores: SourceScores,
    /// Training objective of the returned coefficients.
    pub objective: f64,
}

/// `(sum_k norms_k^p)^(1/p)`.
pub fn group_norm(norms: &[f64], p: f64) -> f64 {
    norms.iter().map(|n| n.powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Per-block RKHS norms `sqrt(sum_g a_g^T K_k a_g)`.
pub fn block_norms(grams: &[Matrix], coeffs: &[Matrix]) -> Vec<f64> {
    grams
        .iter()
        .zip(coeffs)
        .map(|(k, a)| (k * a).component_mul(a).sum().max(0.0).sqrt())
        .collect()
}

/// Mean multiclass hinge loss of an N×G score matrix.
pub fn mean_hinge(scores: &Matrix, labels: &[usize]) -> f64 {
    let n = labels.len();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| match runner_up(scores, i, y) {
            Some(r) => (1.0 - (scores[(i, y)] - scores[(i, r)])).max(0.0),
            None => 0.0,
        })
        .sum();
    total / n as f64
}

/// Highest-scoring class other than `y` (ties to the smaller id).
fn runner_up(scores: &Matrix, i: usize, y: usize) -> Option<usize> {
    let mut best: Option<usize> = None;
    for g in 0..scores.ncols() {
        if g == y {
            continue;
        }
        match best {
            Some(b) if scores[(i, g)] <= scores[(i, b)] => {}
            _ => best = Some(g),
        }
    }
    best
}

/// Full regularized objective, computed from the Gram matrices directly.
pub fn objective(
    grams: &[Matrix],
    coeffs: &[Matrix],
    labels: &[usize],
    lambda: f64,
    p: f64,
) -> f64 {
    let norms = block_norms(grams, coeffs);
    let mut scores = Matrix::zeros(labels.len(), coeffs.first().map_or(0, |a| a.ncols()));
    for (k, a) in grams.iter().zip(coeffs) {
        scores += k * a;
    }
    let gn = group_norm(&norms, p);
    0.5 * lambda * gn * gn + mean_hinge(&scores, labels)
}

struct BlockState<'a> {
    gram: &'a Matrix,
    /// Coefficients and scores are stored divided by `scale`.
    coeffs: Matrix,
    scores: Matrix,
    scale: f64,
}

impl BlockState<'_> {
    fn norm_sq(&self) -> f64 {
        (self.coeffs.component_mul(&self.scores).sum() * self.scale * self.scale).max(0.0)
    }

    fn shrink(&mut self, factor: f64) {
        if factor <= 0.0 {
            self.coeffs.fill(0.0);
            self.scores.fill(0.0);
            self.scale = 1.0;
        } else {
            self.scale *= factor;
        }
    }

    fn normalize(&mut self) {
        self.coeffs *= self.scale;
        self.scores *= self.scale;
        self.scale = 1.0;
    }

    fn score(&self, i: usize, g: usize) -> f64 {
        self.scale * self.scores[(i, g)]
    }

    /// Adds `delta` to coefficient (i, g).
    fn add(&mut self, i: usize, g: usize, delta: f64) {
        let d = delta / self.scale;
        self.coeffs[(i, g)] += d;
        self.scores.column_mut(g).axpy(d, &self.gram.column(i), 1.0);
    }
}

struct Trainer<'a> {
    blocks: Vec<BlockState<'a>>,
    labels: &'a [usize],
    num_classes: usize,
    lambda: f64,
    p: f64,
}

impl Trainer<'_> {
    fn total_score(&self, i: usize, g: usize) -> f64 {
        self.blocks.iter().map(|b| b.score(i, g)).sum()
    }

    fn violation(&self, i: usize) -> Option<usize> {
        let y = self.labels[i];
        let mut best: Option<(usize, f64)> = None;
        for g in 0..self.num_classes {
            if g == y {
                continue;
            }
            let s = self.total_score(i, g);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((g, s));
            }
        }
        let (r, sr) = best?;
        (self.total_score(i, y) - sr < 1.0).then_some(r)
    }

    /// Applies `w <- w - eta * lambda * grad(1/2 |w|_{2,p}^2)`.
    fn shrink(&mut self, eta: f64) {
        let norms: Vec<f64> = self.blocks.iter().map(|b| b.norm_sq().sqrt()).collect();
        let gn = group_norm(&norms, self.p);
        if gn <= 0.0 {
            return;
        }
        for (b, &n) in self.blocks.iter_mut().zip(&norms) {
            if n > 0.0 {
                let weight = (n / gn).powf(self.p - 2.0);
                b.shrink((1.0 - eta * self.lambda * weight).max(0.0));
            }
        }
    }

    /// Pulls `w` back into the ball `|w|_{2,p} <= sqrt(2 / lambda)`, which
    /// holds the minimizer since the zero model has objective 1.
    fn project(&mut self) {
        let norms: Vec<f64> = self.blocks.iter().map(|b| b.norm_sq().sqrt()).collect();
        let gn = group_norm(&norms, self.p);
        let radius = (2.0 / self.lambda).sqrt();
        if gn > radius {
            let factor = radius / gn;
            self.blocks.iter_mut().for_each(|b| b.shrink(factor));
        }
    }

    fn snapshot(&self) -> Vec<Matrix> {
        self.blocks.iter().map(|b| &b.coeffs * b.scale).collect()
    }

    fn objective(&self) -> f64 {
        let n = self.labels.len();
        let mut scores = Matrix::zeros(n, self.num_classes);
        for b in &self.blocks {
            scores += &b.scores * b.scale;
        }
        let norms: Vec<f64> = self.blocks.iter().map(|b| b.norm_sq().sqrt()).collect();
        let gn = group_norm(&norms, self.p);
        0.5 * self.lambda * gn * gn + mean_hinge(&scores, self.labels)
    }
}

/// Trains on precomputed per-block Gram matrices. Returns the coefficients with
/// the lowest objective among the zero model, the end of the stochastic pass
/// and every batch sweep, together with that objective.
pub fn train_on_grams(
    grams: &[Matrix],
    labels: &[usize],
    num_classes: usize,
    cfg: &MkalConfig,
) -> Result<(Vec<Matrix>, f64)> {
    cfg.validate()?;
    let n = labels.len();
    if n == 0 {
        return Err(Error::NoData);
    }
    if num_classes < 2 {
        return Err(Error::InvalidInput("MKAL needs at least 2 classes".into()));
    }
    for g in grams {
        check_dim(n, g.nrows())?;
        check_dim(n, g.ncols())?;
    }
    let mut tr = Trainer {
        blocks: grams
            .iter()
            .map(|g| BlockState {
                gram: g,
                coeffs: Matrix::zeros(n, num_classes),
                scores: Matrix::zeros(n, num_classes),
                scale: 1.0,
            })
            .collect(),
        labels,
        num_classes,
        lambda: cfg.lambda,
        p: cfg.p,
    };
    let mut best = (tr.snapshot(), tr.objective());

    let mut rng = rng_from(cfg.seed, &[0x6d6b_616c]);
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (cfg.lambda * t as f64);
            let violated = tr.violation(i);
            tr.shrink(eta);
            if let Some(r) = violated {
                let y = labels[i];
                for b in tr.blocks.iter_mut() {
                    b.add(i, y, eta);
                    b.add(i, r, -eta);
                }
                tr.project();
            }
        }
        tr.blocks.iter_mut().for_each(BlockState::normalize);
    }
    let obj = tr.objective();
    if obj < best.1 {
        best = (tr.snapshot(), obj);
    }

    for sweep in 1..=cfg.batch_epochs {
        let tau = (cfg.epochs + sweep) as f64;
        let eta = 1.0 / (cfg.lambda * tau);
        let violators: Vec<(usize, usize)> = (0..n)
            .filter_map(|i| tr.violation(i).map(|r| (i, r)))
            .collect();
        tr.shrink(eta);
        let step = eta / n as f64;
        for b in tr.blocks.iter_mut() {
            let mut delta = Matrix::zeros(n, num_classes);
            for &(i, r) in &violators {
                delta[(i, labels[i])] += step;
                delta[(i, r)] -= step;
            }
            delta /= b.scale;
            b.scores += b.gram * &delta;
            b.coeffs += delta;
            b.normalize();
        }
        tr.project();
        let obj = tr.objective();
        if obj < best.1 {
            best = (tr.snapshot(), obj);
        }
    }
    Ok(best)
}

/// Trains MKAL with an explicit block layout.
pub fn fit_mkal_blocks(
    train: &Dataset,
    scores: &SourceScores,
    blocks: Vec<MkalBlock>,
    cfg: &MkalConfig,
) -> Result<MkalModel> {
    cfg.validate()?;
    scores.check(train.len(), train.num_classes, scores.num_sources())?;
    for b in &blocks {
        b.kernel.validate()?;
        if let BlockInput::Source(k) = b.input {
            if k >= scores.num_sources() {
                return Err(Error::InvalidInput(format!(
                    "block reads source {k} but only {} are given",
                    scores.num_sources()
                )));
            }
        }
    }
    let grams = blocks
        .iter()
        .map(|b| b.gram_sym(&train.features, scores))
        .collect::<Result<Vec<_>>>()?;
    let (coeffs, objective) = train_on_grams(&grams, &train.labels, train.num_classes, cfg)?;
    let norms = block_norms(&grams, &coeffs);
    Ok(MkalModel {
        p: cfg.p,
        lambda: cfg.lambda,
        num_classes: train.num_classes,
        blocks,
        dual_coeffs: coeffs,
        block_norms: norms,
        training_inputs: train.features.clone(),
        training_scores: scores.clone(),
        objective,
    })
}

/// MKAL over the raw-feature block and one block per source.
pub fn fit_mkal_with_scores(
    train: &Dataset,
    scores: &SourceScores,
    cfg: &MkalConfig,
) -> Result<MkalModel> {
    if scores.num_sources() == 0 {
        return Err(Error::InvalidInput("MKAL needs at least one source".into()));
    }
    KernelSpec::gaussian(cfg.gamma)?;
    fit_mkal_blocks(
        train,
        scores,
        default_blocks(cfg.gamma, scores.num_sources()),
        cfg,
    )
}

pub fn fit_mkal(train: &Dataset, sources: &[LssvmModel], cfg: &MkalConfig) -> Result<MkalModel> {
    let scores = source_scores(sources, &train.features)?;
    fit_mkal_with_scores(train, &scores, cfg)
}

impl MkalModel {
    pub fn num_sources(&self) -> usize {
        self.training_scores.num_sources()
    }

    /// Per-block contribution to the class scores of `x`.
    pub fn block_scores(&self, x: &Matrix, scores: &SourceScores) -> Result<Vec<Matrix>> {
        check_dim(self.training_inputs.ncols(), x.ncols())?;
        if scores.num_sources() != self.num_sources() {
            return Err(Error::InvalidInput(format!(
                "model has {} source blocks, got scores for {}",
                self.num_sources(),
                scores.num_sources()
            )));
        }
        scores.check(x.nrows(), self.num_classes, self.num_sources())?;
        self.blocks
            .iter()
            .zip(&self.dual_coeffs)
            .map(|(b, a)| {
                let k = b.gram(x, scores, &self.training_inputs, &self.training_scores)?;
                Ok(k * a)
            })
            .collect()
    }

    pub fn decision_scores(&self, x: &Matrix, scores: &SourceScores) -> Result<Matrix> {
        let mut total = Matrix::zeros(x.nrows(), self.num_classes);
        for s in self.block_scores(x, scores)? {
            total += s;
        }
        Ok(total)
    }

    pub fn predict(&self, x: &Matrix, scores: &SourceScores) -> Result<Prediction> {
        Ok(Prediction::from_scores(self.decision_scores(x, scores)?))
    }

    pub fn predict_with_sources(&self, x: &Matrix, sources: &[LssvmModel]) -> Result<Prediction> {
        self.predict(x, &source_scores(sources, x)?)
    }

    /// Share of each block in the sum of block norms.
    pub fn block_shares(&self) -> Vec<f64> {
        let total: f64 = self.block_norms.iter().sum();
        self.block_norms
            .iter()
            .map(|n| if total > 0.0 { n / total } else { 0.0 })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = MkalDoc {
            p: self.p,
            lambda: self.lambda,
            num_classes: self.num_classes,
            num_train: self.training_inputs.nrows(),
            dim: self.training_inputs.ncols(),
            blocks: self.blocks.clone(),
            dual_coeffs: self.dual_coeffs.iter().map(row_major).collect(),
            block_norms: self.block_norms.clone(),
            objective: self.objective,
            training_inputs: row_major(&self.training_inputs),
            source_scores_shape: [
                self.training_inputs.nrows(),
                self.num_sources(),
                self.num_classes,
            ],
            training_scores: self.training_scores.sources().iter().map(row_major).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: MkalDoc = serde_json::from_str(s)?;
        let [n, k, g] = d.source_scores_shape;
        check_dim(d.num_train, n)?;
        check_dim(d.num_classes, g)?;
        check_dim(k, d.training_scores.len())?;
        check_dim(d.blocks.len(), d.dual_coeffs.len())?;
        let scores = d
            .training_scores
            .iter()
            .map(|v| from_row_major(n, g, v))
            .collect::<Result<Vec<_>>>()?;
        Ok(MkalModel {
            p: d.p,
            lambda: d.lambda,
            num_classes: d.num_classes,
            blocks: d.blocks,
            dual_coeffs: d
                .dual_coeffs
                .iter()
                .map(|v| from_row_major(n, g, v))
                .collect::<Result<Vec<_>>>()?,
            block_norms: d.block_norms,
            training_inputs: from_row_major(n, d.dim, &d.training_inputs)?,
            training_scores: SourceScores::from_matrices(scores)?,
            objective: d.objective,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct MkalDoc {
    p: f64,
    lambda: f64,
    num_classes: usize,
    num_train: usize,
    dim: usize,
    blocks: Vec<MkalBlock>,
    dual_coeffs: Vec<Vec<f64>>,
    block_norms: Vec<f64>,
    objective: f64,
    training_inputs: Vec<f64>,
    /// [N, K, G]
    source_scores_shape: [usize; 3],
    training_scores: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lssvm::{fit, fit_raw};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn blobs(seed: u64, n: usize, g: usize, spread: f64) -> Dataset {
        let mut rng = rng_from(seed, &[]);
        let labels: Vec<usize> = (0..n).map(|i| i % g).collect();
        let x = Matrix::from_fn(n, 2, |i, j| {
            let angle = labels[i] as f64 * std::f64::consts::TAU / g as f64;
            let centre = if j == 0 { angle.cos() } else { angle.sin() } * 2.0;
            centre + spread * rng.sample::<f64, _>(StandardNormal)
        });
        Dataset::new(x, labels, g).unwrap()
    }

    fn cfg(p: f64, seed: u64) -> MkalConfig {
        MkalConfig {
            p,
            lambda: 1e-2,
            gamma: 0.5,
            seed,
            ..MkalConfig::default()
        }
    }

    #[test]
    fn twin_blocks_share_norm_at_p2() {
        let train = blobs(1, 40, 3, 0.8);
        let none = SourceScores::from_matrices(vec![]).unwrap();
        let block = default_blocks(0.5, 0)[0];
        let m = fit_mkal_blocks(&train, &none, vec![block, block], &cfg(2.0, 3)).unwrap();
        let total = group_norm(&m.block_norms, 2.0);
        assert!(total > 0.0);
        assert!((m.block_norms[0] - m.block_norms[1]).abs() <= 1e-3 * total);
    }

    #[test]
    fn informative_source_dominates_noise_at_low_p() {
        let g = 4;
        let kernel = KernelSpec::Gaussian { gamma: 0.5 };
        let mut wins = 0;
        for seed in 0..10 {
            let train = blobs(10 + seed, 40, g, 0.9);
            let src_data = blobs(50 + seed, 80, g, 0.9);
            let good = fit(&src_data, kernel, 10.0).unwrap();
            let mut rng = rng_from(seed, &[9]);
            let mut noise = Vec::new();
            for _ in 0..2 {
                let mut shuffled = src_data.labels.clone();
                shuffled.shuffle(&mut rng);
                noise.push(fit_raw(&src_data.features, &shuffled, g, kernel, 10.0).unwrap());
            }
            let sources = vec![good, noise[0].clone(), noise[1].clone()];
            let m = fit_mkal(&train, &sources, &cfg(1.05, seed)).unwrap();
            let share = m.block_shares();
            if share[1] > share[2] && share[1] > share[3] {
                wins += 1;
            }
        }
        assert!(wins >= 9, "{wins}/10");
    }

    #[test]
    fn training_never_ends_above_zero_model() {
        for seed in 0..5 {
            let train = blobs(seed, 30, 3, 1.5);
            let src = fit(&blobs(seed + 40, 30, 3, 1.5), KernelSpec::Gaussian { gamma: 1.0 }, 1.0).unwrap();
            let scores = source_scores(&[src], &train.features).unwrap();
            for p in [1.05, 1.5, 2.0] {
                let c = MkalConfig { lambda: 0.1, ..cfg(p, seed) };
                let m = fit_mkal_with_scores(&train, &scores, &c).unwrap();
                let grams: Vec<Matrix> = m
                    .blocks
                    .iter()
                    .map(|b| b.gram_sym(&train.features, &scores).unwrap())
                    .collect();
                let obj = objective(&grams, &m.dual_coeffs, &train.labels, c.lambda, p);
                assert!(obj <= 1.0 + 1e-12);
                assert!((obj - m.objective).abs() < 1e-8);
                let zero: Vec<Matrix> = grams.iter().map(|_| Matrix::zeros(30, 3)).collect();
                assert_eq!(objective(&grams, &zero, &train.labels, c.lambda, p), 1.0);
                // stored norms match recomputation
                let norms = block_norms(&grams, &m.dual_coeffs);
                for (a, b) in norms.iter().zip(&m.block_norms) {
                    assert!((a - b).abs() <= 1e-6 * b.max(1e-12));
                }
            }
        }
    }

    #[test]
    fn raw_block_alone_is_a_kernel_machine() {
        let train = blobs(2, 30, 3, 0.7);
        let src = fit(&blobs(3, 30, 3, 0.7), KernelSpec::Gaussian { gamma: 1.0 }, 10.0).unwrap();
        let scores = source_scores(std::slice::from_ref(&src), &train.features).unwrap();
        let mut m = fit_mkal_with_scores(&train, &scores, &cfg(1.5, 1)).unwrap();
        m.dual_coeffs[1].fill(0.0);
        let probes = blobs(4, 20, 3, 1.0).features;
        let ps = source_scores(std::slice::from_ref(&src), &probes).unwrap();
        let got = m.decision_scores(&probes, &ps).unwrap();
        let k = gram(&KernelSpec::Gaussian { gamma: 0.5 }, &probes, &train.features)
            .unwrap()
            .add_scalar(1.0);
        let expected = k * &m.dual_coeffs[0];
        assert!((got - expected).amax() < 1e-12);
    }

    #[test]
    fn positive_rescaling_keeps_labels() {
        let train = blobs(5, 30, 3, 0.7);
        let src = fit(&blobs(6, 30, 3, 0.7), KernelSpec::Gaussian { gamma: 1.0 }, 10.0).unwrap();
        let m = fit_mkal(&train, std::slice::from_ref(&src), &cfg(1.25, 2)).unwrap();
        let mut scaled = m.clone();
        scaled.dual_coeffs.iter_mut().for_each(|a| *a *= 3.7);
        let probes = blobs(7, 25, 3, 1.0).features;
        let a = m.predict_with_sources(&probes, std::slice::from_ref(&src)).unwrap();
        let b = scaled.predict_with_sources(&probes, std::slice::from_ref(&src)).unwrap();
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn json_round_trip_reproduces_scores() {
        let train = blobs(8, 25, 3, 0.7);
        let src = fit(&blobs(9, 30, 3, 0.7), KernelSpec::Gaussian { gamma: 1.0 }, 10.0).unwrap();
        let m = fit_mkal(&train, std::slice::from_ref(&src), &cfg(1.5, 4)).unwrap();
        let back = MkalModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        let probes = blobs(10, 15, 3, 1.0).features;
        let ps = source_scores(std::slice::from_ref(&src), &probes).unwrap();
        let d = m.decision_scores(&probes, &ps).unwrap() - back.decision_scores(&probes, &ps).unwrap();
        assert!(d.amax() <= 1e-10);
    }

    #[test]
    fn deterministic_under_seed() {
        let train = blobs(11, 30, 3, 0.9);
        let src = fit(&blobs(12, 30, 3, 0.9), KernelSpec::Gaussian { gamma: 1.0 }, 10.0).unwrap();
        let a = fit_mkal(&train, std::slice::from_ref(&src), &cfg(1.25, 5)).unwrap();
        let b = fit_mkal(&train, std::slice::from_ref(&src), &cfg(1.25, 5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_configuration() {
        let train = blobs(1, 10, 2, 0.5);
        let src = fit(&train, KernelSpec::Linear, 1.0).unwrap();
        for p in [1.0, 2.5, 0.5] {
            assert!(fit_mkal(&train, std::slice::from_ref(&src), &cfg(p, 0)).is_err());
        }
        assert!(fit_mkal(&train, &[], &cfg(1.5, 0)).is_err());
        let m = fit_mkal(&train, std::slice::from_ref(&src), &cfg(1.5, 0)).unwrap();
        let empty = SourceScores::from_matrices(vec![]).unwrap();
        assert!(m.predict(&train.features, &empty).is_err());
    }

    proptest! {
        #[test]
        fn group_norm_at_p2_is_plain_l2(v in proptest::collection::vec(-5.0f64..5.0, 12), split in 1usize..11) {
            let (a, b) = v.split_at(split);
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            let plain = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((group_norm(&[na, nb], 2.0) - plain).abs() <= 1e-12 * (1.0 + plain));
        }

        #[test]
        fn group_norm_decreases_in_p(norms in proptest::collection::vec(0.0f64..5.0, 1..6), p in 1.01f64..2.0) {
            prop_assert!(group_norm(&norms, 2.0) <= group_norm(&norms, p) * (1.0 + 1e-12) + 1e-12);
        }
    }
}

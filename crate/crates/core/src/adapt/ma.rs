//! Multi Adapt: an LS-SVM regularized toward a per-class nonnegative
//! combination of source hyperplanes.
//!
//! For fixed weights `beta` the change of variable `w' = w - sum_k beta_kg w^k_g`
//! turns the problem into a plain LS-SVM on the shifted targets
//! `y^g - sum_k beta_kg s^k_g(x)`; the final score adds the weighted source
//! scores back. The weights minimize a hinge bound on the leave-one-out
//! outputs, which are affine in `beta`:
//!
//! ```text
//! loo_g(beta) = (y^g - D^-1 A y^g) + sum_k beta_kg D^-1 A s^k_g
//! ```
//!
//! where `A` is the inverse bordered block and `D = diag(A)`.

use serde::{Deserialize, Serialize};

use crate::adapt::sources::{source_scores, SourceScores};
use crate::error::{check_dim, Error, Result};
use crate::kernels::{gram_sym, KernelSpec};
use crate::lssvm::{
    from_row_major, one_vs_all_targets, row_major, KktSystem, LssvmDoc, LssvmModel, Prediction,
};
use crate::signals::Dataset;
use crate::Matrix;

/// Per-source, per-class transfer weights (K×G). Entries are nonnegative and
/// every class column lies in the unit L2 ball.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaWeights {
    values: Matrix,
}

impl BetaWeights {
    pub fn zeros(sources: usize, classes: usize) -> Self {
        BetaWeights {
            values: Matrix::zeros(sources, classes),
        }
    }

    pub fn new(values: Matrix) -> Result<Self> {
        if !is_feasible(&values, BALL_TOL) {
            return Err(Error::InvalidParameter(
                "beta must be nonnegative with per-class L2 norm at most 1".into(),
            ));
        }
        Ok(BetaWeights { values })
    }

    /// Euclidean projection onto the feasible set.
    pub fn projected(values: &Matrix) -> Self {
        BetaWeights {
            values: project(values),
        }
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn num_sources(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.values.ncols()
    }
}

// Slack so that re-projecting a rescaled column is a no-op.
const BALL_TOL: f64 = 1e-12;

fn is_feasible(m: &Matrix, tol: f64) -> bool {
    m.iter().all(|&v| v >= 0.0 && v.is_finite())
        && m.column_iter().all(|c| c.norm() <= 1.0 + tol)
}

/// Clips negatives, then rescales each class column onto the unit ball.
/// This is the exact projection onto the orthant-ball intersection.
pub fn project(m: &Matrix) -> Matrix {
    let mut out = m.map(|v| v.max(0.0));
    for mut col in out.column_iter_mut() {
        let n = col.norm();
        if n > 1.0 + BALL_TOL {
            col /= n;
        }
    }
    out
}

/// Projected subgradient settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaConfig {
    pub iterations: usize,
    /// Step `eta0 / sqrt(t)`.
    pub eta0: f64,
}

impl Default for MaConfig {
    fn default() -> Self {
        MaConfig {
            iterations: 300,
            eta0: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaModel {
    /// LS-SVM trained on the beta-shifted targets.
    pub base: LssvmModel,
    pub beta: BetaWeights,
    pub source_ids: Vec<String>,
}

impl MaModel {
    pub fn num_sources(&self) -> usize {
        self.beta.num_sources()
    }

    /// `base(x) + sum_k beta_kg s^k_g(x)`.
    pub fn decision_scores(&self, x: &Matrix, scores: &SourceScores) -> Result<Matrix> {
        scores.check(x.nrows(), self.base.num_classes, self.num_sources())?;
        let mut s = self.base.decision_scores(x)?;
        let beta = self.beta.values();
        for (k, sk) in scores.sources().iter().enumerate() {
            for g in 0..s.ncols() {
                let b = beta[(k, g)];
                s.column_mut(g).axpy(b, &sk.column(g), 1.0);
            }
        }
        Ok(s)
    }

    pub fn predict(&self, x: &Matrix, scores: &SourceScores) -> Result<Prediction> {
        Ok(Prediction::from_scores(self.decision_scores(x, scores)?))
    }

    pub fn predict_with_sources(&self, x: &Matrix, sources: &[LssvmModel]) -> Result<Prediction> {
        self.predict(x, &source_scores(sources, x)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = MaDoc {
            base: LssvmDoc::from(&self.base),
            num_sources: self.num_sources(),
            beta: row_major(self.beta.values()),
            sources: self.source_ids.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: MaDoc = serde_json::from_str(s)?;
        let base: LssvmModel = doc.base.try_into()?;
        let beta = from_row_major(doc.num_sources, base.num_classes, &doc.beta)?;
        check_dim(doc.num_sources, doc.sources.len())?;
        Ok(MaModel {
            base,
            beta: BetaWeights::new(beta)?,
            source_ids: doc.sources,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct MaDoc {
    base: LssvmDoc,
    num_sources: usize,
    /// K×G, row-major.
    beta: Vec<f64>,
    /// Source model references (ids or file paths).
    sources: Vec<String>,
}

/// Affine leave-one-out outputs `u_g + sum_k beta_kg v_kg` for one training set.
pub struct LooBound {
    targets: Matrix,
    /// N×G leave-one-out outputs at beta = 0.
    offset: Matrix,
    /// Per source: N×G sensitivity of the LOO outputs to beta_kg.
    slopes: Vec<Matrix>,
}

impl LooBound {
    pub fn new(sys: &KktSystem, targets: &Matrix, scores: &SourceScores) -> Result<Self> {
        let n = targets.nrows();
        scores.check(n, targets.ncols(), scores.num_sources())?;
        let a = sys.inverse_block();
        let diag: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        if diag.iter().any(|d| !(d.abs() > f64::MIN_POSITIVE)) {
            return Err(Error::Numeric("zero leave-one-out pivot".into()));
        }
        let scale_rows = |mut m: Matrix| {
            for (i, mut row) in m.row_iter_mut().enumerate() {
                row /= diag[i];
            }
            m
        };
        let offset = targets - scale_rows(&a * targets);
        let slopes = scores
            .sources()
            .iter()
            .map(|s| scale_rows(&a * s))
            .collect();
        Ok(LooBound {
            targets: targets.clone(),
            offset,
            slopes,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.slopes.len()
    }

    /// N×G leave-one-out outputs at `beta` (K×G).
    pub fn loo_outputs(&self, beta: &Matrix) -> Matrix {
        let mut out = self.offset.clone();
        for (k, v) in self.slopes.iter().enumerate() {
            for g in 0..out.ncols() {
                out.column_mut(g).axpy(beta[(k, g)], &v.column(g), 1.0);
            }
        }
        out
    }

    fn class_margins(&self, g: usize, beta_g: &[f64]) -> Vec<f64> {
        (0..self.targets.nrows())
            .map(|i| {
                let mut f = self.offset[(i, g)];
                for (k, v) in self.slopes.iter().enumerate() {
                    f += beta_g[k] * v[(i, g)];
                }
                self.targets[(i, g)] * f
            })
            .collect()
    }

    pub fn class_loss(&self, g: usize, beta_g: &[f64]) -> f64 {
        self.class_margins(g, beta_g)
            .iter()
            .map(|m| (1.0 - m).max(0.0))
            .sum()
    }

    /// `sum_i sum_g max(0, 1 - y_i^g loo_ig(beta))`.
    pub fn loss(&self, beta: &Matrix) -> f64 {
        (0..self.targets.ncols())
            .map(|g| {
                let col: Vec<f64> = beta.column(g).iter().copied().collect();
                self.class_loss(g, &col)
            })
            .sum()
    }

    fn class_subgradient(&self, g: usize, beta_g: &[f64]) -> Vec<f64> {
        let margins = self.class_margins(g, beta_g);
        let mut grad = vec![0.0; self.num_sources()];
        for (i, &m) in margins.iter().enumerate() {
            if m < 1.0 {
                let y = self.targets[(i, g)];
                for (k, v) in self.slopes.iter().enumerate() {
                    grad[k] -= y * v[(i, g)];
                }
            }
        }
        grad
    }
}

/// Loss trajectory of the weight search, one vector per class (entry 0 is the
/// starting point beta = 0).
#[derive(Clone, Debug, Default)]
pub struct BetaTrace {
    pub losses: Vec<Vec<f64>>,
}

/// Projected subgradient descent on the LOO hinge bound, run independently
/// per class (the bound and the constraints are separable by class). Returns
/// the best iterate seen for each class.
pub fn optimize_beta(bound: &LooBound, cfg: &MaConfig) -> (BetaWeights, BetaTrace) {
    let (n, g_count) = bound.targets.shape();
    let k_count = bound.num_sources();
    let mut best = Matrix::zeros(k_count, g_count);
    let mut trace = BetaTrace::default();
    let scale = 1.0 / n.max(1) as f64;
    for g in 0..g_count {
        let mut beta = vec![0.0; k_count];
        let mut best_loss = bound.class_loss(g, &beta);
        let mut best_beta = beta.clone();
        let mut losses = vec![best_loss];
        for t in 1..=cfg.iterations {
            let step = cfg.eta0 / (t as f64).sqrt();
            let grad = bound.class_subgradient(g, &beta);
            if grad.iter().all(|&v| v == 0.0) {
                break;
            }
            for k in 0..k_count {
                beta[k] = (beta[k] - step * scale * grad[k]).max(0.0);
            }
            let norm = beta.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1.0 + BALL_TOL {
                beta.iter_mut().for_each(|v| *v /= norm);
            }
            let loss = bound.class_loss(g, &beta);
            losses.push(loss);
            if loss < best_loss {
                best_loss = loss;
                best_beta.copy_from_slice(&beta);
            }
        }
        for k in 0..k_count {
            best[(k, g)] = best_beta[k];
        }
        trace.losses.push(losses);
    }
    (BetaWeights { values: best }, trace)
}

fn shifted_targets(targets: &Matrix, scores: &SourceScores, beta: &BetaWeights) -> Matrix {
    let mut out = targets.clone();
    let b = beta.values();
    for (k, s) in scores.sources().iter().enumerate() {
        for g in 0..out.ncols() {
            out.column_mut(g).axpy(-b[(k, g)], &s.column(g), 1.0);
        }
    }
    out
}

fn default_ids(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("source_{i}")).collect()
}

/// Trains the target model for fixed weights.
pub fn fit_ma_fixed_beta(
    train: &Dataset,
    scores: &SourceScores,
    kernel: KernelSpec,
    c: f64,
    beta: BetaWeights,
) -> Result<MaModel> {
    scores.check(train.len(), train.num_classes, beta.num_sources())?;
    check_dim(train.num_classes, beta.num_classes())?;
    let k = gram_sym(&kernel, &train.features)?;
    let sys = KktSystem::new(&k, c)?;
    let targets = one_vs_all_targets(&train.labels, train.num_classes);
    base_model(train, &sys, &targets, scores, kernel, c, beta)
}

fn base_model(
    train: &Dataset,
    sys: &KktSystem,
    targets: &Matrix,
    scores: &SourceScores,
    kernel: KernelSpec,
    c: f64,
    beta: BetaWeights,
) -> Result<MaModel> {
    let (mut alphas, mut biases) = sys.solve(&shifted_targets(targets, scores, &beta))?;
    // classes absent from the target with no source weight score exactly as in plain LS-SVM
    let counts = crate::signals::class_counts(&train.labels, train.num_classes);
    for (g, &n) in counts.iter().enumerate() {
        if n == 0 && beta.values().column(g).iter().all(|&b| b == 0.0) {
            alphas.column_mut(g).fill(0.0);
            biases[g] = -1.0;
        }
    }
    Ok(MaModel {
        base: LssvmModel {
            kernel,
            c,
            num_classes: train.num_classes,
            support_inputs: train.features.clone(),
            alphas,
            biases,
        },
        beta,
        source_ids: default_ids(scores.num_sources()),
    })
}

/// Multi Adapt with weights chosen on the leave-one-out bound.
pub fn fit_ma_with_scores(
    train: &Dataset,
    scores: &SourceScores,
    kernel: KernelSpec,
    c: f64,
    cfg: &MaConfig,
) -> Result<(MaModel, BetaTrace)> {
    if scores.num_sources() == 0 {
        return Err(Error::InvalidInput(
            "Multi Adapt needs at least one source (use No Transfer)".into(),
        ));
    }
    if train.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "Multi Adapt needs at least 3 samples, got {}",
            train.len()
        )));
    }
    scores.check(train.len(), train.num_classes, scores.num_sources())?;
    let k = gram_sym(&kernel, &train.features)?;
    let sys = KktSystem::new(&k, c)?;
    let targets = one_vs_all_targets(&train.labels, train.num_classes);
    let bound = LooBound::new(&sys, &targets, scores)?;
    let (beta, trace) = optimize_beta(&bound, cfg);
    let model = base_model(train, &sys, &targets, scores, kernel, c, beta)?;
    Ok((model, trace))
}

pub fn fit_ma(
    train: &Dataset,
    sources: &[LssvmModel],
    kernel: KernelSpec,
    c: f64,
) -> Result<MaModel> {
    let scores = source_scores(sources, &train.features)?;
    Ok(fit_ma_with_scores(train, &scores, kernel, c, &MaConfig::default())?.0)
}

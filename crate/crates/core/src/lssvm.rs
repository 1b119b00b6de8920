//! One-vs-all least-squares SVM in dual form.
//!
//! For every class `g` the dual solves the bordered system
//!
//! ```text
//! [ 0   1^T     ] [ b_g ]   [ 0   ]
//! [ 1   K + I/C ] [ a_g ] = [ y^g ]
//! ```
//!
//! with one-vs-all targets `y^g` in {-1, +1}. `H = K + I/C` is factorized once
//! and shared by every class; the bordered system is eliminated through
//! `eta = H^-1 1`.

use nalgebra::{Cholesky, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernels::{gram, gram_sym, KernelSpec};
use crate::signals::Dataset;
use crate::Matrix;

/// Labels and per-class scores for a batch of queries.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    /// M×G decision values.
    pub scores: Matrix,
}

impl Prediction {
    pub fn from_scores(scores: Matrix) -> Self {
        Prediction {
            labels: argmax_rows(&scores),
            scores,
        }
    }
}

/// Row-wise argmax; ties go to the smallest column index.
pub fn argmax_rows(scores: &Matrix) -> Vec<usize> {
    scores
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (g, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = g;
                }
            }
            best
        })
        .collect()
}

/// ±1 one-vs-all target matrix (N×G).
pub fn one_vs_all_targets(labels: &[usize], num_classes: usize) -> Matrix {
    Matrix::from_fn(labels.len(), num_classes, |i, g| {
        if labels[i] == g {
            1.0
        } else {
            -1.0
        }
    })
}

/// Factorization of the bordered KKT matrix for a fixed Gram matrix and `C`.
pub struct KktSystem {
    chol: Cholesky<f64, Dyn>,
    eta: DVector<f64>,
    eta_sum: f64,
}

impl KktSystem {
    pub fn new(gram: &Matrix, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "C must be positive and finite, got {c}"
            )));
        }
        let n = gram.nrows();
        check_dim(n, gram.ncols())?;
        let mut h = gram.clone();
        for i in 0..n {
            h[(i, i)] += 1.0 / c;
        }
        let chol = Cholesky::new(h)
            .ok_or_else(|| Error::Numeric("K + I/C is not positive definite".into()))?;
        let eta = chol.solve(&DVector::from_element(n, 1.0));
        let eta_sum = eta.sum();
        if !(eta_sum.is_finite() && eta_sum.abs() > f64::MIN_POSITIVE) {
            return Err(Error::Numeric("degenerate bias row".into()));
        }
        Ok(KktSystem { chol, eta, eta_sum })
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    /// Solves for every column of `targets` (N×G); returns (alphas N×G, biases).
    pub fn solve(&self, targets: &Matrix) -> Result<(Matrix, Vec<f64>)> {
        check_dim(self.len(), targets.nrows())?;
        let nu = self.chol.solve(targets);
        let biases: Vec<f64> = nu
            .column_iter()
            .map(|col| col.sum() / self.eta_sum)
            .collect();
        let mut alphas = nu;
        for (g, mut col) in alphas.column_iter_mut().enumerate() {
            col.axpy(-biases[g], &self.eta, 1.0);
        }
        if alphas.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite dual coefficients".into()));
        }
        Ok((alphas, biases))
    }

    /// Lower-right N×N block of the inverse bordered matrix, `A = H^-1 - eta eta^T / (1^T eta)`.
    /// Dual coefficients are `alpha = A y` for any right-hand side `[0; y]`.
    pub fn inverse_block(&self) -> Matrix {
        let mut a = self.chol.inverse();
        a.ger(-1.0 / self.eta_sum, &self.eta, &self.eta, 1.0);
        a
    }
}

/// Trained one-vs-all LS-SVM.
#[derive(Clone, Debug, PartialEq)]
pub struct LssvmModel {
    pub kernel: KernelSpec,
    pub c: f64,
    pub num_classes: usize,
    /// N×d training inputs.
    pub support_inputs: Matrix,
    /// N×G dual coefficients.
    pub alphas: Matrix,
    pub biases: Vec<f64>,
}

pub fn fit(train: &Dataset, kernel: KernelSpec, c: f64) -> Result<LssvmModel> {
    fit_raw(&train.features, &train.labels, train.num_classes, kernel, c)
}

pub fn fit_raw(
    x: &Matrix,
    labels: &[usize],
    num_classes: usize,
    kernel: KernelSpec,
    c: f64,
) -> Result<LssvmModel> {
    check_dim(x.nrows(), labels.len())?;
    if x.nrows() < 2 {
        return Err(Error::InvalidInput(format!(
            "LS-SVM needs at least 2 samples, got {}",
            x.nrows()
        )));
    }
    if num_classes == 0 {
        return Err(Error::InvalidInput("no classes".into()));
    }
    let k = gram_sym(&kernel, x)?;
    let sys = KktSystem::new(&k, c)?;
    let (mut alphas, mut biases) = sys.solve(&one_vs_all_targets(labels, num_classes))?;
    let counts = crate::signals::class_counts(labels, num_classes);
    for (g, &n) in counts.iter().enumerate() {
        if n == 0 {
            alphas.column_mut(g).fill(0.0);
            biases[g] = -1.0;
        }
    }
    Ok(LssvmModel {
        kernel,
        c,
        num_classes,
        support_inputs: x.clone(),
        alphas,
        biases,
    })
}

impl LssvmModel {
    pub fn dim(&self) -> usize {
        self.support_inputs.ncols()
    }

    /// M×G decision values `K(X, support) alpha + b`.
    pub fn decision_scores(&self, x: &Matrix) -> Result<Matrix> {
        check_dim(self.dim(), x.ncols())?;
        let k = gram(&self.kernel, x, &self.support_inputs)?;
        let mut s = k * &self.alphas;
        for (g, mut col) in s.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.biases[g]);
        }
        Ok(s)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Prediction> {
        Ok(Prediction::from_scores(self.decision_scores(x)?))
    }

    /// `(1/2) alpha^T K alpha + (C/2) sum xi^2` per class, with `xi = alpha / C`.
    pub fn primal_objective(&self) -> Result<Vec<f64>> {
        let k = gram_sym(&self.kernel, &self.support_inputs)?;
        Ok(self
            .alphas
            .column_iter()
            .map(|a| {
                let ka = &k * a;
                0.5 * a.dot(&ka) + 0.5 * a.norm_squared() / self.c
            })
            .collect())
    }

    /// Training squared error `sum_i sum_g xi_{i,g}^2`.
    pub fn training_sq_error(&self) -> f64 {
        self.alphas.norm_squared() / (self.c * self.c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&LssvmDoc::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<LssvmDoc>(s)?.try_into()
    }
}

/// Closed-form signed leave-one-out residuals `y_i^g - f^{(-i)}_g(x_i)` (N×G).
pub fn loo_residuals(train: &Dataset, kernel: KernelSpec, c: f64) -> Result<Matrix> {
    let n = train.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "leave-one-out needs at least 3 samples, got {n}"
        )));
    }
    let k = gram_sym(&kernel, &train.features)?;
    let sys = KktSystem::new(&k, c)?;
    let targets = one_vs_all_targets(&train.labels, train.num_classes);
    loo_from_system(&sys, &targets)
}

pub(crate) fn loo_from_system(sys: &KktSystem, targets: &Matrix) -> Result<Matrix> {
    let a = sys.inverse_block();
    let (alphas, _) = sys.solve(targets)?;
    let mut r = alphas;
    for i in 0..r.nrows() {
        let d = a[(i, i)];
        if !(d.abs() > f64::MIN_POSITIVE) {
            return Err(Error::Numeric(format!("zero leave-one-out pivot at {i}")));
        }
        r.row_mut(i).scale_mut(1.0 / d);
    }
    Ok(r)
}

/// On-disk model document. Matrices are row-major.
#[derive(Serialize, Deserialize)]
pub(crate) struct LssvmDoc {
    kernel: KernelSpec,
    #[serde(rename = "C")]
    c: f64,
    num_classes: usize,
    num_support: usize,
    dim: usize,
    biases: Vec<f64>,
    alphas: Vec<f64>,
    support_inputs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    norm_stats: Option<String>,
}

pub(crate) fn row_major(m: &Matrix) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

pub(crate) fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Matrix> {
    if data.len() != rows * cols {
        return Err(Error::InvalidInput(format!(
            "expected {} matrix entries, got {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(Matrix::from_row_slice(rows, cols, data))
}

impl From<&LssvmModel> for LssvmDoc {
    fn from(m: &LssvmModel) -> Self {
        LssvmDoc {
            kernel: m.kernel,
            c: m.c,
            num_classes: m.num_classes,
            num_support: m.support_inputs.nrows(),
            dim: m.dim(),
            biases: m.biases.clone(),
            alphas: row_major(&m.alphas),
            support_inputs: row_major(&m.support_inputs),
            norm_stats: None,
        }
    }
}

impl TryFrom<LssvmDoc> for LssvmModel {
    type Error = Error;
    fn try_from(d: LssvmDoc) -> Result<Self> {
        d.kernel.validate()?;
        check_dim(d.num_classes, d.biases.len())?;
        Ok(LssvmModel {
            kernel: d.kernel,
            c: d.c,
            num_classes: d.num_classes,
            support_inputs: from_row_major(d.num_support, d.dim, &d.support_inputs)?,
            alphas: from_row_major(d.num_support, d.num_classes, &d.alphas)?,
            biases: d.biases,
        })
    }
}

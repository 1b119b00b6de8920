use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::lssvm::LssvmModel;
use crate::Matrix;

/// Decision values of K source models on M queries, stored as K matrices of
/// shape M×G.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceScores {
    per_source: Vec<Matrix>,
}

/// Entry `(j, k, g)` is source `k`'s class-`g` score on row `j` of `x`.
pub fn source_scores(sources: &[LssvmModel], x: &Matrix) -> Result<SourceScores> {
    let per_source = sources
        .par_iter()
        .map(|m| m.decision_scores(x))
        .collect::<Result<Vec<_>>>()?;
    SourceScores::from_matrices(per_source)
}

impl SourceScores {
    pub fn from_matrices(per_source: Vec<Matrix>) -> Result<Self> {
        if let Some(first) = per_source.first() {
            for m in &per_source {
                if m.shape() != first.shape() {
                    return Err(Error::InvalidInput(format!(
                        "source score shapes differ: {:?} vs {:?}",
                        first.shape(),
                        m.shape()
                    )));
                }
            }
        }
        Ok(SourceScores { per_source })
    }

    pub fn num_sources(&self) -> usize {
        self.per_source.len()
    }

    pub fn len(&self) -> usize {
        self.per_source.first().map_or(0, |m| m.nrows())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.per_source.first().map_or(0, |m| m.ncols())
    }

    pub fn get(&self, row: usize, source: usize, class: usize) -> f64 {
        self.per_source[source][(row, class)]
    }

    pub fn source(&self, k: usize) -> &Matrix {
        &self.per_source[k]
    }

    pub fn sources(&self) -> &[Matrix] {
        &self.per_source
    }

    pub fn subset(&self, idx: &[usize]) -> SourceScores {
        SourceScores {
            per_source: self.per_source.iter().map(|m| m.select_rows(idx)).collect(),
        }
    }

    /// Keeps only the listed sources, in the given order.
    pub fn select_sources(&self, which: &[usize]) -> SourceScores {
        SourceScores {
            per_source: which.iter().map(|&k| self.per_source[k].clone()).collect(),
        }
    }

    /// M×(K·G) matrix `[s^1 | s^2 | ... | s^K]`.
    pub fn stacked(&self) -> Matrix {
        let (m, g) = (self.len(), self.num_classes());
        let mut out = Matrix::zeros(m, g * self.num_sources());
        for (k, s) in self.per_source.iter().enumerate() {
            out.view_mut((0, k * g), (m, g)).copy_from(s);
        }
        out
    }

    pub(crate) fn check(&self, rows: usize, classes: usize, sources: usize) -> Result<()> {
        check_dim(sources, self.num_sources())?;
        if sources > 0 {
            check_dim(rows, self.len())?;
            check_dim(classes, self.num_classes())?;
        }
        Ok(())
    }
}

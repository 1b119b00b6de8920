//! Reference systems: target data only, and source predictions only.

use serde::{Deserialize, Serialize};

use crate::adapt::sources::{source_scores, SourceScores};
use crate::error::{Error, Result};
use crate::lssvm::{fit_raw, LssvmDoc, LssvmModel, Prediction};
use crate::modelsel::{effective_folds, fit_selected_gaussian, select_lssvm, CvResult, Grid, LssvmParams};
use crate::signals::{Dataset, NormStats};
use crate::Matrix;

/// Cross-validated Gaussian LS-SVM on the target features alone.
pub fn fit_no_transfer(train: &Dataset, grid: &Grid) -> Result<(LssvmModel, CvResult<LssvmParams>)> {
    fit_selected_gaussian(train, grid)
}

/// Linear LS-SVM over z-normalized stacked source scores.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorFeaturesModel {
    pub model: LssvmModel,
    pub score_norm: NormStats,
}

impl PriorFeaturesModel {
    pub fn num_sources(&self) -> usize {
        self.score_norm.dim() / self.model.num_classes.max(1)
    }

    pub fn decision_scores(&self, scores: &SourceScores) -> Result<Matrix> {
        if scores.num_sources() != self.num_sources() {
            return Err(Error::InvalidInput(format!(
                "model expects {} sources, got {}",
                self.num_sources(),
                scores.num_sources()
            )));
        }
        self.model.decision_scores(&self.score_norm.apply(&scores.stacked())?)
    }

    pub fn predict(&self, scores: &SourceScores) -> Result<Prediction> {
        Ok(Prediction::from_scores(self.decision_scores(scores)?))
    }

    pub fn predict_with_sources(&self, x: &Matrix, sources: &[LssvmModel]) -> Result<Prediction> {
        self.predict(&source_scores(sources, x)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = PriorDoc {
            model: LssvmDoc::from(&self.model),
            score_norm: self.score_norm.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: PriorDoc = serde_json::from_str(s)?;
        let model: LssvmModel = d.model.try_into()?;
        crate::error::check_dim(model.dim(), d.score_norm.dim())?;
        Ok(PriorFeaturesModel {
            model,
            score_norm: d.score_norm,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct PriorDoc {
    model: LssvmDoc,
    /// Statistics of the stacked source scores.
    score_norm: NormStats,
}

pub fn fit_prior_features_with(
    labels: &[usize],
    num_classes: usize,
    scores: &SourceScores,
    c: f64,
) -> Result<PriorFeaturesModel> {
    let (z, stats) = normalized_stack(labels, scores)?;
    let model = fit_raw(&z, labels, num_classes, crate::kernels::KernelSpec::Linear, c)?;
    Ok(PriorFeaturesModel {
        model,
        score_norm: stats,
    })
}

/// Prior Features with C chosen by cross-validation. Only the labels of
/// `train` are read.
pub fn fit_prior_features(
    train: &Dataset,
    scores: &SourceScores,
    grid: &Grid,
) -> Result<(PriorFeaturesModel, CvResult<LssvmParams>)> {
    grid.validate()?;
    let (z, stats) = normalized_stack(&train.labels, scores)?;
    let cv = select_lssvm(
        &z,
        &train.labels,
        train.num_classes,
        &grid.linear_candidates(),
        effective_folds(grid, train.len()),
        grid.seed,
    )?;
    let model = fit_raw(&z, &train.labels, train.num_classes, cv.best.kernel, cv.best.c)?;
    Ok((
        PriorFeaturesModel {
            model,
            score_norm: stats,
        },
        cv,
    ))
}

fn normalized_stack(labels: &[usize], scores: &SourceScores) -> Result<(Matrix, NormStats)> {
    if scores.num_sources() == 0 {
        return Err(Error::InvalidInput("Prior Features needs at least one source".into()));
    }
    crate::error::check_dim(labels.len(), scores.len())?;
    let z = scores.stacked();
    let stats = NormStats::fit(&z);
    Ok((stats.apply(&z)?, stats))
}

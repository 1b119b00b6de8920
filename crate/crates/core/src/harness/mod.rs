//! The transfer experiments: every target subject in turn, sources trained on
//! the others, target training sets grown along a size schedule.

pub mod analysis;
pub mod report;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::hl2l::fit_hl2l_selected;
use crate::adapt::ma::{fit_ma_with_scores, MaConfig};
use crate::adapt::mkal::{fit_mkal_with_scores, MkalConfig};
use crate::adapt::sources::{source_scores, SourceScores};
use crate::baselines::{fit_no_transfer, fit_prior_features};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::lssvm::LssvmModel;
use crate::modelsel::{effective_folds, fit_selected_gaussian, select, Grid, LssvmParams};
use crate::rng::{derive_seed, rng_from};
use crate::signals::{
    apply_normalizer, average_blocks, build_split, fit_normalizer, Condition, Dataset, FeatureMode,
    Recording, WindowSpec,
};

use analysis::{confusion, ConfusionMatrix, LearningCurve};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExperimentKind {
    /// Intact targets, intact sources.
    II,
    /// Amputee targets, amputee sources.
    AA,
    /// Amputee targets, intact sources.
    AI,
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "II" => Ok(ExperimentKind::II),
            "AA" => Ok(ExperimentKind::AA),
            "AI" => Ok(ExperimentKind::AI),
            _ => Err(Error::InvalidParameter(format!(
                "unknown experiment {s:?} (expected II, AA or AI)"
            ))),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl ExperimentKind {
    fn target_condition(self) -> Condition {
        match self {
            ExperimentKind::II => Condition::Intact,
            ExperimentKind::AA | ExperimentKind::AI => Condition::Amputee,
        }
    }

    fn source_condition(self) -> Condition {
        match self {
            ExperimentKind::II | ExperimentKind::AI => Condition::Intact,
            ExperimentKind::AA => Condition::Amputee,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    NoTransfer,
    PriorFeatures,
    MA,
    MKAL,
    HL2L,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::NoTransfer,
        Method::PriorFeatures,
        Method::MA,
        Method::MKAL,
        Method::HL2L,
    ];

    pub fn uses_sources(self) -> bool {
        self != Method::NoTransfer
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, Method::MA | Method::MKAL | Method::HL2L)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::NoTransfer => "NoTransfer",
            Method::PriorFeatures => "PriorFeatures",
            Method::MA => "MA",
            Method::MKAL => "MKAL",
            Method::HL2L => "HL2L",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "notransfer" | "nt" => Ok(Method::NoTransfer),
            "priorfeatures" | "pf" => Ok(Method::PriorFeatures),
            "ma" | "multiadapt" => Ok(Method::MA),
            "mkal" => Ok(Method::MKAL),
            "hl2l" => Ok(Method::HL2L),
            _ => Err(Error::InvalidParameter(format!("unknown method {s:?}"))),
        }
    }
}

/// Candidate MKAL settings; the raw-block bandwidth comes from the
/// No Transfer selection of the same cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MkalGrid {
    pub p_values: Vec<f64>,
    pub lambda_values: Vec<f64>,
    pub epochs: usize,
    pub batch_epochs: usize,
}

impl Default for MkalGrid {
    fn default() -> Self {
        MkalGrid {
            p_values: vec![1.05, 1.25, 1.5, 2.0],
            lambda_values: vec![1e-1, 1e-2, 1e-3, 1e-4],
            epochs: 5,
            batch_epochs: 20,
        }
    }
}

impl MkalGrid {
    /// Strongest regularization first, then the sparsest norm.
    pub fn candidates(&self, gamma: f64, seed: u64) -> Vec<MkalConfig> {
        let mut lambdas = self.lambda_values.clone();
        lambdas.sort_by(|a, b| b.total_cmp(a));
        lambdas.dedup();
        let mut ps = self.p_values.clone();
        ps.sort_by(f64::total_cmp);
        ps.dedup();
        lambdas
            .iter()
            .flat_map(|&lambda| {
                ps.iter().map(move |&p| MkalConfig {
                    p,
                    lambda,
                    gamma,
                    epochs: self.epochs,
                    batch_epochs: self.batch_epochs,
                    seed,
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_values.is_empty() || self.lambda_values.is_empty() {
            return Err(Error::InvalidParameter("MKAL grid must be nonempty".into()));
        }
        for cfg in self.candidates(1.0, 0) {
            cfg.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub methods: Vec<Method>,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub base_seed: u64,
    pub grid: Grid,
    pub mkal: MkalGrid,
    pub ma: MaConfig,
    /// Cap on the training vectors used for each source model; 0 uses all.
    pub source_samples: usize,
    /// Repetitions held out for testing.
    pub test_reps: Vec<u32>,
    pub window: WindowSpec,
    pub feature_mode: FeatureMode,
    /// Restricts the targets to these subject ids when nonempty.
    pub targets: Vec<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::II,
            methods: Method::ALL.to_vec(),
            sizes: (1..=18).map(|k| 120 * k).collect(),
            seeds: vec![0],
            base_seed: 0,
            grid: Grid::default(),
            mkal: MkalGrid::default(),
            ma: MaConfig::default(),
            source_samples: 400,
            test_reps: vec![5, 6],
            window: WindowSpec::default(),
            feature_mode: FeatureMode::Concat,
            targets: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods selected".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidParameter("seed list is empty".into()));
        }
        if self.sizes.is_empty() || self.sizes[0] == 0 {
            return Err(Error::InvalidParameter("size schedule must hold positive sizes".into()));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("size schedule must be strictly increasing".into()));
        }
        if self.test_reps.is_empty() {
            return Err(Error::InvalidParameter("no test repetitions".into()));
        }
        self.grid.validate()?;
        if self.methods.contains(&Method::MKAL) {
            self.mkal.validate()?;
        }
        Ok(())
    }

    pub fn needs_sources(&self) -> bool {
        self.methods.iter().any(|m| m.uses_sources())
    }
}

/// One subject's normalized train and test features.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectData {
    pub id: String,
    pub condition: Condition,
    pub train: Dataset,
    pub test: Dataset,
}

/// Windows a recording, splits it by repetition and z-scores both sides with
/// statistics of the training side.
pub fn prepare_subject(rec: &Recording, cfg: &ExperimentConfig) -> Result<SubjectData> {
    let (train, test) = build_split(std::slice::from_ref(rec), &cfg.window, &cfg.test_reps)?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidInput(format!(
            "subject {}: repetition split leaves an empty side",
            rec.subject_id
        )));
    }
    let stats = fit_normalizer(&train);
    let (mut train, mut test) = (apply_normalizer(&train, &stats)?, apply_normalizer(&test, &stats)?);
    if cfg.feature_mode == FeatureMode::Averaged {
        train = average_blocks(&train)?;
        test = average_blocks(&test)?;
    }
    Ok(SubjectData {
        id: rec.subject_id.clone(),
        condition: rec.condition,
        train,
        test,
    })
}

pub fn prepare_subjects(recs: &[Recording], cfg: &ExperimentConfig) -> Result<Vec<SubjectData>> {
    recs.par_iter().map(|r| prepare_subject(r, cfg)).collect()
}

/// Target indices with their source indices.
pub fn assign_roles(cfg: &ExperimentConfig, subjects: &[SubjectData]) -> Result<Vec<(usize, Vec<usize>)>> {
    let kind = cfg.experiment;
    let targets: Vec<usize> = (0..subjects.len())
        .filter(|&i| subjects[i].condition == kind.target_condition())
        .filter(|&i| cfg.targets.is_empty() || cfg.targets.contains(&subjects[i].id))
        .collect();
    if targets.is_empty() {
        return Err(Error::InvalidInput(format!(
            "experiment {kind} has no {} target subjects",
            kind.target_condition()
        )));
    }
    targets
        .into_iter()
        .map(|t| {
            let sources: Vec<usize> = (0..subjects.len())
                .filter(|&i| i != t && subjects[i].condition == kind.source_condition())
                .collect();
            if sources.is_empty() && cfg.needs_sources() {
                return Err(Error::InvalidInput(format!(
                    "target {} has no {} source subjects",
                    subjects[t].id,
                    kind.source_condition()
                )));
            }
            Ok((t, sources))
        })
        .collect()
}

/// One (target, seed, size, method) evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub target: String,
    pub seed: u64,
    pub size: usize,
    pub method: Method,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub train_counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub subject: String,
    pub samples: usize,
    pub params: LssvmParams,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub num_classes: usize,
    pub targets: Vec<String>,
    pub sources: Vec<Vec<String>>,
    /// Schedule after truncation.
    pub sizes: Vec<usize>,
    pub cells: Vec<CellResult>,
    pub warnings: Vec<String>,
    pub source_models: Vec<SourceInfo>,
}

impl ExperimentResult {
    pub fn methods(&self) -> &[Method] {
        &self.config.methods
    }

    pub fn cells_for(&self, method: Method, size: usize) -> impl Iterator<Item = &CellResult> {
        self.cells
            .iter()
            .filter(move |c| c.method == method && c.size == size)
    }

    pub fn curve(&self, method: Method) -> Result<LearningCurve> {
        let per_target = self
            .sizes
            .iter()
            .map(|&size| {
                self.targets
                    .iter()
                    .map(|t| {
                        let accs: Vec<f64> = self
                            .cells_for(method, size)
                            .filter(|c| &c.target == t)
                            .map(|c| c.accuracy)
                            .collect();
                        accs.iter().sum::<f64>() / accs.len().max(1) as f64
                    })
                    .collect()
            })
            .collect();
        LearningCurve::from_per_target(self.sizes.clone(), per_target)
    }

    /// Counts pooled over targets and seeds.
    pub fn confusion(&self, method: Method, size: usize) -> Result<ConfusionMatrix> {
        let mut total = ConfusionMatrix::zeros(self.num_classes);
        for c in self.cells_for(method, size) {
            total.add(&c.confusion)?;
        }
        Ok(total)
    }
}

const PERM_STREAM: u64 = 100;
const SOURCE_STREAM: u64 = 101;
const FIT_STREAM: u64 = 102;

/// Runs the experiment on a thread pool of `jobs` workers.
pub fn run_experiment(cfg: &ExperimentConfig, subjects: &[SubjectData], jobs: usize) -> Result<ExperimentResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(cfg, subjects))
}

fn run_in_pool(cfg: &ExperimentConfig, subjects: &[SubjectData]) -> Result<ExperimentResult> {
    cfg.validate()?;
    let first = subjects.first().ok_or(Error::NoData)?;
    let num_classes = first.train.num_classes;
    let dim = first.train.dim();
    for s in subjects {
        if s.train.num_classes != num_classes || s.train.dim() != dim || s.test.dim() != dim {
            return Err(Error::InvalidInput(format!(
                "subject {} does not match the cohort's classes or feature dimension",
                s.id
            )));
        }
    }
    let roles = assign_roles(cfg, subjects)?;

    let mut warnings = Vec::new();
    let mut sizes = cfg.sizes.clone();
    for &(t, _) in &roles {
        let pool = subjects[t].train.len();
        if let Some(&too_big) = sizes.iter().find(|&&n| n > pool) {
            warnings.push(format!(
                "target {}: {} training vectors available, schedule truncated below {too_big}",
                subjects[t].id, pool
            ));
            sizes.retain(|&n| n <= pool);
        }
    }
    if sizes.is_empty() {
        return Err(Error::InvalidInput("no schedule size fits the target training pools".into()));
    }

    // every subject that serves as a source gets one model
    let mut source_ids: Vec<usize> = roles.iter().flat_map(|(_, s)| s.iter().copied()).collect();
    source_ids.sort_unstable();
    source_ids.dedup();
    if !cfg.needs_sources() {
        source_ids.clear();
    }
    let trained: Vec<(LssvmModel, SourceInfo)> = source_ids
        .par_iter()
        .map(|&i| train_source(cfg, &subjects[i], i))
        .collect::<Result<_>>()?;
    let model_of = |i: usize| &trained[source_ids.binary_search(&i).unwrap()].0;

    struct TargetCtx {
        t: usize,
        train_scores: SourceScores,
        test_scores: SourceScores,
    }
    let contexts: Vec<TargetCtx> = roles
        .iter()
        .map(|(t, srcs)| {
            let models: Vec<LssvmModel> = if cfg.needs_sources() {
                srcs.iter().map(|&i| model_of(i).clone()).collect()
            } else {
                Vec::new()
            };
            Ok(TargetCtx {
                t: *t,
                train_scores: source_scores(&models, &subjects[*t].train.features)?,
                test_scores: source_scores(&models, &subjects[*t].test.features)?,
            })
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, u64)> = (0..contexts.len())
        .flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let per_job: Vec<Vec<CellResult>> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let ctx = &contexts[c];
            run_target_seed(cfg, &subjects[ctx.t], ctx.t, seed, &sizes, &ctx.train_scores, &ctx.test_scores)
        })
        .collect::<Result<_>>()?;

    Ok(ExperimentResult {
        config: cfg.clone(),
        num_classes,
        targets: roles.iter().map(|(t, _)| subjects[*t].id.clone()).collect(),
        sources: roles
            .iter()
            .map(|(_, s)| s.iter().map(|&i| subjects[i].id.clone()).collect())
            .collect(),
        sizes,
        cells: per_job.into_iter().flatten().collect(),
        warnings,
        source_models: trained.into_iter().map(|(_, info)| info).collect(),
    })
}

fn train_source(cfg: &ExperimentConfig, subject: &SubjectData, index: usize) -> Result<(LssvmModel, SourceInfo)> {
    let n = subject.train.len();
    let mut idx: Vec<usize> = (0..n).collect();
    if cfg.source_samples > 0 && cfg.source_samples < n {
        idx.shuffle(&mut rng_from(cfg.base_seed, &[SOURCE_STREAM, index as u64]));
        idx.truncate(cfg.source_samples);
        idx.sort_unstable();
    }
    let data = subject.train.subset(&idx);
    let grid = cfg.grid.with_seed(derive_seed(cfg.base_seed, &[SOURCE_STREAM, index as u64, 1]));
    let (model, cv) = fit_selected_gaussian(&data, &grid)?;
    Ok((
        model,
        SourceInfo {
            subject: subject.id.clone(),
            samples: data.len(),
            params: cv.best,
        },
    ))
}

/// Seed for fitting `method` on one (target, seed, size) cell.
pub fn cell_seed(base_seed: u64, target: usize, seed: u64, size_index: usize, method: Method) -> u64 {
    derive_seed(base_seed, &[FIT_STREAM, target as u64, seed, size_index as u64, method as u64])
}

/// Nested training sets: the first `size` entries of one random permutation.
pub fn nested_indices(pool: usize, sizes: &[usize], base_seed: u64, target: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..pool).collect();
    perm.shuffle(&mut rng_from(base_seed, &[PERM_STREAM, target as u64, seed]));
    sizes
        .iter()
        .map(|&n| {
            let mut idx = perm[..n.min(pool)].to_vec();
            idx.sort_unstable();
            idx
        })
        .collect()
}

fn run_target_seed(
    cfg: &ExperimentConfig,
    subject: &SubjectData,
    target: usize,
    seed: u64,
    sizes: &[usize],
    pool_scores: &SourceScores,
    test_scores: &SourceScores,
) -> Result<Vec<CellResult>> {
    let sets = nested_indices(subject.train.len(), sizes, cfg.base_seed, target, seed);
    let mut out = Vec::new();
    for (si, idx) in sets.iter().enumerate() {
        let train = subject.train.subset(idx);
        let scores = pool_scores.subset(idx);
        let cell_seed = |m: Method| cell_seed(cfg.base_seed, target, seed, si, m);
        // MKAL borrows the raw-block bandwidth from the No Transfer selection
        let nt_model = if cfg.methods.contains(&Method::NoTransfer) || cfg.methods.contains(&Method::MKAL) {
            let (m, cv) = fit_no_transfer(&train, &cfg.grid.with_seed(cell_seed(Method::NoTransfer)))?;
            Some((m, cv.best))
        } else {
            None
        };
        for &method in &cfg.methods {
            let grid = cfg.grid.with_seed(cell_seed(method));
            let pred = match method {
                Method::NoTransfer => nt_model.as_ref().unwrap().0.predict(&subject.test.features)?.labels,
                Method::PriorFeatures => fit_prior_features(&train, &scores, &grid)?.0.predict(test_scores)?.labels,
                Method::MA => {
                    let p = select_ma(&train, &scores, &grid, &cfg.ma)?;
                    let (m, _) = fit_ma_with_scores(&train, &scores, p.kernel, p.c, &cfg.ma)?;
                    m.predict(&subject.test.features, test_scores)?.labels
                }
                Method::MKAL => {
                    let gamma = match nt_model.as_ref().unwrap().1.kernel {
                        KernelSpec::Gaussian { gamma } => gamma,
                        KernelSpec::Linear => unreachable!("No Transfer is Gaussian"),
                    };
                    let best = select_mkal(&train, &scores, &grid, &cfg.mkal, gamma, cell_seed(method))?;
                    fit_mkal_with_scores(&train, &scores, &best)?
                        .predict(&subject.test.features, test_scores)?
                        .labels
                }
                Method::HL2L => fit_hl2l_selected(&train, &scores, &grid, cell_seed(method))?
                    .predict(&subject.test.features, test_scores)?
                    .labels,
            };
            let cm = confusion(&pred, &subject.test.labels, subject.test.num_classes)?;
            out.push(CellResult {
                target: subject.id.clone(),
                seed,
                size: sizes[si],
                method,
                accuracy: cm.accuracy(),
                confusion: cm,
                train_counts: train.class_counts(),
            });
        }
    }
    Ok(out)
}

/// Multi Adapt over the Gaussian (C, gamma) grid.
pub fn select_ma(train: &Dataset, scores: &SourceScores, grid: &Grid, cfg: &MaConfig) -> Result<LssvmParams> {
    let folds = effective_folds(grid, train.len());
    let cv = select(&train.labels, train.num_classes, &grid.gaussian_candidates(), folds, grid.seed, |p, tr, va| {
        let (m, _) = fit_ma_with_scores(&train.subset(tr), &scores.subset(tr), p.kernel, p.c, cfg)?;
        let sub = train.subset(va);
        Ok(m.predict(&sub.features, &scores.subset(va))?.labels)
    })?;
    Ok(cv.best)
}

/// MKAL over the (lambda, p) grid at a fixed raw-block bandwidth.
pub fn select_mkal(
    train: &Dataset,
    scores: &SourceScores,
    grid: &Grid,
    mkal: &MkalGrid,
    gamma: f64,
    seed: u64,
) -> Result<MkalConfig> {
    let folds = effective_folds(grid, train.len());
    let cands = mkal.candidates(gamma, seed);
    let cv = select(&train.labels, train.num_classes, &cands, folds, grid.seed, |c, tr, va| {
        let m = fit_mkal_with_scores(&train.subset(tr), &scores.subset(tr), c)?;
        let sub = train.subset(va);
        Ok(m.predict(&sub.features, &scores.subset(va))?.labels)
    })?;
    Ok(cv.best)
}

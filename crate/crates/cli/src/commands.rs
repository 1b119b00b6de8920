use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use myotransfer::harness::report::{analyze_runs, write_outputs, StoredRun};
use myotransfer::harness::{prepare_subjects, run_experiment};
use myotransfer::io::{read_json, read_recording, write_dataset, write_json, write_recording, RecordingMeta};
use myotransfer::synth::{generate_cohort, generate_cohort_recordings};
use myotransfer::{CohortConfig, Condition, ExperimentConfig, Method, Recording, SubjectSpec};
use serde::{Deserialize, Serialize};

use crate::parse;
use crate::{AnalyzeArgs, FeaturesArgs, RunArgs, SynthArgs, WindowArgs};

pub const COHORT_FILE: &str = "cohort.json";

#[derive(Serialize, Deserialize)]
pub struct CohortManifest {
    pub tool: String,
    pub version: String,
    pub config: CohortConfig,
    pub subjects: Vec<SubjectSpec>,
    /// Recording metadata files, relative to the manifest.
    pub recordings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
pub struct FeatureFiles {
    pub subject_id: String,
    pub condition: Condition,
    pub train: String,
    pub test: String,
    pub train_vectors: usize,
    pub test_vectors: usize,
}

#[derive(Serialize, Deserialize)]
pub struct FeaturesManifest {
    pub tool: String,
    pub version: String,
    pub window_ms: f64,
    pub step_ms: f64,
    pub feature_mode: String,
    pub test_reps: Vec<u32>,
    pub subjects: Vec<FeatureFiles>,
}

fn load_config<T: Default + for<'de> Deserialize<'de>>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => read_json(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(T::default()),
    }
}

fn set<T: Copy>(field: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *field = v;
    }
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut cfg: CohortConfig = load_config(a.config.as_deref())?;
    set(&mut cfg.subjects, a.subjects);
    set(&mut cfg.num_classes, a.classes);
    set(&mut cfg.channels, a.channels);
    set(&mut cfg.base_seed, a.seed);
    set(&mut cfg.shift, a.shift);
    set(&mut cfg.amputee_fraction, a.amputee_fraction);
    set(&mut cfg.amputee_degradation, a.amputee_degradation);
    set(&mut cfg.noise_floor, a.noise_floor);
    set(&mut cfg.separation, a.separation);
    set(&mut cfg.variability, a.variability);
    set(&mut cfg.layout.reps, a.reps);
    set(&mut cfg.layout.movement_ms, a.movement_ms);
    set(&mut cfg.layout.rest_ms, a.rest_ms);
    set(&mut cfg.layout.rate_hz, a.rate_hz);

    let specs = generate_cohort(&cfg)?;
    let recs = generate_cohort_recordings(&specs, &cfg.layout)?;
    fs::create_dir_all(&a.out_dir)?;
    let mut files = Vec::new();
    for rec in &recs {
        let meta = write_recording(&a.out_dir, &rec.subject_id, rec)?;
        files.push(file_name(&meta));
    }
    write_json(
        &a.out_dir.join(COHORT_FILE),
        &CohortManifest {
            tool: "myotransfer".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.clone(),
            subjects: specs,
            recordings: files,
        },
    )?;
    let amputees = recs.iter().filter(|r| r.condition == Condition::Amputee).count();
    println!(
        "wrote {} recordings ({} amputee) with {} classes and {} channels to {}",
        recs.len(),
        amputees,
        cfg.num_classes,
        cfg.channels,
        a.out_dir.display()
    );
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Recordings listed in the cohort manifest, or every recording metadata
/// document in the directory, in file-name order.
pub fn load_recordings(dir: &Path) -> Result<Vec<Recording>> {
    let manifest = dir.join(COHORT_FILE);
    let metas: Vec<PathBuf> = if manifest.exists() {
        let m: CohortManifest = read_json(&manifest).with_context(|| format!("reading {}", manifest.display()))?;
        m.recordings.iter().map(|f| dir.join(f)).collect()
    } else {
        let mut found = Vec::new();
        for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") && read_json::<RecordingMeta>(&path).is_ok() {
                found.push(path);
            }
        }
        found.sort();
        found
    };
    if metas.is_empty() {
        bail!("no recordings found in {}", dir.display());
    }
    metas
        .iter()
        .map(|p| read_recording(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

fn apply_window(cfg: &mut ExperimentConfig, w: &WindowArgs) -> Result<()> {
    set(&mut cfg.window.window_ms, w.window_ms);
    set(&mut cfg.window.step_ms, w.step_ms);
    if let Some(m) = &w.feature_mode {
        cfg.feature_mode = m.parse()?;
    }
    if let Some(r) = &w.test_reps {
        cfg.test_reps = parse::list(r, "repetition")?;
    }
    Ok(())
}

pub fn features(a: &FeaturesArgs) -> Result<()> {
    let mut cfg: ExperimentConfig = load_config(a.config.as_deref())?;
    apply_window(&mut cfg, &a.window)?;
    if cfg.test_reps.is_empty() {
        bail!("no test repetitions");
    }
    let recs = load_recordings(&a.input)?;
    let subjects = prepare_subjects(&recs, &cfg)?;
    fs::create_dir_all(&a.out_dir)?;
    let mut files = Vec::new();
    for s in &subjects {
        let (train, test) = (format!("{}_train.csv", s.id), format!("{}_test.csv", s.id));
        write_dataset(&a.out_dir.join(&train), &s.train)?;
        write_dataset(&a.out_dir.join(&test), &s.test)?;
        println!("{}: {} train and {} test vectors of dimension {}", s.id, s.train.len(), s.test.len(), s.train.dim());
        files.push(FeatureFiles {
            subject_id: s.id.clone(),
            condition: s.condition,
            train,
            test,
            train_vectors: s.train.len(),
            test_vectors: s.test.len(),
        });
    }
    write_json(
        &a.out_dir.join("features.json"),
        &FeaturesManifest {
            tool: "myotransfer".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            window_ms: cfg.window.window_ms,
            step_ms: cfg.window.step_ms,
            feature_mode: cfg.feature_mode.to_string(),
            test_reps: cfg.test_reps.clone(),
            subjects: files,
        },
    )?;
    Ok(())
}

pub fn run_config(a: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = load_config(a.config.as_deref())?;
    if let Some(e) = &a.experiment {
        cfg.experiment = e.parse()?;
    }
    if let Some(m) = &a.methods {
        cfg.methods = parse::list(m, "method")?;
    }
    if let Some(s) = &a.sizes {
        cfg.sizes = parse::sizes(s)?;
    }
    if let Some(s) = &a.seeds {
        cfg.seeds = parse::seeds(s)?;
    }
    set(&mut cfg.base_seed, a.base_seed);
    set(&mut cfg.source_samples, a.source_samples);
    if let Some(t) = &a.targets {
        cfg.targets = parse::list(t, "target")?;
    }
    apply_window(&mut cfg, &a.window)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(a: &RunArgs) -> Result<()> {
    let cfg = run_config(a)?;
    if a.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let recs = load_recordings(&a.input)?;
    let subjects = prepare_subjects(&recs, &cfg)?;
    let result = run_experiment(&cfg, &subjects, a.jobs)?;
    let outputs = write_outputs(&a.out_dir, &result)?;
    if let Some(missing) = outputs.iter().find(|f| !a.out_dir.join(f).is_file()) {
        bail!("output {missing} was not written");
    }

    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "experiment {}: {} target(s), {} source model(s), {} seed(s)",
        cfg.experiment,
        result.targets.len(),
        result.source_models.len(),
        cfg.seeds.len()
    );
    print!("{:>14}", "size");
    for n in &result.sizes {
        print!("{n:>8}");
    }
    println!();
    for &m in &cfg.methods {
        let c = result.curve(m)?;
        print!("{:>14}", m.name());
        for v in &c.mean {
            print!("{:>7.1}%", 100.0 * v);
        }
        println!();
    }
    println!("wrote {} files to {}", outputs.len(), a.out_dir.display());
    Ok(())
}

pub fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let runs = a
        .runs
        .iter()
        .map(|r| {
            let (label, dir) = r
                .split_once('=')
                .with_context(|| format!("--run expects LABEL=DIR, got {r:?}"))?;
            if label.is_empty() {
                bail!("empty run label in {r:?}");
            }
            Ok(StoredRun {
                label: label.to_string(),
                dir: PathBuf::from(dir),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let methods: Vec<Method> = match &a.methods {
        Some(m) => parse::list(m, "method")?,
        None => Method::ALL.to_vec(),
    };
    let outputs = analyze_runs(&runs, &methods, a.size, &a.out_dir)?;
    for f in &outputs {
        println!("{}", a.out_dir.join(f).display());
    }
    Ok(())
}

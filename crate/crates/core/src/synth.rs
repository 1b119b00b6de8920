//! Deterministic synthetic EMG cohorts.
//!
//! Each channel carries zero-mean Gaussian noise whose standard deviation is
//! set by the active posture's amplitude profile, mixed across channels by a
//! per-subject gain matrix. Subjects differ by jittered profiles and a
//! perturbed mixing matrix; amputee subjects add noise and dead channels.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::matrix_rows;
use crate::rng::{derive_seed, rng_from, Rng};
use crate::signals::{Condition, Recording};
use crate::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectSpec {
    pub subject_id: String,
    pub seed: u64,
    pub num_classes: usize,
    pub channels: usize,
    /// C×C mixing from muscle sources to electrodes.
    #[serde(with = "matrix_rows")]
    pub gain_matrix: Matrix,
    /// G per-channel amplitudes; entry 0 is the rest posture.
    pub class_profiles: Vec<Vec<f64>>,
    pub noise_floor: f64,
    pub condition: Condition,
    /// Extra noise and channel-dropout rate in [0, 1).
    pub degradation: f64,
    /// Log-scale spread of per-repetition, per-channel activation changes.
    #[serde(default)]
    pub variability: f64,
}

impl SubjectSpec {
    pub fn validate(&self) -> Result<()> {
        let (g, c) = (self.num_classes, self.channels);
        if g < 2 || c == 0 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 classes and 1 channel, got {g} and {c}"
            )));
        }
        if self.gain_matrix.shape() != (c, c) {
            return Err(Error::InvalidInput(format!(
                "gain matrix must be {c}x{c}, got {:?}",
                self.gain_matrix.shape()
            )));
        }
        if self.gain_matrix.clone().lu().determinant().abs() < 1e-12 {
            return Err(Error::InvalidParameter("gain matrix is singular".into()));
        }
        if self.class_profiles.len() != g || self.class_profiles.iter().any(|p| p.len() != c) {
            return Err(Error::InvalidInput("class profiles must be G×C".into()));
        }
        if self.class_profiles.iter().flatten().any(|&a| !(a >= 0.0 && a.is_finite())) {
            return Err(Error::InvalidParameter("amplitudes must be nonnegative".into()));
        }
        if !(self.noise_floor > 0.0 && self.noise_floor.is_finite()) {
            return Err(Error::InvalidParameter("noise floor must be positive".into()));
        }
        if !(self.variability >= 0.0 && self.variability.is_finite()) {
            return Err(Error::InvalidParameter("variability must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.degradation) {
            return Err(Error::InvalidParameter(format!(
                "degradation must lie in [0, 1), got {}",
                self.degradation
            )));
        }
        Ok(())
    }

    /// Channels silenced by degradation. Drawn from the subject seed, and never
    /// all of them.
    pub fn dropped_channels(&self) -> Vec<bool> {
        let mut rng = rng_from(self.seed, &[DROPOUT_STREAM]);
        let mut dropped: Vec<bool> = (0..self.channels)
            .map(|_| rng.random::<f64>() < self.degradation)
            .collect();
        if dropped.iter().all(|&d| d) {
            dropped[0] = false;
        }
        dropped
    }
}

const DROPOUT_STREAM: u64 = 1;
const SIGNAL_STREAM: u64 = 2;

/// Timing of the recorded session.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionLayout {
    pub reps: u32,
    pub movement_ms: f64,
    pub rest_ms: f64,
    pub rate_hz: f64,
}

impl Default for SessionLayout {
    fn default() -> Self {
        SessionLayout {
            reps: 6,
            movement_ms: 1500.0,
            rest_ms: 1000.0,
            rate_hz: 1000.0,
        }
    }
}

impl SessionLayout {
    fn samples(&self, ms: f64) -> Result<usize> {
        if !(ms > 0.0 && ms.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "durations must be positive, got {ms} ms"
            )));
        }
        let n = (ms * self.rate_hz / 1000.0).round() as usize;
        if n == 0 {
            return Err(Error::InvalidParameter(format!(
                "{ms} ms is shorter than one sample at {} Hz",
                self.rate_hz
            )));
        }
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(Error::InvalidParameter("rate must be positive".into()));
        }
        self.samples(self.movement_ms)?;
        self.samples(self.rest_ms)?;
        Ok(())
    }
}

/// Spread of the per-repetition effort gain (log scale).
const EFFORT_SPREAD: f64 = 0.15;
/// Onset and offset ramp of a movement, in ms.
const RAMP_MS: f64 = 150.0;
/// Slow tremor-like modulation of the envelope.
const WOBBLE_HZ: f64 = 1.5;
const WOBBLE_DEPTH: f64 = 0.15;

/// Rest, then for each movement class and repetition a movement segment
/// followed by a rest segment carrying the same repetition index.
pub fn generate_recording(spec: &SubjectSpec, layout: &SessionLayout) -> Result<Recording> {
    spec.validate()?;
    layout.validate()?;
    let (g, c) = (spec.num_classes, spec.channels);
    let n_move = layout.samples(layout.movement_ms)?;
    let n_rest = layout.samples(layout.rest_ms)?;
    let total = n_rest + (g - 1) * layout.reps as usize * (n_move + n_rest);

    let mut rng = rng_from(spec.seed, &[SIGNAL_STREAM]);
    let dropped = spec.dropped_channels();
    let noise = spec.noise_floor * (1.0 + 2.0 * spec.degradation);
    let mut samples = Matrix::zeros(total, c);
    let mut labels = Vec::with_capacity(total);
    let mut reps = Vec::with_capacity(total);
    let mut t0 = 0;

    let mut emit = |class: usize, rep: u32, len: usize, moving: bool, rng: &mut Rng| {
        let effort = if moving {
            (EFFORT_SPREAD * rng.sample::<f64, _>(StandardNormal)).exp()
        } else {
            1.0
        };
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        let profile: Vec<f64> = spec.class_profiles[class]
            .iter()
            .map(|&a| {
                if moving && spec.variability > 0.0 {
                    a * (spec.variability * rng.sample::<f64, _>(StandardNormal)).exp()
                } else {
                    a
                }
            })
            .collect();
        let mut source = vec![0.0; c];
        for s in 0..len {
            let env = if moving {
                effort * envelope(s, len, layout.rate_hz, phase)
            } else {
                1.0
            };
            for (ch, v) in source.iter_mut().enumerate() {
                *v = profile[ch] * env * rng.sample::<f64, _>(StandardNormal);
            }
            let row = t0 + s;
            for e in 0..c {
                let mixed = if dropped[e] {
                    0.0
                } else {
                    (0..c).map(|m| spec.gain_matrix[(e, m)] * source[m]).sum::<f64>()
                };
                samples[(row, e)] = mixed + noise * rng.sample::<f64, _>(StandardNormal);
            }
            labels.push(if moving { class } else { 0 });
            reps.push(rep);
        }
        t0 += len;
    };

    emit(0, 1, n_rest, false, &mut rng);
    for class in 1..g {
        for r in 1..=layout.reps {
            emit(class, r, n_move, true, &mut rng);
            emit(0, r, n_rest, false, &mut rng);
        }
    }
    Recording::new(
        spec.subject_id.clone(),
        spec.condition,
        layout.rate_hz,
        g,
        samples,
        labels,
        reps,
    )
}

/// Raised-cosine onset and offset with a slow sinusoidal wobble.
fn envelope(s: usize, len: usize, rate_hz: f64, phase: f64) -> f64 {
    let ramp = ((RAMP_MS * rate_hz / 1000.0) as usize).clamp(1, len.div_ceil(2).max(1));
    let edge = s.min(len - 1 - s);
    let rise = if edge < ramp {
        0.5 - 0.5 * (std::f64::consts::PI * (edge as f64 + 0.5) / ramp as f64).cos()
    } else {
        1.0
    };
    let t = s as f64 / rate_hz;
    rise * (1.0 + WOBBLE_DEPTH * (std::f64::consts::TAU * WOBBLE_HZ * t + phase).sin())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub subjects: usize,
    pub num_classes: usize,
    pub channels: usize,
    pub base_seed: u64,
    /// Magnitude of the per-subject domain shift.
    pub shift: f64,
    /// The last `round(subjects * amputee_fraction)` subjects are amputees.
    pub amputee_fraction: f64,
    pub amputee_degradation: f64,
    pub noise_floor: f64,
    /// Log-scale spread between movement profiles; smaller is harder.
    pub separation: f64,
    /// Per-repetition activation changes within a subject.
    pub variability: f64,
    pub layout: SessionLayout,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            subjects: 4,
            num_classes: 8,
            channels: 12,
            base_seed: 0,
            shift: 0.3,
            amputee_fraction: 0.0,
            amputee_degradation: 0.3,
            noise_floor: 0.15,
            separation: 0.5,
            variability: 0.1,
            layout: SessionLayout::default(),
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0 {
            return Err(Error::InvalidParameter("need at least one subject".into()));
        }
        if self.num_classes < 2 || self.channels == 0 {
            return Err(Error::InvalidParameter(
                "need at least 2 classes and 1 channel".into(),
            ));
        }
        if !(self.shift >= 0.0 && self.shift.is_finite()) {
            return Err(Error::InvalidParameter("shift must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.amputee_fraction) {
            return Err(Error::InvalidParameter("amputee fraction must lie in [0, 1]".into()));
        }
        if !(self.amputee_degradation > 0.0 && self.amputee_degradation < 1.0) {
            return Err(Error::InvalidParameter("amputee degradation must lie in (0, 1)".into()));
        }
        if !(self.noise_floor > 0.0) {
            return Err(Error::InvalidParameter("noise floor must be positive".into()));
        }
        if !(self.variability >= 0.0 && self.variability.is_finite()) {
            return Err(Error::InvalidParameter("variability must be nonnegative".into()));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::InvalidParameter("separation must be nonnegative".into()));
        }
        self.layout.validate()
    }

    pub fn num_amputees(&self) -> usize {
        ((self.subjects as f64 * self.amputee_fraction) + 0.5).floor() as usize
    }
}

const PROFILE_STREAM: u64 = 10;
const SUBJECT_STREAM: u64 = 11;

/// Shared activation: a common per-channel level and, for each movement
/// class, a standard normal log-scale pattern around it.
struct BaseProfiles {
    common: Vec<f64>,
    patterns: Vec<Vec<f64>>,
}

fn base_profiles(cfg: &CohortConfig) -> BaseProfiles {
    let mut rng = rng_from(cfg.base_seed, &[PROFILE_STREAM]);
    let common = (0..cfg.channels)
        .map(|_| (0.5 * rng.sample::<f64, _>(StandardNormal)).exp())
        .collect();
    let patterns = (1..cfg.num_classes)
        .map(|_| (0..cfg.channels).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    BaseProfiles { common, patterns }
}

/// Rest is silent. Each movement pattern is rotated towards a fresh random
/// one by `weight` in [0, 1], which keeps the spread between classes.
fn subject_profiles(base: &BaseProfiles, separation: f64, weight: f64, rng: &mut Rng) -> Vec<Vec<f64>> {
    let keep = (1.0 - weight * weight).sqrt();
    let mut out = vec![vec![0.0; base.common.len()]];
    for pattern in &base.patterns {
        out.push(
            base.common
                .iter()
                .zip(pattern)
                .map(|(&a, &z)| {
                    let fresh: f64 = rng.sample(StandardNormal);
                    a * (separation * (keep * z + weight * fresh)).exp()
                })
                .collect(),
        );
    }
    out
}

/// Neighbouring electrodes on the forearm ring pick up each other's muscles.
fn base_mixing(c: usize) -> Matrix {
    Matrix::from_fn(c, c, |i, j| {
        let d = (i as isize - j as isize).unsigned_abs();
        let ring = d.min(c - d);
        match ring {
            0 => 1.0,
            1 => 0.3,
            _ => 0.0,
        }
    })
}

pub fn generate_cohort(cfg: &CohortConfig) -> Result<Vec<SubjectSpec>> {
    cfg.validate()?;
    let profiles = base_profiles(cfg);
    let mixing = base_mixing(cfg.channels);
    let c = cfg.channels;
    let first_amputee = cfg.subjects - cfg.num_amputees();
    (0..cfg.subjects)
        .map(|i| {
            let amputee = i >= first_amputee;
            let degradation = if amputee { cfg.amputee_degradation } else { 0.0 };
            let mut attempt = 0u64;
            loop {
                let mut rng = rng_from(cfg.base_seed, &[SUBJECT_STREAM, i as u64, attempt]);
                let weight = (cfg.shift + degradation).min(1.0);
                let class_profiles = subject_profiles(&profiles, cfg.separation, weight, &mut rng);
                let perturb = Matrix::from_fn(c, c, |_, _| rng.sample::<f64, _>(StandardNormal));
                let gain = &mixing * (Matrix::identity(c, c) + perturb * (cfg.shift / (c as f64).sqrt()));
                let spec = SubjectSpec {
                    subject_id: format!("S{:02}", i + 1),
                    seed: derive_seed(cfg.base_seed, &[i as u64]),
                    num_classes: cfg.num_classes,
                    channels: c,
                    gain_matrix: gain,
                    class_profiles,
                    noise_floor: cfg.noise_floor,
                    condition: if amputee { Condition::Amputee } else { Condition::Intact },
                    degradation,
                    variability: cfg.variability,
                };
                if spec.validate().is_ok() || attempt > 100 {
                    spec.validate()?;
                    return Ok(spec);
                }
                attempt += 1;
            }
        })
        .collect()
}

/// Recordings for every subject, generated in parallel.
pub fn generate_cohort_recordings(specs: &[SubjectSpec], layout: &SessionLayout) -> Result<Vec<Recording>> {
    specs.par_iter().map(|s| generate_recording(s, layout)).collect()
}

//! Simulated optical channel and onboard LED-state classifier.
//!
//! The receiver's CNN is replaced by a score surrogate: every received frame
//! gets a score in `[0, 1]` drawn from a distribution conditioned on the true
//! LED state. Two families are available. [`ScoreModel::Flip`] emits hard
//! 0/1 decisions that are wrong with probability `p`. [`ScoreModel::Beta`]
//! draws LED-on scores from `Beta(a_on, b_on)` and LED-off scores from the
//! mirrored `Beta(b_on, a_on)`; its parameters can be fitted to a target AUC
//! and accuracy with [`calibrate_score_model`].
//!
//! Before scoring, [`apply_timing`] models transmitter/receiver clock
//! mismatch, dropped frames and an arbitrary lead-in of idle frames.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use thiserror::Error;

use crate::codec::{LedWaveform, IDLE_LEVEL};
use crate::metrics::{accuracy_at, roc_auc};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("invalid channel configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid calibration target: {0}")]
    InvalidTarget(String),
    #[error(
        "calibration failed: best model reached auc {auc:.5} and accuracy {accuracy:.5} \
         (targets {target_auc:.5} / {target_accuracy:.5}, tolerance {tol})"
    )]
    CalibrationFailed {
        auc: f64,
        accuracy: f64,
        target_auc: f64,
        target_accuracy: f64,
        tol: f64,
    },
    #[error("malformed score trace: {0}")]
    Parse(String),
}

/// Per-frame classifier output.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScores {
    pub scores: Vec<f64>,
    pub fps: f64,
    /// Ground-truth LED state per frame, when known.
    pub truth: Option<Vec<bool>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreRow {
    frame_index: usize,
    score: f64,
    truth: Option<u8>,
}

impl FrameScores {
    pub fn new(scores: Vec<f64>, fps: f64) -> Self {
        FrameScores {
            scores,
            fps,
            truth: None,
        }
    }

    /// Noiseless scores for a known waveform: 1.0 for on, 0.0 for off.
    pub fn from_waveform(waveform: &LedWaveform) -> Self {
        FrameScores {
            scores: waveform.frames.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect(),
            fps: waveform.fps,
            truth: Some(waveform.frames.clone()),
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Serializes as CSV with columns `frame_index,score,truth`. The truth
    /// column holds `0`/`1`, or is empty when truth is unknown.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for (i, &score) in self.scores.iter().enumerate() {
            let truth = self.truth.as_ref().map(|t| t[i] as u8);
            w.serialize(ScoreRow {
                frame_index: i,
                score,
                truth,
            })
            .expect("writing to a Vec cannot fail");
        }
        String::from_utf8(w.into_inner().expect("flush to Vec")).expect("csv output is utf-8")
    }

    /// Parses the CSV trace. Rows must be in frame order starting at 0.
    pub fn from_csv(text: &str, fps: f64) -> Result<Self, ChannelError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut scores = Vec::new();
        let mut truth = Vec::new();
        let mut all_truth = true;
        for (i, row) in reader.deserialize::<ScoreRow>().enumerate() {
            let row = row.map_err(|e| ChannelError::Parse(e.to_string()))?;
            if row.frame_index != i {
                return Err(ChannelError::Parse(format!(
                    "row {i} has frame_index {}",
                    row.frame_index
                )));
            }
            if !(0.0..=1.0).contains(&row.score) {
                return Err(ChannelError::Parse(format!(
                    "score {} at frame {i} is outside [0, 1]",
                    row.score
                )));
            }
            scores.push(row.score);
            match row.truth {
                Some(t @ (0 | 1)) => truth.push(t == 1),
                Some(t) => {
                    return Err(ChannelError::Parse(format!("truth {t} at frame {i} is not 0/1")))
                }
                None => all_truth = false,
            }
        }
        Ok(FrameScores {
            scores,
            fps,
            truth: all_truth.then_some(truth),
        })
    }
}

/// Class-conditional score distribution of the simulated classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScoreModel {
    /// Hard decisions, wrong with probability `p`.
    Flip { p: f64 },
    /// On frames score `Beta(a_on, b_on)`; off frames score `Beta(b_on, a_on)`.
    Beta { a_on: f64, b_on: f64 },
}

impl Default for ScoreModel {
    fn default() -> Self {
        ScoreModel::Flip { p: 0.0 }
    }
}

impl ScoreModel {
    pub fn validate(&self) -> Result<(), ChannelError> {
        match *self {
            ScoreModel::Flip { p } if !(0.0..=1.0).contains(&p) => Err(ChannelError::InvalidConfig(
                format!("flip probability {p} is outside [0, 1]"),
            )),
            ScoreModel::Beta { a_on, b_on }
                if !(a_on.is_finite() && b_on.is_finite() && a_on > 0.0 && b_on > 0.0) =>
            {
                Err(ChannelError::InvalidConfig(format!(
                    "beta parameters ({a_on}, {b_on}) must be positive"
                )))
            }
            _ => Ok(()),
        }
    }

    /// The same model with the classes swapped.
    pub fn mirrored(&self) -> ScoreModel {
        match *self {
            ScoreModel::Flip { p } => ScoreModel::Flip { p: 1.0 - p },
            ScoreModel::Beta { a_on, b_on } => ScoreModel::Beta {
                a_on: b_on,
                b_on: a_on,
            },
        }
    }
}

/// Draws class-conditional scores from a [`ScoreModel`].
pub struct ScoreSampler {
    kind: SamplerKind,
}

enum SamplerKind {
    Flip(f64),
    Beta(Beta<f64>),
}

impl ScoreSampler {
    pub fn new(model: &ScoreModel) -> Result<Self, ChannelError> {
        model.validate()?;
        let kind = match *model {
            ScoreModel::Flip { p } => SamplerKind::Flip(p),
            ScoreModel::Beta { a_on, b_on } => SamplerKind::Beta(
                Beta::new(a_on, b_on).map_err(|e| ChannelError::InvalidConfig(e.to_string()))?,
            ),
        };
        Ok(ScoreSampler { kind })
    }

    pub fn sample<R: Rng + ?Sized>(&self, led_on: bool, rng: &mut R) -> f64 {
        match &self.kind {
            SamplerKind::Flip(p) => {
                let wrong = *p > 0.0 && rng.random_bool(*p);
                if led_on != wrong {
                    1.0
                } else {
                    0.0
                }
            }
            // 1 - X is Beta(b, a) when X is Beta(a, b).
            SamplerKind::Beta(dist) => {
                let x = dist.sample(rng).clamp(0.0, 1.0);
                if led_on {
                    x
                } else {
                    1.0 - x
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub score_model: ScoreModel,
    /// Received frames per transmitted frame; 1.1 stretches every bit by 10%.
    pub drift: f64,
    pub drop_prob: f64,
    /// Idle frames prepended before the waveform.
    pub lead_offset: usize,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            score_model: ScoreModel::default(),
            drift: 1.0,
            drop_prob: 0.0,
            lead_offset: 0,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub const DRIFT_RANGE: (f64, f64) = (0.9, 1.1);

    pub fn validate(&self) -> Result<(), ChannelError> {
        self.score_model.validate()?;
        let (lo, hi) = Self::DRIFT_RANGE;
        if !(lo..=hi).contains(&self.drift) {
            return Err(ChannelError::InvalidConfig(format!(
                "drift {} is outside [{lo}, {hi}]",
                self.drift
            )));
        }
        self.validate_timing()
    }

    fn validate_timing(&self) -> Result<(), ChannelError> {
        if !(self.drift.is_finite() && self.drift > 0.0) {
            return Err(ChannelError::InvalidConfig(format!("drift {} must be positive", self.drift)));
        }
        if !(0.0..1.0).contains(&self.drop_prob) {
            return Err(ChannelError::InvalidConfig(format!(
                "drop_prob {} is outside [0, 1)",
                self.drop_prob
            )));
        }
        Ok(())
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn apply_timing_with<R: Rng + ?Sized>(
    waveform: &LedWaveform,
    config: &ChannelConfig,
    rng: &mut R,
) -> LedWaveform {
    let src = &waveform.frames;
    // Received frame i shows transmitted frame floor(i / drift).
    let mut resampled = Vec::with_capacity((src.len() as f64 * config.drift).ceil() as usize + 1);
    for i in 0.. {
        let j = (i as f64 / config.drift).floor() as usize;
        match src.get(j) {
            Some(&f) => resampled.push(f),
            None => break,
        }
    }
    let mut frames = Vec::with_capacity(config.lead_offset + resampled.len());
    frames.extend(std::iter::repeat_n(IDLE_LEVEL, config.lead_offset));
    if config.drop_prob > 0.0 {
        frames.extend(resampled.into_iter().filter(|_| !rng.random_bool(config.drop_prob)));
    } else {
        frames.extend(resampled);
    }
    LedWaveform::new(frames, waveform.fps)
}

/// Resamples for clock drift, drops frames, then prepends `lead_offset` idle
/// frames. Deterministic in `config.seed`.
///
/// Only the timing fields are checked here, so any positive drift is
/// accepted; [`sample_scores`] additionally enforces
/// [`ChannelConfig::DRIFT_RANGE`].
pub fn apply_timing(waveform: &LedWaveform, config: &ChannelConfig) -> Result<LedWaveform, ChannelError> {
    config.validate_timing()?;
    Ok(apply_timing_with(waveform, config, &mut config.rng()))
}

/// Runs the waveform through the channel and scores every received frame.
///
/// A single generator seeded from `config.seed` drives both the frame drops
/// and the scores, so equal inputs give bit-identical traces.
pub fn sample_scores(waveform: &LedWaveform, config: &ChannelConfig) -> Result<FrameScores, ChannelError> {
    config.validate()?;
    let sampler = ScoreSampler::new(&config.score_model)?;
    let mut rng = config.rng();
    let received = apply_timing_with(waveform, config, &mut rng);
    let scores = received
        .frames
        .iter()
        .map(|&on| sampler.sample(on, &mut rng))
        .collect();
    Ok(FrameScores {
        scores,
        fps: received.fps,
        truth: Some(received.frames),
    })
}

/// Accuracy at threshold 0.5 of the symmetric beta pair.
pub fn beta_accuracy(a_on: f64, b_on: f64) -> f64 {
    1.0 - beta_reg(a_on, b_on, 0.5)
}

/// Area under the ROC curve of the symmetric beta pair,
/// `P(X > 1 - Y)` for independent `X, Y ~ Beta(a_on, b_on)`.
///
/// Integrates the on density against the off CDF `I_x(b, a)` with tanh-sinh
/// quadrature, the left half in `x` and the right half in `u = 1 - x`.
pub fn beta_auc(a_on: f64, b_on: f64) -> f64 {
    let (a, b) = (a_on, b_on);
    let ln_b = ln_beta(a, b);
    // On x in [0, 1/2]: x^(a-1) * (1-x)^(b-1) / B * I_x(b, a).
    let left = half_integral(a, |x| (b - 1.0) * (-x).ln_1p() - ln_b + beta_reg(b, a, x).ln());
    // On u = 1 - x in [0, 1/2]: u^(b-1) * (1-u)^(a-1) / B * (1 - I_u(a, b)).
    let right = half_integral(b, |u| (a - 1.0) * (-u).ln_1p() - ln_b + (-beta_reg(a, b, u)).ln_1p());
    left + right
}

/// `∫ v^(shape-1) exp(ln_g(v)) dv` over `[0, 1/2]`, where `g` carries the
/// rest of the integrand and is smooth at zero. Below shape one the singular
/// factor is absorbed by substituting `w = v^shape`; otherwise the integrand
/// is used directly, which keeps peaked densities resolvable. Working in logs
/// avoids underflow for large shapes.
fn half_integral(shape: f64, ln_g: impl Fn(f64) -> f64) -> f64 {
    if shape < 1.0 {
        let f = |w: f64| ln_g(w.powf(1.0 / shape)).exp();
        panels(f, 0.5f64.powf(shape)) / shape
    } else {
        let f = |v: f64| {
            if v <= 0.0 {
                return 0.0;
            }
            ((shape - 1.0) * v.ln() + ln_g(v)).exp()
        };
        panels(f, 0.5)
    }
}

/// Tanh-sinh over `[0, hi]` in equal panels. A single panel can stop early
/// on an integrand that is negligible over most of the range and climbs
/// steeply at one end.
fn panels(f: impl Fn(f64) -> f64, hi: f64) -> f64 {
    use quadrature::double_exponential::integrate;
    const TOL: f64 = 1e-14;
    const PANELS: usize = 8;
    let h = hi / PANELS as f64;
    (0..PANELS)
        .map(|k| integrate(&f, k as f64 * h, (k + 1) as f64 * h, TOL).integral)
        .sum()
}

/// Result of [`calibrate_score_model`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub model: ScoreModel,
    pub analytic_auc: f64,
    pub analytic_accuracy: f64,
    pub empirical_auc: f64,
    pub empirical_accuracy: f64,
    pub samples_per_class: usize,
}

/// Samples drawn per class when verifying a calibrated model.
pub const CALIBRATION_SAMPLES: usize = 100_000;
const CALIBRATION_SEED: u64 = 0x5eed_cab1;

/// Smallest `b_on` the search considers; smaller values put almost all mass
/// at the ends of the interval.
const MIN_SHAPE: f64 = 1e-3;

fn b_for_accuracy(a: f64, target_acc: f64) -> f64 {
    // Accuracy falls from ~1 at b -> 0 to 0.5 at b = a.
    let (mut lo, mut hi) = (MIN_SHAPE.ln(), a.ln());
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if beta_accuracy(a, mid.exp()) > target_acc {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Fits a symmetric beta pair to a target AUC and accuracy at 0.5.
///
/// For each `a_on` on a log grid, `b_on` is solved by bisection so that the
/// accuracy is exact; the `a_on` whose AUC is closest to the target is then
/// refined by golden-section search on `ln a_on`. The winner is verified on
/// [`CALIBRATION_SAMPLES`] draws per class with a fixed seed and rejected if
/// either empirical metric misses its target by more than `tol`.
///
/// At a fixed accuracy the family's AUC has a floor, approached as both
/// shapes grow (about 0.9904 at accuracy 0.951). Targets below it end at the
/// large-shape edge of the grid with a logged warning.
pub fn calibrate_score_model(target_auc: f64, target_acc: f64, tol: f64) -> Result<Calibration, ChannelError> {
    if !(0.5 < target_acc && target_acc <= target_auc && target_auc < 1.0) {
        return Err(ChannelError::InvalidTarget(format!(
            "need 0.5 < accuracy <= auc < 1, got accuracy {target_acc} and auc {target_auc}"
        )));
    }
    if !(tol > 0.0) {
        return Err(ChannelError::InvalidTarget(format!("tolerance {tol} must be positive")));
    }

    let miss = |ln_a: f64| {
        let a = ln_a.exp();
        (beta_auc(a, b_for_accuracy(a, target_acc)) - target_auc).abs()
    };

    // a_on from 2^-2 to 2^7 in sixth-octave steps.
    let grid: Vec<f64> = (0..=54).map(|k| (-2.0 + k as f64 / 6.0) * std::f64::consts::LN_2).collect();
    let misses: Vec<f64> = grid.iter().map(|&g| miss(g)).collect();
    let best = misses
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i)
        .expect("grid is not empty");

    let (mut lo, mut hi) = (
        grid[best.saturating_sub(1)],
        grid[(best + 1).min(grid.len() - 1)],
    );
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (miss(x1), miss(x2));
    for _ in 0..40 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = miss(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = miss(x2);
        }
    }
    let ln_a = if f1.min(f2) < misses[best] {
        if f1 <= f2 {
            x1
        } else {
            x2
        }
    } else {
        grid[best]
    };

    let a_on = ln_a.exp();
    let b_on = b_for_accuracy(a_on, target_acc);
    let analytic_auc = beta_auc(a_on, b_on);
    if (analytic_auc - target_auc).abs() > 1e-6 {
        log::warn!(
            "AUC {target_auc} is out of reach at accuracy {target_acc}; closest beta pair gives {analytic_auc}"
        );
    }
    let model = ScoreModel::Beta { a_on, b_on };
    let (empirical_auc, empirical_accuracy) = empirical_metrics(&model, CALIBRATION_SAMPLES, CALIBRATION_SEED)?;
    let calibration = Calibration {
        model,
        analytic_auc,
        analytic_accuracy: beta_accuracy(a_on, b_on),
        empirical_auc,
        empirical_accuracy,
        samples_per_class: CALIBRATION_SAMPLES,
    };
    if (empirical_auc - target_auc).abs() > tol || (empirical_accuracy - target_acc).abs() > tol {
        return Err(ChannelError::CalibrationFailed {
            auc: empirical_auc,
            accuracy: empirical_accuracy,
            target_auc,
            target_accuracy: target_acc,
            tol,
        });
    }
    Ok(calibration)
}

/// Empirical `(auc, accuracy at 0.5)` of a model over `per_class` on and
/// `per_class` off frames.
pub fn empirical_metrics(model: &ScoreModel, per_class: usize, seed: u64) -> Result<(f64, f64), ChannelError> {
    let sampler = ScoreSampler::new(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<bool> = (0..2 * per_class).map(|i| i < per_class).collect();
    let scores: Vec<f64> = labels.iter().map(|&l| sampler.sample(l, &mut rng)).collect();
    let auc = roc_auc(&scores, &labels)
        .map_err(|e| ChannelError::InvalidConfig(e.to_string()))?
        .auc;
    let (acc, _) = accuracy_at(&scores, &labels, 0.5).map_err(|e| ChannelError::InvalidConfig(e.to_string()))?;
    Ok((auc, acc))
}

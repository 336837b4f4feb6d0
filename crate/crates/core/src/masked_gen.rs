//! Base-layer generation by iterative unmasking.
//!
//! Decoding starts with every free position masked. Each iteration asks the
//! predictor for logits (optionally guided by the unconditional branch),
//! samples a token for every masked position, scores it, and keeps only the
//! most confident samples; the rest are masked again. The number of positions
//! still masked after iteration `l` follows the mask schedule, reaching zero
//! at the last iteration.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::ops::Range;

use rand::distr::Open01;
use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictor::{Condition, LogitMatrix, MaskedSequence, PredictorError, TokenPredictor};
use crate::util::{argmax, softmax};
use crate::{seeded_rng, Rng};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid decode config: {0}")]
    InvalidConfig(String),
    #[error("schedule progress {0} outside [0, 1]")]
    ProgressOutOfRange(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("position {position} outside sequence of length {len}")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("token {token} outside vocab {vocab}")]
    TokenOutOfVocab { token: usize, vocab: usize },
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

pub type Result<T> = std::result::Result<T, DecodeError>;

/// Fraction of positions still masked at progress `τ ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSchedule {
    /// `cos(π τ / 2)`
    #[default]
    Cosine,
    /// `1 - τ`
    Linear,
}

impl MaskSchedule {
    pub fn ratio(self, tau: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(DecodeError::ProgressOutOfRange(tau));
        }
        Ok(match self {
            MaskSchedule::Cosine => (FRAC_PI_2 * tau).cos(),
            MaskSchedule::Linear => 1.0 - tau,
        })
    }

    /// Masked count left after each of `iterations` steps over `n_free` positions:
    /// `ceil(n_free · ratio(l / L))`, with the last entry forced to 0.
    pub fn masked_counts(self, n_free: usize, iterations: usize) -> Vec<usize> {
        (1..=iterations)
            .map(|l| {
                if l == iterations {
                    return 0;
                }
                let r = self.ratio(l as f64 / iterations as f64).unwrap_or(0.0);
                // cos(π/3) = 0.5000000000000001 must still give n/2
                ((n_free as f64 * r - 1e-9).ceil().max(0.0) as usize).min(n_free)
            })
            .collect()
    }
}

/// Cosine mask ratio `cos(π τ / 2)`.
pub fn mask_ratio(tau: f64) -> Result<f64> {
    MaskSchedule::Cosine.ratio(tau)
}

/// How a token is drawn for a masked position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    Categorical,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeConfig {
    /// `L`
    pub iterations: usize,
    pub cfg_scale: f64,
    /// Initial Gumbel temperature on confidences; annealed linearly to 0.
    pub temperature: f64,
    pub seed: u64,
    pub schedule: MaskSchedule,
    pub sampling: Sampling,
    /// When false, the unconditional branch is never queried.
    pub guidance: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            iterations: 10,
            cfg_scale: 4.0,
            temperature: 1.0,
            seed: 0,
            schedule: MaskSchedule::Cosine,
            sampling: Sampling::Categorical,
            guidance: true,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(DecodeError::InvalidConfig("iterations must be at least 1".into()));
        }
        if !(self.cfg_scale >= 0.0 && self.cfg_scale.is_finite()) {
            return Err(DecodeError::InvalidConfig(format!("cfg_scale {} must be finite and >= 0", self.cfg_scale)));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(DecodeError::InvalidConfig(format!("temperature {} must be finite and >= 0", self.temperature)));
        }
        Ok(())
    }
}

/// Draws `τ ~ U(0, 1)` and masks a uniform subset of
/// `max(1, round(n · cos(π τ / 2)))` positions. Returns sorted positions.
pub fn sample_training_mask(n: usize, rng: &mut Rng) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let tau: f64 = rng.random();
    let count = ((n as f64 * (FRAC_PI_2 * tau).cos()).round() as usize).clamp(1, n);
    let mut picked = sample(rng, n, count).into_vec();
    picked.sort_unstable();
    picked
}

/// Classifier-free guidance on logits: `(1 + s) · cond − s · uncond`.
pub fn cfg_logits(cond: &LogitMatrix, uncond: &LogitMatrix, scale: f64) -> Result<LogitMatrix> {
    if cond.rows() != uncond.rows() || cond.cols() != uncond.cols() {
        return Err(DecodeError::Shape(format!(
            "conditional {}x{} vs unconditional {}x{}",
            cond.rows(),
            cond.cols(),
            uncond.rows(),
            uncond.cols()
        )));
    }
    let data = cond.data().iter().zip(uncond.data()).map(|(c, u)| (1.0 + scale) * c - scale * u).collect();
    Ok(LogitMatrix::new(cond.rows(), cond.cols(), data)?)
}

/// Per-position decoder state.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeState {
    pub tokens: MaskedSequence,
    pub committed: Vec<bool>,
    pub confidence: Vec<f64>,
    pub iteration: usize,
}

impl DecodeState {
    fn new(n: usize, pinned: &BTreeMap<usize, usize>) -> Self {
        let mut tokens = MaskedSequence::fully_masked(n);
        let mut committed = vec![false; n];
        let mut confidence = vec![f64::NEG_INFINITY; n];
        for (&i, &t) in pinned {
            tokens.set(i, Some(t));
            committed[i] = true;
            confidence[i] = f64::INFINITY;
        }
        DecodeState { tokens, committed, confidence, iteration: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub tokens: Vec<usize>,
    /// Free positions still masked after each iteration.
    pub masked_counts: Vec<usize>,
    /// Guided predictor evaluations (one per iteration, counting a
    /// conditional/unconditional pair as one pass).
    pub predictor_passes: usize,
    /// Token state after each iteration, for inspection and plotting.
    pub history: Vec<MaskedSequence>,
}

fn guided_logits<P: TokenPredictor + ?Sized>(
    pred: &P,
    tokens: &MaskedSequence,
    condition: &Condition,
    layer: usize,
    cfg_scale: f64,
    guidance: bool,
) -> Result<LogitMatrix> {
    let cond = pred.predict_logits(tokens, condition, layer)?;
    if !guidance {
        return Ok(cond);
    }
    let uncond = pred.predict_logits(tokens, &Condition::Null, layer)?;
    cfg_logits(&cond, &uncond, cfg_scale)
}

pub(crate) fn draw(probs: &[f64], sampling: Sampling, rng: &mut Rng) -> usize {
    match sampling {
        Sampling::Greedy => argmax(probs),
        Sampling::Categorical => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return k;
                }
            }
            // rounding left u above the cumulative total
            probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
        }
    }
}

fn gumbel(rng: &mut Rng) -> f64 {
    let u: f64 = rng.sample(Open01);
    -(-u.ln()).ln()
}

/// Generates a base-layer token row of length `n`.
///
/// Positions in `pinned` are committed from the start and never change.
pub fn iterative_decode<P: TokenPredictor + ?Sized>(
    pred: &P,
    n: usize,
    condition: &Condition,
    cfg: &DecodeConfig,
    pinned: &BTreeMap<usize, usize>,
) -> Result<DecodeOutcome> {
    cfg.validate()?;
    let vocab = pred.vocab_size();
    for (&position, &token) in pinned {
        if position >= n {
            return Err(DecodeError::PositionOutOfRange { position, len: n });
        }
        if token >= vocab {
            return Err(DecodeError::TokenOutOfVocab { token, vocab });
        }
    }
    let iterations = cfg.iterations;
    let n_free = n - pinned.len();
    let targets = cfg.schedule.masked_counts(n_free, iterations);
    let mut rng = seeded_rng(cfg.seed);
    let mut state = DecodeState::new(n, pinned);
    let mut outcome = DecodeOutcome {
        tokens: Vec::new(),
        masked_counts: Vec::with_capacity(iterations),
        predictor_passes: 0,
        history: Vec::with_capacity(iterations),
    };

    for (l, &target) in (1..=iterations).zip(&targets) {
        state.iteration = l;
        let masked: Vec<usize> = (0..n).filter(|&i| !state.committed[i]).collect();
        if !masked.is_empty() {
            let logits = guided_logits(pred, &state.tokens, condition, 0, cfg.cfg_scale, cfg.guidance)?;
            outcome.predictor_passes += 1;
            if logits.rows() != n || logits.cols() != vocab {
                return Err(DecodeError::Shape(format!(
                    "predictor returned {}x{}, expected {n}x{vocab}",
                    logits.rows(),
                    logits.cols()
                )));
            }
            let temperature = cfg.temperature * (1.0 - l as f64 / iterations as f64);
            let mut sampled = Vec::with_capacity(masked.len());
            for &i in &masked {
                let probs = softmax(logits.row(i));
                let token = draw(&probs, cfg.sampling, &mut rng);
                let noise = gumbel(&mut rng);
                let log_p = probs[token].ln().max(f64::MIN);
                state.confidence[i] = log_p + temperature * noise;
                sampled.push((i, token));
            }
            let keep = masked.len() - target.min(masked.len());
            let mut ranked = sampled.clone();
            // stable sort: equal confidences commit the lower index first
            ranked.sort_by(|a, b| state.confidence[b.0].total_cmp(&state.confidence[a.0]));
            for &(i, token) in &ranked[..keep] {
                state.tokens.set(i, Some(token));
                state.committed[i] = true;
                state.confidence[i] = f64::INFINITY;
            }
            for &(i, _) in &ranked[keep..] {
                state.tokens.set(i, None);
            }
        }
        outcome.masked_counts.push(state.committed.iter().filter(|c| !**c).count());
        outcome.history.push(state.tokens.clone());
    }

    outcome.tokens = state
        .tokens
        .tokens()
        .iter()
        .map(|t| t.expect("every position is committed after the last iteration"))
        .collect();
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintOutcome {
    pub tokens: Vec<usize>,
    /// `None` when the region was empty and the input was returned unchanged.
    pub decode: Option<DecodeOutcome>,
}

impl InpaintOutcome {
    pub fn is_noop(&self) -> bool {
        self.decode.is_none()
    }
}

/// Regenerates the positions covered by `regions`, pinning everything else.
pub fn inpaint<P: TokenPredictor + ?Sized>(
    pred: &P,
    existing: &[usize],
    regions: &[Range<usize>],
    condition: &Condition,
    cfg: &DecodeConfig,
) -> Result<InpaintOutcome> {
    let n = existing.len();
    let mut in_region = vec![false; n];
    for r in regions {
        if r.end > n || r.start > r.end {
            return Err(DecodeError::PositionOutOfRange { position: r.end.max(r.start), len: n });
        }
        in_region[r.clone()].iter_mut().for_each(|x| *x = true);
    }
    if !in_region.iter().any(|x| *x) {
        return Ok(InpaintOutcome { tokens: existing.to_vec(), decode: None });
    }
    let pinned: BTreeMap<usize, usize> = (0..n).filter(|&i| !in_region[i]).map(|i| (i, existing[i])).collect();
    let decode = iterative_decode(pred, n, condition, cfg, &pinned)?;
    Ok(InpaintOutcome { tokens: decode.tokens.clone(), decode: Some(decode) })
}

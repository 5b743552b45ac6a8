//! Constrained sampling loop.

mod source;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{Backend, ConstraintError, Guide};
use crate::vocab::{TokenId, TokenMask};

pub use source::{LogitSource, MockAdversarial, MockRandom, MockScripted, SourceError};

pub const DEFAULT_MAX_TOKENS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub backend: Backend,
    pub max_tokens: usize,
    pub temperature: f32,
    pub seed: u64,
    pub greedy: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            backend: Backend::None,
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: 1.0,
            seed: 0,
            greedy: false,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.max_tokens == 0 {
            return Err(DecodeError::Config("max_tokens must be at least 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(DecodeError::Config(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Eos,
    MaxTokens,
    DeadEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeOutput {
    /// Emitted tokens, eos excluded.
    pub token_ids: Vec<TokenId>,
    #[serde(skip)]
    pub text: Vec<u8>,
    pub finish_reason: FinishReason,
    /// Allowed-token count at each step.
    pub mask_popcounts: Vec<usize>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("dead end after {} tokens: no token allowed and eos not permitted", prefix.len())]
    DeadEnd { prefix: Vec<TokenId>, text: Vec<u8> },
    #[error("score vector has length {got}, vocabulary has {expected}")]
    ScoreLength { expected: usize, got: usize },
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("bad decode config: {0}")]
    Config(String),
}

fn score(x: f32) -> f32 {
    if x.is_nan() {
        f32::NEG_INFINITY
    } else {
        x
    }
}

/// Picks a token from `mask` given raw scores. Disallowed tokens are never
/// chosen; NaN counts as negative infinity.
///
/// Greedy (or temperature 0) takes the highest score, lowest id on ties.
/// Otherwise samples from the softmax at `temperature`; if some allowed
/// score is +inf the choice is uniform among those, and if all are -inf it
/// is uniform over the mask.
pub fn sample_masked(
    scores: &[f32],
    mask: &TokenMask,
    cfg: &DecodeConfig,
    rng: &mut impl Rng,
) -> Option<TokenId> {
    let allowed: Vec<TokenId> = mask.iter_ones().collect();
    if allowed.is_empty() {
        return None;
    }
    if cfg.greedy || cfg.temperature == 0.0 {
        let mut best = allowed[0];
        for &t in &allowed[1..] {
            if score(scores[t as usize]) > score(scores[best as usize]) {
                best = t;
            }
        }
        return Some(best);
    }
    let inf: Vec<TokenId> = allowed
        .iter()
        .copied()
        .filter(|&t| scores[t as usize] == f32::INFINITY)
        .collect();
    if !inf.is_empty() {
        return Some(inf[rng.gen_range(0..inf.len())]);
    }
    let max = allowed
        .iter()
        .map(|&t| score(scores[t as usize]))
        .fold(f32::NEG_INFINITY, f32::max);
    if max == f32::NEG_INFINITY {
        return Some(allowed[rng.gen_range(0..allowed.len())]);
    }
    let t = cfg.temperature as f64;
    let weights: Vec<f64> = allowed
        .iter()
        .map(|&i| ((score(scores[i as usize]) as f64 - max as f64) / t).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut r = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if r < *w {
            return Some(allowed[i]);
        }
        r -= w;
    }
    // Rounding left r just above zero; fall back to the last positive weight.
    weights.iter().rposition(|w| *w > 0.0).map(|i| allowed[i])
}

/// One constrained step: choose a token allowed in `state` and advance.
pub fn decode_step<G: Guide>(
    guide: &G,
    state: &G::State,
    scores: &[f32],
    cfg: &DecodeConfig,
    rng: &mut impl Rng,
) -> Result<(TokenId, G::State), DecodeError> {
    let mask = guide.mask(state)?;
    if scores.len() != mask.len() {
        return Err(DecodeError::ScoreLength {
            expected: mask.len(),
            got: scores.len(),
        });
    }
    let t = sample_masked(scores, &mask, cfg, rng).ok_or(DecodeError::DeadEnd {
        prefix: Vec::new(),
        text: Vec::new(),
    })?;
    Ok((t, guide.advance(state, t)?))
}

/// Runs the sampling loop until eos or `max_tokens`. The mask for a step
/// is computed on the rayon pool while the source produces scores.
pub fn decode<G: Guide>(
    source: &mut dyn LogitSource,
    guide: &G,
    cfg: &DecodeConfig,
) -> Result<DecodeOutput, DecodeError> {
    cfg.validate()?;
    let vocab = guide.vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = guide.start();
    let mut history: Vec<TokenId> = Vec::new();
    let mut popcounts = Vec::new();
    while history.len() < cfg.max_tokens {
        let (mask, scores) = rayon::join(|| guide.mask(&state), || source.scores(&history));
        let (mask, scores) = (mask?, scores?);
        if scores.len() != vocab.len() {
            return Err(DecodeError::ScoreLength {
                expected: vocab.len(),
                got: scores.len(),
            });
        }
        popcounts.push(mask.count_ones());
        let Some(t) = sample_masked(&scores, &mask, cfg, &mut rng) else {
            return Err(DecodeError::DeadEnd {
                text: vocab.detokenize(&history),
                prefix: history,
            });
        };
        state = guide.advance(&state, t)?;
        if t == vocab.eos_id() {
            return Ok(DecodeOutput {
                text: vocab.detokenize(&history),
                token_ids: history,
                finish_reason: FinishReason::Eos,
                mask_popcounts: popcounts,
            });
        }
        history.push(t);
    }
    Ok(DecodeOutput {
        text: vocab.detokenize(&history),
        token_ids: history,
        finish_reason: FinishReason::MaxTokens,
        mask_popcounts: popcounts,
    })
}

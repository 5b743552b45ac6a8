use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::constraint::{Constraint, ConstraintState, Guide};
use crate::vocab::TokenId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("logit source failed: {0}")]
    Failed(String),
}

/// Produces one score per vocabulary token given the tokens emitted so far.
pub trait LogitSource: Send {
    fn scores(&mut self, history: &[TokenId]) -> Result<Vec<f32>, SourceError>;
}

impl<T: LogitSource + ?Sized> LogitSource for Box<T> {
    fn scores(&mut self, history: &[TokenId]) -> Result<Vec<f32>, SourceError> {
        (**self).scores(history)
    }
}

fn history_seed(seed: u64, history: &[TokenId]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ seed;
    for b in seed
        .to_le_bytes()
        .into_iter()
        .chain(history.iter().flat_map(|t| t.to_le_bytes()))
    {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Scores drawn uniformly from [-5, 5), a pure function of seed and history.
#[derive(Debug, Clone)]
pub struct MockRandom {
    seed: u64,
    vocab_size: usize,
}

impl MockRandom {
    pub fn new(seed: u64, vocab_size: usize) -> Self {
        Self { seed, vocab_size }
    }
}

impl LogitSource for MockRandom {
    fn scores(&mut self, history: &[TokenId]) -> Result<Vec<f32>, SourceError> {
        let mut rng = ChaCha8Rng::seed_from_u64(history_seed(self.seed, history));
        Ok((0..self.vocab_size)
            .map(|_| rng.gen_range(-5.0f32..5.0))
            .collect())
    }
}

/// Puts `boost` on the next scripted token and 0 elsewhere; once the
/// script is exhausted, boosts eos.
#[derive(Debug, Clone)]
pub struct MockScripted {
    script: Vec<TokenId>,
    boost: f32,
    vocab_size: usize,
    eos_id: TokenId,
}

impl MockScripted {
    pub fn new(script: Vec<TokenId>, boost: f32, vocab_size: usize, eos_id: TokenId) -> Self {
        Self {
            script,
            boost,
            vocab_size,
            eos_id,
        }
    }
}

impl LogitSource for MockScripted {
    fn scores(&mut self, history: &[TokenId]) -> Result<Vec<f32>, SourceError> {
        let mut s = vec![0.0; self.vocab_size];
        let next = self
            .script
            .get(history.len())
            .copied()
            .unwrap_or(self.eos_id);
        if let Some(x) = s.get_mut(next as usize) {
            *x = self.boost;
        }
        Ok(s)
    }
}

/// Pushes probability mass onto tokens the constraint forbids.
///
/// With a constraint attached, the history is replayed to find the current
/// mask and every forbidden token gets a huge or infinite score, while
/// allowed tokens get small random scores (occasionally NaN). Without one,
/// a random half of the vocabulary is boosted.
#[derive(Debug, Clone)]
pub struct MockAdversarial {
    seed: u64,
    vocab_size: usize,
    constraint: Option<Constraint>,
    replay: Option<(Vec<TokenId>, ConstraintState)>,
}

impl MockAdversarial {
    pub fn new(seed: u64, vocab_size: usize) -> Self {
        Self {
            seed,
            vocab_size,
            constraint: None,
            replay: None,
        }
    }

    pub fn against(seed: u64, constraint: Constraint) -> Self {
        Self {
            seed,
            vocab_size: constraint.vocab().len(),
            constraint: Some(constraint),
            replay: None,
        }
    }

    fn state_for(&mut self, c: &Constraint, history: &[TokenId]) -> Option<ConstraintState> {
        let (mut done, mut state) = match self.replay.take() {
            Some((h, s)) if history.starts_with(&h) => (h.len(), s),
            _ => (0, c.start()),
        };
        while done < history.len() {
            state = c.advance(&state, history[done]).ok()?;
            done += 1;
        }
        self.replay = Some((history.to_vec(), state.clone()));
        Some(state)
    }
}

impl LogitSource for MockAdversarial {
    fn scores(&mut self, history: &[TokenId]) -> Result<Vec<f32>, SourceError> {
        let mut rng = ChaCha8Rng::seed_from_u64(history_seed(self.seed, history));
        let mask = match self.constraint.clone() {
            Some(c) => self.state_for(&c, history).and_then(|s| c.mask(&s).ok()),
            None => None,
        };
        Ok((0..self.vocab_size)
            .map(|i| {
                let forbidden = match &mask {
                    Some(m) => !m.contains(i as TokenId),
                    None => rng.gen_bool(0.5),
                };
                if forbidden {
                    if rng.gen_bool(0.5) {
                        f32::INFINITY
                    } else {
                        1e30
                    }
                } else if rng.gen_bool(0.05) {
                    f32::NAN
                } else {
                    rng.gen_range(-1.0f32..1.0)
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regex_fsm::{build_index, compile_regex};
    use crate::vocab::Vocabulary;
    use std::sync::Arc;

    #[test]
    fn mocks_are_deterministic() {
        let mut a = MockRandom::new(7, 50);
        let mut b = MockRandom::new(7, 50);
        assert_eq!(a.scores(&[1, 2]).unwrap(), b.scores(&[1, 2]).unwrap());
        assert_ne!(a.scores(&[1, 2]).unwrap(), a.scores(&[1, 3]).unwrap());
        assert_eq!(a.scores(&[]).unwrap().len(), 50);
    }

    #[test]
    fn scripted_then_eos() {
        let mut s = MockScripted::new(vec![3], 10.0, 5, 4);
        assert_eq!(s.scores(&[]).unwrap(), vec![0.0, 0.0, 0.0, 10.0, 0.0]);
        assert_eq!(s.scores(&[3]).unwrap(), vec![0.0, 0.0, 0.0, 0.0, 10.0]);
    }

    #[test]
    fn adversary_boosts_exactly_the_forbidden_tokens() {
        let v = Arc::new(Vocabulary::from_strs(&["0", "1", "a", "</s>"], 3).unwrap());
        let c = Constraint::Fsm(Arc::new(build_index(compile_regex("[0-9]+").unwrap(), v)));
        let mut adv = MockAdversarial::against(1, c);
        let s = adv.scores(&[]).unwrap();
        assert!(s[2] >= 1e30 && s[3] >= 1e30);
        assert!(s[0].is_nan() || s[0].abs() < 1.0);
        let s = adv.scores(&[0]).unwrap();
        assert!(s[2] >= 1e30);
        assert!(s[3].is_nan() || s[3].abs() < 1.0);
    }
}

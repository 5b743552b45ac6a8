use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Fsm;
use crate::constraint::{ConstraintError, Guide};
use crate::trie::TokenTrie;
use crate::vocab::{TokenId, TokenMask, Vocabulary};

const INDEX_VERSION: u32 = 1;

/// Per-state token index over a regex automaton.
///
/// `masks[q]` holds every token whose bytes can be walked from `q` without
/// leaving the live part of the automaton, plus eos when `q` accepts.
/// Lookup during decoding is a single vector access.
#[derive(Debug, Clone)]
pub struct FsmIndex {
    fsm: Fsm,
    vocab: Arc<Vocabulary>,
    masks: Vec<Arc<TokenMask>>,
    finished: Arc<TokenMask>,
}

/// Decode-time position in an [`FsmIndex`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FsmState {
    pub state: u32,
    pub finished: bool,
}

/// Builds the state → allowed-token index. Each (state, token) pair is
/// visited at most once, sharing work between tokens with common prefixes.
pub fn build_index(fsm: Fsm, vocab: Arc<Vocabulary>) -> FsmIndex {
    let trie = TokenTrie::new(&vocab);
    let n = vocab.len();
    let masks = (0..fsm.num_states() as u32)
        .map(|q| {
            let mut mask = TokenMask::empty(n);
            trie.walk(q, |&s, b| fsm.next(s, b), |id, _| mask.set(id));
            if fsm.is_accepting(q) {
                mask.set(vocab.eos_id());
            }
            Arc::new(mask)
        })
        .collect();
    FsmIndex {
        fsm,
        finished: Arc::new(TokenMask::empty(n)),
        vocab,
        masks,
    }
}

#[derive(Debug, Error)]
pub enum IndexFileError {
    #[error("malformed index file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("index file version {0} is not supported")]
    Version(u32),
    #[error("index was built for a different vocabulary")]
    VocabMismatch,
    #[error("index file is inconsistent: {0}")]
    Inconsistent(String),
}

#[derive(Serialize, Deserialize)]
struct IndexRepr {
    version: u32,
    vocab_size: usize,
    eos_id: TokenId,
    vocab_fingerprint: String,
    fsm: Fsm,
    masks: Vec<Vec<u64>>,
}

/// FNV-1a over length-prefixed tokens; identifies the vocabulary an index
/// was built against.
fn vocab_fingerprint(vocab: &Vocabulary) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut feed = |b: u8| {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    };
    for b in vocab.eos_id().to_le_bytes() {
        feed(b);
    }
    for (_, t) in vocab.tokens() {
        for b in (t.len() as u64).to_le_bytes() {
            feed(b);
        }
        for &b in t {
            feed(b);
        }
    }
    format!("{h:016x}")
}

impl FsmIndex {
    pub fn fsm(&self) -> &Fsm {
        &self.fsm
    }

    pub fn num_states(&self) -> usize {
        self.masks.len()
    }

    /// Mask for an automaton state; constant time in the vocabulary size.
    #[inline]
    pub fn state_mask(&self, state: u32) -> &Arc<TokenMask> {
        &self.masks[state as usize]
    }

    pub fn state_for(&self, state: u32) -> FsmState {
        FsmState {
            state,
            finished: false,
        }
    }

    pub fn to_json(&self) -> String {
        let repr = IndexRepr {
            version: INDEX_VERSION,
            vocab_size: self.vocab.len(),
            eos_id: self.vocab.eos_id(),
            vocab_fingerprint: vocab_fingerprint(&self.vocab),
            fsm: self.fsm.clone(),
            masks: self.masks.iter().map(|m| m.words().to_vec()).collect(),
        };
        serde_json::to_string(&repr).expect("index serializes")
    }

    pub fn from_json(text: &str, vocab: Arc<Vocabulary>) -> Result<Self, IndexFileError> {
        let repr: IndexRepr = serde_json::from_str(text)?;
        if repr.version != INDEX_VERSION {
            return Err(IndexFileError::Version(repr.version));
        }
        if repr.vocab_size != vocab.len()
            || repr.eos_id != vocab.eos_id()
            || repr.vocab_fingerprint != vocab_fingerprint(&vocab)
        {
            return Err(IndexFileError::VocabMismatch);
        }
        if repr.masks.len() != repr.fsm.num_states() {
            return Err(IndexFileError::Inconsistent(
                "one mask per state expected".into(),
            ));
        }
        let masks = repr
            .masks
            .into_iter()
            .map(|w| {
                TokenMask::from_words(vocab.len(), w)
                    .map(Arc::new)
                    .ok_or_else(|| IndexFileError::Inconsistent("mask width".into()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            fsm: repr.fsm,
            finished: Arc::new(TokenMask::empty(vocab.len())),
            vocab,
            masks,
        })
    }
}

impl PartialEq for FsmIndex {
    fn eq(&self, other: &Self) -> bool {
        self.fsm == other.fsm && self.vocab == other.vocab && self.masks == other.masks
    }
}

impl Guide for FsmIndex {
    type State = FsmState;

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn start(&self) -> FsmState {
        self.state_for(self.fsm.start())
    }

    fn mask(&self, state: &FsmState) -> Result<Arc<TokenMask>, ConstraintError> {
        Ok(if state.finished {
            self.finished.clone()
        } else {
            self.state_mask(state.state).clone()
        })
    }

    fn advance(&self, state: &FsmState, token: TokenId) -> Result<FsmState, ConstraintError> {
        if state.finished {
            return Err(ConstraintError::Finished);
        }
        let bytes = self
            .vocab
            .token(token)
            .ok_or(ConstraintError::UnknownToken(token))?;
        if !self.masks[state.state as usize].contains(token) {
            return Err(ConstraintError::IllegalToken { token });
        }
        if token == self.vocab.eos_id() {
            return Ok(FsmState {
                state: state.state,
                finished: true,
            });
        }
        let next = self
            .fsm
            .walk(state.state, bytes)
            .expect("indexed tokens survive the walk");
        Ok(self.state_for(next))
    }

    fn is_finished(&self, state: &FsmState) -> bool {
        state.finished
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regex_fsm::compile_regex;

    fn ids(mask: &TokenMask) -> Vec<TokenId> {
        mask.iter_ones().collect()
    }

    /// Direct per-token simulation, no trie.
    fn brute_mask(idx: &FsmIndex, q: u32) -> Vec<TokenId> {
        let v = idx.vocab();
        let mut out: Vec<TokenId> = v
            .text_tokens()
            .filter(|(_, t)| idx.fsm().walk(q, t).is_some())
            .map(|(id, _)| id)
            .collect();
        if idx.fsm().is_accepting(q) {
            out.push(v.eos_id());
        }
        out.sort();
        out
    }

    #[test]
    fn digits_index() {
        let v = Arc::new(Vocabulary::from_strs(&["0", "1", "a", "</s>"], 3).unwrap());
        let idx = build_index(compile_regex("[0-9]+").unwrap(), v);
        let s0 = idx.start();
        assert_eq!(ids(&idx.mask(&s0).unwrap()), vec![0, 1]);
        let s1 = idx.advance(&s0, 0).unwrap();
        assert_eq!(ids(&idx.mask(&s1).unwrap()), vec![0, 1, 3]);
        assert_eq!(
            idx.advance(&s0, 2).unwrap_err(),
            ConstraintError::IllegalToken { token: 2 }
        );
        let done = idx.advance(&s1, 3).unwrap();
        assert!(idx.is_finished(&done));
        assert!(idx.mask(&done).unwrap().is_empty());
        assert_eq!(
            idx.advance(&done, 0).unwrap_err(),
            ConstraintError::Finished
        );
    }

    #[test]
    fn single_string_language() {
        let v = Arc::new(Vocabulary::from_strs(&["a", "</s>"], 1).unwrap());
        let idx = build_index(compile_regex("a").unwrap(), v);
        let s0 = idx.start();
        assert_eq!(ids(&idx.mask(&s0).unwrap()), vec![0]);
        let s1 = idx.advance(&s0, 0).unwrap();
        assert_eq!(ids(&idx.mask(&s1).unwrap()), vec![1]);
    }

    #[test]
    fn no_surviving_token_gives_empty_start_mask() {
        let v = Arc::new(Vocabulary::from_strs(&["a", "b", "</s>"], 2).unwrap());
        let idx = build_index(compile_regex("[0-9]{2}").unwrap(), v);
        assert!(idx.mask(&idx.start()).unwrap().is_empty());
    }

    #[test]
    fn multi_byte_tokens_walk_through_intermediate_states() {
        let v = Arc::new(Vocabulary::from_strs(&["12", "1a", "123", "9", "</s>"], 4).unwrap());
        let idx = build_index(compile_regex("[0-9]{3}").unwrap(), v);
        let s = idx.start();
        assert_eq!(ids(&idx.mask(&s).unwrap()), vec![0, 2, 3]);
        let s = idx.advance(&s, 0).unwrap();
        assert_eq!(ids(&idx.mask(&s).unwrap()), vec![3]);
    }

    #[test]
    fn index_matches_brute_force_on_every_state() {
        let v = Arc::new(
            Vocabulary::from_strs(
                &[
                    "a", "b", "ab", "ba", "abc", "c", "cc", "é", "\u{e9}a", "x", "</s>",
                ],
                10,
            )
            .unwrap(),
        );
        for pat in ["(ab|c)*", "a[^b]c?", "(é|a)+b{1,2}", "c{2,4}|abc"] {
            let idx = build_index(compile_regex(pat).unwrap(), v.clone());
            for q in 0..idx.num_states() as u32 {
                assert_eq!(ids(idx.state_mask(q)), brute_mask(&idx, q), "{pat} q={q}");
            }
        }
    }

    #[test]
    fn index_file_round_trips() {
        let v = Arc::new(Vocabulary::from_strs(&["0", "1", "a", "</s>"], 3).unwrap());
        let idx = build_index(compile_regex("[0-9]+a?").unwrap(), v.clone());
        let back = FsmIndex::from_json(&idx.to_json(), v).unwrap();
        assert_eq!(back, idx);

        let other = Arc::new(Vocabulary::from_strs(&["0", "2", "a", "</s>"], 3).unwrap());
        assert!(matches!(
            FsmIndex::from_json(&idx.to_json(), other),
            Err(IndexFileError::VocabMismatch)
        ));
    }
}

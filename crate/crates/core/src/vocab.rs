//! Tokenizer vocabulary and token masks.
//!
//! Tokens are arbitrary byte strings. The on-disk format is a JSON object
//! `{"eos_id": <int>, "tokens": [...]}` where each entry is either a plain
//! UTF-8 string or `{"b64": "<base64>"}` for byte strings that are not valid
//! UTF-8. The token id is the array index.

use std::fmt;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type TokenId = u32;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("cannot read vocabulary file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed vocabulary: {0}")]
    Parse(String),
    #[error("invalid vocabulary: {0}")]
    Validation(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("mask length mismatch: {left} vs {right}")]
pub struct LengthMismatch {
    pub left: usize,
    pub right: usize,
}

/// Ordered token byte strings plus the end-of-sequence id.
#[derive(Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<Vec<u8>>,
    eos_id: TokenId,
}

impl fmt::Debug for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Vocabulary")
            .field("size", &self.tokens.len())
            .field("eos_id", &self.eos_id)
            .finish()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EntryRepr {
    Text(String),
    Bytes { b64: String },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabRepr {
    eos_id: u64,
    tokens: Vec<EntryRepr>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<Vec<u8>>, eos_id: TokenId) -> Result<Self, VocabError> {
        if tokens.len() > TokenId::MAX as usize {
            return Err(VocabError::Validation("too many tokens".into()));
        }
        if (eos_id as usize) >= tokens.len() {
            return Err(VocabError::Validation(format!(
                "eos_id {eos_id} out of range for {} tokens",
                tokens.len()
            )));
        }
        if !tokens
            .iter()
            .enumerate()
            .any(|(id, t)| id != eos_id as usize && !t.is_empty())
        {
            return Err(VocabError::Validation(
                "vocabulary needs at least one non-empty token besides eos".into(),
            ));
        }
        Ok(Self { tokens, eos_id })
    }

    /// Convenience constructor for string tokens.
    pub fn from_strs<S: AsRef<str>>(tokens: &[S], eos_id: TokenId) -> Result<Self, VocabError> {
        Self::new(
            tokens
                .iter()
                .map(|t| t.as_ref().as_bytes().to_vec())
                .collect(),
            eos_id,
        )
    }

    /// All 256 single bytes, a set of common multi-byte pieces, then `</s>` as eos.
    pub fn byte_level(extra: &[&str]) -> Self {
        let mut tokens: Vec<Vec<u8>> = (0u8..=255).map(|b| vec![b]).collect();
        let mut seen: std::collections::HashSet<Vec<u8>> = tokens.iter().cloned().collect();
        for piece in extra {
            let bytes = piece.as_bytes().to_vec();
            if seen.insert(bytes.clone()) {
                tokens.push(bytes);
            }
        }
        tokens.push(b"</s>".to_vec());
        let eos = (tokens.len() - 1) as TokenId;
        Self::new(tokens, eos).expect("byte-level vocabulary is well formed")
    }

    pub fn from_json(text: &str) -> Result<Self, VocabError> {
        let repr: VocabRepr =
            serde_json::from_str(text).map_err(|e| VocabError::Parse(e.to_string()))?;
        let mut tokens = Vec::with_capacity(repr.tokens.len());
        for (id, entry) in repr.tokens.into_iter().enumerate() {
            tokens.push(match entry {
                EntryRepr::Text(s) => s.into_bytes(),
                EntryRepr::Bytes { b64 } => B64
                    .decode(b64.as_bytes())
                    .map_err(|e| VocabError::Parse(format!("token {id}: bad base64: {e}")))?,
            });
        }
        let eos_id = TokenId::try_from(repr.eos_id)
            .map_err(|_| VocabError::Validation(format!("eos_id {} out of range", repr.eos_id)))?;
        Self::new(tokens, eos_id)
    }

    pub fn to_json(&self) -> String {
        let repr = VocabRepr {
            eos_id: self.eos_id as u64,
            tokens: self
                .tokens
                .iter()
                .map(|t| match std::str::from_utf8(t) {
                    Ok(s) => EntryRepr::Text(s.to_owned()),
                    Err(_) => EntryRepr::Bytes { b64: B64.encode(t) },
                })
                .collect(),
        };
        serde_json::to_string(&repr).expect("vocabulary serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), VocabError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    pub fn token(&self, id: TokenId) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    pub fn tokens(&self) -> impl Iterator<Item = (TokenId, &[u8])> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (i as TokenId, t.as_slice()))
    }

    /// Token ids that carry text: everything except eos and empty strings.
    pub fn text_tokens(&self) -> impl Iterator<Item = (TokenId, &[u8])> {
        let eos = self.eos_id;
        self.tokens()
            .filter(move |(id, t)| *id != eos && !t.is_empty())
    }

    /// Greedy longest-match segmentation of `text` into token ids. Returns
    /// `None` when some suffix cannot be covered. Not a BPE encoder.
    pub fn greedy_tokenize(&self, text: &[u8]) -> Option<Vec<TokenId>> {
        let trie = crate::trie::TokenTrie::new(self);
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < text.len() {
            let (id, len) = trie.longest_prefix(&text[pos..])?;
            out.push(id);
            pos += len;
        }
        Some(out)
    }

    /// Concatenated bytes of `ids`, skipping eos.
    pub fn detokenize(&self, ids: &[TokenId]) -> Vec<u8> {
        let mut out = Vec::new();
        for &id in ids {
            if id != self.eos_id {
                if let Some(t) = self.token(id) {
                    out.extend_from_slice(t);
                }
            }
        }
        out
    }
}

pub fn load_vocabulary(path: impl AsRef<Path>) -> Result<Vocabulary, VocabError> {
    Vocabulary::load(path)
}

/// Fixed-width bit vector over token ids.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct TokenMask {
    words: Vec<u64>,
    len: usize,
}

impl fmt::Debug for TokenMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TokenMask[{}]{{", self.len)?;
        for (i, id) in self.iter_ones().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            if i == 16 {
                write!(f, "...")?;
                break;
            }
            write!(f, "{id}")?;
        }
        write!(f, "}}")
    }
}

impl TokenMask {
    pub fn empty(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn full(len: usize) -> Self {
        let mut m = Self {
            words: vec![u64::MAX; len.div_ceil(64)],
            len,
        };
        m.clear_tail();
        m
    }

    pub fn from_ids(len: usize, ids: impl IntoIterator<Item = TokenId>) -> Self {
        let mut m = Self::empty(len);
        for id in ids {
            m.set(id);
        }
        m
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn contains(&self, id: TokenId) -> bool {
        let i = id as usize;
        i < self.len && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    /// Panics if `id` is out of range.
    pub fn set(&mut self, id: TokenId) {
        let i = id as usize;
        assert!(i < self.len, "token id {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn unset(&mut self, id: TokenId) {
        let i = id as usize;
        if i < self.len {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros();
                w &= w - 1;
                Some((wi * 64) as TokenId + bit)
            })
        })
    }

    pub fn and(&self, other: &TokenMask) -> Result<TokenMask, LengthMismatch> {
        self.check_len(other)?;
        Ok(TokenMask {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
            len: self.len,
        })
    }

    pub fn union_with(&mut self, other: &TokenMask) -> Result<(), LengthMismatch> {
        self.check_len(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
        Ok(())
    }

    fn check_len(&self, other: &TokenMask) -> Result<(), LengthMismatch> {
        if self.len != other.len {
            return Err(LengthMismatch {
                left: self.len,
                right: other.len,
            });
        }
        Ok(())
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn from_words(len: usize, words: Vec<u64>) -> Option<Self> {
        if words.len() != len.div_ceil(64) {
            return None;
        }
        let mut m = Self { words, len };
        let before = m.words.last().copied();
        m.clear_tail();
        if m.words.last().copied() != before {
            return None;
        }
        Some(m)
    }
}

/// Bitwise intersection of two masks of equal length.
pub fn mask_and(a: &TokenMask, b: &TokenMask) -> Result<TokenMask, LengthMismatch> {
    a.and(b)
}

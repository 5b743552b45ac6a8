//! Step-by-step comparison of a constraint against an oracle.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex_automata::util::primitives::StateID;

use guidedec::decoder::{sample_masked, DecodeConfig, LogitSource, SourceError};
use guidedec::{Guide, TokenId, TokenMask, Vocabulary};

use crate::earley::{Chart, GrammarOracle};
use crate::regex_oracle::RegexOracle;

/// Incremental brute-force recognizer over bytes.
pub trait Oracle {
    type Cursor: Clone;

    fn begin(&self) -> Self::Cursor;

    /// `None` once the bytes read are not a prefix of any accepted string.
    fn feed(&self, c: &Self::Cursor, bytes: &[u8]) -> Option<Self::Cursor>;

    fn is_final(&self, c: &Self::Cursor) -> bool;

    /// Per-token simulation: a text token is allowed iff its bytes keep the
    /// input viable; eos iff the input is complete.
    fn mask_at(&self, c: &Self::Cursor, vocab: &Vocabulary) -> TokenMask {
        let mut m = TokenMask::empty(vocab.len());
        for (id, bytes) in vocab.text_tokens() {
            if self.feed(c, bytes).is_some() {
                m.set(id);
            }
        }
        if self.is_final(c) {
            m.set(vocab.eos_id());
        }
        m
    }
}

impl Oracle for RegexOracle {
    type Cursor = StateID;

    fn begin(&self) -> StateID {
        self.start()
    }

    fn feed(&self, c: &StateID, bytes: &[u8]) -> Option<StateID> {
        self.walk(*c, bytes)
    }

    fn is_final(&self, c: &StateID) -> bool {
        RegexOracle::is_final(self, *c)
    }
}

impl Oracle for GrammarOracle {
    type Cursor = Chart;

    fn begin(&self) -> Chart {
        self.start()
    }

    fn feed(&self, c: &Chart, bytes: &[u8]) -> Option<Chart> {
        self.feed_all(c, bytes)
    }

    fn is_final(&self, c: &Chart) -> bool {
        self.accepts(c)
    }
}

/// Wraps a source and scores eos at negative infinity for the first `hold`
/// steps, so traces run long instead of stopping at the first chance.
/// Eos is still chosen when it is the only allowed token.
pub struct HoldEos<S> {
    pub inner: S,
    pub eos: TokenId,
    pub hold: usize,
}

impl<S: LogitSource> LogitSource for HoldEos<S> {
    fn scores(&mut self, history: &[TokenId]) -> Result<Vec<f32>, SourceError> {
        let mut s = self.inner.scores(history)?;
        if history.len() < self.hold {
            if let Some(x) = s.get_mut(self.eos as usize) {
                *x = f32::NEG_INFINITY;
            }
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discrepancy {
    pub step: usize,
    pub prefix: Vec<u8>,
    pub expected: TokenMask,
    pub got: TokenMask,
}

#[derive(Debug, Default, Clone)]
pub struct Audit {
    pub steps: usize,
    pub discrepancies: Vec<Discrepancy>,
    pub tokens: Vec<TokenId>,
    pub finished: bool,
}

/// Decodes with `guide` against `source`, comparing every step's mask with
/// the oracle's. Sampling follows the guide's mask, so the walk stays
/// inside the language even when the two disagree.
pub fn audit_decode<G: Guide, O: Oracle>(
    guide: &G,
    oracle: &O,
    source: &mut dyn LogitSource,
    cfg: &DecodeConfig,
) -> Audit {
    let vocab = guide.vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = guide.start();
    let mut cursor = oracle.begin();
    let mut out = Audit::default();
    let mut text = Vec::new();
    while out.tokens.len() < cfg.max_tokens {
        let got = guide.mask(&state).expect("mask");
        let expected = oracle.mask_at(&cursor, vocab);
        if *got != expected {
            out.discrepancies.push(Discrepancy {
                step: out.steps,
                prefix: text.clone(),
                expected,
                got: (*got).clone(),
            });
        }
        out.steps += 1;
        let scores = source.scores(&out.tokens).expect("scores");
        let Some(t) = sample_masked(&scores, &got, cfg, &mut rng) else {
            break;
        };
        state = guide
            .advance(&state, t)
            .expect("advance with an allowed token");
        if t == vocab.eos_id() {
            out.finished = true;
            break;
        }
        let bytes = vocab.token(t).unwrap();
        text.extend_from_slice(bytes);
        match oracle.feed(&cursor, bytes) {
            Some(c) => cursor = c,
            None => break,
        }
        out.tokens.push(t);
    }
    out
}

/// Replays an emitted token sequence through the oracle and counts tokens
/// the oracle would have forbidden. `eos` says whether the decode ended by
/// emitting eos, which must then also have been allowed.
pub fn count_violations<O: Oracle>(
    oracle: &O,
    vocab: &Vocabulary,
    tokens: &[TokenId],
    eos: bool,
) -> usize {
    let mut c = oracle.begin();
    for (i, &t) in tokens.iter().enumerate() {
        let bytes = vocab.token(t).unwrap_or_default();
        if t == vocab.eos_id() || bytes.is_empty() {
            return tokens.len() - i;
        }
        match oracle.feed(&c, bytes) {
            Some(n) => c = n,
            None => return tokens.len() - i,
        }
    }
    usize::from(eos && !oracle.is_final(&c))
}

//! Pushdown grammar engine.
//!
//! A parse state is a small set of configurations. Each configuration is
//! lexing one terminal (a regex automaton and its current state) and holds
//! a persistent stack of return items telling the parser where to resume
//! once that terminal ends. Right-recursive tails are not pushed, so
//! repetition runs in constant stack depth.
//!
//! Tokens are classified per terminal automaton state. Tokens the terminal
//! can absorb whole are valid whatever the stack holds; tokens the terminal
//! rejects before reaching any accepting state are invalid whatever the
//! stack holds; the rest depend on the stack and are checked by simulation.
//! Masks of configurations are memoised in an LRU keyed by the automaton
//! position and the top few stack items.

mod compile;

use std::fmt;
use std::num::NonZeroUsize;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use lru::LruCache;
use serde::{Deserialize, Serialize};

use crate::constraint::{ConstraintError, Guide};
use crate::grammar::{inline_rules, Grammar, GrammarError};
use crate::stack::{ExecStack, StackKey};
use crate::trie::TokenTrie;
use crate::vocab::{TokenId, TokenMask, Vocabulary};
use compile::{Compiled, Sym};

/// Bound on unique configurations produced by a single closure.
const EXPAND_LIMIT: usize = 4096;
/// Bound on productions visited by a single closure.
const WORK_LIMIT: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheCapacity {
    Disabled,
    Bounded(usize),
    Unbounded,
}

impl FromStr for CacheCapacity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "0" | "off" | "disabled" => Ok(Self::Disabled),
            "unbounded" => Ok(Self::Unbounded),
            n => n
                .parse::<usize>()
                .map(Self::Bounded)
                .map_err(|_| format!("bad cache capacity {n:?} (a number or `unbounded`)")),
        }
    }
}

impl fmt::Display for CacheCapacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Disabled => f.write_str("0"),
            Self::Bounded(n) => write!(f, "{n}"),
            Self::Unbounded => f.write_str("unbounded"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PdaOptions {
    pub cache: CacheCapacity,
    /// Live configurations allowed before `TooAmbiguous`.
    pub max_configs: usize,
    /// Rules referenced at most this many times are inlined; 0 disables.
    pub inline_max_refs: usize,
    /// Stack items below the top one that enter the cache key.
    pub cache_stack_depth: usize,
}

impl Default for PdaOptions {
    fn default() -> Self {
        Self {
            cache: CacheCapacity::Bounded(4096),
            max_configs: 32,
            inline_max_refs: crate::grammar::DEFAULT_INLINE_MAX_REFS,
            cache_stack_depth: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Item {
    prod: u32,
    dot: u32,
    /// Everything from `dot` on, and every item below, can derive empty.
    tail_ok: bool,
}

impl StackKey for Item {
    fn stack_key(&self) -> u64 {
        ((self.prod as u64) << 33) | ((self.dot as u64) << 1) | self.tail_ok as u64
    }
}

#[derive(Clone)]
struct Config {
    stack: ExecStack<Item>,
    term: u32,
    lex: u32,
    /// No byte of the current terminal consumed yet.
    fresh: bool,
}

impl PartialEq for Config {
    fn eq(&self, o: &Self) -> bool {
        self.term == o.term && self.lex == o.lex && self.fresh == o.fresh && self.stack == o.stack
    }
}

impl fmt::Debug for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t{}@{}{} depth {}",
            self.term,
            self.lex,
            if self.fresh { "*" } else { "" },
            self.stack.depth()
        )
    }
}

fn push_unique(out: &mut Vec<Config>, c: Config) {
    if !out.contains(&c) {
        out.push(c);
    }
}

/// Decode-time state of a [`PdaEngine`]. Cloning is constant time and the
/// clone is fully independent.
#[derive(Clone)]
pub struct PdaState {
    configs: Arc<[Config]>,
    accept: bool,
    finished: bool,
    memo: Arc<OnceLock<Arc<TokenMask>>>,
}

impl PdaState {
    fn new(configs: Vec<Config>, accept: bool, finished: bool) -> Self {
        Self {
            configs: configs.into(),
            accept,
            finished,
            memo: Arc::new(OnceLock::new()),
        }
    }

    pub fn num_configs(&self) -> usize {
        self.configs.len()
    }

    /// Deepest execution stack among the live configurations.
    pub fn stack_depth(&self) -> usize {
        self.configs
            .iter()
            .map(|c| c.stack.depth())
            .max()
            .unwrap_or(0)
    }

    /// Whether the bytes consumed so far form a complete sentence.
    pub fn is_accepting(&self) -> bool {
        self.accept
    }
}

impl fmt::Debug for PdaState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PdaState")
            .field("configs", &self.configs)
            .field("accept", &self.accept)
            .field("finished", &self.finished)
            .finish()
    }
}

/// Token partition at one automaton position. Covers text tokens; eos is
/// decided from the whole state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub ci_valid: TokenMask,
    pub ci_invalid: TokenMask,
    pub context_dependent: TokenMask,
}

struct Position {
    ci_valid: Arc<TokenMask>,
    cd: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    term: u32,
    lex: u32,
    fresh: bool,
    full: bool,
    items: Vec<Item>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub entries: usize,
}

pub struct PdaEngine {
    vocab: Arc<Vocabulary>,
    grammar: Grammar,
    g: Compiled,
    /// `positions[term][lex]` for non-fresh and fresh configurations.
    positions: Vec<Vec<[Arc<Position>; 2]>>,
    cache: Option<Mutex<LruCache<CacheKey, Arc<TokenMask>>>>,
    hits: AtomicU64,
    misses: AtomicU64,
    opts: PdaOptions,
    initial: PdaState,
    finished_mask: Arc<TokenMask>,
}

impl fmt::Debug for PdaEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PdaEngine")
            .field("rules", &self.g.rule_names.len())
            .field("terminals", &self.g.terms.len())
            .field("positions", &self.g.num_positions())
            .field("opts", &self.opts)
            .finish()
    }
}

struct Expander<'a> {
    g: &'a Compiled,
    out: Vec<Config>,
    accept: bool,
    work: usize,
    min_depth: usize,
    limit: usize,
}

impl<'a> Expander<'a> {
    fn new(g: &'a Compiled, limit: usize) -> Self {
        Self {
            g,
            out: Vec::new(),
            accept: false,
            work: 0,
            min_depth: usize::MAX,
            limit,
        }
    }

    fn too_ambiguous(&self) -> ConstraintError {
        ConstraintError::TooAmbiguous { limit: self.limit }
    }

    /// Continues after whatever was on top of `stack` completed.
    fn resume(&mut self, stack: &ExecStack<Item>) -> Result<(), ConstraintError> {
        match stack.pop() {
            None => {
                self.accept = true;
                self.min_depth = 0;
                Ok(())
            }
            Some((item, rest)) => {
                let (prod, dot) = (item.prod, item.dot);
                self.min_depth = self.min_depth.min(rest.depth());
                self.expand_at(prod, dot, &rest)
            }
        }
    }

    fn expand_at(
        &mut self,
        prod: u32,
        dot: u32,
        rest: &ExecStack<Item>,
    ) -> Result<(), ConstraintError> {
        self.work += 1;
        if self.work > WORK_LIMIT {
            return Err(self.too_ambiguous());
        }
        let g = self.g;
        let syms = &g.prods[prod as usize];
        let d = dot as usize;
        if d == syms.len() {
            return self.resume(rest);
        }
        let cont = if d + 1 == syms.len() {
            rest.clone()
        } else {
            rest.push(Item {
                prod,
                dot: dot + 1,
                tail_ok: g.suffix_nullable[prod as usize][d + 1]
                    && rest.top().is_none_or(|i| i.tail_ok),
            })
        };
        match syms[d] {
            Sym::Term(t) => {
                let f = &g.terms[t as usize];
                if f.has_transitions(f.start()) {
                    push_unique(
                        &mut self.out,
                        Config {
                            stack: cont.clone(),
                            term: t,
                            lex: f.start(),
                            fresh: true,
                        },
                    );
                    if self.out.len() > EXPAND_LIMIT {
                        return Err(self.too_ambiguous());
                    }
                }
                if f.is_accepting(f.start()) {
                    self.resume(&cont)?;
                }
            }
            Sym::Rule(r) => {
                for &q in &g.rule_prods[r as usize] {
                    self.expand_at(q, 0, &cont)?;
                }
            }
        }
        Ok(())
    }
}

impl PdaEngine {
    pub fn new(
        grammar: &Grammar,
        vocab: Arc<Vocabulary>,
        opts: PdaOptions,
    ) -> Result<Self, GrammarError> {
        let grammar = inline_rules(grammar, opts.inline_max_refs);
        let g = Compiled::new(&grammar)?;
        let trie = TokenTrie::new(&vocab);
        let n = vocab.len();

        let positions = g
            .terms
            .iter()
            .map(|f| {
                (0..f.num_states() as u32)
                    .map(|q| {
                        let stale = Arc::new(classify_position(&trie, f, q, false, n));
                        let fresh = if f.is_accepting(q) {
                            Arc::new(classify_position(&trie, f, q, true, n))
                        } else {
                            stale.clone()
                        };
                        [stale, fresh]
                    })
                    .collect()
            })
            .collect();

        let cache = match opts.cache {
            CacheCapacity::Disabled | CacheCapacity::Bounded(0) => None,
            CacheCapacity::Bounded(k) => {
                Some(Mutex::new(LruCache::new(NonZeroUsize::new(k).unwrap())))
            }
            CacheCapacity::Unbounded => Some(Mutex::new(LruCache::unbounded())),
        };

        let mut ex = Expander::new(&g, opts.max_configs);
        for &p in &g.rule_prods[g.start as usize] {
            ex.expand_at(p, 0, &ExecStack::root())
                .map_err(|_| GrammarError::TooAmbiguous {
                    limit: opts.max_configs,
                })?;
        }
        if ex.out.len() > opts.max_configs {
            return Err(GrammarError::TooAmbiguous {
                limit: opts.max_configs,
            });
        }
        let initial = PdaState::new(ex.out, ex.accept, false);

        Ok(Self {
            finished_mask: Arc::new(TokenMask::empty(n)),
            vocab,
            grammar,
            g,
            positions,
            cache,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            opts,
            initial,
        })
    }

    /// The grammar after inlining.
    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    pub fn options(&self) -> &PdaOptions {
        &self.opts
    }

    pub fn num_positions(&self) -> usize {
        self.g.num_positions()
    }

    pub fn vocab_arc(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    /// Independent copy of `state`; constant time in the stack depth.
    pub fn branch(&self, state: &PdaState) -> PdaState {
        state.clone()
    }

    pub fn cache_stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            entries: self
                .cache
                .as_ref()
                .map_or(0, |c| c.lock().unwrap_or_else(|e| e.into_inner()).len()),
        }
    }

    pub fn clear_cache(&self) {
        if let Some(c) = &self.cache {
            c.lock().unwrap_or_else(|e| e.into_inner()).clear();
        }
    }

    /// Classification tables at each live configuration of `state`.
    pub fn classify(&self, state: &PdaState) -> Vec<Classification> {
        let text =
            TokenMask::from_ids(self.vocab.len(), self.vocab.text_tokens().map(|(id, _)| id));
        state
            .configs
            .iter()
            .map(|c| {
                let pos = &self.positions[c.term as usize][c.lex as usize][c.fresh as usize];
                let cd = TokenMask::from_ids(self.vocab.len(), pos.cd.iter().copied());
                let mut invalid = text.clone();
                for id in pos.ci_valid.iter_ones().chain(pos.cd.iter().copied()) {
                    invalid.unset(id);
                }
                Classification {
                    ci_valid: (*pos.ci_valid).clone(),
                    ci_invalid: invalid,
                    context_dependent: cd,
                }
            })
            .collect()
    }

    fn limit_err(&self) -> ConstraintError {
        ConstraintError::TooAmbiguous {
            limit: self.opts.max_configs,
        }
    }

    /// Feeds one byte to every configuration. `min_depth` records the
    /// shallowest stack any completion popped down to.
    fn step(
        &self,
        configs: &[Config],
        b: u8,
        min_depth: &mut usize,
    ) -> Result<Vec<Config>, ConstraintError> {
        let g = &self.g;
        let mut out = Vec::new();
        for c in configs {
            let f = &g.terms[c.term as usize];
            if let Some(s) = f.next(c.lex, b) {
                push_unique(
                    &mut out,
                    Config {
                        stack: c.stack.clone(),
                        term: c.term,
                        lex: s,
                        fresh: false,
                    },
                );
            }
            if !c.fresh && f.is_accepting(c.lex) {
                let mut ex = Expander::new(g, self.opts.max_configs);
                ex.resume(&c.stack)?;
                *min_depth = (*min_depth).min(ex.min_depth);
                for n in ex.out {
                    if let Some(s) = g.terms[n.term as usize].next(n.lex, b) {
                        push_unique(
                            &mut out,
                            Config {
                                stack: n.stack,
                                term: n.term,
                                lex: s,
                                fresh: false,
                            },
                        );
                    }
                }
            }
            if out.len() > self.opts.max_configs {
                return Err(self.limit_err());
            }
        }
        Ok(out)
    }

    fn simulate(
        &self,
        c: &Config,
        bytes: &[u8],
        min_depth: &mut usize,
    ) -> Result<bool, ConstraintError> {
        let mut configs = vec![c.clone()];
        for &b in bytes {
            configs = self.step(&configs, b, min_depth)?;
            if configs.is_empty() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn is_accepting(&self, c: &Config) -> bool {
        !c.fresh
            && self.g.terms[c.term as usize].is_accepting(c.lex)
            && c.stack.top().is_none_or(|i| i.tail_ok)
    }

    fn cache_key(&self, c: &Config) -> CacheKey {
        let k = 1 + self.opts.cache_stack_depth;
        let items: Vec<Item> = c.stack.iter().take(k).copied().collect();
        CacheKey {
            term: c.term,
            lex: c.lex,
            fresh: c.fresh,
            full: c.stack.depth() <= k,
            items,
        }
    }

    fn config_mask(&self, c: &Config) -> Result<Arc<TokenMask>, ConstraintError> {
        let pos = &self.positions[c.term as usize][c.lex as usize][c.fresh as usize];
        if pos.cd.is_empty() {
            return Ok(pos.ci_valid.clone());
        }
        let key = self.cache.as_ref().map(|_| self.cache_key(c));
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            let mut cache = cache.lock().unwrap_or_else(|e| e.into_inner());
            if let Some(m) = cache.get(key) {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(m.clone());
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);

        let depth = c.stack.depth();
        let mut min_depth = depth;
        let mut mask = (*pos.ci_valid).clone();
        for &t in &pos.cd {
            let bytes = self.vocab.token(t).expect("classified tokens exist");
            if self.simulate(c, bytes, &mut min_depth)? {
                mask.set(t);
            }
        }
        let mask = Arc::new(mask);

        if let (Some(cache), Some(key)) = (&self.cache, key) {
            // Only stack items inside the key may have been inspected.
            let k = 1 + self.opts.cache_stack_depth;
            if key.full || min_depth + k >= depth {
                cache
                    .lock()
                    .unwrap_or_else(|e| e.into_inner())
                    .put(key, mask.clone());
            }
        }
        Ok(mask)
    }

    /// Builds a state from configurations after a token. A configuration
    /// whose terminal has ended and cannot continue is replaced by the
    /// terminal starts that may follow it, so the state sits at the
    /// position it logically expects next.
    fn settle(&self, configs: Vec<Config>) -> Result<PdaState, ConstraintError> {
        let mut out = Vec::with_capacity(configs.len());
        let mut accept = false;
        for c in configs {
            let f = &self.g.terms[c.term as usize];
            if !c.fresh && f.is_accepting(c.lex) && !f.has_transitions(c.lex) {
                let mut ex = Expander::new(&self.g, self.opts.max_configs);
                ex.resume(&c.stack)?;
                accept |= ex.accept;
                for n in ex.out {
                    push_unique(&mut out, n);
                }
            } else {
                accept |= self.is_accepting(&c);
                push_unique(&mut out, c);
            }
            if out.len() > self.opts.max_configs {
                return Err(self.limit_err());
            }
        }
        Ok(PdaState::new(out, accept, false))
    }

    fn compute_mask(&self, state: &PdaState) -> Result<Arc<TokenMask>, ConstraintError> {
        if state.configs.len() == 1 && !state.accept {
            return self.config_mask(&state.configs[0]);
        }
        let mut m = TokenMask::empty(self.vocab.len());
        for c in state.configs.iter() {
            m.union_with(&*self.config_mask(c)?)
                .expect("masks share the vocabulary size");
        }
        if state.accept {
            m.set(self.vocab.eos_id());
        }
        Ok(Arc::new(m))
    }
}

fn classify_position(
    trie: &TokenTrie,
    f: &crate::regex_fsm::Fsm,
    q: u32,
    fresh: bool,
    n: usize,
) -> Position {
    let mut ci = TokenMask::empty(n);
    let mut cd = Vec::new();
    // Walk state: terminal state and whether the terminal could have ended
    // at some point along the prefix.
    let split0 = !fresh && f.is_accepting(q);
    trie.walk_with_rejects(
        (q, split0),
        |&(s, split), b| f.next(s, b).map(|t| (t, split || f.is_accepting(t))),
        |id, _| ci.set(id),
        |ids, &(_, split)| {
            if split {
                cd.extend_from_slice(ids);
            }
        },
    );
    cd.sort_unstable();
    Position {
        ci_valid: Arc::new(ci),
        cd,
    }
}

impl Guide for PdaEngine {
    type State = PdaState;

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn start(&self) -> PdaState {
        self.initial.clone()
    }

    fn mask(&self, state: &PdaState) -> Result<Arc<TokenMask>, ConstraintError> {
        if state.finished {
            return Ok(self.finished_mask.clone());
        }
        if let Some(m) = state.memo.get() {
            return Ok(m.clone());
        }
        let m = self.compute_mask(state)?;
        let _ = state.memo.set(m.clone());
        Ok(m)
    }

    fn advance(&self, state: &PdaState, token: TokenId) -> Result<PdaState, ConstraintError> {
        if state.finished {
            return Err(ConstraintError::Finished);
        }
        let bytes = self
            .vocab
            .token(token)
            .ok_or(ConstraintError::UnknownToken(token))?;
        if token == self.vocab.eos_id() {
            return if state.accept {
                Ok(PdaState::new(Vec::new(), false, true))
            } else {
                Err(ConstraintError::IllegalToken { token })
            };
        }
        if bytes.is_empty() {
            return Err(ConstraintError::IllegalToken { token });
        }
        let mut min_depth = usize::MAX;
        let mut configs = state.configs.to_vec();
        for &b in bytes {
            configs = self.step(&configs, b, &mut min_depth)?;
            if configs.is_empty() {
                return Err(ConstraintError::IllegalToken { token });
            }
        }
        self.settle(configs)
    }

    fn is_finished(&self, state: &PdaState) -> bool {
        state.finished
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{parse_grammar, JSON_GRAMMAR};

    fn engine(src: &str, vocab: &Arc<Vocabulary>, opts: PdaOptions) -> PdaEngine {
        PdaEngine::new(&parse_grammar(src).unwrap(), vocab.clone(), opts).unwrap()
    }

    fn feed(e: &PdaEngine, text: &str) -> Result<PdaState, ConstraintError> {
        let ids = e.vocab().greedy_tokenize(text.as_bytes()).unwrap();
        let mut s = e.start();
        for t in ids {
            s = e.advance(&s, t)?;
        }
        Ok(s)
    }

    fn oracle(e: &PdaEngine, s: &PdaState) -> TokenMask {
        TokenMask::from_ids(
            e.vocab().len(),
            (0..e.vocab().len() as TokenId).filter(|&t| e.advance(s, t).is_ok()),
        )
    }

    #[test]
    fn right_recursive_toy_grammar() {
        let v = Arc::new(Vocabulary::byte_level(&[]));
        let e = engine(r#"start: "a" start | "b""#, &v, PdaOptions::default());
        for ok in ["b", "ab", "aab", "aaaaaab"] {
            let s = feed(&e, ok).unwrap();
            assert!(s.is_accepting(), "{ok}");
            assert!(e.advance(&s, v.eos_id()).is_ok());
        }
        assert!(!feed(&e, "aa").unwrap().is_accepting());
        assert!(feed(&e, "ba").is_err());
        assert!(feed(&e, "c").is_err());
    }

    #[test]
    fn tail_recursion_keeps_the_stack_flat() {
        let v = Arc::new(Vocabulary::byte_level(&[]));
        let e = engine(r#"start: "a"* "b""#, &v, PdaOptions::default());
        let s = feed(&e, &"a".repeat(500)).unwrap();
        assert!(s.stack_depth() <= 2, "{}", s.stack_depth());
    }

    #[test]
    fn json_document_from_the_examples() {
        let v = Arc::new(Vocabulary::byte_level(&["\"x\"", "document_ids"]));
        let e = engine(JSON_GRAMMAR, &v, PdaOptions::default());
        let s = feed(&e, r#"{"document_ids": ["x"]}"#).unwrap();
        assert!(s.is_accepting());
        assert_eq!(
            e.mask(&s).unwrap().iter_ones().collect::<Vec<_>>(),
            vec![v.eos_id()]
        );
    }

    #[test]
    fn true_is_context_independent_at_value_position() {
        let v = Arc::new(Vocabulary::byte_level(&["true", "}"]));
        let e = engine(JSON_GRAMMAR, &v, PdaOptions::default());
        let s = feed(&e, "[").unwrap();
        let t = v.greedy_tokenize(b"true").unwrap()[0];
        let cls = e.classify(&s);
        assert!(cls.iter().any(|c| c.ci_valid.contains(t)));
        for c in &cls {
            let mut total = c.ci_valid.clone();
            total.union_with(&c.ci_invalid).unwrap();
            total.union_with(&c.context_dependent).unwrap();
            assert_eq!(total.count_ones(), v.text_tokens().count());
            assert_eq!(c.ci_valid.and(&c.ci_invalid).unwrap().count_ones(), 0);
            assert_eq!(
                c.ci_valid.and(&c.context_dependent).unwrap().count_ones(),
                0
            );
        }
    }

    #[test]
    fn masks_match_per_token_oracle_along_a_json_trace() {
        let v = Arc::new(Vocabulary::byte_level(&[
            "{\"", "\":", "\", \"", "]}", "tr", "ue", "12", "e-",
        ]));
        let e = engine(JSON_GRAMMAR, &v, PdaOptions::default());
        let text = r#"{"a": [1, true, {"b":-12e-3}, "ok"], "c" : null}"#;
        let ids = v.greedy_tokenize(text.as_bytes()).unwrap();
        let mut s = e.start();
        for t in ids {
            assert_eq!(*e.mask(&s).unwrap(), oracle(&e, &s));
            s = e.advance(&s, t).unwrap();
        }
        assert_eq!(*e.mask(&s).unwrap(), oracle(&e, &s));
        assert!(e.mask(&s).unwrap().contains(v.eos_id()));
    }

    #[test]
    fn cache_is_transparent_and_gets_hits() {
        let v = Arc::new(Vocabulary::byte_level(&[]));
        let text = r#"[[1,2,3],[4,5,6],{"k":[7,8]},{"k":[9]}]"#;
        let ids = v.greedy_tokenize(text.as_bytes()).unwrap();
        let mut traces = Vec::new();
        for cache in [
            CacheCapacity::Disabled,
            CacheCapacity::Bounded(1),
            CacheCapacity::Unbounded,
        ] {
            let e = engine(
                JSON_GRAMMAR,
                &v,
                PdaOptions {
                    cache,
                    ..Default::default()
                },
            );
            let mut s = e.start();
            let mut trace = Vec::new();
            for &t in &ids {
                trace.push(e.mask(&s).unwrap());
                s = e.advance(&s, t).unwrap();
            }
            if cache == CacheCapacity::Unbounded {
                assert!(e.cache_stats().hits > 0);
            }
            traces.push(trace);
        }
        assert_eq!(traces[0], traces[1]);
        assert_eq!(traces[0], traces[2]);
    }

    #[test]
    fn branches_are_independent() {
        let v = Arc::new(Vocabulary::byte_level(&[]));
        let e = engine(JSON_GRAMMAR, &v, PdaOptions::default());
        let base = feed(&e, "[{\"a\":").unwrap();
        let copy = e.branch(&base);
        let a = e.advance(&copy, b'[' as TokenId).unwrap();
        let b = e.advance(&base, b'"' as TokenId).unwrap();
        assert_eq!(
            *e.mask(&a).unwrap(),
            *e.mask(&feed(&e, "[{\"a\":[").unwrap()).unwrap()
        );
        assert_eq!(
            *e.mask(&b).unwrap(),
            *e.mask(&feed(&e, "[{\"a\":\"").unwrap()).unwrap()
        );
    }

    #[test]
    fn finished_state_allows_nothing() {
        let v = Arc::new(Vocabulary::byte_level(&[]));
        let e = engine(r#"start: "b""#, &v, PdaOptions::default());
        let s = feed(&e, "b").unwrap();
        let done = e.advance(&s, v.eos_id()).unwrap();
        assert!(e.is_finished(&done));
        assert!(e.is_finished(&e.branch(&done)));
        assert!(e.mask(&done).unwrap().is_empty());
        assert_eq!(e.advance(&done, 0).unwrap_err(), ConstraintError::Finished);
    }

    #[test]
    fn ambiguity_limit() {
        let v = Arc::new(Vocabulary::byte_level(&[]));
        // Every split of a run of a's is a distinct parse.
        let src = r#"start: x*; x: "a" | "aa" | "aaa" | /a+/"#;
        let opts = PdaOptions {
            max_configs: 4,
            inline_max_refs: 0,
            ..Default::default()
        };
        let e = engine(src, &v, opts);
        assert!(matches!(
            feed(&e, "aaaa"),
            Err(ConstraintError::TooAmbiguous { limit: 4 })
        ));
    }

    #[test]
    fn deep_nesting_does_not_recurse() {
        let v = Arc::new(Vocabulary::byte_level(&[]));
        let e = engine(JSON_GRAMMAR, &v, PdaOptions::default());
        let depth = 2000;
        let text = format!("{}1{}", "[".repeat(depth), "]".repeat(depth));
        let s = feed(&e, &text).unwrap();
        assert!(s.is_accepting());
    }
}

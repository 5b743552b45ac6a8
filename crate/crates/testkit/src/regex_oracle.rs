//! Brute-force regex mask oracle on top of regex-automata's dense DFA.

use std::collections::{HashMap, HashSet};

use regex_automata::dfa::{dense, Automaton, StartKind};
use regex_automata::util::primitives::StateID;
use regex_automata::util::{start, syntax};
use regex_automata::{Anchored, MatchKind};

use guidedec::{TokenMask, Vocabulary};

/// Anchored DFA for a pattern matched in full.
///
/// regex-automata reports matches one byte late, so a state that is not
/// dead may still have no match ahead of it. The oracle therefore explores
/// the whole automaton once and keeps the set of states from which a full
/// match is reachable; leaving that set means the prefix is dead.
pub struct RegexOracle {
    dfa: dense::DFA<Vec<u32>>,
    start: StateID,
    live: HashSet<StateID>,
}

impl RegexOracle {
    pub fn new(pattern: &str) -> Result<Self, String> {
        Self::with_syntax(pattern, syntax::Config::new())
    }

    /// Oracle for an exact byte string.
    pub fn literal(bytes: &[u8]) -> Self {
        let pattern: String = bytes.iter().map(|b| format!("\\x{b:02x}")).collect();
        let cfg = syntax::Config::new().unicode(false).utf8(false);
        Self::with_syntax(&pattern, cfg).expect("escaped literals always compile")
    }

    fn with_syntax(pattern: &str, cfg: syntax::Config) -> Result<Self, String> {
        let dfa = dense::Builder::new()
            .configure(
                dense::Config::new()
                    .match_kind(MatchKind::All)
                    .start_kind(StartKind::Anchored),
            )
            .syntax(cfg)
            .build(pattern)
            .map_err(|e| e.to_string())?;
        let start = dfa
            .start_state(&start::Config::new().anchored(Anchored::Yes))
            .map_err(|e| e.to_string())?;
        let live = live_states(&dfa, start);
        Ok(Self { dfa, start, live })
    }

    pub fn start(&self) -> StateID {
        self.start
    }

    /// Next state, or `None` once no completion can match.
    pub fn step(&self, s: StateID, b: u8) -> Option<StateID> {
        let n = self.dfa.next_state(s, b);
        self.live.contains(&n).then_some(n)
    }

    pub fn is_viable(&self, s: StateID) -> bool {
        self.live.contains(&s)
    }

    pub fn walk(&self, mut s: StateID, bytes: &[u8]) -> Option<StateID> {
        if !self.is_viable(s) {
            return None;
        }
        for &b in bytes {
            s = self.step(s, b)?;
        }
        Some(s)
    }

    /// True if the input read so far is a full match.
    pub fn is_final(&self, s: StateID) -> bool {
        self.dfa.is_match_state(self.dfa.next_eoi_state(s))
    }

    pub fn matches(&self, text: &[u8]) -> bool {
        self.walk(self.start, text)
            .is_some_and(|s| self.is_final(s))
    }

    pub fn is_prefix(&self, text: &[u8]) -> bool {
        self.walk(self.start, text).is_some()
    }

    /// The mask a correct constraint must produce after emitting `prefix`:
    /// every text token whose bytes keep the prefix viable, plus eos when
    /// the prefix is a full match. `None` if `prefix` itself is not viable.
    pub fn mask(&self, prefix: &[u8], vocab: &Vocabulary) -> Option<TokenMask> {
        let s = self.walk(self.start, prefix)?;
        let mut m = TokenMask::empty(vocab.len());
        for (id, bytes) in vocab.text_tokens() {
            if self.walk(s, bytes).is_some() {
                m.set(id);
            }
        }
        if self.is_final(s) {
            m.set(vocab.eos_id());
        }
        Some(m)
    }
}

fn live_states(dfa: &dense::DFA<Vec<u32>>, start: StateID) -> HashSet<StateID> {
    let mut index: HashMap<StateID, usize> = HashMap::from([(start, 0)]);
    let mut states = vec![start];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new()];
    let mut i = 0;
    while i < states.len() {
        let s = states[i];
        for b in 0..=255u8 {
            let n = dfa.next_state(s, b);
            if dfa.is_dead_state(n) {
                continue;
            }
            let j = *index.entry(n).or_insert_with(|| {
                states.push(n);
                preds.push(Vec::new());
                states.len() - 1
            });
            preds[j].push(i);
        }
        i += 1;
    }
    let mut live = vec![false; states.len()];
    let mut work: Vec<usize> = (0..states.len())
        .filter(|&i| dfa.is_match_state(dfa.next_eoi_state(states[i])))
        .collect();
    for &i in &work {
        live[i] = true;
    }
    while let Some(i) = work.pop() {
        for &p in &preds[i] {
            if !live[p] {
                live[p] = true;
                work.push(p);
            }
        }
    }
    states
        .into_iter()
        .zip(live)
        .filter_map(|(s, l)| l.then_some(s))
        .collect()
}

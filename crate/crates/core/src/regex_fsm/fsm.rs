//! Byte-level deterministic automaton built from the regex AST.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::parse::{Ast, CharClass};
use super::utf8;
use super::RegexError;

pub const DEAD: u32 = u32::MAX;

const MAX_NFA_STATES: usize = 500_000;
const MAX_DFA_STATES: usize = 100_000;

#[derive(Debug, Clone)]
enum NState {
    Range { lo: u8, hi: u8, next: usize },
    Split(Vec<usize>),
    Match,
}

struct Nfa {
    states: Vec<NState>,
}

impl Nfa {
    fn add(&mut self, s: NState) -> Result<usize, RegexError> {
        if self.states.len() >= MAX_NFA_STATES {
            return Err(RegexError::TooLarge("NFA state limit exceeded".into()));
        }
        self.states.push(s);
        Ok(self.states.len() - 1)
    }

    /// Compiles `ast` so that a successful match continues at `out`;
    /// returns the entry state.
    fn compile(&mut self, ast: &Ast, out: usize) -> Result<usize, RegexError> {
        match ast {
            Ast::Empty => Ok(out),
            Ast::Class(cls) => self.class(cls, out),
            Ast::Concat(items) => {
                let mut s = out;
                for item in items.iter().rev() {
                    s = self.compile(item, s)?;
                }
                Ok(s)
            }
            Ast::Alt(alts) => {
                let mut entries = Vec::with_capacity(alts.len());
                for a in alts {
                    entries.push(self.compile(a, out)?);
                }
                self.add(NState::Split(entries))
            }
            Ast::Repeat { inner, min, max } => {
                let mut s = out;
                match max {
                    None => {
                        let lp = self.add(NState::Split(Vec::new()))?;
                        let body = self.compile(inner, lp)?;
                        self.states[lp] = NState::Split(vec![body, out]);
                        s = lp;
                    }
                    Some(max) => {
                        for _ in *min..*max {
                            let body = self.compile(inner, s)?;
                            s = self.add(NState::Split(vec![body, out]))?;
                        }
                    }
                }
                for _ in 0..*min {
                    s = self.compile(inner, s)?;
                }
                Ok(s)
            }
        }
    }

    fn class(&mut self, cls: &CharClass, out: usize) -> Result<usize, RegexError> {
        let mut entries = Vec::new();
        for &(lo, hi) in &cls.0 {
            for seq in utf8::sequences(lo, hi) {
                let mut s = out;
                for &(blo, bhi) in seq.iter().rev() {
                    s = self.add(NState::Range {
                        lo: blo,
                        hi: bhi,
                        next: s,
                    })?;
                }
                entries.push(s);
            }
        }
        if entries.len() == 1 {
            Ok(entries[0])
        } else {
            self.add(NState::Split(entries))
        }
    }

    fn closure(
        &self,
        seeds: impl IntoIterator<Item = usize>,
        seen: &mut [u32],
        mark: u32,
    ) -> Vec<usize> {
        let mut stack: Vec<usize> = seeds.into_iter().collect();
        let mut out = Vec::new();
        while let Some(s) = stack.pop() {
            if seen[s] == mark {
                continue;
            }
            seen[s] = mark;
            match &self.states[s] {
                NState::Split(next) => stack.extend(next.iter().rev()),
                _ => out.push(s),
            }
        }
        out.sort_unstable();
        out
    }
}

/// Deterministic automaton over bytes. Every state can reach an accepting
/// state, except possibly the start state of an empty language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fsm {
    trans: Vec<u32>,
    accepting: Vec<bool>,
    live_out: Vec<bool>,
}

impl Fsm {
    pub(crate) fn from_ast(ast: &Ast) -> Result<Self, RegexError> {
        let mut nfa = Nfa { states: Vec::new() };
        let m = nfa.add(NState::Match)?;
        let start = nfa.compile(ast, m)?;

        // Byte equivalence classes from every range boundary.
        let mut bounds = [false; 257];
        bounds[0] = true;
        bounds[256] = true;
        for s in &nfa.states {
            if let NState::Range { lo, hi, .. } = s {
                bounds[*lo as usize] = true;
                bounds[*hi as usize + 1] = true;
            }
        }
        let mut classes: Vec<(u8, u8)> = Vec::new();
        let mut lo = 0usize;
        for (b, &edge) in bounds.iter().enumerate().skip(1) {
            if edge {
                classes.push((lo as u8, (b - 1) as u8));
                lo = b;
            }
        }

        let mut seen = vec![0u32; nfa.states.len()];
        let mut mark = 1u32;
        let mut ids: HashMap<Vec<usize>, u32> = HashMap::new();
        let mut sets: Vec<Vec<usize>> = Vec::new();
        let mut trans: Vec<u32> = Vec::new();
        let mut accepting = Vec::new();

        let first = nfa.closure([start], &mut seen, mark);
        ids.insert(first.clone(), 0);
        sets.push(first);
        let mut queue = VecDeque::from([0u32]);
        while let Some(d) = queue.pop_front() {
            let set = sets[d as usize].clone();
            accepting.push(set.iter().any(|&s| matches!(nfa.states[s], NState::Match)));
            let mut row = [DEAD; 256];
            for &(clo, chi) in &classes {
                let next: Vec<usize> = set
                    .iter()
                    .filter_map(|&s| match nfa.states[s] {
                        NState::Range { lo, hi, next } if lo <= clo && chi <= hi => Some(next),
                        _ => None,
                    })
                    .collect();
                if next.is_empty() {
                    continue;
                }
                mark += 1;
                let closed = nfa.closure(next, &mut seen, mark);
                let target = match ids.get(&closed) {
                    Some(&t) => t,
                    None => {
                        if sets.len() >= MAX_DFA_STATES {
                            return Err(RegexError::TooLarge("DFA state limit exceeded".into()));
                        }
                        let t = sets.len() as u32;
                        ids.insert(closed.clone(), t);
                        sets.push(closed);
                        queue.push_back(t);
                        t
                    }
                };
                row[clo as usize..=chi as usize].fill(target);
            }
            trans.extend_from_slice(&row);
        }
        Ok(Self::pruned(trans, accepting))
    }

    /// Automaton for exactly one byte string.
    pub fn literal(bytes: &[u8]) -> Self {
        let n = bytes.len() + 1;
        let mut trans = vec![DEAD; n * 256];
        for (i, &b) in bytes.iter().enumerate() {
            trans[i * 256 + b as usize] = (i + 1) as u32;
        }
        let mut accepting = vec![false; n];
        accepting[n - 1] = true;
        Self::pruned(trans, accepting)
    }

    /// Drops states that cannot reach acceptance and renumbers the rest in
    /// breadth-first order from the start state.
    fn pruned(trans: Vec<u32>, accepting: Vec<bool>) -> Self {
        let n = accepting.len();
        let mut rev: Vec<Vec<u32>> = vec![Vec::new(); n];
        for s in 0..n {
            for &t in &trans[s * 256..(s + 1) * 256] {
                if t != DEAD && rev[t as usize].last() != Some(&(s as u32)) {
                    rev[t as usize].push(s as u32);
                }
            }
        }
        let mut live = accepting.clone();
        let mut stack: Vec<u32> = (0..n as u32).filter(|&s| accepting[s as usize]).collect();
        while let Some(s) = stack.pop() {
            for &p in &rev[s as usize] {
                if !live[p as usize] {
                    live[p as usize] = true;
                    stack.push(p);
                }
            }
        }

        let mut new_id = vec![DEAD; n];
        let mut order = vec![0u32];
        new_id[0] = 0;
        let mut i = 0;
        while i < order.len() {
            let s = order[i] as usize;
            i += 1;
            for &t in &trans[s * 256..(s + 1) * 256] {
                if t != DEAD && live[t as usize] && new_id[t as usize] == DEAD {
                    new_id[t as usize] = order.len() as u32;
                    order.push(t);
                }
            }
        }

        let mut out_trans = Vec::with_capacity(order.len() * 256);
        let mut out_acc = Vec::with_capacity(order.len());
        for &s in &order {
            let s = s as usize;
            out_acc.push(accepting[s]);
            out_trans.extend(trans[s * 256..(s + 1) * 256].iter().map(|&t| {
                if t == DEAD || !live[t as usize] {
                    DEAD
                } else {
                    new_id[t as usize]
                }
            }));
        }
        let live_out = (0..order.len())
            .map(|s| out_trans[s * 256..(s + 1) * 256].iter().any(|&t| t != DEAD))
            .collect();
        Self {
            trans: out_trans,
            accepting: out_acc,
            live_out,
        }
    }

    pub fn start(&self) -> u32 {
        0
    }

    pub fn num_states(&self) -> usize {
        self.accepting.len()
    }

    #[inline]
    pub fn next(&self, state: u32, byte: u8) -> Option<u32> {
        let t = self.trans[state as usize * 256 + byte as usize];
        (t != DEAD).then_some(t)
    }

    pub fn walk(&self, state: u32, bytes: &[u8]) -> Option<u32> {
        bytes.iter().try_fold(state, |s, &b| self.next(s, b))
    }

    pub fn is_accepting(&self, state: u32) -> bool {
        self.accepting[state as usize]
    }

    /// Whether any byte leads out of `state`.
    pub fn has_transitions(&self, state: u32) -> bool {
        self.live_out[state as usize]
    }

    /// Whether the start state can reach acceptance at all.
    pub fn is_empty_language(&self) -> bool {
        !self.accepting[0] && !self.live_out[0]
    }

    pub fn matches(&self, bytes: &[u8]) -> bool {
        self.walk(0, bytes).is_some_and(|s| self.is_accepting(s))
    }

    /// Transition table as byte ranges per state.
    fn edges(&self, state: usize) -> Vec<(u8, u8, u32)> {
        let row = &self.trans[state * 256..(state + 1) * 256];
        let mut out: Vec<(u8, u8, u32)> = Vec::new();
        for (b, &t) in row.iter().enumerate() {
            if t == DEAD {
                continue;
            }
            match out.last_mut() {
                Some(last) if last.2 == t && last.1 as usize + 1 == b => last.1 = b as u8,
                _ => out.push((b as u8, b as u8, t)),
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct FsmRepr {
    accepting: Vec<bool>,
    edges: Vec<Vec<(u8, u8, u32)>>,
}

impl Serialize for Fsm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        FsmRepr {
            accepting: self.accepting.clone(),
            edges: (0..self.num_states()).map(|i| self.edges(i)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Fsm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = FsmRepr::deserialize(d)?;
        let n = repr.accepting.len();
        if n == 0 || repr.edges.len() != n {
            return Err(D::Error::custom("state count mismatch"));
        }
        let mut trans = vec![DEAD; n * 256];
        for (s, edges) in repr.edges.iter().enumerate() {
            for &(lo, hi, t) in edges {
                if lo > hi || t as usize >= n {
                    return Err(D::Error::custom("bad transition"));
                }
                trans[s * 256 + lo as usize..=s * 256 + hi as usize].fill(t);
            }
        }
        let fsm = Fsm::pruned(trans, repr.accepting);
        if fsm.num_states() != n {
            return Err(D::Error::custom("automaton is not pruned"));
        }
        Ok(fsm)
    }
}

//! Byte-level Earley recognizer used as a grammar oracle.
//!
//! Terminals are matched with regex-automata DFAs, one "lexing" item per
//! terminal occurrence in flight, so the recognizer shares no code with the
//! pushdown engine under test. Nullable symbols are handled by advancing
//! over them at prediction time.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use regex_automata::util::primitives::StateID;

use guidedec::grammar::{Grammar, Symbol};
use guidedec::{TokenMask, Vocabulary};

use crate::regex_oracle::RegexOracle;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Sym {
    T(usize),
    N(usize),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct Item {
    prod: usize,
    dot: usize,
    origin: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct Lex {
    term: usize,
    state: StateID,
    item: Item,
}

#[derive(Default)]
struct Set {
    items: Vec<Item>,
    seen: HashSet<Item>,
    lexes: Vec<Lex>,
    lex_seen: HashSet<Lex>,
}

/// Recognizer state after some input: the Earley sets read so far.
#[derive(Clone)]
pub struct Chart(Vec<Arc<Set>>);

impl Chart {
    pub fn len(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct GrammarOracle {
    prods: Vec<(usize, Vec<Sym>)>,
    by_lhs: Vec<Vec<usize>>,
    terms: Vec<RegexOracle>,
    term_nullable: Vec<bool>,
    nullable: Vec<bool>,
    start: usize,
}

impl GrammarOracle {
    pub fn new(g: &Grammar) -> Result<Self, String> {
        let ids: HashMap<&str, usize> = g
            .rules()
            .iter()
            .enumerate()
            .map(|(i, r)| (r.name.as_str(), i))
            .collect();
        let mut terms = Vec::new();
        let mut term_ids: HashMap<&Symbol, usize> = HashMap::new();
        let mut prods = Vec::new();
        let mut by_lhs = vec![Vec::new(); g.rules().len()];
        for (ri, rule) in g.rules().iter().enumerate() {
            for alt in &rule.alts {
                let mut syms = Vec::new();
                for s in alt {
                    match s {
                        Symbol::Literal(b) if b.is_empty() => {}
                        Symbol::Rule(n) => syms.push(Sym::N(
                            *ids.get(n.as_str())
                                .ok_or_else(|| format!("undefined rule {n}"))?,
                        )),
                        t => {
                            let id = match term_ids.get(t) {
                                Some(&id) => id,
                                None => {
                                    let o = match t {
                                        Symbol::Literal(b) => RegexOracle::literal(b),
                                        Symbol::Pattern(p) => RegexOracle::new(p)?,
                                        Symbol::Rule(_) => unreachable!(),
                                    };
                                    terms.push(o);
                                    term_ids.insert(t, terms.len() - 1);
                                    terms.len() - 1
                                }
                            };
                            syms.push(Sym::T(id));
                        }
                    }
                }
                by_lhs[ri].push(prods.len());
                prods.push((ri, syms));
            }
        }
        let term_nullable: Vec<bool> = terms.iter().map(|t| t.is_final(t.start())).collect();
        let mut nullable = vec![false; by_lhs.len()];
        let mut changed = true;
        while changed {
            changed = false;
            for (lhs, syms) in &prods {
                if !nullable[*lhs]
                    && syms.iter().all(|s| match *s {
                        Sym::T(t) => term_nullable[t],
                        Sym::N(n) => nullable[n],
                    })
                {
                    nullable[*lhs] = true;
                    changed = true;
                }
            }
        }
        let start = *ids
            .get(g.start())
            .ok_or_else(|| format!("undefined start rule {}", g.start()))?;
        Ok(Self {
            prods,
            by_lhs,
            terms,
            term_nullable,
            nullable,
            start,
        })
    }

    pub fn start(&self) -> Chart {
        let mut set = Set::default();
        let mut work = Vec::new();
        for &p in &self.by_lhs[self.start] {
            push(
                &mut set,
                &mut work,
                Item {
                    prod: p,
                    dot: 0,
                    origin: 0,
                },
            );
        }
        let mut chart = Chart(Vec::new());
        self.close(&chart, &mut set, work);
        chart.0.push(Arc::new(set));
        chart
    }

    /// Reads one byte; `None` if the input is no longer a prefix of any
    /// sentence.
    pub fn feed(&self, chart: &Chart, b: u8) -> Option<Chart> {
        let cur = chart.0.last().expect("charts are never empty");
        let mut set = Set::default();
        let mut work = Vec::new();
        for lx in &cur.lexes {
            let Some(q) = self.terms[lx.term].step(lx.state, b) else {
                continue;
            };
            let next = Lex { state: q, ..*lx };
            if set.lex_seen.insert(next) {
                set.lexes.push(next);
            }
            if self.terms[lx.term].is_final(q) {
                push(
                    &mut set,
                    &mut work,
                    Item {
                        dot: lx.item.dot + 1,
                        ..lx.item
                    },
                );
            }
        }
        if set.lexes.is_empty() && work.is_empty() {
            return None;
        }
        self.close(chart, &mut set, work);
        let mut out = chart.clone();
        out.0.push(Arc::new(set));
        if out.0.last().unwrap().lexes.is_empty() && !self.accepts(&out) {
            return None;
        }
        Some(out)
    }

    pub fn feed_all(&self, chart: &Chart, bytes: &[u8]) -> Option<Chart> {
        let mut c = chart.clone();
        for &b in bytes {
            c = self.feed(&c, b)?;
        }
        Some(c)
    }

    pub fn accepts(&self, chart: &Chart) -> bool {
        chart.0.last().unwrap().items.iter().any(|it| {
            let (lhs, syms) = &self.prods[it.prod];
            *lhs == self.start && it.origin == 0 && it.dot == syms.len()
        })
    }

    pub fn recognizes(&self, text: &[u8]) -> bool {
        self.feed_all(&self.start(), text)
            .is_some_and(|c| self.accepts(&c))
    }

    pub fn is_prefix(&self, text: &[u8]) -> bool {
        self.feed_all(&self.start(), text).is_some()
    }

    /// Mask a correct engine must produce after `prefix` (see
    /// [`RegexOracle::mask`]).
    pub fn mask(&self, prefix: &[u8], vocab: &Vocabulary) -> Option<TokenMask> {
        let c = self.feed_all(&self.start(), prefix)?;
        Some(self.mask_at(&c, vocab))
    }

    pub fn mask_at(&self, chart: &Chart, vocab: &Vocabulary) -> TokenMask {
        let mut m = TokenMask::empty(vocab.len());
        for (id, bytes) in vocab.text_tokens() {
            if self.feed_all(chart, bytes).is_some() {
                m.set(id);
            }
        }
        if self.accepts(chart) {
            m.set(vocab.eos_id());
        }
        m
    }

    fn close(&self, chart: &Chart, set: &mut Set, mut work: Vec<Item>) {
        let k = chart.0.len();
        while let Some(it) = work.pop() {
            let (lhs, syms) = &self.prods[it.prod];
            match syms.get(it.dot) {
                None => {
                    if it.origin == k {
                        // Empty completions were already advanced over at
                        // prediction time.
                        continue;
                    }
                    for w in chart.0[it.origin].items.iter() {
                        if self.prods[w.prod].1.get(w.dot) == Some(&Sym::N(*lhs)) {
                            push(
                                set,
                                &mut work,
                                Item {
                                    dot: w.dot + 1,
                                    ..*w
                                },
                            );
                        }
                    }
                }
                Some(&Sym::N(n)) => {
                    for &p in &self.by_lhs[n] {
                        push(
                            set,
                            &mut work,
                            Item {
                                prod: p,
                                dot: 0,
                                origin: k,
                            },
                        );
                    }
                    if self.nullable[n] {
                        push(
                            set,
                            &mut work,
                            Item {
                                dot: it.dot + 1,
                                ..it
                            },
                        );
                    }
                }
                Some(&Sym::T(t)) => {
                    let lx = Lex {
                        term: t,
                        state: self.terms[t].start(),
                        item: it,
                    };
                    if set.lex_seen.insert(lx) {
                        set.lexes.push(lx);
                    }
                    if self.term_nullable[t] {
                        push(
                            set,
                            &mut work,
                            Item {
                                dot: it.dot + 1,
                                ..it
                            },
                        );
                    }
                }
            }
        }
    }
}

fn push(set: &mut Set, work: &mut Vec<Item>, it: Item) {
    if set.seen.insert(it) {
        set.items.push(it);
        work.push(it);
    }
}

/// Compares two grammars' languages on every string over `alphabet` of
/// length at most `max_len`, walking prefixes depth-first and pruning once
/// both recognizers reject. Returns the number of sentences found, or the
/// first string on which they disagree.
pub fn compare_languages(
    a: &GrammarOracle,
    b: &GrammarOracle,
    alphabet: &[u8],
    max_len: usize,
) -> Result<usize, Vec<u8>> {
    #[allow(clippy::too_many_arguments)]
    fn go(
        a: &GrammarOracle,
        b: &GrammarOracle,
        ca: Option<Chart>,
        cb: Option<Chart>,
        text: &mut Vec<u8>,
        alphabet: &[u8],
        max_len: usize,
        found: &mut usize,
    ) -> Result<(), Vec<u8>> {
        let acc_a = ca.as_ref().is_some_and(|c| a.accepts(c));
        let acc_b = cb.as_ref().is_some_and(|c| b.accepts(c));
        if acc_a != acc_b {
            return Err(text.clone());
        }
        *found += acc_a as usize;
        if text.len() == max_len {
            return Ok(());
        }
        for &x in alphabet {
            let na = ca.as_ref().and_then(|c| a.feed(c, x));
            let nb = cb.as_ref().and_then(|c| b.feed(c, x));
            if na.is_none() && nb.is_none() {
                continue;
            }
            text.push(x);
            go(a, b, na, nb, text, alphabet, max_len, found)?;
            text.pop();
        }
        Ok(())
    }
    let mut found = 0;
    go(
        a,
        b,
        Some(a.start()),
        Some(b.start()),
        &mut Vec::new(),
        alphabet,
        max_len,
        &mut found,
    )?;
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use guidedec::grammar::{parse_grammar, JSON_GRAMMAR};

    fn oracle(src: &str) -> GrammarOracle {
        GrammarOracle::new(&parse_grammar(src).unwrap()).unwrap()
    }

    #[test]
    fn right_recursive_toy() {
        let o = oracle(r#"start: "a" start | "b""#);
        for s in ["b", "ab", "aab"] {
            assert!(o.recognizes(s.as_bytes()), "{s}");
        }
        assert!(!o.recognizes(b"a"));
        assert!(o.is_prefix(b"aa"));
        assert!(!o.is_prefix(b"ba"));
    }

    #[test]
    fn nullable_rules_and_terminals() {
        let o = oracle(r#"start: x y "c"; x: "" | "a"; y: /b*/"#);
        for s in ["c", "ac", "bc", "abbc"] {
            assert!(o.recognizes(s.as_bytes()), "{s}");
        }
        assert!(!o.recognizes(b"ba"));
    }

    #[test]
    fn json_documents() {
        let o = oracle(JSON_GRAMMAR);
        for s in [
            r#"{"document_ids": ["x"]}"#,
            "[1, -2.5e3, true, null, {}]",
            r#""😀""#,
            "0",
        ] {
            assert!(o.recognizes(s.as_bytes()), "{s}");
        }
        for s in ["[1,]", "01", r#"{"a"}"#, " 1", r#""\ud800""#] {
            assert!(!o.recognizes(s.as_bytes()), "{s}");
        }
        assert!(o.is_prefix(br#"{"a": [1"#));
    }

    #[test]
    fn language_comparison_finds_differences() {
        let a = oracle(r#"start: "a" start | "b""#);
        let b = oracle(r#"start: "a" start | "b" | "aab""#);
        assert_eq!(compare_languages(&a, &a, b"ab", 6), Ok(6));
        assert_eq!(compare_languages(&a, &b, b"ab", 6), Ok(6));
        let c = oracle(r#"start: "a" start | "b" | "abb""#);
        // Depth-first order reaches a^3 "abb" before the shorter witnesses.
        assert_eq!(compare_languages(&a, &c, b"ab", 6), Err(b"aaaabb".to_vec()));
        assert_eq!(compare_languages(&a, &c, b"ab", 3), Err(b"abb".to_vec()));
    }
}

//! Context-free grammars over bytes.
//!
//! Surface syntax (one rule per `name: alternatives`, rules end at `;`, at
//! the next `name:` or at end of input):
//!
//! ```text
//! # comment
//! start: value
//! value: object | array | STRING | "true" | "false" | "null"
//! members: pair ("," ws pair)*
//! STRING: /"([^"\\]|\\.)*"/
//! empty: ""
//! ```
//!
//! Quoted strings are byte literals with JSON-style escapes plus `\xHH` for
//! raw bytes; `/.../` delimits a regex terminal (`\/` for a literal slash);
//! `( )` groups, and `*`, `+`, `?` repeat. A lone `""` is an epsilon
//! production. The start rule is `start` when defined, else the first rule.
//! Left recursion is rejected.

mod inline;
mod parse;
pub mod schema;

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::regex_fsm::{compile_regex, RegexError};

pub use inline::{inline_rules, DEFAULT_INLINE_MAX_REFS};
pub use parse::parse_grammar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrammarError {
    #[error("grammar syntax error at line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("undefined rule `{0}`")]
    UndefinedRule(String),
    #[error("rule `{rule}` is left-recursive ({path}); rewrite it right-recursively")]
    LeftRecursionUnsupported { rule: String, path: String },
    #[error("rule `{0}` is defined twice")]
    DuplicateRule(String),
    #[error("bad terminal /{pattern}/: {source}")]
    Regex {
        pattern: String,
        #[source]
        source: RegexError,
    },
    #[error("grammar too ambiguous: more than {limit} live parser configurations")]
    TooAmbiguous { limit: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Literal(Vec<u8>),
    Pattern(String),
    Rule(String),
}

/// A sequence of symbols; empty means epsilon.
pub type Production = Vec<Symbol>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub name: String,
    pub alts: Vec<Production>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    rules: Vec<Rule>,
    start: String,
}

impl Grammar {
    /// Builds and validates a grammar from rules in definition order.
    pub fn new(rules: Vec<Rule>, start: impl Into<String>) -> Result<Self, GrammarError> {
        let g = Self {
            rules,
            start: start.into(),
        };
        g.validate()?;
        Ok(g)
    }

    pub(crate) fn new_unchecked(rules: Vec<Rule>, start: String) -> Self {
        Self { rules, start }
    }

    pub fn start(&self) -> &str {
        &self.start
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name == name)
    }

    fn validate(&self) -> Result<(), GrammarError> {
        let mut names = HashSet::new();
        for r in &self.rules {
            if !names.insert(r.name.as_str()) {
                return Err(GrammarError::DuplicateRule(r.name.clone()));
            }
        }
        if !names.contains(self.start.as_str()) {
            return Err(GrammarError::UndefinedRule(self.start.clone()));
        }
        let mut nullable_pattern = HashMap::new();
        for r in &self.rules {
            for sym in r.alts.iter().flatten() {
                match sym {
                    Symbol::Rule(n) if !names.contains(n.as_str()) => {
                        return Err(GrammarError::UndefinedRule(n.clone()))
                    }
                    Symbol::Pattern(p) if !nullable_pattern.contains_key(p) => {
                        let fsm = compile_regex(p).map_err(|source| GrammarError::Regex {
                            pattern: p.clone(),
                            source,
                        })?;
                        nullable_pattern.insert(p.clone(), fsm.is_accepting(fsm.start()));
                    }
                    _ => {}
                }
            }
        }
        self.check_left_recursion(&nullable_pattern)
    }

    fn nullable_rules(&self, nullable_pattern: &HashMap<String, bool>) -> HashSet<&str> {
        let mut nullable = HashSet::new();
        loop {
            let before = nullable.len();
            for r in &self.rules {
                if nullable.contains(r.name.as_str()) {
                    continue;
                }
                let any = r.alts.iter().any(|alt| {
                    alt.iter().all(|s| match s {
                        Symbol::Literal(b) => b.is_empty(),
                        Symbol::Pattern(p) => nullable_pattern.get(p).copied().unwrap_or(false),
                        Symbol::Rule(n) => nullable.contains(n.as_str()),
                    })
                });
                if any {
                    nullable.insert(r.name.as_str());
                }
            }
            if nullable.len() == before {
                return nullable;
            }
        }
    }

    /// Rejects any rule that can reach itself in leftmost position, looking
    /// through nullable prefixes.
    fn check_left_recursion(
        &self,
        nullable_pattern: &HashMap<String, bool>,
    ) -> Result<(), GrammarError> {
        let nullable = self.nullable_rules(nullable_pattern);
        let is_nullable = |s: &Symbol| match s {
            Symbol::Literal(b) => b.is_empty(),
            Symbol::Pattern(p) => nullable_pattern.get(p).copied().unwrap_or(false),
            Symbol::Rule(n) => nullable.contains(n.as_str()),
        };
        let mut left: HashMap<&str, Vec<&str>> = HashMap::new();
        for r in &self.rules {
            let edges = left.entry(r.name.as_str()).or_default();
            for alt in &r.alts {
                for s in alt {
                    if let Symbol::Rule(n) = s {
                        if !edges.contains(&n.as_str()) {
                            edges.push(n.as_str());
                        }
                    }
                    if !is_nullable(s) {
                        break;
                    }
                }
            }
        }
        // Depth-first search for a cycle, reporting the first one found in
        // rule order.
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let mut mark: HashMap<&str, Mark> = self
            .rules
            .iter()
            .map(|r| (r.name.as_str(), Mark::New))
            .collect();
        for r in &self.rules {
            if mark[r.name.as_str()] != Mark::New {
                continue;
            }
            let mut path: Vec<(&str, usize)> = vec![(r.name.as_str(), 0)];
            mark.insert(r.name.as_str(), Mark::Active);
            while let Some((node, i)) = path.last_mut() {
                let succ = &left[*node];
                if *i == succ.len() {
                    mark.insert(*node, Mark::Done);
                    path.pop();
                    continue;
                }
                let next = succ[*i];
                *i += 1;
                match mark[next] {
                    Mark::New => {
                        mark.insert(next, Mark::Active);
                        path.push((next, 0));
                    }
                    Mark::Active => {
                        let from = path.iter().position(|(n, _)| *n == next).unwrap();
                        let mut cycle: Vec<&str> = path[from..].iter().map(|(n, _)| *n).collect();
                        cycle.push(next);
                        return Err(GrammarError::LeftRecursionUnsupported {
                            rule: next.to_string(),
                            path: cycle.join(" -> "),
                        });
                    }
                    Mark::Done => {}
                }
            }
        }
        Ok(())
    }

    /// Number of references to each rule across all productions.
    pub(crate) fn ref_counts(&self) -> HashMap<&str, usize> {
        let mut counts: HashMap<&str, usize> =
            self.rules.iter().map(|r| (r.name.as_str(), 0)).collect();
        for sym in self.rules.iter().flat_map(|r| r.alts.iter().flatten()) {
            if let Symbol::Rule(n) = sym {
                *counts.entry(n.as_str()).or_default() += 1;
            }
        }
        counts
    }

    /// Rules reachable from `name` through one or more references.
    pub(crate) fn reachable_from(&self, name: &str) -> HashSet<&str> {
        let mut seen = HashSet::new();
        let mut stack = vec![name];
        while let Some(n) = stack.pop() {
            if let Some(r) = self.rule(n) {
                for sym in r.alts.iter().flatten() {
                    if let Symbol::Rule(m) = sym {
                        if seen.insert(m.as_str()) {
                            stack.push(m.as_str());
                        }
                    }
                }
            }
        }
        seen
    }
}

fn write_literal(f: &mut fmt::Formatter<'_>, bytes: &[u8]) -> fmt::Result {
    f.write_str("\"")?;
    match std::str::from_utf8(bytes) {
        Ok(s) => {
            for c in s.chars() {
                match c {
                    '"' => f.write_str("\\\"")?,
                    '\\' => f.write_str("\\\\")?,
                    '\n' => f.write_str("\\n")?,
                    '\t' => f.write_str("\\t")?,
                    '\r' => f.write_str("\\r")?,
                    c if (c as u32) < 0x20 || c as u32 == 0x7f => write!(f, "\\x{:02x}", c as u32)?,
                    c => write!(f, "{c}")?,
                }
            }
        }
        Err(_) => {
            for &b in bytes {
                if b.is_ascii_graphic() && b != b'"' && b != b'\\' || b == b' ' {
                    write!(f, "{}", b as char)?;
                } else {
                    write!(f, "\\x{b:02x}")?;
                }
            }
        }
    }
    f.write_str("\"")
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Literal(b) => write_literal(f, b),
            Symbol::Pattern(p) => write!(f, "/{}/", p.replace('/', "\\/")),
            Symbol::Rule(n) => f.write_str(n),
        }
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            write!(f, "{}:", r.name)?;
            for (i, alt) in r.alts.iter().enumerate() {
                if i > 0 {
                    f.write_str(" |")?;
                }
                if alt.is_empty() {
                    f.write_str(" \"\"")?;
                }
                for s in alt {
                    write!(f, " {s}")?;
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Grammar for arbitrary JSON documents, shipped as a fixture.
pub const JSON_GRAMMAR: &str = include_str!("json.gbnf");

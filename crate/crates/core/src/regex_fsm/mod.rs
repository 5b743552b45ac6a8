//! Regex constraints: compile a pattern to a byte-level DFA and precompute,
//! for every state, the set of tokens that keep the automaton alive.
//!
//! Supported syntax: literals, escapes (`\d \w \s` are ASCII, `\xHH`,
//! `\uHHHH`), classes with ranges and negation, `.`, `* + ? {m} {m,} {m,n}`,
//! alternation and (non-capturing or ignored-capture) groups. A leading `^`
//! and trailing `$` are accepted as no-ops since matching is always
//! whole-string. Lookaround, backreferences, lazy quantifiers, inline flags
//! and Unicode property classes are rejected.

mod fsm;
mod index;
mod parse;
mod utf8;

use thiserror::Error;

pub use fsm::Fsm;
pub use index::{build_index, FsmIndex, FsmState, IndexFileError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegexError {
    #[error("regex syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unsupported regex feature at {pos}: {feature}")]
    UnsupportedFeature { feature: String, pos: usize },
    #[error("regex too large: {0}")]
    TooLarge(String),
}

/// Compiles `pattern` into a pruned deterministic automaton over bytes that
/// accepts exactly the UTF-8 encodings of the strings the pattern matches
/// in full.
pub fn compile_regex(pattern: &str) -> Result<Fsm, RegexError> {
    let ast = parse::parse(pattern)?;
    Fsm::from_ast(&ast)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digits_plus() {
        let f = compile_regex("[0-9]+").unwrap();
        assert!(f.matches(b"42"));
        assert!(!f.matches(b""));
        assert!(!f.matches(b"4a"));
    }

    #[test]
    fn two_string_language() {
        let f = compile_regex("(a|b)c").unwrap();
        for s in [&b"ac"[..], b"bc"] {
            assert!(f.matches(s));
        }
        for s in [&b"a"[..], b"c", b"abc", b"cc", b""] {
            assert!(!f.matches(s));
        }
    }

    #[test]
    fn lookahead_is_unsupported() {
        assert!(matches!(
            compile_regex("(?=x)"),
            Err(RegexError::UnsupportedFeature { .. })
        ));
    }

    #[test]
    fn counted_repetition() {
        let f = compile_regex("a{2,3}b{2}c{1,}").unwrap();
        assert!(f.matches(b"aabbc"));
        assert!(f.matches(b"aaabbccc"));
        assert!(!f.matches(b"abbc"));
        assert!(!f.matches(b"aaaabbc"));
        assert!(!f.matches(b"aabbbc"));
    }

    #[test]
    fn dot_and_negated_classes_are_utf8_aware() {
        let f = compile_regex("[^a]").unwrap();
        assert!(f.matches("é".as_bytes()));
        assert!(f.matches("😀".as_bytes()));
        assert!(!f.matches(b"a"));
        assert!(!f.matches(&[0xC3]));
        assert!(!f.matches(&[0xFF]));
        let dot = compile_regex(".").unwrap();
        assert!(!dot.matches(b"\n"));
        assert!(dot.matches("ğ".as_bytes()));
    }

    #[test]
    fn every_state_is_live() {
        let f = compile_regex("ab*c|d[0-9]{2}").unwrap();
        for s in 0..f.num_states() as u32 {
            assert!(f.is_accepting(s) || f.has_transitions(s));
        }
    }

    #[test]
    fn empty_class_is_empty_language() {
        let f = compile_regex(r"[^\x00-\x{10FFFF}]").unwrap();
        assert!(f.is_empty_language());
        assert_eq!(f.num_states(), 1);
    }

    #[test]
    fn reference_id_shape() {
        let f = compile_regex(r"[0-9]{3}\.[0-9]{4}\.[A-Z]+\.[0-9]{4}_[0-9]+_page_[0-9]+").unwrap();
        assert!(f.matches(b"344.0321.DOR.2021_1630505603_page_623"));
        assert!(!f.matches(b"344.0321.DOR.2021_1630505603_page_"));
    }
}

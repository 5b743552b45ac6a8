//! Constrained decoding over a fixed token vocabulary.
//!
//! Three interchangeable backends restrict which tokens a model may emit:
//! a regex automaton with a precomputed per-state token index
//! ([`regex_fsm`]), a pushdown grammar engine ([`pda`]) and a byte-level
//! JSON format enforcer ([`enforcer`]). All implement [`Guide`], and
//! [`decoder::decode`] drives any of them against a [`decoder::LogitSource`].

pub mod build;
pub mod constraint;
pub mod decoder;
pub mod enforcer;
pub mod grammar;
pub mod pda;
pub mod regex_fsm;
pub mod stack;
pub mod trie;
pub mod vocab;

pub use build::{build_constraint, BuildError, BuildOptions, ConstraintSource};
pub use constraint::{Backend, Constraint, ConstraintError, ConstraintState, Guide, Unconstrained};
pub use vocab::{TokenId, TokenMask, Vocabulary};

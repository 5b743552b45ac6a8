//! Backend-agnostic constraint interface used by the decoder.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::enforcer::{EnforcerState, FormatEnforcer};
use crate::pda::{PdaEngine, PdaState};
use crate::regex_fsm::{FsmIndex, FsmState};
use crate::vocab::{TokenId, TokenMask, Vocabulary};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("token {token} is not allowed in the current state")]
    IllegalToken { token: TokenId },
    #[error("token id {0} is outside the vocabulary")]
    UnknownToken(TokenId),
    #[error("constraint already finished")]
    Finished,
    #[error("grammar too ambiguous: more than {limit} live parser configurations")]
    TooAmbiguous { limit: usize },
}

/// A compiled constraint: knows its start state, which tokens each state
/// allows, and how a state evolves when a token is emitted.
///
/// Compiled constraints are immutable and shareable across threads; states
/// are plain values owned by one decode sequence.
pub trait Guide: Send + Sync {
    type State: Clone + fmt::Debug + Send + Sync;

    fn vocab(&self) -> &Vocabulary;

    fn start(&self) -> Self::State;

    /// Tokens allowed in `state`, eos included when the output so far is
    /// complete. Empty for finished states.
    fn mask(&self, state: &Self::State) -> Result<Arc<TokenMask>, ConstraintError>;

    fn advance(&self, state: &Self::State, token: TokenId) -> Result<Self::State, ConstraintError>;

    /// True once eos has been consumed.
    fn is_finished(&self, state: &Self::State) -> bool;
}

/// Which decoding backend to use.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Regex automaton with precomputed per-state token index.
    Fsm,
    /// Pushdown grammar engine.
    Pda,
    /// Byte-level JSON format enforcer.
    Enforcer,
    /// No constraint.
    None,
}

impl Backend {
    pub const CONSTRAINED: [Backend; 3] = [Backend::Fsm, Backend::Pda, Backend::Enforcer];

    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Fsm => "fsm",
            Backend::Pda => "pda",
            Backend::Enforcer => "enforcer",
            Backend::None => "none",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fsm" => Ok(Backend::Fsm),
            "pda" => Ok(Backend::Pda),
            "enforcer" => Ok(Backend::Enforcer),
            "none" => Ok(Backend::None),
            other => Err(format!(
                "unknown backend {other:?} (expected fsm, pda, enforcer or none)"
            )),
        }
    }
}

/// Pass-through constraint: every token is allowed until eos.
#[derive(Debug, Clone)]
pub struct Unconstrained {
    vocab: Arc<Vocabulary>,
    all: Arc<TokenMask>,
    none: Arc<TokenMask>,
}

impl Unconstrained {
    pub fn new(vocab: Arc<Vocabulary>) -> Self {
        let all = Arc::new(TokenMask::full(vocab.len()));
        let none = Arc::new(TokenMask::empty(vocab.len()));
        Self { vocab, all, none }
    }
}

impl Guide for Unconstrained {
    type State = bool;

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn start(&self) -> bool {
        false
    }

    fn mask(&self, finished: &bool) -> Result<Arc<TokenMask>, ConstraintError> {
        Ok(if *finished {
            self.none.clone()
        } else {
            self.all.clone()
        })
    }

    fn advance(&self, finished: &bool, token: TokenId) -> Result<bool, ConstraintError> {
        if *finished {
            return Err(ConstraintError::Finished);
        }
        if token as usize >= self.vocab.len() {
            return Err(ConstraintError::UnknownToken(token));
        }
        Ok(token == self.vocab.eos_id())
    }

    fn is_finished(&self, finished: &bool) -> bool {
        *finished
    }
}

/// Any compiled constraint, dispatching to the selected backend.
#[derive(Clone)]
pub enum Constraint {
    Fsm(Arc<FsmIndex>),
    Pda(Arc<PdaEngine>),
    Enforcer(Arc<FormatEnforcer>),
    None(Arc<Unconstrained>),
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Constraint::{}", self.backend())
    }
}

/// State of a [`Constraint`].
#[derive(Debug, Clone)]
pub enum ConstraintState {
    Fsm(FsmState),
    Pda(PdaState),
    Enforcer(EnforcerState),
    None(bool),
}

impl Constraint {
    pub fn backend(&self) -> Backend {
        match self {
            Constraint::Fsm(_) => Backend::Fsm,
            Constraint::Pda(_) => Backend::Pda,
            Constraint::Enforcer(_) => Backend::Enforcer,
            Constraint::None(_) => Backend::None,
        }
    }

    pub fn unconstrained(vocab: Arc<Vocabulary>) -> Self {
        Constraint::None(Arc::new(Unconstrained::new(vocab)))
    }
}

macro_rules! dispatch {
    ($self:expr, $state:expr, $g:ident, $s:ident => $body:expr, $wrap:ident) => {
        match ($self, $state) {
            (Constraint::Fsm($g), ConstraintState::Fsm($s)) => $wrap!(Fsm, $body),
            (Constraint::Pda($g), ConstraintState::Pda($s)) => $wrap!(Pda, $body),
            (Constraint::Enforcer($g), ConstraintState::Enforcer($s)) => $wrap!(Enforcer, $body),
            (Constraint::None($g), ConstraintState::None($s)) => $wrap!(None, $body),
            _ => panic!("constraint state belongs to a different backend"),
        }
    };
}

macro_rules! plain {
    ($v:ident, $e:expr) => {
        $e
    };
}

macro_rules! rewrap {
    ($v:ident, $e:expr) => {
        $e.map(ConstraintState::$v)
    };
}

impl Guide for Constraint {
    type State = ConstraintState;

    fn vocab(&self) -> &Vocabulary {
        match self {
            Constraint::Fsm(g) => g.vocab(),
            Constraint::Pda(g) => g.vocab(),
            Constraint::Enforcer(g) => g.vocab(),
            Constraint::None(g) => g.vocab(),
        }
    }

    fn start(&self) -> ConstraintState {
        match self {
            Constraint::Fsm(g) => ConstraintState::Fsm(g.start()),
            Constraint::Pda(g) => ConstraintState::Pda(g.start()),
            Constraint::Enforcer(g) => ConstraintState::Enforcer(g.start()),
            Constraint::None(g) => ConstraintState::None(g.start()),
        }
    }

    fn mask(&self, state: &ConstraintState) -> Result<Arc<TokenMask>, ConstraintError> {
        dispatch!(self, state, g, s => g.mask(s), plain)
    }

    fn advance(
        &self,
        state: &ConstraintState,
        token: TokenId,
    ) -> Result<ConstraintState, ConstraintError> {
        dispatch!(self, state, g, s => g.advance(s, token), rewrap)
    }

    fn is_finished(&self, state: &ConstraintState) -> bool {
        dispatch!(self, state, g, s => g.is_finished(s), plain)
    }
}

//! One entry point that turns a constraint description into a [`Constraint`]
//! for any backend.

use std::sync::Arc;

use thiserror::Error;

use crate::constraint::{Backend, Constraint};
use crate::enforcer::{FormatEnforcer, DEFAULT_ENFORCER_MEMO};
use crate::grammar::schema::{parse_schema_str, schema_to_grammar, schema_to_regex, SchemaError};
use crate::grammar::{parse_grammar, Grammar, GrammarError, Rule, Symbol};
use crate::pda::{PdaEngine, PdaOptions};
use crate::regex_fsm::{build_index, compile_regex, RegexError};
use crate::vocab::Vocabulary;

/// What the output must conform to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintSource {
    Regex(String),
    /// Grammar source text.
    Grammar(String),
    /// JSON schema text.
    JsonSchema(String),
}

impl ConstraintSource {
    pub fn kind(&self) -> &'static str {
        match self {
            ConstraintSource::Regex(_) => "regex",
            ConstraintSource::Grammar(_) => "grammar",
            ConstraintSource::JsonSchema(_) => "json-schema",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BuildError {
    #[error(transparent)]
    Regex(#[from] RegexError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("the {backend} backend cannot enforce a {kind} constraint")]
    Unsupported {
        backend: Backend,
        kind: &'static str,
    },
}

#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    pub pda: PdaOptions,
    /// Per-state memo size for the enforcer; `None` uses the default.
    pub enforcer_memo: Option<usize>,
}

/// Compiles `source` for `backend`.
///
/// The regex backend takes regexes and JSON schemas (converted to an
/// equivalent regex). The grammar backend takes all three kinds; a regex
/// becomes a one-terminal grammar. The enforcer only takes JSON schemas.
/// `Backend::None` ignores the source entirely.
pub fn build_constraint(
    backend: Backend,
    source: &ConstraintSource,
    vocab: Arc<Vocabulary>,
    opts: &BuildOptions,
) -> Result<Constraint, BuildError> {
    let unsupported = || BuildError::Unsupported {
        backend,
        kind: source.kind(),
    };
    Ok(match backend {
        Backend::None => Constraint::unconstrained(vocab),
        Backend::Fsm => {
            let pattern = match source {
                ConstraintSource::Regex(p) => p.clone(),
                ConstraintSource::JsonSchema(s) => schema_to_regex(&parse_schema_str(s)?),
                ConstraintSource::Grammar(_) => return Err(unsupported()),
            };
            Constraint::Fsm(Arc::new(build_index(compile_regex(&pattern)?, vocab)))
        }
        Backend::Pda => {
            let grammar = match source {
                ConstraintSource::Regex(p) => regex_grammar(p)?,
                ConstraintSource::Grammar(text) => parse_grammar(text)?,
                ConstraintSource::JsonSchema(s) => schema_to_grammar(&parse_schema_str(s)?),
            };
            Constraint::Pda(Arc::new(PdaEngine::new(&grammar, vocab, opts.pda)?))
        }
        Backend::Enforcer => match source {
            ConstraintSource::JsonSchema(s) => {
                let schema = parse_schema_str(s)?;
                let memo = opts.enforcer_memo.unwrap_or(DEFAULT_ENFORCER_MEMO);
                Constraint::Enforcer(Arc::new(FormatEnforcer::with_memo(&schema, vocab, memo)))
            }
            _ => return Err(unsupported()),
        },
    })
}

/// `start: /pattern/`
pub fn regex_grammar(pattern: &str) -> Result<Grammar, GrammarError> {
    Grammar::new(
        vec![Rule {
            name: "start".into(),
            alts: vec![vec![Symbol::Pattern(pattern.to_string())]],
        }],
        "start",
    )
}

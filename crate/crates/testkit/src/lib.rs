//! Test support for guidedec: brute-force oracles that share no code with
//! the engines they check, independent validators, and generators.

pub mod audit;
pub mod earley;
pub mod gen;
pub mod regex_oracle;
pub mod schema;
pub mod stub;
pub mod vocab;

pub use audit::{audit_decode, count_violations, Audit, HoldEos, Oracle};
pub use earley::{compare_languages, GrammarOracle};
pub use regex_oracle::RegexOracle;
pub use schema::{schema_oracle, schema_regex, validate_document, RAG_SCHEMA};
pub use stub::{Reply, StubServer};
pub use vocab::{json_vocab, synthetic_vocab};

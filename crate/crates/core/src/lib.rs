//! Classification of linear idempotent varieties by derivatives and order
//! derivatives, with checkable certificates.
//!
//! A theory is linear when every identity has at most one operation symbol
//! per side. For such theories, congruence modularity, satisfaction of a
//! nontrivial congruence identity and n-permutability are decided by
//! iterating two syntactic operators until the theory becomes inconsistent
//! or stops growing. Every "yes" comes with a derivation of `x = y` and every
//! "no" with a small model where possible.

pub mod classify;
pub mod derive;
pub mod error;
pub mod flatsat;
pub mod models;
pub mod project;
pub mod rewrite;
pub mod syntax;
pub mod term;
pub mod theory;
pub mod unionfind;

pub use error::{Error, Result};
pub use rewrite::{
    bfs_prove, verify_derivation, Derivation, Direction, ProofSearchOutcome, SearchBounds, Step,
};
pub use syntax::{parse_identity, parse_term, parse_theory, render_theory};
pub use term::{match_term, Occurrence, OperationSymbol, Position, Substitution, Sym, Term, Var};
pub use theory::{join_disjoint, presets, theory_equal, validate, Identity, Signature, Theory};

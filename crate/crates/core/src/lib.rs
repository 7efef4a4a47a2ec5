//! Probabilistic-logic knowledge bases for semantic communication.
//!
//! The crate models knowledge as sets of probability-labelled clauses in a
//! propositional ProbLog fragment, computes exact query probabilities under
//! the distribution semantics, and builds entropy-based measures on top:
//! knowledge-base uncertainty, semantic content of messages, semantic
//! mutual information, and secrecy rates. Around that core sit message
//! assimilation operators, sender-side selection rules, semantic
//! compression, a q-ary discrete memoryless channel with retransmission,
//! and two end-to-end simulation scenarios (a crossword puzzle and a
//! clinical-test causal graph).

pub mod assimilation;
pub mod channel;
pub mod compression;
pub mod inference;
pub mod lang;
pub mod measures;
pub mod model;
pub mod scenarios;
pub mod selection;

pub use inference::{answerable, derives, query_prob, query_prob_enumeration, QueryPolicy};
pub use lang::{ground, parse_atom, parse_program, serialize, GroundProgram};
pub use model::{
    AnnotatedDisjunction, Atom, BodyLiteral, BuiltinOp, Clause, Constant, KnowledgeBase, Message,
    Term,
};

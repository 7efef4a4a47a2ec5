//! Text front end for the propositional ProbLog fragment: parsing,
//! canonical serialization, and grounding.
//!
//! The file grammar, one statement per terminating period:
//!
//! ```text
//! program  := (statement ".")*
//! statement := labeled_clause | annotated_disjunction
//! labeled_clause := [prob "::"] atom [":-" body]
//! annotated_disjunction := prob "::" atom (";" prob "::" atom)+
//! body     := literal ("," literal)*
//! ```
//!
//! Probabilities are decimals in [0, 1]; an omitted label means 1.0. `%`
//! starts a line comment. Variables begin with an uppercase letter; string
//! constants are double-quoted. `endswith/2`, `charAt/3`, and the infix
//! comparisons (`>=`, `=<`, `>`, `<`, `=`) are builtins, evaluated and
//! eliminated at grounding time.

mod grounder;
mod parser;

pub use grounder::{ground, ground_with_cap, GroundError, GroundProgram, DEFAULT_INSTANTIATION_CAP};
pub use parser::{parse_atom, parse_program, ParseError};

use crate::model::KnowledgeBase;

/// Renders the canonical text of a knowledge base: clauses sorted by
/// (head, body, prob), then disjunctions, one statement per line.
///
/// `parse_program(serialize(kb))` reconstructs `kb` exactly.
pub fn serialize(kb: &KnowledgeBase) -> String {
    let mut out = String::new();
    for c in kb.clauses() {
        out.push_str(&c.to_string());
        out.push('\n');
    }
    for d in kb.disjunctions() {
        out.push_str(&d.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Atom, Clause};

    #[test]
    fn serialize_elides_unit_probability() {
        let kb = KnowledgeBase::from_clauses([Clause::fact(1.0, Atom::prop("a")).unwrap()]);
        assert_eq!(serialize(&kb), "a.\n");
    }

    #[test]
    fn serialize_sorts_canonically() {
        let text = "0.5::a :- b.\n0.2::a.\n0.3::b.";
        let kb = parse_program(text).unwrap();
        assert_eq!(serialize(&kb), "0.2::a.\n0.5::a :- b.\n0.3::b.\n");
    }

    #[test]
    fn round_trip_is_identity_on_canonical_text() {
        let kb = parse_program("0.2::a.\n0.3::b.\n0.5::a :- b.").unwrap();
        let text = serialize(&kb);
        let kb2 = parse_program(&text).unwrap();
        assert_eq!(kb, kb2);
        assert_eq!(serialize(&kb2), text);
    }
}

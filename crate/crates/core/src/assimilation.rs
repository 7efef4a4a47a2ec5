//! Receiver-side assimilation: how an incoming message updates a knowledge
//! base.
//!
//! Three operators: plain set union; freshness replacement, where a clause
//! with a matching head and body supersedes every stored label for that
//! shape; and a guarded replacement that keeps the old knowledge base
//! unless replacing strictly lowers the entropy of the incoming clause's
//! head query.

use thiserror::Error;

use crate::measures::{query_entropy, MeasureError};
use crate::model::{AnnotatedDisjunction, Clause, KnowledgeBase, Message};
use crate::inference::QueryPolicy;

#[derive(Debug, Error, PartialEq)]
pub enum AssimilationError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AssimilationOp {
    Union,
    Fresh,
    Guarded,
}

/// Assimilates a single clause.
pub fn assimilate(
    kb: &KnowledgeBase,
    m: &Clause,
    op: AssimilationOp,
) -> Result<KnowledgeBase, AssimilationError> {
    match op {
        AssimilationOp::Union => Ok(kb.union_message(&Message::Clause(m.clone()))),
        AssimilationOp::Fresh => Ok(replace_clause(kb, m)),
        AssimilationOp::Guarded => {
            if kb.clauses().any(|c| c.same_shape(m)) {
                let replaced = replace_clause(kb, m);
                let before = query_entropy(kb, m.head(), QueryPolicy::Error)?;
                let after = query_entropy(&replaced, m.head(), QueryPolicy::Error)?;
                Ok(if after < before { replaced } else { kb.clone() })
            } else {
                Ok(kb.union_message(&Message::Clause(m.clone())))
            }
        }
    }
}

fn replace_clause(kb: &KnowledgeBase, m: &Clause) -> KnowledgeBase {
    if kb.clauses().any(|c| c.same_shape(m)) {
        let mut out = KnowledgeBase::new();
        for c in kb.clauses().filter(|c| !c.same_shape(m)) {
            out.insert_clause(c.clone());
        }
        for d in kb.disjunctions() {
            out.insert_disjunction(d.clone());
        }
        out.insert_clause(m.clone());
        out
    } else {
        kb.union_message(&Message::Clause(m.clone()))
    }
}

/// Assimilates an annotated disjunction as one atomic unit, keyed by its
/// ordered head list.
pub fn assimilate_disjunction(
    kb: &KnowledgeBase,
    m: &AnnotatedDisjunction,
    op: AssimilationOp,
) -> Result<KnowledgeBase, AssimilationError> {
    match op {
        AssimilationOp::Union => Ok(kb.union_message(&Message::Disjunction(m.clone()))),
        AssimilationOp::Fresh => Ok(replace_disjunction(kb, m)),
        AssimilationOp::Guarded => {
            if kb.disjunctions().any(|d| d.head_key() == m.head_key()) {
                let replaced = replace_disjunction(kb, m);
                // guard on the mean entropy over the choice-head queries
                let before = mean_head_entropy(kb, m)?;
                let after = mean_head_entropy(&replaced, m)?;
                Ok(if after < before { replaced } else { kb.clone() })
            } else {
                Ok(kb.union_message(&Message::Disjunction(m.clone())))
            }
        }
    }
}

fn replace_disjunction(kb: &KnowledgeBase, m: &AnnotatedDisjunction) -> KnowledgeBase {
    if kb.disjunctions().any(|d| d.head_key() == m.head_key()) {
        let mut out = KnowledgeBase::new();
        for c in kb.clauses() {
            out.insert_clause(c.clone());
        }
        for d in kb.disjunctions().filter(|d| d.head_key() != m.head_key()) {
            out.insert_disjunction(d.clone());
        }
        out.insert_disjunction(m.clone());
        out
    } else {
        kb.union_message(&Message::Disjunction(m.clone()))
    }
}

fn mean_head_entropy(
    kb: &KnowledgeBase,
    m: &AnnotatedDisjunction,
) -> Result<f64, AssimilationError> {
    let mut total = 0.0;
    for head in m.heads() {
        total += query_entropy(kb, head, QueryPolicy::Error)?;
    }
    Ok(total / m.len() as f64)
}

/// Assimilates a whole message; complex messages apply clause by clause in
/// canonical order, then disjunction by disjunction.
pub fn assimilate_message(
    kb: &KnowledgeBase,
    m: &Message,
    op: AssimilationOp,
) -> Result<KnowledgeBase, AssimilationError> {
    match m {
        Message::Clause(c) => assimilate(kb, c, op),
        Message::Disjunction(d) => assimilate_disjunction(kb, d, op),
        Message::Complex(inner) => {
            let mut out = kb.clone();
            for c in inner.clauses() {
                out = assimilate(&out, c, op)?;
            }
            for d in inner.disjunctions() {
                out = assimilate_disjunction(&out, d, op)?;
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;
    use crate::measures::kb_uncertainty;

    fn kb(text: &str) -> KnowledgeBase {
        parse_program(text).unwrap()
    }

    fn clause(text: &str) -> Clause {
        parse_program(text).unwrap().clauses().next().cloned().unwrap()
    }

    #[test]
    fn fresh_replaces_matching_shape() {
        let k = kb("0.3::b.\n0.5::a :- b.");
        let out = assimilate(&k, &clause("0.9::b."), AssimilationOp::Fresh).unwrap();
        assert_eq!(out, kb("0.9::b.\n0.5::a :- b."));
    }

    #[test]
    fn fresh_removes_all_labels_of_a_shape() {
        let k = kb("0.3::b.\n0.9::b.\n0.5::a :- b.");
        let out = assimilate(&k, &clause("0.6::b."), AssimilationOp::Fresh).unwrap();
        assert_eq!(out, kb("0.6::b.\n0.5::a :- b."));
    }

    #[test]
    fn guarded_accepts_entropy_reduction() {
        // H(0.9) ≈ 0.469 < H(0.3) ≈ 0.881
        let k = kb("0.3::b.\n0.5::a :- b.");
        let out = assimilate(&k, &clause("0.9::b."), AssimilationOp::Guarded).unwrap();
        assert_eq!(out, kb("0.9::b.\n0.5::a :- b."));
    }

    #[test]
    fn guarded_rejects_entropy_increase() {
        // H(0.6) ≈ 0.971 >= H(0.9) ≈ 0.469
        let k = kb("0.9::b.");
        let out = assimilate(&k, &clause("0.6::b."), AssimilationOp::Guarded).unwrap();
        assert_eq!(out, k);
    }

    #[test]
    fn guarded_unions_when_no_shape_matches() {
        let k = kb("0.9::b.");
        let out = assimilate(&k, &clause("0.6::c."), AssimilationOp::Guarded).unwrap();
        assert_eq!(out, kb("0.9::b.\n0.6::c."));
    }

    #[test]
    fn union_of_known_clause_is_noop() {
        let k = kb("0.3::b.");
        let out = assimilate(&k, &clause("0.3::b."), AssimilationOp::Union).unwrap();
        assert_eq!(out, k);
    }

    #[test]
    fn size_grows_by_at_most_one() {
        let k = kb("0.3::b.\n0.9::b.\n0.5::a :- b.");
        for op in [
            AssimilationOp::Union,
            AssimilationOp::Fresh,
            AssimilationOp::Guarded,
        ] {
            let out = assimilate(&k, &clause("0.7::b."), op).unwrap();
            assert!(out.len() <= k.len() + 1);
        }
    }

    #[test]
    fn guarded_never_raises_head_entropy_on_replacement() {
        let k = kb("0.3::b.\n0.5::a :- b.");
        for m in ["0.1::b.", "0.5::b.", "0.7::b.", "0.95::b."] {
            let c = clause(m);
            let out = assimilate(&k, &c, AssimilationOp::Guarded).unwrap();
            let before = query_entropy(&k, c.head(), QueryPolicy::Error).unwrap();
            let after = query_entropy(&out, c.head(), QueryPolicy::Error).unwrap();
            assert!(after <= before + 1e-12);
        }
    }

    #[test]
    fn fresh_disjunction_replacement() {
        let k = kb("0.25::w(\"A\"); 0.25::w(\"B\"); 0.25::w(\"C\"); 0.25::w(\"D\").");
        let m = parse_program("0.7::w(\"A\"); 0.1::w(\"B\"); 0.1::w(\"C\"); 0.1::w(\"D\").")
            .unwrap()
            .disjunctions()
            .next()
            .cloned()
            .unwrap();
        let out = assimilate_disjunction(&k, &m, AssimilationOp::Fresh).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out.contains_disjunction(&m));
        // replacement with sharper choices lowers average entropy
        assert!(kb_uncertainty(&out).unwrap() < kb_uncertainty(&k).unwrap());
    }

    #[test]
    fn complex_message_assimilates_clause_by_clause() {
        let k = kb("0.3::b.");
        let m = Message::Complex(kb("0.9::b.\n0.2::m."));
        let out = assimilate_message(&k, &m, AssimilationOp::Fresh).unwrap();
        assert_eq!(out, kb("0.9::b.\n0.2::m."));
    }
}

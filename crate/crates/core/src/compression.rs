//! Semantic compression: query-equivalence of knowledge bases, exact and
//! greedy minimization, and minimal complex messages for a target content.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::inference::{query_prob_ground, InferenceError, QueryPolicy};
use crate::lang::ground;
use crate::measures::{semantic_content, MeasureError};
use crate::model::{AnnotatedDisjunction, Atom, Clause, KnowledgeBase, Message};

/// Numeric slack used when the caller asks for exact (eps = 0) agreement.
const EXACT_SLACK: f64 = 1e-12;

/// Subset searches stop beyond this many elements (2^16 candidates).
pub const SUBSET_SEARCH_CAP: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum CompressionError {
    #[error("{size} elements exceed the subset-search cap of {cap}")]
    TooLarge { size: usize, cap: usize },
    #[error("no subset reaches the target content within tolerance")]
    TargetUnreachable,
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

fn answer_table(kb: &KnowledgeBase) -> Result<BTreeMap<Atom, f64>, CompressionError> {
    let program = ground(kb).map_err(InferenceError::from)?;
    let mut table = BTreeMap::new();
    for q in program.heads() {
        let p = query_prob_ground(&program, &q, QueryPolicy::Error)?;
        table.insert(q, p);
    }
    Ok(table)
}

/// True when both bases answer exactly the same queries and agree on every
/// answer within `eps` (eps = 0 means within numeric slack).
pub fn kb_equivalent(
    a: &KnowledgeBase,
    b: &KnowledgeBase,
    eps: f64,
) -> Result<bool, CompressionError> {
    let ta = answer_table(a)?;
    let tb = answer_table(b)?;
    if ta.len() != tb.len() || !ta.keys().eq(tb.keys()) {
        return Ok(false);
    }
    let tol = if eps == 0.0 { EXACT_SLACK } else { eps };
    Ok(ta.iter().all(|(q, pa)| (pa - tb[q]).abs() <= tol))
}

/// One clause or one disjunction, the unit of subset enumeration.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Element {
    Clause(Clause),
    Disjunction(AnnotatedDisjunction),
}

fn elements(kb: &KnowledgeBase) -> Vec<Element> {
    let mut out: Vec<Element> = kb.clauses().cloned().map(Element::Clause).collect();
    out.extend(kb.disjunctions().cloned().map(Element::Disjunction));
    out
}

fn assemble(elements: &[Element], mask: u32) -> KnowledgeBase {
    let mut kb = KnowledgeBase::new();
    for (i, e) in elements.iter().enumerate() {
        if mask & (1 << i) != 0 {
            match e {
                Element::Clause(c) => {
                    kb.insert_clause(c.clone());
                }
                Element::Disjunction(d) => {
                    kb.insert_disjunction(d.clone());
                }
            }
        }
    }
    kb
}

/// Masks of a given popcount in lexicographic order over the canonically
/// sorted element list, so the first hit is the canonically least answer.
fn masks_of_size(n: usize, size: usize) -> Vec<u32> {
    let mut out = Vec::new();
    let mut indices: Vec<usize> = (0..size).collect();
    loop {
        let mask = indices.iter().fold(0u32, |m, &i| m | (1 << i));
        out.push(mask);
        // next combination
        let mut i = size;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if indices[i] != i + n - size {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        indices[i] += 1;
        for j in i + 1..size {
            indices[j] = indices[j - 1] + 1;
        }
    }
}

/// Smallest subset of `kb` answering the same queries with the same
/// probabilities; canonically least among equal-size minima.
pub fn compress_exact(kb: &KnowledgeBase) -> Result<KnowledgeBase, CompressionError> {
    let items = elements(kb);
    let n = items.len();
    if n > SUBSET_SEARCH_CAP {
        return Err(CompressionError::TooLarge {
            size: n,
            cap: SUBSET_SEARCH_CAP,
        });
    }
    if n == 0 {
        return Ok(KnowledgeBase::new());
    }
    for size in 0..=n {
        for mask in masks_of_size(n, size) {
            let candidate = assemble(&items, mask);
            if kb_equivalent(kb, &candidate, 0.0)? {
                return Ok(candidate);
            }
        }
    }
    Ok(kb.clone())
}

/// Greedy compression: repeatedly drops, in canonical order, any element
/// whose removal keeps query coverage at least `1 − delta` and moves no
/// surviving answer by more than `eps` from the original.
pub fn compress_greedy(
    kb: &KnowledgeBase,
    delta: f64,
    eps: f64,
) -> Result<KnowledgeBase, CompressionError> {
    let baseline = answer_table(kb)?;
    if baseline.is_empty() {
        return Ok(kb.clone());
    }
    let total = baseline.len() as f64;
    let tol = if eps == 0.0 { EXACT_SLACK } else { eps };

    let acceptable = |candidate: &KnowledgeBase| -> Result<bool, CompressionError> {
        let table = answer_table(candidate)?;
        let common = table.keys().filter(|q| baseline.contains_key(*q)).count();
        if (common as f64) / total < 1.0 - delta {
            return Ok(false);
        }
        Ok(table
            .iter()
            .filter(|(q, _)| baseline.contains_key(*q))
            .all(|(q, p)| (p - baseline[q]).abs() <= tol))
    };

    let mut current = kb.clone();
    'outer: loop {
        for item in elements(&current) {
            let mut candidate = current.clone();
            match &item {
                Element::Clause(c) => candidate.remove_clause(c),
                Element::Disjunction(d) => candidate.remove_disjunction(d),
            };
            if acceptable(&candidate)? {
                current = candidate;
                continue 'outer;
            }
        }
        return Ok(current);
    }
}

/// Smallest subset of `pool` whose semantic content for `kb` is within
/// `tol` of `target`; canonically least among ties.
pub fn min_message_set(
    pool: &[Clause],
    kb: &KnowledgeBase,
    target: f64,
    tol: f64,
) -> Result<KnowledgeBase, CompressionError> {
    let n = pool.len();
    if n > SUBSET_SEARCH_CAP {
        return Err(CompressionError::TooLarge {
            size: n,
            cap: SUBSET_SEARCH_CAP,
        });
    }
    let mut sorted: Vec<Clause> = pool.to_vec();
    sorted.sort();
    sorted.dedup();
    let items: Vec<Element> = sorted.into_iter().map(Element::Clause).collect();
    for size in 0..=items.len() {
        for mask in masks_of_size(items.len(), size) {
            let candidate = assemble(&items, mask);
            let content = if candidate.is_empty() {
                0.0
            } else {
                semantic_content(kb, &Message::Complex(candidate.clone()))?
            };
            if (content - target).abs() <= tol {
                return Ok(candidate);
            }
        }
    }
    Err(CompressionError::TargetUnreachable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;

    fn kb(text: &str) -> KnowledgeBase {
        parse_program(text).unwrap()
    }

    #[test]
    fn equivalence_is_reflexive() {
        let k = kb("0.2::a.\n0.3::b.\n0.5::a :- b.");
        assert!(kb_equivalent(&k, &k, 0.0).unwrap());
    }

    #[test]
    fn self_rule_adds_nothing() {
        let k = kb("0.5::a.\n0.5::a :- a.");
        let reduced = kb("0.5::a.");
        assert!(kb_equivalent(&k, &reduced, 0.0).unwrap());
    }

    #[test]
    fn equivalence_respects_eps() {
        let a = kb("0.3::b.");
        let b = kb("0.31::b.");
        assert!(!kb_equivalent(&a, &b, 0.0).unwrap());
        assert!(kb_equivalent(&a, &b, 0.02).unwrap());
    }

    #[test]
    fn equivalence_requires_same_query_set() {
        let a = kb("0.3::b.\n1.0::a.");
        let b = kb("0.3::b.");
        assert!(!kb_equivalent(&a, &b, 1.0).unwrap());
    }

    #[test]
    fn exact_compression_drops_self_rule() {
        let k = kb("0.5::a.\n0.5::a :- a.");
        assert_eq!(compress_exact(&k).unwrap(), kb("0.5::a."));
    }

    #[test]
    fn exact_compression_keeps_minimal_kb() {
        let k = kb("0.2::a.\n0.3::b.\n0.5::a :- b.");
        assert_eq!(compress_exact(&k).unwrap(), k);
    }

    #[test]
    fn exact_compression_of_empty() {
        assert_eq!(
            compress_exact(&KnowledgeBase::new()).unwrap(),
            KnowledgeBase::new()
        );
    }

    #[test]
    fn exact_compression_size_cap() {
        let mut text = String::new();
        for i in 0..17 {
            text.push_str(&format!("0.5::p{i}.\n"));
        }
        assert!(matches!(
            compress_exact(&kb(&text)),
            Err(CompressionError::TooLarge { .. })
        ));
    }

    #[test]
    fn greedy_matches_exact_on_self_rule() {
        let k = kb("0.5::a.\n0.5::a :- a.");
        assert_eq!(compress_greedy(&k, 0.0, 0.0).unwrap(), kb("0.5::a."));
    }

    #[test]
    fn greedy_is_identity_on_irreducible_kb() {
        let k = kb("0.2::a.\n0.3::b.\n0.5::a :- b.");
        assert_eq!(compress_greedy(&k, 0.0, 0.0).unwrap(), k);
    }

    #[test]
    fn greedy_respects_coverage_bound() {
        let k = kb("0.5::a.\n0.5::b.");
        let out = compress_greedy(&k, 0.5, 0.0).unwrap();
        assert!(out.len() <= k.len());
        let kept = ground(&out).unwrap().heads().len();
        assert!(kept as f64 / 2.0 >= 0.5 - 1e-12);
        // surviving answers are unchanged
        for q in ground(&out).unwrap().heads() {
            let p0 = crate::inference::query_prob(&k, &q, QueryPolicy::Error).unwrap();
            let p1 = crate::inference::query_prob(&out, &q, QueryPolicy::Error).unwrap();
            assert!((p0 - p1).abs() <= EXACT_SLACK);
        }
    }

    #[test]
    fn min_message_set_zero_target() {
        let pool: Vec<Clause> = kb("0.9::b.\n0.2::m.").clauses().cloned().collect();
        let k = kb("0.3::b.\n0.5::a :- b.");
        let out = min_message_set(&pool, &k, 0.0, 0.0).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn min_message_set_reaches_single_clause_content() {
        let pool: Vec<Clause> = kb("0.9::b.\n0.2::m.").clauses().cloned().collect();
        let k = kb("0.3::b.\n0.5::a :- b.");
        let target =
            semantic_content(&k, &Message::Clause(pool[1].clone())).unwrap();
        let out = min_message_set(&pool, &k, target, 1e-9).unwrap();
        assert!(out.len() <= 1);
        let content = if out.is_empty() {
            0.0
        } else {
            semantic_content(&k, &Message::Complex(out.clone())).unwrap()
        };
        assert!((content - target).abs() <= 1e-9);
    }

    #[test]
    fn min_message_set_unreachable_target() {
        let pool: Vec<Clause> = kb("0.9::b.").clauses().cloned().collect();
        let k = kb("0.3::b.\n0.5::a :- b.");
        assert_eq!(
            min_message_set(&pool, &k, -5.0, 1e-6),
            Err(CompressionError::TargetUnreachable)
        );
    }
}

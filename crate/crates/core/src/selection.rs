//! Sender-side choices: which message to send, which query to ask, which
//! source to poll next.
//!
//! Every operation is an argmin over a finite candidate list. Ties break
//! to the canonically least clause or the lowest index, so results are
//! reproducible no matter how candidates are supplied.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::inference::QueryPolicy;
use crate::measures::{kb_uncertainty, query_entropy, JointPmf, MeasureError};
use crate::model::{Atom, Clause, KnowledgeBase, Message};

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("candidate list is empty")]
    EmptyPool,
    #[error("no candidate satisfies the length constraint")]
    Infeasible,
    #[error("belief holds no candidates")]
    EmptyBelief,
    #[error("belief probabilities sum to {0}, expected 1")]
    BeliefNotNormalized(f64),
    #[error("query prior {0} is outside (0, 1]")]
    InvalidPrior(f64),
    #[error("answer length {0} is negative")]
    NegativeLength(f64),
    #[error("weight {0} must be positive")]
    InvalidWeight(f64),
    #[error("every source has already been selected")]
    Exhausted,
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Message length in bits, as a function of the clause.
#[derive(Clone, Debug)]
pub enum LengthFn {
    /// Canonical text length times log2 of the alphabet size.
    SymbolBits { alphabet_size: usize },
    /// Every clause costs the same.
    FixedPerClause(f64),
    /// Explicit per-clause table; clauses missing from the table are
    /// treated as unsendable (infinite length).
    Table(BTreeMap<Clause, f64>),
}

impl LengthFn {
    pub fn bits(&self, clause: &Clause) -> f64 {
        match self {
            LengthFn::SymbolBits { alphabet_size } => {
                clause.to_string().chars().count() as f64 * (*alphabet_size as f64).log2()
            }
            LengthFn::FixedPerClause(cost) => *cost,
            LengthFn::Table(table) => table.get(clause).copied().unwrap_or(f64::INFINITY),
        }
    }
}

/// The sender's statistical picture of the receiver: candidate knowledge
/// bases with probabilities summing to 1.
#[derive(Clone, Debug)]
pub struct KbBelief {
    entries: Vec<(KnowledgeBase, f64)>,
}

impl KbBelief {
    pub fn new(entries: Vec<(KnowledgeBase, f64)>) -> Result<Self, SelectionError> {
        if entries.is_empty() {
            return Err(SelectionError::EmptyBelief);
        }
        let sum: f64 = entries.iter().map(|(_, p)| p).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SelectionError::BeliefNotNormalized(sum));
        }
        Ok(KbBelief { entries })
    }

    pub fn entries(&self) -> impl Iterator<Item = (&KnowledgeBase, f64)> {
        self.entries.iter().map(|(kb, p)| (kb, *p))
    }
}

/// A candidate query with its prior probability and expected answer length.
#[derive(Clone, Debug, PartialEq)]
pub struct QuerySpec {
    pub query: Atom,
    pub prior: f64,
    pub answer_bits: f64,
}

impl QuerySpec {
    pub fn new(query: Atom, prior: f64, answer_bits: f64) -> Result<Self, SelectionError> {
        if !(prior > 0.0 && prior <= 1.0) {
            return Err(SelectionError::InvalidPrior(prior));
        }
        if answer_bits < 0.0 || !answer_bits.is_finite() {
            return Err(SelectionError::NegativeLength(answer_bits));
        }
        Ok(QuerySpec {
            query,
            prior,
            answer_bits,
        })
    }
}

fn argmin_clause<'a>(
    pool: impl Iterator<Item = &'a Clause>,
    mut score: impl FnMut(&Clause) -> Result<f64, SelectionError>,
) -> Result<&'a Clause, SelectionError> {
    let mut best: Option<(f64, &Clause)> = None;
    for clause in pool {
        let value = score(clause)?;
        if value.is_infinite() {
            continue;
        }
        best = match best {
            None => Some((value, clause)),
            Some((bv, bc)) => {
                if value < bv || (value == bv && clause < bc) {
                    Some((value, clause))
                } else {
                    Some((bv, bc))
                }
            }
        };
    }
    best.map(|(_, c)| c).ok_or(SelectionError::Infeasible)
}

/// The clause whose union minimizes the receiver's average entropy.
pub fn sender_choice<'a>(
    pool: &'a [Clause],
    kb: &KnowledgeBase,
) -> Result<&'a Clause, SelectionError> {
    if pool.is_empty() {
        return Err(SelectionError::EmptyPool);
    }
    argmin_clause(pool.iter(), |clause| {
        Ok(kb_uncertainty(
            &kb.union_message(&Message::Clause(clause.clone())),
        )?)
    })
}

/// Like [`sender_choice`], but minimizing the expectation over a belief
/// about the receiver's knowledge base.
pub fn sender_choice_expected<'a>(
    pool: &'a [Clause],
    belief: &KbBelief,
) -> Result<&'a Clause, SelectionError> {
    if pool.is_empty() {
        return Err(SelectionError::EmptyPool);
    }
    argmin_clause(pool.iter(), |clause| {
        let msg = Message::Clause(clause.clone());
        let mut expected = 0.0;
        for (kb, p) in belief.entries() {
            if p > 0.0 {
                expected += p * kb_uncertainty(&kb.union_message(&msg))?;
            }
        }
        Ok(expected)
    })
}

/// The message in `pool` minimizing the entropy of `q` after union.
pub fn best_message_for_query<'a>(
    pool: &'a [Clause],
    kb: &KnowledgeBase,
    q: &Atom,
    policy: QueryPolicy,
) -> Result<&'a Clause, SelectionError> {
    if pool.is_empty() {
        return Err(SelectionError::EmptyPool);
    }
    argmin_clause(pool.iter(), |clause| {
        Ok(query_entropy(
            &kb.union_message(&Message::Clause(clause.clone())),
            q,
            policy,
        )?)
    })
}

/// [`best_message_for_query`] restricted to messages of at most `max_bits`.
pub fn best_message_len_constrained<'a>(
    pool: &'a [Clause],
    kb: &KnowledgeBase,
    q: &Atom,
    policy: QueryPolicy,
    len: &LengthFn,
    max_bits: f64,
) -> Result<&'a Clause, SelectionError> {
    if pool.is_empty() {
        return Err(SelectionError::EmptyPool);
    }
    let feasible: Vec<&Clause> = pool.iter().filter(|c| len.bits(c) <= max_bits).collect();
    if feasible.is_empty() {
        return Err(SelectionError::Infeasible);
    }
    argmin_clause(feasible.into_iter(), |clause| {
        Ok(query_entropy(
            &kb.union_message(&Message::Clause(clause.clone())),
            q,
            policy,
        )?)
    })
}

/// Broadcast selection: minimizes the worst receiver's entropy for a
/// common query, over length-feasible messages.
pub fn best_message_broadcast<'a>(
    pool: &'a [Clause],
    kbs: &[KnowledgeBase],
    q: &Atom,
    policy: QueryPolicy,
    len: &LengthFn,
    max_bits: f64,
) -> Result<&'a Clause, SelectionError> {
    if pool.is_empty() || kbs.is_empty() {
        return Err(SelectionError::EmptyPool);
    }
    let feasible: Vec<&Clause> = pool.iter().filter(|c| len.bits(c) <= max_bits).collect();
    if feasible.is_empty() {
        return Err(SelectionError::Infeasible);
    }
    argmin_clause(feasible.into_iter(), |clause| {
        let msg = Message::Clause(clause.clone());
        let mut worst = f64::NEG_INFINITY;
        for kb in kbs {
            let h = query_entropy(&kb.union_message(&msg), q, policy)?;
            worst = worst.max(h);
        }
        Ok(worst)
    })
}

/// Minimum-description-length query choice: minimizes
/// −log2(prior) + λ · answer_bits. Returns the index of the winning spec;
/// ties keep the lowest index.
pub fn mdl_query(specs: &[QuerySpec], lambda: f64) -> Result<usize, SelectionError> {
    if specs.is_empty() {
        return Err(SelectionError::EmptyPool);
    }
    if lambda <= 0.0 || !lambda.is_finite() {
        return Err(SelectionError::InvalidWeight(lambda));
    }
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for (i, spec) in specs.iter().enumerate() {
        let cost = -spec.prior.log2() + lambda * spec.answer_bits;
        if cost < best_cost {
            best_cost = cost;
            best = i;
        }
    }
    Ok(best)
}

/// Next source under the conditional-entropy criterion: the sender whose
/// variable minimizes the uncertainty left after collecting it, computed
/// exactly from the joint table. Axes are 0-based; ties keep the lowest.
pub fn das_select_stochastic(
    joint: &JointPmf,
    collected: &BTreeSet<usize>,
) -> Result<usize, SelectionError> {
    let n = joint.num_axes();
    let collected_axes: Vec<usize> = collected.iter().copied().filter(|&a| a < n).collect();
    let remaining: Vec<usize> = (0..n).filter(|a| !collected.contains(a)).collect();
    if remaining.is_empty() {
        return Err(SelectionError::Exhausted);
    }
    let residual = joint.conditional_entropy(&remaining, &collected_axes)?;
    let mut best = None;
    for &axis in &remaining {
        let gain = joint.conditional_entropy(&[axis], &collected_axes)?;
        let objective = residual - gain;
        best = match best {
            None => Some((objective, axis)),
            Some((bv, _)) if objective < bv => Some((objective, axis)),
            keep => keep,
        };
    }
    Ok(best.expect("nonempty remaining").1)
}

/// Next source under the semantic criterion: the unvisited message whose
/// assimilation lowers the knowledge-base uncertainty the most.
pub fn das_select_semantic(
    msgs: &[(usize, Message)],
    kb: &KnowledgeBase,
    visited: &BTreeSet<usize>,
) -> Result<usize, SelectionError> {
    let base = kb_uncertainty(kb)?;
    let mut candidates: Vec<&(usize, Message)> = msgs
        .iter()
        .filter(|(i, _)| !visited.contains(i))
        .collect();
    if candidates.is_empty() {
        return Err(SelectionError::Exhausted);
    }
    candidates.sort_by_key(|(i, _)| *i);
    let mut best: Option<(f64, usize)> = None;
    for (i, m) in candidates {
        let delta = kb_uncertainty(&kb.union_message(m))? - base;
        best = match best {
            None => Some((delta, *i)),
            Some((bv, _)) if delta < bv => Some((delta, *i)),
            keep => keep,
        };
    }
    Ok(best.expect("nonempty candidates").1)
}

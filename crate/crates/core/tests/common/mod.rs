//! Shared helpers for the integration suites: random ground programs and
//! small parsing shorthands.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use semlog::model::{AnnotatedDisjunction, Atom, BodyLiteral, Clause, KnowledgeBase};

pub fn kb(text: &str) -> KnowledgeBase {
    semlog::parse_program(text).unwrap()
}

pub fn atom(text: &str) -> Atom {
    semlog::parse_atom(text).unwrap()
}

fn prop_atom(i: usize) -> Atom {
    Atom::prop(format!("p{i}"))
}

/// A random ground knowledge base with at most `max_choices` choice
/// variables (probabilistic clauses plus disjunctions), over a small
/// propositional universe. Bodies are random subsets, so chains, shared
/// subgoals, and cycles all occur.
pub fn random_ground_kb(rng: &mut ChaCha8Rng, max_choices: usize) -> KnowledgeBase {
    let n_atoms = rng.gen_range(2..=6);
    let with_ad = max_choices >= 3 && rng.gen_bool(0.3);
    let ad_cost = if with_ad { 1 } else { 0 };
    let n_prob = rng.gen_range(1..=(max_choices - ad_cost).max(1));
    let n_det = rng.gen_range(0..=2);

    let mut kb = KnowledgeBase::new();
    let make_clause = |rng: &mut ChaCha8Rng, prob: f64| {
        let head = prop_atom(rng.gen_range(0..n_atoms));
        let body_len = rng.gen_range(0..=2);
        let mut body = Vec::new();
        for _ in 0..body_len {
            let b = prop_atom(rng.gen_range(0..n_atoms));
            if b != head {
                body.push(BodyLiteral::atom(b));
            }
        }
        Clause::new(prob, head, body).unwrap()
    };
    for _ in 0..n_prob {
        let prob = (rng.gen_range(1..20) as f64) / 20.0;
        let c = make_clause(rng, prob);
        kb.insert_clause(c);
    }
    for _ in 0..n_det {
        let c = make_clause(rng, 1.0);
        kb.insert_clause(c);
    }
    if with_ad {
        let k = rng.gen_range(2..=3);
        let mut choices = Vec::new();
        let mut remaining: f64 = 1.0;
        for i in 0..k {
            let p = if i == k - 1 {
                remaining * ((rng.gen_range(0..=10) as f64) / 10.0)
            } else {
                remaining * ((rng.gen_range(0..=10) as f64) / 20.0)
            };
            choices.push((p, Atom::prop(format!("d{i}"))));
            remaining -= p;
        }
        if let Ok(ad) = AnnotatedDisjunction::new(choices) {
            kb.insert_disjunction(ad);
        }
    }
    kb
}

/// The number of choice variables the inference backends will see.
pub fn choice_count(kb: &KnowledgeBase) -> usize {
    kb.clauses()
        .filter(|c| c.prob() > 0.0 && c.prob() < 1.0)
        .count()
        + kb.disjunctions().count()
}

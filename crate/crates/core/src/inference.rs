//! Exact query probabilities under the distribution semantics.
//!
//! Every probabilistic clause is included independently with its label;
//! each annotated disjunction selects one choice (or none, on the leftover
//! mass). The probability of a ground query is the total mass of worlds
//! whose least fixpoint derives it.
//!
//! Two backends compute the same number: an exhaustive world enumerator
//! (the oracle, capped at 24 choice variables) and recursive conditioning
//! on choice variables with memoization on the simplified residual
//! subprogram reachable from the query. `query_prob` uses conditioning;
//! the enumerator exists to check it.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::lang::{ground, GroundError, GroundProgram};
use crate::model::{AnnotatedDisjunction, Atom, BodyLiteral, Clause, KnowledgeBase};

/// Backends must agree to this tolerance; world masses must sum to 1 within it.
pub const BACKEND_TOLERANCE: f64 = 1e-12;

/// Enumeration refuses programs with more choice variables than this.
pub const ENUMERATION_CHOICE_LIMIT: usize = 24;

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error("query `{0}` is not answerable (it heads no clause)")]
    Unanswerable(Atom),
    #[error("query `{0}` is not ground")]
    NonGroundQuery(Atom),
    #[error(transparent)]
    Ground(#[from] GroundError),
    #[error("{count} choice variables exceed the enumeration limit of {limit}")]
    TooManyChoices { count: usize, limit: usize },
}

/// What to do with a query that heads no clause.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueryPolicy {
    /// Raise an error.
    Error,
    /// Answer 0.5, a random guess.
    Half,
}

/// One inclusion decision per probabilistic clause and one choice per
/// disjunction. Clauses with probability 1 are always included; entries
/// absent from the maps count as excluded / no choice.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PossibleWorld {
    pub included: BTreeMap<Clause, bool>,
    pub choices: BTreeMap<AnnotatedDisjunction, Option<usize>>,
}

impl PossibleWorld {
    /// Product of inclusion and choice probabilities over this world's
    /// recorded decisions.
    pub fn probability(&self) -> f64 {
        let mut p = 1.0;
        for (clause, included) in &self.included {
            p *= if *included {
                clause.prob()
            } else {
                1.0 - clause.prob()
            };
        }
        for (ad, choice) in &self.choices {
            p *= match choice {
                Some(i) => ad.choices().nth(*i).map(|(q, _)| q).unwrap_or(0.0),
                None => ad.none_prob(),
            };
        }
        p
    }
}

/// True iff the definite program selected by `world` derives `q` in its
/// least fixpoint.
pub fn derives(world: &PossibleWorld, program: &GroundProgram, q: &Atom) -> bool {
    let index = AtomIndex::build(program);
    let qid = match index.lookup(q) {
        Some(id) => id,
        None => return false,
    };
    let mut rules: Vec<(u32, Vec<u32>)> = Vec::new();
    for clause in program.clauses() {
        let included = clause.prob() == 1.0 || world.included.get(clause).copied().unwrap_or(false);
        if included && clause.prob() > 0.0 {
            rules.push(index.rule_of(clause));
        }
    }
    for ad in program.disjunctions() {
        if let Some(Some(i)) = world.choices.get(ad) {
            if let Some(head) = ad.heads().nth(*i) {
                rules.push((index.lookup(head).expect("indexed"), Vec::new()));
            }
        }
    }
    least_fixpoint(&rules, index.len())[qid as usize]
}

/// Ground head atoms of `kb`: the set of answerable queries.
pub fn answerable(kb: &KnowledgeBase) -> Result<BTreeSet<Atom>, InferenceError> {
    Ok(ground(kb)?.heads())
}

/// Probability that `kb` derives `q`, by recursive conditioning.
pub fn query_prob(kb: &KnowledgeBase, q: &Atom, policy: QueryPolicy) -> Result<f64, InferenceError> {
    let program = ground(kb)?;
    query_prob_ground(&program, q, policy)
}

/// Conditioning backend over an already-ground program.
pub fn query_prob_ground(
    program: &GroundProgram,
    q: &Atom,
    policy: QueryPolicy,
) -> Result<f64, InferenceError> {
    match check_answerable(program, q, policy)? {
        Some(p) => Ok(p),
        None => Ok(Conditioner::new(program, q).run()),
    }
}

/// Probability of `q` by exhaustive world enumeration. Errors above
/// [`ENUMERATION_CHOICE_LIMIT`] choice variables; asserts that world masses
/// sum to 1.
pub fn query_prob_enumeration(
    kb: &KnowledgeBase,
    q: &Atom,
    policy: QueryPolicy,
) -> Result<f64, InferenceError> {
    let program = ground(kb)?;
    query_prob_enumeration_ground(&program, q, policy)
}

pub fn query_prob_enumeration_ground(
    program: &GroundProgram,
    q: &Atom,
    policy: QueryPolicy,
) -> Result<f64, InferenceError> {
    if let Some(p) = check_answerable(program, q, policy)? {
        return Ok(p);
    }
    let index = AtomIndex::build(program);
    let qid = index.lookup(q).expect("answerable query is indexed");

    let mut det_rules: Vec<(u32, Vec<u32>)> = Vec::new();
    let mut choice_clauses: Vec<(f64, (u32, Vec<u32>))> = Vec::new();
    for clause in program.clauses() {
        let p = clause.prob();
        if p == 1.0 {
            det_rules.push(index.rule_of(clause));
        } else if p > 0.0 {
            choice_clauses.push((p, index.rule_of(clause)));
        }
    }
    let ads: Vec<Vec<(f64, u32)>> = program
        .disjunctions()
        .map(|ad| {
            ad.choices()
                .map(|(p, a)| (p, index.lookup(a).expect("indexed")))
                .collect()
        })
        .collect();

    let count = choice_clauses.len() + ads.len();
    if count > ENUMERATION_CHOICE_LIMIT {
        return Err(InferenceError::TooManyChoices {
            count,
            limit: ENUMERATION_CHOICE_LIMIT,
        });
    }

    let mut total_mass = KahanSum::default();
    let mut derived_mass = KahanSum::default();
    let n_atoms = index.len();
    let mut rules = Vec::with_capacity(det_rules.len() + choice_clauses.len() + ads.len());
    enumerate_worlds(
        &det_rules,
        &choice_clauses,
        &ads,
        0,
        1.0,
        &mut rules,
        &mut |rules, mass| {
            total_mass.add(mass);
            if mass > 0.0 && least_fixpoint(rules, n_atoms)[qid as usize] {
                derived_mass.add(mass);
            }
        },
    );
    let total = total_mass.value();
    assert!(
        (total - 1.0).abs() <= BACKEND_TOLERANCE,
        "world probabilities sum to {total}, expected 1"
    );
    Ok(derived_mass.value())
}

fn check_answerable(
    program: &GroundProgram,
    q: &Atom,
    policy: QueryPolicy,
) -> Result<Option<f64>, InferenceError> {
    if !q.is_ground() {
        return Err(InferenceError::NonGroundQuery(q.clone()));
    }
    if program.heads().contains(q) {
        Ok(None)
    } else {
        match policy {
            QueryPolicy::Error => Err(InferenceError::Unanswerable(q.clone())),
            QueryPolicy::Half => Ok(Some(0.5)),
        }
    }
}

/// Kahan compensated accumulator; keeps world-mass sums exact enough for
/// the 1e-12 invariants even over millions of terms.
#[derive(Default)]
struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum
    }
}

fn enumerate_worlds(
    det: &[(u32, Vec<u32>)],
    clauses: &[(f64, (u32, Vec<u32>))],
    ads: &[Vec<(f64, u32)>],
    depth: usize,
    mass: f64,
    rules: &mut Vec<(u32, Vec<u32>)>,
    visit: &mut impl FnMut(&[(u32, Vec<u32>)], f64),
) {
    if depth == 0 {
        rules.extend(det.iter().cloned());
    }
    if depth < clauses.len() {
        let (p, rule) = &clauses[depth];
        rules.push(rule.clone());
        enumerate_worlds(det, clauses, ads, depth + 1, mass * p, rules, visit);
        rules.pop();
        enumerate_worlds(det, clauses, ads, depth + 1, mass * (1.0 - p), rules, visit);
        return;
    }
    let ad_idx = depth - clauses.len();
    if ad_idx < ads.len() {
        let ad = &ads[ad_idx];
        for (p, head) in ad {
            rules.push((*head, Vec::new()));
            enumerate_worlds(det, clauses, ads, depth + 1, mass * p, rules, visit);
            rules.pop();
        }
        let none = (1.0 - ad.iter().map(|(p, _)| p).sum::<f64>()).max(0.0);
        enumerate_worlds(det, clauses, ads, depth + 1, mass * none, rules, visit);
        return;
    }
    visit(rules, mass);
    if depth == 0 {
        rules.clear();
    }
}

/// Interns the ground atoms of a program for fixpoint computation.
struct AtomIndex {
    ids: BTreeMap<Atom, u32>,
}

impl AtomIndex {
    fn build(program: &GroundProgram) -> Self {
        let mut ids = BTreeMap::new();
        let mut add = |a: &Atom| {
            let next = ids.len() as u32;
            ids.entry(a.clone()).or_insert(next);
        };
        for clause in program.clauses() {
            add(clause.head());
            for lit in clause.body() {
                if let BodyLiteral::Atom(a) = lit {
                    add(a);
                }
            }
        }
        for ad in program.disjunctions() {
            for head in ad.heads() {
                add(head);
            }
        }
        AtomIndex { ids }
    }

    fn lookup(&self, a: &Atom) -> Option<u32> {
        self.ids.get(a).copied()
    }

    fn len(&self) -> usize {
        self.ids.len()
    }

    fn rule_of(&self, clause: &Clause) -> (u32, Vec<u32>) {
        let head = self.lookup(clause.head()).expect("head indexed");
        let mut body: Vec<u32> = clause
            .body()
            .iter()
            .map(|lit| match lit {
                BodyLiteral::Atom(a) => self.lookup(a).expect("body atom indexed"),
                BodyLiteral::Builtin { .. } => {
                    panic!("ground program contains a builtin")
                }
            })
            .collect();
        body.sort_unstable();
        body.dedup();
        (head, body)
    }
}

/// Least fixpoint of a definite propositional program, as a derived-flag
/// per atom id.
fn least_fixpoint(rules: &[(u32, Vec<u32>)], n_atoms: usize) -> Vec<bool> {
    let mut derived = vec![false; n_atoms];
    let mut remaining: Vec<usize> = rules.iter().map(|(_, body)| body.len()).collect();
    let mut watchers: Vec<Vec<usize>> = vec![Vec::new(); n_atoms];
    for (ri, (_, body)) in rules.iter().enumerate() {
        for &a in body {
            watchers[a as usize].push(ri);
        }
    }
    let mut queue: Vec<u32> = Vec::new();
    for (ri, (head, _)) in rules.iter().enumerate() {
        if remaining[ri] == 0 && !derived[*head as usize] {
            derived[*head as usize] = true;
            queue.push(*head);
        }
    }
    while let Some(atom) = queue.pop() {
        for &ri in &watchers[atom as usize] {
            remaining[ri] -= 1;
            if remaining[ri] == 0 {
                let head = rules[ri].0;
                if !derived[head as usize] {
                    derived[head as usize] = true;
                    queue.push(head);
                }
            }
        }
    }
    derived
}

/// A rule over interned atoms; bodies stay sorted and deduplicated.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct ResidualRule {
    head: u32,
    body: Vec<u32>,
}

/// The memoizable residual: what is still undecided and relevant to the
/// query. Probabilities are keyed by bit pattern so hashing is exact.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
struct Residual {
    det: Vec<ResidualRule>,
    prob: Vec<(u64, ResidualRule)>,
    ads: Vec<Vec<(u64, u32)>>,
}

enum Simplified {
    Value(f64),
    Pending(Residual),
}

struct Conditioner {
    qid: u32,
    memo: HashMap<Residual, f64>,
    initial: Residual,
}

impl Conditioner {
    fn new(program: &GroundProgram, q: &Atom) -> Self {
        let index = AtomIndex::build(program);
        let qid = index.lookup(q).expect("answerable query is indexed");
        let mut residual = Residual::default();
        for clause in program.clauses() {
            let (head, body) = index.rule_of(clause);
            let rule = ResidualRule { head, body };
            let p = clause.prob();
            if p == 1.0 {
                residual.det.push(rule);
            } else if p > 0.0 {
                residual.prob.push((p.to_bits(), rule));
            }
            // clauses with probability 0 still head queries but never fire
        }
        for ad in program.disjunctions() {
            let choices: Vec<(u64, u32)> = ad
                .choices()
                .filter(|(p, _)| *p > 0.0)
                .map(|(p, a)| (p.to_bits(), index.lookup(a).expect("indexed")))
                .collect();
            if !choices.is_empty() {
                residual.ads.push(choices);
            }
        }
        Conditioner {
            qid,
            memo: HashMap::new(),
            initial: residual,
        }
    }

    fn run(mut self) -> f64 {
        let initial = std::mem::take(&mut self.initial);
        match self.simplify(initial) {
            Simplified::Value(v) => v,
            Simplified::Pending(state) => self.conditioned(state),
        }
    }

    /// Propagates certain derivations, drops dead and irrelevant rules, and
    /// detects decided outcomes.
    fn simplify(&self, mut state: Residual) -> Simplified {
        // fixpoint over deterministic rules: empty bodies fire, derived
        // atoms disappear from all bodies
        let mut derived: BTreeSet<u32> = BTreeSet::new();
        loop {
            let mut new_facts: Vec<u32> = Vec::new();
            state.det.retain(|rule| {
                if rule.body.is_empty() {
                    new_facts.push(rule.head);
                    false
                } else {
                    true
                }
            });
            if new_facts.is_empty() {
                break;
            }
            for f in new_facts {
                derived.insert(f);
            }
            if derived.contains(&self.qid) {
                return Simplified::Value(1.0);
            }
            for rule in &mut state.det {
                rule.body.retain(|a| !derived.contains(a));
            }
            for (_, rule) in &mut state.prob {
                rule.body.retain(|a| !derived.contains(a));
            }
        }

        // drop rules whose bodies mention atoms nothing can derive
        loop {
            let mut possible: BTreeSet<u32> = derived.clone();
            possible.extend(state.det.iter().map(|r| r.head));
            possible.extend(state.prob.iter().map(|(_, r)| r.head));
            for ad in &state.ads {
                possible.extend(ad.iter().map(|(_, h)| *h));
            }
            let alive = |r: &ResidualRule| r.body.iter().all(|a| possible.contains(a));
            let before = state.det.len() + state.prob.len();
            state.det.retain(alive);
            state.prob.retain(|(_, r)| alive(r));
            if state.det.len() + state.prob.len() == before {
                if !possible.contains(&self.qid) {
                    return Simplified::Value(0.0);
                }
                break;
            }
        }

        // restrict to the backward closure of the query
        let mut relevant: BTreeSet<u32> = BTreeSet::new();
        let mut frontier = vec![self.qid];
        while let Some(atom) = frontier.pop() {
            if !relevant.insert(atom) {
                continue;
            }
            for rule in state.det.iter().chain(state.prob.iter().map(|(_, r)| r)) {
                if rule.head == atom {
                    frontier.extend(rule.body.iter().copied());
                }
            }
        }
        state.det.retain(|r| relevant.contains(&r.head));
        state.prob.retain(|(_, r)| relevant.contains(&r.head));
        // irrelevant disjunction choices fold into the none branch
        let mut ads = Vec::with_capacity(state.ads.len());
        for ad in state.ads.drain(..) {
            let kept: Vec<(u64, u32)> = ad
                .into_iter()
                .filter(|(_, h)| relevant.contains(h))
                .collect();
            if !kept.is_empty() {
                ads.push(kept);
            }
        }
        state.ads = ads;

        if state.prob.is_empty() && state.ads.is_empty() {
            // no choices left: remaining definite rules all have nonempty
            // bodies, so the least fixpoint derives nothing new
            return Simplified::Value(0.0);
        }

        state.det.sort_unstable();
        state.det.dedup();
        state.prob.sort_unstable();
        state.ads.sort_unstable();
        Simplified::Pending(state)
    }

    fn conditioned(&mut self, state: Residual) -> f64 {
        if let Some(&v) = self.memo.get(&state) {
            return v;
        }
        let value = if let Some((p_bits, rule)) = state.prob.first().cloned() {
            let p = f64::from_bits(p_bits);
            let mut included = state.clone();
            included.prob.remove(0);
            included.det.push(rule);
            let mut excluded = state.clone();
            excluded.prob.remove(0);
            p * self.resolve(included) + (1.0 - p) * self.resolve(excluded)
        } else {
            let choices = state.ads[0].clone();
            let mut total = 0.0;
            let mut none_mass = 1.0;
            for (p_bits, head) in &choices {
                let p = f64::from_bits(*p_bits);
                none_mass -= p;
                let mut chosen = state.clone();
                chosen.ads.remove(0);
                chosen.det.push(ResidualRule {
                    head: *head,
                    body: Vec::new(),
                });
                total += p * self.resolve(chosen);
            }
            if none_mass > 0.0 {
                let mut none = state.clone();
                none.ads.remove(0);
                total += none_mass * self.resolve(none);
            }
            total
        };
        self.memo.insert(state, value);
        value
    }

    fn resolve(&mut self, state: Residual) -> f64 {
        match self.simplify(state) {
            Simplified::Value(v) => v,
            Simplified::Pending(next) => self.conditioned(next),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_atom, parse_program};

    fn example1() -> KnowledgeBase {
        parse_program("0.2::a.\n0.3::b.\n0.5::a :- b.").unwrap()
    }

    fn world(kb: &KnowledgeBase, flags: &[(&str, bool)]) -> PossibleWorld {
        let mut w = PossibleWorld::default();
        for c in kb.clauses() {
            let key = c.to_string();
            for (frag, included) in flags {
                if key.starts_with(frag) {
                    w.included.insert(c.clone(), *included);
                }
            }
        }
        w
    }

    #[test]
    fn derives_fact_when_included() {
        let kb = example1();
        let program = ground(&kb).unwrap();
        let q = parse_atom("a").unwrap();
        let w = world(&kb, &[("0.2::a", true), ("0.3::b", false), ("0.5::a", true)]);
        assert!(derives(&w, &program, &q));
    }

    #[test]
    fn derives_through_rule() {
        let kb = example1();
        let program = ground(&kb).unwrap();
        let q = parse_atom("a").unwrap();
        let w = world(&kb, &[("0.2::a", false), ("0.3::b", true), ("0.5::a", true)]);
        assert!(derives(&w, &program, &q));
    }

    #[test]
    fn no_derivation_path() {
        let kb = example1();
        let program = ground(&kb).unwrap();
        let q = parse_atom("a").unwrap();
        let w = world(&kb, &[("0.2::a", false), ("0.3::b", true), ("0.5::a", false)]);
        assert!(!derives(&w, &program, &q));
    }

    #[test]
    fn example_probabilities() {
        let kb = example1();
        let a = parse_atom("a").unwrap();
        let b = parse_atom("b").unwrap();
        assert!((query_prob(&kb, &a, QueryPolicy::Error).unwrap() - 0.32).abs() < 1e-12);
        assert!((query_prob(&kb, &b, QueryPolicy::Error).unwrap() - 0.3).abs() < 1e-12);
        assert!((query_prob_enumeration(&kb, &a, QueryPolicy::Error).unwrap() - 0.32).abs() < 1e-12);
    }

    #[test]
    fn coexisting_labels_combine() {
        let kb = parse_program("0.9::b.\n0.3::b.").unwrap();
        let b = parse_atom("b").unwrap();
        assert!((query_prob(&kb, &b, QueryPolicy::Error).unwrap() - 0.93).abs() < 1e-12);
    }

    #[test]
    fn pass_tom_is_0_72() {
        let kb = parse_program(
            "0.9::pass_score(70).\n0.8::mark(tom,75).\n\
             1.0::pass(X) :- mark(X,M), pass_score(S), M >= S.",
        )
        .unwrap();
        let q = parse_atom("pass(tom)").unwrap();
        assert!((query_prob(&kb, &q, QueryPolicy::Error).unwrap() - 0.72).abs() < 1e-12);
    }

    #[test]
    fn unanswerable_policies() {
        let kb = example1();
        let q = parse_atom("missing").unwrap();
        assert_eq!(
            query_prob(&kb, &q, QueryPolicy::Error),
            Err(InferenceError::Unanswerable(q.clone()))
        );
        assert_eq!(query_prob(&kb, &q, QueryPolicy::Half), Ok(0.5));
    }

    #[test]
    fn answerable_set() {
        let kb = example1();
        let heads = answerable(&kb).unwrap();
        assert_eq!(
            heads.into_iter().collect::<Vec<_>>(),
            vec![parse_atom("a").unwrap(), parse_atom("b").unwrap()]
        );
        assert!(answerable(&KnowledgeBase::new()).unwrap().is_empty());
    }

    #[test]
    fn circular_support_does_not_derive() {
        let kb = parse_program("0.5::a :- b.\n1.0::b :- a.").unwrap();
        let a = parse_atom("a").unwrap();
        assert_eq!(query_prob(&kb, &a, QueryPolicy::Error).unwrap(), 0.0);
    }

    #[test]
    fn annotated_disjunction_mass() {
        let kb = parse_program("0.25::w(\"A\"); 0.25::w(\"B\"); 0.25::w(\"C\"); 0.25::w(\"D\").")
            .unwrap();
        let q = parse_atom("w(\"A\")").unwrap();
        assert!((query_prob(&kb, &q, QueryPolicy::Error).unwrap() - 0.25).abs() < 1e-12);
        assert!(
            (query_prob_enumeration(&kb, &q, QueryPolicy::Error).unwrap() - 0.25).abs() < 1e-12
        );
    }

    #[test]
    fn world_probability_products() {
        let kb = example1();
        let w = world(&kb, &[("0.2::a", true), ("0.3::b", false), ("0.5::a", true)]);
        assert!((w.probability() - 0.2 * 0.7 * 0.5).abs() < 1e-12);
    }
}

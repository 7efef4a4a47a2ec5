//! Grounding: instantiates variables over the Herbrand constants of the
//! knowledge base and evaluates builtins away.
//!
//! A variable's domain is every constant in the KB whose kind (symbol,
//! string, integer) matches the kinds observed at the argument slots the
//! variable occupies in head or body atoms. Instantiations with a false or
//! ill-typed builtin are dropped; surviving instances inherit the source
//! clause's probability.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{
    AnnotatedDisjunction, Atom, BodyLiteral, BuiltinOp, Clause, Constant, ConstantKind,
    KnowledgeBase, Term,
};

/// Upper bound on variable instantiations tried for a whole program.
pub const DEFAULT_INSTANTIATION_CAP: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum GroundError {
    #[error("variable {variable} in `{clause}` has an empty domain")]
    UnboundVariable { variable: String, clause: String },
    #[error("grounding exceeds the instantiation cap of {cap}")]
    InstantiationCap { cap: usize },
    #[error("annotated disjunction `{0}` contains variables")]
    NonGroundDisjunction(String),
}

/// A fully instantiated program: every atom ground, every builtin evaluated
/// and eliminated.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroundProgram {
    clauses: BTreeSet<Clause>,
    disjunctions: BTreeSet<AnnotatedDisjunction>,
}

impl GroundProgram {
    pub fn clauses(&self) -> impl Iterator<Item = &Clause> {
        self.clauses.iter()
    }

    pub fn disjunctions(&self) -> impl Iterator<Item = &AnnotatedDisjunction> {
        self.disjunctions.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty() && self.disjunctions.is_empty()
    }

    /// Deduplicated ground head atoms: the queries this program can answer.
    pub fn heads(&self) -> BTreeSet<Atom> {
        let mut out: BTreeSet<Atom> = self.clauses.iter().map(|c| c.head().clone()).collect();
        for d in &self.disjunctions {
            out.extend(d.heads().cloned());
        }
        out
    }

    pub fn to_knowledge_base(&self) -> KnowledgeBase {
        let mut kb = KnowledgeBase::new();
        for c in &self.clauses {
            kb.insert_clause(c.clone());
        }
        for d in &self.disjunctions {
            kb.insert_disjunction(d.clone());
        }
        kb
    }
}

/// An argument slot: predicate, arity, and position.
type Slot = (String, usize, usize);

fn body_atoms(clause: &Clause) -> impl Iterator<Item = &Atom> {
    clause.body().iter().filter_map(|lit| match lit {
        BodyLiteral::Atom(a) => Some(a),
        BodyLiteral::Builtin { .. } => None,
    })
}

fn observe_atom(
    atom: &Atom,
    slot_kinds: &mut BTreeMap<Slot, BTreeSet<ConstantKind>>,
    constants: &mut BTreeSet<Constant>,
) {
    for (pos, term) in atom.args.iter().enumerate() {
        if let Term::Constant(c) = term {
            slot_kinds
                .entry((atom.predicate.clone(), atom.args.len(), pos))
                .or_default()
                .insert(c.kind());
            constants.insert(c.clone());
        }
    }
}

fn builtin_constants(clause: &Clause, constants: &mut BTreeSet<Constant>) {
    for lit in clause.body() {
        if let BodyLiteral::Builtin { args, .. } = lit {
            for t in args {
                if let Term::Constant(c) = t {
                    constants.insert(c.clone());
                }
            }
        }
    }
}

/// Grounds with the default instantiation cap.
pub fn ground(kb: &KnowledgeBase) -> Result<GroundProgram, GroundError> {
    ground_with_cap(kb, DEFAULT_INSTANTIATION_CAP)
}

pub fn ground_with_cap(kb: &KnowledgeBase, cap: usize) -> Result<GroundProgram, GroundError> {
    let mut slot_kinds: BTreeMap<Slot, BTreeSet<ConstantKind>> = BTreeMap::new();
    let mut constants: BTreeSet<Constant> = BTreeSet::new();
    for clause in kb.clauses() {
        observe_atom(clause.head(), &mut slot_kinds, &mut constants);
        for atom in body_atoms(clause) {
            observe_atom(atom, &mut slot_kinds, &mut constants);
        }
        builtin_constants(clause, &mut constants);
    }
    for d in kb.disjunctions() {
        for head in d.heads() {
            observe_atom(head, &mut slot_kinds, &mut constants);
        }
    }

    let mut program = GroundProgram::default();
    for d in kb.disjunctions() {
        if !d.is_ground() {
            return Err(GroundError::NonGroundDisjunction(d.to_string()));
        }
        program.disjunctions.insert(d.clone());
    }

    let mut budget = cap;
    for clause in kb.clauses() {
        ground_clause(clause, &slot_kinds, &constants, cap, &mut budget, &mut program)?;
    }
    Ok(program)
}

fn ground_clause(
    clause: &Clause,
    slot_kinds: &BTreeMap<Slot, BTreeSet<ConstantKind>>,
    constants: &BTreeSet<Constant>,
    cap: usize,
    budget: &mut usize,
    program: &mut GroundProgram,
) -> Result<(), GroundError> {
    // slots each variable occupies in non-builtin atoms
    let mut var_slots: BTreeMap<String, BTreeSet<Slot>> = BTreeMap::new();
    let mut note = |atom: &Atom| {
        for (pos, term) in atom.args.iter().enumerate() {
            if let Term::Variable(v) = term {
                var_slots
                    .entry(v.clone())
                    .or_default()
                    .insert((atom.predicate.clone(), atom.args.len(), pos));
            }
        }
    };
    note(clause.head());
    for atom in body_atoms(clause) {
        note(atom);
    }
    // variables that appear only inside builtins get no slots and therefore
    // an empty domain
    for lit in clause.body() {
        if let BodyLiteral::Builtin { args, .. } = lit {
            for t in args {
                if let Term::Variable(v) = t {
                    var_slots.entry(v.clone()).or_default();
                }
            }
        }
    }

    if var_slots.is_empty() {
        // already ground; only builtins remain to evaluate
        if let Some(ground) = evaluate_builtins(clause) {
            program.clauses.insert(ground);
        }
        return Ok(());
    }

    let mut domains: Vec<(String, Vec<Constant>)> = Vec::new();
    for (var, slots) in &var_slots {
        let kinds: BTreeSet<ConstantKind> = slots
            .iter()
            .filter_map(|s| slot_kinds.get(s))
            .flatten()
            .copied()
            .collect();
        let domain: Vec<Constant> = constants
            .iter()
            .filter(|c| kinds.contains(&c.kind()))
            .cloned()
            .collect();
        if domain.is_empty() {
            return Err(GroundError::UnboundVariable {
                variable: var.clone(),
                clause: clause.to_string(),
            });
        }
        domains.push((var.clone(), domain));
    }

    let count: usize = domains
        .iter()
        .map(|(_, d)| d.len())
        .try_fold(1usize, |acc, n| acc.checked_mul(n))
        .unwrap_or(usize::MAX);
    if count > *budget {
        return Err(GroundError::InstantiationCap { cap });
    }
    *budget -= count;

    let mut assignment: BTreeMap<&str, &Constant> = BTreeMap::new();
    instantiate(clause, &domains, 0, &mut assignment, program);
    Ok(())
}

fn instantiate<'a>(
    clause: &Clause,
    domains: &'a [(String, Vec<Constant>)],
    depth: usize,
    assignment: &mut BTreeMap<&'a str, &'a Constant>,
    program: &mut GroundProgram,
) {
    if depth == domains.len() {
        let substituted = substitute(clause, assignment);
        if let Some(ground) = evaluate_builtins(&substituted) {
            program.clauses.insert(ground);
        }
        return;
    }
    let (var, domain) = &domains[depth];
    for value in domain {
        assignment.insert(var.as_str(), value);
        instantiate(clause, domains, depth + 1, assignment, program);
    }
    assignment.remove(var.as_str());
}

fn subst_term(term: &Term, assignment: &BTreeMap<&str, &Constant>) -> Term {
    match term {
        Term::Constant(_) => term.clone(),
        Term::Variable(v) => Term::Constant((*assignment.get(v.as_str()).unwrap()).clone()),
    }
}

fn subst_atom(atom: &Atom, assignment: &BTreeMap<&str, &Constant>) -> Atom {
    Atom::new(
        atom.predicate.clone(),
        atom.args.iter().map(|t| subst_term(t, assignment)).collect(),
    )
}

fn substitute(clause: &Clause, assignment: &BTreeMap<&str, &Constant>) -> Clause {
    let head = subst_atom(clause.head(), assignment);
    let body = clause
        .body()
        .iter()
        .map(|lit| match lit {
            BodyLiteral::Atom(a) => BodyLiteral::Atom(subst_atom(a, assignment)),
            BodyLiteral::Builtin { op, args } => BodyLiteral::Builtin {
                op: *op,
                args: args.iter().map(|t| subst_term(t, assignment)).collect(),
            },
        })
        .collect();
    Clause::new(clause.prob(), head, body).expect("probability already validated")
}

/// Evaluates ground builtins; returns the clause with builtins removed, or
/// None when some builtin is false or ill-typed.
fn evaluate_builtins(clause: &Clause) -> Option<Clause> {
    let mut body = Vec::with_capacity(clause.body().len());
    for lit in clause.body() {
        match lit {
            BodyLiteral::Atom(a) => body.push(BodyLiteral::Atom(a.clone())),
            BodyLiteral::Builtin { op, args } => {
                if !eval_builtin(*op, args) {
                    return None;
                }
            }
        }
    }
    Some(Clause::new(clause.prob(), clause.head().clone(), body).expect("validated"))
}

fn eval_builtin(op: BuiltinOp, args: &[Term]) -> bool {
    let consts: Vec<&Constant> = match args.iter().map(Term::as_constant).collect() {
        Some(cs) => cs,
        None => return false,
    };
    match op {
        BuiltinOp::Ge | BuiltinOp::Le | BuiltinOp::Gt | BuiltinOp::Lt | BuiltinOp::Eq => {
            let (a, b) = match (consts[0], consts[1]) {
                (Constant::Int(a), Constant::Int(b)) => (*a, *b),
                _ => return false,
            };
            match op {
                BuiltinOp::Ge => a >= b,
                BuiltinOp::Le => a <= b,
                BuiltinOp::Gt => a > b,
                BuiltinOp::Lt => a < b,
                BuiltinOp::Eq => a == b,
                _ => unreachable!(),
            }
        }
        BuiltinOp::EndsWith => match (consts[0], consts[1]) {
            (Constant::Str(s), Constant::Str(suffix)) => s.ends_with(suffix.as_str()),
            _ => false,
        },
        BuiltinOp::CharAt => match (consts[0], consts[1], consts[2]) {
            (Constant::Str(s), Constant::Int(i), Constant::Str(c)) => {
                if *i < 0 || c.chars().count() != 1 {
                    return false;
                }
                s.chars().nth(*i as usize) == c.chars().next()
            }
            _ => false,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;

    #[test]
    fn already_ground_program_is_unchanged() {
        let kb = parse_program("0.2::a.\n0.3::b.\n0.5::a :- b.").unwrap();
        let g = ground(&kb).unwrap();
        assert_eq!(g.to_knowledge_base(), kb);
    }

    #[test]
    fn pass_score_rule_grounds_and_eliminates_builtin() {
        let kb = parse_program(
            "0.9::pass_score(70).\n0.8::mark(tom,75).\n\
             1.0::pass(X) :- mark(X,M), pass_score(S), M >= S.",
        )
        .unwrap();
        let g = ground(&kb).unwrap();
        let expected = parse_program("1.0::pass(tom) :- mark(tom,75), pass_score(70).")
            .unwrap()
            .clauses()
            .next()
            .cloned()
            .unwrap();
        assert!(g.clauses().any(|c| c == &expected));
        assert!(g
            .clauses()
            .all(|c| c.is_ground() && c.body().iter().all(|l| matches!(l, BodyLiteral::Atom(_)))));
        // the 70 >= 75 instantiation is dropped
        let dropped = parse_program("1.0::pass(tom) :- mark(tom,70), pass_score(75).")
            .unwrap()
            .clauses()
            .next()
            .cloned()
            .unwrap();
        assert!(!g.clauses().any(|c| c.same_shape(&dropped)));
        let heads = g.heads();
        assert!(heads.contains(&crate::lang::parse_atom("pass(tom)").unwrap()));
        assert_eq!(heads.len(), 3);
    }

    #[test]
    fn endswith_enumerates_string_constants() {
        let kb = parse_program(
            "1.0::word(three,\"ICE\").\n\
             1.0::word(one,\"APPLE\") :- word(three,X), endswith(X,\"E\").",
        )
        .unwrap();
        let g = ground(&kb).unwrap();
        let expected = parse_program("word(one,\"APPLE\") :- word(three,\"ICE\").")
            .unwrap()
            .clauses()
            .next()
            .cloned()
            .unwrap();
        assert!(g.clauses().any(|c| c == &expected));
    }

    #[test]
    fn unbound_variable_is_an_error() {
        let kb = parse_program("p(X) :- q, X >= 3.").unwrap();
        match ground(&kb) {
            Err(GroundError::UnboundVariable { variable, .. }) => assert_eq!(variable, "X"),
            other => panic!("expected unbound variable error, got {other:?}"),
        }
    }

    #[test]
    fn instantiation_cap_aborts() {
        let mut text = String::new();
        for i in 0..20 {
            text.push_str(&format!("p({i}).\n"));
        }
        text.push_str("q(A,B,C,D) :- p(A), p(B), p(C), p(D).");
        let kb = parse_program(&text).unwrap();
        assert!(matches!(
            ground_with_cap(&kb, 1000),
            Err(GroundError::InstantiationCap { cap: 1000 })
        ));
        // 20^4 = 160_000 fits under the default cap
        assert!(ground(&kb).is_ok());
    }

    #[test]
    fn grounding_preserves_probabilities() {
        let kb = parse_program("0.4::p(1).\n0.7::q(X) :- p(X).").unwrap();
        let g = ground(&kb).unwrap();
        let rule = g.clauses().find(|c| !c.is_fact()).unwrap();
        assert_eq!(rule.prob(), 0.7);
    }
}

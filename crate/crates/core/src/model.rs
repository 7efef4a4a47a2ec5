//! Core value types: constants, terms, atoms, clauses, annotated
//! disjunctions, knowledge bases, and messages.
//!
//! All types are immutable values with a total canonical order, so sets
//! of clauses iterate deterministically and every operation downstream
//! can break ties reproducibly.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// Probabilities are canonicalized to 12 decimal places on construction so
/// that re-parsed programs compare equal to their sources.
const PROB_SCALE: f64 = 1e12;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("annotated disjunction needs at least two choices")]
    DisjunctionTooSmall,
    #[error("annotated disjunction probabilities sum to {0}, which exceeds 1")]
    DisjunctionOverflow(f64),
}

/// A clause label in [0, 1], rounded to 12 decimal places.
///
/// Equality, ordering, and hashing are exact on the canonical value, which
/// makes full-clause identity well defined.
#[derive(Clone, Copy, Debug)]
pub struct Prob(f64);

impl Prob {
    pub fn new(p: f64) -> Result<Self, ModelError> {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(ModelError::InvalidProbability(p));
        }
        let canon = (p * PROB_SCALE).round() / PROB_SCALE;
        // normalize -0.0 so the bit pattern is unique
        Ok(Prob(if canon == 0.0 { 0.0 } else { canon }))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl PartialEq for Prob {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}
impl Eq for Prob {}
impl PartialOrd for Prob {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Prob {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
impl std::hash::Hash for Prob {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

/// Formats a probability in the canonical text form: up to 12 decimals,
/// trailing zeros trimmed ("0.3", "1", "0.000000000001").
pub(crate) fn format_prob(p: f64) -> String {
    let mut s = format!("{:.12}", p);
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

/// A ground value: an unquoted symbol, a quoted string, or an integer.
///
/// Symbols and strings are both "text" constants, but they are kept apart
/// so quoting survives serialization and string builtins only ever see
/// quoted strings.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Constant {
    Sym(String),
    Str(String),
    Int(i64),
}

impl Constant {
    pub fn kind(&self) -> ConstantKind {
        match self {
            Constant::Sym(_) => ConstantKind::Sym,
            Constant::Str(_) => ConstantKind::Str,
            Constant::Int(_) => ConstantKind::Int,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConstantKind {
    Sym,
    Str,
    Int,
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constant::Sym(s) => write!(f, "{s}"),
            Constant::Str(s) => write!(f, "\"{s}\""),
            Constant::Int(i) => write!(f, "{i}"),
        }
    }
}

/// Either a constant or a variable (variables start with an uppercase letter).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Constant(Constant),
    Variable(String),
}

impl Term {
    pub fn sym(s: impl Into<String>) -> Self {
        Term::Constant(Constant::Sym(s.into()))
    }
    pub fn str(s: impl Into<String>) -> Self {
        Term::Constant(Constant::Str(s.into()))
    }
    pub fn int(i: i64) -> Self {
        Term::Constant(Constant::Int(i))
    }
    pub fn var(name: impl Into<String>) -> Self {
        Term::Variable(name.into())
    }

    pub fn is_ground(&self) -> bool {
        matches!(self, Term::Constant(_))
    }

    pub fn as_constant(&self) -> Option<&Constant> {
        match self {
            Term::Constant(c) => Some(c),
            Term::Variable(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Constant(c) => write!(f, "{c}"),
            Term::Variable(v) => write!(f, "{v}"),
        }
    }
}

/// A predicate applied to zero or more terms. Ground atoms are the unit of
/// queries; ordering is lexicographic by (predicate, args).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Atom {
            predicate: predicate.into(),
            args,
        }
    }

    /// A zero-arity atom.
    pub fn prop(predicate: impl Into<String>) -> Self {
        Atom::new(predicate, Vec::new())
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.predicate)?;
        if !self.args.is_empty() {
            write!(f, "(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{a}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// Built-in predicates evaluated away at grounding time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BuiltinOp {
    Ge,
    Le,
    Gt,
    Lt,
    Eq,
    EndsWith,
    CharAt,
}

impl BuiltinOp {
    pub fn arity(self) -> usize {
        match self {
            BuiltinOp::CharAt => 3,
            _ => 2,
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BuiltinOp::Ge | BuiltinOp::Le | BuiltinOp::Gt | BuiltinOp::Lt | BuiltinOp::Eq
        )
    }
}

/// A body element: a plain atom or a builtin call.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BodyLiteral {
    Atom(Atom),
    Builtin { op: BuiltinOp, args: Vec<Term> },
}

impl BodyLiteral {
    pub fn atom(a: Atom) -> Self {
        BodyLiteral::Atom(a)
    }

    pub fn is_ground(&self) -> bool {
        match self {
            BodyLiteral::Atom(a) => a.is_ground(),
            BodyLiteral::Builtin { args, .. } => args.iter().all(Term::is_ground),
        }
    }
}

impl fmt::Display for BodyLiteral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BodyLiteral::Atom(a) => write!(f, "{a}"),
            BodyLiteral::Builtin { op, args } => match op {
                BuiltinOp::Ge => write!(f, "{} >= {}", args[0], args[1]),
                BuiltinOp::Le => write!(f, "{} =< {}", args[0], args[1]),
                BuiltinOp::Gt => write!(f, "{} > {}", args[0], args[1]),
                BuiltinOp::Lt => write!(f, "{} < {}", args[0], args[1]),
                BuiltinOp::Eq => write!(f, "{} = {}", args[0], args[1]),
                BuiltinOp::EndsWith => write!(f, "endswith({},{})", args[0], args[1]),
                BuiltinOp::CharAt => {
                    write!(f, "charAt({},{},{})", args[0], args[1], args[2])
                }
            },
        }
    }
}

/// A probability-labelled rule; a fact when the body is empty.
///
/// Identity is the full (head, body, prob) triple, so clauses that differ
/// only in probability coexist in a knowledge base.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Clause {
    head: Atom,
    body: Vec<BodyLiteral>,
    prob: Prob,
}

impl Clause {
    pub fn new(prob: f64, head: Atom, body: Vec<BodyLiteral>) -> Result<Self, ModelError> {
        Ok(Clause {
            head,
            body,
            prob: Prob::new(prob)?,
        })
    }

    pub fn fact(prob: f64, head: Atom) -> Result<Self, ModelError> {
        Clause::new(prob, head, Vec::new())
    }

    pub fn prob(&self) -> f64 {
        self.prob.value()
    }

    pub fn head(&self) -> &Atom {
        &self.head
    }

    pub fn body(&self) -> &[BodyLiteral] {
        &self.body
    }

    pub fn is_fact(&self) -> bool {
        self.body.is_empty()
    }

    pub fn is_ground(&self) -> bool {
        self.head.is_ground() && self.body.iter().all(BodyLiteral::is_ground)
    }

    /// True when head and body coincide, whatever the probabilities.
    pub fn same_shape(&self, other: &Clause) -> bool {
        self.head == other.head && self.body == other.body
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.prob.value() != 1.0 {
            write!(f, "{}::", format_prob(self.prob.value()))?;
        }
        write!(f, "{}", self.head)?;
        if !self.body.is_empty() {
            write!(f, " :- ")?;
            for (i, lit) in self.body.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{lit}")?;
            }
        }
        write!(f, ".")
    }
}

/// A mutually exclusive group of probabilistic facts. Probabilities sum to
/// at most 1; any remainder is the probability that no choice is made.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AnnotatedDisjunction {
    choices: Vec<(Prob, Atom)>,
}

impl AnnotatedDisjunction {
    pub fn new(choices: Vec<(f64, Atom)>) -> Result<Self, ModelError> {
        if choices.len() < 2 {
            return Err(ModelError::DisjunctionTooSmall);
        }
        let mut canon = Vec::with_capacity(choices.len());
        for (p, a) in choices {
            canon.push((Prob::new(p)?, a));
        }
        let total: f64 = canon.iter().map(|(p, _)| p.value()).sum();
        if total > 1.0 + 1e-9 {
            return Err(ModelError::DisjunctionOverflow(total));
        }
        Ok(AnnotatedDisjunction { choices: canon })
    }

    pub fn choices(&self) -> impl Iterator<Item = (f64, &Atom)> {
        self.choices.iter().map(|(p, a)| (p.value(), a))
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    /// Probability that no choice is selected.
    pub fn none_prob(&self) -> f64 {
        (1.0 - self.choices.iter().map(|(p, _)| p.value()).sum::<f64>()).max(0.0)
    }

    pub fn heads(&self) -> impl Iterator<Item = &Atom> {
        self.choices.iter().map(|(_, a)| a)
    }

    pub fn is_ground(&self) -> bool {
        self.choices.iter().all(|(_, a)| a.is_ground())
    }

    /// The ordered head list, the unit key for assimilation.
    pub fn head_key(&self) -> Vec<&Atom> {
        self.choices.iter().map(|(_, a)| a).collect()
    }
}

impl fmt::Display for AnnotatedDisjunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (p, a)) in self.choices.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{}::{}", format_prob(p.value()), a)?;
        }
        write!(f, ".")
    }
}

/// A deduplicated set of clauses and annotated disjunctions.
///
/// Set semantics under full-clause identity: inserting an element that is
/// already present is a no-op.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KnowledgeBase {
    clauses: BTreeSet<Clause>,
    disjunctions: BTreeSet<AnnotatedDisjunction>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_clauses(clauses: impl IntoIterator<Item = Clause>) -> Self {
        KnowledgeBase {
            clauses: clauses.into_iter().collect(),
            disjunctions: BTreeSet::new(),
        }
    }

    pub fn insert_clause(&mut self, c: Clause) -> bool {
        self.clauses.insert(c)
    }

    pub fn insert_disjunction(&mut self, d: AnnotatedDisjunction) -> bool {
        self.disjunctions.insert(d)
    }

    pub fn remove_clause(&mut self, c: &Clause) -> bool {
        self.clauses.remove(c)
    }

    pub fn remove_disjunction(&mut self, d: &AnnotatedDisjunction) -> bool {
        self.disjunctions.remove(d)
    }

    pub fn clauses(&self) -> impl Iterator<Item = &Clause> {
        self.clauses.iter()
    }

    pub fn disjunctions(&self) -> impl Iterator<Item = &AnnotatedDisjunction> {
        self.disjunctions.iter()
    }

    pub fn contains_clause(&self, c: &Clause) -> bool {
        self.clauses.contains(c)
    }

    pub fn contains_disjunction(&self, d: &AnnotatedDisjunction) -> bool {
        self.disjunctions.contains(d)
    }

    /// Number of elements, counting each disjunction as one.
    pub fn len(&self) -> usize {
        self.clauses.len() + self.disjunctions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty() && self.disjunctions.is_empty()
    }

    /// Deduplicated head atoms across clauses and disjunction choices.
    pub fn heads(&self) -> BTreeSet<Atom> {
        let mut out: BTreeSet<Atom> = self.clauses.iter().map(|c| c.head.clone()).collect();
        for d in &self.disjunctions {
            out.extend(d.heads().cloned());
        }
        out
    }

    /// Set union with another knowledge base.
    pub fn union(&self, other: &KnowledgeBase) -> KnowledgeBase {
        let mut out = self.clone();
        out.clauses.extend(other.clauses.iter().cloned());
        out.disjunctions.extend(other.disjunctions.iter().cloned());
        out
    }

    /// Set union with a message; unchanged if the message is already present.
    pub fn union_message(&self, m: &Message) -> KnowledgeBase {
        let mut out = self.clone();
        match m {
            Message::Clause(c) => {
                out.clauses.insert(c.clone());
            }
            Message::Disjunction(d) => {
                out.disjunctions.insert(d.clone());
            }
            Message::Complex(kb) => {
                out.clauses.extend(kb.clauses.iter().cloned());
                out.disjunctions.extend(kb.disjunctions.iter().cloned());
            }
        }
        out
    }
}

impl FromIterator<Clause> for KnowledgeBase {
    fn from_iter<T: IntoIterator<Item = Clause>>(iter: T) -> Self {
        KnowledgeBase::from_clauses(iter)
    }
}

/// A transmissible unit: a single clause, a single disjunction, or a whole
/// knowledge base (a complex message).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Message {
    Clause(Clause),
    Disjunction(AnnotatedDisjunction),
    Complex(KnowledgeBase),
}

impl Message {
    /// Wraps a knowledge base, collapsing singletons to a single message.
    pub fn from_kb(kb: KnowledgeBase) -> Message {
        if kb.clauses.len() == 1 && kb.disjunctions.is_empty() {
            Message::Clause(kb.clauses.into_iter().next().unwrap())
        } else if kb.clauses.is_empty() && kb.disjunctions.len() == 1 {
            Message::Disjunction(kb.disjunctions.into_iter().next().unwrap())
        } else {
            Message::Complex(kb)
        }
    }

    /// The message viewed as a knowledge base.
    pub fn to_kb(&self) -> KnowledgeBase {
        match self {
            Message::Clause(c) => KnowledgeBase::from_clauses([c.clone()]),
            Message::Disjunction(d) => {
                let mut kb = KnowledgeBase::new();
                kb.insert_disjunction(d.clone());
                kb
            }
            Message::Complex(kb) => kb.clone(),
        }
    }

    /// True when assimilating into `kb` by union would be a no-op.
    pub fn is_in(&self, kb: &KnowledgeBase) -> bool {
        match self {
            Message::Clause(c) => kb.contains_clause(c),
            Message::Disjunction(d) => kb.contains_disjunction(d),
            Message::Complex(m) => {
                m.clauses.iter().all(|c| kb.contains_clause(c))
                    && m.disjunctions.iter().all(|d| kb.contains_disjunction(d))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a() -> Atom {
        Atom::prop("a")
    }
    fn b() -> Atom {
        Atom::prop("b")
    }
    fn rule() -> Clause {
        Clause::new(0.5, a(), vec![BodyLiteral::atom(b())]).unwrap()
    }

    #[test]
    fn prob_rejects_out_of_range() {
        assert!(Prob::new(-0.1).is_err());
        assert!(Prob::new(1.1).is_err());
        assert!(Prob::new(f64::NAN).is_err());
        assert_eq!(Prob::new(0.3).unwrap().value(), 0.3);
    }

    #[test]
    fn prob_identity_rounds_to_twelve_decimals() {
        let p1 = Prob::new(0.3).unwrap();
        let p2 = Prob::new(0.3 + 1e-14).unwrap();
        assert_eq!(p1, p2);
        let p3 = Prob::new(0.3 + 1e-11).unwrap();
        assert_ne!(p1, p3);
    }

    #[test]
    fn heads_of_example_kb() {
        let kb = KnowledgeBase::from_clauses([
            Clause::fact(0.2, a()).unwrap(),
            Clause::fact(0.3, b()).unwrap(),
            rule(),
        ]);
        let heads: Vec<_> = kb.heads().into_iter().collect();
        assert_eq!(heads, vec![a(), b()]);
    }

    #[test]
    fn heads_of_empty_kb() {
        assert!(KnowledgeBase::new().heads().is_empty());
    }

    #[test]
    fn heads_collapse_duplicates() {
        let kb = KnowledgeBase::from_clauses([
            Clause::fact(0.9, b()).unwrap(),
            Clause::fact(0.3, b()).unwrap(),
            rule(),
        ]);
        assert_eq!(kb.len(), 3);
        let heads: Vec<_> = kb.heads().into_iter().collect();
        assert_eq!(heads, vec![a(), b()]);
    }

    #[test]
    fn union_is_idempotent() {
        let kb = KnowledgeBase::from_clauses([Clause::fact(0.3, b()).unwrap()]);
        let m = Message::Clause(Clause::fact(0.3, b()).unwrap());
        assert_eq!(kb.union_message(&m), kb);
    }

    #[test]
    fn union_keeps_clauses_differing_in_prob() {
        let kb = KnowledgeBase::from_clauses([Clause::fact(0.3, b()).unwrap()]);
        let out = kb.union_message(&Message::Clause(Clause::fact(0.9, b()).unwrap()));
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn union_into_empty() {
        let kb = KnowledgeBase::new();
        let m = Message::Clause(Clause::fact(0.2, Atom::prop("m")).unwrap());
        let out = kb.union_message(&m);
        assert_eq!(out.len(), 1);
        assert!(m.is_in(&out));
    }

    #[test]
    fn disjunction_validation() {
        let d = AnnotatedDisjunction::new(vec![(0.6, a()), (0.7, b())]);
        assert!(matches!(d, Err(ModelError::DisjunctionOverflow(_))));
        let d = AnnotatedDisjunction::new(vec![(0.6, a())]);
        assert!(matches!(d, Err(ModelError::DisjunctionTooSmall)));
        let d = AnnotatedDisjunction::new(vec![(0.6, a()), (0.3, b())]).unwrap();
        assert!((d.none_prob() - 0.1).abs() < 1e-9);
    }

    #[test]
    fn clause_display_elides_unit_prob() {
        let c = Clause::fact(1.0, a()).unwrap();
        assert_eq!(c.to_string(), "a.");
        assert_eq!(rule().to_string(), "0.5::a :- b.");
    }

    #[test]
    fn atom_ordering_is_lexicographic() {
        let w1 = Atom::new("word", vec![Term::sym("one"), Term::str("APPLE")]);
        let w2 = Atom::new("word", vec![Term::sym("one"), Term::str("PEACH")]);
        assert!(w1 < w2);
        assert!(Atom::prop("a") < w1);
    }
}

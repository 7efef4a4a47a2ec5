//! Crossword scenario: a receiver with candidate lists and crossing rules
//! asks queries in a fixed order; answers travel letter-by-letter over a
//! q-ary channel with majority-style decoding and retransmission.
//!
//! Inference prunes transmissions twice over: a query whose answer is
//! already derivable with certainty is skipped outright, and letters
//! implied through a crossing with an already-known answer are omitted
//! from the block.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    simulate_retransmit_with_rng, success_prob, ChannelModel, Decoder,
};
use crate::inference::{query_prob_ground, QueryPolicy};
use crate::lang::{ground, parse_program};
use crate::measures::mix_seed;
use crate::model::{AnnotatedDisjunction, Atom, Clause, KnowledgeBase, Term};

use super::ScenarioError;

/// Answers derivable with at least this probability count as known.
const CERTAINTY: f64 = 1.0 - 1e-9;

/// Retransmission sessions abort after this many rounds.
const MAX_ROUNDS: u32 = 1_000_000;

/// One crossword question: its label, the true answer, the decoder
/// threshold for a full-answer transmission, and the receiver's candidate
/// distribution (empty when the receiver has no idea).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrosswordQuery {
    pub label: String,
    pub answer: String,
    pub threshold: usize,
    #[serde(default)]
    pub candidates: Vec<(String, f64)>,
}

/// Two letter positions that share a grid cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Crossing {
    pub a: (String, usize),
    pub b: (String, usize),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrosswordConfig {
    pub alphabet_size: usize,
    pub queries: Vec<CrosswordQuery>,
    /// Crossing rules as program text, e.g. word implications.
    pub rules: String,
    pub crossings: Vec<Crossing>,
    /// Query labels per order, walked left to right.
    pub orders: Vec<Vec<String>>,
    pub epsilon_grid: Vec<f64>,
    pub trials: u32,
}

/// The three-word puzzle configuration with its candidate lists, crossing
/// rules, orders, and a 0..0.50 crossover grid.
pub fn default_crossword_config() -> CrosswordConfig {
    CrosswordConfig {
        alphabet_size: 26,
        queries: vec![
            CrosswordQuery {
                label: "one".into(),
                answer: "APPLE".into(),
                threshold: 3,
                candidates: vec![
                    ("APPLE".into(), 0.25),
                    ("PEACH".into(), 0.25),
                    ("MANGO".into(), 0.25),
                    ("MELON".into(), 0.25),
                ],
            },
            CrosswordQuery {
                label: "two".into(),
                answer: "PORK".into(),
                threshold: 2,
                candidates: vec![("BEEF".into(), 0.5), ("PORK".into(), 0.5)],
            },
            CrosswordQuery {
                label: "three".into(),
                answer: "ICE".into(),
                threshold: 3,
                candidates: Vec::new(),
            },
        ],
        rules: "word(two,\"PORK\") :- word(one,\"APPLE\").\n\
                word(one,\"APPLE\") :- word(two,\"PORK\").\n\
                word(one,\"APPLE\") :- word(three,X), endswith(X,\"E\").\n"
            .into(),
        crossings: vec![
            Crossing {
                a: ("one".into(), 4),
                b: ("three".into(), 2),
            },
            Crossing {
                a: ("one".into(), 1),
                b: ("two".into(), 0),
            },
        ],
        orders: vec![
            vec!["one".into(), "three".into()],
            vec!["two".into(), "three".into()],
            vec!["three".into()],
        ],
        epsilon_grid: (0..=50).map(|i| i as f64 / 100.0).collect(),
        trials: 10_000,
    }
}

/// One transmission the order walk decided to make.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanStep {
    pub label: String,
    /// Letters actually sent (crossed-out positions omitted).
    pub symbols: Vec<u32>,
    pub decoder: Decoder,
}

/// Expected letters for one order at one ε.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderRecord {
    pub order: usize,
    pub epsilon: f64,
    pub analytic_letters: f64,
    pub mc_letters: f64,
    pub mc_stderr: f64,
}

/// Single-transmission decode error for one query at one ε.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeErrorRecord {
    pub query: String,
    pub epsilon: f64,
    pub error_prob: f64,
}

#[derive(Clone, Debug)]
pub struct CrosswordResult {
    pub totals: Vec<OrderRecord>,
    pub decode_errors: Vec<DecodeErrorRecord>,
}

fn word_atom(label: &str, word: &str) -> Atom {
    Atom::new(
        "word",
        vec![Term::sym(label.to_string()), Term::str(word.to_string())],
    )
}

fn letters(word: &str) -> Vec<u32> {
    word.chars().map(|c| (c as u32) - ('A' as u32)).collect()
}

fn validate(cfg: &CrosswordConfig) -> Result<(), ScenarioError> {
    for q in &cfg.queries {
        if q.answer.is_empty() || !q.answer.chars().all(|c| c.is_ascii_uppercase()) {
            return Err(ScenarioError::Config(format!(
                "answer for {} must be uppercase A-Z",
                q.label
            )));
        }
        if q.threshold == 0 || q.threshold > q.answer.chars().count() {
            return Err(ScenarioError::Config(format!(
                "threshold {} out of range for {}-letter answer {}",
                q.threshold,
                q.answer.chars().count(),
                q.label
            )));
        }
    }
    for order in &cfg.orders {
        for label in order {
            if !cfg.queries.iter().any(|q| &q.label == label) {
                return Err(ScenarioError::Config(format!(
                    "order references unknown query {label}"
                )));
            }
        }
    }
    for c in &cfg.crossings {
        for (label, pos) in [&c.a, &c.b] {
            let q = cfg
                .queries
                .iter()
                .find(|q| &q.label == label)
                .ok_or_else(|| {
                    ScenarioError::Config(format!("crossing references unknown query {label}"))
                })?;
            if *pos >= q.answer.chars().count() {
                return Err(ScenarioError::Config(format!(
                    "crossing position {pos} out of range for {label}"
                )));
            }
        }
    }
    Ok(())
}

fn initial_kb(cfg: &CrosswordConfig) -> Result<KnowledgeBase, ScenarioError> {
    let mut kb = parse_program(&cfg.rules).map_err(ScenarioError::from)?;
    for q in &cfg.queries {
        if q.candidates.len() >= 2 {
            let choices = q
                .candidates
                .iter()
                .map(|(word, p)| (*p, word_atom(&q.label, word)))
                .collect();
            let ad = AnnotatedDisjunction::new(choices)
                .map_err(|e| ScenarioError::Config(e.to_string()))?;
            kb.insert_disjunction(ad);
        } else if let Some((word, p)) = q.candidates.first() {
            let fact = Clause::fact(*p, word_atom(&q.label, word))
                .map_err(|e| ScenarioError::Config(e.to_string()))?;
            kb.insert_clause(fact);
        }
    }
    Ok(kb)
}

fn is_known(kb: &KnowledgeBase, atom: &Atom) -> Result<bool, ScenarioError> {
    let program = ground(kb)?;
    if !program.heads().contains(atom) {
        return Ok(false);
    }
    Ok(query_prob_ground(&program, atom, QueryPolicy::Error)? >= CERTAINTY)
}

/// Walks one query order, deciding per query whether to transmit at all
/// and which letters to omit; assimilated answers are certain facts.
pub fn order_plan(
    cfg: &CrosswordConfig,
    order: &[String],
) -> Result<Vec<PlanStep>, ScenarioError> {
    validate(cfg)?;
    let mut kb = initial_kb(cfg)?;
    let mut plan = Vec::new();
    for label in order {
        let query = cfg
            .queries
            .iter()
            .find(|q| &q.label == label)
            .expect("validated");
        let atom = word_atom(&query.label, &query.answer);
        if is_known(&kb, &atom)? {
            // nothing to send; the receiver already derives the answer
        } else {
            let n_total = query.answer.chars().count();
            let mut implied = vec![false; n_total];
            for c in &cfg.crossings {
                for ((this_label, this_pos), (other_label, _)) in
                    [(&c.a, &c.b), (&c.b, &c.a)]
                {
                    if this_label == &query.label {
                        let other = cfg
                            .queries
                            .iter()
                            .find(|q| q.label == **other_label)
                            .expect("validated");
                        if is_known(&kb, &word_atom(&other.label, &other.answer))? {
                            implied[*this_pos] = true;
                        }
                    }
                }
            }
            let symbols: Vec<u32> = letters(&query.answer)
                .into_iter()
                .zip(&implied)
                .filter(|(_, skip)| !**skip)
                .map(|(s, _)| s)
                .collect();
            if !symbols.is_empty() {
                let decoder = if symbols.len() == n_total {
                    Decoder::KOfN(query.threshold)
                } else {
                    Decoder::Exact
                };
                plan.push(PlanStep {
                    label: query.label.clone(),
                    symbols,
                    decoder,
                });
            }
        }
        kb.insert_clause(Clause::fact(1.0, atom).map_err(|e| ScenarioError::Config(e.to_string()))?);
    }
    Ok(plan)
}

/// Expected transmitted letters for a plan at one ε: Σ n / p_s.
pub fn analytic_letters(plan: &[PlanStep], ch: &ChannelModel) -> Result<f64, ScenarioError> {
    let mut total = 0.0;
    for step in plan {
        let p_s = success_prob(ch, step.symbols.len(), step.decoder)?;
        if p_s <= 0.0 {
            return Ok(f64::INFINITY);
        }
        total += step.symbols.len() as f64 / p_s;
    }
    Ok(total)
}

fn mc_letters(
    plan: &[PlanStep],
    ch: &ChannelModel,
    trials: u32,
    seed: u64,
) -> Result<(f64, f64), ScenarioError> {
    if trials == 0 {
        return Err(ScenarioError::Config("trials must be positive".into()));
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, trial, 0xc0de));
        let mut letters_sent = 0u64;
        for step in plan {
            let log = simulate_retransmit_with_rng(
                ch,
                &step.symbols,
                step.decoder,
                MAX_ROUNDS,
                &mut rng,
            )?;
            letters_sent += log.symbols_sent;
        }
        let x = letters_sent as f64;
        sum += x;
        sum_sq += x * x;
    }
    let n = trials as f64;
    let mean = sum / n;
    let var = ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

/// Runs the full grid: per (order, ε) analytic and Monte-Carlo expected
/// letters, plus per-query single-transmission decode errors.
pub fn run_crossword(cfg: &CrosswordConfig, seed: u64) -> Result<CrosswordResult, ScenarioError> {
    validate(cfg)?;
    let plans: Vec<Vec<PlanStep>> = cfg
        .orders
        .iter()
        .map(|order| order_plan(cfg, order))
        .collect::<Result<_, _>>()?;

    let mut totals = Vec::new();
    for (order_idx, plan) in plans.iter().enumerate() {
        for (eps_idx, &epsilon) in cfg.epsilon_grid.iter().enumerate() {
            let ch = ChannelModel::new(cfg.alphabet_size, epsilon)?;
            let analytic = analytic_letters(plan, &ch)?;
            let run_seed = mix_seed(seed, eps_idx as u32, order_idx as u64);
            let (mc, stderr) = mc_letters(plan, &ch, cfg.trials, run_seed)?;
            totals.push(OrderRecord {
                order: order_idx + 1,
                epsilon,
                analytic_letters: analytic,
                mc_letters: mc,
                mc_stderr: stderr,
            });
        }
    }

    let mut decode_errors = Vec::new();
    for query in &cfg.queries {
        for &epsilon in &cfg.epsilon_grid {
            let ch = ChannelModel::new(cfg.alphabet_size, epsilon)?;
            let n = query.answer.chars().count();
            let p_s = success_prob(&ch, n, Decoder::KOfN(query.threshold))?;
            decode_errors.push(DecodeErrorRecord {
                query: query.label.clone(),
                epsilon,
                error_prob: 1.0 - p_s,
            });
        }
    }

    Ok(CrosswordResult {
        totals,
        decode_errors,
    })
}

/// Smallest grid ε at which `order_a`'s analytic expected letters drop
/// strictly below `order_b`'s.
pub fn crossover_epsilon(
    result: &CrosswordResult,
    order_a: usize,
    order_b: usize,
) -> Option<f64> {
    let mut grid: Vec<f64> = result
        .totals
        .iter()
        .filter(|r| r.order == order_a)
        .map(|r| r.epsilon)
        .collect();
    grid.sort_by(f64::total_cmp);
    for eps in grid {
        let a = result
            .totals
            .iter()
            .find(|r| r.order == order_a && r.epsilon == eps)?;
        let b = result
            .totals
            .iter()
            .find(|r| r.order == order_b && r.epsilon == eps)?;
        if a.analytic_letters < b.analytic_letters {
            return Some(eps);
        }
    }
    None
}

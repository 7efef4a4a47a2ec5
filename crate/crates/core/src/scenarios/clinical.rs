//! Clinical-test scenario: two agents hold causal graphs over the same
//! node set; one transmits edge clauses to the other under a selection
//! rule, and reasoning accuracy is tracked against the merged ground
//! truth.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::measures::binary_entropy;

use super::ScenarioError;

/// Strict-improvement slack for the stopping rules.
const IMPROVEMENT_SLACK: f64 = 1e-12;

/// A DAG over nodes 1..=n with per-edge probabilities; every edge points
/// from a lower to a higher node index. Node 1 is the root cause and holds
/// with probability 1.
#[derive(Clone, Debug, PartialEq)]
pub struct CausalGraph {
    n_nodes: usize,
    edges: Vec<CausalEdge>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CausalEdge {
    pub from: usize,
    pub to: usize,
    pub prob: f64,
}

impl CausalGraph {
    pub fn new(n_nodes: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self, ScenarioError> {
        let mut out = Vec::with_capacity(edges.len());
        for (from, to, prob) in edges {
            if from == 0 || to == 0 || from > n_nodes || to > n_nodes || from >= to {
                return Err(ScenarioError::BadEdge { from, to });
            }
            if !(0.0..=1.0).contains(&prob) || !prob.is_finite() {
                return Err(ScenarioError::BadEdgeProbability { from, to, prob });
            }
            out.push(CausalEdge { from, to, prob });
        }
        out.sort_by_key(|e| (e.from, e.to));
        for pair in out.windows(2) {
            if pair[0].from == pair[1].from && pair[0].to == pair[1].to {
                return Err(ScenarioError::DuplicateEdge {
                    from: pair[0].from,
                    to: pair[0].to,
                });
            }
        }
        Ok(CausalGraph {
            n_nodes,
            edges: out,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[CausalEdge] {
        &self.edges
    }

    fn set_edge(&mut self, from: usize, to: usize, prob: f64) {
        if let Some(e) = self
            .edges
            .iter_mut()
            .find(|e| e.from == from && e.to == to)
        {
            e.prob = prob;
        }
    }

    fn same_shape(&self, other: &CausalGraph) -> bool {
        self.n_nodes == other.n_nodes
            && self.edges.len() == other.edges.len()
            && self
                .edges
                .iter()
                .zip(other.edges.iter())
                .all(|(a, b)| a.from == b.from && a.to == b.to)
    }
}

/// Truth probability of a node by the noisy-OR recursion: the root is
/// certain, and every other node fails only if every inbound cause fails.
pub fn causal_query(g: &CausalGraph, node: usize) -> Result<f64, ScenarioError> {
    if node == 0 || node > g.n_nodes {
        return Err(ScenarioError::NodeOutOfRange {
            node,
            n_nodes: g.n_nodes,
        });
    }
    let mut probs = vec![0.0; g.n_nodes + 1];
    probs[1] = 1.0;
    // edges point forward, so one ascending pass is topological
    for i in 2..=g.n_nodes {
        let mut fail = 1.0;
        let mut has_parent = false;
        for e in &g.edges {
            if e.to == i {
                has_parent = true;
                fail *= 1.0 - e.prob * probs[e.from];
            }
        }
        probs[i] = if has_parent { 1.0 - fail } else { 0.0 };
    }
    Ok(probs[node])
}

/// Per-edge minimum-entropy integration of two graphs over the same edge
/// set; entropy ties keep the first graph's value.
pub fn ground_truth_merge(
    alice: &CausalGraph,
    bob: &CausalGraph,
) -> Result<CausalGraph, ScenarioError> {
    if !alice.same_shape(bob) {
        return Err(ScenarioError::EdgeSetMismatch);
    }
    let edges = alice
        .edges
        .iter()
        .zip(bob.edges.iter())
        .map(|(a, b)| {
            let prob = if binary_entropy(b.prob) < binary_entropy(a.prob) {
                b.prob
            } else {
                a.prob
            };
            (a.from, a.to, prob)
        })
        .collect();
    CausalGraph::new(alice.n_nodes, edges)
}

/// Which edge clause the sender transmits each round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleKind {
    /// Uniformly random unsent clause; runs until all are sent.
    Random,
    /// Highest edge probability among edges that still differ.
    MaxEdgeProbability,
    /// Largest reduction of the edge's own entropy in the receiver's graph.
    MinEdgeEntropy,
    /// Largest reduction of the receiver's knowledge-base entropy.
    MinKbEntropy,
    /// Largest increase of the receiver's mean answer probability.
    MaxAnswerProbability,
}

/// A transmission rule, optionally restricted to edges pointing at one
/// task node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClinicalRule {
    pub kind: RuleKind,
    pub task_filter: Option<usize>,
}

impl ClinicalRule {
    pub fn parse(name: &str) -> Result<Self, ScenarioError> {
        let rule = match name {
            "A1" => ClinicalRule {
                kind: RuleKind::Random,
                task_filter: None,
            },
            "A2" => ClinicalRule {
                kind: RuleKind::MaxEdgeProbability,
                task_filter: None,
            },
            "A3" => ClinicalRule {
                kind: RuleKind::MinEdgeEntropy,
                task_filter: None,
            },
            "A3-1" => ClinicalRule {
                kind: RuleKind::MinEdgeEntropy,
                task_filter: Some(5),
            },
            "A4" => ClinicalRule {
                kind: RuleKind::MinKbEntropy,
                task_filter: None,
            },
            "A5" => ClinicalRule {
                kind: RuleKind::MaxAnswerProbability,
                task_filter: None,
            },
            other => return Err(ScenarioError::UnknownRule(other.to_string())),
        };
        Ok(rule)
    }

    pub fn name(&self) -> String {
        match (self.kind, self.task_filter) {
            (RuleKind::Random, _) => "A1".into(),
            (RuleKind::MaxEdgeProbability, _) => "A2".into(),
            (RuleKind::MinEdgeEntropy, None) => "A3".into(),
            (RuleKind::MinEdgeEntropy, Some(_)) => "A3-1".into(),
            (RuleKind::MinKbEntropy, _) => "A4".into(),
            (RuleKind::MaxAnswerProbability, _) => "A5".into(),
        }
    }
}

/// Which queries the receiver evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuerySelection {
    /// Mean over all nodes.
    Uniform,
    /// A single fixed node.
    Fixed(usize),
}

impl QuerySelection {
    fn nodes(&self, n: usize) -> Vec<usize> {
        match self {
            QuerySelection::Uniform => (1..=n).collect(),
            QuerySelection::Fixed(node) => vec![*node],
        }
    }
}

/// How the per-round knowledge-base entropy is aggregated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    /// Mean answer entropy over the non-root nodes.
    Node,
    /// Mean entropy over the edge probabilities.
    Edge,
}

/// One communication round: what was sent and where the receiver stands.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: u32,
    pub sent_edge: Option<(usize, usize, f64)>,
    pub avg_error: f64,
    pub kb_entropy: f64,
}

fn avg_error(
    bob: &CausalGraph,
    truth: &CausalGraph,
    queries: &[usize],
) -> Result<f64, ScenarioError> {
    let mut total = 0.0;
    for &q in queries {
        total += (causal_query(bob, q)? - causal_query(truth, q)?).abs();
    }
    Ok(total / queries.len() as f64)
}

fn kb_entropy(g: &CausalGraph, mode: EntropyMode) -> Result<f64, ScenarioError> {
    match mode {
        EntropyMode::Node => {
            let mut total = 0.0;
            for node in 2..=g.n_nodes {
                total += binary_entropy(causal_query(g, node)?);
            }
            Ok(total / (g.n_nodes - 1) as f64)
        }
        EntropyMode::Edge => Ok(g
            .edges
            .iter()
            .map(|e| binary_entropy(e.prob))
            .sum::<f64>()
            / g.edges.len() as f64),
    }
}

/// Runs the transmission loop: Alice picks one edge clause per round by
/// `rule`, Bob always replaces his stored probability, and the loop stops
/// when the rule's own criterion shows no strict improvement (rule A1 runs
/// through all clauses). The first record is the round-0 baseline.
pub fn run_clinical(
    alice: &CausalGraph,
    bob: &CausalGraph,
    rule: ClinicalRule,
    queries: QuerySelection,
    mode: EntropyMode,
    seed: u64,
) -> Result<Vec<RoundRecord>, ScenarioError> {
    if !alice.same_shape(bob) {
        return Err(ScenarioError::EdgeSetMismatch);
    }
    let truth = ground_truth_merge(alice, bob)?;
    let query_nodes = queries.nodes(alice.n_nodes);
    let mut current = bob.clone();
    let mut records = vec![RoundRecord {
        round: 0,
        sent_edge: None,
        avg_error: avg_error(&current, &truth, &query_nodes)?,
        kb_entropy: kb_entropy(&current, mode)?,
    }];

    let candidates = |g: &CausalGraph| -> Vec<CausalEdge> {
        alice
            .edges
            .iter()
            .copied()
            .filter(|e| rule.task_filter.is_none_or(|t| e.to == t))
            .filter(|e| {
                let bob_prob = g
                    .edges
                    .iter()
                    .find(|b| b.from == e.from && b.to == e.to)
                    .map(|b| b.prob)
                    .unwrap_or(0.0);
                e.prob != bob_prob
            })
            .collect()
    };

    let mut round = 0;
    match rule.kind {
        RuleKind::Random => {
            let mut order: Vec<CausalEdge> = alice
                .edges
                .iter()
                .copied()
                .filter(|e| rule.task_filter.is_none_or(|t| e.to == t))
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            order.shuffle(&mut rng);
            for edge in order {
                round += 1;
                current.set_edge(edge.from, edge.to, edge.prob);
                records.push(RoundRecord {
                    round,
                    sent_edge: Some((edge.from, edge.to, edge.prob)),
                    avg_error: avg_error(&current, &truth, &query_nodes)?,
                    kb_entropy: kb_entropy(&current, mode)?,
                });
            }
        }
        _ => loop {
            let pool = candidates(&current);
            let chosen: Option<CausalEdge> = match rule.kind {
                RuleKind::MaxEdgeProbability => {
                    // candidate edges already differ from Bob's value
                    pool.iter()
                        .copied()
                        .max_by(|a, b| {
                            a.prob
                                .partial_cmp(&b.prob)
                                .unwrap()
                                .then((b.from, b.to).cmp(&(a.from, a.to)))
                        })
                }
                RuleKind::MinEdgeEntropy => pool
                    .iter()
                    .copied()
                    .map(|e| {
                        let bob_prob = current
                            .edges
                            .iter()
                            .find(|b| b.from == e.from && b.to == e.to)
                            .unwrap()
                            .prob;
                        (binary_entropy(bob_prob) - binary_entropy(e.prob), e)
                    })
                    .filter(|(gain, _)| *gain > IMPROVEMENT_SLACK)
                    .max_by(|(ga, ea), (gb, eb)| {
                        ga.partial_cmp(gb)
                            .unwrap()
                            .then((eb.from, eb.to).cmp(&(ea.from, ea.to)))
                    })
                    .map(|(_, e)| e),
                RuleKind::MinKbEntropy => {
                    let base = kb_entropy(&current, mode)?;
                    let mut best: Option<(f64, CausalEdge)> = None;
                    for e in &pool {
                        let mut trial = current.clone();
                        trial.set_edge(e.from, e.to, e.prob);
                        let gain = base - kb_entropy(&trial, mode)?;
                        if gain > IMPROVEMENT_SLACK {
                            best = match best {
                                None => Some((gain, *e)),
                                Some((bg, _)) if gain > bg => Some((gain, *e)),
                                keep => keep,
                            };
                        }
                    }
                    best.map(|(_, e)| e)
                }
                RuleKind::MaxAnswerProbability => {
                    let base = mean_answer_prob(&current, &query_nodes)?;
                    let mut best: Option<(f64, CausalEdge)> = None;
                    for e in &pool {
                        let mut trial = current.clone();
                        trial.set_edge(e.from, e.to, e.prob);
                        let gain = mean_answer_prob(&trial, &query_nodes)? - base;
                        if gain > IMPROVEMENT_SLACK {
                            best = match best {
                                None => Some((gain, *e)),
                                Some((bg, _)) if gain > bg => Some((gain, *e)),
                                keep => keep,
                            };
                        }
                    }
                    best.map(|(_, e)| e)
                }
                RuleKind::Random => unreachable!(),
            };
            let Some(edge) = chosen else {
                break;
            };
            round += 1;
            current.set_edge(edge.from, edge.to, edge.prob);
            records.push(RoundRecord {
                round,
                sent_edge: Some((edge.from, edge.to, edge.prob)),
                avg_error: avg_error(&current, &truth, &query_nodes)?,
                kb_entropy: kb_entropy(&current, mode)?,
            });
        },
    }
    Ok(records)
}

fn mean_answer_prob(g: &CausalGraph, queries: &[usize]) -> Result<f64, ScenarioError> {
    let mut total = 0.0;
    for &q in queries {
        total += causal_query(g, q)?;
    }
    Ok(total / queries.len() as f64)
}

/// Replays the sent edges onto the receiver's initial graph.
pub fn final_graph(bob: &CausalGraph, records: &[RoundRecord]) -> CausalGraph {
    let mut g = bob.clone();
    for r in records {
        if let Some((from, to, prob)) = r.sent_edge {
            g.set_edge(from, to, prob);
        }
    }
    g
}

/// The two agents' graphs from the worked scenario: a five-node DAG where
/// the hospital side knows the middle of the chain and the lab side knows
/// the root's effects; unknown edges sit at the random-guess value 0.5.
pub fn paper_graphs() -> (CausalGraph, CausalGraph) {
    let alice = CausalGraph::new(
        5,
        vec![
            (1, 2, 0.5),
            (1, 5, 0.5),
            (2, 3, 0.7),
            (2, 4, 0.3),
            (2, 5, 0.0),
            (3, 4, 0.7),
            (3, 5, 0.3),
        ],
    )
    .expect("valid");
    let bob = CausalGraph::new(
        5,
        vec![
            (1, 2, 0.7),
            (1, 5, 0.3),
            (2, 3, 0.5),
            (2, 4, 0.5),
            (2, 5, 0.5),
            (3, 4, 0.5),
            (3, 5, 0.5),
        ],
    )
    .expect("valid");
    (alice, bob)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn causal_query_hand_values() {
        let (alice, bob) = paper_graphs();
        let truth = ground_truth_merge(&alice, &bob).unwrap();
        assert_eq!(causal_query(&truth, 1).unwrap(), 1.0);
        assert!((causal_query(&truth, 2).unwrap() - 0.7).abs() < 1e-12);
        // 1 − (1 − 0.3·0.7)(1 − 0.7·0.49)
        assert!((causal_query(&truth, 4).unwrap() - 0.48097).abs() < 1e-12);
        assert!(causal_query(&truth, 9).is_err());
    }

    #[test]
    fn parentless_nonroot_is_zero() {
        let g = CausalGraph::new(3, vec![(1, 2, 0.5)]).unwrap();
        assert_eq!(causal_query(&g, 3).unwrap(), 0.0);
    }

    #[test]
    fn merge_takes_lower_entropy_side() {
        let (alice, bob) = paper_graphs();
        let truth = ground_truth_merge(&alice, &bob).unwrap();
        let expected = [
            (1, 2, 0.7),
            (1, 5, 0.3),
            (2, 3, 0.7),
            (2, 4, 0.3),
            (2, 5, 0.0),
            (3, 4, 0.7),
            (3, 5, 0.3),
        ];
        for (e, (f, t, p)) in truth.edges().iter().zip(expected) {
            assert_eq!((e.from, e.to), (f, t));
            assert_eq!(e.prob, p);
        }
    }

    #[test]
    fn merge_of_identical_graphs_is_identity() {
        let (alice, _) = paper_graphs();
        assert_eq!(ground_truth_merge(&alice, &alice).unwrap(), alice);
    }

    #[test]
    fn merge_against_coin_flips_takes_other_side() {
        let flat = CausalGraph::new(3, vec![(1, 2, 0.5), (1, 3, 0.5), (2, 3, 0.5)]).unwrap();
        let sharp = CausalGraph::new(3, vec![(1, 2, 0.9), (1, 3, 0.2), (2, 3, 1.0)]).unwrap();
        assert_eq!(ground_truth_merge(&flat, &sharp).unwrap(), sharp);
    }

    #[test]
    fn min_edge_entropy_converges_to_merge_in_five_rounds() {
        let (alice, bob) = paper_graphs();
        let records = run_clinical(
            &alice,
            &bob,
            ClinicalRule::parse("A3").unwrap(),
            QuerySelection::Uniform,
            EntropyMode::Node,
            0,
        )
        .unwrap();
        assert_eq!(records.len() - 1, 5);
        let last = records.last().unwrap();
        assert!(last.avg_error.abs() <= 1e-12);
        let truth = ground_truth_merge(&alice, &bob).unwrap();
        assert_eq!(final_graph(&bob, &records), truth);
    }

    #[test]
    fn task_filtered_rule_sends_only_task_edges() {
        let (alice, bob) = paper_graphs();
        let records = run_clinical(
            &alice,
            &bob,
            ClinicalRule::parse("A3-1").unwrap(),
            QuerySelection::Fixed(5),
            EntropyMode::Node,
            0,
        )
        .unwrap();
        let sent: Vec<_> = records.iter().filter_map(|r| r.sent_edge).collect();
        assert_eq!(sent, vec![(2, 5, 0.0), (3, 5, 0.3)]);
        assert!(records.last().unwrap().avg_error > 0.0);
    }

    #[test]
    fn random_rule_sends_everything_deterministically() {
        let (alice, bob) = paper_graphs();
        for seed in [0u64, 1, 42] {
            let records = run_clinical(
                &alice,
                &bob,
                ClinicalRule::parse("A1").unwrap(),
                QuerySelection::Uniform,
                EntropyMode::Node,
                seed,
            )
            .unwrap();
            assert_eq!(records.len() - 1, 7);
            // terminal state is Alice's graph regardless of the permutation
            assert_eq!(final_graph(&bob, &records), alice);
            let again = run_clinical(
                &alice,
                &bob,
                ClinicalRule::parse("A1").unwrap(),
                QuerySelection::Uniform,
                EntropyMode::Node,
                seed,
            )
            .unwrap();
            assert_eq!(records, again);
        }
    }

    #[test]
    fn entropy_stays_in_unit_interval() {
        let (alice, bob) = paper_graphs();
        for rule in ["A1", "A2", "A3", "A4", "A5"] {
            let records = run_clinical(
                &alice,
                &bob,
                ClinicalRule::parse(rule).unwrap(),
                QuerySelection::Uniform,
                EntropyMode::Node,
                3,
            )
            .unwrap();
            for r in &records {
                assert!((0.0..=1.0).contains(&r.kb_entropy));
                assert!(r.avg_error >= 0.0);
            }
        }
    }

    #[test]
    fn rule_names_round_trip() {
        for name in ["A1", "A2", "A3", "A3-1", "A4", "A5"] {
            assert_eq!(ClinicalRule::parse(name).unwrap().name(), name);
        }
        assert!(ClinicalRule::parse("A9").is_err());
    }
}

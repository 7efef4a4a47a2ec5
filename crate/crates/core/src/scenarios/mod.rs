//! End-to-end simulation scenarios and their CSV outputs.

mod clinical;
mod crossword;

pub use clinical::{
    causal_query, final_graph, ground_truth_merge, paper_graphs, run_clinical, CausalEdge,
    CausalGraph, ClinicalRule, EntropyMode, QuerySelection, RoundRecord, RuleKind,
};
pub use crossword::{
    analytic_letters, crossover_epsilon, default_crossword_config, order_plan, run_crossword,
    Crossing, CrosswordConfig, CrosswordQuery, CrosswordResult, DecodeErrorRecord, OrderRecord,
    PlanStep,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelError;
use crate::inference::InferenceError;
use crate::lang::{GroundError, ParseError};
use crate::measures::MeasureError;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("edge {from}->{to} is not a forward edge in range")]
    BadEdge { from: usize, to: usize },
    #[error("edge {from}->{to} has probability {prob} outside [0, 1]")]
    BadEdgeProbability { from: usize, to: usize, prob: f64 },
    #[error("duplicate edge {from}->{to}")]
    DuplicateEdge { from: usize, to: usize },
    #[error("node {node} is out of range 1..={n_nodes}")]
    NodeOutOfRange { node: usize, n_nodes: usize },
    #[error("graphs do not share the same edge set")]
    EdgeSetMismatch,
    #[error("unknown transmission rule {0}")]
    UnknownRule(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Ground(#[from] GroundError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// One clinical experiment: a rule name and the query selection mode.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClinicalRun {
    pub rule: String,
    /// "uniform" or a node name like "x5".
    pub query: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClinicalConfig {
    pub n_nodes: usize,
    pub alice: Vec<(usize, usize, f64)>,
    pub bob: Vec<(usize, usize, f64)>,
    pub runs: Vec<ClinicalRun>,
    pub entropy_mode: EntropyMode,
}

/// The five-node scenario with all five general rules under uniform
/// queries plus the task comparison on the loss node.
pub fn default_clinical_config() -> ClinicalConfig {
    let (alice, bob) = paper_graphs();
    let edge_list = |g: &CausalGraph| {
        g.edges()
            .iter()
            .map(|e| (e.from, e.to, e.prob))
            .collect::<Vec<_>>()
    };
    let mut runs: Vec<ClinicalRun> = ["A1", "A2", "A3", "A4", "A5"]
        .into_iter()
        .map(|rule| ClinicalRun {
            rule: rule.into(),
            query: "uniform".into(),
        })
        .collect();
    runs.push(ClinicalRun {
        rule: "A3".into(),
        query: "x5".into(),
    });
    runs.push(ClinicalRun {
        rule: "A3-1".into(),
        query: "x5".into(),
    });
    ClinicalConfig {
        n_nodes: alice.n_nodes(),
        alice: edge_list(&alice),
        bob: edge_list(&bob),
        runs,
        entropy_mode: EntropyMode::Node,
    }
}

impl ClinicalConfig {
    pub fn graphs(&self) -> Result<(CausalGraph, CausalGraph), ScenarioError> {
        Ok((
            CausalGraph::new(self.n_nodes, self.alice.clone())?,
            CausalGraph::new(self.n_nodes, self.bob.clone())?,
        ))
    }

    pub fn parse_query(&self, text: &str) -> Result<QuerySelection, ScenarioError> {
        if text == "uniform" {
            return Ok(QuerySelection::Uniform);
        }
        let node: usize = text
            .strip_prefix('x')
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| ScenarioError::Config(format!("bad query selector {text}")))?;
        if node == 0 || node > self.n_nodes {
            return Err(ScenarioError::NodeOutOfRange {
                node,
                n_nodes: self.n_nodes,
            });
        }
        Ok(QuerySelection::Fixed(node))
    }
}

fn fmt6(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        "inf".into()
    }
}

/// CSV of per-(order, ε) expected letters.
pub fn crossword_csv(result: &CrosswordResult) -> String {
    let mut out = String::from("order,epsilon,analytic_letters,mc_letters,mc_stderr\n");
    for r in &result.totals {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.order,
            fmt6(r.epsilon),
            fmt6(r.analytic_letters),
            fmt6(r.mc_letters),
            fmt6(r.mc_stderr)
        ));
    }
    out
}

/// CSV of per-query decode-error curves.
pub fn decode_error_csv(result: &CrosswordResult) -> String {
    let mut out = String::from("query,epsilon,error_prob\n");
    for r in &result.decode_errors {
        out.push_str(&format!(
            "{},{},{}\n",
            r.query,
            fmt6(r.epsilon),
            fmt6(r.error_prob)
        ));
    }
    out
}

/// CSV rows for one clinical run; `task` is the query selector string.
pub fn clinical_csv_rows(rule: &str, task: &str, records: &[RoundRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let edge = match r.sent_edge {
            Some((from, to, p)) => format!("{}->{}:{}", from, to, fmt6(p)),
            None => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            rule,
            task,
            r.round,
            edge,
            fmt6(r.avg_error),
            fmt6(r.kb_entropy)
        ));
    }
    out
}

pub const CLINICAL_CSV_HEADER: &str = "rule,task,round,sent_edge,avg_error,kb_entropy\n";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_clinical_config_round_trips_json() {
        let cfg = default_clinical_config();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ClinicalConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.alice, cfg.alice);
        assert_eq!(back.runs.len(), cfg.runs.len());
    }

    #[test]
    fn default_crossword_config_round_trips_json() {
        let cfg = default_crossword_config();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: CrosswordConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.orders, cfg.orders);
        assert_eq!(back.epsilon_grid, cfg.epsilon_grid);
    }

    #[test]
    fn query_selector_parsing() {
        let cfg = default_clinical_config();
        assert_eq!(cfg.parse_query("uniform").unwrap(), QuerySelection::Uniform);
        assert_eq!(cfg.parse_query("x5").unwrap(), QuerySelection::Fixed(5));
        assert!(cfg.parse_query("x9").is_err());
        assert!(cfg.parse_query("five").is_err());
    }

    #[test]
    fn csv_emission_shape() {
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
        let rows = clinical_csv_rows("A3", "uniform", &records);
        assert_eq!(rows.lines().count(), records.len());
        assert!(rows.starts_with("A3,uniform,0,,"));
        let last = rows.lines().last().unwrap();
        assert!(last.starts_with("A3,uniform,5,3->5:0.300000,0.000000,"));
    }
}

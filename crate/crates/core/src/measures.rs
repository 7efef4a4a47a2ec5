//! Entropy-based measures over knowledge bases and classical discrete-PMF
//! information quantities. All logarithms are base 2.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{transmit_with_rng, ChannelError, ChannelModel};
use crate::inference::{query_prob_ground, InferenceError, QueryPolicy};
use crate::lang::{ground, parse_program, serialize};
use crate::model::{Atom, KnowledgeBase, Message};

const PMF_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("knowledge base answers no queries")]
    EmptyKnowledgeBase,
    #[error("message is already part of the knowledge base")]
    MessageAlreadyKnown,
    #[error("at least one trial is required")]
    ZeroTrials,
    #[error("distribution is not normalized: mass {0}")]
    NotNormalized(f64),
    #[error("distribution entry {0} is negative")]
    NegativeMass(f64),
    #[error("distribution is empty")]
    EmptyDistribution,
    #[error("conditioning event has zero probability")]
    ZeroMassEvent,
    #[error("axis index {0} is out of range")]
    AxisOutOfRange(usize),
    #[error("operation requires exactly two axes, found {0}")]
    NotBivariate(usize),
    #[error("joint table has {got} entries, expected {want}")]
    TableShape { got: usize, want: usize },
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

pub(crate) fn binary_entropy(p: f64) -> f64 {
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.log2();
    }
    if p < 1.0 {
        h -= (1.0 - p) * (1.0 - p).log2();
    }
    h
}

/// Binary entropy of a truth probability: the uncertainty of one clause or
/// of one query answer, in bits.
pub fn clause_entropy(p: f64) -> Result<f64, MeasureError> {
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(MeasureError::InvalidProbability(p));
    }
    Ok(binary_entropy(p))
}

/// Entropy of the answer to `q` against `kb`, under the given policy for
/// queries that head no clause (0.5 yields entropy 1).
pub fn query_entropy(
    kb: &KnowledgeBase,
    q: &Atom,
    policy: QueryPolicy,
) -> Result<f64, MeasureError> {
    let program = ground(kb).map_err(InferenceError::from)?;
    Ok(binary_entropy(query_prob_ground(&program, q, policy)?))
}

/// Average answer entropy over every query the knowledge base can answer.
pub fn kb_uncertainty(kb: &KnowledgeBase) -> Result<f64, MeasureError> {
    let program = ground(kb).map_err(InferenceError::from)?;
    let heads = program.heads();
    if heads.is_empty() {
        return Err(MeasureError::EmptyKnowledgeBase);
    }
    let mut total = 0.0;
    for q in &heads {
        total += binary_entropy(query_prob_ground(&program, q, QueryPolicy::Error)?);
    }
    Ok(total / heads.len() as f64)
}

/// Change in average entropy caused by assimilating `m` by union; negative
/// means the message reduced uncertainty.
pub fn semantic_content(kb: &KnowledgeBase, m: &Message) -> Result<f64, MeasureError> {
    Ok(kb_uncertainty(&kb.union_message(m))? - kb_uncertainty(kb)?)
}

/// Entropy reduction for query `q` due to message `m`: H(q | kb) minus
/// H(q | kb with m). Zero when `m` is already known; may be negative when a
/// message pushes an answer toward 0.5.
pub fn semantic_mutual_info(
    kb: &KnowledgeBase,
    q: &Atom,
    m: &Message,
    policy: QueryPolicy,
) -> Result<f64, MeasureError> {
    let before = query_entropy(kb, q, policy)?;
    let after = query_entropy(&kb.union_message(m), q, policy)?;
    Ok(before - after)
}

/// H(q | kb_b) − H(q | kb_e): positive when `kb_b` is more uncertain about
/// `q` than `kb_e`. Both sides must answer `q`.
pub fn entropy_difference(
    q: &Atom,
    kb_b: &KnowledgeBase,
    kb_e: &KnowledgeBase,
) -> Result<f64, MeasureError> {
    let hb = query_entropy(kb_b, q, QueryPolicy::Error)?;
    let he = query_entropy(kb_e, q, QueryPolicy::Error)?;
    Ok(hb - he)
}

/// Positive part of the mutual-information gap between the legitimate
/// receiver and the eavesdropper for query `q` and message `m`.
///
/// Queries that a side cannot answer count as a random guess (entropy 1),
/// so an eavesdropper lacking the connecting clauses simply gains nothing.
pub fn secrecy_rate(
    q: &Atom,
    m: &Message,
    kb_b: &KnowledgeBase,
    kb_e: &KnowledgeBase,
) -> Result<f64, MeasureError> {
    if m.is_in(kb_b) || m.is_in(kb_e) {
        return Err(MeasureError::MessageAlreadyKnown);
    }
    let mi_b = semantic_mutual_info(kb_b, q, m, QueryPolicy::Half)?;
    let mi_e = semantic_mutual_info(kb_e, q, m, QueryPolicy::Half)?;
    Ok((mi_b - mi_e).max(0.0))
}

/// Secrecy rate when the message reaches Bob and Eve through noisy
/// channels.
///
/// Each trial serializes `m`, corrupts the text over each receiver's
/// channel, and re-parses it; a reception that no longer parses assimilates
/// as nothing and contributes zero mutual information, while a parseable
/// (possibly altered) reception is assimilated as received. Deterministic
/// for a given seed, with one independent substream per trial and receiver.
#[allow(clippy::too_many_arguments)]
pub fn noisy_secrecy_rate(
    q: &Atom,
    m: &Message,
    kb_b: &KnowledgeBase,
    kb_e: &KnowledgeBase,
    ch_b: &ChannelModel,
    ch_e: &ChannelModel,
    trials: u32,
    seed: u64,
) -> Result<f64, MeasureError> {
    if trials == 0 {
        return Err(MeasureError::ZeroTrials);
    }
    if m.is_in(kb_b) || m.is_in(kb_e) {
        return Err(MeasureError::MessageAlreadyKnown);
    }
    let symbols = message_symbols(m, ch_b)?;
    message_symbols(m, ch_e)?;
    let mut total = 0.0;
    for trial in 0..trials {
        let mi_b = received_mutual_info(q, kb_b, ch_b, &symbols, mix_seed(seed, trial, 0))?;
        let mi_e = received_mutual_info(q, kb_e, ch_e, &symbols, mix_seed(seed, trial, 1))?;
        total += (mi_b - mi_e).max(0.0);
    }
    Ok(total / trials as f64)
}

fn message_symbols(m: &Message, ch: &ChannelModel) -> Result<Vec<u32>, MeasureError> {
    let text = serialize(&m.to_kb());
    let symbols: Vec<u32> = text.bytes().map(u32::from).collect();
    if let Some(&bad) = symbols.iter().find(|&&s| s as usize >= ch.alphabet_size()) {
        return Err(MeasureError::Channel(ChannelError::SymbolOutOfRange {
            symbol: bad,
            alphabet_size: ch.alphabet_size(),
        }));
    }
    Ok(symbols)
}

fn received_mutual_info(
    q: &Atom,
    kb: &KnowledgeBase,
    ch: &ChannelModel,
    symbols: &[u32],
    seed: u64,
) -> Result<f64, MeasureError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let received = transmit_with_rng(ch, symbols, &mut rng)?;
    let bytes: Vec<u8> = received.iter().map(|&s| s as u8).collect();
    let text = match String::from_utf8(bytes) {
        Ok(t) => t,
        Err(_) => return Ok(0.0),
    };
    match parse_program(&text) {
        Ok(kb_m) if !kb_m.is_empty() => {
            semantic_mutual_info(kb, q, &Message::from_kb(kb_m), QueryPolicy::Half)
        }
        _ => Ok(0.0),
    }
}

/// SplitMix64 over (seed, trial, stream): one independent substream per
/// Monte-Carlo unit, so results do not depend on evaluation order.
pub(crate) fn mix_seed(seed: u64, index: u32, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add((index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(stream.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A finite distribution over labelled outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct Pmf {
    outcomes: Vec<(String, f64)>,
}

impl Pmf {
    /// Validates non-negativity and unit mass (±1e-9), then normalizes
    /// exactly.
    pub fn new(outcomes: Vec<(String, f64)>) -> Result<Self, MeasureError> {
        if outcomes.is_empty() {
            return Err(MeasureError::EmptyDistribution);
        }
        let mut sum = 0.0;
        for (_, p) in &outcomes {
            if *p < 0.0 || !p.is_finite() {
                return Err(MeasureError::NegativeMass(*p));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > PMF_TOLERANCE {
            return Err(MeasureError::NotNormalized(sum));
        }
        Ok(Pmf {
            outcomes: outcomes.into_iter().map(|(l, p)| (l, p / sum)).collect(),
        })
    }

    pub fn uniform(labels: impl IntoIterator<Item = String>) -> Result<Self, MeasureError> {
        let labels: Vec<String> = labels.into_iter().collect();
        if labels.is_empty() {
            return Err(MeasureError::EmptyDistribution);
        }
        let p = 1.0 / labels.len() as f64;
        Ok(Pmf {
            outcomes: labels.into_iter().map(|l| (l, p)).collect(),
        })
    }

    pub fn outcomes(&self) -> impl Iterator<Item = (&str, f64)> {
        self.outcomes.iter().map(|(l, p)| (l.as_str(), *p))
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        self.outcomes
            .iter()
            .map(|(_, p)| if *p > 0.0 { -p * p.log2() } else { 0.0 })
            .sum()
    }

    /// The distribution conditioned on an event over the labels,
    /// renormalized to the surviving outcomes.
    pub fn conditioned(&self, event: impl Fn(&str) -> bool) -> Result<Pmf, MeasureError> {
        let kept: Vec<(String, f64)> = self
            .outcomes
            .iter()
            .filter(|(l, _)| event(l))
            .cloned()
            .collect();
        let mass: f64 = kept.iter().map(|(_, p)| p).sum();
        if mass <= 0.0 {
            return Err(MeasureError::ZeroMassEvent);
        }
        Ok(Pmf {
            outcomes: kept.into_iter().map(|(l, p)| (l, p / mass)).collect(),
        })
    }
}

/// A joint distribution over the product of two or more labelled axes,
/// stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct JointPmf {
    axes: Vec<Vec<String>>,
    probs: Vec<f64>,
}

impl JointPmf {
    pub fn new(axes: Vec<Vec<String>>, probs: Vec<f64>) -> Result<Self, MeasureError> {
        if axes.is_empty() || axes.iter().any(Vec::is_empty) {
            return Err(MeasureError::EmptyDistribution);
        }
        let want: usize = axes.iter().map(Vec::len).product();
        if probs.len() != want {
            return Err(MeasureError::TableShape {
                got: probs.len(),
                want,
            });
        }
        let mut sum = 0.0;
        for p in &probs {
            if *p < 0.0 || !p.is_finite() {
                return Err(MeasureError::NegativeMass(*p));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > PMF_TOLERANCE {
            return Err(MeasureError::NotNormalized(sum));
        }
        Ok(JointPmf {
            axes,
            probs: probs.into_iter().map(|p| p / sum).collect(),
        })
    }

    pub fn num_axes(&self) -> usize {
        self.axes.len()
    }

    pub fn axis_labels(&self, axis: usize) -> &[String] {
        &self.axes[axis]
    }

    fn check_axes(&self, axes: &[usize]) -> Result<(), MeasureError> {
        for &a in axes {
            if a >= self.axes.len() {
                return Err(MeasureError::AxisOutOfRange(a));
            }
        }
        Ok(())
    }

    fn index_of(&self, cell: &[usize]) -> usize {
        let mut idx = 0;
        for (axis, &i) in cell.iter().enumerate() {
            idx = idx * self.axes[axis].len() + i;
        }
        idx
    }

    /// Entropy of the marginal over the given axes; the full joint entropy
    /// when all axes appear.
    pub fn marginal_entropy(&self, axes: &[usize]) -> Result<f64, MeasureError> {
        self.check_axes(axes)?;
        let mut group: BTreeSet<usize> = axes.iter().copied().collect();
        if group.is_empty() {
            return Ok(0.0);
        }
        let dims: Vec<usize> = self.axes.iter().map(Vec::len).collect();
        let mut marginal: std::collections::HashMap<Vec<usize>, f64> =
            std::collections::HashMap::new();
        let mut cell = vec![0usize; dims.len()];
        for (flat, p) in self.probs.iter().enumerate() {
            let mut rem = flat;
            for axis in (0..dims.len()).rev() {
                cell[axis] = rem % dims[axis];
                rem /= dims[axis];
            }
            let key: Vec<usize> = group.iter().map(|&a| cell[a]).collect();
            *marginal.entry(key).or_insert(0.0) += p;
        }
        group.clear();
        Ok(marginal
            .values()
            .map(|&p| if p > 0.0 { -p * p.log2() } else { 0.0 })
            .sum())
    }

    /// H(target | given) = H(target ∪ given) − H(given).
    pub fn conditional_entropy(
        &self,
        target: &[usize],
        given: &[usize],
    ) -> Result<f64, MeasureError> {
        self.check_axes(target)?;
        self.check_axes(given)?;
        let both: Vec<usize> = target
            .iter()
            .chain(given.iter())
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Ok(self.marginal_entropy(&both)? - self.marginal_entropy(given)?)
    }

    /// I(X; Y) for a two-axis joint: H(X) − H(X | Y).
    pub fn mutual_information(&self) -> Result<f64, MeasureError> {
        if self.axes.len() != 2 {
            return Err(MeasureError::NotBivariate(self.axes.len()));
        }
        Ok(self.marginal_entropy(&[0])? - self.conditional_entropy(&[0], &[1])?)
    }

    /// Joint probability of one cell, by per-axis label positions.
    pub fn prob_at(&self, cell: &[usize]) -> f64 {
        self.probs[self.index_of(cell)]
    }
}

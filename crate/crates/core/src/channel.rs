//! q-ary discrete memoryless channel, threshold decoders, and a simple
//! retransmission protocol with its analytic expectations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("alphabet size {0} is too small")]
    AlphabetTooSmall(usize),
    #[error("crossover probability {0} is outside [0, 1]")]
    InvalidEpsilon(f64),
    #[error("symbol {symbol} is outside the {alphabet_size}-ary alphabet")]
    SymbolOutOfRange { symbol: u32, alphabet_size: usize },
    #[error("decoder threshold {k} exceeds the {n} transmitted symbols")]
    ThresholdTooLarge { k: usize, n: usize },
    #[error("decoder threshold must be at least 1")]
    ThresholdZero,
    #[error("zero transmitted symbols")]
    EmptyTransmission,
    #[error("success probability {0} admits no finite expectation")]
    InfiniteExpectation(f64),
    #[error("at least one round is required")]
    ZeroRounds,
}

/// A q-ary symmetric channel: a symbol survives with probability 1 − ε and
/// otherwise becomes one of the q − 1 other symbols uniformly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelModel {
    alphabet_size: usize,
    epsilon: f64,
}

impl ChannelModel {
    pub fn new(alphabet_size: usize, epsilon: f64) -> Result<Self, ChannelError> {
        if alphabet_size < 2 {
            return Err(ChannelError::AlphabetTooSmall(alphabet_size));
        }
        if !epsilon.is_finite() || !(0.0..=1.0).contains(&epsilon) {
            return Err(ChannelError::InvalidEpsilon(epsilon));
        }
        Ok(ChannelModel {
            alphabet_size,
            epsilon,
        })
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Sends symbols through the channel with a dedicated seeded generator.
pub fn transmit(ch: &ChannelModel, symbols: &[u32], seed: u64) -> Result<Vec<u32>, ChannelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    transmit_with_rng(ch, symbols, &mut rng)
}

/// Per-symbol i.i.d. corruption; a wrong symbol is uniform over the other
/// q − 1.
pub fn transmit_with_rng(
    ch: &ChannelModel,
    symbols: &[u32],
    rng: &mut impl Rng,
) -> Result<Vec<u32>, ChannelError> {
    let q = ch.alphabet_size as u32;
    let mut out = Vec::with_capacity(symbols.len());
    for &s in symbols {
        if s >= q {
            return Err(ChannelError::SymbolOutOfRange {
                symbol: s,
                alphabet_size: ch.alphabet_size,
            });
        }
        let corrupted = ch.epsilon > 0.0 && (ch.epsilon >= 1.0 || rng.gen::<f64>() < ch.epsilon);
        if corrupted {
            let wrong = rng.gen_range(0..q - 1);
            out.push(if wrong >= s { wrong + 1 } else { wrong });
        } else {
            out.push(s);
        }
    }
    Ok(out)
}

/// Reception succeeds when at least k of n symbols arrive uncorrupted
/// (`KOfN`) or when all do (`Exact`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decoder {
    KOfN(usize),
    Exact,
}

impl Decoder {
    fn threshold(&self, n: usize) -> Result<usize, ChannelError> {
        match self {
            Decoder::Exact => Ok(n),
            Decoder::KOfN(k) => {
                if *k == 0 {
                    Err(ChannelError::ThresholdZero)
                } else if *k > n {
                    Err(ChannelError::ThresholdTooLarge { k: *k, n })
                } else {
                    Ok(*k)
                }
            }
        }
    }

    /// Positionwise comparison of sent and received blocks.
    pub fn succeeds(&self, sent: &[u32], received: &[u32]) -> Result<bool, ChannelError> {
        let k = self.threshold(sent.len())?;
        let correct = sent
            .iter()
            .zip(received.iter())
            .filter(|(a, b)| a == b)
            .count();
        Ok(correct >= k)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Probability that one transmission of n symbols decodes successfully.
pub fn success_prob(ch: &ChannelModel, n: usize, dec: Decoder) -> Result<f64, ChannelError> {
    if n == 0 {
        return Err(ChannelError::EmptyTransmission);
    }
    let good = 1.0 - ch.epsilon;
    match dec {
        Decoder::Exact => Ok(good.powi(n as i32)),
        Decoder::KOfN(_) => {
            let k = dec.threshold(n)?;
            let mut p = 0.0;
            for i in k..=n {
                p += binomial(n, i) * good.powi(i as i32) * ch.epsilon.powi((n - i) as i32);
            }
            Ok(p.min(1.0))
        }
    }
}

/// Expected symbols until success under geometric retransmission: n / p_s.
pub fn expected_symbols(n: usize, p_s: f64) -> Result<f64, ChannelError> {
    if !(p_s > 0.0 && p_s <= 1.0) {
        return Err(ChannelError::InfiniteExpectation(p_s));
    }
    Ok(n as f64 / p_s)
}

/// What one retransmission session did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransmissionLog {
    pub rounds: u32,
    pub symbols_sent: u64,
    pub success: bool,
}

/// Retransmits the block until the decoder accepts or `max_rounds` is
/// reached; failure is reported in the log, not as an error.
pub fn simulate_retransmit(
    ch: &ChannelModel,
    symbols: &[u32],
    dec: Decoder,
    max_rounds: u32,
    seed: u64,
) -> Result<TransmissionLog, ChannelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_retransmit_with_rng(ch, symbols, dec, max_rounds, &mut rng)
}

pub fn simulate_retransmit_with_rng(
    ch: &ChannelModel,
    symbols: &[u32],
    dec: Decoder,
    max_rounds: u32,
    rng: &mut impl Rng,
) -> Result<TransmissionLog, ChannelError> {
    if max_rounds == 0 {
        return Err(ChannelError::ZeroRounds);
    }
    dec.threshold(symbols.len())?;
    let mut rounds = 0;
    let mut success = false;
    while rounds < max_rounds {
        rounds += 1;
        let received = transmit_with_rng(ch, symbols, rng)?;
        if dec.succeeds(symbols, &received)? {
            success = true;
            break;
        }
    }
    Ok(TransmissionLog {
        rounds,
        symbols_sent: rounds as u64 * symbols.len() as u64,
        success,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_transmission_is_identity() {
        let ch = ChannelModel::new(26, 0.0).unwrap();
        let symbols: Vec<u32> = (0..26).collect();
        assert_eq!(transmit(&ch, &symbols, 3).unwrap(), symbols);
    }

    #[test]
    fn saturated_channel_alters_everything() {
        let ch = ChannelModel::new(26, 1.0).unwrap();
        let symbols: Vec<u32> = (0..26).cycle().take(200).collect();
        let received = transmit(&ch, &symbols, 3).unwrap();
        assert!(symbols.iter().zip(&received).all(|(a, b)| a != b));
        assert!(received.iter().all(|&r| r < 26));
    }

    #[test]
    fn empirical_error_rate_matches_epsilon() {
        let ch = ChannelModel::new(26, 0.29).unwrap();
        let symbols = vec![7u32; 100_000];
        let received = transmit(&ch, &symbols, 42).unwrap();
        let errors = received.iter().filter(|&&r| r != 7).count();
        let rate = errors as f64 / symbols.len() as f64;
        assert!((rate - 0.29).abs() < 0.005, "observed {rate}");
    }

    #[test]
    fn out_of_alphabet_symbol_is_rejected() {
        let ch = ChannelModel::new(26, 0.1).unwrap();
        assert!(matches!(
            transmit(&ch, &[26], 0),
            Err(ChannelError::SymbolOutOfRange { .. })
        ));
    }

    #[test]
    fn success_prob_formulas() {
        let clean = ChannelModel::new(26, 0.0).unwrap();
        assert_eq!(success_prob(&clean, 3, Decoder::Exact).unwrap(), 1.0);
        let ch = ChannelModel::new(26, 0.2).unwrap();
        let p = success_prob(&ch, 5, Decoder::KOfN(3)).unwrap();
        assert!((p - 0.94208).abs() < 1e-12);
        let p = success_prob(&ch, 3, Decoder::Exact).unwrap();
        assert!((p - 0.8f64.powi(3)).abs() < 1e-15);
        assert!(matches!(
            success_prob(&ch, 3, Decoder::KOfN(4)),
            Err(ChannelError::ThresholdTooLarge { .. })
        ));
    }

    #[test]
    fn expected_symbols_formula() {
        assert_eq!(expected_symbols(5, 1.0).unwrap(), 5.0);
        let p = 0.71f64.powi(3);
        assert!((expected_symbols(3, p).unwrap() - 3.0 / p).abs() < 1e-12);
        assert!(expected_symbols(3, 0.0).is_err());
    }

    #[test]
    fn retransmission_terminates() {
        let clean = ChannelModel::new(26, 0.0).unwrap();
        let log = simulate_retransmit(&clean, &[0, 1, 2], Decoder::Exact, 10, 0).unwrap();
        assert_eq!(log.rounds, 1);
        assert_eq!(log.symbols_sent, 3);
        assert!(log.success);

        let jammed = ChannelModel::new(26, 1.0).unwrap();
        let log = simulate_retransmit(&jammed, &[0, 1, 2], Decoder::Exact, 1, 0).unwrap();
        assert_eq!(log.rounds, 1);
        assert!(!log.success);
    }

    #[test]
    fn mean_rounds_tracks_geometric_expectation() {
        let ch = ChannelModel::new(26, 0.29).unwrap();
        let symbols = [8u32, 2, 4];
        let p_s = success_prob(&ch, 3, Decoder::Exact).unwrap();
        let runs = 10_000u32;
        let mut total_rounds = 0u64;
        for run in 0..runs {
            let log =
                simulate_retransmit(&ch, &symbols, Decoder::Exact, 100_000, 1000 + run as u64)
                    .unwrap();
            assert!(log.success);
            total_rounds += log.rounds as u64;
        }
        let mean = total_rounds as f64 / runs as f64;
        let expect = 1.0 / p_s;
        // geometric std error over 10^4 runs
        let se = ((1.0 - p_s) / (p_s * p_s * runs as f64)).sqrt();
        assert!(
            (mean - expect).abs() < 3.0 * se,
            "mean {mean} vs {expect} (se {se})"
        );
    }

    #[test]
    fn decoder_monotonicity() {
        let ch = ChannelModel::new(26, 0.3).unwrap();
        let p3 = success_prob(&ch, 5, Decoder::KOfN(3)).unwrap();
        let p4 = success_prob(&ch, 5, Decoder::KOfN(4)).unwrap();
        let p5 = success_prob(&ch, 5, Decoder::KOfN(5)).unwrap();
        let exact = success_prob(&ch, 5, Decoder::Exact).unwrap();
        assert!(p3 >= p4 && p4 >= p5);
        assert!((p5 - exact).abs() < 1e-15);
    }
}

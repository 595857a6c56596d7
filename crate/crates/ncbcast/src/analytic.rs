//! Closed-form counterparts of the simulated quantities, used both as
//! oracles for the engine and to generate the analytic curves.
//!
//! Under the baseline scheme a receiver's Markov state is a birth-death walk
//! with up probability p = lambda(1 - mu), down probability q = (1 - lambda)mu
//! and pause probability 1 - p - q. Everything here derives from that chain:
//! its stationary law, the first-return (delivery-cycle) distribution counted
//! by Catalan paths, the zero-state delivery-delay estimate built on it, the
//! independent-receiver leader model, and the RLNC coefficient-based delivery
//! probability.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticError {
    #[error("addition rate {lambda} must be strictly below channel rate {mu}")]
    NotPositiveRecurrent { lambda: f64, mu: f64 },
    #[error("rates out of range: lambda={lambda}, mu={mu}")]
    InvalidRates { lambda: f64, mu: f64 },
}

/// Baseline-chain parameters with the derived transition probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainParams {
    pub lambda: f64,
    pub mu: f64,
    /// Up-transition probability lambda * (1 - mu).
    pub p: f64,
    /// Down-transition probability (1 - lambda) * mu.
    pub q: f64,
}

impl ChainParams {
    pub fn new(lambda: f64, mu: f64) -> Result<Self, AnalyticError> {
        if !(0.0..=1.0).contains(&lambda) || !(mu > 0.0 && mu <= 1.0) {
            return Err(AnalyticError::InvalidRates { lambda, mu });
        }
        Ok(ChainParams {
            lambda,
            mu,
            p: lambda * (1.0 - mu),
            q: (1.0 - lambda) * mu,
        })
    }

    pub fn load_factor(&self) -> f64 {
        self.lambda / self.mu
    }

    fn require_stationary(&self) -> Result<(), AnalyticError> {
        if self.lambda >= self.mu {
            return Err(AnalyticError::NotPositiveRecurrent { lambda: self.lambda, mu: self.mu });
        }
        Ok(())
    }
}

/// Stationary probability S_r(k) = (1 - p/q)(p/q)^k of finding a receiver in
/// Markov state k.
pub fn stationary(params: &ChainParams, k: u32) -> Result<f64, AnalyticError> {
    params.require_stationary()?;
    let ratio = params.p / params.q;
    Ok((1.0 - ratio) * ratio.powi(k as i32))
}

/// Tail probability S_r(>= k) = (p/q)^k.
pub fn stationary_tail(params: &ChainParams, k: u32) -> Result<f64, AnalyticError> {
    params.require_stationary()?;
    Ok((params.p / params.q).powi(k as i32))
}

/// P_{0,0}(T): probability that the first return to the zero state takes
/// exactly T slots. P_{0,0}(1) = 1 - p; for T >= 2 the walk makes k up and k
/// down moves (the k-1st Catalan number counts the arch shapes) and T - 2k
/// pauses placed anywhere but the first and last slot.
pub fn cycle_probability(params: &ChainParams, t: u64) -> f64 {
    assert!(t >= 1, "delivery cycles last at least one slot");
    if t == 1 {
        return 1.0 - params.p;
    }
    if t <= DIRECT_EVAL_LIMIT {
        cycle_probability_direct(params, t)
    } else {
        let lnf = ln_factorials((t - 2) as usize);
        cycle_probability_log(params, t, &lnf)
    }
}

/// P_{0,0}(T) for every T in 1..=t_max, sharing one factorial table.
/// Index 0 of the result is unused and zero.
pub fn cycle_probabilities(params: &ChainParams, t_max: u64) -> Vec<f64> {
    let mut out = vec![0.0; (t_max + 1) as usize];
    if t_max == 0 {
        return out;
    }
    out[1] = 1.0 - params.p;
    let lnf = ln_factorials(t_max.saturating_sub(2) as usize);
    for t in 2..=t_max {
        out[t as usize] = if t <= DIRECT_EVAL_LIMIT {
            cycle_probability_direct(params, t)
        } else {
            cycle_probability_log(params, t, &lnf)
        };
    }
    out
}

/// Sum of P_{0,0}(T) up to the truncation point; approaches 1 from below
/// when the chain is positive recurrent, the more slowly the closer the load
/// factor is to 1.
pub fn expected_cycle_mass(params: &ChainParams, t_max: u64) -> f64 {
    cycle_probabilities(params, t_max).iter().sum()
}

/// The printed delay-estimate denominator carries a standalone constant 1;
/// the self-consistent variant replaces it with the total probability mass of
/// the T >= 2 cycles so that every cycle contributes its own packet count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayDenominator {
    AsPrinted,
    SelfConsistent,
}

/// Truncated zero-state delivery-delay estimate: over a cycle of length T
/// the first packet is added in the opening slot and about lambda(T-2) more
/// arrive in the interior, each delivered at the cycle end for roughly T/2
/// slots of delay; the T = 1 cycle delivers its packet with no delay.
pub fn zero_state_delay_estimate(
    params: &ChainParams,
    t_max: u64,
    denominator: DelayDenominator,
) -> Result<f64, AnalyticError> {
    params.require_stationary()?;
    assert!(t_max >= 2);
    let probs = cycle_probabilities(params, t_max);
    let lambda = params.lambda;
    let mut delay_mass = 0.0;
    let mut interior_packets = 0.0;
    let mut tail_mass = 0.0;
    for t in 2..=t_max {
        let p_t = probs[t as usize];
        let tf = t as f64;
        delay_mass += p_t * (tf + 0.5 * lambda * tf * (tf - 2.0));
        interior_packets += p_t * lambda * (tf - 2.0);
        tail_mass += p_t;
    }
    let constant = match denominator {
        DelayDenominator::AsPrinted => 1.0,
        DelayDenominator::SelfConsistent => tail_mass,
    };
    Ok(delay_mass / (lambda * params.mu + constant + interior_packets))
}

/// Independent-receiver model for the leader state:
/// L(k) = (1 - (p/q)^R)(p/q)^{Rk}.
pub fn leader_state_model(
    params: &ChainParams,
    receivers: u32,
    k: u32,
) -> Result<f64, AnalyticError> {
    assert!(receivers >= 1);
    params.require_stationary()?;
    let ratio = params.p / params.q;
    Ok((1.0 - ratio.powi(receivers as i32)) * ratio.powi((receivers * k) as i32))
}

/// Probability that an accepted RLNC draw delivers the next needed packet of
/// a receiver at effective Markov state s*: (M - 1) / (M^{s*} - 1).
pub fn rlnc_delivery_probability(field_order: u32, s_star: u32) -> f64 {
    assert!(field_order >= 2, "field order must be at least 2");
    assert!(s_star >= 1, "effective Markov state must be positive");
    let m = field_order as f64;
    (m - 1.0) / (m.powi(s_star as i32) - 1.0)
}

const DIRECT_EVAL_LIMIT: u64 = 64;

fn cycle_probability_direct(params: &ChainParams, t: u64) -> f64 {
    let (p, q) = (params.p, params.q);
    let s = (1.0 - p - q).max(0.0);
    let mut total = 0.0;
    for k in 1..=t / 2 {
        let catalan = binom_f64(2 * k - 2, k - 1) / k as f64;
        let placements = binom_f64(t - 2, 2 * k - 2);
        let term = catalan
            * placements
            * p.powi(k as i32)
            * q.powi(k as i32)
            * s.powi((t - 2 * k) as i32);
        total += term;
    }
    total
}

fn cycle_probability_log(params: &ChainParams, t: u64, lnf: &[f64]) -> f64 {
    let (p, q) = (params.p, params.q);
    if p <= 0.0 || q <= 0.0 {
        return 0.0;
    }
    let s = 1.0 - p - q;
    let lps = p.ln() + q.ln();
    let ls = if s > 0.0 { s.ln() } else { f64::NEG_INFINITY };
    let mut ln_terms = Vec::with_capacity((t / 2) as usize);
    for k in 1..=t / 2 {
        let pauses = t - 2 * k;
        if s <= 0.0 && pauses > 0 {
            continue;
        }
        let k_us = k as usize;
        let mut ln_t = lnf[2 * k_us - 2] - 2.0 * lnf[k_us - 1] - (k as f64).ln();
        ln_t += lnf[(t - 2) as usize] - lnf[2 * k_us - 2] - lnf[pauses as usize];
        ln_t += k as f64 * lps;
        if pauses > 0 {
            ln_t += pauses as f64 * ls;
        }
        ln_terms.push(ln_t);
    }
    log_sum_exp(&ln_terms)
}

fn binom_f64(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut table = vec![0.0; n + 1];
    let mut acc = 0.0;
    for (i, slot) in table.iter_mut().enumerate().skip(1) {
        acc += (i as f64).ln();
        *slot = acc;
    }
    table
}

fn log_sum_exp(ln_terms: &[f64]) -> f64 {
    let max = ln_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return 0.0;
    }
    let sum: f64 = ln_terms.iter().map(|&x| (x - max).exp()).sum();
    max.exp() * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(lambda: f64, mu: f64) -> ChainParams {
        ChainParams::new(lambda, mu).unwrap()
    }

    #[test]
    fn transition_probabilities() {
        let c = params(0.7, 0.8);
        assert!((c.p - 0.14).abs() < 1e-15);
        assert!((c.q - 0.24).abs() < 1e-15);
        assert!((c.load_factor() - 0.875).abs() < 1e-15);
    }

    #[test]
    fn stationary_examples() {
        let c = params(0.7, 0.8);
        assert!((stationary(&c, 0).unwrap() - 5.0 / 12.0).abs() < 1e-12);
        assert!((stationary(&c, 1).unwrap() - (5.0 / 12.0) * (7.0 / 12.0)).abs() < 1e-12);
        let total: f64 = (0..400).map(|k| stationary(&c, k).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(stationary(&params(0.8, 0.8), 0).is_err());
        assert!((stationary_tail(&c, 2).unwrap() - (7.0f64 / 12.0).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn cycle_probability_examples() {
        let c = params(0.7, 0.8);
        assert!((cycle_probability(&c, 1) - 0.86).abs() < 1e-15);
        assert!((cycle_probability(&c, 2) - 0.0336).abs() < 1e-15);
        assert!((cycle_probability(&c, 3) - 0.14 * 0.24 * 0.62).abs() < 1e-15);
    }

    #[test]
    fn cycle_probability_matches_path_enumeration() {
        // Every first-return walk of length <= 9, enumerated directly.
        let c = params(0.7, 0.8);
        let mut by_length = vec![0.0; 10];
        fn walk(c: &ChainParams, state: i64, len: u64, prob: f64, acc: &mut Vec<f64>) {
            if len > 0 && state == 0 {
                acc[len as usize] += prob;
                return;
            }
            if len as usize >= acc.len() - 1 {
                return;
            }
            if state == 0 {
                walk(c, 1, len + 1, prob * c.p, acc);
                walk(c, 0, len + 1, prob * (1.0 - c.p), acc);
            } else {
                walk(c, state + 1, len + 1, prob * c.p, acc);
                walk(c, state - 1, len + 1, prob * c.q, acc);
                walk(c, state, len + 1, prob * (1.0 - c.p - c.q), acc);
            }
        }
        walk(&c, 0, 0, 1.0, &mut by_length);
        for t in 1..=9u64 {
            let formula = cycle_probability(&c, t);
            assert!(
                (formula - by_length[t as usize]).abs() < 1e-12,
                "T={t}: formula {formula} vs enumeration {}",
                by_length[t as usize]
            );
        }
    }

    #[test]
    fn log_and_direct_paths_agree() {
        let c = params(0.7, 0.8);
        let lnf = ln_factorials(200);
        for t in [10u64, 30, 50, 64] {
            let direct = cycle_probability_direct(&c, t);
            let logged = cycle_probability_log(&c, t, &lnf);
            assert!(
                ((direct - logged) / direct).abs() < 1e-10,
                "T={t}: {direct} vs {logged}"
            );
        }
    }

    #[test]
    fn cycle_mass_examples() {
        let c = params(0.3, 0.8);
        assert!(expected_cycle_mass(&c, 200) >= 0.999);
        assert!((expected_cycle_mass(&c, 1) - (1.0 - c.p)).abs() < 1e-15);
        // Larger load factor converges more slowly.
        let fast = expected_cycle_mass(&params(0.3, 0.8), 100);
        let slow = expected_cycle_mass(&params(0.7, 0.8), 100);
        assert!(fast > slow);
    }

    #[test]
    fn degenerate_chains() {
        // mu = 1 never moves up: every cycle has length 1.
        let c = params(0.5, 1.0);
        assert_eq!(cycle_probability(&c, 1), 1.0);
        assert_eq!(cycle_probability(&c, 2), c.p * c.q);
        // lambda = 0 never adds: no long cycles.
        let c = params(0.0, 0.8);
        assert_eq!(cycle_probability(&c, 5), 0.0);
    }

    #[test]
    fn delay_estimate_truncation_converged_at_high_load() {
        let c = params(0.7, 0.8); // load factor 0.875
        let short = zero_state_delay_estimate(&c, 1000, DelayDenominator::SelfConsistent).unwrap();
        let long = zero_state_delay_estimate(&c, 5000, DelayDenominator::SelfConsistent).unwrap();
        assert!(((short - long) / long).abs() < 1e-3, "{short} vs {long}");
        let short = zero_state_delay_estimate(&c, 1000, DelayDenominator::AsPrinted).unwrap();
        let long = zero_state_delay_estimate(&c, 5000, DelayDenominator::AsPrinted).unwrap();
        assert!(((short - long) / long).abs() < 1e-3, "{short} vs {long}");
    }

    #[test]
    fn delay_estimate_variants_differ_by_denominator_mass() {
        let c = params(0.5, 0.8);
        let printed = zero_state_delay_estimate(&c, 1000, DelayDenominator::AsPrinted).unwrap();
        let consistent =
            zero_state_delay_estimate(&c, 1000, DelayDenominator::SelfConsistent).unwrap();
        // The printed constant 1 exceeds the replaced tail mass p, so the
        // printed estimate is strictly smaller.
        assert!(printed < consistent);
    }

    #[test]
    fn leader_model_examples() {
        let c = params(0.7, 0.8);
        let expected = 1.0 - (2401.0 / 20736.0);
        assert!((leader_state_model(&c, 4, 0).unwrap() - expected).abs() < 1e-12);
        // Single receiver reduces to the stationary law.
        for k in 0..10 {
            assert!(
                (leader_state_model(&c, 1, k).unwrap() - stationary(&c, k).unwrap()).abs() < 1e-12
            );
        }
        let total: f64 = (0..200).map(|k| leader_state_model(&c, 4, k).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rlnc_delivery_examples() {
        assert_eq!(rlnc_delivery_probability(2, 1), 1.0);
        assert_eq!(rlnc_delivery_probability(4, 1), 1.0);
        assert!((rlnc_delivery_probability(4, 2) - 0.2).abs() < 1e-12);
        assert!((rlnc_delivery_probability(2, 3) - 1.0 / 7.0).abs() < 1e-12);
    }
}

//! The two payoff benchmarks: complete information and the one-shot
//! take-it-or-leave-it offer.
//!
//! The one-shot voting equilibrium is found by best-response iteration from
//! sincere voting. A voter with positive pivotal probability responds to the
//! pivotal-weighted payoff difference; a never-pivotal voter votes sincerely.
//! Ties break toward acceptance, which selects the information-aggregating
//! equilibrium at the knife edge `p = y_q^h`.

use serde::Serialize;
use thiserror::Error;

use crate::belief::Belief;
use crate::model::{ModelParams, Signal, State};
use crate::poisson;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchmarkError {
    #[error("best-response iteration failed to settle after {max_iters} sweeps at p = {policy}; trailing profiles: {trace:?}")]
    NonConvergence { policy: f64, max_iters: usize, trace: Vec<Vec<[u8; 2]>> },
}

/// Complete-information value `mu(h) y_q^h + mu(l) y_q^l`: the proposer
/// extracts the decisive voter's reservation in each state.
pub fn complete_info_value(params: &ModelParams, mu: Belief) -> f64 {
    let q = params.decisive_voter();
    mu.prob(State::High) * params.reservation_high[q]
        + mu.prob(State::Low) * params.reservation_low[q]
}

/// A converged one-shot voting equilibrium for a fixed proposal.
#[derive(Debug, Clone, Serialize)]
pub struct OneShotEquilibrium {
    pub policy: f64,
    /// Pure acceptance decisions indexed `[voter][signal]`, signal order `[Low, High]`.
    pub acceptance: Vec<[bool; 2]>,
    /// Probability the proposal passes in each state, order `[Low, High]`.
    pub pass_prob: [f64; 2],
    pub sweeps: usize,
}

impl OneShotEquilibrium {
    /// State-conditional acceptance probability of one voter.
    pub fn acceptance_in_state(&self, params: &ModelParams, voter: usize, state: State) -> f64 {
        let tau = params.precisions[voter];
        Signal::BOTH
            .iter()
            .map(|&s| {
                s.prob_given_state(state, tau)
                    * if self.acceptance[voter][signal_index(s)] { 1.0 } else { 0.0 }
            })
            .sum()
    }
}

fn signal_index(s: Signal) -> usize {
    match s {
        Signal::Low => 0,
        Signal::High => 1,
    }
}

/// Sincere stance: accept iff the proposal weakly beats the status quo under
/// the voter's private posterior.
fn sincere(params: &ModelParams, mu: Belief, policy: f64, voter: usize, signal: Signal) -> bool {
    params.expected_voter_utility(voter, policy, signal, mu)
        >= params.expected_voter_utility(voter, 0.0, signal, mu)
}

fn state_acceptances(params: &ModelParams, acceptance: &[[bool; 2]], state: State) -> Vec<f64> {
    (0..params.n_voters)
        .map(|i| {
            let tau = params.precisions[i];
            Signal::BOTH
                .iter()
                .map(|&s| {
                    s.prob_given_state(state, tau)
                        * if acceptance[i][signal_index(s)] { 1.0 } else { 0.0 }
                })
                .sum()
        })
        .collect()
}

/// One-shot voting equilibrium at `(mu, policy)` by sequential best-response
/// sweeps from sincere voting.
pub fn tioli_equilibrium(
    params: &ModelParams,
    mu: Belief,
    policy: f64,
    max_iters: usize,
) -> Result<OneShotEquilibrium, BenchmarkError> {
    let n = params.n_voters;
    let mut acceptance: Vec<[bool; 2]> = (0..n)
        .map(|i| {
            [
                sincere(params, mu, policy, i, Signal::Low),
                sincere(params, mu, policy, i, Signal::High),
            ]
        })
        .collect();
    let mut trace: Vec<Vec<[u8; 2]>> = Vec::new();
    for sweep in 1..=max_iters {
        let mut changed = false;
        for i in 0..n {
            // Pivotal probabilities against the current strategies of the others.
            let pivotal: Vec<f64> = State::BOTH
                .into_iter()
                .map(|state| {
                    let z = state_acceptances(params, &acceptance, state);
                    poisson::pivotal_prob(&z, i, params.quota - 1).expect("probabilities in range")
                })
                .collect();
            let ever_pivotal =
                mu.prob(State::Low) * pivotal[0] + mu.prob(State::High) * pivotal[1] > 0.0;
            for signal in Signal::BOTH {
                let best = if ever_pivotal {
                    // Pivotal-weighted gain from acceptance over the status quo.
                    let mut diff = 0.0;
                    for (k, state) in State::BOTH.into_iter().enumerate() {
                        diff += mu.prob(state)
                            * signal.prob_given_state(state, params.precisions[i])
                            * pivotal[k]
                            * (params.voter_utility(i, policy, state)
                                - params.voter_utility(i, 0.0, state));
                    }
                    diff >= 0.0
                } else {
                    sincere(params, mu, policy, i, signal)
                };
                if acceptance[i][signal_index(signal)] != best {
                    acceptance[i][signal_index(signal)] = best;
                    changed = true;
                }
            }
        }
        if !changed {
            let pass_prob = std::array::from_fn(|k| {
                let z = state_acceptances(params, &acceptance, State::BOTH[k]);
                (params.quota..=n).map(|r| poisson::pmf(&z, r).unwrap()).sum()
            });
            return Ok(OneShotEquilibrium { policy, acceptance, pass_prob, sweeps: sweep });
        }
        trace.push(acceptance.iter().map(|a| [a[0] as u8, a[1] as u8]).collect());
        if trace.len() > 8 {
            trace.remove(0);
        }
    }
    Err(BenchmarkError::NonConvergence { policy, max_iters, trace })
}

/// Take-it-or-leave-it optimum: maximizes `p * P(pass)` over a policy grid
/// refined with the exact reservation candidates.
pub fn tioli_value(
    params: &ModelParams,
    mu: Belief,
    max_iters: usize,
) -> Result<(f64, f64), BenchmarkError> {
    let mut candidates: Vec<f64> = Vec::new();
    let step = 1e-3 * params.policy_cap;
    let mut p = 0.0;
    while p < params.policy_cap {
        candidates.push(p);
        p += step;
    }
    candidates.push(params.policy_cap);
    for i in 0..params.n_voters {
        for ys in [&params.reservation_low, &params.reservation_high] {
            candidates.push(ys[i]);
            if ys[i] > 1e-9 {
                candidates.push(ys[i] - 1e-9);
            }
        }
    }
    candidates.retain(|&c| (0.0..=params.policy_cap).contains(&c));
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best = (0.0, f64::NEG_INFINITY);
    for &policy in &candidates {
        let eq = tioli_equilibrium(params, mu, policy, max_iters)?;
        let value = policy
            * (mu.prob(State::Low) * eq.pass_prob[0] + mu.prob(State::High) * eq.pass_prob[1]);
        if value > best.1 {
            best = (policy, value);
        }
    }
    Ok(best)
}

/// Limit of the take-it-or-leave-it value as signals become precise:
/// `max(y_q^l, mu(h) y_q^h)`.
pub fn tioli_limit_value(params: &ModelParams, mu: Belief) -> f64 {
    let q = params.decisive_voter();
    params.reservation_low[q].max(mu.prob_high() * params.reservation_high[q])
}

//! Extensive-form machinery: stationary Markov profiles, exact induced
//! outcome distributions, expected payoffs, one-step deviation gains, and
//! Monte Carlo play-out.
//!
//! Every period the proposer offers a policy at the current public belief,
//! voters draw fresh signals (the replacement assumption), vote, and the
//! public belief is updated from the record. A play resolves into an atom
//! `(period, policy)` once a proposal passes; enumeration truncates at a
//! configurable horizon and keeps the residual in `never_prob`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::belief::{acceptance_in_state, public_update, Belief, VoteProfile};
use crate::model::{ModelParams, Outcome, Player, Signal, State};

/// A stationary Markov strategy profile.
///
/// The proposal rule maps the public belief to a finite-support distribution
/// over policies; the acceptance rule gives each voter's probability of
/// accepting a policy given her signal and the public belief.
pub trait Profile {
    /// Finite-support proposal distribution `(policy, probability)` at `mu`.
    /// An empty vector means the rule is undefined at this belief.
    fn propose(&self, mu: Belief) -> Vec<(f64, f64)>;

    /// Acceptance probability of `voter` with `signal` facing `policy` at `mu`.
    fn acceptance(&self, voter: usize, signal: Signal, mu: Belief, policy: f64) -> f64;
}

/// Profile built from plain closures; the workhorse for tests and benchmarks.
pub struct RuleProfile<P, A>
where
    P: Fn(Belief) -> Vec<(f64, f64)>,
    A: Fn(usize, Signal, Belief, f64) -> f64,
{
    propose: P,
    acceptance: A,
}

impl<P, A> RuleProfile<P, A>
where
    P: Fn(Belief) -> Vec<(f64, f64)>,
    A: Fn(usize, Signal, Belief, f64) -> f64,
{
    pub fn new(propose: P, acceptance: A) -> Self {
        RuleProfile { propose, acceptance }
    }
}

impl<P, A> Profile for RuleProfile<P, A>
where
    P: Fn(Belief) -> Vec<(f64, f64)>,
    A: Fn(usize, Signal, Belief, f64) -> f64,
{
    fn propose(&self, mu: Belief) -> Vec<(f64, f64)> {
        (self.propose)(mu)
    }

    fn acceptance(&self, voter: usize, signal: Signal, mu: Belief, policy: f64) -> f64 {
        (self.acceptance)(voter, signal, mu, policy)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("proposal rule undefined at belief {0}")]
    ProposalUndefined(f64),
    #[error("proposal distribution at belief {belief} has total mass {mass}")]
    UnnormalizedProposal { belief: f64, mass: f64 },
    #[error("acceptance probability {prob} of voter {voter} outside [0,1]")]
    BadAcceptanceProbability { voter: usize, prob: f64 },
    #[error("{0} voters mix at one node; vote enumeration capped at 20")]
    TooManyMixedVoters(usize),
}

/// Truncation controls for exact enumeration.
#[derive(Debug, Clone, Copy)]
pub struct EnumerationOptions {
    /// Hard cap on enumerated periods.
    pub max_periods: u32,
    /// Stop once the unresolved mass falls below this.
    pub residual_tol: f64,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        EnumerationOptions { max_periods: 200, residual_tol: 1e-10 }
    }
}

/// One resolution point of the induced outcome distribution.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Atom {
    /// Acceptance period, 1-based.
    pub period: u32,
    pub policy: f64,
    pub prob: f64,
}

/// Distribution over `(period, policy)` pairs induced by a profile in a
/// fixed state, plus the truncation/never mass.
#[derive(Debug, Clone, Serialize)]
pub struct OutcomeDistribution {
    pub atoms: Vec<Atom>,
    pub never_prob: f64,
}

impl OutcomeDistribution {
    /// Probability that a policy strictly greater than `p` is implemented.
    pub fn tail_prob(&self, p: f64) -> f64 {
        self.atoms.iter().filter(|a| a.policy > p).map(|a| a.prob).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.never_prob + self.atoms.iter().map(|a| a.prob).sum::<f64>()
    }

    /// Proposer's normalized discounted value of this distribution
    /// (the status quo contributes nothing).
    pub fn proposer_value(&self, discount: f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.prob * discount.powi(a.period as i32 - 1) * a.policy)
            .sum()
    }

    /// Voter `i`'s normalized discounted value in `state`, including the
    /// status-quo flow before acceptance and on the never branch.
    pub fn voter_value(&self, params: &ModelParams, voter: usize, state: State) -> f64 {
        let base = params.voter_utility(voter, 0.0, state);
        let mut total = self.never_prob * base;
        for a in &self.atoms {
            let w = params.discount.powi(a.period as i32 - 1);
            total += a.prob * ((1.0 - w) * base + w * params.voter_utility(voter, a.policy, state));
        }
        total
    }
}

/// Belief-indexed probability masses with tolerance-based merging. Node
/// counts stay tiny on constructed profiles (ladder beliefs only).
#[derive(Debug, Clone, Default)]
struct BeliefMasses(Vec<(Belief, f64)>);

impl BeliefMasses {
    fn add(&mut self, mu: Belief, mass: f64) {
        for (b, m) in self.0.iter_mut() {
            if (b.prob_high() - mu.prob_high()).abs() < 1e-12 {
                *m += mass;
                return;
            }
        }
        self.0.push((mu, mass));
    }

    fn total(&self) -> f64 {
        self.0.iter().map(|(_, m)| m).sum()
    }
}

fn state_acceptances(
    params: &ModelParams,
    profile: &dyn Profile,
    state: State,
    mu: Belief,
    policy: f64,
) -> Result<Vec<f64>, EngineError> {
    (0..params.n_voters)
        .map(|i| {
            let a = acceptance_in_state(params, profile, i, state, mu, policy);
            if !(-1e-9..=1.0 + 1e-9).contains(&a) || a.is_nan() {
                return Err(EngineError::BadAcceptanceProbability { voter: i, prob: a });
            }
            Ok(a.clamp(0.0, 1.0))
        })
        .collect()
}

/// Calls `visit(votes, probability)` for every vote profile with positive
/// probability, branching only over voters with interior acceptance odds.
fn for_each_vote_profile(
    accept: &[f64],
    mut visit: impl FnMut(&VoteProfile, f64),
) -> Result<(), EngineError> {
    let mixed: Vec<usize> = (0..accept.len()).filter(|&i| accept[i] > 0.0 && accept[i] < 1.0).collect();
    if mixed.len() > 20 {
        return Err(EngineError::TooManyMixedVoters(mixed.len()));
    }
    let mut votes: Vec<bool> = accept.iter().map(|&a| a == 1.0).collect();
    for combo in 0..(1usize << mixed.len()) {
        let mut prob = 1.0;
        for (bit, &i) in mixed.iter().enumerate() {
            let yes = combo >> bit & 1 == 1;
            votes[i] = yes;
            prob *= if yes { accept[i] } else { 1.0 - accept[i] };
        }
        visit(&VoteProfile(votes.clone()), prob);
    }
    Ok(())
}

/// Exact forward enumeration of the outcome distribution `G^{state, mu}`.
pub fn induced_distribution(
    params: &ModelParams,
    profile: &dyn Profile,
    mu: Belief,
    state: State,
    opts: EnumerationOptions,
) -> Result<OutcomeDistribution, EngineError> {
    let mut nodes = BeliefMasses::default();
    nodes.add(mu, 1.0);
    let mut atoms: Vec<Atom> = Vec::new();
    let mut period = 0;
    while period < opts.max_periods && nodes.total() >= opts.residual_tol {
        period += 1;
        let mut next = BeliefMasses::default();
        for &(node_mu, mass) in &nodes.0 {
            let proposals = profile.propose(node_mu);
            if proposals.is_empty() {
                return Err(EngineError::ProposalUndefined(node_mu.prob_high()));
            }
            let total: f64 = proposals.iter().map(|&(_, q)| q).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(EngineError::UnnormalizedProposal {
                    belief: node_mu.prob_high(),
                    mass: total,
                });
            }
            for &(policy, pprob) in &proposals {
                if pprob == 0.0 {
                    continue;
                }
                let branch = mass * pprob;
                let accept = state_acceptances(params, profile, state, node_mu, policy)?;
                let mut passed = 0.0;
                for_each_vote_profile(&accept, |votes, prob| {
                    if prob == 0.0 {
                        return;
                    }
                    if votes.is_accepted(params.quota) {
                        passed += prob;
                    } else {
                        let post = public_update(params, profile, node_mu, policy, votes);
                        next.add(post, branch * prob);
                    }
                })?;
                if passed > 0.0 {
                    let weight = branch * passed;
                    match atoms.iter_mut().find(|a| {
                        a.period == period && (a.policy - policy).abs() < 1e-15
                    }) {
                        Some(a) => a.prob += weight,
                        None => atoms.push(Atom { period, policy, prob: weight }),
                    }
                }
            }
        }
        nodes = next;
    }
    Ok(OutcomeDistribution { atoms, never_prob: nodes.total() })
}

/// Expected payoffs of a distribution pair at belief `mu`: the proposer's
/// value and each voter's signal-conditional value.
#[derive(Debug, Clone, Serialize)]
pub struct ExpectedPayoffs {
    pub proposer: f64,
    /// Indexed `[voter][signal]` with signal order `[Low, High]`.
    pub voters: Vec<[f64; 2]>,
}

pub fn expected_payoffs(
    params: &ModelParams,
    dist_low: &OutcomeDistribution,
    dist_high: &OutcomeDistribution,
    mu: Belief,
) -> ExpectedPayoffs {
    let by_state = [dist_low, dist_high];
    let proposer = mu.prob(State::Low) * dist_low.proposer_value(params.discount)
        + mu.prob(State::High) * dist_high.proposer_value(params.discount);
    let voters = (0..params.n_voters)
        .map(|i| {
            let mut out = [0.0; 2];
            for (k, signal) in Signal::BOTH.into_iter().enumerate() {
                let post = mu.update_on_signal(signal, params.precisions[i]);
                out[k] = post.prob(State::Low) * by_state[0].voter_value(params, i, State::Low)
                    + post.prob(State::High) * by_state[1].voter_value(params, i, State::High);
            }
            out
        })
        .collect();
    ExpectedPayoffs { proposer, voters }
}

/// Exact gain to `voter` with `signal` from replacing her prescribed vote on
/// `policy` at `mu` with `accept`, holding everyone else to the profile.
///
/// Enumerates the other voters' vote profiles, resolves passing records at
/// the stage value and failing records at the delayed continuation under the
/// publicly updated belief (the update always applies the equilibrium rules,
/// so a deviation can land on a zero-probability record and leave the belief
/// unchanged). A value `<= 0` certifies that this one-step deviation does
/// not pay.
pub fn deviation_gain(
    params: &ModelParams,
    profile: &dyn Profile,
    mu: Belief,
    policy: f64,
    voter: usize,
    signal: Signal,
    accept: bool,
    opts: EnumerationOptions,
) -> Result<f64, EngineError> {
    let n = params.n_voters;
    let prescribed = profile.acceptance(voter, signal, mu, policy);
    let own_posterior = mu.update_on_signal(signal, params.precisions[voter]);
    let mut continuation: HashMap<(u64, bool), f64> = HashMap::new();
    let mut gain = 0.0;
    for state in State::BOTH {
        let state_weight = own_posterior.prob(state);
        if state_weight == 0.0 {
            continue;
        }
        let all = state_acceptances(params, profile, state, mu, policy)?;
        let others: Vec<f64> =
            (0..n).filter(|&j| j != voter).map(|j| all[j]).collect();
        let mut state_gain = 0.0;
        let mut err = None;
        for_each_vote_profile(&others, |other_votes, prob| {
            if prob == 0.0 || err.is_some() {
                return;
            }
            let mut value = |own_vote: bool| -> Result<f64, EngineError> {
                let mut votes = Vec::with_capacity(n);
                votes.extend_from_slice(&other_votes.0[..voter]);
                votes.push(own_vote);
                votes.extend_from_slice(&other_votes.0[voter..]);
                let record = VoteProfile(votes);
                if record.is_accepted(params.quota) {
                    return Ok(params.voter_utility(voter, policy, state));
                }
                let post = public_update(params, profile, mu, policy, &record);
                let key = (post.prob_high().to_bits(), state == State::High);
                let cont = match continuation.get(&key) {
                    Some(&v) => v,
                    None => {
                        let dist = induced_distribution(params, profile, post, state, opts)?;
                        let v = dist.voter_value(params, voter, state);
                        continuation.insert(key, v);
                        v
                    }
                };
                let base = params.voter_utility(voter, 0.0, state);
                Ok((1.0 - params.discount) * base + params.discount * cont)
            };
            let deviation = match value(accept) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    return;
                }
            };
            let on_path = if prescribed == 1.0 {
                value(true)
            } else if prescribed == 0.0 {
                value(false)
            } else {
                value(true).and_then(|hi| Ok(prescribed * hi + (1.0 - prescribed) * value(false)?))
            };
            match on_path {
                Ok(v) => state_gain += prob * (deviation - v),
                Err(e) => err = Some(e),
            }
        })?;
        if let Some(e) = err {
            return Err(e);
        }
        gain += state_weight * state_gain;
    }
    Ok(gain)
}

/// Per-period acceptance bookkeeping from a Monte Carlo run.
#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub episodes: u64,
    pub mean_proposer: f64,
    pub stderr_proposer: f64,
    /// Ex-ante mean discounted payoff per voter.
    pub mean_voters: Vec<f64>,
    pub stderr_voters: Vec<f64>,
    /// Fraction of episodes resolving in period `t` (index `t - 1`).
    pub acceptance_by_period: Vec<f64>,
    /// Fraction of episodes never resolving within the horizon.
    pub never_frequency: f64,
    /// Mean accepted policy conditional on acceptance.
    pub mean_accepted_policy: f64,
}

struct Accumulator {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Accumulator {
    fn new() -> Self {
        Accumulator { n: 0.0, sum: 0.0, sum_sq: 0.0 }
    }

    fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n
    }

    fn stderr(&self) -> f64 {
        let var = (self.sum_sq - self.sum * self.sum / self.n) / (self.n - 1.0);
        (var.max(0.0) / self.n).sqrt()
    }
}

/// Monte Carlo play-out of a profile from the model prior.
///
/// Deterministic given `seed`: episode `e` uses an independent ChaCha stream
/// `e`, and within a period the draws are consumed in a fixed order —
/// proposal first, then one signal draw and one vote draw per voter in voter
/// order.
pub fn simulate(
    params: &ModelParams,
    profile: &dyn Profile,
    seed: u64,
    episodes: u64,
    max_periods: u32,
) -> SimReport {
    let mut proposer = Accumulator::new();
    let mut voters: Vec<Accumulator> = (0..params.n_voters).map(|_| Accumulator::new()).collect();
    let mut by_period = vec![0u64; max_periods as usize];
    let mut never = 0u64;
    let mut accepted_policy_sum = 0.0;
    let mut accepted_count = 0u64;
    for episode in 0..episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(episode);
        let state = if rng.gen::<f64>() < params.prior_high { State::High } else { State::Low };
        let mut mu = params.prior();
        let mut outcome = Outcome::Never;
        for period in 1..=max_periods {
            let proposals = profile.propose(mu);
            let policy = draw_policy(&proposals, rng.gen::<f64>());
            let signals: Vec<Signal> = (0..params.n_voters)
                .map(|i| {
                    let hi = Signal::High.prob_given_state(state, params.precisions[i]);
                    if rng.gen::<f64>() < hi {
                        Signal::High
                    } else {
                        Signal::Low
                    }
                })
                .collect();
            let votes = VoteProfile(
                (0..params.n_voters)
                    .map(|i| rng.gen::<f64>() < profile.acceptance(i, signals[i], mu, policy))
                    .collect(),
            );
            if votes.is_accepted(params.quota) {
                outcome = Outcome::Accepted { period, policy };
                by_period[period as usize - 1] += 1;
                accepted_policy_sum += policy;
                accepted_count += 1;
                break;
            }
            mu = public_update(params, profile, mu, policy, &votes);
        }
        if matches!(outcome, Outcome::Never) {
            never += 1;
        }
        proposer.push(params.discounted_payoff(Player::Proposer, state, outcome).unwrap());
        for (i, acc) in voters.iter_mut().enumerate() {
            acc.push(params.discounted_payoff(Player::Voter(i), state, outcome).unwrap());
        }
    }
    let trim = by_period.iter().rposition(|&c| c > 0).map_or(0, |i| i + 1);
    SimReport {
        episodes,
        mean_proposer: proposer.mean(),
        stderr_proposer: proposer.stderr(),
        mean_voters: voters.iter().map(Accumulator::mean).collect(),
        stderr_voters: voters.iter().map(Accumulator::stderr).collect(),
        acceptance_by_period: by_period[..trim]
            .iter()
            .map(|&c| c as f64 / episodes as f64)
            .collect(),
        never_frequency: never as f64 / episodes as f64,
        mean_accepted_policy: if accepted_count > 0 {
            accepted_policy_sum / accepted_count as f64
        } else {
            f64::NAN
        },
    }
}

fn draw_policy(proposals: &[(f64, f64)], u: f64) -> f64 {
    let mut acc = 0.0;
    for &(policy, prob) in proposals {
        acc += prob;
        if u < acc {
            return policy;
        }
    }
    proposals.last().expect("proposal rule undefined").0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poisson;
    use crate::test_support::canonical_params;

    fn unanimous_profile(policy: f64) -> impl Profile {
        RuleProfile::new(
            move |_mu| vec![(policy, 1.0)],
            |_v, _s, _mu, _p| 1.0,
        )
    }

    #[test]
    fn unanimous_acceptance_is_a_point_mass() {
        let params = canonical_params();
        let profile = unanimous_profile(0.4);
        for state in State::BOTH {
            let dist = induced_distribution(
                &params,
                &profile,
                params.prior(),
                state,
                EnumerationOptions::default(),
            )
            .unwrap();
            assert_eq!(dist.atoms.len(), 1);
            assert_eq!(dist.atoms[0].period, 1);
            assert_eq!(dist.atoms[0].policy, 0.4);
            assert!((dist.atoms[0].prob - 1.0).abs() < 1e-15);
            assert_eq!(dist.never_prob, 0.0);
        }
    }

    #[test]
    fn tail_prob_counts_strictly_greater_atoms() {
        let dist = OutcomeDistribution {
            atoms: vec![
                Atom { period: 1, policy: 3.0, prob: 0.4 },
                Atom { period: 2, policy: 1.0, prob: 0.6 },
            ],
            never_prob: 0.0,
        };
        assert_eq!(dist.tail_prob(2.0), 0.4);
        assert_eq!(dist.tail_prob(3.0), 0.0);
        let point = OutcomeDistribution {
            atoms: vec![Atom { period: 1, policy: 2.0, prob: 1.0 }],
            never_prob: 0.0,
        };
        assert_eq!(point.tail_prob(1.0), 1.0);
        assert_eq!(point.tail_prob(2.0), 0.0);
    }

    #[test]
    fn one_shot_acceptance_matches_poisson_tail() {
        // Voters accept iff the signal is high: state-w acceptance is the
        // tail of the Poisson binomial over the tau-mixed probabilities.
        let params = canonical_params();
        let profile = RuleProfile::new(
            |_mu| vec![(2.0, 1.0)],
            |_v, s, _mu, _p| if s == Signal::High { 1.0 } else { 0.0 },
        );
        let opts = EnumerationOptions { max_periods: 1, residual_tol: 0.0 };
        for state in State::BOTH {
            let dist =
                induced_distribution(&params, &profile, params.prior(), state, opts).unwrap();
            let accepted: f64 = dist.atoms.iter().map(|a| a.prob).sum();
            let z: Vec<f64> = (0..3)
                .map(|i| Signal::High.prob_given_state(state, params.precisions[i]))
                .collect();
            let tail: f64 = (params.quota..=3).map(|r| poisson::pmf(&z, r).unwrap()).sum();
            assert!((accepted - tail).abs() < 1e-12);
        }
    }

    #[test]
    fn expected_payoffs_match_hand_values() {
        let params = canonical_params();
        let low = OutcomeDistribution {
            atoms: vec![Atom { period: 1, policy: 1.0, prob: 1.0 }],
            never_prob: 0.0,
        };
        let high = OutcomeDistribution {
            atoms: vec![Atom { period: 1, policy: 3.0, prob: 1.0 }],
            never_prob: 0.0,
        };
        let payoffs = expected_payoffs(&params, &low, &high, Belief::new(0.5));
        assert!((payoffs.proposer - 2.0).abs() < 1e-15);
        // Perpetual status quo.
        let never = OutcomeDistribution { atoms: vec![], never_prob: 1.0 };
        let payoffs = expected_payoffs(&params, &never, &never, Belief::new(0.5));
        assert_eq!(payoffs.proposer, 0.0);
        let expect = 0.1 * params.voter_utility(1, 0.0, State::High)
            + 0.9 * params.voter_utility(1, 0.0, State::Low);
        assert!((payoffs.voters[1][0] - expect).abs() < 1e-12);
    }

    #[test]
    fn never_pivotal_vote_changes_nothing() {
        // All three always accept, so flipping one vote still passes the
        // proposal and reveals nothing.
        let params = canonical_params();
        let profile = unanimous_profile(0.4);
        let gain = deviation_gain(
            &params,
            &profile,
            params.prior(),
            0.4,
            2,
            Signal::Low,
            false,
            EnumerationOptions::default(),
        )
        .unwrap();
        assert_eq!(gain, 0.0);
    }

    #[test]
    fn simulate_is_deterministic_and_exact_on_degenerate_profiles() {
        let params = canonical_params();
        let profile = unanimous_profile(2.5);
        let a = simulate(&params, &profile, 42, 500, 50);
        let b = simulate(&params, &profile, 42, 500, 50);
        assert_eq!(a.mean_proposer.to_bits(), b.mean_proposer.to_bits());
        assert_eq!(a.mean_voters, b.mean_voters);
        assert_eq!(a.mean_proposer, 2.5);
        assert_eq!(a.stderr_proposer, 0.0);
        assert_eq!(a.acceptance_by_period, vec![1.0]);
    }
}

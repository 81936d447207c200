//! Public beliefs and Bayesian updating from signals and voting records.
//!
//! The proposer is uninformed; everyone shares a public belief about the
//! state that is updated from observed votes. Votes observed with zero
//! probability under the profile leave the belief unchanged.

use serde::{Deserialize, Serialize};

use crate::engine::Profile;
use crate::model::{ModelParams, Signal, State};

/// Total likelihood below this is treated as a zero-probability event, which
/// leaves the public belief unchanged. Far below any product of model
/// probabilities at committee scale.
pub const ZERO_LIKELIHOOD: f64 = 1e-30;

/// Probability that the state is high.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Belief(f64);

impl Belief {
    pub fn new(prob_high: f64) -> Self {
        assert!(
            (0.0..=1.0).contains(&prob_high),
            "belief must lie in [0,1], got {prob_high}"
        );
        Belief(prob_high)
    }

    pub fn prob_high(self) -> f64 {
        self.0
    }

    pub fn prob(self, state: State) -> f64 {
        match state {
            State::High => self.0,
            State::Low => 1.0 - self.0,
        }
    }

    /// Posterior after privately observing `signal` with precision `tau`.
    pub fn update_on_signal(self, signal: Signal, tau: f64) -> Belief {
        let like_high = signal.prob_given_state(State::High, tau);
        let like_low = signal.prob_given_state(State::Low, tau);
        let num = self.0 * like_high;
        let den = num + (1.0 - self.0) * like_low;
        if den <= 0.0 {
            return self;
        }
        Belief(num / den)
    }

    /// Multiplies the odds of the high state by `factor`.
    ///
    /// Degenerate beliefs are absorbing. Used for signal-precision drain
    /// arithmetic where the factor form is more stable than raw Bayes.
    pub fn scale_odds(self, factor: f64) -> Belief {
        if self.0 == 0.0 || self.0 == 1.0 {
            return self;
        }
        let odds = self.0 / (1.0 - self.0) * factor;
        Belief(odds / (1.0 + odds))
    }
}

/// One period's voting record: `true` = accept.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VoteProfile(pub Vec<bool>);

impl VoteProfile {
    pub fn accept_count(&self) -> usize {
        self.0.iter().filter(|&&a| a).count()
    }

    /// Whether this record passes the proposal under `quota`.
    pub fn is_accepted(&self, quota: usize) -> bool {
        self.accept_count() >= quota
    }
}

/// Signal-mixed acceptance probability of `voter` in `state`:
/// `sum_s tau_i(s | state) * alpha_i(policy; s, mu)`.
pub fn acceptance_in_state(
    params: &ModelParams,
    profile: &dyn Profile,
    voter: usize,
    state: State,
    mu: Belief,
    policy: f64,
) -> f64 {
    let tau = params.precisions[voter];
    Signal::BOTH
        .iter()
        .map(|&s| s.prob_given_state(state, tau) * profile.acceptance(voter, s, mu, policy))
        .sum()
}

/// Posterior public belief after proposal `policy` draws the record `votes`.
///
/// Proportional to `mu(w) * prod_i alpha_i^(a_i) (1 - alpha_i)^(1 - a_i)`
/// with the state-mixed acceptance probabilities; zero-probability records
/// return the prior unchanged.
pub fn public_update(
    params: &ModelParams,
    profile: &dyn Profile,
    mu: Belief,
    policy: f64,
    votes: &VoteProfile,
) -> Belief {
    let mut likelihood = [0.0f64; 2];
    for (k, state) in State::BOTH.into_iter().enumerate() {
        let mut like = 1.0;
        for (i, &accepted) in votes.0.iter().enumerate() {
            let alpha = acceptance_in_state(params, profile, i, state, mu, policy);
            like *= if accepted { alpha } else { 1.0 - alpha };
        }
        likelihood[k] = like;
    }
    let num = mu.prob_high() * likelihood[1];
    let den = num + (1.0 - mu.prob_high()) * likelihood[0];
    if den < ZERO_LIKELIHOOD {
        return mu;
    }
    Belief::new(num / den)
}

/// Whether every voter's acceptance probability is weakly higher after a
/// high signal at `(policy, mu)`.
pub fn check_monotone(
    params: &ModelParams,
    profile: &dyn Profile,
    policy: f64,
    mu: Belief,
) -> bool {
    (0..params.n_voters).all(|i| {
        profile.acceptance(i, Signal::High, mu, policy)
            >= profile.acceptance(i, Signal::Low, mu, policy)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::RuleProfile;
    use crate::test_support::canonical_params;

    fn informative_voter0() -> impl Profile {
        // Voter 0 accepts iff her signal is high; the rest never accept.
        RuleProfile::new(
            |_mu| vec![(2.0, 1.0)],
            |voter, signal, _mu, _p| {
                if voter == 0 && signal == Signal::High {
                    1.0
                } else {
                    0.0
                }
            },
        )
    }

    #[test]
    fn signal_posterior_matches_bayes() {
        let b = Belief::new(0.5).update_on_signal(Signal::High, 0.9);
        assert!((b.prob_high() - 0.9).abs() < 1e-15);
        // Degenerate prior absorbs.
        let zero = Belief::new(0.0).update_on_signal(Signal::High, 0.9);
        assert_eq!(zero.prob_high(), 0.0);
        // A nearly uninformative signal barely moves the prior.
        let flat = Belief::new(0.5).update_on_signal(Signal::High, 0.5 + 1e-9);
        assert!((flat.prob_high() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn public_update_matches_signal_posterior_for_one_informative_voter() {
        let params = canonical_params();
        let profile = informative_voter0();
        let votes = VoteProfile(vec![true, false, false]);
        let post = public_update(&params, &profile, Belief::new(0.5), 2.0, &votes);
        assert!((post.prob_high() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn signal_independent_strategies_reveal_nothing() {
        let params = canonical_params();
        let profile = RuleProfile::new(
            |_mu| vec![(2.0, 1.0)],
            |voter, _signal, _mu, _p| [0.3, 0.8, 0.0][voter],
        );
        for votes in [vec![true, true, false], vec![false, false, false]] {
            let post = public_update(&params, &profile, Belief::new(0.37), 2.0, &VoteProfile(votes));
            assert!((post.prob_high() - 0.37).abs() < 1e-14);
        }
    }

    #[test]
    fn opposite_votes_of_equal_precision_voters_cancel() {
        let params = canonical_params(); // equal precisions
        let profile = RuleProfile::new(
            |_mu| vec![(2.0, 1.0)],
            |voter, signal, _mu, _p| {
                if voter < 2 && signal == Signal::High {
                    1.0
                } else {
                    0.0
                }
            },
        );
        let post = public_update(
            &params,
            &profile,
            Belief::new(0.5),
            2.0,
            &VoteProfile(vec![true, false, false]),
        );
        assert!((post.prob_high() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn zero_probability_record_keeps_prior() {
        let params = canonical_params();
        let profile = informative_voter0();
        // Voters 1 and 2 never accept, so this record has probability zero.
        let votes = VoteProfile(vec![false, true, true]);
        let post = public_update(&params, &profile, Belief::new(0.42), 2.0, &votes);
        assert_eq!(post.prob_high(), 0.42);
    }

    #[test]
    fn monotonicity_check_flags_inverted_strategies() {
        let params = canonical_params();
        let mu = Belief::new(0.5);
        assert!(check_monotone(&params, &informative_voter0(), 2.0, mu));
        let constant = RuleProfile::new(|_mu| vec![(2.0, 1.0)], |_v, _s, _mu, _p| 0.6);
        assert!(check_monotone(&params, &constant, 2.0, mu));
        let inverted = RuleProfile::new(
            |_mu| vec![(2.0, 1.0)],
            |_v, signal, _mu, _p| if signal == Signal::Low { 1.0 } else { 0.0 },
        );
        assert!(!check_monotone(&params, &inverted, 2.0, mu));
    }
}

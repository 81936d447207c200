//! Game primitives: parameters, utilities, discounted payoffs, and
//! reservation policies.
//!
//! The proposer maximizes the implemented policy, `u_A(x) = x`. Voter `i`
//! has state-dependent quadratic loss `u_i(x; w) = -(y_i^w / 2 - x)^2`, so
//! `y_i^w` is the largest policy voter `i` weakly prefers to the status quo
//! in state `w` (her reservation policy) and `y_i^w / 2` is her ideal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::Belief;

/// Common-value state of the world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum State {
    Low,
    High,
}

impl State {
    pub const BOTH: [State; 2] = [State::Low, State::High];
}

/// Binary private signal about the state.
///
/// Voter `i` observes `Low` in state `Low` and `High` in state `High` with
/// probability `tau_i` each (the signal precision).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Signal {
    Low,
    High,
}

impl Signal {
    pub const BOTH: [Signal; 2] = [Signal::Low, Signal::High];

    /// Probability that a voter with precision `tau` observes this signal in `state`.
    pub fn prob_given_state(self, state: State, tau: f64) -> f64 {
        match (self, state) {
            (Signal::Low, State::Low) | (Signal::High, State::High) => tau,
            _ => 1.0 - tau,
        }
    }
}

/// Whose payoff is being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Player {
    Proposer,
    /// Voter index, `0..n_voters`.
    Voter(usize),
}

/// Resolution of one play of the game: either some policy passes in some
/// period, or no proposal is ever accepted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    /// Policy `policy` receives a quota in period `period` (1-based).
    Accepted { period: u32, policy: f64 },
    /// The status quo persists forever.
    Never,
}

/// Full primitive description of the game.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    /// Committee size N.
    pub n_voters: usize,
    /// Votes required to pass a proposal, `1..=N`.
    pub quota: usize,
    /// Policies live in `[0, policy_cap]`.
    pub policy_cap: f64,
    /// Common discount factor, in (0, 1).
    pub discount: f64,
    /// Per-voter signal precision, each in (1/2, 1).
    pub precisions: Vec<f64>,
    /// Reservation policies in the low state, decreasing in the voter index.
    pub reservation_low: Vec<f64>,
    /// Reservation policies in the high state, decreasing in the voter index.
    pub reservation_high: Vec<f64>,
    /// Prior probability that the state is high, in (0, 1).
    pub prior_high: f64,
}

/// Validation failures for [`ModelParams`]. Each invariant gets its own code.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("committee size must be positive and match the reservation vectors")]
    BadCommitteeSize,
    #[error("quota {quota} out of range 1..={n}")]
    QuotaOutOfRange { quota: usize, n: usize },
    #[error("policy cap must be positive, got {0}")]
    BadPolicyCap(f64),
    #[error("discount factor must lie in (0,1), got {0}")]
    DiscountOutOfRange(f64),
    #[error("precision of voter {voter} must lie in (1/2,1), got {value}")]
    PrecisionOutOfRange { voter: usize, value: f64 },
    #[error("prior must lie in (0,1), got {0}")]
    PriorOutOfRange(f64),
    #[error("voter {voter}: ideal policies must satisfy 0 < y^l < y^h, got ({low}, {high})")]
    NonMonotoneIdeals { voter: usize, low: f64, high: f64 },
    #[error("voters {0} and {1} are out of order: reservation policies must be decreasing")]
    OrderingViolation(usize, usize),
    #[error("highest reservation policy {0} exceeds the policy cap {1}")]
    ReservationAboveCap(f64, f64),
    #[error("policy {policy} outside [0, {cap}]")]
    PolicyOutOfRange { policy: f64, cap: f64 },
}

/// Non-fatal validation findings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ValidationWarning {
    /// Adjacent voters share a reservation policy in some state. Benchmarks
    /// tolerate weak ordering; comparative statics re-check for strictness.
    EqualAdjacentReservations { state: State, voters: (usize, usize) },
}

impl ModelParams {
    /// Checks every model invariant. Returns the (non-fatal) warnings on
    /// success and the first violated invariant otherwise.
    pub fn validate(&self) -> Result<Vec<ValidationWarning>, ModelError> {
        let n = self.n_voters;
        if n == 0
            || self.reservation_low.len() != n
            || self.reservation_high.len() != n
            || self.precisions.len() != n
        {
            return Err(ModelError::BadCommitteeSize);
        }
        if self.quota == 0 || self.quota > n {
            return Err(ModelError::QuotaOutOfRange { quota: self.quota, n });
        }
        if !(self.policy_cap > 0.0) {
            return Err(ModelError::BadPolicyCap(self.policy_cap));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(ModelError::DiscountOutOfRange(self.discount));
        }
        for (i, &tau) in self.precisions.iter().enumerate() {
            if !(tau > 0.5 && tau < 1.0) {
                return Err(ModelError::PrecisionOutOfRange { voter: i, value: tau });
            }
        }
        if !(self.prior_high > 0.0 && self.prior_high < 1.0) {
            return Err(ModelError::PriorOutOfRange(self.prior_high));
        }
        for i in 0..n {
            let (low, high) = (self.reservation_low[i], self.reservation_high[i]);
            if !(low > 0.0 && low < high) {
                return Err(ModelError::NonMonotoneIdeals { voter: i, low, high });
            }
        }
        let mut warnings = Vec::new();
        for state in State::BOTH {
            let ys = self.reservations(state);
            for i in 1..n {
                if ys[i] > ys[i - 1] {
                    return Err(ModelError::OrderingViolation(i - 1, i));
                }
                if ys[i] == ys[i - 1] {
                    warnings.push(ValidationWarning::EqualAdjacentReservations {
                        state,
                        voters: (i - 1, i),
                    });
                }
            }
        }
        if self.reservation_high[0] > self.policy_cap {
            return Err(ModelError::ReservationAboveCap(
                self.reservation_high[0],
                self.policy_cap,
            ));
        }
        Ok(warnings)
    }

    /// Reservation policy vector for one state.
    pub fn reservations(&self, state: State) -> &[f64] {
        match state {
            State::Low => &self.reservation_low,
            State::High => &self.reservation_high,
        }
    }

    /// `y_i^w` for voter `i` (0-based) in `state`.
    pub fn reservation(&self, voter: usize, state: State) -> f64 {
        self.reservations(state)[voter]
    }

    /// The decisive voter: the holder of the q-th highest ideal policy (0-based index).
    pub fn decisive_voter(&self) -> usize {
        self.quota - 1
    }

    /// Prior as a [`Belief`].
    pub fn prior(&self) -> Belief {
        Belief::new(self.prior_high)
    }

    fn check_policy(&self, policy: f64) -> Result<(), ModelError> {
        if !(0.0..=self.policy_cap).contains(&policy) || policy.is_nan() {
            return Err(ModelError::PolicyOutOfRange { policy, cap: self.policy_cap });
        }
        Ok(())
    }

    /// Per-period utility from implementing `policy` in `state`.
    pub fn stage_utility(&self, who: Player, policy: f64, state: State) -> Result<f64, ModelError> {
        self.check_policy(policy)?;
        Ok(match who {
            Player::Proposer => policy,
            Player::Voter(i) => {
                let ideal = self.reservation(i, state) / 2.0;
                -(ideal - policy) * (ideal - policy)
            }
        })
    }

    /// Same as [`stage_utility`](Self::stage_utility) for a voter, without the domain check.
    pub fn voter_utility(&self, voter: usize, policy: f64, state: State) -> f64 {
        let ideal = self.reservation(voter, state) / 2.0;
        -(ideal - policy) * (ideal - policy)
    }

    /// Normalized discounted payoff of a play that implements the status quo
    /// until `outcome` resolves it: `(1 - d^(t-1)) u(0) + d^(t-1) u(p)`.
    pub fn discounted_payoff(
        &self,
        who: Player,
        state: State,
        outcome: Outcome,
    ) -> Result<f64, ModelError> {
        let base = self.stage_utility(who, 0.0, state)?;
        match outcome {
            Outcome::Never => Ok(base),
            Outcome::Accepted { period, policy } => {
                let weight = self.discount.powi(period as i32 - 1);
                Ok((1.0 - weight) * base + weight * self.stage_utility(who, policy, state)?)
            }
        }
    }

    /// The largest policy voter `i` with signal `signal` and prior `mu`
    /// weakly prefers to the status quo.
    ///
    /// Under quadratic loss this is the posterior-expected reservation policy
    /// capped at the policy space: `min(E[y_i^w | s, mu], policy_cap)`.
    pub fn reservation_policy(&self, voter: usize, signal: Signal, mu: Belief) -> f64 {
        let post = mu.update_on_signal(signal, self.precisions[voter]).prob_high();
        let value = post * self.reservation_high[voter] + (1.0 - post) * self.reservation_low[voter];
        value.min(self.policy_cap)
    }

    /// Expected stage utility of voter `i` from `policy` given signal and prior.
    pub fn expected_voter_utility(
        &self,
        voter: usize,
        policy: f64,
        signal: Signal,
        mu: Belief,
    ) -> f64 {
        let post = mu.update_on_signal(signal, self.precisions[voter]).prob_high();
        post * self.voter_utility(voter, policy, State::High)
            + (1.0 - post) * self.voter_utility(voter, policy, State::Low)
    }
}

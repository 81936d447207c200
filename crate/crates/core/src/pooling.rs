//! Pooled-proposal construction for equal signal precision.
//!
//! With a quota of at least two, the proposer repeats a single policy
//! `tilde_p`. The two marginal voters (`q-1` and `q`, 1-based) vote their
//! signals; everyone above accepts and everyone below rejects regardless of
//! signals. Split votes cancel exactly and leave the belief unchanged, a
//! double rejection drains it to `mu_tilde`, where the proposer falls back
//! to the sure offer accepted by the top `q` voters under both signals.
//!
//! `tilde_p` is the largest policy at which neither marginal voter gains
//! from a one-step deviation under either signal, with their continuation
//! values solved in closed form from the stationary play.

use std::cell::RefCell;
use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::belief::Belief;
use crate::engine::{self, EnumerationOptions, Profile};
use crate::model::{ModelError, ModelParams, Signal, State};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoolingError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("pooling construction requires a quota of at least 2, got {0}")]
    QuotaTooSmall(usize),
    #[error("precisions spread {spread} too wide for the equal-precision construction")]
    UnequalPrecisions { spread: f64 },
    #[error("no policy satisfies the marginal voters' no-deviation system at belief {belief}")]
    EmptyFeasibleSet { belief: f64 },
    #[error(transparent)]
    Engine(#[from] engine::EngineError),
}

/// Solver knobs.
#[derive(Debug, Clone, Copy)]
pub struct PoolingOptions {
    /// Feasibility scan step as a fraction of the policy cap.
    pub grid_step_frac: f64,
    /// Bisection tolerance on the maximal policy.
    pub solver_tol: f64,
}

impl Default for PoolingOptions {
    fn default() -> Self {
        PoolingOptions { grid_step_frac: 1e-3, solver_tol: 1e-12 }
    }
}

/// Which of the four no-deviation constraints is tight at the solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BindingConstraint {
    /// Low-signal constraint of the given (0-based) marginal voter.
    LowSignal(usize),
    /// High-signal constraint of the given (0-based) marginal voter.
    HighSignal(usize),
}

/// Output of the pooled-proposal solver.
#[derive(Debug, Clone, Serialize)]
pub struct PoolingSolution {
    /// The repeated pooled proposal.
    pub tilde_p: f64,
    /// Sure offer after a double rejection.
    pub fallback_p: f64,
    /// Belief the solution was computed at.
    pub mu: f64,
    /// Post-double-rejection belief.
    pub mu_tilde: f64,
    /// Common precision used (the mean when the inputs spread slightly).
    pub tau: f64,
    /// Stationary continuation values `[marginal voter][state]`, voter order
    /// `(q-1, q)` 1-based, state order `[low, high]`.
    pub continuation_values: [[f64; 2]; 2],
    pub binding: BindingConstraint,
    /// Set when precisions were averaged rather than exactly equal.
    pub used_mean_precision: bool,
}

/// The two signal-voting marginal voters, 0-based.
pub fn marginal_voters(params: &ModelParams) -> (usize, usize) {
    (params.quota - 2, params.quota - 1)
}

/// Post-double-rejection belief: both marginal voters reveal low signals.
pub fn double_rejection_belief(mu: Belief, tau: f64) -> Belief {
    let num = mu.prob_high() * (1.0 - tau) * (1.0 - tau);
    let den = num + (1.0 - mu.prob_high()) * tau * tau;
    Belief::new(num / den)
}

/// Stationary continuation values of voter `i` when `tilde_p` is repeated
/// against signal voting by the marginal pair and a double rejection leads
/// to `fallback_p` next period:
///
/// `V^l = [(1-t)^2 u^l(p~) + t^2 d u^l(pf) + t(2-t)(1-d) u^l(0)] / (1 - 2t(1-t)d)`
///
/// and symmetrically for the high state. With the exact fallback these equal
/// the continuation values at the drained belief.
pub fn continuation_values(
    params: &ModelParams,
    tilde_p: f64,
    fallback_p: f64,
    tau: f64,
    voter: usize,
) -> [f64; 2] {
    let d = params.discount;
    let denom = 1.0 - 2.0 * tau * (1.0 - tau) * d;
    let u = |policy: f64, state: State| params.voter_utility(voter, policy, state);
    let low = ((1.0 - tau) * (1.0 - tau) * u(tilde_p, State::Low)
        + tau * tau * d * u(fallback_p, State::Low)
        + tau * (2.0 - tau) * (1.0 - d) * u(0.0, State::Low))
        / denom;
    let high = (tau * tau * u(tilde_p, State::High)
        + (1.0 - tau) * (1.0 - tau) * d * u(fallback_p, State::High)
        + (1.0 - tau * tau) * (1.0 - d) * u(0.0, State::High))
        / denom;
    [low, high]
}

/// One-step deviation gains of marginal voter `i` at the pooled node, by
/// signal `[low, high]`. Equilibrium requires both to be non-positive.
///
/// Conditional on the state, the other marginal voter accepts with the
/// probability of a high signal; a lone acceptance or rejection cancels in
/// the public belief (same proposal next period, value `V_i`), a double
/// rejection reaches the fallback after one period of delay.
pub fn deviation_gains(
    params: &ModelParams,
    candidate: f64,
    fallback_p: f64,
    mu: Belief,
    tau: f64,
    voter: usize,
) -> [f64; 2] {
    let d = params.discount;
    let v = continuation_values(params, candidate, fallback_p, tau, voter);
    let mut gains = [0.0; 2];
    for (k, signal) in Signal::BOTH.into_iter().enumerate() {
        let mut gain = 0.0;
        for (s, state) in State::BOTH.into_iter().enumerate() {
            let u = |policy: f64| params.voter_utility(voter, policy, state);
            let own = signal.prob_given_state(state, tau);
            let other_accepts = Signal::High.prob_given_state(state, tau);
            let stay = (1.0 - d) * u(0.0) + d * v[s];
            let settle = (1.0 - d) * u(0.0) + d * u(fallback_p);
            let branch = match signal {
                // Prescribed reject; deviating to accept passes the proposal
                // when the other accepts and otherwise turns a double
                // rejection into a cancelling split.
                Signal::Low => {
                    other_accepts * (u(candidate) - stay) + (1.0 - other_accepts) * (stay - settle)
                }
                // Prescribed accept; deviating to reject splits a passing
                // pair or completes a double rejection.
                Signal::High => {
                    other_accepts * (stay - u(candidate)) + (1.0 - other_accepts) * (settle - stay)
                }
            };
            gain += mu.prob(state) * own * branch;
        }
        gains[k] = gain;
    }
    gains
}

fn common_precision(params: &ModelParams) -> Result<(f64, bool), PoolingError> {
    let max = params.precisions.iter().cloned().fold(f64::MIN, f64::max);
    let min = params.precisions.iter().cloned().fold(f64::MAX, f64::min);
    let spread = max - min;
    if spread > 1e-6 {
        return Err(PoolingError::UnequalPrecisions { spread });
    }
    let mean = params.precisions.iter().sum::<f64>() / params.n_voters as f64;
    Ok((mean, spread > 1e-12))
}

/// Largest pooled proposal supportable at belief `mu`: feasibility scan over
/// the policy grid, then bisection onto the boundary of the no-deviation
/// system for both marginal voters.
pub fn solve_tilde_p(
    params: &ModelParams,
    mu: Belief,
    opts: PoolingOptions,
) -> Result<PoolingSolution, PoolingError> {
    params.validate()?;
    if params.quota < 2 {
        return Err(PoolingError::QuotaTooSmall(params.quota));
    }
    let (tau, used_mean) = common_precision(params)?;
    let mu_tilde = double_rejection_belief(mu, tau);
    let fallback_p = params.reservation_policy(params.decisive_voter(), Signal::Low, mu_tilde);
    let (lo_voter, hi_voter) = marginal_voters(params);
    let feasible = |p: f64| {
        [lo_voter, hi_voter].into_iter().all(|i| {
            let g = deviation_gains(params, p, fallback_p, mu, tau, i);
            g[0] <= 1e-13 && g[1] <= 1e-13
        })
    };
    if feasible(params.policy_cap) {
        return Ok(finish(params, params.policy_cap, fallback_p, mu, mu_tilde, tau, used_mean));
    }
    let step = opts.grid_step_frac * params.policy_cap;
    let mut best = None;
    let mut p = 0.0;
    while p <= params.policy_cap {
        if feasible(p) {
            best = Some(p);
        }
        p += step;
    }
    let mut lo = best.ok_or(PoolingError::EmptyFeasibleSet { belief: mu.prob_high() })?;
    let mut hi = (lo + step).min(params.policy_cap);
    while hi - lo > opts.solver_tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(finish(params, lo, fallback_p, mu, mu_tilde, tau, used_mean))
}

fn finish(
    params: &ModelParams,
    tilde_p: f64,
    fallback_p: f64,
    mu: Belief,
    mu_tilde: Belief,
    tau: f64,
    used_mean_precision: bool,
) -> PoolingSolution {
    let (lo_voter, hi_voter) = marginal_voters(params);
    let continuation = [
        continuation_values(params, tilde_p, fallback_p, tau, lo_voter),
        continuation_values(params, tilde_p, fallback_p, tau, hi_voter),
    ];
    let mut binding = BindingConstraint::HighSignal(hi_voter);
    let mut tightest = f64::NEG_INFINITY;
    for voter in [lo_voter, hi_voter] {
        let g = deviation_gains(params, tilde_p, fallback_p, mu, tau, voter);
        if g[0] > tightest {
            tightest = g[0];
            binding = BindingConstraint::LowSignal(voter);
        }
        if g[1] > tightest {
            tightest = g[1];
            binding = BindingConstraint::HighSignal(voter);
        }
    }
    PoolingSolution {
        tilde_p,
        fallback_p,
        mu: mu.prob_high(),
        mu_tilde: mu_tilde.prob_high(),
        tau,
        continuation_values: continuation,
        binding,
        used_mean_precision,
    }
}

/// Stationary Markov profile implementing a pooled solution.
pub struct PoolingProfile {
    params: ModelParams,
    mu_tilde: f64,
    opts: PoolingOptions,
    pooled: RefCell<HashMap<u64, f64>>,
}

/// Assembles the profile behind a solution: pooled proposals with signal
/// voting by the marginal pair above the drained belief, the sure offer and
/// unanimous top-`q` acceptance below it.
pub fn build_pooling_profile(params: &ModelParams, sol: &PoolingSolution) -> PoolingProfile {
    let profile = PoolingProfile {
        params: params.clone(),
        mu_tilde: sol.mu_tilde,
        opts: PoolingOptions::default(),
        pooled: RefCell::new(HashMap::new()),
    };
    profile.pooled.borrow_mut().insert(sol.mu.to_bits(), sol.tilde_p);
    profile
}

impl PoolingProfile {
    fn in_fallback_region(&self, mu: Belief) -> bool {
        mu.prob_high() <= self.mu_tilde + 1e-12
    }

    fn sure_policy(&self, mu: Belief) -> f64 {
        self.params.reservation_policy(self.params.decisive_voter(), Signal::Low, mu)
    }

    fn pooled_policy(&self, mu: Belief) -> f64 {
        if let Some(&p) = self.pooled.borrow().get(&mu.prob_high().to_bits()) {
            return p;
        }
        // Off the solved node; re-solve so the rule stays a pure function of
        // the belief.
        let p = solve_tilde_p(&self.params, mu, self.opts)
            .map(|s| s.tilde_p)
            .unwrap_or_else(|_| self.sure_policy(mu));
        self.pooled.borrow_mut().insert(mu.prob_high().to_bits(), p);
        p
    }
}

impl Profile for PoolingProfile {
    fn propose(&self, mu: Belief) -> Vec<(f64, f64)> {
        if self.in_fallback_region(mu) {
            vec![(self.sure_policy(mu), 1.0)]
        } else {
            vec![(self.pooled_policy(mu), 1.0)]
        }
    }

    fn acceptance(&self, voter: usize, signal: Signal, mu: Belief, policy: f64) -> f64 {
        let q = self.params.decisive_voter();
        if self.in_fallback_region(mu) {
            let cutoff = if voter <= q {
                self.sure_policy(mu)
            } else {
                self.params.reservation_policy(voter, Signal::Low, mu)
            };
            return if policy <= cutoff + 1e-12 { 1.0 } else { 0.0 };
        }
        let (lo_voter, hi_voter) = marginal_voters(&self.params);
        let accepts = if voter == lo_voter || voter == hi_voter {
            match signal {
                Signal::High => policy <= self.pooled_policy(mu) + 1e-12,
                Signal::Low => policy <= self.sure_policy(mu) + 1e-12,
            }
        } else if voter < lo_voter {
            policy <= self.pooled_policy(mu) + 1e-12
        } else {
            policy <= self.params.reservation_policy(voter, Signal::Low, mu) + 1e-12
        };
        if accepts {
            1.0
        } else {
            0.0
        }
    }
}

/// Exact one-step deviation gain under a constructed profile at `(mu,
/// proposed policy)`, evaluated by enumerating the other voters' records and
/// pricing continuations with the enumeration engine. Non-positive values
/// certify the prescribed vote.
pub fn deviation_gain(
    params: &ModelParams,
    profile: &dyn Profile,
    voter: usize,
    signal: Signal,
    mu: Belief,
    accept: bool,
    opts: EnumerationOptions,
) -> Result<f64, PoolingError> {
    let policy = profile.propose(mu)[0].0;
    Ok(engine::deviation_gain(params, profile, mu, policy, voter, signal, accept, opts)?)
}

//! Screening-path construction for the one-informed-voter case.
//!
//! One voter `i` (0-based, at most the decisive voter) drives the public
//! belief: everyone else uses an uninformative cutoff rule, so voter `i` is
//! pivotal on the whole screening range. The proposer walks a decreasing
//! ladder of proposals `p_T > ... > p_1`. Voter `i` rejects everything above
//! `p_1` on a low signal; on a high signal she accepts the current rung with
//! exactly the probability that drains the public belief onto the next
//! cutoff down. Each rung is the largest policy at which the high-signal
//! voter is indifferent between accepting now and the one-period-delayed
//! continuation, so her mixing is a best response and the acceptance
//! identities hold exactly.
//!
//! Cutoffs: `M_1` is the pessimism floor below which no screen can beat the
//! sure offer (even one that trades the whole policy cap against one period
//! of delay); above it each region extends to the largest belief that a
//! single informative rejection can drain onto the cutoff below, so
//! intermediate rungs are accepted outright on a high signal and only the
//! entry rung mixes.

use std::cell::RefCell;
use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::belief::Belief;
use crate::engine::Profile;
use crate::model::{ModelError, ModelParams, Signal, State};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScreeningError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("informed voter {voter} must satisfy voter <= quota {quota} (0-based)")]
    InformedVoterOutOfRange { voter: usize, quota: usize },
    #[error("indifference bracket failed at level {level} (belief {belief}): peak utility below the continuation {target}")]
    BracketFailure { level: usize, belief: f64, target: f64 },
    #[error("cutoff ladder stalled at level {level}: {prev} -> {next}")]
    NonMonotoneCutoffs { level: usize, prev: f64, next: f64 },
    #[error("cutoff ladder exceeded {max_levels} levels below belief {belief}")]
    LadderTooDeep { max_levels: usize, belief: f64 },
    #[error("acceptance probability {phi} outside (0,1] for drain {from} -> {to}")]
    InfeasibleAcceptance { phi: f64, from: f64, to: f64 },
}

/// Solver knobs for the ladder construction.
#[derive(Debug, Clone, Copy)]
pub struct ScreeningOptions {
    /// Bisection tolerance on policies.
    pub solver_tol: f64,
    /// Guard on the number of ladder levels.
    pub max_levels: usize,
}

impl Default for ScreeningOptions {
    fn default() -> Self {
        ScreeningOptions { solver_tol: 1e-13, max_levels: 200 }
    }
}

/// One rung of the belief ladder, anchored at the top of its belief region.
#[derive(Debug, Clone, Serialize)]
pub struct ScreeningLevel {
    /// Region top `M_t`: beliefs in `(M_{t-1}, M_t]` start a t-step path.
    pub cutoff: f64,
    /// Proposal at the anchor node.
    pub policy: f64,
    /// Whether the committee cutoff truncated the rung (the informed
    /// high-signal voter then strictly prefers acceptance, no mixing).
    pub capped: bool,
    /// Proposer's value of the play from the anchor, by state `[low, high]`.
    pub proposer_value: [f64; 2],
    /// Informed voter's value of the play from the anchor, by state.
    pub voter_value: [f64; 2],
}

/// A constructed screening path from a given prior.
#[derive(Debug, Clone, Serialize)]
pub struct ScreeningPath {
    pub informed_voter: usize,
    pub initial_belief: f64,
    /// `p_1..p_T` at their on-path nodes; proposed in decreasing order.
    pub policies: Vec<f64>,
    /// Belief cutoffs `M_1..M_T`; the prior lies in `(M_{T-1}, M_T]`.
    pub cutoffs: Vec<f64>,
    /// High-signal acceptance probabilities at the on-path nodes;
    /// `accept_probs[0] = 1` for the final sure offer.
    pub accept_probs: Vec<f64>,
    /// Ladder rungs `1..=T`; `levels[t-1]` anchors the t-step region.
    pub levels: Vec<ScreeningLevel>,
}

impl ScreeningPath {
    /// Number of distinct proposals on the path.
    pub fn steps(&self) -> usize {
        self.policies.len()
    }
}

/// Limit of the proposer's best screening payoff as signals sharpen and
/// players become patient:
/// `mu(h) max(y_q^l, min(y_q^h, y_i^h - y_q^l)) + mu(l) y_q^l`.
pub fn screening_limit_value(params: &ModelParams, informed: usize, mu: Belief) -> f64 {
    let q = params.decisive_voter();
    let y_ql = params.reservation_low[q];
    let top = y_ql.max(params.reservation_high[q].min(params.reservation_high[informed] - y_ql));
    mu.prob_high() * top + (1.0 - mu.prob_high()) * y_ql
}

/// Mixing probability that drains the public belief from `mu` to `target`
/// after an informative rejection by a voter with precision `tau`.
///
/// Solves `target = mu(1 - tau phi) / (mu(1 - tau phi) + (1-mu)(1-(1-tau)phi))`.
pub fn acceptance_prob(mu: Belief, target: Belief, tau: f64) -> Result<f64, ScreeningError> {
    let phi = drain_phi(mu, target, tau);
    if phi > 1.0 + 1e-9 || phi <= 0.0 || !phi.is_finite() {
        return Err(ScreeningError::InfeasibleAcceptance {
            phi,
            from: mu.prob_high(),
            to: target.prob_high(),
        });
    }
    Ok(phi.min(1.0))
}

fn drain_phi(mu: Belief, target: Belief, tau: f64) -> f64 {
    let (m, t) = (mu.prob_high(), target.prob_high());
    let num = (1.0 - t) * m - t * (1.0 - m);
    let den = (1.0 - t) * m * tau - t * (1.0 - m) * (1.0 - tau);
    num / den
}

/// Largest policy at which a voter with posterior `posterior_high` over the
/// reservation pair `(y_low, y_high)` weakly prefers accepting now to one
/// period of status quo followed by the continuation worth `cont = [low,
/// high]` (normalized, state-conditional):
///
/// `E[u(p)] >= (1 - d) E[u(0)] + d E[cont]`.
///
/// Expected utility is single-peaked, so the acceptance set is an interval;
/// its right endpoint is located by bisection. `None` when even the peak
/// falls short.
pub fn largest_acceptable_policy(
    y_low: f64,
    y_high: f64,
    posterior_high: f64,
    discount: f64,
    cont: [f64; 2],
    policy_cap: f64,
    tol: f64,
) -> Option<f64> {
    let u = |p: f64| {
        posterior_high * -(y_high / 2.0 - p) * (y_high / 2.0 - p)
            + (1.0 - posterior_high) * -(y_low / 2.0 - p) * (y_low / 2.0 - p)
    };
    let rhs = (1.0 - discount) * u(0.0)
        + discount * (posterior_high * cont[1] + (1.0 - posterior_high) * cont[0]);
    let peak = (posterior_high * y_high / 2.0 + (1.0 - posterior_high) * y_low / 2.0).min(policy_cap);
    if u(peak) < rhs {
        return None;
    }
    if u(policy_cap) >= rhs {
        return Some(policy_cap);
    }
    let (mut lo, mut hi) = (peak, policy_cap);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if u(mid) >= rhs {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

struct LadderBuilder<'a> {
    params: &'a ModelParams,
    informed: usize,
    opts: ScreeningOptions,
}

impl LadderBuilder<'_> {
    fn voter_u(&self, policy: f64) -> [f64; 2] {
        [
            self.params.voter_utility(self.informed, policy, State::Low),
            self.params.voter_utility(self.informed, policy, State::High),
        ]
    }

    /// No-screening proposal at a belief: the largest policy the decisive
    /// voter accepts even on a low signal, hence passed by voters `1..=q`
    /// under every signal profile.
    fn sure_policy(&self, mu: Belief) -> f64 {
        self.params.reservation_policy(self.params.decisive_voter(), Signal::Low, mu)
    }

    /// Belief below which no screen is worth a period of delay: winning the
    /// whole cap with probability `mu` still loses to the sure offer,
    /// `mu * cap + (1 - mu) d y_q^l <= y_q^l`.
    fn pessimism_floor(&self) -> f64 {
        let y_ql = self.params.reservation_low[self.params.decisive_voter()];
        let d = self.params.discount;
        (1.0 - d) * y_ql / (self.params.policy_cap - d * y_ql)
    }

    /// Proposal and mixing rate of a screening rung at belief `mu` that
    /// drains onto `prev` upon rejection.
    fn solve_rung(
        &self,
        level: usize,
        mu: Belief,
        prev: &ScreeningLevel,
    ) -> Result<(f64, f64, bool), ScreeningError> {
        let tau = self.params.precisions[self.informed];
        let posterior = mu.update_on_signal(Signal::High, tau).prob_high();
        let root = largest_acceptable_policy(
            self.params.reservation_low[self.informed],
            self.params.reservation_high[self.informed],
            posterior,
            self.params.discount,
            prev.voter_value,
            self.params.policy_cap,
            self.opts.solver_tol,
        )
        .ok_or(ScreeningError::BracketFailure {
            level,
            belief: mu.prob_high(),
            target: prev.voter_value[1],
        })?;
        // Proposals above the decisive voter's high-signal cutoff are
        // rejected outright by the rest of the committee.
        let cap = self.params.reservation_policy(self.params.decisive_voter(), Signal::High, mu);
        let capped = root > cap;
        let policy = if capped { cap } else { root };
        let phi = if capped {
            // Strict preference: the high-signal voter accepts outright and
            // a rejection reveals the signal in full.
            1.0
        } else {
            acceptance_prob(mu, Belief::new(prev.cutoff), tau)?
        };
        Ok((policy, phi, capped))
    }

    fn rung_values(&self, policy: f64, phi: f64, prev: &ScreeningLevel) -> ([f64; 2], [f64; 2]) {
        let tau = self.params.precisions[self.informed];
        let d = self.params.discount;
        let u_policy = self.voter_u(policy);
        let u_base = self.voter_u(0.0);
        let mut proposer = [0.0; 2];
        let mut voter = [0.0; 2];
        for (k, state) in State::BOTH.into_iter().enumerate() {
            let accept = Signal::High.prob_given_state(state, tau) * phi;
            proposer[k] = accept * policy + (1.0 - accept) * d * prev.proposer_value[k];
            voter[k] = accept * u_policy[k]
                + (1.0 - accept) * ((1.0 - d) * u_base[k] + d * prev.voter_value[k]);
        }
        (proposer, voter)
    }

    fn base_level(&self, cutoff: f64) -> ScreeningLevel {
        let policy = self.sure_policy(Belief::new(cutoff));
        ScreeningLevel {
            cutoff,
            policy,
            capped: false,
            proposer_value: [policy, policy],
            voter_value: self.voter_u(policy),
        }
    }

    fn build(&self, mu0: Belief) -> Result<Vec<ScreeningLevel>, ScreeningError> {
        let tau = self.params.precisions[self.informed];
        let mut levels = vec![self.base_level(self.pessimism_floor())];
        while levels.last().unwrap().cutoff < mu0.prob_high() {
            if levels.len() >= self.opts.max_levels {
                return Err(ScreeningError::LadderTooDeep {
                    max_levels: self.opts.max_levels,
                    belief: mu0.prob_high(),
                });
            }
            let prev = levels.last().unwrap().clone();
            // Region top: the largest belief a single informative rejection
            // can drain onto the previous cutoff.
            let top = Belief::new(prev.cutoff).scale_odds(tau / (1.0 - tau)).prob_high().min(1.0);
            if top <= prev.cutoff {
                return Err(ScreeningError::NonMonotoneCutoffs {
                    level: levels.len() + 1,
                    prev: prev.cutoff,
                    next: top,
                });
            }
            let (policy, phi, capped) =
                self.solve_rung(levels.len() + 1, Belief::new(top), &prev)?;
            let (proposer_value, voter_value) = self.rung_values(policy, phi, &prev);
            levels.push(ScreeningLevel { cutoff: top, policy, capped, proposer_value, voter_value });
        }
        Ok(levels)
    }
}

/// Builds the belief ladder and reads off the path from the prior `mu0`,
/// with `informed` (0-based, at most the decisive voter) as the sole
/// belief-moving voter.
pub fn screening_sequence(
    params: &ModelParams,
    informed: usize,
    mu0: Belief,
    opts: ScreeningOptions,
) -> Result<ScreeningPath, ScreeningError> {
    params.validate()?;
    if informed >= params.quota {
        return Err(ScreeningError::InformedVoterOutOfRange { voter: informed, quota: params.quota });
    }
    let builder = LadderBuilder { params, informed, opts };
    let levels = builder.build(mu0)?;
    let steps = levels
        .iter()
        .position(|l| mu0.prob_high() <= l.cutoff)
        .map_or(levels.len(), |t| t + 1);
    let mut policies: Vec<f64> = levels[..steps - 1].iter().map(|l| l.policy).collect();
    let mut accept_probs = vec![1.0; steps - 1];
    // Entry node: the prior itself, mixing down onto the cutoff below.
    if steps == 1 {
        policies.push(builder.sure_policy(mu0));
        accept_probs.push(1.0);
    } else if (mu0.prob_high() - levels[steps - 1].cutoff).abs() < 1e-12 {
        policies.push(levels[steps - 1].policy);
        accept_probs.push(1.0);
    } else {
        let (policy, phi, _) = builder.solve_rung(steps, mu0, &levels[steps - 2])?;
        policies.push(policy);
        accept_probs.push(phi);
    }
    for t in 1..steps {
        if policies[t] < policies[t - 1] - 1e-12 {
            return Err(ScreeningError::NonMonotoneCutoffs {
                level: t + 1,
                prev: policies[t - 1],
                next: policies[t],
            });
        }
    }
    Ok(ScreeningPath {
        informed_voter: informed,
        initial_belief: mu0.prob_high(),
        policies,
        cutoffs: levels[..steps].iter().map(|l| l.cutoff).collect(),
        accept_probs,
        levels: levels[..steps].to_vec(),
    })
}

/// Stationary Markov profile implementing a screening ladder.
pub struct ScreeningProfile {
    params: ModelParams,
    informed: usize,
    levels: Vec<ScreeningLevel>,
    opts: ScreeningOptions,
    nodes: RefCell<HashMap<u64, (f64, f64, usize)>>,
}

/// Assembles the profile behind a constructed path: the proposer offers the
/// region rung at the current belief, the informed voter plays the
/// three-branch high-signal rule with the drain mixing and a low-signal
/// cutoff at the sure offer, and the rest of the committee uses the
/// uninformative cutoffs that keep her pivotal.
pub fn build_screening_profile(params: &ModelParams, path: &ScreeningPath) -> ScreeningProfile {
    ScreeningProfile {
        params: params.clone(),
        informed: path.informed_voter,
        levels: path.levels.clone(),
        opts: ScreeningOptions::default(),
        nodes: RefCell::new(HashMap::new()),
    }
}

impl ScreeningProfile {
    /// 1-based region index of a belief.
    fn region(&self, mu: Belief) -> usize {
        let m = mu.prob_high();
        self.levels
            .iter()
            .position(|l| m <= l.cutoff + 1e-12)
            .map_or(self.levels.len(), |t| t + 1)
    }

    /// `(proposal, high-signal mixing rate, region)` at a belief.
    fn node(&self, mu: Belief) -> (f64, f64, usize) {
        if let Some(&cached) = self.nodes.borrow().get(&mu.prob_high().to_bits()) {
            return cached;
        }
        let builder =
            LadderBuilder { params: &self.params, informed: self.informed, opts: self.opts };
        let region = self.region(mu);
        let out = if region == 1 {
            (builder.sure_policy(mu), 1.0, 1)
        } else if (mu.prob_high() - self.levels[region - 1].cutoff).abs() < 1e-12 {
            // Ladder anchors (where on-path drains land) reuse the stored rung.
            (self.levels[region - 1].policy, 1.0, region)
        } else {
            match builder.solve_rung(region, mu, &self.levels[region - 2]) {
                Ok((policy, phi, _)) => (policy, phi, region),
                // Defensive fallback for degenerate off-ladder queries.
                Err(_) => (builder.sure_policy(mu), 1.0, 1),
            }
        };
        self.nodes.borrow_mut().insert(mu.prob_high().to_bits(), out);
        out
    }
}

impl Profile for ScreeningProfile {
    fn propose(&self, mu: Belief) -> Vec<(f64, f64)> {
        vec![(self.node(mu).0, 1.0)]
    }

    fn acceptance(&self, voter: usize, signal: Signal, mu: Belief, policy: f64) -> f64 {
        let q = self.params.decisive_voter();
        if voter != self.informed {
            let cutoff = if voter <= q {
                self.params.reservation_policy(q, Signal::High, mu)
            } else {
                self.params.reservation_policy(voter, Signal::Low, mu)
            };
            return if policy <= cutoff { 1.0 } else { 0.0 };
        }
        let sure = self.params.reservation_policy(q, Signal::Low, mu);
        if signal == Signal::Low {
            return if policy <= sure { 1.0 } else { 0.0 };
        }
        let (rung, phi, region) = self.node(mu);
        if region == 1 {
            return if policy <= sure { 1.0 } else { 0.0 };
        }
        let next_rung = self.levels[region - 2].policy;
        if policy <= next_rung {
            1.0
        } else if policy <= rung + 1e-12 {
            phi
        } else {
            0.0
        }
    }
}

//! Solvers and exact simulation for dynamic agenda-setting games with
//! committee voting.
//!
//! A proposer repeatedly offers a spatial policy in `[0, M]` to `N` voters
//! under a q-majority rule. Voters hold private binary signals about a
//! common state and everyone shares a public belief updated from voting
//! records. The crate builds the two equilibrium constructions (pooling
//! under equal signal precision and screening under one dominant signal),
//! the complete-information and take-it-or-leave-it benchmarks, exact
//! induced outcome distributions with Monte Carlo cross-checks, and the
//! closed-form limit comparative statics.

pub mod analysis;
pub mod belief;
pub mod benchmarks;
pub mod engine;
pub mod model;
pub mod poisson;
pub mod pooling;
pub mod screening;

pub use belief::Belief;
pub use model::{ModelParams, Outcome, Player, Signal, State};

/// Shared fixtures and brute-force oracles for the test suites.
#[doc(hidden)]
pub mod test_support {
    use crate::belief::{Belief, VoteProfile};
    use crate::engine::Profile;
    use crate::model::{ModelParams, Signal, State};

    /// The running example committee: N = 3, q = 2, even prior.
    pub fn canonical_params() -> ModelParams {
        ModelParams {
            n_voters: 3,
            quota: 2,
            policy_cap: 10.0,
            discount: 0.9,
            precisions: vec![0.9, 0.9, 0.9],
            reservation_low: vec![2.0, 1.0, 0.5],
            reservation_high: vec![3.0, 2.8, 2.2],
            prior_high: 0.5,
        }
    }

    /// Poisson binomial pmf by explicit enumeration over all 2^N outcomes.
    pub fn enumerate_pmf(z: &[f64], r: usize) -> f64 {
        let n = z.len();
        let mut total = 0.0;
        for mask in 0..(1usize << n) {
            if (mask.count_ones() as usize) != r {
                continue;
            }
            let mut prob = 1.0;
            for (i, &zi) in z.iter().enumerate() {
                prob *= if mask >> i & 1 == 1 { zi } else { 1.0 - zi };
            }
            total += prob;
        }
        total
    }

    /// Posterior public belief by brute force: enumerate every signal
    /// profile and weight the vote record's likelihood state by state.
    pub fn brute_force_posterior(
        params: &ModelParams,
        profile: &dyn Profile,
        mu: Belief,
        policy: f64,
        votes: &VoteProfile,
    ) -> Belief {
        let n = params.n_voters;
        let mut likelihood = [0.0f64; 2];
        for (k, state) in State::BOTH.into_iter().enumerate() {
            for mask in 0..(1usize << n) {
                let mut prob = 1.0;
                for i in 0..n {
                    let signal = if mask >> i & 1 == 1 { Signal::High } else { Signal::Low };
                    let alpha = profile.acceptance(i, signal, mu, policy);
                    prob *= signal.prob_given_state(state, params.precisions[i]);
                    prob *= if votes.0[i] { alpha } else { 1.0 - alpha };
                }
                likelihood[k] += prob;
            }
        }
        let num = mu.prob_high() * likelihood[1];
        let den = num + (1.0 - mu.prob_high()) * likelihood[0];
        if den < crate::belief::ZERO_LIKELIHOOD {
            return mu;
        }
        Belief::new(num / den)
    }
}

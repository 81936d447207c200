//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them on success). Every
//! tolerance is pinned here.

use std::time::Instant;

use agenda_core::analysis::{
    classify_regime, quota_comparison, revision_value, PreferredQuota, RegimeKind,
    RevisionVerdict,
};
use agenda_core::belief::{public_update, VoteProfile};
use agenda_core::benchmarks::{complete_info_value, tioli_limit_value, tioli_value};
use agenda_core::engine::{
    deviation_gain, expected_payoffs, induced_distribution, simulate, EnumerationOptions, Profile,
};
use agenda_core::pooling::{self, PoolingOptions};
use agenda_core::screening::{
    build_screening_profile, largest_acceptable_policy, screening_sequence, screening_limit_value,
    ScreeningOptions, ScreeningPath,
};
use agenda_core::test_support::{canonical_params, enumerate_pmf};
use agenda_core::{poisson, Belief, ModelParams, Signal, State};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tight() -> EnumerationOptions {
    EnumerationOptions { max_periods: 400, residual_tol: 1e-14 }
}

fn exact_value(params: &ModelParams, profile: &dyn Profile, mu: Belief) -> f64 {
    let low = induced_distribution(params, profile, mu, State::Low, tight()).unwrap();
    let high = induced_distribution(params, profile, mu, State::High, tight()).unwrap();
    expected_payoffs(params, &low, &high, mu).proposer
}

fn sharpened(params: &ModelParams, tau: f64, delta: f64) -> ModelParams {
    let mut p = params.clone();
    p.precisions = vec![tau; p.n_voters];
    p.discount = delta;
    p
}

struct Criterion {
    id: u32,
    start: Instant,
}

impl Criterion {
    fn new(id: u32) -> Self {
        Criterion { id, start: Instant::now() }
    }

    fn pass(self, summary: &str, budget_secs: f64) {
        let elapsed = self.start.elapsed().as_secs_f64();
        println!("acceptance criterion {}: PASS — {summary} ({elapsed:.2}s)", self.id);
        assert!(
            elapsed < budget_secs,
            "criterion {} exceeded its {budget_secs}s budget: {elapsed:.2}s",
            self.id
        );
    }

    fn fail(&self, detail: &str) -> ! {
        println!("acceptance criterion {}: FAIL — {detail}", self.id);
        panic!("acceptance criterion {} failed: {detail}", self.id);
    }
}

#[test]
fn criterion_1_poisson_binomial_exactness() {
    let c = Criterion::new(1);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for trial in 0..1000 {
        let n = rng.gen_range(1..=10);
        let z: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let table = poisson::pmf_table(&z).unwrap();
        for (r, &p) in table.iter().enumerate() {
            let expect = enumerate_pmf(&z, r);
            if (p - expect).abs() >= 1e-12 {
                c.fail(&format!("trial {trial}: pmf({r}) = {p} vs enumeration {expect}"));
            }
        }
        let modes = poisson::modes(&z).unwrap();
        if modes.is_empty() || modes.len() > 2 {
            c.fail(&format!("trial {trial}: {} modes", modes.len()));
        }
        if modes.len() == 2 && modes[1] != modes[0] + 1 {
            c.fail(&format!("trial {trial}: non-consecutive modes {modes:?}"));
        }
        let mean: f64 = z.iter().sum();
        let frac = mean - mean.floor();
        let lo = 1.0 / (n as f64 + 1.0);
        let hi = n as f64 / (n as f64 + 1.0);
        let floor = mean.floor() as usize;
        // Mode classification by the fractional part, away from boundaries.
        let ok = if frac > 1e-9 && frac < lo - 1e-9 {
            modes == vec![floor]
        } else if frac > hi + 1e-9 && frac < 1.0 - 1e-9 {
            modes == vec![floor + 1]
        } else if frac > lo + 1e-9 && frac < hi - 1e-9 {
            modes.iter().all(|&m| m == floor || m == floor + 1)
        } else {
            true
        };
        if !ok {
            c.fail(&format!("trial {trial}: modes {modes:?} off classification, mean {mean}"));
        }
    }
    c.pass("1000 random committees, pmf within 1e-12 of enumeration, modes classified", 10.0);
}

#[test]
fn criterion_2_ranking_facts_never_fail() {
    let c = Criterion::new(2);
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut produced = 0usize;
    let mut triggered = 0usize;
    while produced < 10_000 {
        let n = rng.gen_range(1..=10);
        let quota = rng.gen_range(1..=n);
        let eps = rng.gen::<f64>() / (n as f64 + 1.0);
        if eps == 0.0 {
            continue;
        }
        let mut z: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let mut z_prime: Vec<f64> =
            z.iter().map(|&v| v + (1.0 - v) * rng.gen::<f64>()).collect();
        // Push half the instances into a triggering region for one of the
        // two sum hypotheses.
        match produced % 2 {
            0 => {
                let sum: f64 = z.iter().sum();
                let target = quota as f64 - eps / 2.0;
                if sum < target && n as f64 > sum {
                    let scale = ((target - sum) / (n as f64 - sum)).clamp(0.0, 1.0);
                    for v in z.iter_mut() {
                        *v += (1.0 - *v) * scale;
                    }
                    z_prime = z
                        .iter()
                        .map(|&v| v + (1.0 - v) * rng.gen::<f64>())
                        .collect();
                }
            }
            _ => {
                let sum: f64 = z_prime.iter().sum();
                let target = quota as f64 - 1.0 + eps / 2.0;
                if sum > target && sum > 0.0 {
                    let scale = target / sum;
                    for v in z_prime.iter_mut() {
                        *v *= scale;
                    }
                    for (a, b) in z.iter_mut().zip(&z_prime) {
                        *a = a.min(*b);
                    }
                }
            }
        }
        produced += 1;
        match poisson::verify_ranking(&z, &z_prime, quota, eps) {
            Ok(check) => {
                if check.lower_tail.is_some() || check.upper_tail.is_some() {
                    triggered += 1;
                }
                if !check.holds() {
                    c.fail(&format!(
                        "instance {produced}: {check:?} for z {z:?} z' {z_prime:?} q {quota} eps {eps}"
                    ));
                }
            }
            Err(e) => c.fail(&format!("instance {produced} rejected: {e}")),
        }
    }
    c.pass(
        &format!("10000 ordered instances, {triggered} with a triggered hypothesis, zero failures"),
        10.0,
    );
}

#[test]
fn criterion_3_one_shot_benchmark_converges() {
    let c = Criterion::new(3);
    let base = canonical_params();
    let mu = Belief::new(0.5);
    let limit = tioli_limit_value(&base, mu);
    assert_eq!(limit, 1.4);
    let mut last_gap = f64::INFINITY;
    let mut trail = String::new();
    for tau in [0.9, 0.99, 0.999, 0.9999] {
        let params = sharpened(&base, tau, base.discount);
        let (_, value) = tioli_value(&params, mu, 200).unwrap();
        let gap = (value - limit).abs();
        trail.push_str(&format!(" tau={tau}: gap={gap:.5}"));
        if gap > last_gap + 1e-12 {
            c.fail(&format!("gap increased along the precision grid:{trail}"));
        }
        last_gap = gap;
    }
    if last_gap >= 1e-2 {
        c.fail(&format!("final gap {last_gap} >= 1e-2:{trail}"));
    }
    c.pass(&format!("gap non-increasing,{trail}"), 60.0);
}

/// On-path nodes of a screening path, entry node first, paired with the rung
/// proposed there.
fn screening_nodes(path: &ScreeningPath) -> Vec<(Belief, f64)> {
    let steps = path.steps();
    let mut nodes = vec![(Belief::new(path.initial_belief), path.policies[steps - 1])];
    for t in (0..steps - 1).rev() {
        nodes.push((Belief::new(path.cutoffs[t]), path.policies[t]));
    }
    nodes
}

#[test]
fn criterion_4_screening_construction() {
    let c = Criterion::new(4);
    // Closed-form entry rung at delta = 0.9 with a fully revealing signal.
    let cont_high = -(1.5f64 - 1.0) * (1.5 - 1.0);
    let p2 = largest_acceptable_policy(1.0, 3.0, 1.0, 0.9, [0.0, cont_high], 10.0, 1e-13).unwrap();
    let oracle = 1.5 + 0.45f64.sqrt();
    if (p2 - oracle).abs() >= 1e-9 {
        c.fail(&format!("entry rung {p2} vs closed form {oracle}"));
    }

    let params = sharpened(&canonical_params(), 0.999, 0.999);
    let mu = params.prior();
    let path = screening_sequence(&params, 0, mu, ScreeningOptions::default()).unwrap();
    let profile = build_screening_profile(&params, &path);
    let value = exact_value(&params, &profile, mu);
    let target = screening_limit_value(&params, 0, mu);
    let gap = (value - target).abs() / target;
    if gap >= 0.05 {
        c.fail(&format!("profile value {value} vs {target}: relative gap {gap}"));
    }

    let nodes = screening_nodes(&path);
    let mut worst_indiff: f64 = 0.0;
    let mut worst_bayes: f64 = 0.0;
    let mut worst_gain = f64::NEG_INFINITY;
    for (k, &(node, policy)) in nodes.iter().enumerate() {
        let mixing = k + 1 < nodes.len();
        if mixing {
            // High-signal indifference against the engine's own continuation.
            let target_mu = nodes[k + 1].0;
            let post = node.update_on_signal(Signal::High, params.precisions[0]);
            let mut cont = 0.0;
            let mut base = 0.0;
            let mut accept = 0.0;
            for state in State::BOTH {
                let dist =
                    induced_distribution(&params, &profile, target_mu, state, tight()).unwrap();
                cont += post.prob(state) * dist.voter_value(&params, 0, state);
                base += post.prob(state) * params.voter_utility(0, 0.0, state);
                accept += post.prob(state) * params.voter_utility(0, policy, state);
            }
            let residual =
                accept - ((1.0 - params.discount) * base + params.discount * cont);
            worst_indiff = worst_indiff.max(residual.abs());
            // Bayes identity of the drain target.
            let votes = VoteProfile(
                (0..params.n_voters)
                    .map(|j| {
                        j != 0 && profile.acceptance(j, Signal::Low, node, policy) == 1.0
                    })
                    .collect(),
            );
            let post = public_update(&params, &profile, node, policy, &votes);
            worst_bayes = worst_bayes.max((post.prob_high() - target_mu.prob_high()).abs());
        }
        for signal in Signal::BOTH {
            for accept in [false, true] {
                let gain =
                    deviation_gain(&params, &profile, node, policy, 0, signal, accept, tight())
                        .unwrap();
                worst_gain = worst_gain.max(gain);
            }
        }
    }
    if worst_indiff >= 1e-9 {
        c.fail(&format!("indifference residual {worst_indiff}"));
    }
    if worst_bayes >= 1e-9 {
        c.fail(&format!("Bayes residual {worst_bayes}"));
    }
    if worst_gain > 1e-9 {
        c.fail(&format!("informed-voter deviation gain {worst_gain}"));
    }
    c.pass(
        &format!(
            "T={} value gap {gap:.4}, indifference {worst_indiff:.2e}, Bayes {worst_bayes:.2e}, deviations {worst_gain:.2e}",
            path.steps()
        ),
        120.0,
    );
}

fn coase_variant(tau: f64, delta: f64) -> ModelParams {
    // Anchors y_1^h = 1.8 and y_q^l = 1 with the ordering invariants intact:
    // the informed voter's high-state gain 0.8 falls short of y_q^l.
    let mut p = canonical_params();
    p.reservation_low = vec![1.2, 1.0, 0.5];
    p.reservation_high = vec![1.8, 1.7, 1.6];
    p.precisions = vec![tau; 3];
    p.discount = delta;
    p
}

#[test]
fn criterion_5_no_screening_power_collapses_the_value() {
    let c = Criterion::new(5);
    let mu = Belief::new(0.5);
    let mut trail = String::new();
    let mut final_gap = f64::INFINITY;
    for (tau, delta) in [(0.99, 0.9), (0.999, 0.99), (0.9999, 0.999)] {
        let params = coase_variant(tau, delta);
        let regime = classify_regime(&params, 0).unwrap();
        if regime.kind != RegimeKind::Coase {
            c.fail(&format!("variant classifies as {:?}", regime.kind));
        }
        let path = screening_sequence(&params, 0, mu, ScreeningOptions::default()).unwrap();
        let profile = build_screening_profile(&params, &path);
        let value = exact_value(&params, &profile, mu);
        final_gap = (value - 1.0).abs();
        trail.push_str(&format!(" ({tau},{delta}): value={value:.5}"));
    }
    if final_gap >= 0.02 {
        c.fail(&format!("final gap {final_gap}:{trail}"));
    }
    c.pass(&format!("value collapses to y_q^l = 1,{trail}"), 120.0);
}

#[test]
fn criterion_6_pooling_construction() {
    let c = Criterion::new(6);
    let params = sharpened(&canonical_params(), 0.999, 0.999);
    let mu = params.prior();
    let sol = pooling::solve_tilde_p(&params, mu, PoolingOptions::default()).unwrap();
    let profile = pooling::build_pooling_profile(&params, &sol);

    let mut worst_gain = f64::NEG_INFINITY;
    for node in [mu, Belief::new(sol.mu_tilde)] {
        for voter in 0..params.n_voters {
            for signal in Signal::BOTH {
                for accept in [false, true] {
                    let gain =
                        pooling::deviation_gain(&params, &profile, voter, signal, node, accept, tight())
                            .unwrap();
                    worst_gain = worst_gain.max(gain);
                }
            }
        }
    }
    if worst_gain > 1e-9 {
        c.fail(&format!("deviation gain {worst_gain} at the solved pooled policy"));
    }

    let value = exact_value(&params, &profile, mu);
    let complete = complete_info_value(&params, mu);
    let policy_gap = (sol.tilde_p - params.reservation_high[1]).abs() / params.reservation_high[1];
    let value_gap = (value - complete).abs() / complete;
    if policy_gap >= 0.02 || value_gap >= 0.02 {
        // The no-deviation system itself caps the pooled policy on the
        // tau = delta diagonal: at p near y_q^h the decisive voter's pivotal
        // stake vanishes while the double-rejection upside stays at the
        // (1 - tau) scale, so the binding constraint sits at the equal-rates
        // root ~2.4296 and the proximity targets are unreachable without
        // violating the deviation bound. Sharpening signals faster than
        // patience (e.g. tau = 0.99999 at delta = 0.999) meets both 2%
        // targets; see the pooling tests and the project notes.
        c.fail(&format!(
            "tilde_p {:.4} ({policy_gap:.3} from y_q^h) and value {value:.4} ({value_gap:.3} from {complete}); deviations {worst_gain:.2e} <= 1e-9 held, the proximity targets did not",
            sol.tilde_p
        ));
    }
    c.pass(
        &format!("tilde_p gap {policy_gap:.4}, value gap {value_gap:.4}, deviations {worst_gain:.2e}"),
        120.0,
    );
}

#[test]
fn criterion_7_monte_carlo_consistency() {
    let c = Criterion::new(7);
    let params = sharpened(&canonical_params(), 0.999, 0.999);
    let mu = params.prior();
    let mut summaries = Vec::new();

    let path = screening_sequence(&params, 0, mu, ScreeningOptions::default()).unwrap();
    let screening_profile = build_screening_profile(&params, &path);
    let pool = pooling::solve_tilde_p(&params, mu, PoolingOptions::default()).unwrap();
    let pooling_profile = pooling::build_pooling_profile(&params, &pool);
    let profiles: [(&str, &dyn Profile); 2] =
        [("screening", &screening_profile), ("pooling", &pooling_profile)];
    for (name, profile) in profiles {
        let exact = exact_value(&params, profile, mu);
        let report = simulate(&params, profile, 42, 100_000, 200);
        let z = (report.mean_proposer - exact) / report.stderr_proposer;
        if z.abs() >= 3.0 {
            c.fail(&format!(
                "{name}: empirical {} vs exact {exact}, z = {z:.2}",
                report.mean_proposer
            ));
        }
        let rerun = simulate(&params, profile, 42, 100_000, 200);
        if rerun.mean_proposer.to_bits() != report.mean_proposer.to_bits()
            || rerun.mean_voters != report.mean_voters
        {
            c.fail(&format!("{name}: rerun with the same seed differed"));
        }
        summaries.push(format!("{name}: z={z:+.2}"));
    }
    c.pass(&format!("100000 episodes, bit-identical reruns, {}", summaries.join(", ")), 120.0);
}

#[test]
fn criterion_8_comparative_statics() {
    let c = Criterion::new(8);
    let params = canonical_params();

    // Raised-quota example: informed voter 1 (0-based 0), q = 2 -> 3.
    let cmp = quota_comparison(&params, 3, 0, Belief::new(0.8)).unwrap();
    if (cmp.value_current - 1.8).abs() >= 1e-12 || (cmp.value_raised - 1.86).abs() >= 1e-12 {
        c.fail(&format!("quota values {} / {}", cmp.value_current, cmp.value_raised));
    }
    if cmp.preferred != PreferredQuota::Raised {
        c.fail("raised quota should win at mu = 0.8");
    }
    let threshold = cmp.threshold.unwrap();
    if (threshold - 0.5 / 0.7).abs() >= 1e-12 {
        c.fail(&format!("threshold {threshold} vs 0.5/0.7"));
    }
    let cmp = quota_comparison(&params, 3, 0, Belief::new(0.5)).unwrap();
    if cmp.preferred != PreferredQuota::Current {
        c.fail("current quota should win at mu = 0.5");
    }
    // Direct value comparison agrees with the threshold formula on a grid.
    for k in 0..=100 {
        let mu = 0.005 + 0.99 * k as f64 / 100.0;
        let cmp = quota_comparison(&params, 3, 0, Belief::new(mu)).unwrap();
        let by_threshold = if mu > threshold + 1e-12 {
            PreferredQuota::Raised
        } else if mu < threshold - 1e-12 {
            PreferredQuota::Current
        } else {
            PreferredQuota::Indifferent
        };
        if cmp.preferred != by_threshold {
            c.fail(&format!("threshold disagreement at mu = {mu}"));
        }
    }

    // Revision verdict flips exactly at mu = 1/1.8.
    let flip = 1.0 / 1.8;
    let below = revision_value(&params, Some(0), Belief::new(flip - 1e-6)).unwrap();
    let above = revision_value(&params, Some(0), Belief::new(flip + 1e-6)).unwrap();
    let at = revision_value(&params, Some(0), Belief::new(flip)).unwrap();
    if below.verdict != RevisionVerdict::Valuable || above.verdict != RevisionVerdict::Harmful {
        c.fail(&format!("revision verdicts {:?} / {:?}", below.verdict, above.verdict));
    }
    if (at.with_revisions - at.without_revisions).abs() >= 1e-12 {
        c.fail("values unequal at the flip belief");
    }

    // Region sweep over the informed voter's high reservation.
    let mut point = params.clone();
    let mut y = 1.05;
    while y <= 5.0 {
        point.reservation_high[0] = y;
        let regime = classify_regime(&point, 0).unwrap();
        let gap = y - 1.0;
        let expect = if gap >= 2.8 {
            RegimeKind::FullExtraction
        } else if gap <= 1.0 {
            RegimeKind::Coase
        } else {
            RegimeKind::PartialScreening
        };
        if regime.kind != expect {
            c.fail(&format!("y_i^h = {y}: {:?} vs {:?}", regime.kind, expect));
        }
        let p_star = 1.0f64.max(2.8f64.min(gap));
        if (regime.state_high_limit_policy - p_star).abs() >= 1e-12 {
            c.fail(&format!("y_i^h = {y}: p** {}", regime.state_high_limit_policy));
        }
        y += 0.01;
    }
    c.pass("quota example, revision flip at 1/1.8, and the regime sweep all consistent", 10.0);
}

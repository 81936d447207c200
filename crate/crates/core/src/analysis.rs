//! Closed-form limit analysis: regime classification, the proposer's limit
//! value, quota comparative statics, and the value of proposal revisions.
//!
//! Everything here is exact arithmetic on the model primitives in the sharp
//! signal and patience limit; nothing calls the finite solvers. The gap
//! `y_i^h - y_q^l` between the informed voter's high reservation and the
//! decisive voter's low reservation decides how much surplus screening can
//! extract in the high state.

use serde::Serialize;
use thiserror::Error;

use crate::belief::Belief;
use crate::model::{ModelError, ModelParams, State};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("informed voter {voter} must satisfy voter <= quota {quota} (0-based)")]
    InformedVoterOutOfRange { voter: usize, quota: usize },
    #[error("raised quota {0} must exceed the current quota {1} and stay within the committee")]
    BadQuotaPair(usize, usize),
    #[error("quota statics require the partial-screening regime at the current quota, found {0:?}")]
    RegimeMismatch(RegimeKind),
    #[error("quota statics require strictly ordered reservation policies")]
    TiedReservations,
}

/// How much screening power the proposer retains in the limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RegimeKind {
    /// `y_i^h - y_q^l >= y_q^h`: the complete-information benchmark is attained.
    FullExtraction,
    /// `y_q^l < y_i^h - y_q^l < y_q^h`: some high-state surplus is extracted.
    PartialScreening,
    /// `y_i^h - y_q^l <= y_q^l`: no screening power; the value collapses to `y_q^l`.
    Coase,
}

/// Classified regime with the limit high-state policy `p**`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Regime {
    pub kind: RegimeKind,
    pub informed_voter: usize,
    /// Limit policy implemented in the high state:
    /// `max(y_q^l, min(y_q^h, y_i^h - y_q^l))`.
    pub state_high_limit_policy: f64,
    /// Set when the classifying comparison is an exact tie.
    pub boundary: bool,
}

/// Classifies the screening regime for an informed voter `i <= q` (0-based).
pub fn classify_regime(params: &ModelParams, informed: usize) -> Result<Regime, AnalysisError> {
    if informed >= params.quota {
        return Err(AnalysisError::InformedVoterOutOfRange {
            voter: informed,
            quota: params.quota,
        });
    }
    let q = params.decisive_voter();
    let gap = params.reservation_high[informed] - params.reservation_low[q];
    let (y_ql, y_qh) = (params.reservation_low[q], params.reservation_high[q]);
    let kind = if gap >= y_qh {
        RegimeKind::FullExtraction
    } else if gap <= y_ql {
        RegimeKind::Coase
    } else {
        RegimeKind::PartialScreening
    };
    Ok(Regime {
        kind,
        informed_voter: informed,
        state_high_limit_policy: y_ql.max(y_qh.min(gap)),
        boundary: gap == y_qh || gap == y_ql,
    })
}

/// Proposer's limit value `y_q^l + mu(h) (p** - y_q^l)`.
pub fn setter_limit_value(params: &ModelParams, regime: &Regime, mu: Belief) -> f64 {
    let y_ql = params.reservation_low[params.decisive_voter()];
    y_ql + mu.prob_high() * (regime.state_high_limit_policy - y_ql)
}

/// Which quota the proposer prefers at a given prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PreferredQuota {
    Current,
    Raised,
    Indifferent,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuotaComparison {
    pub value_current: f64,
    pub value_raised: f64,
    pub preferred: PreferredQuota,
    /// Prior above which the raised quota is strictly better; `None` when the
    /// threshold expression degenerates and the raise never pays below
    /// certainty.
    pub threshold: Option<f64>,
}

/// Compares the proposer's limit value under the current quota against a
/// raised quota `q~ > q`, holding the informed voter fixed. Requires the
/// partial-screening regime at the current quota and strictly ordered
/// reservations.
///
/// The raise lowers the anticipated fallback from `y_q^l` to `y_q~^l`, which
/// a single-peaked high-state voter dislikes, so the screening policy rises;
/// it pays when the prior puts enough weight on the high state: above `1/2`
/// when the raised-quota regime still screens partially, above
/// `(y_q^l - y_q~^l) / (2 y_q^l + y_q~^h - y_i^h - y_q~^l)` when it extracts
/// fully.
pub fn quota_comparison(
    params: &ModelParams,
    raised_quota: usize,
    informed: usize,
    mu: Belief,
) -> Result<QuotaComparison, AnalysisError> {
    if raised_quota <= params.quota || raised_quota > params.n_voters {
        return Err(AnalysisError::BadQuotaPair(raised_quota, params.quota));
    }
    for state in State::BOTH {
        let ys = params.reservations(state);
        if (1..params.n_voters).any(|i| ys[i] == ys[i - 1]) {
            return Err(AnalysisError::TiedReservations);
        }
    }
    let current = classify_regime(params, informed)?;
    if current.kind != RegimeKind::PartialScreening {
        return Err(AnalysisError::RegimeMismatch(current.kind));
    }
    let mut raised_params = params.clone();
    raised_params.quota = raised_quota;
    let raised = classify_regime(&raised_params, informed)?;
    let value_current = setter_limit_value(params, &current, mu);
    let value_raised = setter_limit_value(&raised_params, &raised, mu);
    let (y_ql, y_ih) = (params.reservation_low[params.decisive_voter()], params.reservation_high[informed]);
    let (yt_ql, yt_qh) = (
        raised_params.reservation_low[raised_quota - 1],
        raised_params.reservation_high[raised_quota - 1],
    );
    let threshold = if y_ih - yt_ql <= yt_qh {
        Some(0.5)
    } else {
        let denom = 2.0 * y_ql + yt_qh - y_ih - yt_ql;
        if denom > 0.0 {
            Some((y_ql - yt_ql) / denom)
        } else {
            None
        }
    };
    let preferred = if value_raised > value_current + 1e-12 {
        PreferredQuota::Raised
    } else if value_current > value_raised + 1e-12 {
        PreferredQuota::Current
    } else {
        PreferredQuota::Indifferent
    };
    Ok(QuotaComparison { value_current, value_raised, preferred, threshold })
}

/// Verdict on the proposer's ability to revise rejected proposals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RevisionVerdict {
    Valuable,
    Harmful,
    Equal,
}

#[derive(Debug, Clone, Serialize)]
pub struct RevisionComparison {
    /// Limit value with revisions.
    pub with_revisions: f64,
    /// Take-it-or-leave-it limit value `y_q^l + max(0, mu(h) y_q^h - y_q^l)`.
    pub without_revisions: f64,
    pub verdict: RevisionVerdict,
    /// Prior at which the verdict flips in the partial-screening regime.
    pub threshold: Option<f64>,
}

/// Compares the proposer's limit value with and without the ability to make
/// revised proposals. `informed = None` selects the equal-precision regime,
/// where pooling attains the complete-information benchmark (`p** = y_q^h`).
pub fn revision_value(
    params: &ModelParams,
    informed: Option<usize>,
    mu: Belief,
) -> Result<RevisionComparison, AnalysisError> {
    let q = params.decisive_voter();
    let (y_ql, y_qh) = (params.reservation_low[q], params.reservation_high[q]);
    let regime = match informed {
        Some(i) => classify_regime(params, i)?,
        None => Regime {
            kind: RegimeKind::FullExtraction,
            informed_voter: q,
            state_high_limit_policy: y_qh,
            boundary: false,
        },
    };
    let with_revisions = setter_limit_value(params, &regime, mu);
    let without_revisions = y_ql + (mu.prob_high() * y_qh - y_ql).max(0.0);
    let diff = with_revisions - without_revisions;
    let verdict = if diff > 1e-12 {
        RevisionVerdict::Valuable
    } else if diff < -1e-12 {
        RevisionVerdict::Harmful
    } else {
        RevisionVerdict::Equal
    };
    // In the partial regime the comparison flips at
    // mu = y_q^l / (2 y_q^l - y_i^h + y_q^h); the Coase regime flips at the
    // take-it-or-leave-it kink y_q^l / y_q^h.
    let threshold = match regime.kind {
        RegimeKind::PartialScreening => {
            let denom = 2.0 * y_ql - regime.state_high_limit_policy - y_ql + y_qh;
            Some(y_ql / denom)
        }
        RegimeKind::Coase => Some(y_ql / y_qh),
        RegimeKind::FullExtraction => None,
    };
    Ok(RevisionComparison { with_revisions, without_revisions, verdict, threshold })
}

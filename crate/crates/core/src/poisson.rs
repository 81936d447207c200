//! Exact Poisson binomial distribution: the vote count among independent,
//! non-identical Bernoulli voters.
//!
//! The pmf is computed by the add-one-voter dynamic program, O(N^2) for the
//! full table. Committee sizes are small, so no transform methods. The mode
//! and ranking facts from the classical characterization are exposed as
//! checkable predicates; equilibrium code uses them as sanity assertions and
//! the test suite exercises them against brute-force enumeration.

use thiserror::Error;

/// Comparisons of pmf values treat differences below this as ties.
pub const PMF_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoissonError {
    #[error("success probability {0} outside [0,1]")]
    ProbabilityOutOfRange(f64),
    #[error("count {count} out of range 0..={n}")]
    CountOutOfRange { count: usize, n: usize },
    #[error("vectors have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("z must be pointwise below z' (violated at index {0})")]
    NotPointwiseOrdered(usize),
    #[error("epsilon {eps} outside (0, 1/(N+1)) for N = {n}")]
    EpsilonOutOfRange { eps: f64, n: usize },
    #[error("quota {quota} out of range 1..={n}")]
    QuotaOutOfRange { quota: usize, n: usize },
}

fn check_probs(z: &[f64]) -> Result<(), PoissonError> {
    for &p in z {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(PoissonError::ProbabilityOutOfRange(p));
        }
    }
    Ok(())
}

/// Full pmf table over success counts `0..=N` for success probabilities `z`.
pub fn pmf_table(z: &[f64]) -> Result<Vec<f64>, PoissonError> {
    check_probs(z)?;
    let mut table = vec![0.0; z.len() + 1];
    table[0] = 1.0;
    for (i, &p) in z.iter().enumerate() {
        // After voter i joins, counts up to i+1 are reachable; sweep from the
        // top so each entry still holds the previous voter's value.
        for r in (0..=i + 1).rev() {
            let stay = if r <= i { (1.0 - p) * table[r] } else { 0.0 };
            let step = if r > 0 { p * table[r - 1] } else { 0.0 };
            table[r] = stay + step;
        }
    }
    Ok(table)
}

/// `f(r | z)`: probability that exactly `r` of the trials succeed.
pub fn pmf(z: &[f64], r: usize) -> Result<f64, PoissonError> {
    if r > z.len() {
        return Err(PoissonError::CountOutOfRange { count: r, n: z.len() });
    }
    Ok(pmf_table(z)?[r])
}

/// Argmax set of the pmf. Ties within [`PMF_TOLERANCE`] count as joint modes;
/// the classical characterization guarantees at most two, consecutive.
pub fn modes(z: &[f64]) -> Result<Vec<usize>, PoissonError> {
    let table = pmf_table(z)?;
    let best = table.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((0..table.len()).filter(|&r| table[r] >= best - PMF_TOLERANCE).collect())
}

/// Pivotal probability of `voter`: the chance that exactly `r` of the other
/// voters accept, given their state-conditional acceptance probabilities. At
/// `r = quota - 1` the voter's ballot decides the outcome.
pub fn pivotal_prob(accept_probs: &[f64], voter: usize, r: usize) -> Result<f64, PoissonError> {
    let others: Vec<f64> = accept_probs
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != voter)
        .map(|(_, &p)| p)
        .collect();
    pmf(&others, r)
}

/// Outcome of checking the two pivotal-probability ranking conclusions on a
/// pointwise-ordered pair `z <= z'`. `None` means the corresponding sum
/// hypothesis was not triggered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankingCheck {
    /// If `sum z_i >= q - eps`: does `f(q-1 | z) >= f(q-1 | z')` hold?
    pub lower_tail: Option<bool>,
    /// If `sum z'_i <= q - 1 + eps`: does `f(q | z) <= f(q | z')` hold?
    pub upper_tail: Option<bool>,
}

impl RankingCheck {
    /// True when no triggered conclusion failed.
    pub fn holds(&self) -> bool {
        self.lower_tail.unwrap_or(true) && self.upper_tail.unwrap_or(true)
    }
}

/// Evaluates both ranking conclusions for `z <= z'` at quota `q`.
///
/// The conclusions are guaranteed for pointwise-ordered inputs, so a `false`
/// in the result indicates a numerical defect, not a property of the inputs.
/// Precondition violations are reported as errors, distinct from conclusion
/// failures.
pub fn verify_ranking(
    z: &[f64],
    z_prime: &[f64],
    quota: usize,
    eps: f64,
) -> Result<RankingCheck, PoissonError> {
    if z.len() != z_prime.len() {
        return Err(PoissonError::LengthMismatch(z.len(), z_prime.len()));
    }
    let n = z.len();
    check_probs(z)?;
    check_probs(z_prime)?;
    if let Some(i) = (0..n).find(|&i| z[i] > z_prime[i]) {
        return Err(PoissonError::NotPointwiseOrdered(i));
    }
    if !(eps > 0.0 && eps < 1.0 / (n as f64 + 1.0)) {
        return Err(PoissonError::EpsilonOutOfRange { eps, n });
    }
    if quota == 0 || quota > n {
        return Err(PoissonError::QuotaOutOfRange { quota, n });
    }
    let table_z = pmf_table(z)?;
    let table_zp = pmf_table(z_prime)?;
    let sum_z: f64 = z.iter().sum();
    let sum_zp: f64 = z_prime.iter().sum();
    let lower_tail = (sum_z >= quota as f64 - eps)
        .then(|| table_z[quota - 1] >= table_zp[quota - 1] - PMF_TOLERANCE);
    let upper_tail =
        (sum_zp <= quota as f64 - 1.0 + eps).then(|| table_z[quota] <= table_zp[quota] + PMF_TOLERANCE);
    Ok(RankingCheck { lower_tail, upper_tail })
}

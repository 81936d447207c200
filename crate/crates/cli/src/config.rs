//! Scenario configuration: TOML with `model`, `task`, `grid`, `output`, and
//! `tolerances` sections. Unknown keys are rejected.

use agenda_core::ModelParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelSection,
    pub task: TaskSection,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub tolerances: ToleranceSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Committee size; defaults to the reservation vector length.
    #[serde(default)]
    pub n_voters: Option<usize>,
    pub quota: usize,
    pub policy_cap: f64,
    pub discount: f64,
    pub precisions: Vec<f64>,
    pub reservation_low: Vec<f64>,
    pub reservation_high: Vec<f64>,
    pub prior_high: f64,
}

impl ModelSection {
    pub fn to_params(&self) -> ModelParams {
        ModelParams {
            n_voters: self.n_voters.unwrap_or(self.reservation_low.len()),
            quota: self.quota,
            policy_cap: self.policy_cap,
            discount: self.discount,
            precisions: self.precisions.clone(),
            reservation_low: self.reservation_low.clone(),
            reservation_high: self.reservation_high.clone(),
            prior_high: self.prior_high,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Benchmark,
    Screening,
    Pooling,
    Analysis,
    Simulate,
    Verify,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub kind: TaskKind,
    /// 1-based index of the voter with the dominant signal (screening,
    /// analysis). Defaults to the decisive voter.
    #[serde(default)]
    pub informed_voter: Option<usize>,
    /// Profile to play out under `simulate`: "screening" or "pooling".
    #[serde(default)]
    pub profile: Option<String>,
    /// Verification target under `verify`: "poisson", "ranking", or "all".
    #[serde(default)]
    pub target: Option<String>,
    /// Raised quota for the comparative statics in `analysis`.
    #[serde(default)]
    pub raised_quota: Option<usize>,
    #[serde(default)]
    pub episodes: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Swept parameter: "prior-high", "precision", "discount", or
    /// "precision-discount" (moves both together).
    pub parameter: GridParameter,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub stop: Option<f64>,
    #[serde(default)]
    pub step: Option<f64>,
    /// Worker pool size; defaults to the logical core count.
    #[serde(default)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridParameter {
    PriorHigh,
    Precision,
    Discount,
    PrecisionDiscount,
}

impl GridSection {
    pub fn points(&self) -> Result<Vec<f64>, String> {
        if let Some(values) = &self.values {
            if values.is_empty() {
                return Err("grid.values must be non-empty".into());
            }
            return Ok(values.clone());
        }
        match (self.start, self.stop, self.step) {
            (Some(start), Some(stop), Some(step)) if step > 0.0 && stop >= start => {
                let mut points = Vec::new();
                let n = ((stop - start) / step).round() as usize;
                for k in 0..=n {
                    let v = start + step * k as f64;
                    if v <= stop + 1e-12 {
                        points.push(v.min(stop));
                    }
                }
                Ok(points)
            }
            _ => Err("grid needs either values or start/stop/step".into()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory; overridden by `--out`.
    #[serde(default)]
    pub dir: Option<String>,
    /// File stem; defaults to `<task>-<unix seconds>`.
    #[serde(default)]
    pub prefix: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    /// Solver tolerance for indifference and feasibility bisection.
    pub solver: f64,
    /// Horizon of exact enumeration.
    pub max_periods: u32,
    /// Residual mass at which enumeration stops early.
    pub residual: f64,
    /// Iteration cap for best-response and ladder constructions.
    pub max_iterations: usize,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        ToleranceSection { solver: 1e-9, max_periods: 200, residual: 1e-12, max_iterations: 200 }
    }
}

pub fn parse(text: &str) -> Result<Config, toml::de::Error> {
    toml::from_str(text)
}

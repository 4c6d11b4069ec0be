//! Truncated diagonal operator `A` and noise coefficients.
//!
//! The eigenbasis is the coordinate basis: `A e_n = -gamma_n e_n`, and the
//! noise acts on mode `n` with coefficient `beta_n`.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_alpha, check_nonnegative, Error, Result};

/// Relative slack on the pointwise lower bound for `beta_n`, absorbing the
/// rounding of `powf` when the bound is attained exactly.
const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaSchedule {
    /// `beta_n = 1`.
    Cylindrical,
    /// `beta_n = gamma_n^(1/alpha - gamma)`, the lower bound attained.
    Critical,
}

impl FromStr for BetaSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cylindrical" => Ok(Self::Cylindrical),
            "critical" => Ok(Self::Critical),
            other => Err(Error::UnsupportedSchedule(other.to_string())),
        }
    }
}

/// Analytic origin of a model, used to bound the tail of the trace series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schedule {
    /// Dirichlet Laplacian on `(0, 1)`: `gamma_n = n^2 pi^2`.
    HeatDirichlet(BetaSchedule),
    /// User-supplied sequences; only partial sums are reportable.
    Custom,
}

impl Schedule {
    pub fn id(&self) -> &'static str {
        match self {
            Schedule::HeatDirichlet(BetaSchedule::Cylindrical) => "heat-dirichlet-cylindrical",
            Schedule::HeatDirichlet(BetaSchedule::Critical) => "heat-dirichlet-critical",
            Schedule::Custom => "custom",
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heat-dirichlet-cylindrical" => Ok(Self::HeatDirichlet(BetaSchedule::Cylindrical)),
            "heat-dirichlet-critical" => Ok(Self::HeatDirichlet(BetaSchedule::Critical)),
            "custom" => Ok(Self::Custom),
            other => Err(Error::UnsupportedSchedule(other.to_string())),
        }
    }
}

/// Spectrally truncated linear part and noise of the state equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralModel {
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
    pub alpha: f64,
    pub gamma_smooth: f64,
    pub c_bar: f64,
    pub schedule: Schedule,
}

fn check_gamma_smooth(alpha: f64, gamma_smooth: f64) -> Result<()> {
    if gamma_smooth >= 1.0 / alpha && gamma_smooth < 1.0 {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange {
            name: "gamma_smooth",
            value: gamma_smooth,
            bound: format!("must lie in [1/alpha, 1) = [{}, 1)", 1.0 / alpha),
        })
    }
}

/// Heat-semigroup model with `gamma_n = n^2 pi^2` and `c_bar = 1`.
pub fn make_heat_dirichlet_model(
    n_modes: usize,
    alpha: f64,
    gamma_smooth: f64,
    beta_schedule: BetaSchedule,
) -> Result<SpectralModel> {
    if n_modes == 0 {
        return Err(Error::ParameterOutOfRange {
            name: "n_modes",
            value: 0.0,
            bound: "must be >= 1".into(),
        });
    }
    check_alpha(alpha)?;
    check_gamma_smooth(alpha, gamma_smooth)?;
    let gammas: Vec<f64> = (1..=n_modes).map(|n| (n as f64 * PI).powi(2)).collect();
    let betas = match beta_schedule {
        BetaSchedule::Cylindrical => vec![1.0; n_modes],
        BetaSchedule::Critical => gammas
            .iter()
            .map(|g| g.powf(1.0 / alpha - gamma_smooth))
            .collect(),
    };
    Ok(SpectralModel {
        gammas,
        betas,
        alpha,
        gamma_smooth,
        c_bar: 1.0,
        schedule: Schedule::HeatDirichlet(beta_schedule),
    })
}

impl SpectralModel {
    /// Model from explicit sequences. `betas` may violate the pointwise
    /// lower bound (that is what [`validate_hypothesis`] reports) but must be
    /// nonnegative; zero coefficients switch a mode's noise off.
    pub fn custom(gammas: Vec<f64>, betas: Vec<f64>, alpha: f64, gamma_smooth: f64, c_bar: f64) -> Result<Self> {
        check_alpha(alpha)?;
        check_gamma_smooth(alpha, gamma_smooth)?;
        if gammas.is_empty() {
            return Err(Error::ParameterOutOfRange {
                name: "n_modes",
                value: 0.0,
                bound: "must be >= 1".into(),
            });
        }
        if betas.len() != gammas.len() {
            return Err(Error::DimensionMismatch {
                expected: gammas.len(),
                got: betas.len(),
            });
        }
        for w in gammas.windows(2) {
            if w[1] < w[0] {
                return Err(Error::ParameterOutOfRange {
                    name: "gammas",
                    value: w[1],
                    bound: "eigenvalues of -A must be nondecreasing".into(),
                });
            }
        }
        if !(gammas[0] > 0.0) || gammas.iter().any(|g| !g.is_finite()) {
            return Err(Error::ParameterOutOfRange {
                name: "gammas",
                value: gammas[0],
                bound: "eigenvalues of -A must be finite and > 0".into(),
            });
        }
        for &b in &betas {
            check_nonnegative("betas", b)?;
        }
        if !(c_bar > 0.0) {
            return Err(Error::ParameterOutOfRange {
                name: "c_bar",
                value: c_bar,
                bound: "must be > 0".into(),
            });
        }
        Ok(Self {
            gammas,
            betas,
            alpha,
            gamma_smooth,
            c_bar,
            schedule: Schedule::Custom,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.gammas.len()
    }

    /// Same model with every `beta_n` set to zero (deterministic dynamics).
    pub fn without_noise(&self) -> Self {
        Self {
            betas: vec![0.0; self.n_modes()],
            schedule: Schedule::Custom,
            ..self.clone()
        }
    }

    /// Keeps the first `n` modes.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_modes() {
            return Err(Error::ParameterOutOfRange {
                name: "n_modes",
                value: n as f64,
                bound: format!("must lie in 1..={}", self.n_modes()),
            });
        }
        Ok(Self {
            gammas: self.gammas[..n].to_vec(),
            betas: self.betas[..n].to_vec(),
            ..self.clone()
        })
    }

    /// Coordinates of `e^{tA}`: `exp(-gamma_n t)`. Underflows to exactly 0.
    pub fn semigroup_factor(&self, t: f64) -> Result<Vec<f64>> {
        check_nonnegative("t", t)?;
        Ok(self.gammas.iter().map(|g| (-g * t).exp()).collect())
    }

    /// `e^{tA} x` written into `out`.
    pub fn apply_semigroup(&self, t: f64, x: &[f64], out: &mut [f64]) {
        for ((o, &xi), &g) in out.iter_mut().zip(x).zip(&self.gammas) {
            *o = (-g * t).exp() * xi;
        }
    }
}

pub fn semigroup_factor(model: &SpectralModel, t: f64) -> Result<Vec<f64>> {
    model.semigroup_factor(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub schedule: String,
    pub n_modes: usize,
    /// `beta_n >= c_bar * gamma_n^(1/alpha - gamma)` at every stored mode.
    pub pointwise_ok: bool,
    /// First mode violating the bound, 1-based.
    pub first_violation: Option<usize>,
    /// Exact partial sum of `beta_n^alpha / gamma_n` over stored modes.
    pub series_partial: f64,
    /// Bound on the remaining tail, infinite when no analytic schedule is known.
    pub tail_bound: f64,
    pub series_converges: bool,
    /// True for custom sequences, where only the partial sum is meaningful.
    pub partial_only: bool,
}

impl HypothesisReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "schedule,n_modes,pointwise_ok,first_violation,series_partial,tail_bound,series_converges,partial_only")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            self.schedule,
            self.n_modes,
            self.pointwise_ok,
            self.first_violation.map_or(String::new(), |v| v.to_string()),
            self.series_partial,
            self.tail_bound,
            self.series_converges,
            self.partial_only
        )
    }
}

/// Checks the pointwise lower bound on `beta_n` and the summability of
/// `beta_n^alpha / gamma_n`.
///
/// For heat-Dirichlet schedules the tail beyond the stored modes is summed
/// explicitly for `tail_terms` further modes and the remainder bounded by the
/// integral test.
pub fn validate_hypothesis(model: &SpectralModel, tail_terms: usize) -> Result<HypothesisReport> {
    if tail_terms == 0 {
        return Err(Error::ParameterOutOfRange {
            name: "tail_terms",
            value: 0.0,
            bound: "must be >= 1".into(),
        });
    }
    let alpha = model.alpha;
    let exponent = 1.0 / alpha - model.gamma_smooth;
    let first_violation = model
        .gammas
        .iter()
        .zip(&model.betas)
        .position(|(g, b)| *b < model.c_bar * g.powf(exponent) * (1.0 - BOUND_SLACK))
        .map(|i| i + 1);
    let series_partial: f64 = model
        .gammas
        .iter()
        .zip(&model.betas)
        .map(|(g, b)| b.powf(alpha) / g)
        .sum();

    let n = model.n_modes();
    let tail_bound = match model.schedule {
        Schedule::Custom => f64::INFINITY,
        Schedule::HeatDirichlet(bs) => {
            // term(n) = (n pi)^(-2 p), with p = 1 (cylindrical) or alpha*gamma (critical)
            let p = match bs {
                BetaSchedule::Cylindrical => 1.0,
                BetaSchedule::Critical => alpha * model.gamma_smooth,
            };
            let term = |k: f64| (k * PI).powf(-2.0 * p);
            let explicit: f64 = (n + 1..=n + tail_terms).map(|k| term(k as f64)).sum();
            let last = (n + tail_terms) as f64;
            // sum_{k > last} k^{-2p} <= int_last^inf x^{-2p} dx
            let remainder = PI.powf(-2.0 * p) * last.powf(1.0 - 2.0 * p) / (2.0 * p - 1.0);
            explicit + remainder
        }
    };

    Ok(HypothesisReport {
        schedule: model.schedule.id().to_string(),
        n_modes: n,
        pointwise_ok: first_violation.is_none(),
        first_violation,
        series_partial,
        tail_bound,
        series_converges: tail_bound.is_finite(),
        partial_only: model.schedule == Schedule::Custom,
    })
}

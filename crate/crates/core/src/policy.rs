//! Admissible controls with values in the closed ball `B_R`.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::{argmin_control, HJBSolution, TensorGrid};

/// Control law evaluated at the left end of each time cell.
pub trait Policy: Send + Sync {
    /// Control at time `s` in state `x`.
    fn control(&self, s: f64, x: &[f64], out: &mut [f64]) -> Result<()>;

    fn label(&self) -> String;

    /// Grid whose box bounds the region where the policy is reliable.
    fn box_grid(&self) -> Option<&TensorGrid> {
        None
    }
}

/// Feedback `a(s, x)` in the ball of radius `R`.
#[derive(Clone)]
pub enum FeedbackPolicy {
    Constant(Vec<f64>),
    FromSolution(SolutionFeedback),
    Custom {
        label: String,
        law: Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>,
    },
}

impl fmt::Debug for FeedbackPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// `a(s, x) = argmin_control(Du(T - s, x), R)`, with `Du` interpolated
/// multilinearly in space at the time level nearest to `T - s`.
#[derive(Clone)]
pub struct SolutionFeedback {
    pub solution: Arc<HJBSolution>,
    counters: Arc<FeedbackCounters>,
}

#[derive(Debug, Default)]
struct FeedbackCounters {
    evaluations: AtomicU64,
    outside_box: AtomicU64,
    clamped: AtomicU64,
}

impl SolutionFeedback {
    pub fn evaluations(&self) -> u64 {
        self.counters.evaluations.load(Ordering::Relaxed)
    }

    /// Fraction of evaluations whose state lay outside the grid box.
    pub fn outside_fraction(&self) -> f64 {
        let n = self.evaluations();
        if n == 0 {
            0.0
        } else {
            self.counters.outside_box.load(Ordering::Relaxed) as f64 / n as f64
        }
    }

    /// Number of outputs that needed clamping back onto the ball.
    pub fn clamped(&self) -> u64 {
        self.counters.clamped.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.counters.evaluations.store(0, Ordering::Relaxed);
        self.counters.outside_box.store(0, Ordering::Relaxed);
        self.counters.clamped.store(0, Ordering::Relaxed);
    }
}

/// Feedback policy read off a converged HJB solution.
pub fn extract_feedback(solution: Arc<HJBSolution>) -> Result<FeedbackPolicy> {
    if !solution.converged {
        return Err(Error::Domain("feedback requires a converged HJB solution".into()));
    }
    Ok(FeedbackPolicy::FromSolution(SolutionFeedback {
        solution,
        counters: Arc::default(),
    }))
}

impl FeedbackPolicy {
    pub fn constant(value: Vec<f64>) -> Self {
        Self::Constant(value)
    }

    pub fn custom(label: impl Into<String>, law: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self::Custom {
            label: label.into(),
            law: Arc::new(law),
        }
    }
}

impl Policy for FeedbackPolicy {
    fn control(&self, s: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Self::Constant(v) => {
                out.copy_from_slice(&v[..out.len()]);
                Ok(())
            }
            Self::Custom { law, .. } => {
                law(s, x, out);
                Ok(())
            }
            Self::FromSolution(fb) => {
                let sol = &fb.solution;
                let horizon = sol.horizon();
                if !(0.0..=horizon).contains(&s) {
                    return Err(Error::Domain(format!("query time {s} outside [0, {horizon}]")));
                }
                fb.counters.evaluations.fetch_add(1, Ordering::Relaxed);
                if !sol.grid_fn.grid.contains(x) {
                    fb.counters.outside_box.fetch_add(1, Ordering::Relaxed);
                }
                let k = sol.grid_fn.nearest_level(horizon - s);
                let mut p = vec![0.0; x.len()];
                sol.grid_fn.gradient_at_level(k, x, &mut p);
                let a = argmin_control(&p, sol.radius);
                let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                let scale = if norm > sol.radius * (1.0 + 1e-12) {
                    fb.counters.clamped.fetch_add(1, Ordering::Relaxed);
                    sol.radius / norm
                } else {
                    1.0
                };
                for (o, v) in out.iter_mut().zip(a) {
                    *o = v * scale;
                }
                Ok(())
            }
        }
    }

    fn label(&self) -> String {
        match self {
            Self::Constant(v) => {
                let parts: Vec<String> = v.iter().map(|c| format!("{c}")).collect();
                format!("constant[{}]", parts.join(";"))
            }
            Self::FromSolution(_) => "hjb-feedback".to_string(),
            Self::Custom { label, .. } => label.clone(),
        }
    }

    fn box_grid(&self) -> Option<&TensorGrid> {
        match self {
            Self::FromSolution(fb) => Some(&fb.solution.grid_fn.grid),
            _ => None,
        }
    }
}

/// Piecewise-constant open-loop control: `values[k]` on `[times[k], times[k+1])`,
/// the last value continuing to the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenLoopControl {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl OpenLoopControl {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: values.len(),
            });
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("open-loop switching times must increase".into()));
        }
        Ok(Self { times, values })
    }
}

impl Policy for OpenLoopControl {
    fn control(&self, s: f64, _x: &[f64], out: &mut [f64]) -> Result<()> {
        let k = self.times.partition_point(|&t| t <= s).saturating_sub(1);
        out.copy_from_slice(&self.values[k][..out.len()]);
        Ok(())
    }

    fn label(&self) -> String {
        "open-loop".to_string()
    }
}

/// Constants on a grid of the ball: `count` points per axis on `[-R, R]`,
/// keeping those inside `B_R`. In one dimension this is `count` evenly
/// spaced values.
pub fn constant_family(dim: usize, radius: f64, count: usize) -> Vec<FeedbackPolicy> {
    let ticks: Vec<f64> = if count == 1 {
        vec![0.0]
    } else {
        (0..count)
            .map(|i| -radius + 2.0 * radius * i as f64 / (count - 1) as f64)
            .collect()
    };
    let mut out = Vec::new();
    let total = count.pow(dim as u32);
    for flat in 0..total {
        let mut rem = flat;
        let mut v = vec![0.0; dim];
        for a in (0..dim).rev() {
            v[a] = ticks[rem % count];
            rem /= count;
        }
        if v.iter().map(|c| c * c).sum::<f64>().sqrt() <= radius * (1.0 + 1e-12) {
            out.push(FeedbackPolicy::Constant(v));
        }
    }
    out
}

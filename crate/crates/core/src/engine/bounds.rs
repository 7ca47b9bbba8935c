//! Convergence-time estimation and the theoretical rate/bound formulas the
//! analysis layer evaluates against empirical runs.

use serde::Serialize;

use crate::error::{Result, SimError};

/// Finite-time bound for a first-level agent in continuous time:
/// `e0^(1-alpha) / (c * (1-alpha))` with `c = gamma_star * (r - 2f) / r`.
pub fn continuous_t1_bound(
    e0: f64,
    gamma_star: f64,
    r: usize,
    f: usize,
    alpha: f64,
) -> Result<f64> {
    if r <= 2 * f {
        return Err(SimError::Config(format!(
            "bound undefined: R = {r} <= 2F = {} (hypothesis violation)",
            2 * f
        )));
    }
    if !(gamma_star > 0.0) {
        return Err(SimError::Config(format!(
            "bound requires gamma_star > 0, got {gamma_star}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SimError::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if e0 < 0.0 {
        return Err(SimError::Config("initial error must be >= 0".into()));
    }
    let c = gamma_star * (r - 2 * f) as f64 / r as f64;
    Ok(e0.powf(1.0 - alpha) / (c * (1.0 - alpha)))
}

/// Per-step contraction factor of the discrete law:
/// `c = 1 - gamma_star * (r - 2f) / r`, in (0, 1) for `0 < gamma_star <= 1`
/// (and exactly 0 at the degenerate `gamma_star = 1, f = 0, r = 1`).
pub fn discrete_contraction_factor(gamma_star: f64, r: usize, f: usize) -> Result<f64> {
    if r <= 2 * f {
        return Err(SimError::Config(format!(
            "contraction undefined: R = {r} <= 2F = {} (hypothesis violation)",
            2 * f
        )));
    }
    if !(gamma_star > 0.0 && gamma_star <= 1.0) {
        return Err(SimError::Config(format!(
            "gamma_star must lie in (0, 1], got {gamma_star}"
        )));
    }
    Ok(1.0 - gamma_star * (r - 2 * f) as f64 / r as f64)
}

/// Smallest envelope constant `a` such that `k * c^k * b0 <= a * beta^k` for
/// all integer `k >= 0`, given `0 < c < beta < 1`: `a = b0 / (e * ln(beta/c))`.
pub fn geometric_series_envelope(b0: f64, c: f64, beta: f64) -> Result<f64> {
    if !(c > 0.0 && c < beta && beta < 1.0) {
        return Err(SimError::Config(format!(
            "envelope requires 0 < c < beta < 1, got c = {c}, beta = {beta}"
        )));
    }
    if !(b0 > 0.0) {
        return Err(SimError::Config(format!("b0 must be positive, got {b0}")));
    }
    Ok(b0 / (std::f64::consts::E * (beta / c).ln()))
}

/// Earliest record time at which the error series stays at or below
/// `delta` for an entire trailing window of `window` steps, i.e. the first
/// `t` with `e(s) <= delta` for all `s` in `[t, t + window*dt]` inside the
/// trace. `None` if no window qualifies (including when the window extends
/// past the trace end for every candidate).
pub fn convergence_time(errors: &[f64], times: &[f64], delta: f64, window: usize) -> Option<f64> {
    debug_assert_eq!(errors.len(), times.len());
    if errors.len() <= window {
        return None;
    }
    let mut run = 0usize; // consecutive records with error <= delta, ending at k
    for k in 0..errors.len() {
        if errors[k] <= delta {
            run += 1;
        } else {
            run = 0;
        }
        if run > window {
            return Some(times[k - window]);
        }
    }
    None
}

/// Per-agent convergence diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct AgentBound {
    pub agent_id: usize,
    pub level: usize,
    pub initial_error: f64,
    /// Empirical convergence time (seconds in continuous mode, steps in
    /// discrete mode); `null` if the agent never converged within the run.
    pub empirical_time: Option<f64>,
    /// Theoretical bound on the convergence time, where defined.
    pub bound: Option<f64>,
    /// Contraction constant: rate `gamma* (R-2F)/R` in continuous mode,
    /// factor `1 - gamma* (R-2F)/R` in discrete mode.
    pub contraction: Option<f64>,
    /// Minimum saturation ratio observed over steps with nonzero weights.
    pub gamma_star: Option<f64>,
    /// Minimum retained-set cardinality observed.
    pub r_min: Option<usize>,
}

/// Per-level aggregate `T_l` (max over the level's normal agents).
#[derive(Debug, Clone, Serialize)]
pub struct LevelBound {
    pub level: usize,
    pub empirical_max: Option<f64>,
    pub bound: Option<f64>,
}

/// Analysis report produced after every run.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub mode: String,
    pub delta_conv: f64,
    pub window: u64,
    pub max_input_norm: f64,
    pub all_converged: bool,
    pub agents: Vec<AgentBound>,
    pub levels: Vec<LevelBound>,
}

impl BoundReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bound report serialization cannot fail")
    }
}

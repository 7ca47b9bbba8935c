//! Agent state, roles, formation coordinates, and the measurement layer,
//! including per-edge Byzantine adversary signals.
//!
//! Controllers consume only the formation coordinate `tau_i = p_i - xi_i`;
//! the world stores `tau` directly and keeps `xi` for reconstructing
//! positions.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;

use crate::error::{Result, SimError};
use crate::graph::{AdversaryPlacement, Digraph, RdagPartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Leader,
    Normal,
    Adversary,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Leader => "leader",
            Role::Normal => "normal",
            Role::Adversary => "adversary",
        }
    }
}

/// Whether adversaries physically move or only transmit false values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdversaryMode {
    /// The adversary's own state integrates its strategy signal; receivers
    /// observe its true coordinate.
    Physical,
    /// The adversary's state holds still; receivers observe fabricated
    /// coordinates, possibly different per receiver (Byzantine).
    Communication,
}

/// Per-axis sinusoid parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidSignal {
    pub amplitude: Vec<f64>,
    pub frequency: Vec<f64>,
    pub phase: Vec<f64>,
}

impl SinusoidSignal {
    fn dims_ok(&self, dim: usize) -> bool {
        self.amplitude.len() == dim && self.frequency.len() == dim && self.phase.len() == dim
    }

    /// Signal value at time `t` (a position offset in communication mode, an
    /// input signal value in physical mode).
    pub fn value_at(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.amplitude.len(),
            self.amplitude
                .iter()
                .zip(&self.frequency)
                .zip(&self.phase)
                .map(|((&a, &f), &p)| a * (TAU * f * t + p).sin()),
        )
    }

    /// Bound on the signal's time derivative norm.
    fn rate_bound(&self) -> f64 {
        self.amplitude
            .iter()
            .zip(&self.frequency)
            .map(|(&a, &f)| (a * TAU * f).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Misbehavior model for one adversarial agent.
///
/// Every emitted signal is a continuous function of time (a discontinuity
/// would expose the adversary); emitted speed is unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversaryStrategy {
    /// Drifts from the initial coordinate at a constant velocity.
    ConstantDrift { velocity: Vec<f64> },
    /// Oscillates around the initial coordinate, per axis.
    Sinusoid(SinusoidSignal),
    /// Tracks a point at fraction `gain` of the victim-to-reference distance,
    /// on the side opposite the reference, so it stays inside the victim's
    /// filter radius and is never filtered.
    StealthyShadow { gain: f64 },
    /// Sends a distinct sinusoid trajectory to each receiver; receivers not
    /// listed observe the true coordinate.
    PerEdgeByzantine { signals: BTreeMap<usize, SinusoidSignal> },
}

impl AdversaryStrategy {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let ok = match self {
            AdversaryStrategy::ConstantDrift { velocity } => velocity.len() == dim,
            AdversaryStrategy::Sinusoid(sig) => sig.dims_ok(dim),
            AdversaryStrategy::StealthyShadow { gain } => {
                if !(*gain > 0.0 && *gain <= 1.0) {
                    return Err(SimError::Config(format!(
                        "stealthy_shadow gain must lie in (0, 1], got {gain}"
                    )));
                }
                true
            }
            AdversaryStrategy::PerEdgeByzantine { signals } => {
                signals.values().all(|s| s.dims_ok(dim))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::Config(format!(
                "strategy signal dimensions do not match state dimension {dim}"
            )))
        }
    }

    /// Lipschitz constant declared for the emitted signal, used by the
    /// continuity audit. `u_m` bounds the victim's speed for victim-tracking
    /// strategies.
    pub fn lipschitz(&self, u_m: f64) -> f64 {
        match self {
            AdversaryStrategy::ConstantDrift { velocity } => {
                velocity.iter().map(|v| v * v).sum::<f64>().sqrt()
            }
            AdversaryStrategy::Sinusoid(sig) => sig.rate_bound(),
            AdversaryStrategy::StealthyShadow { gain } => (1.0 + gain) * u_m,
            AdversaryStrategy::PerEdgeByzantine { signals } => signals
                .values()
                .map(|s| s.rate_bound())
                .fold(0.0, f64::max),
        }
    }
}

/// One agent of the multi-agent system. `tau` is the formation coordinate
/// `p - xi`; `initial_tau` anchors time-parameterized adversary signals.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub id: usize,
    pub level: usize,
    pub role: Role,
    pub tau: DVector<f64>,
    pub xi: DVector<f64>,
    pub initial_tau: DVector<f64>,
    pub strategy: Option<AdversaryStrategy>,
}

impl AgentState {
    pub fn position(&self) -> DVector<f64> {
        &self.tau + &self.xi
    }
}

/// Relative formation-coordinate vector `tau_j - tau_i` as claimed by the
/// sender `j` toward receiver `i`.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub receiver: usize,
    pub sender: usize,
    pub relative: DVector<f64>,
}

/// Immutable topology plus mutable agent states for one simulation run.
#[derive(Debug, Clone)]
pub struct World {
    pub dim: usize,
    pub graph: Digraph,
    pub partition: RdagPartition,
    pub placement: AdversaryPlacement,
    pub agents: Vec<AgentState>,
    pub adversary_mode: AdversaryMode,
    pub tau_reference: DVector<f64>,
}

impl World {
    pub fn tau(&self, i: usize) -> &DVector<f64> {
        &self.agents[i].tau
    }

    pub fn role(&self, i: usize) -> Role {
        self.agents[i].role
    }

    /// Ids of normal (non-leader, non-adversarial) agents, ascending.
    pub fn normal_ids(&self) -> Vec<usize> {
        self.agents
            .iter()
            .filter(|a| a.role == Role::Normal)
            .map(|a| a.id)
            .collect()
    }

    /// The coordinate an adversary presents to `receiver` at time `t`.
    fn emitted_tau(&self, sender: &AgentState, receiver: usize, t: f64) -> DVector<f64> {
        let strategy = sender
            .strategy
            .as_ref()
            .expect("adversary agents always carry a strategy");
        match strategy {
            AdversaryStrategy::ConstantDrift { velocity } => {
                &sender.initial_tau + DVector::from_column_slice(velocity) * t
            }
            AdversaryStrategy::Sinusoid(sig) => &sender.initial_tau + sig.value_at(t),
            AdversaryStrategy::StealthyShadow { gain } => {
                let victim = &self.agents[receiver].tau;
                victim + (victim - &self.tau_reference) * *gain
            }
            AdversaryStrategy::PerEdgeByzantine { signals } => match signals.get(&receiver) {
                Some(sig) => &sender.initial_tau + sig.value_at(t),
                None => sender.tau.clone(),
            },
        }
    }

    /// All measurements available to agent `i` at time `t`, one per
    /// in-neighbor, in source-id order.
    ///
    /// Honest senders report their true relative vector; adversarial senders
    /// substitute strategy output in communication mode.
    pub fn measure(&self, i: usize, t: f64) -> Vec<Measurement> {
        let tau_i = &self.agents[i].tau;
        self.graph
            .in_neighbors(i)
            .iter()
            .map(|&j| {
                let sender = &self.agents[j];
                let claimed = match (sender.role, self.adversary_mode) {
                    (Role::Adversary, AdversaryMode::Communication) => {
                        self.emitted_tau(sender, i, t)
                    }
                    _ => sender.tau.clone(),
                };
                Measurement { receiver: i, sender: j, relative: claimed - tau_i }
            })
            .collect()
    }
}

/// Common `tau` of the behaving leaders (component-wise mean), used for
/// metrics and analysis only.
///
/// Errors if no behaving leader exists or the behaving leaders are not
/// mutually co-located within `tolerance`.
pub fn leader_reference(agents: &[AgentState], tolerance: f64) -> Result<DVector<f64>> {
    let leaders: Vec<&AgentState> = agents.iter().filter(|a| a.role == Role::Leader).collect();
    let Some(first) = leaders.first() else {
        return Err(SimError::Config("no behaving leader in the agent set".into()));
    };
    let mut max_dev = 0.0f64;
    for (idx, a) in leaders.iter().enumerate() {
        for b in &leaders[idx + 1..] {
            max_dev = max_dev.max((&a.tau - &b.tau).norm());
        }
    }
    if max_dev > tolerance {
        return Err(SimError::Config(format!(
            "behaving leaders deviate by {max_dev:e}, above tolerance {tolerance:e}"
        )));
    }
    let dim = first.tau.len();
    let mut mean = DVector::zeros(dim);
    for a in &leaders {
        mean += &a.tau;
    }
    Ok(mean / leaders.len() as f64)
}

/// Equally spaced points on a circle: `xi_k = center + radius*(cos, sin)(2*pi*k/n)`.
pub fn formation_offsets_circle(
    n_points: usize,
    radius: f64,
    center: [f64; 2],
) -> Result<Vec<DVector<f64>>> {
    if n_points == 0 {
        return Err(SimError::Config("circle formation needs at least one point".into()));
    }
    if radius < 0.0 {
        return Err(SimError::Config(format!("circle radius must be >= 0, got {radius}")));
    }
    Ok((0..n_points)
        .map(|k| {
            let theta = TAU * k as f64 / n_points as f64;
            DVector::from_column_slice(&[
                center[0] + radius * theta.cos(),
                center[1] + radius * theta.sin(),
            ])
        })
        .collect())
}

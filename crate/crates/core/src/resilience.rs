//! Norm-based neighbor filtering, dwell-time gating, the co-location set
//! `Omega_i`, and the control weights for both time models.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dynamics::Measurement;
use crate::error::{Result, SimError};

/// Retained in-neighbor set for one agent, held constant over each dwell
/// interval in continuous time.
#[derive(Debug, Clone, Default)]
pub struct FilterState {
    /// Retained ids, sorted ascending. `|retained| = max(|V_i| - F, 0)`.
    pub retained: Vec<usize>,
    /// Dwell index `m` of the last refresh (`t = m * eps_d`).
    pub last_update_index: u64,
}

/// Control and filtering parameters shared by a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    /// Exponent of the continuous-time law, in (0, 1).
    pub alpha: f64,
    /// Input bound (speed in continuous time, displacement per step in
    /// discrete time).
    pub u_m: f64,
    /// Number of in-neighbors each agent filters out.
    pub f: usize,
    /// Dwell time between filter refreshes (continuous mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_d: Option<f64>,
    /// Integration step (continuous mode only); must divide `eps_d`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Co-location tolerance for the `Omega_i` set.
    pub eps_omega: f64,
    /// Distance below which a control term is replaced by its zero limit.
    pub eps_sing: f64,
}

impl ControlParams {
    pub const DEFAULT_EPS_OMEGA: f64 = 1e-9;
    pub const DEFAULT_EPS_SING: f64 = 1e-12;

    pub fn validate(&self, continuous: bool) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(SimError::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.u_m > 0.0) {
            return Err(SimError::Config(format!("u_m must be positive, got {}", self.u_m)));
        }
        if self.eps_omega < 0.0 {
            return Err(SimError::Config("eps_omega must be >= 0".into()));
        }
        if !(self.eps_sing > 0.0) {
            return Err(SimError::Config("eps_sing must be positive".into()));
        }
        if continuous {
            self.steps_per_dwell()?;
        } else if self.eps_d.is_some() || self.dt.is_some() {
            return Err(SimError::Config(
                "eps_d and dt are continuous-mode parameters; remove them in discrete mode".into(),
            ));
        }
        Ok(())
    }

    /// Number of integration steps per dwell interval.
    ///
    /// The dwell clock runs on step indices, never on floating-point time, so
    /// `eps_d` must be an exact (up to 1e-9 relative) integer multiple of `dt`.
    pub fn steps_per_dwell(&self) -> Result<u64> {
        let (Some(eps_d), Some(dt)) = (self.eps_d, self.dt) else {
            return Err(SimError::Config(
                "continuous mode requires both eps_d and dt".into(),
            ));
        };
        if !(dt > 0.0) || !(eps_d > 0.0) {
            return Err(SimError::Config("eps_d and dt must be positive".into()));
        }
        let ratio = eps_d / dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(SimError::Config(format!(
                "eps_d = {eps_d} is not an integer multiple of dt = {dt}"
            )));
        }
        Ok(steps as u64)
    }
}

/// Removes the `f` in-neighbors with the largest `||tau_j - tau_i||` and
/// returns the retained ids, sorted ascending.
///
/// Ties are broken by source id: among equal distances, smaller ids are
/// retained first. With no in-neighbors the result is empty (leaders); with
/// `f >= |V_i|` everything is filtered and a warning is logged, since the
/// controller hypothesis is violated.
pub fn filter_neighbors(measurements: &[Measurement], f: usize) -> Vec<usize> {
    if measurements.is_empty() {
        return Vec::new();
    }
    if f >= measurements.len() {
        if f > 0 {
            warn!(
                "agent {}: F = {f} >= |V_i| = {}; retained set is empty",
                measurements[0].receiver,
                measurements.len()
            );
        }
        return Vec::new();
    }
    let mut ranked: Vec<(f64, usize)> = measurements
        .iter()
        .map(|m| (m.relative.norm(), m.sender))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut retained: Vec<usize> = ranked[..measurements.len() - f]
        .iter()
        .map(|&(_, id)| id)
        .collect();
    retained.sort_unstable();
    retained
}

/// True exactly at step indices where `t = m * eps_d`, i.e. every
/// `steps_per_dwell` steps, including step 0.
pub fn dwell_gate(step: u64, steps_per_dwell: u64) -> bool {
    step.is_multiple_of(steps_per_dwell)
}

/// In-neighbors not co-located with the receiver: `{j : ||tau_j - tau_i|| >
/// eps_omega}`, computed over all in-neighbors, not just retained ones.
pub fn omega_set(measurements: &[Measurement], eps_omega: f64) -> Vec<usize> {
    measurements
        .iter()
        .filter(|m| m.relative.norm() > eps_omega)
        .map(|m| m.sender)
        .collect()
}

/// Uniform weight map over the retained set, with ids in retained order.
pub type WeightMap = Vec<(usize, f64)>;

/// Continuous-time weights: all zero while at most `f` in-neighbors are away
/// from the agent, uniform `1/|R_i|` otherwise.
///
/// The zero branch keeps converged agents pinned while adversaries move
/// inside a dwell window.
pub fn control_weights_continuous(
    retained: &[usize],
    omega_cardinality: usize,
    f: usize,
) -> Result<WeightMap> {
    if omega_cardinality <= f {
        return Ok(retained.iter().map(|&id| (id, 0.0)).collect());
    }
    if retained.is_empty() {
        return Err(SimError::Config(
            "nonzero weight branch with empty retained set (controller hypothesis violated)".into(),
        ));
    }
    let w = 1.0 / retained.len() as f64;
    Ok(retained.iter().map(|&id| (id, w)).collect())
}

/// Discrete-time weights: uniform `1/|R_i|`, summing to one.
pub fn control_weights_discrete(retained: &[usize]) -> Result<WeightMap> {
    if retained.is_empty() {
        return Err(SimError::Config(
            "discrete weights require a nonempty retained set".into(),
        ));
    }
    let w = 1.0 / retained.len() as f64;
    Ok(retained.iter().map(|&id| (id, w)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn meas(sender: usize, distance: f64) -> Measurement {
        Measurement {
            receiver: 99,
            sender,
            relative: DVector::from_column_slice(&[distance, 0.0]),
        }
    }

    #[test]
    fn filter_drops_largest_distances() {
        let ms: Vec<Measurement> = [5.0, 4.0, 3.0, 2.0, 1.0, 0.5, 0.1]
            .iter()
            .enumerate()
            .map(|(i, &d)| meas(i + 1, d))
            .collect();
        assert_eq!(filter_neighbors(&ms, 2), vec![3, 4, 5, 6, 7]);
    }

    #[test]
    fn filter_tie_break_removes_largest_ids() {
        let ms: Vec<Measurement> = (0..7).map(|i| meas(i, 2.5)).collect();
        assert_eq!(filter_neighbors(&ms, 2), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn filter_edge_cases() {
        let ms: Vec<Measurement> = (0..4).map(|i| meas(i, i as f64)).collect();
        assert_eq!(filter_neighbors(&ms, 0), vec![0, 1, 2, 3]);
        assert_eq!(filter_neighbors(&[], 3), Vec::<usize>::new());
        assert_eq!(filter_neighbors(&ms, 4), Vec::<usize>::new());
        assert_eq!(filter_neighbors(&ms, 9), Vec::<usize>::new());
    }

    type OracleBest = Option<(Vec<(f64, usize)>, Vec<usize>)>;

    /// Exhaustive oracle: best subset of size |V_i| - F under descending
    /// (distance, id) lexicographic comparison.
    fn filter_oracle(ms: &[Measurement], f: usize) -> Vec<usize> {
        let n = ms.len();
        if n == 0 || f >= n {
            return Vec::new();
        }
        let keep = n - f;
        let pairs: Vec<(f64, usize)> =
            ms.iter().map(|m| (m.relative.norm(), m.sender)).collect();
        let mut best: OracleBest = None;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != keep {
                continue;
            }
            let subset: Vec<(f64, usize)> = (0..n)
                .filter(|&i| mask & (1 << i) != 0)
                .map(|i| pairs[i])
                .collect();
            let mut key = subset.clone();
            key.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
            let ids: Vec<usize> = {
                let mut ids: Vec<usize> = subset.iter().map(|&(_, id)| id).collect();
                ids.sort_unstable();
                ids
            };
            let better = match &best {
                None => true,
                Some((bk, _)) => {
                    let mut ord = std::cmp::Ordering::Equal;
                    for (a, b) in key.iter().zip(bk.iter()) {
                        ord = a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                        if ord != std::cmp::Ordering::Equal {
                            break;
                        }
                    }
                    ord == std::cmp::Ordering::Less
                }
            };
            if better {
                best = Some((key, ids));
            }
        }
        best.unwrap().1
    }

    proptest! {
        #[test]
        fn filter_matches_exhaustive_oracle(
            // Distances drawn from a coarse grid to force ties.
            grid in proptest::collection::vec(0u8..6, 1..10),
            f in 0usize..5,
        ) {
            let ms: Vec<Measurement> = grid
                .iter()
                .enumerate()
                .map(|(i, &g)| meas(i, g as f64 * 0.5))
                .collect();
            prop_assert_eq!(filter_neighbors(&ms, f), filter_oracle(&ms, f));
        }

        #[test]
        fn filter_never_removes_more_than_f(
            dists in proptest::collection::vec(0.0f64..10.0, 1..12),
            f in 0usize..5,
        ) {
            let ms: Vec<Measurement> =
                dists.iter().enumerate().map(|(i, &d)| meas(i, d)).collect();
            let retained = filter_neighbors(&ms, f);
            prop_assert!(ms.len() - retained.len() <= f.min(ms.len()));
            prop_assert_eq!(retained.len(), ms.len().saturating_sub(f));
        }

        #[test]
        fn omega_monotone_in_tolerance(
            dists in proptest::collection::vec(0.0f64..4.0, 1..12),
            eps_lo in 0.0f64..2.0,
            bump in 0.0f64..2.0,
        ) {
            let ms: Vec<Measurement> =
                dists.iter().enumerate().map(|(i, &d)| meas(i, d)).collect();
            let lo = omega_set(&ms, eps_lo).len();
            let hi = omega_set(&ms, eps_lo + bump).len();
            prop_assert!(hi <= lo);
        }
    }

    #[test]
    fn dwell_gate_on_indices() {
        // dt = 0.01, eps_d = 0.1 -> 10 steps per dwell.
        assert!(dwell_gate(0, 10));
        assert!(dwell_gate(30, 10)); // t = 0.30
        assert!(!dwell_gate(31, 10)); // t = 0.31
    }

    #[test]
    fn steps_per_dwell_validation() {
        let mut params = ControlParams {
            alpha: 0.8,
            u_m: 1.0,
            f: 5,
            eps_d: Some(0.1),
            dt: Some(0.01),
            eps_omega: 1e-9,
            eps_sing: 1e-12,
        };
        assert_eq!(params.steps_per_dwell().unwrap(), 10);
        params.dt = Some(0.03);
        assert!(params.steps_per_dwell().is_err());
        params.dt = None;
        assert!(params.steps_per_dwell().is_err());
    }

    #[test]
    fn params_validation() {
        let good = ControlParams {
            alpha: 0.8,
            u_m: 1.0,
            f: 5,
            eps_d: Some(0.1),
            dt: Some(0.01),
            eps_omega: 1e-9,
            eps_sing: 1e-12,
        };
        assert!(good.validate(true).is_ok());

        let mut bad_alpha = good.clone();
        bad_alpha.alpha = 1.0;
        assert!(bad_alpha.validate(true).is_err());

        // Discrete mode must not carry the continuous timing fields.
        assert!(good.validate(false).is_err());
        let mut discrete = good.clone();
        discrete.eps_d = None;
        discrete.dt = None;
        assert!(discrete.validate(false).is_ok());
    }

    #[test]
    fn omega_set_boundary_is_strict() {
        let ms = vec![meas(0, 0.0), meas(1, 1e-9), meas(2, 2e-9)];
        let omega = omega_set(&ms, 1e-9);
        assert_eq!(omega, vec![2]);
    }

    #[test]
    fn omega_counts_threshold_crossers() {
        let mut ms: Vec<Measurement> = (0..5).map(|i| meas(i, 2.0)).collect();
        ms.extend((5..16).map(|i| meas(i, 1e-12)));
        assert_eq!(omega_set(&ms, 1e-9).len(), 5);
    }

    #[test]
    fn continuous_weights_gate() {
        let retained = vec![1, 2, 3];
        // |Omega| <= F: all zero.
        let w = control_weights_continuous(&retained, 5, 5).unwrap();
        assert!(w.iter().all(|&(_, w)| w == 0.0));
        let w = control_weights_continuous(&retained, 0, 5).unwrap();
        assert!(w.iter().all(|&(_, w)| w == 0.0));
        // |Omega| > F: uniform 1/|R|.
        let retained: Vec<usize> = (0..11).collect();
        let w = control_weights_continuous(&retained, 6, 5).unwrap();
        assert!(w.iter().all(|&(_, w)| (w - 1.0 / 11.0).abs() < 1e-15));
        // Nonzero branch with empty retained set is a hypothesis violation.
        assert!(control_weights_continuous(&[], 6, 5).is_err());
        // Zero branch with empty retained set is fine.
        assert!(control_weights_continuous(&[], 3, 5).unwrap().is_empty());
    }

    #[test]
    fn weight_switch_soundness_at_formation() {
        // An agent co-located with the reference whose in-neighbors are all
        // at the reference except at most F adversaries: the omega gate zeroes
        // every weight, so the commanded input is exactly zero.
        use crate::control::continuous_control;
        let mut ms: Vec<Measurement> = (0..11).map(|i| meas(i, 0.0)).collect();
        ms.extend((11..16).map(|i| meas(i, 1.5))); // F = 5 perturbed neighbors
        let retained = filter_neighbors(&ms, 5);
        let omega = omega_set(&ms, 1e-9);
        assert_eq!(omega.len(), 5);
        let weights = control_weights_continuous(&retained, omega.len(), 5).unwrap();
        assert!(weights.iter().all(|&(_, w)| w == 0.0));
        let out = continuous_control(&ms, &weights, 0.8, 1.0, 1e-12, 2);
        assert!(out.u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn discrete_weights_sum_to_one() {
        let w = control_weights_discrete(&(0..11).collect::<Vec<_>>()).unwrap();
        assert!((w.iter().map(|&(_, w)| w).sum::<f64>() - 1.0).abs() < 1e-12);
        let w = control_weights_discrete(&[7]).unwrap();
        assert_eq!(w, vec![(7, 1.0)]);
        assert!(control_weights_discrete(&[]).is_err());

        // Summation audit up to 10^4 members.
        for n in [2usize, 10, 100, 1234, 10_000] {
            let ids: Vec<usize> = (0..n).collect();
            let w = control_weights_discrete(&ids).unwrap();
            let sum: f64 = w.iter().map(|&(_, w)| w).sum();
            assert!((sum - 1.0).abs() < 1e-12, "n = {n}: sum = {sum}");
        }
    }
}

//! The saturated continuous-time finite-time control law and the
//! discrete-time control law.
//!
//! Both are pure functions of the per-edge measured vectors; the controller
//! never sees ground truth.

use nalgebra::DVector;

use crate::dynamics::Measurement;
use crate::resilience::WeightMap;

/// Saturated control input together with its diagnostics.
#[derive(Debug, Clone)]
pub struct ControlOutput {
    /// Input vector; `||u|| <= u_m` always.
    pub u: DVector<f64>,
    /// Norm of the pre-saturation input `u_i^p`.
    pub u_p_norm: f64,
    /// Saturation ratio `min(||u_p||, u_m) / ||u_p||`, defined as 1 when
    /// `u_p = 0` so traces never contain undefined ratios.
    pub gamma: f64,
}

fn saturate(u_p: DVector<f64>, u_m: f64) -> ControlOutput {
    let u_p_norm = u_p.norm();
    if u_p_norm > 0.0 {
        let gamma = u_p_norm.min(u_m) / u_p_norm;
        ControlOutput { u: u_p * gamma, u_p_norm, gamma }
    } else {
        ControlOutput { u: DVector::zeros(u_p.len()), u_p_norm: 0.0, gamma: 1.0 }
    }
}

/// Continuous-time law:
/// `u_i = gamma_i * sum_j w_ij (tau_j - tau_i) ||tau_j - tau_i||^(alpha - 1)`.
///
/// Terms with distance below `eps_sing` are replaced by their analytic limit
/// (the zero vector), guarding the `||.||^(alpha-1)` singularity.
pub fn continuous_control(
    measurements: &[Measurement],
    weights: &WeightMap,
    alpha: f64,
    u_m: f64,
    eps_sing: f64,
    dim: usize,
) -> ControlOutput {
    let mut u_p = DVector::zeros(dim);
    for &(id, w) in weights {
        if w == 0.0 {
            continue;
        }
        let m = measurements
            .iter()
            .find(|m| m.sender == id)
            .expect("weight map refers to a measured in-neighbor");
        let dist = m.relative.norm();
        if dist < eps_sing {
            continue;
        }
        u_p.axpy(w * dist.powf(alpha - 1.0), &m.relative, 1.0);
    }
    saturate(u_p, u_m)
}

/// Discrete-time law: `u_i = gamma_i * sum_j w_ij (tau_j - tau_i)` with
/// uniform weights summing to one.
pub fn discrete_control(
    measurements: &[Measurement],
    weights: &WeightMap,
    u_m: f64,
    dim: usize,
) -> ControlOutput {
    let mut u_p = DVector::zeros(dim);
    for &(id, w) in weights {
        if w == 0.0 {
            continue;
        }
        let m = measurements
            .iter()
            .find(|m| m.sender == id)
            .expect("weight map refers to a measured in-neighbor");
        u_p.axpy(w, &m.relative, 1.0);
    }
    saturate(u_p, u_m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn meas(sender: usize, rel: [f64; 2]) -> Measurement {
        Measurement { receiver: 0, sender, relative: DVector::from_column_slice(&rel) }
    }

    const EPS_SING: f64 = 1e-12;

    #[test]
    fn continuous_saturated_example() {
        // One retained neighbor at displacement (2, 0): ||u_p|| = 2^0.8 > 1.
        let ms = vec![meas(1, [2.0, 0.0])];
        let out = continuous_control(&ms, &vec![(1, 1.0)], 0.8, 1.0, EPS_SING, 2);
        assert_relative_eq!(out.u_p_norm, 2f64.powf(0.8), max_relative = 1e-12);
        assert_relative_eq!(out.gamma, 1.0 / 2f64.powf(0.8), max_relative = 1e-12);
        assert_relative_eq!(out.gamma, 0.5743, max_relative = 1e-4);
        assert_relative_eq!(out.u, DVector::from_column_slice(&[1.0, 0.0]), epsilon = 1e-12);
    }

    #[test]
    fn continuous_unsaturated_example() {
        let ms = vec![meas(1, [0.25, 0.0])];
        let out = continuous_control(&ms, &vec![(1, 1.0)], 0.8, 1.0, EPS_SING, 2);
        assert_relative_eq!(out.u_p_norm, 0.25f64.powf(0.8), max_relative = 1e-12);
        assert_relative_eq!(out.u_p_norm, 0.3299, max_relative = 1e-3);
        assert_eq!(out.gamma, 1.0);
        assert_relative_eq!(
            out.u,
            DVector::from_column_slice(&[0.25f64.powf(0.8), 0.0]),
            epsilon = 1e-12
        );
    }

    #[test]
    fn co_located_neighbors_give_zero_input() {
        let ms = vec![meas(1, [1e-13, 0.0]), meas(2, [0.0, 0.0])];
        let out = continuous_control(&ms, &vec![(1, 0.5), (2, 0.5)], 0.8, 1.0, EPS_SING, 2);
        assert_eq!(out.u, DVector::from_column_slice(&[0.0, 0.0]));
        assert_eq!(out.u_p_norm, 0.0);
        assert_eq!(out.gamma, 1.0);
    }

    #[test]
    fn zero_weights_give_zero_input() {
        let ms = vec![meas(1, [5.0, 5.0])];
        let out = continuous_control(&ms, &vec![(1, 0.0)], 0.8, 1.0, EPS_SING, 2);
        assert_eq!(out.u, DVector::from_column_slice(&[0.0, 0.0]));
        assert_eq!(out.gamma, 1.0);
    }

    #[test]
    fn discrete_examples() {
        let ms = vec![meas(1, [0.5, 0.0])];
        let out = discrete_control(&ms, &vec![(1, 1.0)], 1.0, 2);
        assert_relative_eq!(out.u, DVector::from_column_slice(&[0.5, 0.0]));
        assert_eq!(out.gamma, 1.0);

        let ms = vec![meas(1, [2.0, 0.0]), meas(2, [0.0, 2.0])];
        let out = discrete_control(&ms, &vec![(1, 0.5), (2, 0.5)], 1.0, 2);
        let inv_sqrt2 = 1.0 / 2f64.sqrt();
        assert_relative_eq!(
            out.u,
            DVector::from_column_slice(&[inv_sqrt2, inv_sqrt2]),
            epsilon = 1e-12
        );

        let ms = vec![meas(1, [0.0, 0.0])];
        let out = discrete_control(&ms, &vec![(1, 1.0)], 1.0, 2);
        assert_eq!(out.u, DVector::from_column_slice(&[0.0, 0.0]));

        // Empty weight map: zero output.
        let out = discrete_control(&[], &vec![], 1.0, 2);
        assert_eq!(out.u, DVector::from_column_slice(&[0.0, 0.0]));
    }

    #[test]
    fn discrete_mirror_adversaries_contract_within_bound() {
        // First-level worst case: 11 retained senders, 6 honest at the
        // reference (displacement e toward it) and 5 stealthy adversaries
        // mirrored at g*e on the opposite side. The post-step error must obey
        // e' <= (1 - gamma*(R-2F)/R) * e.
        for &(e, g, u_m) in
            &[(3.0, 0.9, 1.0), (0.4, 0.9, 1.0), (10.0, 1.0, 1.0), (2.0, 0.5, 0.3)]
        {
            let mut ms: Vec<Measurement> = (0..6).map(|i| meas(i, [-e, 0.0])).collect();
            ms.extend((6..11).map(|i| meas(i, [g * e, 0.0])));
            let w = 1.0 / 11.0;
            let weights: WeightMap = (0..11).map(|i| (i, w)).collect();
            let out = discrete_control(&ms, &weights, u_m, 2);
            // Agent at distance e from the reference along +x; reference at origin.
            let err_after = ((e + out.u[0]).powi(2) + out.u[1].powi(2)).sqrt();
            let c = 1.0 - out.gamma * (11.0 - 10.0) / 11.0;
            assert!(
                err_after <= c * e + 1e-12,
                "e = {e}, g = {g}: {err_after} > {c} * {e}"
            );
        }
    }

    #[test]
    fn alpha_to_one_limit_matches_linear_law() {
        let ms = vec![meas(1, [0.3, -0.2]), meas(2, [-0.1, 0.25]), meas(3, [0.05, 0.1])];
        let weights: WeightMap = vec![(1, 1.0 / 3.0), (2, 1.0 / 3.0), (3, 1.0 / 3.0)];
        let near_one = continuous_control(&ms, &weights, 1.0 - 1e-9, 10.0, EPS_SING, 2);
        let linear = discrete_control(&ms, &weights, 10.0, 2);
        assert!(
            (&near_one.u - &linear.u).norm() <= 1e-6 * linear.u.norm(),
            "alpha -> 1 limit deviates: {:?} vs {:?}",
            near_one.u,
            linear.u
        );
    }

    #[test]
    fn continuity_at_saturation_boundary() {
        // Sweep ||u_p|| across u_m and check ||u|| is continuous.
        let mut prev: Option<f64> = None;
        let mut max_jump: f64 = 0.0;
        for i in 0..2000 {
            let d = 0.5 + i as f64 * 1e-3; // distance sweep; alpha = 0.5 -> u_p_norm = sqrt(d)
            let ms = vec![meas(1, [d, 0.0])];
            let out = continuous_control(&ms, &vec![(1, 1.0)], 0.5, 1.0, EPS_SING, 2);
            if let Some(p) = prev {
                max_jump = max_jump.max((out.u.norm() - p).abs());
            }
            prev = Some(out.u.norm());
        }
        assert!(max_jump < 1e-3, "max jump {max_jump}");
    }

    proptest! {
        #[test]
        fn saturation_bound_and_direction(
            rels in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..8),
            alpha in 0.05f64..0.95,
            u_m in 0.1f64..5.0,
        ) {
            let ms: Vec<Measurement> = rels
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| meas(i, [x, y]))
                .collect();
            let w = 1.0 / ms.len() as f64;
            let weights: WeightMap = ms.iter().map(|m| (m.sender, w)).collect();
            for out in [
                continuous_control(&ms, &weights, alpha, u_m, EPS_SING, 2),
                discrete_control(&ms, &weights, u_m, 2),
            ] {
                // ||u|| <= u_m exactly (up to a few ulp).
                prop_assert!(out.u.norm() <= u_m * (1.0 + 4.0 * f64::EPSILON));
                prop_assert!(out.gamma > 0.0 && out.gamma <= 1.0);
                // Saturation never rotates the input.
                if out.u_p_norm > 1e-9 {
                    let dot = out.u.dot(&(out.u.clone() / out.gamma));
                    prop_assert!(dot >= 0.0);
                    let cross = out.u[0] * (out.u[1] / out.gamma) - out.u[1] * (out.u[0] / out.gamma);
                    prop_assert!(cross.abs() <= 1e-9);
                }
            }
        }

        #[test]
        fn scale_covariance_unsaturated(
            rels in proptest::collection::vec((-0.4f64..0.4, -0.4f64..0.4), 1..6),
            alpha in 0.2f64..0.9,
            scale in 0.1f64..2.0,
        ) {
            let u_m = 1e6; // keep both evaluations unsaturated
            let base: Vec<Measurement> = rels
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| meas(i, [x, y]))
                .collect();
            let scaled: Vec<Measurement> = rels
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| meas(i, [scale * x, scale * y]))
                .collect();
            let w = 1.0 / base.len() as f64;
            let weights: WeightMap = base.iter().map(|m| (m.sender, w)).collect();
            let out_base = continuous_control(&base, &weights, alpha, u_m, EPS_SING, 2);
            let out_scaled = continuous_control(&scaled, &weights, alpha, u_m, EPS_SING, 2);
            if out_base.u_p_norm > 1e-9 {
                let expected = out_base.u_p_norm * scale.powf(alpha);
                prop_assert!(
                    (out_scaled.u_p_norm - expected).abs() <= 1e-9 * expected.max(1.0),
                    "{} vs {}", out_scaled.u_p_norm, expected
                );
            }
        }

        #[test]
        fn zero_input_iff_all_below_eps_sing_or_zero_weights(
            dists in proptest::collection::vec(0.0f64..2.0, 1..6),
            gate_open in proptest::bool::ANY,
        ) {
            let ms: Vec<Measurement> = dists
                .iter()
                .enumerate()
                .map(|(i, &d)| meas(i, [d, 0.0]))
                .collect();
            let w = if gate_open { 1.0 / ms.len() as f64 } else { 0.0 };
            let weights: WeightMap = ms.iter().map(|m| (m.sender, w)).collect();
            let out = continuous_control(&ms, &weights, 0.7, 1.0, EPS_SING, 2);
            let all_co_located = dists.iter().all(|&d| d < EPS_SING);
            // Displacements here are colinear and nonnegative, so no cancellation.
            let expect_zero = !gate_open || all_co_located;
            prop_assert_eq!(out.u.norm() == 0.0, expect_zero);
        }
    }
}

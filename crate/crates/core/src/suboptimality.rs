//! Runtime certification inequalities: the one-step/m-step relaxed
//! Lyapunov condition, the two early-update conditions, the control
//! splice, and local suboptimality degrees.
//!
//! All comparisons use a relative slack `EPS_VALUE * max(1, |V|)` because
//! every quantity involved is a numerically optimized value; a strict
//! comparison would flap. Local degrees are reported unclipped; logs show
//! raw values, certification only happens against the requested bound.

use crate::error::{Error, Result};
use crate::ocp::OcpSolution;
use crate::scalar::Scalar;

/// Relative slack for value-function comparisons.
pub const EPS_VALUE: f64 = 1e-9;

/// Below this, an accumulated stage cost counts as zero (equilibrium).
pub const EPS_COST: f64 = 1e-12;

/// Outcome of one inequality evaluation.
#[derive(Clone, Copy, Debug)]
pub struct AlphaCheck<T> {
    pub lhs: T,
    pub rhs: T,
    /// Unclipped local suboptimality degree; may be negative or exceed 1.
    pub alpha_local: T,
    pub satisfied: bool,
    pub slack_used: T,
}

/// Control sequence spliced at `update_index`, with the stage-cost tails of
/// both branches (full tails; callers slice to their control horizon).
#[derive(Clone, Debug)]
pub struct SpliceResult<T> {
    pub new_controls: Vec<Vec<T>>,
    pub update_index: usize,
    pub old_tail_costs: Vec<T>,
    pub new_tail_costs: Vec<T>,
}

fn slack_for<T: Scalar>(scale: T) -> T {
    T::of(EPS_VALUE) * T::one().max(scale.abs())
}

/// Maximal `alpha` with `v_now >= v_next + alpha * cost_sum`. When the cost
/// sum is (numerically) zero the inequality is vacuous (the loop sits at
/// the equilibrium) and the degree is 1 by convention.
pub fn local_alpha<T: Scalar>(v_now: T, v_next: T, cost_sum: T) -> T {
    if cost_sum > T::of(EPS_COST) {
        (v_now - v_next) / cost_sum
    } else {
        T::one()
    }
}

/// The m-step relaxed Lyapunov inequality
/// `V_N(x_n) >= V_N(x_{n+1}) + alpha_bar * sum_{k<m} l_k`.
pub fn check_mstep<T: Scalar>(
    sol_now: &OcpSolution<T>,
    v_next: T,
    m: usize,
    alpha_bar: T,
) -> Result<AlphaCheck<T>> {
    if m == 0 || m > sol_now.horizon - 1 {
        return Err(Error::InvalidInput {
            what: "m",
            reason: format!("must lie in [1, {}], got {m}", sol_now.horizon - 1),
        });
    }
    if !(alpha_bar > T::zero() && alpha_bar <= T::one()) {
        return Err(Error::InvalidInput {
            what: "alpha_bar",
            reason: "must lie in (0, 1]".into(),
        });
    }
    let cost_sum = sol_now.stage_costs[..m]
        .iter()
        .fold(T::zero(), |s, &c| s + c);
    let lhs = sol_now.value;
    let rhs = v_next + alpha_bar * cost_sum;
    let slack = slack_for(lhs);
    Ok(AlphaCheck {
        lhs,
        rhs,
        alpha_local: local_alpha(sol_now.value, v_next, cost_sum),
        satisfied: lhs >= rhs - slack,
        slack_used: slack,
    })
}

/// Splice the resolved control into the old one at index `j`:
/// the result keeps `old.controls[k]` for `k < j` and continues with
/// `resolved.controls[k - j]` from there. `resolved` must start exactly at
/// the `j`-th open-loop state of `old`.
pub fn splice<T: Scalar>(
    old: &OcpSolution<T>,
    resolved: &OcpSolution<T>,
    j: usize,
) -> Result<SpliceResult<T>> {
    if j == 0 || j > old.horizon - 1 {
        return Err(Error::InvalidInput {
            what: "update index",
            reason: format!("j = {j} must lie in [1, {}]", old.horizon - 1),
        });
    }
    if resolved.horizon != old.horizon {
        return Err(Error::Inconsistent(format!(
            "horizons differ: {} vs {}",
            old.horizon, resolved.horizon
        )));
    }
    let anchor = &old.trajectory[j];
    let tol = T::of(1e-12);
    for (i, (a, b)) in anchor.iter().zip(&resolved.initial_state).enumerate() {
        if (*a - *b).abs() > tol {
            return Err(Error::Inconsistent(format!(
                "resolved solution does not start at the j-th open-loop state \
                 (coordinate {i}: {a} vs {b})"
            )));
        }
    }
    let n = old.horizon;
    let mut new_controls = Vec::with_capacity(n);
    new_controls.extend_from_slice(&old.controls[..j]);
    new_controls.extend_from_slice(&resolved.controls[..n - j]);
    Ok(SpliceResult {
        new_controls,
        update_index: j,
        old_tail_costs: old.stage_costs[j..].to_vec(),
        new_tail_costs: resolved.stage_costs[..n - j].to_vec(),
    })
}

/// First update condition: the spliced control keeps the certified degree
/// if
/// `V_N(end of splice) - V_{N-j}(x_j) <= (1 - a) * sum_{k<j} l_old
///                                       - a * sum_{k=j}^{m-1} l_new`.
///
/// `v_now` is the comparison anchor `V_N(x_n)` fixed at the start of the
/// event; the tail value `V_{N-j}(x_j)` is derived from it and the stored
/// prefix costs (for a fresh solver solution this is exactly
/// `tail_value(old, j)`), never re-solved. `v_end_new` is `V_N` at the
/// spliced endpoint, computed by the caller.
///
/// The reported `alpha_local` is the degree the spliced sequence certifies
/// against `v_now`.
pub fn check_update_a<T: Scalar>(
    v_now: T,
    old: &OcpSolution<T>,
    resolved: &OcpSolution<T>,
    v_end_new: T,
    j: usize,
    m: usize,
    alpha_bar: T,
) -> Result<AlphaCheck<T>> {
    if m < 2 || m > old.horizon - 1 {
        return Err(Error::InvalidInput {
            what: "m",
            reason: format!("must lie in [2, {}], got {m}", old.horizon - 1),
        });
    }
    if j == 0 || j > m - 1 {
        return Err(Error::InvalidInput {
            what: "update index",
            reason: format!("j = {j} must lie in [1, {}]", m - 1),
        });
    }
    if resolved.stage_costs.len() < m - j {
        return Err(Error::InvalidInput {
            what: "resolved solution",
            reason: "horizon too short for the requested tail".into(),
        });
    }
    let prefix = old.stage_costs[..j].iter().fold(T::zero(), |s, &c| s + c);
    let new_tail = resolved.stage_costs[..m - j]
        .iter()
        .fold(T::zero(), |s, &c| s + c);
    let tail_value = v_now - prefix;
    let lhs = v_end_new - tail_value;
    let rhs = (T::one() - alpha_bar) * prefix - alpha_bar * new_tail;
    let slack = slack_for(v_now);
    Ok(AlphaCheck {
        lhs,
        rhs,
        alpha_local: local_alpha(v_now, v_end_new, prefix + new_tail),
        satisfied: lhs <= rhs + slack,
        slack_used: slack,
    })
}

/// Second update condition, anchored at the stored endpoint value instead
/// of `V_N(x_n)`:
/// `V_N(end of splice) - V_N(old endpoint) <= a * sum (l_old - l_new)`
/// over the exchanged tail. More conservative than the first condition but
/// allows re-anchoring after a successful update.
///
/// `alpha_local` here is the endpoint-value decrease per unit of exchanged
/// stage cost, 1 when the tails match (identity splice).
pub fn check_update_b<T: Scalar>(
    v_end_new: T,
    v_end_old: T,
    old_tail_costs: &[T],
    new_tail_costs: &[T],
    alpha_bar: T,
) -> Result<AlphaCheck<T>> {
    if old_tail_costs.len() != new_tail_costs.len() || old_tail_costs.is_empty() {
        return Err(Error::DimensionMismatch {
            what: "tail costs",
            expected: old_tail_costs.len().max(1),
            got: new_tail_costs.len(),
        });
    }
    let diff = old_tail_costs
        .iter()
        .zip(new_tail_costs)
        .fold(T::zero(), |s, (&o, &n)| s + (o - n));
    let lhs = v_end_new - v_end_old;
    let rhs = alpha_bar * diff;
    let slack = slack_for(v_end_old);
    let alpha_local = if diff.abs() > T::of(EPS_COST) {
        (v_end_old - v_end_new) / diff
    } else {
        T::one()
    };
    Ok(AlphaCheck {
        lhs,
        rhs,
        alpha_local,
        satisfied: lhs <= rhs + slack,
        slack_used: slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::make_linear_scalar;
    use crate::ocp::{rollout, solve, tail_value, SolverReport};
    use proptest::prelude::*;

    fn fake_solution(value: f64, stage_costs: Vec<f64>) -> OcpSolution<f64> {
        let n = stage_costs.len();
        OcpSolution {
            initial_state: vec![0.0],
            horizon: n,
            controls: vec![vec![0.0]; n],
            trajectory: vec![vec![0.0]; n + 1],
            stage_costs,
            value,
            report: SolverReport {
                iterations: 0,
                grad_norm: 0.0,
                converged: true,
            },
        }
    }

    #[test]
    fn local_alpha_arithmetic() {
        assert_eq!(local_alpha(10.0, 8.0, 4.0), 0.5);
        assert_eq!(local_alpha(5.0, 5.0, 2.0), 0.0);
        assert_eq!(local_alpha(3.0, 1.0, 0.0), 1.0);
    }

    proptest! {
        #[test]
        fn local_alpha_scale_invariant(
            v_now in -100.0..100.0f64,
            v_next in -100.0..100.0f64,
            cost in 1e-6..100.0f64,
            c in 1e-3..1e3f64,
        ) {
            let base = local_alpha(v_now, v_next, cost);
            let scaled = local_alpha(c * v_now, c * v_next, c * cost);
            prop_assert!((base - scaled).abs() <= 1e-9 * base.abs().max(1.0));
        }
    }

    #[test]
    fn mstep_check_arithmetic() {
        let sol = fake_solution(10.0, vec![4.0, 3.0, 2.0]);
        let ok = check_mstep(&sol, 8.0, 1, 0.5).unwrap();
        assert!(ok.satisfied); // 10 >= 8 + 0.5*4
        assert_eq!(ok.alpha_local, 0.5);
        let not = check_mstep(&sol, 8.0, 1, 0.6).unwrap();
        assert!(!not.satisfied); // 10 < 8 + 2.4
        assert!(check_mstep(&sol, 8.0, 3, 0.5).is_err()); // m > N-1
        assert!(check_mstep(&sol, 8.0, 0, 0.5).is_err());
    }

    #[test]
    fn mstep_alpha_matches_riccati_ratio() {
        // alpha_local of the one-step check equals the plain value ratio.
        let sys = make_linear_scalar::<f64>(2.0, 1.0, 1.0, 1.0).unwrap();
        let n = 5;
        let sol = solve(&sys, &[1.0], n, None).unwrap();
        let next = solve(&sys, &sol.trajectory[1], n, None).unwrap();
        let check = check_mstep(&sol, next.value, 1, 0.5).unwrap();
        let direct = (sol.value - next.value) / sol.stage_costs[0];
        assert!((check.alpha_local - direct).abs() <= 1e-8);
    }

    #[test]
    fn splice_definition() {
        let mut old = fake_solution(6.0, vec![1.0, 2.0, 3.0]);
        old.controls = vec![vec![10.0], vec![11.0], vec![12.0]];
        old.trajectory = vec![vec![0.0], vec![0.5], vec![0.7], vec![0.8]];
        let mut resolved = fake_solution(4.0, vec![0.5, 0.6, 0.7]);
        resolved.controls = vec![vec![20.0], vec![21.0], vec![22.0]];
        resolved.initial_state = vec![0.5];
        let s = splice(&old, &resolved, 1).unwrap();
        assert_eq!(s.new_controls, vec![vec![10.0], vec![20.0], vec![21.0]]);
        assert_eq!(s.old_tail_costs, vec![2.0, 3.0]);
        assert_eq!(s.new_tail_costs, vec![0.5, 0.6]);
        assert_eq!(s.update_index, 1);

        // State mismatch is a broken pipeline.
        resolved.initial_state = vec![0.6];
        assert!(matches!(
            splice(&old, &resolved, 1),
            Err(Error::Inconsistent(_))
        ));
    }

    #[test]
    fn splice_of_equilibrium_solutions_is_identity() {
        let old = fake_solution(0.0, vec![0.0; 4]);
        let resolved = fake_solution(0.0, vec![0.0; 4]);
        let s = splice(&old, &resolved, 2).unwrap();
        assert_eq!(s.new_controls, vec![vec![0.0]; 4]);
    }

    #[test]
    fn spliced_rollout_follows_resolved_trajectory() {
        let sys = make_linear_scalar::<f64>(1.8, 0.7, 1.0, 0.5).unwrap();
        let n = 6;
        let old = solve(&sys, &[2.0], n, None).unwrap();
        let j = 2;
        let resolved = solve(&sys, &old.trajectory[j], n, None).unwrap();
        let s = splice(&old, &resolved, j).unwrap();
        let (traj, _, _) = rollout(&sys, &old.initial_state, &s.new_controls).unwrap();
        for k in j..=n {
            let expect = &resolved.trajectory[k - j];
            assert!(
                (traj[k][0] - expect[0]).abs() <= 1e-10,
                "k = {k}: {} vs {}",
                traj[k][0],
                expect[0]
            );
        }
    }

    #[test]
    fn update_a_hand_built() {
        // V_now = 8 so the tail value after one stage of cost 2 is 6.
        let old = fake_solution(8.0, vec![2.0, 1.5, 1.5, 1.0]);
        let resolved = fake_solution(5.0, vec![1.0, 1.0, 1.0, 1.0]);
        let check = check_update_a(8.0, &old, &resolved, 5.0, 1, 3, 0.5).unwrap();
        assert_eq!(check.lhs, -1.0); // 5 - 6
        assert_eq!(check.rhs, 0.0); // 0.5*2 - 0.5*(1+1)
        assert!(check.satisfied);
        assert!(check_update_a(8.0, &old, &resolved, 5.0, 3, 3, 0.5).is_err());
        assert!(check_update_a(8.0, &old, &resolved, 5.0, 0, 3, 0.5).is_err());
    }

    #[test]
    fn update_a_equality_at_equilibrium() {
        let old = fake_solution(0.0, vec![0.0; 3]);
        let resolved = fake_solution(0.0, vec![0.0; 3]);
        let check = check_update_a(0.0, &old, &resolved, 0.0, 1, 2, 0.5).unwrap();
        assert_eq!(check.lhs, 0.0);
        assert_eq!(check.rhs, 0.0);
        assert!(check.satisfied);
    }

    #[test]
    fn update_b_hand_built() {
        let check = check_update_b(4.0, 5.0, &[2.0], &[3.0], 0.5).unwrap();
        assert_eq!(check.lhs, -1.0);
        assert_eq!(check.rhs, -0.5);
        assert!(check.satisfied);
        assert!(check_update_b(4.0, 5.0, &[2.0], &[3.0, 1.0], 0.5).is_err());
    }

    #[test]
    fn update_b_identity_splice() {
        let check = check_update_b(5.0, 5.0, &[1.0, 2.0], &[1.0, 2.0], 0.3).unwrap();
        assert_eq!(check.lhs, 0.0);
        assert_eq!(check.rhs, 0.0);
        assert!(check.satisfied);
        assert_eq!(check.alpha_local, 1.0);
    }

    #[test]
    fn update_a_implies_spliced_mstep() {
        // Whenever condition A holds, the relaxed Lyapunov inequality for
        // the spliced control follows; mirrors the algebra of the proof.
        let sys = make_linear_scalar::<f64>(1.6, 1.0, 1.0, 0.8).unwrap();
        let n = 7;
        let alpha_bar = 0.4;
        let mut checked = 0;
        for x0 in [-2.0, -0.7, 1.3, 2.4] {
            let old = solve(&sys, &[x0], n, None).unwrap();
            for m in 2..=4usize {
                for j in 1..m {
                    let resolved = solve(&sys, &old.trajectory[j], n, None).unwrap();
                    let end = &resolved.trajectory[m - j];
                    let v_end_new = solve(&sys, end, n, None).unwrap().value;
                    let a =
                        check_update_a(old.value, &old, &resolved, v_end_new, j, m, alpha_bar)
                            .unwrap();
                    if a.satisfied {
                        checked += 1;
                        let spliced_cost: f64 = old.stage_costs[..j].iter().sum::<f64>()
                            + resolved.stage_costs[..m - j].iter().sum::<f64>();
                        let lyapunov =
                            old.value - v_end_new - alpha_bar * spliced_cost;
                        assert!(
                            lyapunov >= -2e-9 * old.value.max(1.0),
                            "x0={x0} m={m} j={j}: spliced inequality violated by {lyapunov}"
                        );
                    }
                }
            }
        }
        assert!(checked > 0, "no instance satisfied condition A");
    }

    #[test]
    fn allowed_energy_increase_instance() {
        // Condition A never compares against the old endpoint value, so a
        // satisfied update may raise it; build such an instance directly.
        let old = fake_solution(10.0, vec![3.0, 1.0, 1.0]);
        let resolved = fake_solution(6.5, vec![0.5, 0.5, 0.5]);
        let v_end_old = 4.0;
        let v_end_new = 4.5; // larger than the old endpoint value
        let check = check_update_a(10.0, &old, &resolved, v_end_new, 1, 2, 0.5).unwrap();
        // lhs = 4.5 - 7 = -2.5, rhs = 0.5*3 - 0.5*0.5 = 1.25
        assert!(check.satisfied);
        assert!(v_end_new > v_end_old);
    }

    #[test]
    fn tail_bookkeeping_is_exact() {
        let sys = make_linear_scalar::<f64>(2.0, 1.0, 1.0, 1.0).unwrap();
        let sol = solve(&sys, &[1.7], 6, None).unwrap();
        for j in 0..6 {
            let prefix: f64 = sol.stage_costs[..j].iter().sum();
            let t = tail_value(&sol, j).unwrap();
            assert!(
                (t + prefix - sol.value).abs() <= 4.0 * f64::EPSILON * sol.value.max(1.0),
                "j = {j}"
            );
        }
    }
}

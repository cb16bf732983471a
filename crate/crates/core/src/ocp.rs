//! Finite-horizon optimal control by direct single shooting.
//!
//! Decision variables are the stacked controls; states are eliminated by
//! forward simulation. Gradients come from central finite differences with
//! trajectory-prefix reuse, and the search is the projected BFGS from
//! [`crate::optimize`]. With state dimension three and horizons around
//! thirty this is both simpler and faster than multiple shooting, and it
//! keeps the value of a solution identical to the cost of rolling out its
//! controls.

use crate::dynamics::ControlSystem;
use crate::error::{Error, Result};
use crate::linalg::first_non_finite;
use crate::optimize::{self, BfgsOptions};
use crate::scalar::Scalar;

/// Outcome flags of one shooting solve.
#[derive(Clone, Copy, Debug)]
pub struct SolverReport<T> {
    pub iterations: usize,
    pub grad_norm: T,
    /// Whether the gradient tolerance was met. Non-convergence is reported,
    /// not fatal: the certification layer treats an unconverged value as a
    /// valid upper bound and flags the event.
    pub converged: bool,
}

/// Optimal open-loop control, trajectory, per-stage costs and value for one
/// finite-horizon problem. Immutable after construction.
#[derive(Clone, Debug)]
pub struct OcpSolution<T> {
    pub initial_state: Vec<T>,
    pub horizon: usize,
    /// `horizon` control vectors.
    pub controls: Vec<Vec<T>>,
    /// `horizon + 1` states; `trajectory[k+1] = step(trajectory[k], controls[k])`.
    pub trajectory: Vec<Vec<T>>,
    /// Nonnegative stage costs, one per control.
    pub stage_costs: Vec<T>,
    /// Sum of the stage costs (stored as that sum).
    pub value: T,
    pub report: SolverReport<T>,
}

pub struct SolveOptions<T> {
    pub grad_tol: T,
    pub max_iter: usize,
    /// Relative central-difference step: `h = fd_step * max(1, |u_k|)`.
    pub fd_step: T,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            grad_tol: T::of(1e-8),
            max_iter: 500,
            fd_step: T::of(1e-6),
        }
    }
}

/// Simulate `controls` from `x0`; returns the trajectory (one state longer
/// than the control sequence), the stage costs, and their sum.
pub fn rollout<T: Scalar>(
    sys: &ControlSystem<T>,
    x0: &[T],
    controls: &[Vec<T>],
) -> Result<(Vec<Vec<T>>, Vec<T>, T)> {
    if controls.is_empty() {
        return Err(Error::InvalidInput {
            what: "controls",
            reason: "need at least one control".into(),
        });
    }
    let mut trajectory = Vec::with_capacity(controls.len() + 1);
    let mut stage_costs = Vec::with_capacity(controls.len());
    let mut total = T::zero();
    trajectory.push(x0.to_vec());
    for (k, u) in controls.iter().enumerate() {
        let x = trajectory.last().unwrap();
        let (next, cost) = sys.step_and_cost(x, u).map_err(|e| match e {
            Error::Divergence { coordinate, .. } => Error::Divergence {
                stage: k,
                coordinate,
            },
            other => other,
        })?;
        total += cost;
        stage_costs.push(cost);
        trajectory.push(next);
    }
    Ok((trajectory, stage_costs, total))
}

/// Solve the horizon-`n` problem from `x0` with the default tolerances.
pub fn solve<T: Scalar>(
    sys: &ControlSystem<T>,
    x0: &[T],
    n: usize,
    warm_start: Option<&[Vec<T>]>,
) -> Result<OcpSolution<T>> {
    solve_with(sys, x0, n, warm_start, &SolveOptions::default())
}

pub fn solve_with<T: Scalar>(
    sys: &ControlSystem<T>,
    x0: &[T],
    n: usize,
    warm_start: Option<&[Vec<T>]>,
    opts: &SolveOptions<T>,
) -> Result<OcpSolution<T>> {
    if n < 2 {
        return Err(Error::InvalidInput {
            what: "horizon",
            reason: format!("must be at least 2, got {n}"),
        });
    }
    if x0.len() != sys.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: sys.state_dim(),
            got: x0.len(),
        });
    }
    if let Some(i) = first_non_finite(x0) {
        return Err(Error::Divergence {
            stage: 0,
            coordinate: i,
        });
    }
    let cd = sys.control_dim();
    let mut z0 = Vec::with_capacity(n * cd);
    match warm_start {
        Some(ws) => {
            if ws.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "warm start",
                    expected: n,
                    got: ws.len(),
                });
            }
            for u in ws {
                if u.len() != cd {
                    return Err(Error::DimensionMismatch {
                        what: "warm-start control",
                        expected: cd,
                        got: u.len(),
                    });
                }
                z0.extend_from_slice(u);
            }
        }
        None => {
            for _ in 0..n {
                z0.extend_from_slice(sys.equilibrium_control());
            }
        }
    }

    // Box bounds tiled over the horizon.
    let tiled = sys.control_bounds().map(|b| {
        let mut lo = Vec::with_capacity(n * cd);
        let mut hi = Vec::with_capacity(n * cd);
        for _ in 0..n {
            lo.extend_from_slice(&b.lo);
            hi.extend_from_slice(&b.hi);
        }
        (lo, hi)
    });

    let objective = |z: &[T]| -> T {
        let mut x = x0.to_vec();
        let mut total = T::zero();
        for k in 0..n {
            let (next, cost) = sys.propagate(&x, &z[k * cd..(k + 1) * cd]);
            total += cost;
            if !total.is_finite() || first_non_finite(&next).is_some() {
                return T::infinity();
            }
            x = next;
        }
        total
    };

    // Central differences with prefix reuse: perturbing u_k only changes
    // stages k..n-1, so the forward pass up to k is shared.
    let gradient = |z: &[T]| -> Vec<T> {
        let mut states = Vec::with_capacity(n);
        let mut prefix = Vec::with_capacity(n);
        let mut x = x0.to_vec();
        let mut acc = T::zero();
        for k in 0..n {
            states.push(x.clone());
            prefix.push(acc);
            let (next, cost) = sys.propagate(&x, &z[k * cd..(k + 1) * cd]);
            acc += cost;
            x = next;
        }

        let tail = |k: usize, u_k: &[T], z: &[T]| -> T {
            let (mut x, mut c) = sys.propagate(&states[k], u_k);
            for i in k + 1..n {
                let (next, cost) = sys.propagate(&x, &z[i * cd..(i + 1) * cd]);
                c += cost;
                x = next;
            }
            c
        };

        let mut g = vec![T::zero(); n * cd];
        let mut u_buf = vec![T::zero(); cd];
        for k in 0..n {
            for c in 0..cd {
                let idx = k * cd + c;
                let h = opts.fd_step * T::one().max(z[idx].abs());
                u_buf.copy_from_slice(&z[k * cd..(k + 1) * cd]);
                u_buf[c] = z[idx] + h;
                let plus = prefix[k] + tail(k, &u_buf, z);
                u_buf[c] = z[idx] - h;
                let minus = prefix[k] + tail(k, &u_buf, z);
                g[idx] = (plus - minus) / (h + h);
            }
        }
        g
    };

    let bfgs_opts = BfgsOptions {
        grad_tol: opts.grad_tol,
        max_iter: opts.max_iter,
        ..BfgsOptions::default()
    };
    let bounds = tiled
        .as_ref()
        .map(|(lo, hi)| optimize::BoxBounds { lo, hi });
    let result = optimize::minimize(objective, gradient, z0, bounds, &bfgs_opts);

    let controls: Vec<Vec<T>> = (0..n)
        .map(|k| result.x[k * cd..(k + 1) * cd].to_vec())
        .collect();
    let (trajectory, stage_costs, value) = rollout(sys, x0, &controls)?;
    Ok(OcpSolution {
        initial_state: x0.to_vec(),
        horizon: n,
        controls,
        trajectory,
        stage_costs,
        value,
        report: SolverReport {
            iterations: result.iterations,
            grad_norm: result.grad_norm,
            converged: result.converged,
        },
    })
}

/// Value of the tail problem at the `j`-th open-loop state: by the
/// principle of optimality this equals `V_{N-j}` there, and it is obtained
/// from the stored value, never by re-solving.
pub fn tail_value<T: Scalar>(sol: &OcpSolution<T>, j: usize) -> Result<T> {
    if j >= sol.horizon {
        return Err(Error::InvalidInput {
            what: "tail index",
            reason: format!("j = {j} out of range for horizon {}", sol.horizon),
        });
    }
    let spent = sol.stage_costs[..j]
        .iter()
        .fold(T::zero(), |s, &c| s + c);
    Ok(sol.value - spent)
}

/// Receding-horizon warm start: drop the first `m` controls and pad with
/// `m` copies of the last one.
pub fn shift_warm_start<T: Scalar>(prev: &OcpSolution<T>, m: usize) -> Result<Vec<Vec<T>>> {
    if m == 0 || m >= prev.horizon {
        return Err(Error::InvalidInput {
            what: "shift",
            reason: format!("m = {m} must lie in [1, {}]", prev.horizon - 1),
        });
    }
    let mut shifted: Vec<Vec<T>> = prev.controls[m..].to_vec();
    let last = prev.controls.last().unwrap().clone();
    shifted.resize(prev.horizon, last);
    Ok(shifted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{make_linear_scalar, sync_generator, SyncGenParams};

    /// Backward Riccati recursion for `x+ = a x + b u`, cost `q x^2 + r u^2`,
    /// zero terminal weight: `P_0 = 0`, and `V_N(x) = P_N x^2`.
    /// (Direct enumeration check: a=2, b=1, q=r=1 gives V_2(1) = 3 by hand.)
    fn riccati_p(a: f64, b: f64, q: f64, r: f64, n: usize) -> Vec<f64> {
        let mut p = vec![0.0];
        for k in 0..n {
            let pk = p[k];
            p.push(q + a * a * pk - a * a * b * b * pk * pk / (r + b * b * pk));
        }
        p
    }

    #[test]
    fn rollout_one_step_arithmetic() {
        let sys = make_linear_scalar::<f64>(2.0, 1.0, 1.0, 1.0).unwrap();
        let (traj, costs, total) = rollout(&sys, &[1.0], &[vec![-2.0]]).unwrap();
        assert_eq!(traj, vec![vec![1.0], vec![0.0]]);
        assert_eq!(costs, vec![5.0]); // 1*1^2 + 1*(-2)^2
        assert_eq!(total, 5.0);
    }

    #[test]
    fn rollout_at_equilibrium_costs_nothing() {
        let sys = sync_generator::<f64>(&SyncGenParams::default()).unwrap();
        let x_star = sys.equilibrium_state().to_vec();
        let controls = vec![vec![0.0]; 5];
        let (traj, _, total) = rollout(&sys, &x_star, &controls).unwrap();
        assert!(total.abs() <= 1e-10);
        for x in traj {
            for i in 0..3 {
                assert!((x[i] - x_star[i]).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn rollout_open_loop_refinement() {
        let sys = sync_generator::<f64>(&SyncGenParams::default()).unwrap();
        let fine = sys.clone().with_substeps(100).unwrap();
        let controls = vec![vec![0.0]; 19];
        let x0 = [1.02, 0.1, 1.014];
        let (_, _, coarse_cost) = rollout(&sys, &x0, &controls).unwrap();
        let (_, _, fine_cost) = rollout(&fine, &x0, &controls).unwrap();
        assert!(
            ((coarse_cost - fine_cost) / fine_cost).abs() <= 1e-6,
            "{coarse_cost} vs {fine_cost}"
        );
    }

    #[test]
    fn riccati_value_n2() {
        let sys = make_linear_scalar::<f64>(2.0, 1.0, 1.0, 1.0).unwrap();
        let sol = solve(&sys, &[1.0], 2, None).unwrap();
        let expect = riccati_p(2.0, 1.0, 1.0, 1.0, 2)[2]; // = 3
        assert_eq!(expect, 3.0);
        assert!(
            ((sol.value - expect) / expect).abs() <= 1e-8,
            "V_2 = {} vs {expect}",
            sol.value
        );
        assert!(sol.report.converged);
    }

    #[test]
    fn riccati_equivalence_grid() {
        let (a, b, q, r) = (2.0, 1.0, 1.0, 1.0);
        let sys = make_linear_scalar::<f64>(a, b, q, r).unwrap();
        let p = riccati_p(a, b, q, r, 15);
        for n in 2..=15 {
            for &x0 in &[-2.0, -1.0, 1.0, 2.0] {
                let sol = solve(&sys, &[x0], n, None).unwrap();
                let expect = p[n] * x0 * x0;
                assert!(
                    ((sol.value - expect) / expect).abs() <= 1e-6,
                    "N={n} x0={x0}: {} vs {expect}",
                    sol.value
                );
            }
        }
    }

    #[test]
    fn solve_at_equilibrium() {
        let sys = make_linear_scalar::<f64>(2.0, 1.0, 1.0, 1.0).unwrap();
        let sol = solve(&sys, &[0.0], 4, None).unwrap();
        assert!(sol.value.abs() <= 1e-10);
        for u in &sol.controls {
            assert!(u[0].abs() <= 1e-6);
        }
    }

    #[test]
    fn tail_value_matches_riccati() {
        let (a, b, q, r) = (2.0, 1.0, 1.0, 1.0);
        let sys = make_linear_scalar::<f64>(a, b, q, r).unwrap();
        let n = 6;
        let sol = solve(&sys, &[1.0], n, None).unwrap();
        assert_eq!(tail_value(&sol, 0).unwrap(), sol.value);
        let p = riccati_p(a, b, q, r, n);
        let x1 = sol.trajectory[1][0];
        let expect = p[n - 1] * x1 * x1;
        let got = tail_value(&sol, 1).unwrap();
        assert!(
            ((got - expect) / expect).abs() <= 1e-6,
            "{got} vs {expect}"
        );
        assert!(tail_value(&sol, n).is_err());
    }

    #[test]
    fn tail_value_zero_at_equilibrium() {
        let sys = make_linear_scalar::<f64>(2.0, 1.0, 1.0, 1.0).unwrap();
        let sol = solve(&sys, &[0.0], 4, None).unwrap();
        for j in 0..4 {
            assert!(tail_value(&sol, j).unwrap().abs() <= 1e-10);
        }
    }

    #[test]
    fn shift_warm_start_examples() {
        let sys = make_linear_scalar::<f64>(2.0, 1.0, 1.0, 1.0).unwrap();
        let mut sol = solve(&sys, &[1.0], 3, None).unwrap();
        sol.controls = vec![vec![1.0], vec![2.0], vec![3.0]];
        assert_eq!(
            shift_warm_start(&sol, 1).unwrap(),
            vec![vec![2.0], vec![3.0], vec![3.0]]
        );
        assert_eq!(
            shift_warm_start(&sol, 2).unwrap(),
            vec![vec![3.0], vec![3.0], vec![3.0]]
        );
        assert!(shift_warm_start(&sol, 3).is_err());
        assert!(shift_warm_start(&sol, 0).is_err());
    }

    #[test]
    fn warm_start_dominance() {
        let sys = make_linear_scalar::<f64>(2.0, 1.0, 1.0, 1.0).unwrap();
        // Deliberately poor warm start; the solve must not end up worse.
        let warm = vec![vec![0.5], vec![-1.5], vec![0.3], vec![0.0]];
        let (_, _, warm_cost) = rollout(&sys, &[1.0], &warm).unwrap();
        let sol = solve(&sys, &[1.0], 4, Some(&warm)).unwrap();
        assert!(sol.value <= warm_cost + 1e-12);
    }

    #[test]
    fn value_monotone_in_horizon() {
        let sys = make_linear_scalar::<f64>(2.0, 1.0, 1.0, 1.0).unwrap();
        let mut prev = 0.0;
        for n in 2..=10 {
            let sol = solve(&sys, &[1.5], n, None).unwrap();
            assert!(
                sol.value + 1e-9 >= prev,
                "V_{n} = {} dropped below V_{} = {prev}",
                sol.value,
                n - 1
            );
            prev = sol.value;
        }
    }

    #[test]
    fn bellman_consistency_syncgen() {
        let sys = sync_generator::<f64>(&SyncGenParams::default()).unwrap();
        let x_star = sys.equilibrium_state().to_vec();
        let n = 6;
        // Ten pseudo-random states around the operating region.
        let mut state = 0xD1B54A32D192ED03u64;
        let mut next_unit = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..10 {
            let x0: Vec<f64> = (0..3)
                .map(|i| x_star[i] + 0.2 * (next_unit() - 0.5))
                .collect();
            let sol = solve(&sys, &x0, n, None).unwrap();
            let tail = solve(&sys, &sol.trajectory[1], n - 1, None).unwrap();
            let lhs = sol.value;
            let rhs = sol.stage_costs[0] + tail.value;
            assert!(
                (lhs - rhs).abs() <= 1e-6 * lhs.max(1.0),
                "V_N = {lhs} vs l_0 + V_(N-1) = {rhs}"
            );
        }
    }

    #[test]
    fn solved_trajectory_is_step_consistent() {
        let sys = sync_generator::<f64>(&SyncGenParams::default()).unwrap();
        let x0 = [1.02, 0.1, 1.014];
        let sol = solve(&sys, &x0, 4, None).unwrap();
        for k in 0..sol.horizon {
            let next = sys.step(&sol.trajectory[k], &sol.controls[k]).unwrap();
            for i in 0..3 {
                assert!(
                    (next[i] - sol.trajectory[k + 1][i]).abs() <= 1e-12,
                    "stage {k} coordinate {i}"
                );
            }
        }
        let total: f64 = sol.stage_costs.iter().sum();
        assert_eq!(total, sol.value);
        assert!(sol.stage_costs.iter().all(|&c| c >= 0.0));
    }

    #[test]
    fn horizon_below_two_is_rejected() {
        let sys = make_linear_scalar::<f64>(2.0, 1.0, 1.0, 1.0).unwrap();
        assert!(solve(&sys, &[1.0], 1, None).is_err());
    }

    #[test]
    fn solve_respects_bounds() {
        let sys = make_linear_scalar::<f64>(2.0, 1.0, 1.0, 1.0)
            .unwrap()
            .with_bounds(vec![-0.5], vec![0.5])
            .unwrap();
        let sol = solve(&sys, &[1.0], 4, None).unwrap();
        for u in &sol.controls {
            assert!(u[0] >= -0.5 - 1e-12 && u[0] <= 0.5 + 1e-12);
        }
        // The unconstrained optimum uses |u| > 0.5 here, so the first
        // control must sit on the bound.
        assert!((sol.controls[0][0] + 0.5).abs() <= 1e-6);
    }
}

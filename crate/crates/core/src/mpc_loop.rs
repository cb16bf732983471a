//! Closed-loop drivers: the certifying receding-horizon loop with adaptive
//! control horizon, its two early-update refinements, and the classical
//! one-control-per-instant baseline.
//!
//! Every driver produces an [`ExecutionLog`]: per-instant rows, per-event
//! certification records, the update schedule, and run totals. Runs are
//! deterministic: there is no randomness anywhere and the shooting solver
//! is a pure function, so a log plus its configuration replays bit for bit.

use std::time::{Duration, Instant};

use crate::dynamics::ControlSystem;
use crate::error::{Error, Result};
use crate::linalg::norm_inf;
use crate::ocp::{self, OcpSolution, SolveOptions};
use crate::scalar::Scalar;
use crate::suboptimality::{
    check_mstep, check_update_a, check_update_b, splice, AlphaCheck, EPS_VALUE,
};

/// Message recorded when the certification loop exhausts the horizon. The
/// standard remedy of prolonging the prediction horizon and re-solving is
/// deliberately not applied; the loop falls back to a single control and
/// carries on.
pub const DIVERGENCE_WARNING: &str =
    "solution may diverge: the performance bound was not certifiable within the \
     horizon; a longer prediction horizon would restore certifiability";

/// Ascending list of sampling instants at which the open-loop control was
/// recomputed, starting at 0. Gaps are the realized control horizons.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UpdateSchedule {
    pub instants: Vec<usize>,
}

impl UpdateSchedule {
    pub fn gaps(&self) -> Vec<usize> {
        self.instants.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Strictly ascending, starts at zero, every gap within `[1, N-1]`.
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.instants.first() != Some(&0) {
            return Err(Error::Inconsistent("schedule must start at 0".into()));
        }
        for w in self.instants.windows(2) {
            let gap = w[1].wrapping_sub(w[0]);
            if w[1] <= w[0] || gap > horizon - 1 {
                return Err(Error::Inconsistent(format!(
                    "schedule gap {} -> {} outside [1, {}]",
                    w[0],
                    w[1],
                    horizon - 1
                )));
            }
        }
        Ok(())
    }
}

/// Which early-update condition an inner-loop check used.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateCondition {
    A,
    B,
}

/// One inner-loop update check at relative index `j` within an event.
#[derive(Clone, Debug)]
pub struct UpdateOutcome<T> {
    pub j: usize,
    pub condition: UpdateCondition,
    pub check: AlphaCheck<T>,
    /// Splice constructed and adopted (follows `check.satisfied`).
    pub applied: bool,
    pub v_end_new: T,
    /// Stored endpoint value the check compared against (condition B).
    pub v_end_old: Option<T>,
}

/// Certification record for one event (one optimization instant).
#[derive(Clone, Debug)]
pub struct EventRecord<T> {
    pub index: usize,
    /// Sampling instant `s(n)` at which the event starts.
    pub start: usize,
    /// Number of open-loop controls applied.
    pub m_n: usize,
    /// Local degrees from the certification loop, one per probed `j`.
    pub alphas: Vec<(usize, T)>,
    /// Degree associated with the applied horizon (the certifying value,
    /// or the one-step degree on the warning path).
    pub alpha_final: T,
    /// Certification succeeded (always true for the adaptive drivers
    /// except on warnings; for the classical driver: no violation).
    pub certified: bool,
    /// The certification loop exhausted `j = N-1` without success.
    pub warning: bool,
    pub updates: Vec<UpdateOutcome<T>>,
    pub v_before: T,
    pub v_after: T,
    /// Stage cost applied during this event.
    pub applied_cost: T,
    /// Closed-loop cost accumulated through the end of this event.
    pub cost_after: T,
}

/// One applied sampling instant.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRow<T> {
    pub step: usize,
    pub state: Vec<T>,
    pub control: Vec<T>,
    pub stage_cost: T,
}

#[derive(Clone, Debug, Default)]
pub struct Totals {
    pub solver_calls: usize,
    /// Wall time spent inside the shooting solver (excludes logging and
    /// I/O; this is what horizon-reduction buys).
    pub solve_wall: Duration,
}

/// Full record of one closed-loop run.
#[derive(Clone, Debug)]
pub struct ExecutionLog<T> {
    pub rows: Vec<StepRow<T>>,
    pub events: Vec<EventRecord<T>>,
    pub schedule: UpdateSchedule,
    pub final_state: Vec<T>,
    pub closed_loop_cost: T,
    pub totals: Totals,
    /// Set when the run stopped early on a solver or simulation failure;
    /// everything logged up to that point is retained.
    pub aborted: Option<String>,
}

impl<T: Scalar> ExecutionLog<T> {
    pub fn warning_count(&self) -> usize {
        self.events.iter().filter(|e| e.warning).count()
    }

    pub fn violation_count(&self) -> usize {
        self.events.iter().filter(|e| !e.certified).count()
    }
}

/// Accumulated closed-loop cost of a run: the sum of all logged stage
/// costs, a finite-time truncation of the infinite-horizon cost (adequate
/// once the stage cost has decayed to the order of 1e-12).
pub fn closed_loop_cost<T: Scalar>(log: &ExecutionLog<T>) -> T {
    log.closed_loop_cost
}

/// Prefix-wise telescoping certificate over the certified events:
/// `alpha_bar * (cost of certified events) <= V_N(x_0) - V_N(x_last)`
/// up to `EPS_VALUE` slack per event.
#[derive(Clone, Copy, Debug)]
pub struct CertificateCheck<T> {
    pub holds: bool,
    /// Smallest margin over all prefixes (negative means violated).
    pub worst_margin: T,
}

pub fn verify_certificate<T: Scalar>(log: &ExecutionLog<T>, alpha_bar: T) -> CertificateCheck<T> {
    let Some(first) = log.events.first() else {
        return CertificateCheck {
            holds: true,
            worst_margin: T::zero(),
        };
    };
    let v0 = first.v_before;
    let scale = T::one().max(v0.abs());
    let mut certified_cost = T::zero();
    let mut worst = T::infinity();
    for (k, ev) in log.events.iter().enumerate() {
        if ev.certified {
            certified_cost += ev.applied_cost;
        }
        let slack = T::of(EPS_VALUE) * T::from_usize(k + 1).unwrap() * scale;
        let margin = v0 - ev.v_after + slack - alpha_bar * certified_cost;
        if margin < worst {
            worst = margin;
        }
    }
    CertificateCheck {
        holds: worst >= T::zero(),
        worst_margin: worst,
    }
}

/// Loop algorithm selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    /// One control per event, no fallback logic; violations are flagged.
    Classical,
    /// Adaptive control horizon from the m-step certification loop.
    Basic,
    /// Adaptive horizon plus early re-closing via the first update
    /// condition (anchored at the event's `V_N(x_n)`).
    UpdateA,
    /// Adaptive horizon plus early re-closing via the second update
    /// condition (anchored at the stored endpoint value).
    UpdateB,
}

pub struct RunOptions<T> {
    /// Stop once `||x - x*||_inf` drops below this (`None`: run the full
    /// step budget).
    pub stop_tol: Option<T>,
    pub solver: SolveOptions<T>,
}

impl<T: Scalar> Default for RunOptions<T> {
    fn default() -> Self {
        Self {
            stop_tol: Some(T::of(1e-4)),
            solver: SolveOptions::default(),
        }
    }
}

/// Adaptive-horizon loop: certify an m-step decrease, apply that many
/// controls open loop, repeat. Prints no warnings itself; warning events
/// are recorded in the log.
pub fn run_basic<T: Scalar>(
    sys: &ControlSystem<T>,
    x0: &[T],
    n: usize,
    alpha_bar: T,
    steps: usize,
) -> Result<ExecutionLog<T>> {
    run(sys, x0, n, alpha_bar, steps, Algorithm::Basic, &RunOptions::default())
}

/// Like [`run_basic`], but inside multi-step events the loop is re-closed
/// at every instant where the first update condition admits a splice.
pub fn run_update_a<T: Scalar>(
    sys: &ControlSystem<T>,
    x0: &[T],
    n: usize,
    alpha_bar: T,
    steps: usize,
) -> Result<ExecutionLog<T>> {
    run(sys, x0, n, alpha_bar, steps, Algorithm::UpdateA, &RunOptions::default())
}

/// Like [`run_basic`], but with the second (endpoint-anchored) update
/// condition, which re-anchors after each successful splice.
pub fn run_update_b<T: Scalar>(
    sys: &ControlSystem<T>,
    x0: &[T],
    n: usize,
    alpha_bar: T,
    steps: usize,
) -> Result<ExecutionLog<T>> {
    run(sys, x0, n, alpha_bar, steps, Algorithm::UpdateB, &RunOptions::default())
}

/// Classical receding horizon: apply exactly one control per event and log
/// the local degree; instants with a degree below the bound are flagged,
/// nothing else happens.
pub fn run_classical<T: Scalar>(
    sys: &ControlSystem<T>,
    x0: &[T],
    n: usize,
    alpha_bar: T,
    steps: usize,
) -> Result<ExecutionLog<T>> {
    run(sys, x0, n, alpha_bar, steps, Algorithm::Classical, &RunOptions::default())
}

/// Driver shared by all four algorithms.
pub fn run<T: Scalar>(
    sys: &ControlSystem<T>,
    x0: &[T],
    n: usize,
    alpha_bar: T,
    steps: usize,
    algorithm: Algorithm,
    opts: &RunOptions<T>,
) -> Result<ExecutionLog<T>> {
    if n < 2 {
        return Err(Error::InvalidInput {
            what: "horizon",
            reason: format!("must be at least 2, got {n}"),
        });
    }
    if !(alpha_bar > T::zero() && alpha_bar < T::one()) {
        return Err(Error::InvalidInput {
            what: "alpha_bar",
            reason: "must lie in (0, 1)".into(),
        });
    }
    if steps == 0 {
        return Err(Error::InvalidInput {
            what: "steps",
            reason: "need at least one sampling instant".into(),
        });
    }
    if x0.len() != sys.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: sys.state_dim(),
            got: x0.len(),
        });
    }

    let mut d = Driver {
        sys,
        n,
        alpha_bar,
        opts,
        x: x0.to_vec(),
        instant: 0,
        rows: Vec::new(),
        events: Vec::new(),
        schedule: vec![0],
        cost_acc: T::zero(),
        totals: Totals::default(),
        cached: None,
    };

    let aborted = loop {
        match d.event(algorithm) {
            Ok(()) => {}
            Err(e) => break Some(e.to_string()),
        }
        if d.instant >= steps {
            break None;
        }
        if let Some(tol) = opts.stop_tol {
            let err = distance_inf(&d.x, sys.equilibrium_state());
            if err <= tol {
                break None;
            }
        }
    };

    Ok(ExecutionLog {
        rows: d.rows,
        events: d.events,
        schedule: UpdateSchedule {
            instants: d.schedule,
        },
        final_state: d.x,
        closed_loop_cost: d.cost_acc,
        totals: d.totals,
        aborted,
    })
}

fn distance_inf<T: Scalar>(a: &[T], b: &[T]) -> T {
    let diff: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    norm_inf(&diff)
}

struct Driver<'a, T: Scalar> {
    sys: &'a ControlSystem<T>,
    n: usize,
    alpha_bar: T,
    opts: &'a RunOptions<T>,
    x: Vec<T>,
    instant: usize,
    rows: Vec<StepRow<T>>,
    events: Vec<EventRecord<T>>,
    schedule: Vec<usize>,
    cost_acc: T,
    totals: Totals,
    /// Monitoring solution from the previous event, valid at the state it
    /// was solved for; reused when the loop arrives exactly there.
    cached: Option<OcpSolution<T>>,
}

impl<T: Scalar> Driver<'_, T> {
    fn solve_at(&mut self, x: &[T], warm: Option<&[Vec<T>]>) -> Result<OcpSolution<T>> {
        let t0 = Instant::now();
        let sol = ocp::solve_with(self.sys, x, self.n, warm, &self.opts.solver);
        self.totals.solve_wall += t0.elapsed();
        self.totals.solver_calls += 1;
        sol
    }

    /// Solve at `x`, reusing the cached monitoring solution when it was
    /// computed for exactly this state.
    fn solution_for(&mut self, x: &[T]) -> Result<OcpSolution<T>> {
        if let Some(c) = self.cached.take() {
            if c.initial_state == x {
                return Ok(c);
            }
            self.cached = Some(c);
        }
        self.solve_at(x, None)
    }

    /// Apply control `k` of `sol` at the current instant.
    fn apply(&mut self, sol: &OcpSolution<T>, k: usize) {
        self.rows.push(StepRow {
            step: self.instant,
            state: sol.trajectory[k].clone(),
            control: sol.controls[k].clone(),
            stage_cost: sol.stage_costs[k],
        });
        self.cost_acc += sol.stage_costs[k];
        self.x = sol.trajectory[k + 1].clone();
        self.instant += 1;
    }

    fn event(&mut self, algorithm: Algorithm) -> Result<()> {
        match algorithm {
            Algorithm::Classical => self.event_classical(),
            Algorithm::Basic | Algorithm::UpdateA | Algorithm::UpdateB => {
                self.event_adaptive(algorithm)
            }
        }
    }

    fn event_classical(&mut self) -> Result<()> {
        let x = self.x.clone();
        let sol = self.solution_for(&x)?;
        let cost_before = self.cost_acc;
        self.apply(&sol, 0);

        // The next event's solution doubles as the monitor value.
        let warm = ocp::shift_warm_start(&sol, 1)?;
        let next = self.solve_at(&self.x.clone(), Some(&warm))?;
        let check = check_mstep(&sol, next.value, 1, self.alpha_bar)?;

        self.schedule.push(self.instant);
        self.events.push(EventRecord {
            index: self.events.len(),
            start: self.instant - 1,
            m_n: 1,
            alphas: vec![(1, check.alpha_local)],
            alpha_final: check.alpha_local,
            certified: check.satisfied,
            warning: false,
            updates: Vec::new(),
            v_before: sol.value,
            v_after: next.value,
            applied_cost: self.cost_acc - cost_before,
            cost_after: self.cost_acc,
        });
        self.cached = Some(next);
        Ok(())
    }

    fn event_adaptive(&mut self, algorithm: Algorithm) -> Result<()> {
        let start = self.instant;
        let x = self.x.clone();
        let sol = self.solution_for(&x)?;
        let v_before = sol.value;
        let cost_before = self.cost_acc;

        // Certification loop: probe j = 1, 2, ... with independent solves
        // at the j-th open-loop state until the m-step inequality holds.
        let mut alphas = Vec::new();
        let mut probes: Vec<Option<OcpSolution<T>>> = vec![None; self.n + 1];
        let mut m_n = 1;
        let mut warning = false;
        let mut alpha_final = T::zero();
        for j in 1..self.n {
            let x_j = sol.trajectory[j].clone();
            let warm = ocp::shift_warm_start(&sol, j)?;
            let sol_j = self.solve_at(&x_j, Some(&warm))?;
            let check = check_mstep(&sol, sol_j.value, j, self.alpha_bar)?;
            alphas.push((j, check.alpha_local));
            probes[j] = Some(sol_j);
            if check.satisfied {
                m_n = j;
                alpha_final = check.alpha_local;
                break;
            }
            if j == self.n - 1 {
                // Performance bound not certifiable along this open-loop
                // plan; fall back to a single control and carry on.
                warning = true;
                m_n = 1;
                alpha_final = alphas[0].1;
            }
        }

        let mut updates = Vec::new();
        let mut current = sol;
        let mut next_sol: Option<OcpSolution<T>> = None;
        // Endpoint value V_N(x(m_n)) from the certification loop; the
        // B-condition compares against (and replaces) this.
        let mut v_end_stored = probes[m_n].as_ref().map(|s| s.value);

        for j in 1..=m_n {
            self.apply(&current, j - 1);
            let do_check = j < m_n
                && matches!(algorithm, Algorithm::UpdateA | Algorithm::UpdateB);
            if !do_check {
                continue;
            }

            // Fresh plan from the j-th state of the current sequence; the
            // certification probe is reused while the trajectory prefix is
            // untouched by splices.
            let x_j = current.trajectory[j].clone();
            let resolved = match probes[j].take() {
                Some(p) if p.initial_state == x_j => p,
                other => {
                    probes[j] = other;
                    let warm = ocp::shift_warm_start(&current, j)?;
                    self.solve_at(&x_j, Some(&warm))?
                }
            };

            // Value at the candidate spliced endpoint.
            let x_end = resolved.trajectory[m_n - j].clone();
            let warm_end = ocp::shift_warm_start(&resolved, m_n - j)?;
            let sol_end = self.solve_at(&x_end, Some(&warm_end))?;
            let v_end_new = sol_end.value;

            let (check, v_end_old) = match algorithm {
                Algorithm::UpdateA => (
                    check_update_a(
                        v_before,
                        &current,
                        &resolved,
                        v_end_new,
                        j,
                        m_n,
                        self.alpha_bar,
                    )?,
                    None,
                ),
                Algorithm::UpdateB => {
                    let old = v_end_stored.expect("endpoint value exists for m_n >= 2");
                    (
                        check_update_b(
                            v_end_new,
                            old,
                            &current.stage_costs[j..m_n],
                            &resolved.stage_costs[..m_n - j],
                            self.alpha_bar,
                        )?,
                        Some(old),
                    )
                }
                _ => unreachable!(),
            };

            if check.satisfied {
                let spl = splice(&current, &resolved, j)?;
                let (trajectory, stage_costs, value) =
                    ocp::rollout(self.sys, &current.initial_state, &spl.new_controls)?;
                current = OcpSolution {
                    initial_state: current.initial_state.clone(),
                    horizon: self.n,
                    controls: spl.new_controls,
                    trajectory,
                    stage_costs,
                    value,
                    report: resolved.report,
                };
                // The loop was re-closed at this instant.
                self.schedule.push(self.instant);
                v_end_stored = Some(v_end_new);
                next_sol = Some(sol_end);
            }

            updates.push(UpdateOutcome {
                j,
                condition: if algorithm == Algorithm::UpdateA {
                    UpdateCondition::A
                } else {
                    UpdateCondition::B
                },
                check,
                applied: check.satisfied,
                v_end_new,
                v_end_old,
            });
        }

        // Next event's solution: the endpoint solve of the last accepted
        // splice, or the certification probe at the unmodified endpoint.
        let next = match next_sol {
            Some(s) => s,
            None => probes[m_n]
                .take()
                .expect("certification loop solved the endpoint"),
        };
        debug_assert_eq!(next.initial_state, current.trajectory[m_n]);
        let v_after = next.value;

        self.schedule.push(self.instant);
        self.events.push(EventRecord {
            index: self.events.len(),
            start,
            m_n,
            alphas,
            alpha_final,
            certified: !warning,
            warning,
            updates,
            v_before,
            v_after,
            applied_cost: self.cost_acc - cost_before,
            cost_after: self.cost_acc,
        });
        self.cached = Some(next);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::make_linear_scalar;

    fn lq() -> ControlSystem<f64> {
        make_linear_scalar(2.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn no_stop() -> RunOptions<f64> {
        RunOptions {
            stop_tol: None,
            ..RunOptions::default()
        }
    }

    /// Riccati recursion with zero terminal weight: V_N(x) = P_N x^2.
    fn riccati_p(a: f64, b: f64, q: f64, r: f64, n: usize) -> Vec<f64> {
        let mut p = vec![0.0];
        for k in 0..n {
            let pk = p[k];
            p.push(q + a * a * pk - a * a * b * b * pk * pk / (r + b * b * pk));
        }
        p
    }

    fn riccati_fixed_point(a: f64, b: f64, q: f64, r: f64) -> f64 {
        let mut p = 0.0;
        for _ in 0..100_000 {
            let next = q + a * a * p - a * a * b * b * p * p / (r + b * b * p);
            if (next - p).abs() <= 1e-15 {
                return next;
            }
            p = next;
        }
        p
    }

    #[test]
    fn equilibrium_run_certifies_trivially() {
        let sys = lq();
        let log = run(&sys, &[0.0], 4, 0.5, 5, Algorithm::Basic, &no_stop()).unwrap();
        assert_eq!(log.schedule.instants, vec![0, 1, 2, 3, 4, 5]);
        for ev in &log.events {
            assert_eq!(ev.m_n, 1);
            assert_eq!(ev.alpha_final, 1.0); // zero-cost convention
            assert!(ev.certified && !ev.warning);
        }
        assert!(closed_loop_cost(&log).abs() <= 1e-12);
    }

    #[test]
    fn lq_run_certifies_and_verifies() {
        let sys = lq();
        let log = run(&sys, &[1.0], 5, 0.3, 40, Algorithm::Basic, &no_stop()).unwrap();
        assert_eq!(log.warning_count(), 0);
        assert_eq!(log.violation_count(), 0);
        let cert = verify_certificate(&log, 0.3);
        assert!(cert.holds, "worst margin {}", cert.worst_margin);

        // Performance chain against the closed forms.
        let p5 = riccati_p(2.0, 1.0, 1.0, 1.0, 5)[5];
        let v5 = p5 * 1.0;
        let v_inf = riccati_fixed_point(2.0, 1.0, 1.0, 1.0);
        let j_cl = closed_loop_cost(&log);
        let slack = 1e-6;
        assert!(0.3 * v_inf <= 0.3 * j_cl + slack);
        assert!(0.3 * j_cl <= v5 * (1.0 + slack));
        assert!(v5 <= v_inf * (1.0 + slack));
    }

    #[test]
    fn schedule_integrity() {
        let sys = lq();
        let log = run(&sys, &[1.5], 5, 0.3, 12, Algorithm::Basic, &no_stop()).unwrap();
        log.schedule.validate(5).unwrap();
        assert_eq!(log.schedule.gaps(), vec![1; 12]);
        let m_ns: Vec<usize> = log.events.iter().map(|e| e.m_n).collect();
        assert_eq!(log.schedule.gaps(), m_ns);
    }

    #[test]
    fn baseline_equivalence_when_all_events_certify_at_one() {
        let sys = lq();
        let opts = no_stop();
        let controls = |algo: Algorithm| -> Vec<u64> {
            let log = run(&sys, &[1.0], 5, 0.3, 10, algo, &opts).unwrap();
            assert_eq!(log.warning_count(), 0);
            log.rows.iter().map(|r| r.control[0].to_bits()).collect()
        };
        let classical = controls(Algorithm::Classical);
        let basic = controls(Algorithm::Basic);
        let a = controls(Algorithm::UpdateA);
        let b = controls(Algorithm::UpdateB);
        assert_eq!(classical, basic);
        assert_eq!(basic, a);
        assert_eq!(a, b);
    }

    #[test]
    fn unreachable_bound_warns_and_continues() {
        // The one-step degree of this loop is strictly below 1 away from
        // the origin, so an absurd bound forces the warning fallback.
        let sys = lq();
        let log = run(
            &sys,
            &[1.0],
            4,
            0.9999999,
            6,
            Algorithm::Basic,
            &no_stop(),
        )
        .unwrap();
        assert!(log.warning_count() > 0);
        for ev in &log.events {
            if ev.warning {
                assert_eq!(ev.m_n, 1);
                assert!(!ev.certified);
                assert_eq!(ev.alphas.len(), 4 - 1);
            }
        }
        // The loop still advanced one control per warning event.
        assert_eq!(log.rows.len(), 6);
    }

    #[test]
    fn classical_at_equilibrium_never_flags() {
        let sys = lq();
        let log = run(&sys, &[0.0], 4, 0.5, 5, Algorithm::Classical, &no_stop()).unwrap();
        assert_eq!(log.violation_count(), 0);
        assert_eq!(log.final_state, vec![0.0]);
        for ev in &log.events {
            assert_eq!(ev.alpha_final, 1.0);
        }
    }

    #[test]
    fn classical_flags_violations_without_fallback() {
        let sys = lq();
        let log = run(
            &sys,
            &[1.0],
            4,
            0.9999999,
            6,
            Algorithm::Classical,
            &no_stop(),
        )
        .unwrap();
        assert_eq!(log.warning_count(), 0);
        assert!(log.violation_count() > 0);
        assert_eq!(log.rows.len(), 6);
        assert_eq!(log.schedule.gaps(), vec![1; 6]);
    }

    #[test]
    fn stop_tolerance_ends_run_early() {
        let sys = lq();
        let opts = RunOptions {
            stop_tol: Some(1e-6),
            ..RunOptions::default()
        };
        let log = run(&sys, &[1.0], 5, 0.3, 500, Algorithm::Basic, &opts).unwrap();
        assert!(log.rows.len() < 500);
        assert!(log.final_state[0].abs() <= 1e-6);
    }

    /// Unstable loop with saturated control near the edge of its
    /// stabilizable region: short horizons under-report the cost to go, so
    /// the one-step degree dips while the multi-step degrees recover. This
    /// is the cheap stand-in for the situations that force `m_n > 1`.
    fn barely_stabilizable() -> ControlSystem<f64> {
        make_linear_scalar(1.5, 1.0, 1.0, 0.1)
            .unwrap()
            .with_bounds(vec![-1.0], vec![1.0])
            .unwrap()
    }

    #[test]
    fn update_a_resolves_multistep_events() {
        // The first event certifies only at j = 2; condition A accepts a
        // splice at j = 1, so the loop is re-closed at every instant.
        let sys = barely_stabilizable();
        let log = run(&sys, &[1.95], 8, 0.9, 12, Algorithm::UpdateA, &no_stop()).unwrap();
        assert_eq!(log.warning_count(), 0);
        let first = &log.events[0];
        assert_eq!(first.m_n, 2);
        assert_eq!(first.updates.len(), 1);
        assert_eq!(first.updates[0].condition, UpdateCondition::A);
        assert!(first.updates[0].applied);
        // Splice instants enter the schedule: every gap is one.
        assert_eq!(log.schedule.gaps(), vec![1; 12]);
        assert!(verify_certificate(&log, 0.9).holds);
    }

    #[test]
    fn update_b_resolves_the_small_event() {
        let sys = barely_stabilizable();
        let log = run(&sys, &[1.95], 8, 0.9, 12, Algorithm::UpdateB, &no_stop()).unwrap();
        let first = &log.events[0];
        assert_eq!(first.m_n, 2);
        assert!(first.updates[0].applied);
        assert_eq!(first.updates[0].condition, UpdateCondition::B);
        assert_eq!(log.schedule.gaps(), vec![1; 12]);
        assert!(verify_certificate(&log, 0.9).holds);
    }

    #[test]
    fn update_b_is_more_conservative_than_a() {
        // At a bound that forces m_n = 3, condition A splices at both inner
        // instants while condition B performs no update at all and the
        // event stays fully open loop.
        let sys = barely_stabilizable();
        let a = run(&sys, &[1.95], 8, 0.93, 12, Algorithm::UpdateA, &no_stop()).unwrap();
        let b = run(&sys, &[1.95], 8, 0.93, 12, Algorithm::UpdateB, &no_stop()).unwrap();

        assert_eq!(a.events[0].m_n, 3);
        assert!(a.events[0].updates.iter().all(|u| u.applied));
        assert_eq!(a.schedule.gaps(), vec![1; 12]);

        assert_eq!(b.events[0].m_n, 3);
        assert!(b.events[0].updates.iter().all(|u| !u.applied));
        assert_eq!(b.schedule.gaps()[0], 3);

        assert!(verify_certificate(&a, 0.93).holds);
        assert!(verify_certificate(&b, 0.93).holds);
    }

    #[test]
    fn update_b_matches_basic_when_no_update_fires() {
        // Same schedule when every event certifies at j = 1.
        let sys = lq();
        let basic = run(&sys, &[1.0], 5, 0.3, 8, Algorithm::Basic, &no_stop()).unwrap();
        let b = run(&sys, &[1.0], 5, 0.3, 8, Algorithm::UpdateB, &no_stop()).unwrap();
        assert_eq!(basic.schedule, b.schedule);
    }

    #[test]
    fn divergence_aborts_with_partial_log() {
        // Cubic blow-up with saturated control: every plan escapes to
        // non-finite territory within the horizon, so the first solve
        // fails and the run stops with whatever was logged.
        use crate::dynamics::ControlSystem;
        use std::sync::Arc;
        let sys = ControlSystem::<f64>::discrete(
            Arc::new(|x: &[f64], u: &[f64], out: &mut [f64]| {
                out[0] = x[0] * x[0] * x[0] + u[0];
            }),
            Arc::new(|x: &[f64], u: &[f64]| x[0] * x[0] + u[0] * u[0]),
            1,
            1,
            vec![0.0],
            vec![0.0],
        )
        .unwrap()
        .with_bounds(vec![-1.0], vec![1.0])
        .unwrap();
        let log = run(&sys, &[3.0], 12, 0.3, 5, Algorithm::Basic, &no_stop()).unwrap();
        assert!(log.aborted.is_some(), "expected an aborted run");
        assert!(log.events.is_empty());
    }

    #[test]
    fn precondition_errors() {
        let sys = lq();
        assert!(run(&sys, &[1.0], 1, 0.3, 5, Algorithm::Basic, &no_stop()).is_err());
        assert!(run(&sys, &[1.0], 5, 0.0, 5, Algorithm::Basic, &no_stop()).is_err());
        assert!(run(&sys, &[1.0], 5, 1.0, 5, Algorithm::Basic, &no_stop()).is_err());
        assert!(run(&sys, &[1.0], 5, 0.3, 0, Algorithm::Basic, &no_stop()).is_err());
        assert!(run(&sys, &[1.0, 2.0], 5, 0.3, 5, Algorithm::Basic, &no_stop()).is_err());
    }
}

//! Human-readable run summaries and the side-by-side comparison report.

use std::fmt::Write as _;
use std::time::Duration;

use nmpc::linalg::norm_inf;
use nmpc::mpc_loop::{verify_certificate, Algorithm};
use nmpc::{ControlSystem, ExecutionLog};

use crate::config::ScenarioConfig;

fn algorithm_name(a: Algorithm) -> &'static str {
    match a {
        Algorithm::Classical => "classical",
        Algorithm::Basic => "basic",
        Algorithm::UpdateA => "update_a",
        Algorithm::UpdateB => "update_b",
    }
}

/// Everything the summary shows, derived purely from the execution log.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub algorithm: String,
    pub system: String,
    pub horizon: usize,
    pub alpha_bar: f64,
    pub instants: usize,
    pub schedule: Vec<usize>,
    pub event_alphas: Vec<f64>,
    pub violations: usize,
    pub warnings: usize,
    pub splices: usize,
    pub closed_loop_cost: f64,
    pub final_error: f64,
    pub solver_calls: usize,
    pub solve_wall: Duration,
    pub certificate_holds: bool,
    pub aborted: Option<String>,
}

impl RunSummary {
    pub fn new(cfg: &ScenarioConfig, sys: &ControlSystem, log: &ExecutionLog) -> Self {
        let err: Vec<f64> = log
            .final_state
            .iter()
            .zip(sys.equilibrium_state())
            .map(|(a, b)| a - b)
            .collect();
        let splices = log
            .events
            .iter()
            .flat_map(|e| &e.updates)
            .filter(|u| u.applied)
            .count();
        RunSummary {
            algorithm: algorithm_name(cfg.algorithm).to_string(),
            system: cfg.system.to_string(),
            horizon: cfg.horizon,
            alpha_bar: cfg.alpha_bar,
            instants: log.rows.len(),
            schedule: log.schedule.instants.clone(),
            event_alphas: log.events.iter().map(|e| e.alpha_final).collect(),
            violations: log.violation_count(),
            warnings: log.warning_count(),
            splices,
            closed_loop_cost: log.closed_loop_cost,
            final_error: norm_inf(&err),
            solver_calls: log.totals.solver_calls,
            solve_wall: log.totals.solve_wall,
            certificate_holds: log.warning_count() == 0
                && verify_certificate(log, cfg.alpha_bar).holds,
            aborted: log.aborted.clone(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "system           : {}", self.system);
        let _ = writeln!(s, "algorithm        : {}", self.algorithm);
        let _ = writeln!(s, "horizon N        : {}", self.horizon);
        let _ = writeln!(s, "alpha_bar        : {}", self.alpha_bar);
        let _ = writeln!(s, "instants applied : {}", self.instants);
        let _ = writeln!(s, "events           : {}", self.event_alphas.len());
        let _ = writeln!(s, "violations       : {}", self.violations);
        let _ = writeln!(s, "warnings         : {}", self.warnings);
        let _ = writeln!(s, "splices applied  : {}", self.splices);
        let _ = writeln!(s, "closed-loop cost : {:.12e}", self.closed_loop_cost);
        let _ = writeln!(s, "final |x - x*|   : {:.6e}", self.final_error);
        let _ = writeln!(s, "solver calls     : {}", self.solver_calls);
        let _ = writeln!(s, "solve wall time  : {:.3} s", self.solve_wall.as_secs_f64());
        let _ = writeln!(s, "certificate      : {}", if self.certificate_holds {
            "holds (every event certified)"
        } else {
            "not certified (violations or warnings present)"
        });
        if self.warnings > 0 {
            let _ = writeln!(s, "WARNING          : {}", nmpc::mpc_loop::DIVERGENCE_WARNING);
        }
        if let Some(reason) = &self.aborted {
            let _ = writeln!(s, "ABORTED          : {reason}");
        }
        let _ = writeln!(s, "schedule S       : {}", render_schedule(&self.schedule));
        let _ = writeln!(
            s,
            "event alphas     : {}",
            self.event_alphas
                .iter()
                .map(|a| format!("{a:.4}"))
                .collect::<Vec<_>>()
                .join(" ")
        );
        s
    }
}

fn render_schedule(s: &[usize]) -> String {
    // Long all-ones schedules compress to a range.
    if s.len() > 20 && s.windows(2).all(|w| w[1] - w[0] == 1) {
        return format!("(0, 1, ..., {})", s.last().unwrap());
    }
    format!(
        "({})",
        s.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
    )
}

/// Side-by-side comparison of two runs over the same system and start.
pub fn comparison_report(a: &RunSummary, b: &RunSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<22} {:>24} {:>24}", "", "scenario A", "scenario B");
    let row = |s: &mut String, label: &str, va: String, vb: String| {
        let _ = writeln!(s, "{label:<22} {va:>24} {vb:>24}");
    };
    row(&mut s, "algorithm", a.algorithm.clone(), b.algorithm.clone());
    row(&mut s, "horizon N", a.horizon.to_string(), b.horizon.to_string());
    row(&mut s, "alpha_bar", a.alpha_bar.to_string(), b.alpha_bar.to_string());
    row(&mut s, "instants", a.instants.to_string(), b.instants.to_string());
    row(&mut s, "violations", a.violations.to_string(), b.violations.to_string());
    row(&mut s, "warnings", a.warnings.to_string(), b.warnings.to_string());
    row(&mut s, "splices", a.splices.to_string(), b.splices.to_string());
    row(
        &mut s,
        "closed-loop cost",
        format!("{:.8e}", a.closed_loop_cost),
        format!("{:.8e}", b.closed_loop_cost),
    );
    row(
        &mut s,
        "solver calls",
        a.solver_calls.to_string(),
        b.solver_calls.to_string(),
    );
    row(
        &mut s,
        "solve wall [s]",
        format!("{:.3}", a.solve_wall.as_secs_f64()),
        format!("{:.3}", b.solve_wall.as_secs_f64()),
    );
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "cost ratio (B/A) : {:.6}",
        b.closed_loop_cost / a.closed_loop_cost
    );
    let _ = writeln!(
        s,
        "time ratio (B/A) : {:.6}   # wall time around solver calls only",
        b.solve_wall.as_secs_f64() / a.solve_wall.as_secs_f64()
    );
    let _ = writeln!(s, "schedule A       : {}", render_schedule(&a.schedule));
    let _ = writeln!(s, "schedule B       : {}", render_schedule(&b.schedule));
    s
}

//! CSV trace emission and re-parsing.
//!
//! Schema: `step,time,x...,u...,stage_cost,event,m_n,alpha_local,warning,update_j`
//! with one `x<i>` column per state coordinate and one `u<i>` per control
//! coordinate. One row per applied sampling instant. Floats are printed
//! with 17 significant digits, which round-trips `f64` exactly and keeps
//! emitted files byte-identical across runs and platforms. `update_j` is
//! the relative index of an accepted control update landing on that
//! instant, `-1` otherwise.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use nmpc::ExecutionLog;

/// 17 significant digits: exact `f64` round-trip.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn header(state_dim: usize, control_dim: usize) -> String {
    let mut cols = vec!["step".to_string(), "time".to_string()];
    cols.extend((0..state_dim).map(|i| format!("x{i}")));
    cols.extend((0..control_dim).map(|i| format!("u{i}")));
    for c in ["stage_cost", "event", "m_n", "alpha_local", "warning", "update_j"] {
        cols.push(c.to_string());
    }
    cols.join(",")
}

pub fn render(log: &ExecutionLog, sampling: f64) -> String {
    let state_dim = log.final_state.len();
    let control_dim = log.rows.first().map_or(0, |r| r.control.len());
    let mut out = String::new();
    out.push_str(&header(state_dim, control_dim));
    out.push('\n');

    // Event owning each instant, plus accepted-update markers. Rows from
    // an event cut short by an abort have no owner and are emitted with
    // event = -1.
    let mut owner = vec![usize::MAX; log.rows.len()];
    let mut update_at = vec![-1i64; log.rows.len()];
    for ev in &log.events {
        for k in ev.start..(ev.start + ev.m_n).min(owner.len()) {
            owner[k] = ev.index;
        }
        for u in &ev.updates {
            if u.applied {
                let instant = ev.start + u.j;
                if instant < update_at.len() {
                    update_at[instant] = u.j as i64;
                }
            }
        }
    }

    for row in &log.rows {
        let ev = log.events.get(owner[row.step]);
        out.push_str(&row.step.to_string());
        out.push(',');
        out.push_str(&fmt_float(row.step as f64 * sampling));
        for v in &row.state {
            out.push(',');
            out.push_str(&fmt_float(*v));
        }
        for v in &row.control {
            out.push(',');
            out.push_str(&fmt_float(*v));
        }
        out.push(',');
        out.push_str(&fmt_float(row.stage_cost));
        out.push(',');
        out.push_str(&ev.map_or(-1, |e| e.index as i64).to_string());
        out.push(',');
        out.push_str(&ev.map_or(0, |e| e.m_n).to_string());
        out.push(',');
        out.push_str(&fmt_float(ev.map_or(0.0, |e| e.alpha_final)));
        out.push(',');
        out.push_str(if ev.is_some_and(|e| e.warning) { "1" } else { "0" });
        out.push(',');
        out.push_str(&update_at[row.step].to_string());
        out.push('\n');
    }
    out
}

/// Whole-file atomic write: temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Totals reconstructed from an emitted trace.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedTrace {
    pub instants: usize,
    pub total_cost: f64,
    /// `(event index, start instant, m_n, warning)` per event.
    pub events: Vec<(usize, usize, usize, bool)>,
    pub warning_count: usize,
}

pub fn parse(text: &str) -> Result<ParsedTrace, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty trace")?;
    let cols: Vec<&str> = header.split(',').collect();
    let idx = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| format!("missing column {name}"))
    };
    let (i_step, i_cost, i_event, i_mn, i_warn) = (
        idx("step")?,
        idx("stage_cost")?,
        idx("event")?,
        idx("m_n")?,
        idx("warning")?,
    );

    let mut instants = 0;
    let mut total_cost = 0.0;
    let mut events: Vec<(usize, usize, usize, bool)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> Result<&str, String> {
            fields
                .get(i)
                .copied()
                .ok_or_else(|| format!("line {}: missing field {i}", lineno + 2))
        };
        let step: usize = get(i_step)?.parse().map_err(|e| format!("step: {e}"))?;
        let cost: f64 = get(i_cost)?.parse().map_err(|e| format!("stage_cost: {e}"))?;
        let event: i64 = get(i_event)?.parse().map_err(|e| format!("event: {e}"))?;
        let m_n: usize = get(i_mn)?.parse().map_err(|e| format!("m_n: {e}"))?;
        let warning = get(i_warn)? == "1";
        instants += 1;
        total_cost += cost;
        // Rows with event = -1 belong to an aborted, unrecorded event.
        if event >= 0 && events.last().map(|e| e.0) != Some(event as usize) {
            events.push((event as usize, step, m_n, warning));
        }
    }
    let warning_count = events.iter().filter(|e| e.3).count();
    Ok(ParsedTrace {
        instants,
        total_cost,
        events,
        warning_count,
    })
}

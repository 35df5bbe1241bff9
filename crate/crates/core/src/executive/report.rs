//! Event traces, scoring, and the task report rebuilt from a trace.
//!
//! Trace lines look like `t=12.30 bag_deposited can=can_a in_zone=true`.
//! Times are rounded to centiseconds when recorded, so a trace parses back
//! to exactly the events that produced it.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReportError {
    #[error("line {0}: malformed trace line")]
    Malformed(usize),
    #[error("trace has no `{0}` event")]
    MissingEvent(&'static str),
    #[error("`{event}` event lacks field `{field}`")]
    MissingField { event: &'static str, field: &'static str },
}

pub fn round_cs(t: f64) -> f64 {
    (t * 100.0).round() / 100.0
}

fn clean(s: &str) -> String {
    s.chars().map(|c| if c.is_whitespace() || c == '=' { '_' } else { c }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub t: f64,
    pub name: String,
    pub fields: Vec<(String, String)>,
}

impl TraceEvent {
    pub fn new(t: f64, name: &str, fields: &[(&str, String)]) -> Self {
        Self {
            t: round_cs(t),
            name: clean(name),
            fields: fields.iter().map(|(k, v)| (clean(k), clean(v))).collect(),
        }
    }

    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn parse(line: &str) -> Option<Self> {
        let mut toks = line.split_whitespace();
        let t: f64 = toks.next()?.strip_prefix("t=")?.parse().ok()?;
        let name = toks.next()?.to_string();
        if name.contains('=') {
            return None;
        }
        let fields = toks
            .map(|tok| tok.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
            .collect::<Option<Vec<_>>>()?;
        Some(Self { t, name, fields })
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={:.2} {}", self.t, self.name)?;
        for (k, v) in &self.fields {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Points per achieved event.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rubric {
    pub points: BTreeMap<String, f64>,
}

impl Rubric {
    pub fn new(entries: &[(&str, f64)]) -> Self {
        Self { points: entries.iter().map(|(k, v)| (k.to_string(), *v)).collect() }
    }

    pub fn points_for(&self, event: &str) -> f64 {
        self.points.get(event).copied().unwrap_or(0.0)
    }
}

pub fn score_events(events: &[TraceEvent], rubric: &Rubric) -> f64 {
    events.iter().map(|e| rubric.points_for(&e.name)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskReport {
    pub task: String,
    pub success: bool,
    pub score: f64,
    pub elapsed: f64,
    pub events: Vec<TraceEvent>,
}

pub fn score_task(report: &TaskReport, rubric: &Rubric) -> f64 {
    score_events(&report.events, rubric)
}

impl TaskReport {
    pub fn trace_text(&self) -> String {
        self.events.iter().map(|e| format!("{e}\n")).collect()
    }

    /// Machine-readable `key=value` block.
    pub fn summary(&self) -> String {
        format!(
            "task={}\nsuccess={}\nscore={}\nelapsed={:.2}\nevents={}\n",
            self.task,
            self.success,
            self.score,
            self.elapsed,
            self.events.len()
        )
    }

    pub fn count(&self, event: &str) -> usize {
        self.events.iter().filter(|e| e.name == event).count()
    }

    pub fn first(&self, event: &str) -> Option<&TraceEvent> {
        self.events.iter().find(|e| e.name == event)
    }

    /// Rebuilds a report from trace text alone.
    pub fn replay(text: &str, rubric: &Rubric) -> Result<Self, ReportError> {
        let events = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| TraceEvent::parse(l).ok_or(ReportError::Malformed(i + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        let start = events.iter().find(|e| e.name == "task_start").ok_or(ReportError::MissingEvent("task_start"))?;
        let task = start
            .field("task")
            .ok_or(ReportError::MissingField { event: "task_start", field: "task" })?
            .to_string();
        let end = events.iter().rev().find(|e| e.name == "task_end").ok_or(ReportError::MissingEvent("task_end"))?;
        let success = end.field("success") == Some("true");
        let elapsed = end
            .field("elapsed")
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or(ReportError::MissingField { event: "task_end", field: "elapsed" })?;
        let score = score_events(&events, rubric);
        Ok(Self { task, success, score, elapsed, events })
    }
}

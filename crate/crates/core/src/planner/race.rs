//! First-success-wins planning over several goal candidates.
//!
//! One worker per goal. In concurrent mode workers are real threads; a panic
//! is caught and reported as a crash, and the first success raises a shared
//! cancel flag the others poll. In deterministic mode completion order is a
//! seeded permutation and no threads are spawned.

use std::collections::BTreeSet;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::noise::rng_for;

/// Simulated time between successive completions in deterministic mode.
pub const DETERMINISTIC_SLOT: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RaceError {
    #[error("plan request has no goal candidates")]
    NoGoals,
    #[error("completion order is not a permutation of the workers")]
    BadOrder,
}

#[derive(Debug, Clone)]
pub struct CancelToken {
    flag: Arc<AtomicBool>,
    deadline: Option<Instant>,
}

impl CancelToken {
    fn new(flag: Arc<AtomicBool>, deadline: Option<Instant>) -> Self {
        Self { flag, deadline }
    }

    /// A token that never fires.
    pub fn never() -> Self {
        Self::new(Arc::new(AtomicBool::new(false)), None)
    }

    pub fn is_cancelled(&self) -> bool {
        self.flag.load(Ordering::Relaxed) || self.deadline.is_some_and(|d| Instant::now() >= d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest<S, G> {
    pub id: u64,
    pub start: S,
    pub goals: Vec<G>,
    /// Per-worker deadline in seconds.
    pub deadline: f64,
    /// Workers that crash instead of planning.
    pub crash: BTreeSet<usize>,
    pub seed: u64,
}

impl<S, G> PlanRequest<S, G> {
    pub fn new(id: u64, start: S, goals: Vec<G>) -> Self {
        Self { id, start, goals, deadline: 5.0, crash: BTreeSet::new(), seed: id }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkerStatus {
    Succeeded,
    Failed,
    Crashed,
    Cancelled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaceEventKind {
    Spawned,
    Succeeded,
    Failed,
    Crashed,
    Cancelled,
}

impl From<WorkerStatus> for RaceEventKind {
    fn from(s: WorkerStatus) -> Self {
        match s {
            WorkerStatus::Succeeded => RaceEventKind::Succeeded,
            WorkerStatus::Failed => RaceEventKind::Failed,
            WorkerStatus::Crashed => RaceEventKind::Crashed,
            WorkerStatus::Cancelled => RaceEventKind::Cancelled,
        }
    }
}

impl fmt::Display for RaceEventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RaceEventKind::Spawned => "spawned",
            RaceEventKind::Succeeded => "succeeded",
            RaceEventKind::Failed => "failed",
            RaceEventKind::Crashed => "crashed",
            RaceEventKind::Cancelled => "cancelled",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaceEvent {
    pub worker: usize,
    pub kind: RaceEventKind,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaceOutcome<P> {
    pub request_id: u64,
    pub winner: Option<(usize, P)>,
    pub statuses: Vec<WorkerStatus>,
    pub events: Vec<RaceEvent>,
}

impl<P> RaceOutcome<P> {
    pub fn succeeded(&self) -> bool {
        self.winner.is_some()
    }

    /// `race <id> worker <i> <status> t=<s>` lines in event order.
    pub fn trace_lines(&self) -> Vec<String> {
        self.events
            .iter()
            .map(|e| format!("race {} worker {} {} t={:.3}", self.request_id, e.worker, e.kind, e.t))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RaceMode {
    Concurrent,
    /// Seeded completion permutation from the request seed.
    Deterministic,
    /// Explicit completion order.
    Ordered(Vec<usize>),
}

/// Completion order used by deterministic mode.
pub fn completion_order(seed: u64, request_id: u64, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(&[seed, request_id, 0x7261_6365]));
    order
}

pub fn plan_race<S, G, P, F>(req: &PlanRequest<S, G>, mode: &RaceMode, planner: F) -> Result<RaceOutcome<P>, RaceError>
where
    S: Sync,
    G: Sync,
    P: Send,
    F: Fn(&S, &G, &CancelToken) -> Option<P> + Sync,
{
    if req.goals.is_empty() {
        return Err(RaceError::NoGoals);
    }
    match mode {
        RaceMode::Concurrent => Ok(race_threads(req, &planner)),
        RaceMode::Deterministic => {
            let order = completion_order(req.seed, req.id, req.goals.len());
            Ok(race_ordered(req, &order, &planner))
        }
        RaceMode::Ordered(order) => {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != (0..req.goals.len()).collect::<Vec<_>>() {
                return Err(RaceError::BadOrder);
            }
            Ok(race_ordered(req, order, &planner))
        }
    }
}

fn race_ordered<S, G, P, F>(req: &PlanRequest<S, G>, order: &[usize], planner: &F) -> RaceOutcome<P>
where
    F: Fn(&S, &G, &CancelToken) -> Option<P>,
{
    let n = req.goals.len();
    let mut events: Vec<RaceEvent> = (0..n).map(|i| RaceEvent { worker: i, kind: RaceEventKind::Spawned, t: 0.0 }).collect();
    let mut statuses = vec![WorkerStatus::Cancelled; n];
    let mut winner = None;
    let mut cancel_at = None;
    let token = CancelToken::never();
    // Injected crashes happen on startup, before any worker can finish.
    for &w in order.iter().filter(|w| req.crash.contains(w)) {
        statuses[w] = WorkerStatus::Crashed;
        events.push(RaceEvent { worker: w, kind: RaceEventKind::Crashed, t: 0.0 });
    }
    for (rank, &w) in order.iter().enumerate() {
        let t = (rank + 1) as f64 * DETERMINISTIC_SLOT;
        if winner.is_some() || req.crash.contains(&w) {
            // Cancelled workers never reach the planner.
            continue;
        }
        let status = if t > req.deadline {
            WorkerStatus::Failed
        } else {
            match catch_unwind(AssertUnwindSafe(|| planner(&req.start, &req.goals[w], &token))) {
                Ok(Some(p)) => {
                    winner = Some((w, p));
                    cancel_at = Some(t);
                    WorkerStatus::Succeeded
                }
                Ok(None) => WorkerStatus::Failed,
                Err(_) => WorkerStatus::Crashed,
            }
        };
        statuses[w] = status;
        events.push(RaceEvent { worker: w, kind: status.into(), t });
    }
    if let Some(t) = cancel_at {
        for &w in order {
            if statuses[w] == WorkerStatus::Cancelled {
                events.push(RaceEvent { worker: w, kind: RaceEventKind::Cancelled, t });
            }
        }
    }
    RaceOutcome { request_id: req.id, winner, statuses, events }
}

fn race_threads<S, G, P, F>(req: &PlanRequest<S, G>, planner: &F) -> RaceOutcome<P>
where
    S: Sync,
    G: Sync,
    P: Send,
    F: Fn(&S, &G, &CancelToken) -> Option<P> + Sync,
{
    let n = req.goals.len();
    let flag = Arc::new(AtomicBool::new(false));
    let t0 = Instant::now();
    let deadline = t0 + Duration::from_secs_f64(req.deadline.max(0.0));
    let mut events = Vec::new();
    let mut statuses = vec![WorkerStatus::Failed; n];
    let mut winner = None;

    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel();
        for (i, goal) in req.goals.iter().enumerate() {
            let tx = tx.clone();
            let token = CancelToken::new(flag.clone(), Some(deadline));
            let crash = req.crash.contains(&i);
            let start = &req.start;
            events.push(RaceEvent { worker: i, kind: RaceEventKind::Spawned, t: 0.0 });
            scope.spawn(move || {
                let result = if crash {
                    Err(())
                } else {
                    catch_unwind(AssertUnwindSafe(|| planner(start, goal, &token))).map_err(|_| ())
                };
                let timed_out = Instant::now() >= deadline;
                let cancelled = token.flag.load(Ordering::Relaxed);
                // The receiver outlives every worker inside the scope.
                let _ = tx.send((i, result, timed_out, cancelled));
            });
        }
        drop(tx);
        for (i, result, timed_out, cancelled) in rx {
            let t = t0.elapsed().as_secs_f64();
            let status = match result {
                Err(()) => WorkerStatus::Crashed,
                Ok(Some(p)) if winner.is_none() && !timed_out => {
                    flag.store(true, Ordering::Relaxed);
                    winner = Some((i, p));
                    WorkerStatus::Succeeded
                }
                Ok(_) if winner.is_some() || cancelled => WorkerStatus::Cancelled,
                Ok(_) => WorkerStatus::Failed,
            };
            statuses[i] = status;
            events.push(RaceEvent { worker: i, kind: status.into(), t });
        }
    });
    RaceOutcome { request_id: req.id, winner, statuses, events }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(n: usize) -> PlanRequest<(), usize> {
        PlanRequest::new(1, (), (0..n).collect())
    }

    fn reachable(_: &(), g: &usize, _: &CancelToken) -> Option<usize> {
        Some(*g * 10)
    }

    #[test]
    fn crash_is_tolerated() {
        let mut r = req(3);
        r.crash.insert(1);
        for mode in [RaceMode::Concurrent, RaceMode::Deterministic] {
            let out = plan_race(&r, &mode, reachable).unwrap();
            let (w, p) = out.winner.unwrap();
            assert!(w == 0 || w == 2);
            assert_eq!(p, w * 10);
            assert_eq!(out.statuses[1], WorkerStatus::Crashed);
            assert_eq!(out.statuses.iter().filter(|s| **s == WorkerStatus::Succeeded).count(), 1);
        }
    }

    #[test]
    fn all_unreachable_fails() {
        for mode in [RaceMode::Concurrent, RaceMode::Deterministic] {
            let out = plan_race(&req(4), &mode, |_: &(), _: &usize, _: &CancelToken| None::<()>).unwrap();
            assert!(out.winner.is_none());
            assert!(out.statuses.iter().all(|s| *s == WorkerStatus::Failed));
        }
    }

    #[test]
    fn explicit_order_picks_first_finisher() {
        let out = plan_race(&req(3), &RaceMode::Ordered(vec![2, 0, 1]), reachable).unwrap();
        assert_eq!(out.winner, Some((2, 20)));
        assert_eq!(out.statuses, vec![WorkerStatus::Cancelled, WorkerStatus::Cancelled, WorkerStatus::Succeeded]);
        assert_eq!(
            out.trace_lines()[3..],
            ["race 1 worker 2 succeeded t=0.100", "race 1 worker 0 cancelled t=0.100", "race 1 worker 1 cancelled t=0.100"]
        );
        assert_eq!(plan_race(&req(3), &RaceMode::Ordered(vec![0, 0, 1]), reachable), Err(RaceError::BadOrder));
    }

    #[test]
    fn real_panic_is_contained() {
        let out = plan_race(&req(3), &RaceMode::Concurrent, |_: &(), g: &usize, _: &CancelToken| {
            if *g == 0 {
                panic!("planner bug");
            }
            Some(*g)
        })
        .unwrap();
        assert_eq!(out.statuses[0], WorkerStatus::Crashed);
        assert!(out.winner.is_some());
    }

    #[test]
    fn losers_observe_cancellation() {
        let out = plan_race(&req(4), &RaceMode::Concurrent, |_: &(), g: &usize, tok: &CancelToken| {
            if *g == 3 {
                return Some(());
            }
            while !tok.is_cancelled() {
                std::thread::yield_now();
            }
            None
        })
        .unwrap();
        assert_eq!(out.winner.map(|w| w.0), Some(3));
        assert!(out.statuses[..3].iter().all(|s| *s == WorkerStatus::Cancelled));
    }

    #[test]
    fn empty_request_rejected() {
        assert_eq!(plan_race(&req(0), &RaceMode::Deterministic, reachable), Err(RaceError::NoGoals));
    }
}

//! Behavior-tree engine. Composites keep their position between ticks, so a
//! running child is resumed rather than restarted.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Success,
    Failure,
    Running,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BtError {
    #[error("composite `{0}` has no children")]
    EmptyComposite(String),
}

/// Simulated time source for timeout decorators.
pub trait Clock {
    fn now(&self) -> f64;
}

/// A leaf operation bound to a tree.
pub trait Action<C> {
    fn name(&self) -> &str;
    fn tick(&mut self, ctx: &mut C) -> Status;
    /// Drops any in-progress state; the next tick starts over.
    fn reset(&mut self) {}
}

pub type LeafFn<C> = Box<dyn FnMut(&mut C) -> Status>;

/// Action built from a factory: each fresh start gets a new closure, so state
/// captured by the closure lives exactly as long as one execution.
pub struct FnAction<C> {
    name: String,
    make: Box<dyn Fn() -> LeafFn<C>>,
    live: Option<LeafFn<C>>,
}

impl<C> FnAction<C> {
    pub fn new(name: &str, make: impl Fn() -> LeafFn<C> + 'static) -> Self {
        Self { name: name.to_string(), make: Box::new(make), live: None }
    }
}

impl<C> Action<C> for FnAction<C> {
    fn name(&self) -> &str {
        &self.name
    }

    fn tick(&mut self, ctx: &mut C) -> Status {
        let make = &self.make;
        let f = self.live.get_or_insert_with(|| make());
        let s = f(ctx);
        if s != Status::Running {
            self.live = None;
        }
        s
    }

    fn reset(&mut self) {
        self.live = None;
    }
}

pub type CondFn<C> = Box<dyn Fn(&C) -> bool>;

pub enum Node<C> {
    Sequence { name: String, children: Vec<Node<C>>, current: usize },
    Selector { name: String, children: Vec<Node<C>>, current: usize },
    Condition { name: String, check: CondFn<C> },
    Action(Box<dyn Action<C>>),
    Retry { limit: u32, failures: u32, child: Box<Node<C>> },
    Timeout { seconds: f64, started: Option<f64>, child: Box<Node<C>> },
}

impl<C> std::fmt::Debug for Node<C> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Node::Sequence { name, children, .. } => f.debug_struct("Sequence").field("name", name).field("children", children).finish(),
            Node::Selector { name, children, .. } => f.debug_struct("Selector").field("name", name).field("children", children).finish(),
            Node::Condition { name, .. } => write!(f, "Condition({name})"),
            Node::Action(a) => write!(f, "Action({})", a.name()),
            Node::Retry { limit, child, .. } => f.debug_struct("Retry").field("limit", limit).field("child", child).finish(),
            Node::Timeout { seconds, child, .. } => f.debug_struct("Timeout").field("seconds", seconds).field("child", child).finish(),
        }
    }
}

impl<C: Clock + 'static> Node<C> {
    pub fn sequence(name: &str, children: Vec<Node<C>>) -> Self {
        Node::Sequence { name: name.to_string(), children, current: 0 }
    }

    pub fn selector(name: &str, children: Vec<Node<C>>) -> Self {
        Node::Selector { name: name.to_string(), children, current: 0 }
    }

    pub fn condition(name: &str, check: impl Fn(&C) -> bool + 'static) -> Self {
        Node::Condition { name: name.to_string(), check: Box::new(check) }
    }

    pub fn action(a: impl Action<C> + 'static) -> Self {
        Node::Action(Box::new(a))
    }

    /// Shorthand for an [`FnAction`] leaf.
    pub fn leaf(name: &str, make: impl Fn() -> LeafFn<C> + 'static) -> Self {
        Node::Action(Box::new(FnAction::new(name, make)))
    }

    /// Leaf that keeps running until `check` holds.
    pub fn wait_until(name: &str, check: impl Fn(&C) -> bool + Clone + 'static) -> Self {
        Node::leaf(name, move || {
            let check = check.clone();
            Box::new(move |ctx: &mut C| if check(ctx) { Status::Success } else { Status::Running })
        })
    }

    pub fn retry(limit: u32, child: Node<C>) -> Self {
        Node::Retry { limit, failures: 0, child: Box::new(child) }
    }

    pub fn timeout(seconds: f64, child: Node<C>) -> Self {
        Node::Timeout { seconds, started: None, child: Box::new(child) }
    }

    fn validate(&self) -> Result<(), BtError> {
        match self {
            Node::Sequence { name, children, .. } | Node::Selector { name, children, .. } => {
                if children.is_empty() {
                    return Err(BtError::EmptyComposite(name.clone()));
                }
                children.iter().try_for_each(Node::validate)
            }
            Node::Retry { child, .. } | Node::Timeout { child, .. } => child.validate(),
            Node::Condition { .. } | Node::Action(_) => Ok(()),
        }
    }

    pub fn reset(&mut self) {
        match self {
            Node::Sequence { children, current, .. } | Node::Selector { children, current, .. } => {
                *current = 0;
                children.iter_mut().for_each(Node::reset);
            }
            Node::Condition { .. } => {}
            Node::Action(a) => a.reset(),
            Node::Retry { failures, child, .. } => {
                *failures = 0;
                child.reset();
            }
            Node::Timeout { started, child, .. } => {
                *started = None;
                child.reset();
            }
        }
    }

    pub fn tick(&mut self, ctx: &mut C) -> Status {
        match self {
            Node::Sequence { children, current, .. } => {
                while *current < children.len() {
                    match children[*current].tick(ctx) {
                        Status::Success => *current += 1,
                        Status::Running => return Status::Running,
                        Status::Failure => {
                            self.reset();
                            return Status::Failure;
                        }
                    }
                }
                self.reset();
                Status::Success
            }
            Node::Selector { children, current, .. } => {
                while *current < children.len() {
                    match children[*current].tick(ctx) {
                        Status::Failure => *current += 1,
                        Status::Running => return Status::Running,
                        Status::Success => {
                            self.reset();
                            return Status::Success;
                        }
                    }
                }
                self.reset();
                Status::Failure
            }
            Node::Condition { check, .. } => {
                if check(ctx) {
                    Status::Success
                } else {
                    Status::Failure
                }
            }
            Node::Action(a) => a.tick(ctx),
            Node::Retry { limit, failures, child } => match child.tick(ctx) {
                Status::Failure => {
                    *failures += 1;
                    child.reset();
                    if *failures > *limit {
                        *failures = 0;
                        Status::Failure
                    } else {
                        Status::Running
                    }
                }
                s => {
                    if s == Status::Success {
                        *failures = 0;
                    }
                    s
                }
            },
            Node::Timeout { seconds, started, child } => {
                let now = ctx.now();
                let t0 = *started.get_or_insert(now);
                match child.tick(ctx) {
                    Status::Running if now - t0 >= *seconds => {
                        child.reset();
                        *started = None;
                        Status::Failure
                    }
                    Status::Running => Status::Running,
                    s => {
                        *started = None;
                        s
                    }
                }
            }
        }
    }
}

/// A validated tree.
#[derive(Debug)]
pub struct Tree<C> {
    root: Node<C>,
}

impl<C: Clock + 'static> Tree<C> {
    pub fn new(root: Node<C>) -> Result<Self, BtError> {
        root.validate()?;
        Ok(Self { root })
    }

    pub fn tick(&mut self, ctx: &mut C) -> Status {
        self.root.tick(ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;
    use std::rc::Rc;

    #[derive(Default)]
    struct Ctx {
        t: f64,
    }

    impl Clock for Ctx {
        fn now(&self) -> f64 {
            self.t
        }
    }

    fn fixed(s: Status) -> Node<Ctx> {
        Node::leaf("fixed", move || Box::new(move |_| s))
    }

    /// Plays `script` across ticks; the counter survives resets.
    fn scripted(script: Vec<Status>, ticks: Rc<RefCell<usize>>) -> Node<Ctx> {
        Node::leaf("scripted", move || {
            let script = script.clone();
            let ticks = ticks.clone();
            Box::new(move |_| {
                let mut n = ticks.borrow_mut();
                let s = script[(*n).min(script.len() - 1)];
                *n += 1;
                s
            })
        })
    }

    #[test]
    fn sequence_and_selector_basics() {
        let mut ctx = Ctx::default();
        let mut t = Tree::new(Node::sequence("s", vec![fixed(Status::Success), fixed(Status::Running)])).unwrap();
        assert_eq!(t.tick(&mut ctx), Status::Running);
        let mut t = Tree::new(Node::selector("s", vec![fixed(Status::Failure), fixed(Status::Success)])).unwrap();
        assert_eq!(t.tick(&mut ctx), Status::Success);
        let mut t = Tree::new(Node::selector("s", vec![fixed(Status::Failure), fixed(Status::Failure)])).unwrap();
        assert_eq!(t.tick(&mut ctx), Status::Failure);
    }

    #[test]
    fn empty_composite_rejected() {
        let err = Tree::<Ctx>::new(Node::sequence("root", vec![Node::selector("inner", vec![])])).err();
        assert_eq!(err, Some(BtError::EmptyComposite("inner".into())));
    }

    #[test]
    fn retry_succeeds_on_third_tick() {
        let mut ctx = Ctx::default();
        let n = Rc::new(RefCell::new(0));
        let child = scripted(vec![Status::Failure, Status::Failure, Status::Success], n.clone());
        let mut t = Tree::new(Node::retry(2, child)).unwrap();
        assert_eq!(t.tick(&mut ctx), Status::Running);
        assert_eq!(t.tick(&mut ctx), Status::Running);
        assert_eq!(t.tick(&mut ctx), Status::Success);
        assert_eq!(*n.borrow(), 3);
    }

    #[test]
    fn retry_gives_up_after_limit() {
        let mut ctx = Ctx::default();
        let n = Rc::new(RefCell::new(0));
        let mut t = Tree::new(Node::retry(1, scripted(vec![Status::Failure], n))).unwrap();
        assert_eq!(t.tick(&mut ctx), Status::Running);
        assert_eq!(t.tick(&mut ctx), Status::Failure);
    }

    #[test]
    fn running_child_is_resumed() {
        let mut ctx = Ctx::default();
        let first = Rc::new(RefCell::new(0));
        let second = Rc::new(RefCell::new(0));
        let root = Node::sequence(
            "s",
            vec![
                scripted(vec![Status::Success], first.clone()),
                scripted(vec![Status::Running, Status::Running, Status::Success], second.clone()),
            ],
        );
        let mut t = Tree::new(root).unwrap();
        assert_eq!(t.tick(&mut ctx), Status::Running);
        assert_eq!(t.tick(&mut ctx), Status::Running);
        assert_eq!(t.tick(&mut ctx), Status::Success);
        assert_eq!(*first.borrow(), 1);
        assert_eq!(*second.borrow(), 3);
    }

    #[test]
    fn leaf_state_lives_for_one_execution() {
        let mut ctx = Ctx::default();
        let node = Node::leaf("count", || {
            let mut k = 0;
            Box::new(move |_: &mut Ctx| {
                k += 1;
                if k == 3 {
                    Status::Success
                } else {
                    Status::Running
                }
            })
        });
        let mut t = Tree::new(node).unwrap();
        for _ in 0..2 {
            assert_eq!(t.tick(&mut ctx), Status::Running);
            assert_eq!(t.tick(&mut ctx), Status::Running);
            assert_eq!(t.tick(&mut ctx), Status::Success);
        }
    }

    #[test]
    fn timeout_fails_running_child() {
        let mut ctx = Ctx::default();
        let mut t = Tree::new(Node::timeout(1.0, fixed(Status::Running))).unwrap();
        for i in 0..10 {
            ctx.t = i as f64 * 0.1;
            assert_eq!(t.tick(&mut ctx), Status::Running);
        }
        ctx.t = 1.0;
        assert_eq!(t.tick(&mut ctx), Status::Failure);
        // Restarts the clock afterwards.
        assert_eq!(t.tick(&mut ctx), Status::Running);
    }
}

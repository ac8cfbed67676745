//! Compositional optimal policies and their execution state.
//!
//! [`ExecState`] summarizes a history in two layers. The value part (running minima,
//! pending Until candidates, Globally-Until obligations) determines the optimal value of
//! the history exactly. The policy part (timers, committed candidate, active layer,
//! frozen branch) records what the policy is currently doing. Advancing a node takes a
//! [`StepMode`] saying whether the node was followed and obeyed, followed but overridden,
//! or not followed at all.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::Formula;
use crate::score::Score;
use crate::system::{TransitionSystem, Trace};
use crate::value::{value_compose, NodeKind, ValueError, ValueNode, ValueTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Explicit witness-time countdown.
    #[default]
    Timer,
    /// Online switch test, no timer.
    Markov,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "timer" => Ok(Variant::Timer),
            "markov" => Ok(Variant::Markov),
            _ => Err(format!("unknown variant {s:?} (expected timer or markov)")),
        }
    }
}

/// How a node relates to the action just applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepMode {
    /// The node was followed and its decided action was applied.
    On,
    /// The node was followed but a different action was applied.
    Off,
    /// The node was not followed.
    Detached,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum UntilMode {
    Unset,
    /// Steps left before switching to the target.
    Timer(usize),
    /// Following the candidate at this index.
    Committed(usize),
}

/// A past start of the Until target: `c` is the minimum of the left operand before it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Candidate {
    pub c: Score,
    pub es: ExecState,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct UntilState {
    /// Minimum of the left operand over the history.
    pub c: Score,
    /// Steps taken, saturating past the bound; always 0 for unbounded Until.
    pub k: u32,
    pub cands: Vec<Candidate>,
    pub mode: UntilMode,
}

/// Globally-Until state. `cycles` is bookkeeping and excluded from equality.
#[derive(Clone, Debug, Serialize)]
pub struct GuState {
    /// Per pair: Pareto-minimal `(best witness so far, running min)` of open obligations.
    pub pending: Vec<Vec<(Score, Score)>>,
    pub layer: usize,
    pub timer: Option<usize>,
    pub cycles: u64,
}

impl PartialEq for GuState {
    fn eq(&self, o: &Self) -> bool {
        self.pending == o.pending && self.layer == o.layer && self.timer == o.timer
    }
}

impl Eq for GuState {}

impl Hash for GuState {
    fn hash<H: Hasher>(&self, h: &mut H) {
        self.pending.hash(h);
        self.layer.hash(h);
        self.timer.hash(h);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ExecState {
    Prop(Score),
    Next(Option<Box<ExecState>>),
    Globally(Score),
    Until(Box<UntilState>),
    GloballyUntil(GuState),
    Disjunction { branches: Vec<ExecState>, frozen: Option<usize> },
    PropConjunction(Score, Box<ExecState>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Choice {
    Leaf,
    Branch(usize),
    Follow(usize),
    SwitchNow,
    Pursue(Option<usize>),
    GuSwitch,
    GuPursue(Option<usize>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error("no lasso within horizon {0}")]
    Horizon(usize),
    #[error("state {0} out of range")]
    State(usize),
}

fn lowest_argmax(it: impl Iterator<Item = Score>) -> usize {
    let mut best = (Score::NegInf, 0);
    for (i, v) in it.enumerate() {
        if i == 0 || v > best.0 {
            best = (v, i);
        }
    }
    best.1
}

/// Optimal policy for a fragment formula, with the variant used at Until nodes.
#[derive(Clone, Debug)]
pub struct PolicyTree {
    pub values: Arc<ValueTree>,
    pub variant: Variant,
}

/// Per-step execution summary of the followed chain of nodes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Default)]
pub struct Inspect {
    pub node_path: Vec<usize>,
    pub timer: Option<usize>,
    pub switched: Option<bool>,
    pub running_min: Option<Score>,
    pub gu_layer: Option<usize>,
}

impl PolicyTree {
    pub fn new(values: ValueTree, variant: Variant) -> Self {
        PolicyTree { values: Arc::new(values), variant }
    }

    /// Solves `f` on `ts` and wraps the tables in a policy.
    pub fn build(ts: Arc<TransitionSystem>, f: &Formula, variant: Variant) -> Result<Self, PolicyError> {
        Ok(PolicyTree::new(value_compose(ts, f)?, variant))
    }

    pub fn ts(&self) -> &TransitionSystem {
        &self.values.ts
    }

    pub fn root(&self) -> &ValueNode {
        &self.values.root
    }

    pub fn init(&self, x0: usize) -> ExecState {
        self.init_node(self.root(), x0)
    }

    /// Optimal value of the history summarized by `es`, ending at `x`.
    pub fn value(&self, es: &ExecState, x: usize) -> Score {
        self.value_node(self.root(), es, x)
    }

    /// Action of the policy at the history summarized by `es`.
    pub fn decide(&self, es: &ExecState, x: usize) -> usize {
        self.decide_node(self.root(), es, x).0
    }

    /// Advances `es` by `(x, a)`; `mode` is `On` when `a` is the decided action.
    pub fn advance(&self, es: &ExecState, x: usize, a: usize, mode: StepMode) -> ExecState {
        self.advance_node(self.root(), es, x, a, mode)
    }

    /// History Q value: the optimal value after appending `a` at `x`.
    pub fn q(&self, es: &ExecState, x: usize, a: usize) -> Score {
        let next = self.advance(es, x, a, StepMode::Detached);
        self.value(&next, self.ts().next(x, a))
    }

    /// Q values for all actions.
    pub fn q_all(&self, es: &ExecState, x: usize) -> Vec<Score> {
        (0..self.ts().m).map(|a| self.q(es, x, a)).collect()
    }

    /// One policy step: the decided action and the advanced state.
    pub fn act(&self, es: &ExecState, x: usize) -> (usize, ExecState) {
        let a = self.decide(es, x);
        (a, self.advance(es, x, a, StepMode::On))
    }

    /// Advances along an externally chosen action, marking whether it matched the policy.
    pub fn observe(&self, es: &ExecState, x: usize, a: usize) -> ExecState {
        let mode = if self.decide(es, x) == a { StepMode::On } else { StepMode::Off };
        self.advance(es, x, a, mode)
    }

    /// Runs the policy from `x0`.
    pub fn rollout(&self, x0: usize, horizon: usize, lasso_detect: bool) -> Result<Trace, PolicyError> {
        if x0 >= self.ts().n {
            return Err(PolicyError::State(x0));
        }
        self.rollout_from(self.init(x0), x0, horizon, lasso_detect).map(|(t, _)| t)
    }

    /// Runs the policy from an arbitrary execution state; also returns per-step summaries.
    pub fn rollout_from(
        &self,
        es: ExecState,
        x0: usize,
        horizon: usize,
        lasso_detect: bool,
    ) -> Result<(Trace, Vec<Inspect>), PolicyError> {
        let mut seen: HashMap<(usize, ExecState), usize> = HashMap::new();
        let (mut es, mut x) = (es, x0);
        let (mut states, mut actions, mut info) = (Vec::new(), Vec::new(), Vec::new());
        for t in 0..horizon {
            if lasso_detect {
                if let Some(&l) = seen.get(&(x, es.clone())) {
                    return Ok((Trace::lasso(states, actions, l), info));
                }
                seen.insert((x, es.clone()), t);
            }
            info.push(self.inspect(&es, x));
            let (a, next) = self.act(&es, x);
            states.push(x);
            actions.push(a);
            x = self.ts().next(x, a);
            es = next;
        }
        if lasso_detect {
            if let Some(&l) = seen.get(&(x, es.clone())) {
                return Ok((Trace::lasso(states, actions, l), info));
            }
            return Err(PolicyError::Horizon(horizon));
        }
        states.push(x);
        Ok((Trace { states, actions, loop_start: None }, info))
    }

    /// Describes the chain of followed nodes at `x`.
    pub fn inspect(&self, es: &ExecState, x: usize) -> Inspect {
        let mut out = Inspect::default();
        let (mut node, mut es) = (self.root(), es);
        loop {
            out.node_path.push(node.id);
            let (_, choice) = self.decide_node(node, es, x);
            match (&node.kind, es) {
                (NodeKind::Until { r, .. }, ExecState::Until(st)) => {
                    if out.switched.is_none() {
                        out.switched = Some(matches!(st.mode, UntilMode::Committed(_)));
                        out.running_min = Some(st.c);
                        out.timer = match choice {
                            Choice::Pursue(t) => t,
                            Choice::SwitchNow => Some(0),
                            _ => None,
                        };
                    }
                    match choice {
                        Choice::Follow(j) => {
                            node = r;
                            es = &st.cands[j].es;
                        }
                        _ => return out,
                    }
                }
                (NodeKind::Next { child }, ExecState::Next(Some(c))) => {
                    node = child;
                    es = c;
                }
                (NodeKind::PropConjunction { child, .. }, ExecState::PropConjunction(_, c)) => {
                    node = child;
                    es = c;
                }
                (NodeKind::Disjunction { children }, ExecState::Disjunction { branches, .. }) => {
                    let Choice::Branch(b) = choice else { unreachable!() };
                    node = &children[b];
                    es = &branches[b];
                }
                (NodeKind::GloballyUntil(_), ExecState::GloballyUntil(g)) => {
                    out.gu_layer = Some(g.layer);
                    if out.timer.is_none() {
                        out.timer = g.timer;
                    }
                    return out;
                }
                _ => return out,
            }
        }
    }

    fn init_node(&self, node: &ValueNode, x: usize) -> ExecState {
        match &node.kind {
            NodeKind::Prop => ExecState::Prop(node.v_inf[x]),
            NodeKind::Next { .. } => ExecState::Next(None),
            NodeKind::Globally { .. } => ExecState::Globally(Score::PosInf),
            NodeKind::Until { .. } => {
                let mut st = UntilState { c: Score::PosInf, k: 0, cands: Vec::new(), mode: UntilMode::Unset };
                if self.timer_like(node) {
                    st.mode = match self.until_select(node, &st, x) {
                        Choice::Pursue(Some(t)) => UntilMode::Timer(t),
                        Choice::SwitchNow => UntilMode::Timer(0),
                        _ => UntilMode::Unset,
                    };
                }
                ExecState::Until(Box::new(st))
            }
            NodeKind::GloballyUntil(gu) => ExecState::GloballyUntil(GuState {
                pending: vec![Vec::new(); gu.q.len()],
                layer: 0,
                timer: None,
                cycles: 0,
            }),
            NodeKind::Disjunction { children } => ExecState::Disjunction {
                branches: children.iter().map(|c| self.init_node(c, x)).collect(),
                frozen: Some(lowest_argmax(children.iter().map(|c| c.v_inf[x]))),
            },
            NodeKind::PropConjunction { p, child } => {
                ExecState::PropConjunction(p[x], Box::new(self.init_node(child, x)))
            }
        }
    }

    fn timer_like(&self, node: &ValueNode) -> bool {
        matches!(node.kind, NodeKind::Until { bound: Some(_), .. }) || self.variant == Variant::Timer
    }

    fn value_node(&self, node: &ValueNode, es: &ExecState, x: usize) -> Score {
        match (&node.kind, es) {
            (NodeKind::Prop, ExecState::Prop(v)) => *v,
            (NodeKind::Next { child }, ExecState::Next(c)) => match c {
                None => node.v_inf[x],
                Some(c) => self.value_node(child, c, x),
            },
            (NodeKind::Globally { .. }, ExecState::Globally(c)) => (*c).min(node.v_inf[x]),
            (NodeKind::Until { .. }, ExecState::Until(st)) => self.until_value(node, st, x),
            (NodeKind::GloballyUntil(_), ExecState::GloballyUntil(g)) => gu_pending_min(g).min(node.v_inf[x]),
            (NodeKind::Disjunction { children }, ExecState::Disjunction { branches, .. }) => children
                .iter()
                .zip(branches)
                .map(|(c, b)| self.value_node(c, b, x))
                .max()
                .unwrap(),
            (NodeKind::PropConjunction { child, .. }, ExecState::PropConjunction(p, c)) => {
                (*p).min(self.value_node(child, c, x))
            }
            _ => panic!("execution state does not match policy node {}", node.id),
        }
    }

    fn until_fresh(&self, node: &ValueNode, st: &UntilState, x: usize) -> Score {
        let NodeKind::Until { table, bound, .. } = &node.kind else { unreachable!() };
        match bound {
            None => st.c.min(node.v_inf[x]),
            Some(b) if st.k <= *b => st.c.min(table.at(x, (*b - st.k) as usize)),
            Some(_) => Score::NegInf,
        }
    }

    fn cand_value(&self, node: &ValueNode, cand: &Candidate, x: usize) -> Score {
        let NodeKind::Until { r, .. } = &node.kind else { unreachable!() };
        cand.c.min(self.value_node(r, &cand.es, x))
    }

    /// Value of starting the target now, if still allowed.
    fn until_switch_value(&self, node: &ValueNode, st: &UntilState, x: usize) -> Score {
        let NodeKind::Until { r, bound, .. } = &node.kind else { unreachable!() };
        match bound {
            Some(b) if st.k > *b => Score::NegInf,
            _ => st.c.min(r.v_inf[x]),
        }
    }

    fn until_value(&self, node: &ValueNode, st: &UntilState, x: usize) -> Score {
        st.cands.iter().map(|c| self.cand_value(node, c, x)).fold(self.until_fresh(node, st, x), Score::max)
    }

    /// Decision from scratch, ignoring any stored mode.
    fn until_select(&self, node: &ValueNode, st: &UntilState, x: usize) -> Choice {
        let NodeKind::Until { q, r, table, bound } = &node.kind else { unreachable!() };
        let total = self.until_value(node, st, x);
        let past = st.cands.iter().position(|c| self.cand_value(node, c, x) == total);
        if self.timer_like(node) {
            if let Some(j) = past {
                return Choice::Follow(j);
            }
            if self.until_switch_value(node, st, x) == total {
                return Choice::SwitchNow;
            }
            let limit = match bound {
                Some(b) => (*b - st.k) as usize,
                None => table.t_conv() + 1,
            };
            let t = (1..=limit).find(|&t| st.c.min(table.at(x, t)) >= total).unwrap_or(limit.max(1));
            Choice::Pursue(Some(t))
        } else {
            if self.until_fresh(node, st, x) == total {
                let ts = self.ts();
                let hold = (0..ts.m).map(|a| q[x].min(node.v_inf[ts.next(x, a)])).max().unwrap();
                if r.v_inf[x] >= hold {
                    return Choice::SwitchNow;
                }
                return Choice::Pursue(None);
            }
            Choice::Follow(past.expect("some candidate attains the value"))
        }
    }

    fn until_decide(&self, node: &ValueNode, st: &UntilState, x: usize) -> Choice {
        let NodeKind::Until { table, bound, .. } = &node.kind else { unreachable!() };
        let total = self.until_value(node, st, x);
        match st.mode {
            UntilMode::Committed(j) if self.cand_value(node, &st.cands[j], x) == total => {
                return Choice::Follow(j);
            }
            UntilMode::Timer(0) if self.until_switch_value(node, st, x) == total => return Choice::SwitchNow,
            UntilMode::Timer(t)
                if t > 0
                    && bound.is_none_or(|b| st.k as usize + t <= b as usize)
                    && st.c.min(table.at(x, t)) >= total
                    && self.until_switch_value(node, st, x) < total =>
            {
                return Choice::Pursue(Some(t));
            }
            _ => {}
        }
        self.until_select(node, st, x)
    }

    fn gu_decide(&self, node: &ValueNode, g: &GuState, x: usize) -> (usize, Choice) {
        let NodeKind::GloballyUntil(gu) = &node.kind else { unreachable!() };
        let ts = self.ts();
        let k = gu.layers.len();
        let layer = &gu.layers[g.layer];
        let switch = || {
            let nxt = gu.layers[(g.layer + 1) % k].table.v_inf();
            (lowest_argmax((0..ts.m).map(|a| nxt[ts.next(x, a)])), Choice::GuSwitch)
        };
        match self.variant {
            Variant::Timer => match g.timer.unwrap_or(layer.table.t_star[x]) {
                0 => switch(),
                t => (layer.table.action(x, t), Choice::GuPursue(Some(t))),
            },
            Variant::Markov => {
                let v = layer.table.v_inf();
                let hold = (0..ts.m).map(|a| gu.q_tilde[g.layer][x].min(v[ts.next(x, a)])).max().unwrap();
                if layer.reach[x] >= hold {
                    switch()
                } else {
                    (layer.table.action(x, layer.table.t_star[x]), Choice::GuPursue(None))
                }
            }
        }
    }

    fn decide_node(&self, node: &ValueNode, es: &ExecState, x: usize) -> (usize, Choice) {
        let ts = self.ts();
        match (&node.kind, es) {
            (NodeKind::Prop, _) => (0, Choice::Leaf),
            (NodeKind::Next { child }, ExecState::Next(c)) => match c {
                None => (lowest_argmax((0..ts.m).map(|a| child.v_inf[ts.next(x, a)])), Choice::Leaf),
                Some(c) => (self.decide_node(child, c, x).0, Choice::Leaf),
            },
            (NodeKind::Globally { q }, ExecState::Globally(_)) => {
                (lowest_argmax((0..ts.m).map(|a| q[x].min(node.v_inf[ts.next(x, a)]))), Choice::Leaf)
            }
            (NodeKind::Until { r, table, .. }, ExecState::Until(st)) => {
                let choice = self.until_decide(node, st, x);
                let a = match choice {
                    Choice::Follow(j) => self.decide_node(r, &st.cands[j].es, x).0,
                    Choice::SwitchNow => self.decide_node(r, &self.init_node(r, x), x).0,
                    Choice::Pursue(Some(t)) => table.action(x, t),
                    Choice::Pursue(None) => table.action(x, table.t_star[x]),
                    _ => unreachable!(),
                };
                (a, choice)
            }
            (NodeKind::GloballyUntil(_), ExecState::GloballyUntil(g)) => self.gu_decide(node, g, x),
            (NodeKind::Disjunction { children }, ExecState::Disjunction { branches, frozen }) => {
                let vals: Vec<Score> = children.iter().zip(branches).map(|(c, b)| self.value_node(c, b, x)).collect();
                let total = *vals.iter().max().unwrap();
                let b = match frozen {
                    Some(b) if vals[*b] == total => *b,
                    _ => lowest_argmax(vals.into_iter()),
                };
                (self.decide_node(&children[b], &branches[b], x).0, Choice::Branch(b))
            }
            (NodeKind::PropConjunction { child, .. }, ExecState::PropConjunction(_, c)) => {
                (self.decide_node(child, c, x).0, Choice::Leaf)
            }
            _ => panic!("execution state does not match policy node {}", node.id),
        }
    }

    fn advance_node(&self, node: &ValueNode, es: &ExecState, x: usize, a: usize, mode: StepMode) -> ExecState {
        let ts = self.ts();
        match (&node.kind, es) {
            (NodeKind::Prop, ExecState::Prop(v)) => ExecState::Prop(*v),
            (NodeKind::Next { child }, ExecState::Next(c)) => match c {
                None => ExecState::Next(Some(Box::new(self.init_node(child, ts.next(x, a))))),
                Some(c) => ExecState::Next(Some(Box::new(self.advance_node(child, c, x, a, mode)))),
            },
            (NodeKind::Globally { q }, ExecState::Globally(c)) => ExecState::Globally((*c).min(q[x])),
            (NodeKind::Until { .. }, ExecState::Until(st)) => {
                ExecState::Until(Box::new(self.until_advance(node, st, x, a, mode)))
            }
            (NodeKind::GloballyUntil(gu), ExecState::GloballyUntil(g)) => {
                let pending = g
                    .pending
                    .iter()
                    .enumerate()
                    .map(|(i, ps)| gu_update(ps, gu.q[i][x], gu.r[i][x]))
                    .collect();
                let mut next = GuState { pending, layer: g.layer, timer: None, cycles: g.cycles };
                match mode {
                    StepMode::On => match self.gu_decide(node, g, x).1 {
                        Choice::GuSwitch => {
                            next.layer = (g.layer + 1) % gu.layers.len();
                            if next.layer == 0 {
                                next.cycles += 1;
                            }
                        }
                        Choice::GuPursue(t) => next.timer = t.map(|t| t - 1),
                        _ => unreachable!(),
                    },
                    StepMode::Off => {}
                    StepMode::Detached => {
                        next.layer = 0;
                        next.cycles = 0;
                    }
                }
                ExecState::GloballyUntil(next)
            }
            (NodeKind::Disjunction { children }, ExecState::Disjunction { branches, .. }) => {
                let pick = match mode {
                    StepMode::Detached => None,
                    _ => match self.decide_node(node, es, x).1 {
                        Choice::Branch(b) => Some(b),
                        _ => unreachable!(),
                    },
                };
                let branches = children
                    .iter()
                    .zip(branches)
                    .enumerate()
                    .map(|(i, (c, b))| {
                        let m = if Some(i) == pick { mode } else { StepMode::Detached };
                        self.advance_node(c, b, x, a, m)
                    })
                    .collect();
                ExecState::Disjunction { branches, frozen: pick }
            }
            (NodeKind::PropConjunction { child, .. }, ExecState::PropConjunction(p, c)) => {
                ExecState::PropConjunction(*p, Box::new(self.advance_node(child, c, x, a, mode)))
            }
            _ => panic!("execution state does not match policy node {}", node.id),
        }
    }

    fn until_advance(&self, node: &ValueNode, st: &UntilState, x: usize, a: usize, mode: StepMode) -> UntilState {
        let NodeKind::Until { q, r, bound, .. } = &node.kind else { unreachable!() };
        let ts = self.ts();
        let choice = match mode {
            StepMode::Detached => None,
            _ => Some(self.until_decide(node, st, x)),
        };
        let child_mode = |selected: bool| if selected { mode } else { StepMode::Detached };
        let mut cands: Vec<Candidate> = st
            .cands
            .iter()
            .enumerate()
            .map(|(j, cand)| Candidate {
                c: cand.c,
                es: self.advance_node(r, &cand.es, x, a, child_mode(choice == Some(Choice::Follow(j)))),
            })
            .collect();
        let mut new_idx = None;
        if bound.is_none_or(|b| st.k <= b) {
            let fresh = self.init_node(r, x);
            let es = self.advance_node(r, &fresh, x, a, child_mode(choice == Some(Choice::SwitchNow)));
            new_idx = Some(cands.len());
            cands.push(Candidate { c: st.c, es });
        }
        let mut committed = match choice {
            Some(Choice::Follow(j)) => Some(j),
            Some(Choice::SwitchNow) => new_idx,
            _ => None,
        };
        let next_mode = match (mode, choice) {
            (StepMode::On, Some(Choice::Pursue(Some(t)))) => UntilMode::Timer(t - 1),
            _ => UntilMode::Unset,
        };

        // Prune: unreachable candidates, duplicates, and dominated propositional targets.
        let y = ts.next(x, a);
        let vals: Vec<Score> = cands.iter().map(|c| self.cand_value(node, c, y)).collect();
        let static_target = matches!(r.kind, NodeKind::Prop);
        let best_static = if static_target {
            vals.iter().copied().enumerate().filter(|(_, v)| *v > Score::NegInf).max_by_key(|&(i, v)| (v, std::cmp::Reverse(i))).map(|(i, _)| i)
        } else {
            None
        };
        let mut kept: Vec<Candidate> = Vec::new();
        let mut remap: HashMap<usize, usize> = HashMap::new();
        for (j, cand) in cands.into_iter().enumerate() {
            if vals[j] == Score::NegInf || (static_target && Some(j) != best_static) {
                continue;
            }
            if let Some(i) = kept.iter().position(|k| k.es == cand.es) {
                remap.insert(j, i);
                continue;
            }
            remap.insert(j, kept.len());
            kept.push(cand);
        }
        if static_target {
            if let (Some(b), Some(_)) = (best_static, committed) {
                committed = Some(b);
            }
        }
        committed = committed.and_then(|j| remap.get(&j).copied());
        let bound_k = match bound {
            Some(b) => (st.k + 1).min(b + 1),
            None => 0,
        };
        UntilState {
            c: st.c.min(q[x]),
            k: bound_k,
            cands: kept,
            mode: match committed {
                Some(j) => UntilMode::Committed(j),
                None => next_mode,
            },
        }
    }
}

fn gu_pending_min(g: &GuState) -> Score {
    g.pending.iter().flatten().map(|&(b, c)| b.max(c)).min().unwrap_or(Score::PosInf)
}

fn gu_update(ps: &[(Score, Score)], q: Score, r: Score) -> Vec<(Score, Score)> {
    let mut all: Vec<(Score, Score)> = ps.iter().map(|&(b, c)| (b.max(r.min(c)), c.min(q))).collect();
    all.push((r, q));
    all.sort();
    all.dedup();
    let mut out: Vec<(Score, Score)> = Vec::new();
    for &(b, c) in &all {
        if !all.iter().any(|&(b2, c2)| (b2, c2) != (b, c) && b2 <= b && c2 <= c) {
            out.push((b, c));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse;
    use crate::robustness::eval;
    use crate::score::fin;

    fn counterexample() -> Arc<TransitionSystem> {
        Arc::new(TransitionSystem::from_fn(2, 2, |_, a| a).with_label("one", vec![fin(0), fin(1)]))
    }

    #[test]
    fn counterexample_markov_moves_now() {
        let f = parse("F one").unwrap();
        for variant in [Variant::Timer, Variant::Markov] {
            let pt = PolicyTree::build(counterexample(), &f, variant).unwrap();
            let es = pt.init(0);
            assert_eq!(pt.decide(&es, 0), 1);
            assert_eq!(pt.q_all(&es, 0), vec![fin(1), fin(1)]);
            let tr = pt.rollout(0, 10, true).unwrap();
            assert_eq!(tr.states[..2], [0, 1]);
            assert_eq!(eval(&f, pt.ts(), &tr).unwrap(), fin(1));
        }
    }

    #[test]
    fn timer_initialized_to_witness_time() {
        let pt = PolicyTree::build(counterexample(), &parse("F one").unwrap(), Variant::Timer).unwrap();
        let ExecState::Until(st) = pt.init(0) else { panic!() };
        assert_eq!(st.mode, UntilMode::Timer(1));
        let pt = PolicyTree::build(counterexample(), &parse("F one").unwrap(), Variant::Markov).unwrap();
        let ExecState::Until(st) = pt.init(0) else { panic!() };
        assert_eq!(st.mode, UntilMode::Unset);
    }

    #[test]
    fn disjunction_freezes_best_branch() {
        let ts = Arc::new(
            TransitionSystem::from_fn(1, 1, |_, _| 0).with_label("a", vec![fin(0)]).with_label("b", vec![fin(1)]),
        );
        let pt = PolicyTree::build(ts, &parse("G a | G b").unwrap(), Variant::Timer).unwrap();
        let ExecState::Disjunction { frozen, .. } = pt.init(0) else { panic!() };
        assert_eq!(frozen, Some(1));
    }

    #[test]
    fn globally_tie_breaks_low() {
        let ts = Arc::new(TransitionSystem::from_fn(2, 2, |_, a| a).with_label("q", vec![fin(1), fin(1)]));
        let pt = PolicyTree::build(ts, &parse("G q").unwrap(), Variant::Timer).unwrap();
        assert_eq!(pt.decide(&pt.init(1), 1), 0);
    }

    #[test]
    fn gu_obligations_are_pareto_minimal() {
        let ps = gu_update(&[(fin(-1), fin(2)), (fin(0), fin(0))], fin(1), fin(-2));
        assert_eq!(ps, vec![(fin(-2), fin(1)), (fin(0), fin(0))]);
    }
}

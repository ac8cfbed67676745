//! Optimal value functions by exact dynamic programming over the fragment derivation.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::formula::{derive, Derivation, Formula, NotInS};
use crate::score::Score;
use crate::system::{SystemError, TransitionSystem};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValueError {
    #[error(transparent)]
    NotInS(#[from] NotInS),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("{0} actions exceed the supported 64")]
    TooManyActions(usize),
    #[error("empty pair list")]
    EmptyPairs,
    #[error("{0} is not propositional")]
    NotPropositional(String),
}

/// Finite-horizon table of an Until node: `v_fin[t][x]` for `t = 0..=t_conv`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UntilTable {
    pub v_fin: Vec<Vec<Score>>,
    /// `argmax[t][x]`: bitmask of actions maximizing `min(q(x), v_fin[t-1][f(x,a)])`;
    /// holds `t = 1..=t_conv + 1`, index 0 unused.
    pub argmax: Vec<Vec<u64>>,
    /// Smallest `t` with `v_fin[t][x] = v_inf[x]`.
    pub t_star: Vec<usize>,
}

impl UntilTable {
    pub fn t_conv(&self) -> usize {
        self.v_fin.len() - 1
    }

    /// `V_fin[x, t]`, constant beyond `t_conv`.
    pub fn at(&self, x: usize, t: usize) -> Score {
        self.v_fin[t.min(self.t_conv())][x]
    }

    pub fn v_inf(&self) -> &[Score] {
        self.v_fin.last().unwrap()
    }

    /// Lowest maximizing action at timer `t >= 1`.
    pub fn action(&self, x: usize, t: usize) -> usize {
        if self.argmax.len() < 2 {
            return 0;
        }
        let t = t.clamp(1, self.argmax.len() - 1);
        self.argmax[t][x].trailing_zeros() as usize
    }
}

/// One layer of the Globally-Until cycle: the Until whose target is `reach`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GuLayer {
    /// `R_i(x) = min(r~_i(x), max_a V_{i+1}(f(x, a)))`
    pub reach: Vec<Score>,
    pub table: UntilTable,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GuTables {
    pub q: Vec<Vec<Score>>,
    pub r: Vec<Vec<Score>>,
    pub q_tilde: Vec<Vec<Score>>,
    pub r_tilde: Vec<Vec<Score>>,
    pub layers: Vec<GuLayer>,
}

#[derive(Clone, Debug)]
pub enum NodeKind {
    Prop,
    Until { q: Vec<Score>, r: Arc<ValueNode>, bound: Option<u32>, table: UntilTable },
    Next { child: Arc<ValueNode> },
    Globally { q: Vec<Score> },
    GloballyUntil(GuTables),
    Disjunction { children: Vec<Arc<ValueNode>> },
    PropConjunction { p: Vec<Score>, child: Arc<ValueNode> },
}

/// Value table of one derivation node.
#[derive(Clone, Debug)]
pub struct ValueNode {
    pub id: usize,
    pub formula: Formula,
    pub v_inf: Vec<Score>,
    pub kind: NodeKind,
}

impl ValueNode {
    pub fn children(&self) -> Vec<&Arc<ValueNode>> {
        match &self.kind {
            NodeKind::Until { r, .. } => vec![r],
            NodeKind::Next { child } | NodeKind::PropConjunction { child, .. } => vec![child],
            NodeKind::Disjunction { children } => children.iter().collect(),
            _ => vec![],
        }
    }

    pub fn t_conv(&self) -> Option<usize> {
        match &self.kind {
            NodeKind::Until { table, .. } => Some(table.t_conv()),
            NodeKind::GloballyUntil(gu) => gu.layers.iter().map(|l| l.table.t_conv()).max(),
            _ => None,
        }
    }
}

/// All tables for one formula on one system; shared subformulas share nodes.
#[derive(Clone, Debug)]
pub struct ValueTree {
    pub ts: Arc<TransitionSystem>,
    pub root: Arc<ValueNode>,
    pub nodes: Vec<Arc<ValueNode>>,
}

impl ValueTree {
    pub fn v_inf(&self) -> &[Score] {
        &self.root.v_inf
    }

    /// JSON dump: node ids, formulas, `V_inf` arrays and convergence horizons.
    pub fn dump(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Node<'a> {
            id: usize,
            formula: String,
            kind: &'static str,
            children: Vec<usize>,
            t_conv: Option<usize>,
            v_inf: &'a [Score],
        }
        let nodes: Vec<Node> = self
            .nodes
            .iter()
            .map(|n| Node {
                id: n.id,
                formula: n.formula.to_string(),
                kind: match n.kind {
                    NodeKind::Prop => "prop",
                    NodeKind::Until { bound: None, .. } => "until",
                    NodeKind::Until { .. } => "timed_until",
                    NodeKind::Next { .. } => "next",
                    NodeKind::Globally { .. } => "globally",
                    NodeKind::GloballyUntil(_) => "globally_until",
                    NodeKind::Disjunction { .. } => "or",
                    NodeKind::PropConjunction { .. } => "and",
                },
                children: n.children().iter().map(|c| c.id).collect(),
                t_conv: n.t_conv(),
                v_inf: &n.v_inf,
            })
            .collect();
        serde_json::json!({ "root": self.root.id, "states": self.ts.n, "nodes": nodes })
    }
}

fn max_succ(ts: &TransitionSystem, v: &[Score], x: usize) -> Score {
    (0..ts.m).map(|a| v[ts.next(x, a)]).max().unwrap()
}

fn check_actions(ts: &TransitionSystem) -> Result<(), ValueError> {
    if ts.m > 64 || ts.m == 0 {
        return Err(ValueError::TooManyActions(ts.m));
    }
    Ok(())
}

/// Scores of a propositional formula.
pub fn value_prop(ts: &TransitionSystem, p: &Formula) -> Result<Vec<Score>, ValueError> {
    if !p.is_prop() {
        return Err(ValueError::NotPropositional(p.to_string()));
    }
    Ok(ts.prop_values(p)?)
}

fn until_table(ts: &TransitionSystem, q: &[Score], r: &[Score], bound: Option<u32>) -> UntilTable {
    let n = ts.n;
    let mut v_fin = vec![r.to_vec()];
    let mut argmax = vec![vec![0u64; n]];
    loop {
        if bound.is_some_and(|b| v_fin.len() > b as usize) {
            break;
        }
        let prev = v_fin.last().unwrap();
        let mut next = Vec::with_capacity(n);
        let mut arg = Vec::with_capacity(n);
        for x in 0..n {
            let mut best = Score::NegInf;
            let mut mask = 0u64;
            for a in 0..ts.m {
                let c = q[x].min(prev[ts.next(x, a)]);
                if c > best {
                    best = c;
                    mask = 1 << a;
                } else if c == best {
                    mask |= 1 << a;
                }
            }
            next.push(r[x].max(best));
            arg.push(mask);
        }
        argmax.push(arg);
        if next == *prev {
            break;
        }
        v_fin.push(next);
    }
    let last = v_fin.last().unwrap();
    let t_star = (0..n).map(|x| v_fin.iter().position(|row| row[x] == last[x]).unwrap()).collect();
    UntilTable { v_fin, argmax, t_star }
}

/// Table of `q U r` given `r`'s values; with `bound`, the horizon is truncated at `N`.
pub fn value_until(ts: &TransitionSystem, q: &[Score], r: &[Score]) -> Result<UntilTable, ValueError> {
    check_actions(ts)?;
    Ok(until_table(ts, q, r, None))
}

/// Table of `q U[0,N] r`; `V_inf = V_fin[., N]`.
pub fn value_timed_until(ts: &TransitionSystem, q: &[Score], r: &[Score], bound: u32) -> Result<UntilTable, ValueError> {
    check_actions(ts)?;
    Ok(until_table(ts, q, r, Some(bound)))
}

/// Greatest fixed point of `W(x) = max_a min(q(x), W(f(x, a)))`.
pub fn value_globally(ts: &TransitionSystem, q: &[Score]) -> Vec<Score> {
    let mut w = q.to_vec();
    loop {
        let next: Vec<Score> = (0..ts.n).map(|x| q[x].min(max_succ(ts, &w, x))).collect();
        if next == w {
            return w;
        }
        w = next;
    }
}

/// Layered fixed point for `G(&_i q_i U r_i)`, starting from the top of the lattice.
pub fn value_gu(ts: &TransitionSystem, q: Vec<Vec<Score>>, r: Vec<Vec<Score>>) -> Result<GuTables, ValueError> {
    check_actions(ts)?;
    let k = q.len();
    if k == 0 {
        return Err(ValueError::EmptyPairs);
    }
    let n = ts.n;
    let w_of = |i: usize| -> Vec<Score> {
        (0..n)
            .map(|x| (0..k).filter(|&j| j != i).map(|j| q[j][x].max(r[j][x])).min().unwrap_or(Score::PosInf))
            .collect()
    };
    let ws: Vec<Vec<Score>> = (0..k).map(w_of).collect();
    let q_tilde: Vec<Vec<Score>> = (0..k).map(|i| (0..n).map(|x| q[i][x].min(ws[i][x])).collect()).collect();
    let r_tilde: Vec<Vec<Score>> = (0..k).map(|i| (0..n).map(|x| r[i][x].min(ws[i][x])).collect()).collect();
    let mut w = vec![Score::PosInf; n];
    loop {
        let mut tail = w.clone();
        let mut layers = Vec::with_capacity(k);
        for i in (0..k).rev() {
            let reach: Vec<Score> = (0..n).map(|x| r_tilde[i][x].min(max_succ(ts, &tail, x))).collect();
            let table = until_table(ts, &q_tilde[i], &reach, None);
            tail = table.v_inf().to_vec();
            layers.push(GuLayer { reach, table });
        }
        layers.reverse();
        if tail == w {
            return Ok(GuTables { q, r, q_tilde, r_tilde, layers });
        }
        w = tail;
    }
}

struct Builder<'a> {
    ts: &'a TransitionSystem,
    memo: HashMap<Formula, Arc<ValueNode>>,
    nodes: Vec<Arc<ValueNode>>,
}

impl Builder<'_> {
    fn build(&mut self, d: &Derivation) -> Result<Arc<ValueNode>, ValueError> {
        let formula = d.formula();
        if let Some(n) = self.memo.get(&formula) {
            return Ok(n.clone());
        }
        let ts = self.ts;
        let (v_inf, kind) = match d {
            Derivation::Prop(p) => (value_prop(ts, p)?, NodeKind::Prop),
            Derivation::Until { q, r, bound } => {
                let child = self.build(r)?;
                let qv = value_prop(ts, q)?;
                let table = until_table(ts, &qv, &child.v_inf, *bound);
                let v = match bound {
                    Some(b) => (0..ts.n).map(|x| table.at(x, *b as usize)).collect(),
                    None => table.v_inf().to_vec(),
                };
                (v, NodeKind::Until { q: qv, r: child, bound: *bound, table })
            }
            Derivation::Next(c) => {
                let child = self.build(c)?;
                let v = (0..ts.n).map(|x| max_succ(ts, &child.v_inf, x)).collect();
                (v, NodeKind::Next { child })
            }
            Derivation::Globally(q) => {
                let qv = value_prop(ts, q)?;
                (value_globally(ts, &qv), NodeKind::Globally { q: qv })
            }
            Derivation::GloballyUntil(pairs) => {
                let q = pairs.iter().map(|(p, _)| value_prop(ts, p)).collect::<Result<_, _>>()?;
                let r = pairs.iter().map(|(_, r)| value_prop(ts, r)).collect::<Result<_, _>>()?;
                let gu = value_gu(ts, q, r)?;
                (gu.layers[0].table.v_inf().to_vec(), NodeKind::GloballyUntil(gu))
            }
            Derivation::Disjunction(xs) => {
                let children = xs.iter().map(|x| self.build(x)).collect::<Result<Vec<_>, _>>()?;
                let v = (0..ts.n).map(|x| children.iter().map(|c| c.v_inf[x]).max().unwrap()).collect();
                (v, NodeKind::Disjunction { children })
            }
            Derivation::PropConjunction(p, c) => {
                let child = self.build(c)?;
                let pv = value_prop(ts, p)?;
                let v = (0..ts.n).map(|x| pv[x].min(child.v_inf[x])).collect();
                (v, NodeKind::PropConjunction { p: pv, child })
            }
        };
        let node = Arc::new(ValueNode { id: self.nodes.len(), formula: formula.clone(), v_inf, kind });
        self.nodes.push(node.clone());
        self.memo.insert(formula, node.clone());
        Ok(node)
    }
}

/// Value tables for every node of `f`'s fragment derivation.
pub fn value_compose(ts: Arc<TransitionSystem>, f: &Formula) -> Result<ValueTree, ValueError> {
    check_actions(&ts)?;
    let d = derive(f)?;
    for a in f.atoms() {
        if !ts.labels.contains_key(&a) {
            return Err(SystemError::UnboundAtom(a).into());
        }
    }
    let mut b = Builder { ts: &ts, memo: HashMap::new(), nodes: Vec::new() };
    let root = b.build(&d)?;
    let nodes = b.nodes;
    Ok(ValueTree { ts, root, nodes })
}

/// Finite-horizon Q of an Until node at `[x, t]`: `max(V_r(x), min(q(x), V_fin[f(x,a), t-1]))`, and `V_r(x)` at `t = 0`.
pub fn q_timed(ts: &TransitionSystem, node: &ValueNode, x: usize, a: usize, t: usize) -> Option<Score> {
    match &node.kind {
        NodeKind::Until { q, r, table, .. } => Some(if t == 0 {
            r.v_inf[x]
        } else {
            r.v_inf[x].max(q[x].min(table.at(ts.next(x, a), t - 1)))
        }),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse;
    use crate::score::fin;

    fn counterexample() -> Arc<TransitionSystem> {
        Arc::new(TransitionSystem::from_fn(2, 2, |_, a| a).with_label("one", vec![fin(0), fin(1)]))
    }

    #[test]
    fn counterexample_values() {
        let vt = value_compose(counterexample(), &parse("F one").unwrap()).unwrap();
        assert_eq!(vt.v_inf(), &[fin(1), fin(1)]);
        let NodeKind::Until { table, .. } = &vt.root.kind else { panic!() };
        assert_eq!(table.t_conv(), 1);
        assert_eq!(table.t_star, vec![1, 0]);
        assert_eq!(table.action(0, 1), 1);
    }

    #[test]
    fn timed_zero_is_target() {
        let ts = counterexample();
        let vt = value_compose(ts, &parse("T U[0,0] one").unwrap()).unwrap();
        assert_eq!(vt.v_inf(), &[fin(0), fin(1)]);
    }

    #[test]
    fn globally_dead_end() {
        let ts = TransitionSystem::from_fn(3, 1, |x, _| if x == 0 { 1 } else { 2 })
            .with_label("q", vec![fin(1), fin(1), fin(-1)]);
        assert_eq!(value_globally(&ts, &ts.labels["q"]), vec![fin(-1); 3]);
        let ok = TransitionSystem::from_fn(2, 1, |x, _| x).with_label("q", vec![fin(1), fin(1)]);
        assert_eq!(value_globally(&ok, &ok.labels["q"]), vec![fin(1); 2]);
    }

    #[test]
    fn gu_trivial_recurrence() {
        let ts = Arc::new(TransitionSystem::from_fn(2, 2, |_, a| a).with_label("r", vec![fin(1), fin(1)]));
        let vt = value_compose(ts, &parse("G(T U r)").unwrap()).unwrap();
        assert_eq!(vt.v_inf(), &[fin(1), fin(1)]);
    }

    #[test]
    fn shared_subformulas_share_nodes() {
        let ts = counterexample();
        let vt = value_compose(ts, &parse("F one | X F one").unwrap()).unwrap();
        assert_eq!(vt.nodes.len(), 4);
    }
}

//! Brute-force ground truth on tiny systems.
//!
//! A formula is unfolded one step at a time into clauses `(c, next, deferred)`: the score
//! `c` collected at the current state, the obligations for the successor, and the
//! unbounded Untils postponed by this step. Robustness of a run is the minimum clause score
//! along it, provided no Until is postponed forever. The optimal value from a node `(x, S)`
//! of the resulting graph is the largest threshold `v` such that edges scoring at least
//! `v` reach a strongly connected component that fulfils every Until infinitely often.
//!
//! This construction shares nothing with the dynamic programming in [`crate::value`].

mod suite;

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use thiserror::Error;

use crate::formula::Formula;
use crate::score::Score;
use crate::system::{SystemError, TransitionSystem};

pub use suite::{
    check_equivalence, instance, random_fragment_formula, resume_score, random_system, Discrepancy, Report, SuiteConfig,
};

pub const MAX_STATES: usize = 6;
pub const MAX_ACTIONS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("system too large for the oracle: {n} states, {m} actions (limit {MAX_STATES}, {MAX_ACTIONS})")]
    TooLarge { n: usize, m: usize },
    #[error("unsupported formula for the oracle: {0}")]
    Unsupported(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("prefix inconsistent with the dynamics")]
    BadPrefix,
    #[error("no witness found within {0} steps")]
    NoWitness(usize),
}

#[derive(Clone, Debug)]
struct Clause {
    c: Score,
    next: BTreeSet<usize>,
    defer: BTreeSet<usize>,
}

type Obligations = Vec<usize>;

/// Exhaustive solver for one formula on one system.
pub struct Oracle {
    ts: Arc<TransitionSystem>,
    forms: Vec<Formula>,
    ids: HashMap<Formula, usize>,
    exp_memo: HashMap<(usize, usize), Arc<Vec<Clause>>>,
    set_memo: HashMap<(Obligations, usize), Arc<Vec<Clause>>>,
    nodes: HashMap<(usize, Obligations), usize>,
    node_list: Vec<(usize, Obligations)>,
    edges: Vec<(usize, usize, Score, BTreeSet<usize>)>,
    values: Vec<Score>,
    root: usize,
}

fn normalize(mut cs: Vec<Clause>) -> Vec<Clause> {
    cs.retain(|c| c.c > Score::NegInf);
    let mut best: HashMap<(BTreeSet<usize>, BTreeSet<usize>), Score> = HashMap::new();
    let mut order = Vec::new();
    for c in cs {
        let key = (c.next, c.defer);
        match best.get_mut(&key) {
            Some(v) => *v = (*v).max(c.c),
            None => {
                order.push(key.clone());
                best.insert(key, c.c);
            }
        }
    }
    order
        .into_iter()
        .map(|k| {
            let c = best[&k];
            Clause { c, next: k.0, defer: k.1 }
        })
        .collect()
}

fn product(a: &[Clause], b: &[Clause]) -> Vec<Clause> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(Clause {
                c: x.c.min(y.c),
                next: x.next.union(&y.next).copied().collect(),
                defer: x.defer.union(&y.defer).copied().collect(),
            });
        }
    }
    normalize(out)
}

fn unit() -> Vec<Clause> {
    vec![Clause { c: Score::PosInf, next: BTreeSet::new(), defer: BTreeSet::new() }]
}

impl Oracle {
    /// Builds the full obligation graph for `f` from every state.
    pub fn new(f: &Formula, ts: Arc<TransitionSystem>) -> Result<Self, OracleError> {
        if ts.n > MAX_STATES || ts.m > MAX_ACTIONS {
            return Err(OracleError::TooLarge { n: ts.n, m: ts.m });
        }
        let mut o = Oracle {
            ts,
            forms: Vec::new(),
            ids: HashMap::new(),
            exp_memo: HashMap::new(),
            set_memo: HashMap::new(),
            nodes: HashMap::new(),
            node_list: Vec::new(),
            edges: Vec::new(),
            values: Vec::new(),
            root: 0,
        };
        o.check(f)?;
        o.root = o.intern(f);
        let starts: Vec<usize> = (0..o.ts.n).map(|x| o.node(x, vec![o.root])).collect();
        let mut frontier = starts;
        while let Some(u) = frontier.pop() {
            let (x, s) = o.node_list[u].clone();
            for cl in o.expand_set(&s, x)?.iter() {
                let next: Obligations = cl.next.iter().copied().collect();
                for a in 0..o.ts.m {
                    let y = o.ts.next(x, a);
                    let before = o.node_list.len();
                    let v = o.node(y, next.clone());
                    if v == before {
                        frontier.push(v);
                    }
                    o.edges.push((u, v, cl.c, cl.defer.clone()));
                }
            }
        }
        o.edges.sort_by(|a, b| (a.0, a.1, &a.3).cmp(&(b.0, b.1, &b.3)).then(b.2.cmp(&a.2)));
        o.edges.dedup_by(|b, a| a.0 == b.0 && a.1 == b.1 && a.3 == b.3);
        o.solve();
        Ok(o)
    }

    fn check(&self, f: &Formula) -> Result<(), OracleError> {
        if let Formula::Not(c) = f {
            if !c.is_prop() {
                return Err(OracleError::Unsupported(f.to_string()));
            }
        }
        for c in f.children() {
            self.check(c)?;
        }
        for a in f.atoms() {
            if !self.ts.labels.contains_key(&a) {
                return Err(SystemError::UnboundAtom(a).into());
            }
        }
        Ok(())
    }

    fn intern(&mut self, f: &Formula) -> usize {
        if let Some(&i) = self.ids.get(f) {
            return i;
        }
        let i = self.forms.len();
        self.forms.push(f.clone());
        self.ids.insert(f.clone(), i);
        i
    }

    fn node(&mut self, x: usize, s: Obligations) -> usize {
        if let Some(&i) = self.nodes.get(&(x, s.clone())) {
            return i;
        }
        let i = self.node_list.len();
        self.node_list.push((x, s.clone()));
        self.nodes.insert((x, s), i);
        i
    }

    fn expand(&mut self, id: usize, x: usize) -> Result<Arc<Vec<Clause>>, OracleError> {
        if let Some(c) = self.exp_memo.get(&(id, x)) {
            return Ok(c.clone());
        }
        let f = self.forms[id].clone();
        let single = |id: usize| Clause { c: Score::PosInf, next: BTreeSet::from([id]), defer: BTreeSet::new() };
        let out = if f.is_prop() {
            let v = self.ts.prop_values(&f)?[x];
            vec![Clause { c: v, next: BTreeSet::new(), defer: BTreeSet::new() }]
        } else {
            match &f {
                Formula::And(xs) => {
                    let mut acc = unit();
                    for c in xs {
                        let cid = self.intern(c);
                        acc = product(&acc, &self.expand(cid, x)?);
                    }
                    acc
                }
                Formula::Or(xs) => {
                    let mut acc = Vec::new();
                    for c in xs {
                        let cid = self.intern(c);
                        acc.extend(self.expand(cid, x)?.iter().cloned());
                    }
                    normalize(acc)
                }
                Formula::Next(c) => vec![single(self.intern(c))],
                Formula::Until(..) | Formula::Finally(_) => {
                    let (p, r) = match &f {
                        Formula::Until(p, r) => ((**p).clone(), (**r).clone()),
                        Formula::Finally(r) => (Formula::True, (**r).clone()),
                        _ => unreachable!(),
                    };
                    let (pid, rid) = (self.intern(&p), self.intern(&r));
                    let mut acc: Vec<Clause> = self.expand(rid, x)?.to_vec();
                    let wait = Clause { c: Score::PosInf, next: BTreeSet::from([id]), defer: BTreeSet::from([id]) };
                    acc.extend(product(&self.expand(pid, x)?, &[wait]));
                    normalize(acc)
                }
                Formula::TimedUntil(p, r, n) => {
                    let rid = self.intern(r);
                    let mut acc: Vec<Clause> = self.expand(rid, x)?.to_vec();
                    if *n > 0 {
                        let pid = self.intern(p);
                        let rest = self.intern(&Formula::timed_until((**p).clone(), (**r).clone(), n - 1));
                        acc.extend(product(&self.expand(pid, x)?, &[single(rest)]));
                    }
                    normalize(acc)
                }
                Formula::Globally(c) => {
                    let cid = self.intern(c);
                    product(&self.expand(cid, x)?, &[single(id)])
                }
                _ => return Err(OracleError::Unsupported(f.to_string())),
            }
        };
        let out = Arc::new(out);
        self.exp_memo.insert((id, x), out.clone());
        Ok(out)
    }

    fn expand_set(&mut self, s: &Obligations, x: usize) -> Result<Arc<Vec<Clause>>, OracleError> {
        if let Some(c) = self.set_memo.get(&(s.clone(), x)) {
            return Ok(c.clone());
        }
        let mut acc = unit();
        for &id in s {
            acc = product(&acc, &self.expand(id, x)?);
        }
        let acc = Arc::new(acc);
        self.set_memo.insert((s.clone(), x), acc.clone());
        Ok(acc)
    }

    fn untils(&self) -> Vec<usize> {
        (0..self.forms.len()).filter(|&i| matches!(self.forms[i], Formula::Until(..) | Formula::Finally(_))).collect()
    }

    /// Computes the optimal value of every node.
    fn solve(&mut self) {
        let n = self.node_list.len();
        let untils = self.untils();
        let mut thresholds: Vec<Score> = self.edges.iter().map(|e| e.2).collect();
        thresholds.sort_unstable_by(|a, b| b.cmp(a));
        thresholds.dedup();
        self.values = vec![Score::NegInf; n];
        for &v in &thresholds {
            let mut g: DiGraph<(), usize> = DiGraph::with_capacity(n, self.edges.len());
            for _ in 0..n {
                g.add_node(());
            }
            for (i, e) in self.edges.iter().enumerate() {
                if e.2 >= v {
                    g.add_edge(NodeIndex::new(e.0), NodeIndex::new(e.1), i);
                }
            }
            let mut good = vec![false; n];
            for comp in tarjan_scc(&g) {
                let members: BTreeSet<usize> = comp.iter().map(|i| i.index()).collect();
                let internal: Vec<usize> = self
                    .edges
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.2 >= v && members.contains(&e.0) && members.contains(&e.1))
                    .map(|(i, _)| i)
                    .collect();
                if internal.is_empty() {
                    continue;
                }
                let fair = untils.iter().all(|u| internal.iter().any(|&i| !self.edges[i].3.contains(u)));
                if fair {
                    for m in members {
                        good[m] = true;
                    }
                }
            }
            // Backward closure: nodes that can reach a fair component.
            let mut changed = true;
            while changed {
                changed = false;
                for e in &self.edges {
                    if e.2 >= v && good[e.1] && !good[e.0] {
                        good[e.0] = true;
                        changed = true;
                    }
                }
            }
            for u in 0..n {
                if good[u] && self.values[u] == Score::NegInf {
                    self.values[u] = v;
                }
            }
        }
    }

    /// Optimal value from state `x0`.
    pub fn value(&self, x0: usize) -> Score {
        self.values[self.nodes[&(x0, vec![self.root])]]
    }

    /// Optimal value over continuations of the state sequence `prefix`.
    pub fn value_history(&mut self, prefix: &[usize]) -> Result<Score, OracleError> {
        let Some((&last, init)) = prefix.split_last() else { return Err(OracleError::BadPrefix) };
        let mut front: HashMap<Obligations, Score> = HashMap::from([(vec![self.root], Score::PosInf)]);
        for (k, &x) in init.iter().enumerate() {
            let y = prefix[k + 1];
            if !(0..self.ts.m).any(|a| self.ts.next(x, a) == y) {
                return Err(OracleError::BadPrefix);
            }
            let mut next: HashMap<Obligations, Score> = HashMap::new();
            for (s, c) in front {
                for cl in self.expand_set(&s, x)?.iter() {
                    let key: Obligations = cl.next.iter().copied().collect();
                    let v = c.min(cl.c);
                    let e = next.entry(key).or_insert(Score::NegInf);
                    *e = (*e).max(v);
                }
            }
            front = next;
        }
        Ok(front
            .into_iter()
            .map(|(s, c)| {
                let v = self.nodes.get(&(last, s)).map_or(Score::NegInf, |&i| self.values[i]);
                c.min(v)
            })
            .max()
            .unwrap_or(Score::NegInf))
    }

    pub fn node_count(&self) -> usize {
        self.node_list.len()
    }
}

/// Optimal value of `f` from `x0`.
pub fn brute_value(f: &Formula, ts: Arc<TransitionSystem>, x0: usize) -> Result<Score, OracleError> {
    Ok(Oracle::new(f, ts)?.value(x0))
}

/// Optimal value of `f` over continuations of the state sequence `prefix`.
pub fn brute_value_history(f: &Formula, ts: Arc<TransitionSystem>, prefix: &[usize]) -> Result<Score, OracleError> {
    Oracle::new(f, ts)?.value_history(prefix)
}

fn until_parts(f: &Formula) -> Result<(Formula, Formula), OracleError> {
    match f {
        Formula::Until(p, r) => Ok(((**p).clone(), (**r).clone())),
        Formula::Finally(r) => Ok((Formula::True, (**r).clone())),
        _ => Err(OracleError::Unsupported(format!("witness of non-Until {f}"))),
    }
}

/// Smallest witness time over value-achieving continuations of `prefix`, counted from its start.
pub fn brute_witness_history(f: &Formula, ts: Arc<TransitionSystem>, prefix: &[usize]) -> Result<usize, OracleError> {
    let (p, r) = until_parts(f)?;
    let target = brute_value_history(f, ts.clone(), prefix)?;
    let limit = 4 * ts.n * ts.n + prefix.len() + 8;
    for tau in 0..=limit {
        let timed = Formula::timed_until(p.clone(), r.clone(), tau as u32);
        if brute_value_history(&timed, ts.clone(), prefix)? >= target {
            return Ok(tau);
        }
    }
    Err(OracleError::NoWitness(limit))
}

/// Smallest witness time over value-achieving runs from `x0`.
pub fn brute_witness(f: &Formula, ts: Arc<TransitionSystem>, x0: usize) -> Result<usize, OracleError> {
    brute_witness_history(f, ts, &[x0])
}

/// Best robustness over all lassos whose prefix plus cycle has at most `max_len` steps.
/// Independent of the tableau; exponential, for cross-checks on very small inputs.
pub fn lasso_enumeration_value(f: &Formula, ts: &TransitionSystem, x0: usize, max_len: usize) -> Result<Score, OracleError> {
    use crate::robustness::eval;
    use crate::system::Trace;
    let mut best = Score::NegInf;
    let mut stack: Vec<(Vec<usize>, Vec<usize>)> = vec![(vec![x0], vec![])];
    while let Some((states, actions)) = stack.pop() {
        if actions.len() == max_len {
            continue;
        }
        let x = *states.last().unwrap();
        for a in 0..ts.m {
            let y = ts.next(x, a);
            let mut acts = actions.clone();
            acts.push(a);
            for l in 0..states.len() {
                if states[l] == y {
                    let tr = Trace::lasso(states.clone(), acts.clone(), l);
                    let v = eval(f, ts, &tr).map_err(|e| OracleError::Unsupported(e.to_string()))?;
                    best = best.max(v);
                }
            }
            let mut st = states.clone();
            st.push(y);
            stack.push((st, acts));
        }
    }
    Ok(best)
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
    fn counterexample_value_and_witness() {
        let f = parse("F one").unwrap();
        assert_eq!(brute_value(&f, counterexample(), 0).unwrap(), fin(1));
        assert_eq!(brute_witness(&f, counterexample(), 0).unwrap(), 1);
        assert_eq!(brute_witness(&f, counterexample(), 1).unwrap(), 0);
    }

    #[test]
    fn globally_of_negative() {
        let ts = Arc::new(TransitionSystem::from_fn(2, 2, |_, a| a).with_label("q", vec![fin(-1), fin(-1)]));
        assert_eq!(brute_value(&parse("G q").unwrap(), ts, 0).unwrap(), fin(-1));
    }

    #[test]
    fn history_freezes_prefix_minimum() {
        let ts = counterexample();
        let f = parse("G one").unwrap();
        assert_eq!(brute_value_history(&f, ts.clone(), &[1]).unwrap(), fin(1));
        assert_eq!(brute_value_history(&f, ts.clone(), &[1, 0, 1]).unwrap(), fin(0));
        let o = Oracle::new(&f, ts).unwrap();
        assert_eq!(o.value(0), fin(0));
    }

    #[test]
    fn size_guard() {
        let ts = Arc::new(TransitionSystem::from_fn(7, 1, |x, _| x).with_label("p", vec![fin(1); 7]));
        assert!(matches!(brute_value(&Formula::atom("p"), ts, 0), Err(OracleError::TooLarge { .. })));
    }

    #[test]
    fn deferral_forever_is_worthless() {
        // The only way to reach `r` is never taken by a lasso that stays at state 0.
        let ts = Arc::new(
            TransitionSystem::from_fn(2, 1, |x, _| x).with_label("r", vec![fin(-1), fin(1)]),
        );
        assert_eq!(brute_value(&parse("F r").unwrap(), ts.clone(), 0).unwrap(), fin(-1));
        assert_eq!(brute_value(&parse("G F r").unwrap(), ts, 1).unwrap(), fin(1));
    }
}

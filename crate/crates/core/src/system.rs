//! Finite deterministic transition systems, gridworlds and products.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::Formula;
use crate::score::{fin, Score};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SystemError {
    #[error("state {0} out of range")]
    StateOutOfRange(usize),
    #[error("action {0} out of range")]
    ActionOutOfRange(usize),
    #[error("malformed grid: {0}")]
    Grid(String),
    #[error("label {0} defined twice")]
    LabelCollision(String),
    #[error("unbound atom {0}")]
    UnboundAtom(String),
    #[error("invalid system: {0}")]
    Invalid(String),
}

/// Explicit deterministic system: `succ[x * m + a]` is the successor of `x` under `a`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionSystem {
    pub n: usize,
    pub m: usize,
    pub succ: Vec<usize>,
    pub labels: BTreeMap<String, Vec<Score>>,
}

impl TransitionSystem {
    /// Builds a system from a successor function; every `f(x, a)` must be `< n`.
    pub fn from_fn(n: usize, m: usize, f: impl Fn(usize, usize) -> usize) -> Self {
        let succ = (0..n).flat_map(|x| (0..m).map(move |a| (x, a))).map(|(x, a)| f(x, a)).collect();
        TransitionSystem { n, m, succ, labels: BTreeMap::new() }
    }

    pub fn with_label(mut self, name: &str, scores: Vec<Score>) -> Self {
        self.labels.insert(name.to_string(), scores);
        self
    }

    /// Successor without bounds checks beyond the slice index.
    #[inline]
    pub fn next(&self, x: usize, a: usize) -> usize {
        self.succ[x * self.m + a]
    }

    pub fn step(&self, x: usize, a: usize) -> Result<usize, SystemError> {
        if x >= self.n {
            return Err(SystemError::StateOutOfRange(x));
        }
        if a >= self.m {
            return Err(SystemError::ActionOutOfRange(a));
        }
        Ok(self.next(x, a))
    }

    /// Lists every structural invariant violation; empty when valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.m == 0 {
            out.push("no actions".to_string());
        }
        if self.succ.len() != self.n * self.m {
            out.push(format!("successor table has {} entries, expected {}", self.succ.len(), self.n * self.m));
        }
        for (i, &y) in self.succ.iter().enumerate() {
            if y >= self.n {
                out.push(format!("succ({}, {}) = {} out of range", i / self.m.max(1), i % self.m.max(1), y));
            }
        }
        for (name, v) in &self.labels {
            if v.len() != self.n {
                out.push(format!("label {name} has {} scores, expected {}", v.len(), self.n));
            }
            if v.iter().any(|s| !s.is_finite()) {
                out.push(format!("label {name} has a non-finite score"));
            }
        }
        out
    }

    /// As [`validate`](Self::validate), plus one entry per atom of `f` missing from the labels.
    pub fn validate_for(&self, f: &Formula) -> Vec<String> {
        let mut out = self.validate();
        for a in f.atoms() {
            if !self.labels.contains_key(&a) {
                out.push(format!("atom {a} is not a label of the system"));
            }
        }
        out
    }

    /// Pointwise scores of a propositional formula.
    pub fn prop_values(&self, p: &Formula) -> Result<Vec<Score>, SystemError> {
        Ok(match p {
            Formula::True => vec![Score::PosInf; self.n],
            Formula::Atom(a) => self.labels.get(a).cloned().ok_or_else(|| SystemError::UnboundAtom(a.clone()))?,
            Formula::Not(c) => self.prop_values(c)?.into_iter().map(|v| -v).collect(),
            Formula::And(xs) => {
                let mut acc = vec![Score::PosInf; self.n];
                for x in xs {
                    for (a, v) in acc.iter_mut().zip(self.prop_values(x)?) {
                        *a = (*a).min(v);
                    }
                }
                acc
            }
            Formula::Or(xs) => {
                let mut acc = vec![Score::NegInf; self.n];
                for x in xs {
                    for (a, v) in acc.iter_mut().zip(self.prop_values(x)?) {
                        *a = (*a).max(v);
                    }
                }
                acc
            }
            _ => return Err(SystemError::Invalid(format!("{p} is not propositional"))),
        })
    }

    /// Checks that `states`/`actions` follow the dynamics.
    pub fn check_trace(&self, tr: &Trace) -> Result<(), SystemError> {
        if tr.states.is_empty() {
            return Err(SystemError::Invalid("empty trace".into()));
        }
        let expected = if tr.loop_start.is_some() { tr.states.len() } else { tr.states.len() - 1 };
        if tr.actions.len() != expected {
            return Err(SystemError::Invalid("action count does not match states".into()));
        }
        for (k, &a) in tr.actions.iter().enumerate() {
            let to = match tr.states.get(k + 1) {
                Some(&y) => y,
                None => tr.states[tr.loop_start.unwrap()],
            };
            if self.step(tr.states[k], a)? != to {
                return Err(SystemError::Invalid(format!("step {k} inconsistent with dynamics")));
            }
        }
        if let Some(l) = tr.loop_start {
            if l >= tr.states.len() {
                return Err(SystemError::Invalid("loop start beyond prefix".into()));
            }
        }
        Ok(())
    }
}

/// A state sequence, optionally closed into a lasso: after the last state the
/// trace continues at `states[loop_start]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub loop_start: Option<usize>,
}

impl Trace {
    pub fn lasso(states: Vec<usize>, actions: Vec<usize>, loop_start: usize) -> Self {
        Trace { states, actions, loop_start: Some(loop_start) }
    }

    /// A lasso without recorded actions, for pure evaluation.
    pub fn states_lasso(states: Vec<usize>, loop_start: usize) -> Self {
        Trace { states, actions: Vec::new(), loop_start: Some(loop_start) }
    }

    /// The `i`-th state of the infinite unrolling.
    pub fn state_at(&self, i: usize) -> usize {
        let len = self.states.len();
        match self.loop_start {
            Some(l) if i >= len => self.states[l + (i - l) % (len - l)],
            _ => self.states[i.min(len - 1)],
        }
    }
}

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const UP: usize = 2;
pub const DOWN: usize = 3;
pub const STAY: usize = 4;
pub const ACTION_NAMES: [&str; 5] = ["left", "right", "up", "down", "stay"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    /// `[col, row]`
    pub start: [usize; 2],
}

/// JSON grid description. Each row string holds one character per cell.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: Vec<String>,
    pub legend: BTreeMap<String, String>,
    pub walls_char: String,
    pub agents: Vec<AgentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safe_distance: Option<usize>,
    /// Regions that make `r_safe` fail.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hazards: Vec<String>,
}

impl GridSpec {
    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, |r| r.chars().count())
    }

    pub fn height(&self) -> usize {
        self.rows.len()
    }

    fn cell(&self, col: usize, row: usize) -> char {
        self.rows[row].chars().nth(col).unwrap()
    }

    fn wall_char(&self) -> Result<char, SystemError> {
        let mut it = self.walls_char.chars();
        match (it.next(), it.next()) {
            (Some(c), None) => Ok(c),
            _ => Err(SystemError::Grid("walls_char must be a single character".into())),
        }
    }

    pub fn is_wall(&self, col: usize, row: usize) -> bool {
        self.wall_char().map(|w| self.cell(col, row) == w).unwrap_or(false)
    }

    pub fn check(&self) -> Result<(), SystemError> {
        let w = self.width();
        if w == 0 || self.rows.iter().any(|r| r.chars().count() != w) {
            return Err(SystemError::Grid("rows must be nonempty and of equal length".into()));
        }
        self.wall_char()?;
        for k in self.legend.keys() {
            if k.chars().count() != 1 {
                return Err(SystemError::Grid(format!("legend key {k:?} is not one character")));
            }
        }
        if self.agents.is_empty() || self.agents.len() > 2 {
            return Err(SystemError::Grid("one or two agents required".into()));
        }
        for a in &self.agents {
            let [c, r] = a.start;
            if c >= w || r >= self.height() {
                return Err(SystemError::Grid(format!("start {:?} outside the grid", a.start)));
            }
            if self.is_wall(c, r) {
                return Err(SystemError::Grid(format!("start {:?} is a wall", a.start)));
            }
        }
        if self.agents.len() == 2 && self.agents[0].start == self.agents[1].start {
            return Err(SystemError::Grid("agents start on the same cell".into()));
        }
        for h in &self.hazards {
            if !self.legend.values().any(|v| v == h) {
                return Err(SystemError::Grid(format!("hazard {h} is not a legend region")));
            }
        }
        Ok(())
    }

    /// Cell index of each agent's start.
    pub fn start_cells(&self) -> Vec<usize> {
        self.agents.iter().map(|a| a.start[1] * self.width() + a.start[0]).collect()
    }

    /// Joint start state in the system returned by [`build_grid`].
    pub fn start_state(&self) -> usize {
        let cells = self.start_cells();
        let n = self.width() * self.height();
        cells.iter().fold(0, |acc, c| acc * n + c)
    }

    /// `(col, row)` of each agent for a joint state.
    pub fn positions(&self, state: usize) -> Vec<[usize; 2]> {
        let n = self.width() * self.height();
        let cells = if self.agents.len() == 2 { vec![state / n, state % n] } else { vec![state] };
        cells.into_iter().map(|c| [c % self.width(), c / self.width()]).collect()
    }

    /// Canonical pretty JSON with trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }
}

/// Single-agent grid system with region atoms, `hit_wall` and `r_safe`.
fn single_grid(spec: &GridSpec) -> Result<TransitionSystem, SystemError> {
    let (w, h) = (spec.width(), spec.height());
    let n = w * h;
    let blocked = |c: usize, r: usize| spec.is_wall(c, r);
    let ts = TransitionSystem::from_fn(n, 5, |x, a| {
        let (c, r) = (x % w, x / w);
        let (nc, nr) = match a {
            LEFT if c > 0 => (c - 1, r),
            RIGHT if c + 1 < w => (c + 1, r),
            UP if r > 0 => (c, r - 1),
            DOWN if r + 1 < h => (c, r + 1),
            _ => (c, r),
        };
        if blocked(nc, nr) {
            x
        } else {
            nr * w + nc
        }
    });
    let mut labels: BTreeMap<String, Vec<Score>> = BTreeMap::new();
    for name in spec.legend.values() {
        labels.entry(name.clone()).or_insert_with(|| vec![fin(-1); n]);
    }
    for (ch, name) in &spec.legend {
        let ch = ch.chars().next().unwrap();
        let v = labels.get_mut(name).unwrap();
        for x in 0..n {
            if spec.cell(x % w, x / w) == ch {
                v[x] = fin(1);
            }
        }
    }
    let wall: Vec<Score> = (0..n).map(|x| if blocked(x % w, x / w) { fin(-1) } else { fin(1) }).collect();
    let mut safe = wall.clone();
    for hz in &spec.hazards {
        for (s, v) in safe.iter_mut().zip(&labels[hz]) {
            if *v == fin(1) {
                *s = fin(-1);
            }
        }
    }
    for (name, v) in [("hit_wall", wall), ("r_safe", safe)] {
        if labels.insert(name.to_string(), v).is_some() {
            return Err(SystemError::LabelCollision(name.to_string()));
        }
    }
    Ok(TransitionSystem { labels, ..ts })
}

/// Builds the grid system. With two agents, labels are suffixed `_1`/`_2` and the
/// joint `r_safe` also requires L1 distance `safe_distance` when set.
pub fn build_grid(spec: &GridSpec) -> Result<TransitionSystem, SystemError> {
    spec.check()?;
    let single = single_grid(spec)?;
    if spec.agents.len() == 1 {
        return Ok(single);
    }
    let w = spec.width();
    let safe = single.labels["r_safe"].clone();
    let dist = spec.safe_distance;
    let n = single.n;
    let joint = move |x: usize| -> Score {
        let (c1, c2) = (x / n, x % n);
        let l1 = (c1 % w).abs_diff(c2 % w) + (c1 / w).abs_diff(c2 / w);
        let ok = safe[c1] == fin(1) && safe[c2] == fin(1) && dist.map_or(c1 != c2, |d| l1 == d);
        fin(if ok { 1 } else { -1 })
    };
    let mut a = single.clone();
    let mut b = single;
    a.labels.remove("r_safe");
    b.labels.remove("r_safe");
    let mut joint_labels: HashMap<String, Box<dyn Fn(usize) -> Score>> = HashMap::new();
    joint_labels.insert("r_safe".to_string(), Box::new(joint));
    product(&a, &b, &joint_labels)
}

/// Synchronous product; factor labels get suffixes `_1` and `_2`.
/// Joint state `x1 * n_b + x2`, joint action `a1 * m_b + a2`.
pub fn product(
    a: &TransitionSystem,
    b: &TransitionSystem,
    joint_labels: &HashMap<String, Box<dyn Fn(usize) -> Score>>,
) -> Result<TransitionSystem, SystemError> {
    let (nb, mb) = (b.n, b.m);
    let mut ts = TransitionSystem::from_fn(a.n * nb, a.m * mb, |x, u| {
        a.next(x / nb, u / mb) * nb + b.next(x % nb, u % mb)
    });
    let n = ts.n;
    let mut put = |name: String, v: Vec<Score>| {
        if ts.labels.insert(name.clone(), v).is_some() {
            Err(SystemError::LabelCollision(name))
        } else {
            Ok(())
        }
    };
    for (name, v) in &a.labels {
        put(format!("{name}_1"), (0..n).map(|x| v[x / nb]).collect())?;
    }
    for (name, v) in &b.labels {
        put(format!("{name}_2"), (0..n).map(|x| v[x % nb]).collect())?;
    }
    let mut names: Vec<_> = joint_labels.keys().collect();
    names.sort();
    for name in names {
        put(name.clone(), (0..n).map(|x| joint_labels[name](x)).collect())?;
    }
    Ok(ts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[&str], agents: &[[usize; 2]]) -> GridSpec {
        GridSpec {
            rows: rows.iter().map(|s| s.to_string()).collect(),
            legend: BTreeMap::from([("g".to_string(), "r_goal".to_string())]),
            walls_char: "#".into(),
            agents: agents.iter().map(|&start| AgentSpec { start }).collect(),
            safe_distance: if agents.len() == 2 { Some(2) } else { None },
            hazards: vec![],
        }
    }

    #[test]
    fn one_by_two() {
        let ts = build_grid(&grid(&[".."], &[[0, 0]])).unwrap();
        assert_eq!((ts.n, ts.m), (2, 5));
        assert_eq!(ts.step(0, RIGHT).unwrap(), 1);
        assert_eq!(ts.step(0, LEFT).unwrap(), 0);
        assert_eq!(ts.step(1, STAY).unwrap(), 1);
        assert!(ts.validate().is_empty());
    }

    #[test]
    fn walls_and_regions() {
        let ts = build_grid(&grid(&["..#..", ".#...", "....g", ".....", "...#."], &[[0, 0]])).unwrap();
        assert_eq!(ts.n, 25);
        let wall = &ts.labels["hit_wall"];
        assert_eq!(wall.iter().filter(|&&v| v == fin(-1)).count(), 3);
        assert_eq!(ts.step(1, RIGHT).unwrap(), 1);
        assert_eq!(ts.labels["r_goal"][14], fin(1));
        for v in ts.labels.values() {
            assert!(v.iter().all(|&s| s == fin(1) || s == fin(-1)));
        }
    }

    #[test]
    fn product_sizes_and_safety() {
        let g = grid(&["...."], &[[0, 0], [2, 0]]);
        let ts = build_grid(&g).unwrap();
        assert_eq!((ts.n, ts.m), (16, 25));
        assert_eq!(ts.labels["r_safe"][g.start_state()], fin(1));
        assert_eq!(ts.labels["r_safe"][5], fin(-1));
        assert!(ts.labels.contains_key("r_goal_1") && ts.labels.contains_key("r_goal_2"));
        // a1 = right, a2 = left
        assert_eq!(ts.next(2, RIGHT * 5 + LEFT), 4 + 1);
        let small = build_grid(&grid(&[".."], &[[0, 0], [1, 0]])).unwrap();
        assert_eq!((small.n, small.m), (4, 25));
    }

    #[test]
    fn product_label_collision() {
        let a = TransitionSystem::from_fn(1, 1, |_, _| 0).with_label("p", vec![fin(1)]);
        let mut joint: HashMap<String, Box<dyn Fn(usize) -> Score>> = HashMap::new();
        joint.insert("p_1".into(), Box::new(|_| fin(1)));
        assert_eq!(product(&a, &a, &joint), Err(SystemError::LabelCollision("p_1".into())));
    }

    #[test]
    fn validate_reports_violations() {
        let mut ts = TransitionSystem::from_fn(2, 1, |x, _| x);
        ts.succ[1] = 7;
        assert_eq!(ts.validate().len(), 1);
        let ok = TransitionSystem::from_fn(2, 1, |x, _| x);
        assert_eq!(ok.validate_for(&Formula::atom("q")).len(), 1);
    }

    #[test]
    fn grid_json_round_trip() {
        let g = grid(&["..g", "#.."], &[[0, 0]]);
        let text = g.to_json();
        let back: GridSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json(), text);
    }
}

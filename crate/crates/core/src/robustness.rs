//! Exact robustness of formulas on lasso traces.
//!
//! A lasso with states `s_0..s_{M-1}` and loop start `L` continues at `s_L` after
//! `s_{M-1}`, so every suffix is one of `M` positions. Each subformula is evaluated
//! to one score per position; temporal operators walk the position graph.

use thiserror::Error;

use crate::formula::Formula;
use crate::score::Score;
use crate::system::{SystemError, TransitionSystem, Trace};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("temporal operator {0} needs a lasso trace")]
    NeedsLasso(String),
    #[error("witness_time expects an Until formula, got {0}")]
    NotUntil(String),
    #[error("empty trace")]
    Empty,
}

struct Positions {
    len: usize,
    loop_start: Option<usize>,
}

impl Positions {
    fn next(&self, i: usize) -> Option<usize> {
        if i + 1 < self.len {
            Some(i + 1)
        } else {
            self.loop_start
        }
    }

    /// First position of the part reachable from `i` that repeats forever.
    fn reach_from(&self, i: usize) -> usize {
        i.min(self.loop_start.unwrap())
    }
}

fn eval_all(f: &Formula, ts: &TransitionSystem, tr: &Trace, pos: &Positions) -> Result<Vec<Score>, EvalError> {
    let m = pos.len;
    let needs_lasso = || {
        if pos.loop_start.is_none() {
            Err(EvalError::NeedsLasso(f.to_string()))
        } else {
            Ok(())
        }
    };
    Ok(match f {
        Formula::True => vec![Score::PosInf; m],
        Formula::Atom(a) => {
            let v = ts.labels.get(a).ok_or_else(|| SystemError::UnboundAtom(a.clone()))?;
            tr.states.iter().map(|&x| v[x]).collect()
        }
        Formula::Not(c) => eval_all(c, ts, tr, pos)?.into_iter().map(|v| -v).collect(),
        Formula::And(xs) | Formula::Or(xs) => {
            let is_and = matches!(f, Formula::And(_));
            let mut acc = vec![if is_and { Score::PosInf } else { Score::NegInf }; m];
            for x in xs {
                for (a, v) in acc.iter_mut().zip(eval_all(x, ts, tr, pos)?) {
                    *a = if is_and { (*a).min(v) } else { (*a).max(v) };
                }
            }
            acc
        }
        Formula::Next(c) => {
            needs_lasso()?;
            let v = eval_all(c, ts, tr, pos)?;
            (0..m).map(|i| v[pos.next(i).unwrap()]).collect()
        }
        Formula::Globally(c) | Formula::Finally(c) => {
            needs_lasso()?;
            let v = eval_all(c, ts, tr, pos)?;
            let g = matches!(f, Formula::Globally(_));
            (0..m)
                .map(|i| {
                    let tail = v[pos.reach_from(i)..].iter().copied();
                    if g {
                        tail.min().unwrap()
                    } else {
                        tail.max().unwrap()
                    }
                })
                .collect()
        }
        Formula::Until(l, r) | Formula::TimedUntil(l, r, _) => {
            needs_lasso()?;
            let (q, w) = (eval_all(l, ts, tr, pos)?, eval_all(r, ts, tr, pos)?);
            let steps = match f {
                Formula::TimedUntil(_, _, n) => (*n as usize).min(m) + 1,
                _ => m + 1,
            };
            (0..m).map(|i| until_walk(&q, &w, pos, i, steps).0).collect()
        }
    })
}

/// Best `min(r(t), min_{k<t} q(k))` over the first `steps` witness candidates from `i`,
/// with the earliest offset attaining it.
fn until_walk(q: &[Score], r: &[Score], pos: &Positions, i: usize, steps: usize) -> (Score, usize) {
    let mut best = (Score::NegInf, 0);
    let mut run = Score::PosInf;
    let mut j = i;
    for t in 0..steps {
        let cand = run.min(r[j]);
        if cand > best.0 {
            best = (cand, t);
        }
        run = run.min(q[j]);
        j = pos.next(j).unwrap();
    }
    best
}

fn positions(tr: &Trace) -> Result<Positions, EvalError> {
    if tr.states.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(Positions { len: tr.states.len(), loop_start: tr.loop_start })
}

/// Robustness of `f` on `tr` at position 0.
pub fn eval(f: &Formula, ts: &TransitionSystem, tr: &Trace) -> Result<Score, EvalError> {
    let pos = positions(tr)?;
    Ok(eval_all(f, ts, tr, &pos)?[0])
}

/// Robustness at every position of the lasso.
pub fn eval_positions(f: &Formula, ts: &TransitionSystem, tr: &Trace) -> Result<Vec<Score>, EvalError> {
    let pos = positions(tr)?;
    eval_all(f, ts, tr, &pos)
}

/// `max_{t<=n} min(r_t, min_{k<t} q_k)`; a negative bound gives `-inf`.
pub fn eval_timed_until(q: &Formula, r: &Formula, n: i64, ts: &TransitionSystem, tr: &Trace) -> Result<Score, EvalError> {
    if n < 0 {
        return Ok(Score::NegInf);
    }
    let n = u32::try_from(n).unwrap_or(u32::MAX);
    eval(&Formula::timed_until(q.clone(), r.clone(), n), ts, tr)
}

/// Smallest witness time of `q U r` (or `F r`) on a lasso.
pub fn witness_time(f: &Formula, ts: &TransitionSystem, tr: &Trace) -> Result<usize, EvalError> {
    let (l, r) = match f {
        Formula::Until(l, r) | Formula::TimedUntil(l, r, _) => ((**l).clone(), (**r).clone()),
        Formula::Finally(r) => (Formula::True, (**r).clone()),
        _ => return Err(EvalError::NotUntil(f.to_string())),
    };
    let pos = positions(tr)?;
    if pos.loop_start.is_none() {
        return Err(EvalError::NeedsLasso(f.to_string()));
    }
    let q = eval_all(&l, ts, tr, &pos)?;
    let w = eval_all(&r, ts, tr, &pos)?;
    let steps = match f {
        Formula::TimedUntil(_, _, n) => (*n as usize).min(pos.len) + 1,
        _ => pos.len + 1,
    };
    Ok(until_walk(&q, &w, &pos, 0, steps).1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse;
    use crate::score::fin;

    fn sys() -> TransitionSystem {
        TransitionSystem::from_fn(3, 1, |x, _| (x + 1).min(2))
            .with_label("p", vec![fin(1); 3])
            .with_label("q", vec![fin(1), fin(1), fin(-1)])
            .with_label("r", vec![fin(-1), fin(-1), fin(1)])
    }

    #[test]
    fn globally_on_self_loop() {
        let tr = Trace::states_lasso(vec![0], 0);
        assert_eq!(eval(&parse("G p").unwrap(), &sys(), &tr).unwrap(), fin(1));
    }

    #[test]
    fn until_with_witness_two() {
        let tr = Trace::states_lasso(vec![0, 1, 2], 2);
        let f = parse("q U r").unwrap();
        assert_eq!(eval(&f, &sys(), &tr).unwrap(), fin(1));
        assert_eq!(witness_time(&f, &sys(), &tr).unwrap(), 2);
    }

    #[test]
    fn timed_bounds() {
        let ts = sys();
        let tr = Trace::states_lasso(vec![0, 1, 2], 2);
        let (q, r) = (Formula::atom("q"), Formula::atom("r"));
        assert_eq!(eval_timed_until(&q, &r, -1, &ts, &tr).unwrap(), Score::NegInf);
        assert_eq!(eval_timed_until(&q, &r, 0, &ts, &tr).unwrap(), fin(-1));
        assert_eq!(eval_timed_until(&q, &r, 1, &ts, &tr).unwrap(), fin(-1));
        assert_eq!(eval_timed_until(&q, &r, 2, &ts, &tr).unwrap(), fin(1));
    }

    #[test]
    fn finite_trace_rejects_temporal() {
        let tr = Trace { states: vec![0], actions: vec![], loop_start: None };
        assert_eq!(eval(&parse("p & !q").unwrap(), &sys(), &tr).unwrap(), fin(-1));
        assert!(matches!(eval(&parse("F p").unwrap(), &sys(), &tr), Err(EvalError::NeedsLasso(_))));
        assert!(matches!(witness_time(&parse("G p").unwrap(), &sys(), &tr), Err(EvalError::NotUntil(_))));
    }
}

//! Q-based monitor and least-restrictive filter around arbitrary nominal controllers.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use serde::Serialize;

use crate::formula::Formula;
use crate::policy::{ExecState, PolicyError, PolicyTree, StepMode};
use crate::score::Score;
use crate::system::Trace;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FilterVerdict {
    pub applied: usize,
    pub intervened: bool,
    pub q_nominal: Score,
    pub q_applied: Score,
}

/// History Q value of `a` at the history summarized by `es`.
pub fn monitor(pt: &PolicyTree, es: &ExecState, x: usize, a: usize) -> Score {
    pt.q(es, x, a)
}

/// Passes `nominal` through when its Q value is non-negative and substitutes the
/// fallback action otherwise; the state is advanced along the applied action.
pub fn filter_action(pt: &PolicyTree, es: &ExecState, x: usize, nominal: usize) -> (FilterVerdict, ExecState) {
    let q_nominal = monitor(pt, es, x, nominal);
    let fallback = pt.decide(es, x);
    let (applied, q_applied, intervened) = if q_nominal >= Score::Fin(0) {
        (nominal, q_nominal, false)
    } else {
        (fallback, monitor(pt, es, x, fallback), true)
    };
    let mode = if applied == fallback { StepMode::On } else { StepMode::Off };
    let next = pt.advance(es, x, applied, mode);
    (FilterVerdict { applied, intervened, q_nominal, q_applied }, next)
}

/// True when every Until in `f` carries a time bound.
pub fn guarantee_applicable(f: &Formula) -> bool {
    !f.has_unbounded_until()
}

/// Source of nominal actions.
pub trait Nominal {
    fn action(&mut self, x: usize, es: &ExecState) -> usize;

    /// Internal state relevant to future actions, for lasso detection; `None` when the
    /// source cannot be summarized.
    fn fingerprint(&self) -> Option<u64>;

    /// Called with the action actually applied at `x`.
    fn applied(&mut self, _x: usize, _a: usize) {}
}

/// Pseudo-random nominal whose choice depends only on the seed, the state and the
/// execution state, so runs close into lassos.
#[derive(Clone, Debug)]
pub struct HashNominal {
    pub seed: u64,
    pub m: usize,
}

impl Nominal for HashNominal {
    fn action(&mut self, x: usize, es: &ExecState) -> usize {
        let mut h = DefaultHasher::new();
        (self.seed, x, es).hash(&mut h);
        (h.finish() % self.m as u64) as usize
    }

    fn fingerprint(&self) -> Option<u64> {
        Some(0)
    }
}

/// Another formula's optimal policy, tracking its own history.
#[derive(Clone, Debug)]
pub struct PolicyNominal {
    pub policy: PolicyTree,
    pub es: ExecState,
}

impl PolicyNominal {
    pub fn new(policy: PolicyTree, x0: usize) -> Self {
        let es = policy.init(x0);
        PolicyNominal { policy, es }
    }
}

impl Nominal for PolicyNominal {
    fn action(&mut self, x: usize, _: &ExecState) -> usize {
        self.policy.decide(&self.es, x)
    }

    fn fingerprint(&self) -> Option<u64> {
        let mut h = DefaultHasher::new();
        self.es.hash(&mut h);
        Some(h.finish())
    }

    fn applied(&mut self, x: usize, a: usize) {
        self.es = self.policy.observe(&self.es, x, a);
    }
}

/// Fixed action list, then a constant action.
#[derive(Clone, Debug)]
pub struct ScriptNominal {
    pub actions: Vec<usize>,
    pub then: usize,
    pos: usize,
}

impl ScriptNominal {
    pub fn new(actions: Vec<usize>, then: usize) -> Self {
        ScriptNominal { actions, then, pos: 0 }
    }
}

impl Nominal for ScriptNominal {
    fn action(&mut self, _: usize, _: &ExecState) -> usize {
        let a = self.actions.get(self.pos).copied().unwrap_or(self.then);
        self.pos += 1;
        a
    }

    fn fingerprint(&self) -> Option<u64> {
        (self.pos >= self.actions.len()).then_some(u64::MAX)
    }
}

/// A filtered run.
#[derive(Clone, Debug, Serialize)]
pub struct FilteredRun {
    pub trace: Trace,
    pub verdicts: Vec<FilterVerdict>,
    /// Step at which control passed to the fallback policy, if it did.
    pub handover_at: Option<usize>,
}

/// Runs `nominal` through the filter from `x0`. With `handover = Some(h)`, the fallback
/// policy takes over after `h` steps. The run stops once a `(state, execution state,
/// nominal)` configuration repeats, or after `horizon` steps without a lasso.
pub fn filtered_rollout(
    pt: &PolicyTree,
    nominal: &mut dyn Nominal,
    x0: usize,
    horizon: usize,
    handover: Option<usize>,
) -> Result<FilteredRun, PolicyError> {
    filtered_rollout_with(pt, nominal, x0, horizon, handover, |_, _| {})
}

/// As [`filtered_rollout`], calling `after` with each verdict and the new state.
pub fn filtered_rollout_with(
    pt: &PolicyTree,
    nominal: &mut dyn Nominal,
    x0: usize,
    horizon: usize,
    handover: Option<usize>,
    mut after: impl FnMut(&FilterVerdict, usize),
) -> Result<FilteredRun, PolicyError> {
    let ts = pt.ts();
    if x0 >= ts.n {
        return Err(PolicyError::State(x0));
    }
    let mut seen: HashMap<(usize, ExecState, Option<u64>, bool), usize> = HashMap::new();
    let (mut es, mut x) = (pt.init(x0), x0);
    let (mut states, mut actions, mut verdicts) = (Vec::new(), Vec::new(), Vec::new());
    for t in 0..=horizon {
        let handed = handover.is_some_and(|h| t >= h);
        let fp = if handed { Some(1) } else { nominal.fingerprint() };
        if fp.is_some() {
            let key = (x, es.clone(), fp, handed);
            if let Some(&l) = seen.get(&key) {
                let trace = Trace::lasso(states, actions, l);
                return Ok(FilteredRun { trace, verdicts, handover_at: handover.filter(|&h| h <= l) });
            }
            seen.insert(key, t);
        }
        if t == horizon {
            break;
        }
        let (verdict, next) = if handed {
            let (a, next) = pt.act(&es, x);
            let q = monitor(pt, &es, x, a);
            (FilterVerdict { applied: a, intervened: false, q_nominal: q, q_applied: q }, next)
        } else {
            let a = nominal.action(x, &es);
            filter_action(pt, &es, x, a)
        };
        if !handed {
            nominal.applied(x, verdict.applied);
        }
        states.push(x);
        actions.push(verdict.applied);
        x = ts.next(x, verdict.applied);
        es = next;
        after(&verdict, x);
        verdicts.push(verdict);
    }
    Err(PolicyError::Horizon(horizon))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::formula::parse;
    use crate::robustness::eval;
    use crate::score::fin;
    use crate::system::TransitionSystem;

    /// A line 0-1-2-3 where state 3 is unsafe; action 0 moves left, 1 moves right.
    fn line() -> Arc<TransitionSystem> {
        Arc::new(
            TransitionSystem::from_fn(4, 2, |x, a| if a == 0 { x.saturating_sub(1) } else { (x + 1).min(3) })
                .with_label("safe", vec![fin(1), fin(1), fin(1), fin(-1)])
                .with_label("goal", vec![fin(-1), fin(-1), fin(1), fin(-1)]),
        )
    }

    #[test]
    fn unsafe_step_is_blocked() {
        let pt = PolicyTree::build(line(), &parse("G safe").unwrap(), Default::default()).unwrap();
        let es = pt.init(2);
        let (v, _) = filter_action(&pt, &es, 2, 1);
        assert!(v.intervened);
        assert_eq!(v.q_nominal, fin(-1));
        assert_eq!(v.applied, 0);
        assert_eq!(v.q_applied, fin(1));
        let (v, _) = filter_action(&pt, &es, 2, 0);
        assert!(!v.intervened);
    }

    #[test]
    fn always_right_nominal_is_kept_safe_and_reaches_goal() {
        let f = parse("F[0,5] goal & G safe").unwrap();
        assert!(guarantee_applicable(&f));
        let g = crate::formula::rewrite_conjunction(&f).unwrap();
        let pt = PolicyTree::build(line(), &g, Default::default()).unwrap();
        let mut nominal = ScriptNominal::new(vec![], 1);
        let run = filtered_rollout(&pt, &mut nominal, 0, 100, None).unwrap();
        assert!(run.verdicts.iter().all(|v| v.intervened == (v.q_nominal < fin(0))));
        assert!(eval(&f, pt.ts(), &run.trace).unwrap() >= fin(0));
    }

    #[test]
    fn applicability() {
        assert!(guarantee_applicable(&parse("G q").unwrap()));
        assert!(!guarantee_applicable(&parse("G(F wd)").unwrap()));
    }
}

//! Seeded random cross-checks of the value tables and policies against the oracle.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Oracle, OracleError};
use crate::formula::{derive, Formula};
use crate::policy::{PolicyTree, Variant};
use crate::robustness::eval;
use crate::score::{fin, Score};
use crate::system::{TransitionSystem, Trace};
use crate::value::value_compose;

const ATOMS: [&str; 3] = ["p0", "p1", "p2"];
const ROLLOUT_HORIZON: usize = 20_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub instances: usize,
    pub seed: u64,
    pub max_states: usize,
    pub max_actions: usize,
    pub score_range: [i64; 2],
    pub max_formula_depth: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { instances: 100, seed: 0, max_states: 5, max_actions: 3, score_range: [-2, 2], max_formula_depth: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Discrepancy {
    pub instance: usize,
    /// Seed that regenerates this instance alone via [`instance`].
    pub instance_seed: u64,
    pub kind: String,
    pub formula: String,
    pub system: TransitionSystem,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Report {
    pub instances: usize,
    pub value_checks: usize,
    pub history_checks: usize,
    pub discrepancies: Vec<Discrepancy>,
}

impl Report {
    pub fn is_clean(&self) -> bool {
        self.discrepancies.is_empty()
    }
}

/// Random system with atoms `p0..p2`.
pub fn random_system(rng: &mut impl Rng, cfg: &SuiteConfig) -> TransitionSystem {
    let n = rng.gen_range(1..=cfg.max_states.max(1));
    let m = rng.gen_range(1..=cfg.max_actions.max(1));
    let succ: Vec<usize> = (0..n * m).map(|_| rng.gen_range(0..n)).collect();
    let mut ts = TransitionSystem::from_fn(n, m, |x, a| succ[x * m + a]);
    let [lo, hi] = cfg.score_range;
    for a in ATOMS {
        ts = ts.with_label(a, (0..n).map(|_| fin(rng.gen_range(lo..=hi))).collect());
    }
    ts
}

fn random_atom(rng: &mut impl Rng) -> Formula {
    Formula::atom(ATOMS[rng.gen_range(0..ATOMS.len())])
}

fn random_prop(rng: &mut impl Rng, depth: usize) -> Formula {
    if depth == 0 || rng.gen_bool(0.5) {
        return random_atom(rng);
    }
    match rng.gen_range(0..3) {
        0 => Formula::not(random_atom(rng)),
        1 => Formula::And(vec![random_atom(rng), random_atom(rng)]),
        _ => Formula::Or(vec![random_atom(rng), random_atom(rng)]),
    }
}

fn random_s(rng: &mut impl Rng, depth: usize) -> Formula {
    if depth == 0 {
        return random_atom(rng);
    }
    let d = depth - 1;
    match rng.gen_range(0..9) {
        0 => random_prop(rng, depth.min(1)),
        1 => Formula::until(random_prop(rng, d), random_s(rng, d)),
        2 => Formula::timed_until(random_prop(rng, d), random_s(rng, d), rng.gen_range(0..4)),
        3 => Formula::finally(random_s(rng, d)),
        4 => Formula::next(random_s(rng, d)),
        5 => Formula::globally(random_prop(rng, d)),
        6 if depth >= 2 => {
            let k = if depth >= 3 { rng.gen_range(1..=2) } else { 1 };
            let body = (0..k).map(|_| {
                let p = if rng.gen_bool(0.4) { Formula::True } else { random_atom(rng) };
                Formula::until(p, random_atom(rng))
            });
            Formula::globally(Formula::and(body.collect()))
        }
        7 => Formula::Or(vec![random_s(rng, d), random_s(rng, d)]),
        _ => Formula::And(vec![random_prop(rng, d), random_s(rng, d)]),
    }
}

/// Random formula in the fragment with nesting depth at most `max_depth`.
pub fn random_fragment_formula(rng: &mut impl Rng, max_depth: usize) -> Formula {
    loop {
        let depth = rng.gen_range(max_depth.min(1)..=max_depth);
        let f = random_s(rng, depth);
        if derive(&f).is_ok() {
            return f;
        }
    }
}

/// Regenerates one instance from its seed.
pub fn instance(instance_seed: u64, cfg: &SuiteConfig) -> (TransitionSystem, Formula) {
    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed);
    let ts = random_system(&mut rng, cfg);
    let f = random_fragment_formula(&mut rng, cfg.max_formula_depth);
    (ts, f)
}

fn instance_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64)
}

/// All action sequences of length at most `len`.
fn action_prefixes(m: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut layer = vec![vec![]];
    for _ in 0..len {
        layer = layer
            .iter()
            .flat_map(|p: &Vec<usize>| (0..m).map(move |a| [p.as_slice(), &[a]].concat()))
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// Trajectory robustness after playing `prefix` from `x0` and then the policy.
pub fn resume_score(policy: &PolicyTree, x0: usize, prefix: &[usize]) -> Result<(Score, Vec<usize>, Trace), String> {
    let ts = policy.ts();
    let mut es = policy.init(x0);
    let mut x = x0;
    let mut states = vec![x0];
    for &a in prefix {
        es = policy.observe(&es, x, a);
        x = ts.next(x, a);
        states.push(x);
    }
    let (tail, _) = policy.rollout_from(es, x, ROLLOUT_HORIZON, true).map_err(|e| e.to_string())?;
    let k = prefix.len();
    let mut full_states = states[..k].to_vec();
    full_states.extend(&tail.states);
    let mut full_actions = prefix.to_vec();
    full_actions.extend(&tail.actions);
    let tr = Trace::lasso(full_states, full_actions, k + tail.loop_start.unwrap());
    let score = eval(&policy.values.root.formula, ts, &tr).map_err(|e| e.to_string())?;
    Ok((score, states, tr))
}

/// Runs the randomized comparison described by `cfg`.
pub fn check_equivalence(cfg: &SuiteConfig) -> Report {
    let mut report = Report { instances: cfg.instances, ..Report::default() };
    for i in 0..cfg.instances {
        let s = instance_seed(cfg.seed, i);
        let (ts, f) = instance(s, cfg);
        let raw = ts.clone();
        let push = |kind: &str, detail: String, report: &mut Report| {
            tracing::warn!(instance = i, kind, %detail, "discrepancy");
            report.discrepancies.push(Discrepancy {
                instance: i,
                instance_seed: s,
                kind: kind.to_string(),
                formula: f.to_string(),
                system: raw.clone(),
                detail,
            });
        };
        let ts = Arc::new(ts);
        let mut oracle = match Oracle::new(&f, ts.clone()) {
            Ok(o) => o,
            Err(OracleError::TooLarge { .. }) => continue,
            Err(e) => {
                push("oracle", e.to_string(), &mut report);
                continue;
            }
        };
        let values = match value_compose(ts.clone(), &f) {
            Ok(v) => v,
            Err(e) => {
                push("value", e.to_string(), &mut report);
                continue;
            }
        };
        for x in 0..ts.n {
            report.value_checks += 1;
            let (dp, bf) = (values.v_inf()[x], oracle.value(x));
            if dp != bf {
                push("value", format!("state {x}: tables {dp}, oracle {bf}"), &mut report);
            }
        }
        let values = Arc::new(values);
        for variant in [Variant::Timer, Variant::Markov] {
            let policy = PolicyTree { values: values.clone(), variant };
            for x0 in 0..ts.n {
                for prefix in action_prefixes(ts.m, 3) {
                    report.history_checks += 1;
                    let (score, states, _) = match resume_score(&policy, x0, &prefix) {
                        Ok(r) => r,
                        Err(e) => {
                            push("rollout", format!("{variant:?} x0={x0} prefix={prefix:?}: {e}"), &mut report);
                            continue;
                        }
                    };
                    let bf = match oracle.value_history(&states) {
                        Ok(v) => v,
                        Err(e) => {
                            push("oracle", e.to_string(), &mut report);
                            continue;
                        }
                    };
                    if score != bf {
                        push(
                            "history",
                            format!("{variant:?} x0={x0} prefix={prefix:?}: policy achieves {score}, optimum {bf}"),
                            &mut report,
                        );
                    }
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_suite_is_clean() {
        let r = check_equivalence(&SuiteConfig { instances: 0, ..SuiteConfig::default() });
        assert!(r.is_clean());
        assert_eq!(r.value_checks, 0);
    }

    #[test]
    fn generated_formulas_stay_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let f = random_fragment_formula(&mut rng, 3);
            assert!(f.depth() <= 3, "{f}");
            assert!(derive(&f).is_ok());
        }
    }

    #[test]
    fn small_suite_is_clean() {
        let r = check_equivalence(&SuiteConfig { instances: 15, seed: 11, ..SuiteConfig::default() });
        assert!(r.is_clean(), "{:#?}", r.discrepancies.first());
    }
}

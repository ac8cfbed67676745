use std::sync::Arc;

use proptest::prelude::*;
use tlps_core::formula::{classify, derive, parse, prepare_formula, rewrite_conjunction, FragmentTag};
use tlps_core::oracle::{lasso_enumeration_value, Oracle};
use tlps_core::policy::{PolicyTree, Variant};
use tlps_core::robustness::{eval, eval_positions, eval_timed_until};
use tlps_core::{fin, Formula, Score, Trace, TransitionSystem};

const ATOMS: [&str; 3] = ["p0", "p1", "p2"];

fn atom() -> impl Strategy<Value = Formula> {
    prop_oneof![1 => Just(Formula::True), 6 => (0..3usize).prop_map(|i| Formula::atom(ATOMS[i]))]
}

fn prop_formula() -> impl Strategy<Value = Formula> {
    atom().prop_recursive(2, 8, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Formula::And),
            prop::collection::vec(inner, 2..=3).prop_map(Formula::Or),
        ]
    })
}

/// Unrestricted formulas over the full grammar.
fn any_formula() -> impl Strategy<Value = Formula> {
    atom().prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Formula::And),
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Formula::Or),
            inner.clone().prop_map(Formula::next),
            inner.clone().prop_map(Formula::globally),
            inner.clone().prop_map(Formula::finally),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::until(l, r)),
            (inner.clone(), inner, 0..5u32).prop_map(|(l, r, n)| Formula::timed_until(l, r, n)),
        ]
    })
}

fn system(max_n: usize, max_m: usize) -> impl Strategy<Value = TransitionSystem> {
    (1..=max_n, 1..=max_m).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(0..n, n * m),
            prop::collection::vec(prop::collection::vec(-2i64..=2, n), 3),
        )
            .prop_map(move |(succ, labels)| {
                let mut ts = TransitionSystem::from_fn(n, m, |x, a| succ[x * m + a]);
                for (name, l) in ATOMS.iter().zip(labels) {
                    ts = ts.with_label(name, l.into_iter().map(fin).collect());
                }
                ts
            })
    })
}

/// A system with a lasso of its states; the lasso need not follow the transitions.
fn system_and_lasso() -> impl Strategy<Value = (TransitionSystem, Trace)> {
    system(4, 2).prop_flat_map(|ts| {
        let n = ts.n;
        (Just(ts), prop::collection::vec(0..n, 1..=6)).prop_flat_map(|(ts, states)| {
            let len = states.len();
            (Just(ts), Just(states), 0..len).prop_map(|(ts, states, l)| (ts, Trace::states_lasso(states, l)))
        })
    })
}

/// Direct recursion on absolute positions of the unrolled lasso.
fn naive(f: &Formula, ts: &TransitionSystem, tr: &Trace, i: usize) -> Score {
    let horizon = tr.states.len();
    let until = |l: &Formula, r: &Formula, steps: usize| {
        (0..steps)
            .map(|t| (0..t).map(|k| naive(l, ts, tr, i + k)).fold(naive(r, ts, tr, i + t), Score::min))
            .max()
            .unwrap()
    };
    match f {
        Formula::True => Score::PosInf,
        Formula::Atom(_) => ts.prop_values(f).unwrap()[tr.state_at(i)],
        Formula::Not(a) => -naive(a, ts, tr, i),
        Formula::And(xs) => xs.iter().map(|x| naive(x, ts, tr, i)).min().unwrap(),
        Formula::Or(xs) => xs.iter().map(|x| naive(x, ts, tr, i)).max().unwrap(),
        Formula::Next(a) => naive(a, ts, tr, i + 1),
        Formula::Globally(a) => (0..horizon).map(|t| naive(a, ts, tr, i + t)).min().unwrap(),
        Formula::Finally(a) => (0..horizon).map(|t| naive(a, ts, tr, i + t)).max().unwrap(),
        Formula::Until(l, r) => until(l, r, horizon),
        Formula::TimedUntil(l, r, n) => until(l, r, (*n as usize + 1).min(horizon)),
    }
}

/// Conjunctions of the shapes the rewriter combines.
fn conjunct() -> impl Strategy<Value = Formula> {
    let a = || (0..3usize).prop_map(|i| Formula::atom(ATOMS[i]));
    prop_oneof![
        a().prop_map(Formula::finally),
        a().prop_map(Formula::globally),
        (a(), a()).prop_map(|(l, r)| Formula::until(l, r)),
        (a(), a(), 0..4u32).prop_map(|(l, r, n)| Formula::timed_until(l, r, n)),
        a().prop_map(|p| Formula::globally(Formula::finally(p))),
        a().prop_map(|p| Formula::finally(Formula::globally(p))),
        a().prop_map(Formula::next),
        a(),
    ]
}

fn conjunction() -> impl Strategy<Value = Formula> {
    prop::collection::vec(conjunct(), 2..=3).prop_map(Formula::And)
}

fn fragment_formula() -> impl Strategy<Value = Formula> {
    any_formula().prop_filter_map("outside the fragment", |f| derive(&f).ok().map(|_| f))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn print_parse_round_trip(f in any_formula()) {
        let text = f.to_string();
        prop_assert_eq!(parse(&text).unwrap(), f, "{}", text);
    }

    #[test]
    fn classification_survives_printing(f in any_formula()) {
        let g = parse(&f.to_string()).unwrap();
        prop_assert_eq!(classify(&f), classify(&g));
        prop_assert_eq!(derive(&f).is_ok(), !matches!(classify(&f), FragmentTag::NotInS(_)));
    }

    #[test]
    fn eval_matches_naive_unrolling((ts, tr) in system_and_lasso(), f in any_formula()) {
        let pos = eval_positions(&f, &ts, &tr).unwrap();
        for (i, v) in pos.iter().enumerate() {
            prop_assert_eq!(*v, naive(&f, &ts, &tr, i), "{} at {}", f, i);
        }
    }

    #[test]
    fn negation_duality((ts, tr) in system_and_lasso(), f in any_formula(), g in any_formula()) {
        let e = |h: &Formula| eval(h, &ts, &tr).unwrap();
        prop_assert_eq!(e(&Formula::not(f.clone())), -e(&f));
        prop_assert_eq!(e(&Formula::not(Formula::globally(f.clone()))), e(&Formula::finally(Formula::not(f.clone()))));
        prop_assert_eq!(
            e(&Formula::not(Formula::And(vec![f.clone(), g.clone()]))),
            e(&Formula::Or(vec![Formula::not(f.clone()), Formula::not(g.clone())]))
        );
        prop_assert_eq!(e(&Formula::not(Formula::next(f.clone()))), e(&Formula::next(Formula::not(f))));
    }

    #[test]
    fn timed_until_is_monotone_in_its_bound((ts, tr) in system_and_lasso(), q in prop_formula(), r in prop_formula()) {
        let len = tr.states.len() as i64;
        let untimed = eval(&Formula::until(q.clone(), r.clone()), &ts, &tr).unwrap();
        let mut prev = Score::NegInf;
        for n in -1..=len + 2 {
            let v = eval_timed_until(&q, &r, n, &ts, &tr).unwrap();
            prop_assert!(prev <= v && v <= untimed);
            if n >= len {
                prop_assert_eq!(v, untimed);
            }
            prev = v;
        }
    }

    #[test]
    fn rewriting_preserves_robustness((ts, tr) in system_and_lasso(), f in conjunction()) {
        let g = rewrite_conjunction(&f).unwrap();
        prop_assert!(derive(&g).is_ok(), "{} rewrote to {}", f, g);
        prop_assert_eq!(eval(&f, &ts, &tr).unwrap(), eval(&g, &ts, &tr).unwrap(), "{} vs {}", f, g);
    }

    #[test]
    fn prepared_formula_is_equivalent((ts, tr) in system_and_lasso(), f in any_formula()) {
        if let Ok(g) = prepare_formula(&f) {
            prop_assert_eq!(eval(&f, &ts, &tr).unwrap(), eval(&g, &ts, &tr).unwrap(), "{} vs {}", f, g);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn q_maximum_is_the_value(ts in system(5, 3), f in fragment_formula()) {
        let ts = Arc::new(ts);
        let pt = PolicyTree::build(ts.clone(), &f, Variant::Timer).unwrap();
        for x in 0..ts.n {
            let es = pt.init(x);
            let v = pt.value(&es, x);
            prop_assert_eq!(v, pt.root().v_inf[x]);
            prop_assert_eq!(pt.q_all(&es, x).into_iter().max().unwrap(), v);
            prop_assert_eq!(pt.q(&es, x, pt.decide(&es, x)), v);
        }
    }

    #[test]
    fn until_and_globally_values_are_fixed_points(ts in system(6, 3), q in prop_formula(), r in prop_formula()) {
        let ts = Arc::new(ts);
        let qv = ts.prop_values(&q).unwrap();
        let rv = ts.prop_values(&r).unwrap();
        let best = |v: &[Score], x: usize| (0..ts.m).map(|a| v[ts.next(x, a)]).max().unwrap();
        let u = PolicyTree::build(ts.clone(), &Formula::until(q.clone(), r), Variant::Timer).unwrap();
        let vu = u.root().v_inf.clone();
        let g = PolicyTree::build(ts.clone(), &Formula::globally(q), Variant::Timer).unwrap();
        let vg = g.root().v_inf.clone();
        for x in 0..ts.n {
            prop_assert_eq!(vu[x], rv[x].max(qv[x].min(best(&vu, x))));
            prop_assert_eq!(vg[x], qv[x].min(best(&vg, x)));
        }
    }

    #[test]
    fn oracle_agrees_with_lasso_enumeration(ts in system(3, 2), f in fragment_formula()) {
        let ts = Arc::new(ts);
        let oracle = Oracle::new(&f, ts.clone()).unwrap();
        for x in 0..ts.n {
            let enumerated = lasso_enumeration_value(&f, &ts, x, 7).unwrap();
            prop_assert!(enumerated <= oracle.value(x), "{} at {}", f, x);
        }
    }

    #[test]
    fn rollouts_achieve_the_value(ts in system(5, 3), f in fragment_formula()) {
        let ts = Arc::new(ts);
        for variant in [Variant::Timer, Variant::Markov] {
            let pt = PolicyTree::build(ts.clone(), &f, variant).unwrap();
            for x in 0..ts.n {
                let tr = pt.rollout(x, 50_000, true).unwrap();
                prop_assert_eq!(eval(&f, &ts, &tr).unwrap(), pt.root().v_inf[x], "{:?} {} from {}", variant, f, x);
            }
        }
    }
}

//! Globally-Until unfolding and conjunction rewriting into the fragment.
//!
//! Every rule used by [`rewrite_conjunction`] is a robustness identity on all traces:
//!
//! * `p1 U f1 & p2 U f2  =  (p1&p2) U (f1 & p2 U f2)  |  (p1&p2) U (f2 & p1 U f1)`
//! * `p U f & X g  =  (f & X g)  |  (p & X(p U f & g))`
//! * `p U[0,N] f  =  f | (p & X(p U[0,N-1] f))`, `p U[0,0] f = f`
//! * `G q & p U f  =  (p&q) U (G q & f)`, likewise for bounded `U`
//! * `G q & X f  =  q & X(G q & f)`
//! * `G q & G(&_i p_i U r_i)  =  G(&_i (p_i&q) U (r_i&q))`
//! * `R & p U f  =  p U (R & f)` and `R & X f = X(R & f)` for `R = G(&_i F r_i)`, which
//!   ignores any finite prefix
//! * `F G a & F G b  =  F G(a & b)`

use thiserror::Error;

use super::fragment::gu_pairs;
use super::{derive, Formula};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewriteError {
    #[error("gu_unfold index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("operand {0} is not propositional")]
    NotPropositional(String),
    #[error("unsupported conjunction: cannot combine conjunct {conjunct}")]
    Unsupported { conjunct: String },
}

/// Propositional conjunction with `T` dropped and nested lists spliced.
fn pand(a: &Formula, b: &Formula) -> Formula {
    let mut out = Vec::new();
    for f in [a, b] {
        match f {
            Formula::True => {}
            Formula::And(xs) => out.extend(xs.iter().cloned()),
            _ => out.push(f.clone()),
        }
    }
    Formula::and(out)
}

/// `chi_i[tail] = (p_i & w_i) U ((r_i & w_i) & X tail)`, `w_i = &_{j != i} (p_j | r_j)`, `i` one-based.
pub fn gu_unfold(pairs: &[(Formula, Formula)], i: usize, tail: Formula) -> Result<Formula, RewriteError> {
    if i == 0 || i > pairs.len() {
        return Err(RewriteError::IndexOutOfRange { index: i, len: pairs.len() });
    }
    for (p, r) in pairs {
        for x in [p, r] {
            if !x.is_prop() {
                return Err(RewriteError::NotPropositional(x.to_string()));
            }
        }
    }
    let w = Formula::and(
        pairs
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i - 1)
            .map(|(_, (p, r))| Formula::Or(vec![p.clone(), r.clone()]))
            .collect(),
    );
    let (p, r) = &pairs[i - 1];
    let (q_t, r_t) = match w {
        Formula::True => (p.clone(), r.clone()),
        w => (Formula::And(vec![p.clone(), w.clone()]), Formula::And(vec![r.clone(), w])),
    };
    Ok(Formula::until(q_t, Formula::And(vec![r_t, Formula::next(tail)])))
}

/// Shape of a desugared conjunct as seen by the combination rules.
enum Kind {
    Prop,
    PropConj(Formula, Formula),
    Conj(Vec<Formula>),
    Or(Vec<Formula>),
    Next(Formula),
    Until(Formula, Formula),
    Timed(Formula, Formula, u32),
    Safety(Formula),
    /// `G(&_i p_i U r_i)`; `recurrent` when every `p_i` is `T`.
    Gu { pairs: Vec<(Formula, Formula)>, recurrent: bool },
    Other,
}

fn kind(f: &Formula) -> Kind {
    if f.is_prop() {
        return Kind::Prop;
    }
    match f {
        Formula::And(xs) => {
            let (props, temporal): (Vec<_>, Vec<_>) = xs.iter().cloned().partition(Formula::is_prop);
            if temporal.len() == 1 {
                Kind::PropConj(Formula::and(props), temporal.into_iter().next().unwrap())
            } else {
                Kind::Conj(xs.clone())
            }
        }
        Formula::Or(xs) => Kind::Or(xs.clone()),
        Formula::Next(x) => Kind::Next((**x).clone()),
        Formula::Until(p, x) if p.is_prop() => Kind::Until((**p).clone(), (**x).clone()),
        Formula::TimedUntil(p, x, n) if p.is_prop() => Kind::Timed((**p).clone(), (**x).clone(), *n),
        Formula::Globally(x) if x.is_prop() => Kind::Safety((**x).clone()),
        Formula::Globally(x) => {
            if let Some(pairs) = gu_pairs(x) {
                let recurrent = pairs.iter().all(|(p, _)| *p == Formula::True);
                return Kind::Gu { pairs, recurrent };
            }
            match &**x {
                // G distributes over conjunction.
                Formula::And(xs) => Kind::Conj(xs.iter().map(|c| Formula::globally(c.clone())).collect()),
                _ => Kind::Other,
            }
        }
        _ => Kind::Other,
    }
}

fn gu_formula(pairs: Vec<(Formula, Formula)>) -> Formula {
    Formula::globally(Formula::and(pairs.into_iter().map(|(p, r)| Formula::until(p, r)).collect()))
}

fn fold_safety(q: &Formula, pairs: &[(Formula, Formula)]) -> Formula {
    gu_formula(pairs.iter().map(|(p, r)| (pand(p, q), pand(r, q))).collect())
}

/// `p & s` for propositional `p`, keeping a single propositional prefix.
fn mk_conj(p: &Formula, s: Formula) -> Formula {
    if *p == Formula::True {
        return s;
    }
    if s.is_prop() {
        return pand(p, &s);
    }
    match kind(&s) {
        Kind::PropConj(p2, t) => Formula::And(vec![pand(p, &p2), t]),
        _ => Formula::And(vec![p.clone(), s]),
    }
}

fn mk_or(xs: Vec<Formula>) -> Formula {
    let mut out = Vec::new();
    for x in xs {
        match x {
            Formula::Or(ys) => out.extend(ys),
            x => out.push(x),
        }
    }
    Formula::or(out)
}

fn unroll(p: &Formula, f: &Formula, n: u32) -> Formula {
    if n == 0 {
        return f.clone();
    }
    let step = mk_conj(p, Formula::next(Formula::timed_until(p.clone(), f.clone(), n - 1)));
    mk_or(vec![f.clone(), step])
}

fn unsupported(f: &Formula) -> RewriteError {
    RewriteError::Unsupported { conjunct: f.to_string() }
}

/// Orders conjuncts so that prefix-sensitive ones are combined first and
/// safeties and recurrences are pushed into them afterwards.
fn rank(f: &Formula) -> u8 {
    match kind(f) {
        Kind::Gu { recurrent: false, .. } => 1,
        Kind::Gu { recurrent: true, .. } => 2,
        Kind::Safety(_) => 3,
        Kind::Prop => 4,
        _ => 0,
    }
}

fn conj_all(mut xs: Vec<Formula>) -> Result<Formula, RewriteError> {
    // Flatten nested conjunctions first.
    let mut flat = Vec::new();
    while let Some(x) = xs.pop() {
        match kind(&x) {
            Kind::Conj(ys) => xs.extend(ys),
            _ => flat.push(x),
        }
    }
    flat.reverse();
    flat.sort_by_key(rank);
    let mut iter = flat.into_iter();
    let Some(mut acc) = iter.next() else { return Ok(Formula::True) };
    if matches!(kind(&acc), Kind::Other) {
        return Err(unsupported(&acc));
    }
    for x in iter {
        acc = and_s(&acc, &x)?;
    }
    Ok(acc)
}

fn and_s(a: &Formula, b: &Formula) -> Result<Formula, RewriteError> {
    let (ka, kb) = (kind(a), kind(b));
    match (ka, kb) {
        (Kind::Other, _) => Err(unsupported(a)),
        (_, Kind::Other) => Err(unsupported(b)),
        (Kind::Prop, _) => Ok(mk_conj(a, b.clone())),
        (_, Kind::Prop) => Ok(mk_conj(b, a.clone())),
        (Kind::PropConj(p, t), _) => Ok(mk_conj(&p, and_s(&t, b)?)),
        (_, Kind::PropConj(p, t)) => Ok(mk_conj(&p, and_s(a, &t)?)),
        (Kind::Conj(xs), _) => conj_all(xs.into_iter().chain([b.clone()]).collect()),
        (_, Kind::Conj(ys)) => conj_all([a.clone()].into_iter().chain(ys).collect()),
        (Kind::Or(xs), _) => Ok(mk_or(xs.iter().map(|x| and_s(x, b)).collect::<Result<_, _>>()?)),
        (_, Kind::Or(ys)) => Ok(mk_or(ys.iter().map(|y| and_s(a, y)).collect::<Result<_, _>>()?)),
        (ka, kb) => temporal_pair(a, ka, b, kb),
    }
}

fn temporal_pair(a: &Formula, ka: Kind, b: &Formula, kb: Kind) -> Result<Formula, RewriteError> {
    use Kind::*;
    match (ka, kb) {
        (Safety(q), Safety(q2)) => Ok(Formula::globally(pand(&q, &q2))),
        (Safety(q), Gu { pairs, .. }) | (Gu { pairs, .. }, Safety(q)) => Ok(fold_safety(&q, &pairs)),
        (Gu { pairs: pa, .. }, Gu { pairs: pb, .. }) => Ok(gu_formula(pa.into_iter().chain(pb).collect())),
        (Safety(q), t) => push_safety(&q, a, t),
        (t, Safety(q)) => push_safety(&q, b, t),
        (Gu { recurrent: true, .. }, t) => push_recurrence(a, t),
        (t, Gu { recurrent: true, .. }) => push_recurrence(b, t),
        (Gu { .. }, _) => Err(unsupported(a)),
        (_, Gu { .. }) => Err(unsupported(b)),
        (Until(p1, f1), Until(p2, f2)) => {
            if p1 == Formula::True && p2 == Formula::True {
                if let (Safety(g1), Safety(g2)) = (kind(&f1), kind(&f2)) {
                    return Ok(Formula::until(Formula::True, Formula::globally(pand(&g1, &g2))));
                }
            }
            let p = pand(&p1, &p2);
            let first = Formula::until(p.clone(), and_s(&f1, b)?);
            let second = Formula::until(p, and_s(&f2, a)?);
            Ok(mk_or(vec![first, second]))
        }
        (Timed(p, f, n), _) => and_s(&unroll(&p, &f, n), b),
        (_, Timed(p, f, n)) => and_s(a, &unroll(&p, &f, n)),
        (Next(f1), Next(f2)) => Ok(Formula::next(and_s(&f1, &f2)?)),
        (Until(p, f), Next(g)) => until_next(a, &p, &f, &g),
        (Next(g), Until(p, f)) => until_next(b, &p, &f, &g),
        _ => unreachable!("all shapes covered"),
    }
}

fn until_next(u: &Formula, p: &Formula, f: &Formula, g: &Formula) -> Result<Formula, RewriteError> {
    let now = and_s(f, &Formula::next(g.clone()))?;
    let later = mk_conj(p, Formula::next(and_s(u, g)?));
    Ok(mk_or(vec![now, later]))
}

fn push_safety(q: &Formula, gq: &Formula, t: Kind) -> Result<Formula, RewriteError> {
    match t {
        Kind::Until(p, f) => Ok(Formula::until(pand(&p, q), and_s(gq, &f)?)),
        Kind::Timed(p, f, n) => Ok(Formula::timed_until(pand(&p, q), and_s(gq, &f)?, n)),
        Kind::Next(f) => Ok(mk_conj(q, Formula::next(and_s(gq, &f)?))),
        _ => unreachable!("push_safety on non-temporal shape"),
    }
}

fn push_recurrence(rec: &Formula, t: Kind) -> Result<Formula, RewriteError> {
    match t {
        Kind::Until(p, f) => Ok(Formula::until(p, and_s(rec, &f)?)),
        Kind::Timed(p, f, n) => Ok(Formula::timed_until(p, and_s(rec, &f)?, n)),
        Kind::Next(f) => Ok(Formula::next(and_s(rec, &f)?)),
        _ => unreachable!("push_recurrence on non-temporal shape"),
    }
}

fn resugar(f: &Formula) -> Formula {
    match f {
        Formula::Until(l, r) if **l == Formula::True => Formula::finally(resugar(r)),
        Formula::True | Formula::Atom(_) => f.clone(),
        Formula::Not(a) => Formula::not(resugar(a)),
        Formula::And(xs) => Formula::And(xs.iter().map(resugar).collect()),
        Formula::Or(xs) => Formula::Or(xs.iter().map(resugar).collect()),
        Formula::Next(a) => Formula::next(resugar(a)),
        Formula::Until(l, r) => Formula::until(resugar(l), resugar(r)),
        Formula::TimedUntil(l, r, n) => Formula::timed_until(resugar(l), resugar(r), *n),
        Formula::Globally(a) => Formula::globally(resugar(a)),
        Formula::Finally(a) => Formula::finally(resugar(a)),
    }
}

/// Rewrites a conjunction of fragment formulas into a single fragment formula
/// with identical robustness on every trace. Formulas already in the fragment are returned unchanged.
pub fn rewrite_conjunction(f: &Formula) -> Result<Formula, RewriteError> {
    if derive(f).is_ok() {
        return Ok(f.clone());
    }
    let d = f.desugar();
    let out = match &d {
        Formula::And(xs) => conj_all(xs.clone())?,
        other => conj_all(vec![other.clone()])?,
    };
    let out = resugar(&out);
    derive(&out).map_err(|_| unsupported(f))?;
    Ok(out)
}

//! Membership in the solvable fragment and the derivation tree that witnesses it.

use std::fmt;

use serde::Serialize;

use super::Formula;

/// Child-index path from the root of a formula.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default, Serialize)]
pub struct Path(pub Vec<usize>);

impl Path {
    fn child(&self, i: usize) -> Path {
        let mut v = self.0.clone();
        v.push(i);
        Path(v)
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("$")?;
        for i in &self.0 {
            write!(f, ".{i}")?;
        }
        Ok(())
    }
}

/// Why a formula falls outside the fragment, and where.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("not in fragment at {path}: {reason}")]
pub struct NotInS {
    pub path: Path,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum FragmentTag {
    Prop,
    Until { bound: Option<u32> },
    Next,
    Globally,
    GloballyUntil { pairs: Vec<(Formula, Formula)> },
    Disjunction,
    PropConjunction,
    NotInS(NotInS),
}

/// Proof tree of fragment membership. `F` is already desugared here.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Derivation {
    Prop(Formula),
    Until { q: Formula, r: Box<Derivation>, bound: Option<u32> },
    Next(Box<Derivation>),
    Globally(Formula),
    GloballyUntil(Vec<(Formula, Formula)>),
    Disjunction(Vec<Derivation>),
    PropConjunction(Formula, Box<Derivation>),
}

impl Derivation {
    /// The (desugared) formula this derivation covers.
    pub fn formula(&self) -> Formula {
        match self {
            Derivation::Prop(p) => p.clone(),
            Derivation::Until { q, r, bound: None } => Formula::until(q.clone(), r.formula()),
            Derivation::Until { q, r, bound: Some(n) } => Formula::timed_until(q.clone(), r.formula(), *n),
            Derivation::Next(c) => Formula::next(c.formula()),
            Derivation::Globally(q) => Formula::globally(q.clone()),
            Derivation::GloballyUntil(pairs) => Formula::globally(Formula::and(
                pairs.iter().map(|(p, r)| Formula::until(p.clone(), r.clone())).collect(),
            )),
            Derivation::Disjunction(xs) => Formula::Or(xs.iter().map(Derivation::formula).collect()),
            Derivation::PropConjunction(p, c) => Formula::And(vec![p.clone(), c.formula()]),
        }
    }

    pub fn tag(&self) -> FragmentTag {
        match self {
            Derivation::Prop(_) => FragmentTag::Prop,
            Derivation::Until { bound, .. } => FragmentTag::Until { bound: *bound },
            Derivation::Next(_) => FragmentTag::Next,
            Derivation::Globally(_) => FragmentTag::Globally,
            Derivation::GloballyUntil(pairs) => FragmentTag::GloballyUntil { pairs: pairs.clone() },
            Derivation::Disjunction(_) => FragmentTag::Disjunction,
            Derivation::PropConjunction(..) => FragmentTag::PropConjunction,
        }
    }
}

/// Propositional `(p, r)` pairs when `f` is a propositional Until, `F r`, or a conjunction of those.
pub(crate) fn gu_pairs(f: &Formula) -> Option<Vec<(Formula, Formula)>> {
    match f {
        Formula::Until(p, r) if p.is_prop() && r.is_prop() => Some(vec![((**p).clone(), (**r).clone())]),
        Formula::Finally(r) if r.is_prop() => Some(vec![(Formula::True, (**r).clone())]),
        Formula::And(xs) => {
            let mut out = Vec::new();
            for x in xs {
                match x {
                    Formula::And(_) => return None,
                    _ => out.extend(gu_pairs(x)?),
                }
            }
            Some(out)
        }
        _ => None,
    }
}

fn go(f: &Formula, path: &Path) -> Result<Derivation, NotInS> {
    if f.is_prop() {
        return Ok(Derivation::Prop(f.clone()));
    }
    let fail = |path: Path, reason: &str| Err(NotInS { path, reason: reason.to_string() });
    match f {
        Formula::Until(l, r) | Formula::TimedUntil(l, r, _) => {
            if !l.is_prop() {
                return fail(path.child(0), "left operand of U must be propositional");
            }
            let bound = match f {
                Formula::TimedUntil(_, _, n) => Some(*n),
                _ => None,
            };
            Ok(Derivation::Until { q: (**l).clone(), r: Box::new(go(r, &path.child(1))?), bound })
        }
        Formula::Finally(r) => {
            Ok(Derivation::Until { q: Formula::True, r: Box::new(go(r, &path.child(0))?), bound: None })
        }
        Formula::Next(c) => Ok(Derivation::Next(Box::new(go(c, &path.child(0))?))),
        Formula::Globally(c) => {
            if c.is_prop() {
                return Ok(Derivation::Globally((**c).clone()));
            }
            if let Some(pairs) = gu_pairs(c) {
                return Ok(Derivation::GloballyUntil(pairs));
            }
            go(c, &path.child(0))?;
            fail(path.clone(), "G must wrap a proposition or a conjunction of propositional Untils")
        }
        Formula::Or(xs) => Ok(Derivation::Disjunction(
            xs.iter().enumerate().map(|(i, x)| go(x, &path.child(i))).collect::<Result<_, _>>()?,
        )),
        Formula::And(xs) => {
            let mut props = Vec::new();
            let mut temporal = Vec::new();
            for (i, x) in xs.iter().enumerate() {
                if x.is_prop() {
                    props.push(x.clone());
                } else {
                    temporal.push(go(x, &path.child(i))?);
                }
            }
            if temporal.len() != 1 {
                return fail(path.clone(), "conjunction with more than one temporal conjunct");
            }
            Ok(Derivation::PropConjunction(Formula::and(props), Box::new(temporal.pop().unwrap())))
        }
        Formula::Not(c) => {
            go(c, &path.child(0))?;
            fail(path.clone(), "negation of a temporal formula")
        }
        Formula::True | Formula::Atom(_) => unreachable!("propositional"),
    }
}

/// Builds the fragment derivation of `f`, or reports where membership fails.
pub fn derive(f: &Formula) -> Result<Derivation, NotInS> {
    go(f, &Path::default())
}

/// Fragment rule admitting `f`, tried in rule order.
pub fn classify(f: &Formula) -> FragmentTag {
    match derive(f) {
        Ok(d) => d.tag(),
        Err(e) => FragmentTag::NotInS(e),
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    fn tag(s: &str) -> FragmentTag {
        classify(&parse(s).unwrap())
    }

    #[test]
    fn rule_examples() {
        assert_eq!(tag("p"), FragmentTag::Prop);
        assert_eq!(tag("!(p & q) | T"), FragmentTag::Prop);
        assert_eq!(tag("F p"), FragmentTag::Until { bound: None });
        assert_eq!(tag("p U[0,3] (q & X r)"), FragmentTag::Until { bound: Some(3) });
        assert_eq!(tag("X G q"), FragmentTag::Next);
        assert_eq!(tag("G q"), FragmentTag::Globally);
        assert_eq!(tag("p | G q"), FragmentTag::Disjunction);
        assert_eq!(tag("p & F q"), FragmentTag::PropConjunction);
        let a = Formula::atom;
        assert_eq!(
            tag("G(p1 U r1 & p2 U r2)"),
            FragmentTag::GloballyUntil { pairs: vec![(a("p1"), a("r1")), (a("p2"), a("r2"))] }
        );
        assert_eq!(
            tag("G(F wd & F sw)"),
            FragmentTag::GloballyUntil { pairs: vec![(Formula::True, a("wd")), (Formula::True, a("sw"))] }
        );
    }

    #[test]
    fn nested_eventually_under_globally_is_rejected() {
        match tag("G(p1 | F(p2 & F p3))") {
            FragmentTag::NotInS(e) => assert_eq!(e.path, Path(vec![])),
            t => panic!("{t:?}"),
        }
    }

    #[test]
    fn failure_paths_point_at_the_deepest_offender() {
        match tag("p | X((F a) U b)") {
            FragmentTag::NotInS(e) => assert_eq!(e.path.to_string(), "$.1.0.0"),
            t => panic!("{t:?}"),
        }
        match tag("F a & F b") {
            FragmentTag::NotInS(e) => assert_eq!(e.path, Path(vec![])),
            t => panic!("{t:?}"),
        }
        match tag("!(F a)") {
            FragmentTag::NotInS(e) => assert_eq!(e.reason, "negation of a temporal formula"),
            t => panic!("{t:?}"),
        }
    }
}

//! Formula AST, concrete syntax, fragment classification and rewrites.

mod fragment;
mod parse;
mod print;
mod rewrite;

use std::collections::BTreeSet;

pub use fragment::{classify, derive, Derivation, FragmentTag, NotInS, Path};
pub use parse::{parse, ParseError, ParseErrorKind};
pub use rewrite::{gu_unfold, rewrite_conjunction, RewriteError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PrepareError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    NotInS(#[from] NotInS),
}

/// Parses `text` and brings it into the fragment, rewriting conjunctions when needed.
pub fn prepare(text: &str) -> Result<Formula, PrepareError> {
    Ok(prepare_formula(&parse(text)?)?)
}

/// Brings `f` into the fragment; on failure reports where membership breaks.
pub fn prepare_formula(f: &Formula) -> Result<Formula, NotInS> {
    rewrite_conjunction(f).map_err(|e| {
        let mut n = derive(f).expect_err("rewrite only fails outside the fragment");
        n.reason = format!("{}; {e}", n.reason);
        n
    })
}

/// A temporal logic formula. `And`/`Or` are n-ary and keep their syntactic order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    Atom(String),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Next(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    TimedUntil(Box<Formula>, Box<Formula>, u32),
    Globally(Box<Formula>),
    Finally(Box<Formula>),
}

impl Formula {
    pub fn atom(name: &str) -> Self {
        Formula::Atom(name.to_string())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    /// Conjunction of `fs`; a single element is returned as is and the empty list is `T`.
    pub fn and(mut fs: Vec<Formula>) -> Self {
        match fs.len() {
            0 => Formula::True,
            1 => fs.pop().unwrap(),
            _ => Formula::And(fs),
        }
    }

    /// Disjunction of `fs`; a single element is returned as is. Panics on an empty list.
    pub fn or(mut fs: Vec<Formula>) -> Self {
        match fs.len() {
            0 => panic!("empty disjunction"),
            1 => fs.pop().unwrap(),
            _ => Formula::Or(fs),
        }
    }

    pub fn next(f: Formula) -> Self {
        Formula::Next(Box::new(f))
    }

    pub fn until(l: Formula, r: Formula) -> Self {
        Formula::Until(Box::new(l), Box::new(r))
    }

    pub fn timed_until(l: Formula, r: Formula, n: u32) -> Self {
        Formula::TimedUntil(Box::new(l), Box::new(r), n)
    }

    pub fn globally(f: Formula) -> Self {
        Formula::Globally(Box::new(f))
    }

    pub fn finally(f: Formula) -> Self {
        Formula::Finally(Box::new(f))
    }

    /// Direct children in order.
    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Formula::True | Formula::Atom(_) => vec![],
            Formula::Not(a) | Formula::Next(a) | Formula::Globally(a) | Formula::Finally(a) => {
                vec![a]
            }
            Formula::And(xs) | Formula::Or(xs) => xs.iter().collect(),
            Formula::Until(l, r) | Formula::TimedUntil(l, r, _) => vec![l, r],
        }
    }

    /// Subformula at a child-index path.
    pub fn at_path(&self, path: &[usize]) -> Option<&Formula> {
        let mut cur = self;
        for &i in path {
            cur = *cur.children().get(i)?;
        }
        Some(cur)
    }

    /// True when the formula has no temporal operator.
    pub fn is_prop(&self) -> bool {
        match self {
            Formula::True | Formula::Atom(_) => true,
            Formula::Not(a) => a.is_prop(),
            Formula::And(xs) | Formula::Or(xs) => xs.iter().all(Formula::is_prop),
            _ => false,
        }
    }

    /// Replaces every `F φ` by `T U φ`.
    pub fn desugar(&self) -> Formula {
        match self {
            Formula::True | Formula::Atom(_) => self.clone(),
            Formula::Not(a) => Formula::not(a.desugar()),
            Formula::And(xs) => Formula::And(xs.iter().map(Formula::desugar).collect()),
            Formula::Or(xs) => Formula::Or(xs.iter().map(Formula::desugar).collect()),
            Formula::Next(a) => Formula::next(a.desugar()),
            Formula::Until(l, r) => Formula::until(l.desugar(), r.desugar()),
            Formula::TimedUntil(l, r, n) => Formula::timed_until(l.desugar(), r.desugar(), *n),
            Formula::Globally(a) => Formula::globally(a.desugar()),
            Formula::Finally(a) => Formula::until(Formula::True, a.desugar()),
        }
    }

    /// Names of all atoms, sorted.
    pub fn atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<String>) {
        if let Formula::Atom(a) = self {
            out.insert(a.clone());
        }
        for c in self.children() {
            c.collect_atoms(out);
        }
    }

    /// True when some `U` or `F` has no time bound.
    pub fn has_unbounded_until(&self) -> bool {
        matches!(self, Formula::Until(..) | Formula::Finally(_))
            || self.children().into_iter().any(Formula::has_unbounded_until)
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + self.children().into_iter().map(Formula::size).sum::<usize>()
    }

    /// Nesting depth; atoms and `T` have depth 0.
    pub fn depth(&self) -> usize {
        self.children().into_iter().map(|c| c.depth() + 1).max().unwrap_or(0)
    }
}

impl std::str::FromStr for Formula {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl serde::Serialize for Formula {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Formula {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

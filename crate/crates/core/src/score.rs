//! Extended-integer robustness scores.

use std::fmt;
use std::ops::Neg;

use num_traits::{PrimInt, Signed};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An integer extended with `-inf` and `+inf`.
///
/// Variant order gives the total order `NegInf < Fin(_) < PosInf`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ext<T> {
    NegInf,
    Fin(T),
    PosInf,
}

/// The score type used throughout the crate.
pub type Score = Ext<i64>;

impl<T: PrimInt + Signed> Ext<T> {
    pub const TOP: Self = Ext::PosInf;
    pub const BOTTOM: Self = Ext::NegInf;

    pub fn finite(self) -> Option<T> {
        match self {
            Ext::Fin(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Ext::Fin(_))
    }

    pub fn is_nonneg(self) -> bool {
        self >= Ext::Fin(T::zero())
    }
}

impl<T: PrimInt + Signed> Neg for Ext<T> {
    type Output = Self;

    fn neg(self) -> Self {
        match self {
            Ext::NegInf => Ext::PosInf,
            Ext::PosInf => Ext::NegInf,
            Ext::Fin(v) => Ext::Fin(-v),
        }
    }
}

impl<T: PrimInt + Signed> From<T> for Ext<T> {
    fn from(v: T) -> Self {
        Ext::Fin(v)
    }
}

impl<T: fmt::Display> fmt::Display for Ext<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ext::NegInf => f.write_str("-inf"),
            Ext::PosInf => f.write_str("+inf"),
            Ext::Fin(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Ext::Fin(v) => s.serialize_i64(*v),
            Ext::NegInf => s.serialize_str("-inf"),
            Ext::PosInf => s.serialize_str("+inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(Ext::Fin(v)),
            Raw::Text(t) => match t.as_str() {
                "-inf" => Ok(Ext::NegInf),
                "+inf" | "inf" => Ok(Ext::PosInf),
                other => Err(serde::de::Error::custom(format!("bad score {other:?}"))),
            },
        }
    }
}

/// Shorthand for a finite score.
pub fn fin(v: i64) -> Score {
    Ext::Fin(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_and_negation() {
        assert!(Score::NegInf < fin(i64::MIN));
        assert!(fin(i64::MAX) < Score::PosInf);
        assert_eq!(-Score::PosInf, Score::NegInf);
        assert_eq!(-fin(3), fin(-3));
        assert_eq!(fin(2).min(Score::PosInf), fin(2));
        let small: Ext<i8> = Ext::Fin(-4);
        assert_eq!(-small, Ext::Fin(4));
    }

    #[test]
    fn json_round_trip() {
        let v = vec![Score::NegInf, fin(-2), fin(0), Score::PosInf];
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"["-inf",-2,0,"+inf"]"#);
        let back: Vec<Score> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}

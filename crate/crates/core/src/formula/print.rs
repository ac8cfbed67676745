use std::fmt;

use super::Formula;

fn is_leaf(f: &Formula) -> bool {
    matches!(f, Formula::True | Formula::Atom(_))
}

fn is_unary(f: &Formula) -> bool {
    matches!(f, Formula::Not(_) | Formula::Next(_) | Formula::Globally(_) | Formula::Finally(_))
}

fn write_unary_operand(f: &mut fmt::Formatter<'_>, op: &str, x: &Formula) -> fmt::Result {
    let sep = if op == "!" { "" } else { " " };
    if is_leaf(x) || is_unary(x) {
        write!(f, "{op}{sep}{x}")
    } else {
        write!(f, "{op}({x})")
    }
}

fn write_until_operand(f: &mut fmt::Formatter<'_>, x: &Formula) -> fmt::Result {
    if is_leaf(x) {
        write!(f, "{x}")
    } else {
        write!(f, "({x})")
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, xs: &[Formula], sep: &str, is_and: bool) -> fmt::Result {
    if xs.is_empty() {
        return f.write_str(if is_and { "T" } else { "!T" });
    }
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            f.write_str(sep)?;
        }
        if matches!(x, Formula::And(_) | Formula::Or(_)) {
            write!(f, "({x})")?;
        } else {
            write!(f, "{x}")?;
        }
    }
    Ok(())
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("T"),
            Formula::Atom(a) => f.write_str(a),
            Formula::Not(x) => write_unary_operand(f, "!", x),
            Formula::Next(x) => write_unary_operand(f, "X", x),
            Formula::Globally(x) => write_unary_operand(f, "G", x),
            Formula::Finally(x) => write_unary_operand(f, "F", x),
            Formula::And(xs) => write_list(f, xs, " & ", true),
            Formula::Or(xs) => write_list(f, xs, " | ", false),
            Formula::Until(l, r) => {
                write_until_operand(f, l)?;
                f.write_str(" U ")?;
                write_until_operand(f, r)
            }
            Formula::TimedUntil(l, r, n) => {
                write_until_operand(f, l)?;
                write!(f, " U[0,{n}] ")?;
                write_until_operand(f, r)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn canonical_forms() {
        let p = Formula::atom("p");
        assert_eq!(Formula::finally(p.clone()).to_string(), "F p");
        let d = Formula::until(Formula::not(Formula::atom("d")), Formula::atom("k"));
        assert_eq!(d.to_string(), "(!d) U k");
        let w = Formula::timed_until(Formula::True, Formula::atom("w"), 60);
        assert_eq!(w.to_string(), "T U[0,60] w");
        let g = Formula::globally(Formula::until(p.clone(), Formula::atom("r")));
        assert_eq!(g.to_string(), "G(p U r)");
        assert_eq!(Formula::finally(Formula::globally(p)).to_string(), "F G p");
    }

    #[test]
    fn nested_lists_keep_parentheses() {
        for s in ["(a & b) & c", "a | (b | c)", "(a | b) & c", "!(a & b)", "X (a U b) | T"] {
            let f = parse(s).unwrap();
            assert_eq!(parse(&f.to_string()).unwrap(), f, "{s}");
        }
    }
}

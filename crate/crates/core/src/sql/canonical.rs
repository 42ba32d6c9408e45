//! Canonical form used for exact-match comparison.
//!
//! Canonicalization removes differences that carry no meaning for SQLite:
//! identifier case and quoting, keyword synonyms, redundant parentheses,
//! default sort direction and the spelling of numeric literals. Predicate and
//! join order are kept as written.

use super::ast::*;
use super::lexer::QuoteStyle;

/// Options for [`canonicalize`].
#[derive(Debug, Clone, Copy)]
pub struct CanonicalOptions {
    /// Fold identifiers to ASCII lower case.
    pub fold_case: bool,
}

impl Default for CanonicalOptions {
    fn default() -> Self {
        Self { fold_case: true }
    }
}

pub fn canonicalize(query: &Query) -> Query {
    canonicalize_with(query, CanonicalOptions::default())
}

pub fn canonicalize_with(query: &Query, opts: CanonicalOptions) -> Query {
    let mut q = query.clone();
    Canon { opts }.query(&mut q);
    q
}

/// Normalizes the spelling of a numeric literal: no redundant leading or
/// trailing zeros, lower-case hex digits and exponent marker, no `+` in the
/// exponent. Integer and real literals stay distinguishable.
pub fn normalize_number(text: &str) -> String {
    if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        let digits = hex.trim_start_matches('0').to_ascii_lowercase();
        return format!("0x{}", if digits.is_empty() { "0" } else { &digits });
    }
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(i) => (&text[..i], Some(&text[i + 1..])),
        None => (text, None),
    };
    let mut out = String::new();
    match mantissa.split_once('.') {
        Some((int, frac)) => {
            let int = int.trim_start_matches('0');
            let frac = frac.trim_end_matches('0');
            out.push_str(if int.is_empty() { "0" } else { int });
            out.push('.');
            out.push_str(if frac.is_empty() { "0" } else { frac });
        }
        None => {
            let int = mantissa.trim_start_matches('0');
            out.push_str(if int.is_empty() { "0" } else { int });
        }
    }
    if let Some(exp) = exponent {
        let (neg, digits) = match exp.as_bytes().first() {
            Some(b'-') => (true, &exp[1..]),
            Some(b'+') => (false, &exp[1..]),
            _ => (false, exp),
        };
        let digits = digits.trim_start_matches('0');
        out.push('e');
        if neg && !digits.is_empty() {
            out.push('-');
        }
        out.push_str(if digits.is_empty() { "0" } else { digits });
    }
    out
}

struct Canon {
    opts: CanonicalOptions,
}

impl Canon {
    fn ident(&self, id: &mut Ident) {
        if self.opts.fold_case {
            id.value.make_ascii_lowercase();
        }
        id.quote = QuoteStyle::Bare;
        id.span = None;
    }

    fn query(&self, q: &mut Query) {
        if let Some(with) = &mut q.with {
            for cte in &mut with.ctes {
                self.ident(&mut cte.name);
                cte.columns.iter_mut().for_each(|c| self.ident(c));
                self.query(&mut cte.query);
            }
        }
        self.select(&mut q.body.first);
        for (_, s) in &mut q.body.rest {
            self.select(s);
        }
        for item in &mut q.order_by {
            self.expr(&mut item.expr);
            item.direction.get_or_insert(Direction::Asc);
        }
        if let Some(limit) = &mut q.limit {
            self.expr(&mut limit.count);
            if let Some(off) = &mut limit.offset {
                self.expr(off);
            }
            limit.comma_form = false;
        }
    }

    fn select(&self, s: &mut Select) {
        if s.quantifier == Quantifier::All {
            s.quantifier = Quantifier::None;
        }
        for col in &mut s.columns {
            match col {
                ResultColumn::Star => {}
                ResultColumn::QualifiedStar(t) => self.ident(t),
                ResultColumn::Expr { expr, alias } => {
                    self.expr(expr);
                    if let Some(a) = alias {
                        self.ident(a);
                    }
                }
            }
        }
        if let Some(from) = &mut s.from {
            self.factor(&mut from.first);
            for join in &mut from.joins {
                join.kind = match join.kind {
                    JoinKind::Plain => JoinKind::Inner,
                    JoinKind::LeftOuter => JoinKind::Left,
                    JoinKind::RightOuter => JoinKind::Right,
                    JoinKind::FullOuter => JoinKind::Full,
                    k => k,
                };
                self.factor(&mut join.factor);
                match &mut join.constraint {
                    Some(JoinConstraint::On(e)) => self.expr(e),
                    Some(JoinConstraint::Using(cols)) => cols.iter_mut().for_each(|c| self.ident(c)),
                    None => {}
                }
            }
        }
        if let Some(e) = &mut s.selection {
            self.expr(e);
        }
        s.group_by.iter_mut().for_each(|e| self.expr(e));
        if let Some(e) = &mut s.having {
            self.expr(e);
        }
    }

    fn factor(&self, f: &mut TableFactor) {
        match f {
            TableFactor::Table { name, alias } => {
                self.ident(name);
                if let Some(a) = alias {
                    self.ident(a);
                }
            }
            TableFactor::Derived { query, alias } => {
                self.query(query);
                if let Some(a) = alias {
                    self.ident(a);
                }
            }
        }
    }

    fn expr(&self, e: &mut Expr) {
        // Parentheses are already encoded by the tree shape.
        while let Expr::Nested(inner) = e {
            *e = std::mem::replace(&mut **inner, Expr::Literal(Literal::Null));
        }
        if let Expr::Unary {
            op: UnaryOp::Plus,
            expr,
        } = e
        {
            if matches!(**expr, Expr::Literal(Literal::Number(_))) {
                *e = std::mem::replace(&mut **expr, Expr::Literal(Literal::Null));
            }
        }
        match e {
            Expr::Literal(Literal::Number(n)) => *n = normalize_number(n),
            Expr::Literal(Literal::Blob(b)) => b.make_ascii_lowercase(),
            Expr::Literal(_) => {}
            Expr::Column { table, name } => {
                if let Some(t) = table {
                    self.ident(t);
                }
                self.ident(name);
            }
            Expr::Unary { expr, .. } => self.expr(expr),
            Expr::Nested(_) => unreachable!("stripped above"),
            Expr::Binary { left, op, right } => {
                *op = match *op {
                    BinaryOp::EqEq => BinaryOp::Eq,
                    BinaryOp::LtGt => BinaryOp::NotEq,
                    o => o,
                };
                self.expr(left);
                self.expr(right);
            }
            Expr::Pattern {
                expr, pattern, escape, ..
            } => {
                self.expr(expr);
                self.expr(pattern);
                if let Some(esc) = escape {
                    self.expr(esc);
                }
            }
            Expr::Between { expr, low, high, .. } => {
                self.expr(expr);
                self.expr(low);
                self.expr(high);
            }
            Expr::InList { expr, list, .. } => {
                self.expr(expr);
                list.iter_mut().for_each(|x| self.expr(x));
            }
            Expr::InSubquery { expr, query, .. } => {
                self.expr(expr);
                self.query(query);
            }
            Expr::Exists(q) | Expr::Subquery(q) => self.query(q),
            Expr::Case {
                operand,
                branches,
                otherwise,
            } => {
                if let Some(op) = operand {
                    self.expr(op);
                }
                for (c, r) in branches {
                    self.expr(c);
                    self.expr(r);
                }
                if let Some(o) = otherwise {
                    self.expr(o);
                }
            }
            Expr::Cast { expr, type_name } => {
                self.expr(expr);
                type_name.words.iter_mut().for_each(|w| w.make_ascii_uppercase());
                for a in &mut type_name.args {
                    *a = normalize_number(a);
                }
            }
            Expr::Function { name, args } => {
                self.ident(name);
                if let FunctionArgs::List { args, .. } = args {
                    args.iter_mut().for_each(|x| self.expr(x));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::parse_sql;

    fn canon(sql: &str) -> Query {
        canonicalize(&parse_sql(sql).unwrap())
    }

    #[test]
    fn numbers() {
        assert_eq!(normalize_number("07"), "7");
        assert_eq!(normalize_number("0"), "0");
        assert_eq!(normalize_number("7.50"), "7.5");
        assert_eq!(normalize_number("7.0"), "7.0");
        assert_eq!(normalize_number(".5"), "0.5");
        assert_eq!(normalize_number("5."), "5.0");
        assert_eq!(normalize_number("1E+03"), "1e3");
        assert_eq!(normalize_number("2.5e-01"), "2.5e-1");
        assert_eq!(normalize_number("0X1F"), "0x1f");
    }

    #[test]
    fn surface_differences_vanish() {
        assert_eq!(
            canon("select `Name` from Users as u where ((u.age)) == 07 order by name"),
            canon("SELECT name FROM users AS U WHERE U.AGE = 7 ORDER BY Name ASC")
        );
        assert_eq!(
            canon("SELECT a FROM t LEFT OUTER JOIN s ON t.x <> s.x LIMIT 2, 5"),
            canon("SELECT a FROM t LEFT JOIN s ON t.x != s.x LIMIT 5 OFFSET 2")
        );
        assert_eq!(canon("SELECT ALL +1.50"), canon("SELECT 1.5"));
    }

    #[test]
    fn meaningful_differences_remain() {
        assert_ne!(
            canon("SELECT a FROM t ORDER BY a"),
            canon("SELECT a FROM t ORDER BY a DESC")
        );
        assert_ne!(canon("SELECT 1"), canon("SELECT 1.0"));
        assert_ne!(
            canon("SELECT a FROM t WHERE x = 'A'"),
            canon("SELECT a FROM t WHERE x = 'a'")
        );
        assert_ne!(
            canon("SELECT a FROM t WHERE p AND q"),
            canon("SELECT a FROM t WHERE q AND p")
        );
        assert_ne!(canon("SELECT (a + b) * c"), canon("SELECT a + b * c"));
    }

    #[test]
    fn idempotent() {
        let once = canon("SELECT CAST(x AS real) FROM t JOIN s USING (Id) WHERE -(+3) > 0x0A");
        assert_eq!(canonicalize(&once), once);
    }
}

//! Printing trees back to executable SQL.
//!
//! Output uses uppercase keywords and single spacing. Identifiers that are
//! not plain ASCII words, or that collide with an SQLite keyword, are
//! backtick-quoted. Double-quoted identifiers keep their double quotes,
//! since SQLite may read an unresolvable double-quoted name as a string.

use std::fmt::{self, Write};

use super::ast::*;
use super::lexer::{is_sqlite_keyword, QuoteStyle};

pub fn render_sql(query: &Query) -> String {
    let mut out = String::new();
    write_query(&mut out, query).expect("writing to a String cannot fail");
    out
}

pub fn render_expr(expr: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, expr).expect("writing to a String cannot fail");
    out
}

pub fn render_create_view(view: &CreateView) -> String {
    let mut out = String::from("CREATE ");
    if view.temporary {
        out.push_str("TEMP ");
    }
    out.push_str("VIEW ");
    if view.if_not_exists {
        out.push_str("IF NOT EXISTS ");
    }
    write_ident(&mut out, &view.name).unwrap();
    if !view.columns.is_empty() {
        out.push('(');
        write_idents(&mut out, &view.columns).unwrap();
        out.push(')');
    }
    out.push_str(" AS ");
    write_query(&mut out, &view.query).unwrap();
    out
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_sql(self))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_expr(self))
    }
}

/// True when `name` cannot be written bare.
pub fn needs_quoting(name: &str) -> bool {
    let mut chars = name.chars();
    let Some(first) = chars.next() else { return true };
    if !(first.is_ascii_alphabetic() || first == '_') {
        return true;
    }
    if !chars.all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return true;
    }
    is_sqlite_keyword(name)
}

/// Renders a bare identifier name with backticks when needed.
pub fn quote_ident(name: &str) -> String {
    if needs_quoting(name) {
        format!("`{}`", name.replace('`', "``"))
    } else {
        name.to_string()
    }
}

/// Renders an identifier for SQLite DDL, always double-quoted.
pub fn quote_ddl(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

fn write_ident(out: &mut String, ident: &Ident) -> fmt::Result {
    match ident.quote {
        QuoteStyle::Double => write!(out, "\"{}\"", ident.value.replace('"', "\"\"")),
        QuoteStyle::Single => write!(out, "'{}'", ident.value.replace('\'', "''")),
        _ => out.write_str(&quote_ident(&ident.value)),
    }
}

fn write_idents(out: &mut String, idents: &[Ident]) -> fmt::Result {
    for (i, id) in idents.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_ident(out, id)?;
    }
    Ok(())
}

fn write_query(out: &mut String, q: &Query) -> fmt::Result {
    if let Some(with) = &q.with {
        out.push_str("WITH ");
        if with.recursive {
            out.push_str("RECURSIVE ");
        }
        for (i, cte) in with.ctes.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            write_ident(out, &cte.name)?;
            if !cte.columns.is_empty() {
                out.push('(');
                write_idents(out, &cte.columns)?;
                out.push(')');
            }
            out.push_str(" AS (");
            write_query(out, &cte.query)?;
            out.push(')');
        }
        out.push(' ');
    }
    write_select(out, &q.body.first)?;
    for (op, select) in &q.body.rest {
        write!(out, " {} ", op.as_str())?;
        write_select(out, select)?;
    }
    if !q.order_by.is_empty() {
        out.push_str(" ORDER BY ");
        for (i, item) in q.order_by.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            write_expr(out, &item.expr)?;
            match item.direction {
                Some(Direction::Asc) => out.push_str(" ASC"),
                Some(Direction::Desc) => out.push_str(" DESC"),
                None => {}
            }
        }
    }
    if let Some(limit) = &q.limit {
        out.push_str(" LIMIT ");
        match (&limit.offset, limit.comma_form) {
            (Some(offset), true) => {
                write_expr(out, offset)?;
                out.push_str(", ");
                write_expr(out, &limit.count)?;
            }
            (Some(offset), false) => {
                write_expr(out, &limit.count)?;
                out.push_str(" OFFSET ");
                write_expr(out, offset)?;
            }
            (None, _) => write_expr(out, &limit.count)?,
        }
    }
    Ok(())
}

fn write_select(out: &mut String, s: &Select) -> fmt::Result {
    out.push_str("SELECT ");
    match s.quantifier {
        Quantifier::Distinct => out.push_str("DISTINCT "),
        Quantifier::All => out.push_str("ALL "),
        Quantifier::None => {}
    }
    for (i, col) in s.columns.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        match col {
            ResultColumn::Star => out.push('*'),
            ResultColumn::QualifiedStar(t) => {
                write_ident(out, t)?;
                out.push_str(".*");
            }
            ResultColumn::Expr { expr, alias } => {
                write_expr(out, expr)?;
                if let Some(alias) = alias {
                    out.push_str(" AS ");
                    write_ident(out, alias)?;
                }
            }
        }
    }
    if let Some(from) = &s.from {
        out.push_str(" FROM ");
        write_factor(out, &from.first)?;
        for join in &from.joins {
            if join.kind == JoinKind::Comma {
                out.push_str(", ");
            } else {
                write!(out, " {} ", join.kind.as_str())?;
            }
            write_factor(out, &join.factor)?;
            match &join.constraint {
                Some(JoinConstraint::On(e)) => {
                    out.push_str(" ON ");
                    write_expr(out, e)?;
                }
                Some(JoinConstraint::Using(cols)) => {
                    out.push_str(" USING (");
                    write_idents(out, cols)?;
                    out.push(')');
                }
                None => {}
            }
        }
    }
    if let Some(e) = &s.selection {
        out.push_str(" WHERE ");
        write_expr(out, e)?;
    }
    if !s.group_by.is_empty() {
        out.push_str(" GROUP BY ");
        write_expr_list(out, &s.group_by)?;
    }
    if let Some(e) = &s.having {
        out.push_str(" HAVING ");
        write_expr(out, e)?;
    }
    Ok(())
}

fn write_factor(out: &mut String, f: &TableFactor) -> fmt::Result {
    match f {
        TableFactor::Table { name, alias } => {
            write_ident(out, name)?;
            if let Some(a) = alias {
                out.push_str(" AS ");
                write_ident(out, a)?;
            }
        }
        TableFactor::Derived { query, alias } => {
            out.push('(');
            write_query(out, query)?;
            out.push(')');
            if let Some(a) = alias {
                out.push_str(" AS ");
                write_ident(out, a)?;
            }
        }
    }
    Ok(())
}

fn write_expr_list(out: &mut String, list: &[Expr]) -> fmt::Result {
    for (i, e) in list.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, e)?;
    }
    Ok(())
}

/// Writes `e`, parenthesized when it binds looser than `min_prec`.
fn write_operand(out: &mut String, e: &Expr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        out.push('(');
        write_expr(out, e)?;
        out.push(')');
        Ok(())
    } else {
        write_expr(out, e)
    }
}

fn write_literal(out: &mut String, lit: &Literal) -> fmt::Result {
    match lit {
        Literal::Number(n) => out.write_str(n),
        Literal::String(s) => write!(out, "'{}'", s.replace('\'', "''")),
        Literal::Blob(b) => write!(out, "X'{b}'"),
        Literal::Null => out.write_str("NULL"),
        Literal::CurrentDate => out.write_str("CURRENT_DATE"),
        Literal::CurrentTime => out.write_str("CURRENT_TIME"),
        Literal::CurrentTimestamp => out.write_str("CURRENT_TIMESTAMP"),
    }
}

fn write_expr(out: &mut String, e: &Expr) -> fmt::Result {
    match e {
        Expr::Literal(lit) => write_literal(out, lit),
        Expr::Column { table, name } => {
            if let Some(t) = table {
                write_ident(out, t)?;
                out.push('.');
            }
            write_ident(out, name)
        }
        Expr::Unary { op, expr } => match op {
            UnaryOp::Not => {
                out.push_str("NOT ");
                write_operand(out, expr, NOT_PRECEDENCE)
            }
            UnaryOp::Neg | UnaryOp::Plus | UnaryOp::BitNot => {
                out.push(match op {
                    UnaryOp::Neg => '-',
                    UnaryOp::Plus => '+',
                    _ => '~',
                });
                // keep `- -x` from turning into a `--` comment
                if matches!(
                    **expr,
                    Expr::Unary {
                        op: UnaryOp::Neg | UnaryOp::Plus,
                        ..
                    }
                ) {
                    out.push(' ');
                }
                write_operand(out, expr, UNARY_PRECEDENCE)
            }
        },
        Expr::Binary { left, op, right } => {
            let p = op.precedence();
            write_operand(out, left, p)?;
            write!(out, " {} ", op.as_str())?;
            write_operand(out, right, p + 1)
        }
        Expr::Pattern {
            expr,
            negated,
            op,
            pattern,
            escape,
        } => {
            write_operand(out, expr, PATTERN_PRECEDENCE)?;
            if *negated {
                out.push_str(" NOT");
            }
            out.push_str(match op {
                PatternOp::Like => " LIKE ",
                PatternOp::Glob => " GLOB ",
            });
            write_operand(out, pattern, PATTERN_PRECEDENCE + 1)?;
            if let Some(esc) = escape {
                out.push_str(" ESCAPE ");
                write_operand(out, esc, PATTERN_PRECEDENCE + 1)?;
            }
            Ok(())
        }
        Expr::Between {
            expr,
            negated,
            low,
            high,
        } => {
            write_operand(out, expr, PATTERN_PRECEDENCE)?;
            out.push_str(if *negated { " NOT BETWEEN " } else { " BETWEEN " });
            write_operand(out, low, PATTERN_PRECEDENCE + 1)?;
            out.push_str(" AND ");
            write_operand(out, high, PATTERN_PRECEDENCE + 1)
        }
        Expr::InList { expr, negated, list } => {
            write_operand(out, expr, PATTERN_PRECEDENCE)?;
            out.push_str(if *negated { " NOT IN (" } else { " IN (" });
            write_expr_list(out, list)?;
            out.push(')');
            Ok(())
        }
        Expr::InSubquery { expr, negated, query } => {
            write_operand(out, expr, PATTERN_PRECEDENCE)?;
            out.push_str(if *negated { " NOT IN (" } else { " IN (" });
            write_query(out, query)?;
            out.push(')');
            Ok(())
        }
        Expr::Exists(q) => {
            out.push_str("EXISTS (");
            write_query(out, q)?;
            out.push(')');
            Ok(())
        }
        Expr::Subquery(q) => {
            out.push('(');
            write_query(out, q)?;
            out.push(')');
            Ok(())
        }
        Expr::Case {
            operand,
            branches,
            otherwise,
        } => {
            out.push_str("CASE");
            if let Some(op) = operand {
                out.push(' ');
                write_expr(out, op)?;
            }
            for (cond, result) in branches {
                out.push_str(" WHEN ");
                write_expr(out, cond)?;
                out.push_str(" THEN ");
                write_expr(out, result)?;
            }
            if let Some(e) = otherwise {
                out.push_str(" ELSE ");
                write_expr(out, e)?;
            }
            out.push_str(" END");
            Ok(())
        }
        Expr::Cast { expr, type_name } => {
            out.push_str("CAST(");
            write_expr(out, expr)?;
            out.push_str(" AS ");
            out.push_str(&type_name.words.join(" "));
            if !type_name.args.is_empty() {
                write!(out, "({})", type_name.args.join(", "))?;
            }
            out.push(')');
            Ok(())
        }
        Expr::Function { name, args } => {
            write_ident(out, name)?;
            out.push('(');
            match args {
                FunctionArgs::Star => out.push('*'),
                FunctionArgs::List { distinct, args } => {
                    if *distinct {
                        out.push_str("DISTINCT ");
                    }
                    write_expr_list(out, args)?;
                }
            }
            out.push(')');
            Ok(())
        }
        Expr::Nested(inner) => {
            out.push('(');
            write_expr(out, inner)?;
            out.push(')');
            Ok(())
        }
    }
}

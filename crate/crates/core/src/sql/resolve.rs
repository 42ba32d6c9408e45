//! Scope-aware classification of identifier nodes.
//!
//! Every identifier in a query is exactly one of: table name, column name,
//! alias definition, alias reference, CTE name or function name. The
//! classification only needs the query itself, plus a predicate telling
//! whether a bare name is a known schema column; that predicate settles the
//! one case SQLite resolves by schema lookup (a select-list alias that is
//! also a column name, referenced from WHERE/GROUP BY/HAVING).

use super::ast::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IdentRole {
    TableName,
    ColumnName,
    AliasDefinition,
    AliasReference,
    CteName,
    FunctionName,
}

/// What the walker knows about an identifier when it reports it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentContext {
    pub role: IdentRole,
    /// For column names: the base table the reference resolves to, when the
    /// reference is qualified by that table or by an alias of it. For
    /// unresolved qualifiers, the qualifier text itself.
    pub table: Option<String>,
    /// Whether the identifier was written with a qualifier (`T1.age`).
    pub qualified: bool,
}

#[derive(Debug, Clone)]
enum SourceKind {
    Base {
        table: String,
    },
    /// Derived table or CTE, with its explicitly aliased output columns.
    Derived {
        outputs: Vec<String>,
        cte: bool,
    },
}

#[derive(Debug, Clone)]
struct Source {
    /// Name the source is referred to by (alias, else table or CTE name).
    name: Option<String>,
    aliased: bool,
    kind: SourceKind,
}

#[derive(Debug, Clone, Default)]
struct Scope {
    sources: Vec<Source>,
    select_aliases: Vec<String>,
    /// Unaliased result columns that pass an alias of an inner query through.
    passthrough: Vec<String>,
}

#[derive(Debug, Clone)]
struct CteInfo {
    name: String,
    outputs: Vec<String>,
}

/// Calls `f` on every identifier node of `query`, in a deterministic
/// pre-order, with its classification. `is_column` reports whether a bare
/// name is a schema column.
pub fn visit_identifiers<E>(
    query: &mut Query,
    is_column: &dyn Fn(&str) -> bool,
    f: &mut dyn FnMut(&mut Ident, &IdentContext) -> Result<(), E>,
) -> Result<(), E> {
    let mut w = Walker {
        is_column,
        f,
        ctes: Vec::new(),
        scopes: Vec::new(),
    };
    w.query(query).map(drop)
}

/// Names introduced by alias definitions anywhere in `query`.
pub fn alias_definitions(query: &Query) -> Vec<String> {
    let mut q = query.clone();
    let mut out = Vec::new();
    let _ = visit_identifiers::<()>(&mut q, &|_| false, &mut |id, cx| {
        if matches!(cx.role, IdentRole::AliasDefinition | IdentRole::CteName) {
            out.push(id.value.clone());
        }
        Ok(())
    });
    out
}

/// Explicitly aliased output column names of a query.
fn output_aliases(q: &Query) -> Vec<String> {
    q.body
        .first
        .columns
        .iter()
        .filter_map(|c| match c {
            ResultColumn::Expr { alias: Some(a), .. } => Some(a.value.clone()),
            _ => None,
        })
        .collect()
}

fn contains(names: &[String], name: &str) -> bool {
    names.iter().any(|n| n.eq_ignore_ascii_case(name))
}

struct Walker<'a, E> {
    is_column: &'a dyn Fn(&str) -> bool,
    f: &'a mut dyn FnMut(&mut Ident, &IdentContext) -> Result<(), E>,
    ctes: Vec<CteInfo>,
    scopes: Vec<Scope>,
}

impl<E> Walker<'_, E> {
    fn emit(&mut self, ident: &mut Ident, role: IdentRole, table: Option<String>, qualified: bool) -> Result<(), E> {
        (self.f)(ident, &IdentContext { role, table, qualified })
    }

    /// Walks `q` and returns the names its result columns are known by
    /// other than schema column names.
    fn query(&mut self, q: &mut Query) -> Result<Vec<String>, E> {
        let cte_mark = self.ctes.len();
        if let Some(with) = &mut q.with {
            for cte in &mut with.ctes {
                let explicit: Vec<String> = cte.columns.iter().map(|c| c.value.clone()).collect();
                let mut info = CteInfo {
                    name: cte.name.value.clone(),
                    outputs: if explicit.is_empty() {
                        output_aliases(&cte.query)
                    } else {
                        explicit.clone()
                    },
                };
                if with.recursive {
                    self.ctes.push(info);
                    let outputs = self.query(&mut cte.query)?;
                    if explicit.is_empty() {
                        self.ctes.last_mut().expect("pushed above").outputs = outputs;
                    }
                } else {
                    let outputs = self.query(&mut cte.query)?;
                    if explicit.is_empty() {
                        info.outputs = outputs;
                    }
                    self.ctes.push(info);
                }
                self.emit(&mut cte.name, IdentRole::CteName, None, false)?;
                for col in &mut cte.columns {
                    self.emit(col, IdentRole::AliasDefinition, None, false)?;
                }
            }
        }

        let first_scope = self.select(&mut q.body.first)?;
        let mut outputs = first_scope.select_aliases.clone();
        outputs.extend(first_scope.passthrough.iter().cloned());
        for (_, s) in &mut q.body.rest {
            self.select(s)?;
        }
        if !q.order_by.is_empty() {
            self.scopes.push(first_scope);
            for item in &mut q.order_by {
                self.expr(&mut item.expr, true)?;
            }
            self.scopes.pop();
        }
        if let Some(limit) = &mut q.limit {
            self.expr(&mut limit.count, false)?;
            if let Some(off) = &mut limit.offset {
                self.expr(off, false)?;
            }
        }
        self.ctes.truncate(cte_mark);
        Ok(outputs)
    }

    fn select(&mut self, s: &mut Select) -> Result<Scope, E> {
        let mut scope = Scope {
            sources: Vec::new(),
            select_aliases: s
                .columns
                .iter()
                .filter_map(|c| match c {
                    ResultColumn::Expr { alias: Some(a), .. } => Some(a.value.clone()),
                    _ => None,
                })
                .collect(),
            passthrough: Vec::new(),
        };
        if let Some(from) = &mut s.from {
            self.factor(&mut from.first, &mut scope)?;
            for join in &mut from.joins {
                self.factor(&mut join.factor, &mut scope)?;
            }
        }
        self.scopes.push(scope);

        for col in &mut s.columns {
            match col {
                ResultColumn::Star => {}
                ResultColumn::QualifiedStar(t) => {
                    let (role, _) = self.qualifier_role(&t.value);
                    self.emit(t, role, None, false)?;
                }
                ResultColumn::Expr {
                    expr: Expr::Column { table, name },
                    alias: None,
                } => {
                    if self.column(table, name, false)? == IdentRole::AliasReference {
                        let value = name.value.clone();
                        self.scopes.last_mut().expect("pushed above").passthrough.push(value);
                    }
                }
                ResultColumn::Expr { expr, alias } => {
                    self.expr(expr, false)?;
                    if let Some(a) = alias {
                        self.emit(a, IdentRole::AliasDefinition, None, false)?;
                    }
                }
            }
        }
        if let Some(from) = &mut s.from {
            for join in &mut from.joins {
                match &mut join.constraint {
                    Some(JoinConstraint::On(e)) => self.expr(e, false)?,
                    Some(JoinConstraint::Using(cols)) => {
                        for c in cols {
                            self.emit(c, IdentRole::ColumnName, None, false)?;
                        }
                    }
                    None => {}
                }
            }
        }
        if let Some(e) = &mut s.selection {
            self.expr(e, false)?;
        }
        for e in &mut s.group_by {
            self.expr(e, false)?;
        }
        if let Some(e) = &mut s.having {
            self.expr(e, false)?;
        }
        Ok(self.scopes.pop().expect("pushed above"))
    }

    fn factor(&mut self, f: &mut TableFactor, scope: &mut Scope) -> Result<(), E> {
        match f {
            TableFactor::Table { name, alias } => {
                let cte = self.ctes.iter().rev().find(|c| name.matches(&c.name)).cloned();
                let source = Source {
                    name: Some(alias.as_ref().unwrap_or(name).value.clone()),
                    aliased: alias.is_some(),
                    kind: match &cte {
                        Some(c) => SourceKind::Derived {
                            outputs: c.outputs.clone(),
                            cte: true,
                        },
                        None => SourceKind::Base {
                            table: name.value.clone(),
                        },
                    },
                };
                scope.sources.push(source);
                let role = if cte.is_some() {
                    IdentRole::CteName
                } else {
                    IdentRole::TableName
                };
                self.emit(name, role, None, false)?;
                if let Some(a) = alias {
                    self.emit(a, IdentRole::AliasDefinition, None, false)?;
                }
            }
            TableFactor::Derived { query, alias } => {
                let outputs = self.query(query)?;
                scope.sources.push(Source {
                    name: alias.as_ref().map(|a| a.value.clone()),
                    aliased: alias.is_some(),
                    kind: SourceKind::Derived { outputs, cte: false },
                });
                if let Some(a) = alias {
                    self.emit(a, IdentRole::AliasDefinition, None, false)?;
                }
            }
        }
        Ok(())
    }

    fn find_source(&self, qualifier: &str) -> Option<&Source> {
        self.scopes.iter().rev().find_map(|scope| {
            scope
                .sources
                .iter()
                .find(|s| s.name.as_deref().is_some_and(|n| n.eq_ignore_ascii_case(qualifier)))
        })
    }

    /// Role of a qualifier, plus the source it resolves to.
    fn qualifier_role(&self, qualifier: &str) -> (IdentRole, Option<Source>) {
        match self.find_source(qualifier) {
            Some(src) => {
                let role = match (&src.kind, src.aliased) {
                    (_, true) => IdentRole::AliasReference,
                    (SourceKind::Base { .. }, false) => IdentRole::TableName,
                    (SourceKind::Derived { cte: true, .. }, false) => IdentRole::CteName,
                    (SourceKind::Derived { cte: false, .. }, false) => IdentRole::AliasReference,
                };
                (role, Some(src.clone()))
            }
            None => (IdentRole::TableName, None),
        }
    }

    fn column(&mut self, table: &mut Option<Ident>, name: &mut Ident, in_order_by: bool) -> Result<IdentRole, E> {
        if let Some(q) = table {
            let (q_role, source) = self.qualifier_role(&q.value);
            let (role, context) = match source.map(|s| s.kind) {
                Some(SourceKind::Base { table }) => (IdentRole::ColumnName, Some(table)),
                Some(SourceKind::Derived { outputs, .. }) => {
                    if contains(&outputs, &name.value) {
                        (IdentRole::AliasReference, None)
                    } else {
                        (IdentRole::ColumnName, None)
                    }
                }
                None => (IdentRole::ColumnName, Some(q.value.clone())),
            };
            self.emit(q, q_role, None, false)?;
            self.emit(name, role, context, true)?;
            return Ok(role);
        }

        let current = self.scopes.last();
        let select_alias = current.is_some_and(|s| contains(&s.select_aliases, &name.value));
        let derived_output = self.scopes.iter().any(|scope| {
            scope.sources.iter().any(|s| match &s.kind {
                SourceKind::Derived { outputs, .. } => contains(outputs, &name.value),
                SourceKind::Base { .. } => false,
            })
        });
        let role =
            if (in_order_by && select_alias) || derived_output || (select_alias && !(self.is_column)(&name.value)) {
                IdentRole::AliasReference
            } else {
                IdentRole::ColumnName
            };
        self.emit(name, role, None, false)?;
        Ok(role)
    }

    fn expr(&mut self, e: &mut Expr, in_order_by: bool) -> Result<(), E> {
        match e {
            Expr::Literal(_) => Ok(()),
            Expr::Column { table, name } => self.column(table, name, in_order_by).map(drop),
            Expr::Unary { expr, .. } | Expr::Nested(expr) => self.expr(expr, in_order_by),
            Expr::Cast { expr, .. } => self.expr(expr, in_order_by),
            Expr::Binary { left, right, .. } => {
                self.expr(left, in_order_by)?;
                self.expr(right, in_order_by)
            }
            Expr::Pattern {
                expr, pattern, escape, ..
            } => {
                self.expr(expr, in_order_by)?;
                self.expr(pattern, in_order_by)?;
                if let Some(esc) = escape {
                    self.expr(esc, in_order_by)?;
                }
                Ok(())
            }
            Expr::Between { expr, low, high, .. } => {
                self.expr(expr, in_order_by)?;
                self.expr(low, in_order_by)?;
                self.expr(high, in_order_by)
            }
            Expr::InList { expr, list, .. } => {
                self.expr(expr, in_order_by)?;
                for item in list {
                    self.expr(item, in_order_by)?;
                }
                Ok(())
            }
            Expr::InSubquery { expr, query, .. } => {
                self.expr(expr, in_order_by)?;
                self.query(query).map(drop)
            }
            Expr::Exists(q) | Expr::Subquery(q) => self.query(q).map(drop),
            Expr::Case {
                operand,
                branches,
                otherwise,
            } => {
                if let Some(op) = operand {
                    self.expr(op, in_order_by)?;
                }
                for (c, r) in branches {
                    self.expr(c, in_order_by)?;
                    self.expr(r, in_order_by)?;
                }
                if let Some(o) = otherwise {
                    self.expr(o, in_order_by)?;
                }
                Ok(())
            }
            Expr::Function { name, args } => {
                self.emit(name, IdentRole::FunctionName, None, false)?;
                if let FunctionArgs::List { args, .. } = args {
                    for a in args {
                        self.expr(a, in_order_by)?;
                    }
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::parse_sql;

    fn roles(sql: &str) -> Vec<(String, IdentRole)> {
        let mut q = parse_sql(sql).unwrap();
        let mut out = Vec::new();
        visit_identifiers::<()>(&mut q, &|_| false, &mut |id, cx| {
            out.push((id.value.clone(), cx.role));
            Ok(())
        })
        .unwrap();
        out
    }

    use IdentRole::*;

    #[test]
    fn alias_qualified_column() {
        assert_eq!(
            roles("SELECT T1.age FROM Users AS T1 WHERE T1.name = 'age'"),
            vec![
                ("Users".into(), TableName),
                ("T1".into(), AliasDefinition),
                ("T1".into(), AliasReference),
                ("age".into(), ColumnName),
                ("T1".into(), AliasReference),
                ("name".into(), ColumnName),
            ]
        );
    }

    #[test]
    fn table_qualified_column() {
        assert_eq!(
            roles("SELECT Users.age FROM Users"),
            vec![
                ("Users".into(), TableName),
                ("Users".into(), TableName),
                ("age".into(), ColumnName),
            ]
        );
    }

    #[test]
    fn cte_names_and_function_names() {
        assert_eq!(
            roles("WITH c AS (SELECT x FROM t) SELECT COUNT(x) FROM c"),
            vec![
                ("t".into(), TableName),
                ("x".into(), ColumnName),
                ("c".into(), CteName),
                ("c".into(), CteName),
                ("COUNT".into(), FunctionName),
                ("x".into(), ColumnName),
            ]
        );
    }

    #[test]
    fn order_by_alias_and_derived_outputs() {
        let r = roles("SELECT s.n FROM (SELECT COUNT(*) AS n FROM t) AS s ORDER BY n");
        assert!(r.contains(&("n".into(), AliasDefinition)));
        assert_eq!(
            r.iter().filter(|(v, role)| v == "n" && *role == AliasReference).count(),
            2
        );
    }

    #[test]
    fn select_alias_in_having_prefers_schema_column() {
        let sql = "SELECT COUNT(*) AS cnt FROM t GROUP BY a HAVING cnt > 1";
        let mut q = parse_sql(sql).unwrap();
        let mut seen = None;
        visit_identifiers::<()>(&mut q, &|n| n == "cnt", &mut |id, cx| {
            if id.value == "cnt" && cx.role != AliasDefinition {
                seen = Some(cx.role);
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, Some(ColumnName));
        assert!(roles(sql).contains(&("cnt".into(), AliasReference)));
    }

    #[test]
    fn correlated_subquery_sees_outer_alias() {
        let r = roles("SELECT a FROM t AS o WHERE EXISTS (SELECT 1 FROM u WHERE u.x = o.a)");
        assert!(r.contains(&("o".into(), AliasReference)));
        assert!(r.contains(&("u".into(), TableName)));
    }
}

//! Recursive-descent parser producing [`Query`] trees.

use std::collections::BTreeSet;

use super::ast::*;
use super::lexer::{is_keyword, tokenize, QuoteStyle, Token, TokenKind};
use super::SqlError;

/// Scalar and aggregate functions accepted by the benchmark dialect. `CAST`
/// is handled by the grammar itself.
pub const BENCHMARK_FUNCTIONS: &[&str] = &[
    "ABS", "AVG", "COALESCE", "COUNT", "DATE", "DATETIME", "INSTR", "LENGTH", "LOWER", "MAX", "MIN", "NULLIF", "ROUND",
    "STRFTIME", "SUBSTR", "SUM", "TRIM", "UPPER",
];

/// The accepted SQL surface. Anything outside it is reported as
/// [`SqlError::Unsupported`] rather than guessed at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialect {
    functions: BTreeSet<String>,
}

impl Default for Dialect {
    fn default() -> Self {
        Self::benchmark()
    }
}

impl Dialect {
    pub fn benchmark() -> Self {
        Self {
            functions: BENCHMARK_FUNCTIONS.iter().map(|f| f.to_string()).collect(),
        }
    }

    /// Accepts one more function name (case-insensitive).
    pub fn allow_function(mut self, name: &str) -> Self {
        self.functions.insert(name.to_ascii_uppercase());
        self
    }

    pub fn allows_function(&self, name: &str) -> bool {
        self.functions.contains(&name.to_ascii_uppercase())
    }
}

pub fn parse_sql(text: &str) -> Result<Query, SqlError> {
    parse_sql_with(text, &Dialect::default())
}

pub fn parse_sql_with(text: &str, dialect: &Dialect) -> Result<Query, SqlError> {
    let mut p = Parser::new(text, dialect)?;
    if p.tokens.is_empty() {
        return Err(p.expected("SELECT"));
    }
    if let Some(TokenKind::Word(w)) = p.peek_kind() {
        let upper = w.to_ascii_uppercase();
        if matches!(
            upper.as_str(),
            "INSERT" | "UPDATE" | "DELETE" | "CREATE" | "DROP" | "ALTER" | "PRAGMA" | "REPLACE" | "VALUES"
        ) {
            return Err(p.unsupported(&format!("{upper} statement")));
        }
    }
    let query = p.query()?;
    p.finish()?;
    Ok(query)
}

/// Parses `CREATE [TEMP] VIEW [IF NOT EXISTS] name [(columns)] AS query`.
pub fn parse_create_view(text: &str, dialect: &Dialect) -> Result<CreateView, SqlError> {
    let mut p = Parser::new(text, dialect)?;
    p.expect_kw("CREATE")?;
    let temporary = p.eat_word("TEMP") || p.eat_word("TEMPORARY");
    p.expect_kw("VIEW")?;
    let if_not_exists = if p.eat_word("IF") {
        p.expect_kw("NOT")?;
        p.expect_kw("EXISTS")?;
        true
    } else {
        false
    };
    let name = p.ident("view name")?;
    if p.at_punct(".") {
        return Err(p.unsupported("schema-qualified view name"));
    }
    let columns = if p.eat_punct("(") { p.ident_list()? } else { Vec::new() };
    p.expect_kw("AS")?;
    let query = p.query()?;
    p.finish()?;
    Ok(CreateView {
        temporary,
        if_not_exists,
        name,
        columns,
        query,
    })
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
    dialect: &'a Dialect,
}

impl<'a> Parser<'a> {
    fn new(text: &str, dialect: &'a Dialect) -> Result<Self, SqlError> {
        Ok(Self {
            tokens: tokenize(text)?,
            pos: 0,
            end: text.len(),
            dialect,
        })
    }

    // ---- token helpers -------------------------------------------------

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self) -> Option<&TokenKind> {
        self.peek().map(|t| &t.kind)
    }

    fn peek_nth(&self, n: usize) -> Option<&Token> {
        self.tokens.get(self.pos + n)
    }

    fn advance(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn position(&self) -> usize {
        self.peek().map_or(self.end, |t| t.span.start)
    }

    fn found(&self) -> String {
        self.peek()
            .map_or_else(|| "end of input".to_string(), |t| t.kind.to_string())
    }

    fn expected(&self, what: &str) -> SqlError {
        SqlError::Syntax {
            position: self.position(),
            expected: what.to_string(),
            found: self.found(),
        }
    }

    fn unsupported(&self, name: &str) -> SqlError {
        SqlError::Unsupported {
            name: name.to_string(),
            position: self.position(),
        }
    }

    fn at_kw(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.is_keyword(kw))
    }

    fn at_kw_nth(&self, n: usize, kw: &str) -> bool {
        self.peek_nth(n).is_some_and(|t| t.is_keyword(kw))
    }

    fn at_punct(&self, p: &str) -> bool {
        self.peek().is_some_and(|t| t.is_punct(p))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    /// Same as `eat_kw`, for non-reserved words such as `TEMP`.
    fn eat_word(&mut self, word: &str) -> bool {
        self.eat_kw(word)
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SqlError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.expected(kw))
        }
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.at_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), SqlError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.expected(&format!("'{p}'")))
        }
    }

    fn finish(&mut self) -> Result<(), SqlError> {
        self.eat_punct(";");
        if self.peek().is_some() {
            if self.at_kw("COLLATE") {
                return Err(self.unsupported("COLLATE"));
            }
            return Err(self.expected("end of statement"));
        }
        Ok(())
    }

    fn at_ident(&self) -> bool {
        match self.peek_kind() {
            Some(TokenKind::Word(w)) => !is_keyword(w),
            Some(TokenKind::Quoted(..)) => true,
            _ => false,
        }
    }

    fn ident(&mut self, what: &str) -> Result<Ident, SqlError> {
        match self.peek_kind() {
            Some(TokenKind::Word(w)) if !is_keyword(w) => {}
            Some(TokenKind::Quoted(..)) => {}
            _ => return Err(self.expected(what)),
        }
        let tok = self.advance().expect("checked above");
        let (value, quote) = match tok.kind {
            TokenKind::Word(w) => (w, QuoteStyle::Bare),
            TokenKind::Quoted(q, style) => (q, style),
            _ => unreachable!(),
        };
        Ok(Ident {
            value,
            quote,
            span: Some(tok.span),
        })
    }

    /// Comma-separated identifiers up to and including `)`.
    fn ident_list(&mut self) -> Result<Vec<Ident>, SqlError> {
        let mut out = vec![self.ident("column name")?];
        while self.eat_punct(",") {
            out.push(self.ident("column name")?);
        }
        self.expect_punct(")")?;
        Ok(out)
    }

    /// `[AS] alias`. String literals are accepted after an explicit AS.
    fn alias(&mut self) -> Result<Option<Ident>, SqlError> {
        if self.eat_kw("AS") {
            if let Some(TokenKind::String(_)) = self.peek_kind() {
                let tok = self.advance().unwrap();
                let TokenKind::String(s) = tok.kind else { unreachable!() };
                return Ok(Some(Ident {
                    value: s,
                    quote: QuoteStyle::Single,
                    span: Some(tok.span),
                }));
            }
            return self.ident("alias").map(Some);
        }
        if self.at_ident() {
            return self.ident("alias").map(Some);
        }
        Ok(None)
    }

    // ---- statements ----------------------------------------------------

    fn query(&mut self) -> Result<Query, SqlError> {
        let with = if self.eat_kw("WITH") {
            let recursive = self.eat_word("RECURSIVE");
            let mut ctes = Vec::new();
            loop {
                let name = self.ident("common table expression name")?;
                let columns = if self.eat_punct("(") {
                    self.ident_list()?
                } else {
                    Vec::new()
                };
                self.expect_kw("AS")?;
                if self.at_kw("NOT") || self.at_word("MATERIALIZED") {
                    return Err(self.unsupported("MATERIALIZED hint"));
                }
                self.expect_punct("(")?;
                let query = self.query()?;
                self.expect_punct(")")?;
                ctes.push(Cte {
                    name,
                    columns,
                    query: Box::new(query),
                });
                if !self.eat_punct(",") {
                    break;
                }
            }
            Some(With { recursive, ctes })
        } else {
            None
        };

        let first = self.select()?;
        let mut rest = Vec::new();
        loop {
            let op = if self.eat_kw("UNION") {
                if self.eat_kw("ALL") {
                    CompoundOp::UnionAll
                } else {
                    CompoundOp::Union
                }
            } else if self.eat_kw("INTERSECT") {
                CompoundOp::Intersect
            } else if self.eat_kw("EXCEPT") {
                CompoundOp::Except
            } else {
                break;
            };
            rest.push((op, self.select()?));
        }

        let mut order_by = Vec::new();
        if self.eat_kw("ORDER") {
            self.expect_kw("BY")?;
            loop {
                let expr = self.expr()?;
                let direction = if self.eat_kw("ASC") {
                    Some(Direction::Asc)
                } else if self.eat_kw("DESC") {
                    Some(Direction::Desc)
                } else {
                    None
                };
                if self.at_word("NULLS") {
                    return Err(self.unsupported("NULLS FIRST/LAST"));
                }
                order_by.push(OrderItem { expr, direction });
                if !self.eat_punct(",") {
                    break;
                }
            }
        }

        let limit = if self.eat_kw("LIMIT") {
            let first = self.expr()?;
            if self.eat_kw("OFFSET") {
                Some(Limit {
                    count: first,
                    offset: Some(self.expr()?),
                    comma_form: false,
                })
            } else if self.eat_punct(",") {
                Some(Limit {
                    count: self.expr()?,
                    offset: Some(first),
                    comma_form: true,
                })
            } else {
                Some(Limit {
                    count: first,
                    offset: None,
                    comma_form: false,
                })
            }
        } else {
            None
        };

        Ok(Query {
            with,
            body: SetExpr {
                first: Box::new(first),
                rest,
            },
            order_by,
            limit,
        })
    }

    fn at_word(&self, word: &str) -> bool {
        self.at_kw(word)
    }

    fn select(&mut self) -> Result<Select, SqlError> {
        if self.at_kw("VALUES") {
            return Err(self.unsupported("VALUES clause"));
        }
        if self.at_punct("(") {
            return Err(self.unsupported("parenthesized compound member"));
        }
        self.expect_kw("SELECT")?;
        let quantifier = if self.eat_kw("DISTINCT") {
            Quantifier::Distinct
        } else if self.eat_kw("ALL") {
            Quantifier::All
        } else {
            Quantifier::None
        };

        let mut columns = Vec::new();
        loop {
            columns.push(self.result_column()?);
            if !self.eat_punct(",") {
                break;
            }
        }

        let from = if self.eat_kw("FROM") { Some(self.from()?) } else { None };
        let selection = if self.eat_kw("WHERE") { Some(self.expr()?) } else { None };
        let mut group_by = Vec::new();
        let mut having = None;
        if self.eat_kw("GROUP") {
            self.expect_kw("BY")?;
            loop {
                group_by.push(self.expr()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        if self.eat_kw("HAVING") {
            having = Some(self.expr()?);
        }
        if self.at_kw("WINDOW") {
            return Err(self.unsupported("WINDOW clause"));
        }
        Ok(Select {
            quantifier,
            columns,
            from,
            selection,
            group_by,
            having,
        })
    }

    fn result_column(&mut self) -> Result<ResultColumn, SqlError> {
        if self.eat_punct("*") {
            return Ok(ResultColumn::Star);
        }
        if self.at_ident()
            && self.peek_nth(1).is_some_and(|t| t.is_punct("."))
            && self.peek_nth(2).is_some_and(|t| t.is_punct("*"))
        {
            let table = self.ident("table name")?;
            self.pos += 2;
            return Ok(ResultColumn::QualifiedStar(table));
        }
        let expr = self.expr()?;
        let alias = self.alias()?;
        Ok(ResultColumn::Expr { expr, alias })
    }

    fn from(&mut self) -> Result<From, SqlError> {
        let first = self.table_factor()?;
        let mut joins = Vec::new();
        loop {
            let kind = if self.eat_punct(",") {
                JoinKind::Comma
            } else if self.at_kw("NATURAL") {
                return Err(self.unsupported("NATURAL JOIN"));
            } else if self.eat_kw("JOIN") {
                JoinKind::Plain
            } else if self.eat_kw("INNER") {
                self.expect_kw("JOIN")?;
                JoinKind::Inner
            } else if self.eat_kw("CROSS") {
                self.expect_kw("JOIN")?;
                JoinKind::Cross
            } else if let Some((plain, outer)) = self.outer_join_kind() {
                if self.eat_kw("OUTER") {
                    self.expect_kw("JOIN")?;
                    outer
                } else {
                    self.expect_kw("JOIN")?;
                    plain
                }
            } else {
                break;
            };
            let factor = self.table_factor()?;
            let constraint = if self.eat_kw("ON") {
                Some(JoinConstraint::On(self.expr()?))
            } else if self.eat_kw("USING") {
                self.expect_punct("(")?;
                Some(JoinConstraint::Using(self.ident_list()?))
            } else {
                None
            };
            joins.push(Join {
                kind,
                factor,
                constraint,
            });
        }
        Ok(From { first, joins })
    }

    fn outer_join_kind(&mut self) -> Option<(JoinKind, JoinKind)> {
        let kinds = if self.at_kw("LEFT") {
            (JoinKind::Left, JoinKind::LeftOuter)
        } else if self.at_kw("RIGHT") {
            (JoinKind::Right, JoinKind::RightOuter)
        } else if self.at_kw("FULL") {
            (JoinKind::Full, JoinKind::FullOuter)
        } else {
            return None;
        };
        self.pos += 1;
        Some(kinds)
    }

    fn table_factor(&mut self) -> Result<TableFactor, SqlError> {
        if self.eat_punct("(") {
            if !(self.at_kw("SELECT") || self.at_kw("WITH")) {
                return Err(self.unsupported("parenthesized join"));
            }
            let query = self.query()?;
            self.expect_punct(")")?;
            let alias = self.alias()?;
            return Ok(TableFactor::Derived {
                query: Box::new(query),
                alias,
            });
        }
        let name = self.ident("table name")?;
        if self.at_punct(".") {
            return Err(self.unsupported("schema-qualified table name"));
        }
        if self.at_punct("(") {
            return Err(self.unsupported("table-valued function"));
        }
        let alias = self.alias()?;
        if self.at_kw("INDEXED") || (self.at_kw("NOT") && self.at_kw_nth(1, "INDEXED")) {
            return Err(self.unsupported("INDEXED BY"));
        }
        Ok(TableFactor::Table { name, alias })
    }

    // ---- expressions ---------------------------------------------------

    fn expr(&mut self) -> Result<Expr, SqlError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.and_expr()?;
        while self.eat_kw("OR") {
            let right = self.and_expr()?;
            left = binary(left, BinaryOp::Or, right);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.not_expr()?;
        while self.eat_kw("AND") {
            let right = self.not_expr()?;
            left = binary(left, BinaryOp::And, right);
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<Expr, SqlError> {
        if self.eat_kw("NOT") {
            let expr = self.not_expr()?;
            return Ok(Expr::Unary {
                op: UnaryOp::Not,
                expr: Box::new(expr),
            });
        }
        self.equality_expr()
    }

    fn equality_expr(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.comparison_expr()?;
        loop {
            let op = match self.peek_kind() {
                Some(TokenKind::Punct("=")) => Some(BinaryOp::Eq),
                Some(TokenKind::Punct("==")) => Some(BinaryOp::EqEq),
                Some(TokenKind::Punct("!=")) => Some(BinaryOp::NotEq),
                Some(TokenKind::Punct("<>")) => Some(BinaryOp::LtGt),
                _ => None,
            };
            if let Some(op) = op {
                self.pos += 1;
                let right = self.comparison_expr()?;
                left = binary(left, op, right);
                continue;
            }
            if self.eat_kw("IS") {
                let op = if self.eat_kw("NOT") {
                    BinaryOp::IsNot
                } else {
                    BinaryOp::Is
                };
                if self.at_word("DISTINCT") {
                    return Err(self.unsupported("IS DISTINCT FROM"));
                }
                let right = self.comparison_expr()?;
                left = binary(left, op, right);
                continue;
            }
            if self.at_kw("ISNULL") || self.at_kw("NOTNULL") {
                return Err(self.unsupported("ISNULL/NOTNULL postfix"));
            }
            if self.at_kw("MATCH") || self.at_kw("REGEXP") {
                return Err(self.unsupported("MATCH/REGEXP"));
            }
            let negated = self.at_kw("NOT")
                && self.peek_nth(1).is_some_and(|t| {
                    ["IN", "LIKE", "GLOB", "BETWEEN", "NULL", "MATCH", "REGEXP"]
                        .iter()
                        .any(|k| t.is_keyword(k))
                });
            if negated {
                if self.at_kw_nth(1, "NULL") {
                    return Err(self.unsupported("NOT NULL postfix"));
                }
                if self.at_kw_nth(1, "MATCH") || self.at_kw_nth(1, "REGEXP") {
                    return Err(self.unsupported("MATCH/REGEXP"));
                }
                self.pos += 1;
            }
            if self.eat_kw("IN") {
                left = self.in_rhs(left, negated)?;
            } else if self.at_kw("LIKE") || self.at_kw("GLOB") {
                let op = if self.eat_kw("LIKE") {
                    PatternOp::Like
                } else {
                    self.pos += 1;
                    PatternOp::Glob
                };
                let pattern = self.comparison_expr()?;
                let escape = if self.eat_kw("ESCAPE") {
                    Some(Box::new(self.comparison_expr()?))
                } else {
                    None
                };
                left = Expr::Pattern {
                    expr: Box::new(left),
                    negated,
                    op,
                    pattern: Box::new(pattern),
                    escape,
                };
            } else if self.eat_kw("BETWEEN") {
                let low = self.comparison_expr()?;
                self.expect_kw("AND")?;
                let high = self.comparison_expr()?;
                left = Expr::Between {
                    expr: Box::new(left),
                    negated,
                    low: Box::new(low),
                    high: Box::new(high),
                };
            } else {
                debug_assert!(!negated);
                break;
            }
        }
        Ok(left)
    }

    fn in_rhs(&mut self, left: Expr, negated: bool) -> Result<Expr, SqlError> {
        if !self.at_punct("(") {
            return Err(self.unsupported("IN with table name"));
        }
        self.pos += 1;
        if self.at_kw("SELECT") || self.at_kw("WITH") {
            let query = self.query()?;
            self.expect_punct(")")?;
            return Ok(Expr::InSubquery {
                expr: Box::new(left),
                negated,
                query: Box::new(query),
            });
        }
        let mut list = Vec::new();
        if !self.at_punct(")") {
            loop {
                list.push(self.expr()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        Ok(Expr::InList {
            expr: Box::new(left),
            negated,
            list,
        })
    }

    fn comparison_expr(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.bitwise_expr()?;
        loop {
            let op = match self.peek_kind() {
                Some(TokenKind::Punct("<")) => BinaryOp::Lt,
                Some(TokenKind::Punct("<=")) => BinaryOp::LtEq,
                Some(TokenKind::Punct(">")) => BinaryOp::Gt,
                Some(TokenKind::Punct(">=")) => BinaryOp::GtEq,
                _ => break,
            };
            self.pos += 1;
            let right = self.bitwise_expr()?;
            left = binary(left, op, right);
        }
        Ok(left)
    }

    fn bitwise_expr(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.additive_expr()?;
        loop {
            let op = match self.peek_kind() {
                Some(TokenKind::Punct("&")) => BinaryOp::BitAnd,
                Some(TokenKind::Punct("|")) => BinaryOp::BitOr,
                Some(TokenKind::Punct("<<")) => BinaryOp::ShiftLeft,
                Some(TokenKind::Punct(">>")) => BinaryOp::ShiftRight,
                _ => break,
            };
            self.pos += 1;
            let right = self.additive_expr()?;
            left = binary(left, op, right);
        }
        Ok(left)
    }

    fn additive_expr(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.multiplicative_expr()?;
        loop {
            let op = match self.peek_kind() {
                Some(TokenKind::Punct("+")) => BinaryOp::Plus,
                Some(TokenKind::Punct("-")) => BinaryOp::Minus,
                _ => break,
            };
            self.pos += 1;
            let right = self.multiplicative_expr()?;
            left = binary(left, op, right);
        }
        Ok(left)
    }

    fn multiplicative_expr(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.concat_expr()?;
        loop {
            let op = match self.peek_kind() {
                Some(TokenKind::Punct("*")) => BinaryOp::Mul,
                Some(TokenKind::Punct("/")) => BinaryOp::Div,
                Some(TokenKind::Punct("%")) => BinaryOp::Mod,
                _ => break,
            };
            self.pos += 1;
            let right = self.concat_expr()?;
            left = binary(left, op, right);
        }
        Ok(left)
    }

    fn concat_expr(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.unary_expr()?;
        while self.eat_punct("||") {
            let right = self.unary_expr()?;
            left = binary(left, BinaryOp::Concat, right);
        }
        Ok(left)
    }

    fn unary_expr(&mut self) -> Result<Expr, SqlError> {
        let op = match self.peek_kind() {
            Some(TokenKind::Punct("-")) => Some(UnaryOp::Neg),
            Some(TokenKind::Punct("+")) => Some(UnaryOp::Plus),
            Some(TokenKind::Punct("~")) => Some(UnaryOp::BitNot),
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            let expr = self.unary_expr()?;
            return Ok(Expr::Unary {
                op,
                expr: Box::new(expr),
            });
        }
        let expr = self.primary()?;
        if self.at_kw("COLLATE") {
            return Err(self.unsupported("COLLATE"));
        }
        Ok(expr)
    }

    fn primary(&mut self) -> Result<Expr, SqlError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.expected("expression"));
        };
        match tok.kind {
            TokenKind::Number(n) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Number(n)))
            }
            TokenKind::String(s) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::String(s)))
            }
            TokenKind::Blob(b) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Blob(b)))
            }
            TokenKind::Punct("(") => {
                self.pos += 1;
                if self.at_kw("SELECT") || self.at_kw("WITH") {
                    let query = self.query()?;
                    self.expect_punct(")")?;
                    return Ok(Expr::Subquery(Box::new(query)));
                }
                let inner = self.expr()?;
                if self.at_punct(",") {
                    return Err(self.unsupported("row value"));
                }
                self.expect_punct(")")?;
                Ok(Expr::Nested(Box::new(inner)))
            }
            TokenKind::Word(ref w) if is_keyword(w) => {
                let upper = w.to_ascii_uppercase();
                match upper.as_str() {
                    "NULL" => {
                        self.pos += 1;
                        Ok(Expr::Literal(Literal::Null))
                    }
                    "CURRENT_DATE" => {
                        self.pos += 1;
                        Ok(Expr::Literal(Literal::CurrentDate))
                    }
                    "CURRENT_TIME" => {
                        self.pos += 1;
                        Ok(Expr::Literal(Literal::CurrentTime))
                    }
                    "CURRENT_TIMESTAMP" => {
                        self.pos += 1;
                        Ok(Expr::Literal(Literal::CurrentTimestamp))
                    }
                    "EXISTS" => {
                        self.pos += 1;
                        self.expect_punct("(")?;
                        let query = self.query()?;
                        self.expect_punct(")")?;
                        Ok(Expr::Exists(Box::new(query)))
                    }
                    "CASE" => self.case_expr(),
                    "CAST" => self.cast_expr(),
                    _ => Err(self.expected("expression")),
                }
            }
            TokenKind::Word(_) | TokenKind::Quoted(..) => {
                if self.peek_nth(1).is_some_and(|t| t.is_punct("(")) {
                    return self.function_call();
                }
                let first = self.ident("column name")?;
                if self.eat_punct(".") {
                    let name = self.ident("column name")?;
                    if self.at_punct(".") {
                        return Err(self.unsupported("schema-qualified column reference"));
                    }
                    return Ok(Expr::Column {
                        table: Some(first),
                        name,
                    });
                }
                Ok(Expr::Column {
                    table: None,
                    name: first,
                })
            }
            TokenKind::Punct(_) => Err(self.expected("expression")),
        }
    }

    fn function_call(&mut self) -> Result<Expr, SqlError> {
        let name = self.ident("function name")?;
        if !self.dialect.allows_function(&name.value) {
            let pos = name.span.map_or(self.position(), |s| s.start);
            return Err(SqlError::Unsupported {
                name: format!("function {}", name.value.to_ascii_uppercase()),
                position: pos,
            });
        }
        self.expect_punct("(")?;
        let args = if self.eat_punct("*") {
            FunctionArgs::Star
        } else {
            let distinct = self.eat_kw("DISTINCT");
            let mut args = Vec::new();
            if !self.at_punct(")") {
                loop {
                    args.push(self.expr()?);
                    if !self.eat_punct(",") {
                        break;
                    }
                }
            }
            if self.at_kw("ORDER") {
                return Err(self.unsupported("ordered aggregate"));
            }
            FunctionArgs::List { distinct, args }
        };
        self.expect_punct(")")?;
        if self.at_word("FILTER") || self.at_word("OVER") {
            return Err(self.unsupported("window function"));
        }
        Ok(Expr::Function { name, args })
    }

    fn case_expr(&mut self) -> Result<Expr, SqlError> {
        self.expect_kw("CASE")?;
        let operand = if self.at_kw("WHEN") {
            None
        } else {
            Some(Box::new(self.expr()?))
        };
        let mut branches = Vec::new();
        while self.eat_kw("WHEN") {
            let cond = self.expr()?;
            self.expect_kw("THEN")?;
            let result = self.expr()?;
            branches.push((cond, result));
        }
        if branches.is_empty() {
            return Err(self.expected("WHEN"));
        }
        let otherwise = if self.eat_kw("ELSE") {
            Some(Box::new(self.expr()?))
        } else {
            None
        };
        self.expect_kw("END")?;
        Ok(Expr::Case {
            operand,
            branches,
            otherwise,
        })
    }

    fn cast_expr(&mut self) -> Result<Expr, SqlError> {
        self.expect_kw("CAST")?;
        self.expect_punct("(")?;
        let expr = self.expr()?;
        self.expect_kw("AS")?;
        let mut words = Vec::new();
        while let Some(TokenKind::Word(w)) = self.peek_kind() {
            if is_keyword(w) {
                break;
            }
            words.push(w.clone());
            self.pos += 1;
        }
        if words.is_empty() {
            return Err(self.expected("type name"));
        }
        let mut args = Vec::new();
        if self.eat_punct("(") {
            loop {
                match self.advance().map(|t| t.kind) {
                    Some(TokenKind::Number(n)) => args.push(n),
                    _ => {
                        self.pos -= 1;
                        return Err(self.expected("type size"));
                    }
                }
                if !self.eat_punct(",") {
                    break;
                }
            }
            self.expect_punct(")")?;
        }
        self.expect_punct(")")?;
        Ok(Expr::Cast {
            expr: Box::new(expr),
            type_name: TypeName { words, args },
        })
    }
}

fn binary(left: Expr, op: BinaryOp, right: Expr) -> Expr {
    Expr::Binary {
        left: Box::new(left),
        op,
        right: Box::new(right),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_select_shape() {
        let q = parse_sql("SELECT * FROM Users WHERE age > 20").unwrap();
        let s = &q.body.first;
        assert_eq!(s.columns, vec![ResultColumn::Star]);
        let from = s.from.as_ref().unwrap();
        assert_eq!(
            from.first,
            TableFactor::Table {
                name: Ident::new("Users"),
                alias: None
            }
        );
        assert_eq!(
            s.selection,
            Some(Expr::Binary {
                left: Box::new(Expr::column("age")),
                op: BinaryOp::Gt,
                right: Box::new(Expr::number("20")),
            })
        );
    }

    #[test]
    fn backtick_column_keeps_space_and_style() {
        let q = parse_sql("SELECT `Free Meal Count` FROM t").unwrap();
        match &q.body.first.columns[0] {
            ResultColumn::Expr {
                expr: Expr::Column { table: None, name },
                alias: None,
            } => {
                assert_eq!(name.value, "Free Meal Count");
                assert_eq!(name.quote, QuoteStyle::Backtick);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quote_styles_parse_to_equal_nodes() {
        let a = parse_sql("SELECT `a b` FROM t").unwrap();
        let b = parse_sql("SELECT \"a b\" FROM t").unwrap();
        let c = parse_sql("SELECT [a b] FROM t").unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
    }

    #[test]
    fn select_from_is_syntax_error() {
        assert!(matches!(parse_sql("SELECT FROM"), Err(SqlError::Syntax { .. })));
    }

    #[test]
    fn empty_input_is_syntax_error() {
        assert!(matches!(parse_sql("   "), Err(SqlError::Syntax { .. })));
    }

    #[test]
    fn unsupported_constructs_are_named() {
        for (sql, name) in [
            ("SELECT IIF(a, 1, 2) FROM t", "function IIF"),
            ("SELECT a FROM t NATURAL JOIN u", "NATURAL JOIN"),
            ("SELECT a COLLATE NOCASE FROM t", "COLLATE"),
            ("SELECT COUNT(*) OVER () FROM t", "window function"),
            ("INSERT INTO t VALUES (1)", "INSERT statement"),
            ("SELECT a FROM main.t", "schema-qualified table name"),
        ] {
            match parse_sql(sql) {
                Err(SqlError::Unsupported { name: n, .. }) => assert_eq!(n, name, "{sql}"),
                other => panic!("{sql}: {other:?}"),
            }
        }
    }

    #[test]
    fn dialect_extension_admits_function() {
        let d = Dialect::benchmark().allow_function("iif");
        assert!(parse_sql_with("SELECT IIF(a, 1, 2) FROM t", &d).is_ok());
    }

    #[test]
    fn precedence_and_binds_tighter_than_or() {
        let q = parse_sql("SELECT 1 FROM t WHERE a = 1 OR b = 2 AND c = 3").unwrap();
        let Some(Expr::Binary { op, right, .. }) = &q.body.first.selection else {
            panic!()
        };
        assert_eq!(*op, BinaryOp::Or);
        assert!(matches!(**right, Expr::Binary { op: BinaryOp::And, .. }));
    }

    #[test]
    fn limit_forms() {
        let a = parse_sql("SELECT a FROM t LIMIT 5 OFFSET 2").unwrap();
        let b = parse_sql("SELECT a FROM t LIMIT 2, 5").unwrap();
        let (la, lb) = (a.limit.unwrap(), b.limit.unwrap());
        assert_eq!(la.count, lb.count);
        assert_eq!(la.offset, lb.offset);
        assert!(lb.comma_form);
    }

    #[test]
    fn compound_cte_case_cast() {
        let sql = "WITH c(x) AS (SELECT a FROM t) \
                   SELECT CASE WHEN x > 1 THEN 'big' ELSE 'small' END, CAST(x AS REAL) FROM c \
                   UNION ALL SELECT b, 1 FROM u ORDER BY 1 DESC LIMIT 3";
        let q = parse_sql(sql).unwrap();
        assert_eq!(q.with.as_ref().unwrap().ctes[0].columns, vec![Ident::new("x")]);
        assert_eq!(q.body.rest.len(), 1);
        assert_eq!(q.body.rest[0].0, CompoundOp::UnionAll);
        assert!(q.is_ordered());
    }

    #[test]
    fn negated_predicates() {
        let q = parse_sql(
            "SELECT a FROM t WHERE a NOT IN (1, 2) AND b NOT LIKE 'x%' AND c NOT BETWEEN 1 AND 2 \
             AND d IS NOT NULL AND NOT EXISTS (SELECT 1 FROM u)",
        )
        .unwrap();
        assert!(q.body.first.selection.is_some());
    }

    #[test]
    fn create_view() {
        let v = parse_create_view("CREATE VIEW IF NOT EXISTS v(a) AS SELECT x FROM t", &Dialect::default()).unwrap();
        assert!(v.if_not_exists);
        assert_eq!(v.name.value, "v");
        assert_eq!(v.columns, vec![Ident::new("a")]);
    }

    #[test]
    fn spans_point_into_source() {
        let sql = "SELECT T1.age FROM Users AS T1";
        let q = parse_sql(sql).unwrap();
        let ResultColumn::Expr {
            expr: Expr::Column { table, name },
            ..
        } = &q.body.first.columns[0]
        else {
            panic!()
        };
        let span = name.span.unwrap();
        assert_eq!(&sql[span.start..span.end], "age");
        let span = table.as_ref().unwrap().span.unwrap();
        assert_eq!(&sql[span.start..span.end], "T1");
    }
}

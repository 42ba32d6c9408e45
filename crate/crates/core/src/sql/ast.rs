//! Syntax tree for the supported SELECT dialect.
//!
//! Structural equality (`PartialEq`) ignores source spans and identifier
//! quote styles: two trees are equal when they denote the same query text
//! modulo layout, keyword case and quoting.

use std::hash::{Hash, Hasher};

use super::lexer::{QuoteStyle, Span};

#[derive(Debug, Clone, Eq)]
pub struct Ident {
    pub value: String,
    pub quote: QuoteStyle,
    pub span: Option<Span>,
}

impl Ident {
    pub fn new(value: impl Into<String>) -> Self {
        Self {
            value: value.into(),
            quote: QuoteStyle::Bare,
            span: None,
        }
    }

    pub fn with_quote(mut self, quote: QuoteStyle) -> Self {
        self.quote = quote;
        self
    }

    /// SQLite folds ASCII letters only when comparing identifiers.
    pub fn matches(&self, other: &str) -> bool {
        self.value.eq_ignore_ascii_case(other)
    }
}

impl PartialEq for Ident {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl Hash for Ident {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.value.hash(state);
    }
}

/// A full query: optional WITH clause, a (possibly compound) body, and the
/// ORDER BY / LIMIT that apply to the whole body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub with: Option<With>,
    pub body: SetExpr,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<Limit>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct With {
    pub recursive: bool,
    pub ctes: Vec<Cte>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cte {
    pub name: Ident,
    pub columns: Vec<Ident>,
    pub query: Box<Query>,
}

/// `first (op select)*`, left-associative as in SQLite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetExpr {
    pub first: Box<Select>,
    pub rest: Vec<(CompoundOp, Select)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompoundOp {
    Union,
    UnionAll,
    Intersect,
    Except,
}

impl CompoundOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CompoundOp::Union => "UNION",
            CompoundOp::UnionAll => "UNION ALL",
            CompoundOp::Intersect => "INTERSECT",
            CompoundOp::Except => "EXCEPT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quantifier {
    #[default]
    None,
    Distinct,
    All,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Select {
    pub quantifier: Quantifier,
    pub columns: Vec<ResultColumn>,
    pub from: Option<From>,
    pub selection: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub having: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResultColumn {
    Star,
    QualifiedStar(Ident),
    Expr { expr: Expr, alias: Option<Ident> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct From {
    pub first: TableFactor,
    pub joins: Vec<Join>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TableFactor {
    Table { name: Ident, alias: Option<Ident> },
    Derived { query: Box<Query>, alias: Option<Ident> },
}

impl TableFactor {
    pub fn alias(&self) -> Option<&Ident> {
        match self {
            TableFactor::Table { alias, .. } | TableFactor::Derived { alias, .. } => alias.as_ref(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinKind {
    /// `a, b`
    Comma,
    /// `JOIN`
    Plain,
    Inner,
    Left,
    LeftOuter,
    Right,
    RightOuter,
    Full,
    FullOuter,
    Cross,
}

impl JoinKind {
    pub fn as_str(self) -> &'static str {
        match self {
            JoinKind::Comma => ",",
            JoinKind::Plain => "JOIN",
            JoinKind::Inner => "INNER JOIN",
            JoinKind::Left => "LEFT JOIN",
            JoinKind::LeftOuter => "LEFT OUTER JOIN",
            JoinKind::Right => "RIGHT JOIN",
            JoinKind::RightOuter => "RIGHT OUTER JOIN",
            JoinKind::Full => "FULL JOIN",
            JoinKind::FullOuter => "FULL OUTER JOIN",
            JoinKind::Cross => "CROSS JOIN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Join {
    pub kind: JoinKind,
    pub factor: TableFactor,
    pub constraint: Option<JoinConstraint>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JoinConstraint {
    On(Expr),
    Using(Vec<Ident>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderItem {
    pub expr: Expr,
    pub direction: Option<Direction>,
}

/// `LIMIT count [OFFSET offset]`, or SQLite's `LIMIT offset, count` when
/// `comma_form` is set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Limit {
    pub count: Expr,
    pub offset: Option<Expr>,
    pub comma_form: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Literal {
    /// Numeric literal as written (`07`, `1.50`, `0x1F`).
    Number(String),
    String(String),
    Blob(String),
    Null,
    CurrentDate,
    CurrentTime,
    CurrentTimestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Plus,
    Not,
    BitNot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Or,
    And,
    Eq,
    /// `==`
    EqEq,
    NotEq,
    /// `<>`
    LtGt,
    Is,
    IsNot,
    Lt,
    LtEq,
    Gt,
    GtEq,
    BitAnd,
    BitOr,
    ShiftLeft,
    ShiftRight,
    Plus,
    Minus,
    Mul,
    Div,
    Mod,
    Concat,
}

impl BinaryOp {
    pub fn as_str(self) -> &'static str {
        use BinaryOp::*;
        match self {
            Or => "OR",
            And => "AND",
            Eq => "=",
            EqEq => "==",
            NotEq => "!=",
            LtGt => "<>",
            Is => "IS",
            IsNot => "IS NOT",
            Lt => "<",
            LtEq => "<=",
            Gt => ">",
            GtEq => ">=",
            BitAnd => "&",
            BitOr => "|",
            ShiftLeft => "<<",
            ShiftRight => ">>",
            Plus => "+",
            Minus => "-",
            Mul => "*",
            Div => "/",
            Mod => "%",
            Concat => "||",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        use BinaryOp::*;
        match self {
            Or => 1,
            And => 2,
            Eq | EqEq | NotEq | LtGt | Is | IsNot => 4,
            Lt | LtEq | Gt | GtEq => 5,
            BitAnd | BitOr | ShiftLeft | ShiftRight => 6,
            Plus | Minus => 7,
            Mul | Div | Mod => 8,
            Concat => 9,
        }
    }
}

/// Precedence of `NOT` as a prefix operator.
pub const NOT_PRECEDENCE: u8 = 3;
/// Precedence shared by `LIKE`, `GLOB`, `BETWEEN` and `IN`.
pub const PATTERN_PRECEDENCE: u8 = 4;
pub const UNARY_PRECEDENCE: u8 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternOp {
    Like,
    Glob,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeName {
    /// Words of the type name, e.g. `["REAL"]` or `["VARCHAR"]`.
    pub words: Vec<String>,
    /// Size arguments as written, e.g. `["10", "2"]`.
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FunctionArgs {
    /// `COUNT(*)`
    Star,
    List {
        distinct: bool,
        args: Vec<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Literal(Literal),
    Column {
        table: Option<Ident>,
        name: Ident,
    },
    Unary {
        op: UnaryOp,
        expr: Box<Expr>,
    },
    Binary {
        left: Box<Expr>,
        op: BinaryOp,
        right: Box<Expr>,
    },
    Pattern {
        expr: Box<Expr>,
        negated: bool,
        op: PatternOp,
        pattern: Box<Expr>,
        escape: Option<Box<Expr>>,
    },
    Between {
        expr: Box<Expr>,
        negated: bool,
        low: Box<Expr>,
        high: Box<Expr>,
    },
    InList {
        expr: Box<Expr>,
        negated: bool,
        list: Vec<Expr>,
    },
    InSubquery {
        expr: Box<Expr>,
        negated: bool,
        query: Box<Query>,
    },
    Exists(Box<Query>),
    Subquery(Box<Query>),
    Case {
        operand: Option<Box<Expr>>,
        branches: Vec<(Expr, Expr)>,
        otherwise: Option<Box<Expr>>,
    },
    Cast {
        expr: Box<Expr>,
        type_name: TypeName,
    },
    Function {
        name: Ident,
        args: FunctionArgs,
    },
    /// Explicit parentheses from the source text.
    Nested(Box<Expr>),
}

impl Expr {
    pub fn column(name: &str) -> Self {
        Expr::Column {
            table: None,
            name: Ident::new(name),
        }
    }

    pub fn number(text: &str) -> Self {
        Expr::Literal(Literal::Number(text.to_string()))
    }

    /// Binding strength of the outermost operator; atoms bind tightest.
    pub fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Unary { op: UnaryOp::Not, .. } => NOT_PRECEDENCE,
            Expr::Unary { .. } => UNARY_PRECEDENCE,
            Expr::Pattern { .. } | Expr::Between { .. } | Expr::InList { .. } | Expr::InSubquery { .. } => {
                PATTERN_PRECEDENCE
            }
            _ => u8::MAX,
        }
    }
}

/// A `CREATE VIEW` statement, parsed only so views can be re-created over a
/// renamed schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CreateView {
    pub temporary: bool,
    pub if_not_exists: bool,
    pub name: Ident,
    pub columns: Vec<Ident>,
    pub query: Query,
}

impl Query {
    /// Whether the outermost statement carries an ORDER BY, which makes row
    /// order part of the result.
    pub fn is_ordered(&self) -> bool {
        !self.order_by.is_empty()
    }

    pub fn selects(&self) -> impl Iterator<Item = &Select> {
        std::iter::once(&*self.body.first).chain(self.body.rest.iter().map(|(_, s)| s))
    }
}

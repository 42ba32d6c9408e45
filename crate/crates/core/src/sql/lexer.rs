//! Tokenizer for the benchmark's SQLite dialect.

use std::fmt;

use super::SqlError;

/// Byte range of a token or node in the original SQL text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }
}

/// How an identifier was delimited in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum QuoteStyle {
    #[default]
    Bare,
    /// `"name"`
    Double,
    /// `` `name` ``
    Backtick,
    /// `[name]`
    Bracket,
    /// `'name'`, only accepted in alias position.
    Single,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    /// Unquoted word. Keywords are words whose uppercase form is in [`KEYWORDS`].
    Word(String),
    Quoted(String, QuoteStyle),
    /// Single-quoted string literal, unescaped.
    String(String),
    /// Numeric literal as written.
    Number(String),
    /// Blob literal hex digits, as written between `X'` and `'`.
    Blob(String),
    Punct(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

/// Coarse token classes used by invariant checks over rendered SQL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenClass {
    Keyword,
    Identifier,
    Literal,
    Operator,
}

impl Token {
    pub fn class(&self) -> TokenClass {
        match &self.kind {
            TokenKind::Word(w) if is_keyword(w) => TokenClass::Keyword,
            TokenKind::Word(_) | TokenKind::Quoted(..) => TokenClass::Identifier,
            TokenKind::String(_) | TokenKind::Number(_) | TokenKind::Blob(_) => TokenClass::Literal,
            TokenKind::Punct(_) => TokenClass::Operator,
        }
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.kind, TokenKind::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    pub fn is_punct(&self, p: &str) -> bool {
        matches!(&self.kind, TokenKind::Punct(q) if *q == p)
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Word(w) => write!(f, "{w}"),
            TokenKind::Quoted(q, _) => write!(f, "\"{q}\""),
            TokenKind::String(s) => write!(f, "'{s}'"),
            TokenKind::Number(n) => write!(f, "{n}"),
            TokenKind::Blob(b) => write!(f, "X'{b}'"),
            TokenKind::Punct(p) => write!(f, "{p}"),
        }
    }
}

/// Words the parser treats as reserved: they never parse as bare identifiers
/// or implicit aliases.
pub const KEYWORDS: &[&str] = &[
    "ALL",
    "AND",
    "AS",
    "ASC",
    "BETWEEN",
    "BY",
    "CASE",
    "CAST",
    "COLLATE",
    "CREATE",
    "CROSS",
    "CURRENT_DATE",
    "CURRENT_TIME",
    "CURRENT_TIMESTAMP",
    "DELETE",
    "DESC",
    "DISTINCT",
    "DROP",
    "ELSE",
    "END",
    "ESCAPE",
    "EXCEPT",
    "EXISTS",
    "FROM",
    "FULL",
    "GLOB",
    "GROUP",
    "HAVING",
    "IN",
    "INDEXED",
    "INNER",
    "INSERT",
    "INTERSECT",
    "INTO",
    "IS",
    "ISNULL",
    "JOIN",
    "LEFT",
    "LIKE",
    "LIMIT",
    "MATCH",
    "NATURAL",
    "NOT",
    "NOTNULL",
    "NULL",
    "OFFSET",
    "ON",
    "OR",
    "ORDER",
    "OUTER",
    "REGEXP",
    "RIGHT",
    "SELECT",
    "SET",
    "TABLE",
    "THEN",
    "UNION",
    "UPDATE",
    "USING",
    "VALUES",
    "VIEW",
    "WHEN",
    "WHERE",
    "WINDOW",
    "WITH",
];

pub fn is_keyword(word: &str) -> bool {
    let upper = word.to_ascii_uppercase();
    KEYWORDS.binary_search(&upper.as_str()).is_ok()
}

/// Full SQLite keyword list; any identifier spelled like one of these is
/// quoted when rendered.
const SQLITE_KEYWORDS: &[&str] = &[
    "ABORT",
    "ACTION",
    "ADD",
    "AFTER",
    "ALL",
    "ALTER",
    "ALWAYS",
    "ANALYZE",
    "AND",
    "AS",
    "ASC",
    "ATTACH",
    "AUTOINCREMENT",
    "BEFORE",
    "BEGIN",
    "BETWEEN",
    "BY",
    "CASCADE",
    "CASE",
    "CAST",
    "CHECK",
    "COLLATE",
    "COLUMN",
    "COMMIT",
    "CONFLICT",
    "CONSTRAINT",
    "CREATE",
    "CROSS",
    "CURRENT",
    "CURRENT_DATE",
    "CURRENT_TIME",
    "CURRENT_TIMESTAMP",
    "DATABASE",
    "DEFAULT",
    "DEFERRABLE",
    "DEFERRED",
    "DELETE",
    "DESC",
    "DETACH",
    "DISTINCT",
    "DO",
    "DROP",
    "EACH",
    "ELSE",
    "END",
    "ESCAPE",
    "EXCEPT",
    "EXCLUDE",
    "EXCLUSIVE",
    "EXISTS",
    "EXPLAIN",
    "FAIL",
    "FILTER",
    "FIRST",
    "FOLLOWING",
    "FOR",
    "FOREIGN",
    "FROM",
    "FULL",
    "GENERATED",
    "GLOB",
    "GROUP",
    "GROUPS",
    "HAVING",
    "IF",
    "IGNORE",
    "IMMEDIATE",
    "IN",
    "INDEX",
    "INDEXED",
    "INITIALLY",
    "INNER",
    "INSERT",
    "INSTEAD",
    "INTERSECT",
    "INTO",
    "IS",
    "ISNULL",
    "JOIN",
    "KEY",
    "LAST",
    "LEFT",
    "LIKE",
    "LIMIT",
    "MATCH",
    "MATERIALIZED",
    "NATURAL",
    "NO",
    "NOT",
    "NOTHING",
    "NOTNULL",
    "NULL",
    "NULLS",
    "OF",
    "OFFSET",
    "ON",
    "OR",
    "ORDER",
    "OTHERS",
    "OUTER",
    "OVER",
    "PARTITION",
    "PLAN",
    "PRAGMA",
    "PRECEDING",
    "PRIMARY",
    "QUERY",
    "RAISE",
    "RANGE",
    "RECURSIVE",
    "REFERENCES",
    "REGEXP",
    "REINDEX",
    "RELEASE",
    "RENAME",
    "REPLACE",
    "RESTRICT",
    "RETURNING",
    "RIGHT",
    "ROLLBACK",
    "ROW",
    "ROWS",
    "SAVEPOINT",
    "SELECT",
    "SET",
    "TABLE",
    "TEMP",
    "TEMPORARY",
    "THEN",
    "TIES",
    "TO",
    "TRANSACTION",
    "TRIGGER",
    "UNBOUNDED",
    "UNION",
    "UNIQUE",
    "UPDATE",
    "USING",
    "VACUUM",
    "VALUES",
    "VIEW",
    "VIRTUAL",
    "WHEN",
    "WHERE",
    "WINDOW",
    "WITH",
    "WITHOUT",
];

pub fn is_sqlite_keyword(word: &str) -> bool {
    let upper = word.to_ascii_uppercase();
    SQLITE_KEYWORDS.binary_search(&upper.as_str()).is_ok()
}

const PUNCT: &[&str] = &[
    "||", "==", "!=", "<>", "<=", ">=", "<<", ">>", "(", ")", ",", ".", ";", "*", "/", "%", "+", "-", "=", "<", ">",
    "&", "|", "~",
];

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_ascii_alphabetic() || !c.is_ascii()
}

fn is_ident_continue(c: char) -> bool {
    is_ident_start(c) || c.is_ascii_digit() || c == '$'
}

pub fn tokenize(sql: &str) -> Result<Vec<Token>, SqlError> {
    Lexer { src: sql, pos: 0 }.run()
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn syntax(&self, position: usize, expected: &str, found: &str) -> SqlError {
        SqlError::Syntax {
            position,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    fn run(mut self) -> Result<Vec<Token>, SqlError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia()?;
            let start = self.pos;
            let Some(c) = self.peek() else { break };
            let kind = match c {
                '\'' => TokenKind::String(self.delimited('\'', '\'')?),
                '"' => TokenKind::Quoted(self.delimited('"', '"')?, QuoteStyle::Double),
                '`' => TokenKind::Quoted(self.delimited('`', '`')?, QuoteStyle::Backtick),
                '[' => {
                    self.bump();
                    let body_start = self.pos;
                    match self.rest().find(']') {
                        Some(i) => {
                            self.pos += i + 1;
                            TokenKind::Quoted(self.src[body_start..body_start + i].to_string(), QuoteStyle::Bracket)
                        }
                        None => return Err(self.syntax(start, "']'", "end of input")),
                    }
                }
                'x' | 'X' if self.peek_at(1) == Some('\'') => {
                    self.bump();
                    let hex = self.delimited('\'', '\'')?;
                    if hex.len() % 2 != 0 || !hex.chars().all(|h| h.is_ascii_hexdigit()) {
                        return Err(self.syntax(start, "hex digit pairs", &hex));
                    }
                    TokenKind::Blob(hex)
                }
                c if c.is_ascii_digit() || (c == '.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit())) => {
                    self.number()?
                }
                c if is_ident_start(c) => {
                    while self.peek().is_some_and(is_ident_continue) {
                        self.bump();
                    }
                    TokenKind::Word(self.src[start..self.pos].to_string())
                }
                '?' | ':' | '@' | '$' => {
                    return Err(SqlError::Unsupported {
                        name: "bound parameter".into(),
                        position: start,
                    })
                }
                _ => {
                    let rest = self.rest();
                    match PUNCT.iter().find(|p| rest.starts_with(**p)) {
                        Some(p) => {
                            self.pos += p.len();
                            TokenKind::Punct(p)
                        }
                        None => return Err(self.syntax(start, "token", &c.to_string())),
                    }
                }
            };
            out.push(Token {
                kind,
                span: Span::new(start, self.pos),
            });
        }
        Ok(out)
    }

    fn skip_trivia(&mut self) -> Result<(), SqlError> {
        loop {
            let rest = self.rest();
            if rest.starts_with("--") {
                self.pos += rest.find('\n').unwrap_or(rest.len());
            } else if let Some(body) = rest.strip_prefix("/*") {
                match body.find("*/") {
                    Some(i) => self.pos += i + 4,
                    None => self.pos = self.src.len(),
                }
            } else if self.peek().is_some_and(char::is_whitespace) {
                self.bump();
            } else {
                return Ok(());
            }
        }
    }

    /// Reads a literal delimited by `open`/`close`, where a doubled `close`
    /// stands for itself.
    fn delimited(&mut self, open: char, close: char) -> Result<String, SqlError> {
        let start = self.pos;
        debug_assert_eq!(self.peek(), Some(open));
        self.bump();
        let mut value = String::new();
        loop {
            match self.bump() {
                None => return Err(self.syntax(start, &format!("closing {close}"), "end of input")),
                Some(c) if c == close => {
                    if self.peek() == Some(close) {
                        self.bump();
                        value.push(close);
                    } else {
                        return Ok(value);
                    }
                }
                Some(c) => value.push(c),
            }
        }
    }

    fn number(&mut self) -> Result<TokenKind, SqlError> {
        let start = self.pos;
        let rest = self.rest();
        if (rest.starts_with("0x") || rest.starts_with("0X")) && rest[2..].starts_with(|c: char| c.is_ascii_hexdigit())
        {
            self.pos += 2;
            while self.peek().is_some_and(|c| c.is_ascii_hexdigit()) {
                self.bump();
            }
        } else {
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.bump();
            }
            if self.peek() == Some('.') {
                self.bump();
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.bump();
                }
            }
            if matches!(self.peek(), Some('e' | 'E')) {
                let sign = matches!(self.peek_at(1), Some('+' | '-'));
                let digit_at = if sign { 2 } else { 1 };
                if self.peek_at(digit_at).is_some_and(|c| c.is_ascii_digit()) {
                    for _ in 0..digit_at {
                        self.bump();
                    }
                    while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                        self.bump();
                    }
                }
            }
        }
        if self.peek().is_some_and(is_ident_continue) {
            let found = self.peek().unwrap().to_string();
            return Err(self.syntax(self.pos, "end of numeric literal", &found));
        }
        Ok(TokenKind::Number(self.src[start..self.pos].to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(sql: &str) -> Vec<TokenKind> {
        tokenize(sql).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn keyword_tables_are_sorted() {
        assert!(KEYWORDS.windows(2).all(|w| w[0] < w[1]));
        assert!(SQLITE_KEYWORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn select_star_is_four_tokens() {
        assert_eq!(tokenize("SELECT * FROM t").unwrap().len(), 4);
    }

    #[test]
    fn quote_styles() {
        assert_eq!(
            kinds("`Free Meal Count` \"a\"\"b\" [x y]"),
            vec![
                TokenKind::Quoted("Free Meal Count".into(), QuoteStyle::Backtick),
                TokenKind::Quoted("a\"b".into(), QuoteStyle::Double),
                TokenKind::Quoted("x y".into(), QuoteStyle::Bracket),
            ]
        );
    }

    #[test]
    fn strings_numbers_blobs() {
        assert_eq!(
            kinds("'it''s' 3.25 .5 1e-3 0x1F X'AB'"),
            vec![
                TokenKind::String("it's".into()),
                TokenKind::Number("3.25".into()),
                TokenKind::Number(".5".into()),
                TokenKind::Number("1e-3".into()),
                TokenKind::Number("0x1F".into()),
                TokenKind::Blob("AB".into()),
            ]
        );
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(
            kinds("SELECT -- hi\n 1 /* x */"),
            vec![TokenKind::Word("SELECT".into()), TokenKind::Number("1".into())]
        );
    }

    #[test]
    fn operators_prefer_longest() {
        assert_eq!(
            kinds("a<>b<=c||d"),
            vec![
                TokenKind::Word("a".into()),
                TokenKind::Punct("<>"),
                TokenKind::Word("b".into()),
                TokenKind::Punct("<="),
                TokenKind::Word("c".into()),
                TokenKind::Punct("||"),
                TokenKind::Word("d".into()),
            ]
        );
    }

    #[test]
    fn errors() {
        assert!(matches!(tokenize("'abc"), Err(SqlError::Syntax { .. })));
        assert!(matches!(tokenize("12abc"), Err(SqlError::Syntax { .. })));
        assert!(matches!(tokenize("a = ?"), Err(SqlError::Unsupported { .. })));
    }

    #[test]
    fn non_ascii_words() {
        assert_eq!(kinds("yaş"), vec![TokenKind::Word("yaş".into())]);
    }
}

//! Parsing, printing and rewriting of the SQLite SELECT dialect used by the
//! benchmark.

pub mod ast;
pub mod canonical;
pub mod lexer;
pub mod parser;
pub mod render;
pub mod resolve;
pub mod rewrite;

pub use ast::Query;
pub use canonical::{canonicalize, canonicalize_with, normalize_number, CanonicalOptions};
pub use lexer::{tokenize, Span, Token, TokenKind};
pub use parser::{parse_create_view, parse_sql, parse_sql_with, Dialect, BENCHMARK_FUNCTIONS};
pub use render::{quote_ddl, quote_ident, render_create_view, render_expr, render_sql};
pub use resolve::{visit_identifiers, IdentContext, IdentRole};
pub use rewrite::{
    collect_identifiers, rewrite_identifiers, IdentKind, IdentifierOccurrence, NameMap, UnmappedIdentifier,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SqlError {
    #[error("syntax error at byte {position}: expected {expected}, found {found}")]
    Syntax {
        position: usize,
        expected: String,
        found: String,
    },
    #[error("unsupported construct at byte {position}: {name}")]
    Unsupported { name: String, position: usize },
}

impl SqlError {
    pub fn position(&self) -> usize {
        match self {
            SqlError::Syntax { position, .. } | SqlError::Unsupported { position, .. } => *position,
        }
    }
}

/// Whether the outermost statement of `sql` has an ORDER BY clause, decided
/// from tokens alone so that it also works for text the parser rejects.
pub fn has_top_level_order_by(sql: &str) -> bool {
    let Ok(tokens) = tokenize(sql) else {
        return false;
    };
    let mut depth = 0i32;
    let mut prev_order = false;
    for t in &tokens {
        if t.is_punct("(") {
            depth += 1;
        } else if t.is_punct(")") {
            depth -= 1;
        } else if depth == 0 && t.is_keyword("BY") && prev_order {
            return true;
        }
        prev_order = depth == 0 && t.is_keyword("ORDER");
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_level_order_by() {
        assert!(has_top_level_order_by("select a from t order by a"));
        assert!(!has_top_level_order_by("SELECT a FROM (SELECT a FROM t ORDER BY a)"));
        assert!(!has_top_level_order_by("SELECT 'order by' FROM t"));
    }
}

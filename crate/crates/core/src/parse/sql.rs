//! A small SQL subset: SELECT / INSERT / UPDATE / DELETE with WHERE
//! conditions built from comparisons, `LIKE`, `IN (...)`, `AND`, `OR` and
//! parentheses.
//!
//! [`parse_statement`] yields an AST (also used by the mock target to execute
//! queries); [`parse_sql`] yields the parse tree:
//!
//! ```text
//! Root(SQL)
//!   Term verb
//!   sel-list     -> Term column ...                  (SELECT)
//!   trgt-table   -> Term table
//!   set-cl.-list -> Term SET, assign(column, =, literal) ...
//!   values       -> Term VALUES, val(column, literal) ...
//!   cond         -> Term WHERE, and/or/cmp nodes
//! ```

use serde::{Deserialize, Serialize};

use super::{NodeKind, ParseError, ParseTree, Role, TreeNode, TreeTag, PLACEHOLDER};

pub const GROUP_TABLE: &str = "trgt-table";
pub const GROUP_SELECT: &str = "sel-list";
pub const GROUP_SET: &str = "set-cl.-list";
pub const GROUP_VALUES: &str = "values";
pub const GROUP_COND: &str = "cond";

const MUTATING_VERBS: &[&str] = &[
    "INSERT", "UPDATE", "DELETE", "REPLACE", "CREATE", "DROP", "ALTER", "TRUNCATE", "MERGE",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlQueryRaw {
    pub text: String,
}

impl SqlQueryRaw {
    pub fn new(text: impl Into<String>) -> Self {
        SqlQueryRaw { text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Literal {
    Str(String),
    Num(String),
    Null,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Literal(Literal),
    Column(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Condition {
    Compare {
        column: String,
        op: String,
        rhs: Operand,
    },
    In {
        column: String,
        list: Vec<Literal>,
    },
    And(Box<Condition>, Box<Condition>),
    Or(Box<Condition>, Box<Condition>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    Select {
        columns: Vec<String>,
        table: String,
        filter: Option<Condition>,
    },
    Insert {
        table: String,
        columns: Vec<String>,
        values: Vec<Literal>,
    },
    Update {
        table: String,
        assignments: Vec<(String, Literal)>,
        filter: Option<Condition>,
    },
    Delete {
        table: String,
        filter: Option<Condition>,
    },
}

impl Statement {
    pub fn verb(&self) -> &'static str {
        match self {
            Statement::Select { .. } => "SELECT",
            Statement::Insert { .. } => "INSERT",
            Statement::Update { .. } => "UPDATE",
            Statement::Delete { .. } => "DELETE",
        }
    }

    pub fn table(&self) -> &str {
        match self {
            Statement::Select { table, .. }
            | Statement::Insert { table, .. }
            | Statement::Update { table, .. }
            | Statement::Delete { table, .. } => table,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    Num(String),
    Sym(&'static str),
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |position: usize, message: &str| ParseError::Sql {
        position,
        message: message.to_owned(),
    };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == b'\'' {
            let mut value = String::new();
            i += 1;
            loop {
                let rest = &text[i..];
                let Some(q) = rest.find('\'') else {
                    return Err(err(start, "unterminated string literal"));
                };
                value.push_str(&rest[..q]);
                i += q + 1;
                if bytes.get(i) == Some(&b'\'') {
                    value.push('\'');
                    i += 1;
                } else {
                    break;
                }
            }
            out.push((start, Tok::Str(value)));
        } else if c.is_ascii_digit()
            || (c == b'-' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit))
        {
            i += 1;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            let num = &text[start..i];
            if num.matches('.').count() > 1 || num.ends_with('.') {
                return Err(err(start, "malformed number"));
            }
            out.push((start, Tok::Num(num.to_owned())));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len()
                && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.')
            {
                i += 1;
            }
            out.push((start, Tok::Word(text[start..i].to_owned())));
        } else if c == b'`' {
            let close = text[i + 1..]
                .find('`')
                .ok_or_else(|| err(start, "unterminated quoted identifier"))?;
            out.push((start, Tok::Word(text[i + 1..i + 1 + close].to_owned())));
            i += close + 2;
        } else {
            let two = text.get(i..i + 2).unwrap_or_default();
            let sym = match two {
                "<>" => Some("<>"),
                "!=" => Some("!="),
                "<=" => Some("<="),
                ">=" => Some(">="),
                _ => None,
            };
            if let Some(s) = sym {
                out.push((start, Tok::Sym(s)));
                i += 2;
                continue;
            }
            let s = match c {
                b'=' => "=",
                b'<' => "<",
                b'>' => ">",
                b'(' => "(",
                b')' => ")",
                b',' => ",",
                b'*' => "*",
                b';' => ";",
                _ => return Err(err(start, &format!("unexpected character {:?}", c as char))),
            };
            out.push((start, Tok::Sym(s)));
            i += 1;
        }
    }
    // a single trailing semicolon is tolerated
    if matches!(out.last(), Some((_, Tok::Sym(";")))) {
        out.pop();
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn position(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Sql {
            position: self.position(),
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.peek_keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected {kw}"))
        }
    }

    fn symbol(&mut self, sym: &str) -> Result<(), ParseError> {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected {sym:?}"))
        }
    }

    fn eat_symbol(&mut self, sym: &str) -> bool {
        self.symbol(sym).is_ok()
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Word(w)) if !is_reserved(w) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => self.fail("expected identifier"),
        }
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        let lit = match self.peek() {
            Some(Tok::Str(s)) => Literal::Str(s.clone()),
            Some(Tok::Num(n)) => Literal::Num(n.clone()),
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case("NULL") => Literal::Null,
            _ => return self.fail("expected literal"),
        };
        self.pos += 1;
        Ok(lit)
    }

    fn list<T>(
        &mut self,
        mut item: impl FnMut(&mut Self) -> Result<T, ParseError>,
    ) -> Result<Vec<T>, ParseError> {
        let mut out = vec![item(self)?];
        while self.eat_symbol(",") {
            out.push(item(self)?);
        }
        Ok(out)
    }

    fn filter(&mut self) -> Result<Option<Condition>, ParseError> {
        if self.peek_keyword("WHERE") {
            self.pos += 1;
            Ok(Some(self.or()?))
        } else {
            Ok(None)
        }
    }

    fn or(&mut self) -> Result<Condition, ParseError> {
        let mut left = self.and()?;
        while self.peek_keyword("OR") {
            self.pos += 1;
            left = Condition::Or(Box::new(left), Box::new(self.and()?));
        }
        Ok(left)
    }

    fn and(&mut self) -> Result<Condition, ParseError> {
        let mut left = self.atom()?;
        while self.peek_keyword("AND") {
            self.pos += 1;
            left = Condition::And(Box::new(left), Box::new(self.atom()?));
        }
        Ok(left)
    }

    fn atom(&mut self) -> Result<Condition, ParseError> {
        if self.eat_symbol("(") {
            let inner = self.or()?;
            self.symbol(")")?;
            return Ok(inner);
        }
        let column = self.ident()?;
        if self.peek_keyword("IN") {
            self.pos += 1;
            self.symbol("(")?;
            let list = self.list(Self::literal)?;
            self.symbol(")")?;
            return Ok(Condition::In { column, list });
        }
        let op = match self.peek() {
            Some(Tok::Sym(s)) if matches!(*s, "=" | "<>" | "!=" | "<" | ">" | "<=" | ">=") => {
                s.to_string()
            }
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case("LIKE") => "LIKE".to_owned(),
            _ => return self.fail("expected comparison operator"),
        };
        self.pos += 1;
        let rhs = match self.peek() {
            Some(Tok::Word(w)) if !w.eq_ignore_ascii_case("NULL") => Operand::Column(self.ident()?),
            _ => Operand::Literal(self.literal()?),
        };
        Ok(Condition::Compare { column, op, rhs })
    }

    fn statement(&mut self) -> Result<Statement, ParseError> {
        let verb = match self.peek() {
            Some(Tok::Word(w)) => w.to_ascii_uppercase(),
            _ => return self.fail("expected statement"),
        };
        self.pos += 1;
        let stmt = match verb.as_str() {
            "SELECT" => {
                let columns = if self.eat_symbol("*") {
                    vec!["*".to_owned()]
                } else {
                    self.list(Self::ident)?
                };
                self.keyword("FROM")?;
                let table = self.ident()?;
                Statement::Select {
                    columns,
                    table,
                    filter: self.filter()?,
                }
            }
            "INSERT" => {
                self.keyword("INTO")?;
                let table = self.ident()?;
                self.symbol("(")?;
                let columns = self.list(Self::ident)?;
                self.symbol(")")?;
                self.keyword("VALUES")?;
                self.symbol("(")?;
                let at = self.position();
                let values = self.list(Self::literal)?;
                self.symbol(")")?;
                if values.len() != columns.len() {
                    return Err(ParseError::Sql {
                        position: at,
                        message: format!("{} columns but {} values", columns.len(), values.len()),
                    });
                }
                Statement::Insert {
                    table,
                    columns,
                    values,
                }
            }
            "UPDATE" => {
                let table = self.ident()?;
                self.keyword("SET")?;
                let assignments = self.list(|p| {
                    let column = p.ident()?;
                    p.symbol("=")?;
                    Ok((column, p.literal()?))
                })?;
                Statement::Update {
                    table,
                    assignments,
                    filter: self.filter()?,
                }
            }
            "DELETE" => {
                self.keyword("FROM")?;
                let table = self.ident()?;
                Statement::Delete {
                    table,
                    filter: self.filter()?,
                }
            }
            _ => {
                self.pos -= 1;
                return self.fail(format!("unsupported statement {verb}"));
            }
        };
        if self.pos < self.toks.len() {
            return self.fail("unexpected trailing input");
        }
        Ok(stmt)
    }
}

fn is_reserved(word: &str) -> bool {
    const RESERVED: &[&str] = &[
        "SELECT", "FROM", "WHERE", "AND", "OR", "IN", "LIKE", "INSERT", "INTO", "VALUES", "UPDATE",
        "SET", "DELETE", "NULL",
    ];
    RESERVED.iter().any(|r| r.eq_ignore_ascii_case(word))
}

/// Parses a query of the supported grammar into its AST.
pub fn parse_statement(text: &str) -> Result<Statement, ParseError> {
    let toks = lex(text)?;
    Parser {
        toks,
        pos: 0,
        end: text.len(),
    }
    .statement()
}

fn literal_term(lit: &Literal) -> TreeNode {
    match lit {
        Literal::Str(s) => TreeNode::term(Role::StrLiteral, s.as_str()),
        Literal::Num(n) => TreeNode::term(Role::NumLiteral, n.as_str()),
        Literal::Null => TreeNode::term(Role::NullLiteral, "NULL"),
    }
}

fn condition_node(cond: &Condition) -> TreeNode {
    match cond {
        Condition::Compare { column, op, rhs } => TreeNode::nterm(
            Role::Comparison,
            "cmp",
            vec![
                TreeNode::term(Role::Column, column.as_str()),
                TreeNode::term(Role::Operator, op.as_str()),
                match rhs {
                    Operand::Literal(l) => literal_term(l),
                    Operand::Column(c) => TreeNode::term(Role::Column, c.as_str()),
                },
            ],
        ),
        Condition::In { column, list } => TreeNode::nterm(
            Role::Comparison,
            "cmp",
            vec![
                TreeNode::term(Role::Column, column.as_str()),
                TreeNode::term(Role::Operator, "IN"),
                TreeNode::nterm(
                    Role::InList,
                    "in-list",
                    list.iter().map(literal_term).collect(),
                ),
            ],
        ),
        Condition::And(a, b) => {
            TreeNode::nterm(Role::And, "and", vec![condition_node(a), condition_node(b)])
        }
        Condition::Or(a, b) => {
            TreeNode::nterm(Role::Or, "or", vec![condition_node(a), condition_node(b)])
        }
    }
}

fn table_group(table: &str) -> TreeNode {
    TreeNode::group(GROUP_TABLE, vec![TreeNode::term(Role::Table, table)])
}

fn cond_group(filter: &Option<Condition>) -> Option<TreeNode> {
    filter.as_ref().map(|c| {
        TreeNode::group(
            GROUP_COND,
            vec![TreeNode::term(Role::Keyword, "WHERE"), condition_node(c)],
        )
    })
}

/// The parse tree of a statement.
pub fn statement_tree(stmt: &Statement) -> ParseTree {
    let mut children = vec![TreeNode::term(Role::Keyword, stmt.verb())];
    match stmt {
        Statement::Select {
            columns,
            table,
            filter,
        } => {
            children.push(TreeNode::group(
                GROUP_SELECT,
                columns
                    .iter()
                    .map(|c| TreeNode::term(Role::Column, c.as_str()))
                    .collect(),
            ));
            children.push(table_group(table));
            children.extend(cond_group(filter));
        }
        Statement::Insert {
            table,
            columns,
            values,
        } => {
            children.push(table_group(table));
            let mut vals = vec![TreeNode::term(Role::Keyword, "VALUES")];
            vals.extend(columns.iter().zip(values).map(|(c, v)| {
                TreeNode::nterm(
                    Role::Assign,
                    "val",
                    vec![TreeNode::term(Role::Column, c.as_str()), literal_term(v)],
                )
            }));
            children.push(TreeNode::group(GROUP_VALUES, vals));
        }
        Statement::Update {
            table,
            assignments,
            filter,
        } => {
            children.push(table_group(table));
            let mut set = vec![TreeNode::term(Role::Keyword, "SET")];
            set.extend(assignments.iter().map(|(c, v)| {
                TreeNode::nterm(
                    Role::Assign,
                    "assign",
                    vec![
                        TreeNode::term(Role::Column, c.as_str()),
                        TreeNode::term(Role::Operator, "="),
                        literal_term(v),
                    ],
                )
            }));
            children.push(TreeNode::group(GROUP_SET, set));
            children.extend(cond_group(filter));
        }
        Statement::Delete { table, filter } => {
            children.push(table_group(table));
            children.extend(cond_group(filter));
        }
    }
    ParseTree::new(TreeTag::Sql, children)
}

/// Parses a query of the supported grammar into its parse tree.
pub fn parse_sql(raw: &SqlQueryRaw) -> Result<ParseTree, ParseError> {
    if raw.text.trim().is_empty() {
        return Err(ParseError::Validation("empty SQL query".into()));
    }
    parse_statement(&raw.text).map(|s| statement_tree(&s))
}

/// Two-node tree (verb guess plus whole text) for queries outside the grammar.
/// Nothing in it is abstractable, so such queries cluster by exact text.
pub fn opaque_sql_tree(text: &str) -> ParseTree {
    let verb = text
        .split_whitespace()
        .next()
        .unwrap_or_default()
        .trim_end_matches(';')
        .to_ascii_uppercase();
    ParseTree::new(
        TreeTag::Sql,
        vec![
            TreeNode::term(Role::Keyword, verb),
            TreeNode::term(Role::SqlText, text),
        ],
    )
}

/// [`parse_sql`], falling back to [`opaque_sql_tree`] for out-of-grammar text.
pub fn parse_sql_lenient(raw: &SqlQueryRaw) -> Result<ParseTree, ParseError> {
    match parse_sql(raw) {
        Err(ParseError::Sql { .. }) => Ok(opaque_sql_tree(&raw.text)),
        other => other,
    }
}

/// Whether a (concrete or abstract) SQL tree writes persistent state.
pub fn mutates(tree: &ParseTree) -> bool {
    tree.root
        .children
        .first()
        .filter(|c| c.role == Role::Keyword)
        .is_some_and(|verb| MUTATING_VERBS.contains(&verb.symbol.to_ascii_uppercase().as_str()))
}

fn render_literal(node: &TreeNode) -> String {
    if node.symbol == PLACEHOLDER {
        return PLACEHOLDER.to_owned();
    }
    match node.role {
        Role::StrLiteral => format!("'{}'", node.symbol.replace('\'', "''")),
        _ => node.symbol.clone(),
    }
}

fn render_node(node: &TreeNode, out: &mut Vec<String>) {
    match node.role {
        Role::Comparison => {
            let [col, op, rhs] = node.children.as_slice() else {
                return;
            };
            let rhs = match rhs.role {
                Role::InList => format!(
                    "({})",
                    rhs.children
                        .iter()
                        .map(render_literal)
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
                Role::Column => rhs.symbol.clone(),
                _ => render_literal(rhs),
            };
            out.push(format!("{} {} {}", col.symbol, op.symbol, rhs));
        }
        Role::And | Role::Or => {
            let word = if node.role == Role::And { "AND" } else { "OR" };
            let parts: Vec<String> = node
                .children
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let mut inner = Vec::new();
                    render_node(c, &mut inner);
                    let text = inner.join(" ");
                    // OR binds looser than AND; both associate to the left
                    if (node.role == Role::And && c.role == Role::Or)
                        || (i == 1 && c.role == node.role)
                    {
                        format!("({text})")
                    } else {
                        text
                    }
                })
                .collect();
            out.push(parts.join(&format!(" {word} ")));
        }
        _ => out.push(node.symbol.clone()),
    }
}

/// SQL text of a tree; abstracted literals render as the placeholder.
pub fn render(tree: &ParseTree) -> String {
    let group = |name: &str| {
        tree.root
            .children
            .iter()
            .find(|c| c.role == Role::Group && c.symbol == name)
    };
    let verb = tree
        .root
        .children
        .first()
        .map(|c| c.symbol.clone())
        .unwrap_or_default();
    if let Some(text) = tree.root.children.iter().find(|c| c.role == Role::SqlText) {
        return text.symbol.clone();
    }
    let table = group(GROUP_TABLE)
        .and_then(|g| g.children.first())
        .map(|t| t.symbol.clone())
        .unwrap_or_default();
    let mut out = match verb.as_str() {
        "SELECT" => {
            let cols: Vec<&str> = group(GROUP_SELECT)
                .map(|g| g.children.iter().map(|c| c.symbol.as_str()).collect())
                .unwrap_or_default();
            format!("SELECT {} FROM {table}", cols.join(", "))
        }
        "INSERT" => {
            let pairs: Vec<&TreeNode> = group(GROUP_VALUES)
                .map(|g| {
                    g.children
                        .iter()
                        .filter(|c| c.role == Role::Assign)
                        .collect()
                })
                .unwrap_or_default();
            let cols: Vec<&str> = pairs
                .iter()
                .map(|p| p.children[0].symbol.as_str())
                .collect();
            let vals: Vec<String> = pairs
                .iter()
                .map(|p| render_literal(&p.children[1]))
                .collect();
            format!(
                "INSERT INTO {table} ({}) VALUES ({})",
                cols.join(", "),
                vals.join(", ")
            )
        }
        "UPDATE" => {
            let sets: Vec<String> = group(GROUP_SET)
                .map(|g| {
                    g.children
                        .iter()
                        .filter(|c| c.role == Role::Assign)
                        .map(|a| {
                            format!(
                                "{} = {}",
                                a.children[0].symbol,
                                render_literal(&a.children[2])
                            )
                        })
                        .collect()
                })
                .unwrap_or_default();
            format!("UPDATE {table} SET {}", sets.join(", "))
        }
        "DELETE" => format!("DELETE FROM {table}"),
        other => other.to_owned(),
    };
    if let Some(cond) = group(GROUP_COND) {
        let mut parts = Vec::new();
        for c in cond.children.iter().filter(|c| c.kind != NodeKind::Term) {
            render_node(c, &mut parts);
        }
        out.push_str(" WHERE ");
        out.push_str(&parts.join(" "));
    }
    out
}

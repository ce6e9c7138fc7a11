//! Reader and writer for the ARFF attribute-relation text format.
//!
//! Only dense rows are supported. Keywords (`@relation`, `@attribute`,
//! `@data`, type names) match case-insensitively; attribute names and
//! nominal levels are case-sensitive. A `%` outside quotes starts a
//! comment that runs to the end of the line.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pattern recorded for `date` attributes declared without one.
pub const DEFAULT_DATE_PATTERN: &str = "yyyy-MM-dd'T'HH:mm:ss";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "spec")]
pub enum AttributeKind {
    Numeric,
    Nominal(Vec<String>),
    String,
    Date(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: AttributeKind,
}

impl Attribute {
    pub fn numeric(name: impl Into<String>) -> Self {
        Attribute { name: name.into(), kind: AttributeKind::Numeric }
    }

    pub fn nominal<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        Attribute {
            name: name.into(),
            kind: AttributeKind::Nominal(levels.into_iter().map(Into::into).collect()),
        }
    }

    pub fn string(name: impl Into<String>) -> Self {
        Attribute { name: name.into(), kind: AttributeKind::String }
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.kind {
            AttributeKind::Nominal(levels) => Some(levels),
            _ => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, AttributeKind::Numeric)
    }

    pub fn is_nominal(&self) -> bool {
        matches!(self.kind, AttributeKind::Nominal(_))
    }
}

/// A single cell. Nominal cells hold the index of the declared level; date
/// cells are kept as their raw text.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Str(String),
    Nominal(usize),
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_level(&self) -> Option<usize> {
        match self {
            Value::Nominal(i) => Some(*i),
            _ => None,
        }
    }
}

/// Error raised when a relation is assembled in code with broken invariants.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvalidRelation {
    #[error("attribute name must not be empty")]
    EmptyName,
    #[error("duplicate attribute '{0}'")]
    DuplicateAttribute(String),
    #[error("nominal attribute '{0}' declares no levels")]
    EmptyLevels(String),
    #[error("nominal attribute '{attribute}' declares level '{level}' twice")]
    DuplicateLevel { attribute: String, level: String },
    #[error("row has {got} values, relation has {expected} attributes")]
    Arity { expected: usize, got: usize },
    #[error("value in column '{attribute}' is not compatible with its type")]
    Type { attribute: String },
}

/// Parse failure, positioned at the first offending line and column (both 1-based).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArffError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("type error at {line}:{col}: {value:?} is not a valid {expected} value for attribute '{attribute}'")]
    Type { line: usize, col: usize, attribute: String, value: String, expected: String },
    #[error("duplicate attribute '{name}' at {line}:{col}")]
    DuplicateAttribute { line: usize, col: usize, name: String },
    #[error("sparse data row at {line}:{col} is not supported")]
    SparseRow { line: usize, col: usize },
}

impl ArffError {
    pub fn position(&self) -> (usize, usize) {
        match self {
            ArffError::Syntax { line, col, .. }
            | ArffError::Type { line, col, .. }
            | ArffError::DuplicateAttribute { line, col, .. }
            | ArffError::SparseRow { line, col } => (*line, *col),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub name: String,
    attributes: Vec<Attribute>,
    rows: Vec<Vec<Value>>,
}

impl Relation {
    pub fn new(name: impl Into<String>, attributes: Vec<Attribute>) -> Result<Self, InvalidRelation> {
        let mut seen = HashSet::new();
        for attr in &attributes {
            check_attribute(attr)?;
            if !seen.insert(attr.name.as_str()) {
                return Err(InvalidRelation::DuplicateAttribute(attr.name.clone()));
            }
        }
        Ok(Relation { name: name.into(), attributes, rows: Vec::new() })
    }

    pub fn push_row(&mut self, row: Vec<Value>) -> Result<(), InvalidRelation> {
        if row.len() != self.attributes.len() {
            return Err(InvalidRelation::Arity { expected: self.attributes.len(), got: row.len() });
        }
        for (attr, value) in self.attributes.iter().zip(&row) {
            if !value_fits(attr, value) {
                return Err(InvalidRelation::Type { attribute: attr.name.clone() });
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn column(&self, index: usize) -> impl Iterator<Item = &Value> + '_ {
        self.rows.iter().map(move |row| &row[index])
    }

    pub fn missing_count(&self) -> usize {
        self.rows.iter().flatten().filter(|v| v.is_missing()).count()
    }

    /// Parses ARFF text. `\r\n` line endings are accepted.
    pub fn parse(text: &str) -> Result<Self, ArffError> {
        Parser::default().run(text)
    }

    /// Serializes to ARFF text with `\n` line endings.
    pub fn to_arff(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "@relation {}", quote_if_needed(&self.name));
        out.push('\n');
        for attr in &self.attributes {
            let _ = write!(out, "@attribute {} ", quote_if_needed(&attr.name));
            match &attr.kind {
                AttributeKind::Numeric => out.push_str("numeric"),
                AttributeKind::String => out.push_str("string"),
                AttributeKind::Date(pattern) => {
                    out.push_str("date ");
                    out.push_str(&quote(pattern));
                }
                AttributeKind::Nominal(levels) => {
                    out.push('{');
                    for (i, level) in levels.iter().enumerate() {
                        if i > 0 {
                            out.push(',');
                        }
                        out.push_str(&quote_if_needed(level));
                    }
                    out.push('}');
                }
            }
            out.push('\n');
        }
        out.push('\n');
        out.push_str("@data\n");
        for row in &self.rows {
            for (i, (attr, value)) in self.attributes.iter().zip(row).enumerate() {
                if i > 0 {
                    out.push(',');
                }
                match value {
                    Value::Missing => out.push('?'),
                    Value::Number(v) => out.push_str(&format_number(*v)),
                    Value::Str(s) => out.push_str(&quote_if_needed(s)),
                    Value::Nominal(idx) => {
                        let levels = attr.levels().expect("nominal value in nominal column");
                        out.push_str(&quote_if_needed(&levels[*idx]));
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn parse_arff(text: &str) -> Result<Relation, ArffError> {
    Relation::parse(text)
}

pub fn write_arff(relation: &Relation) -> String {
    relation.to_arff()
}

fn check_attribute(attr: &Attribute) -> Result<(), InvalidRelation> {
    if attr.name.is_empty() {
        return Err(InvalidRelation::EmptyName);
    }
    if let AttributeKind::Nominal(levels) = &attr.kind {
        if levels.is_empty() {
            return Err(InvalidRelation::EmptyLevels(attr.name.clone()));
        }
        let mut seen = HashSet::new();
        for level in levels {
            if !seen.insert(level.as_str()) {
                return Err(InvalidRelation::DuplicateLevel {
                    attribute: attr.name.clone(),
                    level: level.clone(),
                });
            }
        }
    }
    Ok(())
}

fn value_fits(attr: &Attribute, value: &Value) -> bool {
    match (&attr.kind, value) {
        (_, Value::Missing) => true,
        (AttributeKind::Numeric, Value::Number(v)) => v.is_finite(),
        (AttributeKind::Nominal(levels), Value::Nominal(i)) => *i < levels.len(),
        (AttributeKind::String | AttributeKind::Date(_), Value::Str(_)) => true,
        _ => false,
    }
}

/// Shortest text that parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let magnitude = v.abs();
    if !(1e-6..1e16).contains(&magnitude) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn needs_quoting(s: &str) -> bool {
    s.is_empty()
        || s == "?"
        || s.chars().any(|c| {
            c.is_whitespace()
                || c.is_control()
                || matches!(c, ',' | '%' | '\'' | '"' | '\\' | '{' | '}')
        })
}

fn quote_if_needed(s: &str) -> String {
    if needs_quoting(s) {
        quote(s)
    } else {
        s.to_string()
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c.is_control() => {
                let _ = write!(out, "\\u{{{:x}}}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

#[derive(Debug, Clone)]
struct Token {
    text: String,
    quoted: bool,
    col: usize,
}

/// Character cursor over one line; columns are 1-based character offsets.
struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    _src: std::marker::PhantomData<&'a str>,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str, line: usize) -> Self {
        Cursor { chars: text.chars().collect(), pos: 0, line, _src: std::marker::PhantomData }
    }

    fn col(&self) -> usize {
        self.pos + 1
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    /// True when only whitespace or a comment remains.
    fn at_end(&mut self) -> bool {
        self.skip_ws();
        matches!(self.peek(), None | Some('%'))
    }

    fn error(&self, col: usize, message: impl Into<String>) -> ArffError {
        ArffError::Syntax { line: self.line, col, message: message.into() }
    }

    fn read_quoted(&mut self) -> Result<Token, ArffError> {
        let col = self.col();
        let quote = self.chars[self.pos];
        self.pos += 1;
        let mut text = String::new();
        loop {
            match self.peek() {
                None => return Err(self.error(col, "unterminated quoted string")),
                Some(c) if c == quote => {
                    self.pos += 1;
                    return Ok(Token { text, quoted: true, col });
                }
                Some('\\') => {
                    let esc_col = self.col();
                    self.pos += 1;
                    let Some(e) = self.peek() else {
                        return Err(self.error(esc_col, "dangling escape"));
                    };
                    self.pos += 1;
                    match e {
                        'n' => text.push('\n'),
                        'r' => text.push('\r'),
                        't' => text.push('\t'),
                        'u' => text.push(self.read_unicode_escape(esc_col)?),
                        '\\' | '\'' | '"' | '%' | ',' => text.push(e),
                        other => {
                            return Err(self.error(esc_col, format!("unknown escape '\\{other}'")))
                        }
                    }
                }
                Some(c) => {
                    text.push(c);
                    self.pos += 1;
                }
            }
        }
    }

    fn read_unicode_escape(&mut self, esc_col: usize) -> Result<char, ArffError> {
        if self.peek() != Some('{') {
            return Err(self.error(esc_col, "expected '{' after \\u"));
        }
        self.pos += 1;
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_hexdigit()) {
            self.pos += 1;
        }
        let digits: String = self.chars[start..self.pos].iter().collect();
        if self.peek() != Some('}') || digits.is_empty() {
            return Err(self.error(esc_col, "malformed \\u{...} escape"));
        }
        self.pos += 1;
        u32::from_str_radix(&digits, 16)
            .ok()
            .and_then(char::from_u32)
            .ok_or_else(|| self.error(esc_col, "invalid code point in escape"))
    }

    /// Reads a quoted token or a bare run of characters not in `stops`.
    fn read_token(&mut self, stops: &[char]) -> Result<Option<Token>, ArffError> {
        self.skip_ws();
        match self.peek() {
            None | Some('%') => Ok(None),
            Some('\'' | '"') => self.read_quoted().map(Some),
            Some(_) => {
                let col = self.col();
                let start = self.pos;
                while let Some(c) = self.peek() {
                    if c == '%' || stops.contains(&c) {
                        break;
                    }
                    self.pos += 1;
                }
                let text: String = self.chars[start..self.pos].iter().collect();
                let text = text.trim_end().to_string();
                if text.is_empty() {
                    return Ok(None);
                }
                Ok(Some(Token { text, quoted: false, col }))
            }
        }
    }

    /// Reads a comma-separated list of fields terminated by `end` (or end of
    /// line when `end` is `None`).
    fn read_fields(&mut self, end: Option<char>) -> Result<Vec<Token>, ArffError> {
        let mut stops = vec![','];
        if let Some(e) = end {
            stops.push(e);
        }
        let mut fields = Vec::new();
        loop {
            self.skip_ws();
            let field_col = self.col();
            let token = self
                .read_token(&stops)?
                .ok_or_else(|| self.error(field_col, "empty value"))?;
            fields.push(token);
            self.skip_ws();
            match (self.peek(), end) {
                (Some(','), _) => self.pos += 1,
                (Some(c), Some(e)) if c == e => {
                    self.pos += 1;
                    return Ok(fields);
                }
                (None | Some('%'), None) => return Ok(fields),
                (None | Some('%'), Some(e)) => {
                    return Err(self.error(self.col(), format!("expected '{e}'")))
                }
                (Some(c), _) => {
                    return Err(self.error(self.col(), format!("unexpected character '{c}'")))
                }
            }
        }
    }
}

#[derive(Default)]
enum Section {
    #[default]
    Preamble,
    Header,
    Data,
}

#[derive(Default)]
struct Parser {
    section: Section,
    name: Option<String>,
    attributes: Vec<Attribute>,
    rows: Vec<Vec<Value>>,
}

fn keyword(token: &Token, expected: &str) -> bool {
    !token.quoted && token.text.eq_ignore_ascii_case(expected)
}

impl Parser {
    fn run(mut self, text: &str) -> Result<Relation, ArffError> {
        let mut last_line = 1;
        for (idx, raw) in text.split('\n').enumerate() {
            let line_no = idx + 1;
            last_line = line_no;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            match self.section {
                Section::Data => self.data_line(line, line_no)?,
                _ => self.header_line(line, line_no)?,
            }
        }
        match (self.section, self.name) {
            (Section::Data, Some(name)) => {
                Ok(Relation { name, attributes: self.attributes, rows: self.rows })
            }
            (Section::Preamble, _) | (_, None) => Err(ArffError::Syntax {
                line: last_line,
                col: 1,
                message: "missing @relation declaration".into(),
            }),
            (Section::Header, _) => Err(ArffError::Syntax {
                line: last_line,
                col: 1,
                message: "missing @data section".into(),
            }),
        }
    }

    fn header_line(&mut self, line: &str, line_no: usize) -> Result<(), ArffError> {
        let mut cur = Cursor::new(line, line_no);
        if cur.at_end() {
            return Ok(());
        }
        let col = cur.col();
        let head_word = cur
            .read_token(&[' ', '\t'])?
            .ok_or_else(|| cur.error(col, "expected a declaration"))?;

        match self.section {
            Section::Preamble => {
                if !keyword(&head_word, "@relation") {
                    return Err(cur.error(col, "expected @relation"));
                }
                let name_col = cur.col();
                let name = cur
                    .read_token(&[' ', '\t', '{'])?
                    .ok_or_else(|| cur.error(name_col, "missing relation name"))?;
                if !cur.at_end() {
                    return Err(cur.error(cur.col(), "trailing characters after relation name"));
                }
                self.name = Some(name.text);
                self.section = Section::Header;
                Ok(())
            }
            Section::Header => {
                if keyword(&head_word, "@data") {
                    if !cur.at_end() {
                        return Err(cur.error(cur.col(), "trailing characters after @data"));
                    }
                    self.section = Section::Data;
                    Ok(())
                } else if keyword(&head_word, "@attribute") {
                    self.attribute(&mut cur)
                } else if keyword(&head_word, "@relation") {
                    Err(cur.error(col, "duplicate @relation declaration"))
                } else {
                    Err(cur.error(col, format!("unexpected '{}' in header", head_word.text)))
                }
            }
            Section::Data => unreachable!(),
        }
    }

    fn attribute(&mut self, cur: &mut Cursor<'_>) -> Result<(), ArffError> {
        let name_col = cur.col();
        cur.skip_ws();
        let name_col = cur.col().max(name_col);
        let name = cur
            .read_token(&[' ', '\t', '{'])?
            .ok_or_else(|| cur.error(name_col, "missing attribute name"))?;
        if name.text.is_empty() {
            return Err(cur.error(name.col, "attribute name must not be empty"));
        }
        if self.attributes.iter().any(|a| a.name == name.text) {
            return Err(ArffError::DuplicateAttribute { line: cur.line, col: name.col, name: name.text });
        }
        cur.skip_ws();
        let type_col = cur.col();
        let kind = match cur.peek() {
            Some('{') => {
                cur.pos += 1;
                let tokens = cur.read_fields(Some('}'))?;
                let mut levels: Vec<String> = Vec::with_capacity(tokens.len());
                for t in tokens {
                    if levels.contains(&t.text) {
                        return Err(cur.error(t.col, format!("duplicate nominal level '{}'", t.text)));
                    }
                    levels.push(t.text);
                }
                AttributeKind::Nominal(levels)
            }
            _ => {
                let ty = cur
                    .read_token(&[' ', '\t'])?
                    .ok_or_else(|| cur.error(type_col, "missing attribute type"))?;
                match ty.text.to_ascii_lowercase().as_str() {
                    _ if ty.quoted => return Err(cur.error(ty.col, "attribute type must not be quoted")),
                    "numeric" | "integer" | "real" => AttributeKind::Numeric,
                    "string" => AttributeKind::String,
                    "date" => {
                        let pattern = cur.read_token(&[' ', '\t'])?;
                        AttributeKind::Date(
                            pattern.map(|p| p.text).unwrap_or_else(|| DEFAULT_DATE_PATTERN.to_string()),
                        )
                    }
                    "relational" => {
                        return Err(cur.error(ty.col, "relational attributes are not supported"))
                    }
                    other => return Err(cur.error(ty.col, format!("unknown attribute type '{other}'"))),
                }
            }
        };
        if !cur.at_end() {
            return Err(cur.error(cur.col(), "trailing characters after attribute type"));
        }
        self.attributes.push(Attribute { name: name.text, kind });
        Ok(())
    }

    fn data_line(&mut self, line: &str, line_no: usize) -> Result<(), ArffError> {
        let mut cur = Cursor::new(line, line_no);
        if cur.at_end() {
            return Ok(());
        }
        if cur.peek() == Some('{') {
            return Err(ArffError::SparseRow { line: line_no, col: cur.col() });
        }
        let fields = cur.read_fields(None)?;
        if fields.len() != self.attributes.len() {
            return Err(cur.error(
                1,
                format!("row has {} values, expected {}", fields.len(), self.attributes.len()),
            ));
        }
        let mut row = Vec::with_capacity(fields.len());
        for (attr, field) in self.attributes.iter().zip(fields) {
            row.push(convert(attr, field, line_no)?);
        }
        self.rows.push(row);
        Ok(())
    }
}

fn convert(attr: &Attribute, token: Token, line: usize) -> Result<Value, ArffError> {
    if !token.quoted && token.text == "?" {
        return Ok(Value::Missing);
    }
    let type_error = |expected: &str, token: Token| ArffError::Type {
        line,
        col: token.col,
        attribute: attr.name.clone(),
        value: token.text,
        expected: expected.to_string(),
    };
    match &attr.kind {
        AttributeKind::Numeric => match parse_number(&token.text) {
            Some(v) => Ok(Value::Number(v)),
            None => Err(type_error("numeric", token)),
        },
        AttributeKind::Nominal(levels) => match levels.iter().position(|l| *l == token.text) {
            Some(i) => Ok(Value::Nominal(i)),
            None => Err(type_error("nominal", token)),
        },
        AttributeKind::String | AttributeKind::Date(_) => Ok(Value::Str(token.text)),
    }
}

fn parse_number(text: &str) -> Option<f64> {
    let looks_numeric = text
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
    if !looks_numeric {
        return None;
    }
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

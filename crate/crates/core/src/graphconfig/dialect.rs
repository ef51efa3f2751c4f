//! Minimal declarative config reader.
//!
//! Supported: `[a.b]` tables, `[[a.b]]` arrays of tables, `key = value` with
//! bare or quoted keys, basic/literal strings, integers, floats, booleans
//! (`true`/`false`, plus `True`/`False` as written in older listings),
//! single-level arrays of scalars, and `#` comments. Everything else is a
//! syntax error.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at line {line}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    String(String),
    Integer(i64),
    Float(f64),
    Boolean(bool),
    Array(Vec<Value>),
    Table(Table),
    TableArray(Vec<Table>),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::String(_) => "string",
            Value::Integer(_) => "integer",
            Value::Float(_) => "float",
            Value::Boolean(_) => "boolean",
            Value::Array(_) => "array",
            Value::Table(_) => "table",
            Value::TableArray(_) => "array of tables",
        }
    }
}

/// An ordered table. `line` is where it was opened (0 for the root).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub entries: Vec<(String, Value)>,
    pub line: usize,
    explicit: bool,
}

impl Table {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    fn get_mut(&mut self, key: &str) -> Option<&mut Value> {
        self.entries.iter_mut().find(|(k, _)| k == key).map(|(_, v)| v)
    }
}

pub fn parse(text: &str) -> Result<Table, SyntaxError> {
    let mut root = Table {
        explicit: true,
        ..Table::default()
    };
    // Path of the table currently receiving key/value pairs.
    let mut current: Vec<String> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| SyntaxError { line: line_no, message };
        let line = strip_comment(raw.strip_suffix('\r').unwrap_or(raw)).map_err(err)?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("[[") {
            let inner = rest
                .strip_suffix("]]")
                .ok_or_else(|| err("unterminated array-of-tables header".into()))?;
            let path = parse_header_path(inner).map_err(err)?;
            open_array_table(&mut root, &path, line_no).map_err(err)?;
            current = path;
        } else if let Some(rest) = line.strip_prefix('[') {
            let inner = rest
                .strip_suffix(']')
                .ok_or_else(|| err("unterminated table header".into()))?;
            let path = parse_header_path(inner).map_err(err)?;
            open_table(&mut root, &path, line_no).map_err(err)?;
            current = path;
        } else {
            let (key, rest) = parse_key(line).map_err(err)?;
            let rest = rest.trim_start();
            let rest = rest
                .strip_prefix('=')
                .ok_or_else(|| err(format!("expected `=` after key `{key}`")))?;
            let mut cursor = Cursor::new(rest.trim());
            let value = cursor.value(true).map_err(err)?;
            cursor.skip_ws();
            if !cursor.done() {
                return Err(err(format!("unexpected trailing input `{}`", cursor.rest())));
            }
            let table = resolve_mut(&mut root, &current).map_err(err)?;
            if table.get(&key).is_some() {
                return Err(err(format!("duplicate key `{key}`")));
            }
            table.entries.push((key, value));
        }
    }
    Ok(root)
}

fn strip_comment(line: &str) -> Result<&str, String> {
    let mut in_basic = false;
    let mut in_literal = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_basic => escaped = true,
            '"' if !in_literal => in_basic = !in_basic,
            '\'' if !in_basic => in_literal = !in_literal,
            '#' if !in_basic && !in_literal => return Ok(&line[..i]),
            _ => {}
        }
    }
    Ok(line)
}

fn is_bare(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

fn parse_key(s: &str) -> Result<(String, &str), String> {
    let mut cursor = Cursor::new(s);
    let key = cursor.key()?;
    cursor.skip_ws();
    if cursor.peek() == Some('.') {
        return Err("dotted keys are not supported; use a table header".into());
    }
    Ok((key, cursor.rest()))
}

fn parse_header_path(s: &str) -> Result<Vec<String>, String> {
    let mut cursor = Cursor::new(s.trim());
    let mut path = vec![cursor.key()?];
    loop {
        cursor.skip_ws();
        match cursor.peek() {
            None => break,
            Some('.') => {
                cursor.bump();
                cursor.skip_ws();
                path.push(cursor.key()?);
            }
            Some(c) => return Err(format!("unexpected `{c}` in table header")),
        }
    }
    Ok(path)
}

/// Walks to the table at `path`, descending into the last element of any
/// array of tables along the way.
fn resolve_mut<'a>(root: &'a mut Table, path: &[String]) -> Result<&'a mut Table, String> {
    let mut table = root;
    for key in path {
        table = match table.get_mut(key) {
            Some(Value::Table(t)) => t,
            Some(Value::TableArray(ts)) => ts.last_mut().expect("array of tables is never empty"),
            Some(v) => return Err(format!("`{key}` is a {}, not a table", v.type_name())),
            None => return Err(format!("no table `{key}`")),
        };
    }
    Ok(table)
}

fn ensure_parent<'a>(root: &'a mut Table, parent: &[String], line: usize) -> Result<&'a mut Table, String> {
    let mut table = root;
    for key in parent {
        if table.get(key).is_none() {
            table.entries.push((
                key.clone(),
                Value::Table(Table {
                    line,
                    ..Table::default()
                }),
            ));
        }
        table = match table.get_mut(key) {
            Some(Value::Table(t)) => t,
            Some(Value::TableArray(ts)) => ts.last_mut().expect("array of tables is never empty"),
            Some(v) => return Err(format!("`{key}` is a {}, not a table", v.type_name())),
            None => unreachable!(),
        };
    }
    Ok(table)
}

fn open_table(root: &mut Table, path: &[String], line: usize) -> Result<(), String> {
    let (last, parent) = path.split_last().expect("header path is non-empty");
    let parent = ensure_parent(root, parent, line)?;
    match parent.get_mut(last) {
        None => {
            parent.entries.push((
                last.clone(),
                Value::Table(Table {
                    entries: Vec::new(),
                    line,
                    explicit: true,
                }),
            ));
            Ok(())
        }
        Some(Value::Table(t)) if !t.explicit => {
            t.explicit = true;
            t.line = line;
            Ok(())
        }
        Some(_) => Err(format!("table `{}` defined twice", path.join("."))),
    }
}

fn open_array_table(root: &mut Table, path: &[String], line: usize) -> Result<(), String> {
    let (last, parent) = path.split_last().expect("header path is non-empty");
    let parent = ensure_parent(root, parent, line)?;
    let fresh = Table {
        entries: Vec::new(),
        line,
        explicit: true,
    };
    match parent.get_mut(last) {
        None => {
            parent.entries.push((last.clone(), Value::TableArray(vec![fresh])));
            Ok(())
        }
        Some(Value::TableArray(ts)) => {
            ts.push(fresh);
            Ok(())
        }
        Some(v) => Err(format!("`{}` is already a {}", path.join("."), v.type_name())),
    }
}

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(s: &'a str) -> Self {
        Cursor { s, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.s[self.pos..]
    }

    fn done(&self) -> bool {
        self.pos >= self.s.len()
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t')) {
            self.bump();
        }
    }

    fn key(&mut self) -> Result<String, String> {
        match self.peek() {
            Some('"') => self.basic_string(),
            Some('\'') => self.literal_string(),
            Some(c) if is_bare(c) => {
                let start = self.pos;
                while self.peek().is_some_and(is_bare) {
                    self.bump();
                }
                Ok(self.s[start..self.pos].to_string())
            }
            Some(c) => Err(format!("unexpected `{c}` where a key was expected")),
            None => Err("missing key".into()),
        }
    }

    fn value(&mut self, allow_array: bool) -> Result<Value, String> {
        match self.peek() {
            Some('"') => self.basic_string().map(Value::String),
            Some('\'') => self.literal_string().map(Value::String),
            Some('[') if allow_array => self.array(),
            Some('[') => Err("nested arrays are not supported".into()),
            Some('{') => Err("inline tables are not supported".into()),
            Some(_) => self.atom(),
            None => Err("missing value".into()),
        }
    }

    fn array(&mut self) -> Result<Value, String> {
        self.bump();
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(']') {
                self.bump();
                break;
            }
            items.push(self.value(false)?);
            self.skip_ws();
            match self.bump() {
                Some(',') => continue,
                Some(']') => break,
                Some(c) => return Err(format!("unexpected `{c}` in array")),
                None => return Err("unterminated array (arrays must fit on one line)".into()),
            }
        }
        Ok(Value::Array(items))
    }

    fn basic_string(&mut self) -> Result<String, String> {
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err("unterminated string".into()),
                Some('"') => return Ok(out),
                Some('\\') => match self.bump() {
                    Some('"') => out.push('"'),
                    Some('\\') => out.push('\\'),
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some('r') => out.push('\r'),
                    Some('u') => {
                        let hex: String = (0..4).filter_map(|_| self.bump()).collect();
                        let cp = u32::from_str_radix(&hex, 16).map_err(|_| format!("bad escape \\u{hex}"))?;
                        out.push(char::from_u32(cp).ok_or_else(|| format!("bad code point \\u{hex}"))?);
                    }
                    Some(c) => return Err(format!("unsupported escape `\\{c}`")),
                    None => return Err("unterminated string".into()),
                },
                Some(c) => out.push(c),
            }
        }
    }

    fn literal_string(&mut self) -> Result<String, String> {
        self.bump();
        let start = self.pos;
        while let Some(c) = self.bump() {
            if c == '\'' {
                return Ok(self.s[start..self.pos - 1].to_string());
            }
        }
        Err("unterminated literal string".into())
    }

    fn atom(&mut self) -> Result<Value, String> {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.' | '_'))
        {
            self.bump();
        }
        let word = &self.s[start..self.pos];
        match word {
            "true" | "True" => return Ok(Value::Boolean(true)),
            "false" | "False" => return Ok(Value::Boolean(false)),
            "" => return Err(format!("unexpected `{}`", self.rest())),
            _ => {}
        }
        let cleaned = clean_number(word).ok_or_else(|| format!("invalid value `{word}`"))?;
        if cleaned.contains(['.', 'e', 'E']) || matches!(cleaned.trim_start_matches(['+', '-']), "inf" | "nan") {
            cleaned
                .parse::<f64>()
                .map(Value::Float)
                .map_err(|_| format!("invalid float `{word}`"))
        } else {
            cleaned
                .parse::<i64>()
                .map(Value::Integer)
                .map_err(|_| format!("invalid integer `{word}`"))
        }
    }
}

/// Strips digit separators, rejecting misplaced underscores and leading zeros.
fn clean_number(word: &str) -> Option<String> {
    if word.starts_with('_') || word.ends_with('_') || word.contains("__") {
        return None;
    }
    let cleaned = word.replace('_', "");
    let body = cleaned.trim_start_matches(['+', '-']);
    if body.is_empty() {
        return None;
    }
    if body == "inf" || body == "nan" {
        return Some(cleaned);
    }
    if !body.chars().next()?.is_ascii_digit() {
        return None;
    }
    let int_part: String = body.chars().take_while(char::is_ascii_digit).collect();
    if int_part.len() > 1 && int_part.starts_with('0') {
        return None;
    }
    Some(cleaned)
}

//! Single-file parameter injection.
//!
//! A config file is a list of `Component.param = literal` lines. `#` starts a
//! comment. Later bindings of the same path win. Components read their
//! parameters through a [`Resolver`], which records every effective value so
//! the complete configuration of a run can be dumped and re-parsed.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{source_name}:{line}: {message} (at `{token}`)")]
    Syntax { source_name: String, line: usize, token: String, message: String },
    #[error("`{path}`: expected {expected}, found {found}")]
    Type { path: String, expected: &'static str, found: String },
    #[error("`{path}`: {message}")]
    Invalid { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    /// A bare or `@`-prefixed name, e.g. `@Adam` or `linearly_decaying_epsilon`.
    Ident(String),
    List(Vec<Literal>),
}

impl Literal {
    fn kind(&self) -> &'static str {
        match self {
            Literal::Int(_) => "integer",
            Literal::Float(_) => "decimal",
            Literal::Bool(_) => "boolean",
            Literal::Str(_) => "string",
            Literal::Ident(_) => "identifier",
            Literal::List(_) => "list",
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            // Debug formatting is the shortest representation that parses
            // back to the same bits and always carries a `.` or exponent.
            Literal::Float(v) => write!(f, "{v:?}"),
            Literal::Bool(true) => f.write_str("True"),
            Literal::Bool(false) => f.write_str("False"),
            Literal::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            Literal::Ident(name) => write!(f, "@{name}"),
            Literal::List(items) => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Binding {
    /// Dotted path; the last two segments name the component and parameter.
    pub path: Vec<String>,
    pub value: Literal,
    pub line: usize,
}

impl Binding {
    pub fn path_string(&self) -> String {
        self.path.join(".")
    }

    fn matches(&self, component: &str, param: &str) -> bool {
        let n = self.path.len();
        self.path[n - 2] == component && self.path[n - 1] == param
    }
}

/// Ordered bindings from one source. Immutable once parsed; overrides are
/// appended with [`ConfigSet::extend`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigSet {
    pub source_name: String,
    pub bindings: Vec<Binding>,
}

impl ConfigSet {
    pub fn empty(source_name: &str) -> Self {
        Self { source_name: source_name.to_string(), bindings: Vec::new() }
    }

    /// Appends `other`'s bindings after this set's, so they take precedence.
    pub fn extend(&mut self, other: ConfigSet) {
        self.bindings.extend(other.bindings);
    }

    /// Last binding for `component.param`, if any.
    pub fn lookup(&self, component: &str, param: &str) -> Option<&Binding> {
        self.bindings.iter().rev().find(|b| b.matches(component, param))
    }

    /// Raw lookup of a dotted `Component.param` key.
    pub fn lookup_key(&self, key: &str) -> Option<&Literal> {
        let (component, param) = key.rsplit_once('.')?;
        let component = component.rsplit('.').next().unwrap_or(component);
        self.lookup(component, param).map(|b| &b.value)
    }

    /// Returns the untyped value bound to `component.param`, else `default`.
    pub fn resolve(&self, component: &str, param: &str, default: Literal) -> Literal {
        self.lookup(component, param).map_or(default, |b| b.value.clone())
    }
}

pub fn parse_config(text: &str, source_name: &str) -> Result<ConfigSet, ConfigError> {
    let mut set = ConfigSet::empty(source_name);
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let err = |token: &str, message: &str| ConfigError::Syntax {
            source_name: source_name.to_string(),
            line,
            token: token.to_string(),
            message: message.to_string(),
        };
        let content = strip_comment(raw).map_err(|t| err(&t, "unterminated string"))?.trim();
        if content.is_empty() {
            continue;
        }
        let Some((lhs, rhs)) = content.split_once('=') else {
            return Err(err(content, "expected `path = value`"));
        };
        let lhs = lhs.trim();
        let path: Vec<String> = lhs.split('.').map(|s| s.trim().to_string()).collect();
        if path.len() < 2 || path.iter().any(|s| !is_identifier(s)) {
            return Err(err(lhs, "binding path must be `Component.param`"));
        }
        if rhs.trim_start().starts_with('=') {
            return Err(err(rhs.trim(), "duplicate `=`"));
        }
        let mut lexer = Lexer { chars: rhs.trim().chars().collect(), pos: 0 };
        let value = lexer.literal().map_err(|(token, message)| err(&token, &message))?;
        lexer.skip_ws();
        if lexer.pos < lexer.chars.len() {
            let rest: String = lexer.chars[lexer.pos..].iter().collect();
            let message = if rest.starts_with('=') { "duplicate `=`" } else { "unexpected trailing input" };
            return Err(err(&rest, message));
        }
        set.bindings.push(Binding { path, value, line });
    }
    Ok(set)
}

/// Parses `key=value` command-line overrides.
pub fn parse_overrides<S: AsRef<str>>(overrides: &[S]) -> Result<ConfigSet, ConfigError> {
    let text: Vec<&str> = overrides.iter().map(|s| s.as_ref()).collect();
    parse_config(&text.join("\n"), "--binding")
}

/// Removes a trailing `#` comment, respecting string literals. Returns the
/// offending text if a string is unterminated.
fn strip_comment(line: &str) -> Result<&str, String> {
    let mut in_string = false;
    let mut escaped = false;
    let mut start = 0;
    for (i, c) in line.char_indices() {
        if in_string {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_string = false,
                _ => {}
            }
        } else if c == '"' {
            in_string = true;
            start = i;
        } else if c == '#' {
            return Ok(&line[..i]);
        }
    }
    if in_string {
        return Err(line[start..].to_string());
    }
    Ok(line)
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
}

type LexError = (String, String);

impl Lexer {
    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn rest(&self) -> String {
        self.chars[self.pos.min(self.chars.len())..].iter().collect()
    }

    fn literal(&mut self) -> Result<Literal, LexError> {
        self.skip_ws();
        match self.peek() {
            None => Err((String::new(), "missing value".into())),
            Some('"') => self.string(),
            Some('[') => self.list(),
            Some('@') => {
                self.pos += 1;
                let word = self.word();
                if !is_identifier(&word) {
                    return Err((format!("@{word}"), "invalid reference".into()));
                }
                Ok(Literal::Ident(word))
            }
            Some(c) if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => self.number(),
            Some(_) => {
                let word = self.word();
                match word.as_str() {
                    "True" => Ok(Literal::Bool(true)),
                    "False" => Ok(Literal::Bool(false)),
                    w if is_identifier(w) => Ok(Literal::Ident(word)),
                    _ => Err((self.rest_or(&word), "invalid literal".into())),
                }
            }
        }
    }

    fn rest_or(&self, word: &str) -> String {
        if word.is_empty() {
            self.rest()
        } else {
            word.to_string()
        }
    }

    fn word(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                self.pos += 1;
            } else {
                break;
            }
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn number(&mut self) -> Result<Literal, LexError> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            let sign_after_exp = (c == '-' || c == '+') && self.pos > start && matches!(self.chars[self.pos - 1], 'e' | 'E');
            if c.is_ascii_alphanumeric() || c == '.' || c == '_' || sign_after_exp || ((c == '-' || c == '+') && self.pos == start) {
                self.pos += 1;
            } else {
                break;
            }
        }
        let token: String = self.chars[start..self.pos].iter().collect();
        let is_float = token.contains(['.', 'e', 'E']) || token.contains("inf") || token.contains("nan");
        if !is_float {
            if let Ok(v) = token.parse::<i64>() {
                return Ok(Literal::Int(v));
            }
        } else if let Ok(v) = token.parse::<f64>() {
            if v.is_finite() {
                return Ok(Literal::Float(v));
            }
        }
        Err((token, "invalid number".into()))
    }

    fn string(&mut self) -> Result<Literal, LexError> {
        let start = self.pos;
        self.pos += 1;
        let mut out = String::new();
        while let Some(c) = self.peek() {
            self.pos += 1;
            match c {
                '"' => return Ok(Literal::Str(out)),
                '\\' => {
                    let escaped = self.peek().ok_or_else(|| (self.chars[start..].iter().collect(), "unterminated string".to_string()))?;
                    self.pos += 1;
                    out.push(match escaped {
                        'n' => '\n',
                        't' => '\t',
                        other => other,
                    });
                }
                c => out.push(c),
            }
        }
        Err((self.chars[start..].iter().collect(), "unterminated string".into()))
    }

    fn list(&mut self) -> Result<Literal, LexError> {
        let start = self.pos;
        self.pos += 1;
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(']') => {
                    self.pos += 1;
                    break;
                }
                None => return Err((self.chars[start..].iter().collect(), "unterminated list".into())),
                _ => {}
            }
            items.push(self.literal()?);
            self.skip_ws();
            match self.peek() {
                Some(',') => self.pos += 1,
                Some(']') => {}
                _ => return Err((self.rest(), "expected `,` or `]` in list".into())),
            }
        }
        if let Some(first) = items.first() {
            if items.iter().any(|i| i.kind() != first.kind()) {
                return Err((self.chars[start..self.pos].iter().collect(), "list elements must share one type".into()));
            }
        }
        Ok(Literal::List(items))
    }
}

/// Typed access to a [`ConfigSet`] that records every parameter a component
/// declares, together with its effective value.
#[derive(Debug)]
pub struct Resolver<'a> {
    config: &'a ConfigSet,
    declared: Vec<(String, String, Literal)>,
}

impl<'a> Resolver<'a> {
    pub fn new(config: &'a ConfigSet) -> Self {
        Self { config, declared: Vec::new() }
    }

    pub fn config(&self) -> &ConfigSet {
        self.config
    }

    fn record(&mut self, component: &str, param: &str, value: Literal) {
        if let Some(entry) = self.declared.iter_mut().find(|(c, p, _)| c == component && p == param) {
            entry.2 = value;
        } else {
            self.declared.push((component.to_string(), param.to_string(), value));
        }
    }

    fn get(&self, component: &str, param: &str) -> Option<&Literal> {
        self.config.lookup(component, param).map(|b| &b.value)
    }

    fn type_error(component: &str, param: &str, expected: &'static str, found: &Literal) -> ConfigError {
        ConfigError::Type { path: format!("{component}.{param}"), expected, found: format!("{} `{found}`", found.kind()) }
    }

    pub fn f64(&mut self, component: &str, param: &str, default: f64) -> Result<f64, ConfigError> {
        let value = match self.get(component, param) {
            None => default,
            Some(Literal::Float(v)) => *v,
            Some(Literal::Int(v)) => *v as f64,
            Some(other) => return Err(Self::type_error(component, param, "decimal", other)),
        };
        self.record(component, param, Literal::Float(value));
        Ok(value)
    }

    pub fn i64(&mut self, component: &str, param: &str, default: i64) -> Result<i64, ConfigError> {
        let value = match self.get(component, param) {
            None => default,
            Some(Literal::Int(v)) => *v,
            Some(other) => return Err(Self::type_error(component, param, "integer", other)),
        };
        self.record(component, param, Literal::Int(value));
        Ok(value)
    }

    /// A non-negative integer.
    pub fn u64(&mut self, component: &str, param: &str, default: u64) -> Result<u64, ConfigError> {
        let value = self.i64(component, param, default as i64)?;
        u64::try_from(value).map_err(|_| ConfigError::Invalid {
            path: format!("{component}.{param}"),
            message: format!("must be non-negative, got {value}"),
        })
    }

    pub fn usize(&mut self, component: &str, param: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.u64(component, param, default as u64)? as usize)
    }

    pub fn bool(&mut self, component: &str, param: &str, default: bool) -> Result<bool, ConfigError> {
        let value = match self.get(component, param) {
            None => default,
            Some(Literal::Bool(v)) => *v,
            Some(other) => return Err(Self::type_error(component, param, "boolean", other)),
        };
        self.record(component, param, Literal::Bool(value));
        Ok(value)
    }

    pub fn string(&mut self, component: &str, param: &str, default: &str) -> Result<String, ConfigError> {
        let value = match self.get(component, param) {
            None => default.to_string(),
            Some(Literal::Str(v)) => v.clone(),
            Some(other) => return Err(Self::type_error(component, param, "string", other)),
        };
        self.record(component, param, Literal::Str(value.clone()));
        Ok(value)
    }

    /// A name given either as an identifier (`@Adam`, `Adam`) or a string.
    pub fn name(&mut self, component: &str, param: &str, default: &str) -> Result<String, ConfigError> {
        let value = match self.get(component, param) {
            None => default.to_string(),
            Some(Literal::Ident(v)) | Some(Literal::Str(v)) => v.clone(),
            Some(other) => return Err(Self::type_error(component, param, "identifier", other)),
        };
        self.record(component, param, Literal::Ident(value.clone()));
        Ok(value)
    }

    /// Like [`Resolver::name`] but the value must be one of `choices`.
    pub fn choice(&mut self, component: &str, param: &str, default: &str, choices: &[&str]) -> Result<String, ConfigError> {
        let value = self.name(component, param, default)?;
        if !choices.contains(&value.as_str()) {
            return Err(ConfigError::Invalid {
                path: format!("{component}.{param}"),
                message: format!("`{value}` is not one of {}", choices.join(", ")),
            });
        }
        Ok(value)
    }

    /// Effective `(component, param, value)` triples in declaration order.
    pub fn declared(&self) -> &[(String, String, Literal)] {
        &self.declared
    }

    /// Bindings that no component declared, in file order.
    pub fn unused_bindings(&self) -> Vec<&Binding> {
        let known: BTreeSet<(&str, &str)> = self.declared.iter().map(|(c, p, _)| (c.as_str(), p.as_str())).collect();
        self.config
            .bindings
            .iter()
            .filter(|b| {
                let n = b.path.len();
                !known.contains(&(b.path[n - 2].as_str(), b.path[n - 1].as_str()))
            })
            .collect()
    }

    /// Logs a warning for every binding no component declared.
    pub fn warn_unused(&self) {
        for b in self.unused_bindings() {
            log::warn!("{}:{}: binding `{}` is not used by any component", self.config.source_name, b.line, b.path_string());
        }
    }

    /// Every declared parameter with its effective value, one per line,
    /// grouped by component in declaration order. Parses back to the same
    /// resolution.
    pub fn dump(&self) -> String {
        let mut components: Vec<&str> = Vec::new();
        for (c, _, _) in &self.declared {
            if !components.contains(&c.as_str()) {
                components.push(c);
            }
        }
        let mut out = String::new();
        for (i, component) in components.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            for (c, p, v) in &self.declared {
                if c == component {
                    out.push_str(&format!("{c}.{p} = {v}\n"));
                }
            }
        }
        out
    }
}

/// FNV-1a over the given text; stable across platforms and releases.
pub fn fingerprint(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in text.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ConfigSet {
        parse_config(text, "test").unwrap()
    }

    #[test]
    fn parses_table_value() {
        let c = parse("DQNAgent.epsilon_train = 0.01");
        assert_eq!(c.bindings.len(), 1);
        assert_eq!(c.bindings[0].path, vec!["DQNAgent", "epsilon_train"]);
        assert_eq!(c.bindings[0].value, Literal::Float(0.01));
    }

    #[test]
    fn empty_text_has_no_bindings() {
        assert!(parse("").bindings.is_empty());
        assert!(parse("\n  # only a comment\n\n").bindings.is_empty());
    }

    #[test]
    fn last_binding_wins() {
        let c = parse("Runner.sticky_prob = 0.25\nRunner.sticky_prob = 0.0");
        assert_eq!(Resolver::new(&c).f64("Runner", "sticky_prob", 0.5).unwrap(), 0.0);
    }

    #[test]
    fn resolution_examples() {
        let empty = ConfigSet::empty("e");
        assert_eq!(Resolver::new(&empty).f64("DQNAgent", "gamma", 0.99).unwrap(), 0.99);
        let c = parse("DQNAgent.min_replay_history = 80000");
        assert_eq!(Resolver::new(&c).u64("DQNAgent", "min_replay_history", 200_000).unwrap(), 80_000);
        let c = parse("A.x = 1\nB.x = 2");
        assert_eq!(Resolver::new(&c).i64("A", "x", 0).unwrap(), 1);
        assert_eq!(c.resolve("A", "x", Literal::Int(0)), Literal::Int(1));
    }

    #[test]
    fn literal_kinds() {
        let c = parse(
            "a.int = -42\na.float = 1e-6\na.t = True\na.f = False\na.s = \"x # y\" # comment\na.id = @Adam\na.bare = LifeLoss\na.list = [1, 2, 3]\na.empty = []\nscope.a.nested = 2.5",
        );
        let v: Vec<&Literal> = c.bindings.iter().map(|b| &b.value).collect();
        assert_eq!(v[0], &Literal::Int(-42));
        assert_eq!(v[1], &Literal::Float(1e-6));
        assert_eq!(v[2], &Literal::Bool(true));
        assert_eq!(v[3], &Literal::Bool(false));
        assert_eq!(v[4], &Literal::Str("x # y".into()));
        assert_eq!(v[5], &Literal::Ident("Adam".into()));
        assert_eq!(v[6], &Literal::Ident("LifeLoss".into()));
        assert_eq!(v[7], &Literal::List(vec![Literal::Int(1), Literal::Int(2), Literal::Int(3)]));
        assert_eq!(v[8], &Literal::List(vec![]));
        assert_eq!(Resolver::new(&c).f64("a", "nested", 0.0).unwrap(), 2.5);
    }

    #[test]
    fn syntax_errors_name_line_and_token() {
        let err = parse_config("a.b = 1\na.c = = 2", "f.gin").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("f.gin:2") && msg.contains("duplicate `=`"), "{msg}");
        let err = parse_config("a.b = \"open", "f.gin").unwrap_err().to_string();
        assert!(err.contains("unterminated string") && err.contains("f.gin:1"), "{err}");
        for bad in ["just_a_word", "nodot = 1", "a.b = 1 2", "a.b = [1, \"x\"]", "a.b = 1.2.3", "a.b = [1, 2", "a.b =", "a.b = ?"] {
            assert!(parse_config(bad, "f").is_err(), "{bad}");
        }
    }

    #[test]
    fn type_mismatch_names_path() {
        let c = parse("DQNAgent.gamma = \"high\"\nRunner.seed = 1.5\nRunner.n = -1");
        let mut r = Resolver::new(&c);
        let err = r.f64("DQNAgent", "gamma", 0.99).unwrap_err().to_string();
        assert!(err.contains("DQNAgent.gamma"), "{err}");
        assert!(r.i64("Runner", "seed", 0).is_err());
        assert!(r.u64("Runner", "n", 0).is_err());
    }

    #[test]
    fn integers_promote_to_decimals() {
        let c = parse("DQNAgent.gamma = 1");
        assert_eq!(Resolver::new(&c).f64("DQNAgent", "gamma", 0.5).unwrap(), 1.0);
    }

    #[test]
    fn dump_lists_defaults_and_reparses() {
        let c = ConfigSet::empty("e");
        let mut r = Resolver::new(&c);
        r.f64("DQNAgent", "epsilon_eval", 0.001).unwrap();
        assert_eq!(r.dump(), "DQNAgent.epsilon_eval = 0.001\n");
    }

    fn resolve_all(c: &ConfigSet) -> Resolver<'_> {
        let mut r = Resolver::new(c);
        r.f64("DQNAgent", "gamma", 0.99).unwrap();
        r.u64("DQNAgent", "min_replay_history", 80_000).unwrap();
        r.bool("Runner", "sticky_actions", true).unwrap();
        r.name("Runner", "termination_mode", "GameOver").unwrap();
        r.string("Runner", "label", "run").unwrap();
        r.f64("Adam", "epsilon", 1.5e-4).unwrap();
        r
    }

    #[test]
    fn dump_parse_dump_is_fixpoint() {
        let c = parse("DQNAgent.gamma = 0.1\nRunner.termination_mode = @LifeLoss\nRunner.label = \"a \\\"b\\\"\"\nAdam.epsilon = 3.125e-5");
        let first = resolve_all(&c).dump();
        let reparsed = parse(&first);
        let second = resolve_all(&reparsed).dump();
        assert_eq!(first, second);
        assert_eq!(resolve_all(&reparsed).declared(), resolve_all(&c).declared());
    }

    #[test]
    fn unused_bindings_reported() {
        let c = parse("DQNAgent.gamma = 0.5\nDQNAgent.gama = 0.5");
        let r = resolve_all(&c);
        let unused: Vec<String> = r.unused_bindings().iter().map(|b| b.path_string()).collect();
        assert_eq!(unused, vec!["DQNAgent.gama"]);
    }

    #[test]
    fn choice_rejects_unknown_names() {
        let c = parse("Runner.schedule = @sometimes");
        let err = Resolver::new(&c).choice("Runner", "schedule", "train", &["train", "train_and_eval"]).unwrap_err();
        assert!(err.to_string().contains("Runner.schedule"));
    }

    #[test]
    fn overrides_apply_after_file() {
        let mut c = parse("Runner.seed = 1");
        c.extend(parse_overrides(&["Runner.seed=7"]).unwrap());
        assert_eq!(Resolver::new(&c).i64("Runner", "seed", 0).unwrap(), 7);
    }
}

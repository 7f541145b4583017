//! Integrity constraints: predicates over a GUI snapshot that must hold for an
//! action to be viable.
//!
//! Surface syntax is prefix s-expressions:
//!
//! ```text
//! (and (visible btn_submit) (enabled btn_submit))
//! (or (focused (el textfield "Search")) (on_page "results*"))
//! (not (exists error_banner))
//! (text_equals username "alice")
//! ```
//!
//! An element is referenced by id (a bare atom) or by role and label, either as
//! `(el <role> "<label>")` or, inside `exists`, as two arguments.

use crate::model::{Element, ElementRole, State};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ElementRef {
    Id(String),
    RoleLabel { role: ElementRole, label: String },
}

impl ElementRef {
    pub fn resolve<'a>(&self, state: &'a State) -> Option<&'a Element> {
        match self {
            ElementRef::Id(id) => state.element(id),
            ElementRef::RoleLabel { role, label } => state
                .elements
                .iter()
                .find(|e| e.role == *role && e.label == *label),
        }
    }
}

impl fmt::Display for ElementRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementRef::Id(id) => f.write_str(id),
            ElementRef::RoleLabel { role, label } => write!(f, "(el {role} {})", quote(label)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constraint {
    And(Vec<Constraint>),
    Or(Vec<Constraint>),
    Not(Box<Constraint>),
    Exists(ElementRef),
    Visible(ElementRef),
    Enabled(ElementRef),
    Focused(ElementRef),
    /// Screen id, `*` matches any run of characters.
    OnPage(String),
    TextEquals(ElementRef, String),
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::And(cs) | Constraint::Or(cs) => {
                let op = if matches!(self, Constraint::And(_)) {
                    "and"
                } else {
                    "or"
                };
                write!(f, "({op}")?;
                for c in cs {
                    write!(f, " {c}")?;
                }
                f.write_str(")")
            }
            Constraint::Not(c) => write!(f, "(not {c})"),
            Constraint::Exists(e) => write!(f, "(exists {e})"),
            Constraint::Visible(e) => write!(f, "(visible {e})"),
            Constraint::Enabled(e) => write!(f, "(enabled {e})"),
            Constraint::Focused(e) => write!(f, "(focused {e})"),
            Constraint::OnPage(p) => write!(f, "(on_page {})", quote(p)),
            Constraint::TextEquals(e, v) => write!(f, "(text_equals {e} {})", quote(v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("constraint parse error at byte {offset}: {message}")]
pub struct ConstraintParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
    Str(String),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ConstraintParseError> {
    let mut out = Vec::new();
    let bytes: Vec<(usize, char)> = src.char_indices().collect();
    let mut i = 0;
    while i < bytes.len() {
        let (pos, c) = bytes[i];
        match c {
            c if c.is_whitespace() => i += 1,
            ';' => {
                while i < bytes.len() && bytes[i].1 != '\n' {
                    i += 1;
                }
            }
            '(' => {
                out.push((pos, Tok::Open));
                i += 1;
            }
            ')' => {
                out.push((pos, Tok::Close));
                i += 1;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    let Some(&(_, c)) = bytes.get(i) else {
                        return Err(ConstraintParseError {
                            offset: pos,
                            message: "unterminated string".into(),
                        });
                    };
                    i += 1;
                    match c {
                        '"' => break,
                        '\\' => {
                            let Some(&(_, e)) = bytes.get(i) else {
                                return Err(ConstraintParseError {
                                    offset: pos,
                                    message: "unterminated escape".into(),
                                });
                            };
                            s.push(e);
                            i += 1;
                        }
                        c => s.push(c),
                    }
                }
                out.push((pos, Tok::Str(s)));
            }
            _ => {
                let mut s = String::new();
                while i < bytes.len() {
                    let c = bytes[i].1;
                    if c.is_whitespace() || c == '(' || c == ')' || c == '"' {
                        break;
                    }
                    s.push(c);
                    i += 1;
                }
                out.push((pos, Tok::Atom(s)));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
enum Sexp {
    Atom(usize, String),
    Str(usize, String),
    List(usize, Vec<Sexp>),
}

impl Sexp {
    fn offset(&self) -> usize {
        match self {
            Sexp::Atom(o, _) | Sexp::Str(o, _) | Sexp::List(o, _) => *o,
        }
    }
}

fn read(toks: &[(usize, Tok)], i: &mut usize) -> Result<Sexp, ConstraintParseError> {
    let Some((pos, tok)) = toks.get(*i) else {
        return Err(ConstraintParseError {
            offset: toks.last().map(|t| t.0).unwrap_or(0),
            message: "unexpected end of input".into(),
        });
    };
    *i += 1;
    match tok {
        Tok::Atom(a) => Ok(Sexp::Atom(*pos, a.clone())),
        Tok::Str(s) => Ok(Sexp::Str(*pos, s.clone())),
        Tok::Close => Err(ConstraintParseError {
            offset: *pos,
            message: "unexpected ')'".into(),
        }),
        Tok::Open => {
            let mut items = Vec::new();
            loop {
                match toks.get(*i) {
                    Some((_, Tok::Close)) => {
                        *i += 1;
                        return Ok(Sexp::List(*pos, items));
                    }
                    Some(_) => items.push(read(toks, i)?),
                    None => {
                        return Err(ConstraintParseError {
                            offset: *pos,
                            message: "unclosed '('".into(),
                        })
                    }
                }
            }
        }
    }
}

fn err(at: &Sexp, message: impl Into<String>) -> ConstraintParseError {
    ConstraintParseError {
        offset: at.offset(),
        message: message.into(),
    }
}

fn text_arg(s: &Sexp) -> Result<String, ConstraintParseError> {
    match s {
        Sexp::Atom(_, a) | Sexp::Str(_, a) => Ok(a.clone()),
        Sexp::List(..) => Err(err(s, "expected a string")),
    }
}

fn element_ref(s: &Sexp) -> Result<ElementRef, ConstraintParseError> {
    match s {
        Sexp::Atom(_, a) => Ok(ElementRef::Id(a.clone())),
        Sexp::Str(_, a) => Ok(ElementRef::Id(a.clone())),
        Sexp::List(_, items) => match items.as_slice() {
            [Sexp::Atom(_, head), role, label] if head == "el" => role_label(role, label),
            _ => Err(err(s, "expected an element id or (el <role> \"<label>\")")),
        },
    }
}

fn role_label(role: &Sexp, label: &Sexp) -> Result<ElementRef, ConstraintParseError> {
    let r = text_arg(role)?;
    let role = ElementRole::parse(&r).ok_or_else(|| err(role, format!("unknown role {r:?}")))?;
    Ok(ElementRef::RoleLabel {
        role,
        label: text_arg(label)?,
    })
}

fn build(s: &Sexp) -> Result<Constraint, ConstraintParseError> {
    let Sexp::List(_, items) = s else {
        return Err(err(s, "expected a parenthesized expression"));
    };
    let Some(Sexp::Atom(_, op)) = items.first() else {
        return Err(err(s, "expected an operator"));
    };
    let args = &items[1..];
    let arity = |n: usize| -> Result<(), ConstraintParseError> {
        if args.len() == n {
            Ok(())
        } else {
            Err(err(s, format!("{op} takes {n} argument(s), got {}", args.len())))
        }
    };
    Ok(match op.as_str() {
        "and" | "or" => {
            if args.is_empty() {
                return Err(err(s, format!("{op} needs at least one argument")));
            }
            let cs = args.iter().map(build).collect::<Result<Vec<_>, _>>()?;
            if op == "and" {
                Constraint::And(cs)
            } else {
                Constraint::Or(cs)
            }
        }
        "not" => {
            arity(1)?;
            Constraint::Not(Box::new(build(&args[0])?))
        }
        "exists" => match args {
            [e] => Constraint::Exists(element_ref(e)?),
            [role, label] => Constraint::Exists(role_label(role, label)?),
            _ => return Err(err(s, "exists takes an element or a role and label")),
        },
        "visible" => {
            arity(1)?;
            Constraint::Visible(element_ref(&args[0])?)
        }
        "enabled" => {
            arity(1)?;
            Constraint::Enabled(element_ref(&args[0])?)
        }
        "focused" => {
            arity(1)?;
            Constraint::Focused(element_ref(&args[0])?)
        }
        "on_page" => {
            arity(1)?;
            Constraint::OnPage(text_arg(&args[0])?)
        }
        "text_equals" => {
            arity(2)?;
            Constraint::TextEquals(element_ref(&args[0])?, text_arg(&args[1])?)
        }
        other => return Err(err(s, format!("unknown operator {other:?}"))),
    })
}

impl std::str::FromStr for Constraint {
    type Err = ConstraintParseError;

    fn from_str(src: &str) -> Result<Self, Self::Err> {
        let toks = lex(src)?;
        let mut i = 0;
        let sexp = read(&toks, &mut i)?;
        if let Some((pos, _)) = toks.get(i) {
            return Err(ConstraintParseError {
                offset: *pos,
                message: "trailing input after expression".into(),
            });
        }
        build(&sexp)
    }
}

/// Result of evaluating a constraint against a snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    pub verdict: bool,
    /// Element references that did not resolve; each made its predicate false.
    pub unresolved: Vec<String>,
}

fn glob_match(pattern: &str, text: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == text;
    }
    let mut rest = text;
    for (i, part) in parts.iter().enumerate() {
        if i == 0 {
            let Some(r) = rest.strip_prefix(part) else {
                return false;
            };
            rest = r;
        } else if i == parts.len() - 1 {
            return rest.ends_with(part);
        } else if let Some(pos) = rest.find(part) {
            rest = &rest[pos + part.len()..];
        } else {
            return false;
        }
    }
    true
}

/// Text an element displays for `text_equals`: a field's value, otherwise its label.
pub fn element_text(e: &Element) -> &str {
    match (&e.value, e.role) {
        (Some(v), _) => v,
        (None, ElementRole::Textfield) => "",
        (None, _) => &e.label,
    }
}

impl Constraint {
    pub fn evaluate(&self, state: &State) -> Evaluation {
        let mut unresolved = Vec::new();
        let verdict = self.eval(state, &mut unresolved);
        unresolved.sort();
        unresolved.dedup();
        Evaluation {
            verdict,
            unresolved,
        }
    }

    fn eval(&self, state: &State, unresolved: &mut Vec<String>) -> bool {
        let mut with = |r: &ElementRef, f: &dyn Fn(&Element) -> bool| match r.resolve(state) {
            Some(e) => f(e),
            None => {
                unresolved.push(r.to_string());
                false
            }
        };
        match self {
            Constraint::And(cs) => {
                // Evaluate all so every unresolved reference is reported.
                let mut all = true;
                for c in cs {
                    all &= c.eval(state, unresolved);
                }
                all
            }
            Constraint::Or(cs) => {
                let mut any = false;
                for c in cs {
                    any |= c.eval(state, unresolved);
                }
                any
            }
            Constraint::Not(c) => !c.eval(state, unresolved),
            Constraint::Exists(r) => with(r, &|_| true),
            Constraint::Visible(r) => with(r, &|e| e.visible),
            Constraint::Enabled(r) => with(r, &|e| e.enabled),
            Constraint::Focused(r) => with(r, &|e| e.focused),
            Constraint::OnPage(p) => glob_match(p, &state.url_or_screen_id),
            Constraint::TextEquals(r, v) => with(r, &|e| element_text(e) == v),
        }
    }
}

//! Process terms and the s-expression reader for definition files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Var(String),
    Lit(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FieldPat {
    /// `?var`: the value comes from the environment and binds `var`.
    Input(String),
    /// The process supplies this value.
    Output(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventPat {
    pub name: String,
    pub fields: Vec<(String, FieldPat)>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProcessTerm {
    Stop,
    Skip,
    Prefix(EventPat, Box<ProcessTerm>),
    Choice(Vec<ProcessTerm>),
    If { guard: String, args: Vec<Expr>, then: Box<ProcessTerm>, otherwise: Box<ProcessTerm> },
    Call(String, Vec<Expr>),
    Par(Box<ProcessTerm>, Box<ProcessTerm>, BTreeSet<String>),
}

impl ProcessTerm {
    pub fn call(name: &str, args: &[&str]) -> Self {
        ProcessTerm::Call(name.to_owned(), args.iter().map(|a| Expr::Lit((*a).to_owned())).collect())
    }

    /// Replaces free occurrences of `var` with the literal `value`.
    pub fn substitute(&self, var: &str, value: &str) -> ProcessTerm {
        let sub = |e: &Expr| match e {
            Expr::Var(v) if v == var => Expr::Lit(value.to_owned()),
            other => other.clone(),
        };
        match self {
            ProcessTerm::Stop | ProcessTerm::Skip => self.clone(),
            ProcessTerm::Prefix(pat, cont) => {
                let fields = pat
                    .fields
                    .iter()
                    .map(|(f, p)| {
                        let p = match p {
                            FieldPat::Input(v) => FieldPat::Input(v.clone()),
                            FieldPat::Output(e) => FieldPat::Output(sub(e)),
                        };
                        (f.clone(), p)
                    })
                    .collect();
                let rebinds = pat.fields.iter().any(|(_, p)| matches!(p, FieldPat::Input(v) if v == var));
                let cont = if rebinds { (**cont).clone() } else { cont.substitute(var, value) };
                ProcessTerm::Prefix(EventPat { name: pat.name.clone(), fields }, Box::new(cont))
            }
            ProcessTerm::Choice(ts) => ProcessTerm::Choice(ts.iter().map(|t| t.substitute(var, value)).collect()),
            ProcessTerm::If { guard, args, then, otherwise } => ProcessTerm::If {
                guard: guard.clone(),
                args: args.iter().map(sub).collect(),
                then: Box::new(then.substitute(var, value)),
                otherwise: Box::new(otherwise.substitute(var, value)),
            },
            ProcessTerm::Call(name, args) => ProcessTerm::Call(name.clone(), args.iter().map(sub).collect()),
            ProcessTerm::Par(l, r, sync) => {
                ProcessTerm::Par(Box::new(l.substitute(var, value)), Box::new(r.substitute(var, value)), sync.clone())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(v) => f.write_str(v),
            Expr::Lit(l) => write!(f, "{l:?}"),
        }
    }
}

impl fmt::Display for ProcessTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessTerm::Stop => f.write_str("STOP"),
            ProcessTerm::Skip => f.write_str("SKIP"),
            ProcessTerm::Prefix(pat, cont) => {
                if pat.fields.is_empty() {
                    write!(f, "(prefix {} {cont})", pat.name)
                } else {
                    write!(f, "(prefix ({}", pat.name)?;
                    for (field, p) in &pat.fields {
                        match p {
                            FieldPat::Input(v) => write!(f, " ({field} ?{v})")?,
                            FieldPat::Output(e) => write!(f, " ({field} {e})")?,
                        }
                    }
                    write!(f, ") {cont})")
                }
            }
            ProcessTerm::Choice(ts) => {
                f.write_str("(choice")?;
                for t in ts {
                    write!(f, " {t}")?;
                }
                f.write_str(")")
            }
            ProcessTerm::If { guard, args, then, otherwise } => {
                write!(f, "(if ({guard}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                write!(f, ") {then} {otherwise})")
            }
            ProcessTerm::Call(name, args) => {
                write!(f, "(call {name}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                f.write_str(")")
            }
            ProcessTerm::Par(l, r, sync) => {
                write!(f, "(par {l} {r} (")?;
                let names: Vec<&str> = sync.iter().map(String::as_str).collect();
                write!(f, "{}))", names.join(" "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Definition {
    pub params: Vec<String>,
    pub body: ProcessTerm,
}

// ---------------------------------------------------------------------------
// Reader

#[derive(Debug, Clone, PartialEq, Eq)]
enum Sexp {
    Atom(String),
    Str(String),
    List(Vec<Sexp>),
}

fn tokenize(src: &str) -> Result<Vec<(String, bool)>, HarnessError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            ';' => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' | ')' => {
                out.push((c.to_string(), false));
                chars.next();
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('"') => break,
                        Some(c) => s.push(c),
                        None => return Err(HarnessError::Parse("unterminated string".into())),
                    }
                }
                out.push((s, true));
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == '"' || c == ';' {
                        break;
                    }
                    s.push(c);
                    chars.next();
                }
                out.push((s, false));
            }
        }
    }
    Ok(out)
}

fn read_all(src: &str) -> Result<Vec<Sexp>, HarnessError> {
    let tokens = tokenize(src)?;
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    for (tok, quoted) in tokens {
        if quoted {
            stack.last_mut().expect("non-empty").push(Sexp::Str(tok));
        } else if tok == "(" {
            stack.push(Vec::new());
        } else if tok == ")" {
            let list = stack.pop().expect("non-empty");
            let parent = stack.last_mut().ok_or_else(|| HarnessError::Parse("unbalanced ')'".into()))?;
            parent.push(Sexp::List(list));
        } else {
            stack.last_mut().expect("non-empty").push(Sexp::Atom(tok));
        }
    }
    if stack.len() != 1 {
        return Err(HarnessError::Parse("unbalanced '('".into()));
    }
    Ok(stack.pop().expect("one level"))
}

fn atom(s: &Sexp, what: &str) -> Result<String, HarnessError> {
    match s {
        Sexp::Atom(a) => Ok(a.clone()),
        other => Err(HarnessError::Parse(format!("expected {what}, found {other:?}"))),
    }
}

fn expr(s: &Sexp) -> Result<Expr, HarnessError> {
    match s {
        Sexp::Str(v) => Ok(Expr::Lit(v.clone())),
        Sexp::Atom(a) if !a.starts_with('?') => Ok(Expr::Var(a.clone())),
        other => Err(HarnessError::Parse(format!("expected expression, found {other:?}"))),
    }
}

fn event_pat(s: &Sexp) -> Result<EventPat, HarnessError> {
    match s {
        Sexp::Atom(name) => Ok(EventPat { name: name.clone(), fields: Vec::new() }),
        Sexp::List(items) if !items.is_empty() => {
            let name = atom(&items[0], "event name")?;
            let mut fields = Vec::new();
            for item in &items[1..] {
                let Sexp::List(pair) = item else {
                    return Err(HarnessError::Parse(format!("event {name}: expected (field pattern)")));
                };
                if pair.len() != 2 {
                    return Err(HarnessError::Parse(format!("event {name}: field needs exactly one pattern")));
                }
                let field = atom(&pair[0], "field name")?;
                let pat = match &pair[1] {
                    Sexp::Atom(a) if a.starts_with('?') && a.len() > 1 => FieldPat::Input(a[1..].to_owned()),
                    other => FieldPat::Output(expr(other)?),
                };
                fields.push((field, pat));
            }
            Ok(EventPat { name, fields })
        }
        other => Err(HarnessError::Parse(format!("expected event, found {other:?}"))),
    }
}

fn term(s: &Sexp) -> Result<ProcessTerm, HarnessError> {
    match s {
        Sexp::Atom(a) if a == "STOP" => Ok(ProcessTerm::Stop),
        Sexp::Atom(a) if a == "SKIP" => Ok(ProcessTerm::Skip),
        Sexp::List(items) if !items.is_empty() => {
            let head = atom(&items[0], "term keyword")?;
            let rest = &items[1..];
            let arity = |n: usize| {
                if rest.len() == n {
                    Ok(())
                } else {
                    Err(HarnessError::Parse(format!("{head} takes {n} arguments, got {}", rest.len())))
                }
            };
            match head.as_str() {
                "prefix" => {
                    arity(2)?;
                    Ok(ProcessTerm::Prefix(event_pat(&rest[0])?, Box::new(term(&rest[1])?)))
                }
                "choice" => Ok(ProcessTerm::Choice(rest.iter().map(term).collect::<Result<_, _>>()?)),
                "if" => {
                    arity(3)?;
                    let Sexp::List(g) = &rest[0] else {
                        return Err(HarnessError::Parse("if: guard must be a list".into()));
                    };
                    let guard = atom(g.first().ok_or_else(|| HarnessError::Parse("empty guard".into()))?, "guard")?;
                    Ok(ProcessTerm::If {
                        guard,
                        args: g[1..].iter().map(expr).collect::<Result<_, _>>()?,
                        then: Box::new(term(&rest[1])?),
                        otherwise: Box::new(term(&rest[2])?),
                    })
                }
                "call" => {
                    let name = atom(rest.first().ok_or_else(|| HarnessError::Parse("call: no name".into()))?, "name")?;
                    Ok(ProcessTerm::Call(name, rest[1..].iter().map(expr).collect::<Result<_, _>>()?))
                }
                "par" => {
                    arity(3)?;
                    let Sexp::List(names) = &rest[2] else {
                        return Err(HarnessError::Parse("par: sync set must be a list".into()));
                    };
                    let sync = names.iter().map(|n| atom(n, "event name")).collect::<Result<_, _>>()?;
                    Ok(ProcessTerm::Par(Box::new(term(&rest[0])?), Box::new(term(&rest[1])?), sync))
                }
                other => Err(HarnessError::Parse(format!("unknown term keyword {other:?}"))),
            }
        }
        other => Err(HarnessError::Parse(format!("expected term, found {other:?}"))),
    }
}

/// Parses a definition file into name → definition.
pub fn parse_definitions(src: &str) -> Result<BTreeMap<String, Definition>, HarnessError> {
    let mut defs = BTreeMap::new();
    for top in read_all(src)? {
        let Sexp::List(items) = &top else {
            return Err(HarnessError::Parse(format!("expected (define ...), found {top:?}")));
        };
        if items.len() != 3 || items[0] != Sexp::Atom("define".into()) {
            return Err(HarnessError::Parse("expected (define (NAME params...) TERM)".into()));
        }
        let Sexp::List(header) = &items[1] else {
            return Err(HarnessError::Parse("define: header must be a list".into()));
        };
        let name = atom(header.first().ok_or_else(|| HarnessError::Parse("define: empty header".into()))?, "name")?;
        let params = header[1..].iter().map(|p| atom(p, "parameter")).collect::<Result<Vec<_>, _>>()?;
        let body = term(&items[2])?;
        if defs.insert(name.clone(), Definition { params, body }).is_some() {
            return Err(HarnessError::Parse(format!("{name} defined twice")));
        }
    }
    Ok(defs)
}

/// Parses a single term, e.g. `(call DB)`.
pub fn parse_term(src: &str) -> Result<ProcessTerm, HarnessError> {
    let items = read_all(src)?;
    match items.as_slice() {
        [one] => term(one),
        _ => Err(HarnessError::Parse("expected exactly one term".into())),
    }
}

//! A small CSP interpreter used as an independent oracle for the session
//! protocol.
//!
//! Supports prefix, external choice, guarded conditionals, named process
//! calls and synchronised parallel composition, under the traces model.
//! Guards are looked up by name in a [`Guards`] implementation and run
//! against a caller-supplied state; a guard that holds may also update that
//! state. Inputs (`?x`) range over a finite [`Domain`] per field name, which
//! is what makes exhaustive trace enumeration possible.

pub mod acd;
mod term;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

pub use term::{parse_definitions, parse_term, Definition, EventPat, Expr, FieldPat, ProcessTerm};

/// Largest depth [`ProcessEnvironment::enumerate_traces`] accepts.
pub const MAX_DEPTH: usize = 8;
/// Enumeration aborts after visiting this many nodes.
pub const MAX_NODES: usize = 1_000_000;

const MAX_UNGUARDED_UNFOLDING: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("load error: {0}")]
    Load(String),
    #[error("event {0} refused")]
    Refused(Event),
    #[error("no input domain for field {0:?}")]
    NoDomain(String),
    #[error("depth {0} outside 1..={MAX_DEPTH}")]
    Depth(usize),
    #[error("state space exceeded {MAX_NODES} nodes")]
    StateSpace,
    #[error("evaluation error: {0}")]
    Eval(String),
}

/// A concrete event: a name and the values of its data fields.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Event {
    pub name: String,
    pub fields: BTreeMap<String, String>,
}

impl Event {
    pub fn bare(name: &str) -> Self {
        Event { name: name.to_owned(), fields: BTreeMap::new() }
    }

    pub fn with<'a>(name: &str, fields: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        Event { name: name.to_owned(), fields: fields.into_iter().map(|(k, v)| (k.to_owned(), v.to_owned())).collect() }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if !self.fields.is_empty() {
            let parts: Vec<String> = self.fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write!(f, "({})", parts.join(", "))?;
        }
        Ok(())
    }
}

pub type Trace = Vec<Event>;

/// Finite set of values each input field ranges over.
pub type Domain = BTreeMap<String, Vec<String>>;

/// Named guards evaluated against live state.
pub trait Guards {
    type State: Clone;

    fn knows(&self, id: &str) -> bool;

    /// Evaluates guard `id`. When it holds, the guard may apply its effect
    /// to `state`; when it fails, `state` must be left unchanged.
    fn eval(&self, id: &str, args: &[String], state: &mut Self::State) -> bool;
}

/// Guards for processes that have none.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoGuards;

impl Guards for NoGuards {
    type State = ();
    fn knows(&self, _: &str) -> bool {
        false
    }
    fn eval(&self, _: &str, _: &[String], _: &mut ()) -> bool {
        false
    }
}

/// An event a process is ready to engage in; `None` fields are inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Offer {
    name: String,
    fields: BTreeMap<String, Option<String>>,
}

impl Offer {
    fn matches(&self, e: &Event) -> bool {
        self.name == e.name
            && self.fields.len() == e.fields.len()
            && self.fields.iter().all(|(k, v)| match (v, e.fields.get(k)) {
                (Some(v), Some(w)) => v == w,
                (None, Some(_)) => true,
                (_, None) => false,
            })
    }

    fn unify(&self, other: &Offer) -> Option<Offer> {
        if self.name != other.name || !self.fields.keys().eq(other.fields.keys()) {
            return None;
        }
        let mut fields = BTreeMap::new();
        for ((k, a), b) in self.fields.iter().zip(other.fields.values()) {
            let v = match (a, b) {
                (Some(a), Some(b)) if a != b => return None,
                (Some(a), _) | (None, Some(a)) => Some(a.clone()),
                (None, None) => None,
            };
            fields.insert(k.clone(), v);
        }
        Some(Offer { name: self.name.clone(), fields })
    }

    fn expand(&self, domain: &Domain) -> Result<Vec<Event>, HarnessError> {
        let mut events = vec![Event { name: self.name.clone(), fields: BTreeMap::new() }];
        for (k, v) in &self.fields {
            let values: Vec<String> = match v {
                Some(v) => vec![v.clone()],
                None => domain.get(k).cloned().ok_or_else(|| HarnessError::NoDomain(k.clone()))?,
            };
            events = events
                .into_iter()
                .flat_map(|e| {
                    values.iter().map(move |val| {
                        let mut e = e.clone();
                        e.fields.insert(k.clone(), val.clone());
                        e
                    })
                })
                .collect();
        }
        Ok(events)
    }
}

/// What a process becomes once the offered event's inputs are known.
#[derive(Debug, Clone)]
enum Pending {
    Prefix { inputs: Vec<(String, String)>, cont: ProcessTerm },
    Idle(ProcessTerm),
    Par(Box<Pending>, Box<Pending>, BTreeSet<String>),
}

impl Pending {
    fn fire(self, event: &Event) -> ProcessTerm {
        match self {
            Pending::Prefix { inputs, cont } => inputs
                .iter()
                .fold(cont, |t, (field, var)| t.substitute(var, event.fields.get(field).expect("offer matched event"))),
            Pending::Idle(t) => t,
            Pending::Par(l, r, sync) => ProcessTerm::Par(Box::new(l.fire(event)), Box::new(r.fire(event)), sync),
        }
    }
}

struct Branch<S> {
    offer: Offer,
    pending: Pending,
    state: S,
}

/// Process definitions plus the guards their conditionals refer to.
#[derive(Debug, Clone)]
pub struct ProcessEnvironment<G> {
    definitions: BTreeMap<String, Definition>,
    guards: G,
}

impl<G: Guards> ProcessEnvironment<G> {
    /// Checks that every call resolves with the right arity, every guard is
    /// known, every variable is bound, and no definition can unfold into
    /// itself without first engaging in an event.
    pub fn load(definitions: BTreeMap<String, Definition>, guards: G) -> Result<Self, HarnessError> {
        let env = ProcessEnvironment { definitions, guards };
        for (name, def) in &env.definitions {
            let bound: BTreeSet<String> = def.params.iter().cloned().collect();
            env.check_term(name, &def.body, &bound)?;
        }
        env.check_guardedness()?;
        Ok(env)
    }

    pub fn parse(src: &str, guards: G) -> Result<Self, HarnessError> {
        Self::load(parse_definitions(src)?, guards)
    }

    pub fn definition(&self, name: &str) -> Option<&Definition> {
        self.definitions.get(name)
    }

    pub fn guards(&self) -> &G {
        &self.guards
    }

    /// Checks a free-standing term against this environment.
    pub fn check(&self, term: &ProcessTerm) -> Result<(), HarnessError> {
        self.check_term("<term>", term, &BTreeSet::new())
    }

    fn check_term(&self, ctx: &str, t: &ProcessTerm, bound: &BTreeSet<String>) -> Result<(), HarnessError> {
        let check_expr = |e: &Expr| match e {
            Expr::Var(v) if !bound.contains(v) => Err(HarnessError::Load(format!("{ctx}: unbound variable {v}"))),
            _ => Ok(()),
        };
        match t {
            ProcessTerm::Stop | ProcessTerm::Skip => Ok(()),
            ProcessTerm::Prefix(pat, cont) => {
                let mut seen = BTreeSet::new();
                let mut inner = bound.clone();
                for (field, p) in &pat.fields {
                    if !seen.insert(field) {
                        return Err(HarnessError::Load(format!("{ctx}: field {field} repeated in {}", pat.name)));
                    }
                    match p {
                        FieldPat::Input(v) => {
                            inner.insert(v.clone());
                        }
                        FieldPat::Output(e) => check_expr(e)?,
                    }
                }
                self.check_term(ctx, cont, &inner)
            }
            ProcessTerm::Choice(ts) => ts.iter().try_for_each(|t| self.check_term(ctx, t, bound)),
            ProcessTerm::If { guard, args, then, otherwise } => {
                if !self.guards.knows(guard) {
                    return Err(HarnessError::Load(format!("{ctx}: unknown guard {guard}")));
                }
                args.iter().try_for_each(check_expr)?;
                self.check_term(ctx, then, bound)?;
                self.check_term(ctx, otherwise, bound)
            }
            ProcessTerm::Call(name, args) => {
                let def = self
                    .definitions
                    .get(name)
                    .ok_or_else(|| HarnessError::Load(format!("{ctx}: call to undefined process {name}")))?;
                if def.params.len() != args.len() {
                    return Err(HarnessError::Load(format!(
                        "{ctx}: {name} takes {} arguments, given {}",
                        def.params.len(),
                        args.len()
                    )));
                }
                args.iter().try_for_each(check_expr)
            }
            ProcessTerm::Par(l, r, _) => {
                self.check_term(ctx, l, bound)?;
                self.check_term(ctx, r, bound)
            }
        }
    }

    fn unguarded_calls(t: &ProcessTerm, out: &mut BTreeSet<String>) {
        match t {
            ProcessTerm::Stop | ProcessTerm::Skip | ProcessTerm::Prefix(..) => {}
            ProcessTerm::Choice(ts) => ts.iter().for_each(|t| Self::unguarded_calls(t, out)),
            ProcessTerm::If { then, otherwise, .. } => {
                Self::unguarded_calls(then, out);
                Self::unguarded_calls(otherwise, out);
            }
            ProcessTerm::Call(name, _) => {
                out.insert(name.clone());
            }
            ProcessTerm::Par(l, r, _) => {
                Self::unguarded_calls(l, out);
                Self::unguarded_calls(r, out);
            }
        }
    }

    fn check_guardedness(&self) -> Result<(), HarnessError> {
        let edges: BTreeMap<&str, BTreeSet<String>> = self
            .definitions
            .iter()
            .map(|(n, d)| {
                let mut out = BTreeSet::new();
                Self::unguarded_calls(&d.body, &mut out);
                (n.as_str(), out)
            })
            .collect();
        for start in edges.keys() {
            let mut stack: Vec<&str> = edges[start].iter().map(String::as_str).collect();
            let mut seen = BTreeSet::new();
            while let Some(n) = stack.pop() {
                if n == *start {
                    return Err(HarnessError::Load(format!("{start} can unfold into itself without an event")));
                }
                if seen.insert(n) {
                    stack.extend(edges[n].iter().map(String::as_str));
                }
            }
        }
        Ok(())
    }

    fn lit(e: &Expr) -> Result<String, HarnessError> {
        match e {
            Expr::Lit(v) => Ok(v.clone()),
            Expr::Var(v) => Err(HarnessError::Eval(format!("free variable {v}"))),
        }
    }

    fn branches(
        &self,
        t: &ProcessTerm,
        state: &G::State,
        unfold: usize,
    ) -> Result<Vec<Branch<G::State>>, HarnessError> {
        if unfold > MAX_UNGUARDED_UNFOLDING {
            return Err(HarnessError::Eval("unguarded recursion".into()));
        }
        match t {
            ProcessTerm::Stop | ProcessTerm::Skip => Ok(Vec::new()),
            ProcessTerm::Prefix(pat, cont) => {
                let mut fields = BTreeMap::new();
                let mut inputs = Vec::new();
                for (field, p) in &pat.fields {
                    match p {
                        FieldPat::Input(v) => {
                            fields.insert(field.clone(), None);
                            inputs.push((field.clone(), v.clone()));
                        }
                        FieldPat::Output(e) => {
                            fields.insert(field.clone(), Some(Self::lit(e)?));
                        }
                    }
                }
                Ok(vec![Branch {
                    offer: Offer { name: pat.name.clone(), fields },
                    pending: Pending::Prefix { inputs, cont: (**cont).clone() },
                    state: state.clone(),
                }])
            }
            ProcessTerm::Choice(ts) => {
                let mut out = Vec::new();
                for t in ts {
                    out.extend(self.branches(t, state, unfold + 1)?);
                }
                Ok(out)
            }
            ProcessTerm::If { guard, args, then, otherwise } => {
                let args = args.iter().map(Self::lit).collect::<Result<Vec<_>, _>>()?;
                let mut next = state.clone();
                if self.guards.eval(guard, &args, &mut next) {
                    self.branches(then, &next, unfold + 1)
                } else {
                    self.branches(otherwise, state, unfold + 1)
                }
            }
            ProcessTerm::Call(name, args) => {
                let def = self
                    .definitions
                    .get(name)
                    .ok_or_else(|| HarnessError::Eval(format!("undefined process {name}")))?;
                if def.params.len() != args.len() {
                    return Err(HarnessError::Eval(format!("arity mismatch calling {name}")));
                }
                let mut body = def.body.clone();
                for (param, arg) in def.params.iter().zip(args) {
                    body = body.substitute(param, &Self::lit(arg)?);
                }
                self.branches(&body, state, unfold + 1)
            }
            ProcessTerm::Par(l, r, sync) => {
                let mut out = Vec::new();
                let left = self.branches(l, state, unfold + 1)?;
                for lb in &left {
                    if sync.contains(&lb.offer.name) {
                        for rb in self.branches(r, &lb.state, unfold + 1)? {
                            if let Some(offer) = lb.offer.unify(&rb.offer) {
                                out.push(Branch {
                                    offer,
                                    pending: Pending::Par(
                                        Box::new(lb.pending.clone()),
                                        Box::new(rb.pending),
                                        sync.clone(),
                                    ),
                                    state: rb.state,
                                });
                            }
                        }
                    }
                }
                for lb in left {
                    if !sync.contains(&lb.offer.name) {
                        out.push(Branch {
                            offer: lb.offer,
                            pending: Pending::Par(
                                Box::new(lb.pending),
                                Box::new(Pending::Idle((**r).clone())),
                                sync.clone(),
                            ),
                            state: lb.state,
                        });
                    }
                }
                for rb in self.branches(r, state, unfold + 1)? {
                    if !sync.contains(&rb.offer.name) {
                        out.push(Branch {
                            offer: rb.offer,
                            pending: Pending::Par(
                                Box::new(Pending::Idle((**l).clone())),
                                Box::new(rb.pending),
                                sync.clone(),
                            ),
                            state: rb.state,
                        });
                    }
                }
                Ok(out)
            }
        }
    }

    /// Every concrete event `term` can engage in next, inputs drawn from
    /// `domain`.
    pub fn initials(
        &self,
        term: &ProcessTerm,
        state: &G::State,
        domain: &Domain,
    ) -> Result<BTreeSet<Event>, HarnessError> {
        let mut out = BTreeSet::new();
        for b in self.branches(term, state, 0)? {
            out.extend(b.offer.expand(domain)?);
        }
        Ok(out)
    }

    /// Names of the events `term` can engage in next.
    pub fn initial_names(&self, term: &ProcessTerm, state: &G::State) -> Result<BTreeSet<String>, HarnessError> {
        Ok(self.branches(term, state, 0)?.into_iter().map(|b| b.offer.name).collect())
    }

    /// Performs `event`, returning the continuation and the updated state.
    /// When several branches accept the event the first one is taken.
    pub fn after(
        &self,
        term: &ProcessTerm,
        event: &Event,
        state: &G::State,
    ) -> Result<(ProcessTerm, G::State), HarnessError> {
        self.successors(term, event, state)?.into_iter().next().ok_or_else(|| HarnessError::Refused(event.clone()))
    }

    /// Every continuation reachable by performing `event`.
    pub fn successors(
        &self,
        term: &ProcessTerm,
        event: &Event,
        state: &G::State,
    ) -> Result<Vec<(ProcessTerm, G::State)>, HarnessError> {
        Ok(self
            .branches(term, state, 0)?
            .into_iter()
            .filter(|b| b.offer.matches(event))
            .map(|b| (b.pending.fire(event), b.state))
            .collect())
    }

    /// All traces of length at most `depth`, including the empty trace.
    pub fn enumerate_traces(
        &self,
        term: &ProcessTerm,
        state: &G::State,
        domain: &Domain,
        depth: usize,
    ) -> Result<BTreeSet<Trace>, HarnessError> {
        if depth == 0 || depth > MAX_DEPTH {
            return Err(HarnessError::Depth(depth));
        }
        let mut traces = BTreeSet::new();
        let mut nodes = 0usize;
        let mut prefix = Vec::new();
        self.walk(term, state, domain, depth, &mut prefix, &mut traces, &mut nodes)?;
        Ok(traces)
    }

    #[allow(clippy::too_many_arguments)]
    fn walk(
        &self,
        term: &ProcessTerm,
        state: &G::State,
        domain: &Domain,
        remaining: usize,
        prefix: &mut Trace,
        traces: &mut BTreeSet<Trace>,
        nodes: &mut usize,
    ) -> Result<(), HarnessError> {
        *nodes += 1;
        if *nodes > MAX_NODES {
            return Err(HarnessError::StateSpace);
        }
        traces.insert(prefix.clone());
        if remaining == 0 {
            return Ok(());
        }
        for b in self.branches(term, state, 0)? {
            for event in b.offer.expand(domain)? {
                let next = b.pending.clone().fire(&event);
                prefix.push(event);
                self.walk(&next, &b.state, domain, remaining - 1, prefix, traces, nodes)?;
                prefix.pop();
            }
        }
        Ok(())
    }
}

/// Synchronised parallel composition: events named in `sync` need both
/// sides, all others interleave.
pub fn compose(p: ProcessTerm, q: ProcessTerm, sync: BTreeSet<String>) -> ProcessTerm {
    ProcessTerm::Par(Box::new(p), Box::new(q), sync)
}

/// Traces of `traces` that no other trace extends.
pub fn maximal(traces: &BTreeSet<Trace>) -> BTreeSet<Trace> {
    traces.iter().filter(|t| !traces.iter().any(|u| u.len() > t.len() && u.starts_with(t))).cloned().collect()
}

/// Restriction of every trace to events named in `names`.
pub fn project(traces: &BTreeSet<Trace>, names: &BTreeSet<String>) -> BTreeSet<Trace> {
    traces.iter().map(|t| t.iter().filter(|e| names.contains(&e.name)).cloned().collect()).collect()
}

//! Labelled abstract syntax, environments and the structural operations
//! shared by the interpreter and the analyses.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

/// Program point. Unique per node of a freshly parsed program.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(pub u32);

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dependency marker name, e.g. `H`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Marker(pub String);

impl Marker {
    pub fn new(name: impl Into<String>) -> Self {
        Marker(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Marker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub type Name = String;

#[derive(Clone, Debug, PartialEq)]
pub enum Const {
    Undef,
    Null,
    Bool(bool),
    Str(String),
    Num(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PrimOp {
    Eq,
    Sub,
    Typeof,
}

impl PrimOp {
    pub fn name(self) -> &'static str {
        match self {
            PrimOp::Eq => "eq",
            PrimOp::Sub => "sub",
            PrimOp::Typeof => "typeof",
        }
    }
}

/// Environment of an explicit substitution. Values are stage-0 expressions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Env(Arc<BTreeMap<Name, Expr>>);

impl Env {
    pub fn empty() -> Self {
        Env::default()
    }

    pub fn get(&self, x: &str) -> Option<&Expr> {
        self.0.get(x)
    }

    /// `ρ[x ↦ v]`
    pub fn extend(&self, x: &str, v: Expr) -> Env {
        let mut map = (*self.0).clone();
        map.insert(x.to_string(), v);
        Env(Arc::new(map))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &Expr)> {
        self.0.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn map_values(&self, mut f: impl FnMut(&Expr) -> Expr) -> Env {
        Env(Arc::new(self.0.iter().map(|(k, v)| (k.clone(), f(v))).collect()))
    }
}

impl FromIterator<(Name, Expr)> for Env {
    fn from_iter<I: IntoIterator<Item = (Name, Expr)>>(iter: I) -> Self {
        Env(Arc::new(iter.into_iter().collect()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    pub term: Term,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Const(Const),
    Record(Vec<(String, Expr)>),
    Var(Name),
    Fun(Name, Box<Expr>),
    App(Box<Expr>, Box<Expr>),
    Box(Box<Expr>),
    Unbox(Box<Expr>),
    Run(Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Read(Box<Expr>, Box<Expr>),
    Write(Box<Expr>, Box<Expr>, Box<Expr>),
    Del(Box<Expr>, Box<Expr>),
    /// Explicit substitution `(t, ρ)`; the label lives on the enclosing expression.
    Closure(Box<Term>, Env),
    RunIn(Box<Expr>, Env),
    Marked(Marker, Box<Expr>),
    Hole,
    Prim(PrimOp, Box<Expr>, Option<Box<Expr>>),
}

impl Expr {
    pub fn new(term: Term, label: Label) -> Self {
        Expr { term, label }
    }

    pub fn relabel(mut self, label: Label) -> Self {
        self.label = label;
        self
    }

    /// `(t, ρ)^ℓ` built from this expression's term and label.
    pub fn with_env(self, env: &Env) -> Expr {
        Expr::new(Term::Closure(Box::new(self.term), env.clone()), self.label)
    }

    /// Immediate subexpressions in evaluation order (environments excluded).
    pub fn children(&self) -> Vec<&Expr> {
        match &self.term {
            Term::Const(_) | Term::Var(_) | Term::Hole | Term::Closure(..) => vec![],
            Term::Record(fs) => fs.iter().map(|(_, e)| e).collect(),
            Term::Fun(_, b) | Term::Box(b) | Term::Unbox(b) | Term::Run(b) => vec![b],
            Term::RunIn(b, _) | Term::Marked(_, b) => vec![b],
            Term::App(a, b) | Term::Read(a, b) | Term::Del(a, b) => vec![a, b],
            Term::If(a, b, c) | Term::Write(a, b, c) => vec![a, b, c],
            Term::Prim(_, a, b) => {
                let mut v = vec![a.as_ref()];
                if let Some(b) = b {
                    v.push(b);
                }
                v
            }
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut Expr> {
        match &mut self.term {
            Term::Const(_) | Term::Var(_) | Term::Hole | Term::Closure(..) => vec![],
            Term::Record(fs) => fs.iter_mut().map(|(_, e)| e).collect(),
            Term::Fun(_, b) | Term::Box(b) | Term::Unbox(b) | Term::Run(b) => vec![b],
            Term::RunIn(b, _) | Term::Marked(_, b) => vec![b],
            Term::App(a, b) | Term::Read(a, b) | Term::Del(a, b) => vec![a, b],
            Term::If(a, b, c) | Term::Write(a, b, c) => vec![a, b, c],
            Term::Prim(_, a, b) => {
                let mut v = vec![a.as_mut()];
                if let Some(b) = b {
                    v.push(b);
                }
                v
            }
        }
    }

    /// Pre-order walk over every expression node, including the bodies of
    /// closures (as pseudo-expressions carrying the closure label) and
    /// environment values.
    pub fn walk(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match &self.term {
            Term::Closure(t, env) => {
                let inner = Expr::new((**t).clone(), self.label);
                for c in inner.children() {
                    c.walk(f);
                }
                for (_, v) in env.iter() {
                    v.walk(f);
                }
            }
            Term::RunIn(b, env) => {
                b.walk(f);
                for (_, v) in env.iter() {
                    v.walk(f);
                }
            }
            _ => {
                for c in self.children() {
                    c.walk(f);
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }

    pub fn is_intermediate_free(&self) -> bool {
        let mut ok = true;
        self.walk(&mut |e| {
            if matches!(e.term, Term::Closure(..) | Term::RunIn(..) | Term::Hole) {
                ok = false;
            }
        });
        ok
    }
}

/// Strip every marker, keeping the marked subexpression.
pub fn unmark(e: &Expr) -> Expr {
    match &e.term {
        Term::Marked(_, inner) => unmark(inner),
        _ => map_children(e, unmark),
    }
}

/// `⌊e⌋M`: markers outside `keep` become holes carrying the marked node's label.
pub fn erase(e: &Expr, keep: &BTreeSet<Marker>) -> Expr {
    match &e.term {
        Term::Marked(m, _) if !keep.contains(m) => Expr::new(Term::Hole, e.label),
        _ => map_children(e, |c| erase(c, keep)),
    }
}

/// Rebuild `e` with `f` applied to every direct child, environments included.
pub fn map_children(e: &Expr, mut f: impl FnMut(&Expr) -> Expr) -> Expr {
    let b = |x: &Expr, f: &mut dyn FnMut(&Expr) -> Expr| Box::new(f(x));
    let term = match &e.term {
        Term::Const(_) | Term::Var(_) | Term::Hole => e.term.clone(),
        Term::Record(fs) => Term::Record(fs.iter().map(|(s, v)| (s.clone(), f(v))).collect()),
        Term::Fun(x, body) => Term::Fun(x.clone(), b(body, &mut f)),
        Term::App(a, c) => Term::App(b(a, &mut f), b(c, &mut f)),
        Term::Box(a) => Term::Box(b(a, &mut f)),
        Term::Unbox(a) => Term::Unbox(b(a, &mut f)),
        Term::Run(a) => Term::Run(b(a, &mut f)),
        Term::If(c, t, el) => Term::If(b(c, &mut f), b(t, &mut f), b(el, &mut f)),
        Term::Read(r, s) => Term::Read(b(r, &mut f), b(s, &mut f)),
        Term::Write(r, s, v) => Term::Write(b(r, &mut f), b(s, &mut f), b(v, &mut f)),
        Term::Del(r, s) => Term::Del(b(r, &mut f), b(s, &mut f)),
        Term::Closure(t, env) => {
            let inner = f(&Expr::new((**t).clone(), e.label));
            Term::Closure(Box::new(inner.term), env.map_values(&mut f))
        }
        Term::RunIn(a, env) => Term::RunIn(b(a, &mut f), env.map_values(&mut f)),
        Term::Marked(m, a) => Term::Marked(m.clone(), b(a, &mut f)),
        Term::Prim(op, l, r) => {
            let l = b(l, &mut f);
            Term::Prim(*op, l, r.as_ref().map(|r| Box::new(f(r))))
        }
    };
    Expr::new(term, e.label)
}

/// `e1 ≼ e2`: `e1` is `e2` with some subexpressions replaced by holes.
/// Labels are compared everywhere except at holes of `e1`.
pub fn is_prefix(e1: &Expr, e2: &Expr) -> bool {
    if matches!(e1.term, Term::Hole) {
        return true;
    }
    e1.label == e2.label && term_prefix(&e1.term, &e2.term)
}

fn term_prefix(t1: &Term, t2: &Term) -> bool {
    let p = |a: &Expr, b: &Expr| is_prefix(a, b);
    match (t1, t2) {
        (Term::Const(a), Term::Const(b)) => a == b,
        (Term::Var(a), Term::Var(b)) => a == b,
        (Term::Hole, _) => true,
        (Term::Record(a), Term::Record(b)) => {
            a.len() == b.len() && a.iter().zip(b).all(|((s1, e1), (s2, e2))| s1 == s2 && p(e1, e2))
        }
        (Term::Fun(x, a), Term::Fun(y, b)) => x == y && p(a, b),
        (Term::App(a1, a2), Term::App(b1, b2))
        | (Term::Read(a1, a2), Term::Read(b1, b2))
        | (Term::Del(a1, a2), Term::Del(b1, b2)) => p(a1, b1) && p(a2, b2),
        (Term::Box(a), Term::Box(b)) | (Term::Unbox(a), Term::Unbox(b)) | (Term::Run(a), Term::Run(b)) => {
            p(a, b)
        }
        (Term::If(a1, a2, a3), Term::If(b1, b2, b3)) | (Term::Write(a1, a2, a3), Term::Write(b1, b2, b3)) => {
            p(a1, b1) && p(a2, b2) && p(a3, b3)
        }
        (Term::Closure(a, r1), Term::Closure(b, r2)) => term_prefix(a, b) && env_prefix(r1, r2),
        (Term::RunIn(a, r1), Term::RunIn(b, r2)) => p(a, b) && env_prefix(r1, r2),
        (Term::Marked(m1, a), Term::Marked(m2, b)) => m1 == m2 && p(a, b),
        (Term::Prim(o1, a1, a2), Term::Prim(o2, b1, b2)) => {
            o1 == o2
                && p(a1, b1)
                && match (a2, b2) {
                    (None, None) => true,
                    (Some(a), Some(b)) => p(a, b),
                    _ => false,
                }
        }
        _ => false,
    }
}

fn env_prefix(r1: &Env, r2: &Env) -> bool {
    r1.len() == r2.len()
        && r1
            .iter()
            .zip(r2.iter())
            .all(|((x, v1), (y, v2))| x == y && is_prefix(v1, v2))
}

pub fn markers_of(e: &Expr) -> BTreeSet<Marker> {
    let mut out = BTreeSet::new();
    e.walk(&mut |n| {
        if let Term::Marked(m, _) = &n.term {
            out.insert(m.clone());
        }
    });
    out
}

/// Structural equality ignoring every label.
pub fn eq_modulo_labels(a: &Expr, b: &Expr) -> bool {
    strip_labels(a) == strip_labels(b)
}

pub fn strip_labels(e: &Expr) -> Expr {
    let mut out = map_children(e, strip_labels);
    out.label = Label(0);
    out
}

/// Membership in the stage-`n` value grammar.
pub fn is_value(e: &Expr, n: u32) -> bool {
    match &e.term {
        Term::Const(_) | Term::Hole => true,
        Term::Record(fs) => fs.iter().all(|(_, v)| is_value(v, n)),
        Term::Marked(_, v) => is_value(v, n),
        Term::Box(b) => is_value(b, n + 1),
        Term::Closure(t, _) => n == 0 && matches!(**t, Term::Fun(..)),
        _ if n == 0 => false,
        Term::Var(_) => true,
        Term::Fun(_, b) | Term::Run(b) => is_value(b, n),
        Term::Unbox(b) => n >= 2 && is_value(b, n - 1),
        Term::App(a, b) | Term::Read(a, b) | Term::Del(a, b) => is_value(a, n) && is_value(b, n),
        Term::If(a, b, c) | Term::Write(a, b, c) => is_value(a, n) && is_value(b, n) && is_value(c, n),
        Term::Prim(_, a, b) => is_value(a, n) && b.as_ref().is_none_or(|b| is_value(b, n)),
        Term::RunIn(..) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(n: u32) -> Label {
        Label(n)
    }

    fn k(c: Const, n: u32) -> Expr {
        Expr::new(Term::Const(c), l(n))
    }

    fn marked(m: &str, e: Expr, n: u32) -> Expr {
        Expr::new(Term::Marked(Marker::new(m), Box::new(e)), l(n))
    }

    fn set(ms: &[&str]) -> BTreeSet<Marker> {
        ms.iter().map(|m| Marker::new(*m)).collect()
    }

    #[test]
    fn unmark_nested() {
        let e = marked("H", marked("L", k(Const::Bool(false), 0), 1), 2);
        assert_eq!(unmark(&e), k(Const::Bool(false), 0));
        assert_eq!(markers_of(&e), set(&["H", "L"]));
    }

    #[test]
    fn erase_keeps_label_on_hole() {
        let e = marked("H", k(Const::Bool(true), 0), 1);
        assert_eq!(erase(&e, &set(&["H"])), e);
        assert_eq!(erase(&e, &set(&["L"])), Expr::new(Term::Hole, l(1)));
    }

    #[test]
    fn prefix_basics() {
        let x = Expr::new(Term::Var("x".into()), l(0));
        let f = Expr::new(Term::Fun("x".into(), Box::new(x.clone())), l(1));
        let hole_body = Expr::new(Term::Fun("x".into(), Box::new(Expr::new(Term::Hole, l(0)))), l(1));
        let g = Expr::new(
            Term::Fun("y".into(), Box::new(Expr::new(Term::Var("y".into()), l(0)))),
            l(1),
        );
        assert!(is_prefix(&Expr::new(Term::Hole, l(7)), &f));
        assert!(is_prefix(&hole_body, &f));
        assert!(!is_prefix(&f, &g));
        assert!(is_prefix(&f, &f));
        assert!(!is_prefix(&f, &hole_body));
    }

    #[test]
    fn stage_values() {
        let x = Expr::new(Term::Var("x".into()), l(0));
        assert!(!is_value(&x, 0));
        assert!(is_value(&x, 1));
        let bx = Expr::new(Term::Box(Box::new(x.clone())), l(1));
        assert!(is_value(&bx, 0));
        let ub = Expr::new(Term::Unbox(Box::new(bx.clone())), l(2));
        assert!(!is_value(&ub, 1));
        assert!(is_value(&ub, 2));
        let clo = Expr::new(
            Term::Closure(Box::new(Term::Fun("x".into(), Box::new(x.clone()))), Env::empty()),
            l(3),
        );
        assert!(is_value(&clo, 0));
        assert!(!is_value(&clo, 1));
        assert!(is_value(&Expr::new(Term::Hole, l(4)), 3));
    }
}

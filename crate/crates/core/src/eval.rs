//! Stage-indexed small-step interpreter.
//!
//! `decompose` locates the unique redex following the left-to-right context
//! grammar; `contract` applies the single rule that matches it.

use std::fmt;

use thiserror::Error;

use crate::pretty::show;
use crate::syntax::{is_value, Const, Env, Expr, Label, Marker, PrimOp, Term};

pub const DEFAULT_FUEL: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    EnvConst,
    EnvRecord,
    EnvVar,
    EnvFun,
    EnvApp,
    EnvBox,
    EnvUnbox,
    EnvRun,
    EnvIf,
    EnvRead,
    EnvWrite,
    EnvDel,
    EnvMarker,
    EnvHole,
    EnvPrim,
    EnvClosure,
    EnvRunIn,
    Lookup,
    Apply,
    Unbox,
    Run,
    IfTrue,
    IfFalse,
    Read1,
    Read2,
    Read3,
    Write1,
    Write2,
    Del1,
    Del2,
    Prim,
    LiftApp,
    LiftIf,
    LiftUnbox,
    LiftRunIn,
    LiftRun,
    LiftReadRec,
    LiftReadSel,
    LiftWriteRec,
    LiftWriteSel,
    LiftDelRec,
    LiftDelSel,
    LiftPrim,
    HoleLift,
}

impl Rule {
    pub const ALL: [Rule; 44] = [
        Rule::EnvConst,
        Rule::EnvRecord,
        Rule::EnvVar,
        Rule::EnvFun,
        Rule::EnvApp,
        Rule::EnvBox,
        Rule::EnvUnbox,
        Rule::EnvRun,
        Rule::EnvIf,
        Rule::EnvRead,
        Rule::EnvWrite,
        Rule::EnvDel,
        Rule::EnvMarker,
        Rule::EnvHole,
        Rule::EnvPrim,
        Rule::EnvClosure,
        Rule::EnvRunIn,
        Rule::Lookup,
        Rule::Apply,
        Rule::Unbox,
        Rule::Run,
        Rule::IfTrue,
        Rule::IfFalse,
        Rule::Read1,
        Rule::Read2,
        Rule::Read3,
        Rule::Write1,
        Rule::Write2,
        Rule::Del1,
        Rule::Del2,
        Rule::Prim,
        Rule::LiftApp,
        Rule::LiftIf,
        Rule::LiftUnbox,
        Rule::LiftRunIn,
        Rule::LiftRun,
        Rule::LiftReadRec,
        Rule::LiftReadSel,
        Rule::LiftWriteRec,
        Rule::LiftWriteSel,
        Rule::LiftDelRec,
        Rule::LiftDelSel,
        Rule::LiftPrim,
        Rule::HoleLift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::EnvConst => "Env-Const",
            Rule::EnvRecord => "Env-Record",
            Rule::EnvVar => "Env-Var",
            Rule::EnvFun => "Env-Fun",
            Rule::EnvApp => "Env-App",
            Rule::EnvBox => "Env-Box",
            Rule::EnvUnbox => "Env-Unbox",
            Rule::EnvRun => "Env-Run",
            Rule::EnvIf => "Env-If",
            Rule::EnvRead => "Env-Read",
            Rule::EnvWrite => "Env-Write",
            Rule::EnvDel => "Env-Del",
            Rule::EnvMarker => "Env-Marker",
            Rule::EnvHole => "Env-Hole",
            Rule::EnvPrim => "Env-Prim",
            Rule::EnvClosure => "Env-Closure",
            Rule::EnvRunIn => "Env-RunIn",
            Rule::Lookup => "Lookup",
            Rule::Apply => "Apply",
            Rule::Unbox => "Unbox",
            Rule::Run => "Run",
            Rule::IfTrue => "IfTrue",
            Rule::IfFalse => "IfFalse",
            Rule::Read1 => "Read1",
            Rule::Read2 => "Read2",
            Rule::Read3 => "Read3",
            Rule::Write1 => "Write1",
            Rule::Write2 => "Write2",
            Rule::Del1 => "Del1",
            Rule::Del2 => "Del2",
            Rule::Prim => "Prim",
            Rule::LiftApp => "Lift-App",
            Rule::LiftIf => "Lift-If",
            Rule::LiftUnbox => "Lift-Unbox",
            Rule::LiftRunIn => "Lift-RunIn",
            Rule::LiftRun => "Lift-Run",
            Rule::LiftReadRec => "Lift-ReadRec",
            Rule::LiftReadSel => "Lift-ReadSel",
            Rule::LiftWriteRec => "Lift-WriteRec",
            Rule::LiftWriteSel => "Lift-WriteSel",
            Rule::LiftDelRec => "Lift-DelRec",
            Rule::LiftDelSel => "Lift-DelSel",
            Rule::LiftPrim => "Lift-Prim",
            Rule::HoleLift => "Hole-Lift",
        }
    }

    pub fn is_lift(self) -> bool {
        self.name().starts_with("Lift-")
    }

    pub fn is_propagation(self) -> bool {
        self.name().starts_with("Env-")
    }

    /// Try this rule on a redex at stage `n`.
    pub fn apply(self, e: &Expr, n: u32) -> Option<Expr> {
        let l = e.label;
        if let Term::Closure(t, env) = &e.term {
            return propagate(self, t, env, l, n);
        }
        match (self, &e.term) {
            (Rule::Apply, Term::App(f, v)) if n == 0 => match &f.term {
                Term::Closure(t, rho) => match &**t {
                    Term::Fun(x, body) => Some((**body).clone().with_env(&rho.extend(x, (**v).clone()))),
                    _ => None,
                },
                _ => None,
            },
            (Rule::LiftApp, Term::App(f, v)) if n == 0 => {
                let (m, inner) = marked(f)?;
                Some(lift(m, Term::App(Box::new(inner.clone()), v.clone()), l))
            }
            (Rule::Unbox, Term::Unbox(b)) if n == 1 => match &b.term {
                Term::Box(v) => Some((**v).clone().relabel(l)),
                _ => None,
            },
            (Rule::LiftUnbox, Term::Unbox(b)) if n == 1 => {
                let (m, inner) = marked(b)?;
                Some(lift(m, Term::Unbox(Box::new(inner.clone())), l))
            }
            (Rule::Run, Term::RunIn(b, rho)) if n == 0 => match &b.term {
                Term::Box(v) => Some(Expr::new(Term::Closure(Box::new(v.term.clone()), rho.clone()), l)),
                _ => None,
            },
            (Rule::Run, Term::Run(b)) if n == 0 => match &b.term {
                Term::Box(v) => Some(Expr::new(
                    Term::Closure(Box::new(v.term.clone()), Env::empty()),
                    l,
                )),
                _ => None,
            },
            (Rule::LiftRunIn, Term::RunIn(b, rho)) if n == 0 => {
                let (m, inner) = marked(b)?;
                Some(lift(m, Term::RunIn(Box::new(inner.clone()), rho.clone()), l))
            }
            (Rule::LiftRun, Term::Run(b)) if n == 0 => {
                let (m, inner) = marked(b)?;
                Some(lift(m, Term::Run(Box::new(inner.clone())), l))
            }
            (Rule::IfTrue, Term::If(c, a, _)) if n == 0 => {
                matches!(c.term, Term::Const(Const::Bool(true))).then(|| (**a).clone())
            }
            (Rule::IfFalse, Term::If(c, _, b)) if n == 0 => {
                matches!(c.term, Term::Const(Const::Bool(false))).then(|| (**b).clone())
            }
            (Rule::LiftIf, Term::If(c, a, b)) if n == 0 => {
                let (m, inner) = marked(c)?;
                Some(lift(
                    m,
                    Term::If(Box::new(inner.clone()), a.clone(), b.clone()),
                    l,
                ))
            }
            (Rule::Read1 | Rule::Read2 | Rule::Read3, Term::Read(r, s)) if n == 0 => {
                let (fields, sel) = (record(r)?, string(s)?);
                read(self, fields, sel, s, l)
            }
            (Rule::LiftReadRec, Term::Read(r, s)) if n == 0 => {
                let (m, inner) = marked(r)?;
                Some(lift(m, Term::Read(Box::new(inner.clone()), s.clone()), l))
            }
            (Rule::LiftReadSel, Term::Read(r, s)) if n == 0 && marked(r).is_none() && !is_hole(r) => {
                let (m, inner) = marked(s)?;
                Some(lift(m, Term::Read(r.clone(), Box::new(inner.clone())), l))
            }
            (Rule::Write1 | Rule::Write2, Term::Write(r, s, v)) if n == 0 => {
                let (fields, sel) = (record(r)?, string(s)?);
                let present = fields.iter().any(|(f, _)| f == sel);
                if present != (self == Rule::Write1) {
                    return None;
                }
                let mut fields = fields.clone();
                match fields.iter_mut().find(|(f, _)| f == sel) {
                    Some(slot) => slot.1 = (**v).clone(),
                    None => fields.push((sel.to_string(), (**v).clone())),
                }
                Some(Expr::new(Term::Record(fields), l))
            }
            (Rule::LiftWriteRec, Term::Write(r, s, v)) if n == 0 => {
                let (m, inner) = marked(r)?;
                Some(lift(
                    m,
                    Term::Write(Box::new(inner.clone()), s.clone(), v.clone()),
                    l,
                ))
            }
            (Rule::LiftWriteSel, Term::Write(r, s, v)) if n == 0 && marked(r).is_none() && !is_hole(r) => {
                let (m, inner) = marked(s)?;
                Some(lift(
                    m,
                    Term::Write(r.clone(), Box::new(inner.clone()), v.clone()),
                    l,
                ))
            }
            (Rule::Del1 | Rule::Del2, Term::Del(r, s)) if n == 0 => {
                let (fields, sel) = (record(r)?, string(s)?);
                let present = fields.iter().any(|(f, _)| f == sel);
                if present != (self == Rule::Del1) {
                    return None;
                }
                let fields = fields.iter().filter(|(f, _)| f != sel).cloned().collect();
                Some(Expr::new(Term::Record(fields), l))
            }
            (Rule::LiftDelRec, Term::Del(r, s)) if n == 0 => {
                let (m, inner) = marked(r)?;
                Some(lift(m, Term::Del(Box::new(inner.clone()), s.clone()), l))
            }
            (Rule::LiftDelSel, Term::Del(r, s)) if n == 0 && marked(r).is_none() && !is_hole(r) => {
                let (m, inner) = marked(s)?;
                Some(lift(m, Term::Del(r.clone(), Box::new(inner.clone())), l))
            }
            (Rule::Prim, Term::Prim(op, a, b)) if n == 0 => {
                // marked operands are hoisted first by Lift-Prim
                if demanded_hole_or_marker(&[Some(&**a), b.as_deref()]).is_some() {
                    return None;
                }
                let k = eval_prim(*op, a, b.as_deref()).ok()?;
                Some(Expr::new(Term::Const(k), l))
            }
            (Rule::LiftPrim, Term::Prim(op, a, b)) if n == 0 => {
                if let Some((m, inner)) = marked(a) {
                    return Some(lift(m, Term::Prim(*op, Box::new(inner.clone()), b.clone()), l));
                }
                if is_hole(a) {
                    return None;
                }
                let (m, inner) = marked(b.as_deref()?)?;
                Some(lift(
                    m,
                    Term::Prim(*op, a.clone(), Some(Box::new(inner.clone()))),
                    l,
                ))
            }
            (Rule::HoleLift, _) if n == 0 || matches!(e.term, Term::Unbox(_)) => {
                let positions: Vec<Option<&Expr>> = match &e.term {
                    Term::App(f, _) => vec![Some(&**f)],
                    Term::If(c, ..) => vec![Some(&**c)],
                    Term::Unbox(b) if n == 1 => vec![Some(&**b)],
                    Term::Run(b) | Term::RunIn(b, _) => vec![Some(&**b)],
                    Term::Read(r, s) | Term::Write(r, s, _) | Term::Del(r, s) => vec![Some(&**r), Some(&**s)],
                    Term::Prim(_, a, b) => vec![Some(&**a), b.as_deref()],
                    _ => return None,
                };
                let first = demanded_hole_or_marker(&positions)?;
                is_hole(first).then(|| Expr::new(Term::Hole, l))
            }
            _ => None,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// First demanded operand that is a hole or a marker. That operand decides
/// between a lift and hole propagation.
fn demanded_hole_or_marker<'a>(positions: &[Option<&'a Expr>]) -> Option<&'a Expr> {
    positions
        .iter()
        .flatten()
        .copied()
        .find(|x| is_hole(x) || marked(x).is_some())
}

fn marked(e: &Expr) -> Option<(&Marker, &Expr)> {
    match &e.term {
        Term::Marked(m, inner) => Some((m, inner)),
        _ => None,
    }
}

fn record(e: &Expr) -> Option<&Vec<(String, Expr)>> {
    match &e.term {
        Term::Record(fs) => Some(fs),
        _ => None,
    }
}

fn string(e: &Expr) -> Option<&str> {
    match &e.term {
        Term::Const(Const::Str(s)) => Some(s),
        _ => None,
    }
}

/// `(𝔪 : t^ℓ)^ℓ`: lifts duplicate the outer label onto the hoisted node.
fn lift(m: &Marker, t: Term, l: Label) -> Expr {
    Expr::new(Term::Marked(m.clone(), Box::new(Expr::new(t, l))), l)
}

fn read(rule: Rule, fields: &[(String, Expr)], sel: &str, s: &Expr, l: Label) -> Option<Expr> {
    if let Some((_, v)) = fields.iter().find(|(f, _)| f == sel) {
        return (rule == Rule::Read1).then(|| v.clone().relabel(l));
    }
    let proto = fields.iter().find(|(f, _)| f == "__proto__").map(|(_, v)| v)?;
    match (&proto.term, rule) {
        (Term::Record(_), Rule::Read2) => Some(Expr::new(
            Term::Read(Box::new(proto.clone()), Box::new(s.clone())),
            l,
        )),
        (Term::Const(Const::Null), Rule::Read3) => Some(Expr::new(Term::Const(Const::Undef), l)),
        _ => None,
    }
}

fn propagate(rule: Rule, t: &Term, rho: &Env, l: Label, n: u32) -> Option<Expr> {
    let push = |e: &Expr| Box::new(e.clone().with_env(rho));
    let term = match (rule, t) {
        (Rule::EnvConst, Term::Const(k)) => Term::Const(k.clone()),
        (Rule::EnvRecord, Term::Record(fs)) => {
            Term::Record(fs.iter().map(|(s, e)| (s.clone(), *push(e))).collect())
        }
        (Rule::Lookup, Term::Var(x)) if n == 0 => return rho.get(x).map(|v| v.clone().relabel(l)),
        (Rule::EnvVar, Term::Var(x)) if n > 0 => Term::Var(x.clone()),
        (Rule::EnvFun, Term::Fun(x, body)) if n > 0 => Term::Fun(x.clone(), push(body)),
        (Rule::EnvApp, Term::App(a, b)) => Term::App(push(a), push(b)),
        (Rule::EnvBox, Term::Box(b)) => Term::Box(push(b)),
        (Rule::EnvUnbox, Term::Unbox(b)) => Term::Unbox(push(b)),
        (Rule::EnvRun, Term::Run(b)) if n == 0 => Term::RunIn(push(b), rho.clone()),
        (Rule::EnvRun, Term::Run(b)) => Term::Run(push(b)),
        (Rule::EnvIf, Term::If(a, b, c)) => Term::If(push(a), push(b), push(c)),
        (Rule::EnvRead, Term::Read(a, b)) => Term::Read(push(a), push(b)),
        (Rule::EnvWrite, Term::Write(a, b, c)) => Term::Write(push(a), push(b), push(c)),
        (Rule::EnvDel, Term::Del(a, b)) => Term::Del(push(a), push(b)),
        (Rule::EnvMarker, Term::Marked(m, b)) => Term::Marked(m.clone(), push(b)),
        (Rule::EnvHole, Term::Hole) => Term::Hole,
        (Rule::EnvPrim, Term::Prim(op, a, b)) => Term::Prim(*op, push(a), b.as_deref().map(push)),
        // the inner substitution already closes the term
        (Rule::EnvClosure, Term::Closure(inner, rho2)) => Term::Closure(inner.clone(), rho2.clone()),
        (Rule::EnvRunIn, Term::RunIn(b, rho2)) => Term::RunIn(push(b), rho2.clone()),
        _ => return None,
    };
    Some(Expr::new(term, l))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Error)]
pub enum StuckReason {
    #[error("ApplyNonFunction")]
    ApplyNonFunction,
    #[error("BranchNonBoolean")]
    BranchNonBoolean,
    #[error("ReadNonRecord")]
    ReadNonRecord,
    #[error("SelectorNonString")]
    SelectorNonString,
    #[error("UnboxNonBox")]
    UnboxNonBox,
    #[error("RunNonBox")]
    RunNonBox,
    #[error("UnboundVariable")]
    UnboundVariable,
    #[error("HoleDemanded")]
    HoleDemanded,
    #[error("MissingProtoField")]
    MissingProtoField,
    #[error("PrimTypeError")]
    PrimTypeError,
}

fn is_hole(e: &Expr) -> bool {
    matches!(e.term, Term::Hole)
}

/// Why no rule applies to a redex position.
fn stuck_reason(e: &Expr) -> StuckReason {
    use StuckReason::*;
    let demanded = |xs: &[&Expr]| xs.iter().any(|x| is_hole(x));
    match &e.term {
        Term::Closure(..) => UnboundVariable,
        Term::App(f, _) if is_hole(f) => HoleDemanded,
        Term::App(..) => ApplyNonFunction,
        Term::Unbox(b) | Term::Run(b) | Term::RunIn(b, _) if is_hole(b) => HoleDemanded,
        Term::Unbox(_) => UnboxNonBox,
        Term::Run(_) | Term::RunIn(..) => RunNonBox,
        Term::If(c, ..) if is_hole(c) => HoleDemanded,
        Term::If(..) => BranchNonBoolean,
        Term::Read(r, s) | Term::Write(r, s, _) | Term::Del(r, s) => {
            if demanded(&[r, s]) {
                HoleDemanded
            } else if record(r).is_none() {
                ReadNonRecord
            } else if string(s).is_none() {
                SelectorNonString
            } else {
                let proto = record(r)
                    .and_then(|fs| fs.iter().find(|(f, _)| f == "__proto__"))
                    .map(|(_, v)| v);
                if proto.is_some_and(is_hole) {
                    HoleDemanded
                } else {
                    MissingProtoField
                }
            }
        }
        Term::Prim(_, a, b) => {
            if is_hole(a) || b.as_deref().is_some_and(is_hole) {
                HoleDemanded
            } else {
                PrimTypeError
            }
        }
        Term::Var(_) | Term::Fun(..) => UnboundVariable,
        _ => UnboundVariable,
    }
}

/// Fires the unique applicable rule, or explains why none does.
pub fn contract(e: &Expr, n: u32) -> Result<(Rule, Expr), StuckReason> {
    Rule::ALL
        .iter()
        .find_map(|r| r.apply(e, n).map(|out| (*r, out)))
        .ok_or_else(|| stuck_reason(e))
}

/// Every rule that matches `e` at stage `n`; used to check determinism.
pub fn applicable_rules(e: &Expr, n: u32) -> Vec<Rule> {
    Rule::ALL
        .iter()
        .copied()
        .filter(|r| r.apply(e, n).is_some())
        .collect()
}

pub fn eval_prim(op: PrimOp, a: &Expr, b: Option<&Expr>) -> Result<Const, StuckReason> {
    match (op, b) {
        (PrimOp::Eq, Some(b)) => Ok(Const::Bool(match (&a.term, &b.term) {
            (Term::Const(x), Term::Const(y)) => x == y,
            _ => false,
        })),
        (PrimOp::Sub, Some(b)) => match (&a.term, &b.term) {
            (Term::Const(Const::Num(x)), Term::Const(Const::Num(y))) => Ok(Const::Num(x - y)),
            _ => Err(StuckReason::PrimTypeError),
        },
        (PrimOp::Typeof, None) => {
            let name = match &a.term {
                Term::Closure(t, _) if matches!(**t, Term::Fun(..)) => "function",
                Term::Record(_) => "object",
                Term::Box(_) => "box",
                Term::Const(Const::Bool(_)) => "boolean",
                Term::Const(Const::Num(_)) => "number",
                Term::Const(Const::Str(_)) => "string",
                Term::Const(Const::Undef) => "undefined",
                Term::Const(Const::Null) => "null",
                _ => return Err(StuckReason::PrimTypeError),
            };
            Ok(Const::Str(name.into()))
        }
        _ => Err(StuckReason::PrimTypeError),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decomposition {
    /// Redex at `path` (child indices from the root), reducible at `stage`.
    Redex {
        path: Vec<usize>,
        stage: u32,
    },
    AlreadyValue,
    NoRedex {
        reason: StuckReason,
        focus: Label,
    },
}

enum Found {
    Value,
    Redex(u32),
    Stuck(StuckReason, Label),
}

pub fn decompose(e: &Expr, m: u32) -> Decomposition {
    let mut path = Vec::new();
    match find(e, m, &mut path) {
        Found::Value => Decomposition::AlreadyValue,
        Found::Redex(stage) => Decomposition::Redex { path, stage },
        Found::Stuck(reason, focus) => Decomposition::NoRedex { reason, focus },
    }
}

fn find(e: &Expr, m: u32, path: &mut Vec<usize>) -> Found {
    // evaluate the listed children in order, each at its own stage
    fn seq(e: &Expr, stages: &[(usize, u32)], path: &mut Vec<usize>) -> Option<Found> {
        let kids = e.children();
        for &(i, s) in stages {
            path.push(i);
            match find(kids[i], s, path) {
                Found::Value => {
                    path.pop();
                }
                other => return Some(other),
            }
        }
        None
    }
    let stuck = |r| Found::Stuck(r, e.label);
    let at_zero = |done: Found| if m == 0 { Found::Redex(0) } else { done };
    match &e.term {
        Term::Const(_) | Term::Hole => Found::Value,
        Term::Var(_) if m == 0 => stuck(StuckReason::UnboundVariable),
        Term::Var(_) => Found::Value,
        Term::Closure(t, _) if m == 0 && matches!(**t, Term::Fun(..)) => Found::Value,
        Term::Closure(..) => Found::Redex(m),
        Term::Record(fs) => {
            let stages: Vec<_> = (0..fs.len()).map(|i| (i, m)).collect();
            seq(e, &stages, path).unwrap_or(Found::Value)
        }
        Term::Fun(..) if m == 0 => stuck(StuckReason::UnboundVariable),
        Term::Fun(..) | Term::Marked(..) => seq(e, &[(0, m)], path).unwrap_or(Found::Value),
        Term::App(..) | Term::Read(..) | Term::Del(..) => {
            seq(e, &[(0, m), (1, m)], path).unwrap_or_else(|| at_zero(Found::Value))
        }
        Term::Write(..) => seq(e, &[(0, m), (1, m), (2, m)], path).unwrap_or_else(|| at_zero(Found::Value)),
        Term::Box(_) => seq(e, &[(0, m + 1)], path).unwrap_or(Found::Value),
        Term::Unbox(_) if m == 0 => stuck(StuckReason::UnboxNonBox),
        Term::Unbox(_) => {
            seq(e, &[(0, m - 1)], path).unwrap_or(if m == 1 { Found::Redex(1) } else { Found::Value })
        }
        Term::Run(_) => seq(e, &[(0, m)], path).unwrap_or_else(|| at_zero(Found::Value)),
        Term::RunIn(..) => seq(e, &[(0, m)], path).unwrap_or_else(|| at_zero(stuck(StuckReason::RunNonBox))),
        Term::If(..) if m == 0 => seq(e, &[(0, 0)], path).unwrap_or(Found::Redex(0)),
        Term::If(..) => seq(e, &[(0, m), (1, m), (2, m)], path).unwrap_or(Found::Value),
        Term::Prim(_, _, b) => {
            let stages: &[(usize, u32)] = if b.is_some() { &[(0, m), (1, m)] } else { &[(0, m)] };
            seq(e, stages, path).unwrap_or_else(|| at_zero(Found::Value))
        }
    }
}

pub fn subexpr<'a>(e: &'a Expr, path: &[usize]) -> &'a Expr {
    path.iter().fold(e, |cur, &i| cur.children()[i])
}

fn subexpr_mut<'a>(e: &'a mut Expr, path: &[usize]) -> &'a mut Expr {
    let mut cur = e;
    for &i in path {
        cur = cur.children_mut().swap_remove(i);
    }
    cur
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepResult {
    Stepped {
        next: Expr,
        rule: Rule,
        stage: u32,
        focus: Label,
        /// Marker hoisted by a lift rule.
        lifted: Option<Marker>,
    },
    Value {
        stage: u32,
    },
    Stuck {
        reason: StuckReason,
        focus: Label,
    },
}

/// Evaluator knobs. The default is the reference semantics; `broken_lift`
/// makes one lift rule discard its marker, for mutation testing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Semantics {
    pub broken_lift: Option<Rule>,
}

impl Semantics {
    pub fn with_broken_lift(rule: Rule) -> Self {
        Semantics {
            broken_lift: Some(rule),
        }
    }

    fn contract(self, e: &Expr, n: u32) -> Result<(Rule, Expr), StuckReason> {
        let (rule, out) = contract(e, n)?;
        match (&out.term, self.broken_lift == Some(rule)) {
            (Term::Marked(_, inner), true) => Ok((rule, (**inner).clone().relabel(out.label))),
            _ => Ok((rule, out)),
        }
    }

    pub fn step(self, e: &Expr, m: u32) -> StepResult {
        step_with(e, m, self)
    }

    pub fn evaluate(self, e: &Expr, fuel: usize) -> Outcome {
        run_from_with(initial(e), fuel, self, |_| {})
    }
}

/// One `→⋄` step of `e` considered at stage `m`.
pub fn step(e: &Expr, m: u32) -> StepResult {
    step_with(e, m, Semantics::default())
}

fn step_with(e: &Expr, m: u32, sem: Semantics) -> StepResult {
    match decompose(e, m) {
        Decomposition::AlreadyValue => StepResult::Value { stage: m },
        Decomposition::NoRedex { reason, focus } => StepResult::Stuck { reason, focus },
        Decomposition::Redex { path, stage } => {
            let redex = subexpr(e, &path);
            match sem.contract(redex, stage) {
                Err(reason) => StepResult::Stuck {
                    reason,
                    focus: redex.label,
                },
                Ok((rule, out)) => {
                    let focus = redex.label;
                    let lifted = match (&out.term, rule.is_lift()) {
                        (Term::Marked(m, _), true) => Some(m.clone()),
                        _ => None,
                    };
                    let mut next = e.clone();
                    *subexpr_mut(&mut next, &path) = out;
                    StepResult::Stepped {
                        next,
                        rule,
                        stage,
                        focus,
                        lifted,
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub rule: Rule,
    pub stage: u32,
    pub focus: Label,
    pub lifted: Option<Marker>,
    /// Expression after the step.
    pub expr: Expr,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Value(Expr),
    Stuck {
        reason: StuckReason,
        focus: Label,
        expr: Expr,
    },
    FuelExhausted(Expr),
}

impl Outcome {
    pub fn value(&self) -> Option<&Expr> {
        match self {
            Outcome::Value(v) => Some(v),
            _ => None,
        }
    }

    pub fn expr(&self) -> &Expr {
        match self {
            Outcome::Value(e) | Outcome::FuelExhausted(e) => e,
            Outcome::Stuck { expr, .. } => expr,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Value(v) => write!(f, "{}", show(v)),
            Outcome::Stuck { reason, focus, expr } => {
                write!(f, "stuck: {reason} at label {focus} in {}", show(expr))
            }
            Outcome::FuelExhausted(_) => write!(f, "fuel exhausted"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub initial: Expr,
    pub steps: Vec<TraceStep>,
    pub outcome: Outcome,
}

impl Trace {
    pub fn rules(&self) -> Vec<&'static str> {
        self.steps.iter().map(|s| s.rule.name()).collect()
    }

    /// Initial expression followed by every intermediate state.
    pub fn states(&self) -> impl Iterator<Item = &Expr> {
        std::iter::once(&self.initial).chain(self.steps.iter().map(|s| &s.expr))
    }

    /// JSON lines, one object per step.
    pub fn to_json_lines(&self) -> String {
        self.steps
            .iter()
            .enumerate()
            .map(|(k, s)| {
                serde_json::json!({
                    "step": k + 1,
                    "stage": s.stage,
                    "rule": s.rule.name(),
                    "expr": show(&s.expr),
                })
                .to_string()
                    + "\n"
            })
            .collect()
    }
}

/// `(e, ε)`: the driver's initial configuration.
pub fn initial(e: &Expr) -> Expr {
    e.clone().with_env(&Env::empty())
}

/// Run `(e, ε)` to completion, recording every step.
pub fn eval_full(e: &Expr, fuel: usize) -> Trace {
    let mut steps = Vec::new();
    let outcome = run_from(initial(e), fuel, |s| steps.push(s));
    Trace {
        initial: initial(e),
        steps,
        outcome,
    }
}

/// Run `(e, ε)` to completion without keeping a trace.
pub fn evaluate(e: &Expr, fuel: usize) -> Outcome {
    run_from(initial(e), fuel, |_| {})
}

/// Iterate `step` at stage 0 starting from an already-initialised configuration.
pub fn run_from(cur: Expr, fuel: usize, on_step: impl FnMut(TraceStep)) -> Outcome {
    run_from_with(cur, fuel, Semantics::default(), on_step)
}

fn run_from_with(mut cur: Expr, fuel: usize, sem: Semantics, mut on_step: impl FnMut(TraceStep)) -> Outcome {
    for _ in 0..fuel {
        match step_with(&cur, 0, sem) {
            StepResult::Value { .. } => return Outcome::Value(cur),
            StepResult::Stuck { reason, focus } => {
                return Outcome::Stuck {
                    reason,
                    focus,
                    expr: cur,
                }
            }
            StepResult::Stepped {
                next,
                rule,
                stage,
                focus,
                lifted,
            } => {
                on_step(TraceStep {
                    rule,
                    stage,
                    focus,
                    lifted,
                    expr: next.clone(),
                });
                cur = next;
            }
        }
    }
    if is_value(&cur, 0) {
        Outcome::Value(cur)
    } else {
        Outcome::FuelExhausted(cur)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse, parse_str, SourceProgram};
    use crate::pretty::pretty;

    fn run(src: &str) -> Trace {
        eval_full(&parse_str(src).unwrap(), DEFAULT_FUEL)
    }

    fn value_text(t: &Trace) -> String {
        pretty(t.outcome.value().expect("value"), false, false)
    }

    #[test]
    fn simple_if() {
        let t = run("if (true) { false } else { 1 }");
        assert_eq!(value_text(&t), "false");
        assert_eq!(t.rules(), ["Env-If", "Env-Const", "IfTrue", "Env-Const"]);
        assert_eq!(
            pretty(&t.steps[0].expr, false, true),
            "if ((true, {})) { (false, {}) } else { (1, {}) }"
        );
    }

    #[test]
    fn staged_if() {
        let t = run("run (box (if (unbox (box (true))) { false } else { 1 }))");
        assert_eq!(value_text(&t), "false");
        assert!(t.steps.iter().any(|s| s.rule == Rule::Unbox && s.stage == 1));
        assert!(t.rules().contains(&"Run"));
    }

    #[test]
    fn capture() {
        let t = run("((fun(x){(fun(y){run x})})(box y))(true)");
        assert_eq!(value_text(&t), "true");
    }

    #[test]
    fn marked_if() {
        let t = run("if ((H : true)) { (L : false) } else { (I : 1) }");
        assert_eq!(value_text(&t), "(H : (L : false))");
        assert_eq!(
            t.rules(),
            [
                "Env-If",
                "Env-Marker",
                "Env-Const",
                "Lift-If",
                "IfTrue",
                "Env-Marker",
                "Env-Const"
            ]
        );
    }

    #[test]
    fn marked_fun() {
        let t = run("(((fun(x){(I : (fun(y){x}))})((H : 1)))((L : 2)))");
        assert_eq!(value_text(&t), "(I : (H : 1))");
    }

    #[test]
    fn proper_rules() {
        let read3 = run("{\"__proto__\": null, \"a\": 1}[\"zz\"]");
        assert_eq!(value_text(&read3), "undef");
        assert!(read3.rules().contains(&"Read3"));
        let read2 = run("{\"__proto__\": {\"__proto__\": null, \"a\": 7}}[\"a\"]");
        assert_eq!(value_text(&read2), "7");
        assert!(read2.rules().contains(&"Read2"));
        let write = run("({\"a\": 1}[\"b\"] = 2)[\"a\"] = 3");
        assert_eq!(value_text(&write), "{\"a\": 3, \"b\": 2}");
        let del = run("del {\"a\": 1, \"b\": 2}[\"a\"]");
        assert_eq!(value_text(&del), "{\"b\": 2}");
        assert_eq!(value_text(&run("5 - 1")), "4");
        assert_eq!(value_text(&run("5 == 0")), "false");
        assert_eq!(value_text(&run("0 == 0")), "true");
        assert_eq!(value_text(&run("typeof fun(x){x}")), "\"function\"");
        assert_eq!(value_text(&run("(H : 5) - (L : 1)")), "(H : (L : 4))");
    }

    #[test]
    fn lift_if_rule() {
        let src = SourceProgram::new("if ((H : true)) { 1 } else { 2 }", "<t>");
        let e = parse(&src, true).unwrap();
        let (rule, out) = contract(&e, 0).unwrap();
        assert_eq!(rule, Rule::LiftIf);
        assert_eq!(pretty(&out, false, false), "(H : if (true) { 1 } else { 2 })");
        assert_eq!(out.label, e.label);
    }

    #[test]
    fn stuck_cases() {
        let reason = |src: &str| match evaluate(&parse_str(src).unwrap(), 1000) {
            Outcome::Stuck { reason, .. } => reason,
            other => panic!("{src}: {other}"),
        };
        assert_eq!(reason("true(1)"), StuckReason::ApplyNonFunction);
        assert_eq!(reason("if (1) { 1 } else { 2 }"), StuckReason::BranchNonBoolean);
        assert_eq!(reason("1[\"a\"]"), StuckReason::ReadNonRecord);
        assert_eq!(reason("{\"a\": 1}[2]"), StuckReason::SelectorNonString);
        assert_eq!(reason("run 1"), StuckReason::RunNonBox);
        assert_eq!(reason("box (unbox 1)"), StuckReason::UnboxNonBox);
        assert_eq!(reason("x"), StuckReason::UnboundVariable);
        assert_eq!(reason("{\"a\": 1}[\"b\"]"), StuckReason::MissingProtoField);
        assert_eq!(reason("true - 1"), StuckReason::PrimTypeError);
    }

    #[test]
    fn fuel_exhaustion() {
        let e = parse_str("(fun(x){x(x)})(fun(x){x(x)})").unwrap();
        assert!(matches!(evaluate(&e, 50), Outcome::FuelExhausted(_)));
    }

    #[test]
    fn decompose_finds_stage_one_unbox() {
        let src = SourceProgram::new("box (unbox (box true))", "<t>");
        let e = parse(&src, true).unwrap();
        match decompose(&e, 0) {
            Decomposition::Redex { path, stage } => {
                assert_eq!(stage, 1);
                assert!(matches!(subexpr(&e, &path).term, Term::Unbox(_)));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            decompose(&parse_str("true").unwrap(), 0),
            Decomposition::AlreadyValue
        );
    }

    #[test]
    fn one_rule_per_redex() {
        for src in [
            "(((fun(x){(I : (fun(y){x}))})((H : 1)))((L : 2)))",
            "if ((H : 0) == 0) { 1 } else { typeof (L : 2) }",
            "_[(H : \"a\")]",
            "_ == (H : 1)",
            "{\"__proto__\": null}[_]",
        ] {
            one_rule_per_redex_in(src);
        }
    }

    fn intermediate(src: &str) -> Expr {
        parse(&SourceProgram::new(src, "<t>"), true).unwrap()
    }

    fn one_rule_per_redex_in(src: &str) {
        let e = intermediate(src);
        let mut cur = initial(&e);
        while let Decomposition::Redex { path, stage } = decompose(&cur, 0) {
            assert_eq!(applicable_rules(subexpr(&cur, &path), stage).len(), 1);
            match step(&cur, 0) {
                StepResult::Stepped { next, .. } => cur = next,
                other => panic!("{other:?}"),
            }
        }
        assert!(is_value(&cur, 0));
    }

    #[test]
    fn eq_lifts_marked_operands() {
        let e = parse_str("(H : 0) == 0").unwrap();
        assert_eq!(show(evaluate(&e, 100).value().unwrap()), "(H : true)");
    }

    #[test]
    fn demanded_holes_propagate() {
        let val = |src: &str| show(evaluate(&intermediate(src), 1000).value().unwrap());
        assert_eq!(val("fun(x){ 1 }(if (_) { 2 } else { 3 })"), "1");
        assert_eq!(val("5 == _"), "_");
        assert_eq!(val("typeof _"), "_");
        assert_eq!(val("_(1)"), "_");
        assert_eq!(val("run _"), "_");
        assert_eq!(val("box (unbox _)"), "box _");
        let e = intermediate("{\"__proto__\": _}[\"a\"]");
        assert!(matches!(
            evaluate(&e, 100),
            Outcome::Stuck {
                reason: StuckReason::HoleDemanded,
                ..
            }
        ));
    }

    #[test]
    fn broken_lift_drops_marker() {
        let e = parse_str("if ((H : true)) { 1 } else { 2 }").unwrap();
        let sem = Semantics::with_broken_lift(Rule::LiftIf);
        assert_eq!(show(sem.evaluate(&e, 100).value().unwrap()), "1");
        assert_eq!(show(evaluate(&e, 100).value().unwrap()), "(H : 1)");
    }
}

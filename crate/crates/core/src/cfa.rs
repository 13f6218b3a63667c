//! Constraint-based 0CFA with a simple and a binder-aware variant.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::syntax::{Const, Env, Expr, Label, Name, PrimOp, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Simple,
    Improved,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Simple => "simple",
            Variant::Improved => "improved",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbsVal {
    Null,
    Undef,
    Bool,
    Num,
    Str,
    /// Parameter name and body label.
    Fun(Name, Label),
    /// Body label.
    Box(Label),
    /// Allocation site.
    Rec(Label),
}

impl fmt::Display for AbsVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbsVal::Null => f.write_str("NULL"),
            AbsVal::Undef => f.write_str("UNDEF"),
            AbsVal::Bool => f.write_str("BOOL"),
            AbsVal::Num => f.write_str("NUM"),
            AbsVal::Str => f.write_str("STR"),
            AbsVal::Fun(x, b) => write!(f, "FUN({x},{b})"),
            AbsVal::Box(b) => write!(f, "BOX({b})"),
            AbsVal::Rec(l) => write!(f, "REC({l})"),
        }
    }
}

pub fn abstract_const(k: &Const) -> AbsVal {
    match k {
        Const::Null => AbsVal::Null,
        Const::Undef => AbsVal::Undef,
        Const::Bool(_) => AbsVal::Bool,
        Const::Num(_) => AbsVal::Num,
        Const::Str(_) => AbsVal::Str,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbsVar {
    /// Simple variant: every binder of `x` shares one variable.
    Name(Name),
    /// Improved variant: `x` bound by the abstraction labelled with the first field.
    Bound(Label, Name),
    /// Improved variant: `x` with no binder in the current frame (dynamic capture).
    Global(Name),
    /// Field slot `ℓ.s`.
    Field(Label, String),
}

impl AbsVar {
    /// Plain name for the variable forms; `None` for field slots.
    pub fn base_name(&self) -> Option<&str> {
        match self {
            AbsVar::Name(x) | AbsVar::Bound(_, x) | AbsVar::Global(x) => Some(x),
            AbsVar::Field(..) => None,
        }
    }
}

impl fmt::Display for AbsVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbsVar::Name(x) => f.write_str(x),
            AbsVar::Bound(b, x) => write!(f, "{x}@{b}"),
            AbsVar::Global(x) => write!(f, "{x}@global"),
            AbsVar::Field(l, s) => write!(f, "{l}.{s}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cell {
    Gamma(Label),
    Rho(AbsVar),
    /// Records reachable through `__proto__` from the record read at this label.
    Proto(Label),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Constraint {
    Member(AbsVal, Cell),
    Subset(Cell, Cell),
    Conditional {
        guard: (AbsVal, Cell),
        then: Box<Constraint>,
    },
}

impl Constraint {
    fn when(v: AbsVal, c: Cell, then: Constraint) -> Constraint {
        Constraint::Conditional {
            guard: (v, c),
            then: Box::new(then),
        }
    }
}

/// Constraints plus the program facts the analyses need afterwards.
#[derive(Clone, Debug)]
pub struct ConstraintSet {
    pub variant: Variant,
    pub constraints: Vec<Constraint>,
    /// Body label to the label of its enclosing `fun`.
    pub fun_of_body: BTreeMap<Label, Label>,
    /// Field names the analysis quantifies over.
    pub fields: BTreeSet<String>,
}

impl ConstraintSet {
    /// Abstract variable for the parameter of `FUN(x, body)`.
    pub fn param_var(&self, x: &str, body: Label) -> AbsVar {
        match self.variant {
            Variant::Simple => AbsVar::Name(x.to_string()),
            Variant::Improved => match self.fun_of_body.get(&body) {
                Some(f) => AbsVar::Bound(*f, x.to_string()),
                None => AbsVar::Global(x.to_string()),
            },
        }
    }
}

const TYPEOF_RESULTS: [&str; 8] = [
    "function",
    "object",
    "boolean",
    "number",
    "string",
    "undefined",
    "box",
    "null",
];

/// Allocation sites and field names of a program.
struct Survey {
    funs: Vec<(Name, Label)>,
    boxes: Vec<Label>,
    records: Vec<Label>,
    fun_of_body: BTreeMap<Label, Label>,
    fields: BTreeSet<String>,
}

fn survey(e: &Expr) -> Survey {
    let mut s = Survey {
        funs: Vec::new(),
        boxes: Vec::new(),
        records: Vec::new(),
        fun_of_body: BTreeMap::new(),
        fields: BTreeSet::from(["__proto__".to_string()]),
    };
    e.walk(&mut |n| {
        let term = match &n.term {
            Term::Closure(t, _) => &**t,
            t => t,
        };
        match term {
            Term::Fun(x, body) => {
                s.funs.push((x.clone(), body.label));
                s.fun_of_body.insert(body.label, n.label);
            }
            Term::Box(body) => s.boxes.push(body.label),
            Term::Record(fs) => {
                s.records.push(n.label);
                s.fields.extend(fs.iter().map(|(f, _)| f.clone()));
            }
            Term::Const(Const::Str(f)) => {
                s.fields.insert(f.clone());
            }
            Term::Prim(PrimOp::Typeof, ..) => {
                s.fields.extend(TYPEOF_RESULTS.iter().map(|f| f.to_string()));
            }
            _ => {}
        }
    });
    s.funs.sort();
    s.funs.dedup();
    s.boxes.sort();
    s.boxes.dedup();
    s.records.sort();
    s.records.dedup();
    s
}

/// One map per stage from names to the label of their binding `fun`.
pub(crate) type Frames = Vec<BTreeMap<Name, Label>>;

pub(crate) fn resolve_name(variant: Variant, x: &str, frames: &Frames) -> AbsVar {
    match variant {
        Variant::Simple => AbsVar::Name(x.to_string()),
        Variant::Improved => match frames.last().and_then(|f| f.get(x)) {
            Some(b) => AbsVar::Bound(*b, x.to_string()),
            None => AbsVar::Global(x.to_string()),
        },
    }
}

/// Variable receiving the bindings of an explicit environment.
pub(crate) fn env_name(variant: Variant, x: &str) -> AbsVar {
    match variant {
        Variant::Simple => AbsVar::Name(x.to_string()),
        Variant::Improved => AbsVar::Global(x.to_string()),
    }
}

/// Splits off the frame for the argument of an `unbox`; the returned guard
/// value must be handed back to [`leave_unbox`].
pub(crate) fn enter_unbox(frames: &mut Frames) -> (Option<BTreeMap<Name, Label>>, bool) {
    let top = frames.pop();
    let pushed = frames.is_empty();
    if pushed {
        frames.push(BTreeMap::new());
    }
    (top, pushed)
}

pub(crate) fn leave_unbox(frames: &mut Frames, saved: (Option<BTreeMap<Name, Label>>, bool)) {
    if saved.1 {
        frames.pop();
    }
    if let Some(top) = saved.0 {
        frames.push(top);
    }
}

struct Gen<'a> {
    variant: Variant,
    survey: &'a Survey,
    out: Vec<Constraint>,
}

impl Gen<'_> {
    fn push(&mut self, c: Constraint) {
        self.out.push(c);
    }

    fn subset(&mut self, a: Cell, b: Cell) {
        self.push(Constraint::Subset(a, b));
    }

    fn param(&self, x: &str, body: Label) -> AbsVar {
        match self.variant {
            Variant::Simple => AbsVar::Name(x.to_string()),
            Variant::Improved => match self.survey.fun_of_body.get(&body) {
                Some(f) => AbsVar::Bound(*f, x.to_string()),
                None => AbsVar::Global(x.to_string()),
            },
        }
    }

    /// Code run or spliced here can capture any binder of the current frame.
    fn link_frame(&mut self, frames: &Frames) {
        if self.variant == Variant::Simple {
            return;
        }
        if let Some(top) = frames.last() {
            for (x, b) in top {
                self.subset(
                    Cell::Rho(AbsVar::Bound(*b, x.clone())),
                    Cell::Rho(AbsVar::Global(x.clone())),
                );
            }
        }
    }

    fn code_flows(&mut self, from: Label, to: Label) {
        for &body in &self.survey.boxes {
            self.push(Constraint::when(
                AbsVal::Box(body),
                Cell::Gamma(from),
                Constraint::Subset(Cell::Gamma(body), Cell::Gamma(to)),
            ));
        }
    }

    fn env(&mut self, env: &Env) {
        for (x, v) in env.iter() {
            self.expr(v, &mut vec![BTreeMap::new()]);
            let var = env_name(self.variant, x);
            self.subset(Cell::Gamma(v.label), Cell::Rho(var));
        }
    }

    fn expr(&mut self, e: &Expr, frames: &mut Frames) {
        self.term(&e.term, e.label, frames);
    }

    fn term(&mut self, t: &Term, l: Label, frames: &mut Frames) {
        match t {
            Term::Const(k) => self.push(Constraint::Member(abstract_const(k), Cell::Gamma(l))),
            Term::Hole => {}
            Term::Var(x) => {
                let v = resolve_name(self.variant, x, frames);
                self.subset(Cell::Rho(v), Cell::Gamma(l));
            }
            Term::Fun(x, body) => {
                self.push(Constraint::Member(
                    AbsVal::Fun(x.clone(), body.label),
                    Cell::Gamma(l),
                ));
                let mut inner = frames.clone();
                if let Some(top) = inner.last_mut() {
                    top.insert(x.clone(), l);
                }
                self.expr(body, &mut inner);
            }
            Term::App(f, a) => {
                self.expr(f, frames);
                self.expr(a, frames);
                for (x, body) in &self.survey.funs {
                    let guard = AbsVal::Fun(x.clone(), *body);
                    let param = self.param(x, *body);
                    self.push(Constraint::when(
                        guard.clone(),
                        Cell::Gamma(f.label),
                        Constraint::Subset(Cell::Gamma(a.label), Cell::Rho(param)),
                    ));
                    self.push(Constraint::when(
                        guard,
                        Cell::Gamma(f.label),
                        Constraint::Subset(Cell::Gamma(*body), Cell::Gamma(l)),
                    ));
                }
            }
            Term::Record(fs) => {
                self.push(Constraint::Member(AbsVal::Rec(l), Cell::Gamma(l)));
                for (s, v) in fs {
                    self.expr(v, frames);
                    self.subset(Cell::Gamma(v.label), Cell::Rho(AbsVar::Field(l, s.clone())));
                }
            }
            Term::Read(r, s) => {
                self.expr(r, frames);
                self.expr(s, frames);
                self.push(Constraint::Member(AbsVal::Undef, Cell::Gamma(l)));
                for &rec in &self.survey.records {
                    self.push(Constraint::when(
                        AbsVal::Rec(rec),
                        Cell::Gamma(r.label),
                        Constraint::Member(AbsVal::Rec(rec), Cell::Proto(l)),
                    ));
                    self.push(Constraint::when(
                        AbsVal::Rec(rec),
                        Cell::Proto(l),
                        Constraint::Subset(Cell::Rho(AbsVar::Field(rec, "__proto__".into())), Cell::Proto(l)),
                    ));
                    for f in &self.survey.fields {
                        self.push(Constraint::when(
                            AbsVal::Rec(rec),
                            Cell::Proto(l),
                            Constraint::Subset(Cell::Rho(AbsVar::Field(rec, f.clone())), Cell::Gamma(l)),
                        ));
                    }
                }
            }
            Term::Write(r, s, v) => {
                self.expr(r, frames);
                self.expr(s, frames);
                self.expr(v, frames);
                self.subset(Cell::Gamma(r.label), Cell::Gamma(l));
                for &rec in &self.survey.records {
                    for f in &self.survey.fields {
                        self.push(Constraint::when(
                            AbsVal::Rec(rec),
                            Cell::Gamma(r.label),
                            Constraint::Subset(
                                Cell::Gamma(v.label),
                                Cell::Rho(AbsVar::Field(rec, f.clone())),
                            ),
                        ));
                    }
                }
            }
            Term::Del(r, s) => {
                self.expr(r, frames);
                self.expr(s, frames);
                self.subset(Cell::Gamma(r.label), Cell::Gamma(l));
            }
            Term::If(c, a, b) => {
                self.expr(c, frames);
                self.expr(a, frames);
                self.expr(b, frames);
                self.subset(Cell::Gamma(a.label), Cell::Gamma(l));
                self.subset(Cell::Gamma(b.label), Cell::Gamma(l));
            }
            Term::Box(b) => {
                self.push(Constraint::Member(AbsVal::Box(b.label), Cell::Gamma(l)));
                frames.push(BTreeMap::new());
                self.expr(b, frames);
                frames.pop();
            }
            Term::Unbox(b) => {
                self.link_frame(frames);
                let saved = enter_unbox(frames);
                self.expr(b, frames);
                leave_unbox(frames, saved);
                self.code_flows(b.label, l);
            }
            Term::Run(b) => {
                self.link_frame(frames);
                self.expr(b, frames);
                self.code_flows(b.label, l);
            }
            Term::RunIn(b, env) => {
                self.link_frame(frames);
                self.expr(b, frames);
                self.env(env);
                self.code_flows(b.label, l);
            }
            Term::Marked(_, b) => {
                self.expr(b, frames);
                self.subset(Cell::Gamma(b.label), Cell::Gamma(l));
            }
            Term::Prim(op, a, b) => {
                self.expr(a, frames);
                if let Some(b) = b {
                    self.expr(b, frames);
                }
                let v = match op {
                    PrimOp::Eq => AbsVal::Bool,
                    PrimOp::Sub => AbsVal::Num,
                    PrimOp::Typeof => AbsVal::Str,
                };
                self.push(Constraint::Member(v, Cell::Gamma(l)));
            }
            Term::Closure(inner, env) => {
                self.term(inner, l, frames);
                self.env(env);
            }
        }
    }
}

pub fn gen_cfa_constraints(e: &Expr, variant: Variant) -> ConstraintSet {
    let s = survey(e);
    let mut g = Gen {
        variant,
        survey: &s,
        out: Vec::new(),
    };
    g.expr(e, &mut vec![BTreeMap::new()]);
    let constraints = g.out;
    ConstraintSet {
        variant,
        constraints,
        fun_of_body: s.fun_of_body,
        fields: s.fields,
    }
}

pub type Cells = BTreeMap<Cell, BTreeSet<AbsVal>>;

/// Least solution of a constraint set, found by worklist propagation.
pub fn solve(set: &ConstraintSet) -> CfaSolution {
    let mut solver = Solver::default();
    for c in &set.constraints {
        solver.activate(c);
    }
    solver.run();
    CfaSolution {
        variant: set.variant,
        cells: solver.cells,
        fun_of_body: set.fun_of_body.clone(),
        fields: set.fields.clone(),
    }
}

#[derive(Default)]
struct Solver {
    cells: Cells,
    edges: BTreeMap<Cell, BTreeSet<Cell>>,
    pending: BTreeMap<(Cell, AbsVal), Vec<Constraint>>,
    work: VecDeque<(Cell, AbsVal)>,
}

impl Solver {
    fn add(&mut self, c: &Cell, v: &AbsVal) {
        if self.cells.entry(c.clone()).or_default().insert(v.clone()) {
            self.work.push_back((c.clone(), v.clone()));
        }
    }

    fn has(&self, c: &Cell, v: &AbsVal) -> bool {
        self.cells.get(c).is_some_and(|s| s.contains(v))
    }

    fn activate(&mut self, c: &Constraint) {
        match c {
            Constraint::Member(v, cell) => self.add(cell, v),
            Constraint::Subset(a, b) => {
                if self.edges.entry(a.clone()).or_default().insert(b.clone()) {
                    let current: Vec<AbsVal> = self.cells.get(a).into_iter().flatten().cloned().collect();
                    for v in &current {
                        self.add(b, v);
                    }
                }
            }
            Constraint::Conditional { guard, then } => {
                if self.has(&guard.1, &guard.0) {
                    self.activate(then);
                } else {
                    self.pending
                        .entry((guard.1.clone(), guard.0.clone()))
                        .or_default()
                        .push((**then).clone());
                }
            }
        }
    }

    fn run(&mut self) {
        while let Some((c, v)) = self.work.pop_front() {
            let targets: Vec<Cell> = self.edges.get(&c).into_iter().flatten().cloned().collect();
            for t in &targets {
                self.add(t, &v);
            }
            if let Some(fired) = self.pending.remove(&(c, v)) {
                for k in &fired {
                    self.activate(k);
                }
            }
        }
    }
}

/// Whether `cells` satisfies every constraint.
pub fn satisfies(constraints: &[Constraint], cells: &Cells) -> bool {
    constraints.iter().all(|c| holds(c, cells))
}

fn holds(c: &Constraint, cells: &Cells) -> bool {
    let get = |cell: &Cell| cells.get(cell);
    match c {
        Constraint::Member(v, cell) => get(cell).is_some_and(|s| s.contains(v)),
        Constraint::Subset(a, b) => match get(a) {
            None => true,
            Some(sa) => sa.is_empty() || get(b).is_some_and(|sb| sa.is_subset(sb)),
        },
        Constraint::Conditional { guard, then } => {
            !get(&guard.1).is_some_and(|s| s.contains(&guard.0)) || holds(then, cells)
        }
    }
}

#[derive(Clone, Debug)]
pub struct CfaSolution {
    pub variant: Variant,
    pub cells: Cells,
    pub fun_of_body: BTreeMap<Label, Label>,
    pub fields: BTreeSet<String>,
}

static EMPTY: BTreeSet<AbsVal> = BTreeSet::new();

impl CfaSolution {
    pub fn gamma(&self, l: Label) -> &BTreeSet<AbsVal> {
        self.cells.get(&Cell::Gamma(l)).unwrap_or(&EMPTY)
    }

    pub fn rho(&self, v: &AbsVar) -> &BTreeSet<AbsVal> {
        self.cells.get(&Cell::Rho(v.clone())).unwrap_or(&EMPTY)
    }

    pub fn param_var(&self, x: &str, body: Label) -> AbsVar {
        match self.variant {
            Variant::Simple => AbsVar::Name(x.to_string()),
            Variant::Improved => match self.fun_of_body.get(&body) {
                Some(f) => AbsVar::Bound(*f, x.to_string()),
                None => AbsVar::Global(x.to_string()),
            },
        }
    }

    pub fn funs_at(&self, l: Label) -> impl Iterator<Item = (&Name, Label)> {
        self.gamma(l).iter().filter_map(|v| match v {
            AbsVal::Fun(x, b) => Some((x, *b)),
            _ => None,
        })
    }

    pub fn boxes_at(&self, l: Label) -> impl Iterator<Item = Label> + '_ {
        self.gamma(l).iter().filter_map(|v| match v {
            AbsVal::Box(b) => Some(*b),
            _ => None,
        })
    }

    pub fn records_at(&self, l: Label) -> impl Iterator<Item = Label> + '_ {
        self.gamma(l).iter().filter_map(|v| match v {
            AbsVal::Rec(r) => Some(*r),
            _ => None,
        })
    }

    /// Records reachable from `rec` by following `__proto__` slots, `rec` included.
    pub fn proto_closure(&self, rec: Label) -> BTreeSet<Label> {
        let mut seen = BTreeSet::from([rec]);
        let mut todo = vec![rec];
        while let Some(r) = todo.pop() {
            let slot = AbsVar::Field(r, "__proto__".into());
            for v in self.rho(&slot) {
                if let AbsVal::Rec(p) = v {
                    if seen.insert(*p) {
                        todo.push(*p);
                    }
                }
            }
        }
        seen
    }

    /// Γ and ϱ as JSON with sorted keys and values.
    pub fn to_json(&self) -> serde_json::Value {
        let mut gamma = serde_json::Map::new();
        let mut rho = serde_json::Map::new();
        for (cell, vals) in &self.cells {
            let vals: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
            match cell {
                Cell::Gamma(l) => {
                    gamma.insert(l.to_string(), vals.into());
                }
                Cell::Rho(v) => {
                    rho.insert(v.to_string(), vals.into());
                }
                Cell::Proto(_) => {}
            }
        }
        serde_json::json!({ "variant": self.variant.name(), "gamma": gamma, "rho": rho })
    }
}

pub fn analyze(e: &Expr, variant: Variant) -> CfaSolution {
    solve(&gen_cfa_constraints(e, variant))
}

/// Checks that the abstraction of a final value is predicted at `root`.
/// Markers are looked through; records only need some `REC` at `root`.
pub fn check_result_soundness(sol: &CfaSolution, root: Label, value: &Expr) -> Result<(), String> {
    let mut v = value;
    while let Term::Marked(_, b) = &v.term {
        v = b;
    }
    let term = match &v.term {
        Term::Closure(t, _) => &**t,
        t => t,
    };
    let at = sol.gamma(root);
    let ok = match term {
        Term::Const(k) => at.contains(&abstract_const(k)),
        Term::Fun(x, body) => at.contains(&AbsVal::Fun(x.clone(), body.label)),
        Term::Box(body) => at.contains(&AbsVal::Box(body.label)),
        Term::Record(_) => at.iter().any(|a| matches!(a, AbsVal::Rec(_))),
        Term::Hole => true,
        other => return Err(format!("not a final value: {other:?}")),
    };
    if ok {
        Ok(())
    } else {
        let shown: Vec<String> = at.iter().map(|a| a.to_string()).collect();
        Err(format!(
            "value {} not predicted at {root}: {{{}}}",
            crate::pretty::show(value),
            shown.join(", ")
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_str;

    fn set(vals: &[AbsVal]) -> BTreeSet<AbsVal> {
        vals.iter().cloned().collect()
    }

    #[test]
    fn marked_fun_table() {
        let e = parse_str("(fun(x){ (I : fun(y){x}) }((H : 1)))((L : 2))").unwrap();
        let sol = analyze(&e, Variant::Simple);
        let num = set(&[AbsVal::Num]);
        for l in [0, 4, 5, 7, 8, 9] {
            assert_eq!(sol.gamma(Label(l)), &num, "Γ({l})");
        }
        let fy = set(&[AbsVal::Fun("y".into(), Label(0))]);
        for l in [1, 2, 6] {
            assert_eq!(sol.gamma(Label(l)), &fy, "Γ({l})");
        }
        assert_eq!(sol.gamma(Label(3)), &set(&[AbsVal::Fun("x".into(), Label(2))]));
        assert_eq!(sol.rho(&AbsVar::Name("x".into())), &num);
        assert_eq!(sol.rho(&AbsVar::Name("y".into())), &num);
    }

    #[test]
    fn identity_application() {
        let e = parse_str("fun(x){x}(1)").unwrap();
        let sol = analyze(&e, Variant::Simple);
        assert_eq!(sol.gamma(e.label), &set(&[AbsVal::Num]));
    }

    #[test]
    fn proto_chain_reads() {
        let e = parse_str(r#"{"__proto__": {"__proto__": {"a": "s"}}}["a"]"#).unwrap();
        let sol = analyze(&e, Variant::Simple);
        // every field is quantified over, so the proto slots flow in too
        assert_eq!(
            sol.gamma(e.label),
            &set(&[
                AbsVal::Str,
                AbsVal::Undef,
                AbsVal::Rec(Label(1)),
                AbsVal::Rec(Label(2))
            ])
        );
    }

    #[test]
    fn cyclic_proto_terminates() {
        let e = parse_str(r#"fun(r){ fun(w){ r["b"] }(r["__proto__"] = r) }({"__proto__": null, "a": 1})"#)
            .unwrap();
        let sol = analyze(&e, Variant::Simple);
        assert!(sol.gamma(e.label).contains(&AbsVal::Num));
        let rec = sol.records_at(Label(0)).next();
        assert!(rec.is_none() || !sol.proto_closure(rec.unwrap()).is_empty());
    }

    #[test]
    fn solution_is_least_and_acceptable() {
        let e =
            parse_str(r#"fun(f){ f(box 1) }(fun(b){ run b })(if (true) { "a" } else { {"k": 2} })"#).unwrap();
        for variant in [Variant::Simple, Variant::Improved] {
            let cs = gen_cfa_constraints(&e, variant);
            let sol = solve(&cs);
            assert!(satisfies(&cs.constraints, &sol.cells));
            for (cell, vals) in &sol.cells {
                for v in vals {
                    let mut smaller = sol.cells.clone();
                    smaller.get_mut(cell).unwrap().remove(v);
                    assert!(!satisfies(&cs.constraints, &smaller), "{cell:?} {v}");
                }
            }
        }
    }

    #[test]
    fn improved_separates_binders() {
        // two binders of x; only the one captured by run reaches the global bucket
        let e = parse_str("fun(x){ run box x }(1)(fun(x){ x }(\"s\"))").unwrap();
        let simple = analyze(&e, Variant::Simple);
        let improved = analyze(&e, Variant::Improved);
        let global = improved.rho(&AbsVar::Global("x".into()));
        assert_eq!(global, &set(&[AbsVal::Num]));
        assert_eq!(
            simple.rho(&AbsVar::Name("x".into())),
            &set(&[AbsVal::Num, AbsVal::Str])
        );
    }
}

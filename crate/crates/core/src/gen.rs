//! Seeded, type-directed generator of closed, terminating programs.
//!
//! Programs have no holes and no recursion. Every record literal carries an
//! unmarked `__proto__` (either `null` or another literal), binder names are
//! fresh, and staging goes at most [`GenConfig::max_stage`] levels deep.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::parser::assign_labels;
use crate::syntax::{Const, Expr, Label, Marker, PrimOp, Term};

#[derive(Clone, Debug, PartialEq)]
pub enum Ty {
    Num,
    Bool,
    Str,
    Undef,
    Null,
    Fun(Box<Ty>, Box<Ty>),
    Code(Box<Ty>),
    /// Fields visible through the prototype chain.
    Rec(BTreeMap<String, Ty>),
}

#[derive(Clone, Copy, Debug)]
pub struct GenConfig {
    pub max_depth: u32,
    pub max_stage: u32,
    /// Chance of marking a constant; other nodes use a fifth of it.
    pub marker_rate: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_depth: 6,
            max_stage: 2,
            marker_rate: 0.3,
        }
    }
}

const MARKERS: [&str; 3] = ["H", "L", "I"];
const FIELDS: [&str; 3] = ["a", "b", "c"];

#[derive(Clone, Debug)]
struct Var {
    name: String,
    ty: Ty,
    stage: u32,
}

pub struct Generator {
    rng: ChaCha8Rng,
    cfg: GenConfig,
    fresh: u32,
}

fn node(t: Term) -> Expr {
    Expr::new(t, Label(0))
}

fn bx(e: Expr) -> Box<Expr> {
    Box::new(e)
}

fn string(s: &str) -> Expr {
    node(Term::Const(Const::Str(s.into())))
}

impl Generator {
    pub fn new(seed: u64, cfg: GenConfig) -> Self {
        Generator {
            rng: ChaCha8Rng::seed_from_u64(seed),
            cfg,
            fresh: 0,
        }
    }

    /// A fresh labelled program of a random type.
    pub fn program(&mut self) -> Expr {
        self.fresh = 0;
        let ty = self.small_ty(0);
        let mut e = self.gen(&ty, 0, self.cfg.max_depth, &mut Vec::new());
        assign_labels(&mut e, &mut 0);
        e
    }

    fn fresh_name(&mut self) -> String {
        self.fresh += 1;
        format!("v{}", self.fresh)
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p.clamp(0.0, 1.0))
    }

    fn base_ty(&mut self) -> Ty {
        match self.rng.gen_range(0..10) {
            0..=3 => Ty::Num,
            4..=6 => Ty::Bool,
            7 => Ty::Str,
            8 => Ty::Undef,
            _ => Ty::Null,
        }
    }

    fn small_ty(&mut self, stage: u32) -> Ty {
        match self.rng.gen_range(0..10) {
            0..=5 => self.base_ty(),
            6 | 7 => Ty::Fun(Box::new(self.base_ty()), Box::new(self.base_ty())),
            8 if stage < self.cfg.max_stage => Ty::Code(Box::new(self.base_ty())),
            _ => {
                let mut fields = BTreeMap::new();
                for f in FIELDS.iter().take(self.rng.gen_range(1..=2)) {
                    fields.insert(f.to_string(), self.base_ty());
                }
                Ty::Rec(fields)
            }
        }
    }

    fn marker(&mut self) -> Marker {
        Marker::new(*MARKERS.choose(&mut self.rng).expect("nonempty"))
    }

    fn maybe_mark(&mut self, e: Expr) -> Expr {
        let rate = match e.term {
            Term::Const(_) => self.cfg.marker_rate,
            _ => self.cfg.marker_rate / 5.0,
        };
        if self.chance(rate) {
            let m = self.marker();
            node(Term::Marked(m, bx(e)))
        } else {
            e
        }
    }

    fn gen(&mut self, ty: &Ty, stage: u32, depth: u32, ctx: &mut Vec<Var>) -> Expr {
        let e = self.gen_raw(ty, stage, depth, ctx);
        self.maybe_mark(e)
    }

    fn constant(&mut self, ty: &Ty) -> Option<Const> {
        Some(match ty {
            Ty::Num => Const::Num(self.rng.gen_range(-3..=5) as f64),
            Ty::Bool => Const::Bool(self.rng.gen()),
            Ty::Str => Const::Str((*FIELDS.choose(&mut self.rng).expect("nonempty")).into()),
            Ty::Undef => Const::Undef,
            Ty::Null => Const::Null,
            _ => return None,
        })
    }

    fn var_of(&mut self, ty: &Ty, stage: u32, ctx: &[Var]) -> Option<Expr> {
        let hits: Vec<&Var> = ctx.iter().filter(|v| v.stage == stage && &v.ty == ty).collect();
        hits.choose(&mut self.rng)
            .map(|v| node(Term::Var(v.name.clone())))
    }

    fn leaf(&mut self, ty: &Ty, stage: u32, ctx: &mut Vec<Var>) -> Expr {
        if self.chance(0.5) {
            if let Some(v) = self.var_of(ty, stage, ctx) {
                return v;
            }
        }
        self.intro(ty, stage, 0, ctx)
    }

    /// Canonical constructor for `ty`.
    fn intro(&mut self, ty: &Ty, stage: u32, depth: u32, ctx: &mut Vec<Var>) -> Expr {
        if let Some(k) = self.constant(ty) {
            return node(Term::Const(k));
        }
        let sub = depth.saturating_sub(1);
        match ty {
            Ty::Fun(a, b) => {
                let x = self.fresh_name();
                ctx.push(Var {
                    name: x.clone(),
                    ty: (**a).clone(),
                    stage,
                });
                let body = self.gen(b, stage, sub, ctx);
                ctx.pop();
                node(Term::Fun(x, bx(body)))
            }
            Ty::Code(t) => {
                // a box may be run anywhere, so its body only sees its own binders
                let mut inner: Vec<Var> = ctx
                    .iter()
                    .map(|v| Var {
                        stage: if v.stage > stage { u32::MAX } else { v.stage },
                        ..v.clone()
                    })
                    .collect();
                let body = self.gen(t, stage + 1, sub, &mut inner);
                node(Term::Box(bx(body)))
            }
            Ty::Rec(fields) => self.record(fields, stage, sub, ctx),
            _ => unreachable!("constants handled above"),
        }
    }

    fn record(&mut self, fields: &BTreeMap<String, Ty>, stage: u32, depth: u32, ctx: &mut Vec<Var>) -> Expr {
        let mut own = Vec::new();
        let mut inherited = BTreeMap::new();
        for (f, t) in fields {
            if self.chance(0.25) {
                inherited.insert(f.clone(), t.clone());
            } else {
                own.push((f.clone(), t.clone()));
            }
        }
        let proto = if inherited.is_empty() {
            node(Term::Const(Const::Null))
        } else {
            self.record(&inherited, stage, depth, ctx)
        };
        let mut out = vec![("__proto__".to_string(), proto)];
        for (f, t) in own {
            let v = self.gen(&t, stage, depth, ctx);
            out.push((f, v));
        }
        node(Term::Record(out))
    }

    fn selector(&mut self, f: &str) -> Expr {
        let s = string(f);
        self.maybe_mark(s)
    }

    fn gen_raw(&mut self, ty: &Ty, stage: u32, depth: u32, ctx: &mut Vec<Var>) -> Expr {
        if depth == 0 {
            return self.leaf(ty, stage, ctx);
        }
        let d = depth - 1;
        let can_stage = stage < self.cfg.max_stage;
        loop {
            match self.rng.gen_range(0..16) {
                0 | 1 => return self.leaf(ty, stage, ctx),
                2..=4 => return self.intro(ty, stage, depth, ctx),
                5 | 6 => {
                    let a = self.small_ty(stage);
                    let f = self.gen(&Ty::Fun(Box::new(a.clone()), Box::new(ty.clone())), stage, d, ctx);
                    let arg = self.gen(&a, stage, d, ctx);
                    return node(Term::App(bx(f), bx(arg)));
                }
                7 | 8 => {
                    let a = self.small_ty(stage);
                    let bound = self.gen(&a, stage, d, ctx);
                    let x = self.fresh_name();
                    ctx.push(Var {
                        name: x.clone(),
                        ty: a,
                        stage,
                    });
                    let body = self.gen(ty, stage, d, ctx);
                    ctx.pop();
                    return node(Term::App(bx(node(Term::Fun(x, bx(body)))), bx(bound)));
                }
                9 => {
                    let c = self.gen(&Ty::Bool, stage, d, ctx);
                    let a = self.gen(ty, stage, d, ctx);
                    let b = self.gen(ty, stage, d, ctx);
                    return node(Term::If(bx(c), bx(a), bx(b)));
                }
                10 if can_stage => {
                    let code = self.gen(&Ty::Code(Box::new(ty.clone())), stage, d, ctx);
                    return node(Term::Run(bx(code)));
                }
                11 if can_stage => {
                    // run right here, so the body may use the current binders
                    let mut lifted: Vec<Var> = ctx
                        .iter()
                        .map(|v| Var {
                            // binders of an enclosing quotation do not exist at run time
                            stage: match v.stage {
                                s if s == stage => stage + 1,
                                s if s > stage => u32::MAX,
                                s => s,
                            },
                            ..v.clone()
                        })
                        .collect();
                    let body = self.gen(ty, stage + 1, d, &mut lifted);
                    return node(Term::Run(bx(node(Term::Box(bx(body))))));
                }
                12 if stage > 0 => {
                    let code = self.gen(&Ty::Code(Box::new(ty.clone())), stage - 1, d, ctx);
                    return node(Term::Unbox(bx(code)));
                }
                13 => {
                    let f = *FIELDS.choose(&mut self.rng).expect("nonempty");
                    let mut fields = BTreeMap::new();
                    if *ty != Ty::Undef || self.chance(0.5) {
                        fields.insert(f.to_string(), ty.clone());
                    }
                    let r = self.gen(&Ty::Rec(fields), stage, d, ctx);
                    let s = self.selector(f);
                    return node(Term::Read(bx(r), bx(s)));
                }
                14 => {
                    if let Ty::Rec(fields) = ty {
                        let keys: Vec<&String> = fields.keys().collect();
                        if let Some(f) = keys.choose(&mut self.rng).map(|f| (*f).clone()) {
                            let r = self.gen(ty, stage, d, ctx);
                            let s = self.selector(&f);
                            let v = self.gen(&fields[&f], stage, d, ctx);
                            return node(Term::Write(bx(r), bx(s), bx(v)));
                        }
                    }
                }
                15 => match ty {
                    Ty::Rec(fields) => {
                        let free: Vec<&str> = FIELDS
                            .iter()
                            .copied()
                            .filter(|f| !fields.contains_key(*f))
                            .collect();
                        if let Some(g) = free.choose(&mut self.rng).copied() {
                            let mut wider = fields.clone();
                            let t = self.base_ty();
                            wider.insert(g.to_string(), t);
                            let r = self.gen(&Ty::Rec(wider), stage, d, ctx);
                            let s = self.selector(g);
                            return node(Term::Del(bx(r), bx(s)));
                        }
                    }
                    Ty::Num => {
                        let a = self.gen(&Ty::Num, stage, d, ctx);
                        let b = self.gen(&Ty::Num, stage, d, ctx);
                        return node(Term::Prim(PrimOp::Sub, bx(a), Some(bx(b))));
                    }
                    Ty::Bool => {
                        let t = self.base_ty();
                        let a = self.gen(&t, stage, d, ctx);
                        let b = self.gen(&t, stage, d, ctx);
                        return node(Term::Prim(PrimOp::Eq, bx(a), Some(bx(b))));
                    }
                    Ty::Str => {
                        let t = self.small_ty(stage);
                        let a = self.gen(&t, stage, d, ctx);
                        return node(Term::Prim(PrimOp::Typeof, bx(a), None));
                    }
                    _ => {}
                },
                _ => {}
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{evaluate, Outcome};
    use crate::pretty::pretty;
    use crate::syntax::Term;

    #[test]
    fn deterministic_per_seed() {
        let a = Generator::new(7, GenConfig::default()).program();
        let b = Generator::new(7, GenConfig::default()).program();
        assert_eq!(a, b);
    }

    #[test]
    fn mostly_terminating_and_hole_free() {
        let mut g = Generator::new(0, GenConfig::default());
        let mut values = 0;
        for _ in 0..200 {
            let e = g.program();
            let mut holes = false;
            e.walk(&mut |n| holes |= matches!(n.term, Term::Hole));
            assert!(!holes);
            match evaluate(&e, 100_000) {
                Outcome::Value(_) => values += 1,
                Outcome::FuelExhausted(_) => panic!("diverged: {}", pretty(&e, false, false)),
                Outcome::Stuck { .. } => {}
            }
        }
        assert!(values > 150, "only {values} of 200 reached a value");
    }
}

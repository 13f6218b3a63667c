//! Surface-syntax printer. Output of `pretty(e, false, false)` parses back
//! to the same tree for programs without intermediate forms.

use crate::syntax::{Const, Env, Expr, PrimOp, Term};

#[derive(Clone, Copy, Debug, Default)]
pub struct PrettyOptions {
    pub show_labels: bool,
    pub show_envs: bool,
}

pub fn pretty(e: &Expr, show_labels: bool, show_envs: bool) -> String {
    let mut out = String::new();
    Printer {
        opts: PrettyOptions {
            show_labels,
            show_envs,
        },
        out: &mut out,
    }
    .expr(e, 0);
    out
}

/// Plain rendering, used for final values and diagnostics.
pub fn show(e: &Expr) -> String {
    pretty(e, false, true)
}

pub fn format_const(k: &Const) -> String {
    match k {
        Const::Undef => "undef".into(),
        Const::Null => "null".into(),
        Const::Bool(b) => b.to_string(),
        Const::Str(s) => serde_json::to_string(s).expect("strings always serialize"),
        Const::Num(n) => format_num(*n),
    }
}

pub fn format_num(n: f64) -> String {
    if n.is_infinite() {
        if n > 0.0 {
            "1e999".into()
        } else {
            "-1e999".into()
        }
    } else if n == 0.0 {
        // keeps -0 printable as a literal the lexer accepts
        if n.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        }
    } else {
        format!("{n}")
    }
}

// Precedence levels: 1 binary/write, 2 prefix, 3 postfix, 4 atom.
fn level(t: &Term) -> u8 {
    match t {
        Term::Prim(PrimOp::Eq | PrimOp::Sub, ..) | Term::Write(..) => 1,
        Term::Prim(PrimOp::Typeof, ..)
        | Term::Box(_)
        | Term::Unbox(_)
        | Term::Run(_)
        | Term::RunIn(..)
        | Term::Del(..) => 2,
        Term::App(..) | Term::Read(..) => 3,
        Term::Const(Const::Num(n)) if n.is_sign_negative() => 3,
        _ => 4,
    }
}

struct Printer<'a> {
    opts: PrettyOptions,
    out: &'a mut String,
}

impl Printer<'_> {
    fn push(&mut self, s: &str) {
        self.out.push_str(s);
    }

    fn expr(&mut self, e: &Expr, min: u8) {
        let lvl = level(&e.term);
        if self.opts.show_labels {
            let wrap = lvl < 4;
            if wrap {
                self.push("(");
            }
            self.term(&e.term, e);
            if wrap {
                self.push(")");
            }
            self.push(&format!("@{}", e.label));
        } else {
            let wrap = lvl < min;
            if wrap {
                self.push("(");
            }
            self.term(&e.term, e);
            if wrap {
                self.push(")");
            }
        }
    }

    fn term(&mut self, t: &Term, e: &Expr) {
        match t {
            Term::Const(k) => self.push(&format_const(k)),
            Term::Var(x) => self.push(x),
            Term::Hole => self.push("_"),
            Term::Record(fs) => {
                self.push("{");
                for (i, (s, v)) in fs.iter().enumerate() {
                    if i > 0 {
                        self.push(", ");
                    }
                    self.push(&format_const(&Const::Str(s.clone())));
                    self.push(": ");
                    self.expr(v, 0);
                }
                self.push("}");
            }
            Term::Fun(x, body) => {
                self.push(&format!("fun({x}){{"));
                self.expr(body, 0);
                self.push("}");
            }
            Term::App(f, a) => {
                self.expr(f, 3);
                self.push("(");
                self.expr(a, 0);
                self.push(")");
            }
            Term::Box(b) => self.prefix("box", b),
            Term::Unbox(b) => self.prefix("unbox", b),
            Term::Run(b) => self.prefix("run", b),
            Term::RunIn(b, env) => {
                self.prefix("run", b);
                self.push(" in ");
                self.env(env);
            }
            Term::If(c, a, b) => {
                self.push("if (");
                self.expr(c, 0);
                self.push(") { ");
                self.expr(a, 0);
                self.push(" } else { ");
                self.expr(b, 0);
                self.push(" }");
            }
            Term::Read(r, s) => {
                self.expr(r, 3);
                self.push("[");
                self.expr(s, 0);
                self.push("]");
            }
            Term::Write(r, s, v) => {
                self.expr(r, 3);
                self.push("[");
                self.expr(s, 0);
                self.push("] = ");
                self.expr(v, 1);
            }
            Term::Del(r, s) => {
                self.push("del ");
                self.expr(r, 3);
                self.push("[");
                self.expr(s, 0);
                self.push("]");
            }
            Term::Closure(inner, env) => {
                self.push("(");
                let inner = Expr::new((**inner).clone(), e.label);
                if self.opts.show_labels {
                    // the closure shares its label with the wrapped term
                    self.term(&inner.term, &inner);
                } else {
                    self.expr(&inner, 0);
                }
                self.push(", ");
                self.env(env);
                self.push(")");
            }
            Term::Marked(m, b) => {
                self.push(&format!("({m} : "));
                self.expr(b, 0);
                self.push(")");
            }
            Term::Prim(op, a, b) => match (op, b) {
                (PrimOp::Typeof, _) => self.prefix("typeof", a),
                (_, Some(b)) => {
                    self.expr(a, 2);
                    self.push(if *op == PrimOp::Eq { " == " } else { " - " });
                    self.expr(b, 2);
                }
                (_, None) => {
                    self.push(&format!("{}(", op.name()));
                    self.expr(a, 0);
                    self.push(")");
                }
            },
        }
    }

    fn prefix(&mut self, kw: &str, operand: &Expr) {
        self.push(kw);
        self.push(" ");
        self.expr(operand, 2);
    }

    fn env(&mut self, env: &Env) {
        if !self.opts.show_envs {
            self.push(if env.is_empty() { "{}" } else { "{…}" });
            return;
        }
        self.push("{");
        for (i, (x, v)) in env.iter().enumerate() {
            if i > 0 {
                self.push(", ");
            }
            self.push(x);
            self.push("↦");
            self.expr(v, 0);
        }
        self.push("}");
    }
}

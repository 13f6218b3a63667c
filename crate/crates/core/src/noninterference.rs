//! Static noninterference verdicts backed by a differential run.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cfa::Variant;
use crate::eval::{evaluate, Outcome};
use crate::ifa;
use crate::pretty::show;
use crate::syntax::{eq_modulo_labels, map_children, unmark, Const, Expr, Marker, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    StaticallySecure,
    PossiblyInsecure,
}

#[derive(Clone, Debug)]
pub struct Mismatch {
    pub variant_program: String,
    pub expected: String,
    pub got: String,
}

#[derive(Clone, Debug)]
pub struct NiReport {
    pub verdict: Verdict,
    pub depends: BTreeSet<Marker>,
    pub trials: usize,
    pub agreed: usize,
    /// Trials where either run did not reach a value.
    pub skipped: usize,
    pub mismatches: Vec<Mismatch>,
}

impl NiReport {
    /// A secure verdict must never be contradicted by a differential trial.
    pub fn consistent(&self) -> bool {
        self.verdict == Verdict::PossiblyInsecure || self.mismatches.is_empty()
    }
}

/// Replacement in the same class; `undef` and `null` share one.
fn random_like(k: &Const, rng: &mut impl Rng) -> Const {
    match k {
        Const::Num(_) => Const::Num(rng.gen_range(-50..=50) as f64),
        Const::Bool(_) => Const::Bool(rng.gen()),
        Const::Str(_) => {
            let len = rng.gen_range(0..4);
            Const::Str((0..len).map(|_| rng.gen_range('a'..='e')).collect())
        }
        Const::Undef | Const::Null => {
            if rng.gen() {
                Const::Undef
            } else {
                Const::Null
            }
        }
    }
}

/// Replaces every constant under a marker in `high` by a random one of the same class.
pub fn perturb(e: &Expr, high: &BTreeSet<Marker>, rng: &mut impl Rng) -> Expr {
    fn go(e: &Expr, high: &BTreeSet<Marker>, hot: bool, rng: &mut impl Rng) -> Expr {
        match &e.term {
            Term::Const(k) if hot => Expr::new(Term::Const(random_like(k, rng)), e.label),
            Term::Marked(m, _) => {
                let hot = hot || high.contains(m);
                map_children(e, |c| go(c, high, hot, rng))
            }
            _ => map_children(e, |c| go(c, high, hot, rng)),
        }
    }
    go(e, high, false, rng)
}

pub fn check_noninterference(
    program: &Expr,
    high: &BTreeSet<Marker>,
    trials: usize,
    variant: Variant,
    seed: u64,
    fuel: usize,
) -> NiReport {
    let depends = ifa::analyze(program, variant).depends;
    let verdict = if depends.is_disjoint(high) {
        Verdict::StaticallySecure
    } else {
        Verdict::PossiblyInsecure
    };
    let mut report = NiReport {
        verdict,
        depends,
        trials,
        agreed: 0,
        skipped: 0,
        mismatches: Vec::new(),
    };
    let base = match evaluate(program, fuel) {
        Outcome::Value(v) => unmark(&v),
        _ => {
            report.skipped = trials;
            return report;
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let variant_program = perturb(program, high, &mut rng);
        match evaluate(&variant_program, fuel) {
            Outcome::Value(v) => {
                let got = unmark(&v);
                if eq_modulo_labels(&got, &base) {
                    report.agreed += 1;
                } else {
                    report.mismatches.push(Mismatch {
                        variant_program: show(&variant_program),
                        expected: show(&base),
                        got: show(&got),
                    });
                }
            }
            _ => report.skipped += 1,
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::DEFAULT_FUEL;
    use crate::parser::parse_str;

    fn high() -> BTreeSet<Marker> {
        BTreeSet::from([Marker::new("H")])
    }

    #[test]
    fn secure_choice() {
        let e = parse_str(include_str!("../corpus/ex03_box_choice.sjs")).unwrap();
        let r = check_noninterference(&e, &high(), 20, Variant::Simple, 0, DEFAULT_FUEL);
        assert_eq!(r.verdict, Verdict::StaticallySecure);
        assert_eq!(r.agreed, 20);
    }

    #[test]
    fn branch_is_flagged() {
        let e = parse_str(include_str!("../corpus/ex01_branch.sjs")).unwrap();
        let r = check_noninterference(&e, &high(), 20, Variant::Simple, 0, DEFAULT_FUEL);
        assert_eq!(r.verdict, Verdict::PossiblyInsecure);
        // some flipped conditions take the other branch
        assert!(!r.mismatches.is_empty());
        assert!(r.consistent());
    }

    #[test]
    fn unmarked_program_is_secure() {
        let e = parse_str("42").unwrap();
        let r = check_noninterference(&e, &high(), 5, Variant::Simple, 0, DEFAULT_FUEL);
        assert_eq!(r.verdict, Verdict::StaticallySecure);
        assert_eq!(r.agreed, 5);
    }

    #[test]
    fn perturb_keeps_unmarked_parts() {
        let e = parse_str("fun(x){ 1 }((H : 7))").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = perturb(&e, &high(), &mut rng);
        assert!(show(&p).starts_with("fun(x){1}((H : "));
        assert_eq!(p.label, e.label);
    }
}

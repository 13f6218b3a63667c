//! Executable versions of the semantic and analysis theorems, plus a
//! seeded runner over generated programs.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cfa::{self, Variant};
use crate::eval::{self, eval_full, evaluate, step, Outcome, Semantics, StepResult, Trace};
use crate::gen::{GenConfig, Generator};
use crate::ifa::{self, FlowNode};
use crate::parser::assign_labels;
use crate::pretty::{pretty, show};
use crate::syntax::{
    eq_modulo_labels, erase, is_prefix, map_children, markers_of, unmark, Expr, Marker, Term,
};

pub type Check = Result<(), String>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Property {
    Simulation,
    StepStability,
    Stability,
    IfSoundnessSimple,
    IfSoundnessImproved,
    CfaSoundnessSimple,
    CfaSoundnessImproved,
    Monotonicity,
    ReductionPreservation,
    ImprovedRefinesSimple,
}

impl Property {
    pub const ALL: [Property; 10] = [
        Property::Simulation,
        Property::StepStability,
        Property::Stability,
        Property::IfSoundnessSimple,
        Property::IfSoundnessImproved,
        Property::CfaSoundnessSimple,
        Property::CfaSoundnessImproved,
        Property::Monotonicity,
        Property::ReductionPreservation,
        Property::ImprovedRefinesSimple,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::Simulation => "simulation",
            Property::StepStability => "step-stability",
            Property::Stability => "stability",
            Property::IfSoundnessSimple => "if-soundness-simple",
            Property::IfSoundnessImproved => "if-soundness-improved",
            Property::CfaSoundnessSimple => "cfa-soundness-simple",
            Property::CfaSoundnessImproved => "cfa-soundness-improved",
            Property::Monotonicity => "monotonicity",
            Property::ReductionPreservation => "reduction-preservation",
            Property::ImprovedRefinesSimple => "improved-refines-simple",
        }
    }
}

/// States of a trace, starting with `(e, ε)`.
fn states(t: &Trace) -> Vec<&Expr> {
    std::iter::once(&t.initial)
        .chain(t.steps.iter().map(|s| &s.expr))
        .collect()
}

fn outcome_kind(o: &Outcome) -> &'static str {
    match o {
        Outcome::Value(_) => "value",
        Outcome::Stuck { .. } => "stuck",
        Outcome::FuelExhausted(_) => "fuel",
    }
}

/// Every marked step either stutters after unmarking or matches the next
/// step of the unmarked program.
pub fn check_simulation(e: &Expr, fuel: usize) -> Check {
    let marked = eval_full(e, fuel);
    let plain = eval_full(&unmark(e), fuel);
    let ms = states(&marked);
    let ps = states(&plain);
    let mut j = 0;
    for (i, w) in ms.windows(2).enumerate() {
        let after = unmark(w[1]);
        if eq_modulo_labels(&after, &unmark(w[0])) {
            continue;
        }
        match ps.get(j + 1) {
            Some(p) if eq_modulo_labels(&after, p) => j += 1,
            _ => {
                return Err(format!(
                    "marked step {} ({}) has no unmarked counterpart after {} plain steps",
                    i + 1,
                    marked.steps[i].rule.name(),
                    j
                ))
            }
        }
    }
    if outcome_kind(&marked.outcome) == "fuel" {
        return Ok(());
    }
    if j + 1 != ps.len() || outcome_kind(&marked.outcome) != outcome_kind(&plain.outcome) {
        return Err(format!(
            "marked run ends as {} after matching {j} plain steps; plain run ends as {} after {}",
            outcome_kind(&marked.outcome),
            outcome_kind(&plain.outcome),
            ps.len() - 1
        ));
    }
    Ok(())
}

fn terminating_value(e: &Expr, fuel: usize) -> Result<(Trace, Expr), String> {
    let t = eval_full(e, fuel);
    match &t.outcome {
        Outcome::Value(v) => {
            let v = v.clone();
            Ok((t, v))
        }
        other => Err(format!("program does not reach a value: {other}")),
    }
}

/// For `M = markers_of(result)`, each step of the erased trace is either
/// a step of the erased program or leaves it unchanged.
pub fn check_step_stability(e: &Expr, fuel: usize) -> Check {
    let (t, v) = terminating_value(e, fuel)?;
    let keep = markers_of(&v);
    let ss = states(&t);
    for (i, w) in ss.windows(2).enumerate() {
        let before = erase(w[0], &keep);
        let after = erase(w[1], &keep);
        if before == after {
            continue;
        }
        let rule = t.steps[i].rule;
        let ok = match step(&before, 0) {
            StepResult::Stepped { next, .. } => next == after,
            _ => false,
        };
        if !ok {
            return Err(format!(
                "step {} ({}) is not matched on the erasure: {} ~> {}",
                i + 1,
                rule.name(),
                pretty(&before, false, false),
                pretty(&after, false, false)
            ));
        }
    }
    Ok(())
}

/// `erase(e, markers_of(v))` evaluates to exactly `v`.
pub fn check_stability(e: &Expr, fuel: usize) -> Check {
    check_stability_under(e, fuel, Semantics::default())
}

/// Stability against a possibly mutated evaluator.
pub fn check_stability_under(e: &Expr, fuel: usize, sem: Semantics) -> Check {
    let v = match sem.evaluate(e, fuel) {
        Outcome::Value(v) => v,
        other => return Err(format!("program does not reach a value: {other}")),
    };
    let keep = markers_of(&v);
    match sem.evaluate(&erase(e, &keep), fuel) {
        Outcome::Value(w) if w == v => Ok(()),
        Outcome::Value(w) if eq_modulo_labels(&w, &v) => {
            Err(format!("erased result {} matches only modulo labels", show(&w)))
        }
        other => Err(format!(
            "erasure keeping {:?} gives {other}, expected {}",
            keep,
            show(&v)
        )),
    }
}

/// Markers wrapping the value. For a value made of markers and a constant
/// these are all of its markers, which is what the soundness theorem covers;
/// for other values the check is stronger than the theorem.
pub fn observed_markers(v: &Expr) -> BTreeSet<Marker> {
    let mut cur = v;
    let mut out = BTreeSet::new();
    while let Term::Marked(m, b) = &cur.term {
        out.insert(m.clone());
        cur = b;
    }
    out
}

pub fn check_if_soundness(e: &Expr, variant: Variant, fuel: usize) -> Check {
    let (_, v) = terminating_value(e, fuel)?;
    let report = ifa::analyze(e, variant);
    let seen = observed_markers(&v);
    if seen.is_subset(&report.depends) {
        Ok(())
    } else {
        Err(format!(
            "result {} carries {:?} but {} analysis reports {}",
            show(&v),
            seen,
            variant.name(),
            ifa::format_depends(&report.depends)
        ))
    }
}

pub fn check_cfa_soundness(e: &Expr, variant: Variant, fuel: usize) -> Check {
    let (_, v) = terminating_value(e, fuel)?;
    let sol = cfa::analyze(e, variant);
    cfa::check_result_soundness(&sol, e.label, &v)
}

/// Improved Γ never exceeds simple Γ at any label.
pub fn check_improved_refines_simple(e: &Expr) -> Check {
    let simple = cfa::analyze(e, Variant::Simple);
    let improved = cfa::analyze(e, Variant::Improved);
    let mut labels = Vec::new();
    e.walk(&mut |n| labels.push(n.label));
    for l in labels {
        if !improved.gamma(l).is_subset(simple.gamma(l)) {
            return Err(format!("Γ({l}) grows under the improved variant"));
        }
    }
    let si = ifa::analyze(e, Variant::Simple).depends;
    let ii = ifa::analyze(e, Variant::Improved).depends;
    if !ii.is_subset(&si) {
        return Err(format!("improved depends {ii:?} not within simple {si:?}"));
    }
    Ok(())
}

/// Replace the `k`-th node in pre-order by a hole carrying its label.
pub fn hole_at(e: &Expr, k: usize) -> Expr {
    fn go(e: &Expr, k: usize, seen: &mut usize) -> Expr {
        let here = *seen;
        *seen += 1;
        if here == k {
            return Expr::new(Term::Hole, e.label);
        }
        map_children(e, |c| go(c, k, seen))
    }
    go(e, k, &mut 0)
}

/// A random prefix of `e` that still reaches a hole-free value evaluates
/// to the same value as `e`.
pub fn check_monotonicity(e: &Expr, rng: &mut impl Rng, fuel: usize) -> Check {
    let n = e.node_count();
    let (_, v) = terminating_value(e, fuel)?;
    for _ in 0..3 {
        let k = rng.gen_range(0..n);
        let smaller = hole_at(e, k);
        debug_assert!(is_prefix(&smaller, e));
        if let Outcome::Value(f) = evaluate(&smaller, fuel) {
            let mut holes = false;
            f.walk(&mut |x| holes |= matches!(x.term, Term::Hole));
            if holes {
                continue;
            }
            if f != v {
                return Err(format!(
                    "prefix {} gives {}, full program gives {}",
                    pretty(&smaller, false, false),
                    show(&f),
                    show(&v)
                ));
            }
        }
    }
    Ok(())
}

/// Consecutive top-level labels of a trace are linked in the flow graph
/// of the original program.
pub fn check_reduction_preservation(e: &Expr, variant: Variant, fuel: usize) -> Check {
    let t = eval_full(e, fuel);
    let graph = ifa::analyze(e, variant).graph;
    let ss = states(&t);
    for w in ss.windows(2) {
        let (a, b) = (w[0].label, w[1].label);
        if !graph.reaches(&FlowNode::Label(b), &FlowNode::Label(a)) {
            return Err(format!("label {b} does not flow to {a}"));
        }
    }
    Ok(())
}

pub fn check(p: Property, e: &Expr, rng: &mut impl Rng, fuel: usize) -> Check {
    match p {
        Property::Simulation => check_simulation(e, fuel),
        Property::StepStability => check_step_stability(e, fuel),
        Property::Stability => check_stability(e, fuel),
        Property::IfSoundnessSimple => check_if_soundness(e, Variant::Simple, fuel),
        Property::IfSoundnessImproved => check_if_soundness(e, Variant::Improved, fuel),
        Property::CfaSoundnessSimple => check_cfa_soundness(e, Variant::Simple, fuel),
        Property::CfaSoundnessImproved => check_cfa_soundness(e, Variant::Improved, fuel),
        Property::Monotonicity => check_monotonicity(e, rng, fuel),
        Property::ReductionPreservation => check_reduction_preservation(e, Variant::Simple, fuel),
        Property::ImprovedRefinesSimple => check_improved_refines_simple(e),
    }
}

/// Greedy shrinking: keep replacing a node by one of its children while
/// the program still terminates and still fails `p`.
pub fn shrink(e: &Expr, p: Property, fuel: usize) -> Expr {
    let fails = |c: &Expr| {
        matches!(evaluate(c, fuel), Outcome::Value(_))
            && check(p, c, &mut ChaCha8Rng::seed_from_u64(0), fuel).is_err()
    };
    let mut cur = e.clone();
    'outer: loop {
        let n = cur.node_count();
        for k in 0..n {
            for c in candidates(&cur, k) {
                if c.node_count() < n && fails(&c) {
                    cur = c;
                    continue 'outer;
                }
            }
        }
        return cur;
    }
}

fn candidates(e: &Expr, k: usize) -> Vec<Expr> {
    fn node_at(e: &Expr, k: usize, seen: &mut usize) -> Option<Expr> {
        if *seen == k {
            return Some(e.clone());
        }
        *seen += 1;
        e.children().into_iter().find_map(|c| node_at(c, k, seen))
    }
    fn replace(e: &Expr, k: usize, with: &Expr, seen: &mut usize) -> Expr {
        let here = *seen;
        *seen += 1;
        if here == k {
            return with.clone();
        }
        map_children(e, |c| replace(c, k, with, seen))
    }
    let Some(target) = node_at(e, k, &mut 0) else {
        return Vec::new();
    };
    target
        .children()
        .into_iter()
        .map(|c| {
            let mut out = replace(e, k, c, &mut 0);
            assign_labels(&mut out, &mut 0);
            out
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Counterexample {
    pub property: Property,
    pub case: usize,
    pub program: String,
    pub shrunk: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct SuiteSummary {
    pub generated: usize,
    pub terminating: usize,
    pub passed: std::collections::BTreeMap<Property, usize>,
    pub failures: Vec<Counterexample>,
    pub elapsed: Duration,
}

impl SuiteSummary {
    pub fn pass_count(&self, p: Property) -> usize {
        self.passed.get(&p).copied().unwrap_or(0)
    }

    pub fn all_passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Generate programs from `seed` until `cases` of them reach a value and
/// run every property on those.
pub fn run_suite(seed: u64, cases: usize, props: &[Property]) -> SuiteSummary {
    let start = Instant::now();
    let fuel = eval::DEFAULT_FUEL;
    let mut generator = Generator::new(seed, GenConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut summary = SuiteSummary::default();
    // generous bound in case the generator drifts towards stuck programs
    while summary.terminating < cases && summary.generated < cases * 20 {
        let e = generator.program();
        summary.generated += 1;
        if !matches!(evaluate(&e, fuel), Outcome::Value(_)) {
            continue;
        }
        summary.terminating += 1;
        for &p in props {
            match check(p, &e, &mut rng, fuel) {
                Ok(()) => *summary.passed.entry(p).or_default() += 1,
                Err(detail) => {
                    let shrunk = shrink(&e, p, fuel);
                    summary.failures.push(Counterexample {
                        property: p,
                        case: summary.terminating,
                        program: pretty(&e, false, false),
                        shrunk: pretty(&shrunk, false, false),
                        detail,
                    });
                }
            }
        }
    }
    summary.elapsed = start.elapsed();
    summary
}

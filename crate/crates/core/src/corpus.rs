//! Embedded example programs with their expected results.

use std::collections::BTreeSet;

use crate::cfa::Variant;
use crate::eval::{self, Outcome};
use crate::ifa;
use crate::parser::parse_str;
use crate::pretty::show;
use crate::syntax::{unmark, Expr, Marker};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseKind {
    /// Dependency examples with expected marker sets.
    Analysis,
    /// Evaluation traces with exact final values.
    Semantics,
}

#[derive(Clone, Debug)]
pub struct CorpusCase {
    pub id: &'static str,
    pub kind: CaseKind,
    pub source: &'static str,
    pub depends_simple: Option<&'static [&'static str]>,
    /// Only present where the improved variant differs from the simple one.
    pub depends_improved: Option<&'static [&'static str]>,
    /// Final value. Analysis cases compare with markers stripped.
    pub value: Option<&'static str>,
}

impl CorpusCase {
    pub fn program(&self) -> Expr {
        parse_str(self.source).unwrap_or_else(|e| panic!("corpus case {} does not parse: {e}", self.id))
    }

    pub fn expected_depends(&self, variant: Variant) -> Option<BTreeSet<Marker>> {
        let set = match variant {
            Variant::Simple => self.depends_simple,
            Variant::Improved => self.depends_improved.or(self.depends_simple),
        }?;
        Some(set.iter().map(|m| Marker::new(*m)).collect())
    }
}

macro_rules! case {
    ($id:literal, $kind:ident, $file:literal, $simple:expr, $improved:expr, $value:expr) => {
        CorpusCase {
            id: $id,
            kind: CaseKind::$kind,
            source: include_str!(concat!("../corpus/", $file)),
            depends_simple: $simple,
            depends_improved: $improved,
            value: $value,
        }
    };
}

pub fn cases() -> Vec<CorpusCase> {
    vec![
        case!(
            "ex1",
            Analysis,
            "ex01_branch.sjs",
            Some(&["H", "L"]),
            None,
            Some("false")
        ),
        case!(
            "ex2",
            Analysis,
            "ex02_church_if.sjs",
            Some(&["H", "I", "L"]),
            Some(&["H", "L"]),
            Some("false")
        ),
        case!(
            "ex3",
            Analysis,
            "ex03_box_choice.sjs",
            Some(&["L"]),
            None,
            Some("1")
        ),
        case!(
            "ex4",
            Analysis,
            "ex04_eval_scope.sjs",
            Some(&["H", "L"]),
            Some(&["L"]),
            Some("1")
        ),
        case!(
            "ex5",
            Analysis,
            "ex05_field_by_code.sjs",
            Some(&["H", "I", "L"]),
            None,
            Some("2")
        ),
        case!(
            "ex6",
            Analysis,
            "ex06_typeof_dispatch.sjs",
            Some(&["H"]),
            None,
            Some("1")
        ),
        case!(
            "ex7",
            Analysis,
            "ex07_two_stage_pair.sjs",
            Some(&["H", "L"]),
            Some(&["L"]),
            Some("1")
        ),
        case!("ex8", Analysis, "ex08_loop.sjs", Some(&["H"]), None, Some("true")),
        case!(
            "ex9",
            Analysis,
            "ex09_splice_name.sjs",
            Some(&["L"]),
            None,
            Some("1")
        ),
        case!(
            "ex10",
            Analysis,
            "ex10_unstaged_records.sjs",
            Some(&["H", "L"]),
            None,
            Some("1")
        ),
        case!(
            "ex11",
            Analysis,
            "ex11_unstaged_functions.sjs",
            Some(&["H", "L"]),
            Some(&["L"]),
            Some("1")
        ),
        case!("sem1", Semantics, "sem1_if.sjs", None, None, Some("false")),
        case!("sem2", Semantics, "sem2_staged_if.sjs", None, None, Some("false")),
        case!("sem3", Semantics, "sem3_capture.sjs", None, None, Some("true")),
        case!(
            "sem4",
            Semantics,
            "sem4_marked_if.sjs",
            None,
            None,
            Some("(H : (L : false))")
        ),
        case!(
            "sem5",
            Semantics,
            "sem5_marked_fun.sjs",
            None,
            None,
            Some("(I : (H : 1))")
        ),
    ]
}

pub fn find(id: &str) -> Option<CorpusCase> {
    cases().into_iter().find(|c| c.id == id)
}

#[derive(Clone, Debug)]
pub struct CaseResult {
    pub id: &'static str,
    pub variant: Variant,
    pub depends: Option<BTreeSet<Marker>>,
    pub expected_depends: Option<BTreeSet<Marker>>,
    pub value: String,
    pub expected_value: Option<&'static str>,
}

impl CaseResult {
    pub fn depends_ok(&self) -> bool {
        self.expected_depends.is_none() || self.depends == self.expected_depends
    }

    pub fn value_ok(&self) -> bool {
        self.expected_value.is_none_or(|v| v == self.value)
    }

    pub fn passed(&self) -> bool {
        self.depends_ok() && self.value_ok()
    }
}

pub fn run_case(case: &CorpusCase, variant: Variant, fuel: usize) -> CaseResult {
    let program = case.program();
    let depends = (case.kind == CaseKind::Analysis).then(|| ifa::analyze(&program, variant).depends);
    let value = match eval::evaluate(&program, fuel) {
        Outcome::Value(v) => match case.kind {
            CaseKind::Analysis => show(&unmark(&v)),
            CaseKind::Semantics => show(&v),
        },
        other => other.to_string(),
    };
    CaseResult {
        id: case.id,
        variant,
        depends,
        expected_depends: case.expected_depends(variant),
        value,
        expected_value: case.value,
    }
}

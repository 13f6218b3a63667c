//! Information-flow constraints over a solved CFA, and marker reachability.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::OnceLock;

use crate::cfa::{self, AbsVar, CfaSolution, Frames, Variant};
use crate::syntax::{Env, Expr, Label, Marker, Term};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlowNode {
    Label(Label),
    Var(AbsVar),
    Marker(Marker),
}

impl fmt::Display for FlowNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowNode::Label(l) => write!(f, "{l}"),
            FlowNode::Var(v) => write!(f, "{v}"),
            // parenthesised so a marker never collides with a variable name
            FlowNode::Marker(m) => write!(f, "({m})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Direct,
    Indirect,
}

impl EdgeKind {
    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::Direct => "direct",
            EdgeKind::Indirect => "indirect",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowEdge {
    pub src: FlowNode,
    pub dst: FlowNode,
    pub kind: EdgeKind,
    /// Label of the node whose rule produced the edge.
    pub origin: Label,
}

impl fmt::Display for FlowEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let arrow = match self.kind {
            EdgeKind::Direct => "~>",
            EdgeKind::Indirect => "-->",
        };
        write!(f, "{} {arrow} {} [{}]", self.src, self.dst, self.origin)
    }
}

struct FlowGen<'a> {
    sol: &'a CfaSolution,
    edges: BTreeSet<FlowEdge>,
}

fn lnode(l: Label) -> FlowNode {
    FlowNode::Label(l)
}

impl FlowGen<'_> {
    fn edge(&mut self, src: FlowNode, dst: FlowNode, kind: EdgeKind, origin: Label) {
        self.edges.insert(FlowEdge {
            src,
            dst,
            kind,
            origin,
        });
    }

    fn direct(&mut self, src: FlowNode, dst: FlowNode, origin: Label) {
        self.edge(src, dst, EdgeKind::Direct, origin);
    }

    fn indirect(&mut self, src: Label, dst: Label) {
        self.edge(lnode(src), lnode(dst), EdgeKind::Indirect, dst);
    }

    fn link_frame(&mut self, frames: &Frames, origin: Label) {
        if self.sol.variant == Variant::Simple {
            return;
        }
        if let Some(top) = frames.last() {
            for (x, b) in top {
                self.direct(
                    FlowNode::Var(AbsVar::Bound(*b, x.clone())),
                    FlowNode::Var(AbsVar::Global(x.clone())),
                    origin,
                );
            }
        }
    }

    fn code_flows(&mut self, from: Label, to: Label) {
        let bodies: Vec<Label> = self.sol.boxes_at(from).collect();
        for b in bodies {
            self.direct(lnode(b), lnode(to), to);
        }
        self.indirect(from, to);
    }

    fn env(&mut self, env: &Env, origin: Label) {
        for (x, v) in env.iter() {
            self.expr(v, &mut vec![BTreeMap::new()]);
            let var = cfa::env_name(self.sol.variant, x);
            self.direct(lnode(v.label), FlowNode::Var(var), origin);
        }
    }

    fn expr(&mut self, e: &Expr, frames: &mut Frames) {
        self.term(&e.term, e.label, frames);
    }

    fn term(&mut self, t: &Term, l: Label, frames: &mut Frames) {
        match t {
            Term::Const(_) | Term::Hole => {}
            Term::Var(x) => {
                let v = cfa::resolve_name(self.sol.variant, x, frames);
                self.direct(FlowNode::Var(v), lnode(l), l);
            }
            Term::Fun(x, body) => {
                let mut inner = frames.clone();
                if let Some(top) = inner.last_mut() {
                    top.insert(x.clone(), l);
                }
                self.expr(body, &mut inner);
            }
            Term::App(f, a) => {
                self.expr(f, frames);
                self.expr(a, frames);
                let funs: Vec<(String, Label)> =
                    self.sol.funs_at(f.label).map(|(x, b)| (x.clone(), b)).collect();
                for (x, body) in funs {
                    let param = self.sol.param_var(&x, body);
                    self.direct(lnode(a.label), FlowNode::Var(param), l);
                    self.direct(lnode(body), lnode(l), l);
                }
                self.indirect(f.label, l);
            }
            Term::Record(fs) => {
                let recs: Vec<Label> = self.sol.records_at(l).collect();
                for (s, v) in fs {
                    self.expr(v, frames);
                    for &r in &recs {
                        self.direct(lnode(v.label), FlowNode::Var(AbsVar::Field(r, s.clone())), l);
                    }
                }
            }
            Term::Read(r, s) => {
                self.expr(r, frames);
                self.expr(s, frames);
                let mut protos = BTreeSet::new();
                for rec in self.sol.records_at(r.label) {
                    protos.extend(self.sol.proto_closure(rec));
                }
                let fields = self.sol.fields.clone();
                for p in protos {
                    for f in &fields {
                        self.direct(FlowNode::Var(AbsVar::Field(p, f.clone())), lnode(l), l);
                    }
                }
                self.indirect(r.label, l);
                self.indirect(s.label, l);
            }
            Term::Write(r, s, v) => {
                self.expr(r, frames);
                self.expr(s, frames);
                self.expr(v, frames);
                self.direct(lnode(r.label), lnode(l), l);
                let recs: Vec<Label> = self.sol.records_at(r.label).collect();
                let fields = self.sol.fields.clone();
                for rec in recs {
                    for f in &fields {
                        self.direct(lnode(v.label), FlowNode::Var(AbsVar::Field(rec, f.clone())), l);
                    }
                }
                self.indirect(s.label, l);
            }
            Term::Del(r, s) => {
                self.expr(r, frames);
                self.expr(s, frames);
                self.direct(lnode(r.label), lnode(l), l);
                self.indirect(s.label, l);
            }
            Term::If(c, a, b) => {
                self.expr(c, frames);
                self.expr(a, frames);
                self.expr(b, frames);
                self.direct(lnode(a.label), lnode(l), l);
                self.direct(lnode(b.label), lnode(l), l);
                self.indirect(c.label, l);
            }
            Term::Box(b) => {
                frames.push(BTreeMap::new());
                self.expr(b, frames);
                frames.pop();
            }
            Term::Unbox(b) => {
                self.link_frame(frames, l);
                let saved = cfa::enter_unbox(frames);
                self.expr(b, frames);
                cfa::leave_unbox(frames, saved);
                self.code_flows(b.label, l);
            }
            Term::Run(b) => {
                self.link_frame(frames, l);
                self.expr(b, frames);
                self.code_flows(b.label, l);
            }
            Term::RunIn(b, env) => {
                self.link_frame(frames, l);
                self.expr(b, frames);
                self.env(env, l);
                self.code_flows(b.label, l);
            }
            Term::Marked(m, b) => {
                self.expr(b, frames);
                self.direct(lnode(b.label), lnode(l), l);
                self.direct(FlowNode::Marker(m.clone()), lnode(l), l);
            }
            Term::Prim(_, a, b) => {
                self.expr(a, frames);
                self.direct(lnode(a.label), lnode(l), l);
                if let Some(b) = b {
                    self.expr(b, frames);
                    self.direct(lnode(b.label), lnode(l), l);
                }
            }
            Term::Closure(inner, env) => {
                self.term(inner, l, frames);
                self.env(env, l);
            }
        }
    }
}

/// Flow edges for `program` under a CFA solution computed for it.
pub fn gen_flow_constraints(program: &Expr, sol: &CfaSolution) -> BTreeSet<FlowEdge> {
    let mut g = FlowGen {
        sol,
        edges: BTreeSet::new(),
    };
    g.expr(program, &mut vec![BTreeMap::new()]);
    g.edges
}

#[derive(Debug, Default)]
pub struct FlowGraph {
    edges: Vec<FlowEdge>,
    succ: BTreeMap<FlowNode, Vec<FlowNode>>,
    marker_reach: OnceLock<BTreeMap<Marker, BTreeSet<FlowNode>>>,
}

impl Clone for FlowGraph {
    fn clone(&self) -> Self {
        FlowGraph::new(self.edges.iter().cloned())
    }
}

impl FlowGraph {
    pub fn new(edges: impl IntoIterator<Item = FlowEdge>) -> Self {
        let edges: BTreeSet<FlowEdge> = edges.into_iter().collect();
        let mut succ: BTreeMap<FlowNode, Vec<FlowNode>> = BTreeMap::new();
        for e in &edges {
            succ.entry(e.src.clone()).or_default().push(e.dst.clone());
        }
        FlowGraph {
            edges: edges.into_iter().collect(),
            succ,
            marker_reach: OnceLock::new(),
        }
    }

    pub fn edges(&self) -> &[FlowEdge] {
        &self.edges
    }

    pub fn markers(&self) -> BTreeSet<Marker> {
        self.succ
            .keys()
            .filter_map(|n| match n {
                FlowNode::Marker(m) => Some(m.clone()),
                _ => None,
            })
            .collect()
    }

    /// Every node reachable from `from`, `from` included. Edge kinds are not distinguished.
    pub fn reachable_from(&self, from: &FlowNode) -> BTreeSet<FlowNode> {
        let mut seen = BTreeSet::from([from.clone()]);
        let mut queue = VecDeque::from([from.clone()]);
        while let Some(n) = queue.pop_front() {
            for m in self.succ.get(&n).into_iter().flatten() {
                if seen.insert(m.clone()) {
                    queue.push_back(m.clone());
                }
            }
        }
        seen
    }

    pub fn reaches(&self, from: &FlowNode, to: &FlowNode) -> bool {
        from == to || self.reachable_from(from).contains(to)
    }

    pub fn reachable_markers(&self, root: Label) -> BTreeSet<Marker> {
        let reach = self.marker_reach.get_or_init(|| {
            self.markers()
                .into_iter()
                .map(|m| {
                    let r = self.reachable_from(&FlowNode::Marker(m.clone()));
                    (m, r)
                })
                .collect()
        });
        let target = FlowNode::Label(root);
        reach
            .iter()
            .filter(|(_, r)| r.contains(&target))
            .map(|(m, _)| m.clone())
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let edges: Vec<serde_json::Value> = self
            .edges
            .iter()
            .map(|e| {
                serde_json::json!({
                    "src": e.src.to_string(),
                    "dst": e.dst.to_string(),
                    "kind": e.kind.name(),
                    "origin": e.origin.0,
                })
            })
            .collect();
        serde_json::json!({ "edges": edges })
    }

    /// Graphviz rendering; indirect edges are dashed, markers are boxes.
    pub fn to_dot(&self) -> String {
        let mut nodes = BTreeSet::new();
        for e in &self.edges {
            nodes.insert(&e.src);
            nodes.insert(&e.dst);
        }
        let quote = |n: &FlowNode| serde_json::to_string(&n.to_string()).expect("string");
        let mut out = String::from("digraph flows {\n");
        for n in nodes {
            let shape = match n {
                FlowNode::Label(_) => "circle",
                FlowNode::Var(_) => "ellipse",
                FlowNode::Marker(_) => "box",
            };
            out.push_str(&format!("  {} [shape={shape}];\n", quote(n)));
        }
        for e in &self.edges {
            let style = match e.kind {
                EdgeKind::Direct => "solid",
                EdgeKind::Indirect => "dashed",
            };
            out.push_str(&format!(
                "  {} -> {} [style={style}];\n",
                quote(&e.src),
                quote(&e.dst)
            ));
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Clone, Debug)]
pub struct DependencyReport {
    pub root: Label,
    pub variant: Variant,
    pub depends: BTreeSet<Marker>,
    pub cfa: CfaSolution,
    pub graph: FlowGraph,
}

impl DependencyReport {
    pub fn edges(&self) -> &[FlowEdge] {
        self.graph.edges()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "variant": self.variant.name(),
            "root": self.root.0,
            "depends": self.depends.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
        })
    }
}

/// `depends: {H, L}`
pub fn format_depends(ms: &BTreeSet<Marker>) -> String {
    let names: Vec<&str> = ms.iter().map(|m| m.as_str()).collect();
    format!("depends: {{{}}}", names.join(", "))
}

impl fmt::Display for DependencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_depends(&self.depends))
    }
}

pub fn analyze(program: &Expr, variant: Variant) -> DependencyReport {
    let sol = cfa::analyze(program, variant);
    let graph = FlowGraph::new(gen_flow_constraints(program, &sol));
    DependencyReport {
        root: program.label,
        variant,
        depends: graph.reachable_markers(program.label),
        cfa: sol,
        graph,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_str;

    fn markers(names: &[&str]) -> BTreeSet<Marker> {
        names.iter().map(|n| Marker::new(*n)).collect()
    }

    #[test]
    fn marked_fun_edges() {
        let e = parse_str("(fun(x){ (I : fun(y){x}) }((H : 1)))((L : 2))").unwrap();
        let r = analyze(&e, Variant::Simple);
        assert_eq!(r.root, Label(9));
        assert_eq!(r.depends, markers(&["H", "I"]));
        let has = |s: FlowNode, d: FlowNode, k: EdgeKind| {
            r.edges().iter().any(|e| e.src == s && e.dst == d && e.kind == k)
        };
        let x = || FlowNode::Var(AbsVar::Name("x".into()));
        let y = || FlowNode::Var(AbsVar::Name("y".into()));
        let m = |s: &str| FlowNode::Marker(Marker::new(s));
        use EdgeKind::*;
        assert!(has(lnode(Label(4)), lnode(Label(5)), Direct));
        assert!(has(m("H"), lnode(Label(5)), Direct));
        assert!(has(lnode(Label(5)), x(), Direct));
        assert!(has(x(), lnode(Label(0)), Direct));
        assert!(has(lnode(Label(0)), lnode(Label(9)), Direct));
        assert!(has(m("I"), lnode(Label(2)), Direct));
        assert!(has(lnode(Label(1)), lnode(Label(2)), Direct));
        assert!(has(lnode(Label(2)), lnode(Label(6)), Direct));
        assert!(has(lnode(Label(3)), lnode(Label(6)), Indirect));
        assert!(has(lnode(Label(6)), lnode(Label(9)), Indirect));
        assert!(has(lnode(Label(7)), lnode(Label(8)), Direct));
        assert!(has(m("L"), lnode(Label(8)), Direct));
        assert!(has(lnode(Label(8)), y(), Direct));
        assert!(!r.graph.reaches(&m("L"), &lnode(Label(9))));
    }

    #[test]
    fn trivial_graphs() {
        let k = parse_str("1").unwrap();
        assert!(analyze(&k, Variant::Simple).edges().is_empty());
        let x = parse_str("x").unwrap();
        let r = analyze(&x, Variant::Simple);
        assert_eq!(r.edges().len(), 1);
        assert_eq!(r.edges()[0].src, FlowNode::Var(AbsVar::Name("x".into())));
        assert!(r.depends.is_empty());
    }

    #[test]
    fn deterministic_edges() {
        let src = r#"fun(p){ p["a"] }({"a": (H : 1), "__proto__": null})"#;
        let a = analyze(&parse_str(src).unwrap(), Variant::Improved);
        let b = analyze(&parse_str(src).unwrap(), Variant::Improved);
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.graph.to_json(), b.graph.to_json());
        assert_eq!(a.depends, markers(&["H"]));
    }

    #[test]
    fn dot_marks_indirect_dashed() {
        let e = parse_str("if ((H : true)) { 1 } else { 2 }").unwrap();
        let dot = analyze(&e, Variant::Simple).graph.to_dot();
        assert!(dot.contains("style=dashed"));
        assert!(dot.contains("\"(H)\" [shape=box]"));
    }

    #[test]
    fn depends_format() {
        assert_eq!(format_depends(&markers(&["L", "H"])), "depends: {H, L}");
        assert_eq!(format_depends(&BTreeSet::new()), "depends: {}");
    }
}

//! Interpreter and static information-flow analysis for a small staged
//! language with JavaScript-style records.

pub mod cfa;
pub mod corpus;
pub mod eval;
pub mod gen;
pub mod ifa;
pub mod noninterference;
pub mod parser;
pub mod pretty;
pub mod properties;
pub mod syntax;

pub use parser::{parse, parse_str, ParseDiagnostic, ParseError, SourceProgram};
pub use pretty::pretty;
pub use syntax::{Const, Env, Expr, Label, Marker, Term};

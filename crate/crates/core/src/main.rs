use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use slamjs::cfa::Variant;
use slamjs::corpus::{self, CaseKind};
use slamjs::eval::{self, Outcome, DEFAULT_FUEL};
use slamjs::ifa::{self, format_depends};
use slamjs::noninterference::{check_noninterference, Verdict};
use slamjs::pretty::show;
use slamjs::properties::{run_suite, Property};
use slamjs::{parse, Expr, Marker, SourceProgram};

const EXIT_CODES: &str = "\
Exit codes:
  0  success (eval: the program reached a value)
  1  parse error, unreadable input, or a failed corpus/property run
  2  eval: evaluation got stuck
  3  eval: step budget exhausted";

#[derive(Parser, Debug)]
#[command(name = "slamjs", version, about = "Staged record calculus: evaluator and dependency analysis", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a program and print its final value.
    Eval {
        file: PathBuf,
        /// Print every reduction step with its rule name.
        #[arg(long)]
        trace: bool,
        #[arg(long, default_value_t = DEFAULT_FUEL, value_name = "N")]
        max_steps: usize,
        #[arg(long)]
        json: bool,
    },
    /// Run the control flow and information flow analyses.
    Analyze {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = VariantArg::Simple)]
        variant: VariantArg,
        /// Print the abstract cache and environment.
        #[arg(long)]
        dump_cfa: bool,
        /// Print the flow graph.
        #[arg(long, value_name = "FMT")]
        dump_flows: Option<FlowFormat>,
        #[arg(long)]
        json: bool,
    },
    /// Print only the dependency set of the program result.
    Depends {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = VariantArg::Simple)]
        variant: VariantArg,
    },
    /// Run the embedded example corpus against its expected results.
    Corpus {
        #[arg(long, value_enum, default_value_t = VariantArg::Both)]
        variant: VariantArg,
        #[arg(long, default_value_t = DEFAULT_FUEL, value_name = "N")]
        max_steps: usize,
        #[arg(long)]
        json: bool,
    },
    /// Check the semantic and analysis properties on generated programs.
    Proptest {
        /// Overridden by SLAMJS_SEED when set.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        cases: usize,
        #[arg(long)]
        json: bool,
    },
    /// Differential noninterference check for a set of high markers.
    Noninterference {
        file: PathBuf,
        /// High markers, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "H")]
        high: Vec<String>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, value_enum, default_value_t = VariantArg::Simple)]
        variant: VariantArg,
        /// Overridden by SLAMJS_SEED when set.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Simple,
    Improved,
    Both,
}

impl VariantArg {
    fn variants(self) -> &'static [Variant] {
        match self {
            VariantArg::Simple => &[Variant::Simple],
            VariantArg::Improved => &[Variant::Improved],
            VariantArg::Both => &[Variant::Simple, Variant::Improved],
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FlowFormat {
    Dot,
    Json,
}

fn seed_from_env(flag: u64) -> Result<u64, String> {
    match std::env::var("SLAMJS_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| format!("SLAMJS_SEED is not an integer: {s:?}")),
        Err(_) => Ok(flag),
    }
}

fn load(path: &Path) -> Result<Expr, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let src = SourceProgram::new(text, path.display().to_string());
    parse(&src, false).map_err(|e| {
        e.diagnostics
            .iter()
            .map(|d| format!("{}:{d}", path.display()))
            .collect::<Vec<_>>()
            .join("\n")
    })
}

fn fail(msg: impl AsRef<str>) -> ExitCode {
    eprintln!("{}", msg.as_ref());
    ExitCode::from(1)
}

fn cmd_eval(file: &Path, trace: bool, max_steps: usize, as_json: bool) -> ExitCode {
    let e = match load(file) {
        Ok(e) => e,
        Err(msg) => return fail(msg),
    };
    let t = eval::eval_full(&e, max_steps);
    if trace && !as_json {
        for (k, s) in t.steps.iter().enumerate() {
            println!(
                "{:>4}  {:<14} stage {}  {}",
                k + 1,
                s.rule.name(),
                s.stage,
                show(&s.expr)
            );
        }
    }
    let code = match &t.outcome {
        Outcome::Value(_) => 0,
        Outcome::Stuck { .. } => 2,
        Outcome::FuelExhausted(_) => 3,
    };
    if as_json {
        let mut out = match &t.outcome {
            Outcome::Value(v) => json!({"outcome": "value", "value": show(v)}),
            Outcome::Stuck { reason, focus, expr } => json!({
                "outcome": "stuck",
                "reason": reason.to_string(),
                "label": focus.0,
                "expr": show(expr),
            }),
            Outcome::FuelExhausted(_) => json!({"outcome": "fuel-exhausted"}),
        };
        out["steps"] = json!(t.steps.len());
        if trace {
            out["trace"] = t
                .steps
                .iter()
                .map(|s| json!({"rule": s.rule.name(), "stage": s.stage, "expr": show(&s.expr)}))
                .collect();
        }
        println!("{out}");
    } else {
        println!("{}", t.outcome);
    }
    ExitCode::from(code)
}

fn cmd_analyze(
    file: &Path,
    variant: VariantArg,
    dump_cfa: bool,
    flows: Option<FlowFormat>,
    as_json: bool,
) -> ExitCode {
    let e = match load(file) {
        Ok(e) => e,
        Err(msg) => return fail(msg),
    };
    let mut reports = Vec::new();
    for &v in variant.variants() {
        let r = ifa::analyze(&e, v);
        if as_json {
            let mut out = r.to_json();
            if dump_cfa {
                out["cfa"] = r.cfa.to_json();
            }
            if flows.is_some() {
                out["flows"] = r.graph.to_json();
            }
            reports.push(out);
            continue;
        }
        if variant == VariantArg::Both {
            println!("[{}] {r}", v.name());
        } else {
            println!("{r}");
        }
        if dump_cfa {
            print!("{}", cfa_table(&r.cfa));
        }
        match flows {
            Some(FlowFormat::Dot) => print!("{}", r.graph.to_dot()),
            Some(FlowFormat::Json) => {
                println!("{}", serde_json::to_string_pretty(&r.graph.to_json()).unwrap())
            }
            None => {}
        }
    }
    if as_json {
        let out = if reports.len() == 1 {
            reports.pop().unwrap()
        } else {
            json!(reports)
        };
        println!("{}", serde_json::to_string_pretty(&out).unwrap());
    }
    ExitCode::SUCCESS
}

fn cfa_table(sol: &slamjs::cfa::CfaSolution) -> String {
    let json = sol.to_json();
    let mut out = String::new();
    for (title, key) in [("Γ", "gamma"), ("ϱ", "rho")] {
        if let Some(map) = json[key].as_object() {
            for (k, vals) in map {
                let vals: Vec<&str> = vals
                    .as_array()
                    .into_iter()
                    .flatten()
                    .filter_map(|v| v.as_str())
                    .collect();
                out.push_str(&format!("{title}({k}) = {{{}}}\n", vals.join(", ")));
            }
        }
    }
    out
}

fn cmd_depends(file: &Path, variant: VariantArg) -> ExitCode {
    let e = match load(file) {
        Ok(e) => e,
        Err(msg) => return fail(msg),
    };
    for &v in variant.variants() {
        let r = ifa::analyze(&e, v);
        if variant == VariantArg::Both {
            println!("[{}] {}", v.name(), format_depends(&r.depends));
        } else {
            println!("{}", format_depends(&r.depends));
        }
    }
    ExitCode::SUCCESS
}

fn set_text(s: &Option<BTreeSet<Marker>>) -> String {
    match s {
        Some(s) => format_depends(s).trim_start_matches("depends: ").to_string(),
        None => "-".into(),
    }
}

fn cmd_corpus(variant: VariantArg, max_steps: usize, as_json: bool) -> ExitCode {
    let mut rows = Vec::new();
    let mut failed = 0;
    for case in corpus::cases() {
        for &v in variant.variants() {
            // semantics cases have no analysis expectation; run them once
            if case.kind == CaseKind::Semantics && v != variant.variants()[0] {
                continue;
            }
            let r = corpus::run_case(&case, v, max_steps);
            if !r.passed() {
                failed += 1;
            }
            rows.push(r);
        }
    }
    if as_json {
        let out: Vec<_> = rows
            .iter()
            .map(|r| {
                json!({
                    "id": r.id,
                    "variant": r.variant.name(),
                    "depends": r.depends.as_ref().map(|s| s.iter().map(|m| m.as_str()).collect::<Vec<_>>()),
                    "expected_depends": r.expected_depends.as_ref().map(|s| s.iter().map(|m| m.as_str()).collect::<Vec<_>>()),
                    "value": r.value,
                    "expected_value": r.expected_value,
                    "passed": r.passed(),
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&json!(out)).unwrap());
    } else {
        println!(
            "{:<6} {:<9} {:<12} {:<12} {:<22} result",
            "case", "variant", "depends", "expected", "value"
        );
        for r in &rows {
            println!(
                "{:<6} {:<9} {:<12} {:<12} {:<22} {}",
                r.id,
                r.variant.name(),
                set_text(&r.depends),
                set_text(&r.expected_depends),
                r.value,
                if r.passed() { "ok" } else { "MISMATCH" }
            );
        }
        println!("{}/{} passed", rows.len() - failed, rows.len());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_proptest(seed: u64, cases: usize, as_json: bool) -> ExitCode {
    let seed = match seed_from_env(seed) {
        Ok(s) => s,
        Err(msg) => return fail(msg),
    };
    let s = run_suite(seed, cases, &Property::ALL);
    if as_json {
        let out = json!({
            "seed": seed,
            "generated": s.generated,
            "terminating": s.terminating,
            "passed": Property::ALL.iter().map(|&p| (p.name().to_string(), json!(s.pass_count(p)))).collect::<serde_json::Map<_, _>>(),
            "failures": s.failures.iter().map(|f| json!({
                "property": f.property.name(),
                "case": f.case,
                "program": f.program,
                "shrunk": f.shrunk,
                "detail": f.detail,
            })).collect::<Vec<_>>(),
        });
        println!("{}", serde_json::to_string_pretty(&out).unwrap());
    } else {
        println!(
            "seed {seed}: {} programs generated, {} terminating, {:.2?}",
            s.generated, s.terminating, s.elapsed
        );
        for p in Property::ALL {
            println!("{:<26} {}/{}", p.name(), s.pass_count(p), s.terminating);
        }
        for f in &s.failures {
            println!(
                "FAIL {} (case {})\n  program: {}\n  shrunk:  {}\n  {}",
                f.property.name(),
                f.case,
                f.program,
                f.shrunk,
                f.detail
            );
        }
    }
    if s.all_passed() && s.terminating == cases {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_noninterference(
    file: &Path,
    high: &[String],
    trials: usize,
    variant: VariantArg,
    seed: u64,
    as_json: bool,
) -> ExitCode {
    let e = match load(file) {
        Ok(e) => e,
        Err(msg) => return fail(msg),
    };
    let seed = match seed_from_env(seed) {
        Ok(s) => s,
        Err(msg) => return fail(msg),
    };
    let high: BTreeSet<Marker> = high.iter().map(Marker::new).collect();
    let mut consistent = true;
    for &v in variant.variants() {
        let r = check_noninterference(&e, &high, trials, v, seed, DEFAULT_FUEL);
        consistent &= r.consistent();
        let verdict = match r.verdict {
            Verdict::StaticallySecure => "secure",
            Verdict::PossiblyInsecure => "possibly-insecure",
        };
        if as_json {
            let out = json!({
                "variant": v.name(),
                "verdict": verdict,
                "depends": r.depends.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
                "trials": r.trials,
                "agreed": r.agreed,
                "skipped": r.skipped,
                "mismatches": r.mismatches.iter().map(|m| json!({
                    "program": m.variant_program,
                    "expected": m.expected,
                    "got": m.got,
                })).collect::<Vec<_>>(),
            });
            println!("{out}");
        } else {
            println!(
                "[{}] {verdict}; {}; {}/{} trials agree, {} skipped, {} differ",
                v.name(),
                format_depends(&r.depends),
                r.agreed,
                r.trials,
                r.skipped,
                r.mismatches.len()
            );
        }
    }
    if consistent {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Eval {
            file,
            trace,
            max_steps,
            json,
        } => cmd_eval(&file, trace, max_steps, json),
        Command::Analyze {
            file,
            variant,
            dump_cfa,
            dump_flows,
            json,
        } => cmd_analyze(&file, variant, dump_cfa, dump_flows, json),
        Command::Depends { file, variant } => cmd_depends(&file, variant),
        Command::Corpus {
            variant,
            max_steps,
            json,
        } => cmd_corpus(variant, max_steps, json),
        Command::Proptest { seed, cases, json } => cmd_proptest(seed, cases, json),
        Command::Noninterference {
            file,
            high,
            trials,
            variant,
            seed,
            json,
        } => cmd_noninterference(&file, &high, trials, variant, seed, json),
    }
}

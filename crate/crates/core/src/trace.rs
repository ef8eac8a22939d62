//! Stepwise decomposition of straight-line definition chains.
//!
//! A family whose body is nothing but a chain of `defs` (no search
//! variables, no constraints, no objective) is a worked physics-problem
//! shape: every intermediate quantity is computable by exact evaluation in
//! declaration order. This module turns such an instance into an aligned
//! sequence of (sub-question, verified answer) steps — one per input
//! parameter, one per definition, plus a closing step for the answer
//! expression — and exports the sequences as JSONL training traces.
//!
//! Every step value is computed twice: once by the exact rational
//! evaluator and once by the solver on the emitted script (`get-value`
//! over the definition chain). A disagreement is an error, never a silent
//! preference.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Signed;
use serde::Serialize;
use thiserror::Error;

use crate::emit::emit_smtlib;
use crate::evaluate::{decimal_3dp, eval, param_env, EvalError, Value};
use crate::harness::render_answer_text;
use crate::ir::{AnswerValue, Expr, Objective, ProbeFamily, ProbeInstance};
use crate::sexpr::{read_all, SNode};
use crate::solver::{parse_value, SolverConfig, SolverError};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("`{family}` is not a straight-line definition chain: {why}")]
    NonStraightLine { family: String, why: String },
    #[error("no binding phrase for `{0}`; every trace step needs a question")]
    BindingMissingForDef(String),
    #[error("step `{name}` failed exact evaluation: {source}")]
    Eval { name: String, source: EvalError },
    #[error("solver reported no value for `{0}`")]
    MissingSolverValue(String),
    #[error("solver cross-check failed for `{name}`: evaluator says {expected}, solver says {got}")]
    CrossCheck {
        name: String,
        expected: String,
        got: String,
    },
    #[error("trace ends in {trace} but the canonical answer is {canonical}")]
    CanonicalMismatch { trace: String, canonical: String },
    #[error("instance has no rendered prompt and the template is not renderable")]
    MissingPrompt,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("failed writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// One aligned sub-question/answer pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    /// Formal name the step resolves (parameter, definition, or `answer`).
    pub name: String,
    /// Natural-language question, e.g. `Initial momentum of A?`.
    pub question: String,
    pub answer: AnswerValue,
    /// Answer as prose, unit suffix included, e.g. `2.073 kg·m/s`.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub instance_hash: String,
    pub prompt: String,
    pub steps: Vec<TraceStep>,
    pub final_answer: AnswerValue,
    /// The last step's rendered text, e.g. `{-4.146, +4.146} N·s`.
    pub final_text: String,
}

/// Splits a binding phrase into its prose and an optional trailing
/// `[unit]` annotation: `"Impulse on A [N·s]"` → (`"Impulse on A"`, `"N·s"`).
fn split_phrase(phrase: &str) -> (&str, Option<&str>) {
    let trimmed = phrase.trim_end();
    if let Some(body) = trimmed.strip_suffix(']') {
        if let Some((head, unit)) = body.rsplit_once('[') {
            return (head.trim_end(), Some(unit.trim()));
        }
    }
    (trimmed, None)
}

fn question_for(f: &ProbeFamily, name: &str) -> Result<(String, Option<String>), TraceError> {
    let phrase = f
        .binding_phrase(name)
        .ok_or_else(|| TraceError::BindingMissingForDef(name.to_owned()))?;
    let (head, unit) = split_phrase(phrase);
    let question = format!("{}?", head.trim_end_matches('?').trim_end());
    Ok((question, unit.map(str::to_owned)))
}

/// Prose rendering with the unit appended. Scalars render as in model
/// grading; set elements additionally carry an explicit sign so a pair of
/// opposite impulses reads `{-4.146, +4.146}` rather than losing the
/// contrast.
fn render_with_unit(answer: &AnswerValue, unit: Option<&str>) -> String {
    let core = match answer {
        AnswerValue::Set(els) => {
            let parts: Vec<String> = els
                .iter()
                .map(|r| {
                    let body = decimal_3dp(r);
                    if r.is_positive() {
                        format!("+{body}")
                    } else {
                        body
                    }
                })
                .collect();
            format!("{{{}}}", parts.join(", "))
        }
        other => render_answer_text(other),
    };
    match unit {
        Some(u) => format!("{core} {u}"),
        None => core,
    }
}

/// Numeric equality with no tolerance; `Int` and `Rat` compare as exact
/// rationals.
fn exact_eq(a: &AnswerValue, b: &AnswerValue) -> bool {
    let as_rat = |v: &AnswerValue| -> Option<BigRational> {
        match v {
            AnswerValue::Int(n) => Some(BigRational::from_integer(n.clone())),
            AnswerValue::Rat(r) => Some(r.clone()),
            _ => None,
        }
    };
    match (a, b) {
        (AnswerValue::Bool(x), AnswerValue::Bool(y)) => x == y,
        (AnswerValue::Set(x), AnswerValue::Set(y)) => x == y,
        _ => match (as_rat(a), as_rat(b)) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        },
    }
}

fn straight_line_gate(f: &ProbeFamily, i: &ProbeInstance) -> Result<(), TraceError> {
    let why = if !i.vars.is_empty() {
        "it declares search variables"
    } else if !i.constraints.is_empty() {
        "it carries constraints"
    } else if i.objective != Objective::None {
        "it has an objective"
    } else {
        return Ok(());
    };
    Err(TraceError::NonStraightLine {
        family: f.id.clone(),
        why: why.to_owned(),
    })
}

/// Parses a `get-value` response — a list of `(name value)` pairs — into a
/// name-indexed map.
fn scan_value_pairs(output: &str) -> Result<BTreeMap<String, Value>, SolverError> {
    let nodes = read_all(output).map_err(|e| {
        SolverError::SolverCrash(format!("unparseable solver output: {}", e.message))
    })?;
    let mut values = BTreeMap::new();
    for node in &nodes {
        let SNode::List { items, .. } = node else { continue };
        for item in items {
            if let SNode::List { items: pair, .. } = item {
                if pair.len() == 2 {
                    if let (Some(name), Some(value)) = (pair[0].atom(), parse_value(&pair[1])) {
                        values.insert(name.to_owned(), value);
                    }
                }
            }
        }
    }
    Ok(values)
}

/// Re-derives every definition through the solver and compares against the
/// exact evaluator's values.
fn cross_check_defs(
    i: &ProbeInstance,
    evaluated: &BTreeMap<String, Value>,
    cfg: &SolverConfig,
) -> Result<(), TraceError> {
    if i.defs.is_empty() {
        return Ok(());
    }
    let mut script = emit_smtlib(i);
    script.push_str("(check-sat)\n");
    let names: Vec<&str> = i.defs.iter().map(|d| d.name.as_str()).collect();
    script.push_str(&format!("(get-value ({}))\n", names.join(" ")));
    let output = cfg.primary.run(&script, cfg.timeout_ms)?;
    let solver_values = scan_value_pairs(&output)?;
    for d in &i.defs {
        let got = solver_values
            .get(&d.name)
            .ok_or_else(|| TraceError::MissingSolverValue(d.name.clone()))?;
        let expected = &evaluated[&d.name];
        if !exact_eq(&expected.to_answer(), &got.to_answer()) {
            return Err(TraceError::CrossCheck {
                name: d.name.clone(),
                expected: render_answer_text(&expected.to_answer()),
                got: render_answer_text(&got.to_answer()),
            });
        }
    }
    Ok(())
}

/// Decomposes a grounded straight-line instance into verified steps: one
/// per input parameter (declaration order), one per definition
/// (declaration order), and a closing step for the answer expression —
/// elided when the answer is simply the last definition restated. Step
/// answers come from exact evaluation, are cross-checked against the
/// solver, and the final step must reproduce the instance's canonical
/// answer when one is recorded.
pub fn derive_trace(
    f: &ProbeFamily,
    i: &ProbeInstance,
    cfg: &SolverConfig,
) -> Result<Trace, TraceError> {
    straight_line_gate(f, i)?;

    let prompt = match &i.prompt {
        Some(p) => p.clone(),
        None => crate::instance::render_prompt(f, &i.param_values)
            .map_err(|_| TraceError::MissingPrompt)?,
    };

    let mut env = param_env(&i.param_values);
    let mut steps = Vec::new();
    for p in &f.params {
        let (question, unit) = question_for(f, &p.name)?;
        let value = i.param_values.get(&p.name).copied().unwrap_or_default();
        let answer = AnswerValue::Int(BigInt::from(value));
        steps.push(TraceStep {
            name: p.name.clone(),
            question,
            text: render_with_unit(&answer, unit.as_deref()),
            answer,
        });
    }
    for d in &i.defs {
        let value = eval(&d.body, &env).map_err(|e| TraceError::Eval {
            name: d.name.clone(),
            source: e,
        })?;
        env.insert(d.name.clone(), value.clone());
        let (question, unit) = question_for(f, &d.name)?;
        let answer = value.to_answer();
        steps.push(TraceStep {
            name: d.name.clone(),
            question,
            text: render_with_unit(&answer, unit.as_deref()),
            answer,
        });
    }

    cross_check_defs(i, &env, cfg)?;

    let restates_last_def = matches!(
        (&i.answer, i.defs.last()),
        (Expr::Var(n), Some(last)) if *n == last.name
    );
    if !restates_last_def {
        let value = eval(&i.answer, &env).map_err(|e| TraceError::Eval {
            name: "answer".to_owned(),
            source: e,
        })?;
        let (question, unit) = question_for(f, "answer")?;
        let answer = value.to_answer();
        steps.push(TraceStep {
            name: "answer".to_owned(),
            question,
            text: render_with_unit(&answer, unit.as_deref()),
            answer,
        });
    }

    let last = steps.last().expect("a straight-line trace has at least the answer step");
    let (final_answer, final_text) = (last.answer.clone(), last.text.clone());
    if let Some(canonical) = &i.canonical_answer {
        if !exact_eq(canonical, &final_answer) {
            return Err(TraceError::CanonicalMismatch {
                trace: render_answer_text(&final_answer),
                canonical: render_answer_text(canonical),
            });
        }
    }

    Ok(Trace {
        instance_hash: i.instance_hash.clone(),
        prompt,
        steps,
        final_answer,
        final_text,
    })
}

#[derive(Serialize)]
struct StepLine<'a> {
    q: &'a str,
    a: &'a str,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    prompt: &'a str,
    steps: Vec<StepLine<'a>>,
    #[serde(rename = "final")]
    final_text: &'a str,
}

/// Writes one JSON line per trace — `{"prompt": …, "steps": [{"q": …,
/// "a": …}, …], "final": …}` — preserving input order. An empty slice
/// yields an empty file.
pub fn export_traces(traces: &[Trace], out_path: &Path) -> Result<PathBuf, TraceError> {
    let io_err = |source| TraceError::Io {
        path: out_path.to_path_buf(),
        source,
    };
    let file = File::create(out_path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    for t in traces {
        let line = TraceLine {
            prompt: &t.prompt,
            steps: t
                .steps
                .iter()
                .map(|s| StepLine {
                    q: &s.question,
                    a: &s.text,
                })
                .collect(),
            final_text: &t.final_text,
        };
        let json = serde_json::to_string(&line).expect("trace lines serialize infallibly");
        writeln!(out, "{json}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(out_path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_family;
    use crate::ir::{ground_instance, DEFAULT_GROUNDING_CAP};
    use num_traits::Zero;

    const DOUBLE: &str = r#"
(probe double_it
  (params (x int (1 9)))
  (defs (y (* 2 x)))
  (answer y)
  (template "What is twice {x}?")
  (bindings (x "Starting value") (y "Twice the value")))
"#;

    fn grounded(text: &str, values: &[(&str, i64)]) -> (ProbeFamily, ProbeInstance) {
        let f = parse_family(text).expect("fixture parses");
        let values: BTreeMap<String, i64> =
            values.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let i = ground_instance(&f, &values, DEFAULT_GROUNDING_CAP).expect("fixture grounds");
        (f, i)
    }

    #[test]
    fn single_def_trace_has_two_steps_ending_in_six() {
        let (f, i) = grounded(DOUBLE, &[("x", 3)]);
        let trace = derive_trace(&f, &i, &SolverConfig::builtin()).unwrap();
        assert_eq!(trace.steps.len(), 2);
        assert_eq!(trace.steps[0].question, "Starting value?");
        assert_eq!(trace.steps[0].text, "3");
        assert_eq!(trace.steps[1].question, "Twice the value?");
        assert_eq!(trace.final_answer, AnswerValue::Int(BigInt::from(6)));
        assert_eq!(trace.final_text, "6");
        assert_eq!(trace.prompt, "What is twice 3? Give only the final answer after '####'. For a set of values use braces.");
    }

    #[test]
    fn search_families_are_rejected() {
        let (f, i) = grounded(
            r#"
(probe pick_min
  (params (n int (2 5)))
  (vars (x int (1 20)))
  (constraints (= (mod x n) 0))
  (objective minimize x)
  (answer x)
  (template "Smallest multiple of {n} in 1..20?"))
"#,
            &[("n", 3)],
        );
        let err = derive_trace(&f, &i, &SolverConfig::builtin()).unwrap_err();
        assert!(matches!(err, TraceError::NonStraightLine { .. }));
        assert!(err.to_string().contains("search variables"));
    }

    #[test]
    fn missing_binding_is_an_error() {
        let (f, i) = grounded(
            r#"
(probe unlabeled
  (params (x int (1 9)))
  (defs (y (* 2 x)))
  (answer y)
  (template "Twice {x}?")
  (bindings (x "Starting value")))
"#,
            &[("x", 4)],
        );
        let err = derive_trace(&f, &i, &SolverConfig::builtin()).unwrap_err();
        assert!(matches!(err, TraceError::BindingMissingForDef(name) if name == "y"));
    }

    #[test]
    fn canonical_mismatch_is_detected() {
        let (f, mut i) = grounded(DOUBLE, &[("x", 3)]);
        i.canonical_answer = Some(AnswerValue::Int(BigInt::from(7)));
        let err = derive_trace(&f, &i, &SolverConfig::builtin()).unwrap_err();
        assert!(matches!(err, TraceError::CanonicalMismatch { .. }));
    }

    #[test]
    fn set_rendering_signs_positive_elements() {
        let half = BigRational::new(BigInt::from(-4146), BigInt::from(1000));
        let answer = AnswerValue::set(vec![half.clone(), -half]);
        assert_eq!(render_with_unit(&answer, Some("N·s")), "{-4.146, +4.146} N·s");
        assert_eq!(
            render_with_unit(&AnswerValue::set(vec![BigRational::zero()]), None),
            "{0}"
        );
    }

    #[test]
    fn phrase_splitting_keeps_units_out_of_questions() {
        assert_eq!(split_phrase("Impulse on A [N·s]"), ("Impulse on A", Some("N·s")));
        assert_eq!(split_phrase("Mass of puck A [kg] "), ("Mass of puck A", Some("kg")));
        assert_eq!(split_phrase("Plain phrase"), ("Plain phrase", None));
        assert_eq!(split_phrase("No closing [bracket"), ("No closing [bracket", None));
    }

    #[test]
    fn export_writes_one_line_per_trace_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traces.jsonl");
        let cfg = SolverConfig::builtin();
        let (f, i3) = grounded(DOUBLE, &[("x", 3)]);
        let (_, i5) = grounded(DOUBLE, &[("x", 5)]);
        let traces = vec![
            derive_trace(&f, &i3, &cfg).unwrap(),
            derive_trace(&f, &i5, &cfg).unwrap(),
        ];
        export_traces(&traces, &path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines.len(), 2);
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first["final"], "6");
        assert_eq!(first["steps"][1]["q"], "Twice the value?");
        let second: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(second["final"], "10");

        export_traces(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
    }
}

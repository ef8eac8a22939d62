//! A small, complete solver for the SMT-LIB 2 subset produced by bounded
//! integer/rational constraint systems: `QF_LIA`/`QF_LRA`/`QF_LIRA` scripts
//! whose integer constants carry explicit bounds.
//!
//! The crate doubles as a library (in-process solving) and a binary speaking
//! the usual stdin/stdout protocol: script in, `sat`/`unsat`/`unknown` plus
//! `(get-model)` output back.

mod engine;
mod sexp;
mod term;

use std::time::Instant;

use num_traits::{One, Signed};
use thiserror::Error;

pub use engine::{SatResult, SearchOrder, Stats, Val};
use engine::{eval_in_model, fabricate_zero_model, Model, Searcher};
use term::{Command, Script, Sort};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported construct: {0}")]
    Unsupported(String),
    #[error("deadline exceeded")]
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Declaration-order variable and ascending value selection.
    #[default]
    Default,
    /// Reversed variable order, descending values: an independent decision
    /// path that must still agree with `Default` on sat/unsat and on any
    /// uniquely determined answer.
    Reverse,
    /// Deliberately wrong: flips sat/unsat and fabricates an all-zero model.
    /// Exists so cross-validation failure paths can be exercised end to end.
    Faulty,
}

impl Strategy {
    pub fn parse(name: &str) -> Option<Strategy> {
        match name {
            "default" => Some(Strategy::Default),
            "reverse" => Some(Strategy::Reverse),
            "faulty" => Some(Strategy::Faulty),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Options {
    pub strategy: Strategy,
    pub deadline: Option<Instant>,
}

/// Runs a full script and renders the protocol output it produces.
pub fn run_script(input: &str, options: Options) -> Result<String, EngineError> {
    let forms = sexp::parse_all(input)?;
    let script = term::elaborate(&forms)?;
    let order = match options.strategy {
        Strategy::Reverse => SearchOrder::Reverse,
        _ => SearchOrder::Declaration,
    };

    let mut out = String::new();
    let mut solved: Option<(SatResult, Option<Model>, Stats)> = None;
    for command in &script.commands {
        match command {
            Command::CheckSat => {
                let result = match &solved {
                    Some(_) => {
                        return Err(EngineError::Unsupported(
                            "multiple (check-sat) commands".into(),
                        ));
                    }
                    None => {
                        let searcher = Searcher::new(&script, order, options.deadline);
                        searcher.solve()?
                    }
                };
                let (mut sat, mut model) = (result.result, result.model);
                if options.strategy == Strategy::Faulty {
                    (sat, model) = match sat {
                        SatResult::Sat => (SatResult::Unsat, None),
                        SatResult::Unsat => {
                            (SatResult::Sat, Some(fabricate_zero_model(&script)))
                        }
                        SatResult::Unknown => (SatResult::Unknown, None),
                    };
                }
                out.push_str(sat.as_str());
                out.push('\n');
                solved = Some((sat, model, result.stats));
            }
            Command::GetModel => match &solved {
                Some((SatResult::Sat, Some(model), _)) => {
                    render_model(&mut out, &script, model);
                }
                _ => out.push_str("(error \"model is not available\")\n"),
            },
            Command::GetValue(terms) => match &solved {
                Some((SatResult::Sat, Some(model), _)) => {
                    out.push('(');
                    for (i, (text, term)) in terms.iter().enumerate() {
                        if i > 0 {
                            out.push(' ');
                        }
                        match eval_in_model(term, model, &script) {
                            Ok(val) => {
                                out.push('(');
                                out.push_str(text);
                                out.push(' ');
                                out.push_str(&render_value(&val));
                                out.push(')');
                            }
                            Err(_) => {
                                out.push_str(&format!("({text} (error \"unevaluable\"))"));
                            }
                        }
                    }
                    out.push_str(")\n");
                }
                _ => out.push_str("(error \"model is not available\")\n"),
            },
            Command::GetStatistics => {
                let stats = solved
                    .as_ref()
                    .map(|(_, _, s)| s.clone())
                    .unwrap_or_default();
                let memory = stats
                    .memory_kb
                    .map(|kb| format!(" :memory-kb {kb}"))
                    .unwrap_or_default();
                out.push_str(&format!(
                    "(:nodes {} :propagations {} :time-ms {}{})\n",
                    stats.nodes, stats.propagations, stats.time_ms, memory
                ));
            }
        }
    }
    Ok(out)
}

fn render_model(out: &mut String, script: &Script, model: &Model) {
    out.push_str("(\n");
    for (decl, val) in script.vars.iter().zip(&model.values) {
        let sort = match decl.sort {
            Sort::Int => "Int",
            Sort::Real => "Real",
            Sort::Bool => "Bool",
        };
        out.push_str(&format!(
            "  (define-fun {} () {} {})\n",
            decl.name,
            sort,
            render_value(val)
        ));
    }
    out.push_str(")\n");
}

fn render_value(val: &Val) -> String {
    match val {
        Val::Bool(b) => b.to_string(),
        Val::Int(n) => {
            if n.is_negative() {
                format!("(- {})", n.magnitude())
            } else {
                n.to_string()
            }
        }
        Val::Rat(r) => {
            let body = if r.denom().is_one() {
                format!("{}.0", r.numer().abs())
            } else {
                format!("(/ {}.0 {}.0)", r.numer().abs(), r.denom())
            };
            if r.is_negative() {
                format!("(- {body})")
            } else {
                body
            }
        }
    }
}

/// Convenience wrapper for library callers that only need the verdict and
/// the model as (name, value) pairs.
pub fn solve_script(
    input: &str,
    options: Options,
) -> Result<(SatResult, Vec<(String, Val)>), EngineError> {
    let forms = sexp::parse_all(input)?;
    let script = term::elaborate(&forms)?;
    let order = match options.strategy {
        Strategy::Reverse => SearchOrder::Reverse,
        _ => SearchOrder::Declaration,
    };
    let solved = Searcher::new(&script, order, options.deadline).solve()?;
    let (sat, model) = match options.strategy {
        Strategy::Faulty => match solved.result {
            SatResult::Sat => (SatResult::Unsat, None),
            SatResult::Unsat => (SatResult::Sat, Some(fabricate_zero_model(&script))),
            SatResult::Unknown => (SatResult::Unknown, None),
        },
        _ => (solved.result, solved.model),
    };
    let assignments = model
        .map(|m| {
            script
                .vars
                .iter()
                .zip(m.values)
                .map(|(decl, val)| (decl.name.clone(), val))
                .collect()
        })
        .unwrap_or_default();
    Ok((sat, assignments))
}

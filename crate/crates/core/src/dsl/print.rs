//! Canonical printer. Output is normalized before rendering, so printing
//! then parsing any valid family lands exactly on its normal form.

use num_traits::Signed;

use crate::ir::{normalize, Expr, Objective, ProbeFamily, Sort, VarDecl};
use crate::ops::OperatorSpec;
use crate::sexpr::escape_string;

pub fn print_expr(e: &Expr) -> String {
    match e {
        Expr::Int(v) => v.to_string(),
        // Sign on the numerator; `q = 1` keeps its denominator so the token
        // re-parses as a rational, not an integer.
        Expr::Rat(r) => format!("{}/{}", r.numer(), r.denom().abs()),
        Expr::Bool(true) => "true".into(),
        Expr::Bool(false) => "false".into(),
        Expr::Var(name) => name.clone(),
        Expr::Apply(op, args) => {
            let mut out = format!("({}", op.symbol());
            for a in args {
                out.push(' ');
                out.push_str(&print_expr(a));
            }
            out.push(')');
            out
        }
        Expr::Forall(b, body) => format!(
            "(forall ({} {} {}) {})",
            b.name,
            print_expr(&b.lo),
            print_expr(&b.hi),
            print_expr(body)
        ),
        Expr::Exists(binders, body) => {
            let bs: Vec<String> = binders
                .iter()
                .map(|b| format!("({} {} {})", b.name, print_expr(&b.lo), print_expr(&b.hi)))
                .collect();
            format!("(exists ({}) {})", bs.join(" "), print_expr(body))
        }
        Expr::SetOf(args) => {
            let mut out = String::from("(set");
            for a in args {
                out.push(' ');
                out.push_str(&print_expr(a));
            }
            out.push(')');
            out
        }
    }
}

pub fn print_op(op: &OperatorSpec) -> String {
    match op {
        OperatorSpec::Conjoin { phi } => format!("(conjoin {})", print_expr(phi)),
        OperatorSpec::Tighten { target, psi } => {
            format!("(tighten {target} {})", print_expr(psi))
        }
        OperatorSpec::RestrictDomain { var, lo, hi } => {
            format!("(restrict-domain {var} {} {})", print_expr(lo), print_expr(hi))
        }
        OperatorSpec::Nest { target, guard, els } => {
            format!("(nest {target} {} {})", print_expr(guard), print_expr(els))
        }
        OperatorSpec::Couple { def, targets } => {
            let mut out = format!("(couple ({} {})", def.name, print_expr(&def.body));
            for t in targets {
                out.push_str(&format!(" {t}"));
            }
            out.push(')');
            out
        }
        OperatorSpec::Chain { def_name, split } => format!(
            "(chain {def_name} ({} {}) ({} {}))",
            split.0.name,
            print_expr(&split.0.body),
            split.1.name,
            print_expr(&split.1.body)
        ),
        OperatorSpec::RepShift { target, defs, replacement } => {
            let ds: Vec<String> =
                defs.iter().map(|d| format!("({} {})", d.name, print_expr(&d.body))).collect();
            format!("(rep-shift {target} ({}) {})", ds.join(" "), print_expr(replacement))
        }
    }
}

fn var_entry(v: &VarDecl) -> String {
    let sort = match v.sort {
        Sort::Int => "int",
        Sort::Rat => "rat",
        Sort::Bool => "bool",
    };
    match &v.domain {
        None => format!("({} {sort})", v.name),
        Some((lo, hi)) => {
            format!("({} {sort} ({} {}))", v.name, print_expr(lo), print_expr(hi))
        }
    }
}

/// One section whose entries each sit on their own four-space line.
fn block<I: IntoIterator<Item = String>>(head: &str, entries: I) -> String {
    let body: Vec<String> = entries.into_iter().map(|e| format!("    {e}")).collect();
    format!("  ({head}\n{})", body.join("\n"))
}

pub fn print_family(f: &ProbeFamily) -> String {
    let f = normalize(f);
    let mut sections: Vec<String> = Vec::new();
    if !f.params.is_empty() {
        sections.push(block(
            "params",
            f.params.iter().map(|p| format!("({} int ({} {}))", p.name, p.lo, p.hi)),
        ));
    }
    if !f.vars.is_empty() {
        sections.push(block("vars", f.vars.iter().map(var_entry)));
    }
    if !f.defs.is_empty() {
        sections.push(block(
            "defs",
            f.defs.iter().map(|d| format!("({} {})", d.name, print_expr(&d.body))),
        ));
    }
    if !f.constraints.is_empty() {
        sections.push(block("constraints", f.constraints.iter().map(print_expr)));
    }
    match &f.objective {
        Objective::None => {}
        Objective::Minimize(e) => {
            sections.push(format!("  (objective minimize {})", print_expr(e)));
        }
        Objective::Maximize(e) => {
            sections.push(format!("  (objective maximize {})", print_expr(e)));
        }
        Objective::Count(projection) => {
            sections.push(format!("  (objective count ({}))", projection.join(" ")));
        }
    }
    sections.push(format!("  (answer {})", print_expr(&f.answer)));
    sections.push(format!("  (template {})", escape_string(&f.template)));
    if !f.bindings.is_empty() {
        sections.push(block(
            "bindings",
            f.bindings.iter().map(|(name, phrase)| format!("({name} {})", escape_string(phrase))),
        ));
    }
    if !f.tags.is_empty() {
        let rendered: Vec<String> = f.tags.iter().map(|t| escape_string(t)).collect();
        sections.push(format!("  (tags {})", rendered.join(" ")));
    }
    if !f.calibrate.is_empty() {
        sections.push(block("calibrate", f.calibrate.iter().map(print_op)));
    }
    format!("(probe {}\n{})\n", f.id, sections.join("\n"))
}

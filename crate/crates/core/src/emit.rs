//! SMT-LIB 2 emission for grounded instances. Output is deterministic down
//! to the byte: declaration order follows the instance, numeric style is
//! fixed, and nothing in the script depends on ambient state.

use num_bigint::BigInt;
use num_traits::{One, Signed};

use crate::ir::{infer_sort, Expr, OpKind, ProbeInstance, Sort, SortEnv, VarDecl};

/// Typing context of an instance: variables plus progressively inferred
/// definition sorts. Valid instances never fail inference; anything odd
/// falls back to Int, which at worst misprints and never panics.
pub fn instance_sort_env(i: &ProbeInstance) -> SortEnv {
    let mut env = SortEnv::default();
    for v in &i.vars {
        env = env.extended(&v.name, v.sort);
    }
    for d in &i.defs {
        let sort = infer_sort(&d.body, &env).unwrap_or(Sort::Int);
        env = env.extended(&d.name, sort);
    }
    env
}

fn sort_keyword(sort: Sort) -> &'static str {
    match sort {
        Sort::Int => "Int",
        Sort::Rat => "Real",
        Sort::Bool => "Bool",
    }
}

fn int_literal(v: &BigInt) -> String {
    if v.is_negative() {
        format!("(- {})", v.magnitude())
    } else {
        v.to_string()
    }
}

fn real_literal(v: &BigInt) -> String {
    if v.is_negative() {
        format!("(- {}.0)", v.magnitude())
    } else {
        format!("{v}.0")
    }
}

fn rat_literal(r: &num_rational::BigRational) -> String {
    if r.denom().is_one() {
        return real_literal(r.numer());
    }
    let body = format!("(/ {}.0 {}.0)", r.numer().magnitude(), r.denom());
    if r.numer().is_negative() {
        format!("(- {body})")
    } else {
        body
    }
}

/// Natural sort of a rendered term. Grounded instances are typed, so
/// inference failure is unreachable in practice; Int is the safe fallback.
fn sort_of(e: &Expr, env: &SortEnv) -> Sort {
    infer_sort(e, env).unwrap_or(Sort::Int)
}

/// Renders in `e`'s own sort, then coerces Int→Real at the boundary when
/// the context demands a rational. Integer literals become real literals
/// directly so pure-rational scripts stay inside QF_LRA.
fn render_coerced(e: &Expr, env: &SortEnv, want_rat: bool) -> String {
    if want_rat && sort_of(e, env) == Sort::Int {
        if let Expr::Int(v) = e {
            return real_literal(v);
        }
        return format!("(to_real {})", render(e, env));
    }
    render(e, env)
}

/// SMT-LIB rendering of a grounded expression in its natural sort.
pub fn render(e: &Expr, env: &SortEnv) -> String {
    match e {
        Expr::Int(v) => int_literal(v),
        Expr::Rat(r) => rat_literal(r),
        Expr::Bool(true) => "true".into(),
        Expr::Bool(false) => "false".into(),
        Expr::Var(name) => name.clone(),
        Expr::Apply(op, args) => render_apply(*op, args, env),
        Expr::Forall(..) | Expr::Exists(..) => {
            unreachable!("emission requires grounded, quantifier-free instances")
        }
        Expr::SetOf(_) => unreachable!("set expressions never reach the solver script"),
    }
}

fn render_apply(op: OpKind, args: &[Expr], env: &SortEnv) -> String {
    let any_rat = || args.iter().any(|a| sort_of(a, env) == Sort::Rat);
    let numeric_children = |rat: bool| -> Vec<String> {
        args.iter().map(|a| render_coerced(a, env, rat)).collect()
    };
    match op {
        OpKind::Add | OpKind::Sub | OpKind::Mul => {
            let sym = match op {
                OpKind::Add => "+",
                OpKind::Sub => "-",
                _ => "*",
            };
            format!("({sym} {})", numeric_children(any_rat()).join(" "))
        }
        OpKind::Div => {
            if any_rat() {
                format!("(/ {})", numeric_children(true).join(" "))
            } else {
                format!("(div {})", numeric_children(false).join(" "))
            }
        }
        OpKind::Mod => format!("(mod {})", numeric_children(false).join(" ")),
        OpKind::Abs => {
            if any_rat() {
                let a = render(&args[0], env);
                format!("(ite (< {a} 0.0) (- {a}) {a})")
            } else {
                format!("(abs {})", render(&args[0], env))
            }
        }
        OpKind::Min | OpKind::Max => {
            let rat = any_rat();
            let cmp = if op == OpKind::Min { "<=" } else { ">=" };
            let mut acc = render_coerced(&args[0], env, rat);
            for next in &args[1..] {
                let b = render_coerced(next, env, rat);
                acc = format!("(ite ({cmp} {acc} {b}) {acc} {b})");
            }
            acc
        }
        OpKind::Eq => format!("(= {})", numeric_children(any_rat()).join(" ")),
        OpKind::Ne => format!("(distinct {})", numeric_children(any_rat()).join(" ")),
        OpKind::Lt | OpKind::Le | OpKind::Gt | OpKind::Ge => {
            let sym = match op {
                OpKind::Lt => "<",
                OpKind::Le => "<=",
                OpKind::Gt => ">",
                _ => ">=",
            };
            format!("({sym} {})", numeric_children(any_rat()).join(" "))
        }
        OpKind::And | OpKind::Or | OpKind::Not => {
            let sym = match op {
                OpKind::And => "and",
                OpKind::Or => "or",
                _ => "not",
            };
            let rendered: Vec<String> = args.iter().map(|a| render(a, env)).collect();
            format!("({sym} {})", rendered.join(" "))
        }
        OpKind::Ite => {
            let guard = render(&args[0], env);
            let branches_bool = sort_of(&args[1], env) == Sort::Bool;
            if branches_bool {
                format!("(ite {guard} {} {})", render(&args[1], env), render(&args[2], env))
            } else {
                let rat = sort_of(&args[1], env) == Sort::Rat
                    || sort_of(&args[2], env) == Sort::Rat;
                format!(
                    "(ite {guard} {} {})",
                    render_coerced(&args[1], env, rat),
                    render_coerced(&args[2], env, rat)
                )
            }
        }
    }
}

fn contains_rat(e: &Expr) -> bool {
    match e {
        Expr::Rat(_) => true,
        Expr::Int(_) | Expr::Bool(_) | Expr::Var(_) => false,
        Expr::Apply(_, args) | Expr::SetOf(args) => args.iter().any(contains_rat),
        Expr::Forall(b, body) => {
            contains_rat(&b.lo) || contains_rat(&b.hi) || contains_rat(body)
        }
        Expr::Exists(bs, body) => {
            bs.iter().any(|b| contains_rat(&b.lo) || contains_rat(&b.hi)) || contains_rat(body)
        }
    }
}

fn pick_logic(i: &ProbeInstance) -> &'static str {
    let rat = i.vars.iter().any(|v| v.sort == Sort::Rat)
        || i.defs.iter().any(|d| contains_rat(&d.body))
        || i.constraints.iter().any(contains_rat);
    let int = i.vars.iter().any(|v| v.sort == Sort::Int);
    match (rat, int) {
        (false, _) => "QF_LIA",
        (true, false) => "QF_LRA",
        (true, true) => "QF_LIRA",
    }
}

fn bound_asserts(v: &VarDecl, env: &SortEnv, out: &mut String) {
    let Some((lo, hi)) = &v.domain else { return };
    let rat = v.sort == Sort::Rat;
    out.push_str(&format!(
        "(assert (>= {} {}))\n",
        v.name,
        render_coerced(lo, env, rat)
    ));
    out.push_str(&format!(
        "(assert (<= {} {}))\n",
        v.name,
        render_coerced(hi, env, rat)
    ));
}

/// Declaration prefix of the script: options, logic, constants with their
/// domain bounds, the definition chain, and one assert per constraint.
/// Callers append `(check-sat)` probes and model queries.
pub fn emit_smtlib(i: &ProbeInstance) -> String {
    let env = instance_sort_env(i);
    let mut out = String::new();
    out.push_str("(set-option :produce-models true)\n");
    out.push_str(&format!("(set-logic {})\n", pick_logic(i)));
    for v in &i.vars {
        out.push_str(&format!("(declare-const {} {})\n", v.name, sort_keyword(v.sort)));
    }
    for v in &i.vars {
        bound_asserts(v, &env, &mut out);
    }
    let mut def_env = SortEnv::default();
    for v in &i.vars {
        def_env = def_env.extended(&v.name, v.sort);
    }
    for d in &i.defs {
        let sort = infer_sort(&d.body, &def_env).unwrap_or(Sort::Int);
        out.push_str(&format!(
            "(define-fun {} () {} {})\n",
            d.name,
            sort_keyword(sort),
            render(&d.body, &def_env)
        ));
        def_env = def_env.extended(&d.name, sort);
    }
    for c in &i.constraints {
        out.push_str(&format!("(assert {})\n", render(c, &env)));
    }
    out
}

/// Atom count across the script's `assert` bodies: every token that is not
/// a parenthesis, counted after the emitter's own whitespace discipline.
pub fn emitted_expr_size(script: &str) -> u64 {
    let mut total = 0u64;
    for line in script.lines() {
        let Some(body) = line.strip_prefix("(assert ") else { continue };
        total += body
            .replace('(', " ")
            .replace(')', " ")
            .split_whitespace()
            .count() as u64;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{ground_instance, Param, ProbeFamily, DEFAULT_GROUNDING_CAP};
    use num_rational::BigRational;
    use std::collections::BTreeMap;

    fn pair_instance() -> ProbeInstance {
        let domain = Some((Expr::int(0), Expr::int(9)));
        let f = ProbeFamily {
            id: "pair".into(),
            vars: vec![
                VarDecl { name: "a".into(), sort: Sort::Int, domain: domain.clone() },
                VarDecl { name: "b".into(), sort: Sort::Int, domain },
            ],
            constraints: vec![Expr::apply(
                OpKind::Eq,
                vec![
                    Expr::apply(OpKind::Add, vec![Expr::var("a"), Expr::var("b")]),
                    Expr::int(10),
                ],
            )],
            answer: Expr::var("a"),
            template: "?".into(),
            ..ProbeFamily::default()
        };
        ground_instance(&f, &BTreeMap::new(), DEFAULT_GROUNDING_CAP).unwrap()
    }

    #[test]
    fn pair_script_is_byte_exact() {
        let script = emit_smtlib(&pair_instance());
        let expected = "\
(set-option :produce-models true)
(set-logic QF_LIA)
(declare-const a Int)
(declare-const b Int)
(assert (>= a 0))
(assert (<= a 9))
(assert (>= b 0))
(assert (<= b 9))
(assert (= 10 (+ a b)))
";
        assert_eq!(script, expected);
        assert_eq!(script.matches("declare-const").count(), 2);
        assert_eq!(script.matches("(assert ").count(), 5);
    }

    #[test]
    fn atom_count_over_asserts() {
        let script = emit_smtlib(&pair_instance());
        // 4 bound asserts à 3 atoms + the equation's (= 10 (+ a b)) à 5.
        assert_eq!(emitted_expr_size(&script), 17);
    }

    #[test]
    fn rational_chain_emits_defines_and_lira() {
        let f = ProbeFamily {
            id: "momentum".into(),
            params: vec![Param { name: "v".into(), lo: 1, hi: 5 }],
            vars: vec![VarDecl {
                name: "k".into(),
                sort: Sort::Int,
                domain: Some((Expr::int(0), Expr::int(3))),
            }],
            defs: vec![
                crate::ir::Def {
                    name: "massA".into(),
                    body: Expr::Rat(BigRational::new(691.into(), 1000.into())),
                },
                crate::ir::Def {
                    name: "momentumA".into(),
                    body: Expr::apply(
                        OpKind::Mul,
                        vec![Expr::var("massA"), Expr::var("v")],
                    ),
                },
            ],
            constraints: vec![Expr::apply(
                OpKind::Ge,
                vec![Expr::var("momentumA"), Expr::var("k")],
            )],
            answer: Expr::var("momentumA"),
            template: "?".into(),
            ..ProbeFamily::default()
        };
        let values: BTreeMap<String, i64> = [("v".to_string(), 3i64)].into_iter().collect();
        let inst = ground_instance(&f, &values, DEFAULT_GROUNDING_CAP).unwrap();
        let script = emit_smtlib(&inst);
        assert!(script.contains("(set-logic QF_LIRA)"), "{script}");
        assert!(script.contains("(define-fun massA () Real (/ 691.0 1000.0))"), "{script}");
        assert!(script.contains("(define-fun momentumA () Real (* massA 3.0))"), "{script}");
        assert!(script.contains("(assert (>= momentumA (to_real k)))"), "{script}");
    }

    #[test]
    fn bool_vars_have_no_bounds_and_ne_uses_distinct() {
        let f = ProbeFamily {
            id: "flags".into(),
            vars: vec![
                VarDecl { name: "p".into(), sort: Sort::Bool, domain: None },
                VarDecl {
                    name: "x".into(),
                    sort: Sort::Int,
                    domain: Some((Expr::int(0), Expr::int(1))),
                },
            ],
            constraints: vec![
                Expr::var("p"),
                Expr::apply(OpKind::Ne, vec![Expr::var("x"), Expr::int(1)]),
            ],
            answer: Expr::var("x"),
            template: "?".into(),
            ..ProbeFamily::default()
        };
        let inst = ground_instance(&f, &BTreeMap::new(), DEFAULT_GROUNDING_CAP).unwrap();
        let script = emit_smtlib(&inst);
        assert!(script.contains("(declare-const p Bool)"));
        assert!(!script.contains("(assert (>= p"));
        assert!(script.contains("(assert (distinct 1 x))") || script.contains("(assert (distinct x 1))"), "{script}");
    }

    #[test]
    fn min_max_and_rat_abs_lower_to_ite() {
        let env = SortEnv::default().extended("x", Sort::Int).extended("r", Sort::Rat);
        let min = Expr::apply(OpKind::Min, vec![Expr::var("x"), Expr::int(3)]);
        assert_eq!(render(&min, &env), "(ite (<= x 3) x 3)");
        let abs = Expr::apply(OpKind::Abs, vec![Expr::var("r")]);
        assert_eq!(render(&abs, &env), "(ite (< r 0.0) (- r) r)");
        let int_abs = Expr::apply(OpKind::Abs, vec![Expr::var("x")]);
        assert_eq!(render(&int_abs, &env), "(abs x)");
    }
}

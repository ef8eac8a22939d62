//! Canonicalization: conjunction flattening, double-negation removal, and a
//! fixed total order on commutative arguments so that structurally equal
//! programs compare equal and metrics are representation-stable.

use super::{Binder, Expr, Objective, OpKind, ProbeFamily};

pub fn normalize(f: &ProbeFamily) -> ProbeFamily {
    let mut out = f.clone();
    for def in &mut out.defs {
        def.body = normalize_expr(&def.body);
    }
    let mut constraints = Vec::new();
    for c in &f.constraints {
        match normalize_expr(c) {
            Expr::Bool(true) => {}
            // Top-level conjunctions dissolve into the constraint list; the
            // list's own order is preserved, so conjunct count is the only
            // thing that changes.
            Expr::Apply(OpKind::And, args) => constraints.extend(args),
            other => constraints.push(other),
        }
    }
    out.constraints = constraints;
    out.objective = match &f.objective {
        Objective::Minimize(e) => Objective::Minimize(normalize_expr(e)),
        Objective::Maximize(e) => Objective::Maximize(normalize_expr(e)),
        other => other.clone(),
    };
    out.answer = normalize_expr(&f.answer);
    out
}

pub fn normalize_expr(e: &Expr) -> Expr {
    match e {
        Expr::Int(_) | Expr::Rat(_) | Expr::Bool(_) | Expr::Var(_) => e.clone(),
        Expr::Apply(OpKind::Not, args) if args.len() == 1 => {
            let inner = normalize_expr(&args[0]);
            match inner {
                Expr::Apply(OpKind::Not, mut inner_args) if inner_args.len() == 1 => {
                    inner_args.pop().expect("checked length")
                }
                other => Expr::Apply(OpKind::Not, vec![other]),
            }
        }
        Expr::Apply(OpKind::And, args) => {
            let mut flat = Vec::new();
            for arg in args {
                match normalize_expr(arg) {
                    Expr::Apply(OpKind::And, inner) => flat.extend(inner),
                    Expr::Bool(true) => {}
                    other => flat.push(other),
                }
            }
            flat.sort();
            match flat.len() {
                0 => Expr::Bool(true),
                1 => flat.pop().expect("checked length"),
                _ => Expr::Apply(OpKind::And, flat),
            }
        }
        Expr::Apply(op, args) => {
            let mut norm: Vec<Expr> = args.iter().map(normalize_expr).collect();
            if op.commutative() {
                // Derived Ord on Expr is a lexicographic comparison of the
                // preorder encoding (variant tag, then fields), which is the
                // fixed total order the canonical form is defined over.
                norm.sort();
            }
            Expr::Apply(*op, norm)
        }
        Expr::Forall(binder, body) => Expr::Forall(
            Box::new(Binder {
                name: binder.name.clone(),
                lo: normalize_expr(&binder.lo),
                hi: normalize_expr(&binder.hi),
            }),
            Box::new(normalize_expr(body)),
        ),
        Expr::Exists(binders, body) => Expr::Exists(
            binders
                .iter()
                .map(|b| Binder {
                    name: b.name.clone(),
                    lo: normalize_expr(&b.lo),
                    hi: normalize_expr(&b.hi),
                })
                .collect(),
            Box::new(normalize_expr(body)),
        ),
        Expr::SetOf(elements) => {
            let mut norm: Vec<Expr> = elements.iter().map(normalize_expr).collect();
            norm.sort();
            norm.dedup();
            Expr::SetOf(norm)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ge(l: Expr, r: Expr) -> Expr {
        Expr::apply(OpKind::Ge, vec![l, r])
    }

    #[test]
    fn top_level_and_splits_into_constraint_list() {
        let f = ProbeFamily {
            constraints: vec![Expr::apply(
                OpKind::And,
                vec![ge(Expr::var("a"), Expr::int(2)), ge(Expr::var("b"), Expr::int(3))],
            )],
            ..ProbeFamily::default()
        };
        let n = normalize(&f);
        assert_eq!(n.constraints.len(), 2);
        assert!(n.constraints.iter().all(|c| !matches!(c, Expr::Apply(OpKind::And, _))));
    }

    #[test]
    fn nested_and_flattens_and_true_drops() {
        let e = Expr::apply(
            OpKind::And,
            vec![
                Expr::apply(
                    OpKind::And,
                    vec![ge(Expr::var("a"), Expr::int(1)), Expr::Bool(true)],
                ),
                ge(Expr::var("b"), Expr::int(2)),
            ],
        );
        match normalize_expr(&e) {
            Expr::Apply(OpKind::And, args) => assert_eq!(args.len(), 2),
            other => panic!("expected flattened and, got {other:?}"),
        }
    }

    #[test]
    fn double_negation_removed() {
        let p = ge(Expr::var("x"), Expr::int(0));
        let e = Expr::apply(OpKind::Not, vec![Expr::apply(OpKind::Not, vec![p.clone()])]);
        assert_eq!(normalize_expr(&e), p);
    }

    #[test]
    fn commutative_args_sorted_canonically() {
        let ba = Expr::apply(OpKind::Add, vec![Expr::var("b"), Expr::var("a")]);
        let ab = Expr::apply(OpKind::Add, vec![Expr::var("a"), Expr::var("b")]);
        assert_eq!(normalize_expr(&ba), normalize_expr(&ab));
        // Non-commutative arguments keep their order.
        let sub = Expr::apply(OpKind::Sub, vec![Expr::var("b"), Expr::var("a")]);
        assert_eq!(normalize_expr(&sub), sub);
    }

    #[test]
    fn idempotent_on_a_mixed_family() {
        let f = ProbeFamily {
            constraints: vec![
                Expr::apply(
                    OpKind::And,
                    vec![
                        Expr::apply(OpKind::Not, vec![Expr::apply(OpKind::Not, vec![ge(Expr::var("b"), Expr::int(3))])]),
                        Expr::apply(OpKind::Eq, vec![Expr::var("b"), Expr::var("a")]),
                    ],
                ),
                Expr::Bool(true),
            ],
            answer: Expr::SetOf(vec![Expr::var("b"), Expr::var("a"), Expr::var("a")]),
            ..ProbeFamily::default()
        };
        let once = normalize(&f);
        assert_eq!(normalize(&once), once);
        assert_eq!(once.answer, Expr::SetOf(vec![Expr::var("a"), Expr::var("b")]));
    }
}

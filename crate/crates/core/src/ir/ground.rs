//! Grounding: parameter substitution plus quantifier expansion. Bounded
//! foralls unroll into conjunctions; bounded exists under grounded forall
//! indices become fresh decision variables carrying their bound constraints
//! in their domains.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::normalize::normalize_expr;
use super::{Expr, LineageEntry, Objective, OpKind, ProbeFamily, ProbeInstance, Sort, VarDecl};
use crate::evaluate::{self, EvalError};

pub const DEFAULT_GROUNDING_CAP: usize = 50_000;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GroundError {
    #[error("no value supplied for parameter `{0}`")]
    UnboundParam(String),
    #[error("grounded domain of `{0}` is empty (lo > hi)")]
    EmptyDomain(String),
    #[error("grounding budget exceeded: more than {0} grounded constraints")]
    BudgetExceeded(usize),
    #[error("bound evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

/// 64-bit content hash of the instance identity triple, as 16 hex digits.
pub fn instance_hash(
    family_id: &str,
    values: &BTreeMap<String, i64>,
    lineage: &[LineageEntry],
) -> String {
    let mut hasher = Sha256::new();
    hasher.update(family_id.as_bytes());
    hasher.update([0u8]);
    for (name, value) in values {
        hasher.update(name.as_bytes());
        hasher.update(b"=");
        hasher.update(value.to_string().as_bytes());
        hasher.update(b";");
    }
    hasher.update([0u8]);
    for entry in lineage {
        hasher.update(entry.fingerprint.as_bytes());
        hasher.update(b";");
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn ground_instance(
    f: &ProbeFamily,
    values: &BTreeMap<String, i64>,
    cap: usize,
) -> Result<ProbeInstance, GroundError> {
    for p in &f.params {
        if !values.contains_key(&p.name) {
            return Err(GroundError::UnboundParam(p.name.clone()));
        }
    }
    let subst = |e: &Expr| -> Expr {
        let mut out = e.clone();
        for p in &f.params {
            let v = values[&p.name];
            out = out.substitute(&p.name, &Expr::Int(BigInt::from(v)));
        }
        out
    };

    let mut used_names: BTreeSet<String> = values.keys().cloned().collect();
    used_names.extend(f.vars.iter().map(|v| v.name.clone()));
    used_names.extend(f.defs.iter().map(|d| d.name.clone()));

    let mut vars = Vec::with_capacity(f.vars.len());
    for v in &f.vars {
        let domain = match &v.domain {
            None => None,
            Some((lo, hi)) => {
                let lo = const_value(&subst(lo))?;
                let hi = const_value(&subst(hi))?;
                if domain_empty(&lo, &hi) {
                    return Err(GroundError::EmptyDomain(v.name.clone()));
                }
                Some((lo, hi))
            }
        };
        vars.push(VarDecl { name: v.name.clone(), sort: v.sort, domain });
    }

    let mut expander = Expander { used_names, fresh: Vec::new(), units: 0, cap };
    let mut constraints = Vec::new();
    for c in &f.constraints {
        let expanded = expander.expand(&subst(c), &mut Vec::new())?;
        match normalize_expr(&expanded) {
            Expr::Bool(true) => {}
            Expr::Apply(OpKind::And, args) => constraints.extend(args),
            other => constraints.push(other),
        }
    }
    vars.extend(expander.fresh);

    let defs = f
        .defs
        .iter()
        .map(|d| super::Def { name: d.name.clone(), body: subst(&d.body) })
        .collect();
    let objective = match &f.objective {
        Objective::Minimize(e) => Objective::Minimize(subst(e)),
        Objective::Maximize(e) => Objective::Maximize(subst(e)),
        other => other.clone(),
    };
    let answer = subst(&f.answer);
    let descriptor = crate::metrics::compute_descriptor(f, Some(values));

    Ok(ProbeInstance {
        family_id: f.id.clone(),
        param_values: values.clone(),
        vars,
        defs,
        constraints,
        objective,
        answer,
        prompt: None,
        canonical_answer: None,
        descriptor,
        profile: None,
        verification: None,
        instance_hash: instance_hash(&f.id, values, &f.lineage),
        lineage: f.lineage.clone(),
    })
}

fn const_value(e: &Expr) -> Result<Expr, GroundError> {
    match evaluate::eval(e, &evaluate::Env::new())? {
        evaluate::Value::Int(v) => Ok(Expr::Int(v)),
        evaluate::Value::Rat(v) => Ok(Expr::Rat(v)),
        _ => Err(GroundError::Eval(EvalError::Type("domain bound must be numeric".into()))),
    }
}

fn domain_empty(lo: &Expr, hi: &Expr) -> bool {
    let as_rat = |e: &Expr| match e {
        Expr::Int(v) => num_rational::BigRational::from_integer(v.clone()),
        Expr::Rat(v) => v.clone(),
        _ => unreachable!("const_value returns literals"),
    };
    as_rat(lo) > as_rat(hi)
}

struct Expander {
    used_names: BTreeSet<String>,
    fresh: Vec<VarDecl>,
    units: usize,
    cap: usize,
}

impl Expander {
    /// `stack` holds the enclosing forall index values, outermost first.
    fn expand(&mut self, e: &Expr, stack: &mut Vec<BigInt>) -> Result<Expr, GroundError> {
        match e {
            Expr::Int(_) | Expr::Rat(_) | Expr::Bool(_) | Expr::Var(_) => Ok(e.clone()),
            Expr::Apply(op, args) => {
                let expanded = args
                    .iter()
                    .map(|a| self.expand(a, stack))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Expr::Apply(*op, expanded))
            }
            Expr::SetOf(args) => {
                let expanded = args
                    .iter()
                    .map(|a| self.expand(a, stack))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Expr::SetOf(expanded))
            }
            Expr::Forall(binder, body) => {
                let lo = evaluate::eval_int(&binder.lo, &evaluate::Env::new())?;
                let hi = evaluate::eval_int(&binder.hi, &evaluate::Env::new())?;
                let mut conjuncts = Vec::new();
                let mut t = lo;
                while t <= hi {
                    self.units += 1;
                    if self.units > self.cap {
                        return Err(GroundError::BudgetExceeded(self.cap));
                    }
                    let instantiated = body.substitute(&binder.name, &Expr::Int(t.clone()));
                    stack.push(t.clone());
                    let expanded = self.expand(&instantiated, stack)?;
                    stack.pop();
                    conjuncts.push(expanded);
                    t += 1;
                }
                Ok(match conjuncts.len() {
                    0 => Expr::Bool(true),
                    1 => conjuncts.pop().expect("checked length"),
                    _ => Expr::Apply(OpKind::And, conjuncts),
                })
            }
            Expr::Exists(binders, body) => {
                let mut replaced = body.as_ref().clone();
                let mut all_nonempty = true;
                let mut decls = Vec::with_capacity(binders.len());
                for b in binders {
                    let lo = evaluate::eval_int(&b.lo, &evaluate::Env::new())?;
                    let hi = evaluate::eval_int(&b.hi, &evaluate::Env::new())?;
                    if lo > hi {
                        all_nonempty = false;
                        break;
                    }
                    let fresh_name = self.fresh_name(&b.name, stack);
                    decls.push(VarDecl {
                        name: fresh_name.clone(),
                        sort: Sort::Int,
                        domain: Some((Expr::Int(lo), Expr::Int(hi))),
                    });
                    replaced = replaced.substitute(&b.name, &Expr::Var(fresh_name));
                }
                if !all_nonempty {
                    // No witness can exist; the names reserved so far are
                    // discarded along with their declarations.
                    for d in &decls {
                        self.used_names.remove(&d.name);
                    }
                    return Ok(Expr::Bool(false));
                }
                self.fresh.extend(decls);
                self.expand(&replaced, stack)
            }
        }
    }

    /// `⟨binder⟩@⟨t1⟩[@⟨t2⟩…]` from the enclosing forall values; a bare
    /// binder name at the top level. `~k` disambiguates collisions between
    /// distinct exists nodes sharing a binder name.
    fn fresh_name(&mut self, binder: &str, stack: &[BigInt]) -> String {
        let mut base = binder.to_owned();
        for t in stack {
            base.push('@');
            base.push_str(&t.to_string());
        }
        let mut candidate = base.clone();
        let mut k = 2;
        while self.used_names.contains(&candidate) {
            candidate = format!("{base}~{k}");
            k += 1;
        }
        self.used_names.insert(candidate.clone());
        candidate
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Binder, Param};
    use super::*;

    fn coverage_family() -> ProbeFamily {
        // forall t in 1..x1: exists u1, uy in 0..x2:
        //   u1 ≤ cnt1 ∧ uy ≤ cnty ∧ u1 + y1·uy = t
        ProbeFamily {
            id: "coverage".into(),
            params: vec![
                Param { name: "x1".into(), lo: 1, hi: 12 },
                Param { name: "x2".into(), lo: 1, hi: 8 },
                Param { name: "y1".into(), lo: 2, hi: 7 },
            ],
            vars: vec![
                VarDecl {
                    name: "cnt1".into(),
                    sort: Sort::Int,
                    domain: Some((Expr::int(0), Expr::var("x2"))),
                },
                VarDecl {
                    name: "cnty".into(),
                    sort: Sort::Int,
                    domain: Some((Expr::int(0), Expr::var("x2"))),
                },
            ],
            constraints: vec![Expr::Forall(
                Box::new(Binder { name: "t".into(), lo: Expr::int(1), hi: Expr::var("x1") }),
                Box::new(Expr::Exists(
                    vec![
                        Binder { name: "u1".into(), lo: Expr::int(0), hi: Expr::var("x2") },
                        Binder { name: "uy".into(), lo: Expr::int(0), hi: Expr::var("x2") },
                    ],
                    Box::new(Expr::apply(
                        OpKind::And,
                        vec![
                            Expr::apply(OpKind::Le, vec![Expr::var("u1"), Expr::var("cnt1")]),
                            Expr::apply(OpKind::Le, vec![Expr::var("uy"), Expr::var("cnty")]),
                            Expr::apply(
                                OpKind::Eq,
                                vec![
                                    Expr::apply(
                                        OpKind::Add,
                                        vec![
                                            Expr::var("u1"),
                                            Expr::apply(
                                                OpKind::Mul,
                                                vec![Expr::var("y1"), Expr::var("uy")],
                                            ),
                                        ],
                                    ),
                                    Expr::var("t"),
                                ],
                            ),
                        ],
                    )),
                )),
            )],
            answer: Expr::var("cnty"),
            template: "cover?".into(),
            ..ProbeFamily::default()
        }
    }

    fn params(pairs: &[(&str, i64)]) -> BTreeMap<String, i64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn forall_exists_expansion_introduces_indexed_vars() {
        let f = coverage_family();
        let inst =
            ground_instance(&f, &params(&[("x1", 3), ("x2", 2), ("y1", 2)]), DEFAULT_GROUNDING_CAP)
                .unwrap();
        let names: Vec<&str> = inst.vars.iter().map(|v| v.name.as_str()).collect();
        for expected in ["u1@1", "u1@2", "u1@3", "uy@1", "uy@2", "uy@3"] {
            assert!(names.contains(&expected), "missing {expected} in {names:?}");
        }
        assert_eq!(inst.vars.len(), 8); // 2 declared + 6 skolem
        // 3 instantiations × 3 atoms, and-flattened into the constraint list.
        assert_eq!(inst.constraints.len(), 9);
        assert!(inst.constraints.iter().all(|c| !c.contains_quantifier()));
        // Domain bounds became literals.
        for v in &inst.vars {
            let (lo, hi) = v.domain.as_ref().unwrap();
            assert!(matches!(lo, Expr::Int(_)), "{v:?}");
            assert!(matches!(hi, Expr::Int(_)), "{v:?}");
        }
    }

    #[test]
    fn empty_forall_range_vanishes() {
        let mut f = coverage_family();
        f.constraints = vec![Expr::Forall(
            Box::new(Binder { name: "t".into(), lo: Expr::int(1), hi: Expr::int(0) }),
            Box::new(Expr::Bool(false)),
        )];
        let inst =
            ground_instance(&f, &params(&[("x1", 3), ("x2", 2), ("y1", 2)]), DEFAULT_GROUNDING_CAP)
                .unwrap();
        assert!(inst.constraints.is_empty());
    }

    #[test]
    fn empty_exists_range_grounds_to_false() {
        let mut f = coverage_family();
        f.constraints = vec![Expr::Exists(
            vec![Binder { name: "u".into(), lo: Expr::int(1), hi: Expr::int(0) }],
            Box::new(Expr::Bool(true)),
        )];
        let inst =
            ground_instance(&f, &params(&[("x1", 3), ("x2", 2), ("y1", 2)]), DEFAULT_GROUNDING_CAP)
                .unwrap();
        assert_eq!(inst.constraints, vec![Expr::Bool(false)]);
        assert_eq!(inst.vars.len(), 2); // no skolem vars kept
    }

    #[test]
    fn top_level_exists_keeps_bare_binder_names() {
        let mut f = coverage_family();
        f.constraints = vec![Expr::Exists(
            vec![Binder { name: "w".into(), lo: Expr::int(0), hi: Expr::var("x2") }],
            Box::new(Expr::apply(OpKind::Le, vec![Expr::var("w"), Expr::var("cnt1")])),
        )];
        let inst =
            ground_instance(&f, &params(&[("x1", 3), ("x2", 2), ("y1", 2)]), DEFAULT_GROUNDING_CAP)
                .unwrap();
        assert!(inst.vars.iter().any(|v| v.name == "w"));
    }

    #[test]
    fn colliding_binder_names_get_tilde_suffix() {
        let mut f = coverage_family();
        let ex = |rhs: Expr| {
            Expr::Exists(
                vec![Binder { name: "w".into(), lo: Expr::int(0), hi: Expr::int(5) }],
                Box::new(Expr::apply(OpKind::Le, vec![Expr::var("w"), rhs])),
            )
        };
        f.constraints = vec![ex(Expr::var("cnt1")), ex(Expr::var("cnty"))];
        let inst =
            ground_instance(&f, &params(&[("x1", 3), ("x2", 2), ("y1", 2)]), DEFAULT_GROUNDING_CAP)
                .unwrap();
        let names: Vec<&str> = inst.vars.iter().map(|v| v.name.as_str()).collect();
        assert!(names.contains(&"w"), "{names:?}");
        assert!(names.contains(&"w~2"), "{names:?}");
    }

    #[test]
    fn budget_and_domain_errors() {
        let f = coverage_family();
        let err = ground_instance(&f, &params(&[("x1", 1_000_000), ("x2", 2), ("y1", 2)]), 50)
            .unwrap_err();
        assert_eq!(err, GroundError::BudgetExceeded(50));
        let mut empty = coverage_family();
        empty.vars[0].domain = Some((Expr::int(5), Expr::var("x2")));
        let err =
            ground_instance(&empty, &params(&[("x1", 2), ("x2", 2), ("y1", 2)]), DEFAULT_GROUNDING_CAP)
                .unwrap_err();
        assert_eq!(err, GroundError::EmptyDomain("cnt1".into()));
        let err = ground_instance(&f, &params(&[("x1", 2)]), DEFAULT_GROUNDING_CAP).unwrap_err();
        assert!(matches!(err, GroundError::UnboundParam(_)));
    }

    #[test]
    fn hash_depends_on_id_params_and_lineage() {
        let values = params(&[("x1", 3), ("x2", 2)]);
        let h1 = instance_hash("fam", &values, &[]);
        assert_eq!(h1.len(), 16);
        assert_eq!(h1, instance_hash("fam", &values, &[]));
        assert_ne!(h1, instance_hash("fam2", &values, &[]));
        assert_ne!(h1, instance_hash("fam", &params(&[("x1", 3), ("x2", 3)]), &[]));
        let lineage = vec![LineageEntry {
            fingerprint: "0123456789abcdef".into(),
            kind: "conjoin".into(),
            semantics_changing: false,
        }];
        assert_ne!(h1, instance_hash("fam", &values, &lineage));
    }
}

//! Structural analyses over a normalized family: the variable/definition
//! dependency graph and per-constraint skeletons. Both feed the difficulty
//! descriptor.

use std::collections::{BTreeMap, BTreeSet};

use super::validate::{infer_sort, SortEnv};
use super::{Expr, Objective, OpKind, ProbeFamily, Sort, ANSWER_BINDING};

/// Dependency structure: undirected co-occurrence between decision variables
/// (existential binders included — they become decision variables at
/// grounding) and directed def-use edges into definitions and the answer
/// node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyGraph {
    pub nodes: BTreeSet<String>,
    /// Unordered pairs stored with the lexicographically smaller name first.
    pub cooccurrence: BTreeSet<(String, String)>,
    /// (read identifier, reader) — reader is a def name or `answer`.
    pub def_use: BTreeSet<(String, String)>,
    /// Edge count of the longest directed def-use path ending at `answer`.
    pub longest_to_answer: u64,
}

/// Boolean composition shape of one constraint. `not` is transparent and an
/// `ite` producing a numeric value stays inside its leaf; only boolean
/// structure counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Skeleton {
    Leaf,
    Conj(Vec<Skeleton>),
    Disj(Vec<Skeleton>),
    Cond(Box<Skeleton>, Box<Skeleton>, Box<Skeleton>),
    ForallBlock(Box<Skeleton>),
    ExistsBlock(Box<Skeleton>),
}

impl Skeleton {
    /// Leaf depth is 0; every structural node adds 1.
    pub fn depth(&self) -> u64 {
        match self {
            Skeleton::Leaf => 0,
            Skeleton::Conj(children) | Skeleton::Disj(children) => {
                1 + children.iter().map(Skeleton::depth).max().unwrap_or(0)
            }
            Skeleton::Cond(guard, then, els) => {
                1 + guard.depth().max(then.depth()).max(els.depth())
            }
            Skeleton::ForallBlock(body) | Skeleton::ExistsBlock(body) => 1 + body.depth(),
        }
    }

    pub fn leaf_count(&self) -> u64 {
        match self {
            Skeleton::Leaf => 1,
            Skeleton::Conj(children) | Skeleton::Disj(children) => {
                children.iter().map(Skeleton::leaf_count).sum()
            }
            Skeleton::Cond(guard, then, els) => {
                guard.leaf_count() + then.leaf_count() + els.leaf_count()
            }
            Skeleton::ForallBlock(body) | Skeleton::ExistsBlock(body) => body.leaf_count(),
        }
    }
}

pub fn analyze_structure(f: &ProbeFamily) -> (DependencyGraph, Vec<Skeleton>) {
    let graph = dependency_graph(f);
    let env = SortEnv::for_family(f).unwrap_or_default();
    let skeletons = f.constraints.iter().map(|c| skeleton_of(c, &env)).collect();
    (graph, skeletons)
}

fn dependency_graph(f: &ProbeFamily) -> DependencyGraph {
    let mut nodes: BTreeSet<String> = BTreeSet::new();
    for p in &f.params {
        nodes.insert(p.name.clone());
    }
    let var_names: BTreeSet<String> = f.vars.iter().map(|v| v.name.clone()).collect();
    nodes.extend(var_names.iter().cloned());
    let def_names: BTreeSet<String> = f.defs.iter().map(|d| d.name.clone()).collect();
    nodes.extend(def_names.iter().cloned());

    // Transitive decision-variable support of each def, in declaration order
    // (defs only reference earlier defs).
    let mut def_vars: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut def_use: BTreeSet<(String, String)> = BTreeSet::new();
    let mut longest: BTreeMap<String, u64> = BTreeMap::new();
    for d in &f.defs {
        let reads = d.body.free_idents();
        let mut support = BTreeSet::new();
        let mut depth = 0u64;
        for r in &reads {
            if var_names.contains(r) {
                support.insert(r.clone());
            }
            if let Some(inner) = def_vars.get(r) {
                support.extend(inner.iter().cloned());
            }
            def_use.insert((r.clone(), d.name.clone()));
            depth = depth.max(longest.get(r).copied().unwrap_or(0) + 1);
        }
        def_vars.insert(d.name.clone(), support);
        longest.insert(d.name.clone(), depth);
    }

    let answer_reads: Vec<String> = match &f.objective {
        Objective::Count(projection) => projection.clone(),
        _ => f.answer.free_idents(),
    };
    let mut longest_to_answer = 0u64;
    for r in &answer_reads {
        def_use.insert((r.clone(), ANSWER_BINDING.to_owned()));
        longest_to_answer = longest_to_answer.max(longest.get(r).copied().unwrap_or(0) + 1);
    }

    let mut cooccurrence: BTreeSet<(String, String)> = BTreeSet::new();
    for c in &f.constraints {
        let mut vars_here: BTreeSet<String> = BTreeSet::new();
        collect_decision_vars(c, &var_names, &def_vars, &mut Vec::new(), &mut vars_here);
        let list: Vec<&String> = vars_here.iter().collect();
        for i in 0..list.len() {
            for j in i + 1..list.len() {
                cooccurrence.insert((list[i].clone(), list[j].clone()));
            }
        }
        nodes.extend(vars_here);
    }

    DependencyGraph { nodes, cooccurrence, def_use, longest_to_answer }
}

/// Decision variables mentioned by `e`: declared variables, transitive var
/// support of referenced defs, and existential binders. Forall indices are
/// not decision variables.
fn collect_decision_vars(
    e: &Expr,
    var_names: &BTreeSet<String>,
    def_vars: &BTreeMap<String, BTreeSet<String>>,
    forall_indices: &mut Vec<String>,
    out: &mut BTreeSet<String>,
) {
    match e {
        Expr::Int(_) | Expr::Rat(_) | Expr::Bool(_) => {}
        Expr::Var(name) => {
            if forall_indices.iter().any(|i| i == name) {
                return;
            }
            if var_names.contains(name) {
                out.insert(name.clone());
            } else if let Some(support) = def_vars.get(name) {
                out.extend(support.iter().cloned());
            }
        }
        Expr::Apply(_, args) | Expr::SetOf(args) => {
            for a in args {
                collect_decision_vars(a, var_names, def_vars, forall_indices, out);
            }
        }
        Expr::Forall(binder, body) => {
            collect_decision_vars(&binder.lo, var_names, def_vars, forall_indices, out);
            collect_decision_vars(&binder.hi, var_names, def_vars, forall_indices, out);
            forall_indices.push(binder.name.clone());
            collect_decision_vars(body, var_names, def_vars, forall_indices, out);
            forall_indices.pop();
        }
        Expr::Exists(binders, body) => {
            for b in binders {
                collect_decision_vars(&b.lo, var_names, def_vars, forall_indices, out);
                collect_decision_vars(&b.hi, var_names, def_vars, forall_indices, out);
                out.insert(b.name.clone());
            }
            collect_decision_vars(body, var_names, def_vars, forall_indices, out);
        }
    }
}

fn skeleton_of(e: &Expr, env: &SortEnv) -> Skeleton {
    match e {
        Expr::Apply(OpKind::And, args) => {
            Skeleton::Conj(args.iter().map(|a| skeleton_of(a, env)).collect())
        }
        Expr::Apply(OpKind::Or, args) => {
            Skeleton::Disj(args.iter().map(|a| skeleton_of(a, env)).collect())
        }
        Expr::Apply(OpKind::Not, args) if args.len() == 1 => skeleton_of(&args[0], env),
        Expr::Apply(OpKind::Ite, args) if args.len() == 3 => {
            let boolean_branches = infer_sort(&args[1], env).map(|s| s == Sort::Bool);
            if boolean_branches.unwrap_or(false) {
                Skeleton::Cond(
                    Box::new(skeleton_of(&args[0], env)),
                    Box::new(skeleton_of(&args[1], env)),
                    Box::new(skeleton_of(&args[2], env)),
                )
            } else {
                Skeleton::Leaf
            }
        }
        Expr::Forall(binder, body) => {
            let inner = env.extended(&binder.name, Sort::Int);
            Skeleton::ForallBlock(Box::new(skeleton_of(body, &inner)))
        }
        Expr::Exists(binders, body) => {
            let mut inner = env.clone();
            for b in binders {
                inner = inner.extended(&b.name, Sort::Int);
            }
            Skeleton::ExistsBlock(Box::new(skeleton_of(body, &inner)))
        }
        _ => Skeleton::Leaf,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Binder, Def, Param, VarDecl};
    use super::*;

    fn int_var(name: &str, lo: i64, hi: i64) -> VarDecl {
        VarDecl { name: name.into(), sort: Sort::Int, domain: Some((Expr::int(lo), Expr::int(hi))) }
    }

    fn eq(l: Expr, r: Expr) -> Expr {
        Expr::apply(OpKind::Eq, vec![l, r])
    }

    #[test]
    fn pair_sum_graph_and_leaves() {
        let f = ProbeFamily {
            vars: vec![int_var("a", 0, 9), int_var("b", 0, 9)],
            constraints: vec![
                eq(Expr::apply(OpKind::Add, vec![Expr::var("a"), Expr::var("b")]), Expr::int(10)),
                Expr::apply(OpKind::Ge, vec![Expr::var("a"), Expr::int(2)]),
                Expr::apply(OpKind::Ge, vec![Expr::var("b"), Expr::int(3)]),
            ],
            answer: Expr::var("a"),
            ..ProbeFamily::default()
        };
        let (graph, skeletons) = analyze_structure(&f);
        assert_eq!(graph.cooccurrence.len(), 1);
        assert!(graph.cooccurrence.contains(&("a".into(), "b".into())));
        assert_eq!(graph.longest_to_answer, 1);
        assert_eq!(skeletons.len(), 3);
        assert!(skeletons.iter().all(|s| *s == Skeleton::Leaf));
        assert!(skeletons.iter().all(|s| s.depth() == 0 && s.leaf_count() == 1));
    }

    #[test]
    fn def_chain_lengthens_answer_path() {
        // a -> m1 -> m2, answer reads m2: 3 edges.
        let f = ProbeFamily {
            params: vec![Param { name: "a".into(), lo: 1, hi: 5 }],
            defs: vec![
                Def {
                    name: "m1".into(),
                    body: Expr::apply(OpKind::Mul, vec![Expr::var("a"), Expr::int(2)]),
                },
                Def {
                    name: "m2".into(),
                    body: Expr::apply(OpKind::Add, vec![Expr::var("m1"), Expr::int(1)]),
                },
            ],
            answer: Expr::var("m2"),
            ..ProbeFamily::default()
        };
        let (graph, _) = analyze_structure(&f);
        assert_eq!(graph.longest_to_answer, 3);
        assert!(graph.def_use.contains(&("a".into(), "m1".into())));
        assert!(graph.def_use.contains(&("m2".into(), "answer".into())));
    }

    #[test]
    fn defs_expand_transitively_for_coupling() {
        // gap reads a and b; constraint over gap couples {a,b}.
        let f = ProbeFamily {
            vars: vec![int_var("a", 0, 9), int_var("b", 0, 9)],
            defs: vec![Def {
                name: "gap".into(),
                body: Expr::apply(OpKind::Sub, vec![Expr::var("a"), Expr::var("b")]),
            }],
            constraints: vec![Expr::apply(OpKind::Ge, vec![Expr::var("gap"), Expr::int(1)])],
            answer: Expr::var("gap"),
            ..ProbeFamily::default()
        };
        let (graph, _) = analyze_structure(&f);
        assert!(graph.cooccurrence.contains(&("a".into(), "b".into())));
    }

    #[test]
    fn coverage_block_skeleton_and_binder_coupling() {
        // forall t: exists u1, uy: u1 ≤ cnt1 ∧ uy ≤ cnty ∧ u1 + y·uy = t
        let f = ProbeFamily {
            params: vec![
                Param { name: "x1".into(), lo: 1, hi: 12 },
                Param { name: "x2".into(), lo: 1, hi: 8 },
            ],
            vars: vec![int_var("cnt1", 0, 8), int_var("cnty", 0, 8)],
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
                            eq(
                                Expr::apply(
                                    OpKind::Add,
                                    vec![
                                        Expr::var("u1"),
                                        Expr::apply(OpKind::Mul, vec![Expr::int(5), Expr::var("uy")]),
                                    ],
                                ),
                                Expr::var("t"),
                            ),
                        ],
                    )),
                )),
            )],
            answer: Expr::var("cnty"),
            ..ProbeFamily::default()
        };
        let (graph, skeletons) = analyze_structure(&f);
        assert!(graph.cooccurrence.contains(&("cnt1".into(), "u1".into())));
        assert!(graph.cooccurrence.contains(&("cnty".into(), "uy".into())));
        // 4 decision names → 6 unordered pairs, all sharing the constraint.
        assert_eq!(graph.cooccurrence.len(), 6);
        assert_eq!(skeletons.len(), 1);
        match &skeletons[0] {
            Skeleton::ForallBlock(inner) => match inner.as_ref() {
                Skeleton::ExistsBlock(body) => match body.as_ref() {
                    Skeleton::Conj(leaves) => assert_eq!(leaves.len(), 3),
                    other => panic!("expected conj, got {other:?}"),
                },
                other => panic!("expected exists block, got {other:?}"),
            },
            other => panic!("expected forall block, got {other:?}"),
        }
        assert_eq!(skeletons[0].depth(), 3);
        assert_eq!(skeletons[0].leaf_count(), 3);
    }

    #[test]
    fn numeric_ite_stays_leaf_boolean_ite_counts() {
        let f = ProbeFamily {
            vars: vec![
                VarDecl { name: "p".into(), sort: Sort::Bool, domain: None },
                int_var("x", 0, 5),
            ],
            constraints: vec![
                // numeric ite inside a comparison: leaf
                eq(
                    Expr::apply(OpKind::Ite, vec![Expr::var("p"), Expr::int(1), Expr::int(0)]),
                    Expr::int(1),
                ),
                // boolean ite: Cond node
                Expr::apply(
                    OpKind::Ite,
                    vec![
                        Expr::var("p"),
                        Expr::apply(OpKind::Ge, vec![Expr::var("x"), Expr::int(2)]),
                        Expr::apply(OpKind::Le, vec![Expr::var("x"), Expr::int(1)]),
                    ],
                ),
            ],
            answer: Expr::var("x"),
            ..ProbeFamily::default()
        };
        let (_, skeletons) = analyze_structure(&f);
        assert_eq!(skeletons[0], Skeleton::Leaf);
        assert_eq!(skeletons[0].depth(), 0);
        match &skeletons[1] {
            Skeleton::Cond(..) => assert_eq!(skeletons[1].depth(), 1),
            other => panic!("expected cond, got {other:?}"),
        }
    }

    #[test]
    fn count_objective_reads_projection() {
        let f = ProbeFamily {
            vars: vec![int_var("d0", 0, 9)],
            objective: Objective::Count(vec!["d0".into()]),
            answer: Expr::Var(super::super::COUNT_SYMBOL.into()),
            ..ProbeFamily::default()
        };
        let (graph, _) = analyze_structure(&f);
        assert!(graph.def_use.contains(&("d0".into(), "answer".into())));
        assert_eq!(graph.longest_to_answer, 1);
    }
}

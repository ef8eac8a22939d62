//! Calibration operators: solution-shrinking refinements, structure-editing
//! rewrites, and axis-isolating traversal plans over the descriptor space.

use std::collections::BTreeSet;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evaluate::{brute_canonical, solution_set, BRUTE_FORCE_CAP};
use crate::ir::{
    normalize, validate_family, Def, Expr, LineageEntry, OpKind, ProbeFamily, Sort,
};
use crate::metrics::{compute_descriptor, StructuralDescriptor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OperatorSpec {
    /// Add one constraint; the solution set can only shrink.
    Conjoin { phi: Expr },
    /// Replace constraint `target` with a strictly stronger one.
    Tighten { target: usize, psi: Expr },
    /// Shrink one variable's domain.
    RestrictDomain { var: String, lo: Expr, hi: Expr },
    /// Wrap constraint `target` in a conditional: `(ite guard old else)`.
    Nest { target: usize, guard: Expr, els: Expr },
    /// Introduce a shared derived quantity and rewrite its occurrences in
    /// the target constraints.
    Couple { def: Def, targets: Vec<usize> },
    /// Split the named def into an intermediate plus a redefinition,
    /// lengthening the dependency chain without changing meaning.
    Chain { def_name: String, split: (Def, Def) },
    /// Replace constraint `target` with an equivalent reformulation over
    /// freshly introduced latent defs.
    RepShift { target: usize, defs: Vec<Def>, replacement: Expr },
}

impl OperatorSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            OperatorSpec::Conjoin { .. } => "conjoin",
            OperatorSpec::Tighten { .. } => "tighten",
            OperatorSpec::RestrictDomain { .. } => "restrict-domain",
            OperatorSpec::Nest { .. } => "nest",
            OperatorSpec::Couple { .. } => "couple",
            OperatorSpec::Chain { .. } => "chain",
            OperatorSpec::RepShift { .. } => "rep-shift",
        }
    }

    pub fn is_refinement(&self) -> bool {
        matches!(
            self,
            OperatorSpec::Conjoin { .. }
                | OperatorSpec::Tighten { .. }
                | OperatorSpec::RestrictDomain { .. }
        )
    }

    /// Nest and Couple may produce genuinely new probes; everything they
    /// touch must be re-verified downstream, so their lineage entries are
    /// flagged. Chain and RepShift are equivalence-checked at apply time.
    pub fn semantics_changing(&self) -> bool {
        matches!(self, OperatorSpec::Nest { .. } | OperatorSpec::Couple { .. })
    }
}

/// 16-hex-digit digest of the canonical printed form.
pub fn fingerprint(op: &OperatorSpec) -> String {
    let digest = Sha256::digest(crate::dsl::print_op(op).as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum OpError {
    #[error("unknown target: {0}")]
    UnknownTarget(String),
    #[error("identifier `{0}` is already declared")]
    FreshnessViolation(String),
    #[error("rewrite is not projection-equivalent: {0}")]
    NonEquivalentRewrite(String),
    #[error("cannot isolate the {0} axis with the given operator pool: {1}")]
    IsolationImpossible(&'static str, String),
    #[error("{0} is not a {1} operator")]
    WrongClass(&'static str, &'static str),
    #[error("operator produced an invalid family: {0}")]
    InvalidResult(String),
}

pub fn apply_refinement(f: &ProbeFamily, op: &OperatorSpec) -> Result<ProbeFamily, OpError> {
    if !op.is_refinement() {
        return Err(OpError::WrongClass(op.kind_name(), "refinement"));
    }
    apply_operator(f, op)
}

pub fn apply_restructuring(f: &ProbeFamily, op: &OperatorSpec) -> Result<ProbeFamily, OpError> {
    if op.is_refinement() {
        return Err(OpError::WrongClass(op.kind_name(), "restructuring"));
    }
    apply_operator(f, op)
}

pub fn apply_operator(f: &ProbeFamily, op: &OperatorSpec) -> Result<ProbeFamily, OpError> {
    let declared: BTreeSet<&str> = f
        .params
        .iter()
        .map(|p| p.name.as_str())
        .chain(f.vars.iter().map(|v| v.name.as_str()))
        .chain(f.defs.iter().map(|d| d.name.as_str()))
        .collect();
    let check_idents = |e: &Expr| -> Result<(), OpError> {
        for name in e.free_idents() {
            if !declared.contains(name.as_str()) {
                return Err(OpError::UnknownTarget(format!("identifier `{name}`")));
            }
        }
        Ok(())
    };
    let check_target = |i: usize| -> Result<(), OpError> {
        if i < f.constraints.len() {
            Ok(())
        } else {
            Err(OpError::UnknownTarget(format!(
                "constraint index {i} (family has {})",
                f.constraints.len()
            )))
        }
    };

    let mut out = f.clone();
    match op {
        OperatorSpec::Conjoin { phi } => {
            check_idents(phi)?;
            out.constraints.push(phi.clone());
        }
        OperatorSpec::Tighten { target, psi } => {
            check_target(*target)?;
            check_idents(psi)?;
            out.constraints[*target] = psi.clone();
        }
        OperatorSpec::RestrictDomain { var, lo, hi } => {
            check_idents(lo)?;
            check_idents(hi)?;
            let decl = out
                .vars
                .iter_mut()
                .find(|v| v.name == *var)
                .ok_or_else(|| OpError::UnknownTarget(format!("variable `{var}`")))?;
            if decl.sort == Sort::Bool {
                return Err(OpError::UnknownTarget(format!("`{var}` has no numeric domain")));
            }
            decl.domain = Some((lo.clone(), hi.clone()));
        }
        OperatorSpec::Nest { target, guard, els } => {
            check_target(*target)?;
            check_idents(guard)?;
            check_idents(els)?;
            let old = out.constraints[*target].clone();
            out.constraints[*target] =
                Expr::apply(OpKind::Ite, vec![guard.clone(), old, els.clone()]);
        }
        OperatorSpec::Couple { def, targets } => {
            if declared.contains(def.name.as_str()) {
                return Err(OpError::FreshnessViolation(def.name.clone()));
            }
            check_idents(&def.body)?;
            let pattern = crate::ir::normalize_expr(&def.body);
            for &i in targets {
                check_target(i)?;
                let rewritten = replace_subexpr(
                    &crate::ir::normalize_expr(&out.constraints[i]),
                    &pattern,
                    &Expr::Var(def.name.clone()),
                );
                if rewritten == crate::ir::normalize_expr(&out.constraints[i]) {
                    return Err(OpError::UnknownTarget(format!(
                        "constraint {i} does not contain the definition body"
                    )));
                }
                out.constraints[i] = rewritten;
            }
            out.defs.push(def.clone());
        }
        OperatorSpec::Chain { def_name, split } => {
            let idx = out
                .defs
                .iter()
                .position(|d| d.name == *def_name)
                .ok_or_else(|| OpError::UnknownTarget(format!("definition `{def_name}`")))?;
            let (inter, redef) = split;
            if declared.contains(inter.name.as_str()) {
                return Err(OpError::FreshnessViolation(inter.name.clone()));
            }
            if redef.name != *def_name {
                return Err(OpError::UnknownTarget(format!(
                    "split must redefine `{def_name}`, not `{}`",
                    redef.name
                )));
            }
            out.defs[idx].body = redef.body.clone();
            out.defs.insert(idx, inter.clone());
        }
        OperatorSpec::RepShift { target, defs, replacement } => {
            check_target(*target)?;
            let mut fresh = BTreeSet::new();
            for d in defs {
                if declared.contains(d.name.as_str()) || !fresh.insert(d.name.as_str()) {
                    return Err(OpError::FreshnessViolation(d.name.clone()));
                }
            }
            out.defs.extend(defs.iter().cloned());
            out.constraints[*target] = replacement.clone();
        }
    }

    let mut out = normalize(&out);
    let diagnostics = validate_family(&out);
    if let Some(d) = diagnostics.first() {
        return Err(OpError::InvalidResult(d.to_string()));
    }
    if matches!(op, OperatorSpec::Chain { .. } | OperatorSpec::RepShift { .. }) {
        check_equivalent(f, &out)?;
    }
    out.lineage.push(LineageEntry {
        fingerprint: fingerprint(op),
        kind: op.kind_name().to_string(),
        semantics_changing: op.semantics_changing(),
    });
    Ok(out)
}

/// Brute-force projection-equivalence audit on a small grounding. Tries the
/// parameter midpoint first, then the low corner; a family whose every
/// grounding exceeds the enumeration cap is accepted unaudited (nothing
/// small to sample).
fn check_equivalent(old: &ProbeFamily, new: &ProbeFamily) -> Result<(), OpError> {
    let onto: Vec<String> = old.vars.iter().map(|v| v.name.clone()).collect();
    let midpoint: std::collections::BTreeMap<String, i64> = old
        .params
        .iter()
        .map(|p| (p.name.clone(), ((p.lo as i128 + p.hi as i128) / 2) as i64))
        .collect();
    let low: std::collections::BTreeMap<String, i64> =
        old.params.iter().map(|p| (p.name.clone(), p.lo)).collect();
    let mut points = vec![midpoint];
    if points[0] != low {
        points.push(low);
    }
    for params in &points {
        let before = solution_set(old, params, &onto, BRUTE_FORCE_CAP);
        let after = solution_set(new, params, &onto, BRUTE_FORCE_CAP);
        let (Ok(before), Ok(after)) = (before, after) else { continue };
        if before != after {
            return Err(OpError::NonEquivalentRewrite(format!(
                "solution sets over {{{}}} differ at {:?} ({} vs {} solutions)",
                onto.join(", "),
                params,
                before.len(),
                after.len()
            )));
        }
        let (Ok(a), Ok(b)) =
            (brute_canonical(old, params, BRUTE_FORCE_CAP), brute_canonical(new, params, BRUTE_FORCE_CAP))
        else {
            continue;
        };
        if a != b {
            return Err(OpError::NonEquivalentRewrite(format!(
                "canonical answers differ at {params:?}"
            )));
        }
        return Ok(());
    }
    Ok(())
}

/// Bottom-up syntactic replacement of every occurrence of `pattern`.
fn replace_subexpr(e: &Expr, pattern: &Expr, with: &Expr) -> Expr {
    if e == pattern {
        return with.clone();
    }
    match e {
        Expr::Apply(op, args) => Expr::Apply(
            *op,
            args.iter().map(|a| replace_subexpr(a, pattern, with)).collect(),
        ),
        Expr::SetOf(args) => {
            Expr::SetOf(args.iter().map(|a| replace_subexpr(a, pattern, with)).collect())
        }
        Expr::Forall(b, body) => {
            Expr::Forall(b.clone(), Box::new(replace_subexpr(body, pattern, with)))
        }
        Expr::Exists(bs, body) => {
            Expr::Exists(bs.clone(), Box::new(replace_subexpr(body, pattern, with)))
        }
        _ => e.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    C,
    D,
    Kappa,
    Ell,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::C => "c",
            Axis::D => "d",
            Axis::Kappa => "kappa",
            Axis::Ell => "ell",
        }
    }

    pub fn parse(s: &str) -> Option<Axis> {
        match s {
            "c" => Some(Axis::C),
            "d" => Some(Axis::D),
            "kappa" => Some(Axis::Kappa),
            "ell" => Some(Axis::Ell),
            _ => None,
        }
    }
}

/// One step's movement is admissible when the chosen axis strictly grows
/// and the others hold still: exactly unchanged for c-plans, no growth for
/// the rest. κ-plans exempt c, since any constraint that couples two
/// variables is itself one new conjunct.
fn isolates(axis: Axis, from: &StructuralDescriptor, to: &StructuralDescriptor) -> bool {
    match axis {
        Axis::C => {
            to.c > from.c && to.d == from.d && to.kappa == from.kappa && to.ell == from.ell
        }
        Axis::D => {
            to.d > from.d && to.c <= from.c && to.kappa <= from.kappa && to.ell <= from.ell
        }
        Axis::Kappa => to.kappa > from.kappa && to.d <= from.d && to.ell <= from.ell,
        Axis::Ell => {
            to.ell > from.ell && to.c <= from.c && to.d <= from.d && to.kappa <= from.kappa
        }
    }
}

/// Greedy single-use plan: at each step, the first unused pool operator
/// that both applies and isolates the axis is committed.
pub fn plan_traversal(
    f: &ProbeFamily,
    axis: Axis,
    steps: usize,
    pool: &[OperatorSpec],
) -> Result<Vec<ProbeFamily>, OpError> {
    let mut used = vec![false; pool.len()];
    let mut current = normalize(f);
    let mut theta = compute_descriptor(&current, None);
    let mut plan = Vec::with_capacity(steps);
    for step in 0..steps {
        let mut advanced = false;
        for (i, op) in pool.iter().enumerate() {
            if used[i] {
                continue;
            }
            let Ok(candidate) = apply_operator(&current, op) else { continue };
            let candidate_theta = compute_descriptor(&candidate, None);
            if isolates(axis, &theta, &candidate_theta) {
                used[i] = true;
                current = candidate;
                theta = candidate_theta;
                plan.push(current.clone());
                advanced = true;
                break;
            }
        }
        if !advanced {
            return Err(OpError::IsolationImpossible(
                axis.name(),
                format!("no unused operator advances step {} of {steps}", step + 1),
            ));
        }
    }
    Ok(plan)
}

//! Well-formedness and typing checks. Never aborts: every finding is
//! returned as a [`Diagnostic`] with a stable code and a structural path.

use std::collections::BTreeMap;

use num_traits::Zero;

use super::{
    Binder, Diagnostic, DiagnosticCode, Expr, Objective, OpKind, ProbeFamily, Sort, COUNT_SYMBOL,
};

/// Words that cannot be declared as parameter/variable/definition names:
/// literals, structural heads, operator symbols, and the answer node.
pub const RESERVED_WORDS: &[&str] = &[
    "true", "false", "answer", "set", "forall", "exists", "div", "mod", "abs", "min", "max",
    "and", "or", "not", "ite", "minimize", "maximize", "count",
];

pub fn is_reserved(name: &str) -> bool {
    RESERVED_WORDS.contains(&name) || name == COUNT_SYMBOL
}

/// Name → sort map for one family (params are Int, defs get inferred sorts).
#[derive(Debug, Clone, Default)]
pub struct SortEnv {
    map: BTreeMap<String, Sort>,
}

impl SortEnv {
    /// Builds the environment for a family that already validated cleanly.
    pub fn for_family(f: &ProbeFamily) -> Result<SortEnv, Diagnostic> {
        let mut env = SortEnv::default();
        for p in &f.params {
            env.map.insert(p.name.clone(), Sort::Int);
        }
        for v in &f.vars {
            env.map.insert(v.name.clone(), v.sort);
        }
        for d in &f.defs {
            let sort = infer_sort(&d.body, &env)?;
            env.map.insert(d.name.clone(), sort);
        }
        Ok(env)
    }

    pub fn sort_of(&self, name: &str) -> Option<Sort> {
        self.map.get(name).copied()
    }

    /// New environment with one extra binding (quantifier index scope).
    pub fn extended(&self, name: &str, sort: Sort) -> SortEnv {
        let mut map = self.map.clone();
        map.insert(name.to_owned(), sort);
        SortEnv { map }
    }
}

/// Sort of an expression under `env`; first typing problem aborts.
/// Positional rules (quantifier placement, set placement) are not enforced
/// here — this is the shared typing core for passes that run after
/// validation.
pub fn infer_sort(e: &Expr, env: &SortEnv) -> Result<Sort, Diagnostic> {
    let fail = |msg: String| Diagnostic::new(DiagnosticCode::TypeMismatch, "<expr>", msg);
    match e {
        Expr::Int(_) => Ok(Sort::Int),
        Expr::Rat(_) => Ok(Sort::Rat),
        Expr::Bool(_) => Ok(Sort::Bool),
        Expr::Var(name) => env.sort_of(name).ok_or_else(|| {
            Diagnostic::new(
                DiagnosticCode::UnknownIdentifier,
                "<expr>",
                format!("unknown identifier `{name}`"),
            )
        }),
        Expr::Apply(op, args) => {
            let sorts = args
                .iter()
                .map(|a| infer_sort(a, env))
                .collect::<Result<Vec<_>, _>>()?;
            apply_sort(*op, &sorts).map_err(fail)
        }
        Expr::Forall(binder, body) => {
            let inner = env.extended(&binder.name, Sort::Int);
            infer_sort(body, &inner)?;
            Ok(Sort::Bool)
        }
        Expr::Exists(binders, body) => {
            let mut inner = env.clone();
            for b in binders {
                inner = inner.extended(&b.name, Sort::Int);
            }
            infer_sort(body, &inner)?;
            Ok(Sort::Bool)
        }
        Expr::SetOf(_) => Err(fail("set expression has no scalar sort".into())),
    }
}

/// Result sort of `op` applied to argument sorts; Err carries the message.
fn apply_sort(op: OpKind, args: &[Sort]) -> Result<Sort, String> {
    let (lo, hi) = op.arity();
    if args.len() < lo || hi.is_some_and(|h| args.len() > h) {
        return Err(format!(
            "`{}` expects {} argument(s), got {}",
            op.symbol(),
            match hi {
                Some(h) if h == lo => lo.to_string(),
                Some(h) => format!("{lo}..{h}"),
                None => format!("at least {lo}"),
            },
            args.len()
        ));
    }
    let all_numeric = args.iter().all(|s| *s != Sort::Bool);
    let join = if args.contains(&Sort::Rat) { Sort::Rat } else { Sort::Int };
    match op {
        OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Min | OpKind::Max | OpKind::Abs => {
            if all_numeric {
                Ok(join)
            } else {
                Err(format!("`{}` requires numeric arguments", op.symbol()))
            }
        }
        OpKind::Div => {
            if all_numeric {
                Ok(join)
            } else {
                Err("`div` requires numeric arguments".into())
            }
        }
        OpKind::Mod => {
            if args.iter().all(|s| *s == Sort::Int) {
                Ok(Sort::Int)
            } else {
                Err("`mod` requires integer arguments".into())
            }
        }
        OpKind::Eq | OpKind::Ne | OpKind::Lt | OpKind::Le | OpKind::Gt | OpKind::Ge => {
            if all_numeric {
                Ok(Sort::Bool)
            } else {
                Err(format!("`{}` compares numeric values", op.symbol()))
            }
        }
        OpKind::And | OpKind::Or => {
            if args.iter().all(|s| *s == Sort::Bool) {
                Ok(Sort::Bool)
            } else {
                Err(format!("`{}` requires boolean arguments", op.symbol()))
            }
        }
        OpKind::Not => {
            if args[0] == Sort::Bool {
                Ok(Sort::Bool)
            } else {
                Err("`not` requires a boolean argument".into())
            }
        }
        OpKind::Ite => {
            if args[0] != Sort::Bool {
                Err("`ite` guard must be boolean".into())
            } else if args[1] == Sort::Bool && args[2] == Sort::Bool {
                Ok(Sort::Bool)
            } else if args[1] != Sort::Bool && args[2] != Sort::Bool {
                Ok(if args[1] == Sort::Rat || args[2] == Sort::Rat {
                    Sort::Rat
                } else {
                    Sort::Int
                })
            } else {
                Err("`ite` branches must share a sort".into())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Def,
    Constraint,
    Objective,
    Answer,
    DomainBound,
}

#[derive(Debug, Clone)]
struct Ctx {
    mode: Mode,
    /// Quantifier node legal at this position (constraint top level, under
    /// and/or, inside a quantifier body).
    quant_ok: bool,
    in_exists: bool,
    /// Innermost-last stack of quantifier-bound names; `true` marks a forall
    /// index (referencable from quantifier bounds), `false` an exists binder.
    bound: Vec<(String, bool)>,
    set_ok: bool,
}

impl Ctx {
    fn top(mode: Mode) -> Ctx {
        Ctx {
            mode,
            quant_ok: mode == Mode::Constraint,
            in_exists: false,
            bound: Vec::new(),
            set_ok: false,
        }
    }

    fn child(&self, quant_ok: bool) -> Ctx {
        Ctx { quant_ok: quant_ok && self.quant_ok, set_ok: false, ..self.clone() }
    }
}

struct Checker<'f> {
    family: &'f ProbeFamily,
    env: BTreeMap<String, Sort>,
    diags: Vec<Diagnostic>,
}

pub fn validate_family(f: &ProbeFamily) -> Vec<Diagnostic> {
    let mut ck = Checker { family: f, env: BTreeMap::new(), diags: Vec::new() };
    ck.declare_params_and_vars();
    ck.check_defs();
    ck.check_constraints();
    ck.check_objective();
    ck.check_answer();
    ck.check_bindings();
    ck.check_template();
    ck.diags
}

impl<'f> Checker<'f> {
    fn push(&mut self, code: DiagnosticCode, path: impl Into<String>, msg: impl Into<String>) {
        self.diags.push(Diagnostic::new(code, path, msg));
    }

    fn declare_name(&mut self, name: &str, sort: Sort, path: &str) {
        if is_reserved(name) {
            self.push(
                DiagnosticCode::ReservedIdentifier,
                path,
                format!("`{name}` is a reserved word"),
            );
            return;
        }
        if self.env.contains_key(name) {
            self.push(
                DiagnosticCode::DuplicateIdentifier,
                path,
                format!("`{name}` is declared more than once"),
            );
            return;
        }
        self.env.insert(name.to_owned(), sort);
    }

    fn declare_params_and_vars(&mut self) {
        for (i, p) in self.family.params.iter().enumerate() {
            let path = format!("params[{i}]");
            self.declare_name(&p.name, Sort::Int, &path);
            if p.lo > p.hi {
                self.push(
                    DiagnosticCode::InvalidSamplingRange,
                    &path,
                    format!("sampling range ({}, {}) is empty", p.lo, p.hi),
                );
            }
        }
        for (i, v) in self.family.vars.iter().enumerate() {
            self.declare_name(&v.name, v.sort, &format!("vars[{i}]"));
        }
        // Domain bounds checked after all declarations so a bound may
        // reference any parameter regardless of order.
        for (i, v) in self.family.vars.iter().enumerate() {
            let path = format!("vars[{i}]");
            match (&v.domain, v.sort) {
                (None, Sort::Int | Sort::Rat) => {
                    self.push(
                        DiagnosticCode::MissingDomain,
                        &path,
                        format!("`{}` needs a (lo hi) domain", v.name),
                    );
                }
                (Some(_), Sort::Bool) => {
                    self.push(
                        DiagnosticCode::UnexpectedDomain,
                        &path,
                        format!("boolean `{}` cannot take a domain", v.name),
                    );
                }
                (Some((lo, hi)), sort) => {
                    for (which, bound) in [("lo", lo), ("hi", hi)] {
                        let bpath = format!("{path}.{which}");
                        let got = self.check_expr(bound, &bpath, &Ctx::top(Mode::DomainBound));
                        match (sort, got) {
                            (Sort::Int, Some(Sort::Rat)) => self.push(
                                DiagnosticCode::TypeMismatch,
                                &bpath,
                                "integer variable bound must be integer-sorted",
                            ),
                            (_, Some(Sort::Bool)) => self.push(
                                DiagnosticCode::TypeMismatch,
                                &bpath,
                                "domain bound must be numeric",
                            ),
                            _ => {}
                        }
                    }
                }
                (None, Sort::Bool) => {}
            }
        }
    }

    fn check_defs(&mut self) {
        for (i, d) in self.family.defs.iter().enumerate() {
            let path = format!("defs[{i}]");
            let sort = self.check_expr(&d.body, &format!("{path}.body"), &Ctx::top(Mode::Def));
            // Declared after its body is checked: self/forward references
            // resolve as unknown, enforcing acyclicity by construction.
            self.declare_name(&d.name, sort.unwrap_or(Sort::Int), &path);
        }
    }

    fn check_constraints(&mut self) {
        for (i, c) in self.family.constraints.iter().enumerate() {
            let path = format!("constraints[{i}]");
            if let Some(sort) = self.check_expr(c, &path, &Ctx::top(Mode::Constraint)) {
                if sort != Sort::Bool {
                    self.push(
                        DiagnosticCode::TypeMismatch,
                        &path,
                        format!("constraint must be boolean, found {sort}"),
                    );
                }
            }
        }
    }

    fn check_objective(&mut self) {
        match &self.family.objective {
            Objective::None => {}
            Objective::Minimize(e) | Objective::Maximize(e) => {
                if let Some(sort) = self.check_expr(e, "objective", &Ctx::top(Mode::Objective)) {
                    if sort != Sort::Int {
                        self.push(
                            DiagnosticCode::TypeMismatch,
                            "objective",
                            format!("objective must be integer-sorted, found {sort}"),
                        );
                    }
                }
            }
            Objective::Count(projection) => {
                if projection.is_empty() {
                    self.push(
                        DiagnosticCode::BadProjection,
                        "objective",
                        "count projection must name at least one variable",
                    );
                }
                let mut seen = Vec::new();
                for name in projection {
                    if self.family.var(name).is_none() {
                        self.push(
                            DiagnosticCode::BadProjection,
                            "objective",
                            format!("`{name}` is not a declared variable"),
                        );
                    } else if seen.contains(&name) {
                        self.push(
                            DiagnosticCode::BadProjection,
                            "objective",
                            format!("`{name}` repeated in projection"),
                        );
                    }
                    seen.push(name);
                }
            }
        }
    }

    fn check_answer(&mut self) {
        let answer = &self.family.answer;
        if matches!(self.family.objective, Objective::Count(_)) {
            if *answer != Expr::Var(COUNT_SYMBOL.to_owned()) {
                self.push(
                    DiagnosticCode::CountAnswerMismatch,
                    "answer",
                    format!("count objectives require the answer `{COUNT_SYMBOL}`"),
                );
            }
            return;
        }
        let mut ctx = Ctx::top(Mode::Answer);
        ctx.set_ok = true;
        match answer {
            Expr::SetOf(elements) if elements.is_empty() => {
                self.push(DiagnosticCode::WrongArity, "answer", "set answer needs ≥1 element");
            }
            _ => {
                self.check_expr(answer, "answer", &ctx);
            }
        }
    }

    fn check_bindings(&mut self) {
        let mut seen: Vec<&str> = Vec::new();
        for (i, (formal, phrase)) in self.family.bindings.iter().enumerate() {
            let path = format!("bindings[{i}]");
            if formal != super::ANSWER_BINDING && !self.env.contains_key(formal) {
                self.push(
                    DiagnosticCode::BindingUnknownFormal,
                    &path,
                    format!("`{formal}` names no declared identifier"),
                );
            }
            if seen.contains(&formal.as_str()) {
                self.push(
                    DiagnosticCode::DuplicateIdentifier,
                    &path,
                    format!("binding for `{formal}` repeated"),
                );
            }
            seen.push(formal);
            if phrase.trim().is_empty() {
                self.push(DiagnosticCode::EmptyBindingPhrase, &path, "binding phrase is empty");
            }
        }
    }

    fn check_template(&mut self) {
        for item in scan_template(&self.family.template) {
            match item {
                Ok(TemplatePiece::Literal(_)) => {}
                Ok(TemplatePiece::Placeholder(name)) => {
                    if !self.env.contains_key(&name) {
                        self.push(
                            DiagnosticCode::UnknownIdentifier,
                            "template",
                            format!("placeholder `{{{name}}}` names no declared identifier"),
                        );
                    }
                }
                Err(msg) => {
                    self.push(DiagnosticCode::MalformedTemplate, "template", msg);
                }
            }
        }
    }

    /// Best-effort sort of `e`, pushing diagnostics as it goes. `None` means
    /// the sort could not be established (a diagnostic was pushed).
    fn check_expr(&mut self, e: &Expr, path: &str, ctx: &Ctx) -> Option<Sort> {
        match e {
            Expr::Int(_) => Some(Sort::Int),
            Expr::Rat(_) => Some(Sort::Rat),
            Expr::Bool(_) => Some(Sort::Bool),
            Expr::Var(name) => self.check_var(name, path, ctx),
            Expr::Apply(op, args) => self.check_apply(*op, args, path, ctx),
            Expr::Forall(binder, body) => self.check_forall(binder, body, path, ctx),
            Expr::Exists(binders, body) => self.check_exists(binders, body, path, ctx),
            Expr::SetOf(elements) => {
                if !ctx.set_ok {
                    self.push(
                        DiagnosticCode::SetOutsideAnswer,
                        path,
                        "set expressions are only legal as the whole answer",
                    );
                    return None;
                }
                for (i, el) in elements.iter().enumerate() {
                    let epath = format!("{path}[{i}]");
                    if let Some(Sort::Bool) = self.check_expr(el, &epath, &ctx.child(false)) {
                        self.push(
                            DiagnosticCode::TypeMismatch,
                            &epath,
                            "set elements must be numeric",
                        );
                    }
                }
                None
            }
        }
    }

    fn check_var(&mut self, name: &str, path: &str, ctx: &Ctx) -> Option<Sort> {
        if name == COUNT_SYMBOL {
            self.push(
                DiagnosticCode::CountAnswerMismatch,
                path,
                format!("`{COUNT_SYMBOL}` is reserved for the answer of count objectives"),
            );
            return None;
        }
        if ctx.bound.iter().any(|(b, _)| b == name) {
            return Some(Sort::Int);
        }
        match ctx.mode {
            Mode::DomainBound => {
                if self.family.param(name).is_some() {
                    Some(Sort::Int)
                } else {
                    self.push(
                        DiagnosticCode::BadDomainReference,
                        path,
                        format!("domain bound may reference parameters only, found `{name}`"),
                    );
                    None
                }
            }
            _ => match self.env.get(name) {
                Some(sort) => Some(*sort),
                None => {
                    self.push(
                        DiagnosticCode::UnknownIdentifier,
                        path,
                        format!("unknown identifier `{name}`"),
                    );
                    None
                }
            },
        }
    }

    fn check_apply(&mut self, op: OpKind, args: &[Expr], path: &str, ctx: &Ctx) -> Option<Sort> {
        // Quantifiers stay legal under and/or only; every other operator
        // seals its arguments.
        let keep_quant = matches!(op, OpKind::And | OpKind::Or);
        let mut sorts = Vec::with_capacity(args.len());
        for (i, arg) in args.iter().enumerate() {
            sorts.push(self.check_expr(arg, &format!("{path}.{}[{i}]", op.symbol()), &ctx.child(keep_quant)));
        }
        if matches!(op, OpKind::Div | OpKind::Mod) && args.len() == 2 {
            let zero = match &args[1] {
                Expr::Int(v) => v.is_zero(),
                Expr::Rat(v) => v.is_zero(),
                _ => false,
            };
            if zero {
                self.push(
                    DiagnosticCode::DivisionByZeroLiteral,
                    path,
                    format!("`{}` by literal zero", op.symbol()),
                );
            }
        }
        let sorts = sorts.into_iter().collect::<Option<Vec<_>>>()?;
        match apply_sort(op, &sorts) {
            Ok(sort) => Some(sort),
            Err(msg) => {
                let (lo, hi) = op.arity();
                let code = if sorts.len() < lo || hi.is_some_and(|h| sorts.len() > h) {
                    DiagnosticCode::WrongArity
                } else {
                    DiagnosticCode::TypeMismatch
                };
                self.push(code, path, msg);
                None
            }
        }
    }

    fn quantifier_position_ok(&mut self, path: &str, ctx: &Ctx) -> bool {
        let code = match ctx.mode {
            Mode::Def => Some(DiagnosticCode::QuantifierInDef),
            Mode::Answer => Some(DiagnosticCode::QuantifierInAnswer),
            Mode::Constraint if ctx.quant_ok => None,
            _ => Some(DiagnosticCode::IllegalQuantifierPosition),
        };
        match code {
            None => true,
            Some(code) => {
                self.push(code, path, "quantifier not allowed in this position");
                false
            }
        }
    }

    fn check_bound(&mut self, bound: &Expr, path: &str, ctx: &Ctx) {
        // Bounds are integer expressions over parameters and enclosing
        // forall indices only — walked with a dedicated resolver.
        let sort = self.check_bound_expr(bound, path, ctx);
        if let Some(sort) = sort {
            if sort != Sort::Int {
                self.push(DiagnosticCode::TypeMismatch, path, "quantifier bound must be integer");
            }
        }
    }

    fn check_bound_expr(&mut self, e: &Expr, path: &str, ctx: &Ctx) -> Option<Sort> {
        match e {
            Expr::Int(_) => Some(Sort::Int),
            Expr::Rat(_) => Some(Sort::Rat),
            Expr::Bool(_) => Some(Sort::Bool),
            Expr::Var(name) => {
                let is_forall_index =
                    ctx.bound.iter().rev().any(|(b, fa)| b == name && *fa);
                if is_forall_index || self.family.param(name).is_some() {
                    Some(Sort::Int)
                } else {
                    self.push(
                        DiagnosticCode::BadQuantifierBound,
                        path,
                        format!(
                            "bound may reference parameters and outer indices only, found `{name}`"
                        ),
                    );
                    None
                }
            }
            Expr::Apply(op, args) => {
                let sorts = args
                    .iter()
                    .enumerate()
                    .map(|(i, a)| self.check_bound_expr(a, &format!("{path}[{i}]"), ctx))
                    .collect::<Option<Vec<_>>>()?;
                match apply_sort(*op, &sorts) {
                    Ok(sort) => Some(sort),
                    Err(msg) => {
                        self.push(DiagnosticCode::TypeMismatch, path, msg);
                        None
                    }
                }
            }
            Expr::Forall(..) | Expr::Exists(..) | Expr::SetOf(_) => {
                self.push(
                    DiagnosticCode::BadQuantifierBound,
                    path,
                    "bound must be a plain integer expression",
                );
                None
            }
        }
    }

    fn check_forall(&mut self, binder: &Binder, body: &Expr, path: &str, ctx: &Ctx) -> Option<Sort> {
        if !self.quantifier_position_ok(path, ctx) {
            return None;
        }
        if ctx.in_exists {
            self.push(
                DiagnosticCode::IllegalQuantifierAlternation,
                path,
                "forall may not appear under exists",
            );
            return None;
        }
        self.check_bound(&binder.lo, &format!("{path}.lo"), ctx);
        self.check_bound(&binder.hi, &format!("{path}.hi"), ctx);
        let mut inner = ctx.clone();
        inner.bound.push((binder.name.clone(), true));
        inner.quant_ok = true;
        let body_sort = self.check_expr(body, &format!("{path}.body"), &inner);
        if let Some(sort) = body_sort {
            if sort != Sort::Bool {
                self.push(DiagnosticCode::TypeMismatch, path, "quantifier body must be boolean");
            }
        }
        Some(Sort::Bool)
    }

    fn check_exists(
        &mut self,
        binders: &[Binder],
        body: &Expr,
        path: &str,
        ctx: &Ctx,
    ) -> Option<Sort> {
        if !self.quantifier_position_ok(path, ctx) {
            return None;
        }
        if binders.is_empty() {
            self.push(DiagnosticCode::WrongArity, path, "exists needs at least one binder");
            return None;
        }
        for (i, b) in binders.iter().enumerate() {
            self.check_bound(&b.lo, &format!("{path}.binders[{i}].lo"), ctx);
            self.check_bound(&b.hi, &format!("{path}.binders[{i}].hi"), ctx);
        }
        let mut inner = ctx.clone();
        for b in binders {
            inner.bound.push((b.name.clone(), false));
        }
        inner.in_exists = true;
        inner.quant_ok = true;
        let body_sort = self.check_expr(body, &format!("{path}.body"), &inner);
        if let Some(sort) = body_sort {
            if sort != Sort::Bool {
                self.push(DiagnosticCode::TypeMismatch, path, "quantifier body must be boolean");
            }
        }
        Some(Sort::Bool)
    }
}

pub enum TemplatePiece {
    Literal(String),
    Placeholder(String),
}

/// Splits a template into literal runs and `{name}` placeholders.
/// `{{`/`}}` are escapes for literal braces. Errors are returned in place so
/// callers can keep scanning.
pub fn scan_template(text: &str) -> Vec<Result<TemplatePiece, String>> {
    let mut out = Vec::new();
    let mut literal = String::new();
    let mut chars = text.chars().peekable();
    while let Some(ch) = chars.next() {
        match ch {
            '{' => {
                if chars.peek() == Some(&'{') {
                    chars.next();
                    literal.push('{');
                    continue;
                }
                let mut name = String::new();
                let mut closed = false;
                for c in chars.by_ref() {
                    if c == '}' {
                        closed = true;
                        break;
                    }
                    name.push(c);
                }
                if !closed {
                    out.push(Err("unclosed `{` placeholder".into()));
                    continue;
                }
                if name.is_empty()
                    || !name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                    || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                {
                    out.push(Err(format!("bad placeholder name `{{{name}}}`")));
                    continue;
                }
                if !literal.is_empty() {
                    out.push(Ok(TemplatePiece::Literal(std::mem::take(&mut literal))));
                }
                out.push(Ok(TemplatePiece::Placeholder(name)));
            }
            '}' => {
                if chars.peek() == Some(&'}') {
                    chars.next();
                    literal.push('}');
                } else {
                    out.push(Err("stray `}` (use `}}` for a literal brace)".into()));
                }
            }
            _ => literal.push(ch),
        }
    }
    if !literal.is_empty() {
        out.push(Ok(TemplatePiece::Literal(literal)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{Def, Param, VarDecl};
    use super::*;

    fn family_skeleton() -> ProbeFamily {
        ProbeFamily {
            id: "t".into(),
            vars: vec![
                VarDecl {
                    name: "x".into(),
                    sort: Sort::Int,
                    domain: Some((Expr::int(0), Expr::int(9))),
                },
                VarDecl {
                    name: "y".into(),
                    sort: Sort::Int,
                    domain: Some((Expr::int(0), Expr::int(9))),
                },
            ],
            constraints: vec![Expr::apply(
                OpKind::Eq,
                vec![Expr::apply(OpKind::Add, vec![Expr::var("x"), Expr::var("y")]), Expr::int(10)],
            )],
            answer: Expr::var("x"),
            template: "x?".into(),
            ..ProbeFamily::default()
        }
    }

    #[test]
    fn clean_family_validates() {
        assert!(validate_family(&family_skeleton()).is_empty());
    }

    #[test]
    fn unknown_identifier_is_reported_with_path() {
        let mut f = family_skeleton();
        f.constraints.push(Expr::apply(OpKind::Ge, vec![Expr::var("z"), Expr::int(1)]));
        let diags = validate_family(&f);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, DiagnosticCode::UnknownIdentifier);
        assert!(diags[0].path.starts_with("constraints[1]"), "{}", diags[0].path);
    }

    #[test]
    fn forall_under_exists_rejected() {
        let mut f = family_skeleton();
        let inner = Expr::Forall(
            Box::new(Binder { name: "t".into(), lo: Expr::int(1), hi: Expr::int(2) }),
            Box::new(Expr::apply(OpKind::Le, vec![Expr::var("x"), Expr::var("t")])),
        );
        f.constraints = vec![Expr::Exists(
            vec![Binder { name: "u".into(), lo: Expr::int(0), hi: Expr::int(3) }],
            Box::new(inner),
        )];
        let codes: Vec<_> = validate_family(&f).into_iter().map(|d| d.code).collect();
        assert!(codes.contains(&DiagnosticCode::IllegalQuantifierAlternation), "{codes:?}");
    }

    #[test]
    fn exists_under_forall_accepted() {
        let mut f = family_skeleton();
        f.params = vec![Param { name: "n".into(), lo: 1, hi: 5 }];
        let body = Expr::Exists(
            vec![Binder { name: "u".into(), lo: Expr::int(0), hi: Expr::var("n") }],
            Box::new(Expr::apply(OpKind::Eq, vec![Expr::var("u"), Expr::var("t")])),
        );
        f.constraints = vec![Expr::Forall(
            Box::new(Binder { name: "t".into(), lo: Expr::int(1), hi: Expr::var("n") }),
            Box::new(body),
        )];
        assert!(validate_family(&f).is_empty());
    }

    #[test]
    fn quantifier_under_not_rejected() {
        let mut f = family_skeleton();
        let q = Expr::Forall(
            Box::new(Binder { name: "t".into(), lo: Expr::int(1), hi: Expr::int(2) }),
            Box::new(Expr::apply(OpKind::Le, vec![Expr::var("x"), Expr::var("t")])),
        );
        f.constraints = vec![Expr::apply(OpKind::Not, vec![q])];
        let codes: Vec<_> = validate_family(&f).into_iter().map(|d| d.code).collect();
        assert!(codes.contains(&DiagnosticCode::IllegalQuantifierPosition), "{codes:?}");
    }

    #[test]
    fn bound_referencing_decision_var_rejected() {
        let mut f = family_skeleton();
        f.constraints = vec![Expr::Forall(
            Box::new(Binder { name: "t".into(), lo: Expr::int(1), hi: Expr::var("y") }),
            Box::new(Expr::apply(OpKind::Le, vec![Expr::var("x"), Expr::var("t")])),
        )];
        let codes: Vec<_> = validate_family(&f).into_iter().map(|d| d.code).collect();
        assert!(codes.contains(&DiagnosticCode::BadQuantifierBound), "{codes:?}");
    }

    #[test]
    fn count_requires_reserved_answer() {
        let mut f = family_skeleton();
        f.objective = Objective::Count(vec!["x".into(), "y".into()]);
        let codes: Vec<_> = validate_family(&f).into_iter().map(|d| d.code).collect();
        assert!(codes.contains(&DiagnosticCode::CountAnswerMismatch), "{codes:?}");
        f.answer = Expr::Var(COUNT_SYMBOL.into());
        assert!(validate_family(&f).is_empty());
    }

    #[test]
    fn set_only_at_answer_top() {
        let mut f = family_skeleton();
        f.answer = Expr::SetOf(vec![Expr::var("x"), Expr::var("y")]);
        assert!(validate_family(&f).is_empty());
        f.constraints.push(Expr::apply(
            OpKind::Eq,
            vec![Expr::SetOf(vec![Expr::var("x")]), Expr::int(1)],
        ));
        let codes: Vec<_> = validate_family(&f).into_iter().map(|d| d.code).collect();
        assert!(codes.contains(&DiagnosticCode::SetOutsideAnswer), "{codes:?}");
    }

    #[test]
    fn def_forward_reference_rejected() {
        let mut f = family_skeleton();
        f.defs = vec![
            Def { name: "a".into(), body: Expr::var("b") },
            Def { name: "b".into(), body: Expr::int(1) },
        ];
        let diags = validate_family(&f);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, DiagnosticCode::UnknownIdentifier);
    }

    #[test]
    fn template_escapes_and_placeholders() {
        let mut f = family_skeleton();
        f.template = "literal {{braces}} and {x}?".into();
        assert!(validate_family(&f).is_empty());
        f.template = "{unknown_name}".into();
        assert_eq!(validate_family(&f)[0].code, DiagnosticCode::UnknownIdentifier);
        f.template = "{bad name}".into();
        assert_eq!(validate_family(&f)[0].code, DiagnosticCode::MalformedTemplate);
        f.template = "stray } here".into();
        assert_eq!(validate_family(&f)[0].code, DiagnosticCode::MalformedTemplate);
    }

    #[test]
    fn mod_requires_integers_and_objective_int() {
        let mut f = family_skeleton();
        f.constraints = vec![Expr::apply(
            OpKind::Eq,
            vec![
                Expr::apply(
                    OpKind::Mod,
                    vec![Expr::var("x"), Expr::Rat(num_rational::BigRational::new(1.into(), 2.into()))],
                ),
                Expr::int(0),
            ],
        )];
        let codes: Vec<_> = validate_family(&f).into_iter().map(|d| d.code).collect();
        assert!(codes.contains(&DiagnosticCode::TypeMismatch), "{codes:?}");
    }

    #[test]
    fn division_by_literal_zero_flagged() {
        let mut f = family_skeleton();
        f.defs = vec![Def {
            name: "bad".into(),
            body: Expr::apply(OpKind::Div, vec![Expr::var("x"), Expr::int(0)]),
        }];
        let codes: Vec<_> = validate_family(&f).into_iter().map(|d| d.code).collect();
        assert!(codes.contains(&DiagnosticCode::DivisionByZeroLiteral), "{codes:?}");
    }
}

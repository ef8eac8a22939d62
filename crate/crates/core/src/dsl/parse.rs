//! `.probe` reader: S-expression surface syntax → ProbeFamily, with source
//! spans threaded through to every diagnostic, including the ones raised by
//! semantic validation afterwards.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use crate::ir::{
    validate_family, Binder, Def, Diagnostic, DiagnosticCode, Expr, Objective, OpKind, Param,
    ProbeFamily, Sort, VarDecl, COUNT_SYMBOL,
};
use crate::ops::OperatorSpec;
use crate::sexpr::{read_all, SNode, Span};

pub fn parse_family(text: &str) -> Result<ProbeFamily, Vec<Diagnostic>> {
    let nodes = match read_all(text) {
        Ok(nodes) => nodes,
        Err(e) => {
            return Err(vec![Diagnostic::new(
                DiagnosticCode::SyntaxError,
                "",
                e.message.clone(),
            )
            .with_span(e.span)])
        }
    };
    let root = match nodes.as_slice() {
        [one] => one,
        [] => {
            return Err(vec![Diagnostic::new(
                DiagnosticCode::SyntaxError,
                "",
                "input is empty; expected a (probe …) form",
            )])
        }
        [_, extra, ..] => {
            return Err(vec![Diagnostic::new(
                DiagnosticCode::SyntaxError,
                "",
                "expected exactly one (probe …) form per file",
            )
            .with_span(extra.span())])
        }
    };

    let mut p = Parser::default();
    let family = p.family(root);
    if !p.diags.is_empty() {
        return Err(p.diags);
    }
    let family = family.expect("no diagnostics implies a family");

    let mut semantic = validate_family(&family);
    if semantic.is_empty() {
        return Ok(family);
    }
    for d in &mut semantic {
        if d.span.is_none() {
            d.span = p.span_for(&d.path).or(Some(root.span()));
        }
    }
    Err(semantic)
}

/// A file of bare operator forms, as consumed by the calibration planner.
pub fn parse_ops(text: &str) -> Result<Vec<OperatorSpec>, Vec<Diagnostic>> {
    let nodes = match read_all(text) {
        Ok(nodes) => nodes,
        Err(e) => {
            return Err(vec![Diagnostic::new(
                DiagnosticCode::SyntaxError,
                "",
                e.message.clone(),
            )
            .with_span(e.span)])
        }
    };
    let mut p = Parser::default();
    let mut ops = Vec::new();
    for (i, node) in nodes.iter().enumerate() {
        if let Some(op) = p.operator(node, &format!("ops[{i}]")) {
            ops.push(op);
        }
    }
    if p.diags.is_empty() {
        Ok(ops)
    } else {
        Err(p.diags)
    }
}

#[derive(Default)]
struct Parser {
    diags: Vec<Diagnostic>,
    /// path → span of the syntax node it came from, for re-attaching spans
    /// to semantic diagnostics (longest matching prefix wins).
    spans: Vec<(String, Span)>,
}

impl Parser {
    fn err(&mut self, path: &str, span: Span, msg: impl Into<String>) {
        self.err_code(DiagnosticCode::SyntaxError, path, span, msg);
    }

    fn err_code(&mut self, code: DiagnosticCode, path: &str, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::new(code, path, msg).with_span(span));
    }

    fn record(&mut self, path: impl Into<String>, span: Span) {
        self.spans.push((path.into(), span));
    }

    fn span_for(&self, path: &str) -> Option<Span> {
        self.spans
            .iter()
            .filter(|(p, _)| path.starts_with(p.as_str()))
            .max_by_key(|(p, _)| p.len())
            .map(|(_, s)| *s)
    }

    fn family(&mut self, root: &SNode) -> Option<ProbeFamily> {
        self.record("", root.span());
        let Some(items) = root.tagged("probe") else {
            self.err("", root.span(), "expected a (probe ⟨name⟩ …) form");
            return None;
        };
        let mut f = ProbeFamily::default();
        match items.first() {
            Some(node) if node.atom().map(is_ident) == Some(true) => {
                f.id = node.atom().expect("checked").to_string();
            }
            Some(node) => {
                self.err("", node.span(), "probe name must be an identifier");
            }
            None => {
                self.err("", root.span(), "probe form is missing its name");
            }
        }

        let mut seen: Vec<&str> = Vec::new();
        let mut saw_answer = false;
        let mut saw_template = false;
        for section in &items[1..] {
            let Some(section_items) = section.items() else {
                self.err("", section.span(), "expected a (⟨section⟩ …) list");
                continue;
            };
            let Some(head) = section_items.first().and_then(SNode::atom) else {
                self.err("", section.span(), "section must start with a section name");
                continue;
            };
            const KNOWN: [&str; 10] = [
                "params",
                "vars",
                "defs",
                "constraints",
                "objective",
                "answer",
                "template",
                "bindings",
                "tags",
                "calibrate",
            ];
            if !KNOWN.contains(&head) {
                self.err_code(
                    DiagnosticCode::UnknownSection,
                    head,
                    section.span(),
                    format!("unknown section `{head}`"),
                );
                continue;
            }
            if seen.contains(&head) {
                self.err_code(
                    DiagnosticCode::DuplicateSection,
                    head,
                    section.span(),
                    format!("section `{head}` appears more than once"),
                );
                continue;
            }
            // Borrow gymnastics: KNOWN holds 'static strs equal to head.
            seen.push(KNOWN.iter().find(|k| **k == head).expect("checked"));

            let rest = &section_items[1..];
            match head {
                "params" => self.params(rest, &mut f),
                "vars" => self.vars(rest, &mut f),
                "defs" => self.defs(rest, &mut f),
                "constraints" => {
                    for (i, node) in rest.iter().enumerate() {
                        let path = format!("constraints[{i}]");
                        self.record(path.clone(), node.span());
                        if let Some(e) = self.expr(node, &path) {
                            f.constraints.push(e);
                        }
                    }
                }
                "objective" => {
                    self.record("objective", section.span());
                    f.objective = self.objective(rest, section.span());
                }
                "answer" => {
                    saw_answer = true;
                    match rest {
                        [node] => {
                            self.record("answer", node.span());
                            if let Some(e) = self.expr(node, "answer") {
                                f.answer = e;
                            }
                        }
                        _ => self.err("answer", section.span(), "answer takes exactly one expression"),
                    }
                }
                "template" => {
                    saw_template = true;
                    match rest {
                        [node] => {
                            self.record("template", node.span());
                            match node.string() {
                                Some(s) => f.template = s.to_string(),
                                None => self.err(
                                    "template",
                                    node.span(),
                                    "template takes a string literal",
                                ),
                            }
                        }
                        _ => self.err(
                            "template",
                            section.span(),
                            "template takes exactly one string",
                        ),
                    }
                }
                "bindings" => self.bindings(rest, &mut f),
                "tags" => {
                    for (i, node) in rest.iter().enumerate() {
                        let path = format!("tags[{i}]");
                        self.record(path.clone(), node.span());
                        match node.string() {
                            Some(s) => f.tags.push(s.to_string()),
                            None => self.err(&path, node.span(), "tags are string literals"),
                        }
                    }
                }
                "calibrate" => {
                    for (i, node) in rest.iter().enumerate() {
                        let path = format!("calibrate[{i}]");
                        self.record(path.clone(), node.span());
                        if let Some(op) = self.operator(node, &path) {
                            f.calibrate.push(op);
                        }
                    }
                }
                _ => unreachable!("filtered against KNOWN"),
            }
        }

        if !saw_answer {
            self.err_code(
                DiagnosticCode::MissingSection,
                "answer",
                root.span(),
                "missing required section `answer`",
            );
        }
        if !saw_template {
            self.err_code(
                DiagnosticCode::MissingSection,
                "template",
                root.span(),
                "missing required section `template`",
            );
        }
        if self.diags.is_empty() {
            Some(f)
        } else {
            None
        }
    }

    fn params(&mut self, entries: &[SNode], f: &mut ProbeFamily) {
        for (i, node) in entries.iter().enumerate() {
            let path = format!("params[{i}]");
            self.record(path.clone(), node.span());
            let Some(parts) = node.items() else {
                self.err(&path, node.span(), "expected (⟨name⟩ int (⟨lo⟩ ⟨hi⟩))");
                continue;
            };
            let [name, kw, range] = parts else {
                self.err(&path, node.span(), "expected (⟨name⟩ int (⟨lo⟩ ⟨hi⟩))");
                continue;
            };
            let Some(name) = self.ident(name, &path) else { continue };
            if kw.atom() != Some("int") {
                self.err(&path, kw.span(), "parameters are always `int`");
                continue;
            }
            let Some([lo, hi]) = range.items() else {
                self.err(&path, range.span(), "sampling range is (⟨lo⟩ ⟨hi⟩)");
                continue;
            };
            let (Some(lo), Some(hi)) =
                (self.int_i64(lo, &path), self.int_i64(hi, &path))
            else {
                continue;
            };
            f.params.push(Param { name, lo, hi });
        }
    }

    fn vars(&mut self, entries: &[SNode], f: &mut ProbeFamily) {
        for (i, node) in entries.iter().enumerate() {
            let path = format!("vars[{i}]");
            self.record(path.clone(), node.span());
            let Some(parts) = node.items() else {
                self.err(&path, node.span(), "expected (⟨name⟩ ⟨sort⟩ [(⟨lo⟩ ⟨hi⟩)])");
                continue;
            };
            if parts.len() != 2 && parts.len() != 3 {
                self.err(&path, node.span(), "expected (⟨name⟩ ⟨sort⟩ [(⟨lo⟩ ⟨hi⟩)])");
                continue;
            }
            let Some(name) = self.ident(&parts[0], &path) else { continue };
            let sort = match parts[1].atom() {
                Some("int") => Sort::Int,
                Some("rat") => Sort::Rat,
                Some("bool") => Sort::Bool,
                _ => {
                    self.err(&path, parts[1].span(), "sort must be int, rat, or bool");
                    continue;
                }
            };
            let domain = match parts.get(2) {
                None => None,
                Some(d) => {
                    let Some([lo, hi]) = d.items() else {
                        self.err(&path, d.span(), "domain is (⟨lo⟩ ⟨hi⟩)");
                        continue;
                    };
                    let lo_path = format!("{path}.lo");
                    let hi_path = format!("{path}.hi");
                    self.record(lo_path.clone(), lo.span());
                    self.record(hi_path.clone(), hi.span());
                    let (Some(lo), Some(hi)) =
                        (self.expr(lo, &lo_path), self.expr(hi, &hi_path))
                    else {
                        continue;
                    };
                    Some((lo, hi))
                }
            };
            f.vars.push(VarDecl { name, sort, domain });
        }
    }

    fn defs(&mut self, entries: &[SNode], f: &mut ProbeFamily) {
        for (i, node) in entries.iter().enumerate() {
            let path = format!("defs[{i}]");
            self.record(path.clone(), node.span());
            let Some([name, body]) = node.items() else {
                self.err(&path, node.span(), "expected (⟨name⟩ ⟨expr⟩)");
                continue;
            };
            let Some(name) = self.ident(name, &path) else { continue };
            let body_path = format!("{path}.body");
            self.record(body_path.clone(), body.span());
            let Some(body) = self.expr(body, &body_path) else { continue };
            f.defs.push(Def { name, body });
        }
    }

    fn bindings(&mut self, entries: &[SNode], f: &mut ProbeFamily) {
        for (i, node) in entries.iter().enumerate() {
            let path = format!("bindings[{i}]");
            self.record(path.clone(), node.span());
            let Some([name, phrase]) = node.items() else {
                self.err(&path, node.span(), "expected (⟨name⟩ \"⟨phrase⟩\")");
                continue;
            };
            let name = match name.atom() {
                Some(a) if is_ident(a) => a.to_string(),
                _ => {
                    self.err(&path, name.span(), "binding name must be an identifier");
                    continue;
                }
            };
            let Some(phrase) = phrase.string() else {
                self.err(&path, phrase.span(), "binding phrase must be a string");
                continue;
            };
            f.bindings.push((name, phrase.to_string()));
        }
    }

    fn objective(&mut self, rest: &[SNode], span: Span) -> Objective {
        match rest {
            [kind, arg] => match kind.atom() {
                Some("minimize") => match self.expr(arg, "objective") {
                    Some(e) => Objective::Minimize(e),
                    None => Objective::None,
                },
                Some("maximize") => match self.expr(arg, "objective") {
                    Some(e) => Objective::Maximize(e),
                    None => Objective::None,
                },
                Some("count") => {
                    let Some(items) = arg.items() else {
                        self.err("objective", arg.span(), "count takes (⟨var⟩ …)");
                        return Objective::None;
                    };
                    let mut projection = Vec::new();
                    for node in items {
                        if let Some(name) = self.ident(node, "objective") {
                            projection.push(name);
                        }
                    }
                    if projection.is_empty() {
                        self.err("objective", arg.span(), "count projection must be non-empty");
                        return Objective::None;
                    }
                    Objective::Count(projection)
                }
                _ => {
                    self.err("objective", kind.span(), "objective is minimize, maximize, or count");
                    Objective::None
                }
            },
            _ => {
                self.err("objective", span, "objective takes a kind and one argument");
                Objective::None
            }
        }
    }

    fn operator(&mut self, node: &SNode, path: &str) -> Option<OperatorSpec> {
        let malformed = |p: &mut Self, span: Span, msg: &str| {
            p.err_code(DiagnosticCode::MalformedOperator, path, span, msg);
            None
        };
        let Some(items) = node.items() else {
            return malformed(self, node.span(), "operator must be a list form");
        };
        let Some(head) = items.first().and_then(SNode::atom) else {
            return malformed(self, node.span(), "operator must start with its kind");
        };
        let rest = &items[1..];
        match head {
            "conjoin" => {
                let [phi] = rest else {
                    return malformed(self, node.span(), "(conjoin ⟨expr⟩)");
                };
                Some(OperatorSpec::Conjoin { phi: self.expr(phi, path)? })
            }
            "tighten" => {
                let [idx, psi] = rest else {
                    return malformed(self, node.span(), "(tighten ⟨index⟩ ⟨expr⟩)");
                };
                Some(OperatorSpec::Tighten {
                    target: self.index(idx, path)?,
                    psi: self.expr(psi, path)?,
                })
            }
            "restrict-domain" => {
                let [var, lo, hi] = rest else {
                    return malformed(self, node.span(), "(restrict-domain ⟨var⟩ ⟨lo⟩ ⟨hi⟩)");
                };
                Some(OperatorSpec::RestrictDomain {
                    var: self.ident(var, path)?,
                    lo: self.expr(lo, path)?,
                    hi: self.expr(hi, path)?,
                })
            }
            "nest" => {
                let [idx, guard, els] = rest else {
                    return malformed(self, node.span(), "(nest ⟨index⟩ ⟨guard⟩ ⟨else⟩)");
                };
                Some(OperatorSpec::Nest {
                    target: self.index(idx, path)?,
                    guard: self.expr(guard, path)?,
                    els: self.expr(els, path)?,
                })
            }
            "couple" => {
                let [def, targets @ ..] = rest else {
                    return malformed(self, node.span(), "(couple (⟨name⟩ ⟨expr⟩) ⟨index⟩ …)");
                };
                let def = self.def_pair(def, path)?;
                let mut out = Vec::new();
                for t in targets {
                    out.push(self.index(t, path)?);
                }
                Some(OperatorSpec::Couple { def, targets: out })
            }
            "chain" => {
                let [name, first, second] = rest else {
                    return malformed(
                        self,
                        node.span(),
                        "(chain ⟨def⟩ (⟨name⟩ ⟨expr⟩) (⟨name⟩ ⟨expr⟩))",
                    );
                };
                Some(OperatorSpec::Chain {
                    def_name: self.ident(name, path)?,
                    split: (self.def_pair(first, path)?, self.def_pair(second, path)?),
                })
            }
            "rep-shift" => {
                let [idx, defs, replacement] = rest else {
                    return malformed(
                        self,
                        node.span(),
                        "(rep-shift ⟨index⟩ ((⟨name⟩ ⟨expr⟩) …) ⟨expr⟩)",
                    );
                };
                let target = self.index(idx, path)?;
                let Some(def_nodes) = defs.items() else {
                    return malformed(self, defs.span(), "replacement defs must be a list");
                };
                let mut out = Vec::new();
                for d in def_nodes {
                    out.push(self.def_pair(d, path)?);
                }
                Some(OperatorSpec::RepShift {
                    target,
                    defs: out,
                    replacement: self.expr(replacement, path)?,
                })
            }
            other => malformed(self, node.span(), &format!("unknown operator kind `{other}`")),
        }
    }

    fn def_pair(&mut self, node: &SNode, path: &str) -> Option<Def> {
        let Some([name, body]) = node.items() else {
            self.err_code(
                DiagnosticCode::MalformedOperator,
                path,
                node.span(),
                "expected (⟨name⟩ ⟨expr⟩)",
            );
            return None;
        };
        Some(Def { name: self.ident(name, path)?, body: self.expr(body, path)? })
    }

    fn index(&mut self, node: &SNode, path: &str) -> Option<usize> {
        match node.atom().and_then(|a| a.parse::<usize>().ok()) {
            Some(i) => Some(i),
            None => {
                self.err_code(
                    DiagnosticCode::MalformedOperator,
                    path,
                    node.span(),
                    "expected a constraint index",
                );
                None
            }
        }
    }

    fn ident(&mut self, node: &SNode, path: &str) -> Option<String> {
        match node.atom() {
            Some(a) if is_ident(a) => Some(a.to_string()),
            _ => {
                self.err(path, node.span(), "expected an identifier");
                None
            }
        }
    }

    fn int_i64(&mut self, node: &SNode, path: &str) -> Option<i64> {
        let parsed = node.atom().and_then(|a| {
            if is_int_token(a) {
                a.parse::<i64>().ok()
            } else {
                None
            }
        });
        if parsed.is_none() {
            self.err(path, node.span(), "expected a machine-sized integer");
        }
        parsed
    }

    fn expr(&mut self, node: &SNode, path: &str) -> Option<Expr> {
        match node {
            SNode::Str { span, .. } => {
                self.err(path, *span, "string literals are not expressions");
                None
            }
            SNode::Atom { text, span } => self.atom_expr(text, *span, path),
            SNode::List { items, span } => {
                let Some(head) = items.first() else {
                    self.err(path, *span, "empty list is not an expression");
                    return None;
                };
                let Some(head_text) = head.atom() else {
                    self.err(path, head.span(), "operator position must be a symbol");
                    return None;
                };
                match head_text {
                    "forall" => {
                        let [_, binder, body] = items.as_slice() else {
                            self.err(path, *span, "(forall (⟨i⟩ ⟨lo⟩ ⟨hi⟩) ⟨body⟩)");
                            return None;
                        };
                        let binder = self.binder(binder, path)?;
                        let body = self.expr(body, path)?;
                        Some(Expr::Forall(Box::new(binder), Box::new(body)))
                    }
                    "exists" => {
                        let [_, binders, body] = items.as_slice() else {
                            self.err(path, *span, "(exists ((⟨x⟩ ⟨lo⟩ ⟨hi⟩) …) ⟨body⟩)");
                            return None;
                        };
                        let Some(binder_nodes) = binders.items() else {
                            self.err(path, binders.span(), "exists binders must be a list");
                            return None;
                        };
                        if binder_nodes.is_empty() {
                            self.err(path, binders.span(), "exists needs at least one binder");
                            return None;
                        }
                        let mut bs = Vec::with_capacity(binder_nodes.len());
                        for b in binder_nodes {
                            bs.push(self.binder(b, path)?);
                        }
                        let body = self.expr(body, path)?;
                        Some(Expr::Exists(bs, Box::new(body)))
                    }
                    "set" => {
                        let mut elems = Vec::with_capacity(items.len() - 1);
                        for e in &items[1..] {
                            elems.push(self.expr(e, path)?);
                        }
                        Some(Expr::SetOf(elems))
                    }
                    sym => match OpKind::from_symbol(sym) {
                        Some(op) => {
                            let mut args = Vec::with_capacity(items.len() - 1);
                            for a in &items[1..] {
                                args.push(self.expr(a, path)?);
                            }
                            Some(Expr::Apply(op, args))
                        }
                        None => {
                            self.err(path, head.span(), format!("unknown operator `{sym}`"));
                            None
                        }
                    },
                }
            }
        }
    }

    fn binder(&mut self, node: &SNode, path: &str) -> Option<Binder> {
        let Some([name, lo, hi]) = node.items() else {
            self.err(path, node.span(), "binder is (⟨name⟩ ⟨lo⟩ ⟨hi⟩)");
            return None;
        };
        Some(Binder {
            name: self.ident(name, path)?,
            lo: self.expr(lo, path)?,
            hi: self.expr(hi, path)?,
        })
    }

    fn atom_expr(&mut self, text: &str, span: Span, path: &str) -> Option<Expr> {
        match text {
            "true" => return Some(Expr::Bool(true)),
            "false" => return Some(Expr::Bool(false)),
            COUNT_SYMBOL => return Some(Expr::Var(COUNT_SYMBOL.to_string())),
            _ => {}
        }
        if is_int_token(text) {
            let v = BigInt::parse_bytes(text.as_bytes(), 10).expect("checked digits");
            return Some(Expr::Int(v));
        }
        if let Some((numer, denom)) = text.split_once('/') {
            if is_int_token(numer) && is_int_token(denom) {
                let n = BigInt::parse_bytes(numer.as_bytes(), 10).expect("checked digits");
                let d = BigInt::parse_bytes(denom.as_bytes(), 10).expect("checked digits");
                if d.is_zero() {
                    self.err(path, span, "rational literal with zero denominator");
                    return None;
                }
                return Some(Expr::Rat(BigRational::new(n, d)));
            }
        }
        if is_ident(text) {
            return Some(Expr::Var(text.to_string()));
        }
        self.err(path, span, format!("`{text}` is not a literal or identifier"));
        None
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_int_token(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

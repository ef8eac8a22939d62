//! Compositional intermediate representation for probe families: typed
//! variables, constraints, derived definitions, an objective/answer, and the
//! NL template with its binding map.
//!
//! All values here are immutable after construction; analyses and transforms
//! return new values.

mod analyze;
mod ground;
mod normalize;
mod validate;

pub use analyze::{analyze_structure, DependencyGraph, Skeleton};
pub use ground::{ground_instance, instance_hash, GroundError, DEFAULT_GROUNDING_CAP};
pub use normalize::{normalize, normalize_expr};
pub use validate::{
    infer_sort, is_reserved, scan_template, validate_family, SortEnv, TemplatePiece,
    RESERVED_WORDS,
};

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::metrics::StructuralDescriptor;
use crate::sexpr::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sort {
    Int,
    Rat,
    Bool,
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sort::Int => "int",
            Sort::Rat => "rat",
            Sort::Bool => "bool",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Abs,
    Min,
    Max,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Not,
    Ite,
}

impl OpKind {
    pub fn symbol(self) -> &'static str {
        match self {
            OpKind::Add => "+",
            OpKind::Sub => "-",
            OpKind::Mul => "*",
            OpKind::Div => "div",
            OpKind::Mod => "mod",
            OpKind::Abs => "abs",
            OpKind::Min => "min",
            OpKind::Max => "max",
            OpKind::Eq => "=",
            OpKind::Ne => "!=",
            OpKind::Lt => "<",
            OpKind::Le => "<=",
            OpKind::Gt => ">",
            OpKind::Ge => ">=",
            OpKind::And => "and",
            OpKind::Or => "or",
            OpKind::Not => "not",
            OpKind::Ite => "ite",
        }
    }

    pub fn from_symbol(sym: &str) -> Option<OpKind> {
        Some(match sym {
            "+" => OpKind::Add,
            "-" => OpKind::Sub,
            "*" => OpKind::Mul,
            "div" => OpKind::Div,
            "mod" => OpKind::Mod,
            "abs" => OpKind::Abs,
            "min" => OpKind::Min,
            "max" => OpKind::Max,
            "=" => OpKind::Eq,
            "!=" => OpKind::Ne,
            "<" => OpKind::Lt,
            "<=" => OpKind::Le,
            ">" => OpKind::Gt,
            ">=" => OpKind::Ge,
            "and" => OpKind::And,
            "or" => OpKind::Or,
            "not" => OpKind::Not,
            "ite" => OpKind::Ite,
            _ => return None,
        })
    }

    /// (min, max) argument count; max `None` means variadic.
    pub fn arity(self) -> (usize, Option<usize>) {
        match self {
            OpKind::Add | OpKind::Mul | OpKind::And | OpKind::Or => (2, None),
            OpKind::Not | OpKind::Abs => (1, Some(1)),
            OpKind::Ite => (3, Some(3)),
            _ => (2, Some(2)),
        }
    }

    /// Argument order is semantically irrelevant; canonical form sorts them.
    pub fn commutative(self) -> bool {
        matches!(
            self,
            OpKind::Add
                | OpKind::Mul
                | OpKind::Min
                | OpKind::Max
                | OpKind::Eq
                | OpKind::Ne
                | OpKind::And
                | OpKind::Or
        )
    }
}

/// One `(name lo hi)` quantifier binder; bounds are integer expressions
/// over parameters and enclosing quantifier indices only.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Binder {
    pub name: String,
    pub lo: Expr,
    pub hi: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Int(BigInt),
    /// Always lowest terms, positive denominator (maintained by BigRational).
    Rat(BigRational),
    /// Never written in source; produced by grounding/normalization
    /// (e.g. an empty forall range) and accepted back on re-parse.
    Bool(bool),
    /// Parameter, declared variable, definition, or quantifier index.
    Var(String),
    Apply(OpKind, Vec<Expr>),
    Forall(Box<Binder>, Box<Expr>),
    Exists(Vec<Binder>, Box<Expr>),
    /// Answer-position only: a finite set of numeric expressions.
    SetOf(Vec<Expr>),
}

impl Expr {
    pub fn int(v: i64) -> Expr {
        Expr::Int(BigInt::from(v))
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_owned())
    }

    pub fn apply(op: OpKind, args: Vec<Expr>) -> Expr {
        Expr::Apply(op, args)
    }

    /// Total AST node count; binder bounds count, binder names do not.
    pub fn size(&self) -> u64 {
        match self {
            Expr::Int(_) | Expr::Rat(_) | Expr::Bool(_) | Expr::Var(_) => 1,
            Expr::Apply(_, args) | Expr::SetOf(args) => {
                1 + args.iter().map(Expr::size).sum::<u64>()
            }
            Expr::Forall(b, body) => 1 + b.lo.size() + b.hi.size() + body.size(),
            Expr::Exists(bs, body) => {
                1 + bs.iter().map(|b| b.lo.size() + b.hi.size()).sum::<u64>() + body.size()
            }
        }
    }

    /// Free identifiers in evaluation order, deduplicated.
    pub fn free_idents(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut bound = Vec::new();
        self.collect_idents(&mut bound, &mut out);
        out
    }

    fn collect_idents(&self, bound: &mut Vec<String>, out: &mut Vec<String>) {
        match self {
            Expr::Int(_) | Expr::Rat(_) | Expr::Bool(_) => {}
            Expr::Var(name) => {
                if !bound.iter().any(|b| b == name) && !out.iter().any(|o| o == name) {
                    out.push(name.clone());
                }
            }
            Expr::Apply(_, args) | Expr::SetOf(args) => {
                for arg in args {
                    arg.collect_idents(bound, out);
                }
            }
            Expr::Forall(binder, body) => {
                binder.lo.collect_idents(bound, out);
                binder.hi.collect_idents(bound, out);
                bound.push(binder.name.clone());
                body.collect_idents(bound, out);
                bound.pop();
            }
            Expr::Exists(binders, body) => {
                let mut pushed = 0;
                for binder in binders {
                    binder.lo.collect_idents(bound, out);
                    binder.hi.collect_idents(bound, out);
                    bound.push(binder.name.clone());
                    pushed += 1;
                }
                body.collect_idents(bound, out);
                for _ in 0..pushed {
                    bound.pop();
                }
            }
        }
    }

    pub fn contains_quantifier(&self) -> bool {
        match self {
            Expr::Int(_) | Expr::Rat(_) | Expr::Bool(_) | Expr::Var(_) => false,
            Expr::Apply(_, args) | Expr::SetOf(args) => {
                args.iter().any(Expr::contains_quantifier)
            }
            Expr::Forall(..) | Expr::Exists(..) => true,
        }
    }

    /// Substitutes free occurrences of `name`. Shadowing binders stop the
    /// walk; binder bounds are always substituted (they cannot reference the
    /// binder itself).
    pub fn substitute(&self, name: &str, replacement: &Expr) -> Expr {
        match self {
            Expr::Int(_) | Expr::Rat(_) | Expr::Bool(_) => self.clone(),
            Expr::Var(v) => {
                if v == name {
                    replacement.clone()
                } else {
                    self.clone()
                }
            }
            Expr::Apply(op, args) => Expr::Apply(
                *op,
                args.iter().map(|a| a.substitute(name, replacement)).collect(),
            ),
            Expr::SetOf(args) => Expr::SetOf(
                args.iter().map(|a| a.substitute(name, replacement)).collect(),
            ),
            Expr::Forall(binder, body) => {
                let new_binder = Binder {
                    name: binder.name.clone(),
                    lo: binder.lo.substitute(name, replacement),
                    hi: binder.hi.substitute(name, replacement),
                };
                let new_body = if binder.name == name {
                    (**body).clone()
                } else {
                    body.substitute(name, replacement)
                };
                Expr::Forall(Box::new(new_binder), Box::new(new_body))
            }
            Expr::Exists(binders, body) => {
                let mut shadowed = false;
                let new_binders = binders
                    .iter()
                    .map(|b| Binder {
                        name: b.name.clone(),
                        lo: b.lo.substitute(name, replacement),
                        hi: b.hi.substitute(name, replacement),
                    })
                    .collect::<Vec<_>>();
                for b in binders {
                    if b.name == name {
                        shadowed = true;
                    }
                }
                let new_body = if shadowed {
                    (**body).clone()
                } else {
                    body.substitute(name, replacement)
                };
                Expr::Exists(new_binders, Box::new(new_body))
            }
        }
    }
}

/// Integer-valued problem parameter with its sampling range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub lo: i64,
    pub hi: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub sort: Sort,
    /// Present for Int/Rat, absent for Bool; bounds reference parameters and
    /// literals only.
    pub domain: Option<(Expr, Expr)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Def {
    pub name: String,
    pub body: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Objective {
    Minimize(Expr),
    Maximize(Expr),
    /// Exact model count projected onto the named decision variables; the
    /// answer expression is then the reserved symbol `#count`.
    Count(Vec<String>),
    None,
}

pub const COUNT_SYMBOL: &str = "#count";

/// Reserved binding formal naming the answer step of a trace.
pub const ANSWER_BINDING: &str = "answer";

/// One applied calibration operator, recorded for provenance. The
/// fingerprint is a content hash of the operator's canonical serialization;
/// it participates in instance hashes so calibrated families never collide
/// with their ancestors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub fingerprint: String,
    pub kind: String,
    pub semantics_changing: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProbeFamily {
    pub id: String,
    pub params: Vec<Param>,
    pub vars: Vec<VarDecl>,
    pub defs: Vec<Def>,
    pub constraints: Vec<Expr>,
    pub objective: Objective,
    pub answer: Expr,
    pub template: String,
    /// (formal-name, nl-phrase); a phrase may end in `[unit]`, split off for
    /// answer rendering.
    pub bindings: Vec<(String, String)>,
    pub tags: Vec<String>,
    /// Pending operator specs parsed from a `(calibrate …)` trailer.
    pub calibrate: Vec<crate::ops::OperatorSpec>,
    /// Applied-operator provenance; not serialized into `.probe` text.
    pub lineage: Vec<LineageEntry>,
}

impl Default for Objective {
    fn default() -> Objective {
        Objective::None
    }
}

impl Default for Expr {
    fn default() -> Expr {
        Expr::Bool(true)
    }
}

impl ProbeFamily {
    pub fn binding_phrase(&self, formal: &str) -> Option<&str> {
        self.bindings
            .iter()
            .find(|(name, _)| name == formal)
            .map(|(_, phrase)| phrase.as_str())
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn def(&self, name: &str) -> Option<&Def> {
        self.defs.iter().find(|d| d.name == name)
    }

    pub fn var(&self, name: &str) -> Option<&VarDecl> {
        self.vars.iter().find(|v| v.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum AnswerValue {
    Int(BigInt),
    Rat(BigRational),
    Bool(bool),
    /// Sorted ascending, exact, duplicate-free.
    Set(Vec<BigRational>),
}

impl AnswerValue {
    pub fn set(mut elements: Vec<BigRational>) -> AnswerValue {
        elements.sort();
        elements.dedup();
        AnswerValue::Set(elements)
    }
}

fn rat_to_string(r: &BigRational) -> String {
    // Lowest terms, `p/q` with the sign on the numerator; integers as `p/1`
    // so the encoding round-trips without a separate integer case.
    format!("{}/{}", r.numer(), r.denom())
}

fn rat_from_string(s: &str) -> Result<BigRational, String> {
    let (p, q) = s
        .split_once('/')
        .ok_or_else(|| format!("expected `p/q`, got {s:?}"))?;
    let p: BigInt = p.parse().map_err(|e| format!("bad numerator in {s:?}: {e}"))?;
    let q: BigInt = q.parse().map_err(|e| format!("bad denominator in {s:?}: {e}"))?;
    if q == BigInt::from(0) {
        return Err(format!("zero denominator in {s:?}"));
    }
    Ok(BigRational::new(p, q))
}

// JSON form: {"int":"28"} | {"rat":"-2073/500"} | {"bool":true} |
// {"set":["-2073/500","2073/500"]}. Big integers and rationals travel as
// strings so the encoding is exact and byte-stable across platforms.
impl Serialize for AnswerValue {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = ser.serialize_map(Some(1))?;
        match self {
            AnswerValue::Int(n) => map.serialize_entry("int", &n.to_string())?,
            AnswerValue::Rat(r) => map.serialize_entry("rat", &rat_to_string(r))?,
            AnswerValue::Bool(b) => map.serialize_entry("bool", b)?,
            AnswerValue::Set(els) => {
                let strings: Vec<String> = els.iter().map(rat_to_string).collect();
                map.serialize_entry("set", &strings)?;
            }
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for AnswerValue {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        #[derive(Deserialize)]
        struct Raw {
            int: Option<String>,
            rat: Option<String>,
            bool: Option<bool>,
            set: Option<Vec<String>>,
        }
        let raw = Raw::deserialize(de)?;
        match (raw.int, raw.rat, raw.bool, raw.set) {
            (Some(n), None, None, None) => {
                let n: BigInt = n.parse().map_err(D::Error::custom)?;
                Ok(AnswerValue::Int(n))
            }
            (None, Some(r), None, None) => {
                Ok(AnswerValue::Rat(rat_from_string(&r).map_err(D::Error::custom)?))
            }
            (None, None, Some(b), None) => Ok(AnswerValue::Bool(b)),
            (None, None, None, Some(els)) => {
                let els: Result<Vec<_>, _> = els.iter().map(|s| rat_from_string(s)).collect();
                Ok(AnswerValue::set(els.map_err(D::Error::custom)?))
            }
            _ => Err(D::Error::custom(
                "answer must have exactly one of: int, rat, bool, set",
            )),
        }
    }
}

/// A grounded family: quantifier-free constraints over literal-bounded
/// variables. Built by `ground_instance`, then filled in by the solver and
/// prompt-rendering stages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeInstance {
    pub family_id: String,
    pub param_values: BTreeMap<String, i64>,
    pub vars: Vec<VarDecl>,
    pub defs: Vec<Def>,
    pub constraints: Vec<Expr>,
    pub objective: Objective,
    pub answer: Expr,
    pub prompt: Option<String>,
    pub canonical_answer: Option<AnswerValue>,
    pub descriptor: StructuralDescriptor,
    pub profile: Option<crate::solver::SolverProfile>,
    pub verification: Option<VerificationReport>,
    /// Hex encoding of the 64-bit content hash over
    /// (family-id, param-values, operator lineage).
    pub instance_hash: String,
    pub lineage: Vec<LineageEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub existence: CheckStatus,
    pub uniqueness: CheckStatus,
    pub cross_validation: CheckStatus,
    pub details: String,
}

impl VerificationReport {
    pub fn is_admissible(&self) -> bool {
        self.existence == CheckStatus::Pass
            && matches!(self.uniqueness, CheckStatus::Pass | CheckStatus::NotApplicable)
            && self.cross_validation != CheckStatus::Fail
    }
}

/// Validation/parse finding with a stable code and a location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub message: String,
    /// Structural path such as `constraints[0]` or `defs[2].body`.
    pub path: String,
    pub span: Option<Span>,
}

impl Diagnostic {
    pub fn new(code: DiagnosticCode, path: impl Into<String>, message: impl Into<String>) -> Diagnostic {
        Diagnostic { code, message: message.into(), path: path.into(), span: None }
    }

    pub fn with_span(mut self, span: Span) -> Diagnostic {
        self.span = Some(span);
        self
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}: {}", self.code, self.path, self.message)?;
        if let Some(span) = self.span {
            write!(f, " (line {}, column {})", span.line, span.column)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagnosticCode {
    SyntaxError,
    DuplicateSection,
    UnknownSection,
    MissingSection,
    UnknownIdentifier,
    DuplicateIdentifier,
    ReservedIdentifier,
    WrongArity,
    TypeMismatch,
    IllegalQuantifierAlternation,
    IllegalQuantifierPosition,
    QuantifierInDef,
    QuantifierInAnswer,
    SetOutsideAnswer,
    MissingDomain,
    UnexpectedDomain,
    BadDomainReference,
    BadQuantifierBound,
    InvalidSamplingRange,
    CountAnswerMismatch,
    BadProjection,
    MalformedTemplate,
    BindingIncomplete,
    BindingUnknownFormal,
    EmptyBindingPhrase,
    DivisionByZeroLiteral,
    MalformedOperator,
}

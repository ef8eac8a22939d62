//! Canonical answers for grounded instances, driven through plain
//! `check-sat` scripts: one-shot solves, optimization by bisection,
//! counting by blocking clauses. Every query is a fresh script, so any
//! SMT-LIB 2 conformant solver works — the bundled engine runs in-process,
//! external commands speak the script-on-stdin protocol.

use std::collections::BTreeMap;
use std::io::{Read as _, Write as _};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emit::{emit_smtlib, emitted_expr_size, instance_sort_env, render};
use crate::evaluate::{self, answers_match, Env, Value};
use crate::ir::{
    AnswerValue, CheckStatus, Expr, Objective, OpKind, ProbeInstance, Sort, SortEnv,
    VerificationReport,
};
use crate::sexpr::{read_all, SNode};

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;
pub const DEFAULT_ENUM_CAP: u64 = 100_000;

/// Per-solve resource record: emitted size, structural depth, wall time,
/// memory when the solver reports it, and — for counting — how many models
/// the enumeration visited.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverProfile {
    pub expr_size_emitted: u64,
    pub reasoning_depth: u32,
    pub wall_time_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub peak_memory_kb: Option<u64>,
    pub solver_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub model_count_explored: Option<u64>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SolverError {
    #[error("infeasible: no model satisfies the constraints")]
    Infeasible,
    #[error("enumeration exceeded the cap of {0} models")]
    EnumerationCapExceeded(u64),
    #[error("solver timed out after {0} ms")]
    SolverTimeout(u64),
    #[error("solver crash: {0}")]
    SolverCrash(String),
}

/// A solver that accepts one whole script and returns the raw protocol
/// output (`sat`/`unsat`, model S-expressions, optional statistics).
pub trait ScriptSolver: Send + Sync {
    fn run(&self, script: &str, timeout_ms: u64) -> Result<String, SolverError>;
    fn id(&self) -> String;
}

/// The bundled engine, run in-process.
pub struct BuiltinSolver {
    pub strategy: xray_smt::Strategy,
}

impl ScriptSolver for BuiltinSolver {
    fn run(&self, script: &str, timeout_ms: u64) -> Result<String, SolverError> {
        let options = xray_smt::Options {
            strategy: self.strategy,
            deadline: Some(Instant::now() + Duration::from_millis(timeout_ms)),
        };
        xray_smt::run_script(script, options).map_err(|e| match e {
            xray_smt::EngineError::Timeout => SolverError::SolverTimeout(timeout_ms),
            other => SolverError::SolverCrash(other.to_string()),
        })
    }

    fn id(&self) -> String {
        match self.strategy {
            xray_smt::Strategy::Default => "builtin".into(),
            xray_smt::Strategy::Reverse => "builtin:reverse".into(),
            xray_smt::Strategy::Faulty => "builtin:faulty".into(),
        }
    }
}

/// An external command: script on stdin, verdict and model on stdout,
/// killed at the deadline.
pub struct ExternalSolver {
    pub argv: Vec<String>,
}

impl ScriptSolver for ExternalSolver {
    fn run(&self, script: &str, timeout_ms: u64) -> Result<String, SolverError> {
        let mut child = Command::new(&self.argv[0])
            .args(&self.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| SolverError::SolverCrash(format!("spawn {}: {e}", self.argv[0])))?;

        let mut stdin = child.stdin.take().expect("stdin piped");
        let script_owned = script.to_owned();
        // Writer must not block the polling loop (the script can exceed the
        // pipe buffer), and the pipe must close so the solver sees EOF.
        let writer = std::thread::spawn(move || {
            let _ = stdin.write_all(script_owned.as_bytes());
        });
        let mut stdout = child.stdout.take().expect("stdout piped");
        let out_reader = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stdout.read_to_string(&mut buf);
            buf
        });
        let mut stderr = child.stderr.take().expect("stderr piped");
        let err_reader = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr.read_to_string(&mut buf);
            buf
        });

        let deadline = Instant::now() + Duration::from_millis(timeout_ms);
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) => {
                    if Instant::now() >= deadline {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(SolverError::SolverTimeout(timeout_ms));
                    }
                    std::thread::sleep(Duration::from_millis(2));
                }
                Err(e) => return Err(SolverError::SolverCrash(format!("wait: {e}"))),
            }
        };
        let _ = writer.join();
        let stdout_text = out_reader.join().unwrap_or_default();
        let stderr_text = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(SolverError::SolverCrash(format!(
                "{} exited with {status}: {}",
                self.argv[0],
                stderr_text.trim()
            )));
        }
        Ok(stdout_text)
    }

    fn id(&self) -> String {
        self.argv.join(" ")
    }
}

#[derive(Clone)]
pub struct SolverConfig {
    pub primary: Arc<dyn ScriptSolver>,
    pub secondary: Option<Arc<dyn ScriptSolver>>,
    pub timeout_ms: u64,
    pub enum_cap: u64,
}

impl SolverConfig {
    pub fn builtin() -> SolverConfig {
        SolverConfig {
            primary: Arc::new(BuiltinSolver { strategy: xray_smt::Strategy::Default }),
            secondary: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            enum_cap: DEFAULT_ENUM_CAP,
        }
    }

    /// Primary from `XRAY_SOLVER_CMD` (bundled engine when unset), optional
    /// second opinion from `XRAY_SOLVER2_CMD`.
    pub fn from_env() -> Result<SolverConfig, SolverError> {
        let mut cfg = SolverConfig::builtin();
        if let Ok(spec) = std::env::var("XRAY_SOLVER_CMD") {
            cfg.primary = solver_from_spec(&spec)?;
        }
        if let Ok(spec) = std::env::var("XRAY_SOLVER2_CMD") {
            cfg.secondary = Some(solver_from_spec(&spec)?);
        }
        Ok(cfg)
    }
}

/// `builtin`, `builtin:<strategy>`, or an external command line.
pub fn solver_from_spec(spec: &str) -> Result<Arc<dyn ScriptSolver>, SolverError> {
    let spec = spec.trim();
    if spec == "builtin" {
        return Ok(Arc::new(BuiltinSolver { strategy: xray_smt::Strategy::Default }));
    }
    if let Some(name) = spec.strip_prefix("builtin:") {
        let strategy = xray_smt::Strategy::parse(name).ok_or_else(|| {
            SolverError::SolverCrash(format!("unknown builtin strategy `{name}`"))
        })?;
        return Ok(Arc::new(BuiltinSolver { strategy }));
    }
    let argv: Vec<String> = spec.split_whitespace().map(str::to_owned).collect();
    if argv.is_empty() {
        return Err(SolverError::SolverCrash("empty solver command".into()));
    }
    Ok(Arc::new(ExternalSolver { argv }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SatStatus {
    Sat,
    Unsat,
    Unknown,
}

#[derive(Debug, Clone, Default)]
struct SolveStats {
    memory_kb: Option<u64>,
}

#[derive(Debug, Clone)]
struct SolverOutput {
    status: SatStatus,
    model: BTreeMap<String, Value>,
    stats: SolveStats,
}

pub(crate) fn parse_value(node: &SNode) -> Option<Value> {
    match node {
        SNode::Atom { text, .. } => {
            if text == "true" {
                return Some(Value::Bool(true));
            }
            if text == "false" {
                return Some(Value::Bool(false));
            }
            if let Some((int_part, frac_part)) = text.split_once('.') {
                let negative = int_part.starts_with('-');
                let int_digits = int_part.trim_start_matches('-');
                if int_digits.is_empty()
                    || !int_digits.bytes().all(|b| b.is_ascii_digit())
                    || frac_part.is_empty()
                    || !frac_part.bytes().all(|b| b.is_ascii_digit())
                {
                    return None;
                }
                let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
                let mantissa: BigInt =
                    format!("{int_digits}{frac_part}").parse().ok()?;
                let signed = if negative { -mantissa } else { mantissa };
                return Some(Value::Rat(BigRational::new(signed, scale)));
            }
            text.parse::<BigInt>().ok().map(Value::Int)
        }
        SNode::List { items, .. } => {
            let head = items.first()?.atom()?;
            match (head, items.len()) {
                ("-", 2) => match parse_value(&items[1])? {
                    Value::Int(v) => Some(Value::Int(-v)),
                    Value::Rat(v) => Some(Value::Rat(-v)),
                    _ => None,
                },
                ("/", 3) => {
                    let p = parse_value(&items[1])?;
                    let q = parse_value(&items[2])?;
                    let to_rat = |v: Value| match v {
                        Value::Int(n) => Some(BigRational::from_integer(n)),
                        Value::Rat(r) => Some(r),
                        _ => None,
                    };
                    let (p, q) = (to_rat(p)?, to_rat(q)?);
                    if q.numer().is_zero() {
                        return None;
                    }
                    Some(Value::Rat(p / q))
                }
                _ => None,
            }
        }
        SNode::Str { .. } => None,
    }
}

/// Collects `(define-fun name () Sort value)` bindings and the
/// `(:nodes … :memory-kb …)` statistics list anywhere in the output tree.
fn scan_output(node: &SNode, model: &mut BTreeMap<String, Value>, stats: &mut SolveStats) {
    if let SNode::List { items, .. } = node {
        if items.len() == 5
            && items[0].atom() == Some("define-fun")
            && matches!(&items[2], SNode::List { items, .. } if items.is_empty())
        {
            if let (Some(name), Some(value)) = (items[1].atom(), parse_value(&items[4])) {
                model.insert(name.to_owned(), value);
                return;
            }
        }
        if items.first().and_then(SNode::atom).is_some_and(|a| a.starts_with(':')) {
            let mut iter = items.iter();
            while let Some(key) = iter.next() {
                let (Some(key), Some(val)) = (key.atom(), iter.next()) else { break };
                if key == ":memory-kb" {
                    if let Some(kb) = val.atom().and_then(|v| v.parse::<u64>().ok()) {
                        stats.memory_kb = Some(kb);
                    }
                }
            }
            return;
        }
        for item in items {
            scan_output(item, model, stats);
        }
    }
}

fn parse_output(text: &str) -> Result<SolverOutput, SolverError> {
    let nodes = read_all(text)
        .map_err(|e| SolverError::SolverCrash(format!("unparseable solver output: {}", e.message)))?;
    let mut status = None;
    let mut model = BTreeMap::new();
    let mut stats = SolveStats::default();
    for node in &nodes {
        if status.is_none() {
            status = match node.atom() {
                Some("sat") => Some(SatStatus::Sat),
                Some("unsat") => Some(SatStatus::Unsat),
                Some("unknown") => Some(SatStatus::Unknown),
                _ => None,
            };
            if status.is_some() {
                continue;
            }
        }
        scan_output(node, &mut model, &mut stats);
    }
    let status = status
        .ok_or_else(|| SolverError::SolverCrash("no sat/unsat verdict in solver output".into()))?;
    Ok(SolverOutput { status, model, stats })
}

/// One solve = one sequence of single-query scripts sharing a prefix and a
/// wall-clock budget.
struct ProbeRunner<'a> {
    solver: &'a dyn ScriptSolver,
    prefix: &'a str,
    deadline: Instant,
    budget_ms: u64,
    peak_memory_kb: Option<u64>,
}

impl<'a> ProbeRunner<'a> {
    fn new(solver: &'a dyn ScriptSolver, prefix: &'a str, budget_ms: u64) -> ProbeRunner<'a> {
        ProbeRunner {
            solver,
            prefix,
            deadline: Instant::now() + Duration::from_millis(budget_ms),
            budget_ms,
            peak_memory_kb: None,
        }
    }

    fn check(&mut self, extra_asserts: &[String]) -> Result<SolverOutput, SolverError> {
        let now = Instant::now();
        if now >= self.deadline {
            return Err(SolverError::SolverTimeout(self.budget_ms));
        }
        let remaining = (self.deadline - now).as_millis().max(1) as u64;
        let mut script = String::with_capacity(self.prefix.len() + 96);
        script.push_str(self.prefix);
        for a in extra_asserts {
            script.push_str(a);
            script.push('\n');
        }
        script.push_str("(check-sat)\n(get-model)\n(get-info :all-statistics)\n");
        let text = self.solver.run(&script, remaining)?;
        // A solve that crashes with a truncated transcript right at the
        // deadline is reported as the timeout it really is.
        let out = parse_output(&text).map_err(|e| {
            if matches!(e, SolverError::SolverCrash(_)) && Instant::now() >= self.deadline {
                SolverError::SolverTimeout(self.budget_ms)
            } else {
                e
            }
        })?;
        if let Some(kb) = out.stats.memory_kb {
            self.peak_memory_kb = Some(self.peak_memory_kb.map_or(kb, |m| m.max(kb)));
        }
        Ok(out)
    }
}

/// Environment for evaluating defs/answer in a model: solver-assigned
/// variables (don't-cares defaulted to their domain floor), then defs in
/// declaration order.
fn model_env(i: &ProbeInstance, out: &SolverOutput) -> Result<Env, SolverError> {
    let mut env = Env::new();
    for v in &i.vars {
        if let Some(value) = out.model.get(&v.name) {
            env.insert(v.name.clone(), value.clone());
            continue;
        }
        let fallback = match (v.sort, &v.domain) {
            (Sort::Bool, _) => Value::Bool(false),
            (_, Some((lo, _))) => evaluate::eval(lo, &Env::new()).map_err(|e| {
                SolverError::SolverCrash(format!("domain bound of `{}`: {e}", v.name))
            })?,
            (_, None) => {
                return Err(SolverError::SolverCrash(format!(
                    "model omitted unbounded variable `{}`",
                    v.name
                )))
            }
        };
        env.insert(v.name.clone(), fallback);
    }
    for d in &i.defs {
        let value = evaluate::eval(&d.body, &env)
            .map_err(|e| SolverError::SolverCrash(format!("def `{}`: {e}", d.name)))?;
        env.insert(d.name.clone(), value);
    }
    Ok(env)
}

fn eval_in(e: &Expr, env: &Env) -> Result<Value, SolverError> {
    evaluate::eval(e, env)
        .map_err(|e| SolverError::SolverCrash(format!("model evaluation: {e}")))
}

fn objective_value(obj: &Expr, env: &Env) -> Result<BigInt, SolverError> {
    evaluate::eval_int(obj, env)
        .map_err(|e| SolverError::SolverCrash(format!("objective evaluation: {e}")))
}

pub fn solve_canonical(
    i: &ProbeInstance,
    cfg: &SolverConfig,
) -> Result<(AnswerValue, SolverProfile), SolverError> {
    solve_with(i, cfg, cfg.primary.as_ref())
}

/// `solve_canonical` against an explicit solver (cross-validation runs the
/// same loop twice).
pub fn solve_with(
    i: &ProbeInstance,
    cfg: &SolverConfig,
    solver: &dyn ScriptSolver,
) -> Result<(AnswerValue, SolverProfile), SolverError> {
    let prefix = emit_smtlib(i);
    let sorts = instance_sort_env(i);
    let start = Instant::now();
    let mut runner = ProbeRunner::new(solver, &prefix, cfg.timeout_ms);
    let mut model_count_explored = None;

    let answer = match &i.objective {
        Objective::None => {
            let out = runner.check(&[])?;
            match out.status {
                SatStatus::Unsat => return Err(SolverError::Infeasible),
                SatStatus::Unknown => {
                    return Err(SolverError::SolverCrash("solver returned unknown".into()))
                }
                SatStatus::Sat => {
                    let env = model_env(i, &out)?;
                    eval_in(&i.answer, &env)?.to_answer()
                }
            }
        }
        Objective::Minimize(obj) | Objective::Maximize(obj) => {
            let minimize = matches!(i.objective, Objective::Minimize(_));
            let out = runner.check(&[])?;
            match out.status {
                SatStatus::Unsat => return Err(SolverError::Infeasible),
                SatStatus::Unknown => {
                    return Err(SolverError::SolverCrash("solver returned unknown".into()))
                }
                SatStatus::Sat => {}
            }
            let mut witness = model_env(i, &out)?;
            let mut best = objective_value(obj, &witness)?;

            let probe = |target: &BigInt| -> String {
                let op = if minimize { OpKind::Le } else { OpKind::Ge };
                assert_term(Expr::apply(op, vec![obj.clone(), Expr::Int(target.clone())]), &sorts)
            };
            // Exponential widening: find a step at which no model improves
            // on `best` by `step`, giving a finite bracket for bisection.
            let mut step = BigInt::one();
            let floor_or_ceiling;
            loop {
                let target = if minimize { &best - &step } else { &best + &step };
                let out = runner.check(std::slice::from_ref(&probe(&target)))?;
                match out.status {
                    SatStatus::Sat => {
                        witness = model_env(i, &out)?;
                        best = objective_value(obj, &witness)?;
                        step <<= 1;
                    }
                    SatStatus::Unsat => {
                        floor_or_ceiling = target;
                        break;
                    }
                    SatStatus::Unknown => {
                        return Err(SolverError::SolverCrash("solver returned unknown".into()))
                    }
                }
            }
            // Bracket: optimum strictly better than `floor_or_ceiling` is
            // impossible; `best` is feasible. Standard bisection.
            let (mut lo, mut hi) = if minimize {
                (floor_or_ceiling + BigInt::one(), best.clone())
            } else {
                (best.clone(), floor_or_ceiling - BigInt::one())
            };
            while lo < hi {
                let mid: BigInt = (&lo + &hi).div_floor(&BigInt::from(2));
                let target = if minimize { mid.clone() } else { &mid + BigInt::one() };
                let out = runner.check(std::slice::from_ref(&probe(&target)))?;
                match out.status {
                    SatStatus::Sat => {
                        witness = model_env(i, &out)?;
                        let val = objective_value(obj, &witness)?;
                        if minimize {
                            hi = val;
                        } else {
                            lo = val;
                        }
                    }
                    SatStatus::Unsat => {
                        if minimize {
                            lo = &mid + BigInt::one();
                        } else {
                            hi = mid;
                        }
                    }
                    SatStatus::Unknown => {
                        return Err(SolverError::SolverCrash("solver returned unknown".into()))
                    }
                }
            }
            let optimum = lo;
            // The bisection already implies optimality; the explicit
            // strict-bound certificate is still required to hold.
            let op = if minimize { OpKind::Lt } else { OpKind::Gt };
            let certificate = assert_term(
                Expr::apply(op, vec![obj.clone(), Expr::Int(optimum.clone())]),
                &sorts,
            );
            let out = runner.check(std::slice::from_ref(&certificate))?;
            if out.status != SatStatus::Unsat {
                return Err(SolverError::SolverCrash(format!(
                    "optimality certificate failed: strict bound past {optimum} is satisfiable"
                )));
            }
            if objective_value(obj, &witness)? != optimum {
                return Err(SolverError::SolverCrash(
                    "bisection witness does not attain the optimum".into(),
                ));
            }
            eval_in(&i.answer, &witness)?.to_answer()
        }
        Objective::Count(projection) => {
            let mut seen: Vec<Vec<(String, Value)>> = Vec::new();
            let mut blocking: Vec<String> = Vec::new();
            loop {
                let out = runner.check(&blocking)?;
                match out.status {
                    SatStatus::Unsat => break,
                    SatStatus::Unknown => {
                        return Err(SolverError::SolverCrash("solver returned unknown".into()))
                    }
                    SatStatus::Sat => {
                        let env = model_env(i, &out)?;
                        let mut tuple = Vec::with_capacity(projection.len());
                        for name in projection {
                            let value = env.get(name).cloned().ok_or_else(|| {
                                SolverError::SolverCrash(format!(
                                    "projection variable `{name}` missing from model"
                                ))
                            })?;
                            tuple.push((name.clone(), value));
                        }
                        if seen.contains(&tuple) {
                            return Err(SolverError::SolverCrash(
                                "solver returned a blocked model".into(),
                            ));
                        }
                        blocking.push(blocking_clause(&tuple, &sorts));
                        seen.push(tuple);
                        if seen.len() as u64 > cfg.enum_cap {
                            return Err(SolverError::EnumerationCapExceeded(cfg.enum_cap));
                        }
                    }
                }
            }
            model_count_explored = Some(seen.len() as u64);
            AnswerValue::Int(BigInt::from(seen.len()))
        }
    };

    let profile = SolverProfile {
        expr_size_emitted: emitted_expr_size(&prefix),
        reasoning_depth: i.descriptor.ell,
        wall_time_ms: start.elapsed().as_millis() as u64,
        peak_memory_kb: runner.peak_memory_kb,
        solver_id: solver.id(),
        model_count_explored,
    };
    Ok((answer, profile))
}

/// Probe assertions are built as IR and rendered through the emitter so
/// Int/Real coercion follows the same rules as the main script.
fn assert_term(e: Expr, sorts: &SortEnv) -> String {
    format!("(assert {})", render(&e, sorts))
}

fn value_expr(v: &Value) -> Expr {
    match v {
        Value::Int(n) => Expr::Int(n.clone()),
        Value::Rat(r) => Expr::Rat(r.clone()),
        Value::Bool(b) => Expr::Bool(*b),
        Value::Set(_) => unreachable!("set values never appear as variable assignments"),
    }
}

fn conjunction(mut parts: Vec<Expr>) -> Expr {
    if parts.len() == 1 {
        parts.remove(0)
    } else {
        Expr::apply(OpKind::And, parts)
    }
}

fn one_of(mut options: Vec<Expr>) -> Expr {
    if options.len() == 1 {
        options.remove(0)
    } else {
        Expr::apply(OpKind::Or, options)
    }
}

/// `(assert (not (and (= x v) …)))` over one projection tuple.
fn blocking_clause(tuple: &[(String, Value)], sorts: &SortEnv) -> String {
    let eqs: Vec<Expr> = tuple
        .iter()
        .map(|(name, value)| Expr::apply(OpKind::Eq, vec![Expr::var(name), value_expr(value)]))
        .collect();
    assert_term(Expr::apply(OpKind::Not, vec![conjunction(eqs)]), sorts)
}

/// Disequality used by the uniqueness probe. Scalars: `(distinct answer y*)`.
/// Sets: negated two-sided membership/coverage equality over the answer's
/// element expressions — the whole set must be forced, not just one element.
fn uniqueness_assert(i: &ProbeInstance, canonical: &AnswerValue, sorts: &SortEnv) -> String {
    match (&i.answer, canonical) {
        (Expr::SetOf(elements), AnswerValue::Set(values)) => {
            let eq = |e: &Expr, v: &BigRational| {
                Expr::apply(OpKind::Eq, vec![e.clone(), Expr::Rat(v.clone())])
            };
            let mut conj: Vec<Expr> = Vec::new();
            for e in elements {
                conj.push(one_of(values.iter().map(|v| eq(e, v)).collect()));
            }
            for v in values {
                conj.push(one_of(elements.iter().map(|e| eq(e, v)).collect()));
            }
            assert_term(Expr::apply(OpKind::Not, vec![conjunction(conj)]), sorts)
        }
        _ => {
            let canonical_expr = match canonical {
                AnswerValue::Int(v) => Expr::Int(v.clone()),
                AnswerValue::Rat(r) => Expr::Rat(r.clone()),
                AnswerValue::Bool(b) => Expr::Bool(*b),
                AnswerValue::Set(_) => unreachable!("set canonical paired with set expression"),
            };
            assert_term(
                Expr::apply(OpKind::Ne, vec![i.answer.clone(), canonical_expr]),
                sorts,
            )
        }
    }
}

fn describe_answer(a: &AnswerValue) -> String {
    match a {
        AnswerValue::Int(v) => v.to_string(),
        AnswerValue::Rat(r) => format!("{}/{}", r.numer(), r.denom()),
        AnswerValue::Bool(b) => b.to_string(),
        AnswerValue::Set(vs) => {
            let parts: Vec<String> =
                vs.iter().map(|r| format!("{}/{}", r.numer(), r.denom())).collect();
            format!("{{{}}}", parts.join(", "))
        }
    }
}

/// Second-opinion check: both solvers must produce matching canonical
/// answers. Secondary unavailable or disagreeing → the status says so; a
/// primary failure propagates as an error.
pub fn cross_validate(
    i: &ProbeInstance,
    cfg: &SolverConfig,
) -> Result<(CheckStatus, String), SolverError> {
    let (answer, _) = solve_with(i, cfg, cfg.primary.as_ref())?;
    Ok(cross_against(i, cfg, &answer))
}

fn cross_against(i: &ProbeInstance, cfg: &SolverConfig, primary: &AnswerValue) -> (CheckStatus, String) {
    let Some(secondary) = &cfg.secondary else {
        return (CheckStatus::Skipped, String::new());
    };
    match solve_with(i, cfg, secondary.as_ref()) {
        Ok((second, _)) => {
            if answers_match(primary, &second) {
                (CheckStatus::Pass, String::new())
            } else {
                (
                    CheckStatus::Fail,
                    format!(
                        "cross-validation: {} answered {}, {} answered {}",
                        cfg.primary.id(),
                        describe_answer(primary),
                        secondary.id(),
                        describe_answer(&second)
                    ),
                )
            }
        }
        Err(e) => (
            CheckStatus::Fail,
            format!("cross-validation: second solver ({}) failed: {e}", secondary.id()),
        ),
    }
}

/// Existence, uniqueness, and cross-validation for one grounded instance.
pub fn check_well_posed(
    i: &ProbeInstance,
    cfg: &SolverConfig,
) -> Result<VerificationReport, SolverError> {
    let mut details: Vec<String> = Vec::new();
    let (canonical, _) = match solve_canonical(i, cfg) {
        Ok(solved) => solved,
        Err(SolverError::Infeasible) => {
            return Ok(VerificationReport {
                existence: CheckStatus::Fail,
                uniqueness: CheckStatus::NotApplicable,
                cross_validation: CheckStatus::Skipped,
                details: "existence: no model satisfies the constraints".into(),
            });
        }
        Err(SolverError::EnumerationCapExceeded(cap)) => {
            return Ok(VerificationReport {
                existence: CheckStatus::Pass,
                uniqueness: CheckStatus::Fail,
                cross_validation: CheckStatus::Skipped,
                details: format!("uniqueness: EnumerationCapExceeded — more than {cap} models"),
            });
        }
        Err(other) => return Err(other),
    };

    // A count of zero means the constraint set has no models at all: the
    // probe asks about an empty solution space and is rejected up front.
    let empty_count = matches!(&i.objective, Objective::Count(_))
        && canonical == AnswerValue::Int(BigInt::zero());
    let existence = if empty_count {
        details.push("existence: count objective over an empty solution set".into());
        CheckStatus::Fail
    } else {
        CheckStatus::Pass
    };

    let uniqueness = if empty_count {
        CheckStatus::NotApplicable
    } else {
        match &i.objective {
            Objective::Minimize(_) | Objective::Maximize(_) => CheckStatus::NotApplicable,
            Objective::Count(_) => CheckStatus::Pass,
            Objective::None => {
                let prefix = emit_smtlib(i);
                let sorts = instance_sort_env(i);
                let mut runner = ProbeRunner::new(cfg.primary.as_ref(), &prefix, cfg.timeout_ms);
                let probe = uniqueness_assert(i, &canonical, &sorts);
                let out = runner.check(std::slice::from_ref(&probe))?;
                match out.status {
                    SatStatus::Unsat => CheckStatus::Pass,
                    SatStatus::Sat => {
                        let env = model_env(i, &out)?;
                        let second = eval_in(&i.answer, &env)?.to_answer();
                        details.push(format!(
                            "uniqueness: a second answer {} also satisfies the constraints \
                             (canonical {})",
                            describe_answer(&second),
                            describe_answer(&canonical)
                        ));
                        CheckStatus::Fail
                    }
                    SatStatus::Unknown => {
                        details.push("uniqueness: solver returned unknown".into());
                        CheckStatus::Fail
                    }
                }
            }
        }
    };

    let (cross_validation, cross_detail) = if empty_count {
        (CheckStatus::Skipped, String::new())
    } else {
        cross_against(i, cfg, &canonical)
    };
    if !cross_detail.is_empty() {
        details.push(cross_detail);
    }

    Ok(VerificationReport {
        existence,
        uniqueness,
        cross_validation,
        details: details.join("; "),
    })
}

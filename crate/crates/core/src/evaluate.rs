//! Exact expression evaluation and brute-force model enumeration over
//! finite domains. The enumerator works directly on the family (quantifiers
//! evaluated semantically, never expanded), which makes it an independent
//! reference path against the grounding/solver pipeline.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::ir::{AnswerValue, Def, Expr, Objective, OpKind, ProbeFamily, Sort, VarDecl};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Value {
    Int(BigInt),
    Rat(BigRational),
    Bool(bool),
    Set(Vec<BigRational>),
}

impl Value {
    pub fn int(v: i64) -> Value {
        Value::Int(BigInt::from(v))
    }

    fn as_rat(&self) -> Option<BigRational> {
        match self {
            Value::Int(v) => Some(BigRational::from_integer(v.clone())),
            Value::Rat(v) => Some(v.clone()),
            _ => None,
        }
    }

    pub fn to_answer(&self) -> AnswerValue {
        match self {
            Value::Int(v) => AnswerValue::Int(v.clone()),
            Value::Rat(v) => AnswerValue::Rat(v.clone()),
            Value::Bool(v) => AnswerValue::Bool(*v),
            Value::Set(elements) => AnswerValue::set(elements.clone()),
        }
    }
}

pub type Env = BTreeMap<String, Value>;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound identifier `{0}`")]
    Unbound(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("type error: {0}")]
    Type(String),
    #[error("quantifier bound did not evaluate to an integer")]
    NonIntegerBound,
    #[error("state space of {0} assignments exceeds the enumeration cap of {1}")]
    StateSpaceExceeded(String, u64),
    #[error("cannot enumerate rational-valued variable `{0}`")]
    RationalVariable(String),
    #[error("empty domain for `{0}`")]
    EmptyDomain(String),
}

/// Euclidean division: remainder always in [0, |divisor|).
pub fn div_euclid(a: &BigInt, b: &BigInt) -> Result<(BigInt, BigInt), EvalError> {
    if b.is_zero() {
        return Err(EvalError::DivisionByZero);
    }
    let (mut q, mut r) = (a / b, a % b);
    if r.is_negative() {
        if b.is_positive() {
            q -= 1;
            r += b;
        } else {
            q += 1;
            r -= b;
        }
    }
    Ok((q, r))
}

pub fn eval(e: &Expr, env: &Env) -> Result<Value, EvalError> {
    match e {
        Expr::Int(v) => Ok(Value::Int(v.clone())),
        Expr::Rat(v) => Ok(Value::Rat(v.clone())),
        Expr::Bool(v) => Ok(Value::Bool(*v)),
        Expr::Var(name) => env.get(name).cloned().ok_or_else(|| EvalError::Unbound(name.clone())),
        Expr::Apply(op, args) => eval_apply(*op, args, env),
        Expr::Forall(binder, body) => {
            let lo = eval_int(&binder.lo, env)?;
            let hi = eval_int(&binder.hi, env)?;
            let mut t = lo;
            while t <= hi {
                let mut inner = env.clone();
                inner.insert(binder.name.clone(), Value::Int(t.clone()));
                if !eval_bool(body, &inner)? {
                    return Ok(Value::Bool(false));
                }
                t += 1;
            }
            Ok(Value::Bool(true))
        }
        Expr::Exists(binders, body) => {
            // Binder bounds cannot reference sibling binders, so they are
            // all evaluated against the outer environment.
            let mut ranges = Vec::with_capacity(binders.len());
            for b in binders {
                let lo = eval_int(&b.lo, env)?;
                let hi = eval_int(&b.hi, env)?;
                if lo > hi {
                    return Ok(Value::Bool(false));
                }
                ranges.push((b.name.clone(), lo, hi));
            }
            let mut odometer: Vec<BigInt> = ranges.iter().map(|(_, lo, _)| lo.clone()).collect();
            loop {
                let mut inner = env.clone();
                for ((name, _, _), v) in ranges.iter().zip(&odometer) {
                    inner.insert(name.clone(), Value::Int(v.clone()));
                }
                if eval_bool(body, &inner)? {
                    return Ok(Value::Bool(true));
                }
                let mut pos = ranges.len();
                loop {
                    if pos == 0 {
                        return Ok(Value::Bool(false));
                    }
                    pos -= 1;
                    odometer[pos] += 1;
                    if odometer[pos] <= ranges[pos].2 {
                        break;
                    }
                    odometer[pos] = ranges[pos].1.clone();
                }
            }
        }
        Expr::SetOf(elements) => {
            let mut out = Vec::with_capacity(elements.len());
            for el in elements {
                let v = eval(el, env)?;
                out.push(v.as_rat().ok_or_else(|| {
                    EvalError::Type("set elements must be numeric".into())
                })?);
            }
            out.sort();
            out.dedup();
            Ok(Value::Set(out))
        }
    }
}

fn eval_apply(op: OpKind, args: &[Expr], env: &Env) -> Result<Value, EvalError> {
    // Lazy forms first: their unevaluated branches may divide by zero.
    match op {
        OpKind::And => {
            for a in args {
                if !eval_bool(a, env)? {
                    return Ok(Value::Bool(false));
                }
            }
            return Ok(Value::Bool(true));
        }
        OpKind::Or => {
            for a in args {
                if eval_bool(a, env)? {
                    return Ok(Value::Bool(true));
                }
            }
            return Ok(Value::Bool(false));
        }
        OpKind::Ite => {
            let taken = if eval_bool(&args[0], env)? { &args[1] } else { &args[2] };
            return eval(taken, env);
        }
        OpKind::Not => {
            return Ok(Value::Bool(!eval_bool(&args[0], env)?));
        }
        _ => {}
    }
    let values = args.iter().map(|a| eval(a, env)).collect::<Result<Vec<_>, _>>()?;
    let all_int = values.iter().all(|v| matches!(v, Value::Int(_)));
    let type_err = |what: &str| EvalError::Type(format!("`{}` {what}", op.symbol()));
    let ints = || -> Result<Vec<&BigInt>, EvalError> {
        values
            .iter()
            .map(|v| match v {
                Value::Int(i) => Ok(i),
                _ => Err(type_err("requires integer arguments")),
            })
            .collect()
    };
    let rats = || -> Result<Vec<BigRational>, EvalError> {
        values
            .iter()
            .map(|v| v.as_rat().ok_or_else(|| type_err("requires numeric arguments")))
            .collect()
    };
    match op {
        OpKind::Add => {
            if all_int {
                Ok(Value::Int(ints()?.into_iter().sum()))
            } else {
                Ok(Value::Rat(rats()?.into_iter().sum()))
            }
        }
        OpKind::Mul => {
            if all_int {
                Ok(Value::Int(ints()?.into_iter().product()))
            } else {
                Ok(Value::Rat(rats()?.into_iter().product()))
            }
        }
        OpKind::Sub => {
            if all_int {
                let v = ints()?;
                Ok(Value::Int(v[0] - v[1]))
            } else {
                let v = rats()?;
                Ok(Value::Rat(&v[0] - &v[1]))
            }
        }
        OpKind::Div => {
            if all_int {
                let v = ints()?;
                Ok(Value::Int(div_euclid(v[0], v[1])?.0))
            } else {
                let v = rats()?;
                if v[1].is_zero() {
                    Err(EvalError::DivisionByZero)
                } else {
                    Ok(Value::Rat(&v[0] / &v[1]))
                }
            }
        }
        OpKind::Mod => {
            let v = ints()?;
            Ok(Value::Int(div_euclid(v[0], v[1])?.1))
        }
        OpKind::Abs => {
            if all_int {
                Ok(Value::Int(ints()?[0].abs()))
            } else {
                Ok(Value::Rat(rats()?[0].abs()))
            }
        }
        OpKind::Min | OpKind::Max => {
            if all_int {
                let v = ints()?;
                let pick = if (op == OpKind::Min) == (v[0] <= v[1]) { v[0] } else { v[1] };
                Ok(Value::Int(pick.clone()))
            } else {
                let v = rats()?;
                let pick = if (op == OpKind::Min) == (v[0] <= v[1]) { &v[0] } else { &v[1] };
                Ok(Value::Rat(pick.clone()))
            }
        }
        OpKind::Eq | OpKind::Ne | OpKind::Lt | OpKind::Le | OpKind::Gt | OpKind::Ge => {
            let v = rats()?;
            let holds = match op {
                OpKind::Eq => v[0] == v[1],
                OpKind::Ne => v[0] != v[1],
                OpKind::Lt => v[0] < v[1],
                OpKind::Le => v[0] <= v[1],
                OpKind::Gt => v[0] > v[1],
                OpKind::Ge => v[0] >= v[1],
                _ => unreachable!(),
            };
            Ok(Value::Bool(holds))
        }
        OpKind::And | OpKind::Or | OpKind::Not | OpKind::Ite => unreachable!("handled above"),
    }
}

pub fn eval_bool(e: &Expr, env: &Env) -> Result<bool, EvalError> {
    match eval(e, env)? {
        Value::Bool(b) => Ok(b),
        _ => Err(EvalError::Type("expected a boolean".into())),
    }
}

pub fn eval_int(e: &Expr, env: &Env) -> Result<BigInt, EvalError> {
    match eval(e, env)? {
        Value::Int(v) => Ok(v),
        _ => Err(EvalError::NonIntegerBound),
    }
}

/// Environment holding integer parameter values.
pub fn param_env(values: &BTreeMap<String, i64>) -> Env {
    values.iter().map(|(k, v)| (k.clone(), Value::int(*v))).collect()
}

pub const BRUTE_FORCE_CAP: u64 = 10_000;

/// All satisfying assignments of `vars` (full environments including the
/// evaluated defs), in lexicographic domain order. Fails up-front when the
/// assignment count exceeds `cap`.
pub fn enumerate_models(
    vars: &[VarDecl],
    defs: &[Def],
    constraints: &[Expr],
    base: &Env,
    cap: u64,
) -> Result<Vec<Env>, EvalError> {
    let mut domains: Vec<(String, Vec<Value>)> = Vec::with_capacity(vars.len());
    let mut total: u64 = 1;
    for v in vars {
        let values: Vec<Value> = match (v.sort, &v.domain) {
            (Sort::Bool, _) => vec![Value::Bool(false), Value::Bool(true)],
            (Sort::Rat, _) => return Err(EvalError::RationalVariable(v.name.clone())),
            (Sort::Int, Some((lo, hi))) => {
                let lo = eval_int(lo, base)?;
                let hi = eval_int(hi, base)?;
                if lo > hi {
                    return Err(EvalError::EmptyDomain(v.name.clone()));
                }
                let width = (&hi - &lo + 1u32)
                    .to_u64()
                    .ok_or_else(|| EvalError::StateSpaceExceeded("huge".into(), cap))?;
                total = total.saturating_mul(width);
                let mut out = Vec::new();
                let mut t = lo;
                while t <= hi {
                    out.push(Value::Int(t.clone()));
                    t += 1;
                }
                out
            }
            (Sort::Int, None) => return Err(EvalError::EmptyDomain(v.name.clone())),
        };
        total = total.saturating_mul(if v.sort == Sort::Bool { 2 } else { 1 });
        if total > cap {
            return Err(EvalError::StateSpaceExceeded(total.to_string(), cap));
        }
        domains.push((v.name.clone(), values));
    }
    if total > cap {
        return Err(EvalError::StateSpaceExceeded(total.to_string(), cap));
    }

    let mut models = Vec::new();
    let mut idx = vec![0usize; domains.len()];
    'outer: loop {
        let mut env = base.clone();
        for (slot, (name, values)) in idx.iter().zip(&domains) {
            env.insert(name.clone(), values[*slot].clone());
        }
        let mut ok = true;
        for d in defs {
            match eval(&d.body, &env) {
                Ok(v) => {
                    env.insert(d.name.clone(), v);
                }
                // A partial def (e.g. division by zero) just rules the
                // assignment out rather than aborting the enumeration.
                Err(EvalError::DivisionByZero) => {
                    ok = false;
                    break;
                }
                Err(other) => return Err(other),
            }
        }
        if ok {
            for c in constraints {
                match eval_bool(c, &env) {
                    Ok(true) => {}
                    Ok(false) => {
                        ok = false;
                        break;
                    }
                    Err(EvalError::DivisionByZero) => {
                        ok = false;
                        break;
                    }
                    Err(other) => return Err(other),
                }
            }
        }
        if ok {
            models.push(env);
        }
        if domains.is_empty() {
            break;
        }
        let mut pos = domains.len();
        loop {
            if pos == 0 {
                break 'outer;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < domains[pos].1.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
    Ok(models)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BruteOutcome {
    Infeasible,
    Answer(AnswerValue),
}

/// Reference answer computed purely by enumeration — no grounding, no
/// solver. Optimization picks the optimal objective value and evaluates the
/// answer in the first witness; counting counts distinct projections.
pub fn brute_canonical(
    f: &ProbeFamily,
    params: &BTreeMap<String, i64>,
    cap: u64,
) -> Result<BruteOutcome, EvalError> {
    let base = param_env(params);
    let models = enumerate_models(&f.vars, &f.defs, &f.constraints, &base, cap)?;
    match &f.objective {
        Objective::None => match models.first() {
            None => Ok(BruteOutcome::Infeasible),
            Some(m) => Ok(BruteOutcome::Answer(eval(&f.answer, m)?.to_answer())),
        },
        Objective::Minimize(obj) | Objective::Maximize(obj) => {
            let minimize = matches!(f.objective, Objective::Minimize(_));
            let mut best: Option<(BigInt, Env)> = None;
            for m in models {
                let v = eval_int(obj, &m).map_err(|_| {
                    EvalError::Type("objective must evaluate to an integer".into())
                })?;
                let better = match &best {
                    None => true,
                    Some((cur, _)) => {
                        if minimize {
                            v < *cur
                        } else {
                            v > *cur
                        }
                    }
                };
                if better {
                    best = Some((v, m));
                }
            }
            match best {
                None => Ok(BruteOutcome::Infeasible),
                Some((_, witness)) => {
                    Ok(BruteOutcome::Answer(eval(&f.answer, &witness)?.to_answer()))
                }
            }
        }
        Objective::Count(projection) => {
            let mut seen: BTreeSet<Vec<Value>> = BTreeSet::new();
            for m in &models {
                let key = projection
                    .iter()
                    .map(|name| {
                        m.get(name).cloned().ok_or_else(|| EvalError::Unbound(name.clone()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                seen.insert(key);
            }
            Ok(BruteOutcome::Answer(AnswerValue::Int(BigInt::from(seen.len()))))
        }
    }
}

/// Satisfying assignments projected onto `onto` (declaration order of the
/// names as given), deduplicated — the comparison set for refinement and
/// equivalence checks.
pub fn solution_set(
    f: &ProbeFamily,
    params: &BTreeMap<String, i64>,
    onto: &[String],
    cap: u64,
) -> Result<BTreeSet<Vec<Value>>, EvalError> {
    let base = param_env(params);
    let models = enumerate_models(&f.vars, &f.defs, &f.constraints, &base, cap)?;
    let mut out = BTreeSet::new();
    for m in &models {
        let key = onto
            .iter()
            .map(|name| m.get(name).cloned().ok_or_else(|| EvalError::Unbound(name.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        out.insert(key);
    }
    Ok(out)
}

/// Grading tolerance: |Δ| ≤ 5·10⁻⁴ absolute, or ≤ 10⁻⁶ relative to the
/// reference. Matches the 3-decimal-place rendering used in prompts.
fn rat_close(reference: &BigRational, candidate: &BigRational) -> bool {
    let diff = (reference - candidate).abs();
    if diff <= BigRational::new(BigInt::from(1), BigInt::from(2000)) {
        return true;
    }
    diff <= reference.abs() / BigRational::from_integer(BigInt::from(1_000_000))
}

/// Answer comparison under grading tolerance. Integer-vs-integer and bool
/// answers compare exactly; anything involving a rational uses `rat_close`
/// with the first argument as the reference; sets compare element-wise in
/// sorted order.
pub fn answers_match(reference: &AnswerValue, candidate: &AnswerValue) -> bool {
    match (reference, candidate) {
        (AnswerValue::Int(a), AnswerValue::Int(b)) => a == b,
        (AnswerValue::Bool(a), AnswerValue::Bool(b)) => a == b,
        (AnswerValue::Set(a), AnswerValue::Set(b)) => {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| rat_close(x, y))
        }
        (AnswerValue::Int(a), AnswerValue::Rat(b)) => {
            rat_close(&BigRational::from_integer(a.clone()), b)
        }
        (AnswerValue::Rat(a), AnswerValue::Int(b)) => {
            rat_close(a, &BigRational::from_integer(b.clone()))
        }
        (AnswerValue::Rat(a), AnswerValue::Rat(b)) => rat_close(a, b),
        _ => false,
    }
}

/// Decimal rendering used at prompt/answer boundaries: exact when the value
/// has at most three decimal places, otherwise rounded half-even to three.
pub fn decimal_3dp(r: &BigRational) -> String {
    decimal_ndp(r, 3)
}

/// Half-even decimal rendering to `places` fractional digits, trailing
/// zeros trimmed.
pub fn decimal_ndp(r: &BigRational, places: u32) -> String {
    let scaled = r * BigRational::from_integer(BigInt::from(10).pow(places));
    let rounded: BigInt = if scaled.is_integer() {
        scaled.to_integer()
    } else {
        let floor = scaled.floor().to_integer();
        let frac = &scaled - BigRational::from_integer(floor.clone());
        let half = BigRational::new(BigInt::from(1), BigInt::from(2));
        if frac > half || (frac == half && !(&floor % BigInt::from(2)).is_zero()) {
            floor + 1
        } else {
            floor
        }
    };
    let negative = rounded.is_negative();
    let abs = rounded.magnitude().to_string();
    let min_len = places as usize + 1;
    let digits = if abs.len() < min_len {
        format!("{:0>width$}", abs, width = min_len)
    } else {
        abs
    };
    let (int_part, frac_part) = digits.split_at(digits.len() - places as usize);
    let frac_part = frac_part.trim_end_matches('0');
    let mut out = String::new();
    if negative && (int_part.trim_start_matches('0') != "" || !frac_part.is_empty()) {
        out.push('-');
    }
    out.push_str(int_part);
    if !frac_part.is_empty() {
        out.push('.');
        out.push_str(frac_part);
    }
    out
}

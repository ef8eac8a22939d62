//! Finite-domain search with interval propagation over elaborated scripts.
//!
//! Integer and boolean constants are decided by depth-first search; bounded
//! linear atoms prune via interval reasoning, everything else is checked
//! exactly (big-rational arithmetic) once a branch is fully assigned. Real
//! constants are never searched: they must be pinned by equations, otherwise
//! the result is `unknown`.

use std::collections::BTreeMap;
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::term::{Op, Script, Sort, Term};
use crate::EngineError;

/// Widest value range search will enumerate for a single variable.
const MAX_BRANCH_WIDTH: i128 = 1 << 20;
const MAX_PROP_ROUNDS: usize = 64;
const DEADLINE_CHECK_MASK: u64 = 0xFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchOrder {
    Declaration,
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SatResult {
    Sat,
    Unsat,
    Unknown,
}

impl SatResult {
    pub fn as_str(&self) -> &'static str {
        match self {
            SatResult::Sat => "sat",
            SatResult::Unsat => "unsat",
            SatResult::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Val {
    Int(BigInt),
    Rat(BigRational),
    Bool(bool),
}

impl Val {
    fn as_rat(&self) -> Option<BigRational> {
        match self {
            Val::Int(i) => Some(BigRational::from_integer(i.clone())),
            Val::Rat(r) => Some(r.clone()),
            Val::Bool(_) => None,
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct Stats {
    pub nodes: u64,
    pub propagations: u64,
    pub time_ms: u128,
    pub memory_kb: Option<u64>,
}

/// Assignment for every declared constant, in declaration order.
#[derive(Debug, Clone)]
pub struct Model {
    pub values: Vec<Val>,
}

pub struct Solved {
    pub result: SatResult,
    pub model: Option<Model>,
    pub stats: Stats,
}

#[derive(Clone)]
struct State {
    lo: Vec<i128>,
    hi: Vec<i128>,
    bools: Vec<Option<bool>>,
    reals: Vec<Option<BigRational>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rel {
    Ge,
    Eq,
}

// Sum of coeff*var + k, compared against zero.
struct LinAtom {
    coeffs: Vec<(usize, i128)>,
    k: i128,
    rel: Rel,
}

struct RealPin {
    var: usize,
    rhs: Term,
}

pub struct Searcher<'a> {
    script: &'a Script,
    order: SearchOrder,
    deadline: Option<Instant>,
    atoms: Vec<LinAtom>,
    complex: Vec<Term>,
    real_pins: Vec<RealPin>,
    bool_pins: Vec<(usize, bool)>,
    stats: Stats,
}

impl<'a> Searcher<'a> {
    pub fn new(script: &'a Script, order: SearchOrder, deadline: Option<Instant>) -> Self {
        let mut searcher = Searcher {
            script,
            order,
            deadline,
            atoms: Vec::new(),
            complex: Vec::new(),
            real_pins: Vec::new(),
            bool_pins: Vec::new(),
            stats: Stats::default(),
        };
        let mut conjuncts = Vec::new();
        for assert in &script.asserts {
            flatten_and(assert, &mut conjuncts);
        }
        for conjunct in conjuncts {
            searcher.index_conjunct(conjunct);
        }
        searcher
    }

    fn index_conjunct(&mut self, term: &'a Term) {
        match term {
            Term::Var(v) if self.script.vars[*v].sort == Sort::Bool => {
                self.bool_pins.push((*v, true));
                return;
            }
            Term::App(Op::Not, args) => {
                if let Term::Var(v) = &args[0] {
                    if self.script.vars[*v].sort == Sort::Bool {
                        self.bool_pins.push((*v, false));
                        return;
                    }
                }
            }
            Term::App(op @ (Op::Le | Op::Lt | Op::Ge | Op::Gt | Op::Eq), args)
                if args.len() == 2 =>
            {
                if let Some(atom) = self.linear_atom(*op, &args[0], &args[1]) {
                    // The final leaf check re-evaluates every assert, so the
                    // atom alone can stand in for the conjunct while searching.
                    self.atoms.push(atom);
                    return;
                }
                if *op == Op::Eq {
                    if let Some(pin) = self.real_pin(&args[0], &args[1]) {
                        self.real_pins.push(pin);
                    }
                }
            }
            _ => {}
        }
        self.complex.push(term.clone());
    }

    // (cmp a b) as a linear atom over integer vars, when both sides linearize.
    fn linear_atom(&self, op: Op, a: &Term, b: &Term) -> Option<LinAtom> {
        let la = linearize(a, self.script)?;
        let lb = linearize(b, self.script)?;
        let (diff, rel, adjust) = match op {
            Op::Le => (lin_sub(&lb, &la)?, Rel::Ge, 0),
            Op::Lt => (lin_sub(&lb, &la)?, Rel::Ge, -1),
            Op::Ge => (lin_sub(&la, &lb)?, Rel::Ge, 0),
            Op::Gt => (lin_sub(&la, &lb)?, Rel::Ge, -1),
            Op::Eq => (lin_sub(&la, &lb)?, Rel::Eq, 0),
            _ => return None,
        };
        let coeffs: Vec<(usize, i128)> = diff.0.into_iter().filter(|(_, c)| *c != 0).collect();
        Some(LinAtom {
            coeffs,
            k: diff.1.checked_add(adjust)?,
            rel,
        })
    }

    fn real_pin(&self, a: &Term, b: &Term) -> Option<RealPin> {
        let as_pin = |x: &Term, rhs: &Term| match x {
            Term::Var(v) if self.script.vars[*v].sort == Sort::Real => Some(RealPin {
                var: *v,
                rhs: rhs.clone(),
            }),
            _ => None,
        };
        as_pin(a, b).or_else(|| as_pin(b, a))
    }

    pub fn solve(mut self) -> Result<Solved, EngineError> {
        let started = Instant::now();
        let vars = &self.script.vars;
        let mut state = State {
            lo: vec![i128::MIN / 4; vars.len()],
            hi: vec![i128::MAX / 4; vars.len()],
            bools: vec![None; vars.len()],
            reals: vec![None; vars.len()],
        };
        for (v, value) in std::mem::take(&mut self.bool_pins) {
            match state.bools[v] {
                Some(prev) if prev != value => {
                    return Ok(self.finish(SatResult::Unsat, None, started));
                }
                _ => state.bools[v] = Some(value),
            }
        }

        match self.propagate(&mut state) {
            Propagated::Conflict => return Ok(self.finish(SatResult::Unsat, None, started)),
            Propagated::Ok => {}
        }
        // Every integer constant must be boxed into an enumerable range.
        for (i, decl) in vars.iter().enumerate() {
            if decl.sort == Sort::Int {
                let width = state.hi[i].saturating_sub(state.lo[i]);
                if width > MAX_BRANCH_WIDTH {
                    return Ok(self.finish(SatResult::Unknown, None, started));
                }
            }
        }

        let outcome = self.search(&state)?;
        let (result, model) = match outcome {
            Outcome::Sat(final_state) => {
                let model = self.extract_model(&final_state);
                (SatResult::Sat, Some(model))
            }
            Outcome::Unsat => (SatResult::Unsat, None),
            Outcome::Unknown => (SatResult::Unknown, None),
        };
        Ok(self.finish(result, model, started))
    }

    fn finish(&self, result: SatResult, model: Option<Model>, started: Instant) -> Solved {
        let mut stats = self.stats.clone();
        stats.time_ms = started.elapsed().as_millis();
        stats.memory_kb = peak_memory_kb();
        Solved {
            result,
            model,
            stats,
        }
    }

    fn search(&mut self, state: &State) -> Result<Outcome, EngineError> {
        self.stats.nodes += 1;
        if self.stats.nodes & DEADLINE_CHECK_MASK == 0 {
            if let Some(deadline) = self.deadline {
                if Instant::now() >= deadline {
                    return Err(EngineError::Timeout);
                }
            }
        }

        let Some(var) = self.pick_variable(state) else {
            return Ok(self.check_leaf(state));
        };

        let mut saw_unknown = false;
        match self.script.vars[var].sort {
            Sort::Bool => {
                let order: [bool; 2] = match self.order {
                    SearchOrder::Declaration => [false, true],
                    SearchOrder::Reverse => [true, false],
                };
                for value in order {
                    let mut child = state.clone();
                    child.bools[var] = Some(value);
                    match self.descend(child)? {
                        Outcome::Sat(s) => return Ok(Outcome::Sat(s)),
                        Outcome::Unknown => saw_unknown = true,
                        Outcome::Unsat => {}
                    }
                }
            }
            Sort::Int => {
                let (lo, hi) = (state.lo[var], state.hi[var]);
                let mut value = match self.order {
                    SearchOrder::Declaration => lo,
                    SearchOrder::Reverse => hi,
                };
                loop {
                    let mut child = state.clone();
                    child.lo[var] = value;
                    child.hi[var] = value;
                    match self.descend(child)? {
                        Outcome::Sat(s) => return Ok(Outcome::Sat(s)),
                        Outcome::Unknown => saw_unknown = true,
                        Outcome::Unsat => {}
                    }
                    match self.order {
                        SearchOrder::Declaration => {
                            if value == hi {
                                break;
                            }
                            value += 1;
                        }
                        SearchOrder::Reverse => {
                            if value == lo {
                                break;
                            }
                            value -= 1;
                        }
                    }
                }
            }
            Sort::Real => unreachable!("real constants are never branched"),
        }
        Ok(if saw_unknown {
            Outcome::Unknown
        } else {
            Outcome::Unsat
        })
    }

    fn descend(&mut self, mut child: State) -> Result<Outcome, EngineError> {
        match self.propagate(&mut child) {
            Propagated::Conflict => Ok(Outcome::Unsat),
            Propagated::Ok => self.search(&child),
        }
    }

    fn pick_variable(&self, state: &State) -> Option<usize> {
        let unassigned = |i: &usize| match self.script.vars[*i].sort {
            Sort::Int => state.lo[*i] < state.hi[*i],
            Sort::Bool => state.bools[*i].is_none(),
            Sort::Real => false,
        };
        let range = 0..self.script.vars.len();
        match self.order {
            SearchOrder::Declaration => range.clone().find(unassigned),
            SearchOrder::Reverse => range.rev().find(unassigned),
        }
    }

    fn check_leaf(&self, state: &State) -> Outcome {
        let mut state = state.clone();
        // Give any still-unpinned real one last chance now that ints are fixed.
        loop {
            let mut progressed = false;
            for pin in &self.real_pins {
                if state.reals[pin.var].is_some() {
                    continue;
                }
                if let Some(v) = peval(&pin.rhs, &state, self.script) {
                    match v.as_rat() {
                        Some(r) => {
                            state.reals[pin.var] = Some(r);
                            progressed = true;
                        }
                        None => return Outcome::Unsat,
                    }
                }
            }
            if !progressed {
                break;
            }
        }
        if self
            .script
            .vars
            .iter()
            .enumerate()
            .any(|(i, d)| d.sort == Sort::Real && state.reals[i].is_none())
        {
            return Outcome::Unknown;
        }
        for assert in &self.script.asserts {
            match eval(assert, &state, self.script) {
                Ok(Val::Bool(true)) => {}
                // Evaluation errors (e.g. division by zero) reject the branch.
                _ => return Outcome::Unsat,
            }
        }
        Outcome::Sat(state)
    }

    fn propagate(&mut self, state: &mut State) -> Propagated {
        for _ in 0..MAX_PROP_ROUNDS {
            let mut changed = false;
            for idx in 0..self.atoms.len() {
                match self.tighten(idx, state) {
                    Prop::Moved(true) => changed = true,
                    Prop::Moved(false) | Prop::GiveUp => {}
                    Prop::Conflict => return Propagated::Conflict,
                }
            }
            for pin in &self.real_pins {
                if state.reals[pin.var].is_none() {
                    if let Some(v) = peval(&pin.rhs, state, self.script) {
                        match v.as_rat() {
                            Some(r) => {
                                state.reals[pin.var] = Some(r);
                                changed = true;
                            }
                            None => return Propagated::Conflict,
                        }
                    }
                }
            }
            for term in &self.complex {
                if peval(term, state, self.script) == Some(Val::Bool(false)) {
                    return Propagated::Conflict;
                }
            }
            if !changed {
                break;
            }
        }
        Propagated::Ok
    }

    fn tighten(&mut self, idx: usize, state: &mut State) -> Prop {
        let atom = &self.atoms[idx];
        let first = apply_ge(
            &atom.coeffs,
            atom.k,
            state,
            &mut self.stats.propagations,
        );
        if atom.rel == Rel::Ge {
            return first;
        }
        let Prop::Moved(changed_first) = first else {
            return first;
        };
        let negated: Option<Vec<(usize, i128)>> = atom
            .coeffs
            .iter()
            .map(|&(v, c)| c.checked_neg().map(|n| (v, n)))
            .collect();
        let (Some(negated), Some(neg_k)) = (negated, atom.k.checked_neg()) else {
            return Prop::Moved(changed_first);
        };
        match apply_ge(&negated, neg_k, state, &mut self.stats.propagations) {
            Prop::Conflict => Prop::Conflict,
            Prop::Moved(changed_second) => Prop::Moved(changed_first || changed_second),
            Prop::GiveUp => Prop::Moved(changed_first),
        }
    }

    fn extract_model(&self, state: &State) -> Model {
        let values = self
            .script
            .vars
            .iter()
            .enumerate()
            .map(|(i, decl)| match decl.sort {
                Sort::Int => Val::Int(BigInt::from(state.lo[i])),
                Sort::Bool => Val::Bool(state.bools[i].unwrap_or(false)),
                Sort::Real => Val::Rat(
                    state.reals[i]
                        .clone()
                        .unwrap_or_else(crate::term::zero_rational),
                ),
            })
            .collect();
        Model { values }
    }
}

enum Outcome {
    Sat(State),
    Unsat,
    Unknown,
}

enum Propagated {
    Ok,
    Conflict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Prop {
    /// Interval reasoning ran; payload says whether anything shrank.
    Moved(bool),
    Conflict,
    /// Arithmetic overflowed; no conclusion may be drawn from this atom.
    GiveUp,
}

// Enforces sum(c_i * x_i) + k >= 0 by interval reasoning.
fn apply_ge(coeffs: &[(usize, i128)], k: i128, state: &mut State, props: &mut u64) -> Prop {
    let mut term_max = Vec::with_capacity(coeffs.len());
    let mut total: i128 = k;
    for &(v, c) in coeffs {
        let bound = if c >= 0 { state.hi[v] } else { state.lo[v] };
        let Some(m) = c.checked_mul(bound) else {
            return Prop::GiveUp;
        };
        term_max.push(m);
        let Some(t) = total.checked_add(m) else {
            return Prop::GiveUp;
        };
        total = t;
    }
    if total < 0 {
        return Prop::Conflict;
    }
    let mut changed = false;
    for (j, &(v, c)) in coeffs.iter().enumerate() {
        let Some(rest) = total.checked_sub(term_max[j]) else {
            continue;
        };
        let Some(needed) = rest.checked_neg() else {
            continue;
        };
        // c * x >= needed
        if c > 0 {
            let bound = ceil_div(needed, c);
            if bound > state.lo[v] {
                state.lo[v] = bound;
                changed = true;
                *props += 1;
                if state.lo[v] > state.hi[v] {
                    return Prop::Conflict;
                }
            }
        } else if c < 0 {
            let bound = floor_div(needed, c);
            if bound < state.hi[v] {
                state.hi[v] = bound;
                changed = true;
                *props += 1;
                if state.lo[v] > state.hi[v] {
                    return Prop::Conflict;
                }
            }
        }
    }
    Prop::Moved(changed)
}

fn flatten_and<'t>(term: &'t Term, out: &mut Vec<&'t Term>) {
    match term {
        Term::App(Op::And, args) => {
            for arg in args {
                flatten_and(arg, out);
            }
        }
        other => out.push(other),
    }
}

type LinMap = (BTreeMap<usize, i128>, i128);

fn linearize(term: &Term, script: &Script) -> Option<LinMap> {
    match term {
        Term::Int(n) => Some((BTreeMap::new(), n.to_i128()?)),
        Term::Rat(_) | Term::Bool(_) => None,
        Term::Var(v) => {
            if script.vars[*v].sort != Sort::Int {
                return None;
            }
            let mut m = BTreeMap::new();
            m.insert(*v, 1i128);
            Some((m, 0))
        }
        Term::Def(d) => linearize(&script.defs[*d], script),
        Term::App(op, args) => match op {
            Op::Add => {
                let mut acc = linearize(&args[0], script)?;
                for arg in &args[1..] {
                    acc = lin_add(&acc, &linearize(arg, script)?)?;
                }
                Some(acc)
            }
            Op::Sub => {
                let mut acc = linearize(&args[0], script)?;
                for arg in &args[1..] {
                    acc = lin_sub(&acc, &linearize(arg, script)?)?;
                }
                Some(acc)
            }
            Op::Neg => {
                let inner = linearize(&args[0], script)?;
                lin_sub(&(BTreeMap::new(), 0), &inner)
            }
            Op::Mul => {
                let parts: Vec<LinMap> = args
                    .iter()
                    .map(|a| linearize(a, script))
                    .collect::<Option<_>>()?;
                let mut acc = parts[0].clone();
                for part in &parts[1..] {
                    acc = lin_mul(&acc, part)?;
                }
                Some(acc)
            }
            _ => None,
        },
    }
}

fn lin_add(a: &LinMap, b: &LinMap) -> Option<LinMap> {
    let mut coeffs = a.0.clone();
    for (v, c) in &b.0 {
        let entry = coeffs.entry(*v).or_insert(0);
        *entry = entry.checked_add(*c)?;
    }
    Some((coeffs, a.1.checked_add(b.1)?))
}

fn lin_sub(a: &LinMap, b: &LinMap) -> Option<LinMap> {
    let mut coeffs = a.0.clone();
    for (v, c) in &b.0 {
        let entry = coeffs.entry(*v).or_insert(0);
        *entry = entry.checked_sub(*c)?;
    }
    Some((coeffs, a.1.checked_sub(b.1)?))
}

// Product is linear only when at least one side is constant.
fn lin_mul(a: &LinMap, b: &LinMap) -> Option<LinMap> {
    let (konst, lin) = if a.0.is_empty() {
        (a.1, b)
    } else if b.0.is_empty() {
        (b.1, a)
    } else {
        return None;
    };
    let mut coeffs = BTreeMap::new();
    for (v, c) in &lin.0 {
        coeffs.insert(*v, c.checked_mul(konst)?);
    }
    Some((coeffs, lin.1.checked_mul(konst)?))
}

pub fn ceil_div(a: i128, b: i128) -> i128 {
    let q = a.div_euclid(b);
    let r = a.rem_euclid(b);
    if r == 0 {
        q
    } else if b > 0 {
        q + 1
    } else {
        q
    }
}

pub fn floor_div(a: i128, b: i128) -> i128 {
    let q = a.div_euclid(b);
    let r = a.rem_euclid(b);
    if r == 0 || b > 0 {
        q
    } else {
        q - 1
    }
}

/// Exact evaluation; every referenced constant must be decided in `state`.
fn eval(term: &Term, state: &State, script: &Script) -> Result<Val, EvalError> {
    match term {
        Term::Int(n) => Ok(Val::Int(n.clone())),
        Term::Rat(r) => Ok(Val::Rat(r.clone())),
        Term::Bool(b) => Ok(Val::Bool(*b)),
        Term::Var(v) => match script.vars[*v].sort {
            Sort::Int => {
                if state.lo[*v] != state.hi[*v] {
                    return Err(EvalError::Unassigned);
                }
                Ok(Val::Int(BigInt::from(state.lo[*v])))
            }
            Sort::Bool => state
                .bools[*v]
                .map(Val::Bool)
                .ok_or(EvalError::Unassigned),
            Sort::Real => state
                .reals[*v]
                .clone()
                .map(Val::Rat)
                .ok_or(EvalError::Unassigned),
        },
        Term::Def(d) => eval(&script.defs[*d], state, script),
        Term::App(op, args) => apply(*op, args, state, script),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalError {
    Unassigned,
    DivZero,
    Type,
}

fn apply(op: Op, args: &[Term], state: &State, script: &Script) -> Result<Val, EvalError> {
    // Short-circuiting connectives first so partial branches stay cheap.
    match op {
        Op::And => {
            for arg in args {
                match eval(arg, state, script)? {
                    Val::Bool(false) => return Ok(Val::Bool(false)),
                    Val::Bool(true) => {}
                    _ => return Err(EvalError::Type),
                }
            }
            return Ok(Val::Bool(true));
        }
        Op::Or => {
            for arg in args {
                match eval(arg, state, script)? {
                    Val::Bool(true) => return Ok(Val::Bool(true)),
                    Val::Bool(false) => {}
                    _ => return Err(EvalError::Type),
                }
            }
            return Ok(Val::Bool(false));
        }
        Op::Ite => {
            return match eval(&args[0], state, script)? {
                Val::Bool(true) => eval(&args[1], state, script),
                Val::Bool(false) => eval(&args[2], state, script),
                _ => Err(EvalError::Type),
            };
        }
        Op::Implies => {
            return match eval(&args[0], state, script)? {
                Val::Bool(false) => Ok(Val::Bool(true)),
                Val::Bool(true) => eval(&args[1], state, script),
                _ => Err(EvalError::Type),
            };
        }
        _ => {}
    }

    let vals: Vec<Val> = args
        .iter()
        .map(|a| eval(a, state, script))
        .collect::<Result<_, _>>()?;
    apply_vals(op, &vals)
}

pub fn apply_vals(op: Op, vals: &[Val]) -> Result<Val, EvalError> {
    use Val::*;
    match op {
        Op::Not => match &vals[0] {
            Bool(b) => Ok(Bool(!b)),
            _ => Err(EvalError::Type),
        },
        Op::Neg => match &vals[0] {
            Int(n) => Ok(Int(-n)),
            Rat(r) => Ok(Rat(-r)),
            Bool(_) => Err(EvalError::Type),
        },
        Op::Abs => match &vals[0] {
            Int(n) => Ok(Int(n.abs())),
            Rat(r) => Ok(Rat(r.abs())),
            Bool(_) => Err(EvalError::Type),
        },
        Op::ToReal => match &vals[0] {
            Int(n) => Ok(Rat(BigRational::from_integer(n.clone()))),
            Rat(r) => Ok(Rat(r.clone())),
            Bool(_) => Err(EvalError::Type),
        },
        Op::Add | Op::Sub | Op::Mul => fold_arith(op, vals),
        Op::IntDiv | Op::Mod => {
            let (Int(a), Int(b)) = (&vals[0], &vals[1]) else {
                return Err(EvalError::Type);
            };
            if b.is_zero() {
                return Err(EvalError::DivZero);
            }
            Ok(Int(euclid(a, b, op == Op::Mod)))
        }
        Op::RealDiv => {
            let a = vals[0].as_rat().ok_or(EvalError::Type)?;
            let b = vals[1].as_rat().ok_or(EvalError::Type)?;
            if b.is_zero() {
                return Err(EvalError::DivZero);
            }
            Ok(Rat(a / b))
        }
        Op::Lt | Op::Le | Op::Gt | Op::Ge => {
            let a = vals[0].as_rat().ok_or(EvalError::Type)?;
            let b = vals[1].as_rat().ok_or(EvalError::Type)?;
            Ok(Bool(match op {
                Op::Lt => a < b,
                Op::Le => a <= b,
                Op::Gt => a > b,
                Op::Ge => a >= b,
                _ => unreachable!(),
            }))
        }
        Op::Eq => {
            for pair in vals.windows(2) {
                if !vals_equal(&pair[0], &pair[1])? {
                    return Ok(Bool(false));
                }
            }
            Ok(Bool(true))
        }
        Op::Distinct => {
            for i in 0..vals.len() {
                for j in i + 1..vals.len() {
                    if vals_equal(&vals[i], &vals[j])? {
                        return Ok(Bool(false));
                    }
                }
            }
            Ok(Bool(true))
        }
        Op::And | Op::Or | Op::Ite | Op::Implies => unreachable!("handled before evaluation"),
    }
}

fn fold_arith(op: Op, vals: &[Val]) -> Result<Val, EvalError> {
    let any_rat = vals.iter().any(|v| matches!(v, Val::Rat(_)));
    if any_rat {
        let mut acc = vals[0].as_rat().ok_or(EvalError::Type)?;
        for v in &vals[1..] {
            let r = v.as_rat().ok_or(EvalError::Type)?;
            acc = match op {
                Op::Add => acc + r,
                Op::Sub => acc - r,
                Op::Mul => acc * r,
                _ => unreachable!(),
            };
        }
        Ok(Val::Rat(acc))
    } else {
        let mut acc = match &vals[0] {
            Val::Int(n) => n.clone(),
            _ => return Err(EvalError::Type),
        };
        for v in &vals[1..] {
            let Val::Int(n) = v else {
                return Err(EvalError::Type);
            };
            acc = match op {
                Op::Add => acc + n,
                Op::Sub => acc - n,
                Op::Mul => acc * n,
                _ => unreachable!(),
            };
        }
        Ok(Val::Int(acc))
    }
}

fn vals_equal(a: &Val, b: &Val) -> Result<bool, EvalError> {
    match (a, b) {
        (Val::Bool(x), Val::Bool(y)) => Ok(x == y),
        (Val::Bool(_), _) | (_, Val::Bool(_)) => Err(EvalError::Type),
        _ => Ok(a.as_rat() == b.as_rat()),
    }
}

// SMT-LIB Ints division: remainder is always non-negative.
fn euclid(a: &BigInt, b: &BigInt, want_mod: bool) -> BigInt {
    let q = a / b;
    let r = a - &q * b;
    let (q, r) = if r.is_negative() {
        if b.is_positive() {
            (q - 1, r + b)
        } else {
            (q + 1, r - b)
        }
    } else {
        (q, r)
    };
    if want_mod {
        r
    } else {
        q
    }
}

/// Three-valued partial evaluation: `None` means "not yet decidable".
fn peval(term: &Term, state: &State, script: &Script) -> Option<Val> {
    match term {
        Term::Int(n) => Some(Val::Int(n.clone())),
        Term::Rat(r) => Some(Val::Rat(r.clone())),
        Term::Bool(b) => Some(Val::Bool(*b)),
        Term::Var(v) => match script.vars[*v].sort {
            Sort::Int => {
                (state.lo[*v] == state.hi[*v]).then(|| Val::Int(BigInt::from(state.lo[*v])))
            }
            Sort::Bool => state.bools[*v].map(Val::Bool),
            Sort::Real => state.reals[*v].clone().map(Val::Rat),
        },
        Term::Def(d) => peval(&script.defs[*d], state, script),
        Term::App(op, args) => {
            match op {
                Op::And => {
                    let mut all_known = true;
                    for arg in args {
                        match peval(arg, state, script) {
                            Some(Val::Bool(false)) => return Some(Val::Bool(false)),
                            Some(Val::Bool(true)) => {}
                            _ => all_known = false,
                        }
                    }
                    return all_known.then_some(Val::Bool(true));
                }
                Op::Or => {
                    let mut all_known = true;
                    for arg in args {
                        match peval(arg, state, script) {
                            Some(Val::Bool(true)) => return Some(Val::Bool(true)),
                            Some(Val::Bool(false)) => {}
                            _ => all_known = false,
                        }
                    }
                    return all_known.then_some(Val::Bool(false));
                }
                Op::Not => {
                    return match peval(&args[0], state, script) {
                        Some(Val::Bool(b)) => Some(Val::Bool(!b)),
                        _ => None,
                    };
                }
                Op::Ite => {
                    return match peval(&args[0], state, script) {
                        Some(Val::Bool(true)) => peval(&args[1], state, script),
                        Some(Val::Bool(false)) => peval(&args[2], state, script),
                        _ => None,
                    };
                }
                Op::Implies => {
                    return match peval(&args[0], state, script) {
                        Some(Val::Bool(false)) => Some(Val::Bool(true)),
                        Some(Val::Bool(true)) => peval(&args[1], state, script),
                        _ => None,
                    };
                }
                _ => {}
            }
            let vals: Option<Vec<Val>> = args.iter().map(|a| peval(a, state, script)).collect();
            apply_vals(*op, &vals?).ok()
        }
    }
}

#[cfg(target_os = "linux")]
fn peak_memory_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            return rest.trim().trim_end_matches(" kB").trim().parse().ok();
        }
    }
    None
}

#[cfg(not(target_os = "linux"))]
fn peak_memory_kb() -> Option<u64> {
    None
}

pub fn fabricate_zero_model(script: &Script) -> Model {
    let values = script
        .vars
        .iter()
        .map(|decl| match decl.sort {
            Sort::Int => Val::Int(BigInt::zero()),
            Sort::Bool => Val::Bool(false),
            Sort::Real => Val::Rat(crate::term::zero_rational()),
        })
        .collect();
    Model { values }
}

/// Evaluates `term` under a completed model (used by `get-value`).
pub fn eval_in_model(
    term: &Term,
    model: &Model,
    script: &Script,
) -> Result<Val, EvalError> {
    let mut state = State {
        lo: vec![0; script.vars.len()],
        hi: vec![0; script.vars.len()],
        bools: vec![None; script.vars.len()],
        reals: vec![None; script.vars.len()],
    };
    for (i, val) in model.values.iter().enumerate() {
        match val {
            Val::Int(n) => {
                let v = n.to_i128().ok_or(EvalError::Type)?;
                state.lo[i] = v;
                state.hi[i] = v;
            }
            Val::Bool(b) => state.bools[i] = Some(*b),
            Val::Rat(r) => state.reals[i] = Some(r.clone()),
        }
    }
    eval(term, &state, script)
}

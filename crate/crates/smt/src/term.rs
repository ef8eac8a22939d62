//! Term representation and elaboration from S-expressions.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::sexp::Sexp;
use crate::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sort {
    Int,
    Real,
    Bool,
}

impl Sort {
    pub fn parse(name: &str) -> Result<Sort, EngineError> {
        match name {
            "Int" => Ok(Sort::Int),
            "Real" => Ok(Sort::Real),
            "Bool" => Ok(Sort::Bool),
            other => Err(EngineError::Unsupported(format!("sort {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Neg,
    Mul,
    IntDiv,
    Mod,
    Abs,
    RealDiv,
    ToReal,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Distinct,
    And,
    Or,
    Not,
    Implies,
    Ite,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Int(BigInt),
    Rat(BigRational),
    Bool(bool),
    /// Index into the declared-constant table.
    Var(usize),
    /// Index into the define-fun table.
    Def(usize),
    App(Op, Vec<Term>),
}

#[derive(Debug, Clone)]
pub struct VarDecl {
    pub name: String,
    pub sort: Sort,
}

/// A fully elaborated script: symbol tables plus the command sequence.
#[derive(Debug, Default)]
pub struct Script {
    pub vars: Vec<VarDecl>,
    /// Bodies of 0-ary `define-fun`s, indexed by [`Term::Def`]; a body may
    /// reference only earlier definitions.
    pub defs: Vec<Term>,
    pub asserts: Vec<Term>,
    pub commands: Vec<Command>,
}

#[derive(Debug, Clone)]
pub enum Command {
    CheckSat,
    GetModel,
    /// Pairs the original spelling of each queried term with its elaboration,
    /// so output echoes the query text verbatim.
    GetValue(Vec<(String, Term)>),
    GetStatistics,
}

enum Name {
    Var(usize),
    Def(usize),
}

pub fn elaborate(forms: &[Sexp]) -> Result<Script, EngineError> {
    let mut script = Script::default();
    let mut names: HashMap<String, Name> = HashMap::new();
    for form in forms {
        let items = form
            .list()
            .ok_or_else(|| EngineError::Parse(format!("expected command, found {form}")))?;
        let head = items
            .first()
            .and_then(Sexp::atom)
            .ok_or_else(|| EngineError::Parse(format!("malformed command {form}")))?;
        match head {
            "set-logic" | "set-option" | "set-info" | "exit" | "push" | "pop" => {}
            "declare-const" | "declare-fun" => {
                let (name, sort_form) = match (head, items) {
                    ("declare-const", [_, n, s]) => (n, s),
                    // Only zero-ary declare-fun is meaningful here.
                    ("declare-fun", [_, n, args, s]) if args.list() == Some(&[]) => (n, s),
                    _ => {
                        return Err(EngineError::Parse(format!("malformed declaration {form}")));
                    }
                };
                let name = name
                    .atom()
                    .ok_or_else(|| EngineError::Parse(format!("bad symbol in {form}")))?;
                let sort = Sort::parse(sort_form.atom().unwrap_or_default())?;
                if names.contains_key(name) {
                    return Err(EngineError::Parse(format!("duplicate symbol {name}")));
                }
                names.insert(name.to_owned(), Name::Var(script.vars.len()));
                script.vars.push(VarDecl {
                    name: name.to_owned(),
                    sort,
                });
            }
            "define-fun" => {
                let [_, name, args, sort_form, body] = items else {
                    return Err(EngineError::Parse(format!("malformed define-fun {form}")));
                };
                if args.list() != Some(&[]) {
                    return Err(EngineError::Unsupported(
                        "define-fun with parameters".into(),
                    ));
                }
                let name = name
                    .atom()
                    .ok_or_else(|| EngineError::Parse(format!("bad symbol in {form}")))?;
                Sort::parse(sort_form.atom().unwrap_or_default())?;
                let body = build_term(body, &names, &script)?;
                if names.contains_key(name) {
                    return Err(EngineError::Parse(format!("duplicate symbol {name}")));
                }
                names.insert(name.to_owned(), Name::Def(script.defs.len()));
                script.defs.push(body);
            }
            "assert" => {
                let [_, body] = items else {
                    return Err(EngineError::Parse(format!("malformed assert {form}")));
                };
                let term = build_term(body, &names, &script)?;
                script.asserts.push(term);
            }
            "check-sat" => script.commands.push(Command::CheckSat),
            "get-model" => script.commands.push(Command::GetModel),
            "get-value" => {
                let [_, Sexp::List(wanted)] = items else {
                    return Err(EngineError::Parse(format!("malformed get-value {form}")));
                };
                let terms = wanted
                    .iter()
                    .map(|w| Ok((w.to_string(), build_term(w, &names, &script)?)))
                    .collect::<Result<Vec<_>, EngineError>>()?;
                script.commands.push(Command::GetValue(terms));
            }
            "get-info" => {
                if items.get(1).and_then(Sexp::atom) == Some(":all-statistics") {
                    script.commands.push(Command::GetStatistics);
                }
            }
            other => {
                return Err(EngineError::Unsupported(format!("command {other}")));
            }
        }
    }
    Ok(script)
}

fn build_term(
    form: &Sexp,
    names: &HashMap<String, Name>,
    script: &Script,
) -> Result<Term, EngineError> {
    match form {
        Sexp::Atom(text) => build_atom(text, names),
        Sexp::List(items) => {
            let head = items
                .first()
                .and_then(Sexp::atom)
                .ok_or_else(|| EngineError::Parse(format!("bad application {form}")))?;
            let args = items[1..]
                .iter()
                .map(|a| build_term(a, names, script))
                .collect::<Result<Vec<_>, _>>()?;
            let op = match (head, args.len()) {
                ("+", n) if n >= 2 => Op::Add,
                ("-", 1) => Op::Neg,
                ("-", n) if n >= 2 => Op::Sub,
                ("*", n) if n >= 2 => Op::Mul,
                ("div", 2) => Op::IntDiv,
                ("mod", 2) => Op::Mod,
                ("abs", 1) => Op::Abs,
                ("/", 2) => Op::RealDiv,
                ("to_real", 1) => Op::ToReal,
                ("<", 2) => Op::Lt,
                ("<=", 2) => Op::Le,
                (">", 2) => Op::Gt,
                (">=", 2) => Op::Ge,
                ("=", n) if n >= 2 => Op::Eq,
                ("distinct", n) if n >= 2 => Op::Distinct,
                ("and", _) => Op::And,
                ("or", _) => Op::Or,
                ("not", 1) => Op::Not,
                ("=>", 2) => Op::Implies,
                ("ite", 3) => Op::Ite,
                (other, n) => {
                    return Err(EngineError::Unsupported(format!(
                        "operator {other} with {n} arguments"
                    )));
                }
            };
            Ok(Term::App(op, args))
        }
    }
}

fn build_atom(text: &str, names: &HashMap<String, Name>) -> Result<Term, EngineError> {
    match text {
        "true" => return Ok(Term::Bool(true)),
        "false" => return Ok(Term::Bool(false)),
        _ => {}
    }
    if text.bytes().next().is_some_and(|b| b.is_ascii_digit()) {
        return parse_numeral(text);
    }
    match names.get(text) {
        Some(Name::Var(i)) => Ok(Term::Var(*i)),
        Some(Name::Def(i)) => Ok(Term::Def(*i)),
        None => Err(EngineError::Parse(format!("unknown symbol {text}"))),
    }
}

// SMT-LIB numerals are unsigned; negatives arrive as (- n).
fn parse_numeral(text: &str) -> Result<Term, EngineError> {
    if let Some((whole, frac)) = text.split_once('.') {
        let digits: String = [whole, frac].concat();
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(EngineError::Parse(format!("bad decimal {text}")));
        }
        let numer: BigInt = digits.parse().expect("digits");
        let mut denom = BigInt::one();
        for _ in 0..frac.len() {
            denom *= 10;
        }
        return Ok(Term::Rat(BigRational::new(numer, denom)));
    }
    if !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(EngineError::Parse(format!("bad numeral {text}")));
    }
    Ok(Term::Int(text.parse().expect("digits")))
}

pub fn zero_rational() -> BigRational {
    BigRational::from_integer(BigInt::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sexp::parse_all;

    #[test]
    fn elaborates_declarations_and_asserts() {
        let forms = parse_all(
            "(set-logic QF_LIA)(declare-const x Int)(define-fun y () Int (+ x 1))\
             (assert (<= y 5))(check-sat)(get-model)",
        )
        .unwrap();
        let script = elaborate(&forms).unwrap();
        assert_eq!(script.vars.len(), 1);
        assert_eq!(script.defs.len(), 1);
        assert_eq!(script.asserts.len(), 1);
        assert_eq!(script.commands.len(), 2);
    }

    #[test]
    fn rejects_unknown_symbols() {
        let forms = parse_all("(assert (= nope 1))").unwrap();
        assert!(matches!(elaborate(&forms), Err(EngineError::Parse(_))));
    }

    #[test]
    fn parses_decimals_exactly() {
        let forms = parse_all("(define-fun m () Real 0.691)(check-sat)").unwrap();
        let script = elaborate(&forms).unwrap();
        let Term::Rat(r) = &script.defs[0] else {
            panic!("expected rational literal");
        };
        assert_eq!(r, &BigRational::new(BigInt::from(691), BigInt::from(1000)));
    }
}

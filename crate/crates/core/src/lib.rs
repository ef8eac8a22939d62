//! Probe compilation and capability mapping: parameterized constraint
//! families are parsed from a small S-expression DSL, validated and
//! normalized, grounded into quantifier-free instances, solved for
//! certified canonical answers, rendered into natural-language prompts,
//! and finally evaluated against language models so success rates can be
//! charted over structural difficulty axes.

pub mod atlas;
pub mod dsl;
pub mod emit;
pub mod evaluate;
pub mod formalize;
pub mod harness;
pub mod instance;
pub mod ir;
pub mod metrics;
pub mod ops;
pub mod par;
pub mod rng;
pub mod sexpr;
pub mod solver;
pub mod store;
pub mod trace;
pub mod verify;

//! Textual `.probe` format: reader and canonical printer.

mod parse;
mod print;

pub use parse::{parse_family, parse_ops};
pub use print::{print_expr, print_family, print_op};

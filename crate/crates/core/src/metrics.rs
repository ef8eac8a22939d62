//! Structural difficulty descriptor and quantile axis binning.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::evaluate::{self, param_env};
use crate::ir::{analyze_structure, normalize, Expr, ProbeFamily, Sort};

/// Static complexity coordinates of a family (or of one instance's
/// parameter point): conjunctive width `c`, compositional depth `d`,
/// coupling `kappa`, dependency-chain length `ell`, total expression size,
/// and the log2 state-space volume of the decision variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuralDescriptor {
    pub c: u32,
    pub d: u32,
    pub kappa: u32,
    pub ell: u32,
    pub expr_size: u64,
    pub state_space_log2: BigRational,
}

#[derive(Serialize, Deserialize)]
struct DescriptorRepr {
    c: u32,
    d: u32,
    kappa: u32,
    ell: u32,
    expr_size: u64,
    state_space_log2: RatRepr,
}

#[derive(Serialize, Deserialize)]
struct RatRepr {
    num: i64,
    den: i64,
}

impl Serialize for StructuralDescriptor {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let r = &self.state_space_log2;
        DescriptorRepr {
            c: self.c,
            d: self.d,
            kappa: self.kappa,
            ell: self.ell,
            expr_size: self.expr_size,
            state_space_log2: RatRepr {
                num: r.numer().to_i64().unwrap_or(i64::MAX),
                den: r.denom().to_i64().unwrap_or(i64::MAX),
            },
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StructuralDescriptor {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = DescriptorRepr::deserialize(deserializer)?;
        if repr.state_space_log2.den == 0 {
            return Err(serde::de::Error::custom("zero denominator in state_space_log2"));
        }
        Ok(StructuralDescriptor {
            c: repr.c,
            d: repr.d,
            kappa: repr.kappa,
            ell: repr.ell,
            expr_size: repr.expr_size,
            state_space_log2: BigRational::new(
                BigInt::from(repr.state_space_log2.num),
                BigInt::from(repr.state_space_log2.den),
            ),
        })
    }
}

/// `log2(n)` for `n ≥ 1` to 20 fractional bits, computed by repeated
/// mantissa squaring in `u128` fixed point. Deterministic and monotone
/// nondecreasing in `n`; strictly monotone while the true gap exceeds
/// 2^-20 (always the case for ranges below ~2^18).
pub fn log2_fixed(n: &BigInt) -> BigRational {
    assert!(n.is_positive(), "log2 of non-positive value");
    let k = n.bits() - 1;
    // Q63 mantissa in [2^63, 2^64): exact left shift when k ≤ 63,
    // truncating right shift for astronomically wide ranges.
    let mantissa: BigInt = if k <= 63 { n << (63 - k) } else { n >> (k - 63) };
    let mut a = mantissa.to_u128().expect("mantissa fits in 64 bits");
    let mut frac: u64 = 0;
    for _ in 0..20 {
        a *= a;
        frac <<= 1;
        if a >= 1u128 << 127 {
            frac |= 1;
            a >>= 64;
        } else {
            a >>= 63;
        }
    }
    BigRational::new(BigInt::from(k * (1u64 << 20) + frac), BigInt::from(1u64 << 20))
}

/// Descriptor of the normalized family. `params = None` measures the
/// state space at the sampling midpoint of every parameter; `Some`
/// measures it at one instance's parameter point. The four structural
/// coordinates never depend on parameter values.
pub fn compute_descriptor(
    f: &ProbeFamily,
    params: Option<&BTreeMap<String, i64>>,
) -> StructuralDescriptor {
    let f = normalize(f);
    let (graph, skeletons) = analyze_structure(&f);
    let c = f.constraints.len() as u32;
    let d = skeletons.iter().map(|s| s.depth() as u32).max().unwrap_or(0);
    let kappa = graph.cooccurrence.len() as u32;
    let ell = graph.longest_to_answer as u32;
    let expr_size = f
        .defs
        .iter()
        .map(|def| def.body.size())
        .chain(f.constraints.iter().map(Expr::size))
        .chain(std::iter::once(f.answer.size()))
        .sum();

    let mut values: BTreeMap<String, i64> = BTreeMap::new();
    for p in &f.params {
        let given = params.and_then(|m| m.get(&p.name).copied());
        values.insert(p.name.clone(), given.unwrap_or_else(|| midpoint(p.lo, p.hi)));
    }
    let env = param_env(&values);
    let mut volume = BigRational::zero();
    for v in &f.vars {
        match v.sort {
            Sort::Bool => volume += BigRational::one(),
            Sort::Rat => {}
            Sort::Int => {
                let Some((lo, hi)) = &v.domain else { continue };
                let (Ok(lo), Ok(hi)) =
                    (evaluate::eval_int(lo, &env), evaluate::eval_int(hi, &env))
                else {
                    continue;
                };
                let count = hi - lo + BigInt::from(1);
                if count.is_positive() {
                    volume += log2_fixed(&count);
                }
            }
        }
    }

    StructuralDescriptor { c, d, kappa, ell, expr_size, state_space_log2: volume }
}

fn midpoint(lo: i64, hi: i64) -> i64 {
    ((lo as i128 + hi as i128) / 2) as i64
}

/// Quantile bin edges (interpolated, exact rational arithmetic) over the
/// data, deduplicated and swept so no interior bin is empty. Bins are
/// half-open `[eᵢ, eᵢ₊₁)` except the last, which is closed. A constant
/// sample degenerates to the single bin `[v, v]`.
pub fn bin_axis(values: &[BigRational], q: usize) -> Vec<BigRational> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort();
    let n = sorted.len();
    if sorted[0] == sorted[n - 1] {
        return vec![sorted[0].clone(), sorted[0].clone()];
    }
    let q = q.max(2);

    let mut edges: Vec<BigRational> = Vec::with_capacity(q + 1);
    for j in 0..=q {
        // Position j·(n−1)/q between order statistics, linearly interpolated.
        let pos = BigRational::new(BigInt::from(j * (n - 1)), BigInt::from(q));
        let idx = pos.floor().to_integer().to_usize().expect("index in range");
        let fracpart = &pos - pos.floor();
        let edge = if fracpart.is_zero() || idx + 1 >= n {
            sorted[idx].clone()
        } else {
            &sorted[idx] + fracpart * (&sorted[idx + 1] - &sorted[idx])
        };
        if edges.last() != Some(&edge) {
            edges.push(edge);
        }
    }

    // Merge away interior edges whose left bin captured no data point.
    // The final bin always holds the maximum, so the last edge survives.
    let mut kept: Vec<BigRational> = vec![edges[0].clone()];
    for (i, edge) in edges.iter().enumerate().skip(1) {
        let last_bin = i == edges.len() - 1;
        let lo = kept.last().expect("non-empty");
        if last_bin || sorted.iter().any(|v| v >= lo && v < edge) {
            kept.push(edge.clone());
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{OpKind, Param, VarDecl};

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn log2_exact_on_powers_of_two() {
        for k in [0u64, 1, 5, 10, 40, 63, 64, 100] {
            let n = BigInt::one() << k;
            assert_eq!(log2_fixed(&n), rat(k as i64, 1), "k={k}");
        }
    }

    #[test]
    fn log2_of_ten_matches_reference() {
        let approx = log2_fixed(&BigInt::from(10)).to_f64().unwrap();
        assert!((approx - 10f64.log2()).abs() < 3e-6, "got {approx}");
    }

    #[test]
    fn log2_monotone() {
        let mut prev = log2_fixed(&BigInt::one());
        for n in 2..2000 {
            let cur = log2_fixed(&BigInt::from(n));
            assert!(cur > prev, "not strictly monotone at {n}");
            prev = cur;
        }
    }

    fn pair_sum_family() -> ProbeFamily {
        let domain = Some((Expr::int(0), Expr::int(9)));
        ProbeFamily {
            id: "pair_sum".into(),
            vars: vec![
                VarDecl { name: "a".into(), sort: Sort::Int, domain: domain.clone() },
                VarDecl { name: "b".into(), sort: Sort::Int, domain },
            ],
            constraints: vec![
                Expr::apply(
                    OpKind::Eq,
                    vec![
                        Expr::apply(OpKind::Add, vec![Expr::var("a"), Expr::var("b")]),
                        Expr::int(10),
                    ],
                ),
                Expr::apply(OpKind::Ge, vec![Expr::var("a"), Expr::int(2)]),
                Expr::apply(OpKind::Ge, vec![Expr::var("b"), Expr::int(3)]),
            ],
            answer: Expr::var("a"),
            template: "a?".into(),
            ..ProbeFamily::default()
        }
    }

    #[test]
    fn pair_sum_descriptor() {
        let theta = compute_descriptor(&pair_sum_family(), None);
        assert_eq!((theta.c, theta.d, theta.kappa, theta.ell), (3, 0, 1, 1));
        assert_eq!(theta.expr_size, 12);
        let two_log_ten = log2_fixed(&BigInt::from(10)) * rat(2, 1);
        assert_eq!(theta.state_space_log2, two_log_ten);
    }

    #[test]
    fn descriptor_invariant_under_conjunction_packaging() {
        let mut packed = pair_sum_family();
        packed.constraints = vec![Expr::apply(OpKind::And, packed.constraints.clone())];
        assert_eq!(compute_descriptor(&packed, None), compute_descriptor(&pair_sum_family(), None));
    }

    #[test]
    fn state_space_follows_parameter_point() {
        let f = ProbeFamily {
            id: "param_dom".into(),
            params: vec![Param { name: "n".into(), lo: 1, hi: 9 }],
            vars: vec![VarDecl {
                name: "x".into(),
                sort: Sort::Int,
                domain: Some((Expr::int(1), Expr::var("n"))),
            }],
            constraints: vec![Expr::apply(OpKind::Ge, vec![Expr::var("x"), Expr::int(1)])],
            answer: Expr::var("x"),
            template: "x?".into(),
            ..ProbeFamily::default()
        };
        // Midpoint n=5 → log2(5); explicit n=8 → exactly 3.
        assert_eq!(compute_descriptor(&f, None).state_space_log2, log2_fixed(&BigInt::from(5)));
        let at8: BTreeMap<String, i64> = [("n".to_string(), 8i64)].into_iter().collect();
        assert_eq!(compute_descriptor(&f, Some(&at8)).state_space_log2, rat(3, 1));
    }

    #[test]
    fn quantile_edges_match_interpolation_oracle() {
        let values: Vec<BigRational> = (1i64..=100).map(|v| rat(v, 1)).collect();
        let edges = bin_axis(&values, 4);
        assert_eq!(edges, vec![rat(1, 1), rat(103, 4), rat(101, 2), rat(301, 4), rat(100, 1)]);
    }

    #[test]
    fn sparse_data_merges_empty_bins() {
        let edges = bin_axis(&[rat(1, 1), rat(2, 1)], 6);
        assert_eq!(edges, vec![rat(1, 1), rat(7, 6), rat(2, 1)]);
    }

    #[test]
    fn constant_axis_degenerates_to_one_bin() {
        let edges = bin_axis(&vec![rat(4, 1); 5], 5);
        assert_eq!(edges, vec![rat(4, 1), rat(4, 1)]);
    }

    #[test]
    fn duplicate_heavy_data_keeps_occupied_bins() {
        // Two point masses: interpolation puts one edge between them and
        // dedup collapses the rest; every surviving bin holds data.
        let mut values = vec![rat(0, 1); 50];
        values.extend(std::iter::repeat(rat(10, 1)).take(50));
        let edges = bin_axis(&values, 6);
        assert_eq!(edges, vec![rat(0, 1), rat(5, 1), rat(10, 1)]);
        for w in edges.windows(2) {
            assert!(w[0] < w[1]);
        }
    }
}

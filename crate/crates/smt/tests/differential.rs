//! Differential testing: the declaration-order and reverse-order searches
//! must agree with a brute-force enumeration oracle on random systems.

use proptest::prelude::*;
use xray_smt::{solve_script, Options, SatResult, Strategy as Order, Val};

#[derive(Debug, Clone)]
enum Atom {
    // sum of coeff*var + k, compared against zero
    Le(Vec<i64>, i64),
    Eq(Vec<i64>, i64),
    ModEq { var: usize, modulus: i64, residue: i64 },
}

#[derive(Debug, Clone)]
struct System {
    bounds: Vec<(i64, i64)>,
    atoms: Vec<Atom>,
}

fn smt_int(n: i64) -> String {
    if n < 0 {
        format!("(- {})", -n)
    } else {
        n.to_string()
    }
}

fn render(system: &System) -> String {
    let mut s = String::from("(set-logic QF_LIA)\n");
    for (i, (lo, hi)) in system.bounds.iter().enumerate() {
        s.push_str(&format!("(declare-const x{i} Int)\n"));
        s.push_str(&format!("(assert (>= x{i} {}))\n", smt_int(*lo)));
        s.push_str(&format!("(assert (<= x{i} {}))\n", smt_int(*hi)));
    }
    for atom in &system.atoms {
        match atom {
            Atom::Le(coeffs, k) | Atom::Eq(coeffs, k) => {
                let rel = if matches!(atom, Atom::Le(..)) { "<=" } else { "=" };
                let terms: Vec<String> = coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| format!("(* {} x{i})", smt_int(*c)))
                    .collect();
                s.push_str(&format!(
                    "(assert ({rel} (+ {} {}) 0))\n",
                    terms.join(" "),
                    smt_int(*k)
                ));
            }
            Atom::ModEq { var, modulus, residue } => {
                s.push_str(&format!(
                    "(assert (= (mod x{var} {modulus}) {}))\n",
                    smt_int(*residue)
                ));
            }
        }
    }
    s.push_str("(check-sat)\n");
    s
}

fn holds(atom: &Atom, point: &[i64]) -> bool {
    match atom {
        Atom::Le(coeffs, k) => {
            coeffs.iter().zip(point).map(|(c, x)| c * x).sum::<i64>() + k <= 0
        }
        Atom::Eq(coeffs, k) => {
            coeffs.iter().zip(point).map(|(c, x)| c * x).sum::<i64>() + k == 0
        }
        Atom::ModEq { var, modulus, residue } => point[*var].rem_euclid(*modulus) == *residue,
    }
}

fn brute_force_sat(system: &System) -> bool {
    let mut point: Vec<i64> = system.bounds.iter().map(|(lo, _)| *lo).collect();
    loop {
        if system.atoms.iter().all(|a| holds(a, &point)) {
            return true;
        }
        let mut i = 0;
        loop {
            if i == point.len() {
                return false;
            }
            point[i] += 1;
            if point[i] <= system.bounds[i].1 {
                break;
            }
            point[i] = system.bounds[i].0;
            i += 1;
        }
    }
}

fn arb_system() -> impl Strategy<Value = System> {
    let nvars = 2..=3usize;
    nvars.prop_flat_map(|n| {
        let bounds = prop::collection::vec((-6i64..=2, 0i64..=6).prop_map(|(a, b)| (a, a + b)), n);
        let linear = (prop::collection::vec(-3i64..=3, n), -8i64..=8);
        let atom = prop_oneof![
            linear.clone().prop_map(|(c, k)| Atom::Le(c, k)),
            linear.prop_map(|(c, k)| Atom::Eq(c, k)),
            (0..n, 2i64..=4).prop_flat_map(|(var, modulus)| {
                (Just(var), Just(modulus), 0..modulus)
                    .prop_map(|(var, modulus, residue)| Atom::ModEq { var, modulus, residue })
            }),
        ];
        (bounds, prop::collection::vec(atom, 1..=4)).prop_map(|(bounds, atoms)| System {
            bounds,
            atoms,
        })
    })
}

fn satisfies(system: &System, assignment: &[(String, Val)]) -> bool {
    let point: Vec<i64> = assignment
        .iter()
        .map(|(_, v)| match v {
            Val::Int(n) => i64::try_from(n.clone()).unwrap(),
            other => panic!("integer system produced {other:?}"),
        })
        .collect();
    point
        .iter()
        .zip(&system.bounds)
        .all(|(x, (lo, hi))| lo <= x && x <= hi)
        && system.atoms.iter().all(|a| holds(a, &point))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn strategies_agree_with_enumeration(system in arb_system()) {
        let script = render(&system);
        let expected = brute_force_sat(&system);

        for strategy in [Order::Default, Order::Reverse] {
            let options = Options { strategy, ..Options::default() };
            let (verdict, assignment) = solve_script(&script, options).unwrap();
            let want = if expected { SatResult::Sat } else { SatResult::Unsat };
            prop_assert_eq!(verdict, want, "strategy {:?} on\n{}", strategy, script);
            if expected {
                prop_assert!(
                    satisfies(&system, &assignment),
                    "strategy {:?} returned a non-model on\n{}",
                    strategy,
                    script
                );
            }
        }
    }
}

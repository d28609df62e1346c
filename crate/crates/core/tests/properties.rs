//! Property-based checks of the algebraic contracts: mechanism inversion,
//! conditional unbiasedness of inverse weighting, frequency recovery, and
//! solver invariances, over randomly generated valid inputs.

use proptest::prelude::*;

use pram_core::estfun::{build_custom, build_mean};
use pram_core::mechanism::{
    perturb_levels, project_to_simplex, recover_frequencies, FrequencyVector,
};
use pram_core::solver::{solve, Init, SolverConfig, WeightScheme};
use pram_core::{Dataset, TransitionMatrix};

/// Random column-stochastic matrix with diagonals above one half, so it is
/// strictly diagonally dominant by columns and therefore invertible.
fn transition_strategy(k: usize) -> impl Strategy<Value = TransitionMatrix> {
    (
        proptest::collection::vec(0.55..0.95f64, k),
        proptest::collection::vec(0.01..1.0f64, k * k),
    )
        .prop_map(move |(diags, raw)| {
            let mut rows = vec![vec![0.0; k]; k];
            for j in 0..k {
                let others: Vec<usize> = (0..k).filter(|&i| i != j).collect();
                let total: f64 = others.iter().map(|&i| raw[j * k + i]).sum();
                rows[j][j] = diags[j];
                let rest = 1.0 - diags[j];
                let mut acc = 0.0;
                for (idx, &i) in others.iter().enumerate() {
                    let share = if idx + 1 == others.len() {
                        rest - acc
                    } else {
                        let s = rest * raw[j * k + i] / total;
                        acc += s;
                        s
                    };
                    rows[i][j] = share;
                }
            }
            TransitionMatrix::from_rows(&rows).expect("constructed matrix is valid")
        })
}

fn simplex_strategy(k: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.05..1.0f64, k).prop_map(|raw| {
        let total: f64 = raw.iter().sum();
        raw.iter().map(|v| v / total).collect()
    })
}

proptest! {
    #[test]
    fn inverse_columns_sum_to_one_and_roundtrip(
        p in (2usize..=6).prop_flat_map(transition_strategy),
    ) {
        let k = p.levels();
        let q = p.invert()?;
        for i in 0..k {
            let s: f64 = q.column(i).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9, "column {i} sums to {s}");
        }
        let prod = q.matrix().mat_mul(p.matrix());
        for r in 0..k {
            for c in 0..k {
                let expected = if r == c { 1.0 } else { 0.0 };
                prop_assert!((prod.get(r, c) - expected).abs() < 1e-9);
            }
        }
    }
}

proptest! {
    #[test]
    fn mixing_back_through_p_restores_the_plain_function(
        p in transition_strategy(3),
        table in proptest::collection::vec(-5.0..5.0f64, 2 * 3),
    ) {
        // phi(i) = sum_k' U(k') q_{k' i}; mixing by the mechanism must give
        // back U exactly: sum_i P[i,k] phi(i) = U(k).
        let q = p.invert()?;
        let d = 2usize;
        let k = 3usize;
        for target in 0..k {
            for r in 0..d {
                let mut back = 0.0;
                for i in 0..k {
                    let mut phi = 0.0;
                    for kp in 0..k {
                        phi += table[r * k + kp] * q.entry(kp, i);
                    }
                    back += p.entry(i, target) * phi;
                }
                prop_assert!(
                    (back - table[r * k + target]).abs() < 1e-9,
                    "coordinate {r}, level {target}: {back} vs {}",
                    table[r * k + target]
                );
            }
        }
    }
}

proptest! {
    #[test]
    fn frequency_recovery_inverts_the_forward_map(
        p in transition_strategy(4),
        pi in simplex_strategy(4),
    ) {
        let forward = p.matrix().mul_vec(&pi);
        let observed = FrequencyVector::proper(forward)?;
        let recovered = recover_frequencies(&p.invert()?, &observed)?;
        for j in 0..4 {
            prop_assert!((recovered.raw[j] - pi[j]).abs() < 1e-9);
        }
        // pi is strictly interior, so the recovery must land inside too.
        prop_assert!(!recovered.outside_simplex);
    }
}

proptest! {
    #[test]
    fn simplex_projection_lands_on_the_simplex_and_fixes_members(
        raw in proptest::collection::vec(-2.0..2.0f64, 3),
        pi in simplex_strategy(3),
    ) {
        let projected = project_to_simplex(&raw);
        let sum: f64 = projected.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(projected.iter().all(|v| *v >= 0.0));

        let fixed = project_to_simplex(&pi);
        for j in 0..3 {
            prop_assert!((fixed[j] - pi[j]).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn positive_rescaling_of_weights_keeps_the_root(
        p in transition_strategy(2),
        levels in proptest::collection::vec(0usize..2, 12..40),
        alpha in 0.1..10.0f64,
    ) {
        let mut d = Dataset::new(2).unwrap();
        d.set_perturbed_levels(levels.clone()).unwrap();
        let f = build_mean(2);
        let q = p.invert()?;
        let w = WeightScheme::inverse_transition(&d, &q)?;
        let scaled = w.with_multipliers(&vec![alpha; levels.len()])?;
        let cfg = SolverConfig { init: Init::Fixed(vec![0.0]), ..SolverConfig::default() };
        let a = solve(&d, &f, &w, &cfg)?;
        let b = solve(&d, &f, &scaled, &cfg)?;
        prop_assert!((a.beta[0] - b.beta[0]).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn perturbation_is_seed_deterministic_and_level_preserving(
        p in transition_strategy(3),
        levels in proptest::collection::vec(0usize..3, 1..200),
        seed in 0u64..u64::MAX,
    ) {
        let a = perturb_levels(&levels, &p, seed)?;
        let b = perturb_levels(&levels, &p, seed)?;
        prop_assert_eq!(&a, &b);
        prop_assert!(a.iter().all(|&l| l < 3));
        prop_assert_eq!(a.len(), levels.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn custom_functions_without_jacobian_still_solve(
        levels in proptest::collection::vec(0usize..2, 20..60),
        shift in -1.0..1.0f64,
    ) {
        // U(k) = k + shift - beta has root mean(level) + shift.
        let f = build_custom(
            2,
            1,
            vec![
                Box::new(move |_: &Dataset, _, b: &[f64], out: &mut [f64]| {
                    out[0] = 0.0 + shift - b[0];
                }),
                Box::new(move |_: &Dataset, _, b: &[f64], out: &mut [f64]| {
                    out[0] = 1.0 + shift - b[0];
                }),
            ],
        )
        .unwrap();
        let mut d = Dataset::new(2).unwrap();
        d.set_original_levels(levels.clone()).unwrap();
        let w = WeightScheme::indicator_original(&d)?;
        let sol = solve(&d, &f, &w, &SolverConfig::default())?;
        let expected =
            levels.iter().map(|&l| l as f64).sum::<f64>() / levels.len() as f64 + shift;
        prop_assert!((sol.beta[0] - expected).abs() < 1e-8);
        prop_assert!(sol.diagnostics.converged);
    }
}

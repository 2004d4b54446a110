use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use frep::experiments::{ecdf_table, run_repp, ExperimentConfig};
use frep::fractional::{rl_integral, uniform_grid, GridFunction};
use frep::laws::{
    empirical_laplace, geometric_chi_square, sample_renewal_process, thin_rescale, LawSpec,
};
use frep::lsv::{
    build_boundary_table, evaluate_map, pull_back, BoundaryTable, MapParams, SymbolWord,
};
use frep::measure::estimate_induced_measure;
use frep::rng::trial_rng;
use frep::targets::{cylinder_of_point, cylinder_of_word, Interval};

fn table(p: f64) -> BoundaryTable {
    build_boundary_table(&MapParams::new(p).unwrap(), 64).unwrap()
}

/// Admissible words: after a symbol `a > 0` comes `a - 1`; after `0` anything.
fn word_strategy() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0u64..6, 1..6).prop_map(|seeds| {
        let mut out = Vec::new();
        for s in seeds {
            if out.last().is_some_and(|&a: &u64| a > 0) {
                let a = *out.last().unwrap();
                out.extend((0..a).rev());
            }
            out.push(s);
        }
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pull_back_inverts_the_map(p in 1.0f64..3.0, word in word_strategy(), y in 0.5f64..1.0) {
        let params = MapParams::new(p).unwrap();
        let x = pull_back(&params, &word, y).unwrap();
        let mut z = x;
        for _ in &word {
            z = evaluate_map(&params, z).unwrap().0;
        }
        prop_assert!((z - y).abs() < 1e-9 * (1.0 + word.len() as f64));
    }

    #[test]
    fn cylinders_nest(p in prop::sample::select(vec![1.0, 1.5, 2.0]), word in word_strategy()) {
        let t = table(p);
        let w = SymbolWord::new(word.clone()).unwrap();
        let full = cylinder_of_word(&t, &w).unwrap();
        for k in 1..word.len() {
            let outer = cylinder_of_word(&t, &w.prefix(k)).unwrap();
            prop_assert!(full.lo >= outer.lo - 1e-15 && full.hi <= outer.hi + 1e-15);
        }
    }

    #[test]
    fn cylinder_of_point_contains_the_point(p in 1.0f64..2.5, x in 0.01f64..1.0, n in 1usize..8) {
        let t = build_boundary_table(&MapParams::new(p).unwrap(), 64).unwrap();
        if let Ok(b) = cylinder_of_point(&t, x, n) {
            prop_assert!(b.lo() <= x && x <= b.hi());
            prop_assert_eq!(b.word.len(), n);
            prop_assert!(SymbolWord::new(b.word.symbols().to_vec()).is_ok());
        }
    }

    #[test]
    fn renewal_samples_are_ordered_and_marked(alpha in 0.3f64..1.0, theta in 0.2f64..1.0, seed: u64) {
        let spec = LawSpec::Cfpp { alpha, lambda: 1.0, theta };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = sample_renewal_process(&spec, 5.0, &mut rng).unwrap();
        prop_assert!(s.times.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(s.times.iter().all(|&t| (0.0..=5.0).contains(&t)));
        prop_assert!(s.marks.iter().all(|&m| m >= 1));
        prop_assert_eq!(s.times.len(), s.marks.len());
    }

    #[test]
    fn thinning_keeps_a_rescaled_subset(tau in 0.1f64..1.0, v in 0.2f64..5.0, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = sample_renewal_process(&LawSpec::Ppp { lambda: 3.0 }, 4.0, &mut rng).unwrap();
        let t = thin_rescale(&s, tau, v, &mut rng).unwrap();
        prop_assert!((t.horizon - 4.0 * v).abs() < 1e-12);
        let scaled: Vec<f64> = s.times.iter().map(|x| x * v).collect();
        prop_assert!(t.times.iter().all(|x| scaled.iter().any(|y| (x - y).abs() < 1e-12)));
        let same = thin_rescale(&s, 1.0, 1.0, &mut rng).unwrap();
        prop_assert_eq!(same, s);
    }

    #[test]
    fn empirical_laplace_is_a_decreasing_probability(
        xs in prop::collection::vec(0.0f64..10.0, 1..50),
        censored in 0usize..10,
        s in 0.01f64..5.0,
    ) {
        let (a, _) = empirical_laplace(&xs, censored, s);
        let (b, _) = empirical_laplace(&xs, censored, 2.0 * s);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b <= a + 1e-15);
    }

    #[test]
    fn ecdf_rows_are_monotone(xs in prop::collection::vec(0.0f64..5.0, 1..100), extra in 0u64..20) {
        let trials = xs.len() as u64 + extra;
        let rows = ecdf_table(&xs, trials, 5.0, 51);
        prop_assert!(rows.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
        prop_assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.1) && r.2 >= 0.0));
    }

    #[test]
    fn rl_integral_of_a_power(beta in 0.2f64..1.5, k in 0u32..3) {
        // I^β t^k = k! / Γ(k+1+β) t^{k+β}, exact for piecewise-linear f when k ≤ 1.
        let grid = uniform_grid(0.01, 1.0).unwrap();
        let k = k.min(1) as i32;
        let f = GridFunction::from_fn(&grid, |t| t.powi(k)).unwrap();
        let i = rl_integral(&f, beta, &[1.0]).unwrap();
        let exact = 1.0 / statrs::function::gamma::gamma(k as f64 + 1.0 + beta);
        prop_assert!((i.values()[0] - exact).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn induced_measure_is_additive(p in prop::sample::select(vec![1.0, 2.0]), m in 0.55f64..0.95, seed: u64) {
        let t = table(p);
        let sets = [
            Interval::new(0.5, m).unwrap(),
            Interval::new(m, 1.0).unwrap(),
            Interval::new(0.5, 1.0).unwrap(),
        ];
        let e = estimate_induced_measure(&t, &sets, 200_000, 1000, seed).unwrap();
        prop_assert!((e[0].value + e[1].value - e[2].value).abs() < 1e-12);
        prop_assert!((e[2].value - 1.0).abs() < 1e-12);
    }
}

#[test]
fn exact_geometric_counts_fit() {
    let theta = 0.5;
    let hist: Vec<u64> = (0..60)
        .map(|k| {
            if k == 0 {
                0
            } else {
                (1e6 * theta * (1.0f64 - theta).powi(k - 1)).round() as u64
            }
        })
        .collect();
    let c = geometric_chi_square(&hist, theta).unwrap();
    assert!(c.p_value > 0.99, "{c:?}");
    let off: Vec<u64> = (0..60)
        .map(|k| {
            if k == 0 {
                0
            } else {
                (1e6 * 0.7 * 0.3f64.powi(k - 1)).round() as u64
            }
        })
        .collect();
    assert!(geometric_chi_square(&off, theta).unwrap().p_value < 1e-6);
}

#[test]
fn trial_streams_are_reproducible_and_distinct() {
    use rand::RngCore;
    let a = trial_rng(1, 2, 3).next_u64();
    assert_eq!(a, trial_rng(1, 2, 3).next_u64());
    assert_ne!(a, trial_rng(1, 2, 4).next_u64());
    assert_ne!(a, trial_rng(1, 3, 3).next_u64());
    assert_ne!(a, trial_rng(2, 2, 3).next_u64());
}

#[test]
fn config_file_and_overrides() {
    let mut cfg =
        ExperimentConfig::from_kv_str("# comment\np = 1.5\ndepths = 4, 6\nmode = both\n").unwrap();
    assert_eq!(cfg.p, 1.5);
    assert_eq!(cfg.depths, vec![4, 6]);
    cfg.set("trials", "1234").unwrap();
    assert_eq!(cfg.trials, 1234);
    assert!(cfg.set("no_such_key", "1").is_err());
    assert!(cfg.require_seed().is_err());
    let bad = ExperimentConfig::from_kv_str("p = 0.5\nseed = 1\n").unwrap();
    assert!(run_repp(&bad).is_err());
}

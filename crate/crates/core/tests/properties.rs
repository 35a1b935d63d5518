use kdpp_core::combin::{colex_rank, Combinations};
use kdpp_core::diagonal::{
    inclusion_basic, inclusion_corrected_all, inclusion_exact, inclusion_exact_all, ConditionalRule,
    DiagonalKdppSampler,
};
use kdpp_core::esp::{esp_exact, esp_saddlepoint_all, solve_saddlepoint, SOLVER_TOLERANCE};
use kdpp_core::kdpp::{match_dpp, random_orthonormal, sample_projection_dpp};
use kdpp_core::numeric::binomial;
use kdpp_core::{LEnsemble, Spectrum};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn spectrum_strategy(min: usize, max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..50.0, min..=max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn esp_scales_homogeneously(values in spectrum_strategy(1, 30), log_beta in -20.0f64..20.0) {
        let s = Spectrum::new(values).unwrap();
        let t = s.scaled(log_beta.exp()).unwrap();
        let (a, b) = (esp_exact(&s), esp_exact(&t));
        for k in 0..=s.len() {
            let expected = a.get(k) + k as f64 * log_beta;
            prop_assert!((b.get(k) - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn esp_is_log_concave(values in spectrum_strategy(3, 40)) {
        // Newton's inequality: e_k² / C(n,k)² ≥ e_{k-1} e_{k+1} / (C(n,k-1) C(n,k+1))
        let s = Spectrum::new(values).unwrap();
        let n = s.len();
        let e = esp_exact(&s);
        for k in 1..n {
            let lhs = 2.0 * (e.get(k) - binomial(n, k).ln());
            let rhs = e.get(k - 1) - binomial(n, k - 1).ln() + e.get(k + 1) - binomial(n, k + 1).ln();
            prop_assert!(lhs >= rhs - 1e-9);
        }
    }

    #[test]
    fn saddlepoint_solves_equation(values in spectrum_strategy(2, 80), frac in 0.0f64..1.0) {
        let s = Spectrum::new(values).unwrap();
        let n = s.len();
        let k = 1 + ((n - 1) as f64 * frac) as usize % (n - 1);
        let sol = solve_saddlepoint(&s, k, None).unwrap();
        prop_assert!((sol.psi1 - k as f64).abs() <= SOLVER_TOLERANCE * k as f64);
        prop_assert!(sol.psi2 > 0.0);
    }

    #[test]
    fn saddlepoint_esp_stays_in_band(values in spectrum_strategy(5, 60)) {
        let s = Spectrum::new(values).unwrap();
        let exact = esp_exact(&s);
        let approx = esp_saddlepoint_all(&s);
        prop_assert!(approx.failures().is_empty());
        for k in 1..s.len() {
            prop_assert!((approx.get(k) - exact.get(k)).abs() <= 1.09f64.ln());
        }
    }

    #[test]
    fn inclusion_sums_and_bounds(values in spectrum_strategy(2, 40), frac in 0.0f64..1.0) {
        let s = Spectrum::new(values).unwrap();
        let n = s.len();
        let k = 1 + ((n - 1) as f64 * frac) as usize % (n - 1);
        let exact = inclusion_exact_all(&s, k).unwrap();
        let basic = inclusion_basic(&s, k).unwrap();
        prop_assert!((exact.probabilities.total() - k as f64).abs() <= 1e-10 * k as f64);
        prop_assert!((basic.probabilities.total() - k as f64).abs() <= 1e-8);
        for p in exact.probabilities.values().iter().chain(basic.probabilities.values()) {
            prop_assert!((0.0..=1.0 + 1e-9).contains(p));
        }
        inclusion_corrected_all(&s, k).unwrap();
    }

    #[test]
    fn exact_inclusion_is_monotone_in_lambda(values in spectrum_strategy(3, 20)) {
        let s = Spectrum::new(values.clone()).unwrap();
        let k = values.len() / 2;
        prop_assume!(k >= 1);
        let p = inclusion_exact_all(&s, k).unwrap();
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] > values[j] {
                    prop_assert!(p.probabilities.values()[i] >= p.probabilities.values()[j] - 1e-12);
                }
            }
        }
    }

    #[test]
    fn sampler_always_returns_k_items(values in spectrum_strategy(1, 90), frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let s = Spectrum::new(values).unwrap();
        let k = (s.len() as f64 * frac) as usize;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        for rule in [ConditionalRule::Exact, ConditionalRule::Corrected] {
            let sampler = DiagonalKdppSampler::new(&s, k, rule).unwrap();
            for _ in 0..5 {
                prop_assert_eq!(sampler.sample(&mut rng).len(), k);
            }
        }
    }

    #[test]
    fn projection_sampler_returns_rank_items(n in 1usize..30, frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let k = ((n as f64) * frac) as usize;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let v = random_orthonormal(n, k, &mut rng).unwrap();
        let x = sample_projection_dpp(&v, &mut rng).unwrap();
        prop_assert_eq!(x.len(), k);
    }

    #[test]
    fn matched_trace_is_k(seed in any::<u64>(), n in 3usize..25) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let l = LEnsemble::from_matrix(&a * a.transpose()).unwrap();
        for k in 1..n.min(l.numerical_rank() + 1) {
            let kernel = match_dpp(&l, k).unwrap();
            prop_assert!((kernel.trace() - k as f64).abs() <= 1e-8);
            prop_assert!(kernel.eta.iter().all(|e| (0.0..=1.0 + 1e-10).contains(e)));
        }
    }
}

#[test]
fn colex_rank_enumerates_positions() {
    for (n, m) in [(7, 0), (7, 1), (7, 3), (9, 4), (6, 6)] {
        for (i, c) in Combinations::new(n, m).enumerate() {
            assert_eq!(colex_rank(&c), i);
        }
        assert_eq!(Combinations::new(n, m).count() as f64, binomial(n, m));
    }
}

#[test]
fn order_m_sum_rule_up_to_fifteen_items() {
    let mut rng = ChaCha12Rng::seed_from_u64(99);
    let s = Spectrum::uniform(15, 0.2, 6.0, &mut rng).unwrap();
    for k in [1, 4, 9, 15] {
        for m in 1..=3.min(k) {
            let total: f64 = Combinations::new(15, m)
                .map(|a| inclusion_exact(&s, k, &a).unwrap())
                .sum();
            assert!((total / binomial(k, m) - 1.0).abs() < 1e-8);
        }
    }
}

//! Ground truth at small `n`: full enumeration of the pmf, exact inclusion
//! measures, total variation distances and Monte Carlo estimates.

use crate::combin::Combinations;
use crate::error::{invalid, Error, Result};
use crate::kdpp::SampleSet;
use crate::linalg::psd_minor;
use crate::measure::InclusionMeasure;
use crate::numeric::{binomial, binomial_u128};
use crate::spectrum::LEnsemble;

/// Largest support enumerated for a k-DPP.
pub const MAX_SUBSETS: u128 = 2_000_000;
/// Largest ground set enumerated for a variable-size DPP.
pub const MAX_DPP_ITEMS: usize = 22;

/// Normalised pmf over an explicitly listed support.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedPmf {
    pub n: usize,
    /// Sorted subsets, by size then colex order.
    pub subsets: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
    /// `Σ det L_X` over the support before normalisation.
    pub normalizer: f64,
    /// `Some(k)` for a k-DPP.
    pub fixed_size: Option<usize>,
}

impl EnumeratedPmf {
    pub fn probability(&self, subset: &[usize]) -> Option<f64> {
        self.subsets
            .iter()
            .position(|s| s.as_slice() == subset)
            .map(|i| self.weights[i])
    }

    fn from_unnormalised(
        n: usize,
        subsets: Vec<Vec<usize>>,
        mut weights: Vec<f64>,
        fixed_size: Option<usize>,
    ) -> Result<Self> {
        let normalizer: f64 = weights.iter().sum();
        if !(normalizer > 0.0) {
            return Err(Error::Degenerate("every subset has zero weight".into()));
        }
        for w in &mut weights {
            *w /= normalizer;
        }
        Ok(Self {
            n,
            subsets,
            weights,
            normalizer,
            fixed_size,
        })
    }
}

/// k-DPP pmf `det L_X / Σ_{|Y|=k} det L_Y`.
pub fn enumerate_kdpp(ensemble: &LEnsemble, k: usize) -> Result<EnumeratedPmf> {
    let n = ensemble.n();
    if k > n {
        return Err(invalid(format!("k={k} exceeds n={n}")));
    }
    let required = binomial_u128(n, k);
    if required > MAX_SUBSETS {
        return Err(Error::SizeGuard {
            required,
            limit: MAX_SUBSETS,
        });
    }
    let subsets: Vec<Vec<usize>> = Combinations::new(n, k).collect();
    let weights = subsets
        .iter()
        .map(|s| psd_minor(ensemble.matrix(), s))
        .collect();
    EnumeratedPmf::from_unnormalised(n, subsets, weights, Some(k))
}

/// DPP pmf `det L_X / det(I + L)` over all `2ⁿ` subsets.
pub fn enumerate_dpp(ensemble: &LEnsemble) -> Result<EnumeratedPmf> {
    let n = ensemble.n();
    if n > MAX_DPP_ITEMS {
        return Err(Error::SizeGuard {
            required: 1u128 << n,
            limit: 1u128 << MAX_DPP_ITEMS,
        });
    }
    let subsets: Vec<Vec<usize>> = (0..=n).flat_map(|k| Combinations::new(n, k)).collect();
    let weights = subsets
        .iter()
        .map(|s| psd_minor(ensemble.matrix(), s))
        .collect();
    EnumeratedPmf::from_unnormalised(n, subsets, weights, None)
}

/// `p(α ⊆ X) = Σ_{X ⊇ α} p(X)` for every `|α| = m`.
pub fn exact_inclusion(pmf: &EnumeratedPmf, m: usize) -> Result<InclusionMeasure> {
    if let Some(k) = pmf.fixed_size {
        if m > k {
            return Err(invalid(format!("order m={m} exceeds k={k}")));
        }
    }
    let mut out = InclusionMeasure::zeros(pmf.n, m)?;
    let mut alpha = Vec::with_capacity(m);
    for (x, &w) in pmf.subsets.iter().zip(&pmf.weights) {
        if x.len() < m || w == 0.0 {
            continue;
        }
        for pos in Combinations::new(x.len(), m) {
            alpha.clear();
            alpha.extend(pos.iter().map(|&p| x[p]));
            out.add_sorted(&alpha, w);
        }
    }
    Ok(out)
}

/// `D_m = Σ_α |p(α) - q(α)| / C(k, m)`.
pub fn tv_distance(p: &InclusionMeasure, q: &InclusionMeasure, k: usize, m: usize) -> Result<f64> {
    if p.order() != m || q.order() != m || p.n() != q.n() {
        return Err(invalid(format!(
            "measures of order {} and {} over {} and {} items, expected order {m}",
            p.order(),
            q.order(),
            p.n(),
            q.n()
        )));
    }
    if m > k {
        return Err(invalid(format!("order m={m} exceeds k={k}")));
    }
    let l1: f64 = p
        .values()
        .iter()
        .zip(q.values())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(l1 / binomial(k, m))
}

/// Monte Carlo frequency with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std: f64,
    pub draws: usize,
}

impl McEstimate {
    fn from_count(hits: usize, draws: usize) -> Self {
        let p = hits as f64 / draws as f64;
        Self {
            estimate: p,
            std: (p * (1.0 - p) / draws as f64).sqrt(),
            draws,
        }
    }

    /// `|estimate - value| ≤ sigmas · std`.
    pub fn covers(&self, value: f64, sigmas: f64) -> bool {
        (self.estimate - value).abs() <= sigmas * self.std
    }
}

/// Frequency of `α ⊆ X` over `draws` calls of `sample`.
pub fn mc_inclusion<F>(sample: F, alpha: &[usize], draws: usize) -> Result<McEstimate>
where
    F: FnMut() -> Result<SampleSet>,
{
    Ok(mc_inclusion_many(sample, &[alpha.to_vec()], draws)?[0])
}

/// Frequencies of several subsets from one shared set of draws.
pub fn mc_inclusion_many<F>(mut sample: F, alphas: &[Vec<usize>], draws: usize) -> Result<Vec<McEstimate>>
where
    F: FnMut() -> Result<SampleSet>,
{
    if draws == 0 {
        return Err(invalid("at least one draw is required"));
    }
    let mut hits = vec![0usize; alphas.len()];
    for _ in 0..draws {
        let x = sample()?;
        for (h, alpha) in hits.iter_mut().zip(alphas) {
            if x.contains_all(alpha) {
                *h += 1;
            }
        }
    }
    Ok(hits.into_iter().map(|h| McEstimate::from_count(h, draws)).collect())
}

/// Singleton frequencies for all `n` items.
pub fn mc_first_order<F>(mut sample: F, n: usize, draws: usize) -> Result<Vec<McEstimate>>
where
    F: FnMut() -> Result<SampleSet>,
{
    if draws == 0 {
        return Err(invalid("at least one draw is required"));
    }
    let mut hits = vec![0usize; n];
    for _ in 0..draws {
        for &i in sample()?.indices() {
            hits[i] += 1;
        }
    }
    Ok(hits.into_iter().map(|h| McEstimate::from_count(h, draws)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagonal::{inclusion_basic, inclusion_exact};
    use crate::esp::esp_exact;
    use crate::diagonal::sample_diagonal_kdpp;
    use crate::kdpp::{random_orthonormal, SampleSet};
    use crate::spectrum::Spectrum;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn diag(values: &[f64]) -> LEnsemble {
        LEnsemble::from_matrix(DMatrix::from_diagonal(&DVector::from_row_slice(values))).unwrap()
    }

    fn random_psd(n: usize, rng: &mut impl Rng) -> LEnsemble {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        LEnsemble::from_matrix(&a * a.transpose()).unwrap()
    }

    #[test]
    fn uniform_examples() {
        let pmf = enumerate_kdpp(&diag(&[1.0, 1.0]), 1).unwrap();
        assert_eq!(pmf.weights, vec![0.5, 0.5]);
        let pmf = enumerate_kdpp(&diag(&[1.0, 1.0, 1.0]), 2).unwrap();
        for w in &pmf.weights {
            assert_relative_eq!(*w, 1.0 / 3.0, epsilon = 1e-15);
        }
        let inc = exact_inclusion(&pmf, 1).unwrap();
        for p in inc.values() {
            assert_relative_eq!(*p, 2.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn normaliser_is_esp() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..10 {
            let l = random_psd(6, &mut rng);
            let pmf = enumerate_kdpp(&l, 3).unwrap();
            let e3 = esp_exact(l.spectrum()).get(3).exp();
            assert_relative_eq!(pmf.normalizer, e3, max_relative = 1e-8);
        }
    }

    #[test]
    fn dpp_normaliser_is_det_i_plus_l() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let l = random_psd(7, &mut rng);
        let pmf = enumerate_dpp(&l).unwrap();
        let expected: f64 = l.spectrum().values().iter().map(|v| 1.0 + v).product();
        assert_relative_eq!(pmf.normalizer, expected, max_relative = 1e-10);
        assert_relative_eq!(pmf.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        // DPP sum rule: Σ p(i) = E|X| = Σ λ/(1+λ)
        let inc = exact_inclusion(&pmf, 1).unwrap();
        assert_relative_eq!(inc.total(), l.spectrum().mu(), epsilon = 1e-10);
    }

    #[test]
    fn size_guards() {
        let l = diag(&vec![1.0; 40]);
        assert!(matches!(enumerate_kdpp(&l, 20), Err(Error::SizeGuard { .. })));
        assert!(matches!(enumerate_dpp(&l), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn order_k_inclusion_is_pmf() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let l = random_psd(6, &mut rng);
        let pmf = enumerate_kdpp(&l, 3).unwrap();
        let inc = exact_inclusion(&pmf, 3).unwrap();
        for (s, w) in pmf.subsets.iter().zip(&pmf.weights) {
            assert_eq!(inc.get(s).unwrap(), *w);
        }
        assert!(exact_inclusion(&pmf, 4).is_err());
    }

    #[test]
    fn diagonal_enumeration_matches_esp_ratio() {
        let values = [0.3, 2.0, 1.1, 4.0, 0.7];
        let pmf = enumerate_kdpp(&diag(&values), 2).unwrap();
        let inc = exact_inclusion(&pmf, 2).unwrap();
        let s = Spectrum::new(values.to_vec()).unwrap();
        for (alpha, p) in inc.iter() {
            assert!((p - inclusion_exact(&s, 2, &alpha).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_inclusions_are_minors() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let v = random_orthonormal(7, 3, &mut rng).unwrap();
        let p = &v * v.transpose();
        let pmf = enumerate_kdpp(&LEnsemble::from_matrix(p.clone()).unwrap(), 3).unwrap();
        for m in 1..=3 {
            for (alpha, q) in exact_inclusion(&pmf, m).unwrap().iter() {
                assert!((q - psd_minor(&p, &alpha)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tv_properties() {
        let s = Spectrum::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let pmf = enumerate_kdpp(&diag(s.values()), 2).unwrap();
        let exact = exact_inclusion(&pmf, 1).unwrap();
        assert_eq!(tv_distance(&exact, &exact, 2, 1).unwrap(), 0.0);
        let basic = inclusion_basic(&s, 2).unwrap().probabilities;
        assert!(tv_distance(&exact, &basic, 2, 1).unwrap() > 0.0);
        // sums 2 and 3 force D ≥ 1/2
        let shifted = InclusionMeasure::first_order(exact.values().iter().map(|p| p * 1.5).collect());
        assert!(tv_distance(&exact, &shifted, 2, 1).unwrap() >= 0.5 - 1e-12);
        let pairs = exact_inclusion(&pmf, 2).unwrap();
        assert!(tv_distance(&exact, &pairs, 2, 1).is_err());
    }

    #[test]
    fn mc_deterministic_and_fair() {
        let full = SampleSet::new(&[0, 1, 2], 3).unwrap();
        let est = mc_inclusion(|| Ok(full.clone()), &[0, 2], 50).unwrap();
        assert_eq!((est.estimate, est.std, est.draws), (1.0, 0.0, 50));
        let s = Spectrum::new(vec![1.0, 1.0]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let est = mc_inclusion(|| sample_diagonal_kdpp(&s, 1, &mut rng), &[0], 100_000).unwrap();
        assert!(est.covers(0.5, 3.0));
        assert!(mc_inclusion(|| Ok(full.clone()), &[0], 0).is_err());
    }
}

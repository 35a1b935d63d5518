//! The computations behind each subcommand, returned as plain reports so the
//! acceptance suite can check them without going through files.

use std::collections::BTreeSet;
use std::io::Write;

use anyhow::{bail, Result};
use rand::seq::index::sample as sample_indices;
use rand::Rng;

use kdpp_core::diagonal::{
    inclusion_basic, inclusion_corrected_all, inclusion_corrected_with, inclusion_exact,
    inclusion_exact_all, ConditionalRule, DiagonalKdppSampler,
};
use kdpp_core::esp::{esp_exact, esp_saddlepoint_all, esp_summation_unguarded, solve_saddlepoint, EspMethod};
use kdpp_core::inference::{fit_tau, LikelihoodCurve};
use kdpp_core::kdpp::{first_order_inclusion, high_order_with, match_dpp, InclusionMethod, KdppSampler};
use kdpp_core::measure::subset_label;
use kdpp_core::numeric::{binomial_u128, fmt17, ols_slope, sigmoid};
use kdpp_core::oracle::{enumerate_kdpp, exact_inclusion, mc_first_order, mc_inclusion_many, MAX_SUBSETS};
use kdpp_core::rng::{stream, stream_indexed, Stream};
use kdpp_core::{LEnsemble, PointCloud, SampleSet, Spectrum};

use crate::config::Source;

/// Saddlepoint-to-exact ESP ratios must lie in `[1/1.09, 1.09]`.
pub const ESP_RATIO_BAND: f64 = 1.09;
pub const SLOPE_BASIC_BAND: (f64, f64) = (-1.25, -0.75);
pub const SLOPE_CORRECTED_BAND: (f64, f64) = (-2.3, -1.7);
pub const GAP_TOLERANCE: f64 = 1e-9;
/// Share of Monte Carlo bands that must cover the corrected estimate.
pub const COVERAGE_TARGET: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct EspRow {
    pub k: usize,
    pub log_esp_exact: f64,
    pub log_esp_saddle: f64,
    pub ratio: f64,
    pub overflowed: bool,
    pub underflowed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EspReport {
    pub n: usize,
    pub positive: usize,
    pub rows: Vec<EspRow>,
    /// First `k` at which the unscaled recurrence stops being finite.
    pub first_overflow: Option<usize>,
    pub first_underflow: Option<usize>,
    pub saddle_failures: Vec<usize>,
}

impl EspReport {
    /// Largest `max(r, 1/r)` over the orders with a saddlepoint estimate,
    /// `1 ≤ k < positive`.
    pub fn worst_ratio(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.k < self.positive)
            .map(|r| r.ratio.max(1.0 / r.ratio))
            .fold(1.0, |a, b| if b.is_nan() { f64::NAN } else { a.max(b) })
    }

    pub fn all_finite(&self) -> bool {
        self.rows
            .iter()
            .filter(|r| r.k <= self.positive)
            .all(|r| r.log_esp_exact.is_finite() && r.log_esp_saddle.is_finite())
    }

    /// Header `k,log_esp_exact,log_esp_saddle,ratio,overflowed,underflowed`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,log_esp_exact,log_esp_saddle,ratio,overflowed,underflowed")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.k,
                fmt17(r.log_esp_exact),
                fmt17(r.log_esp_saddle),
                fmt17(r.ratio),
                r.overflowed,
                r.underflowed
            )?;
        }
        Ok(())
    }
}

/// Exact and saddlepoint log-ESPs for `k = 1..n-1`, with the unscaled
/// recurrence run alongside.
pub fn esp_report(spectrum: &Spectrum) -> EspReport {
    let n = spectrum.len();
    let exact = esp_exact(spectrum);
    let saddle = esp_saddlepoint_all(spectrum);
    let unguarded = esp_summation_unguarded(spectrum.values());
    let positive = spectrum.positive_count();
    let rows = (1..n)
        .map(|k| {
            let (e, s) = (exact.get(k), saddle.get(k));
            let u = unguarded.values[k];
            EspRow {
                k,
                log_esp_exact: e,
                log_esp_saddle: s,
                ratio: if e.is_finite() { (s - e).exp() } else { f64::NAN },
                overflowed: !u.is_finite(),
                underflowed: u == 0.0 && e.is_finite(),
            }
        })
        .collect();
    EspReport {
        n,
        positive,
        rows,
        first_overflow: unguarded.first_overflow(),
        first_underflow: unguarded.first_underflow(positive),
        saddle_failures: saddle.failures().to_vec(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatesRow {
    pub n: usize,
    pub max_err_basic: f64,
    pub max_err_corrected: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatesReport {
    pub rows: Vec<RatesRow>,
    pub slope_basic: f64,
    pub slope_corrected: f64,
}

impl RatesReport {
    pub fn within_bands(&self) -> bool {
        in_band(self.slope_basic, SLOPE_BASIC_BAND) && in_band(self.slope_corrected, SLOPE_CORRECTED_BAND)
    }

    /// Header `n,max_err_basic,max_err_corrected`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,max_err_basic,max_err_corrected")?;
        for r in &self.rows {
            writeln!(w, "{},{},{}", r.n, fmt17(r.max_err_basic), fmt17(r.max_err_corrected))?;
        }
        Ok(())
    }
}

fn in_band(x: f64, (lo, hi): (f64, f64)) -> bool {
    (lo..=hi).contains(&x)
}

/// Doubling ladder `start, 2·start, ...` up to `max`.
pub fn doubling_ladder(start: usize, max: usize) -> Vec<usize> {
    std::iter::successors(Some(start), |n| n.checked_mul(2))
        .take_while(|n| *n <= max)
        .collect()
}

/// Max absolute error of the basic and corrected first-order estimates
/// against the exact ESP ratio, `k = n/5`, averaged over `reps` uniform
/// spectra per `n`; slopes are OLS fits of log error on log n.
pub fn rates_experiment(ns: &[usize], reps: u32, lo: f64, hi: f64, seed: u64) -> Result<RatesReport> {
    if ns.len() < 2 || reps == 0 {
        bail!("need at least two sizes and one replicate");
    }
    let mut rows = Vec::with_capacity(ns.len());
    for (ni, &n) in ns.iter().enumerate() {
        let k = n / 5;
        if k == 0 {
            bail!("n={n} is too small for k = n/5");
        }
        let (mut sum_b, mut sum_c) = (0.0, 0.0);
        for rep in 0..reps {
            let mut rng = stream_indexed(seed, Stream::Spectrum, ((ni as u32) << 16) | rep);
            let s = Spectrum::uniform(n, lo, hi, &mut rng)?;
            let exact = inclusion_exact_all(&s, k)?.probabilities;
            let basic = inclusion_basic(&s, k)?.probabilities;
            let corrected = inclusion_corrected_all(&s, k)?.probabilities;
            sum_b += max_abs_diff(exact.values(), basic.values());
            sum_c += max_abs_diff(exact.values(), corrected.values());
        }
        rows.push(RatesRow {
            n,
            max_err_basic: sum_b / reps as f64,
            max_err_corrected: sum_c / reps as f64,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let yb: Vec<f64> = rows.iter().map(|r| r.max_err_basic.ln()).collect();
    let yc: Vec<f64> = rows.iter().map(|r| r.max_err_corrected.ln()).collect();
    Ok(RatesReport {
        slope_basic: ols_slope(&x, &yb),
        slope_corrected: ols_slope(&x, &yc),
        rows,
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    Exact,
    MonteCarlo { draws: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InclusionRow {
    /// Sorted 0-based items of the subset.
    pub subset: Vec<usize>,
    pub reference: f64,
    /// Binomial standard error of a Monte Carlo reference.
    pub reference_std: Option<f64>,
    pub basic: f64,
    pub corrected: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InclusionReport {
    pub k: usize,
    pub m: usize,
    pub reference: Reference,
    pub rows: Vec<InclusionRow>,
}

impl InclusionReport {
    pub fn max_err_basic(&self) -> f64 {
        self.rows.iter().map(|r| (r.basic - r.reference).abs()).fold(0.0, f64::max)
    }

    pub fn max_err_corrected(&self) -> f64 {
        self.rows.iter().map(|r| (r.corrected - r.reference).abs()).fold(0.0, f64::max)
    }

    pub fn mean_abs_dev_basic(&self) -> f64 {
        mean(self.rows.iter().map(|r| (r.basic - r.reference).abs()))
    }

    pub fn mean_abs_dev_corrected(&self) -> f64 {
        mean(self.rows.iter().map(|r| (r.corrected - r.reference).abs()))
    }

    /// Rows whose corrected estimate lies within `sigmas` standard errors of
    /// a Monte Carlo reference; `None` for exact references.
    pub fn corrected_covered(&self, sigmas: f64) -> Option<usize> {
        self.rows
            .iter()
            .map(|r| r.reference_std.map(|sd| (r.corrected - r.reference).abs() <= sigmas * sd))
            .collect::<Option<Vec<bool>>>()
            .map(|v| v.into_iter().filter(|c| *c).count())
    }

    /// Acceptance band used by `--check`.
    pub fn passes(&self) -> bool {
        let ordering = self.mean_abs_dev_corrected() <= self.mean_abs_dev_basic();
        match self.corrected_covered(3.0) {
            Some(hit) => ordering && hit as f64 >= COVERAGE_TARGET * self.rows.len() as f64,
            None => ordering && self.max_err_corrected() <= self.max_err_basic(),
        }
    }

    /// Sorts rows by increasing reference probability.
    pub fn sort_by_reference(&mut self) {
        self.rows.sort_by(|a, b| a.reference.total_cmp(&b.reference));
    }

    /// Header `item_or_subset,exact_or_mc,basic,corrected`; labels are
    /// 1-based and hyphen-joined.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "item_or_subset,exact_or_mc,basic,corrected")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{}",
                subset_label(&r.subset),
                fmt17(r.reference),
                fmt17(r.basic),
                fmt17(r.corrected)
            )?;
        }
        Ok(())
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = it.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    s / c as f64
}

/// `count` distinct random subsets of size `m`, each sorted, in draw order.
pub fn random_subsets<R: Rng + ?Sized>(n: usize, m: usize, count: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if m > n || (binomial_u128(n, m) as f64) < count as f64 {
        bail!("cannot draw {count} distinct subsets of size {m} from {n} items");
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut s = sample_indices(rng, n, m).into_vec();
        s.sort_unstable();
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    Ok(out)
}

/// Diagonal k-DPP: exact ESP ratio against the basic and corrected
/// estimates, for all items (`m = 1`) or for random subsets.
pub fn diagonal_inclusion(spectrum: &Spectrum, k: usize, m: usize, subsets: usize, seed: Option<u64>) -> Result<InclusionReport> {
    let n = spectrum.len();
    let sol = solve_saddlepoint(spectrum, k, None)?;
    let rows = if m == 1 {
        let exact = inclusion_exact_all(spectrum, k)?.probabilities;
        let basic = inclusion_basic(spectrum, k)?.probabilities;
        let corrected = inclusion_corrected_all(spectrum, k)?.probabilities;
        (0..n)
            .map(|i| InclusionRow {
                subset: vec![i],
                reference: exact.values()[i],
                reference_std: None,
                basic: basic.values()[i],
                corrected: corrected.values()[i],
            })
            .collect()
    } else {
        let Some(seed) = seed else {
            bail!("--seed is required to pick random subsets");
        };
        let alphas = random_subsets(n, m, subsets, &mut stream(seed, Stream::Subsets))?;
        alphas
            .into_iter()
            .map(|a| {
                let basic: f64 = a
                    .iter()
                    .map(|&i| sigmoid(spectrum.log_values()[i] + sol.nu_star))
                    .product();
                Ok(InclusionRow {
                    reference: inclusion_exact(spectrum, k, &a)?,
                    reference_std: None,
                    basic,
                    corrected: inclusion_corrected_with(spectrum, &sol, &a)?.0,
                    subset: a,
                })
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok(InclusionReport {
        k,
        m,
        reference: Reference::Exact,
        rows,
    })
}

/// General ensemble: enumeration when `C(n, k)` is small enough, otherwise
/// Monte Carlo with `draws` samples from the exact two-step sampler.
///
/// For `m = 1` every item is reported; for `m > 1`, `subsets` random
/// subsets (or all of them if there are fewer).
pub fn ensemble_inclusion(
    ensemble: &LEnsemble,
    k: usize,
    m: usize,
    subsets: usize,
    draws: usize,
    seed: Option<u64>,
) -> Result<InclusionReport> {
    let n = ensemble.n();
    if m == 0 || m > k {
        bail!("order m={m} must lie in [1, k={k}]");
    }
    let kernel = match_dpp(ensemble, k)?;
    let alphas: Vec<Vec<usize>> = if m == 1 {
        (0..n).map(|i| vec![i]).collect()
    } else if binomial_u128(n, m) <= subsets as u128 {
        kdpp_core::combin::Combinations::new(n, m).collect()
    } else {
        let Some(seed) = seed else {
            bail!("--seed is required to pick random subsets");
        };
        random_subsets(n, m, subsets, &mut stream(seed, Stream::Subsets))?
    };
    let (basic, corrected): (Vec<f64>, Vec<f64>) = if m == 1 {
        let b = first_order_inclusion(ensemble, k, InclusionMethod::Basic)?;
        let c = first_order_inclusion(ensemble, k, InclusionMethod::Corrected)?;
        (b.values().to_vec(), c.values().to_vec())
    } else {
        let b = alphas.iter().map(|a| high_order_with(&kernel, k, a, false)).collect::<kdpp_core::Result<_>>()?;
        let c = alphas.iter().map(|a| high_order_with(&kernel, k, a, true)).collect::<kdpp_core::Result<_>>()?;
        (b, c)
    };
    let (reference, refs, stds): (Reference, Vec<f64>, Vec<Option<f64>>) =
        if binomial_u128(n, k) <= MAX_SUBSETS {
            let measure = exact_inclusion(&enumerate_kdpp(ensemble, k)?, m)?;
            let refs = alphas.iter().map(|a| measure.get(a)).collect::<kdpp_core::Result<_>>()?;
            (Reference::Exact, refs, vec![None; alphas.len()])
        } else {
            let Some(seed) = seed else {
                bail!("--seed is required for the Monte Carlo reference");
            };
            let sampler = KdppSampler::new(ensemble, k, ConditionalRule::Exact)?;
            let mut eig = stream(seed, Stream::EigenStep);
            let mut proj = stream(seed, Stream::ProjectionStep);
            let draw = || sampler.sample_with(&mut eig, &mut proj);
            let est = if m == 1 {
                mc_first_order(draw, n, draws)?
            } else {
                mc_inclusion_many(draw, &alphas, draws)?
            };
            (
                Reference::MonteCarlo { draws },
                est.iter().map(|e| e.estimate).collect(),
                est.iter().map(|e| Some(e.std)).collect(),
            )
        };
    let rows = alphas
        .into_iter()
        .zip(refs)
        .zip(stds)
        .zip(basic.into_iter().zip(corrected))
        .map(|(((subset, reference), reference_std), (basic, corrected))| InclusionRow {
            subset,
            reference,
            reference_std,
            basic,
            corrected,
        })
        .collect();
    Ok(InclusionReport { k, m, reference, rows })
}

/// `draws` independent k-DPP samples; eigen and projection steps use their
/// own streams.
pub fn sample_many(source: &Source, k: usize, draws: usize, rule: ConditionalRule, seed: u64) -> Result<Vec<SampleSet>> {
    let mut eig = stream(seed, Stream::EigenStep);
    let mut proj = stream(seed, Stream::ProjectionStep);
    match source {
        Source::Diagonal(s) => {
            let sampler = DiagonalKdppSampler::new(s, k, rule)?;
            Ok((0..draws).map(|_| sampler.sample(&mut eig)).collect())
        }
        Source::Ensemble(e) => {
            let sampler = KdppSampler::new(e, k, rule)?;
            (0..draws)
                .map(|_| Ok(sampler.sample_with(&mut eig, &mut proj)?))
                .collect()
        }
    }
}

#[derive(Debug, Clone)]
pub struct InferenceRun {
    pub cloud: PointCloud,
    pub observed: SampleSet,
    pub curve: LikelihoodCurve,
}

impl InferenceRun {
    pub fn argmax_gap(&self) -> usize {
        self.curve.argmax_kdpp.abs_diff(self.curve.argmax_dpp)
    }

    pub fn passes(&self) -> bool {
        self.argmax_gap() <= 1 && self.curve.max_gap_residual() <= GAP_TOLERANCE
    }
}

/// Draws an observed set from the k-DPP at `tau_true` (exact conditional
/// rule) and evaluates both likelihood curves on `grid`.
pub fn inference_experiment(
    cloud: PointCloud,
    k: usize,
    tau_true: f64,
    grid: &[f64],
    method: Option<EspMethod>,
    seed: u64,
) -> Result<InferenceRun> {
    let truth = LEnsemble::gaussian(&cloud, tau_true)?;
    let sampler = KdppSampler::new(&truth, k, ConditionalRule::Exact)?;
    let observed = sampler.sample_with(
        &mut stream(seed, Stream::EigenStep),
        &mut stream(seed, Stream::ProjectionStep),
    )?;
    let curve = fit_tau(&cloud, &observed, grid, method)?;
    Ok(InferenceRun {
        cloud,
        observed,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn esp_report_linear_five() {
        let r = esp_report(&Spectrum::linear(5));
        assert_eq!(r.rows.len(), 4);
        assert!(r.worst_ratio() <= ESP_RATIO_BAND);
        assert!(r.first_overflow.is_none());
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,log_esp_exact,log_esp_saddle,ratio,overflowed,underflowed\n1,"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn ladder() {
        assert_eq!(doubling_ladder(25, 800), vec![25, 50, 100, 200, 400, 800]);
        assert_eq!(doubling_ladder(25, 60), vec![25, 50]);
    }

    #[test]
    fn distinct_random_subsets() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let s = random_subsets(6, 2, 15, &mut rng).unwrap();
        assert_eq!(s.iter().collect::<BTreeSet<_>>().len(), 15);
        assert!(random_subsets(6, 2, 16, &mut rng).is_err());
    }

    #[test]
    fn diagonal_inclusion_small() {
        let s = Spectrum::new(vec![2.0, 1.0, 1.0]).unwrap();
        let r = diagonal_inclusion(&s, 2, 1, 0, None).unwrap();
        let refs: Vec<f64> = r.rows.iter().map(|r| r.reference).collect();
        for (a, b) in refs.iter().zip([0.8, 0.6, 0.6]) {
            assert!((a - b).abs() < 1e-12);
        }
        let pairs = diagonal_inclusion(&s, 2, 2, 3, Some(4)).unwrap();
        assert_eq!(pairs.rows.len(), 3);
    }

    #[test]
    fn ensemble_inclusion_enumerates_when_small() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let cloud = PointCloud::standard_normal(10, 2, &mut rng).unwrap();
        let e = LEnsemble::gaussian(&cloud, 1.0).unwrap();
        let r = ensemble_inclusion(&e, 3, 1, 0, 0, None).unwrap();
        assert_eq!(r.reference, Reference::Exact);
        assert!((r.rows.iter().map(|r| r.reference).sum::<f64>() - 3.0).abs() < 1e-10);
        let r2 = ensemble_inclusion(&e, 3, 2, 100, 0, None).unwrap();
        assert_eq!(r2.rows.len(), 45);
    }
}

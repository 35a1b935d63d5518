//! Diagonal k-DPPs.
//!
//! With `L = diag(λ)` a k-DPP is a vector of independent Bernoulli(λᵢ/(1+λᵢ))
//! indicators conditioned on summing to `k`, and
//!
//! ```text
//! p(α ⊆ X) = Π_{i∈α} λᵢ · e_{k-m}(λ_{-α}) / e_k(λ)
//! ```
//!
//! The matched DPP replaces the conditioning by the tilt `ν*` and gives the
//! basic estimate `σ(log λᵢ + ν*)`, accurate to `O(1/n)`. The corrected
//! estimate multiplies by `1 + g(ν*)/n` and is accurate to `O(1/n²)`.

use rand::Rng;

use crate::combin::normalize_subset;
use crate::error::{invalid, Error, Result};
use crate::esp::{log_esp_upto, psi_from_logs, solve_logs, SaddlepointSolution};
use crate::kdpp::SampleSet;
use crate::measure::InclusionMeasure;
use crate::numeric::{log_sum_exp, sigmoid, sigmoid_variance};
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagonalMethod {
    Exact,
    Basic,
    Corrected,
    Empirical,
}

/// Order-`m` inclusion probabilities of a diagonal k-DPP.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalInclusion {
    pub order: usize,
    pub k: usize,
    pub method: DiagonalMethod,
    pub probabilities: InclusionMeasure,
}

/// Intermediate quantities of the corrected estimate, all at `ν*`.
///
/// Barred quantities are averages: `ψ̄ = ψ/n` over the spectrum and
/// `ψ̄_α = ψ_α/m` over the items of `α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionTerms {
    /// First-order shift of the saddlepoint when `α` is forced in:
    /// `ν₁ ψ̄'' = -m (1 - ψ̄'_α)`.
    pub nu1: f64,
    pub g: f64,
    pub psibar2: f64,
    pub psibar3: f64,
    pub psibar_alpha1: f64,
    pub psibar_alpha2: f64,
}

fn check_alpha(spectrum: &Spectrum, k: usize, alpha: &[usize]) -> Result<Vec<usize>> {
    let n = spectrum.len();
    let a = normalize_subset(alpha, n)
        .ok_or_else(|| invalid(format!("{alpha:?} is not a set of distinct indices below {n}")))?;
    if a.len() > k || k > n {
        return Err(invalid(format!(
            "need m <= k <= n, got m={}, k={k}, n={n}",
            a.len()
        )));
    }
    Ok(a)
}

fn log_normaliser(spectrum: &Spectrum, k: usize) -> Result<f64> {
    let log_ek = log_esp_upto(spectrum.log_values(), k)[k];
    if log_ek == f64::NEG_INFINITY {
        return Err(Error::Infeasible {
            k,
            positive: spectrum.positive_count(),
        });
    }
    Ok(log_ek)
}

/// Exact `p(α ⊆ X)` from the ESP ratio.
///
/// Zero when some `λᵢ = 0` for `i ∈ α` or when too few positive eigenvalues
/// remain outside `α`. Errors if `e_k(λ) = 0`.
pub fn inclusion_exact(spectrum: &Spectrum, k: usize, alpha: &[usize]) -> Result<f64> {
    let a = check_alpha(spectrum, k, alpha)?;
    let log_ek = log_normaliser(spectrum, k)?;
    let logs = spectrum.log_values();
    let head: f64 = a.iter().map(|&i| logs[i]).sum();
    if head == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let rest = spectrum.without(&a);
    let tail = log_esp_upto(rest.log_values(), k - a.len())[k - a.len()];
    Ok((head + tail - log_ek).exp().min(1.0))
}

/// Exact first-order probabilities for every item in `O(nk)`.
///
/// `e_{k-1}(λ_{-t})` is the convolution of prefix and suffix ESP tables at
/// position `t`.
pub fn inclusion_exact_all(spectrum: &Spectrum, k: usize) -> Result<DiagonalInclusion> {
    let n = spectrum.len();
    if k > n {
        return Err(invalid(format!("k={k} exceeds n={n}")));
    }
    let logs = spectrum.log_values();
    let suffix = suffix_tables(logs, k);
    let log_ek = suffix[0][k];
    if log_ek == f64::NEG_INFINITY {
        return Err(Error::Infeasible {
            k,
            positive: spectrum.positive_count(),
        });
    }
    let mut probs = vec![0.0; n];
    if k > 0 {
        let mut prefix = vec![f64::NEG_INFINITY; k];
        prefix[0] = 0.0;
        for t in 0..n {
            if logs[t] != f64::NEG_INFINITY {
                let rest = log_sum_exp((0..k).map(|a| prefix[a] + suffix[t + 1][k - 1 - a]));
                probs[t] = (logs[t] + rest - log_ek).exp().min(1.0);
                for a in (1..k).rev() {
                    prefix[a] = crate::numeric::log_add_exp(prefix[a], logs[t] + prefix[a - 1]);
                }
            }
        }
    }
    Ok(DiagonalInclusion {
        order: 1,
        k,
        method: DiagonalMethod::Exact,
        probabilities: InclusionMeasure::first_order(probs),
    })
}

/// `S[t][j] = log e_j(λ_t, ..., λ_{n-1})` for `j ≤ k`, `t = 0..=n`.
fn suffix_tables(logs: &[f64], k: usize) -> Vec<Vec<f64>> {
    let n = logs.len();
    let mut s = vec![vec![f64::NEG_INFINITY; k + 1]; n + 1];
    s[n][0] = 0.0;
    for t in (0..n).rev() {
        s[t][0] = 0.0;
        for j in 1..=k {
            s[t][j] = crate::numeric::log_add_exp(s[t + 1][j], logs[t] + s[t + 1][j - 1]);
        }
    }
    s
}

/// Basic estimate `π̃ᵢ = λᵢe^{ν*}/(1 + λᵢe^{ν*})`; sums to `k`.
pub fn inclusion_basic(spectrum: &Spectrum, k: usize) -> Result<DiagonalInclusion> {
    let sol = solve_logs(spectrum.log_values(), k, None)?;
    Ok(basic_from_solution(spectrum, &sol))
}

pub(crate) fn basic_from_solution(spectrum: &Spectrum, sol: &SaddlepointSolution) -> DiagonalInclusion {
    let probs = spectrum
        .log_values()
        .iter()
        .map(|&l| sigmoid(l + sol.nu_star))
        .collect();
    DiagonalInclusion {
        order: 1,
        k: sol.k,
        method: DiagonalMethod::Basic,
        probabilities: InclusionMeasure::first_order(probs),
    }
}

/// Corrected estimate of `p(α ⊆ X)`:
/// `Π_{i∈α} σ(log λᵢ + ν*) · (1 + g(ν*)/n)` with
///
/// ```text
/// g = -(ν₁²/2) ψ̄'' - (ψ̄''' ν₁ - m ψ̄''_α) / (2 ψ̄'')
/// ```
pub fn inclusion_corrected(
    spectrum: &Spectrum,
    k: usize,
    alpha: &[usize],
) -> Result<(f64, CorrectionTerms)> {
    let a = check_alpha(spectrum, k, alpha)?;
    let sol = solve_logs(spectrum.log_values(), k, None)?;
    corrected_at(spectrum.log_values(), &sol, &a)
}

/// Corrected estimate at an already solved saddlepoint.
pub fn inclusion_corrected_with(
    spectrum: &Spectrum,
    sol: &SaddlepointSolution,
    alpha: &[usize],
) -> Result<(f64, CorrectionTerms)> {
    let a = check_alpha(spectrum, sol.k, alpha)?;
    corrected_at(spectrum.log_values(), sol, &a)
}

fn corrected_at(
    logs: &[f64],
    sol: &SaddlepointSolution,
    alpha: &[usize],
) -> Result<(f64, CorrectionTerms)> {
    let n = logs.len() as f64;
    let d = psi_from_logs(logs, sol.nu_star);
    let (base, terms) = correction(logs, sol.nu_star, d.psi2 / n, d.psi3 / n, alpha)?;
    Ok((base * (1.0 + terms.g / n), terms))
}

fn correction(
    logs: &[f64],
    nu: f64,
    psibar2: f64,
    psibar3: f64,
    alpha: &[usize],
) -> Result<(f64, CorrectionTerms)> {
    if !(psibar2 > 0.0) {
        return Err(Error::Degenerate(
            "second derivative of the cumulant generating function vanishes".into(),
        ));
    }
    let m = alpha.len() as f64;
    let mut base = 1.0;
    let (mut a1, mut a2) = (0.0, 0.0);
    for &i in alpha {
        let x = logs[i] + nu;
        let s = sigmoid(x);
        base *= s;
        a1 += s;
        a2 += sigmoid_variance(x);
    }
    let (psibar_alpha1, psibar_alpha2) = if alpha.is_empty() {
        (0.0, 0.0)
    } else {
        (a1 / m, a2 / m)
    };
    let nu1 = -m * (1.0 - psibar_alpha1) / psibar2;
    let g = -0.5 * nu1 * nu1 * psibar2 - (psibar3 * nu1 - m * psibar_alpha2) / (2.0 * psibar2);
    Ok((
        base,
        CorrectionTerms {
            nu1,
            g,
            psibar2,
            psibar3,
            psibar_alpha1,
            psibar_alpha2,
        },
    ))
}

/// Corrected first-order estimates for every item, sharing one solve.
pub fn inclusion_corrected_all(spectrum: &Spectrum, k: usize) -> Result<DiagonalInclusion> {
    let sol = solve_logs(spectrum.log_values(), k, None)?;
    corrected_all_from_solution(spectrum, &sol)
}

pub(crate) fn corrected_all_from_solution(
    spectrum: &Spectrum,
    sol: &SaddlepointSolution,
) -> Result<DiagonalInclusion> {
    let logs = spectrum.log_values();
    let n = logs.len() as f64;
    let (psibar2, psibar3) = (sol.psi2 / n, sol.psi3 / n);
    let probs = (0..logs.len())
        .map(|i| {
            correction(logs, sol.nu_star, psibar2, psibar3, &[i]).map(|(b, t)| b * (1.0 + t.g / n))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DiagonalInclusion {
        order: 1,
        k: sol.k,
        method: DiagonalMethod::Corrected,
        probabilities: InclusionMeasure::first_order(probs),
    })
}

/// How the sampler computes `p(z_t = 1 | items needed)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionalRule {
    /// ESP ratio from a precomputed suffix table.
    Exact,
    /// Corrected saddlepoint estimate, re-solved at each step.
    Corrected,
}

impl ConditionalRule {
    /// Exact for `n ≤ 64`, corrected above.
    pub fn auto(n: usize) -> Self {
        if n <= 64 {
            ConditionalRule::Exact
        } else {
            ConditionalRule::Corrected
        }
    }
}

/// Sequential sampler: item `t` is included with its first-order inclusion
/// probability in the `(k - s)`-DPP over `λ_t, ..., λ_{n-1}`, where `s`
/// items have been taken so far.
#[derive(Debug, Clone)]
pub struct DiagonalKdppSampler {
    logs: Vec<f64>,
    k: usize,
    rule: ConditionalRule,
    suffix: Option<Vec<Vec<f64>>>,
    suffix_positive: Vec<usize>,
}

impl DiagonalKdppSampler {
    pub fn new(spectrum: &Spectrum, k: usize, rule: ConditionalRule) -> Result<Self> {
        let positive = spectrum.positive_count();
        if k > positive {
            return Err(Error::Infeasible { k, positive });
        }
        let logs = spectrum.log_values().to_vec();
        let n = logs.len();
        let mut suffix_positive = vec![0; n + 1];
        for t in (0..n).rev() {
            suffix_positive[t] = suffix_positive[t + 1] + usize::from(logs[t] != f64::NEG_INFINITY);
        }
        let suffix = (rule == ConditionalRule::Exact).then(|| suffix_tables(&logs, k));
        Ok(Self {
            logs,
            k,
            rule,
            suffix,
            suffix_positive,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rule(&self) -> ConditionalRule {
        self.rule
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SampleSet {
        let n = self.logs.len();
        let mut chosen = Vec::with_capacity(self.k);
        let mut need = self.k;
        let mut warm = None;
        for t in 0..n {
            if need == 0 {
                break;
            }
            if self.logs[t] == f64::NEG_INFINITY {
                continue;
            }
            let take = if need == self.suffix_positive[t] {
                true
            } else {
                let p = self.conditional(t, need, &mut warm);
                rng.random::<f64>() < p
            };
            if take {
                chosen.push(t);
                need -= 1;
            }
        }
        debug_assert_eq!(need, 0);
        SampleSet::from_sorted(chosen)
    }

    /// `p(z_t = 1)` given `need` items remain to be chosen from `t..n`, with
    /// more than `need` positive eigenvalues left.
    fn conditional(&self, t: usize, need: usize, warm: &mut Option<f64>) -> f64 {
        if let Some(s) = &self.suffix {
            return (self.logs[t] + s[t + 1][need - 1] - s[t][need]).exp().min(1.0);
        }
        let logs = &self.logs[t..];
        let r = logs.len() as f64;
        match solve_logs(logs, need, *warm) {
            Ok(sol) => {
                *warm = Some(sol.nu_star);
                match correction(logs, sol.nu_star, sol.psi2 / r, sol.psi3 / r, &[0]) {
                    Ok((b, terms)) => (b * (1.0 + terms.g / r)).clamp(0.0, 1.0),
                    Err(_) => sigmoid(logs[0] + sol.nu_star),
                }
            }
            Err(_) => {
                let all = log_esp_upto(logs, need);
                let rest = log_esp_upto(&logs[1..], need - 1);
                (logs[0] + rest[need - 1] - all[need]).exp().min(1.0)
            }
        }
    }
}

/// One draw with the default conditional rule.
pub fn sample_diagonal_kdpp<R: Rng + ?Sized>(
    spectrum: &Spectrum,
    k: usize,
    rng: &mut R,
) -> Result<SampleSet> {
    let sampler = DiagonalKdppSampler::new(spectrum, k, ConditionalRule::auto(spectrum.len()))?;
    Ok(sampler.sample(rng))
}

//! General DPPs and k-DPPs through the eigendecomposition `L = U diag(λ) Uᵀ`.
//!
//! A k-DPP is a mixture of projection DPPs: pick `k` eigenvectors with a
//! diagonal k-DPP on `λ`, then sample the projection DPP spanned by them.
//! The matched DPP has marginal kernel `K = U diag(η) Uᵀ` with
//! `ηᵢ = σ(log λᵢ + ν*)`, and its minors `det K_α` approximate the k-DPP
//! inclusion probabilities.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::combin::normalize_subset;
use crate::diagonal::{
    basic_from_solution, corrected_all_from_solution, ConditionalRule, DiagonalKdppSampler,
};
use crate::error::{invalid, Error, Result};
use crate::esp::{log_esp_upto, solve_logs};
use crate::linalg::psd_minor;
use crate::measure::InclusionMeasure;
use crate::numeric::{binomial, sigmoid};
use crate::spectrum::{LEnsemble, Spectrum, RANK_TOLERANCE};

/// Largest subset size accepted by [`high_order_inclusion`].
pub const MAX_ORDER: usize = 8;

/// Orthonormality tolerance for projection bases.
pub const BASIS_TOLERANCE: f64 = 1e-8;

/// Sorted, distinct 0-based item indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct SampleSet {
    indices: Vec<usize>,
}

impl SampleSet {
    /// Validates and sorts `indices` as a subset of `{0..n}`.
    pub fn new(indices: &[usize], n: usize) -> Result<Self> {
        normalize_subset(indices, n)
            .map(|indices| Self { indices })
            .ok_or_else(|| invalid(format!("{indices:?} is not a set of distinct indices below {n}")))
    }

    pub(crate) fn from_sorted(indices: Vec<usize>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// Whether every index of the sorted `alpha` is present.
    pub fn contains_all(&self, alpha: &[usize]) -> bool {
        alpha.iter().all(|&i| self.contains(i))
    }

    /// Space-separated 1-based indices.
    pub fn to_line(&self) -> String {
        self.indices
            .iter()
            .map(|i| (i + 1).to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// `K = U diag(η) Uᵀ` of the DPP with ensemble `eᵛ L`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalKernel {
    pub matrix: DMatrix<f64>,
    pub eta: Vec<f64>,
    /// `+∞` for the projection kernel of a rank-k ensemble.
    pub nu: f64,
}

impl MarginalKernel {
    fn from_eta(u: &DMatrix<f64>, eta: Vec<f64>, nu: f64) -> Self {
        let scaled = DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)] * eta[j]);
        let mut matrix = scaled * u.transpose();
        // exact symmetry for the minors
        let n = matrix.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
                matrix[(i, j)] = v;
                matrix[(j, i)] = v;
            }
        }
        Self { matrix, eta, nu }
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// `det K_α`, the DPP probability that `α ⊆ X`.
    pub fn minor(&self, alpha: &[usize]) -> f64 {
        psd_minor(&self.matrix, alpha)
    }

    /// `C(k, m) / e_m(η)`, which makes the order-m minors sum to `C(k, m)`.
    pub fn correction_factor(&self, k: usize, m: usize) -> f64 {
        let logs: Vec<f64> = self.eta.iter().map(|e| e.ln()).collect();
        let log_em = log_esp_upto(&logs, m)[m];
        (binomial(k, m).ln() - log_em).exp()
    }
}

pub fn marginal_kernel(ensemble: &LEnsemble, nu: f64) -> MarginalKernel {
    let eta = ensemble
        .spectrum()
        .log_values()
        .iter()
        .map(|&l| sigmoid(l + nu))
        .collect();
    MarginalKernel::from_eta(ensemble.eigenvectors(), eta, nu)
}

fn check_k(spectrum: &Spectrum, k: usize) -> Result<()> {
    let n = spectrum.len();
    if k == 0 || k >= n {
        return Err(invalid(format!("k={k} must lie in [1, n-1] for n={n}")));
    }
    let rank = spectrum.numerical_rank();
    if rank < k {
        return Err(Error::Infeasible { k, positive: rank });
    }
    Ok(())
}

/// Indicator of the eigenvalues above the rank threshold.
fn support_indicator(spectrum: &Spectrum) -> Vec<f64> {
    let cut = RANK_TOLERANCE * spectrum.max();
    spectrum
        .values()
        .iter()
        .map(|&v| if v > 0.0 && v >= cut { 1.0 } else { 0.0 })
        .collect()
}

/// Matched DPP: tilt `ν*` with `Tr K = k`.
///
/// When the numerical rank equals `k` the k-DPP is itself the projection
/// DPP onto the range of `L`, and that kernel is returned with `ν = +∞`.
pub fn match_dpp(ensemble: &LEnsemble, k: usize) -> Result<MarginalKernel> {
    let spectrum = ensemble.spectrum();
    check_k(spectrum, k)?;
    if spectrum.numerical_rank() == k {
        return Ok(MarginalKernel::from_eta(
            ensemble.eigenvectors(),
            support_indicator(spectrum),
            f64::INFINITY,
        ));
    }
    let sol = solve_logs(spectrum.log_values(), k, None)?;
    Ok(marginal_kernel(ensemble, sol.nu_star))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InclusionMethod {
    Basic,
    Corrected,
}

/// `p̃ᵢ = Σⱼ Uᵢⱼ² π̃ⱼ` with `π̃` the diagonal estimates on the spectrum.
pub fn first_order_inclusion(
    ensemble: &LEnsemble,
    k: usize,
    method: InclusionMethod,
) -> Result<InclusionMeasure> {
    let spectrum = ensemble.spectrum();
    check_k(spectrum, k)?;
    let pi = if spectrum.numerical_rank() == k {
        support_indicator(spectrum)
    } else {
        let sol = solve_logs(spectrum.log_values(), k, None)?;
        let diag = match method {
            InclusionMethod::Basic => basic_from_solution(spectrum, &sol),
            InclusionMethod::Corrected => corrected_all_from_solution(spectrum, &sol)?,
        };
        diag.probabilities.values().to_vec()
    };
    Ok(InclusionMeasure::first_order(mix_eigen(ensemble.eigenvectors(), &pi)))
}

/// `diag(U diag(w) Uᵀ)`.
pub(crate) fn mix_eigen(u: &DMatrix<f64>, w: &[f64]) -> Vec<f64> {
    (0..u.nrows())
        .map(|i| (0..u.ncols()).map(|j| u[(i, j)] * u[(i, j)] * w[j]).sum())
        .collect()
}

/// Matched-DPP estimate `det K_α` of `p(α ⊆ X)`, optionally multiplied by
/// `C(k, m)/e_m(η)`.
pub fn high_order_inclusion(
    ensemble: &LEnsemble,
    k: usize,
    alpha: &[usize],
    corrected: bool,
) -> Result<f64> {
    let kernel = match_dpp(ensemble, k)?;
    high_order_with(&kernel, k, alpha, corrected)
}

/// [`high_order_inclusion`] against a precomputed matched kernel.
pub fn high_order_with(
    kernel: &MarginalKernel,
    k: usize,
    alpha: &[usize],
    corrected: bool,
) -> Result<f64> {
    let n = kernel.matrix.nrows();
    let a = normalize_subset(alpha, n)
        .ok_or_else(|| invalid(format!("{alpha:?} is not a set of distinct indices below {n}")))?;
    let m = a.len();
    if m > k || m > MAX_ORDER {
        return Err(invalid(format!("order m={m} must be at most k={k} and {MAX_ORDER}")));
    }
    let base = kernel.minor(&a);
    if corrected && m > 1 {
        Ok(base * kernel.correction_factor(k, m))
    } else {
        Ok(base)
    }
}

/// Largest entry of `|VᵀV - I|`.
pub fn orthonormality_defect(basis: &DMatrix<f64>) -> f64 {
    let g = basis.transpose() * basis;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Haar-like random `n × k` orthonormal basis (QR of a Gaussian matrix).
pub fn random_orthonormal<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if k > n {
        return Err(invalid(format!("cannot fit {k} orthonormal columns in dimension {n}")));
    }
    let g = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(g.qr().q())
}

/// Projection DPP with kernel `VVᵀ`.
///
/// At each step item `i` is chosen with probability proportional to the
/// squared norm of its residual row, and every row is then projected off the
/// chosen direction. Norms are recomputed from the residual each step.
pub fn sample_projection_dpp<R: Rng + ?Sized>(basis: &DMatrix<f64>, rng: &mut R) -> Result<SampleSet> {
    let defect = orthonormality_defect(basis);
    if !(defect <= BASIS_TOLERANCE) {
        return Err(invalid(format!("basis columns are not orthonormal (defect {defect:.3e})")));
    }
    projection_draw(basis.clone(), rng)
}

fn projection_draw<R: Rng + ?Sized>(mut v: DMatrix<f64>, rng: &mut R) -> Result<SampleSet> {
    let (n, k) = v.shape();
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let mut norms = vec![0.0; n];
    for step in 0..k {
        let mut total = 0.0;
        for i in 0..n {
            norms[i] = if taken[i] { 0.0 } else { v.row(i).norm_squared() };
            total += norms[i];
        }
        if !(total > 1e-8) {
            return Err(Error::Numerical(format!(
                "projection basis is numerically rank deficient at step {step}"
            )));
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = None;
        for i in 0..n {
            if norms[i] > 0.0 {
                pick = Some(i);
                if u < norms[i] {
                    break;
                }
                u -= norms[i];
            }
        }
        let i = pick.expect("positive total");
        taken[i] = true;
        chosen.push(i);
        let d: DVector<f64> = v.row(i).transpose() / norms[i].sqrt();
        let vd = &v * &d;
        v.ger(-1.0, &vd, &d, 1.0);
    }
    chosen.sort_unstable();
    Ok(SampleSet::from_sorted(chosen))
}

/// Two-step k-DPP sampler: eigen-indices from a diagonal k-DPP, then the
/// projection DPP on the selected eigenvectors.
#[derive(Debug, Clone)]
pub struct KdppSampler {
    eigenvectors: DMatrix<f64>,
    eigen: DiagonalKdppSampler,
}

impl KdppSampler {
    pub fn new(ensemble: &LEnsemble, k: usize, rule: ConditionalRule) -> Result<Self> {
        Ok(Self {
            eigenvectors: ensemble.eigenvectors().clone(),
            eigen: DiagonalKdppSampler::new(ensemble.spectrum(), k, rule)?,
        })
    }

    /// Separate generators for the two steps.
    pub fn sample_with<R1, R2>(&self, eigen_rng: &mut R1, projection_rng: &mut R2) -> Result<SampleSet>
    where
        R1: Rng + ?Sized,
        R2: Rng + ?Sized,
    {
        let y = self.eigen.sample(eigen_rng);
        projection_draw(self.eigenvectors.select_columns(y.indices()), projection_rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SampleSet> {
        let y = self.eigen.sample(rng);
        projection_draw(self.eigenvectors.select_columns(y.indices()), rng)
    }
}

pub fn sample_kdpp<R: Rng + ?Sized>(ensemble: &LEnsemble, k: usize, rng: &mut R) -> Result<SampleSet> {
    KdppSampler::new(ensemble, k, ConditionalRule::auto(ensemble.n()))?.sample(rng)
}

/// DPP with ensemble `eᵛ L`: eigenvector `j` is kept with probability `ηⱼ`.
pub fn sample_dpp<R: Rng + ?Sized>(ensemble: &LEnsemble, nu: f64, rng: &mut R) -> Result<SampleSet> {
    let keep: Vec<usize> = ensemble
        .spectrum()
        .log_values()
        .iter()
        .enumerate()
        .filter(|(_, &l)| {
            let eta = sigmoid(l + nu);
            rng.random::<f64>() < eta
        })
        .map(|(j, _)| j)
        .collect();
    projection_draw(ensemble.eigenvectors().select_columns(&keep), rng)
}

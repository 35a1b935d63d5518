//! Elementary symmetric polynomials `e_k(λ)`.
//!
//! `e_k(λ)` is the k-DPP normaliser. Two routes are provided:
//!
//! - [`esp_exact`]: the item-by-item recurrence `e_k ← e_k + λᵢ e_{k-1}`,
//!   run on `log e_k` after rescaling by `1/λ_max`. Every term is
//!   nonnegative, so the log-sum-exp update is stable for spectra spanning
//!   hundreds of orders of magnitude.
//! - [`esp_saddlepoint`]: writing `e_k(λ) / Π(1+λᵢ) = P(Sₙ = k)` for a sum of
//!   independent Bernoulli(λᵢ/(1+λᵢ)) variables and applying the saddlepoint
//!   approximation with cumulant generating function
//!   `ψ(ν) = Σ log(1+λᵢeᵛ) - Σ log(1+λᵢ)`:
//!
//! ```text
//! log e_k ≈ Σ log(1 + λᵢ e^{ν*}) - k ν* - ½ log(2π ψ''(ν*)),   ψ'(ν*) = k
//! ```
//!
//! The relative error is worst in the tails (`k = 1`, `k = n-1`), where it
//! tends to `e/√(2π) ≈ 1.084`.

use crate::error::{invalid, Error, Result};
use crate::numeric::{log_add_exp, log_sum_exp, sigmoid, sigmoid_variance, softplus};
use crate::spectrum::Spectrum;

/// Residual tolerance `|ψ'(ν) - k| ≤ SOLVER_TOLERANCE * k`.
pub const SOLVER_TOLERANCE: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 200;

/// `ψ` and its first three derivatives at one `ν`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiDerivatives {
    pub psi: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
}

pub fn psi_derivatives(spectrum: &Spectrum, nu: f64) -> PsiDerivatives {
    psi_from_logs(spectrum.log_values(), nu)
}

pub(crate) fn psi_from_logs(log_values: &[f64], nu: f64) -> PsiDerivatives {
    let mut out = PsiDerivatives {
        psi: 0.0,
        psi1: 0.0,
        psi2: 0.0,
        psi3: 0.0,
    };
    for &l in log_values {
        if l == f64::NEG_INFINITY {
            continue;
        }
        let x = l + nu;
        let s = sigmoid(x);
        let v = sigmoid_variance(x);
        out.psi += softplus(x) - softplus(l);
        out.psi1 += s;
        out.psi2 += v;
        // s(1-s)(1-2s), with 1-2s = tanh(-x/2)
        out.psi3 += v * (-0.5 * x).tanh();
    }
    out
}

fn psi1_psi2(log_values: &[f64], nu: f64) -> (f64, f64) {
    log_values
        .iter()
        .filter(|l| **l != f64::NEG_INFINITY)
        .fold((0.0, 0.0), |(a, b), &l| {
            (a + sigmoid(l + nu), b + sigmoid_variance(l + nu))
        })
}

/// `Σ log(1 + λᵢ eᵛ)`.
pub(crate) fn log_partition(log_values: &[f64], nu: f64) -> f64 {
    log_values.iter().map(|&l| softplus(l + nu)).sum()
}

/// Solution of the saddlepoint equation `Σ λᵢeᵛ/(1+λᵢeᵛ) = k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddlepointSolution {
    pub nu_star: f64,
    pub k: usize,
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
    pub iterations: usize,
}

/// Lower and upper bounds on `ν*` from linearising the saddlepoint equation
/// at small and large `ν`.
///
/// `σ(x) ≤ eˣ` makes `log k - log Σλ` a lower bound, and `1 - σ(x) ≤ e⁻ˣ`
/// makes `log Σλ⁻¹ - log(p - k)` an upper bound (`p` positive eigenvalues).
pub fn initial_bracket(spectrum: &Spectrum, k: usize) -> Result<(f64, f64)> {
    check_size(spectrum.log_values(), k)?;
    Ok(bracket(spectrum.log_values(), k))
}

fn bracket(log_values: &[f64], k: usize) -> (f64, f64) {
    let positive: Vec<f64> = log_values
        .iter()
        .copied()
        .filter(|l| *l != f64::NEG_INFINITY)
        .collect();
    let p = positive.len();
    let lo = (k as f64).ln() - log_sum_exp(positive.iter().copied());
    let hi = log_sum_exp(positive.iter().map(|l| -l)) - ((p - k) as f64).ln();
    (lo, hi)
}

fn check_size(log_values: &[f64], k: usize) -> Result<()> {
    let n = log_values.len();
    if k == 0 || k >= n {
        return Err(invalid(format!("k={k} must lie in [1, n-1] for n={n}")));
    }
    let positive = log_values.iter().filter(|l| **l != f64::NEG_INFINITY).count();
    if positive <= k {
        return Err(Error::Infeasible { k, positive });
    }
    Ok(())
}

/// Safeguarded Newton iteration on `ψ'(ν) = k`, stopped once
/// `|ψ'(ν) - k| ≤ SOLVER_TOLERANCE · k` and then polished.
///
/// The default start is the lower bound when `k ≤ n/2` and the upper bound
/// otherwise. A Newton step that leaves the current bracket, or that
/// increased the residual on the previous iteration, is replaced by
/// bisection.
pub fn solve_saddlepoint(
    spectrum: &Spectrum,
    k: usize,
    nu0: Option<f64>,
) -> Result<SaddlepointSolution> {
    solve_logs(spectrum.log_values(), k, nu0)
}

pub(crate) fn solve_logs(
    log_values: &[f64],
    k: usize,
    nu0: Option<f64>,
) -> Result<SaddlepointSolution> {
    check_size(log_values, k)?;
    let n = log_values.len();
    let target = k as f64;
    let tol = SOLVER_TOLERANCE * target;
    let (mut lo, mut hi) = bracket(log_values, k);
    let mut nu = match nu0 {
        Some(v) if v.is_finite() => v.clamp(lo, hi),
        _ if 2 * k <= n => lo,
        _ => hi,
    };
    let mut prev_residual = f64::INFINITY;
    let mut residual = f64::NAN;
    for iter in 0..MAX_ITERATIONS {
        let (d1, d2) = psi1_psi2(log_values, nu);
        residual = d1 - target;
        if residual.abs() <= tol {
            nu = polish(log_values, target, nu, residual, d2);
            let d = psi_from_logs(log_values, nu);
            return Ok(SaddlepointSolution {
                nu_star: nu,
                k,
                psi1: d.psi1,
                psi2: d.psi2,
                psi3: d.psi3,
                iterations: iter,
            });
        }
        if residual < 0.0 {
            lo = lo.max(nu);
        } else {
            hi = hi.min(nu);
        }
        let newton = nu - residual / d2;
        let bisect = 0.5 * (lo + hi);
        let use_newton =
            d2 > 0.0 && newton > lo && newton < hi && residual.abs() <= prev_residual;
        prev_residual = residual.abs();
        nu = if use_newton { newton } else { bisect };
    }
    Err(Error::Convergence {
        iterations: MAX_ITERATIONS,
        residual,
    })
}

/// A few extra Newton steps once the tolerance is met, kept only while the
/// residual keeps shrinking. Sums such as `Tr K = k` then hold to round-off
/// rather than to the stopping tolerance.
fn polish(log_values: &[f64], target: f64, mut nu: f64, mut residual: f64, mut d2: f64) -> f64 {
    for _ in 0..3 {
        if !(d2 > 0.0) || residual == 0.0 {
            break;
        }
        let candidate = nu - residual / d2;
        let (c1, c2) = psi1_psi2(log_values, candidate);
        if (c1 - target).abs() >= residual.abs() {
            break;
        }
        nu = candidate;
        residual = c1 - target;
        d2 = c2;
    }
    nu
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EspMethod {
    Exact,
    Saddlepoint,
}

impl EspMethod {
    /// Exact recurrence for `n ≤ 64`, saddlepoint above.
    pub fn auto(n: usize) -> Self {
        if n <= 64 {
            EspMethod::Exact
        } else {
            EspMethod::Saddlepoint
        }
    }
}

/// `log e_k` for `k = 0..=n`; `log e_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEspTable {
    values: Vec<f64>,
    method: EspMethod,
    failures: Vec<usize>,
}

impl LogEspTable {
    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn method(&self) -> EspMethod {
        self.method
    }

    /// Orders whose saddlepoint solve failed (their entry is NaN).
    pub fn failures(&self) -> &[usize] {
        &self.failures
    }

    /// `n`, the largest order in the table.
    pub fn degree(&self) -> usize {
        self.values.len() - 1
    }
}

/// Exact log-ESPs for all orders.
pub fn esp_exact(spectrum: &Spectrum) -> LogEspTable {
    LogEspTable {
        values: log_esp_upto(spectrum.log_values(), spectrum.len()),
        method: EspMethod::Exact,
        failures: Vec::new(),
    }
}

/// `log e_0 .. log e_kmax` of the values whose logs are given.
///
/// Logs are shifted by `log λ_max` before the recurrence and the shift is
/// restored as `k log λ_max`, using `e_k(βλ) = βᵏ e_k(λ)`.
pub(crate) fn log_esp_upto(log_values: &[f64], kmax: usize) -> Vec<f64> {
    let mut table = vec![f64::NEG_INFINITY; kmax + 1];
    table[0] = 0.0;
    let shift = log_values
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return table;
    }
    for (i, &l) in log_values.iter().enumerate() {
        if l == f64::NEG_INFINITY {
            continue;
        }
        let l = l - shift;
        for j in (1..=kmax.min(i + 1)).rev() {
            table[j] = log_add_exp(table[j], l + table[j - 1]);
        }
    }
    for (j, v) in table.iter_mut().enumerate() {
        if *v != f64::NEG_INFINITY {
            *v += j as f64 * shift;
        }
    }
    table
}

/// Saddlepoint estimate of `log e_k` with its solution.
pub fn esp_saddlepoint(spectrum: &Spectrum, k: usize) -> Result<(f64, SaddlepointSolution)> {
    saddle_from_logs(spectrum.log_values(), k, None)
}

pub(crate) fn saddle_from_logs(
    log_values: &[f64],
    k: usize,
    nu0: Option<f64>,
) -> Result<(f64, SaddlepointSolution)> {
    let sol = solve_logs(log_values, k, nu0)?;
    Ok((saddle_value(log_values, &sol), sol))
}

fn saddle_value(log_values: &[f64], sol: &SaddlepointSolution) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * sol.psi2).ln() + log_partition(log_values, sol.nu_star)
        - sol.k as f64 * sol.nu_star
}

/// Saddlepoint log-ESPs for all orders, warm-starting each solve from the
/// previous `ν*`.
///
/// `log e_0 = 0` and `log e_n = Σ log λᵢ` are exact. Orders above the
/// positive count are `-∞`; the order equal to it is the exact product of
/// the positive eigenvalues (its saddlepoint sits at `ν = +∞`).
pub fn esp_saddlepoint_all(spectrum: &Spectrum) -> LogEspTable {
    let logs = spectrum.log_values();
    let n = logs.len();
    let positive = spectrum.positive_count();
    let mut values = vec![f64::NEG_INFINITY; n + 1];
    values[0] = 0.0;
    let positive_product: f64 = logs.iter().filter(|l| **l != f64::NEG_INFINITY).sum();
    if n > 0 && positive == n {
        values[n] = positive_product;
    }
    let mut failures = Vec::new();
    let mut warm = None;
    for k in 1..n {
        if k > positive {
            break;
        }
        if k == positive {
            values[k] = positive_product;
            continue;
        }
        match saddle_from_logs(logs, k, warm) {
            Ok((v, sol)) => {
                values[k] = v;
                warm = Some(sol.nu_star);
            }
            Err(_) => {
                values[k] = f64::NAN;
                failures.push(k);
            }
        }
    }
    LogEspTable {
        values,
        method: EspMethod::Saddlepoint,
        failures,
    }
}

/// ESPs from the plain linear-scale recurrence, with no rescaling.
///
/// Kept to demonstrate the failure mode: for `λᵢ = i` the values overflow
/// near `k = 131` at `n = 200`, and for `λᵢ = e⁻ⁱ` they underflow to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct UnguardedEsp {
    pub values: Vec<f64>,
}

impl UnguardedEsp {
    /// Smallest `k` whose value is not finite.
    pub fn first_overflow(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }

    /// Smallest `k ≤ positive` whose value flushed to zero.
    pub fn first_underflow(&self, positive: usize) -> Option<usize> {
        self.values
            .iter()
            .take(positive + 1)
            .position(|&v| v == 0.0)
    }

    pub fn overflowed(&self, k: usize) -> bool {
        !self.values[k].is_finite()
    }
}

pub fn esp_summation_unguarded(values: &[f64]) -> UnguardedEsp {
    let n = values.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (i, &x) in values.iter().enumerate() {
        for j in (1..=i + 1).rev() {
            e[j] += x * e[j - 1];
        }
    }
    UnguardedEsp { values: e }
}

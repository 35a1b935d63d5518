//! Bandwidth likelihoods for an observed subset under a Gaussian-kernel
//! k-DPP and under its matched DPP.
//!
//! ```text
//! C_kDPP(τ)  = log det L_X - log e_k(λ)
//! C*_DPP(τ)  = log det L_X + k ν* - Σ log(1 + λᵢ e^{ν*})
//! ```
//!
//! `C*_DPP` is the DPP log-likelihood of `eᵛ L` profiled over `ν`. With the
//! saddlepoint ESP, `C*_DPP = C_kDPP - ½ log(2π ψ''(ν*))` exactly. The gap
//! varies slowly with `τ`, so the two maximisers nearly coincide.

use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::esp::{log_esp_upto, log_partition, saddle_from_logs, solve_logs, EspMethod};
use crate::kdpp::SampleSet;
use crate::linalg::{log_det_pd, submatrix};
use crate::numeric::fmt17;
use crate::spectrum::{LEnsemble, PointCloud};

fn check_observed(ensemble: &LEnsemble, observed: &SampleSet) -> Result<usize> {
    let n = ensemble.n();
    let k = observed.len();
    if k == 0 {
        return Err(invalid("observed set is empty"));
    }
    if observed.indices().last().is_some_and(|&i| i >= n) {
        return Err(invalid(format!("observed set {observed:?} exceeds n={n}")));
    }
    Ok(k)
}

/// `log det L_X`, `-∞` when the minor is numerically singular.
pub fn log_det_observed(ensemble: &LEnsemble, observed: &SampleSet) -> f64 {
    log_det_pd(&submatrix(ensemble.matrix(), observed.indices())).unwrap_or(f64::NEG_INFINITY)
}

/// `C_kDPP` for a given ensemble; `-∞` flags a singular observed minor.
pub fn loglik_kdpp_ensemble(ensemble: &LEnsemble, observed: &SampleSet, method: EspMethod) -> Result<f64> {
    let k = check_observed(ensemble, observed)?;
    let logs = ensemble.spectrum().log_values();
    let log_ek = match method {
        EspMethod::Exact => log_esp_upto(logs, k)[k],
        EspMethod::Saddlepoint if k == logs.len() => logs.iter().sum(),
        EspMethod::Saddlepoint => saddle_from_logs(logs, k, None)?.0,
    };
    if log_ek == f64::NEG_INFINITY {
        return Err(Error::Infeasible {
            k,
            positive: ensemble.spectrum().positive_count(),
        });
    }
    Ok(log_det_observed(ensemble, observed) - log_ek)
}

/// `C_kDPP(τ)` with the exact ESP for `n ≤ 64` and the saddlepoint above.
pub fn loglik_kdpp(cloud: &PointCloud, observed: &SampleSet, tau: f64) -> Result<f64> {
    let ensemble = LEnsemble::gaussian(cloud, tau)?;
    loglik_kdpp_ensemble(&ensemble, observed, EspMethod::auto(cloud.len()))
}

/// Profile DPP log-likelihood with the tilt and curvature it was profiled at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub value: f64,
    pub nu_star: f64,
    pub psi2: f64,
    /// Saddlepoint estimate of `log e_k(λ)` at the same `ν*`.
    pub log_esp_saddle: f64,
}

impl ProfilePoint {
    /// `½ log(2π ψ''(ν*))`.
    pub fn half_log_curvature(&self) -> f64 {
        0.5 * (2.0 * std::f64::consts::PI * self.psi2).ln()
    }
}

pub fn profile_loglik_dpp_ensemble(ensemble: &LEnsemble, observed: &SampleSet) -> Result<ProfilePoint> {
    let k = check_observed(ensemble, observed)?;
    let logs = ensemble.spectrum().log_values();
    let sol = solve_logs(logs, k, None)?;
    let partition = log_partition(logs, sol.nu_star);
    let kn = k as f64 * sol.nu_star;
    let point = ProfilePoint {
        value: log_det_observed(ensemble, observed) + kn - partition,
        nu_star: sol.nu_star,
        psi2: sol.psi2,
        log_esp_saddle: 0.0,
    };
    Ok(ProfilePoint {
        log_esp_saddle: partition - kn - point.half_log_curvature(),
        ..point
    })
}

/// `C*_DPP(τ)`.
pub fn profile_loglik_dpp(cloud: &PointCloud, observed: &SampleSet, tau: f64) -> Result<f64> {
    let ensemble = LEnsemble::gaussian(cloud, tau)?;
    Ok(profile_loglik_dpp_ensemble(&ensemble, observed)?.value)
}

/// Both likelihood curves over a bandwidth grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodCurve {
    pub taus: Vec<f64>,
    pub kdpp_ll: Vec<f64>,
    pub dpp_profile_ll: Vec<f64>,
    /// Both curves finite at this grid point.
    pub feasible: Vec<bool>,
    pub half_log_curvature: Vec<f64>,
    /// `C*_DPP - C_kDPP(saddlepoint ESP) + ½ log(2π ψ'')`, zero up to
    /// round-off; NaN at infeasible points.
    pub gap_residual: Vec<f64>,
    pub argmax_kdpp: usize,
    pub argmax_dpp: usize,
    pub esp_method: EspMethod,
}

impl LikelihoodCurve {
    pub fn max_gap_residual(&self) -> f64 {
        self.gap_residual
            .iter()
            .zip(&self.feasible)
            .filter(|(_, f)| **f)
            .map(|(r, _)| r.abs())
            .fold(0.0, f64::max)
    }

    /// Header `tau,loglik_kdpp,loglik_dpp_profile,feasible`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "tau,loglik_kdpp,loglik_dpp_profile,feasible")?;
        for i in 0..self.taus.len() {
            writeln!(
                w,
                "{},{},{},{}",
                fmt17(self.taus[i]),
                fmt17(self.kdpp_ll[i]),
                fmt17(self.dpp_profile_ll[i]),
                self.feasible[i]
            )?;
        }
        Ok(())
    }
}

fn argmax(values: &[f64], feasible: &[bool]) -> Option<usize> {
    values
        .iter()
        .zip(feasible)
        .enumerate()
        .filter(|(_, (_, f))| **f)
        .fold(None, |best: Option<(usize, f64)>, (i, (&v, _))| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}

/// Evaluates both curves on `grid`. `method` selects the ESP used in
/// `C_kDPP`; `None` picks exact for `n ≤ 64`. Grid points where either
/// curve cannot be evaluated are kept and flagged infeasible.
pub fn fit_tau(
    cloud: &PointCloud,
    observed: &SampleSet,
    grid: &[f64],
    method: Option<EspMethod>,
) -> Result<LikelihoodCurve> {
    if grid.is_empty() || grid.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(invalid("bandwidth grid must be nonempty and positive"));
    }
    let method = method.unwrap_or_else(|| EspMethod::auto(cloud.len()));
    let len = grid.len();
    let mut curve = LikelihoodCurve {
        taus: grid.to_vec(),
        kdpp_ll: vec![f64::NAN; len],
        dpp_profile_ll: vec![f64::NAN; len],
        feasible: vec![false; len],
        half_log_curvature: vec![f64::NAN; len],
        gap_residual: vec![f64::NAN; len],
        argmax_kdpp: 0,
        argmax_dpp: 0,
        esp_method: method,
    };
    for (i, &tau) in grid.iter().enumerate() {
        let ensemble = match LEnsemble::gaussian(cloud, tau) {
            Ok(e) => e,
            Err(Error::InvalidInput(msg)) => return Err(Error::InvalidInput(msg)),
            Err(_) => continue,
        };
        let kdpp = loglik_kdpp_ensemble(&ensemble, observed, method);
        if let Err(Error::InvalidInput(msg)) = kdpp {
            return Err(Error::InvalidInput(msg));
        }
        if let Ok(v) = kdpp {
            curve.kdpp_ll[i] = v;
        }
        if let Ok(p) = profile_loglik_dpp_ensemble(&ensemble, observed) {
            curve.dpp_profile_ll[i] = p.value;
            curve.half_log_curvature[i] = p.half_log_curvature();
            let kdpp_saddle = log_det_observed(&ensemble, observed) - p.log_esp_saddle;
            curve.gap_residual[i] = p.value - kdpp_saddle + p.half_log_curvature();
        }
        curve.feasible[i] = curve.kdpp_ll[i].is_finite() && curve.dpp_profile_ll[i].is_finite();
    }
    curve.argmax_kdpp = argmax(&curve.kdpp_ll, &curve.feasible)
        .ok_or_else(|| Error::Degenerate("no feasible grid point".into()))?;
    curve.argmax_dpp = argmax(&curve.dpp_profile_ll, &curve.feasible).expect("same feasible set");
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kdpp::sample_kdpp;
    use crate::numeric::{binomial, log_grid};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        PointCloud::standard_normal(n, 2, &mut rng).unwrap()
    }

    #[test]
    fn single_item_is_certain() {
        let c = PointCloud::new(vec![vec![0.3, 0.1]]).unwrap();
        let x = SampleSet::new(&[0], 1).unwrap();
        assert_relative_eq!(loglik_kdpp(&c, &x, 0.7).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn separated_points_give_uniform_kdpp() {
        let pts = (0..6).map(|i| vec![100.0 * i as f64, 0.0]).collect();
        let c = PointCloud::new(pts).unwrap();
        let x = SampleSet::new(&[1, 4], 6).unwrap();
        let ll = loglik_kdpp(&c, &x, 1.0).unwrap();
        assert_relative_eq!(ll, -binomial(6, 2).ln(), epsilon = 1e-12);
    }

    #[test]
    fn singular_minor_is_minus_infinity() {
        let c = PointCloud::new(vec![vec![0.0], vec![0.0], vec![1.0]]).unwrap();
        let x = SampleSet::new(&[0, 1], 3).unwrap();
        assert_eq!(loglik_kdpp(&c, &x, 1.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn gap_identity_holds() {
        let c = cloud(80, 1);
        let truth = LEnsemble::gaussian(&c, 0.5).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let x = sample_kdpp(&truth, 8, &mut rng).unwrap();
        let curve = fit_tau(&c, &x, &log_grid(0.05, 5.0, 15), Some(EspMethod::Saddlepoint)).unwrap();
        assert!(curve.feasible.iter().filter(|f| **f).count() >= 10);
        assert!(curve.max_gap_residual() < 1e-9);
        for i in 0..15 {
            if curve.feasible[i] {
                let gap = curve.kdpp_ll[i] - curve.dpp_profile_ll[i];
                assert!((gap - curve.half_log_curvature[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_point_grid() {
        let c = cloud(20, 3);
        let x = SampleSet::new(&[0, 5, 9], 20).unwrap();
        let curve = fit_tau(&c, &x, &[0.4], None).unwrap();
        assert_eq!((curve.argmax_kdpp, curve.argmax_dpp), (0, 0));
        assert_eq!(curve.esp_method, EspMethod::Exact);
    }

    #[test]
    fn argmax_skips_infeasible_points() {
        assert_eq!(argmax(&[5.0, 1.0, 3.0], &[false, true, true]), Some(2));
        assert_eq!(argmax(&[1.0, 3.0, 2.0], &[true, true, true]), Some(1));
        assert_eq!(argmax(&[1.0], &[false]), None);
    }

    #[test]
    fn rejects_bad_grid() {
        let c = cloud(10, 4);
        let x = SampleSet::new(&[1, 2], 10).unwrap();
        assert!(fit_tau(&c, &x, &[], None).is_err());
        assert!(fit_tau(&c, &x, &[1.0, -1.0], None).is_err());
    }

    #[test]
    fn csv_layout() {
        let c = cloud(12, 5);
        let x = SampleSet::new(&[0, 3], 12).unwrap();
        let curve = fit_tau(&c, &x, &[0.5, 1.0], None).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "tau,loglik_kdpp,loglik_dpp_profile,feasible");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].ends_with(",true"));
    }
}

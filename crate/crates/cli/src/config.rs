use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use kdpp_core::rng::{stream, Stream};
use kdpp_core::{LEnsemble, PointCloud, Spectrum};

/// Where the eigenvalues (and possibly the eigenvectors) come from.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumKind {
    /// `λᵢ = i`.
    Linear,
    /// `λᵢ = e⁻ⁱ`.
    ExpDecay,
    /// `λᵢ = e^{-i/10}`.
    ExpDecay10,
    /// i.i.d. uniform on `[lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    /// Squared-exponential kernel on a standard normal cloud in the plane.
    Gaussian,
    /// One eigenvalue per line.
    FromFile(PathBuf),
}

impl SpectrumKind {
    /// Kinds that need a seed to be reproducible.
    pub fn is_random(&self) -> bool {
        matches!(self, SpectrumKind::Uniform { .. } | SpectrumKind::Gaussian)
    }
}

impl FromStr for SpectrumKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        match head {
            "linear" => Ok(SpectrumKind::Linear),
            "exp_decay" => Ok(SpectrumKind::ExpDecay),
            "exp_decay10" => Ok(SpectrumKind::ExpDecay10),
            "gaussian" => Ok(SpectrumKind::Gaussian),
            "from_file" if !rest.is_empty() => Ok(SpectrumKind::FromFile(PathBuf::from(rest))),
            "uniform" => {
                let bounds = if rest.is_empty() { "1:10" } else { rest };
                let (lo, hi) = bounds
                    .split_once(':')
                    .ok_or_else(|| format!("expected uniform:LO:HI, got {s:?}"))?;
                let lo: f64 = lo.parse().map_err(|_| format!("bad lower bound in {s:?}"))?;
                let hi: f64 = hi.parse().map_err(|_| format!("bad upper bound in {s:?}"))?;
                if !(lo >= 0.0 && hi > lo) {
                    return Err(format!("uniform bounds must satisfy 0 <= lo < hi, got {s:?}"));
                }
                Ok(SpectrumKind::Uniform { lo, hi })
            }
            _ => Err(format!(
                "unknown spectrum {s:?}; expected linear, exp_decay, exp_decay10, uniform:LO:HI, gaussian or from_file:PATH"
            )),
        }
    }
}

impl fmt::Display for SpectrumKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectrumKind::Linear => write!(f, "linear"),
            SpectrumKind::ExpDecay => write!(f, "exp_decay"),
            SpectrumKind::ExpDecay10 => write!(f, "exp_decay10"),
            SpectrumKind::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            SpectrumKind::Gaussian => write!(f, "gaussian"),
            SpectrumKind::FromFile(p) => write!(f, "from_file:{}", p.display()),
        }
    }
}

/// Settings shared by the subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub n: usize,
    pub k: Option<usize>,
    pub m: usize,
    pub tau: f64,
    pub spectrum: SpectrumKind,
    /// Point cloud CSV (one point per row) used instead of a random cloud.
    pub cloud: Option<PathBuf>,
    /// L-ensemble CSV used instead of any generated spectrum.
    pub matrix: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub check: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            n: 100,
            k: None,
            m: 1,
            tau: 1.0,
            spectrum: SpectrumKind::Linear,
            cloud: None,
            matrix: None,
            out: None,
            check: false,
        }
    }
}

/// A spectrum alone, or a full ensemble when eigenvectors matter.
#[derive(Debug, Clone)]
pub enum Source {
    Diagonal(Spectrum),
    Ensemble(LEnsemble),
}

impl Source {
    pub fn spectrum(&self) -> &Spectrum {
        match self {
            Source::Diagonal(s) => s,
            Source::Ensemble(e) => e.spectrum(),
        }
    }

    pub fn n(&self) -> usize {
        self.spectrum().len()
    }
}

impl RunConfig {
    pub fn require_seed(&self, what: &str) -> Result<u64> {
        self.seed
            .with_context(|| format!("--seed is required for {what}"))
    }

    /// `k`, defaulting to `default` when not given.
    pub fn k_or(&self, default: usize) -> usize {
        self.k.unwrap_or(default)
    }

    /// Point cloud from `--cloud`, or `n` standard normal points in the
    /// plane drawn from the cloud stream.
    pub fn point_cloud(&self) -> Result<PointCloud> {
        match &self.cloud {
            Some(path) => Ok(PointCloud::from_csv(open(path)?)
                .with_context(|| format!("reading point cloud {}", path.display()))?),
            None => {
                let seed = self.require_seed("a random point cloud")?;
                Ok(PointCloud::standard_normal(self.n, 2, &mut stream(seed, Stream::Cloud))?)
            }
        }
    }

    pub fn source(&self) -> Result<Source> {
        if let Some(path) = &self.matrix {
            let ensemble = LEnsemble::from_csv(open(path)?)
                .with_context(|| format!("reading L-ensemble {}", path.display()))?;
            return Ok(Source::Ensemble(ensemble));
        }
        if self.cloud.is_some() {
            return Ok(Source::Ensemble(LEnsemble::gaussian(&self.point_cloud()?, self.tau)?));
        }
        let n = self.n;
        let spectrum = match &self.spectrum {
            SpectrumKind::Linear => Spectrum::linear(n),
            SpectrumKind::ExpDecay => Spectrum::exp_decay(n, 1.0),
            SpectrumKind::ExpDecay10 => Spectrum::exp_decay(n, 10.0),
            SpectrumKind::Uniform { lo, hi } => {
                let seed = self.require_seed("a uniform spectrum")?;
                Spectrum::uniform(n, *lo, *hi, &mut stream(seed, Stream::Spectrum))?
            }
            SpectrumKind::FromFile(path) => Spectrum::from_text(open(path)?)
                .with_context(|| format!("reading spectrum {}", path.display()))?,
            SpectrumKind::Gaussian => {
                return Ok(Source::Ensemble(LEnsemble::gaussian(&self.point_cloud()?, self.tau)?));
            }
        };
        if spectrum.is_empty() {
            bail!("spectrum is empty");
        }
        Ok(Source::Diagonal(spectrum))
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_spectrum_kinds() {
        assert_eq!("linear".parse::<SpectrumKind>().unwrap(), SpectrumKind::Linear);
        assert_eq!("exp_decay10".parse::<SpectrumKind>().unwrap(), SpectrumKind::ExpDecay10);
        assert_eq!(
            "uniform:1:10".parse::<SpectrumKind>().unwrap(),
            SpectrumKind::Uniform { lo: 1.0, hi: 10.0 }
        );
        assert_eq!(
            "from_file:/tmp/x".parse::<SpectrumKind>().unwrap(),
            SpectrumKind::FromFile("/tmp/x".into())
        );
        assert!("uniform:5:1".parse::<SpectrumKind>().is_err());
        assert!("from_file".parse::<SpectrumKind>().is_err());
        assert!("cubic".parse::<SpectrumKind>().is_err());
        for s in ["linear", "exp_decay", "uniform:0.5:2", "gaussian"] {
            assert_eq!(s.parse::<SpectrumKind>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn random_sources_need_a_seed() {
        let cfg = RunConfig {
            spectrum: SpectrumKind::Gaussian,
            ..RunConfig::default()
        };
        assert!(cfg.source().is_err());
        let cfg = RunConfig {
            seed: Some(1),
            n: 10,
            ..cfg
        };
        assert!(matches!(cfg.source().unwrap(), Source::Ensemble(_)));
    }
}

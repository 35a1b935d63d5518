//! L-ensembles, their spectra, and the squared-exponential kernel.
//!
//! An [`LEnsemble`] owns the symmetric PSD matrix `L` together with its
//! eigendecomposition `L = U diag(λ) Uᵀ` (eigenvalues descending). All
//! downstream code reads `U` only through squares or symmetric products, so
//! eigenvector signs are left as the eigensolver returns them.

use std::io::{BufRead, BufReader, Read};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::numeric::{sigmoid, sigmoid_variance};

/// Eigenvalues below `-NOT_PSD_TOLERANCE * max|λ|` reject the matrix; smaller
/// negatives are round-off and are clamped to zero.
pub const NOT_PSD_TOLERANCE: f64 = 1e-6;

/// Relative asymmetry tolerated on input matrices.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Eigenvalues below `RANK_TOLERANCE * λ_max` count as zero for rank checks.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// `n` points in `d` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec<f64>>,
    dim: usize,
}

impl PointCloud {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| invalid("point cloud is empty"))?;
        if dim == 0 {
            return Err(invalid("points must have dimension >= 1"));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(invalid(format!(
                    "point {i} has dimension {} (expected {dim})",
                    p.len()
                )));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(invalid(format!("point {i} has a non-finite coordinate")));
            }
        }
        Ok(Self { points, dim })
    }

    /// `n` i.i.d. draws from the standard normal in `d` dimensions.
    pub fn standard_normal<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Self> {
        let points = (0..n)
            .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        Self::new(points)
    }

    /// One point per CSV row, no header.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        Self::new(read_csv_rows(reader)?)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn squared_distance(&self, i: usize, j: usize) -> f64 {
        self.points[i]
            .iter()
            .zip(&self.points[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

fn read_csv_rows<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| invalid(format!("csv row {}: {e}", line + 1)))?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| invalid(format!("csv row {}: cannot parse {f:?}", line + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Nonnegative eigenvalues with the Bernoulli-sum summaries
/// `μ = Σ λᵢ/(1+λᵢ)` and `σ² = Σ λᵢ/(1+λᵢ)²`.
///
/// Item order is preserved: for diagonal k-DPPs position `i` is item `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
    log_values: Vec<f64>,
    mu: f64,
    sigma2: f64,
}

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(invalid(format!(
                "eigenvalues must be finite and nonnegative, got {bad}"
            )));
        }
        let log_values: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        let mu = log_values.iter().map(|&l| sigmoid(l)).sum();
        let sigma2 = log_values.iter().map(|&l| sigmoid_variance(l)).sum();
        Ok(Self {
            values,
            log_values,
            mu,
            sigma2,
        })
    }

    /// `λᵢ = i` for `i = 1..n`.
    pub fn linear(n: usize) -> Self {
        Self::new((1..=n).map(|i| i as f64).collect()).expect("positive values")
    }

    /// `λᵢ = exp(-i / scale)` for `i = 1..n`.
    pub fn exp_decay(n: usize, scale: f64) -> Self {
        Self::new((1..=n).map(|i| (-(i as f64) / scale).exp()).collect()).expect("positive values")
    }

    /// `n` copies of `c`.
    pub fn flat(n: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; n])
    }

    /// i.i.d. uniform draws on `[lo, hi)`.
    pub fn uniform<R: Rng + ?Sized>(n: usize, lo: f64, hi: f64, rng: &mut R) -> Result<Self> {
        if !(lo >= 0.0 && hi > lo) {
            return Err(invalid(format!("uniform({lo}, {hi}) is not a valid range")));
        }
        Self::new((0..n).map(|_| rng.random_range(lo..hi)).collect())
    }

    /// One eigenvalue per line; blank lines and `#` comments are skipped.
    pub fn from_text<R: Read>(reader: R) -> Result<Self> {
        let mut values = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| invalid(format!("line {}: {e}", i + 1)))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            values.push(
                t.parse::<f64>()
                    .map_err(|_| invalid(format!("line {}: cannot parse {t:?}", i + 1)))?,
            );
        }
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `log λᵢ`, `-∞` for zero eigenvalues.
    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Number of strictly positive eigenvalues.
    pub fn positive_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    /// Number of eigenvalues at least `RANK_TOLERANCE * λ_max`.
    pub fn numerical_rank(&self) -> usize {
        let cut = RANK_TOLERANCE * self.max();
        self.values.iter().filter(|&&v| v > 0.0 && v >= cut).count()
    }

    /// `βλ`; k-DPP quantities are invariant under this map.
    pub fn scaled(&self, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(invalid(format!("scale factor must be positive, got {beta}")));
        }
        Self::new(self.values.iter().map(|v| v * beta).collect())
    }

    /// Spectrum with the items in `alpha` removed.
    pub fn without(&self, alpha: &[usize]) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| !alpha.contains(i))
            .map(|(_, v)| *v)
            .collect();
        Self::new(values).expect("subset of a valid spectrum")
    }
}

/// Degrees-of-freedom summary used to warn when the asymptotic regime is
/// doubtful: `σ²` small means the approximations are unreliable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DofDiagnostic {
    pub mu: f64,
    pub sigma2: f64,
    /// `Tr(L / λ_max)`; `σ²` of the rescaled spectrum is at least a quarter
    /// of this.
    pub trace_normalized: f64,
}

pub fn dof_diagnostic(spectrum: &Spectrum) -> DofDiagnostic {
    let max = spectrum.max();
    let trace_normalized = if max > 0.0 {
        spectrum.values().iter().map(|v| v / max).sum()
    } else {
        0.0
    };
    DofDiagnostic {
        mu: spectrum.mu(),
        sigma2: spectrum.sigma2(),
        trace_normalized,
    }
}

/// Symmetric PSD matrix with cached eigendecomposition.
#[derive(Debug, Clone)]
pub struct LEnsemble {
    matrix: DMatrix<f64>,
    spectrum: Spectrum,
    eigenvectors: DMatrix<f64>,
}

impl LEnsemble {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(invalid(format!(
                "L-ensemble must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(invalid("matrix has non-finite entries"));
        }
        let scale = matrix.amax();
        for i in 0..n {
            for j in (i + 1)..n {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOLERANCE * scale {
                    return Err(invalid(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let eig = SymmetricEigen::try_new(sym.clone(), f64::EPSILON, 100_000)
            .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let largest_abs = eig.eigenvalues.amax();
        let threshold = NOT_PSD_TOLERANCE * largest_abs;
        let mut values = Vec::with_capacity(n);
        for &i in &order {
            let v = eig.eigenvalues[i];
            if v < -threshold {
                return Err(Error::NotPsd {
                    eigenvalue: v,
                    threshold,
                });
            }
            values.push(v.max(0.0));
        }
        let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(Self {
            matrix: sym,
            spectrum: Spectrum::new(values)?,
            eigenvectors,
        })
    }

    /// Squared-exponential kernel `L_ij = exp(-‖xᵢ - xⱼ‖² / (2τ²))`.
    pub fn gaussian(cloud: &PointCloud, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(invalid(format!("bandwidth must be positive, got {tau}")));
        }
        let n = cloud.len();
        let denom = 2.0 * tau * tau;
        let mut m = DMatrix::from_element(n, n, 1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = (-cloud.squared_distance(i, j) / denom).exp();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self::from_matrix(m)
    }

    /// `n` rows of `n` comma-separated reals, no header.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let rows = read_csv_rows(reader)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(invalid("matrix CSV must have n rows of n columns"));
        }
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// `βL`, reusing the eigenvectors.
    pub fn scaled(&self, beta: f64) -> Result<Self> {
        Ok(Self {
            matrix: &self.matrix * beta,
            spectrum: self.spectrum.scaled(beta)?,
            eigenvectors: self.eigenvectors.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    /// Orthonormal eigenvectors as columns, matched to the descending spectrum.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn numerical_rank(&self) -> usize {
        self.spectrum.numerical_rank()
    }
}

pub fn gaussian_l_ensemble(cloud: &PointCloud, tau: f64) -> Result<LEnsemble> {
    LEnsemble::gaussian(cloud, tau)
}

pub fn from_matrix(matrix: DMatrix<f64>) -> Result<LEnsemble> {
    LEnsemble::from_matrix(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn reconstruction_error(e: &LEnsemble) -> f64 {
        let u = e.eigenvectors();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.spectrum().values().to_vec()));
        (u * d * u.transpose() - e.matrix()).amax()
    }

    #[test]
    fn single_point_kernel() {
        let cloud = PointCloud::new(vec![vec![0.3, -1.0]]).unwrap();
        let e = LEnsemble::gaussian(&cloud, 0.7).unwrap();
        assert_eq!(e.matrix()[(0, 0)], 1.0);
        assert_relative_eq!(e.spectrum().values()[0], 1.0);
    }

    #[test]
    fn identical_points_give_rank_one() {
        let cloud = PointCloud::new(vec![vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let e = LEnsemble::gaussian(&cloud, 1.0).unwrap();
        assert!(e.matrix().iter().all(|&v| v == 1.0));
        let v = e.spectrum().values();
        assert_relative_eq!(v[0], 2.0, epsilon = 1e-14);
        assert!(v[1].abs() < 1e-14);
    }

    #[test]
    fn kernel_off_diagonal_value() {
        let tau = 0.8;
        let cloud = PointCloud::new(vec![vec![0.0, 0.0], vec![2f64.sqrt() * tau, 0.0]]).unwrap();
        let e = LEnsemble::gaussian(&cloud, tau).unwrap();
        assert_relative_eq!(e.matrix()[(0, 1)], (-1f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(e.matrix()[(0, 1)], 0.367879, epsilon = 1e-6);
    }

    #[test]
    fn matrix_spectra() {
        let e = from_matrix(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(e.spectrum().values(), &[1.0, 1.0, 1.0]);

        let e = from_matrix(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0, 2.0]))).unwrap();
        assert_eq!(e.spectrum().values(), &[3.0, 2.0, 1.0]);
        let u = e.eigenvectors();
        // permutation of identity columns: each column has a single ±1
        for c in 0..3 {
            let col = u.column(c);
            assert_relative_eq!(col.amax(), 1.0, epsilon = 1e-14);
            assert_relative_eq!(col.norm(), 1.0, epsilon = 1e-14);
        }
        assert_relative_eq!(u[(1, 0)].abs(), 1.0, epsilon = 1e-14);

        let e = from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert_relative_eq!(e.spectrum().values()[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(e.spectrum().values()[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_matrices() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(from_matrix(asym), Err(Error::InvalidInput(_))));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(from_matrix(indefinite), Err(Error::NotPsd { .. })));
        assert!(from_matrix(DMatrix::zeros(2, 3)).is_err());
        let mut nan = DMatrix::identity(2, 2);
        nan[(0, 0)] = f64::NAN;
        assert!(from_matrix(nan).is_err());
    }

    #[test]
    fn rejects_bad_clouds() {
        assert!(PointCloud::new(vec![]).is_err());
        assert!(PointCloud::new(vec![vec![]]).is_err());
        assert!(PointCloud::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(PointCloud::new(vec![vec![f64::INFINITY]]).is_err());
        let cloud = PointCloud::new(vec![vec![0.0]]).unwrap();
        assert!(LEnsemble::gaussian(&cloud, 0.0).is_err());
        assert!(LEnsemble::gaussian(&cloud, f64::NAN).is_err());
    }

    #[test]
    fn gaussian_ensemble_invariants() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for &(n, tau) in &[(5usize, 0.3), (40, 1.0), (80, 0.5)] {
            let cloud = PointCloud::standard_normal(n, 2, &mut rng).unwrap();
            let e = LEnsemble::gaussian(&cloud, tau).unwrap();
            let lmax = e.spectrum().max();
            assert!(reconstruction_error(&e) <= 1e-8 * lmax);
            let u = e.eigenvectors();
            let gram = u.transpose() * u - DMatrix::<f64>::identity(n, n);
            assert!(gram.amax() <= 1e-8);
            assert!(e.spectrum().values().iter().all(|&v| (0.0..=n as f64).contains(&v)));
            assert!(e.spectrum().values().windows(2).all(|w| w[0] >= w[1]));
            assert!(e.spectrum().sigma2() <= e.spectrum().mu());
        }
    }

    #[test]
    fn dof_examples() {
        let d = dof_diagnostic(&Spectrum::new(vec![1.0, 1.0]).unwrap());
        assert_relative_eq!(d.mu, 1.0);
        assert_relative_eq!(d.sigma2, 0.5);
        assert_relative_eq!(d.trace_normalized, 2.0);
        let z = dof_diagnostic(&Spectrum::new(vec![0.0]).unwrap());
        assert_eq!((z.mu, z.sigma2, z.trace_normalized), (0.0, 0.0, 0.0));
    }

    #[test]
    fn sigma2_bounds_from_trace() {
        // x/(1+x)² ≥ x/4 on [0, 1]: σ² of the max-normalised spectrum is at
        // least a quarter of the normalised trace.
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..50 {
            let s = Spectrum::uniform(30, 0.0, 7.0, &mut rng).unwrap();
            let d = dof_diagnostic(&s);
            let normalised = s.scaled(1.0 / s.max()).unwrap();
            assert!(normalised.sigma2() >= d.trace_normalized / 4.0 - 1e-12);
            assert!(s.sigma2() <= s.mu());
        }
    }

    #[test]
    fn csv_inputs() {
        let cloud = PointCloud::from_csv("0,0\n1, 1\n".as_bytes()).unwrap();
        assert_eq!((cloud.len(), cloud.dim()), (2, 2));
        assert!(PointCloud::from_csv("0,0\n1\n".as_bytes()).is_err());
        assert!(PointCloud::from_csv("0,x\n".as_bytes()).is_err());
        let e = LEnsemble::from_csv("2,1\n1,2\n".as_bytes()).unwrap();
        assert_relative_eq!(e.spectrum().values()[0], 3.0, epsilon = 1e-14);
        assert!(LEnsemble::from_csv("2,1\n1,2\n3,3\n".as_bytes()).is_err());
        let s = Spectrum::from_text("# eig\n1.5\n\n2\n".as_bytes()).unwrap();
        assert_eq!(s.values(), &[1.5, 2.0]);
        assert!(Spectrum::from_text("-1\n".as_bytes()).is_err());
    }
}

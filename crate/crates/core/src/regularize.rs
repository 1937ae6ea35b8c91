//! Second-stage estimators: projection of a structural benchmark onto the
//! statistical model, closed-form penalized least squares and GMM, a generic
//! penalized extremum fallback, and treatment-effect extraction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{column_moments, Dataset, DomainSpec, SeededRng, StandardizeTransform};
use crate::error::{Result, SreError};
use crate::linalg::{lstsq, psd_sqrt};
use crate::numerics::{nelder_mead, NelderMeadOptions};
use crate::stats::{raw_to_standardized, standardized_to_raw, PolyFit};
use crate::tuning::CvKind;

/// Additive polynomial feature map: input column `c` enters through the
/// powers listed in `powers[c]`, without cross terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GSpec {
    pub powers: Vec<Vec<u32>>,
}

impl GSpec {
    pub fn new(powers: Vec<Vec<u32>>) -> Result<Self> {
        if powers.is_empty() {
            return Err(SreError::InvalidArgument("feature map has no inputs".into()));
        }
        for p in &powers {
            if p.contains(&0) || p.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SreError::InvalidArgument(
                    "powers must be positive and strictly increasing".into(),
                ));
            }
        }
        if powers.iter().all(Vec::is_empty) {
            return Err(SreError::InvalidArgument("feature map has no features".into()));
        }
        Ok(Self { powers })
    }

    /// `x, x², …, x^degree` in a single input.
    pub fn polynomial(degree: u32) -> Self {
        Self {
            powers: vec![(1..=degree).collect()],
        }
    }

    /// Each of `p` inputs enters linearly.
    pub fn linear(p: usize) -> Self {
        Self {
            powers: vec![vec![1]; p],
        }
    }

    /// Powers `1..=p` of the first input, then `q` lags entering linearly.
    pub fn arx(p: u32, q: usize) -> Self {
        let mut powers = vec![(1..=p).collect::<Vec<_>>()];
        powers.extend(std::iter::repeat_n(vec![1], q));
        Self { powers }
    }

    pub fn n_inputs(&self) -> usize {
        self.powers.len()
    }

    /// Number of features, excluding the intercept.
    pub fn n_features(&self) -> usize {
        self.powers.iter().map(Vec::len).sum()
    }

    /// Unit weight on every feature, zero on the intercept.
    pub fn uniform_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0];
        w.extend(std::iter::repeat_n(1.0, self.n_features()));
        w
    }

    /// Weight equal to the feature's power, zero on the intercept.
    pub fn degree_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0];
        for p in &self.powers {
            w.extend(p.iter().map(|&k| f64::from(k)));
        }
        w
    }
}

/// Squared-L2 penalty `λ Σ_j w_j (θ_j − θ^M_j)²` with the candidate λ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub lambda_grid: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PenaltySpec {
    pub fn new(lambda_grid: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if lambda_grid.is_empty() {
            return Err(SreError::InvalidArgument("empty lambda grid".into()));
        }
        if lambda_grid.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(SreError::InvalidArgument(
                "lambda grid values must be finite and nonnegative".into(),
            ));
        }
        if lambda_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SreError::InvalidArgument(
                "lambda grid must be strictly increasing".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(SreError::InvalidArgument(
                "penalty weights must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            lambda_grid,
            weights,
        })
    }

    /// 25 log-spaced points on `[1e-4, 1e4] · n`.
    pub fn default_grid(n: usize) -> Vec<f64> {
        log_grid(1e-4 * n as f64, 1e4 * n as f64, 25)
    }

    pub fn penalty(&self, theta: &[f64], theta_m: &[f64], lambda: f64) -> f64 {
        penalty_value(&self.weights, theta, theta_m, lambda)
    }
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

fn penalty_value(weights: &[f64], theta: &[f64], theta_m: &[f64], lambda: f64) -> f64 {
    lambda
        * weights
            .iter()
            .zip(theta.iter().zip(theta_m))
            .map(|(w, (a, b))| w * (a - b).powi(2))
            .sum::<f64>()
}

fn check_penalty_dims(p: usize, theta_m: &[f64], penalty: &PenaltySpec, lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(SreError::InvalidArgument(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )));
    }
    if theta_m.len() != p {
        return Err(SreError::DimensionMismatch {
            what: "theta_m length",
            expected: p,
            got: theta_m.len(),
        });
    }
    if penalty.weights.len() != p {
        return Err(SreError::DimensionMismatch {
            what: "penalty weights length",
            expected: p,
            got: penalty.weights.len(),
        });
    }
    if theta_m.iter().any(|v| !v.is_finite()) {
        return Err(SreError::NonFinite("theta_m"));
    }
    Ok(())
}

/// Solves `min ‖b − Aθ‖² + λ Σ w_j (θ_j − θ^M_j)²` as one stacked least
/// squares problem.
fn penalized_lstsq(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    theta_m: &[f64],
    weights: &[f64],
    lambda: f64,
) -> Result<DVector<f64>> {
    let p = a.ncols();
    let active: Vec<usize> = (0..p).filter(|&j| lambda * weights[j] > 0.0).collect();
    let rows = a.nrows() + active.len();
    let mut aug = DMatrix::zeros(rows, p);
    aug.view_mut((0, 0), (a.nrows(), p)).copy_from(a);
    let mut rhs = DVector::zeros(rows);
    rhs.rows_mut(0, a.nrows()).copy_from(b);
    for (r, &j) in active.iter().enumerate() {
        let s = (lambda * weights[j]).sqrt();
        aug[(a.nrows() + r, j)] = s;
        rhs[a.nrows() + r] = s * theta_m[j];
    }
    lstsq(&aug, &rhs)
}

/// `argmin_θ ‖y − Xθ‖² + λ Σ_j w_j (θ_j − θ^M_j)²`.
///
/// `x` is the full design; include a column of ones with weight 0 for an
/// unpenalized intercept.
pub fn sre_ridge(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    theta_m: &[f64],
    penalty: &PenaltySpec,
    lambda: f64,
) -> Result<Vec<f64>> {
    check_penalty_dims(x.ncols(), theta_m, penalty, lambda)?;
    if y.len() != x.nrows() {
        return Err(SreError::DimensionMismatch {
            what: "outcome length",
            expected: x.nrows(),
            got: y.len(),
        });
    }
    let theta = penalized_lstsq(x, y, theta_m, &penalty.weights, lambda)?;
    Ok(theta.iter().copied().collect())
}

/// Penalized linear GMM objective `N² m̄'W m̄ + λ Σ w_j (θ_j − θ^M_j)²` with
/// `m̄ = Z'(y − Xθ)/N`.
#[allow(clippy::too_many_arguments)]
pub fn gmm_objective(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DMatrix<f64>,
    theta: &[f64],
    theta_m: &[f64],
    weights: &[f64],
    lambda: f64,
) -> f64 {
    let resid = y - x * DVector::from_column_slice(theta);
    let g = z.transpose() * resid;
    (g.transpose() * w * &g)[(0, 0)] + penalty_value(weights, theta, theta_m, lambda)
}

/// Closed-form minimizer of [`gmm_objective`]:
/// `(X'ZWZ'X + λΛ)⁻¹ (X'ZWZ'y + λΛθ^M)`.
#[allow(clippy::too_many_arguments)]
pub fn sre_gmm(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DMatrix<f64>,
    theta_m: &[f64],
    penalty: &PenaltySpec,
    lambda: f64,
) -> Result<Vec<f64>> {
    let n = x.nrows();
    check_penalty_dims(x.ncols(), theta_m, penalty, lambda)?;
    for (what, got) in [("instrument rows", z.nrows()), ("outcome length", y.len())] {
        if got != n {
            return Err(SreError::DimensionMismatch {
                what,
                expected: n,
                got,
            });
        }
    }
    if w.nrows() != z.ncols() || w.ncols() != z.ncols() {
        return Err(SreError::DimensionMismatch {
            what: "weight matrix dimension",
            expected: z.ncols(),
            got: w.nrows().max(w.ncols()),
        });
    }
    if z.ncols() < x.ncols() {
        return Err(SreError::InvalidArgument(format!(
            "GMM needs at least as many moments as parameters ({} < {})",
            z.ncols(),
            x.ncols()
        )));
    }
    let root = psd_sqrt(w)?;
    let a = &root * (z.transpose() * x);
    let b = &root * (z.transpose() * y);
    let theta = penalized_lstsq(&a, &b, theta_m, &penalty.weights, lambda).map_err(|e| match e {
        SreError::SingularDesign => SreError::SingularBracket,
        other => other,
    })?;
    Ok(theta.iter().copied().collect())
}

/// Local minimizer of `objective(θ) + λ Σ w_j (θ_j − θ^M_j)²` by simplex
/// search started from `theta_init` and from `theta_m`; the better of the
/// two is returned.
pub fn sre_extremum<F>(
    objective: F,
    theta_m: &[f64],
    penalty: &PenaltySpec,
    lambda: f64,
    theta_init: &[f64],
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    check_penalty_dims(theta_init.len(), theta_m, penalty, lambda)?;
    if !objective(theta_init).is_finite() {
        return Err(SreError::NonFiniteObjective(theta_init.to_vec()));
    }
    let total = |t: &[f64]| objective(t) + penalty_value(&penalty.weights, t, theta_m, lambda);
    let opts = NelderMeadOptions::default();
    let a = nelder_mead(total, theta_init, &opts)?;
    let b = nelder_mead(total, theta_m, &opts)?;
    Ok(if b.value < a.value { b.x } else { a.x })
}

/// Raw-scale representation of an additive polynomial:
/// `constant + Σ_c Σ_k columns[c][k−1] · x_c^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPoly {
    pub constant: f64,
    pub columns: Vec<Vec<f64>>,
}

impl RawPoly {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant
            + self
                .columns
                .iter()
                .zip(x)
                .map(|(c, &v)| c.iter().rev().fold(0.0, |acc, a| (acc + a) * v))
                .sum::<f64>()
    }

    /// Coefficient-wise mean of two polynomials of the same shape.
    pub fn average(&self, other: &RawPoly) -> Result<RawPoly> {
        if self.columns.len() != other.columns.len()
            || self
                .columns
                .iter()
                .zip(&other.columns)
                .any(|(a, b)| a.len() != b.len())
        {
            return Err(SreError::InvalidArgument(
                "cannot average polynomials of different shapes".into(),
            ));
        }
        Ok(RawPoly {
            constant: 0.5 * (self.constant + other.constant),
            columns: self
                .columns
                .iter()
                .zip(&other.columns)
                .map(|(a, b)| a.iter().zip(b).map(|(u, v)| 0.5 * (u + v)).collect())
                .collect(),
        })
    }
}

/// A [`GSpec`] together with the input and feature standardizations
/// estimated on a reference sample. Coefficients are ordered intercept
/// first, then features column by column in increasing power.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    spec: GSpec,
    input: StandardizeTransform,
    features: StandardizeTransform,
}

impl Basis {
    pub fn fit(spec: &GSpec, inputs: &DMatrix<f64>) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(SreError::EmptyDataset);
        }
        if inputs.ncols() != spec.n_inputs() {
            return Err(SreError::DimensionMismatch {
                what: "feature map inputs",
                expected: spec.n_inputs(),
                got: inputs.ncols(),
            });
        }
        let (mean, scale) = column_moments(inputs);
        let input = StandardizeTransform {
            mean,
            scale,
            outcome_mean: 0.0,
        };
        let raw = Self::raw_features(spec, &input, inputs);
        let (fm, fs) = column_moments(&raw);
        Ok(Self {
            spec: spec.clone(),
            input,
            features: StandardizeTransform {
                mean: fm,
                scale: fs,
                outcome_mean: 0.0,
            },
        })
    }

    fn raw_features(
        spec: &GSpec,
        input: &StandardizeTransform,
        x: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        let z = input.apply_inputs(x);
        let mut out = DMatrix::zeros(x.nrows(), spec.n_features());
        let mut j = 0;
        for (c, powers) in spec.powers.iter().enumerate() {
            for &k in powers {
                for i in 0..x.nrows() {
                    out[(i, j)] = z[(i, c)].powi(k as i32);
                }
                j += 1;
            }
        }
        out
    }

    pub fn spec(&self) -> &GSpec {
        &self.spec
    }

    pub fn input_transform(&self) -> &StandardizeTransform {
        &self.input
    }

    pub fn n_params(&self) -> usize {
        self.spec.n_features() + 1
    }

    /// Standardized features, `N × n_features`.
    pub fn features(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.spec.n_inputs() {
            return Err(SreError::DimensionMismatch {
                what: "feature map inputs",
                expected: self.spec.n_inputs(),
                got: x.ncols(),
            });
        }
        Ok(self
            .features
            .apply_inputs(&Self::raw_features(&self.spec, &self.input, x)))
    }

    /// `[1, features]`.
    pub fn design(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let f = self.features(x)?;
        let mut d = DMatrix::from_element(f.nrows(), f.ncols() + 1, 1.0);
        d.view_mut((0, 1), (f.nrows(), f.ncols())).copy_from(&f);
        Ok(d)
    }

    pub fn predict(&self, theta: &[f64], x: &[f64]) -> f64 {
        let mut acc = theta[0];
        let mut j = 0;
        for (c, powers) in self.spec.powers.iter().enumerate() {
            let z = (x[c] - self.input.mean[c]) / self.input.scale[c];
            for &k in powers {
                let f = (z.powi(k as i32) - self.features.mean[j]) / self.features.scale[j];
                acc += theta[j + 1] * f;
                j += 1;
            }
        }
        acc
    }

    /// `∂g/∂x_col` in raw input units.
    pub fn partial(&self, theta: &[f64], x: &[f64], col: usize) -> Result<f64> {
        if col >= self.spec.n_inputs() {
            return Err(SreError::InvalidArgument(format!(
                "treatment index {col} out of range for {} inputs",
                self.spec.n_inputs()
            )));
        }
        let offset: usize = self.spec.powers[..col].iter().map(Vec::len).sum();
        let z = (x[col] - self.input.mean[col]) / self.input.scale[col];
        let d: f64 = self.spec.powers[col]
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let j = offset + i;
                theta[j + 1] / self.features.scale[j] * f64::from(k) * z.powi(k as i32 - 1)
            })
            .sum();
        Ok(d / self.input.scale[col])
    }

    pub fn to_raw(&self, theta: &[f64]) -> Result<RawPoly> {
        if theta.len() != self.n_params() {
            return Err(SreError::DimensionMismatch {
                what: "coefficient length",
                expected: self.n_params(),
                got: theta.len(),
            });
        }
        let mut constant = theta[0];
        let mut columns = Vec::with_capacity(self.spec.n_inputs());
        let mut j = 0;
        for (c, powers) in self.spec.powers.iter().enumerate() {
            let max_power = powers.last().copied().unwrap_or(0) as usize;
            let mut zc = vec![0.0; max_power + 1];
            for &k in powers {
                let (m, s) = (self.features.mean[j], self.features.scale[j]);
                zc[k as usize] += theta[j + 1] / s;
                constant -= theta[j + 1] * m / s;
                j += 1;
            }
            let raw = standardized_to_raw(&zc, self.input.mean[c], self.input.scale[c]);
            constant += raw[0];
            columns.push(raw[1..].to_vec());
        }
        Ok(RawPoly { constant, columns })
    }

    /// Coordinates of a raw polynomial in this basis. Fails when the
    /// polynomial uses powers outside the feature map.
    pub fn from_raw(&self, raw: &RawPoly) -> Result<Vec<f64>> {
        if raw.columns.len() != self.spec.n_inputs() {
            return Err(SreError::DimensionMismatch {
                what: "raw polynomial inputs",
                expected: self.spec.n_inputs(),
                got: raw.columns.len(),
            });
        }
        let mut theta = vec![0.0; self.n_params()];
        let mut constant = raw.constant;
        let mut j = 0;
        for (c, powers) in self.spec.powers.iter().enumerate() {
            let mut coeffs = vec![0.0];
            coeffs.extend_from_slice(&raw.columns[c]);
            let b = raw_to_standardized(&coeffs, self.input.mean[c], self.input.scale[c]);
            constant += b[0];
            let magnitude = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (k, &bk) in b.iter().enumerate().skip(1) {
                if !powers.contains(&(k as u32)) && bk.abs() > 1e-9 * magnitude.max(1.0) {
                    return Err(SreError::InvalidArgument(format!(
                        "power {k} of input {c} is not in the feature map"
                    )));
                }
            }
            for &k in powers {
                let bk = b.get(k as usize).copied().unwrap_or(0.0);
                let (m, s) = (self.features.mean[j], self.features.scale[j]);
                theta[j + 1] = bk * s;
                constant += bk * m;
                j += 1;
            }
        }
        theta[0] = constant;
        Ok(theta)
    }
}

/// A structural model with estimated parameters: it can simulate data and
/// report the conditional mean it implies.
pub trait StructuralBenchmark: Send + Sync {
    fn id(&self) -> &str;

    /// Estimated parameters, by name.
    fn params(&self) -> Vec<(String, f64)>;

    /// `E^M[y | x]`; `period` is the time index for dynamic models.
    fn implied_mean(&self, x: &[f64], period: Option<i64>) -> f64;

    /// Synthetic observations with inputs inside `domain`.
    fn simulate(&self, domain: &DomainSpec, size: usize, rng: &mut SeededRng) -> Result<Dataset>;

    /// Noise-free design for projecting the implied mean onto `g`: an even
    /// grid in one dimension, a Halton sequence otherwise, with outcomes set
    /// to the implied mean.
    fn synthetic_design(
        &self,
        domain: &DomainSpec,
        size: usize,
        _rng: &mut SeededRng,
    ) -> Result<Dataset> {
        let x = design_points(domain, size);
        let y = DVector::from_fn(size, |i, _| {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            self.implied_mean(&row, None)
        });
        Dataset::new(x, y)
    }
}

/// A structural model that can be estimated from data.
pub trait StructuralFamily: Send + Sync {
    fn estimate(&self, data: &Dataset) -> Result<Box<dyn StructuralBenchmark>>;
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// `size` points covering `domain`: evenly spaced endpoints-inclusive in one
/// dimension, the Halton sequence (skipping the origin) in more.
pub fn design_points(domain: &DomainSpec, size: usize) -> DMatrix<f64> {
    let b = domain.bounds();
    if b.len() == 1 {
        let (lo, hi) = b[0];
        return DMatrix::from_fn(size, 1, |i, _| {
            if size == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (size - 1) as f64
            }
        });
    }
    DMatrix::from_fn(size, b.len(), |i, j| {
        let base = PRIMES[j % PRIMES.len()];
        let (lo, hi) = b[j];
        lo + (hi - lo) * radical_inverse(i as u64 + 1, base)
    })
}

/// Default synthetic sample size for a model with `p` parameters.
pub fn default_synthetic_size(p: usize) -> usize {
    1000.max(50 * p)
}

/// `θ^M`: least-squares projection of the benchmark's synthetic design onto
/// the basis.
pub fn fit_theta_m(
    basis: &Basis,
    benchmark: &dyn StructuralBenchmark,
    domain: &DomainSpec,
    size: usize,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    let synthetic = benchmark.synthetic_design(domain, size, rng)?;
    let design = basis.design(synthetic.inputs())?;
    Ok(lstsq(&design, synthetic.outcome())?.iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    SampleSplit,
    CrossFit,
}

/// A fitted structural regularization estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SreFit {
    pub basis: Basis,
    pub theta: Vec<f64>,
    pub theta_m: Vec<f64>,
    pub lambda_star: f64,
    /// λ* of the swapped run for cross-fitting.
    pub lambda_star_swapped: Option<f64>,
    pub method: FitMethod,
    pub cv: CvKind,
}

impl SreFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.basis.predict(&self.theta, x)
    }

    pub fn predict_structural_projection(&self, x: &[f64]) -> f64 {
        self.basis.predict(&self.theta_m, x)
    }

    pub fn raw(&self) -> Result<RawPoly> {
        self.basis.to_raw(&self.theta)
    }
}

/// A fitted conditional mean that is differentiable in its inputs.
pub trait MeanModel {
    fn n_inputs(&self) -> usize;
    fn predict(&self, x: &[f64]) -> f64;
    fn partial(&self, x: &[f64], index: usize) -> f64;
}

impl MeanModel for SreFit {
    fn n_inputs(&self) -> usize {
        self.basis.spec().n_inputs()
    }

    fn predict(&self, x: &[f64]) -> f64 {
        SreFit::predict(self, x)
    }

    fn partial(&self, x: &[f64], index: usize) -> f64 {
        self.basis
            .partial(&self.theta, x, index)
            .expect("index validated by ate_from_fit")
    }
}

impl MeanModel for PolyFit {
    fn n_inputs(&self) -> usize {
        1
    }

    fn predict(&self, x: &[f64]) -> f64 {
        PolyFit::predict(self, x[0])
    }

    fn partial(&self, x: &[f64], _index: usize) -> f64 {
        self.derivative(x[0])
    }
}

/// `x ↦ ∂E[y|x]/∂x_d` for the fitted model, in raw input units.
pub fn ate_from_fit<'a, M: MeanModel + ?Sized>(
    fit: &'a M,
    treatment_index: usize,
) -> Result<impl Fn(&[f64]) -> f64 + 'a> {
    if treatment_index >= fit.n_inputs() {
        return Err(SreError::InvalidArgument(format!(
            "treatment index {treatment_index} out of range for {} inputs",
            fit.n_inputs()
        )));
    }
    Ok(move |x: &[f64]| fit.partial(x, treatment_index))
}

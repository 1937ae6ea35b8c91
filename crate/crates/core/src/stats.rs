//! Baseline statistical estimators: OLS, polynomial regression with AIC
//! degree selection, nonlinear ARX and two-stage least squares.

use nalgebra::{DMatrix, DVector};

use crate::data::column_moments;
use crate::error::{Result, SreError};
use crate::linalg::{condition_number, lstsq, CONDITION_LIMIT};

/// Linear predictor `intercept + x'coefficients`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Feature labels, one per coefficient.
    pub labels: Vec<String>,
    /// Homoskedastic standard errors, intercept first.
    pub std_errors: Vec<f64>,
}

impl LinearFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }

    /// `[intercept, coefficients...]`.
    pub fn theta(&self) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.coefficients.len() + 1);
        t.push(self.intercept);
        t.extend_from_slice(&self.coefficients);
        t
    }
}

fn check_finite(what: &'static str, values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(SreError::NonFinite(what))
    }
}

fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::from_element(x.nrows(), x.ncols() + 1, 1.0);
    d.view_mut((0, 1), (x.nrows(), x.ncols())).copy_from(x);
    d
}

/// Coefficients and homoskedastic standard errors of a least-squares fit of
/// `y` on the full design `d` (no intercept added).
fn least_squares(d: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, Vec<f64>)> {
    let beta = lstsq(d, y)?;
    let n = d.nrows();
    let k = d.ncols();
    let resid = y - d * &beta;
    let dof = n.saturating_sub(k).max(1) as f64;
    let sigma2 = resid.norm_squared() / dof;
    let svd = d.clone().svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let se = (0..k)
        .map(|j| {
            let var: f64 = (0..svd.singular_values.len())
                .map(|s| v_t[(s, j)].powi(2) / svd.singular_values[s].powi(2))
                .sum();
            (sigma2 * var).sqrt()
        })
        .collect();
    Ok((beta, se))
}

fn linear_fit_from(beta: &DVector<f64>, se: Vec<f64>, labels: Vec<String>) -> LinearFit {
    LinearFit {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        labels,
        std_errors: se,
    }
}

/// Ordinary least squares of `y` on `[1, X]`.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LinearFit> {
    if x.nrows() == 0 {
        return Err(SreError::EmptyDataset);
    }
    if y.len() != x.nrows() {
        return Err(SreError::DimensionMismatch {
            what: "outcome length",
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if x.nrows() <= x.ncols() {
        return Err(SreError::InvalidArgument(format!(
            "OLS needs more rows than regressors ({} <= {})",
            x.nrows(),
            x.ncols()
        )));
    }
    check_finite("regressors", x.iter().copied())?;
    check_finite("outcome", y.iter().copied())?;
    let (beta, se) = least_squares(&with_intercept(x), y)?;
    let labels = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
    Ok(linear_fit_from(&beta, se, labels))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Re-expresses `Σ c_j ((x - mean)/scale)^j` as raw monomial coefficients
/// `Σ a_k x^k`.
pub fn standardized_to_raw(coeffs: &[f64], mean: f64, scale: f64) -> Vec<f64> {
    let mut raw = vec![0.0; coeffs.len()];
    for (j, &c) in coeffs.iter().enumerate() {
        let cj = c / scale.powi(j as i32);
        for (k, r) in raw.iter_mut().enumerate().take(j + 1) {
            *r += cj * binomial(j, k) * (-mean).powi((j - k) as i32);
        }
    }
    raw
}

/// Inverse of [`standardized_to_raw`].
pub fn raw_to_standardized(raw: &[f64], mean: f64, scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; raw.len()];
    for (k, &a) in raw.iter().enumerate() {
        for (j, o) in out.iter_mut().enumerate().take(k + 1) {
            *o += a * binomial(k, j) * mean.powi((k - j) as i32) * scale.powi(j as i32);
        }
    }
    out
}

/// Polynomial in one regressor, fitted on standardized powers.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyFit {
    pub degree: usize,
    /// Fit on `z, z², …, z^degree` with `z = (x - x_mean) / x_scale`.
    pub fit: LinearFit,
    pub x_mean: f64,
    pub x_scale: f64,
    /// In-sample residual sum of squares.
    pub rss: f64,
}

impl PolyFit {
    pub fn predict(&self, x: f64) -> f64 {
        let z = (x - self.x_mean) / self.x_scale;
        // Horner on [intercept, c1, ..., cd]
        let theta = self.fit.theta();
        theta.iter().rev().fold(0.0, |acc, c| acc * z + c)
    }

    /// Coefficients of `1, x, …, x^degree` in the raw regressor.
    pub fn raw_coefficients(&self) -> Vec<f64> {
        standardized_to_raw(&self.fit.theta(), self.x_mean, self.x_scale)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let z = (x - self.x_mean) / self.x_scale;
        let d: f64 = self
            .fit
            .coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| (i + 1) as f64 * c * z.powi(i as i32))
            .sum();
        d / self.x_scale
    }
}

fn power_design(z: &[f64], degree: usize) -> DMatrix<f64> {
    DMatrix::from_fn(z.len(), degree, |i, j| z[i].powi(j as i32 + 1))
}

/// Least-squares polynomial of the given degree.
pub fn fit_polynomial(x: &[f64], y: &[f64], degree: usize) -> Result<PolyFit> {
    if degree == 0 {
        return Err(SreError::InvalidArgument("degree must be at least 1".into()));
    }
    if x.len() != y.len() {
        return Err(SreError::DimensionMismatch {
            what: "outcome length",
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() <= degree + 1 {
        return Err(SreError::InvalidArgument(format!(
            "degree {degree} polynomial needs more than {} observations",
            degree + 1
        )));
    }
    check_finite("regressor", x.iter().copied())?;
    check_finite("outcome", y.iter().copied())?;
    let (mean, scale) = column_moments(&DMatrix::from_column_slice(x.len(), 1, x));
    let (mean, scale) = (mean[0], scale[0]);
    let z: Vec<f64> = x.iter().map(|v| (v - mean) / scale).collect();
    let design = with_intercept(&power_design(&z, degree));
    let yv = DVector::from_column_slice(y);
    let (beta, se) = least_squares(&design, &yv)?;
    let rss = (&yv - &design * &beta).norm_squared();
    let labels = (1..=degree).map(|j| format!("z^{j}")).collect();
    Ok(PolyFit {
        degree,
        fit: linear_fit_from(&beta, se, labels),
        x_mean: mean,
        x_scale: scale,
        rss,
    })
}

/// `N ln(RSS/N) + 2(degree + 1)`. RSS is floored at `1e-20 · Σy²` so exact
/// fits of different degrees compare by penalty alone.
pub fn aic(rss: f64, n: usize, degree: usize, sum_y2: f64) -> f64 {
    let floor = (1e-20 * sum_y2).max(f64::MIN_POSITIVE);
    let nf = n as f64;
    nf * (rss.max(floor) / nf).ln() + 2.0 * (degree as f64 + 1.0)
}

/// Degree in `1..=max_degree` minimizing [`aic`]; ties go to the smaller
/// degree.
pub fn select_degree_aic(x: &[f64], y: &[f64], max_degree: usize) -> Result<usize> {
    Ok(fit_polynomial_aic(x, y, max_degree)?.degree)
}

/// Polynomial fit at the AIC-selected degree.
pub fn fit_polynomial_aic(x: &[f64], y: &[f64], max_degree: usize) -> Result<PolyFit> {
    if max_degree == 0 {
        return Err(SreError::InvalidArgument("max_degree must be at least 1".into()));
    }
    if x.len() <= max_degree + 2 {
        return Err(SreError::InvalidArgument(format!(
            "AIC selection up to degree {max_degree} needs more than {} observations",
            max_degree + 2
        )));
    }
    let sum_y2: f64 = y.iter().map(|v| v * v).sum();
    let mut best: Option<(f64, PolyFit)> = None;
    for d in 1..=max_degree {
        let fit = fit_polynomial(x, y, d)?;
        let score = aic(fit.rss, x.len(), d, sum_y2);
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, fit));
        }
    }
    Ok(best.expect("at least one degree").1)
}

/// `n_t = γ₀ + Σ_{j≤p} γ_j R_t^j + Σ_{l≤q} ρ_l n_{t−l} + e_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArxFit {
    pub p: usize,
    pub q: usize,
    pub intercept: f64,
    pub gamma: Vec<f64>,
    pub rho: Vec<f64>,
    pub std_errors: Vec<f64>,
}

impl ArxFit {
    /// One-step prediction; `lags[l-1]` is `n_{t−l}`.
    pub fn predict(&self, r: f64, lags: &[f64]) -> f64 {
        let exo: f64 = self
            .gamma
            .iter()
            .enumerate()
            .map(|(j, g)| g * r.powi(j as i32 + 1))
            .sum();
        let ar: f64 = self.rho.iter().zip(lags).map(|(a, b)| a * b).sum();
        self.intercept + exo + ar
    }
}

/// OLS fit of the nonlinear ARX model on periods `q..T` (the first `q`
/// observations only serve as lags). A constant series is represented by its
/// level as intercept with zero slopes.
pub fn fit_arx(n: &[f64], r: &[f64], p: usize, q: usize) -> Result<ArxFit> {
    let t = n.len();
    if r.len() != t {
        return Err(SreError::DimensionMismatch {
            what: "exogenous series length",
            expected: t,
            got: r.len(),
        });
    }
    if t <= p + q + 1 {
        return Err(SreError::InvalidArgument(format!(
            "ARX({p},{q}) needs more than {} periods",
            p + q + 1
        )));
    }
    check_finite("endogenous series", n.iter().copied())?;
    check_finite("exogenous series", r.iter().copied())?;
    if n.iter().all(|&v| v == n[0]) {
        return Ok(ArxFit {
            p,
            q,
            intercept: n[0],
            gamma: vec![0.0; p],
            rho: vec![0.0; q],
            std_errors: vec![0.0; p + q + 1],
        });
    }
    let rows = t - q;
    let (r_mean, r_scale) = column_moments(&DMatrix::from_column_slice(t, 1, r));
    let (r_mean, r_scale) = (r_mean[0], r_scale[0]);
    let design = DMatrix::from_fn(rows, p + q + 1, |i, j| {
        let s = i + q;
        if j == 0 {
            1.0
        } else if j <= p {
            ((r[s] - r_mean) / r_scale).powi(j as i32)
        } else {
            n[s - (j - p)]
        }
    });
    let y = DVector::from_iterator(rows, n[q..].iter().copied());
    let (beta, se) = least_squares(&design, &y)?;
    let mut poly = vec![beta[0]];
    poly.extend(beta.iter().skip(1).take(p));
    let raw = standardized_to_raw(&poly, r_mean, r_scale);
    // Standard errors for the exogenous block are reported on the
    // standardized powers; AR standard errors are scale-free.
    Ok(ArxFit {
        p,
        q,
        intercept: raw[0],
        gamma: raw[1..].to_vec(),
        rho: beta.iter().skip(1 + p).copied().collect(),
        std_errors: se,
    })
}

/// ARX orders `(p, q)` in `1..=max_p × 1..=max_q` minimizing [`aic`], all
/// compared on the periods `max_q..T` so the samples coincide. Ties go to the
/// smaller `p + q`, then the smaller `p`.
pub fn fit_arx_aic(n: &[f64], r: &[f64], max_p: usize, max_q: usize) -> Result<ArxFit> {
    if max_p == 0 || max_q == 0 {
        return Err(SreError::InvalidArgument(
            "ARX order search needs max_p and max_q of at least 1".into(),
        ));
    }
    if r.len() != n.len() {
        return Err(SreError::DimensionMismatch {
            what: "exogenous series length",
            expected: n.len(),
            got: r.len(),
        });
    }
    let sum_y2: f64 = n.iter().skip(max_q).map(|v| v * v).sum();
    let mut candidates: Vec<(usize, usize)> = (1..=max_p)
        .flat_map(|p| (1..=max_q).map(move |q| (p, q)))
        .collect();
    candidates.sort_by_key(|&(p, q)| (p + q, p));
    let mut best: Option<(f64, ArxFit)> = None;
    for (p, q) in candidates {
        let skip = max_q - q;
        let fit = fit_arx(&n[skip..], &r[skip..], p, q)?;
        let rss: f64 = (max_q..n.len())
            .map(|s| {
                let lags: Vec<f64> = (1..=q).map(|l| n[s - l]).collect();
                (n[s] - fit.predict(r[s], &lags)).powi(2)
            })
            .sum();
        let score = aic(rss, n.len() - max_q, p + q, sum_y2);
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, fit));
        }
    }
    Ok(best.expect("at least one candidate").1)
}

/// Two-stage least squares of `y` on `[1, X]` with instruments `[1, Z]`.
pub fn fit_2sls(y: &DVector<f64>, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<LinearFit> {
    let n = y.len();
    if n == 0 {
        return Err(SreError::EmptyDataset);
    }
    for (what, rows) in [("regressor rows", x.nrows()), ("instrument rows", z.nrows())] {
        if rows != n {
            return Err(SreError::DimensionMismatch {
                what,
                expected: n,
                got: rows,
            });
        }
    }
    if z.ncols() < x.ncols() {
        return Err(SreError::InvalidArgument(format!(
            "2SLS needs at least as many instruments as regressors ({} < {})",
            z.ncols(),
            x.ncols()
        )));
    }
    check_finite("outcome", y.iter().copied())?;
    check_finite("regressors", x.iter().copied())?;
    check_finite("instruments", z.iter().copied())?;
    let xd = with_intercept(x);
    let zd = with_intercept(z);
    if zd.nrows() < zd.ncols() || condition_number(&zd) > CONDITION_LIMIT {
        return Err(SreError::RankDeficientProjection);
    }
    let q = zd.qr().q();
    let x_hat = &q * (q.transpose() * &xd);
    if condition_number(&x_hat) > CONDITION_LIMIT {
        return Err(SreError::RankDeficientProjection);
    }
    let beta = lstsq(&x_hat, y).map_err(|e| match e {
        SreError::SingularDesign => SreError::RankDeficientProjection,
        other => other,
    })?;
    // Standard errors use structural residuals y - Xβ.
    let resid = y - &xd * &beta;
    let dof = n.saturating_sub(xd.ncols()).max(1) as f64;
    let sigma2 = resid.norm_squared() / dof;
    let svd = x_hat.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let se = (0..xd.ncols())
        .map(|j| {
            let var: f64 = (0..svd.singular_values.len())
                .map(|s| v_t[(s, j)].powi(2) / svd.singular_values[s].powi(2))
                .sum();
            (sigma2 * var).sqrt()
        })
        .collect();
    let labels = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
    Ok(linear_fit_from(&beta, se, labels))
}

/// First-stage F statistic for the excluded instruments `Z` in the regression
/// of the single endogenous regressor `x` on `[1, Z]`.
pub fn first_stage_f(x: &DVector<f64>, z: &DMatrix<f64>) -> Result<f64> {
    let n = x.len();
    let l = z.ncols();
    let full = fit_ols(z, x)?;
    let rss_full: f64 = (0..n)
        .map(|i| {
            let row: Vec<f64> = z.row(i).iter().copied().collect();
            (x[i] - full.predict(&row)).powi(2)
        })
        .sum();
    let mean = x.mean();
    let rss_restricted: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let dof = (n - l - 1) as f64;
    if rss_full <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(((rss_restricted - rss_full) / l as f64) / (rss_full / dof))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SeededRng;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn ols_exact_line() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let y = DVector::from_column_slice(&[2.0, 4.0, 6.0]);
        let fit = fit_ols(&x, &y).unwrap();
        assert!(fit.intercept.abs() < 1e-12);
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ols_constant_outcome() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 5.0, 2.0, 7.0]);
        let y = DVector::from_element(4, 3.5);
        let fit = fit_ols(&x, &y).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-12);
        assert!((fit.intercept - 3.5).abs() < 1e-12);
    }

    #[test]
    fn ols_matches_qr_oracle_and_residuals_are_orthogonal() {
        let mut rng = SeededRng::new(11, 0);
        let n = 200;
        let x = DMatrix::from_fn(n, 4, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(n, |i, _| {
            1.0 + x[(i, 0)] - 2.0 * x[(i, 3)] + { let s: f64 = StandardNormal.sample(&mut rng); s }
        });
        let fit = fit_ols(&x, &y).unwrap();

        let d = with_intercept(&x);
        let qr = d.clone().qr();
        let oracle = qr.r().solve_upper_triangular(&(qr.q().transpose() * &y)).unwrap();
        for (a, b) in fit.theta().iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        let beta = DVector::from_vec(fit.theta());
        let e = &y - &d * beta;
        let scale = y.amax() * d.amax();
        for v in (d.transpose() * e).iter() {
            assert!(v.abs() <= 1e-8 * n as f64 * scale);
        }
    }

    #[test]
    fn ols_rejects_rank_deficiency() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0]);
        let y = DVector::from_column_slice(&[1.0, 2.0, 3.0, 5.0]);
        assert!(matches!(fit_ols(&x, &y), Err(SreError::SingularDesign)));
    }

    #[test]
    fn polynomial_recovers_raw_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v).collect();
        let fit = fit_polynomial(&x, &y, 1).unwrap();
        let raw = fit.raw_coefficients();
        assert!(close(raw[0], 1.0, 1e-10) && close(raw[1], 2.0, 1e-10));
    }

    #[test]
    fn polynomial_exact_square() {
        let x = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let fit = fit_polynomial(&x, &y, 2).unwrap();
        let raw = fit.raw_coefficients();
        assert!(raw[0].abs() < 1e-10 && raw[1].abs() < 1e-10 && close(raw[2], 1.0, 1e-10));
        assert!(fit.rss <= 1e-8);
        assert!(close(fit.predict(3.0), 9.0, 1e-10));
    }

    #[test]
    fn higher_degree_never_increases_rss() {
        let mut rng = SeededRng::new(5, 0);
        let x: Vec<f64> = (0..60).map(|i| 5.0 + 25.0 * i as f64 / 59.0).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 0.3 * v * v - v + rng.gen_range(-5.0..5.0))
            .collect();
        let d2 = fit_polynomial(&x, &y, 2).unwrap();
        let d5 = fit_polynomial(&x, &y, 5).unwrap();
        assert!(d5.rss <= d2.rss + 1e-9 * d2.rss);
    }

    #[test]
    fn aic_selection_examples() {
        let x: Vec<f64> = (0..30).map(|i| -3.0 + 0.2 * i as f64).collect();
        let lin: Vec<f64> = x.iter().map(|v| 4.0 - 0.5 * v).collect();
        assert_eq!(select_degree_aic(&x, &lin, 5).unwrap(), 1);
        let cubic: Vec<f64> = x.iter().map(|v| 1.0 + v - 0.5 * v * v + 0.25 * v * v * v).collect();
        assert_eq!(select_degree_aic(&x, &cubic, 5).unwrap(), 3);
        // Constant outcome: every degree fits exactly, penalty decides.
        let flat = vec![2.0; x.len()];
        assert_eq!(select_degree_aic(&x, &flat, 5).unwrap(), 1);
    }

    #[test]
    fn arx_order_selection_finds_the_generating_orders() {
        let mut rng = crate::data::SeededRng::new(31, 0);
        let t = 400;
        let r: Vec<f64> = (0..t).map(|i| (i as f64 * 0.05).sin() + 0.01 * i as f64).collect();
        let mut n = vec![0.0; t];
        for s in 2..t {
            let e: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            n[s] = 0.2 + 0.8 * r[s] - 0.3 * r[s] * r[s] + 0.5 * n[s - 1] - 0.2 * n[s - 2] + 0.05 * e;
        }
        let fit = fit_arx_aic(&n, &r, 3, 4).unwrap();
        assert_eq!((fit.p, fit.q), (2, 2));
        assert!((fit.rho[0] - 0.5).abs() < 0.05 && (fit.gamma[1] + 0.3).abs() < 0.05);
        assert!(fit_arx_aic(&n, &r, 0, 4).is_err());
    }

    #[test]
    fn aic_tie_prefers_smaller_degree() {
        assert_eq!(aic(1.0, 10, 2, 5.0) - 2.0, aic(1.0, 10, 1, 5.0));
    }

    #[test]
    fn raw_and_standardized_round_trip() {
        let c = [0.5, -1.0, 2.0, 0.25];
        let raw = standardized_to_raw(&c, 3.0, 1.5);
        let back = raw_to_standardized(&raw, 3.0, 1.5);
        for (a, b) in c.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn arx_recovers_noiseless_ar1() {
        let mut rng = SeededRng::new(9, 0);
        let t = 40;
        let r: Vec<f64> = (0..t).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut n = vec![1.0];
        for _ in 1..t {
            let last = *n.last().unwrap();
            n.push(0.5 * last);
        }
        let fit = fit_arx(&n, &r, 1, 1).unwrap();
        assert!((fit.rho[0] - 0.5).abs() < 1e-8);
        assert!(fit.intercept.abs() < 1e-8 && fit.gamma[0].abs() < 1e-8);
    }

    #[test]
    fn arx_constant_series_is_its_own_fixed_point() {
        let n = vec![0.4; 20];
        let r: Vec<f64> = (0..20).map(f64::from).collect();
        let fit = fit_arx(&n, &r, 2, 2).unwrap();
        let pred = fit.predict(7.0, &[0.4, 0.4]);
        assert_eq!(pred, 0.4);
    }

    #[test]
    fn arx_monte_carlo_consistency() {
        let mut rng = SeededRng::new(21, 0);
        let t = 10_000;
        let (g0, g1, g2, rho1, rho2) = (0.2, 0.3, -0.05, 0.4, 0.2);
        let r: Vec<f64> = (0..t).map(|_| rng.gen_range(0.0..3.0)).collect();
        let mut n = vec![0.5, 0.5];
        for s in 2..t {
            let e: f64 = StandardNormal.sample(&mut rng);
            let v = g0 + g1 * r[s] + g2 * r[s] * r[s] + rho1 * n[s - 1] + rho2 * n[s - 2] + 0.1 * e;
            n.push(v);
        }
        let fit = fit_arx(&n, &r, 2, 2).unwrap();
        // AR coefficients carry design-invariant standard errors.
        assert!((fit.rho[0] - rho1).abs() < 3.0 * fit.std_errors[3]);
        assert!((fit.rho[1] - rho2).abs() < 3.0 * fit.std_errors[4]);
        assert!((fit.gamma[0] - g1).abs() < 0.05);
        assert!((fit.gamma[1] - g2).abs() < 0.02);
    }

    #[test]
    fn two_sls_with_own_instruments_is_ols() {
        let mut rng = SeededRng::new(3, 0);
        let x = DMatrix::from_fn(50, 2, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(50, |i, _| x[(i, 0)] + 0.3 * x[(i, 1)] + rng.gen_range(-1.0..1.0));
        let a = fit_2sls(&y, &x, &x).unwrap();
        let b = fit_ols(&x, &y).unwrap();
        for (u, v) in a.theta().iter().zip(b.theta()) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn two_sls_just_identified_by_hand() {
        // y = b0 + b1 x with instrument z; (Z'X)^{-1} Z'y over [1 z] and [1 x].
        let x = [1.0, 2.0, 4.0];
        let z = [0.0, 1.0, 3.0];
        let y = [3.0, 2.0, 7.0];
        let (sz, sx, sy) = (4.0, 7.0, 12.0);
        let szx = 0.0 * 1.0 + 1.0 * 2.0 + 3.0 * 4.0;
        let szy = 0.0 * 3.0 + 1.0 * 2.0 + 3.0 * 7.0;
        // [[3, sx], [sz, szx]] [b0, b1]' = [sy, szy]
        let det = 3.0 * szx - sx * sz;
        let b0 = (sy * szx - sx * szy) / det;
        let b1 = (3.0 * szy - sz * sy) / det;
        let fit = fit_2sls(
            &DVector::from_column_slice(&y),
            &DMatrix::from_column_slice(3, 1, &x),
            &DMatrix::from_column_slice(3, 1, &z),
        )
        .unwrap();
        assert!((fit.intercept - b0).abs() < 1e-10);
        assert!((fit.coefficients[0] - b1).abs() < 1e-10);
    }

    #[test]
    fn two_sls_consistent_on_confounded_demand() {
        let mut rng = SeededRng::new(17, 0);
        let m = 20_000;
        let (alpha, beta, a, b, markup) = (100.0, 2.0, 10.0, 1.0, 0.5);
        let mut p = Vec::with_capacity(m);
        let mut q = Vec::with_capacity(m);
        let mut zs = Vec::with_capacity(m);
        for _ in 0..m {
            let z: f64 = rng.gen_range(0.0..30.0);
            let e: f64 = 3.0 * { let s: f64 = StandardNormal.sample(&mut rng); s };
            let c = a + b * z;
            let price = (c + markup * (alpha + e) / beta) / (1.0 + markup);
            p.push(price);
            q.push(alpha - beta * price + e);
            zs.push(z);
        }
        let fit = fit_2sls(
            &DVector::from_vec(q),
            &DMatrix::from_column_slice(m, 1, &p),
            &DMatrix::from_column_slice(m, 1, &zs),
        )
        .unwrap();
        assert!((fit.coefficients[0] + beta).abs() < 0.05, "{}", fit.coefficients[0]);
    }

    #[test]
    fn two_sls_rejects_irrelevant_instrument() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let z = DMatrix::from_column_slice(4, 1, &[1.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_column_slice(&[1.0, 2.0, 2.0, 3.0]);
        assert!(matches!(
            fit_2sls(&y, &x, &z),
            Err(SreError::RankDeficientProjection)
        ));
    }

    proptest! {
        #[test]
        fn polynomial_predictions_invariant_to_regressor_shift(
            shift in -50.0f64..50.0,
            c in proptest::collection::vec(-2.0f64..2.0, 3),
        ) {
            let x: Vec<f64> = (0..25).map(|i| i as f64 / 4.0).collect();
            let y: Vec<f64> = x.iter().map(|v| c[0] + c[1] * v + c[2] * v.sin()).collect();
            let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
            let a = fit_polynomial(&x, &y, 3).unwrap();
            let b = fit_polynomial(&shifted, &y, 3).unwrap();
            for v in &x {
                prop_assert!((a.predict(*v) - b.predict(v + shift)).abs() < 1e-8);
            }
        }
    }
}

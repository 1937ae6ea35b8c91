//! Penalty selection by cross-validation and the sample-splitting and
//! cross-fitting drivers of the structural regularization estimator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{forward_split_indices, partition_indices, Dataset, DomainSpec, SeededRng};
use crate::error::{Result, SreError};
use crate::regularize::{
    default_synthetic_size, fit_theta_m, sre_gmm, sre_ridge, Basis, FitMethod, GSpec, PenaltySpec,
    SreFit, StructuralFamily,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvKind {
    KFold,
    Forward,
    Rolling,
}

/// How λ is cross-validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvPlan {
    pub kind: CvKind,
    /// Fold count for the fold-based kinds.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Forward CV target region.
    #[serde(default)]
    pub target: Option<DomainSpec>,
    /// Share of the sample held out as `S2` in forward CV; defaults to
    /// `1/(k+1)`.
    #[serde(default)]
    pub forward_fraction: Option<f64>,
    /// Rolling window length; defaults to a fifth of the series.
    #[serde(default)]
    pub window_length: Option<usize>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

fn default_k() -> usize {
    5
}

fn default_horizon() -> usize {
    1
}

impl CvPlan {
    pub fn kfold(k: usize) -> Self {
        Self {
            kind: CvKind::KFold,
            k,
            target: None,
            forward_fraction: None,
            window_length: None,
            horizon: 1,
        }
    }

    pub fn forward(k: usize, target: DomainSpec) -> Self {
        Self {
            kind: CvKind::Forward,
            target: Some(target),
            ..Self::kfold(k)
        }
    }

    pub fn rolling(window_length: Option<usize>, horizon: usize) -> Self {
        Self {
            kind: CvKind::Rolling,
            window_length,
            horizon,
            ..Self::kfold(2)
        }
    }
}

/// Mean validation error per candidate λ and the selected λ*.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvTrace {
    pub lambdas: Vec<f64>,
    pub mean_errors: Vec<f64>,
    pub lambda_star: f64,
    /// Validation row indices (into the data passed to the CV routine),
    /// one set per fold or window.
    pub validation_sets: Vec<Vec<usize>>,
}

impl CvTrace {
    /// Index of λ*: the first minimum over the ascending grid. Non-finite
    /// errors never win.
    fn argmin(errors: &[f64]) -> usize {
        let mut best = 0;
        for (i, e) in errors.iter().enumerate() {
            let cur = if errors[best].is_finite() { errors[best] } else { f64::INFINITY };
            let e = if e.is_finite() { *e } else { f64::INFINITY };
            if e < cur {
                best = i;
            }
        }
        best
    }

    pub fn star_index(&self) -> usize {
        Self::argmin(&self.mean_errors)
    }
}

/// Squared-error scorer for models that predict from an input row.
pub fn mse<M, P>(predict: P) -> impl Fn(&M, &Dataset) -> f64
where
    P: Fn(&M, &[f64]) -> f64,
{
    move |model, data| {
        let n = data.len();
        (0..n)
            .map(|i| (data.outcome()[i] - predict(model, &data.input_row(i))).powi(2))
            .sum::<f64>()
            / n as f64
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(SreError::InvalidArgument("empty lambda grid".into()));
    }
    Ok(())
}

fn evaluate<M, F, S>(
    fitter: &F,
    scorer: &S,
    data: &Dataset,
    grid: &[f64],
    splits: Vec<(Vec<usize>, Vec<usize>)>,
) -> Result<CvTrace>
where
    F: Fn(&Dataset, f64) -> Result<M>,
    S: Fn(&M, &Dataset) -> f64,
{
    check_grid(grid)?;
    let mut sums = vec![0.0; grid.len()];
    for (fold, (train, valid)) in splits.iter().enumerate() {
        let train_data = data.select(train)?;
        let valid_data = data.select(valid)?;
        for (l, &lambda) in grid.iter().enumerate() {
            let model = fitter(&train_data, lambda).map_err(|e| e.in_fold(fold))?;
            sums[l] += scorer(&model, &valid_data);
        }
    }
    let mean_errors: Vec<f64> = sums.iter().map(|s| s / splits.len() as f64).collect();
    let star = CvTrace::argmin(&mean_errors);
    Ok(CvTrace {
        lambdas: grid.to_vec(),
        lambda_star: grid[star],
        mean_errors,
        validation_sets: splits.into_iter().map(|(_, v)| v).collect(),
    })
}

/// K-fold cross-validation over `grid`.
pub fn kfold_cv<M, F, S>(
    fitter: F,
    scorer: S,
    data: &Dataset,
    grid: &[f64],
    k: usize,
    rng: &mut SeededRng,
) -> Result<CvTrace>
where
    F: Fn(&Dataset, f64) -> Result<M>,
    S: Fn(&M, &Dataset) -> f64,
{
    let folds = partition_indices(data.len(), k, rng)?;
    let splits = (0..folds.len())
        .map(|f| {
            let train = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, idx)| idx.iter().copied())
                .collect::<Vec<_>>();
            let mut train = train;
            train.sort_unstable();
            (train, folds[f].clone())
        })
        .collect();
    evaluate(&fitter, &scorer, data, grid, splits)
}

/// K-fold forward cross-validation: the points nearest the target form `S2`,
/// which is added to every validation fold and never trained on; the rest
/// is split into `k` folds.
#[allow(clippy::too_many_arguments)]
pub fn forward_cv<M, F, S>(
    fitter: F,
    scorer: S,
    data: &Dataset,
    grid: &[f64],
    k: usize,
    target: &DomainSpec,
    fraction: Option<f64>,
    rng: &mut SeededRng,
) -> Result<CvTrace>
where
    F: Fn(&Dataset, f64) -> Result<M>,
    S: Fn(&M, &Dataset) -> f64,
{
    if k < 2 {
        return Err(SreError::InvalidArgument(format!(
            "forward CV needs at least 2 folds, got {k}"
        )));
    }
    let fraction = fraction.unwrap_or(1.0 / (k as f64 + 1.0));
    let (s1, s2) = forward_split_indices(data, target, fraction)?;
    if s2.is_empty() {
        return Err(SreError::InvalidArgument("forward split left S2 empty".into()));
    }
    let folds = partition_indices(s1.len(), k, rng)?;
    let splits = (0..k)
        .map(|f| {
            let mut train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, idx)| idx.iter().map(|&i| s1[i]))
                .collect();
            train.sort_unstable();
            let mut valid: Vec<usize> = folds[f].iter().map(|&i| s1[i]).collect();
            valid.extend_from_slice(&s2);
            valid.sort_unstable();
            (train, valid)
        })
        .collect();
    evaluate(&fitter, &scorer, data, grid, splits)
}

/// Rolling-window cross-validation: each window of `window_length`
/// consecutive periods is scored on the following `horizon` periods.
pub fn rolling_cv<M, F, S>(
    fitter: F,
    scorer: S,
    data: &Dataset,
    grid: &[f64],
    window_length: usize,
    horizon: usize,
) -> Result<CvTrace>
where
    F: Fn(&Dataset, f64) -> Result<M>,
    S: Fn(&M, &Dataset) -> f64,
{
    if data.time_index().is_none() {
        return Err(SreError::InvalidArgument(
            "rolling CV requires a time index".into(),
        ));
    }
    if window_length == 0 || horizon == 0 {
        return Err(SreError::InvalidArgument(
            "window length and horizon must be positive".into(),
        ));
    }
    let order = data.time_order();
    let t = order.len();
    if t < window_length + horizon {
        return Err(SreError::InvalidArgument(format!(
            "series of length {t} is shorter than window {window_length} plus horizon {horizon}"
        )));
    }
    let splits = (0..=t - window_length - horizon)
        .map(|t0| {
            (
                order[t0..t0 + window_length].to_vec(),
                order[t0 + window_length..t0 + window_length + horizon].to_vec(),
            )
        })
        .collect();
    evaluate(&fitter, &scorer, data, grid, splits)
}

/// Dispatches on the plan's kind.
pub fn run_cv<M, F, S>(
    plan: &CvPlan,
    fitter: F,
    scorer: S,
    data: &Dataset,
    grid: &[f64],
    rng: &mut SeededRng,
) -> Result<CvTrace>
where
    F: Fn(&Dataset, f64) -> Result<M>,
    S: Fn(&M, &Dataset) -> f64,
{
    match plan.kind {
        CvKind::KFold => kfold_cv(fitter, scorer, data, grid, plan.k, rng),
        CvKind::Forward => {
            let target = plan.target.as_ref().ok_or_else(|| {
                SreError::InvalidArgument("forward CV requires a target domain".into())
            })?;
            forward_cv(
                fitter,
                scorer,
                data,
                grid,
                plan.k,
                target,
                plan.forward_fraction,
                rng,
            )
        }
        CvKind::Rolling => {
            let window = plan.window_length.unwrap_or((data.len() / 5).max(1));
            rolling_cv(fitter, scorer, data, grid, window, plan.horizon)
        }
    }
}

/// Estimator used in the penalized second stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum SecondStage {
    /// Penalized least squares on the outcome.
    LeastSquares,
    /// Penalized GMM with moments `(y − g(x; θ)) φ(z)`, where `φ` holds the
    /// powers `1..=instrument_degree` of each standardized instrument plus a
    /// constant, weighted by `(Φ'Φ)⁻¹`.
    Gmm { instrument_degree: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightRule {
    Uniform,
    Degree,
}

/// Everything the estimator needs besides the data and structural family.
#[derive(Debug, Clone, PartialEq)]
pub struct SreSettings {
    pub g_spec: GSpec,
    pub weights: WeightRule,
    /// Defaults to [`PenaltySpec::default_grid`] for the second-stage size.
    pub lambda_grid: Option<Vec<f64>>,
    pub cv: CvPlan,
    pub stage: SecondStage,
    /// Region over which the benchmark's implied mean is projected.
    pub synthetic_domain: DomainSpec,
    pub synthetic_size: Option<usize>,
}

impl SreSettings {
    fn penalty(&self, n: usize) -> Result<PenaltySpec> {
        let weights = match self.weights {
            WeightRule::Uniform => self.g_spec.uniform_weights(),
            WeightRule::Degree => self.g_spec.degree_weights(),
        };
        let grid = self
            .lambda_grid
            .clone()
            .unwrap_or_else(|| PenaltySpec::default_grid(n));
        PenaltySpec::new(grid, weights)
    }
}

struct GmmModel {
    theta: Vec<f64>,
    /// `(Φ'Φ / N)⁻¹` on the training rows.
    weight: DMatrix<f64>,
}

fn instrument_matrix(data: &Dataset) -> Result<&DMatrix<f64>> {
    data.instruments()
        .ok_or_else(|| SreError::InvalidArgument("GMM second stage needs instruments".into()))
}

fn gram_inverse(phi: &DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    (phi.transpose() * phi / scale)
        .try_inverse()
        .ok_or(SreError::SingularDesign)
}

/// One pass of the estimator: the structural model is estimated on
/// `d_struct`, the penalized statistical model on `d_stat`.
pub fn structural_regularization(
    d_struct: &Dataset,
    d_stat: &Dataset,
    family: &dyn StructuralFamily,
    settings: &SreSettings,
    rng: &mut SeededRng,
) -> Result<(SreFit, CvTrace)> {
    let benchmark = family
        .estimate(d_struct)
        .map_err(|e| e.in_stage("structural estimation"))?;
    let basis = Basis::fit(&settings.g_spec, d_stat.inputs())?;
    let size = settings
        .synthetic_size
        .unwrap_or_else(|| default_synthetic_size(basis.n_params()));
    let mut synth_rng = rng.fork();
    let theta_m = fit_theta_m(
        &basis,
        benchmark.as_ref(),
        &settings.synthetic_domain,
        size,
        &mut synth_rng,
    )
    .map_err(|e| e.in_stage("structural projection"))?;
    let penalty = settings.penalty(d_stat.len())?;
    let mut cv_rng = rng.fork();

    let (theta, trace) = match settings.stage {
        SecondStage::LeastSquares => {
            let fitter = |train: &Dataset, lambda: f64| {
                let d = basis.design(train.inputs())?;
                sre_ridge(&d, train.outcome(), &theta_m, &penalty, lambda)
            };
            let scorer = mse(|theta: &Vec<f64>, x: &[f64]| basis.predict(theta, x));
            let trace = run_cv(
                &settings.cv,
                fitter,
                scorer,
                d_stat,
                &penalty.lambda_grid,
                &mut cv_rng,
            )
            .map_err(|e| e.in_stage("cross-validation"))?;
            let theta = fitter(d_stat, trace.lambda_star).map_err(|e| e.in_stage("refit"))?;
            (theta, trace)
        }
        SecondStage::Gmm { instrument_degree } => {
            let z_all = instrument_matrix(d_stat)?;
            let ispec = GSpec::new(vec![(1..=instrument_degree).collect(); z_all.ncols()])?;
            let ibasis = Basis::fit(&ispec, z_all)?;
            let fitter = |train: &Dataset, lambda: f64| -> Result<GmmModel> {
                let x = basis.design(train.inputs())?;
                let phi = ibasis.design(instrument_matrix(train)?)?;
                let w = gram_inverse(&phi, 1.0)?;
                let theta = sre_gmm(&x, &phi, train.outcome(), &w, &theta_m, &penalty, lambda)?;
                let weight = gram_inverse(&phi, train.len() as f64)?;
                Ok(GmmModel { theta, weight })
            };
            let scorer = |model: &GmmModel, valid: &Dataset| -> f64 {
                let (Ok(x), Some(z)) = (basis.design(valid.inputs()), valid.instruments()) else {
                    return f64::INFINITY;
                };
                let Ok(phi) = ibasis.design(z) else {
                    return f64::INFINITY;
                };
                let resid = valid.outcome() - x * DVector::from_column_slice(&model.theta);
                let mbar = phi.transpose() * resid / valid.len() as f64;
                (mbar.transpose() * &model.weight * &mbar)[(0, 0)]
            };
            let trace = run_cv(
                &settings.cv,
                fitter,
                scorer,
                d_stat,
                &penalty.lambda_grid,
                &mut cv_rng,
            )
            .map_err(|e| e.in_stage("cross-validation"))?;
            let model = fitter(d_stat, trace.lambda_star).map_err(|e| e.in_stage("refit"))?;
            (model.theta, trace)
        }
    };

    Ok((
        SreFit {
            basis,
            theta,
            theta_m,
            lambda_star: trace.lambda_star,
            lambda_star_swapped: None,
            method: FitMethod::SampleSplit,
            cv: settings.cv.kind,
        },
        trace,
    ))
}

fn halves(data: &Dataset, rng: &mut SeededRng) -> Result<(Dataset, Dataset)> {
    if data.len() < 2 {
        return Err(SreError::InvalidArgument(
            "sample splitting needs at least two observations".into(),
        ));
    }
    let parts = partition_indices(data.len(), 2, rng)?;
    Ok((data.select(&parts[0])?, data.select(&parts[1])?))
}

/// Sample-split estimator: the structural model is estimated on one random
/// half and the regularized statistical model on the other.
pub fn sre_sample_split(
    data: &Dataset,
    family: &dyn StructuralFamily,
    settings: &SreSettings,
    rng: &mut SeededRng,
) -> Result<SreFit> {
    let (d1, d2) = halves(data, rng)?;
    Ok(structural_regularization(&d1, &d2, family, settings, rng)?.0)
}

/// Cross-fit estimator: both assignments of the halves are run and their
/// coefficients averaged in raw polynomial scale, expressed in the basis of
/// the first run.
pub fn sre_cross_fit(
    data: &Dataset,
    family: &dyn StructuralFamily,
    settings: &SreSettings,
    rng: &mut SeededRng,
) -> Result<SreFit> {
    let (d1, d2) = halves(data, rng)?;
    let (first, _) = structural_regularization(&d1, &d2, family, settings, rng)?;
    let (second, _) = structural_regularization(&d2, &d1, family, settings, rng)?;
    cross_fit_average(&first, &second)
}

/// Averages two fits in raw scale, in the basis of `first`.
pub fn cross_fit_average(first: &SreFit, second: &SreFit) -> Result<SreFit> {
    let theta = first
        .basis
        .from_raw(&first.raw()?.average(&second.raw()?)?)?;
    let tm_a = first.basis.to_raw(&first.theta_m)?;
    let tm_b = second.basis.to_raw(&second.theta_m)?;
    let theta_m = first.basis.from_raw(&tm_a.average(&tm_b)?)?;
    Ok(SreFit {
        basis: first.basis.clone(),
        theta,
        theta_m,
        lambda_star: first.lambda_star,
        lambda_star_swapped: Some(second.lambda_star),
        method: FitMethod::CrossFit,
        cv: first.cv,
    })
}

//! Linear demand with monopoly pricing across independent markets: the
//! market simulator, the pricing-equation structural estimate, the
//! reduced-form IV demand fit and the penalized-GMM demand experiment.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{push_curve, CurvePoint, EstimatorKind, EvalDomain, Experiment};
use crate::data::{Dataset, DomainSpec, SeededRng};
use crate::error::{Result, SreError};
use crate::linalg::lstsq;
use crate::regularize::{GSpec, StructuralBenchmark, StructuralFamily};
use crate::stats::{first_stage_f, fit_2sls, LinearFit};
use crate::tuning::{sre_cross_fit, sre_sample_split, CvPlan, SecondStage, SreSettings, WeightRule};

/// Share of markets allowed a nonpositive price or quantity before the
/// simulation is rejected.
const NONPOSITIVE_TOLERANCE: f64 = 0.001;

/// First-stage F below which the reduced-form fit is refused.
pub const WEAK_INSTRUMENT_F: f64 = 10.0;

/// Stream reserved for the draw that fixes the evaluation price grid.
const PILOT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandParams {
    /// Demand `q = alpha − beta p + ε`.
    pub alpha: f64,
    pub beta: f64,
    /// Marginal cost `c = a + b z`.
    pub a: f64,
    pub b: f64,
    /// Share of the optimal markup the firm charges; 1 is profit maximizing.
    pub lambda_markup: f64,
    pub eps_sd: f64,
    /// `z ~ U[z_low, z_high]`.
    pub z_low: f64,
    pub z_high: f64,
    pub markets: usize,
}

impl Default for DemandParams {
    fn default() -> Self {
        Self {
            alpha: 100.0,
            beta: 2.0,
            a: 10.0,
            b: 1.0,
            lambda_markup: 0.5,
            eps_sd: 3.0,
            z_low: 0.0,
            z_high: 30.0,
            markets: 1000,
        }
    }
}

impl DemandParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.alpha,
            self.beta,
            self.a,
            self.b,
            self.lambda_markup,
            self.eps_sd,
            self.z_low,
            self.z_high,
        ];
        if !finite.iter().all(|v| v.is_finite()) {
            return Err(SreError::NonFinite("demand parameters"));
        }
        if self.beta <= 0.0 {
            return Err(SreError::Config("demand slope beta must be positive".into()));
        }
        if !(self.lambda_markup > 0.0 && self.lambda_markup <= 1.0) {
            return Err(SreError::Config("lambda_markup must lie in (0, 1]".into()));
        }
        if self.eps_sd < 0.0 || self.z_low > self.z_high {
            return Err(SreError::Config(
                "eps_sd must be nonnegative and z_low <= z_high".into(),
            ));
        }
        if self.markets < 4 {
            return Err(SreError::Config("at least four markets are needed".into()));
        }
        Ok(())
    }

    /// Equilibrium price for cost `c` and demand shock `eps`.
    pub fn price(&self, c: f64, eps: f64) -> f64 {
        let l = self.lambda_markup;
        (c + l * (self.alpha + eps) / self.beta) / (1.0 + l)
    }

    pub fn true_demand(&self, p: f64) -> f64 {
        self.alpha - self.beta * p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Market {
    pub p: f64,
    pub q: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketData {
    pub markets: Vec<Market>,
}

impl MarketData {
    pub fn prices(&self) -> Vec<f64> {
        self.markets.iter().map(|m| m.p).collect()
    }

    /// Inputs `p`, outcome `q`, instrument `z`.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let m = self.markets.len();
        Dataset::with_parts(
            DMatrix::from_fn(m, 1, |i, _| self.markets[i].p),
            DVector::from_fn(m, |i, _| self.markets[i].q),
            Some(DMatrix::from_fn(m, 1, |i, _| self.markets[i].z)),
            None,
        )
    }

    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let z = data.instruments().ok_or_else(|| {
            SreError::InvalidArgument("market data needs the cost shifter as instrument".into())
        })?;
        Ok(Self {
            markets: (0..data.len())
                .map(|i| Market {
                    p: data.inputs()[(i, 0)],
                    q: data.outcome()[i],
                    z: z[(i, 0)],
                })
                .collect(),
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "m,p,q,z")?;
        for (i, m) in self.markets.iter().enumerate() {
            writeln!(w, "{i},{:.16e},{:.16e},{:.16e}", m.p, m.q, m.z)?;
        }
        Ok(())
    }
}

pub fn simulate_markets(params: &DemandParams, rng: &mut SeededRng) -> Result<MarketData> {
    params.validate()?;
    let noise = Normal::new(0.0, params.eps_sd)
        .map_err(|e| SreError::InvalidArgument(e.to_string()))?;
    let mut markets = Vec::with_capacity(params.markets);
    let mut bad = 0usize;
    for _ in 0..params.markets {
        let z = if params.z_high > params.z_low {
            rng.gen_range(params.z_low..params.z_high)
        } else {
            params.z_low
        };
        let eps = noise.sample(rng);
        let p = params.price(params.a + params.b * z, eps);
        let q = params.alpha - params.beta * p + eps;
        if p <= 0.0 || q <= 0.0 {
            bad += 1;
        }
        markets.push(Market { p, q, z });
    }
    if bad as f64 > NONPOSITIVE_TOLERANCE * params.markets as f64 {
        return Err(SreError::Simulation(format!(
            "{bad} of {} markets have a nonpositive price or quantity; raise alpha or lower the cost level",
            params.markets
        )));
    }
    Ok(MarketData { markets })
}

/// Demand and cost parameters recovered from the pricing equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralDemandFit {
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
}

/// Regresses `p` on `(1, z, q)`: under optimal pricing the coefficients are
/// `(a, b, 1/β)` exactly, then `α̂` averages `q + β̂ p`.
pub fn structural_estimate_demand(data: &MarketData) -> Result<StructuralDemandFit> {
    let m = data.markets.len();
    if m < 4 {
        return Err(SreError::InvalidArgument(
            "the pricing equation needs at least four markets".into(),
        ));
    }
    let x = DMatrix::from_fn(m, 3, |i, j| match j {
        0 => 1.0,
        1 => data.markets[i].z,
        _ => data.markets[i].q,
    });
    let p = DVector::from_fn(m, |i, _| data.markets[i].p);
    let coef = lstsq(&x, &p)?;
    let beta = 1.0 / coef[2];
    if !beta.is_finite() {
        return Err(SreError::SingularDesign);
    }
    let alpha = data.markets.iter().map(|k| k.q + beta * k.p).sum::<f64>() / m as f64;
    Ok(StructuralDemandFit {
        alpha,
        beta,
        a: coef[0],
        b: coef[1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemandForm {
    Linear,
    Loglog,
}

impl DemandForm {
    pub fn predict(self, fit: &LinearFit, p: f64) -> f64 {
        match self {
            DemandForm::Linear => fit.predict(&[p]),
            DemandForm::Loglog => fit.predict(&[p.ln()]).exp(),
        }
    }
}

/// 2SLS of `q` on `p` (or of `ln q` on `ln p`) with `z` as the excluded
/// instrument.
pub fn rf_demand(data: &MarketData, form: DemandForm) -> Result<LinearFit> {
    let m = data.markets.len();
    if form == DemandForm::Loglog && data.markets.iter().any(|k| k.p <= 0.0 || k.q <= 0.0) {
        return Err(SreError::InvalidArgument(
            "log-log demand needs positive prices and quantities".into(),
        ));
    }
    let t = |v: f64| match form {
        DemandForm::Linear => v,
        DemandForm::Loglog => v.ln(),
    };
    let x = DVector::from_fn(m, |i, _| t(data.markets[i].p));
    let y = DVector::from_fn(m, |i, _| t(data.markets[i].q));
    let z = DMatrix::from_fn(m, 1, |i, _| data.markets[i].z);
    let f_stat = first_stage_f(&x, &z)?;
    if f_stat.is_nan() || f_stat < WEAK_INSTRUMENT_F {
        return Err(SreError::WeakInstrument { f_stat });
    }
    fit_2sls(&y, &DMatrix::from_column_slice(m, 1, x.as_slice()), &z)
}

/// Linear demand implied by the structural estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandBenchmark {
    pub alpha: f64,
    pub beta: f64,
    /// SD of `q − (α̂ − β̂ p)` on the estimation sample.
    pub resid_sd: f64,
}

pub fn demand_benchmark(fit: &StructuralDemandFit, data: &MarketData) -> Result<DemandBenchmark> {
    if fit.beta.is_nan() || fit.beta <= 0.0 {
        return Err(SreError::InvalidArgument(format!(
            "structural demand slope must be positive, got {}",
            fit.beta
        )));
    }
    let resid: Vec<f64> = data
        .markets
        .iter()
        .map(|k| k.q - fit.alpha + fit.beta * k.p)
        .collect();
    let n = resid.len() as f64;
    let mean = resid.iter().sum::<f64>() / n;
    let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok(DemandBenchmark {
        alpha: fit.alpha,
        beta: fit.beta,
        resid_sd: var.sqrt(),
    })
}

impl StructuralBenchmark for DemandBenchmark {
    fn id(&self) -> &str {
        "monopoly-pricing"
    }

    fn params(&self) -> Vec<(String, f64)> {
        vec![("alpha".into(), self.alpha), ("beta".into(), self.beta)]
    }

    fn implied_mean(&self, x: &[f64], _period: Option<i64>) -> f64 {
        self.alpha - self.beta * x[0]
    }

    fn simulate(&self, domain: &DomainSpec, size: usize, rng: &mut SeededRng) -> Result<Dataset> {
        let (lo, hi) = domain.bounds()[0];
        let noise = Normal::new(0.0, self.resid_sd)
            .map_err(|e| SreError::InvalidArgument(e.to_string()))?;
        let p: Vec<f64> = (0..size)
            .map(|_| if hi > lo { rng.gen_range(lo..hi) } else { lo })
            .collect();
        let q: Vec<f64> = p
            .iter()
            .map(|&p| self.implied_mean(&[p], None) + noise.sample(rng))
            .collect();
        Dataset::from_columns(&p, &q)
    }
}

/// Structural family: solve the pricing equation, then read off demand.
#[derive(Debug, Clone, Copy, Default)]
pub struct DemandFamily;

impl StructuralFamily for DemandFamily {
    fn estimate(&self, data: &Dataset) -> Result<Box<dyn StructuralBenchmark>> {
        let markets = MarketData::from_dataset(data)?;
        let fit = structural_estimate_demand(&markets)?;
        Ok(Box::new(demand_benchmark(&fit, &markets)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandEstimation {
    pub sre_degree: u32,
    pub instrument_degree: u32,
    pub folds: usize,
    pub lambda_grid: Option<Vec<f64>>,
    pub weights: WeightRule,
    pub eval_points: usize,
    /// Markets in the draw that fixes the evaluation grid.
    pub pilot_markets: usize,
    /// Replaces the experiment's cross-validation plan when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvPlan>,
}

impl Default for DemandEstimation {
    fn default() -> Self {
        Self {
            sre_degree: 2,
            instrument_degree: 5,
            folds: 5,
            lambda_grid: None,
            weights: WeightRule::Degree,
            eval_points: 100,
            pilot_markets: 100_000,
            cv: None,
        }
    }
}

/// Linear-interpolated sample quantile of sorted values.
fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let pos = prob * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

pub struct DemandExperiment {
    scenario_id: u32,
    params: DemandParams,
    form: DemandForm,
    estimation: DemandEstimation,
    points: Vec<(f64, f64)>,
}

impl DemandExperiment {
    /// Scenarios 1 and 3 price optimally; 2 and 4 use `params.lambda_markup`.
    /// Scenarios 3 and 4 fit the reduced form in logs.
    pub fn new(scenario_id: u32, params: DemandParams, estimation: DemandEstimation) -> Result<Self> {
        let (optimal, form) = match scenario_id {
            1 => (true, DemandForm::Linear),
            2 => (false, DemandForm::Linear),
            3 => (true, DemandForm::Loglog),
            4 => (false, DemandForm::Loglog),
            other => {
                return Err(SreError::Config(format!(
                    "demand scenario must be 1..=4, got {other}"
                )))
            }
        };
        let mut params = params;
        if optimal {
            params.lambda_markup = 1.0;
        }
        params.validate()?;
        if estimation.eval_points < 2 || estimation.pilot_markets < 2 {
            return Err(SreError::Config(
                "eval_points and pilot_markets must be at least 2".into(),
            ));
        }
        if estimation.sre_degree == 0 || estimation.instrument_degree == 0 || estimation.folds < 2 {
            return Err(SreError::Config(
                "degrees must be positive and folds at least 2".into(),
            ));
        }
        let pilot = DemandParams {
            markets: estimation.pilot_markets,
            ..params.clone()
        };
        let mut prices = simulate_markets(&pilot, &mut SeededRng::new(0, PILOT_STREAM))?.prices();
        prices.sort_by(f64::total_cmp);
        let (lo, hi) = (quantile(&prices, 0.01), quantile(&prices, 0.99));
        let k = estimation.eval_points;
        let points = (0..k)
            .map(|i| {
                let p = lo + (hi - lo) * i as f64 / (k - 1) as f64;
                (p, params.true_demand(p))
            })
            .collect();
        Ok(Self {
            scenario_id,
            params,
            form,
            estimation,
            points,
        })
    }

    pub fn params(&self) -> &DemandParams {
        &self.params
    }

    pub fn form(&self) -> DemandForm {
        self.form
    }

    /// The evaluation prices with the true demand at each.
    pub fn eval_points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn settings(&self, data: &MarketData) -> Result<SreSettings> {
        let prices = data.prices();
        let lo = prices.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = prices.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(SreSettings {
            g_spec: GSpec::polynomial(self.estimation.sre_degree),
            weights: self.estimation.weights,
            lambda_grid: self.estimation.lambda_grid.clone(),
            cv: self
                .estimation
                .cv
                .clone()
                .unwrap_or_else(|| CvPlan::kfold(self.estimation.folds)),
            stage: SecondStage::Gmm {
                instrument_degree: self.estimation.instrument_degree,
            },
            synthetic_domain: DomainSpec::interval(lo, hi)?,
            synthetic_size: None,
        })
    }
}

impl Experiment for DemandExperiment {
    fn id(&self) -> &'static str {
        "demand"
    }

    fn scenario(&self) -> u32 {
        self.scenario_id
    }

    fn notes(&self) -> Vec<String> {
        vec![
            format!(
                "markup share {} (1 = optimal pricing); z ~ U[{}, {}], demand shock N(0, {}^2); these are implementation defaults",
                self.params.lambda_markup, self.params.z_low, self.params.z_high, self.params.eps_sd
            ),
            format!(
                "reduced form: {} 2SLS with z as instrument",
                match self.form {
                    DemandForm::Linear => "linear",
                    DemandForm::Loglog => "log-log",
                }
            ),
            format!(
                "SRE: degree-{} polynomial in p, GMM with instruments (1, z, ..., z^{}), {}-fold CV on the held-out GMM objective",
                self.estimation.sre_degree, self.estimation.instrument_degree, self.estimation.folds
            ),
            format!(
                "evaluation grid: {} prices between the 1st and 99th percentile of a {}-market pilot draw",
                self.estimation.eval_points, self.estimation.pilot_markets
            ),
        ]
    }

    fn run_trial(
        &self,
        trial: u64,
        estimators: &[EstimatorKind],
        rng: &mut SeededRng,
    ) -> Result<Vec<CurvePoint>> {
        let data = simulate_markets(&self.params, rng).map_err(|e| e.in_stage("simulation"))?;
        let rows = data.to_dataset()?;
        let mut out = Vec::new();
        for &kind in estimators {
            match kind {
                EstimatorKind::Statistical => {
                    let fit = rf_demand(&data, self.form)
                        .map_err(|e| e.in_stage("statistical fit"))?;
                    push_curve(&mut out, trial, kind, EvalDomain::In, &self.points, |p| {
                        self.form.predict(&fit, p)
                    });
                }
                EstimatorKind::Structural => {
                    let bench = DemandFamily
                        .estimate(&rows)
                        .map_err(|e| e.in_stage("structural estimation"))?;
                    push_curve(&mut out, trial, kind, EvalDomain::In, &self.points, |p| {
                        bench.implied_mean(&[p], None)
                    });
                }
                EstimatorKind::Sre | EstimatorKind::SreCrossfit => {
                    let settings = self.settings(&data)?;
                    let mut sre_rng = rng.fork();
                    let fit = if kind == EstimatorKind::Sre {
                        sre_sample_split(&rows, &DemandFamily, &settings, &mut sre_rng)
                    } else {
                        sre_cross_fit(&rows, &DemandFamily, &settings, &mut sre_rng)
                    }
                    .map_err(|e| e.in_stage(kind.as_str()))?;
                    push_curve(&mut out, trial, kind, EvalDomain::In, &self.points, |p| {
                        fit.predict(&[p])
                    });
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularize::{ate_from_fit, fit_theta_m, Basis};
    use crate::stats::fit_ols;
    use crate::tuning::structural_regularization;

    fn optimal() -> DemandParams {
        DemandParams {
            lambda_markup: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn optimal_prices_satisfy_the_pricing_equation() {
        let p = optimal();
        let data = simulate_markets(&p, &mut SeededRng::new(1, 0)).unwrap();
        for m in &data.markets {
            let c = p.a + p.b * m.z;
            assert!((m.p - c - m.q / p.beta).abs() < 1e-12);
        }
    }

    #[test]
    fn markup_rule_and_demand_hold_jointly() {
        let p = DemandParams::default();
        let data = simulate_markets(&p, &mut SeededRng::new(2, 0)).unwrap();
        let shocks: Vec<f64> = data
            .markets
            .iter()
            .map(|m| m.q - p.true_demand(m.p))
            .collect();
        for (m, eps) in data.markets.iter().zip(&shocks) {
            let c = p.a + p.b * m.z;
            assert!((m.p - c - p.lambda_markup * m.q / p.beta).abs() < 1e-10);
            assert!((m.p - p.price(c, *eps)).abs() < 1e-10);
        }
        let mean = shocks.iter().sum::<f64>() / shocks.len() as f64;
        assert!(mean.abs() < 0.3, "shock mean {mean}");
    }

    #[test]
    fn degenerate_noise_gives_identical_markets() {
        let p = DemandParams {
            eps_sd: 0.0,
            z_low: 7.0,
            z_high: 7.0,
            ..Default::default()
        };
        let data = simulate_markets(&p, &mut SeededRng::new(3, 0)).unwrap();
        assert!(data.markets.iter().all(|m| *m == data.markets[0]));
    }

    #[test]
    fn price_on_quantity_slopes_upward_when_demand_shocks_dominate() {
        // cov(p, q) ∝ λσ_ε² − β²b²σ_z², positive here.
        let p = DemandParams {
            z_low: 0.0,
            z_high: 2.0,
            eps_sd: 8.0,
            ..optimal()
        };
        let data = simulate_markets(&p, &mut SeededRng::new(4, 0)).unwrap();
        let q = DMatrix::from_fn(data.markets.len(), 1, |i, _| data.markets[i].q);
        let fit = fit_ols(&q, &DVector::from_vec(data.prices())).unwrap();
        assert!(fit.coefficients[0] > 0.0);
    }

    #[test]
    fn ols_demand_slope_is_confounded_under_defaults() {
        let data = simulate_markets(&optimal(), &mut SeededRng::new(4, 1)).unwrap();
        let price = DMatrix::from_column_slice(data.markets.len(), 1, &data.prices());
        let q = DVector::from_fn(data.markets.len(), |i, _| data.markets[i].q);
        let fit = fit_ols(&price, &q).unwrap();
        let z = (fit.coefficients[0] + optimal().beta) / fit.std_errors[1];
        assert!(z > 4.0, "OLS slope {} is not biased upward (z = {z})", fit.coefficients[0]);
    }

    #[test]
    fn nonpositive_quantities_are_rejected() {
        let p = DemandParams {
            alpha: 40.0,
            ..Default::default()
        };
        let err = simulate_markets(&p, &mut SeededRng::new(5, 0)).unwrap_err();
        assert!(matches!(err, SreError::Simulation(_)));
    }

    #[test]
    fn structural_solve_is_exact_under_optimal_pricing() {
        let p = optimal();
        let data = simulate_markets(&p, &mut SeededRng::new(6, 0)).unwrap();
        let fit = structural_estimate_demand(&data).unwrap();
        assert!((fit.a - p.a).abs() < 1e-10);
        assert!((fit.b - p.b).abs() < 1e-10);
        assert!((fit.beta - p.beta).abs() < 1e-10);
        assert!((fit.alpha - p.alpha).abs() < 0.5);
        let big = DemandParams {
            markets: 200_000,
            ..optimal()
        };
        let fit = structural_estimate_demand(&simulate_markets(&big, &mut SeededRng::new(6, 1)).unwrap())
            .unwrap();
        assert!((fit.alpha - p.alpha).abs() < 0.05);
    }

    #[test]
    fn structural_slope_absorbs_the_markup_share() {
        let p = DemandParams::default();
        let data = simulate_markets(&p, &mut SeededRng::new(7, 0)).unwrap();
        let fit = structural_estimate_demand(&data).unwrap();
        assert!((fit.beta - p.beta / p.lambda_markup).abs() < 1e-9);
    }

    #[test]
    fn constant_quantity_is_rank_deficient() {
        let data = MarketData {
            markets: (0..10)
                .map(|i| Market {
                    p: 20.0 + i as f64,
                    q: 5.0,
                    z: i as f64,
                })
                .collect(),
        };
        assert!(structural_estimate_demand(&data).is_err());
    }

    #[test]
    fn linear_reduced_form_is_consistent_for_the_slope() {
        let p = optimal();
        for stream in 0..5 {
            let data = simulate_markets(&p, &mut SeededRng::new(8, stream)).unwrap();
            let fit = rf_demand(&data, DemandForm::Linear).unwrap();
            let z = (fit.coefficients[0] + p.beta) / fit.std_errors[1];
            assert!(z.abs() < 4.0, "stream {stream}: z = {z}");
        }
    }

    #[test]
    fn loglog_reduced_form_recovers_loglog_demand() {
        // ln q = 3 − 1.5 ln p with ln p driven by z.
        let markets = (0..200)
            .map(|i| {
                let z = i as f64 / 20.0;
                let p = (0.5 + 0.1 * z + 0.05 * (i % 7) as f64).exp();
                Market {
                    p,
                    q: (3.0 - 1.5 * p.ln()).exp(),
                    z,
                }
            })
            .collect();
        let fit = rf_demand(&MarketData { markets }, DemandForm::Loglog).unwrap();
        assert!((fit.intercept - 3.0).abs() < 1e-9);
        assert!((fit.coefficients[0] + 1.5).abs() < 1e-9);
    }

    #[test]
    fn loglog_rejects_nonpositive_quantities() {
        let data = MarketData {
            markets: vec![
                Market { p: 1.0, q: -1.0, z: 0.0 },
                Market { p: 2.0, q: 1.0, z: 1.0 },
                Market { p: 3.0, q: 2.0, z: 2.0 },
            ],
        };
        assert!(matches!(
            rf_demand(&data, DemandForm::Loglog),
            Err(SreError::InvalidArgument(_))
        ));
    }

    #[test]
    fn irrelevant_cost_shifter_is_a_weak_instrument() {
        let p = DemandParams { b: 0.0, ..optimal() };
        let data = simulate_markets(&p, &mut SeededRng::new(9, 0)).unwrap();
        assert!(matches!(
            rf_demand(&data, DemandForm::Linear),
            Err(SreError::WeakInstrument { .. })
        ));
    }

    #[test]
    fn benchmark_is_the_structural_line() {
        let fit = StructuralDemandFit { alpha: 90.0, beta: 3.0, a: 0.0, b: 0.0 };
        let data = simulate_markets(&optimal(), &mut SeededRng::new(10, 0)).unwrap();
        let bench = demand_benchmark(&fit, &data).unwrap();
        for &p in &[0.0, 10.0, 33.3] {
            assert!((bench.implied_mean(&[p], None) - (90.0 - 3.0 * p)).abs() < 1e-12);
        }
        let bad = StructuralDemandFit { beta: -1.0, ..fit };
        assert!(demand_benchmark(&bad, &data).is_err());
    }

    #[test]
    fn projecting_the_line_onto_quadratics_has_no_curvature() {
        let bench = DemandBenchmark { alpha: 100.0, beta: 2.0, resid_sd: 3.0 };
        let domain = DomainSpec::interval(20.0, 45.0).unwrap();
        let x = DMatrix::from_fn(50, 1, |i, _| 20.0 + i as f64 * 0.5);
        let basis = Basis::fit(&GSpec::polynomial(2), &x).unwrap();
        let theta = fit_theta_m(&basis, &bench, &domain, 1000, &mut SeededRng::new(0, 0)).unwrap();
        let raw = basis.to_raw(&theta).unwrap();
        assert!(raw.eval(&[0.0]) - 100.0 < 1e-8);
        for &p in &[20.0, 30.0, 45.0] {
            assert!((raw.eval(&[p]) - bench.implied_mean(&[p], None)).abs() < 1e-8);
        }
        let curvature = raw.eval(&[1.0]) + raw.eval(&[-1.0]) - 2.0 * raw.eval(&[0.0]);
        assert!(curvature.abs() <= 2e-6, "{curvature}");
    }

    #[test]
    fn benchmark_simulation_matches_its_mean() {
        let bench = DemandBenchmark { alpha: 100.0, beta: 2.0, resid_sd: 3.0 };
        let domain = DomainSpec::interval(20.0, 45.0).unwrap();
        let d = bench.simulate(&domain, 20_000, &mut SeededRng::new(11, 0)).unwrap();
        let resid: f64 = (0..d.len())
            .map(|i| d.outcome()[i] - bench.implied_mean(&d.input_row(i), None))
            .sum::<f64>()
            / d.len() as f64;
        assert!(resid.abs() < 0.1);
        assert!(d.inputs().iter().all(|&p| (20.0..=45.0).contains(&p)));
    }

    fn linear_iv_settings(grid: Vec<f64>) -> SreSettings {
        SreSettings {
            g_spec: GSpec::polynomial(1),
            weights: WeightRule::Degree,
            lambda_grid: Some(grid),
            cv: CvPlan::kfold(5),
            stage: SecondStage::Gmm { instrument_degree: 1 },
            synthetic_domain: DomainSpec::interval(20.0, 45.0).unwrap(),
            synthetic_size: None,
        }
    }

    #[test]
    fn unpenalized_linear_gmm_is_2sls() {
        let data = simulate_markets(&DemandParams::default(), &mut SeededRng::new(12, 0)).unwrap();
        let rows = data.to_dataset().unwrap();
        let (fit, _) = structural_regularization(
            &rows,
            &rows,
            &DemandFamily,
            &linear_iv_settings(vec![0.0]),
            &mut SeededRng::new(12, 1),
        )
        .unwrap();
        let iv = rf_demand(&data, DemandForm::Linear).unwrap();
        for &p in &[20.0, 30.0, 40.0] {
            assert!((fit.predict(&[p]) - iv.predict(&[p])).abs() < 1e-8);
        }
    }

    #[test]
    fn quadratic_fit_slope_matches_finite_difference() {
        let exp = DemandExperiment::new(1, DemandParams::default(), DemandEstimation::default()).unwrap();
        let data = simulate_markets(exp.params(), &mut SeededRng::new(13, 0)).unwrap();
        let fit = sre_sample_split(
            &data.to_dataset().unwrap(),
            &DemandFamily,
            &exp.settings(&data).unwrap(),
            &mut SeededRng::new(13, 1),
        )
        .unwrap();
        let slope = ate_from_fit(&fit, 0).unwrap();
        let h = 1e-6;
        for &(p, _) in exp.eval_points().iter().step_by(11) {
            let fd = (fit.predict(&[p + h]) - fit.predict(&[p - h])) / (2.0 * h);
            assert!((slope(&[p]) - fd).abs() < 1e-6, "{} vs {fd}", slope(&[p]));
        }
    }

    #[test]
    fn demand_slopes_down_for_correct_models() {
        let exp = DemandExperiment::new(1, DemandParams::default(), DemandEstimation::default()).unwrap();
        let trials = 20;
        let mut good = 0;
        for t in 0..trials {
            let data = simulate_markets(exp.params(), &mut SeededRng::new(14, t)).unwrap();
            let fit = sre_sample_split(
                &data.to_dataset().unwrap(),
                &DemandFamily,
                &exp.settings(&data).unwrap(),
                &mut SeededRng::new(15, t),
            )
            .unwrap();
            let slope = ate_from_fit(&fit, 0).unwrap();
            if exp.eval_points().iter().all(|&(p, _)| slope(&[p]) < 0.0) {
                good += 1;
            }
        }
        assert!(good * 100 >= 95 * trials, "{good} of {trials}");
    }

    #[test]
    fn scenarios_map_markup_and_form() {
        let base = DemandParams::default();
        let est = DemandEstimation::default();
        let e1 = DemandExperiment::new(1, base.clone(), est.clone()).unwrap();
        assert_eq!((e1.params().lambda_markup, e1.form()), (1.0, DemandForm::Linear));
        let e4 = DemandExperiment::new(4, base.clone(), est.clone()).unwrap();
        assert_eq!((e4.params().lambda_markup, e4.form()), (0.5, DemandForm::Loglog));
        assert!(DemandExperiment::new(5, base, est).is_err());
    }

    #[test]
    fn eval_grid_spans_the_central_prices() {
        let exp = DemandExperiment::new(2, DemandParams::default(), DemandEstimation::default()).unwrap();
        let pts = exp.eval_points();
        assert_eq!(pts.len(), 100);
        let data = simulate_markets(exp.params(), &mut SeededRng::new(16, 0)).unwrap();
        let inside = data
            .markets
            .iter()
            .filter(|m| m.p >= pts[0].0 && m.p <= pts[99].0)
            .count();
        assert!(inside > 950 && inside < 995, "{inside}");
        for &(p, truth) in pts {
            assert_eq!(truth, exp.params().true_demand(p));
        }
    }

    #[test]
    fn trial_is_deterministic_and_structural_is_exact_when_correct() {
        let exp = DemandExperiment::new(1, DemandParams::default(), DemandEstimation::default()).unwrap();
        let a = exp.run_trial(0, &EstimatorKind::ALL, &mut SeededRng::new(17, 0)).unwrap();
        let b = exp.run_trial(0, &EstimatorKind::ALL, &mut SeededRng::new(17, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 400);
        for pt in a.iter().filter(|pt| pt.estimator == EstimatorKind::Structural) {
            assert!((pt.prediction - pt.truth).abs() < 1.0);
        }
    }

    #[test]
    fn market_csv_layout() {
        let data = MarketData {
            markets: vec![Market { p: 1.5, q: 2.0, z: 0.25 }],
        };
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("m,p,q,z"));
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row, vec![0.0, 1.5, 2.0, 0.25]);
    }
}

//! First-price sealed-bid auctions with independent private values: the
//! equilibrium bid function, the data-generating scenarios, the uniform-value
//! structural benchmark and the winning-bid experiment.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{push_curve, CurvePoint, EstimatorKind, EvalDomain, Experiment};
use crate::data::{Dataset, DomainSpec, SeededRng};
use crate::error::{Result, SreError};
use crate::numerics::integrate;
use crate::regularize::{StructuralBenchmark, StructuralFamily};
use crate::stats::fit_polynomial_aic;
use crate::tuning::{sre_cross_fit, sre_sample_split, CvPlan, SecondStage, SreSettings, WeightRule};

const QUAD_TOL: f64 = 1e-10;

/// Private value distribution on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum ValueDist {
    Uniform,
    /// Beta with integer shape parameters, so the CDF is a finite binomial
    /// sum.
    Beta { a: u32, b: u32 },
}

impl ValueDist {
    fn check(&self) -> Result<()> {
        match *self {
            ValueDist::Beta { a, b } if a == 0 || b == 0 => Err(SreError::InvalidArgument(
                "beta shape parameters must be positive integers".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        let v = v.clamp(0.0, 1.0);
        match *self {
            ValueDist::Uniform => v,
            ValueDist::Beta { a, b } => {
                // I_v(a, b) = Σ_{j=a}^{a+b−1} C(a+b−1, j) v^j (1−v)^{a+b−1−j}
                let m = a + b - 1;
                let mut coef = 1.0;
                let mut total = 0.0;
                for j in 0..=m {
                    if j > 0 {
                        coef *= f64::from(m - j + 1) / f64::from(j);
                    }
                    if j >= a {
                        total += coef * v.powi(j as i32) * (1.0 - v).powi((m - j) as i32);
                    }
                }
                total.clamp(0.0, 1.0)
            }
        }
    }

    pub fn pdf(&self, v: f64) -> f64 {
        if !(0.0..=1.0).contains(&v) {
            return 0.0;
        }
        match *self {
            ValueDist::Uniform => 1.0,
            ValueDist::Beta { a, b } => {
                // 1/B(a, b) = (a+b−1)! / ((a−1)! (b−1)!)
                let mut inv_beta = 1.0;
                for k in 1..a + b {
                    inv_beta *= f64::from(k);
                }
                for k in 1..a {
                    inv_beta /= f64::from(k);
                }
                for k in 1..b {
                    inv_beta /= f64::from(k);
                }
                inv_beta * v.powi(a as i32 - 1) * (1.0 - v).powi(b as i32 - 1)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ValueDist::Uniform => 0.5,
            ValueDist::Beta { a, b } => f64::from(a) / f64::from(a + b),
        }
    }

    fn sample(&self, rng: &mut SeededRng) -> f64 {
        match *self {
            ValueDist::Uniform => rng.gen::<f64>(),
            ValueDist::Beta { a, b } => Beta::new(f64::from(a), f64::from(b))
                .expect("validated shape parameters")
                .sample(rng),
        }
    }
}

/// Symmetric Bayesian-Nash equilibrium bid
/// `b(v) = v − ∫_0^v (F(x)/F(v))^{n−1} dx`.
pub fn equilibrium_bid(v: f64, n: u32, dist: &ValueDist) -> Result<f64> {
    if !(0.0..=1.0).contains(&v) {
        return Err(SreError::InvalidArgument(format!(
            "value {v} outside [0, 1]"
        )));
    }
    if n < 2 {
        return Err(SreError::InvalidArgument(format!(
            "an auction needs at least 2 bidders, got {n}"
        )));
    }
    dist.check()?;
    Ok(bid_unchecked(v, n, dist))
}

fn bid_unchecked(v: f64, n: u32, dist: &ValueDist) -> f64 {
    match dist {
        ValueDist::Uniform => f64::from(n - 1) / f64::from(n) * v,
        _ => {
            let fv = dist.cdf(v);
            if v == 0.0 || fv <= 0.0 {
                return 0.0;
            }
            let shade = integrate(
                |x| (dist.cdf(x) / fv).powi(n as i32 - 1),
                0.0,
                v,
                QUAD_TOL,
            );
            v - shade
        }
    }
}

/// One of the three auction designs plus sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionScenario {
    pub value_dist: ValueDist,
    /// Scale of the half-normal bid multiplier, when bidders overbid.
    #[serde(default)]
    pub overbid_sigma: Option<f64>,
    pub auctions: usize,
    pub n_train: (u32, u32),
    pub n_test: (u32, u32),
}

impl AuctionScenario {
    /// 1: uniform values; 2: Beta(2,5) values; 3: uniform values with
    /// half-normal (σ = 0.5) bid multipliers.
    pub fn preset(scenario: u32) -> Result<Self> {
        let base = Self {
            value_dist: ValueDist::Uniform,
            overbid_sigma: None,
            auctions: 100,
            n_train: (5, 30),
            n_test: (31, 50),
        };
        match scenario {
            1 => Ok(base),
            2 => Ok(Self {
                value_dist: ValueDist::Beta { a: 2, b: 5 },
                ..base
            }),
            3 => Ok(Self {
                overbid_sigma: Some(0.5),
                ..base
            }),
            other => Err(SreError::Config(format!(
                "auction scenario must be 1, 2 or 3, got {other}"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.value_dist.check()?;
        if self.auctions == 0 {
            return Err(SreError::Config("auction count must be positive".into()));
        }
        for (name, (lo, hi)) in [("n_train", self.n_train), ("n_test", self.n_test)] {
            if lo < 2 || hi < lo {
                return Err(SreError::Config(format!(
                    "{name} must satisfy 2 <= lower <= upper, got ({lo}, {hi})"
                )));
            }
        }
        if let Some(s) = self.overbid_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(SreError::Config("overbid_sigma must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Auction {
    pub bidders: u32,
    pub bids: Vec<f64>,
    pub winning_bid: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuctionData {
    pub auctions: Vec<Auction>,
}

impl AuctionData {
    /// Rows `(n_m, b*_m)`.
    pub fn winning_bids(&self) -> Result<Dataset> {
        let n: Vec<f64> = self.auctions.iter().map(|a| f64::from(a.bidders)).collect();
        let b: Vec<f64> = self.auctions.iter().map(|a| a.winning_bid).collect();
        Dataset::from_columns(&n, &b)
    }
}

fn half_normal(sigma: f64, rng: &mut SeededRng) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sigma * z.abs()
}

fn simulate_auction(
    n: u32,
    dist: &ValueDist,
    overbid_sigma: Option<f64>,
    rng: &mut SeededRng,
) -> Auction {
    let bids: Vec<f64> = (0..n)
        .map(|_| {
            let v = dist.sample(rng);
            let b = bid_unchecked(v, n, dist);
            match overbid_sigma {
                Some(s) => half_normal(s, rng) * b,
                None => b,
            }
        })
        .collect();
    let winning_bid = bids.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Auction {
        bidders: n,
        bids,
        winning_bid,
    }
}

/// `M` auctions with bidder counts uniform over the training range.
pub fn simulate_auctions(scenario: &AuctionScenario, rng: &mut SeededRng) -> Result<AuctionData> {
    scenario.validate()?;
    let (lo, hi) = scenario.n_train;
    let auctions = (0..scenario.auctions)
        .map(|_| {
            let n = rng.gen_range(lo..=hi);
            simulate_auction(n, &scenario.value_dist, scenario.overbid_sigma, rng)
        })
        .collect();
    Ok(AuctionData { auctions })
}

/// `E[b* | n]` under the scenario's true mechanism, by quadrature.
///
/// Without overbidding the winner is the highest-value bidder, so
/// `E[b*] = n ∫ b(v) F(v)^{n−1} f(v) dv`. With half-normal multipliers the
/// winning bid is the largest of `n` i.i.d. products `η b(v)` with CDF
/// `G(y) = ∫ erf(y / (b(v) σ √2)) f(v) dv`, and `E[b*] = ∫ (1 − G(y)^n) dy`.
pub fn true_expected_winning_bid(scenario: &AuctionScenario, n: u32) -> Result<f64> {
    if n < 2 {
        return Err(SreError::InvalidArgument(format!(
            "an auction needs at least 2 bidders, got {n}"
        )));
    }
    let dist = scenario.value_dist;
    dist.check()?;
    let nf = f64::from(n);
    match (scenario.overbid_sigma, dist) {
        (None, ValueDist::Uniform) => Ok((nf - 1.0) / (nf + 1.0)),
        (None, _) => Ok(nf
            * integrate(
                |v| bid_unchecked(v, n, &dist) * dist.cdf(v).powi(n as i32 - 1) * dist.pdf(v),
                0.0,
                1.0,
                QUAD_TOL,
            )),
        (Some(sigma), _) => {
            let g = |y: f64| {
                integrate(
                    |v| {
                        let b = bid_unchecked(v, n, &dist);
                        let p = if b <= 0.0 {
                            1.0
                        } else {
                            libm::erf(y / (b * sigma * SQRT_2))
                        };
                        p * dist.pdf(v)
                    },
                    0.0,
                    1.0,
                    QUAD_TOL,
                )
            };
            let upper = 9.0 * sigma * SQRT_2;
            Ok(integrate(|y| 1.0 - g(y).min(1.0).powi(n as i32), 0.0, upper, QUAD_TOL))
        }
    }
}

/// Monte Carlo estimate of `E[b* | n]` and its standard error.
pub fn monte_carlo_winning_bid(
    scenario: &AuctionScenario,
    n: u32,
    draws: usize,
    rng: &mut SeededRng,
) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..draws {
        let w = simulate_auction(n, &scenario.value_dist, scenario.overbid_sigma, rng).winning_bid;
        sum += w;
        sum2 += w * w;
    }
    let d = draws as f64;
    let mean = sum / d;
    let var = (sum2 / d - mean * mean).max(0.0) * d / (d - 1.0);
    (mean, (var / d).sqrt())
}

/// Rational bidders with `U(0, 1)` values: `E[b* | n] = (n − 1)/(n + 1)`.
/// Nothing is estimated.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformBenchmark;

impl StructuralBenchmark for UniformBenchmark {
    fn id(&self) -> &str {
        "uniform-ipv"
    }

    fn params(&self) -> Vec<(String, f64)> {
        Vec::new()
    }

    fn implied_mean(&self, x: &[f64], _period: Option<i64>) -> f64 {
        let n = x[0];
        (n - 1.0) / (n + 1.0)
    }

    /// Winning bids of auctions whose bidder counts are uniform over the
    /// integers in the domain.
    fn simulate(&self, domain: &DomainSpec, size: usize, rng: &mut SeededRng) -> Result<Dataset> {
        let (lo, hi) = domain.bounds()[0];
        let (lo, hi) = (lo.ceil().max(2.0) as u32, hi.floor() as u32);
        if hi < lo {
            return Err(SreError::InvalidArgument(
                "domain contains no admissible bidder count".into(),
            ));
        }
        let mut n = Vec::with_capacity(size);
        let mut b = Vec::with_capacity(size);
        for _ in 0..size {
            let k = rng.gen_range(lo..=hi);
            n.push(f64::from(k));
            b.push(simulate_auction(k, &ValueDist::Uniform, None, rng).winning_bid);
        }
        Dataset::from_columns(&n, &b)
    }
}

/// The uniform benchmark needs no data.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformFamily;

impl StructuralFamily for UniformFamily {
    fn estimate(&self, _data: &Dataset) -> Result<Box<dyn StructuralBenchmark>> {
        Ok(Box::new(UniformBenchmark))
    }
}

/// Estimator settings for the auction experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuctionEstimation {
    /// Largest degree considered by AIC for the statistical polynomial.
    pub max_statistical_degree: usize,
    /// Degree of the regularized polynomial.
    pub sre_degree: u32,
    /// Folds in the forward cross-validation.
    pub forward_k: usize,
    pub lambda_grid: Option<Vec<f64>>,
    /// Replaces the experiment's cross-validation plan when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvPlan>,
}

impl Default for AuctionEstimation {
    fn default() -> Self {
        Self {
            max_statistical_degree: 5,
            sre_degree: 5,
            forward_k: 5,
            lambda_grid: None,
            cv: None,
        }
    }
}

/// Experiment with precomputed truths on the evaluation grid.
pub struct AuctionExperiment {
    scenario_id: u32,
    scenario: AuctionScenario,
    estimation: AuctionEstimation,
    in_points: Vec<(f64, f64)>,
    out_points: Vec<(f64, f64)>,
}

impl AuctionExperiment {
    pub fn new(
        scenario_id: u32,
        scenario: AuctionScenario,
        estimation: AuctionEstimation,
    ) -> Result<Self> {
        scenario.validate()?;
        if estimation.max_statistical_degree == 0 || estimation.sre_degree == 0 {
            return Err(SreError::Config("polynomial degrees must be positive".into()));
        }
        let truth = |range: (u32, u32)| -> Result<Vec<(f64, f64)>> {
            (range.0..=range.1)
                .map(|n| Ok((f64::from(n), true_expected_winning_bid(&scenario, n)?)))
                .collect()
        };
        let in_points = truth(scenario.n_train)?;
        let out_points = truth(scenario.n_test)?;
        Ok(Self {
            scenario_id,
            scenario,
            estimation,
            in_points,
            out_points,
        })
    }

    pub fn scenario_params(&self) -> &AuctionScenario {
        &self.scenario
    }

    pub fn settings(&self) -> Result<SreSettings> {
        let (lo, _) = self.scenario.n_train;
        let (test_lo, test_hi) = self.scenario.n_test;
        Ok(SreSettings {
            g_spec: crate::regularize::GSpec::polynomial(self.estimation.sre_degree),
            weights: WeightRule::Degree,
            lambda_grid: self.estimation.lambda_grid.clone(),
            cv: match &self.estimation.cv {
                Some(cv) => cv.clone(),
                None => CvPlan::forward(
                    self.estimation.forward_k,
                    DomainSpec::interval(f64::from(test_lo), f64::from(test_hi))?,
                ),
            },
            stage: SecondStage::LeastSquares,
            synthetic_domain: DomainSpec::interval(f64::from(lo), f64::from(test_hi))?,
            synthetic_size: None,
        })
    }
}

impl Experiment for AuctionExperiment {
    fn id(&self) -> &'static str {
        "auction"
    }

    fn scenario(&self) -> u32 {
        self.scenario_id
    }

    fn notes(&self) -> Vec<String> {
        let mut notes = vec![
            "structural benchmark: uniform private values, E[b*|n] = (n-1)/(n+1)".to_string(),
            format!(
                "statistical model: polynomial in n, degree chosen by AIC over 1..={}",
                self.estimation.max_statistical_degree
            ),
            format!(
                "SRE: degree-{} polynomial, penalty weight j on degree j, sample split, forward CV (K={}) toward n in [{}, {}]",
                self.estimation.sre_degree,
                self.estimation.forward_k,
                self.scenario.n_test.0,
                self.scenario.n_test.1
            ),
        ];
        if let Some(s) = self.scenario.overbid_sigma {
            notes.push(format!(
                "bid multiplier: normal(0, sd {s}) truncated to (0, inf); truth by nested quadrature"
            ));
        }
        notes
    }

    fn run_trial(
        &self,
        trial: u64,
        estimators: &[EstimatorKind],
        rng: &mut SeededRng,
    ) -> Result<Vec<CurvePoint>> {
        let data = simulate_auctions(&self.scenario, rng).map_err(|e| e.in_stage("simulation"))?;
        let rows = data.winning_bids()?;
        let n = rows.input_column(0);
        let b: Vec<f64> = rows.outcome().iter().copied().collect();
        let mut out = Vec::new();
        let domains = [
            (EvalDomain::In, &self.in_points),
            (EvalDomain::Out, &self.out_points),
        ];
        for &kind in estimators {
            match kind {
                EstimatorKind::Statistical => {
                    let fit = fit_polynomial_aic(&n, &b, self.estimation.max_statistical_degree)
                        .map_err(|e| e.in_stage("statistical fit"))?;
                    for (d, pts) in domains {
                        push_curve(&mut out, trial, kind, d, pts, |x| fit.predict(x));
                    }
                }
                EstimatorKind::Structural => {
                    let bench = UniformFamily
                        .estimate(&rows)
                        .map_err(|e| e.in_stage("structural estimation"))?;
                    for (d, pts) in domains {
                        push_curve(&mut out, trial, kind, d, pts, |x| {
                            bench.implied_mean(&[x], None)
                        });
                    }
                }
                EstimatorKind::Sre | EstimatorKind::SreCrossfit => {
                    let settings = self.settings()?;
                    let mut sre_rng = rng.fork();
                    let fit = if kind == EstimatorKind::Sre {
                        sre_sample_split(&rows, &UniformFamily, &settings, &mut sre_rng)
                    } else {
                        sre_cross_fit(&rows, &UniformFamily, &settings, &mut sre_rng)
                    }
                    .map_err(|e| e.in_stage(kind.as_str()))?;
                    for (d, pts) in domains {
                        push_curve(&mut out, trial, kind, d, pts, |x| fit.predict(&[x]));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `(n_m, b*_m)` rows as matrices, for callers outside the crate.
pub fn to_matrices(data: &AuctionData) -> (DMatrix<f64>, DVector<f64>) {
    let m = data.auctions.len();
    (
        DMatrix::from_fn(m, 1, |i, _| f64::from(data.auctions[i].bidders)),
        DVector::from_fn(m, |i, _| data.auctions[i].winning_bid),
    )
}

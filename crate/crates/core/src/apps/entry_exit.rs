//! Dynamic entry and exit with logit shocks: perfect-foresight, stationary
//! and myopic solutions, market simulation, the CCP Euler-equation
//! estimator and the occupancy-forecasting experiment.
//!
//! Periods run `t = 1..=T`. Paths indexed by period store period `t` at
//! position `t − 1`; occupancy paths store the initial share at position 0.

use std::collections::BTreeSet;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{push_curve, CurvePoint, EstimatorKind, EvalDomain, Experiment};
use crate::data::{Dataset, DomainSpec, SeededRng};
use crate::error::{Result, SreError};
use crate::linalg::lstsq;
use crate::regularize::{GSpec, StructuralBenchmark, StructuralFamily};
use crate::stats::fit_arx_aic;
use crate::tuning::{sre_cross_fit, sre_sample_split, CvPlan, SecondStage, SreSettings, WeightRule};

/// Mean of the type-I extreme value distribution.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const STATIONARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdcParams {
    pub mu: f64,
    pub alpha: f64,
    pub entry_cost: f64,
    pub beta: f64,
    pub n_firms: u64,
    pub t_total: usize,
    pub t_train: usize,
}

impl Default for DdcParams {
    fn default() -> Self {
        Self {
            mu: -2.0,
            alpha: 0.5,
            entry_cost: 4.0,
            beta: 0.8,
            n_firms: 10_000,
            t_total: 500,
            t_train: 250,
        }
    }
}

impl DdcParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.mu, self.alpha, self.entry_cost, self.beta]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(SreError::Config("payoff parameters must be finite".into()));
        }
        if self.entry_cost < 0.0 {
            return Err(SreError::Config("entry cost must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(SreError::Config(format!(
                "discount factor must lie in [0, 1), got {}",
                self.beta
            )));
        }
        if self.n_firms < 2 {
            return Err(SreError::Config("need at least 2 firms".into()));
        }
        if self.t_train >= self.t_total || self.t_train == 0 {
            return Err(SreError::Config(format!(
                "need 0 < t_train < t_total, got {} and {}",
                self.t_train, self.t_total
            )));
        }
        Ok(())
    }

    /// `π^{jk} = (μ + αR − c·1{j=0})·1{k=1}`.
    pub fn payoff(&self, r: f64, j: usize, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.mu + self.alpha * r - if j == 0 { self.entry_cost } else { 0.0 }
        }
    }
}

/// `R_t = r₀ + s·t + u_t` with `u_t = ρ u_{t−1} + σ ε_t`, `u_0 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfitLaw {
    pub intercept: f64,
    pub trend: f64,
    pub ar: f64,
    pub innovation_sd: f64,
}

impl Default for ProfitLaw {
    fn default() -> Self {
        Self {
            intercept: 0.0,
            trend: 0.02,
            ar: 0.5,
            innovation_sd: 0.1,
        }
    }
}

impl ProfitLaw {
    pub fn validate(&self) -> Result<()> {
        if !(self.intercept.is_finite() && self.trend.is_finite()) {
            return Err(SreError::Config("profit path coefficients must be finite".into()));
        }
        if self.ar.is_nan() || self.ar.abs() >= 1.0 {
            return Err(SreError::Config("AR coefficient must lie in (-1, 1)".into()));
        }
        if !(self.innovation_sd >= 0.0 && self.innovation_sd.is_finite()) {
            return Err(SreError::Config("innovation SD must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn draw(&self, periods: usize, rng: &mut SeededRng) -> Vec<f64> {
        let mut u = 0.0;
        (1..=periods)
            .map(|t| {
                let e: f64 = StandardNormal.sample(rng);
                u = self.ar * u + self.innovation_sd * e;
                self.intercept + self.trend * t as f64 + u
            })
            .collect()
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Conditional choice probabilities of one period, kept as logs so that
/// ratios of tiny probabilities stay exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ccp {
    /// `log_p[j][k] = ln p(k | j)`.
    pub log_p: [[f64; 2]; 2],
}

impl Ccp {
    /// Logit probabilities from choice-specific values `v[j][k]`.
    pub fn from_values(v: [[f64; 2]; 2]) -> Self {
        let row = |j: usize| {
            let lse = log_sum_exp(v[j][0], v[j][1]);
            [v[j][0] - lse, v[j][1] - lse]
        };
        Self {
            log_p: [row(0), row(1)],
        }
    }

    /// `p(k | j)`; `p(0 | j)` is the complement, so rows sum to exactly 1.
    pub fn prob(&self, j: usize, k: usize) -> f64 {
        let p1 = self.log_p[j][1].exp();
        if k == 1 {
            p1
        } else {
            1.0 - p1
        }
    }

    pub fn uniform() -> Self {
        let h = 0.5f64.ln();
        Self {
            log_p: [[h, h], [h, h]],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarySolution {
    /// `V̄^j`.
    pub vbar: [f64; 2],
    /// `𝒱^{jk} = π^{jk} + β V̄^k`.
    pub values: [[f64; 2]; 2],
    pub ccp: Ccp,
    pub iterations: usize,
}

fn choice_values(params: &DdcParams, r: f64, next: [f64; 2]) -> [[f64; 2]; 2] {
    let v = |j, k| params.payoff(r, j, k) + params.beta * next[k];
    [[v(0, 0), v(0, 1)], [v(1, 0), v(1, 1)]]
}

fn expected_values(v: &[[f64; 2]; 2]) -> [f64; 2] {
    [
        EULER_GAMMA + log_sum_exp(v[0][0], v[0][1]),
        EULER_GAMMA + log_sum_exp(v[1][0], v[1][1]),
    ]
}

/// Fixed point of `V̄^j = γ + ln Σ_k exp(π^{jk} + β V̄^k)` when `R` is
/// expected to stay at its current value forever. Iterates until the
/// sup-norm change is below `1e-12`, or a few ulps of the values when they
/// are too large for that.
pub fn solve_stationary(params: &DdcParams, r: f64) -> Result<StationarySolution> {
    if !(0.0..1.0).contains(&params.beta) {
        return Err(SreError::InvalidArgument("discount factor must lie in [0, 1)".into()));
    }
    if !r.is_finite() {
        return Err(SreError::NonFinite("profit level"));
    }
    let mut vbar = [0.0, 0.0];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let next = expected_values(&choice_values(params, r, vbar));
        let change = (next[0] - vbar[0]).abs().max((next[1] - vbar[1]).abs());
        let scale = next[0].abs().max(next[1].abs());
        vbar = next;
        if change <= STATIONARY_TOL.max(8.0 * f64::EPSILON * scale) || iterations >= 1_000_000 {
            break;
        }
    }
    let values = choice_values(params, r, vbar);
    Ok(StationarySolution {
        vbar,
        values,
        ccp: Ccp::from_values(values),
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerfectForesightSolution {
    /// `𝒱_t^{jk}` for `t = 1..=T`.
    pub values: Vec<[[f64; 2]; 2]>,
    /// `V̄_t^j` for `t = 1..=T`.
    pub vbar: Vec<[f64; 2]>,
    pub ccps: Vec<Ccp>,
}

/// Backward induction with the whole profit path known. Beyond the last
/// period the environment is treated as stationary at `R_T`.
pub fn solve_perfect_foresight(params: &DdcParams, r_path: &[f64]) -> Result<PerfectForesightSolution> {
    let t = r_path.len();
    if t == 0 {
        return Err(SreError::EmptyDataset);
    }
    if r_path.iter().any(|r| !r.is_finite()) {
        return Err(SreError::NonFinite("profit path"));
    }
    let mut next = solve_stationary(params, r_path[t - 1])?.vbar;
    let mut values = vec![[[0.0; 2]; 2]; t];
    let mut vbar = vec![[0.0; 2]; t];
    for s in (0..t).rev() {
        values[s] = choice_values(params, r_path[s], next);
        vbar[s] = expected_values(&values[s]);
        next = vbar[s];
    }
    let ccps = values.iter().map(|v| Ccp::from_values(*v)).collect();
    Ok(PerfectForesightSolution { values, vbar, ccps })
}

/// Choice probabilities that ignore the future.
pub fn myopic_ccp(params: &DdcParams, r: f64) -> Ccp {
    Ccp::from_values(choice_values(
        &DdcParams {
            beta: 0.0,
            ..params.clone()
        },
        r,
        [0.0, 0.0],
    ))
}

/// How firms form expectations about future profits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    PerfectForesight,
    /// Future profits are expected to equal today's.
    Adaptive,
    Myopic,
}

impl Regime {
    pub fn from_scenario(scenario: u32) -> Result<Self> {
        match scenario {
            1 => Ok(Regime::PerfectForesight),
            2 => Ok(Regime::Adaptive),
            3 => Ok(Regime::Myopic),
            other => Err(SreError::Config(format!(
                "entry-exit scenario must be 1, 2 or 3, got {other}"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::PerfectForesight => "perfect-foresight",
            Regime::Adaptive => "adaptive",
            Regime::Myopic => "myopic",
        }
    }
}

/// Per-period choice probabilities under a regime.
pub fn regime_ccps(regime: Regime, params: &DdcParams, r_path: &[f64]) -> Result<Vec<Ccp>> {
    match regime {
        Regime::PerfectForesight => Ok(solve_perfect_foresight(params, r_path)?.ccps),
        Regime::Adaptive => r_path
            .iter()
            .map(|&r| Ok(solve_stationary(params, r)?.ccp))
            .collect(),
        Regime::Myopic => Ok(r_path.iter().map(|&r| myopic_ccp(params, r)).collect()),
    }
}

/// `E[n_t / N]` for `t = 0..=T`, propagated from the initial share.
pub fn expected_occupancy(ccps: &[Ccp], initial_share: f64) -> Vec<f64> {
    let mut s = Vec::with_capacity(ccps.len() + 1);
    s.push(initial_share);
    for c in ccps {
        let prev = *s.last().expect("nonempty");
        s.push(prev * c.prob(1, 1) + (1.0 - prev) * c.prob(0, 1));
    }
    s
}

/// Incumbent counts and transition counts of one simulated market.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPanel {
    pub n_firms: u64,
    /// `n_t` for `t = 0..=T`.
    pub counts: Vec<u64>,
    /// `transitions[t − 1][j][k]`: firms moving from `j` in `t − 1` to `k`
    /// in `t`.
    pub transitions: Vec<[[u64; 2]; 2]>,
}

impl MarketPanel {
    pub fn periods(&self) -> usize {
        self.transitions.len()
    }

    /// `n_t / N` for `t = 0..=T`.
    pub fn shares(&self) -> Vec<f64> {
        let n = self.n_firms as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Observed log choice probabilities of period `t`, clamped to
    /// `[1/(2N), 1 − 1/(2N)]`; `None` when either origin state is empty.
    pub fn log_ccp_hat(&self, t: usize) -> Option<[[f64; 2]; 2]> {
        let tr = self.transitions.get(t.checked_sub(1)?)?;
        let lo = 0.5 / self.n_firms as f64;
        let row = |j: usize| {
            let total = tr[j][0] + tr[j][1];
            if total == 0 {
                return None;
            }
            let p1 = (tr[j][1] as f64 / total as f64).clamp(lo, 1.0 - lo);
            Some([(1.0 - p1).ln(), p1.ln()])
        };
        Some([row(0)?, row(1)?])
    }

    /// Rows `t, n_t, R_t, n00, n01, n10, n11` as CSV.
    pub fn write_csv<W: Write>(&self, r_path: &[f64], mut w: W) -> Result<()> {
        writeln!(w, "t,n_t,r_t,stay_out,enter,exit,stay_in")?;
        for (s, tr) in self.transitions.iter().enumerate() {
            writeln!(
                w,
                "{},{},{:.16e},{},{},{},{}",
                s + 1,
                self.counts[s + 1],
                r_path[s],
                tr[0][0],
                tr[0][1],
                tr[1][0],
                tr[1][1]
            )?;
        }
        Ok(())
    }
}

/// Each firm moves according to its period's choice probabilities; counts
/// are drawn as binomials, which has the same law as firm-by-firm draws.
pub fn simulate_market(ccps: &[Ccp], n_firms: u64, initial: u64, rng: &mut SeededRng) -> Result<MarketPanel> {
    if initial > n_firms {
        return Err(SreError::InvalidArgument(
            "initial incumbents exceed the number of firms".into(),
        ));
    }
    let draw = |n: u64, p: f64, rng: &mut SeededRng| -> Result<u64> {
        Ok(Binomial::new(n, p)
            .map_err(|e| SreError::Simulation(e.to_string()))?
            .sample(rng))
    };
    let mut counts = Vec::with_capacity(ccps.len() + 1);
    let mut transitions = Vec::with_capacity(ccps.len());
    counts.push(initial);
    for c in ccps {
        let inc = *counts.last().expect("nonempty");
        let out = n_firms - inc;
        let enter = draw(out, c.prob(0, 1), rng)?;
        let stay = draw(inc, c.prob(1, 1), rng)?;
        transitions.push([[out - enter, enter], [inc - stay, stay]]);
        counts.push(enter + stay);
    }
    Ok(MarketPanel {
        n_firms,
        counts,
        transitions,
    })
}

/// A market that starts with half the firms as incumbents.
pub fn simulate_regime(
    regime: Regime,
    params: &DdcParams,
    r_path: &[f64],
    rng: &mut SeededRng,
) -> Result<MarketPanel> {
    params.validate()?;
    let ccps = regime_ccps(regime, params, r_path)?;
    simulate_market(&ccps, params.n_firms, params.n_firms / 2, rng)
}

/// Euler-equation residuals for `t = 1..T−1`, for the moves `(0,1)` and
/// `(1,0)`:
/// `ln p_t(k|j)/p_t(j|j) + β ln p_{t+1}(k|k)/p_{t+1}(k|j) − [π_t^{jk} − π_t^{jj} + β(π_{t+1}^{kk} − π_{t+1}^{jk})]`.
pub fn euler_residuals(params: &DdcParams, r_path: &[f64], ccps: &[Ccp]) -> Vec<[f64; 2]> {
    let b = params.beta;
    (0..ccps.len().saturating_sub(1))
        .map(|s| {
            let (now, next) = (&ccps[s].log_p, &ccps[s + 1].log_p);
            let (r, r1) = (r_path[s], r_path[s + 1]);
            let res = |j: usize, k: usize| {
                let lhs = now[j][k] - now[j][j] + b * (next[k][k] - next[j][k]);
                let rhs = params.payoff(r, j, k) - params.payoff(r, j, j)
                    + b * (params.payoff(r1, k, k) - params.payoff(r1, j, k));
                lhs - rhs
            };
            [res(0, 1), res(1, 0)]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DdcEstimate {
    pub mu: f64,
    pub alpha: f64,
    pub entry_cost: f64,
}

/// Least-squares solution of the stacked Euler equations
/// `LHS_t^{01} = μ + αR_t − (1−β)c` and `LHS_t^{10} = −μ − αR_t` over the
/// periods `t` with `usable(t)` and log CCPs available at `t` and `t + 1`.
pub fn estimate_from_log_ccps(
    log_ccps: &[Option<[[f64; 2]; 2]>],
    r_path: &[f64],
    beta: f64,
    usable: impl Fn(usize) -> bool,
) -> Result<DdcEstimate> {
    if !(0.0..1.0).contains(&beta) {
        return Err(SreError::InvalidArgument("discount factor must lie in [0, 1)".into()));
    }
    let mut rows: Vec<([f64; 3], f64)> = Vec::new();
    let mut periods = 0;
    for s in 0..log_ccps.len().saturating_sub(1) {
        let t = s + 1;
        let (Some(now), Some(next)) = (log_ccps[s], log_ccps[s + 1]) else {
            continue;
        };
        if !usable(t) {
            continue;
        }
        periods += 1;
        let r = r_path[s];
        let enter = now[0][1] - now[0][0] + beta * (next[1][1] - next[0][1]);
        let exit = now[1][0] - now[1][1] + beta * (next[0][0] - next[1][0]);
        rows.push(([1.0, r, -(1.0 - beta)], enter));
        rows.push(([-1.0, -r, 0.0], exit));
    }
    if periods < 3 {
        return Err(SreError::InsufficientTransitions(periods));
    }
    let x = DMatrix::from_fn(rows.len(), 3, |i, j| rows[i].0[j]);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let theta = lstsq(&x, &y)?;
    Ok(DdcEstimate {
        mu: theta[0],
        alpha: theta[1],
        entry_cost: theta[2],
    })
}

/// CCP Euler-equation estimator on the panel's first `periods` periods.
pub fn estimate_ccp_euler(
    panel: &MarketPanel,
    r_path: &[f64],
    beta: f64,
    periods: usize,
) -> Result<DdcEstimate> {
    let periods = periods.min(panel.periods());
    let logs: Vec<_> = (1..=periods).map(|t| panel.log_ccp_hat(t)).collect();
    estimate_from_log_ccps(&logs, r_path, beta, |_| true)
}

/// Rows `[R_t, s_{t−1}, …, s_{t−q}] → s_t` with time index `t`, for the
/// periods in `periods` (each at least `q`).
pub fn lag_rows(
    shares: &[f64],
    r_path: &[f64],
    q: usize,
    periods: impl IntoIterator<Item = usize>,
) -> Result<Dataset> {
    let ts: Vec<usize> = periods.into_iter().collect();
    if ts.iter().any(|&t| t < q.max(1) || t >= shares.len()) {
        return Err(SreError::InvalidArgument(
            "period outside the range with complete lags".into(),
        ));
    }
    let x = DMatrix::from_fn(ts.len(), q + 1, |i, j| {
        if j == 0 {
            r_path[ts[i] - 1]
        } else {
            shares[ts[i] - j]
        }
    });
    let y = DVector::from_iterator(ts.len(), ts.iter().map(|&t| shares[t]));
    Dataset::with_parts(x, y, None, Some(ts.iter().map(|&t| t as i64).collect()))
}

/// The rational-expectations model at given parameters, with perfect
/// foresight of the whole profit path.
#[derive(Debug, Clone)]
pub struct DdcBenchmark {
    pub params: DdcParams,
    pub r_path: Vec<f64>,
    pub ccps: Vec<Ccp>,
    pub initial_share: f64,
}

impl DdcBenchmark {
    pub fn new(params: DdcParams, r_path: Vec<f64>, initial_share: f64) -> Result<Self> {
        if ![params.mu, params.alpha, params.entry_cost].iter().all(|v| v.is_finite()) {
            return Err(SreError::NonFinite("fitted entry-exit parameters"));
        }
        let ccps = solve_perfect_foresight(&params, &r_path)?.ccps;
        Ok(Self {
            params,
            r_path,
            ccps,
            initial_share,
        })
    }

    fn ccp_at(&self, x: &[f64], period: Option<i64>) -> Ccp {
        match period {
            Some(t) if t >= 1 && (t as usize) <= self.ccps.len() => self.ccps[t as usize - 1],
            _ => solve_stationary(&self.params, x[0])
                .map(|s| s.ccp)
                .unwrap_or_else(|_| Ccp::uniform()),
        }
    }

    /// Repeated market simulations under the model, keeping rows whose
    /// inputs lie in `domain` (whose dimension fixes the lag count), until
    /// `size` rows are collected. The outcome is either the realized share or
    /// the implied mean.
    fn panel_rows(
        &self,
        domain: &DomainSpec,
        size: usize,
        rng: &mut SeededRng,
        implied: bool,
    ) -> Result<Dataset> {
        let q = domain.dim().checked_sub(1).ok_or_else(|| {
            SreError::InvalidArgument("domain must include the profit level".into())
        })?;
        let n = self.params.n_firms;
        let initial = (self.initial_share * n as f64).round() as u64;
        let mut xs: Vec<Vec<f64>> = Vec::with_capacity(size);
        let mut ys = Vec::with_capacity(size);
        let mut ts = Vec::with_capacity(size);
        while xs.len() < size {
            let panel = simulate_market(&self.ccps, n, initial.min(n), rng)?;
            let shares = panel.shares();
            let before = xs.len();
            for t in q.max(1)..shares.len() {
                if xs.len() == size {
                    break;
                }
                let mut row = vec![self.r_path[t - 1]];
                row.extend((1..=q).map(|l| shares[t - l]));
                if !domain.contains(&row) {
                    continue;
                }
                ys.push(if implied {
                    self.implied_mean(&row, Some(t as i64))
                } else {
                    shares[t]
                });
                xs.push(row);
                ts.push(t as i64);
            }
            if xs.len() == before {
                return Err(SreError::Simulation(
                    "simulated markets never enter the synthetic domain".into(),
                ));
            }
        }
        let x = DMatrix::from_fn(xs.len(), q + 1, |i, j| xs[i][j]);
        Dataset::with_parts(x, DVector::from_vec(ys), None, Some(ts))
    }
}

impl StructuralBenchmark for DdcBenchmark {
    fn id(&self) -> &str {
        "ddc-perfect-foresight"
    }

    fn params(&self) -> Vec<(String, f64)> {
        vec![
            ("mu".into(), self.params.mu),
            ("alpha".into(), self.params.alpha),
            ("entry_cost".into(), self.params.entry_cost),
            ("beta".into(), self.params.beta),
        ]
    }

    /// One step ahead from last period's share `x[1]`: `s p_t(1|1) +
    /// (1 − s) p_t(1|0)`. Without a period the stationary solution at
    /// `R = x[0]` stands in.
    fn implied_mean(&self, x: &[f64], period: Option<i64>) -> f64 {
        let c = self.ccp_at(x, period);
        let s = x[1];
        s * c.prob(1, 1) + (1.0 - s) * c.prob(0, 1)
    }

    fn simulate(&self, domain: &DomainSpec, size: usize, rng: &mut SeededRng) -> Result<Dataset> {
        self.panel_rows(domain, size, rng, false)
    }

    fn synthetic_design(&self, domain: &DomainSpec, size: usize, rng: &mut SeededRng) -> Result<Dataset> {
        self.panel_rows(domain, size, rng, true)
    }
}

/// Estimates the rational-expectations model from the Euler equations of the
/// periods present in the data. An equation for period `t` is used only when
/// both `t` and `t + 1` are present.
#[derive(Debug, Clone)]
pub struct DdcFamily {
    pub template: DdcParams,
    pub r_path: Vec<f64>,
    pub panel: MarketPanel,
    pub estimation_periods: usize,
}

impl DdcFamily {
    pub fn estimate_params(&self, data: &Dataset) -> Result<DdcParams> {
        let present: BTreeSet<usize> = data
            .time_index()
            .ok_or_else(|| SreError::InvalidArgument("entry-exit data need a time index".into()))?
            .iter()
            .map(|&t| t as usize)
            .collect();
        let logs: Vec<_> = (1..=self.estimation_periods.min(self.panel.periods()))
            .map(|t| self.panel.log_ccp_hat(t))
            .collect();
        let fit = estimate_from_log_ccps(&logs, &self.r_path, self.template.beta, |t| {
            present.contains(&t) && present.contains(&(t + 1))
        })?;
        Ok(DdcParams {
            mu: fit.mu,
            alpha: fit.alpha,
            entry_cost: fit.entry_cost,
            ..self.template.clone()
        })
    }
}

impl StructuralFamily for DdcFamily {
    fn estimate(&self, data: &Dataset) -> Result<Box<dyn StructuralBenchmark>> {
        let params = self.estimate_params(data)?;
        let initial = self.panel.counts[0] as f64 / self.panel.n_firms as f64;
        Ok(Box::new(DdcBenchmark::new(params, self.r_path.clone(), initial)?))
    }
}

/// Estimator settings for the entry-exit experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntryExitEstimation {
    /// Largest exogenous polynomial order searched for the statistical ARX.
    pub max_p: usize,
    /// Largest lag order searched for the statistical ARX.
    pub max_q: usize,
    /// ARX orders of the regularized model.
    pub sre_p: u32,
    pub sre_q: usize,
    /// Rolling-window length in rows; a fifth of the sample when unset.
    pub rolling_window: Option<usize>,
    /// Rows after each window on which its one-step-ahead predictions are
    /// scored. Blocks much longer than one row keep CV from rewarding fits
    /// that only track the local level.
    pub horizon: usize,
    pub lambda_grid: Option<Vec<f64>>,
    pub weights: WeightRule,
    /// Rows of simulated benchmark data behind the structural projection.
    pub synthetic_size: usize,
    /// First period evaluated in-domain.
    pub eval_start: usize,
    /// Replaces the rolling plan built from `rolling_window` and `horizon`
    /// when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvPlan>,
}

impl Default for EntryExitEstimation {
    fn default() -> Self {
        Self {
            max_p: 3,
            max_q: 4,
            sre_p: 2,
            sre_q: 4,
            rolling_window: Some(60),
            horizon: 25,
            lambda_grid: None,
            weights: WeightRule::Degree,
            synthetic_size: 5000,
            eval_start: 11,
            cv: None,
        }
    }
}

pub struct EntryExitExperiment {
    scenario_id: u32,
    regime: Regime,
    params: DdcParams,
    law: ProfitLaw,
    estimation: EntryExitEstimation,
}

/// Everything one trial produces besides the predictions.
#[derive(Debug, Clone)]
pub struct EntryExitTrialData {
    pub r_path: Vec<f64>,
    pub truth: Vec<f64>,
    pub panel: MarketPanel,
}

impl EntryExitExperiment {
    pub fn new(
        scenario_id: u32,
        params: DdcParams,
        law: ProfitLaw,
        estimation: EntryExitEstimation,
    ) -> Result<Self> {
        let regime = Regime::from_scenario(scenario_id)?;
        params.validate()?;
        law.validate()?;
        let e = &estimation;
        if e.max_p == 0 || e.max_q == 0 || e.sre_p == 0 || e.sre_q == 0 {
            return Err(SreError::Config("ARX orders must be positive".into()));
        }
        let first_row = e.max_q.max(e.sre_q) + 1;
        if e.eval_start < first_row || e.eval_start > params.t_train {
            return Err(SreError::Config(format!(
                "eval_start must lie in [{first_row}, t_train]"
            )));
        }
        if e.horizon == 0 {
            return Err(SreError::Config("rolling horizon must be positive".into()));
        }
        Ok(Self {
            scenario_id,
            regime,
            params,
            law,
            estimation,
        })
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// Profit path, true expected occupancy and the simulated market.
    pub fn draw(&self, rng: &mut SeededRng) -> Result<EntryExitTrialData> {
        let r_path = self.law.draw(self.params.t_total, rng);
        let ccps = regime_ccps(self.regime, &self.params, &r_path)?;
        let initial = self.params.n_firms / 2;
        let truth = expected_occupancy(&ccps, initial as f64 / self.params.n_firms as f64);
        let panel = simulate_market(&ccps, self.params.n_firms, initial, rng)?;
        Ok(EntryExitTrialData {
            r_path,
            truth,
            panel,
        })
    }

    fn settings(&self, r_path: &[f64]) -> Result<SreSettings> {
        let e = &self.estimation;
        let (lo, hi) = r_path
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
        let mut bounds = vec![(lo, hi)];
        bounds.extend(std::iter::repeat_n((0.0, 1.0), e.sre_q));
        Ok(SreSettings {
            g_spec: GSpec::arx(e.sre_p, e.sre_q),
            weights: e.weights,
            lambda_grid: e.lambda_grid.clone(),
            cv: e
                .cv
                .clone()
                .unwrap_or_else(|| CvPlan::rolling(e.rolling_window, e.horizon)),
            stage: SecondStage::LeastSquares,
            synthetic_domain: DomainSpec::new(bounds)?,
            synthetic_size: Some(e.synthetic_size),
        })
    }
}

impl Experiment for EntryExitExperiment {
    fn id(&self) -> &'static str {
        "entry-exit"
    }

    fn scenario(&self) -> u32 {
        self.scenario_id
    }

    fn notes(&self) -> Vec<String> {
        let p = &self.params;
        let l = &self.law;
        vec![
            format!("true expectations: {}", self.regime.as_str()),
            format!(
                "default parameters (implementation choice): mu={}, alpha={}, entry_cost={}, beta={}, N={}, T={}, T_train={}",
                p.mu, p.alpha, p.entry_cost, p.beta, p.n_firms, p.t_total, p.t_train
            ),
            format!(
                "profit path: R_t = {} + {} t + u_t, u_t = {} u_(t-1) + N(0, {}^2)",
                l.intercept, l.trend, l.ar, l.innovation_sd
            ),
            "structural model: perfect foresight, CCP Euler equations with beta known".into(),
            format!(
                "SRE: ARX({}, {}) on shares, sample split, rolling-window CV",
                self.estimation.sre_p, self.estimation.sre_q
            ),
            "predictions are one step ahead from realized lags; truth is the expected occupancy path".into(),
        ]
    }

    fn run_trial(
        &self,
        trial: u64,
        estimators: &[EstimatorKind],
        rng: &mut SeededRng,
    ) -> Result<Vec<CurvePoint>> {
        let e = &self.estimation;
        let d = self.draw(rng).map_err(|e| e.in_stage("simulation"))?;
        let shares = d.panel.shares();
        let t_train = self.params.t_train;
        let t_total = self.params.t_total;
        let points = |range: std::ops::RangeInclusive<usize>| -> Vec<(f64, f64)> {
            range.map(|t| (t as f64, d.truth[t])).collect()
        };
        let in_points = points(e.eval_start..=t_train);
        let out_points = points(t_train + 1..=t_total);
        let domains = [(EvalDomain::In, &in_points), (EvalDomain::Out, &out_points)];
        let lags = |t: usize, q: usize| -> Vec<f64> { (1..=q).map(|l| shares[t - l]).collect() };

        let family = DdcFamily {
            template: self.params.clone(),
            r_path: d.r_path.clone(),
            panel: d.panel.clone(),
            estimation_periods: t_train,
        };
        let train = lag_rows(&shares, &d.r_path, e.sre_q, e.sre_q..=t_train)?;

        let mut out = Vec::new();
        for &kind in estimators {
            match kind {
                EstimatorKind::Statistical => {
                    let fit = fit_arx_aic(&shares[1..=t_train], &d.r_path[..t_train], e.max_p, e.max_q)
                        .map_err(|e| e.in_stage("statistical fit"))?;
                    for (dom, pts) in domains {
                        push_curve(&mut out, trial, kind, dom, pts, |x| {
                            let t = x as usize;
                            fit.predict(d.r_path[t - 1], &lags(t, fit.q))
                        });
                    }
                }
                EstimatorKind::Structural => {
                    let bench = family
                        .estimate(&train)
                        .map_err(|e| e.in_stage("structural estimation"))?;
                    for (dom, pts) in domains {
                        push_curve(&mut out, trial, kind, dom, pts, |x| {
                            let t = x as usize;
                            bench.implied_mean(&[d.r_path[t - 1], shares[t - 1]], Some(t as i64))
                        });
                    }
                }
                EstimatorKind::Sre | EstimatorKind::SreCrossfit => {
                    let settings = self.settings(&d.r_path)?;
                    let mut sre_rng = rng.fork();
                    let fit = if kind == EstimatorKind::Sre {
                        sre_sample_split(&train, &family, &settings, &mut sre_rng)
                    } else {
                        sre_cross_fit(&train, &family, &settings, &mut sre_rng)
                    }
                    .map_err(|e| e.in_stage(kind.as_str()))?;
                    for (dom, pts) in domains {
                        push_curve(&mut out, trial, kind, dom, pts, |x| {
                            let t = x as usize;
                            let mut row = vec![d.r_path[t - 1]];
                            row.extend(lags(t, e.sre_q));
                            fit.predict(&row)
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

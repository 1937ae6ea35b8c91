//! The three Monte Carlo applications and the types they share with the
//! harness.

pub mod auction;
pub mod demand;
pub mod entry_exit;

use serde::{Deserialize, Serialize};

use crate::data::SeededRng;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Statistical,
    Structural,
    Sre,
    SreCrossfit,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Statistical,
        EstimatorKind::Structural,
        EstimatorKind::Sre,
        EstimatorKind::SreCrossfit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Statistical => "statistical",
            EstimatorKind::Structural => "structural",
            EstimatorKind::Sre => "sre",
            EstimatorKind::SreCrossfit => "sre-crossfit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// The default estimator set.
    pub fn defaults() -> Vec<EstimatorKind> {
        vec![
            EstimatorKind::Statistical,
            EstimatorKind::Structural,
            EstimatorKind::Sre,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalDomain {
    In,
    Out,
}

impl EvalDomain {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalDomain::In => "in",
            EvalDomain::Out => "out",
        }
    }
}

/// One prediction of one estimator at one evaluation point in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub trial: u64,
    pub estimator: EstimatorKind,
    pub domain: EvalDomain,
    pub x: f64,
    pub truth: f64,
    pub prediction: f64,
}

/// A Monte Carlo experiment: each trial draws fresh data from its own
/// stream and returns every estimator's predictions at fixed evaluation
/// points.
pub trait Experiment: Sync {
    fn id(&self) -> &'static str;

    fn scenario(&self) -> u32;

    /// Modelling choices worth recording next to the results.
    fn notes(&self) -> Vec<String> {
        Vec::new()
    }

    fn run_trial(
        &self,
        trial: u64,
        estimators: &[EstimatorKind],
        rng: &mut SeededRng,
    ) -> Result<Vec<CurvePoint>>;
}

/// Appends one estimator's predictions over a set of evaluation points.
pub(crate) fn push_curve(
    out: &mut Vec<CurvePoint>,
    trial: u64,
    estimator: EstimatorKind,
    domain: EvalDomain,
    points: &[(f64, f64)],
    predict: impl Fn(f64) -> f64,
) {
    for &(x, truth) in points {
        out.push(CurvePoint {
            trial,
            estimator,
            domain,
            x,
            truth,
            prediction: predict(x),
        });
    }
}

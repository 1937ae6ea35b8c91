//! Adaptive Gauss–Kronrod quadrature and a Nelder–Mead simplex minimizer.

use crate::error::{Result, SreError};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the 7-point rule embedded at the odd Kronrod nodes.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err) = gk15(f, a, b);
    if err <= tol || depth >= 48 || (b - a).abs() < 1e-14 * (1.0 + a.abs()) {
        return value;
    }
    let mid = 0.5 * (a + b);
    adapt(f, a, mid, 0.5 * tol, depth + 1) + adapt(f, mid, b, 0.5 * tol, depth + 1)
}

/// `∫_a^b f(x) dx` by recursive bisection with a 7/15-point Gauss–Kronrod
/// pair, to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    adapt(&f, a, b, tol, 0)
}

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    /// Stop when every vertex lies within `xtol_rel * max(1, |x_best|_inf)`
    /// of the best vertex.
    pub xtol_rel: f64,
    /// Evaluation budget across all restarts.
    pub max_evals: usize,
    /// Maximum number of restarts from the current best point.
    pub max_restarts: usize,
    /// Edge lengths of the starting simplex; defaults to 5% of each
    /// coordinate (or 2.5e-4 for zero coordinates).
    pub initial_step: Option<Vec<f64>>,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            xtol_rel: 1e-9,
            max_evals: 100_000,
            max_restarts: 25,
            initial_step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

struct Counted<'a, F> {
    f: &'a F,
    evals: usize,
}

impl<F: Fn(&[f64]) -> f64> Counted<'_, F> {
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(SreError::NonFiniteObjective(x.to_vec()))
        }
    }
}

fn default_steps(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| if v.abs() > 1e-8 { 0.05 * v.abs() } else { 2.5e-4 })
        .collect()
}

/// One simplex run with the dimension-adaptive coefficients of Gao and Han.
fn simplex_run<F: Fn(&[f64]) -> f64>(
    obj: &mut Counted<'_, F>,
    x0: &[f64],
    steps: &[f64],
    opts: &NelderMeadOptions,
) -> Result<(Vec<f64>, f64, bool)> {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = if n > 1 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }
    let mut values = Vec::with_capacity(n + 1);
    for v in &simplex {
        values.push(obj.eval(v)?);
    }

    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let best = &simplex[0];
        let scale = best.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let diameter = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(best)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .fold(0.0f64, f64::max);
        if diameter <= opts.xtol_rel * scale {
            return Ok((simplex[0].clone(), values[0], true));
        }
        if obj.evals >= opts.max_evals {
            return Ok((simplex[0].clone(), values[0], false));
        }

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / nf;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = obj.eval(&xr)?;
        if fr < values[0] {
            let xe = along(alpha * gamma);
            let fe = obj.eval(&xe)?;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc, accept) = if fr < values[n] {
            let xc = along(alpha * rho);
            let fc = obj.eval(&xc)?;
            let ok = fc <= fr;
            (xc, fc, ok)
        } else {
            let xc = along(-rho);
            let fc = obj.eval(&xc)?;
            let ok = fc < values[n];
            (xc, fc, ok)
        };
        if accept {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            let shrunk: Vec<f64> = best
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + sigma * (x - b))
                .collect();
            values[i] = obj.eval(&shrunk)?;
            simplex[i] = shrunk;
        }
    }
}

/// Derivative-free local minimization of `f` from `x0`.
///
/// The simplex is rebuilt around the incumbent after each convergence until
/// a restart no longer improves the objective, the restart limit is hit or
/// the evaluation budget runs out. A non-finite objective value aborts with
/// [`SreError::NonFiniteObjective`] carrying the offending point.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> Result<Minimum> {
    if x0.is_empty() {
        let value = f(x0);
        if !value.is_finite() {
            return Err(SreError::NonFiniteObjective(Vec::new()));
        }
        return Ok(Minimum {
            x: Vec::new(),
            value,
            evals: 1,
            converged: true,
        });
    }
    if let Some(s) = &opts.initial_step {
        if s.len() != x0.len() {
            return Err(SreError::DimensionMismatch {
                what: "initial simplex steps",
                expected: x0.len(),
                got: s.len(),
            });
        }
    }
    let mut obj = Counted { f: &f, evals: 0 };
    let steps = opts
        .initial_step
        .clone()
        .unwrap_or_else(|| default_steps(x0));
    let (mut x, mut value, mut converged) = simplex_run(&mut obj, x0, &steps, opts)?;
    for _ in 0..opts.max_restarts {
        if obj.evals >= opts.max_evals {
            break;
        }
        let steps = opts
            .initial_step
            .clone()
            .unwrap_or_else(|| default_steps(&x));
        let (x_new, v_new, c_new) = simplex_run(&mut obj, &x, &steps, opts)?;
        let improved = v_new < value;
        let moved = x_new
            .iter()
            .zip(&x)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if improved {
            x = x_new;
            value = v_new;
            converged = c_new;
        }
        if !improved || moved <= opts.xtol_rel * scale {
            break;
        }
    }
    Ok(Minimum {
        x,
        value,
        evals: obj.evals,
        converged,
    })
}

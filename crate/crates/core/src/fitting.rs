//! Correlation lengths from measure-vs-distance series.
//!
//! Concurrence is fitted to `c0 exp(-r/ξ)` and discord to
//! `a + b exp(-r/ξ)` by damped Gauss-Newton (Levenberg-Marquardt) least
//! squares. Discord-length scaling with system size is a log-log linear
//! regression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quench::QuenchSeries;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    PureExponential,
    OffsetExponential,
}

impl DecayModel {
    fn n_params(self) -> usize {
        match self {
            DecayModel::PureExponential => 2,
            DecayModel::OffsetExponential => 3,
        }
    }

    /// Minimum number of points. The pure exponential is accepted with
    /// exactly two points (an exactly determined fit): ordered concurrence
    /// typically has only two nonzero distances.
    pub fn min_points(self) -> usize {
        match self {
            DecayModel::PureExponential => 2,
            DecayModel::OffsetExponential => 4,
        }
    }

    /// Value and gradient with respect to the parameters.
    fn eval(self, p: &[f64], r: f64) -> (f64, [f64; 3]) {
        match self {
            DecayModel::PureExponential => {
                let (c0, xi) = (p[0], p[1]);
                let e = (-r / xi).exp();
                (c0 * e, [e, c0 * e * r / (xi * xi), 0.0])
            }
            DecayModel::OffsetExponential => {
                let (a, b, xi) = (p[0], p[1], p[2]);
                let e = (-r / xi).exp();
                (a + b * e, [1.0, e, b * e * r / (xi * xi)])
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weights {
    #[default]
    Uniform,
    InverseVariance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Explicit `(r_min, r_max)` window; `None` selects the default window.
    pub fit_range: Option<(f64, f64)>,
    pub weights: Weights,
    /// Values below this are treated as zero (and dropped for the pure
    /// exponential, whose logarithm they would break).
    pub zero_threshold: f64,
    /// Series whose spread is below this are reported as flat.
    pub flat_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            fit_range: None,
            weights: Weights::Uniform,
            zero_threshold: 1e-6,
            flat_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    /// Amplitude of the pure exponential.
    pub c0: Option<f64>,
    /// Long-distance offset of the offset exponential.
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// Correlation length in lattice units; `None` when undefined.
    pub xi: Option<f64>,
    pub residual_norm: f64,
    pub fit_range: (f64, f64),
    pub n_points: usize,
    pub converged: bool,
    /// The series is constant in `r`, so the length diverges.
    pub flat: bool,
    pub gradient_norm: f64,
}

impl DecayFit {
    fn undefined(model: DecayModel, fit_range: (f64, f64), n_points: usize, flat: bool) -> Self {
        DecayFit {
            model,
            c0: None,
            a: None,
            b: None,
            xi: None,
            residual_norm: 0.0,
            fit_range,
            n_points,
            converged: false,
            flat,
            gradient_norm: 0.0,
        }
    }

    /// Model value at distance `r`, if the fit produced parameters.
    pub fn predict(&self, r: f64) -> Option<f64> {
        let xi = self.xi?;
        let e = (-r / xi).exp();
        match self.model {
            DecayModel::PureExponential => Some(self.c0? * e),
            DecayModel::OffsetExponential => Some(self.a? + self.b? * e),
        }
    }
}

/// Default window `[1, r_max]`, with `r_max` the largest distance whose value
/// exceeds `max(zero_threshold, 3 σ)`.
pub fn default_fit_range(series: &QuenchSeries, zero_threshold: f64) -> Option<(f64, f64)> {
    let r_max = series
        .distances
        .iter()
        .zip(&series.mean)
        .zip(&series.std_error)
        .filter(|((_, &m), &s)| m > zero_threshold.max(3.0 * s))
        .map(|((&r, _), _)| r)
        .fold(f64::NEG_INFINITY, f64::max);
    r_max.is_finite().then_some((1.0, r_max))
}

pub fn fit_decay(series: &QuenchSeries, model: DecayModel, options: &FitOptions) -> Result<DecayFit> {
    let n_total = series.distances.len();
    if series.mean.len() != n_total || series.std_error.len() != n_total {
        return Err(Error::Fit("series columns have different lengths".into()));
    }
    if series.mean.iter().all(|m| m.abs() < options.zero_threshold) {
        return Ok(DecayFit::undefined(model, (f64::NAN, f64::NAN), 0, false));
    }
    let range = match options.fit_range {
        Some(r) => r,
        None => default_fit_range(series, options.zero_threshold)
            .ok_or_else(|| Error::Fit("no point exceeds the noise floor".into()))?,
    };
    let mut points: Vec<(f64, f64, f64)> = Vec::new();
    for k in 0..n_total {
        let (r, y, s) = (series.distances[k], series.mean[k], series.std_error[k]);
        if r < range.0 || r > range.1 {
            continue;
        }
        if model == DecayModel::PureExponential && y < options.zero_threshold {
            continue;
        }
        let w = match options.weights {
            Weights::Uniform => 1.0,
            Weights::InverseVariance => {
                if s <= 0.0 {
                    return Err(Error::Fit(format!(
                        "inverse-variance weights need positive standard errors (r = {r})"
                    )));
                }
                1.0 / (s * s)
            }
        };
        points.push((r, y, w));
    }
    if points.len() < model.min_points() {
        return Err(Error::Fit(format!(
            "{} points in range, {:?} needs at least {}",
            points.len(),
            model,
            model.min_points()
        )));
    }
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    if hi - lo < options.flat_tol {
        return Ok(DecayFit::undefined(model, range, points.len(), true));
    }

    let start = initial_guess(model, &points)?;
    let (params, residual_norm, gradient_norm) = levenberg_marquardt(model, &points, start);
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Fit("parameters diverged".into()));
    }
    let xi = params[model.n_params() - 1];
    let converged = gradient_norm < GRADIENT_TOL && xi > 0.0;
    let (c0, a, b) = match model {
        DecayModel::PureExponential => (Some(params[0]), None, None),
        DecayModel::OffsetExponential => (None, Some(params[0]), Some(params[1])),
    };
    Ok(DecayFit {
        model,
        c0,
        a,
        b,
        xi: (xi > 0.0).then_some(xi),
        residual_norm,
        fit_range: range,
        n_points: points.len(),
        converged,
        flat: false,
        gradient_norm,
    })
}

const GRADIENT_TOL: f64 = 1e-10;

/// Least-squares line `y = slope x + intercept`.
fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

fn initial_guess(model: DecayModel, points: &[(f64, f64, f64)]) -> Result<Vec<f64>> {
    let tail = (points.len() / 4).max(1);
    let a = match model {
        DecayModel::PureExponential => 0.0,
        DecayModel::OffsetExponential => {
            points[points.len() - tail..].iter().map(|p| p.1).sum::<f64>() / tail as f64
        }
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(r, y, _) in points {
        if y - a > 0.0 {
            xs.push(r);
            ys.push((y - a).ln());
        }
    }
    let xi = if xs.len() >= 2 {
        let (slope, _, _) = linear_regression(&xs, &ys);
        if slope < 0.0 { -1.0 / slope } else { 1.0 }
    } else {
        1.0
    };
    let first = points[0];
    Ok(match model {
        DecayModel::PureExponential => vec![first.1 * (first.0 / xi).exp(), xi],
        DecayModel::OffsetExponential => vec![a, (first.1 - a) * (first.0 / xi).exp(), xi],
    })
}

/// Weighted cost, gradient and Gauss-Newton normal matrix.
fn normal_equations(model: DecayModel, points: &[(f64, f64, f64)], p: &[f64]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let k = model.n_params();
    let mut cost = 0.0;
    let mut grad = vec![0.0; k];
    let mut jtj = vec![vec![0.0; k]; k];
    for &(r, y, w) in points {
        let (f, d) = model.eval(p, r);
        let res = f - y;
        cost += w * res * res;
        for a in 0..k {
            grad[a] += w * res * d[a];
            for b in 0..k {
                jtj[a][b] += w * d[a] * d[b];
            }
        }
    }
    (cost, grad, jtj)
}

fn solve_small(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for c in col..n {
                m[row][c] -= f * m[col][c];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| m[row][c] * x[c]).sum();
        x[row] = (rhs[row] - s) / m[row][row];
    }
    Some(x)
}

/// Returns parameters, residual norm and the infinity norm of the cost
/// gradient `Jᵀ W r`.
fn levenberg_marquardt(model: DecayModel, points: &[(f64, f64, f64)], start: Vec<f64>) -> (Vec<f64>, f64, f64) {
    let k = model.n_params();
    let mut p = start;
    let mut lambda = 1e-3;
    let (mut cost, mut grad, mut jtj) = normal_equations(model, points, &p);
    for _ in 0..10_000 {
        let gnorm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gnorm < GRADIENT_TOL * 1e-3 {
            break;
        }
        let mut damped = jtj.clone();
        for a in 0..k {
            damped[a][a] += lambda * jtj[a][a].max(1e-12);
        }
        let Some(step) = solve_small(damped, grad.iter().map(|g| -g).collect()) else {
            lambda *= 10.0;
            continue;
        };
        let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
        if trial[k - 1] > 0.0 {
            let (c, g, j) = normal_equations(model, points, &trial);
            if c <= cost {
                let rel = step
                    .iter()
                    .zip(&p)
                    .map(|(s, v)| s.abs() / v.abs().max(1e-12))
                    .fold(0.0f64, f64::max);
                p = trial;
                cost = c;
                grad = g;
                jtj = j;
                lambda = (lambda * 0.3).max(1e-15);
                if rel < 1e-15 {
                    break;
                }
                continue;
            }
        }
        lambda *= 10.0;
        if lambda > 1e20 {
            break;
        }
    }
    let gnorm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    (p, cost.sqrt(), gnorm)
}

/// What was regressed against system size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "reference")]
pub enum ScalingTransform {
    /// The length itself.
    Identity,
    /// `|y - reference|`, e.g. the distance from the largest-size length.
    DeviationFrom(f64),
}

impl ScalingTransform {
    pub fn apply(&self, y: f64) -> f64 {
        match *self {
            ScalingTransform::Identity => y,
            ScalingTransform::DeviationFrom(reference) => (y - reference).abs(),
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            ScalingTransform::Identity => "log(y) against log(N)".into(),
            ScalingTransform::DeviationFrom(r) => format!("log|y - {r}| against log(N)"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub quantity_transform: String,
}

/// Power law `y = prefactor · x^exponent` by log-log regression.
pub fn fit_scaling(xs: &[f64], ys: &[f64], transform: ScalingTransform) -> Result<ScalingFit> {
    if xs.len() != ys.len() {
        return Err(Error::Fit("x and y have different lengths".into()));
    }
    if xs.len() < 3 {
        return Err(Error::Fit(format!("scaling fit needs at least 3 points, got {}", xs.len())));
    }
    let ty: Vec<f64> = ys.iter().map(|&y| transform.apply(y)).collect();
    if let Some((x, y)) = xs.iter().zip(&ty).find(|(x, y)| !(**x > 0.0 && **y > 0.0)) {
        return Err(Error::Fit(format!("non-positive input ({x}, {y}) in scaling fit")));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ty.iter().map(|y| y.ln()).collect();
    let (slope, intercept, r2) = linear_regression(&lx, &ly);
    Ok(ScalingFit {
        exponent: slope,
        prefactor: intercept.exp(),
        r_squared: r2,
        quantity_transform: transform.describe(),
    })
}

//! Taylor charts of the two-dimensional invariant manifolds attached to the
//! complex eigenvalue pair of an axis equilibrium.
//!
//! A chart `P(theta1, theta2)` solves `f(P(theta)) = DP(theta) Lambda theta`
//! with `Lambda = diag(lambda, conj(lambda))`. Real points are obtained on
//! the conjugate diagonal `theta2 = conj(theta1)`.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::flow_map;
use crate::model::{eval_field, eval_jacobian, Equilibrium, ModelParams, StabilityTag};
use crate::series2::{corner_stripped_coeff, ScalingRecord, TaylorPoly2};

type C64 = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Stable,
    Unstable,
}

impl Stability {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "stable" => Ok(Stability::Stable),
            "unstable" => Ok(Stability::Unstable),
            other => Err(Error::Parse(format!("unknown stability '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub base: Equilibrium,
    pub params: ModelParams,
    /// First member of the pair; the second is its conjugate.
    pub lambda: C64,
    pub stability: Stability,
    pub order: usize,
    pub components: [TaylorPoly2; 3],
    pub scaling: ScalingRecord,
    /// Largest homological residual over all solved orders.
    pub max_residual: f64,
}

const ILL_CONDITIONED: f64 = 1e12;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn rhs(p: &[TaylorPoly2; 3], params: &ModelParams, m: usize, n: usize) -> Result<[C64; 3]> {
    let [p1, p2, p3] = p;
    let s1 = -corner_stripped_coeff(&[p3, p1], m, n)?;
    let s2 = -corner_stripped_coeff(&[p3, p2], m, n)?;
    let s3 = corner_stripped_coeff(&[p3, p3, p3], m, n)? / 3.0
        + corner_stripped_coeff(&[p1, p1], m, n)?
        + corner_stripped_coeff(&[p2, p2], m, n)?
        + params.epsilon * corner_stripped_coeff(&[p1, p1, p3], m, n)?
        + params.epsilon * corner_stripped_coeff(&[p2, p2, p3], m, n)?
        - params.zeta * corner_stripped_coeff(&[p3, p1, p1, p1], m, n)?;
    Ok([s1, s2, s3])
}

fn characteristic(df: &Matrix3<f64>, mu: C64) -> Matrix3<C64> {
    Matrix3::from_fn(|r, k| {
        let v = c(df[(r, k)]);
        if r == k {
            v - mu
        } else {
            v
        }
    })
}

/// Solves the homological equations up to total degree `order` with the
/// eigenvector scaled by `scale`.
pub fn solve_homological(
    eq: &Equilibrium,
    params: &ModelParams,
    stability: Stability,
    order: usize,
    scale: f64,
) -> Result<Chart> {
    let lambda = eq.lambda_pair;
    let ok = match stability {
        Stability::Unstable => lambda.re > 0.0,
        Stability::Stable => lambda.re < 0.0,
    };
    if !ok || lambda.im == 0.0 {
        return Err(Error::NoComplexPair);
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::DegenerateScale { s1: scale, s2: scale });
    }
    let lambda2 = lambda.conj();
    let xi = eq.pair_eigenvector();
    let df = eval_jacobian(&eq.point, params);
    let mut p = [
        TaylorPoly2::zeros(order),
        TaylorPoly2::zeros(order),
        TaylorPoly2::zeros(order),
    ];
    for i in 0..3 {
        p[i].set(0, 0, c(eq.point[i]));
        if order >= 1 {
            p[i].set(1, 0, xi[i] * scale);
            p[i].set(0, 1, xi[i].conj() * scale);
        }
    }
    let mut max_residual: f64 = 0.0;
    for d in 2..=order {
        // Solve m >= n; the mirrored coefficient is the conjugate.
        for m in (d.div_ceil(2))..=d {
            let n = d - m;
            let mu = lambda * m as f64 + lambda2 * n as f64;
            if (mu - c(eq.lambda_real)).norm() < 1e-12 {
                return Err(Error::Resonance { m, n });
            }
            let a = characteristic(&df, mu);
            let inv = a.try_inverse().ok_or(Error::IllConditioned { m, n })?;
            let inv_norm = inv.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if inv_norm > ILL_CONDITIONED {
                return Err(Error::IllConditioned { m, n });
            }
            let s = rhs(&p, params, m, n)?;
            let sv = Vector3::new(s[0], s[1], s[2]);
            let mut x = inv * sv;
            if m == n {
                for v in x.iter_mut() {
                    v.im = 0.0;
                }
            }
            let r = (a * x - sv).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            max_residual = max_residual.max(r);
            for i in 0..3 {
                p[i].set(m, n, x[i]);
                if m != n {
                    p[i].set(n, m, x[i].conj());
                }
            }
        }
    }
    Ok(Chart {
        base: *eq,
        params: *params,
        lambda,
        stability,
        order,
        components: p,
        scaling: ScalingRecord::unfitted(scale),
        max_residual,
    })
}

impl Chart {
    /// `P(theta1, theta2)` componentwise.
    pub fn eval_complex(&self, t1: C64, t2: C64) -> [C64; 3] {
        [
            self.components[0].evaluate(t1, t2),
            self.components[1].evaluate(t1, t2),
            self.components[2].evaluate(t1, t2),
        ]
    }

    /// Largest `|p_mn|` over components at total degree `d`.
    pub fn max_abs_at_degree(&self, d: usize) -> f64 {
        self.components
            .iter()
            .map(|p| p.max_abs_at_degree(d))
            .fold(0.0, f64::max)
    }

    /// Homological residual of every solved coefficient, recomputed.
    pub fn homological_residual(&self) -> Result<f64> {
        let df = eval_jacobian(&self.base.point, &self.params);
        let mut worst: f64 = 0.0;
        for d in 2..=self.order {
            for m in 0..=d {
                let n = d - m;
                let mu = self.lambda * m as f64 + self.lambda.conj() * n as f64;
                let a = characteristic(&df, mu);
                let s = rhs(&self.components, &self.params, m, n)?;
                let x = Vector3::new(
                    self.components[0].get(m, n),
                    self.components[1].get(m, n),
                    self.components[2].get(m, n),
                );
                let sv = Vector3::new(s[0], s[1], s[2]);
                worst = worst.max((a * x - sv).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
            }
        }
        Ok(worst)
    }

    /// Largest deviation from `p_nm = conj(p_mn)`, relative to the largest
    /// coefficient of the same degree.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for p in &self.components {
            for d in 0..=self.order {
                let scale = p.max_abs_at_degree(d).max(f64::MIN_POSITIVE);
                for m in 0..=d {
                    let n = d - m;
                    worst = worst.max((p.get(n, m) - p.get(m, n).conj()).norm() / scale);
                }
            }
        }
        worst
    }

    /// Invariance defect `f(P(theta)) - DP(theta) Lambda theta` at a point of
    /// the conjugate diagonal.
    pub fn invariance_defect(&self, s1: f64, s2: f64) -> [f64; 3] {
        let t1 = C64::new(s1, s2);
        let t2 = t1.conj();
        let pt = self.eval_complex(t1, t2);
        let x = [pt[0].re, pt[1].re, pt[2].re];
        let f = eval_field(&x, &self.params);
        let mut out = [0.0; 3];
        for (i, comp) in self.components.iter().enumerate() {
            let (d1, d2) = comp.evaluate_gradient(t1, t2);
            let rhs = d1 * self.lambda * t1 + d2 * self.lambda.conj() * t2;
            out[i] = f[i] - rhs.re;
        }
        out
    }

    /// Chart file: `key=value` header lines, then one coefficient table per
    /// component, each introduced by a `component=i` line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let b = &self.base;
        let _ = writeln!(
            out,
            "base={:e},{:e},{:e}",
            b.point[0], b.point[1], b.point[2]
        );
        let _ = writeln!(out, "lambda={:e},{:e}", self.lambda.re, self.lambda.im);
        let _ = writeln!(out, "stability={}", self.stability.as_str());
        let _ = writeln!(out, "order={}", self.order);
        let _ = writeln!(out, "scale={:e}", self.scaling.s1);
        let _ = writeln!(out, "alpha={:e}", self.params.alpha);
        for (i, p) in self.components.iter().enumerate() {
            let _ = writeln!(out, "component={}", i + 1);
            out.push_str(&p.to_csv());
        }
        out
    }

    /// Parses [`Chart::to_text`] output. Model constants other than `alpha`
    /// come from `params`.
    pub fn from_text(text: &str, params: &ModelParams) -> Result<Self> {
        let mut header = std::collections::HashMap::new();
        let mut tables: Vec<String> = Vec::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("component=") {
                let _ = rest;
                tables.push(String::new());
            } else if let Some(t) = tables.last_mut() {
                t.push_str(line);
                t.push('\n');
            } else if let Some((k, v)) = line.split_once('=') {
                header.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let get = |k: &str| {
            header
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Parse(format!("chart header missing '{k}'")))
        };
        let floats = |s: String| -> Result<Vec<f64>> {
            s.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                .collect()
        };
        let alpha = floats(get("alpha")?)?[0];
        let params = ModelParams { alpha, ..*params };
        let base_pt = floats(get("base")?)?;
        let lam = floats(get("lambda")?)?;
        let stability = Stability::parse(&get("stability")?)?;
        let order: usize = get("order")?
            .parse()
            .map_err(|e: std::num::ParseIntError| Error::Parse(e.to_string()))?;
        let scale = floats(get("scale")?)?[0];
        if tables.len() != 3 || base_pt.len() != 3 || lam.len() != 2 {
            return Err(Error::Parse("malformed chart file".into()));
        }
        let comps: Vec<TaylorPoly2> = tables
            .iter()
            .map(|t| TaylorPoly2::from_csv(t))
            .collect::<Result<_>>()?;
        let base = Equilibrium::from_root(base_pt[2], &params);
        let [p1, p2, p3]: [TaylorPoly2; 3] = comps.try_into().expect("three tables");
        let mut chart = Chart {
            base,
            params,
            lambda: C64::new(lam[0], lam[1]),
            stability,
            order,
            components: [p1, p2, p3],
            scaling: ScalingRecord::unfitted(scale),
            max_residual: 0.0,
        };
        chart.max_residual = chart.homological_residual()?;
        Ok(chart)
    }

    pub fn stability_tag(&self) -> StabilityTag {
        self.base.stability_tag
    }
}

const FIT_UNDERFLOW: f64 = 1e-15;

/// Least-squares fit of `log max_{m+n=k} |p_mn| = log C - k log R` over
/// `k = 2..=N`.
pub fn decay_fit(chart: &Chart) -> Result<ScalingRecord> {
    let order = chart.order;
    if order < 8 {
        return Err(Error::FitOrder(order));
    }
    let samples: Vec<(f64, f64)> = (2..=order)
        .map(|k| (k as f64, chart.max_abs_at_degree(k)))
        .filter(|&(_, v)| v > 0.0)
        .map(|(k, v)| (k, v.ln()))
        .collect();
    let high = (order / 2..=order)
        .map(|k| chart.max_abs_at_degree(k))
        .fold(0.0, f64::max);
    if high < FIT_UNDERFLOW || samples.len() < 2 {
        return Err(Error::UnderflowFit);
    }
    let n = samples.len() as f64;
    let mx = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxy: f64 = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum();
    let sxx: f64 = samples.iter().map(|s| (s.0 - mx) * (s.0 - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r = (-slope).exp();
    Ok(ScalingRecord {
        s1: chart.scaling.s1,
        s2: chart.scaling.s2,
        c: intercept.exp(),
        r1: r,
        r2: r,
    })
}

/// Scale meeting `C / ((R/s)^N (R/s)^N) = eps0`, i.e. `s = R (eps0/C)^(1/2N)`.
///
/// `R` is measured relative to the chart's current scale, so the result is
/// multiplied by it.
pub fn choose_scale(chart: &Chart, eps0: f64) -> Result<f64> {
    let fit = decay_fit(chart)?;
    Ok(chart.scaling.s1 * scale_from_fit(fit.c, fit.r1, eps0, chart.order))
}

/// `R (eps0 / C)^(1 / (2N))`.
pub fn scale_from_fit(c: f64, r: f64, eps0: f64, order: usize) -> f64 {
    r * (eps0 / c).powf(1.0 / (2.0 * order as f64))
}

/// Real point of the chart: `P(s1 + i s2, s1 - i s2)`.
pub fn eval_real(chart: &Chart, s1: f64, s2: f64) -> Result<[f64; 3]> {
    let t1 = C64::new(s1, s2);
    let v = chart.eval_complex(t1, t1.conj());
    let im = v.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if im >= 1e-10 {
        return Err(Error::SymmetryViolation(im));
    }
    Ok([v[0].re, v[1].re, v[2].re])
}

/// Default number of samples minus one for the conjugacy indicator.
pub const ERROR_CONJ_K: usize = 32;

/// `max_j |phi(P(theta_j), T) - P(e^{Lambda T} theta_j)|` over the unit
/// circle samples `theta_j = (e^{i a_j}, e^{-i a_j})`, `a_j = 2 pi j/(K+1)`.
pub fn error_conj(chart: &Chart, t: f64, k: usize, tol_int: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let lam = chart.lambda;
    let grow1 = (lam * t).exp();
    let grow2 = (lam.conj() * t).exp();
    let errs: Vec<Result<f64>> = (0..=k)
        .into_par_iter()
        .map(|j| {
            let a = 2.0 * std::f64::consts::PI * j as f64 / (k + 1) as f64;
            let th1 = C64::from_polar(1.0, a);
            let th2 = th1.conj();
            let start = chart.eval_complex(th1, th2);
            let x0 = [start[0].re, start[1].re, start[2].re];
            let flowed = flow_map(x0, t, &chart.params, tol_int)?;
            let target = chart.eval_complex(grow1 * th1, grow2 * th2);
            let d: f64 = (0..3).map(|i| (flowed[i] - target[i].re).powi(2)).sum();
            Ok(d.sqrt())
        })
        .collect();
    let mut worst: f64 = 0.0;
    for e in errs {
        worst = worst.max(e?);
    }
    Ok(worst)
}

/// Solves at unit scale, fits the decay, then re-solves from scratch at the
/// scale chosen for `eps0`.
pub fn auto_scaled_chart(
    eq: &Equilibrium,
    params: &ModelParams,
    stability: Stability,
    order: usize,
    eps0: f64,
) -> Result<Chart> {
    let trial = solve_homological(eq, params, stability, order, 1.0)?;
    let s = choose_scale(&trial, eps0)?;
    let mut chart = solve_homological(eq, params, stability, order, s)?;
    if let Ok(fit) = decay_fit(&chart) {
        chart.scaling = fit;
    }
    Ok(chart)
}

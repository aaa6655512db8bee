//! Independent oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use langford::atlas::SeededMesh;
use langford::flow::{flow_map, integrate_variational};
use langford::model::{Equilibrium, ModelParams};
use langford::parm::{eval_real, solve_homological, Chart, Stability};
use langford::series2::TaylorPoly2;
use num_complex::Complex64;
use rand::Rng;

/// Every way to write `(m, n)` as an ordered sum of `k` index pairs.
fn compositions(k: usize, m: usize, n: usize, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
    if k == 1 {
        cur.push((m, n));
        out.push(cur.clone());
        cur.pop();
        return;
    }
    for i in 0..=m {
        for j in 0..=n {
            cur.push((i, j));
            compositions(k - 1, m - i, n - j, cur, out);
            cur.pop();
        }
    }
}

/// Multi-index sum for coefficient `(m, n)` of the product of `factors`.
/// With `stripped`, tuples that put `(m, n)` on one factor and `(0, 0)` on
/// all others are skipped. Returns the value and the sum of term moduli.
pub fn brute_coeff(factors: &[&TaylorPoly2], m: usize, n: usize, stripped: bool) -> (Complex64, f64) {
    let mut tuples = Vec::new();
    compositions(factors.len(), m, n, &mut Vec::new(), &mut tuples);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut comp = Complex64::new(0.0, 0.0);
    let mut abs = 0.0;
    for t in tuples {
        let corner = t.iter().filter(|&&ix| ix == (m, n)).count() == 1
            && t.iter().filter(|&&ix| ix == (0, 0)).count() == t.len() - 1;
        let corner = corner || (m + n == 0);
        if stripped && corner {
            continue;
        }
        let term = t
            .iter()
            .zip(factors)
            .fold(Complex64::new(1.0, 0.0), |acc, (&(i, j), f)| acc * f.get(i, j));
        abs += term.norm();
        // Kahan summation keeps the oracle well below the checked tolerance.
        let y = term - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
    }
    (sum, abs)
}

pub fn random_series<R: Rng>(rng: &mut R, order: usize) -> TaylorPoly2 {
    TaylorPoly2::from_fn(order, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

/// Relative error measured against the sum of term moduli.
pub fn rel_err(got: Complex64, want: Complex64, scale: f64) -> f64 {
    (got - want).norm() / scale.max(f64::MIN_POSITIVE)
}

pub fn max_abs_diff(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}

pub fn round_trip_error(x0: [f64; 3], t: f64, params: &ModelParams, tol: f64) -> f64 {
    let there = flow_map(x0, t, params, tol).expect("forward flow");
    let back = flow_map(there, -t, params, tol).expect("backward flow");
    max_abs_diff(&back, &x0)
}

/// `|det M - exp(int trace)| / |det M|`.
pub fn liouville_defect(x0: [f64; 3], t: f64, params: &ModelParams, tol: f64) -> f64 {
    let v = integrate_variational(x0, t, params, tol).expect("variational flow");
    let det = v.m.determinant();
    (det - v.trace_integral.exp()).abs() / det.abs()
}

/// `|(phi(x + h v) - phi(x - h v)) / 2h - M v|`.
pub fn variational_fd_defect(x0: [f64; 3], v: [f64; 3], t: f64, params: &ModelParams, tol: f64, h: f64) -> f64 {
    let st = integrate_variational(x0, t, params, tol).expect("variational flow");
    let plus = flow_map([x0[0] + h * v[0], x0[1] + h * v[1], x0[2] + h * v[2]], t, params, tol).unwrap();
    let minus = flow_map([x0[0] - h * v[0], x0[1] - h * v[1], x0[2] - h * v[2]], t, params, tol).unwrap();
    let mv = st.m * nalgebra::Vector3::from(v);
    (0..3)
        .map(|i| ((plus[i] - minus[i]) / (2.0 * h) - mv[i]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Largest `|p(n,m) - conj p(m,n)|` relative to the largest coefficient of
/// the same degree, computed from the raw coefficients.
pub fn conjugate_symmetry_defect(chart: &Chart) -> f64 {
    let mut worst: f64 = 0.0;
    for p in &chart.components {
        for d in 0..=chart.order {
            let scale = (0..=d).map(|m| p.get(m, d - m).norm()).fold(0.0, f64::max);
            if scale == 0.0 {
                continue;
            }
            for m in 0..=d {
                let n = d - m;
                worst = worst.max((p.get(n, m) - p.get(m, n).conj()).norm() / scale);
            }
        }
    }
    worst
}

/// Entrywise relative deviation between a chart solved at scale `s` and the
/// unit-scale chart with coefficients multiplied by `s^(m+n)`.
pub fn rescaling_defect(eq: &Equilibrium, params: &ModelParams, stability: Stability, order: usize, s: f64) -> f64 {
    let unit = solve_homological(eq, params, stability, order, 1.0).unwrap();
    let direct = solve_homological(eq, params, stability, order, s).unwrap();
    let mut worst: f64 = 0.0;
    for (a, b) in unit.components.iter().zip(&direct.components) {
        let r = a.rescale(s, s).unwrap();
        for (m, n) in TaylorPoly2::indices(order) {
            let want = r.get(m, n);
            let got = b.get(m, n);
            let scale = want.norm().max(1e-300);
            if want.norm() < 1e-290 && got.norm() < 1e-290 {
                continue;
            }
            worst = worst.max((got - want).norm() / scale);
        }
    }
    worst
}

/// Re-integrates sampled vertices straight from the chart lift for the
/// generation's elapsed time; returns the largest position mismatch.
pub fn provenance_defect<R: Rng>(meshes: &[SeededMesh], samples: usize, params: &ModelParams, tol: f64, rng: &mut R) -> f64 {
    let total: usize = meshes.iter().map(|m| m.vertices.len()).sum();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let mut k = rng.gen_range(0..total);
        let mesh = meshes
            .iter()
            .find(|m| {
                if k < m.vertices.len() {
                    true
                } else {
                    k -= m.vertices.len();
                    false
                }
            })
            .unwrap();
        let v = &mesh.vertices[k];
        let start = eval_real(&mesh.chart, v.seed[0], v.seed[1]).unwrap();
        let x = flow_map(start, v.generation as f64 * mesh.tau, params, tol).unwrap();
        worst = worst.max(max_abs_diff(&x, &v.position));
    }
    worst
}

//! Return-map analysis on the half plane `x = 0, y > 0`.
//!
//! Points of the section are stored as `(y, z)`. The forward return map `R`
//! follows the flow to the next crossing; the backward map follows the
//! reversed flow and is used for stable manifolds of saddle cycles.

use std::fmt::Write as _;

use nalgebra::{Matrix2, Matrix3, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{
    section_crossing, section_crossing_variational, TimeDirection, CROSSING_BUDGET,
};
use crate::model::{eval_field, ModelParams};

/// Default integrator tolerance for return-map work.
pub const SECTION_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPoint {
    pub y: f64,
    pub z: f64,
}

impl SectionPoint {
    pub fn new(y: f64, z: f64) -> Self {
        Self { y, z }
    }

    pub fn ambient(&self) -> [f64; 3] {
        [0.0, self.y, self.z]
    }

    pub fn vec(&self) -> Vector2<f64> {
        Vector2::new(self.y, self.z)
    }

    pub fn from_vec(v: Vector2<f64>) -> Self {
        Self { y: v[0], z: v[1] }
    }

    pub fn dist(&self, other: &SectionPoint) -> f64 {
        (self.y - other.y).hypot(self.z - other.z)
    }
}

/// One application of the return map in the given time direction.
pub fn return_once(
    q: SectionPoint,
    params: &ModelParams,
    tol: f64,
    dir: TimeDirection,
) -> Result<SectionPoint> {
    let c = section_crossing(q.ambient(), params, tol, dir, CROSSING_BUDGET)?;
    Ok(SectionPoint::new(c.state[1], c.state[2]))
}

/// Successive returns `R(q), ..., R^k(q)`.
pub fn return_orbit(
    q: SectionPoint,
    params: &ModelParams,
    k: usize,
    tol: f64,
    dir: TimeDirection,
) -> Result<Vec<SectionPoint>> {
    let mut out = Vec::with_capacity(k);
    let mut cur = q;
    for _ in 0..k {
        cur = return_once(cur, params, tol, dir)?;
        out.push(cur);
    }
    Ok(out)
}

/// `R^k(q)` for the forward return map.
pub fn return_map(q: SectionPoint, params: &ModelParams, k: usize, tol: f64) -> Result<SectionPoint> {
    let orbit = return_orbit(q, params, k.max(1), tol, TimeDirection::Forward)?;
    Ok(*orbit.last().expect("k >= 1"))
}

/// One return together with its 2x2 derivative.
///
/// With `M` the fundamental matrix up to the crossing and `g` the (signed)
/// field at the crossing, the derivative is the `(y, z)` block of
/// `(I - g e_x^T / g_x) M`.
pub fn return_once_derivative(
    q: SectionPoint,
    params: &ModelParams,
    tol: f64,
    dir: TimeDirection,
) -> Result<(SectionPoint, Matrix2<f64>)> {
    let (st, _) = section_crossing_variational(q.ambient(), params, tol, dir, CROSSING_BUDGET)?;
    let f = eval_field(&st.x, params);
    let g = [dir.sign() * f[0], dir.sign() * f[1], dir.sign() * f[2]];
    if g[0].abs() < 1e-8 {
        return Err(Error::Grazing(g[0].abs()));
    }
    let mut proj = Matrix3::<f64>::identity();
    for r in 0..3 {
        proj[(r, 0)] -= g[r] / g[0];
    }
    let pm = proj * st.m;
    let d = Matrix2::new(pm[(1, 1)], pm[(1, 2)], pm[(2, 1)], pm[(2, 2)]);
    Ok((SectionPoint::new(st.x[1], st.x[2]), d))
}

/// `R^k(q)`, the intermediate returns and the per-step derivatives.
pub fn return_chain(
    q: SectionPoint,
    params: &ModelParams,
    k: usize,
    tol: f64,
    dir: TimeDirection,
) -> Result<(Vec<SectionPoint>, Vec<Matrix2<f64>>)> {
    let mut pts = Vec::with_capacity(k);
    let mut ds = Vec::with_capacity(k);
    let mut cur = q;
    for _ in 0..k {
        let (next, d) = return_once_derivative(cur, params, tol, dir)?;
        pts.push(next);
        ds.push(d);
        cur = next;
    }
    Ok((pts, ds))
}

/// `R^k(q)` and `DR^k(q)` by the chain rule across the `k` crossings.
pub fn return_derivative(
    q: SectionPoint,
    params: &ModelParams,
    k: usize,
    tol: f64,
) -> Result<(SectionPoint, Matrix2<f64>)> {
    let (pts, ds) = return_chain(q, params, k.max(1), tol, TimeDirection::Forward)?;
    let prod = ds.iter().fold(Matrix2::identity(), |acc, d| d * acc);
    Ok((*pts.last().expect("k >= 1"), prod))
}

/// Eigenvalues of a real 2x2 matrix.
pub fn eigenvalues2(m: &Matrix2<f64>) -> [Complex64; 2] {
    let tr = m.trace();
    let det = m.determinant();
    let disc = 0.25 * tr * tr - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        // Larger modulus first.
        let (a, b) = (0.5 * tr + s, 0.5 * tr - s);
        if a.abs() >= b.abs() {
            [Complex64::new(a, 0.0), Complex64::new(b, 0.0)]
        } else {
            [Complex64::new(b, 0.0), Complex64::new(a, 0.0)]
        }
    } else {
        let s = (-disc).sqrt();
        [Complex64::new(0.5 * tr, s), Complex64::new(0.5 * tr, -s)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CycleTag {
    AttractingNode,
    AttractingFocus,
    Saddle,
    RepellingNode,
    RepellingFocus,
}

impl CycleTag {
    pub fn classify(mult: &[Complex64; 2]) -> Self {
        let complex = mult[0].im != 0.0;
        let (a, b) = (mult[0].norm(), mult[1].norm());
        match (complex, a < 1.0, b < 1.0) {
            (true, true, _) => CycleTag::AttractingFocus,
            (true, false, _) => CycleTag::RepellingFocus,
            (false, true, true) => CycleTag::AttractingNode,
            (false, false, false) => CycleTag::RepellingNode,
            _ => CycleTag::Saddle,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CycleTag::AttractingNode => "attracting_node",
            CycleTag::AttractingFocus => "attracting_focus",
            CycleTag::Saddle => "saddle",
            CycleTag::RepellingNode => "repelling_node",
            CycleTag::RepellingFocus => "repelling_focus",
        }
    }

    pub fn is_attracting(&self) -> bool {
        matches!(self, CycleTag::AttractingNode | CycleTag::AttractingFocus)
    }
}

/// A periodic orbit of the return map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub k: usize,
    pub points: Vec<SectionPoint>,
    /// Eigenvalues of `DR^k(points[0])`, larger modulus first.
    pub multipliers: [Complex64; 2],
    pub tag: CycleTag,
    /// `DR^k(points[0])`, row-major.
    pub monodromy: [f64; 4],
    /// Set when the Newton solution turned out to have a smaller period.
    pub period_collapse: Option<usize>,
    pub residual: f64,
}

impl Cycle {
    pub fn monodromy_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(
            self.monodromy[0],
            self.monodromy[1],
            self.monodromy[2],
            self.monodromy[3],
        )
    }

    /// Smallest distance from `q` to a point of the cycle.
    pub fn distance_to(&self, q: &SectionPoint) -> f64 {
        self.points
            .iter()
            .map(|p| p.dist(q))
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV with `# metadata` header lines and `y,z` rows in orbit order.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# k={}", self.k);
        let _ = writeln!(out, "# tag={}", self.tag.as_str());
        for (i, m) in self.multipliers.iter().enumerate() {
            let _ = writeln!(out, "# multiplier{}={:e},{:e}", i, m.re, m.im);
        }
        let _ = writeln!(out, "# residual={:e}", self.residual);
        out.push_str("y,z\n");
        for p in &self.points {
            let _ = writeln!(out, "{:e},{:e}", p.y, p.z);
        }
        out
    }

    /// Builds the cycle data (orbit, monodromy, tag) from a solved point.
    pub fn assemble(q: SectionPoint, params: &ModelParams, k: usize, tol: f64) -> Result<Self> {
        let (pts, ds) = return_chain(q, params, k, tol, TimeDirection::Forward)?;
        let prod = ds.iter().fold(Matrix2::identity(), |acc, d| d * acc);
        let mut points = Vec::with_capacity(k);
        points.push(q);
        points.extend_from_slice(&pts[..k - 1]);
        let residual = pts[k - 1].dist(&q);
        let period_collapse = (1..k)
            .filter(|d| k.is_multiple_of(*d))
            .find(|&d| points[d].dist(&q) < 1e-7);
        let multipliers = eigenvalues2(&prod);
        Ok(Cycle {
            k,
            points,
            multipliers,
            tag: CycleTag::classify(&multipliers),
            monodromy: [prod[(0, 0)], prod[(0, 1)], prod[(1, 0)], prod[(1, 1)]],
            period_collapse,
            residual,
        })
    }
}

const NEWTON_MAX_ITERS: usize = 50;
const NEWTON_RESIDUAL: f64 = 1e-10;

/// Solves `R^k(q) = q` by damped Newton from `guess`.
pub fn newton_cycle(guess: SectionPoint, params: &ModelParams, k: usize, tol: f64) -> Result<Cycle> {
    let k = k.max(1);
    let mut q = guess;
    let mut last_res = f64::INFINITY;
    for _ in 0..NEWTON_MAX_ITERS {
        let (img, d) = return_derivative(q, params, k, tol)?;
        let f = img.vec() - q.vec();
        let res = f.norm();
        if res < NEWTON_RESIDUAL {
            return Cycle::assemble(q, params, k, tol);
        }
        let j = d - Matrix2::identity();
        let Some(step) = j.lu().solve(&(-f)) else {
            break;
        };
        // Damping: accept the first step fraction that lowers the residual.
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let trial = SectionPoint::from_vec(q.vec() + lambda * step);
            if trial.y > 0.0 {
                if let Ok(img_t) = return_map(trial, params, k, tol) {
                    let r = (img_t.vec() - trial.vec()).norm();
                    if r < res || r < NEWTON_RESIDUAL {
                        q = trial;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            last_res = res;
            break;
        }
        last_res = res;
    }
    Err(Error::NoConvergence {
        what: "cycle Newton",
        iterations: NEWTON_MAX_ITERS,
        residual: last_res,
    })
}

/// Result of the augmented Neimark-Sacker solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeimarkSacker {
    pub point: SectionPoint,
    pub alpha: f64,
    pub residual: f64,
    pub trace: f64,
    pub iterations: usize,
}

fn ns_residual(q: SectionPoint, alpha: f64, base: &ModelParams, tol: f64) -> Result<([f64; 3], Matrix2<f64>)> {
    let p = ModelParams { alpha, ..*base };
    let (img, d) = return_derivative(q, &p, 1, tol)?;
    Ok(([img.y - q.y, img.z - q.z, d.determinant() - 1.0], d))
}

/// Locates the Neimark-Sacker point of the fixed-point branch by Newton on
/// `(R(q) - q, det DR(q) - 1) = 0` in the unknowns `(y, z, alpha)`.
pub fn locate_neimark_sacker(
    seed: SectionPoint,
    alpha0: f64,
    params: &ModelParams,
    tol: f64,
) -> Result<NeimarkSacker> {
    let base = ModelParams {
        alpha: alpha0,
        ..*params
    };
    let fp = newton_cycle(seed, &base, 1, tol)?;
    let mut q = fp.points[0];
    let mut alpha = alpha0;
    const H: f64 = 1e-7;
    let mut res = f64::INFINITY;
    for it in 0..NEWTON_MAX_ITERS {
        let (f, d) = ns_residual(q, alpha, params, tol)?;
        res = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        if res < NEWTON_RESIDUAL {
            let trace = d.trace();
            if trace.abs() >= 2.0 {
                return Err(Error::NotNeimarkSacker { trace });
            }
            return Ok(NeimarkSacker {
                point: q,
                alpha,
                residual: res,
                trace,
                iterations: it,
            });
        }
        let mut jac = nalgebra::Matrix3::<f64>::zeros();
        jac[(0, 0)] = d[(0, 0)] - 1.0;
        jac[(0, 1)] = d[(0, 1)];
        jac[(1, 0)] = d[(1, 0)];
        jac[(1, 1)] = d[(1, 1)] - 1.0;
        // Determinant derivatives and the alpha column by central differences.
        for (col, dq) in [(0usize, (H, 0.0)), (1, (0.0, H))] {
            let qp = SectionPoint::new(q.y + dq.0, q.z + dq.1);
            let qm = SectionPoint::new(q.y - dq.0, q.z - dq.1);
            let (fp, _) = ns_residual(qp, alpha, params, tol)?;
            let (fm, _) = ns_residual(qm, alpha, params, tol)?;
            jac[(2, col)] = (fp[2] - fm[2]) / (2.0 * H);
        }
        let (fp, _) = ns_residual(q, alpha + H, params, tol)?;
        let (fm, _) = ns_residual(q, alpha - H, params, tol)?;
        for r in 0..3 {
            jac[(r, 2)] = (fp[r] - fm[r]) / (2.0 * H);
        }
        let rhs = nalgebra::Vector3::new(-f[0], -f[1], -f[2]);
        let Some(step) = jac.lu().solve(&rhs) else {
            break;
        };
        q = SectionPoint::new(q.y + step[0], q.z + step[1]);
        alpha += step[2];
    }
    Err(Error::NoConvergence {
        what: "Neimark-Sacker Newton",
        iterations: NEWTON_MAX_ITERS,
        residual: res,
    })
}

/// Spectral radius of `DR` at the fixed point found from `seed`.
pub fn fixed_point_spectral_radius(
    seed: SectionPoint,
    params: &ModelParams,
    tol: f64,
) -> Result<(Cycle, f64)> {
    let c = newton_cycle(seed, params, 1, tol)?;
    let r = c.multipliers[0].norm().max(c.multipliers[1].norm());
    Ok((c, r))
}

/// An ordered curve in the section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<SectionPoint>,
    pub source: String,
    pub arclength: f64,
    /// Free-form `key=value` notes exported as header comments.
    pub notes: Vec<String>,
}

impl Polyline {
    pub fn new(points: Vec<SectionPoint>, source: impl Into<String>) -> Self {
        let arclength = points.windows(2).map(|w| w[0].dist(&w[1])).sum();
        Self {
            points,
            source: source.into(),
            arclength,
            notes: Vec::new(),
        }
    }

    pub fn max_spacing(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[0].dist(&w[1]))
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# source={}", self.source);
        let _ = writeln!(out, "# arclength={:e}", self.arclength);
        let _ = writeln!(out, "# points={}", self.points.len());
        for n in &self.notes {
            let _ = writeln!(out, "# {n}");
        }
        out.push_str("y,z\n");
        for p in &self.points {
            let _ = writeln!(out, "{:e},{:e}", p.y, p.z);
        }
        out
    }
}

/// Outcome of iterating the return map towards an attractor.
#[derive(Debug, Clone, PartialEq)]
pub enum CircleSample {
    /// A closed curve sorted by angle about the interior fixed point.
    Circle {
        curve: Polyline,
        center: SectionPoint,
        star_shaped: bool,
    },
    /// The iterates collapsed onto a finite set of points.
    Resonant {
        cluster_count: usize,
        clusters: Vec<SectionPoint>,
    },
}

/// Default fixed-point seed near the periodic orbit close to `z = beta`.
pub const FIXED_POINT_SEED: SectionPoint = SectionPoint { y: 0.9, z: 0.71 };

/// Groups points closer than `radius` (single linkage against the cluster
/// representative).
pub fn cluster_points(points: &[SectionPoint], radius: f64) -> Vec<SectionPoint> {
    let mut reps: Vec<SectionPoint> = Vec::new();
    for p in points {
        if !reps.iter().any(|r| r.dist(p) < radius) {
            reps.push(*p);
        }
    }
    reps
}

const CLUSTER_RADIUS: f64 = 1e-5;
const MAX_RESONANT_CLUSTERS: usize = 32;

/// Iterates `R` from a point offset from the (repelling) fixed point and
/// keeps `n_keep` iterates after `n_transient`.
pub fn sample_invariant_circle(
    alpha: f64,
    params: &ModelParams,
    n_transient: usize,
    n_keep: usize,
    tol: f64,
) -> Result<CircleSample> {
    let p = ModelParams { alpha, ..*params };
    let fp = newton_cycle(FIXED_POINT_SEED, &p, 1, tol)?;
    let center = fp.points[0];
    let mut q = SectionPoint::new(center.y + 0.01, center.z);
    for _ in 0..n_transient {
        q = return_once(q, &p, tol, TimeDirection::Forward)?;
    }
    let mut kept = Vec::with_capacity(n_keep);
    for _ in 0..n_keep {
        q = return_once(q, &p, tol, TimeDirection::Forward)?;
        kept.push(q);
    }
    let clusters = cluster_points(&kept, CLUSTER_RADIUS);
    if clusters.len() <= MAX_RESONANT_CLUSTERS && clusters.len() < n_keep {
        return Ok(CircleSample::Resonant {
            cluster_count: clusters.len(),
            clusters,
        });
    }
    let angle = |s: &SectionPoint| (s.z - center.z).atan2(s.y - center.y);
    let mut sorted = kept.clone();
    sorted.sort_by(|a, b| angle(a).partial_cmp(&angle(b)).unwrap());
    let mut closed = sorted.clone();
    closed.push(sorted[0]);
    let gaps: Vec<f64> = closed.windows(2).map(|w| w[0].dist(&w[1])).collect();
    let mut g = gaps.clone();
    g.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = g[g.len() / 2];
    let star_shaped = gaps.iter().all(|&d| d <= 20.0 * median.max(1e-12));
    let (points, note) = if star_shaped {
        (closed, "star_shaped=true")
    } else {
        (kept, "star_shaped=false")
    };
    let mut curve = Polyline::new(points, format!("invariant_circle alpha={alpha}"));
    curve.notes.push(note.to_string());
    Ok(CircleSample::Circle {
        curve,
        center,
        star_shaped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ManifoldKind {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

/// Controls for one-dimensional manifold growth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldOptions {
    /// Offset of the fundamental segment from the cycle point.
    pub h: f64,
    /// Largest allowed spacing between consecutive curve points.
    pub max_spacing: f64,
    /// Stop once the curve is this long.
    pub arclength_max: f64,
    /// Stop after this many applications of the cycle map.
    pub max_iterates: usize,
    pub max_points: usize,
    pub tol: f64,
    /// Which cycle point the branch is attached to.
    pub point_index: usize,
}

impl Default for ManifoldOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            max_spacing: 5e-3,
            arclength_max: 2.0,
            max_iterates: 400,
            max_points: 1_000_000,
            tol: SECTION_TOL,
            point_index: 0,
        }
    }
}

/// Where a grown branch ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchEnd {
    ArclengthReached,
    /// Successive pieces shrank below resolution: the branch settled onto
    /// an attractor.
    Converged,
    IterateLimit,
    /// The orbit of a seed left the section's domain.
    Escaped,
}

/// A grown branch with per-point provenance `s = iterate + segment fraction`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldBranch {
    pub curve: Polyline,
    pub provenance: Vec<f64>,
    pub end: BranchEnd,
    pub eigenvector: Vector2<f64>,
    pub multiplier: f64,
}

impl ManifoldBranch {
    pub fn terminal(&self) -> SectionPoint {
        *self.curve.points.last().expect("branch never empty")
    }
}

struct BranchMap {
    params: ModelParams,
    dir: TimeDirection,
    /// Returns per map application.
    steps: usize,
    tol: f64,
}

impl BranchMap {
    fn apply(&self, q: SectionPoint, times: usize) -> Result<SectionPoint> {
        let mut cur = q;
        for _ in 0..times * self.steps {
            cur = return_once(cur, &self.params, self.tol, self.dir)?;
        }
        Ok(cur)
    }
}

/// Grows one branch of the stable or unstable manifold of a saddle cycle.
///
/// A fundamental segment `q + h |mu|^u v`, `u` in `[0, 1)`, is iterated by
/// the branch map (`R^k`, `R^{2k}` if the multiplier is negative, or the
/// backward analogues). Every curve point is identified by `s = n + u` and
/// evaluated as `F^n(seed(u))`; refinement bisects `s` between neighbours
/// and re-integrates from the segment.
pub fn grow_cycle_manifold_1d(
    cycle: &Cycle,
    kind: ManifoldKind,
    branch: Branch,
    params: &ModelParams,
    opts: &ManifoldOptions,
) -> Result<ManifoldBranch> {
    if cycle.tag != CycleTag::Saddle {
        return Err(Error::NotSaddle);
    }
    let k = cycle.k;
    let idx = opts.point_index % k;
    let q0 = cycle.points[idx];
    // Monodromy at the chosen point.
    let (_, ds) = return_chain(q0, params, k, opts.tol, TimeDirection::Forward)?;
    let mono = ds.iter().fold(Matrix2::identity(), |acc, d| d * acc);
    let mult = eigenvalues2(&mono);
    let (mu_u, mu_s) = (mult[0].re, mult[1].re);
    let mu = match kind {
        ManifoldKind::Unstable => mu_u,
        ManifoldKind::Stable => mu_s,
    };
    let ev = real_eigenvector(&mono, mu);
    let sign = match branch {
        Branch::Plus => 1.0,
        Branch::Minus => -1.0,
    };
    let v = ev * sign;
    let steps = if mu < 0.0 { 2 * k } else { k };
    let dir = match kind {
        ManifoldKind::Unstable => TimeDirection::Forward,
        ManifoldKind::Stable => TimeDirection::Backward,
    };
    // Expansion factor of one branch-map application.
    let lambda = match kind {
        ManifoldKind::Unstable => mu.abs().powi((steps / k) as i32),
        ManifoldKind::Stable => (1.0 / mu.abs()).powi((steps / k) as i32),
    };
    let map = BranchMap {
        params: *params,
        dir,
        steps,
        tol: opts.tol,
    };
    let seed = |u: f64| SectionPoint::from_vec(q0.vec() + opts.h * lambda.powf(u) * v);
    let eval = |s: f64| -> Result<SectionPoint> {
        let n = s.floor();
        map.apply(seed(s - n), n as usize)
    };

    let mut prov: Vec<f64> = vec![0.0];
    let mut pts: Vec<SectionPoint> = vec![q0];
    let mut arclength = 0.0;
    let mut end = BranchEnd::IterateLimit;
    // Fundamental segment samples.
    let n_seg = 16;
    let mut piece_s: Vec<f64> = (0..=n_seg).map(|i| i as f64 / n_seg as f64).collect();
    let mut piece: Vec<SectionPoint> = piece_s.iter().map(|&u| seed(u)).collect();
    'outer: for n in 0..opts.max_iterates {
        let mut escaped = false;
        if n > 0 {
            // Advance the previous piece by one branch-map application,
            // keeping the prefix before the first orbit that escapes.
            let next: Vec<Result<SectionPoint>> =
                piece.par_iter().map(|&q| map.apply(q, 1)).collect();
            let mut adv = Vec::with_capacity(next.len());
            for r in next {
                match r {
                    Ok(p) => adv.push(p),
                    Err(e) if is_escape(&e) => {
                        escaped = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if adv.is_empty() {
                end = BranchEnd::Escaped;
                break;
            }
            piece_s.truncate(adv.len());
            piece = adv;
            for s in piece_s.iter_mut() {
                *s += 1.0;
            }
        }
        escaped |= refine_piece(&mut piece_s, &mut piece, opts.max_spacing, &eval, opts.max_points)?;
        // Append, skipping the first point when it duplicates the last one.
        let start = usize::from(n > 0);
        let mut piece_len = 0.0;
        for i in start..piece.len() {
            let p = piece[i];
            let d = pts.last().map_or(0.0, |l: &SectionPoint| l.dist(&p));
            if arclength + d > opts.arclength_max {
                end = BranchEnd::ArclengthReached;
                break 'outer;
            }
            arclength += d;
            piece_len += d;
            pts.push(p);
            prov.push(piece_s[i]);
            if pts.len() > opts.max_points {
                return Err(Error::ResolutionExhausted(opts.max_points));
            }
        }
        if escaped {
            end = BranchEnd::Escaped;
            break;
        }
        if n > 2 && piece_len < 1e-9 {
            end = BranchEnd::Converged;
            break;
        }
    }
    let mut curve = Polyline::new(
        pts,
        format!(
            "{}_{}_point{}",
            match kind {
                ManifoldKind::Stable => "Ws",
                ManifoldKind::Unstable => "Wu",
            },
            match branch {
                Branch::Plus => "plus",
                Branch::Minus => "minus",
            },
            idx
        ),
    );
    curve.notes.push(format!("end={end:?}"));
    curve.notes.push(format!("multiplier={mu:e}"));
    Ok(ManifoldBranch {
        curve,
        provenance: prov,
        end,
        eigenvector: v,
        multiplier: mu,
    })
}

/// Both branches at every point of the cycle.
pub fn grow_cycle_manifold_all(
    cycle: &Cycle,
    kind: ManifoldKind,
    params: &ModelParams,
    opts: &ManifoldOptions,
) -> Result<Vec<ManifoldBranch>> {
    let mut out = Vec::with_capacity(2 * cycle.k);
    for i in 0..cycle.k {
        for br in [Branch::Plus, Branch::Minus] {
            let o = ManifoldOptions {
                point_index: i,
                ..*opts
            };
            out.push(grow_cycle_manifold_1d(cycle, kind, br, params, &o)?);
        }
    }
    Ok(out)
}

/// Total number of intersections between any curve of `a` and any of `b`.
pub fn count_crossings(a: &[Polyline], b: &[Polyline]) -> usize {
    a.iter()
        .flat_map(|u| b.iter().map(move |s| detect_crossings(u, s).len()))
        .sum()
}

fn is_escape(e: &Error) -> bool {
    matches!(
        e,
        Error::NoCrossing { .. } | Error::StepUnderflow { .. } | Error::Grazing(_)
    )
}

/// Bisects parameter gaps until the image spacing is below `max_spacing`.
/// Returns `true` when the piece had to be truncated at an escaping orbit.
fn refine_piece(
    s: &mut Vec<f64>,
    p: &mut Vec<SectionPoint>,
    max_spacing: f64,
    eval: &(impl Fn(f64) -> Result<SectionPoint> + Sync),
    max_points: usize,
) -> Result<bool> {
    let mut escaped = false;
    loop {
        let gaps: Vec<usize> = (0..p.len().saturating_sub(1))
            .filter(|&i| p[i].dist(&p[i + 1]) > max_spacing && s[i + 1] - s[i] > 1e-13)
            .collect();
        if gaps.is_empty() {
            return Ok(escaped);
        }
        if p.len() + gaps.len() > max_points {
            return Err(Error::ResolutionExhausted(max_points));
        }
        let mids: Vec<f64> = gaps.iter().map(|&i| 0.5 * (s[i] + s[i + 1])).collect();
        let new_pts: Vec<Result<SectionPoint>> = mids.par_iter().map(|&m| eval(m)).collect();
        let mut ns = Vec::with_capacity(s.len() + gaps.len());
        let mut np = Vec::with_capacity(s.len() + gaps.len());
        let mut gi = 0;
        for i in 0..p.len() {
            ns.push(s[i]);
            np.push(p[i]);
            if gi < gaps.len() && gaps[gi] == i {
                match &new_pts[gi] {
                    Ok(q) => {
                        ns.push(mids[gi]);
                        np.push(*q);
                    }
                    Err(e) if is_escape(e) => {
                        escaped = true;
                        break;
                    }
                    Err(e) => return Err(e.clone()),
                }
                gi += 1;
            }
        }
        *s = ns;
        *p = np;
    }
}

fn real_eigenvector(m: &Matrix2<f64>, mu: f64) -> Vector2<f64> {
    let a = m - Matrix2::identity() * mu;
    // Null vector of a rank-one 2x2 matrix: orthogonal to its larger row.
    let r0 = Vector2::new(a[(0, 0)], a[(0, 1)]);
    let r1 = Vector2::new(a[(1, 0)], a[(1, 1)]);
    let r = if r0.norm() >= r1.norm() { r0 } else { r1 };
    let v = Vector2::new(-r[1], r[0]);
    v / v.norm()
}

/// How two segments meet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentContact {
    Crossing(SectionPoint),
    /// Collinear overlap.
    Overlap(SectionPoint),
}

/// Segment indices and contact point of an intersection between two curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveCrossing {
    pub seg_a: usize,
    pub seg_b: usize,
    pub contact: SegmentContact,
}

/// Exact sign of the orientation of the triangle `(a, b, c)`.
#[inline]
fn orient(a: &SectionPoint, b: &SectionPoint, c: &SectionPoint) -> f64 {
    let co = |p: &SectionPoint| robust::Coord { x: p.y, y: p.z };
    robust::orient2d(co(a), co(b), co(c))
}

fn segment_contact(
    a0: &SectionPoint,
    a1: &SectionPoint,
    b0: &SectionPoint,
    b1: &SectionPoint,
) -> Option<SegmentContact> {
    let o1 = orient(a0, a1, b0);
    let o2 = orient(a0, a1, b1);
    let o3 = orient(b0, b1, a0);
    let o4 = orient(b0, b1, a1);
    if o1 == 0.0 && o2 == 0.0 {
        // Collinear: report an overlap if the projections intersect.
        let d = SectionPoint::new(a1.y - a0.y, a1.z - a0.z);
        let len2 = d.y * d.y + d.z * d.z;
        if len2 == 0.0 {
            return None;
        }
        let t = |p: &SectionPoint| ((p.y - a0.y) * d.y + (p.z - a0.z) * d.z) / len2;
        let (t0, t1) = (t(b0), t(b1));
        let (lo, hi) = (t0.min(t1).max(0.0), t0.max(t1).min(1.0));
        if lo <= hi {
            let m = 0.5 * (lo + hi);
            return Some(SegmentContact::Overlap(SectionPoint::new(
                a0.y + m * d.y,
                a0.z + m * d.z,
            )));
        }
        return None;
    }
    if (o1 > 0.0) != (o2 > 0.0) && o1 != 0.0 && o2 != 0.0 && (o3 > 0.0) != (o4 > 0.0) && o3 != 0.0 && o4 != 0.0 {
        let t = o3 / (o3 - o4);
        return Some(SegmentContact::Crossing(SectionPoint::new(
            a0.y + t * (a1.y - a0.y),
            a0.z + t * (a1.z - a0.z),
        )));
    }
    None
}

/// All intersections between the segments of two polylines.
///
/// Uses a uniform grid over the bounding box to avoid the quadratic
/// all-pairs scan on long curves.
pub fn detect_crossings(a: &Polyline, b: &Polyline) -> Vec<CurveCrossing> {
    if a.points.len() < 2 || b.points.len() < 2 {
        return Vec::new();
    }
    let bbox = |pl: &Polyline| {
        pl.points.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(y0, z0, y1, z1), p| (y0.min(p.y), z0.min(p.z), y1.max(p.y), z1.max(p.z)),
        )
    };
    let (ay0, az0, ay1, az1) = bbox(a);
    let (by0, bz0, by1, bz1) = bbox(b);
    let (y0, z0, y1, z1) = (ay0.max(by0), az0.max(bz0), ay1.min(by1), az1.min(bz1));
    if y0 > y1 || z0 > z1 {
        return Vec::new();
    }
    let cells = ((a.points.len() + b.points.len()) as f64).sqrt().ceil().clamp(1.0, 1024.0) as usize;
    let cy = ((y1 - y0) / cells as f64).max(1e-300);
    let cz = ((z1 - z0) / cells as f64).max(1e-300);
    let cell_range = |p: &SectionPoint, q: &SectionPoint| {
        let f = |v: f64, lo: f64, w: f64| (((v - lo) / w).floor().max(0.0) as usize).min(cells - 1);
        let (ya, yb) = (p.y.min(q.y), p.y.max(q.y));
        let (za, zb) = (p.z.min(q.z), p.z.max(q.z));
        if yb < y0 || ya > y1 || zb < z0 || za > z1 {
            return None;
        }
        Some((f(ya, y0, cy), f(yb, y0, cy), f(za, z0, cz), f(zb, z0, cz)))
    };
    let mut grid: Vec<Vec<usize>> = vec![Vec::new(); cells * cells];
    for i in 0..b.points.len() - 1 {
        if let Some((i0, i1, j0, j1)) = cell_range(&b.points[i], &b.points[i + 1]) {
            for gi in i0..=i1 {
                for gj in j0..=j1 {
                    grid[gi * cells + gj].push(i);
                }
            }
        }
    }
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for i in 0..a.points.len() - 1 {
        let (p0, p1) = (&a.points[i], &a.points[i + 1]);
        let Some((i0, i1, j0, j1)) = cell_range(p0, p1) else {
            continue;
        };
        for gi in i0..=i1 {
            for gj in j0..=j1 {
                for &j in &grid[gi * cells + gj] {
                    if !seen.insert((i, j)) {
                        continue;
                    }
                    if let Some(c) = segment_contact(p0, p1, &b.points[j], &b.points[j + 1]) {
                        out.push(CurveCrossing {
                            seg_a: i,
                            seg_b: j,
                            contact: c,
                        });
                    }
                }
            }
        }
    }
    out.sort_by_key(|c| (c.seg_a, c.seg_b));
    out
}

/// Attracting cycles found by iterating a grid of initial conditions.
pub fn scan_attractors(
    params: &ModelParams,
    corner_lo: SectionPoint,
    corner_hi: SectionPoint,
    n: usize,
    n_iter: usize,
    max_k: usize,
    tol: f64,
) -> Vec<Cycle> {
    let grid: Vec<SectionPoint> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            let fy = (i as f64 + 0.5) / n as f64;
            let fz = (j as f64 + 0.5) / n as f64;
            SectionPoint::new(
                corner_lo.y + fy * (corner_hi.y - corner_lo.y),
                corner_lo.z + fz * (corner_hi.z - corner_lo.z),
            )
        })
        .collect();
    let finals: Vec<Option<Vec<SectionPoint>>> = grid
        .par_iter()
        .map(|&q| {
            let mut cur = q;
            for _ in 0..n_iter {
                cur = return_once(cur, params, tol, TimeDirection::Forward).ok()?;
            }
            return_orbit(cur, params, max_k, tol, TimeDirection::Forward).ok()
        })
        .collect();
    let mut cycles: Vec<Cycle> = Vec::new();
    for orbit in finals.into_iter().flatten() {
        let start = orbit[orbit.len() - 1];
        // Smallest period that nearly closes.
        let Some(k) = (1..=max_k).find(|&k| orbit[k - 1].dist(&start) < 1e-4 && {
            let back = if k == max_k { start } else { orbit[max_k - 1 - k] };
            back.dist(&start) < 1e-4
        }) else {
            continue;
        };
        if cycles.iter().any(|c| c.k == k && c.distance_to(&start) < 1e-6) {
            continue;
        }
        if let Ok(c) = newton_cycle(start, params, k, tol) {
            if c.period_collapse.is_none()
                && !cycles.iter().any(|o| o.k == c.k && o.distance_to(&c.points[0]) < 1e-6)
            {
                cycles.push(c);
            }
        }
    }
    cycles.sort_by(|a, b| (a.k, a.points[0].y).partial_cmp(&(b.k, b.points[0].y)).unwrap());
    cycles
}

/// Period-`k` cycles found by Newton from the local minima of
/// `|R^k(q) - q|` on a grid; this also finds saddles.
pub fn scan_cycles(
    params: &ModelParams,
    corner_lo: SectionPoint,
    corner_hi: SectionPoint,
    n: usize,
    k: usize,
    tol: f64,
) -> Vec<Cycle> {
    let at = |i: usize, j: usize| {
        SectionPoint::new(
            corner_lo.y + (i as f64) / (n - 1) as f64 * (corner_hi.y - corner_lo.y),
            corner_lo.z + (j as f64) / (n - 1) as f64 * (corner_hi.z - corner_lo.z),
        )
    };
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let res: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            let q = at(i, j);
            return_map(q, params, k, tol)
                .map(|r| r.dist(&q))
                .unwrap_or(f64::INFINITY)
        })
        .collect();
    let mut seeds = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let r = res[i * n + j];
            if !r.is_finite() {
                continue;
            }
            let mut is_min = true;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0) || a < 0 || b < 0 || a >= n as i64 || b >= n as i64 {
                        continue;
                    }
                    if res[a as usize * n + b as usize] < r {
                        is_min = false;
                    }
                }
            }
            if is_min {
                seeds.push(at(i, j));
            }
        }
    }
    let found: Vec<Cycle> = seeds
        .par_iter()
        .filter_map(|&s| newton_cycle(s, params, k, tol).ok())
        .collect();
    let mut cycles: Vec<Cycle> = Vec::new();
    for c in found {
        if c.period_collapse.is_some() {
            continue;
        }
        if !cycles.iter().any(|o| o.distance_to(&c.points[0]) < 1e-6) {
            cycles.push(c);
        }
    }
    cycles.sort_by(|a, b| a.points[0].y.partial_cmp(&b.points[0].y).unwrap());
    cycles
}

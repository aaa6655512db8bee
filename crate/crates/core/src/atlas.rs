//! Two-dimensional manifold atlases: parameter meshes, lifting through a
//! chart, advection by the time-`tau` flow with provenance-based
//! refinement, and heteroclinic connections between two atlases.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{flow_map, integrate, integrate_variational, Trajectory};
use crate::model::{eval_field, ModelParams};
use crate::parm::{eval_real, Chart, Stability};

/// Time of one fundamental-domain step.
pub const DEFAULT_TAU: f64 = 0.25;
pub const DEFAULT_EDGE_MAX: f64 = 0.05;
pub const MAX_VERTICES: usize = 5_000_000;
const MAX_REFINE_ROUNDS: usize = 12;

/// Triangulation of a region of the parameter disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMesh {
    pub seeds: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
}

fn ring(r: f64, n_theta: usize) -> impl Iterator<Item = [f64; 2]> {
    (0..n_theta).map(move |j| {
        let a = 2.0 * std::f64::consts::PI * j as f64 / n_theta as f64;
        [r * a.cos(), r * a.sin()]
    })
}

/// Adds the two triangles of every quad between ring `lo` and ring `lo+1`.
fn stitch(tris: &mut Vec<[usize; 3]>, lo: usize, hi: usize, n_theta: usize) {
    for j in 0..n_theta {
        let j1 = (j + 1) % n_theta;
        let (a, b, c, d) = (lo + j, lo + j1, hi + j1, hi + j);
        tris.push([a, c, b]);
        tris.push([a, d, c]);
    }
}

/// Polar triangulation of the closed unit disk: a center vertex plus
/// `n_r` rings of `n_theta` vertices.
pub fn mesh_disk(n_r: usize, n_theta: usize) -> ParamMesh {
    assert!(n_r >= 2 && n_theta >= 8, "mesh_disk needs n_r >= 2, n_theta >= 8");
    let mut seeds = vec![[0.0, 0.0]];
    for i in 1..=n_r {
        seeds.extend(ring(i as f64 / n_r as f64, n_theta));
    }
    let mut triangles = Vec::new();
    for j in 0..n_theta {
        triangles.push([0, 1 + j, 1 + (j + 1) % n_theta]);
    }
    for i in 1..n_r {
        stitch(&mut triangles, 1 + (i - 1) * n_theta, 1 + i * n_theta, n_theta);
    }
    ParamMesh { seeds, triangles }
}

/// Polar triangulation of `r_in <= |theta| <= 1` with `n_r` radial layers.
pub fn mesh_annulus(r_in: f64, n_r: usize, n_theta: usize) -> ParamMesh {
    assert!(r_in > 0.0 && r_in < 1.0, "annulus needs 0 < r_in < 1");
    assert!(n_r >= 1 && n_theta >= 8, "mesh_annulus needs n_r >= 1, n_theta >= 8");
    let mut seeds = Vec::new();
    for i in 0..=n_r {
        seeds.extend(ring(r_in + (1.0 - r_in) * i as f64 / n_r as f64, n_theta));
    }
    let mut triangles = Vec::new();
    for i in 0..n_r {
        stitch(&mut triangles, i * n_theta, (i + 1) * n_theta, n_theta);
    }
    ParamMesh { seeds, triangles }
}

/// Inner radius of the fundamental annulus: `|e^{-lambda tau}|` for an
/// unstable chart (the preimage of the unit circle after time `tau`).
pub fn fundamental_radius(chart: &Chart, tau: f64) -> f64 {
    (-chart.lambda.re.abs() * tau.abs()).exp()
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Edge multiplicities of a triangle list.
pub fn edge_counts(triangles: &[[usize; 3]]) -> BTreeMap<(usize, usize), usize> {
    let mut m = BTreeMap::new();
    for t in triangles {
        for k in 0..3 {
            *m.entry(edge_key(t[k], t[(k + 1) % 3])).or_insert(0) += 1;
        }
    }
    m
}

/// `V - E + F`, counting only referenced vertices.
pub fn euler_characteristic(n_vertices: usize, triangles: &[[usize; 3]]) -> i64 {
    let _ = n_vertices;
    let used: BTreeSet<usize> = triangles.iter().flatten().copied().collect();
    used.len() as i64 - edge_counts(triangles).len() as i64 + triangles.len() as i64
}

/// Vertices on edges that belong to a single triangle.
pub fn boundary_vertices(triangles: &[[usize; 3]]) -> BTreeSet<usize> {
    edge_counts(triangles)
        .into_iter()
        .filter(|&(_, c)| c == 1)
        .flat_map(|((a, b), _)| [a, b])
        .collect()
}

impl ParamMesh {
    pub fn euler_characteristic(&self) -> i64 {
        euler_characteristic(self.seeds.len(), &self.triangles)
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.seeds[i]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshVertex {
    pub position: [f64; 3],
    pub seed: [f64; 2],
    pub generation: usize,
}

/// A triangulated piece of a manifold in phase space whose vertices remember
/// the chart parameter they were flowed from.
#[derive(Debug, Clone)]
pub struct SeededMesh {
    pub vertices: Vec<MeshVertex>,
    pub triangles: Vec<[usize; 3]>,
    /// Signed time per generation: positive for unstable charts.
    pub tau: f64,
    pub generation: usize,
    pub chart: Arc<Chart>,
}

/// Pushes a parameter mesh forward through the chart (generation 0).
/// `tau` is a magnitude; its sign follows the chart's stability.
pub fn lift_mesh(chart: &Arc<Chart>, mesh: &ParamMesh, tau: f64) -> Result<SeededMesh> {
    let signed = match chart.stability {
        Stability::Unstable => tau.abs(),
        Stability::Stable => -tau.abs(),
    };
    let vertices = mesh
        .seeds
        .iter()
        .map(|&s| {
            Ok(MeshVertex {
                position: eval_real(chart, s[0], s[1])?,
                seed: s,
                generation: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeededMesh {
        vertices,
        triangles: mesh.triangles.clone(),
        tau: signed,
        generation: 0,
        chart: Arc::clone(chart),
    })
}

fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

impl SeededMesh {
    pub fn euler_characteristic(&self) -> i64 {
        euler_characteristic(self.vertices.len(), &self.triangles)
    }

    pub fn max_edge(&self) -> f64 {
        edge_counts(&self.triangles)
            .keys()
            .map(|&(a, b)| dist3(&self.vertices[a].position, &self.vertices[b].position))
            .fold(0.0, f64::max)
    }

    /// Re-integrates the lift of a seed for this mesh's elapsed time.
    pub fn reintegrate(&self, seed: [f64; 2], params: &ModelParams, tol: f64) -> Result<[f64; 3]> {
        let x0 = eval_real(&self.chart, seed[0], seed[1])?;
        let t = self.tau * self.generation as f64;
        if t == 0.0 {
            return Ok(x0);
        }
        flow_map(x0, t, params, tol)
    }

    /// Wavefront OBJ with 1-based face indices.
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# generation {}", self.generation);
        let _ = writeln!(out, "# tau {:e}", self.tau);
        for v in &self.vertices {
            let p = v.position;
            let _ = writeln!(out, "v {:e} {:e} {:e}", p[0], p[1], p[2]);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        out
    }

    /// Vertex dump `x,y,z,s1,s2,generation`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,z,s1,s2,generation\n");
        for v in &self.vertices {
            let p = v.position;
            let _ = writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{}",
                p[0], p[1], p[2], v.seed[0], v.seed[1], v.generation
            );
        }
        out
    }
}

/// Several generations written to one OBJ file, each as its own group.
pub fn combined_obj(meshes: &[SeededMesh]) -> String {
    let mut out = String::new();
    let mut offset = 0;
    for m in meshes {
        let _ = writeln!(out, "# generation {}", m.generation);
        let _ = writeln!(out, "g generation_{}", m.generation);
        for v in &m.vertices {
            let p = v.position;
            let _ = writeln!(out, "v {:e} {:e} {:e}", p[0], p[1], p[2]);
        }
        for t in &m.triangles {
            let _ = writeln!(
                out,
                "f {} {} {}",
                t[0] + offset + 1,
                t[1] + offset + 1,
                t[2] + offset + 1
            );
        }
        offset += m.vertices.len();
    }
    out
}

/// Output of [`advect`].
#[derive(Debug, Clone)]
pub struct Advection {
    pub generations: Vec<SeededMesh>,
    /// Set when the vertex budget ran out; the last generation is partial.
    pub exhausted: bool,
    /// Integration failure that ended growth early ([`advect_partial`] only).
    pub stopped: Option<Error>,
}

fn seed_failure(seed: [f64; 2], generation: usize, e: Error) -> Error {
    Error::SeedFailure {
        seed,
        generation,
        message: e.to_string(),
    }
}

/// Splits every triangle along its marked edges.
fn split_triangles(
    triangles: &[[usize; 3]],
    mids: &HashMap<(usize, usize), usize>,
) -> Vec<[usize; 3]> {
    let mut out = Vec::with_capacity(triangles.len() * 2);
    for t in triangles {
        let m = |k: usize| mids.get(&edge_key(t[k], t[(k + 1) % 3])).copied();
        let marked: Vec<usize> = (0..3).filter(|&k| m(k).is_some()).collect();
        match marked.len() {
            0 => out.push(*t),
            1 => {
                let k = marked[0];
                let (a, b, c) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
                let mab = m(k).unwrap();
                out.push([a, mab, c]);
                out.push([mab, b, c]);
            }
            2 => {
                // Rotate so the unmarked edge is (c, a).
                let k = (0..3).find(|k| m(*k).is_none()).unwrap();
                let r = (k + 1) % 3;
                let (a, b, c) = (t[r], t[(r + 1) % 3], t[(r + 2) % 3]);
                let mab = m(r).unwrap();
                let mbc = m((r + 1) % 3).unwrap();
                out.push([a, mab, mbc]);
                out.push([mab, b, mbc]);
                out.push([a, mbc, c]);
            }
            _ => {
                let (a, b, c) = (t[0], t[1], t[2]);
                let (mab, mbc, mca) = (m(0).unwrap(), m(1).unwrap(), m(2).unwrap());
                out.push([a, mab, mca]);
                out.push([mab, b, mbc]);
                out.push([mca, mbc, c]);
                out.push([mab, mbc, mca]);
            }
        }
    }
    out
}

/// Flows the mesh `n_gen` times by `tau`, refining long edges by inserting
/// seed-space midpoints integrated from the chart for the full elapsed time.
pub fn advect(
    mesh: &SeededMesh,
    n_gen: usize,
    edge_max: f64,
    params: &ModelParams,
    tol: f64,
) -> Result<Advection> {
    let out = advect_partial(mesh, n_gen, edge_max, params, tol);
    match out.stopped {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Like [`advect`], but an integration failure ends growth and the
/// completed generations are returned with the error recorded.
pub fn advect_partial(
    mesh: &SeededMesh,
    n_gen: usize,
    edge_max: f64,
    params: &ModelParams,
    tol: f64,
) -> Advection {
    let mut generations = Vec::with_capacity(n_gen);
    let mut exhausted = false;
    let mut cur = mesh.clone();
    for _ in 0..n_gen {
        match advance_generation(&mut cur, edge_max, params, tol) {
            Ok(ex) => {
                exhausted = ex;
                generations.push(cur.clone());
                if exhausted {
                    break;
                }
            }
            Err(e) => {
                return Advection {
                    generations,
                    exhausted,
                    stopped: Some(e),
                }
            }
        }
    }
    Advection {
        generations,
        exhausted,
        stopped: None,
    }
}

/// One generation step in place; returns whether the vertex budget ran out.
fn advance_generation(
    cur: &mut SeededMesh,
    edge_max: f64,
    params: &ModelParams,
    tol: f64,
) -> Result<bool> {
    let mut exhausted = false;
    {
        let g = cur.generation + 1;
        let tau = cur.tau;
        let moved: Vec<Result<MeshVertex>> = cur
            .vertices
            .par_iter()
            .map(|v| {
                let p = flow_map(v.position, tau, params, tol)
                    .map_err(|e| seed_failure(v.seed, g, e))?;
                Ok(MeshVertex {
                    position: p,
                    seed: v.seed,
                    generation: g,
                })
            })
            .collect();
        cur.vertices = moved.into_iter().collect::<Result<Vec<_>>>()?;
        cur.generation = g;
        for _ in 0..MAX_REFINE_ROUNDS {
            let long: Vec<(usize, usize)> = edge_counts(&cur.triangles)
                .into_keys()
                .filter(|&(a, b)| {
                    dist3(&cur.vertices[a].position, &cur.vertices[b].position) > edge_max
                })
                .collect();
            if long.is_empty() {
                break;
            }
            if cur.vertices.len() + long.len() > MAX_VERTICES {
                exhausted = true;
                break;
            }
            let new_vertices: Vec<Result<MeshVertex>> = long
                .par_iter()
                .map(|&(a, b)| {
                    let (sa, sb) = (cur.vertices[a].seed, cur.vertices[b].seed);
                    let seed = [0.5 * (sa[0] + sb[0]), 0.5 * (sa[1] + sb[1])];
                    let p = cur
                        .reintegrate(seed, params, tol)
                        .map_err(|e| seed_failure(seed, g, e))?;
                    Ok(MeshVertex {
                        position: p,
                        seed,
                        generation: g,
                    })
                })
                .collect();
            let mut mids = HashMap::with_capacity(long.len());
            for (e, v) in long.iter().zip(new_vertices) {
                mids.insert(*e, cur.vertices.len());
                cur.vertices.push(v?);
            }
            cur.triangles = split_triangles(&cur.triangles, &mids);
        }
    }
    Ok(exhausted)
}

/// A triangle of an atlas with the provenance of its corners.
#[derive(Debug, Clone, Copy)]
pub struct AtlasTriangle {
    pub corners: [[f64; 3]; 3],
    pub seeds: [[f64; 2]; 3],
    pub generation: usize,
}

/// Flattens meshes into a triangle soup.
pub fn triangle_soup(meshes: &[SeededMesh]) -> Vec<AtlasTriangle> {
    meshes
        .iter()
        .flat_map(|m| {
            m.triangles.iter().map(move |t| AtlasTriangle {
                corners: t.map(|i| m.vertices[i].position),
                seeds: t.map(|i| m.vertices[i].seed),
                generation: m.generation,
            })
        })
        .collect()
}

/// Intersection of a triangle pair.
#[derive(Debug, Clone, Copy)]
pub struct MeshHit {
    pub tri_a: usize,
    pub tri_b: usize,
    pub point: [f64; 3],
    /// Barycentric coordinates of `point` in each triangle.
    pub bary_a: [f64; 3],
    pub bary_b: [f64; 3],
}

fn co(p: &[f64; 3]) -> robust::Coord3D<f64> {
    robust::Coord3D {
        x: p[0],
        y: p[1],
        z: p[2],
    }
}

/// Point where segment `pq` passes through triangle `abc`, by exact
/// orientation signs.
fn segment_triangle(p: &[f64; 3], q: &[f64; 3], tri: &[[f64; 3]; 3]) -> Option<[f64; 3]> {
    let [a, b, c] = tri;
    let s1 = robust::orient3d(co(a), co(b), co(c), co(p));
    let s2 = robust::orient3d(co(a), co(b), co(c), co(q));
    if s1 == 0.0 || s2 == 0.0 || (s1 > 0.0) == (s2 > 0.0) {
        return None;
    }
    let e1 = robust::orient3d(co(p), co(q), co(a), co(b));
    let e2 = robust::orient3d(co(p), co(q), co(b), co(c));
    let e3 = robust::orient3d(co(p), co(q), co(c), co(a));
    let all_pos = e1 > 0.0 && e2 > 0.0 && e3 > 0.0;
    let all_neg = e1 < 0.0 && e2 < 0.0 && e3 < 0.0;
    if !(all_pos || all_neg) {
        return None;
    }
    let t = s1 / (s1 - s2);
    Some([
        p[0] + t * (q[0] - p[0]),
        p[1] + t * (q[1] - p[1]),
        p[2] + t * (q[2] - p[2]),
    ])
}

fn barycentric(tri: &[[f64; 3]; 3], x: &[f64; 3]) -> [f64; 3] {
    let v = |a: &[f64; 3], b: &[f64; 3]| Vector3::new(b[0] - a[0], b[1] - a[1], b[2] - a[2]);
    let (e0, e1, ep) = (v(&tri[0], &tri[1]), v(&tri[0], &tri[2]), v(&tri[0], x));
    let (d00, d01, d11) = (e0.dot(&e0), e0.dot(&e1), e1.dot(&e1));
    let (d20, d21) = (ep.dot(&e0), ep.dot(&e1));
    let den = d00 * d11 - d01 * d01;
    let l1 = (d11 * d20 - d01 * d21) / den;
    let l2 = (d00 * d21 - d01 * d20) / den;
    [1.0 - l1 - l2, l1, l2]
}

fn triangle_pair_hit(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> Option<[f64; 3]> {
    for k in 0..3 {
        if let Some(p) = segment_triangle(&a[k], &a[(k + 1) % 3], b) {
            return Some(p);
        }
        if let Some(p) = segment_triangle(&b[k], &b[(k + 1) % 3], a) {
            return Some(p);
        }
    }
    None
}

/// All intersecting triangle pairs between two soups, found through a
/// uniform spatial hash.
pub fn scan_mesh_intersections(a: &[AtlasTriangle], b: &[AtlasTriangle]) -> Vec<MeshHit> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let bbox = |t: &AtlasTriangle| {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for c in &t.corners {
            for i in 0..3 {
                lo[i] = lo[i].min(c[i]);
                hi[i] = hi[i].max(c[i]);
            }
        }
        (lo, hi)
    };
    // Cell size from the typical triangle extent of `b`.
    let mut ext: Vec<f64> = b
        .iter()
        .map(|t| {
            let (lo, hi) = bbox(t);
            (0..3).map(|i| hi[i] - lo[i]).fold(0.0, f64::max)
        })
        .collect();
    ext.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let cell = ext[ext.len() / 2].max(1e-9) * 2.0;
    let key = |v: f64| (v / cell).floor() as i64;
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (j, t) in b.iter().enumerate() {
        let (lo, hi) = bbox(t);
        for x in key(lo[0])..=key(hi[0]) {
            for y in key(lo[1])..=key(hi[1]) {
                for z in key(lo[2])..=key(hi[2]) {
                    grid.entry((x, y, z)).or_default().push(j);
                }
            }
        }
    }
    let mut hits: Vec<MeshHit> = a
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, ta)| {
            let (lo, hi) = bbox(ta);
            let mut cand = BTreeSet::new();
            // Very large triangles are skipped rather than hashed cell by cell.
            let span = (0..3).map(|k| key(hi[k]) - key(lo[k])).max().unwrap_or(0);
            if span <= 64 {
                for x in key(lo[0])..=key(hi[0]) {
                    for y in key(lo[1])..=key(hi[1]) {
                        for z in key(lo[2])..=key(hi[2]) {
                            if let Some(v) = grid.get(&(x, y, z)) {
                                cand.extend(v.iter().copied());
                            }
                        }
                    }
                }
            }
            let mut out = Vec::new();
            for j in cand {
                if let Some(p) = triangle_pair_hit(&ta.corners, &b[j].corners) {
                    out.push(MeshHit {
                        tri_a: i,
                        tri_b: j,
                        point: p,
                        bary_a: barycentric(&ta.corners, &p),
                        bary_b: barycentric(&b[j].corners, &p),
                    });
                }
            }
            out.into_iter()
        })
        .collect();
    hits.sort_by_key(|h| (h.tri_a, h.tri_b));
    hits
}

/// Initial data for the connection solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectionGuess {
    pub theta_u: f64,
    pub sigma_s: [f64; 2],
    pub t: f64,
}

fn interp_seed(seeds: &[[f64; 2]; 3], w: &[f64; 3]) -> [f64; 2] {
    [
        w[0] * seeds[0][0] + w[1] * seeds[1][0] + w[2] * seeds[2][0],
        w[0] * seeds[0][1] + w[1] * seeds[1][1] + w[2] * seeds[2][1],
    ]
}

/// Converts an intersection of an unstable atlas (`a`) and a stable atlas
/// (`b`) into a connection guess. The unstable seed is moved to the unit
/// circle along the chart's linear dynamics.
pub fn guess_from_hit(
    hit: &MeshHit,
    a: &[AtlasTriangle],
    b: &[AtlasTriangle],
    chart_u: &Chart,
    tau_u: f64,
    tau_s: f64,
) -> Option<ConnectionGuess> {
    let ta = &a[hit.tri_a];
    let tb = &b[hit.tri_b];
    let su = interp_seed(&ta.seeds, &hit.bary_a);
    let ss = interp_seed(&tb.seeds, &hit.bary_b);
    let r = su[0].hypot(su[1]);
    if r < 1e-3 {
        return None;
    }
    let lam = chart_u.lambda;
    // P(r e^{i phi}) = phi_flow(P(e^{i phi0}), t0) with r = e^{Re(lam) t0}.
    let t0 = r.ln() / lam.re;
    let phi = su[1].atan2(su[0]);
    let theta_u = phi - lam.im * t0;
    Some(ConnectionGuess {
        theta_u,
        sigma_s: ss,
        t: ta.generation as f64 * tau_u.abs() + t0 + tb.generation as f64 * tau_s.abs(),
    })
}

/// A solved heteroclinic segment from the unstable chart's unit circle to
/// the stable chart.
#[derive(Debug, Clone)]
pub struct ConnectingOrbit {
    pub theta_u: f64,
    pub sigma_s: [f64; 2],
    pub t: f64,
    pub residual: f64,
    pub samples: Trajectory,
}

impl ConnectingOrbit {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# theta_u={:e}", self.theta_u);
        let _ = writeln!(out, "# sigma_s={:e},{:e}", self.sigma_s[0], self.sigma_s[1]);
        let _ = writeln!(out, "# T={:e}", self.t);
        let _ = writeln!(out, "# residual={:e}", self.residual);
        out.push_str(&self.samples.to_csv());
        out
    }
}

/// Exit point on the unstable chart's unit circle and its angle derivative.
fn exit_point(chart: &Chart, theta: f64) -> Result<([f64; 3], [f64; 3])> {
    let x = eval_real(chart, theta.cos(), theta.sin())?;
    let j = real_jacobian(chart, theta.cos(), theta.sin());
    let d = [
        -theta.sin() * j[0][0] + theta.cos() * j[0][1],
        -theta.sin() * j[1][0] + theta.cos() * j[1][1],
        -theta.sin() * j[2][0] + theta.cos() * j[2][1],
    ];
    Ok((x, d))
}

/// Derivative of `eval_real` with respect to `(s1, s2)`, row per component.
pub fn real_jacobian(chart: &Chart, s1: f64, s2: f64) -> [[f64; 2]; 3] {
    let t1 = Complex64::new(s1, s2);
    let t2 = t1.conj();
    let i = Complex64::new(0.0, 1.0);
    let mut out = [[0.0; 2]; 3];
    for (k, comp) in chart.components.iter().enumerate() {
        let (d1, d2) = comp.evaluate_gradient(t1, t2);
        out[k] = [(d1 + d2).re, (i * (d1 - d2)).re];
    }
    out
}

const CONNECT_ITERS: usize = 40;
const CONNECT_RESIDUAL: f64 = 1e-8;

fn connection_residual(
    chart_u: &Chart,
    chart_s: &Chart,
    theta: f64,
    sigma: [f64; 2],
    t: f64,
    params: &ModelParams,
    tol: f64,
) -> Result<(Vector3<f64>, Matrix3x4<f64>)> {
    let (x0, dx0) = exit_point(chart_u, theta)?;
    let st = integrate_variational(x0, t, params, tol)?;
    let target = eval_real(chart_s, sigma[0], sigma[1])?;
    let g = Vector3::new(st.x[0] - target[0], st.x[1] - target[1], st.x[2] - target[2]);
    let dtheta = st.m * Vector3::from(dx0);
    let f = eval_field(&st.x, params);
    let js = real_jacobian(chart_s, sigma[0], sigma[1]);
    let mut jac = Matrix3x4::zeros();
    for r in 0..3 {
        jac[(r, 0)] = dtheta[r];
        jac[(r, 1)] = -js[r][0];
        jac[(r, 2)] = -js[r][1];
        jac[(r, 3)] = f[r];
    }
    Ok((g, jac))
}

/// Newton solve of `phi(exit(theta_u), T) = P_s(sigma_s)`.
///
/// With `fix_time` the flight time is held (continuation corrector, square
/// 3x3 system in `theta_u, sigma_s`); otherwise the minimum-norm step over
/// all four unknowns is used.
pub fn hetero_connect_with(
    chart_u: &Chart,
    chart_s: &Chart,
    guess: ConnectionGuess,
    params: &ModelParams,
    tol: f64,
    fix_time: bool,
) -> Result<ConnectingOrbit> {
    let mut x = Vector4::new(guess.theta_u, guess.sigma_s[0], guess.sigma_s[1], guess.t);
    let mut res = f64::INFINITY;
    for _ in 0..CONNECT_ITERS {
        let sig_norm = x[1].hypot(x[2]);
        if sig_norm > 1.0 {
            return Err(Error::ChartExit(sig_norm));
        }
        let (g, jac) = connection_residual(chart_u, chart_s, x[0], [x[1], x[2]], x[3], params, tol)?;
        res = g.norm();
        if res < CONNECT_RESIDUAL {
            let samples = integrate(exit_point(chart_u, x[0])?.0, x[3], params, tol)?;
            return Ok(ConnectingOrbit {
                theta_u: x[0],
                sigma_s: [x[1], x[2]],
                t: x[3],
                residual: res,
                samples,
            });
        }
        let step = if fix_time {
            let sq = Matrix3::from_columns(&[jac.column(0), jac.column(1), jac.column(2)]);
            let d = sq.lu().solve(&(-g)).ok_or(Error::NoConvergence {
                what: "connection Newton",
                iterations: 0,
                residual: res,
            })?;
            Vector4::new(d[0], d[1], d[2], 0.0)
        } else {
            let jjt = jac * jac.transpose();
            let y = jjt.lu().solve(&(-g)).ok_or(Error::NoConvergence {
                what: "connection Newton",
                iterations: 0,
                residual: res,
            })?;
            jac.transpose() * y
        };
        x += step;
        if x[3] <= 0.0 {
            break;
        }
    }
    Err(Error::NoConvergence {
        what: "connection Newton",
        iterations: CONNECT_ITERS,
        residual: res,
    })
}

/// Connection solve with all four unknowns free.
pub fn hetero_connect(
    chart_u: &Chart,
    chart_s: &Chart,
    guess: ConnectionGuess,
    params: &ModelParams,
    tol: f64,
) -> Result<ConnectingOrbit> {
    hetero_connect_with(chart_u, chart_s, guess, params, tol, false)
}

/// Traces the solution family through `start` by natural-parameter
/// continuation in the flight time `T`; stops at the first failed corrector
/// (typically the stable parameter leaving the unit disk).
///
/// The family is the connecting orbit itself: moving `T` slides the end
/// point along `W^s`, while `theta_u` stays put up to the solver tolerance.
pub fn continue_connection(
    chart_u: &Chart,
    chart_s: &Chart,
    start: &ConnectingOrbit,
    d_t: f64,
    steps: usize,
    params: &ModelParams,
    tol: f64,
) -> Vec<ConnectingOrbit> {
    let mut out = Vec::new();
    let mut prev = ConnectionGuess {
        theta_u: start.theta_u,
        sigma_s: start.sigma_s,
        t: start.t,
    };
    for _ in 0..steps {
        let guess = ConnectionGuess {
            t: prev.t + d_t,
            ..prev
        };
        match hetero_connect_with(chart_u, chart_s, guess, params, tol, true) {
            Ok(orbit) => {
                prev = ConnectionGuess {
                    theta_u: orbit.theta_u,
                    sigma_s: orbit.sigma_s,
                    t: orbit.t,
                };
                out.push(orbit);
            }
            Err(_) => break,
        }
    }
    out
}

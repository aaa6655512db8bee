//! Experiment drivers behind the `langford` binary.
//!
//! Each `cmd_*` function writes its files through a [`RunRecorder`] and
//! returns whether the run ended in an expected negative result (no
//! crossings, empty scan). The building blocks they use are public so the
//! same pipelines can be driven from code.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::atlas::{
    advect_partial, combined_obj, continue_connection, fundamental_radius, guess_from_hit,
    hetero_connect, lift_mesh, mesh_annulus, mesh_disk, scan_mesh_intersections, triangle_soup,
    Advection, AtlasTriangle, ConnectingOrbit, MeshHit, SeededMesh,
};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::flow::TimeDirection;
use crate::manifest::RunRecorder;
use crate::model::{axis_equilibria, axis_roots, equilibrium_by_name, saddle_node_alpha, ModelParams};
use crate::parm::{
    auto_scaled_chart, decay_fit, error_conj, solve_homological, Chart, Stability,
};
use crate::poincare::{
    count_crossings, grow_cycle_manifold_1d, grow_cycle_manifold_all, locate_neimark_sacker,
    newton_cycle, return_once, sample_invariant_circle, scan_cycles, Branch, CircleSample, Cycle,
    CycleTag, ManifoldKind, Polyline, SectionPoint, FIXED_POINT_SEED,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_NEGATIVE: i32 = 4;
pub const EXIT_IO: i32 = 5;

/// Process exit code for a failed run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse(_) => EXIT_CONFIG,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_NUMERICAL,
    }
}

/// Worker count: `LANGFORD_WORKERS` if set, else the config value.
pub fn worker_count(cfg: &ExperimentConfig) -> Result<usize> {
    match std::env::var("LANGFORD_WORKERS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::Config(format!("LANGFORD_WORKERS='{v}' is not a positive integer"))),
        Err(_) => Ok(cfg.workers),
    }
}

/// Parses `lo:hi:step`.
pub fn parse_range(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("range '{s}' is not lo:hi:step")))?;
    match parts.as_slice() {
        [lo, hi, step] if *step > 0.0 && hi >= lo => Ok([*lo, *hi, *step]),
        _ => Err(Error::Config(format!("range '{s}' is not lo:hi:step with step > 0"))),
    }
}

/// Grid points `lo, lo + step, ...` up to `hi` (inclusive within half a step).
pub fn range_points(r: [f64; 3]) -> Vec<f64> {
    let n = ((r[1] - r[0]) / r[2] + 0.5).floor() as usize;
    (0..=n).map(|i| r[0] + i as f64 * r[2]).collect()
}

pub fn parse_point(s: &str) -> Result<SectionPoint> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("point '{s}' is not y,z")))?;
    match v.as_slice() {
        [y, z] => Ok(SectionPoint::new(*y, *z)),
        _ => Err(Error::Config(format!("point '{s}' is not y,z"))),
    }
}

// ---------------------------------------------------------------- equilibria

pub fn equilibria_csv(base: &ModelParams, alphas: &[f64]) -> String {
    let mut out = String::from("alpha,name,z_star,lambda_re,lambda_im,lambda_axis,stability\n");
    for &a in alphas {
        let p = ModelParams { alpha: a, ..*base };
        for (i, e) in axis_equilibria(&p).iter().enumerate() {
            let _ = writeln!(
                out,
                "{:?},p{},{:e},{:e},{:e},{:e},{}",
                a,
                i,
                e.z_star,
                e.lambda_pair.re,
                e.lambda_pair.im,
                e.lambda_real,
                e.stability_tag.as_str()
            );
        }
    }
    out
}

/// Bisects the change in the number of axis equilibria between `lo` (one
/// root) and `hi` (three roots).
pub fn bisect_fold(base: &ModelParams, mut lo: f64, mut hi: f64) -> f64 {
    let count = |a: f64| axis_roots(&ModelParams { alpha: a, ..*base }).len();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count(mid) > 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Fold located from a sweep: the first grid interval where the root count
/// rises, refined by bisection.
pub fn locate_fold(base: &ModelParams, alphas: &[f64]) -> Option<([f64; 2], f64)> {
    let counts: Vec<usize> = alphas
        .iter()
        .map(|&a| axis_roots(&ModelParams { alpha: a, ..*base }).len())
        .collect();
    let i = counts.windows(2).position(|w| w[0] == 1 && w[1] > 1)?;
    let (lo, hi) = (alphas[i], alphas[i + 1]);
    Some(([lo, hi], bisect_fold(base, lo, hi)))
}

pub fn cmd_equilibria(
    cfg: &ExperimentConfig,
    rec: &mut RunRecorder,
    alpha: Option<f64>,
    sweep: Option<[f64; 3]>,
) -> Result<bool> {
    let alphas = match (alpha, sweep) {
        (Some(a), None) => vec![a],
        (None, Some(r)) => range_points(r),
        (None, None) => vec![cfg.model.alpha],
        (Some(_), Some(_)) => {
            return Err(Error::Config("give either --alpha or --sweep, not both".into()))
        }
    };
    rec.write("equilibria.csv", &equilibria_csv(&cfg.model, &alphas))?;
    rec.scalar("saddle_node_alpha", saddle_node_alpha(cfg.model.tau));
    let rows: Vec<usize> = alphas.iter().map(|&a| axis_roots(&cfg.with_alpha(a)).len()).collect();
    rec.scalar("rows_per_alpha", rows);
    if let Some((bracket, fold)) = locate_fold(&cfg.model, &alphas) {
        rec.scalar("fold_bracket", bracket);
        rec.scalar("fold_alpha", fold);
    }
    Ok(false)
}

// --------------------------------------------------------------------- chart

#[derive(Debug, Clone, Serialize)]
pub struct ChartReport {
    pub equilibrium: String,
    pub stability: String,
    pub alpha: f64,
    pub order: usize,
    pub scale: f64,
    pub fit_c: Option<f64>,
    pub fit_r: Option<f64>,
    pub top_degree_max: f64,
    pub homological_residual: f64,
    pub symmetry_defect: f64,
    pub error_conj: f64,
}

fn missing_equilibrium(name: &str, alpha: f64) -> Error {
    Error::Config(format!("equilibrium {name} does not exist at alpha = {alpha}"))
}

/// Solves a chart, auto-scaled to `eps0` when the order admits a decay fit.
pub fn build_chart(
    params: &ModelParams,
    name: &str,
    stability: Stability,
    order: usize,
    eps0: f64,
) -> Result<Chart> {
    let eq = equilibrium_by_name(params, name).ok_or_else(|| missing_equilibrium(name, params.alpha))?;
    if order < 8 {
        solve_homological(&eq, params, stability, order, 1.0)
    } else {
        auto_scaled_chart(&eq, params, stability, order, eps0)
    }
}

pub fn chart_report(cfg: &ExperimentConfig, chart: &Chart, name: &str) -> Result<ChartReport> {
    let t = match chart.stability {
        Stability::Stable => cfg.conj_time,
        Stability::Unstable => -cfg.conj_time,
    };
    let fit = decay_fit(chart).ok();
    Ok(ChartReport {
        equilibrium: name.to_string(),
        stability: chart.stability.as_str().to_string(),
        alpha: chart.params.alpha,
        order: chart.order,
        scale: chart.scaling.s1,
        fit_c: fit.map(|f| f.c),
        fit_r: fit.map(|f| f.r1),
        top_degree_max: chart.max_abs_at_degree(chart.order),
        homological_residual: chart.max_residual,
        symmetry_defect: chart.symmetry_defect(),
        error_conj: error_conj(chart, t, cfg.conj_samples, cfg.tol)?,
    })
}

pub fn cmd_chart(
    cfg: &ExperimentConfig,
    rec: &mut RunRecorder,
    name: &str,
    stability: Stability,
    order: usize,
    eps0: f64,
    alpha: f64,
) -> Result<bool> {
    let params = cfg.with_alpha(alpha);
    let chart = build_chart(&params, name, stability, order, eps0)?;
    let report = chart_report(cfg, &chart, name)?;
    let stem = format!("chart_{name}_{}", stability.as_str());
    rec.write(&format!("{stem}.txt"), &chart.to_text())?;
    rec.write(&format!("{stem}_report.json"), &to_json(&report))?;
    rec.scalar("scale", report.scale);
    rec.scalar("top_degree_max", report.top_degree_max);
    rec.scalar("error_conj", report.error_conj);
    rec.scalar("homological_residual", report.homological_residual);
    Ok(false)
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

// ------------------------------------------------------------------ poincare

/// All period-`k` cycles in the configured section box.
pub fn cycles_at(cfg: &ExperimentConfig, params: &ModelParams, k: usize) -> Vec<Cycle> {
    let (lo, hi) = cfg.scan_box();
    scan_cycles(params, lo, hi, cfg.scan_grid, k, cfg.section_tol)
        .into_iter()
        .filter(|c| c.k == k && c.period_collapse.is_none())
        .collect()
}

pub fn saddle_cycle(cfg: &ExperimentConfig, params: &ModelParams, k: usize) -> Result<Cycle> {
    cycles_at(cfg, params, k)
        .into_iter()
        .find(|c| c.tag == CycleTag::Saddle)
        .ok_or(Error::NotSaddle)
}

/// Crossing count between the stable and unstable manifolds of the saddle
/// `k`-cycle, all branches at all cycle points. A missing saddle counts as
/// zero crossings.
pub fn crossings_at(cfg: &ExperimentConfig, alpha: f64, k: usize) -> Result<usize> {
    let params = cfg.with_alpha(alpha);
    let cycle = match saddle_cycle(cfg, &params, k) {
        Ok(c) => c,
        Err(Error::NotSaddle) => return Ok(0),
        Err(e) => return Err(e),
    };
    let opts = cfg.manifold_options();
    let wu = grow_cycle_manifold_all(&cycle, ManifoldKind::Unstable, &params, &opts)?;
    let ws = grow_cycle_manifold_all(&cycle, ManifoldKind::Stable, &params, &opts)?;
    let cu: Vec<Polyline> = wu.into_iter().map(|b| b.curve).collect();
    let cs: Vec<Polyline> = ws.into_iter().map(|b| b.curve).collect();
    Ok(count_crossings(&cu, &cs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BracketPoint {
    pub alpha: f64,
    pub crossings_count: usize,
}

/// First grid interval where the count goes from zero to positive.
pub fn first_sign_change(points: &[BracketPoint]) -> Option<[f64; 2]> {
    points
        .windows(2)
        .find(|w| w[0].crossings_count == 0 && w[1].crossings_count > 0)
        .map(|w| [w[0].alpha, w[1].alpha])
}

/// Distance from each `W^u` branch end (cycle point 0) to the nearest
/// attracting `k`-cycle point.
pub fn branch_capture(cfg: &ExperimentConfig, alpha: f64, k: usize) -> Result<Vec<(Branch, f64)>> {
    let params = cfg.with_alpha(alpha);
    let cycles = cycles_at(cfg, &params, k);
    let saddle = cycles
        .iter()
        .find(|c| c.tag == CycleTag::Saddle)
        .ok_or(Error::NotSaddle)?;
    let sinks: Vec<&Cycle> = cycles.iter().filter(|c| c.tag.is_attracting()).collect();
    let opts = cfg.manifold_options();
    let mut out = Vec::new();
    for br in [Branch::Plus, Branch::Minus] {
        let b = grow_cycle_manifold_1d(saddle, ManifoldKind::Unstable, br, &params, &opts)?;
        let end = b.terminal();
        let d = sinks.iter().map(|c| c.distance_to(&end)).fold(f64::INFINITY, f64::min);
        out.push((br, d));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub enum PoincareCmd {
    FixedPoint { alpha: f64, seed: SectionPoint },
    Cycle { alpha: f64, k: usize, seed: Option<SectionPoint> },
    NsLocate { alpha0: f64, seed: SectionPoint },
    Circle { alpha: f64, transient: usize, keep: usize },
    Manifold1d { alpha: f64, k: usize, kind: Option<ManifoldKind> },
    Bracket { k: usize, alphas: Vec<f64> },
}

fn kind_str(k: ManifoldKind) -> &'static str {
    match k {
        ManifoldKind::Stable => "ws",
        ManifoldKind::Unstable => "wu",
    }
}

fn branch_str(b: Branch) -> &'static str {
    match b {
        Branch::Plus => "plus",
        Branch::Minus => "minus",
    }
}

fn cycle_summary(c: &Cycle) -> serde_json::Value {
    serde_json::json!({
        "k": c.k,
        "tag": c.tag.as_str(),
        "multipliers": c.multipliers.iter().map(|m| [m.re, m.im]).collect::<Vec<_>>(),
        "moduli": c.multipliers.iter().map(|m| m.norm()).collect::<Vec<_>>(),
        "point": [c.points[0].y, c.points[0].z],
        "residual": c.residual,
    })
}

pub fn cmd_poincare(cfg: &ExperimentConfig, rec: &mut RunRecorder, cmd: &PoincareCmd) -> Result<bool> {
    let tol = cfg.section_tol;
    match cmd {
        PoincareCmd::FixedPoint { alpha, seed } => {
            let c = newton_cycle(*seed, &cfg.with_alpha(*alpha), 1, tol)?;
            rec.write("fixed_point.csv", &c.to_csv())?;
            rec.scalar("fixed_point", cycle_summary(&c));
            Ok(false)
        }
        PoincareCmd::Cycle { alpha, k, seed } => {
            let params = cfg.with_alpha(*alpha);
            let cycles = match seed {
                Some(s) => vec![newton_cycle(*s, &params, *k, tol)?],
                None => cycles_at(cfg, &params, *k),
            };
            for (i, c) in cycles.iter().enumerate() {
                rec.write(&format!("cycle_{i}.csv"), &c.to_csv())?;
            }
            rec.scalar("cycles", cycles.iter().map(cycle_summary).collect::<Vec<_>>());
            Ok(cycles.is_empty())
        }
        PoincareCmd::NsLocate { alpha0, seed } => {
            let ns = locate_neimark_sacker(*seed, *alpha0, &cfg.model, cfg.tol)?;
            let rho = |a: f64| -> Result<f64> {
                let c = newton_cycle(ns.point, &cfg.with_alpha(a), 1, cfg.tol)?;
                Ok(c.multipliers[0].norm().max(c.multipliers[1].norm()))
            };
            let (below, above) = (rho(ns.alpha - 0.01)?, rho(ns.alpha + 0.01)?);
            rec.write("ns.json", &to_json(&ns))?;
            rec.scalar("alpha", ns.alpha);
            rec.scalar("residual", ns.residual);
            rec.scalar("rho_below", below);
            rec.scalar("rho_above", above);
            rec.scalar("bracket_ok", below < 1.0 && above > 1.0);
            Ok(false)
        }
        PoincareCmd::Circle { alpha, transient, keep } => {
            match sample_invariant_circle(*alpha, &cfg.model, *transient, *keep, tol)? {
                CircleSample::Circle { curve, center, star_shaped } => {
                    rec.write("circle.csv", &curve.to_csv())?;
                    rec.scalar("kind", "circle");
                    rec.scalar("center", [center.y, center.z]);
                    rec.scalar("star_shaped", star_shaped);
                }
                CircleSample::Resonant { cluster_count, clusters } => {
                    let pl = Polyline::new(clusters, format!("resonant alpha={alpha}"));
                    rec.write("clusters.csv", &pl.to_csv())?;
                    rec.scalar("kind", "resonant");
                    rec.scalar("cluster_count", cluster_count);
                }
            }
            Ok(false)
        }
        PoincareCmd::Manifold1d { alpha, k, kind } => {
            let params = cfg.with_alpha(*alpha);
            let cycle = saddle_cycle(cfg, &params, *k)?;
            rec.write("saddle.csv", &cycle.to_csv())?;
            let kinds = match kind {
                Some(k) => vec![*k],
                None => vec![ManifoldKind::Unstable, ManifoldKind::Stable],
            };
            let opts = cfg.manifold_options();
            let mut ends = Vec::new();
            for kd in kinds {
                for (j, b) in grow_cycle_manifold_all(&cycle, kd, &params, &opts)?.iter().enumerate() {
                    let (pt, br) = (j / 2, if j % 2 == 0 { Branch::Plus } else { Branch::Minus });
                    let name = format!("{}_{}_{}.csv", kind_str(kd), pt, branch_str(br));
                    rec.write(&name, &b.curve.to_csv())?;
                    let t = b.terminal();
                    ends.push(serde_json::json!({
                        "file": name,
                        "end": format!("{:?}", b.end),
                        "terminal": [t.y, t.z],
                        "arclength": b.curve.arclength,
                    }));
                }
            }
            rec.scalar("branches", ends);
            Ok(false)
        }
        PoincareCmd::Bracket { k, alphas } => {
            let mut sorted = alphas.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite alphas"));
            sorted.dedup();
            let points: Vec<BracketPoint> = sorted
                .par_iter()
                .map(|&a| {
                    crossings_at(cfg, a, *k).map(|n| BracketPoint {
                        alpha: a,
                        crossings_count: n,
                    })
                })
                .collect::<Result<_>>()?;
            for p in &points {
                rec.write(&format!("bracket/alpha_{:?}.json", p.alpha), &to_json(p))?;
            }
            rec.write("bracket.json", &to_json(&points))?;
            let change = first_sign_change(&points);
            rec.scalar("crossings", &points);
            rec.scalar("first_sign_change", change);
            Ok(change.is_none())
        }
    }
}

// --------------------------------------------------------------------- atlas

/// Local disk patch (lift only) and the advected fundamental annulus.
pub struct GrownAtlas {
    pub local: SeededMesh,
    pub annulus: SeededMesh,
    pub advection: Advection,
}

impl GrownAtlas {
    /// Local patch followed by generations `1..`; the annulus is covered by
    /// the local patch.
    pub fn meshes(&self) -> Vec<SeededMesh> {
        let mut m = vec![self.local.clone()];
        m.extend(self.advection.generations.iter().cloned());
        m
    }

    pub fn is_partial(&self) -> bool {
        self.advection.exhausted || self.advection.stopped.is_some()
    }
}

pub fn grow_atlas(
    cfg: &ExperimentConfig,
    chart: &Arc<Chart>,
    n_gen: usize,
    edge_max: f64,
    tau: f64,
) -> Result<GrownAtlas> {
    let local = lift_mesh(chart, &mesh_disk(cfg.disk_radial, cfg.disk_angular), tau)?;
    let r_in = fundamental_radius(chart, tau);
    let annulus = lift_mesh(
        chart,
        &mesh_annulus(r_in, cfg.annulus_radial, cfg.annulus_angular),
        tau,
    )?;
    let advection = advect_partial(&annulus, n_gen, edge_max, &chart.params, cfg.mesh_tol);
    Ok(GrownAtlas {
        local,
        annulus,
        advection,
    })
}

pub fn cmd_atlas(
    cfg: &ExperimentConfig,
    rec: &mut RunRecorder,
    chart_text: &str,
    n_gen: usize,
    edge_max: f64,
    tau: f64,
) -> Result<bool> {
    let chart = Arc::new(Chart::from_text(chart_text, &cfg.model)?);
    let atlas = grow_atlas(cfg, &chart, n_gen, edge_max, tau)?;
    rec.write("local.obj", &atlas.local.to_obj())?;
    rec.write("gen_000.obj", &atlas.annulus.to_obj())?;
    let mut all = vec![atlas.annulus.clone()];
    let mut stats = Vec::new();
    for m in &atlas.advection.generations {
        rec.write(&format!("gen_{:03}.obj", m.generation), &m.to_obj())?;
        stats.push(serde_json::json!({
            "generation": m.generation,
            "vertices": m.vertices.len(),
            "triangles": m.triangles.len(),
            "euler": m.euler_characteristic(),
            "max_edge": m.max_edge(),
        }));
        all.push(m.clone());
    }
    rec.write("combined.obj", &combined_obj(&all))?;
    rec.scalar("generations_completed", atlas.advection.generations.len());
    rec.scalar("generations", stats);
    if let Some(e) = &atlas.advection.stopped {
        rec.scalar("stopped", e.to_string());
    }
    if atlas.is_partial() {
        rec.mark_partial();
    }
    Ok(false)
}

// -------------------------------------------------------------------- hetero

/// Atlases of `W^u(p0)` and `W^s(p1)` and their mesh intersections.
pub struct HeteroScan {
    pub params: ModelParams,
    pub chart_u: Arc<Chart>,
    pub chart_s: Arc<Chart>,
    pub unstable: GrownAtlas,
    pub stable: GrownAtlas,
    pub soup_u: Vec<AtlasTriangle>,
    pub soup_s: Vec<AtlasTriangle>,
    pub hits: Vec<MeshHit>,
}

pub fn hetero_scan(cfg: &ExperimentConfig, alpha: f64) -> Result<HeteroScan> {
    let params = cfg.with_alpha(alpha);
    let chart_u = Arc::new(build_chart(&params, "p0", Stability::Unstable, cfg.chart_order, cfg.eps0)?);
    let chart_s = Arc::new(build_chart(&params, "p1", Stability::Stable, cfg.chart_order, cfg.eps0)?);
    let unstable = grow_atlas(cfg, &chart_u, cfg.generations_u, cfg.edge_max, cfg.mesh_tau)?;
    let stable = grow_atlas(cfg, &chart_s, cfg.generations_s, cfg.edge_max, cfg.mesh_tau)?;
    let soup_u = triangle_soup(&unstable.meshes());
    let soup_s = triangle_soup(&stable.meshes());
    let hits = scan_mesh_intersections(&soup_u, &soup_s);
    Ok(HeteroScan {
        params,
        chart_u,
        chart_s,
        unstable,
        stable,
        soup_u,
        soup_s,
        hits,
    })
}

/// Newton solves from up to `attempts` hits spread evenly over the scan.
/// Solutions with the same exit angle are the same orbit (they differ only
/// in where along `W^s` the segment stops) and are dropped.
pub fn hetero_solve(cfg: &ExperimentConfig, scan: &HeteroScan) -> Vec<ConnectingOrbit> {
    let n = scan.hits.len();
    if n == 0 {
        return Vec::new();
    }
    let take = cfg.hetero_attempts.min(n);
    let picks: Vec<usize> = (0..take).map(|i| i * n / take).collect();
    let solved: Vec<Option<ConnectingOrbit>> = picks
        .par_iter()
        .map(|&i| {
            let g = guess_from_hit(
                &scan.hits[i],
                &scan.soup_u,
                &scan.soup_s,
                &scan.chart_u,
                cfg.mesh_tau,
                cfg.mesh_tau,
            )?;
            hetero_connect(&scan.chart_u, &scan.chart_s, g, &scan.params, cfg.tol).ok()
        })
        .collect();
    let mut out: Vec<ConnectingOrbit> = Vec::new();
    for o in solved.into_iter().flatten() {
        let same = |p: &ConnectingOrbit| {
            let d = (p.theta_u - o.theta_u).rem_euclid(std::f64::consts::TAU);
            d.min(std::f64::consts::TAU - d) < 1e-4
        };
        if !out.iter().any(same) {
            out.push(o);
        }
    }
    out
}

fn hits_csv(scan: &HeteroScan) -> String {
    let mut s = String::from("tri_u,tri_s,gen_u,gen_s,x,y,z\n");
    for h in &scan.hits {
        let _ = writeln!(
            s,
            "{},{},{},{},{:e},{:e},{:e}",
            h.tri_a,
            h.tri_b,
            scan.soup_u[h.tri_a].generation,
            scan.soup_s[h.tri_b].generation,
            h.point[0],
            h.point[1],
            h.point[2]
        );
    }
    s
}

fn orbit_row(s: &mut String, o: &ConnectingOrbit) {
    let _ = writeln!(
        s,
        "{:e},{:e},{:e},{:e},{:e}",
        o.theta_u, o.sigma_s[0], o.sigma_s[1], o.t, o.residual
    );
}

pub fn cmd_hetero(cfg: &ExperimentConfig, rec: &mut RunRecorder, alpha: f64, solve: bool) -> Result<bool> {
    let scan = hetero_scan(cfg, alpha)?;
    rec.write("chart_p0_unstable.txt", &scan.chart_u.to_text())?;
    rec.write("chart_p1_stable.txt", &scan.chart_s.to_text())?;
    rec.write("hits.csv", &hits_csv(&scan))?;
    rec.scalar("hits", scan.hits.len());
    rec.scalar("generations_u", scan.unstable.advection.generations.len());
    rec.scalar("generations_s", scan.stable.advection.generations.len());
    for (side, a) in [("u", &scan.unstable), ("s", &scan.stable)] {
        if let Some(e) = &a.advection.stopped {
            rec.scalar(&format!("stopped_{side}"), e.to_string());
        }
    }
    if !solve {
        return Ok(scan.hits.is_empty());
    }
    let orbits = hetero_solve(cfg, &scan);
    let mut table = String::from("theta_u,sigma1,sigma2,T,residual\n");
    for (i, o) in orbits.iter().enumerate() {
        orbit_row(&mut table, o);
        rec.write(&format!("connection_{i}.csv"), &o.to_csv())?;
    }
    rec.write("connections.csv", &table)?;
    rec.scalar("connections", orbits.len());
    rec.scalar(
        "max_residual",
        orbits.iter().map(|o| o.residual).fold(0.0, f64::max),
    );
    if let Some(first) = orbits.first() {
        let branch = continue_connection(
            &scan.chart_u,
            &scan.chart_s,
            first,
            cfg.continuation_step,
            cfg.continuation_steps,
            &scan.params,
            cfg.tol,
        );
        let mut cont = String::from("theta_u,sigma1,sigma2,T,residual\n");
        orbit_row(&mut cont, first);
        for o in &branch {
            orbit_row(&mut cont, o);
        }
        rec.write("continuation.csv", &cont)?;
        rec.scalar("continuation_points", branch.len() + 1);
    }
    Ok(orbits.is_empty())
}

// --------------------------------------------------------------------- repro

/// Fate of a grid of section points after `n_iter` returns: attracting
/// cycles reached, and how many orbits stopped returning to the section.
#[derive(Debug, Clone, Serialize)]
pub struct Census {
    pub alpha: f64,
    pub attractors: Vec<String>,
    pub left_section: usize,
    pub samples: usize,
}

pub fn attractor_census(cfg: &ExperimentConfig, alpha: f64, n: usize, n_iter: usize) -> Census {
    let params = cfg.with_alpha(alpha);
    let (lo, hi) = cfg.scan_box();
    let grid: Vec<SectionPoint> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            let fy = (i as f64 + 0.5) / n as f64;
            let fz = (j as f64 + 0.5) / n as f64;
            SectionPoint::new(lo.y + fy * (hi.y - lo.y), lo.z + fz * (hi.z - lo.z))
        })
        .collect();
    let finals: Vec<Option<SectionPoint>> = grid
        .par_iter()
        .map(|&q| {
            let mut cur = q;
            for _ in 0..n_iter {
                cur = return_once(cur, &params, cfg.section_tol, TimeDirection::Forward).ok()?;
            }
            Some(cur)
        })
        .collect();
    let left_section = finals.iter().filter(|f| f.is_none()).count();
    let mut labels: Vec<String> = Vec::new();
    for q in finals.into_iter().flatten() {
        let label = (1..=12)
            .find_map(|k| {
                let c = newton_cycle(q, &params, k, cfg.section_tol).ok()?;
                (c.tag.is_attracting() && c.period_collapse.is_none() && c.distance_to(&q) < 1e-3)
                    .then(|| format!("{k}-cycle"))
            })
            .unwrap_or_else(|| "invariant circle or chaotic set".to_string());
        if !labels.contains(&label) {
            labels.push(label);
        }
    }
    labels.sort();
    Census {
        alpha,
        attractors: labels,
        left_section,
        samples: n * n,
    }
}

/// Full pipeline: fold, Neimark-Sacker, the two section brackets and the
/// heteroclinic regime, with a summary table and attractor census.
pub fn cmd_repro(cfg: &ExperimentConfig, rec: &mut RunRecorder) -> Result<bool> {
    let mut md = String::from("| value | located | method |\n|---|---|---|\n");

    let fold = bisect_fold(&cfg.model, 0.9, 0.96);
    let _ = writeln!(
        md,
        "| alpha_4 (saddle-node of p1, p2) | {fold:.13} (closed form {:.13}) | root-count bisection |",
        saddle_node_alpha(cfg.model.tau)
    );
    rec.scalar("alpha_4", fold);

    let ns = locate_neimark_sacker(FIXED_POINT_SEED, 0.69, &cfg.model, cfg.tol)?;
    let _ = writeln!(
        md,
        "| alpha_1 (Neimark-Sacker of the periodic orbit) | {:.12} | augmented Newton, residual {:.1e} |",
        ns.alpha, ns.residual
    );
    rec.scalar("alpha_1", ns.alpha);

    for (label, key, alphas) in [
        ("alpha_2 (resonance, W^u/W^s of the saddle 3-cycle)", "alpha_2_bracket", [0.8224, 0.8225]),
        ("alpha_3 (tangency, W^u/W^s of the saddle 3-cycle)", "alpha_3_bracket", [0.92, 0.93]),
    ] {
        let counts = alphas
            .iter()
            .map(|&a| crossings_at(cfg, a, 3))
            .collect::<Result<Vec<_>>>()?;
        let _ = writeln!(
            md,
            "| {label} | crossings {} at {}, {} at {} | manifold crossing count |",
            counts[0], alphas[0], counts[1], alphas[1]
        );
        rec.scalar(key, serde_json::json!({ "alphas": alphas, "crossings": counts }));
    }

    let before = hetero_scan(cfg, 0.95)?;
    let after = hetero_scan(cfg, 1.1022)?;
    let orbits = hetero_solve(cfg, &after);
    let _ = writeln!(
        md,
        "| alpha_5 (tangency of W^u(p0) and W^s(p1)) | mesh hits {} at 0.95, {} at 1.1022; {} connections solved | atlas intersection + Newton |",
        before.hits.len(),
        after.hits.len(),
        orbits.len()
    );
    rec.scalar("alpha_5_hits", [before.hits.len(), after.hits.len()]);
    rec.scalar("alpha_5_connections", orbits.len());

    let census: Vec<Census> = [0.6, 0.75, 0.85, 0.95, 1.1]
        .iter()
        .map(|&a| attractor_census(cfg, a, 4, 300))
        .collect();
    md.push_str("\nAttractor census on the section (supporting evidence only; the conjectured global picture is not verified):\n\n");
    md.push_str("| alpha | attractors reached | orbits leaving the section |\n|---|---|---|\n");
    for c in &census {
        let _ = writeln!(
            md,
            "| {} | {} | {}/{} |",
            c.alpha,
            if c.attractors.is_empty() { "none on the section".to_string() } else { c.attractors.join(", ") },
            c.left_section,
            c.samples
        );
    }
    rec.write("summary.md", &md)?;
    rec.write("census.json", &to_json(&census))?;
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_parsing() {
        let r = parse_range("0.9:0.96:0.001").unwrap();
        assert_eq!(range_points(r).len(), 61);
        assert!(parse_range("1:0:0.1").is_err());
        assert!(parse_range("a:b").is_err());
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            exit_code(&Error::Config("x".into())),
            exit_code(&Error::NotSaddle),
            exit_code(&Error::Io("x".into())),
            EXIT_NEGATIVE,
            EXIT_OK,
        ];
        for i in 0..codes.len() {
            for j in 0..i {
                assert_ne!(codes[i], codes[j]);
            }
        }
    }

    #[test]
    fn equilibria_rows_cross_the_fold() {
        let base = ModelParams::default();
        let csv = equilibria_csv(&base, &[0.5, 0.95]);
        assert_eq!(csv.lines().count(), 1 + 1 + 3);
        let alphas = range_points([0.9, 0.96, 0.001]);
        let (bracket, fold) = locate_fold(&base, &alphas).unwrap();
        assert!(bracket[0] < fold && fold <= bracket[1]);
        assert!((fold - saddle_node_alpha(base.tau)).abs() < 1e-10);
    }

    #[test]
    fn sign_change() {
        let p = |alpha, crossings_count| BracketPoint { alpha, crossings_count };
        assert_eq!(first_sign_change(&[p(0.1, 0), p(0.2, 0), p(0.3, 4)]), Some([0.2, 0.3]));
        assert_eq!(first_sign_change(&[p(0.1, 3), p(0.2, 0)]), None);
    }
}

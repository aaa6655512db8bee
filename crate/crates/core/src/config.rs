//! Layered run configuration.
//!
//! A config file is a sequence of `[section]` headers followed by
//! `key = value` lines; `#` starts a comment. Keys are addressed as
//! `section.key`, both in files and in command-line overrides. Layers are
//! applied in order (defaults, file, overrides) and the result is checked
//! against the documented ranges before anything runs.
//!
//! ```text
//! [model]      alpha epsilon tau delta beta zeta
//! [integrator] tol
//! [section]    tol
//! [chart]      order eps0 conj_samples conj_time
//! [mesh]       disk_radial disk_angular annulus_radial annulus_angular
//!              tau edge_max tol generations_u generations_s
//! [manifold]   h max_spacing arclength max_iterates
//! [scan]       y_lo z_lo y_hi z_hi grid
//! [sweep]      alpha_lo alpha_hi alpha_step
//! [hetero]     attempts continuation_step continuation_steps
//! [run]        workers
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::poincare::{ManifoldOptions, SectionPoint};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    pub tol: f64,
    pub section_tol: f64,
    pub chart_order: usize,
    pub eps0: f64,
    pub conj_samples: usize,
    pub conj_time: f64,
    pub disk_radial: usize,
    pub disk_angular: usize,
    pub annulus_radial: usize,
    pub annulus_angular: usize,
    pub mesh_tau: f64,
    pub edge_max: f64,
    pub mesh_tol: f64,
    pub generations_u: usize,
    pub generations_s: usize,
    pub manifold_h: f64,
    pub manifold_spacing: f64,
    pub manifold_arclength: f64,
    pub manifold_iterates: usize,
    pub scan_lo: [f64; 2],
    pub scan_hi: [f64; 2],
    pub scan_grid: usize,
    pub sweep: [f64; 3],
    pub hetero_attempts: usize,
    pub continuation_step: f64,
    pub continuation_steps: usize,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelParams::default(),
            tol: 1e-12,
            section_tol: 1e-11,
            chart_order: 20,
            eps0: 1e-12,
            conj_samples: 32,
            conj_time: 1.0,
            disk_radial: 15,
            disk_angular: 30,
            annulus_radial: 10,
            annulus_angular: 50,
            mesh_tau: 0.25,
            edge_max: 0.05,
            mesh_tol: 1e-10,
            generations_u: 10,
            generations_s: 10,
            manifold_h: 1e-5,
            manifold_spacing: 5e-3,
            manifold_arclength: 6.0,
            manifold_iterates: 400,
            scan_lo: [0.2, -0.3],
            scan_hi: [1.6, 1.4],
            scan_grid: 30,
            sweep: [0.9, 0.96, 0.001],
            hetero_attempts: 20,
            continuation_step: 0.05,
            continuation_steps: 10,
            workers: 1,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: '{v}' is not a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: '{v}' is not a non-negative integer")))
}

fn check(key: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(Error::Config(format!("{key} = {v} outside [{lo}, {hi}]")))
    }
}

impl ExperimentConfig {
    /// Sets one `section.key` entry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let f = |k| parse_f64(k, v);
        let u = |k| parse_usize(k, v);
        match key {
            "model.alpha" => self.model.alpha = f(key)?,
            "model.epsilon" => self.model.epsilon = f(key)?,
            "model.tau" => self.model.tau = f(key)?,
            "model.delta" => self.model.delta = f(key)?,
            "model.beta" => self.model.beta = f(key)?,
            "model.zeta" => self.model.zeta = f(key)?,
            "integrator.tol" => self.tol = f(key)?,
            "section.tol" => self.section_tol = f(key)?,
            "chart.order" => self.chart_order = u(key)?,
            "chart.eps0" => self.eps0 = f(key)?,
            "chart.conj_samples" => self.conj_samples = u(key)?,
            "chart.conj_time" => self.conj_time = f(key)?,
            "mesh.disk_radial" => self.disk_radial = u(key)?,
            "mesh.disk_angular" => self.disk_angular = u(key)?,
            "mesh.annulus_radial" => self.annulus_radial = u(key)?,
            "mesh.annulus_angular" => self.annulus_angular = u(key)?,
            "mesh.tau" => self.mesh_tau = f(key)?,
            "mesh.edge_max" => self.edge_max = f(key)?,
            "mesh.tol" => self.mesh_tol = f(key)?,
            "mesh.generations_u" => self.generations_u = u(key)?,
            "mesh.generations_s" => self.generations_s = u(key)?,
            "manifold.h" => self.manifold_h = f(key)?,
            "manifold.max_spacing" => self.manifold_spacing = f(key)?,
            "manifold.arclength" => self.manifold_arclength = f(key)?,
            "manifold.max_iterates" => self.manifold_iterates = u(key)?,
            "scan.y_lo" => self.scan_lo[0] = f(key)?,
            "scan.z_lo" => self.scan_lo[1] = f(key)?,
            "scan.y_hi" => self.scan_hi[0] = f(key)?,
            "scan.z_hi" => self.scan_hi[1] = f(key)?,
            "scan.grid" => self.scan_grid = u(key)?,
            "sweep.alpha_lo" => self.sweep[0] = f(key)?,
            "sweep.alpha_hi" => self.sweep[1] = f(key)?,
            "sweep.alpha_step" => self.sweep[2] = f(key)?,
            "hetero.attempts" => self.hetero_attempts = u(key)?,
            "hetero.continuation_step" => self.continuation_step = f(key)?,
            "hetero.continuation_steps" => self.continuation_steps = u(key)?,
            "run.workers" => self.workers = u(key)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a config file's entries on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected key = value", lineno + 1)));
            };
            if section.is_empty() {
                return Err(Error::Config(format!("line {}: key outside a section", lineno + 1)));
            }
            self.set(&format!("{section}.{}", k.trim()), v)?;
        }
        Ok(())
    }

    /// Applies `section.key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{o}' is not key=value")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Defaults, then `file` if given, then `overrides`; validated.
    pub fn load<S: AsRef<str>>(file: Option<&Path>, overrides: &[S]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        cfg.apply_overrides(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        check("model.alpha", m.alpha, -10.0, 10.0)?;
        check("model.epsilon", m.epsilon, 0.0, 10.0)?;
        check("model.tau", m.tau, 1e-6, 10.0)?;
        check("model.delta", m.delta, 1e-6, 100.0)?;
        check("model.beta", m.beta, -10.0, 10.0)?;
        check("model.zeta", m.zeta, -10.0, 10.0)?;
        check("integrator.tol", self.tol, 1e-14, 1e-3)?;
        check("section.tol", self.section_tol, 1e-14, 1e-3)?;
        check("chart.order", self.chart_order as f64, 1.0, 60.0)?;
        check("chart.eps0", self.eps0, 1e-16, 1e-2)?;
        check("chart.conj_samples", self.conj_samples as f64, 8.0, 4096.0)?;
        check("chart.conj_time", self.conj_time, 1e-3, 10.0)?;
        check("mesh.disk_radial", self.disk_radial as f64, 1.0, 1000.0)?;
        check("mesh.disk_angular", self.disk_angular as f64, 3.0, 10000.0)?;
        check("mesh.annulus_radial", self.annulus_radial as f64, 1.0, 1000.0)?;
        check("mesh.annulus_angular", self.annulus_angular as f64, 3.0, 10000.0)?;
        check("mesh.tau", self.mesh_tau, 1e-3, 10.0)?;
        check("mesh.edge_max", self.edge_max, 1e-4, 10.0)?;
        check("mesh.tol", self.mesh_tol, 1e-14, 1e-3)?;
        check("mesh.generations_u", self.generations_u as f64, 0.0, 1000.0)?;
        check("mesh.generations_s", self.generations_s as f64, 0.0, 1000.0)?;
        check("manifold.h", self.manifold_h, 1e-12, 1e-1)?;
        check("manifold.max_spacing", self.manifold_spacing, 1e-6, 1.0)?;
        check("manifold.arclength", self.manifold_arclength, 1e-3, 1000.0)?;
        check("manifold.max_iterates", self.manifold_iterates as f64, 1.0, 1e6)?;
        check("scan.y_lo", self.scan_lo[0], 0.0, 100.0)?;
        check("scan.y_hi", self.scan_hi[0], self.scan_lo[0], 100.0)?;
        check("scan.z_hi", self.scan_hi[1], self.scan_lo[1], 100.0)?;
        check("scan.grid", self.scan_grid as f64, 3.0, 2000.0)?;
        check("sweep.alpha_step", self.sweep[2], 1e-9, 10.0)?;
        check("sweep.alpha_hi", self.sweep[1], self.sweep[0], 10.0)?;
        check("hetero.attempts", self.hetero_attempts as f64, 1.0, 1e6)?;
        check("hetero.continuation_step", self.continuation_step.abs(), 1e-6, 1.0)?;
        check("run.workers", self.workers as f64, 1.0, 1024.0)?;
        if self.scan_lo[0] == self.scan_hi[0] || self.scan_lo[1] == self.scan_hi[1] {
            return Err(Error::Config("scan box is degenerate".into()));
        }
        Ok(())
    }

    /// Snapshot in the file format; loading it reproduces `self`.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let mut s = String::new();
        let _ = writeln!(s, "[model]");
        let _ = writeln!(s, "alpha = {:?}", m.alpha);
        let _ = writeln!(s, "epsilon = {:?}", m.epsilon);
        let _ = writeln!(s, "tau = {:?}", m.tau);
        let _ = writeln!(s, "delta = {:?}", m.delta);
        let _ = writeln!(s, "beta = {:?}", m.beta);
        let _ = writeln!(s, "zeta = {:?}", m.zeta);
        let _ = writeln!(s, "[integrator]\ntol = {:?}", self.tol);
        let _ = writeln!(s, "[section]\ntol = {:?}", self.section_tol);
        let _ = writeln!(s, "[chart]");
        let _ = writeln!(s, "order = {}", self.chart_order);
        let _ = writeln!(s, "eps0 = {:?}", self.eps0);
        let _ = writeln!(s, "conj_samples = {}", self.conj_samples);
        let _ = writeln!(s, "conj_time = {:?}", self.conj_time);
        let _ = writeln!(s, "[mesh]");
        let _ = writeln!(s, "disk_radial = {}", self.disk_radial);
        let _ = writeln!(s, "disk_angular = {}", self.disk_angular);
        let _ = writeln!(s, "annulus_radial = {}", self.annulus_radial);
        let _ = writeln!(s, "annulus_angular = {}", self.annulus_angular);
        let _ = writeln!(s, "tau = {:?}", self.mesh_tau);
        let _ = writeln!(s, "edge_max = {:?}", self.edge_max);
        let _ = writeln!(s, "tol = {:?}", self.mesh_tol);
        let _ = writeln!(s, "generations_u = {}", self.generations_u);
        let _ = writeln!(s, "generations_s = {}", self.generations_s);
        let _ = writeln!(s, "[manifold]");
        let _ = writeln!(s, "h = {:?}", self.manifold_h);
        let _ = writeln!(s, "max_spacing = {:?}", self.manifold_spacing);
        let _ = writeln!(s, "arclength = {:?}", self.manifold_arclength);
        let _ = writeln!(s, "max_iterates = {}", self.manifold_iterates);
        let _ = writeln!(s, "[scan]");
        let _ = writeln!(s, "y_lo = {:?}\nz_lo = {:?}", self.scan_lo[0], self.scan_lo[1]);
        let _ = writeln!(s, "y_hi = {:?}\nz_hi = {:?}", self.scan_hi[0], self.scan_hi[1]);
        let _ = writeln!(s, "grid = {}", self.scan_grid);
        let _ = writeln!(s, "[sweep]");
        let _ = writeln!(s, "alpha_lo = {:?}", self.sweep[0]);
        let _ = writeln!(s, "alpha_hi = {:?}", self.sweep[1]);
        let _ = writeln!(s, "alpha_step = {:?}", self.sweep[2]);
        let _ = writeln!(s, "[hetero]");
        let _ = writeln!(s, "attempts = {}", self.hetero_attempts);
        let _ = writeln!(s, "continuation_step = {:?}", self.continuation_step);
        let _ = writeln!(s, "continuation_steps = {}", self.continuation_steps);
        let _ = writeln!(s, "[run]\nworkers = {}", self.workers);
        s
    }

    pub fn with_alpha(&self, alpha: f64) -> ModelParams {
        ModelParams { alpha, ..self.model }
    }

    pub fn manifold_options(&self) -> ManifoldOptions {
        ManifoldOptions {
            h: self.manifold_h,
            max_spacing: self.manifold_spacing,
            arclength_max: self.manifold_arclength,
            max_iterates: self.manifold_iterates,
            tol: self.section_tol,
            ..ManifoldOptions::default()
        }
    }

    pub fn scan_box(&self) -> (SectionPoint, SectionPoint) {
        (
            SectionPoint::new(self.scan_lo[0], self.scan_lo[1]),
            SectionPoint::new(self.scan_hi[0], self.scan_hi[1]),
        )
    }
}
